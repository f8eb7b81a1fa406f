//! Least-squares fitting of scoring functions.
//!
//! [`fit_linear`] is the numerical core; [`fit_assumption`] builds a
//! [`ScoringFunction`] from training samples under one of the assumption
//! regimes (content only, all factors, self-weighted combination, or
//! piecewise by interest).

mod linear;
mod selection;

pub use linear::{fit_linear, rmse, LinearFit};
pub use selection::{aic, eliminate_attributes, Selection};

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{EventId, Interval, UserId};
use crate::scoring::{Attribute, AttributeSource, FactorVector, LinearForm, Piecewise, ScoringFunction};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RegressionError {
    #[error("the normal equations are numerically singular")]
    SingularSystem,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("need at least {needed} rows, got {rows}")]
    TooFewRows { rows: usize, needed: usize },
    #[error("input is empty")]
    EmptyInput,
    #[error("ridge must be finite and non-negative, got {0}")]
    InvalidRidge(f64),
    #[error("attribute elimination needs at least two attributes, got {0}")]
    TooFewAttributes(usize),
    #[error("piece {piece} has {samples} samples, needs at least {needed}")]
    InsufficientSamples {
        piece: usize,
        samples: usize,
        needed: usize,
    },
    #[error("sample {user}/{event} lacks `{what}` required by regime {regime}")]
    MissingInput {
        user: UserId,
        event: EventId,
        what: &'static str,
        regime: Regime,
    },
    #[error("invalid thresholds {0:?}: must be strictly ascending and inside the score scale")]
    InvalidThresholds(Vec<f64>),
}

/// One observed (user, event) pair with its computed attributes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub user_id: UserId,
    pub event_id: EventId,
    pub factors: FactorVector,
    pub u_abs: Option<f64>,
    pub u_rel: Option<f64>,
    /// Score given when only content information was shown.
    pub score_init: Option<f64>,
    /// Score given with full information.
    pub score_fin: f64,
}

impl AttributeSource for Sample {
    fn attribute(&self, a: Attribute) -> Option<f64> {
        match a {
            Attribute::UAbs => self.u_abs,
            Attribute::URel => self.u_rel,
            _ => self.factors.attribute(a),
        }
    }
}

/// Which score a regime learns to predict.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Init,
    Fin,
}

impl Target {
    pub fn of(self, s: &Sample) -> Option<f64> {
        match self {
            Target::Init => s.score_init,
            Target::Fin => Some(s.score_fin),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    #[serde(rename = "ia0_init")]
    Ia0Init,
    #[serde(rename = "ia0_fin")]
    Ia0Fin,
    IaX,
    IaXuAbs,
    IaXuRel,
    IaXdThi,
    IaXdTyi,
}

impl Regime {
    pub const ALL: [Regime; 7] = [
        Regime::Ia0Init,
        Regime::Ia0Fin,
        Regime::IaX,
        Regime::IaXuAbs,
        Regime::IaXuRel,
        Regime::IaXdThi,
        Regime::IaXdTyi,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Regime::Ia0Init => "ia0_init",
            Regime::Ia0Fin => "ia0_fin",
            Regime::IaX => "ia_x",
            Regime::IaXuAbs => "ia_xu_abs",
            Regime::IaXuRel => "ia_xu_rel",
            Regime::IaXdThi => "ia_xd_thi",
            Regime::IaXdTyi => "ia_xd_tyi",
        }
    }

    pub fn attributes(self) -> Vec<Attribute> {
        use Attribute::*;
        match self {
            Regime::Ia0Init | Regime::Ia0Fin => vec![Thi, Tyi],
            Regime::IaX | Regime::IaXdThi | Regime::IaXdTyi => Attribute::FACTORS.to_vec(),
            Regime::IaXuAbs => vec![Thi, Tyi, UAbs],
            Regime::IaXuRel => vec![Thi, Tyi, URel],
        }
    }

    pub fn target(self) -> Target {
        match self {
            Regime::Ia0Init => Target::Init,
            _ => Target::Fin,
        }
    }

    /// Attribute the samples are partitioned on, for piecewise regimes.
    pub fn split(self) -> Option<Attribute> {
        match self {
            Regime::IaXdThi => Some(Attribute::Thi),
            Regime::IaXdTyi => Some(Attribute::Tyi),
            _ => None,
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown regime `{0}`; valid regimes: ia0_init, ia0_fin, ia_x, ia_xu_abs, ia_xu_rel, ia_xd_thi, ia_xd_tyi")]
pub struct UnknownRegime(pub String);

impl FromStr for Regime {
    type Err = UnknownRegime;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Regime::ALL
            .into_iter()
            .find(|r| r.name() == s.trim())
            .ok_or_else(|| UnknownRegime(s.to_owned()))
    }
}

pub const DEFAULT_RIDGE: f64 = 1.0e-8;
pub const DEFAULT_THRESHOLDS: [f64; 2] = [6.0, 8.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionSpec {
    pub regime: Regime,
    /// Piece boundaries for the piecewise regimes; ignored otherwise.
    pub thresholds: Vec<f64>,
    pub ridge: f64,
    /// Backward attribute elimination on every (piece) fit.
    pub attribute_selection: bool,
}

impl AssumptionSpec {
    pub fn new(regime: Regime) -> Self {
        Self {
            regime,
            thresholds: DEFAULT_THRESHOLDS.to_vec(),
            ridge: DEFAULT_RIDGE,
            attribute_selection: false,
        }
    }

    pub fn validate(&self, score: &Interval) -> Result<(), RegressionError> {
        if !(self.ridge.is_finite() && self.ridge >= 0.0) {
            return Err(RegressionError::InvalidRidge(self.ridge));
        }
        let ascending = self.thresholds.windows(2).all(|w| w[0] < w[1]);
        let inside = self
            .thresholds
            .iter()
            .all(|&t| t > score.lb() && t < score.ub());
        if !(ascending && inside) {
            return Err(RegressionError::InvalidThresholds(self.thresholds.clone()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub function: ScoringFunction,
    pub training_rmse: f64,
    pub n_samples: usize,
    /// Attributes removed by attribute selection, in any piece.
    pub dropped_attributes: BTreeSet<Attribute>,
}

/// Design matrix and target vector for `attrs`.
pub fn design(
    samples: &[Sample],
    attrs: &[Attribute],
    regime: Regime,
) -> Result<(Vec<Vec<f64>>, Vec<f64>), RegressionError> {
    let target = regime.target();
    let mut x = Vec::with_capacity(samples.len());
    let mut y = Vec::with_capacity(samples.len());
    for s in samples {
        let missing = |what| RegressionError::MissingInput {
            user: s.user_id.clone(),
            event: s.event_id.clone(),
            what,
            regime,
        };
        let row = attrs
            .iter()
            .map(|&a| s.attribute(a).ok_or_else(|| missing(a.name())))
            .collect::<Result<Vec<_>, _>>()?;
        x.push(row);
        y.push(target.of(s).ok_or_else(|| missing("score_init"))?);
    }
    Ok((x, y))
}

fn fit_form(
    samples: &[Sample],
    spec: &AssumptionSpec,
    piece: usize,
) -> Result<(LinearForm, BTreeSet<Attribute>), RegressionError> {
    let attrs = spec.regime.attributes();
    let needed = attrs.len() + 2;
    if samples.len() < needed {
        return Err(RegressionError::InsufficientSamples {
            piece,
            samples: samples.len(),
            needed,
        });
    }
    let (x, y) = design(samples, &attrs, spec.regime)?;
    let (kept, fit) = if spec.attribute_selection {
        let sel = eliminate_attributes(&x, &y, spec.ridge)?;
        (sel.kept, sel.fit)
    } else {
        ((0..attrs.len()).collect(), fit_linear(&x, &y, spec.ridge)?)
    };
    let form = LinearForm::new(
        fit.intercept,
        kept.iter().zip(&fit.coefficients).map(|(&c, &w)| (attrs[c], w)),
    );
    let dropped = attrs
        .iter()
        .enumerate()
        .filter(|(i, _)| !kept.contains(i))
        .map(|(_, &a)| a)
        .collect();
    Ok((form, dropped))
}

/// Samples routed to each piece of a piecewise regime.
pub fn partition(samples: &[Sample], split: Attribute, thresholds: &[f64]) -> Vec<Vec<Sample>> {
    let mut parts: Vec<Vec<Sample>> = vec![Vec::new(); thresholds.len() + 1];
    for s in samples {
        let v = s.attribute(split).unwrap_or(f64::NAN);
        parts[Piecewise::piece_index(thresholds, v)].push(s.clone());
    }
    parts
}

/// Fits every piece of a piecewise regime independently; non-piecewise
/// regimes yield a single entry.
pub fn fit_branches(
    samples: &[Sample],
    spec: &AssumptionSpec,
) -> Vec<Result<(LinearForm, BTreeSet<Attribute>), RegressionError>> {
    match spec.regime.split() {
        None => vec![fit_form(samples, spec, 0)],
        Some(split) => partition(samples, split, &spec.thresholds)
            .iter()
            .enumerate()
            .map(|(i, part)| fit_form(part, spec, i))
            .collect(),
    }
}

/// Learns a scoring function from `samples` under `spec`.
pub fn fit_assumption(samples: &[Sample], spec: &AssumptionSpec) -> Result<FitResult, RegressionError> {
    if spec.regime.split().is_some() && !spec.thresholds.windows(2).all(|w| w[0] < w[1]) {
        return Err(RegressionError::InvalidThresholds(spec.thresholds.clone()));
    }
    let mut forms = Vec::new();
    let mut dropped = BTreeSet::new();
    for branch in fit_branches(samples, spec) {
        let (form, d) = branch?;
        forms.push(form);
        dropped.extend(d);
    }
    let function = match spec.regime.split() {
        None => ScoringFunction::Linear(forms.pop().expect("one form")),
        Some(split) => ScoringFunction::Piecewise(Piecewise {
            split,
            thresholds: spec.thresholds.clone(),
            pieces: forms,
        }),
    };
    let training_rmse = evaluate_rmse(&function, samples, spec.regime)?;
    Ok(FitResult {
        function,
        training_rmse,
        n_samples: samples.len(),
        dropped_attributes: dropped,
    })
}

/// RMSE of `function` on `samples`, against the regime's target score.
pub fn evaluate_rmse(
    function: &ScoringFunction,
    samples: &[Sample],
    regime: Regime,
) -> Result<f64, RegressionError> {
    let target = regime.target();
    let mut predicted = Vec::with_capacity(samples.len());
    let mut observed = Vec::with_capacity(samples.len());
    for s in samples {
        let missing = |what| RegressionError::MissingInput {
            user: s.user_id.clone(),
            event: s.event_id.clone(),
            what,
            regime,
        };
        let p = function.score(s).map_err(|e| match e {
            crate::scoring::ScoringError::MissingAttribute { attribute } => missing(attribute.name()),
            _ => missing("attribute"),
        })?;
        predicted.push(p);
        observed.push(target.of(s).ok_or_else(|| missing("score_init"))?);
    }
    rmse(&predicted, &observed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sample(i: usize, fv: FactorVector, fin: f64) -> Sample {
        Sample {
            user_id: UserId::new(format!("u{i}")),
            event_id: EventId::new("e"),
            factors: fv,
            u_abs: None,
            u_rel: None,
            score_init: None,
            score_fin: fin,
        }
    }

    fn random_vectors(n: usize, seed: u64) -> Vec<FactorVector> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| FactorVector {
                thi: rng.random_range(0.0..10.0),
                tyi: rng.random_range(0.0..10.0),
                rat: rng.random_range(0.0..10.0),
                rch: rng.random_range(0.0..10.0),
                frn: rng.random_range(0.0..11.0),
            })
            .collect()
    }

    #[test]
    fn ia0_exact_recovery() {
        let samples: Vec<Sample> = random_vectors(60, 1)
            .into_iter()
            .enumerate()
            .map(|(i, fv)| sample(i, fv, 0.6 * fv.thi + 0.33 * fv.tyi - 0.25))
            .collect();
        let mut spec = AssumptionSpec::new(Regime::Ia0Fin);
        spec.ridge = 0.0;
        let fit = fit_assumption(&samples, &spec).unwrap();
        let ScoringFunction::Linear(f) = &fit.function else { panic!() };
        assert_abs_diff_eq!(f.coefficient(Attribute::Thi).unwrap(), 0.6, epsilon = 1e-9);
        assert_abs_diff_eq!(f.coefficient(Attribute::Tyi).unwrap(), 0.33, epsilon = 1e-9);
        assert_abs_diff_eq!(f.intercept, -0.25, epsilon = 1e-9);
        assert_eq!(f.coefficients.len(), 2);
        assert!(fit.training_rmse < 1e-9);
        assert_eq!(fit.n_samples, 60);
    }

    #[test]
    fn ia0_init_requires_initial_scores() {
        let samples: Vec<Sample> = random_vectors(10, 2)
            .into_iter()
            .enumerate()
            .map(|(i, fv)| sample(i, fv, 1.0))
            .collect();
        assert!(matches!(
            fit_assumption(&samples, &AssumptionSpec::new(Regime::Ia0Init)),
            Err(RegressionError::MissingInput { what: "score_init", .. })
        ));
        assert!(matches!(
            fit_assumption(&samples, &AssumptionSpec::new(Regime::IaXuAbs)),
            Err(RegressionError::MissingInput { what: "u_abs", .. })
        ));
    }

    #[test]
    fn piecewise_partition_and_floor() {
        let samples: Vec<Sample> = random_vectors(40, 3)
            .into_iter()
            .enumerate()
            .map(|(i, fv)| {
                let fv = FactorVector { thi: 7.0, ..fv };
                sample(i, fv, fv.tyi + fv.rat)
            })
            .collect();
        let spec = AssumptionSpec::new(Regime::IaXdThi);
        let branches = fit_branches(&samples, &spec);
        assert!(matches!(
            branches[0],
            Err(RegressionError::InsufficientSamples { piece: 0, samples: 0, needed: 7 })
        ));
        assert!(branches[1].is_ok());
        assert!(matches!(
            branches[2],
            Err(RegressionError::InsufficientSamples { piece: 2, .. })
        ));
        assert!(matches!(
            fit_assumption(&samples, &spec),
            Err(RegressionError::InsufficientSamples { .. })
        ));
    }

    #[test]
    fn piece_routing_at_thresholds() {
        let mk = |thi| sample(0, FactorVector { thi, tyi: 0.0, rat: 0.0, rch: 0.0, frn: 0.0 }, 0.0);
        let parts = partition(&[mk(5.999), mk(6.0), mk(8.0), mk(10.0)], Attribute::Thi, &[6.0, 8.0]);
        let sizes: Vec<usize> = parts.iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![1, 1, 2]);
        assert_eq!(parts[0][0].factors.thi, 5.999);
        assert_eq!(parts[1][0].factors.thi, 6.0);
        assert_eq!(parts[2][0].factors.thi, 8.0);
    }

    #[test]
    fn piecewise_equals_independent_fits() {
        let samples: Vec<Sample> = random_vectors(300, 4)
            .into_iter()
            .enumerate()
            .map(|(i, fv)| sample(i, fv, 0.5 * fv.thi + 0.2 * fv.rch + (i % 7) as f64 * 0.1))
            .collect();
        let spec = AssumptionSpec::new(Regime::IaXdTyi);
        let fit = fit_assumption(&samples, &spec).unwrap();
        let ScoringFunction::Piecewise(p) = &fit.function else { panic!() };
        let parts = partition(&samples, Attribute::Tyi, &spec.thresholds);
        for (piece, part) in p.pieces.iter().zip(&parts) {
            let single = fit_assumption(part, &AssumptionSpec::new(Regime::IaX)).unwrap();
            assert_eq!(single.function, ScoringFunction::Linear(piece.clone()));
        }
    }

    #[test]
    fn selection_marks_dropped_attributes() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let samples: Vec<Sample> = random_vectors(1000, 5)
            .into_iter()
            .enumerate()
            .map(|(i, fv)| {
                let noise: f64 = rng.random_range(-0.5..0.5);
                sample(i, fv, 0.6 * fv.thi + 0.3 * fv.tyi + 0.2 * fv.rch + 0.1 * fv.frn + noise)
            })
            .collect();
        let spec = AssumptionSpec {
            attribute_selection: true,
            ..AssumptionSpec::new(Regime::IaX)
        };
        let fit = fit_assumption(&samples, &spec).unwrap();
        let ScoringFunction::Linear(f) = &fit.function else { panic!() };
        for a in Attribute::FACTORS {
            assert_eq!(fit.dropped_attributes.contains(&a), f.coefficient(a).is_none());
        }
        for a in [Attribute::Thi, Attribute::Tyi, Attribute::Rch, Attribute::Frn] {
            assert!(!fit.dropped_attributes.contains(&a));
        }
    }

    #[test]
    fn spec_validation() {
        let s = Interval::zero_to_ten();
        assert!(AssumptionSpec::new(Regime::IaXdThi).validate(&s).is_ok());
        let mut bad = AssumptionSpec::new(Regime::IaXdThi);
        bad.thresholds = vec![8.0, 6.0];
        assert!(bad.validate(&s).is_err());
        bad.thresholds = vec![0.0, 6.0];
        assert!(bad.validate(&s).is_err());
        bad.thresholds = vec![6.0];
        bad.ridge = -1.0;
        assert!(bad.validate(&s).is_err());
    }

    #[test]
    fn regime_names_round_trip() {
        for r in Regime::ALL {
            assert_eq!(r.name().parse::<Regime>().unwrap(), r);
            assert_eq!(serde_json::to_string(&r).unwrap(), format!("\"{}\"", r.name()));
        }
        assert!("ia_y".parse::<Regime>().is_err());
    }
}
