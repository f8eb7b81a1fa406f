//! Evaluation protocol: repeated seeded random splits of a training pool,
//! per-split fitting of every regime, validation and held-out test RMSE,
//! coefficient summaries and paired t-tests between regimes.

mod report;

pub use report::{
    CellError, CoefficientSummary, Comparison, ComparisonOutcome, ExperimentReport, PieceCoefficients,
    RmseRow, Series, REPORT_VERSION,
};

use std::fmt;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::UserId;
use crate::regression::{evaluate_rmse, fit_assumption, AssumptionSpec, RegressionError, Sample, Target};
use crate::scoring::ScoringFunction;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExperimentError {
    #[error("need at least 3 samples to split, got {0}")]
    TooFewSamples(usize),
    #[error("invalid split plan: {0}")]
    InvalidPlan(String),
}

/// A rational training fraction, kept exact so split sizes do not depend on
/// floating-point rounding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fraction {
    pub num: u64,
    pub den: u64,
}

impl Fraction {
    pub const TWO_THIRDS: Fraction = Fraction { num: 2, den: 3 };

    pub fn new(num: u64, den: u64) -> Result<Self, ExperimentError> {
        if den == 0 || num == 0 || num >= den {
            return Err(ExperimentError::InvalidPlan(format!(
                "train fraction {num}/{den} must lie strictly between 0 and 1"
            )));
        }
        Ok(Self { num, den })
    }

    /// `round(self · n)`, halves rounded up.
    pub fn of(self, n: usize) -> usize {
        let n = n as u64;
        ((2 * self.num * n + self.den) / (2 * self.den)) as usize
    }
}

impl fmt::Display for Fraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

impl std::str::FromStr for Fraction {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ExperimentError::InvalidPlan(format!("cannot parse fraction `{s}`"));
        let (n, d) = s.split_once('/').ok_or_else(bad)?;
        Fraction::new(
            n.trim().parse().map_err(|_| bad())?,
            d.trim().parse().map_err(|_| bad())?,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// Shuffle all sample rows together.
    Rows,
    /// Split each user's rows separately, so every user contributes the
    /// same fraction of rows to training.
    PerUser,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub seed: u64,
    pub n_splits: usize,
    pub train_fraction: Fraction,
    pub mode: SplitMode,
}

impl SplitPlan {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            n_splits: 15,
            train_fraction: Fraction::TWO_THIRDS,
            mode: SplitMode::Rows,
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.n_splits < 2 {
            return Err(ExperimentError::InvalidPlan("at least 2 splits are required".into()));
        }
        Fraction::new(self.train_fraction.num, self.train_fraction.den).map(|_| ())
    }
}

/// ChaCha8 stream for one split: the seed selects the key, the split index
/// selects the stream, so splits are independent and reproducible anywhere.
fn split_rng(seed: u64, split_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(split_index);
    rng
}

/// Uniform integer in `0..n` by rejection sampling.
fn bounded(rng: &mut ChaCha8Rng, n: u64) -> u64 {
    let zone = u64::MAX - (u64::MAX % n);
    loop {
        let v = rng.next_u64();
        if v < zone {
            return v % n;
        }
    }
}

fn shuffle<T>(rng: &mut ChaCha8Rng, xs: &mut [T]) {
    for i in (1..xs.len()).rev() {
        let j = bounded(rng, i as u64 + 1) as usize;
        xs.swap(i, j);
    }
}

/// Training and validation row indices, each sorted ascending.
pub fn split_indices(
    n: usize,
    seed: u64,
    split_index: u64,
    train_fraction: Fraction,
) -> Result<(Vec<usize>, Vec<usize>), ExperimentError> {
    if n < 3 {
        return Err(ExperimentError::TooFewSamples(n));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    shuffle(&mut split_rng(seed, split_index), &mut idx);
    let k = train_fraction.of(n);
    let (train, val) = idx.split_at(k);
    let (mut train, mut val) = (train.to_vec(), val.to_vec());
    train.sort_unstable();
    val.sort_unstable();
    Ok((train, val))
}

fn split_indices_per_user(
    samples: &[Sample],
    seed: u64,
    split_index: u64,
    train_fraction: Fraction,
) -> Result<(Vec<usize>, Vec<usize>), ExperimentError> {
    if samples.len() < 3 {
        return Err(ExperimentError::TooFewSamples(samples.len()));
    }
    let mut by_user: std::collections::BTreeMap<&UserId, Vec<usize>> = Default::default();
    for (i, s) in samples.iter().enumerate() {
        by_user.entry(&s.user_id).or_default().push(i);
    }
    let mut rng = split_rng(seed, split_index);
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for rows in by_user.values_mut() {
        shuffle(&mut rng, rows);
        let k = train_fraction.of(rows.len());
        train.extend_from_slice(&rows[..k]);
        val.extend_from_slice(&rows[k..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    Ok((train, val))
}

fn pick(samples: &[Sample], idx: &[usize]) -> Vec<Sample> {
    idx.iter().map(|&i| samples[i].clone()).collect()
}

/// Deterministic random partition of `samples` into training and validation
/// parts; the training part has `round(train_fraction · n)` rows.
pub fn split_dataset(
    samples: &[Sample],
    seed: u64,
    split_index: u64,
    train_fraction: Fraction,
) -> Result<(Vec<Sample>, Vec<Sample>), ExperimentError> {
    let (t, v) = split_indices(samples.len(), seed, split_index, train_fraction)?;
    Ok((pick(samples, &t), pick(samples, &v)))
}

fn plan_split(
    samples: &[Sample],
    plan: &SplitPlan,
    split_index: usize,
) -> Result<(Vec<Sample>, Vec<Sample>), ExperimentError> {
    let (t, v) = match plan.mode {
        SplitMode::Rows => split_indices(samples.len(), plan.seed, split_index as u64, plan.train_fraction)?,
        SplitMode::PerUser => {
            split_indices_per_user(samples, plan.seed, split_index as u64, plan.train_fraction)?
        }
    };
    Ok((pick(samples, &t), pick(samples, &v)))
}

struct Cell {
    function: Option<ScoringFunction>,
    validation: Option<f64>,
    test: Option<f64>,
    errors: Vec<CellError>,
}

fn run_cell(
    train: &[Sample],
    validation: &[Sample],
    test_pool: &[Sample],
    spec: &AssumptionSpec,
    split: usize,
) -> Cell {
    let err = |stage: &str, e: &dyn fmt::Display| CellError {
        regime: spec.regime,
        split,
        stage: stage.to_owned(),
        message: e.to_string(),
    };
    let mut errors = Vec::new();
    let fit = match fit_assumption(train, spec) {
        Ok(f) => f,
        Err(e) => {
            return Cell {
                function: None,
                validation: None,
                test: None,
                errors: vec![err("fit", &e)],
            }
        }
    };
    let validation = evaluate_rmse(&fit.function, validation, spec.regime)
        .map_err(|e| errors.push(err("validation", &e)))
        .ok();
    let lacks_target = spec.regime.target() == Target::Init
        && test_pool.iter().all(|s| s.score_init.is_none());
    let test = if test_pool.is_empty() || lacks_target {
        None
    } else {
        evaluate_rmse(&fit.function, test_pool, spec.regime)
            .map_err(|e: RegressionError| errors.push(err("test", &e)))
            .ok()
    };
    Cell {
        function: Some(fit.function),
        validation,
        test,
        errors,
    }
}

/// Runs every regime on every split of `train_pool`.
///
/// Each regime is fitted on the training part of a split and scored on its
/// validation part and, when `test_pool` is non-empty, on the whole test
/// pool with the same fitted function. Failures are recorded per cell.
pub fn run_protocol(
    train_pool: &[Sample],
    test_pool: &[Sample],
    regimes: &[AssumptionSpec],
    plan: &SplitPlan,
) -> Result<ExperimentReport, ExperimentError> {
    plan.validate()?;
    let splits = (0..plan.n_splits)
        .map(|i| plan_split(train_pool, plan, i))
        .collect::<Result<Vec<_>, _>>()?;

    let jobs: Vec<(usize, usize)> = (0..regimes.len())
        .flat_map(|r| (0..plan.n_splits).map(move |s| (r, s)))
        .collect();
    let cells: Vec<Cell> = jobs
        .par_iter()
        .map(|&(r, s)| {
            let (train, val) = &splits[s];
            run_cell(train, val, test_pool, &regimes[r], s)
        })
        .collect();

    let mut grid: Vec<Vec<Cell>> = Vec::with_capacity(regimes.len());
    let mut it = cells.into_iter();
    for _ in regimes {
        grid.push(it.by_ref().take(plan.n_splits).collect());
    }
    Ok(ExperimentReport::assemble(
        plan,
        regimes,
        train_pool.len(),
        test_pool.len(),
        grid.into_iter()
            .map(|row| {
                row.into_iter()
                    .map(|c| (c.function, c.validation, c.test, c.errors))
                    .collect()
            })
            .collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::EventId;
    use crate::regression::Regime;
    use crate::scoring::FactorVector;
    use std::collections::BTreeSet;

    fn samples(n: usize) -> Vec<Sample> {
        (0..n)
            .map(|i| Sample {
                user_id: UserId::new(format!("u{}", i / 5)),
                event_id: EventId::new(format!("e{}", i % 5)),
                factors: FactorVector {
                    thi: (i % 11) as f64,
                    tyi: ((i * 7) % 11) as f64,
                    rat: 5.0,
                    rch: 5.0,
                    frn: 0.0,
                },
                u_abs: None,
                u_rel: None,
                score_init: None,
                score_fin: 0.6 * (i % 11) as f64 + 0.33 * ((i * 7) % 11) as f64 - 0.25,
            })
            .collect()
    }

    #[test]
    fn fraction_rounding() {
        assert_eq!(Fraction::TWO_THIRDS.of(9), 6);
        assert_eq!(Fraction::TWO_THIRDS.of(4500), 3000);
        assert_eq!(Fraction::TWO_THIRDS.of(10), 7);
        assert_eq!("2/3".parse::<Fraction>().unwrap(), Fraction::TWO_THIRDS);
        assert!("3/3".parse::<Fraction>().is_err());
        assert!("x".parse::<Fraction>().is_err());
    }

    #[test]
    fn split_sizes_and_partition() {
        let (t, v) = split_indices(9, 1, 0, Fraction::TWO_THIRDS).unwrap();
        assert_eq!((t.len(), v.len()), (6, 3));
        let all: BTreeSet<usize> = t.iter().chain(&v).copied().collect();
        assert_eq!(all.len(), 9);

        let (t, v) = split_indices(4500, 42, 3, Fraction::TWO_THIRDS).unwrap();
        assert_eq!((t.len(), v.len()), (3000, 1500));
        assert!(matches!(
            split_indices(2, 1, 0, Fraction::TWO_THIRDS),
            Err(ExperimentError::TooFewSamples(2))
        ));
    }

    #[test]
    fn split_is_deterministic_and_varies_by_index() {
        let a = split_indices(100, 7, 2, Fraction::TWO_THIRDS).unwrap();
        let b = split_indices(100, 7, 2, Fraction::TWO_THIRDS).unwrap();
        let c = split_indices(100, 7, 3, Fraction::TWO_THIRDS).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let s = samples(30);
        assert_eq!(
            split_dataset(&s, 1, 1, Fraction::TWO_THIRDS).unwrap(),
            split_dataset(&s, 1, 1, Fraction::TWO_THIRDS).unwrap()
        );
    }

    #[test]
    fn training_frequency_matches_fraction() {
        let n = 60;
        let counts = |splits: u64| {
            let mut c = vec![0usize; n];
            for i in 0..splits {
                for j in split_indices(n, 11, i, Fraction::TWO_THIRDS).unwrap().0 {
                    c[j] += 1;
                }
            }
            c
        };
        // within 5% of the fraction over 200 splits, for any block of rows
        let c200 = counts(200);
        let blocks: [&dyn Fn(usize) -> bool; 4] =
            [&|j| j < 30, &|j| j >= 30, &|j| j % 2 == 0, &|j| j % 2 == 1];
        for in_block in blocks {
            let rows: Vec<usize> = (0..n).filter(|&j| in_block(j)).collect();
            let freq = rows.iter().map(|&j| c200[j]).sum::<usize>() as f64 / (200 * rows.len()) as f64;
            assert!((freq / (2.0 / 3.0) - 1.0).abs() <= 0.05, "block freq {freq}");
        }
        // and every single row converges to it
        for c in counts(2000) {
            let freq = c as f64 / 2000.0;
            assert!((freq - 2.0 / 3.0).abs() <= 0.05, "row freq {freq}");
        }
    }

    #[test]
    fn per_user_split_keeps_user_fraction() {
        let s = samples(60);
        let plan = SplitPlan {
            mode: SplitMode::PerUser,
            ..SplitPlan::new(3)
        };
        let (train, val) = plan_split(&s, &plan, 0).unwrap();
        assert_eq!(train.len() + val.len(), 60);
        for u in 0..12 {
            let id = UserId::new(format!("u{u}"));
            assert_eq!(train.iter().filter(|x| x.user_id == id).count(), 3);
        }
    }

    #[test]
    fn noiseless_protocol_has_zero_rmse() {
        let s = samples(90);
        let test = samples(45);
        let report = run_protocol(
            &s,
            &test,
            &[AssumptionSpec::new(Regime::Ia0Fin)],
            &SplitPlan::new(5),
        )
        .unwrap();
        assert_eq!(report.validation_rmse[0].splits.len(), 15);
        for v in report.validation_rmse[0].splits.iter().chain(&report.test_rmse[0].splits) {
            assert!(v.unwrap() < 1e-9);
        }
        assert!(report.errors.is_empty());
    }

    #[test]
    fn cell_errors_are_recorded() {
        let s = samples(30);
        let report = run_protocol(
            &s,
            &[],
            &[AssumptionSpec::new(Regime::Ia0Init), AssumptionSpec::new(Regime::Ia0Fin)],
            &SplitPlan::new(1),
        )
        .unwrap();
        assert_eq!(report.errors.len(), 15);
        assert!(report.validation_rmse[0].splits.iter().all(Option::is_none));
        assert!(report.validation_rmse[1].splits.iter().all(Option::is_some));
        assert!(report.test_rmse[1].splits.iter().all(Option::is_none));
    }
}
