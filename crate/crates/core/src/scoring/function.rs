use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{FactorVector, ScoringError};

/// An input attribute of a scoring function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attribute {
    Thi,
    Tyi,
    Rat,
    Rch,
    Frn,
    UAbs,
    URel,
}

impl Attribute {
    pub const FACTORS: [Attribute; 5] = [
        Attribute::Thi,
        Attribute::Tyi,
        Attribute::Rat,
        Attribute::Rch,
        Attribute::Frn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Attribute::Thi => "thi",
            Attribute::Tyi => "tyi",
            Attribute::Rat => "rat",
            Attribute::Rch => "rch",
            Attribute::Frn => "frn",
            Attribute::UAbs => "u_abs",
            Attribute::URel => "u_rel",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "thi" => Attribute::Thi,
            "tyi" => Attribute::Tyi,
            "rat" => Attribute::Rat,
            "rch" => Attribute::Rch,
            "frn" => Attribute::Frn,
            "u_abs" => Attribute::UAbs,
            "u_rel" => Attribute::URel,
            _ => return None,
        })
    }
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Anything a scoring function can read attribute values from.
pub trait AttributeSource {
    fn attribute(&self, a: Attribute) -> Option<f64>;
}

impl AttributeSource for FactorVector {
    fn attribute(&self, a: Attribute) -> Option<f64> {
        match a {
            Attribute::Thi => Some(self.thi),
            Attribute::Tyi => Some(self.tyi),
            Attribute::Rat => Some(self.rat),
            Attribute::Rch => Some(self.rch),
            Attribute::Frn => Some(self.frn),
            Attribute::UAbs | Attribute::URel => None,
        }
    }
}

/// Factor vector together with the optional self-weighted combinations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Features {
    pub factors: FactorVector,
    pub u_abs: Option<f64>,
    pub u_rel: Option<f64>,
}

impl From<FactorVector> for Features {
    fn from(factors: FactorVector) -> Self {
        Self {
            factors,
            u_abs: None,
            u_rel: None,
        }
    }
}

impl AttributeSource for Features {
    fn attribute(&self, a: Attribute) -> Option<f64> {
        match a {
            Attribute::UAbs => self.u_abs,
            Attribute::URel => self.u_rel,
            _ => self.factors.attribute(a),
        }
    }
}

/// `intercept + Σ coefficient · attribute`. An attribute missing from
/// `coefficients` has been dropped, which is different from a learned zero.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LinearForm {
    pub intercept: f64,
    pub coefficients: BTreeMap<Attribute, f64>,
}

impl LinearForm {
    pub fn new(intercept: f64, coefficients: impl IntoIterator<Item = (Attribute, f64)>) -> Self {
        Self {
            intercept,
            coefficients: coefficients.into_iter().collect(),
        }
    }

    pub fn coefficient(&self, a: Attribute) -> Option<f64> {
        self.coefficients.get(&a).copied()
    }

    pub fn evaluate(&self, src: &impl AttributeSource) -> Result<f64, ScoringError> {
        let mut total = self.intercept;
        for (&attribute, &w) in &self.coefficients {
            let x = src
                .attribute(attribute)
                .ok_or(ScoringError::MissingAttribute { attribute })?;
            total += w * x;
        }
        Ok(total)
    }

    fn map(&self, f: impl Fn(f64) -> f64, intercept: impl Fn(f64) -> f64) -> Self {
        Self {
            intercept: intercept(self.intercept),
            coefficients: self.coefficients.iter().map(|(&a, &w)| (a, f(w))).collect(),
        }
    }
}

/// A scoring function whose coefficients depend on which interval of
/// `split` the input falls into. Intervals are `[lb, t1), [t1, t2), …,
/// [tn, ub]`; values below the first or above the last threshold go to the
/// outermost pieces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Piecewise {
    pub split: Attribute,
    pub thresholds: Vec<f64>,
    pub pieces: Vec<LinearForm>,
}

impl Piecewise {
    pub fn piece_index(thresholds: &[f64], value: f64) -> usize {
        thresholds.iter().take_while(|&&t| value >= t).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScoringFunction {
    Linear(LinearForm),
    Piecewise(Piecewise),
}

impl ScoringFunction {
    pub fn linear(intercept: f64, coefficients: impl IntoIterator<Item = (Attribute, f64)>) -> Self {
        ScoringFunction::Linear(LinearForm::new(intercept, coefficients))
    }

    /// Piece that applies to `src`.
    pub fn select(&self, src: &impl AttributeSource) -> Result<&LinearForm, ScoringError> {
        match self {
            ScoringFunction::Linear(f) => Ok(f),
            ScoringFunction::Piecewise(p) => {
                let v = src
                    .attribute(p.split)
                    .ok_or(ScoringError::MissingAttribute { attribute: p.split })?;
                Ok(&p.pieces[Piecewise::piece_index(&p.thresholds, v)])
            }
        }
    }

    pub fn score(&self, src: &impl AttributeSource) -> Result<f64, ScoringError> {
        self.select(src)?.evaluate(src)
    }

    /// Every attribute any piece reads.
    pub fn attributes(&self) -> Vec<Attribute> {
        let mut out: Vec<Attribute> = match self {
            ScoringFunction::Linear(f) => f.coefficients.keys().copied().collect(),
            ScoringFunction::Piecewise(p) => {
                let mut v: Vec<_> = p.pieces.iter().flat_map(|f| f.coefficients.keys().copied()).collect();
                v.push(p.split);
                v
            }
        };
        out.sort();
        out.dedup();
        out
    }

    pub fn pieces(&self) -> Vec<&LinearForm> {
        match self {
            ScoringFunction::Linear(f) => vec![f],
            ScoringFunction::Piecewise(p) => p.pieces.iter().collect(),
        }
    }

    fn map_forms(&self, g: impl Fn(&LinearForm) -> LinearForm) -> Self {
        match self {
            ScoringFunction::Linear(f) => ScoringFunction::Linear(g(f)),
            ScoringFunction::Piecewise(p) => ScoringFunction::Piecewise(Piecewise {
                split: p.split,
                thresholds: p.thresholds.clone(),
                pieces: p.pieces.iter().map(g).collect(),
            }),
        }
    }

    /// Multiplies every coefficient and intercept by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        self.map_forms(|f| f.map(|w| w * c, |b| b * c))
    }

    /// Adds `d` to every intercept.
    pub fn shifted(&self, d: f64) -> Self {
        self.map_forms(|f| f.map(|w| w, |b| b + d))
    }
}
