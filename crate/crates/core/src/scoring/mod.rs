//! Scoring factors and the linear scoring function built on top of them.
//!
//! All factors land on the score scale `I_σ` from the [`ScoringConfig`]:
//! interests and ratings are rescaled with [`map_interval`], reachability
//! decays linearly with distance and friends' participation grows
//! logarithmically with the number of participating friends.

mod function;
mod rank;

pub use function::{Attribute, AttributeSource, Features, LinearForm, Piecewise, ScoringFunction};
pub use rank::{rank, RankFailure, RankedEvent, Ranking};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{effective_distance, Event, EventId, Interval, ScoringConfig, UserProfile};

#[derive(Debug, Clone, PartialEq, Error, Serialize, Deserialize)]
#[serde(tag = "code", rename_all = "snake_case")]
pub enum ScoringError {
    #[error("user has no interest value for label `{label}`")]
    MissingInterest { label: String },
    #[error("event `{event}` has neither ratings nor an average rating")]
    NoRatings { event: EventId },
    #[error("user has no self-assessed factor weights")]
    MissingSelfWeights,
    #[error("all self-assessed factor weights are zero")]
    ZeroWeights,
    #[error("scoring function uses `{attribute}`, which is not available")]
    MissingAttribute { attribute: Attribute },
}

/// Affine rescaling of `x` from one interval onto another.
pub fn map_interval(x: f64, from: &Interval, to: &Interval) -> f64 {
    (x - from.lb()) * to.width() / from.width() + to.lb()
}

/// The five factor values of one (user, event) pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FactorVector {
    pub thi: f64,
    pub tyi: f64,
    pub rat: f64,
    pub rch: f64,
    pub frn: f64,
}

fn mean_interest<'a>(
    u: &UserProfile,
    labels: impl IntoIterator<Item = &'a String>,
    cfg: &ScoringConfig,
) -> Result<f64, ScoringError> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for label in labels {
        let v = match (u.interest(label), cfg.default_interest) {
            (Some(v), _) | (None, Some(v)) => v,
            (None, None) => {
                return Err(ScoringError::MissingInterest {
                    label: label.clone(),
                })
            }
        };
        sum += v;
        n += 1;
    }
    // events always carry at least one label of each kind
    debug_assert!(n > 0);
    Ok(map_interval(sum / n as f64, &cfg.interest, &cfg.score))
}

/// Mean interest of the user in the event's themes, on the score scale.
pub fn thematic_interest(
    u: &UserProfile,
    o: &Event,
    cfg: &ScoringConfig,
) -> Result<f64, ScoringError> {
    mean_interest(u, o.themes(), cfg)
}

/// Mean interest of the user in the event's types, on the score scale.
pub fn type_interest(u: &UserProfile, o: &Event, cfg: &ScoringConfig) -> Result<f64, ScoringError> {
    mean_interest(u, o.types(), cfg)
}

/// Mean community rating of the event, on the score scale.
///
/// Individual ratings win over a pre-aggregated average when both exist.
pub fn average_rating(o: &Event, cfg: &ScoringConfig) -> Result<f64, ScoringError> {
    let mean = if !o.raters().is_empty() {
        o.raters().values().sum::<f64>() / o.raters().len() as f64
    } else if let Some(avg) = o.avg_rating_input() {
        avg
    } else {
        return Err(ScoringError::NoRatings {
            event: o.id().clone(),
        });
    };
    Ok(map_interval(mean, &cfg.rating, &cfg.score))
}

/// Result of the reachability factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reachability {
    pub value: f64,
    /// Set when user radius, event radius and willingness to move are all
    /// zero while the distance is positive; `value` is then the scale minimum.
    pub degenerate: bool,
}

/// Reachability from a raw distance and the reach span
/// `user radius + event radius + willingness to move`.
pub fn reachability_at(dist_km: f64, span_km: f64, score: &Interval) -> Reachability {
    if span_km <= 0.0 {
        let value = if dist_km <= 0.0 { score.ub() } else { score.lb() };
        return Reachability {
            value,
            degenerate: dist_km > 0.0,
        };
    }
    if dist_km >= span_km {
        return Reachability {
            value: score.lb(),
            degenerate: false,
        };
    }
    let slope = (score.lb() - score.ub()) / span_km;
    Reachability {
        value: (slope * dist_km + score.ub()).max(score.lb()),
        degenerate: false,
    }
}

/// How willing the user is to cover the distance to the event: the top of
/// the scale at zero distance, falling linearly to the bottom once the
/// distance reaches both radii plus the willingness to move.
pub fn reachability(u: &UserProfile, o: &Event, cfg: &ScoringConfig) -> Reachability {
    let span = u.position().radius_km + o.placement().radius_km() + u.mov_km();
    reachability_at(effective_distance(u, o), span, &cfg.score)
}

/// `frn` for a given number of participating friends.
pub fn friends_factor(count: u32, cfg: &ScoringConfig) -> f64 {
    let s = &cfg.score;
    s.lb() + s.width() * (f64::from(count) + 1.0).ln() / (f64::from(cfg.k) + 1.0).ln()
}

/// Number of the user's friends taking part in the event. A survey-style
/// friend count on the event takes precedence over the social graph.
pub fn participating_friends(u: &UserProfile, o: &Event) -> u32 {
    match o.friends_count() {
        Some(n) => n,
        None => o.participants().intersection(u.friends()).count() as u32,
    }
}

/// Friends' participation. Grows logarithmically and is not clamped: more
/// than `k` friends yield values slightly above the top of the scale.
pub fn friends_participation(u: &UserProfile, o: &Event, cfg: &ScoringConfig) -> f64 {
    friends_factor(participating_friends(u, o), cfg)
}

/// How the self-assessed weights are normalised when combining the three
/// additional factors into one attribute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CombineMode {
    /// Divide by the largest possible weight sum, `3 * weight_ub`.
    Abs,
    /// Divide by the user's own weight sum.
    Rel,
}

pub fn combined_user_factor(
    u: &UserProfile,
    fv: &FactorVector,
    mode: CombineMode,
    cfg: &ScoringConfig,
) -> Result<f64, ScoringError> {
    let w = u.self_weights().ok_or(ScoringError::MissingSelfWeights)?;
    let weighted = w.rat * fv.rat + w.rch * fv.rch + w.frn * fv.frn;
    match mode {
        CombineMode::Abs => Ok(weighted / (3.0 * cfg.weight_ub)),
        CombineMode::Rel => {
            let sum = w.sum();
            if sum <= 0.0 {
                Err(ScoringError::ZeroWeights)
            } else {
                Ok(weighted / sum)
            }
        }
    }
}

/// All five factors for one (user, event) pair.
pub fn factor_vector(
    u: &UserProfile,
    o: &Event,
    cfg: &ScoringConfig,
) -> Result<FactorVector, ScoringError> {
    Ok(FactorVector {
        thi: thematic_interest(u, o, cfg)?,
        tyi: type_interest(u, o, cfg)?,
        rat: average_rating(o, cfg)?,
        rch: reachability(u, o, cfg).value,
        frn: friends_participation(u, o, cfg),
    })
}

/// Factor vector plus the combined self-weighted attributes, whenever the
/// user's profile allows computing them.
pub fn features(u: &UserProfile, o: &Event, cfg: &ScoringConfig) -> Result<Features, ScoringError> {
    let factors = factor_vector(u, o, cfg)?;
    Ok(Features {
        factors,
        u_abs: combined_user_factor(u, &factors, CombineMode::Abs, cfg).ok(),
        u_rel: combined_user_factor(u, &factors, CombineMode::Rel, cfg).ok(),
    })
}
