use std::cmp::Ordering;

use serde::Serialize;

use super::{features, Features, ScoringError, ScoringFunction};
use crate::model::{Event, EventId, ScoringConfig, UserProfile};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedEvent {
    pub event_id: EventId,
    pub score: f64,
    pub features: Features,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankFailure {
    pub event_id: EventId,
    pub error: ScoringError,
}

/// Events ordered by descending score. Events that could not be scored are
/// kept in `failed`, after every scored event, ordered by id.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Ranking {
    pub scored: Vec<RankedEvent>,
    pub failed: Vec<RankFailure>,
}

impl Ranking {
    pub fn len(&self) -> usize {
        self.scored.len() + self.failed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Event ids in final order, failures last.
    pub fn order(&self) -> Vec<&EventId> {
        self.scored
            .iter()
            .map(|r| &r.event_id)
            .chain(self.failed.iter().map(|f| &f.event_id))
            .collect()
    }
}

fn by_score_then_id(a: &RankedEvent, b: &RankedEvent) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.event_id.cmp(&b.event_id))
}

/// Scores every event for `u` and sorts them by descending score, breaking
/// ties by ascending event id.
pub fn rank<'a>(
    u: &UserProfile,
    events: impl IntoIterator<Item = &'a Event>,
    f: &ScoringFunction,
    cfg: &ScoringConfig,
) -> Ranking {
    let mut out = Ranking::default();
    for o in events {
        let scored = features(u, o, cfg).and_then(|feats| {
            f.score(&feats).map(|score| RankedEvent {
                event_id: o.id().clone(),
                score,
                features: feats,
            })
        });
        match scored {
            Ok(r) => out.scored.push(r),
            Err(error) => out.failed.push(RankFailure {
                event_id: o.id().clone(),
                error,
            }),
        }
    }
    out.scored.sort_by(by_score_then_id);
    out.failed.sort_by(|a, b| a.event_id.cmp(&b.event_id));
    out
}
