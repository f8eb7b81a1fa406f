//! Survey-style datasets on disk, sample construction, and the versioned
//! JSON files for models and reports.
//!
//! A bundle is a directory of UTF-8 CSV files with mandatory headers:
//!
//! | file | columns |
//! |------|---------|
//! | `events.csv` | `event_id, themes, event_type, dist_km, friends_count, avg_rating` |
//! | `users.csv` | `user_id, mov_km, w_rat, w_rch, w_frn` |
//! | `interests.csv` | `user_id, label, kind, value` |
//! | `responses.csv` | `user_id, event_id, score_init, score_fin` |
//!
//! Optional files add the social graph and geometry: `locations.csv`
//! (`kind, id, x_km, y_km, radius_km`), `friends.csv` (`user_id,
//! friend_id`), `participants.csv` (`event_id, user_id`), `ratings.csv`
//! (`event_id, user_id, rating`) and `config.toml`.

mod load;
mod persist;
mod write;

pub use load::load_bundle;
pub use persist::{
    load_model, load_report, model_from_str, report_from_str, save_model, save_report, to_decimal_json,
    ModelFile, FORMAT_VERSION,
};
pub use write::write_bundle;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Event, EventId, ModelError, ScoringConfig, UserId, UserProfile, Vocabulary};
use crate::regression::Sample;
use crate::scoring::{features, ScoringError};

pub const EVENTS_HEADER: [&str; 6] = ["event_id", "themes", "event_type", "dist_km", "friends_count", "avg_rating"];
pub const USERS_HEADER: [&str; 5] = ["user_id", "mov_km", "w_rat", "w_rch", "w_frn"];
pub const INTERESTS_HEADER: [&str; 4] = ["user_id", "label", "kind", "value"];
pub const RESPONSES_HEADER: [&str; 4] = ["user_id", "event_id", "score_init", "score_fin"];
pub const LOCATIONS_HEADER: [&str; 5] = ["kind", "id", "x_km", "y_km", "radius_km"];
pub const FRIENDS_HEADER: [&str; 2] = ["user_id", "friend_id"];
pub const PARTICIPANTS_HEADER: [&str; 2] = ["event_id", "user_id"];
pub const RATINGS_HEADER: [&str; 3] = ["event_id", "user_id", "rating"];

/// A syntax or value problem at a precise place in an input file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ParseError {
    pub file: String,
    pub line: u64,
    /// 1-based column; `None` when the problem concerns the whole row.
    pub column: Option<usize>,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.column {
            Some(c) => write!(f, "{}:{}:{}: {}", self.file, self.line, c, self.message),
            None => write!(f, "{}:{}: {}", self.file, self.line, self.message),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegrityKind {
    UnknownUser,
    UnknownEvent,
    DuplicateUser,
    DuplicateEvent,
    DuplicateResponse,
    DuplicateEntry,
    VocabularyConflict,
    PlacementConflict,
    PlacementMissing,
    SelfFriend,
}

/// A cross-record consistency violation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IntegrityError {
    pub kind: IntegrityKind,
    pub file: String,
    pub line: Option<u64>,
    pub ids: Vec<String>,
}

impl fmt::Display for IntegrityError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let what = match self.kind {
            IntegrityKind::UnknownUser => "unknown user id",
            IntegrityKind::UnknownEvent => "unknown event id",
            IntegrityKind::DuplicateUser => "duplicate user id",
            IntegrityKind::DuplicateEvent => "duplicate event id",
            IntegrityKind::DuplicateResponse => "duplicate response for user/event",
            IntegrityKind::DuplicateEntry => "duplicate entry",
            IntegrityKind::VocabularyConflict => "label used both as theme and as type",
            IntegrityKind::PlacementConflict => "event has both a distance and a location",
            IntegrityKind::PlacementMissing => "event has neither a distance nor a location",
            IntegrityKind::SelfFriend => "user lists themselves as a friend",
        };
        match self.line {
            Some(l) => write!(f, "{}:{}: {what}: {}", self.file, l, self.ids.join(", ")),
            None => write!(f, "{}: {what}: {}", self.file, self.ids.join(", ")),
        }
    }
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{0}")]
    Parse(ParseError),
    #[error("{0}")]
    Integrity(IntegrityError),
    #[error("unsupported file version `{found}` (expected `{expected}`)")]
    VersionMismatch { found: String, expected: String },
    #[error("{0}")]
    Invalid(String),
}

impl DataError {
    pub(crate) fn io(path: &std::path::Path, e: impl fmt::Display) -> Self {
        DataError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }
}

/// Settings stored next to the CSV files in `config.toml`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BundleConfig {
    pub scoring: ScoringConfig,
    /// Radius given to events placed by a precomputed distance.
    pub event_radius_km: f64,
    /// Radius of users without a row in `locations.csv`.
    pub user_radius_km: f64,
}

impl Default for BundleConfig {
    fn default() -> Self {
        Self {
            scoring: ScoringConfig::default(),
            event_radius_km: 0.1,
            user_radius_km: 0.0,
        }
    }
}

impl BundleConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        self.scoring.validate()?;
        for (what, v) in [("event_radius_km", self.event_radius_km), ("user_radius_km", self.user_radius_km)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(ModelError::Negative {
                    what: what.into(),
                    value: v,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub user_id: UserId,
    pub event_id: EventId,
    pub score_init: Option<f64>,
    pub score_fin: f64,
}

/// A validated dataset. Events and users keep their file order.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    pub config: BundleConfig,
    pub vocabulary: Vocabulary,
    pub events: Vec<Event>,
    pub users: Vec<UserProfile>,
    pub responses: Vec<Response>,
    /// Non-fatal remarks collected while loading.
    pub warnings: Vec<String>,
}

impl DatasetBundle {
    pub fn event(&self, id: &EventId) -> Option<&Event> {
        self.events.iter().find(|e| e.id() == id)
    }

    pub fn user(&self, id: &UserId) -> Option<&UserProfile> {
        self.users.iter().find(|u| u.id() == id)
    }
}

/// A response whose factors could not be computed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Reject {
    pub user_id: UserId,
    pub event_id: EventId,
    pub error: ScoringError,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SampleSet {
    pub samples: Vec<Sample>,
    pub rejects: Vec<Reject>,
}

/// One sample per response, in response order. Rows whose factors fail are
/// collected as rejects; the remaining rows are still returned.
pub fn build_samples(bundle: &DatasetBundle) -> SampleSet {
    let cfg = &bundle.config.scoring;
    let users: BTreeMap<&UserId, &UserProfile> = bundle.users.iter().map(|u| (u.id(), u)).collect();
    let events: BTreeMap<&EventId, &Event> = bundle.events.iter().map(|e| (e.id(), e)).collect();
    let mut out = SampleSet::default();
    for r in &bundle.responses {
        // ids were checked when the bundle was loaded
        let (u, o) = (users[&r.user_id], events[&r.event_id]);
        match features(u, o, cfg) {
            Ok(f) => out.samples.push(Sample {
                user_id: r.user_id.clone(),
                event_id: r.event_id.clone(),
                factors: f.factors,
                u_abs: f.u_abs,
                u_rel: f.u_rel,
                score_init: r.score_init,
                score_fin: r.score_fin,
            }),
            Err(error) => out.rejects.push(Reject {
                user_id: r.user_id.clone(),
                event_id: r.event_id.clone(),
                error,
            }),
        }
    }
    out
}
