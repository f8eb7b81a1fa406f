//! Domain types for events, users and their social/rating context.
//!
//! Every value here is validated on construction and immutable afterwards,
//! so a built [`Event`] or [`UserProfile`] can be shared freely between
//! threads.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised while constructing domain values.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid interval [{lb}, {ub}]: lower bound must be below upper bound")]
    InvalidInterval { lb: f64, ub: f64 },
    #[error("label text must not be empty")]
    EmptyLabel,
    #[error("label `{text}` is already registered as a {existing}")]
    LabelKindConflict { text: String, existing: LabelKind },
    #[error("invalid circle: {0}")]
    InvalidCircle(String),
    #[error("event `{0}` needs at least one theme")]
    NoThemes(EventId),
    #[error("event `{0}` needs at least one type")]
    NoTypes(EventId),
    #[error("event `{0}` needs exactly one of a location or a precomputed distance")]
    Placement(EventId),
    #[error("{what} = {value} lies outside [{lb}, {ub}]")]
    OutOfInterval {
        what: String,
        value: f64,
        lb: f64,
        ub: f64,
    },
    #[error("{what} must be a finite non-negative number, got {value}")]
    Negative { what: String, value: f64 },
    #[error("user `{0}` cannot list themselves as a friend")]
    SelfFriend(UserId),
    #[error("invalid configuration: {0}")]
    Config(String),
}

macro_rules! string_id {
    ($name:ident, $doc:literal) => {
        #[doc = $doc]
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }
    };
}

string_id!(UserId, "Identifier of a user profile.");
string_id!(EventId, "Identifier of an event.");

/// A closed real interval `[lb, ub]` with `lb < ub`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    lb: f64,
    ub: f64,
}

impl Interval {
    pub fn new(lb: f64, ub: f64) -> Result<Self, ModelError> {
        if !(lb.is_finite() && ub.is_finite() && lb < ub) {
            return Err(ModelError::InvalidInterval { lb, ub });
        }
        Ok(Self { lb, ub })
    }

    /// The `[0, 10]` scale used throughout the survey data.
    pub const fn zero_to_ten() -> Self {
        Self { lb: 0.0, ub: 10.0 }
    }

    pub fn lb(&self) -> f64 {
        self.lb
    }

    pub fn ub(&self) -> f64 {
        self.ub
    }

    pub fn width(&self) -> f64 {
        self.ub - self.lb
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lb <= x && x <= self.ub
    }

    pub(crate) fn check(&self, what: &str, value: f64) -> Result<(), ModelError> {
        if self.contains(value) {
            Ok(())
        } else {
            Err(ModelError::OutOfInterval {
                what: what.to_owned(),
                value,
                lb: self.lb,
                ub: self.ub,
            })
        }
    }
}

/// Shared numeric configuration: value scales, the friend saturation count
/// and the optional fallback interest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoringConfig {
    /// Codomain of the scoring function and of every factor.
    pub score: Interval,
    /// Scale of community ratings.
    pub rating: Interval,
    /// Scale of user interests.
    pub interest: Interval,
    /// Upper bound of the self-assessed factor weights (lower bound is 0).
    pub weight_ub: f64,
    /// Number of participating friends at which `frn` reaches the top of the scale.
    pub k: u32,
    /// Interest assumed for labels missing from a profile. `None` makes a
    /// missing label an error.
    pub default_interest: Option<f64>,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        Self {
            score: Interval::zero_to_ten(),
            rating: Interval::zero_to_ten(),
            interest: Interval::zero_to_ten(),
            weight_ub: 10.0,
            k: 8,
            default_interest: None,
        }
    }
}

impl ScoringConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        for iv in [self.score, self.rating, self.interest] {
            Interval::new(iv.lb, iv.ub)?;
        }
        if !(self.weight_ub.is_finite() && self.weight_ub > 0.0) {
            return Err(ModelError::Config(format!(
                "weight_ub must be positive, got {}",
                self.weight_ub
            )));
        }
        if self.k < 1 {
            return Err(ModelError::Config("k must be at least 1".into()));
        }
        if let Some(d) = self.default_interest {
            self.interest.check("default_interest", d)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelKind {
    Theme,
    Type,
}

impl fmt::Display for LabelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LabelKind::Theme => "theme",
            LabelKind::Type => "type",
        })
    }
}

/// A content label, either a theme ("fish") or an event type ("dinner").
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Label {
    text: String,
    kind: LabelKind,
}

impl Label {
    pub fn new(text: &str, kind: LabelKind) -> Result<Self, ModelError> {
        let text = text.trim();
        if text.is_empty() {
            return Err(ModelError::EmptyLabel);
        }
        Ok(Self {
            text: text.to_owned(),
            kind,
        })
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn kind(&self) -> LabelKind {
        self.kind
    }
}

/// Registry of known labels. Theme and type vocabularies are kept disjoint:
/// a text can only ever be registered under one kind.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    labels: BTreeMap<String, LabelKind>,
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, text: &str, kind: LabelKind) -> Result<Label, ModelError> {
        let label = Label::new(text, kind)?;
        match self.labels.get(label.text()) {
            Some(&existing) if existing != kind => Err(ModelError::LabelKindConflict {
                text: label.text,
                existing,
            }),
            Some(_) => Ok(label),
            None => {
                self.labels.insert(label.text.clone(), kind);
                Ok(label)
            }
        }
    }

    pub fn kind_of(&self, text: &str) -> Option<LabelKind> {
        self.labels.get(text).copied()
    }

    pub fn labels(&self, kind: LabelKind) -> impl Iterator<Item = &str> {
        self.labels
            .iter()
            .filter(move |(_, k)| **k == kind)
            .map(|(t, _)| t.as_str())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// A circular area on a local planar frame, in kilometres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoCircle {
    pub x_km: f64,
    pub y_km: f64,
    pub radius_km: f64,
}

impl GeoCircle {
    pub fn new(x_km: f64, y_km: f64, radius_km: f64) -> Result<Self, ModelError> {
        if !(x_km.is_finite() && y_km.is_finite()) {
            return Err(ModelError::InvalidCircle("center must be finite".into()));
        }
        if !(radius_km.is_finite() && radius_km >= 0.0) {
            return Err(ModelError::InvalidCircle(format!(
                "radius must be non-negative, got {radius_km}"
            )));
        }
        Ok(Self {
            x_km,
            y_km,
            radius_km,
        })
    }

    pub fn point(x_km: f64, y_km: f64) -> Self {
        Self {
            x_km,
            y_km,
            radius_km: 0.0,
        }
    }
}

/// Straight-line distance between two circle centers.
pub fn distance(a: &GeoCircle, b: &GeoCircle) -> f64 {
    (a.x_km - b.x_km).hypot(a.y_km - b.y_km)
}

/// Where an event happens: either a geometric area, or a distance that was
/// given directly (as in survey data) together with the event radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Placement {
    Geometric(GeoCircle),
    Precomputed { distance_km: f64, radius_km: f64 },
}

impl Placement {
    pub fn radius_km(&self) -> f64 {
        match self {
            Placement::Geometric(c) => c.radius_km,
            Placement::Precomputed { radius_km, .. } => *radius_km,
        }
    }
}

/// Non-fatal remarks produced while validating an event.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ValidationWarning {
    /// Both individual ratings and a pre-aggregated average were supplied;
    /// the individual ratings take precedence.
    RatersOverrideAverage(EventId),
}

impl fmt::Display for ValidationWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValidationWarning::RatersOverrideAverage(id) => write!(
                f,
                "event `{id}` has both individual ratings and an average rating; using the individual ratings"
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Event {
    id: EventId,
    themes: BTreeSet<String>,
    types: BTreeSet<String>,
    placement: Placement,
    avg_rating_input: Option<f64>,
    raters: BTreeMap<UserId, f64>,
    participants: BTreeSet<UserId>,
    friends_count: Option<u32>,
}

impl Event {
    pub fn builder(id: impl Into<EventId>) -> EventBuilder {
        EventBuilder {
            id: id.into(),
            themes: BTreeSet::new(),
            types: BTreeSet::new(),
            location: None,
            distance: None,
            avg_rating_input: None,
            raters: BTreeMap::new(),
            participants: BTreeSet::new(),
            friends_count: None,
        }
    }

    pub fn id(&self) -> &EventId {
        &self.id
    }

    pub fn themes(&self) -> &BTreeSet<String> {
        &self.themes
    }

    pub fn types(&self) -> &BTreeSet<String> {
        &self.types
    }

    pub fn placement(&self) -> &Placement {
        &self.placement
    }

    pub fn avg_rating_input(&self) -> Option<f64> {
        self.avg_rating_input
    }

    pub fn raters(&self) -> &BTreeMap<UserId, f64> {
        &self.raters
    }

    pub fn participants(&self) -> &BTreeSet<UserId> {
        &self.participants
    }

    /// Participating-friend count given directly by survey data. When set it
    /// replaces the intersection of participants and the user's friends.
    pub fn friends_count(&self) -> Option<u32> {
        self.friends_count
    }

    pub fn warnings(&self) -> Vec<ValidationWarning> {
        let mut out = Vec::new();
        if !self.raters.is_empty() && self.avg_rating_input.is_some() {
            out.push(ValidationWarning::RatersOverrideAverage(self.id.clone()));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct EventBuilder {
    id: EventId,
    themes: BTreeSet<String>,
    types: BTreeSet<String>,
    location: Option<GeoCircle>,
    distance: Option<(f64, f64)>,
    avg_rating_input: Option<f64>,
    raters: BTreeMap<UserId, f64>,
    participants: BTreeSet<UserId>,
    friends_count: Option<u32>,
}

impl EventBuilder {
    pub fn theme(mut self, t: &str) -> Self {
        self.themes.insert(t.trim().to_owned());
        self
    }

    pub fn themes<'a>(mut self, ts: impl IntoIterator<Item = &'a str>) -> Self {
        self.themes.extend(ts.into_iter().map(|t| t.trim().to_owned()));
        self
    }

    pub fn event_type(mut self, t: &str) -> Self {
        self.types.insert(t.trim().to_owned());
        self
    }

    pub fn location(mut self, c: GeoCircle) -> Self {
        self.location = Some(c);
        self
    }

    pub fn distance(mut self, distance_km: f64, radius_km: f64) -> Self {
        self.distance = Some((distance_km, radius_km));
        self
    }

    pub fn avg_rating(mut self, r: f64) -> Self {
        self.avg_rating_input = Some(r);
        self
    }

    pub fn rating(mut self, rater: impl Into<UserId>, r: f64) -> Self {
        self.raters.insert(rater.into(), r);
        self
    }

    pub fn participant(mut self, u: impl Into<UserId>) -> Self {
        self.participants.insert(u.into());
        self
    }

    pub fn friends_count(mut self, n: u32) -> Self {
        self.friends_count = Some(n);
        self
    }

    pub fn build(self, cfg: &ScoringConfig) -> Result<Event, ModelError> {
        if self.themes.iter().all(|t| t.is_empty()) {
            return Err(ModelError::NoThemes(self.id));
        }
        if self.types.iter().all(|t| t.is_empty()) {
            return Err(ModelError::NoTypes(self.id));
        }
        if self.themes.iter().chain(&self.types).any(|t| t.is_empty()) {
            return Err(ModelError::EmptyLabel);
        }
        if let Some(t) = self.themes.intersection(&self.types).next() {
            return Err(ModelError::LabelKindConflict {
                text: t.clone(),
                existing: LabelKind::Theme,
            });
        }
        let placement = match (self.location, self.distance) {
            (Some(c), None) => Placement::Geometric(GeoCircle::new(c.x_km, c.y_km, c.radius_km)?),
            (None, Some((d, r))) => {
                non_negative("distance_km", d)?;
                non_negative("event radius_km", r)?;
                Placement::Precomputed {
                    distance_km: d,
                    radius_km: r,
                }
            }
            _ => return Err(ModelError::Placement(self.id)),
        };
        if let Some(r) = self.avg_rating_input {
            cfg.rating.check("avg_rating", r)?;
        }
        for (rater, &r) in &self.raters {
            cfg.rating.check(&format!("rating by `{rater}`"), r)?;
        }
        Ok(Event {
            id: self.id,
            themes: self.themes,
            types: self.types,
            placement,
            avg_rating_input: self.avg_rating_input,
            raters: self.raters,
            participants: self.participants,
            friends_count: self.friends_count,
        })
    }
}

/// A user's self-assessed importance of the three additional factors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelfWeights {
    pub rat: f64,
    pub rch: f64,
    pub frn: f64,
}

impl SelfWeights {
    pub fn sum(&self) -> f64 {
        self.rat + self.rch + self.frn
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UserProfile {
    id: UserId,
    position: GeoCircle,
    mov_km: f64,
    interests: BTreeMap<String, f64>,
    friends: BTreeSet<UserId>,
    self_weights: Option<SelfWeights>,
}

impl UserProfile {
    pub fn builder(id: impl Into<UserId>) -> UserBuilder {
        UserBuilder {
            id: id.into(),
            position: GeoCircle::point(0.0, 0.0),
            mov_km: 0.0,
            interests: BTreeMap::new(),
            friends: BTreeSet::new(),
            self_weights: None,
        }
    }

    pub fn id(&self) -> &UserId {
        &self.id
    }

    pub fn position(&self) -> &GeoCircle {
        &self.position
    }

    pub fn mov_km(&self) -> f64 {
        self.mov_km
    }

    pub fn interests(&self) -> &BTreeMap<String, f64> {
        &self.interests
    }

    pub fn interest(&self, label: &str) -> Option<f64> {
        self.interests.get(label).copied()
    }

    pub fn friends(&self) -> &BTreeSet<UserId> {
        &self.friends
    }

    pub fn self_weights(&self) -> Option<&SelfWeights> {
        self.self_weights.as_ref()
    }
}

#[derive(Debug, Clone)]
pub struct UserBuilder {
    id: UserId,
    position: GeoCircle,
    mov_km: f64,
    interests: BTreeMap<String, f64>,
    friends: BTreeSet<UserId>,
    self_weights: Option<SelfWeights>,
}

impl UserBuilder {
    pub fn position(mut self, c: GeoCircle) -> Self {
        self.position = c;
        self
    }

    pub fn mov_km(mut self, km: f64) -> Self {
        self.mov_km = km;
        self
    }

    pub fn interest(mut self, label: &str, value: f64) -> Self {
        self.interests.insert(label.trim().to_owned(), value);
        self
    }

    pub fn friend(mut self, u: impl Into<UserId>) -> Self {
        self.friends.insert(u.into());
        self
    }

    pub fn self_weights(mut self, w: SelfWeights) -> Self {
        self.self_weights = Some(w);
        self
    }

    pub fn build(self, cfg: &ScoringConfig) -> Result<UserProfile, ModelError> {
        let position = GeoCircle::new(self.position.x_km, self.position.y_km, self.position.radius_km)?;
        non_negative("mov_km", self.mov_km)?;
        for (label, &v) in &self.interests {
            if label.is_empty() {
                return Err(ModelError::EmptyLabel);
            }
            cfg.interest.check(&format!("interest in `{label}`"), v)?;
        }
        if self.friends.contains(&self.id) {
            return Err(ModelError::SelfFriend(self.id));
        }
        if let Some(w) = &self.self_weights {
            let range = Interval {
                lb: 0.0,
                ub: cfg.weight_ub,
            };
            range.check("w_rat", w.rat)?;
            range.check("w_rch", w.rch)?;
            range.check("w_frn", w.frn)?;
        }
        Ok(UserProfile {
            id: self.id,
            position,
            mov_km: self.mov_km,
            interests: self.interests,
            friends: self.friends,
            self_weights: self.self_weights,
        })
    }
}

fn non_negative(what: &str, value: f64) -> Result<(), ModelError> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(ModelError::Negative {
            what: what.to_owned(),
            value,
        })
    }
}

/// Distance from the user to the event: the precomputed value when the event
/// carries one, otherwise the distance between the two circle centers.
pub fn effective_distance(u: &UserProfile, o: &Event) -> f64 {
    match o.placement() {
        Placement::Precomputed { distance_km, .. } => *distance_km,
        Placement::Geometric(c) => distance(u.position(), c),
    }
}
