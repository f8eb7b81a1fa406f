use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use csv::{ReaderBuilder, StringRecord, Trim};

use super::{
    BundleConfig, DataError, DatasetBundle, IntegrityError, IntegrityKind, ParseError, Response,
    EVENTS_HEADER, FRIENDS_HEADER, INTERESTS_HEADER, LOCATIONS_HEADER, PARTICIPANTS_HEADER,
    RATINGS_HEADER, RESPONSES_HEADER, USERS_HEADER,
};
use crate::model::{
    Event, EventId, GeoCircle, LabelKind, ModelError, SelfWeights, UserId, UserProfile, Vocabulary,
};

struct Table {
    file: String,
    rows: Vec<(u64, StringRecord)>,
}

/// Line and column (both 1-based) of a byte offset.
fn line_col(text: &str, offset: usize) -> (u64, usize) {
    let before = &text.as_bytes()[..offset.min(text.len())];
    let line = before.iter().filter(|&&b| b == b'\n').count() as u64 + 1;
    let col = before.iter().rev().take_while(|&&b| b != b'\n').count() + 1;
    (line, col)
}

fn parse_err(file: &str, line: u64, column: Option<usize>, message: impl Into<String>) -> DataError {
    DataError::Parse(ParseError {
        file: file.to_owned(),
        line,
        column,
        message: message.into(),
    })
}

fn read_text(path: &Path, file: &str) -> Result<String, DataError> {
    let bytes = fs::read(path).map_err(|e| DataError::io(path, e))?;
    match String::from_utf8(bytes) {
        Ok(mut s) => {
            if s.starts_with('\u{feff}') {
                s.drain(..3);
            }
            Ok(s)
        }
        Err(e) => {
            let ok = e.utf8_error().valid_up_to();
            let prefix = String::from_utf8_lossy(&e.as_bytes()[..ok]).into_owned();
            let (line, col) = line_col(&prefix, ok);
            Err(parse_err(file, line, Some(col), "invalid UTF-8"))
        }
    }
}

fn csv_err(file: &str, e: &csv::Error) -> DataError {
    let line = e.position().map_or(0, |p| p.line());
    let message = match e.kind() {
        csv::ErrorKind::UnequalLengths { expected_len, len, .. } => {
            format!("expected {expected_len} fields, found {len}")
        }
        _ => e.to_string(),
    };
    parse_err(file, line, None, message)
}

fn read_table(dir: &Path, file: &str, header: &[&str], required: bool) -> Result<Option<Table>, DataError> {
    let path = dir.join(file);
    if !path.is_file() {
        return if required {
            Err(DataError::io(&path, "file not found"))
        } else {
            Ok(None)
        };
    }
    let text = read_text(&path, file)?;
    let mut table = Table {
        file: file.to_owned(),
        rows: Vec::new(),
    };
    if text.trim().is_empty() {
        return Ok(Some(table));
    }
    let mut rdr = ReaderBuilder::new().trim(Trim::All).from_reader(text.as_bytes());
    let found = rdr.headers().map_err(|e| csv_err(file, &e))?.clone();
    for (i, want) in header.iter().enumerate() {
        match found.get(i) {
            Some(h) if h == *want => {}
            Some(h) => {
                let msg = if header.contains(&h) {
                    format!("column `{h}` is out of order; expected header `{}`", header.join(","))
                } else {
                    format!("unknown column `{h}`; expected header `{}`", header.join(","))
                };
                return Err(parse_err(file, 1, Some(i + 1), msg));
            }
            None => {
                return Err(parse_err(
                    file,
                    1,
                    Some(i + 1),
                    format!("missing column `{want}`; expected header `{}`", header.join(",")),
                ))
            }
        }
    }
    if let Some(extra) = found.get(header.len()) {
        return Err(parse_err(
            file,
            1,
            Some(header.len() + 1),
            format!("unknown column `{extra}`; expected header `{}`", header.join(",")),
        ));
    }
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(file, &e))?;
        let line = rec.position().map_or(0, |p| p.line());
        table.rows.push((line, rec));
    }
    Ok(Some(table))
}

struct Row<'a> {
    file: &'a str,
    line: u64,
    rec: &'a StringRecord,
}

impl<'a> Row<'a> {
    fn err(&self, col: usize, msg: impl Into<String>) -> DataError {
        parse_err(self.file, self.line, Some(col + 1), msg)
    }

    fn opt(&self, col: usize) -> Option<&'a str> {
        self.rec.get(col).filter(|s| !s.is_empty())
    }

    fn text(&self, col: usize, name: &str) -> Result<&'a str, DataError> {
        self.opt(col).ok_or_else(|| self.err(col, format!("`{name}` must not be empty")))
    }

    fn opt_f64(&self, col: usize, name: &str) -> Result<Option<f64>, DataError> {
        self.opt(col)
            .map(|s| match s.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(self.err(col, format!("`{name}` must be a finite number, got `{s}`"))),
            })
            .transpose()
    }

    fn f64(&self, col: usize, name: &str) -> Result<f64, DataError> {
        self.opt_f64(col, name)?
            .ok_or_else(|| self.err(col, format!("`{name}` must not be empty")))
    }

    fn opt_u32(&self, col: usize, name: &str) -> Result<Option<u32>, DataError> {
        self.opt(col)
            .map(|s| {
                s.parse::<u32>()
                    .map_err(|_| self.err(col, format!("`{name}` must be a non-negative integer, got `{s}`")))
            })
            .transpose()
    }

    fn model(&self, e: ModelError) -> DataError {
        parse_err(self.file, self.line, None, e.to_string())
    }

    fn integrity(&self, kind: IntegrityKind, ids: &[&str]) -> DataError {
        DataError::Integrity(IntegrityError {
            kind,
            file: self.file.to_owned(),
            line: Some(self.line),
            ids: ids.iter().map(|s| s.to_string()).collect(),
        })
    }
}

fn rows(t: &Table) -> impl Iterator<Item = Row<'_>> {
    t.rows.iter().map(move |(line, rec)| Row {
        file: &t.file,
        line: *line,
        rec,
    })
}

struct UserDraft {
    line: u64,
    mov_km: f64,
    weights: Option<SelfWeights>,
    interests: BTreeMap<String, f64>,
    friends: BTreeSet<UserId>,
    position: Option<GeoCircle>,
}

struct EventDraft {
    line: u64,
    themes: Vec<String>,
    types: Vec<String>,
    dist_km: Option<f64>,
    friends_count: Option<u32>,
    avg_rating: Option<f64>,
    location: Option<GeoCircle>,
    ratings: BTreeMap<UserId, f64>,
    participants: BTreeSet<UserId>,
}

fn register(vocab: &mut Vocabulary, row: &Row<'_>, col: usize, text: &str, kind: LabelKind) -> Result<String, DataError> {
    match vocab.register(text, kind) {
        Ok(l) => Ok(l.text().to_owned()),
        Err(ModelError::LabelKindConflict { text, .. }) => {
            Err(row.integrity(IntegrityKind::VocabularyConflict, &[&text]))
        }
        Err(e) => Err(row.err(col, e.to_string())),
    }
}

fn load_config(dir: &Path) -> Result<BundleConfig, DataError> {
    let path = dir.join("config.toml");
    if !path.is_file() {
        return Ok(BundleConfig::default());
    }
    let text = read_text(&path, "config.toml")?;
    let cfg: BundleConfig = toml::from_str(&text).map_err(|e| {
        let (line, col) = e.span().map_or((1, 1), |s| line_col(&text, s.start));
        parse_err("config.toml", line, Some(col), e.message().to_owned())
    })?;
    cfg.validate()
        .map_err(|e| parse_err("config.toml", 1, None, e.to_string()))?;
    Ok(cfg)
}

/// Loads and validates the bundle in `dir`. The first problem found is
/// reported with its file, line and, where it applies, column.
pub fn load_bundle(dir: impl AsRef<Path>) -> Result<DatasetBundle, DataError> {
    let dir = dir.as_ref();
    if !dir.is_dir() {
        return Err(DataError::io(dir, "not a directory"));
    }
    let config = load_config(dir)?;
    let cfg = &config.scoring;
    let mut vocab = Vocabulary::new();
    let mut warnings = Vec::new();

    // events
    let events_t = read_table(dir, "events.csv", &EVENTS_HEADER, true)?.expect("required");
    let mut event_order: Vec<EventId> = Vec::new();
    let mut events: BTreeMap<EventId, EventDraft> = BTreeMap::new();
    for row in rows(&events_t) {
        let id = EventId::new(row.text(0, "event_id")?);
        if events.contains_key(&id) {
            return Err(row.integrity(IntegrityKind::DuplicateEvent, &[id.as_str()]));
        }
        let mut labels = |col: usize, name: &str, kind| -> Result<Vec<String>, DataError> {
            let raw = row.text(col, name)?;
            raw.split(';')
                .map(|t| register(&mut vocab, &row, col, t, kind))
                .collect()
        };
        let themes = labels(1, "themes", LabelKind::Theme)?;
        let types = labels(2, "event_type", LabelKind::Type)?;
        let draft = EventDraft {
            line: row.line,
            themes,
            types,
            dist_km: row.opt_f64(3, "dist_km")?,
            friends_count: row.opt_u32(4, "friends_count")?,
            avg_rating: row.opt_f64(5, "avg_rating")?,
            location: None,
            ratings: BTreeMap::new(),
            participants: BTreeSet::new(),
        };
        event_order.push(id.clone());
        events.insert(id, draft);
    }

    // users
    let users_t = read_table(dir, "users.csv", &USERS_HEADER, true)?.expect("required");
    let mut user_order: Vec<UserId> = Vec::new();
    let mut users: BTreeMap<UserId, UserDraft> = BTreeMap::new();
    for row in rows(&users_t) {
        let id = UserId::new(row.text(0, "user_id")?);
        if users.contains_key(&id) {
            return Err(row.integrity(IntegrityKind::DuplicateUser, &[id.as_str()]));
        }
        let w = [
            row.opt_f64(2, "w_rat")?,
            row.opt_f64(3, "w_rch")?,
            row.opt_f64(4, "w_frn")?,
        ];
        let weights = match w {
            [Some(rat), Some(rch), Some(frn)] => Some(SelfWeights { rat, rch, frn }),
            [None, None, None] => None,
            _ => {
                let col = w.iter().position(Option::is_none).expect("one is missing") + 2;
                return Err(row.err(col, "self weights must be given all together or not at all"));
            }
        };
        users.insert(
            id.clone(),
            UserDraft {
                line: row.line,
                mov_km: row.f64(1, "mov_km")?,
                weights,
                interests: BTreeMap::new(),
                friends: BTreeSet::new(),
                position: None,
            },
        );
        user_order.push(id);
    }

    let user_mut = |users: &mut BTreeMap<UserId, UserDraft>, row: &Row<'_>, col: usize| -> Result<UserId, DataError> {
        let id = UserId::new(row.text(col, "user_id")?);
        if users.contains_key(&id) {
            Ok(id)
        } else {
            Err(row.integrity(IntegrityKind::UnknownUser, &[id.as_str()]))
        }
    };

    if let Some(t) = read_table(dir, "interests.csv", &INTERESTS_HEADER, true)? {
        for row in rows(&t) {
            let uid = user_mut(&mut users, &row, 0)?;
            let kind = match row.text(2, "kind")? {
                "theme" => LabelKind::Theme,
                "type" => LabelKind::Type,
                other => return Err(row.err(2, format!("kind must be `theme` or `type`, got `{other}`"))),
            };
            let label = register(&mut vocab, &row, 1, row.text(1, "label")?, kind)?;
            let value = row.f64(3, "value")?;
            let draft = users.get_mut(&uid).expect("checked");
            if draft.interests.insert(label.clone(), value).is_some() {
                return Err(row.integrity(IntegrityKind::DuplicateEntry, &[uid.as_str(), &label]));
            }
        }
    }

    if let Some(t) = read_table(dir, "locations.csv", &LOCATIONS_HEADER, false)? {
        let mut seen = BTreeSet::new();
        for row in rows(&t) {
            let kind = row.text(0, "kind")?;
            let id = row.text(1, "id")?;
            let circle = GeoCircle::new(
                row.f64(2, "x_km")?,
                row.f64(3, "y_km")?,
                row.f64(4, "radius_km")?,
            )
            .map_err(|e| row.model(e))?;
            if !seen.insert((kind.to_owned(), id.to_owned())) {
                return Err(row.integrity(IntegrityKind::DuplicateEntry, &[kind, id]));
            }
            match kind {
                "user" => {
                    let d = users
                        .get_mut(&UserId::new(id))
                        .ok_or_else(|| row.integrity(IntegrityKind::UnknownUser, &[id]))?;
                    d.position = Some(circle);
                }
                "event" => {
                    let d = events
                        .get_mut(&EventId::new(id))
                        .ok_or_else(|| row.integrity(IntegrityKind::UnknownEvent, &[id]))?;
                    d.location = Some(circle);
                }
                other => return Err(row.err(0, format!("kind must be `user` or `event`, got `{other}`"))),
            }
        }
    }

    if let Some(t) = read_table(dir, "friends.csv", &FRIENDS_HEADER, false)? {
        for row in rows(&t) {
            let uid = user_mut(&mut users, &row, 0)?;
            let fid = UserId::new(row.text(1, "friend_id")?);
            if fid == uid {
                return Err(row.integrity(IntegrityKind::SelfFriend, &[uid.as_str()]));
            }
            if !users.get_mut(&uid).expect("checked").friends.insert(fid.clone()) {
                return Err(row.integrity(IntegrityKind::DuplicateEntry, &[uid.as_str(), fid.as_str()]));
            }
        }
    }

    let event_mut = |events: &mut BTreeMap<EventId, EventDraft>, row: &Row<'_>| -> Result<EventId, DataError> {
        let id = EventId::new(row.text(0, "event_id")?);
        if events.contains_key(&id) {
            Ok(id)
        } else {
            Err(row.integrity(IntegrityKind::UnknownEvent, &[id.as_str()]))
        }
    };

    if let Some(t) = read_table(dir, "participants.csv", &PARTICIPANTS_HEADER, false)? {
        for row in rows(&t) {
            let eid = event_mut(&mut events, &row)?;
            let uid = UserId::new(row.text(1, "user_id")?);
            if !events.get_mut(&eid).expect("checked").participants.insert(uid.clone()) {
                return Err(row.integrity(IntegrityKind::DuplicateEntry, &[eid.as_str(), uid.as_str()]));
            }
        }
    }

    if let Some(t) = read_table(dir, "ratings.csv", &RATINGS_HEADER, false)? {
        for row in rows(&t) {
            let eid = event_mut(&mut events, &row)?;
            let uid = UserId::new(row.text(1, "user_id")?);
            let r = row.f64(2, "rating")?;
            if !cfg.rating.contains(r) {
                return Err(row.err(
                    2,
                    format!("rating {r} lies outside [{}, {}]", cfg.rating.lb(), cfg.rating.ub()),
                ));
            }
            if events.get_mut(&eid).expect("checked").ratings.insert(uid.clone(), r).is_some() {
                return Err(row.integrity(IntegrityKind::DuplicateEntry, &[eid.as_str(), uid.as_str()]));
            }
        }
    }

    let mut built_events = Vec::with_capacity(event_order.len());
    for id in event_order {
        let d = events.remove(&id).expect("present");
        let at = |kind| {
            DataError::Integrity(IntegrityError {
                kind,
                file: "events.csv".into(),
                line: Some(d.line),
                ids: vec![id.to_string()],
            })
        };
        let mut b = Event::builder(id.clone())
            .themes(d.themes.iter().map(String::as_str));
        if let Some(n) = d.friends_count {
            b = b.friends_count(n);
        }
        for t in &d.types {
            b = b.event_type(t);
        }
        b = match (d.dist_km, d.location) {
            (Some(dist), None) => b.distance(dist, config.event_radius_km),
            (None, Some(c)) => b.location(c),
            (Some(_), Some(_)) => return Err(at(IntegrityKind::PlacementConflict)),
            (None, None) => return Err(at(IntegrityKind::PlacementMissing)),
        };
        if let Some(r) = d.avg_rating {
            b = b.avg_rating(r);
        }
        for (u, r) in &d.ratings {
            b = b.rating(u.clone(), *r);
        }
        for u in &d.participants {
            b = b.participant(u.clone());
        }
        let e = b
            .build(cfg)
            .map_err(|e| parse_err("events.csv", d.line, None, e.to_string()))?;
        warnings.extend(e.warnings().iter().map(ToString::to_string));
        built_events.push(e);
    }

    let mut built_users = Vec::with_capacity(user_order.len());
    for id in user_order {
        let d = users.remove(&id).expect("present");
        let mut b = UserProfile::builder(id.clone())
            .position(d.position.unwrap_or(GeoCircle {
                x_km: 0.0,
                y_km: 0.0,
                radius_km: config.user_radius_km,
            }))
            .mov_km(d.mov_km);
        for (l, v) in &d.interests {
            b = b.interest(l, *v);
        }
        for f in &d.friends {
            b = b.friend(f.clone());
        }
        if let Some(w) = d.weights {
            b = b.self_weights(w);
        }
        built_users.push(
            b.build(cfg)
                .map_err(|e| parse_err("users.csv", d.line, None, e.to_string()))?,
        );
    }

    let event_ids: BTreeSet<&EventId> = built_events.iter().map(|e| e.id()).collect();
    let user_ids: BTreeSet<&UserId> = built_users.iter().map(|u| u.id()).collect();
    let mut responses = Vec::new();
    if let Some(t) = read_table(dir, "responses.csv", &RESPONSES_HEADER, true)? {
        let mut seen = BTreeSet::new();
        for row in rows(&t) {
            let uid = UserId::new(row.text(0, "user_id")?);
            let eid = EventId::new(row.text(1, "event_id")?);
            if !user_ids.contains(&uid) {
                return Err(row.integrity(IntegrityKind::UnknownUser, &[uid.as_str()]));
            }
            if !event_ids.contains(&eid) {
                return Err(row.integrity(IntegrityKind::UnknownEvent, &[eid.as_str()]));
            }
            if !seen.insert((uid.clone(), eid.clone())) {
                return Err(row.integrity(IntegrityKind::DuplicateResponse, &[uid.as_str(), eid.as_str()]));
            }
            let score_init = row.opt_f64(2, "score_init")?;
            let score_fin = row.f64(3, "score_fin")?;
            for (col, v) in [(2, score_init), (3, Some(score_fin))] {
                if let Some(v) = v {
                    if !cfg.score.contains(v) {
                        return Err(row.err(
                            col,
                            format!("score {v} lies outside [{}, {}]", cfg.score.lb(), cfg.score.ub()),
                        ));
                    }
                }
            }
            responses.push(Response {
                user_id: uid,
                event_id: eid,
                score_init,
                score_fin,
            });
        }
    }

    Ok(DatasetBundle {
        config,
        vocabulary: vocab,
        events: built_events,
        users: built_users,
        responses,
        warnings,
    })
}
