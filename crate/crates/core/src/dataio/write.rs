use std::fs;
use std::path::Path;

use csv::Writer;

use super::{
    DataError, DatasetBundle, EVENTS_HEADER, FRIENDS_HEADER, INTERESTS_HEADER, LOCATIONS_HEADER,
    PARTICIPANTS_HEADER, RATINGS_HEADER, RESPONSES_HEADER, USERS_HEADER,
};
use crate::model::{LabelKind, Placement};

fn num(v: f64) -> String {
    format!("{v}")
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

struct Out<'a> {
    dir: &'a Path,
}

impl Out<'_> {
    fn table(&self, file: &str, header: &[&str], rows: Vec<Vec<String>>, always: bool) -> Result<(), DataError> {
        if rows.is_empty() && !always {
            return Ok(());
        }
        let path = self.dir.join(file);
        let err = |e: csv::Error| DataError::io(&path, e);
        let mut w = Writer::from_path(&path).map_err(err)?;
        w.write_record(header).map_err(err)?;
        for r in rows {
            w.write_record(&r).map_err(err)?;
        }
        w.flush().map_err(|e| DataError::io(&path, e))
    }
}

/// Writes `bundle` into `dir` so that [`super::load_bundle`] reads it back
/// unchanged. Optional tables are only written when they have rows.
pub fn write_bundle(dir: impl AsRef<Path>, bundle: &DatasetBundle) -> Result<(), DataError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| DataError::io(dir, e))?;
    let out = Out { dir };
    let cfg = &bundle.config;

    let config = toml::to_string(cfg).map_err(|e| DataError::Invalid(e.to_string()))?;
    let path = dir.join("config.toml");
    fs::write(&path, config).map_err(|e| DataError::io(&path, e))?;

    let mut events = Vec::new();
    let mut locations = Vec::new();
    let mut participants = Vec::new();
    let mut ratings = Vec::new();
    for e in &bundle.events {
        let dist = match e.placement() {
            Placement::Precomputed { distance_km, radius_km } => {
                if *radius_km != cfg.event_radius_km {
                    return Err(DataError::Invalid(format!(
                        "event `{}` has radius {radius_km} but the bundle stores {} for all distance-placed events",
                        e.id(),
                        cfg.event_radius_km
                    )));
                }
                num(*distance_km)
            }
            Placement::Geometric(c) => {
                locations.push(vec![
                    "event".into(),
                    e.id().to_string(),
                    num(c.x_km),
                    num(c.y_km),
                    num(c.radius_km),
                ]);
                String::new()
            }
        };
        let join = |s: &std::collections::BTreeSet<String>| s.iter().cloned().collect::<Vec<_>>().join(";");
        events.push(vec![
            e.id().to_string(),
            join(e.themes()),
            join(e.types()),
            dist,
            opt(e.friends_count()),
            opt(e.avg_rating_input().map(num)),
        ]);
        for p in e.participants() {
            participants.push(vec![e.id().to_string(), p.to_string()]);
        }
        for (u, r) in e.raters() {
            ratings.push(vec![e.id().to_string(), u.to_string(), num(*r)]);
        }
    }

    let mut users = Vec::new();
    let mut interests = Vec::new();
    let mut friends = Vec::new();
    for u in &bundle.users {
        let w = u.self_weights();
        users.push(vec![
            u.id().to_string(),
            num(u.mov_km()),
            opt(w.map(|w| num(w.rat))),
            opt(w.map(|w| num(w.rch))),
            opt(w.map(|w| num(w.frn))),
        ]);
        let p = u.position();
        if (p.x_km, p.y_km, p.radius_km) != (0.0, 0.0, cfg.user_radius_km) {
            locations.push(vec![
                "user".into(),
                u.id().to_string(),
                num(p.x_km),
                num(p.y_km),
                num(p.radius_km),
            ]);
        }
        for (label, v) in u.interests() {
            let kind = match bundle.vocabulary.kind_of(label) {
                Some(LabelKind::Type) => "type",
                _ => "theme",
            };
            interests.push(vec![u.id().to_string(), label.clone(), kind.into(), num(*v)]);
        }
        for f in u.friends() {
            friends.push(vec![u.id().to_string(), f.to_string()]);
        }
    }

    let responses = bundle
        .responses
        .iter()
        .map(|r| {
            vec![
                r.user_id.to_string(),
                r.event_id.to_string(),
                opt(r.score_init.map(num)),
                num(r.score_fin),
            ]
        })
        .collect();

    out.table("events.csv", &EVENTS_HEADER, events, true)?;
    out.table("users.csv", &USERS_HEADER, users, true)?;
    out.table("interests.csv", &INTERESTS_HEADER, interests, true)?;
    out.table("responses.csv", &RESPONSES_HEADER, responses, true)?;
    out.table("locations.csv", &LOCATIONS_HEADER, locations, false)?;
    out.table("friends.csv", &FRIENDS_HEADER, friends, false)?;
    out.table("participants.csv", &PARTICIPANTS_HEADER, participants, false)?;
    out.table("ratings.csv", &RATINGS_HEADER, ratings, false)?;
    Ok(())
}
