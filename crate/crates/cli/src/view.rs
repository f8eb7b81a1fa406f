use std::collections::BTreeMap;
use std::fmt::Write as _;

use evrec_core::dataio::DatasetBundle;
use evrec_core::model::{EventId, UserId, UserProfile};
use evrec_core::scoring::{rank, Attribute, AttributeSource, FactorVector, RankFailure, ScoringFunction};
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankRow {
    pub rank: usize,
    pub event_id: EventId,
    pub score: f64,
    pub factors: FactorVector,
    pub u_abs: Option<f64>,
    pub u_rel: Option<f64>,
    /// Intercept of the piece that scored this event.
    pub intercept: f64,
    /// Coefficient times attribute value, per attribute the piece uses.
    pub contributions: BTreeMap<Attribute, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankView {
    pub user_id: UserId,
    pub scored: Vec<RankRow>,
    pub failed: Vec<RankFailure>,
}

/// Ranks every event of `bundle` for `user` under `f`. The CLI and the
/// HTTP service both go through here.
pub fn rank_view(bundle: &DatasetBundle, user: &UserProfile, f: &ScoringFunction) -> RankView {
    let ranking = rank(user, &bundle.events, f, &bundle.config.scoring);
    let scored = ranking
        .scored
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            let piece = f.select(&r.features).expect("event was scored");
            let contributions = piece
                .coefficients
                .iter()
                .map(|(&a, &w)| (a, w * r.features.attribute(a).expect("event was scored")))
                .collect();
            RankRow {
                rank: i + 1,
                event_id: r.event_id,
                score: r.score,
                factors: r.features.factors,
                u_abs: r.features.u_abs,
                u_rel: r.features.u_rel,
                intercept: piece.intercept,
                contributions,
            }
        })
        .collect();
    RankView {
        user_id: user.id().clone(),
        scored,
        failed: ranking.failed,
    }
}

/// Fixed-width table; with `top` only the first `top` scored rows and no
/// failures are printed.
pub fn render_table(view: &RankView, top: Option<usize>) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:>4}  {:<16} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}",
        "rank", "event", "score", "thi", "tyi", "rat", "rch", "frn"
    );
    for r in view.scored.iter().take(top.unwrap_or(usize::MAX)) {
        let f = &r.factors;
        let _ = writeln!(
            out,
            "{:>4}  {:<16} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.4}",
            r.rank,
            r.event_id.as_str(),
            r.score,
            f.thi,
            f.tyi,
            f.rat,
            f.rch,
            f.frn
        );
    }
    if top.is_none() {
        for e in &view.failed {
            let _ = writeln!(out, "{:>4}  {:<16} {}", "-", e.event_id.as_str(), e.error);
        }
    }
    out
}
