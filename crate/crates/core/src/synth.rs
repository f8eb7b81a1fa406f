//! Synthetic survey data with a known generating scoring function.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dataio::{BundleConfig, DatasetBundle, Response};
use crate::model::{Event, EventId, LabelKind, SelfWeights, UserId, UserProfile, Vocabulary};
use crate::presets;
use crate::regression::Sample;
use crate::scoring::{
    combined_user_factor, features, friends_factor, CombineMode, FactorVector, ScoringFunction,
};

pub const THEMES: [&str; 11] = [
    "fish", "coffee", "wine", "beer", "cheese", "cold cuts", "oil", "meat", "chocolate",
    "fruit and vegetables", "bread",
];
pub const TYPES: [&str; 6] = ["workshop", "tasting", "debate", "dinner", "meeting", "cooking course"];

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_users: usize,
    pub n_events: usize,
    /// Standard deviation of the Gaussian noise added to every score.
    pub noise_sd: f64,
    /// Generates the full-information score.
    pub truth: ScoringFunction,
    /// Generates the content-only score; `None` leaves it empty.
    pub init_truth: Option<ScoringFunction>,
}

impl SynthConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            n_users: 200,
            n_events: 15,
            noise_sd: 0.5,
            truth: presets::sigma_x(),
            init_truth: Some(presets::sigma_init_0()),
        }
    }
}

fn weights(rng: &mut ChaCha8Rng) -> SelfWeights {
    loop {
        let w = SelfWeights {
            rat: rng.random_range(0..=10) as f64,
            rch: rng.random_range(0..=10) as f64,
            frn: rng.random_range(0..=10) as f64,
        };
        if w.sum() > 0.0 {
            return w;
        }
    }
}

/// `n` samples with factors drawn independently: `thi`, `tyi`, `rat` and
/// `rch` uniform on the score scale, `frn` from a uniform friend count in
/// `0..=10`. Scores are the generating functions plus noise, unclamped.
pub fn synth_samples(cfg: &SynthConfig, n: usize) -> Vec<Sample> {
    let scoring = crate::model::ScoringConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = Normal::new(0.0, cfg.noise_sd).expect("finite sd");
    let user = UserProfile::builder("synthetic").self_weights(weights(&mut rng));
    (0..n)
        .map(|i| {
            let fv = FactorVector {
                thi: rng.random_range(0.0..=10.0),
                tyi: rng.random_range(0.0..=10.0),
                rat: rng.random_range(0.0..=10.0),
                rch: rng.random_range(0.0..=10.0),
                frn: friends_factor(rng.random_range(0..=10), &scoring),
            };
            let u = user
                .clone()
                .self_weights(weights(&mut rng))
                .build(&scoring)
                .expect("weights in range");
            let mut s = Sample {
                user_id: UserId::new(format!("u{:05}", i / 15)),
                event_id: EventId::new(format!("o{:02}", i % 15 + 1)),
                factors: fv,
                u_abs: combined_user_factor(&u, &fv, CombineMode::Abs, &scoring).ok(),
                u_rel: combined_user_factor(&u, &fv, CombineMode::Rel, &scoring).ok(),
                score_init: None,
                score_fin: 0.0,
            };
            s.score_fin = cfg.truth.score(&s).expect("factors present") + noise.sample(&mut rng);
            s.score_init = cfg
                .init_truth
                .as_ref()
                .map(|f| f.score(&s).expect("factors present") + noise.sample(&mut rng));
            s
        })
        .collect()
}

/// A complete survey-style bundle: `n_events` events with one to three
/// themes, a type, a distance, a friend count and an average rating; users
/// with integer interests in every label, a willingness to move and self
/// weights; and a response from every user to every event. Scores are
/// clamped to the score scale as a survey answer would be.
pub fn synth_bundle(cfg: &SynthConfig) -> DatasetBundle {
    let config = BundleConfig::default();
    let sc = &config.scoring;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = Normal::new(0.0, cfg.noise_sd).expect("finite sd");
    let mut vocabulary = Vocabulary::new();
    for t in THEMES {
        vocabulary.register(t, LabelKind::Theme).expect("disjoint");
    }
    for t in TYPES {
        vocabulary.register(t, LabelKind::Type).expect("disjoint");
    }

    let events: Vec<Event> = (0..cfg.n_events)
        .map(|i| {
            let n_themes = rng.random_range(1..=3);
            let mut b = Event::builder(format!("o{:02}", i + 1));
            for _ in 0..n_themes {
                b = b.theme(THEMES[rng.random_range(0..THEMES.len())]);
            }
            let dist = if rng.random_bool(0.5) {
                0.0
            } else {
                rng.random_range(1..=80) as f64
            };
            b.event_type(TYPES[rng.random_range(0..TYPES.len())])
                .distance(dist, config.event_radius_km)
                .friends_count(rng.random_range(0..=10))
                .avg_rating(rng.random_range(1..=10) as f64)
                .build(sc)
                .expect("valid by construction")
        })
        .collect();

    let users: Vec<UserProfile> = (0..cfg.n_users)
        .map(|i| {
            let mut b = UserProfile::builder(format!("u{:04}", i + 1))
                .mov_km(rng.random_range(5..=100) as f64)
                .self_weights(weights(&mut rng));
            for l in THEMES.iter().chain(&TYPES) {
                b = b.interest(l, rng.random_range(0..=10) as f64);
            }
            b.build(sc).expect("valid by construction")
        })
        .collect();

    let clamp = |v: f64| v.clamp(sc.score.lb(), sc.score.ub());
    let mut responses = Vec::new();
    for u in &users {
        for o in &events {
            let f = features(u, o, sc).expect("every label has an interest");
            let score_fin = clamp(cfg.truth.score(&f).expect("factors present") + noise.sample(&mut rng));
            let score_init = cfg
                .init_truth
                .as_ref()
                .map(|t| clamp(t.score(&f).expect("factors present") + noise.sample(&mut rng)));
            responses.push(Response {
                user_id: u.id().clone(),
                event_id: o.id().clone(),
                score_init,
                score_fin,
            });
        }
    }

    DatasetBundle {
        config,
        vocabulary,
        events,
        users,
        responses,
        warnings: Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::build_samples;

    #[test]
    fn samples_are_deterministic_and_noisy() {
        let cfg = SynthConfig::new(3);
        let a = synth_samples(&cfg, 100);
        assert_eq!(a, synth_samples(&cfg, 100));
        let resid: Vec<f64> = a
            .iter()
            .map(|s| s.score_fin - cfg.truth.score(s).unwrap())
            .collect();
        let sd = crate::stats::sample_sd(&resid);
        assert!((0.35..0.65).contains(&sd), "sd {sd}");
        assert!(a.iter().all(|s| s.u_abs.is_some() && s.u_rel.is_some()));
    }

    #[test]
    fn bundle_has_complete_responses() {
        let cfg = SynthConfig {
            n_users: 10,
            ..SynthConfig::new(5)
        };
        let b = synth_bundle(&cfg);
        assert_eq!(b.events.len(), 15);
        assert_eq!(b.responses.len(), 150);
        let set = build_samples(&b);
        assert_eq!(set.samples.len(), 150);
        assert!(set.rejects.is_empty());
        assert!(b.responses.iter().all(|r| (0.0..=10.0).contains(&r.score_fin)));
    }
}
