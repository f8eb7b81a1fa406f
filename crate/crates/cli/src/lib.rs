//! Command-line driver and HTTP service around `evrec-core`.

pub mod cli;
pub mod run;
pub mod service;
pub mod view;

use evrec_core::dataio::ModelFile;
use evrec_core::experiments::ExperimentReport;
use evrec_core::regression::Regime;

/// Averaged model of every regime in `report` that fitted at least once.
pub fn averaged_models(report: &ExperimentReport, prefix: &str, cfg: &evrec_core::model::ScoringConfig) -> Vec<ModelFile> {
    report
        .regimes
        .iter()
        .filter_map(|spec| {
            let function = report.averaged_model(spec.regime)?;
            let fitted = report
                .pieces(spec.regime)
                .iter()
                .map(|p| p.splits.iter().flatten().count())
                .min()
                .unwrap_or(0);
            let mut m = ModelFile::new(model_id(prefix, spec.regime), function, cfg.clone());
            m.regime = Some(spec.regime);
            m.seed = Some(report.plan.seed);
            m.metadata.insert("source".into(), "mean of per-split fits".into());
            m.metadata.insert("fitted_splits".into(), fitted.to_string());
            m.metadata.insert("n_splits".into(), report.plan.n_splits.to_string());
            m.metadata.insert("train_pool".into(), report.n_train_pool.to_string());
            Some(m)
        })
        .collect()
}

pub fn model_id(prefix: &str, regime: Regime) -> String {
    if prefix.is_empty() {
        regime.name().to_owned()
    } else {
        format!("{prefix}-{}", regime.name())
    }
}
