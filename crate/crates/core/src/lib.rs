//! Event recommendation by a linear combination of five per-user factors,
//! plus the tooling to learn and compare such scoring functions from survey
//! responses.

pub mod dataio;
pub mod experiments;
pub mod model;
pub mod presets;
pub mod regression;
pub mod scoring;
pub mod stats;
pub mod synth;
