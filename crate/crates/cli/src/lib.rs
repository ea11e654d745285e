//! Command-line pipeline and prediction service for the `rbnma` engine.
//!
//! Artifacts live under one directory:
//!
//! ```text
//! artifacts/
//!   stage1/             model.json draws.tsv coefficients.tsv diagnostics.tsv
//!   stage1_validation/  calibration.tsv optimism.tsv optimism.json
//!   stage2/             model.json draws.tsv coefficients.tsv calibration.tsv
//!   stage2_compare/     comparison.tsv calibration_<method>.tsv
//!   stage3/             summary.tsv ecological_gap.tsv effects.json contexts.json meta.json
//!   predict/ curve/ strata/ recovery/
//! ```
//!
//! Every directory also holds `resolved_config.toml` and `warnings.json`;
//! failures write `error.json` at the artifact root.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod service;
