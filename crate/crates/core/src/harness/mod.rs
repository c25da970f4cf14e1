//! Experiment plumbing: configuration files, seeded sweeps, CSV logs,
//! SVG plots and normalized scores.

pub mod config;
pub mod logio;
pub mod plot;
pub mod sweep;

pub use config::{
    AgentKind, ExperimentConfig, ExperimentSection, HyperParams, ScheduleKind, SchedulerSection,
};
pub use logio::{
    content_hash, read_rows, rows_from_csv, rows_to_csv, write_rows, Manifest, CSV_HEADER,
};
pub use plot::{plot, plot_svg, quantities, Series};
pub use sweep::{
    ablation, ablation_configs, mean_std, run, run_all, run_seed, run_seeds, sweep, AblationAxis,
    RunArtifacts, ScheduleVariant, SeedScore, SweepResult,
};

use crate::error::{Error, Result};

/// `(score - worst) / (best - worst)`.
pub fn normalize_score(worst: f64, best: f64, score: f64) -> Result<f64> {
    if best == worst {
        return Err(Error::DegenerateRange(best));
    }
    Ok((score - worst) / (best - worst))
}

/// Normalizes `scores` against the worst and best of the fixed-target `baselines`.
pub fn normalize(baselines: &[f64], scores: &[f64]) -> Result<Vec<f64>> {
    if baselines.len() < 2 {
        return Err(Error::InsufficientData {
            need: 2,
            have: baselines.len(),
        });
    }
    let worst = baselines.iter().copied().fold(f64::INFINITY, f64::min);
    let best = baselines.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    scores
        .iter()
        .map(|&s| normalize_score(worst, best, s))
        .collect()
}
