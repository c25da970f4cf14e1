//! Seeded runs, sweeps and ablations.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::{train, RunLog, SacAgent, SqlAgent};
use crate::envs::{make_env, Environment};
use crate::error::{Error, Result};

use super::config::{AgentKind, ExperimentConfig, ScheduleKind};
use super::logio::{content_hash, rows_to_csv, Manifest, ManifestRun};

/// Trains one agent for one seed.
pub fn run_seed(config: &ExperimentConfig, seed: u64) -> Result<RunLog> {
    let mut env = make_env(&config.experiment.env)?;
    let spec = env.spec().clone();
    let controller = config.controller(&spec)?;
    let train_config = config.train_config(seed);
    match config.experiment.agent {
        AgentKind::Sac => {
            let mut agent = SacAgent::new(&spec, &config.sac_config(), controller, seed)?;
            train(&mut agent, &mut env, &train_config)
        }
        AgentKind::Sql => {
            let mut agent = SqlAgent::new(&spec, &config.sql_config(), controller, seed)?;
            train(&mut agent, &mut env, &train_config)
        }
    }
}

/// Runs every (config, seed) pair in parallel; results come back grouped per
/// config and sorted by seed.
pub fn run_all(configs: &[ExperimentConfig]) -> Result<Vec<Vec<(u64, RunLog)>>> {
    let mut jobs: Vec<(usize, u64)> = Vec::new();
    for (i, config) in configs.iter().enumerate() {
        config.validate()?;
        let mut seeds = config.experiment.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        jobs.extend(seeds.into_iter().map(|s| (i, s)));
    }
    let done: Vec<(usize, u64, RunLog)> = jobs
        .into_par_iter()
        .map(|(i, seed)| run_seed(&configs[i], seed).map(|log| (i, seed, log)))
        .collect::<Result<_>>()?;
    let mut grouped: Vec<Vec<(u64, RunLog)>> = vec![Vec::new(); configs.len()];
    for (i, seed, log) in done {
        grouped[i].push((seed, log));
    }
    for group in &mut grouped {
        group.sort_by_key(|(seed, _)| *seed);
    }
    Ok(grouped)
}

pub fn run_seeds(config: &ExperimentConfig) -> Result<Vec<(u64, RunLog)>> {
    Ok(run_all(std::slice::from_ref(config))?.remove(0))
}

#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub manifest: PathBuf,
    pub csvs: Vec<PathBuf>,
    pub logs: Vec<(u64, RunLog)>,
}

pub fn csv_name(config: &ExperimentConfig, seed: u64) -> String {
    format!("{}-seed{}.csv", config.label(), seed)
}

/// Writes one CSV per seed plus `manifest.json` into `out_dir`.
pub fn write_run(
    config: &ExperimentConfig,
    logs: Vec<(u64, RunLog)>,
    out_dir: &Path,
) -> Result<RunArtifacts> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut csvs = Vec::with_capacity(logs.len());
    let mut runs = Vec::with_capacity(logs.len());
    for (seed, log) in &logs {
        let name = csv_name(config, *seed);
        let text = rows_to_csv(&log.rows)?;
        let path = out_dir.join(&name);
        std::fs::write(&path, &text).map_err(|e| Error::io(&path, e))?;
        runs.push(ManifestRun {
            seed: *seed,
            csv: PathBuf::from(name),
            csv_hash: content_hash(text.as_bytes()),
        });
        csvs.push(path);
    }
    let resolved = config.to_toml_string()?;
    let manifest = Manifest {
        label: config.label(),
        config_hash: content_hash(resolved.as_bytes()),
        config: config.clone(),
        runs,
    };
    let manifest_path = out_dir.join("manifest.json");
    manifest.write(&manifest_path)?;
    Ok(RunArtifacts {
        manifest: manifest_path,
        csvs,
        logs,
    })
}

/// Trains every seed and writes the artifacts.
pub fn run(config: &ExperimentConfig, out_dir: &Path) -> Result<RunArtifacts> {
    let logs = run_seeds(config)?;
    write_run(config, logs, out_dir)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedScore {
    pub seed: u64,
    pub final_return: f64,
    /// Evaluation return at each logged step.
    pub returns: Vec<f64>,
}

/// Per-seed scores for one configuration with cross-seed statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub label: String,
    pub steps: Vec<u64>,
    pub seeds: Vec<SeedScore>,
    pub mean_final: f64,
    /// Sample standard deviation; absent with fewer than two seeds.
    pub std_final: Option<f64>,
    pub mean_returns: Vec<f64>,
    pub std_returns: Option<Vec<f64>>,
}

/// Mean and sample standard deviation (`None` for fewer than two values).
pub fn mean_std(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, None);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, None);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, Some(var.sqrt()))
}

impl SweepResult {
    pub fn from_logs(label: impl Into<String>, logs: &[(u64, RunLog)]) -> Result<Self> {
        let mut logs: Vec<&(u64, RunLog)> = logs.iter().collect();
        logs.sort_by_key(|(seed, _)| *seed);
        let first = logs
            .first()
            .ok_or(Error::InsufficientData { need: 1, have: 0 })?;
        let steps: Vec<u64> = first.1.rows.iter().map(|r| r.step).collect();
        let mut seeds = Vec::with_capacity(logs.len());
        for (seed, log) in &logs {
            let these: Vec<u64> = log.rows.iter().map(|r| r.step).collect();
            if these != steps {
                return Err(Error::config("sweep", "runs do not share a step axis"));
            }
            let returns: Vec<f64> = log.rows.iter().map(|r| r.episode_return_mean).collect();
            seeds.push(SeedScore {
                seed: *seed,
                final_return: *returns.last().unwrap_or(&f64::NAN),
                returns,
            });
        }
        let finals: Vec<f64> = seeds.iter().map(|s| s.final_return).collect();
        let (mean_final, std_final) = mean_std(&finals);
        let per_step: Vec<(f64, Option<f64>)> = (0..steps.len())
            .map(|j| mean_std(&seeds.iter().map(|s| s.returns[j]).collect::<Vec<_>>()))
            .collect();
        let mean_returns = per_step.iter().map(|p| p.0).collect();
        let std_returns = per_step.iter().map(|p| p.1).collect::<Option<Vec<f64>>>();
        Ok(Self {
            label: label.into(),
            steps,
            seeds,
            mean_final,
            std_final,
            mean_returns,
            std_returns,
        })
    }
}

/// Runs all seeds of `config`, optionally writing artifacts, and summarises.
pub fn sweep(config: &ExperimentConfig, out_dir: Option<&Path>) -> Result<SweepResult> {
    let logs = run_seeds(config)?;
    let result = SweepResult::from_logs(config.label(), &logs)?;
    if let Some(dir) = out_dir {
        write_run(config, logs, dir)?;
        write_summary(&dir.join("summary.json"), std::slice::from_ref(&result))?;
    }
    Ok(result)
}

pub fn write_summary(path: &Path, results: &[SweepResult]) -> Result<()> {
    let mut text = serde_json::to_string_pretty(results)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScheduleVariant {
    Tes,
    Fixed,
    /// Constant target `C ln |A|`.
    Constant(f64),
}

impl std::fmt::Display for ScheduleVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ScheduleVariant::Tes => f.write_str("tes"),
            ScheduleVariant::Fixed => f.write_str("fixed"),
            ScheduleVariant::Constant(c) => write!(f, "constant-{c}"),
        }
    }
}

impl std::str::FromStr for ScheduleVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tes" => Ok(Self::Tes),
            "fixed" => Ok(Self::Fixed),
            _ => s
                .strip_prefix("constant-")
                .and_then(|c| c.parse().ok())
                .map(Self::Constant)
                .ok_or_else(|| {
                    Error::config(
                        "ablation.schedule_type",
                        format!("`{s}` is not tes, fixed or constant-<C>"),
                    )
                }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AblationAxis {
    StdThreshold(Vec<f64>),
    ScheduleType(Vec<ScheduleVariant>),
}

impl AblationAxis {
    pub const NAMES: [&'static str; 2] = ["std_threshold", "schedule_type"];

    /// `{0.03, 0.05, 0.07}`.
    pub fn std_threshold() -> Self {
        Self::StdThreshold(vec![0.03, 0.05, 0.07])
    }

    /// `{tes, fixed, constant-0.98, constant-0.5, constant-0.01}`.
    pub fn schedule_type() -> Self {
        Self::ScheduleType(vec![
            ScheduleVariant::Tes,
            ScheduleVariant::Fixed,
            ScheduleVariant::Constant(0.98),
            ScheduleVariant::Constant(0.5),
            ScheduleVariant::Constant(0.01),
        ])
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "std_threshold" => Ok(Self::std_threshold()),
            "schedule_type" => Ok(Self::schedule_type()),
            _ => Err(Error::config(
                "ablation.axis",
                format!("`{name}`; valid options: {}", Self::NAMES.join(", ")),
            )),
        }
    }

    fn len(&self) -> usize {
        match self {
            Self::StdThreshold(v) => v.len(),
            Self::ScheduleType(v) => v.len(),
        }
    }
}

/// One config per axis value, labelled by that value.
pub fn ablation_configs(
    config: &ExperimentConfig,
    axis: &AblationAxis,
) -> Result<Vec<(String, ExperimentConfig)>> {
    if axis.len() == 0 {
        return Err(Error::config("ablation.values", "axis has no values"));
    }
    let variants = match axis {
        AblationAxis::StdThreshold(values) => values
            .iter()
            .map(|&v| {
                let mut c = config.clone();
                c.scheduler.scheduler = ScheduleKind::Tes;
                c.scheduler.std_threshold = v;
                (format!("std_threshold-{v}"), c)
            })
            .collect::<Vec<_>>(),
        AblationAxis::ScheduleType(values) => values
            .iter()
            .map(|&v| {
                let mut c = config.clone();
                match v {
                    ScheduleVariant::Tes => c.scheduler.scheduler = ScheduleKind::Tes,
                    ScheduleVariant::Fixed => c.scheduler.scheduler = ScheduleKind::Fixed,
                    ScheduleVariant::Constant(k) => {
                        c.scheduler.scheduler = ScheduleKind::Constant;
                        c.scheduler.c = k;
                    }
                }
                (v.to_string(), c)
            })
            .collect(),
    };
    for (_, c) in &variants {
        c.validate()?;
    }
    Ok(variants)
}

/// Expands `config` along `axis` and sweeps every variant. With `out_dir`,
/// each variant is written to its own subdirectory.
pub fn ablation(
    config: &ExperimentConfig,
    axis: &AblationAxis,
    out_dir: Option<&Path>,
) -> Result<Vec<SweepResult>> {
    let variants = ablation_configs(config, axis)?;
    let configs: Vec<ExperimentConfig> = variants.iter().map(|(_, c)| c.clone()).collect();
    let grouped = run_all(&configs)?;
    let mut results = Vec::with_capacity(variants.len());
    for ((label, cfg), logs) in variants.into_iter().zip(grouped) {
        results.push(SweepResult::from_logs(label.clone(), &logs)?);
        if let Some(dir) = out_dir {
            write_run(&cfg, logs, &dir.join(&label))?;
        }
    }
    if let Some(dir) = out_dir {
        write_summary(&dir.join("summary.json"), &results)?;
    }
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::LogRow;

    fn log(returns: &[f64]) -> RunLog {
        RunLog {
            rows: returns
                .iter()
                .enumerate()
                .map(|(i, &r)| LogRow {
                    step: i as u64 * 10,
                    episode_return_mean: r,
                    policy_entropy: 0.0,
                    log_alpha: 0.0,
                    target_entropy: 0.0,
                    q_loss: 0.0,
                    pi_loss: 0.0,
                    alpha_loss: 0.0,
                    policy_shift_tv: 0.0,
                })
                .collect(),
            evaluations: Vec::new(),
        }
    }

    #[test]
    fn std_absent_for_single_seed() {
        let r = SweepResult::from_logs("x", &[(3, log(&[0.0, 1.0]))]).unwrap();
        assert_eq!(r.mean_final, 1.0);
        assert_eq!(r.std_final, None);
        assert_eq!(r.std_returns, None);
    }

    #[test]
    fn sample_std_and_seed_order() {
        let r =
            SweepResult::from_logs("x", &[(2, log(&[0.0, 3.0])), (1, log(&[0.0, 1.0]))]).unwrap();
        assert_eq!(r.seeds[0].seed, 1);
        assert_eq!(r.mean_final, 2.0);
        assert!((r.std_final.unwrap() - 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(r.mean_returns, vec![0.0, 2.0]);
    }

    #[test]
    fn mismatched_steps_rejected() {
        assert!(SweepResult::from_logs("x", &[(0, log(&[0.0])), (1, log(&[0.0, 1.0]))]).is_err());
    }

    #[test]
    fn schedule_variant_parse() {
        assert_eq!(
            "tes".parse::<ScheduleVariant>().unwrap(),
            ScheduleVariant::Tes
        );
        assert_eq!(
            "constant-0.5".parse::<ScheduleVariant>().unwrap(),
            ScheduleVariant::Constant(0.5)
        );
        assert!("linear".parse::<ScheduleVariant>().is_err());
        assert_eq!(ScheduleVariant::Constant(0.01).to_string(), "constant-0.01");
    }

    #[test]
    fn ablation_axes_expand() {
        let base = ExperimentConfig::new("gridworld5", AgentKind::Sac, vec![0]);
        let std = ablation_configs(&base, &AblationAxis::std_threshold()).unwrap();
        let values: Vec<f64> = std.iter().map(|(_, c)| c.scheduler.std_threshold).collect();
        assert_eq!(values, vec![0.03, 0.05, 0.07]);
        let sched = ablation_configs(&base, &AblationAxis::schedule_type()).unwrap();
        let labels: Vec<&str> = sched.iter().map(|(l, _)| l.as_str()).collect();
        assert_eq!(
            labels,
            [
                "tes",
                "fixed",
                "constant-0.98",
                "constant-0.5",
                "constant-0.01"
            ]
        );
    }

    #[test]
    fn empty_axis_is_config_error() {
        let base = ExperimentConfig::new("gridworld5", AgentKind::Sac, vec![0]);
        for axis in [
            AblationAxis::StdThreshold(vec![]),
            AblationAxis::ScheduleType(vec![]),
        ] {
            assert!(matches!(
                ablation_configs(&base, &axis),
                Err(Error::Config { .. })
            ));
        }
        assert!(AblationAxis::by_name("gamma").is_err());
    }
}
