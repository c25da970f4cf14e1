//! TOML experiment configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agents::{SacConfig, SqlConfig, TrainConfig, DEFAULT_INITIAL_ALPHA};
use crate::envs::{make_env, EnvSpec, Environment};
use crate::error::{Error, Result};
use crate::scheduler::{
    constant_target, FixedStepSchedule, SchedulerConfig, TargetEntropyController, TesScheduler,
    DEFAULT_INITIAL_FRACTION,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    Sac,
    Sql,
}

impl AgentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AgentKind::Sac => "sac",
            AgentKind::Sql => "sql",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    Constant,
    Fixed,
    Tes,
}

impl ScheduleKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ScheduleKind::Constant => "constant",
            ScheduleKind::Fixed => "fixed",
            ScheduleKind::Tes => "tes",
        }
    }
}

fn default_total_steps() -> u64 {
    50_000
}

fn default_eval_interval() -> u64 {
    500
}

fn default_eval_episodes() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub env: String,
    pub agent: AgentKind,
    pub seeds: Vec<u64>,
    #[serde(default = "default_total_steps")]
    pub total_steps: u64,
    #[serde(default = "default_eval_interval")]
    pub eval_interval: u64,
    #[serde(default = "default_eval_episodes")]
    pub eval_episodes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

/// Target-entropy settings. Key names follow the usual symbols (`C`, `T`, `k`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SchedulerSection {
    pub scheduler: ScheduleKind,
    /// Constant target as a fraction of `ln |A|`.
    #[serde(rename = "C")]
    pub c: f64,
    pub lambda: f64,
    pub avg_threshold: f64,
    pub std_threshold: f64,
    pub k: f64,
    #[serde(rename = "T")]
    pub total_conditioned_num: u64,
    pub consecutive: bool,
    /// Absolute initial TES target; defaults to `0.9 ln |A|`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_target: Option<f64>,
    /// Fixed-step levels as fractions of `ln |A|`.
    pub levels: Vec<f64>,
    /// Fixed-step drop points in env steps; defaults to even spacing.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub drop_steps: Option<Vec<u64>>,
}

impl Default for SchedulerSection {
    fn default() -> Self {
        let tes = SchedulerConfig::for_actions(2);
        Self {
            scheduler: ScheduleKind::Tes,
            c: 0.98,
            lambda: tes.lambda,
            avg_threshold: tes.avg_threshold,
            std_threshold: tes.std_threshold,
            k: tes.k,
            total_conditioned_num: tes.total_conditioned_num,
            consecutive: tes.consecutive,
            initial_target: None,
            levels: FixedStepSchedule::DEFAULT_FRACTIONS.to_vec(),
            drop_steps: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HyperParams {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub gamma: f64,
    pub buffer_size: usize,
    pub hidden: Vec<usize>,
    pub tau: f64,
    pub warmup: usize,
    pub gradient_steps: usize,
    pub twin_critics: bool,
    pub initial_log_alpha: f64,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            learning_rate: 3e-4,
            batch_size: 64,
            gamma: 0.99,
            buffer_size: 20_000,
            hidden: vec![64, 64],
            tau: 0.005,
            warmup: 1_000,
            gradient_steps: 1,
            twin_critics: false,
            initial_log_alpha: DEFAULT_INITIAL_ALPHA.ln(),
        }
    }
}

impl HyperParams {
    /// The published Atari-scale values: batch 256, buffer 1e5, 2 x 512 hidden.
    pub fn paper() -> Self {
        Self {
            batch_size: 256,
            buffer_size: 100_000,
            hidden: vec![512, 512],
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub scheduler: SchedulerSection,
    #[serde(default)]
    pub hyper: HyperParams,
}

impl ExperimentConfig {
    /// A config with every optional section at its default.
    pub fn new(env: &str, agent: AgentKind, seeds: Vec<u64>) -> Self {
        Self {
            experiment: ExperimentSection {
                env: env.to_string(),
                agent,
                seeds,
                total_steps: default_total_steps(),
                eval_interval: default_eval_interval(),
                eval_episodes: default_eval_episodes(),
                output_dir: None,
            },
            scheduler: SchedulerSection::default(),
            hyper: HyperParams::default(),
        }
    }

    /// Parses and validates; errors name the offending key path.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text)
            .map_err(|e| Error::config("<document>", e.to_string().trim_end()))?;
        let config: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::config(path, e.into_inner().to_string().trim_end())
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config("<document>", e.to_string()))
    }

    pub fn env_spec(&self) -> Result<EnvSpec> {
        Ok(make_env(&self.experiment.env)?.spec().clone())
    }

    pub fn validate(&self) -> Result<()> {
        let e = &self.experiment;
        let spec = self.env_spec()?;
        if e.seeds.is_empty() {
            return Err(Error::config("experiment.seeds", "must not be empty"));
        }
        if e.total_steps == 0 {
            return Err(Error::config("experiment.total_steps", "must be positive"));
        }
        if e.eval_interval == 0 {
            return Err(Error::config(
                "experiment.eval_interval",
                "must be positive",
            ));
        }
        let h = &self.hyper;
        if !(h.learning_rate > 0.0) {
            return Err(Error::config("hyper.learning_rate", "must be positive"));
        }
        if h.batch_size == 0 {
            return Err(Error::config("hyper.batch_size", "must be positive"));
        }
        if h.buffer_size == 0 {
            return Err(Error::config("hyper.buffer_size", "must be positive"));
        }
        if !(0.0..=1.0).contains(&h.gamma) {
            return Err(Error::config("hyper.gamma", "must lie in [0, 1]"));
        }
        if !(h.tau > 0.0 && h.tau <= 1.0) {
            return Err(Error::config("hyper.tau", "must lie in (0, 1]"));
        }
        if h.hidden.iter().any(|&w| w == 0) {
            return Err(Error::config("hyper.hidden", "widths must be positive"));
        }
        if !h.initial_log_alpha.is_finite() {
            return Err(Error::config("hyper.initial_log_alpha", "must be finite"));
        }
        if h.twin_critics && e.agent == AgentKind::Sql {
            return Err(Error::config(
                "hyper.twin_critics",
                "only supported for sac",
            ));
        }
        let s = &self.scheduler;
        if !(s.c > 0.0 && s.c <= 1.0) {
            return Err(Error::config("scheduler.C", "must lie in (0, 1]"));
        }
        if let Some(h0) = s.initial_target {
            if h0 > spec.max_entropy() {
                return Err(Error::config(
                    "scheduler.initial_target",
                    format!("exceeds ln |A| = {}", spec.max_entropy()),
                ));
            }
        }
        self.controller(&spec).map(|_| ())
    }

    pub fn tes_config(&self, spec: &EnvSpec) -> SchedulerConfig {
        let s = &self.scheduler;
        SchedulerConfig {
            lambda: s.lambda,
            avg_threshold: s.avg_threshold,
            std_threshold: s.std_threshold,
            k: s.k,
            total_conditioned_num: s.total_conditioned_num,
            initial_target: s
                .initial_target
                .unwrap_or(DEFAULT_INITIAL_FRACTION * spec.max_entropy()),
            consecutive: s.consecutive,
        }
    }

    pub fn controller(&self, spec: &EnvSpec) -> Result<TargetEntropyController> {
        let s = &self.scheduler;
        Ok(match s.scheduler {
            ScheduleKind::Constant => TargetEntropyController::Constant {
                target: constant_target(s.c, spec.action_count),
            },
            ScheduleKind::Fixed => {
                let levels = s.levels.iter().map(|c| c * spec.max_entropy()).collect();
                let drops = match &s.drop_steps {
                    Some(d) => d.clone(),
                    None => {
                        let n = s.levels.len().max(1) as u64;
                        (1..n)
                            .map(|j| j * self.experiment.total_steps / n)
                            .collect()
                    }
                };
                TargetEntropyController::FixedStep(FixedStepSchedule::new(levels, drops)?)
            }
            ScheduleKind::Tes => {
                TargetEntropyController::Tes(TesScheduler::new(self.tes_config(spec))?)
            }
        })
    }

    pub fn sac_config(&self) -> SacConfig {
        let h = &self.hyper;
        SacConfig {
            hidden: h.hidden.clone(),
            learning_rate: h.learning_rate,
            gamma: h.gamma,
            tau: h.tau,
            initial_log_alpha: h.initial_log_alpha,
            twin_critics: h.twin_critics,
        }
    }

    pub fn sql_config(&self) -> SqlConfig {
        let h = &self.hyper;
        SqlConfig {
            hidden: h.hidden.clone(),
            learning_rate: h.learning_rate,
            gamma: h.gamma,
            tau: h.tau,
            initial_log_alpha: h.initial_log_alpha,
        }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        let (e, h) = (&self.experiment, &self.hyper);
        TrainConfig {
            total_steps: e.total_steps,
            eval_interval: e.eval_interval,
            eval_episodes: e.eval_episodes,
            batch_size: h.batch_size,
            buffer_size: h.buffer_size,
            warmup: h.warmup,
            gradient_steps: h.gradient_steps,
            gamma: h.gamma,
            seed,
        }
    }

    /// Short identifier such as `gridworld5-sac-tes`.
    pub fn label(&self) -> String {
        let sched = match self.scheduler.scheduler {
            ScheduleKind::Constant => format!("constant-{}", self.scheduler.c),
            other => other.as_str().to_string(),
        };
        format!(
            "{}-{}-{}",
            self.experiment.env,
            self.experiment.agent.as_str(),
            sched
        )
    }
}
