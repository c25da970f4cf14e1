//! Target-entropy controllers.
//!
//! Three interchangeable ways to pick the entropy target the temperature is
//! tuned against: a constant fraction of `ln |A|`, a piecewise schedule that
//! drops at fixed experience steps, and the exponential-window schedule which
//! shrinks the target by a factor `k` once the running policy entropy has
//! settled near it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default `initial_target` as a fraction of `ln |A|`.
pub const DEFAULT_INITIAL_FRACTION: f64 = 0.9;

/// Parameters of the exponential-window target entropy schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchedulerConfig {
    /// EMA discount `lambda` in (0, 1).
    pub lambda: f64,
    /// Half-width of the window around the target the running mean must fall in.
    pub avg_threshold: f64,
    /// Upper bound on the running standard deviation.
    pub std_threshold: f64,
    /// Multiplicative drop factor `k` in (0, 1).
    pub k: f64,
    /// Number of satisfied checks required before a drop.
    pub total_conditioned_num: u64,
    pub initial_target: f64,
    /// Reset the counter whenever the window check fails.
    pub consecutive: bool,
}

impl SchedulerConfig {
    /// Default thresholds with the target starting at `0.9 ln |A|`.
    ///
    /// In terminating MDPs the soft-optimal policy cannot reach `ln |A|`
    /// exactly, so a window centred on it may never be entered.
    pub fn for_actions(action_count: usize) -> Self {
        Self {
            lambda: 0.999,
            avg_threshold: 0.01,
            std_threshold: 0.05,
            k: 0.9,
            total_conditioned_num: 1000,
            initial_target: DEFAULT_INITIAL_FRACTION * (action_count as f64).ln(),
            consecutive: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let open_unit = |v: f64| v > 0.0 && v < 1.0;
        if !open_unit(self.lambda) {
            return Err(Error::config("scheduler.lambda", "must lie in (0, 1)"));
        }
        if !open_unit(self.k) {
            return Err(Error::config("scheduler.k", "must lie in (0, 1)"));
        }
        if !(self.avg_threshold > 0.0) {
            return Err(Error::config("scheduler.avg_threshold", "must be positive"));
        }
        if !(self.std_threshold >= 0.0) {
            return Err(Error::config(
                "scheduler.std_threshold",
                "must be non-negative",
            ));
        }
        if self.total_conditioned_num == 0 {
            return Err(Error::config("scheduler.T", "must be positive"));
        }
        if !(self.initial_target >= 0.0) {
            return Err(Error::config(
                "scheduler.initial_target",
                "must be non-negative",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchedulerState {
    pub target_entropy: f64,
    pub ema_mean: f64,
    /// Running variance; the standard deviation is its square root.
    pub ema_var: f64,
    pub condition_counter: u64,
}

impl SchedulerState {
    pub fn new(initial_target: f64) -> Self {
        Self {
            target_entropy: initial_target,
            ema_mean: initial_target,
            ema_var: 0.0,
            condition_counter: 0,
        }
    }

    pub fn ema_std(&self) -> f64 {
        self.ema_var.sqrt()
    }
}

/// Exponential moving mean and deviation, with the deviation measured from
/// the mean *before* this update.
pub fn ema_update(state: &mut SchedulerState, entropy: f64, lambda: f64) {
    let delta = entropy - state.ema_mean;
    state.ema_mean += (1.0 - lambda) * delta;
    state.ema_var = lambda * (state.ema_var + (1.0 - lambda) * delta * delta);
}

/// One scheduler call; returns the (possibly lowered) target.
pub fn tes_step(state: &mut SchedulerState, config: &SchedulerConfig, entropy: f64) -> f64 {
    ema_update(state, entropy, config.lambda);
    let target = state.target_entropy;
    let settled = target - config.avg_threshold < state.ema_mean
        && state.ema_mean < target + config.avg_threshold
        && state.ema_std() <= config.std_threshold;
    if !settled {
        if config.consecutive {
            state.condition_counter = 0;
        }
        return target;
    }
    state.condition_counter += 1;
    if state.condition_counter >= config.total_conditioned_num {
        state.condition_counter = 0;
        state.target_entropy = target * config.k;
    }
    state.target_entropy
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TesScheduler {
    pub config: SchedulerConfig,
    pub state: SchedulerState,
}

impl TesScheduler {
    pub fn new(config: SchedulerConfig) -> Result<Self> {
        config.validate()?;
        let state = SchedulerState::new(config.initial_target);
        Ok(Self { config, state })
    }

    pub fn step(&mut self, entropy: f64) -> f64 {
        tes_step(&mut self.state, &self.config, entropy)
    }
}

/// Piecewise-constant target: `levels[j]` once `j` drop steps have passed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedStepSchedule {
    levels: Vec<f64>,
    drop_steps: Vec<u64>,
}

impl FixedStepSchedule {
    pub fn new(levels: Vec<f64>, drop_steps: Vec<u64>) -> Result<Self> {
        if levels.len() != drop_steps.len() + 1 {
            return Err(Error::config(
                "scheduler.levels",
                format!(
                    "expected {} levels for {} drop steps, got {}",
                    drop_steps.len() + 1,
                    drop_steps.len(),
                    levels.len()
                ),
            ));
        }
        if levels.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(Error::config(
                "scheduler.levels",
                "must be strictly decreasing",
            ));
        }
        if drop_steps.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::config(
                "scheduler.drop_steps",
                "must be strictly increasing",
            ));
        }
        Ok(Self { levels, drop_steps })
    }

    /// Fractions of `ln |A|` used for the evenly spaced four-drop schedule.
    pub const DEFAULT_FRACTIONS: [f64; 5] = [0.98, 0.75, 0.5, 0.25, 0.01];

    /// Four evenly spaced drops through `DEFAULT_FRACTIONS` within `total_steps`.
    pub fn evenly_spaced(action_count: usize, total_steps: u64) -> Result<Self> {
        let max_entropy = (action_count as f64).ln();
        let levels = Self::DEFAULT_FRACTIONS
            .iter()
            .map(|c| c * max_entropy)
            .collect();
        let drop_steps = (1..=4).map(|j| j * total_steps / 5).collect();
        Self::new(levels, drop_steps)
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn drop_steps(&self) -> &[u64] {
        &self.drop_steps
    }
}

pub fn fixed_step_target(schedule: &FixedStepSchedule, step: u64) -> f64 {
    let passed = schedule
        .drop_steps
        .iter()
        .take_while(|&&d| d <= step)
        .count();
    schedule.levels[passed]
}

/// `C ln |A|`.
pub fn constant_target(c: f64, action_count: usize) -> f64 {
    c * (action_count as f64).ln()
}

/// The target-entropy source an agent consults once per gradient step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TargetEntropyController {
    Constant { target: f64 },
    FixedStep(FixedStepSchedule),
    Tes(TesScheduler),
}

impl TargetEntropyController {
    /// Target currently in force, without advancing any state.
    pub fn current(&self, env_step: u64) -> f64 {
        match self {
            Self::Constant { target } => *target,
            Self::FixedStep(s) => fixed_step_target(s, env_step),
            Self::Tes(t) => t.state.target_entropy,
        }
    }

    /// Feed the latest mini-batch entropy; returns the target to use now.
    pub fn step(&mut self, env_step: u64, entropy: f64) -> f64 {
        match self {
            Self::Constant { target } => *target,
            Self::FixedStep(s) => fixed_step_target(s, env_step),
            Self::Tes(t) => t.step(entropy),
        }
    }

    /// Immediately lower the target by `factor`, as if a drop had just fired.
    ///
    /// Fixed-step schedules cannot be forced; they are left unchanged.
    pub fn force_drop(&mut self, factor: f64) {
        match self {
            Self::Constant { target } => *target *= factor,
            Self::FixedStep(_) => {}
            Self::Tes(t) => {
                t.state.target_entropy *= factor;
                t.state.condition_counter = 0;
            }
        }
    }
}
