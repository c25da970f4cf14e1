//! Maximum-entropy reinforcement learning on small discrete MDPs.
//!
//! The crate is organised bottom-up:
//!
//! * [`nn`]: dense ReLU networks with hand-derived gradients and Adam.
//! * [`envs`]: enumerable gridworld / chain MDPs plus a twin-action variant.
//! * [`replay`]: uniform experience replay.
//! * [`maxent`]: policy distributions, soft values and the SAC / SQL losses.
//! * [`scheduler`]: constant, fixed-step and exponential-window target entropy.
//! * [`agents`]: discrete SAC and SQL agents and the training loop.
//! * [`harness`]: configuration, seeded sweeps, CSV logs, SVG plots.

pub mod agents;
pub mod envs;
pub mod error;
pub mod harness;
pub mod maxent;
pub mod nn;
pub mod replay;
pub mod scheduler;

pub use agents::{
    policy_shift_tv, train, ActMode, Agent, Evaluation, LogRow, RunLog, SacAgent, SacConfig,
    SqlAgent, SqlConfig, TrainConfig, UpdateStats,
};
pub use envs::{make_env, EnvSpec, Environment, StepResult, TabularEnv, ENV_NAMES};
pub use error::{Error, Result};
pub use harness::{AgentKind, ExperimentConfig, ScheduleKind, SweepResult};
pub use maxent::{PolicyDistribution, TemperatureState};
pub use nn::{AdamState, Gradient, Mlp};
pub use replay::{Batch, ReplayBuffer, Transition};
pub use scheduler::{
    FixedStepSchedule, SchedulerConfig, SchedulerState, TargetEntropyController, TesScheduler,
};
