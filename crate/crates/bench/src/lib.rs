//! Fixtures shared by the kernel benchmarks.

use tessac_core::{
    make_env, ActMode, Agent, Batch, Environment, ReplayBuffer, Result, SacAgent, SacConfig,
    SchedulerConfig, TargetEntropyController, TesScheduler, Transition,
};

pub fn tes_controller(action_count: usize) -> TargetEntropyController {
    let scheduler =
        TesScheduler::new(SchedulerConfig::for_actions(action_count)).expect("default config");
    TargetEntropyController::Tes(scheduler)
}

/// A fresh SAC agent for `env` with hidden layers `hidden`.
pub fn sac_agent(env: &str, hidden: &[usize], seed: u64) -> Result<SacAgent> {
    let env = make_env(env)?;
    let spec = env.spec().clone();
    let config = SacConfig {
        hidden: hidden.to_vec(),
        ..SacConfig::default()
    };
    SacAgent::new(&spec, &config, tes_controller(spec.action_count), seed)
}

/// Fills a replay buffer with `steps` transitions from an untrained agent's policy.
pub fn filled_replay(env: &str, steps: usize, seed: u64) -> Result<ReplayBuffer> {
    let mut env = make_env(env)?;
    let spec = env.spec().clone();
    let mut agent = sac_agent(&spec.name, &[64, 64], seed)?;
    let mut replay = ReplayBuffer::new(steps, spec.observation_dim, spec.action_count, seed);
    let mut episode = 0;
    let mut obs = env.reset(episode);
    for _ in 0..steps {
        let a = agent.act(&obs, ActMode::Sample)?;
        let out = env.step(a)?;
        replay.push(Transition {
            s: obs,
            a,
            r: out.reward,
            s_next: out.next_observation.clone(),
            done: out.done,
        })?;
        obs = if out.done || out.truncated {
            episode += 1;
            env.reset(episode)
        } else {
            out.next_observation
        };
    }
    Ok(replay)
}

pub fn sample_batch(env: &str, batch_size: usize, seed: u64) -> Result<Batch> {
    filled_replay(env, 2000, seed)?.sample_batch(batch_size)
}
