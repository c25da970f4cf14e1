//! Discrete SAC and SQL agents and the single-environment training loop.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::envs::{EnvSpec, Environment, TabularEnv};
use crate::error::{check_len, Error, Result};
use crate::maxent::{
    actor_objective, batch_policies, bellman_regression, soft_bellman_targets, sql_policy,
    sql_soft_value, sql_temperature_loss_and_grad, temperature_loss_and_grad, PolicyDistribution,
    TemperatureState,
};
use crate::nn::{AdamState, Mlp};
use crate::replay::{Batch, ReplayBuffer, Transition};
use crate::scheduler::TargetEntropyController;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActMode {
    Sample,
    Greedy,
}

/// Losses and entropy bookkeeping from one gradient step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UpdateStats {
    pub q_loss: f64,
    pub pi_loss: f64,
    pub alpha_loss: f64,
    /// Mini-batch mean policy entropy fed to the scheduler.
    pub entropy: f64,
    pub target_entropy: f64,
}

/// Common surface of the SAC and SQL agents used by [`train`].
pub trait Agent {
    fn observation_dim(&self) -> usize;
    fn action_count(&self) -> usize;

    /// Action distribution at the current temperature.
    fn policy(&self, observation: &[f64]) -> Result<PolicyDistribution> {
        self.policy_at_alpha(observation, self.log_alpha().exp())
    }

    /// Action distribution the agent would act with if the temperature were `alpha`.
    fn policy_at_alpha(&self, observation: &[f64], alpha: f64) -> Result<PolicyDistribution>;

    fn act(&mut self, observation: &[f64], mode: ActMode) -> Result<usize>;

    fn update(&mut self, batch: &Batch) -> Result<UpdateStats>;

    fn log_alpha(&self) -> f64;

    fn target_entropy(&self) -> f64;

    /// Tells the agent how many environment steps have been taken (drives
    /// fixed-step schedules).
    fn set_env_step(&mut self, step: u64);

    fn controller_mut(&mut self) -> &mut TargetEntropyController;
}

fn sample_categorical(probs: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (a, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return a;
        }
    }
    // rounding left u above the cumulative sum; take the last action with mass
    probs
        .iter()
        .rposition(|&p| p > 0.0)
        .unwrap_or(probs.len() - 1)
}

fn choose(dist: &PolicyDistribution, mode: ActMode, rng: &mut ChaCha8Rng) -> usize {
    match mode {
        ActMode::Greedy => dist.argmax(),
        ActMode::Sample => sample_categorical(dist.probs(), rng),
    }
}

fn layer_sizes(spec: &EnvSpec, hidden: &[usize]) -> Vec<usize> {
    let mut sizes = Vec::with_capacity(hidden.len() + 2);
    sizes.push(spec.observation_dim);
    sizes.extend_from_slice(hidden);
    sizes.push(spec.action_count);
    sizes
}

fn elementwise_min(a: &mut [f64], b: &[f64]) {
    for (x, &y) in a.iter_mut().zip(b) {
        *x = x.min(y);
    }
}

/// Starting temperature; small next to the per-step reward scale of the
/// bundled MDPs so the critic does not first learn a large entropy bonus.
pub const DEFAULT_INITIAL_ALPHA: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SacConfig {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub gamma: f64,
    pub tau: f64,
    pub initial_log_alpha: f64,
    /// Use the minimum of two critics for targets and the actor loss.
    pub twin_critics: bool,
}

impl Default for SacConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            learning_rate: 3e-4,
            gamma: 0.99,
            tau: 0.005,
            initial_log_alpha: DEFAULT_INITIAL_ALPHA.ln(),
            twin_critics: false,
        }
    }
}

#[derive(Debug, Clone)]
struct Critic {
    net: Mlp,
    target: Mlp,
    optimizer: AdamState,
}

impl Critic {
    fn new(sizes: &[usize], seed: u64, lr: f64) -> Result<Self> {
        let net = Mlp::new(sizes, seed)?;
        Ok(Self {
            target: net.clone(),
            optimizer: AdamState::new(net.param_count(), lr),
            net,
        })
    }
}

/// Discrete soft actor-critic with exact expectations over actions.
#[derive(Debug, Clone)]
pub struct SacAgent {
    pub actor: Mlp,
    actor_optimizer: AdamState,
    critic: Critic,
    twin: Option<Critic>,
    pub temp: TemperatureState,
    pub controller: TargetEntropyController,
    pub gamma: f64,
    pub tau: f64,
    rng: ChaCha8Rng,
    env_step: u64,
    grad_steps: u64,
}

impl SacAgent {
    pub fn new(
        spec: &EnvSpec,
        config: &SacConfig,
        controller: TargetEntropyController,
        seed: u64,
    ) -> Result<Self> {
        let sizes = layer_sizes(spec, &config.hidden);
        let mut seeds = ChaCha8Rng::seed_from_u64(seed);
        let actor = Mlp::new(&sizes, seeds.next_u64())?;
        let critic = Critic::new(&sizes, seeds.next_u64(), config.learning_rate)?;
        let twin_seed = seeds.next_u64();
        let twin = if config.twin_critics {
            Some(Critic::new(&sizes, twin_seed, config.learning_rate)?)
        } else {
            None
        };
        Ok(Self {
            actor_optimizer: AdamState::new(actor.param_count(), config.learning_rate),
            actor,
            critic,
            twin,
            temp: TemperatureState::new(config.initial_log_alpha, config.learning_rate),
            controller,
            gamma: config.gamma,
            tau: config.tau,
            rng: ChaCha8Rng::seed_from_u64(seeds.next_u64()),
            env_step: 0,
            grad_steps: 0,
        })
    }

    pub fn critic(&self) -> &Mlp {
        &self.critic.net
    }

    pub fn critic_mut(&mut self) -> &mut Mlp {
        &mut self.critic.net
    }

    pub fn target_critic(&self) -> &Mlp {
        &self.critic.target
    }

    pub fn target_critic_mut(&mut self) -> &mut Mlp {
        &mut self.critic.target
    }

    pub fn gradient_steps(&self) -> u64 {
        self.grad_steps
    }

    fn q_values(&self, states: &[f64], n: usize, target: bool) -> Result<Vec<f64>> {
        fn pick(c: &Critic, target: bool) -> &Mlp {
            if target {
                &c.target
            } else {
                &c.net
            }
        }
        let mut q = pick(&self.critic, target).forward_batch(states, n)?;
        if let Some(twin) = &self.twin {
            elementwise_min(&mut q, &pick(twin, target).forward_batch(states, n)?);
        }
        Ok(q)
    }

    /// One SAC iteration: critic, actor, scheduler, temperature, then Polyak.
    pub fn sac_update(&mut self, batch: &Batch) -> Result<UpdateStats> {
        let n = batch.len();
        if n == 0 {
            return Err(Error::InsufficientData { need: 1, have: 0 });
        }
        let alpha = self.temp.alpha();

        let next_pi = batch_policies(&self.actor, &batch.next_states, n)?;
        let next_q = self.q_values(&batch.next_states, n, true)?;
        let targets = soft_bellman_targets(batch, &next_q, &next_pi, alpha, self.gamma)?;
        let (mut q_loss, grad) = bellman_regression(&self.critic.net, batch, &targets)?;
        self.critic
            .optimizer
            .step(self.critic.net.params_mut(), &grad)?;
        if let Some(twin) = &mut self.twin {
            let (loss2, grad2) = bellman_regression(&twin.net, batch, &targets)?;
            twin.optimizer.step(twin.net.params_mut(), &grad2)?;
            q_loss = 0.5 * (q_loss + loss2);
        }

        let q = self.q_values(&batch.states, n, false)?;
        let objective = actor_objective(&self.actor, &batch.states, &q, alpha)?;
        self.actor_optimizer
            .step(self.actor.params_mut(), &objective.grad)?;

        let entropy = objective.mean_entropy;
        let target_entropy = self.controller.step(self.env_step, entropy);
        let (alpha_loss, alpha_grad) =
            temperature_loss_and_grad(entropy, target_entropy, &self.temp);
        self.temp.apply_gradient(alpha_grad)?;

        self.critic
            .target
            .soft_update_from(&self.critic.net, self.tau)?;
        if let Some(twin) = &mut self.twin {
            twin.target.soft_update_from(&twin.net, self.tau)?;
        }
        self.grad_steps += 1;
        Ok(UpdateStats {
            q_loss,
            pi_loss: objective.loss,
            alpha_loss,
            entropy,
            target_entropy,
        })
    }
}

impl Agent for SacAgent {
    fn observation_dim(&self) -> usize {
        self.actor.input_dim()
    }

    fn action_count(&self) -> usize {
        self.actor.output_dim()
    }

    /// The actor does not depend on the temperature at fixed parameters.
    fn policy_at_alpha(&self, observation: &[f64], _alpha: f64) -> Result<PolicyDistribution> {
        PolicyDistribution::from_logits(&self.actor.forward(observation)?)
    }

    fn act(&mut self, observation: &[f64], mode: ActMode) -> Result<usize> {
        let dist = self.policy(observation)?;
        Ok(choose(&dist, mode, &mut self.rng))
    }

    fn update(&mut self, batch: &Batch) -> Result<UpdateStats> {
        self.sac_update(batch)
    }

    fn log_alpha(&self) -> f64 {
        self.temp.log_alpha
    }

    fn target_entropy(&self) -> f64 {
        self.controller.current(self.env_step)
    }

    fn set_env_step(&mut self, step: u64) {
        self.env_step = step;
    }

    fn controller_mut(&mut self) -> &mut TargetEntropyController {
        &mut self.controller
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SqlConfig {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub gamma: f64,
    pub tau: f64,
    pub initial_log_alpha: f64,
}

impl Default for SqlConfig {
    fn default() -> Self {
        let sac = SacConfig::default();
        Self {
            hidden: sac.hidden,
            learning_rate: sac.learning_rate,
            gamma: sac.gamma,
            tau: sac.tau,
            initial_log_alpha: sac.initial_log_alpha,
        }
    }
}

/// Soft Q-learning: the policy is always `softmax(Q / alpha)` of the online critic.
#[derive(Debug, Clone)]
pub struct SqlAgent {
    critic: Critic,
    pub temp: TemperatureState,
    pub controller: TargetEntropyController,
    pub gamma: f64,
    pub tau: f64,
    rng: ChaCha8Rng,
    env_step: u64,
}

impl SqlAgent {
    pub fn new(
        spec: &EnvSpec,
        config: &SqlConfig,
        controller: TargetEntropyController,
        seed: u64,
    ) -> Result<Self> {
        let sizes = layer_sizes(spec, &config.hidden);
        let mut seeds = ChaCha8Rng::seed_from_u64(seed);
        // keep the critic seed aligned with SacAgent's second draw
        let _actor_seed = seeds.next_u64();
        let critic = Critic::new(&sizes, seeds.next_u64(), config.learning_rate)?;
        let _twin_seed = seeds.next_u64();
        Ok(Self {
            critic,
            temp: TemperatureState::new(config.initial_log_alpha, config.learning_rate),
            controller,
            gamma: config.gamma,
            tau: config.tau,
            rng: ChaCha8Rng::seed_from_u64(seeds.next_u64()),
            env_step: 0,
        })
    }

    pub fn critic(&self) -> &Mlp {
        &self.critic.net
    }

    pub fn critic_mut(&mut self) -> &mut Mlp {
        &mut self.critic.net
    }

    pub fn target_critic(&self) -> &Mlp {
        &self.critic.target
    }

    pub fn target_critic_mut(&mut self) -> &mut Mlp {
        &mut self.critic.target
    }

    /// `r + gamma (1 - done) alpha log sum exp(Q_target(s', .) / alpha)`.
    pub fn bellman_targets(&self, batch: &Batch) -> Result<Vec<f64>> {
        let alpha = self.temp.alpha();
        let action_count = self.critic.net.output_dim();
        let next_q = self
            .critic
            .target
            .forward_batch(&batch.next_states, batch.len())?;
        next_q
            .chunks_exact(action_count)
            .zip(batch.rewards.iter().zip(&batch.dones))
            .map(|(q, (&r, &done))| {
                let bootstrap = if done { 0.0 } else { sql_soft_value(q, alpha)? };
                Ok(r + self.gamma * bootstrap)
            })
            .collect()
    }

    /// One SQL iteration: critic, scheduler, temperature, then Polyak.
    /// Returns `(J_Q, J_alpha)` inside the stats; `pi_loss` is zero.
    pub fn sql_update(&mut self, batch: &Batch) -> Result<UpdateStats> {
        let n = batch.len();
        if n == 0 {
            return Err(Error::InsufficientData { need: 1, have: 0 });
        }
        let targets = self.bellman_targets(batch)?;
        let (q_loss, grad) = bellman_regression(&self.critic.net, batch, &targets)?;
        self.critic
            .optimizer
            .step(self.critic.net.params_mut(), &grad)?;

        let alpha = self.temp.alpha();
        let action_count = self.critic.net.output_dim();
        let q = self.critic.net.forward_batch(&batch.states, n)?;
        let mut entropy = 0.0;
        for row in q.chunks_exact(action_count) {
            entropy += sql_policy(row, alpha)?.entropy();
        }
        entropy /= n as f64;
        let target_entropy = self.controller.step(self.env_step, entropy);
        let (alpha_loss, alpha_grad) =
            sql_temperature_loss_and_grad(&q, action_count, alpha, target_entropy)?;
        self.temp.apply_gradient(alpha_grad)?;

        self.critic
            .target
            .soft_update_from(&self.critic.net, self.tau)?;
        Ok(UpdateStats {
            q_loss,
            pi_loss: 0.0,
            alpha_loss,
            entropy,
            target_entropy,
        })
    }
}

impl Agent for SqlAgent {
    fn observation_dim(&self) -> usize {
        self.critic.net.input_dim()
    }

    fn action_count(&self) -> usize {
        self.critic.net.output_dim()
    }

    fn policy_at_alpha(&self, observation: &[f64], alpha: f64) -> Result<PolicyDistribution> {
        sql_policy(&self.critic.net.forward(observation)?, alpha)
    }

    fn act(&mut self, observation: &[f64], mode: ActMode) -> Result<usize> {
        let dist = self.policy(observation)?;
        Ok(choose(&dist, mode, &mut self.rng))
    }

    fn update(&mut self, batch: &Batch) -> Result<UpdateStats> {
        self.sql_update(batch)
    }

    fn log_alpha(&self) -> f64 {
        self.temp.log_alpha
    }

    fn target_entropy(&self) -> f64 {
        self.controller.current(self.env_step)
    }

    fn set_env_step(&mut self, step: u64) {
        self.env_step = step;
    }

    fn controller_mut(&mut self) -> &mut TargetEntropyController {
        &mut self.controller
    }
}

/// Mean total-variation distance over `probe_states` between the agent's
/// action distributions at `before_alpha` and `after_alpha`, parameters fixed.
pub fn policy_shift_tv(
    agent: &dyn Agent,
    probe_states: &[Vec<f64>],
    before_alpha: f64,
    after_alpha: f64,
) -> Result<f64> {
    if probe_states.is_empty() {
        return Err(Error::InsufficientData { need: 1, have: 0 });
    }
    let mut total = 0.0;
    for s in probe_states {
        let before = agent.policy_at_alpha(s, before_alpha)?;
        let after = agent.policy_at_alpha(s, after_alpha)?;
        total += before.total_variation(&after);
    }
    Ok(total / probe_states.len() as f64)
}

/// Mean total-variation distance between two recorded sets of distributions.
pub fn mean_total_variation(
    before: &[PolicyDistribution],
    after: &[PolicyDistribution],
) -> Result<f64> {
    check_len("policy snapshots", before.len(), after.len())?;
    if before.is_empty() {
        return Err(Error::InsufficientData { need: 1, have: 0 });
    }
    Ok(before
        .iter()
        .zip(after)
        .map(|(b, a)| b.total_variation(a))
        .sum::<f64>()
        / before.len() as f64)
}

/// One row of a [`RunLog`]; field order is the CSV column order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub step: u64,
    pub episode_return_mean: f64,
    pub policy_entropy: f64,
    pub log_alpha: f64,
    pub target_entropy: f64,
    pub q_loss: f64,
    pub pi_loss: f64,
    pub alpha_loss: f64,
    pub policy_shift_tv: f64,
}

/// Greedy evaluation at one logging point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub step: u64,
    pub mean_return: f64,
    pub mean_discounted_return: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunLog {
    pub rows: Vec<LogRow>,
    pub evaluations: Vec<Evaluation>,
}

impl RunLog {
    pub fn final_row(&self) -> Option<&LogRow> {
        self.rows.last()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub total_steps: u64,
    pub eval_interval: u64,
    pub eval_episodes: usize,
    pub batch_size: usize,
    pub buffer_size: usize,
    /// Stored transitions required before gradient updates start.
    pub warmup: usize,
    pub gradient_steps: usize,
    /// Discount used for the discounted evaluation return.
    pub gamma: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            total_steps: 50_000,
            eval_interval: 500,
            eval_episodes: 5,
            batch_size: 64,
            buffer_size: 20_000,
            warmup: 1_000,
            gradient_steps: 1,
            gamma: 0.99,
            seed: 0,
        }
    }
}

const MAX_PROBES: usize = 100;

/// Runs `episodes` greedy episodes; returns (undiscounted, discounted) mean returns.
pub fn evaluate(
    agent: &mut dyn Agent,
    env: &mut TabularEnv,
    episodes: usize,
    gamma: f64,
    seed: u64,
) -> Result<(f64, f64)> {
    let episodes = episodes.max(1);
    let (mut total, mut total_discounted) = (0.0, 0.0);
    for ep in 0..episodes {
        let mut obs = env.reset(seed.wrapping_add(ep as u64));
        let mut discount = 1.0;
        loop {
            let action = agent.act(&obs, ActMode::Greedy)?;
            let r = env.step(action)?;
            total += r.reward;
            total_discounted += discount * r.reward;
            discount *= gamma;
            if r.done || r.truncated {
                break;
            }
            obs = r.next_observation;
        }
    }
    Ok((total / episodes as f64, total_discounted / episodes as f64))
}

#[derive(Default)]
struct IntervalStats {
    count: usize,
    q_loss: f64,
    pi_loss: f64,
    alpha_loss: f64,
    entropy: f64,
}

impl IntervalStats {
    fn add(&mut self, s: &UpdateStats) {
        self.count += 1;
        self.q_loss += s.q_loss;
        self.pi_loss += s.pi_loss;
        self.alpha_loss += s.alpha_loss;
        self.entropy += s.entropy;
    }

    fn mean(&self, total: f64) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            total / self.count as f64
        }
    }
}

fn mean_probe_entropy(agent: &dyn Agent, probes: &[Vec<f64>]) -> Result<f64> {
    let mut sum = 0.0;
    for s in probes {
        sum += agent.policy(s)?.entropy();
    }
    Ok(sum / probes.len().max(1) as f64)
}

/// Interleaves one environment step with `gradient_steps` updates, evaluating
/// greedily and logging every `eval_interval` steps. Row 0 is the untrained agent.
pub fn train(agent: &mut dyn Agent, env: &mut TabularEnv, config: &TrainConfig) -> Result<RunLog> {
    let spec = env.spec().clone();
    check_len(
        "agent observation dim",
        spec.observation_dim,
        agent.observation_dim(),
    )?;
    check_len(
        "agent action count",
        spec.action_count,
        agent.action_count(),
    )?;
    if config.eval_interval == 0 {
        return Err(Error::config(
            "experiment.eval_interval",
            "must be positive",
        ));
    }
    if config.batch_size == 0 {
        return Err(Error::config("hyper.batch_size", "must be positive"));
    }

    let mut seeds = ChaCha8Rng::seed_from_u64(config.seed ^ 0x7e55_ac00);
    let replay_seed = seeds.next_u64();
    let env_seed = seeds.next_u64();
    let eval_seed = seeds.next_u64();

    let mut eval_env = env.clone();
    let mut replay = ReplayBuffer::new(
        config.buffer_size.max(1),
        spec.observation_dim,
        spec.action_count,
        replay_seed,
    );
    let probes: Vec<Vec<f64>> = env
        .all_observations()
        .into_iter()
        .take(MAX_PROBES)
        .collect();

    let mut log = RunLog::default();
    let mut record = |log: &mut RunLog,
                      agent: &mut dyn Agent,
                      step: u64,
                      stats: &IntervalStats,
                      shift: f64|
     -> Result<()> {
        let (ret, disc) = evaluate(
            agent,
            &mut eval_env,
            config.eval_episodes,
            config.gamma,
            eval_seed.wrapping_add(step),
        )?;
        let entropy = if stats.count > 0 {
            stats.mean(stats.entropy)
        } else {
            mean_probe_entropy(agent, &probes)?
        };
        let row = LogRow {
            step,
            episode_return_mean: ret,
            policy_entropy: entropy,
            log_alpha: agent.log_alpha(),
            target_entropy: agent.target_entropy(),
            q_loss: stats.mean(stats.q_loss),
            pi_loss: stats.mean(stats.pi_loss),
            alpha_loss: stats.mean(stats.alpha_loss),
            policy_shift_tv: shift,
        };
        if ![
            row.episode_return_mean,
            row.policy_entropy,
            row.log_alpha,
            row.target_entropy,
            row.q_loss,
            row.pi_loss,
            row.alpha_loss,
            row.policy_shift_tv,
        ]
        .iter()
        .all(|v| v.is_finite())
        {
            return Err(Error::NonFinite("run log row"));
        }
        log.rows.push(row);
        log.evaluations.push(Evaluation {
            step,
            mean_return: ret,
            mean_discounted_return: disc,
        });
        Ok(())
    };

    agent.set_env_step(0);
    record(&mut log, agent, 0, &IntervalStats::default(), 0.0)?;
    let mut prev_log_alpha = agent.log_alpha();

    let mut episode: u64 = 0;
    let mut obs = env.reset(env_seed);
    let mut interval = IntervalStats::default();
    for step in 1..=config.total_steps {
        agent.set_env_step(step);
        let action = agent.act(&obs, ActMode::Sample)?;
        let result = env.step(action)?;
        let next_obs = if result.done || result.truncated {
            episode += 1;
            env.reset(env_seed.wrapping_add(episode))
        } else {
            result.next_observation.clone()
        };
        replay.push(Transition {
            s: std::mem::replace(&mut obs, next_obs),
            a: action,
            r: result.reward,
            s_next: result.next_observation,
            done: result.done,
        })?;

        if replay.len() >= config.warmup.max(1) {
            for _ in 0..config.gradient_steps {
                let batch = replay.sample_batch(config.batch_size)?;
                let stats = agent.update(&batch)?;
                interval.add(&stats);
            }
        }

        if step % config.eval_interval == 0 {
            let now = agent.log_alpha();
            let shift = policy_shift_tv(&*agent, &probes, prev_log_alpha.exp(), now.exp())?;
            prev_log_alpha = now;
            record(&mut log, agent, step, &interval, shift)?;
            interval = IntervalStats::default();
        }
    }
    Ok(log)
}
