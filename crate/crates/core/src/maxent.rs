//! Maximum-entropy quantities for categorical policies.
//!
//! Every expectation over actions is computed exactly, `sum_a pi(a|s) f(s, a)`,
//! rather than by sampling. Gradients follow these stop-gradient rules:
//! the soft Bellman target is a constant for the critic, critic values are
//! constants for the actor, and policy entropies are constants for the
//! temperature.

use crate::error::{check_len, Error, Result};
use crate::nn::{AdamState, Gradient, Mlp};
use crate::replay::Batch;

/// Categorical distribution over actions with cached log-probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyDistribution {
    probs: Vec<f64>,
    log_probs: Vec<f64>,
}

impl PolicyDistribution {
    /// Numerically stable softmax (max-subtracted).
    pub fn from_logits(logits: &[f64]) -> Result<Self> {
        if logits.is_empty() {
            return Err(Error::Shape {
                what: "logits",
                expected: 1,
                got: 0,
            });
        }
        if logits.iter().any(|l| !l.is_finite()) {
            return Err(Error::NonFinite("logits"));
        }
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        let log_sum = sum.ln();
        Ok(Self {
            probs: exps.iter().map(|e| e / sum).collect(),
            log_probs: logits.iter().map(|l| (l - max) - log_sum).collect(),
        })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn log_probs(&self) -> &[f64] {
        &self.log_probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn entropy(&self) -> f64 {
        -self
            .probs
            .iter()
            .zip(&self.log_probs)
            .map(|(p, lp)| p * lp)
            .sum::<f64>()
    }

    /// Most probable action, lowest index on ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (a, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = a;
            }
        }
        best
    }

    /// `1/2 sum_a |p(a) - q(a)|`.
    pub fn total_variation(&self, other: &PolicyDistribution) -> f64 {
        0.5 * self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(p, q)| (p - q).abs())
            .sum::<f64>()
    }
}

pub fn policy_from_logits(logits: &[f64]) -> Result<PolicyDistribution> {
    PolicyDistribution::from_logits(logits)
}

pub fn entropy(dist: &PolicyDistribution) -> f64 {
    dist.entropy()
}

/// `sum_a pi(a) [Q(a) - alpha log pi(a)]`, i.e. `E_pi[Q] + alpha H[pi]`.
pub fn soft_value(q_values: &[f64], dist: &PolicyDistribution, alpha: f64) -> f64 {
    q_values
        .iter()
        .zip(dist.probs())
        .zip(dist.log_probs())
        .map(|((q, p), lp)| p * (q - alpha * lp))
        .sum()
}

/// Temperature `alpha = exp(log_alpha)` together with its optimiser.
#[derive(Debug, Clone, PartialEq)]
pub struct TemperatureState {
    pub log_alpha: f64,
    pub optimizer: AdamState,
}

impl TemperatureState {
    pub fn new(log_alpha: f64, learning_rate: f64) -> Self {
        Self {
            log_alpha,
            optimizer: AdamState::new(1, learning_rate),
        }
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    /// One Adam step on `log_alpha` given `d loss / d log_alpha`.
    pub fn apply_gradient(&mut self, grad: f64) -> Result<()> {
        let mut p = [self.log_alpha];
        self.optimizer.step(&mut p, &Gradient::scalar(grad))?;
        self.log_alpha = p[0];
        Ok(())
    }
}

/// `r + gamma (1 - done) V(s')` for every row of the batch, with `V` the soft
/// value of `next_policies` under `next_q` (row-major `batch x |A|`).
pub fn soft_bellman_targets(
    batch: &Batch,
    next_q: &[f64],
    next_policies: &[PolicyDistribution],
    alpha: f64,
    gamma: f64,
) -> Result<Vec<f64>> {
    check_len("next-state policies", batch.len(), next_policies.len())?;
    let action_count = next_policies.first().map_or(0, |p| p.len());
    check_len(
        "next-state q values",
        batch.len() * action_count,
        next_q.len(),
    )?;
    Ok(next_q
        .chunks_exact(action_count.max(1))
        .zip(next_policies)
        .zip(batch.rewards.iter().zip(&batch.dones))
        .map(|((q, pi), (&r, &done))| {
            let mask = if done { 0.0 } else { 1.0 };
            r + gamma * mask * soft_value(q, pi, alpha)
        })
        .collect())
}

/// Mean of `1/2 (y - Q(s, a))^2` and its gradient in the critic parameters.
pub fn bellman_regression(critic: &Mlp, batch: &Batch, targets: &[f64]) -> Result<(f64, Gradient)> {
    let n = batch.len();
    if n == 0 {
        return Err(Error::InsufficientData { need: 1, have: 0 });
    }
    check_len("bellman targets", n, targets.len())?;
    let action_count = critic.output_dim();
    let trace = critic.forward_trace(&batch.states, n)?;
    let q = trace.output();
    let mut out_grad = vec![0.0; n * action_count];
    let mut loss = 0.0;
    for (b, (&a, &y)) in batch.actions.iter().zip(targets).enumerate() {
        if a >= action_count {
            return Err(Error::InvalidAction {
                action: a,
                count: action_count,
            });
        }
        let err = q[b * action_count + a] - y;
        loss += 0.5 * err * err;
        out_grad[b * action_count + a] = err / n as f64;
    }
    let grad = critic.backward_batch(&trace, &out_grad)?;
    Ok((loss / n as f64, grad))
}

/// Row-wise policies from a logits network over row-major states.
pub fn batch_policies(actor: &Mlp, states: &[f64], n: usize) -> Result<Vec<PolicyDistribution>> {
    let logits = actor.forward_batch(states, n)?;
    logits
        .chunks_exact(actor.output_dim())
        .map(PolicyDistribution::from_logits)
        .collect()
}

/// Soft Bellman error of `critic` against targets built from `target_critic`
/// and `actor` at the next states.
pub fn critic_loss_and_grad(
    critic: &Mlp,
    target_critic: &Mlp,
    actor: &Mlp,
    batch: &Batch,
    alpha: f64,
    gamma: f64,
) -> Result<(f64, Gradient)> {
    let n = batch.len();
    let next_q = target_critic.forward_batch(&batch.next_states, n)?;
    let next_pi = batch_policies(actor, &batch.next_states, n)?;
    let targets = soft_bellman_targets(batch, &next_q, &next_pi, alpha, gamma)?;
    bellman_regression(critic, batch, &targets)
}

/// Result of evaluating the actor objective on a batch.
#[derive(Debug, Clone)]
pub struct ActorObjective {
    pub loss: f64,
    pub grad: Gradient,
    /// Mini-batch mean policy entropy (before the actor step).
    pub mean_entropy: f64,
}

/// Mean over states of `sum_a pi(a|s) [alpha log pi(a|s) - Q(s, a)]` with `q_values` held fixed.
pub fn actor_objective(
    actor: &Mlp,
    states: &[f64],
    q_values: &[f64],
    alpha: f64,
) -> Result<ActorObjective> {
    let action_count = actor.output_dim();
    let n = states.len() / actor.input_dim().max(1);
    if n == 0 {
        return Err(Error::InsufficientData { need: 1, have: 0 });
    }
    check_len("actor q values", n * action_count, q_values.len())?;
    let trace = actor.forward_trace(states, n)?;
    let mut out_grad = vec![0.0; n * action_count];
    let mut loss = 0.0;
    let mut entropy_sum = 0.0;
    let scale = 1.0 / n as f64;
    for ((logits, q), g) in trace
        .output()
        .chunks_exact(action_count)
        .zip(q_values.chunks_exact(action_count))
        .zip(out_grad.chunks_exact_mut(action_count))
    {
        let pi = PolicyDistribution::from_logits(logits)?;
        let f: Vec<f64> = pi
            .log_probs()
            .iter()
            .zip(q)
            .map(|(lp, qa)| alpha * lp - qa)
            .collect();
        let state_loss: f64 = pi.probs().iter().zip(&f).map(|(p, fa)| p * fa).sum();
        // d/dlogit_j sum_a pi_a f_a = pi_j (f_j - state_loss); the alpha*pi_j term
        // from differentiating log pi cancels against its mean.
        for ((gj, pj), fj) in g.iter_mut().zip(pi.probs()).zip(&f) {
            *gj = scale * pj * (fj - state_loss);
        }
        loss += state_loss;
        entropy_sum += pi.entropy();
    }
    let grad = actor.backward_batch(&trace, &out_grad)?;
    Ok(ActorObjective {
        loss: loss * scale,
        grad,
        mean_entropy: entropy_sum * scale,
    })
}

pub fn actor_loss_and_grad(
    actor: &Mlp,
    critic: &Mlp,
    batch: &Batch,
    alpha: f64,
) -> Result<(f64, Gradient)> {
    let q = critic.forward_batch(&batch.states, batch.len())?;
    let obj = actor_objective(actor, &batch.states, &q, alpha)?;
    Ok((obj.loss, obj.grad))
}

/// `J(alpha) = alpha (H_mean - H_target)` and its derivative in `log alpha`
/// (identical, since `d alpha / d log alpha = alpha`).
pub fn temperature_loss_and_grad(
    actor_entropy_batch_mean: f64,
    target_entropy: f64,
    temp: &TemperatureState,
) -> (f64, f64) {
    let value = temp.alpha() * (actor_entropy_batch_mean - target_entropy);
    (value, value)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidTemperature(alpha))
    }
}

/// Soft-greedy (Boltzmann) policy `softmax(Q / alpha)`.
pub fn sql_policy(q_values: &[f64], alpha: f64) -> Result<PolicyDistribution> {
    check_alpha(alpha)?;
    let scaled: Vec<f64> = q_values.iter().map(|q| q / alpha).collect();
    PolicyDistribution::from_logits(&scaled)
}

/// `alpha log sum_a exp(Q(a) / alpha)`, the soft value of the soft-greedy policy.
pub fn sql_soft_value(q_values: &[f64], alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok(alpha * log_sum_exp_scaled(q_values, alpha))
}

fn log_sum_exp_scaled(q_values: &[f64], alpha: f64) -> f64 {
    let max = q_values.iter().copied().fold(f64::NEG_INFINITY, f64::max) / alpha;
    let sum: f64 = q_values.iter().map(|q| (q / alpha - max).exp()).sum();
    max + sum.ln()
}

/// Batch-mean of `E_pi[-Q] + alpha log sum exp(Q / alpha) - alpha H_target`.
///
/// The expectation uses the current soft-greedy policy as a fixed sampling
/// distribution; the gradient flows through both `alpha`s of the
/// log-sum-exp term and the target term, giving `alpha (H[pi] - H_target)`
/// per state (w.r.t. `log alpha`).
pub fn sql_temperature_loss_and_grad(
    q_values_batch: &[f64],
    action_count: usize,
    alpha: f64,
    target_entropy: f64,
) -> Result<(f64, f64)> {
    check_alpha(alpha)?;
    if action_count == 0 || q_values_batch.is_empty() {
        return Err(Error::InsufficientData { need: 1, have: 0 });
    }
    check_len(
        "sql q batch",
        q_values_batch.len() / action_count * action_count,
        q_values_batch.len(),
    )?;
    let mut loss = 0.0;
    let mut grad = 0.0;
    let mut n = 0usize;
    for q in q_values_batch.chunks_exact(action_count) {
        let pi = sql_policy(q, alpha)?;
        let expected_q: f64 = pi.probs().iter().zip(q).map(|(p, qa)| p * qa).sum();
        let lse = log_sum_exp_scaled(q, alpha);
        loss += -expected_q + alpha * lse - alpha * target_entropy;
        // d/dalpha [alpha lse(Q/alpha)] = lse - E_pi[Q]/alpha = H[pi]
        let entropy = lse - expected_q / alpha;
        grad += alpha * (entropy - target_entropy);
        n += 1;
    }
    Ok((loss / n as f64, grad / n as f64))
}
