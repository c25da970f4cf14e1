//! Analytic gradients against central finite differences. Each check panics
//! on the first mismatch.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tessac_core::maxent::{
    actor_objective, critic_loss_and_grad, sql_policy, sql_temperature_loss_and_grad,
    temperature_loss_and_grad,
};
use tessac_core::{Batch, Mlp, PolicyDistribution, TemperatureState, Transition};

const REL: f64 = 1e-4;
const ABS: f64 = 1e-6;
const H: f64 = 1e-6;

fn close(analytic: f64, numeric: f64) -> bool {
    (analytic - numeric).abs() <= ABS + REL * numeric.abs()
}

fn assert_close(what: &str, analytic: &[f64], numeric: &[f64]) {
    assert_eq!(analytic.len(), numeric.len());
    for (i, (a, n)) in analytic.iter().zip(numeric).enumerate() {
        assert!(close(*a, *n), "{what}[{i}]: analytic {a} vs numeric {n}");
    }
}

/// Smallest |pre-activation| of any hidden unit over a batch; ReLU kinks
/// closer than the probe step make central differences meaningless.
fn kink_margin(net: &Mlp, inputs: &[f64]) -> f64 {
    let sizes = net.layer_sizes().to_vec();
    let mut margin = f64::INFINITY;
    for x in inputs.chunks_exact(sizes[0]) {
        let mut act = x.to_vec();
        for layer in 0..sizes.len() - 2 {
            let mut next = vec![0.0; sizes[layer + 1]];
            for (o, v) in next.iter_mut().enumerate() {
                *v = net.bias(layer, o)
                    + act
                        .iter()
                        .enumerate()
                        .map(|(i, a)| net.weight(layer, o, i) * a)
                        .sum::<f64>();
                margin = margin.min(v.abs());
            }
            act = next.into_iter().map(|v| v.max(0.0)).collect();
        }
    }
    margin
}

fn numeric_param_grad(net: &Mlp, f: impl Fn(&Mlp) -> f64) -> Vec<f64> {
    let mut probe = net.clone();
    (0..net.param_count())
        .map(|p| {
            let base = probe.params()[p];
            probe.params_mut()[p] = base + H;
            let up = f(&probe);
            probe.params_mut()[p] = base - H;
            let down = f(&probe);
            probe.params_mut()[p] = base;
            (up - down) / (2.0 * H)
        })
        .collect()
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

fn random_batch(rng: &mut ChaCha8Rng, n: usize, obs_dim: usize, actions: usize) -> Batch {
    let transitions: Vec<Transition> = (0..n)
        .map(|_| Transition {
            s: uniform(rng, obs_dim, 1.0),
            a: rng.random_range(0..actions),
            r: rng.random_range(-1.0..1.0),
            s_next: uniform(rng, obs_dim, 1.0),
            done: rng.random_bool(0.3),
        })
        .collect();
    Batch::from_transitions(&transitions).unwrap()
}

pub fn check_mlp_backward(count: usize) {
    for sizes in [vec![2, 4, 4, 2], vec![3, 8, 8, 3]] {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut checked = 0;
        let mut attempt = 0u64;
        while checked < count {
            attempt += 1;
            let net = Mlp::new(&sizes, attempt).unwrap();
            let x = uniform(&mut rng, sizes[0], 2.0);
            let g = uniform(&mut rng, *sizes.last().unwrap(), 1.0);
            if kink_margin(&net, &x) < 1e-3 {
                continue;
            }
            let analytic = net.backward(&x, &g).unwrap();
            let numeric = numeric_param_grad(&net, |m| {
                m.forward(&x).unwrap().iter().zip(&g).map(|(y, w)| y * w).sum()
            });
            assert_close(&format!("{sizes:?} #{checked}"), analytic.as_slice(), &numeric);
            checked += 1;
        }
        assert!(attempt < 2 * count as u64, "too many kinked draws for {sizes:?}");
    }
}

pub fn check_critic_loss(count: usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let sizes = [5, 8, 8, 3];
    let mut checked = 0;
    let mut attempt = 0;
    while checked < count {
        attempt += 1;
        let critic = Mlp::new(&sizes, 100 + attempt).unwrap();
        let target = Mlp::new(&sizes, 200 + attempt).unwrap();
        let actor = Mlp::new(&sizes, 300 + attempt).unwrap();
        let batch = random_batch(&mut rng, 8, 5, 3);
        if kink_margin(&critic, &batch.states) < 1e-3 {
            continue;
        }
        let alpha = rng.random_range(0.01..2.0);
        let gamma = rng.random_range(0.5..0.999);
        let (_, analytic) =
            critic_loss_and_grad(&critic, &target, &actor, &batch, alpha, gamma).unwrap();
        let numeric = numeric_param_grad(&critic, |c| {
            critic_loss_and_grad(c, &target, &actor, &batch, alpha, gamma)
                .unwrap()
                .0
        });
        assert_close(&format!("J_Q #{checked}"), analytic.as_slice(), &numeric);
        checked += 1;
    }
}

pub fn check_actor_objective(count: usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let sizes = [4, 8, 8, 4];
    let mut checked = 0;
    let mut attempt = 0;
    while checked < count {
        attempt += 1;
        let actor = Mlp::new(&sizes, 400 + attempt).unwrap();
        let states = uniform(&mut rng, 6 * 4, 1.0);
        if kink_margin(&actor, &states) < 1e-3 {
            continue;
        }
        let q = uniform(&mut rng, 6 * 4, 2.0);
        let alpha = rng.random_range(0.01..2.0);
        let obj = actor_objective(&actor, &states, &q, alpha).unwrap();
        let numeric =
            numeric_param_grad(&actor, |a| actor_objective(a, &states, &q, alpha).unwrap().loss);
        assert_close(&format!("J_pi #{checked}"), obj.grad.as_slice(), &numeric);

        // the loss itself against a direct evaluation
        let logits = actor.forward_batch(&states, 6).unwrap();
        let direct: f64 = logits
            .chunks_exact(4)
            .zip(q.chunks_exact(4))
            .map(|(l, qs)| {
                let pi = PolicyDistribution::from_logits(l).unwrap();
                pi.probs()
                    .iter()
                    .zip(pi.log_probs())
                    .zip(qs)
                    .map(|((p, lp), qa)| p * (alpha * lp - qa))
                    .sum::<f64>()
            })
            .sum::<f64>()
            / 6.0;
        assert!((obj.loss - direct).abs() < 1e-12);
        checked += 1;
    }
}

pub fn check_temperature(count: usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for i in 0..count {
        let log_alpha = rng.random_range(-8.0..2.0);
        let h = rng.random_range(0.0..2.0);
        let target = rng.random_range(0.0..2.0);
        let loss_at = |la: f64| temperature_loss_and_grad(h, target, &TemperatureState::new(la, 3e-4)).0;
        let (_, analytic) = temperature_loss_and_grad(h, target, &TemperatureState::new(log_alpha, 3e-4));
        let numeric = (loss_at(log_alpha + H) - loss_at(log_alpha - H)) / (2.0 * H);
        assert!(close(analytic, numeric), "J(alpha) #{i}: {analytic} vs {numeric}");
    }
}

pub fn check_sql_temperature(count: usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    let (n, actions) = (5, 4);
    for i in 0..count {
        let q = uniform(&mut rng, n * actions, 3.0);
        let log_alpha = rng.random_range(-1.5..1.0);
        let alpha0 = f64::exp(log_alpha);
        let target = rng.random_range(0.0..1.3);
        // pi_0 = softmax(Q / alpha_0) stays fixed while alpha moves
        let frozen: Vec<PolicyDistribution> =
            q.chunks_exact(actions).map(|row| sql_policy(row, alpha0).unwrap()).collect();
        let objective = |la: f64| {
            let alpha = la.exp();
            q.chunks_exact(actions)
                .zip(&frozen)
                .map(|(row, pi0)| {
                    let eq: f64 = pi0.probs().iter().zip(row).map(|(p, qa)| p * qa).sum();
                    let lse = row.iter().map(|qa| (qa / alpha).exp()).sum::<f64>().ln();
                    -eq + alpha * lse - alpha * target
                })
                .sum::<f64>()
                / n as f64
        };
        let (loss, analytic) = sql_temperature_loss_and_grad(&q, actions, alpha0, target).unwrap();
        assert!((loss - objective(log_alpha)).abs() < 1e-10, "loss #{i}");
        let numeric = (objective(log_alpha + H) - objective(log_alpha - H)) / (2.0 * H);
        assert!(close(analytic, numeric), "SQL J(alpha) #{i}: {analytic} vs {numeric}");
    }
}
