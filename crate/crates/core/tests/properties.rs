use proptest::prelude::*;

use tessac_core::harness::{normalize, normalize_score, rows_from_csv, rows_to_csv};
use tessac_core::maxent::{soft_value, sql_policy, sql_soft_value};
use tessac_core::scheduler::{ema_update, tes_step, SchedulerConfig, SchedulerState};
use tessac_core::{
    AgentKind, ExperimentConfig, LogRow, PolicyDistribution, ReplayBuffer, ScheduleKind,
    Transition,
};

fn logits(n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-30.0..30.0f64, n)
}

proptest! {
    #[test]
    fn softmax_is_a_distribution(l in logits(1..12), shift in -100.0..100.0f64) {
        let d = PolicyDistribution::from_logits(&l).unwrap();
        let total: f64 = d.probs().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        prop_assert!(d.probs().iter().all(|&p| (0.0..=1.0).contains(&p)));
        for (p, lp) in d.probs().iter().zip(d.log_probs()) {
            prop_assert!(lp.is_finite() && *lp <= 0.0);
            prop_assert!((p - lp.exp()).abs() < 1e-12);
        }
        let h = d.entropy();
        prop_assert!(h >= -1e-12 && h <= (l.len() as f64).ln() + 1e-12);

        let shifted: Vec<f64> = l.iter().map(|x| x + shift).collect();
        let e = PolicyDistribution::from_logits(&shifted).unwrap();
        for (a, b) in d.probs().iter().zip(e.probs()) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn soft_value_of_boltzmann_is_log_sum_exp(
        q in prop::collection::vec(-10.0..10.0f64, 2..8),
        log_alpha in -4.0..2.0f64,
    ) {
        let alpha = log_alpha.exp();
        let pi = sql_policy(&q, alpha).unwrap();
        let v = sql_soft_value(&q, alpha).unwrap();
        let lse = alpha * q.iter().map(|x| (x / alpha).exp()).sum::<f64>().ln();
        prop_assert!((v - lse).abs() <= 1e-9 * (1.0 + lse.abs()));
        prop_assert!((soft_value(&q, &pi, alpha) - v).abs() <= 1e-9 * (1.0 + v.abs()));
    }

    #[test]
    fn boltzmann_maximizes_soft_value(
        q in prop::collection::vec(-10.0..10.0f64, 4),
        other in logits(4..5),
        log_alpha in -3.0..2.0f64,
    ) {
        let alpha = log_alpha.exp();
        let best = sql_soft_value(&q, alpha).unwrap();
        let pi = PolicyDistribution::from_logits(&other).unwrap();
        prop_assert!(soft_value(&q, &pi, alpha) <= best + 1e-9 * (1.0 + best.abs()));
    }

    #[test]
    fn normalize_identities(
        worst in -100.0..100.0f64,
        gap in 0.01..100.0f64,
        t in -2.0..3.0f64,
        middle in prop::collection::vec(0.0..1.0f64, 0..5),
    ) {
        let best = worst + gap;
        prop_assert_eq!(normalize_score(worst, best, worst).unwrap(), 0.0);
        prop_assert!((normalize_score(worst, best, best).unwrap() - 1.0).abs() < 1e-12);
        let score = worst + t * gap;
        prop_assert!((normalize_score(worst, best, score).unwrap() - t).abs() < 1e-9);

        let mut baselines = vec![best, worst];
        baselines.extend(middle.iter().map(|m| worst + m * gap));
        let out = normalize(&baselines, &[worst, best, score]).unwrap();
        prop_assert_eq!(out[0], 0.0);
        prop_assert!((out[1] - 1.0).abs() < 1e-12);
        prop_assert!((out[2] - t).abs() < 1e-9);
    }
}

/// `mean_t = lambda^t mean_0 + (1 - lambda) sum_i lambda^(t-i) h_i` summed
/// directly, and the deviation as the discounted sum of squared innovations.
fn ema_oracle(h: &[f64], lambda: f64, mean0: f64) -> (Vec<f64>, Vec<f64>) {
    let mut means = Vec::with_capacity(h.len() + 1);
    means.push(mean0);
    for t in 1..=h.len() {
        let mut sum = 0.0;
        let mut w = 1.0;
        for i in (0..t).rev() {
            sum += w * h[i];
            w *= lambda;
            if w < 1e-30 {
                break;
            }
        }
        means.push(lambda.powi(t as i32) * mean0 + (1.0 - lambda) * sum);
    }
    let mut vars = Vec::with_capacity(h.len());
    for t in 1..=h.len() {
        let mut sum = 0.0;
        let mut w = lambda;
        for i in (1..=t).rev() {
            let d = h[i - 1] - means[i - 1];
            sum += w * (1.0 - lambda) * d * d;
            w *= lambda;
            if w < 1e-30 {
                break;
            }
        }
        vars.push(sum);
    }
    (means[1..].to_vec(), vars)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn ema_matches_closed_form_over_ten_thousand_steps(
        lambda in 0.9..0.999f64,
        mean0 in 0.0..2.0f64,
        base in 0.0..1.5f64,
        seed in any::<u64>(),
    ) {
        let mut x = seed | 1;
        let h: Vec<f64> = (0..10_000)
            .map(|_| {
                x ^= x << 13;
                x ^= x >> 7;
                x ^= x << 17;
                base + (x >> 11) as f64 / (1u64 << 53) as f64 * 0.5
            })
            .collect();
        let (means, vars) = ema_oracle(&h, lambda, mean0);
        let mut state = SchedulerState::new(mean0);
        for (t, &e) in h.iter().enumerate() {
            ema_update(&mut state, e, lambda);
            prop_assert!((state.ema_mean - means[t]).abs() < 1e-9, "mean at {}", t);
            prop_assert!((state.ema_var - vars[t]).abs() < 1e-9, "var at {}", t);
        }
    }
}

proptest! {
    #[test]
    fn tes_target_only_drops_by_k(
        k in 0.5..0.99f64,
        t_needed in 1u64..50,
        consecutive in any::<bool>(),
        noise in prop::collection::vec(-0.05..0.05f64, 1..3000),
    ) {
        let config = SchedulerConfig {
            k,
            total_conditioned_num: t_needed,
            consecutive,
            ..SchedulerConfig::for_actions(4)
        };
        let mut state = SchedulerState::new(config.initial_target);
        let mut prev = state.target_entropy;
        for n in &noise {
            // follow the target closely so drops actually happen
            let target = tes_step(&mut state, &config, prev + n);
            prop_assert!(target <= prev);
            if target < prev {
                prop_assert_eq!(target, prev * k);
            }
            prop_assert!(state.condition_counter < t_needed);
            prev = target;
        }
    }

    #[test]
    fn replay_keeps_most_recent(capacity in 1usize..40, pushes in 0usize..120, seed in any::<u64>()) {
        let mut buf = ReplayBuffer::new(capacity, 1, 2, seed);
        for i in 0..pushes {
            buf.push(Transition {
                s: vec![i as f64],
                a: i % 2,
                r: i as f64,
                s_next: vec![i as f64 + 1.0],
                done: false,
            })
            .unwrap();
        }
        prop_assert_eq!(buf.len(), pushes.min(capacity));
        let stored: Vec<f64> = buf.iter().map(|t| t.r).collect();
        let expected: Vec<f64> = (pushes.saturating_sub(capacity)..pushes).map(|i| i as f64).collect();
        prop_assert_eq!(&stored, &expected);
        if pushes > 0 {
            let batch = buf.sample_batch(16).unwrap();
            prop_assert_eq!(batch.len(), 16);
            for r in &batch.rewards {
                prop_assert!(expected.contains(r));
            }
        } else {
            prop_assert!(buf.sample_batch(1).is_err());
        }
    }

    #[test]
    fn csv_round_trip_is_bitwise(
        values in prop::collection::vec(prop::array::uniform8(-1e6..1e6f64), 0..20),
    ) {
        let rows: Vec<LogRow> = values
            .iter()
            .enumerate()
            .map(|(i, v)| LogRow {
                step: i as u64 * 250,
                episode_return_mean: v[0],
                policy_entropy: v[1].abs(),
                log_alpha: v[2] / 1e5,
                target_entropy: v[3].abs(),
                q_loss: v[4].abs(),
                pi_loss: v[5],
                alpha_loss: v[6] * 1e-12,
                policy_shift_tv: v[7].abs() / 1e6,
            })
            .collect();
        let back = rows_from_csv(&rows_to_csv(&rows).unwrap()).unwrap();
        prop_assert_eq!(back.len(), rows.len());
        for (a, b) in rows.iter().zip(&back) {
            prop_assert_eq!(a.step, b.step);
            for (x, y) in [
                (a.episode_return_mean, b.episode_return_mean),
                (a.policy_entropy, b.policy_entropy),
                (a.log_alpha, b.log_alpha),
                (a.target_entropy, b.target_entropy),
                (a.q_loss, b.q_loss),
                (a.pi_loss, b.pi_loss),
                (a.alpha_loss, b.alpha_loss),
                (a.policy_shift_tv, b.policy_shift_tv),
            ] {
                prop_assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn config_toml_round_trip(
        env in prop::sample::select(vec!["gridworld5", "chain10", "twingrid5"]),
        sql in any::<bool>(),
        kind in 0usize..3,
        seeds in prop::collection::vec(0u64..(1 << 62), 1..6),
        lambda in 0.5..0.9999f64,
        k in 0.1..0.99f64,
        c in 0.0..1.0f64,
        t in 1u64..10_000,
        consecutive in any::<bool>(),
        lr in 1e-6..1e-2f64,
        hidden in prop::collection::vec(1usize..600, 1..4),
        out in prop::option::of("[a-z]{1,8}"),
    ) {
        let agent = if sql { AgentKind::Sql } else { AgentKind::Sac };
        let mut cfg = ExperimentConfig::new(env, agent, seeds);
        cfg.experiment.output_dir = out.map(Into::into);
        cfg.scheduler.scheduler = [ScheduleKind::Constant, ScheduleKind::Fixed, ScheduleKind::Tes][kind];
        cfg.scheduler.lambda = lambda;
        cfg.scheduler.k = k;
        cfg.scheduler.c = c;
        cfg.scheduler.total_conditioned_num = t;
        cfg.scheduler.consecutive = consecutive;
        cfg.hyper.learning_rate = lr;
        cfg.hyper.hidden = hidden;
        let text = cfg.to_toml_string().unwrap();
        let back = ExperimentConfig::from_toml_str(&text).unwrap();
        prop_assert_eq!(back, cfg);
    }
}
