use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use tessac_bench::{sac_agent, sample_batch};
use tessac_core::scheduler::{tes_step, SchedulerConfig, SchedulerState};
use tessac_core::Mlp;

fn mlp_kernels(c: &mut Criterion) {
    let mut group = c.benchmark_group("mlp");
    for width in [64usize, 256] {
        let net = Mlp::new(&[25, width, width, 4], 0).unwrap();
        let batch = 64;
        let inputs: Vec<f64> = (0..batch * 25).map(|i| ((i * 7) % 13) as f64 / 13.0).collect();
        let out_grad = vec![0.01; batch * 4];
        group.bench_with_input(BenchmarkId::new("forward_batch64", width), &width, |b, _| {
            b.iter(|| net.forward_batch(black_box(&inputs), batch).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("backward_batch64", width), &width, |b, _| {
            let trace = net.forward_trace(&inputs, batch).unwrap();
            b.iter(|| net.backward_batch(black_box(&trace), black_box(&out_grad)).unwrap())
        });
    }
    group.finish();
}

fn sac_update(c: &mut Criterion) {
    let batch = sample_batch("gridworld5", 64, 3).unwrap();
    let mut agent = sac_agent("gridworld5", &[64, 64], 3).unwrap();
    c.bench_function("sac_update/gridworld5_h64x2_b64", |b| {
        b.iter(|| agent.sac_update(black_box(&batch)).unwrap())
    });
}

fn scheduler(c: &mut Criterion) {
    let config = SchedulerConfig::for_actions(4);
    c.bench_function("tes_step", |b| {
        let mut state = SchedulerState::new(config.initial_target);
        let mut h = 1.3;
        b.iter(|| {
            h = if h > 1.35 { 1.3 } else { h + 1e-3 };
            tes_step(black_box(&mut state), &config, black_box(h))
        })
    });
}

criterion_group!(benches, mlp_kernels, sac_update, scheduler);
criterion_main!(benches);
