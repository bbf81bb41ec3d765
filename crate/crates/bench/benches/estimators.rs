use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use overadapt_bench::fixture;
use overadapt_core::estimators::InstanceSolver;
use overadapt_core::{ensemble, finetune_ridge, pretrain_minnorm, EstimatorKind, SolveOptions};

fn estimators(c: &mut Criterion) {
    let mut group = c.benchmark_group("estimators");
    for p in [2000usize, 10_000] {
        let (_, inst) = fixture(p);
        let opts = SolveOptions::default();
        group.bench_with_input(BenchmarkId::new("pretrain_minnorm", p), &inst, |b, i| {
            b.iter(|| pretrain_minnorm(&i.x, &i.y, opts).unwrap())
        });
        let theta1 = pretrain_minnorm(&inst.x, &inst.y, opts).unwrap();
        group.bench_with_input(BenchmarkId::new("finetune_ridge", p), &inst, |b, i| {
            b.iter(|| finetune_ridge(&theta1, &i.x_tilde, &i.y_tilde, 1e-4, opts).unwrap())
        });
        let ridge = finetune_ridge(&theta1, &inst.x_tilde, &inst.y_tilde, 1e-4, opts).unwrap();
        group.bench_with_input(BenchmarkId::new("ensemble", p), &inst, |b, _| {
            b.iter(|| ensemble(&theta1, &ridge, 0.5, opts).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("solver_tau_grid", p), &inst, |b, i| {
            b.iter(|| {
                let s = InstanceSolver::new(i, opts);
                for t in 0..=20 {
                    s.fit(EstimatorKind::Ensemble { lambda: 1e-4, tau: t as f64 / 20.0 }).unwrap();
                }
            })
        });
    }
    group.finish();
}

criterion_group!(benches, estimators);
criterion_main!(benches);
