use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use mirrorflow::flow::flow_step;
use mirrorflow::problem::epsilon_root;
use mirrorflow::{
    evaluate_policy, solve_hjb, ControlProblem, Field, FlowConfig, FlowState, HjbConfig, Probe,
    SchemeConfig,
};
use mirrorflow_bench::{finite_action, grid, grid_2d, lq, lq_2d};

fn bench_evaluate_policy(c: &mut Criterion) {
    let scheme = SchemeConfig::default();
    let p = lq(0.5);
    let mut group = c.benchmark_group("evaluate_policy");
    for nx in [31, 63, 127] {
        let g = grid(nx, 50);
        let u = Field::from_fn(&g, 1, |t, x, o| o[0] = 0.7 * (2.0 * x[0] + t).sin());
        group.bench_with_input(BenchmarkId::new("lq_1d", nx), &nx, |b, _| {
            b.iter(|| evaluate_policy(&p, &g, black_box(&u), &scheme).unwrap())
        });
    }
    let g = grid_2d(15, 20);
    let p2 = lq_2d(0.5);
    let u = Field::zeros(&g, 2);
    group.bench_function("lq_2d_15x15", |b| {
        b.iter(|| evaluate_policy(&p2, &g, black_box(&u), &scheme).unwrap())
    });
    group.finish();
}

fn bench_solve_hjb(c: &mut Criterion) {
    let scheme = SchemeConfig::default();
    let cfg = HjbConfig::default();
    let g = grid(63, 50);
    let mut group = c.benchmark_group("solve_hjb");
    group.sample_size(20);
    let (l0, l5, fa) = (lq(0.0), lq(0.5), finite_action());
    group.bench_function("lq_tau0", |b| {
        b.iter(|| solve_hjb(&l0, &g, &scheme, &cfg).unwrap())
    });
    group.bench_function("lq_tau05", |b| {
        b.iter(|| solve_hjb(&l5, &g, &scheme, &cfg).unwrap())
    });
    group.bench_function("finite_action", |b| {
        b.iter(|| solve_hjb(&fa, &g, &scheme, &cfg).unwrap())
    });
    group.finish();
}

fn bench_flow_step(c: &mut Criterion) {
    let scheme = SchemeConfig::default();
    let g = grid(63, 50);
    let cfg = FlowConfig::new(0.1, 1.0, Probe::new(0.0, vec![0.3]));
    let mut group = c.benchmark_group("flow_step");
    let p = lq(0.5);
    let state = FlowState::new(&p, &g, &scheme, Field::zeros(&g, 1), 0.1).unwrap();
    group.bench_function("lq_tau05", |b| {
        b.iter(|| flow_step(&p, &g, &scheme, &cfg, black_box(&state), f64::INFINITY).unwrap())
    });
    let fa = finite_action();
    let state = FlowState::new(&fa, &g, &scheme, Field::zeros(&g, fa.mirror().dim()), 0.1).unwrap();
    group.bench_function("finite_action", |b| {
        b.iter(|| flow_step(&fa, &g, &scheme, &cfg, black_box(&state), f64::INFINITY).unwrap())
    });
    group.finish();
}

fn bench_epsilon_root(c: &mut Criterion) {
    c.bench_function("epsilon_root", |b| {
        b.iter(|| {
            let mut total = 0.0;
            for k in 1..=100 {
                total += epsilon_root(1.0, 0.5, black_box(0.1 * k as f64)).unwrap();
            }
            total
        })
    });
}

criterion_group!(
    benches,
    bench_evaluate_policy,
    bench_solve_hjb,
    bench_flow_step,
    bench_epsilon_root
);
criterion_main!(benches);
