use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion};

use cinestab::{
    assemble, exp_h, log_h, solve, solve_global, solve_windowed, StabilizerConfig, WindowParams,
};
use cinestab_bench::{default_geometry, mixed_path, sample_logs};

fn lie(c: &mut Criterion) {
    let logs = sample_logs(256);
    let mats: Vec<_> = logs.iter().map(exp_h).collect();
    c.bench_function("exp_256", |b| {
        b.iter(|| {
            for l in &logs {
                black_box(exp_h(black_box(l)));
            }
        })
    });
    c.bench_function("log_256", |b| {
        b.iter(|| {
            for h in &mats {
                black_box(log_h(black_box(h)).unwrap());
            }
        })
    });
}

fn qp(c: &mut Criterion) {
    let path = mixed_path(120);
    let geom = default_geometry(path.aspect);
    let config = StabilizerConfig::default();
    let problem = assemble(&path, &geom, &config).unwrap();
    c.bench_function("assemble_120", |b| {
        b.iter(|| assemble(black_box(&path), &geom, &config).unwrap())
    });
    c.bench_function("solve_qp_120", |b| {
        b.iter_batched(
            || problem.qp.clone(),
            |qp| solve(&qp, &config.solver).unwrap(),
            BatchSize::LargeInput,
        )
    });
}

fn stabilize(c: &mut Criterion) {
    let mut group = c.benchmark_group("stabilize");
    group.sample_size(10);
    let config = StabilizerConfig::default();
    for n in [240, 480] {
        let path = mixed_path(n);
        let geom = default_geometry(path.aspect);
        group.bench_function(format!("global_{n}"), |b| {
            b.iter(|| solve_global(&path, &geom, &config).unwrap())
        });
        let params = WindowParams {
            length: 120,
            stride: 90,
        };
        group.bench_function(format!("windowed_{n}"), |b| {
            b.iter(|| solve_windowed(&path, &geom, &config, params).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, lie, qp, stabilize);
criterion_main!(benches);
