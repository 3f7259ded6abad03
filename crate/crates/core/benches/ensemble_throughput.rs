//! Throughput of the data-parallel path layer against the always-sequential
//! fallback, on the two hot workloads: drift-pair realization and the
//! height-adaptive background walk. Built with default features the first
//! series runs on the thread pool; with `--no-default-features` both series
//! are sequential and should coincide.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use riesz_sim::drift::DriftKind;
use riesz_sim::ensemble::{map_paths, map_paths_seq, EnsembleSpec};
use riesz_sim::process::{TimeGrid, TransformKind};
use riesz_sim::radiation::{mc_riesz, McRieszConfig};
use riesz_sim::torus::{build_function, BuiltinFunction, TorusGrid};

fn pair_realization(c: &mut Criterion) {
    let spec = EnsembleSpec {
        grid: TimeGrid::new(1.0, 1_000).unwrap(),
        dim: 2,
        x0: 1.0,
        transform: TransformKind::Rotating,
        drift: DriftKind::ScaledIdentity(-1.0),
        n_paths: 256,
        master_seed: 7,
    };
    let table = spec.transform_table().unwrap();

    let mut group = c.benchmark_group("pair_realization");
    group.sample_size(10);
    group.bench_with_input(BenchmarkId::new("parallel", spec.n_paths), &spec, |b, spec| {
        b.iter(|| {
            let sups = map_paths(spec.n_paths, |i| {
                let r = spec.realize_path(i, table.as_ref()).unwrap();
                r.z.norm_at(spec.grid.n_steps())
            });
            criterion::black_box(sups)
        })
    });
    group.bench_with_input(BenchmarkId::new("sequential", spec.n_paths), &spec, |b, spec| {
        b.iter(|| {
            let sups = map_paths_seq(spec.n_paths, |i| {
                let r = spec.realize_path(i, table.as_ref()).unwrap();
                r.z.norm_at(spec.grid.n_steps())
            });
            criterion::black_box(sups)
        })
    });
    group.finish();
}

fn background_walks(c: &mut Criterion) {
    let grid = TorusGrid::new(1, 64).unwrap();
    let f = build_function(grid, BuiltinFunction::Cos).unwrap();
    let mut config = McRieszConfig::new(1, 16, 2_000, vec![1.0], 99);
    config.dt_base = 2e-3;

    let mut group = c.benchmark_group("background_walks");
    group.sample_size(10);
    // mc_riesz folds through the feature-selected backend internally; the
    // sequential twin pins the fallback cost for the same workload.
    group.bench_function("estimator_backend", |b| {
        b.iter(|| criterion::black_box(mc_riesz(&f, &config).unwrap()))
    });
    group.bench_function("estimator_sequential_walks", |b| {
        use riesz_sim::radiation::{simulate_background, li_functional};
        use riesz_sim::torus::OffGridEvaluator;
        let tg = TimeGrid::new(20.0, 4_000).unwrap();
        let ev = OffGridEvaluator::new(&f);
        b.iter(|| {
            let sums = map_paths_seq(256, |i| {
                let path = simulate_background(&tg, 1, 1.0, 99, i).unwrap();
                if path.censored() {
                    0.0
                } else {
                    li_functional(&path, &ev).unwrap()[0]
                }
            });
            criterion::black_box(sums)
        })
    });
    group.finish();
}

criterion_group!(benches, pair_realization, background_walks);
criterion_main!(benches);
