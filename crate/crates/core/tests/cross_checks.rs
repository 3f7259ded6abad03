//! Cross-module consistency checks: identities that need two or more
//! modules wired together, at scales small enough for routine runs.

use riesz_sim::ensemble::EnsembleSpec;
use riesz_sim::bellman::weak_type_experiment;
use riesz_sim::drift::DriftKind;
use riesz_sim::process::{
    sample_brownian, stochastic_integral, ScalarPath, TimeGrid, TransformKind,
};
use riesz_sim::radiation::{damped_riesz_oracle_at_centers, mc_riesz, McRieszConfig};
use riesz_sim::sparse::{check_domination, decompose_ensemble, SparseParams};
use riesz_sim::torus::{
    build_function, lp_norm, riesz_spectral, BuiltinFunction, TorusGrid, TorusGridFunction,
};

/// The integral of a bounded deterministic integrand against speed-2
/// Brownian motion obeys the isometry E[I^2] = speed * integral of the
/// squared integrand.
#[test]
fn ito_isometry_for_the_speed_two_driver() {
    let grid = TimeGrid::new(1.0, 400).unwrap();
    let n = 20_000usize;
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    for i in 0..n {
        let bm = sample_brownian(grid, 1, 2.0, 4242, i as u64).unwrap();
        let driver = ScalarPath::new(
            grid,
            (0..grid.n_points()).map(|k| bm.at(k)[0]).collect(),
        )
        .unwrap();
        let ones = riesz_sim::process::VectorPath::new(grid, 1, vec![1.0; grid.n_points()]).unwrap();
        let integral = stochastic_integral(&ones, &driver).unwrap();
        let v = integral.at(grid.n_steps())[0];
        sum += v;
        sumsq += v * v;
    }
    let mean = sum / n as f64;
    let second = sumsq / n as f64;
    // E[I] = 0, E[I^2] = 2.0 * 1.0; 3 sigma at this n is about 0.09.
    assert!(mean.abs() < 0.05, "mean {mean}");
    assert!((second - 2.0).abs() < 0.09, "second moment {second}");
}

/// Applying the Riesz vector twice on the torus gives minus the identity
/// on mean-zero functions (in one dimension; the components compose to
/// the negative projection in two).
#[test]
fn riesz_applied_twice_is_minus_identity_on_mean_zero() {
    let grid = TorusGrid::new(1, 64).unwrap();
    let f = build_function(grid, BuiltinFunction::Mix3).unwrap();
    let rf = riesz_spectral(&f).unwrap();
    let rrf = riesz_spectral(&rf[0]).unwrap();
    let worst = f
        .values()
        .iter()
        .zip(rrf[0].values())
        .map(|(a, b)| (a + b).abs())
        .fold(0.0f64, f64::max);
    assert!(worst < 1e-10, "R^2 + id deviates by {worst}");

    // In two dimensions the components satisfy sum_j R_j^2 = -id.
    let grid2 = TorusGrid::new(2, 16).unwrap();
    let g = build_function(grid2, BuiltinFunction::BandLimited { seed: 9 }).unwrap();
    let rg = riesz_spectral(&g).unwrap();
    let r1r1 = riesz_spectral(&rg[0]).unwrap();
    let r2r2 = riesz_spectral(&rg[1]).unwrap();
    let worst = g
        .values()
        .iter()
        .enumerate()
        .map(|(i, v)| (v + r1r1[0].values()[i] + r2r2[1].values()[i]).abs())
        .fold(0.0f64, f64::max);
    assert!(worst < 1e-10, "sum of squares deviates by {worst}");
}

/// The weak-type experiment, the sparse decomposition, and the domination
/// check agree on one shared small ensemble.
#[test]
fn path_pipeline_agrees_across_modules() {
    let spec = EnsembleSpec {
        grid: TimeGrid::new(1.0, 2_000).unwrap(),
        dim: 2,
        x0: 1.0,
        transform: TransformKind::Rotating,
        drift: DriftKind::ScaledIdentity(-1.0),
        n_paths: 2_000,
        master_seed: 31415,
    };
    let lambdas = [0.5, 1.0, 2.0, 4.0];
    let report = weak_type_experiment(&spec, &lambdas, 1e-6, &[0, 1000]).unwrap();
    assert!(report.rows.iter().all(|r| r.holds));
    assert!(report.invariants.all_hold(1e-9));

    let dec = decompose_ensemble(&spec, &SparseParams::default(), 1e-6, &[]).unwrap();
    let dom = check_domination(&dec, 0.05).unwrap();
    assert!(dom.holds, "worst ratio {}", dom.worst_ratio);

    // The weak-type tail at the smallest lambda is consistent with the
    // maximal functions the decomposition recorded: every path whose
    // composite max exceeds lambda has a positive-level stop or a large
    // level-0 foot.
    let lambda = 4.0;
    let row = report.rows.iter().find(|r| (r.lambda - lambda).abs() < 1e-12).unwrap();
    let tail_from_sparse = dec
        .z_star
        .iter()
        .zip(&dec.sparse_sum)
        .filter(|(z, _)| **z >= lambda)
        .count() as f64
        / dec.n_paths as f64;
    // Z* <= (|X| + |Z|)*, so the sparse tail cannot exceed the reported
    // empirical tail.
    assert!(tail_from_sparse <= row.empirical + 1e-12);
}

/// A small estimator run reproduces the exactly damped spectral transform,
/// tying the walk, the evaluator, and the mode calculus together.
#[test]
fn estimator_and_spectral_oracle_close_the_loop() {
    let grid = TorusGrid::new(1, 16).unwrap();
    let f = build_function(grid, BuiltinFunction::Sin).unwrap();
    let mut config = McRieszConfig::new(1, 8, 12_000, vec![0.75], 271828);
    config.dt_base = 2e-3;
    let est = mc_riesz(&f, &config).unwrap();
    let oracle = damped_riesz_oracle_at_centers(&f, est.cells, 0.75).unwrap();
    let err = riesz_sim::radiation::rel_l2_error(est.final_rung(), 1, &oracle);
    assert!(err < 0.15, "relative error {err}");

    // The damped oracle itself converges to the plain transform as the
    // start height grows: at y0 = 8 the gap is below 2e-7 in L2.
    let far = damped_riesz_oracle_at_centers(&f, est.cells, 8.0).unwrap();
    let plain = riesz_sim::radiation::riesz_oracle_at_centers(&f, est.cells).unwrap();
    let gap: f64 = far
        .iter()
        .zip(&plain)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let denom: f64 = plain.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!(gap / denom < 2e-7, "tail gap {}", gap / denom);
}

/// Norm homogeneity across the weighted machinery: scaling f scales both
/// sides of the bound report identically, leaving the ratio fixed.
#[test]
fn bound_ratio_is_homogeneous_in_f() {
    let grid = TorusGrid::new(1, 64).unwrap();
    let f = build_function(grid, BuiltinFunction::GaussBump { width: 0.7 }).unwrap();
    let scaled =
        TorusGridFunction::new(grid, f.values().iter().map(|v| 5.0 * v).collect()).unwrap();
    let r1 = riesz_sim::torus::check_bounds(&f, None, 3.0).unwrap();
    let r2 = riesz_sim::torus::check_bounds(&scaled, None, 3.0).unwrap();
    assert!((r1.ratio - r2.ratio).abs() < 1e-12);
    assert!((lp_norm(&scaled, None, 3.0).unwrap() - 5.0 * lp_norm(&f, None, 3.0).unwrap()).abs() < 1e-12);
}
