//! Time grids, sampled paths, and differentially subordinate martingale pairs.
//!
//! All processes live on a uniform grid `t_k = k * dt`, `dt = t_max / n_steps`,
//! and store one value per grid point (`n_steps + 1` values). Discrete-time
//! analogues of the continuous objects are used throughout:
//!
//! * the quadratic variation of a path `P` is the running sum of squared
//!   increments, `<P, P>_k = sum_{j<k} |P_{j+1} - P_j|^2`;
//! * an Ito integral is the left-point Riemann sum
//!   `I_k = sum_{j<k} a_j (W_{j+1} - W_j)`, so `I_0 = 0`;
//! * `Y` is *differentially subordinate* to `X` when `<X, X> - <Y, Y>` is
//!   non-negative and non-decreasing, which on the grid reduces to the
//!   per-step inequality `|dX_k|^2 >= |dY_k|^2`.
//!
//! Synthetic pairs are built from a transform sequence `a_k` with
//! `|a_k| <= 1` acting on a non-negative scalar martingale `X` (a Brownian
//! motion absorbed at zero), via `dY_k = a_k dX_k`. Subordination then holds
//! by construction and the transform sequence is retained as its certificate.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Result, SimError};
use crate::rng::stream_rng;
use crate::BROWNIAN_SPEED;

/// Uniform partition of `[0, t_max]` into `n_steps` equal steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    t_max: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(t_max: f64, n_steps: usize) -> Result<Self> {
        if !t_max.is_finite() || t_max <= 0.0 {
            return Err(SimError::InvalidArgument(format!(
                "t_max must be positive and finite, got {t_max}"
            )));
        }
        if n_steps == 0 {
            return Err(SimError::InvalidArgument("n_steps must be at least 1".into()));
        }
        Ok(Self { t_max, n_steps })
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Number of stored values per path: `n_steps + 1`.
    pub fn n_points(&self) -> usize {
        self.n_steps + 1
    }

    pub fn dt(&self) -> f64 {
        self.t_max / self.n_steps as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt()
    }
}

/// Real-valued path sampled on a [`TimeGrid`].
#[derive(Debug, Clone)]
pub struct ScalarPath {
    grid: TimeGrid,
    values: Vec<f64>,
}

impl ScalarPath {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_points() {
            return Err(SimError::DimensionMismatch {
                expected: grid.n_points(),
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(SimError::InvalidArgument("path contains a non-finite value".into()));
        }
        Ok(Self { grid, values })
    }

    /// Internal constructor for values that are finite by construction.
    pub(crate) fn from_parts(grid: TimeGrid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.n_points());
        Self { grid, values }
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, k: usize) -> f64 {
        self.values[k]
    }
}

/// `dim`-valued path sampled on a [`TimeGrid`], stored flat, one block of
/// `dim` coordinates per grid point.
#[derive(Debug, Clone)]
pub struct VectorPath {
    grid: TimeGrid,
    dim: usize,
    values: Vec<f64>,
}

impl VectorPath {
    pub fn new(grid: TimeGrid, dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(SimError::InvalidArgument("dimension must be at least 1".into()));
        }
        if values.len() != grid.n_points() * dim {
            return Err(SimError::DimensionMismatch {
                expected: grid.n_points() * dim,
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(SimError::InvalidArgument("path contains a non-finite value".into()));
        }
        Ok(Self { grid, dim, values })
    }

    pub(crate) fn from_parts(grid: TimeGrid, dim: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.n_points() * dim);
        Self { grid, dim, values }
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Coordinate block at grid index `k`.
    pub fn at(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    /// Euclidean norm of the value at grid index `k`.
    pub fn norm_at(&self, k: usize) -> f64 {
        self.at(k).iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// How the transform sequence `a_k` of a synthetic pair is generated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TransformKind {
    /// `a_k = e_1` for every step.
    ConstantUnit,
    /// `a_k` rotates in the first two coordinates at angular rate
    /// `4 pi / t_max` (sign oscillation `cos` in dimension one).
    Rotating,
    /// `a_k` drawn independently and uniformly from the closed unit ball.
    RandomBall,
}

/// A scalar martingale `X >= 0`, a vector martingale `Y` with `dY_k = a_k dX_k`,
/// and the transform sequence `a_k` (`|a_k| <= 1`) certifying subordination.
#[derive(Debug, Clone)]
pub struct MartingalePair {
    pub x: ScalarPath,
    pub y: VectorPath,
    pub transform: VectorPath,
}

impl MartingalePair {
    /// Checks the structural hypotheses: matching grids, `|a_k| <= 1`,
    /// `dY_k = a_k dX_k`, `X >= 0`, and `|Y_0| <= X_0`, all within `tol`.
    pub fn validate(&self, tol: f64) -> Result<()> {
        let grid = self.x.grid();
        if self.y.grid() != grid || self.transform.grid() != grid {
            return Err(SimError::GridMismatch("pair components on different grids".into()));
        }
        if self.y.dim() != self.transform.dim() {
            return Err(SimError::DimensionMismatch {
                expected: self.y.dim(),
                got: self.transform.dim(),
            });
        }
        if self.y.norm_at(0) > self.x.value(0) + tol {
            return Err(SimError::RejectedInstance("|Y_0| exceeds X_0".into()));
        }
        let dim = self.y.dim();
        for k in 0..grid.n_points() {
            if self.x.value(k) < -tol {
                return Err(SimError::RejectedInstance(format!("X negative at index {k}")));
            }
            let norm = self.transform.norm_at(k);
            if norm > 1.0 + tol {
                return Err(SimError::RejectedInstance(format!(
                    "transform norm {norm} exceeds 1 at index {k}"
                )));
            }
            if k < grid.n_steps() {
                let dx = self.x.value(k + 1) - self.x.value(k);
                let a = self.transform.at(k);
                let y0 = self.y.at(k);
                let y1 = self.y.at(k + 1);
                for i in 0..dim {
                    if (y1[i] - y0[i] - a[i] * dx).abs() > tol * (1.0 + dx.abs()) {
                        return Err(SimError::RejectedInstance(format!(
                            "dY differs from a * dX at index {k}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Samples a `dim`-component Brownian path started at the origin with
/// independent `N(0, speed * dt)` increments per component.
pub fn sample_brownian(
    grid: TimeGrid,
    dim: usize,
    speed: f64,
    master_seed: u64,
    stream: u64,
) -> Result<VectorPath> {
    if dim == 0 {
        return Err(SimError::InvalidArgument("dimension must be at least 1".into()));
    }
    if !speed.is_finite() || speed <= 0.0 {
        return Err(SimError::InvalidArgument(format!("speed must be positive, got {speed}")));
    }
    let mut rng = stream_rng(master_seed, stream);
    let step = (speed * grid.dt()).sqrt();
    let mut values = vec![0.0; grid.n_points() * dim];
    for k in 0..grid.n_steps() {
        for i in 0..dim {
            let g: f64 = rng.sample(StandardNormal);
            values[(k + 1) * dim + i] = values[k * dim + i] + step * g;
        }
    }
    Ok(VectorPath::from_parts(grid, dim, values))
}

/// Left-point Ito sum of `integrand` against the scalar `driver`:
/// `I_k = sum_{j<k} a_j (W_{j+1} - W_j)` componentwise, `I_0 = 0`.
pub fn stochastic_integral(integrand: &VectorPath, driver: &ScalarPath) -> Result<VectorPath> {
    if integrand.grid() != driver.grid() {
        return Err(SimError::GridMismatch("integrand and driver grids differ".into()));
    }
    let grid = integrand.grid();
    let dim = integrand.dim();
    let mut values = vec![0.0; grid.n_points() * dim];
    for k in 0..grid.n_steps() {
        let dw = driver.value(k + 1) - driver.value(k);
        let a = integrand.at(k);
        for i in 0..dim {
            values[(k + 1) * dim + i] = values[k * dim + i] + a[i] * dw;
        }
    }
    Ok(VectorPath::from_parts(grid, dim, values))
}

/// Running quadratic variation of a vector path:
/// `<P, P>_k = sum_{j<k} |P_{j+1} - P_j|^2`.
pub fn quadratic_variation(path: &VectorPath) -> ScalarPath {
    let grid = path.grid();
    let dim = path.dim();
    let mut values = vec![0.0; grid.n_points()];
    for k in 0..grid.n_steps() {
        let a = path.at(k);
        let b = path.at(k + 1);
        let mut step = 0.0;
        for i in 0..dim {
            let d = b[i] - a[i];
            step += d * d;
        }
        values[k + 1] = values[k] + step;
    }
    ScalarPath::from_parts(grid, values)
}

/// Running quadratic variation of a scalar path.
pub fn scalar_quadratic_variation(path: &ScalarPath) -> ScalarPath {
    let grid = path.grid();
    let mut values = vec![0.0; grid.n_points()];
    for k in 0..grid.n_steps() {
        let d = path.value(k + 1) - path.value(k);
        values[k + 1] = values[k] + d * d;
    }
    ScalarPath::from_parts(grid, values)
}

/// Outcome of a differential subordination check.
#[derive(Debug, Clone, Copy)]
pub struct SubordinationCheck {
    pub holds: bool,
    /// Worst margin seen: the minimum over steps of
    /// `|dX_k|^2 - |dY_k|^2` and over indices of the running difference
    /// `<X, X>_k - <Y, Y>_k`. Non-negative when subordination is exact.
    pub min_margin: f64,
}

/// Checks that `<X, X> - <Y, Y>` is non-negative and non-decreasing within
/// `tol` (cumulatively and per step).
pub fn check_diff_subordination(
    x: &ScalarPath,
    y: &VectorPath,
    tol: f64,
) -> Result<SubordinationCheck> {
    if x.grid() != y.grid() {
        return Err(SimError::GridMismatch("X and Y grids differ".into()));
    }
    if !(tol >= 0.0) {
        return Err(SimError::InvalidArgument(format!("tol must be >= 0, got {tol}")));
    }
    let grid = x.grid();
    let dim = y.dim();
    let mut running = 0.0;
    let mut min_margin = f64::INFINITY;
    for k in 0..grid.n_steps() {
        let dx = x.value(k + 1) - x.value(k);
        let ya = y.at(k);
        let yb = y.at(k + 1);
        let mut dy2 = 0.0;
        for i in 0..dim {
            let d = yb[i] - ya[i];
            dy2 += d * d;
        }
        let step_margin = dx * dx - dy2;
        running += step_margin;
        min_margin = min_margin.min(step_margin).min(running);
    }
    if grid.n_steps() == 0 {
        min_margin = 0.0;
    }
    Ok(SubordinationCheck { holds: min_margin >= -tol, min_margin })
}

/// The transform table used by [`TransformKind::Rotating`]: a unit vector
/// spinning in the first two coordinates at rate `4 pi / t_max` (a `cos`
/// sign oscillation in dimension one).
pub fn rotating_transform(grid: TimeGrid, dim: usize) -> Result<VectorPath> {
    if dim == 0 {
        return Err(SimError::InvalidArgument("dimension must be at least 1".into()));
    }
    let omega = 4.0 * std::f64::consts::PI / grid.t_max();
    let mut values = vec![0.0; grid.n_points() * dim];
    for k in 0..grid.n_points() {
        let theta = omega * grid.time(k);
        if dim == 1 {
            values[k] = theta.cos();
        } else {
            values[k * dim] = theta.cos();
            values[k * dim + 1] = theta.sin();
        }
    }
    Ok(VectorPath::from_parts(grid, dim, values))
}

/// Builds a synthetic subordinate pair: `X_t = x0 + W_t` absorbed at its
/// first visit to `0` (clamped there, so `X >= 0` on every path), and
/// `Y_0 = 0`, `dY_k = a_k dX_k` with the requested transform kind.
pub fn synth_martingale_pair(
    grid: TimeGrid,
    dim: usize,
    x0: f64,
    kind: TransformKind,
    master_seed: u64,
    stream: u64,
) -> Result<MartingalePair> {
    match kind {
        TransformKind::Rotating => {
            let table = rotating_transform(grid, dim)?;
            synth_martingale_pair_with_table(grid, dim, x0, &table, master_seed, stream)
        }
        TransformKind::ConstantUnit | TransformKind::RandomBall => {
            synth_pair_inner(grid, dim, x0, None, kind == TransformKind::RandomBall, master_seed, stream)
        }
    }
}

/// Variant of [`synth_martingale_pair`] taking a precomputed deterministic
/// transform table; lets ensemble drivers share one table across paths.
pub fn synth_martingale_pair_with_table(
    grid: TimeGrid,
    dim: usize,
    x0: f64,
    table: &VectorPath,
    master_seed: u64,
    stream: u64,
) -> Result<MartingalePair> {
    if table.grid() != grid {
        return Err(SimError::GridMismatch("transform table on a different grid".into()));
    }
    if table.dim() != dim {
        return Err(SimError::DimensionMismatch { expected: dim, got: table.dim() });
    }
    synth_pair_inner(grid, dim, x0, Some(table), false, master_seed, stream)
}

fn synth_pair_inner(
    grid: TimeGrid,
    dim: usize,
    x0: f64,
    table: Option<&VectorPath>,
    random_ball: bool,
    master_seed: u64,
    stream: u64,
) -> Result<MartingalePair> {
    if dim == 0 {
        return Err(SimError::InvalidArgument("dimension must be at least 1".into()));
    }
    if !x0.is_finite() || x0 <= 0.0 {
        return Err(SimError::InvalidArgument(format!("x0 must be positive, got {x0}")));
    }
    let mut rng = stream_rng(master_seed, stream);
    let n = grid.n_steps();
    let step = (BROWNIAN_SPEED * grid.dt()).sqrt();

    let mut x = vec![0.0; grid.n_points()];
    let mut y = vec![0.0; grid.n_points() * dim];
    let mut a = vec![0.0; grid.n_points() * dim];
    x[0] = x0;
    let mut alive = true;
    let mut ball = vec![0.0; dim];
    for k in 0..n {
        match table {
            Some(t) => {
                a[k * dim..(k + 1) * dim].copy_from_slice(t.at(k));
            }
            None => {
                let ak = &mut a[k * dim..(k + 1) * dim];
                if random_ball && alive {
                    sample_unit_ball(&mut rng, &mut ball);
                    ak.copy_from_slice(&ball);
                } else {
                    // Constant unit transform, and the frozen value after
                    // absorption: dX = 0 there, so any unit vector certifies.
                    ak[0] = 1.0;
                }
            }
        }

        let mut next = x[k];
        if alive {
            let g: f64 = rng.sample(StandardNormal);
            next += step * g;
            if next <= 0.0 {
                next = 0.0;
                alive = false;
            }
        }
        x[k + 1] = next;
        let dx = next - x[k];
        for i in 0..dim {
            y[(k + 1) * dim + i] = y[k * dim + i] + a[k * dim + i] * dx;
        }
    }
    // The transform entry at the final grid point multiplies no increment;
    // repeat the last step's value so the stored sequence stays in the ball.
    match table {
        Some(t) => a[n * dim..].copy_from_slice(t.at(n)),
        None => {
            if n > 0 {
                let (head, tail) = a.split_at_mut(n * dim);
                tail.copy_from_slice(&head[(n - 1) * dim..]);
            } else {
                a[0] = 1.0;
            }
        }
    }

    Ok(MartingalePair {
        x: ScalarPath::from_parts(grid, x),
        y: VectorPath::from_parts(grid, dim, y),
        transform: VectorPath::from_parts(grid, dim, a),
    })
}

/// Uniform sample from the closed unit ball, written into `out`.
fn sample_unit_ball<R: Rng>(rng: &mut R, out: &mut [f64]) {
    let dim = out.len();
    let mut norm2 = 0.0;
    for v in out.iter_mut() {
        let g: f64 = rng.sample(StandardNormal);
        *v = g;
        norm2 += g * g;
    }
    let u: f64 = rng.gen::<f64>();
    let radius = u.powf(1.0 / dim as f64);
    let norm = norm2.sqrt();
    if norm < 1e-300 {
        out.iter_mut().for_each(|v| *v = 0.0);
        out[0] = radius;
    } else {
        let scale = radius / norm;
        out.iter_mut().for_each(|v| *v *= scale);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn time_grid_basics() {
        let grid = TimeGrid::new(1.0, 4).unwrap();
        assert_eq!(grid.dt(), 0.25);
        assert_eq!(grid.n_points(), 5);
        let times: Vec<f64> = (0..5).map(|k| grid.time(k)).collect();
        assert_eq!(times, vec![0.0, 0.25, 0.5, 0.75, 1.0]);

        let coarse = TimeGrid::new(2.0, 1).unwrap();
        assert_eq!((coarse.time(0), coarse.time(1)), (0.0, 2.0));

        assert!(TimeGrid::new(1.0, 0).is_err());
        assert!(TimeGrid::new(-1.0, 5).is_err());
        assert!(TimeGrid::new(f64::NAN, 5).is_err());
    }

    #[test]
    fn paths_validate_shape_and_finiteness() {
        let grid = TimeGrid::new(1.0, 2).unwrap();
        assert!(ScalarPath::new(grid, vec![0.0, 1.0]).is_err());
        assert!(ScalarPath::new(grid, vec![0.0, f64::NAN, 1.0]).is_err());
        let p = VectorPath::new(grid, 2, vec![0.0; 6]).unwrap();
        assert_eq!(p.at(1), &[0.0, 0.0]);
        assert!(VectorPath::new(grid, 0, vec![]).is_err());
    }

    #[test]
    fn brownian_is_deterministic_per_stream() {
        let grid = TimeGrid::new(1.0, 64).unwrap();
        let a = sample_brownian(grid, 2, BROWNIAN_SPEED, 11, 3).unwrap();
        let b = sample_brownian(grid, 2, BROWNIAN_SPEED, 11, 3).unwrap();
        let c = sample_brownian(grid, 2, BROWNIAN_SPEED, 11, 4).unwrap();
        assert_eq!(a.values(), b.values());
        assert_ne!(a.values(), c.values());
        assert!(sample_brownian(grid, 2, 0.0, 1, 0).is_err());
    }

    #[test]
    fn integral_of_unit_integrand_recovers_driver() {
        let grid = TimeGrid::new(1.0, 32).unwrap();
        let w = sample_brownian(grid, 1, BROWNIAN_SPEED, 5, 0).unwrap();
        let driver = ScalarPath::from_parts(grid, w.values().to_vec());
        let ones = VectorPath::from_parts(grid, 1, vec![1.0; grid.n_points()]);
        let integral = stochastic_integral(&ones, &driver).unwrap();
        for k in 0..grid.n_points() {
            let expect = driver.value(k) - driver.value(0);
            assert!((integral.at(k)[0] - expect).abs() < 1e-12);
        }
        let zeros = VectorPath::from_parts(grid, 3, vec![0.0; grid.n_points() * 3]);
        let z = stochastic_integral(&zeros, &driver).unwrap();
        assert!(z.values().iter().all(|v| *v == 0.0));

        let other = TimeGrid::new(1.0, 33).unwrap();
        let bad = VectorPath::from_parts(other, 1, vec![1.0; other.n_points()]);
        assert!(matches!(stochastic_integral(&bad, &driver), Err(SimError::GridMismatch(_))));
    }

    #[test]
    fn quadratic_variation_of_linear_path_matches_closed_form() {
        // A linear ramp c * t accumulates (c * dt)^2 per step: total c^2 t^2 / n.
        let c = 3.0;
        for n in [10usize, 100] {
            let grid = TimeGrid::new(1.0, n).unwrap();
            let vals: Vec<f64> = (0..grid.n_points()).map(|k| c * grid.time(k)).collect();
            let qv = scalar_quadratic_variation(&ScalarPath::from_parts(grid, vals));
            let expect = c * c / n as f64;
            assert!((qv.value(n) - expect).abs() < 1e-12);
        }
        let grid = TimeGrid::new(1.0, 8).unwrap();
        let flat = VectorPath::from_parts(grid, 2, vec![1.5; grid.n_points() * 2]);
        assert!(quadratic_variation(&flat).values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn subordination_margins() {
        let grid = TimeGrid::new(1.0, 16).unwrap();
        let w = sample_brownian(grid, 1, BROWNIAN_SPEED, 9, 0).unwrap();
        let x = ScalarPath::from_parts(grid, w.values().to_vec());

        let zero = VectorPath::from_parts(grid, 2, vec![0.0; grid.n_points() * 2]);
        let check = check_diff_subordination(&x, &zero, 0.0).unwrap();
        assert!(check.holds);

        // Y = X itself: every margin is exactly zero.
        let same = VectorPath::from_parts(grid, 1, x.values().to_vec());
        let check = check_diff_subordination(&x, &same, 0.0).unwrap();
        assert!(check.holds);
        assert_eq!(check.min_margin, 0.0);

        // Y = 2X violates subordination on the first non-trivial step.
        let double: Vec<f64> = x.values().iter().map(|v| 2.0 * v).collect();
        let bad = VectorPath::from_parts(grid, 1, double);
        let check = check_diff_subordination(&x, &bad, 1e-12).unwrap();
        assert!(!check.holds);
        assert!(check.min_margin < 0.0);
    }

    #[test]
    fn synthetic_pair_satisfies_hypotheses() {
        let grid = TimeGrid::new(1.0, 2_000).unwrap();
        for kind in [TransformKind::ConstantUnit, TransformKind::Rotating, TransformKind::RandomBall] {
            for dim in [1usize, 3] {
                let pair = synth_martingale_pair(grid, dim, 1.0, kind, 42, 7).unwrap();
                pair.validate(1e-12).unwrap();
                let check = check_diff_subordination(&pair.x, &pair.y, 1e-12).unwrap();
                assert!(check.holds, "kind {kind:?} dim {dim}");
                assert!(pair.x.values().iter().all(|v| *v >= 0.0));
                assert_eq!(pair.y.norm_at(0), 0.0);
            }
        }
        assert!(synth_martingale_pair(grid, 1, 0.0, TransformKind::ConstantUnit, 1, 0).is_err());
    }

    #[test]
    fn absorbed_paths_stay_at_zero() {
        let grid = TimeGrid::new(4.0, 4_000).unwrap();
        let mut hit = 0;
        for stream in 0..64 {
            let pair =
                synth_martingale_pair(grid, 1, 0.25, TransformKind::ConstantUnit, 3, stream).unwrap();
            let x = pair.x.values();
            if let Some(first) = x.iter().position(|v| *v == 0.0) {
                hit += 1;
                assert!(x[first..].iter().all(|v| *v == 0.0));
                // Y freezes with X.
                let yv = pair.y.at(first)[0];
                assert!((pair.y.at(grid.n_steps())[0] - yv).abs() == 0.0);
            }
        }
        assert!(hit > 32, "low start should usually be absorbed, got {hit}/64");
    }
}
