//! Recursive sparse decomposition of a drift flow and the checks built on
//! top of it: pointwise domination, sparsity of the level sets, and the
//! weighted maximal estimate.
//!
//! The construction works per path. Level -1 stops at time 0 with value
//! `X_0`. Level 0 rescales everything by `X_0` and stops when
//! `max(|Z_t| / X_0, X_t / X_0)` first exceeds the threshold (default 4,
//! the hitting time of the open interval above it, so the comparison is
//! strict). Each later level refoots `Z` at the previous stop `T`,
//! rescales by the foot `F = X_T`, and stops when
//! `max(|Z^(refoot)_t|, X_t) / F` exceeds the threshold, scanning strictly
//! after `T`. The recursion ends when a level sees no hit, when a foot
//! value is absorbed at zero (`X` frozen there freezes `Y`, and the
//! homogeneous drift only contracts `Z`, so no further excursion occurs),
//! or at `max_levels` (reported as truncation).
//!
//! Out of the stops come the two sides of the domination estimate: the
//! sparse sum `S(X) = sum_j X_{T_j}` over levels the path reaches, and the
//! maximal value `Z* = sup_t |Z_t|`, with `Z* <= 8 S(X)` pathwise (checked
//! with a configurable discretization slack). Sparsity is the statement
//! that each level keeps at most half the conditional mass of the previous
//! one, tested for selectors that read only the stopped data.

use crate::drift::DriftMatrixProcess;
use crate::ensemble::{try_fold_paths, EnsembleSpec, InvariantSummary, CHUNK_PATHS};
use crate::error::{Result, SimError};
use crate::process::{ScalarPath, VectorPath};

/// A stopping index on the grid; `None` encodes "never" (+infinity).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StoppingIndex(pub Option<usize>);

impl StoppingIndex {
    pub fn is_finite(&self) -> bool {
        self.0.is_some()
    }
}

/// Sup of `|P_k|` over the whole grid.
pub fn maximal(path: &VectorPath) -> f64 {
    (0..path.grid().n_points()).map(|k| path.norm_at(k)).fold(0.0, f64::max)
}

/// First index `k >= from_index` with `max(|Z_k|, X_k) > threshold`,
/// or never.
pub fn hitting_time(
    zk: &VectorPath,
    xk: &ScalarPath,
    threshold: f64,
    from_index: usize,
) -> Result<StoppingIndex> {
    if zk.grid() != xk.grid() {
        return Err(SimError::GridMismatch("Z and X grids differ".into()));
    }
    if !(threshold > 0.0) || !threshold.is_finite() {
        return Err(SimError::InvalidArgument(format!("threshold must be positive, got {threshold}")));
    }
    for k in from_index..zk.grid().n_points() {
        if zk.norm_at(k) > threshold || xk.value(k) > threshold {
            return Ok(StoppingIndex(Some(k)));
        }
    }
    Ok(StoppingIndex(None))
}

/// Tunables of the decomposition.
#[derive(Debug, Clone, Copy)]
pub struct SparseParams {
    /// Excursion threshold for the rescaled processes.
    pub threshold: f64,
    /// Constant in the pointwise domination `Z* <= C S(X)`.
    pub domination_constant: f64,
    /// Hard cap on recursion depth; paths still alive there are reported
    /// as truncated and must carry negligible ensemble mass.
    pub max_levels: usize,
}

impl Default for SparseParams {
    fn default() -> Self {
        Self { threshold: 4.0, domination_constant: 8.0, max_levels: 64 }
    }
}

impl SparseParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0) || !self.threshold.is_finite() {
            return Err(SimError::InvalidArgument(format!(
                "threshold must be positive, got {}",
                self.threshold
            )));
        }
        if !(self.domination_constant > 0.0) || !self.domination_constant.is_finite() {
            return Err(SimError::InvalidArgument(format!(
                "domination constant must be positive, got {}",
                self.domination_constant
            )));
        }
        if self.max_levels == 0 {
            return Err(SimError::InvalidArgument("max_levels must be at least 1".into()));
        }
        Ok(())
    }
}

/// One stop of one path: the level's stopping index and the raw
/// (unrescaled) stopped value `X_T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelStop {
    pub t: usize,
    pub stopped_x: f64,
}

/// The decomposition of a single path.
#[derive(Debug, Clone)]
pub struct PathDecomposition {
    /// `stops[0]` is level -1 (index 0, value `X_0`); `stops[j + 1]` is
    /// level `j`. A path reaches level `j` exactly when `stops` extends
    /// that far: membership in `E_j` is finiteness of its stopping time.
    pub stops: Vec<LevelStop>,
    /// The recursion was cut off at `max_levels` with the path still alive.
    pub truncated: bool,
    /// The recursion ended because a foot value was absorbed at zero.
    pub zero_foot: bool,
    /// `sup_t |Z_t|` over the whole path.
    pub z_star: f64,
    /// `S(X)`: the sum of stopped values over reached levels.
    pub sparse_sum: f64,
    /// Max over levels `k >= 1` and times `t > T^{k-1}` of
    /// `|Z_t - Z^(k)_t| - |Z_{T^{k-1}}|`; the refooted-contraction margin
    /// at the actual stopping feet (non-positive when contraction holds).
    pub refoot_excess: f64,
}

/// Builds the decomposition of one path. `z` must be the flow solution for
/// `(v, y)` on the same grid; `x` must be non-negative with `X_0 > 0`.
pub fn build_path_decomposition(
    x: &ScalarPath,
    y: &VectorPath,
    v: &DriftMatrixProcess,
    z: &VectorPath,
    params: &SparseParams,
) -> Result<PathDecomposition> {
    params.validate()?;
    let grid = x.grid();
    if y.grid() != grid || z.grid() != grid || v.grid() != grid {
        return Err(SimError::GridMismatch("decomposition inputs on different grids".into()));
    }
    if y.dim() != z.dim() || v.dim() != z.dim() {
        return Err(SimError::DimensionMismatch { expected: z.dim(), got: y.dim().max(v.dim()) });
    }
    let x0 = x.value(0);
    if !(x0 > 0.0) {
        return Err(SimError::InvalidArgument(format!("X_0 must be positive, got {x0}")));
    }

    let d = z.dim();
    let dt = grid.dt();
    let n_points = grid.n_points();
    let mut stops = vec![LevelStop { t: 0, stopped_x: x0 }];
    let mut truncated = false;
    let mut zero_foot = false;
    let mut refoot_excess = f64::NEG_INFINITY;
    let mut zr = vec![0.0; d];
    let mut step = vec![0.0; d];

    let mut level = 0usize;
    loop {
        if level >= params.max_levels {
            truncated = true;
            break;
        }
        let prev = stops[stops.len() - 1];
        let foot = prev.stopped_x;
        if foot <= 0.0 {
            zero_foot = true;
            break;
        }
        let cut = params.threshold * foot;

        let hit = if level == 0 {
            // Level 0 scans the flow itself from the start.
            (0..n_points).find(|&k| z.norm_at(k) > cut || x.value(k) > cut)
        } else {
            // Later levels stream the refooted flow from the previous stop
            // and track the contraction of the difference to the true flow.
            zr.iter_mut().for_each(|c| *c = 0.0);
            let t_prev = prev.t;
            let foot_norm = z.norm_at(t_prev);
            let mut found = None;
            for k in t_prev..n_points.saturating_sub(1) {
                let m = v.matrix(k);
                let ya = y.at(k);
                let yb = y.at(k + 1);
                for i in 0..d {
                    let row = &m[i * d..(i + 1) * d];
                    let mut acc = 0.0;
                    for j in 0..d {
                        acc += row[j] * zr[j];
                    }
                    step[i] = zr[i] + dt * acc + (yb[i] - ya[i]);
                }
                zr.copy_from_slice(&step);
                let zc = z.at(k + 1);
                let mut zr_norm2 = 0.0;
                let mut diff2 = 0.0;
                for i in 0..d {
                    zr_norm2 += zr[i] * zr[i];
                    let dd = zc[i] - zr[i];
                    diff2 += dd * dd;
                }
                refoot_excess = refoot_excess.max(diff2.sqrt() - foot_norm);
                if zr_norm2.sqrt() > cut || x.value(k + 1) > cut {
                    found = Some(k + 1);
                    break;
                }
            }
            found
        };

        match hit {
            Some(t) => {
                stops.push(LevelStop { t, stopped_x: x.value(t) });
                level += 1;
            }
            None => break,
        }
    }

    if refoot_excess == f64::NEG_INFINITY {
        refoot_excess = 0.0;
    }
    let z_star = maximal(z);
    let sparse_sum = stops.iter().map(|s| s.stopped_x).sum();
    Ok(PathDecomposition { stops, truncated, zero_foot, z_star, sparse_sum, refoot_excess })
}

/// Per-level membership table of an ensemble decomposition. Entry `i`
/// describes level `i - 1`; member lists are ascending path indices.
#[derive(Debug, Clone, Default)]
pub struct LevelRecord {
    pub members: Vec<u32>,
    pub stop_index: Vec<u32>,
    pub stopped_x: Vec<f64>,
}

/// Ensemble-wide decomposition summary.
#[derive(Debug, Clone)]
pub struct SparseDecomposition {
    pub params: SparseParams,
    pub n_paths: usize,
    /// `levels[0]` is level -1 (all paths); `levels[j + 1]` is level `j`.
    pub levels: Vec<LevelRecord>,
    pub truncated_paths: usize,
    pub zero_foot_paths: usize,
    /// Per-path `Z*`, indexed by path.
    pub z_star: Vec<f64>,
    /// Per-path `S(X)`, indexed by path.
    pub sparse_sum: Vec<f64>,
    /// Structural margins collected on every path.
    pub invariants: InvariantSummary,
}

impl SparseDecomposition {
    /// Fraction of paths cut off at `max_levels` while still alive.
    pub fn truncated_mass(&self) -> f64 {
        self.truncated_paths as f64 / self.n_paths as f64
    }
}

/// Decomposes every path of a synthetic ensemble. Each path is realized
/// from its own streams, hypothesis-checked, decomposed, and folded into
/// the ensemble tables in path order. `invariant_probes` feed the
/// structural-invariant margins exactly as in the weak-type experiment.
pub fn decompose_ensemble(
    spec: &EnsembleSpec,
    params: &SparseParams,
    hypothesis_tol: f64,
    invariant_probes: &[usize],
) -> Result<SparseDecomposition> {
    spec.validate()?;
    params.validate()?;
    let table = spec.transform_table()?;

    struct Acc {
        levels: Vec<LevelRecord>,
        truncated: usize,
        zero_foot: usize,
        z_star: Vec<f64>,
        sparse_sum: Vec<f64>,
        invariants: InvariantSummary,
    }

    let eval = |index: usize| -> Result<(usize, PathDecomposition, crate::ensemble::PathInvariants)> {
        let r = spec.realize_path(index, table.as_ref())?;
        r.validate_hypotheses(hypothesis_tol)?;
        let inv = r.invariants(invariant_probes)?;
        let dec = build_path_decomposition(&r.pair.x, &r.pair.y, &r.v, &r.z, params)?;
        Ok((index, dec, inv))
    };

    let acc = try_fold_paths(
        spec.n_paths,
        CHUNK_PATHS,
        eval,
        || Acc {
            levels: Vec::new(),
            truncated: 0,
            zero_foot: 0,
            z_star: Vec::new(),
            sparse_sum: Vec::new(),
            invariants: InvariantSummary::default(),
        },
        |acc, (index, dec, inv)| {
            for (depth, stop) in dec.stops.iter().enumerate() {
                if acc.levels.len() <= depth {
                    acc.levels.push(LevelRecord::default());
                }
                let rec = &mut acc.levels[depth];
                rec.members.push(index as u32);
                rec.stop_index.push(stop.t as u32);
                rec.stopped_x.push(stop.stopped_x);
            }
            acc.truncated += dec.truncated as usize;
            acc.zero_foot += dec.zero_foot as usize;
            acc.z_star.push(dec.z_star);
            acc.sparse_sum.push(dec.sparse_sum);
            acc.invariants.absorb(&inv);
            // The decomposition's own refoot margin uses the true stopping
            // feet; fold it into the same aggregate.
            acc.invariants.worst_refoot_excess =
                acc.invariants.worst_refoot_excess.max(dec.refoot_excess);
        },
        |acc, other| {
            for (depth, rec) in other.levels.into_iter().enumerate() {
                if acc.levels.len() <= depth {
                    acc.levels.push(LevelRecord::default());
                }
                let dst = &mut acc.levels[depth];
                dst.members.extend(rec.members);
                dst.stop_index.extend(rec.stop_index);
                dst.stopped_x.extend(rec.stopped_x);
            }
            acc.truncated += other.truncated;
            acc.zero_foot += other.zero_foot;
            acc.z_star.extend(other.z_star);
            acc.sparse_sum.extend(other.sparse_sum);
            acc.invariants.merge(&other.invariants);
        },
    )?;

    Ok(SparseDecomposition {
        params: *params,
        n_paths: spec.n_paths,
        levels: acc.levels,
        truncated_paths: acc.truncated,
        zero_foot_paths: acc.zero_foot,
        z_star: acc.z_star,
        sparse_sum: acc.sparse_sum,
        invariants: acc.invariants,
    })
}

/// Per-path values of the sparse operator `S(X)`.
pub fn eval_sparse_operator(dec: &SparseDecomposition) -> &[f64] {
    &dec.sparse_sum
}

/// Outcome of the pointwise domination check.
#[derive(Debug, Clone, Copy)]
pub struct DominationReport {
    pub holds: bool,
    /// Max over paths of `Z* / S(X)`.
    pub worst_ratio: f64,
    /// Paths violating `Z* <= C (1 + slack) S(X)`.
    pub violations: usize,
    pub n_paths: usize,
}

/// Checks `Z* <= C (1 + slack) S(X)` on every path of the decomposition.
pub fn check_domination(dec: &SparseDecomposition, slack: f64) -> Result<DominationReport> {
    if !(slack >= 0.0) {
        return Err(SimError::InvalidArgument(format!("slack must be >= 0, got {slack}")));
    }
    let c = dec.params.domination_constant;
    let mut worst_ratio = 0.0f64;
    let mut violations = 0usize;
    for (z_star, s) in dec.z_star.iter().zip(&dec.sparse_sum) {
        let ratio = z_star / s;
        worst_ratio = worst_ratio.max(ratio);
        if *z_star > c * (1.0 + slack) * s {
            violations += 1;
        }
    }
    Ok(DominationReport {
        holds: violations == 0,
        worst_ratio,
        violations,
        n_paths: dec.n_paths,
    })
}

/// Events readable from the stopped data of a level, keeping selector
/// measurability with respect to the stopping time by construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SparsitySelector {
    /// The whole level set `E_j`.
    WholeLevel,
    /// Members whose stopped value is at or above the level's median
    /// stopped value.
    StoppedAboveMedian,
}

impl SparsitySelector {
    pub fn label(&self) -> &'static str {
        match self {
            SparsitySelector::WholeLevel => "whole-level",
            SparsitySelector::StoppedAboveMedian => "stopped-above-median",
        }
    }
}

/// One level's sparsity test: is `P(A_j and E_{j+1}) <= P(A_j) / 2` within
/// three standard errors?
#[derive(Debug, Clone, Copy)]
pub struct SparsityRow {
    pub level: i32,
    pub p_a: f64,
    pub p_ab: f64,
    /// Standard error of the statistic `p_ab - p_a / 2`.
    pub sigma: f64,
    pub holds: bool,
}

/// Tabulates the sparsity condition for levels `-1 ..= max_level`. Levels
/// beyond the deepest populated one contribute exact-zero rows. Requires
/// `max_level + 1 < max_levels` so that membership one level deeper is
/// fully recorded even for truncated paths.
pub fn check_sparsity(
    dec: &SparseDecomposition,
    selector: SparsitySelector,
    max_level: i32,
) -> Result<Vec<SparsityRow>> {
    if max_level < -1 {
        return Err(SimError::InvalidArgument("max_level must be >= -1".into()));
    }
    if (max_level + 1) as usize >= dec.params.max_levels {
        return Err(SimError::InvalidArgument(format!(
            "sparsity at level {max_level} needs level {} which exceeds max_levels {}",
            max_level + 1,
            dec.params.max_levels
        )));
    }
    let n = dec.n_paths as f64;
    let mut rows = Vec::new();
    for level in -1..=max_level {
        let idx = (level + 1) as usize;
        let (count_a, count_ab) = if idx >= dec.levels.len() {
            (0usize, 0usize)
        } else {
            let rec = &dec.levels[idx];
            let selected: Vec<u32> = match selector {
                SparsitySelector::WholeLevel => rec.members.clone(),
                SparsitySelector::StoppedAboveMedian => {
                    let mut sorted = rec.stopped_x.clone();
                    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
                    if sorted.is_empty() {
                        Vec::new()
                    } else {
                        let median = sorted[sorted.len() / 2];
                        rec.members
                            .iter()
                            .zip(&rec.stopped_x)
                            .filter(|(_, x)| **x >= median)
                            .map(|(m, _)| *m)
                            .collect()
                    }
                }
            };
            let next: &[u32] =
                if idx + 1 < dec.levels.len() { &dec.levels[idx + 1].members } else { &[] };
            (selected.len(), intersection_size(&selected, next))
        };
        let p_a = count_a as f64 / n;
        let p_ab = count_ab as f64 / n;
        let stat = p_ab - 0.5 * p_a;
        let sigma = ((0.25 * p_a - stat * stat).max(0.0) / n).sqrt();
        rows.push(SparsityRow { level, p_a, p_ab, sigma, holds: stat <= 3.0 * sigma });
    }
    Ok(rows)
}

/// Size of the intersection of two ascending index lists.
fn intersection_size(a: &[u32], b: &[u32]) -> usize {
    let mut count = 0;
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                count += 1;
                i += 1;
                j += 1;
            }
        }
    }
    count
}

/// `Phi_p(x) = x^{max(1, 1/(p-1))}`.
pub fn phi_p(p: f64, x: f64) -> Result<f64> {
    if !(p > 1.0) || !p.is_finite() {
        return Err(SimError::InvalidArgument(format!("p must be > 1, got {p}")));
    }
    if !(x >= 0.0) {
        return Err(SimError::InvalidArgument(format!("x must be >= 0, got {x}")));
    }
    let exponent = (1.0 / (p - 1.0)).max(1.0);
    Ok(x.powf(exponent))
}

/// One path's contribution to the weighted maximal estimate.
#[derive(Debug, Clone, Copy)]
pub struct WeightedZSample {
    /// `sup_t |Z_t|` on the path.
    pub z_star: f64,
    /// Terminal value of the dominating martingale.
    pub x_term: f64,
    /// Weight evaluated on the path's terminal state.
    pub weight: f64,
}

/// Outcome of the weighted maximal check.
#[derive(Debug, Clone, Copy)]
pub struct WeightedCheck {
    /// `|Z*|_{L^p(w)} / (Phi_p(qp) |X|_{L^p(w)})`.
    pub ratio: f64,
    pub z_norm: f64,
    pub x_norm: f64,
    pub bound_constant: f64,
    pub holds: bool,
}

/// Default constant for the weighted maximal bound; matches the strong-type
/// constant `32 p^2 / (p - 1)` used by the spectral-side checks.
pub fn default_weighted_constant(p: f64) -> Result<f64> {
    if !(p > 1.0) || !p.is_finite() {
        return Err(SimError::InvalidArgument(format!("p must be > 1, got {p}")));
    }
    Ok(32.0 * p * p / (p - 1.0))
}

/// Evaluates the weighted estimate ratio
/// `|Z*|_{L^p(w)} <= C Phi_p(qp) |X|_{L^p(w)}` over per-path samples; `qp`
/// is the flow characteristic of the weight (spectral or empirical).
pub fn weighted_maximal_check(
    samples: &[WeightedZSample],
    p: f64,
    qp: f64,
    bound_constant: f64,
) -> Result<WeightedCheck> {
    if samples.is_empty() {
        return Err(SimError::InvalidArgument("no samples".into()));
    }
    if !(qp >= 1.0) || !qp.is_finite() {
        return Err(SimError::InvalidArgument(format!("characteristic must be >= 1, got {qp}")));
    }
    if !(bound_constant > 0.0) {
        return Err(SimError::InvalidArgument("bound constant must be positive".into()));
    }
    let phi = phi_p(p, qp)?;
    let n = samples.len() as f64;
    let mut z_sum = 0.0;
    let mut x_sum = 0.0;
    for s in samples {
        if !(s.weight > 0.0) || !s.weight.is_finite() {
            return Err(SimError::InvalidArgument(format!("weights must be positive, got {}", s.weight)));
        }
        z_sum += s.z_star.abs().powf(p) * s.weight;
        x_sum += s.x_term.abs().powf(p) * s.weight;
    }
    let z_norm = (z_sum / n).powf(1.0 / p);
    let x_norm = (x_sum / n).powf(1.0 / p);
    if !(x_norm > 0.0) {
        return Err(SimError::InvalidArgument("degenerate sample: |X|_{L^p(w)} = 0".into()));
    }
    let ratio = z_norm / (phi * x_norm);
    Ok(WeightedCheck { ratio, z_norm, x_norm, bound_constant, holds: ratio <= bound_constant })
}

/// Empirical lower estimate of the filtration characteristic along visited
/// Markov states: `sup_i qw[i] * qdual[i]^{p-1}`, where `qw` and `qdual`
/// are the conditional expectations (harmonic extensions) of the weight and
/// its dual evaluated at the states the ensemble visited. Restricting the
/// defining sup over stopping times to visited states makes this a lower
/// bound for the grid characteristic.
pub fn filtration_characteristic_estimate(qw: &[f64], qdual: &[f64], p: f64) -> Result<f64> {
    if qw.is_empty() || qw.len() != qdual.len() {
        return Err(SimError::DimensionMismatch { expected: qw.len().max(1), got: qdual.len() });
    }
    if !(p > 1.0) || !p.is_finite() {
        return Err(SimError::InvalidArgument(format!("p must be > 1, got {p}")));
    }
    let mut sup = 0.0f64;
    for (w, dual) in qw.iter().zip(qdual) {
        if !(*w > 0.0) || !(*dual > 0.0) {
            return Err(SimError::InvalidArgument(
                "conditional weight values must be positive".into(),
            ));
        }
        sup = sup.max(w * dual.powf(p - 1.0));
    }
    Ok(sup)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drift::{solve_z, synth_v, DriftKind};
    use crate::process::{TimeGrid, TransformKind};

    /// The worked example: X rises 1 -> 6 linearly over ten steps with unit
    /// transform and no drift, so Y = X - 1 and Z = Y.
    fn hand_path() -> (ScalarPath, VectorPath, DriftMatrixProcess, VectorPath) {
        let grid = TimeGrid::new(1.0, 10).unwrap();
        let x_vals: Vec<f64> = (0..=10).map(|k| 1.0 + 0.5 * k as f64).collect();
        let y_vals: Vec<f64> = x_vals.iter().map(|x| x - 1.0).collect();
        let x = ScalarPath::new(grid, x_vals).unwrap();
        let y = VectorPath::new(grid, 1, y_vals).unwrap();
        let v = synth_v(grid, 1, DriftKind::Zero, 0, 0).unwrap();
        let z = solve_z(&v, &y, &[0.0]).unwrap();
        (x, y, v, z)
    }

    #[test]
    fn hand_path_decomposition_matches_frozen_values() {
        let (x, y, v, z) = hand_path();
        assert_eq!(maximal(&z), 5.0);

        let dec = build_path_decomposition(&x, &y, &v, &z, &SparseParams::default()).unwrap();
        // The rescaled processes first exceed 4 strictly at X = 4.5
        // (index 7; the exact-threshold touch X = 4 at index 6 is not a
        // hit of the open interval).
        assert_eq!(dec.stops.len(), 2);
        assert_eq!(dec.stops[0], LevelStop { t: 0, stopped_x: 1.0 });
        assert_eq!(dec.stops[1], LevelStop { t: 7, stopped_x: 4.5 });
        assert!((dec.sparse_sum - 5.5).abs() < 1e-12);
        assert_eq!(dec.z_star, 5.0);
        assert!(!dec.truncated);
        assert!(!dec.zero_foot);
        // Z* = 5 <= 8 * 5.5.
        assert!(dec.z_star <= 8.0 * dec.sparse_sum);

        let t0 = hitting_time(&z, &x, 4.0, 0).unwrap();
        assert_eq!(t0, StoppingIndex(Some(7)));
        let never = hitting_time(&z, &x, 100.0, 0).unwrap();
        assert!(!never.is_finite());
    }

    #[test]
    fn bounded_path_stops_at_a_single_level() {
        let grid = TimeGrid::new(1.0, 8).unwrap();
        let x = ScalarPath::new(grid, vec![1.0; 9]).unwrap();
        let y = VectorPath::new(grid, 1, vec![0.0; 9]).unwrap();
        let v = synth_v(grid, 1, DriftKind::Zero, 0, 0).unwrap();
        let z = solve_z(&v, &y, &[0.0]).unwrap();
        let dec = build_path_decomposition(&x, &y, &v, &z, &SparseParams::default()).unwrap();
        assert_eq!(dec.stops.len(), 1);
        assert_eq!(dec.sparse_sum, 1.0);
        assert_eq!(dec.z_star, 0.0);

        let bad = ScalarPath::new(grid, vec![0.0; 9]).unwrap();
        assert!(build_path_decomposition(&bad, &y, &v, &z, &SparseParams::default()).is_err());
    }

    #[test]
    fn maximal_is_homogeneous() {
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let p = VectorPath::new(grid, 2, vec![0.0, 1.0, 2.0, -1.0, 0.5, 0.5, -3.0, 0.0, 1.0, 1.0])
            .unwrap();
        let scaled_vals: Vec<f64> = p.values().iter().map(|v| -2.5 * v).collect();
        let scaled = VectorPath::new(grid, 2, scaled_vals).unwrap();
        assert!((maximal(&scaled) - 2.5 * maximal(&p)).abs() < 1e-12);
        let constant = VectorPath::new(grid, 1, vec![-1.5; 5]).unwrap();
        assert_eq!(maximal(&constant), 1.5);
    }

    #[test]
    fn ensemble_decomposition_is_nested_dominated_and_sparse() {
        let spec = EnsembleSpec {
            grid: TimeGrid::new(4.0, 2_000).unwrap(),
            dim: 2,
            x0: 1.0,
            transform: TransformKind::Rotating,
            drift: DriftKind::ScaledIdentity(-1.0),
            n_paths: 3_000,
            master_seed: 61,
        };
        let dec = decompose_ensemble(&spec, &SparseParams::default(), 1e-9, &[0, 1_000]).unwrap();
        assert_eq!(dec.n_paths, 3_000);
        assert_eq!(dec.levels[0].members.len(), 3_000);
        assert_eq!(dec.truncated_paths, 0);

        // Nesting: each level's members are a subset of the previous level's,
        // with non-decreasing stopping indices.
        for depth in 1..dec.levels.len() {
            let prev = &dec.levels[depth - 1];
            let cur = &dec.levels[depth];
            assert!(cur.members.len() <= prev.members.len());
            assert_eq!(intersection_size(&cur.members, &prev.members), cur.members.len());
            for (m, t) in cur.members.iter().zip(&cur.stop_index) {
                let pos = prev.members.binary_search(m).unwrap();
                assert!(prev.stop_index[pos] <= *t);
            }
        }

        let report = check_domination(&dec, 0.05).unwrap();
        assert!(report.holds, "{report:?}");
        assert!(report.worst_ratio <= 8.0 * 1.05);

        for selector in [SparsitySelector::WholeLevel, SparsitySelector::StoppedAboveMedian] {
            let rows = check_sparsity(&dec, selector, 6).unwrap();
            assert_eq!(rows.len(), 8);
            for row in &rows {
                assert!(row.holds, "{selector:?} {row:?}");
                assert!(row.p_ab <= row.p_a + 1e-15);
            }
        }
        assert!(check_sparsity(&dec, SparsitySelector::WholeLevel, 63).is_err());

        assert!(dec.invariants.all_hold(1e-9), "{:?}", dec.invariants);
        assert_eq!(eval_sparse_operator(&dec).len(), 3_000);
        assert!(dec.sparse_sum.iter().all(|s| *s >= 1.0));
    }

    #[test]
    fn phi_values_match_the_formula() {
        assert_eq!(phi_p(2.0, 5.0).unwrap(), 5.0);
        assert_eq!(phi_p(3.0, 4.0).unwrap(), 4.0);
        assert_eq!(phi_p(1.5, 3.0).unwrap(), 9.0);
        assert!(phi_p(1.0, 2.0).is_err());
        assert!(phi_p(2.0, -1.0).is_err());
        // Monotone in x; continuous across the exponent kink at p = 2.
        assert!(phi_p(1.5, 4.0).unwrap() > phi_p(1.5, 3.0).unwrap());
        let below = phi_p(2.0 - 1e-9, 7.0).unwrap();
        let above = phi_p(2.0 + 1e-9, 7.0).unwrap();
        assert!((below - above).abs() < 1e-6);
    }

    #[test]
    fn weighted_check_is_scale_invariant_in_the_weight() {
        let samples: Vec<WeightedZSample> = (0..100)
            .map(|i| {
                let t = i as f64 / 100.0;
                WeightedZSample {
                    z_star: 1.0 + t,
                    x_term: 0.5 + t * t,
                    weight: 1.0 + 0.5 * (6.28 * t).cos(),
                }
            })
            .collect();
        let doubled: Vec<WeightedZSample> = samples
            .iter()
            .map(|s| WeightedZSample { weight: 2.0 * s.weight, ..*s })
            .collect();
        let c = default_weighted_constant(2.0).unwrap();
        assert_eq!(c, 128.0);
        let a = weighted_maximal_check(&samples, 2.0, 1.3, c).unwrap();
        let b = weighted_maximal_check(&doubled, 2.0, 1.3, c).unwrap();
        assert!((a.ratio - b.ratio).abs() < 1e-12);
        assert!(a.holds);

        assert!(weighted_maximal_check(&samples, 2.0, 0.5, c).is_err());
        let zero_weight =
            vec![WeightedZSample { z_star: 1.0, x_term: 1.0, weight: 0.0 }];
        assert!(weighted_maximal_check(&zero_weight, 2.0, 1.0, c).is_err());
    }

    #[test]
    fn filtration_estimate_is_one_for_the_unit_weight() {
        let ones = vec![1.0; 50];
        let est = filtration_characteristic_estimate(&ones, &ones, 2.0).unwrap();
        assert_eq!(est, 1.0);
        let qw = vec![1.5, 0.8, 1.2];
        let qd = vec![0.9, 1.4, 1.0];
        let est = filtration_characteristic_estimate(&qw, &qd, 3.0).unwrap();
        let expect = (1.5f64 * 0.9f64.powi(2)).max(0.8 * 1.4f64.powi(2)).max(1.2 * 1.0);
        assert!((est - expect).abs() < 1e-12);
        assert!(filtration_characteristic_estimate(&qw, &qd[..2], 2.0).is_err());
        assert!(filtration_characteristic_estimate(&[1.0, -1.0], &[1.0, 1.0], 2.0).is_err());
    }
}
