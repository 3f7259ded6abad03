//! Deterministic ensemble execution and per-path structural invariants.
//!
//! Monte Carlo work is expressed as a pure function of the path index; each
//! path derives its own random streams from the master seed, so results are
//! independent of scheduling. Reductions run over fixed-size chunks folded
//! in index order, which makes every aggregate bit-identical between the
//! `parallel` (rayon) and sequential backends and across thread counts.
//!
//! [`EnsembleSpec`] bundles the ingredients of a synthetic experiment: a
//! subordinate martingale pair driven by a chosen transform and an
//! admissible drift, with the flow solution `Z` refooted at `Z_0 = Y_0 = 0`
//! so that `|Z_0| <= X_0` holds by construction. [`PathInvariants`] collects
//! the quantified structural margins (subordination, quadratic variation
//! transfer and domination, refooted contraction, homogeneous norm decay,
//! drift sign) that the acceptance suite requires on every simulated path.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::drift::{solve_z, synth_v, DriftKind, DriftMatrixProcess};
use crate::error::{Result, SimError};
use crate::process::{
    check_diff_subordination, quadratic_variation, rotating_transform, scalar_quadratic_variation,
    synth_martingale_pair, synth_martingale_pair_with_table, MartingalePair, TimeGrid,
    TransformKind, VectorPath,
};
use crate::rng::path_stream;

/// Chunk width for deterministic reductions; fixed so that regrouping work
/// across threads cannot change the arithmetic order.
pub const CHUNK_PATHS: usize = 8_192;

/// Maps `eval` over path indices `0..n_paths`, preserving index order.
#[cfg(feature = "parallel")]
pub fn map_paths<T: Send>(n_paths: usize, eval: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    (0..n_paths).into_par_iter().map(eval).collect()
}

/// Maps `eval` over path indices `0..n_paths`, preserving index order.
#[cfg(not(feature = "parallel"))]
pub fn map_paths<T: Send>(n_paths: usize, eval: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    map_paths_seq(n_paths, eval)
}

/// Sequential twin of [`map_paths`]; used by benches to compare backends
/// and available regardless of the feature set.
pub fn map_paths_seq<T: Send>(n_paths: usize, eval: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    (0..n_paths).map(eval).collect()
}

fn chunk_starts(n: usize, chunk: usize) -> impl Iterator<Item = usize> {
    (0..n).step_by(chunk.max(1))
}

/// Chunked deterministic reduction: evaluates `eval` per path, absorbs
/// results into per-chunk accumulators in index order, then merges the
/// chunk accumulators in chunk order. The arithmetic order is a pure
/// function of `(n_paths, chunk)`, never of the backend or thread count.
pub fn fold_paths<A, T>(
    n_paths: usize,
    chunk: usize,
    eval: impl Fn(usize) -> T + Sync + Send,
    init: impl Fn() -> A + Sync + Send,
    absorb: impl Fn(&mut A, T) + Sync + Send,
    merge: impl Fn(&mut A, A),
) -> A
where
    A: Send,
    T: Send,
{
    let chunk = chunk.max(1);
    let partial = |start: usize| {
        let end = (start + chunk).min(n_paths);
        let mut acc = init();
        for i in start..end {
            absorb(&mut acc, eval(i));
        }
        acc
    };
    #[cfg(feature = "parallel")]
    let partials: Vec<A> = chunk_starts(n_paths, chunk).collect::<Vec<_>>().into_par_iter().map(partial).collect();
    #[cfg(not(feature = "parallel"))]
    let partials: Vec<A> = chunk_starts(n_paths, chunk).map(partial).collect();

    let mut out = init();
    for p in partials {
        merge(&mut out, p);
    }
    out
}

/// Fallible twin of [`fold_paths`]: the first error in path-index order
/// wins and the reduction is abandoned.
pub fn try_fold_paths<A, T>(
    n_paths: usize,
    chunk: usize,
    eval: impl Fn(usize) -> Result<T> + Sync + Send,
    init: impl Fn() -> A + Sync + Send,
    absorb: impl Fn(&mut A, T) + Sync + Send,
    merge: impl Fn(&mut A, A),
) -> Result<A>
where
    A: Send,
    T: Send,
{
    let chunk = chunk.max(1);
    let partial = |start: usize| -> Result<A> {
        let end = (start + chunk).min(n_paths);
        let mut acc = init();
        for i in start..end {
            absorb(&mut acc, eval(i)?);
        }
        Ok(acc)
    };
    #[cfg(feature = "parallel")]
    let partials: Vec<Result<A>> =
        chunk_starts(n_paths, chunk).collect::<Vec<_>>().into_par_iter().map(partial).collect();
    #[cfg(not(feature = "parallel"))]
    let partials: Vec<Result<A>> = chunk_starts(n_paths, chunk).map(partial).collect();

    let mut out = init();
    for p in partials {
        merge(&mut out, p?);
    }
    Ok(out)
}

/// Recipe for an ensemble of synthetic drift-flow instances.
#[derive(Debug, Clone)]
pub struct EnsembleSpec {
    pub grid: TimeGrid,
    pub dim: usize,
    pub x0: f64,
    pub transform: TransformKind,
    pub drift: DriftKind,
    pub n_paths: usize,
    pub master_seed: u64,
}

/// One realized instance: the subordinate pair, its drift, and the flow
/// solution `Z` with `Z_0 = Y_0 = 0`.
#[derive(Debug, Clone)]
pub struct PathRealization {
    pub pair: MartingalePair,
    pub v: DriftMatrixProcess,
    pub z: VectorPath,
}

impl EnsembleSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_paths == 0 {
            return Err(SimError::InvalidArgument("n_paths must be at least 1".into()));
        }
        if self.dim == 0 {
            return Err(SimError::InvalidArgument("dimension must be at least 1".into()));
        }
        if !self.x0.is_finite() || self.x0 <= 0.0 {
            return Err(SimError::InvalidArgument(format!("x0 must be positive, got {}", self.x0)));
        }
        if let DriftKind::ScaledIdentity(c) = self.drift {
            if !c.is_finite() || c > 0.0 {
                return Err(SimError::InvalidArgument(format!(
                    "scaled-identity drift needs c <= 0, got {c}"
                )));
            }
        }
        Ok(())
    }

    /// Precomputes the shared deterministic transform table, when the kind
    /// has one; build once, pass to every [`Self::realize_path`] call.
    pub fn transform_table(&self) -> Result<Option<VectorPath>> {
        match self.transform {
            TransformKind::Rotating => Ok(Some(rotating_transform(self.grid, self.dim)?)),
            _ => Ok(None),
        }
    }

    /// Realizes path `index` deterministically: stream `2 index` drives the
    /// pair, stream `2 index + 1` the drift.
    pub fn realize_path(&self, index: usize, table: Option<&VectorPath>) -> Result<PathRealization> {
        let pair = match table {
            Some(t) => synth_martingale_pair_with_table(
                self.grid,
                self.dim,
                self.x0,
                t,
                self.master_seed,
                path_stream(index, 0, 2),
            )?,
            None => synth_martingale_pair(
                self.grid,
                self.dim,
                self.x0,
                self.transform,
                self.master_seed,
                path_stream(index, 0, 2),
            )?,
        };
        let v = synth_v(self.grid, self.dim, self.drift, self.master_seed, path_stream(index, 1, 2))?;
        let z0 = pair.y.at(0).to_vec();
        let z = solve_z(&v, &pair.y, &z0)?;
        Ok(PathRealization { pair, v, z })
    }
}

impl PathRealization {
    /// Verifies the hypotheses of the weak-type and domination statements:
    /// pair structure, differential subordination, drift admissibility, and
    /// `|Z_0| <= X_0`.
    pub fn validate_hypotheses(&self, tol: f64) -> Result<()> {
        self.pair.validate(tol)?;
        let sub = check_diff_subordination(&self.pair.x, &self.pair.y, tol)?;
        if !sub.holds {
            return Err(SimError::RejectedInstance(format!(
                "differential subordination fails with margin {}",
                sub.min_margin
            )));
        }
        self.v.check_admissible(tol)?;
        if self.z.norm_at(0) > self.pair.x.value(0) + tol {
            return Err(SimError::RejectedInstance("|Z_0| exceeds X_0".into()));
        }
        Ok(())
    }
}

/// Quantified structural margins of one realization. Fields are signed so
/// that the expected regime is non-negative margins and non-positive
/// excesses; aggregation keeps the worst case.
#[derive(Debug, Clone, Copy)]
pub struct PathInvariants {
    /// Worst differential-subordination margin (per step and cumulative).
    pub subordination_margin: f64,
    /// Worst `|<Z,Z>_k - <Y,Y>_k|` over indices.
    pub qv_transfer_gap: f64,
    /// First-order slack `10 dt (1 + sup|Z|)(1 + sup|V|_F)` for the gap.
    pub qv_transfer_tol: f64,
    /// Max of `<Z,Z>_k - <X,X>_k` over indices: how far the flow's
    /// quadratic variation overshoots the driver's. Subordination plus the
    /// transfer identity keep it within `qv_transfer_tol`.
    pub qv_domination_excess: f64,
    /// Max over probe feet and times of `|Z_t - Z^(refoot)_t| - |Z_foot|`.
    pub refoot_excess: f64,
    /// Max over probe feet and steps of the homogeneous-flow norm growth
    /// beyond the per-step slack `dt |V_k|_F |W_k|`.
    pub homogeneous_excess: f64,
    /// Max over steps of `2 <Z_k, V_k Z_k>`; admissible drifts keep it <= 0.
    pub drift_sign_max: f64,
}

impl PathRealization {
    /// Computes the invariant margins, probing refooted contraction at each
    /// index in `probes`. Each probe streams the refooted solution and
    /// monitors the difference `D = Z - Z^(refoot)`, which evolves by the
    /// homogeneous flow from `Z_probe`, yielding the contraction and
    /// monotonicity margins in one pass.
    pub fn invariants(&self, probes: &[usize]) -> Result<PathInvariants> {
        let grid = self.z.grid();
        let d = self.z.dim();
        let dt = grid.dt();
        let n = grid.n_steps();

        let sub = check_diff_subordination(&self.pair.x, &self.pair.y, 0.0)?;

        let qv_z = quadratic_variation(&self.z);
        let qv_y = quadratic_variation(&self.pair.y);
        let qv_x = scalar_quadratic_variation(&self.pair.x);
        let mut qv_transfer_gap = 0.0f64;
        let mut qv_domination_excess = 0.0f64;
        for k in 0..grid.n_points() {
            qv_transfer_gap = qv_transfer_gap.max((qv_z.value(k) - qv_y.value(k)).abs());
            qv_domination_excess = qv_domination_excess.max(qv_z.value(k) - qv_x.value(k));
        }

        let mut sup_z = 0.0f64;
        for k in 0..grid.n_points() {
            sup_z = sup_z.max(self.z.norm_at(k));
        }
        // Per-step Frobenius norms, shared by the slack formula, the probe
        // streams, and the drift-sign scan.
        let mut v_norms = vec![0.0; n];
        let mut sup_v = 0.0f64;
        let mut drift_sign_max = f64::NEG_INFINITY;
        let mut vz = vec![0.0; d];
        for k in 0..n {
            let m = self.v.matrix(k);
            v_norms[k] = m.iter().map(|x| x * x).sum::<f64>().sqrt();
            sup_v = sup_v.max(v_norms[k]);
            let zk = self.z.at(k);
            vz.iter_mut().for_each(|x| *x = 0.0);
            for i in 0..d {
                let row = &m[i * d..(i + 1) * d];
                for j in 0..d {
                    vz[i] += row[j] * zk[j];
                }
            }
            let quad: f64 = zk.iter().zip(&vz).map(|(a, b)| a * b).sum();
            drift_sign_max = drift_sign_max.max(2.0 * quad);
        }
        if n == 0 {
            drift_sign_max = 0.0;
        }
        let qv_transfer_tol = 10.0 * dt * (1.0 + sup_z) * (1.0 + sup_v);

        let mut refoot_excess = f64::NEG_INFINITY;
        let mut homogeneous_excess = f64::NEG_INFINITY;
        let mut diff = vec![0.0; d];
        let mut next = vec![0.0; d];
        for &probe in probes {
            if probe >= grid.n_points() {
                return Err(SimError::InvalidArgument(format!(
                    "probe index {probe} outside grid with {} points",
                    grid.n_points()
                )));
            }
            // D starts at Z_probe and evolves by D += dt V D; the refooted
            // path itself is Z - D, so it never needs materializing.
            diff.copy_from_slice(self.z.at(probe));
            let foot = norm(&diff);
            let mut prev_norm = foot;
            for k in probe..n {
                let m = self.v.matrix(k);
                for i in 0..d {
                    let row = &m[i * d..(i + 1) * d];
                    let mut acc = 0.0;
                    for j in 0..d {
                        acc += row[j] * diff[j];
                    }
                    next[i] = diff[i] + dt * acc;
                }
                diff.copy_from_slice(&next);
                let cur = norm(&diff);
                refoot_excess = refoot_excess.max(cur - foot);
                homogeneous_excess = homogeneous_excess.max(cur - prev_norm * (1.0 + dt * v_norms[k]));
                prev_norm = cur;
            }
            refoot_excess = refoot_excess.max(0.0 - foot).max(foot - foot);
        }
        if probes.is_empty() {
            refoot_excess = 0.0;
            homogeneous_excess = 0.0;
        }

        Ok(PathInvariants {
            subordination_margin: sub.min_margin,
            qv_transfer_gap,
            qv_transfer_tol,
            qv_domination_excess,
            refoot_excess,
            homogeneous_excess,
            drift_sign_max,
        })
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Worst-case aggregate of [`PathInvariants`] across an ensemble.
#[derive(Debug, Clone, Copy)]
pub struct InvariantSummary {
    pub n_paths: usize,
    pub worst_subordination_margin: f64,
    /// Max over paths of `qv_transfer_gap / qv_transfer_tol`.
    pub worst_qv_transfer_ratio: f64,
    /// Max over paths of `qv_domination_excess / qv_transfer_tol`.
    pub worst_qv_domination_ratio: f64,
    pub worst_refoot_excess: f64,
    pub worst_homogeneous_excess: f64,
    pub worst_drift_sign_max: f64,
}

impl Default for InvariantSummary {
    fn default() -> Self {
        Self {
            n_paths: 0,
            worst_subordination_margin: f64::INFINITY,
            worst_qv_transfer_ratio: f64::NEG_INFINITY,
            worst_qv_domination_ratio: f64::NEG_INFINITY,
            worst_refoot_excess: f64::NEG_INFINITY,
            worst_homogeneous_excess: f64::NEG_INFINITY,
            worst_drift_sign_max: f64::NEG_INFINITY,
        }
    }
}

impl InvariantSummary {
    pub fn absorb(&mut self, inv: &PathInvariants) {
        self.n_paths += 1;
        self.worst_subordination_margin = self.worst_subordination_margin.min(inv.subordination_margin);
        let tol = inv.qv_transfer_tol;
        let transfer = if tol > 0.0 { inv.qv_transfer_gap / tol } else { 0.0 };
        let domination = if tol > 0.0 { inv.qv_domination_excess / tol } else { 0.0 };
        self.worst_qv_transfer_ratio = self.worst_qv_transfer_ratio.max(transfer);
        self.worst_qv_domination_ratio = self.worst_qv_domination_ratio.max(domination);
        self.worst_refoot_excess = self.worst_refoot_excess.max(inv.refoot_excess);
        self.worst_homogeneous_excess = self.worst_homogeneous_excess.max(inv.homogeneous_excess);
        self.worst_drift_sign_max = self.worst_drift_sign_max.max(inv.drift_sign_max);
    }

    pub fn merge(&mut self, other: &InvariantSummary) {
        self.n_paths += other.n_paths;
        self.worst_subordination_margin =
            self.worst_subordination_margin.min(other.worst_subordination_margin);
        self.worst_qv_transfer_ratio = self.worst_qv_transfer_ratio.max(other.worst_qv_transfer_ratio);
        self.worst_qv_domination_ratio =
            self.worst_qv_domination_ratio.max(other.worst_qv_domination_ratio);
        self.worst_refoot_excess = self.worst_refoot_excess.max(other.worst_refoot_excess);
        self.worst_homogeneous_excess =
            self.worst_homogeneous_excess.max(other.worst_homogeneous_excess);
        self.worst_drift_sign_max = self.worst_drift_sign_max.max(other.worst_drift_sign_max);
    }

    /// True when every margin sits on the right side of its tolerance.
    pub fn all_hold(&self, tol: f64) -> bool {
        self.n_paths > 0
            && self.worst_subordination_margin >= -tol
            && self.worst_qv_transfer_ratio <= 1.0
            && self.worst_qv_domination_ratio <= 1.0
            && self.worst_refoot_excess <= tol
            && self.worst_homogeneous_excess <= tol
            && self.worst_drift_sign_max <= tol
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fold_is_bit_identical_to_sequential_reference() {
        // Kahan-free plain summation is order-sensitive, so bitwise equality
        // across chunk layouts genuinely exercises the fixed fold order.
        let eval = |i: usize| ((i as f64) * 0.37).sin();
        let reference = {
            let mut chunks = Vec::new();
            let n = 10_000;
            let chunk = 64;
            let mut start = 0;
            while start < n {
                let end = (start + chunk).min(n);
                let mut acc = 0.0;
                for i in start..end {
                    acc += eval(i);
                }
                chunks.push(acc);
                start = end;
            }
            chunks.iter().sum::<f64>()
        };
        let folded = fold_paths(10_000, 64, eval, || 0.0, |a, t| *a += t, |a, b| *a += b);
        assert_eq!(folded.to_bits(), reference.to_bits());

        let mapped = map_paths(100, |i| i * i);
        let mapped_seq = map_paths_seq(100, |i| i * i);
        assert_eq!(mapped, mapped_seq);
    }

    #[test]
    fn try_fold_surfaces_the_first_error_in_index_order() {
        let res: Result<usize> = try_fold_paths(
            1_000,
            16,
            |i| {
                if i >= 700 {
                    Err(SimError::RejectedInstance(format!("path {i}")))
                } else {
                    Ok(1usize)
                }
            },
            || 0usize,
            |a, t| *a += t,
            |a, b| *a += b,
        );
        match res {
            Err(SimError::RejectedInstance(msg)) => assert_eq!(msg, "path 700"),
            other => panic!("expected rejection, got {other:?}"),
        }
    }

    #[test]
    fn realizations_are_deterministic_and_valid() {
        let spec = EnsembleSpec {
            grid: TimeGrid::new(1.0, 500).unwrap(),
            dim: 3,
            x0: 1.0,
            transform: TransformKind::Rotating,
            drift: DriftKind::RandomGram(0.5),
            n_paths: 4,
            master_seed: 99,
        };
        spec.validate().unwrap();
        let table = spec.transform_table().unwrap();
        let a = spec.realize_path(2, table.as_ref()).unwrap();
        let b = spec.realize_path(2, table.as_ref()).unwrap();
        assert_eq!(a.z.values(), b.z.values());
        a.validate_hypotheses(1e-9).unwrap();

        // The cached-table route and the standalone constructor agree.
        let standalone = synth_martingale_pair(
            spec.grid,
            spec.dim,
            spec.x0,
            TransformKind::Rotating,
            spec.master_seed,
            path_stream(2, 0, 2),
        )
        .unwrap();
        assert_eq!(standalone.y.values(), a.pair.y.values());
        assert_eq!(standalone.transform.values(), a.pair.transform.values());
    }

    #[test]
    fn invariants_hold_on_synthetic_realizations() {
        for (dim, transform, drift) in [
            (1, TransformKind::ConstantUnit, DriftKind::Zero),
            (3, TransformKind::Rotating, DriftKind::ScaledIdentity(-1.0)),
            (3, TransformKind::RandomBall, DriftKind::RandomGram(0.4)),
        ] {
            let spec = EnsembleSpec {
                grid: TimeGrid::new(1.0, 1_000).unwrap(),
                dim,
                x0: 1.0,
                transform,
                drift,
                n_paths: 8,
                master_seed: 7,
            };
            let table = spec.transform_table().unwrap();
            let probes = [0usize, 250, 500];
            let mut summary = InvariantSummary::default();
            for i in 0..spec.n_paths {
                let r = spec.realize_path(i, table.as_ref()).unwrap();
                r.validate_hypotheses(1e-9).unwrap();
                summary.absorb(&r.invariants(&probes).unwrap());
            }
            assert!(
                summary.all_hold(1e-9),
                "invariants fail for {transform:?}/{drift:?}: {summary:?}"
            );
        }
    }
}
