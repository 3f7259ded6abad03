//! Flat-torus function analysis: discrete Fourier modes, the harmonic
//! (Poisson) extension to the upper half-space, exact spectral Riesz
//! transforms, weights with their flow characteristics, and L^p norms.
//!
//! Functions live on a uniform periodic grid over `[0, 2 pi)^n`, `n <= 2`,
//! with the torus carrying total measure 1. Everything spectral follows
//! from the mode decomposition `f(x) = sum_k c_k e^{i k . x}`:
//!
//! * the extension `Q(f)(x, y)` multiplies mode `k` by `e^{-y |k|}`, so it
//!   is harmonic for `d_yy + Lap_x` and contracts toward the mean;
//! * the Riesz vector applies `i k_j / |k|` (zero on the mean), hence is a
//!   vector isometry on mean-zero functions;
//! * spatial derivatives apply `i k_j`; odd multipliers are zeroed on the
//!   ambiguous Nyquist line `k_j = m / 2`, the standard real-output
//!   convention for even grids.
//!
//! [`OffGridEvaluator`] flattens a function into its non-negligible modes
//! once, then evaluates `Q(f)` and its full gradient at arbitrary
//! continuous points in `O(modes)` per call: the price that makes
//! path-simulation with off-grid positions affordable.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Result, SimError};
use crate::rng::stream_rng;
use rand::Rng;

/// Uniform periodic grid on `[0, 2 pi)^{n_dims}` with `m` points per axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TorusGrid {
    n_dims: usize,
    m: usize,
}

impl TorusGrid {
    pub fn new(n_dims: usize, m: usize) -> Result<Self> {
        if !(1..=2).contains(&n_dims) {
            return Err(SimError::InvalidArgument(format!(
                "n_dims must be 1 or 2, got {n_dims}"
            )));
        }
        if m < 8 || !m.is_power_of_two() {
            return Err(SimError::InvalidArgument(format!(
                "points per axis must be a power of two >= 8, got {m}"
            )));
        }
        Ok(Self { n_dims, m })
    }

    pub fn n_dims(&self) -> usize {
        self.n_dims
    }

    /// Points per axis.
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn spacing(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.m as f64
    }

    /// Total number of grid points, `m^{n_dims}`.
    pub fn n_points(&self) -> usize {
        self.m.pow(self.n_dims as u32)
    }

    /// Coordinates of the flat index; the second entry is 0 in one
    /// dimension.
    pub fn point(&self, index: usize) -> [f64; 2] {
        let h = self.spacing();
        match self.n_dims {
            1 => [index as f64 * h, 0.0],
            _ => [(index / self.m) as f64 * h, (index % self.m) as f64 * h],
        }
    }

    /// Center of the grid cell with the given flat index: the cell
    /// `[i h, (i + 1) h)` has center `(i + 1/2) h` per axis.
    pub fn cell_center(&self, index: usize) -> [f64; 2] {
        let mut c = self.point(index);
        c[0] += 0.5 * self.spacing();
        if self.n_dims == 2 {
            c[1] += 0.5 * self.spacing();
        }
        c
    }

    /// Flat index of the grid cell `[i h, (i + 1) h)` containing `x`
    /// (coordinates taken mod `2 pi`).
    pub fn cell_index(&self, x: &[f64; 2]) -> usize {
        let h = self.spacing();
        let fold = |c: f64| -> usize {
            let i = (c / h).floor() as i64;
            i.rem_euclid(self.m as i64) as usize
        };
        match self.n_dims {
            1 => fold(x[0]),
            _ => fold(x[0]) * self.m + fold(x[1]),
        }
    }

    /// Signed frequency of a transform bin: `bin` for `bin <= m / 2`,
    /// else `bin - m`.
    fn freq(&self, bin: usize) -> i64 {
        if bin <= self.m / 2 {
            bin as i64
        } else {
            bin as i64 - self.m as i64
        }
    }

    /// Frequency vector of a flat bin index.
    fn freq_vec(&self, index: usize) -> [i64; 2] {
        match self.n_dims {
            1 => [self.freq(index), 0],
            _ => [self.freq(index / self.m), self.freq(index % self.m)],
        }
    }

    /// The bin carrying the conjugate frequency `-k` (Nyquist components
    /// map to themselves on an even grid).
    fn conjugate_bin(&self, index: usize) -> usize {
        let fold = |b: usize| -> usize {
            if b == 0 {
                0
            } else {
                self.m - b
            }
        };
        match self.n_dims {
            1 => fold(index),
            _ => fold(index / self.m) * self.m + fold(index % self.m),
        }
    }
}

fn fft_all(grid: TorusGrid, data: &mut [Complex<f64>], inverse: bool) {
    let mut planner = FftPlanner::new();
    let fft = if inverse {
        planner.plan_fft_inverse(grid.m())
    } else {
        planner.plan_fft_forward(grid.m())
    };
    let m = grid.m();
    match grid.n_dims() {
        1 => fft.process(data),
        _ => {
            for row in data.chunks_exact_mut(m) {
                fft.process(row);
            }
            let mut col = vec![Complex::new(0.0, 0.0); m];
            for j in 0..m {
                for i in 0..m {
                    col[i] = data[i * m + j];
                }
                fft.process(&mut col);
                for i in 0..m {
                    data[i * m + j] = col[i];
                }
            }
        }
    }
}

/// A real function on a [`TorusGrid`] with its Fourier coefficients cached:
/// `f(x_j) = sum_k modes[k] e^{i k . x_j}`.
#[derive(Debug, Clone)]
pub struct TorusGridFunction {
    grid: TorusGrid,
    values: Vec<f64>,
    modes: Vec<Complex<f64>>,
}

impl TorusGridFunction {
    pub fn new(grid: TorusGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_points() {
            return Err(SimError::DimensionMismatch {
                expected: grid.n_points(),
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(SimError::InvalidArgument("function contains a non-finite value".into()));
        }
        let mut modes: Vec<Complex<f64>> =
            values.iter().map(|v| Complex::new(*v, 0.0)).collect();
        fft_all(grid, &mut modes, false);
        let scale = 1.0 / grid.n_points() as f64;
        modes.iter_mut().for_each(|c| *c *= scale);
        Ok(Self { grid, values, modes })
    }

    /// Builds the function from Fourier coefficients; they must be
    /// conjugate-symmetric (real function) up to roundoff.
    pub fn from_modes(grid: TorusGrid, modes: Vec<Complex<f64>>) -> Result<Self> {
        if modes.len() != grid.n_points() {
            return Err(SimError::DimensionMismatch {
                expected: grid.n_points(),
                got: modes.len(),
            });
        }
        let mut data = modes.clone();
        fft_all(grid, &mut data, true);
        let scale = modes.iter().map(|c| c.norm()).fold(0.0f64, f64::max).max(1.0);
        let worst_imag = data.iter().map(|c| c.im.abs()).fold(0.0f64, f64::max);
        if worst_imag > 1e-9 * scale * (grid.n_points() as f64).sqrt() {
            return Err(SimError::InvalidArgument(
                "mode coefficients are not conjugate-symmetric; result would not be real".into(),
            ));
        }
        let values: Vec<f64> = data.iter().map(|c| c.re).collect();
        Ok(Self { grid, values, modes })
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn modes(&self) -> &[Complex<f64>] {
        &self.modes
    }

    pub fn mean(&self) -> f64 {
        self.modes[0].re
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Applies a spectral multiplier and transforms back. The multiplier
    /// must preserve conjugate symmetry; odd ones are expected to zero the
    /// Nyquist bins themselves.
    fn apply_multiplier(&self, mult: impl Fn(&[i64; 2]) -> Complex<f64>) -> Result<Self> {
        let modes: Vec<Complex<f64>> = (0..self.modes.len())
            .map(|i| self.modes[i] * mult(&self.grid.freq_vec(i)))
            .collect();
        Self::from_modes(self.grid, modes)
    }
}

fn knorm(k: &[i64; 2]) -> f64 {
    ((k[0] * k[0] + k[1] * k[1]) as f64).sqrt()
}

/// Harmonic extension to height `y`: mode `k` scaled by `e^{-y |k|}`.
pub fn poisson_extend(f: &TorusGridFunction, y: f64) -> Result<TorusGridFunction> {
    if !(y >= 0.0) || !y.is_finite() {
        return Err(SimError::InvalidArgument(format!("height must be >= 0, got {y}")));
    }
    f.apply_multiplier(|k| Complex::new((-y * knorm(k)).exp(), 0.0))
}

/// Exact gradient of the extension at height `y`: spatial components apply
/// `i k_j e^{-y |k|}` (Nyquist lines zeroed), the vertical one
/// `-|k| e^{-y |k|}`.
pub fn grad_q(f: &TorusGridFunction, y: f64) -> Result<(Vec<TorusGridFunction>, TorusGridFunction)> {
    if !(y >= 0.0) || !y.is_finite() {
        return Err(SimError::InvalidArgument(format!("height must be >= 0, got {y}")));
    }
    let grid = f.grid();
    let nyquist = (grid.m() / 2) as i64;
    let mut spatial = Vec::with_capacity(grid.n_dims());
    for j in 0..grid.n_dims() {
        spatial.push(f.apply_multiplier(|k| {
            if k[j] == nyquist {
                Complex::new(0.0, 0.0)
            } else {
                Complex::new(0.0, k[j] as f64) * (-y * knorm(k)).exp()
            }
        })?);
    }
    let vertical = f.apply_multiplier(|k| Complex::new(-knorm(k) * (-y * knorm(k)).exp(), 0.0))?;
    Ok((spatial, vertical))
}

/// The exact spectral Riesz vector: multiplier `i k_j / |k|` per component,
/// zero on the mean mode and on Nyquist lines.
pub fn riesz_spectral(f: &TorusGridFunction) -> Result<Vec<TorusGridFunction>> {
    let grid = f.grid();
    let nyquist = (grid.m() / 2) as i64;
    let mut out = Vec::with_capacity(grid.n_dims());
    for j in 0..grid.n_dims() {
        out.push(f.apply_multiplier(|k| {
            let norm = knorm(k);
            if norm == 0.0 || k[j] == nyquist {
                Complex::new(0.0, 0.0)
            } else {
                Complex::new(0.0, k[j] as f64 / norm)
            }
        })?);
    }
    Ok(out)
}

/// One non-negligible mode of an [`OffGridEvaluator`].
#[derive(Debug, Clone, Copy)]
struct Term {
    k: [f64; 2],
    knorm: f64,
    re: f64,
    im: f64,
    /// 2 for a conjugate pair folded into one term, 1 for a self-conjugate
    /// (Nyquist-type) bin.
    factor: f64,
}

/// Value and full gradient of the extension at one continuous point.
#[derive(Debug, Clone, Copy, Default)]
pub struct PointEval {
    pub value: f64,
    pub grad_x: [f64; 2],
    pub grad_y: f64,
}

/// Sparse trigonometric form of a grid function: evaluates `Q(f)` and its
/// gradient anywhere on the half-space in `O(modes)` per call, exactly (no
/// interpolation beyond floating point). Bins below `1e-13` of the largest
/// coefficient are dropped.
#[derive(Debug, Clone)]
pub struct OffGridEvaluator {
    mean: f64,
    terms: Vec<Term>,
}

impl OffGridEvaluator {
    pub fn new(f: &TorusGridFunction) -> Self {
        let grid = f.grid();
        let modes = f.modes();
        let cutoff = 1e-13 * modes.iter().map(|c| c.norm()).fold(0.0f64, f64::max);
        let mut terms = Vec::new();
        for (i, c) in modes.iter().enumerate() {
            if i == 0 || c.norm() <= cutoff {
                continue;
            }
            let conj = grid.conjugate_bin(i);
            if conj < i {
                continue;
            }
            let kv = grid.freq_vec(i);
            let k = [kv[0] as f64, kv[1] as f64];
            let factor = if conj == i { 1.0 } else { 2.0 };
            terms.push(Term { k, knorm: knorm(&kv), re: c.re, im: c.im, factor });
        }
        Self { mean: f.mean(), terms }
    }

    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }

    /// Evaluates at spatial point `x` (second coordinate ignored in one
    /// dimension) and height `y >= 0`.
    pub fn eval(&self, x: &[f64; 2], y: f64) -> PointEval {
        debug_assert!(y >= 0.0, "height must be >= 0, got {y}");
        let mut out = PointEval { value: self.mean, ..Default::default() };
        for t in &self.terms {
            let phase = t.k[0] * x[0] + t.k[1] * x[1];
            let (sin, cos) = phase.sin_cos();
            let damp = (-y * t.knorm).exp() * t.factor;
            let osc = t.re * cos - t.im * sin;
            let osc_grad = -t.re * sin - t.im * cos;
            out.value += damp * osc;
            out.grad_x[0] += damp * osc_grad * t.k[0];
            out.grad_x[1] += damp * osc_grad * t.k[1];
            out.grad_y -= t.knorm * damp * osc;
        }
        out
    }
}

/// A strictly positive weight on the torus. The exponent `p` is supplied
/// per use, not stored: the same weight can be probed across the whole
/// `p` sweep.
#[derive(Debug, Clone)]
pub struct WeightFunction {
    f: TorusGridFunction,
}

impl WeightFunction {
    pub fn new(f: TorusGridFunction) -> Result<Self> {
        let min = f.min_value();
        if !(min > 0.0) {
            return Err(SimError::InvalidArgument(format!(
                "weight must be strictly positive, min value {min}"
            )));
        }
        Ok(Self { f })
    }

    pub fn function(&self) -> &TorusGridFunction {
        &self.f
    }

    /// The dual weight `w^{-1/(p-1)}` entering the characteristic.
    pub fn dual(&self, p: f64) -> Result<TorusGridFunction> {
        if !(p > 1.0) || !p.is_finite() {
            return Err(SimError::InvalidArgument(format!("p must be > 1, got {p}")));
        }
        let exponent = -1.0 / (p - 1.0);
        let values: Vec<f64> = self.f.values().iter().map(|v| v.powf(exponent)).collect();
        TorusGridFunction::new(self.f.grid(), values)
    }
}

/// Geometric height ladder `{0} ∪ {2^j h : j = 0..}` up to at least
/// `4 pi`, `h` the grid spacing; beyond that the extension sits within
/// `e^{-4 pi}` of its mean and the product is resolved.
pub fn default_height_ladder(grid: TorusGrid) -> Vec<f64> {
    let mut ladder = vec![0.0];
    let mut y = grid.spacing();
    let y_max = 4.0 * std::f64::consts::PI;
    loop {
        ladder.push(y);
        if y >= y_max {
            break;
        }
        y *= 2.0;
    }
    ladder
}

/// Flow characteristic of a weight: the max over grid points and ladder
/// heights of `Q(w)(x, y) * (Q(w^{-1/(p-1)})(x, y))^{p-1}`. Always >= 1
/// (Hoelder applied to the extension averages), equal to 1 exactly for
/// constant weights, and invariant under scaling of the weight.
pub fn flow_characteristic(w: &WeightFunction, p: f64, ladder: &[f64]) -> Result<f64> {
    if ladder.is_empty() {
        return Err(SimError::InvalidArgument("height ladder must be non-empty".into()));
    }
    let dual = w.dual(p)?;
    let mut sup = 0.0f64;
    for &y in ladder {
        let qw = poisson_extend(w.function(), y)?;
        let qd = poisson_extend(&dual, y)?;
        for (a, b) in qw.values().iter().zip(qd.values()) {
            if !(*a > 0.0) || !(*b > 0.0) {
                return Err(SimError::InvalidArgument(
                    "extension of a positive weight lost positivity; weight too rough for the grid"
                        .into(),
                ));
            }
            sup = sup.max(a * b.powf(p - 1.0));
        }
    }
    Ok(sup)
}

/// `L^p` norm of a scalar function in the normalized torus measure, with
/// an optional weight.
pub fn lp_norm(f: &TorusGridFunction, w: Option<&WeightFunction>, p: f64) -> Result<f64> {
    lp_norm_vector(std::slice::from_ref(f), w, p)
}

/// `L^p` norm of a vector field given by component functions, using the
/// pointwise Euclidean norm.
pub fn lp_norm_vector(
    components: &[TorusGridFunction],
    w: Option<&WeightFunction>,
    p: f64,
) -> Result<f64> {
    if components.is_empty() {
        return Err(SimError::InvalidArgument("no components".into()));
    }
    if !(p >= 1.0) || !p.is_finite() {
        return Err(SimError::InvalidArgument(format!("p must be >= 1, got {p}")));
    }
    let grid = components[0].grid();
    if components.iter().any(|c| c.grid() != grid) {
        return Err(SimError::GridMismatch("components on different grids".into()));
    }
    if let Some(w) = w {
        if w.function().grid() != grid {
            return Err(SimError::GridMismatch("weight on a different grid".into()));
        }
    }
    let n = grid.n_points();
    let mut sum = 0.0;
    for i in 0..n {
        let mut norm2 = 0.0;
        for c in components {
            let v = c.values()[i];
            norm2 += v * v;
        }
        let weight = w.map_or(1.0, |w| w.function().values()[i]);
        sum += norm2.sqrt().powf(p) * weight;
    }
    Ok((sum / n as f64).powf(1.0 / p))
}

/// Both sides of the strong-type estimate for one `(f, w, p)`.
#[derive(Debug, Clone, Copy)]
pub struct BoundsReport {
    pub p: f64,
    /// `|Rf|_{L^p(w)}`.
    pub left: f64,
    /// `32 p^2 / (p-1) * char^{max(1, 1/(p-1))} * |f|_{L^p(w)}`.
    pub right: f64,
    pub ratio: f64,
    pub constant: f64,
    pub characteristic: f64,
    pub holds: bool,
}

/// Evaluates the Riesz estimate `|Rf|_{L^p(w)} <= 32 p^2/(p-1) *
/// Q(w)^{max(1,1/(p-1))} |f|_{L^p(w)}` with the exact spectral transform;
/// the characteristic is 1 when no weight is given.
pub fn check_bounds(
    f: &TorusGridFunction,
    w: Option<&WeightFunction>,
    p: f64,
) -> Result<BoundsReport> {
    if !(p > 1.0) || !p.is_finite() {
        return Err(SimError::InvalidArgument(format!("p must be > 1, got {p}")));
    }
    let rf = riesz_spectral(f)?;
    let left = lp_norm_vector(&rf, w, p)?;
    let characteristic = match w {
        Some(w) => flow_characteristic(w, p, &default_height_ladder(f.grid()))?,
        None => 1.0,
    };
    let constant = 32.0 * p * p / (p - 1.0);
    let char_power = characteristic.powf((1.0 / (p - 1.0)).max(1.0));
    let right = constant * char_power * lp_norm(f, w, p)?;
    let ratio = left / right;
    Ok(BoundsReport { p, left, right, ratio, constant, characteristic, holds: ratio <= 1.0 })
}

/// Doubles the resolution `factor` times by zero-padding the spectrum;
/// exact on band-limited content.
pub fn upsample(f: &TorusGridFunction, factor: usize) -> Result<TorusGridFunction> {
    if factor == 0 || !factor.is_power_of_two() {
        return Err(SimError::InvalidArgument(format!(
            "upsample factor must be a power of two >= 1, got {factor}"
        )));
    }
    let grid = f.grid();
    let fine = TorusGrid::new(grid.n_dims(), grid.m() * factor)?;
    let mut modes = vec![Complex::new(0.0, 0.0); fine.n_points()];
    for (i, c) in f.modes().iter().enumerate() {
        let k = grid.freq_vec(i);
        // Coarse Nyquist bins stand for +-m/2 at once; on the fine grid the
        // two are distinct, so split the coefficient to stay symmetric.
        for (ka, wa) in nyquist_split(grid.m(), k[0]) {
            for (kb, wb) in nyquist_split(grid.m(), k[1]) {
                modes[fine_bin(fine, ka, kb)] += c * (wa * wb);
            }
        }
    }
    TorusGridFunction::from_modes(fine, modes)
}

/// On the coarse grid, frequency `m/2` stands for both `+m/2` and `-m/2`;
/// on a finer grid those are distinct bins, each taking half the weight.
fn nyquist_split(coarse_m: usize, k: i64) -> Vec<(i64, f64)> {
    if k == (coarse_m / 2) as i64 {
        vec![(k, 0.5), (-k, 0.5)]
    } else {
        vec![(k, 1.0)]
    }
}

fn fine_bin(fine: TorusGrid, k0: i64, k1: i64) -> usize {
    let m = fine.m() as i64;
    let fold = |k: i64| -> usize { k.rem_euclid(m) as usize };
    match fine.n_dims() {
        1 => fold(k0),
        _ => fold(k0) * fine.m() + fold(k1),
    }
}

/// Named built-in test functions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BuiltinFunction {
    /// `cos(x_1)`.
    Cos,
    /// `sin(x_1)`.
    Sin,
    /// A fixed mean-zero three-mode mix.
    Mix3,
    /// Seeded random coefficients on `|k|_inf <= min(4, m/4)`, mean-zero,
    /// normalized to unit L^2 norm.
    BandLimited { seed: u64 },
    /// A periodized Gaussian bump of the given width, mean-subtracted.
    GaussBump { width: f64 },
}

/// Materializes a built-in on the grid.
pub fn build_function(grid: TorusGrid, builtin: BuiltinFunction) -> Result<TorusGridFunction> {
    let n = grid.n_points();
    match builtin {
        BuiltinFunction::Cos => {
            let values = (0..n).map(|i| grid.point(i)[0].cos()).collect();
            TorusGridFunction::new(grid, values)
        }
        BuiltinFunction::Sin => {
            let values = (0..n).map(|i| grid.point(i)[0].sin()).collect();
            TorusGridFunction::new(grid, values)
        }
        BuiltinFunction::Mix3 => {
            let values = (0..n)
                .map(|i| {
                    let x = grid.point(i);
                    if grid.n_dims() == 1 {
                        x[0].cos() + 0.5 * (2.0 * x[0]).sin() + 0.25 * (3.0 * x[0]).cos()
                    } else {
                        x[0].cos()
                            + 0.5 * (2.0 * x[0] + x[1]).sin()
                            + 0.25 * (x[0] - 2.0 * x[1]).cos()
                    }
                })
                .collect();
            TorusGridFunction::new(grid, values)
        }
        BuiltinFunction::BandLimited { seed } => {
            let band = 4.min(grid.m() / 4) as i64;
            let mut rng = stream_rng(seed, 0);
            let mut modes = vec![Complex::new(0.0, 0.0); n];
            for i in 0..n {
                let k = grid.freq_vec(i);
                if k == [0, 0] || k[0].abs() > band || k[1].abs() > band {
                    continue;
                }
                let conj = grid.conjugate_bin(i);
                if conj < i {
                    continue;
                }
                let re: f64 = rng.gen_range(-1.0..1.0);
                let im: f64 = if conj == i { 0.0 } else { rng.gen_range(-1.0..1.0) };
                modes[i] = Complex::new(re, im);
                modes[conj] = Complex::new(re, -im);
            }
            let norm2: f64 = modes.iter().map(|c| c.norm_sqr()).sum();
            if norm2 <= 0.0 {
                return Err(SimError::InvalidArgument("band-limited draw has no energy".into()));
            }
            let scale = norm2.sqrt().recip();
            modes.iter_mut().for_each(|c| *c *= scale);
            TorusGridFunction::from_modes(grid, modes)
        }
        BuiltinFunction::GaussBump { width } => {
            if !(width > 0.0) || !width.is_finite() {
                return Err(SimError::InvalidArgument(format!(
                    "bump width must be positive, got {width}"
                )));
            }
            let pi = std::f64::consts::PI;
            let dist = |c: f64| -> f64 {
                let d = (c - pi).abs();
                d.min(2.0 * pi - d)
            };
            let raw: Vec<f64> = (0..n)
                .map(|i| {
                    let x = grid.point(i);
                    let mut d2 = dist(x[0]).powi(2);
                    if grid.n_dims() == 2 {
                        d2 += dist(x[1]).powi(2);
                    }
                    (-d2 / (2.0 * width * width)).exp()
                })
                .collect();
            let mean = raw.iter().sum::<f64>() / n as f64;
            TorusGridFunction::new(grid, raw.into_iter().map(|v| v - mean).collect())
        }
    }
}

/// Named built-in weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BuiltinWeight {
    /// `w = 1`.
    Unit,
    /// `w = 1 + a cos(x_1)` with `|a| < 1`.
    CosineBump { amplitude: f64 },
}

/// Materializes a built-in weight on the grid.
pub fn build_weight(grid: TorusGrid, builtin: BuiltinWeight) -> Result<WeightFunction> {
    let n = grid.n_points();
    match builtin {
        BuiltinWeight::Unit => {
            WeightFunction::new(TorusGridFunction::new(grid, vec![1.0; n])?)
        }
        BuiltinWeight::CosineBump { amplitude } => {
            if !(amplitude.abs() < 1.0) {
                return Err(SimError::InvalidArgument(format!(
                    "cosine weight needs |amplitude| < 1 to stay positive, got {amplitude}"
                )));
            }
            let values = (0..n).map(|i| 1.0 + amplitude * grid.point(i)[0].cos()).collect();
            WeightFunction::new(TorusGridFunction::new(grid, values)?)
        }
    }
}
