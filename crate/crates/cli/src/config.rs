//! Configuration schemas for the four commands. Every config is a single
//! JSON document with unknown fields rejected, and every run requires an
//! explicit seed: no number in a report comes from ambient entropy.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use riesz_sim::drift::DriftKind;
use riesz_sim::ensemble::EnsembleSpec;
use riesz_sim::process::{TimeGrid, TransformKind};
use riesz_sim::torus::{
    build_function, build_weight, BuiltinFunction, BuiltinWeight, TorusGrid, TorusGridFunction,
    WeightFunction,
};

/// One synthetic path ensemble: the martingale pair plus its drift flow.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    /// Label used in report rows; defaults to a structural description.
    #[serde(default)]
    pub name: Option<String>,
    pub dim: usize,
    pub x0: f64,
    pub t_max: f64,
    pub n_steps: usize,
    pub n_paths: usize,
    pub transform: TransformName,
    pub drift: DriftConfig,
}

impl EnsembleConfig {
    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| {
            format!("d{}-{}-{}", self.dim, self.transform.label(), self.drift.label())
        })
    }

    pub fn spec(&self, master_seed: u64) -> Result<EnsembleSpec> {
        Ok(EnsembleSpec {
            grid: TimeGrid::new(self.t_max, self.n_steps)?,
            dim: self.dim,
            x0: self.x0,
            transform: self.transform.into(),
            drift: self.drift.into(),
            n_paths: self.n_paths,
            master_seed,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransformName {
    ConstantUnit,
    Rotating,
    RandomBall,
}

impl TransformName {
    pub fn label(self) -> &'static str {
        match self {
            TransformName::ConstantUnit => "constant-unit",
            TransformName::Rotating => "rotating",
            TransformName::RandomBall => "random-ball",
        }
    }
}

impl From<TransformName> for TransformKind {
    fn from(t: TransformName) -> Self {
        match t {
            TransformName::ConstantUnit => TransformKind::ConstantUnit,
            TransformName::Rotating => TransformKind::Rotating,
            TransformName::RandomBall => TransformKind::RandomBall,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DriftConfig {
    Zero,
    /// `V = c I` with `c <= 0`.
    ScaledIdentity { c: f64 },
    /// `V = -scale G G^T` with per-step Gaussian `G`, `scale > 0`.
    RandomGram { scale: f64 },
}

impl DriftConfig {
    pub fn label(self) -> String {
        match self {
            DriftConfig::Zero => "zero".into(),
            DriftConfig::ScaledIdentity { c } => format!("scaled-identity({c})"),
            DriftConfig::RandomGram { scale } => format!("random-gram({scale})"),
        }
    }
}

impl From<DriftConfig> for DriftKind {
    fn from(d: DriftConfig) -> Self {
        match d {
            DriftConfig::Zero => DriftKind::Zero,
            DriftConfig::ScaledIdentity { c } => DriftKind::ScaledIdentity(c),
            DriftConfig::RandomGram { scale } => DriftKind::RandomGram(scale),
        }
    }
}

/// A function on the torus: a named builtin or a CSV of grid values.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FunctionConfig {
    Builtin(BuiltinFunctionConfig),
    Csv(CsvFunctionConfig),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuiltinFunctionConfig {
    /// One of `cos`, `sin`, `mix3`, `band-limited`, `gauss-bump`.
    pub builtin: String,
    /// Required by `band-limited`, rejected elsewhere.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Required by `gauss-bump`, rejected elsewhere.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvFunctionConfig {
    /// Path to `index,value` rows, one per grid point, relative to the
    /// config file.
    pub csv: PathBuf,
}

impl FunctionConfig {
    pub fn label(&self) -> String {
        match self {
            FunctionConfig::Builtin(b) => match (&b.seed, &b.width) {
                (Some(s), _) => format!("{}({s})", b.builtin),
                (_, Some(w)) => format!("{}({w})", b.builtin),
                _ => b.builtin.clone(),
            },
            FunctionConfig::Csv(c) => format!("csv:{}", c.csv.display()),
        }
    }

    /// Materializes the function on `grid`; CSV paths resolve against
    /// `base_dir` and must match the grid size exactly.
    pub fn build(&self, grid: TorusGrid, base_dir: &Path) -> Result<TorusGridFunction> {
        match self {
            FunctionConfig::Builtin(b) => {
                let builtin = match b.builtin.as_str() {
                    "cos" => {
                        reject_extras(b, "cos")?;
                        BuiltinFunction::Cos
                    }
                    "sin" => {
                        reject_extras(b, "sin")?;
                        BuiltinFunction::Sin
                    }
                    "mix3" => {
                        reject_extras(b, "mix3")?;
                        BuiltinFunction::Mix3
                    }
                    "band-limited" => {
                        if b.width.is_some() {
                            bail!("builtin band-limited takes a seed, not a width");
                        }
                        let seed =
                            b.seed.context("builtin band-limited requires an explicit seed")?;
                        BuiltinFunction::BandLimited { seed }
                    }
                    "gauss-bump" => {
                        if b.seed.is_some() {
                            bail!("builtin gauss-bump takes a width, not a seed");
                        }
                        let width =
                            b.width.context("builtin gauss-bump requires an explicit width")?;
                        BuiltinFunction::GaussBump { width }
                    }
                    other => bail!(
                        "unknown builtin {other:?}; expected cos, sin, mix3, band-limited, or gauss-bump"
                    ),
                };
                Ok(build_function(grid, builtin)?)
            }
            FunctionConfig::Csv(c) => {
                let path = base_dir.join(&c.csv);
                let text = std::fs::read_to_string(&path)
                    .with_context(|| format!("reading function CSV {}", path.display()))?;
                load_csv_function(grid, &text)
                    .with_context(|| format!("parsing function CSV {}", path.display()))
            }
        }
    }
}

fn reject_extras(b: &BuiltinFunctionConfig, name: &str) -> Result<()> {
    if b.seed.is_some() || b.width.is_some() {
        bail!("builtin {name} takes neither seed nor width");
    }
    Ok(())
}

fn load_csv_function(grid: TorusGrid, text: &str) -> Result<TorusGridFunction> {
    let n = grid.n_points();
    let mut values = vec![f64::NAN; n];
    let mut seen = vec![false; n];
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (idx, val) = line
            .split_once(',')
            .with_context(|| format!("line {}: expected index,value", lineno + 1))?;
        let idx: usize = idx.trim().parse().with_context(|| format!("line {}", lineno + 1))?;
        let val: f64 = val.trim().parse().with_context(|| format!("line {}", lineno + 1))?;
        if idx >= n {
            bail!("line {}: index {idx} out of range for {n} grid points", lineno + 1);
        }
        if seen[idx] {
            bail!("line {}: duplicate index {idx}", lineno + 1);
        }
        seen[idx] = true;
        values[idx] = val;
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        bail!("grid point {missing} has no value; need all {n}");
    }
    Ok(TorusGridFunction::new(grid, values)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum WeightConfig {
    Unit,
    CosineBump { amplitude: f64 },
}

impl WeightConfig {
    pub fn label(self) -> String {
        match self {
            WeightConfig::Unit => "unit".into(),
            WeightConfig::CosineBump { amplitude } => format!("1+{amplitude}cos"),
        }
    }

    pub fn build(self, grid: TorusGrid) -> Result<WeightFunction> {
        let builtin = match self {
            WeightConfig::Unit => BuiltinWeight::Unit,
            WeightConfig::CosineBump { amplitude } => BuiltinWeight::CosineBump { amplitude },
        };
        Ok(build_weight(grid, builtin)?)
    }
}

fn default_hypothesis_tol() -> f64 {
    1e-6
}

fn default_invariant_tol() -> f64 {
    1e-9
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeakTypeConfig {
    pub seed: u64,
    pub lambdas: Vec<f64>,
    pub ensembles: Vec<EnsembleConfig>,
    /// Refooting probe indices for the structural invariants; default
    /// `[0, n_steps / 2]` per ensemble.
    #[serde(default)]
    pub invariant_probes: Option<Vec<usize>>,
    #[serde(default = "default_hypothesis_tol")]
    pub hypothesis_tol: f64,
    #[serde(default = "default_invariant_tol")]
    pub invariant_tol: f64,
}

impl WeakTypeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambdas.is_empty() {
            bail!("lambdas must be non-empty");
        }
        if self.lambdas.iter().any(|l| !(*l > 0.0)) {
            bail!("lambdas must be positive");
        }
        if self.ensembles.is_empty() {
            bail!("ensembles must be non-empty");
        }
        Ok(())
    }
}

fn default_threshold() -> f64 {
    4.0
}

fn default_domination_constant() -> f64 {
    8.0
}

fn default_max_levels() -> usize {
    64
}

fn default_slack() -> f64 {
    0.05
}

fn default_max_level_checked() -> i32 {
    6
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SparseVerifyConfig {
    pub seed: u64,
    pub ensembles: Vec<EnsembleConfig>,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default = "default_domination_constant")]
    pub domination_constant: f64,
    #[serde(default = "default_max_levels")]
    pub max_levels: usize,
    /// Slack factor on the domination constant.
    #[serde(default = "default_slack")]
    pub slack: f64,
    /// Deepest level for the sparsity tables (clamped so the level below
    /// is fully recorded).
    #[serde(default = "default_max_level_checked")]
    pub max_level_checked: i32,
    #[serde(default)]
    pub invariant_probes: Option<Vec<usize>>,
    #[serde(default = "default_hypothesis_tol")]
    pub hypothesis_tol: f64,
    #[serde(default = "default_invariant_tol")]
    pub invariant_tol: f64,
}

impl SparseVerifyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ensembles.is_empty() {
            bail!("ensembles must be non-empty");
        }
        if !(self.slack >= 0.0) {
            bail!("slack must be >= 0");
        }
        Ok(())
    }
}

fn default_dt() -> f64 {
    1e-3
}

fn default_t_max_factor() -> f64 {
    5e5
}

fn default_censoring_bound() -> f64 {
    1e-3
}

fn default_stabilization_factor() -> f64 {
    2.0
}

fn default_rel_l2_gate() -> f64 {
    0.1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RieszMcConfig {
    pub seed: u64,
    pub n_dims: usize,
    /// Conditioning cells per axis.
    pub m_cells: usize,
    pub n_paths: usize,
    pub y0_ladder: Vec<f64>,
    pub f: FunctionConfig,
    /// Resolution of the function grid; default 64 in one dimension,
    /// 16 in two.
    #[serde(default)]
    pub function_grid_m: Option<usize>,
    /// Base time step near the boundary; steps at height `h` scale as
    /// `max(1, h^2)`.
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_t_max_factor")]
    pub t_max_factor: f64,
    #[serde(default = "default_censoring_bound")]
    pub censoring_bound: f64,
    #[serde(default = "default_stabilization_factor")]
    pub stabilization_factor: f64,
    /// Gate on the relative L2 distance to the exact transform.
    #[serde(default = "default_rel_l2_gate")]
    pub rel_l2_gate: f64,
}

impl RieszMcConfig {
    pub fn function_grid(&self) -> Result<TorusGrid> {
        let m = self.function_grid_m.unwrap_or(if self.n_dims == 1 { 64 } else { 16 });
        Ok(TorusGrid::new(self.n_dims, m)?)
    }
}

fn default_weighted_paths() -> usize {
    20_000
}

fn default_weighted_y0() -> f64 {
    1.0
}

fn default_weighted_dt() -> f64 {
    2e-3
}

fn default_split_tolerance() -> f64 {
    0.25
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsSweepConfig {
    pub seed: u64,
    pub dims: Vec<usize>,
    /// Grid resolution per axis for every dimension in the sweep.
    pub m: usize,
    pub functions: Vec<FunctionConfig>,
    pub p_values: Vec<f64>,
    pub weights: Vec<WeightConfig>,
    /// Paths for the weighted maximal sampling; 0 skips that section.
    #[serde(default = "default_weighted_paths")]
    pub weighted_paths: usize,
    #[serde(default = "default_weighted_y0")]
    pub weighted_y0: f64,
    #[serde(default = "default_weighted_dt")]
    pub weighted_dt: f64,
    /// Max relative disagreement between half-sample weighted ratios.
    #[serde(default = "default_split_tolerance")]
    pub split_tolerance: f64,
    #[serde(default = "default_censoring_bound")]
    pub censoring_bound: f64,
    #[serde(default = "default_t_max_factor")]
    pub t_max_factor: f64,
}

impl BoundsSweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dims.is_empty() || self.dims.iter().any(|d| !(1..=2).contains(d)) {
            bail!("dims must be a non-empty subset of {{1, 2}}");
        }
        if self.functions.is_empty() {
            bail!("functions must be non-empty");
        }
        if self.p_values.is_empty() {
            bail!("p_values must be non-empty");
        }
        if self.p_values.iter().any(|p| !(*p > 1.0)) {
            bail!("p values must lie in the open interval (1, inf)");
        }
        if self.weights.is_empty() {
            bail!("weights must be non-empty");
        }
        Ok(())
    }
}
