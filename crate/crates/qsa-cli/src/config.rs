//! Experiment configuration: a single JSON file per run with a `kind` tag, a
//! mandatory master seed, and a kind-specific parameter block. Unknown keys
//! are rejected everywhere.

use std::path::PathBuf;

use serde::Deserialize;
use serde_json::Value;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub kind: String,
    pub seed: u64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    pub params: Value,
}

fn default_dt() -> f64 {
    1e-3
}

fn default_theta0() -> f64 {
    10.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QmcPathsParams {
    pub gains: Vec<f64>,
    #[serde(default = "default_theta0")]
    pub theta0: f64,
    pub horizon: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Record every k-th step (0 = auto).
    #[serde(default)]
    pub stride: usize,
}

fn default_init_variance() -> f64 {
    10.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QmcHistogramParams {
    pub gains: Vec<f64>,
    pub n_runs: usize,
    pub horizon: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_init_variance")]
    pub init_variance: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingSweepParams {
    pub gains: Vec<f64>,
    #[serde(default = "default_theta0")]
    pub theta0: f64,
    pub horizon: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Sup window [lo, hi]; defaults to the last 5% of the horizon.
    #[serde(default)]
    pub window: Option<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum GradFreeVariant {
    Esc1,
    Esc2,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectiveKind {
    Quadratic,
    Rosenbrock,
}

/// One probing-signal term as it appears in config files.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalTermSpec {
    pub direction: Vec<f64>,
    #[serde(default)]
    pub phase: f64,
    pub frequency: f64,
}

pub fn probe_from_specs(specs: &[SignalTermSpec]) -> Result<qsa::ProbingSignal, String> {
    let terms = specs
        .iter()
        .map(|s| qsa::SinusoidTerm {
            direction: nalgebra::DVector::from_vec(s.direction.clone()),
            phase: s.phase,
            frequency: s.frequency,
        })
        .collect();
    qsa::ProbingSignal::new(terms).map_err(|e| e.to_string())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradFreeParams {
    pub variant: GradFreeVariant,
    pub objective: ObjectiveKind,
    pub epsilon: f64,
    pub gain: f64,
    pub horizon: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub theta0: Vec<f64>,
    /// Explicit probe terms; defaults to the per-coordinate √2·sin(2π√pᵢ·t)
    /// recipe when omitted.
    #[serde(default)]
    pub probe: Option<Vec<SignalTermSpec>>,
}

fn default_probe_count() -> usize {
    24
}

fn default_probe_max_freq() -> f64 {
    50.0
}

fn default_eval_gain() -> f64 {
    2.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LqrEvalParams {
    /// Row-major state matrix; defaults to the friction benchmark when None.
    #[serde(default)]
    pub a: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub b: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub m: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub r: Option<Vec<Vec<f64>>>,
    /// Policy to evaluate.
    pub k: Vec<Vec<f64>>,
    /// Stabilizing behavior gain.
    pub k0: Vec<Vec<f64>>,
    pub horizon: f64,
    pub t1: f64,
    #[serde(default = "default_eval_gain")]
    pub gain: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_probe_count")]
    pub probe_count: usize,
    #[serde(default = "default_probe_max_freq")]
    pub probe_max_freq: f64,
    /// Also run the white-noise baseline at matched power.
    #[serde(default)]
    pub baseline: bool,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum PiaMode {
    Regression,
    Exact,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LqrPiaParams {
    pub rounds: usize,
    pub k_init: Vec<Vec<f64>>,
    pub horizon: f64,
    pub t1: f64,
    #[serde(default = "default_eval_gain")]
    pub gain: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_probe_count")]
    pub probe_count: usize,
    #[serde(default = "default_probe_max_freq")]
    pub probe_max_freq: f64,
    pub mode: PiaMode,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssumptionCheckParams {
    /// Linearization matrix, row-major; omit for a nonlinear-only report.
    #[serde(default)]
    pub a: Option<Vec<Vec<f64>>>,
}

pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<nalgebra::DMatrix<f64>, String> {
    if rows.is_empty() || rows[0].is_empty() {
        return Err("matrix must be nonempty".into());
    }
    let ncols = rows[0].len();
    if rows.iter().any(|r| r.len() != ncols) {
        return Err("ragged matrix rows".into());
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    if flat.iter().any(|x| !x.is_finite()) {
        return Err("matrix entries must be finite".into());
    }
    Ok(nalgebra::DMatrix::from_row_slice(rows.len(), ncols, &flat))
}
