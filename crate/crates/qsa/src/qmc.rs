//! Quasi-Monte-Carlo estimation of ∫₀¹ y(t) dt by the probed ODE
//! dθ/dt = (g/(1+t))·[y(ξ⁰(t)) − θ] with the sawtooth ξ⁰, a seeded
//! Monte-Carlo baseline, and the gain-sweep variance experiment.

use std::sync::Arc;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::Result;
use crate::quadrature::adaptive_simpson;
use crate::rng::{derive_seed, GaussianSource, SplitMix64};
use crate::sim::{simulate, Field, GainSchedule, SimOptions, Trajectory};
use crate::signals::SawtoothSignal;

/// A scalar integrand on [0, 1].
#[derive(Clone)]
pub struct Integrand {
    pub name: String,
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl Integrand {
    pub fn new(name: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self { name: name.into(), f: Arc::new(f) }
    }

    /// The benchmark integrand e^{4t} sin(100 t): smooth but wildly
    /// oscillating, so naive sampling has large variance.
    pub fn oscillatory_benchmark() -> Self {
        Self::new("exp4_sin100", |t| (4.0 * t).exp() * (100.0 * t).sin())
    }

    pub fn constant(c: f64) -> Self {
        Self::new(format!("const_{c}"), move |_| c)
    }

    pub fn eval(&self, t: f64) -> f64 {
        (self.f)(t)
    }

    /// Ground-truth mean by adaptive quadrature (independent of any ODE run).
    pub fn quadrature_mean(&self, tol: f64) -> f64 {
        let f = self.f.clone();
        adaptive_simpson(&move |t| f(t), 0.0, 1.0, tol)
    }

    /// Exact average of y over the n left-endpoint grid points {k/n}.
    ///
    /// This is the fixed point the forward-Euler pipeline converges to when
    /// dt divides the sawtooth period (the grid then revisits the same n
    /// residues every period), and serves as the pipeline-consistent target
    /// for rate and coupling measurements.
    pub fn grid_mean(&self, dt: f64) -> f64 {
        let n = (1.0 / dt).round() as usize;
        let mut acc = 0.0;
        for k in 0..n {
            acc += (self.f)(k as f64 * dt);
        }
        acc / n as f64
    }
}

impl std::fmt::Debug for Integrand {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Integrand").field("name", &self.name).finish()
    }
}

/// The estimation field f(θ, t) = y(ξ⁰(t)) − θ.
pub struct QmcField {
    y: Integrand,
    sawtooth: SawtoothSignal,
}

impl QmcField {
    pub fn new(y: Integrand) -> Self {
        Self { y, sawtooth: SawtoothSignal::default() }
    }
}

impl Field for QmcField {
    fn dim(&self) -> usize {
        1
    }

    fn eval_into(&self, theta: &DVector<f64>, t: f64, out: &mut DVector<f64>) {
        out[0] = self.y.eval(self.sawtooth.eval(t)) - theta[0];
    }
}

/// θ(T) from the probed ODE; the estimate of ∫₀¹ y.
pub fn qmc_estimate(y: &Integrand, gain: f64, theta0: f64, horizon: f64, dt: f64) -> Result<f64> {
    let field = QmcField::new(y.clone());
    let traj = simulate(
        &field,
        &GainSchedule::decaying(gain),
        &DVector::from_vec(vec![theta0]),
        &SimOptions::new(dt, horizon).with_stride(usize::MAX),
    )?;
    Ok(traj.last_state()[0])
}

/// Full estimate path (for figure-style outputs and coupling analysis).
pub fn qmc_trajectory(
    y: &Integrand,
    gain: f64,
    theta0: f64,
    horizon: f64,
    dt: f64,
    stride: usize,
) -> Result<Trajectory> {
    let field = QmcField::new(y.clone());
    simulate(
        &field,
        &GainSchedule::decaying(gain),
        &DVector::from_vec(vec![theta0]),
        &SimOptions::new(dt, horizon).with_stride(stride),
    )
}

/// Running integral ∫₀ᵗ (y(ξ⁰(r)) − θ*) dr on the Euler grid (left sums, the
/// same quadrature the integrator realizes), centered by its mean over the
/// first sawtooth period. This is the reference curve the scaled estimate
/// error couples to.
pub fn centered_noise_integral(y: &Integrand, theta_star: f64, dt: f64, horizon: f64) -> Trajectory {
    let sawtooth = SawtoothSignal::default();
    let n = (horizon / dt).round() as usize;
    let values: Vec<f64> = (0..n)
        .map(|k| y.eval(sawtooth.eval(k as f64 * dt)) - theta_star)
        .collect();
    let cums = crate::quadrature::cumulative_left_sum(&values, dt);
    let period_pts = ((sawtooth.period / dt).round() as usize).min(n.max(1));
    let mean = cums[..period_pts].iter().sum::<f64>() / period_pts as f64;
    let mut traj = Trajectory::with_capacity(1, n + 1);
    for (k, c) in cums.iter().enumerate() {
        traj.push(k as f64 * dt, &[c - mean]);
    }
    traj
}

/// Plain Monte-Carlo: (1/n) Σ y(Uₖ) with seeded uniform draws.
pub fn mc_baseline(y: &Integrand, n_samples: usize, seed: u64) -> f64 {
    assert!(n_samples >= 1);
    let mut rng = SplitMix64::new(seed);
    let mut acc = 0.0;
    for _ in 0..n_samples {
        acc += y.eval(rng.next_f64());
    }
    acc / n_samples as f64
}

/// Per-gain summary row of the variance experiment.
#[derive(Debug, Clone, Serialize)]
pub struct VarianceRow {
    pub label: String,
    pub gain: Option<f64>,
    pub mean: f64,
    /// Unbiased sample variance across runs.
    pub variance: f64,
    pub run_count: usize,
    pub horizon: f64,
}

/// One run of the histogram experiment: a shared Gaussian initial condition
/// and the estimate of every estimator at time T.
#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub run_index: usize,
    pub seed: u64,
    pub theta0: f64,
    /// Aligned with the labels in the summary (probed gains, then "mc").
    pub estimates: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct HistogramConfig {
    pub gains: Vec<f64>,
    pub n_runs: usize,
    pub horizon: f64,
    pub dt: f64,
    pub seed: u64,
    /// Variance of the shared Gaussian initial condition.
    pub init_variance: f64,
}

impl HistogramConfig {
    pub fn labels(&self) -> Vec<String> {
        let mut labels: Vec<String> = self.gains.iter().map(|g| format!("qsa_g{g}")).collect();
        labels.push("mc".into());
        labels
    }
}

/// Independent seeded trials: every run draws θ(0) ~ N(0, init_variance),
/// integrates the probed estimator for each gain, and computes a Monte-Carlo
/// baseline at matched sample cost (T/dt evaluations of y).
///
/// Trials run in parallel; per-run seeds are derived from (seed, run index),
/// so the output is identical for any worker count.
pub fn histogram_experiment(
    y: &Integrand,
    cfg: &HistogramConfig,
) -> Result<(Vec<VarianceRow>, Vec<RunRecord>)> {
    assert!(cfg.n_runs >= 2, "need at least two runs for a variance");
    let n_mc = (cfg.horizon / cfg.dt).round() as usize;
    let std = cfg.init_variance.sqrt();

    let records: Result<Vec<RunRecord>> = (0..cfg.n_runs)
        .into_par_iter()
        .map(|idx| {
            let run_seed = derive_seed(cfg.seed, "qmc-histogram", idx as u64);
            let theta0 = std * GaussianSource::new(run_seed).sample();
            let mut estimates = Vec::with_capacity(cfg.gains.len() + 1);
            for &g in &cfg.gains {
                estimates.push(qmc_estimate(y, g, theta0, cfg.horizon, cfg.dt)?);
            }
            let mc_seed = derive_seed(cfg.seed, "qmc-histogram/mc", idx as u64);
            estimates.push(mc_baseline(y, n_mc, mc_seed));
            Ok(RunRecord { run_index: idx, seed: run_seed, theta0, estimates })
        })
        .collect();
    let records = records?;

    let labels = cfg.labels();
    let mut rows = Vec::with_capacity(labels.len());
    for (col, label) in labels.iter().enumerate() {
        let values: Vec<f64> = records.iter().map(|r| r.estimates[col]).collect();
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let variance = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        rows.push(VarianceRow {
            label: label.clone(),
            gain: cfg.gains.get(col).copied(),
            mean,
            variance,
            run_count: records.len(),
            horizon: cfg.horizon,
        });
    }
    Ok((rows, records))
}
