//! Forward-Euler integrator for probed root-finding ODEs
//! dθ/dt = a(t) f(θ(t), ξ(t)), with trajectory recording, time rescaling,
//! averaged-field estimation and assumption diagnostics.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::matrix;
use crate::quadrature::trapezoid;

/// Step-size process a(t).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum GainSchedule {
    /// a(t) = g / (1 + t)
    Decaying { gain: f64 },
    /// a(t) = g (exploratory runs only)
    Constant { gain: f64 },
}

impl GainSchedule {
    pub fn decaying(gain: f64) -> Self {
        Self::Decaying { gain }
    }

    pub fn validate(&self) -> Result<()> {
        let g = self.gain();
        if !(g > 0.0) || !g.is_finite() {
            return Err(Error::Invalid(format!("gain must be positive, got {g}")));
        }
        Ok(())
    }

    pub fn gain(&self) -> f64 {
        match *self {
            Self::Decaying { gain } | Self::Constant { gain } => gain,
        }
    }

    pub fn rate(&self, t: f64) -> f64 {
        match *self {
            Self::Decaying { gain } => gain / (1.0 + t),
            Self::Constant { gain } => gain,
        }
    }

    /// Rescaled time u = ∫₀ᵗ a; g·log(1+t) for the decaying schedule.
    pub fn time_rescale(&self, t: f64) -> f64 {
        match *self {
            Self::Decaying { gain } => gain * (1.0 + t).ln(),
            Self::Constant { gain } => gain * t,
        }
    }

    /// Inverse of [`Self::time_rescale`].
    pub fn time_rescale_inv(&self, u: f64) -> f64 {
        match *self {
            Self::Decaying { gain } => (u / gain).exp() - 1.0,
            Self::Constant { gain } => u / gain,
        }
    }
}

/// The instantaneous driving field (θ, t) ↦ f(θ, ξ(t)); the exploration
/// signal is owned by the implementor.
pub trait Field {
    fn dim(&self) -> usize;
    fn eval_into(&self, theta: &DVector<f64>, t: f64, out: &mut DVector<f64>);

    fn eval(&self, theta: &DVector<f64>, t: f64) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim());
        self.eval_into(theta, t, &mut out);
        out
    }
}

/// Closure adapter for [`Field`].
pub struct FnField<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&DVector<f64>, f64, &mut DVector<f64>)> FnField<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(&DVector<f64>, f64, &mut DVector<f64>)> Field for FnField<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval_into(&self, theta: &DVector<f64>, t: f64, out: &mut DVector<f64>) {
        (self.f)(theta, t, out)
    }
}

/// Integration options. `record_stride = 0` picks a stride that keeps at
/// most ~10⁶ recorded points.
#[derive(Debug, Clone, Copy)]
pub struct SimOptions {
    pub dt: f64,
    pub horizon: f64,
    pub record_stride: usize,
    pub divergence_threshold: f64,
}

impl SimOptions {
    pub fn new(dt: f64, horizon: f64) -> Self {
        Self { dt, horizon, record_stride: 0, divergence_threshold: 1e12 }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.record_stride = stride;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !(self.horizon >= self.dt) {
            return Err(Error::Invalid(format!(
                "need dt > 0 and horizon >= dt, got dt={} horizon={}",
                self.dt, self.horizon
            )));
        }
        Ok(())
    }
}

const MAX_RECORDED_POINTS: usize = 1_000_000;

/// Named scalar side channel recorded alongside the state.
#[derive(Debug, Clone)]
pub struct AuxChannel {
    pub name: String,
    pub values: Vec<f64>,
}

/// Time-stamped record of a simulation: a uniform-in-index time grid and the
/// state at each recorded step, plus optional auxiliary channels.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub dim: usize,
    pub times: Vec<f64>,
    /// Row-major: states[k*dim .. (k+1)*dim] is the state at times[k].
    states: Vec<f64>,
    pub aux: Vec<AuxChannel>,
}

impl Trajectory {
    pub fn new(dim: usize) -> Self {
        Self { dim, times: Vec::new(), states: Vec::new(), aux: Vec::new() }
    }

    pub fn with_capacity(dim: usize, cap: usize) -> Self {
        Self {
            dim,
            times: Vec::with_capacity(cap),
            states: Vec::with_capacity(cap * dim),
            aux: Vec::new(),
        }
    }

    pub fn push(&mut self, t: f64, state: &[f64]) {
        debug_assert_eq!(state.len(), self.dim);
        self.times.push(t);
        self.states.extend_from_slice(state);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.dim..(k + 1) * self.dim]
    }

    pub fn last_state(&self) -> &[f64] {
        self.state(self.len() - 1)
    }

    pub fn state_vector(&self, k: usize) -> DVector<f64> {
        DVector::from_column_slice(self.state(k))
    }

    /// Index of the first recorded time ≥ t.
    pub fn index_at(&self, t: f64) -> usize {
        self.times.partition_point(|&x| x < t)
    }

    /// CSV with header `t,x1..xd,<aux names>`, full round-trip float precision.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "t")?;
        for i in 0..self.dim {
            write!(w, ",x{}", i + 1)?;
        }
        for a in &self.aux {
            write!(w, ",{}", a.name)?;
        }
        writeln!(w)?;
        for k in 0..self.len() {
            write!(w, "{}", fmt_f64(self.times[k]))?;
            for v in self.state(k) {
                write!(w, ",{}", fmt_f64(*v))?;
            }
            for a in &self.aux {
                write!(w, ",{}", fmt_f64(a.values[k]))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Shortest float representation that round-trips (Rust's `Display` for f64).
pub fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

/// Forward Euler for dθ/dt = a(t) f(θ, t) from θ(0) = theta0 over [0, T].
///
/// Records every `record_stride`-th step (plus the first and last). Aborts
/// with [`Error::Diverged`] when the state norm passes the divergence
/// threshold or stops being finite; unstable configurations are reported,
/// not panicked on.
pub fn simulate<F: Field>(
    field: &F,
    gain: &GainSchedule,
    theta0: &DVector<f64>,
    opts: &SimOptions,
) -> Result<Trajectory> {
    opts.validate()?;
    gain.validate()?;
    if theta0.len() != field.dim() {
        return Err(Error::Dimension(format!(
            "theta0 has dim {}, field expects {}",
            theta0.len(),
            field.dim()
        )));
    }
    if theta0.iter().any(|x| !x.is_finite()) {
        return Err(Error::Invalid("theta0 must be finite".into()));
    }

    let n_steps = (opts.horizon / opts.dt).round() as usize;
    let stride = if opts.record_stride == 0 {
        (n_steps / MAX_RECORDED_POINTS).max(1)
    } else {
        opts.record_stride
    };

    let mut traj = Trajectory::with_capacity(theta0.len(), n_steps / stride + 2);
    let mut theta = theta0.clone();
    let mut ftmp = DVector::zeros(theta0.len());
    traj.push(0.0, theta.as_slice());

    let thr2 = opts.divergence_threshold * opts.divergence_threshold;
    for k in 0..n_steps {
        let t = k as f64 * opts.dt;
        field.eval_into(&theta, t, &mut ftmp);
        theta.axpy(opts.dt * gain.rate(t), &ftmp, 1.0);

        let nsq = theta.norm_squared();
        if !nsq.is_finite() || nsq > thr2 {
            return Err(Error::Diverged { t: t + opts.dt, norm: nsq.sqrt() });
        }
        if (k + 1) % stride == 0 || k + 1 == n_steps {
            traj.push((k + 1) as f64 * opts.dt, theta.as_slice());
        }
    }
    Ok(traj)
}

/// Ergodic average (1/T)∫₀ᵀ f(θ, ξ(t)) dt at frozen θ, trapezoid on the dt grid.
pub fn averaged_field<F: Field>(field: &F, theta: &DVector<f64>, horizon: f64, dt: f64) -> DVector<f64> {
    let n = (horizon / dt).round().max(1.0) as usize;
    let dim = field.dim();
    let mut comps = vec![Vec::with_capacity(n + 1); dim];
    let mut tmp = DVector::zeros(dim);
    for k in 0..=n {
        field.eval_into(theta, k as f64 * dt, &mut tmp);
        for i in 0..dim {
            comps[i].push(tmp[i]);
        }
    }
    let span = n as f64 * dt;
    DVector::from_fn(dim, |i, _| trapezoid(&comps[i], dt) / span)
}

/// Stability diagnostics for a field/gain pair.
#[derive(Debug, Clone, Serialize)]
pub struct AssumptionReport {
    /// Max Re(λ) of the linearization A, when provided.
    pub linear_max_real_part: Option<f64>,
    pub hurwitz: Option<bool>,
    /// Whether I + A is also Hurwitz, i.e. every Re(λ(A)) < -1: the
    /// condition for the 1/t coupling rate (with unit gain).
    pub coupling_condition: Option<bool>,
    /// Frobenius norm of P solving PA + AᵀP = -I (drift certificate
    /// V = k·sqrt(θᵀPθ)), when A is Hurwitz.
    pub lyapunov_p_norm: Option<f64>,
    pub lyapunov_residual: Option<f64>,
    /// Empirical averaging-defect constant, when sampled.
    pub averaging_defect: Option<f64>,
    pub notes: Vec<String>,
}

/// Report Hurwitz margins and the Lyapunov drift certificate for a linear
/// field, or just the empirical averaging defect for a nonlinear one.
pub fn assumption_report(
    linear: Option<&DMatrix<f64>>,
    defect: Option<f64>,
) -> Result<AssumptionReport> {
    let mut report = AssumptionReport {
        linear_max_real_part: None,
        hurwitz: None,
        coupling_condition: None,
        lyapunov_p_norm: None,
        lyapunov_residual: None,
        averaging_defect: defect,
        notes: Vec::new(),
    };
    match linear {
        Some(a) => {
            let spectrum = matrix::eigenvalues(a)?;
            report.linear_max_real_part = Some(spectrum.max_real_part);
            let hurwitz = spectrum.max_real_part < 0.0;
            report.hurwitz = Some(hurwitz);
            report.coupling_condition = Some(spectrum.max_real_part < -1.0);
            if hurwitz {
                let p = matrix::solve_lyapunov(a, &DMatrix::identity(a.nrows(), a.nrows()))?;
                let res = (a.transpose() * &p + &p * a + DMatrix::<f64>::identity(a.nrows(), a.nrows())).norm();
                report.lyapunov_p_norm = Some(p.norm());
                report.lyapunov_residual = Some(res);
            } else {
                report.notes.push("linearization is not Hurwitz; no drift certificate".into());
            }
            if !report.coupling_condition.unwrap() {
                report.notes.push("Re(λ) < -1 fails; 1/t coupling rate not guaranteed".into());
            }
        }
        None => {
            report.notes.push("nonlinear field: drift condition not checked".into());
        }
    }
    Ok(report)
}
