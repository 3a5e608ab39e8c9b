//! Off-policy value estimation for deterministic linear systems with
//! quadratic cost: closed-loop simulation under an exciting input, the
//! linear-in-θ Bellman-error regression built model-free from observed
//! trajectories, the preconditioned two-step estimator, greedy policy
//! improvement, and the exact Lyapunov/Riccati ground truth.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::matrix::{self, controllability_rank};
use crate::rng::GaussianSource;
use crate::sim::{AuxChannel, Trajectory};
use crate::signals::ProbingSignal;

/// Linear time-invariant dynamics dx/dt = A x + B u.
#[derive(Debug, Clone)]
pub struct LtiModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

impl LtiModel {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        if a.nrows() != a.ncols() || b.nrows() != a.nrows() || b.ncols() == 0 {
            return Err(Error::Dimension(format!(
                "A is {}x{}, B is {}x{}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols()
            )));
        }
        let rank = controllability_rank(&a, &b);
        if rank != a.nrows() {
            return Err(Error::Invalid(format!(
                "(A, B) not controllable: controllability rank {rank} < {}",
                a.nrows()
            )));
        }
        Ok(Self { a, b })
    }

    /// The benchmark plant: a double integrator with velocity friction 0.1,
    /// driven through the second state.
    pub fn friction_integrator() -> Self {
        Self::new(
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, -0.1]),
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
        )
        .expect("benchmark plant is controllable")
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }
}

/// Quadratic running cost c(x, u) = xᵀMx + uᵀRu with M ⪰ 0, R ≻ 0.
#[derive(Debug, Clone)]
pub struct QuadCost {
    pub m: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

impl QuadCost {
    pub fn new(m: DMatrix<f64>, r: DMatrix<f64>) -> Result<Self> {
        for (name, mat) in [("M", &m), ("R", &r)] {
            if (mat - mat.transpose()).amax() > 1e-10 * (1.0 + mat.amax()) {
                return Err(Error::Invalid(format!("{name} must be symmetric")));
            }
        }
        let eig_m = matrix::eigenvalues(&m)?;
        if eig_m.eigenvalues.iter().any(|e| e.re < -1e-10) {
            return Err(Error::Invalid("M must be positive semidefinite".into()));
        }
        let eig_r = matrix::eigenvalues(&r)?;
        if eig_r.eigenvalues.iter().any(|e| e.re <= 0.0) {
            return Err(Error::Invalid("R must be positive definite".into()));
        }
        Ok(Self { m, r })
    }

    pub fn eval(&self, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        (x.transpose() * &self.m * x)[(0, 0)] + (u.transpose() * &self.r * u)[(0, 0)]
    }
}

/// Linear state feedback u = K x.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearPolicy {
    pub k: DMatrix<f64>,
}

impl LinearPolicy {
    pub fn new(k: DMatrix<f64>) -> Self {
        Self { k }
    }

    pub fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.k * x
    }
}

/// All degree-two monomials over z = (x, u), ordered as x-squares, x-x
/// cross terms, x-u cross terms, then u-quadratics; for (n, m) = (2, 1)
/// this is {x₁², x₂², x₁x₂, x₁u, x₂u, u²}.
#[derive(Debug, Clone)]
pub struct QuadraticBasis {
    pub state_dim: usize,
    pub input_dim: usize,
    /// Index pairs (i ≤ j) into z = (x, u).
    pairs: Vec<(usize, usize)>,
}

impl QuadraticBasis {
    pub fn new(state_dim: usize, input_dim: usize) -> Self {
        let total = state_dim + input_dim;
        let mut pairs = Vec::with_capacity(total * (total + 1) / 2);
        for i in 0..state_dim {
            pairs.push((i, i));
        }
        for i in 0..state_dim {
            for j in (i + 1)..state_dim {
                pairs.push((i, j));
            }
        }
        for i in 0..state_dim {
            for j in state_dim..total {
                pairs.push((i, j));
            }
        }
        for i in state_dim..total {
            for j in i..total {
                pairs.push((i, j));
            }
        }
        Self { state_dim, input_dim, pairs }
    }

    pub fn dim(&self) -> usize {
        self.pairs.len()
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    /// ψ(x, u): each entry is z_i z_j for its monomial pair.
    pub fn eval_into(&self, x: &DVector<f64>, u: &DVector<f64>, out: &mut DVector<f64>) {
        let n = self.state_dim;
        let z = |i: usize| if i < n { x[i] } else { u[i - n] };
        for (k, &(i, j)) in self.pairs.iter().enumerate() {
            out[k] = z(i) * z(j);
        }
    }

    pub fn eval(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim());
        self.eval_into(x, u, &mut out);
        out
    }

    /// Coefficient vector of the quadratic form zᵀ W_full z where W_full has
    /// blocks [[W, V],[Vᵀ, U]]: squares map to diagonal entries, cross
    /// monomials pick up the factor 2.
    pub fn project_quadratic_form(
        &self,
        w: &DMatrix<f64>,
        v: &DMatrix<f64>,
        u_block: &DMatrix<f64>,
    ) -> DVector<f64> {
        let n = self.state_dim;
        let entry = |i: usize, j: usize| -> f64 {
            match (i < n, j < n) {
                (true, true) => w[(i, j)],
                (true, false) => v[(i, j - n)],
                (false, true) => v[(j, i - n)],
                (false, false) => u_block[(i - n, j - n)],
            }
        };
        DVector::from_fn(self.dim(), |k, _| {
            let (i, j) = self.pairs[k];
            if i == j {
                entry(i, j)
            } else {
                2.0 * entry(i, j)
            }
        })
    }
}

/// Parameter vector of the linear family Q_θ(x,u) = d(x,u) + θᵀψ(x,u).
#[derive(Debug, Clone, PartialEq)]
pub struct QParam {
    pub theta: DVector<f64>,
}

/// One regression sample: the eligibility vector ζ(t) and offset b(t) of the
/// linear-in-θ instantaneous Bellman error b(t) + ζ(t)ᵀθ.
#[derive(Debug, Clone)]
pub struct RegressorSample {
    pub t: f64,
    pub zeta: DVector<f64>,
    pub b: f64,
}

/// Simulate dx/dt = A x + B(K₀ x + ξ(t)) by forward Euler, recording x and u.
///
/// Refuses to run when A + B K₀ is not Hurwitz.
pub fn simulate_closed_loop(
    model: &LtiModel,
    k0: &LinearPolicy,
    probe: &ProbingSignal,
    x0: &DVector<f64>,
    dt: f64,
    horizon: f64,
) -> Result<Trajectory> {
    let xi_at = |t: f64| probe.eval(t);
    simulate_closed_loop_with(model, k0, xi_at, x0, dt, horizon)
}

/// White-noise variant: the excitation is σ·N_k/√dt (Euler–Maruyama), with
/// σ² matched to a probe's average power Σ‖vⁱ‖²/2. Seeded and reproducible.
pub fn simulate_closed_loop_noise(
    model: &LtiModel,
    k0: &LinearPolicy,
    noise_power: f64,
    seed: u64,
    x0: &DVector<f64>,
    dt: f64,
    horizon: f64,
) -> Result<Trajectory> {
    let m = model.input_dim();
    let sigma = noise_power.sqrt();
    let scale = sigma / dt.sqrt();
    let gauss = std::cell::RefCell::new(GaussianSource::new(seed));
    let xi_at = move |_t: f64| {
        let mut g = gauss.borrow_mut();
        DVector::from_fn(m, |_, _| scale * g.sample())
    };
    simulate_closed_loop_with(model, k0, xi_at, x0, dt, horizon)
}

fn simulate_closed_loop_with<E: Fn(f64) -> DVector<f64>>(
    model: &LtiModel,
    k0: &LinearPolicy,
    excitation: E,
    x0: &DVector<f64>,
    dt: f64,
    horizon: f64,
) -> Result<Trajectory> {
    let n = model.state_dim();
    let m = model.input_dim();
    if x0.len() != n {
        return Err(Error::Dimension("x0 dimension mismatch".into()));
    }
    let a_cl = &model.a + &model.b * &k0.k;
    let (stable, spectrum) = matrix::is_hurwitz(&a_cl, 0.0)?;
    if !stable {
        let worst = spectrum
            .eigenvalues
            .iter()
            .cloned()
            .max_by(|x, y| x.re.total_cmp(&y.re))
            .unwrap();
        return Err(Error::NotHurwitz { re: worst.re, im: worst.im, margin: 0.0 });
    }

    let steps = (horizon / dt).round() as usize;
    let mut traj = Trajectory::with_capacity(n, steps + 1);
    let mut u_channels: Vec<Vec<f64>> = vec![Vec::with_capacity(steps + 1); m];
    let mut x = x0.clone();
    for k in 0..=steps {
        let t = k as f64 * dt;
        let u = k0.eval(&x) + excitation(t);
        traj.push(t, x.as_slice());
        for (i, ch) in u_channels.iter_mut().enumerate() {
            ch.push(u[i]);
        }
        if k < steps {
            let dx = &model.a * &x + &model.b * &u;
            x.axpy(dt, &dx, 1.0);
            if !x.norm_squared().is_finite() || x.norm_squared() > 1e24 {
                return Err(Error::Diverged { t: t + dt, norm: x.norm() });
            }
        }
    }
    for (i, values) in u_channels.into_iter().enumerate() {
        traj.aux.push(AuxChannel { name: format!("u{}", i + 1), values });
    }
    Ok(traj)
}

fn inputs_of(traj: &Trajectory, input_dim: usize) -> Result<Vec<DVector<f64>>> {
    if traj.aux.len() < input_dim {
        return Err(Error::Invalid("trajectory lacks recorded input channels".into()));
    }
    Ok((0..traj.len())
        .map(|k| DVector::from_fn(input_dim, |i, _| traj.aux[i].values[k]))
        .collect())
}

/// Build the regression stream from an observed (x, u) trajectory for the
/// target policy K: ζ(t) = ψ(x,Kx) − ψ(x,u) + d/dt ψ(x,Kx) and
/// b(t) = c(x,u) − d(x,u) + d(x,Kx) + d/dt d(x,Kx) with d = c.
///
/// Time derivatives are forward differences of the sampled compositions, so
/// no model matrices enter; the stream has one sample fewer than the input.
pub fn regressors(
    traj: &Trajectory,
    policy: &LinearPolicy,
    basis: &QuadraticBasis,
    cost: &QuadCost,
) -> Result<Vec<RegressorSample>> {
    if traj.len() < 2 {
        return Err(Error::WindowTooShort { len: traj.len(), min: 2 });
    }
    let m = basis.input_dim;
    let us = inputs_of(traj, m)?;
    let dim = basis.dim();
    let mut out = Vec::with_capacity(traj.len() - 1);
    let mut psi_phi = DVector::zeros(dim);
    let mut psi_phi_next = DVector::zeros(dim);
    let mut psi_u = DVector::zeros(dim);
    for k in 0..traj.len() - 1 {
        let x = traj.state_vector(k);
        let x_next = traj.state_vector(k + 1);
        let dt = traj.times[k + 1] - traj.times[k];
        let phi = policy.eval(&x);
        let phi_next = policy.eval(&x_next);
        basis.eval_into(&x, &phi, &mut psi_phi);
        basis.eval_into(&x_next, &phi_next, &mut psi_phi_next);
        basis.eval_into(&x, &us[k], &mut psi_u);

        let mut zeta = &psi_phi - &psi_u;
        zeta.axpy(1.0 / dt, &psi_phi_next, 1.0);
        zeta.axpy(-1.0 / dt, &psi_phi, 1.0);

        let c_phi = cost.eval(&x, &phi);
        let c_phi_next = cost.eval(&x_next, &phi_next);
        // with d = c the off-policy cost terms cancel: b = c(x,Kx) + d/dt c(x,Kx)
        let b = c_phi + (c_phi_next - c_phi) / dt;
        out.push(RegressorSample { t: traj.times[k], zeta, b });
    }
    Ok(out)
}

/// Instantaneous Bellman error b(t) + ζ(t)ᵀθ.
pub fn bellman_error(param: &QParam, sample: &RegressorSample) -> f64 {
    sample.b + sample.zeta.dot(&param.theta)
}

/// Time average of ζζᵀ over [0, T₁] with its condition number.
#[derive(Debug, Clone)]
pub struct GramEstimate {
    pub gram: DMatrix<f64>,
    pub condition: f64,
    pub horizon: f64,
}

const GRAM_CONDITION_LIMIT: f64 = 1e12;

/// Left-sum estimate Ĝ = (1/T₁) Σ ζζᵀ dt over samples with t < T₁;
/// symmetric PSD by construction. Fails when numerically singular.
pub fn estimate_gain_matrix(samples: &[RegressorSample], t1: f64) -> Result<GramEstimate> {
    let dim = samples.first().map(|s| s.zeta.len()).unwrap_or(0);
    if dim == 0 {
        return Err(Error::WindowTooShort { len: 0, min: 2 });
    }
    let mut gram = DMatrix::<f64>::zeros(dim, dim);
    let mut count = 0usize;
    for window in samples.windows(2) {
        if window[0].t >= t1 {
            break;
        }
        let dt = window[1].t - window[0].t;
        gram.syger(dt, &window[0].zeta, &window[0].zeta, 1.0);
        count += 1;
    }
    if count < 2 {
        return Err(Error::WindowTooShort { len: count, min: 2 });
    }
    gram /= t1;
    gram.fill_upper_triangle_with_lower_triangle();

    let svals = gram.singular_values();
    let smax = svals[0];
    let smin = svals[svals.len() - 1];
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !condition.is_finite() || condition > GRAM_CONDITION_LIMIT {
        return Err(Error::SingularGram { cond: condition });
    }
    Ok(GramEstimate { gram, condition, horizon: t1 })
}

/// Options for the two-step estimator.
#[derive(Debug, Clone)]
pub struct EvalOptions {
    /// Gram-estimation window [0, T₁].
    pub t1: f64,
    /// Descent gain g; the phase-2 step size is g/(1 + t - T₁).
    pub gain: f64,
    pub theta0: Option<DVector<f64>>,
    /// Record every k-th θ sample (0 = auto).
    pub record_stride: usize,
}

impl EvalOptions {
    pub fn new(t1: f64, gain: f64) -> Self {
        Self { t1, gain, theta0: None, record_stride: 0 }
    }
}

/// Result of the two-step policy evaluation.
#[derive(Debug, Clone)]
pub struct EvalOutcome {
    pub param: QParam,
    pub gram: GramEstimate,
    /// Mean-square instantaneous Bellman error at the returned θ over the
    /// descent window.
    pub mean_square_error: f64,
    /// θ(t) during phase 2, with the instantaneous Bellman error as an aux
    /// channel.
    pub theta_trace: Trajectory,
}

/// Two-step estimator: estimate Ĝ on [0, T₁], then integrate the
/// preconditioned descent dθ/dt = −a(t)·Ĝ⁻¹·(ζᵀθ + b)·ζ over the remaining
/// samples.
pub fn policy_evaluation(samples: &[RegressorSample], opts: &EvalOptions) -> Result<EvalOutcome> {
    let gram = estimate_gain_matrix(samples, opts.t1)?;
    let dim = gram.gram.nrows();
    let gram_inv = gram
        .gram
        .clone()
        .try_inverse()
        .ok_or(Error::SingularGram { cond: f64::INFINITY })?;

    let start = samples.partition_point(|s| s.t < opts.t1);
    let tail = &samples[start..];
    if tail.len() < 2 {
        return Err(Error::WindowTooShort { len: tail.len(), min: 2 });
    }

    let mut theta = opts.theta0.clone().unwrap_or_else(|| DVector::zeros(dim));
    if theta.len() != dim {
        return Err(Error::Dimension("theta0 dimension mismatch".into()));
    }
    let stride = if opts.record_stride == 0 {
        (tail.len() / 100_000).max(1)
    } else {
        opts.record_stride
    };

    let t_origin = tail[0].t;
    let mut trace = Trajectory::with_capacity(dim, tail.len() / stride + 2);
    let mut err_channel = Vec::with_capacity(tail.len() / stride + 2);
    let mut precond = DVector::zeros(dim);
    for (k, window) in tail.windows(2).enumerate() {
        let s = &window[0];
        let dt = window[1].t - s.t;
        let err = s.b + s.zeta.dot(&theta);
        if k % stride == 0 {
            trace.push(s.t, theta.as_slice());
            err_channel.push(err);
        }
        let a = opts.gain / (1.0 + s.t - t_origin);
        precond.gemv(1.0, &gram_inv, &s.zeta, 0.0);
        theta.axpy(-dt * a * err, &precond, 1.0);
        if !theta.norm_squared().is_finite() {
            return Err(Error::Diverged { t: s.t, norm: f64::INFINITY });
        }
    }
    let last = &tail[tail.len() - 1];
    trace.push(last.t, theta.as_slice());
    err_channel.push(last.b + last.zeta.dot(&theta));
    trace.aux.push(AuxChannel { name: "bellman_error".into(), values: err_channel });

    let param = QParam { theta };
    let mse = tail
        .iter()
        .map(|s| {
            let e = bellman_error(&param, s);
            e * e
        })
        .sum::<f64>()
        / tail.len() as f64;

    Ok(EvalOutcome { param, gram, mean_square_error: mse, theta_trace: trace })
}

/// Exact fixed point for a linear policy: solves the closed-loop Lyapunov
/// equation (A+BK)ᵀP + P(A+BK) + M + KᵀRK = 0 and projects the resulting
/// quadratic form (blocks AᵀP+PA+P and PB over the cost) onto the basis.
pub fn q_true(
    model: &LtiModel,
    cost: &QuadCost,
    policy: &LinearPolicy,
    basis: &QuadraticBasis,
) -> Result<(DMatrix<f64>, QParam)> {
    let a_cl = &model.a + &model.b * &policy.k;
    let q = &cost.m + policy.k.transpose() * &cost.r * &policy.k;
    let p = matrix::solve_lyapunov(&a_cl, &q)?;
    let w = model.a.transpose() * &p + &p * &model.a + &p;
    let v = &p * &model.b;
    let u_block = DMatrix::zeros(model.input_dim(), model.input_dim());
    let theta = basis.project_quadratic_form(&w, &v, &u_block);
    Ok((p, QParam { theta }))
}

/// Greedy improvement: K⁺ = −Q_uu⁻¹ Q_ux from the θ-parameterized quadratic
/// plus the d = c part; fails unless Q_uu ≻ 0.
pub fn policy_update(
    param: &QParam,
    basis: &QuadraticBasis,
    cost: &QuadCost,
) -> Result<LinearPolicy> {
    let n = basis.state_dim;
    let m = basis.input_dim;
    let mut q_uu = cost.r.clone();
    let mut q_ux = DMatrix::<f64>::zeros(m, n);
    for (k, &(i, j)) in basis.pairs().iter().enumerate() {
        let c = param.theta[k];
        match (i < n, j < n) {
            (false, false) => {
                if i == j {
                    q_uu[(i - n, j - n)] += c;
                } else {
                    q_uu[(i - n, j - n)] += 0.5 * c;
                    q_uu[(j - n, i - n)] += 0.5 * c;
                }
            }
            (true, false) => q_ux[(j - n, i)] += 0.5 * c,
            (false, true) => q_ux[(i - n, j)] += 0.5 * c,
            (true, true) => {}
        }
    }
    let spectrum = matrix::eigenvalues(&q_uu)?;
    let min_eig = spectrum.eigenvalues.iter().map(|e| e.re).fold(f64::INFINITY, f64::min);
    if min_eig <= 0.0 {
        return Err(Error::IndefiniteInputBlock { min_eig });
    }
    let k = -(q_uu
        .try_inverse()
        .ok_or(Error::IndefiniteInputBlock { min_eig })?
        * q_ux);
    Ok(LinearPolicy::new(k))
}

/// How each round of policy iteration evaluates the current policy.
#[derive(Debug, Clone)]
pub enum EvaluationMode {
    /// Model-free regression along the supplied excited trajectory.
    Regression(EvalOptions),
    /// Exact Lyapunov fixed point (reduces the loop to the Newton iteration).
    Exact,
}

#[derive(Debug, Clone, Serialize)]
pub struct PiaRound {
    pub round: usize,
    pub gains: Vec<f64>,
    /// ‖K_n − K*‖ / ‖K*‖ against the Riccati solution.
    pub relative_distance: f64,
}

/// Alternate policy evaluation and greedy improvement for `rounds` rounds,
/// measuring every iterate against the Riccati gain. Stops early with an
/// error if an improved policy fails the update precondition; regression
/// mode reuses one excited trajectory for every round (evaluation is
/// off-policy, so the same data serves each target policy).
pub fn pia_loop(
    model: &LtiModel,
    cost: &QuadCost,
    k_init: &LinearPolicy,
    trajectory: Option<&Trajectory>,
    rounds: usize,
    mode: &EvaluationMode,
) -> Result<Vec<PiaRound>> {
    let basis = QuadraticBasis::new(model.state_dim(), model.input_dim());
    let k_star = matrix::riccati_oracle(&model.a, &model.b, &cost.m, &cost.r, &k_init.k)?.k;
    let k_star_norm = k_star.norm();

    let mut policy = k_init.clone();
    let mut out = Vec::with_capacity(rounds);
    for round in 1..=rounds {
        let param = match mode {
            EvaluationMode::Exact => q_true(model, cost, &policy, &basis)?.1,
            EvaluationMode::Regression(opts) => {
                let traj = trajectory.ok_or_else(|| {
                    Error::Invalid("regression mode needs an excited trajectory".into())
                })?;
                let samples = regressors(traj, &policy, &basis, cost)?;
                policy_evaluation(&samples, opts)?.param
            }
        };
        policy = policy_update(&param, &basis, cost)?;
        let distance = (&policy.k - &k_star).norm() / k_star_norm;
        out.push(PiaRound {
            round,
            gains: policy.k.iter().copied().collect(),
            relative_distance: distance,
        });
    }
    Ok(out)
}
