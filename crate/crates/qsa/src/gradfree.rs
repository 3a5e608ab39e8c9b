//! Gradient-free convex minimization by probed descent: the state is probed
//! as x(t) = θ(t) + ε ξ(t) and only observations of J(x(t)) drive the update.
//!
//! Two variants: `esc1` multiplies the raw observation by the probe,
//! `esc2` multiplies a forward-differenced d/dt J(x(t)) by the analytic
//! probe derivative through a matrix gain.

use std::cell::Cell;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::quadrature::trapezoid;
use crate::sim::{simulate, Field, GainSchedule, SimOptions, Trajectory};
use crate::signals::ProbingSignal;

/// Objective with an optional analytic gradient (test oracle only; the
/// descent algorithms never touch it).
#[derive(Clone)]
pub struct Objective {
    pub name: String,
    f: Arc<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>,
    grad: Option<Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>>,
}

impl Objective {
    pub fn new(
        name: impl Into<String>,
        f: impl Fn(&DVector<f64>) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self { name: name.into(), f: Arc::new(f), grad: None }
    }

    pub fn with_gradient(
        mut self,
        grad: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        self.grad = Some(Arc::new(grad));
        self
    }

    /// J(θ) = ½(θ-θ*)ᵀ H (θ-θ*) with SPD `hessian`; gradient attached.
    pub fn quadratic(hessian: DMatrix<f64>, minimizer: DVector<f64>) -> Self {
        let h = hessian.clone();
        let m = minimizer.clone();
        let hg = hessian;
        let mg = minimizer;
        Self {
            name: "quadratic".into(),
            f: Arc::new(move |theta| {
                let d = theta - &m;
                0.5 * (d.transpose() * &h * &d)[(0, 0)]
            }),
            grad: Some(Arc::new(move |theta| &hg * (theta - &mg))),
        }
    }

    /// The classic banana valley. Nonconvex, so outside the convergence
    /// theory; shipped for exploratory runs only.
    pub fn rosenbrock() -> Self {
        Self::new("rosenbrock", |theta: &DVector<f64>| {
            let (a, b) = (1.0, 100.0);
            (a - theta[0]).powi(2) + b * (theta[1] - theta[0] * theta[0]).powi(2)
        })
        .with_gradient(|theta| {
            let (a, b) = (1.0, 100.0);
            DVector::from_vec(vec![
                -2.0 * (a - theta[0]) - 4.0 * b * (theta[1] - theta[0] * theta[0]) * theta[0],
                2.0 * b * (theta[1] - theta[0] * theta[0]),
            ])
        })
    }

    pub fn eval(&self, theta: &DVector<f64>) -> f64 {
        (self.f)(theta)
    }

    pub fn gradient(&self, theta: &DVector<f64>) -> Option<DVector<f64>> {
        self.grad.as_ref().map(|g| g(theta))
    }

    /// Central-difference gradient; sanity layer against the analytic one.
    pub fn fd_gradient(&self, theta: &DVector<f64>, h: f64) -> DVector<f64> {
        let mut out = DVector::zeros(theta.len());
        let mut probe = theta.clone();
        for i in 0..theta.len() {
            probe[i] = theta[i] + h;
            let plus = self.eval(&probe);
            probe[i] = theta[i] - h;
            let minus = self.eval(&probe);
            probe[i] = theta[i];
            out[i] = (plus - minus) / (2.0 * h);
        }
        out
    }
}

impl std::fmt::Debug for Objective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Objective").field("name", &self.name).finish()
    }
}

/// Configuration shared by both descent variants.
#[derive(Debug, Clone)]
pub struct EscConfig {
    /// Probe amplitude ε > 0.
    pub epsilon: f64,
    pub gain: GainSchedule,
    pub probe: ProbingSignal,
    /// Matrix gain for the second variant; `None` means Σ̇⁻¹ (inverse of the
    /// probe-derivative covariance), the steepest-descent choice.
    pub matrix_gain: Option<DMatrix<f64>>,
}

impl EscConfig {
    pub fn new(epsilon: f64, gain: GainSchedule, probe: ProbingSignal) -> Self {
        Self { epsilon, gain, probe, matrix_gain: None }
    }

    fn validate(&self, dim: usize) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::Invalid("epsilon must be positive".into()));
        }
        if self.probe.dim() != dim {
            return Err(Error::Dimension(format!(
                "probe dim {} != objective dim {dim}",
                self.probe.dim()
            )));
        }
        Ok(())
    }
}

struct Esc1Field {
    obj: Objective,
    probe: ProbingSignal,
    epsilon: f64,
}

impl Field for Esc1Field {
    fn dim(&self) -> usize {
        self.probe.dim()
    }

    fn eval_into(&self, theta: &DVector<f64>, t: f64, out: &mut DVector<f64>) {
        self.probe.eval_into(t, out);
        let x = theta + &*out * self.epsilon;
        let j = self.obj.eval(&x);
        if !j.is_finite() {
            out.fill(f64::NAN); // surfaces as a divergence at this step
            return;
        }
        *out *= -j;
    }
}

/// Probed descent #1: dθ/dt = −a(t) ξ(t) J(θ(t) + ε ξ(t)).
pub fn esc1(
    obj: &Objective,
    cfg: &EscConfig,
    theta0: &DVector<f64>,
    horizon: f64,
    dt: f64,
) -> Result<Trajectory> {
    cfg.validate(theta0.len())?;
    let field = Esc1Field { obj: obj.clone(), probe: cfg.probe.clone(), epsilon: cfg.epsilon };
    let mut traj = simulate(&field, &cfg.gain, theta0, &SimOptions::new(dt, horizon))?;
    attach_observed_objective(obj, cfg, &mut traj);
    Ok(traj)
}

/// Stateful field for the second variant: remembers the previous J sample to
/// form the forward difference (J(x(t)) − J(x(t−dt)))/dt, so only observed
/// values of J are used.
struct Esc2Field {
    obj: Objective,
    probe: ProbingSignal,
    epsilon: f64,
    gain_matrix: DMatrix<f64>,
    dt: f64,
    prev: Cell<Option<f64>>,
}

impl Field for Esc2Field {
    fn dim(&self) -> usize {
        self.probe.dim()
    }

    fn eval_into(&self, theta: &DVector<f64>, t: f64, out: &mut DVector<f64>) {
        let xi = self.probe.eval(t);
        let x = theta + &xi * self.epsilon;
        let j = self.obj.eval(&x);
        let dj = match self.prev.replace(Some(j)) {
            Some(prev) => (j - prev) / self.dt,
            None => 0.0, // no sample yet; hold still for one step
        };
        let mut dxi = DVector::zeros(self.dim());
        self.probe.deriv_into(t, &mut dxi);
        out.copy_from(&(-(&self.gain_matrix * dxi) * dj));
    }
}

/// Probed descent #2: dθ/dt = −a(t) G ξ̇(t) (d/dt)J(x(t)), model-free via a
/// one-slot forward difference of the observed objective.
pub fn esc2(
    obj: &Objective,
    cfg: &EscConfig,
    theta0: &DVector<f64>,
    horizon: f64,
    dt: f64,
) -> Result<Trajectory> {
    cfg.validate(theta0.len())?;
    let gain_matrix = match &cfg.matrix_gain {
        Some(g) => {
            if g.clone().try_inverse().is_none() && g.norm() > 0.0 {
                return Err(Error::Invalid("matrix gain must be invertible (or zero)".into()));
            }
            g.clone()
        }
        None => {
            let sigma = cfg.probe.derivative_covariance_limit();
            sigma
                .try_inverse()
                .ok_or_else(|| Error::Invalid("probe derivative covariance is singular".into()))?
        }
    };
    let field = Esc2Field {
        obj: obj.clone(),
        probe: cfg.probe.clone(),
        epsilon: cfg.epsilon,
        gain_matrix,
        dt,
        prev: Cell::new(None),
    };
    let mut traj = simulate(&field, &cfg.gain, theta0, &SimOptions::new(dt, horizon))?;
    attach_observed_objective(obj, cfg, &mut traj);
    Ok(traj)
}

fn attach_observed_objective(obj: &Objective, cfg: &EscConfig, traj: &mut Trajectory) {
    let values: Vec<f64> = (0..traj.len())
        .map(|k| {
            let theta = traj.state_vector(k);
            let x = &theta + cfg.probe.eval(traj.times[k]) * cfg.epsilon;
            obj.eval(&x)
        })
        .collect();
    traj.aux.push(crate::sim::AuxChannel { name: "J_x".into(), values });
}

/// Residual of the first-variant moment identity at frozen θ:
/// ‖avg_t[−ξ(t) J(θ+εξ(t))] + ε ∇J(θ)‖, averaged by trapezoid over [0, T].
///
/// For an exactly quadratic J and a full-period horizon the residual is the
/// pure second-order term, so halving ε divides it by four.
pub fn probe_moment_residual(
    obj: &Objective,
    probe: &ProbingSignal,
    theta: &DVector<f64>,
    epsilon: f64,
    horizon: f64,
    dt: f64,
) -> Result<f64> {
    let grad = obj
        .gradient(theta)
        .ok_or_else(|| Error::Invalid("analytic gradient required for the moment check".into()))?;
    let dim = theta.len();
    let n = (horizon / dt).round() as usize;
    let mut comps = vec![Vec::with_capacity(n + 1); dim];
    let mut xi = DVector::zeros(dim);
    for k in 0..=n {
        let t = k as f64 * dt;
        probe.eval_into(t, &mut xi);
        let x = theta + &xi * epsilon;
        let j = obj.eval(&x);
        for i in 0..dim {
            comps[i].push(-xi[i] * j);
        }
    }
    let span = n as f64 * dt;
    let avg = DVector::from_fn(dim, |i, _| trapezoid(&comps[i], dt) / span);
    Ok((avg + grad * epsilon).norm())
}

/// Residual of the second-variant moment identity at frozen θ:
/// ‖avg_t[ξ̇(t)·(d/dt)J(θ+εξ(t))] − ε Σ̇ ∇J(θ)‖ with the exact chain-rule
/// derivative (analytic-gradient oracle) and Σ̇ the probe-derivative
/// covariance limit.
pub fn derivative_moment_residual(
    obj: &Objective,
    probe: &ProbingSignal,
    theta: &DVector<f64>,
    epsilon: f64,
    horizon: f64,
    dt: f64,
) -> Result<f64> {
    let grad_at = |x: &DVector<f64>| {
        obj.gradient(x)
            .ok_or_else(|| Error::Invalid("analytic gradient required for the moment check".into()))
    };
    let grad_theta = grad_at(theta)?;
    let dim = theta.len();
    let n = (horizon / dt).round() as usize;
    let mut comps = vec![Vec::with_capacity(n + 1); dim];
    let mut xi = DVector::zeros(dim);
    let mut dxi = DVector::zeros(dim);
    for k in 0..=n {
        let t = k as f64 * dt;
        probe.eval_into(t, &mut xi);
        probe.deriv_into(t, &mut dxi);
        let x = theta + &xi * epsilon;
        let dj = epsilon * dxi.dot(&grad_at(&x)?);
        for i in 0..dim {
            comps[i].push(dxi[i] * dj);
        }
    }
    let span = n as f64 * dt;
    let avg = DVector::from_fn(dim, |i, _| trapezoid(&comps[i], dt) / span);
    let expected = probe.derivative_covariance_limit() * grad_theta * epsilon;
    Ok((avg - expected).norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signals::SinusoidTerm;
    use approx::assert_relative_eq;
    use std::f64::consts::TAU;

    fn spd_quadratic() -> Objective {
        Objective::quadratic(
            DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]),
            DVector::from_vec(vec![1.0, -1.0]),
        )
    }

    /// Two commensurate terms (period 1) with a resonant pair ω₂ = 2ω₁ and a
    /// π/4 phase, so the third probe moment (hence the ε² term) is nonzero.
    fn resonant_probe() -> ProbingSignal {
        ProbingSignal::new(vec![
            SinusoidTerm {
                direction: DVector::from_vec(vec![2.0f64.sqrt(), 0.0]),
                phase: TAU / 8.0,
                frequency: TAU,
            },
            SinusoidTerm {
                direction: DVector::from_vec(vec![0.0, 2.0f64.sqrt()]),
                phase: 0.0,
                frequency: 2.0 * TAU,
            },
        ])
        .unwrap()
    }

    fn sparse_probe() -> ProbingSignal {
        // irrational frequency ratios: no resonances, third moments vanish
        ProbingSignal::new(vec![
            SinusoidTerm {
                direction: DVector::from_vec(vec![2.0f64.sqrt(), 0.0]),
                phase: 0.0,
                frequency: TAU * 5.0f64.sqrt(),
            },
            SinusoidTerm {
                direction: DVector::from_vec(vec![0.0, 2.0f64.sqrt()]),
                phase: 0.0,
                frequency: TAU * 7.0f64.sqrt(),
            },
        ])
        .unwrap()
    }

    #[test]
    fn fd_gradient_matches_analytic() {
        let obj = spd_quadratic();
        let theta = DVector::from_vec(vec![0.3, 0.9]);
        let fd = obj.fd_gradient(&theta, 1e-5);
        let an = obj.gradient(&theta).unwrap();
        assert!((fd - an).norm() < 1e-6);

        let ros = Objective::rosenbrock();
        let theta = DVector::from_vec(vec![-0.4, 0.7]);
        assert!((ros.fd_gradient(&theta, 1e-6) - ros.gradient(&theta).unwrap()).norm() < 1e-5);
    }

    #[test]
    fn moment_residual_quarters_when_epsilon_halves() {
        let obj = spd_quadratic();
        let probe = resonant_probe();
        let theta = DVector::from_vec(vec![2.0, -1.5]);
        let r = |eps: f64| probe_moment_residual(&obj, &probe, &theta, eps, 1.0, 1e-3).unwrap();
        let (r1, r2, r3) = (r(0.1), r(0.05), r(0.025));
        // frozen from the closed-form third moments: r(0.1) = ½ε²·‖(√2/2)·(1, 2)‖
        assert_relative_eq!(r1, 0.0079056941504, max_relative = 1e-6);
        assert_relative_eq!(r1 / r2, 4.0, max_relative = 1e-6);
        assert_relative_eq!(r2 / r3, 4.0, max_relative = 1e-6);
    }

    #[test]
    fn derivative_moment_residual_quarters() {
        let obj = spd_quadratic();
        let probe = resonant_probe();
        let theta = DVector::from_vec(vec![2.0, -1.5]);
        let r =
            |eps: f64| derivative_moment_residual(&obj, &probe, &theta, eps, 1.0, 1e-3).unwrap();
        let (r1, r2, r3) = (r(0.1), r(0.05), r(0.025));
        assert_relative_eq!(r1 / r2, 4.0, max_relative = 1e-5);
        assert_relative_eq!(r2 / r3, 4.0, max_relative = 1e-5);
    }

    #[test]
    fn esc1_converges_on_quadratic() {
        let obj = spd_quadratic();
        let cfg = EscConfig::new(0.1, GainSchedule::decaying(3.0), sparse_probe());
        let traj = esc1(&obj, &cfg, &DVector::zeros(2), 2000.0, 1e-3).unwrap();
        let err = (traj.state_vector(traj.len() - 1) - DVector::from_vec(vec![1.0, -1.0])).norm();
        assert!(err <= 0.3, "err {err}");
    }

    #[test]
    fn esc1_constant_objective_barely_drifts() {
        let obj = Objective::new("flat", |_| 1.0).with_gradient(|t| DVector::zeros(t.len()));
        let cfg = EscConfig::new(0.1, GainSchedule::decaying(1.0), sparse_probe());
        let t100 = esc1(&obj, &cfg, &DVector::zeros(2), 100.0, 1e-3).unwrap();
        let t200 = esc1(&obj, &cfg, &DVector::zeros(2), 200.0, 1e-3).unwrap();
        let d100 = t100.state_vector(t100.len() - 1).norm();
        let d200 = t200.state_vector(t200.len() - 1).norm();
        assert!(d100 < 0.5, "drift {d100}");
        // the drift integral converges, so extending the run barely moves θ
        assert!((d200 - d100).abs() < 0.05);
    }

    #[test]
    fn esc1_bias_shrinks_with_epsilon() {
        // resonant probe => genuine O(ε²) term in the averaged field, so the
        // equilibrium offset scales with ε
        let obj = spd_quadratic();
        let minimizer = DVector::from_vec(vec![1.0, -1.0]);
        let run = |eps: f64| {
            let cfg = EscConfig::new(eps, GainSchedule::decaying(3.0), resonant_probe());
            let traj = esc1(&obj, &cfg, &minimizer, 1000.0, 1e-3).unwrap();
            (traj.state_vector(traj.len() - 1) - &minimizer).norm()
        };
        let (e_big, e_small) = (run(0.2), run(0.1));
        assert!(e_small < e_big, "bias did not shrink: {e_small} vs {e_big}");
    }

    #[test]
    fn esc2_converges_with_steepest_descent_gain() {
        let obj = spd_quadratic();
        let cfg = EscConfig::new(0.1, GainSchedule::decaying(3.0), sparse_probe());
        let traj = esc2(&obj, &cfg, &DVector::zeros(2), 2000.0, 1e-3).unwrap();
        let err = (traj.state_vector(traj.len() - 1) - DVector::from_vec(vec![1.0, -1.0])).norm();
        assert!(err <= 0.3, "err {err}");
    }

    #[test]
    fn esc1_error_decreases_over_decades() {
        let obj = spd_quadratic();
        let cfg = EscConfig::new(0.1, GainSchedule::decaying(3.0), sparse_probe());
        let traj = esc1(&obj, &cfg, &DVector::zeros(2), 2000.0, 1e-3).unwrap();
        let minimizer = DVector::from_vec(vec![1.0, -1.0]);
        let err_at = |t: f64| {
            let k = traj.index_at(t).min(traj.len() - 1);
            (traj.state_vector(k) - &minimizer).norm()
        };
        let (e1, e2, e3) = (err_at(20.0), err_at(200.0), err_at(2000.0));
        assert!(e1 > e2 && e2 > e3, "{e1} {e2} {e3}");
    }

    #[test]
    fn esc2_zero_gain_freezes() {
        let obj = spd_quadratic();
        let mut cfg = EscConfig::new(0.1, GainSchedule::decaying(2.0), sparse_probe());
        cfg.matrix_gain = Some(DMatrix::zeros(2, 2));
        let theta0 = DVector::from_vec(vec![0.4, 0.2]);
        let traj = esc2(&obj, &cfg, &theta0, 10.0, 1e-3).unwrap();
        assert_eq!(traj.last_state(), &[0.4, 0.2]);
    }

    #[test]
    fn trajectories_carry_observed_objective() {
        let obj = spd_quadratic();
        let cfg = EscConfig::new(0.1, GainSchedule::decaying(2.0), sparse_probe());
        let traj = esc1(&obj, &cfg, &DVector::zeros(2), 1.0, 1e-2).unwrap();
        assert_eq!(traj.aux.len(), 1);
        assert_eq!(traj.aux[0].name, "J_x");
        assert_eq!(traj.aux[0].values.len(), traj.len());
    }
}
