//! Acceptance criteria as runnable checks, shared by the `acceptance`
//! integration-test target and the CLI `check` subcommand.
//!
//! Every tolerance is pinned here. Each criterion reports the measured
//! values alongside its thresholds so failures are diagnosable from the
//! printed lines alone.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::coupling::{
    asymptotic_covariance, covariance_distance, fit_loglog_envelope_slope, scaled_error_series,
    transition_integral_identity_residual, StateTransition,
};
use crate::gradfree::{
    derivative_moment_residual, esc1, esc2, probe_moment_residual, EscConfig, Objective,
};
use crate::lqr::{
    pia_loop, policy_evaluation, q_true, regressors, simulate_closed_loop,
    simulate_closed_loop_noise, EvalOptions, EvaluationMode, LinearPolicy, LtiModel, QuadCost,
    QuadraticBasis,
};
use crate::matrix;
use crate::qmc::{centered_noise_integral, histogram_experiment, qmc_estimate, qmc_trajectory,
    HistogramConfig, Integrand};
use crate::sim::{simulate, FnField, GainSchedule, SimOptions};
use crate::signals::{ProbingSignal, SinusoidTerm};

/// Full runs the criteria at their stated budgets; Quick scales horizons and
/// run counts down for a fast smoke pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Full,
    Quick,
}

#[derive(Debug, Clone, Serialize)]
pub struct CriterionReport {
    pub id: u32,
    pub name: &'static str,
    pub pass: bool,
    pub lines: Vec<String>,
}

impl CriterionReport {
    fn new(id: u32, name: &'static str) -> Self {
        Self { id, name, pass: true, lines: Vec::new() }
    }

    fn check(&mut self, ok: bool, line: String) {
        self.pass &= ok;
        self.lines.push(format!("[{}] {line}", if ok { "ok" } else { "FAIL" }));
    }

    fn note(&mut self, line: String) {
        self.lines.push(format!("[--] {line}"));
    }

    pub fn summary_line(&self) -> String {
        format!(
            "criterion {}: {} - {}",
            self.id,
            if self.pass { "PASS" } else { "FAIL" },
            self.name
        )
    }
}

/// Reference value of ∫₀¹ e^{4t} sin(100t) dt from the closed-form
/// antiderivative; the adaptive quadrature must agree with this.
const BENCHMARK_MEAN: f64 = -0.47111501852408455;
/// Value printed in the source material for the same integral.
const REPORTED_MEAN: f64 = -0.4841;

/// Estimate agrees with the adaptive-quadrature oracle.
pub fn criterion_1_estimate_vs_oracle(scale: Scale) -> CriterionReport {
    let mut rep = CriterionReport::new(1, "quasi-Monte-Carlo estimate vs quadrature oracle");
    let y = Integrand::oscillatory_benchmark();
    let oracle = y.quadrature_mean(1e-10);
    rep.check(
        (oracle - BENCHMARK_MEAN).abs() < 1e-9,
        format!("quadrature oracle {oracle:.12} agrees with the antiderivative {BENCHMARK_MEAN:.12}"),
    );
    rep.note(format!(
        "reported value {REPORTED_MEAN} differs from the oracle by {:.4e} (right-endpoint grid average at h=1e-3 is {:.6})",
        (REPORTED_MEAN - oracle).abs(),
        {
            let dt = 1e-3;
            let n = 1000;
            (0..n).map(|k| y.eval((k + 1) as f64 * dt)).sum::<f64>() / n as f64
        },
    ));

    let horizon = match scale {
        Scale::Full => 1000.0,
        Scale::Quick => 200.0,
    };
    let dt = 1e-3;
    let est = qmc_estimate(&y, 2.0, 10.0, horizon, dt).expect("estimate run");
    let err = (est - oracle).abs();
    rep.check(
        err <= 5e-3,
        format!("|estimate({est:.6}) - oracle({oracle:.6})| = {err:.4e} <= 5e-3 (g=2, T={horizon}, dt={dt})"),
    );
    rep.note(format!(
        "estimate sits {:.2e} from the left-endpoint grid average {:.6}; the dt-grid sampling bias (dt/2)|y(1)-y(0)| = {:.2e} dominates the oracle gap",
        (est - y.grid_mean(dt)).abs(),
        y.grid_mean(dt),
        0.5 * dt * (y.eval(1.0) - y.eval(0.0)).abs(),
    ));
    rep
}

/// Gain sweep variance collapse and the Monte-Carlo comparison.
pub fn criterion_2_variance_collapse(scale: Scale) -> CriterionReport {
    let mut rep = CriterionReport::new(2, "variance collapse across gains");
    let y = Integrand::oscillatory_benchmark();
    let (n_runs, horizon) = match scale {
        Scale::Full => (2000, 100.0),
        Scale::Quick => (200, 100.0),
    };
    let cfg = HistogramConfig {
        gains: vec![1.0, 2.0],
        n_runs,
        horizon,
        dt: 1e-3,
        seed: 9,
        init_variance: 10.0,
    };
    let (rows, _) = histogram_experiment(&y, &cfg).expect("histogram runs");
    let var_g1 = rows[0].variance;
    let var_g2 = rows[1].variance;
    let var_mc = rows[2].variance;
    rep.check(
        var_g2 * 1e3 <= var_g1,
        format!("var(g=2) = {var_g2:.3e} is >=1e3x below var(g=1) = {var_g1:.3e} (ratio {:.1})", var_g1 / var_g2),
    );
    rep.check(
        var_g1 < var_mc,
        format!("var(g=1) = {var_g1:.3e} beats Monte-Carlo {var_mc:.3e}"),
    );
    rep.check(
        var_g2 < var_mc,
        format!("var(g=2) = {var_g2:.3e} beats Monte-Carlo {var_mc:.3e}"),
    );
    rep
}

/// Scaled-error coupling to the centered noise integral.
pub fn criterion_3_coupling(_scale: Scale) -> CriterionReport {
    let mut rep = CriterionReport::new(3, "scaled-error coupling across gains");
    let y = Integrand::oscillatory_benchmark();
    let dt = 1e-3;
    let horizon = 100.0;
    // pipeline-consistent target: the exact sawtooth grid average, computed
    // by direct summation, independent of any ODE run
    let theta_star = y.grid_mean(dt);
    let reference = centered_noise_integral(&y, theta_star, dt, horizon);
    let lo = reference.index_at(95.0);
    let sup_ref = (lo..reference.len())
        .map(|k| reference.state(k)[0].abs())
        .fold(0.0, f64::max);
    let threshold = 0.05 * sup_ref;

    for &g in &[2.0, 3.0, 5.0] {
        let traj = qmc_trajectory(&y, g, 2.0, horizon, dt, 1).expect("coupling run");
        let nu = scaled_error_series(&traj, &DVector::from_element(1, theta_star));
        let sup_dev = (lo..nu.len())
            .map(|k| (nu.state(k)[0] / g - reference.state(k)[0]).abs())
            .fold(0.0, f64::max);
        rep.check(
            sup_dev <= threshold,
            format!("g={g}: sup|ν/g − ∫(y−θ*)| over [95,100] = {sup_dev:.4} <= {threshold:.4} (5% of sup|ξᴵ| = {sup_ref:.4})"),
        );
    }

    // g = 1.5: deviation decays like t^{-1/2}
    {
        let g = 1.5;
        let traj = qmc_trajectory(&y, g, 2.0, horizon, dt, 1).expect("slow-coupling run");
        let nu = scaled_error_series(&traj, &DVector::from_element(1, theta_star));
        let dev: Vec<f64> = (0..nu.len())
            .map(|k| (nu.state(k)[0] - g * reference.state(k)[0]).abs())
            .collect();
        let slope = fit_loglog_envelope_slope(&nu.times, &dev, (3.0, horizon), 16)
            .unwrap_or(f64::NAN);
        rep.check(
            (slope + 0.5).abs() <= 0.2,
            format!("g=1.5: fitted deviation slope {slope:.3} within -0.5 ± 0.2"),
        );
    }

    // g = 0.5: the scaled error grows ~ t^{1/2}
    {
        let g = 0.5;
        let traj = qmc_trajectory(&y, g, 2.0, horizon, dt, 1).expect("uncoupled run");
        let nu = scaled_error_series(&traj, &DVector::from_element(1, theta_star));
        let window_max = |a: f64, b: f64| {
            let lo = nu.index_at(a);
            let hi = nu.index_at(b).min(nu.len());
            (lo..hi).map(|k| nu.state(k)[0].abs()).fold(0.0, f64::max)
        };
        let ratio = window_max(90.0, 100.0 + dt) / window_max(9.0, 11.0);
        let target = 10.0f64.powf(0.5);
        rep.check(
            ratio >= target / 2.0 && ratio <= target * 2.0,
            format!("g=0.5: ‖ν‖ decade growth ratio {ratio:.2} within 2x of 10^0.5 = {target:.2}"),
        );
    }
    rep
}

/// 1/t convergence rate of the estimate error.
pub fn criterion_4_rate(scale: Scale) -> CriterionReport {
    let mut rep = CriterionReport::new(4, "1/t convergence rate");
    let y = Integrand::oscillatory_benchmark();
    let oracle = y.quadrature_mean(1e-10);
    let (horizon, dt) = match scale {
        Scale::Full => (1000.0, 1e-4),
        Scale::Quick => (300.0, 1e-4),
    };
    let traj = qmc_trajectory(&y, 2.0, 10.0, horizon, dt, 10).expect("rate run");
    let err: Vec<f64> = (0..traj.len()).map(|k| (traj.state(k)[0] - oracle).abs()).collect();
    let slope =
        fit_loglog_envelope_slope(&traj.times, &err, (10.0, horizon), 16).unwrap_or(f64::NAN);
    rep.check(
        (-1.3..=-0.7).contains(&slope),
        format!("log-log envelope slope of |θ(t) − θ*| over [10,{horizon}] = {slope:.3} in [-1.3, -0.7] (dt={dt})"),
    );
    rep
}

fn resonant_probe() -> ProbingSignal {
    ProbingSignal::new(vec![
        SinusoidTerm {
            direction: DVector::from_vec(vec![2.0f64.sqrt(), 0.0]),
            phase: std::f64::consts::TAU / 8.0,
            frequency: std::f64::consts::TAU,
        },
        SinusoidTerm {
            direction: DVector::from_vec(vec![0.0, 2.0f64.sqrt()]),
            phase: 0.0,
            frequency: 2.0 * std::f64::consts::TAU,
        },
    ])
    .expect("resonant probe")
}

fn sparse_probe() -> ProbingSignal {
    ProbingSignal::new(vec![
        SinusoidTerm {
            direction: DVector::from_vec(vec![2.0f64.sqrt(), 0.0]),
            phase: 0.0,
            frequency: std::f64::consts::TAU * 5.0f64.sqrt(),
        },
        SinusoidTerm {
            direction: DVector::from_vec(vec![0.0, 2.0f64.sqrt()]),
            phase: 0.0,
            frequency: std::f64::consts::TAU * 7.0f64.sqrt(),
        },
    ])
    .expect("sparse probe")
}

/// Probe moment identities and both descent variants on an SPD quadratic.
pub fn criterion_5_gradient_free(scale: Scale) -> CriterionReport {
    let mut rep = CriterionReport::new(5, "gradient-free moment identities and descent");
    let obj = Objective::quadratic(
        DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]),
        DVector::from_vec(vec![1.0, -1.0]),
    );
    let probe = resonant_probe();
    let theta = DVector::from_vec(vec![2.0, -1.5]);

    let mut ratio_check = |name: &str, f: &dyn Fn(f64) -> f64| {
        let (r1, r2, r3) = (f(0.1), f(0.05), f(0.025));
        for (ratio, pair) in [(r1 / r2, "0.1/0.05"), (r2 / r3, "0.05/0.025")] {
            rep.check(
                (2.0..=6.0).contains(&ratio),
                format!("{name} residual ratio at ε {pair} = {ratio:.3} within 4 ± 50%"),
            );
        }
    };
    ratio_check("first-variant", &|eps| {
        probe_moment_residual(&obj, &probe, &theta, eps, 1.0, 1e-3).expect("moment residual")
    });
    ratio_check("derivative-variant", &|eps| {
        derivative_moment_residual(&obj, &probe, &theta, eps, 1.0, 1e-3).expect("moment residual")
    });

    let epsilon = 0.1;
    let (horizon, dt) = match scale {
        Scale::Full => (3000.0, 1e-3),
        Scale::Quick => (3000.0, 2e-3),
    };
    let minimizer = DVector::from_vec(vec![1.0, -1.0]);
    let cfg = EscConfig::new(epsilon, GainSchedule::decaying(3.0), sparse_probe());
    let t1 = esc1(&obj, &cfg, &DVector::zeros(2), horizon, dt).expect("esc1 run");
    let e1 = (t1.state_vector(t1.len() - 1) - &minimizer).norm();
    rep.check(
        e1 <= 3.0 * epsilon,
        format!("first variant reaches ‖θ(T) − θ*‖ = {e1:.3} <= 3ε = {:.1}", 3.0 * epsilon),
    );
    let t2 = esc2(&obj, &cfg, &DVector::zeros(2), horizon, dt).expect("esc2 run");
    let e2 = (t2.state_vector(t2.len() - 1) - &minimizer).norm();
    rep.check(
        e2 <= 3.0 * epsilon,
        format!("derivative variant reaches ‖θ(T) − θ*‖ = {e2:.3} <= 3ε = {:.1}", 3.0 * epsilon),
    );
    rep
}

fn benchmark_problem() -> (LtiModel, QuadCost) {
    (
        LtiModel::friction_integrator(),
        QuadCost::new(DMatrix::identity(2, 2), DMatrix::from_row_slice(1, 1, &[10.0]))
            .expect("benchmark cost"),
    )
}

/// Two-step off-policy evaluation accuracy plus the white-noise baseline.
pub fn criterion_6_policy_evaluation(scale: Scale) -> CriterionReport {
    let mut rep = CriterionReport::new(6, "off-policy evaluation of a fixed gain");
    let (model, cost) = benchmark_problem();
    let basis = QuadraticBasis::new(2, 1);
    let k0 = LinearPolicy::new(DMatrix::from_row_slice(1, 2, &[-1.0, -2.0]));
    let policy = LinearPolicy::new(DMatrix::from_row_slice(1, 2, &[-1.0, 0.0]));
    let probe = ProbingSignal::random_scalar_probe(24, 50.0, 42);

    let (dt, horizon) = match scale {
        Scale::Full => (2e-4, 1000.0),
        Scale::Quick => (1e-3, 400.0),
    };
    let opts = EvalOptions::new(50.0, 2.0);
    let x0 = DVector::zeros(2);
    let (_, exact) = q_true(&model, &cost, &policy, &basis).expect("ground truth");

    let traj = simulate_closed_loop(&model, &k0, &probe, &x0, dt, horizon).expect("probe run");
    let samples = regressors(&traj, &policy, &basis, &cost).expect("regressors");
    let outcome = policy_evaluation(&samples, &opts).expect("two-step evaluation");
    let rel = (&outcome.param.theta - &exact.theta).norm() / exact.theta.norm();
    rep.check(
        rel <= 0.02,
        format!(
            "probed evaluation: ‖θ − θ_exact‖/‖θ_exact‖ = {:.4} <= 0.02 (cond(Ĝ) = {:.2e}, dt={dt}, T={horizon})",
            rel, outcome.gram.condition
        ),
    );

    // same budget, white noise power-matched to the probe (24 terms, Σa²/2);
    // both estimators share one O(dt) bias floor at the endpoint, so the
    // speed comparison is the error averaged along the descent path
    let path_error = |trace: &crate::sim::Trajectory| {
        (0..trace.len())
            .map(|k| (trace.state_vector(k) - &exact.theta).norm())
            .sum::<f64>()
            / (trace.len() as f64 * exact.theta.norm())
    };
    let qsa_path = path_error(&outcome.theta_trace);
    let power: f64 = probe.terms().iter().map(|t| t.direction.norm_squared() / 2.0).sum();
    let noisy = simulate_closed_loop_noise(&model, &k0, power, 4242, &x0, dt, horizon)
        .expect("noise run");
    let noisy_samples = regressors(&noisy, &policy, &basis, &cost).expect("noise regressors");
    let sa_path = match policy_evaluation(&noisy_samples, &opts) {
        Ok(sa) => path_error(&sa.theta_trace),
        Err(_) => f64::INFINITY,
    };
    rep.check(
        sa_path > qsa_path,
        format!(
            "white-noise baseline converges slower: path-mean error {sa_path:.4} strictly above probed {qsa_path:.4}"
        ),
    );
    rep
}

/// Policy iteration: regression-driven rounds and the exact-evaluation
/// equivalence with the Newton (Kleinman) iteration.
pub fn criterion_7_policy_iteration(scale: Scale) -> CriterionReport {
    let mut rep = CriterionReport::new(7, "policy iteration to the Riccati gain");
    let (model, cost) = benchmark_problem();
    let k_init = LinearPolicy::new(DMatrix::from_row_slice(1, 2, &[-1.0, -2.0]));
    let probe = ProbingSignal::random_scalar_probe(24, 50.0, 314159);

    let (dt, horizon) = match scale {
        Scale::Full => (1e-3, 1000.0),
        Scale::Quick => (2e-3, 500.0),
    };
    let traj = simulate_closed_loop(&model, &k_init, &probe, &DVector::zeros(2), dt, horizon)
        .expect("probe run");
    let rounds = pia_loop(
        &model,
        &cost,
        &k_init,
        Some(&traj),
        6,
        &EvaluationMode::Regression(EvalOptions::new(50.0, 2.0)),
    )
    .expect("regression policy iteration");

    let dists: Vec<f64> = rounds.iter().map(|r| r.relative_distance).collect();
    let mut monotone = true;
    for w in dists.windows(2) {
        if w[1] > w[0] * 1.05 + 1e-3 {
            monotone = false;
        }
    }
    rep.check(monotone, format!("relative distances non-increasing: {dists:?}"));
    rep.check(
        dists[5] < 0.05,
        format!("round-6 relative distance {:.4} < 0.05", dists[5]),
    );

    // exact-evaluation mode reproduces the Newton iteration round by round
    let exact_rounds =
        pia_loop(&model, &cost, &k_init, None, 6, &EvaluationMode::Exact).expect("exact mode");
    let mut k = k_init.k.clone();
    let r_inv = cost.r.clone().try_inverse().unwrap();
    let mut worst: f64 = 0.0;
    for round in &exact_rounds {
        let p = matrix::solve_lyapunov(
            &(&model.a + &model.b * &k),
            &(&cost.m + k.transpose() * &cost.r * &k),
        )
        .expect("newton lyapunov");
        k = -(&r_inv * model.b.transpose() * &p);
        let got = DMatrix::from_row_slice(1, 2, &round.gains);
        worst = worst.max((got - &k).norm());
    }
    rep.check(
        worst <= 1e-8,
        format!("exact mode matches the Newton iterate per round, worst gap {worst:.2e} <= 1e-8"),
    );
    rep
}

/// Structural property suite: propagator identities, the integration-by-
/// parts residual, exact ergodic moments, model-free derivative agreement,
/// Euler order, and bit-exact determinism under parallelism.
pub fn criterion_8_structural(scale: Scale) -> CriterionReport {
    let mut rep = CriterionReport::new(8, "structural property suite");

    // propagator: identity, semigroup, defining ODE
    let a = DMatrix::from_row_slice(2, 2, &[-2.5, 0.7, -0.1, -3.2]);
    let stm = StateTransition::from_linearization(&a);
    let id_res = (stm.eval(4.2, 4.2) - DMatrix::<f64>::identity(2, 2)).norm();
    rep.check(id_res < 1e-12, format!("S(t;t) = I, residual {id_res:.2e}"));
    let semi_res = (stm.eval(9.0, 3.0) * stm.eval(3.0, 1.0) - stm.eval(9.0, 1.0)).norm();
    rep.check(semi_res < 1e-10, format!("semigroup residual {semi_res:.2e}"));
    let h = 1e-5;
    let (t, r) = (5.0, 2.0);
    let ode_res = ((stm.eval(t + h, r) - stm.eval(t - h, r)) / (2.0 * h)
        - &stm.a_bar * stm.eval(t, r) / (1.0 + t))
        .norm();
    rep.check(ode_res < 1e-7, format!("propagator ODE central-difference residual {ode_res:.2e}"));

    // integration-by-parts identity
    let scalar_stm = StateTransition { a_bar: DMatrix::from_row_slice(1, 1, &[-1.0]) };
    let signal = ProbingSignal::new(vec![SinusoidTerm {
        direction: DVector::from_element(1, 2.0f64.sqrt()),
        phase: 0.0,
        frequency: 2.0,
    }])
    .expect("signal");
    let quad_dt = match scale {
        Scale::Full => 1e-4,
        Scale::Quick => 5e-4,
    };
    let ident_res = transition_integral_identity_residual(&scalar_stm, &signal, 10.0, quad_dt);
    rep.check(
        ident_res <= 1e-6,
        format!("integration-by-parts identity residual {ident_res:.2e} <= 1e-6"),
    );

    // ergodic moments exact over whole periods
    let probe = resonant_probe();
    let m = probe.ergodic_moments(1.0, 1e-3);
    let mean_err = m.mean.norm();
    let cov_err = (&m.covariance - DMatrix::<f64>::identity(2, 2)).norm();
    let dcov_err = (&m.derivative_covariance - probe.derivative_covariance_limit()).norm()
        / probe.derivative_covariance_limit().norm();
    rep.check(mean_err < 1e-10, format!("probe mean over a period {mean_err:.2e} < 1e-10"));
    rep.check(cov_err < 1e-10, format!("probe covariance − I: {cov_err:.2e} < 1e-10"));
    rep.check(dcov_err < 1e-10, format!("derivative covariance mismatch {dcov_err:.2e} < 1e-10"));

    // scaled-error covariance matches the centered integral covariance
    {
        let omega = 2.0;
        let sig = ProbingSignal::new(vec![SinusoidTerm {
            direction: DVector::from_element(1, 2.0f64.sqrt()),
            phase: 0.0,
            frequency: omega,
        }])
        .expect("signal");
        let horizon = match scale {
            Scale::Full => 2000.0,
            Scale::Quick => 500.0,
        };
        let dt = 1e-3;
        let sigc = sig.clone();
        let field = FnField::new(1, move |th: &DVector<f64>, t: f64, out: &mut DVector<f64>| {
            out[0] = -2.0 * th[0] + sigc.eval(t)[0];
        });
        let traj = simulate(
            &field,
            &GainSchedule::decaying(1.0),
            &DVector::from_element(1, 1.0),
            &SimOptions::new(dt, horizon),
        )
        .expect("covariance run");
        let nu = scaled_error_series(&traj, &DVector::zeros(1));
        let cov = asymptotic_covariance(&nu, horizon);
        let centered = sig.integral_centered_covariance(horizon, dt);
        let dist = covariance_distance(&cov, &centered);
        rep.check(
            dist < 0.10,
            format!(
                "asymptotic covariance {:.4} within 10% of the centered integral covariance {:.4} (= 1/ω²)",
                cov[(0, 0)],
                centered[(0, 0)]
            ),
        );
    }

    // model-free regressor derivative is O(dt): halving dt halves the gap
    {
        let (model, cost) = benchmark_problem();
        let basis = QuadraticBasis::new(2, 1);
        let k0 = LinearPolicy::new(DMatrix::from_row_slice(1, 2, &[-1.0, -2.0]));
        let policy = LinearPolicy::new(DMatrix::from_row_slice(1, 2, &[-1.0, 0.0]));
        let probe = ProbingSignal::random_scalar_probe(24, 50.0, 77);
        let (_, exact) = q_true(&model, &cost, &policy, &basis).expect("ground truth");
        let worst_err = |dt: f64| {
            let traj =
                simulate_closed_loop(&model, &k0, &probe, &DVector::zeros(2), dt, 20.0)
                    .expect("run");
            let samples = regressors(&traj, &policy, &basis, &cost).expect("regressors");
            samples
                .iter()
                .map(|s| crate::lqr::bellman_error(&exact, s).abs())
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (worst_err(1e-3), worst_err(5e-4));
        let ratio = e1 / e2;
        rep.check(
            (1.5..=2.5).contains(&ratio),
            format!("instantaneous error at θ_exact is O(dt): ratio {ratio:.2} for dt halving ({e1:.3e} → {e2:.3e})"),
        );
    }

    // Euler order: halving dt halves the endpoint error
    {
        let field = FnField::new(1, |th: &DVector<f64>, _t: f64, out: &mut DVector<f64>| {
            out[0] = -th[0];
        });
        let theta0 = DVector::from_element(1, 1.0);
        let exact = 1.0 / 11.0;
        let run = |dt: f64| {
            let traj = simulate(
                &field,
                &GainSchedule::decaying(1.0),
                &theta0,
                &SimOptions::new(dt, 10.0),
            )
            .expect("euler run");
            (traj.last_state()[0] - exact).abs()
        };
        let ratio = run(1e-3) / run(5e-4);
        rep.check(
            (1.7..=2.3).contains(&ratio),
            format!("Euler endpoint-error halving ratio {ratio:.3} in [1.7, 2.3]"),
        );
    }

    // bit-exact determinism across worker counts
    {
        let y = Integrand::oscillatory_benchmark();
        let cfg = HistogramConfig {
            gains: vec![1.0, 2.0],
            n_runs: 24,
            horizon: 2.0,
            dt: 1e-3,
            seed: 123,
            init_variance: 10.0,
        };
        let pool1 = rayon::ThreadPoolBuilder::new().num_threads(1).build().expect("pool");
        let pool4 = rayon::ThreadPoolBuilder::new().num_threads(4).build().expect("pool");
        let (_, runs1) = pool1.install(|| histogram_experiment(&y, &cfg)).expect("runs");
        let (_, runs4) = pool4.install(|| histogram_experiment(&y, &cfg)).expect("runs");
        let identical = runs1.len() == runs4.len()
            && runs1.iter().zip(&runs4).all(|(a, b)| {
                a.theta0.to_bits() == b.theta0.to_bits()
                    && a.estimates
                        .iter()
                        .zip(&b.estimates)
                        .all(|(x, y)| x.to_bits() == y.to_bits())
            });
        rep.check(identical, "run records bit-identical for 1 vs 4 workers".into());
    }
    rep
}

/// Run every criterion at the given scale.
pub fn run_all(scale: Scale) -> Vec<CriterionReport> {
    vec![
        criterion_1_estimate_vs_oracle(scale),
        criterion_2_variance_collapse(scale),
        criterion_3_coupling(scale),
        criterion_4_rate(scale),
        criterion_5_gradient_free(scale),
        criterion_6_policy_evaluation(scale),
        criterion_7_policy_iteration(scale),
        criterion_8_structural(scale),
    ]
}
