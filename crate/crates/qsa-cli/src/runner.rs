//! Experiment execution: one function per experiment kind, each writing CSV
//! artifacts plus a manifest into the output directory.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde_json::json;

use qsa::coupling::{coupling_check, scaled_error_series};
use qsa::gradfree::{esc1, esc2, EscConfig, Objective};
use qsa::lqr::{
    pia_loop, policy_evaluation, q_true, regressors, simulate_closed_loop,
    simulate_closed_loop_noise, EvalOptions, EvaluationMode, LinearPolicy, LtiModel, QuadCost,
    QuadraticBasis,
};
use qsa::qmc::{centered_noise_integral, histogram_experiment, qmc_trajectory, HistogramConfig,
    Integrand};
use qsa::rng::derive_seed;
use qsa::sim::{assumption_report, fmt_f64, GainSchedule, Trajectory};
use qsa::signals::ProbingSignal;

use crate::config::*;
use crate::manifest::Manifest;
use crate::CliError;

pub struct RunContext {
    pub out_dir: PathBuf,
    pub seed: u64,
    pub manifest: Manifest,
    started: Instant,
}

impl RunContext {
    pub fn new(out_dir: PathBuf, seed: u64, manifest: Manifest) -> Result<Self, CliError> {
        fs::create_dir_all(&out_dir)
            .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", out_dir.display())))?;
        Ok(Self { out_dir, seed, manifest, started: Instant::now() })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn write_trajectory(&mut self, name: &str, traj: &Trajectory) -> Result<(), CliError> {
        let path = self.path(name);
        let file = File::create(&path).map_err(CliError::io)?;
        traj.write_csv(BufWriter::new(file)).map_err(CliError::io)?;
        self.manifest.record(&path, Some(traj.len())).map_err(CliError::io)?;
        Ok(())
    }

    fn write_csv_rows(
        &mut self,
        name: &str,
        header: &str,
        rows: &[Vec<String>],
    ) -> Result<(), CliError> {
        let path = self.path(name);
        let file = File::create(&path).map_err(CliError::io)?;
        let mut w = BufWriter::new(file);
        writeln!(w, "{header}").map_err(CliError::io)?;
        for row in rows {
            writeln!(w, "{}", row.join(",")).map_err(CliError::io)?;
        }
        w.flush().map_err(CliError::io)?;
        self.manifest.record(&path, Some(rows.len())).map_err(CliError::io)?;
        Ok(())
    }

    fn write_json(&mut self, name: &str, value: &serde_json::Value) -> Result<(), CliError> {
        let path = self.path(name);
        fs::write(&path, serde_json::to_string_pretty(value).expect("json serializes"))
            .map_err(CliError::io)?;
        self.manifest.record(&path, None).map_err(CliError::io)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<PathBuf, CliError> {
        self.manifest.wall_ms = self.started.elapsed().as_millis();
        self.manifest.write(&self.out_dir).map_err(CliError::io)
    }
}

fn gain_tag(g: f64) -> String {
    format!("{g}").replace('.', "p")
}

pub fn run_qmc_paths(ctx: &mut RunContext, p: &QmcPathsParams) -> Result<(), CliError> {
    validate_positive(p.dt, "dt")?;
    validate_positive(p.horizon, "horizon")?;
    let y = Integrand::oscillatory_benchmark();
    for &g in &p.gains {
        validate_positive(g, "gain")?;
        let traj = qmc_trajectory(&y, g, p.theta0, p.horizon, p.dt, p.stride)
            .map_err(CliError::runtime)?;
        ctx.write_trajectory(&format!("paths_g{}.csv", gain_tag(g)), &traj)?;
    }
    Ok(())
}

pub fn run_qmc_histogram(ctx: &mut RunContext, p: &QmcHistogramParams) -> Result<(), CliError> {
    validate_positive(p.dt, "dt")?;
    validate_positive(p.horizon, "horizon")?;
    if p.n_runs < 2 {
        return Err(CliError::Config("n_runs must be at least 2".into()));
    }
    let y = Integrand::oscillatory_benchmark();
    let cfg = HistogramConfig {
        gains: p.gains.clone(),
        n_runs: p.n_runs,
        horizon: p.horizon,
        dt: p.dt,
        seed: ctx.seed,
        init_variance: p.init_variance,
    };
    let (rows, records) = histogram_experiment(&y, &cfg).map_err(CliError::runtime)?;

    let labels = cfg.labels();
    let mut header = String::from("run,seed,theta0");
    for l in &labels {
        header.push(',');
        header.push_str(l);
    }
    let run_rows: Vec<Vec<String>> = records
        .iter()
        .map(|r| {
            let mut row = vec![r.run_index.to_string(), r.seed.to_string(), fmt_f64(r.theta0)];
            row.extend(r.estimates.iter().map(|v| fmt_f64(*v)));
            row
        })
        .collect();
    ctx.write_csv_rows("histogram_runs.csv", &header, &run_rows)?;

    let summary_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.label.clone(),
                r.gain.map(fmt_f64).unwrap_or_default(),
                fmt_f64(r.mean),
                fmt_f64(r.variance),
                r.run_count.to_string(),
                fmt_f64(r.horizon),
            ]
        })
        .collect();
    ctx.write_csv_rows(
        "histogram_summary.csv",
        "label,gain,mean,variance,run_count,horizon",
        &summary_rows,
    )?;
    Ok(())
}

pub fn run_coupling_sweep(ctx: &mut RunContext, p: &CouplingSweepParams) -> Result<(), CliError> {
    validate_positive(p.dt, "dt")?;
    validate_positive(p.horizon, "horizon")?;
    let window = p.window.unwrap_or((0.95 * p.horizon, p.horizon));
    if !(window.0 < window.1 && window.1 <= p.horizon) {
        return Err(CliError::Config(format!("bad window {window:?}")));
    }
    let y = Integrand::oscillatory_benchmark();
    let theta_star = y.grid_mean(p.dt);
    let reference = centered_noise_integral(&y, theta_star, p.dt, p.horizon);

    for &g in &p.gains {
        validate_positive(g, "gain")?;
        let traj =
            qmc_trajectory(&y, g, p.theta0, p.horizon, p.dt, 1).map_err(CliError::runtime)?;
        let nu = scaled_error_series(&traj, &DVector::from_element(1, theta_star));
        // the noise of the error model is g·(y − θ*), so its integral is the
        // g-scaled reference
        let mut scaled_ref = Trajectory::with_capacity(1, reference.len());
        for k in 0..reference.len() {
            scaled_ref.push(reference.times[k], &[g * reference.state(k)[0]]);
        }
        let a = DMatrix::from_row_slice(1, 1, &[-g]);
        let fit_window = (3.0f64.min(0.3 * p.horizon), p.horizon);
        let report = coupling_check(&nu, &scaled_ref, &a, window, fit_window)
            .map_err(CliError::runtime)?;
        let tag = gain_tag(g);
        ctx.write_trajectory(&format!("nu_g{tag}.csv"), &nu)?;

        let dev_rows: Vec<Vec<String>> = (0..nu.len())
            .map(|k| {
                vec![
                    fmt_f64(nu.times[k]),
                    fmt_f64((nu.state(k)[0] - scaled_ref.state(k)[0]).abs()),
                ]
            })
            .collect();
        ctx.write_csv_rows(&format!("deviation_g{tag}.csv"), "t,deviation", &dev_rows)?;
        ctx.write_json(
            &format!("coupling_report_g{tag}.json"),
            &serde_json::to_value(&report).expect("report serializes"),
        )?;
    }
    Ok(())
}

pub fn run_gradfree(ctx: &mut RunContext, p: &GradFreeParams) -> Result<(), CliError> {
    validate_positive(p.dt, "dt")?;
    validate_positive(p.horizon, "horizon")?;
    validate_positive(p.epsilon, "epsilon")?;
    let dim = p.theta0.len();
    if dim == 0 {
        return Err(CliError::Config("theta0 must be nonempty".into()));
    }
    let (obj, minimizer): (Objective, Option<DVector<f64>>) = match p.objective {
        ObjectiveKind::Quadratic => {
            let h = DMatrix::from_fn(dim, dim, |i, j| if i == j { 1.0 + i as f64 } else { 0.25 });
            let h = (&h + h.transpose()) * 0.5;
            let m = DVector::from_fn(dim, |i, _| if i % 2 == 0 { 1.0 } else { -1.0 });
            (Objective::quadratic(h, m.clone()), Some(m))
        }
        ObjectiveKind::Rosenbrock => {
            if dim != 2 {
                return Err(CliError::Config("rosenbrock needs dim 2".into()));
            }
            (Objective::rosenbrock(), Some(DVector::from_vec(vec![1.0, 1.0])))
        }
    };
    let probe = match &p.probe {
        Some(specs) => {
            let probe = probe_from_specs(specs).map_err(CliError::Config)?;
            if probe.dim() != dim {
                return Err(CliError::Config(format!(
                    "probe dim {} != theta0 dim {dim}",
                    probe.dim()
                )));
            }
            probe
        }
        None => ProbingSignal::unit_probe(dim),
    };
    let cfg = EscConfig::new(p.epsilon, GainSchedule::decaying(p.gain), probe);
    let theta0 = DVector::from_vec(p.theta0.clone());
    let traj = match p.variant {
        GradFreeVariant::Esc1 => esc1(&obj, &cfg, &theta0, p.horizon, p.dt),
        GradFreeVariant::Esc2 => esc2(&obj, &cfg, &theta0, p.horizon, p.dt),
    }
    .map_err(CliError::runtime)?;
    ctx.write_trajectory("gradfree_trajectory.csv", &traj)?;

    let final_theta = traj.state_vector(traj.len() - 1);
    let mut summary = json!({
        "objective": obj.name,
        "variant": match p.variant { GradFreeVariant::Esc1 => "esc1", GradFreeVariant::Esc2 => "esc2" },
        "epsilon": p.epsilon,
        "gain": p.gain,
        "final_theta": final_theta.iter().copied().collect::<Vec<f64>>(),
        "final_objective": obj.eval(&final_theta),
    });
    if let Some(m) = minimizer {
        summary["final_error"] = json!((final_theta - m).norm());
    }
    ctx.write_json("gradfree_summary.json", &summary)?;
    Ok(())
}

fn lqr_problem(
    a: &Option<Vec<Vec<f64>>>,
    b: &Option<Vec<Vec<f64>>>,
    m: &Option<Vec<Vec<f64>>>,
    r: &Option<Vec<Vec<f64>>>,
) -> Result<(LtiModel, QuadCost), CliError> {
    let model = match (a, b) {
        (Some(a), Some(b)) => LtiModel::new(
            matrix_from_rows(a).map_err(CliError::Config)?,
            matrix_from_rows(b).map_err(CliError::Config)?,
        )
        .map_err(CliError::config)?,
        (None, None) => LtiModel::friction_integrator(),
        _ => return Err(CliError::Config("provide both a and b, or neither".into())),
    };
    let n = model.state_dim();
    let mm = match m {
        Some(m) => matrix_from_rows(m).map_err(CliError::Config)?,
        None => DMatrix::identity(n, n),
    };
    let rr = match r {
        Some(r) => matrix_from_rows(r).map_err(CliError::Config)?,
        None => DMatrix::from_element(model.input_dim(), model.input_dim(), 10.0),
    };
    let cost = QuadCost::new(mm, rr).map_err(CliError::config)?;
    Ok((model, cost))
}

pub fn run_lqr_eval(ctx: &mut RunContext, p: &LqrEvalParams) -> Result<(), CliError> {
    validate_positive(p.dt, "dt")?;
    validate_positive(p.horizon, "horizon")?;
    if !(p.t1 > 0.0 && p.t1 < p.horizon) {
        return Err(CliError::Config("need 0 < t1 < horizon".into()));
    }
    let (model, cost) = lqr_problem(&p.a, &p.b, &p.m, &p.r)?;
    let policy = LinearPolicy::new(matrix_from_rows(&p.k).map_err(CliError::Config)?);
    let k0 = LinearPolicy::new(matrix_from_rows(&p.k0).map_err(CliError::Config)?);
    let basis = QuadraticBasis::new(model.state_dim(), model.input_dim());
    let probe_seed = derive_seed(ctx.seed, "lqr-eval/probe", 0);
    let probe = ProbingSignal::random_scalar_probe(p.probe_count, p.probe_max_freq, probe_seed);
    if model.input_dim() != 1 {
        return Err(CliError::Config("scalar-input plants only in this runner".into()));
    }

    let x0 = DVector::zeros(model.state_dim());
    let traj = simulate_closed_loop(&model, &k0, &probe, &x0, p.dt, p.horizon)
        .map_err(CliError::runtime)?;
    let samples = regressors(&traj, &policy, &basis, &cost).map_err(CliError::runtime)?;
    let opts = EvalOptions::new(p.t1, p.gain);
    let outcome = policy_evaluation(&samples, &opts).map_err(CliError::runtime)?;
    ctx.write_trajectory("theta_trace.csv", &outcome.theta_trace)?;

    let (_, exact) = q_true(&model, &cost, &policy, &basis).map_err(CliError::runtime)?;
    let rel = (&outcome.param.theta - &exact.theta).norm() / exact.theta.norm();
    let mut result = json!({
        "theta": outcome.param.theta.iter().copied().collect::<Vec<f64>>(),
        "theta_exact": exact.theta.iter().copied().collect::<Vec<f64>>(),
        "relative_error": rel,
        "gram_condition": outcome.gram.condition,
        "mean_square_bellman_error": outcome.mean_square_error,
        "probe_seed": probe_seed,
    });

    if p.baseline {
        let power: f64 =
            probe.terms().iter().map(|t| t.direction.norm_squared() / 2.0).sum();
        let noise_seed = derive_seed(ctx.seed, "lqr-eval/noise", 0);
        let noisy = simulate_closed_loop_noise(&model, &k0, power, noise_seed, &x0, p.dt, p.horizon)
            .map_err(CliError::runtime)?;
        let nsamples = regressors(&noisy, &policy, &basis, &cost).map_err(CliError::runtime)?;
        match policy_evaluation(&nsamples, &opts) {
            Ok(sa) => {
                let sa_rel = (&sa.param.theta - &exact.theta).norm() / exact.theta.norm();
                result["baseline_relative_error"] = json!(sa_rel);
                ctx.write_trajectory("theta_trace_baseline.csv", &sa.theta_trace)?;
            }
            Err(e) => {
                result["baseline_relative_error"] = json!(null);
                result["baseline_failure"] = json!(e.to_string());
            }
        }
    }
    ctx.write_json("eval_result.json", &result)?;
    Ok(())
}

pub fn run_lqr_pia(ctx: &mut RunContext, p: &LqrPiaParams) -> Result<(), CliError> {
    validate_positive(p.dt, "dt")?;
    validate_positive(p.horizon, "horizon")?;
    if p.rounds == 0 {
        return Err(CliError::Config("rounds must be positive".into()));
    }
    let (model, cost) = lqr_problem(&None, &None, &None, &None)?;
    let k_init = LinearPolicy::new(matrix_from_rows(&p.k_init).map_err(CliError::Config)?);

    let mode = match p.mode {
        PiaMode::Exact => EvaluationMode::Exact,
        PiaMode::Regression => EvaluationMode::Regression(EvalOptions::new(p.t1, p.gain)),
    };
    let traj = match p.mode {
        PiaMode::Exact => None,
        PiaMode::Regression => {
            let probe_seed = derive_seed(ctx.seed, "lqr-pia/probe", 0);
            let probe =
                ProbingSignal::random_scalar_probe(p.probe_count, p.probe_max_freq, probe_seed);
            Some(
                simulate_closed_loop(
                    &model,
                    &k_init,
                    &probe,
                    &DVector::zeros(model.state_dim()),
                    p.dt,
                    p.horizon,
                )
                .map_err(CliError::runtime)?,
            )
        }
    };
    let rounds = pia_loop(&model, &cost, &k_init, traj.as_ref(), p.rounds, &mode)
        .map_err(CliError::runtime)?;

    let n = model.state_dim();
    let mut header = String::from("round");
    for i in 0..n {
        header.push_str(&format!(",k{}", i + 1));
    }
    header.push_str(",relative_distance");
    let rows: Vec<Vec<String>> = rounds
        .iter()
        .map(|r| {
            let mut row = vec![r.round.to_string()];
            row.extend(r.gains.iter().map(|v| fmt_f64(*v)));
            row.push(fmt_f64(r.relative_distance));
            row
        })
        .collect();
    ctx.write_csv_rows("pia_rounds.csv", &header, &rows)?;
    Ok(())
}

pub fn run_assumption_check(
    ctx: &mut RunContext,
    p: &AssumptionCheckParams,
) -> Result<(), CliError> {
    let a = match &p.a {
        Some(rows) => Some(matrix_from_rows(rows).map_err(CliError::Config)?),
        None => None,
    };
    let report = assumption_report(a.as_ref(), None).map_err(CliError::runtime)?;
    ctx.write_json(
        "assumption_report.json",
        &serde_json::to_value(&report).expect("report serializes"),
    )?;
    Ok(())
}

fn validate_positive(x: f64, name: &str) -> Result<(), CliError> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(CliError::Config(format!("{name} must be positive and finite, got {x}")))
    }
}

/// Dispatch on the config kind.
pub fn execute(ctx: &mut RunContext, kind: &str, params: &serde_json::Value) -> Result<(), CliError> {
    macro_rules! parsed {
        ($ty:ty) => {
            serde_json::from_value::<$ty>(params.clone())
                .map_err(|e| CliError::Config(format!("bad params for {kind}: {e}")))?
        };
    }
    match kind {
        "qmc-paths" => run_qmc_paths(ctx, &parsed!(QmcPathsParams)),
        "qmc-histogram" => run_qmc_histogram(ctx, &parsed!(QmcHistogramParams)),
        "coupling-sweep" => run_coupling_sweep(ctx, &parsed!(CouplingSweepParams)),
        "gradfree" => run_gradfree(ctx, &parsed!(GradFreeParams)),
        "lqr-eval" => run_lqr_eval(ctx, &parsed!(LqrEvalParams)),
        "lqr-pia" => run_lqr_pia(ctx, &parsed!(LqrPiaParams)),
        "assumption-check" => run_assumption_check(ctx, &parsed!(AssumptionCheckParams)),
        other => Err(CliError::Config(format!("unknown experiment kind '{other}'"))),
    }
}
