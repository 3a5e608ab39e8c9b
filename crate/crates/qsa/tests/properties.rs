//! Property tests for the numeric kernels.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use qsa::matrix::{eigenvalues, matrix_exp, solve_lyapunov};
use qsa::signals::{ProbingSignal, SinusoidTerm};

fn small_matrix(dim: usize, bound: f64) -> impl Strategy<Value = DMatrix<f64>> {
    proptest::collection::vec(-bound..bound, dim * dim)
        .prop_map(move |v| DMatrix::from_row_slice(dim, dim, &v))
}

fn probe_strategy() -> impl Strategy<Value = ProbingSignal> {
    proptest::collection::vec(
        (
            proptest::collection::vec(-2.0f64..2.0, 2),
            0.0f64..std::f64::consts::TAU,
            0.3f64..8.0,
        ),
        1..4,
    )
    .prop_map(|terms| {
        ProbingSignal::new(
            terms
                .into_iter()
                .map(|(dir, phase, frequency)| SinusoidTerm {
                    direction: DVector::from_vec(dir),
                    phase,
                    frequency,
                })
                .collect(),
        )
        .unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// exp((s+t)m) = exp(sm)·exp(tm) on random 4x4 matrices.
    #[test]
    fn exponential_group_law(
        m in small_matrix(4, 1.5),
        s in -2.0f64..2.0,
        t in -2.0f64..2.0,
    ) {
        let lhs = matrix_exp(&(&m * (s + t)));
        let rhs = matrix_exp(&(&m * s)) * matrix_exp(&(&m * t));
        let scale = lhs.norm().max(1.0);
        prop_assert!((lhs - rhs).norm() <= 1e-9 * scale);
    }

    /// Every reported eigenvalue annihilates the characteristic polynomial.
    #[test]
    fn eigenvalue_residuals_small(m in small_matrix(4, 3.0)) {
        let spectrum = eigenvalues(&m).unwrap();
        let scale = (1.0 + m.norm()).powi(4);
        for r in spectrum.residuals(&m) {
            prop_assert!(r <= 1e-7 * scale, "residual {r} scale {scale}");
        }
        // conjugate-pair symmetry: the multiset of imaginary parts is
        // symmetric about zero
        let mut ims: Vec<f64> = spectrum.eigenvalues.iter().map(|e| e.im).collect();
        let sum_im: f64 = ims.iter().sum();
        prop_assert!(sum_im.abs() < 1e-8 * (1.0 + m.norm()));
        ims.sort_by(f64::total_cmp);
        for (a, b) in ims.iter().zip(ims.iter().rev()) {
            prop_assert!((a + b).abs() < 1e-7 * (1.0 + m.norm()));
        }
    }

    /// Lyapunov solutions are symmetric, residual-small, positive definite
    /// for q = I, and reproducible.
    #[test]
    fn lyapunov_contract(m in small_matrix(3, 1.0), shift in 0.5f64..3.0) {
        // shift the diagonal to force a Hurwitz matrix
        let a = &m - DMatrix::<f64>::identity(3, 3) * (m.norm() + shift);
        let q = DMatrix::<f64>::identity(3, 3);
        let p = solve_lyapunov(&a, &q).unwrap();
        prop_assert!((&p - p.transpose()).amax() <= 1e-10 * (1.0 + p.amax()));
        let residual = (a.transpose() * &p + &p * &a + &q).norm();
        prop_assert!(residual <= 1e-9 * (q.norm() + p.norm()));
        let eigs = eigenvalues(&p).unwrap();
        prop_assert!(eigs.eigenvalues.iter().all(|e| e.re > 0.0));
        // re-solving returns the same matrix
        let p2 = solve_lyapunov(&a, &q).unwrap();
        prop_assert!((&p - &p2).amax() <= 1e-9 * (1.0 + p.amax()));
    }

    /// d/dt of the closed-form integrals returns the lower-order evaluation.
    #[test]
    fn signal_integral_derivatives(probe in probe_strategy(), t in 0.0f64..50.0) {
        let h = 1e-6;
        let d1 = (probe.integral(t + h) - probe.integral(t - h)) / (2.0 * h);
        prop_assert!((d1 - probe.eval(t)).norm() < 1e-6 * (1.0 + probe.amplitude_bound()));
        let d2 = (probe.double_integral(t + h) - probe.double_integral(t - h)) / (2.0 * h);
        prop_assert!((d2 - probe.integral(t)).norm() < 1e-6 * (1.0 + probe.amplitude_bound()));
    }

    /// Uniform bounds on the signal and its first integral.
    #[test]
    fn signal_bounds(probe in probe_strategy(), t in 0.0f64..200.0) {
        let amp = probe.amplitude_bound();
        prop_assert!(probe.eval(t).norm() <= amp * (1.0 + 1e-12));
        let int_bound = 2.0 * amp / probe.min_frequency();
        prop_assert!(probe.integral(t).norm() <= int_bound * (1.0 + 1e-12));
    }

    /// The sawtooth stays in [0, period).
    #[test]
    fn sawtooth_range(t in 0.0f64..1e6, period in 0.1f64..10.0) {
        let s = qsa::signals::SawtoothSignal { period };
        let v = s.eval(t);
        prop_assert!((0.0..period).contains(&v));
    }

    /// The simulator is bit-deterministic.
    #[test]
    fn simulate_deterministic(gain in 0.5f64..3.0, theta0 in -5.0f64..5.0) {
        use qsa::sim::{simulate, FnField, GainSchedule, SimOptions};
        let field = FnField::new(1, |th: &DVector<f64>, t: f64, out: &mut DVector<f64>| {
            out[0] = -th[0] + (3.7 * t).sin();
        });
        let opts = SimOptions::new(1e-3, 5.0);
        let a = simulate(&field, &GainSchedule::decaying(gain), &DVector::from_element(1, theta0), &opts).unwrap();
        let b = simulate(&field, &GainSchedule::decaying(gain), &DVector::from_element(1, theta0), &opts).unwrap();
        for k in 0..a.len() {
            prop_assert_eq!(a.state(k)[0].to_bits(), b.state(k)[0].to_bits());
        }
    }

    /// Time rescaling round-trips through its inverse.
    #[test]
    fn rescale_roundtrip(gain in 0.2f64..5.0, t in 0.0f64..1e4) {
        use qsa::sim::GainSchedule;
        let g = GainSchedule::decaying(gain);
        let u = g.time_rescale(t);
        let back = g.time_rescale_inv(u);
        prop_assert!((back - t).abs() <= 1e-9 * (1.0 + t));
    }
}
