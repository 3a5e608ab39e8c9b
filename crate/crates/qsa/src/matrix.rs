//! Dense small-matrix kernels: eigenvalues, matrix exponential, a Lyapunov
//! solver via Kronecker vectorization, and a Kleinman Riccati iteration.
//!
//! Everything here targets desk-scale matrices (d ≲ 12); eigenvalues and the
//! exponential delegate to nalgebra's QR/Schur and Padé scaling-and-squaring.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;

use crate::error::{Error, Result};

const EIG_MAX_ITER: usize = 10_000;

/// Eigenvalues of a real square matrix plus the largest real part.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub eigenvalues: Vec<Complex<f64>>,
    pub max_real_part: f64,
}

impl Spectrum {
    /// Characteristic-polynomial residual |det(m - λI)| for each eigenvalue.
    pub fn residuals(&self, m: &DMatrix<f64>) -> Vec<f64> {
        let n = m.nrows();
        let mc = m.map(|x| Complex::new(x, 0.0));
        self.eigenvalues
            .iter()
            .map(|lambda| {
                let shifted = &mc - DMatrix::<Complex<f64>>::identity(n, n) * *lambda;
                shifted.lu().determinant().norm()
            })
            .collect()
    }
}

fn check_square_finite(m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != m.ncols() || m.nrows() == 0 {
        return Err(Error::Dimension(format!(
            "expected a nonempty square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::Invalid("matrix has non-finite entries".into()));
    }
    Ok(())
}

/// Eigenvalues via the real Schur decomposition (QR iteration).
pub fn eigenvalues(m: &DMatrix<f64>) -> Result<Spectrum> {
    check_square_finite(m)?;
    let schur = nalgebra::linalg::Schur::try_new(m.clone(), f64::EPSILON, EIG_MAX_ITER)
        .ok_or(Error::EigenNonConvergence { max_iter: EIG_MAX_ITER })?;
    let eigs = schur.complex_eigenvalues();
    let eigenvalues: Vec<Complex<f64>> = eigs.iter().map(|c| Complex::new(c.re, c.im)).collect();
    let max_real_part = eigenvalues
        .iter()
        .map(|c| c.re)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(Spectrum { eigenvalues, max_real_part })
}

/// True iff every eigenvalue satisfies Re(λ) < -margin.
///
/// `margin = 0` is the plain Hurwitz test; `margin = 1` tests the stronger
/// condition Re(λ) < -1 required for the 1/t coupling rate.
pub fn is_hurwitz(m: &DMatrix<f64>, margin: f64) -> Result<(bool, Spectrum)> {
    let spectrum = eigenvalues(m)?;
    Ok((spectrum.max_real_part < -margin, spectrum))
}

/// Matrix exponential (Padé approximation with scaling and squaring).
pub fn matrix_exp(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.exp()
}

/// Solve aᵀP + Pa + q = 0 for symmetric positive q and Hurwitz a.
///
/// The d²-unknown linear system (I ⊗ aᵀ + aᵀ ⊗ I) vec(P) = -vec(q) is formed
/// explicitly and solved by LU; the result is symmetrized.
pub fn solve_lyapunov(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_square_finite(a)?;
    check_square_finite(q)?;
    let n = a.nrows();
    if q.nrows() != n {
        return Err(Error::Dimension(format!(
            "a is {n}x{n} but q is {}x{}",
            q.nrows(),
            q.ncols()
        )));
    }
    if (q - q.transpose()).amax() > 1e-9 * (1.0 + q.amax()) {
        return Err(Error::Invalid("q must be symmetric".into()));
    }
    let (hurwitz, spectrum) = is_hurwitz(a, 0.0)?;
    if !hurwitz {
        let worst = spectrum
            .eigenvalues
            .iter()
            .cloned()
            .max_by(|x, y| x.re.total_cmp(&y.re))
            .unwrap();
        return Err(Error::NotHurwitz { re: worst.re, im: worst.im, margin: 0.0 });
    }

    let eye = DMatrix::<f64>::identity(n, n);
    let at = a.transpose();
    let system = eye.kronecker(&at) + at.kronecker(&eye);
    let rhs = DVector::from_column_slice(q.as_slice()); // column-major vec(q)
    let sol = system
        .lu()
        .solve(&(-rhs))
        .ok_or_else(|| Error::NoConvergence("singular Lyapunov operator".into()))?;
    let p = DMatrix::from_column_slice(n, n, sol.as_slice());
    let p = (&p + p.transpose()) * 0.5;

    let residual = (a.transpose() * &p + &p * a + q).norm();
    if residual > 1e-9 * (q.norm() + p.norm()).max(1.0) {
        return Err(Error::NoConvergence(format!(
            "Lyapunov residual {residual:.3e} too large"
        )));
    }
    Ok(p)
}

/// Solution of the continuous algebraic Riccati equation via Kleinman iteration.
#[derive(Debug, Clone)]
pub struct RiccatiSolution {
    pub p: DMatrix<f64>,
    /// Optimal feedback gain, u = K x.
    pub k: DMatrix<f64>,
    pub iterations: usize,
    /// ‖K_{n+1} - K_n‖ at termination.
    pub gain_delta: f64,
}

/// Kleinman's Newton iteration for aᵀP + Pa - P b r⁻¹ bᵀ P + m = 0.
///
/// Alternates a closed-loop Lyapunov solve with the gain update
/// k ← -r⁻¹ bᵀ P until the gain stops moving; `k0` must be stabilizing.
pub fn riccati_oracle(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    m: &DMatrix<f64>,
    r: &DMatrix<f64>,
    k0: &DMatrix<f64>,
) -> Result<RiccatiSolution> {
    check_square_finite(a)?;
    let n = a.nrows();
    let nin = b.ncols();
    if b.nrows() != n || k0.nrows() != nin || k0.ncols() != n || m.nrows() != n || r.nrows() != nin
    {
        return Err(Error::Dimension("inconsistent Riccati dimensions".into()));
    }
    let r_inv = r
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Invalid("r is singular".into()))?;

    let mut k = k0.clone();
    let max_iter = 200;
    for it in 1..=max_iter {
        let a_cl = a + b * &k;
        let q = m + k.transpose() * r * &k;
        let p = solve_lyapunov(&a_cl, &q)?;
        let k_next = -(&r_inv * b.transpose() * &p);
        let delta = (&k_next - &k).norm();
        k = k_next;
        if delta <= 1e-10 {
            let riccati_res = (a.transpose() * &p + &p * a
                - &p * b * &r_inv * b.transpose() * &p
                + m)
                .norm();
            if riccati_res > 1e-8 * (1.0 + p.norm()) {
                return Err(Error::NoConvergence(format!(
                    "Riccati residual {riccati_res:.3e} too large after convergence"
                )));
            }
            return Ok(RiccatiSolution { p, k, iterations: it, gain_delta: delta });
        }
    }
    Err(Error::NoConvergence(format!(
        "Kleinman iteration did not converge in {max_iter} steps"
    )))
}

/// Rank of the controllability matrix [b, ab, a²b, ...] by SVD threshold.
pub fn controllability_rank(a: &DMatrix<f64>, b: &DMatrix<f64>) -> usize {
    let n = a.nrows();
    let m = b.ncols();
    let mut ctrb = DMatrix::zeros(n, n * m);
    let mut block = b.clone();
    for i in 0..n {
        ctrb.view_mut((0, i * m), (n, m)).copy_from(&block);
        block = a * &block;
    }
    let svals = ctrb.singular_values();
    let tol = svals[0] * (n.max(n * m) as f64) * f64::EPSILON;
    svals.iter().filter(|&&s| s > tol).count()
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    m.singular_values()[0]
}
