//! Scalar quadrature helpers: adaptive Simpson for oracle values and
//! trapezoid rules on uniform grids for time averages.

/// Adaptive Simpson quadrature with absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = simpson(a, b, fa, fm, fb);
    recurse(f, a, b, fa, fm, fb, whole, tol, 50)
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn recurse<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        recurse(f, a, m, fa, flm, fm, left, tol * 0.5, depth - 1)
            + recurse(f, m, b, fm, frm, fb, right, tol * 0.5, depth - 1)
    }
}

/// Trapezoid rule over uniformly sampled values.
pub fn trapezoid(values: &[f64], dt: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => {
            let inner: f64 = values[1..n - 1].iter().sum();
            dt * (0.5 * values[0] + inner + 0.5 * values[n - 1])
        }
    }
}

/// Cumulative left-endpoint Riemann sums: out[k] = dt * Σ_{j<k} values[j].
///
/// Matches the forward-Euler view of an integral, so trajectory drifts and
/// reference integrals built from the same grid cancel consistently.
pub fn cumulative_left_sum(values: &[f64], dt: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len() + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for v in values {
        acc += v * dt;
        out.push(acc);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn simpson_polynomial_exact() {
        let v = adaptive_simpson(&|x: f64| x * x * x, 0.0, 2.0, 1e-12);
        assert_relative_eq!(v, 4.0, epsilon = 1e-12);
    }

    #[test]
    fn simpson_oscillatory_oracle() {
        // ∫0..1 e^{4t} sin(100 t) dt, closed form via the standard antiderivative
        let f = |t: f64| (4.0 * t).exp() * (100.0 * t).sin();
        let closed = ((4.0f64).exp() * (4.0 * 100.0f64.sin() - 100.0 * 100.0f64.cos()) + 100.0)
            / (16.0 + 10_000.0);
        let v = adaptive_simpson(&f, 0.0, 1.0, 1e-10);
        assert_relative_eq!(v, closed, epsilon = 1e-9);
        // frozen reference value
        assert_relative_eq!(v, -0.47111501852408455, epsilon = 1e-9);
    }

    #[test]
    fn trapezoid_linear_exact() {
        let dt = 0.1;
        let vals: Vec<f64> = (0..=10).map(|k| 3.0 * (k as f64 * dt)).collect();
        assert_relative_eq!(trapezoid(&vals, dt), 1.5, epsilon = 1e-12);
    }

    #[test]
    fn left_sum_cumulative() {
        let vals = [1.0, 2.0, 3.0];
        let c = cumulative_left_sum(&vals, 0.5);
        assert_eq!(c, vec![0.0, 0.5, 1.5, 3.0]);
    }
}
