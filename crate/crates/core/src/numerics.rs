//! Quadrature, polynomial roots and bracketing used by the theory code.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Bisection for a sign change of `f` on `[lo, hi]`, to absolute width `tol`.
pub fn bisect(mut f: impl FnMut(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> Result<f64> {
    let (flo, fhi) = (f(lo), f(hi));
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() || flo.is_nan() || fhi.is_nan() {
        return Err(Error::Bracket("no sign change on the interval"));
    }
    let neg_at_lo = flo < 0.0;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if (fm < 0.0) == neg_at_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Evaluates a polynomial (highest degree first) and its derivative.
fn horner(coeffs: &[Complex64], z: Complex64) -> (Complex64, Complex64) {
    let mut p = Complex64::new(0.0, 0.0);
    let mut dp = Complex64::new(0.0, 0.0);
    for &c in coeffs {
        dp = dp * z + p;
        p = p * z + c;
    }
    (p, dp)
}

/// All complex roots of a polynomial given highest degree first.
///
/// Exactly zero leading coefficients are dropped, so the number of roots is
/// the true degree. Uses Aberth–Ehrlich iteration followed by Newton polish.
pub fn polynomial_roots(coeffs: &[Complex64]) -> Result<Vec<Complex64>> {
    let start = coeffs
        .iter()
        .position(|c| c.norm() != 0.0)
        .ok_or(Error::Bracket("zero polynomial"))?;
    let c = &coeffs[start..];
    let n = c.len() - 1;
    if n == 0 {
        return Ok(Vec::new());
    }
    if n == 1 {
        return Ok(vec![-c[1] / c[0]]);
    }
    let lead = c[0];
    let monic: Vec<Complex64> = c.iter().map(|x| x / lead).collect();
    let radius = monic[1..]
        .iter()
        .enumerate()
        .map(|(k, x)| x.norm().powf(1.0 / (k + 1) as f64))
        .fold(0.0, f64::max)
        .max(1e-300);
    let mut z: Vec<Complex64> = (0..n)
        .map(|k| Complex64::from_polar(radius, 2.0 * std::f64::consts::PI * k as f64 / n as f64 + 0.4))
        .collect();
    for _ in 0..500 {
        let mut max_step: f64 = 0.0;
        for k in 0..n {
            let (p, dp) = horner(&monic, z[k]);
            if p.norm() == 0.0 {
                continue;
            }
            let ratio = p / dp;
            let mut repulsion = Complex64::new(0.0, 0.0);
            for j in 0..n {
                if j != k {
                    repulsion += 1.0 / (z[k] - z[j]);
                }
            }
            let step = ratio / (1.0 - ratio * repulsion);
            if step.is_finite() {
                z[k] -= step;
                max_step = max_step.max(step.norm() / (1.0 + z[k].norm()));
            }
        }
        if max_step < 1e-16 {
            break;
        }
    }
    for root in z.iter_mut() {
        for _ in 0..2 {
            let (p, dp) = horner(&monic, *root);
            let step = p / dp;
            if step.is_finite() {
                *root -= step;
            }
        }
    }
    if z.iter().any(|r| !r.is_finite()) {
        return Err(Error::NonFinite("polynomial roots"));
    }
    Ok(z)
}

/// Adaptive tanh-sinh quadrature of `f` on `[lo, hi]`.
///
/// Integrable endpoint singularities are allowed; `f` is never evaluated at
/// the endpoints themselves. Levels are refined until two successive
/// estimates agree to `tol` (absolute plus relative).
pub fn tanh_sinh(
    mut f: impl FnMut(f64) -> Result<f64>,
    lo: f64,
    hi: f64,
    tol: f64,
) -> Result<f64> {
    use std::f64::consts::FRAC_PI_2;
    if hi <= lo {
        return Ok(0.0);
    }
    let half = 0.5 * (hi - lo);
    const T_MAX: f64 = 4.5;
    let mut h = 1.0;
    let node = |t: f64| {
        let u = FRAC_PI_2 * t.sinh();
        let w = FRAC_PI_2 * t.cosh() / u.cosh().powi(2);
        // Distance to the nearer endpoint, computed without cancellation.
        let gap = half * 2.0 / (1.0 + (2.0 * u.abs()).exp());
        (u.signum(), gap, w)
    };
    let eval = |t: f64, f: &mut dyn FnMut(f64) -> Result<f64>| -> Result<f64> {
        let (sign, gap, w) = node(t);
        if gap <= 0.0 || w == 0.0 {
            return Ok(0.0);
        }
        let x = if sign >= 0.0 { hi - gap } else { lo + gap };
        if x <= lo || x >= hi {
            return Ok(0.0);
        }
        Ok(f(x)? * w)
    };
    let mut sum = eval(0.0, &mut f)?;
    let mut k = 1;
    while (k as f64) * h <= T_MAX {
        let t = k as f64 * h;
        sum += eval(t, &mut f)? + eval(-t, &mut f)?;
        k += 1;
    }
    let mut estimate = sum * h * half;
    for _level in 0..12 {
        h *= 0.5;
        let mut k = 1;
        while (k as f64) * h <= T_MAX {
            let t = k as f64 * h;
            sum += eval(t, &mut f)? + eval(-t, &mut f)?;
            k += 2;
        }
        let next = sum * h * half;
        if (next - estimate).abs() <= tol * (1.0 + next.abs()) {
            return Ok(next);
        }
        estimate = next;
    }
    Ok(estimate)
}
