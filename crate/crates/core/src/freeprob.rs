//! Limiting spectra of the linearized model `a·c₁ + b·c₂c₃` (square case).
//!
//! The symmetrized singular value law of the limit has K-transform
//! `K(w) = 1/w + a²w + b²w/(1 − b²w²)` on `(0, 1/b)`. Its right edge is
//! `min K`, reached at the root of a cubic in `y = b²w²`. The density is
//! recovered by inverting `K(G) = z` (a quartic in `G`) along `z = x + iη`,
//! tracking the branch continuously from `G ≈ 1/z` at large `η`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::models::{theta_coefficients, LinearCoefficients};
use crate::numerics::{bisect, polynomial_roots, tanh_sinh};
use crate::spectra::DiscreteLaw;

/// Imaginary offset at which the Cauchy transform is evaluated.
pub const DENSITY_EPSILON: f64 = 1e-6;

/// Density level separating the support from its complement.
pub const SUPPORT_THRESHOLD: f64 = 1e-5;

const QUAD_TOL: f64 = 1e-12;

fn check_ab(a: f64, b: f64) -> Result<()> {
    if !(a >= 0.0 && a.is_finite()) {
        return Err(invalid("a", a, "must be finite and non-negative"));
    }
    if !(b >= 0.0 && b.is_finite()) {
        return Err(invalid("b", b, "must be finite and non-negative"));
    }
    if a == 0.0 && b == 0.0 {
        return Err(invalid("a", a, "a and b cannot both vanish"));
    }
    Ok(())
}

fn check_domain(w: f64, b: f64) -> Result<()> {
    if !(w > 0.0) || (b > 0.0 && b * w >= 1.0) {
        return Err(invalid("w", w, "must lie in (0, 1/b)"));
    }
    Ok(())
}

/// `K(w) = 1/w + a²w + b²w/(1 − b²w²)`.
pub fn k_transform(w: f64, a: f64, b: f64) -> Result<f64> {
    check_ab(a, b)?;
    check_domain(w, b)?;
    let u = b * b * w * w;
    Ok(1.0 / w + a * a * w + b * b * w / (1.0 - u))
}

/// `K′(w)`.
pub fn k_derivative(w: f64, a: f64, b: f64) -> Result<f64> {
    check_ab(a, b)?;
    check_domain(w, b)?;
    let u = b * b * w * w;
    Ok(-1.0 / (w * w) + a * a + b * b * (1.0 + u) / ((1.0 - u) * (1.0 - u)))
}

/// `K″(w)`; positive on the whole domain.
pub fn k_second_derivative(w: f64, a: f64, b: f64) -> Result<f64> {
    check_ab(a, b)?;
    check_domain(w, b)?;
    let u = b * b * w * w;
    Ok(2.0 / (w * w * w) + 2.0 * b.powi(4) * w * (3.0 + u) / (1.0 - u).powi(3))
}

/// Location and value of the minimum of `K`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeSolution {
    pub a: f64,
    pub b: f64,
    /// Root of the cubic in `(0, 1)`; zero when `b = 0`.
    pub y_star: f64,
    pub w_star: f64,
    /// Right edge of the symmetrized singular value law.
    pub edge: f64,
    /// Right edge of the squared singular value law.
    pub edge_squared: f64,
}

/// Solves `γy³ − 2γy² + (γ+3)y − 1 = 0` on `(0, 1)` with `γ = (a/b)²`.
pub fn solve_edge(a: f64, b: f64) -> Result<EdgeSolution> {
    check_ab(a, b)?;
    if b == 0.0 {
        return Ok(EdgeSolution {
            a,
            b,
            y_star: 0.0,
            w_star: 1.0 / a,
            edge: 2.0 * a,
            edge_squared: 4.0 * a * a,
        });
    }
    let gamma = (a / b).powi(2);
    let cubic = |y: f64| ((gamma * y - 2.0 * gamma) * y + gamma + 3.0) * y - 1.0;
    let mut y = bisect(cubic, 0.0, 1.0, 1e-15)?;
    for _ in 0..2 {
        let dy = (3.0 * gamma * y - 4.0 * gamma) * y + gamma + 3.0;
        let next = y - cubic(y) / dy;
        if next > 0.0 && next < 1.0 {
            y = next;
        }
    }
    assert!(y > 0.0 && y < 1.0, "cubic root must lie in (0, 1)");
    let w_star = y.sqrt() / b;
    let edge = k_transform(w_star, a, b)?;
    Ok(EdgeSolution {
        a,
        b,
        y_star: y,
        w_star,
        edge,
        edge_squared: edge * edge,
    })
}

/// Edge of the limiting law of the linearized model at inverse temperature `beta`.
pub fn solve_edge_for_beta(beta: f64) -> Result<EdgeSolution> {
    let c = theta_coefficients(beta);
    solve_edge(c.a(), c.b())
}

/// The limiting law `ν∞` for fixed `(a, b)`, evaluated through its Cauchy transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BulkLaw {
    a: f64,
    b: f64,
    edge: EdgeSolution,
}

impl BulkLaw {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        let edge = solve_edge(a, b)?;
        Ok(Self { a, b, edge })
    }

    pub fn from_coefficients(c: &LinearCoefficients) -> Result<Self> {
        Self::new(c.a(), c.b())
    }

    pub fn edge(&self) -> &EdgeSolution {
        &self.edge
    }

    fn roots(&self, z: Complex64) -> Result<Vec<Complex64>> {
        let (a2, b2) = (self.a * self.a, self.b * self.b);
        let one = Complex64::new(1.0, 0.0);
        polynomial_roots(&[
            one * (a2 * b2),
            -z * b2,
            -one * a2,
            z,
            -one,
        ])
    }

    /// The root nearest to `guess`, if it is at most half as far as the next one.
    fn nearest(roots: &[Complex64], guess: Complex64) -> Option<Complex64> {
        let mut d: Vec<(f64, Complex64)> = roots.iter().map(|r| ((r - guess).norm(), *r)).collect();
        d.sort_by(|p, q| p.0.total_cmp(&q.0));
        match d.len() {
            0 => None,
            1 => Some(d[0].1),
            _ if d[0].0 <= 0.5 * d[1].0 => Some(d[0].1),
            _ => None,
        }
    }

    /// `G(x + iη)` for each `η` in the decreasing list `etas`.
    fn continue_down(&self, x: f64, etas: &[f64]) -> Result<Vec<Complex64>> {
        let start = 10.0 * (1.0 + x.abs() + self.a + self.b);
        let z0 = Complex64::new(x, start);
        let mut g = Self::nearest(&self.roots(z0)?, 1.0 / z0).ok_or(Error::RootTracking { x })?;
        let mut eta = start;
        let mut factor: f64 = 0.5;
        let mut out = Vec::with_capacity(etas.len());
        for &target in etas {
            while eta > target {
                let next = (eta * factor).max(target);
                let z = Complex64::new(x, next);
                match Self::nearest(&self.roots(z)?, g) {
                    Some(r) => {
                        g = r;
                        eta = next;
                        factor = (factor * factor).max(0.25);
                    }
                    None => {
                        factor = factor.sqrt();
                        if factor > 1.0 - 1e-9 {
                            return Err(Error::RootTracking { x });
                        }
                    }
                }
            }
            if g.im > 1e-9 * g.norm().max(1.0) {
                return Err(Error::RootTracking { x });
            }
            out.push(g);
        }
        Ok(out)
    }

    /// Cauchy transform of the symmetrized law at `z` with `Im z > 0`.
    pub fn cauchy_transform(&self, z: Complex64) -> Result<Complex64> {
        if !(z.im > 0.0) {
            return Err(invalid("z.im", z.im, "must be positive"));
        }
        Ok(self.continue_down(z.re, &[z.im])?[0])
    }

    /// Symmetrized singular value density `ρ_sym(x)`.
    ///
    /// `−Im G/π` is taken at `η = 2ε` and `η = ε` and extrapolated linearly
    /// to `η = 0`; the result is clamped at zero.
    pub fn symmetric_density(&self, x: f64) -> Result<f64> {
        let g = self.continue_down(x, &[2.0 * DENSITY_EPSILON, DENSITY_EPSILON])?;
        let rho2 = -g[0].im / std::f64::consts::PI;
        let rho1 = -g[1].im / std::f64::consts::PI;
        Ok((2.0 * rho1 - rho2).max(0.0))
    }

    /// Density of the squared singular value law, `p(t) = ρ_sym(√t)/√t`.
    pub fn squared_density(&self, t: f64) -> Result<f64> {
        if !(t > 0.0) {
            return Err(invalid("t", t, "must be positive"));
        }
        let x = t.sqrt();
        Ok(self.symmetric_density(x)? / x)
    }

    /// Right end of the support of `ρ_sym`, located by bisection on
    /// `ρ_sym > SUPPORT_THRESHOLD` without reference to the cubic.
    pub fn support_edge(&self) -> Result<f64> {
        let outer = 3.0 * (self.a + self.b) + 1.0;
        let mut err = None;
        let edge = bisect(
            |x| match self.symmetric_density(x) {
                Ok(r) => r - SUPPORT_THRESHOLD,
                Err(e) => {
                    err.get_or_insert(e);
                    f64::NAN
                }
            },
            0.0,
            outer,
            1e-10,
        );
        if let Some(e) = err {
            return Err(e);
        }
        edge
    }

    /// `∫ ρ_sym` over `[−E, E]`.
    pub fn mass(&self) -> Result<f64> {
        Ok(2.0 * tanh_sinh(|x| self.symmetric_density(x), 0.0, self.edge.edge, QUAD_TOL)?)
    }

    /// `∫ p(t) dt` over `[0, E²]`, integrated in the squared variable.
    pub fn squared_mass(&self) -> Result<f64> {
        tanh_sinh(|t| self.squared_density(t), 0.0, self.edge.edge_squared, QUAD_TOL)
    }

    /// `∫ t^q p(t) dt` by quadrature.
    pub fn moment_by_quadrature(&self, q: u32) -> Result<f64> {
        let q = q as i32;
        Ok(2.0
            * tanh_sinh(
                |x| Ok(x.powi(2 * q) * self.symmetric_density(x)?),
                0.0,
                self.edge.edge,
                QUAD_TOL,
            )?)
    }

    /// `P(t ≤ s)` under the squared singular value law.
    pub fn squared_cdf(&self, s: f64) -> Result<f64> {
        if s <= 0.0 {
            return Ok(0.0);
        }
        let x = s.sqrt().min(self.edge.edge);
        Ok((2.0 * tanh_sinh(|x| self.symmetric_density(x), 0.0, x, QUAD_TOL)?).min(1.0))
    }
}

/// Grid on which [`bulk_density`] tabulates `p(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub points: usize,
    /// Upper end of the grid; defaults to `1.1 · edge²`.
    pub t_max: Option<f64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            points: 400,
            t_max: None,
        }
    }
}

/// Tabulated density of the squared singular value law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityCurve {
    pub a: f64,
    pub b: f64,
    /// Cell midpoints `t_i = t_max (i + 1/2) / N`.
    pub t: Vec<f64>,
    pub density: Vec<f64>,
    /// Support `[0, edge²]` located from the density itself.
    pub support: (f64, f64),
}

/// Tabulates `p(t)` on a midpoint grid and locates the support edge.
pub fn bulk_density(a: f64, b: f64, grid: &GridSpec) -> Result<DensityCurve> {
    if grid.points == 0 {
        return Err(Error::InvalidDimension("density grid needs at least one point".into()));
    }
    let law = BulkLaw::new(a, b)?;
    let t_max = grid.t_max.unwrap_or(1.1 * law.edge.edge_squared);
    if !(t_max > 0.0) {
        return Err(invalid("t_max", t_max, "must be positive"));
    }
    let n = grid.points;
    let t: Vec<f64> = (0..n).map(|i| t_max * (i as f64 + 0.5) / n as f64).collect();
    let density = t
        .par_iter()
        .map(|&ti| law.squared_density(ti))
        .collect::<Result<Vec<f64>>>()?;
    let edge = law.support_edge()?;
    Ok(DensityCurve {
        a,
        b,
        t,
        density,
        support: (0.0, edge * edge),
    })
}

/// Moments of `ν∞`; closed forms for `q ≤ 2`, quadrature beyond.
pub fn limit_moments(a: f64, b: f64, q: u32) -> Result<f64> {
    check_ab(a, b)?;
    let (a2, b2) = (a * a, b * b);
    match q {
        0 => Err(invalid("q", 0.0, "moment order must be at least 1")),
        1 => Ok(a2 + b2),
        2 => Ok(2.0 * a2 * a2 + 3.0 * b2 * b2 + 4.0 * a2 * b2),
        _ => BulkLaw::new(a, b)?.moment_by_quadrature(q),
    }
}

/// Square-case Marchenko–Pastur baseline with variance `θ₁`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarchenkoPastur {
    pub theta1: f64,
    pub edge_squared: f64,
    pub m2: f64,
}

pub fn marchenko_pastur_reference(theta1: f64) -> Result<MarchenkoPastur> {
    if !(theta1 > 0.0 && theta1.is_finite()) {
        return Err(invalid("theta1", theta1, "must be positive"));
    }
    Ok(MarchenkoPastur {
        theta1,
        edge_squared: 4.0 * theta1,
        m2: 2.0 * theta1 * theta1,
    })
}

/// Poisson law with mean `lambda`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoissonLaw {
    pub lambda: f64,
}

impl PoissonLaw {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(invalid("lambda", lambda, "must be positive"));
        }
        Ok(Self { lambda })
    }

    pub fn pmf(&self, k: u64) -> f64 {
        let kf = k as f64;
        (-self.lambda + kf * self.lambda.ln() - libm::lgamma(kf + 1.0)).exp()
    }

    /// Least `k` with `CDF(k) ≥ p`.
    pub fn quantile(&self, p: f64) -> u64 {
        let mut k = 0;
        let mut cdf = self.pmf(0);
        while cdf < p {
            k += 1;
            let term = self.pmf(k);
            if term == 0.0 && k as f64 > self.lambda {
                break;
            }
            cdf += term;
        }
        k
    }
}

impl DiscreteLaw for PoissonLaw {
    fn cdf(&self, k: u64) -> f64 {
        (0..=k).map(|j| self.pmf(j)).sum::<f64>().min(1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{E, PI};

    fn golden_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> (f64, f64) {
        let r = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let m1 = hi - r * (hi - lo);
            let m2 = lo + r * (hi - lo);
            if f(m1) < f(m2) {
                hi = m2;
            } else {
                lo = m1;
            }
        }
        let w = 0.5 * (lo + hi);
        (w, f(w))
    }

    #[test]
    fn k_transform_examples() {
        let w = 1.0 / (3f64.sqrt());
        let k = k_transform(w, 0.0, 1.0).unwrap();
        assert!((k - 1.5 * 3f64.sqrt()).abs() < 1e-14);
        let k = k_transform(0.5461, (E - 2.0).sqrt(), 1.0).unwrap();
        assert!((k - 3.0016).abs() < 1e-4);
        assert!(k_transform(0.0, 1.0, 1.0).is_err());
        assert!(k_transform(1.0, 1.0, 1.0).is_err());
        assert!(k_transform(-0.1, 1.0, 0.0).is_err());
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let (a, b) = ((E - 2.0).sqrt(), 1.0);
        for &w in &[0.2, 0.5, 0.8] {
            let h = 1e-6;
            let fd = (k_transform(w + h, a, b).unwrap() - k_transform(w - h, a, b).unwrap()) / (2.0 * h);
            assert!((fd - k_derivative(w, a, b).unwrap()).abs() < 1e-7);
            let fd2 = (k_derivative(w + h, a, b).unwrap() - k_derivative(w - h, a, b).unwrap()) / (2.0 * h);
            assert!((fd2 - k_second_derivative(w, a, b).unwrap()).abs() < 1e-5 * fd2.abs().max(1.0));
        }
    }

    #[test]
    fn convex_on_domain() {
        for &(a, b) in &[(1.0, 1.0), (0.1, 2.0), (3.0, 0.2), (0.0, 1.0)] {
            for i in 1..200 {
                let w = i as f64 / 200.0 / b;
                assert!(k_second_derivative(w, a, b).unwrap() > 0.0);
            }
        }
    }

    #[test]
    fn edge_reductions() {
        let e = solve_edge(1.0, 0.0).unwrap();
        assert_eq!(e.edge, 2.0);
        let e = solve_edge(0.0, 1.0).unwrap();
        assert!((e.y_star - 1.0 / 3.0).abs() < 1e-14);
        assert!((e.edge - 2.598076211353316).abs() < 1e-12);
        assert!(solve_edge(0.0, 0.0).is_err());
    }

    #[test]
    fn edge_at_beta_one() {
        let e = solve_edge_for_beta(1.0).unwrap();
        assert!((e.y_star - 0.2982).abs() < 1e-4);
        assert!((e.edge - 3.0016).abs() < 1e-4);
        assert!((e.edge_squared - 9.009).abs() < 1e-2);
        assert!(e.edge_squared > 4.0 * (E - 1.0));
        assert!(k_derivative(e.w_star, e.a, e.b).unwrap().abs() < 1e-10);
        let (_, kmin) = golden_min(|w| k_transform(w, e.a, e.b).unwrap(), 1e-6, 1.0 - 1e-9);
        assert!((kmin - e.edge).abs() < 1e-8);
    }

    #[test]
    fn strict_edge_bound_over_beta_grid() {
        for i in 0..=19 {
            let beta = 0.1 + 0.1 * i as f64;
            let c = theta_coefficients(beta);
            let e = solve_edge(c.a(), c.b()).unwrap();
            assert!(e.edge > 2.0 * (c.a().powi(2) + c.b().powi(2)).sqrt());
            assert!(e.edge_squared > 4.0 * c.theta1);
            assert!(e.y_star > 0.0 && e.y_star < 1.0 && e.w_star < 1.0 / e.b);
        }
    }

    #[test]
    fn semicircle_reduction() {
        let law = BulkLaw::new(1.0, 0.0).unwrap();
        for &t in &[0.1, 1.0, 2.5, 3.9] {
            let p = law.squared_density(t).unwrap();
            let exact = (4.0 - t).sqrt() / (2.0 * PI * t.sqrt());
            assert!((p - exact).abs() < 1e-6, "t={t}: {p} vs {exact}");
        }
        assert!(law.squared_density(4.5).unwrap() < 1e-12);
    }

    #[test]
    fn cauchy_transform_is_in_lower_half_plane() {
        let law = BulkLaw::new(1.0, 1.0).unwrap();
        for &x in &[-4.0, -1.0, 0.0, 0.3, 2.9, 5.0] {
            let g = law.cauchy_transform(Complex64::new(x, 0.01)).unwrap();
            assert!(g.im < 0.0);
        }
        assert!(law.cauchy_transform(Complex64::new(1.0, 0.0)).is_err());
    }

    #[test]
    fn moments_closed_form() {
        assert_eq!(limit_moments(1.0, 0.0, 1).unwrap(), 1.0);
        assert_eq!(limit_moments(1.0, 0.0, 2).unwrap(), 2.0);
        assert_eq!(limit_moments(0.0, 1.0, 2).unwrap(), 3.0);
        assert!(limit_moments(1.0, 1.0, 0).is_err());
        let c = theta_coefficients(1.0);
        assert!((limit_moments(c.a(), c.b(), 1).unwrap() - (E - 1.0)).abs() < 1e-14);
        assert!((limit_moments(c.a(), c.b(), 2).unwrap() - 6.904985).abs() < 1e-6);
    }

    #[test]
    fn mp_deviation_identity() {
        for &beta in &[0.5, 1.0, 1.5, 2.0] {
            let c = theta_coefficients(beta);
            let m2 = limit_moments(c.a(), c.b(), 2).unwrap();
            let mp = marchenko_pastur_reference(c.theta1).unwrap();
            assert!((m2 - mp.m2 - c.theta2 * c.theta2).abs() < 1e-12 * m2.max(1.0));
        }
        let mp = marchenko_pastur_reference(1.0).unwrap();
        assert_eq!(mp.edge_squared, 4.0);
        assert!((marchenko_pastur_reference(E - 1.0).unwrap().edge_squared - 6.8731).abs() < 1e-4);
    }

    #[test]
    fn poisson_law() {
        let p = PoissonLaw::new(1.0).unwrap();
        assert!((p.pmf(0) - (-1f64).exp()).abs() < 1e-15);
        assert!((p.pmf(1) - (-1f64).exp()).abs() < 1e-15);
        assert_eq!(p.quantile(0.999), 5);
        assert_eq!(p.quantile(1.0 - 100.0 / 1000.0), 2);
        assert!((p.cdf(4) - 0.99634).abs() < 1e-5);
        assert!(PoissonLaw::new(0.0).is_err());
    }
}
