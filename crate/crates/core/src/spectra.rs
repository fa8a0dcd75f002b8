//! Squared singular values and empirical spectral distributions.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Squared singular values of one matrix, sorted in descending order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSample {
    pub values: Vec<f64>,
    /// Which model produced the spectrum (e.g. `"Aperp"`).
    pub source: String,
    /// Master seed of the experiment, when known.
    pub seed: Option<u64>,
    /// Sample index within the experiment, when known.
    pub sample_index: Option<u64>,
}

impl SpectrumSample {
    /// Wraps arbitrary values, sorting them descending.
    pub fn from_values(mut values: Vec<f64>, source: impl Into<String>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("spectrum"));
        }
        if values.iter().any(|v| *v < 0.0) {
            return Err(invalid("value", values.iter().cloned().fold(0.0, f64::min), "squared singular values are non-negative"));
        }
        values.sort_by(|a, b| b.total_cmp(a));
        Ok(Self {
            values,
            source: source.into(),
            seed: None,
            sample_index: None,
        })
    }

    pub fn with_provenance(mut self, seed: u64, sample_index: u64) -> Self {
        self.seed = Some(seed);
        self.sample_index = Some(sample_index);
        self
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// The `k` largest values.
    pub fn top(&self, k: usize) -> &[f64] {
        &self.values[..k.min(self.values.len())]
    }

    pub fn distribution(&self) -> Result<EmpiricalDistribution> {
        EmpiricalDistribution::new(self.values.clone())
    }
}

/// Eigenvalues of `M Mᵀ` in descending order, tiny negatives clamped to zero.
///
/// Negative eigenvalues above `-1e-10 · max(1, λ_max)` are roundoff and are
/// clamped; anything more negative is reported as a convergence failure.
pub fn squared_singular_values(m: &DMatrix<f64>) -> Result<SpectrumSample> {
    if m.is_empty() {
        return Err(Error::InvalidDimension("empty matrix".into()));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("matrix"));
    }
    let gram = m * m.transpose();
    let eig = gram.symmetric_eigenvalues();
    if eig.iter().any(|v| !v.is_finite()) {
        return Err(Error::NoConvergence { seed: None });
    }
    let max = eig.iter().cloned().fold(0.0, f64::max);
    let floor = -1e-10 * max.max(1.0);
    if eig.iter().any(|v| *v < floor) {
        return Err(Error::NoConvergence { seed: None });
    }
    let mut values: Vec<f64> = eig.iter().map(|v| v.max(0.0)).collect();
    values.sort_by(|a, b| b.total_cmp(a));
    Ok(SpectrumSample {
        values,
        source: String::new(),
        seed: None,
        sample_index: None,
    })
}

/// Like [`squared_singular_values`], tagging the result and attaching the
/// seed to any convergence error.
pub fn tagged_spectrum(
    m: &DMatrix<f64>,
    source: &str,
    seed: u64,
    sample_index: u64,
) -> Result<SpectrumSample> {
    let mut spec = squared_singular_values(m).map_err(|e| match e {
        Error::NoConvergence { .. } => Error::NoConvergence { seed: Some(seed) },
        other => other,
    })?;
    spec.source = source.to_string();
    Ok(spec.with_provenance(seed, sample_index))
}

/// Drops the `k` largest values; the remaining `N − k` points keep uniform
/// weights.
pub fn remove_top_k(spec: &SpectrumSample, k: usize) -> Result<SpectrumSample> {
    if k > spec.values.len() {
        return Err(Error::TopKTooLarge {
            k,
            len: spec.values.len(),
        });
    }
    Ok(SpectrumSample {
        values: spec.values[k..].to_vec(),
        ..spec.clone()
    })
}

/// Uniform point masses on a multiset of reals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalDistribution {
    sorted: Vec<f64>,
}

/// One histogram bin `[center − w/2, center + w/2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub center: f64,
    pub mass: f64,
}

impl EmpiricalDistribution {
    pub fn new(mut points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyDistribution);
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("distribution"));
        }
        points.sort_by(|a, b| a.total_cmp(b));
        Ok(Self { sorted: points })
    }

    /// Pools several spectra into one distribution with equal point weights.
    pub fn pooled<'a>(spectra: impl IntoIterator<Item = &'a SpectrumSample>) -> Result<Self> {
        let points: Vec<f64> = spectra
            .into_iter()
            .flat_map(|s| s.values.iter().copied())
            .collect();
        Self::new(points)
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// Points in ascending order.
    pub fn points(&self) -> &[f64] {
        &self.sorted
    }

    pub fn min(&self) -> f64 {
        self.sorted[0]
    }

    pub fn max(&self) -> f64 {
        self.sorted[self.sorted.len() - 1]
    }

    /// Right-continuous CDF, `#{x_i ≤ x} / N`.
    pub fn cdf(&self, x: f64) -> f64 {
        let count = self.sorted.partition_point(|v| *v <= x);
        count as f64 / self.sorted.len() as f64
    }

    /// Generalized inverse CDF, `inf {x : F(x) ≥ p}`.
    pub fn quantile(&self, p: f64) -> f64 {
        let n = self.sorted.len();
        let rank = (p.clamp(0.0, 1.0) * n as f64).ceil() as usize;
        self.sorted[rank.clamp(1, n) - 1]
    }

    /// `(1/N) Σ x_i^q`.
    pub fn moment(&self, q: u32) -> Result<f64> {
        if q == 0 {
            return Err(invalid("q", 0.0, "moment order must be at least 1"));
        }
        let n = self.sorted.len() as f64;
        Ok(self.sorted.iter().map(|x| x.powi(q as i32)).sum::<f64>() / n)
    }

    /// Left-closed, right-open bins of width `bin_width` covering `[lo, hi)`.
    pub fn histogram(&self, bin_width: f64, lo: f64, hi: f64) -> Result<Vec<HistogramBin>> {
        if !(bin_width > 0.0 && bin_width.is_finite()) {
            return Err(invalid("bin_width", bin_width, "must be positive"));
        }
        if !(hi > lo) {
            return Err(invalid("range", hi - lo, "upper bound must exceed lower bound"));
        }
        let nbins = ((hi - lo) / bin_width).ceil() as usize;
        let mut counts = vec![0usize; nbins];
        for &x in &self.sorted {
            if x < lo || x >= hi {
                continue;
            }
            let idx = (((x - lo) / bin_width).floor() as usize).min(nbins - 1);
            counts[idx] += 1;
        }
        let n = self.sorted.len() as f64;
        Ok(counts
            .into_iter()
            .enumerate()
            .map(|(i, c)| HistogramBin {
                center: lo + (i as f64 + 0.5) * bin_width,
                mass: c as f64 / n,
            })
            .collect())
    }
}

/// Moment of order `q` of a spectrum, `(1/N) Σ λ_i^q`.
pub fn moment(spec: &SpectrumSample, q: u32) -> Result<f64> {
    spec.distribution()?.moment(q)
}

/// Outcome of an interlacing check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterlacingReport {
    pub passed: bool,
    /// First 1-based index `i` at which the inequalities fail.
    pub first_violation: Option<usize>,
    pub violations: usize,
}

/// Absolute tolerance for ties in [`check_interlacing`].
pub const INTERLACING_TOLERANCE: f64 = 1e-9;

/// Checks `s_{i+1}(Y^f) ≤ s_i(Y) ≤ s_{i−1}(Y^f)` with `s_0 = ∞`,
/// `s_{n+1} = 0`, on descending squared singular values.
pub fn check_interlacing(spec_y: &SpectrumSample, spec_yf: &SpectrumSample) -> Result<InterlacingReport> {
    let (y, yf) = (&spec_y.values, &spec_yf.values);
    if y.len() != yf.len() {
        return Err(Error::DimensionMismatch(format!(
            "spectra of length {} and {}",
            y.len(),
            yf.len()
        )));
    }
    let n = y.len();
    let mut first = None;
    let mut violations = 0;
    for i in 0..n {
        let below = if i + 1 < n { yf[i + 1] } else { 0.0 };
        let above = if i == 0 { f64::INFINITY } else { yf[i - 1] };
        let ok = below <= y[i] + INTERLACING_TOLERANCE && y[i] <= above + INTERLACING_TOLERANCE;
        if !ok {
            violations += 1;
            first.get_or_insert(i + 1);
        }
    }
    Ok(InterlacingReport {
        passed: violations == 0,
        first_violation: first,
        violations,
    })
}

/// Two-sample Kolmogorov–Smirnov distance `sup_x |F_p(x) − F_q(x)|`.
pub fn ks_distance(p: &EmpiricalDistribution, q: &EmpiricalDistribution) -> f64 {
    let (a, b) = (p.points(), q.points());
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut stat: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        stat = stat.max((i as f64 / na - j as f64 / nb).abs());
    }
    stat
}

/// KS distance against a continuous CDF, checking both one-sided limits at
/// every sample point.
pub fn ks_against_cdf(p: &EmpiricalDistribution, cdf: impl Fn(f64) -> f64) -> f64 {
    let pts = p.points();
    let n = pts.len() as f64;
    let mut stat: f64 = 0.0;
    let mut i = 0;
    while i < pts.len() {
        let x = pts[i];
        let below = i as f64 / n;
        while i < pts.len() && pts[i] == x {
            i += 1;
        }
        let at = i as f64 / n;
        let f = cdf(x);
        stat = stat.max((at - f).abs()).max((below - f).abs());
    }
    stat
}

/// A law supported on the non-negative integers.
pub trait DiscreteLaw {
    /// `P(X ≤ k)`.
    fn cdf(&self, k: u64) -> f64;
}

/// KS distance against a law on the integers, evaluated at the atoms.
///
/// Each empirical point is assigned to its nearest atom (the empirical CDF is
/// read at `k + 1/2`) and the right-continuous CDFs are compared at
/// `k = 0, 1, …` up to the largest occupied atom.
pub fn ks_at_atoms(p: &EmpiricalDistribution, law: &impl DiscreteLaw) -> f64 {
    let top = p.max().round().max(0.0) as u64;
    let mut stat: f64 = 0.0;
    for k in 0..=top {
        stat = stat.max((p.cdf(k as f64 + 0.5) - law.cdf(k)).abs());
    }
    stat
}

/// Largest singular value of a matrix and the overlap of its singular vectors
/// with the normalized all-ones direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerronReport {
    pub s1: f64,
    pub left_overlap: f64,
    pub right_overlap: f64,
}

fn top_eigenvector(gram: &DMatrix<f64>) -> (f64, DVector<f64>) {
    let n = gram.nrows();
    let mut v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    // Break exact symmetry so that a start orthogonal to the top vector is impossible.
    for (i, x) in v.iter_mut().enumerate() {
        *x += 1e-3 * ((i as f64 * 0.618_033_988_75).fract() - 0.5) / (n as f64).sqrt();
    }
    v.normalize_mut();
    let mut lambda = 0.0;
    for _ in 0..5000 {
        let w = gram * &v;
        let norm = w.norm();
        if norm == 0.0 {
            return (0.0, v);
        }
        let next = w / norm;
        let done = (norm - lambda).abs() <= 1e-14 * norm && (&next - &v).norm() < 1e-12;
        lambda = norm;
        v = next;
        if done {
            break;
        }
    }
    (lambda, v)
}

/// Power iteration on `AAᵀ` and `AᵀA`.
pub fn perron_structure(a: &DMatrix<f64>) -> PerronReport {
    let n = a.nrows();
    let u = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let (lambda, left) = top_eigenvector(&(a * a.transpose()));
    let (_, right) = top_eigenvector(&(a.transpose() * a));
    let um = DVector::from_element(a.ncols(), 1.0 / (a.ncols() as f64).sqrt());
    PerronReport {
        s1: lambda.max(0.0).sqrt(),
        left_overlap: left.dot(&u).abs(),
        right_overlap: right.dot(&um).abs(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensembles::{sample_gaussian_matrix, MasterSeed};

    #[test]
    fn identity_and_diagonal() {
        let s = squared_singular_values(&DMatrix::identity(5, 5)).unwrap();
        assert!(s.values.iter().all(|v| (v - 1.0).abs() < 1e-14));
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0, 1.0]));
        let s = squared_singular_values(&d).unwrap();
        for (v, e) in s.values.iter().zip([9.0, 4.0, 1.0]) {
            assert!((v - e).abs() < 1e-12);
        }
    }

    #[test]
    fn trace_identity_random() {
        let m = sample_gaussian_matrix(50, 50, MasterSeed(5)).unwrap();
        let s = squared_singular_values(&m).unwrap();
        let total: f64 = s.values.iter().sum();
        let fro = m.norm_squared();
        assert!((total - fro).abs() <= 1e-9 * fro);
    }

    #[test]
    fn matches_direct_svd() {
        let m = sample_gaussian_matrix(30, 30, MasterSeed(8)).unwrap();
        let s = squared_singular_values(&m).unwrap();
        let mut sv: Vec<f64> = m.clone().svd(false, false).singular_values.iter().map(|x| x * x).collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        // Relative to the top value: the smallest squared singular values of a
        // Gaussian matrix sit near the roundoff floor of λ_max.
        for (a, b) in s.values.iter().zip(&sv) {
            assert!((a - b).abs() <= 1e-8 * b.max(1e-2 * sv[0]));
        }
    }

    #[test]
    fn rejects_nonfinite() {
        let mut m = DMatrix::identity(3, 3);
        m[(1, 1)] = f64::INFINITY;
        assert!(squared_singular_values(&m).is_err());
    }

    #[test]
    fn moments_of_point_mass() {
        let s = SpectrumSample::from_values(vec![1.0; 7], "I").unwrap();
        for q in 1..6 {
            assert_eq!(moment(&s, q).unwrap(), 1.0);
        }
        assert!(moment(&s, 0).is_err());
        assert!(EmpiricalDistribution::new(vec![]).is_err());
    }

    #[test]
    fn second_moment_matches_matrix_power() {
        let m = sample_gaussian_matrix(30, 30, MasterSeed(12)).unwrap() / 30f64.sqrt();
        let s = squared_singular_values(&m).unwrap();
        let g = &m * m.transpose();
        let tr = (&g * &g).trace() / 30.0;
        let m2 = moment(&s, 2).unwrap();
        assert!((m2 - tr).abs() <= 1e-9 * tr);
    }

    #[test]
    fn top_k_removal() {
        let s = SpectrumSample::from_values(vec![1.0, 9.0, 4.0], "t").unwrap();
        assert_eq!(remove_top_k(&s, 0).unwrap().values, vec![9.0, 4.0, 1.0]);
        assert_eq!(remove_top_k(&s, 1).unwrap().values, vec![4.0, 1.0]);
        assert!(remove_top_k(&s, 4).is_err());
    }

    #[test]
    fn interlacing_cases() {
        let a = SpectrumSample::from_values(vec![5.0, 3.0, 1.0], "y").unwrap();
        assert!(check_interlacing(&a, &a).unwrap().passed);
        let y = SpectrumSample::from_values(vec![10.0, 6.0, 1.0], "y").unwrap();
        let yf = SpectrumSample::from_values(vec![5.0, 2.0, 0.5], "yf").unwrap();
        let r = check_interlacing(&y, &yf).unwrap();
        assert!(!r.passed);
        assert_eq!(r.first_violation, Some(2));
        let short = SpectrumSample::from_values(vec![1.0], "s").unwrap();
        assert!(check_interlacing(&a, &short).is_err());
    }

    #[test]
    fn ks_basic_cases() {
        let p = EmpiricalDistribution::new(vec![0.3, 1.2, 2.2]).unwrap();
        assert_eq!(ks_distance(&p, &p), 0.0);
        let zero = EmpiricalDistribution::new(vec![0.0]).unwrap();
        let one = EmpiricalDistribution::new(vec![1.0]).unwrap();
        assert_eq!(ks_distance(&zero, &one), 1.0);
        assert_eq!(ks_distance(&one, &zero), 1.0);

        struct UniformPair;
        impl DiscreteLaw for UniformPair {
            fn cdf(&self, k: u64) -> f64 {
                if k == 0 {
                    0.5
                } else {
                    1.0
                }
            }
        }
        let u = EmpiricalDistribution::new(vec![0.0, 1.0]).unwrap();
        assert_eq!(ks_at_atoms(&u, &UniformPair), 0.0);
    }

    #[test]
    fn ks_against_continuous_uniform() {
        let pts: Vec<f64> = (0..100).map(|i| (i as f64 + 0.5) / 100.0).collect();
        let p = EmpiricalDistribution::new(pts).unwrap();
        let ks = ks_against_cdf(&p, |x| x.clamp(0.0, 1.0));
        assert!((ks - 0.005).abs() < 1e-12);
    }

    #[test]
    fn histogram_bins() {
        let p = EmpiricalDistribution::new(vec![0.05]).unwrap();
        let h = p.histogram(0.1, 0.0, 1.0).unwrap();
        assert_eq!(h.len(), 10);
        assert_eq!(h[0].mass, 1.0);
        assert!((h[0].center - 0.05).abs() < 1e-15);
        let p = EmpiricalDistribution::new(vec![0.05, 0.15]).unwrap();
        let h = p.histogram(0.1, 0.0, 1.0).unwrap();
        assert_eq!((h[0].mass, h[1].mass), (0.5, 0.5));
        assert!(p.histogram(0.0, 0.0, 1.0).is_err());
        assert!(p.histogram(-1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn cdf_and_quantile() {
        let p = EmpiricalDistribution::new(vec![3.0, 1.0, 2.0, 2.0]).unwrap();
        assert_eq!(p.cdf(0.9), 0.0);
        assert_eq!(p.cdf(1.0), 0.25);
        assert_eq!(p.cdf(2.0), 0.75);
        assert_eq!(p.quantile(0.25), 1.0);
        assert_eq!(p.quantile(0.26), 2.0);
        assert_eq!(p.quantile(1.0), 3.0);
        assert_eq!(p.quantile(0.0), 1.0);
    }

    #[test]
    fn perron_of_uniform_matrix() {
        let u = DMatrix::from_element(8, 8, 1.0 / 8.0);
        let r = perron_structure(&u);
        assert!((r.s1 - 1.0).abs() < 1e-12);
        assert!(r.left_overlap > 1.0 - 1e-12 && r.right_overlap > 1.0 - 1e-12);
    }
}
