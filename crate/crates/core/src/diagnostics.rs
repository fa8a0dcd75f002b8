//! Monte Carlo and analytic checks of how the attention ensemble behaves
//! at finite dimension.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensembles::{sample_stream_matrix, MasterSeed, MatrixRole, NormalStream, StreamId};
use crate::error::{invalid, Error, Result};
use crate::freeprob::PoissonLaw;
use crate::models::{f_nonlinearity, gaussian_moment, softmax_attention, theta_coefficients, ModelConfig};
use crate::numerics::bisect;
use crate::spectra::{
    ks_at_atoms, squared_singular_values, EmpiricalDistribution, HistogramBin,
    SpectrumSample,
};

/// Score matrix of one sample, drawing only the `W^Q` and `W^K` streams.
pub fn sample_scores(config: &ModelConfig, master: MasterSeed, sample_index: u64) -> Result<DMatrix<f64>> {
    config.validate()?;
    let stream = |role| StreamId::new(sample_index, role);
    let q = sample_stream_matrix(config.d, config.d_qk, master, stream(MatrixRole::Q))?;
    let k = sample_stream_matrix(config.d, config.d_qk, master, stream(MatrixRole::K))?;
    let ell = config.ell;
    Ok(q.rows(0, ell) * k.rows(0, ell).transpose() / (config.d_qk as f64).sqrt())
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Row-normalizer deviation of one sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationCell {
    pub sample_index: u64,
    /// `max_i |Z_i/ℓ − e^{β²/2}|`.
    pub max_row_deviation: f64,
    /// `d^{1/2−δ} · max_row_deviation`.
    pub scaled_deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationReport {
    pub d: usize,
    pub beta: f64,
    pub delta: f64,
    pub master_seed: u64,
    pub per_seed: Vec<ConcentrationCell>,
    pub median_max_deviation: f64,
    pub median_scaled_deviation: f64,
}

/// Max deviation of `Z_i/ℓ` from `e^{β²/2}` for samples `0..n_seeds`.
pub fn normalizer_concentration(
    config: &ModelConfig,
    master: MasterSeed,
    n_seeds: usize,
) -> Result<ConcentrationReport> {
    if n_seeds == 0 {
        return Err(invalid("seeds", 0.0, "at least one seed is required"));
    }
    config.validate()?;
    let target = (0.5 * config.beta * config.beta).exp();
    let ln_ell = (config.ell as f64).ln();
    let scale = (config.d as f64).powf(0.5 - config.delta);
    let per_seed = (0..n_seeds as u64)
        .into_par_iter()
        .map(|idx| {
            let s = sample_scores(config, master, idx)?;
            let att = softmax_attention(&s, config.beta)?;
            let mut dev: f64 = 0.0;
            for lz in &att.log_normalizers {
                let ratio = (lz - ln_ell).exp();
                if !ratio.is_finite() {
                    return Err(Error::Overflow { exponent: *lz });
                }
                dev = dev.max((ratio - target).abs());
            }
            Ok(ConcentrationCell {
                sample_index: idx,
                max_row_deviation: dev,
                scaled_deviation: scale * dev,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let devs: Vec<f64> = per_seed.iter().map(|c| c.max_row_deviation).collect();
    let scaled: Vec<f64> = per_seed.iter().map(|c| c.scaled_deviation).collect();
    Ok(ConcentrationReport {
        d: config.d,
        beta: config.beta,
        delta: config.delta,
        master_seed: master.0,
        median_max_deviation: median(&devs),
        median_scaled_deviation: median(&scaled),
        per_seed,
    })
}

/// [`normalizer_concentration`] along a ladder of square dimensions.
pub fn concentration_ladder(
    base: &ModelConfig,
    dims: &[usize],
    master: MasterSeed,
    n_seeds: usize,
) -> Result<Vec<ConcentrationReport>> {
    dims.iter()
        .map(|&d| {
            let cfg = ModelConfig {
                d,
                ell: d,
                d_qk: d,
                ..base.clone()
            };
            normalizer_concentration(&cfg, master, n_seeds)
        })
        .collect()
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// `Φ(hi) − Φ(lo)` without cancellation in either tail.
pub fn normal_interval_mass(lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    let upper = |x: f64| 0.5 * libm::erfc(x / std::f64::consts::SQRT_2);
    if lo >= 0.0 {
        upper(lo) - upper(hi)
    } else if hi <= 0.0 {
        upper(-hi) - upper(-lo)
    } else {
        1.0 - upper(hi) - upper(-lo)
    }
}

/// `𝓛_K(u) = E[e^X | |X| ≤ K]` for `X ~ N(0, u²)`, evaluated at `u = βσ`.
pub fn truncated_conditional_mean(k: f64, sigma: f64, beta: f64) -> Result<f64> {
    for (name, v) in [("K", k), ("sigma", sigma), ("beta", beta)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(invalid(name, v, "must be positive"));
        }
    }
    let u = beta * sigma;
    let den = normal_interval_mass(-k / u, k / u);
    if !(den > 0.0) {
        return Err(Error::Underflow("truncation probability Φ(K/σ) − Φ(−K/σ)"));
    }
    let num = normal_interval_mass((-k - u * u) / u, (k - u * u) / u);
    Ok((0.5 * u * u).exp() * num / den)
}

/// Monte Carlo estimate of `E[e^X | |X| ≤ K]`, `X ~ N(0, u²)`, by rejection.
///
/// Returns the estimate and its standard error.
pub fn truncated_mean_monte_carlo(k: f64, u: f64, draws: usize, seed: MasterSeed) -> (f64, f64) {
    let mut stream = NormalStream::from_stream(seed, StreamId::new(0, MatrixRole::Aux));
    let (mut n, mut sum, mut sum2) = (0usize, 0.0, 0.0);
    while n < draws {
        let x = u * stream.next_normal();
        if x.abs() <= k {
            let v = x.exp();
            sum += v;
            sum2 += v * v;
            n += 1;
        }
    }
    let mean = sum / n as f64;
    let var = (sum2 / n as f64 - mean * mean).max(0.0) * n as f64 / (n as f64 - 1.0);
    (mean, (var / n as f64).sqrt())
}

/// `R_n(y) = Σ_{k≥n} y^k / k!`, summed directly so no cancellation occurs.
pub fn taylor_tail(y: f64, n: usize) -> f64 {
    let mut term = 1.0;
    for k in 1..=n {
        term *= y / k as f64;
    }
    let mut sum = 0.0;
    let mut k = n;
    loop {
        sum += term;
        k += 1;
        term *= y / k as f64;
        if term.abs() <= 1e-17 * sum.abs() || term == 0.0 {
            break;
        }
    }
    sum
}

/// `(eβK/n)^n`, valid for `n > βK`.
pub fn taylor_remainder_bound(beta: f64, k: f64, n: usize) -> Result<f64> {
    let mu = beta * k;
    if !((n as f64) > mu) {
        return Err(invalid("n", n as f64, "remainder bound needs n > beta*K"));
    }
    Ok((std::f64::consts::E * mu / n as f64).powi(n as i32))
}

/// Sup-norm evaluation points: `10⁴` equispaced points on `[−K, K]` plus
/// Chebyshev extrema clustered at the endpoints.
pub fn sup_grid(k: f64) -> Vec<f64> {
    const N: usize = 10_000;
    const CHEB: usize = 64;
    let mut pts: Vec<f64> = (0..=N).map(|i| -k + 2.0 * k * i as f64 / N as f64).collect();
    pts.extend((0..=CHEB).map(|j| k * (std::f64::consts::PI * j as f64 / CHEB as f64).cos()));
    pts
}

/// `max_{|x|≤K} |e^{βx} − P_n(βx)|` on [`sup_grid`].
pub fn measured_remainder(beta: f64, k: f64, n: usize) -> f64 {
    sup_grid(k)
        .into_iter()
        .map(|x| taylor_tail(beta * x, n).abs())
        .fold(0.0, f64::max)
}

/// Both sides of `E[e^{βχ}] − E[P_n(βχ)] = Σ_{r≥⌈n/2⌉} λ^r/r!`, `λ = β²/2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanGap {
    pub beta: f64,
    pub n: usize,
    /// `e^{β²/2} − Σ_{k<n} β^k E[χ^k]/k!` from Gaussian moments.
    pub closed_form: f64,
    /// The Poisson tail series.
    pub tail_series: f64,
}

impl MeanGap {
    pub fn discrepancy(&self) -> f64 {
        (self.closed_form - self.tail_series).abs()
    }
}

pub fn gaussian_mean_gap(beta: f64, n: usize) -> Result<MeanGap> {
    if n == 0 {
        return Err(invalid("n", 0.0, "n must be at least 1"));
    }
    let lambda = 0.5 * beta * beta;
    let mut mean_p = 0.0;
    let mut coef = 1.0;
    for k in 0..n {
        if k > 0 {
            coef *= beta / k as f64;
        }
        mean_p += coef * gaussian_moment(k);
    }
    let closed_form = lambda.exp() - mean_p;
    Ok(MeanGap {
        beta,
        n,
        closed_form,
        tail_series: taylor_tail(lambda, n.div_ceil(2)),
    })
}

/// Measured and analytic approximation errors of `Q_n^β` for `f`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApproxBoundReport {
    pub beta: f64,
    pub n: usize,
    pub k: f64,
    /// `max_{|x|≤K} |f(x) − Q_n^β(x)|` on [`sup_grid`].
    pub sup_error: f64,
    /// `e^{−β²/2}[(eβK/n)^n + (eβ²/n)^{n/2}]`.
    pub bound: f64,
    pub taylor_sup: f64,
    pub taylor_bound: f64,
}

impl ApproxBoundReport {
    pub fn holds(&self) -> bool {
        self.sup_error <= self.bound && self.taylor_sup <= self.taylor_bound
    }
}

/// Requires `n > max(βK, β²)`.
pub fn approximation_bound(beta: f64, k: f64, n: usize) -> Result<ApproxBoundReport> {
    if !(k > 0.0) {
        return Err(invalid("K", k, "must be positive"));
    }
    let nf = n as f64;
    if !(nf > beta * k && nf > beta * beta) {
        return Err(invalid("n", nf, "bound needs n > max(beta*K, beta^2)"));
    }
    let damp = (-0.5 * beta * beta).exp();
    let gap = gaussian_mean_gap(beta, n)?.tail_series;
    // f(x) − Q_n(x) = e^{−β²/2} (R_n(βx) − gap).
    let sup_error = sup_grid(k)
        .into_iter()
        .map(|x| (damp * (taylor_tail(beta * x, n) - gap)).abs())
        .fold(0.0, f64::max);
    let taylor_bound = taylor_remainder_bound(beta, k, n)?;
    let mean_bound = (std::f64::consts::E * beta * beta / nf).powf(0.5 * nf);
    Ok(ApproxBoundReport {
        beta,
        n,
        k,
        sup_error,
        bound: damp * (taylor_bound + mean_bound),
        taylor_sup: measured_remainder(beta, k, n),
        taylor_bound,
    })
}

/// Positive root of `e^{β²} − 1 = 2β²`, where `√θ₂ = √(θ₁ − θ₂)`.
pub fn signal_noise_crossover() -> f64 {
    bisect(|b| (b * b).exp_m1() - 2.0 * b * b, 0.5, 3.0, 1e-13)
        .expect("crossover is bracketed by [0.5, 3]")
}

/// `θ₃ = E[f″(χ)/2]² = β⁴/4`.
pub fn theta3(beta: f64) -> f64 {
    beta.powi(4) / 4.0
}

/// Monte Carlo `(E[f″(χ)/2])²` with the standard error of the inner mean.
pub fn theta3_monte_carlo(beta: f64, draws: usize, seed: MasterSeed) -> (f64, f64) {
    let mut stream = NormalStream::from_stream(seed, StreamId::new(0, MatrixRole::Aux));
    let (mut sum, mut sum2) = (0.0, 0.0);
    for _ in 0..draws {
        let v = 0.5 * beta * beta * (f_nonlinearity(stream.next_normal(), beta) + 1.0);
        sum += v;
        sum2 += v * v;
    }
    let n = draws as f64;
    let mean = sum / n;
    let se = ((sum2 / n - mean * mean).max(0.0) / (n - 1.0)).sqrt();
    (mean * mean, se)
}

/// One row of the quantile comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantileRow {
    pub k: usize,
    /// `1 − k/d`.
    pub level: f64,
    pub poisson_quantile: u64,
    pub empirical_quantile: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoissonReport {
    pub d: usize,
    pub beta: f64,
    pub master_seed: u64,
    /// KS distance of the pooled spectrum, evaluated at the atoms.
    pub ks: f64,
    pub ks_per_seed: Vec<f64>,
    pub quantile_table: Vec<QuantileRow>,
    pub histogram: Vec<HistogramBin>,
    pub perron_values: Vec<f64>,
}

/// Ranks `k` at which `F^{-1}(1 − k/d)` is tabulated.
pub const QUANTILE_RANKS: [usize; 9] = [1, 2, 5, 10, 20, 50, 100, 200, 500];

/// Histogram bin width of the Poisson comparison.
pub const POISSON_BIN_WIDTH: f64 = 0.1;

/// Compares the unscaled spectrum of `A` against `Poisson(1)`.
pub fn poisson_comparison(config: &ModelConfig, master: MasterSeed, n_seeds: usize) -> Result<PoissonReport> {
    if n_seeds == 0 {
        return Err(invalid("seeds", 0.0, "at least one seed is required"));
    }
    let spectra = (0..n_seeds as u64)
        .into_par_iter()
        .map(|idx| {
            let s = sample_scores(config, master, idx)?;
            let att = softmax_attention(&s, config.beta)?;
            let mut spec = squared_singular_values(&att.a)?;
            spec.source = "A".into();
            Ok(spec.with_provenance(master.0, idx))
        })
        .collect::<Result<Vec<SpectrumSample>>>()?;
    poisson_report(config, master, &spectra, POISSON_BIN_WIDTH)
}

/// Builds the Poisson comparison from precomputed spectra of `A`.
pub fn poisson_report(
    config: &ModelConfig,
    master: MasterSeed,
    spectra: &[SpectrumSample],
    bin_width: f64,
) -> Result<PoissonReport> {
    let law = PoissonLaw::new(1.0)?;
    let pooled = EmpiricalDistribution::pooled(spectra)?;
    let ks_per_seed = spectra
        .iter()
        .map(|s| Ok(ks_at_atoms(&s.distribution()?, &law)))
        .collect::<Result<Vec<f64>>>()?;
    let d = config.ell;
    let quantile_table = QUANTILE_RANKS
        .iter()
        .filter(|&&k| k < d)
        .map(|&k| {
            let level = 1.0 - k as f64 / d as f64;
            QuantileRow {
                k,
                level,
                poisson_quantile: law.quantile(level),
                empirical_quantile: pooled.quantile(level),
            }
        })
        .collect();
    let hi = pooled.max().max(law.quantile(0.9999) as f64) + 0.1;
    Ok(PoissonReport {
        d,
        beta: config.beta,
        master_seed: master.0,
        ks: ks_at_atoms(&pooled, &law),
        ks_per_seed,
        quantile_table,
        histogram: pooled.histogram(bin_width, 0.0, hi)?,
        perron_values: spectra.iter().map(|s| s.values[0].sqrt()).collect(),
    })
}

/// Hard-argmax attention: each row is the indicator of its largest score.
pub fn argmax_attention(s: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, m) = s.shape();
    let mut a = DMatrix::zeros(n, m);
    for i in 0..n {
        let (j, _) = s
            .row(i)
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (j, &v)| if v > best.1 { (j, v) } else { best });
        a[(i, j)] = 1.0;
    }
    a
}

/// Column multiplicities of a 0/1 row-indicator matrix, sorted descending;
/// these are its squared singular values.
pub fn column_multiplicities(a: &DMatrix<f64>) -> Vec<f64> {
    let mut counts: Vec<f64> = a.column_iter().map(|c| c.sum()).collect();
    counts.sort_by(|x, y| y.total_cmp(x));
    counts
}

/// Monte Carlo check of `Var(ξ²) = 2d(d+3)` for `ξ = e₁ᵀ W^Q (W^K)ᵀ e₂`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovarianceWitness {
    pub d: usize,
    pub draws: usize,
    pub estimate: f64,
    pub standard_error: f64,
    pub expected: f64,
}

impl CovarianceWitness {
    /// `|estimate − expected|` in units of the standard error.
    pub fn z_score(&self) -> f64 {
        (self.estimate - self.expected).abs() / self.standard_error
    }
}

const WITNESS_CHUNK: usize = 10_000;

/// Only row 1 of `W^Q` and row 2 of `W^K` enter `ξ`, so each draw samples
/// `2d` normals. Draws are split into fixed chunks with their own streams.
pub fn covariance_witness(d: usize, draws: usize, master: MasterSeed) -> Result<CovarianceWitness> {
    if d == 0 || draws < 2 {
        return Err(Error::InvalidDimension(format!("witness needs d >= 1 and draws >= 2, got {d}, {draws}")));
    }
    let chunks = draws.div_ceil(WITNESS_CHUNK);
    let values: Vec<f64> = (0..chunks)
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut stream = NormalStream::from_stream(master, StreamId::new(c as u64, MatrixRole::Aux));
            let count = WITNESS_CHUNK.min(draws - c * WITNESS_CHUNK);
            (0..count)
                .map(|_| {
                    let mut xi = 0.0;
                    for _ in 0..d {
                        xi += stream.next_normal() * stream.next_normal();
                    }
                    xi * xi
                })
                .collect::<Vec<f64>>()
        })
        .collect();
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let (mut m2, mut m4) = (0.0, 0.0);
    for v in &values {
        let c = (v - mean).powi(2);
        m2 += c;
        m4 += c * c;
    }
    let var = m2 / (n - 1.0);
    let m4 = m4 / n;
    let df = d as f64;
    Ok(CovarianceWitness {
        d,
        draws,
        estimate: var,
        standard_error: ((m4 - var * var).max(0.0) / n).sqrt(),
        expected: 2.0 * df * (df + 3.0),
    })
}

/// Fraction of score entries with `|S_ij| > K`, pooled over samples.
pub fn tail_fraction(config: &ModelConfig, master: MasterSeed, n_seeds: usize, k: f64) -> Result<f64> {
    let counts = (0..n_seeds as u64)
        .into_par_iter()
        .map(|idx| {
            let s = sample_scores(config, master, idx)?;
            Ok((s.iter().filter(|v| v.abs() > k).count(), s.len()))
        })
        .collect::<Result<Vec<(usize, usize)>>>()?;
    let (hit, total) = counts.iter().fold((0, 0), |acc, c| (acc.0 + c.0, acc.1 + c.1));
    if total == 0 {
        return Err(Error::EmptyDistribution);
    }
    Ok(hit as f64 / total as f64)
}

/// Ordering of the coefficient curves at `beta`: `-1` when
/// `√(θ₁ − θ₂) < √θ₂`, `+1` otherwise.
pub fn coefficient_order(beta: f64) -> i32 {
    let c = theta_coefficients(beta);
    if c.a() < c.b() {
        -1
    } else {
        1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{taylor_polynomial, MatrixSample};
    use std::f64::consts::E;

    #[test]
    fn normal_cdf_values() {
        assert_eq!(normal_cdf(0.0), 0.5);
        assert!((normal_cdf(1.0) - 0.841_344_746_068_542_9).abs() < 1e-15);
        assert!((normal_cdf(-8.0) - 6.220_960_574_271_785e-16).abs() < 1e-28);
        assert!((normal_interval_mass(8.0, 9.0) - (6.220_960_574_271_785e-16 - 1.128_588_405_953_840_4e-19)).abs() < 1e-28);
    }

    #[test]
    fn truncated_mean_limits() {
        let l = truncated_conditional_mean(50.0, 1.0, 1.0).unwrap();
        assert!((l - 0.5f64.exp()).abs() < 1e-10);
        assert!(truncated_conditional_mean(0.0, 1.0, 1.0).is_err());
        assert!(truncated_conditional_mean(1e-300, 1e3, 1e3).is_err());
        let mut prev = 0.0;
        for i in 0..40 {
            let k = 1.0 + 0.25 * i as f64;
            let l = truncated_conditional_mean(k, 1.0, 1.0).unwrap();
            if k <= 6.0 {
                assert!(l > prev, "K={k}");
            } else {
                assert!(l >= prev && l <= 0.5f64.exp() + 1e-15, "K={k}");
            }
            prev = l;
        }
    }

    #[test]
    fn truncated_mean_matches_monte_carlo() {
        let exact = truncated_conditional_mean(1.0, 1.0, 1.0).unwrap();
        let (mc, se) = truncated_mean_monte_carlo(1.0, 1.0, 1_000_000, MasterSeed(3));
        assert!((mc - exact).abs() < 3.0 * se, "{mc} vs {exact} (se {se})");
    }

    #[test]
    fn remainder_bound_examples() {
        let b = taylor_remainder_bound(1.0, 2.0, 10).unwrap();
        assert!((b - (2.0 * E / 10.0).powi(10)).abs() < 1e-18);
        assert!((b - 2.25e-3).abs() < 1e-5);
        assert!(measured_remainder(1.0, 2.0, 10) <= b);
        assert!(taylor_remainder_bound(1.0, 2.0, 11).unwrap() < b);
        assert!(taylor_remainder_bound(1.0, 2.0, 2).is_err());
    }

    #[test]
    fn tail_series_matches_exp() {
        for y in [-3.0f64, -0.5, 0.0, 0.7, 2.0] {
            let direct = y.exp() - taylor_polynomial(y, 6);
            assert!((taylor_tail(y, 6) - direct).abs() < 1e-13);
        }
        assert!((taylor_tail(1.0, 0) - E).abs() < 1e-15);
    }

    #[test]
    fn mean_gap_examples() {
        let g = gaussian_mean_gap(1.0, 4).unwrap();
        assert!((g.closed_form - (0.5f64.exp() - 1.5)).abs() < 1e-15);
        assert!((g.closed_form - 0.148721).abs() < 1e-6);
        assert!(g.discrepancy() < 1e-12);
        for n in 1..=60 {
            for &beta in &[0.1, 0.5, 1.0, 1.5, 2.0] {
                let g = gaussian_mean_gap(beta, n).unwrap();
                assert!(g.discrepancy() < 1e-12, "beta={beta} n={n}");
                if (n as f64) > beta * beta {
                    assert!(g.tail_series <= (E * beta * beta / n as f64).powf(n as f64 / 2.0));
                }
            }
        }
        let mut prev = f64::INFINITY;
        for n in 1..40 {
            let g = gaussian_mean_gap(1.3, n).unwrap().tail_series;
            assert!(g <= prev);
            prev = g;
        }
    }

    #[test]
    fn approximation_bounds_hold() {
        for k in [1.0, 2.0, 3.0] {
            for n in [8, 12, 16] {
                let r = approximation_bound(1.0, k, n).unwrap();
                assert!(r.holds(), "{r:?}");
            }
        }
        assert!(approximation_bound(1.0, 10.0, 8).is_err());
    }

    #[test]
    fn crossover() {
        let b = signal_noise_crossover();
        assert!((b - 1.1209).abs() < 1e-3);
        assert!(((b * b).exp() - 1.0 - 2.0 * b * b).abs() < 1e-8);
        assert_eq!(coefficient_order(b - 0.1), -1);
        assert_eq!(coefficient_order(b + 0.1), 1);
        let changes = (1..300)
            .filter(|i| coefficient_order(*i as f64 / 100.0) != coefficient_order((*i + 1) as f64 / 100.0))
            .count();
        assert_eq!(changes, 1);
    }

    #[test]
    fn theta3_values() {
        assert_eq!(theta3(1.0), 0.25);
        assert_eq!(theta3(2.0), 4.0);
        assert_eq!(theta3(0.0), 0.0);
        for beta in [1.0, 2.0] {
            let (mc, se) = theta3_monte_carlo(beta, 1_000_000, MasterSeed(11));
            let inner = theta3(beta).sqrt();
            assert!((mc.sqrt() - inner).abs() < 4.0 * se, "beta={beta}: {mc}");
        }
    }

    #[test]
    fn argmax_multiplicities_are_singular_values() {
        let s = crate::ensembles::sample_gaussian_matrix(40, 40, MasterSeed(2)).unwrap();
        let a = argmax_attention(&s);
        assert!(a.row_iter().all(|r| r.sum() == 1.0));
        let counts = column_multiplicities(&a);
        assert_eq!(counts.iter().sum::<f64>(), 40.0);
        let spec = squared_singular_values(&a).unwrap();
        for (x, y) in spec.values.iter().zip(&counts) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn concentration_at_beta_zero() {
        let cfg = ModelConfig::square(30, 0.0);
        let r = normalizer_concentration(&cfg, MasterSeed(1), 2).unwrap();
        assert!(r.per_seed.iter().all(|c| c.max_row_deviation == 0.0));
        assert!(normalizer_concentration(&cfg, MasterSeed(1), 0).is_err());
    }

    #[test]
    fn scores_match_full_sample() {
        let cfg = ModelConfig::square(20, 1.0);
        let full = MatrixSample::draw(&cfg, MasterSeed(4), 3).unwrap();
        assert_eq!(sample_scores(&cfg, MasterSeed(4), 3).unwrap(), full.s);
    }

    #[test]
    fn small_covariance_witness() {
        let w = covariance_witness(5, 200_000, MasterSeed(9)).unwrap();
        assert_eq!(w.expected, 80.0);
        assert!(w.z_score() < 4.0, "{w:?}");
    }
}
