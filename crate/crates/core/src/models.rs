//! The softmax attention matrix and its chain of equivalent random-matrix
//! models.
//!
//! All `ℓ x ℓ` models are normalized by `√ℓ` so that their squared singular
//! values live on the same O(1) scale as the limiting law:
//!
//! | name    | construction                                   |
//! |---------|------------------------------------------------|
//! | `A`     | `√ℓ · softmax(βS)`                             |
//! | `Aperp` | `√ℓ · (A − u uᵀ)`                              |
//! | `Y`     | `exp(βS) / (e^{β²/2} √ℓ)`                      |
//! | `Yf`    | `f(S) / √ℓ`, `f(x) = exp(βx − β²/2) − 1`       |
//! | `YQ`    | `Q_n(S) / √ℓ` (centered Taylor polynomial)     |
//! | `YQlin` | `(√θ₂^Q S + √(θ₁^Q − θ₂^Q) W) / √ℓ`           |
//! | `Yflin` | `(√θ₂ S + √(θ₁ − θ₂) W) / √ℓ`                  |

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::ensembles::{sample_stream_matrix, MasterSeed, MatrixRole, StreamId};
use crate::error::{invalid, Error, Result};

/// Largest argument accepted by `exp` before the result overflows `f64`.
pub const MAX_EXP_ARG: f64 = 709.78;

/// Dimensions, inverse temperature and approximation constants of one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Embedding dimension.
    pub d: usize,
    /// Context length, at most `d`.
    pub ell: usize,
    /// Query/key head dimension.
    pub d_qk: usize,
    /// Inverse temperature.
    pub beta: f64,
    /// Constant in the Taylor degree `n_d = ⌈c ln d / ln ln d⌉`.
    pub c: f64,
    /// Concentration exponent in `(0, 1/2]`.
    pub delta: f64,
    /// Explicit Taylor degree; `None` selects `n_d` from `c` and `d`.
    #[serde(default)]
    pub taylor_degree: Option<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d: 1000,
            ell: 1000,
            d_qk: 1000,
            beta: 1.0,
            c: 2.0,
            delta: 0.2,
            taylor_degree: None,
        }
    }
}

impl ModelConfig {
    /// Square configuration `ℓ = d = d_qk`.
    pub fn square(d: usize, beta: f64) -> Self {
        Self {
            d,
            ell: d,
            d_qk: d,
            beta,
            ..Self::default()
        }
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    /// Ratio `ℓ / d`.
    pub fn gamma(&self) -> f64 {
        self.ell as f64 / self.d as f64
    }

    /// Ratio `d_qk / d`.
    pub fn psi(&self) -> f64 {
        self.d_qk as f64 / self.d as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.ell == 0 || self.d_qk == 0 {
            return Err(Error::InvalidDimension(format!(
                "d = {}, ell = {}, d_qk = {} must all be positive",
                self.d, self.ell, self.d_qk
            )));
        }
        if self.ell > self.d {
            return Err(Error::InvalidDimension(format!(
                "ell = {} exceeds d = {}",
                self.ell, self.d
            )));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(invalid("beta", self.beta, "must be finite and non-negative"));
        }
        if !(self.delta > 0.0 && self.delta <= 0.5) {
            return Err(invalid("delta", self.delta, "must lie in (0, 1/2]"));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(invalid("c", self.c, "must be positive"));
        }
        match self.taylor_degree {
            Some(0) => return Err(invalid("taylor_degree", 0.0, "must be at least 1")),
            Some(_) => {}
            None => {
                if self.delta >= 0.5 || self.c <= 1.0 / (1.0 - 2.0 * self.delta) {
                    return Err(invalid(
                        "c",
                        self.c,
                        "auto-selected degree needs c > 1/(1 - 2 delta)",
                    ));
                }
            }
        }
        Ok(())
    }

    /// Taylor degree used by the polynomial models.
    pub fn degree(&self) -> Result<usize> {
        match self.taylor_degree {
            Some(n) => Ok(n),
            None => taylor_degree(self.c, self.d),
        }
    }
}

/// The Gaussian weights of one sample.
#[derive(Debug, Clone)]
pub struct GaussianWeights {
    /// `d x d_qk` query weights.
    pub wq: DMatrix<f64>,
    /// `d x d_qk` key weights.
    pub wk: DMatrix<f64>,
    /// `ℓ x ℓ` independent noise for the linearized models.
    pub w: DMatrix<f64>,
}

impl GaussianWeights {
    pub fn sample(config: &ModelConfig, master: MasterSeed, sample_index: u64) -> Result<Self> {
        config.validate()?;
        let stream = |role| StreamId::new(sample_index, role);
        Ok(Self {
            wq: sample_stream_matrix(config.d, config.d_qk, master, stream(MatrixRole::Q))?,
            wk: sample_stream_matrix(config.d, config.d_qk, master, stream(MatrixRole::K))?,
            w: sample_stream_matrix(config.ell, config.ell, master, stream(MatrixRole::W))?,
        })
    }
}

/// Score matrix `S = X W^Q (W^K)ᵀ Xᵀ / √d_qk` with `X` the first `ℓ` rows of
/// the identity.
pub fn score_matrix(weights: &GaussianWeights, config: &ModelConfig) -> Result<DMatrix<f64>> {
    let (d, dqk, ell) = (config.d, config.d_qk, config.ell);
    if weights.wq.shape() != (d, dqk) || weights.wk.shape() != (d, dqk) {
        return Err(Error::DimensionMismatch(format!(
            "weights {:?}/{:?} do not match d = {d}, d_qk = {dqk}",
            weights.wq.shape(),
            weights.wk.shape()
        )));
    }
    let q = weights.wq.rows(0, ell);
    let k = weights.wk.rows(0, ell);
    let mut s = q * k.transpose();
    s /= (dqk as f64).sqrt();
    Ok(s)
}

/// Score matrix for an explicit input `X` (`ℓ x d`, orthonormal rows).
pub fn score_matrix_with_input(
    weights: &GaussianWeights,
    x: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    if x.ncols() != weights.wq.nrows() || weights.wq.shape() != weights.wk.shape() {
        return Err(Error::DimensionMismatch(format!(
            "input {:?} incompatible with weights {:?}",
            x.shape(),
            weights.wq.shape()
        )));
    }
    let q = x * &weights.wq;
    let k = x * &weights.wk;
    let mut s = q * k.transpose();
    s /= (weights.wq.ncols() as f64).sqrt();
    Ok(s)
}

fn ensure_finite(m: &DMatrix<f64>, what: &'static str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

fn ensure_square(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.is_square() {
        Ok(())
    } else {
        Err(Error::DimensionMismatch(format!(
            "{what} must be square, got {:?}",
            m.shape()
        )))
    }
}

/// Row-stochastic attention matrix together with its row normalizers.
#[derive(Debug, Clone)]
pub struct Attention {
    /// `A_ij = exp(β S_ij) / Z_i`.
    pub a: DMatrix<f64>,
    /// `ln Z_i`; kept in log form because `Z_i` overflows for large `β`.
    pub log_normalizers: Vec<f64>,
}

impl Attention {
    /// `Z_i = Σ_j exp(β S_ij)`; entries may be `+inf` for extreme `β`.
    pub fn normalizers(&self) -> Vec<f64> {
        self.log_normalizers.iter().map(|l| l.exp()).collect()
    }
}

/// `A = softmax(βS)` row by row, computed with a row-max shift.
pub fn softmax_attention(s: &DMatrix<f64>, beta: f64) -> Result<Attention> {
    ensure_square(s, "score matrix")?;
    ensure_finite(s, "score matrix")?;
    if !(beta.is_finite() && beta >= 0.0) {
        return Err(invalid("beta", beta, "must be finite and non-negative"));
    }
    let n = s.nrows();
    let mut a = DMatrix::zeros(n, n);
    let mut log_z = Vec::with_capacity(n);
    let mut row = vec![0.0; n];
    for i in 0..n {
        let mut max = f64::NEG_INFINITY;
        for (j, r) in row.iter_mut().enumerate() {
            *r = beta * s[(i, j)];
            max = max.max(*r);
        }
        let mut sum = 0.0;
        for r in row.iter_mut() {
            *r = (*r - max).exp();
            sum += *r;
        }
        for (j, r) in row.iter().enumerate() {
            a[(i, j)] = r / sum;
        }
        log_z.push(max + sum.ln());
    }
    Ok(Attention {
        a,
        log_normalizers: log_z,
    })
}

/// `A⊥ = A − u uᵀ` with `u = (1, …, 1)ᵀ / √ℓ`.
pub fn centered_attention(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    ensure_square(a, "attention matrix")?;
    let shift = 1.0 / a.nrows() as f64;
    Ok(a.map(|v| v - shift))
}

fn check_exponent(s: &DMatrix<f64>, beta: f64) -> Result<()> {
    ensure_finite(s, "score matrix")?;
    let max = s.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(beta * v));
    let exponent = max - 0.5 * beta * beta;
    if exponent > MAX_EXP_ARG {
        return Err(Error::Overflow { exponent: max });
    }
    Ok(())
}

/// `Y = exp(βS) / (e^{β²/2} √ℓ)`.
pub fn model_y(s: &DMatrix<f64>, beta: f64) -> Result<DMatrix<f64>> {
    check_exponent(s, beta)?;
    let scale = 1.0 / (s.nrows() as f64).sqrt();
    let half = 0.5 * beta * beta;
    Ok(s.map(|v| (beta * v - half).exp() * scale))
}

/// The centered exponential `f(x) = exp(βx − β²/2) − 1`; `E[f(χ)] = 0`.
#[inline]
pub fn f_nonlinearity(x: f64, beta: f64) -> f64 {
    (beta * x - 0.5 * beta * beta).exp_m1()
}

/// `Y^f = f(S) / √ℓ`.
pub fn model_yf(s: &DMatrix<f64>, beta: f64) -> Result<DMatrix<f64>> {
    check_exponent(s, beta)?;
    let scale = 1.0 / (s.nrows() as f64).sqrt();
    Ok(s.map(|v| f_nonlinearity(v, beta) * scale))
}

/// `n_d = ⌈c ln d / ln ln d⌉`.
pub fn taylor_degree(c: f64, d: usize) -> Result<usize> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(invalid("c", c, "must be positive"));
    }
    let df = d as f64;
    let loglog = df.ln().ln();
    if !(loglog > 0.0) {
        return Err(Error::InvalidDimension(format!(
            "taylor degree needs d > e so that ln ln d > 0, got d = {d}"
        )));
    }
    Ok((c * df.ln() / loglog).ceil().max(1.0) as usize)
}

/// `P_n(y) = Σ_{k<n} y^k / k!`.
pub fn taylor_polynomial(y: f64, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    // Horner on the nested form 1 + y(1 + y/2(1 + y/3(...))).
    let mut acc = 1.0;
    for k in (1..n).rev() {
        acc = 1.0 + acc * y / k as f64;
    }
    acc
}

/// `E[P_n(βχ)] = Σ_{2r ≤ n−1} (β²/2)^r / r!`.
pub fn taylor_gaussian_mean(beta: f64, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let lambda = 0.5 * beta * beta;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut r = 1;
    while 2 * r < n {
        term *= lambda / r as f64;
        sum += term;
        r += 1;
    }
    sum
}

/// Centered Taylor polynomial `Q_n^β(x) = e^{−β²/2} (P_n(βx) − E[P_n(βχ)])`.
pub fn centered_taylor(x: f64, beta: f64, n: usize) -> f64 {
    (-0.5 * beta * beta).exp() * (taylor_polynomial(beta * x, n) - taylor_gaussian_mean(beta, n))
}

/// `Y^Q = Q_n^β(S) / √ℓ`.
pub fn model_yq(s: &DMatrix<f64>, beta: f64, n: usize) -> Result<DMatrix<f64>> {
    ensure_finite(s, "score matrix")?;
    if n == 0 {
        return Err(invalid("n", 0.0, "taylor degree must be at least 1"));
    }
    let scale = 1.0 / (s.nrows() as f64).sqrt();
    let pref = (-0.5 * beta * beta).exp();
    let mean = taylor_gaussian_mean(beta, n);
    Ok(s.map(|v| pref * (taylor_polynomial(beta * v, n) - mean) * scale))
}

/// Gaussian-equivalence coefficients of a centered nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearCoefficients {
    /// `E[g(χ)²]`.
    pub theta1: f64,
    /// `E[g'(χ)]²`.
    pub theta2: f64,
}

impl LinearCoefficients {
    pub fn new(theta1: f64, theta2: f64) -> Result<Self> {
        if !(theta2 >= 0.0) || !theta1.is_finite() || !theta2.is_finite() {
            return Err(invalid("theta2", theta2, "must be finite and non-negative"));
        }
        if theta1 < theta2 {
            // Roundoff in the polynomial variants can leave a tiny negative gap.
            if theta2 - theta1 <= 1e-12 * theta2.max(1.0) {
                return Ok(Self {
                    theta1: theta2,
                    theta2,
                });
            }
            return Err(invalid("theta1", theta1, "must be at least theta2"));
        }
        Ok(Self { theta1, theta2 })
    }

    /// Weight of the independent Gaussian component, `√(θ₁ − θ₂)`.
    pub fn a(&self) -> f64 {
        (self.theta1 - self.theta2).max(0.0).sqrt()
    }

    /// Weight of the score component, `√θ₂`.
    pub fn b(&self) -> f64 {
        self.theta2.sqrt()
    }
}

/// `θ₁ = e^{β²} − 1`, `θ₂ = β²` for the centered exponential.
pub fn theta_coefficients(beta: f64) -> LinearCoefficients {
    LinearCoefficients {
        theta1: (beta * beta).exp_m1(),
        theta2: beta * beta,
    }
}

/// `E[χ^m]`: `(m−1)!!` for even `m`, zero for odd `m`.
pub fn gaussian_moment(m: usize) -> f64 {
    if m % 2 == 1 {
        return 0.0;
    }
    let mut acc = 1.0;
    let mut k = m as f64 - 1.0;
    while k > 0.0 {
        acc *= k;
        k -= 2.0;
    }
    acc
}

/// Closed-form `θ₁(Q_n^β)` and `θ₂(Q_n^β)` from Gaussian moments.
pub fn theta_coefficients_poly(beta: f64, n: usize) -> Result<LinearCoefficients> {
    if n < 2 {
        return Err(invalid("n", n as f64, "polynomial coefficients need n >= 2"));
    }
    // c_k = β^k / k!, the coefficients of P_n(βx) in powers of x.
    let mut coef = Vec::with_capacity(n);
    let mut c = 1.0;
    for k in 0..n {
        if k > 0 {
            c *= beta / k as f64;
        }
        coef.push(c);
    }
    let moments: Vec<f64> = (0..2 * n).map(gaussian_moment).collect();
    let mean: f64 = coef.iter().enumerate().map(|(k, c)| c * moments[k]).sum();
    let mut second = 0.0;
    for (j, cj) in coef.iter().enumerate() {
        for (k, ck) in coef.iter().enumerate() {
            second += cj * ck * moments[j + k];
        }
    }
    let theta1 = (-beta * beta).exp() * (second - mean * mean);
    let mean_derivative = (-0.5 * beta * beta).exp() * beta * taylor_gaussian_mean(beta, n - 1);
    LinearCoefficients::new(theta1, mean_derivative * mean_derivative)
}

/// `(√θ₂ S + √(θ₁ − θ₂) W) / √ℓ`.
pub fn linearized_model(
    s: &DMatrix<f64>,
    w: &DMatrix<f64>,
    coeffs: LinearCoefficients,
) -> Result<DMatrix<f64>> {
    if s.shape() != w.shape() {
        return Err(Error::DimensionMismatch(format!(
            "S {:?} and W {:?} differ",
            s.shape(),
            w.shape()
        )));
    }
    ensure_square(s, "score matrix")?;
    let scale = 1.0 / (s.nrows() as f64).sqrt();
    let (a, b) = (coeffs.a() * scale, coeffs.b() * scale);
    Ok(s.zip_map(w, |sv, wv| b * sv + a * wv))
}

/// `Y^f_lin` with the exact coefficients of `f`.
pub fn model_yflin(s: &DMatrix<f64>, w: &DMatrix<f64>, beta: f64) -> Result<DMatrix<f64>> {
    linearized_model(s, w, theta_coefficients(beta))
}

/// `Y^Q_lin` with the coefficients of `Q_n^β`.
pub fn model_yqlin(s: &DMatrix<f64>, w: &DMatrix<f64>, beta: f64, n: usize) -> Result<DMatrix<f64>> {
    linearized_model(s, w, theta_coefficients_poly(beta, n)?)
}

/// The seven matrix models that share the limiting bulk spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    A,
    Aperp,
    Y,
    Yf,
    YQ,
    YQlin,
    Yflin,
}

impl ModelKind {
    pub const ALL: [ModelKind; 7] = [
        ModelKind::A,
        ModelKind::Aperp,
        ModelKind::Y,
        ModelKind::Yf,
        ModelKind::YQ,
        ModelKind::YQlin,
        ModelKind::Yflin,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::A => "A",
            ModelKind::Aperp => "Aperp",
            ModelKind::Y => "Y",
            ModelKind::Yf => "Yf",
            ModelKind::YQ => "YQ",
            ModelKind::YQlin => "YQlin",
            ModelKind::Yflin => "Yflin",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::UnknownModel(s.to_string()))
    }
}

/// One draw of the Gaussian weights with the score and attention matrices
/// derived from it.
#[derive(Debug, Clone)]
pub struct MatrixSample {
    pub config: ModelConfig,
    pub master: MasterSeed,
    pub sample_index: u64,
    pub weights: GaussianWeights,
    pub s: DMatrix<f64>,
    pub attention: Attention,
}

impl MatrixSample {
    pub fn draw(config: &ModelConfig, master: MasterSeed, sample_index: u64) -> Result<Self> {
        let weights = GaussianWeights::sample(config, master, sample_index)?;
        let s = score_matrix(&weights, config)?;
        let attention = softmax_attention(&s, config.beta)?;
        Ok(Self {
            config: config.clone(),
            master,
            sample_index,
            weights,
            s,
            attention,
        })
    }

    /// The unscaled attention matrix `A`.
    pub fn a(&self) -> &DMatrix<f64> {
        &self.attention.a
    }

    /// Row normalizers `Z_i`.
    pub fn z(&self) -> Vec<f64> {
        self.attention.normalizers()
    }

    /// The `√ℓ`-normalized model matrix of the given kind.
    pub fn model(&self, kind: ModelKind) -> Result<DMatrix<f64>> {
        let beta = self.config.beta;
        let root = (self.config.ell as f64).sqrt();
        match kind {
            ModelKind::A => Ok(self.attention.a.clone() * root),
            ModelKind::Aperp => Ok(centered_attention(&self.attention.a)? * root),
            ModelKind::Y => model_y(&self.s, beta),
            ModelKind::Yf => model_yf(&self.s, beta),
            ModelKind::YQ => model_yq(&self.s, beta, self.config.degree()?),
            ModelKind::YQlin => model_yqlin(&self.s, &self.weights.w, beta, self.config.degree()?),
            ModelKind::Yflin => model_yflin(&self.s, &self.weights.w, beta),
        }
    }
}
