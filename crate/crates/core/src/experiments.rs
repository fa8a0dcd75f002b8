//! Experiment presets, file emission and manifest replay.
//!
//! Every run writes its files into one directory together with
//! `manifest.json`. Replaying a manifest regenerates byte-identical data
//! files: seeds are derived per sample, samples run in parallel but are
//! aggregated in sample order, and floats are printed in round-trip form.

use std::fmt;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{poisson_report, sample_scores, signal_noise_crossover};
use crate::ensembles::MasterSeed;
use crate::error::{invalid, Error, Result};
use crate::freeprob::{bulk_density, limit_moments, marchenko_pastur_reference, solve_edge, GridSpec, PoissonLaw};
use crate::io::{write_density_csv, write_histogram_csv, write_json, write_rows_csv, write_spectra_csv, with_file};
use crate::models::{softmax_attention, theta_coefficients, MatrixSample, ModelConfig, ModelKind};
use crate::spectra::{remove_top_k, tagged_spectrum, EmpiricalDistribution, SpectrumSample};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "ATTNSPEC_OUT";

/// `β` above which the fixed-`β` theory is not expected to apply.
pub const THEORY_BETA_LIMIT: f64 = 3.0;

/// Figure presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Figure {
    SixModels,
    Topk,
    Balance,
    Poisson,
}

impl Figure {
    pub const ALL: [Figure; 4] = [Figure::SixModels, Figure::Topk, Figure::Balance, Figure::Poisson];

    pub fn name(self) -> &'static str {
        match self {
            Figure::SixModels => "six-models",
            Figure::Topk => "topk",
            Figure::Balance => "balance",
            Figure::Poisson => "poisson",
        }
    }

    /// Inverse temperature used when none is given.
    pub fn default_beta(self) -> f64 {
        match self {
            Figure::Poisson => 50.0,
            _ => 1.0,
        }
    }
}

impl fmt::Display for Figure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Figure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Figure::ALL
            .into_iter()
            .find(|f| f.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::UnknownModel(s.to_string()))
    }
}

/// What a run computes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Command {
    Spectrum { model: ModelKind, raw: bool },
    Figures { figure: Figure },
    Theory { a: f64, b: f64, beta: Option<f64>, points: usize },
}

/// Sampling parameters shared by all commands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    pub config: ModelConfig,
    pub master_seed: u64,
    /// Number of samples; sample indices are `0..seeds`.
    pub seeds: usize,
    pub top_k: usize,
    pub bin_width: f64,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            config: ModelConfig::default(),
            master_seed: 0,
            seeds: 10,
            top_k: 3,
            bin_width: 0.1,
        }
    }
}

impl RunSettings {
    fn validate(&self) -> Result<()> {
        self.config.validate()?;
        if self.seeds == 0 {
            return Err(invalid("seeds", 0.0, "at least one seed is required"));
        }
        if !(self.bin_width > 0.0 && self.bin_width.is_finite()) {
            return Err(invalid("bin_width", self.bin_width, "must be positive"));
        }
        if self.top_k >= self.config.ell {
            return Err(Error::TopKTooLarge {
                k: self.top_k,
                len: self.config.ell,
            });
        }
        Ok(())
    }

    fn master(&self) -> MasterSeed {
        MasterSeed(self.master_seed)
    }
}

/// Sidecar record of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub experiment: String,
    pub command: Command,
    pub settings: RunSettings,
    pub seeds: Vec<u64>,
    /// Data files, relative to the manifest directory.
    pub outputs: Vec<String>,
    pub tool_version: String,
    pub wall_clock_seconds: f64,
}

impl ExperimentManifest {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }
}

/// Default output directory: `$ATTNSPEC_OUT` or `./attnspec-out`.
pub fn default_out_dir() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("attnspec-out"))
}

fn experiment_name(command: &Command) -> String {
    match command {
        Command::Spectrum { model, .. } => format!("spectrum-{model}"),
        Command::Figures { figure } => format!("figures-{figure}"),
        Command::Theory { .. } => "theory".to_string(),
    }
}

/// Runs `command`, writes its files and `manifest.json` into `out_dir`.
pub fn run(command: &Command, settings: &RunSettings, out_dir: &Path) -> Result<ExperimentManifest> {
    let start = Instant::now();
    if !matches!(command, Command::Theory { .. }) {
        settings.validate()?;
        if settings.config.beta > THEORY_BETA_LIMIT {
            warn!(
                "beta = {} is outside the bounded-beta regime of the limit theory; running anyway",
                settings.config.beta
            );
        }
    }
    fs::create_dir_all(out_dir)?;
    let mut out = Outputs::new(out_dir);
    match command {
        Command::Spectrum { model, raw } => spectrum(*model, *raw, settings, &mut out)?,
        Command::Figures { figure } => match figure {
            Figure::SixModels => six_models(settings, &mut out)?,
            Figure::Topk => topk(settings, &mut out)?,
            Figure::Balance => balance(settings, &mut out)?,
            Figure::Poisson => poisson(settings, &mut out)?,
        },
        Command::Theory { a, b, beta, points } => theory(*a, *b, *beta, *points, &mut out)?,
    }
    let manifest = ExperimentManifest {
        experiment: experiment_name(command),
        command: command.clone(),
        settings: settings.clone(),
        seeds: (0..settings.seeds as u64).collect(),
        outputs: out.files,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    };
    with_file(&out_dir.join(MANIFEST_FILE), |w| write_json(w, &manifest))?;
    info!("wrote {} files to {}", manifest.outputs.len(), out_dir.display());
    Ok(manifest)
}

/// Re-executes a manifest into `out_dir`.
pub fn replay(manifest: &ExperimentManifest, out_dir: &Path) -> Result<ExperimentManifest> {
    run(&manifest.command, &manifest.settings, out_dir)
}

struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    fn new(dir: &Path) -> Self {
        Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        }
    }

    fn write(&mut self, name: &str, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
        with_file(&self.dir.join(name), f)?;
        self.files.push(name.to_string());
        Ok(())
    }
}

fn fmt(v: f64) -> String {
    v.to_string()
}

/// Spectra of the requested models for samples `0..seeds`, in sample order.
pub fn sample_spectra(settings: &RunSettings, kinds: &[ModelKind], raw: bool) -> Result<Vec<Vec<SpectrumSample>>> {
    let master = settings.master();
    (0..settings.seeds as u64)
        .into_par_iter()
        .map(|idx| {
            let sample = MatrixSample::draw(&settings.config, master, idx)?;
            kinds
                .iter()
                .map(|&kind| {
                    let m = match (kind, raw) {
                        (ModelKind::A, true) => sample.a().clone(),
                        (ModelKind::Aperp, true) => crate::models::centered_attention(sample.a())?,
                        _ => sample.model(kind)?,
                    };
                    tagged_spectrum(&m, kind.name(), master.0, idx)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect()
}

/// Pooled statistics of one model over all samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub model: ModelKind,
    pub top_k: usize,
    /// Moments `m_1..m_4` of the pooled spectrum after top-k removal.
    pub bulk_moments: [f64; 4],
    /// Moments `m_1..m_4` of the pooled full spectrum.
    pub full_moments: [f64; 4],
    /// Largest retained value of each sample.
    pub max_bulk: Vec<f64>,
    /// Mean over samples of the `r`-th largest value, `r = 1..=top_k`.
    pub mean_top: Vec<f64>,
}

fn moments(dist: &EmpiricalDistribution) -> Result<[f64; 4]> {
    Ok([dist.moment(1)?, dist.moment(2)?, dist.moment(3)?, dist.moment(4)?])
}

pub fn summarize(model: ModelKind, spectra: &[SpectrumSample], top_k: usize) -> Result<ModelSummary> {
    let bulk: Vec<SpectrumSample> = spectra.iter().map(|s| remove_top_k(s, top_k)).collect::<Result<_>>()?;
    let n = spectra.len() as f64;
    Ok(ModelSummary {
        model,
        top_k,
        bulk_moments: moments(&EmpiricalDistribution::pooled(&bulk)?)?,
        full_moments: moments(&EmpiricalDistribution::pooled(spectra)?)?,
        max_bulk: bulk.iter().map(|s| s.values.first().copied().unwrap_or(0.0)).collect(),
        mean_top: (0..top_k)
            .map(|r| spectra.iter().map(|s| s.values[r]).sum::<f64>() / n)
            .collect(),
    })
}

fn histogram_range(spectra: &[SpectrumSample], width: f64) -> f64 {
    let max = spectra
        .iter()
        .filter_map(|s| s.values.first())
        .fold(0.0, |m: f64, v| m.max(*v));
    ((max / width).floor() + 1.0) * width
}

fn write_topk(out: &mut Outputs, name: &str, per_model: &[(ModelKind, Vec<SpectrumSample>)], k: usize) -> Result<()> {
    let mut rows = Vec::new();
    for (kind, spectra) in per_model {
        for s in spectra {
            for (r, v) in s.values.iter().take(k).enumerate() {
                let seed = s.sample_index.unwrap_or_default();
                rows.push(vec![kind.name().to_string(), seed.to_string(), (r + 1).to_string(), fmt(*v)]);
            }
        }
    }
    out.write(name, |w| write_rows_csv(w, &["model", "seed", "rank", "value"], &rows))
}

fn by_model(kinds: &[ModelKind], per_seed: Vec<Vec<SpectrumSample>>) -> Vec<(ModelKind, Vec<SpectrumSample>)> {
    kinds
        .iter()
        .enumerate()
        .map(|(j, &kind)| (kind, per_seed.iter().map(|s| s[j].clone()).collect()))
        .collect()
}

fn spectrum(model: ModelKind, raw: bool, settings: &RunSettings, out: &mut Outputs) -> Result<()> {
    let per_model = by_model(&[model], sample_spectra(settings, &[model], raw)?);
    let spectra = &per_model[0].1;
    let name = model.name();
    out.write(&format!("spectrum_{name}.csv"), |w| write_spectra_csv(w, spectra))?;
    write_topk(out, &format!("topk_{name}.csv"), &per_model, settings.top_k)?;
    let bulk: Vec<SpectrumSample> = spectra.iter().map(|s| remove_top_k(s, settings.top_k)).collect::<Result<_>>()?;
    let hi = histogram_range(&bulk, settings.bin_width);
    let hist = EmpiricalDistribution::pooled(&bulk)?.histogram(settings.bin_width, 0.0, hi)?;
    out.write(&format!("histogram_{name}.csv"), |w| write_histogram_csv(w, &hist))?;
    let summary = summarize(model, spectra, settings.top_k)?;
    out.write(&format!("summary_{name}.json"), |w| write_json(w, &summary))
}

/// Reference values of the limit law next to the empirical summaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryReference {
    pub beta: f64,
    pub theta1: f64,
    pub theta2: f64,
    pub a: f64,
    pub b: f64,
    pub m1: f64,
    pub m2: f64,
    pub edge_squared: f64,
    pub mp_edge_squared: f64,
    pub mp_m2: f64,
}

pub fn theory_reference(beta: f64) -> Result<TheoryReference> {
    let c = theta_coefficients(beta);
    let (a, b) = (c.a(), c.b());
    let edge = solve_edge(a, b)?;
    let mp = marchenko_pastur_reference(c.theta1)?;
    Ok(TheoryReference {
        beta,
        theta1: c.theta1,
        theta2: c.theta2,
        a,
        b,
        m1: limit_moments(a, b, 1)?,
        m2: limit_moments(a, b, 2)?,
        edge_squared: edge.edge_squared,
        mp_edge_squared: mp.edge_squared,
        mp_m2: mp.m2,
    })
}

#[derive(Serialize)]
struct SixModelsSummary<'a> {
    theory: TheoryReference,
    models: &'a [ModelSummary],
}

fn six_models(settings: &RunSettings, out: &mut Outputs) -> Result<()> {
    let kinds = ModelKind::ALL;
    let per_model = by_model(&kinds, sample_spectra(settings, &kinds, false)?);
    let all: Vec<SpectrumSample> = per_model.iter().flat_map(|(_, s)| s.iter().cloned()).collect();
    out.write("spectra.csv", |w| write_spectra_csv(w, &all))?;
    let bulks: Vec<(ModelKind, Vec<SpectrumSample>)> = per_model
        .iter()
        .map(|(k, s)| Ok((*k, s.iter().map(|x| remove_top_k(x, settings.top_k)).collect::<Result<Vec<_>>>()?)))
        .collect::<Result<_>>()?;
    let all_bulk: Vec<SpectrumSample> = bulks.iter().flat_map(|(_, s)| s.iter().cloned()).collect();
    let hi = histogram_range(&all_bulk, settings.bin_width);
    for (kind, bulk) in &bulks {
        let hist = EmpiricalDistribution::pooled(bulk)?.histogram(settings.bin_width, 0.0, hi)?;
        out.write(&format!("histogram_{}.csv", kind.name()), |w| write_histogram_csv(w, &hist))?;
    }
    let models = per_model
        .iter()
        .map(|(k, s)| summarize(*k, s, settings.top_k))
        .collect::<Result<Vec<_>>>()?;
    let summary = SixModelsSummary {
        theory: theory_reference(settings.config.beta)?,
        models: &models,
    };
    out.write("summary.json", |w| write_json(w, &summary))
}

fn topk(settings: &RunSettings, out: &mut Outputs) -> Result<()> {
    let kinds = ModelKind::ALL;
    let per_model = by_model(&kinds, sample_spectra(settings, &kinds, false)?);
    write_topk(out, "topk.csv", &per_model, settings.top_k)
}

/// `β` values at which `s₁(A)²` and `s₂(A)²` are sampled in the balance figure.
pub const BALANCE_BETAS: [f64; 12] = [0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 2.0, 3.0, 5.0, 10.0, 20.0, 50.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossoverReport {
    pub beta_star: f64,
    pub residual: f64,
}

fn balance(settings: &RunSettings, out: &mut Outputs) -> Result<()> {
    let rows: Vec<Vec<String>> = (0..=200)
        .map(|i| {
            let beta = i as f64 / 100.0;
            let c = theta_coefficients(beta);
            vec![fmt(beta), fmt(c.b()), fmt(c.a()), fmt(c.theta1), fmt(c.theta2)]
        })
        .collect();
    out.write("coefficients.csv", |w| {
        write_rows_csv(w, &["beta", "sqrt_theta2", "sqrt_theta1_minus_theta2", "theta1", "theta2"], &rows)
    })?;
    let beta_star = signal_noise_crossover();
    let crossover = CrossoverReport {
        beta_star,
        residual: (beta_star * beta_star).exp_m1() - 2.0 * beta_star * beta_star,
    };
    out.write("crossover.json", |w| write_json(w, &crossover))?;
    let master = settings.master();
    let cells: Vec<(f64, u64)> = BALANCE_BETAS
        .iter()
        .flat_map(|&b| (0..settings.seeds as u64).map(move |i| (b, i)))
        .collect();
    let values = cells
        .par_iter()
        .map(|&(beta, idx)| {
            let cfg = settings.config.clone().with_beta(beta);
            let att = softmax_attention(&sample_scores(&cfg, master, idx)?, beta)?;
            let spec = tagged_spectrum(&att.a, "A", master.0, idx)?;
            Ok(vec![fmt(beta), idx.to_string(), fmt(spec.values[0]), fmt(spec.values[1])])
        })
        .collect::<Result<Vec<_>>>()?;
    out.write("s1_s2.csv", |w| write_rows_csv(w, &["beta", "seed", "s1_sq", "s2_sq"], &values))
}

fn poisson(settings: &RunSettings, out: &mut Outputs) -> Result<()> {
    let master = settings.master();
    let spectra = (0..settings.seeds as u64)
        .into_par_iter()
        .map(|idx| {
            let att = softmax_attention(&sample_scores(&settings.config, master, idx)?, settings.config.beta)?;
            tagged_spectrum(&att.a, "A", master.0, idx)
        })
        .collect::<Result<Vec<_>>>()?;
    let report = poisson_report(&settings.config, master, &spectra, settings.bin_width)?;
    let pooled = EmpiricalDistribution::pooled(&spectra)?;
    let hi = report.histogram.len() as f64 * settings.bin_width;
    out.write("poisson_histogram.csv", |w| write_histogram_csv(w, &report.histogram))?;
    let law = PoissonLaw::new(1.0)?;
    let pmf: Vec<Vec<String>> = (0..=hi.ceil() as u64).map(|k| vec![k.to_string(), fmt(law.pmf(k))]).collect();
    out.write("poisson_pmf.csv", |w| write_rows_csv(w, &["k", "pmf"], &pmf))?;
    let q: Vec<Vec<String>> = report
        .quantile_table
        .iter()
        .map(|r| vec![r.k.to_string(), fmt(r.level), r.poisson_quantile.to_string(), fmt(r.empirical_quantile)])
        .collect();
    out.write("poisson_quantiles.csv", |w| {
        write_rows_csv(w, &["k", "level", "poisson_quantile", "empirical_quantile"], &q)
    })?;
    // Sorted pooled values against F^{-1}(1 - k/N).
    let pts = pooled.points();
    let n = pts.len();
    let sorted: Vec<Vec<String>> = (1..=n)
        .map(|k| {
            let level = 1.0 - k as f64 / n as f64;
            vec![k.to_string(), fmt(pts[n - k]), law.quantile(level).to_string()]
        })
        .collect();
    out.write("poisson_sorted.csv", |w| write_rows_csv(w, &["k", "empirical", "poisson_quantile"], &sorted))?;
    out.write("poisson_report.json", |w| write_json(w, &report))
}

#[derive(Serialize)]
struct TheoryOutput {
    beta: Option<f64>,
    theta1: Option<f64>,
    theta2: Option<f64>,
    edge: crate::freeprob::EdgeSolution,
    m1: f64,
    m2: f64,
    mp_edge_squared: Option<f64>,
    mp_m2: Option<f64>,
    /// `m₂(ν∞) − 2θ₁²`, which equals `θ₂²`.
    mp_m2_deviation: Option<f64>,
    support_edge_squared: f64,
}

fn theory(a: f64, b: f64, beta: Option<f64>, points: usize, out: &mut Outputs) -> Result<()> {
    let edge = solve_edge(a, b)?;
    let theta1 = a * a + b * b;
    let mp = beta.map(|_| marchenko_pastur_reference(theta1)).transpose()?;
    let m2 = limit_moments(a, b, 2)?;
    let curve = bulk_density(a, b, &GridSpec { points, t_max: None })?;
    let report = TheoryOutput {
        beta,
        theta1: beta.map(|_| theta1),
        theta2: beta.map(|_| b * b),
        edge,
        m1: limit_moments(a, b, 1)?,
        m2,
        mp_edge_squared: mp.map(|m| m.edge_squared),
        mp_m2: mp.map(|m| m.m2),
        mp_m2_deviation: mp.map(|m| m2 - m.m2),
        support_edge_squared: curve.support.1,
    };
    out.write("edge.json", |w| write_json(w, &report))?;
    out.write("density.csv", |w| write_density_csv(w, &curve))
}

/// Theory command for an inverse temperature.
pub fn theory_command(beta: f64, points: usize) -> Command {
    let c = theta_coefficients(beta);
    Command::Theory {
        a: c.a(),
        b: c.b(),
        beta: Some(beta),
        points,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_settings(d: usize) -> RunSettings {
        let mut config = ModelConfig::square(d, 1.0);
        config.taylor_degree = Some(8);
        RunSettings {
            config,
            master_seed: 5,
            seeds: 2,
            top_k: 3,
            bin_width: 0.1,
        }
    }

    #[test]
    fn figure_names_round_trip() {
        for f in Figure::ALL {
            assert_eq!(f.name().parse::<Figure>().unwrap(), f);
        }
        assert!("nope".parse::<Figure>().is_err());
        assert_eq!(Figure::Poisson.default_beta(), 50.0);
    }

    #[test]
    fn raw_attention_at_beta_zero_is_rank_one() {
        let mut s = small_settings(10);
        s.config.beta = 0.0;
        s.seeds = 1;
        let spectra = sample_spectra(&s, &[ModelKind::A], true).unwrap();
        let v = &spectra[0][0].values;
        assert!((v[0] - 1.0).abs() < 1e-12);
        assert!(v[1..].iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn spectra_independent_of_thread_count() {
        let s = small_settings(30);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let three = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let a = one.install(|| sample_spectra(&s, &ModelKind::ALL, false)).unwrap();
        let b = three.install(|| sample_spectra(&s, &ModelKind::ALL, false)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn summary_counts() {
        let s = small_settings(20);
        let spectra = by_model(&[ModelKind::Yflin], sample_spectra(&s, &[ModelKind::Yflin], false).unwrap());
        let sum = summarize(ModelKind::Yflin, &spectra[0].1, 3).unwrap();
        assert_eq!(sum.max_bulk.len(), 2);
        assert_eq!(sum.mean_top.len(), 3);
        assert!(sum.bulk_moments[0] > 0.0);
    }

    #[test]
    fn invalid_settings_rejected() {
        let mut s = small_settings(10);
        s.seeds = 0;
        assert!(s.validate().is_err());
        let mut s = small_settings(10);
        s.top_k = 10;
        assert!(s.validate().is_err());
        let mut s = small_settings(10);
        s.bin_width = 0.0;
        assert!(s.validate().is_err());
    }
}
