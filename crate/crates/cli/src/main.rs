use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::error;

use attnspec::experiments::{self, theory_command, Command, ExperimentManifest, Figure, RunSettings, OUT_DIR_ENV};
use attnspec::io::{with_file, write_json};
use attnspec::models::{ModelConfig, ModelKind};
use attnspec::verify::{run_suite, Suite};
use attnspec::MasterSeed;

/// Spectra of random attention matrices and their linearized models.
#[derive(Parser)]
#[command(name = "attnspec", version)]
struct Cli {
    /// Worker threads; defaults to the number of CPUs.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args, Clone)]
struct Common {
    /// Model dimension d.
    #[arg(long, default_value_t = 1000)]
    d: usize,
    /// Sequence length; defaults to d.
    #[arg(long)]
    ell: Option<usize>,
    /// Query/key dimension; defaults to d.
    #[arg(long)]
    dqk: Option<usize>,
    /// Inverse temperature; defaults to 1 (50 for the poisson figure).
    #[arg(long)]
    beta: Option<f64>,
    /// Number of samples.
    #[arg(long, default_value_t = 10)]
    seeds: usize,
    /// Master seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Constant in the Taylor degree n = ceil(c ln d / ln ln d).
    #[arg(long, default_value_t = 2.0)]
    c: f64,
    #[arg(long, default_value_t = 0.2)]
    delta: f64,
    /// Fixed Taylor degree, overriding c.
    #[arg(long)]
    degree: Option<usize>,
    /// Largest values removed before bulk statistics.
    #[arg(long, default_value_t = 3)]
    top_k: usize,
    #[arg(long, default_value_t = 0.1)]
    bin_width: f64,
    /// Output directory.
    #[arg(long, env = OUT_DIR_ENV, default_value = "attnspec-out")]
    out: PathBuf,
}

impl Common {
    fn settings(&self, default_beta: f64) -> RunSettings {
        RunSettings {
            config: ModelConfig {
                d: self.d,
                ell: self.ell.unwrap_or(self.d),
                d_qk: self.dqk.unwrap_or(self.d),
                beta: self.beta.unwrap_or(default_beta),
                c: self.c,
                delta: self.delta,
                taylor_degree: self.degree,
            },
            master_seed: self.seed,
            seeds: self.seeds,
            top_k: self.top_k,
            bin_width: self.bin_width,
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Squared singular values of one model over several samples.
    Spectrum {
        /// One of A, Aperp, Y, Yf, YQ, YQlin, Yflin.
        #[arg(long)]
        model: ModelKind,
        /// Use the unscaled attention matrix for A and Aperp.
        #[arg(long)]
        raw: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Edge and density of the limiting law.
    Theory {
        #[arg(long, conflicts_with_all = ["a", "b"])]
        beta: Option<f64>,
        #[arg(long, requires = "b")]
        a: Option<f64>,
        #[arg(long, requires = "a")]
        b: Option<f64>,
        /// Density grid points.
        #[arg(long, default_value_t = 400)]
        points: usize,
        #[arg(long, env = OUT_DIR_ENV, default_value = "attnspec-out")]
        out: PathBuf,
    },
    /// Data behind a figure preset: six-models, topk, balance or poisson.
    Figures {
        figure: Figure,
        #[command(flatten)]
        common: Common,
    },
    /// Runs a check suite: interlacing, concentration, bounds, theory or all.
    Verify {
        #[arg(default_value = "all")]
        suite: Suite,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, env = OUT_DIR_ENV, default_value = "attnspec-out")]
        out: PathBuf,
    },
    /// Re-executes a manifest.
    Replay {
        manifest: PathBuf,
        /// Output directory; defaults to the manifest's directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn execute(cmd: Cmd) -> attnspec::Result<bool> {
    match cmd {
        Cmd::Spectrum { model, raw, common } => {
            let m = experiments::run(&Command::Spectrum { model, raw }, &common.settings(1.0), &common.out)?;
            println!("{} files written to {}", m.outputs.len(), common.out.display());
        }
        Cmd::Theory { beta, a, b, points, out } => {
            let command = match (a, b) {
                (Some(a), Some(b)) => Command::Theory { a, b, beta: None, points },
                _ => theory_command(beta.unwrap_or(1.0), points),
            };
            let m = experiments::run(&command, &RunSettings::default(), &out)?;
            println!("{} files written to {}", m.outputs.len(), out.display());
        }
        Cmd::Figures { figure, common } => {
            let settings = common.settings(figure.default_beta());
            let m = experiments::run(&Command::Figures { figure }, &settings, &common.out)?;
            println!("{} files written to {}", m.outputs.len(), common.out.display());
        }
        Cmd::Verify { suite, seed, out } => {
            let report = run_suite(suite, MasterSeed(seed))?;
            for c in &report.checks {
                let tag = if c.passed { "PASS" } else { "FAIL" };
                println!("{tag} [{}] {}: {}", c.suite, c.name, c.detail);
            }
            with_file(&out.join(format!("verify_{suite}.json")), |w| write_json(w, &report))?;
            let failed = report.checks.iter().filter(|c| !c.passed).count();
            println!("{} checks, {failed} failed", report.checks.len());
            return Ok(report.passed);
        }
        Cmd::Replay { manifest, out } => {
            let loaded = ExperimentManifest::load(&manifest)?;
            let dir = out.unwrap_or_else(|| manifest.parent().map(PathBuf::from).unwrap_or_default());
            let m = experiments::replay(&loaded, &dir)?;
            println!("{} files written to {}", m.outputs.len(), dir.display());
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            error!("cannot configure thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    match execute(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            error!("{e}");
            ExitCode::from(2)
        }
    }
}
