//! Self-check suites behind `attnspec verify`.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{
    approximation_bound, concentration_ladder, gaussian_mean_gap, signal_noise_crossover, tail_fraction,
    truncated_conditional_mean,
};
use crate::ensembles::MasterSeed;
use crate::error::{Error, Result};
use crate::freeprob::{k_second_derivative, limit_moments, marchenko_pastur_reference, solve_edge, BulkLaw};
use crate::models::{taylor_degree, theta_coefficients, MatrixSample, ModelConfig, ModelKind};
use crate::spectra::{check_interlacing, perron_structure, squared_singular_values};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Interlacing,
    Concentration,
    Bounds,
    Theory,
    All,
}

impl Suite {
    pub const ALL: [Suite; 5] = [Suite::Interlacing, Suite::Concentration, Suite::Bounds, Suite::Theory, Suite::All];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Interlacing => "interlacing",
            Suite::Concentration => "concentration",
            Suite::Bounds => "bounds",
            Suite::Theory => "theory",
            Suite::All => "all",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::UnknownModel(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub suite: Suite,
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub suite: Suite,
    pub master_seed: u64,
    pub passed: bool,
    pub checks: Vec<Check>,
}

struct Checks {
    suite: Suite,
    list: Vec<Check>,
}

impl Checks {
    fn new(suite: Suite) -> Self {
        Self { suite, list: Vec::new() }
    }

    fn push(&mut self, name: impl Into<String>, passed: bool, detail: String) {
        self.list.push(Check {
            suite: self.suite,
            name: name.into(),
            passed,
            detail,
        });
    }
}

/// Runs one suite, or every suite for [`Suite::All`].
pub fn run_suite(suite: Suite, master: MasterSeed) -> Result<VerifyReport> {
    let checks = match suite {
        Suite::Interlacing => interlacing(master)?,
        Suite::Concentration => concentration(master)?,
        Suite::Bounds => bounds()?,
        Suite::Theory => theory()?,
        Suite::All => {
            let mut all = interlacing(master)?;
            all.extend(concentration(master)?);
            all.extend(bounds()?);
            all.extend(theory()?);
            all
        }
    };
    Ok(VerifyReport {
        suite,
        master_seed: master.0,
        passed: checks.iter().all(|c| c.passed),
        checks,
    })
}

fn interlacing(master: MasterSeed) -> Result<Vec<Check>> {
    let mut c = Checks::new(Suite::Interlacing);
    let cfg = ModelConfig::square(200, 1.0);
    let reports = (0..5u64)
        .into_par_iter()
        .map(|idx| {
            let s = MatrixSample::draw(&cfg, master, idx)?;
            let y = s.model(ModelKind::Y)?;
            let yf = s.model(ModelKind::Yf)?;
            let (sy, syf) = (squared_singular_values(&y)?, squared_singular_values(&yf)?);
            let trace_gap = (sy.values.iter().sum::<f64>() - y.norm_squared()).abs() / y.norm_squared();
            Ok((idx, check_interlacing(&sy, &syf)?, trace_gap))
        })
        .collect::<Result<Vec<_>>>()?;
    for (idx, r, gap) in reports {
        c.push(
            format!("interlacing d=200 sample {idx}"),
            r.passed,
            format!("violations {} first {:?}", r.violations, r.first_violation),
        );
        c.push(format!("trace identity sample {idx}"), gap < 1e-9, format!("relative gap {gap:.3e}"));
    }
    let cfg = ModelConfig::square(500, 1.0);
    let s = MatrixSample::draw(&cfg, master, 0)?;
    let p = perron_structure(s.a());
    c.push(
        "perron structure d=500",
        (0.9..=1.1).contains(&p.s1) && p.left_overlap >= 0.99 && p.right_overlap >= 0.99,
        format!("s1 {:.6} overlaps {:.6} {:.6}", p.s1, p.left_overlap, p.right_overlap),
    );
    Ok(c.list)
}

fn concentration(master: MasterSeed) -> Result<Vec<Check>> {
    let mut c = Checks::new(Suite::Concentration);
    let base = ModelConfig::square(250, 1.0);
    let ladder = concentration_ladder(&base, &[250, 500, 1000], master, 10)?;
    let medians: Vec<f64> = ladder.iter().map(|r| r.median_max_deviation).collect();
    c.push(
        "median deviation decreases along d = 250, 500, 1000",
        medians.windows(2).all(|w| w[1] < w[0]),
        format!("medians {medians:?}"),
    );
    let ratio = medians[0] / medians[2];
    c.push(
        "deviation ratio d=250 over d=1000 in [1.4, 2.9]",
        (1.4..=2.9).contains(&ratio),
        format!("ratio {ratio:.4}"),
    );
    let worst = ladder[2].per_seed.iter().map(|s| s.max_row_deviation).fold(0.0, f64::max);
    c.push("deviation below 0.5 at d=1000", worst < 0.5, format!("max {worst:.4}"));
    let cfg = ModelConfig::square(1000, 1.0);
    for k in [3.0, 4.0] {
        let frac = tail_fraction(&cfg, master, 3, k)?;
        let bound = 2.0 * (-0.5 * k * k).exp();
        c.push(format!("score tail P(|S| > {k})"), frac <= bound, format!("{frac:.3e} <= {bound:.3e}"));
    }
    Ok(c.list)
}

fn bounds() -> Result<Vec<Check>> {
    let mut c = Checks::new(Suite::Bounds);
    for k in [1.0, 2.0, 3.0] {
        for n in [8, 12, 16] {
            let r = approximation_bound(1.0, k, n)?;
            c.push(
                format!("f vs Q_n beta=1 K={k} n={n}"),
                r.holds(),
                format!(
                    "sup {:.3e} <= {:.3e}; taylor {:.3e} <= {:.3e}",
                    r.sup_error, r.bound, r.taylor_sup, r.taylor_bound
                ),
            );
        }
    }
    let mut worst: f64 = 0.0;
    for n in 1..=60 {
        for i in 1..=20 {
            worst = worst.max(gaussian_mean_gap(0.1 * i as f64, n)?.discrepancy());
        }
    }
    c.push("mean gap identity n <= 60, beta <= 2", worst < 1e-12, format!("max discrepancy {worst:.3e}"));
    let n = taylor_degree(2.0, 1000)?;
    c.push("taylor degree c=2 d=1000", n == 8, format!("n = {n}"));
    let l = truncated_conditional_mean(50.0, 1.0, 1.0)?;
    let gap = (l - 0.5f64.exp()).abs();
    c.push("truncated mean K=50 limit", gap < 1e-10, format!("gap {gap:.3e}"));
    Ok(c.list)
}

fn theory() -> Result<Vec<Check>> {
    let mut c = Checks::new(Suite::Theory);
    let mut strict = true;
    let mut convex = true;
    for i in 1..=20 {
        let coeffs = theta_coefficients(0.1 * i as f64);
        let (a, b) = (coeffs.a(), coeffs.b());
        let e = solve_edge(a, b)?;
        strict &= e.edge > 2.0 * (a * a + b * b).sqrt() && e.edge_squared > 4.0 * coeffs.theta1;
        for j in 1..100 {
            convex &= k_second_derivative(j as f64 / 100.0 / b, a, b)? > 0.0;
        }
    }
    c.push("strict edge bound on beta in [0.1, 2]", strict, String::new());
    c.push("K convex on its domain", convex, String::new());
    let e = solve_edge(theta_coefficients(1.0).a(), 1.0)?;
    c.push(
        "edge squared at beta=1",
        (e.edge_squared - 9.009).abs() < 1e-2 && e.edge_squared > 4.0 * (std::f64::consts::E - 1.0),
        format!("{:.6}", e.edge_squared),
    );
    for beta in [0.5, 1.0, 1.5] {
        let law = BulkLaw::from_coefficients(&theta_coefficients(beta))?;
        let mass = law.mass()?;
        let squared = law.squared_mass()?;
        let edge = law.support_edge()?;
        let e2 = law.edge().edge_squared;
        c.push(format!("density mass beta={beta}"), (mass - 1.0).abs() < 1e-6, format!("{mass:.12}"));
        c.push(
            format!("push-forward mass beta={beta}"),
            (mass - squared).abs() < 1e-8,
            format!("{:.3e}", (mass - squared).abs()),
        );
        c.push(
            format!("support edge beta={beta}"),
            (edge * edge - e2).abs() < 1e-3,
            format!("{:.6} vs {:.6}", edge * edge, e2),
        );
    }
    let semi = BulkLaw::new(1.0, 0.0)?;
    let mut worst: f64 = 0.0;
    for i in 1..40 {
        let t = 0.1 * i as f64;
        let exact = (4.0 - t).sqrt() / (2.0 * std::f64::consts::PI * t.sqrt());
        worst = worst.max((semi.squared_density(t)? - exact).abs());
    }
    c.push("semicircle reduction", worst < 1e-6, format!("max error {worst:.3e}"));
    let fc = BulkLaw::new(0.0, 1.0)?;
    for (q, target) in [(1, 1.0), (2, 3.0), (3, 12.0)] {
        let m = fc.moment_by_quadrature(q)?;
        c.push(format!("Fuss-Catalan moment q={q}"), (m - target).abs() < 1e-3, format!("{m:.8}"));
    }
    for beta in [0.5, 1.0, 1.5, 2.0] {
        let co = theta_coefficients(beta);
        let dev = limit_moments(co.a(), co.b(), 2)? - marchenko_pastur_reference(co.theta1)?.m2;
        let err = (dev - co.theta2 * co.theta2).abs();
        c.push(format!("MP deviation identity beta={beta}"), err < 1e-12 * dev.max(1.0), format!("{err:.3e}"));
    }
    let b = signal_noise_crossover();
    c.push("signal-noise crossover", (b - 1.1209).abs() < 1e-3, format!("{b:.6}"));
    Ok(c.list)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names() {
        for s in Suite::ALL {
            assert_eq!(s.name().parse::<Suite>().unwrap(), s);
        }
        assert!("x".parse::<Suite>().is_err());
    }

    #[test]
    fn bounds_suite_passes() {
        let r = run_suite(Suite::Bounds, MasterSeed(0)).unwrap();
        assert!(r.passed, "{r:?}");
        assert!(r.checks.len() >= 12);
    }
}
