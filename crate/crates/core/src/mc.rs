//! Replicated simulate → fit → studentize experiments.
//!
//! Replication `r` uses the seed [`substream_seed`]`(master_seed, r)`, so a
//! one-replication run is the same computation as one simulate + fit with
//! that seed. Results are collected in replication order; summaries do not
//! depend on the worker count.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::Error;
use crate::exec::{map_indexed, with_workers};
use crate::model::{substream_seed, SamplingDesign, Theta};
use crate::pipeline::{fit_path, PipelineOptions};
use crate::simulator::{
    simulate_regression_path_with, simulate_sde_path_with, DriftTerm, PathSample, RegressorSpec,
};
use crate::student_levy::{DensityTable, GridSpec};

/// Abort when more than this share of replications fail.
pub const MAX_FAILURE_RATE: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    Regression(RegressorSpec),
    Sde(Vec<DriftTerm>),
}

impl Model {
    pub fn q(&self) -> usize {
        match self {
            Model::Regression(r) => r.q(),
            Model::Sde(d) => d.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub theta0: Theta,
    pub design: SamplingDesign,
    pub model: Model,
    pub replications: usize,
    pub master_seed: u64,
    pub workers: usize,
    #[serde(default)]
    pub pipeline: PipelineOptions,
    /// Density grid; the default grid for `(ν₀, 1/n)` when `None`.
    #[serde(default)]
    pub grid: Option<GridSpec>,
}

impl McConfig {
    /// The desk-scale version of the periodic-regressor experiment:
    /// `n = 100, T = 100, B = 10`, `θ₀ = (5, −1, 3, 1)`, 300 replications.
    pub fn desk_scale(master_seed: u64) -> Self {
        Self {
            theta0: Theta::new(vec![5.0, -1.0], 3.0, 1.0),
            design: SamplingDesign::new(100, 100.0, 10.0),
            model: Model::Regression(RegressorSpec::standard_pair()),
            replications: 300,
            master_seed,
            workers: 1,
            pipeline: PipelineOptions::default(),
            grid: None,
        }
    }

    /// Parameter names in studentized-vector order.
    pub fn param_names(&self) -> Vec<String> {
        let mut names: Vec<String> = (1..=self.theta0.q()).map(|k| format!("mu_{k}")).collect();
        names.push("sigma".into());
        names.push("nu".into());
        names
    }
}

/// Outcome of one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replication {
    pub index: usize,
    pub seed: u64,
    /// `μ₁..μ_q, σ, ν`.
    pub estimates: Option<Vec<f64>>,
    pub studentized: Option<Vec<f64>>,
    pub log_sigma: Option<f64>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub left: f64,
    pub right: f64,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub values: Vec<f64>,
    pub mean: f64,
    pub sd: f64,
    pub ks_statistic: f64,
    pub ks_p_value: f64,
    pub histogram: Vec<Bin>,
}

impl ParamSummary {
    fn new(name: String, values: Vec<f64>) -> Self {
        let m = values.len() as f64;
        let mean = values.iter().sum::<f64>() / m;
        let sd = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt()
        } else {
            0.0
        };
        let (d, p) = ks_statistic(&values).unwrap_or((f64::NAN, f64::NAN));
        let histogram = freedman_diaconis(&values);
        Self {
            name,
            values,
            mean,
            sd,
            ks_statistic: d,
            ks_p_value: p,
            histogram,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub config: McConfig,
    pub replications: usize,
    pub failures: usize,
    /// One entry per studentized coordinate, then `log_sigma`.
    pub params: Vec<ParamSummary>,
    pub records: Vec<Replication>,
}

impl McSummary {
    pub fn param(&self, name: &str) -> Option<&ParamSummary> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn successes(&self) -> usize {
        self.replications - self.failures
    }
}

/// Simulate the path of one replication seed.
pub fn simulate_with(
    table: &DensityTable,
    config: &McConfig,
    seed: u64,
) -> Result<PathSample, Error> {
    Ok(match &config.model {
        Model::Regression(spec) => {
            simulate_regression_path_with(table, &config.theta0, &config.design, spec, seed)?
        }
        Model::Sde(drift) => {
            simulate_sde_path_with(table, &config.theta0, drift, &config.design, seed)?
        }
    })
}

/// Build the density table the configuration calls for.
pub fn build_table(config: &McConfig) -> Result<DensityTable, Error> {
    let h = config.design.h();
    let grid = match &config.grid {
        Some(g) => g.clone(),
        None => GridSpec::default_for(config.theta0.nu, h)?,
    };
    Ok(with_workers(config.workers, |exec| {
        DensityTable::build(config.theta0.nu, h, &grid, exec)
    })?)
}

fn replicate(table: &DensityTable, config: &McConfig, index: usize) -> Replication {
    let seed = substream_seed(config.master_seed, index as u64);
    let mut rec = Replication {
        index,
        seed,
        estimates: None,
        studentized: None,
        log_sigma: None,
        failure: None,
    };
    let outcome = simulate_with(table, config, seed).and_then(|path| {
        fit_path(
            &path,
            &config.design,
            Some(&config.theta0),
            &config.pipeline,
        )
    });
    match outcome {
        Err(e) => rec.failure = Some(e.to_string()),
        Ok(fit) => {
            let t = &fit.inference.theta_hat;
            let mut est = t.mu.clone();
            est.push(t.sigma);
            est.push(t.nu);
            rec.estimates = Some(est);
            rec.failure = fit.failure();
            if rec.failure.is_none() {
                let st = fit.inference.studentized.expect("theta0 given");
                rec.studentized = Some(st.values);
                rec.log_sigma = Some(st.log_sigma);
            }
        }
    }
    rec
}

pub fn run_mc(config: &McConfig) -> Result<McSummary, Error> {
    let table = build_table(config)?;
    run_mc_with_table(config, &table)
}

/// Run all replications against a prebuilt table.
pub fn run_mc_with_table(config: &McConfig, table: &DensityTable) -> Result<McSummary, Error> {
    if config.replications == 0 {
        return Err(Error::Mc("replications must be >= 1".into()));
    }
    let records = with_workers(config.workers, |exec| {
        map_indexed(exec, config.replications, |r| replicate(table, config, r))
    });
    let failures = records.iter().filter(|r| r.studentized.is_none()).count();
    if failures as f64 > MAX_FAILURE_RATE * config.replications as f64 {
        let first = records
            .iter()
            .find_map(|r| r.failure.clone())
            .unwrap_or_default();
        return Err(Error::Mc(format!(
            "{failures} of {} replications failed (first: {first})",
            config.replications
        )));
    }
    let mut names = config.param_names();
    names.push("log_sigma".into());
    let params = names
        .into_iter()
        .enumerate()
        .map(|(k, name)| {
            let values: Vec<f64> = records
                .iter()
                .filter_map(|r| {
                    let s = r.studentized.as_ref()?;
                    Some(if k < s.len() { s[k] } else { r.log_sigma? })
                })
                .collect();
            ParamSummary::new(name, values)
        })
        .collect();
    Ok(McSummary {
        config: config.clone(),
        replications: config.replications,
        failures,
        params,
        records,
    })
}

/// `P(K > λ)` for the Kolmogorov distribution.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        let mut cdf = 0.0;
        for k in 1..=20 {
            let a = (2 * k - 1) as f64;
            cdf += (-a * a * std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda)).exp();
        }
        (1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * cdf).clamp(0.0, 1.0)
    } else {
        let mut s = 0.0;
        for k in 1..=100 {
            let kf = k as f64;
            let term = (-2.0 * kf * kf * lambda * lambda).exp();
            s += if k % 2 == 1 { term } else { -term };
            if term < 1e-300 {
                break;
            }
        }
        (2.0 * s).clamp(0.0, 1.0)
    }
}

/// Two-sided KS statistic against N(0, 1) and its asymptotic p-value with
/// Stephens' small-sample correction.
pub fn ks_statistic(values: &[f64]) -> Result<(f64, f64), Error> {
    if values.is_empty() {
        return Err(Error::Mc("KS statistic of an empty sample".into()));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::Mc("KS statistic of a sample containing NaN".into()));
    }
    let normal = Normal::standard();
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let m = sorted.len() as f64;
    let d = sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = normal.cdf(x);
            ((i as f64 + 1.0) / m - f).max(f - i as f64 / m)
        })
        .fold(0.0, f64::max);
    let root = m.sqrt();
    Ok((d, kolmogorov_survival((root + 0.12 + 0.11 / root) * d)))
}

fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let k = pos.floor() as usize;
    let t = pos - k as f64;
    if k + 1 < sorted.len() {
        sorted[k] + t * (sorted[k + 1] - sorted[k])
    } else {
        sorted[k]
    }
}

/// Histogram with Freedman–Diaconis bin width `2·IQR·m^{-1/3}` spanning the
/// sample range (at most 1000 bins).
pub fn freedman_diaconis(values: &[f64]) -> Vec<Bin> {
    if values.is_empty() {
        return Vec::new();
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let width = 2.0 * iqr / (sorted.len() as f64).cbrt();
    if !(hi > lo) || !(width > 0.0) {
        return vec![Bin {
            left: lo - 0.5,
            right: hi + 0.5,
            count: values.len() as u64,
        }];
    }
    let bins = ((hi - lo) / width).ceil().clamp(1.0, 1000.0) as usize;
    let w = (hi - lo) / bins as f64;
    let mut counts = vec![0u64; bins];
    for &v in &sorted {
        let k = (((v - lo) / w).floor() as usize).min(bins - 1);
        counts[k] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(k, count)| Bin {
            left: lo + k as f64 * w,
            right: if k + 1 == bins {
                hi
            } else {
                lo + (k + 1) as f64 * w
            },
            count,
        })
        .collect()
}

/// Shortest round-trip decimal form.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

#[derive(Serialize)]
struct ParamJson<'a> {
    name: &'a str,
    count: usize,
    mean: f64,
    sd: f64,
    ks_statistic: f64,
    ks_p_value: f64,
}

#[derive(Serialize)]
struct SummaryJson<'a> {
    config: &'a McConfig,
    replications: usize,
    failures: usize,
    failure_reasons: Vec<(usize, &'a str)>,
    params: Vec<ParamJson<'a>>,
}

impl McSummary {
    pub fn summary_json(&self) -> String {
        let doc = SummaryJson {
            config: &self.config,
            replications: self.replications,
            failures: self.failures,
            failure_reasons: self
                .records
                .iter()
                .filter_map(|r| r.failure.as_deref().map(|f| (r.index, f)))
                .collect(),
            params: self
                .params
                .iter()
                .map(|p| ParamJson {
                    name: &p.name,
                    count: p.values.len(),
                    mean: p.mean,
                    sd: p.sd,
                    ks_statistic: p.ks_statistic,
                    ks_p_value: p.ks_p_value,
                })
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("plain data serializes") + "\n"
    }

    /// One row per replication; failed replications have empty value cells.
    pub fn studentized_csv(&self) -> String {
        let names: Vec<&str> = self.params.iter().map(|p| p.name.as_str()).collect();
        let mut out = format!("replication,seed,{}\n", names.join(","));
        for r in &self.records {
            let _ = write!(out, "{},{}", r.index, r.seed);
            match (&r.studentized, r.log_sigma) {
                (Some(s), Some(l)) => {
                    for v in s.iter().chain(std::iter::once(&l)) {
                        let _ = write!(out, ",{}", fmt_f64(*v));
                    }
                }
                _ => out.push_str(&",".repeat(names.len())),
            }
            out.push('\n');
        }
        out
    }

    pub fn histogram_csv(&self, name: &str) -> Option<String> {
        let p = self.param(name)?;
        let mut out = String::from("bin_left,bin_right,count\n");
        for b in &p.histogram {
            let _ = writeln!(out, "{},{},{}", fmt_f64(b.left), fmt_f64(b.right), b.count);
        }
        Some(out)
    }

    /// `summary.json`, `studentized.csv` and `hist_<param>.csv` into `dir`.
    pub fn write_outputs(&self, dir: &Path) -> Result<(), Error> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("summary.json"), self.summary_json())?;
        std::fs::write(dir.join("studentized.csv"), self.studentized_csv())?;
        for p in &self.params {
            let csv = self.histogram_csv(&p.name).expect("own parameter");
            std::fs::write(dir.join(format!("hist_{}.csv", p.name)), csv)?;
        }
        Ok(())
    }
}
