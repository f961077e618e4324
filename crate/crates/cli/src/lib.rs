//! Config parsing and subcommand dispatch for the `levy-qla` binary.
//!
//! Every subcommand reads a flat `key = value` file (`--config FILE`) and/or
//! `--key value` flags; flags win. The accepted keys per subcommand are the
//! tables below, which also generate the clap flags.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Arg, ArgAction, Command};
use levy_qla::cqmle::FitOptions;
use levy_qla::io::{path_csv, read_path_csv, table_csv};
use levy_qla::mc::{run_mc, McConfig, Model};
use levy_qla::model::DesignError;
use levy_qla::pipeline::{fit_path, PipelineOptions};
use levy_qla::simulator::{
    default_table, simulate_regression_path_with, simulate_sde_path_with, DriftTerm, OuParams,
    PeriodicTerm, RegressorSpec, Trig,
};
use levy_qla::student_levy::{adaptive_u_max, DensityTable, GridSpec, DEFAULT_TAIL_REACH};
use levy_qla::{exec, SamplingDesign, Theta};
use serde_json::json;

/// How a key without a value is treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fallback {
    Required,
    Optional,
    Value(&'static str),
}

#[derive(Debug, Clone, Copy)]
pub struct Key {
    pub name: &'static str,
    pub default: Fallback,
    pub help: &'static str,
}

const fn key(name: &'static str, default: Fallback, help: &'static str) -> Key {
    Key {
        name,
        default,
        help,
    }
}

use Fallback::{Optional, Required, Value};

pub const DENSITY_KEYS: &[Key] = &[
    key("nu", Required, "tail index, > 0"),
    key("h", Optional, "step size; give h or n"),
    key("n", Optional, "steps per unit time, h = 1/n"),
    key("x_max", Value("50"), "grid half-width"),
    key("points", Value("8192"), "grid points"),
    key("u_points", Value("16384"), "quadrature panels"),
    key(
        "u_max",
        Optional,
        "quadrature cutoff (adaptive when absent)",
    ),
    key("tails", Value("true"), "attach tail nodes beyond the grid"),
    key("workers", Value("1"), "threads for the inversion"),
    key("out", Optional, "output CSV (stdout when absent)"),
];

const MODEL_KEYS: &[Key] = &[
    key("model", Value("regression"), "regression | sde"),
    key("mu", Required, "trend coefficients, comma separated"),
    key("sigma", Required, "scale, > 0"),
    key("nu", Required, "tail index, > 0"),
    key("n", Required, "steps per unit time"),
    key("T", Required, "horizon"),
    key("B", Optional, "thinning horizon, B <= T (defaults to T)"),
    key(
        "regressors",
        Value("cos:5, sin:1"),
        "regression columns: cos:<f>, sin:<f>, ou",
    ),
    key("ou_rate", Value("1"), "OU covariate mean-reversion rate"),
    key("ou_vol", Value("1"), "OU covariate volatility"),
    key("ou_start", Value("0"), "OU covariate start"),
    key(
        "drift",
        Value("neg_tanh"),
        "sde drift terms: zero, neg_tanh, neg_arctan, sin, cos",
    ),
];

const ESTIMATION_KEYS: &[Key] = &[
    key("nu_min", Value("0.05"), "lower bound for nu"),
    key("nu_max", Value("100"), "upper bound for nu"),
    key("level", Value("0.95"), "confidence level"),
    key("tol", Value("1e-8"), "gradient tolerance of the Cauchy fit"),
    key("max_iter", Value("200"), "Newton iteration cap"),
];

pub const SIMULATE_EXTRA: &[Key] = &[
    key("seed", Value("0"), "path seed"),
    key("out", Optional, "output CSV (stdout when absent)"),
];

pub const FIT_EXTRA: &[Key] = &[
    key("input", Required, "path CSV"),
    key("B", Optional, "thinning horizon (overrides the file)"),
    key("out", Optional, "output JSON (stdout when absent)"),
];

pub const MC_EXTRA: &[Key] = &[
    key("reps", Required, "replications"),
    key("seed", Required, "master seed"),
    key("workers", Value("1"), "worker threads"),
    key("out_dir", Value("mc_output"), "output directory"),
];

pub const COMMANDS: &[&str] = &["density", "simulate", "fit", "mc"];

/// Accepted keys of `command`, in help order.
pub fn keys(command: &str) -> Vec<Key> {
    match command {
        "density" => DENSITY_KEYS.to_vec(),
        "simulate" => [MODEL_KEYS, SIMULATE_EXTRA].concat(),
        "fit" => [FIT_EXTRA, ESTIMATION_KEYS].concat(),
        "mc" => [MODEL_KEYS, ESTIMATION_KEYS, MC_EXTRA].concat(),
        _ => Vec::new(),
    }
}

fn about(command: &str) -> &'static str {
    match command {
        "density" => "Tabulate the density and cdf of the rescaled increment h^-1 J_h",
        "simulate" => "Simulate a regression or SDE path",
        "fit" => "Fit a path CSV: Cauchy quasi-likelihood, then Student t tail index",
        "mc" => "Monte Carlo study of the studentized estimators",
        _ => "",
    }
}

/// The clap command tree, flags generated from the key tables.
pub fn command() -> Command {
    let mut root = Command::new("levy-qla")
        .about("Quasi-likelihood estimation for Student-Levy driven models")
        .subcommand_required(true)
        .arg_required_else_help(true);
    for name in COMMANDS {
        let mut sub = Command::new(*name).about(about(name)).arg(
            Arg::new("config")
                .long("config")
                .value_name("FILE")
                .help("flat key = value file; flags override it"),
        );
        for k in keys(name) {
            let help = match k.default {
                Value(v) => format!("{} [default: {v}]", k.help),
                Required => format!("{} [required]", k.help),
                Optional => k.help.to_string(),
            };
            sub = sub.arg(
                Arg::new(k.name)
                    .long(k.name)
                    .value_name("VALUE")
                    .allow_hyphen_values(true)
                    .action(ArgAction::Set)
                    .help(help),
            );
        }
        root = root.subcommand(sub);
    }
    root
}

/// One configuration problem. `line` points into the config file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Issue {
    pub key: Option<String>,
    pub line: Option<usize>,
    pub message: String,
}

impl Issue {
    fn keyed(key: &str, line: Option<usize>, message: impl Into<String>) -> Self {
        Self {
            key: Some(key.to_string()),
            line,
            message: message.into(),
        }
    }
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(l) = self.line {
            write!(f, "line {l}: ")?;
        }
        if let Some(k) = &self.key {
            write!(f, "{k}: ")?;
        }
        f.write_str(&self.message)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration ({} problems)", .0.len())]
    Config(Vec<Issue>),
    #[error("{0}")]
    Run(#[from] levy_qla::Error),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    /// Machine-readable record for stderr.
    pub fn to_json(&self) -> serde_json::Value {
        match self {
            CliError::Config(issues) => json!({"error": {
                "kind": "config",
                "module": "cli",
                "issues": issues.iter().map(|i| json!({
                    "key": i.key,
                    "line": i.line,
                    "message": i.message,
                })).collect::<Vec<_>>(),
            }}),
            CliError::Run(e) => json!({"error": {
                "kind": "runtime",
                "module": e.module(),
                "message": e.to_string(),
            }}),
            CliError::Usage(m) => {
                json!({"error": {"kind": "usage", "module": "cli", "message": m}})
            }
        }
    }
}

fn io_error(e: std::io::Error, what: &Path) -> CliError {
    CliError::Run(levy_qla::Error::Io(format!("{}: {e}", what.display())))
}

/// Where settings come from: an optional file and `--key value` flags.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Source {
    pub file: Option<PathBuf>,
    pub flags: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityJob {
    pub nu: f64,
    pub h: f64,
    pub grid: GridSpec,
    pub workers: usize,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateJob {
    pub theta0: Theta,
    pub design: SamplingDesign,
    pub model: Model,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitJob {
    pub input: PathBuf,
    pub b_n: Option<f64>,
    pub options: PipelineOptions,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McJob {
    pub config: McConfig,
    pub out_dir: PathBuf,
}

/// A validated command.
#[derive(Debug, Clone, PartialEq)]
pub enum RunConfig {
    Density(DensityJob),
    Simulate(SimulateJob),
    Fit(FitJob),
    Mc(McJob),
}

struct Entry {
    value: String,
    line: Option<usize>,
}

/// Typed access to the merged settings; problems accumulate in `issues`.
struct Reader {
    table: Vec<Key>,
    raw: BTreeMap<String, Entry>,
    issues: Vec<Issue>,
}

impl Reader {
    fn line(&self, key: &str) -> Option<usize> {
        self.raw.get(key).and_then(|e| e.line)
    }

    fn given(&self, key: &str) -> bool {
        self.raw.contains_key(key)
    }

    fn text(&mut self, key: &str) -> Option<String> {
        if let Some(e) = self.raw.get(key) {
            return Some(e.value.clone());
        }
        match self.table.iter().find(|k| k.name == key).map(|k| k.default) {
            Some(Value(v)) => Some(v.to_string()),
            Some(Required) => {
                self.issues.push(Issue::keyed(key, None, "is required"));
                None
            }
            _ => None,
        }
    }

    fn parse<T: FromStr>(&mut self, key: &str, what: &str) -> Option<T> {
        let text = self.text(key)?;
        match text.trim().parse::<T>() {
            Ok(v) => Some(v),
            Err(_) => {
                let line = self.line(key);
                self.issues.push(Issue::keyed(
                    key,
                    line,
                    format!("expected {what}, got {text:?}"),
                ));
                None
            }
        }
    }

    fn float(&mut self, key: &str) -> Option<f64> {
        self.parse(key, "a number")
    }

    fn count(&mut self, key: &str) -> Option<usize> {
        self.parse(key, "a non-negative integer")
    }

    fn flag(&mut self, key: &str) -> Option<bool> {
        self.parse(key, "true or false")
    }

    fn floats(&mut self, key: &str) -> Option<Vec<f64>> {
        let text = self.text(key)?;
        let parsed: Result<Vec<f64>, _> =
            text.split(',').map(|s| s.trim().parse::<f64>()).collect();
        match parsed {
            Ok(v) => Some(v),
            Err(_) => {
                let line = self.line(key);
                self.issues.push(Issue::keyed(
                    key,
                    line,
                    format!("expected comma-separated numbers, got {text:?}"),
                ));
                None
            }
        }
    }

    fn check(&mut self, ok: bool, key: &str, message: impl Into<String>) {
        if !ok {
            let line = self.line(key);
            self.issues.push(Issue::keyed(key, line, message));
        }
    }

    fn design_errors(&mut self, errors: Vec<DesignError>) {
        for e in errors {
            let key = if e.key == "frequencies" {
                "regressors"
            } else {
                e.key
            };
            let line = self.line(key);
            self.issues.push(Issue::keyed(key, line, e.message));
        }
    }
}

/// Parse `key = value` lines. Blank lines and `#` comments are skipped.
fn read_file(
    path: &Path,
    table: &[Key],
    raw: &mut BTreeMap<String, Entry>,
    issues: &mut Vec<Issue>,
) {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            issues.push(Issue::keyed(
                "config",
                None,
                format!("{}: {e}", path.display()),
            ));
            return;
        }
    };
    for (i, raw_line) in text.lines().enumerate() {
        let line = raw_line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            issues.push(Issue {
                key: None,
                line: Some(i + 1),
                message: format!("expected key = value, got {line:?}"),
            });
            continue;
        };
        let k = k.trim();
        if !table.iter().any(|t| t.name == k) {
            issues.push(Issue::keyed(k, Some(i + 1), "unknown key"));
        } else if raw.contains_key(k) {
            issues.push(Issue::keyed(k, Some(i + 1), "given twice"));
        } else {
            raw.insert(
                k.to_string(),
                Entry {
                    value: v.trim().to_string(),
                    line: Some(i + 1),
                },
            );
        }
    }
}

/// Merge file and flags for `command` and validate everything, reporting
/// all problems at once.
pub fn parse_config(command: &str, source: &Source) -> Result<RunConfig, CliError> {
    let table = keys(command);
    if table.is_empty() {
        return Err(CliError::Usage(format!("unknown command {command:?}")));
    }
    let mut raw = BTreeMap::new();
    let mut issues = Vec::new();
    if let Some(f) = &source.file {
        read_file(f, &table, &mut raw, &mut issues);
    }
    for (k, v) in &source.flags {
        if table.iter().any(|t| t.name == k) {
            raw.insert(
                k.clone(),
                Entry {
                    value: v.clone(),
                    line: None,
                },
            );
        } else {
            issues.push(Issue::keyed(k, None, "unknown key"));
        }
    }
    let mut r = Reader { table, raw, issues };
    let config = match command {
        "density" => density_config(&mut r).map(RunConfig::Density),
        "simulate" => simulate_config(&mut r).map(RunConfig::Simulate),
        "fit" => fit_config(&mut r).map(RunConfig::Fit),
        _ => mc_config(&mut r).map(RunConfig::Mc),
    };
    match config {
        Some(c) if r.issues.is_empty() => Ok(c),
        _ => Err(CliError::Config(r.issues)),
    }
}

fn density_config(r: &mut Reader) -> Option<DensityJob> {
    let nu = r.float("nu");
    let h = match (r.given("h"), r.given("n")) {
        (true, true) => {
            r.check(false, "h", "give h or n, not both");
            None
        }
        (true, false) => r.float("h"),
        (false, true) => r.count("n").map(|n| 1.0 / n as f64),
        (false, false) => {
            r.check(false, "h", "one of h or n is required");
            None
        }
    };
    let x_max = r.float("x_max");
    let points = r.count("points");
    let u_points = r.count("u_points");
    let u_max = if r.given("u_max") {
        r.float("u_max")
    } else {
        None
    };
    let tails = r.flag("tails");
    let workers = r.count("workers");
    let out = r.text("out").map(PathBuf::from);
    if let Some(nu) = nu {
        r.check(
            nu.is_finite() && nu > 0.0,
            "nu",
            format!("must be > 0, got {nu}"),
        );
    }
    if let Some(h) = h {
        let key = if r.given("n") { "n" } else { "h" };
        r.check(
            h.is_finite() && h > 0.0 && h <= 1.0,
            key,
            format!("step size must lie in (0, 1], got {h}"),
        );
    }
    if let Some(x) = x_max {
        r.check(
            x.is_finite() && x > 0.0,
            "x_max",
            format!("must be > 0, got {x}"),
        );
    }
    if let Some(p) = points {
        r.check(p >= 64, "points", format!("must be >= 64, got {p}"));
    }
    if let Some(p) = u_points {
        r.check(p >= 16, "u_points", format!("must be >= 16, got {p}"));
    }
    if let Some(u) = u_max {
        r.check(
            u.is_finite() && u > 0.0,
            "u_max",
            format!("must be > 0, got {u}"),
        );
    }
    if let Some(w) = workers {
        r.check(w >= 1, "workers", "must be >= 1");
    }
    if !r.issues.is_empty() {
        return None;
    }
    let (nu, h) = (nu?, h?);
    let u_max = match u_max {
        Some(u) => u,
        None => match adaptive_u_max(nu, h) {
            Ok(u) => u,
            Err(e) => {
                r.check(false, "nu", e.to_string());
                return None;
            }
        },
    };
    let mut grid = GridSpec::symmetric(x_max?, points?, u_max, u_points?);
    if tails? {
        grid = grid.with_tails(DEFAULT_TAIL_REACH / h);
    }
    if let Err(e) = grid.validate() {
        r.check(false, "points", e.to_string());
    }
    Some(DensityJob {
        nu,
        h,
        grid,
        workers: workers?,
        out,
    })
}

fn parse_regressors(r: &mut Reader) -> Option<RegressorSpec> {
    let text = r.text("regressors")?;
    let mut periodic = Vec::new();
    let mut ou = false;
    let mut bad = Vec::new();
    let items: Vec<&str> = text
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect();
    for (i, item) in items.iter().enumerate() {
        if *item == "ou" {
            if i + 1 != items.len() {
                bad.push("ou must be the last regressor".to_string());
            }
            ou = true;
            continue;
        }
        let parsed = item.split_once(':').and_then(|(kind, f)| {
            let kind = match kind.trim() {
                "cos" => Trig::Cos,
                "sin" => Trig::Sin,
                _ => return None,
            };
            f.trim()
                .parse::<f64>()
                .ok()
                .map(|frequency| PeriodicTerm { kind, frequency })
        });
        match parsed {
            Some(p) => periodic.push(p),
            None => bad.push(format!(
                "cannot read {item:?}; expected cos:<f>, sin:<f> or ou"
            )),
        }
    }
    for b in bad.iter() {
        r.check(false, "regressors", b.clone());
    }
    if !bad.is_empty() {
        return None;
    }
    let diffusion = if ou {
        let (rate, volatility, start) =
            (r.float("ou_rate"), r.float("ou_vol"), r.float("ou_start"));
        Some(OuParams {
            rate: rate?,
            volatility: volatility?,
            start: start?,
        })
    } else {
        None
    };
    Some(RegressorSpec {
        periodic,
        diffusion,
    })
}

fn parse_drift(r: &mut Reader) -> Option<Vec<DriftTerm>> {
    let text = r.text("drift")?;
    let mut out = Vec::new();
    for name in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match DriftTerm::parse(name) {
            Some(d) => out.push(d),
            None => r.check(false, "drift", format!("unknown drift term {name:?}")),
        }
    }
    Some(out)
}

/// θ₀, design and model shared by `simulate` and `mc`.
fn model_config(r: &mut Reader) -> Option<(Theta, SamplingDesign, Model)> {
    let kind = r.text("model")?;
    let mu = r.floats("mu");
    let sigma = r.float("sigma");
    let nu = r.float("nu");
    let n = r.count("n");
    let t_n = r.float("T");
    let b_n = if r.given("B") { r.float("B") } else { t_n };
    let model = match kind.as_str() {
        "regression" => {
            r.check(!r.given("drift"), "drift", "applies only to model = sde");
            parse_regressors(r).map(Model::Regression)
        }
        "sde" => {
            for k in ["regressors", "ou_rate", "ou_vol", "ou_start"] {
                r.check(!r.given(k), k, "applies only to model = regression");
            }
            parse_drift(r).map(Model::Sde)
        }
        other => {
            r.check(
                false,
                "model",
                format!("expected regression or sde, got {other:?}"),
            );
            None
        }
    };
    let (sigma, nu) = (sigma?, nu?);
    let theta = mu.map(|mu| Theta::new(mu, sigma, nu));
    if let Some(t) = &theta {
        r.design_errors(t.problems());
    } else {
        // still report sigma and nu
        r.design_errors(Theta::new(vec![0.0], sigma, nu).problems());
    }
    let design = SamplingDesign::new(n?, t_n?, b_n?);
    let model = model?;
    match &model {
        Model::Regression(spec) => r.design_errors(spec.problems()),
        Model::Sde(d) if d.is_empty() => {
            r.check(false, "drift", "at least one drift term is required")
        }
        Model::Sde(_) => {}
    }
    if let Some(t) = &theta {
        if t.q() != model.q() && model.q() > 0 {
            r.check(
                false,
                "mu",
                format!(
                    "has {} components but the model has {} regressors",
                    t.q(),
                    model.q()
                ),
            );
        }
    }
    r.design_errors(design.problems(model.q()));
    Some((theta?, design, model))
}

fn pipeline_options(r: &mut Reader) -> Option<PipelineOptions> {
    let nu_min = r.float("nu_min");
    let nu_max = r.float("nu_max");
    let level = r.float("level");
    let tol = r.float("tol");
    let max_iter = r.count("max_iter");
    if let (Some(lo), Some(hi)) = (nu_min, nu_max) {
        r.check(
            lo.is_finite() && lo > 0.0,
            "nu_min",
            format!("must be > 0, got {lo}"),
        );
        r.check(
            hi.is_finite() && hi > lo,
            "nu_max",
            format!("must exceed nu_min = {lo}, got {hi}"),
        );
    }
    if let Some(l) = level {
        r.check(
            l > 0.0 && l < 1.0,
            "level",
            format!("must lie in (0, 1), got {l}"),
        );
    }
    if let Some(t) = tol {
        r.check(
            t.is_finite() && t > 0.0,
            "tol",
            format!("must be > 0, got {t}"),
        );
    }
    if let Some(m) = max_iter {
        r.check(m >= 1, "max_iter", "must be >= 1");
    }
    Some(PipelineOptions {
        fit: FitOptions {
            tol: tol?,
            max_iter: max_iter?,
            ..FitOptions::default()
        },
        nu_bounds: (nu_min?, nu_max?),
        level: level?,
        init: None,
    })
}

fn simulate_config(r: &mut Reader) -> Option<SimulateJob> {
    let model = model_config(r);
    let seed = r.parse::<u64>("seed", "an unsigned integer");
    let out = r.text("out").map(PathBuf::from);
    let (theta0, design, model) = model?;
    Some(SimulateJob {
        theta0,
        design,
        model,
        seed: seed?,
        out,
    })
}

fn fit_config(r: &mut Reader) -> Option<FitJob> {
    let input = r.text("input").map(PathBuf::from);
    let b_n = if r.given("B") { r.float("B") } else { None };
    if let Some(b) = b_n {
        r.check(
            b.is_finite() && b > 0.0,
            "B",
            format!("must be > 0, got {b}"),
        );
    }
    let out = r.text("out").map(PathBuf::from);
    let options = pipeline_options(r);
    Some(FitJob {
        input: input?,
        b_n,
        options: options?,
        out,
    })
}

fn mc_config(r: &mut Reader) -> Option<McJob> {
    let model = model_config(r);
    let pipeline = pipeline_options(r);
    let reps = r.count("reps");
    let seed = r.parse::<u64>("seed", "an unsigned integer");
    let workers = r.count("workers");
    let out_dir = r.text("out_dir").map(PathBuf::from);
    if let Some(n) = reps {
        r.check(n >= 1, "reps", "must be >= 1");
    }
    if let Some(w) = workers {
        r.check(w >= 1, "workers", "must be >= 1");
    }
    let (theta0, design, model) = model?;
    Some(McJob {
        config: McConfig {
            theta0,
            design,
            model,
            replications: reps?,
            master_seed: seed?,
            workers: workers?,
            pipeline: pipeline?,
            grid: None,
        },
        out_dir: out_dir?,
    })
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| io_error(e, p)),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| io_error(e, Path::new("<stdout>")))
        }
    }
}

/// Run a validated command, writing its artifacts.
pub fn dispatch(config: &RunConfig) -> Result<(), CliError> {
    match config {
        RunConfig::Density(job) => {
            let table = exec::with_workers(job.workers, |e| {
                DensityTable::build(job.nu, job.h, &job.grid, e)
            })
            .map_err(levy_qla::Error::from)?;
            emit(&job.out, &table_csv(&table))
        }
        RunConfig::Simulate(job) => {
            let table = default_table(job.theta0.nu, &job.design).map_err(levy_qla::Error::from)?;
            let path = match &job.model {
                Model::Regression(spec) => {
                    simulate_regression_path_with(&table, &job.theta0, &job.design, spec, job.seed)
                }
                Model::Sde(drift) => {
                    simulate_sde_path_with(&table, &job.theta0, drift, &job.design, job.seed)
                }
            }
            .map_err(levy_qla::Error::from)?;
            emit(
                &job.out,
                &path_csv(&path, &[("seed", job.seed.to_string())]),
            )
        }
        RunConfig::Fit(job) => {
            let text = std::fs::read_to_string(&job.input).map_err(|e| io_error(e, &job.input))?;
            let path = read_path_csv(&text)?;
            let mut design = path.design;
            if let Some(b) = job.b_n {
                design.b_n = b;
            }
            let problems = design.problems(path.q());
            if !problems.is_empty() {
                return Err(CliError::Config(
                    problems
                        .into_iter()
                        .map(|e| Issue::keyed(e.key, None, e.message))
                        .collect(),
                ));
            }
            let fit = fit_path(&path, &design, path.truth.as_ref(), &job.options)?;
            let record = json!({
                "input": job.input.display().to_string(),
                "design": design,
                "truth": path.truth,
                "converged": fit.ok(),
                "failure": fit.failure(),
                "fit": fit,
            });
            let mut text = serde_json::to_string_pretty(&record).expect("serializable");
            text.push('\n');
            emit(&job.out, &text)
        }
        RunConfig::Mc(job) => {
            let summary = run_mc(&job.config)?;
            summary.write_outputs(&job.out_dir)?;
            Ok(())
        }
    }
}

/// Full command line to exit status. Errors go to stderr as one JSON line.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion)
                || e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand
            {
                let _ = e.print();
                return if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand {
                    2
                } else {
                    0
                };
            }
            return report(&CliError::Usage(e.render().to_string().trim().to_string()));
        }
    };
    let (name, sub) = matches.subcommand().expect("subcommand required");
    let mut source = Source {
        file: sub.get_one::<String>("config").map(PathBuf::from),
        flags: Vec::new(),
    };
    for k in keys(name) {
        if let Some(v) = sub.get_one::<String>(k.name) {
            source.flags.push((k.name.to_string(), v.clone()));
        }
    }
    match parse_config(name, &source).and_then(|c| dispatch(&c)) {
        Ok(()) => 0,
        Err(e) => report(&e),
    }
}

fn report(e: &CliError) -> i32 {
    eprintln!("{}", e.to_json());
    match e {
        CliError::Usage(_) => 2,
        CliError::Config(_) => 2,
        CliError::Run(_) => 1,
    }
}
