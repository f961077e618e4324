//! Synthetic observation paths: linear regression on deterministic periodic
//! regressors (optionally plus an integrated Ornstein–Uhlenbeck covariate),
//! and the Markov variant `dY = μ·b(Y) dt + σ dJ` by Euler stepping.
//!
//! All Lévy increments come from one [`DensityTable`] for `(ν₀, 1/n)`: each
//! step adds `h` times an inverse-CDF draw of `h⁻¹J_h`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{component_rng, Component, DesignError, SamplingDesign, Theta};
use crate::student_levy::{DensityTable, GridSpec, LawError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid simulation input: {}", join_problems(.0))]
    Invalid(Vec<DesignError>),
    #[error(
        "density table is for (nu = {table_nu}, h = {table_h}), path needs (nu = {nu}, h = {h})"
    )]
    TableMismatch {
        table_nu: f64,
        table_h: f64,
        nu: f64,
        h: f64,
    },
    #[error(transparent)]
    Law(#[from] LawError),
}

fn join_problems(p: &[DesignError]) -> String {
    p.iter()
        .map(|e| e.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Trig {
    Cos,
    Sin,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodicTerm {
    pub kind: Trig,
    pub frequency: f64,
}

impl PeriodicTerm {
    pub fn eval(&self, t: f64) -> f64 {
        match self.kind {
            Trig::Cos => (self.frequency * t).cos(),
            Trig::Sin => (self.frequency * t).sin(),
        }
    }
}

/// `dX' = -rate·X' dt + volatility·dw`, `X'_0 = start`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OuParams {
    pub rate: f64,
    pub volatility: f64,
    pub start: f64,
}

/// Regressor columns: the periodic terms in order, then the integrated OU
/// covariate if present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressorSpec {
    pub periodic: Vec<PeriodicTerm>,
    pub diffusion: Option<OuParams>,
}

impl RegressorSpec {
    /// `(cos(f₁t), sin(f₂t))`.
    pub fn periodic_pair(f1: f64, f2: f64) -> Self {
        Self {
            periodic: vec![
                PeriodicTerm {
                    kind: Trig::Cos,
                    frequency: f1,
                },
                PeriodicTerm {
                    kind: Trig::Sin,
                    frequency: f2,
                },
            ],
            diffusion: None,
        }
    }

    /// `(cos 5t, sin t)`.
    pub fn standard_pair() -> Self {
        Self::periodic_pair(5.0, 1.0)
    }

    pub fn with_diffusion(mut self, ou: OuParams) -> Self {
        self.diffusion = Some(ou);
        self
    }

    pub fn q(&self) -> usize {
        self.periodic.len() + usize::from(self.diffusion.is_some())
    }

    pub fn problems(&self) -> Vec<DesignError> {
        let mut out = Vec::new();
        if self.q() == 0 {
            out.push(DesignError::new(
                "regressors",
                "at least one regressor is required",
            ));
        }
        if self
            .periodic
            .iter()
            .any(|p| !(p.frequency.is_finite() && p.frequency > 0.0))
        {
            out.push(DesignError::new(
                "frequencies",
                "periodic frequencies must be positive",
            ));
        }
        if let Some(ou) = &self.diffusion {
            out.extend(ou_problems(ou, false));
        }
        out
    }
}

fn ou_problems(ou: &OuParams, allow_zero_vol: bool) -> Vec<DesignError> {
    let mut out = Vec::new();
    if !(ou.rate.is_finite() && ou.rate > 0.0) {
        out.push(DesignError::new(
            "ou_rate",
            format!("must be > 0, got {}", ou.rate),
        ));
    }
    let vol_ok = ou.volatility.is_finite()
        && (ou.volatility > 0.0 || (allow_zero_vol && ou.volatility == 0.0));
    if !vol_ok {
        out.push(DesignError::new(
            "ou_vol",
            format!("must be > 0, got {}", ou.volatility),
        ));
    }
    if !ou.start.is_finite() {
        out.push(DesignError::new("ou_start", "must be finite"));
    }
    out
}

/// Bounded drift components with bounded derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftTerm {
    Zero,
    NegTanh,
    NegArctan,
    Sin,
    Cos,
}

impl DriftTerm {
    pub fn eval(&self, y: f64) -> f64 {
        match self {
            DriftTerm::Zero => 0.0,
            DriftTerm::NegTanh => -y.tanh(),
            DriftTerm::NegArctan => -y.atan(),
            DriftTerm::Sin => y.sin(),
            DriftTerm::Cos => y.cos(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DriftTerm::Zero => "zero",
            DriftTerm::NegTanh => "neg_tanh",
            DriftTerm::NegArctan => "neg_arctan",
            DriftTerm::Sin => "sin",
            DriftTerm::Cos => "cos",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        [
            Self::Zero,
            Self::NegTanh,
            Self::NegArctan,
            Self::Sin,
            Self::Cos,
        ]
        .into_iter()
        .find(|d| d.name() == name)
    }
}

/// Whether a path stores regressor levels `X_t` or drift evaluations `b(Y_t)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PathKind {
    Levels,
    Drift,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSample {
    pub design: SamplingDesign,
    pub kind: PathKind,
    pub times: Vec<f64>,
    /// One row of length `q` per time.
    pub covariates: Vec<Vec<f64>>,
    pub responses: Vec<f64>,
    pub truth: Option<Theta>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl PathSample {
    pub fn q(&self) -> usize {
        self.covariates.first().map_or(0, Vec::len)
    }

    /// Number of steps (one less than the number of observations).
    pub fn steps(&self) -> usize {
        self.responses.len().saturating_sub(1)
    }

    /// Covariate increment multiplying `μ` over steps `a+1..=b`: `X_b - X_a`
    /// for levels, `h Σ_{k=a}^{b-1} b(Y_k)` for drift paths.
    pub fn covariate_change(&self, a: usize, b: usize, out: &mut [f64]) {
        match self.kind {
            PathKind::Levels => {
                for (o, (xb, xa)) in out
                    .iter_mut()
                    .zip(self.covariates[b].iter().zip(&self.covariates[a]))
                {
                    *o = xb - xa;
                }
            }
            PathKind::Drift => {
                let h = self.design.h();
                out.fill(0.0);
                for row in &self.covariates[a..b] {
                    for (o, v) in out.iter_mut().zip(row) {
                        *o += v;
                    }
                }
                for o in out.iter_mut() {
                    *o *= h;
                }
            }
        }
    }

    pub fn response_change(&self, a: usize, b: usize) -> f64 {
        self.responses[b] - self.responses[a]
    }

    /// First `steps` steps of the path as a path of its own.
    pub fn truncated(&self, steps: usize) -> PathSample {
        let keep = steps.min(self.steps()) + 1;
        let mut design = self.design;
        design.t_n = (keep - 1) as f64 / design.n as f64;
        design.b_n = design.b_n.min(design.t_n);
        PathSample {
            design,
            kind: self.kind,
            times: self.times[..keep].to_vec(),
            covariates: self.covariates[..keep].to_vec(),
            responses: self.responses[..keep].to_vec(),
            truth: self.truth.clone(),
            warnings: self.warnings.clone(),
        }
    }

    pub fn problems(&self) -> Vec<DesignError> {
        let mut out = Vec::new();
        let len = self.responses.len();
        if len < 2 {
            out.push(DesignError::new("path", "needs at least two observations"));
        }
        if self.times.len() != len || self.covariates.len() != len {
            out.push(DesignError::new(
                "path",
                "times, covariates and responses differ in length",
            ));
        }
        let q = self.q();
        if q == 0 || self.covariates.iter().any(|r| r.len() != q) {
            out.push(DesignError::new(
                "path",
                "covariate rows must share a positive width",
            ));
        }
        if self.times.windows(2).any(|w| !(w[1] > w[0])) {
            out.push(DesignError::new(
                "path",
                "times must be strictly increasing",
            ));
        }
        if self
            .responses
            .iter()
            .chain(self.covariates.iter().flatten())
            .any(|v| !v.is_finite())
        {
            out.push(DesignError::new("path", "non-finite value"));
        }
        out
    }
}

fn times(design: &SamplingDesign) -> Vec<f64> {
    let n = design.n as f64;
    (0..=design.steps()).map(|j| j as f64 / n).collect()
}

fn check_table(table: &DensityTable, nu: f64, design: &SamplingDesign) -> Result<(), SimError> {
    let h = design.h();
    if table.nu() != nu || (table.h() - h).abs() > 1e-12 * h {
        return Err(SimError::TableMismatch {
            table_nu: table.nu(),
            table_h: table.h(),
            nu,
            h,
        });
    }
    Ok(())
}

/// Default-grid table for `(ν, h)`.
pub fn default_table(nu: f64, design: &SamplingDesign) -> Result<DensityTable, SimError> {
    let h = design.h();
    let grid = GridSpec::default_for(nu, h)?;
    Ok(DensityTable::build(nu, h, &grid, Default::default())?)
}

/// `J_0 = 0, J_j = J_{j-1} + h·draw_j` for `j = 1..=steps`.
pub fn levy_path(table: &DensityTable, steps: usize, seed: u64) -> Vec<f64> {
    let h = table.h();
    let mut rng = component_rng(seed, Component::Levy);
    let mut path = Vec::with_capacity(steps + 1);
    let mut j = 0.0;
    path.push(j);
    for _ in 0..steps {
        j += h * table.draw(&mut rng);
        path.push(j);
    }
    path
}

/// Euler–Maruyama velocity `X'` and its cumulative trapezoid integral `X`.
#[derive(Debug, Clone, PartialEq)]
pub struct OuPath {
    pub velocity: Vec<f64>,
    pub integral: Vec<f64>,
}

/// Integrated OU covariate on the design grid. Volatility 0 is allowed and
/// gives the deterministic decay from `start`.
pub fn simulate_diffusion_covariate(
    ou: &OuParams,
    design: &SamplingDesign,
    seed: u64,
) -> Result<OuPath, SimError> {
    let mut problems = ou_problems(ou, true);
    problems.extend(design.problems(0));
    if !problems.is_empty() {
        return Err(SimError::Invalid(problems));
    }
    let h = design.h();
    let sqrt_h = h.sqrt();
    let steps = design.steps();
    let mut rng = component_rng(seed, Component::Diffusion);
    let mut velocity = Vec::with_capacity(steps + 1);
    let mut integral = Vec::with_capacity(steps + 1);
    let (mut v, mut x) = (ou.start, 0.0);
    velocity.push(v);
    integral.push(x);
    for _ in 0..steps {
        let z: f64 = rng.sample(StandardNormal);
        let next = v - ou.rate * v * h + ou.volatility * sqrt_h * z;
        x += 0.5 * h * (v + next);
        v = next;
        velocity.push(v);
        integral.push(x);
    }
    Ok(OuPath { velocity, integral })
}

fn regression_problems(
    theta0: &Theta,
    design: &SamplingDesign,
    regressors: &RegressorSpec,
) -> Vec<DesignError> {
    // σ = 0 is accepted here: a noise-free path is useful in tests
    let mut problems: Vec<DesignError> = theta0
        .problems()
        .into_iter()
        .filter(|e| !(e.key == "sigma" && theta0.sigma == 0.0))
        .collect();
    problems.extend(regressors.problems());
    if theta0.q() != regressors.q() {
        problems.push(DesignError::new(
            "mu",
            format!(
                "has {} components but there are {} regressors",
                theta0.q(),
                regressors.q()
            ),
        ));
    }
    problems.extend(design.problems(regressors.q()));
    problems
}

/// `Y_t = X_t·μ₀ + σ₀J_t` on `t_j = j/n`, `j = 0..=[nT]`, with a fresh
/// default-grid table.
pub fn simulate_regression_path(
    theta0: &Theta,
    design: &SamplingDesign,
    regressors: &RegressorSpec,
    seed: u64,
) -> Result<PathSample, SimError> {
    let problems = regression_problems(theta0, design, regressors);
    if !problems.is_empty() {
        return Err(SimError::Invalid(problems));
    }
    let table = default_table(theta0.nu, design)?;
    simulate_regression_path_with(&table, theta0, design, regressors, seed)
}

/// As [`simulate_regression_path`] with a prebuilt table for `(ν₀, 1/n)`.
pub fn simulate_regression_path_with(
    table: &DensityTable,
    theta0: &Theta,
    design: &SamplingDesign,
    regressors: &RegressorSpec,
    seed: u64,
) -> Result<PathSample, SimError> {
    let problems = regression_problems(theta0, design, regressors);
    if !problems.is_empty() {
        return Err(SimError::Invalid(problems));
    }
    check_table(table, theta0.nu, design)?;
    let times = times(design);
    let steps = design.steps();
    let ou = match &regressors.diffusion {
        Some(p) => Some(simulate_diffusion_covariate(p, design, seed)?),
        None => None,
    };
    let covariates: Vec<Vec<f64>> = (0..=steps)
        .map(|j| {
            let mut row: Vec<f64> = regressors
                .periodic
                .iter()
                .map(|p| p.eval(times[j]))
                .collect();
            if let Some(ou) = &ou {
                row.push(ou.integral[j]);
            }
            row
        })
        .collect();
    let levy = levy_path(table, steps, seed);
    let responses = covariates
        .iter()
        .zip(&levy)
        .map(|(x, j)| dot(x, &theta0.mu) + theta0.sigma * j)
        .collect();
    Ok(PathSample {
        design: *design,
        kind: PathKind::Levels,
        times,
        covariates,
        responses,
        truth: Some(theta0.clone()),
        warnings: design.advisories(),
    })
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sde_problems(theta0: &Theta, drift: &[DriftTerm], design: &SamplingDesign) -> Vec<DesignError> {
    let mut problems: Vec<DesignError> = theta0
        .problems()
        .into_iter()
        .filter(|e| !(e.key == "sigma" && theta0.sigma == 0.0))
        .collect();
    if drift.is_empty() {
        problems.push(DesignError::new(
            "drift",
            "at least one bounded drift component is required",
        ));
    }
    if drift.len() != theta0.q() {
        problems.push(DesignError::new(
            "mu",
            format!(
                "has {} components but the drift has {}",
                theta0.q(),
                drift.len()
            ),
        ));
    }
    problems.extend(design.problems(drift.len()));
    problems
}

/// Euler path of `Y_t = μ₀·∫₀ᵗ b(Y_s)ds + σ₀J_t` with a fresh table.
pub fn simulate_sde_path(
    mu0: &[f64],
    sigma0: f64,
    nu0: f64,
    drift: &[DriftTerm],
    design: &SamplingDesign,
    seed: u64,
) -> Result<PathSample, SimError> {
    let theta0 = Theta::new(mu0.to_vec(), sigma0, nu0);
    let problems = sde_problems(&theta0, drift, design);
    if !problems.is_empty() {
        return Err(SimError::Invalid(problems));
    }
    let table = default_table(nu0, design)?;
    simulate_sde_path_with(&table, &theta0, drift, design, seed)
}

/// As [`simulate_sde_path`] with a prebuilt table. The drift part `D_j` is
/// accumulated separately and `Y_j = D_j + σ₀J_j`, so a zero drift
/// reproduces `σ₀J` bit for bit.
pub fn simulate_sde_path_with(
    table: &DensityTable,
    theta0: &Theta,
    drift: &[DriftTerm],
    design: &SamplingDesign,
    seed: u64,
) -> Result<PathSample, SimError> {
    let problems = sde_problems(theta0, drift, design);
    if !problems.is_empty() {
        return Err(SimError::Invalid(problems));
    }
    check_table(table, theta0.nu, design)?;
    let h = design.h();
    let steps = design.steps();
    let levy = levy_path(table, steps, seed);
    let eval = |y: f64| drift.iter().map(|b| b.eval(y)).collect::<Vec<f64>>();
    let mut responses = Vec::with_capacity(steps + 1);
    let mut covariates = Vec::with_capacity(steps + 1);
    let mut d = 0.0;
    let mut y = 0.0;
    responses.push(y);
    covariates.push(eval(y));
    for &j in &levy[1..] {
        d += h * dot(&theta0.mu, &covariates[covariates.len() - 1]);
        y = d + theta0.sigma * j;
        responses.push(y);
        covariates.push(eval(y));
    }
    let mut warnings = design.advisories();
    if theta0.nu <= 2.0 {
        warnings.push(format!(
            "nu = {} <= 2: outside the regime where the drift estimator theory applies",
            theta0.nu
        ));
    }
    Ok(PathSample {
        design: *design,
        kind: PathKind::Drift,
        times: times(design),
        covariates,
        responses,
        truth: Some(theta0.clone()),
        warnings,
    })
}
