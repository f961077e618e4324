//! Asymptotic information estimates, studentization and Wald intervals.
//!
//! `Γ̂_a = blockdiag(Ŝ/(2σ̂²), 1/(2σ̂²))` with `Ŝ = (1/N_n)Σ(h⁻¹D_j)^{⊗2}`,
//! and `Γ̂_ν = ¼(ψ₁(ν̂/2) − ψ₁((ν̂+1)/2))`. The `(μ, σ)` block and `ν` are
//! treated as asymptotically independent.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::cqmle::{CqmleError, CqmleFit, Increments};
use crate::model::{SamplingDesign, Theta};
use crate::simulator::PathSample;
use crate::specfun::{trigamma, SpecFunError};

pub const DEFAULT_LEVEL: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InferenceError {
    #[error("{what} = {value} is outside its domain ({domain})")]
    Domain {
        what: &'static str,
        value: f64,
        domain: &'static str,
    },
    #[error("estimated information block {block} is singular")]
    Singular { block: &'static str },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Cqmle(#[from] CqmleError),
    #[error(transparent)]
    SpecFun(#[from] SpecFunError),
}

/// `Ŝ_n` from the first `N_n` increments of `path`.
pub fn covariate_gram(
    path: &PathSample,
    design: &SamplingDesign,
) -> Result<DMatrix<f64>, InferenceError> {
    Ok(Increments::from_path(path, design)?.gram())
}

/// `Γ_ν = ¼(ψ₁(ν/2) − ψ₁((ν+1)/2))`.
pub fn fisher_nu(nu: f64) -> Result<f64, InferenceError> {
    if !(nu.is_finite() && nu > 0.0) {
        return Err(InferenceError::Domain {
            what: "nu",
            value: nu,
            domain: "nu > 0",
        });
    }
    Ok(0.25 * (trigamma(0.5 * nu)? - trigamma(0.5 * (nu + 1.0))?))
}

/// `blockdiag(Ŝ/(2σ²), 1/(2σ²))`.
pub fn gamma_a(s_hat: &DMatrix<f64>, sigma: f64) -> DMatrix<f64> {
    let q = s_hat.nrows();
    let c = 1.0 / (2.0 * sigma * sigma);
    let mut g = DMatrix::zeros(q + 1, q + 1);
    g.view_mut((0, 0), (q, q)).copy_from(&(s_hat * c));
    g[(q, q)] = c;
    g
}

/// Symmetric square root through the eigendecomposition; negative rounding
/// noise in the spectrum is floored at zero.
pub fn sym_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let root = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&root) * eig.eigenvectors.transpose()
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().cloned().collect())
        .collect()
}

fn from_rows(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let n = rows.len();
    DMatrix::from_fn(n, n, |i, j| rows[i][j])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

/// Studentized errors `(Γ̂_a^{1/2}√N(â − a₀), Γ̂_ν^{1/2}√T(ν̂ − ν₀))`, plus
/// `√(N/2)(ln σ̂ − ln σ₀)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Studentized {
    /// `μ₁..μ_q, σ, ν`.
    pub values: Vec<f64>,
    pub log_sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub theta_hat: Theta,
    pub s_hat: Vec<Vec<f64>>,
    pub gamma_a: Vec<Vec<f64>>,
    pub gamma_nu: f64,
    /// `N_n`, the stage-one sample size.
    pub n_thin: usize,
    /// Number of unit-time residuals used in stage two.
    pub units: usize,
    /// Standard errors of `μ₁..μ_q, σ, ν`.
    pub std_errors: Vec<f64>,
    pub level: f64,
    pub ci: Vec<Interval>,
    /// Joint covariance of `(â, ν̂)`; the `a`–`ν` block is zero by construction.
    pub covariance: Vec<Vec<f64>>,
    pub warnings: Vec<String>,
    pub studentized: Option<Studentized>,
}

/// Information estimates, standard errors and Wald intervals at `level`.
pub fn assemble(
    s_hat: &DMatrix<f64>,
    cq: &CqmleFit,
    nu_hat: f64,
    units: usize,
    design: &SamplingDesign,
    level: f64,
) -> Result<FitResult, InferenceError> {
    if !(level > 0.0 && level < 1.0) {
        return Err(InferenceError::Domain {
            what: "level",
            value: level,
            domain: "0 < level < 1",
        });
    }
    let q = cq.mu_hat.len();
    if s_hat.nrows() != q {
        return Err(InferenceError::Dimension(format!(
            "S_hat is {}x{}, q = {q}",
            s_hat.nrows(),
            s_hat.ncols()
        )));
    }
    let sigma = cq.sigma_hat;
    let ga = gamma_a(s_hat, sigma);
    let gn = fisher_nu(nu_hat)?;
    let n = cq.n_used as f64;
    let t = units as f64;
    let s_inv = s_hat
        .clone()
        .cholesky()
        .ok_or(InferenceError::Singular {
            block: "gamma_a (covariate block S_hat)",
        })?
        .inverse();
    let mut cov = DMatrix::zeros(q + 2, q + 2);
    cov.view_mut((0, 0), (q, q))
        .copy_from(&(s_inv * (2.0 * sigma * sigma / n)));
    cov[(q, q)] = 2.0 * sigma * sigma / n;
    cov[(q + 1, q + 1)] = 1.0 / (gn * t);
    let std_errors: Vec<f64> = (0..q + 2).map(|k| cov[(k, k)].sqrt()).collect();
    let z = Normal::standard().inverse_cdf(0.5 + 0.5 * level);
    let mut estimates = cq.mu_hat.clone();
    estimates.push(sigma);
    estimates.push(nu_hat);
    let ci = estimates
        .iter()
        .zip(&std_errors)
        .map(|(e, s)| Interval {
            lower: e - z * s,
            upper: e + z * s,
        })
        .collect();
    let mut warnings = design.advisories();
    if design.b_n / design.t_n > 0.5 {
        warnings.push("the zero (mu, sigma)-nu covariance block is an asymptotic assumption that B/T > 0.5 strains".into());
    }
    Ok(FitResult {
        theta_hat: Theta::new(cq.mu_hat.clone(), sigma, nu_hat),
        s_hat: to_rows(s_hat),
        gamma_a: to_rows(&ga),
        gamma_nu: gn,
        n_thin: cq.n_used,
        units,
        std_errors,
        level,
        ci,
        covariance: to_rows(&cov),
        warnings,
        studentized: None,
    })
}

/// Studentize `fit` against the truth `theta0`.
pub fn studentize(fit: &FitResult, theta0: &Theta) -> Result<Studentized, InferenceError> {
    let q = fit.theta_hat.q();
    if theta0.q() != q {
        return Err(InferenceError::Dimension(format!(
            "theta0 has {} trend components, fit has {q}",
            theta0.q()
        )));
    }
    if !(theta0.sigma > 0.0) {
        return Err(InferenceError::Domain {
            what: "sigma0",
            value: theta0.sigma,
            domain: "sigma0 > 0",
        });
    }
    let ga = from_rows(&fit.gamma_a);
    if ga.view((0, 0), (q, q)).determinant().abs() <= 0.0 {
        return Err(InferenceError::Singular {
            block: "gamma_a (covariate block S_hat)",
        });
    }
    let root = sym_sqrt(&ga);
    let n = fit.n_thin as f64;
    let mut err = DVector::zeros(q + 1);
    for k in 0..q {
        err[k] = fit.theta_hat.mu[k] - theta0.mu[k];
    }
    err[q] = fit.theta_hat.sigma - theta0.sigma;
    let a_part = root * err * n.sqrt();
    let mut values: Vec<f64> = a_part.iter().cloned().collect();
    values.push(fit.gamma_nu.sqrt() * (fit.units as f64).sqrt() * (fit.theta_hat.nu - theta0.nu));
    Ok(Studentized {
        values,
        log_sigma: (n / 2.0).sqrt() * (fit.theta_hat.sigma.ln() - theta0.sigma.ln()),
    })
}
