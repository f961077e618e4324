//! Stage two: Student-t quasi-likelihood for `ν` from unit-time residuals.
//!
//! `H₂(ν) = Σᵢ [−½ln π + ln Γ((ν+1)/2) − ln Γ(ν/2) − ((ν+1)/2) ln(1 + ε̂ᵢ²)]`
//! is strictly concave, and its stationarity condition is the monotone
//! equation `ψ((ν+1)/2) − ψ(ν/2) = m̄` with `m̄` the mean of `ln(1 + ε̂ᵢ²)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::simulator::PathSample;
use crate::specfun::{digamma, log_gamma, trigamma, SpecFunError};

pub const DEFAULT_NU_BOUNDS: (f64, f64) = (0.05, 100.0);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TqmleError {
    #[error("{what} = {value} is outside its domain ({domain})")]
    Domain {
        what: &'static str,
        value: f64,
        domain: &'static str,
    },
    #[error("no residuals")]
    Empty,
    #[error(transparent)]
    SpecFun(#[from] SpecFunError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualSet {
    pub values: Vec<f64>,
    pub mu_hat: Vec<f64>,
    pub sigma_hat: f64,
}

impl ResidualSet {
    /// Residuals not tied to a stage-one fit.
    pub fn from_values(values: Vec<f64>) -> Self {
        Self {
            values,
            mu_hat: Vec::new(),
            sigma_hat: 1.0,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `m̄`, the mean of `ln(1 + ε̂²)`.
    pub fn mbar(&self) -> f64 {
        self.values.iter().map(|e| (e * e).ln_1p()).sum::<f64>() / self.len() as f64
    }
}

/// `ε̂ᵢ = σ̂⁻¹(Yᵢ − Yᵢ₋₁ − μ̂·(Xᵢ − Xᵢ₋₁))` at integer times `i = 1..[T_n]`
/// over the whole path. For drift paths the covariate change is
/// `h Σ b(Y)` over the unit interval.
pub fn unit_residuals(
    path: &PathSample,
    mu_hat: &[f64],
    sigma_hat: f64,
) -> Result<ResidualSet, TqmleError> {
    if !(sigma_hat.is_finite() && sigma_hat > 0.0) {
        return Err(TqmleError::Domain {
            what: "sigma_hat",
            value: sigma_hat,
            domain: "sigma_hat > 0",
        });
    }
    let n = path.design.n;
    let units = path.steps() / n;
    if units < 1 {
        return Err(TqmleError::Domain {
            what: "T",
            value: path.design.t_n,
            domain: "T >= 1",
        });
    }
    let mut dx = vec![0.0; path.q()];
    let values = (1..=units)
        .map(|i| {
            let (a, b) = ((i - 1) * n, i * n);
            path.covariate_change(a, b, &mut dx);
            let trend: f64 = dx.iter().zip(mu_hat).map(|(x, m)| x * m).sum();
            (path.response_change(a, b) - trend) / sigma_hat
        })
        .collect();
    Ok(ResidualSet {
        values,
        mu_hat: mu_hat.to_vec(),
        sigma_hat,
    })
}

fn check_nu(nu: f64) -> Result<(), TqmleError> {
    if nu.is_finite() && nu > 0.0 {
        Ok(())
    } else {
        Err(TqmleError::Domain {
            what: "nu",
            value: nu,
            domain: "nu > 0",
        })
    }
}

/// `H₂(ν)` including the `−½ ln π` constants.
pub fn student_loglik(nu: f64, residuals: &ResidualSet) -> Result<f64, TqmleError> {
    check_nu(nu)?;
    let c = -0.5 * PI.ln() + log_gamma(0.5 * (nu + 1.0))? - log_gamma(0.5 * nu)?;
    let half = 0.5 * (nu + 1.0);
    Ok(residuals
        .values
        .iter()
        .map(|e| c - half * (e * e).ln_1p())
        .sum())
}

/// `ψ((ν+1)/2) − ψ(ν/2)`, strictly decreasing from `+∞` to `0`.
pub fn score_map(nu: f64) -> Result<f64, TqmleError> {
    check_nu(nu)?;
    Ok(digamma(0.5 * (nu + 1.0))? - digamma(0.5 * nu)?)
}

fn score_map_derivative(nu: f64) -> Result<f64, TqmleError> {
    Ok(0.5 * (trigamma(0.5 * (nu + 1.0))? - trigamma(0.5 * nu)?))
}

/// `∂H₂/∂ν / count = ½(ψ((ν+1)/2) − ψ(ν/2) − m̄)`.
pub fn student_score(nu: f64, residuals: &ResidualSet) -> Result<f64, TqmleError> {
    if residuals.is_empty() {
        return Err(TqmleError::Empty);
    }
    Ok(0.5 * (score_map(nu)? - residuals.mbar()))
}

/// `−∂²H₂/∂ν² = (count/4)(ψ₁(ν/2) − ψ₁((ν+1)/2))`, free of the residual values.
pub fn student_neg_curvature(nu: f64, count: usize) -> Result<f64, TqmleError> {
    check_nu(nu)?;
    Ok(0.25 * count as f64 * (trigamma(0.5 * nu)? - trigamma(0.5 * (nu + 1.0))?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    None,
    Lower,
    Upper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TqmleFit {
    pub nu_hat: f64,
    pub mbar: f64,
    pub converged: bool,
    pub boundary_flag: Boundary,
    /// `ψ((ν̂+1)/2) − ψ(ν̂/2) − m̄`.
    pub score: f64,
    pub iterations: usize,
}

/// Solve the score equation on `[nu_min, nu_max]` by Newton steps in
/// `ln ν`, kept inside a shrinking bracket.
pub fn fit_tqmle(residuals: &ResidualSet, bounds: (f64, f64)) -> Result<TqmleFit, TqmleError> {
    let (lo_bound, hi_bound) = bounds;
    if !(lo_bound.is_finite() && hi_bound.is_finite() && lo_bound > 0.0 && lo_bound < hi_bound) {
        return Err(TqmleError::Domain {
            what: "nu bounds",
            value: lo_bound,
            domain: "0 < nu_min < nu_max",
        });
    }
    if residuals.is_empty() {
        return Err(TqmleError::Empty);
    }
    let mbar = residuals.mbar();
    let f = |nu: f64| score_map(nu).map(|v| v - mbar);
    let at_lo = f(lo_bound)?;
    let at_hi = f(hi_bound)?;
    let pinned = |nu: f64, flag: Boundary, score: f64| TqmleFit {
        nu_hat: nu,
        mbar,
        converged: false,
        boundary_flag: flag,
        score,
        iterations: 0,
    };
    if at_lo <= 0.0 {
        return Ok(pinned(lo_bound, Boundary::Lower, at_lo));
    }
    if at_hi >= 0.0 {
        return Ok(pinned(hi_bound, Boundary::Upper, at_hi));
    }
    // f decreasing: f(lo) > 0 > f(hi)
    let (mut lo, mut hi) = (lo_bound.ln(), hi_bound.ln());
    let mut x = 0.5 * (lo + hi);
    let mut iterations = 0;
    let mut score = f(x.exp())?;
    while iterations < 200 {
        iterations += 1;
        if score == 0.0 {
            break;
        }
        if score > 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let nu = x.exp();
        let slope = score_map_derivative(nu)? * nu;
        let mut next = x - score / slope;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        let step = (next - x).abs();
        x = next;
        score = f(x.exp())?;
        if score.abs() <= 1e-13 || step <= 1e-15 * x.abs().max(1.0) || hi - lo <= 1e-15 {
            break;
        }
    }
    Ok(TqmleFit {
        nu_hat: x.exp(),
        mbar,
        converged: score.abs() <= 1e-10,
        boundary_flag: Boundary::None,
        score,
        iterations,
    })
}
