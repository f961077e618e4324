//! Stage one: Cauchy quasi-likelihood for the trend `μ` and scale `σ` on the
//! thinned window `[0, B_n]`.
//!
//! With `z_j = h⁻¹D_j` (the per-step covariate increment) and
//! `ε_j = (h⁻¹ΔY_j − μ·z_j)/σ`,
//! `H₁(μ, σ) = Σ_{j ≤ N_n} [−ln(hσ) − ln π − ln(1 + ε_j²)]`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::SamplingDesign;
use crate::simulator::PathSample;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CqmleError {
    #[error("{what} = {value} is outside its domain")]
    Domain { what: &'static str, value: f64 },
    #[error("the fit needs {needed} increments but the path has {available}")]
    InsufficientData { needed: usize, available: usize },
    #[error("mu has {got} components, the path has {expected} covariates")]
    Dimension { expected: usize, got: usize },
    #[error("covariate Gram matrix is numerically singular (eigenvalues {min_eigenvalue:e} .. {max_eigenvalue:e})")]
    Identifiability {
        min_eigenvalue: f64,
        max_eigenvalue: f64,
    },
}

/// `g₁(ε) = φ₁'(ε)/φ₁(ε) = −2ε/(1+ε²)` for the standard Cauchy density `φ₁`.
pub fn cauchy_g1(e: f64) -> f64 {
    -2.0 * e / (1.0 + e * e)
}

/// `g₁'(ε) = −2(1−ε²)/(1+ε²)²`.
pub fn cauchy_g1_prime(e: f64) -> f64 {
    let d = 1.0 + e * e;
    -2.0 * (1.0 - e * e) / (d * d)
}

/// The stage-one parameter `a = (μ, σ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendScale {
    pub mu: Vec<f64>,
    pub sigma: f64,
}

impl TrendScale {
    pub fn new(mu: Vec<f64>, sigma: f64) -> Self {
        Self { mu, sigma }
    }
}

/// The `N_n` rescaled increments the fit reads.
#[derive(Debug, Clone, PartialEq)]
pub struct Increments {
    pub h: f64,
    pub q: usize,
    /// `h⁻¹ΔY_j`.
    pub y: Vec<f64>,
    /// `h⁻¹D_j`, row-major `N_n × q`.
    pub z: Vec<f64>,
}

impl Increments {
    /// First `N_n = [n B_n]` increments of `path`.
    pub fn from_path(path: &PathSample, design: &SamplingDesign) -> Result<Self, CqmleError> {
        let count = design.n_thin();
        if path.steps() < count || count == 0 {
            return Err(CqmleError::InsufficientData {
                needed: count.max(1),
                available: path.steps(),
            });
        }
        let h = path.design.h();
        let q = path.q();
        let mut y = Vec::with_capacity(count);
        let mut z = vec![0.0; count * q];
        for j in 0..count {
            y.push(path.response_change(j, j + 1) / h);
            let row = &mut z[j * q..(j + 1) * q];
            path.covariate_change(j, j + 1, row);
            for v in row.iter_mut() {
                *v /= h;
            }
        }
        Ok(Self { h, q, y, z })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    fn row(&self, j: usize) -> &[f64] {
        &self.z[j * self.q..(j + 1) * self.q]
    }

    fn residual(&self, j: usize, mu: &[f64]) -> f64 {
        self.y[j] - self.row(j).iter().zip(mu).map(|(a, b)| a * b).sum::<f64>()
    }

    /// `Ŝ = (1/N) Σ z_j z_jᵀ`.
    pub fn gram(&self) -> DMatrix<f64> {
        let mut s = DMatrix::zeros(self.q, self.q);
        for j in 0..self.len() {
            let r = self.row(j);
            for a in 0..self.q {
                for b in a..self.q {
                    s[(a, b)] += r[a] * r[b];
                }
            }
        }
        for a in 0..self.q {
            for b in a..self.q {
                s[(a, b)] /= self.len() as f64;
                s[(b, a)] = s[(a, b)];
            }
        }
        s
    }

    fn check(&self, a: &TrendScale) -> Result<(), CqmleError> {
        if !(a.sigma.is_finite() && a.sigma > 0.0) {
            return Err(CqmleError::Domain {
                what: "sigma",
                value: a.sigma,
            });
        }
        if a.mu.len() != self.q {
            return Err(CqmleError::Dimension {
                expected: self.q,
                got: a.mu.len(),
            });
        }
        Ok(())
    }

    /// `H₁(a)` including constants.
    pub fn loglik(&self, a: &TrendScale) -> Result<f64, CqmleError> {
        self.check(a)?;
        let n = self.len() as f64;
        let sum: f64 = (0..self.len())
            .map(|j| {
                let e = self.residual(j, &a.mu) / a.sigma;
                (e * e).ln_1p()
            })
            .sum();
        Ok(-n * ((self.h * a.sigma).ln() + PI.ln()) - sum)
    }

    /// Gradient and Hessian of `H₁` in `(μ, σ)`.
    pub fn score_hessian(
        &self,
        a: &TrendScale,
    ) -> Result<(DVector<f64>, DMatrix<f64>), CqmleError> {
        self.check(a)?;
        let q = self.q;
        let s = a.sigma;
        let mut g = DVector::zeros(q + 1);
        let mut hm = DMatrix::zeros(q + 1, q + 1);
        for j in 0..self.len() {
            let e = self.residual(j, &a.mu) / s;
            let g1 = cauchy_g1(e);
            let g1p = cauchy_g1_prime(e);
            let z = self.row(j);
            for k in 0..q {
                g[k] -= z[k] * g1;
                let cross = z[k] * (g1p * e + g1);
                hm[(k, q)] += cross;
                for l in k..q {
                    hm[(k, l)] += g1p * z[k] * z[l];
                }
            }
            g[q] -= 1.0 + e * g1;
            hm[(q, q)] += 1.0 + 2.0 * e * g1 + e * e * g1p;
        }
        for k in 0..q {
            g[k] /= s;
        }
        g[q] /= s;
        let s2 = s * s;
        for k in 0..=q {
            for l in k..=q {
                hm[(k, l)] /= s2;
                hm[(l, k)] = hm[(k, l)];
            }
        }
        Ok((g, hm))
    }
}

/// `H₁(a)` on the first `N_n` increments of `path`.
pub fn cauchy_loglik(
    a: &TrendScale,
    path: &PathSample,
    design: &SamplingDesign,
) -> Result<f64, CqmleError> {
    Increments::from_path(path, design)?.loglik(a)
}

/// Analytic gradient and Hessian of [`cauchy_loglik`] in `(μ, σ)`.
pub fn cauchy_score_hessian(
    a: &TrendScale,
    path: &PathSample,
    design: &SamplingDesign,
) -> Result<(DVector<f64>, DMatrix<f64>), CqmleError> {
    Increments::from_path(path, design)?.score_hessian(a)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Stop once `σ‖∇H₁‖ / N_n` falls to this.
    pub tol: f64,
    pub max_iter: usize,
    /// Per-component box for `μ`; unbounded when `None`.
    pub mu_bounds: Option<Vec<(f64, f64)>>,
    pub sigma_bounds: (f64, f64),
    /// Reweighting sweeps before Newton when no start is given.
    pub warmup_iter: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 200,
            mu_bounds: None,
            sigma_bounds: (1e-12, 1e12),
            warmup_iter: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CqmleFit {
    pub mu_hat: Vec<f64>,
    pub sigma_hat: f64,
    /// `σ‖∇H₁‖ / N_n` at the returned point: the gradient in `(μ/σ, ln σ)`,
    /// unchanged by affine rescaling of the data.
    pub gradient_norm: f64,
    /// `−∂²H₁ / N_n` at the returned point, in `(μ, σ)`.
    pub hessian: Vec<Vec<f64>>,
    pub iterations: usize,
    pub converged: bool,
    pub boundary: bool,
    pub loglik: f64,
    pub n_used: usize,
}

impl CqmleFit {
    pub fn estimate(&self) -> TrendScale {
        TrendScale::new(self.mu_hat.clone(), self.sigma_hat)
    }
}

/// Errors if `Ŝ` is numerically singular.
pub fn check_identifiable(gram: &DMatrix<f64>) -> Result<(), CqmleError> {
    let eig = SymmetricEigen::new(gram.clone()).eigenvalues;
    let max = eig.iter().cloned().fold(0.0, f64::max);
    let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(max > 0.0) || !(min > 1e-10 * max) {
        return Err(CqmleError::Identifiability {
            min_eigenvalue: min,
            max_eigenvalue: max,
        });
    }
    Ok(())
}

fn weighted_ls(inc: &Increments, weights: &[f64]) -> Option<Vec<f64>> {
    let q = inc.q;
    let mut a = DMatrix::zeros(q, q);
    let mut b = DVector::zeros(q);
    for (j, &w) in weights.iter().enumerate().take(inc.len()) {
        let r = inc.row(j);
        for k in 0..q {
            b[k] += w * r[k] * inc.y[j];
            for l in 0..q {
                a[(k, l)] += w * r[k] * r[l];
            }
        }
    }
    a.cholesky().map(|c| c.solve(&b).iter().cloned().collect())
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len();
    if m % 2 == 1 {
        v[m / 2]
    } else {
        0.5 * (v[m / 2 - 1] + v[m / 2])
    }
}

/// OLS trend, median-absolute-residual scale, then EM reweighting sweeps
/// for the Cauchy location-scale model (weights `2/(1+ε²)`).
pub fn initial_estimate(inc: &Increments, sweeps: usize) -> Option<TrendScale> {
    let n = inc.len();
    let mut mu = weighted_ls(inc, &vec![1.0; n])?;
    let mut sigma = median((0..n).map(|j| inc.residual(j, &mu).abs()).collect());
    if !(sigma > 0.0) {
        sigma = (0..n).map(|j| inc.residual(j, &mu).abs()).sum::<f64>() / n as f64;
    }
    if !(sigma > 0.0) {
        return Some(TrendScale::new(mu, f64::MIN_POSITIVE));
    }
    for _ in 0..sweeps {
        let w: Vec<f64> = (0..n)
            .map(|j| {
                let e = inc.residual(j, &mu) / sigma;
                2.0 / (1.0 + e * e)
            })
            .collect();
        let Some(next_mu) = weighted_ls(inc, &w) else {
            break;
        };
        let next_sigma = ((0..n)
            .map(|j| w[j] * inc.residual(j, &next_mu).powi(2))
            .sum::<f64>()
            / n as f64)
            .sqrt();
        if !(next_sigma > 0.0 && next_sigma.is_finite()) {
            break;
        }
        let change = (next_sigma / sigma - 1.0).abs()
            + next_mu
                .iter()
                .zip(&mu)
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>()
                / sigma;
        mu = next_mu;
        sigma = next_sigma;
        if change < 1e-10 {
            break;
        }
    }
    Some(TrendScale::new(mu, sigma))
}

/// Point in `(μ, ln σ)` coordinates.
fn to_internal(a: &TrendScale) -> DVector<f64> {
    let mut v: Vec<f64> = a.mu.clone();
    v.push(a.sigma.ln());
    DVector::from_vec(v)
}

fn from_internal(v: &DVector<f64>) -> TrendScale {
    let q = v.len() - 1;
    TrendScale::new(v.rows(0, q).iter().cloned().collect(), v[q].exp())
}

/// Clamp into the box; reports whether anything was clamped.
fn project(v: &mut DVector<f64>, opts: &FitOptions) -> bool {
    let q = v.len() - 1;
    let mut hit = false;
    if let Some(bounds) = &opts.mu_bounds {
        for (k, &(lo, hi)) in bounds.iter().enumerate().take(q) {
            if v[k] <= lo || v[k] >= hi {
                v[k] = v[k].clamp(lo, hi);
                hit = true;
            }
        }
    }
    let (lo, hi) = (opts.sigma_bounds.0.ln(), opts.sigma_bounds.1.ln());
    if v[q] <= lo || v[q] >= hi {
        v[q] = v[q].clamp(lo, hi);
        hit = true;
    }
    hit
}

/// Gradient and Hessian of `H₁` in `(μ, ln σ)`.
fn internal_derivatives(
    inc: &Increments,
    a: &TrendScale,
) -> (DVector<f64>, DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
    let (g, hm) = inc.score_hessian(a).expect("validated point");
    let q = inc.q;
    let s = a.sigma;
    let mut gi = g.clone();
    gi[q] *= s;
    let mut hi = hm.clone();
    for k in 0..q {
        hi[(k, q)] *= s;
        hi[(q, k)] *= s;
    }
    hi[(q, q)] = s * s * hm[(q, q)] + s * g[q];
    (g, hm, gi, hi)
}

/// Maximize `H₁` over the box, by Newton ascent in `(μ, ln σ)` with
/// backtracking, falling back to a diagonally scaled gradient step when the
/// Newton direction is not an ascent direction.
pub fn fit_cqmle(
    path: &PathSample,
    design: &SamplingDesign,
    init: Option<&TrendScale>,
    opts: &FitOptions,
) -> Result<CqmleFit, CqmleError> {
    let inc = Increments::from_path(path, design)?;
    fit_increments(&inc, init, opts)
}

pub fn fit_increments(
    inc: &Increments,
    init: Option<&TrendScale>,
    opts: &FitOptions,
) -> Result<CqmleFit, CqmleError> {
    check_identifiable(&inc.gram())?;
    let start = match init {
        Some(a) => {
            inc.check(a)?;
            a.clone()
        }
        None => initial_estimate(inc, opts.warmup_iter).ok_or(CqmleError::Identifiability {
            min_eigenvalue: 0.0,
            max_eigenvalue: 0.0,
        })?,
    };
    let n = inc.len() as f64;
    let mut x = to_internal(&start);
    let mut boundary = project(&mut x, opts);
    let mut point = from_internal(&x);
    let mut value = inc.loglik(&point)?;
    let mut iterations = 0;
    let mut converged = false;
    loop {
        let (g, _, gi, hi) = internal_derivatives(inc, &point);
        if point.sigma * g.norm() / n <= opts.tol {
            converged = true;
            break;
        }
        if iterations >= opts.max_iter {
            break;
        }
        iterations += 1;
        let neg = -&hi;
        let newton = neg.clone().cholesky().map(|c| c.solve(&gi));
        let direction = match newton {
            Some(d) if d.dot(&gi) > 0.0 && d.iter().all(|v| v.is_finite()) => d,
            _ => DVector::from_iterator(
                gi.len(),
                gi.iter()
                    .enumerate()
                    .map(|(k, v)| v / neg[(k, k)].abs().max(1e-8 * n)),
            ),
        };
        // keep a single step from moving ln σ by more than 2
        let q = inc.q;
        let mut t = (2.0 / direction[q].abs()).min(1.0);
        let slope = direction.dot(&gi);
        let mut accepted = false;
        while t > 1e-14 {
            let mut trial = &x + &direction * t;
            let hit = project(&mut trial, opts);
            let trial_point = from_internal(&trial);
            let trial_value = inc.loglik(&trial_point)?;
            // near the optimum the value change drops below rounding, so a
            // step that shrinks the gradient at unchanged value also counts
            let noise = 1e-12 * value.abs().max(1.0);
            let improves = trial_value >= value + 1e-4 * t * slope
                || (hit && trial_value > value)
                || (trial_value >= value - noise
                    && inc.score_hessian(&trial_point)?.0.norm() < 0.5 * g.norm());
            if improves {
                x = trial;
                point = trial_point;
                value = trial_value;
                boundary = hit;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let (g, hm) = inc.score_hessian(&point)?;
    let gradient_norm = point.sigma * g.norm() / n;
    let hessian: Vec<Vec<f64>> = (0..=inc.q)
        .map(|k| (0..=inc.q).map(|l| -hm[(k, l)] / n).collect())
        .collect();
    let psd = SymmetricEigen::new(-hm / n)
        .eigenvalues
        .iter()
        .all(|&e| e >= 0.0);
    Ok(CqmleFit {
        mu_hat: point.mu,
        sigma_hat: point.sigma,
        gradient_norm,
        hessian,
        iterations,
        converged: converged && psd && !boundary,
        boundary,
        loglik: value,
        n_used: inc.len(),
    })
}

/// Fits from several starts and the largest disagreement between them
/// (max over components of `|Δμ|` and `|Δσ|/σ`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiStart {
    pub fits: Vec<CqmleFit>,
    pub spread: f64,
}

pub fn multistart(
    path: &PathSample,
    design: &SamplingDesign,
    starts: &[TrendScale],
    opts: &FitOptions,
) -> Result<MultiStart, CqmleError> {
    let inc = Increments::from_path(path, design)?;
    let mut fits = vec![fit_increments(&inc, None, opts)?];
    for s in starts {
        fits.push(fit_increments(&inc, Some(s), opts)?);
    }
    let mut spread: f64 = 0.0;
    for a in &fits {
        for b in &fits {
            for (x, y) in a.mu_hat.iter().zip(&b.mu_hat) {
                spread = spread.max((x - y).abs());
            }
            spread = spread.max((a.sigma_hat - b.sigma_hat).abs() / a.sigma_hat);
        }
    }
    Ok(MultiStart { fits, spread })
}
