//! Parameter triple, sampling design and random substreams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// `(μ, σ, ν)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theta {
    pub mu: Vec<f64>,
    pub sigma: f64,
    pub nu: f64,
}

impl Theta {
    pub fn new(mu: Vec<f64>, sigma: f64, nu: f64) -> Self {
        Self { mu, sigma, nu }
    }

    pub fn q(&self) -> usize {
        self.mu.len()
    }

    /// Every violated domain rule, by key.
    pub fn problems(&self) -> Vec<DesignError> {
        let mut out = Vec::new();
        if self.mu.is_empty() {
            out.push(DesignError::new("mu", "needs at least one component"));
        }
        if self.mu.iter().any(|m| !m.is_finite()) {
            out.push(DesignError::new("mu", "components must be finite"));
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            out.push(DesignError::new(
                "sigma",
                format!("must be > 0, got {}", self.sigma),
            ));
        }
        if !(self.nu.is_finite() && self.nu > 0.0) {
            out.push(DesignError::new(
                "nu",
                format!("must be > 0, got {}", self.nu),
            ));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{key}: {message}")]
pub struct DesignError {
    pub key: &'static str,
    pub message: String,
}

impl DesignError {
    pub fn new(key: &'static str, message: impl Into<String>) -> Self {
        Self {
            key,
            message: message.into(),
        }
    }
}

/// Steps per unit time `n` (so `h = 1/n`), horizon `T_n` and thinning
/// horizon `B_n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingDesign {
    pub n: usize,
    pub t_n: f64,
    pub b_n: f64,
}

/// `floor(x)` that forgives rounding just below an integer.
fn floor_count(x: f64) -> usize {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * r.max(1.0) {
        r as usize
    } else {
        x.floor() as usize
    }
}

impl SamplingDesign {
    pub fn new(n: usize, t_n: f64, b_n: f64) -> Self {
        Self { n, t_n, b_n }
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Number of steps on `[0, T_n]`, `[n T_n]`.
    pub fn steps(&self) -> usize {
        floor_count(self.n as f64 * self.t_n)
    }

    /// `N_n = [n B_n]`.
    pub fn n_thin(&self) -> usize {
        floor_count(self.n as f64 * self.b_n)
    }

    /// Number of whole unit intervals in `[0, T_n]`.
    pub fn units(&self) -> usize {
        floor_count(self.t_n)
    }

    /// Every violated rule for a model with `q` trend components.
    pub fn problems(&self, q: usize) -> Vec<DesignError> {
        let mut out = Vec::new();
        if self.n == 0 {
            out.push(DesignError::new("n", "must be >= 1"));
        }
        if !(self.t_n.is_finite() && self.t_n > 0.0) {
            out.push(DesignError::new(
                "T",
                format!("must be > 0, got {}", self.t_n),
            ));
        }
        if !(self.b_n.is_finite() && self.b_n > 0.0) {
            out.push(DesignError::new(
                "B",
                format!("must be > 0, got {}", self.b_n),
            ));
        } else if self.b_n > self.t_n {
            out.push(DesignError::new(
                "B",
                format!(
                    "thinning horizon B = {} must satisfy B <= T = {}",
                    self.b_n, self.t_n
                ),
            ));
        }
        if out.is_empty() && self.n_thin() < q + 2 {
            out.push(DesignError::new(
                "B",
                format!("N = [nB] = {} must be >= q + 2 = {}", self.n_thin(), q + 2),
            ));
        }
        out
    }

    pub fn validate(&self, q: usize) -> Result<(), DesignError> {
        match self.problems(q).into_iter().next() {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }

    /// Advisory notes when the balance conditions look strained.
    pub fn advisories(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.b_n / self.t_n > 0.5 {
            out.push(format!(
                "B/T = {:.3} > 0.5: stage-one and stage-two estimators may not be asymptotically independent",
                self.b_n / self.t_n
            ));
        }
        let n_thin = self.n_thin().max(1) as f64;
        if self.t_n / n_thin > 0.5 {
            out.push(format!(
                "T/N = {:.3} > 0.5: the thinned window is short relative to the horizon",
                self.t_n / n_thin
            ));
        }
        out
    }
}

/// Independent random components of one path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    Levy = 0,
    Diffusion = 1,
}

/// ChaCha8 stream for one component of the path seeded with `seed`.
pub fn component_rng(seed: u64, component: Component) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(component as u64);
    rng
}

/// Seed of replication `rep` under `master`, by a SplitMix64 finalizer on
/// the pair. Distinct replications get unrelated seeds.
pub fn substream_seed(master: u64, rep: u64) -> u64 {
    let mut z = master
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(rep.wrapping_add(1).wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
