//! Law of the rescaled increment `h⁻¹ J_h` of a Student-t Lévy process.
//!
//! The unit-time law is `t_ν(0, 1)` with density proportional to
//! `(1 + x²)^{-(ν+1)/2}` and characteristic function
//! `φ(u) = 2^{1-ν/2} / Γ(ν/2) · |u|^{ν/2} K_{ν/2}(|u|)`, so the CF of
//! `h⁻¹ J_h` is `φ(u/h)^h`. The density is recovered by cosine inversion on
//! a uniform grid, the CDF by cumulative summation anchored at the median,
//! and draws by inverse-CDF sampling.
//!
//! Inversion subtracts the standard Cauchy CF `e^{-|u|}` (the small-`h`
//! limit) and transforms only the remainder, with piecewise-linear Filon
//! quadrature on a `u` grid that is geometric near the origin and uniform
//! afterwards. The Cauchy part is added back in closed form. Optional tail
//! nodes beyond the uniform grid carry survival probabilities computed by
//! the same route (Gil-Pelaez), so inverse-CDF draws keep the heavy tails.

use std::f64::consts::{FRAC_1_PI, PI};

use nalgebra::Complex;
use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::{map_indexed, Execution};
use crate::specfun::{ln_bessel_k_scaled, log_gamma, SpecFunError};

pub const DEFAULT_MASS_TOLERANCE: f64 = 1e-4;
/// `exp(log_cf_rescaled(u_max))` must not exceed this.
pub const TRUNCATION_ENVELOPE: f64 = 1e-14;
pub const MAX_CLIPPED_MASS: f64 = 1e-6;
pub const DEFAULT_HALF_WIDTH: f64 = 50.0;
pub const DEFAULT_POINTS: usize = 1 << 13;
pub const DEFAULT_U_POINTS: usize = 1 << 14;
/// Default outer edge of the tail extension, in units of `J` (not `h⁻¹J`).
pub const DEFAULT_TAIL_REACH: f64 = 1e4;
pub const DEFAULT_TAIL_NODES_PER_DECADE: usize = 40;

/// Geometric refinement of the `u` grid near the origin.
const GRADED_START_RELATIVE: f64 = 1e-14;
const GRADED_RATIO: f64 = 1.02;
/// Tail survival values below this are numerical noise.
const SURVIVAL_FLOOR: f64 = 1e-12;
/// Pareto extrapolation is attached only when the last tail node still
/// carries at least this much mass.
const PARETO_MIN_MASS: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LawError {
    #[error("{what} = {value} is outside its domain ({domain})")]
    Domain {
        what: &'static str,
        value: f64,
        domain: &'static str,
    },
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("CF envelope {envelope:e} at u_max = {u_max} exceeds {TRUNCATION_ENVELOPE:e}")]
    Truncation { u_max: f64, envelope: f64 },
    #[error("total probability mass {mass} deviates from 1 by more than {tolerance}")]
    Mass { mass: f64, tolerance: f64 },
    #[error("clipped negative density mass {clipped:e} exceeds {MAX_CLIPPED_MASS:e}")]
    Clipped { clipped: f64 },
    #[error(transparent)]
    SpecFun(#[from] SpecFunError),
}

fn check_nu(nu: f64) -> Result<(), LawError> {
    if nu.is_finite() && nu > 0.0 {
        Ok(())
    } else {
        Err(LawError::Domain {
            what: "nu",
            value: nu,
            domain: "finite nu > 0",
        })
    }
}

fn check_h(h: f64) -> Result<(), LawError> {
    if h.is_finite() && h > 0.0 && h <= 1.0 {
        Ok(())
    } else {
        Err(LawError::Domain {
            what: "h",
            value: h,
            domain: "0 < h <= 1",
        })
    }
}

/// Standard Cauchy density `1/(π(1+x²))`.
pub fn cauchy_pdf(x: f64) -> f64 {
    FRAC_1_PI / (1.0 + x * x)
}

/// Standard Cauchy CDF.
pub fn cauchy_cdf(x: f64) -> f64 {
    0.5 + x.atan() * FRAC_1_PI
}

fn cauchy_survival(x: f64) -> f64 {
    if x > 0.0 {
        (1.0 / x).atan() * FRAC_1_PI
    } else {
        1.0 - cauchy_cdf(x)
    }
}

/// ν-dependent constants of the unit-time CF.
#[derive(Debug, Clone, Copy)]
struct UnitCf {
    half_nu: f64,
    log_norm: f64,
}

impl UnitCf {
    fn new(nu: f64) -> Result<Self, LawError> {
        check_nu(nu)?;
        let half_nu = 0.5 * nu;
        Ok(Self {
            half_nu,
            log_norm: (1.0 - half_nu) * std::f64::consts::LN_2 - log_gamma(half_nu)?,
        })
    }

    /// `ln φ(v) + v` for `v > 0`, free of the `-v` cancellation.
    fn log_excess(&self, v: f64) -> Result<f64, LawError> {
        Ok(self.log_norm + self.half_nu * v.ln() + ln_bessel_k_scaled(self.half_nu, v)?)
    }

    /// `h ln φ(u/h) + |u|`.
    fn rescaled_log_excess(&self, u: f64, h: f64) -> Result<f64, LawError> {
        if u == 0.0 {
            return Ok(0.0);
        }
        Ok(h * self.log_excess(u.abs() / h)?)
    }
}

/// Unit-time characteristic function `φ_{J_1,ν}(u)`.
pub fn cf_unit(u: f64, nu: f64) -> Result<f64, LawError> {
    Ok(log_cf_rescaled(u, nu, 1.0)?.exp())
}

/// `h · ln φ_{J_1,ν}(u/h)`, the log-CF of `h⁻¹ J_h`, evaluated in log space.
pub fn log_cf_rescaled(u: f64, nu: f64, h: f64) -> Result<f64, LawError> {
    check_h(h)?;
    if !u.is_finite() {
        return Err(LawError::Domain {
            what: "u",
            value: u,
            domain: "finite",
        });
    }
    let cf = UnitCf::new(nu)?;
    // rounding can push the value a hair above 0 near the origin
    Ok((cf.rescaled_log_excess(u, h)? - u.abs()).min(0.0))
}

/// Smallest `u` (on a 0.5 lattice) where the CF envelope of `h⁻¹J_h` drops
/// below [`TRUNCATION_ENVELOPE`].
pub fn adaptive_u_max(nu: f64, h: f64) -> Result<f64, LawError> {
    check_h(h)?;
    let cf = UnitCf::new(nu)?;
    let target = TRUNCATION_ENVELOPE.ln();
    let mut u = 1.0;
    while u < 1e5 {
        if cf.rescaled_log_excess(u, h)? - u <= target {
            return Ok(u);
        }
        u += 0.5;
    }
    Err(LawError::Truncation {
        u_max: u,
        envelope: (cf.rescaled_log_excess(u, h)? - u).exp(),
    })
}

/// Optional survival-tail nodes beyond the uniform grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailSpec {
    /// Outer edge in `h⁻¹J` units; a Pareto extrapolation covers what lies beyond.
    pub x_far: f64,
    pub nodes_per_decade: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub points: usize,
    pub u_max: f64,
    pub u_points: usize,
    pub tails: Option<TailSpec>,
    pub mass_tolerance: f64,
}

impl GridSpec {
    /// Symmetric grid on `[-half_width, half_width]` without tail nodes.
    pub fn symmetric(half_width: f64, points: usize, u_max: f64, u_points: usize) -> Self {
        Self {
            x_min: -half_width,
            x_max: half_width,
            points,
            u_max,
            u_points,
            tails: None,
            mass_tolerance: DEFAULT_MASS_TOLERANCE,
        }
    }

    /// Default simulation grid for `(ν, h)`: `|x| <= 50`, 2¹³ points, 2¹⁴
    /// quadrature nodes up to the adaptive `u_max`, and tail nodes out to
    /// `10⁴` in `J` units.
    pub fn default_for(nu: f64, h: f64) -> Result<Self, LawError> {
        let u_max = adaptive_u_max(nu, h)?;
        Ok(
            Self::symmetric(DEFAULT_HALF_WIDTH, DEFAULT_POINTS, u_max, DEFAULT_U_POINTS)
                .with_tails(DEFAULT_TAIL_REACH / h),
        )
    }

    pub fn with_tails(mut self, x_far: f64) -> Self {
        self.tails = Some(TailSpec {
            x_far: x_far.max(10.0 * self.x_max.max(-self.x_min)),
            nodes_per_decade: DEFAULT_TAIL_NODES_PER_DECADE,
        });
        self
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / (self.points - 1) as f64
    }

    /// Grid abscissa `i`. Computed from the nearer edge so a symmetric grid
    /// is exactly mirror-symmetric.
    pub fn x(&self, i: usize) -> f64 {
        let dx = self.dx();
        let last = self.points - 1;
        if i == last {
            self.x_max
        } else if 2 * i < last {
            self.x_min + i as f64 * dx
        } else {
            self.x_max - (last - i) as f64 * dx
        }
    }

    pub fn is_symmetric(&self) -> bool {
        self.x_min == -self.x_max
    }

    pub fn validate(&self) -> Result<(), LawError> {
        let fail = |msg: String| Err(LawError::Grid(msg));
        if !(self.x_min.is_finite()
            && self.x_max.is_finite()
            && self.x_min < 0.0
            && self.x_max > 0.0)
        {
            return fail(format!(
                "need x_min < 0 < x_max, got [{}, {}]",
                self.x_min, self.x_max
            ));
        }
        if self.points < 64 {
            return fail(format!("points = {} < 64", self.points));
        }
        if !(self.u_max.is_finite() && self.u_max > 0.0) {
            return fail(format!("u_max = {} must be positive", self.u_max));
        }
        if self.u_points < 256 {
            return fail(format!("u_points = {} < 256", self.u_points));
        }
        if !(self.mass_tolerance.is_finite() && self.mass_tolerance > 0.0) {
            return fail(format!(
                "mass_tolerance = {} must be positive",
                self.mass_tolerance
            ));
        }
        if let Some(t) = self.tails {
            if !(t.x_far.is_finite() && t.x_far > self.x_max.max(-self.x_min)) {
                return fail(format!(
                    "tail x_far = {} must exceed the grid edge",
                    t.x_far
                ));
            }
            if t.nodes_per_decade == 0 {
                return fail("tail nodes_per_decade must be positive".into());
            }
        }
        Ok(())
    }
}

/// Quadrature nodes on `[0, u_max]` and the remainder `d(u) = φ_h(u) - e^{-u}`.
struct CfRemainder {
    nodes: Vec<f64>,
    values: Vec<f64>,
    /// `values[k] / nodes[k]` with the origin patched by its neighbour.
    over_u: Vec<f64>,
    uniform_start: usize,
    uniform_step: f64,
}

impl CfRemainder {
    fn build(
        cf: &UnitCf,
        h: f64,
        u_max: f64,
        u_points: usize,
        exec: Execution,
    ) -> Result<Self, LawError> {
        let du = u_max / u_points as f64;
        let mut nodes = vec![0.0];
        let mut u = GRADED_START_RELATIVE * h;
        while u < u_max && u * (GRADED_RATIO - 1.0) < du {
            nodes.push(u);
            u *= GRADED_RATIO;
        }
        let uniform_start = nodes.len() - 1;
        let start = nodes[uniform_start];
        let panels = ((u_max - start) / du).ceil().max(1.0) as usize;
        let uniform_step = (u_max - start) / panels as f64;
        for k in 1..=panels {
            nodes.push(start + k as f64 * uniform_step);
        }
        let values = map_indexed(exec, nodes.len(), |k| {
            let u = nodes[k];
            cf.rescaled_log_excess(u, h)
                .map(|e| (-u).exp() * e.exp_m1())
        })
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
        let mut over_u: Vec<f64> = nodes
            .iter()
            .zip(&values)
            .map(|(&u, &d)| if u > 0.0 { d / u } else { 0.0 })
            .collect();
        over_u[0] = over_u[1];
        Ok(Self {
            nodes,
            values,
            over_u,
            uniform_start,
            uniform_step,
        })
    }

    /// `∫_0^{u_max} e^{iux} p(u) du` for the piecewise-linear interpolant `p`
    /// of `vals` on the nodes.
    fn filon(&self, vals: &[f64], x: f64) -> Complex<f64> {
        let mut acc = Complex::new(0.0, 0.0);
        for k in 0..self.uniform_start {
            let (a, b) = (self.nodes[k], self.nodes[k + 1]);
            let w = b - a;
            let (wa, wb) = filon_weights(w * x);
            acc += Complex::from_polar(w, a * x) * (wa * vals[k] + wb * vals[k + 1]);
        }
        let w = self.uniform_step;
        let (wa, wb) = filon_weights(w * x);
        let rot = Complex::from_polar(1.0, w * x);
        let start = self.nodes[self.uniform_start];
        let mut phase = Complex::new(1.0, 0.0);
        let (mut re, mut im) = (0.0, 0.0);
        let last = self.nodes.len() - 1;
        for k in self.uniform_start..last {
            let step = k - self.uniform_start;
            if step.is_multiple_of(512) {
                phase = Complex::from_polar(1.0, (start + step as f64 * w) * x);
            }
            let (v0, v1) = (vals[k], vals[k + 1]);
            let cr = wa.re * v0 + wb.re * v1;
            let ci = wa.im * v0 + wb.im * v1;
            re += phase.re * cr - phase.im * ci;
            im += phase.re * ci + phase.im * cr;
            phase *= rot;
        }
        acc + Complex::new(re, im) * w
    }

    /// Density of `h⁻¹J_h` at `x`.
    fn pdf(&self, x: f64) -> f64 {
        let x = x.abs();
        cauchy_pdf(x) + FRAC_1_PI * self.filon(&self.values, x).re
    }

    /// `P(h⁻¹J_h > x)` for `x > 0`.
    fn survival(&self, x: f64) -> f64 {
        cauchy_survival(x) - FRAC_1_PI * self.filon(&self.over_u, x).im
    }
}

/// `(∫_0^1 (1-t) e^{iθt} dt, ∫_0^1 t e^{iθt} dt)`.
fn filon_weights(theta: f64) -> (Complex<f64>, Complex<f64>) {
    if theta.abs() < 0.5 {
        let z = Complex::new(0.0, theta);
        let mut term = Complex::new(1.0, 0.0);
        let mut whole = Complex::new(0.0, 0.0);
        let mut second = Complex::new(0.0, 0.0);
        for m in 0..24 {
            let mf = m as f64;
            whole += term / (mf + 1.0);
            second += term / (mf + 2.0);
            term = term * z / (mf + 1.0);
        }
        (whole - second, second)
    } else {
        let e = Complex::from_polar(1.0, theta);
        let iz = Complex::new(0.0, theta);
        let one = Complex::new(1.0, 0.0);
        let second = e / iz + (e - one) / (theta * theta);
        let whole = (e - one) / iz;
        (whole - second, second)
    }
}

/// One tail of the table: survival probabilities at log-spaced `|x|` beyond
/// the grid edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailNodes {
    pub abs_x: Vec<f64>,
    pub survival: Vec<f64>,
    pub pdf: Vec<f64>,
    /// Power-law index used beyond the last node, if any.
    pub pareto_index: Option<f64>,
}

impl TailNodes {
    fn survival_at(&self, a: f64) -> f64 {
        let n = self.abs_x.len();
        let j = self.abs_x.partition_point(|&x| x <= a);
        if j == 0 {
            return self.survival[0];
        }
        if j == n {
            return match self.pareto_index {
                Some(alpha) => self.survival[n - 1] * (a / self.abs_x[n - 1]).powf(-alpha),
                None => 0.0,
            };
        }
        let k = j - 1;
        loglog(
            self.abs_x[k],
            self.survival[k],
            self.abs_x[k + 1],
            self.survival[k + 1],
            a,
        )
    }

    fn inverse(&self, s: f64) -> f64 {
        let n = self.abs_x.len();
        let j = self.survival.partition_point(|&v| v >= s);
        if j == 0 {
            return self.abs_x[0];
        }
        if j == n {
            return match self.pareto_index {
                Some(alpha) => self.abs_x[n - 1] * (s / self.survival[n - 1]).powf(-1.0 / alpha),
                None => self.abs_x[n - 1],
            };
        }
        let k = j - 1;
        loglog(
            self.survival[k],
            self.abs_x[k],
            self.survival[k + 1],
            self.abs_x[k + 1],
            s,
        )
    }

    fn last_mass(&self) -> f64 {
        *self.survival.last().unwrap_or(&0.0)
    }
}

/// Interpolate linearly in `(ln x, ln y)` between two positive points.
fn loglog(x0: f64, y0: f64, x1: f64, y1: f64, x: f64) -> f64 {
    let t = (x.ln() - x0.ln()) / (x1.ln() - x0.ln());
    (y0.ln() + t * (y1.ln() - y0.ln())).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableDiagnostics {
    /// Trapezoid mass on the uniform grid.
    pub grid_mass: f64,
    /// Probability outside `[x_min, x_max]` from CF inversion.
    pub outside_mass: f64,
    pub clipped_mass: f64,
    pub truncation_envelope: f64,
    pub u_nodes: usize,
    /// Mass the sampler cannot reach (beyond the outer tail node when no
    /// power-law extrapolation is attached, or the whole outside mass when
    /// tails are off).
    pub unreachable_mass: f64,
}

/// Gridded law of `h⁻¹ J_h`: pdf and cdf on a uniform grid plus optional
/// tail nodes. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityTable {
    nu: f64,
    h: f64,
    grid: GridSpec,
    pdf: Vec<f64>,
    cdf: Vec<f64>,
    left_tail: Option<TailNodes>,
    right_tail: Option<TailNodes>,
    diagnostics: TableDiagnostics,
}

/// Build the table with the default parallel execution.
pub fn build_density_table(nu: f64, h: f64, grid: &GridSpec) -> Result<DensityTable, LawError> {
    DensityTable::build(nu, h, grid, Execution::default())
}

impl DensityTable {
    pub fn build(nu: f64, h: f64, grid: &GridSpec, exec: Execution) -> Result<Self, LawError> {
        check_h(h)?;
        let cf = UnitCf::new(nu)?;
        grid.validate()?;
        let envelope = (cf.rescaled_log_excess(grid.u_max, h)? - grid.u_max).exp();
        if envelope > TRUNCATION_ENVELOPE {
            return Err(LawError::Truncation {
                u_max: grid.u_max,
                envelope,
            });
        }
        let remainder = CfRemainder::build(&cf, h, grid.u_max, grid.u_points, exec)?;

        let dx = grid.dx();
        let mut pdf = map_indexed(exec, grid.points, |i| remainder.pdf(grid.x(i)));
        let mut clipped = 0.0;
        for p in pdf.iter_mut() {
            if *p < 0.0 {
                clipped -= *p * dx;
                *p = 0.0;
            }
        }
        if clipped > MAX_CLIPPED_MASS {
            return Err(LawError::Clipped { clipped });
        }

        // cumulative trapezoid, then shift so that the cdf is 1/2 at x = 0
        let mut cum = Vec::with_capacity(grid.points);
        cum.push(0.0);
        for i in 1..grid.points {
            cum.push(cum[i - 1] + 0.5 * dx * (pdf[i - 1] + pdf[i]));
        }
        let grid_mass = cum[grid.points - 1];
        let cum_zero = if grid.is_symmetric() {
            0.5 * grid_mass
        } else {
            let below = (0..grid.points)
                .rposition(|i| grid.x(i) <= 0.0)
                .unwrap_or(0);
            let x_below = grid.x(below);
            let pdf_zero = remainder.pdf(0.0).max(0.0);
            cum[below] + 0.5 * (0.0 - x_below) * (pdf[below] + pdf_zero)
        };
        let mut cdf: Vec<f64> = cum.iter().map(|c| 0.5 + c - cum_zero).collect();

        let left_edge = -grid.x_min;
        let survival_left = remainder.survival(left_edge).max(0.0);
        let survival_right = if grid.is_symmetric() {
            survival_left
        } else {
            remainder.survival(grid.x_max).max(0.0)
        };
        let outside_mass = survival_left + survival_right;
        let total = grid_mass + outside_mass;
        if (total - 1.0).abs() > grid.mass_tolerance {
            return Err(LawError::Mass {
                mass: total,
                tolerance: grid.mass_tolerance,
            });
        }
        for c in cdf.iter_mut() {
            *c = c.clamp(0.0, 1.0);
        }

        let (left_tail, right_tail) = match grid.tails {
            None => (None, None),
            Some(spec) => {
                let left_mass = cdf[0];
                let right_mass = 1.0 - cdf[grid.points - 1];
                let left = build_tail(&remainder, left_edge, survival_left, left_mass, &spec, exec);
                let right = build_tail(
                    &remainder,
                    grid.x_max,
                    survival_right,
                    right_mass,
                    &spec,
                    exec,
                );
                (left, right)
            }
        };
        let unreachable_mass = match (&left_tail, &right_tail) {
            (Some(l), Some(r)) => {
                let side = |t: &TailNodes| {
                    if t.pareto_index.is_some() {
                        0.0
                    } else {
                        t.last_mass()
                    }
                };
                side(l) + side(r)
            }
            _ => cdf[0] + 1.0 - cdf[grid.points - 1],
        };

        Ok(Self {
            nu,
            h,
            grid: grid.clone(),
            pdf,
            cdf,
            left_tail,
            right_tail,
            diagnostics: TableDiagnostics {
                grid_mass,
                outside_mass,
                clipped_mass: clipped,
                truncation_envelope: envelope,
                u_nodes: remainder.nodes.len(),
                unreachable_mass,
            },
        })
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn pdf(&self) -> &[f64] {
        &self.pdf
    }

    pub fn cdf(&self) -> &[f64] {
        &self.cdf
    }

    pub fn x(&self, i: usize) -> f64 {
        self.grid.x(i)
    }

    pub fn dx(&self) -> f64 {
        self.grid.dx()
    }

    pub fn diagnostics(&self) -> &TableDiagnostics {
        &self.diagnostics
    }

    pub fn left_tail(&self) -> Option<&TailNodes> {
        self.left_tail.as_ref()
    }

    pub fn right_tail(&self) -> Option<&TailNodes> {
        self.right_tail.as_ref()
    }

    /// Piecewise-linear CDF. Without tail nodes it clamps to 0 below
    /// `x_min` and to 1 above `x_max`; with tail nodes it follows the
    /// log-log interpolated survival curve.
    pub fn cdf_eval(&self, x: f64) -> f64 {
        let g = &self.grid;
        let last = g.points - 1;
        if x.is_nan() {
            return f64::NAN;
        }
        if x < g.x_min {
            return match &self.left_tail {
                Some(t) => t.survival_at(-x),
                None => 0.0,
            };
        }
        if x > g.x_max {
            return match &self.right_tail {
                Some(t) => 1.0 - t.survival_at(x),
                None => 1.0,
            };
        }
        let pos = (x - g.x_min) / g.dx();
        let k = (pos.floor() as usize).min(last - 1);
        let (x0, x1) = (g.x(k), g.x(k + 1));
        let t = ((x - x0) / (x1 - x0)).clamp(0.0, 1.0);
        self.cdf[k] + t * (self.cdf[k + 1] - self.cdf[k])
    }

    /// Inverse of [`cdf_eval`](Self::cdf_eval) for `p ∈ (0, 1)`.
    pub fn quantile(&self, p: f64) -> Result<f64, LawError> {
        if !(p > 0.0 && p < 1.0) {
            return Err(LawError::Domain {
                what: "p",
                value: p,
                domain: "0 < p < 1",
            });
        }
        Ok(self.quantile_unchecked(p))
    }

    fn quantile_unchecked(&self, p: f64) -> f64 {
        let g = &self.grid;
        let last = g.points - 1;
        if p < self.cdf[0] {
            return match &self.left_tail {
                Some(t) => -t.inverse(p),
                None => g.x_min,
            };
        }
        if p > self.cdf[last] {
            return match &self.right_tail {
                Some(t) => t.inverse(1.0 - p),
                None => g.x_max,
            };
        }
        // first k with cdf[k + 1] >= p
        let j = self.cdf.partition_point(|&c| c < p);
        if j == 0 {
            return g.x(0);
        }
        let k = j - 1;
        let (c0, c1) = (self.cdf[k], self.cdf[k + 1]);
        let (x0, x1) = (g.x(k), g.x(k + 1));
        if c1 <= c0 {
            return x0;
        }
        x0 + (p - c0) / (c1 - c0) * (x1 - x0)
    }

    /// One inverse-CDF draw.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let p: f64 = rng.sample(Open01);
        self.quantile_unchecked(p)
    }

    /// `count` draws from a ChaCha8 stream seeded with `seed`.
    pub fn sample_increments(&self, count: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count).map(|_| self.draw(&mut rng)).collect()
    }

    /// `Σ |pdf[i] - φ₁(x_i)| Δx` over the uniform grid.
    pub fn l1_distance_to_cauchy(&self) -> f64 {
        let dx = self.dx();
        self.pdf
            .iter()
            .enumerate()
            .map(|(i, p)| (p - cauchy_pdf(self.x(i))).abs())
            .sum::<f64>()
            * dx
    }

    /// All `(x, pdf, cdf)` rows in increasing `x`, tail nodes included.
    pub fn rows(&self) -> Vec<(f64, f64, f64)> {
        let mut rows = Vec::with_capacity(self.grid.points);
        if let Some(t) = &self.left_tail {
            for k in (1..t.abs_x.len()).rev() {
                rows.push((-t.abs_x[k], t.pdf[k], t.survival[k]));
            }
        }
        for i in 0..self.grid.points {
            rows.push((self.x(i), self.pdf[i], self.cdf[i]));
        }
        if let Some(t) = &self.right_tail {
            for k in 1..t.abs_x.len() {
                rows.push((t.abs_x[k], t.pdf[k], 1.0 - t.survival[k]));
            }
        }
        rows
    }
}

/// Log-spaced survival nodes from `edge` outward, rescaled so the first node
/// carries exactly `edge_mass` (the cdf mass the uniform grid leaves on
/// this side), truncated where the inversion reaches numerical noise.
fn build_tail(
    remainder: &CfRemainder,
    edge: f64,
    edge_survival: f64,
    edge_mass: f64,
    spec: &TailSpec,
    exec: Execution,
) -> Option<TailNodes> {
    if edge_survival <= 0.0 || edge_mass <= 0.0 {
        return None;
    }
    let decades = (spec.x_far / edge).log10();
    let count = (decades * spec.nodes_per_decade as f64).ceil().max(1.0) as usize;
    let ratio = (spec.x_far / edge).powf(1.0 / count as f64);
    let abs_x: Vec<f64> = (0..=count)
        .map(|k| {
            if k == count {
                spec.x_far
            } else {
                edge * ratio.powi(k as i32)
            }
        })
        .collect();
    let raw = map_indexed(exec, abs_x.len(), |k| {
        if k == 0 {
            (edge_survival, remainder.pdf(abs_x[0]))
        } else {
            (remainder.survival(abs_x[k]), remainder.pdf(abs_x[k]))
        }
    });
    let scale = edge_mass / edge_survival;
    let mut nodes = TailNodes {
        abs_x: vec![abs_x[0]],
        survival: vec![edge_mass],
        pdf: vec![raw[0].1.max(0.0)],
        pareto_index: None,
    };
    for k in 1..abs_x.len() {
        let s = raw[k].0;
        let prev = raw[k - 1].0;
        if !(s > SURVIVAL_FLOOR && s < prev) {
            break;
        }
        nodes.abs_x.push(abs_x[k]);
        nodes.survival.push(s * scale);
        nodes.pdf.push(raw[k].1.max(0.0));
    }
    let n = nodes.abs_x.len();
    if n >= 2 && nodes.survival[n - 1] >= PARETO_MIN_MASS {
        let alpha = -(nodes.survival[n - 1].ln() - nodes.survival[n - 2].ln())
            / (nodes.abs_x[n - 1].ln() - nodes.abs_x[n - 2].ln());
        if alpha.is_finite() && alpha > 0.0 {
            nodes.pareto_index = Some(alpha);
        }
    }
    Some(nodes)
}

/// Density of the unit-time law `t_ν(0, 1)`.
pub fn student_unit_pdf(x: f64, nu: f64) -> Result<f64, LawError> {
    check_nu(nu)?;
    let log_c = log_gamma(0.5 * (nu + 1.0))? - 0.5 * PI.ln() - log_gamma(0.5 * nu)?;
    Ok((log_c - 0.5 * (nu + 1.0) * (x * x).ln_1p()).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn small_grid(nu: f64, h: f64) -> GridSpec {
        GridSpec::symmetric(50.0, 2049, adaptive_u_max(nu, h).unwrap(), 4096)
    }

    #[test]
    fn cf_examples() {
        assert_eq!(cf_unit(0.0, 3.0).unwrap(), 1.0);
        for &u in &[0.1, 1.0, 2.5, 20.0] {
            assert_relative_eq!(cf_unit(u, 1.0).unwrap(), (-u).exp(), max_relative = 1e-13);
            assert_relative_eq!(cf_unit(-u, 1.0).unwrap(), (-u).exp(), max_relative = 1e-13);
        }
        assert_relative_eq!(
            cf_unit(1.0, 2.0).unwrap(),
            0.601_907_230_197_234_6,
            max_relative = 1e-12
        );
        for &u in &[0.0, 0.3, 1.0, 7.0] {
            let v = cf_unit(u, 4.5).unwrap();
            assert!(v > 0.0 && v <= 1.0);
        }
        assert!(cf_unit(1.0, 0.0).is_err());
        assert!(cf_unit(1.0, -2.0).is_err());
    }

    #[test]
    fn log_cf_rescaled_examples() {
        for &h in &[1.0, 0.1, 1e-3, 1e-6] {
            assert_eq!(log_cf_rescaled(0.0, 2.0, h).unwrap(), 0.0);
            for &u in &[0.01, 1.0, 30.0] {
                assert!((log_cf_rescaled(u, 1.0, h).unwrap() + u).abs() < 1e-12);
            }
        }
        // |u|/h = 1e8 stays finite
        let v = log_cf_rescaled(10.0, 3.0, 1e-7).unwrap();
        assert!(v.is_finite() && v <= 0.0);
        // approaches -|u| as h -> 0
        for &nu in &[0.5, 2.0, 5.0] {
            let err = |h: f64| (log_cf_rescaled(1.0, nu, h).unwrap() + 1.0).abs();
            assert!(err(1e-4) < err(1e-2));
            assert!(err(1e-6) < 1e-4);
        }
        assert!(log_cf_rescaled(1.0, 1.0, 0.0).is_err());
        assert!(log_cf_rescaled(1.0, 1.0, 1.5).is_err());
    }

    #[test]
    fn cauchy_table_is_exact() {
        let table = DensityTable::build(
            1.0,
            1.0 / 200.0,
            &small_grid(1.0, 0.005),
            Execution::Sequential,
        )
        .unwrap();
        for i in 0..table.grid().points {
            let x = table.x(i);
            assert!((table.pdf()[i] - cauchy_pdf(x)).abs() < 1e-10);
        }
        assert!((table.cdf_eval(1.0) - 0.75).abs() < 1e-4);
        assert!((table.cdf_eval(0.0) - 0.5).abs() < 1e-6);
        assert!(table.l1_distance_to_cauchy() < 1e-6);
    }

    #[test]
    fn unit_time_table_matches_student_density() {
        for &nu in &[0.5, 1.0, 2.0, 3.0, 5.0] {
            let grid = GridSpec::symmetric(
                50.0,
                2049,
                adaptive_u_max(nu, 1.0).unwrap(),
                DEFAULT_U_POINTS,
            );
            let table = DensityTable::build(nu, 1.0, &grid, Execution::Sequential).unwrap();
            for i in (0..table.grid().points).step_by(7) {
                let x = table.x(i);
                let exact = student_unit_pdf(x, nu).unwrap();
                assert!(
                    (table.pdf()[i] - exact).abs() < 1e-6,
                    "nu={nu} x={x} err={}",
                    table.pdf()[i] - exact
                );
            }
        }
    }

    #[test]
    fn clamping_without_tails() {
        let table =
            DensityTable::build(2.0, 0.1, &small_grid(2.0, 0.1), Execution::Sequential).unwrap();
        assert_eq!(table.cdf_eval(51.0), 1.0);
        assert_eq!(table.cdf_eval(-51.0), 0.0);
        assert_eq!(table.quantile(1e-9).unwrap(), -50.0);
        assert!(table.quantile(0.0).is_err());
        assert!(table.quantile(1.0).is_err());
    }

    #[test]
    fn truncation_error_when_u_max_too_small() {
        let grid = GridSpec::symmetric(50.0, 257, 5.0, 512);
        assert!(matches!(
            DensityTable::build(2.0, 0.01, &grid, Execution::Sequential),
            Err(LawError::Truncation { .. })
        ));
    }

    #[test]
    fn mass_error_when_grid_too_coarse() {
        // spacing far wider than the density peak
        let mut grid = GridSpec::symmetric(50.0, 64, adaptive_u_max(1.0, 0.01).unwrap(), 1024);
        grid.mass_tolerance = 1e-6;
        assert!(matches!(
            DensityTable::build(1.0, 0.01, &grid, Execution::Sequential),
            Err(LawError::Mass { .. })
        ));
    }

    #[test]
    fn grid_validation() {
        let ok = GridSpec::symmetric(10.0, 64, 30.0, 256);
        assert!(ok.validate().is_ok());
        assert!(GridSpec::symmetric(10.0, 63, 30.0, 256).validate().is_err());
        assert!(GridSpec::symmetric(10.0, 64, 30.0, 255).validate().is_err());
        assert!(GridSpec::symmetric(10.0, 64, -1.0, 256).validate().is_err());
        let mut lopsided = ok.clone();
        lopsided.x_min = 1.0;
        assert!(lopsided.validate().is_err());
        let g = GridSpec::symmetric(3.0, 101, 30.0, 256);
        for i in 0..101 {
            assert_eq!(g.x(i), -g.x(100 - i));
        }
    }

    #[test]
    fn tails_continue_the_cdf() {
        let grid = small_grid(1.0, 0.01).with_tails(1e6);
        let table = DensityTable::build(1.0, 0.01, &grid, Execution::Sequential).unwrap();
        for &x in &[60.0, 300.0, 5e3, 2e5] {
            assert!(
                (table.cdf_eval(x) - cauchy_cdf(x)).abs() < 1e-6 * (1.0 + 1.0 / x),
                "x={x}"
            );
            assert!((table.cdf_eval(-x) - cauchy_cdf(-x)).abs() < 1e-6, "x={x}");
        }
        for &p in &[1e-7, 1e-4, 0.003, 0.997, 1.0 - 1e-6] {
            let q = table.quantile(p).unwrap();
            assert!(
                (table.cdf_eval(q) - p).abs() < 1e-10 * (1.0 + 1.0 / p),
                "p={p}"
            );
            let exact = (PI * (p - 0.5)).tan();
            assert!(
                (q - exact).abs() < 1e-3 * exact.abs().max(1.0),
                "p={p} q={q} exact={exact}"
            );
        }
    }
}
