//! Stage one on `[0, B_n]`, unit residuals on `[0, T_n]`, stage two, and
//! the inference summary, for one path.

use serde::{Deserialize, Serialize};

use crate::cqmle::{fit_increments, CqmleFit, FitOptions, Increments, TrendScale};
use crate::error::Error;
use crate::inference::{assemble, studentize, FitResult, DEFAULT_LEVEL};
use crate::model::{SamplingDesign, Theta};
use crate::simulator::PathSample;
use crate::tqmle::{fit_tqmle, unit_residuals, Boundary, TqmleFit, DEFAULT_NU_BOUNDS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineOptions {
    pub fit: FitOptions,
    pub nu_bounds: (f64, f64),
    pub level: f64,
    pub init: Option<TrendScale>,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            fit: FitOptions::default(),
            nu_bounds: DEFAULT_NU_BOUNDS,
            level: DEFAULT_LEVEL,
            init: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathFit {
    pub cqmle: CqmleFit,
    pub tqmle: TqmleFit,
    pub inference: FitResult,
}

impl PathFit {
    /// Both stages converged in the interior.
    pub fn ok(&self) -> bool {
        self.cqmle.converged && self.tqmle.converged && self.tqmle.boundary_flag == Boundary::None
    }

    /// Why the fit counts as failed, if it does.
    pub fn failure(&self) -> Option<String> {
        if self.cqmle.boundary {
            Some("cqmle hit the parameter box".into())
        } else if !self.cqmle.converged {
            Some(format!(
                "cqmle did not converge (gradient norm {:e})",
                self.cqmle.gradient_norm
            ))
        } else if self.tqmle.boundary_flag != Boundary::None {
            Some(format!("nu estimate on the {:?} bound", self.tqmle.boundary_flag).to_lowercase())
        } else if !self.tqmle.converged {
            Some("tqmle did not converge".into())
        } else {
            None
        }
    }
}

/// Fit `path` under `design` (whose `B_n` selects the stage-one window) and
/// studentize against `theta0` when given.
pub fn fit_path(
    path: &PathSample,
    design: &SamplingDesign,
    theta0: Option<&Theta>,
    opts: &PipelineOptions,
) -> Result<PathFit, Error> {
    let inc = Increments::from_path(path, design)?;
    let cq = fit_increments(&inc, opts.init.as_ref(), &opts.fit)?;
    let residuals = unit_residuals(path, &cq.mu_hat, cq.sigma_hat)?;
    let tq = fit_tqmle(&residuals, opts.nu_bounds)?;
    let mut inference = assemble(
        &inc.gram(),
        &cq,
        tq.nu_hat,
        residuals.len(),
        design,
        opts.level,
    )?;
    inference.warnings.extend(path.warnings.iter().cloned());
    inference.warnings.sort();
    inference.warnings.dedup();
    if let Some(t) = theta0 {
        inference.studentized = Some(studentize(&inference, t)?);
    }
    Ok(PathFit {
        cqmle: cq,
        tqmle: tq,
        inference,
    })
}
