//! Reconstruction algorithms: quadratic Tikhonov, Douglas-Rachford splitting with a
//! nested TV + box prox, and the forward-backward comparator.

mod gradient;
mod iterative;
mod tikhonov;
mod tv;

use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use gradient::GradientOperator;
pub use iterative::{douglas_rachford_solve, forward_backward_solve, FB_NORM_LIMIT};
pub use tikhonov::{quadratic_tikhonov, TikhonovPath};
pub use tv::{prox_objective, tv1d_denoise, tv_box_prox, DEFAULT_INNER_ITER};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Tikhonov,
    DouglasRachford,
    ForwardBackward,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Tikhonov => "tikhonov",
            Method::DouglasRachford => "douglas_rachford",
            Method::ForwardBackward => "forward_backward",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tikhonov" => Ok(Method::Tikhonov),
            "douglas_rachford" => Ok(Method::DouglasRachford),
            "forward_backward" => Ok(Method::ForwardBackward),
            other => Err(Error::InvalidArgument(format!("unknown solver `{other}`"))),
        }
    }
}

/// Parameters of the sparse reconstruction.
///
/// Defaults: `μ = 4·10⁻¹³`, `α = 10⁻¹⁴`, `s = 1`, `n_max = 1`, 50 outer and 30
/// inner iterations, box constraint active, no early stopping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    /// Implicit step / Tikhonov shift `μ`.
    pub mu: f64,
    /// TV weight `α`.
    pub alpha: f64,
    /// Whether the box `[0, n_max]` is enforced.
    pub box_constraint: bool,
    /// Relaxation `s ∈ (0, 2)`.
    pub relaxation: f64,
    pub n_max: f64,
    pub n_iter: usize,
    pub inner_iter: usize,
    /// Stop once the relative iterate change drops below this; 0 disables.
    pub tolerance: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            mu: 4e-13,
            alpha: 1e-14,
            box_constraint: true,
            relaxation: 1.0,
            n_max: 1.0,
            n_iter: 50,
            inner_iter: DEFAULT_INNER_ITER,
            tolerance: 0.0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(self.mu > 0.0) || !self.mu.is_finite() {
            return bad(format!("mu must be positive, got {}", self.mu));
        }
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return bad(format!("alpha must be nonnegative, got {}", self.alpha));
        }
        if !(self.relaxation > 0.0 && self.relaxation < 2.0) {
            return bad(format!("relaxation must lie in (0, 2), got {}", self.relaxation));
        }
        if !(self.n_max > 0.0) || !self.n_max.is_finite() {
            return bad(format!("n_max must be positive, got {}", self.n_max));
        }
        if self.n_iter == 0 {
            return bad("n_iter must be at least 1".into());
        }
        if !(self.tolerance >= 0.0) {
            return bad(format!("tolerance must be nonnegative, got {}", self.tolerance));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    /// `½‖y − Mn‖² + α‖∇n‖₁` at the returned iterate.
    pub objective: f64,
    /// `‖n_k − n_{k−1}‖ / ‖n_k‖` of the data-step iterate.
    pub relative_change: f64,
    /// Box violation of the returned (prox) iterate.
    pub feasibility_violation: f64,
    /// Box violation of the data-step iterate.
    pub data_step_violation: f64,
}

#[derive(Debug, Clone)]
pub struct ReconResult {
    pub method: Method,
    pub reconstruction: DVector<f64>,
    pub data_iterate: DVector<f64>,
    pub trace: Vec<IterationRecord>,
    pub config: SolverConfig,
    pub wall_time: Duration,
}

impl ReconResult {
    pub fn iterations(&self) -> usize {
        self.trace.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_parameters_validate() {
        let cfg = SolverConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.mu, 4e-13);
        assert_eq!(cfg.alpha, 1e-14);
        assert_eq!(cfg.relaxation, 1.0);
        assert_eq!(cfg.n_max, 1.0);
        assert_eq!(cfg.n_iter, 50);
    }

    #[test]
    fn invalid_configs_rejected() {
        let base = SolverConfig::default();
        for cfg in [
            SolverConfig { relaxation: 2.0, ..base.clone() },
            SolverConfig { relaxation: 0.0, ..base.clone() },
            SolverConfig { mu: 0.0, ..base.clone() },
            SolverConfig { alpha: -1.0, ..base.clone() },
            SolverConfig { n_iter: 0, ..base.clone() },
        ] {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }

    #[test]
    fn method_names() {
        for m in [Method::Tikhonov, Method::DouglasRachford, Method::ForwardBackward] {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert!("chambolle_pock".parse::<Method>().is_err());
    }
}
