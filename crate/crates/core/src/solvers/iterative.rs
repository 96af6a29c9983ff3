use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use super::gradient::GradientOperator;
use super::tv::tv_box_prox;
use super::{IterationRecord, Method, ReconResult, SolverConfig};
use crate::error::{check_dim, Error, Result};
use crate::linalg::{box_violation, spectral_norm, ShiftedGram};

/// Largest operator norm accepted by the forward-backward iteration with unit step.
pub const FB_NORM_LIMIT: f64 = 1.0 + 1e-6;

/// Shared bookkeeping for the iterative solvers.
struct Problem<'a> {
    operator: &'a DMatrix<f64>,
    data: &'a DVector<f64>,
    grad: GradientOperator,
    config: &'a SolverConfig,
}

impl<'a> Problem<'a> {
    fn new(
        operator: &'a DMatrix<f64>,
        data: &'a DVector<f64>,
        grad: GradientOperator,
        config: &'a SolverConfig,
    ) -> Result<Self> {
        config.validate()?;
        check_dim("data length", operator.nrows(), data.len())?;
        check_dim("image size", grad.domain_dim(), operator.ncols())?;
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("measurement data".into()));
        }
        Ok(Self {
            operator,
            data,
            grad,
            config,
        })
    }

    fn upper(&self) -> Option<f64> {
        self.config.box_constraint.then_some(self.config.n_max)
    }

    /// `½‖y − Mn‖² + α‖∇n‖₁`; the box indicator is reported separately as feasibility.
    fn objective(&self, n: &DVector<f64>) -> Result<f64> {
        let residual = self.operator * n - self.data;
        let tv = if self.config.alpha > 0.0 {
            self.config.alpha * self.grad.total_variation(n)?
        } else {
            0.0
        };
        Ok(0.5 * residual.norm_squared() + tv)
    }

    fn violation(&self, x: &DVector<f64>) -> f64 {
        match self.upper() {
            Some(hi) => box_violation(x, hi),
            None => 0.0,
        }
    }

    fn prox(&self, v: &DVector<f64>, weight: f64) -> Result<DVector<f64>> {
        tv_box_prox(&self.grad, v, weight, self.upper(), self.config.inner_iter)
    }
}

fn relative_change(current: &DVector<f64>, previous: &DVector<f64>) -> f64 {
    let diff = (current - previous).norm();
    let norm = current.norm();
    if norm > 0.0 {
        diff / norm
    } else if diff == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

fn ensure_finite(x: &DVector<f64>, what: &str, iteration: usize) -> Result<()> {
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!(
            "{what} entry {i} at iteration {iteration}"
        )));
    }
    Ok(())
}

/// Douglas-Rachford splitting for `½‖y − Mn‖² + α‖∇n‖₁ + i_C(n)`.
///
/// Each iteration performs
///
/// ```text
///   n_k   = (MᵀM + μI)⁻¹ (Mᵀy + μ z_k)
///   z̃_k   = argmin_z ½‖(2n_k − z_k) − z‖² + (α/μ)‖∇z‖₁ + i_C(z)
///   z_k+1 = z_k + s (z̃_k − n_k)
/// ```
///
/// starting from `z = 0`. `MᵀM + μI` is factored once. The returned
/// reconstruction is the last `z̃`; the last `n` is kept as `data_iterate`.
pub fn douglas_rachford_solve(
    operator: &DMatrix<f64>,
    data: &DVector<f64>,
    grad: GradientOperator,
    config: &SolverConfig,
) -> Result<ReconResult> {
    let start = Instant::now();
    let problem = Problem::new(operator, data, grad, config)?;
    let mu = config.mu;
    let weight = config.alpha / mu;

    let factor = ShiftedGram::new(operator, mu)?;
    let mty = operator.tr_mul(data);

    let nv = operator.ncols();
    let mut z = DVector::zeros(nv);
    let mut n_prev = DVector::zeros(nv);
    let mut n = DVector::zeros(nv);
    let mut z_tilde = DVector::zeros(nv);
    let mut trace = Vec::with_capacity(config.n_iter);

    for k in 1..=config.n_iter {
        let mut rhs = mty.clone();
        rhs.axpy(mu, &z, 1.0);
        n = factor.solve(&rhs)?;
        ensure_finite(&n, "data-step iterate", k)?;

        let reflected = &n * 2.0 - &z;
        z_tilde = problem.prox(&reflected, weight)?;
        ensure_finite(&z_tilde, "prox iterate", k)?;

        z.axpy(config.relaxation, &(&z_tilde - &n), 1.0);

        let change = relative_change(&n, &n_prev);
        trace.push(IterationRecord {
            iteration: k,
            objective: problem.objective(&z_tilde)?,
            relative_change: change,
            feasibility_violation: problem.violation(&z_tilde),
            data_step_violation: problem.violation(&n),
        });
        n_prev.copy_from(&n);

        if config.tolerance > 0.0 && change < config.tolerance {
            break;
        }
    }

    Ok(ReconResult {
        method: Method::DouglasRachford,
        reconstruction: z_tilde,
        data_iterate: n,
        trace,
        config: config.clone(),
        wall_time: start.elapsed(),
    })
}

/// Forward-backward splitting with unit step:
///
/// ```text
///   z_k   = n_k − Mᵀ(M n_k − y)
///   n_k+1 = argmin_n ½‖z_k − n‖² + α‖∇n‖₁ + i_C(n)
/// ```
///
/// starting from `n = 0`. Requires `‖M‖₂ ≤ 1`.
pub fn forward_backward_solve(
    operator: &DMatrix<f64>,
    data: &DVector<f64>,
    grad: GradientOperator,
    config: &SolverConfig,
) -> Result<ReconResult> {
    let start = Instant::now();
    let problem = Problem::new(operator, data, grad, config)?;
    let norm = spectral_norm(operator);
    if norm > FB_NORM_LIMIT {
        return Err(Error::InvalidArgument(format!(
            "forward-backward needs a normalized operator, got ‖M‖₂ = {norm}"
        )));
    }

    let nv = operator.ncols();
    let mut n = DVector::zeros(nv);
    let mut z = DVector::zeros(nv);
    let mut trace = Vec::with_capacity(config.n_iter);

    for k in 1..=config.n_iter {
        let residual = operator * &n - data;
        z = &n - operator.tr_mul(&residual);
        ensure_finite(&z, "gradient-step iterate", k)?;

        let next = problem.prox(&z, config.alpha)?;
        ensure_finite(&next, "prox iterate", k)?;

        let change = relative_change(&next, &n);
        n = next;
        trace.push(IterationRecord {
            iteration: k,
            objective: problem.objective(&n)?,
            relative_change: change,
            feasibility_violation: problem.violation(&n),
            data_step_violation: problem.violation(&z),
        });

        if config.tolerance > 0.0 && change < config.tolerance {
            break;
        }
    }

    Ok(ReconResult {
        method: Method::ForwardBackward,
        reconstruction: n,
        data_iterate: z,
        trace,
        config: config.clone(),
        wall_time: start.elapsed(),
    })
}
