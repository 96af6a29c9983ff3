use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Result};
use crate::linalg::{gram, ShiftedGram};

/// Penalized least squares `(MᵀM + μI)⁻¹ Mᵀb` by Cholesky.
pub fn quadratic_tikhonov(operator: &DMatrix<f64>, data: &DVector<f64>, mu: f64) -> Result<DVector<f64>> {
    check_dim("data length", operator.nrows(), data.len())?;
    let factor = ShiftedGram::new(operator, mu)?;
    factor.solve(&operator.tr_mul(data))
}

/// Tikhonov solver that keeps `MᵀM` and `Mᵀb` so several shifts can be tried.
pub struct TikhonovPath<'a> {
    operator: &'a DMatrix<f64>,
    data: &'a DVector<f64>,
    gram: DMatrix<f64>,
    rhs: DVector<f64>,
}

impl<'a> TikhonovPath<'a> {
    pub fn new(operator: &'a DMatrix<f64>, data: &'a DVector<f64>) -> Result<Self> {
        check_dim("data length", operator.nrows(), data.len())?;
        Ok(Self {
            operator,
            data,
            gram: gram(operator),
            rhs: operator.tr_mul(data),
        })
    }

    pub fn solve(&self, mu: f64) -> Result<DVector<f64>> {
        ShiftedGram::from_gram(&self.gram, mu)?.solve(&self.rhs)
    }

    /// Squared residual `‖Mx − b‖²`.
    pub fn residual_sq(&self, x: &DVector<f64>) -> f64 {
        (self.operator * x - self.data).norm_squared()
    }
}
