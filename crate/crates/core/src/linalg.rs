//! Dense linear-algebra helpers shared by the model, sensing and solver modules.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_dim, Error, Result};

/// Relative tolerance on the dominant eigenvalue of `AᵀA` used by [`spectral_norm`].
pub const POWER_ITERATION_TOL: f64 = 1e-10;
const POWER_ITERATION_MAX: usize = 100_000;
/// Block size of the subspace iteration in [`spectral_norm`].
pub const POWER_BLOCK: usize = 8;
const POWER_ITERATION_SEED: u64 = 0x5eed_0f9e_5a17;

/// Largest singular value of `a`, by block power iteration on `AᵀA`.
///
/// A block of [`POWER_BLOCK`] vectors is iterated with Rayleigh-Ritz extraction, so
/// clustered leading singular values do not stall convergence. The start block is
/// drawn from a fixed seed, so the result is deterministic. Iteration stops once
/// the eigen-residual `‖AᵀAx − λx‖` of the leading Ritz pair falls below
/// [`POWER_ITERATION_TOL`]`·λ`, which bounds the relative error of `λ`.
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    let n = a.ncols();
    if n == 0 || a.nrows() == 0 {
        return 0.0;
    }
    // Tall matrices: one Gram product up front is cheaper than two passes per sweep.
    let g = (a.nrows() > 2 * n).then(|| gram(a));
    let apply = |x: &DMatrix<f64>| match &g {
        Some(g) => g * x,
        None => a.tr_mul(&(a * x)),
    };
    let p = POWER_BLOCK.min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(POWER_ITERATION_SEED);
    let mut x = DMatrix::from_fn(n, p, |_, _| rng.random::<f64>() - 0.5);

    let mut lambda = 0.0_f64;
    for _ in 0..POWER_ITERATION_MAX {
        let q = x.qr().q();
        let w = apply(&q);
        let t = q.tr_mul(&w);
        let t = (&t + t.transpose()) * 0.5;
        let eig = t.symmetric_eigen();
        let (top, &theta) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .expect("block is nonempty");
        if theta <= 0.0 {
            return 0.0;
        }
        lambda = theta;
        let s = eig.eigenvectors.column(top);
        let residual = (&w * s - (&q * s) * theta).norm();
        if residual <= POWER_ITERATION_TOL * theta {
            break;
        }
        x = w * &eig.eigenvectors;
    }
    lambda.sqrt()
}

/// `AᵀA` computed through the blocked matrix product.
pub fn gram(a: &DMatrix<f64>) -> DMatrix<f64> {
    a.transpose() * a
}

/// Cholesky factorization of `AᵀA + μI`, reusable across right-hand sides.
#[derive(Clone)]
pub struct ShiftedGram {
    factor: Cholesky<f64, Dyn>,
    mu: f64,
}

impl ShiftedGram {
    pub fn new(a: &DMatrix<f64>, mu: f64) -> Result<Self> {
        Self::from_gram(&gram(a), mu)
    }

    pub fn from_gram(gram: &DMatrix<f64>, mu: f64) -> Result<Self> {
        if !(mu > 0.0) || !mu.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "Tikhonov shift must be positive and finite, got {mu}"
            )));
        }
        check_dim("Gram matrix columns", gram.nrows(), gram.ncols())?;
        let mut shifted = gram.clone();
        for i in 0..shifted.nrows() {
            shifted[(i, i)] += mu;
        }
        let factor = Cholesky::new(shifted).ok_or_else(|| {
            Error::Factorization(format!(
                "AᵀA + μI is not numerically positive definite for μ = {mu:e}"
            ))
        })?;
        Ok(Self { factor, mu })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn dim(&self) -> usize {
        self.factor.l_dirty().nrows()
    }

    pub fn solve(&self, rhs: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("right-hand side", self.dim(), rhs.len())?;
        Ok(self.factor.solve(rhs))
    }
}

/// Euclidean distance of `x` to the box `[0, upper]ⁿ`, measured as the max violation.
pub fn box_violation(x: &DVector<f64>, upper: f64) -> f64 {
    x.iter()
        .map(|&v| {
            if v < 0.0 {
                -v
            } else if v > upper {
                v - upper
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max)
}
