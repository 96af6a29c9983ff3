use nalgebra::DVector;

use crate::error::{check_dim, Result};

/// Forward-difference gradient on a `rows × cols` image stored row-major.
///
/// Output is the horizontal differences (along a row) stacked over the vertical
/// ones. Differences across the last column / last row are zero (replicate
/// boundary), so constant images map to zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GradientOperator {
    rows: usize,
    cols: usize,
}

impl GradientOperator {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self { rows, cols }
    }

    pub fn square(n: usize) -> Self {
        Self::new(n, n)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn domain_dim(&self) -> usize {
        self.rows * self.cols
    }

    pub fn range_dim(&self) -> usize {
        2 * self.domain_dim()
    }

    pub fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("gradient input", self.domain_dim(), x.len())?;
        let (r, c) = (self.rows, self.cols);
        let n = r * c;
        let mut out = DVector::zeros(2 * n);
        for i in 0..r {
            for j in 0..c {
                let k = i * c + j;
                if j + 1 < c {
                    out[k] = x[k + 1] - x[k];
                }
                if i + 1 < r {
                    out[n + k] = x[k + c] - x[k];
                }
            }
        }
        Ok(out)
    }

    /// Exact transpose of [`apply`](Self::apply) (a negative divergence).
    pub fn adjoint(&self, p: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("gradient adjoint input", self.range_dim(), p.len())?;
        let (r, c) = (self.rows, self.cols);
        let n = r * c;
        let mut out = DVector::zeros(n);
        for i in 0..r {
            for j in 0..c {
                let k = i * c + j;
                let mut acc = 0.0;
                if j >= 1 {
                    acc += p[k - 1];
                }
                if j + 1 < c {
                    acc -= p[k];
                }
                if i >= 1 {
                    acc += p[n + k - c];
                }
                if i + 1 < r {
                    acc -= p[n + k];
                }
                out[k] = acc;
            }
        }
        Ok(out)
    }

    /// Anisotropic total variation `‖∇x‖₁`.
    pub fn total_variation(&self, x: &DVector<f64>) -> Result<f64> {
        Ok(self.apply(x)?.lp_norm(1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_image_has_zero_gradient() {
        let g = GradientOperator::new(4, 5);
        let x = DVector::from_element(20, 3.7);
        assert!(g.apply(&x).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn stencil_on_step_rows() {
        let g = GradientOperator::square(3);
        let x = DVector::from_vec(vec![0.0, 1.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0]);
        let d = g.apply(&x).unwrap();
        for row in 0..3 {
            assert_eq!(&d.as_slice()[3 * row..3 * row + 3], &[1.0, 0.0, 0.0]);
        }
        assert!(d.rows(9, 9).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn boundary_rows_are_zero() {
        let g = GradientOperator::new(3, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = DVector::from_fn(12, |_, _| rng.random::<f64>());
        let d = g.apply(&x).unwrap();
        for i in 0..3 {
            assert_eq!(d[i * 4 + 3], 0.0);
        }
        for j in 0..4 {
            assert_eq!(d[12 + 2 * 4 + j], 0.0);
        }
    }

    #[test]
    fn adjoint_identity_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for trial in 0..100 {
            let (r, c) = (1 + trial % 7, 1 + (trial * 3) % 9);
            let g = GradientOperator::new(r, c);
            let x = DVector::from_fn(g.domain_dim(), |_, _| rng.random::<f64>() - 0.5);
            let p = DVector::from_fn(g.range_dim(), |_, _| rng.random::<f64>() - 0.5);
            let lhs = g.apply(&x).unwrap().dot(&p);
            let rhs = x.dot(&g.adjoint(&p).unwrap());
            let scale = lhs.abs().max(rhs.abs()).max(1e-300);
            assert!((lhs - rhs).abs() / scale <= 1e-12 || (lhs - rhs).abs() < 1e-15);
        }
    }

    #[test]
    fn dimension_mismatch() {
        let g = GradientOperator::square(3);
        assert!(g.apply(&DVector::zeros(8)).is_err());
        assert!(g.adjoint(&DVector::zeros(9)).is_err());
    }

    #[test]
    fn total_variation_of_step() {
        let g = GradientOperator::new(2, 3);
        let x = DVector::from_vec(vec![0.0, 2.0, 2.0, 0.0, 2.0, 5.0]);
        // horizontal: 2 + 0 + 2 + 3, vertical: 0 + 0 + 3
        assert_eq!(g.total_variation(&x).unwrap(), 10.0);
    }
}
