//! Proximal map of anisotropic total variation plus a box constraint.

use nalgebra::DVector;

use super::gradient::GradientOperator;
use crate::error::{check_dim, Error, Result};

/// Default number of inner Douglas-Rachford sweeps per prox evaluation.
pub const DEFAULT_INNER_ITER: usize = 30;

/// Exact 1D total-variation denoising,
/// `argmin_x ½‖x − input‖² + λ Σ |x_{i+1} − x_i|`, in `O(n)` by dynamic programming.
///
/// The derivative of the partial value function is piecewise linear; a forward
/// pass keeps its knots in a deque laid out in `knot`/`da`/`db` and records the
/// clipping interval `[lo_k, hi_k]` of each step, a backward pass clips.
/// N. Johnson, "A dynamic programming algorithm for the fused lasso and
/// L0-segmentation", J. Comput. Graph. Stat. 22(2), 2013.
pub fn tv1d_denoise(input: &[f64], lambda: f64, output: &mut [f64]) {
    assert_eq!(input.len(), output.len());
    let n = input.len();
    if n == 0 {
        return;
    }
    if n == 1 || !(lambda > 0.0) {
        output.copy_from_slice(input);
        return;
    }

    let mut knot = vec![0.0; 2 * n];
    let mut da = vec![0.0; 2 * n];
    let mut db = vec![0.0; 2 * n];
    let mut lo_clip = vec![0.0; n - 1];
    let mut hi_clip = vec![0.0; n - 1];

    lo_clip[0] = input[0] - lambda;
    hi_clip[0] = input[0] + lambda;
    let mut l = n - 1;
    let mut r = n;
    knot[l] = lo_clip[0];
    knot[r] = hi_clip[0];
    da[l] = 1.0;
    db[l] = lambda - input[0];
    da[r] = -1.0;
    db[r] = lambda + input[0];
    let (mut a_first, mut b_first) = (1.0, -lambda - input[1]);
    let (mut a_last, mut b_last) = (-1.0, -lambda + input[1]);

    for k in 1..n - 1 {
        let (mut a_lo, mut b_lo) = (a_first, b_first);
        let mut lo = l;
        while lo <= r && a_lo * knot[lo] + b_lo <= -lambda {
            a_lo += da[lo];
            b_lo += db[lo];
            lo += 1;
        }
        lo_clip[k] = (-lambda - b_lo) / a_lo;
        l = lo - 1;
        knot[l] = lo_clip[k];

        let (mut a_hi, mut b_hi) = (a_last, b_last);
        let mut hi = r;
        while hi >= l && -a_hi * knot[hi] - b_hi >= lambda {
            a_hi += da[hi];
            b_hi += db[hi];
            hi -= 1;
        }
        hi_clip[k] = (lambda + b_hi) / -a_hi;
        r = hi + 1;
        knot[r] = hi_clip[k];

        da[l] = a_lo;
        db[l] = b_lo + lambda;
        da[r] = a_hi;
        db[r] = b_hi + lambda;
        a_first = 1.0;
        b_first = -lambda - input[k + 1];
        a_last = -1.0;
        b_last = -lambda + input[k + 1];
    }

    let (mut a_lo, mut b_lo) = (a_first, b_first);
    let mut lo = l;
    while lo <= r && a_lo * knot[lo] + b_lo <= 0.0 {
        a_lo += da[lo];
        b_lo += db[lo];
        lo += 1;
    }
    output[n - 1] = -b_lo / a_lo;
    for k in (0..n - 1).rev() {
        let next = output[k + 1];
        output[k] = if next > hi_clip[k] {
            hi_clip[k]
        } else if next < lo_clip[k] {
            lo_clip[k]
        } else {
            next
        };
    }
}

fn denoise_rows(x: &mut DVector<f64>, rows: usize, cols: usize, lambda: f64, buf: &mut [f64]) {
    let out = &mut buf[..cols];
    for i in 0..rows {
        let row = &mut x.as_mut_slice()[i * cols..(i + 1) * cols];
        tv1d_denoise(row, lambda, out);
        row.copy_from_slice(out);
    }
}

fn denoise_cols(x: &mut DVector<f64>, rows: usize, cols: usize, lambda: f64, buf: &mut [f64]) {
    let (col, out) = buf.split_at_mut(rows);
    let out = &mut out[..rows];
    for j in 0..cols {
        for i in 0..rows {
            col[i] = x[i * cols + j];
        }
        tv1d_denoise(col, lambda, out);
        for i in 0..rows {
            x[i * cols + j] = out[i];
        }
    }
}

fn clamp_into(x: &mut DVector<f64>, upper: Option<f64>) {
    if let Some(hi) = upper {
        x.apply(|v| *v = v.clamp(0.0, hi));
    }
}

/// Approximate minimizer of `½‖v − z‖² + weight·‖∇z‖₁ + i_C(z)` with
/// `C = [0, n_max]ⁿ` (or no constraint when `n_max` is `None`).
///
/// Runs `inner_iter` Douglas-Rachford sweeps on the split
///
/// ```text
///   F(z) = ¼‖z − v‖² + weight·TV_rows(z)
///   G(z) = ¼‖z − v‖² + weight·TV_cols(z) + i_C(z)
/// ```
///
/// with step 2, so each half-step is a batch of exact 1D TV problems. The box
/// part of `prox_G` is a clip after the column denoising, which is exact for
/// TV of pairwise-difference form. The returned iterate is the `prox_G` output,
/// hence always in `C`. Iteration starts from the clamp of `v`.
pub fn tv_box_prox(
    grad: &GradientOperator,
    v: &DVector<f64>,
    weight: f64,
    n_max: Option<f64>,
    inner_iter: usize,
) -> Result<DVector<f64>> {
    check_dim("prox input", grad.domain_dim(), v.len())?;
    if !(weight >= 0.0) || !weight.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "TV weight must be nonnegative and finite, got {weight}"
        )));
    }
    if let Some(hi) = n_max {
        if !(hi > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "box upper bound must be positive, got {hi}"
            )));
        }
    }

    let mut u = v.clone();
    clamp_into(&mut u, n_max);
    if weight == 0.0 || inner_iter == 0 {
        return Ok(u);
    }

    let (rows, cols) = (grad.rows(), grad.cols());
    let mut buf = vec![0.0; 2 * rows.max(cols)];
    let mut x = DVector::zeros(v.len());
    let mut y = DVector::zeros(v.len());
    for _ in 0..inner_iter {
        // x = prox_F(u)
        x.copy_from(v);
        x += &u;
        x *= 0.5;
        denoise_rows(&mut x, rows, cols, weight, &mut buf);

        // y = prox_G(2x − u)
        y.copy_from(v);
        y += &x * 2.0;
        y -= &u;
        y *= 0.5;
        denoise_cols(&mut y, rows, cols, weight, &mut buf);
        clamp_into(&mut y, n_max);

        u += &y;
        u -= &x;
    }
    Ok(y)
}

/// Value of `½‖v − z‖² + weight·‖∇z‖₁` (the box indicator is not included).
pub fn prox_objective(grad: &GradientOperator, v: &DVector<f64>, z: &DVector<f64>, weight: f64) -> Result<f64> {
    Ok(0.5 * (v - z).norm_squared() + weight * grad.total_variation(z)?)
}
