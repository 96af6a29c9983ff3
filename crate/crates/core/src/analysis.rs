//! Reconstruction metrics, L-curve, singular spectrum, k-term error and RIP constants.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::solvers::TikhonovPath;

/// SNR reported for a reconstruction that matches the truth exactly.
pub const SNR_CAP_DB: f64 = 300.0;

/// Upper bound on the number of supports [`rip_estimate`] will enumerate.
pub const RIP_SUPPORT_BUDGET: u128 = 1_000_000;
pub const RIP_MAX_K: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub phantom: String,
    pub method: String,
    pub scheme: String,
    pub m: usize,
    pub relative_rmse: f64,
    pub snr_db: f64,
    /// `None` when either image is constant.
    pub pearson: Option<f64>,
}

/// `(relative RMSE, SNR dB, Pearson)` of `recon` against `truth`.
pub fn image_metrics(truth: &DVector<f64>, recon: &DVector<f64>) -> Result<(f64, f64, Option<f64>)> {
    check_dim("reconstruction length", truth.len(), recon.len())?;
    let tn = truth.norm();
    if tn == 0.0 {
        return Err(Error::InvalidArgument("truth image is zero".into()));
    }
    let err = (truth - recon).norm();
    let rmse = err / tn;
    let snr = if err == 0.0 {
        SNR_CAP_DB
    } else {
        (20.0 * (tn / err).log10()).min(SNR_CAP_DB)
    };
    Ok((rmse, snr, pearson(truth, recon)))
}

/// Pearson correlation; `None` if either input has zero variance.
pub fn pearson(a: &DVector<f64>, b: &DVector<f64>) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.sum() / n;
    let mb = b.sum() / n;
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b.iter()) {
        let (dx, dy) = (x - ma, y - mb);
        cov += dx * dy;
        va += dx * dx;
        vb += dy * dy;
    }
    if va == 0.0 || vb == 0.0 {
        return None;
    }
    Some((cov / (va * vb).sqrt()).clamp(-1.0, 1.0))
}

pub fn evaluate(
    truth: &DVector<f64>,
    recon: &DVector<f64>,
    phantom: &str,
    method: &str,
    scheme: &str,
    m: usize,
) -> Result<MetricsReport> {
    let (relative_rmse, snr_db, pearson) = image_metrics(truth, recon)?;
    Ok(MetricsReport {
        phantom: phantom.to_owned(),
        method: method.to_owned(),
        scheme: scheme.to_owned(),
        m,
        relative_rmse,
        snr_db,
        pearson,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LCurvePoint {
    pub mu: f64,
    /// `log₁₀ ‖M x_μ − b‖²`
    pub log_residual: f64,
    /// `log₁₀ ‖x_μ‖`
    pub log_solution_norm: f64,
    /// Set when the solve at this `μ` failed; the log fields are then NaN.
    pub error: Option<String>,
}

/// Tikhonov L-curve over an ascending grid of at least three shifts.
/// A failed solve is recorded on its point and the sweep continues.
pub fn l_curve(operator: &DMatrix<f64>, data: &DVector<f64>, mu_grid: &[f64]) -> Result<Vec<LCurvePoint>> {
    if mu_grid.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "L-curve needs at least 3 grid points, got {}",
            mu_grid.len()
        )));
    }
    if mu_grid.windows(2).any(|w| !(w[0] < w[1])) || !(mu_grid[0] > 0.0) {
        return Err(Error::InvalidArgument(
            "L-curve grid must be positive and strictly ascending".into(),
        ));
    }
    let path = TikhonovPath::new(operator, data)?;
    Ok(mu_grid
        .iter()
        .map(|&mu| match path.solve(mu) {
            Ok(x) => LCurvePoint {
                mu,
                log_residual: path.residual_sq(&x).log10(),
                log_solution_norm: x.norm().log10(),
                error: None,
            },
            Err(e) => LCurvePoint {
                mu,
                log_residual: f64::NAN,
                log_solution_norm: f64::NAN,
                error: Some(e.to_string()),
            },
        })
        .collect())
}

/// Point of maximum curvature of the log-log L-curve (among successful points).
pub fn l_curve_corner(points: &[LCurvePoint]) -> Option<&LCurvePoint> {
    let ok: Vec<&LCurvePoint> = points.iter().filter(|p| p.error.is_none()).collect();
    if ok.len() < 3 {
        return None;
    }
    let mut best: Option<(f64, &LCurvePoint)> = None;
    for w in ok.windows(3) {
        let (a, b, c) = (w[0], w[1], w[2]);
        let (x1, y1) = (a.log_residual, a.log_solution_norm);
        let (x2, y2) = (b.log_residual, b.log_solution_norm);
        let (x3, y3) = (c.log_residual, c.log_solution_norm);
        let area2 = (x2 - x1) * (y3 - y1) - (y2 - y1) * (x3 - x1);
        let d12 = (x2 - x1).hypot(y2 - y1);
        let d23 = (x3 - x2).hypot(y3 - y2);
        let d13 = (x3 - x1).hypot(y3 - y1);
        let denom = d12 * d23 * d13;
        if denom > 0.0 {
            let kappa = (2.0 * area2 / denom).abs();
            if best.is_none_or(|(k, _)| kappa > k) {
                best = Some((kappa, b));
            }
        }
    }
    best.map(|(_, p)| p)
}

/// All singular values, descending.
pub fn singular_spectrum(matrix: &DMatrix<f64>) -> Vec<f64> {
    let mut sv: Vec<f64> = matrix.clone().svd(false, false).singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// ℓ¹ error of the best k-term approximation: the sum of all magnitudes except
/// the `k` largest.
pub fn k_term_error(x: &DVector<f64>, k: usize) -> Result<f64> {
    if k > x.len() {
        return Err(Error::InvalidArgument(format!(
            "k = {k} exceeds dimension {}",
            x.len()
        )));
    }
    let mut mags: Vec<f64> = x.iter().map(|v| v.abs()).collect();
    mags.sort_by(|a, b| b.total_cmp(a));
    Ok(mags[k..].iter().sum())
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Calls `f` with every ascending `k`-subset of `0..n`.
fn for_each_combination(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        let mut i = k;
        while i > 0 && idx[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return;
        }
        idx[i - 1] += 1;
        for j in i..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Exact restricted isometry constant `δ_k` by enumerating every `k`-column
/// submatrix `S` and taking the largest `max(1 − λ_min(SᵀS), λ_max(SᵀS) − 1)`.
pub fn rip_estimate(matrix: &DMatrix<f64>, k: usize) -> Result<f64> {
    let n = matrix.ncols();
    if k == 0 || k > n || k > RIP_MAX_K {
        return Err(Error::InvalidArgument(format!(
            "k must satisfy 1 ≤ k ≤ min({RIP_MAX_K}, {n}), got {k}"
        )));
    }
    let count = binomial(n, k);
    if count > RIP_SUPPORT_BUDGET {
        return Err(Error::Budget(format!(
            "C({n}, {k}) = {count} supports exceeds the budget of {RIP_SUPPORT_BUDGET}"
        )));
    }
    let gram = matrix.tr_mul(matrix);
    let mut delta: f64 = 0.0;
    let mut sub = DMatrix::<f64>::zeros(k, k);
    for_each_combination(n, k, |support| {
        for (a, &i) in support.iter().enumerate() {
            for (b, &j) in support.iter().enumerate() {
                sub[(a, b)] = gram[(i, j)];
            }
        }
        let eig = sub.clone().symmetric_eigenvalues();
        let lo = eig.min();
        let hi = eig.max();
        delta = delta.max(1.0 - lo).max(hi - 1.0);
    });
    Ok(delta)
}
