//! Compressive coil activation: pattern matrices, compressed data and the
//! composed measurement operator `(A ⊗ I)·L`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DMatrixView, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::spectral_norm;
use crate::model::{Layout, LeadField, MeasurementSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Gaussian,
    Bernoulli,
    Deterministic,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Gaussian, Scheme::Bernoulli, Scheme::Deterministic];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Gaussian => "gaussian",
            Scheme::Bernoulli => "bernoulli",
            Scheme::Deterministic => "deterministic",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(Scheme::Gaussian),
            "bernoulli" => Ok(Scheme::Bernoulli),
            "deterministic" => Ok(Scheme::Deterministic),
            other => Err(Error::InvalidArgument(format!("unknown scheme `{other}`"))),
        }
    }
}

/// `m × N_c` matrix whose row `j` gives each coil's weight in activation pattern `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationMatrix {
    matrix: DMatrix<f64>,
    scheme: Scheme,
    seed: u64,
}

impl ActivationMatrix {
    /// Wraps an existing pattern matrix after checking the scheme's invariants.
    pub fn from_matrix(matrix: DMatrix<f64>, scheme: Scheme, seed: u64) -> Result<Self> {
        let (m, nc) = matrix.shape();
        if m == 0 || m > nc {
            return Err(Error::InvalidArgument(format!(
                "activation count must satisfy 1 ≤ m ≤ N_c, got m = {m}, N_c = {nc}"
            )));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("activation matrix".into()));
        }
        match scheme {
            Scheme::Gaussian => {}
            Scheme::Bernoulli => {
                if matrix.iter().any(|&v| v != 1.0 && v != -1.0) {
                    return Err(Error::InvalidArgument(
                        "Bernoulli activations must be ±1".into(),
                    ));
                }
            }
            Scheme::Deterministic => {
                let mut last: Option<usize> = None;
                for j in 0..m {
                    let row = matrix.row(j);
                    let ones: Vec<usize> = (0..nc).filter(|&c| row[c] == 1.0).collect();
                    let zeros = (0..nc).filter(|&c| row[c] == 0.0).count();
                    if ones.len() != 1 || zeros != nc - 1 {
                        return Err(Error::InvalidArgument(format!(
                            "deterministic activation row {j} must select exactly one coil"
                        )));
                    }
                    if last.is_some_and(|l| ones[0] <= l) {
                        return Err(Error::InvalidArgument(
                            "deterministic coil indices must be strictly increasing".into(),
                        ));
                    }
                    last = Some(ones[0]);
                }
            }
        }
        Ok(Self {
            matrix,
            scheme,
            seed,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n_patterns(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_coils(&self) -> usize {
        self.matrix.ncols()
    }

    /// Selected coil per row, for deterministic patterns.
    pub fn selected_coils(&self) -> Option<Vec<usize>> {
        (self.scheme == Scheme::Deterministic).then(|| {
            (0..self.n_patterns())
                .map(|j| {
                    (0..self.n_coils())
                        .find(|&c| self.matrix[(j, c)] == 1.0)
                        .expect("validated deterministic row")
                })
                .collect()
        })
    }
}

/// Coil indices for `m` equispaced activations out of `n_coils`.
///
/// Row `j` takes `round(j·n_coils/m)` (halves rounded up), clamped to the valid
/// range; an index already taken is advanced to the next free one.
pub fn equispaced_indices(m: usize, n_coils: usize) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::with_capacity(m);
    for j in 0..m {
        let mut idx = ((2 * j * n_coils + m) / (2 * m)).min(n_coils - 1);
        if let Some(&prev) = out.last() {
            if idx <= prev {
                idx = prev + 1;
            }
        }
        out.push(idx);
    }
    out
}

/// Draws an activation matrix. Random schemes fill row by row from a ChaCha20
/// stream seeded with `seed`; the deterministic scheme ignores the seed.
pub fn make_activation(scheme: Scheme, m: usize, n_coils: usize, seed: u64) -> Result<ActivationMatrix> {
    if m == 0 || m > n_coils {
        return Err(Error::InvalidArgument(format!(
            "activation count must satisfy 1 ≤ m ≤ N_c, got m = {m}, N_c = {n_coils}"
        )));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let matrix = match scheme {
        Scheme::Gaussian => {
            let data: Vec<f64> = (0..m * n_coils)
                .map(|_| StandardNormal.sample(&mut rng))
                .collect();
            DMatrix::from_row_slice(m, n_coils, &data)
        }
        Scheme::Bernoulli => {
            let data: Vec<f64> = (0..m * n_coils)
                .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
                .collect();
            DMatrix::from_row_slice(m, n_coils, &data)
        }
        Scheme::Deterministic => {
            let mut a = DMatrix::zeros(m, n_coils);
            for (j, c) in equispaced_indices(m, n_coils).into_iter().enumerate() {
                a[(j, c)] = 1.0;
            }
            a
        }
    };
    ActivationMatrix::from_matrix(matrix, scheme, seed)
}

/// Stacked blocks of length `n_sensors` → matrix with one block per row.
pub fn reshape_mat(vector: &DVector<f64>, n_sensors: usize) -> Result<DMatrix<f64>> {
    if n_sensors == 0 || !vector.len().is_multiple_of(n_sensors) {
        return Err(Error::InvalidArgument(format!(
            "length {} is not divisible into blocks of {n_sensors}",
            vector.len()
        )));
    }
    let k = vector.len() / n_sensors;
    Ok(DMatrix::from_row_slice(k, n_sensors, vector.as_slice()))
}

/// Matrix rows → stacked vector blocks; inverse of [`reshape_mat`].
pub fn reshape_vec(matrix: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(
        matrix.len(),
        (0..matrix.nrows()).flat_map(|i| matrix.row(i).iter().copied().collect::<Vec<_>>()),
    )
}

/// CS data `Y = A·mat(b)` from full activation data.
pub fn compress_data(full: &MeasurementSet, a: &ActivationMatrix) -> Result<MeasurementSet> {
    let (n_coils, n_sensors) = match *full.layout() {
        Layout::Full { n_coils, n_sensors } => (n_coils, n_sensors),
        Layout::Compressed { .. } => {
            return Err(Error::InvalidArgument(
                "data are already compressed".into(),
            ))
        }
    };
    check_dim("activation matrix columns", n_coils, a.n_coils())?;
    let b = reshape_mat(full.values(), n_sensors)?;
    let y = reshape_vec(&(a.matrix() * b));
    MeasurementSet::new(
        y,
        full.noise_snr_db(),
        full.seed(),
        Layout::Compressed {
            m: a.n_patterns(),
            n_sensors,
            scheme: a.scheme(),
            seed: a.seed(),
        },
    )
}

/// Normalized CS measurement operator `M = (A ⊗ I)·L / scale`.
///
/// Data measured through `A` must be divided by [`CsOperator::scale`] before they
/// are matched against this matrix; [`CsOperator::scale_data`] does that.
#[derive(Debug, Clone)]
pub struct CsOperator {
    matrix: DMatrix<f64>,
    scale: f64,
    activation: ActivationMatrix,
    lead_scale: f64,
    n_sensors: usize,
}

impl CsOperator {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn activation(&self) -> &ActivationMatrix {
        &self.activation
    }

    /// Normalization factor of the lead field this operator was built from.
    pub fn lead_scale(&self) -> f64 {
        self.lead_scale
    }

    pub fn n_sensors(&self) -> usize {
        self.n_sensors
    }

    pub fn scale_data(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("CS data length", self.matrix.nrows(), y.len())?;
        Ok(y / self.scale)
    }
}

/// Unnormalized `(A ⊗ I)·L`, computed voxel by voxel: each lead-field column viewed as
/// an `N_s × N_c` matrix `B_v` maps to `B_v·Aᵀ`.
pub fn kronecker_apply(lead: &DMatrix<f64>, n_sensors: usize, a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (m, nc) = a.shape();
    check_dim("lead field rows", nc * n_sensors, lead.nrows())?;
    let nv = lead.ncols();
    let rows = m * n_sensors;
    let at = a.transpose();
    let mut out = DMatrix::<f64>::zeros(rows, nv);
    if rows == 0 || nv == 0 {
        return Ok(out);
    }
    out.as_mut_slice()
        .par_chunks_mut(rows)
        .zip(lead.as_slice().par_chunks(nc * n_sensors))
        .for_each(|(dst, src)| {
            let bv = DMatrixView::from_slice(src, n_sensors, nc);
            let prod = bv * &at;
            dst.copy_from_slice(prod.as_slice());
        });
    Ok(out)
}

pub fn compose_operator(lead: &LeadField, a: &ActivationMatrix) -> Result<CsOperator> {
    check_dim("activation matrix columns", lead.n_coils(), a.n_coils())?;
    let raw = kronecker_apply(lead.matrix(), lead.n_sensors(), a.matrix())?;
    let scale = spectral_norm(&raw);
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::Singular("composed CS operator is zero".into()));
    }
    Ok(CsOperator {
        matrix: raw / scale,
        scale,
        activation: a.clone(),
        lead_scale: lead.scale(),
        n_sensors: lead.n_sensors(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn deterministic_full_sampling_is_identity() {
        for nc in [1, 5, 12, 60] {
            let a = make_activation(Scheme::Deterministic, nc, nc, 0).unwrap();
            assert_eq!(a.matrix(), &DMatrix::identity(nc, nc));
        }
    }

    #[test]
    fn deterministic_equispaced_selection() {
        let a = make_activation(Scheme::Deterministic, 3, 12, 0).unwrap();
        assert_eq!(a.selected_coils().unwrap(), vec![0, 4, 8]);
        assert_eq!(equispaced_indices(20, 60), (0..20).map(|j| 3 * j).collect::<Vec<_>>());
        for (m, nc) in [(7, 10), (40, 60), (119, 120), (1, 9)] {
            let idx = equispaced_indices(m, nc);
            assert_eq!(idx.len(), m);
            assert!(idx.windows(2).all(|w| w[0] < w[1]));
            assert!(*idx.last().unwrap() < nc);
        }
    }

    #[test]
    fn bernoulli_entries_are_signs() {
        for seed in 0..20 {
            let a = make_activation(Scheme::Bernoulli, 3, 5, seed).unwrap();
            assert_eq!(a.matrix().len(), 15);
            assert!(a.matrix().iter().all(|&v| v == 1.0 || v == -1.0));
        }
    }

    #[test]
    fn gaussian_sample_statistics() {
        let a = make_activation(Scheme::Gaussian, 250, 400, 2024).unwrap();
        let n = a.matrix().len() as f64;
        let mean = a.matrix().sum() / n;
        let var = a.matrix().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 0.02, "{mean}");
        assert!((var - 1.0).abs() < 0.02, "{var}");
    }

    #[test]
    fn seed_determinism() {
        for scheme in Scheme::ALL {
            let a = make_activation(scheme, 8, 20, 77).unwrap();
            let b = make_activation(scheme, 8, 20, 77).unwrap();
            assert!(a
                .matrix()
                .iter()
                .zip(b.matrix().iter())
                .all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        let a = make_activation(Scheme::Gaussian, 8, 20, 1).unwrap();
        let b = make_activation(Scheme::Gaussian, 8, 20, 2).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn too_many_patterns_rejected() {
        assert!(make_activation(Scheme::Gaussian, 6, 5, 0).is_err());
        assert!(make_activation(Scheme::Deterministic, 0, 5, 0).is_err());
    }

    #[test]
    fn reshape_layout() {
        let v = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let m = reshape_mat(&v, 3).unwrap();
        assert_eq!(m.shape(), (2, 3));
        assert_eq!(m.row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 2.0, 3.0]);
        assert!(reshape_mat(&v, 4).is_err());
        assert!(reshape_mat(&v, 0).is_err());
    }

    fn full_set(values: Vec<f64>, n_coils: usize, n_sensors: usize) -> MeasurementSet {
        MeasurementSet::new(
            DVector::from_vec(values),
            f64::INFINITY,
            0,
            Layout::Full { n_coils, n_sensors },
        )
        .unwrap()
    }

    #[test]
    fn identity_pattern_leaves_data_unchanged() {
        let b = full_set((0..12).map(|i| i as f64 * 0.5 - 2.0).collect(), 4, 3);
        let a = make_activation(Scheme::Deterministic, 4, 4, 0).unwrap();
        let y = compress_data(&b, &a).unwrap();
        assert_eq!(y.values(), b.values());
        assert!(matches!(y.layout(), Layout::Compressed { m: 4, .. }));
    }

    #[test]
    fn zero_row_gives_zero_block() {
        let b = full_set((1..=6).map(|i| i as f64).collect(), 3, 2);
        let mut mat = DMatrix::from_row_slice(2, 3, &[1.0, -2.0, 0.5, 0.0, 0.0, 0.0]);
        mat[(0, 0)] = 1.0;
        let a = ActivationMatrix::from_matrix(mat, Scheme::Gaussian, 0).unwrap();
        let y = compress_data(&b, &a).unwrap();
        assert_eq!(y.values()[2], 0.0);
        assert_eq!(y.values()[3], 0.0);
    }

    /// Explicit `A ⊗ I_{N_s}`.
    fn kron_identity(a: &DMatrix<f64>, ns: usize) -> DMatrix<f64> {
        let (m, nc) = a.shape();
        DMatrix::from_fn(m * ns, nc * ns, |r, c| {
            if r % ns == c % ns {
                a[(r / ns, c / ns)]
            } else {
                0.0
            }
        })
    }

    #[test]
    fn compression_matches_explicit_kronecker() {
        let a = make_activation(Scheme::Gaussian, 2, 3, 5).unwrap();
        let b = full_set(vec![0.3, -1.2, 2.5, 0.7, -0.4, 1.9], 3, 2);
        let y = compress_data(&b, &a).unwrap();
        let expected = kron_identity(a.matrix(), 2) * b.values();
        assert!((y.values() - &expected).norm() <= 1e-14 * expected.norm());
    }

    #[test]
    fn kronecker_apply_matches_explicit_product() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let lead = DMatrix::from_fn(4 * 3, 5, |_, _| rng.random::<f64>() - 0.5);
        let a = make_activation(Scheme::Bernoulli, 2, 4, 8).unwrap();
        let got = kronecker_apply(&lead, 3, a.matrix()).unwrap();
        let expected = kron_identity(a.matrix(), 3) * &lead;
        assert!((got - &expected).norm() <= 1e-14 * expected.norm());
    }

    #[test]
    fn compressed_data_mismatch_rejected() {
        let b = full_set(vec![0.0; 6], 3, 2);
        let a = make_activation(Scheme::Gaussian, 2, 4, 0).unwrap();
        assert!(compress_data(&b, &a).is_err());
    }

    proptest! {
        #[test]
        fn reshape_pair_is_inverse(rows in 1usize..6, cols in 1usize..6, seed in any::<u64>(), k in -3.0f64..3.0) {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let x = DMatrix::from_fn(rows, cols, |_, _| rng.random::<f64>());
            let v = reshape_vec(&x);
            prop_assert_eq!(&reshape_mat(&v, cols).unwrap(), &x);
            prop_assert_eq!(reshape_mat(&(&v * k), cols).unwrap(), &x * k);
        }
    }
}
