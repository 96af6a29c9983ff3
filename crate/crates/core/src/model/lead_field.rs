use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::field::{coil_field, dipole_kernel_entry};
use super::geometry::{Coil, Geometry, GridSpec, Sensor, Vec3};
use crate::error::{check_dim, Error, Result};
use crate::linalg::spectral_norm;

/// Stacked forward operator for sequential single-coil activation.
///
/// Rows are coil-major: rows `[c·N_s, (c+1)·N_s)` hold every sensor's response to
/// coil `c`. The stored matrix is the physical one divided by `scale`, so that its
/// spectral norm is one.
#[derive(Debug, Clone)]
pub struct LeadField {
    matrix: DMatrix<f64>,
    scale: f64,
    n_coils: usize,
    n_sensors: usize,
    grid: GridSpec,
}

impl LeadField {
    /// Wraps an already normalized matrix, e.g. one restored from disk.
    pub fn from_parts(
        matrix: DMatrix<f64>,
        scale: f64,
        n_coils: usize,
        n_sensors: usize,
        grid: GridSpec,
    ) -> Result<Self> {
        check_dim("lead field rows", n_coils * n_sensors, matrix.nrows())?;
        check_dim("lead field columns", grid.n_voxels(), matrix.ncols())?;
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "lead field scale must be positive, got {scale}"
            )));
        }
        Ok(Self {
            matrix,
            scale,
            n_coils,
            n_sensors,
            grid,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Factor the physical matrix was divided by.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn n_coils(&self) -> usize {
        self.n_coils
    }

    pub fn n_sensors(&self) -> usize {
        self.n_sensors
    }

    pub fn n_voxels(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// Rows belonging to coil `c`.
    pub fn coil_block(&self, c: usize) -> DMatrix<f64> {
        self.matrix
            .rows(c * self.n_sensors, self.n_sensors)
            .into_owned()
    }

    pub fn apply(&self, n: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("concentration vector", self.n_voxels(), n.len())?;
        Ok(&self.matrix * n)
    }
}

fn fill_column(
    column: &mut [f64],
    center: &Vec3,
    coils: &[Coil],
    sensors: &[Sensor],
) -> Result<()> {
    let ns = sensors.len();
    for (c, coil) in coils.iter().enumerate() {
        let h = coil_field(coil, center)?;
        for (s, sensor) in sensors.iter().enumerate() {
            column[c * ns + s] = dipole_kernel_entry(sensor, center, &h)?;
        }
    }
    Ok(())
}

/// Physical (unnormalized) lead field for the given coils, columns assembled in parallel.
pub fn assemble_unnormalized(
    grid: &GridSpec,
    sensors: &[Sensor],
    coils: &[Coil],
) -> Result<DMatrix<f64>> {
    let rows = coils.len() * sensors.len();
    let nv = grid.n_voxels();
    let mut matrix = DMatrix::<f64>::zeros(rows, nv);
    if rows == 0 {
        return Ok(matrix);
    }
    matrix
        .as_mut_slice()
        .par_chunks_mut(rows)
        .enumerate()
        .try_for_each(|(v, column)| fill_column(column, &grid.voxel_center(v), coils, sensors))?;
    Ok(matrix)
}

pub fn assemble_lead_field(geometry: &Geometry) -> Result<LeadField> {
    let raw = assemble_unnormalized(geometry.grid(), geometry.sensors(), geometry.coils())?;
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("lead field contains non-finite entries".into()));
    }
    let scale = spectral_norm(&raw);
    if !(scale > 0.0) {
        return Err(Error::Singular("lead field is identically zero".into()));
    }
    LeadField::from_parts(
        raw / scale,
        scale,
        geometry.n_coils(),
        geometry.n_sensors(),
        *geometry.grid(),
    )
}
