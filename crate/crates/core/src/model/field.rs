//! Line-segment Biot-Savart field of a polygonal coil and the dipole kernel
//! coupling an aligned voxel to a sensor.

use std::f64::consts::PI;

use super::geometry::{Coil, Sensor, Vec3};
use crate::error::{Error, Result};

/// Vacuum permeability (H/m).
pub const MU_0: f64 = 4.0e-7 * PI;
pub const MU0_OVER_4PI: f64 = 1.0e-7;

const MIN_DENOMINATOR: f64 = 1e-300;

/// Magnetic field strength `H` (A/m) of `coil` at `point`.
///
/// Each straight segment from `p₁` to `p₂` contributes
///
/// ```text
///   I/(4π) · (|r₁| + |r₂|) / (|r₁||r₂|) · (r₁ × r₂) / (|r₁||r₂| + r₁·r₂)
/// ```
///
/// with `rᵢ = pᵢ - point`. The cross product is evaluated as `r₁ × (p₂ - p₁)`,
/// which is algebraically identical and avoids cancellation for short segments.
pub fn coil_field(coil: &Coil, point: &Vec3) -> Result<Vec3> {
    let mut acc = Vec3::zeros();
    for (start, end) in coil.segments() {
        let r1 = start - point;
        let r2 = end - point;
        let n1 = r1.norm();
        let n2 = r2.norm();
        let prod = n1 * n2;
        let denom = prod + r1.dot(&r2);
        if prod < MIN_DENOMINATOR || denom.abs() < MIN_DENOMINATOR {
            return Err(Error::Singular(format!(
                "field point {:?} lies on a coil segment",
                point.as_slice()
            )));
        }
        let dl = end - start;
        acc += r1.cross(&dl) * ((n1 + n2) / (prod * denom));
    }
    Ok(acc * (coil.current() / (4.0 * PI)))
}

/// Sensor reading produced by a unit concentration at `voxel_center` magnetized along `h`:
///
/// ```text
///   μ₀/(4π) · ν · (3 r (r·H) / |r|⁵ − H / |r|³),   r = sensor − voxel
/// ```
pub fn dipole_kernel_entry(sensor: &Sensor, voxel_center: &Vec3, h: &Vec3) -> Result<f64> {
    let r = sensor.position() - voxel_center;
    let d2 = r.norm_squared();
    if !(d2 > 0.0) {
        return Err(Error::Singular(format!(
            "sensor coincides with voxel center {:?}",
            voxel_center.as_slice()
        )));
    }
    let d = d2.sqrt();
    let d3 = d2 * d;
    let d5 = d3 * d2;
    let nu = sensor.direction();
    let value = 3.0 * nu.dot(&r) * r.dot(h) / d5 - nu.dot(h) / d3;
    Ok(MU0_OVER_4PI * value)
}
