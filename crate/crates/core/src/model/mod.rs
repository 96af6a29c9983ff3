//! Imaging geometry, coil fields, lead-field assembly and data simulation.

mod field;
mod geometry;
mod lead_field;
mod simulate;

pub use field::{coil_field, dipole_kernel_entry, MU0_OVER_4PI, MU_0};
pub use geometry::{
    build_geometry, Coil, CoilArrayConfig, Geometry, GeometryConfig, GridSpec, Sensor,
    SensorLayer, Vec3,
};
pub use lead_field::{assemble_lead_field, assemble_unnormalized, LeadField};
pub use simulate::{add_noise, simulate_data, Layout, MeasurementSet};
