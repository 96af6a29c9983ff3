use std::f64::consts::PI;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

const UNIT_TOL: f64 = 1e-12;

/// Regular `n × n` voxel lattice covering `[-w, w]²` in the plane `z = 0`.
///
/// Voxel `v = iy·n + ix` has its center at
/// `(-w + (ix + ½)·h, -w + (iy + ½)·h, 0)` with `h = 2w / n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    half_width: f64,
    n_per_side: usize,
}

impl GridSpec {
    pub fn new(half_width: f64, n_per_side: usize) -> Result<Self> {
        if !(half_width > 0.0) || !half_width.is_finite() {
            return Err(Error::InvalidGeometry(format!(
                "grid half width must be positive, got {half_width}"
            )));
        }
        if n_per_side < 2 {
            return Err(Error::InvalidGeometry(format!(
                "grid needs at least 2 voxels per side, got {n_per_side}"
            )));
        }
        Ok(Self {
            half_width,
            n_per_side,
        })
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn n_per_side(&self) -> usize {
        self.n_per_side
    }

    pub fn n_voxels(&self) -> usize {
        self.n_per_side * self.n_per_side
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.n_per_side as f64
    }

    /// Center coordinate along one axis of lattice index `i`.
    pub fn axis_center(&self, i: usize) -> f64 {
        -self.half_width + (i as f64 + 0.5) * self.spacing()
    }

    pub fn voxel_center(&self, v: usize) -> Vec3 {
        let n = self.n_per_side;
        Vec3::new(self.axis_center(v % n), self.axis_center(v / n), 0.0)
    }

    pub fn voxel_centers(&self) -> Vec<Vec3> {
        (0..self.n_voxels()).map(|v| self.voxel_center(v)).collect()
    }

    /// Whether `p` lies in the closed imaging square, treating the plane as one voxel thick.
    pub fn contains(&self, p: &Vec3) -> bool {
        p.x.abs() <= self.half_width
            && p.y.abs() <= self.half_width
            && p.z.abs() <= 0.5 * self.spacing()
    }
}

/// Point magnetometer measuring the field component along `direction`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sensor {
    position: Vec3,
    direction: Vec3,
}

impl Sensor {
    pub fn new(position: Vec3, direction: Vec3) -> Result<Self> {
        let norm = direction.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::InvalidGeometry(
                "sensor direction must be a nonzero finite vector".into(),
            ));
        }
        Ok(Self {
            position,
            direction: direction / norm,
        })
    }

    pub fn position(&self) -> &Vec3 {
        &self.position
    }

    pub fn direction(&self) -> &Vec3 {
        &self.direction
    }
}

/// Circular excitation coil approximated by a closed polygon of straight segments.
#[derive(Debug, Clone, PartialEq)]
pub struct Coil {
    center: Vec3,
    normal: Vec3,
    radius: f64,
    current: f64,
    /// `n_segments + 1` vertices; the last equals the first.
    vertices: Vec<Vec3>,
}

impl Coil {
    pub fn new(
        center: Vec3,
        normal: Vec3,
        radius: f64,
        n_segments: usize,
        current: f64,
    ) -> Result<Self> {
        if n_segments < 3 {
            return Err(Error::InvalidGeometry(format!(
                "coil needs at least 3 segments, got {n_segments}"
            )));
        }
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::InvalidGeometry(format!(
                "coil radius must be positive, got {radius}"
            )));
        }
        if !current.is_finite() {
            return Err(Error::InvalidGeometry("coil current must be finite".into()));
        }
        let nn = normal.norm();
        if !(nn > 0.0) || !nn.is_finite() {
            return Err(Error::InvalidGeometry(
                "coil normal must be a nonzero finite vector".into(),
            ));
        }
        let normal = normal / nn;
        let (u, v) = plane_basis(&normal);

        let mut vertices = Vec::with_capacity(n_segments + 1);
        for i in 0..n_segments {
            let theta = 2.0 * PI * i as f64 / n_segments as f64;
            vertices.push(center + radius * (theta.cos() * u + theta.sin() * v));
        }
        vertices.push(vertices[0]);

        Ok(Self {
            center,
            normal,
            radius,
            current,
            vertices,
        })
    }

    pub fn center(&self) -> &Vec3 {
        &self.center
    }

    pub fn normal(&self) -> &Vec3 {
        &self.normal
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn current(&self) -> f64 {
        self.current
    }

    pub fn n_segments(&self) -> usize {
        self.vertices.len() - 1
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    /// Segments as `(start, end)` pairs, oriented counterclockwise about the normal.
    pub fn segments(&self) -> impl Iterator<Item = (&Vec3, &Vec3)> {
        self.vertices.windows(2).map(|w| (&w[0], &w[1]))
    }

    /// Same coil geometry carrying a different current.
    pub fn with_current(&self, current: f64) -> Self {
        Self {
            current,
            ..self.clone()
        }
    }
}

/// Right-handed orthonormal pair `(u, v)` with `u × v = normal`.
fn plane_basis(normal: &Vec3) -> (Vec3, Vec3) {
    let helper = if normal.x.abs() < 0.9 {
        Vec3::x()
    } else {
        Vec3::y()
    };
    let u = (helper - helper.dot(normal) * normal).normalize();
    let v = normal.cross(&u);
    (u, v)
}

#[derive(Debug, Clone)]
pub struct Geometry {
    grid: GridSpec,
    sensors: Vec<Sensor>,
    coils: Vec<Coil>,
}

impl Geometry {
    /// Validates that no sensor or coil center lies inside the imaging region.
    pub fn new(grid: GridSpec, sensors: Vec<Sensor>, coils: Vec<Coil>) -> Result<Self> {
        if sensors.is_empty() {
            return Err(Error::InvalidGeometry("at least one sensor required".into()));
        }
        if coils.is_empty() {
            return Err(Error::InvalidGeometry("at least one coil required".into()));
        }
        for (i, s) in sensors.iter().enumerate() {
            if grid.contains(s.position()) {
                return Err(Error::InvalidGeometry(format!(
                    "sensor {i} at {:?} lies inside the imaging region",
                    s.position().as_slice()
                )));
            }
        }
        for (i, c) in coils.iter().enumerate() {
            if grid.contains(c.center()) {
                return Err(Error::InvalidGeometry(format!(
                    "coil {i} at {:?} lies inside the imaging region",
                    c.center().as_slice()
                )));
            }
        }
        Ok(Self {
            grid,
            sensors,
            coils,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn sensors(&self) -> &[Sensor] {
        &self.sensors
    }

    pub fn coils(&self) -> &[Coil] {
        &self.coils
    }

    pub fn n_sensors(&self) -> usize {
        self.sensors.len()
    }

    pub fn n_coils(&self) -> usize {
        self.coils.len()
    }

    pub fn n_voxels(&self) -> usize {
        self.grid.n_voxels()
    }
}

/// A horizontal row of equispaced sensors above the imaging region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorLayer {
    /// Distance of the layer above the top edge of the region (m).
    pub standoff: f64,
    pub count: usize,
    /// Sensors span `x ∈ [-half_span, half_span]`.
    pub half_span: f64,
    /// Measured field component.
    pub direction: [f64; 3],
}

/// Coils placed at equal arc-length spacing along a U-shaped path around the region.
///
/// The path runs down the left side `x = -a`, across the bottom `y = -a` and up the
/// right side `x = a`, with `a = half_width + standoff`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoilArrayConfig {
    pub count: usize,
    pub standoff: f64,
    pub radius: f64,
    pub n_segments: usize,
    pub current: f64,
    pub normal: [f64; 3],
}

impl Default for CoilArrayConfig {
    fn default() -> Self {
        Self {
            count: 120,
            standoff: 0.01,
            radius: 0.5e-6,
            n_segments: 45,
            current: 1.0,
            normal: [0.0, 1.0, 0.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometryConfig {
    pub half_width: f64,
    pub n_per_side: usize,
    pub sensor_layers: Vec<SensorLayer>,
    pub coils: CoilArrayConfig,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            half_width: 0.05,
            n_per_side: 75,
            sensor_layers: vec![
                SensorLayer {
                    standoff: 0.01,
                    count: 55,
                    half_span: 0.054,
                    direction: [1.0, 0.0, 0.0],
                },
                SensorLayer {
                    standoff: 0.015,
                    count: 55,
                    half_span: 0.054,
                    direction: [0.0, 1.0, 0.0],
                },
            ],
            coils: CoilArrayConfig::default(),
        }
    }
}

impl GeometryConfig {
    /// Reduced setup used for quick experiments: 25×25 voxels, 2×20 sensors, 60 coils.
    pub fn desk_scale() -> Self {
        let mut cfg = Self {
            n_per_side: 25,
            ..Self::default()
        };
        for layer in &mut cfg.sensor_layers {
            layer.count = 20;
        }
        cfg.coils.count = 60;
        cfg
    }
}

fn equispaced(count: usize, lo: f64, hi: f64) -> impl Iterator<Item = f64> {
    (0..count).map(move |i| {
        if count == 1 {
            0.5 * (lo + hi)
        } else {
            lo + (hi - lo) * i as f64 / (count - 1) as f64
        }
    })
}

fn u_path_point(a: f64, t: f64) -> Vec3 {
    let side = 2.0 * a;
    if t <= side {
        Vec3::new(-a, a - t, 0.0)
    } else if t <= 2.0 * side {
        Vec3::new(-a + (t - side), -a, 0.0)
    } else {
        Vec3::new(a, -a + (t - 2.0 * side), 0.0)
    }
}

pub fn build_geometry(config: &GeometryConfig) -> Result<Geometry> {
    let grid = GridSpec::new(config.half_width, config.n_per_side)?;
    let w = config.half_width;

    let mut sensors = Vec::new();
    for (li, layer) in config.sensor_layers.iter().enumerate() {
        if layer.count == 0 {
            return Err(Error::InvalidGeometry(format!("sensor layer {li} is empty")));
        }
        if !(layer.half_span >= 0.0) {
            return Err(Error::InvalidGeometry(format!(
                "sensor layer {li} has negative span"
            )));
        }
        let dir = Vec3::from(layer.direction);
        if (dir.norm() - 1.0).abs() > UNIT_TOL {
            return Err(Error::InvalidGeometry(format!(
                "sensor layer {li} direction is not a unit vector"
            )));
        }
        let y = w + layer.standoff;
        for x in equispaced(layer.count, -layer.half_span, layer.half_span) {
            sensors.push(Sensor::new(Vec3::new(x, y, 0.0), dir)?);
        }
    }

    let cc = &config.coils;
    if cc.count == 0 {
        return Err(Error::InvalidGeometry("coil count must be positive".into()));
    }
    let a = w + cc.standoff;
    if !(a > 0.0) {
        return Err(Error::InvalidGeometry("coil path collapses to a point".into()));
    }
    let normal = Vec3::from(cc.normal);
    let coils = equispaced(cc.count, 0.0, 6.0 * a)
        .map(|t| Coil::new(u_path_point(a, t), normal, cc.radius, cc.n_segments, cc.current))
        .collect::<Result<Vec<_>>>()?;

    Geometry::new(grid, sensors, coils)
}
