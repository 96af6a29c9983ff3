//! Procedural test phantoms.
//!
//! Shapes live in region-relative coordinates `(u, v) ∈ [-1, 1]²`, with
//! `u = x / half_width` and `v = y / half_width`, so every grid size rasterizes
//! the same geometry. A voxel is set to one when its center falls inside a shape.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::model::GridSpec;

pub const MIN_PHANTOM_SIDE: usize = 15;

/// Nonnegative voxel concentrations bounded by `n_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcentrationImage {
    grid: GridSpec,
    values: DVector<f64>,
    n_max: f64,
}

impl ConcentrationImage {
    pub fn new(grid: GridSpec, values: DVector<f64>, n_max: f64) -> Result<Self> {
        check_dim("image length", grid.n_voxels(), values.len())?;
        if !(n_max > 0.0) || !n_max.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "n_max must be positive and finite, got {n_max}"
            )));
        }
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, &v)| !(0.0..=n_max).contains(&v))
        {
            return Err(Error::InvalidArgument(format!(
                "voxel {i} value {v} outside [0, {n_max}]"
            )));
        }
        Ok(Self {
            grid,
            values,
            n_max,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn n_max(&self) -> f64 {
        self.n_max
    }

    pub fn into_values(self) -> DVector<f64> {
        self.values
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhantomKind {
    CsLetters,
    Smiley,
    Tumor,
}

impl PhantomKind {
    pub const ALL: [PhantomKind; 3] = [PhantomKind::CsLetters, PhantomKind::Smiley, PhantomKind::Tumor];

    pub fn as_str(self) -> &'static str {
        match self {
            PhantomKind::CsLetters => "cs_letters",
            PhantomKind::Smiley => "smiley",
            PhantomKind::Tumor => "tumor",
        }
    }
}

impl fmt::Display for PhantomKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PhantomKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cs_letters" => Ok(PhantomKind::CsLetters),
            "smiley" => Ok(PhantomKind::Smiley),
            "tumor" => Ok(PhantomKind::Tumor),
            other => Err(Error::InvalidArgument(format!("unknown phantom kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Shape {
    /// Axis-aligned rectangle `[u0, u1] × [v0, v1]`.
    Rect { u0: f64, u1: f64, v0: f64, v1: f64 },
    Disk { cu: f64, cv: f64, r: f64 },
    /// Annulus `r_in ≤ |p − c| ≤ r_out`, optionally restricted to polar angles in
    /// `[from, to]` (radians, counterclockwise from +u).
    Ring {
        cu: f64,
        cv: f64,
        r_in: f64,
        r_out: f64,
        sector: Option<(f64, f64)>,
    },
}

impl Shape {
    fn contains(&self, u: f64, v: f64) -> bool {
        match *self {
            Shape::Rect { u0, u1, v0, v1 } => (u0..=u1).contains(&u) && (v0..=v1).contains(&v),
            Shape::Disk { cu, cv, r } => (u - cu).powi(2) + (v - cv).powi(2) <= r * r,
            Shape::Ring {
                cu,
                cv,
                r_in,
                r_out,
                sector,
            } => {
                let (du, dv) = (u - cu, v - cv);
                let d = du.hypot(dv);
                if d < r_in || d > r_out {
                    return false;
                }
                match sector {
                    None => true,
                    Some((from, to)) => {
                        let theta = dv.atan2(du);
                        theta >= from && theta <= to
                    }
                }
            }
        }
    }
}

fn rect(u0: f64, u1: f64, v0: f64, v1: f64) -> Shape {
    Shape::Rect { u0, u1, v0, v1 }
}

fn shapes(kind: PhantomKind) -> Vec<Shape> {
    use std::f64::consts::PI;
    match kind {
        // Block letters: "C" on the left, "S" on the right, both 1.2 tall.
        PhantomKind::CsLetters => vec![
            // C
            rect(-0.75, -0.10, 0.40, 0.60),
            rect(-0.75, -0.55, -0.60, 0.60),
            rect(-0.75, -0.10, -0.60, -0.40),
            // S
            rect(0.10, 0.75, 0.40, 0.60),
            rect(0.10, 0.30, 0.10, 0.60),
            rect(0.10, 0.75, -0.10, 0.10),
            rect(0.55, 0.75, -0.60, -0.10),
            rect(0.10, 0.75, -0.60, -0.40),
        ],
        PhantomKind::Smiley => vec![
            Shape::Ring {
                cu: 0.0,
                cv: 0.0,
                r_in: 0.62,
                r_out: 0.80,
                sector: None,
            },
            Shape::Disk {
                cu: -0.28,
                cv: 0.25,
                r: 0.13,
            },
            Shape::Disk {
                cu: 0.28,
                cv: 0.25,
                r: 0.13,
            },
            Shape::Ring {
                cu: 0.0,
                cv: 0.0,
                r_in: 0.30,
                r_out: 0.45,
                sector: Some((-0.85 * PI, -0.15 * PI)),
            },
        ],
        // Tumor disk with a straight vessel running from it to the right edge.
        PhantomKind::Tumor => vec![
            Shape::Disk {
                cu: -0.15,
                cv: 0.10,
                r: 0.30,
            },
            rect(-0.15, 0.95, -0.02, 0.12),
        ],
    }
}

/// Binary phantom of the given kind rasterized on `grid`, with maximum value one.
pub fn make_phantom(kind: PhantomKind, grid: &GridSpec) -> Result<ConcentrationImage> {
    let n = grid.n_per_side();
    if n < MIN_PHANTOM_SIDE {
        return Err(Error::InvalidArgument(format!(
            "phantoms need at least {MIN_PHANTOM_SIDE} voxels per side, got {n}"
        )));
    }
    let shapes = shapes(kind);
    let w = grid.half_width();
    let values = DVector::from_fn(grid.n_voxels(), |vox, _| {
        let c = grid.voxel_center(vox);
        let (u, v) = (c.x / w, c.y / w);
        if shapes.iter().any(|s| s.contains(u, v)) {
            1.0
        } else {
            0.0
        }
    });
    ConcentrationImage::new(*grid, values, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solvers::GradientOperator;

    fn grid(n: usize) -> GridSpec {
        GridSpec::new(0.05, n).unwrap()
    }

    #[test]
    fn binary_with_unit_max() {
        for kind in PhantomKind::ALL {
            for n in [15, 25, 75] {
                let p = make_phantom(kind, &grid(n)).unwrap();
                assert!(p.values().iter().all(|&v| v == 0.0 || v == 1.0));
                assert_eq!(p.values().max(), 1.0, "{kind} on {n}");
                assert_eq!(p.n_max(), 1.0);
            }
        }
    }

    #[test]
    fn small_grid_rejected() {
        assert!(make_phantom(PhantomKind::Tumor, &grid(14)).is_err());
    }

    #[test]
    fn unknown_kind_rejected() {
        assert!("brain".parse::<PhantomKind>().is_err());
        assert_eq!("smiley".parse::<PhantomKind>().unwrap(), PhantomKind::Smiley);
    }

    /// Rasterize at 2n, reduce each 2×2 block by majority vote (ties count as set),
    /// and compare with the direct rasterization at n.
    fn downsample_agreement(kind: PhantomKind, n: usize) -> f64 {
        let coarse = make_phantom(kind, &grid(n)).unwrap();
        let fine = make_phantom(kind, &grid(2 * n)).unwrap();
        let mut agree = 0;
        for iy in 0..n {
            for ix in 0..n {
                let mut votes = 0.0;
                for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                    votes += fine.values()[(2 * iy + dy) * 2 * n + 2 * ix + dx];
                }
                let majority = if votes >= 2.0 { 1.0 } else { 0.0 };
                if majority == coarse.values()[iy * n + ix] {
                    agree += 1;
                }
            }
        }
        agree as f64 / (n * n) as f64
    }

    #[test]
    fn resolution_consistency() {
        assert!(downsample_agreement(PhantomKind::Tumor, 75) >= 0.95);
        for kind in PhantomKind::ALL {
            assert!(downsample_agreement(kind, 50) >= 0.95, "{kind}");
        }
    }

    #[test]
    fn sparse_gradient() {
        for kind in PhantomKind::ALL {
            let p = make_phantom(kind, &grid(75)).unwrap();
            let g = GradientOperator::new(75, 75);
            let d = g.apply(p.values()).unwrap();
            let nnz = d.iter().filter(|&&x| x != 0.0).count();
            assert!((nnz as f64) < 0.15 * 2.0 * 75.0 * 75.0, "{kind}: {nnz}");
            assert!(nnz > 0);
        }
    }

    #[test]
    fn concentration_bounds_enforced() {
        let g = grid(2);
        let bad = DVector::from_vec(vec![0.0, 0.5, 1.5, 0.0]);
        assert!(ConcentrationImage::new(g, bad, 1.0).is_err());
        let neg = DVector::from_vec(vec![0.0, -0.1, 0.0, 0.0]);
        assert!(ConcentrationImage::new(g, neg, 1.0).is_err());
        assert!(ConcentrationImage::new(g, DVector::zeros(3), 1.0).is_err());
    }
}
