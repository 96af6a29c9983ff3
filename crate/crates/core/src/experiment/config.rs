use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::GeometryConfig;
use crate::phantom::PhantomKind;
use crate::sensing::Scheme;
use crate::solvers::{Method, SolverConfig, DEFAULT_INNER_ITER};

pub const SCHEMA_VERSION: u32 = 1;

/// Seed offsets added (wrapping) to the master seed to obtain per-stage seeds.
pub const NOISE_SEED_OFFSET: u64 = 1;
pub const ACTIVATION_SEED_OFFSET: u64 = 2;

/// Where measurement noise enters when data are compressed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoisePlacement {
    /// Noise on the full per-coil data, which are then combined by `A`.
    Full,
    /// Noiseless full data are combined, then noise is added to `Y`.
    Compressed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensingConfig {
    pub scheme: Scheme,
    /// Number of activation patterns; `None` reconstructs from full data.
    pub m: Option<usize>,
    /// Activation seed; defaults to the master seed plus [`ACTIVATION_SEED_OFFSET`].
    pub seed: Option<u64>,
    pub noise_placement: NoisePlacement,
}

impl Default for SensingConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::Deterministic,
            m: Some(40),
            seed: None,
            noise_placement: NoisePlacement::Full,
        }
    }
}

/// Solver selection plus the iterative-solver parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub method: Method,
    /// Shift used when `method` is `tikhonov`.
    pub tikhonov_mu: f64,
    pub mu: f64,
    pub alpha: f64,
    pub box_constraint: bool,
    pub relaxation: f64,
    pub n_max: f64,
    pub n_iter: usize,
    pub inner_iter: usize,
    pub tolerance: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        let p = SolverConfig::default();
        Self {
            method: Method::DouglasRachford,
            tikhonov_mu: 1e-12,
            mu: p.mu,
            alpha: p.alpha,
            box_constraint: p.box_constraint,
            relaxation: p.relaxation,
            n_max: p.n_max,
            n_iter: p.n_iter,
            inner_iter: DEFAULT_INNER_ITER,
            tolerance: p.tolerance,
        }
    }
}

impl SolverSection {
    pub fn params(&self) -> SolverConfig {
        SolverConfig {
            mu: self.mu,
            alpha: self.alpha,
            box_constraint: self.box_constraint,
            relaxation: self.relaxation,
            n_max: self.n_max,
            n_iter: self.n_iter,
            inner_iter: self.inner_iter,
            tolerance: self.tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub m_values: Vec<usize>,
    pub schemes: Vec<Scheme>,
    pub methods: Vec<Method>,
    /// Tikhonov shifts for the L-curve, ascending.
    pub mu_grid: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            m_values: vec![10, 20, 40],
            schemes: vec![Scheme::Deterministic],
            methods: vec![Method::DouglasRachford],
            mu_grid: (0..10).map(|i| 10f64.powi(i - 16)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub geometry: GeometryConfig,
    pub phantom: PhantomKind,
    /// Measurement SNR in dB; `null` means noiseless data.
    pub snr_db: Option<f64>,
    pub sensing: SensingConfig,
    pub solver: SolverSection,
    pub sweep: SweepConfig,
    pub output_dir: PathBuf,
    /// Lead-field cache; defaults to `<output_dir>/cache`.
    pub cache_dir: Option<PathBuf>,
    pub master_seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            geometry: GeometryConfig::default(),
            phantom: PhantomKind::Tumor,
            snr_db: Some(80.0),
            sensing: SensingConfig::default(),
            solver: SolverSection::default(),
            sweep: SweepConfig::default(),
            output_dir: PathBuf::from("out"),
            cache_dir: None,
            master_seed: 0,
        }
    }
}

impl ExperimentConfig {
    /// Desk-scale geometry with otherwise default settings.
    pub fn desk_scale() -> Self {
        Self {
            geometry: GeometryConfig::desk_scale(),
            ..Self::default()
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if let Some(snr) = self.snr_db {
            if !(snr > 0.0) || !snr.is_finite() {
                return bad(format!("snr_db must be positive or null, got {snr}"));
            }
        }
        if self.sensing.m == Some(0) {
            return bad("sensing.m must be positive".into());
        }
        if let Some(m) = self.sensing.m {
            if m > self.geometry.coils.count {
                return bad(format!(
                    "sensing.m = {m} exceeds the {} available coils",
                    self.geometry.coils.count
                ));
            }
        }
        if !(self.solver.tikhonov_mu > 0.0) || !self.solver.tikhonov_mu.is_finite() {
            return bad(format!(
                "solver.tikhonov_mu must be positive, got {}",
                self.solver.tikhonov_mu
            ));
        }
        self.solver.params().validate()?;
        let sw = &self.sweep;
        if sw.m_values.is_empty() || sw.schemes.is_empty() || sw.methods.is_empty() {
            return bad("sweep lists must be nonempty".into());
        }
        if sw.m_values.contains(&0) {
            return bad("sweep.m_values must be positive".into());
        }
        if sw.mu_grid.len() < 3
            || !(sw.mu_grid[0] > 0.0)
            || sw.mu_grid.windows(2).any(|w| !(w[0] < w[1]))
        {
            return bad("sweep.mu_grid needs at least 3 positive ascending values".into());
        }
        Ok(())
    }

    pub fn noise_seed(&self) -> u64 {
        self.master_seed.wrapping_add(NOISE_SEED_OFFSET)
    }

    pub fn activation_seed(&self) -> u64 {
        self.sensing
            .seed
            .unwrap_or_else(|| self.master_seed.wrapping_add(ACTIVATION_SEED_OFFSET))
    }

    pub fn snr(&self) -> f64 {
        self.snr_db.unwrap_or(f64::INFINITY)
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.cache_dir
            .clone()
            .unwrap_or_else(|| self.output_dir.join("cache"))
    }
}
