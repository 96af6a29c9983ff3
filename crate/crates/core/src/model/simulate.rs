use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use super::lead_field::LeadField;
use crate::error::{check_dim, Error, Result};
use crate::phantom::ConcentrationImage;
use crate::sensing::Scheme;

/// How a measurement vector is laid out.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    /// One block of `n_sensors` values per coil, coil-major.
    Full { n_coils: usize, n_sensors: usize },
    /// One block of `n_sensors` values per activation pattern.
    Compressed {
        m: usize,
        n_sensors: usize,
        scheme: Scheme,
        seed: u64,
    },
}

impl Layout {
    pub fn len(&self) -> usize {
        match *self {
            Layout::Full { n_coils, n_sensors } => n_coils * n_sensors,
            Layout::Compressed { m, n_sensors, .. } => m * n_sensors,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_sensors(&self) -> usize {
        match *self {
            Layout::Full { n_sensors, .. } | Layout::Compressed { n_sensors, .. } => n_sensors,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    values: DVector<f64>,
    /// `f64::INFINITY` for noiseless data.
    noise_snr_db: f64,
    seed: u64,
    layout: Layout,
}

impl MeasurementSet {
    pub fn new(values: DVector<f64>, noise_snr_db: f64, seed: u64, layout: Layout) -> Result<Self> {
        check_dim("measurement length", layout.len(), values.len())?;
        Ok(Self {
            values,
            noise_snr_db,
            seed,
            layout,
        })
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn noise_snr_db(&self) -> f64 {
        self.noise_snr_db
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }
}

/// Adds white Gaussian noise scaled so that `20·log₁₀(‖clean‖/‖ξ‖) = snr_db`.
///
/// Variates come from `StandardNormal` over a ChaCha20 stream seeded with `seed`;
/// the draw is rescaled exactly rather than relying on sample statistics.
/// An infinite `snr_db` returns `clean` unchanged.
pub fn add_noise(clean: &DVector<f64>, snr_db: f64, seed: u64) -> Result<DVector<f64>> {
    if snr_db == f64::INFINITY {
        return Ok(clean.clone());
    }
    if !(snr_db > 0.0) || !snr_db.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "SNR must be positive or infinite, got {snr_db} dB"
        )));
    }
    let signal = clean.norm();
    if signal == 0.0 {
        return Err(Error::InvalidArgument(
            "SNR is undefined for an all-zero signal".into(),
        ));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut noise = DVector::from_fn(clean.len(), |_, _| StandardNormal.sample(&mut rng));
    let raw = noise.norm();
    if raw == 0.0 {
        return Err(Error::Singular("noise draw is identically zero".into()));
    }
    noise *= signal * 10f64.powf(-snr_db / 20.0) / raw;
    Ok(clean + noise)
}

/// Full activation data `b = L·n + ξ` at the requested SNR.
pub fn simulate_data(
    lead_field: &LeadField,
    n: &ConcentrationImage,
    snr_db: f64,
    seed: u64,
) -> Result<MeasurementSet> {
    if n.grid() != lead_field.grid() {
        return Err(Error::InvalidArgument(
            "concentration image grid differs from lead field grid".into(),
        ));
    }
    let clean = lead_field.apply(n.values())?;
    let values = add_noise(&clean, snr_db, seed)?;
    MeasurementSet::new(
        values,
        snr_db,
        seed,
        Layout::Full {
            n_coils: lead_field.n_coils(),
            n_sensors: lead_field.n_sensors(),
        },
    )
}
