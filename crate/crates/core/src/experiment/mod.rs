//! Seeded, reproducible experiment pipeline behind the command-line tool.

mod config;
mod run;

pub use config::{
    ExperimentConfig, NoisePlacement, SensingConfig, SolverSection, SweepConfig, ACTIVATION_SEED_OFFSET,
    NOISE_SEED_OFFSET, SCHEMA_VERSION,
};
pub use run::{
    geometry_hash, load_or_assemble, measure, reconstruct, run_experiment, run_lcurve, run_leadfield,
    run_spectrum, run_sweep, LeadFieldSummary, Manifest, Measurement, Reconstruction, RunOutcome, Seeds,
    SweepRow, TOOLKIT_VERSION,
};
