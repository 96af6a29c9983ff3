use std::borrow::Cow;
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::config::{ExperimentConfig, NoisePlacement, SCHEMA_VERSION};
use crate::analysis::{evaluate, l_curve, l_curve_corner, singular_spectrum, LCurvePoint, MetricsReport};
use crate::error::{Error, Result};
use crate::io;
use crate::model::{add_noise, assemble_lead_field, build_geometry, simulate_data, GeometryConfig, LeadField};
use crate::phantom::{make_phantom, ConcentrationImage};
use crate::sensing::{compose_operator, compress_data, make_activation, ActivationMatrix, Scheme};
use crate::solvers::{
    douglas_rachford_solve, forward_backward_solve, quadratic_tikhonov, GradientOperator, IterationRecord,
    Method,
};

pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");
const CACHE_FORMAT: &str = "memrx-leadfield-v1";

/// Files written by one command. Unless [`Artifacts::commit`] is called, dropping
/// the set deletes every registered file (and the output directory if this run
/// created it and it is left empty).
struct Artifacts {
    dir: PathBuf,
    created_dir: bool,
    files: Vec<(String, PathBuf)>,
    committed: bool,
}

impl Artifacts {
    fn open(dir: &Path) -> Result<Self> {
        let created_dir = !dir.exists();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            created_dir,
            files: Vec::new(),
            committed: false,
        })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.files.push((name.to_owned(), p.clone()));
        p
    }

    fn hashes(&self) -> Result<BTreeMap<String, String>> {
        self.files
            .iter()
            .map(|(name, p)| Ok((name.clone(), io::sha256_file(p)?)))
            .collect()
    }

    fn commit(mut self) -> PathBuf {
        self.committed = true;
        self.dir.clone()
    }
}

impl Drop for Artifacts {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        for (_, p) in &self.files {
            let _ = fs::remove_file(p);
        }
        if self.created_dir {
            let _ = fs::remove_dir(&self.dir);
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Seeds {
    pub master: u64,
    pub noise: u64,
    pub activation: u64,
}

impl Seeds {
    fn of(cfg: &ExperimentConfig) -> Self {
        Self {
            master: cfg.master_seed,
            noise: cfg.noise_seed(),
            activation: cfg.activation_seed(),
        }
    }
}

/// Reproducibility record. Holds nothing that varies between identical runs;
/// wall times and cache status go to `timings.json` instead.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub toolkit_version: String,
    pub command: String,
    /// Config echo without `output_dir` and `cache_dir`, so the manifest does not
    /// depend on where artifacts were written.
    pub config: serde_json::Value,
    pub seeds: Seeds,
    pub geometry_hash: String,
    pub lead_field_scale: f64,
    pub summary: serde_json::Value,
    /// SHA-256 of every artifact except the manifest and timings.
    pub artifacts: BTreeMap<String, String>,
}

#[derive(Debug, Default, Serialize)]
struct Timings {
    lead_field_source: &'static str,
    stages: BTreeMap<&'static str, f64>,
}

impl Timings {
    fn time<T>(&mut self, stage: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let t = Instant::now();
        let out = f();
        *self.stages.entry(stage).or_default() += t.elapsed().as_secs_f64();
        out
    }
}

/// Hex SHA-256 identifying a geometry configuration for the lead-field cache.
pub fn geometry_hash(cfg: &GeometryConfig) -> Result<String> {
    let mut bytes = CACHE_FORMAT.as_bytes().to_vec();
    bytes.extend(serde_json::to_vec(cfg)?);
    Ok(io::sha256_bytes(&bytes))
}

/// Loads the lead field from `cache_dir` or assembles and stores it.
/// Returns the field and whether the cache was hit.
pub fn load_or_assemble(cfg: &GeometryConfig, cache_dir: &Path) -> Result<(LeadField, bool)> {
    let path = cache_dir.join(format!("leadfield-{}.bin", geometry_hash(cfg)?));
    if path.exists() {
        return Ok((io::read_lead_field(&path)?, true));
    }
    let lead = assemble_lead_field(&build_geometry(cfg)?)?;
    fs::create_dir_all(cache_dir).map_err(|e| Error::io(cache_dir, e))?;
    let tmp = path.with_extension("bin.tmp");
    io::write_lead_field(&tmp, &lead)?;
    fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
    Ok((lead, false))
}

/// Measurement operator and data for one sensing choice.
pub struct Measurement<'a> {
    pub activation: ActivationMatrix,
    /// Normalized operator the solver sees.
    pub operator: Cow<'a, DMatrix<f64>>,
    /// Factor dividing the raw data (1 for full data).
    pub operator_scale: f64,
    /// Data as measured (full per-coil data or `Y`).
    pub raw: DVector<f64>,
    /// `raw / operator_scale`.
    pub data: DVector<f64>,
}

/// Simulates the measurement of `phantom`. `m = None` yields full data with the
/// lead field itself as operator and the identity as activation matrix.
#[allow(clippy::too_many_arguments)]
pub fn measure<'a>(
    lead: &'a LeadField,
    phantom: &ConcentrationImage,
    scheme: Scheme,
    m: Option<usize>,
    snr_db: f64,
    noise_seed: u64,
    activation_seed: u64,
    placement: NoisePlacement,
) -> Result<Measurement<'a>> {
    let nc = lead.n_coils();
    let Some(m) = m else {
        let full = simulate_data(lead, phantom, snr_db, noise_seed)?;
        return Ok(Measurement {
            activation: make_activation(Scheme::Deterministic, nc, nc, 0)?,
            operator: Cow::Borrowed(lead.matrix()),
            operator_scale: 1.0,
            raw: full.values().clone(),
            data: full.values().clone(),
        });
    };
    let activation = make_activation(scheme, m, nc, activation_seed)?;
    let op = compose_operator(lead, &activation)?;
    let raw = match placement {
        NoisePlacement::Full => {
            let full = simulate_data(lead, phantom, snr_db, noise_seed)?;
            compress_data(&full, &activation)?.values().clone()
        }
        NoisePlacement::Compressed => {
            let clean = simulate_data(lead, phantom, f64::INFINITY, noise_seed)?;
            let y = compress_data(&clean, &activation)?;
            add_noise(y.values(), snr_db, noise_seed)?
        }
    };
    let data = op.scale_data(&raw)?;
    let operator_scale = op.scale();
    Ok(Measurement {
        activation,
        operator: Cow::Owned(op.matrix().clone()),
        operator_scale,
        raw,
        data,
    })
}

pub struct Reconstruction {
    pub values: DVector<f64>,
    pub trace: Vec<IterationRecord>,
}

pub fn reconstruct(
    operator: &DMatrix<f64>,
    data: &DVector<f64>,
    n_per_side: usize,
    method: Method,
    cfg: &ExperimentConfig,
) -> Result<Reconstruction> {
    let params = cfg.solver.params();
    let grad = GradientOperator::square(n_per_side);
    let res = match method {
        Method::Tikhonov => {
            return Ok(Reconstruction {
                values: quadratic_tikhonov(operator, data, cfg.solver.tikhonov_mu)?,
                trace: Vec::new(),
            })
        }
        Method::DouglasRachford => douglas_rachford_solve(operator, data, grad, &params)?,
        Method::ForwardBackward => forward_backward_solve(operator, data, grad, &params)?,
    };
    Ok(Reconstruction {
        values: res.reconstruction,
        trace: res.trace,
    })
}

fn scheme_label(scheme: Scheme, m: Option<usize>) -> &'static str {
    if m.is_some() {
        scheme.as_str()
    } else {
        "full"
    }
}

struct Setup {
    lead: LeadField,
    phantom: ConcentrationImage,
    geometry_hash: String,
    timings: Timings,
}

fn setup(cfg: &ExperimentConfig, with_phantom: bool) -> Result<Setup> {
    let mut timings = Timings::default();
    let (lead, hit) = timings.time("lead_field", || load_or_assemble(&cfg.geometry, &cfg.cache_dir()))?;
    timings.lead_field_source = if hit { "cache" } else { "assembled" };
    let phantom = if with_phantom {
        make_phantom(cfg.phantom, lead.grid())?
    } else {
        ConcentrationImage::new(*lead.grid(), DVector::zeros(lead.n_voxels()), 1.0)?
    };
    Ok(Setup {
        lead,
        phantom,
        geometry_hash: geometry_hash(&cfg.geometry)?,
        timings,
    })
}

fn finish(
    mut art: Artifacts,
    command: &str,
    cfg: &ExperimentConfig,
    setup: &Setup,
    summary: serde_json::Value,
) -> Result<PathBuf> {
    let mut config = serde_json::to_value(cfg)?;
    if let Some(obj) = config.as_object_mut() {
        obj.remove("output_dir");
        obj.remove("cache_dir");
    }
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        toolkit_version: TOOLKIT_VERSION.to_owned(),
        command: command.to_owned(),
        config,
        seeds: Seeds::of(cfg),
        geometry_hash: setup.geometry_hash.clone(),
        lead_field_scale: setup.lead.scale(),
        summary,
        artifacts: art.hashes()?,
    };
    let p = art.path("manifest.json");
    io::write_json(&p, &manifest)?;
    let p = art.path("timings.json");
    io::write_json(&p, &setup.timings)?;
    Ok(art.commit())
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub metrics: MetricsReport,
    pub iterations: usize,
    pub output_dir: PathBuf,
}

/// Full pipeline for one configuration: geometry, lead field, phantom, data,
/// reconstruction, metrics. Writes `phantom.{pgm,csv}`, `data.csv`,
/// `activation.csv`, `reconstruction.{pgm,csv}`, `trace.csv`,
/// `metrics.{csv,json}`, `manifest.json` and `timings.json`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let mut setup = setup(cfg, true)?;
    let mut art = Artifacts::open(&cfg.output_dir)?;
    let grid = *setup.lead.grid();
    let n_max = cfg.solver.n_max;

    let meas = setup.timings.time("simulate", || {
        measure(
            &setup.lead,
            &setup.phantom,
            cfg.sensing.scheme,
            cfg.sensing.m,
            cfg.snr(),
            cfg.noise_seed(),
            cfg.activation_seed(),
            cfg.sensing.noise_placement,
        )
    })?;
    let method = cfg.solver.method;
    let rec = setup.timings.time("reconstruct", || {
        reconstruct(&meas.operator, &meas.data, grid.n_per_side(), method, cfg)
    })?;
    let m = cfg.sensing.m.unwrap_or(setup.lead.n_coils());
    let metrics = evaluate(
        setup.phantom.values(),
        &rec.values,
        cfg.phantom.as_str(),
        method.as_str(),
        scheme_label(cfg.sensing.scheme, cfg.sensing.m),
        m,
    )?;

    io::write_pgm(&art.path("phantom.pgm"), &grid, setup.phantom.values(), setup.phantom.n_max())?;
    io::write_image_csv(&art.path("phantom.csv"), &grid, setup.phantom.values())?;
    io::write_vector_csv(&art.path("data.csv"), &meas.raw)?;
    io::write_matrix_csv(&art.path("activation.csv"), meas.activation.matrix())?;
    io::write_pgm(&art.path("reconstruction.pgm"), &grid, &rec.values, n_max)?;
    io::write_image_csv(&art.path("reconstruction.csv"), &grid, &rec.values)?;
    io::write_trace_csv(&art.path("trace.csv"), &rec.trace)?;
    write_metrics_csv(&art.path("metrics.csv"), std::slice::from_ref(&metrics))?;
    io::write_json(&art.path("metrics.json"), &metrics)?;

    let summary = serde_json::json!({
        "operator_scale": meas.operator_scale,
        "iterations": rec.trace.len(),
        "relative_rmse": metrics.relative_rmse,
    });
    let iterations = rec.trace.len();
    let output_dir = finish(art, "run", cfg, &setup, summary)?;
    Ok(RunOutcome {
        metrics,
        iterations,
        output_dir,
    })
}

fn write_metrics_csv(path: &Path, rows: &[MetricsReport]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["phantom", "method", "scheme", "m", "relative_rmse", "snr_db", "pearson"])?;
    for r in rows {
        w.write_record([
            r.phantom.clone(),
            r.method.clone(),
            r.scheme.clone(),
            r.m.to_string(),
            io::fmt_f64(r.relative_rmse),
            io::fmt_f64(r.snr_db),
            r.pearson.map(io::fmt_f64).unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// One point of an m-sweep; metric fields are `None` when the point failed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub phantom: String,
    pub scheme: String,
    pub method: String,
    pub m: usize,
    pub relative_rmse: Option<f64>,
    pub snr_db: Option<f64>,
    pub pearson: Option<f64>,
    pub iterations: usize,
    pub error: Option<String>,
}

/// Reconstruction quality over `sweep.m_values × sweep.schemes × sweep.methods`,
/// rows ordered scheme, method, m. A failing point is recorded and skipped.
/// Writes `phantom.{pgm,csv}`, `sweep.{csv,json}`, `manifest.json`, `timings.json`.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let mut setup = setup(cfg, true)?;
    let mut art = Artifacts::open(&cfg.output_dir)?;
    let grid = *setup.lead.grid();
    let mut rows = Vec::new();

    for &scheme in &cfg.sweep.schemes {
        for &method in &cfg.sweep.methods {
            for &m in &cfg.sweep.m_values {
                let point = setup.timings.time("sweep_points", || {
                    let meas = measure(
                        &setup.lead,
                        &setup.phantom,
                        scheme,
                        Some(m),
                        cfg.snr(),
                        cfg.noise_seed(),
                        cfg.activation_seed(),
                        cfg.sensing.noise_placement,
                    )?;
                    let rec = reconstruct(&meas.operator, &meas.data, grid.n_per_side(), method, cfg)?;
                    let rep = evaluate(
                        setup.phantom.values(),
                        &rec.values,
                        cfg.phantom.as_str(),
                        method.as_str(),
                        scheme.as_str(),
                        m,
                    )?;
                    Ok((rep, rec.trace.len()))
                });
                let mut row = SweepRow {
                    phantom: cfg.phantom.as_str().to_owned(),
                    scheme: scheme.as_str().to_owned(),
                    method: method.as_str().to_owned(),
                    m,
                    relative_rmse: None,
                    snr_db: None,
                    pearson: None,
                    iterations: 0,
                    error: None,
                };
                match point {
                    Ok((rep, iters)) => {
                        row.relative_rmse = Some(rep.relative_rmse);
                        row.snr_db = Some(rep.snr_db);
                        row.pearson = rep.pearson;
                        row.iterations = iters;
                    }
                    Err(e) => row.error = Some(e.to_string()),
                }
                rows.push(row);
            }
        }
    }

    io::write_pgm(&art.path("phantom.pgm"), &grid, setup.phantom.values(), setup.phantom.n_max())?;
    io::write_image_csv(&art.path("phantom.csv"), &grid, setup.phantom.values())?;
    write_sweep_csv(&art.path("sweep.csv"), &rows)?;
    io::write_json(&art.path("sweep.json"), &rows)?;
    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    let summary = serde_json::json!({ "points": rows.len(), "failed": failed });
    finish(art, "sweep", cfg, &setup, summary)?;
    Ok(rows)
}

fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "phantom",
        "scheme",
        "method",
        "m",
        "relative_rmse",
        "snr_db",
        "pearson",
        "iterations",
        "status",
        "error",
    ])?;
    let opt = |v: Option<f64>| v.map(io::fmt_f64).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.phantom.clone(),
            r.scheme.clone(),
            r.method.clone(),
            r.m.to_string(),
            opt(r.relative_rmse),
            opt(r.snr_db),
            opt(r.pearson),
            r.iterations.to_string(),
            if r.error.is_some() { "failed" } else { "ok" }.to_owned(),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Serialize)]
pub struct LeadFieldSummary {
    pub rows: usize,
    pub cols: usize,
    pub n_coils: usize,
    pub n_sensors: usize,
    pub scale: f64,
    pub cache_hit: bool,
}

/// Assembles (or loads) the lead field and records a summary.
pub fn run_leadfield(cfg: &ExperimentConfig) -> Result<LeadFieldSummary> {
    cfg.validate()?;
    let setup = setup(cfg, false)?;
    let mut art = Artifacts::open(&cfg.output_dir)?;
    let lead = &setup.lead;
    let summary = LeadFieldSummary {
        rows: lead.matrix().nrows(),
        cols: lead.matrix().ncols(),
        n_coils: lead.n_coils(),
        n_sensors: lead.n_sensors(),
        scale: lead.scale(),
        cache_hit: setup.timings.lead_field_source == "cache",
    };
    let shape = serde_json::json!({
        "rows": summary.rows,
        "cols": summary.cols,
        "n_coils": summary.n_coils,
        "n_sensors": summary.n_sensors,
        "scale": summary.scale,
    });
    io::write_json(&art.path("leadfield.json"), &shape)?;
    finish(art, "leadfield", cfg, &setup, shape)?;
    Ok(summary)
}

/// Singular values of the normalized full lead field, written to `spectrum.csv`
/// as `(index, singular_value)`.
pub fn run_spectrum(cfg: &ExperimentConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let mut setup = setup(cfg, false)?;
    let mut art = Artifacts::open(&cfg.output_dir)?;
    let sv = setup.timings.time("spectrum", || Ok(singular_spectrum(setup.lead.matrix())))?;
    let rows: Vec<Vec<f64>> = sv.iter().enumerate().map(|(i, &s)| vec![i as f64, s]).collect();
    io::write_columns_csv(&art.path("spectrum.csv"), &["index", "singular_value"], &rows)?;
    let (max, min) = (sv[0], sv[sv.len() - 1]);
    let summary = serde_json::json!({
        "count": sv.len(),
        "sigma_max": max,
        "sigma_min": min,
        "condition": if min > 0.0 { Some(max / min) } else { None },
    });
    finish(art, "spectrum", cfg, &setup, summary)?;
    Ok(sv)
}

/// Tikhonov L-curve on full data over `sweep.mu_grid`, written to `lcurve.csv`.
pub fn run_lcurve(cfg: &ExperimentConfig) -> Result<Vec<LCurvePoint>> {
    cfg.validate()?;
    let mut setup = setup(cfg, true)?;
    let mut art = Artifacts::open(&cfg.output_dir)?;
    let full = simulate_data(&setup.lead, &setup.phantom, cfg.snr(), cfg.noise_seed())?;
    let points = setup.timings.time("lcurve", || {
        l_curve(setup.lead.matrix(), full.values(), &cfg.sweep.mu_grid)
    })?;

    let p = art.path("lcurve.csv");
    let mut w = csv::Writer::from_path(&p)?;
    w.write_record(["mu", "log10_residual_sq", "log10_solution_norm", "error"])?;
    for pt in &points {
        w.write_record([
            io::fmt_f64(pt.mu),
            io::fmt_f64(pt.log_residual),
            io::fmt_f64(pt.log_solution_norm),
            pt.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(&p, e))?;
    let corner = l_curve_corner(&points).map(|c| c.mu);
    let summary = serde_json::json!({ "points": points.len(), "corner_mu": corner });
    finish(art, "lcurve", cfg, &setup, summary)?;
    Ok(points)
}
