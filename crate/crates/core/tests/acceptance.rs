//! Acceptance criteria. Each test prints one `PASS`/`FAIL` line with the measured
//! quantities, then asserts.

use std::io::Write;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use memrx::analysis::{image_metrics, l_curve, singular_spectrum};
use memrx::experiment::{load_or_assemble, measure, reconstruct, run_experiment, run_lcurve, ExperimentConfig};
use memrx::model::{coil_field, Coil, LeadField, Vec3};
use memrx::phantom::{make_phantom, ConcentrationImage};
use memrx::sensing::Scheme;
use memrx::solvers::{
    douglas_rachford_solve, prox_objective, quadratic_tikhonov, tv_box_prox, GradientOperator, Method,
    SolverConfig, DEFAULT_INNER_ITER,
};

/// Writes past the test harness capture so every line shows up in the log.
fn report(id: u32, name: &str, pass: bool, detail: String) -> bool {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "[{verdict}] criterion {id:>2} {name}: {detail}");
    pass
}

struct Desk {
    cfg: ExperimentConfig,
    lead: LeadField,
    phantom: ConcentrationImage,
    setup_time: Duration,
}

fn desk() -> &'static Desk {
    static DESK: OnceLock<Desk> = OnceLock::new();
    DESK.get_or_init(|| {
        let t = Instant::now();
        let cfg = ExperimentConfig::desk_scale();
        let cache = tempfile::tempdir().unwrap();
        let (lead, _) = load_or_assemble(&cfg.geometry, cache.path()).unwrap();
        let phantom = make_phantom(cfg.phantom, lead.grid()).unwrap();
        Desk {
            cfg,
            lead,
            phantom,
            setup_time: t.elapsed(),
        }
    })
}

/// Relative RMSE and solver trace for one desk-scale reconstruction.
fn desk_reconstruction(method: Method, m: Option<usize>) -> (f64, Vec<f64>) {
    let d = desk();
    let meas = measure(
        &d.lead,
        &d.phantom,
        Scheme::Deterministic,
        m,
        d.cfg.snr(),
        d.cfg.noise_seed(),
        d.cfg.activation_seed(),
        d.cfg.sensing.noise_placement,
    )
    .unwrap();
    let rec = reconstruct(&meas.operator, &meas.data, d.lead.grid().n_per_side(), method, &d.cfg).unwrap();
    let rmse = image_metrics(d.phantom.values(), &rec.values).unwrap().0;
    (rmse, rec.trace.iter().map(|r| r.relative_change).collect())
}

#[test]
fn criterion_01_coil_field_accuracy() {
    let t = Instant::now();
    let radius = 0.5e-6;
    let analytic = 1.0 / (2.0 * radius);
    let err = |segments: usize| {
        let coil = Coil::new(Vec3::zeros(), Vec3::new(0.0, 1.0, 0.0), radius, segments, 1.0).unwrap();
        let h = coil_field(&coil, &Vec3::zeros()).unwrap();
        (h.norm() - analytic).abs() / analytic
    };
    let (e36, e45) = (err(36), err(45));
    let elapsed = t.elapsed();
    let pass = e36 < 0.01 && e45 < e36 && elapsed < Duration::from_secs(1);
    let detail = format!("err36 = {e36:.3e}, err45 = {e45:.3e}, {elapsed:.2?}");
    assert!(report(1, "coil field vs I0/(2a)", pass, detail.clone()), "{detail}");
}

#[test]
fn criterion_02_gradient_adjoint() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for i in 0..100 {
        let (r, c) = (1 + i % 13, 1 + (i * 7) % 29);
        let g = GradientOperator::new(r, c);
        let x = DVector::from_fn(g.domain_dim(), |_, _| rng.random::<f64>() - 0.5);
        let v = DVector::from_fn(g.range_dim(), |_, _| rng.random::<f64>() - 0.5);
        let gx = g.apply(&x).unwrap();
        let lhs = gx.dot(&v);
        let rhs = x.dot(&g.adjoint(&v).unwrap());
        let scale = gx.norm() * v.norm();
        if scale > 0.0 {
            worst = worst.max((lhs - rhs).abs() / scale);
        }
    }
    let pass = worst <= 1e-12;
    let detail = format!("max |<Dx,v> - <x,D'v>| / (|Dx||v|) = {worst:.2e} over 100 pairs");
    assert!(report(2, "gradient adjoint", pass, detail.clone()), "{detail}");
}

#[test]
fn criterion_03_solver_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);

    // Tikhonov against an LU solve of the explicitly formed normal equations.
    let mut tik_worst = 0.0f64;
    for i in 0..20 {
        let (rows, cols) = (8 + i, 3 + i % 7);
        let m = DMatrix::from_fn(rows, cols, |_, _| rng.random::<f64>() - 0.5);
        let y = DVector::from_fn(rows, |_, _| rng.random::<f64>() - 0.5);
        let mu = 10f64.powf(-3.0 + 3.0 * rng.random::<f64>());
        let x = quadratic_tikhonov(&m, &y, mu).unwrap();
        let mut normal = m.transpose() * &m;
        for k in 0..cols {
            normal[(k, k)] += mu;
        }
        let oracle = normal.lu().solve(&(m.transpose() * &y)).unwrap();
        tik_worst = tik_worst.max((&x - &oracle).norm() / oracle.norm());
    }

    // One DR step from zero with alpha = 0 and no box is the Tikhonov solve.
    let m = DMatrix::from_fn(12, 6, |_, _| rng.random::<f64>() - 0.5);
    let y = DVector::from_fn(12, |_, _| rng.random::<f64>() - 0.5);
    let plain = |n_iter| SolverConfig {
        mu: 0.3,
        alpha: 0.0,
        box_constraint: false,
        n_iter,
        ..SolverConfig::default()
    };
    let one = douglas_rachford_solve(&m, &y, GradientOperator::new(2, 3), &plain(1)).unwrap();
    let tik = quadratic_tikhonov(&m, &y, 0.3).unwrap();
    let one_step_exact = one.data_iterate == tik;

    // Long run on a well-conditioned instance converges to least squares.
    let m = DMatrix::from_fn(8, 5, |i, j| if i == j { 2.0 } else { 0.0 } + 0.3 * (rng.random::<f64>() - 0.5));
    let y = DVector::from_fn(8, |_, _| rng.random::<f64>() - 0.5);
    let long = douglas_rachford_solve(&m, &y, GradientOperator::new(1, 5), &plain(500)).unwrap();
    let normal_residual = m.tr_mul(&(&m * &long.reconstruction - &y)).norm();

    let pass = tik_worst <= 1e-10 && one_step_exact && normal_residual <= 1e-8;
    let detail = format!(
        "Tikhonov rel err {tik_worst:.2e} (20 instances), one DR step exact: {one_step_exact}, \
         |M'(Mn - y)| = {normal_residual:.2e} after 500 iterations"
    );
    assert!(report(3, "solver oracle equivalence", pass, detail.clone()), "{detail}");
}

#[test]
fn criterion_04_prox_optimality() {
    let grid_min = |g: &GradientOperator, v: &DVector<f64>, w: f64| {
        let mut best = f64::INFINITY;
        let mut z = DVector::zeros(3);
        for a in 0..=200 {
            for b in 0..=200 {
                for c in 0..=200 {
                    z[0] = a as f64 * 0.005;
                    z[1] = b as f64 * 0.005;
                    z[2] = c as f64 * 0.005;
                    best = best.min(prox_objective(g, v, &z, w).unwrap());
                }
            }
        }
        best
    };

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut cases = vec![(GradientOperator::new(1, 3), DVector::from_vec(vec![0.0, 10.0, 0.0]), 1.0)];
    for i in 0..5 {
        let g = if i % 2 == 0 { GradientOperator::new(1, 3) } else { GradientOperator::new(3, 1) };
        let v = DVector::from_fn(3, |_, _| 2.0 * rng.random::<f64>() - 0.5);
        cases.push((g, v, 0.05 + 0.5 * rng.random::<f64>()));
    }
    let mut worst_gap = f64::NEG_INFINITY;
    let mut feasible = true;
    for (g, v, w) in &cases {
        let z = tv_box_prox(g, v, *w, Some(1.0), DEFAULT_INNER_ITER).unwrap();
        feasible &= z.iter().all(|&x| (0.0..=1.0).contains(&x));
        worst_gap = worst_gap.max(prox_objective(g, v, &z, *w).unwrap() - grid_min(g, v, *w));
    }
    for _ in 0..200 {
        let g = GradientOperator::new(4, 5);
        let n_max = 0.5 + 2.0 * rng.random::<f64>();
        let v = DVector::from_fn(20, |_, _| 20.0 * (rng.random::<f64>() - 0.5));
        let z = tv_box_prox(&g, &v, rng.random::<f64>(), Some(n_max), DEFAULT_INNER_ITER).unwrap();
        feasible &= z.iter().all(|&x| (0.0..=n_max).contains(&x));
    }
    let pass = worst_gap <= 1e-3 && feasible;
    let detail = format!(
        "max objective - grid minimum = {worst_gap:.2e} on {} instances, all outputs in box: {feasible}",
        cases.len()
    );
    assert!(report(4, "TV + box prox optimality", pass, detail.clone()), "{detail}");
}

#[test]
fn criterion_05_dr_beats_full_tikhonov() {
    let t = Instant::now();
    let d = desk();
    let (dr, _) = desk_reconstruction(Method::DouglasRachford, Some(20));
    let elapsed = d.setup_time + t.elapsed();
    let (tik, _) = desk_reconstruction(Method::Tikhonov, None);
    let ratio = dr / tik;
    let pass = ratio <= 0.6 && elapsed <= Duration::from_secs(120);
    let detail = format!(
        "RMSE DR(m=20) = {dr:.4}, Tikhonov(full) = {tik:.4}, ratio {ratio:.3}, DR pipeline {elapsed:.2?}"
    );
    assert!(report(5, "desk-scale DR vs full-data Tikhonov", pass, detail.clone()), "{detail}");
}

#[test]
fn criterion_06_stagnation_at_50() {
    let (_, changes) = desk_reconstruction(Method::DouglasRachford, Some(20));
    let at_50 = changes[49];
    let first_below = changes.iter().position(|&c| c < 1e-3).map(|k| k + 1);
    let pass = at_50 < 1e-3;
    let detail = format!(
        "relative change at iteration 50 = {at_50:.3e} (first below 1e-3 within 50: {first_below:?})"
    );
    assert!(report(6, "DR stagnation after 50 iterations", pass, detail.clone()), "{detail}");
}

#[test]
fn criterion_07_lead_field_spectrum() {
    let l = desk().lead.matrix();
    let sv = singular_spectrum(l);
    let ratio = sv[0] / sv[sv.len() - 1];
    let monotone = sv.windows(2).all(|w| w[0] >= w[1]);
    let mut eig: Vec<f64> = (l.transpose() * l).symmetric_eigenvalues().iter().copied().collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    let worst = (0..20)
        .map(|i| (sv[i] - eig[i].max(0.0).sqrt()).abs() / sv[i])
        .fold(0.0, f64::max);
    let pass = ratio > 1e6 && monotone && worst <= 1e-8;
    let detail = format!(
        "sigma_max/sigma_min = {ratio:.3e}, monotone: {monotone}, top-20 Gram rel err {worst:.2e}"
    );
    assert!(report(7, "lead-field ill-conditioning", pass, detail.clone()), "{detail}");
}

#[test]
fn criterion_08_l_curve_monotone() {
    let d = desk();
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = d.cfg.clone();
    cfg.output_dir = dir.path().join("lcurve");
    cfg.cache_dir = Some(dir.path().join("cache"));
    let grid: Vec<f64> = (0..10).map(|i| 10f64.powi(i - 16)).collect();
    cfg.sweep.mu_grid = grid.clone();
    let points = run_lcurve(&cfg).unwrap();

    let ok = points.iter().all(|p| p.error.is_none());
    let residual_up = points.windows(2).all(|w| w[0].log_residual <= w[1].log_residual);
    let norm_down = points.windows(2).all(|w| w[0].log_solution_norm >= w[1].log_solution_norm);

    let text = std::fs::read_to_string(cfg.output_dir.join("lcurve.csv")).unwrap();
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let csv_rows: Vec<(f64, f64, f64)> = reader
        .records()
        .map(|r| {
            let r = r.unwrap();
            (r[0].parse().unwrap(), r[1].parse().unwrap(), r[2].parse().unwrap())
        })
        .collect();
    let csv_ok = csv_rows.len() == 10
        && csv_rows
            .iter()
            .zip(&points)
            .all(|(row, p)| row.0 == p.mu && row.1 == p.log_residual && row.2 == p.log_solution_norm);

    // The library call on the same data agrees with what the command wrote.
    let full = memrx::model::simulate_data(&d.lead, &d.phantom, cfg.snr(), cfg.noise_seed()).unwrap();
    let direct = l_curve(d.lead.matrix(), full.values(), &grid).unwrap();
    let consistent = direct == points;

    let pass = ok && residual_up && norm_down && csv_ok && consistent;
    let detail = format!(
        "10 points solved: {ok}, residual nondecreasing: {residual_up}, norm nonincreasing: {norm_down}, \
         CSV rows match: {csv_ok}"
    );
    assert!(report(8, "L-curve monotonicity", pass, detail.clone()), "{detail}");
}

#[test]
fn criterion_09_sweep_plateau() {
    let (r40, _) = desk_reconstruction(Method::DouglasRachford, Some(40));
    let (r60, _) = desk_reconstruction(Method::DouglasRachford, Some(60));
    let rel = (r40 - r60).abs() / r60;
    let pass = rel <= 0.05;
    let detail = format!("RMSE m=40 {r40:.4}, m=60 {r60:.4}, relative difference {rel:.3}");
    assert!(report(9, "deterministic sweep plateau", pass, detail.clone()), "{detail}");
}

#[test]
fn criterion_10_bitwise_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let mut cfg = ExperimentConfig::desk_scale();
        cfg.sensing.m = Some(20);
        cfg.output_dir = dir.path().join(name);
        run_experiment(&cfg).unwrap();
        cfg.output_dir
    };
    let (a, b) = (run("a"), run("b"));
    let mut names: Vec<String> = std::fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n != "timings.json" && n != "cache")
        .collect();
    names.sort();
    let differing: Vec<&String> = names
        .iter()
        .filter(|n| std::fs::read(a.join(n)).unwrap() != std::fs::read(b.join(n)).unwrap())
        .collect();
    let pass = names.iter().any(|n| n == "manifest.json") && differing.is_empty();
    let detail = format!("{} artifacts compared, differing: {differing:?}", names.len());
    assert!(report(10, "bitwise determinism", pass, detail.clone()), "{detail}");
}
