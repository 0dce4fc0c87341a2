//! Acceptance suite. Runs every criterion, prints one verdict line each and
//! exits nonzero if any criterion fails.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pcac::bpre::receding_horizon_gain as receding_gain;
use pcac::grid::GridCell;
use pcac::idmodel::{assemble_bocf, build_regressor, compute_bocf_state};
use pcac::rls::{ForgettingTest, RlsState};
use pcac::{
    inverse_f_cdf, run_ablation, run_experiment, run_grid, ArxParameterVector, ForgettingConfig,
    HorizonWeights, IoHistory, ModelDims, SpecFile,
};

type Outcome = Result<String, String>;

fn within(elapsed: Duration, limit_s: f64, detail: String) -> Outcome {
    let secs = elapsed.as_secs_f64();
    if secs < limit_s {
        Ok(format!("{detail}; {secs:.3} s"))
    } else {
        Err(format!("{detail}; runtime {secs:.3} s exceeds {limit_s} s"))
    }
}

fn no_forgetting() -> ForgettingConfig {
    ForgettingConfig {
        eta: 0.0,
        ..ForgettingConfig::default()
    }
}

fn rls_batch_equivalence() -> Outcome {
    let start = Instant::now();
    let dims = ModelDims::siso(2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let theta0 = common::random_vector(&mut rng, dims.n_params(), 0.5);
    let psi0_scale = 1.0;
    let test = ForgettingTest::new(no_forgetting(), 1).unwrap();
    let mut rls = RlsState::new(
        ArxParameterVector::new(dims, theta0.clone()).unwrap(),
        psi0_scale,
    )
    .unwrap();
    let mut history = IoHistory::new(dims);
    let (mut phis, mut ys) = (Vec::new(), Vec::new());
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let y = common::random_vector(&mut rng, 1, 1.0);
        let u = common::random_vector(&mut rng, 1, 1.0);
        let phi = build_regressor(&history, dims).unwrap();
        rls.update(&phi, &y, &test).map_err(|e| e.to_string())?;
        phis.push(phi);
        ys.push(y.clone());
        let psi0 = DMatrix::identity(dims.n_params(), dims.n_params()) * psi0_scale;
        let oracle = common::batch_least_squares(&phis, &ys, &theta0, &psi0);
        worst = worst.max(common::relative_error(rls.theta.as_vector(), &oracle));
        history.push(&y, &u).unwrap();
    }
    let detail = format!("max relative error {worst:.2e} over 50 steps");
    if worst > 1e-8 {
        return Err(detail);
    }
    within(start.elapsed(), 1.0, detail)
}

fn rls_consistency() -> Outcome {
    let start = Instant::now();
    let dims = ModelDims::siso(3).unwrap();
    let f = [-2.0, 1.41, -0.36].map(|v| DMatrix::from_element(1, 1, v));
    let g = [1.0, -0.5, 0.25].map(|v| DMatrix::from_element(1, 1, v));
    let truth = ArxParameterVector::from_matrices(dims, &f, &g).unwrap();
    let test = ForgettingTest::new(ForgettingConfig::default(), 1).unwrap();
    let mut rls = RlsState::new(ArxParameterVector::zeros(dims), 1e8).unwrap();
    let mut history = IoHistory::new(dims);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut ys, mut us) = (vec![DVector::zeros(1); 3], vec![DVector::zeros(1); 3]);
    let mut first_hit = None;
    let mut err = f64::INFINITY;
    for k in 0..200 {
        let y = common::arx_predict(&f, &g, &ys, &us);
        let u = DVector::from_element(1, rng.random_range(-1.0..1.0));
        let phi = build_regressor(&history, dims).unwrap();
        rls.update(&phi, &y, &test).map_err(|e| e.to_string())?;
        err = (rls.theta.as_vector() - truth.as_vector()).norm();
        if err < 1e-6 && first_hit.is_none() {
            first_hit = Some(k + 1);
        }
        history.push(&y, &u).unwrap();
        ys.insert(0, y);
        us.insert(0, u);
        ys.truncate(3);
        us.truncate(3);
    }
    let detail = format!("error {err:.2e} after 200 steps, first below 1e-6 at step {first_hit:?}");
    if err >= 1e-6 {
        return Err(detail);
    }
    within(start.elapsed(), 1.0, detail)
}

fn f_quantile() -> Outcome {
    let start = Instant::now();
    let cases: [(f64, f64, f64); 20] = [
        (40.0, 200.0, 0.999),
        (1.0, 1.0, 0.9),
        (1.0, 1.0, 0.5),
        (2.0, 2.0, 0.75),
        (2.0, 3.0, 0.1),
        (5.0, 2.0, 0.95),
        (10.0, 20.0, 0.99),
        (1.0, 10.0, 0.5),
        (3.0, 1.0, 0.7),
        (20.0, 50.0, 0.001),
        (100.0, 100.0, 0.9999),
        (7.0, 13.0, 0.25),
        (0.5, 3.0, 0.6),
        (15.0, 4.0, 0.8),
        (200.0, 40.0, 0.999),
        (30.0, 60.0, 0.05),
        (4.0, 9.0, 0.5),
        (12.0, 1.0, 0.3),
        (60.0, 150.0, 0.99),
        (80.0, 374.5, 0.999),
    ];
    let mut worst: f64 = 0.0;
    for (d1, d2, prob) in cases {
        let x = inverse_f_cdf(d1, d2, prob).map_err(|e| format!("({d1}, {d2}, {prob}): {e}"))?;
        let err = (common::f_cdf_quadrature(d1, d2, x) - prob).abs();
        if err > 1e-8 {
            return Err(format!("({d1}, {d2}, {prob}) -> {x}: CDF error {err:.2e}"));
        }
        worst = worst.max(err);
    }
    within(
        start.elapsed(),
        5.0,
        format!("20 cases, max CDF error {worst:.2e}"),
    )
}

fn bocf_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for draw in 0..100 {
        let p = 1 + draw % 2;
        let m = rng.random_range(1..=2);
        let n_hat = rng.random_range(1..=6);
        let dims = ModelDims::new(n_hat, p, m).unwrap();
        let f: Vec<_> = (0..n_hat)
            .map(|_| common::random_matrix(&mut rng, p, p, 1.0))
            .collect();
        let g: Vec<_> = (0..n_hat)
            .map(|_| common::random_matrix(&mut rng, p, m, 1.0))
            .collect();
        let theta = ArxParameterVector::from_matrices(dims, &f, &g).unwrap();
        let past_y: Vec<_> = (0..n_hat)
            .map(|_| common::random_vector(&mut rng, p, 1.0))
            .collect();
        let past_u: Vec<_> = (0..n_hat)
            .map(|_| common::random_vector(&mut rng, m, 1.0))
            .collect();
        let y_now = common::random_vector(&mut rng, p, 1.0);
        let u_now = common::random_vector(&mut rng, m, 1.0);

        let history = IoHistory::from_samples(dims, &past_y, &past_u).unwrap();
        let real = assemble_bocf(&theta, dims).unwrap();
        let x = compute_bocf_state(&history, &y_now, &theta).unwrap();
        let predicted = &real.c * (&real.a * x + &real.b * &u_now);

        let ys: Vec<_> = std::iter::once(y_now).chain(past_y).collect();
        let us: Vec<_> = std::iter::once(u_now).chain(past_u).collect();
        let oracle = common::arx_predict(&f, &g, &ys, &us);
        let err = common::relative_error(&predicted, &oracle);
        if err > 1e-12 {
            return Err(format!(
                "draw {draw} (n={n_hat}, p={p}, m={m}): relative error {err:.2e}"
            ));
        }
        worst = worst.max(err);
    }
    Ok(format!("100 draws, max relative error {worst:.2e}"))
}

fn bpre_dare() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    let mut systems = 0;
    while systems < 20 {
        let n = rng.random_range(1..=6);
        let m = rng.random_range(1..=2);
        let mut a = common::random_matrix(&mut rng, n, n, 1.0);
        let rho = common::spectral_radius(&a);
        if rho > 0.0 {
            a *= rng.random_range(0.5..1.3) / rho;
        }
        let b = common::random_matrix(&mut rng, n, m, 1.0);
        let e1 = DMatrix::identity(n, n);
        let r2 = DMatrix::identity(m, m) * rng.random_range(0.1..2.0);
        let w = HorizonWeights::from_performance_map(
            500,
            e1.clone(),
            r2.clone(),
            DMatrix::identity(n, n),
        )
        .unwrap();
        let p2 = pcac::riccati_backward(&a, &b, &w).map_err(|e| e.to_string())?;
        let dare = common::dare_fixed_point(&a, &b, &w.r1, &r2);
        let err = (&p2 - &dare).norm() / dare.norm();
        if err > 1e-6 {
            return Err(format!(
                "system {systems} (n={n}, m={m}): relative Frobenius error {err:.2e}"
            ));
        }
        let k = receding_gain(&a, &b, &w).map_err(|e| e.to_string())?;
        let rho_cl = common::spectral_radius(&(&a + &b * k));
        if rho_cl >= 1.0 {
            return Err(format!(
                "system {systems}: closed-loop spectral radius {rho_cl}"
            ));
        }
        worst = worst.max(err);
        systems += 1;
    }
    let one = DMatrix::from_element(1, 1, 1.0);
    let w =
        HorizonWeights::from_performance_map(200, one.clone(), one.clone(), one.clone()).unwrap();
    let p = pcac::riccati_backward(&one, &one, &w).map_err(|e| e.to_string())?[(0, 0)];
    let golden = (1.0 + 5f64.sqrt()) / 2.0;
    if (p - golden).abs() > 1e-9 {
        return Err(format!("scalar case P = {p}, expected {golden}"));
    }
    within(
        start.elapsed(),
        10.0,
        format!(
            "20 systems, max relative error {worst:.2e}; scalar P error {:.1e}",
            (p - golden).abs()
        ),
    )
}

fn grid_suppression(cells: &[GridCell], elapsed: Duration) -> Outcome {
    let mut worst_db = f64::NEG_INFINITY;
    let mut worst_time: f64 = 0.0;
    for c in cells {
        let m = c
            .metrics()
            .ok_or_else(|| format!("cell {} failed: {:?}", c.index, c.outcome.as_ref().err()))?;
        let t = m
            .suppression_time
            .ok_or_else(|| format!("cell {} never suppressed", c.index))?;
        if m.attenuation_db > -40.0 || t >= 2.0 {
            return Err(format!(
                "cell {}: attenuation {:.1} dB, suppression time {t:.3} s",
                c.index, m.attenuation_db
            ));
        }
        worst_db = worst_db.max(m.attenuation_db);
        worst_time = worst_time.max(t);
    }
    within(
        elapsed,
        60.0,
        format!(
            "{} cells, weakest attenuation {worst_db:.1} dB, slowest suppression {worst_time:.3} s",
            cells.len()
        ),
    )
}

fn saturation(cells: &[GridCell], ablation_max: f64) -> Outcome {
    let mut rows = 0;
    let mut max_u: f64 = 0.0;
    for c in cells {
        let rec = c
            .record()
            .ok_or_else(|| format!("cell {} failed", c.index))?;
        for r in &rec.rows {
            if r.u.abs() > 8.0 {
                return Err(format!(
                    "cell {} step {}: |u| = {}",
                    c.index,
                    r.step,
                    r.u.abs()
                ));
            }
            max_u = max_u.max(r.u.abs());
        }
        rows += rec.rows.len();
    }
    if ablation_max > 8.0 {
        return Err(format!("ablation run reached |u| = {ablation_max}"));
    }
    Ok(format!(
        "{rows} grid rows, max |u| = {max_u}; ablation max |u| = {ablation_max}"
    ))
}

fn spectral_suppression(cells: &[GridCell]) -> Outcome {
    let mut worst = f64::NEG_INFINITY;
    for c in cells {
        let m = c
            .metrics()
            .ok_or_else(|| format!("cell {} failed", c.index))?;
        if m.peak_attenuation_db > -40.0 {
            return Err(format!(
                "cell {}: peak at {:.1} Hz attenuated only {:.1} dB",
                c.index, m.peak_frequency, m.peak_attenuation_db
            ));
        }
        worst = worst.max(m.peak_attenuation_db);
    }
    Ok(format!(
        "{} cells, weakest peak attenuation {worst:.1} dB",
        cells.len()
    ))
}

fn forgetting_ablation(cells: &[pcac::grid::AblationCell]) -> Outcome {
    let wins = cells
        .iter()
        .filter(|c| c.forgetting_not_slower() == Some(true))
        .count();
    let detail = format!(
        "forgetting re-suppressed no later on {wins} of {} cells",
        cells.len()
    );
    if wins >= 7 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let spec_path = dir.path().join("spec.txt");
    std::fs::write(&spec_path, SpecFile::default().render()).map_err(|e| e.to_string())?;
    let mut files = Vec::new();
    for run in 0..2 {
        let spec = SpecFile::load(&spec_path)
            .and_then(|f| f.to_experiment())
            .map_err(|e| e.to_string())?;
        let rec = run_experiment(&spec).map_err(|e| e.to_string())?;
        let path = dir.path().join(format!("record_{run}.csv"));
        rec.save(&path).map_err(|e| e.to_string())?;
        files.push(std::fs::read(&path).map_err(|e| e.to_string())?);
    }
    if files[0] == files[1] {
        Ok(format!("two runs, {} identical bytes", files[0].len()))
    } else {
        Err("record files differ".into())
    }
}

fn main() -> ExitCode {
    let base = SpecFile::default()
        .to_experiment()
        .expect("default spec is valid");
    let single_core = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .expect("thread pool");
    let start = Instant::now();
    let cells = single_core.install(|| run_grid(&base));
    let grid_elapsed = start.elapsed();
    let ablation = run_ablation(&base);
    let ablation_max = ablation
        .iter()
        .flat_map(|c| [&c.with_forgetting, &c.without_forgetting])
        .filter_map(|r| r.as_ref().ok())
        .map(|m| m.max_abs_control)
        .fold(0.0, f64::max);

    let results: Vec<(&str, Outcome)> = vec![
        ("RLS batch equivalence", rls_batch_equivalence()),
        ("RLS consistency", rls_consistency()),
        ("F-quantile correctness", f_quantile()),
        ("BOCF equivalence", bocf_equivalence()),
        ("BPRE-DARE agreement", bpre_dare()),
        (
            "closed-loop suppression",
            grid_suppression(&cells, grid_elapsed),
        ),
        ("saturation invariant", saturation(&cells, ablation_max)),
        ("spectral suppression", spectral_suppression(&cells)),
        ("forgetting ablation", forgetting_ablation(&ablation)),
        ("determinism", determinism()),
    ];

    let mut failed = 0;
    for (i, (name, outcome)) in results.iter().enumerate() {
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {detail}", i + 1);
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        results.len() - failed,
        results.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
