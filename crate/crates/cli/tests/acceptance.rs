//! Acceptance suite: one pass/fail line per criterion, non-zero exit on any failure.

use std::f64::consts::{E, PI};
use std::cell::OnceCell;
use std::fs;
use std::panic;
use std::path::Path;
use std::process::Command;
use std::rc::Rc;
use std::time::Instant;

use krrbw::bandwidth::{
    default_cv_grid, regime_threshold, select_cv, select_jacobian, JacobianParams, Method, SelectionConfig,
};
use krrbw::data::{generate_synthetic, make_kfold, Dataset};
use krrbw::eval::{run_sweep, Axis, DataSource, SweepConfig, SweepReport};
use krrbw::kernel::kernel_gradient_norm;
use krrbw::lambertw::lambert_w;
use krrbw::linalg::factor_spd;
use krrbw::verify::{check_prop1_regimes, check_prop2_chain, check_prop3_grad_max, check_prop4, measure_prop4};
use krrbw::{krr, Branch, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

type Outcome = Result<String, String>;
type Check = Box<dyn FnOnce() -> Outcome>;

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

fn closed_form_sigma() -> Outcome {
    let base = JacobianParams::new(10, 1, 1.0, 0.0).unwrap();
    let s0 = base.stationary_sigma(Branch::Principal).unwrap();
    let expected = 2f64.sqrt() / (8.0 * PI);
    let at_thr = base.with_lambda(regime_threshold(10)).unwrap().stationary_sigma(Branch::Principal).unwrap();
    let (e0, e1) = (rel(s0, expected), rel(at_thr / s0, 3f64.sqrt()));
    ensure(e0 <= 1e-12 && e1 <= 1e-10, format!("rel err sigma0={e0:.2e}, ratio={e1:.2e}"))
}

fn lambert_round_trip() -> Outcome {
    let m = 10_000;
    let mut worst: f64 = 0.0;
    for branch in [Branch::Principal, Branch::Negative] {
        for k in 0..m {
            let x = -(-1.0f64).exp() * (k as f64 + 0.5) / m as f64;
            let w = lambert_w(x, branch).map_err(|e| e.to_string())?;
            worst = worst.max((w * w.exp() - x).abs());
        }
    }
    let b = -(-1.0f64).exp();
    let w0 = lambert_w(b, Branch::Principal).map_err(|e| e.to_string())?;
    let w1 = lambert_w(b, Branch::Negative).map_err(|e| e.to_string())?;
    ensure(
        worst <= 1e-12 && (w0 + 1.0).abs() <= 1e-6 && (w1 + 1.0).abs() <= 1e-6,
        format!("max residual={worst:.2e}, W0(-1/e)={w0}, W-1(-1/e)={w1}"),
    )
}

fn regime_suite() -> Outcome {
    let mut failed = Vec::new();
    for n in [3usize, 10, 100] {
        let thr = regime_threshold(n);
        for p in [1usize, 2, 5] {
            for lambda in [0.0, 0.5 * thr, 2.0 * thr] {
                let r = check_prop1_regimes(&JacobianParams::new(n, p, 1.0, lambda).unwrap());
                if !r.passed() {
                    failed.push(r.config.clone());
                }
            }
        }
    }
    ensure(failed.is_empty(), format!("27 configurations, failures: {failed:?}"))
}

fn interpolation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x: Vec<f64> = (0..20).map(|_| rng.random::<f64>()).collect();
    let y: Vec<f64> = x.iter().map(|v| (2.0 * PI * v).sin() + 0.1 * rng.random::<f64>()).collect();
    let data = Dataset::from_1d(&x, &y).unwrap();
    let sigma = select_jacobian(data.features(), 0.0).unwrap().sigma;
    let model = krr::fit(&data, sigma, 0.0).map_err(|e| e.to_string())?;
    let pred = model.predict(data.features()).unwrap();
    let resid = (pred - data.response()).amax();
    let tol = 1e-6 * (data.response().amax() + 1.0);
    ensure(resid <= tol, format!("sigma={sigma:.6}, max residual={resid:.2e}, tol={tol:.2e}"))
}

fn bound_chain() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let lambdas = [0.0, 1e-3, 1.0];
    let (mut instances, mut violations, mut probes, mut redrawn, mut worst) = (0, 0, 0, 0, f64::INFINITY);
    while instances < 100 {
        let n = rng.random_range(3..=20);
        let p = rng.random_range(1..=3);
        let lambda = lambdas[instances % 3];
        let x = DMatrix::from_fn(n, p, |_, _| rng.random::<f64>());
        let y = DVector::from_fn(n, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        let data = Dataset::new(x, y).unwrap();
        let sigma = 0.05 + rng.random::<f64>();
        match check_prop2_chain(&data, sigma, lambda, 10, instances as u64) {
            Ok(r) => {
                violations += r.violations;
                probes += r.trials;
                worst = worst.min(r.worst_margin);
                instances += 1;
            }
            // K numerically singular at λ = 0: no fitted function exists, draw again.
            Err(krrbw::Error::NotPositiveDefinite { .. }) if lambda == 0.0 => redrawn += 1,
            Err(e) => return Err(e.to_string()),
        }
    }
    ensure(
        violations == 0,
        format!("{instances} instances, {probes} probes, {violations} violations, worst relative margin={worst:.3e}, {redrawn} singular draws replaced"),
    )
}

fn gradient_maximum() -> Outcome {
    let mut details = Vec::new();
    for sigma in [0.1, 1.0, 10.0] {
        let grid = 10_000;
        let step = 10.0 * sigma / grid as f64;
        let (mut best, mut arg) = (f64::NEG_INFINITY, 0.0);
        for i in 0..=grid {
            let d = step * i as f64;
            let g = kernel_gradient_norm(d, sigma).unwrap();
            if g > best {
                best = g;
                arg = d;
            }
        }
        let cap = 1.0 / (sigma * E.sqrt());
        let report = check_prop3_grad_max(sigma).unwrap();
        if rel(best, cap) > 1e-6 || (arg - sigma).abs() > step || !report.passed() {
            return Err(format!("sigma={sigma}: max={best}, cap={cap}, argmax={arg}"));
        }
        details.push(format!("sigma={sigma}: rel={:.1e}", rel(best, cap)));
    }
    Ok(details.join(", "))
}

fn inverse_norm_bound() -> Outcome {
    let (mut count, mut violations, mut resolved) = (0, 0, Vec::new());
    for n in [5usize, 10, 20] {
        let x = DMatrix::from_fn(n, 1, |i, _| i as f64 / (n - 1) as f64);
        for k in 0..20 {
            let sigma = 0.01 * 200f64.powf(k as f64 / 19.0);
            for lambda in [0.0, 1e-3, 1.0] {
                let report = check_prop4(&x, sigma, lambda).map_err(|e| e.to_string())?;
                let m = measure_prop4(&x, sigma, lambda).unwrap();
                count += 1;
                if report.worst_margin < -1e-10 || report.worst_margin.is_nan() {
                    violations += 1;
                    if m.s_min_resolved(n) {
                        resolved.push(format!("n={n},sigma={sigma:.4},lambda={lambda}: margin={:.3e}", report.worst_margin));
                    }
                }
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cloud = DMatrix::from_fn(20, 1, |_, _| rng.random::<f64>());
    let irregular: Vec<String> = [0.05, 0.2, 1.0]
        .iter()
        .map(|&s| format!("{:.2e}", measure_prop4(&cloud, s, 1e-3).unwrap().margin()))
        .collect();
    ensure(
        violations == 0,
        format!(
            "{count} grid configurations, {violations} with margin < -1e-10, {} of them with s_min above the rounding floor {resolved:?}; irregular cloud margins (reported) {irregular:?}",
            resolved.len()
        ),
    )
}

fn small_n_sweep() -> SweepReport {
    let config = SweepConfig {
        axis: Axis::SampleSize,
        values: vec![25.0, 40.0],
        fixed_lambda: 1e-3,
        fixed_n: None,
        repeats: 100,
        methods: vec![Method::Jacobian, Method::Cv, Method::SeededCv],
        selection: SelectionConfig::default(),
        seed: 2024,
    };
    run_sweep(&DataSource::Synthetic { noise_sd: 0.1, test_size: 1000 }, &config).unwrap()
}

fn stability(report: &SweepReport) -> Outcome {
    let at40 = |m| report.get(1, m).unwrap().sigma.sd;
    let (j, cv, scv) = (at40(Method::Jacobian), at40(Method::Cv), at40(Method::SeededCv));
    ensure(
        j <= 0.5 * cv && scv <= cv,
        format!("n=40 sd(sigma): jacobian={j:.4e}, cv={cv:.4e}, seeded-cv={scv:.4e}"),
    )
}

fn small_n_accuracy(report: &SweepReport) -> Outcome {
    let mut ok = true;
    let mut details = Vec::new();
    for (k, n) in [25, 40].iter().enumerate() {
        let j = report.get(k, Method::Jacobian).unwrap();
        let cv = report.get(k, Method::Cv).unwrap();
        ok &= j.r2.mean >= cv.r2.mean - 0.05 && j.r2.p05 >= cv.r2.p05;
        details.push(format!(
            "n={n}: mean R2 jacobian={:.4} cv={:.4}, p05 jacobian={:.4} cv={:.4}, failures {}/{}",
            j.r2.mean, cv.r2.mean, j.r2.p05, cv.r2.p05, j.failures, cv.failures
        ));
    }
    ensure(ok, details.join("; "))
}

fn lambda_clamp() -> Outcome {
    let n = 40;
    let thr = regime_threshold(n);
    let lambdas: Vec<f64> = (0..20).map(|k| thr * 10f64.powf(-2.0 + 4.0 * (k as f64 + 0.5) / 20.0)).collect();
    let config = SweepConfig {
        axis: Axis::Lambda,
        values: lambdas.clone(),
        fixed_lambda: 0.0,
        fixed_n: Some(n),
        repeats: 2,
        methods: vec![Method::Jacobian],
        selection: SelectionConfig::default(),
        seed: 9,
    };
    let report = run_sweep(&DataSource::Synthetic { noise_sd: 0.1, test_size: 200 }, &config).unwrap();
    let sigma: Vec<f64> = (0..20).map(|k| report.get(k, Method::Jacobian).unwrap().sigma.mean).collect();
    let below = lambdas.iter().filter(|&&l| l < thr).count();
    let increasing = sigma[..below].windows(2).all(|w| w[0] < w[1]);
    let flat = sigma[below..].iter().all(|&s| s == sigma[below]);
    let rising_into = sigma[below - 1] < sigma[below];
    ensure(
        increasing && flat && rising_into,
        format!("{below} values below threshold {thr:.4}, sigma {:.5} -> {:.5}, constant {:.5} above", sigma[0], sigma[below - 1], sigma[below]),
    )
}

fn run_cli(args: &[&str]) -> Result<Vec<u8>, String> {
    let o = Command::new(env!("CARGO_BIN_EXE_krrbw")).args(args).output().map_err(|e| e.to_string())?;
    if !o.status.success() {
        return Err(format!("{args:?} exited {:?}: {}", o.status.code(), String::from_utf8_lossy(&o.stderr)));
    }
    Ok(o.stdout)
}

/// Runs every subcommand into `dir` and returns stdout plus each output file.
fn cli_outputs(dir: &Path, threads: &str) -> Result<Vec<(String, Vec<u8>)>, String> {
    let p = |name: &str| dir.join(name).to_str().unwrap().to_string();
    let (train, model, feats, pred) = (p("train.csv"), p("model.krr"), p("x.csv"), p("pred.csv"));
    let (curve, sweep, jk, verify, svg) = (p("curve.csv"), p("sweep.csv"), p("jk.csv"), p("verify.csv"), p("sweep.svg"));
    let t = ["--threads", threads];
    let mut out = Vec::new();
    out.push(("synth".into(), run_cli(&[&["synth", "--n", "60", "--seed", "7", "--output", &train][..], &t].concat())?));
    fs::write(&feats, (0..25).map(|i| format!("{}\n", -5.0 + 0.4 * i as f64)).collect::<String>()).unwrap();
    for method in ["jacobian", "silverman", "cv", "seeded-cv"] {
        let stdout = run_cli(&[&["select", "--input", &train, "--header", "--method", method, "--seed", "3", "--output", &curve][..], &t].concat())?;
        out.push((format!("select {method}"), stdout));
        if let Ok(bytes) = fs::read(&curve) {
            out.push((format!("select {method} curve"), bytes));
            fs::remove_file(&curve).unwrap();
        }
    }
    out.push(("fit".into(), run_cli(&[&["fit", "--input", &train, "--header", "--method", "cv", "--output", &model][..], &t].concat())?));
    out.push(("predict".into(), run_cli(&[&["predict", "--model", &model, "--input", &feats, "--output", &pred][..], &t].concat())?));
    out.push((
        "sweep".into(),
        run_cli(&[&["sweep", "--values", "20,30", "--repeats", "4", "--test-size", "100", "--seed", "1", "--output", &sweep][..], &t].concat())?,
    ));
    out.push((
        "jackknife".into(),
        run_cli(&[&["jackknife", "--input", &train, "--header", "--grid-points", "7", "--holdout", "0.5", "--output", &jk][..], &t].concat())?,
    ));
    out.push(("verify".into(), run_cli(&[&["verify", "--seed", "4", "--output", &verify][..], &t].concat())?));
    out.push(("plot".into(), run_cli(&[&["plot", "--input", &sweep, "--output", &svg][..], &t].concat())?));
    for f in [&train, &model, &pred, &sweep, &jk, &verify, &svg] {
        out.push((f.rsplit('/').next().unwrap().to_string(), fs::read(f).map_err(|e| e.to_string())?));
    }
    Ok(out)
}

fn determinism() -> Outcome {
    let runs: Vec<Vec<(String, Vec<u8>)>> = ["1", "1", "8", "8"]
        .iter()
        .map(|t| {
            let dir = TempDir::new().unwrap();
            cli_outputs(dir.path(), t)
        })
        .collect::<Result<_, _>>()?;
    let differing: Vec<&str> = runs[0]
        .iter()
        .zip(&runs[1])
        .zip(runs[2].iter().zip(&runs[3]))
        .filter(|((a, b), (c, d))| a.1 != b.1 || a.1 != c.1 || a.1 != d.1)
        .map(|((a, _), _)| a.0.as_str())
        .collect();
    ensure(
        differing.is_empty() && runs.iter().all(|r| r.len() == runs[0].len()),
        format!("{} outputs compared across 2 runs each at --threads 1 and 8; differing: {differing:?}", runs[0].len()),
    )
}

/// Gaussian elimination with partial pivoting.
fn ge_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = a.nrows();
    let mut m = a.clone();
    let mut v = b.clone();
    for c in 0..n {
        let piv = (c..n).max_by(|&i, &j| m[(i, c)].abs().total_cmp(&m[(j, c)].abs())).unwrap();
        m.swap_rows(c, piv);
        v.swap_rows(c, piv);
        for r in c + 1..n {
            let f = m[(r, c)] / m[(c, c)];
            for k in c..n {
                m[(r, k)] -= f * m[(c, k)];
            }
            v[r] -= f * v[c];
        }
    }
    let mut x = DVector::zeros(n);
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| m[(r, k)] * x[k]).sum();
        x[r] = (v[r] - s) / m[(r, r)];
    }
    x
}

/// Exhaustive CV: every grid σ, every fold, Gaussian kernel built directly.
fn cv_oracle(data: &Dataset, lambda: f64, folds: usize, grid: &[f64], seed: u64) -> f64 {
    let plans = make_kfold(data.n(), folds, seed).unwrap();
    let x = data.features();
    let k = |a: usize, b: usize, s: f64| {
        let d2: f64 = (0..x.ncols()).map(|c| (x[(a, c)] - x[(b, c)]).powi(2)).sum();
        (-d2 / (2.0 * s * s)).exp()
    };
    let mut best = (f64::INFINITY, f64::NAN);
    for &s in grid {
        let mut total = 0.0;
        for plan in &plans {
            let tr = &plan.train_indices;
            let a = DMatrix::from_fn(tr.len(), tr.len(), |i, j| k(tr[i], tr[j], s) + if i == j { lambda } else { 0.0 });
            let y = DVector::from_fn(tr.len(), |i, _| data.response()[tr[i]]);
            let alpha = ge_solve(&a, &y);
            let mse: f64 = plan
                .test_indices
                .iter()
                .map(|&t| {
                    let f: f64 = tr.iter().enumerate().map(|(i, &r)| alpha[i] * k(t, r, s)).sum();
                    (f - data.response()[t]).powi(2)
                })
                .sum::<f64>()
                / plan.test_indices.len() as f64;
            total += mse;
        }
        let loss = total / plans.len() as f64;
        if loss < best.0 {
            best = (loss, s);
        }
    }
    best.1
}

fn oracle_equivalence() -> Outcome {
    let mut matches = 0;
    for seed in 0..5u64 {
        let data = generate_synthetic(30 + 5 * seed as usize, 0.1, 100 + seed).unwrap();
        let grid = default_cv_grid(data.features(), 40, 0.01, None).unwrap();
        let got = select_cv(&data, 1e-3, 5, &grid, seed).map_err(|e| e.to_string())?.sigma;
        let want = cv_oracle(&data, 1e-3, 5, &grid, seed);
        if got != want {
            return Err(format!("instance {seed}: select_cv sigma={got}, oracle sigma={want}"));
        }
        matches += 1;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let n = rng.random_range(2..=40);
        let b = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() - 0.5);
        let a = &b * b.transpose() + DMatrix::identity(n, n) * 0.1;
        let rhs = DVector::from_fn(n, |_, _| rng.random::<f64>() - 0.5);
        let x = factor_spd(&a, 0.0).map_err(|e| e.to_string())?.solve(&rhs).unwrap();
        let want = ge_solve(&a, &rhs);
        worst = worst.max((&x - &want).amax() / want.amax().max(1.0));
    }
    ensure(worst <= 1e-10, format!("{matches}/5 CV instances identical, worst solve deviation={worst:.2e}"))
}

fn main() {
    let started = Instant::now();
    let sweep: Rc<OnceCell<SweepReport>> = Rc::default();
    let (s8, s9) = (sweep.clone(), sweep);
    let criteria: Vec<(&str, Check)> = vec![
        ("closed-form sigma", Box::new(closed_form_sigma)),
        ("lambert w round trip", Box::new(lambert_round_trip)),
        ("jacobian regime shapes", Box::new(regime_suite)),
        ("interpolation at lambda 0", Box::new(interpolation)),
        ("gradient bound chain", Box::new(bound_chain)),
        ("kernel gradient maximum", Box::new(gradient_maximum)),
        ("inverse norm lower bound", Box::new(inverse_norm_bound)),
        ("selected sigma stability", Box::new(move || stability(s8.get_or_init(small_n_sweep)))),
        ("small-n accuracy", Box::new(move || small_n_accuracy(s9.get_or_init(small_n_sweep)))),
        ("lambda clamp", Box::new(lambda_clamp)),
        ("cli determinism", Box::new(determinism)),
        ("oracle equivalence", Box::new(oracle_equivalence)),
    ];
    let mut failures = 0;
    for (k, (name, check)) in criteria.into_iter().enumerate() {
        let t = Instant::now();
        let outcome = panic::catch_unwind(panic::AssertUnwindSafe(check))
            .unwrap_or_else(|e| Err(e.downcast_ref::<String>().cloned().unwrap_or_else(|| "panicked".into())));
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failures += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {:>2} {tag} {name} ({:.2}s): {detail}", k + 1, t.elapsed().as_secs_f64());
    }
    println!("acceptance: {}/12 passed in {:.1}s", 12 - failures, started.elapsed().as_secs_f64());
    if failures > 0 {
        std::process::exit(1);
    }
}
