use krrbw::bandwidth::{select, Method, SelectionConfig};
use krrbw::data::generate_synthetic;
use krrbw::eval::{run_sweep, Axis, DataSource, SweepConfig};
use krrbw::kernel::gram;
use krrbw::krr;
use krrbw::linalg::singular_extremes;
use krrbw::rng::derive_seed;
use krrbw::DMatrix;

/// Cyclic Jacobi eigenvalues of a symmetric matrix.
fn jacobi_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut a = m.clone();
    for _ in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[(i, j)].powi(2)).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[(p, q)].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[(i, i)]).collect()
}

#[test]
fn singular_extremes_match_jacobi() {
    for (n, sigma, seed) in [(6, 0.3, 1u64), (15, 0.8, 2), (30, 0.1, 3)] {
        let data = generate_synthetic(n, 0.1, seed).unwrap();
        let k = gram(data.features(), sigma).unwrap();
        let (s_max, s_min) = singular_extremes(&k).unwrap();
        let ev: Vec<f64> = jacobi_eigenvalues(&k).into_iter().map(f64::abs).collect();
        let want_max = ev.iter().cloned().fold(f64::MIN, f64::max);
        let want_min = ev.iter().cloned().fold(f64::MAX, f64::min);
        assert!((s_max - want_max).abs() <= 1e-10 * want_max);
        assert!((s_min - want_min).abs() <= 1e-10 * want_max);
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn type7(v: &[f64], q: f64) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let h = (s.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(s.len() - 1);
    s[lo] + (h - lo as f64) * (s[hi] - s[lo])
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-14 * b.abs().max(1.0)
}

#[test]
fn sample_size_sweep_matches_sequential_reference() {
    let (seed, repeats, noise, test_size) = (31u64, 4usize, 0.1, 200usize);
    let values = [15.0, 25.0];
    let methods = [Method::Jacobian, Method::Cv];
    let selection = SelectionConfig {
        grid_size: 20,
        folds: 5,
        ..SelectionConfig::default()
    };
    let config = SweepConfig {
        axis: Axis::SampleSize,
        values: values.to_vec(),
        fixed_lambda: 1e-3,
        fixed_n: None,
        repeats,
        methods: methods.to_vec(),
        selection: selection.clone(),
        seed,
    };
    let report = run_sweep(&DataSource::Synthetic { noise_sd: noise, test_size }, &config).unwrap();

    for (a, &n) in values.iter().enumerate() {
        let mut sigmas = vec![Vec::new(); methods.len()];
        let mut r2s = vec![Vec::new(); methods.len()];
        for r in 0..repeats {
            let rep_seed = derive_seed(seed, &[a as u64, r as u64]);
            let train = generate_synthetic(n as usize, noise, derive_seed(rep_seed, &[0])).unwrap();
            let test = generate_synthetic(test_size, noise, derive_seed(rep_seed, &[1])).unwrap();
            let cfg = SelectionConfig {
                lambda: 1e-3,
                seed: derive_seed(rep_seed, &[2]),
                ..selection.clone()
            };
            for (k, &m) in methods.iter().enumerate() {
                let sigma = select(m, &train, &cfg).unwrap().sigma;
                let pred = krr::fit(&train, sigma, 1e-3).unwrap().predict(test.features()).unwrap();
                let y = test.response();
                let ybar = mean(y.as_slice());
                let ss_res: f64 = y.iter().zip(pred.iter()).map(|(a, b)| (a - b).powi(2)).sum();
                let ss_tot: f64 = y.iter().map(|a| (a - ybar).powi(2)).sum();
                sigmas[k].push(sigma);
                r2s[k].push(1.0 - ss_res / ss_tot);
            }
        }
        for (k, &m) in methods.iter().enumerate() {
            let got = report.get(a, m).unwrap();
            assert_eq!(got.successes, repeats);
            assert!(close(got.sigma.mean, mean(&sigmas[k])));
            assert!(close(got.r2.mean, mean(&r2s[k])));
            assert!(close(got.r2.p05, type7(&r2s[k], 0.05)));
            assert!(close(got.r2.p95, type7(&r2s[k], 0.95)));
            assert!(close(got.sigma.p05, type7(&sigmas[k], 0.05)));
            assert!(close(got.sigma.p95, type7(&sigmas[k], 0.95)));
        }
    }
}
