use std::f64::consts::PI;

use fexp_core::inference::stats::{ks_two_sample, mean, variance};
use fexp_core::inference::{run_adaptive_mh, LogTarget, MhConfig};
use fexp_core::likelihood::{profile_loglik, ScoreOperator};
use fexp_core::rng::{replicate_seed, rng_from_seed};
use fexp_core::simulate::{gph_estimate, periodogram, GeneratorChoice, PathSampler, DEFAULT_K_TRUNC};
use fexp_core::spectral::{r_tail, TruthSpec};
use rand::Rng;

fn pooled(truth: &TruthSpec, n: usize, reps: usize, seed: u64) -> Vec<f64> {
    let s = PathSampler::new(truth, n, DEFAULT_K_TRUNC, GeneratorChoice::Auto).unwrap();
    (0..reps).flat_map(|r| s.sample(replicate_seed(seed, r as u64)).values).collect()
}

#[test]
fn white_noise_variances() {
    let unit = TruthSpec::finite(0.0, vec![-(2.0 * PI).ln()], 3.0, 10.0);
    let v = pooled(&unit, 1024, 98, 1);
    let var = v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64;
    assert!((0.99..=1.01).contains(&var), "{var}");

    let flat = TruthSpec::finite(0.0, vec![0.0], 3.0, 10.0);
    let v = pooled(&flat, 1024, 98, 2);
    let var = v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64;
    assert!((var / (2.0 * PI) - 1.0).abs() < 0.01, "{var}");
}

#[test]
fn circulant_and_cholesky_agree_in_law() {
    let truth = TruthSpec::finite(0.3, vec![0.1, 0.2], 3.0, 10.0);
    let n = 64;
    let a = PathSampler::new(&truth, n, DEFAULT_K_TRUNC, GeneratorChoice::Circulant).unwrap();
    let b = PathSampler::new(&truth, n, DEFAULT_K_TRUNC, GeneratorChoice::Cholesky).unwrap();
    let xa: Vec<f64> = (0..10_000).map(|s| a.sample(replicate_seed(10, s)).values[0]).collect();
    let xb: Vec<f64> = (0..10_000).map(|s| b.sample(replicate_seed(11, s)).values[0]).collect();
    // 1% critical value of the two-sample statistic with m = n = 10⁴.
    let crit = 1.628 * (2.0f64 / 10_000.0).sqrt();
    assert!(ks_two_sample(&xa, &xb) < crit);
}

#[test]
fn periodogram_of_white_noise_and_constants() {
    let unit = TruthSpec::finite(0.0, vec![-(2.0 * PI).ln()], 3.0, 10.0);
    let s = PathSampler::new(&unit, 512, DEFAULT_K_TRUNC, GeneratorChoice::Auto).unwrap();
    let mut ords = Vec::new();
    for r in 0..100 {
        ords.extend(periodogram(&s.sample(r).values).unwrap().into_iter().map(|p| p.1));
    }
    let m = mean(&ords);
    assert!((m * 2.0 * PI - 1.0).abs() < 0.05, "{m}");
    let constant = periodogram(&[3.5; 64]).unwrap();
    assert!(constant.iter().all(|p| p.1 < 1e-20));
}

#[test]
fn gph_calibration() {
    for (d, need) in [(0.0, 0.9), (0.3, 0.8)] {
        let truth = TruthSpec::finite(d, vec![0.0], 3.0, 10.0);
        let s = PathSampler::new(&truth, 4096, DEFAULT_K_TRUNC, GeneratorChoice::Auto).unwrap();
        let hits = (0..100)
            .filter(|&r| {
                let e = gph_estimate(&s.sample(replicate_seed(77, r)).values, 64).unwrap();
                (e.d - d).abs() <= 0.15
            })
            .count();
        assert!(hits as f64 >= need * 100.0, "d={d}: {hits}");
    }
}

#[test]
fn score_matches_finite_difference_on_random_instances() {
    let mut rng = rng_from_seed(2024);
    for i in 0..20 {
        let d = rng.random_range(-0.3..0.3);
        let theta: Vec<f64> = (0..6).map(|j| rng.random_range(-0.3..0.3) / (1.0 + j as f64).powi(2)).collect();
        let truth = TruthSpec::finite(d, theta, 3.0, 100.0);
        let n = rng.random_range(64..=512usize);
        let k = rng.random_range(0..=4usize);
        let op = ScoreOperator::new(&truth, n, k).unwrap();
        let x = fexp_core::simulate::sample_path(&truth, n, DEFAULT_K_TRUNC, i).unwrap().values;
        let dec = op.decompose(&x).unwrap();
        assert_eq!(dec.total, dec.s + dec.d);
        let h = 1e-4;
        let fd = (profile_loglik(&x, &truth, d + h, k).unwrap() - profile_loglik(&x, &truth, d - h, k).unwrap()) / (2.0 * h);
        assert!((dec.total - fd).abs() <= 1e-3 * fd.abs().max(1.0), "instance {i}: {} vs {fd}", dec.total);
    }
}

#[test]
fn observed_information_is_negative_with_whittle_scale() {
    // The observed information per observation converges to (1/4π)∫H_k² = r_k/4.
    let truth = TruthSpec::finite(0.2, vec![0.1, 0.2, -0.1, 0.05, 0.02, -0.01, 0.01, 0.005, 0.002], 3.0, 100.0);
    let n = 1024;
    let s = PathSampler::new(&truth, n, DEFAULT_K_TRUNC, GeneratorChoice::Auto).unwrap();
    for k in [2usize, 4, 8] {
        let h = 1e-4;
        let infos: Vec<f64> = (0..100)
            .map(|r| {
                let x = s.sample(replicate_seed(5, r)).values;
                let l = |d: f64| profile_loglik(&x, &truth, d, k).unwrap();
                (l(0.2 + h) - 2.0 * l(0.2) + l(0.2 - h)) / (h * h)
            })
            .collect();
        let m = mean(&infos);
        assert!(m < 0.0);
        let ratio = m / (-(n as f64) * r_tail(k) / 4.0);
        eprintln!("k={k}: mean info {m:.2}, ratio to -n r_k/4 = {ratio:.3}, to -n r_k/2 = {:.3}", ratio / 2.0);
        assert!((ratio - 1.0).abs() < 0.3, "k={k}: {ratio}");
    }
}

struct CorrelatedGaussian;

impl LogTarget for CorrelatedGaussian {
    fn dim(&self) -> usize {
        2
    }
    // Correlated Gaussian: mean (1, −2), unit variances, correlation 0.8.
    fn log_density(&self, x: &[f64]) -> fexp_core::Result<f64> {
        let (a, b) = (x[0] - 1.0, x[1] + 2.0);
        Ok(-0.5 * (a * a - 1.6 * a * b + b * b) / 0.36)
    }
}

#[test]
fn sampler_moments_within_three_standard_errors() {
    let cfg = MhConfig::new(120_000, vec![vec![0, 1]], vec![1.0, 1.0], 99);
    let out = run_adaptive_mh(&CorrelatedGaussian, &[0.0, 0.0], &cfg).unwrap();
    let batches = 60;
    for (i, truth) in [(0usize, 1.0), (1, -2.0)] {
        let xs: Vec<f64> = out.draws.iter().map(|s| s[i]).collect();
        let size = xs.len() / batches;
        let means: Vec<f64> = xs.chunks(size).take(batches).map(mean).collect();
        let se = (variance(&means) / batches as f64).sqrt();
        assert!((mean(&xs) - truth).abs() < 3.0 * se, "coord {i}: {} ± {se}", mean(&xs));
        let sq: Vec<f64> = xs.iter().map(|x| (x - truth) * (x - truth)).collect();
        let sq_means: Vec<f64> = sq.chunks(size).take(batches).map(mean).collect();
        let se2 = (variance(&sq_means) / batches as f64).sqrt();
        assert!((mean(&sq) - 1.0).abs() < 3.0 * se2, "coord {i} variance: {} ± {se2}", mean(&sq));
    }
}
