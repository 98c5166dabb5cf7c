//! End-to-end acceptance checks. Each test prints a single `[PASS]` or
//! `[FAIL]` line on stderr (written directly, so it shows even when the
//! harness captures output) and then asserts on the same verdict.

use std::f64::consts::PI;
use std::io::Write;

use fexp_core::inference::stats::{mean, ols_slope, variance};
use fexp_core::inference::{
    bvm_study, suboptimality_experiment, BvmStudyConfig, LikelihoodKind, PriorConfig, RateStudyConfig,
};
use fexp_core::likelihood::ScoreOperator;
use fexp_core::quadrature::QuadratureConfig;
use fexp_core::rng::{replicate_seed, rng_from_seed};
use fexp_core::simulate::{periodogram, GeneratorChoice, PathSampler, DEFAULT_K_TRUNC};
use fexp_core::spectral::{
    bias_term, largest_k_b, log_distance_coeff, log_distance_quadrature, r_tail, sieve_k_a, sieve_k_b, FexpModel,
    PriorKind, TruthSpec,
};
use fexp_core::toeplitz::{
    autocov_from_density, dense_toeplitz, fexp_autocov, quadform_tail_probe, trace_product, AutocovSequence,
    QuadFormMatrix, SpectralDensity, ToeplitzOperator,
};
use nalgebra::DVector;
use rand::Rng;

fn verdict(id: u32, name: &str, pass: bool, detail: String) {
    let line = format!("[{}] {id:02} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    let _ = writeln!(std::io::stderr().lock(), "{line}");
    assert!(pass, "{line}");
}

#[test]
fn levinson_matches_dense_cholesky() {
    let mut rng = rng_from_seed(101);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let n = rng.random_range(2..=512usize);
        let d = rng.random_range(-0.45..0.45);
        let k = rng.random_range(0..=4usize);
        let theta: Vec<f64> = (0..=k).map(|_| rng.random_range(-0.5..0.5)).collect();
        let gamma = fexp_autocov(&FexpModel::new(d, theta).unwrap(), n);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let op = ToeplitzOperator::build(gamma.clone(), n).unwrap();
        let (logdet, _, quad) = op.logdet_solve(&x).unwrap();

        let chol = dense_toeplitz(&gamma.values, n).cholesky().expect("positive definite");
        let dense_logdet = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let xv = DVector::from_column_slice(&x);
        let dense_quad = xv.dot(&chol.solve(&xv));
        let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1.0);
        worst = worst.max(rel(logdet, dense_logdet)).max(rel(quad, dense_quad));
    }
    verdict(1, "levinson vs dense cholesky", worst <= 1e-8, format!("max relative error {worst:.2e} (tol 1e-8)"));
}

#[test]
fn fractional_autocorrelation_matches_gamma_ratio() {
    let mut worst: f64 = 0.0;
    for d in [-0.3, 0.1, 0.3] {
        let m = FexpModel::new(d, vec![0.0]).unwrap();
        let g = autocov_from_density(&m, 50, &QuadratureConfig::default()).unwrap();
        let mut rho = 1.0;
        for h in 1..=50 {
            rho *= (h as f64 - 1.0 + d) / (h as f64 - d);
            worst = worst.max((g.values[h] / g.values[0] - rho).abs());
        }
    }
    verdict(2, "autocovariance oracle", worst <= 1e-8, format!("max |error| {worst:.2e} (tol 1e-8)"));
}

#[test]
fn szego_gap_shrinks() {
    let smooth = |theta: Vec<f64>| FexpModel::new(0.0, theta).unwrap();
    let pairs = [
        (smooth(vec![-(2.0 * PI).ln(), 0.5]), smooth(vec![0.0, -0.3, 0.2])),
        (smooth(vec![0.2, 0.0, 0.4]), smooth(vec![-1.0, 0.6, -0.1, 0.05])),
    ];
    let cfg = QuadratureConfig::default();
    let mut ok = true;
    let mut details = Vec::new();
    for (f, g) in &pairs {
        let ops: [&dyn SpectralDensity; 2] = [f, g];
        let gap = |n| {
            let t = trace_product(&ops, n, &cfg).unwrap();
            (t.exact - t.szego_limit).abs()
        };
        let (g64, g512) = (gap(64), gap(512));
        ok &= g512 <= 0.25 * g64;
        details.push(format!("{g64:.3e} -> {g512:.3e}"));
    }
    verdict(3, "szego limit", ok, format!("gaps n=64 -> n=512: {}", details.join("; ")));
}

#[test]
fn metric_forms_agree() {
    let mut rng = rng_from_seed(404);
    let mut worst: f64 = 0.0;
    let random_model = |rng: &mut fexp_core::rng::Rng| {
        let k = rng.random_range(0..=64usize);
        let theta = (0..=k).map(|j| rng.random_range(-1.0..1.0) / (1.0 + j as f64)).collect();
        FexpModel::new(rng.random_range(-0.45..0.45), theta).unwrap()
    };
    for _ in 0..100 {
        let (a, b) = (random_model(&mut rng), random_model(&mut rng));
        let coeff = log_distance_coeff(&a, &b);
        let quad = log_distance_quadrature(&a, &b, 1 << 14).unwrap();
        worst = worst.max((coeff - quad).abs());
    }
    verdict(4, "metric equivalence", worst <= 1e-6, format!("max |coeff - quadrature| {worst:.2e} (tol 1e-6)"));
}

#[test]
fn score_and_information_scale() {
    let truth = TruthSpec::finite(0.2, vec![0.1, 0.3, -0.2, 0.1, 0.05, -0.03], 3.0, 40.0);
    let (n, k, reps) = (1024, 4, 200);
    let op = ScoreOperator::new(&truth, n, k).unwrap();
    let sampler = PathSampler::new(&truth, n, DEFAULT_K_TRUNC, GeneratorChoice::Auto).unwrap();
    let mut s = Vec::with_capacity(reps);
    let mut info = Vec::with_capacity(reps);
    for r in 0..reps {
        let x = sampler.sample(replicate_seed(505, r as u64)).values;
        let si = op.score_info(&x).unwrap();
        s.push(si.score.s);
        info.push(si.info_fd);
    }
    let nominal = n as f64 * r_tail(k) / 2.0;
    let (ms, vs, mi) = (mean(&s), variance(&s), mean(&info));
    let se = (vs / reps as f64).sqrt();
    let mean_ok = ms.abs() <= 3.0 * se;
    let var_ratio = vs / nominal;
    let info_ratio = mi / -nominal;
    let var_ok = (var_ratio - 1.0).abs() <= 0.25;
    let info_ok = (info_ratio - 1.0).abs() <= 0.30;
    verdict(
        5,
        "score and information",
        mean_ok && var_ok && info_ok,
        format!(
            "mean S {ms:.3} (3 s.e. {:.3}); Var S / (n r_k/2) = {var_ratio:.3} (tol 0.25); \
             info / (-n r_k/2) = {info_ratio:.3} (tol 0.30); against n r_k/4 the ratios are {:.3} and {:.3}; \
             exact tr[(T^-1 T')^2]/2 / (n r_k/2) = {:.3}",
            3.0 * se,
            2.0 * var_ratio,
            2.0 * info_ratio,
            op.trace_sq / 2.0 / nominal
        ),
    );
}

#[test]
fn bernstein_von_mises_at_desk_scale() {
    let truth = TruthSpec::finite(0.2, vec![0.1, 0.3, -0.2], 3.0, 40.0);
    let cfg = BvmStudyConfig {
        n: 4096,
        replicates: 20,
        // 25% warm-up leaves 5000 retained draws
        iters: 6667,
        seed: 606,
        likelihood: LikelihoodKind::Exact,
        prior: PriorConfig::new(PriorKind::A, 3.0),
    };
    let study = bvm_study(&truth, &cfg).unwrap();
    let ks_ok = study.median_ks <= 0.15;
    let var_ok = (0.75..=1.5).contains(&study.median_var_ratio);
    verdict(
        6,
        "bernstein-von mises",
        ks_ok && var_ok,
        format!(
            "k={}, median KS {:.3} (<= 0.15); median var / (2/(n r_k)) = {:.3} (in [0.75, 1.5]); \
             against 4/(n r_k) it is {:.3}; sd of z means {:.3}",
            study.k,
            study.median_ks,
            study.median_var_ratio,
            study.median_var_ratio / 2.0,
            study.z_mean_sd
        ),
    );
}

#[test]
fn bias_dominance_and_decay() {
    let truth = TruthSpec::power_law(0.2, 3.0, 375.0);
    let ns: Vec<usize> = (9..=13).map(|p| 1usize << p).collect();
    let k_b = largest_k_b(&ns, 3.0, 1.0);
    let mut dominance = true;
    let mut cells = Vec::new();
    for &n in &ns {
        let (ka, kb) = (sieve_k_a(n, 3.0, 1.0), sieve_k_b(n, 3.0, k_b));
        let (ba, bb) = (bias_term(&truth, ka), bias_term(&truth, kb));
        dominance &= bb > ba;
        cells.push(format!("n={n} k={ka}/{kb} bias {ba:.2e}/{bb:.2e}"));
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = (4..=64)
        .map(|k| ((k as f64).ln(), bias_term(&truth, k).abs().ln()))
        .unzip();
    let slope = ols_slope(&xs, &ys);
    let slope_ok = (slope + 2.5).abs() <= 0.3;
    verdict(
        7,
        "rate dichotomy (deterministic)",
        dominance && slope_ok,
        format!("{}; slope {slope:.3} (-2.5 +/- 0.3)", cells.join(", ")),
    );
}

#[test]
fn sieve_a_beats_sieve_b_on_paired_paths() {
    let truth = TruthSpec::power_law(0.2, 3.0, 375.0);
    let cfg = RateStudyConfig {
        ns: vec![8192],
        replicates: 30,
        iters: 1200,
        seed: 808,
        likelihood: LikelihoodKind::Exact,
        t: 0.05,
        l: None,
        k_a: 1.0,
    };
    let study = suboptimality_experiment(&truth, &cfg).unwrap();
    let frac = study.a_win_fraction(8192);
    let rows: Vec<String> = study
        .rows
        .iter()
        .map(|r| format!("{:?}: k={} rmse {:.4}", r.prior, r.k_used, r.rmse))
        .collect();
    verdict(
        8,
        "rate dichotomy (paired replicates)",
        frac >= 0.7,
        format!("prior A no worse in {:.0}% of 30 pairs (>= 70%); {}", 100.0 * frac, rows.join(", ")),
    );
}

#[test]
fn simulation_fidelity() {
    let mut ok = true;
    let mut cells = Vec::new();
    for d in [-0.3, 0.0, 0.3] {
        let truth = TruthSpec::finite(d, vec![0.0], 3.0, 10.0);
        let n = 2048;
        let sampler = PathSampler::new(&truth, n, DEFAULT_K_TRUNC, GeneratorChoice::Auto).unwrap();
        let oracle: AutocovSequence = fexp_autocov(&FexpModel::new(d, vec![0.0]).unwrap(), 1);
        let rho1 = oracle.values[1] / oracle.values[0];
        let acf: Vec<f64> = (0..200)
            .map(|r| {
                let x = sampler.sample(replicate_seed(909, r)).values;
                let num: f64 = x.windows(2).map(|w| w[0] * w[1]).sum();
                num / x.iter().map(|v| v * v).sum::<f64>()
            })
            .collect();
        let acf_err = mean(&acf) - rho1;

        let m = (n as f64).sqrt() as usize;
        let slopes: Vec<f64> = (0..100)
            .map(|r| {
                let pg = periodogram(&sampler.sample(replicate_seed(919, r)).values).unwrap();
                let (lx, ly): (Vec<f64>, Vec<f64>) = pg[..m].iter().map(|(l, i)| (l.ln(), i.ln())).unzip();
                ols_slope(&lx, &ly)
            })
            .collect();
        let slope = mean(&slopes);
        ok &= acf_err.abs() <= 0.02 && (slope + 2.0 * d).abs() <= 0.2;
        cells.push(format!("d={d}: acf err {acf_err:+.4}, slope {slope:.3} vs {:.1}", -2.0 * d));
    }
    verdict(9, "simulation fidelity", ok, cells.join("; "));
}

#[test]
fn quadratic_form_tail() {
    let probes = [
        ("I/sqrt(n), n=256", quadform_tail_probe(&QuadFormMatrix::ScaledIdentity { n: 256 }, 0.5, None, 10_000, 1)),
        ("rank one, n=64", quadform_tail_probe(&QuadFormMatrix::RankOne { n: 64 }, 0.5, None, 10_000, 2)),
        (
            "n=1, threshold 1e6",
            quadform_tail_probe(&QuadFormMatrix::Dense(nalgebra::DMatrix::from_element(1, 1, 1.0)), 0.5, Some(1e6), 10_000, 3),
        ),
    ];
    let mut ok = true;
    let mut cells = Vec::new();
    for (name, p) in probes {
        let p = p.unwrap();
        ok &= p.within_bound();
        cells.push(format!("{name}: {:.4} <= {:.4} + {:.4}", p.exceedance, p.bound, p.slack));
    }
    verdict(10, "quadratic-form tail", ok, cells.join("; "));
}
