//! Comparison of posterior draws of `d` with the reference normal law
//! `N(d_o + b_n, 2/(n r_k))`, for single runs and replicated studies.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::posterior::{posterior_d, LikelihoodKind};
use super::prior::{Prior, PriorConfig};
use super::stats::{ks_normal, mean, median, variance};
use crate::error::{FexpError, Result};
use crate::likelihood::bvm_params;
use crate::rng::replicate_seed;
use crate::simulate::{GeneratorChoice, PathSampler, DEFAULT_K_TRUNC};
use crate::spectral::{PriorKind, TruthSpec};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BvmReport {
    /// KS distance of the centered `z` draws to `N(0, 1)`.
    pub ks_to_normal: f64,
    /// KS distance of the raw `z` draws (location included).
    pub ks_uncentered: f64,
    pub z_mean: f64,
    /// Posterior variance of `d` over `2/(n r_k)`.
    pub var_ratio: f64,
    pub n_draws: usize,
    pub center: f64,
    pub sd: f64,
}

/// Standardizes `d_draws` by the reference law at `(n, k)`. The location of
/// `z` carries the sampling noise of the score, so the normality distance is
/// taken after centering and `z_mean` is reported separately.
pub fn bvm_diagnostic(d_draws: &[f64], truth: &TruthSpec, n: usize, k: usize) -> Result<BvmReport> {
    if d_draws.len() < 1000 {
        return Err(FexpError::Config(format!(
            "at least 1000 draws are needed, got {}",
            d_draws.len()
        )));
    }
    let p = bvm_params(truth, n, k);
    let z: Vec<f64> = d_draws.iter().map(|d| (d - p.center) / p.sd).collect();
    let zm = mean(&z);
    let centered: Vec<f64> = z.iter().map(|v| v - zm).collect();
    Ok(BvmReport {
        ks_to_normal: ks_normal(&centered),
        ks_uncentered: ks_normal(&z),
        z_mean: zm,
        var_ratio: variance(&z),
        n_draws: z.len(),
        center: p.center,
        sd: p.sd,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BvmReplicate {
    pub replicate: usize,
    pub path_seed: u64,
    pub chain_seed: u64,
    pub acceptance_d: f64,
    pub report: BvmReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BvmStudy {
    pub n: usize,
    pub k: usize,
    pub replicates: Vec<BvmReplicate>,
    pub median_ks: f64,
    pub median_var_ratio: f64,
    /// Spread of `z_mean` across replicates; near 1 when the location
    /// fluctuates like the score.
    pub z_mean_sd: f64,
}

#[derive(Debug, Clone)]
pub struct BvmStudyConfig {
    pub n: usize,
    pub replicates: usize,
    pub iters: usize,
    pub seed: u64,
    pub likelihood: LikelihoodKind,
    pub prior: PriorConfig,
}

/// Replicated [`bvm_diagnostic`] under a prior with a single `k` (A or B).
/// Replicate `r` uses path seed `replicate_seed(seed, 2r)` and chain seed
/// `replicate_seed(seed, 2r + 1)`.
pub fn bvm_study(truth: &TruthSpec, cfg: &BvmStudyConfig) -> Result<BvmStudy> {
    if cfg.replicates == 0 {
        return Err(FexpError::Config("replicates must be positive".into()));
    }
    if cfg.prior.kind == PriorKind::C {
        return Err(FexpError::Config("the BVM study needs a fixed-k prior (A or B)".into()));
    }
    let prior = Prior::new(cfg.prior.clone(), cfg.n, Some(truth))?;
    let k = prior.k_max;
    let sampler = PathSampler::new(truth, cfg.n, DEFAULT_K_TRUNC, GeneratorChoice::Auto)?;
    let reps: Vec<Result<BvmReplicate>> = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| {
            let path_seed = replicate_seed(cfg.seed, 2 * r as u64);
            let chain_seed = replicate_seed(cfg.seed, 2 * r as u64 + 1);
            let path = sampler.sample(path_seed);
            let fit = posterior_d(&path.values, &prior, cfg.iters, chain_seed, cfg.likelihood)?;
            let chain = &fit.chains[0];
            Ok(BvmReplicate {
                replicate: r,
                path_seed,
                chain_seed,
                acceptance_d: chain.acceptance_d,
                report: bvm_diagnostic(&chain.d_draws(), truth, cfg.n, k)?,
            })
        })
        .collect();
    let replicates = reps.into_iter().collect::<Result<Vec<_>>>()?;
    let ks: Vec<f64> = replicates.iter().map(|r| r.report.ks_to_normal).collect();
    let vr: Vec<f64> = replicates.iter().map(|r| r.report.var_ratio).collect();
    let zm: Vec<f64> = replicates.iter().map(|r| r.report.z_mean).collect();
    Ok(BvmStudy {
        n: cfg.n,
        k,
        median_ks: median(&ks),
        median_var_ratio: median(&vr),
        z_mean_sd: if zm.len() > 1 { variance(&zm).sqrt() } else { f64::NAN },
        replicates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn exact_normal_draws_pass() {
        let truth = TruthSpec::finite(0.2, vec![0.1, 0.3], 2.0, 10.0);
        let (n, k) = (4096, 3);
        let p = bvm_params(&truth, n, k);
        let mut rng = rng_from_seed(5);
        let law = Normal::new(p.center, p.sd).unwrap();
        let draws: Vec<f64> = (0..10_000).map(|_| law.sample(&mut rng)).collect();
        let rep = bvm_diagnostic(&draws, &truth, n, k).unwrap();
        assert!(rep.ks_to_normal < 0.05, "{rep:?}");
        assert!((rep.var_ratio - 1.0).abs() < 0.05);
        assert!(bvm_diagnostic(&draws[..999], &truth, n, k).is_err());
    }
}
