//! Paired comparison of the two fixed-`k` priors on a truth whose
//! coefficients decay just fast enough to sit in the Sobolev class.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::posterior::{posterior_d, LikelihoodKind};
use super::prior::{Prior, PriorConfig};
use super::stats::{mean, median};
use crate::error::{FexpError, Result};
use crate::likelihood::LEVINSON_CAP;
use crate::rng::replicate_seed;
use crate::simulate::{GeneratorChoice, PathSampler, DEFAULT_K_TRUNC};
use crate::spectral::{bias_term, largest_k_b, PriorKind, TruthSpec};

#[derive(Debug, Clone)]
pub struct RateStudyConfig {
    pub ns: Vec<usize>,
    pub replicates: usize,
    pub iters: usize,
    pub seed: u64,
    pub likelihood: LikelihoodKind,
    pub t: f64,
    /// Sobolev radius; `None` uses the default derived from the truth.
    pub l: Option<f64>,
    pub k_a: f64,
}

impl RateStudyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ns.is_empty() {
            return Err(FexpError::Config("the n grid is empty".into()));
        }
        if let Some(&n) = self.ns.iter().find(|&&n| !(8..=LEVINSON_CAP).contains(&n)) {
            return Err(FexpError::Config(format!(
                "n = {n} outside [8, {LEVINSON_CAP}]"
            )));
        }
        if self.replicates == 0 {
            return Err(FexpError::Config("replicates must be positive".into()));
        }
        Ok(())
    }

    /// [`validate`](Self::validate) plus resolution of both priors at
    /// every `n`, so that a study cannot fail on configuration midway.
    pub fn validate_with(&self, truth: &TruthSpec) -> Result<()> {
        self.validate()?;
        let k_b = largest_k_b(&self.ns, truth.beta, self.k_a);
        for &n in &self.ns {
            prior_for(PriorKind::A, truth, self, k_b, n)?;
            prior_for(PriorKind::B, truth, self, k_b, n)?;
        }
        Ok(())
    }
}

/// One `(n, prior)` row of the study table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateRow {
    pub n: usize,
    pub prior: PriorKind,
    pub k_used: usize,
    /// Root mean square over replicates of the posterior-mean error.
    pub rmse: f64,
    pub mean_abs_error: f64,
    /// Median over replicates of the per-replicate posterior RMSE.
    pub median_posterior_rmse: f64,
    pub analytic_bias: f64,
    pub delta_n: f64,
    pub w_n: f64,
    pub eps_n: f64,
}

/// Both priors fitted on the same path.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairedOutcome {
    pub n: usize,
    pub replicate: usize,
    pub path_seed: u64,
    pub error_a: f64,
    pub error_b: f64,
    /// `sqrt(E[(d − d_o)² | X])` under each prior.
    pub posterior_rmse_a: f64,
    pub posterior_rmse_b: f64,
}

impl PairedOutcome {
    pub fn a_no_worse(&self) -> bool {
        self.posterior_rmse_a <= self.posterior_rmse_b
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateStudy {
    /// Common `k_B` across the grid.
    pub k_b: f64,
    pub rows: Vec<RateRow>,
    pub pairs: Vec<PairedOutcome>,
    /// `bias_term(k'_n) > bias_term(k_n)` at every `n`.
    pub bias_dominance: bool,
}

impl RateStudy {
    /// Fraction of pairs at `n` where prior A's posterior RMSE is no larger.
    pub fn a_win_fraction(&self, n: usize) -> f64 {
        let at: Vec<&PairedOutcome> = self.pairs.iter().filter(|p| p.n == n).collect();
        at.iter().filter(|p| p.a_no_worse()).count() as f64 / at.len().max(1) as f64
    }
}

fn prior_for(kind: PriorKind, truth: &TruthSpec, cfg: &RateStudyConfig, k_b: f64, n: usize) -> Result<Prior> {
    let mut pc = PriorConfig::new(kind, truth.beta);
    pc.t = cfg.t;
    pc.l = cfg.l;
    pc.k_a = cfg.k_a;
    pc.k_b = Some(k_b);
    Prior::new(pc, n, Some(truth))
}

fn posterior_rmse(draws: &[f64], d_o: f64) -> f64 {
    (draws.iter().map(|d| (d - d_o).powi(2)).sum::<f64>() / draws.len() as f64).sqrt()
}

/// Fits priors A (`k_n`) and B (`k'_n`) on shared replicate paths for each
/// `n` in the grid. Path seeds are `replicate_seed(replicate_seed(seed, n), r)`.
pub fn suboptimality_experiment(truth: &TruthSpec, cfg: &RateStudyConfig) -> Result<RateStudy> {
    cfg.validate_with(truth)?;
    let k_b = largest_k_b(&cfg.ns, truth.beta, cfg.k_a);
    let mut rows = Vec::new();
    let mut pairs = Vec::new();
    let mut bias_dominance = true;
    for &n in &cfg.ns {
        let pa = prior_for(PriorKind::A, truth, cfg, k_b, n)?;
        let pb = prior_for(PriorKind::B, truth, cfg, k_b, n)?;
        let (ka, kb) = (pa.k_max, pb.k_max);
        let (bias_a, bias_b) = (bias_term(truth, ka), bias_term(truth, kb));
        bias_dominance &= bias_b > bias_a;
        let sampler = PathSampler::new(truth, n, DEFAULT_K_TRUNC, GeneratorChoice::Auto)?;
        let base = replicate_seed(cfg.seed, n as u64);
        let outcomes: Vec<Result<PairedOutcome>> = (0..cfg.replicates)
            .into_par_iter()
            .map(|r| {
                let path_seed = replicate_seed(base, r as u64);
                let path = sampler.sample(path_seed);
                let fa = posterior_d(&path.values, &pa, cfg.iters, replicate_seed(path_seed, 1), cfg.likelihood)?;
                let fb = posterior_d(&path.values, &pb, cfg.iters, replicate_seed(path_seed, 2), cfg.likelihood)?;
                Ok(PairedOutcome {
                    n,
                    replicate: r,
                    path_seed,
                    error_a: fa.summary.d_mean - truth.d_o,
                    error_b: fb.summary.d_mean - truth.d_o,
                    posterior_rmse_a: posterior_rmse(&fa.chains[0].d_draws(), truth.d_o),
                    posterior_rmse_b: posterior_rmse(&fb.chains[0].d_draws(), truth.d_o),
                })
            })
            .collect();
        let outcomes = outcomes.into_iter().collect::<Result<Vec<_>>>()?;
        for (kind, k_used, bias, prior) in [(PriorKind::A, ka, bias_a, &pa), (PriorKind::B, kb, bias_b, &pb)] {
            let (errs, prmse): (Vec<f64>, Vec<f64>) = outcomes
                .iter()
                .map(|o| match kind {
                    PriorKind::B => (o.error_b, o.posterior_rmse_b),
                    _ => (o.error_a, o.posterior_rmse_a),
                })
                .unzip();
            rows.push(RateRow {
                n,
                prior: kind,
                k_used,
                rmse: mean(&errs.iter().map(|e| e * e).collect::<Vec<_>>()).sqrt(),
                mean_abs_error: mean(&errs.iter().map(|e| e.abs()).collect::<Vec<_>>()),
                median_posterior_rmse: median(&prmse),
                analytic_bias: bias,
                delta_n: prior.rates.delta_n,
                w_n: prior.rates.w_n,
                eps_n: prior.rates.eps_n,
            });
        }
        pairs.extend(outcomes);
    }
    Ok(RateStudy {
        k_b,
        rows,
        pairs,
        bias_dominance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_grid_is_rejected() {
        let truth = TruthSpec::power_law(0.2, 3.0, 375.0);
        let cfg = RateStudyConfig {
            ns: vec![],
            replicates: 1,
            iters: 1000,
            seed: 1,
            likelihood: LikelihoodKind::Exact,
            t: 0.05,
            l: None,
            k_a: 1.0,
        };
        assert!(matches!(suboptimality_experiment(&truth, &cfg), Err(FexpError::Config(_))));
    }
}
