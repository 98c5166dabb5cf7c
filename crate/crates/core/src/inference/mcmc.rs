//! Blockwise random-walk Metropolis–Hastings with proposal adaptation during
//! a discarded warm-up, frozen afterwards.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{FexpError, Result};
use crate::rng::rng_from_seed;

/// Unnormalized log density on `R^dim`; `−∞` marks points outside the support.
pub trait LogTarget: Sync {
    fn dim(&self) -> usize;
    fn log_density(&self, x: &[f64]) -> Result<f64>;
}

#[derive(Debug, Clone)]
pub struct MhConfig {
    pub iters: usize,
    pub warmup_fraction: f64,
    /// Coordinate indices updated jointly, one block per entry.
    pub blocks: Vec<Vec<usize>>,
    /// Initial proposal standard deviation per coordinate.
    pub initial_scales: Vec<f64>,
    pub target_acceptance: (f64, f64),
    pub seed: u64,
}

impl MhConfig {
    pub fn new(iters: usize, blocks: Vec<Vec<usize>>, initial_scales: Vec<f64>, seed: u64) -> Self {
        Self {
            iters,
            warmup_fraction: 0.25,
            blocks,
            initial_scales,
            target_acceptance: (0.25, 0.40),
            seed,
        }
    }

    pub fn warmup(&self) -> usize {
        (self.iters as f64 * self.warmup_fraction).round() as usize
    }
}

#[derive(Debug, Clone)]
pub struct ChainOutput {
    /// Post-warm-up states.
    pub draws: Vec<Vec<f64>>,
    pub log_post: Vec<f64>,
    /// Post-warm-up acceptance rate per block.
    pub acceptance: Vec<f64>,
    pub warmup: usize,
    /// Highest-density state visited, warm-up included.
    pub best: (Vec<f64>, f64),
}

struct Block {
    idx: Vec<usize>,
    chol: DMatrix<f64>,
    log_scale: f64,
    window_accepts: usize,
    window_total: usize,
    accepts: usize,
    total: usize,
}

const ADAPT_WINDOW: usize = 50;

/// Runs the sampler from `init`, which must have finite log density.
pub fn run_adaptive_mh(target: &dyn LogTarget, init: &[f64], cfg: &MhConfig) -> Result<ChainOutput> {
    let dim = target.dim();
    if init.len() != dim || cfg.initial_scales.len() != dim {
        return Err(FexpError::DimensionMismatch {
            expected: dim,
            got: init.len().min(cfg.initial_scales.len()),
        });
    }
    let mut x = init.to_vec();
    let mut lp = target.log_density(&x)?;
    if !lp.is_finite() {
        return Err(FexpError::Config("initial state has zero target density".into()));
    }
    let mut rng = rng_from_seed(cfg.seed);
    let mut blocks: Vec<Block> = cfg
        .blocks
        .iter()
        .map(|idx| Block {
            idx: idx.clone(),
            chol: DMatrix::from_diagonal(&DVector::from_iterator(
                idx.len(),
                idx.iter().map(|&i| cfg.initial_scales[i]),
            )),
            log_scale: 0.0,
            window_accepts: 0,
            window_total: 0,
            accepts: 0,
            total: 0,
        })
        .collect();
    let warmup = cfg.warmup();
    let (lo, hi) = cfg.target_acceptance;
    let mut warm_states: Vec<Vec<f64>> = Vec::new();
    let mut out = ChainOutput {
        draws: Vec::with_capacity(cfg.iters - warmup.min(cfg.iters)),
        log_post: Vec::with_capacity(cfg.iters - warmup.min(cfg.iters)),
        acceptance: vec![0.0; blocks.len()],
        warmup,
        best: (x.clone(), lp),
    };
    let mut proposal = x.clone();
    for it in 0..cfg.iters {
        if it == warmup {
            for b in blocks.iter_mut() {
                b.accepts = 0;
                b.total = 0;
            }
        }
        for b in blocks.iter_mut() {
            let z = DVector::from_fn(b.idx.len(), |_, _| StandardNormal.sample(&mut rng));
            let step = &b.chol * z * b.log_scale.exp();
            proposal.copy_from_slice(&x);
            for (s, &i) in step.iter().zip(&b.idx) {
                proposal[i] += s;
            }
            let lp_new = target.log_density(&proposal)?;
            let u: f64 = rng.random();
            let accept = lp_new.is_finite() && u.ln() < lp_new - lp;
            if accept {
                x.copy_from_slice(&proposal);
                lp = lp_new;
                if lp > out.best.1 {
                    out.best = (x.clone(), lp);
                }
            }
            b.total += 1;
            b.accepts += accept as usize;
            if it < warmup {
                b.window_total += 1;
                b.window_accepts += accept as usize;
                if b.window_total == ADAPT_WINDOW {
                    let rate = b.window_accepts as f64 / ADAPT_WINDOW as f64;
                    if rate < lo {
                        b.log_scale -= 0.3 * (1.0 + (lo - rate) / lo);
                    } else if rate > hi {
                        b.log_scale += 0.3 * (1.0 + (rate - hi) / (1.0 - hi));
                    }
                    b.window_total = 0;
                    b.window_accepts = 0;
                }
            }
        }
        if it < warmup {
            if it >= warmup / 4 {
                warm_states.push(x.clone());
            }
            // Re-estimate joint proposal shapes at the half and three-quarter marks.
            if (it + 1 == warmup / 2 || it + 1 == 3 * warmup / 4) && warm_states.len() > 20 {
                for b in blocks.iter_mut().filter(|b| b.idx.len() > 1) {
                    if let Some(chol) = empirical_chol(&warm_states, &b.idx) {
                        b.chol = chol * (2.38 / (b.idx.len() as f64).sqrt());
                        b.log_scale = 0.0;
                    }
                }
            }
        } else {
            out.draws.push(x.clone());
            out.log_post.push(lp);
        }
    }
    for (a, b) in out.acceptance.iter_mut().zip(&blocks) {
        *a = if b.total > 0 { b.accepts as f64 / b.total as f64 } else { 0.0 };
    }
    Ok(out)
}

fn empirical_chol(states: &[Vec<f64>], idx: &[usize]) -> Option<DMatrix<f64>> {
    let m = idx.len();
    let n = states.len() as f64;
    let mean: Vec<f64> = idx.iter().map(|&i| states.iter().map(|s| s[i]).sum::<f64>() / n).collect();
    let mut cov = DMatrix::zeros(m, m);
    for s in states {
        for a in 0..m {
            let da = s[idx[a]] - mean[a];
            for b in 0..=a {
                cov[(a, b)] += da * (s[idx[b]] - mean[b]);
            }
        }
    }
    for a in 0..m {
        for b in 0..a {
            cov[(b, a)] = cov[(a, b)];
        }
    }
    cov /= n - 1.0;
    let jitter = (0..m).map(|i| cov[(i, i)]).fold(0.0, f64::max) * 1e-8 + 1e-300;
    for i in 0..m {
        if !(cov[(i, i)] > 0.0) {
            return None;
        }
        cov[(i, i)] += jitter;
    }
    cov.cholesky().map(|c| c.l())
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Gaussian2 {
        mean: [f64; 2],
        prec: [[f64; 2]; 2],
    }

    impl LogTarget for Gaussian2 {
        fn dim(&self) -> usize {
            2
        }
        fn log_density(&self, x: &[f64]) -> Result<f64> {
            let a = x[0] - self.mean[0];
            let b = x[1] - self.mean[1];
            Ok(-0.5 * (self.prec[0][0] * a * a + 2.0 * self.prec[0][1] * a * b + self.prec[1][1] * b * b))
        }
    }

    #[test]
    fn recovers_correlated_gaussian_moments() {
        // covariance [[1, 0.8], [0.8, 1]] -> precision below
        let det = 1.0 - 0.64;
        let t = Gaussian2 {
            mean: [1.0, -2.0],
            prec: [[1.0 / det, -0.8 / det], [-0.8 / det, 1.0 / det]],
        };
        let cfg = MhConfig::new(40_000, vec![vec![0, 1]], vec![0.5, 0.5], 11);
        let out = run_adaptive_mh(&t, &[0.0, 0.0], &cfg).unwrap();
        let n = out.draws.len() as f64;
        let m0 = out.draws.iter().map(|s| s[0]).sum::<f64>() / n;
        let m1 = out.draws.iter().map(|s| s[1]).sum::<f64>() / n;
        let v0 = out.draws.iter().map(|s| (s[0] - m0).powi(2)).sum::<f64>() / n;
        assert!((m0 - 1.0).abs() < 0.1, "{m0}");
        assert!((m1 + 2.0).abs() < 0.1, "{m1}");
        assert!((v0 - 1.0).abs() < 0.15, "{v0}");
        assert!(out.acceptance[0] > 0.15 && out.acceptance[0] < 0.5);
    }
}
