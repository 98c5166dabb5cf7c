//! Posterior of `(d, θ)` within a fixed `k`, Laplace evidence, and the
//! pooled posterior of `d` across `k`.

use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use super::mcmc::{run_adaptive_mh, LogTarget, MhConfig};
use super::prior::Prior;
use super::stats::{weighted_ks_normal, weighted_quantile};
use crate::error::{FexpError, Result};
use crate::likelihood::{exact_loglik, WhittleData};
use crate::rng::replicate_seed;
use crate::simulate::gph_estimate;
use crate::spectral::{r_tail, FexpModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LikelihoodKind {
    #[default]
    Exact,
    Whittle,
    /// `l_n ≡ 0`: the chain targets the prior. For testing.
    Flat,
}

/// Normalized log posterior (up to `log π_k` and the evidence) of the state
/// `[d, θ_0, …, θ_k]`.
pub struct WithinKTarget<'a> {
    pub prior: &'a Prior,
    pub k: usize,
    pub x: &'a [f64],
    pub kind: LikelihoodKind,
    whittle: Option<WhittleData>,
    log_norm: f64,
}

impl<'a> WithinKTarget<'a> {
    pub fn new(prior: &'a Prior, k: usize, x: &'a [f64], kind: LikelihoodKind) -> Result<Self> {
        let whittle = match kind {
            LikelihoodKind::Whittle => Some(WhittleData::new(x)?),
            _ => None,
        };
        Ok(Self {
            prior,
            k,
            x,
            kind,
            whittle,
            log_norm: prior.log_normalizer(k),
        })
    }

    pub fn loglik(&self, model: &FexpModel) -> Result<f64> {
        match self.kind {
            LikelihoodKind::Exact => exact_loglik(self.x, model),
            LikelihoodKind::Whittle => Ok(self.whittle.as_ref().map(|w| w.loglik(model)).unwrap_or(0.0)),
            LikelihoodKind::Flat => Ok(0.0),
        }
    }
}

impl LogTarget for WithinKTarget<'_> {
    fn dim(&self) -> usize {
        self.k + 2
    }

    fn log_density(&self, s: &[f64]) -> Result<f64> {
        let lp = self.prior.log_density_within_k(s[0], &s[1..]);
        if !lp.is_finite() {
            return Ok(f64::NEG_INFINITY);
        }
        let model = FexpModel {
            d: s[0],
            theta: s[1..].to_vec(),
        };
        Ok(lp - self.log_norm + self.loglik(&model)?)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PosteriorChain {
    pub k: usize,
    /// States `[d, θ_0, …, θ_k]` after warm-up.
    pub draws: Vec<Vec<f64>>,
    pub log_post: Vec<f64>,
    pub acceptance_d: f64,
    pub acceptance_theta: f64,
    pub warmup: usize,
    pub seed: u64,
    #[serde(skip)]
    pub best: Vec<f64>,
}

impl PosteriorChain {
    pub fn d_draws(&self) -> Vec<f64> {
        self.draws.iter().map(|s| s[0]).collect()
    }

    pub fn write_csv(&self, path: &Path, header_comment: &str) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        if !header_comment.is_empty() {
            writeln!(f, "# {header_comment}")?;
        }
        write!(f, "iteration,d")?;
        for j in 0..=self.k {
            write!(f, ",theta_{j}")?;
        }
        writeln!(f, ",log_post")?;
        for (i, (s, lp)) in self.draws.iter().zip(&self.log_post).enumerate() {
            write!(f, "{}", self.warmup + i)?;
            for v in s {
                write!(f, ",{v:e}")?;
            }
            writeln!(f, ",{lp:e}")?;
        }
        f.flush()?;
        Ok(())
    }
}

/// Starting state: GPH estimate of `d` (clamped inside the support), the
/// level `θ_0` matching the sample variance, higher coefficients zero.
fn initial_state(prior: &Prior, k: usize, x: &[f64], kind: LikelihoodKind) -> Vec<f64> {
    let (lo, hi) = prior.d_bounds();
    let n = x.len();
    let mut d = 0.0;
    if kind != LikelihoodKind::Flat && n >= 16 {
        let bw = ((n as f64).sqrt() as usize).clamp(2, n / 4);
        if let Ok(est) = gph_estimate(x, bw) {
            if est.d.is_finite() {
                d = est.d;
            }
        }
    }
    let pad = 0.1 * (hi - lo);
    d = d.clamp(lo + pad, hi - pad);
    let mut theta = vec![0.0; k + 1];
    if kind != LikelihoodKind::Flat && n > 0 {
        let var = x.iter().map(|v| v * v).sum::<f64>() / n as f64;
        let g0 = 2.0 * std::f64::consts::PI * (ln_gamma(1.0 - 2.0 * d) - 2.0 * ln_gamma(1.0 - d)).exp();
        if var > 0.0 {
            let bound = 0.9 * prior.theta_bounds(k)[0];
            theta[0] = (var / g0).ln().clamp(-bound, bound);
        }
    }
    let mut s = vec![d];
    s.extend(theta);
    s
}

/// Random-walk MH on `(d, θ)` at fixed `k`, with `d` and `θ` as two blocks.
pub fn mh_within_k(
    x: &[f64],
    prior: &Prior,
    k: usize,
    iters: usize,
    seed: u64,
    kind: LikelihoodKind,
) -> Result<PosteriorChain> {
    if iters < 1000 {
        return Err(FexpError::Config(format!("iters must be >= 1000, got {iters}")));
    }
    let target = WithinKTarget::new(prior, k, x, kind)?;
    let init = initial_state(prior, k, x, kind);
    let n = x.len().max(1) as f64;
    let mut scales = vec![(4.0 / (n * r_tail(k))).sqrt()];
    scales.extend((0..=k).map(|_| (2.0 / n).sqrt()));
    if kind == LikelihoodKind::Flat {
        let (lo, hi) = prior.d_bounds();
        scales[0] = 0.3 * (hi - lo);
        for (s, b) in scales[1..].iter_mut().zip(prior.theta_bounds(k)) {
            *s = 0.3 * b;
        }
    }
    let blocks = vec![vec![0], (1..k + 2).collect()];
    let cfg = MhConfig::new(iters, blocks, scales, seed);
    let out = run_adaptive_mh(&target, &init, &cfg)?;
    Ok(PosteriorChain {
        k,
        draws: out.draws,
        log_post: out.log_post,
        acceptance_d: out.acceptance[0],
        acceptance_theta: out.acceptance[1],
        warmup: out.warmup,
        seed,
        best: out.best.0,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Evidence {
    pub log_evidence: f64,
    pub mode: Vec<f64>,
    pub log_density_at_mode: f64,
    /// Set when the Hessian at the mode was not negative definite and the
    /// chain covariance was used instead.
    pub warning: Option<String>,
}

fn fd_hessian(target: &dyn LogTarget, x: &[f64], h: &[f64], f0: f64) -> Result<Option<DMatrix<f64>>> {
    let m = x.len();
    let mut hess = DMatrix::zeros(m, m);
    let mut p = x.to_vec();
    let eval = |p: &[f64]| target.log_density(p);
    for i in 0..m {
        p[i] = x[i] + h[i];
        let fp = eval(&p)?;
        p[i] = x[i] - h[i];
        let fm = eval(&p)?;
        p[i] = x[i];
        if !fp.is_finite() || !fm.is_finite() {
            return Ok(None);
        }
        hess[(i, i)] = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
        for j in 0..i {
            let mut val = 0.0;
            for (si, sj, sign) in [(1.0, 1.0, 1.0), (1.0, -1.0, -1.0), (-1.0, 1.0, -1.0), (-1.0, -1.0, 1.0)] {
                p[i] = x[i] + si * h[i];
                p[j] = x[j] + sj * h[j];
                let f = eval(&p)?;
                if !f.is_finite() {
                    return Ok(None);
                }
                val += sign * f;
            }
            p[i] = x[i];
            p[j] = x[j];
            let v = val / (4.0 * h[i] * h[j]);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    Ok(Some(hess))
}

fn fd_gradient(target: &dyn LogTarget, x: &[f64], h: &[f64]) -> Result<Option<Vec<f64>>> {
    let mut p = x.to_vec();
    let mut g = vec![0.0; x.len()];
    for i in 0..x.len() {
        p[i] = x[i] + h[i];
        let fp = target.log_density(&p)?;
        p[i] = x[i] - h[i];
        let fm = target.log_density(&p)?;
        p[i] = x[i];
        if !fp.is_finite() || !fm.is_finite() {
            return Ok(None);
        }
        g[i] = (fp - fm) / (2.0 * h[i]);
    }
    Ok(Some(g))
}

fn covariance(draws: &[Vec<f64>]) -> Option<DMatrix<f64>> {
    let n = draws.len();
    let m = draws.first()?.len();
    if n < m + 2 {
        return None;
    }
    let mean: Vec<f64> = (0..m).map(|i| draws.iter().map(|s| s[i]).sum::<f64>() / n as f64).collect();
    let mut cov = DMatrix::zeros(m, m);
    for s in draws {
        for a in 0..m {
            for b in 0..m {
                cov[(a, b)] += (s[a] - mean[a]) * (s[b] - mean[b]);
            }
        }
    }
    Some(cov / (n as f64 - 1.0))
}

/// Laplace approximation `log p̂(mode) + (m/2) log 2π − ½ log det(−H)` to the
/// log normalizing constant of `target`, after a few Newton refinements of
/// `start`. Finite-difference steps come from the spread of `draws` when
/// given. When `−H` is not positive definite the chain covariance `Σ`
/// replaces `(−H)^{-1}` and a warning is recorded.
pub fn evidence_laplace(target: &dyn LogTarget, start: &[f64], draws: Option<&[Vec<f64>]>) -> Result<Evidence> {
    let m = start.len();
    let chain_cov = draws.and_then(covariance);
    let h: Vec<f64> = (0..m)
        .map(|i| {
            chain_cov
                .as_ref()
                .map(|c| 0.05 * c[(i, i)].sqrt())
                .filter(|v| *v > 0.0 && v.is_finite())
                .unwrap_or(1e-4)
        })
        .collect();
    let mut x = start.to_vec();
    let mut f = target.log_density(&x)?;
    if !f.is_finite() {
        return Err(FexpError::Config("Laplace start point has zero density".into()));
    }
    for _ in 0..20 {
        let (Some(g), Some(hess)) = (fd_gradient(target, &x, &h)?, fd_hessian(target, &x, &h, f)?) else {
            break;
        };
        let neg = -hess;
        let Some(chol) = neg.cholesky() else { break };
        let step = chol.solve(&nalgebra::DVector::from_column_slice(&g));
        let mut t = 1.0;
        let mut improved = false;
        for _ in 0..20 {
            let cand: Vec<f64> = x.iter().zip(step.iter()).map(|(a, s)| a + t * s).collect();
            let fc = target.log_density(&cand)?;
            if fc.is_finite() && fc >= f {
                let gain = fc - f;
                x = cand;
                f = fc;
                improved = gain > 1e-10;
                break;
            }
            t *= 0.5;
        }
        if !improved {
            break;
        }
    }
    let half_log_2pi = 0.5 * m as f64 * (2.0 * std::f64::consts::PI).ln();
    if let Some(hess) = fd_hessian(target, &x, &h, f)? {
        if let Some(chol) = (-hess).cholesky() {
            let logdet: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
            return Ok(Evidence {
                log_evidence: f + half_log_2pi - 0.5 * logdet,
                mode: x,
                log_density_at_mode: f,
                warning: None,
            });
        }
    }
    let Some(cov) = chain_cov else {
        return Err(FexpError::Config(
            "Hessian at the mode is not negative definite and no chain is available".into(),
        ));
    };
    let Some(chol) = cov.cholesky() else {
        return Err(FexpError::Config("chain covariance is singular".into()));
    };
    let logdet: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    Ok(Evidence {
        log_evidence: f + half_log_2pi + 0.5 * logdet,
        mode: x,
        log_density_at_mode: f,
        warning: Some("non-PD Hessian at mode; used chain covariance".into()),
    })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CredibleInterval {
    pub level: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct KWeight {
    pub k: usize,
    pub weight: f64,
    pub log_evidence: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub d_mean: f64,
    pub d_sd: f64,
    pub credible: Vec<CredibleInterval>,
    pub k_weights: Vec<KWeight>,
    /// KS distance of the standardized pooled `d` draws to `N(0, 1)`.
    pub ks_to_normal: f64,
    pub n_draws: usize,
}

pub const CREDIBLE_LEVELS: [f64; 2] = [0.90, 0.95];

/// Summary of `d` draws pooled with per-draw weights.
pub fn summarize(values: &[f64], weights: &[f64], k_weights: Vec<KWeight>) -> PosteriorSummary {
    let total: f64 = weights.iter().sum();
    let mean = values.iter().zip(weights).map(|(v, w)| v * w).sum::<f64>() / total;
    let var = values.iter().zip(weights).map(|(v, w)| w * (v - mean).powi(2)).sum::<f64>() / total;
    let sd = var.sqrt();
    let credible = CREDIBLE_LEVELS
        .iter()
        .map(|&level| CredibleInterval {
            level,
            lower: weighted_quantile(values, weights, 0.5 * (1.0 - level)),
            upper: weighted_quantile(values, weights, 0.5 * (1.0 + level)),
        })
        .collect();
    let z: Vec<f64> = values.iter().map(|v| if sd > 0.0 { (v - mean) / sd } else { 0.0 }).collect();
    PosteriorSummary {
        d_mean: mean,
        d_sd: sd,
        credible,
        k_weights,
        ks_to_normal: weighted_ks_normal(&z, weights),
        n_draws: values.len(),
    }
}

#[derive(Debug, Clone)]
pub struct PosteriorFit {
    pub summary: PosteriorSummary,
    pub chains: Vec<PosteriorChain>,
    pub evidences: Vec<Option<Evidence>>,
}

/// Posterior of `d`: one chain at the sieve `k` for priors A/B, and for
/// prior C one chain per `k` with positive mass, mixed by Laplace evidence.
pub fn posterior_d(x: &[f64], prior: &Prior, iters: usize, seed: u64, kind: LikelihoodKind) -> Result<PosteriorFit> {
    let ks = prior.support_k();
    if ks.len() == 1 {
        let chain = mh_within_k(x, prior, ks[0], iters, seed, kind)?;
        let d = chain.d_draws();
        let w = vec![1.0; d.len()];
        let summary = summarize(
            &d,
            &w,
            vec![KWeight {
                k: ks[0],
                weight: 1.0,
                log_evidence: None,
            }],
        );
        return Ok(PosteriorFit {
            summary,
            chains: vec![chain],
            evidences: vec![None],
        });
    }
    let runs: Vec<Result<(PosteriorChain, Evidence)>> = ks
        .par_iter()
        .map(|&k| {
            let chain = mh_within_k(x, prior, k, iters, replicate_seed(seed, k as u64), kind)?;
            let target = WithinKTarget::new(prior, k, x, kind)?;
            let ev = evidence_laplace(&target, &chain.best, Some(&chain.draws))?;
            Ok((chain, ev))
        })
        .collect();
    let mut chains = Vec::new();
    let mut evs = Vec::new();
    for r in runs {
        let (c, e) = r?;
        chains.push(c);
        evs.push(e);
    }
    let logw: Vec<f64> = chains
        .iter()
        .zip(&evs)
        .map(|(c, e)| e.log_evidence + prior.log_pk(c.k))
        .collect();
    let top = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let raw: Vec<f64> = logw.iter().map(|l| (l - top).exp()).collect();
    let z: f64 = raw.iter().sum();
    let weights: Vec<f64> = raw.iter().map(|r| r / z).collect();
    let mut values = Vec::new();
    let mut w = Vec::new();
    for (c, wk) in chains.iter().zip(&weights) {
        let per = wk / c.draws.len() as f64;
        for s in &c.draws {
            values.push(s[0]);
            w.push(per);
        }
    }
    let k_weights = chains
        .iter()
        .zip(&weights)
        .zip(&evs)
        .map(|((c, &weight), e)| KWeight {
            k: c.k,
            weight,
            log_evidence: Some(e.log_evidence),
        })
        .collect();
    Ok(PosteriorFit {
        summary: summarize(&values, &w, k_weights),
        chains,
        evidences: evs.into_iter().map(Some).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Normal1 {
        mu: f64,
        sigma: f64,
        log_scale: f64,
    }

    impl LogTarget for Normal1 {
        fn dim(&self) -> usize {
            1
        }
        fn log_density(&self, x: &[f64]) -> Result<f64> {
            Ok(self.log_scale - 0.5 * ((x[0] - self.mu) / self.sigma).powi(2))
        }
    }

    #[test]
    fn laplace_is_exact_for_gaussian() {
        let t = Normal1 {
            mu: 0.7,
            sigma: 0.3,
            log_scale: 2.0,
        };
        let ev = evidence_laplace(&t, &[0.1], None).unwrap();
        let exact = 2.0 + (0.3 * (2.0 * std::f64::consts::PI).sqrt()).ln();
        assert!((ev.log_evidence - exact).abs() < 1e-6, "{} vs {exact}", ev.log_evidence);
        assert!((ev.mode[0] - 0.7).abs() < 1e-6);
    }
}
