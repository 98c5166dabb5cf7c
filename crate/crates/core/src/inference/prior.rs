//! Priors on `(d, k, θ)`: uniform `d` on `[−½+t, ½−t]`, a sieve or random
//! `k`, and θ restricted to a Sobolev ball.

use std::collections::HashMap;
use std::sync::Mutex;

use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{FexpError, Result};
use crate::rng::{replicate_seed, rng_from_seed};
use crate::spectral::{default_sobolev_radius, rate_constants, PriorKind, RateConstants, TruthSpec};

/// Samples used for Monte Carlo normalizing constants.
pub const NORMALIZER_SAMPLES: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum ThetaFamily {
    /// Uniform on the Sobolev ball.
    UniformSobolev,
    /// `∝ exp(−A Σ_j j^α θ_j²)` on the ball.
    TruncatedGaussian { a_coef: f64, alpha: f64 },
    /// `∝ exp(−a Σ_j |θ_j|)` on the ball.
    TruncatedLaplace { a: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "kebab-case")]
pub enum KLaw {
    Poisson { lambda: f64 },
    Geometric { p: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorConfig {
    pub kind: PriorKind,
    #[serde(default = "default_margin")]
    pub t: f64,
    pub beta: f64,
    /// Sobolev radius; derived from the truth when omitted.
    #[serde(default)]
    pub l: Option<f64>,
    #[serde(default = "default_family")]
    pub theta_family: ThetaFamily,
    #[serde(default)]
    pub k_law: Option<KLaw>,
    #[serde(default = "default_k_a")]
    pub k_a: f64,
    #[serde(default)]
    pub k_b: Option<f64>,
    /// Recorded for completeness; the sampler does not use it.
    #[serde(default)]
    pub h_k: Option<Vec<f64>>,
}

fn default_margin() -> f64 {
    0.05
}

fn default_family() -> ThetaFamily {
    ThetaFamily::UniformSobolev
}

fn default_k_a() -> f64 {
    1.0
}

impl PriorConfig {
    pub fn new(kind: PriorKind, beta: f64) -> Self {
        Self {
            kind,
            t: default_margin(),
            beta,
            l: None,
            theta_family: default_family(),
            k_law: None,
            k_a: default_k_a(),
            k_b: None,
            h_k: None,
        }
    }

    /// Smoothness index of the θ-support: `β − ½` under prior A, `β` otherwise.
    pub fn support_smoothness(&self) -> f64 {
        match self.kind {
            PriorKind::A => self.beta - 0.5,
            _ => self.beta,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t > 0.0 && self.t < 0.5) {
            return Err(FexpError::Config(format!("t must lie in (0, 1/2), got {}", self.t)));
        }
        if !(self.beta > 1.0) {
            return Err(FexpError::Config(format!("beta must exceed 1, got {}", self.beta)));
        }
        if let Some(l) = self.l {
            if !(l > 0.0 && l.is_finite()) {
                return Err(FexpError::Config(format!("L must be positive, got {l}")));
            }
        }
        if !(self.k_a > 0.0) {
            return Err(FexpError::Config(format!("k_A must be positive, got {}", self.k_a)));
        }
        match &self.theta_family {
            ThetaFamily::UniformSobolev => {}
            ThetaFamily::TruncatedGaussian { a_coef, alpha } => {
                let cap = match self.kind {
                    PriorKind::A => 4.0 * self.beta - 2.0,
                    _ => 2.0 * self.beta,
                };
                if !(*alpha > 0.0 && *alpha < cap) {
                    return Err(FexpError::Config(format!(
                        "truncated-gaussian alpha must lie in (0, {cap}) for prior {}, got {alpha}",
                        self.kind
                    )));
                }
                if !(*a_coef > 0.0) {
                    return Err(FexpError::Config("truncated-gaussian A must be positive".into()));
                }
            }
            ThetaFamily::TruncatedLaplace { a } => {
                if !(*a > 0.0) {
                    return Err(FexpError::Config("truncated-laplace a must be positive".into()));
                }
            }
        }
        match (self.kind, &self.k_law) {
            (PriorKind::C, None) => {
                return Err(FexpError::Config("prior C needs a k_law".into()));
            }
            (_, Some(KLaw::Poisson { lambda })) if !(*lambda >= 0.0) => {
                return Err(FexpError::Config(format!("Poisson lambda must be >= 0, got {lambda}")));
            }
            (_, Some(KLaw::Geometric { p })) if !(*p > 0.0 && *p <= 1.0) => {
                return Err(FexpError::Config(format!("geometric p must lie in (0, 1], got {p}")));
            }
            _ => {}
        }
        Ok(())
    }
}

/// A prior resolved for a particular sample size.
#[derive(Debug)]
pub struct Prior {
    pub config: PriorConfig,
    pub rates: RateConstants,
    /// Sobolev radius in use.
    pub l: f64,
    pub k_max: usize,
    log_pk: Vec<f64>,
    normalizers: Mutex<HashMap<usize, f64>>,
}

impl Clone for Prior {
    fn clone(&self) -> Self {
        Self {
            config: self.config.clone(),
            rates: self.rates.clone(),
            l: self.l,
            k_max: self.k_max,
            log_pk: self.log_pk.clone(),
            normalizers: Mutex::new(self.normalizers.lock().map(|m| m.clone()).unwrap_or_default()),
        }
    }
}

impl Prior {
    /// Resolves sieve sizes and the Sobolev radius for sample size `n`.
    /// Without an explicit `L`, the radius is four times the constructive
    /// bound computed from `truth`, which must then be supplied.
    pub fn new(config: PriorConfig, n: usize, truth: Option<&TruthSpec>) -> Result<Self> {
        config.validate()?;
        let l_o = truth.map(|t| t.l_o).unwrap_or(0.0);
        let rates = rate_constants(n, config.beta, config.kind, config.k_a, config.k_b, config.t, 1.0, l_o)?;
        let l = match (config.l, truth) {
            (Some(l), _) => l,
            (None, Some(truth)) => default_sobolev_radius(truth, &rates, config.kind),
            (None, None) => {
                return Err(FexpError::Config(
                    "Sobolev radius L is required when no truth is configured".into(),
                ))
            }
        };
        let rates = rates.with_radius(l);
        let k_max = match config.kind {
            PriorKind::A => rates.k_n,
            PriorKind::B => rates.k_n_prime,
            PriorKind::C => 2 * rates.k_n,
        };
        let log_pk = k_log_masses(&config, k_max);
        Ok(Self {
            config,
            rates,
            l,
            k_max,
            log_pk,
            normalizers: Mutex::new(HashMap::new()),
        })
    }

    pub fn kind(&self) -> PriorKind {
        self.config.kind
    }

    /// Values of `k` with positive prior mass.
    pub fn support_k(&self) -> Vec<usize> {
        (0..=self.k_max).filter(|&k| self.log_pk[k].is_finite()).collect()
    }

    pub fn log_pk(&self, k: usize) -> f64 {
        self.log_pk.get(k).copied().unwrap_or(f64::NEG_INFINITY)
    }

    pub fn d_bounds(&self) -> (f64, f64) {
        (-0.5 + self.config.t, 0.5 - self.config.t)
    }

    pub fn log_pd(&self, d: f64) -> f64 {
        let (lo, hi) = self.d_bounds();
        if d >= lo && d <= hi {
            -(1.0 - 2.0 * self.config.t).ln()
        } else {
            f64::NEG_INFINITY
        }
    }

    /// Sobolev weights `(1+j)^{2γ}` of the θ-support.
    pub fn weights(&self, k: usize) -> Vec<f64> {
        let g = self.config.support_smoothness();
        (0..=k).map(|j| ((1 + j) as f64).powf(2.0 * g)).collect()
    }

    pub fn in_ball(&self, theta: &[f64]) -> bool {
        let g = self.config.support_smoothness();
        let s: f64 = theta
            .iter()
            .enumerate()
            .map(|(j, t)| t * t * ((1 + j) as f64).powf(2.0 * g))
            .sum();
        s <= self.l
    }

    /// Half-widths `√L / (1+j)^γ` of the box enclosing the ball.
    pub fn theta_bounds(&self, k: usize) -> Vec<f64> {
        self.weights(k).iter().map(|w| (self.l / w).sqrt()).collect()
    }

    fn log_shape(&self, theta: &[f64]) -> f64 {
        match &self.config.theta_family {
            ThetaFamily::UniformSobolev => 0.0,
            ThetaFamily::TruncatedGaussian { a_coef, alpha } => {
                -a_coef
                    * theta
                        .iter()
                        .enumerate()
                        .skip(1)
                        .map(|(j, t)| (j as f64).powf(*alpha) * t * t)
                        .sum::<f64>()
            }
            ThetaFamily::TruncatedLaplace { a } => -a * theta.iter().map(|t| t.abs()).sum::<f64>(),
        }
    }

    /// `log π_d(d) + log π̃_{θ|k}(θ)` up to the θ normalizing constant:
    /// enough for Metropolis–Hastings within a fixed `k`.
    pub fn log_density_within_k(&self, d: f64, theta: &[f64]) -> f64 {
        let lpd = self.log_pd(d);
        if !lpd.is_finite() || !self.in_ball(theta) {
            return f64::NEG_INFINITY;
        }
        lpd + self.log_shape(theta)
    }

    /// `log ∫_ball exp(shape)`, by Monte Carlo over points drawn uniformly
    /// in the ellipsoid (exact for the uniform family). Cached per `k`.
    pub fn log_normalizer(&self, k: usize) -> f64 {
        if let Some(v) = self.normalizers.lock().ok().and_then(|m| m.get(&k).copied()) {
            return v;
        }
        let m = k + 1;
        let w = self.weights(k);
        let mf = m as f64;
        let log_volume = 0.5 * mf * std::f64::consts::PI.ln() - ln_gamma(0.5 * mf + 1.0)
            + w.iter().map(|wj| 0.5 * (self.l / wj).ln()).sum::<f64>();
        let value = match self.config.theta_family {
            ThetaFamily::UniformSobolev => log_volume,
            _ => {
                let mut rng = rng_from_seed(replicate_seed(0x00C0_FFEE, k as u64));
                let unit = Uniform::new(0.0f64, 1.0).expect("valid range");
                let mut shapes = Vec::with_capacity(NORMALIZER_SAMPLES);
                let mut z = vec![0.0; m];
                for _ in 0..NORMALIZER_SAMPLES {
                    for v in z.iter_mut() {
                        *v = StandardNormal.sample(&mut rng);
                    }
                    let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
                    let r = unit.sample(&mut rng).powf(1.0 / mf);
                    let theta: Vec<f64> = z
                        .iter()
                        .zip(&w)
                        .map(|(zj, wj)| zj / norm * r * (self.l / wj).sqrt())
                        .collect();
                    shapes.push(self.log_shape(&theta));
                }
                let top = shapes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mean = shapes.iter().map(|s| (s - top).exp()).sum::<f64>() / NORMALIZER_SAMPLES as f64;
                log_volume + top + mean.ln()
            }
        };
        if let Ok(mut map) = self.normalizers.lock() {
            map.insert(k, value);
        }
        value
    }

    /// Normalized `log π_d(d) + log π_k(k) + log π_{θ|k}(θ)`.
    pub fn log_density(&self, d: f64, k: usize, theta: &[f64]) -> f64 {
        if theta.len() != k + 1 {
            return f64::NEG_INFINITY;
        }
        let lpk = self.log_pk(k);
        if !lpk.is_finite() {
            return f64::NEG_INFINITY;
        }
        let inner = self.log_density_within_k(d, theta);
        if !inner.is_finite() {
            return f64::NEG_INFINITY;
        }
        lpk + inner - self.log_normalizer(k)
    }
}

fn k_log_masses(config: &PriorConfig, k_max: usize) -> Vec<f64> {
    let mut out = vec![f64::NEG_INFINITY; k_max + 1];
    match config.kind {
        PriorKind::A | PriorKind::B => {
            out[k_max] = 0.0;
        }
        PriorKind::C => {
            let raw: Vec<f64> = (0..=k_max)
                .map(|k| match config.k_law {
                    Some(KLaw::Poisson { lambda }) => {
                        if lambda == 0.0 {
                            if k == 0 {
                                0.0
                            } else {
                                f64::NEG_INFINITY
                            }
                        } else {
                            k as f64 * lambda.ln() - lambda - ln_gamma(k as f64 + 1.0)
                        }
                    }
                    Some(KLaw::Geometric { p }) => {
                        if p == 1.0 {
                            if k == 0 {
                                0.0
                            } else {
                                f64::NEG_INFINITY
                            }
                        } else {
                            p.ln() + k as f64 * (1.0 - p).ln()
                        }
                    }
                    None => f64::NEG_INFINITY,
                })
                .collect();
            let top = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = top + raw.iter().map(|r| (r - top).exp()).sum::<f64>().ln();
            for (o, r) in out.iter_mut().zip(&raw) {
                *o = r - lse;
            }
        }
    }
    out
}

/// `log π(d, k, θ)` for a resolved prior; `−∞` outside the supports.
pub fn prior_logdensity(prior: &Prior, d: f64, k: usize, theta: &[f64]) -> f64 {
    prior.log_density(d, k, theta)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prior(kind: PriorKind) -> Prior {
        let mut cfg = PriorConfig::new(kind, 3.0);
        cfg.l = Some(50.0);
        if kind == PriorKind::C {
            cfg.k_law = Some(KLaw::Poisson { lambda: 1.0 });
        }
        Prior::new(cfg, 4096, None).unwrap()
    }

    #[test]
    fn d_support_and_point_mass() {
        let p = prior(PriorKind::A);
        let k = p.rates.k_n;
        let theta = vec![0.0; k + 1];
        assert!(p.log_density(0.46, k, &theta).is_infinite());
        assert!(p.log_density(0.2, k + 1, &vec![0.0; k + 2]).is_infinite());
        assert!(p.log_density(0.2, k, &theta).is_finite());
    }

    #[test]
    fn uniform_is_flat_inside_ball() {
        let p = prior(PriorKind::A);
        let k = p.rates.k_n;
        let a = p.log_density(0.1, k, &vec![0.1; k + 1]);
        let b = p.log_density(-0.2, k, &vec![-0.05; k + 1]);
        assert_eq!(a, b);
    }

    #[test]
    fn k_law_is_normalized() {
        let p = prior(PriorKind::C);
        let total: f64 = (0..=p.k_max).map(|k| p.log_pk(k).exp()).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn monte_carlo_normalizer_matches_volume_for_flat_shape() {
        let mut cfg = PriorConfig::new(PriorKind::B, 3.0);
        cfg.l = Some(50.0);
        cfg.theta_family = ThetaFamily::TruncatedLaplace { a: 1e-12 };
        let lap = Prior::new(cfg.clone(), 4096, None).unwrap();
        cfg.theta_family = ThetaFamily::UniformSobolev;
        let uni = Prior::new(cfg, 4096, None).unwrap();
        assert!((lap.log_normalizer(2) - uni.log_normalizer(2)).abs() < 1e-6);
    }

    #[test]
    fn gaussian_alpha_constraint() {
        let mut cfg = PriorConfig::new(PriorKind::A, 3.0);
        cfg.theta_family = ThetaFamily::TruncatedGaussian { a_coef: 1.0, alpha: 10.0 };
        assert!(cfg.validate().is_err());
        cfg.theta_family = ThetaFamily::TruncatedGaussian { a_coef: 1.0, alpha: 9.0 };
        assert!(cfg.validate().is_ok());
    }
}
