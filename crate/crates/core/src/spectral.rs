//! FEXP spectral densities, the coefficient sequences attached to them, the
//! log-spectral distance, and the rate constants of the sieve priors.
//!
//! Conventions: `log(2 − 2cos x) = Σ_{j≥1} η_j cos(jx)` with `η_j = −2/j`, so
//! the log of `f_{d,k,θ}` has cosine coefficients `θ_j − d η_j`. All
//! quantities below (projection, bias, distance) follow from that expansion.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{FexpError, Result};
use crate::quadrature::{integrate_half_line, QuadratureConfig, PANEL_ORDER};

/// Fourier coefficient of `log(2 − 2cos x)` against `cos(jx)`.
pub fn eta(j: usize) -> f64 {
    if j == 0 {
        0.0
    } else {
        -2.0 / j as f64
    }
}

/// Asymptotic expansion of the trigamma function, accurate to machine
/// precision for `x ≥ 64`.
fn trigamma_asymptotic(x: f64) -> f64 {
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // Bernoulli numbers B_2..B_12
    let series = inv2
        * (1.0 / 6.0
            + inv2
                * (-1.0 / 30.0
                    + inv2 * (1.0 / 42.0 + inv2 * (-1.0 / 30.0 + inv2 * (5.0 / 66.0 - inv2 * 691.0 / 2730.0)))));
    inv + 0.5 * inv2 + inv * series
}

const TRIGAMMA_SWITCH: usize = 64;

/// `r_k = Σ_{j>k} η_j² = 4 ψ'(k+1)`.
pub fn r_tail(k: usize) -> f64 {
    if k >= TRIGAMMA_SWITCH {
        return 4.0 * trigamma_asymptotic(k as f64 + 1.0);
    }
    let mut acc = 4.0 * trigamma_asymptotic(TRIGAMMA_SWITCH as f64 + 1.0);
    for j in (k + 1..=TRIGAMMA_SWITCH).rev() {
        let jf = j as f64;
        acc += 4.0 / (jf * jf);
    }
    acc
}

/// `4 sin²(x/2) = 2 − 2cos x`, without cancellation near the origin.
#[inline]
pub fn two_minus_two_cos(x: f64) -> f64 {
    let s = (0.5 * x).sin();
    4.0 * s * s
}

/// `Σ_j c_j cos(jx)` by the Chebyshev recurrence.
#[inline]
pub fn cosine_series(coef: &[f64], x: f64) -> f64 {
    match coef.len() {
        0 => 0.0,
        1 => coef[0],
        _ => {
            let c1 = x.cos();
            let two_c1 = 2.0 * c1;
            let mut prev = 1.0;
            let mut cur = c1;
            let mut acc = coef[0] + coef[1] * c1;
            for &c in &coef[2..] {
                let next = two_c1 * cur - prev;
                prev = cur;
                cur = next;
                acc += c * cur;
            }
            acc
        }
    }
}

/// A point `(d, k, θ)` of the FEXP family; `k = θ.len() − 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FexpModel {
    pub d: f64,
    pub theta: Vec<f64>,
}

impl FexpModel {
    pub fn new(d: f64, theta: Vec<f64>) -> Result<Self> {
        if !(d.abs() < 0.5) {
            return Err(FexpError::InvalidModel(format!("|d| must be < 1/2, got {d}")));
        }
        if theta.is_empty() {
            return Err(FexpError::InvalidModel("theta needs at least one entry".into()));
        }
        if let Some(bad) = theta.iter().find(|t| !t.is_finite()) {
            return Err(FexpError::InvalidModel(format!("non-finite theta entry {bad}")));
        }
        Ok(Self { d, theta })
    }

    /// White noise with unit variance: `f ≡ 1/(2π)`.
    pub fn white_noise() -> Self {
        Self {
            d: 0.0,
            theta: vec![-(2.0 * PI).ln()],
        }
    }

    pub fn k(&self) -> usize {
        self.theta.len() - 1
    }

    /// Density value; `+∞` at the origin when `d > 0`.
    pub fn density(&self, x: f64) -> f64 {
        let base = two_minus_two_cos(x);
        let short = cosine_series(&self.theta, x).exp();
        if self.d == 0.0 {
            short
        } else {
            base.powf(-self.d) * short
        }
    }

    pub fn log_density(&self, x: f64) -> f64 {
        -self.d * two_minus_two_cos(x).ln() + cosine_series(&self.theta, x)
    }

    /// Cosine coefficients of `log f` up to order `k`.
    pub fn log_coefficients(&self) -> Vec<f64> {
        self.theta
            .iter()
            .enumerate()
            .map(|(j, t)| t - self.d * eta(j))
            .collect()
    }

    /// Same model with trailing zeros appended up to order `k`.
    pub fn padded(&self, k: usize) -> Self {
        let mut theta = self.theta.clone();
        if theta.len() < k + 1 {
            theta.resize(k + 1, 0.0);
        }
        Self { d: self.d, theta }
    }
}

/// Evaluates `f_{d,k,θ}(x)` on `[−π, π]`.
pub fn fexp_eval(model: &FexpModel, x: f64) -> Result<f64> {
    if !(x.abs() <= PI * (1.0 + 1e-12)) {
        return Err(FexpError::Domain(format!("x = {x} outside [-π, π]")));
    }
    if x == 0.0 && model.d > 0.0 {
        return Err(FexpError::Domain(format!(
            "density is singular at x = 0 for d = {}",
            model.d
        )));
    }
    Ok(model.density(x))
}

/// `H_k(x) = −log(2 − 2cos x) − Σ_{j=1}^k (2/j) cos(jx)`, the tail of the
/// cosine expansion of `−log(2 − 2cos x)`.
pub fn h_tail_eval(k: usize, x: f64) -> Result<f64> {
    if x == 0.0 {
        return Err(FexpError::Domain("H_k has a logarithmic singularity at 0".into()));
    }
    if !(x.abs() <= PI * (1.0 + 1e-12)) {
        return Err(FexpError::Domain(format!("x = {x} outside [-π, π]")));
    }
    Ok(h_tail(k, x))
}

pub(crate) fn h_tail(k: usize, x: f64) -> f64 {
    let head = if k == 0 {
        0.0
    } else {
        let c1 = x.cos();
        let two_c1 = 2.0 * c1;
        let mut prev = 1.0;
        let mut cur = c1;
        let mut acc = 0.0;
        for j in 1..=k {
            acc += 2.0 / j as f64 * cur;
            let next = two_c1 * cur - prev;
            prev = cur;
            cur = next;
        }
        acc
    };
    -two_minus_two_cos(x).ln() - head
}

/// `Σ_j θ_j² (1+j)^{2β}`.
pub fn sobolev_seminorm(theta: &[f64], beta: f64) -> f64 {
    theta
        .iter()
        .enumerate()
        .map(|(j, t)| t * t * ((1 + j) as f64).powf(2.0 * beta))
        .sum()
}

/// `l(f, f') = (θ_0 − θ'_0)² + ½ Σ_{j≥1} ((θ_j − θ'_j) − η_j (d − d'))²`, the
/// infinite `d`-tail summed through [`r_tail`]. The constant term carries full
/// weight because `cos(0·x) ≡ 1` has mean square one rather than one half.
pub fn log_distance_coeff(m1: &FexpModel, m2: &FexpModel) -> f64 {
    let kmax = m1.k().max(m2.k());
    let dd = m1.d - m2.d;
    let mut acc = 0.0;
    for j in 0..=kmax {
        let a = m1.theta.get(j).copied().unwrap_or(0.0);
        let b = m2.theta.get(j).copied().unwrap_or(0.0);
        let c = (a - b) - eta(j) * dd;
        acc += if j == 0 { 2.0 * c * c } else { c * c };
    }
    0.5 * (acc + dd * dd * r_tail(kmax))
}

/// `l(f, f') = (1/2π) ∫ (log f − log f')²` by panel quadrature.
/// `grid_size` is the number of quadrature nodes on the uniform part.
pub fn log_distance_quadrature(m1: &FexpModel, m2: &FexpModel, grid_size: usize) -> Result<f64> {
    if grid_size < 1 << 10 {
        return Err(FexpError::Config(format!("grid_size must be >= 1024, got {grid_size}")));
    }
    let kmax = m1.k().max(m2.k());
    let dd = m1.d - m2.d;
    let diff: Vec<f64> = (0..=kmax)
        .map(|j| m1.theta.get(j).copied().unwrap_or(0.0) - m2.theta.get(j).copied().unwrap_or(0.0))
        .collect();
    if dd == 0.0 && diff.iter().all(|v| *v == 0.0) {
        return Ok(0.0);
    }
    let cfg = QuadratureConfig {
        panels: grid_size / PANEL_ORDER,
        tol: 1e-12,
        ..QuadratureConfig::default()
    };
    let integral = integrate_half_line(
        |x| {
            let v = -dd * two_minus_two_cos(x).ln() + cosine_series(&diff, x);
            v * v
        },
        &cfg,
    )?;
    Ok(integral / PI)
}

/// How the true short-memory coefficients `θ_{o,j}` are generated.
#[derive(Clone)]
pub enum ThetaRule {
    /// Finitely many coefficients, zero beyond.
    Finite(Vec<f64>),
    /// `θ_{o,j} = c₀ j^{−(β+½)} / log j` for `j ≥ 2`, zero for `j < 2`.
    PowerLaw { c0: f64 },
    Custom(CustomRule),
}

/// User-supplied coefficient rule together with an upper bound on its
/// Sobolev tail `Σ_{j>m} θ_j² (1+j)^{2β}`.
#[derive(Clone)]
pub struct CustomRule {
    pub name: String,
    pub coef: Arc<dyn Fn(usize) -> f64 + Send + Sync>,
    pub sobolev_tail: Arc<dyn Fn(usize, f64) -> f64 + Send + Sync>,
}

impl fmt::Debug for ThetaRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ThetaRule::Finite(v) => f.debug_tuple("Finite").field(v).finish(),
            ThetaRule::PowerLaw { c0 } => f.debug_struct("PowerLaw").field("c0", c0).finish(),
            ThetaRule::Custom(c) => f.debug_tuple("Custom").field(&c.name).finish(),
        }
    }
}

/// Terms summed explicitly before switching to an analytic tail.
const DIRECT_TERMS: usize = 1_000_000;

/// The data-generating truth `(d_o, θ_o, β, L_o)`.
#[derive(Debug, Clone)]
pub struct TruthSpec {
    pub d_o: f64,
    pub beta: f64,
    pub l_o: f64,
    pub rule: ThetaRule,
}

impl TruthSpec {
    pub fn finite(d_o: f64, theta: Vec<f64>, beta: f64, l_o: f64) -> Self {
        Self {
            d_o,
            beta,
            l_o,
            rule: ThetaRule::Finite(theta),
        }
    }

    /// Power-law truth with `c₀` chosen so that the Sobolev seminorm (partial
    /// sum plus analytic tail bound) equals `L_o`.
    pub fn power_law(d_o: f64, beta: f64, l_o: f64) -> Self {
        let unit = power_law_seminorm_upper(1.0, beta, beta);
        Self {
            d_o,
            beta,
            l_o,
            rule: ThetaRule::PowerLaw {
                c0: (l_o / unit).sqrt() * (1.0 - 1e-12),
            },
        }
    }

    pub fn theta_o(&self, j: usize) -> f64 {
        match &self.rule {
            ThetaRule::Finite(v) => v.get(j).copied().unwrap_or(0.0),
            ThetaRule::PowerLaw { c0 } => power_law_coef(*c0, self.beta, j),
            ThetaRule::Custom(c) => (c.coef)(j),
        }
    }

    /// `θ_{o[k]}`.
    pub fn theta_prefix(&self, k: usize) -> Vec<f64> {
        (0..=k).map(|j| self.theta_o(j)).collect()
    }

    /// Largest index with a nonzero coefficient, if the rule is finite.
    pub fn support(&self) -> Option<usize> {
        match &self.rule {
            ThetaRule::Finite(v) => Some(v.iter().rposition(|t| *t != 0.0).unwrap_or(0)),
            _ => None,
        }
    }

    /// Upper bound on `Σ_{j>m} θ_{o,j}² (1+j)^{2β'}`.
    pub fn sobolev_tail_bound(&self, m: usize, beta_eval: f64) -> f64 {
        match &self.rule {
            ThetaRule::Finite(v) => v
                .iter()
                .enumerate()
                .skip(m + 1)
                .map(|(j, t)| t * t * ((1 + j) as f64).powf(2.0 * beta_eval))
                .sum(),
            ThetaRule::PowerLaw { c0 } => power_law_tail_bound(*c0, self.beta, beta_eval, m),
            ThetaRule::Custom(c) => (c.sobolev_tail)(m, beta_eval),
        }
    }

    /// Upper bound on `Σ_{j>m} |θ_{o,j}|`, by Cauchy–Schwarz against the
    /// Sobolev tail at the truth's own `β`.
    pub fn abs_tail_bound(&self, m: usize) -> f64 {
        if let ThetaRule::Finite(v) = &self.rule {
            return v.iter().skip(m + 1).map(|t| t.abs()).sum();
        }
        let weights: f64 = ((m + 1) as f64 + 1.0).powf(1.0 - 2.0 * self.beta) / (2.0 * self.beta - 1.0)
            + ((m + 2) as f64).powf(-2.0 * self.beta);
        (self.sobolev_tail_bound(m, self.beta) * weights).sqrt()
    }

    /// Upper bound on `Σ_j θ_{o,j}² (1+j)^{2β'}`.
    pub fn sobolev_upper(&self, beta_eval: f64) -> f64 {
        match &self.rule {
            ThetaRule::Finite(v) => sobolev_seminorm(v, beta_eval),
            ThetaRule::PowerLaw { c0 } => power_law_seminorm_upper(*c0, self.beta, beta_eval),
            ThetaRule::Custom(c) => {
                let head = 1000;
                let partial: f64 = (0..=head)
                    .map(|j| {
                        let t = (c.coef)(j);
                        t * t * ((1 + j) as f64).powf(2.0 * beta_eval)
                    })
                    .sum();
                partial + (c.sobolev_tail)(head, beta_eval)
            }
        }
    }

    /// Checks `d_o ∈ [−½+t, ½−t]`, `β > 1`, and `θ_o ∈ Θ(β, L_o)`.
    pub fn validate(&self, margin: f64) -> Result<()> {
        if !(self.beta > 1.0) {
            return Err(FexpError::Config(format!("beta must exceed 1, got {}", self.beta)));
        }
        if !(self.l_o > 0.0) {
            return Err(FexpError::Config(format!("L_o must be positive, got {}", self.l_o)));
        }
        if !(self.d_o >= -0.5 + margin && self.d_o <= 0.5 - margin) {
            return Err(FexpError::Config(format!(
                "d_o = {} outside [{}, {}]",
                self.d_o,
                -0.5 + margin,
                0.5 - margin
            )));
        }
        let s = self.sobolev_upper(self.beta);
        if s > self.l_o * (1.0 + 1e-9) {
            return Err(FexpError::Config(format!(
                "Sobolev seminorm {s} of theta_o exceeds L_o = {}",
                self.l_o
            )));
        }
        Ok(())
    }

    /// FEXP model `(d_o, k, θ_{o[k]})`.
    pub fn truncated_model(&self, k: usize) -> FexpModel {
        FexpModel {
            d: self.d_o,
            theta: self.theta_prefix(k),
        }
    }

    /// Short human-readable description, used in manifests.
    pub fn describe(&self) -> String {
        match &self.rule {
            ThetaRule::Finite(v) => format!(
                "finite(d_o={}, beta={}, L_o={}, theta={:?})",
                self.d_o, self.beta, self.l_o, v
            ),
            ThetaRule::PowerLaw { c0 } => format!(
                "power_law(d_o={}, beta={}, L_o={}, c0={c0})",
                self.d_o, self.beta, self.l_o
            ),
            ThetaRule::Custom(c) => format!(
                "custom(d_o={}, beta={}, L_o={}, rule={})",
                self.d_o, self.beta, self.l_o, c.name
            ),
        }
    }
}

fn power_law_coef(c0: f64, beta: f64, j: usize) -> f64 {
    if j < 2 {
        0.0
    } else {
        let jf = j as f64;
        c0 * jf.powf(-(beta + 0.5)) / jf.ln()
    }
}

/// `Σ_{j>m} c₀² j^{−2β−1} (1+j)^{2β'} / log² j`, bounded above by the integral
/// from `m` of the (decreasing) envelope.
fn power_law_tail_bound(c0: f64, beta: f64, beta_eval: f64, m: usize) -> f64 {
    let m = m.max(2) as f64;
    let growth = 2.0 * (beta_eval - beta);
    let ratio = (1.0 + 1.0 / (m + 1.0)).powf(2.0 * beta_eval);
    if growth.abs() < 1e-12 {
        c0 * c0 * ratio / m.ln()
    } else if growth < 0.0 {
        // ∫_m^∞ x^{g−1}/log² x ≤ m^{g} / (|g| log² m)
        c0 * c0 * ratio * m.powf(growth) / (growth.abs() * m.ln() * m.ln())
    } else {
        f64::INFINITY
    }
}

fn power_law_seminorm_upper(c0: f64, beta: f64, beta_eval: f64) -> f64 {
    let mut partial = 0.0;
    for j in (2..=DIRECT_TERMS).rev() {
        let t = power_law_coef(c0, beta, j);
        partial += t * t * ((1 + j) as f64).powf(2.0 * beta_eval);
    }
    partial + power_law_tail_bound(c0, beta, beta_eval, DIRECT_TERMS)
}

/// `θ̄_{d,k} = θ_{o[k]} + (d − d_o) η_{[k]}`, the `l`-projection of `f_o` onto
/// the `k`-dimensional FEXP slice at long-memory value `d`.
pub fn project_theta(truth: &TruthSpec, d: f64, k: usize) -> Vec<f64> {
    (0..=k)
        .map(|j| truth.theta_o(j) + (d - truth.d_o) * eta(j))
        .collect()
}

/// Deterministic offset of the posterior center:
/// `−(1/r_k) Σ_{j>k} η_j θ_{o,j} = (1/r_k) Σ_{j>k} (2/j) θ_{o,j}`.
pub fn bias_term(truth: &TruthSpec, k: usize) -> f64 {
    let sum = match &truth.rule {
        ThetaRule::Finite(v) => v
            .iter()
            .enumerate()
            .skip(k + 1)
            .map(|(j, t)| 2.0 / j as f64 * t)
            .sum::<f64>(),
        ThetaRule::PowerLaw { c0 } => {
            let last = DIRECT_TERMS.max(k.saturating_mul(1000));
            let mut acc = 0.0;
            for j in (k + 1..=last).rev() {
                acc += 2.0 / j as f64 * power_law_coef(*c0, truth.beta, j);
            }
            // ∫_{J+½}^∞ 2c₀ x^{−β−3/2} / log x dx, leading order
            let x0 = last as f64 + 0.5;
            let p = truth.beta + 0.5;
            acc + 2.0 * c0 * x0.powf(-p) / (p * x0.ln())
        }
        ThetaRule::Custom(c) => {
            let last = DIRECT_TERMS.max(k.saturating_mul(1000));
            let mut acc = 0.0;
            for j in (k + 1..=last).rev() {
                acc += 2.0 / j as f64 * (c.coef)(j);
            }
            acc
        }
    };
    sum / r_tail(k)
}

/// Which family of priors on `k` (and hence which θ-support) is in use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PriorKind {
    A,
    B,
    C,
}

impl fmt::Display for PriorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            PriorKind::A => "A",
            PriorKind::B => "B",
            PriorKind::C => "C",
        };
        f.write_str(s)
    }
}

/// Sieve sizes and the rate scales attached to a sample size.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateConstants {
    pub n: usize,
    pub beta: f64,
    pub kind: PriorKind,
    pub k_a: f64,
    pub k_b: f64,
    pub t: f64,
    pub l: f64,
    pub l_o: f64,
    pub l0: f64,
    pub c1: f64,
    pub k_n: usize,
    pub k_n_prime: usize,
    pub delta_n: f64,
    pub eps_n: f64,
    pub w_n: f64,
    pub vbar_n: f64,
}

fn n_over_log(n: usize) -> f64 {
    let nf = n as f64;
    nf / nf.ln()
}

/// `⌊k_A (n/log n)^{1/(2β)}⌋`.
pub fn sieve_k_a(n: usize, beta: f64, k_a: f64) -> usize {
    (k_a * n_over_log(n).powf(1.0 / (2.0 * beta))).floor() as usize
}

/// `⌊k_B (n/log n)^{1/(1+2β)}⌋`.
pub fn sieve_k_b(n: usize, beta: f64, k_b: f64) -> usize {
    (k_b * n_over_log(n).powf(1.0 / (1.0 + 2.0 * beta))).floor() as usize
}

/// Largest `k_B` with `k'_n < k_n` for every `n` in the grid (the supremum,
/// nudged down by one part in 10¹²).
pub fn largest_k_b(ns: &[usize], beta: f64, k_a: f64) -> f64 {
    ns.iter()
        .map(|&n| sieve_k_a(n, beta, k_a) as f64 / n_over_log(n).powf(1.0 / (1.0 + 2.0 * beta)))
        .fold(f64::INFINITY, f64::min)
        * (1.0 - 1e-12)
}

/// Sieve sizes and rate scales. `k_b = None` picks [`largest_k_b`] for this `n`.
/// The unpinned constants `l_0` and `C_1` are set to 1.
#[allow(clippy::too_many_arguments)]
pub fn rate_constants(
    n: usize,
    beta: f64,
    kind: PriorKind,
    k_a: f64,
    k_b: Option<f64>,
    t: f64,
    l: f64,
    l_o: f64,
) -> Result<RateConstants> {
    if n < 8 {
        return Err(FexpError::Config(format!("n must be >= 8, got {n}")));
    }
    if !(beta > 1.0) {
        return Err(FexpError::Config(format!("beta must exceed 1, got {beta}")));
    }
    if !(t > 0.0 && t < 0.5) {
        return Err(FexpError::Config(format!("margin t must lie in (0, 1/2), got {t}")));
    }
    let k_n = sieve_k_a(n, beta, k_a);
    if k_n < 1 {
        return Err(FexpError::Config(format!("k_n = 0 for n = {n}; increase k_A")));
    }
    let k_b = k_b.unwrap_or_else(|| largest_k_b(&[n], beta, k_a));
    let k_n_prime = sieve_k_b(n, beta, k_b);
    if k_n_prime >= k_n {
        return Err(FexpError::Config(format!(
            "k'_n = {k_n_prime} must be smaller than k_n = {k_n}"
        )));
    }
    let r = n_over_log(n);
    let (l0, c1) = (1.0, 1.0);
    Ok(RateConstants {
        n,
        beta,
        kind,
        k_a,
        k_b,
        t,
        l,
        l_o,
        l0,
        c1,
        k_n,
        k_n_prime,
        delta_n: r.powf(-(2.0 * beta - 1.0) / (4.0 * beta)),
        eps_n: r.powf(-beta / (2.0 * beta + 1.0)),
        w_n: vbar_or_w(c1, l, l_o, l0, beta, false) * r.powf(-(2.0 * beta - 1.0) / (4.0 * beta + 2.0)),
        vbar_n: vbar_or_w(c1, l, l_o, l0, beta, true) * r.powf(-(beta - 1.0) / (2.0 * beta)),
    })
}

fn vbar_or_w(c1: f64, l: f64, l_o: f64, l0: f64, beta: f64, prior_a: bool) -> f64 {
    if prior_a {
        c1 * (l + l_o).powf(1.0 / (4.0 * beta - 2.0)) * l0.powf((2.0 * beta - 2.0) / (2.0 * beta - 1.0))
    } else {
        c1 * (l + l_o).powf(1.0 / (4.0 * beta)) * l0.powf((2.0 * beta - 1.0) / (2.0 * beta))
    }
}

impl RateConstants {
    /// Sieve dimension used by prior A (`k_n`) or B (`k'_n`).
    pub fn sieve_k(&self, kind: PriorKind) -> usize {
        match kind {
            PriorKind::B => self.k_n_prime,
            _ => self.k_n,
        }
    }

    /// Same constants with a different Sobolev radius `L`.
    pub fn with_radius(&self, l: f64) -> Self {
        let r = n_over_log(self.n);
        let beta = self.beta;
        Self {
            l,
            w_n: vbar_or_w(self.c1, l, self.l_o, self.l0, beta, false)
                * r.powf(-(2.0 * beta - 1.0) / (4.0 * beta + 2.0)),
            vbar_n: vbar_or_w(self.c1, l, self.l_o, self.l0, beta, true) * r.powf(-(beta - 1.0) / (2.0 * beta)),
            ..self.clone()
        }
    }
}

/// Smallest `L` for which the ball-inclusion argument closes:
/// `2(k+1)^{2γ}(2l₀r_n)² + 4Σθ_o²(j+1)^{2γ} + 16 v_n(L)² Σ_{j≥1}(j+1)^{2γ}/j² ≤ L`
/// with `γ = β − ½`, `r_n = δ_n`, `v_n = v̄_n` under prior A and `γ = β`,
/// `r_n = ε_n`, `v_n = w_n` under priors B/C.
pub fn constructive_radius(truth: &TruthSpec, rates: &RateConstants, kind: PriorKind) -> f64 {
    let (gamma, radius, k) = match kind {
        PriorKind::A => (rates.beta - 0.5, rates.delta_n, rates.k_n),
        _ => (rates.beta, rates.eps_n, rates.k_n_prime.max(rates.k_n)),
    };
    let w = |j: usize| ((j + 1) as f64).powf(2.0 * gamma);
    let ball = 2.0 * w(k) * (2.0 * rates.l0 * radius).powi(2);
    let head: f64 = 4.0 * (0..=k).map(|j| truth.theta_o(j).powi(2) * w(j)).sum::<f64>();
    let eta_weight: f64 = (1..=k).map(|j| w(j) / (j * j) as f64).sum();
    let mut l = ball + head;
    for _ in 0..500 {
        let r = rates.with_radius(l);
        let v = match kind {
            PriorKind::A => r.vbar_n,
            _ => r.w_n,
        };
        let next = ball + head + 16.0 * v * v * eta_weight;
        if (next - l).abs() <= 1e-13 * next {
            return next;
        }
        l = next;
    }
    l
}

/// The default Sobolev radius: four times [`constructive_radius`].
pub fn default_sobolev_radius(truth: &TruthSpec, rates: &RateConstants, kind: PriorKind) -> f64 {
    4.0 * constructive_radius(truth, rates, kind)
}
