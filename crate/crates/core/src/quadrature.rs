//! Gauss–Legendre panel quadrature on `(0, π]` with dyadic refinement toward
//! the origin, where FEXP densities carry an integrable `|x|^{-2d}` or
//! `log² |x|` singularity.

use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::error::{FexpError, Result};

/// Points per panel.
pub const PANEL_ORDER: usize = 16;

/// Smallest abscissa reached by the dyadic chain.
pub const DEFAULT_EPS: f64 = 1e-12;

/// Knobs for the adaptive refinement loop.
#[derive(Debug, Clone, Copy)]
pub struct QuadratureConfig {
    /// Uniform panels on `[0, π]` before refinement.
    pub panels: usize,
    /// Absolute tolerance, scaled by `max(1, |value|)`.
    pub tol: f64,
    /// Number of panel doublings attempted before giving up.
    pub max_refinements: usize,
    pub eps: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            panels: 64,
            tol: 1e-11,
            max_refinements: 6,
            eps: DEFAULT_EPS,
        }
    }
}

/// Gauss–Legendre rule on `[-1, 1]` computed by Newton iteration on `P_n`.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; order];
    let mut weights = vec![0.0; order];
    let n = order as f64;
    for i in 0..order.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let mut p0 = 1.0;
            let mut p1 = 0.0;
            for j in 0..order {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
            }
            dp = n * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -z;
        nodes[order - 1 - i] = z;
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        weights[i] = w;
        weights[order - 1 - i] = w;
    }
    (nodes, weights)
}

fn panel_rule() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(PANEL_ORDER))
}

/// Nodes and weights covering `[eps, π]`; the piece `[0, eps]` is handled by
/// [`NodeSet::origin_piece`].
#[derive(Debug, Clone)]
pub struct NodeSet {
    pub x: Vec<f64>,
    pub w: Vec<f64>,
    pub eps: f64,
}

impl NodeSet {
    pub fn half_line(panels: usize, eps: f64) -> Self {
        let panels = panels.max(2);
        let (gx, gw) = panel_rule();
        let width = PI / panels as f64;
        let mut x = Vec::with_capacity((panels + 48) * PANEL_ORDER);
        let mut w = Vec::with_capacity(x.capacity());
        let mut push = |a: f64, b: f64| {
            let half = 0.5 * (b - a);
            let mid = 0.5 * (a + b);
            for (&t, &wt) in gx.iter().zip(gw) {
                x.push(mid + half * t);
                w.push(half * wt);
            }
        };
        let mut hi = width;
        let mut lo = 0.5 * width;
        loop {
            push(lo, hi);
            if lo <= eps {
                break;
            }
            hi = lo;
            lo *= 0.5;
        }
        let eps = lo;
        for i in 1..panels {
            push(i as f64 * width, (i + 1) as f64 * width);
        }
        Self { x, w, eps }
    }

    /// `∫_eps^π f`.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.x.iter().zip(&self.w).map(|(&x, &w)| w * f(x)).sum()
    }

    /// Approximates `∫_0^eps f` assuming `f(x) ≈ c x^{-p}` near the origin.
    pub fn origin_piece<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        let f1 = f(self.eps);
        let f2 = f(2.0 * self.eps);
        if !f1.is_finite() {
            return f1;
        }
        if f1 != 0.0 && f2 != 0.0 && f1.signum() == f2.signum() {
            let p = (f1 / f2).log2().min(0.95);
            self.eps * f1 / (1.0 - p)
        } else {
            self.eps * f1
        }
    }

    /// Approximates `∫_0^eps f` for `f(x) = x^{-p}(a + b log x)` with `p < 1`
    /// known, fitting `a` and `b` from `f(eps)` and `f(2 eps)`.
    pub fn origin_piece_log_power<F: Fn(f64) -> f64>(&self, f: F, p: f64) -> f64 {
        let e = self.eps;
        let u1 = f(e) * e.powf(p);
        let u2 = f(2.0 * e) * (2.0 * e).powf(p);
        if !u1.is_finite() || !u2.is_finite() {
            return self.origin_piece(f);
        }
        let b = (u2 - u1) / std::f64::consts::LN_2;
        let a = u1 - b * e.ln();
        let q = 1.0 - p;
        // ∫_0^e x^{-p}(a + b log x) dx = e^q [a/q + b(log e / q − 1/q²)]
        e.powf(q) * (a / q + b * (e.ln() / q - 1.0 / (q * q)))
    }

    /// `∫_0^π f`.
    pub fn integrate_with_origin<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.integrate(&f) + self.origin_piece(&f)
    }
}

/// `∫_0^π f` with panel doubling until successive estimates agree.
pub fn integrate_half_line<F: Fn(f64) -> f64>(f: F, cfg: &QuadratureConfig) -> Result<f64> {
    let mut panels = cfg.panels;
    let mut prev = NodeSet::half_line(panels, cfg.eps).integrate_with_origin(&f);
    let mut change = f64::INFINITY;
    for _ in 0..cfg.max_refinements {
        panels *= 2;
        let next = NodeSet::half_line(panels, cfg.eps).integrate_with_origin(&f);
        change = (next - prev).abs();
        if change <= cfg.tol * next.abs().max(1.0) {
            return Ok(next);
        }
        prev = next;
    }
    Err(FexpError::QuadratureNonConvergence {
        refinements: cfg.max_refinements,
        last_change: change,
    })
}

/// `c_h = ∫_0^π cos(h x) f(x) dx` for `h = 0..=maxlag` on a fixed node set.
pub fn cosine_moments(nodes: &NodeSet, fx: &[f64], origin: f64, maxlag: usize) -> Vec<f64> {
    let m = nodes.x.len();
    let wf: Vec<f64> = nodes.w.iter().zip(fx).map(|(w, f)| w * f).collect();
    let two_cos: Vec<f64> = nodes.x.iter().map(|x| 2.0 * x.cos()).collect();
    let mut prev = vec![1.0; m];
    let mut cur: Vec<f64> = nodes.x.iter().map(|x| x.cos()).collect();
    let mut out = Vec::with_capacity(maxlag + 1);
    out.push(wf.iter().sum::<f64>() + origin);
    for _h in 1..=maxlag {
        let mut acc = 0.0;
        for i in 0..m {
            acc += wf[i] * cur[i];
            let next = two_cos[i] * cur[i] - prev[i];
            prev[i] = cur[i];
            cur[i] = next;
        }
        out.push(acc + origin);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(PANEL_ORDER);
        for p in 0..(2 * PANEL_ORDER) {
            let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(p as i32)).sum();
            let exact = if p % 2 == 1 { 0.0 } else { 2.0 / (p as f64 + 1.0) };
            assert!((q - exact).abs() < 1e-14, "degree {p}: {q} vs {exact}");
        }
    }

    #[test]
    fn power_singularity_is_resolved() {
        // ∫_0^π x^{-0.6} dx = π^{0.4}/0.4
        let v = integrate_half_line(|x| x.powf(-0.6), &QuadratureConfig::default()).unwrap();
        let exact = PI.powf(0.4) / 0.4;
        assert!((v - exact).abs() < 1e-10, "{v} vs {exact}");
    }

    #[test]
    fn log_squared_singularity_is_resolved() {
        // ∫_0^π ln² x dx = π(ln²π − 2 lnπ + 2)
        let v = integrate_half_line(|x| x.ln().powi(2), &QuadratureConfig::default()).unwrap();
        let l = PI.ln();
        let exact = PI * (l * l - 2.0 * l + 2.0);
        assert!((v - exact).abs() < 1e-9, "{v} vs {exact}");
    }

    #[test]
    fn cosine_moments_match_closed_form() {
        // ∫_0^π cos(hx) e^{cos x} dx = π I_h(1); check h = 0 against the series.
        let nodes = NodeSet::half_line(128, DEFAULT_EPS);
        let fx: Vec<f64> = nodes.x.iter().map(|x| x.cos().exp()).collect();
        let c = cosine_moments(&nodes, &fx, nodes.eps * 1f64.exp(), 3);
        let i0: f64 = (0..30)
            .map(|m| {
                let fact: f64 = (1..=m).map(|v| v as f64).product();
                0.25f64.powi(m) / (fact * fact)
            })
            .sum();
        assert!((c[0] - PI * i0).abs() < 1e-12, "{} vs {}", c[0], PI * i0);
        let i1: f64 = (0..30)
            .map(|m| {
                let fm: f64 = (1..=m).map(|v| v as f64).product();
                let fm1 = fm * (m + 1) as f64;
                0.5 * 0.25f64.powi(m) / (fm * fm1)
            })
            .sum();
        assert!((c[1] - PI * i1).abs() < 1e-11);
    }
}
