//! Toeplitz operators `T_n(h)` with entries `∫_{−π}^{π} e^{i(l−m)x} h(x) dx`
//! (no `1/(2π)` factor), their autocovariance sequences, Levinson–Durbin
//! factorization, and dense trace diagnostics.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, ln_gamma};

use crate::error::{FexpError, Result};
use crate::quadrature::{cosine_moments, integrate_half_line, NodeSet, QuadratureConfig};
use crate::rng::rng_from_seed;
use crate::spectral::{h_tail, FexpModel};

/// Largest dimension for which dense `n × n` matrices are formed.
pub const DENSE_CAP: usize = 1024;

/// An even, integrable function on `[−π, π]`.
pub trait SpectralDensity: Send + Sync {
    fn eval(&self, x: f64) -> f64;

    fn label(&self) -> String {
        "density".to_string()
    }

    /// `p` such that `f(x) ≈ x^{−p}(a + b log x)` as `x → 0`, when known.
    fn origin_exponent(&self) -> Option<f64> {
        None
    }
}

impl SpectralDensity for FexpModel {
    fn eval(&self, x: f64) -> f64 {
        self.density(x)
    }

    fn label(&self) -> String {
        format!("fexp(d={}, theta={:?})", self.d, self.theta)
    }

    fn origin_exponent(&self) -> Option<f64> {
        Some(2.0 * self.d)
    }
}

/// `h(x) ≡ c`.
#[derive(Debug, Clone, Copy)]
pub struct ConstantDensity(pub f64);

impl SpectralDensity for ConstantDensity {
    fn eval(&self, _x: f64) -> f64 {
        self.0
    }

    fn label(&self) -> String {
        format!("constant({})", self.0)
    }
}

/// `1 / (4π² f)`, the symbol whose Toeplitz matrix approximates `T_n(f)^{-1}`.
#[derive(Clone)]
pub struct InverseSymbol<F>(pub F);

impl<F: SpectralDensity> SpectralDensity for InverseSymbol<F> {
    fn eval(&self, x: f64) -> f64 {
        1.0 / (4.0 * PI * PI * self.0.eval(x))
    }

    fn label(&self) -> String {
        format!("inverse({})", self.0.label())
    }

    fn origin_exponent(&self) -> Option<f64> {
        self.0.origin_exponent().map(|p| -p)
    }
}

/// `H_k(x) · f(x)`, the derivative of `f_{d,k,θ̄_{d,k}}` in `d`.
#[derive(Debug, Clone)]
pub struct TailWeighted {
    pub model: FexpModel,
    pub k: usize,
}

impl SpectralDensity for TailWeighted {
    fn eval(&self, x: f64) -> f64 {
        h_tail(self.k, x) * self.model.density(x)
    }

    fn label(&self) -> String {
        format!("H_{} * {}", self.k, self.model.label())
    }

    fn origin_exponent(&self) -> Option<f64> {
        Some(2.0 * self.model.d)
    }
}

/// Arbitrary closure, mostly for tests and diagnostics.
#[derive(Clone)]
pub struct FnDensity {
    pub name: String,
    pub f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl SpectralDensity for FnDensity {
    fn eval(&self, x: f64) -> f64 {
        (self.f)(x)
    }

    fn label(&self) -> String {
        self.name.clone()
    }
}

/// `γ(0..=maxlag)` of a spectral density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutocovSequence {
    pub values: Vec<f64>,
    pub source: String,
}

impl AutocovSequence {
    pub fn new(values: Vec<f64>, source: impl Into<String>) -> Self {
        Self {
            values,
            source: source.into(),
        }
    }

    pub fn maxlag(&self) -> usize {
        self.values.len().saturating_sub(1)
    }
}

/// `γ(h) = 2∫_0^π cos(hx) f(x) dx` by dyadic panel quadrature, refined until
/// every lag changes by less than `cfg.tol` between successive panel counts.
pub fn autocov_from_density(
    f: &dyn SpectralDensity,
    maxlag: usize,
    cfg: &QuadratureConfig,
) -> Result<AutocovSequence> {
    // Sixteen-point panels resolve a few oscillations each.
    let mut panels = cfg.panels.max(maxlag / 4 + 8);
    let moments = |panels: usize| {
        let nodes = NodeSet::half_line(panels, cfg.eps);
        let fx: Vec<f64> = nodes.x.iter().map(|&x| f.eval(x)).collect();
        let origin = match f.origin_exponent() {
            Some(p) => nodes.origin_piece_log_power(|x| f.eval(x), p),
            None => nodes.origin_piece(|x| f.eval(x)),
        };
        cosine_moments(&nodes, &fx, origin, maxlag)
    };
    let mut prev = moments(panels);
    let mut change = f64::INFINITY;
    for _ in 0..cfg.max_refinements {
        panels *= 2;
        let next = moments(panels);
        change = next
            .iter()
            .zip(&prev)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let scale = next[0].abs().max(1.0);
        prev = next;
        if change <= cfg.tol * scale {
            let values = prev.into_iter().map(|c| 2.0 * c).collect();
            return Ok(AutocovSequence::new(values, f.label()));
        }
    }
    Err(FexpError::QuadratureNonConvergence {
        refinements: cfg.max_refinements,
        last_change: change,
    })
}

/// Autocovariances of `(2 − 2cos x)^{−d}` and their `d`-derivatives for lags
/// `0..=maxlag`, from `γ(0) = 2πΓ(1−2d)/Γ(1−d)²` and the ratio recursion
/// `γ(h)/γ(h−1) = (h−1+d)/(h−d)`.
pub fn fractional_autocov(d: f64, maxlag: usize) -> (Vec<f64>, Vec<f64>) {
    let mut gamma = Vec::with_capacity(maxlag + 1);
    let mut dgamma = Vec::with_capacity(maxlag + 1);
    let g0 = 2.0 * PI * (ln_gamma(1.0 - 2.0 * d) - 2.0 * ln_gamma(1.0 - d)).exp();
    // d/dd log γ(0) = −2ψ(1−2d) + 2ψ(1−d)
    let mut dlog = -2.0 * digamma(1.0 - 2.0 * d) + 2.0 * digamma(1.0 - d);
    let mut g = g0;
    gamma.push(g);
    dgamma.push(g * dlog);
    for h in 1..=maxlag {
        let a = h as f64 - 1.0 + d;
        let b = h as f64 - d;
        g *= a / b;
        if a != 0.0 {
            dlog += 1.0 / a + 1.0 / b;
        }
        gamma.push(g);
        dgamma.push(if a == 0.0 && h == 1 {
            // γ(1) vanishes linearly in d at d = 0; its derivative is γ(0)/1.
            g0 / b
        } else if g == 0.0 {
            // the product already contains the (h−1+d) = 0 factor
            gamma_derivative_at_zero_factor(g0, d, h)
        } else {
            g * dlog
        });
    }
    (gamma, dgamma)
}

/// `d/dd γ_d(h)` when `d = 0` makes the first ratio factor vanish:
/// `γ(0) · Π_{i=2}^h (i−1)/i · 1/(1)` evaluated at `d = 0`.
fn gamma_derivative_at_zero_factor(g0: f64, d: f64, h: usize) -> f64 {
    let mut p = g0 / (1.0 - d);
    for i in 2..=h {
        p *= (i as f64 - 1.0 + d) / (i as f64 - d);
    }
    p
}

/// Fourier coefficients `g_m = (1/2π)∫ e^{−imx} exp(Σθ_j cos jx) dx` by two
/// FFTs, truncated where they fall below `1e-16 · g_0` (the FFT round-off floor).
fn short_memory_coefficients(theta: &[f64]) -> Vec<f64> {
    let amp: f64 = theta.iter().skip(1).map(|t| t.abs()).sum();
    let mut size = 64usize;
    while (size as f64) < 4.0 * (theta.len() as f64) * (1.0 + amp) + 64.0 {
        size *= 2;
    }
    let mut planner = FftPlanner::<f64>::new();
    loop {
        let fft = planner.plan_fft_forward(size);
        // log g on the grid 2πi/size, itself a (real, even) DFT of θ
        let mut buf = vec![Complex64::new(0.0, 0.0); size];
        buf[0].re = theta[0];
        for (j, t) in theta.iter().enumerate().skip(1) {
            buf[j % size].re += 0.5 * t;
            buf[(size - j % size) % size].re += 0.5 * t;
        }
        fft.process(&mut buf);
        for z in buf.iter_mut() {
            *z = Complex64::new(z.re.exp(), 0.0);
        }
        fft.process(&mut buf);
        let coef: Vec<f64> = buf.iter().map(|c| c.re / size as f64).collect();
        let g0 = coef[0].abs();
        let half = size / 2;
        let tail = coef[half / 2..=half].iter().map(|c| c.abs()).fold(0.0, f64::max);
        if tail <= 1e-15 * g0 || size >= 1 << 22 {
            let mut m = half;
            while m > 0 && coef[m].abs() <= 1e-16 * g0 {
                m -= 1;
            }
            return coef[..=m].to_vec();
        }
        size *= 2;
    }
}

fn convolve_symmetric(g: &[f64], base: &[f64], maxlag: usize) -> Vec<f64> {
    (0..=maxlag)
        .map(|h| {
            let mut acc = g[0] * base[h];
            for (i, gi) in g.iter().enumerate().skip(1) {
                acc += gi * (base[h + i] + base[h.abs_diff(i)]);
            }
            acc
        })
        .collect()
}

/// Autocovariances of an FEXP density via the convolution
/// `γ_f(h) = Σ_m g_m γ_d(h − m)` of the short-memory Fourier coefficients
/// with the fractional-noise autocovariances.
pub fn fexp_autocov(model: &FexpModel, maxlag: usize) -> AutocovSequence {
    let g = short_memory_coefficients(&model.theta);
    let (base, _) = fractional_autocov(model.d, maxlag + g.len());
    AutocovSequence::new(convolve_symmetric(&g, &base, maxlag), model.label())
}

/// Autocovariances of `f` and of `H_k f` (the `d`-derivative of `f` along
/// the projection path), both up to `maxlag`.
pub fn fexp_autocov_with_tail(model: &FexpModel, k: usize, maxlag: usize) -> (AutocovSequence, AutocovSequence) {
    let g = short_memory_coefficients(&model.theta);
    let ext = maxlag + k;
    let (base, dbase) = fractional_autocov(model.d, ext + g.len());
    let gf = convolve_symmetric(&g, &base, ext);
    let dlog_part = convolve_symmetric(&g, &dbase, maxlag);
    let tail: Vec<f64> = (0..=maxlag)
        .map(|h| {
            let mut acc = dlog_part[h];
            for j in 1..=k {
                acc -= (2.0 / j as f64) * 0.5 * (gf[h + j] + gf[h.abs_diff(j)]);
            }
            acc
        })
        .collect();
    (
        AutocovSequence::new(gf[..=maxlag].to_vec(), model.label()),
        AutocovSequence::new(tail, format!("H_{k} * {}", model.label())),
    )
}

/// Log-determinant and quadratic form of a symmetric Toeplitz matrix with
/// first row `gamma[..n]`, from one Durbin pass over the prediction errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianTerms {
    pub logdet: f64,
    pub quad: f64,
}

/// `log det T` and `xᵀ T^{-1} x` in `~2n²` flops and `O(n)` memory.
pub fn durbin_terms(gamma: &[f64], x: &[f64]) -> Result<GaussianTerms> {
    let n = x.len();
    if gamma.len() < n {
        return Err(FexpError::InsufficientLags {
            available: gamma.len(),
            required: n,
        });
    }
    if n == 0 {
        return Ok(GaussianTerms { logdet: 0.0, quad: 0.0 });
    }
    let mut v = gamma[0];
    if !(v > 0.0) {
        return Err(FexpError::NotPositiveDefinite { step: 0, pivot: v });
    }
    let mut logdet = v.ln();
    let mut quad = x[0] * x[0] / v;
    // fwd[j] = φ_{t,j+1}; bwd holds the same coefficients reversed, stored
    // right-aligned so the recursion extends it by one slot to the left.
    // Each step updates both, accumulates the prediction error e_t, and
    // accumulates the numerator of the next reflection coefficient.
    let mut fwd = vec![0.0; n];
    let mut bwd = vec![0.0; n];
    let mut g = gamma[..n].to_vec();
    g.push(0.0);
    let mut num = g[1];
    for t in 1..n {
        let start = n - t + 1;
        let kappa = num / v;
        let len = t - 1;
        let a = &mut fwd[..len];
        let b = &mut bwd[start..n];
        let xs = &x[1..t];
        let gs = &g[2..t + 1];
        let mut e = [0.0f64; 4];
        let mut q = [0.0f64; 4];
        let mut ac = a.chunks_exact_mut(4);
        let mut bc = b.chunks_exact_mut(4);
        let mut xc = xs.chunks_exact(4);
        let mut gc = gs.chunks_exact(4);
        for (((a4, b4), x4), g4) in (&mut ac).zip(&mut bc).zip(&mut xc).zip(&mut gc) {
            for l in 0..4 {
                let ao = a4[l];
                let bo = b4[l];
                let bn = bo - kappa * ao;
                a4[l] = ao - kappa * bo;
                b4[l] = bn;
                e[l] += bn * x4[l];
                q[l] += bn * g4[l];
            }
        }
        let mut err_sum = (e[0] + e[1]) + (e[2] + e[3]);
        let mut next_sum = (q[0] + q[1]) + (q[2] + q[3]);
        for (((ao, bo), xv), gv) in ac
            .into_remainder()
            .iter_mut()
            .zip(bc.into_remainder().iter_mut())
            .zip(xc.remainder())
            .zip(gc.remainder())
        {
            let a_old = *ao;
            let b_old = *bo;
            let bn = b_old - kappa * a_old;
            *ao = a_old - kappa * b_old;
            *bo = bn;
            err_sum += bn * xv;
            next_sum += bn * gv;
        }
        fwd[t - 1] = kappa;
        bwd[start - 1] = kappa;
        let err = x[t] - kappa * x[0] - err_sum;
        num = g[t + 1] - kappa * g[1] - next_sum;
        v *= 1.0 - kappa * kappa;
        if !(v > 0.0) || !v.is_finite() {
            return Err(FexpError::NotPositiveDefinite { step: t, pivot: v });
        }
        logdet += v.ln();
        quad += err * err / v;
    }
    Ok(GaussianTerms { logdet, quad })
}

/// `log det T`, `T^{-1} b` and `bᵀ T^{-1} b` by the Levinson recursion.
pub fn levinson_solve(gamma: &[f64], rhs: &[f64]) -> Result<(f64, Vec<f64>, f64)> {
    let n = rhs.len();
    if gamma.len() < n {
        return Err(FexpError::InsufficientLags {
            available: gamma.len(),
            required: n,
        });
    }
    if n == 0 {
        return Ok((0.0, Vec::new(), 0.0));
    }
    let mut v = gamma[0];
    if !(v > 0.0) {
        return Err(FexpError::NotPositiveDefinite { step: 0, pivot: v });
    }
    let mut logdet = v.ln();
    let mut y = vec![0.0; n];
    y[0] = rhs[0] / v;
    let mut fwd = vec![0.0; n];
    let mut bwd = vec![0.0; n];
    for t in 1..n {
        let start = n - t + 1;
        let mut num = gamma[t];
        for (b, g) in bwd[start..n].iter().zip(&gamma[1..t]) {
            num -= b * g;
        }
        let kappa = num / v;
        {
            let (f_head, _) = fwd.split_at_mut(t - 1);
            let back = &mut bwd[start..n];
            for (a, b) in f_head.iter_mut().zip(back.iter_mut()) {
                let a_old = *a;
                let b_old = *b;
                *a = a_old - kappa * b_old;
                *b = b_old - kappa * a_old;
            }
        }
        fwd[t - 1] = kappa;
        bwd[start - 1] = kappa;
        v *= 1.0 - kappa * kappa;
        if !(v > 0.0) || !v.is_finite() {
            return Err(FexpError::NotPositiveDefinite { step: t, pivot: v });
        }
        logdet += v.ln();
        // μ = b_t − Σ_j γ_{t−j} y_j ; y ← y − (μ/v) φ_{t,t−j}, y_t = μ/v
        let mut mu = rhs[t];
        for (j, yj) in y[..t].iter().enumerate() {
            mu -= gamma[t - j] * yj;
        }
        let c = mu / v;
        for (yj, b) in y[..t].iter_mut().zip(&bwd[start - 1..n]) {
            *yj -= c * b;
        }
        y[t] = c;
    }
    let quad = rhs.iter().zip(&y).map(|(a, b)| a * b).sum();
    Ok((logdet, y, quad))
}

/// Cached outcome of the Durbin pass run at build time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FactorState {
    Ready { logdet: f64 },
    Breakdown { step: usize, pivot: f64 },
}

/// `T_n(h)` stored through its first row.
#[derive(Debug, Clone)]
pub struct ToeplitzOperator {
    pub n: usize,
    pub gamma: AutocovSequence,
    pub factor: FactorState,
}

impl ToeplitzOperator {
    pub fn build(gamma: AutocovSequence, n: usize) -> Result<Self> {
        if gamma.values.len() < n {
            return Err(FexpError::InsufficientLags {
                available: gamma.values.len(),
                required: n,
            });
        }
        let zeros = vec![0.0; n];
        let factor = match durbin_terms(&gamma.values[..n], &zeros) {
            Ok(t) => FactorState::Ready { logdet: t.logdet },
            Err(FexpError::NotPositiveDefinite { step, pivot }) => FactorState::Breakdown { step, pivot },
            Err(e) => return Err(e),
        };
        let mut gamma = gamma;
        gamma.values.truncate(n);
        Ok(Self { n, gamma, factor })
    }

    pub fn row(&self) -> &[f64] {
        &self.gamma.values
    }

    pub fn logdet(&self) -> Result<f64> {
        match self.factor {
            FactorState::Ready { logdet } => Ok(logdet),
            FactorState::Breakdown { step, pivot } => Err(FexpError::NotPositiveDefinite { step, pivot }),
        }
    }

    /// `(log det T, T^{-1}x, xᵀT^{-1}x)`.
    pub fn logdet_solve(&self, x: &[f64]) -> Result<(f64, Vec<f64>, f64)> {
        if x.len() != self.n {
            return Err(FexpError::DimensionMismatch {
                expected: self.n,
                got: x.len(),
            });
        }
        self.logdet()?;
        levinson_solve(self.row(), x)
    }

    /// `log det T` and `xᵀT^{-1}x` without forming the solution.
    pub fn gaussian_terms(&self, x: &[f64]) -> Result<GaussianTerms> {
        if x.len() != self.n {
            return Err(FexpError::DimensionMismatch {
                expected: self.n,
                got: x.len(),
            });
        }
        durbin_terms(self.row(), x)
    }

    /// `T x` by circulant embedding and FFT.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        toeplitz_matvec(self.row(), x)
    }

    pub fn dense(&self) -> Result<DMatrix<f64>> {
        if self.n > DENSE_CAP {
            return Err(FexpError::DenseCapExceeded { n: self.n, cap: DENSE_CAP });
        }
        Ok(dense_toeplitz(self.row(), self.n))
    }
}

pub fn dense_toeplitz(row: &[f64], n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| row[i.abs_diff(j)])
}

/// Symmetric Toeplitz matrix–vector product in `O(n log n)`.
pub fn toeplitz_matvec(row: &[f64], x: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let m = (2 * n).next_power_of_two();
    let mut c = vec![Complex64::new(0.0, 0.0); m];
    for h in 0..n {
        c[h].re = row[h];
        if h > 0 {
            c[m - h].re = row[h];
        }
    }
    let mut xv = vec![Complex64::new(0.0, 0.0); m];
    for (dst, src) in xv.iter_mut().zip(x) {
        dst.re = *src;
    }
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(m);
    let inv = planner.plan_fft_inverse(m);
    fwd.process(&mut c);
    fwd.process(&mut xv);
    for (a, b) in xv.iter_mut().zip(&c) {
        *a *= b;
    }
    inv.process(&mut xv);
    xv[..n].iter().map(|z| z.re / m as f64).collect()
}

/// Exact normalized trace and its Szegő-type limit.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TraceComparison {
    pub exact: f64,
    pub szego_limit: f64,
}

/// `(1/n) tr[Π_j T_n(f_j)]` by dense products, together with the limit
/// `(2π)^{m−1} ∫_{−π}^{π} Π_j f_j` for `m` factors.
pub fn trace_product(ops: &[&dyn SpectralDensity], n: usize, cfg: &QuadratureConfig) -> Result<TraceComparison> {
    if ops.is_empty() {
        return Err(FexpError::Config("trace_product needs at least one density".into()));
    }
    if n > DENSE_CAP {
        return Err(FexpError::DenseCapExceeded { n, cap: DENSE_CAP });
    }
    let mut prod: Option<DMatrix<f64>> = None;
    for f in ops {
        let g = autocov_from_density(*f, n - 1, cfg)?;
        let t = dense_toeplitz(&g.values, n);
        prod = Some(match prod {
            None => t,
            Some(p) => p * t,
        });
    }
    let exact = prod.map(|p| p.trace()).unwrap_or(0.0) / n as f64;
    let m = ops.len() as i32;
    let integral = integrate_half_line(|x| ops.iter().map(|f| f.eval(x)).product::<f64>(), cfg)?;
    Ok(TraceComparison {
        exact,
        szego_limit: (2.0 * PI).powi(m - 1) * 2.0 * integral,
    })
}

/// `‖I − T^{1/2}(f) T(1/(4π²f)) T^{1/2}(f)‖_F`, evaluated as
/// `sqrt(n − 2 tr(T(f)T(g)) + tr((T(f)T(g))²))`.
pub fn inverse_approx_residual<F: SpectralDensity + Clone>(f: &F, n: usize, cfg: &QuadratureConfig) -> Result<f64> {
    if n > DENSE_CAP {
        return Err(FexpError::DenseCapExceeded { n, cap: DENSE_CAP });
    }
    let gf = autocov_from_density(f, n - 1, cfg)?;
    let inv = InverseSymbol(f.clone());
    let gg = autocov_from_density(&inv, n - 1, cfg)?;
    let tf = dense_toeplitz(&gf.values, n);
    if tf.clone().cholesky().is_none() {
        return Err(FexpError::NotPositiveDefinite { step: 0, pivot: f64::NAN });
    }
    let p = &tf * dense_toeplitz(&gg.values, n);
    let tr1 = p.trace();
    let tr2 = p.component_mul(&p.transpose()).sum();
    Ok((n as f64 - 2.0 * tr1 + tr2).max(0.0).sqrt())
}

/// Symmetric matrix with unit Frobenius norm for the quadratic-form probe.
#[derive(Debug, Clone)]
pub enum QuadFormMatrix {
    /// `I_n / √n`.
    ScaledIdentity { n: usize },
    /// `u uᵀ` for a unit vector `u`: a single eigenvalue 1.
    RankOne { n: usize },
    Dense(DMatrix<f64>),
}

impl QuadFormMatrix {
    pub fn dim(&self) -> usize {
        match self {
            QuadFormMatrix::ScaledIdentity { n } | QuadFormMatrix::RankOne { n } => *n,
            QuadFormMatrix::Dense(a) => a.nrows(),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TailProbe {
    pub trials: usize,
    pub threshold: f64,
    pub exceedance: f64,
    pub bound: f64,
    /// Three binomial standard deviations at the bound.
    pub slack: f64,
}

impl TailProbe {
    pub fn within_bound(&self) -> bool {
        self.exceedance <= self.bound + self.slack
    }
}

/// Empirical `P(YᵀAY − tr A > t)` for standard normal `Y`, with `t = n^α`
/// unless overridden, against the bound `exp(−n^α/8)`.
pub fn quadform_tail_probe(
    a: &QuadFormMatrix,
    alpha: f64,
    threshold: Option<f64>,
    trials: usize,
    seed: u64,
) -> Result<TailProbe> {
    if trials < 1000 {
        return Err(FexpError::Config(format!("at least 1000 trials required, got {trials}")));
    }
    let n = a.dim();
    if let QuadFormMatrix::Dense(m) = a {
        if !m.is_square() || (m - m.transpose()).abs().max() > 1e-12 {
            return Err(FexpError::Config("matrix must be symmetric".into()));
        }
        if (m.norm() - 1.0).abs() > 1e-9 {
            return Err(FexpError::Config(format!("Frobenius norm must be 1, got {}", m.norm())));
        }
    }
    let scale = (n as f64).powf(alpha);
    let t = threshold.unwrap_or(scale);
    let mut rng = rng_from_seed(seed);
    let mut y = vec![0.0f64; n];
    let mut hits = 0usize;
    for _ in 0..trials {
        for v in y.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        let centered = match a {
            QuadFormMatrix::ScaledIdentity { n } => {
                let s = (*n as f64).sqrt();
                y.iter().map(|v| v * v).sum::<f64>() / s - s
            }
            QuadFormMatrix::RankOne { n } => {
                let u = 1.0 / (*n as f64).sqrt();
                let z: f64 = y.iter().sum::<f64>() * u;
                z * z - 1.0
            }
            QuadFormMatrix::Dense(m) => {
                let yv = nalgebra::DVector::from_column_slice(&y);
                (yv.transpose() * m * &yv)[(0, 0)] - m.trace()
            }
        };
        if centered > t {
            hits += 1;
        }
    }
    let p = hits as f64 / trials as f64;
    let bound = (-scale / 8.0).exp();
    Ok(TailProbe {
        trials,
        threshold: t,
        exceedance: p,
        bound,
        slack: 3.0 * (bound * (1.0 - bound) / trials as f64).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::function::gamma::gamma;

    fn arfima_ratio(d: f64, h: usize) -> f64 {
        // Γ(h+d)Γ(1−d) / (Γ(h−d+1)Γ(d))
        let h = h as f64;
        gamma(h + d) * gamma(1.0 - d) / (gamma(h - d + 1.0) * gamma(d))
    }

    #[test]
    fn white_noise_is_identity() {
        let g = autocov_from_density(&ConstantDensity(1.0 / (2.0 * PI)), 5, &QuadratureConfig::default()).unwrap();
        assert!((g.values[0] - 1.0).abs() < 1e-12);
        assert!(g.values[1..].iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn fractional_autocov_matches_gamma_ratios() {
        for d in [-0.3, 0.1, 0.3] {
            let (g, _) = fractional_autocov(d, 50);
            for h in 1..=50 {
                assert!((g[h] / g[0] - arfima_ratio(d, h)).abs() < 1e-12, "d={d} h={h}");
            }
        }
    }

    #[test]
    fn fast_and_quadrature_routes_agree() {
        let m = FexpModel::new(0.3, vec![0.2, -0.4, 0.1, 0.05]).unwrap();
        let fast = fexp_autocov(&m, 200);
        let quad = autocov_from_density(&m, 200, &QuadratureConfig::default()).unwrap();
        for h in 0..=200 {
            assert!((fast.values[h] - quad.values[h]).abs() < 1e-9, "h={h}");
        }
        let (_, tail) = fexp_autocov_with_tail(&m, 3, 100);
        let quad_tail = autocov_from_density(&TailWeighted { model: m.clone(), k: 3 }, 100, &QuadratureConfig::default()).unwrap();
        for h in 0..=100 {
            assert!((tail.values[h] - quad_tail.values[h]).abs() < 1e-8, "h={h}: {} vs {}", tail.values[h], quad_tail.values[h]);
        }
    }

    #[test]
    fn derivative_route_matches_finite_difference_at_zero() {
        let (_, dg) = fractional_autocov(0.0, 6);
        let (gp, _) = fractional_autocov(1e-6, 6);
        let (gm, _) = fractional_autocov(-1e-6, 6);
        for h in 0..=6 {
            let fd = (gp[h] - gm[h]) / 2e-6;
            assert!((dg[h] - fd).abs() < 1e-6, "h={h}: {} vs {fd}", dg[h]);
        }
    }

    #[test]
    fn durbin_and_levinson_match_dense_cholesky() {
        let m = FexpModel::new(0.35, vec![0.1, 0.3]).unwrap();
        let n = 200;
        let g = fexp_autocov(&m, n);
        let x: Vec<f64> = (0..n).map(|i| ((i * 37 % 11) as f64 - 5.0) / 3.0).collect();
        let dense = dense_toeplitz(&g.values, n);
        let chol = dense.clone().cholesky().unwrap();
        let logdet: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let sol = chol.solve(&nalgebra::DVector::from_column_slice(&x));
        let quad = sol.dot(&nalgebra::DVector::from_column_slice(&x));
        let t = durbin_terms(&g.values, &x).unwrap();
        assert!((t.logdet - logdet).abs() < 1e-9 * logdet.abs());
        assert!((t.quad - quad).abs() < 1e-9 * quad);
        let (ld, y, q) = levinson_solve(&g.values, &x).unwrap();
        assert!((ld - logdet).abs() < 1e-9 * logdet.abs());
        assert!((q - quad).abs() < 1e-9 * quad);
        for i in 0..n {
            assert!((y[i] - sol[i]).abs() < 1e-8 * sol.amax());
        }
    }

    #[test]
    fn breakdown_reports_step() {
        let err = durbin_terms(&[1.0, 1.0, 1.0], &[0.0; 3]).unwrap_err();
        assert!(matches!(err, FexpError::NotPositiveDefinite { step: 1, .. }));
    }

    #[test]
    fn fft_matvec_matches_dense() {
        let row: Vec<f64> = (0..50).map(|h| 1.0 / (1.0 + h as f64)).collect();
        let x: Vec<f64> = (0..50).map(|i| (i as f64).sin()).collect();
        let y = toeplitz_matvec(&row, &x);
        let yd = dense_toeplitz(&row, 50) * nalgebra::DVector::from_column_slice(&x);
        for i in 0..50 {
            assert!((y[i] - yd[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn trace_of_constants() {
        let one = ConstantDensity(1.0);
        let t = trace_product(&[&one, &one], 16, &QuadratureConfig::default()).unwrap();
        assert!((t.exact - 4.0 * PI * PI).abs() < 1e-9);
        assert!((t.szego_limit - 4.0 * PI * PI).abs() < 1e-9);
    }

    #[test]
    fn inverse_residual_vanishes_for_white_noise() {
        let r = inverse_approx_residual(&ConstantDensity(1.0 / (2.0 * PI)), 32, &QuadratureConfig::default()).unwrap();
        assert!(r < 1e-6);
    }
}
