//! Exact Gaussian and Whittle log-likelihoods, the score decomposition for
//! `d` along the projection path, and the reference normal parameters.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{FexpError, Result};
use crate::simulate::{periodogram, sampling_model, DEFAULT_K_TRUNC};
use crate::spectral::{bias_term, project_theta, r_tail, FexpModel, TruthSpec};
use crate::toeplitz::{dense_toeplitz, durbin_terms, fexp_autocov, fexp_autocov_with_tail, DENSE_CAP};

/// Largest `n` for which the exact likelihood is attempted.
pub const LEVINSON_CAP: usize = 16_384;

fn failure(model: &FexpModel, reason: impl Into<String>) -> FexpError {
    FexpError::LikelihoodFailure {
        d: model.d,
        theta: model.theta.clone(),
        reason: reason.into(),
    }
}

/// `l_n(f) = −(n/2) log 2π − ½ log det T_n(f) − ½ Xᵀ T_n(f)^{-1} X`.
pub fn exact_loglik(x: &[f64], model: &FexpModel) -> Result<f64> {
    let n = x.len();
    if n > LEVINSON_CAP {
        return Err(failure(model, format!("n = {n} exceeds the exact-likelihood cap {LEVINSON_CAP}")));
    }
    let gamma = fexp_autocov(model, n.saturating_sub(1));
    if gamma.values.iter().any(|g| !g.is_finite()) {
        return Err(failure(model, "non-finite autocovariance"));
    }
    let terms = durbin_terms(&gamma.values, x).map_err(|e| failure(model, e.to_string()))?;
    Ok(-0.5 * n as f64 * (2.0 * PI).ln() - 0.5 * terms.logdet - 0.5 * terms.quad)
}

/// Periodogram ordinates at `λ_j = 2πj/n`, `j = 1..⌊n/2⌋`, precomputed
/// once per path for repeated Whittle evaluations.
#[derive(Debug, Clone)]
pub struct WhittleData {
    pub n: usize,
    pub freqs: Vec<f64>,
    pub ordinates: Vec<f64>,
}

impl WhittleData {
    pub fn new(x: &[f64]) -> Result<Self> {
        let pg = periodogram(x)?;
        Ok(Self {
            n: x.len(),
            freqs: pg.iter().map(|p| p.0).collect(),
            ordinates: pg.iter().map(|p| p.1).collect(),
        })
    }

    /// `−(n/2) log 2π − Σ_j [log(2π f(λ_j)) + I(λ_j)/f(λ_j)]`.
    pub fn loglik(&self, model: &FexpModel) -> f64 {
        let mut acc = 0.0;
        for (&l, &i) in self.freqs.iter().zip(&self.ordinates) {
            let lf = model.log_density(l);
            acc += (2.0 * PI).ln() + lf + i * (-lf).exp();
        }
        -0.5 * self.n as f64 * (2.0 * PI).ln() - acc
    }
}

/// Whittle approximation to [`exact_loglik`].
pub fn whittle_loglik(x: &[f64], model: &FexpModel) -> Result<f64> {
    Ok(WhittleData::new(x)?.loglik(model))
}

/// `l_n(d, k, θ̄_{d,k})`, the exact likelihood along the projection path.
pub fn profile_loglik(x: &[f64], truth: &TruthSpec, d: f64, k: usize) -> Result<f64> {
    exact_loglik(x, &FexpModel::new(d, project_theta(truth, d, k))?)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ScoreDecomposition {
    /// Centered quadratic form `½(XᵀAX − tr[T_n(f_o) A])`.
    pub s: f64,
    /// Deterministic part `−½ tr[(T_n(f_{d_o,k}) − T_n(f_o)) A]`.
    pub d: f64,
    pub total: f64,
    /// `n r_k / 2`.
    pub var_s_theory: f64,
}

/// Result of [`score_info_d`].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ScoreInfo {
    pub score: ScoreDecomposition,
    /// Central second difference of `d ↦ l_n(d, k, θ̄_{d,k})` at `d_o`.
    pub info_fd: f64,
    /// `−n r_k / 2`.
    pub info_theory: f64,
}

/// Dense matrices behind the score decomposition, shared across replicate
/// paths with the same `(truth, n, k)`.
pub struct ScoreOperator {
    pub n: usize,
    pub k: usize,
    truth: TruthSpec,
    a: DMatrix<f64>,
    trace_to_a: f64,
    d_part: f64,
    /// `tr[(T^{-1} T')²]`, the exact variance of the quadratic form is half of it.
    pub trace_sq: f64,
}

impl ScoreOperator {
    pub fn new(truth: &TruthSpec, n: usize, k: usize) -> Result<Self> {
        if n > DENSE_CAP {
            return Err(FexpError::DenseCapExceeded { n, cap: DENSE_CAP });
        }
        let fk = truth.truncated_model(k);
        let (gk, gh) = fexp_autocov_with_tail(&fk, k, n);
        let go = fexp_autocov(&sampling_model(truth, DEFAULT_K_TRUNC)?, n);
        let t = dense_toeplitz(&gk.values, n);
        let th = dense_toeplitz(&gh.values, n);
        let to = dense_toeplitz(&go.values, n);
        let chol = t.clone().cholesky().ok_or(FexpError::NotPositiveDefinite {
            step: 0,
            pivot: f64::NAN,
        })?;
        let b = chol.solve(&th); // T^{-1} T'
        let a = chol.solve(&b.transpose()); // T^{-1} T' T^{-1} (symmetric)
        let a = (&a + a.transpose()) * 0.5;
        let trace_to_a = (&to * &a).trace();
        let trace_t_a = b.trace();
        let d_part = -0.5 * (trace_t_a - trace_to_a);
        let trace_sq = (&b * &b).trace();
        Ok(Self {
            n,
            k,
            truth: truth.clone(),
            a,
            trace_to_a,
            d_part,
            trace_sq,
        })
    }

    pub fn decompose(&self, x: &[f64]) -> Result<ScoreDecomposition> {
        if x.len() != self.n {
            return Err(FexpError::DimensionMismatch {
                expected: self.n,
                got: x.len(),
            });
        }
        let xv = DVector::from_column_slice(x);
        let quad = xv.dot(&(&self.a * &xv));
        let s = 0.5 * (quad - self.trace_to_a);
        Ok(ScoreDecomposition {
            s,
            d: self.d_part,
            total: s + self.d_part,
            var_s_theory: self.n as f64 * r_tail(self.k) / 2.0,
        })
    }

    pub fn score_info(&self, x: &[f64]) -> Result<ScoreInfo> {
        let score = self.decompose(x)?;
        let h = 1e-4;
        let d0 = self.truth.d_o;
        let lp = profile_loglik(x, &self.truth, d0 + h, self.k)?;
        let l0 = profile_loglik(x, &self.truth, d0, self.k)?;
        let lm = profile_loglik(x, &self.truth, d0 - h, self.k)?;
        Ok(ScoreInfo {
            score,
            info_fd: (lp - 2.0 * l0 + lm) / (h * h),
            info_theory: -(self.n as f64) * r_tail(self.k) / 2.0,
        })
    }
}

/// Score decomposition and finite-difference information for one path.
pub fn score_info_d(x: &[f64], truth: &TruthSpec, k: usize) -> Result<ScoreInfo> {
    ScoreOperator::new(truth, x.len(), k)?.score_info(x)
}

/// Reference normal law of the posterior of `d`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BvmParams {
    pub center: f64,
    pub sd: f64,
    pub b_n_det: f64,
    pub k_used: usize,
}

/// Center `d_o + bias_term(k)` and spread `sqrt(2 / (n r_k))`.
pub fn bvm_params(truth: &TruthSpec, n: usize, k: usize) -> BvmParams {
    let b = bias_term(truth, k);
    BvmParams {
        center: truth.d_o + b,
        sd: (2.0 / (n as f64 * r_tail(k))).sqrt(),
        b_n_det: b,
        k_used: k,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::sample_path;

    #[test]
    fn white_noise_examples() {
        let wn = FexpModel::white_noise();
        let l = exact_loglik(&[0.0; 4], &wn).unwrap();
        assert!((l + 2.0 * (2.0 * PI).ln()).abs() < 1e-12);
        let l = exact_loglik(&[1.0, 1.0], &wn).unwrap();
        assert!((l + (2.0 * PI).ln() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn sign_flip_and_zero_padding_invariance() {
        let truth = TruthSpec::finite(0.2, vec![0.1, 0.3], 2.0, 10.0);
        let p = sample_path(&truth, 128, DEFAULT_K_TRUNC, 3).unwrap();
        let m = FexpModel::new(0.25, vec![0.0, 0.2]).unwrap();
        let neg: Vec<f64> = p.values.iter().map(|v| -v).collect();
        assert_eq!(exact_loglik(&p.values, &m).unwrap(), exact_loglik(&neg, &m).unwrap());
        let padded = m.padded(2);
        let a = exact_loglik(&p.values, &m).unwrap();
        let b = exact_loglik(&p.values, &padded).unwrap();
        assert!((a - b).abs() < 1e-12 * a.abs());
    }

    #[test]
    fn analytic_score_matches_finite_difference() {
        let truth = TruthSpec::finite(0.15, vec![0.2, 0.3, -0.1, 0.05], 2.0, 10.0);
        let n = 256;
        let op = ScoreOperator::new(&truth, n, 2).unwrap();
        for seed in 0..3 {
            let p = sample_path(&truth, n, DEFAULT_K_TRUNC, seed).unwrap();
            let dec = op.decompose(&p.values).unwrap();
            let h = 1e-4;
            let fd = (profile_loglik(&p.values, &truth, 0.15 + h, 2).unwrap()
                - profile_loglik(&p.values, &truth, 0.15 - h, 2).unwrap())
                / (2.0 * h);
            assert!((dec.total - fd).abs() < 1e-3 * fd.abs().max(1.0), "{} vs {fd}", dec.total);
        }
    }

    #[test]
    fn bvm_center_unbiased_for_finite_support() {
        let truth = TruthSpec::finite(0.2, vec![0.1, 0.3], 2.0, 10.0);
        let p = bvm_params(&truth, 4096, 4);
        assert_eq!(p.center, 0.2);
        assert!((p.sd - (2.0 / (4096.0 * r_tail(4))).sqrt()).abs() < 1e-15);
    }
}
