//! Exact Gaussian sampling of stationary series with an FEXP spectral density,
//! the periodogram, and the log-periodogram (GPH) estimator of `d`.

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{FexpError, Result};
use crate::rng::rng_from_seed;
use crate::spectral::{FexpModel, TruthSpec};
use crate::toeplitz::{fexp_autocov, AutocovSequence, DENSE_CAP};

/// Truncation order for truths with infinitely many coefficients.
pub const DEFAULT_K_TRUNC: usize = 4096;

/// Largest sup-norm of the neglected log-spectral tail accepted when
/// truncating a truth; it bounds the relative change of every `γ(h)`.
pub const TAIL_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Generator {
    CirculantEmbedding,
    Cholesky,
}

impl fmt::Display for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Generator::CirculantEmbedding => f.write_str("circulant-embedding"),
            Generator::Cholesky => f.write_str("cholesky"),
        }
    }
}

/// How to choose between the two exact generators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorChoice {
    /// Circulant embedding for powers of two or beyond the dense cap,
    /// Cholesky otherwise; Cholesky also when the embedding is not PSD.
    #[default]
    Auto,
    Circulant,
    Cholesky,
}

#[derive(Debug, Clone)]
pub struct SamplePath {
    pub values: Vec<f64>,
    pub seed: u64,
    pub truth: TruthSpec,
    pub generator: Generator,
}

impl SamplePath {
    pub fn n(&self) -> usize {
        self.values.len()
    }

    /// Hex SHA-256 of the truth description, used to tag exported files.
    pub fn truth_hash(&self) -> String {
        truth_hash(&self.truth)
    }

    /// One value per line under a `# seed=…, truth=…` header line.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(file, "# seed={}, truth_sha256={}, generator={}", self.seed, self.truth_hash(), self.generator)?;
        writeln!(file, "value")?;
        for v in &self.values {
            writeln!(file, "{v:e}")?;
        }
        file.flush()?;
        Ok(())
    }
}

pub fn truth_hash(truth: &TruthSpec) -> String {
    let digest = Sha256::digest(truth.describe().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Reads a path written by [`SamplePath::write_csv`] (or any one-column file
/// with optional `#` comments and a non-numeric header).
pub fn read_path_values(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let field = line.split(',').next().unwrap_or("").trim();
        match field.parse::<f64>() {
            Ok(v) => out.push(v),
            Err(_) if out.is_empty() => continue,
            Err(_) => {
                return Err(FexpError::Config(format!(
                    "{}: line {} is not a number: {line:?}",
                    path.display(),
                    i + 1
                )))
            }
        }
    }
    Ok(out)
}

/// FEXP model used to sample from `truth`: the finite support when there
/// is one, otherwise the first `k_trunc + 1` coefficients.
pub fn sampling_model(truth: &TruthSpec, k_trunc: usize) -> Result<FexpModel> {
    let k = match truth.support() {
        Some(s) => s,
        None => {
            let tail = truth.abs_tail_bound(k_trunc);
            if tail > TAIL_TOLERANCE {
                return Err(FexpError::Config(format!(
                    "k_trunc = {k_trunc} leaves a log-spectral tail of up to {tail:e} (> {TAIL_TOLERANCE:e})"
                )));
            }
            k_trunc
        }
    };
    FexpModel::new(truth.d_o, truth.theta_prefix(k))
}

enum Factor {
    Circulant { sqrt_eig: Vec<f64> },
    Cholesky { lower: DMatrix<f64> },
}

/// Precomputed square root of `T_n(f_o)`; draws are cheap once built.
pub struct PathSampler {
    truth: TruthSpec,
    n: usize,
    gamma: AutocovSequence,
    factor: Factor,
}

impl PathSampler {
    pub fn new(truth: &TruthSpec, n: usize, k_trunc: usize, choice: GeneratorChoice) -> Result<Self> {
        if n == 0 {
            return Err(FexpError::Config("n must be positive".into()));
        }
        let model = sampling_model(truth, k_trunc)?;
        let max_size = 8 * n.max(2);
        let gamma = fexp_autocov(&model, max_size / 2);
        let want_circulant = match choice {
            GeneratorChoice::Circulant => true,
            GeneratorChoice::Cholesky => false,
            GeneratorChoice::Auto => n.is_power_of_two() || n > DENSE_CAP,
        };
        let circulant = if want_circulant {
            circulant_sqrt_eigenvalues(&gamma.values, n, max_size)
        } else {
            None
        };
        let factor = match circulant {
            Some(sqrt_eig) => Factor::Circulant { sqrt_eig },
            None => {
                if n > DENSE_CAP {
                    return Err(FexpError::EmbeddingFailure { n, max_size });
                }
                let dense = DMatrix::from_fn(n, n, |i, j| gamma.values[i.abs_diff(j)]);
                let chol = dense.cholesky().ok_or(FexpError::NotPositiveDefinite {
                    step: 0,
                    pivot: f64::NAN,
                })?;
                Factor::Cholesky { lower: chol.l() }
            }
        };
        let mut gamma = gamma;
        gamma.values.truncate(n);
        Ok(Self {
            truth: truth.clone(),
            n,
            gamma,
            factor,
        })
    }

    pub fn generator(&self) -> Generator {
        match self.factor {
            Factor::Circulant { .. } => Generator::CirculantEmbedding,
            Factor::Cholesky { .. } => Generator::Cholesky,
        }
    }

    /// `γ(0..n)` of the sampled process.
    pub fn autocov(&self) -> &AutocovSequence {
        &self.gamma
    }

    pub fn sample(&self, seed: u64) -> SamplePath {
        let mut rng = rng_from_seed(seed);
        let values = match &self.factor {
            Factor::Circulant { sqrt_eig } => {
                let m = sqrt_eig.len();
                let mut w: Vec<Complex64> = sqrt_eig
                    .iter()
                    .map(|s| {
                        let re: f64 = StandardNormal.sample(&mut rng);
                        let im: f64 = StandardNormal.sample(&mut rng);
                        Complex64::new(re * s, im * s)
                    })
                    .collect();
                FftPlanner::<f64>::new().plan_fft_forward(m).process(&mut w);
                w[..self.n].iter().map(|z| z.re).collect()
            }
            Factor::Cholesky { lower } => {
                let z = nalgebra::DVector::from_fn(self.n, |_, _| StandardNormal.sample(&mut rng));
                (lower * z).as_slice().to_vec()
            }
        };
        SamplePath {
            values,
            seed,
            truth: self.truth.clone(),
            generator: self.generator(),
        }
    }
}

/// `sqrt(λ_j / m)` of the smallest PSD circulant embedding of size
/// `2(n−1)·2^i ≤ max_size`, if any.
fn circulant_sqrt_eigenvalues(gamma: &[f64], n: usize, max_size: usize) -> Option<Vec<f64>> {
    let mut m = (2 * (n.max(2) - 1)).max(2);
    let mut planner = FftPlanner::<f64>::new();
    while m <= max_size {
        let half = m / 2;
        let mut c: Vec<Complex64> = (0..m)
            .map(|i| Complex64::new(gamma[if i <= half { i } else { m - i }], 0.0))
            .collect();
        planner.plan_fft_forward(m).process(&mut c);
        let max = c.iter().map(|z| z.re).fold(f64::MIN, f64::max);
        let min = c.iter().map(|z| z.re).fold(f64::MAX, f64::min);
        if min >= -1e-10 * max {
            return Some(c.iter().map(|z| (z.re.max(0.0) / m as f64).sqrt()).collect());
        }
        m *= 2;
    }
    None
}

/// One exact draw of `X_1..X_n` with covariance `γ(|l−m|) = ∫e^{i(l−m)x}f_o`.
pub fn sample_path(truth: &TruthSpec, n: usize, k_trunc: usize, seed: u64) -> Result<SamplePath> {
    Ok(PathSampler::new(truth, n, k_trunc, GeneratorChoice::Auto)?.sample(seed))
}

/// `I(λ_j) = |Σ_t X_t e^{itλ_j}|² / (2πn)` at `λ_j = 2πj/n`, `j = 1..⌊n/2⌋`.
pub fn periodogram(values: &[f64]) -> Result<Vec<(f64, f64)>> {
    let n = values.len();
    if n < 8 {
        return Err(FexpError::Config(format!("periodogram needs n >= 8, got {n}")));
    }
    let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    FftPlanner::<f64>::new().plan_fft_forward(n).process(&mut buf);
    let scale = 1.0 / (2.0 * PI * n as f64);
    Ok((1..=n / 2)
        .map(|j| (2.0 * PI * j as f64 / n as f64, buf[j].norm_sqr() * scale))
        .collect())
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GphEstimate {
    pub d: f64,
    pub std_error: f64,
    pub bandwidth: usize,
    /// False when the estimate falls outside `(−½, ½)`.
    pub in_range: bool,
}

/// Log-periodogram regression of `log I(λ_j)` on `−log(4 sin²(λ_j/2))` over
/// the first `bandwidth` Fourier frequencies.
pub fn gph_estimate(values: &[f64], bandwidth: usize) -> Result<GphEstimate> {
    let n = values.len();
    if bandwidth < 2 || bandwidth > n / 4 {
        return Err(FexpError::Config(format!(
            "bandwidth must lie in [2, n/4] = [2, {}], got {bandwidth}",
            n / 4
        )));
    }
    let pg = periodogram(values)?;
    let peak = pg.iter().map(|p| p.1).fold(0.0, f64::max);
    let used: Vec<(f64, f64)> = pg[..bandwidth]
        .iter()
        .filter(|(_, i)| *i > 1e-300 && *i > peak * 1e-28)
        .map(|&(l, i)| (-(4.0 * (0.5 * l).sin().powi(2)).ln(), i.ln()))
        .collect();
    if used.len() < 2 {
        return Err(FexpError::DegenerateRegression(
            "fewer than two nonzero periodogram ordinates in the band".into(),
        ));
    }
    let m = used.len() as f64;
    let xbar = used.iter().map(|p| p.0).sum::<f64>() / m;
    let ybar = used.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = used.iter().map(|p| (p.0 - xbar).powi(2)).sum();
    let sxy: f64 = used.iter().map(|p| (p.0 - xbar) * (p.1 - ybar)).sum();
    if sxx <= 0.0 {
        return Err(FexpError::DegenerateRegression("regressor has no spread".into()));
    }
    let d = sxy / sxx;
    // Var(log I) = π²/6 for the log of an exponential ordinate.
    let std_error = (PI * PI / 6.0 / sxx).sqrt();
    Ok(GphEstimate {
        d,
        std_error,
        bandwidth,
        in_range: d > -0.5 && d < 0.5,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn white_noise_has_unit_variance() {
        let truth = TruthSpec::finite(0.0, vec![-(2.0 * PI).ln()], 2.0, 10.0);
        let s = PathSampler::new(&truth, 1024, DEFAULT_K_TRUNC, GeneratorChoice::Auto).unwrap();
        let mut sum2 = 0.0;
        let mut count = 0.0;
        for seed in 0..100 {
            for v in s.sample(seed).values {
                sum2 += v * v;
                count += 1.0;
            }
        }
        let var = sum2 / count;
        assert!((var - 1.0).abs() < 0.01, "{var}");
    }

    #[test]
    fn reproducible_given_seed() {
        let truth = TruthSpec::finite(0.3, vec![0.0, 0.2], 2.0, 10.0);
        let a = sample_path(&truth, 256, DEFAULT_K_TRUNC, 7).unwrap();
        let b = sample_path(&truth, 256, DEFAULT_K_TRUNC, 7).unwrap();
        assert_eq!(a.values, b.values);
        assert_eq!(a.generator, Generator::CirculantEmbedding);
        let c = sample_path(&truth, 300, DEFAULT_K_TRUNC, 7).unwrap();
        assert_eq!(c.generator, Generator::Cholesky);
    }

    #[test]
    fn periodogram_of_cosine_peaks_at_its_frequency() {
        let n = 64;
        let x: Vec<f64> = (0..n).map(|t| (2.0 * PI * 5.0 * t as f64 / n as f64).cos()).collect();
        let pg = periodogram(&x).unwrap();
        let argmax = pg.iter().enumerate().max_by(|a, b| a.1 .1.total_cmp(&b.1 .1)).unwrap().0;
        assert_eq!(argmax + 1, 5);
        let flat = periodogram(&[3.0; 16]).unwrap();
        assert!(flat.iter().all(|p| p.1 < 1e-20));
    }

    #[test]
    fn gph_flags_trend() {
        let x: Vec<f64> = (0..1024).map(|t| t as f64).collect();
        let est = gph_estimate(&x, 32).unwrap();
        assert!(!est.in_range);
        assert!(gph_estimate(&[0.0; 64], 8).is_err());
    }
}
