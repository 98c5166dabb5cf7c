//! Experiment configuration: a TOML file with `[truth]`, `[prior]` and
//! `[experiment]` sections, resolved and validated before any output is
//! written.

use std::path::{Path, PathBuf};

use fexp_core::inference::{LikelihoodKind, PriorConfig};
use fexp_core::rng::replicate_seed;
use fexp_core::simulate::{GeneratorChoice, DEFAULT_K_TRUNC};
use fexp_core::spectral::TruthSpec;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TruthRule {
    Finite,
    PowerLaw,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthSection {
    pub d_o: f64,
    pub beta: f64,
    pub l_o: f64,
    #[serde(default = "default_rule")]
    pub rule: TruthRule,
    /// Coefficients `θ_0, θ_1, …` for the finite rule.
    #[serde(default)]
    pub theta: Vec<f64>,
}

fn default_rule() -> TruthRule {
    TruthRule::Finite
}

impl TruthSection {
    pub fn build(&self) -> TruthSpec {
        match self.rule {
            TruthRule::Finite => TruthSpec::finite(self.d_o, self.theta.clone(), self.beta, self.l_o),
            TruthRule::PowerLaw => TruthSpec::power_law(self.d_o, self.beta, self.l_o),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorSetting {
    Auto,
    Circulant,
    Cholesky,
}

impl From<GeneratorSetting> for GeneratorChoice {
    fn from(g: GeneratorSetting) -> Self {
        match g {
            GeneratorSetting::Auto => GeneratorChoice::Auto,
            GeneratorSetting::Circulant => GeneratorChoice::Circulant,
            GeneratorSetting::Cholesky => GeneratorChoice::Cholesky,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    /// Sample sizes; `simulate` and `bvm` run every entry, `rate-study`
    /// treats it as the grid.
    pub n: Vec<usize>,
    #[serde(default = "one")]
    pub replicates: usize,
    #[serde(default = "default_iters")]
    pub iters: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub likelihood: LikelihoodKind,
    #[serde(default = "default_k_trunc")]
    pub k_trunc: usize,
    #[serde(default = "default_generator")]
    pub generator: GeneratorSetting,
    /// Observed series for `fit`.
    #[serde(default)]
    pub data: Option<PathBuf>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// Worker threads; all available cores when omitted.
    #[serde(default)]
    pub jobs: Option<usize>,
}

fn one() -> usize {
    1
}

fn default_iters() -> usize {
    4000
}

fn default_k_trunc() -> usize {
    DEFAULT_K_TRUNC
}

fn default_generator() -> GeneratorSetting {
    GeneratorSetting::Auto
}

/// The fully resolved configuration; its hash tags every output file.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentConfig {
    pub truth: TruthSection,
    pub prior: PriorConfig,
    pub experiment: ExperimentSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    truth: TruthSection,
    #[serde(default)]
    prior: Option<toml::Table>,
    experiment: ExperimentSection,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub whittle: bool,
    pub jobs: Option<usize>,
    pub data: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, overrides: &Overrides) -> Result<Self, CliError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))?;
        let mut table = raw.prior.unwrap_or_default();
        table
            .entry("beta")
            .or_insert(toml::Value::Float(raw.truth.beta));
        table
            .entry("kind")
            .or_insert(toml::Value::String("A".into()));
        let prior: PriorConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e| CliError::Usage(format!("config [prior]: {e}")))?;
        let mut experiment = raw.experiment;
        if let Some(out) = &overrides.out {
            experiment.out = Some(out.clone());
        }
        if let Some(seed) = overrides.seed {
            experiment.seed = seed;
        }
        if overrides.whittle {
            experiment.likelihood = LikelihoodKind::Whittle;
        }
        if let Some(j) = overrides.jobs {
            experiment.jobs = Some(j);
        }
        if let Some(d) = &overrides.data {
            experiment.data = Some(d.clone());
        }
        let cfg = Self {
            truth: raw.truth,
            prior,
            experiment,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text, overrides)
    }

    fn validate(&self) -> Result<(), CliError> {
        let usage = |m: String| CliError::Usage(m);
        self.truth.build().validate(self.prior.t).map_err(|e| usage(format!("truth: {e}")))?;
        self.prior.validate().map_err(|e| usage(format!("prior: {e}")))?;
        let ex = &self.experiment;
        if ex.n.is_empty() {
            return Err(usage("experiment.n: the n grid is empty".into()));
        }
        if ex.replicates == 0 {
            return Err(usage("experiment.replicates must be positive".into()));
        }
        if ex.iters < 1000 {
            return Err(usage(format!("experiment.iters must be >= 1000, got {}", ex.iters)));
        }
        if ex.jobs == Some(0) {
            return Err(usage("experiment.jobs must be positive".into()));
        }
        if ex.likelihood == LikelihoodKind::Flat {
            return Err(usage("experiment.likelihood must be exact or whittle".into()));
        }
        Ok(())
    }

    pub fn out_dir(&self) -> PathBuf {
        self.experiment.out.clone().unwrap_or_else(|| PathBuf::from("fexp-out"))
    }

    /// The configuration without settings that cannot change results
    /// (output directory, thread count).
    pub fn canonical(&self) -> Self {
        let mut c = self.clone();
        c.experiment.out = None;
        c.experiment.jobs = None;
        c
    }

    /// Hex SHA-256 of the canonical JSON form of the resolved configuration.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(&self.canonical()).expect("config serializes");
        Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Seed of replicate `r` at sample size `n`.
    pub fn replicate_seed(&self, n: usize, r: usize) -> u64 {
        replicate_seed(replicate_seed(self.experiment.seed, n as u64), r as u64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
[truth]
d_o = 0.2
beta = 3.0
l_o = 10.0
theta = [0.1, 0.3]

[experiment]
n = [256]
"#;

    #[test]
    fn defaults_and_overrides() {
        let cfg = ExperimentConfig::from_toml(BASE, &Overrides::default()).unwrap();
        assert_eq!(cfg.prior.beta, 3.0);
        assert_eq!(cfg.experiment.iters, 4000);
        let h = cfg.hash();
        let o = Overrides {
            seed: Some(9),
            whittle: true,
            ..Default::default()
        };
        let cfg2 = ExperimentConfig::from_toml(BASE, &o).unwrap();
        assert_eq!(cfg2.experiment.likelihood, LikelihoodKind::Whittle);
        assert_ne!(cfg2.hash(), h);
        assert_ne!(cfg.replicate_seed(256, 0), cfg.replicate_seed(256, 1));
    }

    #[test]
    fn rejects_out_of_range_d() {
        let bad = BASE.replace("d_o = 0.2", "d_o = 0.6");
        assert!(matches!(
            ExperimentConfig::from_toml(&bad, &Overrides::default()),
            Err(CliError::Usage(_))
        ));
    }
}
