//! Priors, samplers, and posterior summaries for `(d, k, θ)`.

pub mod bvm;
pub mod mcmc;
pub mod posterior;
pub mod prior;
pub mod rate;
pub mod stats;

pub use bvm::{bvm_diagnostic, bvm_study, BvmReport, BvmStudy, BvmStudyConfig};
pub use mcmc::{run_adaptive_mh, ChainOutput, LogTarget, MhConfig};
pub use posterior::{
    evidence_laplace, mh_within_k, posterior_d, Evidence, LikelihoodKind, PosteriorChain, PosteriorFit,
    PosteriorSummary,
};
pub use prior::{prior_logdensity, KLaw, Prior, PriorConfig, ThetaFamily};
pub use rate::{suboptimality_experiment, RateStudy, RateStudyConfig};
