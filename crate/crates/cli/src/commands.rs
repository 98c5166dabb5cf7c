//! The four subcommands. Each resolves everything that can fail on bad
//! input before creating the output directory.

use fexp_core::inference::{
    bvm_study, posterior_d, suboptimality_experiment, BvmStudyConfig, LikelihoodKind, Prior, RateStudyConfig,
};
use fexp_core::simulate::{read_path_values, truth_hash, Generator, PathSampler};
use fexp_core::spectral::{PriorKind, TruthSpec};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::output::{write_json, CsvWriter, Manifest};

fn likelihood_label(kind: LikelihoodKind) -> String {
    match kind {
        LikelihoodKind::Exact => "exact".into(),
        LikelihoodKind::Whittle => "whittle".into(),
        LikelihoodKind::Flat => "flat".into(),
    }
}

fn manifest(cfg: &ExperimentConfig, command: &'static str, truth: &TruthSpec) -> Manifest {
    let mut notes = Vec::new();
    if cfg.experiment.likelihood == LikelihoodKind::Whittle {
        notes.push("likelihood: Whittle surrogate in place of the exact Gaussian likelihood".into());
    }
    Manifest {
        command,
        config_sha256: cfg.hash(),
        config: serde_json::to_value(cfg.canonical()).expect("config serializes"),
        truth_sha256: truth_hash(truth),
        likelihood: likelihood_label(cfg.experiment.likelihood),
        notes,
        files: Vec::new(),
    }
}

fn prepare_out(cfg: &ExperimentConfig) -> Result<std::path::PathBuf, CliError> {
    let out = cfg.out_dir();
    std::fs::create_dir_all(&out)?;
    Ok(out)
}

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

pub fn simulate(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let truth = cfg.truth.build();
    let ex = &cfg.experiment;
    let samplers = ex
        .n
        .iter()
        .map(|&n| PathSampler::new(&truth, n, ex.k_trunc, ex.generator.into()).map_err(usage))
        .collect::<Result<Vec<_>, _>>()?;
    let out = prepare_out(cfg)?;
    let hash = cfg.hash();
    let mut man = manifest(cfg, "simulate", &truth);
    man.likelihood = "none".into();
    man.notes.clear();
    let mut seeds = Vec::new();
    for (sampler, &n) in samplers.iter().zip(&ex.n) {
        let gen = sampler.generator();
        if gen == Generator::Cholesky {
            let reason = if n.is_power_of_two() {
                "circulant embedding was not nonnegative definite"
            } else {
                "n is not a power of two"
            };
            man.notes.push(format!("n={n}: generator=cholesky ({reason})"));
        } else {
            man.notes.push(format!("n={n}: generator={gen}"));
        }
        let paths: Vec<_> = (0..ex.replicates)
            .into_par_iter()
            .map(|r| sampler.sample(cfg.replicate_seed(n, r)))
            .collect();
        for (r, p) in paths.iter().enumerate() {
            let name = format!("path_n{n}_r{r:03}.csv");
            let extra = format!(
                "n={n}, replicate={r}, seed={}, truth_sha256={}, generator={}",
                p.seed,
                p.truth_hash(),
                p.generator
            );
            let mut w = CsvWriter::create(&out.join(&name), &hash, &extra, &["value"])?;
            for v in &p.values {
                w.row(&[format!("{v:e}")])?;
            }
            w.finish()?;
            man.files.push(name.into());
            seeds.push(SeedRecord {
                n,
                replicate: r,
                seed: p.seed,
            });
        }
    }
    write_json(&out.join("seeds.json"), &seeds)?;
    man.files.push("seeds.json".into());
    write_json(&out.join("manifest.json"), &man)
}

#[derive(Serialize)]
struct SeedRecord {
    n: usize,
    replicate: usize,
    seed: u64,
}

#[derive(Serialize)]
struct ChainRecord {
    k: usize,
    file: String,
    seed: u64,
    acceptance_d: f64,
    acceptance_theta: f64,
    log_evidence: Option<f64>,
    evidence_warning: Option<String>,
}

#[derive(Serialize)]
struct FitReport<'a> {
    config_sha256: String,
    data_file: String,
    n: usize,
    likelihood: String,
    prior: PriorKind,
    sobolev_radius: f64,
    k_max: usize,
    summary: &'a fexp_core::inference::PosteriorSummary,
    chains: Vec<ChainRecord>,
}

pub fn fit(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let truth = cfg.truth.build();
    let ex = &cfg.experiment;
    let data = ex
        .data
        .as_deref()
        .ok_or_else(|| CliError::Usage("fit needs a data file (--data or experiment.data)".into()))?;
    let values = read_path_values(data).map_err(|e| usage(format!("{}: {e}", data.display())))?;
    if values.len() < 16 {
        return Err(usage(format!("{}: need at least 16 observations, got {}", data.display(), values.len())));
    }
    let prior = Prior::new(cfg.prior.clone(), values.len(), Some(&truth)).map_err(usage)?;
    let fit = posterior_d(&values, &prior, ex.iters, ex.seed, ex.likelihood)?;
    let out = prepare_out(cfg)?;
    let hash = cfg.hash();
    let mut man = manifest(cfg, "fit", &truth);
    let mut chains = Vec::new();
    for (chain, ev) in fit.chains.iter().zip(&fit.evidences) {
        let name = format!("chain_k{}.csv", chain.k);
        let mut header = vec!["iteration".to_string(), "d".to_string()];
        header.extend((0..=chain.k).map(|j| format!("theta_{j}")));
        header.push("log_post".into());
        let refs: Vec<&str> = header.iter().map(String::as_str).collect();
        let mut w = CsvWriter::create(&out.join(&name), &hash, &format!("seed={}", chain.seed), &refs)?;
        for (i, (s, lp)) in chain.draws.iter().zip(&chain.log_post).enumerate() {
            let mut row = vec![(chain.warmup + i).to_string()];
            row.extend(s.iter().map(|v| fmt(*v)));
            row.push(fmt(*lp));
            w.row(&row)?;
        }
        w.finish()?;
        man.files.push(name.clone().into());
        chains.push(ChainRecord {
            k: chain.k,
            file: name,
            seed: chain.seed,
            acceptance_d: chain.acceptance_d,
            acceptance_theta: chain.acceptance_theta,
            log_evidence: ev.as_ref().map(|e| e.log_evidence),
            evidence_warning: ev.as_ref().and_then(|e| e.warning.clone()),
        });
    }
    let report = FitReport {
        config_sha256: hash,
        data_file: data.display().to_string(),
        n: values.len(),
        likelihood: likelihood_label(ex.likelihood),
        prior: prior.kind(),
        sobolev_radius: prior.l,
        k_max: prior.k_max,
        summary: &fit.summary,
        chains,
    };
    write_json(&out.join("summary.json"), &report)?;
    man.files.push("summary.json".into());
    write_json(&out.join("manifest.json"), &man)
}

#[derive(Serialize)]
struct BvmOutput {
    config_sha256: String,
    likelihood: String,
    studies: Vec<fexp_core::inference::BvmStudy>,
}

pub fn bvm(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let truth = cfg.truth.build();
    let ex = &cfg.experiment;
    if cfg.prior.kind == PriorKind::C {
        return Err(usage("bvm needs prior kind A or B"));
    }
    for &n in &ex.n {
        Prior::new(cfg.prior.clone(), n, Some(&truth)).map_err(usage)?;
    }
    let mut studies = Vec::new();
    for &n in &ex.n {
        let study_cfg = BvmStudyConfig {
            n,
            replicates: ex.replicates,
            iters: ex.iters,
            seed: fexp_core::rng::replicate_seed(ex.seed, n as u64),
            likelihood: ex.likelihood,
            prior: cfg.prior.clone(),
        };
        studies.push(bvm_study(&truth, &study_cfg)?);
    }
    let out = prepare_out(cfg)?;
    let hash = cfg.hash();
    let mut man = manifest(cfg, "bvm", &truth);
    let mut w = CsvWriter::create(
        &out.join("bvm_replicates.csv"),
        &hash,
        "",
        &[
            "n",
            "k",
            "replicate",
            "path_seed",
            "chain_seed",
            "ks_to_normal",
            "ks_uncentered",
            "z_mean",
            "var_ratio",
            "acceptance_d",
        ],
    )?;
    for s in &studies {
        for r in &s.replicates {
            w.row(&[
                s.n.to_string(),
                s.k.to_string(),
                r.replicate.to_string(),
                r.path_seed.to_string(),
                r.chain_seed.to_string(),
                fmt(r.report.ks_to_normal),
                fmt(r.report.ks_uncentered),
                fmt(r.report.z_mean),
                fmt(r.report.var_ratio),
                fmt(r.acceptance_d),
            ])?;
        }
    }
    w.finish()?;
    write_json(
        &out.join("bvm_report.json"),
        &BvmOutput {
            config_sha256: hash,
            likelihood: likelihood_label(ex.likelihood),
            studies,
        },
    )?;
    man.files.extend(["bvm_replicates.csv".into(), "bvm_report.json".into()]);
    write_json(&out.join("manifest.json"), &man)
}

pub fn rate_study(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let truth = cfg.truth.build();
    let ex = &cfg.experiment;
    let study_cfg = RateStudyConfig {
        ns: ex.n.clone(),
        replicates: ex.replicates,
        iters: ex.iters,
        seed: ex.seed,
        likelihood: ex.likelihood,
        t: cfg.prior.t,
        l: cfg.prior.l,
        k_a: cfg.prior.k_a,
    };
    study_cfg.validate_with(&truth).map_err(usage)?;
    let study = suboptimality_experiment(&truth, &study_cfg)?;
    let out = prepare_out(cfg)?;
    let hash = cfg.hash();
    let mut man = manifest(cfg, "rate-study", &truth);
    man.notes.push(format!("common k_B = {}", study.k_b));
    let mut w = CsvWriter::create(
        &out.join("rate_table.csv"),
        &hash,
        "",
        &[
            "n",
            "prior",
            "k_used",
            "rmse",
            "mean_abs_error",
            "median_posterior_rmse",
            "analytic_bias",
            "delta_n",
            "w_n",
            "eps_n",
        ],
    )?;
    for r in &study.rows {
        w.row(&[
            r.n.to_string(),
            r.prior.to_string(),
            r.k_used.to_string(),
            fmt(r.rmse),
            fmt(r.mean_abs_error),
            fmt(r.median_posterior_rmse),
            fmt(r.analytic_bias),
            fmt(r.delta_n),
            fmt(r.w_n),
            fmt(r.eps_n),
        ])?;
    }
    w.finish()?;
    let mut w = CsvWriter::create(
        &out.join("rate_pairs.csv"),
        &hash,
        "",
        &[
            "n",
            "replicate",
            "path_seed",
            "error_a",
            "error_b",
            "posterior_rmse_a",
            "posterior_rmse_b",
        ],
    )?;
    for p in &study.pairs {
        w.row(&[
            p.n.to_string(),
            p.replicate.to_string(),
            p.path_seed.to_string(),
            fmt(p.error_a),
            fmt(p.error_b),
            fmt(p.posterior_rmse_a),
            fmt(p.posterior_rmse_b),
        ])?;
    }
    w.finish()?;
    write_json(&out.join("rate_study.json"), &RateOutput { config_sha256: hash, study: &study })?;
    man.files
        .extend(["rate_table.csv".into(), "rate_pairs.csv".into(), "rate_study.json".into()]);
    write_json(&out.join("manifest.json"), &man)
}

#[derive(Serialize)]
struct RateOutput<'a> {
    config_sha256: String,
    #[serde(flatten)]
    study: &'a fexp_core::inference::RateStudy,
}

