use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use ldp_audit::io::{self, CorpusFormat, ResultFile};
use ldp_audit::mechanisms::{snr_from_parts, sentence_budget};
use ldp_audit::{
    ceiling as ceiling_value, run_configured, run_sweep, AdversarySpec, AuditConfig, AuditData, AuditResult,
    CandidatePool, EngineOptions, EstimatorMode, GrrParams, MechanismParams, MechanismSpec, NoiseFamily,
    RemoteJudgeConfig, TokenEmParams, VectorNoiseParams,
};
use serde::Serialize;

use crate::args::{
    AttackKind, CeilingFlags, ConvertFlags, EstimatorKind, FormatKind, MechanismKind, NoiseKind, RunFlags,
    SnrFlags,
};
use crate::UsageError;

const DEFAULT_EMBEDDING_DIM: usize = 64;
const DEFAULT_DELTA_MECH: f64 = 1e-5;
const DEFAULT_OUT: &str = "ldp-audit-out";

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn noise_family(kind: NoiseKind) -> NoiseFamily {
    match kind {
        NoiseKind::Laplace => NoiseFamily::LaplaceVector,
        NoiseKind::Gaussian => NoiseFamily::Gaussian,
    }
}

/// What a run will do, printed before it starts.
#[derive(Serialize)]
struct Resolved<'a> {
    dataset: &'a Path,
    format: &'static str,
    embeddings: String,
    workers: usize,
    out: &'a Path,
    #[serde(skip_serializing_if = "Option::is_none")]
    epsilons: Option<&'a [f64]>,
    audit: &'a AuditConfig,
}

struct Prepared {
    config: AuditConfig,
    data: AuditData,
    options: EngineOptions,
    out: PathBuf,
    flags: RunFlags,
}

fn merge_config_file(flags: RunFlags) -> Result<RunFlags> {
    let Some(path) = flags.config.clone() else {
        return Ok(flags);
    };
    let text = fs::read_to_string(&path)
        .with_context(|| format!("reading config file {}", path.display()))
        .map_err(|e| usage(format!("{e:#}")))?;
    let file: RunFlags =
        toml::from_str(&text).map_err(|e| usage(format!("config file {}: {e}", path.display())))?;
    Ok(flags.or(file))
}

fn build_mechanism(flags: &RunFlags, kind: MechanismKind, epsilon: f64, corpus_len: usize) -> Result<MechanismSpec> {
    let reject = |set: bool, flag: &str| -> Result<()> {
        if set {
            Err(usage(format!("{flag} does not apply to mechanism {kind:?}")))
        } else {
            Ok(())
        }
    };
    if kind != MechanismKind::Grr {
        reject(flags.g.is_some(), "--g")?;
    }
    if kind != MechanismKind::VectorNoise {
        reject(flags.clip.is_some(), "--clip")?;
        reject(flags.noise.is_some(), "--noise")?;
        reject(flags.delta_mech.is_some(), "--delta-mech")?;
    }
    if kind != MechanismKind::TokenEm {
        reject(flags.sensitivity.is_some(), "--sensitivity")?;
        reject(flags.pool_size.is_some(), "--pool-size")?;
    }
    let params = match kind {
        MechanismKind::Grr => MechanismParams::Grr(GrrParams {
            domain_size: flags.g.unwrap_or(corpus_len as u64),
        }),
        MechanismKind::TokenEm => MechanismParams::TokenEm(TokenEmParams {
            sensitivity: flags.sensitivity,
            candidate_pool: flags
                .pool_size
                .map_or(CandidatePool::FullVocabulary, |size| CandidatePool::Nearest { size }),
        }),
        MechanismKind::VectorNoise => {
            let noise = flags.noise.unwrap_or_default();
            MechanismParams::VectorNoise(VectorNoiseParams {
                clip_norm: flags.clip.unwrap_or(1.0),
                noise_family: noise_family(noise),
                delta_mech: match noise {
                    NoiseKind::Gaussian => flags.delta_mech.unwrap_or(DEFAULT_DELTA_MECH),
                    NoiseKind::Laplace => 0.0,
                },
            })
        }
        MechanismKind::Identity => MechanismParams::Identity,
        MechanismKind::Constant => MechanismParams::Constant,
    };
    Ok(MechanismSpec::new(epsilon, params))
}

fn build_adversary(flags: &RunFlags) -> Result<AdversarySpec> {
    let attack = flags.attack.unwrap_or(AttackKind::Embedding);
    let judge_flags = flags.judge_url.is_some()
        || flags.judge_model.is_some()
        || flags.judge_key_env.is_some()
        || flags.judge_timeout.is_some()
        || flags.judge_retries.is_some()
        || flags.judge_max_in_flight.is_some();
    if attack != AttackKind::Judge && judge_flags {
        return Err(usage("--judge-* flags require --attack judge"));
    }
    Ok(match attack {
        AttackKind::Embedding => AdversarySpec::EmbeddingNn,
        AttackKind::Surface => AdversarySpec::SurfaceOverlap,
        AttackKind::Internal => AdversarySpec::InternalEmbedding,
        AttackKind::ValueMap => AdversarySpec::ValueMap,
        AttackKind::Judge => {
            let url = flags
                .judge_url
                .clone()
                .ok_or_else(|| usage("--attack judge requires --judge-url"))?;
            let model = flags
                .judge_model
                .clone()
                .ok_or_else(|| usage("--attack judge requires --judge-model"))?;
            let mut cfg = RemoteJudgeConfig::new(url, model);
            if let Some(v) = &flags.judge_key_env {
                cfg.api_key_env_var = v.clone();
            }
            if let Some(v) = flags.judge_timeout {
                cfg.timeout_secs = v;
            }
            if let Some(v) = flags.judge_retries {
                cfg.max_retries = v;
            }
            if let Some(v) = flags.judge_max_in_flight {
                cfg.max_in_flight = v;
            }
            AdversarySpec::RemoteJudge(cfg)
        }
    })
}

fn load_data(flags: &RunFlags, dataset: &Path, format: CorpusFormat, seed: u64) -> Result<(AuditData, String)> {
    if let Some(path) = &flags.embeddings {
        if flags.embedding_dim.is_some() {
            return Err(usage("--embedding-dim only applies without --embeddings"));
        }
        let table = io::load_embeddings(path)?;
        let corpus = io::load_corpus(dataset, format, Some(&table))?;
        return Ok((AuditData::new(corpus, table)?, path.display().to_string()));
    }
    let dim = flags.embedding_dim.unwrap_or(DEFAULT_EMBEDDING_DIM);
    let corpus = io::load_corpus(dataset, format, None)?;
    let vocab = corpus
        .vocab()
        .map_or(corpus.max_token_id() as usize + 1, <[String]>::len);
    let table = io::synthetic_embeddings(vocab, dim, seed)?;
    Ok((
        AuditData::new(corpus, table)?,
        format!("synthetic (vocab {vocab}, dim {dim}, seed {seed})"),
    ))
}

fn prepare(flags: RunFlags, command: &str) -> Result<Prepared> {
    let flags = merge_config_file(flags)?;
    let kind = flags.mechanism.ok_or_else(|| usage("--mechanism is required"))?;
    let dataset = flags.dataset.clone().ok_or_else(|| usage("--dataset is required"))?;
    let epsilon = match command {
        "sweep" => {
            if flags.epsilon.is_some() {
                return Err(usage("sweep takes --epsilons, not --epsilon"));
            }
            let grid = flags
                .epsilons
                .as_deref()
                .filter(|g| !g.is_empty())
                .ok_or_else(|| usage("--epsilons is required"))?;
            grid[0]
        }
        _ => {
            if flags.epsilons.is_some() || flags.convert_sentence || flags.mean_tokens.is_some() {
                return Err(usage("--epsilons, --convert-sentence and --mean-tokens belong to sweep"));
            }
            flags.epsilon.ok_or_else(|| usage("--epsilon is required"))?
        }
    };
    let format = match flags.format {
        Some(FormatKind::Jsonl) => CorpusFormat::Jsonl,
        Some(FormatKind::PlainText) => CorpusFormat::PlainText,
        None => CorpusFormat::from_path(&dataset),
    };
    let seed = flags.seed.unwrap_or(ldp_audit::config::DEFAULT_SEED);
    let (data, embeddings) = load_data(&flags, &dataset, format, seed)?;

    let mechanism = build_mechanism(&flags, kind, epsilon, data.corpus.len())?;
    let adversary = build_adversary(&flags)?;
    let mut config = AuditConfig::new(mechanism, adversary);
    config.base_seed = seed;
    if let Some(v) = flags.k {
        config.k = v;
    }
    if let Some(v) = flags.trials {
        config.trials = v;
    }
    if let Some(v) = flags.lambda {
        config.lambda = v;
    }
    if let Some(v) = flags.alpha {
        config.alpha_conf = v;
    }
    config.delta = flags.delta.unwrap_or_else(|| config.mechanism_delta());
    config.estimator_mode = match flags.estimator.unwrap_or(EstimatorKind::Efficient) {
        EstimatorKind::Efficient => EstimatorMode::Efficient,
        EstimatorKind::Symmetric => EstimatorMode::SymmetricBaseline,
    };
    config.validate(data.corpus.len())?;

    let mut options = EngineOptions {
        failure_budget: flags.failure_budget,
        ..EngineOptions::default()
    };
    if let Some(w) = flags.workers {
        if w == 0 {
            return Err(usage("--workers must be at least 1"));
        }
        options = options.with_workers(w);
    }
    let out = flags.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));

    let resolved = Resolved {
        dataset: &dataset,
        format: match format {
            CorpusFormat::Jsonl => "jsonl",
            CorpusFormat::PlainText => "plain_text",
        },
        embeddings,
        workers: options.workers,
        out: &out,
        epsilons: flags.epsilons.as_deref(),
        audit: &config,
    };
    println!("resolved configuration:\n{}", serde_json::to_string_pretty(&resolved)?);

    Ok(Prepared {
        config,
        data,
        options,
        out,
        flags,
    })
}

fn summary_line(result: &AuditResult, epsilon: f64) -> String {
    let s = &result.summary;
    format!(
        "eps_nominal={} eps_emp={:.4} p_lower={:.6} ceiling={:.4}",
        epsilon, s.epsilon_emp, s.p_lower, s.ceiling
    )
}

pub fn audit(flags: RunFlags) -> Result<()> {
    let p = prepare(flags, "audit")?;
    fs::create_dir_all(&p.out).with_context(|| format!("creating {}", p.out.display()))?;
    let options = EngineOptions {
        log_cap: if p.flags.trial_log { p.options.log_cap } else { 0 },
        ..p.options.clone()
    };
    run_and_report(&p, options)
}

fn run_and_report(p: &Prepared, options: EngineOptions) -> Result<()> {
    let result = run_configured(&p.config, &p.data, &options)?;
    let log_path = match &result.trial_log {
        Some(log) if p.flags.trial_log => {
            let path = p.out.join("trials.jsonl");
            io::write_trial_log(log, &path)?;
            Some(path.display().to_string())
        }
        _ => None,
    };
    let doc = ResultFile::from_result(&result, log_path);
    io::write_result(&doc, p.out.join("result.jsonl"))?;
    let s = &result.summary;
    eprintln!(
        "successes {}/{} ({} failed trials excluded), {} mechanism queries, {:.2}s",
        s.tp_count, s.trials, result.failed_trials, result.mechanism_queries, result.wall_time_secs
    );
    println!("{}", summary_line(&result, p.config.mechanism.epsilon));
    Ok(())
}

pub fn sweep(flags: RunFlags) -> Result<()> {
    let p = prepare(flags, "sweep")?;
    let grid = p.flags.epsilons.clone().unwrap_or_default();
    let mean_tokens = if p.flags.convert_sentence {
        let n = match p.flags.mean_tokens {
            Some(n) => n,
            None => {
                let total: usize = p.data.corpus.records().iter().map(|r| r.tokens.len()).sum();
                total as f64 / p.data.corpus.len() as f64
            }
        };
        if !(n.is_finite() && n >= 0.0) {
            return Err(usage("--mean-tokens must be a non-negative number"));
        }
        Some(n)
    } else {
        if p.flags.mean_tokens.is_some() {
            return Err(usage("--mean-tokens requires --convert-sentence"));
        }
        None
    };
    fs::create_dir_all(&p.out).with_context(|| format!("creating {}", p.out.display()))?;
    let options = EngineOptions {
        log_cap: 0,
        ..p.options.clone()
    };
    let cells = run_sweep(&p.config, &grid, &p.data, &options)?;

    let results_path = p.out.join("results.jsonl");
    if results_path.exists() {
        fs::remove_file(&results_path)?;
    }
    println!("{:>12} {:>10} {:>10} {:>14}  status", "eps_nominal", "eps_emp", "p_lower", "tp/trials");
    for cell in &cells {
        match &cell.result {
            Ok(r) => {
                io::append_result(&ResultFile::from_result(r, None), &results_path)?;
                let s = &r.summary;
                println!(
                    "{:>12} {:>10.4} {:>10.6} {:>14}  ok",
                    cell.epsilon,
                    s.epsilon_emp,
                    s.p_lower,
                    format!("{}/{}", s.tp_count, s.trials)
                );
            }
            Err(e) => println!("{:>12} {:>10} {:>10} {:>14}  failed: {e}", cell.epsilon, "-", "-", "-"),
        }
    }
    io::write_sweep(&cells, &p.config, mean_tokens, p.out.join("sweep.csv"))?;
    if let [cell] = cells.as_slice() {
        if let Ok(r) = &cell.result {
            println!("{}", summary_line(r, cell.epsilon));
        }
    }
    if cells.iter().all(|c| c.result.is_err()) {
        let first = cells.into_iter().next().and_then(|c| c.result.err());
        return Err(match first {
            Some(e) => anyhow::Error::from(e).context("every sweep cell failed"),
            None => anyhow::anyhow!("every sweep cell failed"),
        });
    }
    Ok(())
}

pub fn ceiling(flags: CeilingFlags) -> Result<()> {
    if flags.trials == 0 {
        return Err(usage("--trials must be at least 1"));
    }
    let value = ceiling_value(flags.k, flags.trials, flags.alpha, flags.delta)?;
    println!("{value:.6}");
    Ok(())
}

pub fn snr(flags: SnrFlags) -> Result<()> {
    if !(flags.clip.is_finite() && flags.clip > 0.0) {
        return Err(usage("--clip must be positive"));
    }
    if flags.dim == 0 {
        return Err(usage("--dim must be positive"));
    }
    if let Some(e) = flags.epsilons.iter().find(|e| !(e.is_finite() && **e > 0.0)) {
        return Err(usage(format!("epsilon {e} is not positive")));
    }
    let params = VectorNoiseParams {
        clip_norm: flags.clip,
        noise_family: noise_family(flags.noise),
        delta_mech: match flags.noise {
            NoiseKind::Gaussian => flags.delta_mech,
            NoiseKind::Laplace => 0.0,
        },
    };
    params.validate()?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["epsilon", "clip_norm", "expected_noise_norm", "snr"])?;
    for &eps in &flags.epsilons {
        let noise = params.expected_noise_norm(flags.dim, eps);
        w.write_record([
            eps.to_string(),
            flags.clip.to_string(),
            format!("{noise:.6}"),
            format!("{:.6}", snr_from_parts(flags.clip, noise)),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?;
    match &flags.out {
        Some(path) => fs::write(path, &bytes).with_context(|| format!("writing {}", path.display()))?,
        None => std::io::stdout().write_all(&bytes)?,
    }
    Ok(())
}

pub fn convert(flags: ConvertFlags) -> Result<()> {
    if !(flags.epsilon_token.is_finite() && flags.epsilon_token >= 0.0) {
        return Err(usage("--epsilon-token must be non-negative"));
    }
    if !(flags.mean_tokens.is_finite() && flags.mean_tokens >= 0.0) {
        return Err(usage("--mean-tokens must be non-negative"));
    }
    if flags.mean_tokens == 0.0 {
        eprintln!("warning: --mean-tokens 0 composes to a sentence-level epsilon of 0");
    }
    let value = if flags.mean_tokens.fract() == 0.0 {
        sentence_budget(flags.epsilon_token, flags.mean_tokens as u64)
    } else {
        flags.epsilon_token * flags.mean_tokens
    };
    println!("{value:.4}");
    Ok(())
}
