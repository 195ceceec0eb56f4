//! Audit orchestration: candidate sampling, target draw, privatization,
//! attack and aggregation, repeated over `T` independent trials.
//!
//! Trials run on a rayon pool. Each trial draws only from its own substreams,
//! and the success count is an integer sum, so results do not depend on the
//! worker count or on scheduling order.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adversaries::{Adversary, BuiltAdversary};
use crate::config::AuditConfig;
use crate::error::{AuditError, Result};
use crate::estimation::{EstimateSummary, EstimatorMode};
use crate::mechanisms::{BuiltMechanism, Mechanism};
use crate::rng::{derive_trial_rng, Substream};
use crate::sampling::{sample_candidate_set, CandidateSet, DistanceCache};
use crate::types::{Corpus, EmbeddingTable, TextRecord};

/// Default number of trial outcomes kept in memory.
pub const DEFAULT_LOG_CAP: usize = 100_000;
/// Default failure budget for remote-judge audits, as a fraction of `T`.
pub const JUDGE_FAILURE_FRACTION: f64 = 0.005;
/// Trials dispatched per parallel batch.
const BATCH: u64 = 1 << 14;

/// Execution settings that do not affect results.
#[derive(Debug, Clone)]
pub struct EngineOptions {
    pub workers: usize,
    pub log_cap: usize,
    /// Maximum tolerated trial failures. `None` means 0, or 0.5% of `T` when
    /// the adversary is a remote judge.
    pub failure_budget: Option<u64>,
}

impl Default for EngineOptions {
    fn default() -> Self {
        Self {
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
            log_cap: DEFAULT_LOG_CAP,
            failure_budget: None,
        }
    }
}

impl EngineOptions {
    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers.max(1);
        self
    }
}

/// Corpus, embeddings and the distance cache built from them; shared by every
/// audit in a sweep.
#[derive(Clone)]
pub struct AuditData {
    pub corpus: Arc<Corpus>,
    pub table: Arc<EmbeddingTable>,
    pub distances: Arc<DistanceCache>,
}

impl AuditData {
    pub fn new(corpus: Corpus, table: EmbeddingTable) -> Result<Self> {
        let distances = DistanceCache::from_corpus(&corpus, &table)?;
        Ok(Self {
            corpus: Arc::new(corpus),
            table: Arc::new(table),
            distances: Arc::new(distances),
        })
    }

    /// Uses an explicit distance matrix instead of embedding distances.
    pub fn with_distances(corpus: Corpus, table: EmbeddingTable, distances: DistanceCache) -> Result<Self> {
        if distances.len() != corpus.len() {
            return Err(AuditError::config("distance cache and corpus sizes differ"));
        }
        corpus.validate_against(&table)?;
        Ok(Self {
            corpus: Arc::new(corpus),
            table: Arc::new(table),
            distances: Arc::new(distances),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub trial_index: u64,
    pub candidate_ids: Vec<usize>,
    pub target_position: usize,
    pub output_record: TextRecord,
    pub guess_position: usize,
    pub success: bool,
    /// Base seed; the trial's streams are derived from it and `trial_index`.
    pub seed_used: u64,
    /// Whether the false-positive experiment attributed the non-target's
    /// output to the target (symmetric baseline only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub false_positive: Option<bool>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditResult {
    pub summary: EstimateSummary,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trial_log: Option<Vec<TrialOutcome>>,
    pub wall_time_secs: f64,
    pub config_echo: AuditConfig,
    pub mechanism_queries: u64,
    /// Trials excluded from both the success count and `T` after failing.
    pub failed_trials: u64,
}

/// A configured audit, ready to run trials.
pub struct Auditor {
    config: AuditConfig,
    data: AuditData,
    mechanism: BuiltMechanism,
    adversary: BuiltAdversary,
    queries: AtomicU64,
}

impl Auditor {
    pub fn new(config: AuditConfig, data: &AuditData) -> Result<Self> {
        config.validate(data.corpus.len())?;
        let mechanism = BuiltMechanism::build(&config.mechanism, &data.corpus, &data.table)?;
        let adversary = BuiltAdversary::build(&config.adversary, &data.corpus, &data.table, &mechanism)?;
        Ok(Self {
            config,
            data: data.clone(),
            mechanism,
            adversary,
            queries: AtomicU64::new(0),
        })
    }

    pub fn config(&self) -> &AuditConfig {
        &self.config
    }

    /// Mechanism invocations so far.
    pub fn mechanism_queries(&self) -> u64 {
        self.queries.load(Ordering::Relaxed)
    }

    fn candidates(&self, trial_index: u64) -> Result<CandidateSet> {
        let seed = self.config.base_seed;
        let mut sampling = derive_trial_rng(seed, trial_index, Substream::Sampling).rng();
        let mut target = derive_trial_rng(seed, trial_index, Substream::Target).rng();
        sample_candidate_set(
            self.data.corpus.len(),
            self.config.k,
            self.config.lambda,
            &self.data.distances,
            &mut sampling,
            &mut target,
        )
    }

    /// Privatizes `source` and returns the output with the attack's guess.
    fn attack_once(
        &self,
        trial_index: u64,
        source: usize,
        candidates: &CandidateSet,
        mech_stream: Substream,
        adv_stream: Substream,
    ) -> Result<(TextRecord, usize)> {
        let seed = self.config.base_seed;
        let mut mech_rng = derive_trial_rng(seed, trial_index, mech_stream).rng();
        self.queries.fetch_add(1, Ordering::Relaxed);
        let output = self
            .mechanism
            .perturb(self.data.corpus.record(source), &mut mech_rng)?;
        let mut adv_rng = derive_trial_rng(seed, trial_index, adv_stream).rng();
        let guess = self.adversary.attack(&output, candidates, &mut adv_rng)?;
        Ok((output.record, guess))
    }

    /// One trial of the efficient audit.
    pub fn run_trial(&self, trial_index: u64) -> Result<TrialOutcome> {
        self.trial(trial_index)
            .map_err(|e| AuditError::Trial {
                trial_index,
                source: Box::new(e),
            })
    }

    fn trial(&self, trial_index: u64) -> Result<TrialOutcome> {
        let candidates = self.candidates(trial_index)?;
        let (output_record, guess_position) = self.attack_once(
            trial_index,
            candidates.target(),
            &candidates,
            Substream::Mechanism,
            Substream::Adversary,
        )?;
        Ok(TrialOutcome {
            trial_index,
            success: guess_position == candidates.target_position,
            candidate_ids: candidates.members,
            target_position: candidates.target_position,
            output_record,
            guess_position,
            seed_used: self.config.base_seed,
            false_positive: None,
        })
    }

    /// One trial of the symmetric baseline: the true-positive experiment
    /// privatizes the target, the false-positive experiment privatizes the
    /// other member of the pair, and both check attribution to the target.
    pub fn run_symmetric_trial(&self, trial_index: u64) -> Result<TrialOutcome> {
        self.symmetric_trial(trial_index)
            .map_err(|e| AuditError::Trial {
                trial_index,
                source: Box::new(e),
            })
    }

    fn symmetric_trial(&self, trial_index: u64) -> Result<TrialOutcome> {
        let candidates = self.candidates(trial_index)?;
        let target = candidates.target_position;
        let other = candidates.members[1 - target];
        let (output_record, guess_position) = self.attack_once(
            trial_index,
            candidates.target(),
            &candidates,
            Substream::Mechanism,
            Substream::Adversary,
        )?;
        let (_, fp_guess) = self.attack_once(
            trial_index,
            other,
            &candidates,
            Substream::FpMechanism,
            Substream::FpAdversary,
        )?;
        Ok(TrialOutcome {
            trial_index,
            success: guess_position == target,
            candidate_ids: candidates.members,
            target_position: target,
            output_record,
            guess_position,
            seed_used: self.config.base_seed,
            false_positive: Some(fp_guess == target),
        })
    }

    fn failure_budget(&self, options: &EngineOptions) -> u64 {
        options.failure_budget.unwrap_or_else(|| {
            if self.adversary.is_remote() {
                (JUDGE_FAILURE_FRACTION * self.config.trials as f64).floor() as u64
            } else {
                0
            }
        })
    }

    /// Runs all `T` trials in the configured estimator mode.
    pub fn run(&self, options: &EngineOptions) -> Result<AuditResult> {
        let started = Instant::now();
        let symmetric = self.config.estimator_mode == EstimatorMode::SymmetricBaseline;
        let budget = self.failure_budget(options);
        let workers = if self.adversary.is_remote() {
            match &self.config.adversary {
                crate::adversaries::AdversarySpec::RemoteJudge(c) => options.workers.min(c.max_in_flight),
                _ => options.workers,
            }
        } else {
            options.workers
        }
        .max(1);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| AuditError::config(format!("cannot start worker pool: {e}")))?;

        let mut tp = 0u64;
        let mut fp = 0u64;
        let mut failed = 0u64;
        let mut log = Vec::new();
        let mut start = 0u64;
        while start < self.config.trials {
            let end = (start + BATCH).min(self.config.trials);
            let batch: Vec<Result<TrialOutcome>> = pool.install(|| {
                (start..end)
                    .into_par_iter()
                    .map(|i| {
                        if symmetric {
                            self.run_symmetric_trial(i)
                        } else {
                            self.run_trial(i)
                        }
                    })
                    .collect()
            });
            for outcome in batch {
                match outcome {
                    Ok(o) => {
                        tp += o.success as u64;
                        fp += o.false_positive.unwrap_or(false) as u64;
                        if log.len() < options.log_cap {
                            log.push(o);
                        }
                    }
                    Err(e) => {
                        log::warn!("{e}");
                        failed += 1;
                    }
                }
            }
            if failed > budget {
                return Err(AuditError::FailureBudget {
                    failed,
                    budget,
                    partial_log: log,
                });
            }
            start = end;
        }

        let trials = self.config.trials - failed;
        if trials == 0 {
            return Err(AuditError::FailureBudget {
                failed,
                budget,
                partial_log: log,
            });
        }
        let (alpha, delta) = (self.config.alpha_conf, self.config.delta);
        let summary = if symmetric {
            EstimateSummary::symmetric(tp, trials, fp, trials, alpha, delta)?
        } else {
            EstimateSummary::efficient(tp, trials, self.config.k, alpha, delta)?
        };
        Ok(AuditResult {
            summary,
            trial_log: (options.log_cap > 0).then_some(log),
            wall_time_secs: started.elapsed().as_secs_f64(),
            config_echo: self.config.clone(),
            mechanism_queries: self.mechanism_queries(),
            failed_trials: failed,
        })
    }
}

/// Efficient audit: one mechanism query per trial, estimate from successes.
pub fn run_audit(config: &AuditConfig, data: &AuditData, options: &EngineOptions) -> Result<AuditResult> {
    let mut config = config.clone();
    config.estimator_mode = EstimatorMode::Efficient;
    Auditor::new(config, data)?.run(options)
}

/// Symmetric baseline audit: two mechanism queries per trial.
pub fn run_symmetric_audit(
    config: &AuditConfig,
    data: &AuditData,
    options: &EngineOptions,
) -> Result<AuditResult> {
    let mut config = config.clone();
    config.estimator_mode = EstimatorMode::SymmetricBaseline;
    Auditor::new(config, data)?.run(options)
}

/// Dispatches on `config.estimator_mode`.
pub fn run_configured(config: &AuditConfig, data: &AuditData, options: &EngineOptions) -> Result<AuditResult> {
    Auditor::new(config.clone(), data)?.run(options)
}

/// One grid point of a sweep.
#[derive(Debug)]
pub struct SweepCell {
    pub epsilon: f64,
    pub result: Result<AuditResult>,
}

/// One audit per nominal epsilon; cell `i` uses `base_seed + i`. A failing cell
/// does not stop the sweep.
pub fn run_sweep(
    base: &AuditConfig,
    epsilon_grid: &[f64],
    data: &AuditData,
    options: &EngineOptions,
) -> Result<Vec<SweepCell>> {
    if epsilon_grid.is_empty() {
        return Err(AuditError::config("epsilon grid is empty"));
    }
    if let Some(bad) = epsilon_grid.iter().find(|e| !(e.is_finite() && **e > 0.0)) {
        return Err(AuditError::config(format!("grid epsilon {bad} is not positive")));
    }
    Ok(epsilon_grid
        .iter()
        .enumerate()
        .map(|(i, &epsilon)| {
            let mut config = base.clone();
            config.mechanism = base.mechanism.with_epsilon(epsilon);
            config.base_seed = base.base_seed.wrapping_add(i as u64);
            SweepCell {
                epsilon,
                result: run_configured(&config, data, options),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversaries::AdversarySpec;
    use crate::io::synthetic_embeddings;
    use crate::mechanisms::{GrrParams, MechanismParams, MechanismSpec};

    fn data(n: usize) -> AuditData {
        let records = (0..n)
            .map(|i| TextRecord::new(i as u64, vec![i as u32]))
            .collect();
        AuditData::new(
            Corpus::new(records, "mem").unwrap(),
            synthetic_embeddings(n, 8, 1).unwrap(),
        )
        .unwrap()
    }

    fn config(params: MechanismParams, eps: f64, adversary: AdversarySpec, trials: u64) -> AuditConfig {
        let mut c = AuditConfig::new(MechanismSpec::new(eps, params), adversary);
        c.trials = trials;
        c.lambda = 0.0;
        c
    }

    #[test]
    fn identity_with_surface_attack_always_succeeds() {
        let d = data(6);
        let auditor = Auditor::new(
            config(MechanismParams::Identity, 1.0, AdversarySpec::SurfaceOverlap, 10),
            &d,
        )
        .unwrap();
        for t in 0..50 {
            assert!(auditor.run_trial(t).unwrap().success);
        }
    }

    #[test]
    fn constant_mechanism_succeeds_at_chance() {
        let d = data(6);
        let c = config(MechanismParams::Constant, 1.0, AdversarySpec::EmbeddingNn, 10_000);
        let r = run_audit(&c, &d, &EngineOptions::default()).unwrap();
        let sigma = (0.25f64 / 10_000.0).sqrt();
        assert!((r.summary.success_rate() - 0.5).abs() < 3.0 * sigma);
    }

    #[test]
    fn trial_replay_is_identical() {
        let d = data(6);
        let c = config(
            MechanismParams::Grr(GrrParams { domain_size: 6 }),
            1.0,
            AdversarySpec::ValueMap,
            10,
        );
        let a = Auditor::new(c.clone(), &d).unwrap();
        let b = Auditor::new(c, &d).unwrap();
        for t in [0, 3, 7] {
            assert_eq!(a.run_trial(t).unwrap(), b.run_trial(t).unwrap());
        }
    }

    #[test]
    fn substreams_isolate_trials() {
        let d = data(6);
        let c = config(
            MechanismParams::Grr(GrrParams { domain_size: 6 }),
            1.0,
            AdversarySpec::ValueMap,
            10,
        );
        let a = Auditor::new(c, &d).unwrap();
        let after_skip = a.run_trial(5).unwrap();
        for t in 0..5 {
            a.run_trial(t).unwrap();
        }
        assert_eq!(a.run_trial(5).unwrap(), after_skip);
    }

    #[test]
    fn query_counters() {
        let d = data(2);
        let c = config(
            MechanismParams::Grr(GrrParams { domain_size: 2 }),
            2.0,
            AdversarySpec::ValueMap,
            500,
        );
        let opts = EngineOptions::default();
        assert_eq!(run_audit(&c, &d, &opts).unwrap().mechanism_queries, 500);
        assert_eq!(run_symmetric_audit(&c, &d, &opts).unwrap().mechanism_queries, 1000);
    }

    #[test]
    fn log_cap_truncates_log_only() {
        let d = data(4);
        let c = config(MechanismParams::Identity, 1.0, AdversarySpec::ValueMap, 300);
        let opts = EngineOptions {
            log_cap: 100,
            ..Default::default()
        };
        let r = run_audit(&c, &d, &opts).unwrap();
        assert_eq!(r.trial_log.as_ref().unwrap().len(), 100);
        assert_eq!(r.summary.tp_count, 300);
        let logged = r.trial_log.unwrap().iter().filter(|o| o.success).count();
        assert_eq!(logged, 100);
    }

    #[test]
    fn internal_attack_requires_vector_mechanism() {
        let d = data(4);
        let c = config(MechanismParams::Identity, 1.0, AdversarySpec::InternalEmbedding, 10);
        assert!(matches!(Auditor::new(c, &d), Err(AuditError::Config(_))));
    }

    #[test]
    fn sweep_validates_grid() {
        let d = data(2);
        let c = config(MechanismParams::Identity, 1.0, AdversarySpec::ValueMap, 10);
        let opts = EngineOptions::default();
        assert!(run_sweep(&c, &[], &d, &opts).is_err());
        assert!(run_sweep(&c, &[1.0, -2.0], &d, &opts).is_err());
    }

    #[test]
    fn sweep_isolates_failed_cells() {
        // vector_noise on an empty grid point is fine; an invalid k fails every
        // cell without aborting the sweep.
        let d = data(2);
        let mut c = config(MechanismParams::Identity, 1.0, AdversarySpec::ValueMap, 10);
        c.k = 3;
        let cells = run_sweep(&c, &[1.0, 2.0], &d, &EngineOptions::default()).unwrap();
        assert_eq!(cells.len(), 2);
        assert!(cells.iter().all(|c| c.result.is_err()));
    }
}
