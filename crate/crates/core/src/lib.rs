//! Empirical privacy auditing for local differential privacy text mechanisms.
//!
//! An audit repeatedly samples a candidate set of `k` corpus records, privatizes
//! one of them, and asks an adversary which candidate produced the output. The
//! success count is turned into a one-sided Clopper–Pearson lower bound and
//! from there into an empirical privacy loss `eps_emp`.
//!
//! ```no_run
//! use ldp_audit::{
//!     io, run_audit, AdversarySpec, AuditConfig, AuditData, EngineOptions, GrrParams, MechanismParams,
//!     MechanismSpec,
//! };
//!
//! # fn main() -> ldp_audit::Result<()> {
//! let corpus = io::load_corpus("toy.txt", io::CorpusFormat::PlainText, None)?;
//! let table = io::synthetic_embeddings(corpus.vocab().map_or(1, |v| v.len()), 32, 7)?;
//! let data = AuditData::new(corpus, table)?;
//! let mechanism = MechanismSpec::new(1.0, MechanismParams::Grr(GrrParams { domain_size: 2 }));
//! let config = AuditConfig::new(mechanism, AdversarySpec::ValueMap);
//! let result = run_audit(&config, &data, &EngineOptions::default())?;
//! println!("eps_emp = {:.4}", result.summary.epsilon_emp);
//! # Ok(())
//! # }
//! ```

pub mod adversaries;
pub mod config;
pub mod engine;
pub mod error;
pub mod estimation;
pub mod io;
pub mod mechanisms;
pub mod numeric;
pub mod rng;
pub mod sampling;
pub mod types;

pub use adversaries::{AdversarySpec, RemoteJudgeConfig};
pub use config::AuditConfig;
pub use engine::{
    run_audit, run_configured, run_sweep, run_symmetric_audit, AuditData, AuditResult, Auditor,
    EngineOptions, SweepCell, TrialOutcome,
};
pub use error::{AuditError, Result};
pub use estimation::{ceiling, clopper_pearson_lower, epsilon_emp, EstimateSummary, EstimatorMode};
pub use mechanisms::{
    CandidatePool, GrrParams, MechanismParams, MechanismSpec, NoiseFamily, TokenEmParams, VectorNoiseParams,
};
pub use rng::{derive_trial_rng, RngStream, Substream};
pub use sampling::{sample_candidate_set, CandidateSet, DistanceCache};
pub use types::{Corpus, EmbeddingTable, TextRecord, TokenId};
