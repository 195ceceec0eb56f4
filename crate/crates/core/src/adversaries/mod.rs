//! Distinguishability attacks: given a privatized output and a candidate set
//! containing its source, predict which candidate produced it.
//!
//! Every deterministic attack breaks ties toward the lowest candidate position.

mod judge;

use std::collections::HashSet;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{AuditError, Result};
use crate::mechanisms::{BuiltMechanism, Privatized};
use crate::numeric::{argmax_first, argmin_first, cosine_distance, l2_distance_sq};
use crate::rng::StreamRng;
use crate::sampling::CandidateSet;
use crate::types::{Corpus, EmbeddingTable, TextRecord};

pub use judge::{
    attack_remote_judge, parse_judge_answer, render_judge_prompt, RemoteJudge, RemoteJudgeConfig,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AdversarySpec {
    /// Nearest candidate by cosine distance between mean token embeddings.
    EmbeddingNn,
    /// Candidate with the highest Jaccard overlap of token-id sets.
    SurfaceOverlap,
    /// Chat-completion LLM asked to name the source.
    RemoteJudge(RemoteJudgeConfig),
    /// Nearest clean latent to the noised latent; vector_noise only.
    InternalEmbedding,
    /// Candidate whose value equals the reported value, uniform guess if none
    /// does. The MAP attack for randomized response.
    ValueMap,
}

impl AdversarySpec {
    pub fn name(&self) -> &'static str {
        match self {
            AdversarySpec::EmbeddingNn => "embedding",
            AdversarySpec::SurfaceOverlap => "surface",
            AdversarySpec::RemoteJudge(_) => "judge",
            AdversarySpec::InternalEmbedding => "internal",
            AdversarySpec::ValueMap => "value_map",
        }
    }
}

/// Cosine nearest neighbor in embedding space. An empty output embeds as the
/// zero vector, which is equidistant from everything.
pub fn attack_embedding(
    output: &TextRecord,
    candidates: &CandidateSet,
    corpus: &Corpus,
    table: &EmbeddingTable,
) -> usize {
    let y = table.sentence_embedding(&output.tokens);
    argmin_first(candidates.members.iter().map(|&id| {
        cosine_distance(&y, &table.sentence_embedding(&corpus.record(id).tokens))
    }))
}

pub fn jaccard(a: &[u32], b: &[u32]) -> f64 {
    let sa: HashSet<u32> = a.iter().copied().collect();
    let sb: HashSet<u32> = b.iter().copied().collect();
    let union = sa.union(&sb).count();
    if union == 0 {
        return 0.0;
    }
    sa.intersection(&sb).count() as f64 / union as f64
}

/// Highest Jaccard similarity between token-id sets.
pub fn attack_surface(output: &TextRecord, candidates: &CandidateSet, corpus: &Corpus) -> usize {
    if output.is_empty() {
        return 0;
    }
    argmax_first(
        candidates
            .members
            .iter()
            .map(|&id| jaccard(&output.tokens, &corpus.record(id).tokens)),
    )
}

/// Candidate latent nearest (L2) to the noised latent.
pub fn attack_internal_embedding(noised_latent: &[f64], candidate_latents: &[&[f64]]) -> Result<usize> {
    if let Some(bad) = candidate_latents
        .iter()
        .find(|c| c.len() != noised_latent.len())
    {
        return Err(AuditError::domain(format!(
            "latent dimension mismatch: {} vs {}",
            bad.len(),
            noised_latent.len()
        )));
    }
    Ok(argmin_first(
        candidate_latents
            .iter()
            .map(|c| l2_distance_sq(c, noised_latent)),
    ))
}

/// Exact-match attribution on the reported value, uniform guess otherwise.
pub fn attack_value_map<R: Rng + ?Sized>(
    value: Option<u64>,
    candidates: &CandidateSet,
    rng: &mut R,
) -> usize {
    value
        .and_then(|v| candidates.members.iter().position(|&m| m as u64 == v))
        .unwrap_or_else(|| rng.random_range(0..candidates.len()))
}

/// Common attack interface used by the engine.
pub trait Adversary: Send + Sync {
    fn attack(
        &self,
        output: &Privatized,
        candidates: &CandidateSet,
        rng: &mut StreamRng,
    ) -> Result<usize>;
}

/// An attack bound to the data it needs.
pub enum BuiltAdversary {
    Embedding {
        corpus: Arc<Corpus>,
        table: Arc<EmbeddingTable>,
    },
    Surface {
        corpus: Arc<Corpus>,
    },
    Judge {
        corpus: Arc<Corpus>,
        judge: RemoteJudge,
    },
    Internal {
        latents: Vec<Vec<f64>>,
    },
    ValueMap,
}

impl BuiltAdversary {
    pub fn build(
        spec: &AdversarySpec,
        corpus: &Arc<Corpus>,
        table: &Arc<EmbeddingTable>,
        mechanism: &BuiltMechanism,
    ) -> Result<Self> {
        Ok(match spec {
            AdversarySpec::EmbeddingNn => BuiltAdversary::Embedding {
                corpus: Arc::clone(corpus),
                table: Arc::clone(table),
            },
            AdversarySpec::SurfaceOverlap => BuiltAdversary::Surface {
                corpus: Arc::clone(corpus),
            },
            AdversarySpec::RemoteJudge(cfg) => BuiltAdversary::Judge {
                corpus: Arc::clone(corpus),
                judge: RemoteJudge::new(cfg.clone())?,
            },
            AdversarySpec::InternalEmbedding => {
                let vector = mechanism.as_vector().ok_or_else(|| {
                    AuditError::config("the internal embedding attack requires the vector_noise mechanism")
                })?;
                BuiltAdversary::Internal {
                    latents: (0..corpus.len())
                        .map(|id| vector.corpus_latent(id).to_vec())
                        .collect(),
                }
            }
            AdversarySpec::ValueMap => BuiltAdversary::ValueMap,
        })
    }

    pub fn is_remote(&self) -> bool {
        matches!(self, BuiltAdversary::Judge { .. })
    }
}

impl Adversary for BuiltAdversary {
    fn attack(
        &self,
        output: &Privatized,
        candidates: &CandidateSet,
        rng: &mut StreamRng,
    ) -> Result<usize> {
        match self {
            BuiltAdversary::Embedding { corpus, table } => {
                Ok(attack_embedding(&output.record, candidates, corpus, table))
            }
            BuiltAdversary::Surface { corpus } => {
                Ok(attack_surface(&output.record, candidates, corpus))
            }
            BuiltAdversary::Judge { corpus, judge } => {
                attack_remote_judge(&output.record, candidates, corpus, judge)
            }
            BuiltAdversary::Internal { latents } => {
                let noised = output.latent.as_deref().ok_or_else(|| {
                    AuditError::domain("mechanism output carries no latent")
                })?;
                let cands: Vec<&[f64]> = candidates
                    .members
                    .iter()
                    .map(|&id| latents[id].as_slice())
                    .collect();
                attack_internal_embedding(noised, &cands)
            }
            BuiltAdversary::ValueMap => Ok(attack_value_map(output.value, candidates, rng)),
        }
    }
}
