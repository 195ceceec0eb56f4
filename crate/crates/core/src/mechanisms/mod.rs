//! Local-DP mechanisms with analytically known guarantees.
//!
//! Three families are provided, one per reporting granularity: generalized
//! randomized response over record values, exponential-mechanism token
//! rewriting, and clipped sentence-embedding noise with nearest-neighbor
//! decoding. `identity` and `constant` are reference mechanisms with perfect and
//! zero distinguishability respectively.

mod grr;
mod token_em;
mod vector;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{AuditError, Result};
use crate::rng::StreamRng;
use crate::types::{Corpus, EmbeddingTable, TextRecord};

pub use grr::{grr_keep_probability, grr_output_distribution, grr_perturb, Grr, GrrParams};
pub use token_em::{CandidatePool, TokenEm, TokenEmParams};
pub use vector::{snr, snr_from_parts, NoiseFamily, VectorNoise, VectorNoiseParams};

/// Privacy accounting unit a mechanism's nominal epsilon refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    Value,
    Token,
    Sentence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MechanismParams {
    Grr(GrrParams),
    TokenEm(TokenEmParams),
    VectorNoise(VectorNoiseParams),
    Identity,
    Constant,
}

/// Which mechanism to audit and at what nominal budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MechanismSpec {
    pub epsilon: f64,
    #[serde(flatten)]
    pub params: MechanismParams,
}

impl MechanismSpec {
    pub fn new(epsilon: f64, params: MechanismParams) -> Self {
        Self { epsilon, params }
    }

    pub fn name(&self) -> &'static str {
        match self.params {
            MechanismParams::Grr(_) => "grr",
            MechanismParams::TokenEm(_) => "token_em",
            MechanismParams::VectorNoise(_) => "vector_noise",
            MechanismParams::Identity => "identity",
            MechanismParams::Constant => "constant",
        }
    }

    pub fn granularity(&self) -> Granularity {
        match self.params {
            MechanismParams::Grr(_) | MechanismParams::Identity | MechanismParams::Constant => {
                Granularity::Value
            }
            MechanismParams::TokenEm(_) => Granularity::Token,
            MechanismParams::VectorNoise(_) => Granularity::Sentence,
        }
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Self {
        Self {
            epsilon,
            params: self.params.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(AuditError::config(format!(
                "epsilon must be finite and non-negative, got {}",
                self.epsilon
            )));
        }
        match &self.params {
            MechanismParams::Grr(p) => p.validate(),
            MechanismParams::TokenEm(p) => p.validate(),
            MechanismParams::VectorNoise(p) => {
                if self.epsilon == 0.0 {
                    return Err(AuditError::config(
                        "vector_noise requires epsilon > 0",
                    ));
                }
                p.validate()
            }
            MechanismParams::Identity | MechanismParams::Constant => Ok(()),
        }
    }
}

/// Result of privatizing one record.
#[derive(Debug, Clone, PartialEq)]
pub struct Privatized {
    pub record: TextRecord,
    /// Categorical output value for value-level mechanisms.
    pub value: Option<u64>,
    /// Post-noise latent for mechanisms that privatize an embedding.
    pub latent: Option<Vec<f64>>,
}

impl Privatized {
    pub fn text(record: TextRecord) -> Self {
        Self {
            record,
            value: None,
            latent: None,
        }
    }
}

/// Common audit interface: privatize one record with the supplied stream.
pub trait Mechanism: Send + Sync {
    fn perturb(&self, input: &TextRecord, rng: &mut StreamRng) -> Result<Privatized>;
}

/// A mechanism instantiated against a corpus and embedding table.
pub enum BuiltMechanism {
    Grr(Grr),
    TokenEm(TokenEm),
    VectorNoise(VectorNoise),
    Identity,
    Constant,
}

impl BuiltMechanism {
    pub fn build(
        spec: &MechanismSpec,
        corpus: &Arc<Corpus>,
        table: &Arc<EmbeddingTable>,
    ) -> Result<Self> {
        spec.validate()?;
        Ok(match &spec.params {
            MechanismParams::Grr(p) => {
                BuiltMechanism::Grr(Grr::new(p.clone(), spec.epsilon, Arc::clone(corpus))?)
            }
            MechanismParams::TokenEm(p) => {
                BuiltMechanism::TokenEm(TokenEm::new(p, Arc::clone(table), spec.epsilon)?)
            }
            MechanismParams::VectorNoise(p) => BuiltMechanism::VectorNoise(VectorNoise::new(
                p.clone(),
                spec.epsilon,
                Arc::clone(corpus),
                Arc::clone(table),
            )?),
            MechanismParams::Identity => BuiltMechanism::Identity,
            MechanismParams::Constant => BuiltMechanism::Constant,
        })
    }

    pub fn as_vector(&self) -> Option<&VectorNoise> {
        match self {
            BuiltMechanism::VectorNoise(v) => Some(v),
            _ => None,
        }
    }
}

impl Mechanism for BuiltMechanism {
    fn perturb(&self, input: &TextRecord, rng: &mut StreamRng) -> Result<Privatized> {
        match self {
            BuiltMechanism::Grr(m) => m.perturb(input, rng),
            BuiltMechanism::TokenEm(m) => m.perturb(input, rng),
            BuiltMechanism::VectorNoise(m) => m.perturb(input, rng),
            BuiltMechanism::Identity => Ok(Privatized {
                record: input.clone(),
                value: Some(input.id),
                latent: None,
            }),
            BuiltMechanism::Constant => Ok(Privatized::text(TextRecord::new(
                TextRecord::DETACHED,
                Vec::new(),
            ))),
        }
    }
}

/// Sentence-level budget of a token-level mechanism under basic composition.
pub fn sentence_budget(epsilon_per_token: f64, token_count: u64) -> f64 {
    epsilon_per_token * token_count as f64
}
