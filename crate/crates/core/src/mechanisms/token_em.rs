use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use super::{Mechanism, Privatized};
use crate::error::{AuditError, Result};
use crate::numeric::{cosine_distance, sample_log_weights};
use crate::rng::StreamRng;
use crate::types::{EmbeddingTable, TextRecord, TokenId};

/// Replacement candidates considered for each token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "pool", rename_all = "snake_case")]
pub enum CandidatePool {
    #[default]
    FullVocabulary,
    /// The `size` tokens nearest (cosine) to the input token, itself included.
    Nearest { size: usize },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TokenEmParams {
    /// Calibration sensitivity Δ. Defaults to 2, the diameter of cosine distance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sensitivity: Option<f64>,
    #[serde(default)]
    pub candidate_pool: CandidatePool,
}

impl TokenEmParams {
    pub fn validate(&self) -> Result<()> {
        if let Some(s) = self.sensitivity {
            if !(s.is_finite() && s > 0.0) {
                return Err(AuditError::config(format!(
                    "token_em sensitivity must be positive and finite, got {s}"
                )));
            }
        }
        if let CandidatePool::Nearest { size } = self.candidate_pool {
            if size < 2 {
                return Err(AuditError::config("token_em pool size must be at least 2"));
            }
        }
        Ok(())
    }

    pub fn effective_sensitivity(&self) -> f64 {
        self.sensitivity.unwrap_or(2.0)
    }
}

/// Vocabulary size up to which a user-supplied sensitivity is checked against
/// the exact maximum pairwise distance.
const SENSITIVITY_CHECK_LIMIT: usize = 2_000;

/// Exponential-mechanism token rewriting.
///
/// Each token `t` is replaced independently by `w` from its candidate pool with
/// probability proportional to `exp(−ε·d(t, w) / (2Δ))`, `d` being cosine
/// distance in the embedding table. With `Δ` at least the pool's diameter each
/// token substitution is ε-LDP over the pool; a sentence of `n` tokens spends
/// `nε` under basic composition.
pub struct TokenEm {
    table: Arc<EmbeddingTable>,
    pool: CandidatePool,
    sensitivity: f64,
    epsilon_per_token: f64,
    nearest: Vec<OnceLock<Vec<TokenId>>>,
}

impl TokenEm {
    pub fn new(
        params: &TokenEmParams,
        table: Arc<EmbeddingTable>,
        epsilon_per_token: f64,
    ) -> Result<Self> {
        params.validate()?;
        let v = table.vocab_size();
        if let CandidatePool::Nearest { size } = params.candidate_pool {
            if size > v {
                return Err(AuditError::config(format!(
                    "token_em pool size {size} exceeds vocabulary size {v}"
                )));
            }
        }
        let sensitivity = params.effective_sensitivity();
        if params.sensitivity.is_some() && v <= SENSITIVITY_CHECK_LIMIT {
            let mut diameter: f64 = 0.0;
            for a in 0..v as TokenId {
                for b in (a + 1)..v as TokenId {
                    diameter = diameter.max(cosine_distance(table.vector(a), table.vector(b)));
                }
            }
            if sensitivity < diameter {
                return Err(AuditError::config(format!(
                    "token_em sensitivity {sensitivity} is below the vocabulary diameter {diameter}"
                )));
            }
        }
        Ok(Self {
            nearest: (0..v).map(|_| OnceLock::new()).collect(),
            table,
            pool: params.candidate_pool,
            sensitivity,
            epsilon_per_token,
        })
    }

    pub fn epsilon_per_token(&self) -> f64 {
        self.epsilon_per_token
    }

    fn pool_for(&self, token: TokenId) -> PoolRef<'_> {
        match self.pool {
            CandidatePool::FullVocabulary => PoolRef::All(self.table.vocab_size()),
            CandidatePool::Nearest { size } => PoolRef::List(
                self.nearest[token as usize].get_or_init(|| self.nearest_tokens(token, size)),
            ),
        }
    }

    fn nearest_tokens(&self, token: TokenId, size: usize) -> Vec<TokenId> {
        let center = self.table.vector(token);
        let mut scored: Vec<(f64, TokenId)> = (0..self.table.vocab_size() as TokenId)
            .map(|w| {
                let d = if w == token {
                    0.0
                } else {
                    cosine_distance(center, self.table.vector(w))
                };
                (d, w)
            })
            .collect();
        scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        scored.truncate(size);
        scored.into_iter().map(|(_, w)| w).collect()
    }

    /// Samples a replacement for a single token.
    pub fn replace_token(&self, token: TokenId, rng: &mut StreamRng) -> TokenId {
        let center = self.table.vector(token);
        let scale = -self.epsilon_per_token / (2.0 * self.sensitivity);
        let score = |w: TokenId| {
            if w == token {
                0.0
            } else {
                scale * cosine_distance(center, self.table.vector(w))
            }
        };
        match self.pool_for(token) {
            PoolRef::All(v) => {
                let logits: Vec<f64> = (0..v as TokenId).map(score).collect();
                sample_log_weights(&logits, rng) as TokenId
            }
            PoolRef::List(list) => {
                let logits: Vec<f64> = list.iter().map(|&w| score(w)).collect();
                list[sample_log_weights(&logits, rng)]
            }
        }
    }

    /// Rewrites every token independently. Output length equals input length;
    /// an empty input consumes no randomness.
    pub fn rewrite(&self, input: &TextRecord, rng: &mut StreamRng) -> Result<TextRecord> {
        if let Some(&bad) = input
            .tokens
            .iter()
            .find(|&&t| t as usize >= self.table.vocab_size())
        {
            return Err(AuditError::domain(format!(
                "token id {bad} is outside the embedding table"
            )));
        }
        let tokens = input
            .tokens
            .iter()
            .map(|&t| self.replace_token(t, rng))
            .collect();
        Ok(TextRecord::new(TextRecord::DETACHED, tokens))
    }
}

enum PoolRef<'a> {
    All(usize),
    List(&'a [TokenId]),
}

impl Mechanism for TokenEm {
    fn perturb(&self, input: &TextRecord, rng: &mut StreamRng) -> Result<Privatized> {
        self.rewrite(input, rng).map(Privatized::text)
    }
}
