//! Candidate-set construction by probabilistic transition sampling.
//!
//! The first member is uniform over the corpus. Each further member `x` is
//! drawn from the remaining pool with probability proportional to
//! `exp(λ·ℒ(x, S))`, where `ℒ(x, S) = Σ_{s∈S} ln P(x|s)` and `P(x|s)` is a
//! softmax of negative cosine distance over the whole corpus. Negative `λ`
//! favors candidates far from the current set, positive `λ` favors near ones,
//! and `λ = 0` is uniform sampling without replacement.

use std::sync::OnceLock;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{AuditError, Result};
use crate::numeric::{cosine_distance, log_sum_exp, sample_log_weights};
use crate::rng::StreamRng;
use crate::types::{Corpus, EmbeddingTable};

/// Corpora above this size get rows computed on demand instead of a dense matrix.
pub const DENSE_LIMIT: usize = 20_000;

enum Storage {
    Dense(Vec<f64>),
    OnDemand(Vec<Vec<f64>>),
}

/// Pairwise cosine distances between record sentence embeddings.
pub struct DistanceCache {
    n: usize,
    storage: Storage,
    log_normalizers: Vec<OnceLock<f64>>,
}

impl DistanceCache {
    pub fn from_corpus(corpus: &Corpus, table: &EmbeddingTable) -> Result<Self> {
        corpus.validate_against(table)?;
        let embeddings: Vec<Vec<f64>> = corpus
            .records()
            .iter()
            .map(|r| table.sentence_embedding(&r.tokens))
            .collect();
        Ok(Self::from_embeddings(embeddings))
    }

    fn from_embeddings(embeddings: Vec<Vec<f64>>) -> Self {
        let n = embeddings.len();
        let storage = if n <= DENSE_LIMIT {
            let mut m = vec![0.0; n * n];
            for i in 0..n {
                for j in (i + 1)..n {
                    let d = cosine_distance(&embeddings[i], &embeddings[j]);
                    m[i * n + j] = d;
                    m[j * n + i] = d;
                }
            }
            Storage::Dense(m)
        } else {
            Storage::OnDemand(embeddings)
        };
        Self::with_storage(n, storage)
    }

    /// Wraps an explicit row-major `n × n` distance matrix.
    pub fn from_matrix(n: usize, matrix: Vec<f64>) -> Result<Self> {
        if n == 0 || matrix.len() != n * n {
            return Err(AuditError::config(format!(
                "distance matrix has {} entries, expected {n}×{n}",
                matrix.len()
            )));
        }
        for i in 0..n {
            if matrix[i * n + i] != 0.0 {
                return Err(AuditError::config(format!("d({i},{i}) must be 0")));
            }
            for j in 0..n {
                let d = matrix[i * n + j];
                if !(0.0..=2.0).contains(&d) || d != matrix[j * n + i] {
                    return Err(AuditError::config(format!(
                        "d({i},{j}) = {d} must be symmetric and within [0, 2]"
                    )));
                }
            }
        }
        Ok(Self::with_storage(n, Storage::Dense(matrix)))
    }

    fn with_storage(n: usize, storage: Storage) -> Self {
        Self {
            n,
            storage,
            log_normalizers: (0..n).map(|_| OnceLock::new()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.storage, Storage::Dense(_))
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        match &self.storage {
            Storage::Dense(m) => m[i * self.n + j],
            Storage::OnDemand(e) => {
                if i == j {
                    0.0
                } else {
                    cosine_distance(&e[i], &e[j])
                }
            }
        }
    }

    /// Distances from `anchor` to every record.
    pub fn row(&self, anchor: usize) -> Vec<f64> {
        match &self.storage {
            Storage::Dense(m) => m[anchor * self.n..(anchor + 1) * self.n].to_vec(),
            Storage::OnDemand(_) => (0..self.n).map(|x| self.distance(x, anchor)).collect(),
        }
    }

    /// `ln Σ_{x′} exp(−d(x′, anchor))`.
    pub fn log_normalizer(&self, anchor: usize) -> f64 {
        *self.log_normalizers[anchor].get_or_init(|| {
            let neg: Vec<f64> = self.row(anchor).into_iter().map(|d| -d).collect();
            log_sum_exp(&neg)
        })
    }
}

/// Ordered candidate records and the position of the true input among them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub members: Vec<usize>,
    pub target_position: usize,
}

impl CandidateSet {
    pub fn new(members: Vec<usize>, target_position: usize) -> Result<Self> {
        if target_position >= members.len() {
            return Err(AuditError::domain(format!(
                "target position {target_position} outside a set of {}",
                members.len()
            )));
        }
        let mut sorted = members.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != members.len() {
            return Err(AuditError::domain("candidate members must be distinct"));
        }
        Ok(Self {
            members,
            target_position,
        })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn target(&self) -> usize {
        self.members[self.target_position]
    }
}

/// `ln P(candidate | anchor)`, normalized over the whole corpus.
pub fn pairwise_transition_logprob(candidate: usize, anchor: usize, cache: &DistanceCache) -> f64 {
    -cache.distance(candidate, anchor) - cache.log_normalizer(anchor)
}

/// `ℒ(candidate, selected) = Σ_{s∈selected} ln P(candidate | s)`.
pub fn joint_loglik(candidate: usize, selected: &[usize], cache: &DistanceCache) -> f64 {
    selected
        .iter()
        .map(|&s| pairwise_transition_logprob(candidate, s, cache))
        .sum()
}

/// Normalized log-probabilities `ln π(x | selected)` for every record not yet
/// selected, as `(record, log_prob)` pairs in id order.
pub fn transition_policy(selected: &[usize], lambda: f64, cache: &DistanceCache) -> Vec<(usize, f64)> {
    let remaining: Vec<usize> = (0..cache.len()).filter(|x| !selected.contains(x)).collect();
    let logits: Vec<f64> = remaining
        .iter()
        .map(|&x| lambda * joint_loglik(x, selected, cache))
        .collect();
    let z = log_sum_exp(&logits);
    remaining.into_iter().zip(logits.into_iter().map(|l| l - z)).collect()
}

/// Draws `k` distinct members with the transition policy from `sampling_rng`,
/// then a uniform target position from `target_rng`.
pub fn sample_candidate_set(
    corpus_len: usize,
    k: usize,
    lambda: f64,
    cache: &DistanceCache,
    sampling_rng: &mut StreamRng,
    target_rng: &mut StreamRng,
) -> Result<CandidateSet> {
    if k < 2 || k > corpus_len {
        return Err(AuditError::config(format!(
            "candidate count k = {k} must lie in [2, {corpus_len}]"
        )));
    }
    if cache.len() != corpus_len {
        return Err(AuditError::config(format!(
            "distance cache covers {} records but the corpus has {corpus_len}",
            cache.len()
        )));
    }
    let mut members = Vec::with_capacity(k);
    members.push(sampling_rng.random_range(0..corpus_len));
    let mut taken = vec![false; corpus_len];
    taken[members[0]] = true;
    // Running ℒ(x, S) for every record, extended by one pairwise term per pick.
    let mut loglik = vec![0.0; corpus_len];
    while members.len() < k {
        let newest = *members.last().expect("non-empty");
        let norm = cache.log_normalizer(newest);
        let row = cache.row(newest);
        for (x, l) in loglik.iter_mut().enumerate() {
            *l += -row[x] - norm;
        }
        let pool: Vec<usize> = (0..corpus_len).filter(|&x| !taken[x]).collect();
        let logits: Vec<f64> = pool.iter().map(|&x| lambda * loglik[x]).collect();
        let pick = pool[sample_log_weights(&logits, sampling_rng)];
        taken[pick] = true;
        members.push(pick);
    }
    let target_position = target_rng.random_range(0..k);
    Ok(CandidateSet {
        members,
        target_position,
    })
}
