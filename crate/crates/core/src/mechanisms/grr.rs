use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Mechanism, Privatized};
use crate::error::{AuditError, Result};
use crate::rng::StreamRng;
use crate::types::{Corpus, TextRecord};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrrParams {
    /// Domain size `g`.
    pub domain_size: u64,
}

impl GrrParams {
    pub fn validate(&self) -> Result<()> {
        if self.domain_size < 2 {
            return Err(AuditError::config(format!(
                "grr domain size must be at least 2, got {}",
                self.domain_size
            )));
        }
        Ok(())
    }
}

/// `e^ε / (e^ε + g − 1)`, evaluated without overflowing for large ε.
pub fn grr_keep_probability(domain_size: u64, epsilon: f64) -> f64 {
    1.0 / (1.0 + (domain_size - 1) as f64 * (-epsilon).exp())
}

/// Exact output distribution of GRR for `input`.
pub fn grr_output_distribution(domain_size: u64, epsilon: f64, input: u64) -> Vec<f64> {
    let p = grr_keep_probability(domain_size, epsilon);
    let q = (1.0 - p) / (domain_size - 1) as f64;
    (0..domain_size)
        .map(|z| if z == input { p } else { q })
        .collect()
}

/// Keeps `value` with the GRR keep-probability, otherwise reports one of the
/// other `g − 1` values uniformly.
pub fn grr_perturb<R: Rng + ?Sized>(
    value: u64,
    params: &GrrParams,
    epsilon: f64,
    rng: &mut R,
) -> Result<u64> {
    let g = params.domain_size;
    if value >= g {
        return Err(AuditError::domain(format!(
            "value {value} outside grr domain of size {g}"
        )));
    }
    if rng.random::<f64>() < grr_keep_probability(g, epsilon) {
        return Ok(value);
    }
    let other = rng.random_range(0..g - 1);
    Ok(if other >= value { other + 1 } else { other })
}

/// GRR over whole corpus records: a record's categorical value is its id.
///
/// Output values that name a corpus record decode to that record; values past
/// the end of the corpus decode to an empty record carrying the value as id.
pub struct Grr {
    params: GrrParams,
    epsilon: f64,
    corpus: Arc<Corpus>,
}

impl Grr {
    pub fn new(params: GrrParams, epsilon: f64, corpus: Arc<Corpus>) -> Result<Self> {
        params.validate()?;
        if (corpus.len() as u64) > params.domain_size {
            return Err(AuditError::config(format!(
                "grr domain size {} is smaller than the corpus ({} records); every record needs a value",
                params.domain_size,
                corpus.len()
            )));
        }
        Ok(Self {
            params,
            epsilon,
            corpus,
        })
    }
}

impl Mechanism for Grr {
    fn perturb(&self, input: &TextRecord, rng: &mut StreamRng) -> Result<Privatized> {
        let out = grr_perturb(input.id, &self.params, self.epsilon, rng)?;
        let record = if (out as usize) < self.corpus.len() {
            self.corpus.record(out as usize).clone()
        } else {
            TextRecord::new(out, Vec::new())
        };
        Ok(Privatized {
            record,
            value: Some(out),
            latent: None,
        })
    }
}
