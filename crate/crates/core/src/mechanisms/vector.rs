use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Mechanism, Privatized};
use crate::error::{AuditError, Result};
use crate::numeric::{argmin_first, clip_l2, l2_distance_sq};
use crate::rng::StreamRng;
use crate::types::{Corpus, EmbeddingTable, TextRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseFamily {
    #[default]
    LaplaceVector,
    Gaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorNoiseParams {
    pub clip_norm: f64,
    #[serde(default)]
    pub noise_family: NoiseFamily,
    /// δ of the Gaussian variant; ignored for Laplace.
    #[serde(default)]
    pub delta_mech: f64,
}

impl Default for VectorNoiseParams {
    fn default() -> Self {
        Self {
            clip_norm: 1.0,
            noise_family: NoiseFamily::LaplaceVector,
            delta_mech: 0.0,
        }
    }
}

impl VectorNoiseParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.clip_norm.is_finite() && self.clip_norm > 0.0) {
            return Err(AuditError::config(format!(
                "clip norm must be positive and finite, got {}",
                self.clip_norm
            )));
        }
        if self.noise_family == NoiseFamily::Gaussian
            && !(self.delta_mech > 0.0 && self.delta_mech < 1.0)
        {
            return Err(AuditError::config(format!(
                "gaussian noise needs delta_mech in (0, 1), got {}",
                self.delta_mech
            )));
        }
        Ok(())
    }

    /// Per-coordinate noise scale: the Laplace scale `b = 2C·√dim/ε` (L1
    /// sensitivity of a clipped vector) or the classical Gaussian
    /// `σ = √(2 ln(1.25/δ))·2C/ε` (L2 sensitivity `2C`).
    pub fn noise_scale(&self, dim: usize, epsilon: f64) -> f64 {
        let c = self.clip_norm;
        match self.noise_family {
            NoiseFamily::LaplaceVector => 2.0 * c * (dim as f64).sqrt() / epsilon,
            NoiseFamily::Gaussian => {
                (2.0 * (1.25 / self.delta_mech).ln()).sqrt() * 2.0 * c / epsilon
            }
        }
    }

    /// Root-mean-square L2 norm of the noise vector: `b·√(2·dim)` for Laplace
    /// (per-coordinate variance `2b²`) and `σ·√dim` for Gaussian.
    pub fn expected_noise_norm(&self, dim: usize, epsilon: f64) -> f64 {
        let scale = self.noise_scale(dim, epsilon);
        match self.noise_family {
            NoiseFamily::LaplaceVector => scale * (2.0 * dim as f64).sqrt(),
            NoiseFamily::Gaussian => scale * (dim as f64).sqrt(),
        }
    }
}

/// Clip norm over expected noise norm.
pub fn snr(params: &VectorNoiseParams, dim: usize, epsilon: f64) -> f64 {
    snr_from_parts(params.clip_norm, params.expected_noise_norm(dim, epsilon))
}

pub fn snr_from_parts(clip_norm: f64, expected_noise_norm: f64) -> f64 {
    clip_norm / expected_noise_norm
}

/// Sentence-embedding noise with nearest-neighbor decoding.
///
/// The latent of a record is the mean of its token vectors clipped to L2 norm
/// `C`. Noise is added to the latent and the result is decoded to the corpus
/// record whose clipped latent is nearest in L2 (lowest id on ties). The
/// guarantee holds for the noised latent; decoding is post-processing.
pub struct VectorNoise {
    params: VectorNoiseParams,
    epsilon: f64,
    corpus: Arc<Corpus>,
    table: Arc<EmbeddingTable>,
    bank: Vec<Vec<f64>>,
}

impl VectorNoise {
    pub fn new(
        params: VectorNoiseParams,
        epsilon: f64,
        corpus: Arc<Corpus>,
        table: Arc<EmbeddingTable>,
    ) -> Result<Self> {
        params.validate()?;
        if epsilon.is_nan() || epsilon <= 0.0 {
            return Err(AuditError::config("vector_noise requires epsilon > 0"));
        }
        corpus.validate_against(&table)?;
        let bank = corpus
            .records()
            .iter()
            .map(|r| clip_l2(&table.sentence_embedding(&r.tokens), params.clip_norm))
            .collect();
        Ok(Self {
            params,
            epsilon,
            corpus,
            table,
            bank,
        })
    }

    pub fn params(&self) -> &VectorNoiseParams {
        &self.params
    }

    pub fn dim(&self) -> usize {
        self.table.dim()
    }

    /// Clipped sentence embedding.
    pub fn latent(&self, tokens: &[u32]) -> Vec<f64> {
        clip_l2(&self.table.sentence_embedding(tokens), self.params.clip_norm)
    }

    /// Clipped latent of corpus record `id`.
    pub fn corpus_latent(&self, id: usize) -> &[f64] {
        &self.bank[id]
    }

    pub fn sample_noise(&self, rng: &mut StreamRng) -> Vec<f64> {
        let dim = self.dim();
        let scale = self.params.noise_scale(dim, self.epsilon);
        match self.params.noise_family {
            NoiseFamily::LaplaceVector => (0..dim).map(|_| sample_laplace(scale, rng)).collect(),
            NoiseFamily::Gaussian => (0..dim)
                .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
                .collect(),
        }
    }

    pub fn decode(&self, latent: &[f64]) -> usize {
        argmin_first(self.bank.iter().map(|b| l2_distance_sq(b, latent)))
    }

    /// Returns the decoded record and the noised latent.
    pub fn privatize(&self, input: &TextRecord, rng: &mut StreamRng) -> Result<(TextRecord, Vec<f64>)> {
        if input.is_empty() {
            return Err(AuditError::domain("vector_noise input must be non-empty"));
        }
        let mut latent = self.latent(&input.tokens);
        for (x, n) in latent.iter_mut().zip(self.sample_noise(rng)) {
            *x += n;
        }
        let decoded = self.decode(&latent);
        Ok((self.corpus.record(decoded).clone(), latent))
    }

    pub fn snr(&self) -> f64 {
        snr(&self.params, self.dim(), self.epsilon)
    }
}

/// Inverse-CDF Laplace draw with scale `b`.
fn sample_laplace<R: Rng + ?Sized>(b: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.random::<f64>() - 0.5;
    // u = -0.5 exactly would give ln(0); nudge it onto the open interval.
    let mag = (1.0 - 2.0 * u.abs()).max(f64::MIN_POSITIVE);
    -b * u.signum() * mag.ln()
}

impl Mechanism for VectorNoise {
    fn perturb(&self, input: &TextRecord, rng: &mut StreamRng) -> Result<Privatized> {
        let (record, latent) = self.privatize(input, rng)?;
        Ok(Privatized {
            record,
            value: None,
            latent: Some(latent),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::synthetic_embeddings;
    use crate::numeric::l2_norm;
    use crate::rng::RngStream;

    fn corpus_and_table(n: usize, dim: usize) -> (Arc<Corpus>, Arc<EmbeddingTable>) {
        let table = Arc::new(synthetic_embeddings(n * 2, dim, 17).unwrap());
        let records = (0..n)
            .map(|i| TextRecord::new(i as u64, vec![2 * i as u32, 2 * i as u32 + 1]))
            .collect();
        (Arc::new(Corpus::new(records, "mem").unwrap()), table)
    }

    #[test]
    fn laplace_noise_norm_matches_rms_expectation() {
        // Monte Carlo against the analytic per-coordinate variance 2b². The
        // mean norm sits below the RMS norm by roughly 5/(8·dim); dim = 128
        // keeps that gap near 0.5%.
        let (corpus, table) = corpus_and_table(4, 128);
        let params = VectorNoiseParams {
            clip_norm: 1.0,
            ..Default::default()
        };
        let mech = VectorNoise::new(params.clone(), 3.0, corpus, table).unwrap();
        let mut rng = RngStream::new(21, 0).rng();
        let n = 100_000;
        let mean: f64 = (0..n).map(|_| l2_norm(&mech.sample_noise(&mut rng))).sum::<f64>() / n as f64;
        let expected = params.expected_noise_norm(128, 3.0);
        assert!((mean / expected - 1.0).abs() < 0.02, "{mean} vs {expected}");
    }

    #[test]
    fn gaussian_noise_norm_matches_rms_expectation() {
        let (corpus, table) = corpus_and_table(4, 64);
        let params = VectorNoiseParams {
            clip_norm: 1.0,
            noise_family: NoiseFamily::Gaussian,
            delta_mech: 1e-5,
        };
        let mech = VectorNoise::new(params.clone(), 2.0, corpus, table).unwrap();
        let mut rng = RngStream::new(22, 0).rng();
        let n = 20_000;
        let mean: f64 = (0..n).map(|_| l2_norm(&mech.sample_noise(&mut rng))).sum::<f64>() / n as f64;
        let expected = params.expected_noise_norm(64, 2.0);
        assert!((mean / expected - 1.0).abs() < 0.02, "{mean} vs {expected}");
    }

    #[test]
    fn vanishing_noise_decodes_to_input() {
        let (corpus, table) = corpus_and_table(6, 16);
        let mech = VectorNoise::new(VectorNoiseParams::default(), 1e6, corpus.clone(), table).unwrap();
        let mut rng = RngStream::new(23, 0).rng();
        let trials = 10_000;
        let mut hits = 0;
        for t in 0..trials {
            let input = corpus.record(t % 6);
            let clean = mech.decode(&mech.latent(&input.tokens));
            let (out, _) = mech.privatize(input, &mut rng).unwrap();
            if out.id as usize == clean {
                hits += 1;
            }
        }
        assert!(hits as f64 / trials as f64 >= 0.999);
    }

    #[test]
    fn latents_are_clipped() {
        let (corpus, table) = corpus_and_table(5, 8);
        let scaled = Arc::new(table.scaled(10.0).unwrap());
        let mech = VectorNoise::new(
            VectorNoiseParams {
                clip_norm: 0.5,
                ..Default::default()
            },
            1.0,
            corpus,
            scaled,
        )
        .unwrap();
        for id in 0..5 {
            assert!((l2_norm(mech.corpus_latent(id)) - 0.5).abs() < 1e-9);
        }
    }

    #[test]
    fn snr_is_linear_in_epsilon_for_laplace() {
        let p = VectorNoiseParams::default();
        for eps in [0.5, 3.0, 250.0] {
            let ratio = snr(&p, 32, 2.0 * eps) / snr(&p, 32, eps);
            assert!((ratio - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn snr_regime_ordering() {
        let p = VectorNoiseParams {
            clip_norm: 5.7,
            ..Default::default()
        };
        let values: Vec<f64> = [250.0, 1000.0, 2500.0].iter().map(|&e| snr(&p, 216, e)).collect();
        assert!(values[0] < values[1] && values[1] < values[2]);
        assert!(values[0] < 1.0 && values[2] > 1.0);
    }

    #[test]
    fn snr_vanishes_with_clip_norm_at_fixed_noise() {
        let noise = 2.0;
        let mut prev = f64::INFINITY;
        for c in [1.0, 1e-3, 1e-9] {
            let s = snr_from_parts(c, noise);
            assert!(s < prev);
            prev = s;
        }
        assert!(prev < 1e-8);
    }

    #[test]
    fn gaussian_needs_delta() {
        let p = VectorNoiseParams {
            noise_family: NoiseFamily::Gaussian,
            ..Default::default()
        };
        assert!(p.validate().is_err());
    }
}
