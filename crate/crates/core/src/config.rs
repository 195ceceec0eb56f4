use serde::{Deserialize, Serialize};

use crate::adversaries::AdversarySpec;
use crate::error::{AuditError, Result};
use crate::estimation::{EstimatorMode, DEFAULT_ALPHA};
use crate::mechanisms::{MechanismParams, MechanismSpec, NoiseFamily};

pub const DEFAULT_K: usize = 2;
pub const DEFAULT_TRIALS: u64 = 10_000;
/// Strongly diverse candidate sets (close to furthest-neighbor sampling).
pub const DEFAULT_LAMBDA: f64 = -10_000.0;
pub const DEFAULT_SEED: u64 = 42;

/// Everything that determines an audit's outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditConfig {
    pub k: usize,
    pub trials: u64,
    pub alpha_conf: f64,
    pub delta: f64,
    pub lambda: f64,
    pub base_seed: u64,
    pub mechanism: MechanismSpec,
    pub adversary: AdversarySpec,
    #[serde(default)]
    pub estimator_mode: EstimatorMode,
}

impl AuditConfig {
    /// Defaults for everything except what is being audited.
    pub fn new(mechanism: MechanismSpec, adversary: AdversarySpec) -> Self {
        Self {
            k: DEFAULT_K,
            trials: DEFAULT_TRIALS,
            alpha_conf: DEFAULT_ALPHA,
            delta: 0.0,
            lambda: DEFAULT_LAMBDA,
            base_seed: DEFAULT_SEED,
            mechanism,
            adversary,
            estimator_mode: EstimatorMode::Efficient,
        }
    }

    pub fn validate(&self, corpus_len: usize) -> Result<()> {
        if self.k < 2 {
            return Err(AuditError::config(format!("k must be at least 2, got {}", self.k)));
        }
        if self.k > corpus_len {
            return Err(AuditError::config(format!(
                "k = {} exceeds the corpus size {corpus_len}",
                self.k
            )));
        }
        if self.trials == 0 {
            return Err(AuditError::config("trials must be at least 1"));
        }
        if !(self.alpha_conf > 0.0 && self.alpha_conf <= 0.5) {
            return Err(AuditError::config(format!(
                "alpha must lie in (0, 0.5], got {}",
                self.alpha_conf
            )));
        }
        if !(0.0..1.0).contains(&self.delta) {
            return Err(AuditError::config(format!(
                "delta must lie in [0, 1), got {}",
                self.delta
            )));
        }
        if !self.lambda.is_finite() {
            return Err(AuditError::config("lambda must be finite"));
        }
        if self.estimator_mode == EstimatorMode::SymmetricBaseline && self.k != 2 {
            return Err(AuditError::config(
                "the symmetric baseline works on candidate pairs; set k = 2",
            ));
        }
        if let AdversarySpec::RemoteJudge(cfg) = &self.adversary {
            cfg.validate()?;
        }
        self.mechanism.validate()
    }

    /// The δ the mechanism itself declares: `delta_mech` for Gaussian vector
    /// noise, 0 for the pure-ε mechanisms.
    pub fn mechanism_delta(&self) -> f64 {
        match &self.mechanism.params {
            MechanismParams::VectorNoise(p) if p.noise_family == NoiseFamily::Gaussian => p.delta_mech,
            _ => 0.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanisms::GrrParams;

    fn grr() -> AuditConfig {
        AuditConfig::new(
            MechanismSpec::new(1.0, MechanismParams::Grr(GrrParams { domain_size: 2 })),
            AdversarySpec::ValueMap,
        )
    }

    #[test]
    fn defaults_validate() {
        assert!(grr().validate(2).is_ok());
    }

    #[test]
    fn invariants_enforced() {
        assert!(grr().validate(1).is_err());
        let mut c = grr();
        c.alpha_conf = 0.6;
        assert!(c.validate(2).is_err());
        let mut c = grr();
        c.delta = 1.0;
        assert!(c.validate(2).is_err());
        let mut c = grr();
        c.trials = 0;
        assert!(c.validate(2).is_err());
        let mut c = grr();
        c.k = 3;
        c.estimator_mode = EstimatorMode::SymmetricBaseline;
        assert!(c.validate(5).is_err());
    }

    #[test]
    fn json_round_trip() {
        let c = grr();
        let s = serde_json::to_string(&c).unwrap();
        let back: AuditConfig = serde_json::from_str(&s).unwrap();
        assert_eq!(back, c);
    }
}
