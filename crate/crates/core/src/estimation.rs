//! Exact binomial confidence bounds and empirical privacy-loss estimators.
//!
//! The efficient estimator needs only the number of successful attributions.
//! Under a uniform target draw from `k` candidates, any ε-LDP mechanism (with
//! slack δ) satisfies `(k−1)(P(A) − δ) ≤ e^ε (1 − P(A))` for the attack
//! success probability `P(A)`, so plugging in a one-sided Clopper–Pearson
//! lower bound `p̂₀` on `P(A)` gives the lower estimate
//! `ε_emp = ln((k−1)(p̂₀ − δ)/(1 − p̂₀))`, clamped at 0.

use serde::{Deserialize, Serialize};

use crate::error::{AuditError, Result};

/// One-sided confidence level used when none is given. With `T = 10⁴`, `k = 2`
/// and `δ = 0` it puts the all-success ceiling at 7.5427.
pub const DEFAULT_ALPHA: f64 = 0.005;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorMode {
    /// Aggregated successes only; one mechanism query per trial.
    #[default]
    Efficient,
    /// Separate true- and false-positive experiments; two queries per trial.
    SymmetricBaseline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateSummary {
    pub tp_count: u64,
    pub trials: u64,
    /// False-positive count and trials, for the symmetric baseline.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fp_count: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fp_trials: Option<u64>,
    pub p_lower: f64,
    pub epsilon_emp: f64,
    pub ceiling: f64,
    pub k: usize,
    pub alpha_conf: f64,
    pub delta: f64,
    pub mode: EstimatorMode,
}

impl EstimateSummary {
    pub fn success_rate(&self) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            self.tp_count as f64 / self.trials as f64
        }
    }

    /// Efficient estimate from `tp_count` successes in `trials`.
    pub fn efficient(tp_count: u64, trials: u64, k: usize, alpha: f64, delta: f64) -> Result<Self> {
        let p_lower = clopper_pearson_lower(tp_count, trials, alpha)?;
        let ceiling = ceiling(k, trials, alpha, delta)?;
        Ok(Self {
            tp_count,
            trials,
            fp_count: None,
            fp_trials: None,
            p_lower,
            epsilon_emp: epsilon_emp(p_lower, k, delta)?,
            ceiling,
            k,
            alpha_conf: alpha,
            delta,
            mode: EstimatorMode::Efficient,
        })
    }

    /// Symmetric baseline estimate. The ceiling reported is the baseline's own:
    /// all true positives and no false positives.
    pub fn symmetric(
        tp_count: u64,
        tp_trials: u64,
        fp_count: u64,
        fp_trials: u64,
        alpha: f64,
        delta: f64,
    ) -> Result<Self> {
        Ok(Self {
            tp_count,
            trials: tp_trials,
            fp_count: Some(fp_count),
            fp_trials: Some(fp_trials),
            p_lower: clopper_pearson_lower(tp_count, tp_trials, alpha)?,
            epsilon_emp: symmetric_baseline_estimate(
                tp_count, tp_trials, fp_count, fp_trials, alpha, delta,
            )?,
            ceiling: symmetric_baseline_estimate(tp_trials, tp_trials, 0, fp_trials, alpha, delta)?,
            k: 2,
            alpha_conf: alpha,
            delta,
            mode: EstimatorMode::SymmetricBaseline,
        })
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(AuditError::domain(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    Ok(())
}

fn check_counts(successes: u64, trials: u64) -> Result<()> {
    if trials == 0 || successes > trials {
        return Err(AuditError::domain(format!(
            "need 0 <= successes <= trials and trials >= 1, got {successes}/{trials}"
        )));
    }
    Ok(())
}

/// `ln C(n, s)` as a sum of `min(s, n−s)` logarithms.
fn ln_choose(n: u64, s: u64) -> f64 {
    let s = s.min(n - s);
    (1..=s)
        .map(|i| ((n - s + i) as f64 / i as f64).ln())
        .sum()
}

/// `P(X ≥ s)` for `X ~ Binomial(n, p)`, summed term by term in log space from
/// `j = s` upward until terms past the mode become negligible.
pub fn binomial_upper_tail(n: u64, p: f64, s: u64) -> f64 {
    if s == 0 {
        return 1.0;
    }
    if s > n || p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return 1.0;
    }
    let ln_p = p.ln();
    let ln_q = (-p).ln_1p();
    let mode = ((n + 1) as f64 * p).floor() as u64;
    let mut ln_term = ln_choose(n, s) + s as f64 * ln_p + (n - s) as f64 * ln_q;
    let mut max = ln_term;
    let mut scaled_sum = 1.0;
    let mut j = s;
    while j < n {
        ln_term += ((n - j) as f64 / (j + 1) as f64).ln() + ln_p - ln_q;
        j += 1;
        if ln_term > max {
            scaled_sum = scaled_sum * (max - ln_term).exp() + 1.0;
            max = ln_term;
        } else {
            scaled_sum += (ln_term - max).exp();
            if j > mode && ln_term < max - 60.0 {
                break;
            }
        }
    }
    (max + scaled_sum.ln()).exp().min(1.0)
}

/// Exact one-sided lower confidence bound on a binomial proportion: the `p`
/// at which `P(X ≥ successes) = alpha`. Zero successes give 0.
pub fn clopper_pearson_lower(successes: u64, trials: u64, alpha: f64) -> Result<f64> {
    check_counts(successes, trials)?;
    check_alpha(alpha)?;
    if successes == 0 {
        return Ok(0.0);
    }
    if successes == trials {
        return Ok(alpha.powf(1.0 / trials as f64));
    }
    // The upper tail is increasing in p; bisect until the bracket collapses.
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if binomial_upper_tail(trials, mid, successes) < alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Exact one-sided upper confidence bound: the `p` at which
/// `P(X ≤ successes) = alpha`. All successes give 1.
pub fn clopper_pearson_upper(successes: u64, trials: u64, alpha: f64) -> Result<f64> {
    check_counts(successes, trials)?;
    Ok(1.0 - clopper_pearson_lower(trials - successes, trials, alpha)?)
}

/// `max(0, ln((k−1)(p_lower − δ)/(1 − p_lower)))`.
pub fn epsilon_emp(p_lower: f64, k: usize, delta: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&p_lower) {
        return Err(AuditError::domain(format!(
            "p_lower must lie in [0, 1), got {p_lower}"
        )));
    }
    if k < 2 {
        return Err(AuditError::domain(format!("k must be at least 2, got {k}")));
    }
    if !(0.0..1.0).contains(&delta) {
        return Err(AuditError::domain(format!("delta must lie in [0, 1), got {delta}")));
    }
    if p_lower <= delta {
        return Ok(0.0);
    }
    let ratio = (k - 1) as f64 * (p_lower - delta) / (1.0 - p_lower);
    Ok(if ratio <= 1.0 { 0.0 } else { ratio.ln() })
}

/// Largest attainable estimate: every trial succeeds.
pub fn ceiling(k: usize, trials: u64, alpha: f64, delta: f64) -> Result<f64> {
    epsilon_emp(clopper_pearson_lower(trials, trials, alpha)?, k, delta)
}

/// `max(0, ln((TP_lower − δ)/FP_upper))` from separate true- and
/// false-positive experiments.
pub fn symmetric_baseline_estimate(
    tp_successes: u64,
    tp_trials: u64,
    fp_successes: u64,
    fp_trials: u64,
    alpha: f64,
    delta: f64,
) -> Result<f64> {
    if !(0.0..1.0).contains(&delta) {
        return Err(AuditError::domain(format!("delta must lie in [0, 1), got {delta}")));
    }
    let tp_lower = clopper_pearson_lower(tp_successes, tp_trials, alpha)?;
    let fp_upper = clopper_pearson_upper(fp_successes, fp_trials, alpha)?;
    if tp_lower <= delta {
        return Ok(0.0);
    }
    Ok(((tp_lower - delta) / fp_upper).ln().max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_successes() {
        assert_eq!(clopper_pearson_lower(0, 100, 0.005).unwrap(), 0.0);
    }

    #[test]
    fn all_successes_closed_form() {
        let p = clopper_pearson_lower(10_000, 10_000, 0.005).unwrap();
        assert!((p - 0.005f64.powf(1e-4)).abs() < 1e-15);
        assert!((p - 0.999_470_31).abs() < 1e-8);
    }

    #[test]
    fn half_successes() {
        // Normal approximation: 0.5 − 2.5758·0.005 = 0.48712.
        let p = clopper_pearson_lower(5_000, 10_000, 0.005).unwrap();
        assert!((p - 0.4871).abs() < 5e-4, "{p}");
        assert!((p - (0.5 - 2.5758 * 0.005)).abs() < 1e-3);
    }

    #[test]
    fn tail_matches_closed_forms() {
        // P(X >= n) = p^n and P(X >= 1) = 1 − (1−p)^n.
        for (n, p) in [(10u64, 0.3), (100, 0.97), (1000, 0.01)] {
            let all: f64 = binomial_upper_tail(n, p, n);
            assert!((all - p.powi(n as i32)).abs() < 1e-14 * p.powi(n as i32).max(1e-300));
            let any = binomial_upper_tail(n, p, 1);
            assert!((any - (1.0 - (1.0 - p).powi(n as i32))).abs() < 1e-13);
        }
    }

    #[test]
    fn input_validation() {
        assert!(clopper_pearson_lower(5, 4, 0.1).is_err());
        assert!(clopper_pearson_lower(0, 0, 0.1).is_err());
        assert!(clopper_pearson_lower(1, 4, 0.0).is_err());
        assert!(clopper_pearson_lower(1, 4, 1.0).is_err());
        assert!(epsilon_emp(1.0, 2, 0.0).is_err());
        assert!(epsilon_emp(0.5, 1, 0.0).is_err());
        assert!(epsilon_emp(0.5, 2, 1.0).is_err());
    }

    #[test]
    fn epsilon_examples() {
        assert_eq!(epsilon_emp(0.5, 2, 0.0).unwrap(), 0.0);
        assert!((epsilon_emp(0.999_470_31, 2, 0.0).unwrap() - 7.5427).abs() < 1e-3);
        assert!((epsilon_emp(0.6, 4, 0.0).unwrap() - 4.5f64.ln()).abs() < 1e-12);
        assert!((epsilon_emp(0.6, 4, 0.0).unwrap() - 1.5041).abs() < 1e-4);
        assert_eq!(epsilon_emp(0.3, 2, 0.4).unwrap(), 0.0);
    }

    #[test]
    fn ceiling_examples() {
        let c2 = ceiling(2, 10_000, 0.005, 0.0).unwrap();
        assert!((c2 - 7.54).abs() < 0.01, "{c2}");
        assert!(ceiling(2, 1_000_000, 0.005, 0.0).unwrap() > c2);
        let c4 = ceiling(4, 10_000, 0.005, 0.0).unwrap();
        assert!((c4 - c2 - 3f64.ln()).abs() < 1e-6);
        let c1 = ceiling(2, 1, 0.005, 0.0).unwrap();
        assert!(c1.is_finite() && c1 >= 0.0);
    }

    #[test]
    fn upper_bound_closed_form() {
        let u = clopper_pearson_upper(0, 10_000, 0.005).unwrap();
        assert!((u - (1.0 - 0.005f64.powf(1e-4))).abs() < 1e-15);
        assert_eq!(clopper_pearson_upper(7, 7, 0.005).unwrap(), 1.0);
    }

    #[test]
    fn symmetric_examples() {
        assert_eq!(
            symmetric_baseline_estimate(5_000, 10_000, 5_000, 10_000, 0.005, 0.0).unwrap(),
            0.0
        );
        let perfect = symmetric_baseline_estimate(10_000, 10_000, 0, 10_000, 0.005, 0.0).unwrap();
        let root = 0.005f64.powf(1e-4);
        let closed = (root / (1.0 - root)).ln();
        assert!(perfect.is_finite() && perfect > 0.0);
        assert!((perfect - closed).abs() < 1e-9);
        let with_delta =
            symmetric_baseline_estimate(10_000, 10_000, 0, 10_000, 0.005, 1e-3).unwrap();
        assert!(with_delta < closed);
    }

    #[test]
    fn clamping_condition() {
        for k in [2usize, 3, 8] {
            for delta in [0.0, 0.05] {
                for i in 0..100 {
                    let p = i as f64 / 100.0;
                    let eps = epsilon_emp(p, k, delta).unwrap();
                    assert!(eps >= 0.0);
                    let clamped = (k - 1) as f64 * (p - delta) <= 1.0 - p;
                    assert_eq!(eps == 0.0, clamped, "k={k} delta={delta} p={p}");
                }
            }
        }
    }

    proptest! {
        #[test]
        fn epsilon_monotone_in_p(a in 0.0f64..0.999, b in 0.0f64..0.999, k in 2usize..16, delta in 0.0f64..0.2) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(epsilon_emp(lo, k, delta).unwrap() <= epsilon_emp(hi, k, delta).unwrap());
        }

        #[test]
        fn lower_bound_below_point_estimate(n in 1u64..2000, frac in 0.0f64..=1.0) {
            let s = ((n as f64) * frac).round() as u64;
            let p = clopper_pearson_lower(s, n, 0.005).unwrap();
            prop_assert!(p <= s as f64 / n as f64);
            prop_assert!((0.0..1.0).contains(&p));
        }
    }
}
