mod common;

use ldp_audit::{
    ceiling, run_audit, run_sweep, run_symmetric_audit, AdversarySpec, AuditConfig, Auditor, EngineOptions,
    GrrParams, MechanismParams, MechanismSpec,
};
use proptest::prelude::*;
use statrs::distribution::{Binomial, DiscreteCDF};

fn config(params: MechanismParams, epsilon: f64, adversary: AdversarySpec, trials: u64) -> AuditConfig {
    let mut c = AuditConfig::new(MechanismSpec::new(epsilon, params), adversary);
    c.trials = trials;
    c
}

fn binary_grr(epsilon: f64, trials: u64) -> AuditConfig {
    let mut c = config(
        MechanismParams::Grr(GrrParams { domain_size: 2 }),
        epsilon,
        AdversarySpec::ValueMap,
        trials,
    );
    c.lambda = 0.0;
    c
}

#[test]
fn binary_grr_matches_map_success_probability() {
    let data = common::singleton_data(2, 8, 1);
    let r = run_audit(&binary_grr(1.0, 100_000), &data, &EngineOptions::default()).unwrap();
    let analytic = 1f64.exp() / (1.0 + 1f64.exp());
    assert!((r.summary.success_rate() - analytic).abs() < 0.004, "{}", r.summary.success_rate());
    assert!((0.93..=1.0).contains(&r.summary.epsilon_emp), "{}", r.summary.epsilon_emp);
}

#[test]
fn perfect_attack_reaches_ceiling() {
    let data = common::singleton_data(10, 8, 1);
    let c = config(MechanismParams::Identity, 1.0, AdversarySpec::ValueMap, 10_000);
    let r = run_audit(&c, &data, &EngineOptions::default()).unwrap();
    assert_eq!(r.summary.tp_count, 10_000);
    assert!((r.summary.epsilon_emp - 7.54).abs() < 0.01);
    assert_eq!(r.summary.epsilon_emp, r.summary.ceiling);
}

#[test]
fn worker_count_does_not_change_results() {
    let data = common::singleton_data(12, 8, 4);
    let mut c = config(
        MechanismParams::Grr(GrrParams { domain_size: 16 }),
        1.5,
        AdversarySpec::ValueMap,
        5000,
    );
    c.k = 3;
    let one = run_audit(&c, &data, &EngineOptions::default().with_workers(1)).unwrap();
    let eight = run_audit(&c, &data, &EngineOptions::default().with_workers(8)).unwrap();
    assert_eq!(one.summary, eight.summary);
    assert_eq!(one.trial_log, eight.trial_log);
}

#[test]
fn symmetric_no_information_clamps_to_zero() {
    let data = common::singleton_data(6, 8, 1);
    let c = config(MechanismParams::Constant, 1.0, AdversarySpec::EmbeddingNn, 10_000);
    let r = run_symmetric_audit(&c, &data, &EngineOptions::default()).unwrap();
    assert_eq!(r.summary.epsilon_emp, 0.0);
    assert_eq!(r.mechanism_queries, 20_000);
}

#[test]
fn single_point_sweep_equals_audit() {
    let data = common::singleton_data(2, 8, 1);
    let base = binary_grr(2.0, 5000);
    let options = EngineOptions::default();
    let cells = run_sweep(&base, &[2.0], &data, &options).unwrap();
    let direct = run_audit(&base, &data, &options).unwrap();
    assert_eq!(cells[0].result.as_ref().unwrap().summary, direct.summary);
}

#[test]
fn identity_sweep_sits_at_ceiling() {
    let data = common::singleton_data(5, 8, 1);
    let base = config(MechanismParams::Identity, 1.0, AdversarySpec::SurfaceOverlap, 2000);
    let cells = run_sweep(&base, &[0.1, 1.0, 10.0], &data, &EngineOptions::default()).unwrap();
    let cap = ceiling(2, 2000, 0.005, 0.0).unwrap();
    for cell in cells {
        assert_eq!(cell.result.unwrap().summary.epsilon_emp, cap);
    }
}

#[test]
fn sweep_seeds_are_offset_by_grid_index() {
    let data = common::singleton_data(2, 8, 1);
    let base = binary_grr(1.0, 3000);
    let options = EngineOptions::default();
    let cells = run_sweep(&base, &[1.0, 1.0], &data, &options).unwrap();
    let mut shifted = base.clone();
    shifted.base_seed += 1;
    let second = run_audit(&shifted, &data, &options).unwrap();
    assert_eq!(cells[1].result.as_ref().unwrap().summary, second.summary);
}

#[test]
fn success_counts_follow_the_binomial_law() {
    // Constant output with a deterministic attack succeeds with probability 1/k.
    let data = common::singleton_data(9, 8, 3);
    let (k, trials, audits) = (3usize, 1000u64, 100u64);
    let counts: Vec<u64> = (0..audits)
        .map(|seed| {
            let mut c = config(MechanismParams::Constant, 1.0, AdversarySpec::EmbeddingNn, trials);
            c.k = k;
            c.base_seed = 10_000 + seed;
            run_audit(&c, &data, &EngineOptions::default()).unwrap().summary.tp_count
        })
        .collect();
    let law = Binomial::new(1.0 / k as f64, trials).unwrap();
    // Five bins with cut points at binomial quantiles.
    let cuts: Vec<u64> = [0.2, 0.4, 0.6, 0.8].iter().map(|&q| law.inverse_cdf(q)).collect();
    let mut edges = vec![0.0];
    edges.extend(cuts.iter().map(|&c| law.cdf(c)));
    edges.push(1.0);
    let mut observed = [0f64; 5];
    for &tp in &counts {
        observed[cuts.iter().filter(|&&c| tp > c).count()] += 1.0;
    }
    let chi2: f64 = (0..5)
        .map(|b| {
            let expected = (edges[b + 1] - edges[b]) * audits as f64;
            (observed[b] - expected).powi(2) / expected
        })
        .sum();
    // 0.99 quantile of chi-square with 4 degrees of freedom.
    assert!(chi2 < 13.277, "chi2 = {chi2}, observed {observed:?}");
}

#[test]
fn removing_earlier_trials_leaves_later_ones_unchanged() {
    let data = common::singleton_data(8, 8, 3);
    let mut c = config(
        MechanismParams::Grr(GrrParams { domain_size: 8 }),
        1.0,
        AdversarySpec::ValueMap,
        100,
    );
    c.k = 4;
    let auditor = Auditor::new(c, &data).unwrap();
    let late = auditor.run_trial(57).unwrap();
    let full = run_audit(auditor.config(), &data, &EngineOptions::default()).unwrap();
    assert_eq!(full.trial_log.unwrap()[57], late);
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn log_is_consistent_with_summary(seed in any::<u64>(), k in 2usize..5, eps in 0.0f64..4.0, lambda in -5.0f64..5.0) {
        let data = common::singleton_data(6, 8, 2);
        let mut c = config(MechanismParams::Grr(GrrParams { domain_size: 6 }), eps, AdversarySpec::ValueMap, 300);
        c.k = k;
        c.lambda = lambda;
        c.base_seed = seed;
        let r = run_audit(&c, &data, &EngineOptions::default()).unwrap();
        let log = r.trial_log.unwrap();
        prop_assert_eq!(log.len(), 300);
        prop_assert_eq!(log.iter().filter(|o| o.success).count() as u64, r.summary.tp_count);
        for (i, o) in log.iter().enumerate() {
            prop_assert_eq!(o.trial_index, i as u64);
            prop_assert!(o.guess_position < k && o.target_position < k);
            prop_assert_eq!(o.success, o.guess_position == o.target_position);
            prop_assert_eq!(o.candidate_ids.len(), k);
        }
        prop_assert!(r.summary.epsilon_emp <= r.summary.ceiling);
    }
}
