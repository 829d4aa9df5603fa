use partstore::simulation::{bucketize, run_scenario, run_trial, simulation_backend, ScenarioConfig, TrialOutcome};
use proptest::prelude::*;

fn scenario(parts: usize, inactive_rate: f64, trials: usize) -> ScenarioConfig {
    ScenarioConfig { inactive_rate, trials, master_seed: 2024, ..ScenarioConfig::new(parts) }
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let config = scenario(2, 0.3, 60);
    let one = run_scenario(&config, 1).unwrap();
    let four = run_scenario(&config, 4).unwrap();
    assert_eq!(one, four);
}

#[test]
fn identical_seed_and_index_give_identical_outcomes() {
    let config = scenario(4, 0.3, 1);
    let backend = simulation_backend(config.crypto);
    for i in 0..10 {
        assert_eq!(run_trial(&config, i, &backend), run_trial(&config, i, &backend));
    }
}

#[test]
fn everyone_active_recovers_every_trial() {
    for (parts, unique) in [(1, true), (4, false), (8, true)] {
        let config = ScenarioConfig { unique_peers: unique, ..scenario(parts, 0.0, 100) };
        let report = run_scenario(&config, 1).unwrap();
        assert_eq!(report.r, 1.0, "parts={parts}");
        assert_eq!(report.aborted, 0);
    }
}

#[test]
fn everyone_inactive_recovers_nothing() {
    let config = scenario(4, 1.0, 30);
    let backend = simulation_backend(config.crypto);
    for i in 0..30 {
        let o = run_trial(&config, i, &backend);
        assert!(!o.full);
        assert_eq!(o.parts_fraction, 0.0);
    }
}

#[test]
fn full_recovery_rate_does_not_grow_with_inactivity() {
    let trials = 2_000;
    let rates: Vec<f64> =
        [0.0, 0.5, 0.9].iter().map(|&rate| run_scenario(&scenario(2, rate, trials), 1).unwrap().r).collect();
    for w in rates.windows(2) {
        let se = (w[1] * (1.0 - w[1]) / trials as f64).sqrt();
        assert!(w[1] <= w[0] + se, "{rates:?}");
    }
}

#[test]
fn ts_never_loses_a_recovery_on_paired_trials() {
    let with = ScenarioConfig { ts_enabled: true, ..scenario(4, 0.3, 1) };
    let without = ScenarioConfig { ts_enabled: false, ..with.clone() };
    let backend = simulation_backend(with.crypto);
    let mut gained = 0;
    for i in 0..150 {
        let a = run_trial(&with, i, &backend);
        let b = run_trial(&without, i, &backend);
        assert!(a.full || !b.full, "trial {i}: TS lost a recovery");
        gained += (a.full && !b.full) as usize;
    }
    assert!(gained > 0);
}

proptest! {
    #[test]
    fn buckets_partition_trials(raw in proptest::collection::vec((any::<bool>(), 0u8..=8), 1..200)) {
        let outcomes: Vec<TrialOutcome> = raw
            .iter()
            .map(|&(full, k)| TrialOutcome {
                full,
                parts_fraction: if full { 1.0 } else { f64::from(k.min(7)) / 8.0 },
                aborted: false,
            })
            .collect();
        let r = bucketize(&outcomes).unwrap();
        let n = outcomes.len() as f64;
        let zero = outcomes.iter().filter(|o| !o.full && o.parts_fraction == 0.0).count() as f64;
        let counted = ((r.r + r.r75 + r.r50 + r.r25) * n).round() + zero;
        prop_assert_eq!(counted, n);
        prop_assert_eq!(r.ra, r.r + r.r75 + r.r50 + r.r25);
        prop_assert!(r.ra <= 1.0 + 1e-12);
    }
}
