use std::sync::Arc;

use lsleak::attacks::{
    count_reconstruct, dataset_reconstruct, AttackBudget, Attacker, CountBounds, CountSearch, Detector,
    ReconstructOptions, Schedule,
};
use lsleak::data::{count_matching, AttributeSpec, Dataset, RangePredicate, Schema};
use lsleak::harness::synthetic::mixed_dataset;
use lsleak::mechanisms::{DefenseMode, GroupIdpCustodian};
use lsleak::{Error, PrivacyLedger};
use proptest::prelude::*;

fn custodian(data: &Arc<Dataset>, k: u32, mode: DefenseMode, seed: u64) -> GroupIdpCustodian {
    GroupIdpCustodian::new(Arc::clone(data), k, mode, PrivacyLedger::unbounded(), seed).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn full_round_trip(seed in any::<u64>(), k_pick in 0usize..3, extra in 0usize..120) {
        let k = [1u32, 2, 5][k_pick];
        let n = 2 * k as usize + extra;
        let data = Arc::new(mixed_dataset(n, seed));
        let c = custodian(&data, k, DefenseMode::Plain, seed ^ 0x5eed);
        let mut report = dataset_reconstruct(&c, k, AttackBudget::direct(1e-10), &ReconstructOptions::default()).unwrap();
        report.verify_against(&data);
        prop_assert!(report.is_exact());
        prop_assert_eq!(report.budget_spent, c.ledger().spent());
        prop_assert_eq!(report.protected_queries, c.ledger().call_count());
    }

    #[test]
    fn counts_agree_across_detectors(seed in any::<u64>(), u in 0u32..60, w in 1u32..70, linear in any::<bool>()) {
        let data = Arc::new(mixed_dataset(30, seed));
        let phi = RangePredicate::range(1, f64::from(u), f64::from(u + w)).unwrap();
        let search = if linear { CountSearch::Linear } else { CountSearch::Binary };
        let want = count_matching(&data, &phi).unwrap() as u64;
        let plain = custodian(&data, 1, DefenseMode::Plain, seed);
        prop_assert_eq!(count_reconstruct(&plain, &phi, 1, 1e-10, search).unwrap(), want);
        let hardened = custodian(&data, 1, DefenseMode::Hardened, seed);
        let mut variance = Attacker::new(&hardened, 1, AttackBudget::direct(1e-10).with_detector(Detector::variance(1000))).unwrap();
        prop_assert_eq!(variance.exact_count(&phi, CountBounds::new(0, 30), search).unwrap(), want);
        let rounded = custodian(&data, 1, DefenseMode::RoundNearestInteger, seed);
        let mut repeated = Attacker::new(&rounded, 1, AttackBudget::direct(1e-10).with_detector(Detector::Repeated { m: 15 })).unwrap();
        prop_assert_eq!(repeated.exact_count(&phi, CountBounds::new(0, 30), search).unwrap(), want);
    }
}

#[test]
fn smallest_dataset_with_every_threshold_noisy() {
    let schema = Schema::new(vec![AttributeSpec::numeric("x", 0.0, 3.0, 1.0)]).unwrap();
    let data = Arc::new(Dataset::new(schema, vec![vec![1.0], vec![3.0]]).unwrap());
    let phi = RangePredicate::range(0, 0.0, 2.0).unwrap();
    for search in [CountSearch::Linear, CountSearch::Binary] {
        let c = custodian(&data, 1, DefenseMode::Plain, 1);
        assert_eq!(count_reconstruct(&c, &phi, 1, 2e-10, search).unwrap(), 1);
    }
}

#[test]
fn geometric_schedule_keeps_total_below_twice_first_call() {
    let data = Arc::new(mixed_dataset(12, 4));
    let c = custodian(&data, 1, DefenseMode::Plain, 4);
    let budget = AttackBudget::direct(1e-10).with_schedule(Schedule::Geometric);
    let mut attacker = Attacker::new(&c, 1, budget).unwrap();
    let phi = RangePredicate::range(1, 0.0, 60.0).unwrap();
    let want = count_matching(&data, &phi).unwrap() as u64;
    assert_eq!(attacker.exact_count(&phi, CountBounds::new(0, 12), CountSearch::Binary).unwrap(), want);
    assert!(c.ledger().spent() < 2e-10);
    assert_eq!(attacker.budget_spent(), c.ledger().spent());
}

#[test]
fn geometric_schedule_runs_out_instead_of_overspending() {
    let data = Arc::new(mixed_dataset(200, 5));
    let c = custodian(&data, 1, DefenseMode::Plain, 5);
    let budget = AttackBudget::direct(1e-10).with_schedule(Schedule::Geometric);
    match dataset_reconstruct(&c, 1, budget, &ReconstructOptions::default()) {
        Err(Error::PartialReconstruction { partial }) => {
            assert!(partial.budget_spent <= 2e-10);
            assert_eq!(partial.protected_queries, c.ledger().call_count());
        }
        other => panic!("expected a partial reconstruction, got {other:?}"),
    }
}

#[test]
fn ledger_cap_stops_the_attack_with_partial_results() {
    let data = Arc::new(mixed_dataset(100, 6));
    let c = GroupIdpCustodian::new(Arc::clone(&data), 1, DefenseMode::Plain, PrivacyLedger::new(Some(5e-8)).unwrap(), 6).unwrap();
    let err = dataset_reconstruct(&c, 1, AttackBudget::direct(1e-10), &ReconstructOptions::default()).unwrap_err();
    assert!(err.is_budget(), "{err}");
    assert!(c.ledger().spent() <= 5e-8);
}

#[test]
fn attacker_side_target_is_respected() {
    let data = Arc::new(mixed_dataset(100, 7));
    let c = custodian(&data, 1, DefenseMode::Plain, 7);
    let budget = AttackBudget::new(3e-8, 1e-10, Detector::Direct).unwrap();
    let err = dataset_reconstruct(&c, 1, budget, &ReconstructOptions::default()).unwrap_err();
    assert!(matches!(err, Error::PartialReconstruction { .. }));
    assert!(c.ledger().spent() <= 3e-8);
}

#[test]
fn custom_order_is_honoured() {
    let data = Arc::new(mixed_dataset(60, 8));
    let c = custodian(&data, 2, DefenseMode::Plain, 8);
    let options = ReconstructOptions { order: Some(vec![0, 2, 1]), ..Default::default() };
    let mut report = dataset_reconstruct(&c, 2, AttackBudget::direct(1e-10), &options).unwrap();
    report.verify_against(&data);
    assert!(report.is_exact());
    let bad = ReconstructOptions { order: Some(vec![0, 0]), ..Default::default() };
    assert!(dataset_reconstruct(&c, 2, AttackBudget::direct(1e-10), &bad).is_err());
}
