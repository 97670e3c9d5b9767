//! Uniqueness, membership and attribute inference about one target.

use serde::{Deserialize, Serialize};

use super::engine::Grid;
use super::{AttackBudget, Attacker, CountBounds, CountSearch};
use crate::data::{Condition, RangePredicate, Schema};
use crate::error::{Error, Result};
use crate::mechanisms::ThresholdMechanism;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetedOutcome<T> {
    pub answer: T,
    pub protected_calls: u64,
    pub unprotected_calls: u64,
    pub budget_spent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeInference {
    pub attribute: String,
    /// Values of the attribute among records matching the known values, ascending.
    pub values: Vec<f64>,
    pub group_size: u64,
}

/// Conjunction selecting the grid cell of each known value.
pub fn target_predicate(schema: &Schema, known: &[(usize, f64)]) -> Result<RangePredicate> {
    let mut predicate = RangePredicate::default();
    for &(attr, value) in known {
        let spec = schema.attribute(attr)?;
        let j = spec.grid_index(value).ok_or_else(|| {
            Error::InvalidArgument(format!("value {value} outside the domain of `{}`", spec.name))
        })?;
        predicate = predicate.and(Condition { attribute: attr, lower: spec.grid_point(j), upper: spec.grid_point(j + 1) });
    }
    Ok(predicate)
}

fn outcome<T, M: ThresholdMechanism + ?Sized>(attacker: &Attacker<'_, M>, answer: T) -> TargetedOutcome<T> {
    TargetedOutcome {
        answer,
        protected_calls: attacker.protected_calls(),
        unprotected_calls: attacker.unprotected_calls(),
        budget_spent: attacker.budget_spent(),
    }
}

/// Whether exactly one record matches: noisy at `b = k`, clean at `b = k + 1`.
fn is_unique<M: ThresholdMechanism + ?Sized>(attacker: &mut Attacker<'_, M>, predicate: &RangePredicate) -> Result<bool> {
    if !attacker.mechanism().is_protected() {
        return Ok(attacker.truthful(predicate, 0)? && !attacker.truthful(predicate, 1)?);
    }
    let k = i64::from(attacker.k());
    let at_k = attacker.probe_once(predicate, k)?;
    let above = attacker.probe_once(predicate, k + 1)?;
    Ok(at_k.is_noisy() && !above.is_noisy())
}

pub fn confirm_uniqueness<M: ThresholdMechanism + ?Sized>(
    mech: &M,
    known: &[(usize, f64)],
    k: u32,
    budget: AttackBudget,
) -> Result<TargetedOutcome<bool>> {
    let predicate = target_predicate(mech.schema(), known)?;
    let mut attacker = Attacker::new(mech, k, budget)?;
    attacker.check_applicable()?;
    let unique = is_unique(&mut attacker, &predicate)?;
    Ok(outcome(&attacker, unique))
}

/// For a target unique in the population: absent exactly when the verdicts
/// at `b = k - 1, k` are noisy then clean.
pub fn membership_inference<M: ThresholdMechanism + ?Sized>(
    mech: &M,
    known: &[(usize, f64)],
    k: u32,
    budget: AttackBudget,
) -> Result<TargetedOutcome<bool>> {
    let predicate = target_predicate(mech.schema(), known)?;
    let mut attacker = Attacker::new(mech, k, budget)?;
    attacker.check_applicable()?;
    let present = if mech.is_protected() {
        let k = i64::from(k);
        let below = attacker.probe_once(&predicate, k - 1)?;
        let at_k = attacker.probe_once(&predicate, k)?;
        !(below.is_noisy() && !at_k.is_noisy())
    } else {
        attacker.truthful(&predicate, 0)?
    };
    Ok(outcome(&attacker, present))
}

/// Values of `target` among the records matching `known`. With
/// `assume_unique` the group is taken to be a single record, which turns a
/// two-valued attribute into one uniqueness check.
pub fn attribute_inference<M: ThresholdMechanism + ?Sized>(
    mech: &M,
    known: &[(usize, f64)],
    target: usize,
    k: u32,
    budget: AttackBudget,
    assume_unique: bool,
) -> Result<TargetedOutcome<AttributeInference>> {
    let schema = mech.schema();
    let spec = schema.attribute(target)?.clone();
    if known.iter().any(|&(a, _)| a == target) {
        return Err(Error::InvalidArgument(format!("target attribute `{}` is among the known values", spec.name)));
    }
    let predicate = target_predicate(schema, known)?;
    let mut attacker = Attacker::new(mech, k, budget)?;
    attacker.check_applicable()?;
    let n = attacker.n();
    let group_size = if assume_unique {
        1
    } else {
        attacker.exact_count(&predicate, CountBounds::new(0, n), CountSearch::Binary)?
    };

    let values = if group_size == 1 && spec.grid_len() == 2 {
        let low = predicate.clone().and(Condition {
            attribute: target,
            lower: spec.grid_point(0),
            upper: spec.grid_point(1),
        });
        let j = if is_unique(&mut attacker, &low)? { 0 } else { 1 };
        vec![spec.grid_point(j)]
    } else {
        let grid = Grid { lower: spec.lower, precision: spec.precision, len: spec.grid_len() };
        let cells = attacker.sweep(&predicate, target, grid, group_size, CountSearch::Binary, false)?;
        let mut values: Vec<f64> = cells
            .iter()
            .flat_map(|&(j, mult)| std::iter::repeat(grid.point(j)).take(mult as usize))
            .collect();
        values.sort_by(f64::total_cmp);
        values
    };
    let answer = AttributeInference { attribute: spec.name, values, group_size };
    Ok(outcome(&attacker, answer))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attacks::Detector;
    use crate::data::{AttributeSpec, Dataset};
    use crate::ledger::PrivacyLedger;
    use crate::mechanisms::{DefenseMode, GroupIdpCustodian, TruthfulOracle};
    use std::sync::Arc;

    fn people() -> Arc<Dataset> {
        let schema = Schema::new(vec![
            AttributeSpec::numeric("age", 0.0, 125.0, 1.0),
            AttributeSpec::numeric("zip", 0.0, 99.0, 1.0),
            AttributeSpec::numeric("balance", -100_000.0, 1_000_000.0, 1.0),
            AttributeSpec::categorical("housing", ["no", "yes"]),
        ])
        .unwrap();
        let rows = vec![
            vec![30.0, 12.0, 5400.0, 1.0],
            vec![30.0, 12.0, -20.0, 0.0],
            vec![41.0, 12.0, 999_999.0, 0.0],
            vec![41.0, 13.0, 0.0, 1.0],
            vec![55.0, 14.0, 77.0, 0.0],
            vec![60.0, 14.0, 12.0, 1.0],
        ];
        Arc::new(Dataset::new(schema, rows).unwrap())
    }

    fn custodian(k: u32, seed: u64) -> GroupIdpCustodian {
        GroupIdpCustodian::new(people(), k, DefenseMode::Plain, PrivacyLedger::unbounded(), seed).unwrap()
    }

    #[test]
    fn uniqueness_uses_two_calls() {
        let c = custodian(1, 1);
        let budget = AttackBudget::direct(1e-10);
        let unique = confirm_uniqueness(&c, &[(0, 55.0)], 1, budget).unwrap();
        assert!(unique.answer);
        assert_eq!(unique.protected_calls, 2);
        let pair = confirm_uniqueness(&c, &[(0, 30.0)], 1, budget).unwrap();
        assert!(!pair.answer);
        let absent = confirm_uniqueness(&c, &[(0, 99.0)], 1, budget).unwrap();
        assert!(!absent.answer);
        assert_eq!(absent.protected_calls, 2);
        assert_eq!(c.ledger().call_count(), 6);
    }

    #[test]
    fn membership_protected_and_baseline() {
        let c = custodian(1, 2);
        let budget = AttackBudget::direct(1e-10);
        let present = membership_inference(&c, &[(0, 41.0), (1, 13.0)], 1, budget).unwrap();
        assert!(present.answer);
        assert_eq!(present.protected_calls, 2);
        let absent = membership_inference(&c, &[(0, 41.0), (1, 14.0)], 1, budget).unwrap();
        assert!(!absent.answer);
        let oracle = TruthfulOracle::new(people());
        let base = membership_inference(&oracle, &[(0, 41.0), (1, 13.0)], 1, budget).unwrap();
        assert!(base.answer);
        assert_eq!((base.protected_calls, base.unprotected_calls), (0, 1));
    }

    #[test]
    fn infers_balance_and_binary_flag() {
        let c = custodian(1, 3);
        let budget = AttackBudget::direct(1e-10);
        let bal = attribute_inference(&c, &[(0, 41.0), (1, 12.0)], 2, 1, budget, true).unwrap();
        assert_eq!(bal.answer.values, vec![999_999.0]);
        assert!(bal.protected_calls <= 2 * 21 * 3);
        let flag = attribute_inference(&c, &[(0, 60.0)], 3, 1, budget, true).unwrap();
        assert_eq!(flag.answer.values, vec![1.0]);
        assert_eq!(flag.protected_calls, 2);
        let group = attribute_inference(&c, &[(0, 30.0)], 2, 1, budget, false).unwrap();
        assert_eq!(group.answer.group_size, 2);
        assert_eq!(group.answer.values, vec![-20.0, 5400.0]);
    }

    #[test]
    fn rejects_bad_targets() {
        let c = custodian(1, 4);
        let budget = AttackBudget::direct(1e-10);
        assert!(target_predicate(c.schema(), &[(0, 500.0)]).is_err());
        assert!(attribute_inference(&c, &[(0, 30.0)], 0, 1, budget, true).is_err());
        let big_k = custodian(4, 4);
        assert!(matches!(
            confirm_uniqueness(&big_k, &[(0, 30.0)], 4, budget),
            Err(Error::NotApplicable(_))
        ));
        let repeated = AttackBudget::direct(1e-10).with_detector(Detector::Repeated { m: 15 });
        let out = confirm_uniqueness(&c, &[(0, 55.0)], 1, repeated).unwrap();
        assert!(out.answer);
        assert_eq!(out.protected_calls, 30);
    }
}
