//! Hint leakage under empirical-neighbors definitions: a chooser that looks at
//! the data may pick a constant mechanism that simply prints what it saw.

use std::collections::BTreeSet;

use crate::error::{Error, Result};

/// Records over small integer domains.
pub type Record = Vec<u64>;

/// Dataset up to row order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Multiset(Vec<Record>);

impl Multiset {
    pub fn new(mut rows: Vec<Record>) -> Self {
        rows.sort_unstable();
        Self(rows)
    }

    pub fn rows(&self) -> &[Record] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn distinct(&self) -> BTreeSet<Record> {
        self.0.iter().cloned().collect()
    }

    fn replaced(&self, at: usize, with: &Record) -> Self {
        let mut rows = self.0.clone();
        rows[at] = with.clone();
        Self::new(rows)
    }
}

pub type NeighborPairs = BTreeSet<(Multiset, Multiset)>;

/// What the custodian's chooser gets to see.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Hint {
    Nothing,
    Pairs(NeighborPairs),
}

/// Mechanism that ignores its input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConstantMechanism<T> {
    output: T,
}

impl<T: Clone + PartialEq> ConstantMechanism<T> {
    pub fn new(output: T) -> Self {
        Self { output }
    }

    pub fn answer(&self, _input: &Multiset) -> T {
        self.output.clone()
    }

    pub fn probability(&self, _input: &Multiset, output: &T) -> f64 {
        if *output == self.output {
            1.0
        } else {
            0.0
        }
    }

    /// `P(M(D1) = o) <= e^ε P(M(D2) = o)` for every pair and every output in
    /// the support. Both sides are equal here, so this holds for any ε ≥ 0.
    pub fn satisfies(&self, pairs: &NeighborPairs, eps: f64) -> bool {
        let bound = eps.exp();
        pairs.iter().all(|(a, b)| {
            let (pa, pb) = (self.probability(a, &self.output), self.probability(b, &self.output));
            pa <= bound * pb && pb <= bound * pa
        })
    }
}

/// The chooser: publish the hint verbatim.
pub fn hint_leakage_demo(hint: Hint) -> ConstantMechanism<Hint> {
    ConstantMechanism::new(hint)
}

const MAX_PAIRS: usize = 1 << 20;

/// Group IDP pairs: the true dataset against every dataset reachable by
/// changing up to `k` records to other values of `domain`, in both orders.
pub fn idp_neighbor_pairs(truth: &Multiset, domain: &[Record], k: usize) -> Result<NeighborPairs> {
    let mut frontier = BTreeSet::from([truth.clone()]);
    let mut reached = BTreeSet::new();
    for _ in 0..k {
        let mut next = BTreeSet::new();
        for d in &frontier {
            for at in 0..d.len() {
                for value in domain {
                    if *value != d.rows()[at] {
                        let m = d.replaced(at, value);
                        if m != *truth && reached.insert(m.clone()) {
                            next.insert(m);
                        }
                    }
                }
            }
            if reached.len() > MAX_PAIRS {
                return Err(Error::InvalidArgument("neighbor enumeration too large".into()));
            }
        }
        frontier = next;
    }
    let mut pairs = NeighborPairs::new();
    for d in reached {
        pairs.insert((truth.clone(), d.clone()));
        pairs.insert((d, truth.clone()));
    }
    Ok(pairs)
}

/// BDP pairs: datasets of `size` rows drawn from the distinct records of
/// `truth`, differing in one replaced record.
pub fn bdp_neighbor_pairs(truth: &Multiset, size: usize) -> Result<NeighborPairs> {
    let support: Vec<Record> = truth.distinct().into_iter().collect();
    let mut datasets = vec![Vec::new()];
    for _ in 0..size {
        let mut next = Vec::new();
        for rows in &datasets {
            let start = rows.last().map_or(0, |last| support.iter().position(|r| r == last).unwrap_or(0));
            for r in &support[start..] {
                let mut grown: Vec<Record> = rows.clone();
                grown.push(r.clone());
                next.push(grown);
            }
        }
        if next.len() > MAX_PAIRS {
            return Err(Error::InvalidArgument("neighbor enumeration too large".into()));
        }
        datasets = next;
    }
    let mut pairs = NeighborPairs::new();
    for rows in datasets {
        let d = Multiset::new(rows);
        for at in 0..d.len() {
            for value in &support {
                if *value != d.rows()[at] {
                    pairs.insert((d.clone(), d.replaced(at, value)));
                }
            }
        }
    }
    Ok(pairs)
}

/// The dataset present in every pair, if exactly one is.
pub fn recover_dataset_from_pairs(pairs: &NeighborPairs) -> Option<Multiset> {
    let mut iter = pairs.iter();
    let (a, b) = iter.next()?;
    let mut common: BTreeSet<&Multiset> = BTreeSet::from([a, b]);
    for (a, b) in iter {
        common.retain(|d| *d == a || *d == b);
    }
    let mut left = common.into_iter();
    match (left.next(), left.next()) {
        (Some(d), None) => Some(d.clone()),
        _ => None,
    }
}

/// Every record appearing in any pair.
pub fn recover_distinct_from_pairs(pairs: &NeighborPairs) -> BTreeSet<Record> {
    pairs.iter().flat_map(|(a, b)| a.rows().iter().chain(b.rows())).cloned().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn truth() -> Multiset {
        Multiset::new(vec![vec![2], vec![0], vec![2]])
    }

    fn domain() -> Vec<Record> {
        (0..4).map(|v| vec![v]).collect()
    }

    #[test]
    fn constant_mechanism_ignores_input() {
        let m = ConstantMechanism::new(vec![true, false, true]);
        assert_eq!(m.answer(&truth()), vec![true, false, true]);
        assert_eq!(m.answer(&Multiset::new(vec![])), vec![true, false, true]);
    }

    #[test]
    fn idp_hint_reveals_dataset() {
        let pairs = idp_neighbor_pairs(&truth(), &domain(), 1).unwrap();
        let mech = hint_leakage_demo(Hint::Pairs(pairs.clone()));
        for eps in [1e-10, 0.01, 1.0] {
            assert!(mech.satisfies(&pairs, eps));
        }
        let Hint::Pairs(leaked) = mech.answer(&Multiset::new(vec![vec![9]])) else { panic!("expected pairs") };
        assert_eq!(recover_dataset_from_pairs(&leaked), Some(truth()));
        let group = idp_neighbor_pairs(&truth(), &domain(), 2).unwrap();
        assert!(group.len() > pairs.len());
        assert_eq!(recover_dataset_from_pairs(&group), Some(truth()));
    }

    #[test]
    fn single_record_over_two_values_is_ambiguous() {
        let one = Multiset::new(vec![vec![1]]);
        let pairs = idp_neighbor_pairs(&one, &[vec![0], vec![1]], 1).unwrap();
        assert_eq!(recover_dataset_from_pairs(&pairs), None);
    }

    #[test]
    fn bdp_hint_reveals_distinct_records() {
        let pairs = bdp_neighbor_pairs(&truth(), 3).unwrap();
        assert!(hint_leakage_demo(Hint::Pairs(pairs.clone())).satisfies(&pairs, 0.5));
        assert_eq!(recover_distinct_from_pairs(&pairs), truth().distinct());
        for (a, b) in &pairs {
            assert_eq!(a.len(), b.len());
        }
    }

    #[test]
    fn empty_hint_cannot_depend_on_data() {
        let a = hint_leakage_demo(Hint::Nothing);
        let b = hint_leakage_demo(Hint::Nothing);
        assert_eq!(a, b);
        assert_eq!(a.answer(&truth()), b.answer(&Multiset::new(vec![vec![3]])));
    }
}
