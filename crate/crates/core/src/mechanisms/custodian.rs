//! Query-answering custodians.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::laplace::{check_scale, NoiseSource};
use super::sensitivity::sensitivity_from_count;
use crate::data::{count_matching, Dataset, RangePredicate, Schema, ThresholdQuery, Triviality};
use crate::error::{Error, Result};
use crate::ledger::PrivacyLedger;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DefenseMode {
    /// `f + Laplace(Λ/ε*)`, noise-free when Λ = 0.
    Plain,
    /// `f + Laplace((1+Λ)/ε*)`, always noisy.
    Hardened,
    RoundNearestInteger,
    /// Plain value mapped to 1 if `>= 0.5`, else 0.
    RoundToBinary,
}

impl DefenseMode {
    pub fn scale(self, lambda: u8, eps_star: f64) -> f64 {
        match self {
            DefenseMode::Hardened => (1.0 + f64::from(lambda)) / eps_star,
            _ => f64::from(lambda) / eps_star,
        }
    }

    fn finish(self, truth: u8, noise: f64) -> f64 {
        let plain = f64::from(truth) + noise;
        match self {
            DefenseMode::Plain | DefenseMode::Hardened => plain,
            DefenseMode::RoundNearestInteger => plain.round() + 0.0,
            DefenseMode::RoundToBinary => {
                if plain >= 0.5 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupIdpParams {
    pub k: u32,
    pub eps_star: f64,
}

impl GroupIdpParams {
    pub fn new(k: u32, eps_star: f64) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidArgument("group size k must be at least 1".into()));
        }
        if !(eps_star > 0.0 && eps_star.is_finite()) {
            return Err(Error::InvalidArgument(format!("eps* must be positive, got {eps_star}")));
        }
        Ok(Self { k, eps_star })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MechanismAnswer {
    pub value: f64,
    pub charged: f64,
}

fn checked_scale(mode: DefenseMode, lambda: u8, eps_star: f64) -> Result<f64> {
    let scale = mode.scale(lambda, eps_star);
    check_scale(scale)?;
    Ok(scale)
}

/// One Group IDP answer. Noise is drawn from the stream of `seed` at the
/// call index the ledger assigns.
pub fn answer_threshold(
    dataset: &Dataset,
    query: &ThresholdQuery,
    params: GroupIdpParams,
    mode: DefenseMode,
    ledger: &PrivacyLedger,
    seed: u64,
) -> Result<MechanismAnswer> {
    let count = count_matching(dataset, &query.predicate)?;
    let triviality = query.predicate.triviality(dataset.schema())?;
    let lambda = sensitivity_from_count(count, dataset.len(), query.threshold, params.k, triviality);
    let truth = u8::from(count as i64 > query.threshold);
    let scale = checked_scale(mode, lambda, params.eps_star)?;
    let call = ledger.require(params.eps_star, 1)?;
    let noise = NoiseSource::new(seed).laplace(call, scale);
    Ok(MechanismAnswer { value: mode.finish(truth, noise), charged: params.eps_star })
}

/// Dataset size; a 0-sensitivity release that charges nothing.
pub fn dataset_size_query(dataset: &Dataset) -> usize {
    dataset.len()
}

pub fn answer_bdp_existence(
    dataset: &Dataset,
    predicate: &RangePredicate,
    eps_star: f64,
    ledger: &PrivacyLedger,
    seed: u64,
) -> Result<MechanismAnswer> {
    let count = count_matching(dataset, predicate)?;
    let sensitivity = u8::from(count > 0 && count < dataset.len());
    let scale = f64::from(sensitivity) / eps_star;
    check_scale(scale)?;
    let call = ledger.require(eps_star, 1)?;
    let noise = NoiseSource::new(seed).laplace(call, scale);
    Ok(MechanismAnswer { value: f64::from(u8::from(count > 0)) + noise, charged: eps_star })
}

type IndexKey = (Vec<(usize, u64, u64)>, usize);

/// Custodian-side count cache: for each (other conditions, last attribute)
/// pair it keeps the sorted values of that attribute among matching rows,
/// so sweeps over the last attribute cost a binary search per query.
#[derive(Debug, Default)]
struct CountIndex {
    sorted: Mutex<HashMap<IndexKey, Arc<Vec<f64>>>>,
}

const INDEX_CAPACITY: usize = 512;

impl CountIndex {
    fn count(&self, dataset: &Dataset, predicate: &RangePredicate) -> Result<usize> {
        predicate.check(dataset.schema())?;
        let Some(last) = predicate.conditions.last() else {
            return Ok(dataset.len());
        };
        let parts = predicate.intersected();
        if parts.iter().any(|&(_, u, v)| !(u < v)) {
            return Ok(0);
        }
        let target = last.attribute;
        let mut base: Vec<(usize, f64, f64)> = parts.iter().copied().filter(|p| p.0 != target).collect();
        base.sort_by_key(|p| p.0);
        let &(_, lo, hi) = parts.iter().find(|p| p.0 == target).expect("target present");
        let key = (base.iter().map(|&(a, u, v)| (a, u.to_bits(), v.to_bits())).collect(), target);
        let values = {
            let mut cache = self.sorted.lock().expect("index lock poisoned");
            if let Some(v) = cache.get(&key) {
                Arc::clone(v)
            } else {
                let mut vals: Vec<f64> = dataset
                    .rows()
                    .iter()
                    .filter(|r| base.iter().all(|&(a, u, v)| u <= r[a] && r[a] < v))
                    .map(|r| r[target])
                    .collect();
                vals.sort_by(f64::total_cmp);
                let vals = Arc::new(vals);
                if cache.len() >= INDEX_CAPACITY {
                    cache.clear();
                }
                cache.insert(key, Arc::clone(&vals));
                vals
            }
        };
        Ok(values.partition_point(|&x| x < hi) - values.partition_point(|&x| x < lo))
    }
}

/// Threshold-query interface seen by the attacker.
pub trait ThresholdMechanism: Sync {
    fn schema(&self) -> &Schema;

    /// Dataset size, public metadata.
    fn public_size(&self) -> usize;

    /// False for the truthful baseline, which releases exact answers.
    fn is_protected(&self) -> bool {
        true
    }

    fn answer(&self, query: &ThresholdQuery, eps_star: f64) -> Result<f64>;

    /// `times` independent calls of the same query, each charged `eps_star`.
    fn answer_repeated(&self, query: &ThresholdQuery, eps_star: f64, times: usize) -> Result<Vec<f64>> {
        (0..times).map(|_| self.answer(query, eps_star)).collect()
    }
}

/// Custodian running the k-Laplace mechanism or one of its defended variants.
#[derive(Debug)]
pub struct GroupIdpCustodian {
    dataset: Arc<Dataset>,
    k: u32,
    mode: DefenseMode,
    ledger: PrivacyLedger,
    noise: NoiseSource,
    index: CountIndex,
}

impl GroupIdpCustodian {
    pub fn new(dataset: Arc<Dataset>, k: u32, mode: DefenseMode, ledger: PrivacyLedger, seed: u64) -> Result<Self> {
        GroupIdpParams::new(k, 1.0)?;
        Ok(Self { dataset, k, mode, ledger, noise: NoiseSource::new(seed), index: CountIndex::default() })
    }

    pub fn ledger(&self) -> &PrivacyLedger {
        &self.ledger
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn mode(&self) -> DefenseMode {
        self.mode
    }

    pub fn dataset_size(&self) -> usize {
        dataset_size_query(&self.dataset)
    }

    fn truth_and_lambda(&self, query: &ThresholdQuery) -> Result<(u8, u8)> {
        let count = self.index.count(&self.dataset, &query.predicate)?;
        let triviality = if count == 0 || count == self.dataset.len() {
            query.predicate.triviality(self.dataset.schema())?
        } else {
            // A predicate matching some rows but not all cannot be constant on the grid.
            Triviality::Mixed
        };
        let lambda = sensitivity_from_count(count, self.dataset.len(), query.threshold, self.k, triviality);
        Ok((u8::from(count as i64 > query.threshold), lambda))
    }

    pub fn answer_threshold(&self, query: &ThresholdQuery, eps_star: f64) -> Result<MechanismAnswer> {
        let value = self.answer(query, eps_star)?;
        Ok(MechanismAnswer { value, charged: eps_star })
    }
}

impl ThresholdMechanism for GroupIdpCustodian {
    fn schema(&self) -> &Schema {
        self.dataset.schema()
    }

    fn public_size(&self) -> usize {
        self.dataset.len()
    }

    fn answer(&self, query: &ThresholdQuery, eps_star: f64) -> Result<f64> {
        Ok(self.answer_repeated(query, eps_star, 1)?[0])
    }

    fn answer_repeated(&self, query: &ThresholdQuery, eps_star: f64, times: usize) -> Result<Vec<f64>> {
        let (truth, lambda) = self.truth_and_lambda(query)?;
        let scale = checked_scale(self.mode, lambda, eps_star)?;
        let first = self.ledger.require(eps_star, times as u64)?;
        let mut out = vec![0.0; times];
        self.noise.laplace_batch(first, scale, &mut out);
        for x in &mut out {
            *x = self.mode.finish(truth, *x);
        }
        Ok(out)
    }
}

/// Global-sensitivity Laplace custodian (true ε-DP), the negative control.
#[derive(Debug)]
pub struct GlobalLaplaceCustodian {
    dataset: Arc<Dataset>,
    ledger: PrivacyLedger,
    noise: NoiseSource,
    index: CountIndex,
}

impl GlobalLaplaceCustodian {
    pub fn new(dataset: Arc<Dataset>, ledger: PrivacyLedger, seed: u64) -> Self {
        Self { dataset, ledger, noise: NoiseSource::new(seed), index: CountIndex::default() }
    }

    pub fn ledger(&self) -> &PrivacyLedger {
        &self.ledger
    }
}

impl ThresholdMechanism for GlobalLaplaceCustodian {
    fn schema(&self) -> &Schema {
        self.dataset.schema()
    }

    fn public_size(&self) -> usize {
        self.dataset.len()
    }

    fn answer(&self, query: &ThresholdQuery, eps_star: f64) -> Result<f64> {
        Ok(self.answer_repeated(query, eps_star, 1)?[0])
    }

    fn answer_repeated(&self, query: &ThresholdQuery, eps_star: f64, times: usize) -> Result<Vec<f64>> {
        let truth = f64::from(u8::from(self.index.count(&self.dataset, &query.predicate)? as i64 > query.threshold));
        let scale = 1.0 / eps_star;
        check_scale(scale)?;
        let first = self.ledger.require(eps_star, times as u64)?;
        let mut out = vec![0.0; times];
        self.noise.laplace_batch(first, scale, &mut out);
        out.iter_mut().for_each(|x| *x += truth);
        Ok(out)
    }
}

/// Unprotected baseline: exact answers, no budget.
#[derive(Debug)]
pub struct TruthfulOracle {
    dataset: Arc<Dataset>,
    index: CountIndex,
    queries: AtomicU64,
}

impl TruthfulOracle {
    pub fn new(dataset: Arc<Dataset>) -> Self {
        Self { dataset, index: CountIndex::default(), queries: AtomicU64::new(0) }
    }

    pub fn queries(&self) -> u64 {
        self.queries.load(Ordering::Relaxed)
    }
}

impl ThresholdMechanism for TruthfulOracle {
    fn schema(&self) -> &Schema {
        self.dataset.schema()
    }

    fn public_size(&self) -> usize {
        self.dataset.len()
    }

    fn is_protected(&self) -> bool {
        false
    }

    fn answer(&self, query: &ThresholdQuery, _eps_star: f64) -> Result<f64> {
        self.queries.fetch_add(1, Ordering::Relaxed);
        let count = self.index.count(&self.dataset, &query.predicate)?;
        Ok(f64::from(u8::from(count as i64 > query.threshold)))
    }
}

/// Existence-query interface of a BDP custodian.
pub trait ExistenceMechanism: Sync {
    fn schema(&self) -> &Schema;
    fn answer_existence(&self, predicate: &RangePredicate, eps_star: f64) -> Result<f64>;
}

/// Bootstrap Laplace custodian for `Q_φ = [∃ r: φ(r)]`.
#[derive(Debug)]
pub struct BdpCustodian {
    dataset: Arc<Dataset>,
    ledger: PrivacyLedger,
    noise: NoiseSource,
    index: CountIndex,
}

impl BdpCustodian {
    pub fn new(dataset: Arc<Dataset>, ledger: PrivacyLedger, seed: u64) -> Self {
        Self { dataset, ledger, noise: NoiseSource::new(seed), index: CountIndex::default() }
    }

    pub fn ledger(&self) -> &PrivacyLedger {
        &self.ledger
    }
}

impl ExistenceMechanism for BdpCustodian {
    fn schema(&self) -> &Schema {
        self.dataset.schema()
    }

    fn answer_existence(&self, predicate: &RangePredicate, eps_star: f64) -> Result<f64> {
        let count = self.index.count(&self.dataset, predicate)?;
        let sensitivity = u8::from(count > 0 && count < self.dataset.len());
        let scale = f64::from(sensitivity) / eps_star;
        check_scale(scale)?;
        let call = self.ledger.require(eps_star, 1)?;
        Ok(f64::from(u8::from(count > 0)) + self.noise.laplace(call, scale))
    }
}
