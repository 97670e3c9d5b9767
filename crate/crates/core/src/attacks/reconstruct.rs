//! Count, column and full-dataset reconstruction.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::engine::Grid;
use super::{AttackBudget, Attacker, CountBounds, CountSearch, PartialRecovery, VerdictTallies};
use crate::data::{Condition, Dataset, RangePredicate};
use crate::error::{Error, Result};
use crate::mechanisms::ThresholdMechanism;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundsMode {
    /// Use the schema's published bounds.
    #[default]
    Schema,
    /// Double `[-1, 1)` until it holds every record.
    Discover,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructOptions {
    pub search: CountSearch,
    pub bounds: BoundsMode,
    /// Step through every grid value instead of bisecting.
    pub linear_sweep: bool,
    /// Attribute indices in reconstruction order; default is ascending domain size.
    pub order: Option<Vec<usize>>,
}

impl Default for ReconstructOptions {
    fn default() -> Self {
        Self { search: CountSearch::Binary, bounds: BoundsMode::Schema, linear_sweep: false, order: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeRecovery {
    pub name: String,
    /// Recovered multiset, ascending.
    pub values: Vec<f64>,
    pub distinct_values: usize,
    pub protected_queries: u64,
    pub unprotected_queries: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exact: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ReconstructionReport {
    pub attributes: Vec<AttributeRecovery>,
    /// Recovered rows in schema attribute order; empty for single-column runs.
    pub rows: Vec<Vec<f64>>,
    pub protected_queries: u64,
    pub unprotected_queries: u64,
    pub budget_spent: f64,
    pub tallies: VerdictTallies,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset_exact: Option<bool>,
}

impl ReconstructionReport {
    /// Fill exactness flags by comparing grid cells with the plaintext.
    pub fn verify_against(&mut self, truth: &Dataset) {
        let schema = truth.schema();
        for rec in &mut self.attributes {
            let Ok(i) = schema.index_of(&rec.name) else {
                rec.exact = Some(false);
                continue;
            };
            let spec = &schema.attributes()[i];
            let cells = |xs: &mut dyn Iterator<Item = f64>| {
                let mut v: Vec<Option<u64>> = xs.map(|x| spec.grid_index(x)).collect();
                v.sort_unstable();
                v
            };
            rec.exact = Some(cells(&mut rec.values.iter().copied()) == cells(&mut truth.column(i)));
        }
        if !self.rows.is_empty() || self.attributes.len() == schema.len() {
            let recovered = Dataset::new(schema.clone(), self.rows.clone());
            self.dataset_exact = Some(match recovered {
                Ok(d) => d.grid_multiset() == truth.grid_multiset(),
                Err(_) => false,
            });
        }
    }

    pub fn is_exact(&self) -> bool {
        self.dataset_exact.unwrap_or(true) && self.attributes.iter().all(|a| a.exact == Some(true))
    }
}

fn grid_for<M: ThresholdMechanism + ?Sized>(
    attacker: &mut Attacker<'_, M>,
    base: &RangePredicate,
    attr: usize,
    total: u64,
    options: &ReconstructOptions,
) -> Result<Grid> {
    let spec = attacker.mechanism().schema().attribute(attr)?.clone();
    match options.bounds {
        BoundsMode::Schema => Ok(Grid { lower: spec.lower, precision: spec.precision, len: spec.grid_len() }),
        BoundsMode::Discover => {
            if !attacker.budget().detector.reveals_value() && attacker.mechanism().is_protected() {
                return Err(Error::NotApplicable("bound discovery needs a detector that reveals clean values".into()));
            }
            let (mut u, mut v) = (-1.0f64, 1.0f64);
            for _ in 0..1100 {
                let range = base.clone().and(Condition { attribute: attr, lower: u, upper: v });
                if attacker.exact_count(&range, CountBounds::new(0, total), options.search)? == total {
                    let len = ((v - u) / spec.precision).ceil() as u64;
                    return Ok(Grid { lower: u, precision: spec.precision, len });
                }
                u *= 2.0;
                v *= 2.0;
            }
            Err(Error::Inconsistent("bound doubling never covered every record".into()))
        }
    }
}

/// Count of records satisfying `predicate`, each probe charged `eps_share / n`.
pub fn count_reconstruct<M: ThresholdMechanism + ?Sized>(
    mech: &M,
    predicate: &RangePredicate,
    k: u32,
    eps_share: f64,
    search: CountSearch,
) -> Result<u64> {
    predicate.check(mech.schema())?;
    let n = mech.public_size() as u64;
    let per_probe = eps_share / n.max(1) as f64;
    let mut attacker = Attacker::new(mech, k, AttackBudget::new(eps_share, per_probe, super::Detector::Direct)?)?;
    attacker.check_applicable()?;
    attacker.exact_count(predicate, CountBounds::new(0, n), search)
}

/// Multiset of values of one attribute with the per-probe budget
/// `min(1e-10, eps_target / ((upper - lower) / γ)) / n`.
pub fn column_reconstruct<M: ThresholdMechanism + ?Sized>(
    mech: &M,
    attr: usize,
    k: u32,
    eps_target: f64,
) -> Result<Vec<f64>> {
    let spec = mech.schema().attribute(attr)?;
    let steps = ((spec.upper - spec.lower) / spec.precision).max(1.0);
    let share = super::DEFAULT_EPS_PER_CALL.min(eps_target / steps);
    let per_probe = share / (mech.public_size().max(1)) as f64;
    let mut attacker = Attacker::new(mech, k, AttackBudget::new(eps_target, per_probe, super::Detector::Direct)?)?;
    Ok(attacker.reconstruct_column(attr, &ReconstructOptions::default())?.values)
}

/// Full reconstruction under `budget`; see [`Attacker::reconstruct_dataset`].
pub fn dataset_reconstruct<M: ThresholdMechanism + ?Sized>(
    mech: &M,
    k: u32,
    budget: AttackBudget,
    options: &ReconstructOptions,
) -> Result<ReconstructionReport> {
    Attacker::new(mech, k, budget)?.reconstruct_dataset(options)
}

impl<M: ThresholdMechanism + ?Sized> Attacker<'_, M> {
    fn snapshot(&self, mut report: ReconstructionReport) -> ReconstructionReport {
        report.protected_queries = self.protected_calls();
        report.unprotected_queries = self.unprotected_calls();
        report.budget_spent = self.budget_spent();
        report.tallies = self.tallies();
        report
    }

    /// Reconstruct one column on its own.
    pub fn reconstruct_column(&mut self, attr: usize, options: &ReconstructOptions) -> Result<AttributeRecovery> {
        self.check_applicable()?;
        let spec = self.mechanism().schema().attribute(attr)?.clone();
        let (p0, u0) = (self.protected_calls(), self.unprotected_calls());
        let base = RangePredicate::default();
        let n = self.n();
        let result = grid_for(self, &base, attr, n, options)
            .and_then(|grid| Ok((grid, self.sweep(&base, attr, grid, n, options.search, options.linear_sweep)?)));
        let (grid, cells) = result.map_err(|e| self.partial(e, Vec::new(), Vec::new()))?;
        let mut values: Vec<f64> = cells
            .iter()
            .flat_map(|&(j, mult)| std::iter::repeat(grid.point(j)).take(mult as usize))
            .collect();
        values.sort_by(f64::total_cmp);
        Ok(AttributeRecovery {
            name: spec.name,
            values,
            distinct_values: cells.len(),
            protected_queries: self.protected_calls() - p0,
            unprotected_queries: self.unprotected_calls() - u0,
            exact: None,
        })
    }

    /// Column reconstruction wrapped in a report.
    pub fn column_report(&mut self, attr: usize, options: &ReconstructOptions) -> Result<ReconstructionReport> {
        let recovery = self.reconstruct_column(attr, options)?;
        Ok(self.snapshot(ReconstructionReport { attributes: vec![recovery], ..Default::default() }))
    }

    fn partial(&self, err: Error, attributes: Vec<String>, groups: Vec<(Vec<f64>, u64)>) -> Error {
        if !err.is_budget() {
            return err;
        }
        Error::PartialReconstruction {
            partial: Box::new(PartialRecovery {
                attributes,
                groups,
                protected_queries: self.protected_calls(),
                budget_spent: self.budget_spent(),
            }),
        }
    }

    /// Reconstruct every attribute: the first over the whole dataset, each
    /// later one separately within every value combination found so far.
    pub fn reconstruct_dataset(&mut self, options: &ReconstructOptions) -> Result<ReconstructionReport> {
        self.check_applicable()?;
        let schema = self.mechanism().schema().clone();
        let order = match &options.order {
            Some(order) => {
                let mut seen = BTreeSet::new();
                for &a in order {
                    schema.attribute(a)?;
                    if !seen.insert(a) {
                        return Err(Error::InvalidArgument(format!("attribute {a} repeated in order")));
                    }
                }
                order.clone()
            }
            None => {
                let mut idx: Vec<usize> = (0..schema.len()).collect();
                idx.sort_by_key(|&i| schema.attributes()[i].grid_len());
                idx
            }
        };

        // Each group: (conditions, grid cells per attribute so far, count).
        let mut groups: Vec<(RangePredicate, Vec<f64>, u64)> = vec![(RangePredicate::default(), Vec::new(), self.n())];
        let mut done: Vec<String> = Vec::new();
        let mut recoveries = Vec::with_capacity(order.len());
        for &attr in &order {
            let spec = schema.attributes()[attr].clone();
            let (p0, u0) = (self.protected_calls(), self.unprotected_calls());
            let mut next = Vec::new();
            let mut values = Vec::new();
            let mut distinct = BTreeSet::new();
            for (base, prefix, size) in &groups {
                let swept = grid_for(self, base, attr, *size, options)
                    .and_then(|grid| Ok((grid, self.sweep(base, attr, grid, *size, options.search, options.linear_sweep)?)));
                let (grid, cells) = match swept {
                    Ok(v) => v,
                    Err(e) => {
                        let groups = groups.iter().map(|(_, p, c)| (p.clone(), *c)).collect();
                        return Err(self.partial(e, done, groups));
                    }
                };
                let placed: u64 = cells.iter().map(|c| c.1).sum();
                if placed != *size {
                    return Err(Error::Inconsistent(format!(
                        "attribute `{}`: group counts sum to {placed}, expected {size}",
                        spec.name
                    )));
                }
                for &(j, mult) in cells.iter().rev() {
                    let value = grid.point(j);
                    let cond = Condition { attribute: attr, lower: value, upper: grid.point(j + 1) };
                    let mut row = prefix.clone();
                    row.push(value);
                    values.extend(std::iter::repeat(value).take(mult as usize));
                    distinct.insert(value.to_bits());
                    next.push((base.clone().and(cond), row, mult));
                }
            }
            values.sort_by(f64::total_cmp);
            recoveries.push(AttributeRecovery {
                name: spec.name.clone(),
                values,
                distinct_values: distinct.len(),
                protected_queries: self.protected_calls() - p0,
                unprotected_queries: self.unprotected_calls() - u0,
                exact: None,
            });
            done.push(spec.name);
            groups = next;
        }

        let mut rows = Vec::with_capacity(self.n() as usize);
        for (_, prefix, count) in &groups {
            let mut row = vec![0.0; schema.len()];
            for (pos, &attr) in order.iter().enumerate() {
                row[attr] = prefix[pos];
            }
            rows.extend(std::iter::repeat(row).take(*count as usize));
        }
        // Report attributes in schema order.
        recoveries.sort_by_key(|r| schema.index_of(&r.name).unwrap_or(usize::MAX));
        Ok(self.snapshot(ReconstructionReport { attributes: recoveries, rows, ..Default::default() }))
    }
}
