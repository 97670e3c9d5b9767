//! Distinct-record enumeration against the bootstrap Laplace existence query.

use serde::{Deserialize, Serialize};

use crate::data::{Condition, RangePredicate, Schema};
use crate::detectors::{classify_direct, NoiseVerdict};
use crate::error::{Error, Result};
use crate::ledger::CompensatedSum;
use crate::mechanisms::ExistenceMechanism;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BdpEnumeration {
    /// Distinct records on the schema grid, sorted. Multiplicities are not observable.
    pub records: Vec<Vec<f64>>,
    pub queries: u64,
    pub budget_spent: f64,
}

/// Box of grid cells `[lo[i], hi[i])` per attribute.
#[derive(Debug, Clone)]
struct Region {
    lo: Vec<u64>,
    hi: Vec<u64>,
}

impl Region {
    fn predicate(&self, schema: &Schema) -> RangePredicate {
        let conditions = schema
            .attributes()
            .iter()
            .enumerate()
            .map(|(i, a)| Condition { attribute: i, lower: a.grid_point(self.lo[i]), upper: a.grid_point(self.hi[i]) })
            .collect();
        RangePredicate::new(conditions)
    }

    /// Halves along the widest attribute; `None` for a single cell.
    fn split(&self) -> Option<(Region, Region)> {
        let (axis, width) = (0..self.lo.len()).map(|i| (i, self.hi[i] - self.lo[i])).max_by_key(|&(i, w)| (w, std::cmp::Reverse(i)))?;
        if width < 2 {
            return None;
        }
        let mid = self.lo[axis] + width / 2;
        let (mut left, mut right) = (self.clone(), self.clone());
        left.hi[axis] = mid;
        right.lo[axis] = mid;
        Some((left, right))
    }
}

struct Enumerator<'a, M: ExistenceMechanism + ?Sized> {
    mech: &'a M,
    eps: f64,
    queries: u64,
    spent: CompensatedSum,
    found: Vec<Vec<f64>>,
}

impl<M: ExistenceMechanism + ?Sized> Enumerator<'_, M> {
    fn ask(&mut self, region: &Region) -> Result<NoiseVerdict> {
        let value = self.mech.answer_existence(&region.predicate(self.mech.schema()), self.eps)?;
        self.queries += 1;
        self.spent.add(self.eps);
        Ok(classify_direct(value))
    }

    /// `verdict` is known for `region`: CleanOne holds every record, Noisy
    /// some but not all.
    fn visit(&mut self, region: Region, verdict: NoiseVerdict) -> Result<()> {
        if verdict == NoiseVerdict::CleanZero {
            return Ok(());
        }
        let Some((left, right)) = region.split() else {
            let schema = self.mech.schema();
            self.found.push(schema.attributes().iter().zip(&region.lo).map(|(a, &j)| a.grid_point(j)).collect());
            return Ok(());
        };
        let first = self.ask(&left)?;
        let second = match (verdict, first) {
            // The parent holds every record, so the halves are complementary.
            (NoiseVerdict::CleanOne, NoiseVerdict::CleanZero) => NoiseVerdict::CleanOne,
            (NoiseVerdict::CleanOne, NoiseVerdict::CleanOne) => NoiseVerdict::CleanZero,
            (NoiseVerdict::CleanOne, NoiseVerdict::Noisy) => NoiseVerdict::Noisy,
            // A non-empty parent with an empty half.
            (NoiseVerdict::Noisy, NoiseVerdict::CleanZero) => NoiseVerdict::Noisy,
            (NoiseVerdict::Noisy, NoiseVerdict::CleanOne) => {
                return Err(Error::Inconsistent("a sub-region holds every record but its parent does not".into()))
            }
            _ => self.ask(&right)?,
        };
        self.visit(left, first)?;
        self.visit(right, second)
    }
}

/// Bisect the schema's grid, pruning regions answered exactly 0.
pub fn bdp_enumerate_distinct<M: ExistenceMechanism + ?Sized>(mech: &M, eps_per_call: f64) -> Result<BdpEnumeration> {
    if !(eps_per_call > 0.0 && eps_per_call.is_finite()) {
        return Err(Error::InvalidArgument(format!("eps_per_call must be positive, got {eps_per_call}")));
    }
    let schema = mech.schema();
    if schema.is_empty() {
        return Err(Error::InvalidArgument("schema has no attributes".into()));
    }
    let root = Region { lo: vec![0; schema.len()], hi: schema.attributes().iter().map(|a| a.grid_len()).collect() };
    let mut walk = Enumerator { mech, eps: eps_per_call, queries: 0, spent: CompensatedSum::default(), found: Vec::new() };
    let verdict = walk.ask(&root)?;
    walk.visit(root, verdict)?;
    let mut records = walk.found;
    records.sort_by(|a, b| a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal));
    Ok(BdpEnumeration { records, queries: walk.queries, budget_spent: walk.spent.value() })
}
