//! Schemas, datasets, range predicates and threshold queries.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttributeKind {
    Numeric,
    Categorical,
}

/// One column of a schema. Values live on the grid `lower + j * precision`
/// for `j = 0..grid_len()`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeSpec {
    pub name: String,
    pub kind: AttributeKind,
    pub lower: f64,
    pub upper: f64,
    pub precision: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub codebook: Option<Vec<String>>,
}

impl AttributeSpec {
    pub fn numeric(name: impl Into<String>, lower: f64, upper: f64, precision: f64) -> Self {
        Self {
            name: name.into(),
            kind: AttributeKind::Numeric,
            lower,
            upper,
            precision,
            codebook: None,
        }
    }

    /// Categorical attribute coded `0..labels.len()` in the given order.
    pub fn categorical<S: Into<String>>(name: impl Into<String>, labels: impl IntoIterator<Item = S>) -> Self {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        let upper = labels.len().saturating_sub(1) as f64;
        Self {
            name: name.into(),
            kind: AttributeKind::Categorical,
            lower: 0.0,
            upper,
            precision: 1.0,
            codebook: Some(labels),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Schema(format!("attribute `{}`: {msg}", self.name)));
        if !(self.lower.is_finite() && self.upper.is_finite()) {
            return bad("bounds must be finite");
        }
        if !(self.precision.is_finite() && self.precision > 0.0) {
            return bad("precision must be positive");
        }
        match self.kind {
            AttributeKind::Numeric => {
                if self.lower >= self.upper {
                    return bad("lower must be below upper");
                }
            }
            AttributeKind::Categorical => {
                let Some(book) = &self.codebook else {
                    return bad("categorical attribute needs a codebook");
                };
                if book.is_empty() {
                    return bad("codebook is empty");
                }
                let unique: HashSet<&String> = book.iter().collect();
                if unique.len() != book.len() {
                    return bad("codebook labels must be unique");
                }
                if self.lower > 0.0 || self.upper < (book.len() - 1) as f64 || self.precision != 1.0 {
                    return bad("categorical codes must span 0..len-1 with precision 1");
                }
            }
        }
        Ok(())
    }

    pub fn grid_point(&self, j: u64) -> f64 {
        self.lower + j as f64 * self.precision
    }

    /// Number of grid points in `[lower, upper]`.
    pub fn grid_len(&self) -> u64 {
        let mut j = ((self.upper - self.lower) / self.precision).floor().max(0.0) as u64;
        while self.grid_point(j + 1) <= self.upper {
            j += 1;
        }
        while j > 0 && self.grid_point(j) > self.upper {
            j -= 1;
        }
        j + 1
    }

    /// Index of the grid cell `[grid_point(j), grid_point(j+1))` holding `x`.
    pub fn grid_index(&self, x: f64) -> Option<u64> {
        if !(x >= self.lower) || x > self.upper {
            return None;
        }
        let mut j = ((x - self.lower) / self.precision).floor().max(0.0) as u64;
        while j > 0 && self.grid_point(j) > x {
            j -= 1;
        }
        while self.grid_point(j + 1) <= x {
            j += 1;
        }
        Some(j.min(self.grid_len() - 1))
    }

    /// Smallest grid index whose point is `>= x`.
    fn first_grid_at_or_above(&self, x: f64) -> u64 {
        if x <= self.lower {
            return 0;
        }
        let mut j = ((x - self.lower) / self.precision).ceil() as u64;
        while j > 0 && self.grid_point(j - 1) >= x {
            j -= 1;
        }
        while self.grid_point(j) < x {
            j += 1;
        }
        j
    }

    /// Number of grid points in `[u, v)`.
    pub fn grid_points_in(&self, u: f64, v: f64) -> u64 {
        let len = self.grid_len();
        let a = self.first_grid_at_or_above(u).min(len);
        let b = self.first_grid_at_or_above(v).min(len);
        b.saturating_sub(a)
    }

    pub fn code_of(&self, label: &str) -> Option<u32> {
        self.codebook
            .as_ref()?
            .iter()
            .position(|l| l == label)
            .map(|p| p as u32)
    }

    pub fn label_of(&self, code: f64) -> Option<&str> {
        let book = self.codebook.as_ref()?;
        if code < 0.0 || code.fract() != 0.0 {
            return None;
        }
        book.get(code as usize).map(String::as_str)
    }

    /// Parse a textual value: a codebook label for categorical attributes,
    /// a number otherwise.
    pub fn parse_value(&self, text: &str) -> Option<f64> {
        let text = text.trim();
        match self.kind {
            AttributeKind::Categorical => self
                .code_of(text)
                .map(f64::from)
                .or_else(|| text.parse::<u32>().ok().map(f64::from).filter(|c| *c <= self.upper)),
            AttributeKind::Numeric => text.parse::<f64>().ok().filter(|x| x.is_finite()),
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        x.is_finite()
            && x >= self.lower
            && x <= self.upper
            && (self.kind == AttributeKind::Numeric || x.fract() == 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    attributes: Vec<AttributeSpec>,
}

impl Schema {
    pub fn new(attributes: Vec<AttributeSpec>) -> Result<Self> {
        let mut names = HashSet::new();
        for attr in &attributes {
            attr.validate()?;
            if !names.insert(attr.name.as_str()) {
                return Err(Error::Schema(format!("duplicate attribute `{}`", attr.name)));
            }
        }
        Ok(Self { attributes })
    }

    pub fn attributes(&self) -> &[AttributeSpec] {
        &self.attributes
    }

    pub fn len(&self) -> usize {
        self.attributes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attributes.is_empty()
    }

    pub fn attribute(&self, index: usize) -> Result<&AttributeSpec> {
        self.attributes
            .get(index)
            .ok_or_else(|| Error::Schema(format!("attribute index {index} out of range (schema has {})", self.len())))
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.attributes
            .iter()
            .position(|a| a.name == name)
            .ok_or_else(|| Error::Schema(format!("unknown attribute `{name}`")))
    }

    /// Number of points in the product grid, saturating.
    pub fn domain_size(&self) -> u128 {
        self.attributes
            .iter()
            .fold(1u128, |acc, a| acc.saturating_mul(a.grid_len() as u128))
    }
}

/// The custodian's table. Immutable once shared.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    schema: Schema,
    rows: Vec<Vec<f64>>,
}

impl Dataset {
    pub fn new(schema: Schema, rows: Vec<Vec<f64>>) -> Result<Self> {
        let mut data = Self { schema, rows: Vec::with_capacity(rows.len()) };
        for row in rows {
            data.push(row)?;
        }
        Ok(data)
    }

    pub fn empty(schema: Schema) -> Self {
        Self { schema, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) -> Result<()> {
        if row.len() != self.schema.len() {
            return Err(Error::Schema(format!(
                "row {} has {} values, schema has {} attributes",
                self.rows.len(),
                row.len(),
                self.schema.len()
            )));
        }
        for (attr, &x) in self.schema.attributes.iter().zip(&row) {
            if !attr.contains(x) {
                return Err(Error::Schema(format!(
                    "row {}: value {x} outside attribute `{}` [{}, {}]",
                    self.rows.len(),
                    attr.name,
                    attr.lower,
                    attr.upper
                )));
            }
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column(&self, index: usize) -> impl Iterator<Item = f64> + '_ {
        self.rows.iter().map(move |r| r[index])
    }

    /// Rows mapped to grid cell indices and sorted, for multiset comparison.
    pub fn grid_multiset(&self) -> Vec<Vec<u64>> {
        let mut cells: Vec<Vec<u64>> = self
            .rows
            .iter()
            .map(|r| {
                r.iter()
                    .zip(self.schema.attributes())
                    .map(|(&x, a)| a.grid_index(x).unwrap_or(u64::MAX))
                    .collect()
            })
            .collect();
        cells.sort_unstable();
        cells
    }
}

/// Half-open range `lower <= x < upper` on one attribute.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub attribute: usize,
    pub lower: f64,
    pub upper: f64,
}

impl Condition {
    pub fn new(attribute: usize, lower: f64, upper: f64) -> Result<Self> {
        if !(lower < upper) {
            return Err(Error::InvalidArgument(format!("empty range [{lower}, {upper})")));
        }
        Ok(Self { attribute, lower, upper })
    }

    pub fn matches(&self, row: &[f64]) -> bool {
        let x = row[self.attribute];
        self.lower <= x && x < self.upper
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Triviality {
    AlwaysTrue,
    AlwaysFalse,
    Mixed,
}

/// Conjunction of half-open ranges. The empty conjunction is always true.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RangePredicate {
    pub conditions: Vec<Condition>,
}

impl RangePredicate {
    pub fn new(conditions: Vec<Condition>) -> Self {
        Self { conditions }
    }

    pub fn range(attribute: usize, lower: f64, upper: f64) -> Result<Self> {
        Ok(Self::new(vec![Condition::new(attribute, lower, upper)?]))
    }

    pub fn and(mut self, condition: Condition) -> Self {
        self.conditions.push(condition);
        self
    }

    pub fn matches(&self, row: &[f64]) -> bool {
        self.conditions.iter().all(|c| c.matches(row))
    }

    pub fn check(&self, schema: &Schema) -> Result<()> {
        for c in &self.conditions {
            schema.attribute(c.attribute)?;
        }
        Ok(())
    }

    /// Per-attribute intersection of the conditions, in first-seen order.
    pub fn intersected(&self) -> Vec<(usize, f64, f64)> {
        let mut out: Vec<(usize, f64, f64)> = Vec::new();
        for c in &self.conditions {
            match out.iter_mut().find(|(a, _, _)| *a == c.attribute) {
                Some(slot) => {
                    slot.1 = slot.1.max(c.lower);
                    slot.2 = slot.2.min(c.upper);
                }
                None => out.push((c.attribute, c.lower, c.upper)),
            }
        }
        out
    }

    /// Whether the predicate is constant over the schema's value grid.
    pub fn triviality(&self, schema: &Schema) -> Result<Triviality> {
        self.check(schema)?;
        let mut all_true = true;
        for (attr, u, v) in self.intersected() {
            let spec = schema.attribute(attr)?;
            let inside = if u < v { spec.grid_points_in(u, v) } else { 0 };
            if inside == 0 {
                return Ok(Triviality::AlwaysFalse);
            }
            if inside < spec.grid_len() {
                all_true = false;
            }
        }
        Ok(if all_true { Triviality::AlwaysTrue } else { Triviality::Mixed })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdQuery {
    pub predicate: RangePredicate,
    pub threshold: i64,
}

impl ThresholdQuery {
    pub fn new(predicate: RangePredicate, threshold: i64) -> Self {
        Self { predicate, threshold }
    }
}

pub fn count_matching(dataset: &Dataset, predicate: &RangePredicate) -> Result<usize> {
    predicate.check(dataset.schema())?;
    Ok(dataset.rows().iter().filter(|r| predicate.matches(r)).count())
}

pub fn threshold_eval(dataset: &Dataset, query: &ThresholdQuery) -> Result<u8> {
    let count = count_matching(dataset, &query.predicate)?;
    Ok(u8::from(count as i64 > query.threshold))
}
