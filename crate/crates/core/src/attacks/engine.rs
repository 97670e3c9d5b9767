//! Probe bookkeeping, count search and column sweeps.

use std::collections::{BTreeMap, HashMap, HashSet};

use super::{AttackBudget, CountBounds, CountSearch, Detector, ProbeOutcome, Schedule, VerdictTallies};
use crate::data::{Condition, RangePredicate, ThresholdQuery};
use crate::detectors::{classify_direct, classify_repeated, classify_variance, ScaleVerdict, VarianceTestConfig};
use crate::error::{Error, Result};
use crate::ledger::CompensatedSum;
use crate::mechanisms::ThresholdMechanism;

/// Restarts allowed when re-measurement overturns a verdict.
const MAX_ATTEMPTS: usize = 32;

/// Value grid `lower + j * precision`, `j < len`, swept by a column search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Grid {
    pub lower: f64,
    pub precision: f64,
    pub len: u64,
}

impl Grid {
    pub fn point(&self, j: u64) -> f64 {
        self.lower + j as f64 * self.precision
    }
}

/// Verdicts gathered while resolving one count.
#[derive(Debug, Default)]
struct ProbeBook {
    verdicts: HashMap<i64, ProbeOutcome>,
    confirmed: HashSet<i64>,
}

#[derive(Debug)]
enum Located {
    Inside(i64),
    /// Clean verdicts at adjacent thresholds: only a constant predicate does this.
    Adjacent { hi: i64 },
    Missed,
}

/// Outcome of testing `c >= s0` for a count known to be at most `s0`.
#[derive(Debug, Clone, Copy)]
struct Comparison {
    reached: bool,
    probe: Option<(i64, ProbeOutcome)>,
    confirmed: bool,
}

/// Stateful attacker: issues probes against one mechanism and keeps the
/// query and budget counters that end up in reports.
pub struct Attacker<'a, M: ThresholdMechanism + ?Sized> {
    mech: &'a M,
    k: i64,
    n: i64,
    budget: AttackBudget,
    next_eps: f64,
    spent: CompensatedSum,
    protected_calls: u64,
    unprotected_calls: u64,
    tallies: VerdictTallies,
}

impl<'a, M: ThresholdMechanism + ?Sized> Attacker<'a, M> {
    pub fn new(mech: &'a M, k: u32, budget: AttackBudget) -> Result<Self> {
        budget.validate()?;
        if k == 0 {
            return Err(Error::InvalidArgument("group size k must be at least 1".into()));
        }
        Ok(Self {
            mech,
            k: i64::from(k),
            n: mech.public_size() as i64,
            next_eps: budget.eps_per_call,
            budget,
            spent: CompensatedSum::default(),
            protected_calls: 0,
            unprotected_calls: 0,
            tallies: VerdictTallies::default(),
        })
    }

    pub fn mechanism(&self) -> &'a M {
        self.mech
    }

    pub fn k(&self) -> u32 {
        self.k as u32
    }

    pub fn n(&self) -> u64 {
        self.n as u64
    }

    pub fn budget(&self) -> &AttackBudget {
        &self.budget
    }

    pub fn protected_calls(&self) -> u64 {
        self.protected_calls
    }

    pub fn unprotected_calls(&self) -> u64 {
        self.unprotected_calls
    }

    pub fn budget_spent(&self) -> f64 {
        self.spent.value()
    }

    pub fn tallies(&self) -> VerdictTallies {
        self.tallies
    }

    pub(crate) fn check_applicable(&self) -> Result<()> {
        if self.mech.is_protected() && self.n < 2 * self.k {
            return Err(Error::NotApplicable(format!("dataset size {} is below 2k = {}", self.n, 2 * self.k)));
        }
        Ok(())
    }

    fn value_aware(&self) -> bool {
        self.budget.detector.reveals_value()
    }

    fn certain(&self) -> bool {
        self.budget.detector.is_certain()
    }

    fn next_decision_eps(&mut self) -> Result<f64> {
        let eps = self.next_eps;
        let mut after = self.spent;
        after.add(eps);
        // A geometric schedule eventually makes the noise scale overflow.
        let widest_scale = 2.0 * self.budget.detector.calls_per_decision() as f64 / eps;
        if !(eps > 0.0) || !widest_scale.is_finite() || after.value() > self.budget.eps_target {
            return Err(Error::BudgetExhausted {
                spent: self.spent.value(),
                cap: self.budget.eps_target,
                requested: eps,
            });
        }
        Ok(eps)
    }

    /// One fresh decision at threshold `b`.
    fn decide(&mut self, predicate: &RangePredicate, b: i64) -> Result<ProbeOutcome> {
        debug_assert!((0..self.n).contains(&b));
        let query = ThresholdQuery::new(predicate.clone(), b);
        let eps = self.next_decision_eps()?;
        let outcome = match self.budget.detector {
            Detector::Direct => {
                let value = self.mech.answer(&query, eps)?;
                self.spent.add(eps);
                self.protected_calls += 1;
                classify_direct(value).into()
            }
            Detector::Repeated { m } => {
                let each = eps / m as f64;
                let values = self.mech.answer_repeated(&query, each, m)?;
                self.spent.add_repeated(each, m as u64);
                self.protected_calls += m as u64;
                classify_repeated(&values)?.into()
            }
            Detector::Variance { m, threshold } => {
                let each = eps / m as f64;
                let values = self.mech.answer_repeated(&query, each, m)?;
                self.spent.add_repeated(each, m as u64);
                self.protected_calls += m as u64;
                let config = VarianceTestConfig::new(m, threshold, eps)?;
                match classify_variance(&values, &config)? {
                    ScaleVerdict::LowScale => ProbeOutcome::CleanUnknown,
                    ScaleVerdict::HighScale => ProbeOutcome::Noisy,
                }
            }
        };
        if self.budget.schedule == Schedule::Geometric {
            self.next_eps = eps / 2.0;
        }
        self.tallies.record(outcome);
        Ok(outcome)
    }

    /// Re-measure a verdict. Repeated: noise-free answers are reproducible,
    /// so any disagreement means noisy. Variance: a third measurement breaks ties.
    fn remeasure(&mut self, predicate: &RangePredicate, b: i64, previous: ProbeOutcome) -> Result<ProbeOutcome> {
        match self.budget.detector {
            Detector::Direct => Ok(previous),
            Detector::Repeated { .. } => {
                if previous.is_noisy() {
                    return Ok(previous);
                }
                self.tallies.reconfirmations += 1;
                let again = self.decide(predicate, b)?;
                Ok(if again == previous { previous } else { ProbeOutcome::Noisy })
            }
            Detector::Variance { .. } => {
                self.tallies.reconfirmations += 1;
                let again = self.decide(predicate, b)?;
                if again == previous {
                    return Ok(previous);
                }
                self.tallies.reconfirmations += 1;
                self.decide(predicate, b)
            }
        }
    }

    /// Exact answer from an unprotected mechanism.
    pub(crate) fn truthful(&mut self, predicate: &RangePredicate, b: i64) -> Result<bool> {
        let query = ThresholdQuery::new(predicate.clone(), b);
        let value = self.mech.answer(&query, self.budget.eps_per_call)?;
        self.unprotected_calls += 1;
        Ok(value == 1.0)
    }

    /// A single decision at `b`, with thresholds outside `[0, n)` answered
    /// from the query's definition.
    pub(crate) fn probe_once(&mut self, predicate: &RangePredicate, b: i64) -> Result<ProbeOutcome> {
        if b < 0 {
            Ok(ProbeOutcome::CleanOne)
        } else if b >= self.n {
            Ok(ProbeOutcome::CleanZero)
        } else {
            self.decide(predicate, b)
        }
    }

    fn probe(&mut self, book: &mut ProbeBook, predicate: &RangePredicate, b: i64) -> Result<ProbeOutcome> {
        if b < 0 || b >= self.n {
            return self.probe_once(predicate, b);
        }
        if let Some(&v) = book.verdicts.get(&b) {
            return Ok(v);
        }
        let v = self.decide(predicate, b)?;
        book.verdicts.insert(b, v);
        Ok(v)
    }

    /// Re-measure the listed probes once each; true if any verdict changed.
    fn confirm(&mut self, book: &mut ProbeBook, predicate: &RangePredicate, thresholds: &[i64]) -> Result<bool> {
        if self.certain() {
            return Ok(false);
        }
        let mut changed = false;
        for &b in thresholds {
            let Some(&previous) = book.verdicts.get(&b) else { continue };
            if !book.confirmed.insert(b) {
                continue;
            }
            let now = self.remeasure(predicate, b, previous)?;
            if now != previous {
                book.verdicts.insert(b, now);
                changed = true;
            }
        }
        Ok(changed)
    }

    fn bounds_from_book(&self, book: &ProbeBook, bracket: CountBounds) -> CountBounds {
        let mut bounds = bracket;
        for (&b, &v) in &book.verdicts {
            let inferred = match v {
                ProbeOutcome::Noisy => Some((b - self.k + 1, b + self.k)),
                ProbeOutcome::CleanOne => Some((b + self.k + 1, self.n)),
                ProbeOutcome::CleanZero => Some((0, b - self.k)),
                ProbeOutcome::CleanUnknown => None,
            };
            if let Some((lo, hi)) = inferred {
                let lo = lo.clamp(0, self.n) as u64;
                let hi = hi.clamp(0, self.n) as u64;
                if lo <= hi {
                    if let Some(b) = bounds.intersect(CountBounds::new(lo, hi)) {
                        bounds = b;
                    }
                }
            }
        }
        bounds
    }

    /// Exact number of records satisfying `predicate`, known to lie in `bracket`.
    pub fn exact_count(&mut self, predicate: &RangePredicate, bracket: CountBounds, search: CountSearch) -> Result<u64> {
        if bracket.lower == bracket.upper {
            return Ok(bracket.lower);
        }
        if !self.mech.is_protected() {
            return self.truthful_count(predicate, bracket);
        }
        self.check_applicable()?;
        let mut book = ProbeBook::default();
        let result = match search {
            CountSearch::Linear => self.linear_count(&mut book, predicate),
            CountSearch::Binary => self.binary_count(&mut book, predicate, bracket),
        };
        result.map_err(|e| match e {
            Error::BudgetExhausted { .. } => Error::PartialCount { bounds: self.bounds_from_book(&book, bracket) },
            other => other,
        })
    }

    /// Count under exact answers: first threshold answered 0.
    fn truthful_count(&mut self, predicate: &RangePredicate, bracket: CountBounds) -> Result<u64> {
        let (mut lo, mut hi) = (bracket.lower as i64 - 1, bracket.upper as i64);
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if self.truthful(predicate, mid)? {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(hi as u64)
    }

    /// Upward scan over thresholds, stopping at the first verdict flip.
    fn linear_count(&mut self, book: &mut ProbeBook, predicate: &RangePredicate) -> Result<u64> {
        let (n, k) = (self.n, self.k);
        'attempt: for _ in 0..MAX_ATTEMPTS {
            let mut prev = self.probe(book, predicate, 0)?.is_noisy();
            for j in 1..n {
                let cur = self.probe(book, predicate, j)?.is_noisy();
                if cur != prev {
                    if self.confirm(book, predicate, &[j - 1, j])? {
                        continue 'attempt;
                    }
                    return Ok((if cur { j + k } else { j - k }) as u64);
                }
                prev = cur;
            }
            if !prev {
                // Every threshold clean: only a constant predicate does this.
                let all: Vec<i64> = (0..n).collect();
                if self.confirm(book, predicate, &all)? {
                    continue 'attempt;
                }
                return Err(Error::Inconsistent("no noisy threshold in a linear scan".into()));
            }
            return Ok(k as u64);
        }
        Err(Error::Inconsistent("verdicts kept changing under re-measurement".into()))
    }

    fn binary_count(&mut self, book: &mut ProbeBook, predicate: &RangePredicate, bracket: CountBounds) -> Result<u64> {
        let (n, k) = (self.n, self.k);
        for _ in 0..MAX_ATTEMPTS {
            let located = if self.value_aware() {
                self.locate_bisect(book, predicate, bracket)?
            } else {
                self.locate_windows(book, predicate, bracket)?
            };
            let inside = match located {
                Located::Inside(b) => b,
                Located::Adjacent { hi } => {
                    if self.confirm(book, predicate, &[hi - 1, hi])? {
                        continue;
                    }
                    return Ok(hi as u64);
                }
                Located::Missed => {
                    let probed: Vec<i64> = book.verdicts.keys().copied().collect();
                    if self.confirm(book, predicate, &probed)? {
                        continue;
                    }
                    return Err(Error::Inconsistent("no noisy threshold found for a non-constant predicate".into()));
                }
            };
            // The noisy block is at most 2k wide, so these are clean.
            let mut below = (inside - 2 * k).max(-1);
            let mut above = (inside + 2 * k).min(n);
            for (&b, v) in &book.verdicts {
                if !v.is_noisy() {
                    if b < inside {
                        below = below.max(b);
                    } else if b > inside {
                        above = above.min(b);
                    }
                }
            }
            let (count, edge) = if above < n {
                let r = self.right_edge(book, predicate, inside, above)?;
                (r - k, Some(r))
            } else {
                let l = self.left_edge(book, predicate, below, inside)?;
                if l > 0 {
                    (l + k, Some(l))
                } else {
                    let r = self.right_edge(book, predicate, inside, above)?;
                    if r < n {
                        (r - k, Some(r))
                    } else if n == 2 * k {
                        (k, None)
                    } else {
                        let probed: Vec<i64> = book.verdicts.keys().copied().collect();
                        if self.confirm(book, predicate, &probed)? {
                            continue;
                        }
                        return Err(Error::Inconsistent(format!("noisy at every threshold with n={n} > 2k")));
                    }
                }
            };
            if let Some(e) = edge {
                if self.confirm(book, predicate, &[e - 1, e])? {
                    continue;
                }
            }
            if count < bracket.lower as i64 || count > bracket.upper as i64 {
                let probed: Vec<i64> = book.verdicts.keys().copied().collect();
                if self.confirm(book, predicate, &probed)? {
                    continue;
                }
                return Err(Error::Inconsistent(format!(
                    "count {count} outside known bounds [{}, {}]",
                    bracket.lower, bracket.upper
                )));
            }
            return Ok(count as u64);
        }
        Err(Error::Inconsistent("verdicts kept changing under re-measurement".into()))
    }

    /// Three-block bisection: CleanOne thresholds lie left of the noisy
    /// block, CleanZero thresholds right of it.
    fn locate_bisect(&mut self, book: &mut ProbeBook, predicate: &RangePredicate, bracket: CountBounds) -> Result<Located> {
        let mut lo = (bracket.lower as i64 - self.k - 1).max(-1);
        let mut hi = (bracket.upper as i64 + self.k).min(self.n);
        for (&b, &v) in &book.verdicts {
            if b > lo && b < hi {
                match v {
                    ProbeOutcome::Noisy => return Ok(Located::Inside(b)),
                    ProbeOutcome::CleanOne => lo = b,
                    ProbeOutcome::CleanZero => hi = b,
                    ProbeOutcome::CleanUnknown => {}
                }
            }
        }
        // Entries may have tightened out of order; keep the invariant lo < hi.
        if lo >= hi {
            return Ok(Located::Missed);
        }
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            match self.probe(book, predicate, mid)? {
                ProbeOutcome::CleanOne => lo = mid,
                ProbeOutcome::CleanZero => hi = mid,
                ProbeOutcome::Noisy => return Ok(Located::Inside(mid)),
                ProbeOutcome::CleanUnknown => unreachable!("value-revealing detector"),
            }
        }
        Ok(Located::Adjacent { hi })
    }

    /// Step 2k-wide windows down from the top of the bracket until one is noisy.
    fn locate_windows(&mut self, book: &mut ProbeBook, predicate: &RangePredicate, bracket: CountBounds) -> Result<Located> {
        if let Some((&b, _)) = book.verdicts.iter().find(|(_, v)| v.is_noisy()) {
            return Ok(Located::Inside(b));
        }
        let mut t = bracket.upper as i64;
        while t >= bracket.lower as i64 {
            let b = (t - self.k).clamp(0, self.n - 1);
            if self.probe(book, predicate, b)?.is_noisy() {
                return Ok(Located::Inside(b));
            }
            t = b - self.k;
        }
        Ok(Located::Missed)
    }

    /// First clean threshold in `(noisy_at, clean_at]`.
    fn right_edge(&mut self, book: &mut ProbeBook, predicate: &RangePredicate, noisy_at: i64, clean_at: i64) -> Result<i64> {
        let (mut lo, mut hi) = (noisy_at, clean_at);
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if self.probe(book, predicate, mid)?.is_noisy() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(hi)
    }

    /// First noisy threshold in `(clean_at, noisy_at]`.
    fn left_edge(&mut self, book: &mut ProbeBook, predicate: &RangePredicate, clean_at: i64, noisy_at: i64) -> Result<i64> {
        let (mut lo, mut hi) = (clean_at, noisy_at);
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if self.probe(book, predicate, mid)?.is_noisy() {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(hi)
    }

    fn interpret(&self, s0: i64, b: i64, outcome: ProbeOutcome) -> bool {
        if b == s0 + self.k - 1 {
            // Window [s0, s0+2k-1] meets [0, s0] only at s0.
            outcome.is_noisy() || outcome == ProbeOutcome::CleanOne
        } else {
            // b = s0-k-1: window [s0-2k, s0-1]; clean here means c = s0.
            !outcome.is_noisy() && outcome != ProbeOutcome::CleanZero
        }
    }

    /// Decide `c >= s0` for a count with `floor <= c <= s0`, usually in one probe.
    fn compare(&mut self, predicate: &RangePredicate, s0: u64, floor: u64, search: CountSearch) -> Result<Comparison> {
        let (n, k, s0i) = (self.n, self.k, s0 as i64);
        if !self.mech.is_protected() {
            let reached = self.truthful(predicate, s0i - 1)?;
            return Ok(Comparison { reached, probe: None, confirmed: true });
        }
        let b = if s0i + k - 1 <= n - 1 {
            s0i + k - 1
        } else if s0i > k && (self.value_aware() || floor as i64 + 2 * k >= s0i) {
            s0i - k - 1
        } else {
            let c = self.exact_count(predicate, CountBounds::new(floor, s0), search)?;
            return Ok(Comparison { reached: c >= s0, probe: None, confirmed: true });
        };
        let outcome = self.probe_once(predicate, b)?;
        Ok(Comparison { reached: self.interpret(s0i, b, outcome), probe: Some((b, outcome)), confirmed: self.certain() })
    }

    fn reconfirm_comparison(&mut self, predicate: &RangePredicate, s0: u64, cmp: &mut Comparison) -> Result<bool> {
        let Some((b, outcome)) = cmp.probe else {
            return Ok(false);
        };
        cmp.confirmed = true;
        let now = self.remeasure(predicate, b, outcome)?;
        let reached = self.interpret(s0 as i64, b, now);
        cmp.probe = Some((b, now));
        let changed = reached != cmp.reached;
        cmp.reached = reached;
        Ok(changed)
    }

    /// Multiset of grid cells `(j, multiplicity)` of attribute `attr` among
    /// the `total` records matching `base`, largest cells first.
    pub(crate) fn sweep(
        &mut self,
        base: &RangePredicate,
        attr: usize,
        grid: Grid,
        total: u64,
        search: CountSearch,
        linear: bool,
    ) -> Result<Vec<(u64, u64)>> {
        let cell_below = |j: u64| base.clone().and(Condition { attribute: attr, lower: grid.lower, upper: grid.point(j) });
        let mut out = Vec::new();
        if total == 0 {
            return Ok(out);
        }
        if linear {
            let mut s0 = total;
            for j in (0..grid.len).rev() {
                let c = if j == 0 { 0 } else { self.exact_count(&cell_below(j), CountBounds::new(0, s0), search)? };
                if c < s0 {
                    out.push((j, s0 - c));
                    s0 = c;
                }
                if s0 == 0 {
                    break;
                }
            }
            return Ok(out);
        }

        let mut exact: BTreeMap<u64, u64> = BTreeMap::from([(0, 0), (grid.len, total)]);
        let (mut cur, mut s0) = (grid.len, total);
        while s0 > 0 {
            let mut cmps: HashMap<u64, Comparison> = HashMap::new();
            let mut attempts = 0;
            let (lo, c_lo) = loop {
                attempts += 1;
                if attempts > MAX_ATTEMPTS {
                    return Err(Error::Inconsistent("column sweep kept contradicting itself".into()));
                }
                let (mut lo, mut hi) = (0u64, cur);
                for (&j, &c) in exact.range(..cur) {
                    if c < s0 {
                        lo = lo.max(j);
                    } else {
                        hi = hi.min(j);
                    }
                }
                while hi - lo > 1 {
                    let mid = lo + (hi - lo) / 2;
                    let reached = if let Some(&c) = exact.get(&mid) {
                        c >= s0
                    } else if let Some(cmp) = cmps.get(&mid) {
                        cmp.reached
                    } else {
                        let floor = exact.range(..mid).next_back().map_or(0, |(_, &c)| c);
                        let cmp = self.compare(&cell_below(mid), s0, floor, search)?;
                        cmps.insert(mid, cmp);
                        cmp.reached
                    };
                    if reached {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                if let Some(cmp) = cmps.get_mut(&hi) {
                    if !cmp.confirmed && self.reconfirm_comparison(&cell_below(hi), s0, cmp)? {
                        continue;
                    }
                }
                let c_lo = match exact.get(&lo) {
                    Some(&c) => c,
                    None => {
                        let floor = exact.range(..lo).next_back().map_or(0, |(_, &c)| c);
                        let ceiling = if self.certain() { s0 - 1 } else { s0 };
                        let c = self.exact_count(&cell_below(lo), CountBounds::new(floor, ceiling.max(floor)), search)?;
                        exact.insert(lo, c);
                        c
                    }
                };
                if c_lo >= s0 {
                    continue;
                }
                break (lo, c_lo);
            };
            out.push((lo, s0 - c_lo));
            s0 = c_lo;
            cur = lo;
        }
        Ok(out)
    }
}
