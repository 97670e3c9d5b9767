//! Attacker algorithms against the custodians in [`crate::mechanisms`].

mod bdp;
mod engine;
mod hint;
mod reconstruct;
mod targeted;

use serde::{Deserialize, Serialize};

use crate::detectors::NoiseVerdict;
use crate::error::{Error, Result};

pub use bdp::{bdp_enumerate_distinct, BdpEnumeration};
pub use engine::Attacker;
pub use hint::{
    bdp_neighbor_pairs, hint_leakage_demo, idp_neighbor_pairs, recover_dataset_from_pairs, recover_distinct_from_pairs,
    ConstantMechanism, Hint, Multiset, NeighborPairs, Record,
};
pub use reconstruct::{
    column_reconstruct, count_reconstruct, dataset_reconstruct, AttributeRecovery, BoundsMode, ReconstructOptions,
    ReconstructionReport,
};
pub use targeted::{
    attribute_inference, confirm_uniqueness, membership_inference, target_predicate, AttributeInference,
    TargetedOutcome,
};

/// Default per-call budget.
pub const DEFAULT_EPS_PER_CALL: f64 = 1e-10;

/// How each probe is turned into a verdict.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Detector {
    /// One call; exact 0.0 / 1.0 means noise-free.
    Direct,
    /// `m` calls at `ε/m`; identical answers mean noise-free.
    Repeated { m: usize },
    /// `m` calls at `ε/m` against the hardened mechanism; the ψ statistic
    /// tells Λ = 0 from Λ = 1 but not the released bit.
    Variance { m: usize, threshold: f64 },
}

impl Detector {
    pub fn variance(m: usize) -> Self {
        Detector::Variance { m, threshold: crate::detectors::VarianceTestConfig::DEFAULT_THRESHOLD }
    }

    pub fn calls_per_decision(&self) -> usize {
        match *self {
            Detector::Direct => 1,
            Detector::Repeated { m } | Detector::Variance { m, .. } => m,
        }
    }

    /// Whether a clean verdict also tells the released bit.
    pub fn reveals_value(&self) -> bool {
        !matches!(self, Detector::Variance { .. })
    }

    /// Whether verdicts are trusted without re-measurement.
    pub fn is_certain(&self) -> bool {
        matches!(self, Detector::Direct)
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Detector::Direct => Ok(()),
            Detector::Repeated { m } if m < 2 => {
                Err(Error::InvalidArgument(format!("repeated detector needs m >= 2, got {m}")))
            }
            Detector::Repeated { .. } => Ok(()),
            Detector::Variance { m, threshold } => {
                crate::detectors::VarianceTestConfig::new(m, threshold, 1.0).map(|_| ())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Schedule {
    /// Every decision spends `eps_per_call`.
    #[default]
    Fixed,
    /// Decision `i` spends `eps_per_call / 2^i`, bounding the total by `2 * eps_per_call`.
    Geometric,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackBudget {
    pub eps_target: f64,
    /// Budget of one decision; repeated detectors split it over their calls.
    pub eps_per_call: f64,
    pub detector: Detector,
    #[serde(default)]
    pub schedule: Schedule,
}

impl AttackBudget {
    pub fn new(eps_target: f64, eps_per_call: f64, detector: Detector) -> Result<Self> {
        let budget = Self { eps_target, eps_per_call, detector, schedule: Schedule::Fixed };
        budget.validate()?;
        Ok(budget)
    }

    /// Direct detector, no attacker-side cap.
    pub fn direct(eps_per_call: f64) -> Self {
        Self { eps_target: f64::INFINITY, eps_per_call, detector: Detector::Direct, schedule: Schedule::Fixed }
    }

    pub fn with_detector(mut self, detector: Detector) -> Self {
        self.detector = detector;
        self
    }

    pub fn with_schedule(mut self, schedule: Schedule) -> Self {
        self.schedule = schedule;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps_per_call > 0.0 && self.eps_per_call.is_finite()) {
            return Err(Error::InvalidArgument(format!("eps_per_call must be positive, got {}", self.eps_per_call)));
        }
        if !(self.eps_target >= self.eps_per_call) {
            return Err(Error::InvalidArgument(format!(
                "eps_per_call {} exceeds eps_target {}",
                self.eps_per_call, self.eps_target
            )));
        }
        self.detector.validate()
    }
}

/// Inclusive bounds on a true count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountBounds {
    pub lower: u64,
    pub upper: u64,
}

impl CountBounds {
    pub fn new(lower: u64, upper: u64) -> Self {
        debug_assert!(lower <= upper);
        Self { lower, upper }
    }

    pub fn intersect(self, other: CountBounds) -> Option<CountBounds> {
        let lower = self.lower.max(other.lower);
        let upper = self.upper.min(other.upper);
        (lower <= upper).then_some(CountBounds { lower, upper })
    }
}

/// What one verdict says about the count of a non-constant predicate, for a
/// dataset of `n` rows.
pub fn infer_from_verdict(verdict: NoiseVerdict, b: i64, k: u32, n: u64) -> CountBounds {
    let (k, n) = (i64::from(k), n as i64);
    let clamp = |x: i64| x.clamp(0, n) as u64;
    let (lo, hi) = match verdict {
        NoiseVerdict::Noisy => (b - k + 1, b + k),
        NoiseVerdict::CleanOne => (b + k + 1, n),
        NoiseVerdict::CleanZero => (0, b - k),
    };
    let (lo, hi) = (clamp(lo), clamp(hi));
    CountBounds { lower: lo.min(hi), upper: hi }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CountSearch {
    /// Scan thresholds upward from 0 until the verdict flips.
    Linear,
    /// Bisect for a noisy threshold, then bisect its edge.
    #[default]
    Binary,
}

/// Verdict of one probe. `CleanUnknown` comes from detectors that see only
/// whether noise was added.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ProbeOutcome {
    CleanZero,
    CleanOne,
    CleanUnknown,
    Noisy,
}

impl ProbeOutcome {
    pub fn is_noisy(self) -> bool {
        self == ProbeOutcome::Noisy
    }
}

impl From<NoiseVerdict> for ProbeOutcome {
    fn from(v: NoiseVerdict) -> Self {
        match v {
            NoiseVerdict::CleanZero => ProbeOutcome::CleanZero,
            NoiseVerdict::CleanOne => ProbeOutcome::CleanOne,
            NoiseVerdict::Noisy => ProbeOutcome::Noisy,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct VerdictTallies {
    pub clean_zero: u64,
    pub clean_one: u64,
    pub clean_unknown: u64,
    pub noisy: u64,
    /// Decisions re-measured to confirm a boundary.
    pub reconfirmations: u64,
}

impl VerdictTallies {
    fn record(&mut self, outcome: ProbeOutcome) {
        match outcome {
            ProbeOutcome::CleanZero => self.clean_zero += 1,
            ProbeOutcome::CleanOne => self.clean_one += 1,
            ProbeOutcome::CleanUnknown => self.clean_unknown += 1,
            ProbeOutcome::Noisy => self.noisy += 1,
        }
    }

    pub fn decisions(&self) -> u64 {
        self.clean_zero + self.clean_one + self.clean_unknown + self.noisy
    }
}

/// Values recovered before the budget ran out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartialRecovery {
    /// Attributes fully resolved, in reconstruction order.
    pub attributes: Vec<String>,
    /// Value combinations over those attributes with their counts.
    pub groups: Vec<(Vec<f64>, u64)>,
    pub protected_queries: u64,
    pub budget_spent: f64,
}
