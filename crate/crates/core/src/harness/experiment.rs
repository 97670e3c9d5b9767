//! Experiment configuration, execution and reports.

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{load_dataset, load_schema};
use crate::attacks::{
    attribute_inference, bdp_enumerate_distinct, confirm_uniqueness, dataset_reconstruct, membership_inference,
    target_predicate, AttackBudget, Attacker, AttributeInference, BdpEnumeration, Detector, ReconstructOptions,
    ReconstructionReport, Schedule, TargetedOutcome, VerdictTallies,
};
use crate::data::{count_matching, Dataset, Schema};
use crate::detectors::{classify_variance, ScaleVerdict, VarianceTestConfig};
use crate::error::{Error, Result};
use crate::ledger::PrivacyLedger;
use crate::mechanisms::{
    BdpCustodian, DefenseMode, GlobalLaplaceCustodian, GroupIdpCustodian, NoiseSource, ThresholdMechanism,
    TruthfulOracle,
};

/// Custodian protection; `None` answers every query exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Defense {
    None,
    #[default]
    Plain,
    Hardened,
    RoundNearestInteger,
    RoundToBinary,
}

impl Defense {
    pub fn mode(self) -> Option<DefenseMode> {
        match self {
            Defense::None => None,
            Defense::Plain => Some(DefenseMode::Plain),
            Defense::Hardened => Some(DefenseMode::Hardened),
            Defense::RoundNearestInteger => Some(DefenseMode::RoundNearestInteger),
            Defense::RoundToBinary => Some(DefenseMode::RoundToBinary),
        }
    }
}

impl FromStr for Defense {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "none" => Defense::None,
            "plain" => Defense::Plain,
            "hardened" => Defense::Hardened,
            "round-nearest-integer" => Defense::RoundNearestInteger,
            "round-to-binary" => Defense::RoundToBinary,
            _ => return Err(Error::InvalidArgument(format!("unknown defense `{s}`"))),
        })
    }
}

/// `direct`, `repeated:M` or `variance:M[:THRESHOLD]`.
pub fn parse_detector(s: &str) -> Result<Detector> {
    let bad = || Error::InvalidArgument(format!("cannot parse detector `{s}`"));
    let mut parts = s.split(':');
    let detector = match parts.next() {
        Some("direct") => Detector::Direct,
        Some("repeated") => Detector::Repeated { m: parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())? },
        Some("variance") => {
            let m = parts.next().map_or(Ok(VarianceTestConfig::DEFAULT_M), |p| p.parse().map_err(|_| bad()))?;
            let threshold =
                parts.next().map_or(Ok(VarianceTestConfig::DEFAULT_THRESHOLD), |p| p.parse().map_err(|_| bad()))?;
            Detector::Variance { m, threshold }
        }
        _ => return Err(bad()),
    };
    if parts.next().is_some() {
        return Err(bad());
    }
    Ok(detector)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetValue {
    pub attribute: String,
    pub value: String,
}

impl FromStr for TargetValue {
    type Err = Error;

    /// `attribute=value`
    fn from_str(s: &str) -> Result<Self> {
        let (attribute, value) =
            s.split_once('=').ok_or_else(|| Error::InvalidArgument(format!("expected attribute=value, got `{s}`")))?;
        Ok(Self { attribute: attribute.trim().into(), value: value.trim().into() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Attack {
    ReconstructDataset {
        #[serde(default)]
        options: ReconstructOptions,
    },
    ReconstructColumn {
        attribute: String,
        #[serde(default)]
        options: ReconstructOptions,
    },
    Membership {
        target: Vec<TargetValue>,
    },
    Uniqueness {
        target: Vec<TargetValue>,
    },
    AttributeInfer {
        target: Vec<TargetValue>,
        attribute: String,
        #[serde(default)]
        assume_unique: bool,
    },
    BdpEnumerate,
    DecisionRuleSim {
        m: usize,
        trials: u64,
        threshold: f64,
    },
    /// Reconstruction against a true ε-DP custodian whose ledger is capped at `eps_cap`.
    NegativeControl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    pub delimiter: char,
    pub k: u32,
    pub eps_per_call: f64,
    pub eps_cap: Option<f64>,
    pub seed: u64,
    pub defense: Defense,
    pub detector: Detector,
    #[serde(default)]
    pub schedule: Schedule,
    pub attack: Attack,
    /// Record wall-clock time; off keeps reports byte-identical across runs.
    #[serde(default)]
    pub timing: bool,
}

/// Cap applied by the negative control when none is configured.
pub const NEGATIVE_CONTROL_EPS: f64 = 0.01;

impl ExperimentConfig {
    pub fn new(attack: Attack) -> Self {
        Self {
            dataset: None,
            schema: None,
            delimiter: ',',
            k: 1,
            eps_per_call: crate::attacks::DEFAULT_EPS_PER_CALL,
            eps_cap: None,
            seed: 0,
            defense: Defense::Plain,
            detector: Detector::Direct,
            schedule: Schedule::Fixed,
            attack,
            timing: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidArgument("k must be at least 1".into()));
        }
        if let Some(cap) = self.eps_cap {
            if !(cap > 0.0) {
                return Err(Error::InvalidArgument(format!("eps_cap must be positive, got {cap}")));
            }
        }
        if !self.delimiter.is_ascii() {
            return Err(Error::InvalidArgument("delimiter must be a single ASCII character".into()));
        }
        self.budget()?;
        if let Attack::DecisionRuleSim { m, trials, threshold } = self.attack {
            VarianceTestConfig::new(m, threshold, 1.0)?;
            if trials == 0 || trials % 2 != 0 {
                return Err(Error::InvalidArgument(format!("trials must be positive and even, got {trials}")));
            }
        }
        Ok(())
    }

    fn budget(&self) -> Result<AttackBudget> {
        let target = self.eps_cap.unwrap_or(f64::INFINITY);
        Ok(AttackBudget::new(target, self.eps_per_call, self.detector)?.with_schedule(self.schedule))
    }

    fn ledger(&self) -> Result<PrivacyLedger> {
        PrivacyLedger::new(self.eps_cap)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub m: usize,
    pub trials: u64,
    pub threshold: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Outcome {
    Reconstruction(ReconstructionReport),
    Membership(TargetedOutcome<bool>),
    Uniqueness(TargetedOutcome<bool>),
    Inference(TargetedOutcome<AttributeInference>),
    Distinct(BdpEnumeration),
    Simulation(SimulationSummary),
    /// The attack stopped with an error; see `RunReport::error`.
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: ExperimentConfig,
    pub dataset_size: Option<u64>,
    pub outcome: Outcome,
    pub protected_queries: u64,
    pub unprotected_queries: u64,
    pub budget_spent: f64,
    /// What the custodian's ledger recorded, for comparison with `budget_spent`.
    pub ledger_spent: Option<f64>,
    /// Checked against the plaintext, never taken from the attacker.
    pub exact: Option<bool>,
    pub tallies: Option<VerdictTallies>,
    pub error: Option<String>,
    pub wall_clock_seconds: Option<f64>,
}

impl RunReport {
    fn new(config: &ExperimentConfig, outcome: Outcome) -> Self {
        Self {
            config: config.clone(),
            dataset_size: None,
            outcome,
            protected_queries: 0,
            unprotected_queries: 0,
            budget_spent: 0.0,
            ledger_spent: None,
            exact: None,
            tallies: None,
            error: None,
            wall_clock_seconds: None,
        }
    }

    pub fn reconstruction(&self) -> Option<&ReconstructionReport> {
        match &self.outcome {
            Outcome::Reconstruction(r) => Some(r),
            _ => None,
        }
    }
}

/// Fraction of correct verdicts over `trials` ψ tests, half drawn at scale
/// `m/ε` and half at `2m/ε`.
pub fn simulate_decision_rule(m: usize, trials: u64, seed: u64) -> Result<f64> {
    simulate_decision_rule_with(m, trials, VarianceTestConfig::DEFAULT_THRESHOLD, seed)
}

pub fn simulate_decision_rule_with(m: usize, trials: u64, threshold: f64, seed: u64) -> Result<f64> {
    if trials == 0 || trials % 2 != 0 {
        return Err(Error::InvalidArgument(format!("trials must be positive and even, got {trials}")));
    }
    let config = VarianceTestConfig::new(m, threshold, 1.0)?;
    let noise = NoiseSource::new(seed);
    let half = trials / 2;
    let correct: u64 = (0..trials)
        .into_par_iter()
        .map_init(
            || vec![0.0; m],
            |buf, t| {
                let high = t >= half;
                let scale = if high { 2.0 } else { 1.0 } * m as f64 / config.eps_total;
                noise.laplace_batch(t * m as u64, scale, buf);
                let location = f64::from(u8::from(high));
                buf.iter_mut().for_each(|z| *z += location);
                let verdict = classify_variance(buf, &config).expect("validated config");
                u64::from((verdict == ScaleVerdict::HighScale) == high)
            },
        )
        .sum();
    Ok(correct as f64 / trials as f64)
}

fn resolve_target(schema: &Schema, target: &[TargetValue]) -> Result<Vec<(usize, f64)>> {
    target
        .iter()
        .map(|t| {
            let i = schema.index_of(&t.attribute)?;
            let spec = &schema.attributes()[i];
            let x = spec.parse_value(&t.value).filter(|&x| spec.contains(x)).ok_or_else(|| {
                Error::InvalidArgument(format!("`{}` is not a value of `{}`", t.value, t.attribute))
            })?;
            Ok((i, x))
        })
        .collect()
}

fn on_grid(schema: &Schema, attr: usize, x: f64) -> f64 {
    let spec = &schema.attributes()[attr];
    spec.grid_index(x).map_or(f64::NAN, |j| spec.grid_point(j))
}

/// Load inputs named in `config` and run it.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunReport> {
    config.validate()?;
    if let Attack::DecisionRuleSim { .. } = config.attack {
        return run_simulation(config);
    }
    let (Some(dataset), Some(schema)) = (&config.dataset, &config.schema) else {
        return Err(Error::InvalidArgument("this attack needs both a dataset and a schema".into()));
    };
    let schema = load_schema(schema)?;
    let data = load_dataset(dataset, &schema, config.delimiter as u8)?;
    run_experiment_on(config, Arc::new(data))
}

fn run_simulation(config: &ExperimentConfig) -> Result<RunReport> {
    let Attack::DecisionRuleSim { m, trials, threshold } = config.attack else {
        unreachable!("caller matched the simulation attack");
    };
    let start = Instant::now();
    let accuracy = simulate_decision_rule_with(m, trials, threshold, config.seed)?;
    let mut report = RunReport::new(config, Outcome::Simulation(SimulationSummary { m, trials, threshold, accuracy }));
    report.wall_clock_seconds = config.timing.then(|| start.elapsed().as_secs_f64());
    Ok(report)
}

/// Run `config` against an already loaded plaintext dataset.
pub fn run_experiment_on(config: &ExperimentConfig, dataset: Arc<Dataset>) -> Result<RunReport> {
    config.validate()?;
    if let Attack::DecisionRuleSim { .. } = config.attack {
        return run_simulation(config);
    }
    let start = Instant::now();
    let mut report = match &config.attack {
        Attack::BdpEnumerate => {
            let custodian = BdpCustodian::new(Arc::clone(&dataset), config.ledger()?, config.seed);
            let found = bdp_enumerate_distinct(&custodian, config.eps_per_call)?;
            let mut report = RunReport::new(config, Outcome::Failed);
            let mut truth: Vec<Vec<f64>> = dataset
                .rows()
                .iter()
                .map(|r| (0..r.len()).map(|i| on_grid(dataset.schema(), i, r[i])).collect())
                .collect();
            truth.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
            truth.dedup();
            report.exact = Some(truth == found.records);
            report.protected_queries = found.queries;
            report.budget_spent = found.budget_spent;
            report.ledger_spent = Some(custodian.ledger().spent());
            report.outcome = Outcome::Distinct(found);
            report
        }
        Attack::NegativeControl => {
            let cap = config.eps_cap.unwrap_or(NEGATIVE_CONTROL_EPS);
            let ledger = PrivacyLedger::new(Some(cap))?;
            let custodian = GlobalLaplaceCustodian::new(Arc::clone(&dataset), ledger, config.seed);
            let budget = AttackBudget::new(cap, config.eps_per_call, config.detector)?;
            let mut report = RunReport::new(config, Outcome::Failed);
            match dataset_reconstruct(&custodian, config.k, budget, &ReconstructOptions::default()) {
                Ok(mut rec) => {
                    rec.verify_against(&dataset);
                    report.exact = Some(rec.is_exact());
                    report.outcome = Outcome::Reconstruction(rec);
                }
                Err(e) => {
                    report.exact = Some(false);
                    report.error = Some(e.to_string());
                }
            }
            report.protected_queries = custodian.ledger().call_count();
            report.budget_spent = custodian.ledger().spent();
            report.ledger_spent = Some(custodian.ledger().spent());
            report
        }
        _ => match config.defense.mode() {
            None => {
                let oracle = TruthfulOracle::new(Arc::clone(&dataset));
                run_threshold_attack(config, &oracle, &dataset, None)?
            }
            Some(mode) => {
                let custodian =
                    GroupIdpCustodian::new(Arc::clone(&dataset), config.k, mode, config.ledger()?, config.seed)?;
                run_threshold_attack(config, &custodian, &dataset, Some(custodian.ledger()))?
            }
        },
    };
    report.dataset_size = Some(dataset.len() as u64);
    report.wall_clock_seconds = config.timing.then(|| start.elapsed().as_secs_f64());
    Ok(report)
}

fn run_threshold_attack<M: ThresholdMechanism>(
    config: &ExperimentConfig,
    mech: &M,
    dataset: &Dataset,
    ledger: Option<&PrivacyLedger>,
) -> Result<RunReport> {
    let schema = dataset.schema();
    let budget = config.budget()?;
    let mut report = RunReport::new(config, Outcome::Failed);
    let targeted = |report: &mut RunReport, p: u64, u: u64, spent: f64| {
        report.protected_queries = p;
        report.unprotected_queries = u;
        report.budget_spent = spent;
    };
    match &config.attack {
        Attack::ReconstructDataset { options } | Attack::ReconstructColumn { options, .. } => {
            let mut attacker = Attacker::new(mech, config.k, budget)?;
            let mut rec = match &config.attack {
                Attack::ReconstructColumn { attribute, .. } => {
                    attacker.column_report(schema.index_of(attribute)?, options)?
                }
                _ => attacker.reconstruct_dataset(options)?,
            };
            rec.verify_against(dataset);
            report.exact = Some(rec.is_exact());
            report.protected_queries = rec.protected_queries;
            report.unprotected_queries = rec.unprotected_queries;
            report.budget_spent = rec.budget_spent;
            report.tallies = Some(rec.tallies);
            report.outcome = Outcome::Reconstruction(rec);
        }
        Attack::Membership { target } | Attack::Uniqueness { target } => {
            let known = resolve_target(schema, target)?;
            let count = count_matching(dataset, &target_predicate(schema, &known)?)?;
            let (out, truth) = if let Attack::Membership { .. } = config.attack {
                (membership_inference(mech, &known, config.k, budget)?, count > 0)
            } else {
                (confirm_uniqueness(mech, &known, config.k, budget)?, count == 1)
            };
            targeted(&mut report, out.protected_calls, out.unprotected_calls, out.budget_spent);
            report.exact = Some(out.answer == truth);
            report.outcome = match config.attack {
                Attack::Membership { .. } => Outcome::Membership(out),
                _ => Outcome::Uniqueness(out),
            };
        }
        Attack::AttributeInfer { target, attribute, assume_unique } => {
            let known = resolve_target(schema, target)?;
            let attr = schema.index_of(attribute)?;
            let out = attribute_inference(mech, &known, attr, config.k, budget, *assume_unique)?;
            let predicate = target_predicate(schema, &known)?;
            let mut truth: Vec<f64> = dataset
                .rows()
                .iter()
                .filter(|r| predicate.matches(r))
                .map(|r| on_grid(schema, attr, r[attr]))
                .collect();
            truth.sort_by(f64::total_cmp);
            targeted(&mut report, out.protected_calls, out.unprotected_calls, out.budget_spent);
            report.exact = Some(truth == out.answer.values);
            report.outcome = Outcome::Inference(out);
        }
        Attack::BdpEnumerate | Attack::DecisionRuleSim { .. } | Attack::NegativeControl => {
            unreachable!("dispatched by run_experiment_on")
        }
    }
    report.ledger_spent = ledger.map(PrivacyLedger::spent);
    Ok(report)
}

#[derive(Debug, Serialize)]
struct AttributeRow<'a> {
    attribute: &'a str,
    distinct_values: usize,
    protected_queries: u64,
    unprotected_queries: u64,
    exact: Option<bool>,
}

/// Path of the per-attribute table written next to `report_path`.
pub fn attribute_table_path(report_path: &Path) -> PathBuf {
    let stem = report_path.file_stem().map_or_else(|| "report".into(), |s| s.to_string_lossy().into_owned());
    report_path.with_file_name(format!("{stem}.attributes.csv"))
}

/// Write the report as JSON and a flat per-attribute CSV beside it.
pub fn emit_report(report: &RunReport, path: impl AsRef<Path>) -> Result<PathBuf> {
    let path = path.as_ref();
    let mut json = serde_json::to_string_pretty(report)?;
    json.push('\n');
    std::fs::write(path, json)?;
    let table = attribute_table_path(path);
    let mut writer = csv::Writer::from_path(&table)?;
    let attributes = report.reconstruction().map_or(&[][..], |r| &r.attributes[..]);
    if attributes.is_empty() {
        writer.write_record(["attribute", "distinct_values", "protected_queries", "unprotected_queries", "exact"])?;
    }
    for a in attributes {
        writer.serialize(AttributeRow {
            attribute: &a.name,
            distinct_values: a.distinct_values,
            protected_queries: a.protected_queries,
            unprotected_queries: a.unprotected_queries,
            exact: a.exact,
        })?;
    }
    writer.flush()?;
    Ok(table)
}

pub fn load_report(path: impl AsRef<Path>) -> Result<RunReport> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}
