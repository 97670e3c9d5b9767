use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lsleak::attacks::{BoundsMode, CountSearch, ReconstructOptions, Schedule};
use lsleak::harness::{
    emit_report, parse_detector, run_experiment, Attack, Defense, ExperimentConfig, Outcome, RunReport, TargetValue,
};

#[derive(Parser)]
#[command(name = "lsleak", version, about = "Attacks on local-sensitivity query mechanisms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Plaintext CSV with a header row.
    #[arg(long, global = true)]
    dataset: Option<PathBuf>,
    /// Schema TOML file.
    #[arg(long, global = true)]
    schema: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = ',')]
    delimiter: char,
    #[arg(long, global = true, default_value_t = 1)]
    k: u32,
    #[arg(long, global = true, default_value_t = 1e-10)]
    eps_per_call: f64,
    /// Ledger cap on total budget; unbounded when absent.
    #[arg(long, global = true)]
    eps_cap: Option<f64>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// none | plain | hardened | round-nearest-integer | round-to-binary
    #[arg(long, global = true, default_value = "plain", value_parser = parse_defense)]
    defense: Defense,
    /// direct | repeated:M | variance:M[:THRESHOLD]
    #[arg(long, global = true, default_value = "direct", value_parser = parse_detector_arg)]
    detector: lsleak::attacks::Detector,
    /// Halve the per-decision budget after every decision.
    #[arg(long, global = true)]
    geometric: bool,
    /// Write the JSON report here, with a per-attribute CSV beside it.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Include wall-clock time in the report.
    #[arg(long, global = true)]
    timing: bool,
}

#[derive(Args, Clone)]
struct SearchArgs {
    /// Scan thresholds linearly instead of bisecting.
    #[arg(long)]
    linear: bool,
    /// Step through every grid value instead of bisecting the column.
    #[arg(long)]
    linear_sweep: bool,
    /// Find attribute bounds by doubling instead of using the schema's.
    #[arg(long)]
    discover_bounds: bool,
}

impl SearchArgs {
    fn options(&self) -> ReconstructOptions {
        ReconstructOptions {
            search: if self.linear { CountSearch::Linear } else { CountSearch::Binary },
            bounds: if self.discover_bounds { BoundsMode::Discover } else { BoundsMode::Schema },
            linear_sweep: self.linear_sweep,
            order: None,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Reconstruct the whole dataset.
    Reconstruct {
        #[command(flatten)]
        search: SearchArgs,
    },
    /// Reconstruct one column.
    Column {
        #[arg(long)]
        attr: String,
        #[command(flatten)]
        search: SearchArgs,
    },
    /// Decide whether a target, unique in the population, is in the data.
    Membership {
        /// attribute=value, repeatable.
        #[arg(long, required = true)]
        target: Vec<TargetValue>,
    },
    /// Decide whether exactly one record has the given values.
    Uniqueness {
        #[arg(long, required = true)]
        target: Vec<TargetValue>,
    },
    /// Learn an attribute of the records matching the given values.
    Infer {
        #[arg(long, required = true)]
        target: Vec<TargetValue>,
        #[arg(long)]
        attr: String,
        /// Treat the target as a single record.
        #[arg(long)]
        unique: bool,
    },
    /// Enumerate distinct records through the bootstrap existence query.
    BdpEnum,
    /// Accuracy of the variance decision rule.
    Simulate {
        #[arg(long, default_value_t = 1000)]
        m: usize,
        #[arg(long, default_value_t = 2_000_000)]
        trials: u64,
        #[arg(long, default_value_t = 5.0)]
        threshold: f64,
    },
    /// Reconstruction against a global-sensitivity Laplace custodian.
    NegativeControl,
}

fn parse_defense(s: &str) -> Result<Defense, String> {
    s.parse().map_err(|e: lsleak::Error| e.to_string())
}

fn parse_detector_arg(s: &str) -> Result<lsleak::attacks::Detector, String> {
    parse_detector(s).map_err(|e| e.to_string())
}

fn config(cli: Cli) -> ExperimentConfig {
    let attack = match cli.command {
        Command::Reconstruct { search } => Attack::ReconstructDataset { options: search.options() },
        Command::Column { attr, search } => Attack::ReconstructColumn { attribute: attr, options: search.options() },
        Command::Membership { target } => Attack::Membership { target },
        Command::Uniqueness { target } => Attack::Uniqueness { target },
        Command::Infer { target, attr, unique } => {
            Attack::AttributeInfer { target, attribute: attr, assume_unique: unique }
        }
        Command::BdpEnum => Attack::BdpEnumerate,
        Command::Simulate { m, trials, threshold } => Attack::DecisionRuleSim { m, trials, threshold },
        Command::NegativeControl => Attack::NegativeControl,
    };
    let c = cli.common;
    ExperimentConfig {
        dataset: c.dataset,
        schema: c.schema,
        delimiter: c.delimiter,
        k: c.k,
        eps_per_call: c.eps_per_call,
        eps_cap: c.eps_cap,
        seed: c.seed,
        defense: c.defense,
        detector: c.detector,
        schedule: if c.geometric { Schedule::Geometric } else { Schedule::Fixed },
        attack,
        timing: c.timing,
    }
}

fn summary(report: &RunReport) -> String {
    let mut line = match &report.outcome {
        Outcome::Reconstruction(r) => format!("recovered {} rows", r.rows.len().max(r.attributes.first().map_or(0, |a| a.values.len()))),
        Outcome::Membership(o) => format!("present: {}", o.answer),
        Outcome::Uniqueness(o) => format!("unique: {}", o.answer),
        Outcome::Inference(o) => format!("{}: {:?}", o.answer.attribute, o.answer.values),
        Outcome::Distinct(d) => format!("{} distinct records", d.records.len()),
        Outcome::Simulation(s) => format!("accuracy {:.5}% (m={}, trials={})", 100.0 * s.accuracy, s.m, s.trials),
        Outcome::Failed => format!("attack failed: {}", report.error.as_deref().unwrap_or("unknown")),
    };
    if !matches!(report.outcome, Outcome::Simulation(_)) {
        line.push_str(&format!(
            "; protected queries {}, unprotected queries {}, budget {:e}",
            report.protected_queries, report.unprotected_queries, report.budget_spent
        ));
    }
    if let Some(exact) = report.exact {
        line.push_str(&format!("; exact: {exact}"));
    }
    line
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let out = cli.common.out.clone();
    let config = config(cli);
    let report = match run_experiment(&config) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    };
    println!("{}", summary(&report));
    if let Some(path) = out {
        if let Err(e) = emit_report(&report, &path) {
            eprintln!("error: writing {}: {e}", path.display());
            return ExitCode::FAILURE;
        }
    }
    ExitCode::SUCCESS
}
