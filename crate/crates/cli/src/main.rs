mod commands;
mod error;
mod ingest;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use subgroup_causal::fixtures::icd_trial;
use subgroup_causal::{Assumption, Measure, MechanismKind, ObservedTable};

use crate::error::CliError;
use crate::ingest::Format;
use crate::report::InputInfo;

#[derive(Debug, Parser)]
#[command(name = "subgroup-causal", version, about = "Subgroup causal effects with a nonignorably missing binary covariate")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args, Serialize)]
struct InputArgs {
    /// Table as JSON ({"J","K","observed","missing"}) or CSV (t,x,y,m,n).
    #[arg(long, conflicts_with = "fixture", required_unless_present = "fixture")]
    input: Option<PathBuf>,
    /// Built-in table: icd_trial.
    #[arg(long)]
    fixture: Option<String>,
    /// Overrides the format inferred from the file extension.
    #[arg(long, value_parser = ["json", "csv"])]
    format: Option<String>,
}

#[derive(Debug, Clone, Args, Serialize)]
struct CommonArgs {
    #[arg(long, env = "SUBGROUP_CAUSAL_SEED", default_value_t = 0)]
    seed: u64,
    /// Treatment assignment: latent (ignorable given X) or randomized.
    #[arg(long, default_value = "randomized", value_parser = parse_assumption)]
    assume: Assumption,
    /// Report path; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
struct ChainArgs {
    #[arg(long, default_value_t = 10_000)]
    iters: usize,
    #[arg(long, default_value_t = 5_000)]
    burnin: usize,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Conditions, fits, goodness of fit, selection, bounds and posterior summaries.
    Analyze {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        chain: ChainArgs,
        #[arg(long, default_value = "cor", value_parser = parse_measure)]
        measure: Measure,
    },
    /// Closed-form identification under one mechanism.
    Identify {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_parser = parse_mechanism)]
        mechanism: MechanismKind,
        #[arg(long, default_value = "cor", value_parser = parse_measure)]
        measure: Measure,
    },
    /// Likelihood-ratio goodness of fit against the saturated model.
    Gof {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        common: CommonArgs,
        /// All restricted mechanisms when omitted.
        #[arg(long, value_parser = parse_mechanism)]
        mechanism: Option<MechanismKind>,
    },
    /// Bounds on the subgroup effects under unrestricted missingness.
    Bounds {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value = "cor", value_parser = parse_measure)]
        measure: Measure,
    },
    /// Posterior sampling under one mechanism.
    Gibbs {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        chain: ChainArgs,
        #[arg(long, value_parser = parse_mechanism)]
        mechanism: MechanismKind,
        #[arg(long, default_value = "cor", value_parser = parse_measure)]
        measure: Measure,
        /// Writes every retained draw as CSV.
        #[arg(long)]
        draws_out: Option<PathBuf>,
    },
    /// Profiles the sensitivity model over a grid of outcome coefficients.
    Sensitivity {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        common: CommonArgs,
        /// Grid as lo:hi:step.
        #[arg(long, default_value = "-2:2:0.25", value_parser = parse_grid, allow_hyphen_values = true)]
        grid: Grid,
    },
    /// Replication study over the simulation designs.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        chain: ChainArgs,
        /// Data-generating mechanism; all five designs when omitted.
        #[arg(long, value_parser = parse_mechanism)]
        mechanism: Option<MechanismKind>,
        #[arg(long, default_value_t = 1000)]
        n: u64,
        #[arg(long, default_value_t = 200)]
        replicates: usize,
        /// Skip posterior sampling and report EM metrics only.
        #[arg(long)]
        em_only: bool,
    },
    /// Masks a complete table with each mechanism and scores every estimator.
    Mask {
        /// Complete table; a synthetic one from the simulation design when omitted.
        #[arg(long, conflicts_with = "fixture")]
        input: Option<PathBuf>,
        #[arg(long)]
        fixture: Option<String>,
        #[arg(long, value_parser = ["json", "csv"])]
        format: Option<String>,
        #[command(flatten)]
        common: CommonArgs,
        /// Size of the synthetic complete table.
        #[arg(long, default_value_t = 2000)]
        n: u64,
    },
    /// Chooses the restricted mechanism with the largest likelihood.
    Select {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        common: CommonArgs,
    },
}

#[derive(Debug, Clone, Serialize)]
struct Grid {
    lo: f64,
    hi: f64,
    step: f64,
}

impl Grid {
    fn points(&self) -> Vec<f64> {
        let count = ((self.hi - self.lo) / self.step + 1e-9).floor() as usize + 1;
        (0..count).map(|i| self.lo + i as f64 * self.step).collect()
    }
}

fn parse_mechanism(s: &str) -> Result<MechanismKind, String> {
    s.parse().map_err(|e: subgroup_causal::Error| e.to_string())
}

fn parse_measure(s: &str) -> Result<Measure, String> {
    s.parse().map_err(|e: subgroup_causal::Error| e.to_string())
}

fn parse_assumption(s: &str) -> Result<Assumption, String> {
    s.parse().map_err(|e: subgroup_causal::Error| e.to_string())
}

fn parse_grid(s: &str) -> Result<Grid, String> {
    let parts: Vec<f64> = s
        .split(':')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("bad grid value '{p}': {e}")))
        .collect::<Result<_, _>>()?;
    let [lo, hi, step] = parts[..] else {
        return Err("grid must be lo:hi:step".into());
    };
    if !(lo.is_finite() && hi.is_finite() && step.is_finite()) || step <= 0.0 || hi < lo {
        return Err("grid needs finite lo <= hi and a positive step".into());
    }
    if (hi - lo) / step > 10_000.0 {
        return Err("grid has more than 10000 points".into());
    }
    Ok(Grid { lo, hi, step })
}

fn load_fixture(name: &str) -> Result<ObservedTable, CliError> {
    match name {
        "icd_trial" | "icd" => Ok(icd_trial()),
        other => Err(CliError::data(format!("unknown fixture '{other}' (available: icd_trial)"))),
    }
}

fn load(input: Option<&PathBuf>, fixture: Option<&str>, format: Option<&str>) -> Result<(ObservedTable, InputInfo), CliError> {
    if let Some(name) = fixture {
        let table = load_fixture(name)?;
        let canonical = serde_json::to_vec(&table).map_err(|e| CliError::data(e.to_string()))?;
        let info = InputInfo::new(format!("fixture:{name}"), &canonical, table.total());
        return Ok((table, info));
    }
    let path = input.ok_or_else(|| CliError::data("either --input or --fixture is required"))?;
    let format = match format {
        Some("json") => Format::Json,
        Some("csv") => Format::Csv,
        _ => Format::from_path(path)?,
    };
    let (table, bytes) = ingest::read_table(path, format)?;
    let info = InputInfo::new(path.display().to_string(), &bytes, table.total());
    Ok((table, info))
}

fn load_args(args: &InputArgs) -> Result<(ObservedTable, InputInfo), CliError> {
    load(args.input.as_ref(), args.fixture.as_deref(), args.format.as_deref())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Analyze { input, common, chain, measure } => {
            let (table, info) = load_args(&input)?;
            commands::analyze(&table, info, &common, &chain, measure)
        }
        Command::Identify { input, common, mechanism, measure } => {
            let (table, info) = load_args(&input)?;
            commands::identify(&table, info, &common, mechanism, measure)
        }
        Command::Gof { input, common, mechanism } => {
            let (table, info) = load_args(&input)?;
            commands::gof(&table, info, &common, mechanism)
        }
        Command::Bounds { input, common, measure } => {
            let (table, info) = load_args(&input)?;
            commands::bounds(&table, info, &common, measure)
        }
        Command::Gibbs { input, common, chain, mechanism, measure, draws_out } => {
            let (table, info) = load_args(&input)?;
            commands::gibbs(&table, info, &common, &chain, mechanism, measure, draws_out.as_deref())
        }
        Command::Sensitivity { input, common, grid } => {
            let (table, info) = load_args(&input)?;
            commands::sensitivity(&table, info, &common, &grid)
        }
        Command::Simulate { common, chain, mechanism, n, replicates, em_only } => {
            commands::simulate(&common, &chain, mechanism, n, replicates, em_only)
        }
        Command::Mask { input, fixture, format, common, n } => {
            let loaded = if input.is_some() || fixture.is_some() {
                Some(load(input.as_ref(), fixture.as_deref(), format.as_deref())?)
            } else {
                None
            };
            commands::mask(loaded, &common, n)
        }
        Command::Select { input, common } => {
            let (table, info) = load_args(&input)?;
            commands::select(&table, info, &common)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
