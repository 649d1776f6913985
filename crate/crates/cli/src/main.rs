//! `tattle` — command-line frontend for the inference-protection engine.
//!
//! Exit codes: 0 success; 1 usage or I/O error; 2 success with residual
//! leakage warnings; 3 enumeration budget exceeded; 4 deniability violation.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use tattle_core::{
    attack_constraint_propagation, attack_weighted_sampling, check_full_deniability,
    dependency_connectivity, generate_instance, load_relation, load_view_hidden, parse_constraints,
    run_binning, run_full, sensitivity_determination, CellRef, DependencySet, DetectionMethod,
    EngineOptions, Error as CoreError, Mode, Policy, ProtectionMethod, QuerierView,
    RelationInstance, Schema, DEFAULT_ORACLE_BUDGET,
};

const EXIT_OK: u8 = 0;
const EXIT_ERROR: u8 = 1;
const EXIT_RESIDUAL: u8 = 2;
const EXIT_BUDGET: u8 = 3;
const EXIT_VIOLATION: u8 = 4;

#[derive(Parser)]
#[command(
    name = "tattle",
    version,
    about = "Inference-protected secure views over relational data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute a secure view for one querier and write it with a run report.
    Protect(ProtectArgs),
    /// Check a released view against the brute-force deniability oracle.
    Verify(VerifyArgs),
    /// Simulate attackers against a released view and report precision.
    Attack(AttackArgs),
    /// Generate a synthetic instance satisfying a constraint set.
    Gen(GenArgs),
    /// Print dependency-connectivity scores for the schema's attributes.
    Connectivity(ConnectivityArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Input relation CSV (header row, `\N` for NULL)
    #[arg(long)]
    data: PathBuf,
    /// Schema JSON
    #[arg(long)]
    schema: PathBuf,
    /// Constraint file (one DC/FC per line)
    #[arg(long)]
    constraints: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Full,
    Kden,
}

#[derive(Clone, Copy, ValueEnum)]
enum DetectionArg {
    Ttc,
    Query,
    Oblivious,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProtectionArg {
    Mvc,
    Random,
}

#[derive(Args)]
struct ProtectArgs {
    #[command(flatten)]
    input: DataArgs,
    /// Policy file (JSON array of deny policies)
    #[arg(long)]
    policies: PathBuf,
    /// Querier identity the view is computed for
    #[arg(long)]
    querier: String,
    /// Deniability mode
    #[arg(long, value_enum, default_value = "full")]
    mode: ModeArg,
    /// Deniability fraction (kden mode only)
    #[arg(long)]
    k: Option<f64>,
    /// Detection strategy
    #[arg(long, value_enum, default_value = "ttc")]
    detection: DetectionArg,
    /// Protection strategy
    #[arg(long, value_enum, default_value = "mvc")]
    protection: ProtectionArg,
    /// Comma-separated attributes to cloak alongside each touched tuple
    #[arg(long, value_delimiter = ',')]
    cloak: Vec<String>,
    /// Only protect against cells owned by other parties
    #[arg(long)]
    owner_filter: bool,
    /// Seed for randomized strategies
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Safety cap on detect-protect iterations
    #[arg(long)]
    max_iterations: Option<usize>,
    /// Bin size for the scaling wrapper (requires --merge-size)
    #[arg(long)]
    bin_size: Option<usize>,
    /// Bins merged per round in the scaling wrapper (requires --bin-size)
    #[arg(long)]
    merge_size: Option<usize>,
    /// Output view CSV path
    #[arg(long)]
    out: PathBuf,
    /// Output report JSON path
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    input: DataArgs,
    /// Released view CSV to check
    #[arg(long)]
    view: PathBuf,
    /// Policy file; with --querier, restricts checked cells to sensitive ones
    #[arg(long, requires = "querier")]
    policies: Option<PathBuf>,
    /// Querier whose sensitive cells are checked (default: all hidden cells)
    #[arg(long, requires = "policies")]
    querier: Option<String>,
    /// Output report JSON path
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct AttackArgs {
    #[command(flatten)]
    input: DataArgs,
    /// Released view CSV to attack
    #[arg(long)]
    view: PathBuf,
    /// Seed for the weighted-sampling attacker
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Output report JSON path
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    /// Schema JSON
    #[arg(long)]
    schema: PathBuf,
    /// Constraint file the generated rows must satisfy
    #[arg(long)]
    constraints: PathBuf,
    /// Number of rows to generate
    #[arg(long)]
    n: usize,
    /// Generation seed (same seed, same rows)
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Total sampling attempts before giving up
    #[arg(long, default_value_t = 1_000_000)]
    attempt_budget: usize,
    /// Output CSV path
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ConnectivityArgs {
    /// Schema JSON
    #[arg(long)]
    schema: PathBuf,
    /// Constraint file
    #[arg(long)]
    constraints: PathBuf,
    /// Output report JSON path
    #[arg(long)]
    report: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            eprint!("{e}");
            return ExitCode::from(EXIT_ERROR);
        }
        Err(e) => {
            // --help / --version
            print!("{e}");
            return ExitCode::from(EXIT_OK);
        }
    };
    let result = match cli.command {
        Command::Protect(args) => cmd_protect(args),
        Command::Verify(args) => cmd_verify(args),
        Command::Attack(args) => cmd_attack(args),
        Command::Gen(args) => cmd_gen(args),
        Command::Connectivity(args) => cmd_connectivity(args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e.downcast_ref::<CoreError>() {
                Some(CoreError::DomainTooLarge(budget)) => {
                    eprintln!(
                        "the enumeration budget of {budget} assignments was exhausted; \
                         raise TT_ORACLE_BUDGET or reduce domains/bins"
                    );
                    EXIT_BUDGET
                }
                _ => EXIT_ERROR,
            };
            ExitCode::from(code)
        }
    }
}

type CmdResult = Result<u8, Box<dyn std::error::Error>>;

fn usage(msg: &str) -> Box<dyn std::error::Error> {
    format!("usage error: {msg}").into()
}

fn read(path: &Path) -> Result<String, Box<dyn std::error::Error>> {
    std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()).into())
}

fn write(path: &Path, content: &str) -> Result<(), Box<dyn std::error::Error>> {
    std::fs::write(path, content).map_err(|e| format!("{}: {e}", path.display()).into())
}

fn load_inputs(
    input: &DataArgs,
) -> Result<(RelationInstance, DependencySet), Box<dyn std::error::Error>> {
    let schema = Schema::from_json(&read(&input.schema)?)?;
    let instance = load_relation(&read(&input.data)?, &schema)?;
    let deps = parse_constraints(&read(&input.constraints)?, &schema)?;
    Ok((instance, deps))
}

fn load_policies(path: &Path) -> Result<Vec<Policy>, Box<dyn std::error::Error>> {
    Ok(serde_json::from_str(&read(path)?)?)
}

fn oracle_budget() -> Result<u64, Box<dyn std::error::Error>> {
    match std::env::var("TT_ORACLE_BUDGET") {
        Ok(s) => s
            .parse()
            .map_err(|_| usage(&format!("TT_ORACLE_BUDGET must be an integer, got {s:?}"))),
        Err(_) => Ok(DEFAULT_ORACLE_BUDGET),
    }
}

#[derive(Serialize)]
struct Report<T: Serialize> {
    format: u32,
    command: &'static str,
    #[serde(flatten)]
    body: T,
}

fn write_report<T: Serialize>(
    path: Option<&PathBuf>,
    command: &'static str,
    body: T,
) -> Result<(), Box<dyn std::error::Error>> {
    if let Some(path) = path {
        let report = Report { format: 1, command, body };
        write(path, &serde_json::to_string_pretty(&report)?)?;
    }
    Ok(())
}

fn cmd_protect(args: ProtectArgs) -> CmdResult {
    let mode = match (args.mode, args.k) {
        (ModeArg::Full, None) => Mode::Full,
        (ModeArg::Full, Some(_)) => return Err(usage("--k requires --mode kden")),
        (ModeArg::Kden, Some(_)) => Mode::Kden,
        (ModeArg::Kden, None) => return Err(usage("--mode kden requires --k")),
    };
    let binning = match (args.bin_size, args.merge_size) {
        (Some(b), Some(m)) => Some((b, m)),
        (None, None) => None,
        _ => return Err(usage("--bin-size and --merge-size must be given together")),
    };
    let (instance, deps) = load_inputs(&args.input)?;
    let policies = load_policies(&args.policies)?;
    let options = EngineOptions {
        mode,
        k: args.k.unwrap_or(1.0),
        detection: match args.detection {
            DetectionArg::Ttc => DetectionMethod::Ttc,
            DetectionArg::Query => DetectionMethod::Query,
            DetectionArg::Oblivious => DetectionMethod::Oblivious,
        },
        protection: match args.protection {
            ProtectionArg::Mvc => ProtectionMethod::Mvc,
            ProtectionArg::Random => ProtectionMethod::Random,
        },
        cloak_attrs: args.cloak.clone(),
        owner_filter: args.owner_filter,
        seed: args.seed,
        max_iterations: args.max_iterations,
    };
    let (view, report) = match binning {
        Some((b, m)) => run_binning(&args.querier, &policies, &deps, &instance, b, m, &options)?,
        None => run_full(&args.querier, &policies, &deps, &instance, &options)?,
    };
    write(&args.out, &view.to_csv())?;
    let residual = !report.residual_warnings.is_empty();
    for w in &report.residual_warnings {
        eprintln!(
            "warning: residual leakage at cell ({}, {}) via {}: {}",
            w.cell.0, w.cell.1, w.origin, w.detail
        );
    }
    println!(
        "protected view for {}: {} cells hidden in {} iterations ({} ms)",
        args.querier, report.total_hidden, report.iterations, report.wall_ms
    );
    #[derive(Serialize)]
    struct Body {
        querier: String,
        run: tattle_core::RunReport,
    }
    write_report(args.report.as_ref(), "protect", Body { querier: args.querier, run: report })?;
    Ok(if residual { EXIT_RESIDUAL } else { EXIT_OK })
}

fn cmd_verify(args: VerifyArgs) -> CmdResult {
    let (instance, deps) = load_inputs(&args.input)?;
    let hidden = load_view_hidden(&read(&args.view)?, &instance)?;
    let view = QuerierView::with_hidden(&instance, hidden.clone());
    let sensitive: BTreeSet<CellRef> = match (&args.policies, &args.querier) {
        (Some(path), Some(querier)) => {
            sensitivity_determination(&load_policies(path)?, querier, &instance)?.cells
        }
        _ => hidden,
    };
    let result = check_full_deniability(&instance, &deps, &sensitive, &view, oracle_budget()?)?;
    for cell in result.cells.iter().filter(|c| !c.equal) {
        println!(
            "violation: cell ({}, {}) inferred set {:?} differs from base {:?}",
            cell.cell.0, cell.cell.1, cell.under_view, cell.under_base
        );
    }
    println!(
        "deniability {} for {} cell(s)",
        if result.pass { "holds" } else { "VIOLATED" },
        result.cells.len()
    );
    let pass = result.pass;
    #[derive(Serialize)]
    struct Body {
        result: tattle_core::OracleResult,
    }
    write_report(args.report.as_ref(), "verify", Body { result })?;
    Ok(if pass { EXIT_OK } else { EXIT_VIOLATION })
}

fn cmd_attack(args: AttackArgs) -> CmdResult {
    let (instance, deps) = load_inputs(&args.input)?;
    let hidden = load_view_hidden(&read(&args.view)?, &instance)?;
    let view = QuerierView::with_hidden(&instance, hidden);
    let weighted = attack_weighted_sampling(&view, args.seed);
    let propagation = attack_constraint_propagation(&view, &deps, oracle_budget()?)?;
    println!(
        "weighted-sampling: {}/{} correct, precision {:.3}",
        weighted.correct, weighted.total, weighted.precision
    );
    println!(
        "constraint-propagation: {} forced, {}/{} correct, precision {:.3}",
        propagation.total, propagation.correct, propagation.total, propagation.precision
    );
    #[derive(Serialize)]
    struct Body {
        weighted_sampling: tattle_core::AttackOutcome,
        constraint_propagation: tattle_core::AttackOutcome,
    }
    write_report(
        args.report.as_ref(),
        "attack",
        Body { weighted_sampling: weighted, constraint_propagation: propagation },
    )?;
    Ok(EXIT_OK)
}

fn cmd_gen(args: GenArgs) -> CmdResult {
    let schema = Schema::from_json(&read(&args.schema)?)?;
    let deps = parse_constraints(&read(&args.constraints)?, &schema)?;
    let instance = generate_instance(&schema, &deps, args.n, args.seed, args.attempt_budget)?;
    write(&args.out, &QuerierView::full(&instance).to_csv())?;
    println!("generated {} rows into {}", args.n, args.out.display());
    Ok(EXIT_OK)
}

fn cmd_connectivity(args: ConnectivityArgs) -> CmdResult {
    let schema = Schema::from_json(&read(&args.schema)?)?;
    let deps = parse_constraints(&read(&args.constraints)?, &schema)?;
    let attrs: Vec<String> = schema.attributes.iter().map(|a| a.name.clone()).collect();
    let report = dependency_connectivity(&attrs, &deps);
    println!("{:<24} {:>8}  group", "attribute", "score");
    for (name, score) in &report.scores {
        let group = if report.high.contains(name) {
            "high"
        } else if report.medium.contains(name) {
            "medium"
        } else {
            "low"
        };
        println!("{name:<24} {score:>8}  {group}");
    }
    #[derive(Serialize)]
    struct Body {
        connectivity: tattle_core::ConnectivityReport,
    }
    write_report(args.report.as_ref(), "connectivity", Body { connectivity: report })?;
    Ok(EXIT_OK)
}
