//! Command-line front end. Every command is a pure function of its input
//! files and flags; outputs carry no timestamps.
//!
//! Exit codes: 0 success, 1 a `--expect` check failed, 2 bad input,
//! 3 internal error.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::mechanisms::{AuctionResult, ReplayFixture};
use crate::model::Money;
use crate::scenario::{Pricing, Scenario, ScenarioFile, SolverKind, TieRule};
use crate::simlab::{compare_with, evaluate, ComparisonReport, MechanismSpec, Metrics, GENERATOR_ID};

pub const EXIT_OK: i32 = 0;
pub const EXIT_EXPECTATION: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

/// Data files shipped with the binary, addressable by name.
const BUNDLED: &[(&str, &str)] = &[
    ("table1", include_str!("../fixtures/table1.json")),
    ("table2", include_str!("../fixtures/table2.json")),
    ("table1_scenario", include_str!("../fixtures/table1_scenario.json")),
    ("table2_scenario", include_str!("../fixtures/table2_scenario.json")),
    ("default", include_str!("../fixtures/profile_default.json")),
    ("users40", include_str!("../fixtures/profile_users40.json")),
    ("gamma0", include_str!("../fixtures/profile_gamma0.json")),
];

#[derive(Debug, Parser)]
#[command(
    name = "mdc-auction",
    version,
    about = "Budget-constrained multi-round resource auctions"
)]
pub struct Cli {
    /// Progress notes on stderr.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one mechanism on a scenario file.
    Run(RunArgs),
    /// Replay bid-matrix fixtures (unit demands, one seller).
    Replay(ReplayArgs),
    /// Paired multi-seed comparison of mechanisms on a generator profile.
    Compare(CompareArgs),
    /// Expand a generator profile into an explicit scenario file.
    Gen(GenArgs),
    /// Check a scenario file against the schema and model invariants.
    Validate(ValidateArgs),
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Omit the provenance header.
    #[arg(long)]
    pub no_header: bool,
}

#[derive(Debug, Clone, Args)]
pub struct OverrideArgs {
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long, value_parser = ["exact", "greedy"])]
    pub solver: Option<String>,
    /// Generator seed (scenarios with a generator block only).
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Scenario file or bundled name.
    pub scenario: String,
    /// mafl, repeated_srmra or double_auction.
    #[arg(long, default_value = "mafl")]
    pub mechanism: String,
    #[command(flatten)]
    pub overrides: OverrideArgs,
    /// Fail with exit code 1 unless the total utility matches, e.g. `total=26`.
    #[arg(long)]
    pub expect: Option<String>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// Fixture files or bundled names (`table1`, `table2`). Later fixtures
    /// are compared against the first.
    #[arg(required = true)]
    pub fixtures: Vec<String>,
    /// Checked against the last fixture's total, e.g. `total=34`.
    #[arg(long)]
    pub expect: Option<String>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Profile file (a scenario file with a `generator` block) or bundled
    /// name: default, users40, gamma0.
    #[arg(default_value = "default")]
    pub params: String,
    #[arg(long, default_value_t = 100)]
    pub seeds: usize,
    /// Comma-separated mechanisms, each optionally `name:gamma=G+solver=S`.
    #[arg(long, default_value = "mafl,repeated_srmra")]
    pub mechanism: String,
    #[command(flatten)]
    pub overrides: OverrideArgs,
    /// CSV goes here and the JSON summary next to it (`.summary.json`).
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    pub params: String,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    pub scenario: String,
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Failure of a command, carrying its exit code.
#[derive(Debug)]
enum Failure {
    Expectation(String),
    Error(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Error(Error::Io(e))
    }
}

type CmdResult = std::result::Result<(), Failure>;

fn load_text(source: &str) -> Result<(String, String)> {
    let path = Path::new(source);
    if path.exists() {
        let text = std::fs::read_to_string(path)?;
        let label = path
            .file_stem()
            .map_or_else(|| source.to_string(), |s| s.to_string_lossy().into_owned());
        return Ok((label, text));
    }
    BUNDLED
        .iter()
        .find(|(name, _)| *name == source)
        .map(|(name, text)| (name.to_string(), text.to_string()))
        .ok_or_else(|| {
            Error::Io(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("{source}: no such file or bundled fixture"),
            ))
        })
}

fn with_source(source: &str, err: Error) -> Error {
    match err {
        Error::Json(e) => Error::validation(source, e.to_string()),
        other => other,
    }
}

fn parse_expect(text: &str) -> Result<Money> {
    let value = text
        .strip_prefix("total=")
        .ok_or_else(|| Error::validation("--expect", "expected the form total=<n>"))?;
    value
        .trim()
        .parse::<f64>()
        .ok()
        .and_then(Money::from_decimal)
        .ok_or_else(|| Error::validation("--expect", format!("`{value}` is not a number")))
}

fn check_expect(expect: Option<&str>, actual: Money) -> CmdResult {
    if let Some(text) = expect {
        let wanted = parse_expect(text)?;
        if wanted != actual {
            return Err(Failure::Expectation(format!("expected total {wanted}, got {actual}")));
        }
    }
    Ok(())
}

fn emit(text: &str, out: Option<&Path>, stdout: &mut dyn Write) -> std::io::Result<()> {
    match out {
        Some(path) => std::fs::write(path, text),
        None => stdout.write_all(text.as_bytes()),
    }
}

fn solver_name(s: SolverKind) -> &'static str {
    match s {
        SolverKind::Exact => "exact",
        SolverKind::Greedy => "greedy",
    }
}

fn pricing_name(p: Pricing) -> &'static str {
    match p {
        Pricing::FirstPrice => "first_price",
        Pricing::Critical => "critical",
    }
}

fn tie_name(t: TieRule) -> &'static str {
    match t {
        TieRule::LowestIndex => "lowest_index",
        TieRule::HighestIndex => "highest_index",
    }
}

fn exhaustion_list(metrics: &Metrics) -> String {
    metrics
        .exhaustion_rounds
        .iter()
        .map(|r| r.map_or_else(|| "never".to_string(), |r| r.to_string()))
        .collect::<Vec<_>>()
        .join(";")
}

fn spec_from_overrides(kind: &str, overrides: &OverrideArgs) -> Result<MechanismSpec> {
    let mut spec: MechanismSpec = kind.parse()?;
    if let Some(gamma) = overrides.gamma {
        if !gamma.is_finite() || gamma < 0.0 {
            return Err(Error::validation("--gamma", "must be finite and >= 0"));
        }
        spec.gamma = Some(gamma);
    }
    if let Some(solver) = &overrides.solver {
        spec.solver = Some(solver.parse()?);
    }
    Ok(spec)
}

fn cmd_run(args: &RunArgs, verbose: bool, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CmdResult {
    let (label, text) = load_text(&args.scenario)?;
    let scenario = Scenario::from_json(&text, args.overrides.seed).map_err(|e| with_source(&label, e))?;
    let spec = spec_from_overrides(&args.mechanism, &args.overrides)?;
    if verbose {
        writeln!(
            stderr,
            "{label}: {} buyers, {} sellers, {} rounds",
            scenario.buyers.len(),
            scenario.sellers.len(),
            scenario.horizon
        )?;
    }
    let eval = evaluate(&scenario, &spec)?;
    let cfg = spec.apply(&scenario.mechanism);

    let mut report = String::new();
    if !args.output.no_header {
        writeln!(report, "# mdc-auction {} run {label}", env!("CARGO_PKG_VERSION")).unwrap();
        writeln!(
            report,
            "# mechanism={} gamma={} solver={} pricing={} tie_rule={}",
            spec.kind,
            cfg.gamma,
            solver_name(cfg.solver),
            pricing_name(cfg.pricing),
            tie_name(cfg.tie_rule)
        )
        .unwrap();
        match scenario.seed {
            Some(seed) => writeln!(report, "# seed={seed} generator={GENERATOR_ID}").unwrap(),
            None => writeln!(report, "# seed=none").unwrap(),
        }
    }
    write_run_table(&mut report, &eval.result, &eval.metrics);
    emit(&report, args.output.out.as_deref(), stdout)?;
    check_expect(args.expect.as_deref(), eval.result.total_utility)
}

fn write_run_table(report: &mut String, result: &AuctionResult, metrics: &Metrics) {
    report.push_str("round,utility,revenue,winners\n");
    for outcome in &result.per_round {
        let winners: Vec<String> = outcome.winners.iter().map(|(b, s)| format!("{b}:{s}")).collect();
        writeln!(
            report,
            "{},{},{},{}",
            outcome.round,
            outcome.utility,
            outcome.revenue(),
            winners.join(" ")
        )
        .unwrap();
    }
    writeln!(report, "\ntotal_utility,{}", result.total_utility).unwrap();
    writeln!(report, "total_revenue,{}", result.total_revenue).unwrap();
    writeln!(report, "allocation_ratio,{:.6}", metrics.allocation_ratio).unwrap();
    writeln!(report, "exhaustion_rounds,{}", exhaustion_list(metrics)).unwrap();
}

fn cmd_replay(args: &ReplayArgs, stdout: &mut dyn Write) -> CmdResult {
    let mut report = String::new();
    if !args.output.no_header {
        writeln!(report, "# mdc-auction {} replay", env!("CARGO_PKG_VERSION")).unwrap();
    }
    let mut baseline: Option<(String, Money)> = None;
    let mut last_total = Money::ZERO;
    for source in &args.fixtures {
        let (label, text) = load_text(source)?;
        let fixture = ReplayFixture::from_json(&text).map_err(|e| with_source(&label, e))?;
        let name = fixture.name.clone().unwrap_or(label);
        let result = fixture.replay().map_err(|e| with_source(&name, e))?;
        let metrics = Metrics::from_result(&result);

        writeln!(report, "== {name} ==").unwrap();
        writeln!(report, "round utility winners").unwrap();
        for outcome in &result.per_round {
            let winners: Vec<String> = outcome.winners.buyers().map(|b| format!("u{}", b + 1)).collect();
            writeln!(report, "{} {} {}", outcome.round, outcome.utility, winners.join(" ")).unwrap();
        }
        writeln!(report, "total {}", result.total_utility).unwrap();
        writeln!(report, "exhaustion {}", exhaustion_list(&metrics)).unwrap();
        match &baseline {
            None => baseline = Some((name, result.total_utility)),
            Some((base_name, base_total)) => {
                if base_total.millis() > 0 {
                    let pct = (result.total_utility.millis() as f64 / base_total.millis() as f64 - 1.0) * 100.0;
                    writeln!(report, "improvement {pct:.2}% vs {base_name}").unwrap();
                }
            }
        }
        last_total = result.total_utility;
    }
    emit(&report, args.output.out.as_deref(), stdout)?;
    check_expect(args.expect.as_deref(), last_total)
}

fn load_profile(source: &str, seed: Option<u64>) -> Result<(String, ScenarioFile)> {
    let (label, text) = load_text(source)?;
    let mut file: ScenarioFile = serde_json::from_str(&text).map_err(|e| with_source(&label, e.into()))?;
    let Some(params) = file.generator.as_mut() else {
        return Err(Error::validation(
            "generator",
            format!("{label}: a profile needs a generator block"),
        ));
    };
    if let Some(seed) = seed {
        params.seed = seed;
    }
    Ok((label, file))
}

fn cmd_compare(args: &CompareArgs, verbose: bool, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CmdResult {
    let (label, file) = load_profile(&args.params, args.overrides.seed)?;
    let params = file.generator.clone().expect("checked by load_profile");
    let mut specs = MechanismSpec::parse_list(&args.mechanism)?;
    if specs.is_empty() {
        return Err(Error::validation("--mechanism", "no mechanisms given").into());
    }
    for spec in &mut specs {
        if spec.gamma.is_none() {
            spec.gamma = args.overrides.gamma;
        }
        if spec.solver.is_none() {
            if let Some(solver) = &args.overrides.solver {
                spec.solver = Some(solver.parse()?);
            }
        }
    }
    if verbose {
        writeln!(stderr, "{label}: {} seeds from {}", args.seeds, params.seed)?;
    }
    let report = compare_with(&params, &file.mechanism, &specs, args.seeds)?;

    let mut csv = String::new();
    if !args.output.no_header {
        writeln!(
            csv,
            "# mdc-auction {} compare {label} generator={} base_seed={} seeds={}",
            env!("CARGO_PKG_VERSION"),
            report.generator,
            report.base_seed,
            report.n_seeds
        )
        .unwrap();
    }
    csv.push_str(&report.to_csv());
    let summary = summary_text(&report);
    match &args.output.out {
        Some(path) => {
            std::fs::write(path, csv)?;
            std::fs::write(path.with_extension("summary.json"), report.summary_json()? + "\n")?;
            stdout.write_all(summary.as_bytes())?;
        }
        None => {
            stdout.write_all(csv.as_bytes())?;
            stdout.write_all(b"\n")?;
            stdout.write_all(summary.as_bytes())?;
        }
    }
    Ok(())
}

fn fmt_pct(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.2}%"))
}

fn summary_text(report: &ComparisonReport) -> String {
    let mut s = String::new();
    for m in &report.summaries {
        writeln!(
            s,
            "{}: mean revenue {:.3}, median revenue {:.3}, mean utility {:.3}",
            m.mechanism, m.mean_revenue, m.median_revenue, m.mean_utility
        )
        .unwrap();
    }
    for p in &report.pairs {
        writeln!(
            s,
            "{} vs {}: mean improvement {} (95% CI {} .. {}), win-rate {:.3} ({} wins, {} losses, {} ties)",
            p.a,
            p.b,
            fmt_pct(p.improvement_pct),
            fmt_pct(p.ci95_low),
            fmt_pct(p.ci95_high),
            p.win_rate,
            p.wins_a,
            p.wins_b,
            p.ties
        )
        .unwrap();
    }
    s
}

fn cmd_gen(args: &GenArgs, stdout: &mut dyn Write) -> CmdResult {
    let (label, file) = load_profile(&args.params, args.seed)?;
    let scenario = file.into_scenario(None).map_err(|e| with_source(&label, e))?;
    let text = scenario.to_json()? + "\n";
    emit(&text, args.out.as_deref(), stdout)?;
    Ok(())
}

fn cmd_validate(args: &ValidateArgs, stdout: &mut dyn Write) -> CmdResult {
    let (label, text) = load_text(&args.scenario)?;
    let scenario = Scenario::from_json(&text, args.seed).map_err(|e| with_source(&label, e))?;
    writeln!(
        stdout,
        "ok {label}: {} buyers, {} sellers, {} rounds, {} dimensions",
        scenario.buyers.len(),
        scenario.sellers.len(),
        scenario.horizon,
        scenario.dims
    )?;
    Ok(())
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_with<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(stderr, "{}", e.render());
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    let verbose = cli.verbose > 0;
    let outcome = match &cli.command {
        Command::Run(a) => cmd_run(a, verbose, stdout, stderr),
        Command::Replay(a) => cmd_replay(a, stdout),
        Command::Compare(a) => cmd_compare(a, verbose, stdout, stderr),
        Command::Gen(a) => cmd_gen(a, stdout),
        Command::Validate(a) => cmd_validate(a, stdout),
    };
    match outcome {
        Ok(()) => EXIT_OK,
        Err(Failure::Expectation(msg)) => {
            let _ = writeln!(stderr, "expectation failed: {msg}");
            EXIT_EXPECTATION
        }
        Err(Failure::Error(e)) => {
            let _ = writeln!(stderr, "error: {e}");
            match e {
                Error::SearchBudgetExceeded { .. } => EXIT_INPUT,
                ref e if e.is_input_error() => EXIT_INPUT,
                _ => EXIT_INTERNAL,
            }
        }
    }
}

pub fn main() -> i32 {
    run_with(
        std::env::args_os(),
        &mut std::io::stdout().lock(),
        &mut std::io::stderr().lock(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run_with(
            std::iter::once("mdc-auction").chain(args.iter().copied()),
            &mut out,
            &mut err,
        );
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn expect_parsing() {
        assert_eq!(parse_expect("total=26").unwrap(), Money::from_units(26));
        assert_eq!(parse_expect("total=3.5").unwrap(), Money::from_millis(3500));
        assert!(parse_expect("sum=26").is_err());
        assert!(parse_expect("total=abc").is_err());
    }

    #[test]
    fn replay_bundled_table1() {
        let (code, out, _) = run(&["replay", "table1"]);
        assert_eq!(code, EXIT_OK);
        assert!(out.contains("total 26\n"), "{out}");
        assert!(out.contains("1 9 u2 u3\n"), "{out}");
    }

    #[test]
    fn replay_expectation_mismatch() {
        let (code, _, err) = run(&["replay", "table1", "--expect", "total=27"]);
        assert_eq!(code, EXIT_EXPECTATION);
        assert!(err.contains("expected total 27, got 26"));
        assert_eq!(run(&["replay", "table1", "--expect", "total=26"]).0, EXIT_OK);
    }

    #[test]
    fn unknown_mechanism_is_input_error() {
        let (code, _, err) = run(&["run", "table1_scenario", "--mechanism", "vickrey"]);
        assert_eq!(code, EXIT_INPUT);
        assert!(err.contains("unknown mechanism"));
    }

    #[test]
    fn missing_file_is_input_error() {
        assert_eq!(run(&["validate", "/nonexistent/file.json"]).0, EXIT_INPUT);
    }

    #[test]
    fn bad_flag_is_input_error() {
        assert_eq!(run(&["run"]).0, EXIT_INPUT);
        assert_eq!(run(&["--help"]).0, EXIT_OK);
    }
}
