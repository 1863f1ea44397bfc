//! `evsched` command-line front end.
//!
//! Subcommands:
//!
//! * `gen`: draw a scenario and write it in the scenario text format.
//! * `run`: schedule one scenario with one method and write `schedule.csv`,
//!   `metrics.json`, `trace.csv` and `ledger.json` into the output directory.
//! * `sweep`: Monte Carlo replications over several fleet sizes, one summary row
//!   per (fleet size, replication).
//! * `audit`: recompute message totals from a run's trace and compare them with
//!   its ledger.
//!
//! Exit codes: 0 on success, 2 for bad flags or configuration, 3 when the
//! scenario cannot be scheduled, 4 when an audit finds a mismatch, 1 for I/O
//! failures.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use evsched::baselines::{run_convenience_max, run_cost_min};
use evsched::centralized::{run_csa, Allocation, CentralOptions};
use evsched::distributed::ledger::{read_trace_csv, write_trace_csv, MessageLedger};
use evsched::distributed::{run_dcsa, DcsaOptions};
use evsched::forecast::ForecastMode;
use evsched::metrics::{charging_times, evaluate, report_json, write_schedule_csv, write_summary_csv, RunMetrics, RunReport};
use evsched::model::Scenario;
use evsched::scenario::{generate_scenario, GeneratorConfig};
use evsched::scenario_io::{load_scenario, scenario_to_string};
use evsched::sim::{RunResult, DEFAULT_EPSILON};
use evsched::EvError;

const METHODS: [&str; 4] = ["csa", "dcsa", "cost-min", "convenience-max"];

#[derive(Parser, Debug)]
#[command(name = "evsched", version, about = "EV charge scheduling simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a scenario file.
    Gen(GenArgs),
    /// Schedule one scenario and write its artifacts.
    Run(RunArgs),
    /// Run Monte Carlo replications over several fleet sizes.
    Sweep(SweepArgs),
    /// Check a run's message ledger against its trace.
    Audit(AuditArgs),
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(long, default_value_t = 200)]
    evs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct MethodArgs {
    /// csa, dcsa, cost-min or convenience-max.
    #[arg(long, default_value = "dcsa")]
    method: String,
    /// Bisection tolerance for dcsa.
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    epsilon: f64,
    /// perfect, seasonal-naive or previous-days-average.
    #[arg(long, default_value = "seasonal-naive")]
    forecaster: String,
    /// Rate allocation for csa: greedy or guarded.
    #[arg(long, default_value = "greedy")]
    allocation: String,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    method: MethodArgs,
    /// Scenario file written by `gen`. Without it a scenario is drawn from --seed and --evs.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 200)]
    evs: usize,
    /// Override the scenario's peak cap in kW, or `none` to lift it.
    #[arg(long)]
    peak_cap: Option<String>,
    /// Override the scenario's linear price coefficient.
    #[arg(long)]
    k0: Option<f64>,
    /// Override the scenario's quadratic price coefficient.
    #[arg(long)]
    k1: Option<f64>,
    #[arg(long, env = "EVSCHED_OUT_DIR", default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    method: MethodArgs,
    /// Comma-separated fleet sizes.
    #[arg(long, value_delimiter = ',', default_value = "100,200,300,400")]
    evs: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    reps: usize,
    /// Replication `r` uses seed `seed + r` at every fleet size.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, env = "EVSCHED_OUT_DIR", default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct AuditArgs {
    /// Directory holding `trace.csv` and `ledger.json` from `run`.
    #[arg(long, env = "EVSCHED_OUT_DIR", default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Debug)]
enum CliError {
    Config(String),
    Infeasible(String),
    Mismatch(String),
    Io(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Infeasible(_) => 3,
            CliError::Mismatch(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Infeasible(m) | CliError::Mismatch(m) | CliError::Io(m) => m,
        }
    }
}

impl From<EvError> for CliError {
    fn from(err: EvError) -> Self {
        let msg = err.to_string();
        match err {
            EvError::Infeasible { .. } | EvError::MissedDeadline { .. } | EvError::SocOverflow { .. } => {
                CliError::Infeasible(msg)
            }
            EvError::Io(_) => CliError::Io(msg),
            _ => CliError::Config(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::Io(err.to_string())
    }
}

type CliResult<T> = Result<T, CliError>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(a) => cmd_gen(&a),
        Command::Run(a) => cmd_run(&a),
        Command::Sweep(a) => cmd_sweep(&a),
        Command::Audit(a) => cmd_audit(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

fn cmd_gen(args: &GenArgs) -> CliResult<()> {
    let sc = generate_scenario(args.seed, args.evs, &GeneratorConfig::default())?;
    let text = scenario_to_string(&sc);
    match &args.out {
        Some(path) => {
            create_parent(path)?;
            fs::write(path, text)?;
        }
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn create_parent(path: &Path) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(())
}

fn apply_overrides(sc: &mut Scenario, args: &RunArgs) -> CliResult<()> {
    if let Some(cap) = &args.peak_cap {
        sc.peak_cap_kw = match cap.as_str() {
            "none" => None,
            v => Some(
                v.parse()
                    .map_err(|_| CliError::Config(format!("--peak-cap expects kW or 'none', got '{v}'")))?,
            ),
        };
    }
    if let Some(k0) = args.k0 {
        sc.price_k0 = k0;
    }
    if let Some(k1) = args.k1 {
        sc.price_k1 = k1;
    }
    sc.validate()?;
    Ok(())
}

/// Runs one method with message tracing on for the schedulers that exchange messages.
fn run_method(sc: &Scenario, m: &MethodArgs, trace: bool) -> CliResult<(RunResult, String)> {
    let forecast = ForecastMode::from_name(&m.forecaster, sc.grid.slots_per_day())?;
    let label = forecast.label().to_string();
    let run = match m.method.as_str() {
        "csa" => run_csa(
            sc,
            &forecast,
            &CentralOptions {
                allocation: Allocation::from_name(&m.allocation)?,
                trace_messages: trace,
                ..CentralOptions::default()
            },
        )?,
        "dcsa" => run_dcsa(
            sc,
            &forecast,
            &DcsaOptions {
                epsilon: m.epsilon,
                trace_messages: trace,
            },
        )?,
        "cost-min" => run_cost_min(sc, &forecast)?,
        "convenience-max" => return Ok((run_convenience_max(sc)?, "perfect".into())),
        other => {
            return Err(CliError::Config(format!(
                "unknown method '{other}', expected one of {METHODS:?}"
            )))
        }
    };
    Ok((run, label))
}

fn cmd_run(args: &RunArgs) -> CliResult<()> {
    let (mut sc, seed) = match &args.scenario {
        Some(path) => (load_scenario(path)?, None),
        None => (generate_scenario(args.seed, args.evs, &GeneratorConfig::default())?, Some(args.seed)),
    };
    apply_overrides(&mut sc, args)?;
    let (run, forecast) = run_method(&sc, &args.method, true)?;
    let metrics = evaluate(&sc, &run)?;

    let dir = &args.out_dir;
    fs::create_dir_all(dir)?;
    write_schedule_csv(&run.schedule, &sc.grid, fs::File::create(dir.join("schedule.csv"))?)?;
    write_trace_csv(&run.trace, fs::File::create(dir.join("trace.csv"))?)?;
    let ledger = run.ledger.clone().unwrap_or_default();
    let ledger_json = serde_json::to_string_pretty(&ledger).map_err(|e| CliError::Io(e.to_string()))?;
    fs::write(dir.join("ledger.json"), ledger_json + "\n")?;
    let report = RunReport {
        summary: &metrics,
        forecast: &forecast,
        seed,
        charging_time_cdf: charging_times(&sc, &run.fleet).cdf(),
        slots: &run.slot_stats,
    };
    fs::write(dir.join("metrics.json"), report_json(&report)? + "\n")?;

    println!(
        "{}: {} EVs, cost {:.6}, convenience {:.4}, mean charging time {:.3} h, peak {:.1} kW",
        metrics.method, metrics.evs, metrics.cost, metrics.convenience, metrics.mean_charging_time_h, metrics.peak_load_kw
    );
    if metrics.missed > 0 {
        eprintln!("warning: {} EVs left before reaching their target", metrics.missed);
    }
    Ok(())
}

/// One sweep row: the replication's coordinates followed by its metrics.
fn sweep_row(n: usize, rep: usize, seed: u64, m: &RunMetrics) -> CliResult<String> {
    let mut buf = Vec::new();
    write_summary_csv(std::slice::from_ref(m), &mut buf)?;
    let text = String::from_utf8(buf).map_err(|e| CliError::Io(e.to_string()))?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    let row = lines.next().unwrap_or_default();
    Ok(format!("n,rep,seed,{header}\n{n},{rep},{seed},{row}\n"))
}

fn cmd_sweep(args: &SweepArgs) -> CliResult<()> {
    if !METHODS.contains(&args.method.method.as_str()) {
        return Err(CliError::Config(format!(
            "unknown method '{}', expected one of {METHODS:?}",
            args.method.method
        )));
    }
    if args.evs.is_empty() || args.reps == 0 {
        return Err(CliError::Config("a sweep needs at least one fleet size and one replication".into()));
    }
    let parts = args.out_dir.join("reps");
    fs::create_dir_all(&parts)?;
    let jobs: Vec<(usize, usize)> = args
        .evs
        .iter()
        .flat_map(|&n| (0..args.reps).map(move |r| (n, r)))
        .collect();
    let files: Vec<PathBuf> = jobs
        .par_iter()
        .map(|&(n, rep)| -> CliResult<PathBuf> {
            let seed = args.seed.wrapping_add(rep as u64);
            let sc = generate_scenario(seed, n, &GeneratorConfig::default())?;
            let (run, _) = run_method(&sc, &args.method, false)?;
            let metrics = evaluate(&sc, &run)?;
            let path = parts.join(format!("n{n}_rep{rep}.csv"));
            fs::write(&path, sweep_row(n, rep, seed, &metrics)?)?;
            Ok(path)
        })
        .collect::<CliResult<_>>()?;

    let mut merged = String::new();
    for (k, path) in files.iter().enumerate() {
        let text = fs::read_to_string(path)?;
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        if k == 0 {
            merged.push_str(header);
            merged.push('\n');
        }
        for line in lines {
            merged.push_str(line);
            merged.push('\n');
        }
    }
    let out = args.out_dir.join("sweep.csv");
    fs::write(&out, merged)?;
    println!("{} rows written to {}", files.len(), out.display());
    Ok(())
}

fn cmd_audit(args: &AuditArgs) -> CliResult<()> {
    let dir = &args.out_dir;
    let trace = read_trace_csv(fs::File::open(dir.join("trace.csv"))?)?;
    let text = fs::read_to_string(dir.join("ledger.json"))?;
    let ledger: MessageLedger =
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("ledger.json: {e}")))?;
    ledger.reconcile().map_err(CliError::Mismatch)?;
    let recomputed = MessageLedger::totals_from_trace(&trace)?;
    let logged = (ledger.ev_sa, ledger.sa_ca, ledger.sa_sa);
    println!("link     logged  recomputed");
    for (name, a, b) in [
        ("ev-sa", logged.0, recomputed.0),
        ("sa-ca", logged.1, recomputed.1),
        ("sa-sa", logged.2, recomputed.2),
    ] {
        println!("{name:<8} {a:>6}  {b:>10}");
    }
    if recomputed != logged {
        return Err(CliError::Mismatch(format!(
            "trace gives {recomputed:?}, ledger records {logged:?}"
        )));
    }
    println!("ledger matches trace ({} messages)", ledger.total());
    Ok(())
}
