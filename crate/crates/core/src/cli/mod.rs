//! Command-line front end: `run`, `stats`, `export` and `replay`.

mod export;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use crate::advisor::{BackendSpec, RemoteSettings};
use crate::environment::TrafficLevel;
use crate::error::{Error, Result};
use crate::orchestrator::{run_experiment, write_outputs, Configuration, ExperimentContext, Plan, ResultTable, SeedSpec};
use crate::stats::{analyze, write_stats_csv};

pub use export::{export_figure_data, write_figure_data, Figure};

#[derive(Debug, Parser)]
#[command(name = "cellmarl", version, about = "Two-station cellular overload experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train and test every cell of a plan and write results.
    Run(RunArgs),
    /// Kruskal-Wallis and Dunn/Holm tests over a results.csv.
    Stats(StatsArgs),
    /// Write plot-ready CSVs for figure panels.
    Export(ExportArgs),
    /// Recount drops and failure steps per cell from an events log.
    Replay(ReplayArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BackendKind {
    Scripted,
    Replay,
    Remote,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Plan file (TOML).
    #[arg(long)]
    pub plan: PathBuf,
    #[arg(long, default_value = "results")]
    pub out: PathBuf,
    /// Seed count `N` (seeds 0..N) or a list `a,b,c`.
    #[arg(long, value_parser = parse_seeds)]
    pub seeds: Option<SeedSpec>,
    #[arg(long, value_delimiter = ',', value_parser = parse_traffic)]
    pub traffic: Option<Vec<TrafficLevel>>,
    #[arg(long, value_delimiter = ',', value_parser = parse_configuration)]
    pub config: Option<Vec<Configuration>>,
    #[arg(long, value_enum)]
    pub backend: Option<BackendKind>,
    /// Replay log for `--backend replay` when the plan names none.
    #[arg(long)]
    pub replay_log: Option<PathBuf>,
    #[arg(long)]
    pub batch_interval: Option<u32>,
    #[arg(long)]
    pub parallelism: Option<usize>,
    /// Also write events.jsonl.
    #[arg(long)]
    pub events: bool,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub results: PathBuf,
    #[arg(long, default_value = "stats.csv")]
    pub out: PathBuf,
    /// Column of results.csv to test.
    #[arg(long, default_value = "dropped_requests")]
    pub metric: String,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub results: PathBuf,
    #[arg(long, value_enum, default_value = "all")]
    pub figure: Figure,
    #[arg(long, default_value = "plotdata")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub events: PathBuf,
    /// Compare the recount against this results.csv and fail on mismatch.
    #[arg(long)]
    pub results: Option<PathBuf>,
}

fn parse_seeds(s: &str) -> std::result::Result<SeedSpec, String> {
    SeedSpec::parse(s).ok_or_else(|| format!("expected N or a,b,c; got {s:?}"))
}

fn parse_traffic(s: &str) -> std::result::Result<TrafficLevel, String> {
    TrafficLevel::parse(s).ok_or_else(|| format!("unknown traffic level {s:?} (low, normal, high)"))
}

fn parse_configuration(s: &str) -> std::result::Result<Configuration, String> {
    Configuration::parse(s).ok_or_else(|| format!("unknown configuration {s:?} (marl-only, guided-marl, aura)"))
}

/// Parses `argv`, runs the command and maps the outcome to the exit-code
/// contract: 0 success, 2 usage error, 1 runtime error.
pub fn main_with_args<I, T>(argv: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn require_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::io(path, std::io::Error::new(std::io::ErrorKind::NotFound, "no such file")))
    }
}

fn require_dir_target(path: &Path) -> Result<()> {
    if path.exists() && !path.is_dir() {
        return Err(Error::io(path, std::io::Error::new(std::io::ErrorKind::AlreadyExists, "exists and is not a directory")));
    }
    Ok(())
}

fn require_file_target(path: &Path) -> Result<()> {
    if path.is_dir() {
        return Err(Error::io(path, std::io::Error::new(std::io::ErrorKind::AlreadyExists, "is a directory")));
    }
    Ok(())
}

pub fn execute(command: Command) -> Result<()> {
    match command {
        Command::Run(args) => run(args),
        Command::Stats(args) => {
            require_file(&args.results)?;
            require_file_target(&args.out)?;
            let table = ResultTable::read_csv(&args.results)?;
            let rows = analyze(&table, &args.metric)?;
            write_stats_csv(&args.out, &rows)
        }
        Command::Export(args) => {
            require_file(&args.results)?;
            require_dir_target(&args.out)?;
            let table = ResultTable::read_csv(&args.results)?;
            write_figure_data(&args.out, &table, args.figure)
        }
        Command::Replay(args) => {
            require_file(&args.events)?;
            if let Some(results) = &args.results {
                require_file(results)?;
            }
            replay(&args)
        }
    }
}

/// Applies command-line overrides on top of the plan file.
pub fn apply_overrides(plan: &mut Plan, args: &RunArgs) -> Result<()> {
    if let Some(seeds) = &args.seeds {
        plan.seeds = seeds.clone();
    }
    if let Some(traffic) = &args.traffic {
        plan.traffic_levels = traffic.clone();
    }
    if let Some(configs) = &args.config {
        plan.configurations = configs.clone();
    }
    if let Some(n) = args.batch_interval {
        plan.batch_interval = n;
    }
    match args.backend {
        None => {}
        Some(BackendKind::Scripted) => plan.backend = BackendSpec::Scripted,
        Some(BackendKind::Replay) => match (&args.replay_log, &plan.backend) {
            (Some(path), _) => plan.backend = BackendSpec::Replay { path: path.clone() },
            (None, BackendSpec::Replay { .. }) => {}
            (None, _) => return Err(Error::Config("--backend replay needs --replay-log or a replay backend in the plan".into())),
        },
        Some(BackendKind::Remote) => {
            if !matches!(plan.backend, BackendSpec::Remote { .. }) {
                plan.backend = BackendSpec::Remote {
                    settings: RemoteSettings::default(),
                };
            }
        }
    }
    plan.validate()
}

fn run(args: RunArgs) -> Result<()> {
    require_file(&args.plan)?;
    require_dir_target(&args.out)?;
    if let Some(log) = &args.replay_log {
        require_file(log)?;
    }
    let mut plan = Plan::load(&args.plan)?;
    apply_overrides(&mut plan, &args)?;
    let ctx = ExperimentContext {
        transport: None,
        record_events: args.events,
        parallelism: args.parallelism,
    };
    let cells = plan.cells().len();
    tracing::info!(cells, backend = plan.backend.name(), "starting experiment");
    let output = run_experiment(&plan, &ctx)?;
    write_outputs(&args.out, &output, args.events)?;
    write_figure_data(&args.out.join("plotdata"), &output.table, Figure::All)?;
    tracing::info!(out = %args.out.display(), "results written");
    Ok(())
}

#[derive(Deserialize)]
struct StepLine {
    kind: String,
    config: String,
    traffic: String,
    seed: u64,
    #[serde(default)]
    dropped_requests: u64,
    #[serde(default)]
    failure: bool,
}

#[derive(Default)]
struct Recount {
    steps: u64,
    dropped_requests: u64,
    failure_steps: u64,
}

fn replay(args: &ReplayArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.events).map_err(|e| Error::io(&args.events, e))?;
    let mut cells: BTreeMap<(Configuration, TrafficLevel, u64), Recount> = BTreeMap::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let at = |msg: String| Error::parse(&args.events, format!("line {}: {msg}", i + 1));
        let event: StepLine = serde_json::from_str(line).map_err(|e| at(e.to_string()))?;
        if event.kind != "step" {
            continue;
        }
        let config = Configuration::parse(&event.config).ok_or_else(|| at(format!("unknown config {:?}", event.config)))?;
        let traffic = TrafficLevel::parse(&event.traffic).ok_or_else(|| at(format!("unknown traffic {:?}", event.traffic)))?;
        let cell = cells.entry((config, traffic, event.seed)).or_default();
        cell.steps += 1;
        cell.dropped_requests += event.dropped_requests;
        cell.failure_steps += u64::from(event.failure);
    }

    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let mut w = csv::Writer::from_writer(&mut out);
    let io = |e: csv::Error| Error::parse("<stdout>", e);
    w.write_record(["config", "traffic", "seed", "steps", "dropped_requests", "failure_steps"]).map_err(io)?;
    for ((c, t, s), r) in &cells {
        w.write_record([c.name().to_string(), t.name().to_string(), s.to_string(), r.steps.to_string(), r.dropped_requests.to_string(), r.failure_steps.to_string()])
            .map_err(io)?;
    }
    w.flush().map_err(|e| Error::io("<stdout>", e))?;
    drop(w);
    out.flush().map_err(|e| Error::io("<stdout>", e))?;

    if let Some(path) = &args.results {
        let table = ResultTable::read_csv(path)?;
        let mut mismatches = Vec::new();
        for row in &table.rows {
            let key = (row.configuration, row.traffic, row.seed);
            let (drops, failures) = cells.get(&key).map_or((0, 0), |r| (r.dropped_requests, r.failure_steps));
            if drops != row.system.dropped_requests || failures != row.system.failure_steps {
                mismatches.push(format!("{} {} seed {}", row.configuration, row.traffic, row.seed));
            }
        }
        if !mismatches.is_empty() {
            return Err(Error::Precondition(format!("events disagree with results for: {}", mismatches.join(", "))));
        }
    }
    Ok(())
}
