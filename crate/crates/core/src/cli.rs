//! `capmdp` command-line front end.
//!
//! Exit codes: 0 ok, 1 other failure, 2 input error, 3 infeasible,
//! 4 limit exceeded. Every file written gets a `<file>.manifest.json`
//! sidecar describing the run; the primary outputs themselves contain no
//! timestamps, so reruns with the same seed reproduce them byte for byte.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::analysis::{self, AnalysisOptions, Solver, Suite};
use crate::error::{Error, Result};
use crate::evaluate::{check_proposition1, check_proposition2, evaluate_strategy};
use crate::exact::{solve_exact, solve_exact_stationary, SearchLimits, SolveResult, SolveStatus};
use crate::generator::{chronic_care_instance, random_instance, DEFAULT_MC_ITERATIONS};
use crate::model::{instance_to_json, load_instance, load_strategy, InstanceParams, DEFAULT_POPULATION};
use crate::padp::{solve_padp, PadpStatus};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_LIMIT: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "capmdp", version, about = "Capacity-constrained multi-model MDP toolkit")]
pub struct Cli {
    /// Worker threads for the solvers (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate an instance I(|Omega|, T, c, eps).
    Generate(GenerateArgs),
    /// Optimize a strategy.
    Solve(SolveArgs),
    /// Evaluate a strategy on an instance.
    Evaluate(EvaluateArgs),
    /// Run stochastic-value analyses on one instance.
    Analyze(AnalyzeArgs),
    /// Desk-scale experiment table over a (T, eps) grid of generated instances.
    Table(TableArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct GenerateArgs {
    /// JSON config {"n_scenarios","T","c","epsilon","seed","N","n_mc_iterations"}; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub scenarios: Option<usize>,
    #[arg(long = "T")]
    pub horizon: Option<usize>,
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long, env = "CAPMDP_SEED")]
    pub seed: Option<u64>,
    #[arg(long = "N")]
    pub population: Option<u64>,
    /// Monte Carlo draws for the chronic-care nominal model.
    #[arg(long)]
    pub mc_iterations: Option<usize>,
    /// Use an unrestricted random nominal model on this many states instead.
    #[arg(long)]
    pub states: Option<usize>,
    /// Output file (stdout when omitted).
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Exact,
    Padp,
    Stationary,
}

#[derive(Debug, Args, Serialize)]
pub struct SolveArgs {
    pub instance: PathBuf,
    #[arg(long, value_enum, default_value = "exact")]
    pub method: Method,
    #[arg(long)]
    pub max_nodes: Option<u64>,
    #[arg(long)]
    pub max_seconds: Option<f64>,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// Nodes per epoch (exact and stationary).
    #[arg(long)]
    pub search_log: Option<PathBuf>,
    /// Alive nodes and seconds per column (padp).
    #[arg(long)]
    pub timing: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct EvaluateArgs {
    pub instance: PathBuf,
    pub strategy: PathBuf,
    /// Include the full occupancy trajectory in the output.
    #[arg(long)]
    pub trajectory: bool,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SuiteArg {
    Evss,
    Evpi,
    Flexibility,
    Sweep,
    All,
}

impl From<SuiteArg> for Suite {
    fn from(s: SuiteArg) -> Self {
        match s {
            SuiteArg::Evss => Suite::Evss,
            SuiteArg::Evpi => Suite::Evpi,
            SuiteArg::Flexibility => Suite::Flexibility,
            SuiteArg::Sweep => Suite::Sweep,
            SuiteArg::All => Suite::All,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverArg {
    Exact,
    Padp,
}

impl From<SolverArg> for Solver {
    fn from(s: SolverArg) -> Self {
        match s {
            SolverArg::Exact => Solver::Exact,
            SolverArg::Padp => Solver::Padp,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct AnalyzeArgs {
    pub instance: PathBuf,
    #[arg(long, value_enum, default_value = "all")]
    pub suite: SuiteArg,
    #[arg(long, value_enum, default_value = "exact")]
    pub solver: SolverArg,
    /// Capacity grid `start:stop:step` for the sweep.
    #[arg(long, default_value = "0.2:0.8:0.1")]
    pub grid: String,
    #[arg(long, default_value_t = analysis::DEFAULT_MAX_REPAIR_DISTANCE)]
    pub max_repair_distance: usize,
    #[arg(long)]
    pub max_nodes: Option<u64>,
    #[arg(long)]
    pub max_seconds: Option<f64>,
    /// Report JSON (stdout when omitted).
    #[arg(long)]
    pub out_json: Option<PathBuf>,
    #[arg(long)]
    pub out_csv: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct TableArgs {
    /// Comma-separated noise radii.
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.25,0.5")]
    pub epsilons: Vec<f64>,
    /// Comma-separated horizons.
    #[arg(long = "horizons", value_delimiter = ',', default_value = "4,5,6")]
    pub horizons: Vec<usize>,
    #[arg(long, default_value_t = 20)]
    pub scenarios: usize,
    /// States of the random nominal model; omit for the six-state chronic-care model.
    #[arg(long)]
    pub states: Option<usize>,
    #[arg(long, default_value_t = 0.4)]
    pub c: f64,
    #[arg(long, env = "CAPMDP_SEED")]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = DEFAULT_MC_ITERATIONS)]
    pub mc_iterations: usize,
    #[arg(long, value_enum, default_value = "exact")]
    pub solver: SolverArg,
    /// CSV output (the ASCII table always goes to stdout).
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

/// Generator config file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateConfig {
    pub n_scenarios: Option<usize>,
    #[serde(rename = "T")]
    pub horizon: Option<usize>,
    pub c: Option<f64>,
    pub epsilon: Option<f64>,
    pub seed: Option<u64>,
    #[serde(rename = "N")]
    pub population: Option<u64>,
    pub n_mc_iterations: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub tool_version: String,
    pub wall_clock_seconds: f64,
    pub outputs: Vec<PathBuf>,
}

struct Outcome {
    code: i32,
    seed: Option<u64>,
    config: serde_json::Value,
    outputs: Vec<PathBuf>,
}

impl Outcome {
    fn ok(config: serde_json::Value) -> Self {
        Outcome { code: EXIT_OK, seed: None, config, outputs: Vec::new() }
    }
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::DimensionMismatch(_)
        | Error::Validation(_)
        | Error::Io { .. }
        | Error::Schema(_)
        | Error::Csv(_)
        | Error::InvalidParameter(_) => EXIT_INPUT,
        Error::Infeasible => EXIT_INFEASIBLE,
        Error::LimitExceeded(_) => EXIT_LIMIT,
        Error::RejectionLimitExceeded { .. } | Error::DivisionByZero(_) => EXIT_FAILURE,
    }
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    let result = match cli.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| execute(&cli.command)),
            Err(e) => Err(Error::InvalidParameter(format!("thread pool: {e}"))),
        },
        None => execute(&cli.command),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn execute(command: &Command) -> Result<i32> {
    let started = Instant::now();
    let (name, outcome) = match command {
        Command::Generate(a) => ("generate", cmd_generate(a)?),
        Command::Solve(a) => ("solve", cmd_solve(a)?),
        Command::Evaluate(a) => ("evaluate", cmd_evaluate(a)?),
        Command::Analyze(a) => ("analyze", cmd_analyze(a)?),
        Command::Table(a) => ("table", cmd_table(a)?),
    };
    let manifest = RunManifest {
        command: name.to_string(),
        config: outcome.config,
        seed: outcome.seed,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        outputs: outcome.outputs.clone(),
    };
    let text = serde_json::to_string_pretty(&manifest)?;
    for out in &outcome.outputs {
        write_file(&manifest_path(out), &text)?;
    }
    Ok(outcome.code)
}

pub fn manifest_path(output: &Path) -> PathBuf {
    let mut name = output.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes to `path`, or stdout when `None`; records the file in `outputs`.
fn emit(path: Option<&Path>, text: &str, outputs: &mut Vec<PathBuf>) -> Result<()> {
    match path {
        Some(p) => {
            write_file(p, text)?;
            outputs.push(p.to_path_buf());
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.write_all(b"\n"))
                .map_err(|e| Error::io("<stdout>", e))?;
        }
    }
    Ok(())
}

fn csv_to_file(path: &Path, write: impl FnOnce(&mut Vec<u8>) -> Result<()>, outputs: &mut Vec<PathBuf>) -> Result<()> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    fs::write(path, &buf).map_err(|e| Error::io(path, e))?;
    outputs.push(path.to_path_buf());
    Ok(())
}

fn config_json<T: Serialize>(args: &T) -> serde_json::Value {
    serde_json::to_value(args).unwrap_or(serde_json::Value::Null)
}

fn limits(max_nodes: Option<u64>, max_seconds: Option<f64>) -> SearchLimits {
    SearchLimits { max_nodes, max_seconds }
}

fn resolve_generate(a: &GenerateArgs) -> Result<(InstanceParams, usize)> {
    let cfg: GenerateConfig = match &a.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str(&text)?
        }
        None => GenerateConfig::default(),
    };
    let missing = |what: &str| Error::InvalidParameter(format!("{what} is required (flag or config)"));
    let params = InstanceParams {
        n_scenarios: a.scenarios.or(cfg.n_scenarios).ok_or_else(|| missing("--scenarios"))?,
        horizon: a.horizon.or(cfg.horizon).ok_or_else(|| missing("--T"))?,
        c: a.c.or(cfg.c).ok_or_else(|| missing("--c"))?,
        epsilon: a.epsilon.or(cfg.epsilon).ok_or_else(|| missing("--epsilon"))?,
        seed: a.seed.or(cfg.seed).unwrap_or(0),
        population: a.population.or(cfg.population).unwrap_or(DEFAULT_POPULATION),
    };
    params.check()?;
    let mc = a.mc_iterations.or(cfg.n_mc_iterations).unwrap_or(DEFAULT_MC_ITERATIONS);
    Ok((params, mc))
}

fn cmd_generate(a: &GenerateArgs) -> Result<Outcome> {
    let (params, mc) = resolve_generate(a)?;
    let inst = match a.states {
        Some(n) => random_instance(n, &params)?,
        None => chronic_care_instance(&params, mc)?,
    };
    let mut out = Outcome::ok(serde_json::json!({
        "params": params,
        "n_mc_iterations": mc,
        "states": a.states,
    }));
    out.seed = Some(params.seed);
    emit(a.out.as_deref(), &instance_to_json(&inst)?, &mut out.outputs)?;
    Ok(out)
}

fn exact_json(method: Method, res: &SolveResult) -> serde_json::Value {
    serde_json::json!({
        "method": method,
        "status": res.status,
        "f_star": res.value,
        "strategy": res.strategy,
        "nodes_explored": res.nodes_explored,
    })
}

fn cmd_solve(a: &SolveArgs) -> Result<Outcome> {
    let inst = load_instance(&a.instance)?;
    let lim = limits(a.max_nodes, a.max_seconds);
    let mut out = Outcome::ok(config_json(a));
    let (json, code) = match a.method {
        Method::Exact | Method::Stationary => {
            let res = if a.method == Method::Exact {
                solve_exact(&inst, lim)?
            } else {
                solve_exact_stationary(&inst, lim)?
            };
            if let Some(p) = &a.search_log {
                csv_to_file(p, |buf| res.write_search_log(buf), &mut out.outputs)?;
            }
            let code = match res.status {
                SolveStatus::Optimal => EXIT_OK,
                SolveStatus::Infeasible => EXIT_INFEASIBLE,
                SolveStatus::LimitExceeded => EXIT_LIMIT,
            };
            eprintln!("status: {:?}  value: {:?}  nodes: {}", res.status, res.value, res.nodes_explored);
            (exact_json(a.method, &res), code)
        }
        Method::Padp => {
            let res = solve_padp(&inst)?;
            if let Some(p) = &a.timing {
                csv_to_file(p, |buf| res.write_timing(buf), &mut out.outputs)?;
            }
            eprintln!("status: {:?}  value: {:?}", res.status, res.value);
            let code = if res.status == PadpStatus::Solved { EXIT_OK } else { EXIT_INFEASIBLE };
            let mut json = res.to_json();
            json["method"] = serde_json::json!(Method::Padp);
            (json, code)
        }
    };
    emit(a.out.as_deref(), &serde_json::to_string_pretty(&json)?, &mut out.outputs)?;
    out.code = code;
    Ok(out)
}

fn cmd_evaluate(a: &EvaluateArgs) -> Result<Outcome> {
    let inst = load_instance(&a.instance)?;
    let strat = load_strategy(&a.strategy)?;
    let res = evaluate_strategy(&inst, &strat)?;
    let prop1 = check_proposition1(&inst, &res.trajectory);
    let prop2 = check_proposition2(&inst, &res.trajectory);
    let min_slack = prop2.iter().copied().fold(f64::INFINITY, f64::min);
    eprintln!("U = {}", res.total_reward);
    eprintln!("feasible = {}", res.feasible);
    if let Some(v) = &res.first_violation {
        eprintln!("first violation: scenario {} epoch {} overflow {}", v.scenario, v.epoch, v.overflow);
    }
    eprintln!("conservation deviation = {prop1:e}");
    eprintln!("aggregated capacity min slack = {min_slack}");
    let mut json = res.to_json(a.trajectory);
    json["conservation_deviation"] = serde_json::json!(prop1);
    json["aggregated_capacity_slack"] = serde_json::json!(prop2);
    let mut out = Outcome::ok(config_json(a));
    emit(a.out.as_deref(), &serde_json::to_string_pretty(&json)?, &mut out.outputs)?;
    Ok(out)
}

fn cmd_analyze(a: &AnalyzeArgs) -> Result<Outcome> {
    let inst = load_instance(&a.instance)?;
    let grid = analysis::parse_grid(&a.grid)?;
    let opts = AnalysisOptions {
        solver: a.solver.into(),
        limits: limits(a.max_nodes, a.max_seconds),
        max_repair_distance: a.max_repair_distance,
    };
    let report = analysis::run_suite(&inst, a.suite.into(), &grid, &opts)?;
    let mut out = Outcome::ok(config_json(a));
    if let Some(p) = &a.out_csv {
        csv_to_file(p, |buf| report.write_csv(buf), &mut out.outputs)?;
    }
    emit(a.out_json.as_deref(), &report.to_json()?, &mut out.outputs)?;
    Ok(out)
}

/// One cell of a desk-scale experiment table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableRow {
    pub horizon: usize,
    pub epsilon: f64,
    pub here_and_now: f64,
    pub evss_percent: f64,
    pub evpi_percent: f64,
    pub flexibility_percent: f64,
}

/// EVSS, EVPI and flexibility for each `(T, eps)` pair of generated instances.
///
/// Instances for different cells share the seed, so the nominal model is
/// the same throughout and only the scenarios and horizon change.
pub fn experiment_table(
    horizons: &[usize],
    epsilons: &[f64],
    base: &InstanceParams,
    states: Option<usize>,
    mc_iterations: usize,
    opts: &AnalysisOptions,
) -> Result<Vec<TableRow>> {
    let mut rows = Vec::new();
    for &horizon in horizons {
        for &epsilon in epsilons {
            let params = InstanceParams { horizon, epsilon, ..base.clone() };
            let inst = match states {
                Some(n) => random_instance(n, &params)?,
                None => chronic_care_instance(&params, mc_iterations)?,
            };
            let report = analysis::run_suite(&inst, Suite::All, &[], opts)?;
            rows.push(TableRow {
                horizon,
                epsilon,
                here_and_now: report.here_and_now.unwrap_or(f64::NAN),
                evss_percent: report.evss_percent.unwrap_or(f64::NAN),
                evpi_percent: report.evpi_percent.unwrap_or(f64::NAN),
                flexibility_percent: report.flexibility_percent.unwrap_or(f64::NAN),
            });
        }
    }
    Ok(rows)
}

/// Fixed-width table with one row per `T` and one EVSS/EVPI column pair per `eps`.
pub fn format_table(rows: &[TableRow]) -> String {
    let mut epsilons: Vec<f64> = Vec::new();
    let mut horizons: Vec<usize> = Vec::new();
    for r in rows {
        if !epsilons.contains(&r.epsilon) {
            epsilons.push(r.epsilon);
        }
        if !horizons.contains(&r.horizon) {
            horizons.push(r.horizon);
        }
    }
    let mut s = format!("{:>4}", "T");
    for e in &epsilons {
        s += &format!(" | {:>12} {:>12} {:>12}", format!("EVSS% e={e}"), format!("EVPI% e={e}"), format!("flex% e={e}"));
    }
    s.push('\n');
    for h in &horizons {
        s += &format!("{h:>4}");
        for e in &epsilons {
            match rows.iter().find(|r| r.horizon == *h && r.epsilon == *e) {
                Some(r) => s += &format!(" | {:>12.4} {:>12.4} {:>12.4}", r.evss_percent, r.evpi_percent, r.flexibility_percent),
                None => s += &format!(" | {:>12} {:>12} {:>12}", "-", "-", "-"),
            }
        }
        s.push('\n');
    }
    s
}

fn cmd_table(a: &TableArgs) -> Result<Outcome> {
    let seed = a.seed.unwrap_or(0);
    let base = InstanceParams::new(a.scenarios, 2, a.c, 0.5, seed);
    let opts = AnalysisOptions { solver: a.solver.into(), ..AnalysisOptions::default() };
    let rows = experiment_table(&a.horizons, &a.epsilons, &base, a.states, a.mc_iterations, &opts)?;
    print!("{}", format_table(&rows));
    let mut out = Outcome::ok(config_json(a));
    out.seed = Some(seed);
    if let Some(p) = &a.out {
        csv_to_file(
            p,
            |buf| {
                let mut w = csv::Writer::from_writer(buf);
                for r in &rows {
                    w.serialize(r)?;
                }
                w.flush().map_err(|e| Error::io("table csv", e))?;
                Ok(())
            },
            &mut out.outputs,
        )?;
    }
    Ok(out)
}
