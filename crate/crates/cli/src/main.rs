//! `ergodic`: run the decentralized ergodic planner on a scenario or sweep
//! over team sizes and seeds.

mod artifacts;
mod overrides;
mod sweep;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use ergodic_core::{run_scenario, GraphSpec, Scenario};

use overrides::{load_scenario, parse_graph, parse_range, Overrides};

#[derive(Parser)]
#[command(name = "ergodic", version, about = "Decentralized multi-agent ergodic trajectory planning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Plan one scenario and write its artifacts.
    Run(RunArgs),
    /// Plan every (team size, seed) combination and write one CSV row each.
    Sweep(SweepArgs),
    /// Print a builtin scenario as TOML.
    Scenario { name: String },
}

#[derive(Args)]
struct Common {
    /// Builtin scenario name or path to a TOML file.
    #[arg(long, default_value = "volcano")]
    scenario: String,
    #[arg(long)]
    epsilon_opt: Option<f64>,
    /// Inter-agent penalty r.
    #[arg(long)]
    r_penalty: Option<f64>,
    #[arg(long)]
    i_max: Option<usize>,
    /// `complete`, an edge list such as `0-1,1-2`, or `random:n,p,seed`.
    #[arg(long, value_parser = parse_graph)]
    graph: Option<GraphSpec>,
    /// Worker threads; defaults to the available cores.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    agents: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// Inclusive team-size range such as `1..5`.
    #[arg(long, default_value = "1..5")]
    agents: String,
    /// First seed of each team size.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of consecutive seeds per team size.
    #[arg(long, default_value_t = 10)]
    seeds: u64,
    /// Output CSV file.
    #[arg(long)]
    out: PathBuf,
}

enum Failure {
    Config(anyhow::Error),
    Solver(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Config(e)
    }
}

fn core_failure(e: ergodic_core::Error) -> Failure {
    if e.is_config() {
        Failure::Config(e.into())
    } else {
        Failure::Solver(e.into())
    }
}

fn prepare(common: &Common, overrides: Overrides) -> Result<Scenario, Failure> {
    if let Some(jobs) = common.jobs {
        rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global().context("configuring worker threads")?;
    }
    let mut s = load_scenario(&common.scenario)?;
    Overrides {
        epsilon_opt: common.epsilon_opt,
        r_penalty: common.r_penalty,
        i_max: common.i_max,
        graph: common.graph.clone(),
        ..overrides
    }
    .apply(&mut s);
    Ok(s)
}

fn run(args: RunArgs) -> Result<(), Failure> {
    let scenario = prepare(&args.common, Overrides { agents: args.agents, seed: args.seed, ..Default::default() })?;
    let outcome = run_scenario(&scenario).map_err(core_failure)?;
    artifacts::write_run(&args.out, &scenario, &outcome)?;
    let r = &outcome.record;
    println!(
        "{} N={} seed={} rounds={} E_r={:.3}% t_CTT={}",
        r.scenario,
        r.agents,
        r.seed,
        r.rounds,
        r.ergodic_reduction,
        r.t_ctt.map(|t| format!("{t:.3} s")).unwrap_or_else(|| "not reached".into())
    );
    match outcome.error {
        Some(e) => Err(Failure::Solver(anyhow!(e).context("planner stopped early; partial artifacts written"))),
        None => Ok(()),
    }
}

fn sweep(args: SweepArgs) -> Result<(), Failure> {
    let scenario = prepare(&args.common, Overrides::default())?;
    let agents = parse_range(&args.agents)?;
    let seeds: Vec<u64> = (args.seed..args.seed + args.seeds).collect();
    let rows = sweep::sweep(&scenario, &agents, &seeds);
    sweep::write_rows(&args.out, &rows)?;
    let failed = rows.iter().filter(|r| r.failure.is_some()).count();
    println!("{} runs, {failed} failed", rows.len());
    if failed > 0 {
        return Err(Failure::Solver(anyhow!("{failed} of {} runs failed; see the failure column", rows.len())));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Bad flags are configuration errors; help and version are not errors at all.
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Sweep(args) => sweep(args),
        Command::Scenario { name } => Scenario::builtin(&name)
            .and_then(|s| s.to_toml_string())
            .map(|text| print!("{text}"))
            .map_err(core_failure),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Solver(e)) => {
            eprintln!("solver error: {e:#}");
            ExitCode::from(2)
        }
    }
}
