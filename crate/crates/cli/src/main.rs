use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use cyphy::acopf::AcopfError;
use cyphy::case::{parse_matpower_case, parse_scenario};
use cyphy::cyber::{build_topology_milp, solve_milp, CyberError};
use cyphy::resilience::{check_inputs, run_algorithm1, ResilienceError};
use cyphy::{NlpOptions, PowerCase, Scenario};

mod output;

#[derive(Parser)]
#[command(name = "cyphy", version, about = "Cyber-physical resilience studies on MATPOWER cases")]
struct Cli {
    /// More log output on stderr (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Inputs {
    /// MATPOWER case file.
    #[arg(long)]
    case: PathBuf,
    /// Scenario file (TOML).
    #[arg(long)]
    scenario: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Solve topology and dispatch and write result tables.
    Run {
        #[command(flatten)]
        inputs: Inputs,
        /// Output directory, created if missing.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::Both)]
        mode: Mode,
    },
    /// Parse and check the inputs without solving.
    Validate {
        #[command(flatten)]
        inputs: Inputs,
    },
    /// Solve only the initial cyber topology.
    Topology {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    /// Ignore the attack section.
    Baseline,
    /// Require an attack and report the mitigated run.
    Attack,
    /// Mitigated run when the scenario has an attack, baseline otherwise.
    Both,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Baseline => "baseline",
            Mode::Attack => "attack",
            Mode::Both => "both",
        }
    }
}

/// Input problems exit with 1, solver failures with 2.
enum Failure {
    Input(anyhow::Error),
    Solver(anyhow::Error),
}

impl From<ResilienceError> for Failure {
    fn from(e: ResilienceError) -> Self {
        let solver = match &e {
            ResilienceError::Cyber(CyberError::Infeasible)
            | ResilienceError::Dispatch(AcopfError::Solver(_))
            | ResilienceError::Unrecoverable(_)
            | ResilienceError::NotConverged { .. } => true,
            ResilienceError::Scenario(_)
            | ResilienceError::Cyber(_)
            | ResilienceError::Dispatch(_)
            | ResilienceError::NoCandidates(_) => false,
        };
        if solver {
            Failure::Solver(e.into())
        } else {
            Failure::Input(e.into())
        }
    }
}

fn input<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Input(e.into())
}

fn load(inputs: &Inputs) -> Result<(PowerCase, Scenario), Failure> {
    let text = fs::read_to_string(&inputs.case)
        .with_context(|| format!("cannot read case file {}", inputs.case.display()))
        .map_err(input)?;
    let case = parse_matpower_case(&text)
        .with_context(|| format!("invalid case file {}", inputs.case.display()))
        .map_err(input)?;
    let text = fs::read_to_string(&inputs.scenario)
        .with_context(|| format!("cannot read scenario file {}", inputs.scenario.display()))
        .map_err(input)?;
    let scenario = parse_scenario(&text)
        .with_context(|| format!("invalid scenario file {}", inputs.scenario.display()))
        .map_err(input)?;
    Ok((case, scenario))
}

fn create_dir(out: &Path) -> Result<(), Failure> {
    fs::create_dir_all(out)
        .with_context(|| format!("cannot create output directory {}", out.display()))
        .map_err(input)
}

fn run(inputs: &Inputs, out: &Path, mode: Mode) -> Result<(), Failure> {
    let (case, scenario) = load(inputs)?;
    let scenario = match mode {
        Mode::Baseline => scenario.without_attack(),
        Mode::Attack if scenario.attack.is_none() => {
            return Err(input(anyhow!(
                "mode `attack` needs an [attack] section in {}",
                inputs.scenario.display()
            )))
        }
        _ => scenario,
    };
    let problem = check_inputs(&case, &scenario)?;
    let report = run_algorithm1(&case, &scenario, &NlpOptions::default())?;
    create_dir(out)?;
    output::write_all(out, mode, &case, &scenario, &problem.graph, &report).map_err(input)?;
    info!("wrote results to {}", out.display());
    println!(
        "total={} f_cyber={} f_power={} f_res={}",
        report.costs.total, report.costs.f_cyber, report.costs.f_power, report.costs.f_res
    );
    if let Some(m) = report.chosen_candidate {
        println!("replacement node {m}");
    }
    Ok(())
}

fn validate(inputs: &Inputs) -> Result<(), Failure> {
    let (case, scenario) = load(inputs)?;
    check_inputs(&case, &scenario).map_err(input)?;
    println!(
        "buses={} lines={} gens={} ess={}",
        case.buses.len(),
        case.lines.len(),
        case.generators.len(),
        case.ess_units.len()
    );
    let k: Vec<String> = scenario.critical_nodes.iter().map(u32::to_string).collect();
    println!(
        "periods={} critical={} root={}",
        scenario.horizon,
        k.join(","),
        scenario.root_node
    );
    match &scenario.attack {
        Some(a) => println!(
            "attack period={} cyber_node={} generator_bus={}",
            a.attack_period, a.compromised_cyber_node, a.disabled_generator_bus
        ),
        None => println!("attack none"),
    }
    Ok(())
}

fn topology(inputs: &Inputs, out: &Path) -> Result<(), Failure> {
    let (case, scenario) = load(inputs)?;
    let problem = check_inputs(&case, &scenario).map_err(input)?;
    let solution = solve_milp(&build_topology_milp(&problem)).map_err(|e| match e {
        CyberError::Infeasible => Failure::Solver(e.into()),
        other => input(other),
    })?;
    create_dir(out)?;
    output::write_topology(&out.join("topology_pre.csv"), &problem.graph, &solution).map_err(input)?;
    println!("f_cyber={}", solution.total_cost);
    let nodes: Vec<String> = solution.active_nodes.iter().map(u32::to_string).collect();
    println!("nodes={}", nodes.join(","));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();

    let result = match &cli.command {
        Command::Run { inputs, out, mode } => run(inputs, out, *mode),
        Command::Validate { inputs } => validate(inputs),
        Command::Topology { inputs, out } => topology(inputs, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Solver(e)) => {
            eprintln!("solver failure: {e:#}");
            ExitCode::from(2)
        }
    }
}
