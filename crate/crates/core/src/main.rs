use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use oocsim::cli;
use oocsim::controller::ControlMode;
use oocsim::scenario::{builtin_names, load_scenario, BuiltScenario, Overrides, ScenarioFile};
use oocsim::NumericPolicy;

#[derive(Parser)]
#[command(name = "oocsim", version, about = "Distributed optimal output consensus simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and write trajectory.csv plus reports
    Run(RunArgs),
    /// Laplacian, left null vector and lambda2 of the scenario graph
    GraphInfo(Common),
    /// Regulation-equation triplets and their residuals
    SolveTriplets(Common),
    /// Sufficient gain conditions for the current gains and presets
    CheckGains(Common),
    /// Centralized minimizer of the summed costs
    Oracle(Common),
    /// Run every gain preset and tabulate settling times
    Sweep(Common),
    /// Print the effective scenario as TOML
    Emit(Common),
}

#[derive(Args, Clone)]
struct Common {
    /// Builtin name (example1, example2) or path to a TOML file
    #[arg(value_name = "SCENARIO")]
    positional: Option<String>,
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long)]
    step: Option<f64>,
    #[arg(long)]
    horizon: Option<f64>,
    /// state | output
    #[arg(long)]
    controller: Option<ControlMode>,
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    tolerance: Option<f64>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

impl Common {
    fn file(&self) -> Result<ScenarioFile> {
        let name = match (&self.scenario, &self.positional) {
            (Some(s), None) | (None, Some(s)) => s,
            (Some(_), Some(_)) => bail!("give the scenario either positionally or with --scenario, not both"),
            (None, None) => bail!("no scenario given (builtins: {})", builtin_names().join(", ")),
        };
        let mut file = load_scenario(name).with_context(|| format!("loading scenario {name}"))?;
        file.apply(&self.overrides())?;
        Ok(file)
    }

    fn overrides(&self) -> Overrides {
        Overrides {
            step: self.step,
            horizon: self.horizon,
            mode: self.controller,
            preset: self.preset.clone(),
            seed: self.seed,
            tolerance: self.tolerance,
        }
    }

    fn built(&self, policy: &NumericPolicy) -> Result<BuiltScenario> {
        Ok(self.file()?.build(policy)?)
    }
}

fn dispatch(command: Command) -> Result<ExitCode> {
    let policy = NumericPolicy::default();
    match command {
        Command::Run(args) => {
            let built = args.common.built(&policy)?;
            let report = cli::run(&built, &args.out, &policy)?;
            print!("{}", report.to_text());
            return Ok(if report.converged { ExitCode::SUCCESS } else { ExitCode::from(2) });
        }
        Command::GraphInfo(c) => print!("{}", cli::graph_info(&c.file()?, &policy)?),
        Command::SolveTriplets(c) => print!("{}", cli::solve_triplets(&c.built(&policy)?, &policy)),
        Command::CheckGains(c) => print!("{}", cli::check_gains(&c.built(&policy)?, &policy)?),
        Command::Oracle(c) => print!("{}", cli::oracle(&c.built(&policy)?)?),
        Command::Sweep(c) => {
            let mut file = c.file()?;
            if c.preset.is_some() {
                bail!("--preset does not apply to sweep");
            }
            file.apply(&Overrides::default())?;
            let rows = cli::sweep(&file, &c.overrides(), &policy)?;
            print!("{}", cli::sweep_table(&rows));
            if rows.iter().any(|r| !matches!(r.result, Ok((_, true)))) {
                return Ok(ExitCode::from(2));
            }
        }
        Command::Emit(c) => print!("{}", c.file()?.to_toml()),
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
