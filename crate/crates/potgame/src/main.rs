use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use potgame::commands::{self, Options};
use potgame::exec::{default_workers, WORKERS_ENV};
use potgame_core::simulation::Setting;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SettingArg {
    Mle,
    Bne,
    MleUpdate,
    BneUpdate,
}

impl From<SettingArg> for Setting {
    fn from(s: SettingArg) -> Self {
        match s {
            SettingArg::Mle => Setting::Mle,
            SettingArg::Bne => Setting::Bne,
            SettingArg::MleUpdate => Setting::MleUpdate,
            SettingArg::BneUpdate => Setting::BneUpdate,
        }
    }
}

/// Bayesian potential games for multi-vehicle planning.
#[derive(Debug, Parser)]
#[command(name = "potgame", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Scenario config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Worker threads for the distributed solver.
    #[arg(long, global = true, env = WORKERS_ENV)]
    workers: Option<usize>,

    /// Overrides the scenario and Monte Carlo seeds.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Closed-loop settings to run (repeatable).
    #[arg(long = "setting", global = true, value_enum)]
    settings: Vec<SettingArg>,

    /// ADMM penalty sigma.
    #[arg(long, global = true)]
    sigma: Option<f64>,

    /// ADMM penalty rho.
    #[arg(long, global = true)]
    rho: Option<f64>,

    /// Also print per-iteration diagnostics as JSON lines on stdout.
    #[arg(long, global = true)]
    json_diagnostics: bool,

    /// Log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the open-loop Bayesian game.
    Solve,
    /// Closed-loop Monte Carlo study.
    Simulate,
    /// Solve a contingency game.
    Contingency,
    /// Time centralized and distributed solves over type counts.
    Bench,
    /// Run the randomized correctness suites.
    Verify,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let opts = Options {
        config: cli.config,
        out: cli.out,
        workers: cli.workers.unwrap_or_else(default_workers),
        seed: cli.seed,
        settings: cli.settings.into_iter().map(Setting::from).collect(),
        sigma: cli.sigma,
        rho: cli.rho,
        json_diagnostics: cli.json_diagnostics,
    };
    let result = match cli.command {
        Command::Solve => commands::solve(&opts),
        Command::Simulate => commands::simulate(&opts),
        Command::Contingency => commands::contingency(&opts),
        Command::Bench => commands::bench(&opts),
        Command::Verify => commands::verify(&opts),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
