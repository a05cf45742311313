use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use glmm_design_cli::commands;
use glmm_design_cli::config::RunConfig;
use glmm_design_cli::CliResult;

#[derive(Parser)]
#[command(name = "glmm-design", version, about = "Optimal block designs for GLMMs with a random intercept")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Search for an optimal design and write it as JSON.
    Find { config: PathBuf },
    /// Evaluate a stored design under one or more methods.
    Eval { design: PathBuf, config: PathBuf },
    /// Efficiency table of approximate methods against a reference method.
    Compare { config: PathBuf },
    /// Fit and save an information surrogate.
    TrainSurrogate { config: PathBuf },
    /// Monte Carlo D-criterion profile for a one-parameter Poisson block family.
    Profile { config: PathBuf },
}

fn run(cmd: Command) -> CliResult<(String, bool)> {
    let show = |p: &PathBuf| RunConfig::load(p).map(|c| c.output.summary);
    Ok(match cmd {
        Command::Find { config } => (commands::cmd_find(&config)?.summary, show(&config)?),
        Command::Eval { design, config } => (commands::cmd_eval(&design, &config)?.summary, show(&config)?),
        Command::Compare { config } => (commands::cmd_compare(&config)?.summary, show(&config)?),
        Command::TrainSurrogate { config } => (commands::cmd_train_surrogate(&config)?.summary, show(&config)?),
        Command::Profile { config } => (commands::cmd_profile(&config)?.summary, show(&config)?),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok((summary, show)) => {
            if show {
                print!("{summary}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
