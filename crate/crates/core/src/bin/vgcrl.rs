use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use vgcrl::config::parse_config;
use vgcrl::runner::{self, EvalPolicy, TrainOptions};

#[derive(Parser)]
#[command(name = "vgcrl", version, about = "Variational goal-conditioned RL experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train from an experiment file, one run per configured seed.
    Train {
        config: PathBuf,
        /// Run only this seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overwrite existing output directories.
        #[arg(long)]
        force: bool,
    },
    /// Goal reaching from target states with a saved checkpoint; prints JSON.
    Eval {
        checkpoint: PathBuf,
        /// One comma-separated observation per line.
        #[arg(long)]
        targets: PathBuf,
        /// Observation indices to measure distance over, e.g. `0,1`.
        #[arg(long, value_delimiter = ',')]
        mask: Option<Vec<usize>>,
        #[arg(long, value_enum, default_value_t = PolicyArg::Agent)]
        policy: PolicyArg,
    },
    /// Shipped experiment presets.
    Presets {
        #[command(subcommand)]
        action: PresetAction,
    },
}

#[derive(Subcommand)]
enum PresetAction {
    List,
    /// Print a preset's TOML.
    Show { name: String },
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Agent,
    HoldStill,
}

fn run(cli: Cli) -> vgcrl::Result<()> {
    match cli.command {
        Command::Train { config, seed, force } => {
            let resolved = parse_config(&config)?;
            print!("{}", resolved.report());
            let options = TrainOptions {
                seed,
                force,
                output_root: None,
            };
            let result = runner::train(&resolved, &options, &mut std::io::stderr())?;
            println!("outputs written to {}", result.directory.display());
        }
        Command::Eval {
            checkpoint,
            targets,
            mask,
            policy,
        } => {
            let policy = match policy {
                PolicyArg::Agent => EvalPolicy::Agent,
                PolicyArg::HoldStill => EvalPolicy::HoldStill,
            };
            let report = runner::eval(&checkpoint, &targets, mask, policy)?;
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
        }
        Command::Presets { action } => match action {
            PresetAction::List => print!("{}", runner::presets_list()),
            PresetAction::Show { name } => match vgcrl::presets::preset_text(&name) {
                Some(text) => print!("{text}"),
                None => return Err(vgcrl::Error::InvalidArgument(format!("unknown preset {name:?}"))),
            },
        },
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
