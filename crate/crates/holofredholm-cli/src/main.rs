use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use holofredholm::models::ModelRegistry;
use holofredholm_cli::config::parse_levels;
use holofredholm_cli::{list_models, run_file, Overrides};

#[derive(Parser)]
#[command(name = "holofredholm", version, about = "Galerkin eigenvalue experiments for holomorphic Fredholm operator functions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        config: PathBuf,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Comma-separated level sizes.
        #[arg(long)]
        levels: Option<String>,
    },
    /// Print the built-in models and their parameters.
    ListModels,
}

fn init_threads() -> Result<(), String> {
    let Ok(v) = std::env::var("HOLOFREDHOLM_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("HOLOFREDHOLM_THREADS must be a positive integer, got '{v}'"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = init_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    let registry = ModelRegistry::with_defaults();
    match cli.command {
        Command::ListModels => {
            print!("{}", list_models(&registry));
            ExitCode::SUCCESS
        }
        Command::Run {
            config,
            output_dir,
            seed,
            levels,
        } => {
            let levels = match levels.as_deref().map(parse_levels).transpose() {
                Ok(l) => l,
                Err(e) => {
                    eprintln!("error: --levels: {e}");
                    return ExitCode::from(2);
                }
            };
            let overrides = Overrides {
                output_dir,
                seed,
                levels,
            };
            match run_file(&config, &overrides, &registry) {
                Ok(code) => ExitCode::from(code as u8),
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(e.exit_code() as u8)
                }
            }
        }
    }
}
