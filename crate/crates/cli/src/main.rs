use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use micromag_cli::{load_config, run, Command, Outcome, EXIT_FAILURE, EXIT_OK};

#[derive(Parser)]
#[command(name = "micromag", version, about = "Periodic LLG dynamics of small soft ferromagnets")]
struct Cli {
    #[command(subcommand)]
    command: Sub,

    /// Run configuration (sectioned `key = value` text).
    #[arg(short, long, global = true, default_value = "micromag.conf")]
    config: PathBuf,

    /// Worker threads; overrides the config and MICROMAG_THREADS.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Seed for randomized inputs; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory; overrides the config.
    #[arg(short, long, global = true)]
    output: Option<PathBuf>,
}

#[derive(Subcommand, Clone, Copy)]
enum Sub {
    /// Demagnetizing tensor and shape condition.
    DemagTensor,
    /// Energy minimizer for the configured eta.
    Minimize,
    /// Minimizers over `run.etas` and their power-law fits.
    Scaling,
    /// Energy contributions of the initial field.
    Energy,
    /// Integrate the LLG flow over `run.t_end`.
    Evolve,
    /// Spectrum of the linearization at the initial field.
    Spectrum,
    /// Periodic orbits along `run.lambdas`.
    Periodic,
    /// Invariant battery.
    Check,
}

impl From<Sub> for Command {
    fn from(s: Sub) -> Self {
        match s {
            Sub::DemagTensor => Command::DemagTensor,
            Sub::Minimize => Command::Minimize,
            Sub::Scaling => Command::Scaling,
            Sub::Energy => Command::Energy,
            Sub::Evolve => Command::Evolve,
            Sub::Spectrum => Command::Spectrum,
            Sub::Periodic => Command::Periodic,
            Sub::Check => Command::Check,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut cfg = match load_config(&cli.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("micromag: {}: {e}", cli.config.display());
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("micromag: --threads must be positive");
            return ExitCode::from(micromag_cli::EXIT_CONFIG as u8);
        }
        cfg.threads = n;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = cli.output {
        cfg.output = o;
    }
    match run(cli.command.into(), &cfg) {
        Ok(rep) => {
            for (k, v) in rep.manifest.results() {
                println!("{k} = {v}");
            }
            println!("manifest = {}", rep.manifest_path.display());
            match rep.outcome {
                Outcome::Success => ExitCode::from(EXIT_OK as u8),
                Outcome::Failure(msg) => {
                    eprintln!("micromag: {msg}");
                    ExitCode::from(EXIT_FAILURE as u8)
                }
            }
        }
        Err(e) => {
            eprintln!("micromag: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
