use std::path::PathBuf;
use std::process::ExitCode;

use aosim_cli::{execute, exit, parse_config, Overrides};
use aosim_core::par::{configure_workers, execution_for, Execution};
use clap::Parser;

/// Simulation and sampling driver for two-type hard-sphere / particle mixtures.
#[derive(Parser, Debug)]
#[command(name = "aosim", version)]
struct Args {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Base seed; overrides the file.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 1 runs sequentially.
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory; overrides the file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Reject unknown configuration keys.
    #[arg(long)]
    strict: bool,
}

fn main() -> ExitCode {
    let args = Args::parse();
    ExitCode::from(run(&args) as u8)
}

fn run(args: &Args) -> i32 {
    let text = match std::fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("cannot read {}: {e}", args.config.display());
            return exit::VALIDATION;
        }
    };
    let overrides = Overrides {
        seed: args.seed,
        output: args.out.clone(),
    };
    let parsed = match parse_config(&text, args.strict, &overrides) {
        Ok(p) => p,
        Err(e) => {
            eprint!("{e}");
            return exit::VALIDATION;
        }
    };
    for w in &parsed.warnings {
        eprintln!("warning: {w}");
    }
    let exec = match args.workers {
        None => Execution::default(),
        Some(0) => {
            eprintln!("--workers must be at least 1");
            return exit::VALIDATION;
        }
        Some(n) => {
            if n > 1 && !configure_workers(n) {
                eprintln!("warning: worker pool unavailable, running with the default pool or sequentially");
            }
            execution_for(n)
        }
    };
    let cfg = &parsed.config;
    println!("config: {} with seed {}, config hash {}", cfg.command.name(), cfg.seed, aosim_cli::config_hash(cfg));
    let mut stdout = std::io::stdout();
    match execute(cfg, exec, &mut stdout) {
        Ok(c) if c.passed => exit::OK,
        Ok(_) => {
            eprintln!("verification failed; see {}/report.txt", cfg.output);
            exit::VERIFICATION
        }
        Err(e) => {
            eprintln!("runtime error: {e}");
            exit::RUNTIME
        }
    }
}
