use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use riccomp_cli::config::{parse_config, Scenario};
use riccomp_cli::presets;
use riccomp_cli::run::{self, Status};

#[derive(Parser)]
#[command(name = "riccomp", version, about = "Run Riccati comparison scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a configuration file or a shipped scenario by name.
    Run {
        config: String,
        /// Output directory; defaults to $RICCOMP_OUT, then ./riccomp-out.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads; each scenario runs on one worker.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Print model ids, profile presets, suites and shipped scenarios.
    List,
    /// Parse and validate a configuration without running it.
    Check { config: String },
}

/// Reads a file, falling back to a shipped configuration of that name.
fn load(config: &str) -> Result<Vec<Scenario>, ExitCode> {
    let text = match std::fs::read_to_string(config) {
        Ok(t) => t,
        Err(e) => match presets::shipped(config) {
            Some(t) => t.to_string(),
            None if Path::new(config).exists() => {
                eprintln!("{config}: {e}");
                return Err(ExitCode::from(2));
            }
            None => {
                eprintln!("{config}: no such file or shipped scenario (see `riccomp list`)");
                return Err(ExitCode::from(2));
            }
        },
    };
    parse_config(&text).map_err(|diags| {
        for d in diags {
            eprintln!("{config}: {d}");
        }
        ExitCode::from(2)
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::List => {
            print!("{}", presets::catalog());
            ExitCode::SUCCESS
        }
        Command::Check { config } => match load(&config) {
            Ok(s) => {
                println!("{config}: {} scenario(s) ok", s.len());
                ExitCode::SUCCESS
            }
            Err(code) => code,
        },
        Command::Run { config, out, jobs } => {
            let scenarios = match load(&config) {
                Ok(s) => s,
                Err(code) => return code,
            };
            let out = out.unwrap_or_else(run::default_out_dir);
            let reports = match run::run_all(&scenarios, &out, jobs) {
                Ok(r) => r,
                Err(e) => {
                    eprintln!("{}: {e}", out.display());
                    return ExitCode::from(1);
                }
            };
            for r in &reports {
                match (&r.status, &r.cause) {
                    (Status::Pass, _) => println!("[pass] {}", r.id),
                    (s, Some(c)) => println!("[{s}] {}: {c}", r.id),
                    (s, None) => println!("[{s}] {}", r.id),
                }
            }
            let failed = reports.iter().filter(|r| r.status == Status::Fail).count();
            println!("{} scenario(s), {failed} failed; reports in {}", reports.len(), out.display());
            ExitCode::from(run::exit_code(&reports) as u8)
        }
    }
}
