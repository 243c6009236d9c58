use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dtnlab_cli::suite::Status;
use dtnlab_cli::{default_suite, exit_code_for, run, verify_all, CliError, ExperimentConfig, SuiteConfig};

#[derive(Parser)]
#[command(name = "dtnlab", version, about = "Quasilinear DtN laboratory: experiments and verification suite")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment from a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides the config's `output`).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads; all cores by default.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Run the acceptance suite (the built-in one unless `--suite` is given).
    VerifyAll {
        #[arg(long)]
        suite: Option<PathBuf>,
        #[arg(long, default_value = "out/verify-all")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        threads: Option<usize>,
    },
}

fn main() -> ExitCode {
    let code = match Cli::parse().command {
        Command::Run { config, out, seed, threads } => {
            let result = ExperimentConfig::from_file(&config).and_then(|mut cfg| {
                if let Some(out) = out {
                    cfg.output = Some(out);
                }
                if let Some(seed) = seed {
                    cfg.seed = seed;
                }
                run(&cfg, threads)
            });
            match result {
                Ok(run) => {
                    for a in &run.summary.assertions {
                        println!("{}", a.line());
                    }
                    println!("summary: {}", run.summary_path.display());
                    run.exit_code()
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    exit_code_for(&e)
                }
            }
        }
        Command::VerifyAll { suite, out, seed, threads } => {
            let loaded = match suite {
                Some(path) => std::fs::read_to_string(&path)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))
                    .and_then(|text| SuiteConfig::from_json(&text)),
                None => Ok(default_suite()),
            };
            match loaded.and_then(|mut s| {
                if let Some(seed) = seed {
                    s.seed = seed;
                }
                verify_all(&s, &out, threads)
            }) {
                Ok(report) => {
                    for e in &report.entries {
                        let verdict = match e.status {
                            Status::Pass => "pass",
                            Status::Fail => "FAIL",
                            Status::Error => "ERROR",
                        };
                        println!("[{:>2}] {:<28} {verdict} ({:.1} s)", e.criterion, e.name, e.seconds);
                        for a in e.assertions.iter().filter(|a| !a.passed) {
                            println!("       {}", a.line());
                        }
                        if let Some(err) = &e.error {
                            println!("       {err}");
                        }
                    }
                    println!("report: {}", out.join("verify-all.json").display());
                    report.exit_code()
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    exit_code_for(&e)
                }
            }
        }
    };
    ExitCode::from(code as u8)
}
