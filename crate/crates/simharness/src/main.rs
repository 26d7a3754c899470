//! `simharness`: load and scenario runs against an in-process server.
//!
//! Exit codes: 0 when everything passed, 1 when something failed, 2 for
//! invalid arguments or an unusable scenario directory.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use edubot_simharness::load::{run_load, LoadError, LoadProfile};
use edubot_simharness::suite::run_suite;

#[derive(Parser)]
#[command(name = "simharness", about = "Load and scenario runner for the classroom bot service")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Concurrent instructor lessons; passes when p95 latency is within the
    /// threshold and no request or result check failed.
    Load {
        #[arg(long, default_value_t = 12)]
        instructors: usize,
        /// Students in each instructor's group.
        #[arg(long, default_value_t = 50)]
        students: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 300.0)]
        threshold_ms: f64,
        /// Time budget for the whole run.
        #[arg(long, default_value_t = 120)]
        duration_s: u64,
        /// Where to write the JSON report.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Replays every `*.jsonl` scenario in a directory and compares the
    /// final state with its `*.expected.json` golden.
    Suite {
        dir: PathBuf,
        /// Rewrite the goldens from a bare-engine replay first.
        #[arg(long)]
        bless: bool,
    },
}

const FAIL: u8 = 1;
const CONFIG_ERROR: u8 = 2;

#[tokio::main]
async fn main() -> ExitCode {
    match Cli::parse().command {
        Cmd::Load {
            instructors,
            students,
            seed,
            threshold_ms,
            duration_s,
            report,
        } => {
            let profile = LoadProfile {
                instructors,
                students_per_group: students,
                seed,
                threshold_ms,
                duration_s,
                report_path: report,
            };
            match run_load(&profile).await {
                Ok(r) => {
                    print!("{}", r.render());
                    if r.passed {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(FAIL)
                    }
                }
                Err(e @ LoadError::Profile(_)) => {
                    eprintln!("simharness: {e}");
                    ExitCode::from(CONFIG_ERROR)
                }
                Err(e) => {
                    eprintln!("simharness: {e}");
                    ExitCode::from(FAIL)
                }
            }
        }
        Cmd::Suite { dir, bless } => match run_suite(&dir, bless).await {
            Ok(report) => {
                print!("{}", report.render());
                if report.passed() {
                    ExitCode::SUCCESS
                } else {
                    ExitCode::from(FAIL)
                }
            }
            Err(e) => {
                eprintln!("simharness: {e}");
                ExitCode::from(CONFIG_ERROR)
            }
        },
    }
}
