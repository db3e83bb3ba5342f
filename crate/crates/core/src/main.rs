//! Command-line entry point: runs, refinement studies, sweeps, the
//! property suite and checkpoint resumption.
//!
//! Every command ends with one `summary:` line of `key=value` pairs on
//! stdout; the exit code is 0 on success and nonzero otherwise.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use chemofluid::config::load_config;
use chemofluid::diagnostics::LedgerReport;
use chemofluid::driver::{self, RunSummary};
use chemofluid::stepper::validate_initial_step;
use chemofluid::studies::{self, Vary};
use chemofluid::verify::{self, Scale};
use chemofluid::Error;

#[derive(Parser)]
#[command(name = "chemofluid", version, about = "Chemotaxis-fluid solver with invariant ledgers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulation described by a config file.
    Run {
        config: PathBuf,
        /// Output directory (overrides output.directory).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Spatial and temporal refinement studies; prints observed orders.
    Mms { config: PathBuf },
    /// Run one copy of the config per value of m or k (concurrently).
    Sweep {
        config: PathBuf,
        /// `m=10,100,1000` or `k=0.1,0.05,0.025`.
        #[arg(long)]
        vary: Vary,
        /// Root directory of the member runs (default: output.directory).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Execute the full property suite.
    Check {
        /// Reduced problem sizes.
        #[arg(long)]
        quick: bool,
    },
    /// Continue a run from one of its checkpoints.
    Resume {
        checkpoint: PathBuf,
        /// New end time (default: params.t_end of the run).
        #[arg(long)]
        t_end: Option<f64>,
    },
}

fn error_summary(command: &str, e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    println!("summary: command={command} status=error kind={} message={:?}", e.kind(), e.to_string());
    ExitCode::from(2)
}

fn ledger_text(ledger: &LedgerReport) -> String {
    if ledger.all_passed() {
        "ok".into()
    } else {
        let mut names: Vec<&str> = ledger.violations.iter().map(|v| v.check.name()).collect();
        names.dedup();
        names.join(",")
    }
}

fn report_run(command: &str, s: &RunSummary) -> ExitCode {
    let last = s.records.last().expect("at least the step-0 record");
    for v in &s.ledger.violations {
        println!("ledger: {} violated at step {}: {:.6e} > {:.6e}", v.check.name(), v.step, v.value, v.limit);
    }
    println!(
        "summary: command={command} status=ok directory={} steps={} time={} mass_n={:.16e} min_z={:.16e} max_z={:.16e} energy_a={:.16e} max_n={:.16e} halved_steps={} ledger={}",
        s.directory.display(),
        s.final_state.step,
        s.final_state.time,
        last.mass_n,
        last.min_z,
        last.max_z,
        last.energy_a,
        s.max_n,
        s.halved_steps,
        ledger_text(&s.ledger)
    );
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, output } => {
            let cfg = match load_config(&config) {
                Ok(c) => c,
                Err(e) => return error_summary("run", &e),
            };
            if let Ok(st) = cfg.initial_state() {
                for w in validate_initial_step(&st, &cfg.params) {
                    eprintln!("warning: {w}");
                }
            }
            let dir = output.unwrap_or_else(|| cfg.output.resolved_directory());
            match driver::run_in(&cfg, &dir) {
                Ok(s) => report_run("run", &s),
                Err(e) => error_summary("run", &e),
            }
        }
        Command::Resume { checkpoint, t_end } => match driver::resume(&checkpoint, t_end) {
            Ok(s) => report_run("resume", &s),
            Err(e) => error_summary("resume", &e),
        },
        Command::Mms { config } => {
            let report = load_config(&config).and_then(|cfg| studies::mms(&cfg));
            match report {
                Ok(r) => {
                    print!("{}{}{}", r.laplacian, r.heat, r.temporal);
                    let fmt = |o: &[f64]| o.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>().join(",");
                    println!(
                        "summary: command=mms status=ok laplacian_orders={} heat_orders={} temporal_orders={}",
                        fmt(&r.laplacian.orders),
                        fmt(&r.heat.orders),
                        fmt(&r.temporal.orders)
                    );
                    ExitCode::SUCCESS
                }
                Err(e) => error_summary("mms", &e),
            }
        }
        Command::Sweep { config, vary, output } => {
            let cfg = match load_config(&config) {
                Ok(c) => c,
                Err(e) => return error_summary("sweep", &e),
            };
            let root = output.unwrap_or_else(|| cfg.output.resolved_directory());
            let report = match studies::sweep(&cfg, &vary, &root) {
                Ok(r) => r,
                Err(e) => return error_summary("sweep", &e),
            };
            let diffs = report.final_differences();
            let mut failed = Vec::new();
            for (entry, diff) in report.entries.iter().zip(&diffs) {
                match &entry.summary {
                    Ok(s) => {
                        let last = s.records.last().expect("records");
                        println!(
                            "{:<14} steps {:>6}  max_n {:.6e}  mass_n {:.16e}  energy_a {:.6e}  diff_to_last {:.6e}  ledger {}",
                            entry.label,
                            s.final_state.step,
                            s.max_n,
                            last.mass_n,
                            last.energy_a,
                            diff.unwrap_or(f64::NAN),
                            ledger_text(&s.ledger)
                        );
                    }
                    Err(e) => {
                        println!("{:<14} error: {e}", entry.label);
                        failed.push(entry.label.clone());
                    }
                }
            }
            if !failed.is_empty() {
                println!("summary: command=sweep status=fail failed={}", failed.join(","));
                return ExitCode::FAILURE;
            }
            let identical = match report.csvs_identical() {
                Ok(b) => b,
                Err(e) => return error_summary("sweep", &e),
            };
            println!("summary: command=sweep status=ok members={} identical_csv={identical} root={}", report.entries.len(), root.display());
            ExitCode::SUCCESS
        }
        Command::Check { quick } => {
            let outcomes = verify::run_suite(if quick { Scale::Quick } else { Scale::Full });
            for o in &outcomes {
                println!("{o}");
            }
            let failed: Vec<String> = outcomes.iter().filter(|o| !o.passed).map(|o| if o.id > 0 { o.id.to_string() } else { o.name.replace(' ', "_") }).collect();
            let status = if failed.is_empty() { "ok" } else { "fail" };
            println!("summary: command=check status={status} passed={} failed={} failed_ids={}", outcomes.len() - failed.len(), failed.len(), failed.join(","));
            if failed.is_empty() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
