//! Time loop with persistence: diagnostics CSV, snapshots, checkpoints and
//! resumption.
//!
//! A run directory holds `config.txt` (the fully expanded config),
//! `diagnostics.csv`, `snapshot_<step>.vtk` and `checkpoint_<step>.chfl`.
//! Every checkpoint has a `.sums` sidecar with the running ledger sums,
//! which are not part of the state.

use std::fs;
use std::path::{Path, PathBuf};

use crate::config::{load_config, OutputFormat, RunConfig};
use crate::diagnostics::{ledger_check, DiagnosticsRecord, LedgerLimits, LedgerReport};
use crate::error::{Error, Result};
use crate::io::{read_checkpoint, read_csv, write_checkpoint, write_vtk, CheckpointMeta, CsvWriter};
use crate::stepper::{Simulation, State};

pub const CONFIG_FILE: &str = "config.txt";
pub const CSV_FILE: &str = "diagnostics.csv";

/// Outcome of a completed run.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub directory: PathBuf,
    /// All records of the run from step 0, including steps not written to
    /// the CSV (for a resumed run, the CSV rows before the checkpoint).
    pub records: Vec<DiagnosticsRecord>,
    pub ledger: LedgerReport,
    pub final_state: State,
    /// Number of steps that had to be split into two half steps.
    pub halved_steps: u64,
    /// Largest cell density seen over the steps taken by this process
    /// (for a resumed run: from the checkpoint on).
    pub max_n: f64,
}

pub fn checkpoint_path(dir: &Path, step: u64) -> PathBuf {
    dir.join(format!("checkpoint_{step:06}.chfl"))
}

pub fn snapshot_path(dir: &Path, step: u64) -> PathBuf {
    dir.join(format!("snapshot_{step:06}.vtk"))
}

fn sums_path(checkpoint: &Path) -> PathBuf {
    checkpoint.with_extension("sums")
}

fn meta(cfg: &RunConfig) -> CheckpointMeta {
    let t = &cfg.params.trunc;
    CheckpointMeta { s: t.s(), alpha: t.alpha(), m: t.m(), k: cfg.params.k }
}

fn save_checkpoint(dir: &Path, sim: &Simulation, cfg: &RunConfig) -> Result<()> {
    let path = checkpoint_path(dir, sim.state().step);
    write_checkpoint(&path, sim.state(), &meta(cfg))?;
    let (cum, grad) = sim.cumulative();
    let sums = sums_path(&path);
    fs::write(&sums, format!("{:.16e}\n{:.16e}\n", cum, grad)).map_err(|e| Error::io(&sums, e))
}

fn read_sums(checkpoint: &Path) -> Result<(f64, f64)> {
    let path = sums_path(checkpoint);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let vals: Vec<f64> = text.split_whitespace().map(str::parse).collect::<std::result::Result<_, _>>().map_err(|_| Error::Checkpoint(format!("{}: bad number", path.display())))?;
    match vals[..] {
        [cum, grad] => Ok((cum, grad)),
        _ => Err(Error::Checkpoint(format!("{}: expected two values", path.display()))),
    }
}

fn write_config(dir: &Path, cfg: &RunConfig) -> Result<()> {
    let path = dir.join(CONFIG_FILE);
    fs::write(&path, cfg.to_string()).map_err(|e| Error::io(&path, e))
}

/// Steps `sim` to the configured end time, writing outputs as configured.
fn drive(
    sim: &mut Simulation,
    cfg: &RunConfig,
    dir: &Path,
    csv: &mut Option<CsvWriter>,
    records: &mut Vec<DiagnosticsRecord>,
    max_n: &mut f64,
) -> Result<u64> {
    let out = &cfg.output;
    let total = cfg.params.num_steps();
    let mut halved = 0;
    while sim.state().step < total {
        let result = sim.step();
        let (record, report) = match result {
            Ok(r) => r,
            Err(e) => {
                if let Some(w) = csv.as_mut() {
                    w.flush()?;
                }
                return Err(e);
            }
        };
        halved += report.halved as u64;
        *max_n = max_n.max(sim.state().n.max());
        let step = record.step;
        let last = step == total;
        if let Some(w) = csv.as_mut() {
            if step % out.csv_every == 0 || last {
                w.write_row(&record)?;
            }
        }
        records.push(record);
        if out.has(OutputFormat::Vtk) && ((out.snapshot_every > 0 && step % out.snapshot_every == 0) || last) {
            write_vtk(&snapshot_path(dir, step), sim.state(), cfg.params.trunc.alpha())?;
        }
        if out.has(OutputFormat::Checkpoint) && ((out.checkpoint_every > 0 && step % out.checkpoint_every == 0) || last) {
            save_checkpoint(dir, sim, cfg)?;
        }
    }
    if let Some(w) = csv.as_mut() {
        w.flush()?;
    }
    Ok(halved)
}

/// Runs `cfg` from its initial data into `dir` (created if needed).
pub fn run_in(cfg: &RunConfig, dir: &Path) -> Result<RunSummary> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_config(dir, cfg)?;
    let initial = cfg.initial_state()?;
    let mut sim = Simulation::new(initial, cfg.params.clone())?;
    let first = sim.initial_record();
    let mut csv = if cfg.output.has(OutputFormat::Csv) { Some(CsvWriter::create(&dir.join(CSV_FILE))?) } else { None };
    if let Some(w) = csv.as_mut() {
        w.write_row(&first)?;
    }
    if cfg.output.has(OutputFormat::Vtk) {
        write_vtk(&snapshot_path(dir, 0), sim.state(), cfg.params.trunc.alpha())?;
    }
    let mut records = vec![first];
    let mut max_n = sim.state().n.max();
    let halved_steps = drive(&mut sim, cfg, dir, &mut csv, &mut records, &mut max_n)?;
    let ledger = ledger_check(&records, sim.limits());
    Ok(RunSummary { directory: dir.to_path_buf(), records, ledger, final_state: sim.state().clone(), halved_steps, max_n })
}

/// Runs `cfg` into its configured output directory.
pub fn run(cfg: &RunConfig) -> Result<RunSummary> {
    run_in(cfg, &cfg.output.resolved_directory())
}

/// Continues the run that wrote `checkpoint`, up to `t_end` (default: the
/// end time in the run's `config.txt`). CSV rows after the checkpoint are
/// discarded and regenerated, so an interrupted run and its resumption
/// produce the same CSV as one uninterrupted run.
pub fn resume(checkpoint: &Path, t_end: Option<f64>) -> Result<RunSummary> {
    let dir = checkpoint.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new(".")).to_path_buf();
    let mut cfg = load_config(&dir.join(CONFIG_FILE))?;
    if let Some(t) = t_end {
        cfg.params.t_end = t;
        cfg.params.validate()?;
    }
    let (state, stored) = read_checkpoint(checkpoint)?;
    let expected = meta(&cfg);
    if stored.s.to_bits() != expected.s.to_bits()
        || stored.alpha.to_bits() != expected.alpha.to_bits()
        || stored.m.to_bits() != expected.m.to_bits()
        || stored.k.to_bits() != expected.k.to_bits()
    {
        return Err(Error::Checkpoint(format!(
            "{}: parameters {stored:?} differ from {CONFIG_FILE} {expected:?}",
            checkpoint.display()
        )));
    }
    if state.grid() != &cfg.grid.build()? {
        return Err(Error::Checkpoint(format!("{}: grid differs from {CONFIG_FILE}", checkpoint.display())));
    }
    write_config(&dir, &cfg)?;
    let (cum, grad) = read_sums(checkpoint)?;
    let limits = LedgerLimits::new(&cfg.initial_state()?, &cfg.params);
    let ckpt_step = state.step;
    let mut sim = Simulation::resume(state, cfg.params.clone(), limits, cum, grad)?;

    let csv_path = dir.join(CSV_FILE);
    let mut records = Vec::new();
    let mut csv = None;
    if cfg.output.has(OutputFormat::Csv) {
        let every = cfg.output.csv_every;
        records = read_csv(&csv_path)?.into_iter().filter(|r| r.step <= ckpt_step && r.step % every == 0).collect();
        let mut w = CsvWriter::create(&csv_path)?;
        for r in &records {
            w.write_row(r)?;
        }
        csv = Some(w);
    }
    let mut max_n = sim.state().n.max();
    let halved_steps = drive(&mut sim, &cfg, &dir, &mut csv, &mut records, &mut max_n)?;
    let ledger = ledger_check(&records, sim.limits());
    Ok(RunSummary { directory: dir, records, ledger, final_state: sim.state().clone(), halved_steps, max_n })
}
