//! Refinement studies: spatial and temporal observed orders, and parameter
//! sweeps over the truncation level `m` and the time step `k`.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::config::{FieldSpec, RunConfig};
use crate::driver::{run_in, RunSummary, CSV_FILE};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::truncation::TruncParams;
use crate::verify::{homogeneous_run, observed_orders, spatial_errors};

/// Errors on a refinement ladder and the observed orders between levels.
#[derive(Debug, Clone)]
pub struct Ladder {
    pub label: String,
    /// Level parameter (cells along x, or the time step).
    pub levels: Vec<f64>,
    pub errors: Vec<f64>,
    pub orders: Vec<f64>,
}

impl fmt::Display for Ladder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", self.label)?;
        for (i, (l, e)) in self.levels.iter().zip(&self.errors).enumerate() {
            let order = if i == 0 { String::from("-") } else { format!("{:.3}", self.orders[i - 1]) };
            writeln!(f, "  {l:>12.6}  error {e:.6e}  order {order}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct MmsReport {
    pub laplacian: Ladder,
    pub heat: Ladder,
    pub temporal: Ladder,
}

fn constant_or(spec: &FieldSpec, default: f64) -> f64 {
    match spec {
        FieldSpec::Constant(v) => *v,
        _ => default,
    }
}

/// Refinement studies built from a config: spatial (cells ×1, ×2, ×4 of
/// the configured grid) for the Laplacian and the heat sub-solve, and
/// temporal (`k`, `k/2`, `k/4`) for spatially constant data against the
/// exact consumption decay `c₀ e^{-n₀^s T}`.
///
/// The temporal study uses the config's constant `n0`/`c0` values (1 if
/// not constant) and its `t_end` (1 if zero).
pub fn mms(cfg: &RunConfig) -> Result<MmsReport> {
    let g = &cfg.grid;
    let grids: Vec<Grid> = [1, 2, 4]
        .iter()
        .map(|f| Grid::new(g.dim, &g.cells.iter().map(|c| c * f).collect::<Vec<_>>(), &g.lengths))
        .collect::<Result<_>>()?;
    let (lap, heat) = spatial_errors(&grids, cfg.params.k)?;
    let cells: Vec<f64> = grids.iter().map(|g| g.cells()[0] as f64).collect();

    let n0 = constant_or(&cfg.initial.n0, 1.0);
    let c0 = constant_or(&cfg.initial.c0, 1.0);
    let t_end = if cfg.params.t_end > 0.0 { cfg.params.t_end } else { 1.0 };
    let ks: Vec<f64> = [1.0, 0.5, 0.25].iter().map(|f| cfg.params.k * f).collect();
    let trunc: TruncParams = cfg.params.trunc;
    let temporal: Vec<f64> = ks.iter().map(|&k| homogeneous_run(n0, c0, trunc, k, t_end, 4).map(|r| r.final_error)).collect::<Result<_>>()?;

    Ok(MmsReport {
        laplacian: Ladder { label: "spatial: Neumann Laplacian (max norm)".into(), levels: cells.clone(), orders: observed_orders(&lap), errors: lap },
        heat: Ladder { label: "spatial: heat sub-solve (max norm)".into(), levels: cells, orders: observed_orders(&heat), errors: heat },
        temporal: Ladder {
            label: format!("temporal: constant data n0={n0}, c0={c0}, T={t_end} (final c error)"),
            levels: ks,
            orders: observed_orders(&temporal),
            errors: temporal,
        },
    })
}

/// Parameter varied by a sweep.
#[derive(Debug, Clone, PartialEq)]
pub enum Vary {
    M(Vec<f64>),
    K(Vec<f64>),
}

impl FromStr for Vary {
    type Err = Error;

    /// Parses `m=10,100,1000` or `k=0.1,0.05`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::ConfigInvalid(format!("--vary expects m=v1,v2,... or k=v1,v2,... (got {s:?})"));
        let (name, list) = s.split_once('=').ok_or_else(bad)?;
        let values: Vec<f64> = list.split(',').map(|t| t.trim().parse::<f64>()).collect::<std::result::Result<_, _>>().map_err(|_| bad())?;
        if values.is_empty() {
            return Err(bad());
        }
        match name.trim() {
            "m" => Ok(Vary::M(values)),
            "k" => Ok(Vary::K(values)),
            _ => Err(bad()),
        }
    }
}

/// One member of a sweep.
#[derive(Debug)]
pub struct SweepEntry {
    pub label: String,
    pub directory: PathBuf,
    pub summary: Result<RunSummary>,
}

#[derive(Debug)]
pub struct SweepReport {
    pub entries: Vec<SweepEntry>,
}

impl SweepReport {
    /// Whether every member wrote a CSV byte-identical to the first one.
    pub fn csvs_identical(&self) -> Result<bool> {
        let read = |e: &SweepEntry| {
            let p = e.directory.join(CSV_FILE);
            std::fs::read(&p).map_err(|err| Error::io(&p, err))
        };
        let first = read(&self.entries[0])?;
        for e in &self.entries[1..] {
            if read(e)? != first {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Max-norm differences of the final `(n, z, u)` of each member from
    /// the last member (the finest `k` or the largest `m`, when sorted).
    pub fn final_differences(&self) -> Vec<Option<f64>> {
        let Some(Ok(reference)) = self.entries.last().map(|e| e.summary.as_ref()) else {
            return vec![None; self.entries.len()];
        };
        let r = &reference.final_state;
        self.entries
            .iter()
            .map(|e| {
                let s = &e.summary.as_ref().ok()?.final_state;
                let diff = |a: &[f64], b: &[f64]| a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
                Some(diff(s.n.values(), r.n.values()).max(diff(s.z.values(), r.z.values())).max(diff(&s.u.flatten(), &r.u.flatten())))
            })
            .collect()
    }
}

/// Runs one copy of `cfg` per value, concurrently, each into its own
/// subdirectory `<output>/<name>=<value>`. Values are sorted (`m`
/// ascending, `k` descending) so the last member is the closest to the
/// `(m, k) → (∞, 0)` limit.
pub fn sweep(cfg: &RunConfig, vary: &Vary, root: &Path) -> Result<SweepReport> {
    let mut variants: Vec<(String, RunConfig)> = Vec::new();
    match vary {
        Vary::M(values) => {
            let mut v = values.clone();
            v.sort_by(f64::total_cmp);
            for m in v {
                let mut c = cfg.clone();
                c.params.trunc = TruncParams::new(c.params.trunc.alpha(), m, c.params.trunc.s())?;
                variants.push((format!("m={m}"), c));
            }
        }
        Vary::K(values) => {
            let mut v = values.clone();
            v.sort_by(|a, b| b.total_cmp(a));
            for k in v {
                let mut c = cfg.clone();
                c.params.k = k;
                c.params.validate()?;
                variants.push((format!("k={k}"), c));
            }
        }
    }
    let entries = std::thread::scope(|scope| {
        let handles: Vec<_> = variants
            .iter()
            .map(|(label, c)| {
                let dir = root.join(label);
                scope.spawn(move || {
                    let summary = run_in(c, &dir);
                    SweepEntry { label: label.clone(), directory: dir, summary }
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("sweep member thread")).collect()
    });
    Ok(SweepReport { entries })
}
