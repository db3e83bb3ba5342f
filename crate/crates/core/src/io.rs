//! File formats: value lists, diagnostics CSV, VTK snapshots, checkpoints.

use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::diagnostics::DiagnosticsRecord;
use crate::error::{Error, Result};
use crate::grid::{derive_c, interp_face_to_center, FaceVectorField, Grid, ScalarField};
use crate::stepper::State;

/// Reads whitespace-separated floats (x fastest); `#` starts a comment.
pub fn read_values_file(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("");
        for tok in line.split_whitespace() {
            let v: f64 = tok.parse().map_err(|_| Error::InitialData(format!("{}:{}: bad number {tok:?}", path.display(), lineno + 1)))?;
            out.push(v);
        }
    }
    Ok(out)
}

/// Column order of the diagnostics CSV.
pub const CSV_HEADER: &str =
    "step,time,mass_n,min_n,min_z,max_z,l2_z_sq,cum_z_increments,grad_z_cum,energy_a,dissipation_d,picard_iters,max_eq_residual";

/// Shortest-exact decimal: 17 significant digits round-trip any double.
fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// One CSV line (without newline) for `r`.
pub fn csv_row(r: &DiagnosticsRecord) -> String {
    let floats = [
        r.time,
        r.mass_n,
        r.min_n,
        r.min_z,
        r.max_z,
        r.l2_z_sq,
        r.cum_z_increments,
        r.grad_z_l2_sq,
        r.energy_a,
        r.dissipation_d,
    ];
    let mut out = r.step.to_string();
    for v in floats {
        out.push(',');
        out.push_str(&fmt17(v));
    }
    out.push(',');
    out.push_str(&r.picard_iters.to_string());
    out.push(',');
    out.push_str(&fmt17(r.max_eq_residual));
    out
}

/// Appending writer for the diagnostics CSV.
#[derive(Debug)]
pub struct CsvWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl CsvWriter {
    /// Creates (truncates) `path` and writes the header.
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = Self { path: path.to_path_buf(), out: BufWriter::new(file) };
        w.line(CSV_HEADER)?;
        Ok(w)
    }

    /// Opens `path` for appending; the header must already be present.
    pub fn append(path: &Path) -> Result<Self> {
        let file = OpenOptions::new().append(true).open(path).map_err(|e| Error::io(path, e))?;
        Ok(Self { path: path.to_path_buf(), out: BufWriter::new(file) })
    }

    fn line(&mut self, s: &str) -> Result<()> {
        writeln!(self.out, "{s}").map_err(|e| Error::io(&self.path, e))
    }

    pub fn write_row(&mut self, r: &DiagnosticsRecord) -> Result<()> {
        self.line(&csv_row(r))
    }

    pub fn flush(&mut self) -> Result<()> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

/// Parses a diagnostics CSV written by [`CsvWriter`].
pub fn read_csv(path: &Path) -> Result<Vec<DiagnosticsRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text).map_err(|msg| Error::Csv(format!("{}: {msg}", path.display())))
}

fn parse_csv(text: &str) -> std::result::Result<Vec<DiagnosticsRecord>, String> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err("missing or unexpected header".into());
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 13 {
            return Err(format!("line {lineno}: expected 13 columns, got {}", cols.len()));
        }
        let f = |j: usize| cols[j].parse::<f64>().map_err(|_| format!("line {lineno}: bad number {:?}", cols[j]));
        let u = |j: usize| cols[j].parse::<u64>().map_err(|_| format!("line {lineno}: bad integer {:?}", cols[j]));
        out.push(DiagnosticsRecord {
            step: u(0)?,
            time: f(1)?,
            mass_n: f(2)?,
            min_n: f(3)?,
            min_z: f(4)?,
            max_z: f(5)?,
            l2_z_sq: f(6)?,
            cum_z_increments: f(7)?,
            grad_z_l2_sq: f(8)?,
            energy_a: f(9)?,
            dissipation_d: f(10)?,
            picard_iters: u(11)?,
            max_eq_residual: f(12)?,
        });
    }
    Ok(out)
}

/// Writes a legacy ASCII VTK `STRUCTURED_POINTS` file with cell data
/// `n`, `c`, `z`, `p` and the face-averaged cell velocity.
pub fn write_vtk(path: &Path, state: &State, alpha: f64) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_vtk_to(&mut w, state, alpha).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

fn write_vtk_to(w: &mut impl Write, state: &State, alpha: f64) -> std::io::Result<()> {
    let grid = state.grid();
    let cells = grid.cells();
    let h = grid.spacing();
    let dims: Vec<usize> = (0..3).map(|a| if a < grid.dim() { cells[a] + 1 } else { 1 }).collect();
    let spacing: Vec<f64> = (0..3).map(|a| if a < grid.dim() { h[a] } else { 1.0 }).collect();
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "chemofluid step {} time {}", state.step, fmt17(state.time))?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET STRUCTURED_POINTS")?;
    writeln!(w, "DIMENSIONS {} {} {}", dims[0], dims[1], dims[2])?;
    writeln!(w, "ORIGIN 0 0 0")?;
    writeln!(w, "SPACING {} {} {}", spacing[0], spacing[1], spacing[2])?;
    writeln!(w, "CELL_DATA {}", grid.num_cells())?;
    let c = derive_c(&state.z, alpha);
    for (name, field) in [("n", &state.n), ("c", &c), ("z", &state.z), ("p", &state.p)] {
        writeln!(w, "SCALARS {name} double 1")?;
        writeln!(w, "LOOKUP_TABLE default")?;
        for v in field.values() {
            writeln!(w, "{}", fmt17(*v))?;
        }
    }
    let centers = interp_face_to_center(&state.u);
    writeln!(w, "VECTORS velocity double")?;
    for idx in 0..grid.num_cells() {
        let comp = |a: usize| centers.get(a).map_or(0.0, |f| f.values()[idx]);
        writeln!(w, "{} {} {}", fmt17(comp(0)), fmt17(comp(1)), fmt17(comp(2)))?;
    }
    Ok(())
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"CHFL0001";
const CHECKPOINT_VERSION: u32 = 1;

/// Run parameters stored alongside a checkpointed state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckpointMeta {
    pub s: f64,
    pub alpha: f64,
    pub m: f64,
    pub k: f64,
}

/// Writes `state` in the little-endian `CHFL0001` binary format.
pub fn write_checkpoint(path: &Path, state: &State, meta: &CheckpointMeta) -> Result<()> {
    let bytes = encode_checkpoint(state, meta);
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn encode_checkpoint(state: &State, meta: &CheckpointMeta) -> Vec<u8> {
    let grid = state.grid();
    let mut b = Vec::new();
    b.extend_from_slice(CHECKPOINT_MAGIC);
    b.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    b.extend_from_slice(&(grid.dim() as u32).to_le_bytes());
    for a in 0..grid.dim() {
        b.extend_from_slice(&(grid.cells()[a] as u32).to_le_bytes());
    }
    for a in 0..grid.dim() {
        b.extend_from_slice(&grid.lengths()[a].to_le_bytes());
    }
    for v in [meta.s, meta.alpha, meta.m, meta.k, state.time] {
        b.extend_from_slice(&v.to_le_bytes());
    }
    b.extend_from_slice(&state.step.to_le_bytes());
    let arrays = [state.n.values(), state.z.values(), state.p.values()].into_iter().chain(state.u.components().iter().map(Vec::as_slice));
    for arr in arrays {
        for v in arr {
            b.extend_from_slice(&v.to_le_bytes());
        }
    }
    b
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> std::result::Result<[u8; N], String> {
        let end = self.pos + N;
        let slice = self.bytes.get(self.pos..end).ok_or_else(|| format!("truncated at byte {}", self.pos))?;
        self.pos = end;
        Ok(slice.try_into().expect("slice length"))
    }
    fn u32(&mut self) -> std::result::Result<u32, String> {
        self.take::<4>().map(u32::from_le_bytes)
    }
    fn u64(&mut self) -> std::result::Result<u64, String> {
        self.take::<8>().map(u64::from_le_bytes)
    }
    fn f64(&mut self) -> std::result::Result<f64, String> {
        self.take::<8>().map(f64::from_le_bytes)
    }
    fn f64s(&mut self, n: usize) -> std::result::Result<Vec<f64>, String> {
        (0..n).map(|_| self.f64()).collect()
    }
}

/// Reads a checkpoint written by [`write_checkpoint`]. The restored state
/// is bitwise identical; `z_prev_max` is not stored and is set to the
/// current `max z`, the bound the next step obeys.
pub fn read_checkpoint(path: &Path) -> Result<(State, CheckpointMeta)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes).map_err(|msg| Error::Checkpoint(format!("{}: {msg}", path.display())))
}

fn decode_checkpoint(bytes: &[u8]) -> std::result::Result<(State, CheckpointMeta), String> {
    let mut r = Reader { bytes, pos: 0 };
    if &r.take::<8>()? != CHECKPOINT_MAGIC {
        return Err("bad magic (not a CHFL0001 checkpoint)".into());
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(format!("unsupported version {version} (expected {CHECKPOINT_VERSION})"));
    }
    let dim = r.u32()? as usize;
    if !(2..=3).contains(&dim) {
        return Err(format!("bad dimension {dim}"));
    }
    let cells: Vec<usize> = (0..dim).map(|_| r.u32().map(|c| c as usize)).collect::<std::result::Result<_, _>>()?;
    let lengths = r.f64s(dim)?;
    let grid = Grid::new(dim, &cells, &lengths).map_err(|e| e.to_string())?;
    let [s, alpha, m, k, time] = r.f64s(5)?.try_into().expect("five values");
    let step = r.u64()?;
    let nc = grid.num_cells();
    let field = |v: Vec<f64>| ScalarField::from_values(&grid, v).map_err(|e| e.to_string());
    let n = field(r.f64s(nc)?)?;
    let z = field(r.f64s(nc)?)?;
    let p = field(r.f64s(nc)?)?;
    let comps = (0..dim).map(|a| r.f64s(grid.num_faces(a))).collect::<std::result::Result<Vec<_>, _>>()?;
    let u = FaceVectorField::from_components(&grid, comps).map_err(|e| e.to_string())?;
    if r.pos != bytes.len() {
        return Err(format!("{} trailing bytes", bytes.len() - r.pos));
    }
    let z_prev_max = z.max();
    Ok((State { n, z, u, p, step, time, z_prev_max }, CheckpointMeta { s, alpha, m, k }))
}
