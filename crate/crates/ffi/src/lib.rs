//! C ABI over the chemofluid solver.
//!
//! A simulation is an opaque `CfSimulation` handle created from config
//! text and released with `cf_simulation_free`. Every fallible function
//! returns a `CfStatus`; on failure `cf_last_error_message` describes the
//! error of the calling thread. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use chemofluid::config::parse_config_in;
use chemofluid::diagnostics::DiagnosticsRecord;
use chemofluid::io::{write_checkpoint, CheckpointMeta};
use chemofluid::stepper::Simulation;
use chemofluid::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    InvalidParameters = 4,
    InitialData = 5,
    SolverFailure = 6,
    NonFinite = 7,
    Io = 8,
    Checkpoint = 9,
    /// The end time of the run has been reached.
    Finished = 10,
    BufferTooSmall = 11,
    Internal = 99,
}

/// Fields that can be copied out of a simulation.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CfField {
    /// Cell density, one value per cell.
    N = 0,
    /// Chemical concentration `c = z² - α²`, one value per cell.
    C = 1,
    /// Shifted square-root variable `z`, one value per cell.
    Z = 2,
    /// Pressure, one value per cell.
    P = 3,
    /// x-normal face velocities.
    U0 = 4,
    /// y-normal face velocities.
    U1 = 5,
    /// z-normal face velocities (3D only).
    U2 = 6,
}

/// Grid geometry; unused trailing axes have one cell and zero faces.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct CfGridInfo {
    pub dim: u32,
    pub cells: [u64; 3],
    pub lengths: [f64; 3],
    pub num_cells: u64,
    pub num_faces: [u64; 3],
}

/// Diagnostics of one step; same meaning as the CSV columns.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct CfRecord {
    pub step: u64,
    pub time: f64,
    pub mass_n: f64,
    pub min_n: f64,
    pub min_z: f64,
    pub max_z: f64,
    pub l2_z_sq: f64,
    pub cum_z_increments: f64,
    pub grad_z_cum: f64,
    pub energy_a: f64,
    pub dissipation_d: f64,
    pub picard_iters: u64,
    pub max_eq_residual: f64,
}

impl From<&DiagnosticsRecord> for CfRecord {
    fn from(r: &DiagnosticsRecord) -> Self {
        Self {
            step: r.step,
            time: r.time,
            mass_n: r.mass_n,
            min_n: r.min_n,
            min_z: r.min_z,
            max_z: r.max_z,
            l2_z_sq: r.l2_z_sq,
            cum_z_increments: r.cum_z_increments,
            grad_z_cum: r.grad_z_l2_sq,
            energy_a: r.energy_a,
            dissipation_d: r.dissipation_d,
            picard_iters: r.picard_iters,
            max_eq_residual: r.max_eq_residual,
        }
    }
}

/// Opaque simulation handle.
pub struct CfSimulation {
    sim: Simulation,
    total_steps: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(e: &Error) -> CfStatus {
    match e {
        Error::ConfigSyntax { .. } | Error::ConfigInvalid(_) => CfStatus::Config,
        Error::Grid(_) | Error::Params(_) => CfStatus::InvalidParameters,
        Error::InitialData(_) => CfStatus::InitialData,
        Error::Solve(_) | Error::StepSolve { .. } | Error::PicardNonConvergence { .. } => CfStatus::SolverFailure,
        Error::NonFinite { .. } => CfStatus::NonFinite,
        Error::Io { .. } => CfStatus::Io,
        Error::Checkpoint(_) | Error::Csv(_) => CfStatus::Checkpoint,
    }
}

fn fail(status: CfStatus, msg: impl Into<String>) -> CfStatus {
    set_error(msg);
    status
}

fn from_error(e: Error) -> CfStatus {
    fail(status_of(&e), e.to_string())
}

/// Runs `f`, converting a panic into `CfStatus::Internal`.
fn guard(f: impl FnOnce() -> CfStatus) -> CfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(CfStatus::Internal, format!("internal error: {msg}"))
        }
    }
}

/// # Safety
/// `p` must be null or a valid NUL-terminated string.
unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, CfStatus> {
    if p.is_null() {
        return Err(fail(CfStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| fail(CfStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message into `buf` (truncated,
/// always NUL-terminated when `len > 0`) and returns the full message
/// length in bytes, excluding the terminator.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn cf_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Creates a simulation from config text. Relative file paths inside the
/// config resolve against `base_dir` (the current directory when null).
/// Output settings are ignored; nothing is written to disk.
///
/// # Safety
/// `config_text` must be a valid NUL-terminated string, `base_dir` null or
/// a valid NUL-terminated string, and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cf_simulation_new(config_text: *const c_char, base_dir: *const c_char, out: *mut *mut CfSimulation) -> CfStatus {
    guard(|| {
        if out.is_null() {
            return fail(CfStatus::NullPointer, "out is null");
        }
        *out = std::ptr::null_mut();
        let text = match str_arg(config_text, "config_text") {
            Ok(t) => t,
            Err(s) => return s,
        };
        let base = if base_dir.is_null() {
            "."
        } else {
            match str_arg(base_dir, "base_dir") {
                Ok(b) => b,
                Err(s) => return s,
            }
        };
        let built = parse_config_in(text, Path::new(base)).and_then(|cfg| {
            let initial = cfg.initial_state()?;
            let total_steps = cfg.params.num_steps();
            Ok(CfSimulation { sim: Simulation::new(initial, cfg.params)?, total_steps })
        });
        match built {
            Ok(sim) => {
                *out = Box::into_raw(Box::new(sim));
                CfStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Releases a simulation; null is a no-op.
///
/// # Safety
/// `sim` must be null or a handle from `cf_simulation_new` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cf_simulation_free(sim: *mut CfSimulation) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

/// # Safety
/// `sim` must be null or a live handle.
unsafe fn handle<'a>(sim: *const CfSimulation) -> Result<&'a CfSimulation, CfStatus> {
    sim.as_ref().ok_or_else(|| fail(CfStatus::NullPointer, "simulation handle is null"))
}

/// Grid geometry of the simulation.
///
/// # Safety
/// `sim` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cf_simulation_grid(sim: *const CfSimulation, out: *mut CfGridInfo) -> CfStatus {
    guard(|| {
        let h = match handle(sim) {
            Ok(h) => h,
            Err(s) => return s,
        };
        if out.is_null() {
            return fail(CfStatus::NullPointer, "out is null");
        }
        let g = h.sim.state().grid();
        let mut info = CfGridInfo { dim: g.dim() as u32, num_cells: g.num_cells() as u64, ..Default::default() };
        for a in 0..3 {
            info.cells[a] = g.cells()[a] as u64;
            info.lengths[a] = g.lengths()[a];
            info.num_faces[a] = if a < g.dim() { g.num_faces(a) as u64 } else { 0 };
        }
        *out = info;
        CfStatus::Ok
    })
}

/// Diagnostics of the current state (the step-0 record before any step).
///
/// # Safety
/// `sim` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cf_simulation_initial_record(sim: *const CfSimulation, out: *mut CfRecord) -> CfStatus {
    guard(|| {
        let h = match handle(sim) {
            Ok(h) => h,
            Err(s) => return s,
        };
        if out.is_null() {
            return fail(CfStatus::NullPointer, "out is null");
        }
        *out = CfRecord::from(&h.sim.initial_record());
        CfStatus::Ok
    })
}

/// Advances one time step and stores its diagnostics in `out` (may be
/// null). Returns `Finished` without stepping once `t_end` is reached.
///
/// # Safety
/// `sim` must be a live handle not used concurrently; `out` null or valid.
#[no_mangle]
pub unsafe extern "C" fn cf_simulation_step(sim: *mut CfSimulation, out: *mut CfRecord) -> CfStatus {
    guard(|| {
        let Some(h) = sim.as_mut() else {
            return fail(CfStatus::NullPointer, "simulation handle is null");
        };
        if h.sim.state().step >= h.total_steps {
            return fail(CfStatus::Finished, "end time reached");
        }
        match h.sim.step() {
            Ok((record, _)) => {
                if !out.is_null() {
                    *out = CfRecord::from(&record);
                }
                CfStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Number of values of `field` (cells or faces).
///
/// # Safety
/// `sim` must be a live handle and `out_len` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cf_simulation_field_len(sim: *const CfSimulation, field: CfField, out_len: *mut usize) -> CfStatus {
    guard(|| {
        let h = match handle(sim) {
            Ok(h) => h,
            Err(s) => return s,
        };
        if out_len.is_null() {
            return fail(CfStatus::NullPointer, "out_len is null");
        }
        match field_values(h, field) {
            Ok(v) => {
                *out_len = v.len();
                CfStatus::Ok
            }
            Err(s) => s,
        }
    })
}

fn field_values(h: &CfSimulation, field: CfField) -> Result<Vec<f64>, CfStatus> {
    let st = h.sim.state();
    let alpha = h.sim.params().trunc.alpha();
    let comp = |a: usize| {
        if a < st.grid().dim() {
            Ok(st.u.component(a).to_vec())
        } else {
            Err(fail(CfStatus::InvalidArgument, format!("velocity component {a} does not exist in {}D", st.grid().dim())))
        }
    };
    match field {
        CfField::N => Ok(st.n.values().to_vec()),
        CfField::C => Ok(st.c(alpha).into_values()),
        CfField::Z => Ok(st.z.values().to_vec()),
        CfField::P => Ok(st.p.values().to_vec()),
        CfField::U0 => comp(0),
        CfField::U1 => comp(1),
        CfField::U2 => comp(2),
    }
}

/// Copies `field` (x fastest) into `buf`, which must hold at least
/// `cf_simulation_field_len` values.
///
/// # Safety
/// `sim` must be a live handle and `buf` point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn cf_simulation_copy_field(sim: *const CfSimulation, field: CfField, buf: *mut f64, len: usize) -> CfStatus {
    guard(|| {
        let h = match handle(sim) {
            Ok(h) => h,
            Err(s) => return s,
        };
        if buf.is_null() {
            return fail(CfStatus::NullPointer, "buf is null");
        }
        let values = match field_values(h, field) {
            Ok(v) => v,
            Err(s) => return s,
        };
        if len < values.len() {
            return fail(CfStatus::BufferTooSmall, format!("buffer holds {len} values, field has {}", values.len()));
        }
        std::ptr::copy_nonoverlapping(values.as_ptr(), buf, values.len());
        CfStatus::Ok
    })
}

/// Writes the current state as a binary checkpoint.
///
/// # Safety
/// `sim` must be a live handle and `path` a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn cf_simulation_write_checkpoint(sim: *const CfSimulation, path: *const c_char) -> CfStatus {
    guard(|| {
        let h = match handle(sim) {
            Ok(h) => h,
            Err(s) => return s,
        };
        let path = match str_arg(path, "path") {
            Ok(p) => p,
            Err(s) => return s,
        };
        let p = h.sim.params();
        let meta = CheckpointMeta { s: p.trunc.s(), alpha: p.trunc.alpha(), m: p.trunc.m(), k: p.k };
        match write_checkpoint(Path::new(path), h.sim.state(), &meta) {
            Ok(()) => CfStatus::Ok,
            Err(e) => from_error(e),
        }
    })
}
