//! Line-oriented run configuration.
//!
//! ```text
//! # comment
//! grid.cells = 64 64
//! grid.lengths = 1 1
//! params.s = 2
//! params.k = 0.01
//! params.t_end = 2
//! initial.n0 = gaussian(0.5, 0.5, 0.1, 4)
//! initial.c0 = constant(1)
//! potential.phi = linear(0, -1)
//! output.directory = runs/demo
//! ```
//!
//! One `section.key = value` per line; unknown keys are errors. Lists are
//! separated by whitespace or commas. `Display` writes every key, so a
//! printed config reparses to an equal value.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::grid::{FaceVectorField, Grid, ScalarField};
use crate::params::{AdvectionScheme, DissipationWeights, FluidSolver, NTransport, PotentialSpec, SimParams};
use crate::truncation::TruncParams;

/// Environment variable naming the directory that relative output
/// directories are resolved against.
pub const OUTPUT_ROOT_ENV: &str = "CHEMOFLUID_OUTPUT_ROOT";

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub dim: usize,
    pub cells: Vec<usize>,
    pub lengths: Vec<f64>,
}

impl GridSpec {
    pub fn build(&self) -> Result<Grid> {
        Grid::new(self.dim, &self.cells, &self.lengths)
    }
}

/// Initial scalar field.
#[derive(Debug, Clone, PartialEq)]
pub enum FieldSpec {
    Constant(f64),
    /// `base + amplitude · exp(-|x - center|² / width²)`.
    Gaussian { center: Vec<f64>, width: f64, amplitude: f64, base: f64 },
    /// Cell values, x fastest.
    File(PathBuf),
}

/// Initial velocity.
#[derive(Debug, Clone, PartialEq)]
pub enum VelocitySpec {
    Zero,
    Constant(Vec<f64>),
    /// Divergence-free swirl from the stream function
    /// `A sin²(πx/Lx) sin²(πy/Ly)` (2D; in 3D the z component is zero).
    Vortex(f64),
    /// All face values, component after component, each x fastest.
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitialSpec {
    pub n0: FieldSpec,
    pub c0: FieldSpec,
    pub u0: VelocitySpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Vtk,
    Checkpoint,
}

impl OutputFormat {
    fn name(self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Vtk => "vtk",
            OutputFormat::Checkpoint => "checkpoint",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputSpec {
    pub directory: PathBuf,
    /// Write every `csv_every`-th step to the CSV (step 0 always).
    pub csv_every: u64,
    /// 0 disables periodic snapshots; the final state is always written
    /// when `vtk` is among the formats.
    pub snapshot_every: u64,
    /// 0 disables periodic checkpoints; the final state is always written
    /// when `checkpoint` is among the formats.
    pub checkpoint_every: u64,
    pub formats: Vec<OutputFormat>,
}

impl OutputSpec {
    pub fn has(&self, f: OutputFormat) -> bool {
        self.formats.contains(&f)
    }

    /// Output directory with relative paths resolved against the
    /// environment's output root, if set.
    pub fn resolved_directory(&self) -> PathBuf {
        if self.directory.is_relative() {
            if let Some(root) = std::env::var_os(OUTPUT_ROOT_ENV) {
                return PathBuf::from(root).join(&self.directory);
            }
        }
        self.directory.clone()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub grid: GridSpec,
    pub params: SimParams,
    pub initial: InitialSpec,
    pub output: OutputSpec,
}

fn syntax(line: usize, message: impl Into<String>) -> Error {
    Error::ConfigSyntax { line, message: message.into() }
}

fn split_list(v: &str) -> Vec<&str> {
    v.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).collect()
}

fn parse_f64(line: usize, key: &str, v: &str) -> Result<f64> {
    v.trim().parse::<f64>().map_err(|_| syntax(line, format!("{key}: expected a number, got {v:?}")))
}

fn parse_f64_list(line: usize, key: &str, v: &str) -> Result<Vec<f64>> {
    split_list(v).into_iter().map(|t| parse_f64(line, key, t)).collect()
}

fn parse_u64(line: usize, key: &str, v: &str) -> Result<u64> {
    v.trim().parse::<u64>().map_err(|_| syntax(line, format!("{key}: expected a non-negative integer, got {v:?}")))
}

fn parse_bool(line: usize, key: &str, v: &str) -> Result<bool> {
    match v.trim() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(syntax(line, format!("{key}: expected true/false, got {v:?}"))),
    }
}

/// Splits `name(args)` into `(name, args)`; a bare word has empty args.
fn call_form(line: usize, key: &str, v: &str) -> Result<(String, String)> {
    let v = v.trim();
    match v.find('(') {
        None => Ok((v.to_string(), String::new())),
        Some(open) => {
            if !v.ends_with(')') {
                return Err(syntax(line, format!("{key}: missing ')' in {v:?}")));
            }
            Ok((v[..open].trim().to_string(), v[open + 1..v.len() - 1].trim().to_string()))
        }
    }
}

fn resolve(base: &Path, p: &str) -> PathBuf {
    let path = PathBuf::from(p.trim());
    if path.is_absolute() {
        path
    } else {
        base.join(path)
    }
}

fn require_file(line: usize, key: &str, path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(syntax(line, format!("{key}: file {} does not exist", path.display())))
    }
}

fn parse_field(line: usize, key: &str, v: &str, base: &Path, dim: usize) -> Result<FieldSpec> {
    let (name, args) = call_form(line, key, v)?;
    match name.as_str() {
        "constant" => Ok(FieldSpec::Constant(parse_f64(line, key, &args)?)),
        "gaussian" => {
            let a = parse_f64_list(line, key, &args)?;
            let base = match a.len() {
                l if l == dim + 2 => 0.0,
                l if l == dim + 3 => a[dim + 2],
                l => {
                    return Err(syntax(
                        line,
                        format!("{key}: gaussian(center..., width, amplitude[, base]) needs {} or {} numbers (got {l})", dim + 2, dim + 3),
                    ))
                }
            };
            let width = a[dim];
            if !(width > 0.0) {
                return Err(syntax(line, format!("{key}: gaussian width must be > 0")));
            }
            Ok(FieldSpec::Gaussian { center: a[..dim].to_vec(), width, amplitude: a[dim + 1], base })
        }
        "file" => {
            let path = resolve(base, &args);
            require_file(line, key, &path)?;
            Ok(FieldSpec::File(path))
        }
        other => Err(syntax(line, format!("{key}: unknown field spec {other:?} (constant | gaussian | file)"))),
    }
}

fn parse_velocity(line: usize, key: &str, v: &str, base: &Path) -> Result<VelocitySpec> {
    let (name, args) = call_form(line, key, v)?;
    match name.as_str() {
        "zero" => Ok(VelocitySpec::Zero),
        "constant" => Ok(VelocitySpec::Constant(parse_f64_list(line, key, &args)?)),
        "vortex" => Ok(VelocitySpec::Vortex(parse_f64(line, key, &args)?)),
        "file" => {
            let path = resolve(base, &args);
            require_file(line, key, &path)?;
            Ok(VelocitySpec::File(path))
        }
        other => Err(syntax(line, format!("{key}: unknown velocity spec {other:?} (zero | constant | vortex | file)"))),
    }
}

fn parse_potential(line: usize, key: &str, v: &str, base: &Path) -> Result<PotentialSpec> {
    let (name, args) = call_form(line, key, v)?;
    match name.as_str() {
        "zero" => Ok(PotentialSpec::Zero),
        "linear" => Ok(PotentialSpec::Linear(parse_f64_list(line, key, &args)?)),
        "file" => {
            let path = resolve(base, &args);
            require_file(line, key, &path)?;
            Ok(PotentialSpec::FromFile(path))
        }
        other => Err(syntax(line, format!("{key}: unknown potential {other:?} (zero | linear | file)"))),
    }
}

const KEYS: &[&str] = &[
    "grid.dim",
    "grid.cells",
    "grid.lengths",
    "params.s",
    "params.alpha",
    "params.m",
    "params.k",
    "params.t_end",
    "params.picard_tol",
    "params.picard_max_iter",
    "params.linsolve_tol",
    "params.linsolve_max_iter",
    "params.bound_tol",
    "params.energy_weight_u",
    "params.energy_weight_n",
    "params.dissipation_weights",
    "params.advection",
    "params.n_transport",
    "params.fluid",
    "params.adaptive",
    "params.relaxation",
    "initial.n0",
    "initial.c0",
    "initial.u0",
    "potential.phi",
    "output.directory",
    "output.csv_every",
    "output.snapshot_every",
    "output.checkpoint_every",
    "output.formats",
];

/// Parses a config; relative file paths resolve against the current directory.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    parse_config_in(text, Path::new("."))
}

/// Reads and parses a config file; relative paths inside resolve against
/// the file's directory.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config_in(&text, path.parent().unwrap_or(Path::new(".")))
}

/// Parses a config with relative file paths resolved against `base`.
pub fn parse_config_in(text: &str, base: &Path) -> Result<RunConfig> {
    let mut entries: BTreeMap<&str, (usize, &str)> = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| syntax(line, format!("expected `key = value`, got {content:?}")))?;
        let key = key.trim();
        let Some(known) = KEYS.iter().find(|k| **k == key) else {
            return Err(syntax(line, format!("unknown key {key:?}")));
        };
        if entries.insert(known, (line, value.trim())).is_some() {
            return Err(syntax(line, format!("duplicate key {key:?}")));
        }
    }
    let get = |k: &str| entries.get(k).copied();
    let missing = |k: &str| Error::ConfigInvalid(format!("missing required key {k}"));

    // grid
    let (l, v) = get("grid.cells").ok_or_else(|| missing("grid.cells"))?;
    let cells: Vec<usize> =
        split_list(v).into_iter().map(|t| t.parse::<usize>().map_err(|_| syntax(l, format!("grid.cells: bad count {t:?}")))).collect::<Result<_>>()?;
    let dim = match get("grid.dim") {
        Some((l, v)) => parse_u64(l, "grid.dim", v)? as usize,
        None => cells.len(),
    };
    let lengths = match get("grid.lengths") {
        Some((l, v)) => parse_f64_list(l, "grid.lengths", v)?,
        None => vec![1.0; dim],
    };
    let grid = GridSpec { dim, cells, lengths };
    grid.build()?;

    // params
    let num = |k: &str| -> Result<Option<f64>> { get(k).map(|(l, v)| parse_f64(l, k, v)).transpose() };
    let s = num("params.s")?.ok_or_else(|| missing("params.s"))?;
    let defaults = TruncParams::with_defaults(s)?;
    let alpha = num("params.alpha")?.unwrap_or(defaults.alpha());
    let m = num("params.m")?.unwrap_or(defaults.m());
    let trunc = TruncParams::new(alpha, m, s)?;
    let k = num("params.k")?.ok_or_else(|| missing("params.k"))?;
    let mut params = SimParams::new(trunc, k);
    params.t_end = num("params.t_end")?.ok_or_else(|| missing("params.t_end"))?;
    if let Some(v) = num("params.picard_tol")? {
        params.picard_tol = v;
    }
    if let Some((l, v)) = get("params.picard_max_iter") {
        params.picard_max_iter = parse_u64(l, "params.picard_max_iter", v)? as usize;
    }
    if let Some(v) = num("params.linsolve_tol")? {
        params.linsolve_tol = v;
    }
    if let Some((l, v)) = get("params.linsolve_max_iter") {
        params.linsolve_max_iter = Some(parse_u64(l, "params.linsolve_max_iter", v)? as usize);
    }
    if let Some(v) = num("params.bound_tol")? {
        params.bound_tol = v;
    }
    if let Some(v) = num("params.energy_weight_u")? {
        params.energy_weight_u = v;
    }
    if let Some(v) = num("params.energy_weight_n")? {
        params.energy_weight_n = v;
    }
    if let Some((l, v)) = get("params.dissipation_weights") {
        params.dissipation_weights = DissipationWeights::from_slice(&parse_f64_list(l, "params.dissipation_weights", v)?)?;
    }
    if let Some((l, v)) = get("params.advection") {
        params.advection = match v {
            "upwind" => AdvectionScheme::Upwind,
            "central" => AdvectionScheme::Central,
            _ => return Err(syntax(l, format!("params.advection: expected upwind|central, got {v:?}"))),
        };
    }
    if let Some((l, v)) = get("params.n_transport") {
        params.n_transport = match v {
            "conservative" => NTransport::Conservative,
            "nonconservative" => NTransport::NonConservative,
            _ => return Err(syntax(l, format!("params.n_transport: expected conservative|nonconservative, got {v:?}"))),
        };
    }
    if let Some((l, v)) = get("params.fluid") {
        params.fluid = match v {
            "coupled" => FluidSolver::Coupled,
            "projection" => FluidSolver::Projection,
            _ => return Err(syntax(l, format!("params.fluid: expected coupled|projection, got {v:?}"))),
        };
    }
    if let Some((l, v)) = get("params.adaptive") {
        params.adaptive = parse_bool(l, "params.adaptive", v)?;
    }
    if let Some(v) = num("params.relaxation")? {
        params.relaxation = v;
    }
    if let Some((l, v)) = get("potential.phi") {
        params.potential = parse_potential(l, "potential.phi", v, base)?;
    }
    params.validate()?;
    if let PotentialSpec::Linear(g) = &params.potential {
        if g.len() != dim {
            return Err(Error::ConfigInvalid(format!("potential.phi: linear needs {dim} components (got {})", g.len())));
        }
    }

    // initial data
    let field = |k: &str| -> Result<FieldSpec> {
        let (l, v) = get(k).ok_or_else(|| missing(k))?;
        parse_field(l, k, v, base, dim)
    };
    let n0 = field("initial.n0")?;
    let c0 = field("initial.c0")?;
    let u0 = match get("initial.u0") {
        Some((l, v)) => parse_velocity(l, "initial.u0", v, base)?,
        None => VelocitySpec::Zero,
    };
    if let VelocitySpec::Constant(c) = &u0 {
        if c.len() != dim {
            return Err(Error::ConfigInvalid(format!("initial.u0: constant needs {dim} components (got {})", c.len())));
        }
    }
    for (name, spec) in [("initial.n0", &n0), ("initial.c0", &c0)] {
        if let FieldSpec::Constant(v) = spec {
            if *v < 0.0 {
                return Err(Error::ConfigInvalid(format!("{name} must be >= 0 (got {v})")));
            }
        }
    }

    // output
    let directory = get("output.directory").map(|(_, v)| PathBuf::from(v)).unwrap_or_else(|| PathBuf::from("output"));
    let every = |k: &str, default: u64| -> Result<u64> { get(k).map(|(l, v)| parse_u64(l, k, v)).transpose().map(|o| o.unwrap_or(default)) };
    let csv_every = every("output.csv_every", 1)?;
    if csv_every == 0 {
        return Err(Error::ConfigInvalid("output.csv_every must be >= 1".into()));
    }
    let formats = match get("output.formats") {
        Some((l, v)) => split_list(v)
            .into_iter()
            .map(|t| match t {
                "csv" => Ok(OutputFormat::Csv),
                "vtk" => Ok(OutputFormat::Vtk),
                "checkpoint" => Ok(OutputFormat::Checkpoint),
                _ => Err(syntax(l, format!("output.formats: unknown format {t:?} (csv | vtk | checkpoint)"))),
            })
            .collect::<Result<Vec<_>>>()?,
        None => vec![OutputFormat::Csv, OutputFormat::Checkpoint],
    };
    let output = OutputSpec {
        directory,
        csv_every,
        snapshot_every: every("output.snapshot_every", 0)?,
        checkpoint_every: every("output.checkpoint_every", 0)?,
        formats,
    };

    Ok(RunConfig { grid, params, initial: InitialSpec { n0, c0, u0 }, output })
}

fn join<T: fmt::Display>(v: &[T], sep: &str) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(sep)
}

impl fmt::Display for FieldSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldSpec::Constant(v) => write!(f, "constant({v})"),
            FieldSpec::Gaussian { center, width, amplitude, base } => {
                write!(f, "gaussian({}, {width}, {amplitude}, {base})", join(center, ", "))
            }
            FieldSpec::File(p) => write!(f, "file({})", p.display()),
        }
    }
}

impl fmt::Display for VelocitySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VelocitySpec::Zero => write!(f, "zero"),
            VelocitySpec::Constant(c) => write!(f, "constant({})", join(c, ", ")),
            VelocitySpec::Vortex(a) => write!(f, "vortex({a})"),
            VelocitySpec::File(p) => write!(f, "file({})", p.display()),
        }
    }
}

impl fmt::Display for RunConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = &self.params;
        writeln!(f, "grid.dim = {}", self.grid.dim)?;
        writeln!(f, "grid.cells = {}", join(&self.grid.cells, " "))?;
        writeln!(f, "grid.lengths = {}", join(&self.grid.lengths, " "))?;
        writeln!(f, "params.s = {}", p.trunc.s())?;
        writeln!(f, "params.alpha = {}", p.trunc.alpha())?;
        writeln!(f, "params.m = {}", p.trunc.m())?;
        writeln!(f, "params.k = {}", p.k)?;
        writeln!(f, "params.t_end = {}", p.t_end)?;
        writeln!(f, "params.picard_tol = {}", p.picard_tol)?;
        writeln!(f, "params.picard_max_iter = {}", p.picard_max_iter)?;
        writeln!(f, "params.linsolve_tol = {}", p.linsolve_tol)?;
        if let Some(m) = p.linsolve_max_iter {
            writeln!(f, "params.linsolve_max_iter = {m}")?;
        }
        writeln!(f, "params.bound_tol = {}", p.bound_tol)?;
        writeln!(f, "params.energy_weight_u = {}", p.energy_weight_u)?;
        writeln!(f, "params.energy_weight_n = {}", p.energy_weight_n)?;
        writeln!(f, "params.dissipation_weights = {}", join(&p.dissipation_weights.to_array(), " "))?;
        let adv = match p.advection {
            AdvectionScheme::Upwind => "upwind",
            AdvectionScheme::Central => "central",
        };
        writeln!(f, "params.advection = {adv}")?;
        let nt = match p.n_transport {
            NTransport::Conservative => "conservative",
            NTransport::NonConservative => "nonconservative",
        };
        writeln!(f, "params.n_transport = {nt}")?;
        let fl = match p.fluid {
            FluidSolver::Coupled => "coupled",
            FluidSolver::Projection => "projection",
        };
        writeln!(f, "params.fluid = {fl}")?;
        writeln!(f, "params.adaptive = {}", p.adaptive)?;
        writeln!(f, "params.relaxation = {}", p.relaxation)?;
        writeln!(f, "initial.n0 = {}", self.initial.n0)?;
        writeln!(f, "initial.c0 = {}", self.initial.c0)?;
        writeln!(f, "initial.u0 = {}", self.initial.u0)?;
        match &p.potential {
            PotentialSpec::Zero => writeln!(f, "potential.phi = zero")?,
            PotentialSpec::Linear(g) => writeln!(f, "potential.phi = linear({})", join(g, ", "))?,
            PotentialSpec::FromFile(path) => writeln!(f, "potential.phi = file({})", path.display())?,
        }
        writeln!(f, "output.directory = {}", self.output.directory.display())?;
        writeln!(f, "output.csv_every = {}", self.output.csv_every)?;
        writeln!(f, "output.snapshot_every = {}", self.output.snapshot_every)?;
        writeln!(f, "output.checkpoint_every = {}", self.output.checkpoint_every)?;
        let formats: Vec<&str> = self.output.formats.iter().map(|f| f.name()).collect();
        writeln!(f, "output.formats = {}", formats.join(" "))
    }
}

impl FieldSpec {
    pub fn evaluate(&self, grid: &Grid) -> Result<ScalarField> {
        match self {
            FieldSpec::Constant(v) => Ok(ScalarField::constant(grid, *v)),
            FieldSpec::Gaussian { center, width, amplitude, base } => Ok(ScalarField::from_fn(grid, |x| {
                let r2: f64 = center.iter().enumerate().map(|(a, c)| (x[a] - c).powi(2)).sum();
                base + amplitude * (-r2 / (width * width)).exp()
            })),
            FieldSpec::File(path) => {
                let values = crate::io::read_values_file(path)?;
                ScalarField::from_values(grid, values).map_err(|e| Error::InitialData(format!("{}: {e}", path.display())))
            }
        }
    }
}

impl VelocitySpec {
    pub fn evaluate(&self, grid: &Grid) -> Result<FaceVectorField> {
        let mut u = match self {
            VelocitySpec::Zero => FaceVectorField::zeros(grid),
            VelocitySpec::Constant(c) => FaceVectorField::from_fn(grid, |a, _| c[a]),
            VelocitySpec::Vortex(amp) => {
                let h = grid.spacing();
                let len = grid.lengths();
                let psi = |x: f64, y: f64| amp * (PI * x / len[0]).sin().powi(2) * (PI * y / len[1]).sin().powi(2);
                let mut u = FaceVectorField::zeros(grid);
                let c0 = u.component_mut(0);
                grid.for_each_face(0, |idx, [i, j, _]| {
                    let x = i as f64 * h[0];
                    c0[idx] = (psi(x, (j + 1) as f64 * h[1]) - psi(x, j as f64 * h[1])) / h[1];
                });
                let c1 = u.component_mut(1);
                grid.for_each_face(1, |idx, [i, j, _]| {
                    let y = j as f64 * h[1];
                    c1[idx] = -(psi((i + 1) as f64 * h[0], y) - psi(i as f64 * h[0], y)) / h[0];
                });
                u
            }
            VelocitySpec::File(path) => {
                let values = crate::io::read_values_file(path)?;
                FaceVectorField::from_flat(grid, &values).map_err(|e| Error::InitialData(format!("{}: {e}", path.display())))?
            }
        };
        u.set_boundary_zero();
        Ok(u)
    }
}

impl RunConfig {
    /// Initial state with `u⁰` projected onto the divergence-free faces.
    pub fn initial_state(&self) -> Result<crate::stepper::State> {
        let grid = self.grid.build()?;
        let n0 = self.initial.n0.evaluate(&grid)?;
        let c0 = self.initial.c0.evaluate(&grid)?;
        let u0 = self.initial.u0.evaluate(&grid)?;
        crate::stepper::init_state(n0, &c0, u0, &self.params)
    }
}
