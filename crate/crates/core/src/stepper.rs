//! Picard fixed-point iteration per time step and the time-marching loop.

use crate::diagnostics::{make_record, DiagnosticsRecord, LedgerLimits};
use crate::error::{Error, Result};
use crate::fluid::{fluid_solve, momentum_convection, pressure_project, vector_laplacian, FluidSubstepInput};
use crate::grid::{derive_c, FaceVectorField, Grid, ScalarField};
use crate::ops::{advective_flux, chemotaxis_flux, divergence_of_fluxes, gradient_at_faces, gradsq_density, laplacian_neumann};
use crate::params::{NTransport, Potential, SimParams};

/// Discrete unknowns at one time level. `c` is never stored; it is
/// `z² - α²`.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub n: ScalarField,
    pub z: ScalarField,
    pub u: FaceVectorField,
    pub p: ScalarField,
    pub step: u64,
    pub time: f64,
    /// `max z` of the previous time level (the bound the current one obeys).
    pub z_prev_max: f64,
}

impl State {
    pub fn grid(&self) -> &Grid {
        self.n.grid()
    }

    pub fn c(&self, alpha: f64) -> ScalarField {
        derive_c(&self.z, alpha)
    }
}

/// Builds the initial state: `z = √(c⁰ + α²)` and `u⁰` replaced by its
/// divergence-free projection.
pub fn init_state(n0: ScalarField, c0: &ScalarField, u0: FaceVectorField, params: &SimParams) -> Result<State> {
    let grid = *n0.grid();
    if c0.grid() != &grid || u0.grid() != &grid {
        return Err(Error::InitialData("initial fields live on different grids".into()));
    }
    if !n0.is_finite() || !c0.is_finite() || !u0.is_finite() {
        return Err(Error::InitialData("initial data must be finite".into()));
    }
    if n0.min() < 0.0 {
        return Err(Error::InitialData(format!("n0 must be >= 0 (min {})", n0.min())));
    }
    if c0.min() < 0.0 {
        return Err(Error::InitialData(format!("c0 must be >= 0 (min {})", c0.min())));
    }
    let alpha = params.trunc.alpha();
    let z = c0.map(|c| (c + alpha * alpha).sqrt());
    let mut u0 = u0;
    u0.set_boundary_zero();
    let (u, _) = pressure_project(&u0, 1.0, params.linsolve_tol, params.linsolve_max_iter)?;
    let z_prev_max = z.max();
    Ok(State { n: n0, z, u, p: ScalarField::zeros(&grid), step: 0, time: 0.0, z_prev_max })
}

/// Which smallness condition on the first time step is violated.
#[derive(Debug, Clone, PartialEq)]
pub struct StepWarning {
    pub guard: &'static str,
    /// `k` times the relevant norm; the guard asks for `<= 1`.
    pub value: f64,
}

impl std::fmt::Display for StepWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "initial-step guard {}: k-weighted norm {:.6e} exceeds 1", self.guard, self.value)
    }
}

/// The `k`-weighted norms of the initial data that the analysis asks to be
/// at most 1, in the order `[n, z, u]`.
pub fn initial_step_norms(state: &State, k: f64, s: f64) -> [f64; 3] {
    let grid = state.grid();
    let vol = grid.cell_volume();
    let grad = gradient_at_faces(&state.n);
    let n_norm = if s < 2.0 {
        let p = 5.0 * s / (s + 3.0);
        let cells: f64 = state.n.values().iter().map(|v| v.abs().powf(p)).sum();
        let faces: f64 = grad.components().iter().flatten().map(|g| g.abs().powf(p)).sum();
        (cells + faces) * vol
    } else {
        state.n.l2_sq() + grad.l2_sq()
    };
    let z_norm = laplacian_neumann(&state.z).l2_sq();
    let u_norm = (-state.u.dot(&vector_laplacian(&state.u))).max(0.0);
    [k * n_norm, k * z_norm, k * u_norm]
}

/// Non-fatal warnings for violated initial-step guards.
pub fn validate_initial_step(state: &State, params: &SimParams) -> Vec<StepWarning> {
    let norms = initial_step_norms(state, params.k, params.trunc.s());
    ["n", "z", "u"]
        .into_iter()
        .zip(norms)
        .filter(|(_, v)| *v > 1.0)
        .map(|(guard, value)| StepWarning { guard, value })
        .collect()
}

/// Relative L∞ residual of each discrete equation at a solved step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EquationResiduals {
    pub n: f64,
    pub z: f64,
    pub momentum: f64,
    pub divergence: f64,
}

impl EquationResiduals {
    pub fn max(&self) -> f64 {
        self.n.max(self.z).max(self.momentum).max(self.divergence)
    }
}

/// `‖Σ terms‖∞ / (1 + max_t ‖t‖∞)` over the given index set.
fn relative_residual(terms: &[&[f64]], keep: impl Fn(usize) -> bool) -> f64 {
    let len = terms[0].len();
    let mut res: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for t in terms {
        scale = scale.max(t.iter().enumerate().filter(|(i, _)| keep(*i)).fold(0.0, |m, (_, v)| m.max(v.abs())));
    }
    for i in (0..len).filter(|&i| keep(i)) {
        let sum: f64 = terms.iter().map(|t| t[i]).sum();
        res = res.max(sum.abs());
    }
    res / (1.0 + scale)
}

/// Substitutes `cur` (with `prev` as the previous level) into the discrete
/// equations of one step of size `k`.
pub fn equation_residuals(cur: &State, prev: &State, grad_phi: &FaceVectorField, params: &SimParams, k: f64) -> EquationResiduals {
    let grid = *cur.grid();
    let t = &params.trunc;
    let s = t.s();
    let a2 = t.alpha() * t.alpha();
    let all = |_| true;

    // n/k + u·∇n - Δn + div(chemotaxis) - n_prev/k
    let n_dt: Vec<f64> = cur.n.values().iter().map(|v| v / k).collect();
    let n_adv = match params.n_transport {
        NTransport::Conservative => divergence_of_fluxes(&advective_flux(&cur.u, &cur.n, params.advection)).into_values(),
        NTransport::NonConservative => {
            let mut out = vec![0.0; grid.num_cells()];
            crate::ops::nonconservative_transport_raw(&grid, &cur.u, cur.n.values(), &mut out);
            out
        }
    };
    let n_lap: Vec<f64> = laplacian_neumann(&cur.n).values().iter().map(|v| -v).collect();
    let n_chem = divergence_of_fluxes(&chemotaxis_flux(&cur.n, &cur.z, &cur.z, t)).into_values();
    let n_prev: Vec<f64> = prev.n.values().iter().map(|v| -v / k).collect();
    let n_res = relative_residual(&[&n_dt, &n_adv, &n_lap, &n_chem, &n_prev], all);

    // z/k - Δz + (s/2)G z - α²(s/2)G/T(z) - |∇z|²/T(z) - z_prev/k + div(u z)
    let zv = cur.z.values();
    let nv = cur.n.values();
    let z_dt: Vec<f64> = zv.iter().map(|v| v / k).collect();
    let z_lap: Vec<f64> = laplacian_neumann(&cur.z).values().iter().map(|v| -v).collect();
    let z_react: Vec<f64> = zv.iter().zip(nv).map(|(z, n)| 0.5 * s * t.g0m(*n) * z).collect();
    let z_alpha: Vec<f64> = zv.iter().zip(nv).map(|(z, n)| -a2 * 0.5 * s * t.g0m(*n) / t.t_alpha(*z)).collect();
    let z_grad: Vec<f64> = gradsq_density(&cur.z).values().iter().zip(zv).map(|(g, z)| -g / t.t_alpha(*z)).collect();
    let z_prev: Vec<f64> = prev.z.values().iter().map(|v| -v / k).collect();
    let z_adv = divergence_of_fluxes(&advective_flux(&cur.u, &cur.z, params.advection)).into_values();
    let z_res = relative_residual(&[&z_dt, &z_lap, &z_react, &z_alpha, &z_grad, &z_prev, &z_adv], all);

    // u/k + (u_prev·∇)u - Δu + ∇P - T(n)∇Φ - u_prev/k on interior faces
    let u_dt: Vec<f64> = cur.u.flatten().iter().map(|v| v / k).collect();
    let u_conv = momentum_convection(&prev.u, &cur.u, params.advection).flatten();
    let u_lap: Vec<f64> = vector_laplacian(&cur.u).flatten().iter().map(|v| -v).collect();
    let u_p = gradient_at_faces(&cur.p).flatten();
    let src = crate::fluid::momentum_rhs(&cur.n, grad_phi, &FaceVectorField::zeros(&grid), k, t).flatten();
    let u_src: Vec<f64> = src.iter().map(|v| -v).collect();
    let u_prev: Vec<f64> = prev.u.flatten().iter().map(|v| -v / k).collect();
    let mut interior = Vec::with_capacity(u_dt.len());
    for a in 0..grid.dim() {
        grid.for_each_face(a, |_, pos| interior.push(!grid.is_boundary_face(a, pos)));
    }
    let mom_res = relative_residual(&[&u_dt, &u_conv, &u_lap, &u_p, &u_src, &u_prev], |i| interior[i]);

    // div u, split into per-axis difference quotients
    let h = grid.spacing();
    let mut axis_terms: Vec<Vec<f64>> = Vec::new();
    for a in 0..grid.dim() {
        let comp = cur.u.component(a);
        let mut term = vec![0.0; grid.num_cells()];
        grid.for_each_cell(|c, pos| {
            let lo = grid.face_index(a, pos[0], pos[1], pos[2]);
            term[c] = (comp[lo + grid.face_stride(a, a)] - comp[lo]) / h[a];
        });
        axis_terms.push(term);
    }
    let refs: Vec<&[f64]> = axis_terms.iter().map(|v| v.as_slice()).collect();
    let div_res = relative_residual(&refs, all);

    EquationResiduals { n: n_res, z: z_res, momentum: mom_res, divergence: div_res }
}

/// Outcome of the fixed-point iteration of one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PicardReport {
    pub iterations: u64,
    /// Max over `{n, z, u}` of `‖Δ‖∞ / (1 + ‖field‖∞)` at the last iteration.
    pub final_change: f64,
    pub converged: bool,
    /// Whether the step was completed as two half steps.
    pub halved: bool,
    pub residuals: EquationResiduals,
}

fn relative_change(new: &[f64], old: &[f64]) -> f64 {
    let mut diff: f64 = 0.0;
    let mut size: f64 = 0.0;
    for (a, b) in new.iter().zip(old) {
        diff = diff.max((a - b).abs());
        size = size.max(a.abs());
    }
    diff / (1.0 + size)
}

fn relax(new: &mut [f64], old: &[f64], omega: f64) {
    if omega < 1.0 {
        for (a, b) in new.iter_mut().zip(old) {
            *a = omega * *a + (1.0 - omega) * b;
        }
    }
}

fn check_finite(field: &'static str, values: &[f64], step: u64) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { step, field })
    }
}

/// Picard iteration for one step of size `k` from `prev`.
fn picard_iterate(prev: &State, potential: &Potential, params: &SimParams, k: f64, step: u64) -> Result<(State, PicardReport)> {
    let mut local = params.clone();
    local.k = k;
    let params = &local;
    let wrap = |e: Error| match e {
        Error::Solve(source) => Error::StepSolve { step, source },
        other => other,
    };

    let mut n_bar = prev.n.clone();
    let mut z_bar = prev.z.clone();
    let mut u_bar = prev.u.clone();
    let mut p_bar = prev.p.clone();
    let mut change = f64::INFINITY;
    for it in 1..=params.picard_max_iter as u64 {
        let input = FluidSubstepInput { u_prev: &prev.u, n_bar: &n_bar, grad_phi: &potential.grad, params };
        let fluid = fluid_solve(&input, &u_bar, &p_bar).map_err(wrap)?;
        let mut u = fluid.u;
        let z = crate::scalar::z_solve(&prev.z, &n_bar, &z_bar, &u, params).map_err(wrap)?;
        let n = crate::scalar::n_solve(&prev.n, &n_bar, &z, &z_bar, &u, params).map_err(wrap)?;
        check_finite("u", &u.flatten(), step)?;
        check_finite("z", z.values(), step)?;
        check_finite("n", n.values(), step)?;

        let u_new = u.flatten();
        let u_old = u_bar.flatten();
        change = relative_change(n.values(), n_bar.values())
            .max(relative_change(z.values(), z_bar.values()))
            .max(relative_change(&u_new, &u_old));

        let (mut n, mut z) = (n, z);
        relax(n.values_mut(), n_bar.values(), params.relaxation);
        relax(z.values_mut(), z_bar.values(), params.relaxation);
        if params.relaxation < 1.0 {
            let mut flat = u_new;
            relax(&mut flat, &u_old, params.relaxation);
            u = FaceVectorField::from_flat(prev.grid(), &flat)?;
        }
        n_bar = n;
        z_bar = z;
        u_bar = u;
        p_bar = fluid.p;

        if change <= params.picard_tol {
            let state = State {
                n: n_bar,
                z: z_bar,
                u: u_bar,
                p: p_bar,
                step,
                time: prev.time + k,
                z_prev_max: prev.z.max(),
            };
            let residuals = equation_residuals(&state, prev, &potential.grad, params, k);
            let report = PicardReport { iterations: it, final_change: change, converged: true, halved: false, residuals };
            return Ok((state, report));
        }
    }
    Err(Error::PicardNonConvergence { step, iterations: params.picard_max_iter, change })
}

/// One full time step. With `params.adaptive`, a failed step is retried
/// once as two steps of size `k/2`.
pub fn picard_step(prev: &State, potential: &Potential, params: &SimParams) -> Result<(State, PicardReport)> {
    let step = prev.step + 1;
    match picard_iterate(prev, potential, params, params.k, step) {
        Ok((mut state, report)) => {
            state.time = step as f64 * params.k;
            Ok((state, report))
        }
        Err(_) if params.adaptive => {
            let half = 0.5 * params.k;
            let (mid, r1) = picard_iterate(prev, potential, params, half, step)?;
            let (mut state, r2) = picard_iterate(&mid, potential, params, half, step)?;
            state.time = step as f64 * params.k;
            state.z_prev_max = prev.z.max();
            let residuals = EquationResiduals {
                n: r1.residuals.n.max(r2.residuals.n),
                z: r1.residuals.z.max(r2.residuals.z),
                momentum: r1.residuals.momentum.max(r2.residuals.momentum),
                divergence: r1.residuals.divergence.max(r2.residuals.divergence),
            };
            let report = PicardReport {
                iterations: r1.iterations + r2.iterations,
                final_change: r2.final_change,
                converged: true,
                halved: true,
                residuals,
            };
            Ok((state, report))
        }
        Err(e) => Err(e),
    }
}

/// A running simulation: current state plus the cumulative ledger sums.
#[derive(Debug, Clone)]
pub struct Simulation {
    params: SimParams,
    potential: Potential,
    state: State,
    limits: LedgerLimits,
    cum_z_increments: f64,
    grad_z_l2_sq: f64,
}

impl Simulation {
    pub fn new(initial: State, params: SimParams) -> Result<Self> {
        params.validate()?;
        let potential = params.potential.evaluate(initial.grid())?;
        let limits = LedgerLimits::new(&initial, &params);
        Ok(Self { params, potential, state: initial, limits, cum_z_increments: 0.0, grad_z_l2_sq: 0.0 })
    }

    /// Continues a run from `state` with the running sums recovered from
    /// the last diagnostics record and the original ledger limits.
    pub fn resume(state: State, params: SimParams, limits: LedgerLimits, cum_z_increments: f64, grad_z_l2_sq: f64) -> Result<Self> {
        params.validate()?;
        let potential = params.potential.evaluate(state.grid())?;
        Ok(Self { params, potential, state, limits, cum_z_increments, grad_z_l2_sq })
    }

    pub fn state(&self) -> &State {
        &self.state
    }

    pub fn params(&self) -> &SimParams {
        &self.params
    }

    pub fn potential(&self) -> &Potential {
        &self.potential
    }

    pub fn limits(&self) -> &LedgerLimits {
        &self.limits
    }

    pub fn cumulative(&self) -> (f64, f64) {
        (self.cum_z_increments, self.grad_z_l2_sq)
    }

    /// Record of the current state as if it were the start of a run.
    pub fn initial_record(&self) -> DiagnosticsRecord {
        make_record(&self.state, &self.params, self.cum_z_increments, self.grad_z_l2_sq, 0, 0.0)
    }

    /// Advances one step and returns its diagnostics record.
    pub fn step(&mut self) -> Result<(DiagnosticsRecord, PicardReport)> {
        let (next, report) = picard_step(&self.state, &self.potential, &self.params)?;
        let vol = next.grid().cell_volume();
        let incr: f64 = next.z.values().iter().zip(self.state.z.values()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() * vol;
        self.cum_z_increments += incr;
        self.grad_z_l2_sq += self.params.k * crate::ops::dirichlet_energy(&next.z);
        self.state = next;
        let record = make_record(&self.state, &self.params, self.cum_z_increments, self.grad_z_l2_sq, report.iterations, report.residuals.max());
        Ok((record, report))
    }
}
