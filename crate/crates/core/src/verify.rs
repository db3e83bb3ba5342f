//! Property suite: randomized checks of the scalar building blocks, dense
//! oracles for every linear solve, refinement studies and the invariant
//! ledgers of full runs. Shared by the `check` subcommand and the
//! acceptance tests.

use std::f64::consts::PI;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::parse_config;
use crate::diagnostics::{ledger_check, DiagnosticsRecord, LedgerCheck, LedgerLimits, LedgerReport};
use crate::error::Result;
use crate::fluid::{coupled_solve, neumann_poisson, FluidSubstepInput, MomentumOperator};
use crate::grid::{FaceVectorField, Grid, ScalarField};
use crate::io::csv_row;
use crate::linsolve::{assemble, bicgstab_solve, cg_solve, FnOperator, LinearOperator};
use crate::ops::{divergence_of_fluxes, gradient_at_faces, laplacian_neumann};
use crate::params::{AdvectionScheme, NTransport, PotentialSpec, SimParams};
use crate::scalar::{HelmholtzOperator, TransportOperator};
use crate::stepper::{init_state, Simulation, State};
use crate::truncation::{comparison_holds, g0m, g0m_prime, gronwall_bound, t0m, t_alpha, TruncParams};

/// Problem sizes of the suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    /// Reference sizes (64² runs, `T = 50` energy runs, 10⁶ samples).
    Full,
    /// Reduced sizes for a fast smoke pass.
    Quick,
}

/// Result of one named check.
#[derive(Debug, Clone)]
pub struct Outcome {
    /// Criterion number in the suite (1–11) or 0 for auxiliary checks.
    pub id: u32,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl std::fmt::Display for Outcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{verdict} [{:>2}] {} ({:.2}s): {}", self.id, self.name, self.seconds, self.detail)
    }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let t = Instant::now();
    let out = f();
    (out, t.elapsed().as_secs_f64())
}

fn outcome(id: u32, name: &'static str, passed: bool, detail: String, seconds: f64, limit: Option<f64>) -> Outcome {
    match limit {
        Some(l) if seconds > l => Outcome { id, name, passed: false, detail: format!("{detail}; runtime {seconds:.1}s exceeds {l}s"), seconds },
        _ => Outcome { id, name, passed, detail, seconds },
    }
}

// ---------------------------------------------------------------------------
// scalar building blocks

/// Randomized checks of the truncations, the C¹ regularity of `G_0^m`, the
/// identity `G' = T x^{s-2}` and the comparison inequality. Returns the
/// number of samples and failures.
pub fn truncation_checks(samples: usize, seed: u64) -> (usize, Vec<String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = Vec::new();
    let mut fail = |msg: String| {
        if failures.len() < 10 {
            failures.push(msg);
        }
    };
    let mut count = 0;
    for _ in 0..samples {
        let x: f64 = rng.gen_range(-5.0..50.0);
        let alpha: f64 = rng.gen_range(1e-3..1.0);
        let m: f64 = rng.gen_range(1e-3..=10.0);
        let s: f64 = rng.gen_range(1.0 + 1e-6..=6.0);
        let q: f64 = rng.gen_range(1.0..=s);

        // branch definitions
        let ta = t_alpha(x, alpha);
        if ta != if x <= alpha { alpha } else { x } {
            fail(format!("t_alpha({x}, {alpha}) = {ta}"));
        }
        let tm = t0m(x, m);
        if tm != x.clamp(0.0, m) {
            fail(format!("t0m({x}, {m}) = {tm}"));
        }
        let g = g0m(x, m, s);
        // closed forms; above m the two terms cancel, so the tolerance
        // scales with their size
        let (g_ref, g_scale) = if x <= 0.0 {
            (0.0, 1.0)
        } else if x <= m {
            (x.powf(s) / s, (x.powf(s) / s).max(1.0))
        } else {
            let big = m * x.powf(s - 1.0) / (s - 1.0);
            (big - m.powf(s) / (s * (s - 1.0)), big.max(1.0))
        };
        if (g - g_ref).abs() > 1e-14 * g_scale {
            fail(format!("g0m({x}, {m}, {s}) = {g}, expected {g_ref}"));
        }
        // identity G' = T x^{s-2}
        let gp = g0m_prime(x, m, s);
        let gp_ref = if x > 0.0 { tm * x.powf(s - 2.0) } else { 0.0 };
        if (gp - gp_ref).abs() > 1e-13 * gp_ref.abs().max(1.0) {
            fail(format!("g0m_prime({x}, {m}, {s}) = {gp}, expected {gp_ref}"));
        }
        // identity against a centered difference, away from the kinks
        let xp = rng.gen_range(1e-3..20.0);
        if (xp - m).abs() > 1e-3 {
            let h = 1e-6 * xp.max(1.0);
            let fd = (g0m(xp + h, m, s) - g0m(xp - h, m, s)) / (2.0 * h);
            let exact = g0m_prime(xp, m, s);
            if (fd - exact).abs() > 1e-6 * exact.abs().max(1.0) {
                fail(format!("G' mismatch at x={xp}, m={m}, s={s}: fd {fd} vs {exact}"));
            }
        }
        // comparison inequality
        if !comparison_holds(x, s, q, m) {
            fail(format!("comparison fails at x={x}, s={s}, q={q}, m={m}"));
        }
        count += 1;
    }
    // C¹ at the kinks: one-sided difference quotients agree
    for _ in 0..1000 {
        let m: f64 = rng.gen_range(1e-2..=10.0);
        let s: f64 = rng.gen_range(1.0 + 1e-3..=6.0);
        for kink in [0.0, m] {
            let h = 1e-7 * m.max(1.0);
            let left = (g0m(kink, m, s) - g0m(kink - h, m, s)) / h;
            let right = (g0m(kink + h, m, s) - g0m(kink, m, s)) / h;
            let scale = g0m_prime(kink, m, s).abs().max(1.0);
            // the right quotient at 0 is h^{s-1}/s, small only when h^{s-1} is
            let slack = if kink == 0.0 { h.powf(s - 1.0) } else { 0.0 };
            if (right - left).abs() > 1e-6 * scale + slack {
                fail(format!("g0m not C1 at {kink} (m={m}, s={s}): {left} vs {right}"));
            }
        }
        count += 1;
    }
    (count, failures)
}

/// Closed-form discrete Gronwall bound against direct iteration (equality
/// case) and against random sequences satisfying the inequality strictly.
pub fn gronwall_checks(draws: usize, seed: u64) -> (f64, Vec<String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    for _ in 0..draws {
        let a0: f64 = rng.gen_range(0.0..10.0);
        let lambda: f64 = rng.gen_range(1e-2..10.0);
        let c: f64 = rng.gen_range(0.0..10.0);
        let k: f64 = rng.gen_range(1e-3..1.0);
        let n: u64 = rng.gen_range(1..=200);
        let mut a = a0;
        let mut b = a0;
        for j in 1..=n {
            a = (a + k * c) / (1.0 + lambda * k);
            // strict inequality: a source smaller than c
            let slack: f64 = rng.gen_range(1e-6..1.0) * c.max(1e-3);
            b = (b + k * (c - slack)) / (1.0 + lambda * k);
            let bound_j = gronwall_bound(a0, lambda, c, k, j);
            if !(b < bound_j) && failures.len() < 10 {
                failures.push(format!("inequality sequence {b} exceeds bound {bound_j} (j={j})"));
            }
        }
        let bound = gronwall_bound(a0, lambda, c, k, n);
        let rel = (a - bound).abs() / bound.abs().max(f64::MIN_POSITIVE);
        worst = worst.max(if bound == 0.0 && a == 0.0 { 0.0 } else { rel });
    }
    if worst > 1e-12 {
        failures.push(format!("equality case relative error {worst:.3e} > 1e-12"));
    }
    (worst, failures)
}

// ---------------------------------------------------------------------------
// linear solver oracles

fn dense_solve(op: &dyn LinearOperator, rhs: &[f64]) -> Option<Vec<f64>> {
    let n = op.len();
    let a = DMatrix::from_row_slice(n, n, &assemble(op));
    a.lu().solve(&DVector::from_column_slice(rhs)).map(|x| x.as_slice().to_vec())
}

fn max_rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
}

fn random_vec(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn random_velocity(grid: &Grid, rng: &mut impl Rng, amp: f64) -> FaceVectorField {
    let mut u = FaceVectorField::from_fn(grid, |_, _| rng.gen_range(-amp..amp));
    u.set_boundary_zero();
    u
}

/// Krylov solutions of every assembled operator against dense LU solves.
/// Returns `(operator label, max relative difference)` pairs.
pub fn solver_oracles(seed: u64) -> Result<Vec<(String, f64)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grids = [Grid::new(2, &[16, 16], &[1.0, 1.0])?, Grid::new(2, &[7, 5], &[1.0, 0.6])?, Grid::new(3, &[4, 3, 5], &[1.0, 0.8, 1.2])?];
    let tol = 1e-13;
    let mut out = Vec::new();
    for grid in &grids {
        let tag = format!("{:?}", &grid.cells()[..grid.dim()]);
        let nc = grid.num_cells();
        let mut params = SimParams::new(TruncParams::new(0.1, 3.0, 1.5)?, 0.05);
        params.linsolve_tol = tol;

        // Neumann Poisson (mean-zero solution), dense oracle on -Δ + 11ᵀ
        let mut b = random_vec(&mut rng, nc);
        let mean = b.iter().sum::<f64>() / nc as f64;
        b.iter_mut().for_each(|v| *v -= mean);
        let (x, _) = neumann_poisson(&ScalarField::from_values(grid, b.clone())?, None, tol, 20 * nc)?;
        let g = *grid;
        let pinned = FnOperator::new(nc, move |x: &[f64], y: &mut [f64]| {
            let lap = laplacian_neumann(&ScalarField::from_values(&g, x.to_vec()).expect("length"));
            let sum: f64 = x.iter().sum();
            for (yi, li) in y.iter_mut().zip(lap.values()) {
                *yi = -li + sum;
            }
        });
        let dense = dense_solve(&pinned, &b).expect("pinned Laplacian is regular");
        out.push((format!("poisson {tag}"), max_rel_diff(x.values(), &dense)));

        // Helmholtz z operator with a random density
        let n_bar = ScalarField::from_fn(grid, |_| rng.gen_range(0.0..5.0));
        let op = HelmholtzOperator::new(&n_bar, &params);
        let b = random_vec(&mut rng, nc);
        let mut x = vec![0.0; nc];
        cg_solve(&op, &b, &mut x, tol, 20 * nc)?;
        out.push((format!("helmholtz {tag}"), max_rel_diff(&x, &dense_solve(&op, &b).expect("SPD"))));

        // transport operators, all variants
        let u = random_velocity(grid, &mut rng, 2.0);
        for (scheme, transport) in [
            (AdvectionScheme::Upwind, NTransport::Conservative),
            (AdvectionScheme::Central, NTransport::Conservative),
            (AdvectionScheme::Upwind, NTransport::NonConservative),
        ] {
            let mut p = params.clone();
            p.advection = scheme;
            p.n_transport = transport;
            let op = TransportOperator::new(&u, &p);
            let mut x = vec![0.0; nc];
            bicgstab_solve(&op, &b, &mut x, tol, 20 * nc)?;
            out.push((format!("transport {scheme:?}/{transport:?} {tag}"), max_rel_diff(&x, &dense_solve(&op, &b).expect("regular"))));
        }

        // momentum operator
        let op = MomentumOperator::new(&u, params.k, AdvectionScheme::Upwind);
        let bu = random_velocity(grid, &mut rng, 1.0).flatten();
        let mut x = vec![0.0; op.len()];
        bicgstab_solve(&op, &bu, &mut x, tol, 20 * op.len())?;
        out.push((format!("momentum {tag}"), max_rel_diff(&x, &dense_solve(&op, &bu).expect("regular"))));

        // coupled velocity-pressure system
        let n_bar = ScalarField::from_fn(grid, |_| rng.gen_range(0.0..3.0));
        let phi = ScalarField::from_fn(grid, |x| x[0] * x[0] - 0.5 * x[1] + x[2]);
        let grad_phi = gradient_at_faces(&phi);
        let input = FluidSubstepInput { u_prev: &u, n_bar: &n_bar, grad_phi: &grad_phi, params: &params };
        let sol = coupled_solve(&input, &FaceVectorField::zeros(grid), &ScalarField::zeros(grid))?;
        let (dense_u, dense_p) = dense_saddle(&input)?;
        let du = max_rel_diff(&sol.u.flatten(), &dense_u);
        let dp = max_rel_diff(sol.p.values(), &dense_p);
        out.push((format!("coupled fluid {tag}"), du.max(dp)));
    }
    Ok(out)
}

/// Dense solve of `A u + ∇p = f`, `div u + mean(p) = 0` assembled from the
/// public operators.
fn dense_saddle(input: &FluidSubstepInput) -> Result<(Vec<f64>, Vec<f64>)> {
    let grid = *input.n_bar.grid();
    let p = input.params;
    let mom = MomentumOperator::new(input.u_prev, p.k, p.advection);
    let nu = mom.len();
    let nc = grid.num_cells();
    let rhs = crate::fluid::momentum_rhs(input.n_bar, input.grad_phi, input.u_prev, p.k, &p.trunc);
    let op = FnOperator::new(nu + nc, |x: &[f64], y: &mut [f64]| {
        let (xu, xp) = x.split_at(nu);
        let (yu, yp) = y.split_at_mut(nu);
        mom.apply(xu, yu);
        let mut grad = gradient_at_faces(&ScalarField::from_values(&grid, xp.to_vec()).expect("length"));
        grad.set_boundary_zero();
        for (yi, gi) in yu.iter_mut().zip(grad.flatten()) {
            *yi += gi;
        }
        let div = divergence_of_fluxes(&FaceVectorField::from_flat(&grid, xu).expect("length"));
        let mean = xp.iter().sum::<f64>() / nc as f64;
        for (yi, di) in yp.iter_mut().zip(div.values()) {
            *yi = di + mean;
        }
    });
    let mut b = rhs.flatten();
    b.resize(nu + nc, 0.0);
    let x = dense_solve(&op, &b).ok_or_else(|| crate::Error::Grid("singular saddle system".into()))?;
    Ok((x[..nu].to_vec(), x[nu..].to_vec()))
}

// ---------------------------------------------------------------------------
// spatial refinement

/// Observed orders `log2(e_h / e_{h/2})` of consecutive error pairs.
pub fn observed_orders(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

fn cos_mode(grid: &Grid) -> (ScalarField, f64) {
    let len = grid.lengths();
    let dim = grid.dim();
    let field = ScalarField::from_fn(grid, |x| (0..dim).map(|a| (PI * x[a] / len[a]).cos()).product::<f64>());
    let eig: f64 = (0..dim).map(|a| (PI / len[a]).powi(2)).sum();
    (field, eig)
}

/// Max-norm errors of the Neumann Laplacian and of the heat sub-solve
/// `(1/k - Δ) n = f` for a cosine mode, on each grid.
pub fn spatial_errors(grids: &[Grid], k: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut lap_err = Vec::new();
    let mut heat_err = Vec::new();
    for grid in grids {
        let (f, eig) = cos_mode(grid);
        let lap = laplacian_neumann(&f);
        lap_err.push(lap.values().iter().zip(f.values()).fold(0.0f64, |m, (l, v)| m.max((l + eig * v).abs())));

        let mut params = SimParams::new(TruncParams::with_defaults(2.0)?, k);
        params.linsolve_tol = 1e-13;
        let zero = FaceVectorField::zeros(grid);
        let op = TransportOperator::new(&zero, &params);
        let rhs: Vec<f64> = f.values().iter().map(|v| (1.0 / k + eig) * v).collect();
        let mut x = vec![0.0; grid.num_cells()];
        bicgstab_solve(&op, &rhs, &mut x, 1e-13, 20 * grid.num_cells())?;
        heat_err.push(x.iter().zip(f.values()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())));
    }
    Ok((lap_err, heat_err))
}

// ---------------------------------------------------------------------------
// runs

/// Positive root of the constant-state `z` recursion
/// `z (1/k + a) - z_prev/k - a α²/z = 0` with `a = (s/2) G(n)`.
pub fn homogeneous_z_step(z_prev: f64, n: f64, trunc: &TruncParams, k: f64) -> f64 {
    let a = 0.5 * trunc.s() * trunc.g0m(n);
    let alpha = trunc.alpha();
    let qa = 1.0 / k + a;
    let qb = -z_prev / k;
    let qc = -a * alpha * alpha;
    (-qb + (qb * qb - 4.0 * qa * qc).sqrt()) / (2.0 * qa)
}

/// Spatially constant run: maximum per-step deviation from the scalar
/// recursion, error of the final `c` against `c₀ e^{-n₀^s T}`, and the
/// largest equation residual.
#[derive(Debug, Clone, Copy)]
pub struct HomogeneousRun {
    pub recursion_dev: f64,
    pub final_error: f64,
    pub max_residual: f64,
    pub residual_limit: f64,
}

///
/// Picard and Krylov tolerances are tightened so that the per-step
/// comparison measures the scheme rather than the stopping criteria.
pub fn homogeneous_run(n0: f64, c0: f64, trunc: TruncParams, k: f64, t_end: f64, cells: usize) -> Result<HomogeneousRun> {
    let grid = Grid::cube(2, cells, 1.0)?;
    let mut params = SimParams::new(trunc, k);
    params.t_end = t_end;
    params.picard_tol = 1e-12;
    params.linsolve_tol = 1e-13;
    let st = init_state(ScalarField::constant(&grid, n0), &ScalarField::constant(&grid, c0), FaceVectorField::zeros(&grid), &params)?;
    let mut zs = st.z.values()[0];
    let mut sim = Simulation::new(st, params.clone())?;
    let mut dev: f64 = 0.0;
    let mut max_residual: f64 = 0.0;
    for _ in 0..params.num_steps() {
        let (rec, _) = sim.step()?;
        zs = homogeneous_z_step(zs, n0, &params.trunc, k);
        let st = sim.state();
        let dz = st.z.values().iter().fold(0.0f64, |m, z| m.max((z - zs).abs()));
        let dn = st.n.values().iter().fold(0.0f64, |m, n| m.max((n - n0).abs()));
        dev = dev.max(dz).max(dn);
        max_residual = max_residual.max(rec.max_eq_residual);
    }
    let alpha = params.trunc.alpha();
    let c_final = sim.state().z.values()[0].powi(2) - alpha * alpha;
    let exact = c0 * (-n0.powf(trunc.s()) * sim.state().time).exp();
    Ok(HomogeneousRun { recursion_dev: dev, final_error: (c_final - exact).abs(), max_residual, residual_limit: residual_limit(&params) })
}

/// A run of the reference scenario: Gaussian `n⁰` centred in the unit
/// square, `c⁰ ≡ 1`, `u⁰ = 0`, gravity-like linear potential.
#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub records: Vec<DiagnosticsRecord>,
    pub limits: LedgerLimits,
    pub ledger: LedgerReport,
    pub max_n: f64,
    pub max_residual: f64,
    /// First error, if the run stopped early.
    pub error: Option<String>,
}

impl ScenarioRun {
    pub fn mass_drift(&self) -> f64 {
        let m0 = self.records[0].mass_n;
        self.records.iter().fold(0.0f64, |m, r| m.max((r.mass_n - m0).abs())) / m0.abs().max(f64::MIN_POSITIVE)
    }

    pub fn finite(&self) -> bool {
        self.records.iter().all(|r| csv_row(r).split(',').all(|t| t.parse::<f64>().is_ok_and(f64::is_finite)))
    }
}

pub fn scenario_params(s: f64, m: f64, k: f64, steps: u64) -> Result<SimParams> {
    let alpha = TruncParams::with_defaults(s)?.alpha();
    let mut params = SimParams::new(TruncParams::new(alpha, m, s)?, k);
    params.t_end = steps as f64 * k;
    params.potential = PotentialSpec::Linear(vec![0.0, -1.0]);
    Ok(params)
}

pub fn scenario_state(cells: usize, params: &SimParams) -> Result<State> {
    let grid = Grid::cube(2, cells, 1.0)?;
    let n0 = ScalarField::from_fn(&grid, |x| 4.0 * (-((x[0] - 0.5).powi(2) + (x[1] - 0.5).powi(2)) / 0.02).exp());
    init_state(n0, &ScalarField::constant(&grid, 1.0), FaceVectorField::zeros(&grid), params)
}

pub fn run_scenario(cells: usize, params: &SimParams) -> Result<ScenarioRun> {
    let initial = scenario_state(cells, params)?;
    let mut max_n = initial.n.max();
    let mut sim = Simulation::new(initial, params.clone())?;
    let mut records = vec![sim.initial_record()];
    let mut max_residual: f64 = 0.0;
    let mut error = None;
    for _ in 0..params.num_steps() {
        match sim.step() {
            Ok((rec, _)) => {
                max_residual = max_residual.max(rec.max_eq_residual);
                max_n = max_n.max(sim.state().n.max());
                records.push(rec);
            }
            Err(e) => {
                error = Some(e.to_string());
                break;
            }
        }
    }
    let limits = *sim.limits();
    let ledger = ledger_check(&records, &limits);
    Ok(ScenarioRun { records, limits, ledger, max_n, max_residual, error })
}

// ---------------------------------------------------------------------------
// the suite

fn residual_limit(p: &SimParams) -> f64 {
    10.0 * (p.picard_tol + p.linsolve_tol)
}

fn fmt_failures(f: &[String]) -> String {
    if f.is_empty() {
        String::new()
    } else {
        format!("; first failures: {}", f.join(" | "))
    }
}

fn ledger_detail(run: &ScenarioRun, check: LedgerCheck) -> String {
    run.ledger
        .violations
        .iter()
        .find(|v| v.check == check)
        .map(|v| format!("violated at step {}: {:.6e} > {:.6e}", v.step, v.value, v.limit))
        .unwrap_or_else(|| "ok".into())
}

fn crit_truncation(scale: Scale) -> Outcome {
    let samples = if scale == Scale::Full { 1_000_000 } else { 100_000 };
    let ((count, failures), secs) = timed(|| truncation_checks(samples, 1));
    outcome(1, "truncation suite", failures.is_empty(), format!("{count} samples, {} failures{}", failures.len(), fmt_failures(&failures)), secs, Some(10.0))
}

fn crit_gronwall() -> Outcome {
    let ((worst, failures), secs) = timed(|| gronwall_checks(1000, 2));
    outcome(2, "discrete Gronwall", failures.is_empty(), format!("1000 draws, equality-case rel. error {worst:.2e}{}", fmt_failures(&failures)), secs, Some(5.0))
}

fn crit_homogeneous(scale: Scale) -> (Outcome, (f64, f64)) {
    let cells = if scale == Scale::Full { 8 } else { 4 };
    let (res, secs) = timed(|| -> Result<Vec<HomogeneousRun>> { [4e-2, 2e-2, 1e-2].iter().map(|&k| homogeneous_run(1.0, 1.0, TruncParams::with_defaults(2.0)?, k, 1.0, cells)).collect() });
    match res {
        Ok(runs) => {
            let dev = runs.iter().fold(0.0f64, |m, r| m.max(r.recursion_dev));
            let errs: Vec<f64> = runs.iter().map(|r| r.final_error).collect();
            let orders = observed_orders(&errs);
            let resid = runs.iter().fold(0.0f64, |m, r| m.max(r.max_residual));
            let limit = runs[0].residual_limit;
            let ok = dev <= 1e-9 && orders.iter().all(|o| (0.8..=1.2).contains(o));
            let errs_txt = errs.iter().map(|e| format!("{e:.3e}")).collect::<Vec<_>>().join(", ");
            let detail = format!("recursion deviation {dev:.2e}, final-c errors [{errs_txt}], temporal orders {orders:.3?}");
            (outcome(6, "homogeneous consumption oracle", ok, detail, secs, Some(30.0)), (resid, limit))
        }
        Err(e) => (outcome(6, "homogeneous consumption oracle", false, format!("error: {e}"), secs, None), (f64::INFINITY, 0.0)),
    }
}

fn crit_m_inactivity(scale: Scale) -> Outcome {
    let (cells, steps) = if scale == Scale::Full { (32, 50) } else { (16, 20) };
    let (res, secs) = timed(|| -> Result<(ScenarioRun, ScenarioRun)> {
        Ok((run_scenario(cells, &scenario_params(2.0, 10.0, 1e-2, steps)?)?, run_scenario(cells, &scenario_params(2.0, 1000.0, 1e-2, steps)?)?))
    });
    match res {
        Ok((a, b)) => {
            let rows = |r: &ScenarioRun| r.records.iter().map(csv_row).collect::<Vec<_>>();
            let same = rows(&a) == rows(&b);
            let max_n = a.max_n.max(b.max_n);
            let ok = same && max_n < 10.0 && a.error.is_none() && b.error.is_none();
            outcome(8, "m-inactivity", ok, format!("max n {max_n:.4}, CSV rows identical: {same}"), secs, None)
        }
        Err(e) => outcome(8, "m-inactivity", false, format!("error: {e}"), secs, None),
    }
}

fn crit_spatial() -> Outcome {
    let (res, secs) = timed(|| -> Result<(Vec<f64>, Vec<f64>)> {
        let grids: Vec<Grid> = [16, 32, 64].iter().map(|&n| Grid::cube(2, n, 1.0)).collect::<Result<_>>()?;
        spatial_errors(&grids, 1.0)
    });
    match res {
        Ok((lap, heat)) => {
            let lo = observed_orders(&lap);
            let ho = observed_orders(&heat);
            let ok = lo.iter().chain(&ho).all(|&o| o >= 1.8);
            outcome(9, "spatial MMS", ok, format!("Laplacian orders {lo:.3?}, heat sub-solve orders {ho:.3?}"), secs, Some(60.0))
        }
        Err(e) => outcome(9, "spatial MMS", false, format!("error: {e}"), secs, None),
    }
}

fn crit_solvers() -> Outcome {
    let (res, secs) = timed(|| solver_oracles(3));
    match res {
        Ok(list) => {
            let worst = list.iter().cloned().fold((String::new(), 0.0f64), |acc, (l, d)| if d > acc.1 { (l, d) } else { acc });
            outcome(10, "solver oracles", worst.1 <= 1e-8, format!("{} operator solves, worst {:.2e} ({})", list.len(), worst.1, worst.0), secs, None)
        }
        Err(e) => outcome(10, "solver oracles", false, format!("error: {e}"), secs, None),
    }
}

fn config_round_trip() -> Outcome {
    let text = "grid.cells = 12 10\ngrid.lengths = 1.5 1\nparams.s = 1.5\nparams.k = 0.02\nparams.t_end = 1\nparams.alpha = 0.25\n\
                initial.n0 = gaussian(0.7, 0.5, 0.2, 3)\ninitial.c0 = constant(0.5)\ninitial.u0 = vortex(0.1)\npotential.phi = linear(0.5, -1)\n";
    let (res, secs) = timed(|| -> Result<bool> {
        let cfg = parse_config(text)?;
        Ok(parse_config(&cfg.to_string())? == cfg)
    });
    match res {
        Ok(ok) => outcome(0, "config round-trip", ok, format!("reparsed config equal: {ok}"), secs, None),
        Err(e) => outcome(0, "config round-trip", false, format!("error: {e}"), secs, None),
    }
}

/// Runs every check at the given scale; independent groups run on
/// separate threads. Outcomes are ordered by criterion.
pub fn run_suite(scale: Scale) -> Vec<Outcome> {
    let full = scale == Scale::Full;
    let (cells, steps) = if full { (64, 200) } else { (32, 50) };
    let (long_cells, long_t) = if full { (64, 50.0) } else { (32, 5.0) };
    let long_k = 0.05;

    let (mut fast, scenario, long) = std::thread::scope(|scope| {
        let fast = scope.spawn(|| {
            let mut v = vec![crit_truncation(scale), crit_gronwall(), crit_spatial(), crit_solvers(), crit_m_inactivity(scale), config_round_trip()];
            let (hom, resid) = crit_homogeneous(scale);
            v.push(hom);
            (v, resid)
        });
        let scenario = scope.spawn(move || timed(|| scenario_params(2.0, 1e6, 1e-2, steps).and_then(|p| Ok((run_scenario(cells, &p)?, p)))));
        let long: Vec<_> = [1.5, 3.0]
            .into_iter()
            .map(|s| {
                scope.spawn(move || {
                    timed(|| {
                        let p = scenario_params(s, 1e6, long_k, (long_t / long_k) as u64)?;
                        Ok::<_, crate::Error>((run_scenario(long_cells, &p)?, p))
                    })
                })
            })
            .collect();
        let long: Vec<_> = long.into_iter().map(|h| h.join().expect("long run thread")).collect();
        (fast.join().expect("fast checks thread"), scenario.join().expect("scenario thread"), long)
    });

    let (mut outcomes, hom_resid) = (std::mem::take(&mut fast.0), fast.1);
    let mut residuals: Vec<(String, f64, f64)> = vec![("homogeneous".into(), hom_resid.0, hom_resid.1)];

    let (scen, secs) = scenario;
    match scen {
        Ok((run, p)) => {
            let stopped = run.error.clone().map(|e| format!("; run stopped: {e}")).unwrap_or_default();
            let ok_run = run.error.is_none();
            let drift = run.mass_drift();
            outcomes.push(outcome(3, "mass conservation", ok_run && drift <= 1e-10, format!("{cells}², {} steps, relative drift {drift:.2e}{stopped}", run.records.len() - 1), secs, Some(120.0)));
            let zb = [LedgerCheck::MinZ, LedgerCheck::MaxZ, LedgerCheck::ZL2];
            let ok = ok_run && zb.iter().all(|&c| run.ledger.passed(c));
            let detail = zb.iter().map(|&c| format!("{}: {}", c.name(), ledger_detail(&run, c))).collect::<Vec<_>>().join(", ");
            let last = run.records.last().expect("records");
            outcomes.push(outcome(4, "pointwise z-bounds and z-L2 ledger", ok, format!("{detail}; final min z {:.6}, max z {:.6}", last.min_z, last.max_z), 0.0, None));
            outcomes.push(outcome(
                5,
                "gradient ledger",
                ok_run && run.ledger.passed(LedgerCheck::GradZ),
                format!("k Σ‖∇z‖² = {:.6e} ≤ {:.6e}: {}", last.grad_z_l2_sq, run.limits.grad_z_bound + 1e-8, ledger_detail(&run, LedgerCheck::GradZ)),
                0.0,
                None,
            ));
            residuals.push((format!("mass run s={}", p.trunc.s()), run.max_residual, residual_limit(&p)));
        }
        Err(e) => {
            for (id, name) in [(3, "mass conservation"), (4, "pointwise z-bounds and z-L2 ledger"), (5, "gradient ledger")] {
                outcomes.push(outcome(id, name, false, format!("error: {e}"), secs, None));
            }
        }
    }

    let mut energy_ok = true;
    let mut energy_detail = Vec::new();
    let mut energy_secs: f64 = 0.0;
    for (res, secs) in long {
        energy_secs = energy_secs.max(secs);
        match res {
            Ok((run, p)) => {
                let s = p.trunc.s();
                let ok = run.error.is_none() && run.finite() && run.ledger.passed(LedgerCheck::Energy);
                energy_ok &= ok;
                let later = &run.records[1..];
                let half = later.len() / 2;
                let sup = |rs: &[DiagnosticsRecord]| rs.iter().map(|r| r.energy_a).fold(f64::NEG_INFINITY, f64::max);
                let stopped = run.error.clone().map(|e| format!(" stopped: {e}")).unwrap_or_default();
                energy_detail.push(format!(
                    "s={s}: a0 {:.6}, sup first half {:.6}, sup second half {:.6}{stopped}",
                    run.records[0].energy_a,
                    sup(&later[..half]),
                    sup(&later[half..])
                ));
                residuals.push((format!("energy run s={s}"), run.max_residual, residual_limit(&p)));
            }
            Err(e) => {
                energy_ok = false;
                energy_detail.push(format!("error: {e}"));
            }
        }
    }
    outcomes.push(outcome(7, "uniform-in-time energy", energy_ok, format!("{long_cells}², T = {long_t}, k = {long_k}; {}", energy_detail.join("; ")), energy_secs, None));

    let resid_ok = residuals.iter().all(|(_, r, l)| r <= l);
    let detail = residuals.iter().map(|(n, r, l)| format!("{n}: {r:.2e} (limit {l:.1e})")).collect::<Vec<_>>().join(", ");
    outcomes.push(outcome(11, "fixed-point residual", resid_ok, detail, 0.0, None));

    outcomes.sort_by_key(|o| if o.id == 0 { u32::MAX } else { o.id });
    outcomes
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truncation_checks_small_sample() {
        let (count, failures) = truncation_checks(20_000, 9);
        assert!(count >= 20_000);
        assert!(failures.is_empty(), "{failures:?}");
    }

    #[test]
    fn gronwall_checks_pass() {
        let (worst, failures) = gronwall_checks(200, 5);
        assert!(failures.is_empty(), "{failures:?}");
        assert!(worst <= 1e-12);
    }

    #[test]
    fn observed_orders_of_geometric_sequence() {
        let o = observed_orders(&[1.0, 0.25, 0.0625]);
        assert_eq!(o, vec![2.0, 2.0]);
    }

    #[test]
    fn homogeneous_step_is_fixed_point_of_scalar_equation() {
        let t = TruncParams::new(0.1, 100.0, 2.0).unwrap();
        let (zp, n, k) = (1.3, 0.9, 0.05);
        let z = homogeneous_z_step(zp, n, &t, k);
        let a = 0.5 * t.s() * t.g0m(n);
        assert!((z * (1.0 / k + a) - zp / k - a * 0.01 / z).abs() < 1e-12);
    }
}
