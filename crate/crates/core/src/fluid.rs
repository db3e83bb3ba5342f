//! Velocity/pressure sub-solve of one Picard iteration.
//!
//! The momentum operator `u/k + (u_prev · ∇) u - Δu` acts on the MAC face
//! velocities with no-slip walls. Convection is written in flux form over the
//! face control volumes with advecting velocities averaged from `u_prev`, and
//! the transported face velocity is chosen upwind, so the operator is linear
//! in the unknown and only adds dissipation.

use crate::error::{Result, SolveError};
use crate::grid::{FaceVectorField, Grid, ScalarField};
use crate::linsolve::{bicgstab_solve, bicgstab_solve_preconditioned, cg_solve, LinearOperator, NullSpace, SolveStats};
use crate::separable::{Axis1d, SeparableSolver};
use crate::ops::{divergence_raw, gradient_at_faces, laplacian_raw};
use crate::params::{AdvectionScheme, FluidSolver, SimParams};
use crate::truncation::TruncParams;

#[inline]
fn pick(scheme: AdvectionScheme, vel: f64, lo: f64, hi: f64) -> f64 {
    match scheme {
        AdvectionScheme::Upwind => {
            if vel > 0.0 {
                lo
            } else {
                hi
            }
        }
        AdvectionScheme::Central => 0.5 * (lo + hi),
    }
}

/// Vector Laplacian on the faces normal to `axis`, acting on one flat
/// component. Boundary faces are Dirichlet zeros; walls parallel to the
/// component use the mirrored ghost `-u`.
fn face_laplacian_component(grid: &Grid, axis: usize, x: &[f64], out: &mut [f64]) {
    let n = grid.cells();
    let h = grid.spacing();
    let dim = grid.dim();
    grid.for_each_face(axis, |f, pos| {
        if grid.is_boundary_face(axis, pos) {
            out[f] = 0.0;
            return;
        }
        let xf = x[f];
        let mut acc = 0.0;
        for b in 0..dim {
            let s = grid.face_stride(axis, b);
            let ih2 = 1.0 / (h[b] * h[b]);
            if b == axis {
                acc += (x[f - s] - 2.0 * xf + x[f + s]) * ih2;
            } else {
                let lo = if pos[b] > 0 { x[f - s] } else { -xf };
                let hi = if pos[b] + 1 < n[b] { x[f + s] } else { -xf };
                acc += (lo - 2.0 * xf + hi) * ih2;
            }
        }
        out[f] = acc;
    });
}

/// Vector Laplacian with no-slip walls; boundary faces of the result are zero.
pub fn vector_laplacian(u: &FaceVectorField) -> FaceVectorField {
    let grid = *u.grid();
    let mut out = FaceVectorField::zeros(&grid);
    for a in 0..grid.dim() {
        face_laplacian_component(&grid, a, u.component(a), out.component_mut(a));
    }
    out
}

/// Flux-form convection of one velocity component by `w` (the lagged velocity).
fn convection_component(grid: &Grid, w: &FaceVectorField, scheme: AdvectionScheme, axis: usize, x: &[f64], out: &mut [f64]) {
    let n = grid.cells();
    let h = grid.spacing();
    let dim = grid.dim();
    let wa = w.component(axis);
    let sa = grid.face_stride(axis, axis);
    grid.for_each_face(axis, |f, pos| {
        if grid.is_boundary_face(axis, pos) {
            out[f] = 0.0;
            return;
        }
        let mut acc = 0.0;
        // along the component's own axis: control-volume faces at cell centers
        let w_hi = 0.5 * (wa[f] + wa[f + sa]);
        let w_lo = 0.5 * (wa[f - sa] + wa[f]);
        let flux_hi = w_hi * pick(scheme, w_hi, x[f], x[f + sa]);
        let flux_lo = w_lo * pick(scheme, w_lo, x[f - sa], x[f]);
        acc += (flux_hi - flux_lo) / h[axis];
        // transverse directions: control-volume faces at edges
        let mut cell_lo = pos;
        cell_lo[axis] -= 1;
        for b in 0..dim {
            if b == axis {
                continue;
            }
            let wb = w.component(b);
            let sb = grid.face_stride(axis, b);
            let bs = grid.face_stride(b, b);
            let fb_here = grid.face_index(b, pos[0], pos[1], pos[2]);
            let fb_left = grid.face_index(b, cell_lo[0], cell_lo[1], cell_lo[2]);
            let mut flux_hi = 0.0;
            let mut flux_lo = 0.0;
            if pos[b] + 1 < n[b] {
                let v = 0.5 * (wb[fb_here + bs] + wb[fb_left + bs]);
                flux_hi = v * pick(scheme, v, x[f], x[f + sb]);
            }
            if pos[b] > 0 {
                let v = 0.5 * (wb[fb_here] + wb[fb_left]);
                flux_lo = v * pick(scheme, v, x[f - sb], x[f]);
            }
            acc += (flux_hi - flux_lo) / h[b];
        }
        out[f] = acc;
    });
}

/// `(u_prev · ∇) u` in flux form.
pub fn momentum_convection(u_prev: &FaceVectorField, u: &FaceVectorField, scheme: AdvectionScheme) -> FaceVectorField {
    let grid = *u.grid();
    let mut out = FaceVectorField::zeros(&grid);
    for a in 0..grid.dim() {
        convection_component(&grid, u_prev, scheme, a, u.component(a), out.component_mut(a));
    }
    out
}

/// `u/k + (u_prev · ∇) u - Δu` on the flattened face vector. Boundary rows
/// are the identity, so zero boundary data stays zero.
pub struct MomentumOperator<'a> {
    grid: Grid,
    u_prev: &'a FaceVectorField,
    inv_k: f64,
    scheme: AdvectionScheme,
    offsets: Vec<usize>,
    len: usize,
}

impl<'a> MomentumOperator<'a> {
    pub fn new(u_prev: &'a FaceVectorField, k: f64, scheme: AdvectionScheme) -> Self {
        let grid = *u_prev.grid();
        let mut offsets = Vec::with_capacity(grid.dim() + 1);
        let mut acc = 0;
        for a in 0..grid.dim() {
            offsets.push(acc);
            acc += grid.num_faces(a);
        }
        offsets.push(acc);
        Self { grid, u_prev, inv_k: 1.0 / k, scheme, offsets, len: acc }
    }
}

impl LinearOperator for MomentumOperator<'_> {
    fn len(&self) -> usize {
        self.len
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let grid = &self.grid;
        for a in 0..grid.dim() {
            let r = self.offsets[a]..self.offsets[a + 1];
            let xa = &x[r.clone()];
            let ya = &mut y[r];
            face_laplacian_component(grid, a, xa, ya);
            for v in ya.iter_mut() {
                *v = -*v;
            }
            let mut conv = vec![0.0; xa.len()];
            convection_component(grid, self.u_prev, self.scheme, a, xa, &mut conv);
            grid.for_each_face(a, |f, pos| {
                ya[f] = if grid.is_boundary_face(a, pos) { xa[f] } else { ya[f] + conv[f] + self.inv_k * xa[f] };
            });
        }
    }
}

/// Momentum source `T_0^m(n̄)_face ∇Φ_face + u_prev / k`; the density factor is
/// the centered average of the truncated cell values.
pub fn momentum_rhs(n_bar: &ScalarField, grad_phi: &FaceVectorField, u_prev: &FaceVectorField, k: f64, trunc: &TruncParams) -> FaceVectorField {
    let grid = *n_bar.grid();
    let nb = n_bar.values();
    let mut out = FaceVectorField::zeros(&grid);
    for a in 0..grid.dim() {
        let s = grid.cell_stride(a);
        let gp = grad_phi.component(a);
        let up = u_prev.component(a);
        let comp = out.component_mut(a);
        grid.for_each_face(a, |f, pos| {
            if grid.is_boundary_face(a, pos) {
                return;
            }
            let hi = grid.cell_index(pos[0], pos[1], pos[2]);
            let t = 0.5 * (trunc.t0m(nb[hi - s]) + trunc.t0m(nb[hi]));
            comp[f] = t * gp[f] + up[f] / k;
        });
    }
    out
}

/// Inputs of one velocity sub-solve.
#[derive(Debug, Clone, Copy)]
pub struct FluidSubstepInput<'a> {
    pub u_prev: &'a FaceVectorField,
    pub n_bar: &'a ScalarField,
    pub grad_phi: &'a FaceVectorField,
    pub params: &'a SimParams,
}

fn inner_tol(params: &SimParams) -> f64 {
    (params.linsolve_tol * 1e-2).max(1e-14)
}

/// Tentative velocity `u*` of the projection method: solves the momentum
/// equation without pressure, homogeneous Dirichlet walls.
pub fn momentum_solve(input: &FluidSubstepInput) -> Result<FaceVectorField> {
    let p = input.params;
    let rhs = momentum_rhs(input.n_bar, input.grad_phi, input.u_prev, p.k, &p.trunc);
    let op = MomentumOperator::new(input.u_prev, p.k, p.advection);
    let mut x = input.u_prev.flatten();
    bicgstab_solve(&op, &rhs.flatten(), &mut x, p.linsolve_tol, p.max_iter_for(op.len()))?;
    let mut u = FaceVectorField::from_flat(input.u_prev.grid(), &x)?;
    u.set_boundary_zero();
    Ok(u)
}

/// Neg. Neumann Laplacian `-Δ_h` on cells, SPD up to constants.
struct NegLaplacian {
    grid: Grid,
}

impl LinearOperator for NegLaplacian {
    fn len(&self) -> usize {
        self.grid.num_cells()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        laplacian_raw(&self.grid, x, y);
        y.iter_mut().for_each(|v| *v = -*v);
    }

    fn is_symmetric(&self) -> bool {
        true
    }

    fn null_space(&self) -> NullSpace {
        NullSpace::Constants
    }
}

/// Solves `-Δ_h φ = rhs` with zero-flux closure, mean of `φ` pinned to zero.
pub fn neumann_poisson(rhs: &ScalarField, guess: Option<&ScalarField>, tol: f64, max_iter: usize) -> Result<(ScalarField, SolveStats)> {
    let grid = *rhs.grid();
    let op = NegLaplacian { grid };
    let mut x = guess.map(|g| g.values().to_vec()).unwrap_or_else(|| vec![0.0; grid.num_cells()]);
    let stats = cg_solve(&op, rhs.values(), &mut x, tol, max_iter)?;
    Ok((ScalarField::from_values(&grid, x)?, stats))
}

/// Chorin projection: `Δφ = div(u*)/k`, `u = u* - k∇φ`, `p = φ` (mean zero).
///
/// The Poisson tolerance is tightened so that `‖div u‖₂ <= tol` in absolute
/// terms.
pub fn pressure_project(u_star: &FaceVectorField, k: f64, tol: f64, max_iter: Option<usize>) -> Result<(FaceVectorField, ScalarField)> {
    let grid = *u_star.grid();
    let mut div = vec![0.0; grid.num_cells()];
    divergence_raw(&grid, u_star.components(), &mut div);
    // the walls carry no flux, so the divergence sums to zero up to rounding
    let mean = div.iter().sum::<f64>() / div.len() as f64;
    div.iter_mut().for_each(|v| *v -= mean);
    let div_norm = div.iter().map(|v| v * v).sum::<f64>().sqrt();
    if div_norm <= 0.1 * tol {
        return Ok((u_star.clone(), ScalarField::zeros(&grid)));
    }
    // -Δφ = -div(u*)/k, compatible because the boundary faces carry no flux
    let rhs: Vec<f64> = div.iter().map(|v| -v / k).collect();
    let rhs = ScalarField::from_values(&grid, rhs)?;
    let rel_tol = (tol / div_norm).min(tol).max(1e-15);
    let max_iter = max_iter.unwrap_or(10 * grid.num_cells());
    let (phi, _) = neumann_poisson(&rhs, None, rel_tol, max_iter)?;
    let grad = gradient_at_faces(&phi);
    let mut u = u_star.clone();
    for a in 0..grid.dim() {
        let g = grad.component(a);
        for (v, gv) in u.component_mut(a).iter_mut().zip(g) {
            *v -= k * gv;
        }
    }
    u.set_boundary_zero();
    Ok((u, phi))
}

/// Result of a velocity/pressure sub-solve.
#[derive(Debug, Clone)]
pub struct FluidSolution {
    pub u: FaceVectorField,
    pub p: ScalarField,
}

/// The saddle-point system `[A G; w D  w·mean]` on `(u, p)`. The mean row
/// removes the constant pressure mode (every velocity with zero wall values
/// has zero total divergence) and `w = 1/k` balances the two row blocks.
struct SaddleOperator<'a> {
    grid: Grid,
    mom: &'a MomentumOperator<'a>,
    w: f64,
}

impl SaddleOperator<'_> {
    fn split<'b>(&self, x: &'b [f64]) -> (&'b [f64], &'b [f64]) {
        x.split_at(self.mom.len())
    }
}

fn add_pressure_gradient(grid: &Grid, p: &[f64], scale: f64, y: &mut [f64]) {
    let h = grid.spacing();
    let mut offset = 0;
    for a in 0..grid.dim() {
        let s = grid.cell_stride(a);
        grid.for_each_face(a, |f, pos| {
            if !grid.is_boundary_face(a, pos) {
                let hi = grid.cell_index(pos[0], pos[1], pos[2]);
                y[offset + f] += scale * (p[hi] - p[hi - s]) / h[a];
            }
        });
        offset += grid.num_faces(a);
    }
}

fn flat_divergence(grid: &Grid, u: &[f64], out: &mut [f64]) {
    let mut comps = Vec::with_capacity(grid.dim());
    let mut offset = 0;
    for a in 0..grid.dim() {
        let len = grid.num_faces(a);
        comps.push(u[offset..offset + len].to_vec());
        offset += len;
    }
    divergence_raw(grid, &comps, out);
}

impl LinearOperator for SaddleOperator<'_> {
    fn len(&self) -> usize {
        self.mom.len() + self.grid.num_cells()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let (xu, xp) = self.split(x);
        let (yu, yp) = y.split_at_mut(self.mom.len());
        self.mom.apply(xu, yu);
        add_pressure_gradient(&self.grid, xp, 1.0, yu);
        flat_divergence(&self.grid, xu, yp);
        let mean = xp.iter().sum::<f64>() / xp.len() as f64;
        yp.iter_mut().for_each(|v| *v = self.w * (*v + mean));
    }
}

/// Block upper-triangular preconditioner: exact `(1/k - Δ)⁻¹` for the
/// velocity block (convection dropped) and `(1/k)(-Δ)⁻¹ + I` for the
/// pressure Schur complement, both by fast diagonalization.
struct SaddlePreconditioner {
    grid: Grid,
    k: f64,
    w: f64,
    velocity: Vec<SeparableSolver>,
    poisson: SeparableSolver,
}

impl SaddlePreconditioner {
    fn new(grid: &Grid, k: f64, w: f64) -> Self {
        let n = grid.cells();
        let h = grid.spacing();
        let dim = grid.dim();
        let velocity = (0..dim)
            .map(|a| {
                let axes: Vec<_> = (0..dim)
                    .map(|b| (if b == a { Axis1d::DirichletNodes } else { Axis1d::DirichletMirror }, n[b], h[b]))
                    .collect();
                SeparableSolver::new(&axes, 1.0 / k)
            })
            .collect();
        let axes: Vec<_> = (0..dim).map(|b| (Axis1d::Neumann, n[b], h[b])).collect();
        let poisson = SeparableSolver::new(&axes, 0.0);
        Self { grid: *grid, k, w, velocity, poisson }
    }

    fn apply(&self, r: &[f64], z: &mut [f64]) {
        let grid = &self.grid;
        let nu = r.len() - grid.num_cells();
        let (ru, rp) = r.split_at(nu);
        let (zu, zp) = z.split_at_mut(nu);
        zp.copy_from_slice(rp);
        self.poisson.solve_in_place(zp);
        for (z, r) in zp.iter_mut().zip(rp) {
            *z = (*z / self.k + r) / self.w;
        }
        zu.copy_from_slice(ru);
        add_pressure_gradient(grid, zp, -1.0, zu);
        let n = grid.cells();
        let mut offset = 0;
        for a in 0..grid.dim() {
            let mut dims = n;
            dims[a] -= 1;
            let mut interior = vec![0.0; dims.iter().take(grid.dim()).product()];
            let box_index = |pos: [usize; 3]| {
                let mut q = pos;
                q[a] -= 1;
                (q[2] * dims[1] + q[1]) * dims[0] + q[0]
            };
            let seg = &mut zu[offset..offset + grid.num_faces(a)];
            grid.for_each_face(a, |f, pos| {
                if !grid.is_boundary_face(a, pos) {
                    interior[box_index(pos)] = seg[f];
                }
            });
            self.velocity[a].solve_in_place(&mut interior);
            grid.for_each_face(a, |f, pos| {
                if !grid.is_boundary_face(a, pos) {
                    seg[f] = interior[box_index(pos)];
                }
            });
            offset += grid.num_faces(a);
        }
    }
}

/// Coupled solve of `A u + ∇p = f`, `div u = 0` (pressure mean zero) by
/// right-preconditioned BiCGStab on the full saddle-point system, warm
/// started from `(u_guess, p_guess)`.
pub fn coupled_solve(input: &FluidSubstepInput, u_guess: &FaceVectorField, p_guess: &ScalarField) -> Result<FluidSolution> {
    let params = input.params;
    let grid = *input.n_bar.grid();
    let f = momentum_rhs(input.n_bar, input.grad_phi, input.u_prev, params.k, &params.trunc).flatten();
    let mom = MomentumOperator::new(input.u_prev, params.k, params.advection);
    let w = 1.0 / params.k;
    let op = SaddleOperator { grid, mom: &mom, w };
    let pre = SaddlePreconditioner::new(&grid, params.k, w);
    let nu = mom.len();

    let mut rhs = f;
    rhs.resize(op.len(), 0.0);
    let mut x = u_guess.flatten();
    x.extend_from_slice(p_guess.values());
    let mut stats = bicgstab_solve_preconditioned(&op, &|r, z| pre.apply(r, z), &rhs, &mut x, inner_tol(params), params.max_iter_for(op.len()));
    if matches!(stats, Err(SolveError::Breakdown { .. })) {
        // retry once from a cold start
        x.iter_mut().for_each(|v| *v = 0.0);
        stats = bicgstab_solve_preconditioned(&op, &|r, z| pre.apply(r, z), &rhs, &mut x, inner_tol(params), params.max_iter_for(op.len()));
    }
    stats?;
    let mut u = FaceVectorField::from_flat(&grid, &x[..nu])?;
    u.set_boundary_zero();
    let mut p = ScalarField::from_values(&grid, x[nu..].to_vec())?;
    subtract_mean(&mut p);
    Ok(FluidSolution { u, p })
}

fn subtract_mean(p: &mut ScalarField) {
    let mean = p.values().iter().sum::<f64>() / p.values().len() as f64;
    p.values_mut().iter_mut().for_each(|v| *v -= mean);
}

/// Velocity/pressure sub-solve in the configured mode.
pub fn fluid_solve(input: &FluidSubstepInput, u_guess: &FaceVectorField, p_guess: &ScalarField) -> Result<FluidSolution> {
    match input.params.fluid {
        FluidSolver::Coupled => coupled_solve(input, u_guess, p_guess),
        FluidSolver::Projection => {
            let u_star = momentum_solve(input)?;
            let (u, phi) = pressure_project(&u_star, input.params.k, input.params.linsolve_tol, input.params.linsolve_max_iter)?;
            Ok(FluidSolution { u, p: phi })
        }
    }
}
