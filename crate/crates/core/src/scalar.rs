//! The oxygen (`z`) and cell-density (`n`) sub-solves of one Picard iteration.

use crate::error::Result;
use crate::grid::{FaceVectorField, Grid, ScalarField};
use crate::linsolve::{bicgstab_solve, cg_solve, LinearOperator};
use crate::ops::{
    advection_divergence_raw, chemotaxis_flux, divergence_of_fluxes, gradsq_density, laplacian_raw,
    nonconservative_transport_raw,
};
use crate::params::{AdvectionScheme, NTransport, SimParams};

/// `(1/k - Δ + (s/2) G_0^m(n̄)) z`, symmetric positive definite.
pub struct HelmholtzOperator {
    grid: Grid,
    /// `1/k + (s/2) G_0^m(n̄)` per cell.
    reaction: Vec<f64>,
}

impl HelmholtzOperator {
    pub fn new(n_bar: &ScalarField, params: &SimParams) -> Self {
        let t = &params.trunc;
        let half_s = 0.5 * t.s();
        let reaction = n_bar.values().iter().map(|&n| 1.0 / params.k + half_s * t.g0m(n)).collect();
        Self { grid: *n_bar.grid(), reaction }
    }
}

impl LinearOperator for HelmholtzOperator {
    fn len(&self) -> usize {
        self.grid.num_cells()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        laplacian_raw(&self.grid, x, y);
        for ((yi, xi), r) in y.iter_mut().zip(x).zip(&self.reaction) {
            *yi = r * xi - *yi;
        }
    }

    fn is_symmetric(&self) -> bool {
        true
    }

    fn diagonal(&self) -> Option<Vec<f64>> {
        let n = self.grid.cells();
        let h = self.grid.spacing();
        let mut d = self.reaction.clone();
        self.grid.for_each_cell(|c, pos| {
            for a in 0..self.grid.dim() {
                let neighbours = usize::from(pos[a] > 0) + usize::from(pos[a] + 1 < n[a]);
                d[c] += neighbours as f64 / (h[a] * h[a]);
            }
        });
        Some(d)
    }
}

/// Right-hand side of the `z` equation; convection and the `α²` term are
/// explicit at `z̄`, and every division is by `T_α(z̄)`.
pub fn z_rhs(z_prev_time: &ScalarField, n_bar: &ScalarField, z_bar: &ScalarField, u_bar: &FaceVectorField, params: &SimParams) -> ScalarField {
    let t = &params.trunc;
    let a2 = t.alpha() * t.alpha();
    let half_s = 0.5 * t.s();
    let gsq = gradsq_density(z_bar);
    let adv = divergence_of_fluxes(&crate::ops::advective_flux(u_bar, z_bar, params.advection));
    let mut rhs = ScalarField::zeros(z_bar.grid());
    let out = rhs.values_mut();
    for c in 0..out.len() {
        let tz = t.t_alpha(z_bar.values()[c]);
        out[c] = a2 * half_s * t.g0m(n_bar.values()[c]) / tz + gsq.values()[c] / tz + z_prev_time.values()[c] / params.k
            - adv.values()[c];
    }
    rhs
}

/// Solves `(1/k - Δ + (s/2)G_0^m(n̄)) z = rhs` by Jacobi-scaled CG, warm
/// started from `z̄`.
pub fn z_solve(z_prev_time: &ScalarField, n_bar: &ScalarField, z_bar: &ScalarField, u_bar: &FaceVectorField, params: &SimParams) -> Result<ScalarField> {
    let op = HelmholtzOperator::new(n_bar, params);
    let rhs = z_rhs(z_prev_time, n_bar, z_bar, u_bar, params);
    let mut x = z_bar.values().to_vec();
    cg_solve(&op, rhs.values(), &mut x, params.linsolve_tol, params.max_iter_for(op.len()))?;
    ScalarField::from_values(z_bar.grid(), x)
}

/// `n/k + ū·∇n - Δn`, with the transport term in conservative flux form
/// unless the non-conservative control is selected.
pub struct TransportOperator<'a> {
    grid: Grid,
    u: &'a FaceVectorField,
    inv_k: f64,
    scheme: AdvectionScheme,
    transport: NTransport,
}

impl<'a> TransportOperator<'a> {
    pub fn new(u: &'a FaceVectorField, params: &SimParams) -> Self {
        Self { grid: *u.grid(), u, inv_k: 1.0 / params.k, scheme: params.advection, transport: params.n_transport }
    }
}

impl LinearOperator for TransportOperator<'_> {
    fn len(&self) -> usize {
        self.grid.num_cells()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        laplacian_raw(&self.grid, x, y);
        let mut adv = vec![0.0; x.len()];
        match self.transport {
            NTransport::Conservative => advection_divergence_raw(&self.grid, self.u, x, self.scheme, &mut adv),
            NTransport::NonConservative => nonconservative_transport_raw(&self.grid, self.u, x, &mut adv),
        }
        for i in 0..x.len() {
            y[i] = self.inv_k * x[i] + adv[i] - y[i];
        }
    }
}

/// Right-hand side `-div(chemotactic flux) + n^{i-1}/k`.
pub fn n_rhs(n_prev_time: &ScalarField, n_bar: &ScalarField, z_new: &ScalarField, z_bar: &ScalarField, params: &SimParams) -> ScalarField {
    let div = divergence_of_fluxes(&chemotaxis_flux(n_bar, z_bar, z_new, &params.trunc));
    let mut rhs = ScalarField::zeros(n_bar.grid());
    for ((r, d), np) in rhs.values_mut().iter_mut().zip(div.values()).zip(n_prev_time.values()) {
        *r = np / params.k - d;
    }
    rhs
}

/// Solves the `n` equation by unpreconditioned BiCGStab.
///
/// The initial guess is `n̄` shifted to the mass of `n^{i-1}`. Since the
/// conservative operator maps mean-free vectors to mean-free vectors, every
/// Krylov correction is mass-free and the solution keeps that mass up to
/// rounding, independently of the solver tolerance.
pub fn n_solve(
    n_prev_time: &ScalarField,
    n_bar: &ScalarField,
    z_new: &ScalarField,
    z_bar: &ScalarField,
    u_bar: &FaceVectorField,
    params: &SimParams,
) -> Result<ScalarField> {
    let op = TransportOperator::new(u_bar, params);
    let rhs = n_rhs(n_prev_time, n_bar, z_new, z_bar, params);
    let cells = n_bar.values().len() as f64;
    let shift = (n_prev_time.values().iter().sum::<f64>() - n_bar.values().iter().sum::<f64>()) / cells;
    let mut x: Vec<f64> = n_bar.values().iter().map(|v| v + shift).collect();
    bicgstab_solve(&op, rhs.values(), &mut x, params.linsolve_tol, params.max_iter_for(op.len()))?;
    ScalarField::from_values(n_bar.grid(), x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linsolve::assemble;
    use crate::ops::dirichlet_energy;
    use crate::testutil::{random_field, swirl};
    use crate::truncation::TruncParams;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params(s: f64, k: f64) -> SimParams {
        SimParams::new(TruncParams::new(0.1, 50.0, s).unwrap(), k)
    }

    #[test]
    fn z_constant_fixed_point() {
        let grid = Grid::cube(2, 6, 1.0).unwrap();
        let p = params(2.0, 0.1);
        let z = ScalarField::constant(&grid, 0.1);
        let n = ScalarField::zeros(&grid);
        let u = FaceVectorField::zeros(&grid);
        let out = z_solve(&z, &n, &z, &u, &p).unwrap();
        assert!(out.values().iter().all(|v| (v - 0.1).abs() < 1e-12));
    }

    #[test]
    fn z_homogeneous_oracle() {
        let grid = Grid::cube(2, 5, 1.0).unwrap();
        for (s, n0, zc) in [(2.0, 0.7, 1.3), (1.5, 2.0, 0.05), (3.0, 1.2, 0.4)] {
            let p = params(s, 0.05);
            let alpha = p.trunc.alpha();
            let n = ScalarField::constant(&grid, n0);
            let z = ScalarField::constant(&grid, zc);
            let u = FaceVectorField::zeros(&grid);
            let out = z_solve(&z, &n, &z, &u, &p).unwrap();
            let expect = (zc / p.k + alpha * alpha * (s / 2.0) * p.trunc.g0m(n0) / zc.max(alpha)) / (1.0 / p.k + s / 2.0 * p.trunc.g0m(n0));
            for v in out.values() {
                assert!((v - expect).abs() < 1e-11 * expect, "{v} vs {expect}");
            }
        }
    }

    #[test]
    fn helmholtz_is_spd() {
        let grid = Grid::new(2, &[4, 3], &[1.0, 0.7]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let n = random_field(&grid, &mut rng, 0.0, 5.0);
            let op = HelmholtzOperator::new(&n, &params(1.5, 0.2));
            let m = assemble(&op);
            let size = op.len();
            let mat = nalgebra::DMatrix::from_row_slice(size, size, &m);
            assert!((&mat - mat.transpose()).abs().max() < 1e-12);
            let eig = mat.symmetric_eigen();
            assert!(eig.eigenvalues.min() > 0.0);
            let d = op.diagonal().unwrap();
            for i in 0..size {
                assert!((d[i] - m[i * size + i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn z_ledger_at_fixed_point() {
        let grid = Grid::cube(2, 12, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = params(2.0, 0.05);
        for _ in 0..3 {
            let z_prev = random_field(&grid, &mut rng, 0.1, 1.5);
            let n = random_field(&grid, &mut rng, 0.0, 2.0);
            let u = swirl(&grid, 0.5);
            let mut z = z_prev.clone();
            for _ in 0..200 {
                let next = z_solve(&z_prev, &n, &z, &u, &p).unwrap();
                let change = next.values().iter().zip(z.values()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
                z = next;
                if change < 1e-13 {
                    break;
                }
            }
            assert!(z.min() >= p.trunc.alpha() - 1e-8);
            assert!(z.max() <= z_prev.max() + 1e-8);
            let incr = z.values().iter().zip(z_prev.values()).map(|(a, b)| (a - b).powi(2)).sum::<f64>() * grid.cell_volume();
            assert!(z.l2_sq() + incr <= z_prev.l2_sq() + 1e-10);
            assert!(dirichlet_energy(&z).is_finite());
        }
    }

    #[test]
    fn n_constant_is_preserved() {
        let grid = Grid::cube(2, 8, 1.0).unwrap();
        let p = params(2.0, 0.1);
        let n = ScalarField::constant(&grid, 0.8);
        let z = ScalarField::constant(&grid, 0.5);
        let u = FaceVectorField::zeros(&grid);
        let out = n_solve(&n, &n, &z, &z, &u, &p).unwrap();
        assert!(out.values().iter().all(|v| (v - 0.8).abs() < 1e-12));
    }

    #[test]
    fn n_mass_is_conserved() {
        let grid = Grid::cube(2, 16, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for trial in 0..10 {
            let p = params(2.0, [0.01, 0.1][trial % 2]);
            let n_prev = random_field(&grid, &mut rng, 0.0, 3.0);
            let n_bar = random_field(&grid, &mut rng, 0.0, 3.0);
            let z_bar = random_field(&grid, &mut rng, 0.1, 1.0);
            let z_new = random_field(&grid, &mut rng, 0.1, 1.0);
            let u = swirl(&grid, 2.0);
            let out = n_solve(&n_prev, &n_bar, &z_new, &z_bar, &u, &p).unwrap();
            let rel = (out.integral() - n_prev.integral()).abs() / n_prev.integral();
            assert!(rel <= 1e-10, "{rel}");
        }
    }

    #[test]
    fn upwind_transport_is_m_matrix() {
        let grid = Grid::cube(2, 5, 1.0).unwrap();
        let u = swirl(&grid, 3.0);
        let p = params(2.0, 0.1);
        let op = TransportOperator::new(&u, &p);
        let m = assemble(&op);
        let n = op.len();
        for i in 0..n {
            assert!(m[i * n + i] > 0.0);
            let col_sum: f64 = (0..n).map(|r| m[r * n + i]).sum();
            assert!((col_sum - 1.0 / p.k).abs() < 1e-9);
            for j in 0..n {
                if i != j {
                    assert!(m[i * n + j] <= 1e-14);
                }
            }
        }
    }

    #[test]
    fn n_stays_nonnegative_at_fixed_point() {
        let grid = Grid::cube(2, 12, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let p = params(2.0, 0.02);
        let n_prev = random_field(&grid, &mut rng, 0.0, 1.0);
        let z = random_field(&grid, &mut rng, 0.1, 1.0);
        let u = swirl(&grid, 1.0);
        let mut n = n_prev.clone();
        for _ in 0..300 {
            let next = n_solve(&n_prev, &n, &z, &z, &u, &p).unwrap();
            let change = next.values().iter().zip(n.values()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            n = next;
            if change < 1e-12 {
                break;
            }
        }
        assert!(n.min() >= -10.0 * p.linsolve_tol, "{}", n.min());
    }
}
