//! Finite-volume operators on the MAC grid.
//!
//! Fluxes are stored as per-area densities on faces, so the divergence of a
//! flux field is `Σ_a (F_hi - F_lo) / h_a`. Every boundary face carries zero
//! flux, which gives the zero-flux (Neumann) closure for scalars and makes
//! all flux-form operators conservative.

use crate::grid::{FaceVectorField, Grid, ScalarField};
use crate::params::AdvectionScheme;
use crate::truncation::TruncParams;

pub(crate) fn laplacian_raw(grid: &Grid, f: &[f64], out: &mut [f64]) {
    let n = grid.cells();
    let h = grid.spacing();
    let dim = grid.dim();
    let mut ih2 = [0.0; 3];
    let mut stride = [0usize; 3];
    for a in 0..dim {
        ih2[a] = 1.0 / (h[a] * h[a]);
        stride[a] = grid.cell_stride(a);
    }
    grid.for_each_cell(|c, pos| {
        let fc = f[c];
        let mut acc = 0.0;
        for a in 0..dim {
            let s = stride[a];
            if pos[a] > 0 {
                acc += (f[c - s] - fc) * ih2[a];
            }
            if pos[a] + 1 < n[a] {
                acc += (f[c + s] - fc) * ih2[a];
            }
        }
        out[c] = acc;
    });
}

/// Cell-centered `2d+1`-point Laplacian with zero-flux ghost cells.
pub fn laplacian_neumann(f: &ScalarField) -> ScalarField {
    let grid = *f.grid();
    let mut out = ScalarField::zeros(&grid);
    laplacian_raw(&grid, f.values(), out.values_mut());
    out
}

/// Two-point face differences; boundary faces are zero.
pub fn gradient_at_faces(f: &ScalarField) -> FaceVectorField {
    let grid = *f.grid();
    let vals = f.values();
    let mut out = FaceVectorField::zeros(&grid);
    for a in 0..grid.dim() {
        let s = grid.cell_stride(a);
        let ih = 1.0 / grid.spacing()[a];
        let comp = out.component_mut(a);
        grid.for_each_face(a, |idx, pos| {
            if !grid.is_boundary_face(a, pos) {
                let hi = grid.cell_index(pos[0], pos[1], pos[2]);
                comp[idx] = (vals[hi] - vals[hi - s]) * ih;
            }
        });
    }
    out
}

pub(crate) fn divergence_raw(grid: &Grid, comps: &[Vec<f64>], out: &mut [f64]) {
    let dim = grid.dim();
    let h = grid.spacing();
    grid.for_each_cell(|c, [i, j, k]| {
        let mut acc = 0.0;
        for a in 0..dim {
            let lo = grid.face_index(a, i, j, k);
            let hi = lo + grid.face_stride(a, a);
            acc += (comps[a][hi] - comps[a][lo]) / h[a];
        }
        out[c] = acc;
    });
}

/// Net outflow per unit volume of a face flux field.
pub fn divergence_of_fluxes(fluxes: &FaceVectorField) -> ScalarField {
    let grid = *fluxes.grid();
    let mut out = ScalarField::zeros(&grid);
    divergence_raw(&grid, fluxes.components(), out.values_mut());
    out
}

#[inline]
fn face_value(scheme: AdvectionScheme, vel: f64, lo: f64, hi: f64) -> f64 {
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

/// Conservative transport flux `u_face · f_face`; boundary faces are zero.
pub fn advective_flux(u: &FaceVectorField, f: &ScalarField, scheme: AdvectionScheme) -> FaceVectorField {
    let grid = *f.grid();
    let vals = f.values();
    let mut out = FaceVectorField::zeros(&grid);
    for a in 0..grid.dim() {
        let s = grid.cell_stride(a);
        let vel = u.component(a);
        let comp = out.component_mut(a);
        grid.for_each_face(a, |idx, pos| {
            if !grid.is_boundary_face(a, pos) {
                let hi = grid.cell_index(pos[0], pos[1], pos[2]);
                let v = vel[idx];
                comp[idx] = v * face_value(scheme, v, vals[hi - s], vals[hi]);
            }
        });
    }
    out
}

/// `div(advective_flux(u, f))` without materializing the face fluxes.
pub(crate) fn advection_divergence_raw(
    grid: &Grid,
    u: &FaceVectorField,
    f: &[f64],
    scheme: AdvectionScheme,
    out: &mut [f64],
) {
    let n = grid.cells();
    let h = grid.spacing();
    let dim = grid.dim();
    grid.for_each_cell(|c, pos| {
        let mut acc = 0.0;
        for a in 0..dim {
            let s = grid.cell_stride(a);
            let vel = u.component(a);
            let lo = grid.face_index(a, pos[0], pos[1], pos[2]);
            let hi = lo + grid.face_stride(a, a);
            let mut flux_hi = 0.0;
            let mut flux_lo = 0.0;
            if pos[a] + 1 < n[a] {
                let v = vel[hi];
                flux_hi = v * face_value(scheme, v, f[c], f[c + s]);
            }
            if pos[a] > 0 {
                let v = vel[lo];
                flux_lo = v * face_value(scheme, v, f[c - s], f[c]);
            }
            acc += (flux_hi - flux_lo) / h[a];
        }
        out[c] = acc;
    });
}

/// Non-conservative `u · ∇f` with cell-averaged velocity and central
/// differences (zero-gradient ghosts). Does not conserve `∫ f`.
pub(crate) fn nonconservative_transport_raw(grid: &Grid, u: &FaceVectorField, f: &[f64], out: &mut [f64]) {
    let n = grid.cells();
    let h = grid.spacing();
    let dim = grid.dim();
    grid.for_each_cell(|c, pos| {
        let mut acc = 0.0;
        for a in 0..dim {
            let s = grid.cell_stride(a);
            let vel = u.component(a);
            let lo = grid.face_index(a, pos[0], pos[1], pos[2]);
            let uc = 0.5 * (vel[lo] + vel[lo + grid.face_stride(a, a)]);
            let fm = if pos[a] > 0 { f[c - s] } else { f[c] };
            let fp = if pos[a] + 1 < n[a] { f[c + s] } else { f[c] };
            acc += uc * (fp - fm) / (2.0 * h[a]);
        }
        out[c] = acc;
    });
}

pub(crate) fn gradsq_raw(grid: &Grid, f: &[f64], out: &mut [f64]) {
    let n = grid.cells();
    let h = grid.spacing();
    let dim = grid.dim();
    grid.for_each_cell(|c, pos| {
        let fc = f[c];
        let mut acc = 0.0;
        for a in 0..dim {
            let s = grid.cell_stride(a);
            if pos[a] > 0 {
                let g = (fc - f[c - s]) / h[a];
                acc += 0.5 * g * g;
            }
            if pos[a] + 1 < n[a] {
                let g = (f[c + s] - fc) / h[a];
                acc += 0.5 * g * g;
            }
        }
        out[c] = acc;
    });
}

/// Cellwise `|∇f|²` density: each face's squared gradient split half to each
/// adjacent cell, so its volume sum is exactly the face Dirichlet energy
/// `-(f, Δ_h f)`.
pub fn gradsq_density(f: &ScalarField) -> ScalarField {
    let grid = *f.grid();
    let mut out = ScalarField::zeros(&grid);
    gradsq_raw(&grid, f.values(), out.values_mut());
    out
}

/// Face-based Dirichlet energy `Σ_faces |∇f|² · volume`.
pub fn dirichlet_energy(f: &ScalarField) -> f64 {
    gradient_at_faces(f).l2_sq()
}

/// Chemotactic flux `T_0^m(n̄)_up · 2 T_α(z̄)_face ∇z_new`.
///
/// The density factor is taken from the cell the drift `2 T_α(z̄) ∇z_new`
/// comes from, which keeps the `n` update monotone.
pub fn chemotaxis_flux(n_bar: &ScalarField, z_bar: &ScalarField, z_new: &ScalarField, trunc: &TruncParams) -> FaceVectorField {
    let grid = *n_bar.grid();
    let (nb, zb, zn) = (n_bar.values(), z_bar.values(), z_new.values());
    let mut out = FaceVectorField::zeros(&grid);
    for a in 0..grid.dim() {
        let s = grid.cell_stride(a);
        let ih = 1.0 / grid.spacing()[a];
        let comp = out.component_mut(a);
        grid.for_each_face(a, |idx, pos| {
            if grid.is_boundary_face(a, pos) {
                return;
            }
            let hi = grid.cell_index(pos[0], pos[1], pos[2]);
            let lo = hi - s;
            let tz = 0.5 * (trunc.t_alpha(zb[lo]) + trunc.t_alpha(zb[hi]));
            let drift = 2.0 * tz * (zn[hi] - zn[lo]) * ih;
            let n_up = if drift > 0.0 { nb[lo] } else { nb[hi] };
            comp[idx] = drift * trunc.t0m(n_up);
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_field(grid: &Grid, rng: &mut ChaCha8Rng) -> ScalarField {
        let vals = (0..grid.num_cells()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        ScalarField::from_values(grid, vals).unwrap()
    }

    fn checkerboard(grid: &Grid) -> ScalarField {
        let mut f = ScalarField::zeros(grid);
        let v = f.values_mut();
        grid.for_each_cell(|idx, [i, j, k]| v[idx] = if (i + j + k) % 2 == 0 { 1.0 } else { -1.0 });
        f
    }

    /// Divergence-free face velocity from the stream function
    /// `ψ = A sin²(πx) sin²(πy)` sampled at cell corners.
    fn stream_velocity(grid: &Grid, amp: f64) -> FaceVectorField {
        let h = grid.spacing();
        let psi = |x: f64, y: f64| amp * (PI * x).sin().powi(2) * (PI * y).sin().powi(2);
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
        u.set_boundary_zero();
        u
    }

    #[test]
    fn laplacian_annihilates_constants_and_telescopes() {
        let g = Grid::new(2, &[7, 5], &[1.3, 0.7]).unwrap();
        assert!(laplacian_neumann(&ScalarField::constant(&g, 2.5)).max_abs() == 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let f = random_field(&g, &mut rng);
            assert!(laplacian_neumann(&f).integral().abs() < 1e-13);
        }
    }

    #[test]
    fn laplacian_mms_order() {
        let mut errs = Vec::new();
        for n in [16, 32, 64] {
            let g = Grid::cube(2, n, 1.0).unwrap();
            let f = ScalarField::from_fn(&g, |x| (PI * x[0]).cos() * (PI * x[1]).cos());
            let lap = laplacian_neumann(&f);
            let err = lap
                .values()
                .iter()
                .zip(f.values())
                .fold(0.0f64, |m, (l, v)| m.max((l + 2.0 * PI * PI * v).abs()));
            errs.push(err);
        }
        for w in errs.windows(2) {
            assert!((w[0] / w[1]).log2() >= 1.8, "orders from {errs:?}");
        }
    }

    #[test]
    fn gradient_examples() {
        let g = Grid::cube(2, 6, 6.0).unwrap();
        assert_eq!(gradient_at_faces(&ScalarField::constant(&g, 4.0)).max_abs(), 0.0);
        let lin = ScalarField::from_fn(&g, |x| 1.0 + 0.75 * x[0]);
        let grad = gradient_at_faces(&lin);
        g.for_each_face(0, |idx, pos| {
            let v = grad.component(0)[idx];
            if g.is_boundary_face(0, pos) {
                assert_eq!(v, 0.0);
            } else {
                assert!((v - 0.75).abs() < 1e-14);
            }
        });
        let grad = gradient_at_faces(&checkerboard(&g));
        g.for_each_face(0, |idx, pos| {
            if !g.is_boundary_face(0, pos) {
                assert_eq!(grad.component(0)[idx].abs(), 2.0);
            }
        });
    }

    #[test]
    fn divergence_examples() {
        let g = Grid::cube(2, 4, 4.0).unwrap();
        assert_eq!(divergence_of_fluxes(&FaceVectorField::zeros(&g)).max_abs(), 0.0);
        let uniform = FaceVectorField::from_fn(&g, |a, _| if a == 0 { 1.5 } else { -0.5 });
        let div = divergence_of_fluxes(&uniform);
        g.for_each_cell(|idx, [i, j, _]| {
            if i > 0 && i < 3 && j > 0 && j < 3 {
                assert_eq!(div.values()[idx], 0.0);
            }
        });
        let mut single = FaceVectorField::zeros(&g);
        let f = g.face_index(0, 2, 1, 0);
        single.component_mut(0)[f] = 1.0;
        let div = divergence_of_fluxes(&single);
        assert_eq!(div.values()[g.cell_index(1, 1, 0)], 1.0);
        assert_eq!(div.values()[g.cell_index(2, 1, 0)], -1.0);
        assert_eq!(div.values().iter().filter(|v| **v != 0.0).count(), 2);
    }

    #[test]
    fn advective_flux_examples() {
        let g = Grid::cube(2, 8, 1.0).unwrap();
        let f = ScalarField::from_fn(&g, |x| x[0] + 2.0 * x[1]);
        assert_eq!(advective_flux(&FaceVectorField::zeros(&g), &f, AdvectionScheme::Upwind).max_abs(), 0.0);

        let u = stream_velocity(&g, 0.8);
        assert!(divergence_of_fluxes(&u).max_abs() < 1e-12);
        let c = ScalarField::constant(&g, 3.0);
        for scheme in [AdvectionScheme::Upwind, AdvectionScheme::Central] {
            let d = divergence_of_fluxes(&advective_flux(&u, &c, scheme));
            assert!(d.max_abs() < 1e-12, "{scheme:?}");
        }

        // u = +1 along x on a strip: upwind takes the left cell
        let g = Grid::new(2, &[6, 2], &[6.0, 2.0]).unwrap();
        let mut u = FaceVectorField::from_fn(&g, |a, _| if a == 0 { 1.0 } else { 0.0 });
        u.set_boundary_zero();
        let f = ScalarField::from_fn(&g, |x| x[0] + 0.5);
        let flux = advective_flux(&u, &f, AdvectionScheme::Upwind);
        g.for_each_face(0, |idx, [i, _, _]| {
            let expect = if i == 0 || i == 6 { 0.0 } else { i as f64 };
            assert_eq!(flux.component(0)[idx], expect);
        });
    }

    #[test]
    fn fused_advection_matches_flux_form() {
        let g = Grid::new(3, &[5, 4, 3], &[1.0, 0.8, 0.6]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = random_field(&g, &mut rng);
        let mut u = FaceVectorField::from_fn(&g, |_, _| rng.gen_range(-1.0..1.0));
        u.set_boundary_zero();
        for scheme in [AdvectionScheme::Upwind, AdvectionScheme::Central] {
            let reference = divergence_of_fluxes(&advective_flux(&u, &f, scheme));
            let mut fused = vec![0.0; g.num_cells()];
            advection_divergence_raw(&g, &u, f.values(), scheme, &mut fused);
            for (a, b) in reference.values().iter().zip(&fused) {
                assert!((a - b).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn gradsq_examples() {
        let g = Grid::cube(2, 4, 4.0).unwrap();
        assert_eq!(gradsq_density(&ScalarField::constant(&g, 1.0)).max_abs(), 0.0);
        let step = ScalarField::from_fn(&g, |x| if x[0] > 2.0 { 1.0 } else { 0.0 });
        let d = gradsq_density(&step);
        g.for_each_cell(|idx, [i, _, _]| {
            let expect = if i == 1 || i == 2 { 0.5 } else { 0.0 };
            assert_eq!(d.values()[idx], expect);
        });
    }

    #[test]
    fn summation_by_parts_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for dims in [vec![6, 9], vec![4, 5, 3]] {
            let lengths: Vec<f64> = dims.iter().map(|_| rng.gen_range(0.5..2.0)).collect();
            let g = Grid::new(dims.len(), &dims, &lengths).unwrap();
            for _ in 0..50 {
                let f = random_field(&g, &mut rng);
                let lhs = -f.dot(&laplacian_neumann(&f));
                let rhs = gradsq_density(&f).integral();
                assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs());
                assert!((dirichlet_energy(&f) - rhs).abs() <= 1e-12 * rhs.abs());
            }
        }
    }

    #[test]
    fn conservativity_of_flux_forms() {
        let g = Grid::new(2, &[9, 7], &[1.0, 1.0]).unwrap();
        let trunc = TruncParams::new(0.1, 5.0, 2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let f = random_field(&g, &mut rng);
            let z = random_field(&g, &mut rng);
            let mut u = FaceVectorField::from_fn(&g, |_, _| rng.gen_range(-1.0..1.0));
            u.set_boundary_zero();
            assert!(divergence_of_fluxes(&advective_flux(&u, &f, AdvectionScheme::Upwind)).integral().abs() < 1e-13);
            assert!(divergence_of_fluxes(&chemotaxis_flux(&f, &z, &f, &trunc)).integral().abs() < 1e-13);
            assert!(divergence_of_fluxes(&gradient_at_faces(&f)).integral().abs() < 1e-13);
        }
    }

    #[test]
    fn chemotaxis_flux_examples() {
        let g = Grid::cube(2, 8, 1.0).unwrap();
        let trunc = TruncParams::new(0.1, 2.0, 2.0).unwrap();
        let zlin = ScalarField::from_fn(&g, |x| 0.2 + 0.5 * x[0]);
        let neg = ScalarField::constant(&g, -0.3);
        assert_eq!(chemotaxis_flux(&neg, &zlin, &zlin, &trunc).max_abs(), 0.0);
        let ones = ScalarField::constant(&g, 1.0);
        let zc = ScalarField::constant(&g, 0.7);
        assert_eq!(chemotaxis_flux(&ones, &zlin, &zc, &trunc).max_abs(), 0.0);

        let flux = chemotaxis_flux(&ones, &zlin, &zlin, &trunc);
        g.for_each_face(0, |idx, pos| {
            if !g.is_boundary_face(0, pos) {
                let x = g.face_center(0, pos[0], pos[1], pos[2]);
                let expect = 2.0 * (0.2 + 0.5 * x[0]) * 0.5;
                assert!((flux.component(0)[idx] - expect).abs() < 1e-14);
            } else {
                assert_eq!(flux.component(0)[idx], 0.0);
            }
        });
        assert!(flux.component(1).iter().all(|&v| v == 0.0));
    }
}
