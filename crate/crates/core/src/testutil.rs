use std::f64::consts::PI;

use rand::Rng;

use crate::grid::{FaceVectorField, Grid, ScalarField};

pub(crate) fn random_field(grid: &Grid, rng: &mut impl Rng, lo: f64, hi: f64) -> ScalarField {
    ScalarField::from_fn(grid, |_| rng.gen_range(lo..hi))
}

/// Discretely divergence-free 2D velocity from the stream function
/// `amp · sin²(πx) sin²(πy)` sampled at cell corners (unit square).
pub(crate) fn swirl(grid: &Grid, amp: f64) -> FaceVectorField {
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
