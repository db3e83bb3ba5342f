//! Per-step ledgers: mass, pointwise bounds of `z`, the `z`-L² telescoping
//! sum, the cumulative gradient bound, and the energy/dissipation pair.

use crate::fluid::vector_laplacian;
use crate::grid::ScalarField;
use crate::ops::{dirichlet_energy, gradsq_density, laplacian_neumann};
use crate::params::SimParams;
use crate::stepper::State;

/// One row of the diagnostics stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnosticsRecord {
    pub step: u64,
    pub time: f64,
    pub mass_n: f64,
    pub min_n: f64,
    pub min_z: f64,
    pub max_z: f64,
    pub l2_z_sq: f64,
    /// `Σ_j ‖z^j - z^{j-1}‖²`.
    pub cum_z_increments: f64,
    /// `k Σ_j ‖∇z^j‖²`.
    pub grad_z_l2_sq: f64,
    pub energy_a: f64,
    pub dissipation_d: f64,
    pub picard_iters: u64,
    pub max_eq_residual: f64,
}

fn power_sum(f: &ScalarField, shift: f64, s: f64) -> f64 {
    f.values().iter().map(|v| (v + shift).abs().powf(s)).sum::<f64>() * f.grid().cell_volume()
}

/// Discrete energy functional `a_i`.
///
/// `s >= 2`: `‖n‖_s^s / (4(s-1)) + ½‖∇z‖² + (w_u/2)‖u‖²`; for `s < 2` the
/// term `‖n+1‖_s^s / (8 w_n s (s-1))` is added.
pub fn energy_a(state: &State, params: &SimParams) -> f64 {
    let s = params.trunc.s();
    let mut a = power_sum(&state.n, 0.0, s) / (4.0 * (s - 1.0))
        + 0.5 * dirichlet_energy(&state.z)
        + 0.5 * params.energy_weight_u * state.u.l2_sq();
    if s < 2.0 {
        a += power_sum(&state.n, 1.0, s) / (8.0 * params.energy_weight_n * s * (s - 1.0));
    }
    a
}

/// Discrete dissipation `d_i`, each term multiplied by its configured weight.
///
/// `‖D²z‖²` is represented by `‖Δ_h z‖²`, `‖∇u‖²` by `-(u, Δ_h u)`.
pub fn dissipation_d(state: &State, params: &SimParams) -> f64 {
    let t = &params.trunc;
    let s = t.s();
    let w = params.dissipation_weights;
    let vol = state.n.grid().cell_volume();

    let grad_n = if s < 2.0 {
        let g = state.n.map(|v| (v.max(0.0) + 1.0).powf(0.5 * s));
        dirichlet_energy(&g) / (4.0 * params.energy_weight_n * s * s)
    } else {
        let g = state.n.map(|v| v.max(0.0).powf(0.5 * s));
        dirichlet_energy(&g) / (4.0 * s)
    };
    let grad_u = -state.u.dot(&vector_laplacian(&state.u));
    let lap_z = laplacian_neumann(&state.z).l2_sq();
    let gsq = gradsq_density(&state.z);
    let quartic: f64 = gsq.values().iter().zip(state.z.values()).map(|(g, z)| g * g / (z * z)).sum::<f64>() * vol;
    let g_coeff = if s < 2.0 { s / 8.0 } else { s / 4.0 };
    let consumption: f64 = state.n.values().iter().zip(gsq.values()).map(|(n, g)| t.g0m(*n) * g).sum::<f64>() * vol;

    w.grad_n * grad_n + w.grad_u * grad_u.max(0.0) + w.laplace_z * lap_z + w.grad_z_quartic * quartic + w.consumption * g_coeff * consumption
}

/// Record for the state at step `state.step`, given the running sums.
pub fn make_record(state: &State, params: &SimParams, cum_z_increments: f64, grad_z_l2_sq: f64, picard_iters: u64, max_eq_residual: f64) -> DiagnosticsRecord {
    DiagnosticsRecord {
        step: state.step,
        time: state.time,
        mass_n: state.n.integral(),
        min_n: state.n.min(),
        min_z: state.z.min(),
        max_z: state.z.max(),
        l2_z_sq: state.z.l2_sq(),
        cum_z_increments,
        grad_z_l2_sq,
        energy_a: energy_a(state, params),
        dissipation_d: dissipation_d(state, params),
        picard_iters,
        max_eq_residual,
    }
}

/// Limits that depend on the run rather than on individual records.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LedgerLimits {
    pub alpha: f64,
    pub bound_tol: f64,
    /// `(1/(4α²)) ‖c⁰ + α²‖²`.
    pub grad_z_bound: f64,
}

impl LedgerLimits {
    pub fn new(initial: &State, params: &SimParams) -> Self {
        let alpha = params.trunc.alpha();
        let shifted = initial.z.map(|z| z * z);
        Self { alpha, bound_tol: params.bound_tol, grad_z_bound: shifted.l2_sq() / (4.0 * alpha * alpha) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LedgerCheck {
    Mass,
    MinZ,
    MaxZ,
    ZL2,
    GradZ,
    Energy,
}

impl LedgerCheck {
    pub const ALL: [LedgerCheck; 6] =
        [LedgerCheck::Mass, LedgerCheck::MinZ, LedgerCheck::MaxZ, LedgerCheck::ZL2, LedgerCheck::GradZ, LedgerCheck::Energy];

    pub fn name(self) -> &'static str {
        match self {
            LedgerCheck::Mass => "mass",
            LedgerCheck::MinZ => "min_z",
            LedgerCheck::MaxZ => "max_z",
            LedgerCheck::ZL2 => "z_l2",
            LedgerCheck::GradZ => "grad_z",
            LedgerCheck::Energy => "energy",
        }
    }
}

/// A failed check at one step: `value` exceeded `limit`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Violation {
    pub check: LedgerCheck,
    pub step: u64,
    pub value: f64,
    pub limit: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LedgerReport {
    pub steps_checked: usize,
    pub violations: Vec<Violation>,
}

impl LedgerReport {
    pub fn passed(&self, check: LedgerCheck) -> bool {
        !self.violations.iter().any(|v| v.check == check)
    }

    pub fn all_passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks every ledger over a record stream whose first entry is the
/// step-0 record.
pub fn ledger_check(records: &[DiagnosticsRecord], limits: &LedgerLimits) -> LedgerReport {
    let mut report = LedgerReport { steps_checked: records.len(), violations: Vec::new() };
    let Some(first) = records.first() else {
        return report;
    };
    let mut fail = |check, step, value: f64, limit: f64| {
        if !(value <= limit) {
            report.violations.push(Violation { check, step, value, limit });
        }
    };
    let mass_scale = if first.mass_n.abs() > 0.0 { first.mass_n.abs() } else { 1.0 };
    let mut prev_max_z = first.max_z;
    for r in records {
        fail(LedgerCheck::Mass, r.step, (r.mass_n - first.mass_n).abs() / mass_scale, 1e-10);
        fail(LedgerCheck::MinZ, r.step, limits.alpha - r.min_z, limits.bound_tol);
        fail(LedgerCheck::MaxZ, r.step, r.max_z - prev_max_z, limits.bound_tol);
        prev_max_z = r.max_z;
        fail(LedgerCheck::ZL2, r.step, r.l2_z_sq + r.cum_z_increments, first.l2_z_sq + 1e-10);
        fail(LedgerCheck::GradZ, r.step, r.grad_z_l2_sq, limits.grad_z_bound + 1e-8);
    }
    let later = &records[1..];
    if later.len() >= 2 {
        let half = later.len() / 2;
        let sup = |rs: &[DiagnosticsRecord]| rs.iter().map(|r| r.energy_a).fold(f64::NEG_INFINITY, f64::max);
        let reference = first.energy_a.max(sup(&later[..half]));
        let (worst, step) = later[half..].iter().fold((f64::NEG_INFINITY, 0), |acc, r| if r.energy_a > acc.0 { (r.energy_a, r.step) } else { acc });
        fail(LedgerCheck::Energy, step, worst, reference * 1.1);
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{FaceVectorField, Grid};
    use crate::testutil::swirl;
    use crate::truncation::TruncParams;
    use std::f64::consts::PI;

    fn state(n: ScalarField, z: ScalarField, u: FaceVectorField) -> State {
        let grid = *n.grid();
        State { n, z, u, p: ScalarField::zeros(&grid), step: 0, time: 0.0, z_prev_max: 0.0 }
    }

    fn params(s: f64) -> SimParams {
        SimParams::new(TruncParams::new(0.1, 100.0, s).unwrap(), 0.01)
    }

    #[test]
    fn zero_state_energy() {
        let grid = Grid::cube(2, 4, 2.0).unwrap();
        let st = state(ScalarField::zeros(&grid), ScalarField::constant(&grid, 0.1), FaceVectorField::zeros(&grid));
        assert_eq!(energy_a(&st, &params(2.0)), 0.0);
        let p = params(1.5);
        let expect = 4.0 / (8.0 * 1.5 * 0.5);
        assert!((energy_a(&st, &p) - expect).abs() < 1e-14);
        assert_eq!(dissipation_d(&st, &p), 0.0);
    }

    #[test]
    fn velocity_term_scales_quadratically() {
        let grid = Grid::cube(2, 8, 1.0).unwrap();
        let n = ScalarField::constant(&grid, 0.3);
        let z = ScalarField::from_fn(&grid, |x| 0.5 + 0.1 * x[0]);
        let u = swirl(&grid, 0.7);
        let p = params(2.0);
        let base = energy_a(&state(n.clone(), z.clone(), FaceVectorField::zeros(&grid)), &p);
        let one = energy_a(&state(n.clone(), z.clone(), u.clone()), &p) - base;
        let two_u = FaceVectorField::from_flat(&grid, &u.flatten().iter().map(|v| 2.0 * v).collect::<Vec<_>>()).unwrap();
        let two = energy_a(&state(n, z, two_u), &p) - base;
        assert!((two - 4.0 * one).abs() < 1e-12 * two);
    }

    #[test]
    fn hand_computed_two_by_two() {
        // cells (x fastest): n = [1, 2, 3, 4], z = [1, 1, 2, 2] on [0,2]², h = 1
        let grid = Grid::cube(2, 2, 2.0).unwrap();
        let n = ScalarField::from_values(&grid, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let z = ScalarField::from_values(&grid, vec![1.0, 1.0, 2.0, 2.0]).unwrap();
        let st = state(n, z, FaceVectorField::zeros(&grid));
        // ‖n‖₃³ = 1 + 8 + 27 + 64 = 100; ∇z: two y-faces with jump 1 → ‖∇z‖² = 2
        let p = params(3.0);
        let expect = 100.0 / (4.0 * 2.0) + 0.5 * 2.0;
        assert!((energy_a(&st, &p) - expect).abs() < 1e-12);
    }

    #[test]
    fn laplacian_proxy_scales_like_pi_to_the_fourth() {
        let p = params(2.0);
        let mut errs = Vec::new();
        for n in [16, 32, 64] {
            let grid = Grid::cube(2, n, 1.0).unwrap();
            let eps = 1e-2;
            let z = ScalarField::from_fn(&grid, |x| 0.1 + eps * (PI * x[0]).cos());
            let mut w = p.clone();
            w.dissipation_weights = crate::params::DissipationWeights { grad_n: 0.0, grad_u: 0.0, laplace_z: 1.0, grad_z_quartic: 0.0, consumption: 0.0 };
            let d = dissipation_d(&state(ScalarField::zeros(&grid), z, FaceVectorField::zeros(&grid)), &w);
            let exact = eps * eps * PI.powi(4) * 0.5;
            errs.push((d - exact).abs() / exact);
        }
        assert!(errs[2] < 1e-2);
        assert!((errs[1] / errs[2]).log2() > 1.8, "{errs:?}");
    }

    #[test]
    fn dissipation_nonnegative_and_zero_n_kills_consumption() {
        let grid = Grid::cube(2, 8, 1.0).unwrap();
        let z = ScalarField::from_fn(&grid, |x| 0.2 + x[0] * x[1]);
        let mut p = params(1.5);
        p.dissipation_weights = crate::params::DissipationWeights { grad_n: 0.0, grad_u: 0.0, laplace_z: 0.0, grad_z_quartic: 0.0, consumption: 1.0 };
        let st = state(ScalarField::zeros(&grid), z.clone(), FaceVectorField::zeros(&grid));
        assert_eq!(dissipation_d(&st, &p), 0.0);
        let st = state(ScalarField::from_fn(&grid, |x| x[0]), z, swirl(&grid, 1.0));
        assert!(dissipation_d(&st, &params(1.5)) > 0.0);
        assert!(dissipation_d(&st, &params(3.0)) > 0.0);
    }

    fn record(step: u64, mass: f64, max_z: f64, energy: f64) -> DiagnosticsRecord {
        DiagnosticsRecord {
            step,
            time: step as f64,
            mass_n: mass,
            min_n: 0.0,
            min_z: 0.1,
            max_z,
            l2_z_sq: 1.0,
            cum_z_increments: 0.0,
            grad_z_l2_sq: 0.0,
            energy_a: energy,
            dissipation_d: 0.0,
            picard_iters: 1,
            max_eq_residual: 0.0,
        }
    }

    #[test]
    fn ledger_flags_each_violation() {
        let limits = LedgerLimits { alpha: 0.1, bound_tol: 1e-8, grad_z_bound: 1.0 };
        let good: Vec<_> = (0..6).map(|i| record(i, 2.0, 1.0, 1.0)).collect();
        assert!(ledger_check(&good, &limits).all_passed());
        let mut bad = good.clone();
        bad[3].mass_n = 2.0 + 1e-6;
        bad[4].max_z = 1.1;
        bad[5].energy_a = 5.0;
        let rep = ledger_check(&bad, &limits);
        assert!(!rep.passed(LedgerCheck::Mass));
        assert!(!rep.passed(LedgerCheck::MaxZ));
        assert!(!rep.passed(LedgerCheck::Energy));
        assert!(rep.passed(LedgerCheck::MinZ));
        assert!(ledger_check(&[], &limits).all_passed());
    }
}
