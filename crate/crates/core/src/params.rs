use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::grid::{FaceVectorField, Grid, ScalarField};
use crate::truncation::TruncParams;

/// How face values of a transported quantity are selected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AdvectionScheme {
    #[default]
    Upwind,
    Central,
}

/// Form of the `u · ∇n` term in the cell equation.
///
/// `NonConservative` evaluates `u · ∇n` from cell-centered velocities and
/// central differences. It does not telescope and only exists as a negative
/// control for the mass ledger.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NTransport {
    #[default]
    Conservative,
    NonConservative,
}

/// Velocity/pressure solve used inside each Picard iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FluidSolver {
    /// Coupled Oseen/Stokes solve (Schur complement on the pressure); the
    /// converged step satisfies the discrete momentum equation exactly.
    #[default]
    Coupled,
    /// Non-incremental Chorin projection: tentative momentum solve followed
    /// by a Neumann Poisson projection. Carries an O(k) splitting error.
    Projection,
}

/// Gravitational-type potential `Φ`.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum PotentialSpec {
    #[default]
    Zero,
    /// `Φ(x) = g · x`.
    Linear(Vec<f64>),
    /// Cell-centered `Φ` values read from a whitespace-separated text file.
    FromFile(PathBuf),
}

/// `Φ` at cell centers and `∇Φ` at faces.
#[derive(Debug, Clone, PartialEq)]
pub struct Potential {
    pub phi: ScalarField,
    pub grad: FaceVectorField,
}

impl PotentialSpec {
    pub fn evaluate(&self, grid: &Grid) -> Result<Potential> {
        match self {
            PotentialSpec::Zero => Ok(Potential { phi: ScalarField::zeros(grid), grad: FaceVectorField::zeros(grid) }),
            PotentialSpec::Linear(g) => {
                if g.len() != grid.dim() {
                    return Err(Error::Params(format!(
                        "linear potential needs {} components (got {})",
                        grid.dim(),
                        g.len()
                    )));
                }
                let phi = ScalarField::from_fn(grid, |x| (0..grid.dim()).map(|a| g[a] * x[a]).sum());
                let grad = FaceVectorField::from_fn(grid, |a, _| g[a]);
                Ok(Potential { phi, grad })
            }
            PotentialSpec::FromFile(path) => {
                let values = crate::io::read_values_file(path)?;
                let phi = ScalarField::from_values(grid, values)
                    .map_err(|e| Error::Params(format!("potential file {}: {e}", path.display())))?;
                let grad = crate::ops::gradient_at_faces(&phi);
                Ok(Potential { phi, grad })
            }
        }
    }
}

/// Weights multiplying each term of the discrete dissipation functional.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DissipationWeights {
    pub grad_n: f64,
    pub grad_u: f64,
    pub laplace_z: f64,
    pub grad_z_quartic: f64,
    pub consumption: f64,
}

impl Default for DissipationWeights {
    fn default() -> Self {
        Self { grad_n: 1.0, grad_u: 1.0, laplace_z: 1.0, grad_z_quartic: 1.0, consumption: 1.0 }
    }
}

impl DissipationWeights {
    pub fn to_array(self) -> [f64; 5] {
        [self.grad_n, self.grad_u, self.laplace_z, self.grad_z_quartic, self.consumption]
    }

    pub fn from_slice(w: &[f64]) -> Result<Self> {
        match *w {
            [grad_n, grad_u, laplace_z, grad_z_quartic, consumption] => {
                Ok(Self { grad_n, grad_u, laplace_z, grad_z_quartic, consumption })
            }
            _ => Err(Error::Params(format!("dissipation weights need 5 values (got {})", w.len()))),
        }
    }
}

/// Scalar parameters of one simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct SimParams {
    pub trunc: TruncParams,
    pub k: f64,
    pub t_end: f64,
    pub picard_tol: f64,
    pub picard_max_iter: usize,
    pub linsolve_tol: f64,
    /// `None` means `10 × unknowns` of the system being solved.
    pub linsolve_max_iter: Option<usize>,
    pub bound_tol: f64,
    pub potential: PotentialSpec,
    /// Weight of `‖u‖²` in the energy functional.
    pub energy_weight_u: f64,
    /// Weight replacing the unnamed Poincaré constant in the `s < 2` energy term.
    pub energy_weight_n: f64,
    pub dissipation_weights: DissipationWeights,
    pub advection: AdvectionScheme,
    pub n_transport: NTransport,
    pub fluid: FluidSolver,
    /// Retry a failed step as two half steps.
    pub adaptive: bool,
    /// Picard under-relaxation factor in `(0, 1]`.
    pub relaxation: f64,
}

impl SimParams {
    pub fn new(trunc: TruncParams, k: f64) -> Self {
        Self {
            trunc,
            k,
            t_end: 0.0,
            picard_tol: 1e-9,
            picard_max_iter: 200,
            linsolve_tol: 1e-10,
            linsolve_max_iter: None,
            bound_tol: 1e-8,
            potential: PotentialSpec::Zero,
            energy_weight_u: 1.0,
            energy_weight_n: 1.0,
            dissipation_weights: DissipationWeights::default(),
            advection: AdvectionScheme::Upwind,
            n_transport: NTransport::Conservative,
            fluid: FluidSolver::Coupled,
            adaptive: false,
            relaxation: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("k", self.k),
            ("picard_tol", self.picard_tol),
            ("linsolve_tol", self.linsolve_tol),
            ("bound_tol", self.bound_tol),
            ("energy_weight_u", self.energy_weight_u),
            ("energy_weight_n", self.energy_weight_n),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Params(format!("{name} must be > 0 (got {v})")));
            }
        }
        if !(self.t_end >= 0.0) || !self.t_end.is_finite() {
            return Err(Error::Params(format!("t_end must be >= 0 (got {})", self.t_end)));
        }
        if self.picard_max_iter == 0 {
            return Err(Error::Params("picard_max_iter must be >= 1".into()));
        }
        if self.linsolve_max_iter == Some(0) {
            return Err(Error::Params("linsolve_max_iter must be >= 1".into()));
        }
        if !(self.relaxation > 0.0 && self.relaxation <= 1.0) {
            return Err(Error::Params(format!("relaxation must lie in (0, 1] (got {})", self.relaxation)));
        }
        for w in self.dissipation_weights.to_array() {
            if !(w >= 0.0) || !w.is_finite() {
                return Err(Error::Params(format!("dissipation weights must be >= 0 (got {w})")));
            }
        }
        Ok(())
    }

    pub fn max_iter_for(&self, unknowns: usize) -> usize {
        self.linsolve_max_iter.unwrap_or(10 * unknowns.max(1))
    }

    /// Number of steps needed to reach `t_end`.
    pub fn num_steps(&self) -> u64 {
        let ratio = self.t_end / self.k;
        let rounded = ratio.round();
        if (ratio - rounded).abs() <= 1e-9 * rounded.max(1.0) {
            rounded as u64
        } else {
            ratio.ceil() as u64
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> SimParams {
        SimParams::new(TruncParams::with_defaults(2.0).unwrap(), 0.01)
    }

    #[test]
    fn validation() {
        assert!(params().validate().is_ok());
        let mut p = params();
        p.k = 0.0;
        assert!(p.validate().is_err());
        let mut p = params();
        p.relaxation = 1.5;
        assert!(p.validate().is_err());
        let mut p = params();
        p.linsolve_tol = -1.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn step_count() {
        let mut p = params();
        p.t_end = 2.0;
        assert_eq!(p.num_steps(), 200);
        p.k = 0.3;
        p.t_end = 1.0;
        assert_eq!(p.num_steps(), 4);
        p.t_end = 0.0;
        assert_eq!(p.num_steps(), 0);
    }

    #[test]
    fn linear_potential_is_exact() {
        let grid = Grid::cube(2, 4, 1.0).unwrap();
        let pot = PotentialSpec::Linear(vec![0.5, -2.0]).evaluate(&grid).unwrap();
        assert!(pot.grad.component(0).iter().all(|&v| v == 0.5));
        assert!(pot.grad.component(1).iter().all(|&v| v == -2.0));
        assert!((pot.phi.values()[0] - (0.5 * 0.125 - 2.0 * 0.125)).abs() < 1e-15);
        assert!(PotentialSpec::Linear(vec![1.0]).evaluate(&grid).is_err());
    }
}
