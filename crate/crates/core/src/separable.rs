//! Exact solver for `(σ - Δ)` with per-axis boundary conditions on a box,
//! by fast diagonalization: the 1D second-difference matrices have closed
//! form eigenbases (cosine / sine families), so the tensor-product operator
//! is diagonal in the product basis. Used as a preconditioner for the fluid
//! block, where the actual operator adds lagged convection.

use std::f64::consts::PI;

/// Boundary treatment of one axis of a box of unknowns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Axis1d {
    /// `n` cell unknowns with zero-flux ends.
    Neumann,
    /// `n - 1` interior node unknowns, zero at both end nodes.
    DirichletNodes,
    /// `n` cell unknowns, zero at the end faces via the mirrored ghost `-x`.
    DirichletMirror,
}

#[derive(Debug, Clone)]
struct Basis {
    m: usize,
    /// Orthonormal eigenvectors as columns, row-major `q[i * m + j]`.
    q: Vec<f64>,
    /// Eigenvalues of `-D²` (non-negative).
    lambda: Vec<f64>,
}

impl Basis {
    fn new(kind: Axis1d, n: usize, h: f64) -> Self {
        let lam = |j: usize| 4.0 / (h * h) * (PI * j as f64 / (2.0 * n as f64)).sin().powi(2);
        let (m, vec_fn): (usize, Box<dyn Fn(usize, usize) -> f64>) = match kind {
            Axis1d::Neumann => (n, Box::new(move |i, j| (PI * j as f64 * (i as f64 + 0.5) / n as f64).cos())),
            Axis1d::DirichletNodes => (n - 1, Box::new(move |i, j| (PI * (j + 1) as f64 * (i + 1) as f64 / n as f64).sin())),
            Axis1d::DirichletMirror => (n, Box::new(move |i, j| (PI * (j + 1) as f64 * (i as f64 + 0.5) / n as f64).sin())),
        };
        let mut q = vec![0.0; m * m];
        let mut lambda = vec![0.0; m];
        for j in 0..m {
            lambda[j] = match kind {
                Axis1d::Neumann => lam(j),
                _ => lam(j + 1),
            };
            let norm = (0..m).map(|i| vec_fn(i, j).powi(2)).sum::<f64>().sqrt();
            for i in 0..m {
                q[i * m + j] = vec_fn(i, j) / norm;
            }
        }
        Self { m, q, lambda }
    }
}

/// `(σ - Δ)⁻¹` on a box of `dims` unknowns stored x-fastest.
#[derive(Debug, Clone)]
pub(crate) struct SeparableSolver {
    dims: [usize; 3],
    bases: Vec<Basis>,
    shift: f64,
}

impl SeparableSolver {
    /// `axes[a] = (kind, cells along a, spacing along a)`.
    pub(crate) fn new(axes: &[(Axis1d, usize, f64)], shift: f64) -> Self {
        let bases: Vec<Basis> = axes.iter().map(|&(kind, n, h)| Basis::new(kind, n, h)).collect();
        let mut dims = [1; 3];
        for (a, b) in bases.iter().enumerate() {
            dims[a] = b.m;
        }
        Self { dims, bases, shift }
    }

    pub(crate) fn len(&self) -> usize {
        self.dims.iter().product()
    }

    /// Applies `Qᵀ` (forward) or `Q` (backward) along one axis in place.
    fn transform(&self, axis: usize, data: &mut [f64], forward: bool, line: &mut Vec<f64>, out: &mut Vec<f64>) {
        let basis = &self.bases[axis];
        let m = basis.m;
        let stride: usize = self.dims[..axis].iter().product();
        let outer = self.len() / (m * stride);
        line.resize(m, 0.0);
        out.resize(m, 0.0);
        for o in 0..outer {
            for inner in 0..stride {
                let base = o * m * stride + inner;
                for i in 0..m {
                    line[i] = data[base + i * stride];
                }
                out.iter_mut().for_each(|v| *v = 0.0);
                if forward {
                    for i in 0..m {
                        let li = line[i];
                        let row = &basis.q[i * m..(i + 1) * m];
                        for j in 0..m {
                            out[j] += row[j] * li;
                        }
                    }
                } else {
                    for i in 0..m {
                        let row = &basis.q[i * m..(i + 1) * m];
                        out[i] = row.iter().zip(line.iter()).map(|(a, b)| a * b).sum();
                    }
                }
                for i in 0..m {
                    data[base + i * stride] = out[i];
                }
            }
        }
    }

    /// Overwrites `data` with `(σ - Δ)⁻¹ data`; a singular zero mode is
    /// mapped to zero.
    pub(crate) fn solve_in_place(&self, data: &mut [f64]) {
        assert_eq!(data.len(), self.len());
        let mut line = Vec::new();
        let mut out = Vec::new();
        for a in 0..self.bases.len() {
            self.transform(a, data, true, &mut line, &mut out);
        }
        let [nx, ny, _] = self.dims;
        let lam = |a: usize, i: usize| self.bases.get(a).map_or(0.0, |b| b.lambda[i]);
        for (idx, v) in data.iter_mut().enumerate() {
            let i = idx % nx;
            let j = (idx / nx) % ny;
            let k = idx / (nx * ny);
            let d = self.shift + lam(0, i) + lam(1, j) + lam(2, k);
            *v = if d.abs() > 1e-300 { *v / d } else { 0.0 };
        }
        for a in 0..self.bases.len() {
            self.transform(a, data, false, &mut line, &mut out);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Assembles `-D²` for one axis as a dense matrix.
    fn dense_1d(kind: Axis1d, n: usize, h: f64) -> (usize, Vec<f64>) {
        let m = if kind == Axis1d::DirichletNodes { n - 1 } else { n };
        let mut a = vec![0.0; m * m];
        let ih2 = 1.0 / (h * h);
        for i in 0..m {
            let mut diag = 2.0;
            if i > 0 {
                a[i * m + i - 1] = -ih2;
            } else {
                diag += match kind {
                    Axis1d::Neumann => -1.0,
                    Axis1d::DirichletNodes => 0.0,
                    Axis1d::DirichletMirror => 1.0,
                };
            }
            if i + 1 < m {
                a[i * m + i + 1] = -ih2;
            } else {
                diag += match kind {
                    Axis1d::Neumann => -1.0,
                    Axis1d::DirichletNodes => 0.0,
                    Axis1d::DirichletMirror => 1.0,
                };
            }
            a[i * m + i] = diag * ih2;
        }
        (m, a)
    }

    #[test]
    fn inverts_tensor_operator() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let kinds = [Axis1d::Neumann, Axis1d::DirichletNodes, Axis1d::DirichletMirror];
        for &kx in &kinds {
            for &ky in &kinds {
                let (nx, ny, hx, hy, shift) = (6, 5, 0.2, 0.3, 2.5);
                let solver = SeparableSolver::new(&[(kx, nx, hx), (ky, ny, hy)], shift);
                let (mx, ax) = dense_1d(kx, nx, hx);
                let (my, ay) = dense_1d(ky, ny, hy);
                assert_eq!(solver.len(), mx * my);
                let x: Vec<f64> = (0..mx * my).map(|_| rng.gen_range(-1.0..1.0)).collect();
                // b = (σ + Ax ⊗ I + I ⊗ Ay) x
                let mut b = vec![0.0; mx * my];
                for j in 0..my {
                    for i in 0..mx {
                        let mut acc = shift * x[j * mx + i];
                        for ii in 0..mx {
                            acc += ax[i * mx + ii] * x[j * mx + ii];
                        }
                        for jj in 0..my {
                            acc += ay[j * my + jj] * x[jj * mx + i];
                        }
                        b[j * mx + i] = acc;
                    }
                }
                solver.solve_in_place(&mut b);
                for (u, v) in b.iter().zip(&x) {
                    assert!((u - v).abs() < 1e-10, "{kx:?} {ky:?}");
                }
            }
        }
    }

    #[test]
    fn singular_neumann_mode_is_dropped() {
        let solver = SeparableSolver::new(&[(Axis1d::Neumann, 4, 0.25), (Axis1d::Neumann, 4, 0.25)], 0.0);
        let mut ones = vec![1.0; 16];
        solver.solve_in_place(&mut ones);
        assert!(ones.iter().all(|v| v.abs() < 1e-12));
    }
}
