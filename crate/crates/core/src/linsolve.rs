//! Matrix-free Krylov solvers: Jacobi-preconditioned CG for symmetric
//! (semi)definite operators and BiCGStab for the nonsymmetric transport and
//! momentum operators.
//!
//! Both solvers stop on the relative residual `‖b - A x‖₂ <= tol ‖b‖₂` and
//! confirm it with a freshly computed residual before returning.

use crate::error::SolveError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NullSpace {
    #[default]
    None,
    /// Constant vectors; right-hand sides must have zero sum and solutions
    /// are returned with zero mean.
    Constants,
}

/// Preconditioner application `z = M⁻¹ r`.
type Preconditioner<'a> = &'a dyn Fn(&[f64], &mut [f64]);

#[allow(clippy::len_without_is_empty)]
pub trait LinearOperator {
    fn len(&self) -> usize;

    fn apply(&self, x: &[f64], y: &mut [f64]);

    fn is_symmetric(&self) -> bool {
        false
    }

    fn null_space(&self) -> NullSpace {
        NullSpace::None
    }

    /// Diagonal for Jacobi scaling, when cheaply available.
    fn diagonal(&self) -> Option<Vec<f64>> {
        None
    }
}

/// Adapter turning a closure into a [`LinearOperator`].
pub struct FnOperator<F> {
    len: usize,
    apply: F,
    symmetric: bool,
    null_space: NullSpace,
}

impl<F: Fn(&[f64], &mut [f64])> FnOperator<F> {
    pub fn new(len: usize, apply: F) -> Self {
        Self { len, apply, symmetric: false, null_space: NullSpace::None }
    }

    pub fn symmetric(mut self) -> Self {
        self.symmetric = true;
        self
    }

    pub fn with_null_space(mut self, ns: NullSpace) -> Self {
        self.null_space = ns;
        self
    }
}

impl<F: Fn(&[f64], &mut [f64])> LinearOperator for FnOperator<F> {
    fn len(&self) -> usize {
        self.len
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        (self.apply)(x, y)
    }

    fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    fn null_space(&self) -> NullSpace {
        self.null_space
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    /// Relative residual `‖b - A x‖₂ / ‖b‖₂` recomputed after the solve.
    pub residual: f64,
}

/// Dense row-major matrix of `op`, built column by column from unit vectors.
pub fn assemble(op: &dyn LinearOperator) -> Vec<f64> {
    let n = op.len();
    let mut mat = vec![0.0; n * n];
    let mut e = vec![0.0; n];
    let mut col = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        op.apply(&e, &mut col);
        for i in 0..n {
            mat[i * n + j] = col[i];
        }
        e[j] = 0.0;
    }
    mat
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn remove_mean(v: &mut [f64]) {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= mean);
}

fn residual(op: &dyn LinearOperator, b: &[f64], x: &[f64], r: &mut [f64]) {
    op.apply(x, r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    if op.null_space() == NullSpace::Constants {
        remove_mean(r);
    }
}

/// Validates and, for a constant null space, projects the right-hand side.
fn prepare_rhs(op: &dyn LinearOperator, rhs: &[f64]) -> Result<Vec<f64>, SolveError> {
    assert_eq!(rhs.len(), op.len(), "rhs length mismatch");
    if rhs.iter().any(|v| !v.is_finite()) {
        return Err(SolveError::NonFinite);
    }
    let mut b = rhs.to_vec();
    if op.null_space() == NullSpace::Constants {
        let sum: f64 = b.iter().sum();
        let scale: f64 = b.iter().map(|v| v.abs()).sum();
        if sum.abs() > 1e-10 * scale.max(f64::MIN_POSITIVE) {
            return Err(SolveError::Incompatible { sum });
        }
        remove_mean(&mut b);
    }
    Ok(b)
}

fn finish(op: &dyn LinearOperator, x: &mut [f64]) -> Result<(), SolveError> {
    if op.null_space() == NullSpace::Constants {
        remove_mean(x);
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(SolveError::NonFinite);
    }
    Ok(())
}

/// Conjugate gradients with Jacobi scaling when the operator exposes its
/// diagonal. `x` holds the initial guess on entry and the solution on exit.
pub fn cg_solve(op: &dyn LinearOperator, rhs: &[f64], x: &mut [f64], tol: f64, max_iter: usize) -> Result<SolveStats, SolveError> {
    let n = op.len();
    assert_eq!(x.len(), n, "solution length mismatch");
    let b = prepare_rhs(op, rhs)?;
    let bnorm = norm(&b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(SolveStats { iterations: 0, residual: 0.0 });
    }
    let inv_diag: Option<Vec<f64>> = op
        .diagonal()
        .filter(|d| d.iter().all(|v| *v > 0.0))
        .map(|d| d.iter().map(|v| 1.0 / v).collect());
    let target = tol * bnorm;

    let mut r = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut ap = vec![0.0; n];
    let mut iterations = 0;
    loop {
        residual(op, &b, x, &mut r);
        let rnorm = norm(&r);
        if !rnorm.is_finite() {
            return Err(SolveError::NonFinite);
        }
        if rnorm <= target {
            finish(op, x)?;
            return Ok(SolveStats { iterations, residual: rnorm / bnorm });
        }
        if iterations >= max_iter {
            return Err(SolveError::NonConvergence { iterations, residual: rnorm / bnorm });
        }
        // (re)start from the true residual
        precondition(&inv_diag, &r, &mut z);
        p.copy_from_slice(&z);
        let mut rz = dot(&r, &z);
        while iterations < max_iter {
            op.apply(&p, &mut ap);
            let pap = dot(&p, &ap);
            if !(pap > 0.0) {
                break;
            }
            let step = rz / pap;
            for i in 0..n {
                x[i] += step * p[i];
                r[i] -= step * ap[i];
            }
            iterations += 1;
            if norm(&r) <= 0.5 * target {
                break;
            }
            precondition(&inv_diag, &r, &mut z);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
    }
}

fn precondition(inv_diag: &Option<Vec<f64>>, r: &[f64], z: &mut [f64]) {
    match inv_diag {
        Some(d) => {
            for i in 0..r.len() {
                z[i] = d[i] * r[i];
            }
        }
        None => z.copy_from_slice(r),
    }
}

/// Unpreconditioned BiCGStab. `x` holds the initial guess on entry.
///
/// Without preconditioning every Krylov update lies in the span of the
/// operator's powers applied to the initial residual; for conservative
/// operators this keeps the volume sum of `x` fixed.
pub fn bicgstab_solve(op: &dyn LinearOperator, rhs: &[f64], x: &mut [f64], tol: f64, max_iter: usize) -> Result<SolveStats, SolveError> {
    bicgstab_impl(op, None, rhs, x, tol, max_iter)
}

/// BiCGStab with right preconditioning: `precond(r, z)` writes `z ≈ A⁻¹ r`.
/// Convergence is measured on the true (unpreconditioned) residual.
pub fn bicgstab_solve_preconditioned(
    op: &dyn LinearOperator,
    precond: &dyn Fn(&[f64], &mut [f64]),
    rhs: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> Result<SolveStats, SolveError> {
    bicgstab_impl(op, Some(precond), rhs, x, tol, max_iter)
}

fn bicgstab_impl(
    op: &dyn LinearOperator,
    precond: Option<Preconditioner<'_>>,
    rhs: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> Result<SolveStats, SolveError> {
    const MAX_RESTARTS: usize = 8;
    let n = op.len();
    assert_eq!(x.len(), n, "solution length mismatch");
    let b = prepare_rhs(op, rhs)?;
    let bnorm = norm(&b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(SolveStats { iterations: 0, residual: 0.0 });
    }
    let target = tol * bnorm;
    let project = op.null_space() == NullSpace::Constants;
    let apply_m = |src: &[f64], dst: &mut Vec<f64>| match precond {
        Some(m) => m(src, dst),
        None => dst.copy_from_slice(src),
    };

    let mut r = vec![0.0; n];
    let mut r_hat = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut p_hat = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut s_hat = vec![0.0; n];
    let mut t = vec![0.0; n];
    let mut iterations = 0;
    let mut restarts = 0;
    let mut last_breakdown: Option<SolveError> = None;
    loop {
        residual(op, &b, x, &mut r);
        let rnorm = norm(&r);
        if !rnorm.is_finite() {
            return Err(SolveError::NonFinite);
        }
        if rnorm <= target {
            finish(op, x)?;
            return Ok(SolveStats { iterations, residual: rnorm / bnorm });
        }
        if iterations >= max_iter {
            return Err(SolveError::NonConvergence { iterations, residual: rnorm / bnorm });
        }
        if restarts > MAX_RESTARTS {
            return Err(last_breakdown.unwrap_or(SolveError::NonConvergence { iterations, residual: rnorm / bnorm }));
        }
        restarts += 1;

        r_hat.copy_from_slice(&r);
        let mut rho = dot(&r_hat, &r);
        p.copy_from_slice(&r);
        let rhat_norm = norm(&r_hat);
        while iterations < max_iter {
            apply_m(&p, &mut p_hat);
            op.apply(&p_hat, &mut v);
            if project {
                remove_mean(&mut v);
            }
            let rv = dot(&r_hat, &v);
            if rv.abs() <= 1e-30 * rhat_norm * norm(&v) || !rv.is_finite() {
                last_breakdown = Some(SolveError::Breakdown { iteration: iterations, rho: rv });
                break;
            }
            let alpha = rho / rv;
            for i in 0..n {
                s[i] = r[i] - alpha * v[i];
            }
            iterations += 1;
            if norm(&s) <= 0.5 * target {
                for i in 0..n {
                    x[i] += alpha * p_hat[i];
                }
                r.copy_from_slice(&s);
                break;
            }
            apply_m(&s, &mut s_hat);
            op.apply(&s_hat, &mut t);
            if project {
                remove_mean(&mut t);
            }
            let tt = dot(&t, &t);
            if !(tt > 0.0) {
                last_breakdown = Some(SolveError::Breakdown { iteration: iterations, rho: tt });
                for i in 0..n {
                    x[i] += alpha * p_hat[i];
                }
                break;
            }
            let omega = dot(&t, &s) / tt;
            for i in 0..n {
                x[i] += alpha * p_hat[i] + omega * s_hat[i];
                r[i] = s[i] - omega * t[i];
            }
            if norm(&r) <= 0.5 * target {
                break;
            }
            if omega == 0.0 || !omega.is_finite() {
                last_breakdown = Some(SolveError::Breakdown { iteration: iterations, rho: omega });
                break;
            }
            let rho_new = dot(&r_hat, &r);
            if rho_new.abs() <= 1e-30 * rhat_norm * norm(&r) {
                last_breakdown = Some(SolveError::Breakdown { iteration: iterations, rho: rho_new });
                break;
            }
            let beta = (rho_new / rho) * (alpha / omega);
            rho = rho_new;
            for i in 0..n {
                p[i] = r[i] + beta * (p[i] - omega * v[i]);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn neumann_1d(n: usize) -> impl Fn(&[f64], &mut [f64]) {
        move |x: &[f64], y: &mut [f64]| {
            for i in 0..n {
                let mut acc = 0.0;
                if i > 0 {
                    acc += x[i] - x[i - 1];
                }
                if i + 1 < n {
                    acc += x[i] - x[i + 1];
                }
                y[i] = acc;
            }
        }
    }

    fn dense_solve(mat: &[f64], b: &[f64]) -> Vec<f64> {
        let n = b.len();
        let m = nalgebra::DMatrix::from_row_slice(n, n, mat);
        m.lu().solve(&nalgebra::DVector::from_column_slice(b)).expect("nonsingular").as_slice().to_vec()
    }

    #[test]
    fn identity_in_one_iteration() {
        let op = FnOperator::new(5, |x: &[f64], y: &mut [f64]| y.copy_from_slice(x)).symmetric();
        let b = [1.0, -2.0, 3.0, 0.5, 4.0];
        let mut x = vec![0.0; 5];
        let stats = cg_solve(&op, &b, &mut x, 1e-12, 10).unwrap();
        assert_eq!(stats.iterations, 1);
        assert_eq!(x, b);
    }

    #[test]
    fn neumann_poisson_matches_dense() {
        let n = 8;
        let op = FnOperator::new(n, neumann_1d(n)).symmetric().with_null_space(NullSpace::Constants);
        let mut b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).sin()).collect();
        let mean = b.iter().sum::<f64>() / n as f64;
        b.iter_mut().for_each(|v| *v -= mean);
        let mut x = vec![0.0; n];
        cg_solve(&op, &b, &mut x, 1e-13, 100).unwrap();

        // bordered system pins the mean to zero
        let mat = assemble(&op);
        let m = n + 1;
        let mut big = vec![0.0; m * m];
        for i in 0..n {
            for j in 0..n {
                big[i * m + j] = mat[i * n + j];
            }
            big[i * m + n] = 1.0;
            big[n * m + i] = 1.0;
        }
        let mut rhs = b.clone();
        rhs.push(0.0);
        let exact = dense_solve(&big, &rhs);
        for i in 0..n {
            assert!((x[i] - exact[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn incompatible_rhs_is_rejected() {
        let n = 8;
        let op = FnOperator::new(n, neumann_1d(n)).symmetric().with_null_space(NullSpace::Constants);
        let b = vec![1.0; n];
        let mut x = vec![0.0; n];
        assert!(matches!(cg_solve(&op, &b, &mut x, 1e-10, 100), Err(SolveError::Incompatible { .. })));
    }

    #[test]
    fn bicgstab_agrees_with_cg_on_spd() {
        let n = 12;
        let lap = neumann_1d(n);
        let apply = move |x: &[f64], y: &mut [f64]| {
            lap(x, y);
            for i in 0..n {
                y[i] += 0.3 * x[i];
            }
        };
        let op = FnOperator::new(n, apply).symmetric();
        let b: Vec<f64> = (0..n).map(|i| 1.0 + i as f64).collect();
        let mut x1 = vec![0.0; n];
        let mut x2 = vec![0.0; n];
        cg_solve(&op, &b, &mut x1, 1e-13, 200).unwrap();
        bicgstab_solve(&op, &b, &mut x2, 1e-13, 200).unwrap();
        for i in 0..n {
            assert!((x1[i] - x2[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn upwind_advection_diffusion_matches_dense() {
        let n = 16;
        let (h, k, vel) = (1.0 / 16.0, 0.05, 3.0);
        let apply = move |x: &[f64], y: &mut [f64]| {
            for i in 0..n {
                let mut acc = x[i] / k;
                if i > 0 {
                    acc += (x[i] - x[i - 1]) / (h * h);
                    acc -= vel * x[i - 1] / h; // inflow from the left face
                }
                if i + 1 < n {
                    acc += (x[i] - x[i + 1]) / (h * h);
                    acc += vel * x[i] / h; // outflow through the right face
                }
                y[i] = acc;
            }
        };
        let op = FnOperator::new(n, apply);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut x = vec![0.0; n];
        let stats = bicgstab_solve(&op, &b, &mut x, 1e-13, 500).unwrap();
        assert!(stats.residual <= 1e-13);
        let exact = dense_solve(&assemble(&op), &b);
        for i in 0..n {
            assert!((x[i] - exact[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn singular_operator_fails_loudly() {
        let n = 10;
        let op = FnOperator::new(n, neumann_1d(n));
        let b = vec![1.0; n];
        let mut x = vec![0.0; n];
        let res = bicgstab_solve(&op, &b, &mut x, 1e-10, 200);
        assert!(matches!(res, Err(SolveError::Breakdown { .. }) | Err(SolveError::NonConvergence { .. })), "{res:?}");
    }

    #[test]
    fn residual_contract_holds() {
        let n = 30;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let coeffs: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..2.0)).collect();
        let c2 = coeffs.clone();
        let op = FnOperator::new(n, move |x: &[f64], y: &mut [f64]| {
            for i in 0..n {
                y[i] = c2[i] * x[i] + if i > 0 { -0.4 * x[i - 1] } else { 0.0 } + if i + 1 < n { -0.2 * x[i + 1] } else { 0.0 };
            }
        });
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut x = vec![0.0; n];
        bicgstab_solve(&op, &b, &mut x, 1e-10, 300).unwrap();
        let mut ax = vec![0.0; n];
        op.apply(&x, &mut ax);
        let r: f64 = ax.iter().zip(&b).map(|(a, b)| (b - a).powi(2)).sum::<f64>().sqrt();
        assert!(r <= 1e-10 * norm(&b));
    }

    #[test]
    fn operator_linearity() {
        let n = 9;
        let op = FnOperator::new(n, neumann_1d(n));
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let f: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let g: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (a, b) = (0.7, -1.3);
        let comb: Vec<f64> = f.iter().zip(&g).map(|(x, y)| a * x + b * y).collect();
        let (mut lf, mut lg, mut lc) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        op.apply(&f, &mut lf);
        op.apply(&g, &mut lg);
        op.apply(&comb, &mut lc);
        for i in 0..n {
            assert!((lc[i] - (a * lf[i] + b * lg[i])).abs() < 1e-12);
        }
    }
}
