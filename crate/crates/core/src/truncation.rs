//! Pointwise truncation operators and the scalar inequalities the scheme
//! relies on.
//!
//! `t_alpha` keeps the chemical variable `z` away from zero, `t0m` clamps the
//! cell density into `[0, m]`, and `g0m` is the C¹ regularization of `n^s / s`
//! whose derivative is `t0m(n) n^(s-2)`. All functions are total and pure.

use crate::error::{Error, Result};

/// Lower truncation: `max(x, alpha)`.
#[inline]
pub fn t_alpha(x: f64, alpha: f64) -> f64 {
    if x <= alpha {
        alpha
    } else {
        x
    }
}

/// Lower-upper truncation: clamp of `x` to `[0, m]`.
#[inline]
pub fn t0m(x: f64, m: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x >= m {
        m
    } else {
        x
    }
}

/// Truncated consumption potential.
///
/// `0` for `x <= 0`, `x^s / s` on `[0, m]` and the linear-in-`x^(s-1)`
/// continuation `m x^(s-1)/(s-1) - m^s/(s(s-1))` above `m`, which makes the
/// function C¹ at both kinks.
///
/// Above `m` the continuation is evaluated as
/// `m^s/s + m^s expm1((s-1) ln(x/m))/(s-1)`, which avoids the cancellation
/// of the two `1/(s-1)`-sized terms when `s` is close to 1.
#[inline]
pub fn g0m(x: f64, m: f64, s: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x <= m {
        x.powf(s) / s
    } else {
        let ms = m.powf(s);
        ms / s + ms * ((s - 1.0) * (x / m).ln()).exp_m1() / (s - 1.0)
    }
}

/// Derivative of [`g0m`]: `t0m(x) x^(s-2)` for `x > 0`, `0` otherwise.
///
/// For `s < 2` the value near `0⁺` is `x^(s-1) -> 0`, so `0` is the continuous
/// extension at the origin.
#[inline]
pub fn g0m_prime(x: f64, m: f64, s: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x <= m {
        x.powf(s - 1.0)
    } else {
        m * x.powf(s - 2.0)
    }
}

/// Checks `x^(s-q) t0m(x)^q <= s g0m(x)`.
///
/// The inequality is exact; the slack only absorbs rounding and is relative
/// to the magnitude of the right-hand side.
pub fn comparison_holds(x: f64, s: f64, q: f64, m: f64) -> bool {
    if x <= 0.0 {
        return true;
    }
    let lhs = x.powf(s - q) * t0m(x, m).powf(q);
    let rhs = s * g0m(x, m, s);
    lhs <= rhs + 1e-12 * rhs.abs().max(1.0)
}

/// Closed-form discrete Gronwall bound for `(a^n - a^(n-1))/k + lambda a^n <= c`:
/// `(1+lambda k)^-n a0 + (c/lambda)(1 - (1+lambda k)^-n)`.
pub fn gronwall_bound(a0: f64, lambda: f64, c: f64, k: f64, n: u64) -> f64 {
    let log_growth = -(n as f64) * (lambda * k).ln_1p();
    let decay = log_growth.exp();
    let filled = -log_growth.exp_m1();
    decay * a0 + (c / lambda) * filled
}

/// Truncation levels `alpha` (for `z`), `m` (for `n`) and consumption exponent `s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncParams {
    alpha: f64,
    m: f64,
    s: f64,
}

impl TruncParams {
    pub fn new(alpha: f64, m: f64, s: f64) -> Result<Self> {
        if !(s > 1.0) || !s.is_finite() {
            return Err(Error::Params(format!("s must be > 1 (got {s})")));
        }
        if !(m > 0.0) || !m.is_finite() {
            return Err(Error::Params(format!("m must be > 0 (got {m})")));
        }
        let alpha_max = Self::alpha_bound(s);
        if !(alpha > 0.0) || alpha >= alpha_max {
            return Err(Error::Params(format!(
                "alpha must be < min(1, 2/s) = {alpha_max} and > 0 (got {alpha})"
            )));
        }
        Ok(Self { alpha, m, s })
    }

    /// Exclusive upper bound `min(1, 2/s)` for `alpha`.
    pub fn alpha_bound(s: f64) -> f64 {
        1.0_f64.min(2.0 / s)
    }

    /// `alpha = 0.1 min(1, 2/s)`, `m = 1e6`.
    pub fn with_defaults(s: f64) -> Result<Self> {
        Self::new(0.1 * Self::alpha_bound(s), 1e6, s)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    #[inline]
    pub fn t_alpha(&self, z: f64) -> f64 {
        t_alpha(z, self.alpha)
    }

    #[inline]
    pub fn t0m(&self, n: f64) -> f64 {
        t0m(n, self.m)
    }

    #[inline]
    pub fn g0m(&self, n: f64) -> f64 {
        g0m(n, self.m, self.s)
    }

    #[inline]
    pub fn g0m_prime(&self, n: f64) -> f64 {
        g0m_prime(n, self.m, self.s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn t_alpha_examples() {
        assert_eq!(t_alpha(0.3, 0.5), 0.5);
        assert_eq!(t_alpha(0.5, 0.5), 0.5);
        assert_eq!(t_alpha(0.7, 0.5), 0.7);
    }

    #[test]
    fn t0m_examples() {
        assert_eq!(t0m(-1.0, 2.0), 0.0);
        assert_eq!(t0m(1.5, 2.0), 1.5);
        assert_eq!(t0m(3.0, 2.0), 2.0);
    }

    #[test]
    fn g0m_examples() {
        assert_eq!(g0m(0.5, 1.0, 2.0), 0.125);
        assert_eq!(g0m(1.0, 1.0, 2.0), 0.5);
        // upper branch evaluated at the kink
        let upper = 1.0 * 1.0_f64.powf(1.0) / 1.0 - 1.0 / 2.0;
        assert_eq!(upper, 0.5);
        assert_eq!(g0m(2.0, 1.0, 2.0), 1.5);
    }

    #[test]
    fn g0m_prime_examples() {
        assert_eq!(g0m_prime(1.5, 1.0, 2.0), 1.0);
        assert_eq!(g0m_prime(0.0, 1.0, 1.5), 0.0);
        assert!((g0m_prime(0.25, 1.0, 3.0) - 0.0625).abs() < 1e-15);
        let h = 1e-6;
        let fd = (g0m(0.25 + h, 1.0, 3.0) - g0m(0.25 - h, 1.0, 3.0)) / (2.0 * h);
        assert!((fd - 0.0625).abs() < 1e-6);
    }

    #[test]
    fn comparison_examples() {
        assert!(comparison_holds(2.0, 3.0, 2.0, 1.0));
        let lhs = 2.0_f64.powf(1.0) * 1.0;
        let rhs = 3.0 * g0m(2.0, 1.0, 3.0);
        assert_eq!(lhs, 2.0);
        assert!((rhs - 5.5).abs() < 1e-14);
        assert!(comparison_holds(-1.0, 2.0, 1.0, 1.0));
        assert!(comparison_holds(0.5, 2.0, 1.0, 1.0));
        assert!((0.5_f64 * t0m(0.5, 1.0) - 2.0 * g0m(0.5, 1.0, 2.0)).abs() < 1e-16);
    }

    #[test]
    fn gronwall_examples() {
        assert!((gronwall_bound(1.0, 1.0, 0.0, 1.0, 3) - 0.125).abs() < 1e-15);
        assert!((gronwall_bound(0.0, 1.0, 2.0, 0.5, 1) - 2.0 / 3.0).abs() < 1e-15);
        assert!((gronwall_bound(5.0, 2.0, 4.0, 0.1, 1_000_000) - 2.0).abs() < 1e-9);
    }

    #[test]
    fn trunc_params_validation() {
        assert!(TruncParams::new(0.5, 10.0, 2.0).is_ok());
        assert!(TruncParams::new(1.0, 10.0, 2.0).is_err());
        assert!(TruncParams::new(0.7, 10.0, 3.0).is_err());
        assert!(TruncParams::new(0.1, 10.0, 1.0).is_err());
        assert!(TruncParams::new(0.1, 0.0, 2.0).is_err());
        assert!(TruncParams::new(0.0, 1.0, 2.0).is_err());
        let d = TruncParams::with_defaults(4.0).unwrap();
        assert!((d.alpha() - 0.05).abs() < 1e-15);
        assert_eq!(d.m(), 1e6);
    }

    #[test]
    fn truncations_bounds_and_lipschitz() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10_000 {
            let alpha = rng.gen_range(1e-3..1.0);
            let m = rng.gen_range(1e-2..10.0);
            let x = rng.gen_range(-20.0..20.0);
            let y = rng.gen_range(-20.0..20.0);
            assert!(t_alpha(x, alpha) >= alpha);
            if x >= alpha {
                assert_eq!(t_alpha(x, alpha), x);
            }
            let tx = t0m(x, m);
            assert!((0.0..=m).contains(&tx));
            assert!((tx - t0m(y, m)).abs() <= (x - y).abs());
            assert!((t_alpha(x, alpha) - t_alpha(y, alpha)).abs() <= (x - y).abs());
        }
    }

    #[test]
    fn g0m_is_c1_at_kinks() {
        for &(m, s) in &[(1.0, 1.5), (2.0, 2.0), (0.5, 3.5), (5.0, 1.1)] {
            for &kink in &[0.0, m] {
                for e in [1e-4, 1e-5, 1e-6, 1e-7, 1e-8] {
                    let jump = (g0m(kink + e, m, s) - g0m(kink - e, m, s)).abs();
                    let lip = 2.0 * g0m_prime(kink + 1e-3_f64.max(e), m, s).max(g0m_prime(kink.max(e), m, s)) + 1.0;
                    assert!(jump <= lip * 2.0 * e, "g0m jump {jump} at {kink}");
                    let djump = (g0m_prime(kink + e, m, s) - g0m_prime(kink - e, m, s)).abs();
                    // derivative is Hölder near 0 for s < 2, Lipschitz elsewhere
                    let bound = if kink == 0.0 && s < 2.0 { 2.0 * e.powf(s - 1.0) } else { (s + 1.0) * m.max(1.0).powf(s) * 2.0 * e };
                    assert!(djump <= bound + 1e-15, "g0m' jump {djump} at {kink} (m={m}, s={s})");
                }
            }
        }
    }
}
