//! Closed-form companions to the permutation test.
//!
//! Two pieces live here: the probability that a link validated by the
//! zero-exceedance rule actually has a p-value above the corrected level,
//! and the normal-theory null density of the sample correlation coefficient
//! together with the threshold it implies.
//!
//! Under the null of uncorrelated Gaussian series of length `T`,
//!
//! ```text
//! f(r, T) = (1 - r^2)^((T-1)/2 - 2) / B(1/2, (T-1)/2 - 1)
//! ```
//!
//! With `u = r^2` the upper tail becomes a Beta tail:
//! `P(r > rho) = I_{1 - rho^2}((T-1)/2 - 1, 1/2) / 2` for `rho >= 0`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::special::{beta_reg, beta_reg_complement, ln_beta};

/// Exact and exponential forms of the false-positive probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FalsePositive {
    /// `(1 - q0/N^2)^(k N^2 + 1)`
    pub exact: f64,
    /// `exp(-k q0)`
    pub approx: f64,
}

/// Probability that a link validated with zero exceedances over
/// `Q = k N^2` replicates has a p-value at or above `q0 / N^2`.
pub fn false_positive_prob(q0: f64, k: u64, n: u64) -> Result<FalsePositive> {
    if !(0.0..=1.0).contains(&q0) {
        return Err(Error::Config(format!("q0 = {q0} outside [0, 1]")));
    }
    if k < 1 || n < 1 {
        return Err(Error::Config(format!(
            "replicates-per-test k={k} and size N={n} must be at least 1"
        )));
    }
    let tests = (n as f64) * (n as f64);
    let exponent = (k as f64) * tests + 1.0;
    let exact = (exponent * (-q0 / tests).ln_1p()).exp();
    let approx = (-(k as f64) * q0).exp();
    Ok(FalsePositive { exact, approx })
}

/// Null density of the sample correlation for series of length `T`.
#[derive(Debug, Clone, Copy)]
pub struct NullCorrDensity {
    t: usize,
    shape: f64,
    ln_norm: f64,
}

impl NullCorrDensity {
    pub fn new(t: usize) -> Result<Self> {
        if t < 5 {
            return Err(Error::Config(format!(
                "null correlation density needs T >= 5, got {t}"
            )));
        }
        let shape = (t as f64 - 1.0) / 2.0 - 1.0;
        Ok(NullCorrDensity {
            t,
            shape,
            ln_norm: ln_beta(0.5, shape),
        })
    }

    pub fn len(&self) -> usize {
        self.t
    }

    /// Euler beta normalizer B(1/2, (T-1)/2 - 1).
    pub fn normalizer(&self) -> f64 {
        self.ln_norm.exp()
    }

    pub fn ln_density(&self, r: f64) -> Result<f64> {
        if !(r.abs() < 1.0) {
            return Err(Error::Numeric(format!(
                "correlation {r} outside the open interval (-1, 1)"
            )));
        }
        let one_minus_r2 = (1.0 - r) * (1.0 + r);
        Ok((self.shape - 1.0) * one_minus_r2.ln() - self.ln_norm)
    }

    pub fn density(&self, r: f64) -> Result<f64> {
        self.ln_density(r).map(f64::exp)
    }

    /// P(r > rho).
    pub fn upper_tail(&self, rho: f64) -> Result<f64> {
        if rho >= 1.0 {
            return Ok(0.0);
        }
        if rho <= -1.0 {
            return Ok(1.0);
        }
        let x = (1.0 - rho.abs()) * (1.0 + rho.abs());
        let half = 0.5 * beta_reg(self.shape, 0.5, x)?;
        if rho >= 0.0 {
            Ok(half)
        } else {
            // 1 - half, but written so it stays accurate near 1.
            Ok(0.5 + 0.5 * beta_reg_complement(self.shape, 0.5, x)?)
        }
    }
}

/// Density of the sample correlation under the Gaussian null.
pub fn density(r: f64, t: usize) -> Result<f64> {
    NullCorrDensity::new(t)?.density(r)
}

const MAX_ROOT_ITER: usize = 200;

/// Correlation level whose null upper-tail mass equals `alpha`.
///
/// Bisection brackets the root of `ln P(r > rho) - ln alpha`, then safeguarded
/// secant steps refine it. The search always stays inside the bracket.
pub fn solve_threshold(t: usize, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 0.5) {
        return Err(Error::Config(format!("tail mass alpha = {alpha} outside (0, 0.5]")));
    }
    let dens = NullCorrDensity::new(t)?;
    if alpha == 0.5 {
        return Ok(0.0);
    }
    let target = alpha.ln();
    let g = |rho: f64| -> Result<f64> { Ok(dens.upper_tail(rho)?.ln() - target) };

    // g(lo) > 0 > g(hi)
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let (mut g_lo, mut g_hi) = (g(lo)?, f64::NEG_INFINITY);
    let mut iter = 0;

    while hi - lo > 1e-3 && iter < MAX_ROOT_ITER {
        let mid = 0.5 * (lo + hi);
        let g_mid = g(mid)?;
        if g_mid > 0.0 {
            lo = mid;
            g_lo = g_mid;
        } else {
            hi = mid;
            g_hi = g_mid;
        }
        iter += 1;
    }

    let (mut x0, mut g0) = (lo, g_lo);
    let (mut x1, mut g1) = (hi, g_hi);
    while iter < MAX_ROOT_ITER {
        let secant = if g0.is_finite() && g1.is_finite() && g1 != g0 {
            x1 - g1 * (x1 - x0) / (g1 - g0)
        } else {
            f64::NAN
        };
        let next = if secant > lo && secant < hi {
            secant
        } else {
            0.5 * (lo + hi)
        };
        let g_next = g(next)?;
        if g_next == 0.0 || g_next.abs() < 1e-14 || hi - lo < 1e-15 {
            return Ok(next);
        }
        if g_next > 0.0 {
            lo = next;
        } else {
            hi = next;
        }
        x0 = x1;
        g0 = g1;
        x1 = next;
        g1 = g_next;
        iter += 1;
    }

    if hi - lo < 1e-6 {
        Ok(0.5 * (lo + hi))
    } else {
        Err(Error::Numeric(format!(
            "threshold search for T={t}, alpha={alpha} did not converge: bracket [{lo}, {hi}] after {iter} iterations"
        )))
    }
}
