//! Special functions used by the analytic null model and the rank-sum test.

use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

const CF_MAX_ITER: usize = 20_000;
const CF_EPS: f64 = 1e-16;
const FPMIN: f64 = 1e-300;

/// ln B(a, b).
///
/// When one argument is large, `ln Γ(a) - ln Γ(a + b)` is taken from the
/// Stirling series directly instead of subtracting two huge log-gammas.
pub fn ln_beta(a: f64, b: f64) -> f64 {
    let (big, small) = if a >= b { (a, b) } else { (b, a) };
    if big < STIRLING_MIN {
        return ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b);
    }
    let sum = big + small;
    ln_gamma(small) - small * sum.ln() + small - (big - 0.5) * (small / big).ln_1p()
        + stirling_tail(big)
        - stirling_tail(sum)
}

const STIRLING_MIN: f64 = 20.0;

// ln Γ(x) - [(x - 1/2) ln x - x + ln(2π)/2]
fn stirling_tail(x: f64) -> f64 {
    let r = 1.0 / x;
    let r2 = r * r;
    r * (1.0 / 12.0 - r2 * (1.0 / 360.0 - r2 * (1.0 / 1260.0 - r2 / 1680.0)))
}

/// Upper tail of the standard normal, P(Z > z).
pub fn normal_sf(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

/// Regularized incomplete beta function I_x(a, b).
///
/// Evaluated with the modified Lentz continued fraction, switching to the
/// complementary form `1 - I_{1-x}(b, a)` on the side where the fraction
/// converges slowly.
pub fn beta_reg(a: f64, b: f64, x: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::Numeric(format!(
            "incomplete beta needs positive shape parameters, got a={a}, b={b}"
        )));
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Numeric(format!(
            "incomplete beta argument {x} outside [0, 1]"
        )));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x == 1.0 {
        return Ok(1.0);
    }
    if x < (a + 1.0) / (a + b + 2.0) {
        Ok(beta_front(a, b, x) * beta_cf(a, b, x)? / a)
    } else {
        Ok(1.0 - beta_front(b, a, 1.0 - x) * beta_cf(b, a, 1.0 - x)? / b)
    }
}

/// `1 - I_x(a, b)` computed without cancellation when the result is tiny.
pub fn beta_reg_complement(a: f64, b: f64, x: f64) -> Result<f64> {
    if x == 0.0 {
        return Ok(1.0);
    }
    if x == 1.0 {
        return Ok(0.0);
    }
    // I_{1-x}(b, a) = 1 - I_x(a, b)
    beta_reg(b, a, 1.0 - x)
}

fn beta_front(a: f64, b: f64, x: f64) -> f64 {
    (a * x.ln() + b * (-x).ln_1p() - ln_beta(a, b)).exp()
}

fn beta_cf(a: f64, b: f64, x: f64) -> Result<f64> {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < FPMIN {
        d = FPMIN;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=CF_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < CF_EPS {
            return Ok(h);
        }
    }
    Err(Error::Numeric(format!(
        "incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn beta_reg_closed_forms() {
        // I_x(1, 1) = x, I_x(a, 1) = x^a, I_x(1, b) = 1 - (1-x)^b
        for &x in &[0.01f64, 0.3, 0.5, 0.77, 0.999] {
            assert!((beta_reg(1.0, 1.0, x).unwrap() - x).abs() < 1e-14);
            assert!((beta_reg(3.5, 1.0, x).unwrap() - x.powf(3.5)).abs() < 1e-13);
            let want = 1.0 - (1.0 - x).powf(2.25);
            assert!((beta_reg(1.0, 2.25, x).unwrap() - want).abs() < 1e-13);
        }
    }

    #[test]
    fn beta_reg_symmetry_and_half() {
        // I_{1/2}(a, a) = 1/2
        for &a in &[0.5, 2.0, 17.0, 4000.0] {
            let v = beta_reg(a, a, 0.5).unwrap();
            assert!((v - 0.5).abs() < 1e-11, "{a} {v}");
        }
        let x = 0.37;
        let lhs = beta_reg(2.5, 7.0, x).unwrap();
        let rhs = 1.0 - beta_reg(7.0, 2.5, 1.0 - x).unwrap();
        assert!((lhs - rhs).abs() < 1e-14);
    }

    #[test]
    fn ln_beta_large_argument_matches_direct_form() {
        for &(a, b) in &[(25.0, 0.5), (300.0, 2.5), (19_287.0, 0.5), (0.5, 1e6), (40.0, 60.0)] {
            let direct = ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b);
            let tol = 1e-15 * (ln_gamma(a).abs() + ln_gamma(a + b).abs()) + 1e-13;
            assert!((ln_beta(a, b) - direct).abs() < 4.0 * tol, "a={a}, b={b}");
        }
        // B(1/2, 1/2) = pi
        assert!((ln_beta(0.5, 0.5) - std::f64::consts::PI.ln()).abs() < 1e-14);
    }

    #[test]
    fn beta_reg_arcsine_case() {
        // Beta(1/2, 1/2) is the arcsine law: I_x = (2/pi) asin(sqrt x)
        for &x in &[0.05f64, 0.2, 0.6, 0.95] {
            let want = 2.0 / std::f64::consts::PI * x.sqrt().asin();
            assert!((beta_reg(0.5, 0.5, x).unwrap() - want).abs() < 1e-13);
        }
    }

    #[test]
    fn beta_reg_rejects_bad_arguments() {
        assert!(beta_reg(0.0, 1.0, 0.5).is_err());
        assert!(beta_reg(1.0, 1.0, 1.5).is_err());
    }

    #[test]
    fn normal_sf_known_values() {
        assert!((normal_sf(0.0) - 0.5).abs() < 1e-15);
        assert!((normal_sf(1.959963984540054) - 0.025).abs() < 1e-10);
        assert!((normal_sf(-1.0) - 0.841_344_746_068_543).abs() < 1e-10);
    }
}
