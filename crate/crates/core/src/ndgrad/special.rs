//! Special functions on the positive reals.
//!
//! All three polygamma-family functions shift the argument upward with the
//! recurrence relation until `x >= 10` and then switch to the asymptotic expansion in Bernoulli numbers.

use crate::error::{Error, Result};

const DIGAMMA_SHIFT: f64 = 10.0;
const LGAMMA_SHIFT: f64 = 10.0;
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

fn check_domain(func: &'static str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain {
            func,
            value: x,
            expected: "x > 0",
        })
    }
}

/// ψ(x), the logarithmic derivative of Γ.
pub fn digamma(x: f64) -> Result<f64> {
    check_domain("digamma", x)?;
    Ok(digamma_unchecked(x))
}

pub(crate) fn digamma_unchecked(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < DIGAMMA_SHIFT {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let r = 1.0 / (x * x);
    // B2k / 2k for k = 1..7
    let series = r
        * (1.0 / 12.0
            - r * (1.0 / 120.0
                - r * (1.0 / 252.0
                    - r * (1.0 / 240.0
                        - r * (1.0 / 132.0 - r * (691.0 / 32760.0 - r * (1.0 / 12.0)))))));
    acc + x.ln() - 0.5 / x - series
}

/// ψ'(x).
pub fn trigamma(x: f64) -> Result<f64> {
    check_domain("trigamma", x)?;
    Ok(trigamma_unchecked(x))
}

pub(crate) fn trigamma_unchecked(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < DIGAMMA_SHIFT {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let r = 1.0 / (x * x);
    let series = r
        * (1.0 / 6.0
            - r * (1.0 / 30.0
                - r * (1.0 / 42.0
                    - r * (1.0 / 30.0 - r * (5.0 / 66.0 - r * (691.0 / 2730.0 - r * (7.0 / 6.0)))))));
    acc + 1.0 / x + 0.5 * r + series / x
}

/// ln Γ(x).
pub fn lgamma(x: f64) -> Result<f64> {
    check_domain("lgamma", x)?;
    Ok(lgamma_unchecked(x))
}

pub(crate) fn lgamma_unchecked(mut x: f64) -> f64 {
    if x == 1.0 || x == 2.0 {
        return 0.0;
    }
    // ln Γ(x) = ln Γ(x + n) - ln(x (x+1) ... (x+n-1)); the product stays far
    // from overflow because n <= 10 and x < 10 inside the loop.
    let mut prod = 1.0;
    while x < LGAMMA_SHIFT {
        prod *= x;
        x += 1.0;
    }
    let r = 1.0 / (x * x);
    // B2k / (2k (2k-1)) for k = 1..7
    let series = (1.0 / 12.0
        - r * (1.0 / 360.0
            - r * (1.0 / 1260.0
                - r * (1.0 / 1680.0
                    - r * (1.0 / 1188.0 - r * (691.0 / 360360.0 - r * (1.0 / 156.0)))))))
        / x;
    (x - 0.5) * x.ln() - x + HALF_LN_2PI + series - prod.ln()
}

/// `(eᶻ - 1) / z`, continuous through `z = 0`.
pub fn exprel(z: f64) -> f64 {
    if z.abs() < 1e-8 {
        1.0 + 0.5 * z
    } else {
        z.exp_m1() / z
    }
}

/// Derivative of [`exprel`].
pub fn exprel_deriv(z: f64) -> f64 {
    if z.abs() < 1e-2 {
        0.5 + z * (1.0 / 3.0 + z * (1.0 / 8.0 + z * (1.0 / 30.0 + z / 144.0)))
    } else {
        let em1 = z.exp_m1();
        (z * (em1 + 1.0) - em1) / (z * z)
    }
}
