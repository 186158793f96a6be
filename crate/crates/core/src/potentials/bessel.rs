//! Modified Bessel functions of the second kind, orders 0 and 1.
//!
//! For `x < 2` the ascending series around the origin is summed directly.
//! For `x >= 2` Steed's algorithm evaluates Temme's continued fraction for
//! `K_1 / K_0` together with the normalisation sum for `K_0`; both converge
//! quickly in that range and give close to full double precision.

use std::f64::consts::PI;

use crate::error::{Error, Result};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const SERIES_SWITCH: f64 = 2.0;
const MAX_TERMS: usize = 10_000;

/// `K_0(x)` for `x > 0`.
pub fn bessel_k0(x: f64) -> Result<f64> {
    Ok(bessel_k01(x)?.0)
}

/// `K_1(x)` for `x > 0`.
pub fn bessel_k1(x: f64) -> Result<f64> {
    Ok(bessel_k01(x)?.1)
}

/// `(K_0(x), K_1(x))` evaluated together; the potentials need both.
pub fn bessel_k01(x: f64) -> Result<(f64, f64)> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain {
            what: "modified Bessel K",
            value: x,
        });
    }
    if x < SERIES_SWITCH {
        Ok(series(x))
    } else {
        Ok(continued_fraction(x))
    }
}

fn series(x: f64) -> (f64, f64) {
    let q = 0.25 * x * x;
    let log_half = (0.5 * x).ln();

    // term_k = q^k / (k!)^2, harmonic numbers H_k
    let mut term = 1.0;
    let mut harmonic = 0.0;
    let mut i0 = 1.0;
    let mut k0_tail = 0.0;
    // t1_k = q^k / (k! (k+1)!)
    let mut term1 = 1.0;
    let mut i1_sum = 1.0;
    // psi(k+1) + psi(k+2) = 2 H_k + 1/(k+1) - 2 gamma
    let mut k1_sum = 1.0 - 2.0 * EULER_GAMMA;
    for k in 1..60 {
        let kf = k as f64;
        term *= q / (kf * kf);
        term1 *= q / (kf * (kf + 1.0));
        harmonic += 1.0 / kf;
        i0 += term;
        k0_tail += term * harmonic;
        i1_sum += term1;
        k1_sum += term1 * (2.0 * harmonic + 1.0 / (kf + 1.0) - 2.0 * EULER_GAMMA);
        if term < 1e-18 * i0 && term1 < 1e-18 * i1_sum {
            break;
        }
    }
    let i1 = 0.5 * x * i1_sum;
    let k0 = -(log_half + EULER_GAMMA) * i0 + k0_tail;
    let k1 = 1.0 / x + log_half * i1 - 0.25 * x * k1_sum;
    (k0, k1)
}

fn continued_fraction(x: f64) -> (f64, f64) {
    let mut b = 2.0 * (1.0 + x);
    let mut d = 1.0 / b;
    let mut h = d;
    let mut delh = d;
    let mut q1 = 0.0;
    let mut q2 = 1.0;
    let a1 = 0.25;
    let mut q = a1;
    let mut c = a1;
    let mut a = -a1;
    let mut s = 1.0 + q * delh;
    for i in 2..MAX_TERMS {
        let fi = i as f64;
        a -= 2.0 * (fi - 1.0);
        c = -a * c / fi;
        let qnew = (q1 - b * q2) / a;
        q1 = q2;
        q2 = qnew;
        q += c * qnew;
        b += 2.0;
        d = 1.0 / (b + a * d);
        delh = (b * d - 1.0) * delh;
        h += delh;
        let dels = q * delh;
        s += dels;
        if (dels / s).abs() < f64::EPSILON {
            break;
        }
    }
    let h = a1 * h;
    let k0 = (PI / (2.0 * x)).sqrt() * (-x).exp() / s;
    let k1 = k0 * (x + 0.5 - h) / x;
    (k0, k1)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `K_nu(x) = int_0^inf exp(-x cosh t) cosh(nu t) dt`, trapezoid rule.
    /// The integrand is analytic and doubly-exponentially decaying, so the
    /// trapezoid sum converges geometrically in the step size.
    fn integral_oracle(nu: f64, x: f64) -> f64 {
        let h = 1e-3;
        let mut sum = 0.5 * (-x).exp();
        let mut t: f64 = h;
        loop {
            let f = (-x * t.cosh()).exp() * (nu * t).cosh();
            sum += f;
            if f < 1e-300 || t > 40.0 {
                break;
            }
            t += h;
        }
        sum * h
    }

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn k0_at_one() {
        let (k0, k1) = bessel_k01(1.0).unwrap();
        assert!((k0 - 0.421_024_438_2).abs() < 1e-9);
        assert!((k1 - 0.601_907_230_2).abs() < 1e-9);
    }

    #[test]
    fn k0_small_argument() {
        let k0 = bessel_k0(1e-3).unwrap();
        assert!((k0 - 7.023_688_800).abs() < 1e-6, "{k0}");
        // leading logarithmic behaviour
        assert!((k0 - (-(0.5e-3f64).ln() - EULER_GAMMA)).abs() < 1e-5);
    }

    #[test]
    fn matches_integral_representation() {
        let mut x = 1e-3;
        while x <= 50.0 {
            let (k0, k1) = bessel_k01(x).unwrap();
            assert!(rel(k0, integral_oracle(0.0, x)) < 1e-7, "K0({x})");
            assert!(rel(k1, integral_oracle(1.0, x)) < 1e-7, "K1({x})");
            x *= 1.37;
        }
    }

    #[test]
    fn continuous_at_branch_switch() {
        let below = series(SERIES_SWITCH);
        let above = continued_fraction(SERIES_SWITCH);
        assert!(rel(below.0, above.0) < 1e-12, "{below:?} {above:?}");
        assert!(rel(below.1, above.1) < 1e-12);
    }

    #[test]
    fn k1_is_minus_derivative_of_k0() {
        let h = 1e-5;
        let x = 2.0;
        let fd = (bessel_k0(x + h).unwrap() - bessel_k0(x - h).unwrap()) / (2.0 * h);
        assert!(rel(-fd, bessel_k1(x).unwrap()) < 1e-5);
    }

    #[test]
    fn rejects_nonpositive() {
        assert!(bessel_k0(0.0).is_err());
        assert!(bessel_k1(-1.0).is_err());
        assert!(bessel_k0(f64::NAN).is_err());
    }
}
