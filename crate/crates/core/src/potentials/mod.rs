//! Radial pair potentials `W(x) = U(|x|)` and their derivatives.
//!
//! The three Morse-type families share the form `W(r) = V(r) - C V(r / ell)`
//! with an attractive profile `V`; the Log-Newtonian potential is
//! `W(r) = r^2 - ln r`. Every family carries a positive amplitude `D`
//! that multiplies `W` and all of its derivatives.

mod bessel;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use bessel::{bessel_k0, bessel_k01, bessel_k1};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    Morse,
    QuasiMorse,
    GeneralizedMorse,
    LogNewtonian,
}

impl Family {
    pub const ALL: [Family; 4] = [
        Family::Morse,
        Family::QuasiMorse,
        Family::GeneralizedMorse,
        Family::LogNewtonian,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Morse => "Morse",
            Family::QuasiMorse => "QuasiMorse",
            Family::GeneralizedMorse => "GeneralizedMorse",
            Family::LogNewtonian => "LogNewtonian",
        }
    }

    pub fn parse(name: &str) -> Option<Family> {
        let key: String = name
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        match key.as_str() {
            "morse" => Some(Family::Morse),
            "quasimorse" => Some(Family::QuasiMorse),
            "generalizedmorse" | "genmorse" => Some(Family::GeneralizedMorse),
            "lognewtonian" | "log" => Some(Family::LogNewtonian),
            _ => None,
        }
    }
}

fn default_c() -> f64 {
    10.0 / 9.0
}
fn default_ell() -> f64 {
    0.75
}
fn default_k() -> f64 {
    0.5
}
fn default_p() -> f64 {
    1.25
}
fn default_d() -> f64 {
    1.0
}

/// Potential family, shape parameters and amplitude `D`.
///
/// Shape parameters a family does not use are ignored. Defaults are the
/// values used for the eigenvalue table: `C = 10/9`, `ell = 3/4`,
/// `k = 1/2`, `p = 1.25`, `D = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSpec {
    pub family: Family,
    #[serde(rename = "C", default = "default_c")]
    pub c: f64,
    #[serde(default = "default_ell")]
    pub ell: f64,
    #[serde(default = "default_k")]
    pub k: f64,
    #[serde(default = "default_p")]
    pub p: f64,
    #[serde(rename = "D", default = "default_d")]
    pub d: f64,
}

impl PotentialSpec {
    pub fn new(family: Family) -> Self {
        PotentialSpec {
            family,
            c: default_c(),
            ell: default_ell(),
            k: default_k(),
            p: default_p(),
            d: default_d(),
        }
    }

    pub fn morse(c: f64, ell: f64) -> Self {
        PotentialSpec {
            c,
            ell,
            ..Self::new(Family::Morse)
        }
    }

    pub fn quasi_morse(c: f64, ell: f64, k: f64) -> Self {
        PotentialSpec {
            c,
            ell,
            k,
            ..Self::new(Family::QuasiMorse)
        }
    }

    pub fn generalized_morse(c: f64, ell: f64, p: f64) -> Self {
        PotentialSpec {
            c,
            ell,
            p,
            ..Self::new(Family::GeneralizedMorse)
        }
    }

    pub fn log_newtonian() -> Self {
        Self::new(Family::LogNewtonian)
    }

    pub fn with_scale(mut self, d: f64) -> Self {
        self.d = d;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.d > 0.0 && self.d.is_finite()) {
            return bad(format!("potential scale D must be positive, got {}", self.d));
        }
        if self.family != Family::LogNewtonian {
            if !(self.c > 0.0 && self.c.is_finite()) {
                return bad(format!("C must be positive, got {}", self.c));
            }
            if !(self.ell > 0.0 && self.ell.is_finite()) {
                return bad(format!("ell must be positive, got {}", self.ell));
            }
        }
        match self.family {
            Family::QuasiMorse if !(self.k > 0.0 && self.k.is_finite()) => {
                bad(format!("Bessel scale k must be positive, got {}", self.k))
            }
            Family::GeneralizedMorse if !(self.p > 0.0 && self.p.is_finite()) => {
                bad(format!("exponent p must be positive, got {}", self.p))
            }
            _ => Ok(()),
        }
    }

    /// One-line human readable parameter summary.
    pub fn describe(&self) -> String {
        match self.family {
            Family::Morse => format!("C={} ell={}", self.c, self.ell),
            Family::QuasiMorse => format!("C={} ell={} k={}", self.c, self.ell, self.k),
            Family::GeneralizedMorse => format!("C={} ell={} p={}", self.c, self.ell, self.p),
            Family::LogNewtonian => String::new(),
        }
    }

    /// `D * W(r)`.
    pub fn value(&self, r: f64) -> Result<f64> {
        check_radius(r)?;
        Ok(self.d * self.unscaled(r).0)
    }

    /// `(U'(r), U''(r))` of the scaled potential `U = D * W`.
    pub fn radial_derivatives(&self, r: f64) -> Result<(f64, f64)> {
        check_radius(r)?;
        let (_, d1, d2) = self.unscaled(r);
        Ok((self.d * d1, self.d * d2))
    }

    /// `U'(r)` only. Cheaper than [`radial_derivatives`](Self::radial_derivatives)
    /// and used in the force loops.
    #[inline]
    pub fn radial_first(&self, r: f64) -> Result<f64> {
        check_radius(r)?;
        let d1 = match self.family {
            Family::Morse => (-r).exp() - self.c / self.ell * (-r / self.ell).exp(),
            Family::GeneralizedMorse => {
                let p = self.p;
                let s = r / self.ell;
                r.powf(p - 1.0) * (-r.powf(p) / p).exp()
                    - self.c / self.ell * s.powf(p - 1.0) * (-s.powf(p) / p).exp()
            }
            Family::LogNewtonian => 2.0 * r - 1.0 / r,
            Family::QuasiMorse => self.unscaled(r).1,
        };
        Ok(self.d * d1)
    }

    /// Precomputed evaluator of `U'(r) / r` for the force loops.
    pub(crate) fn force_kernel(&self) -> ForceKernel {
        ForceKernel {
            spec: *self,
            inv_ell: 1.0 / self.ell,
            c_over_ell: self.c / self.ell,
            inv_p: 1.0 / self.p,
        }
    }

    /// `(W, W', W'')` without the amplitude `D`; `r > 0` is checked by callers.
    fn unscaled(&self, r: f64) -> (f64, f64, f64) {
        match self.family {
            Family::LogNewtonian => (r * r - r.ln(), 2.0 * r - 1.0 / r, 2.0 + 1.0 / (r * r)),
            _ => {
                let (v0, v1, v2) = self.profile(r);
                let (u0, u1, u2) = self.profile(r / self.ell);
                let c = self.c;
                let il = 1.0 / self.ell;
                (v0 - c * u0, v1 - c * il * u1, v2 - c * il * il * u2)
            }
        }
    }

    /// Attractive profile `V` and its first two derivatives.
    fn profile(&self, r: f64) -> (f64, f64, f64) {
        match self.family {
            Family::Morse => {
                let e = (-r).exp();
                (-e, e, -e)
            }
            Family::GeneralizedMorse => {
                let p = self.p;
                let rp = r.powf(p);
                let e = (-rp / p).exp();
                let rp1 = r.powf(p - 1.0);
                (-e, rp1 * e, ((p - 1.0) * r.powf(p - 2.0) - rp1 * rp1) * e)
            }
            Family::QuasiMorse => {
                let z = self.k * r;
                // z > 0 is guaranteed by the callers' radius check
                let (k0, k1) = bessel_k01(z).expect("positive Bessel argument");
                let s = 1.0 / (2.0 * PI);
                let k = self.k;
                (-s * k0, s * k * k1, -s * k * k * (k0 + k1 / z))
            }
            Family::LogNewtonian => unreachable!("Log-Newtonian has no Morse profile"),
        }
    }

    /// `grad W(x) = U'(|x|) x / |x|`.
    pub fn grad(&self, x: [f64; 2]) -> Result<[f64; 2]> {
        let r = x[0].hypot(x[1]);
        if r == 0.0 {
            return Err(Error::CoincidentParticles { i: 0, j: 0 });
        }
        let f = self.radial_first(r)? / r;
        Ok([f * x[0], f * x[1]])
    }

    /// `Hess W(x) = U'' xhat xhat^T + (U'/r)(I - xhat xhat^T)`.
    pub fn hessian(&self, x: [f64; 2]) -> Result<[[f64; 2]; 2]> {
        let r = x[0].hypot(x[1]);
        if r == 0.0 {
            return Err(Error::CoincidentParticles { i: 0, j: 0 });
        }
        let (d1, d2) = self.radial_derivatives(r)?;
        let (ux, uy) = (x[0] / r, x[1] / r);
        let t = d1 / r;
        let off = (d2 - t) * ux * uy;
        Ok([
            [d2 * ux * ux + t * (1.0 - ux * ux), off],
            [off, d2 * uy * uy + t * (1.0 - uy * uy)],
        ])
    }
}

#[inline]
fn check_radius(r: f64) -> Result<()> {
    if r > 0.0 && r.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain {
            what: "radial potential",
            value: r,
        })
    }
}


/// `U'(r) / r` with the per-family constants hoisted out of the pair loop.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ForceKernel {
    spec: PotentialSpec,
    inv_ell: f64,
    c_over_ell: f64,
    inv_p: f64,
}

impl ForceKernel {
    pub(crate) fn family(&self) -> Family {
        self.spec.family
    }

    // Each evaluator returns `U'(r) / r` for one family; the caller
    // guarantees `r > 0` and picks the evaluator once per force sweep.

    #[inline(always)]
    pub(crate) fn morse(&self, r: f64) -> f64 {
        self.spec.d * ((-r).exp() - self.c_over_ell * (-r * self.inv_ell).exp()) / r
    }

    #[inline(always)]
    pub(crate) fn log_newtonian(&self, r: f64) -> f64 {
        self.spec.d * (2.0 - 1.0 / (r * r))
    }

    #[inline(always)]
    pub(crate) fn generalized_morse(&self, r: f64) -> f64 {
        let p = self.spec.p;
        let q = r * self.inv_ell;
        let rp1 = r.powf(p - 1.0);
        let qp1 = q.powf(p - 1.0);
        self.spec.d * (rp1 * (-rp1 * r * self.inv_p).exp() - self.c_over_ell * qp1 * (-qp1 * q * self.inv_p).exp()) / r
    }

    #[inline(always)]
    pub(crate) fn quasi_morse(&self, r: f64) -> f64 {
        self.spec.d * self.spec.unscaled(r).1 / r
    }
}
