//! Numerical checks of the stability hypotheses H1-H5 and of the spectral
//! lemmas for the reduced matrix `F_B^B`.
//!
//! Kernel thresholds are relative: an eigenvalue counts as zero when
//! `|mu| < kernel_tol * rho`, `rho` being the spectral radius of the matrix
//! under test. Once `G` is normalised so that its most negative eigenvalue is
//! `-1` this is the plain absolute threshold.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::ModelParams;
use crate::error::{Error, Result};
use crate::jacobians::{
    assemble_f, assemble_fbb, assemble_g, h_block, kernel_vectors_w, kernel_vectors_z, stationarity_residual,
    FlockFamilyMember, StationaryConfig,
};
use crate::linalg::{
    dot, eigenvector_near, general_eigenvalues, kernel_basis, norm2, numerical_rank, symmetric_eigen, DenseMatrix,
    Spectrum,
};

/// Projection residual below which `{w1, w2, w3}` count as spanning the kernel.
pub const SPAN_TOL: f64 = 1e-5;
/// Distance within which `-2 alpha` must appear in the spectrum.
pub const MINUS_TWO_ALPHA_TOL: f64 = 1e-6;
/// Agreement required by the quadratic eigenvalue relation.
pub const QUADRATIC_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Absolute bound on the stationarity residual.
    pub h1_tol: f64,
    /// Relative kernel threshold.
    pub kernel_tol: f64,
    /// Absolute bound on the second singular value of centred positions.
    pub h4_tol: f64,
    /// Absolute bound on the eigenvector / `m0` overlap.
    pub h5_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            h1_tol: 1e-8,
            kernel_tol: 1e-6,
            h4_tol: 1e-6,
            h5_tol: 1e-8,
        }
    }
}

impl Tolerances {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("h1_tol", self.h1_tol),
            ("kernel_tol", self.kernel_tol),
            ("h4_tol", self.h4_tol),
            ("h5_tol", self.h5_tol),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("tolerance {name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct H1Check {
    pub pass: bool,
    pub residual: f64,
}

pub fn check_h1(config: &StationaryConfig, tol: f64) -> Result<H1Check> {
    let residual = stationarity_residual(&config.spec, &config.positions)?;
    Ok(H1Check {
        pass: residual < tol,
        residual,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct H2H3Check {
    pub pass: bool,
    pub kernel_dim: usize,
    /// Largest projection residual of the normalised `w_i` onto the kernel.
    pub span_residual: f64,
    /// Largest eigenvalue outside the kernel band.
    pub mu4: Option<f64>,
    /// Largest modulus inside the kernel band.
    pub mu3_abs: f64,
    /// `|mu4| / |mu3|`.
    pub gap: Option<f64>,
    pub kernel_tol_abs: f64,
}

fn kernel_threshold(rho: f64, kernel_tol: f64) -> f64 {
    (kernel_tol * rho).max(f64::MIN_POSITIVE)
}

/// Symmetric spectrum of `g` with the relative kernel threshold applied.
pub fn g_spectrum(g: &DenseMatrix, kernel_tol: f64) -> Result<Spectrum> {
    let s = symmetric_eigen(g)?;
    let tol = kernel_threshold(s.spectral_radius(), kernel_tol);
    Ok(s.with_kernel_tol(tol))
}

pub fn check_h2_h3(g: &DenseMatrix, x: &[f64], kernel_tol: f64) -> Result<(H2H3Check, Spectrum)> {
    let spec = g_spectrum(g, kernel_tol)?;
    let vecs = spec
        .eigenvectors
        .as_ref()
        .ok_or_else(|| Error::Dimension("symmetric solver returned no eigenvectors".into()))?;
    let kernel_cols: Vec<Vec<f64>> = (0..spec.len())
        .filter(|&k| spec.is_kernel(k))
        .map(|k| vecs.col(k))
        .collect();

    let mut span_residual = 0.0f64;
    for w in kernel_vectors_w(x) {
        let nw = norm2(&w);
        if nw == 0.0 {
            continue;
        }
        let mut r: Vec<f64> = w.iter().map(|v| v / nw).collect();
        for q in &kernel_cols {
            let c = dot(q, &r);
            for (ri, qi) in r.iter_mut().zip(q) {
                *ri -= c * qi;
            }
        }
        span_residual = span_residual.max(norm2(&r));
    }

    let mu4 = spec.nonzero().map(|z| z.re).fold(None, |m: Option<f64>, v| {
        Some(m.map_or(v, |m| m.max(v)))
    });
    let mu3_abs = spec
        .eigenvalues
        .iter()
        .filter(|z| z.norm() < spec.kernel_tol)
        .fold(0.0f64, |m, z| m.max(z.norm()));
    let gap = mu4.filter(|_| mu3_abs > 0.0).map(|m| m.abs() / mu3_abs);
    let pass = spec.kernel_dim == 3 && span_residual < SPAN_TOL && mu4.is_some_and(|m| m < -spec.kernel_tol);
    Ok((
        H2H3Check {
            pass,
            kernel_dim: spec.kernel_dim,
            span_residual,
            mu4,
            mu3_abs,
            gap,
            kernel_tol_abs: spec.kernel_tol,
        },
        spec,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct H4Check {
    pub pass: bool,
    /// Second singular value of the centred `N x 2` position matrix.
    pub line_deviation: f64,
}

pub fn check_h4(x: &[f64], tol: f64) -> H4Check {
    let n = x.len() / 2;
    let nf = n.max(1) as f64;
    let s = crate::dynamics::pair_sum(x);
    let c = [s[0] / nf, s[1] / nf];
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in x.chunks_exact(2) {
        let (dx, dy) = (p[0] - c[0], p[1] - c[1]);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    // smaller eigenvalue of the 2x2 scatter matrix
    let mean = 0.5 * (sxx + syy);
    let rad = (0.25 * (sxx - syy) * (sxx - syy) + sxy * sxy).sqrt();
    let line_deviation = (mean - rad).max(0.0).sqrt();
    H4Check {
        pass: line_deviation > tol,
        line_deviation,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct H5Check {
    pub pass: bool,
    pub min_overlap: f64,
    /// Eigenvalue whose eigenvector attains the minimum overlap.
    pub offending_eigenvalue: Option<f64>,
}

/// For every eigenvector outside the kernel band, the largest particle-wise
/// overlap `max_i |<m0, w_i>|`; passes when all of them exceed `tol`.
pub fn check_h5(spectrum: &Spectrum, m0: [f64; 2], tol: f64) -> Result<H5Check> {
    let vecs = spectrum
        .eigenvectors
        .as_ref()
        .ok_or_else(|| Error::Dimension("H5 needs eigenvectors".into()))?;
    let mut min_overlap = f64::INFINITY;
    let mut offending = None;
    for k in (0..spectrum.len()).filter(|&k| !spectrum.is_kernel(k)) {
        let w = vecs.col(k);
        let overlap = w
            .chunks_exact(2)
            .fold(0.0f64, |m, p| m.max((m0[0] * p[0] + m0[1] * p[1]).abs()));
        if overlap < min_overlap {
            min_overlap = overlap;
            offending = Some(spectrum.eigenvalues[k].re);
        }
    }
    if offending.is_none() {
        min_overlap = 0.0;
    }
    Ok(H5Check {
        pass: offending.is_some() && min_overlap > tol,
        min_overlap,
        offending_eigenvalue: offending,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lemma3Check {
    pub no_genvec: bool,
    /// Eigenvalues inside the kernel band.
    pub algebraic: usize,
    /// Dimension of the numerical kernel.
    pub geometric: usize,
    pub rank: usize,
    pub rank_squared: usize,
}

/// Absence of generalised eigenvectors for the eigenvalue zero.
///
/// Two tests run: algebraic against geometric multiplicity, and
/// `rank(A) == rank(A^2)`. Their disagreement means the tolerance cannot
/// separate the kernel and is reported as an error.
pub fn verify_lemma3(fbb: &DenseMatrix, kernel_tol: f64) -> Result<Lemma3Check> {
    let mut spec = general_eigenvalues(fbb)?;
    spec.set_kernel_tol(kernel_threshold(spec.spectral_radius(), kernel_tol));
    let algebraic = spec.kernel_dim;
    let rank = numerical_rank(fbb, kernel_tol);
    let geometric = kernel_basis(fbb, kernel_tol).cols();
    let rank_squared = numerical_rank(&fbb.matmul(fbb)?, kernel_tol * kernel_tol);
    let by_multiplicity = algebraic == geometric;
    let by_rank = rank == rank_squared;
    if by_multiplicity != by_rank {
        return Err(Error::ToleranceDisagreement {
            multiplicity: by_multiplicity,
            rank: by_rank,
        });
    }
    Ok(Lemma3Check {
        no_genvec: by_multiplicity,
        algebraic,
        geometric,
        rank,
        rank_squared,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lemma4Check {
    pub pass: bool,
    pub kernel_dim: usize,
    /// `max_i ||F z_i|| / (||F||_F ||z_i||)` over the witnesses `z1..z4`.
    pub witness_residual: f64,
    /// Largest real part outside the kernel band.
    pub max_nonzero_re: f64,
    /// Distance from `-2 alpha` to the nearest eigenvalue.
    pub minus_two_alpha_distance: f64,
}

pub fn verify_lemma4(
    fbb: &DenseMatrix,
    member: &FlockFamilyMember,
    params: &ModelParams,
    kernel_tol: f64,
) -> Result<(Lemma4Check, Spectrum)> {
    let mut spec = general_eigenvalues(fbb)?;
    spec.set_kernel_tol(kernel_threshold(spec.spectral_radius(), kernel_tol));
    let fro = fbb.frobenius_norm().max(f64::MIN_POSITIVE);
    let witness_residual = kernel_vectors_z(member)
        .iter()
        .map(|z| norm2(&fbb.mul_vec(z)) / (fro * norm2(z).max(f64::MIN_POSITIVE)))
        .fold(0.0f64, f64::max);
    let max_nonzero_re = spec.nonzero().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    let target = Complex64::new(-2.0 * params.alpha, 0.0);
    let minus_two_alpha_distance = spec
        .eigenvalues
        .iter()
        .map(|z| (z - target).norm())
        .fold(f64::INFINITY, f64::min);
    let pass = spec.kernel_dim == 4
        && witness_residual < kernel_tol
        && max_nonzero_re < -spec.kernel_tol
        && minus_two_alpha_distance < MINUS_TWO_ALPHA_TOL;
    Ok((
        Lemma4Check {
            pass,
            kernel_dim: spec.kernel_dim,
            witness_residual,
            max_nonzero_re,
            minus_two_alpha_distance,
        },
        spec,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticCheck {
    pub tested: usize,
    pub passed: usize,
    pub max_error: f64,
}

/// Spot check of `mu^2 + 2 A mu + B = 0` for eigenpairs of the `H` block,
/// where, with the position part `x` normalised to `x* x = 1`,
/// `A = beta sum_i |<m0, x_i>|^2` and `B = -x* G x`.
///
/// Up to `count` eigenvalues outside the kernel band are taken at evenly
/// spaced positions of the sorted spectrum.
pub fn verify_quadratic_relation(
    member: &FlockFamilyMember,
    params: &ModelParams,
    kernel_tol: f64,
    count: usize,
) -> Result<QuadraticCheck> {
    let g = assemble_g(&member.config)?;
    let h = h_block(&assemble_fbb(member, params)?);
    let mut spec = general_eigenvalues(&h)?;
    spec.set_kernel_tol(kernel_threshold(spec.spectral_radius(), kernel_tol));
    let candidates: Vec<Complex64> = spec.nonzero().copied().collect();
    let n2 = g.rows();
    let picks: Vec<Complex64> = if candidates.len() <= count {
        candidates
    } else {
        (0..count)
            .map(|k| candidates[k * (candidates.len() - 1) / (count - 1).max(1)])
            .collect()
    };
    let mut passed = 0;
    let mut max_error = 0.0f64;
    for &mu in &picks {
        let z = eigenvector_near(&h, mu)?;
        let norm = z[..n2].iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        let x: Vec<Complex64> = z[..n2].iter().map(|c| c / norm).collect();
        let a = params.beta
            * x.chunks_exact(2)
                .map(|p| (p[0] * member.m0[0] + p[1] * member.m0[1]).norm_sqr())
                .sum::<f64>();
        let mut xgx = Complex64::new(0.0, 0.0);
        for i in 0..n2 {
            let gx: Complex64 = (0..n2).map(|j| x[j] * g[(i, j)]).sum();
            xgx += x[i].conj() * gx;
        }
        let b = -xgx.re;
        let disc = Complex64::new(a * a - b, 0.0).sqrt();
        let err = [-a + disc, -a - disc]
            .iter()
            .map(|r| (mu - r).norm())
            .fold(f64::INFINITY, f64::min);
        if err < QUADRATIC_TOL {
            passed += 1;
        }
        max_error = max_error.max(err);
    }
    Ok(QuadraticCheck {
        tested: picks.len(),
        passed,
        max_error,
    })
}

/// All checks for one flock, flattened for JSON output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub potential: String,
    pub n: usize,
    pub d: f64,
    pub m0: [f64; 2],
    pub h1_pass: bool,
    pub h1_residual: f64,
    pub h2_h3_pass: bool,
    pub h2_kernel_dim: usize,
    pub h2_span_check: f64,
    pub h3_mu4: Option<f64>,
    pub h3_mu3_abs: f64,
    pub h3_gap: Option<f64>,
    pub h4_pass: bool,
    pub h4_line_deviation: f64,
    pub h5_pass: bool,
    pub h5_min_overlap: f64,
    pub h5_offending_eigenvalue: Option<f64>,
    pub lemma3_no_genvec: bool,
    /// False when the two generalised-eigenvector tests disagreed.
    pub lemma3_checks_agree: bool,
    pub lemma4_pass: bool,
    pub lemma4_kernel_dim: usize,
    pub lemma4_max_nonzero_re: f64,
    pub lemma4_witness_residual: f64,
    pub minus_two_alpha_in_f: bool,
    pub tolerances: Tolerances,
}

impl HypothesisReport {
    pub fn hypotheses_pass(&self) -> bool {
        self.h1_pass && self.h2_h3_pass && self.h4_pass && self.h5_pass
    }

    pub fn all_pass(&self) -> bool {
        self.hypotheses_pass() && self.lemma3_no_genvec && self.lemma4_pass && self.minus_two_alpha_in_f
    }

    pub fn table(&self) -> String {
        let mark = |b: bool| if b { "pass" } else { "FAIL" };
        let opt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4e}"));
        let mut out = format!(
            "{} N={} D={:.6}\n",
            self.potential, self.n, self.d
        );
        let rows = [
            ("H1", self.h1_pass, format!("residual {:.3e}", self.h1_residual)),
            (
                "H2/H3",
                self.h2_h3_pass,
                format!(
                    "kernel {} span {:.2e} mu4 {} |mu3| {:.3e}",
                    self.h2_kernel_dim,
                    self.h2_span_check,
                    opt(self.h3_mu4),
                    self.h3_mu3_abs
                ),
            ),
            ("H4", self.h4_pass, format!("line deviation {:.3e}", self.h4_line_deviation)),
            (
                "H5",
                self.h5_pass,
                format!("min overlap {:.3e} at {}", self.h5_min_overlap, opt(self.h5_offending_eigenvalue)),
            ),
            (
                "Lemma3",
                self.lemma3_no_genvec,
                if self.lemma3_checks_agree { "no generalised eigenvector".into() } else { "tests disagree".into() },
            ),
            (
                "Lemma4",
                self.lemma4_pass,
                format!(
                    "kernel {} max Re {:.3e} witnesses {:.2e}",
                    self.lemma4_kernel_dim, self.lemma4_max_nonzero_re, self.lemma4_witness_residual
                ),
            ),
            ("-2alpha", self.minus_two_alpha_in_f, "eigenvalue of F".into()),
        ];
        for (name, ok, detail) in rows {
            out.push_str(&format!("  {:<8} {:<5} {}\n", name, mark(ok), detail));
        }
        out
    }
}

/// Run every check on one flock family member.
pub fn check_all(member: &FlockFamilyMember, params: &ModelParams, tol: &Tolerances) -> Result<HypothesisReport> {
    tol.validate()?;
    let config = &member.config;
    let h1 = check_h1(config, tol.h1_tol)?;
    let g = assemble_g(config)?;
    let (h23, gspec) = check_h2_h3(&g, &config.positions, tol.kernel_tol)?;
    let h4 = check_h4(&config.positions, tol.h4_tol);
    let h5 = check_h5(&gspec, member.m0, tol.h5_tol)?;
    let fbb = assemble_fbb(member, params)?;
    let (lemma3_no_genvec, lemma3_checks_agree) = match verify_lemma3(&fbb, tol.kernel_tol) {
        Ok(c) => (c.no_genvec, true),
        Err(Error::ToleranceDisagreement { .. }) => (false, false),
        Err(e) => return Err(e),
    };
    let (l4, _) = verify_lemma4(&fbb, member, params, tol.kernel_tol)?;
    let fspec = general_eigenvalues(&assemble_f(member, params)?)?;
    let target = Complex64::new(-2.0 * params.alpha, 0.0);
    let minus_two_alpha_in_f = fspec.eigenvalues.iter().any(|z| (z - target).norm() < MINUS_TWO_ALPHA_TOL);
    Ok(HypothesisReport {
        potential: format!("{} {}", config.spec.family.name(), config.spec.describe())
            .trim_end()
            .to_string(),
        n: config.len(),
        d: config.spec.d,
        m0: member.m0,
        h1_pass: h1.pass,
        h1_residual: h1.residual,
        h2_h3_pass: h23.pass,
        h2_kernel_dim: h23.kernel_dim,
        h2_span_check: h23.span_residual,
        h3_mu4: h23.mu4,
        h3_mu3_abs: h23.mu3_abs,
        h3_gap: h23.gap,
        h4_pass: h4.pass,
        h4_line_deviation: h4.line_deviation,
        h5_pass: h5.pass,
        h5_min_overlap: h5.min_overlap,
        h5_offending_eigenvalue: h5.offending_eigenvalue,
        lemma3_no_genvec,
        lemma3_checks_agree,
        lemma4_pass: l4.pass,
        lemma4_kernel_dim: l4.kernel_dim,
        lemma4_max_nonzero_re: l4.max_nonzero_re,
        lemma4_witness_residual: l4.witness_residual,
        minus_two_alpha_in_f,
        tolerances: *tol,
    })
}
