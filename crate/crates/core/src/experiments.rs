//! The two numerical studies: the eigenvalue table for stationary states of
//! the aggregation model, and the perturbation/polarization Monte Carlo sweep
//! for flocks of the second-order model.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{aggregation_rhs, aggregation_rhs_into, swarm_rhs_into, ModelParams, ParticleState, Rk4};
use crate::error::{Error, Result};
use crate::jacobians::{assemble_g_at, FlockFamilyMember, StationaryConfig};
use crate::linalg::{symmetric_eigen, Spectrum};
use crate::potentials::{Family, PotentialSpec};

/// Norm of the mean unit velocity.
pub fn polarization(s: &ParticleState) -> Result<f64> {
    polarization_of(&s.v)
}

/// [`polarization`] on a flat `2N` velocity vector.
pub fn polarization_of(v: &[f64]) -> Result<f64> {
    let n = v.len() / 2;
    if n == 0 {
        return Err(Error::Dimension("polarization of an empty state".into()));
    }
    let (mut sx, mut sy) = (0.0, 0.0);
    for (i, p) in v.chunks_exact(2).enumerate() {
        let speed = (p[0] * p[0] + p[1] * p[1]).sqrt();
        if speed == 0.0 {
            return Err(Error::ZeroVelocity(i));
        }
        sx += p[0] / speed;
        sy += p[1] / speed;
    }
    Ok(((sx * sx + sy * sy).sqrt() / n as f64).min(1.0))
}

/// Independent uniform draws on `[-a/2, a/2]` for every position and
/// velocity coordinate, positions first.
pub fn sample_perturbation<R: Rng>(a: f64, n: usize, rng: &mut R) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(a >= 0.0) || !a.is_finite() {
        return Err(Error::Domain {
            what: "perturbation strength",
            value: a,
        });
    }
    let mut draw = |_| (rng.gen::<f64>() - 0.5) * a;
    let dx = (0..2 * n).map(&mut draw).collect();
    let dv = (0..2 * n).map(&mut draw).collect();
    Ok((dx, dv))
}

/// `(1/N) sum_i ||(dx_i, dv_i)||`.
pub fn perturbation_norm_per_particle(dx: &[f64], dv: &[f64]) -> f64 {
    let n = dx.len() / 2;
    if n == 0 {
        return 0.0;
    }
    dx.chunks_exact(2)
        .zip(dv.chunks_exact(2))
        .map(|(p, q)| (p[0] * p[0] + p[1] * p[1] + q[0] * q[0] + q[1] * q[1]).sqrt())
        .sum::<f64>()
        / n as f64
}

/// How stationary states are computed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SteadySettings {
    /// Amplitude used while integrating.
    pub refine_d: f64,
    /// Integration horizon at `refine_d`.
    pub refine_t: f64,
    /// Largest RK4 step; smaller steps are taken when the linearisation
    /// demands it.
    pub dt: f64,
    pub seed: u64,
    /// Finish with pseudo-inverse Newton steps when the integration alone
    /// does not reach `target_residual`.
    pub newton_polish: bool,
    /// Residual at `refine_d` that ends the integration early.
    pub target_residual: f64,
}

impl Default for SteadySettings {
    fn default() -> Self {
        SteadySettings {
            refine_d: 500.0,
            refine_t: 500.0,
            dt: 1e-2,
            seed: 0,
            newton_polish: true,
            target_residual: 1e-10,
        }
    }
}

impl SteadySettings {
    pub fn validate(&self) -> Result<()> {
        let ok = self.refine_d > 0.0
            && self.refine_t >= 0.0
            && self.dt > 0.0
            && self.target_residual > 0.0
            && [self.refine_d, self.refine_t, self.dt, self.target_residual]
                .iter()
                .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid stationary-state settings {self:?}")))
        }
    }
}

/// Positions i.i.d. uniform on the disc of radius 2.
pub fn random_disc_positions(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .flat_map(|_| {
            let r = 2.0 * rng.gen::<f64>().sqrt();
            let phi = std::f64::consts::TAU * rng.gen::<f64>();
            [r * phi.cos(), r * phi.sin()]
        })
        .collect()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Upper bound on the spectral radius of `G` (largest absolute row sum).
fn gershgorin_bound(spec: &PotentialSpec, x: &[f64]) -> Result<f64> {
    let g = assemble_g_at(spec, x)?;
    Ok((0..g.rows())
        .map(|i| g.row(i).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max))
}

/// Integrate the aggregation model from `x` at amplitude `spec.d`.
///
/// The step is `min(dt, 2 / rho_bound)` with the bound refreshed every 25
/// steps, which keeps RK4 inside its stability region for stiff potentials.
/// Returns the final residual.
fn relax(spec: &PotentialSpec, x: &mut [f64], settings: &SteadySettings) -> Result<f64> {
    const REFRESH: usize = 25;
    let mut rk = Rk4::new(x.len());
    let mut t = 0.0;
    let mut step = 0usize;
    let mut h = settings.dt;
    let mut rhs = |_: f64, y: &[f64], dy: &mut [f64]| aggregation_rhs_into(spec, y, dy);
    while t < settings.refine_t {
        if step % REFRESH == 0 {
            let residual = max_abs(&aggregation_rhs(spec, x)?);
            if residual < settings.target_residual {
                return Ok(residual);
            }
            let rho = gershgorin_bound(spec, x)?;
            h = if rho > 0.0 { settings.dt.min(2.0 / rho) } else { settings.dt };
        }
        let hh = h.min(settings.refine_t - t);
        rk.step(&mut rhs, t, x, hh)?;
        step += 1;
        t += hh;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { step });
        }
    }
    Ok(max_abs(&aggregation_rhs(spec, x)?))
}

/// Newton steps `dx = -G^+ f(x)` where the pseudo-inverse drops the three
/// eigen-directions closest to zero (translations and rotation), with
/// backtracking on the residual. Returns the final residual.
fn newton_polish(spec: &PotentialSpec, x: &mut Vec<f64>, target: f64) -> Result<f64> {
    let mut f = aggregation_rhs(spec, x)?;
    let mut residual = max_abs(&f);
    for _ in 0..30 {
        if residual < 0.1 * target {
            break;
        }
        let eig = symmetric_eigen(&assemble_g_at(spec, x)?)?;
        let q = eig.eigenvectors.as_ref().expect("symmetric solver stores eigenvectors");
        let mut order: Vec<usize> = (0..eig.len()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].norm().total_cmp(&eig.eigenvalues[b].norm()));
        let mut delta = vec![0.0; x.len()];
        for &k in order.iter().skip(3) {
            let col = q.col(k);
            let c = crate::linalg::dot(&col, &f) / eig.eigenvalues[k].re;
            for (d, v) in delta.iter_mut().zip(&col) {
                *d -= c * v;
            }
        }
        let mut scale = 1.0;
        let mut improved = false;
        for _ in 0..20 {
            let trial: Vec<f64> = x.iter().zip(&delta).map(|(a, b)| a + scale * b).collect();
            if let Ok(ft) = aggregation_rhs(spec, &trial) {
                let rt = max_abs(&ft);
                if rt < residual {
                    *x = trial;
                    f = ft;
                    residual = rt;
                    improved = true;
                    break;
                }
            }
            scale *= 0.5;
        }
        if !improved {
            break;
        }
    }
    Ok(residual)
}

fn center(x: &mut [f64]) {
    let n = (x.len() / 2).max(1) as f64;
    let s = crate::dynamics::pair_sum(x);
    for p in x.chunks_exact_mut(2) {
        p[0] -= s[0] / n;
        p[1] -= s[1] / n;
    }
}

/// Stationary state of the aggregation model from seeded random initial
/// data. The search runs at amplitude `settings.refine_d`; the returned
/// configuration carries `spec` (and its residual at `spec.d`).
pub fn find_stationary_state(spec: &PotentialSpec, n: usize, settings: &SteadySettings) -> Result<StationaryConfig> {
    spec.validate()?;
    settings.validate()?;
    if n == 0 {
        return Err(Error::Dimension("need at least one particle".into()));
    }
    let refine = spec.with_scale(settings.refine_d);
    let mut x = random_disc_positions(n, settings.seed);
    let residual = relax(&refine, &mut x, settings)?;
    if settings.newton_polish && residual >= settings.target_residual && n > 1 {
        newton_polish(&refine, &mut x, settings.target_residual)?;
    }
    center(&mut x);
    StationaryConfig::new(*spec, x)
}

/// How the amplitude of the reported row is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DMode {
    /// Rescale so the most negative eigenvalue of `G` is `-1`.
    Normalize,
    /// Keep the amplitude of the supplied potential.
    Fixed,
    /// `Fixed` for Log-Newtonian, `Normalize` otherwise.
    #[default]
    Auto,
}

impl DMode {
    pub fn normalizes(self, family: Family) -> bool {
        match self {
            DMode::Normalize => true,
            DMode::Fixed => false,
            DMode::Auto => family != Family::LogNewtonian,
        }
    }
}

/// One row of the eigenvalue table.
///
/// `D` is reported in the table convention, where the amplitude multiplies
/// the mean interaction `(1/N) sum_j grad W`; the amplitude of each pair
/// term in the dynamics is `D_pair = D / N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Row {
    pub potential: String,
    pub params: String,
    #[serde(rename = "N")]
    pub n: usize,
    pub mu4: f64,
    pub abs_mu3: f64,
    #[serde(rename = "D")]
    pub d: f64,
    #[serde(rename = "D_pair")]
    pub d_pair: f64,
    pub kernel_dim: usize,
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct Table1Outcome {
    pub row: Table1Row,
    /// Stationary state at the reported pair amplitude.
    pub config: StationaryConfig,
    /// Spectrum of `G` at the reported amplitude.
    pub spectrum: Spectrum,
}

fn shape_params(spec: &PotentialSpec) -> String {
    match spec.family {
        Family::Morse => format!("C={} ell={}", spec.c, spec.ell),
        Family::QuasiMorse => format!("C={} ell={} k={}", spec.c, spec.ell, spec.k),
        Family::GeneralizedMorse => format!("C={} ell={} p={}", spec.c, spec.ell, spec.p),
        Family::LogNewtonian => String::new(),
    }
}

/// Settings of the eigenvalue-table pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Table1Settings {
    pub normalize: DMode,
    /// Amplitude in the table convention used when not normalising.
    pub fixed_d: f64,
}

impl Default for Table1Settings {
    fn default() -> Self {
        Table1Settings {
            normalize: DMode::Auto,
            fixed_d: 0.25,
        }
    }
}

/// One row of the eigenvalue table: `mu4` (largest eigenvalue outside the
/// kernel band), `|mu3|` (largest modulus inside it) and the reported `D`.
///
/// The stationary state is searched at `steady.refine_d` and the spectrum
/// rescaled to the reported amplitude, either normalised so that the most
/// negative eigenvalue of `G` is `-1` or fixed to `table.fixed_d`. The
/// kernel band is `kernel_tol` times the spectral radius at the reported
/// amplitude. Fails with [`Error::NotStationary`] when the residual at the
/// reported amplitude is not below `h1_tol`.
pub fn table1_pipeline(
    spec: &PotentialSpec,
    n: usize,
    steady: &SteadySettings,
    table: &Table1Settings,
    kernel_tol: f64,
    h1_tol: f64,
) -> Result<Table1Outcome> {
    let found = find_stationary_state(&spec.with_scale(steady.refine_d), n, steady)?;
    let g = assemble_g_at(&found.spec, &found.positions)?;
    let raw = symmetric_eigen(&g)?;
    let min_eig = raw.eigenvalues.iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
    // a single particle has G = 0 and nothing to normalise against
    let d_pair = if n > 1 && table.normalize.normalizes(spec.family) {
        if !(min_eig < 0.0) {
            return Err(Error::Domain {
                what: "smallest eigenvalue for normalisation",
                value: min_eig,
            });
        }
        steady.refine_d / -min_eig
    } else {
        table.fixed_d / n as f64
    };
    let config = found.rescaled(d_pair);
    let mut spectrum = raw.scaled(d_pair / steady.refine_d);
    let rho = spectrum.spectral_radius();
    spectrum.set_kernel_tol((kernel_tol * rho).max(f64::MIN_POSITIVE));
    if !(config.residual < h1_tol) {
        return Err(Error::NotStationary {
            residual: config.residual,
            tol: h1_tol,
        });
    }
    let mu4 = spectrum.nonzero().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    let abs_mu3 = spectrum
        .eigenvalues
        .iter()
        .filter(|z| z.norm() < spectrum.kernel_tol)
        .fold(0.0f64, |m, z| m.max(z.norm()));
    let row = Table1Row {
        potential: spec.family.name().to_string(),
        params: shape_params(spec),
        n,
        mu4,
        abs_mu3,
        d: d_pair * n as f64,
        d_pair,
        kernel_dim: spectrum.kernel_dim,
        residual: config.residual,
    };
    Ok(Table1Outcome { row, config, spectrum })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSettings {
    pub n_sims: usize,
    pub a_max: f64,
    pub horizon: f64,
    pub dt: f64,
    pub base_seed: u64,
    pub n_bins: usize,
}

impl Default for SweepSettings {
    fn default() -> Self {
        SweepSettings {
            n_sims: 500,
            a_max: 2.0,
            horizon: 100.0,
            dt: 1e-2,
            base_seed: 0,
            n_bins: 10,
        }
    }
}

impl SweepSettings {
    pub fn validate(&self) -> Result<()> {
        if self.n_sims == 0 {
            return Err(Error::Config("sweep needs n_sims >= 1".into()));
        }
        if !(self.a_max > 0.0) || !self.a_max.is_finite() {
            return Err(Error::Config(format!(
                "sweep needs a_max > 0 (perturbation range (0, a_max]), got {}",
                self.a_max
            )));
        }
        if !(self.dt > 0.0) || !(self.horizon >= 0.0) || !self.horizon.is_finite() {
            return Err(Error::Config(format!(
                "sweep needs dt > 0 and T >= 0, got dt={} T={}",
                self.dt, self.horizon
            )));
        }
        if self.n_bins == 0 {
            return Err(Error::Config("sweep needs n_bins >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub seed: u64,
    pub a: f64,
    pub pert_l2_per_particle: f64,
    pub pol_initial: f64,
    pub pol_min: f64,
    pub diverged: bool,
    /// Mean speed `(1/N) sum |v_i|` at the end of the run.
    pub mean_speed_final: f64,
}

fn mean_speed(v: &[f64]) -> f64 {
    let n = (v.len() / 2).max(1) as f64;
    v.chunks_exact(2).map(|p| (p[0] * p[0] + p[1] * p[1]).sqrt()).sum::<f64>() / n
}

/// Integrate the second-order model from the perturbed flock
/// `(x + dx, m0 + dv)` over `[0, horizon]`, tracking the smallest
/// polarization seen at the initial time and after every step.
pub fn run_perturbed_flock(
    member: &FlockFamilyMember,
    params: &ModelParams,
    pert: (&[f64], &[f64]),
    horizon: f64,
    dt: f64,
) -> Result<SweepRecord> {
    let (dx, dv) = pert;
    let x0 = &member.config.positions;
    let n = x0.len() / 2;
    if dx.len() != 2 * n || dv.len() != 2 * n {
        return Err(Error::Dimension(format!(
            "perturbation of length {}/{} for {n} particles",
            dx.len(),
            dv.len()
        )));
    }
    if !(dt > 0.0) || !(horizon >= 0.0) {
        return Err(Error::Config(format!("need dt > 0 and T >= 0, got dt={dt} T={horizon}")));
    }
    let mut y = Vec::with_capacity(4 * n);
    y.extend(x0.iter().zip(dx).map(|(a, b)| a + b));
    y.extend(dv.chunks_exact(2).flat_map(|p| [member.m0[0] + p[0], member.m0[1] + p[1]]));
    let pol_initial = polarization_of(&y[2 * n..])?;
    let mut pol_min = pol_initial;
    let spec = member.config.spec;
    let mut rhs = |_: f64, s: &[f64], ds: &mut [f64]| {
        let (x, v) = s.split_at(2 * n);
        let (dxo, dvo) = ds.split_at_mut(2 * n);
        dxo.copy_from_slice(v);
        swarm_rhs_into(&spec, params, x, v, dvo)
    };
    let steps = crate::dynamics::step_count(dt, horizon);
    let mut rk = Rk4::new(y.len());
    let mut t = 0.0;
    let mut diverged = false;
    for step in 1..=steps {
        let h = if step == steps { horizon - t } else { dt };
        let ok = rk.step(&mut rhs, t, &mut y, h).is_ok() && y.iter().all(|v| v.is_finite());
        if !ok {
            diverged = true;
            break;
        }
        t = if step == steps { horizon } else { step as f64 * dt };
        pol_min = pol_min.min(polarization_of(&y[2 * n..])?);
    }
    Ok(SweepRecord {
        seed: 0,
        a: 0.0,
        pert_l2_per_particle: perturbation_norm_per_particle(dx, dv),
        pol_initial,
        pol_min,
        diverged,
        mean_speed_final: if diverged { f64::NAN } else { mean_speed(&y[2 * n..]) },
    })
}

/// Run `k` of the sweep: seed `base_seed + k`, strength `a` uniform on
/// `(0, a_max]`, then the perturbation, all from one generator.
pub fn sweep_run(member: &FlockFamilyMember, params: &ModelParams, s: &SweepSettings, k: usize) -> Result<SweepRecord> {
    let seed = s.base_seed.wrapping_add(k as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = s.a_max * (1.0 - rng.gen::<f64>());
    let (dx, dv) = sample_perturbation(a, member.config.len(), &mut rng)?;
    let mut rec = run_perturbed_flock(member, params, (&dx, &dv), s.horizon, s.dt)?;
    rec.seed = seed;
    rec.a = a;
    Ok(rec)
}

/// All runs of the sweep in index order. `threads = None` uses the global
/// rayon pool; results do not depend on the thread count.
pub fn monte_carlo_sweep(
    member: &FlockFamilyMember,
    params: &ModelParams,
    settings: &SweepSettings,
    threads: Option<usize>,
) -> Result<Vec<SweepRecord>> {
    settings.validate()?;
    member.check_speed(params)?;
    let run = || {
        (0..settings.n_sims)
            .into_par_iter()
            .map(|k| sweep_run(member, params, settings, k))
            .collect::<Result<Vec<_>>>()
    };
    match threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepBin {
    pub bin_lo: f64,
    pub bin_hi: f64,
    pub count: usize,
    pub mean: f64,
    pub q05: f64,
    pub q95: f64,
    pub pert_mean: f64,
    pub pert_q05: f64,
    pub pert_q95: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepStats {
    pub bins: Vec<SweepBin>,
}

impl SweepStats {
    /// Bin whose range contains `p`.
    pub fn bin_containing(&self, p: f64) -> Option<&SweepBin> {
        let last = self.bins.len().checked_sub(1)?;
        self.bins
            .iter()
            .enumerate()
            .find(|(i, b)| p >= b.bin_lo && (p < b.bin_hi || (*i == last && p <= b.bin_hi)))
            .map(|(_, b)| b)
    }
}

/// Nearest-rank empirical quantile of sorted data: element `ceil(q n)`
/// (1-based).
pub fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Equal-width bins over the observed `pol_initial` range with per-bin
/// mean and 5%/95% quantiles of `pol_min` and of the perturbation norm.
/// Empty bins have count 0 and NaN statistics.
pub fn sweep_statistics(records: &[SweepRecord], n_bins: usize) -> Result<SweepStats> {
    if records.is_empty() {
        return Err(Error::Dimension("no sweep records".into()));
    }
    if n_bins == 0 {
        return Err(Error::Config("need at least one bin".into()));
    }
    let lo = records.iter().map(|r| r.pol_initial).fold(f64::INFINITY, f64::min);
    let hi = records.iter().map(|r| r.pol_initial).fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / n_bins as f64;
    let mut members: Vec<Vec<&SweepRecord>> = vec![Vec::new(); n_bins];
    for r in records {
        let k = if width > 0.0 {
            (((r.pol_initial - lo) / width) as usize).min(n_bins - 1)
        } else {
            0
        };
        members[k].push(r);
    }
    let stats = |vals: &mut Vec<f64>| {
        vals.sort_by(f64::total_cmp);
        let mean = if vals.is_empty() {
            f64::NAN
        } else {
            vals.iter().sum::<f64>() / vals.len() as f64
        };
        (mean, nearest_rank(vals, 0.05), nearest_rank(vals, 0.95))
    };
    let bins = members
        .iter()
        .enumerate()
        .map(|(k, m)| {
            let (mean, q05, q95) = stats(&mut m.iter().map(|r| r.pol_min).collect());
            let (pert_mean, pert_q05, pert_q95) = stats(&mut m.iter().map(|r| r.pert_l2_per_particle).collect());
            SweepBin {
                bin_lo: lo + k as f64 * width,
                bin_hi: if k + 1 == n_bins { hi } else { lo + (k + 1) as f64 * width },
                count: m.len(),
                mean,
                q05,
                q95,
                pert_mean,
                pert_q05,
                pert_q95,
            }
        })
        .collect();
    Ok(SweepStats { bins })
}

fn write_rows<W: Write, T: Serialize>(w: W, rows: &[T]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_records_csv<W: Write>(w: W, records: &[SweepRecord]) -> Result<()> {
    write_rows(w, records)
}

pub fn write_stats_csv<W: Write>(w: W, stats: &SweepStats) -> Result<()> {
    write_rows(w, &stats.bins)
}

pub fn write_table1_csv<W: Write>(w: W, rows: &[Table1Row]) -> Result<()> {
    write_rows(w, rows)
}
