//! Vector fields of the first-order aggregation model, the second-order
//! swarming model and its mean-velocity frame, plus a fixed-step RK4
//! integrator.
//!
//! Planar particle data is interleaved: particle `i` occupies entries
//! `2i` and `2i + 1` of every `2N` vector.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::potentials::{Family, PotentialSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub alpha: f64,
    pub beta: f64,
}

impl ModelParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        let p = ModelParams { alpha, beta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.alpha > 0.0 && self.beta > 0.0 && self.alpha.is_finite() && self.beta.is_finite() {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "alpha and beta must be positive, got alpha={} beta={}",
                self.alpha, self.beta
            )))
        }
    }

    /// Equilibrium speed `sqrt(alpha / beta)`.
    pub fn speed(&self) -> f64 {
        (self.alpha / self.beta).sqrt()
    }
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            alpha: 1.0,
            beta: 5.0,
        }
    }
}

/// Positions and velocities of `N` planar particles.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleState {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
}

impl ParticleState {
    pub fn new(x: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if x.len() % 2 != 0 || x.len() != v.len() {
            return Err(Error::Dimension(format!(
                "positions ({}) and velocities ({}) must have equal even length",
                x.len(),
                v.len()
            )));
        }
        Ok(ParticleState { x, v })
    }

    pub fn len(&self) -> usize {
        self.x.len() / 2
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Concatenated `(x, v)` vector used by the integrator.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut y = self.x.clone();
        y.extend_from_slice(&self.v);
        y
    }

    pub fn from_vec(y: &[f64]) -> Result<Self> {
        if y.len() % 4 != 0 {
            return Err(Error::Dimension(format!("state vector length {} is not 4N", y.len())));
        }
        let h = y.len() / 2;
        Ok(ParticleState {
            x: y[..h].to_vec(),
            v: y[h..].to_vec(),
        })
    }
}

/// State in the mean-velocity frame: positions, velocity deviations from
/// the mean, and the mean velocity itself.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanVelState {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub m: [f64; 2],
}

impl MeanVelState {
    /// `|(1/N) sum v_i|`; zero for a consistent state.
    pub fn consistency_defect(&self) -> f64 {
        let s = pair_sum(&self.v);
        let n = (self.v.len() / 2).max(1) as f64;
        (s[0] / n).hypot(s[1] / n)
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut y = self.x.clone();
        y.extend_from_slice(&self.v);
        y.extend_from_slice(&self.m);
        y
    }

    pub fn from_vec(y: &[f64]) -> Result<Self> {
        if y.len() < 2 || (y.len() - 2) % 4 != 0 {
            return Err(Error::Dimension(format!("state vector length {} is not 4N+2", y.len())));
        }
        let h = (y.len() - 2) / 2;
        Ok(MeanVelState {
            x: y[..h].to_vec(),
            v: y[h..2 * h].to_vec(),
            m: [y[2 * h], y[2 * h + 1]],
        })
    }
}

/// Sum of the per-particle 2-vectors of an interleaved array.
pub fn pair_sum(a: &[f64]) -> [f64; 2] {
    a.chunks_exact(2)
        .fold([0.0, 0.0], |s, p| [s[0] + p[0], s[1] + p[1]])
}

/// Accumulate `out_i = -sum_{j != i} grad W(x_i - x_j)` into `out`.
fn interaction_forces(spec: &PotentialSpec, x: &[f64], out: &mut [f64]) -> Result<()> {
    let k = spec.force_kernel();
    let ok = match k.family() {
        Family::Morse => pair_loop(x, out, |r| k.morse(r)),
        Family::LogNewtonian => pair_loop(x, out, |r| k.log_newtonian(r)),
        Family::GeneralizedMorse => pair_loop(x, out, |r| k.generalized_morse(r)),
        Family::QuasiMorse => pair_loop(x, out, |r| k.quasi_morse(r)),
    };
    if ok {
        Ok(())
    } else {
        Err(first_bad_pair(x))
    }
}

/// Pair sweep with the force law `f(r) = U'(r) / r` inlined. Returns false
/// when some distance is zero or not finite; the forces are then garbage.
#[inline(always)]
fn pair_loop<F: Fn(f64) -> f64>(x: &[f64], out: &mut [f64], f: F) -> bool {
    let n = x.len() / 2;
    out.iter_mut().for_each(|o| *o = 0.0);
    let mut ok = true;
    for i in 0..n {
        let (xi, yi) = (x[2 * i], x[2 * i + 1]);
        let (mut fx, mut fy) = (0.0, 0.0);
        for j in (i + 1)..n {
            let dx = xi - x[2 * j];
            let dy = yi - x[2 * j + 1];
            let r = (dx * dx + dy * dy).sqrt();
            ok &= r > 0.0 && r < f64::INFINITY;
            let g = f(r);
            fx -= g * dx;
            fy -= g * dy;
            out[2 * j] += g * dx;
            out[2 * j + 1] += g * dy;
        }
        out[2 * i] += fx;
        out[2 * i + 1] += fy;
    }
    ok
}

fn first_bad_pair(x: &[f64]) -> Error {
    let n = x.len() / 2;
    for i in 0..n {
        for j in (i + 1)..n {
            let r = (x[2 * i] - x[2 * j]).hypot(x[2 * i + 1] - x[2 * j + 1]);
            if r == 0.0 {
                return Error::CoincidentParticles { i, j };
            }
            if !r.is_finite() {
                return Error::Domain {
                    what: "pair distance",
                    value: r,
                };
            }
        }
    }
    Error::Domain {
        what: "pair distance",
        value: f64::NAN,
    }
}

/// Right-hand side of the aggregation model `dx_i/dt = -sum grad W(x_i - x_j)`.
pub fn aggregation_rhs(spec: &PotentialSpec, x: &[f64]) -> Result<Vec<f64>> {
    let mut out = vec![0.0; x.len()];
    interaction_forces(spec, x, &mut out)?;
    Ok(out)
}

/// [`aggregation_rhs`] writing into a caller-provided buffer.
pub fn aggregation_rhs_into(spec: &PotentialSpec, x: &[f64], out: &mut [f64]) -> Result<()> {
    interaction_forces(spec, x, out)
}

/// Interaction energy `sum_{i<j} D W(x_i - x_j)`.
pub fn interaction_energy(spec: &PotentialSpec, x: &[f64]) -> Result<f64> {
    let n = x.len() / 2;
    let mut e = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let r = (x[2 * i] - x[2 * j]).hypot(x[2 * i + 1] - x[2 * j + 1]);
            if r == 0.0 {
                return Err(Error::CoincidentParticles { i, j });
            }
            e += spec.value(r)?;
        }
    }
    Ok(e)
}

#[inline]
fn propulsion(params: &ModelParams, v: [f64; 2]) -> [f64; 2] {
    let g = params.alpha - params.beta * (v[0] * v[0] + v[1] * v[1]);
    [g * v[0], g * v[1]]
}

/// Right-hand side of the second-order model:
/// `dx = v`, `dv_i = alpha v_i - beta v_i |v_i|^2 - sum grad W(x_i - x_j)`.
pub fn swarm_rhs(
    spec: &PotentialSpec,
    params: &ModelParams,
    s: &ParticleState,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut dv = vec![0.0; s.v.len()];
    swarm_rhs_into(spec, params, &s.x, &s.v, &mut dv)?;
    Ok((s.v.clone(), dv))
}

/// Velocity part of [`swarm_rhs`] written into `dv`.
pub fn swarm_rhs_into(
    spec: &PotentialSpec,
    params: &ModelParams,
    x: &[f64],
    v: &[f64],
    dv: &mut [f64],
) -> Result<()> {
    interaction_forces(spec, x, dv)?;
    for (d, vi) in dv.chunks_exact_mut(2).zip(v.chunks_exact(2)) {
        let p = propulsion(params, [vi[0], vi[1]]);
        d[0] += p[0];
        d[1] += p[1];
    }
    Ok(())
}

/// Right-hand side in the mean-velocity frame:
///
/// ```text
/// dx_i/dt = v_i
/// dv_i/dt = (N-1)/N f(v_i + m) - 1/N sum_{j != i} f(v_j + m) - sum_{j != i} grad W(x_i - x_j)
/// dm/dt   = 1/N sum_j f(v_j + m),     f(u) = (alpha - beta |u|^2) u
/// ```
pub fn meanvel_rhs(spec: &PotentialSpec, params: &ModelParams, q: &MeanVelState) -> Result<MeanVelState> {
    let n = q.x.len() / 2;
    let nf = n as f64;
    let mut dv = vec![0.0; q.v.len()];
    interaction_forces(spec, &q.x, &mut dv)?;
    let props: Vec<[f64; 2]> = q
        .v
        .chunks_exact(2)
        .map(|vi| propulsion(params, [vi[0] + q.m[0], vi[1] + q.m[1]]))
        .collect();
    let total = props.iter().fold([0.0, 0.0], |s, p| [s[0] + p[0], s[1] + p[1]]);
    let mean = [total[0] / nf, total[1] / nf];
    for (d, p) in dv.chunks_exact_mut(2).zip(&props) {
        // (N-1)/N f_i - 1/N sum_{j != i} f_j = f_i - mean
        d[0] += p[0] - mean[0];
        d[1] += p[1] - mean[1];
    }
    Ok(MeanVelState {
        x: q.v.clone(),
        v: dv,
        m: mean,
    })
}

/// `v_i -> (v_i - m, m)` with `m` the mean velocity; positions unchanged.
pub fn to_meanvel(s: &ParticleState) -> MeanVelState {
    let n = s.len().max(1) as f64;
    let sum = pair_sum(&s.v);
    let m = [sum[0] / n, sum[1] / n];
    let v = s
        .v
        .chunks_exact(2)
        .flat_map(|vi| [vi[0] - m[0], vi[1] - m[1]])
        .collect();
    MeanVelState {
        x: s.x.clone(),
        v,
        m,
    }
}

pub fn from_meanvel(q: &MeanVelState) -> ParticleState {
    let v = q
        .v
        .chunks_exact(2)
        .flat_map(|vi| [vi[0] + q.m[0], vi[1] + q.m[1]])
        .collect();
    ParticleState { x: q.x.clone(), v }
}

/// Classical fourth-order Runge-Kutta with a fixed step.
///
/// Work buffers are allocated once; `rhs(t, y, dy)` fills `dy`.
pub struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    pub fn new(dim: usize) -> Self {
        Rk4 {
            k1: vec![0.0; dim],
            k2: vec![0.0; dim],
            k3: vec![0.0; dim],
            k4: vec![0.0; dim],
            tmp: vec![0.0; dim],
        }
    }

    pub fn step<F>(&mut self, rhs: &mut F, t: f64, y: &mut [f64], dt: f64) -> Result<()>
    where
        F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
    {
        let h2 = 0.5 * dt;
        rhs(t, y, &mut self.k1)?;
        for ((tmp, yi), k) in self.tmp.iter_mut().zip(y.iter()).zip(&self.k1) {
            *tmp = yi + h2 * k;
        }
        rhs(t + h2, &self.tmp, &mut self.k2)?;
        for ((tmp, yi), k) in self.tmp.iter_mut().zip(y.iter()).zip(&self.k2) {
            *tmp = yi + h2 * k;
        }
        rhs(t + h2, &self.tmp, &mut self.k3)?;
        for ((tmp, yi), k) in self.tmp.iter_mut().zip(y.iter()).zip(&self.k3) {
            *tmp = yi + dt * k;
        }
        rhs(t + dt, &self.tmp, &mut self.k4)?;
        let h6 = dt / 6.0;
        for (i, yi) in y.iter_mut().enumerate() {
            *yi += h6 * (self.k1[i] + 2.0 * (self.k2[i] + self.k3[i]) + self.k4[i]);
        }
        Ok(())
    }
}

/// Number of steps used to cover `[0, horizon]` with step `dt`; the final
/// step is shortened when `horizon` is not a multiple of `dt`.
pub fn step_count(dt: f64, horizon: f64) -> usize {
    let raw = horizon / dt;
    let rounded = raw.round();
    if (raw - rounded).abs() <= 1e-9 * raw.max(1.0) {
        rounded as usize
    } else {
        raw.ceil() as usize
    }
}

/// Integrate `dy/dt = rhs(t, y)` from `y0` over `[0, horizon]`.
///
/// `observer(step, t, y)` is called for the initial state (step 0) and after
/// every accepted step. A non-finite state aborts with
/// [`Error::Divergence`] carrying the index of the offending step.
pub fn rk4_integrate<F, O>(
    mut rhs: F,
    y0: &[f64],
    dt: f64,
    horizon: f64,
    mut observer: O,
) -> Result<Vec<f64>>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
    O: FnMut(usize, f64, &[f64]),
{
    if !(dt > 0.0) || !(horizon >= 0.0) {
        return Err(Error::Config(format!(
            "need dt > 0 and T >= 0, got dt={dt} T={horizon}"
        )));
    }
    let steps = step_count(dt, horizon);
    let mut y = y0.to_vec();
    let mut rk = Rk4::new(y.len());
    observer(0, 0.0, &y);
    let mut t = 0.0;
    for step in 1..=steps {
        let h = if step == steps { horizon - t } else { dt };
        rk.step(&mut rhs, t, &mut y, h)?;
        t = if step == steps { horizon } else { step as f64 * dt };
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { step });
        }
        observer(step, t, &y);
    }
    Ok(y)
}

/// Integrate the second-order model and collect snapshots every `stride` steps.
pub fn simulate_swarm(
    spec: &PotentialSpec,
    params: &ModelParams,
    initial: &ParticleState,
    dt: f64,
    horizon: f64,
    stride: usize,
) -> Result<Vec<(f64, ParticleState)>> {
    let half = initial.x.len();
    let mut snaps = Vec::new();
    let stride = stride.max(1);
    let steps = step_count(dt, horizon);
    rk4_integrate(
        |_, y, dy| {
            let (x, v) = y.split_at(half);
            let (dx, dv) = dy.split_at_mut(half);
            dx.copy_from_slice(v);
            swarm_rhs_into(spec, params, x, v, dv)
        },
        &initial.to_vec(),
        dt,
        horizon,
        |step, t, y| {
            if step % stride == 0 || step == steps {
                snaps.push((t, ParticleState::from_vec(y).expect("state length is 4N")));
            }
        },
    )?;
    Ok(snaps)
}

/// CSV export with columns `t, particle, x, y, vx, vy`.
pub fn write_trajectory_csv<W: Write>(w: W, snapshots: &[(f64, ParticleState)]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["t", "particle", "x", "y", "vx", "vy"])?;
    for (t, s) in snapshots {
        for i in 0..s.len() {
            out.write_record(&[
                t.to_string(),
                i.to_string(),
                s.x[2 * i].to_string(),
                s.x[2 * i + 1].to_string(),
                s.v[2 * i].to_string(),
                s.v[2 * i + 1].to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn morse() -> PotentialSpec {
        PotentialSpec::morse(10.0 / 9.0, 0.75)
    }

    fn r_star() -> f64 {
        (10.0f64 / 9.0 / 0.75).ln() / (1.0 / 0.75 - 1.0)
    }

    fn random_positions(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..2 * n).map(|_| rng.gen_range(-2.0..2.0)).collect()
    }

    #[test]
    fn pair_at_equilibrium_distance() {
        let f = aggregation_rhs(&morse(), &[0.0, 0.0, r_star(), 0.0]).unwrap();
        assert!(f.iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn single_particle_has_no_force() {
        assert_eq!(aggregation_rhs(&morse(), &[0.3, -0.2]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn net_force_vanishes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for spec in [morse(), PotentialSpec::log_newtonian(), PotentialSpec::quasi_morse(10.0 / 9.0, 0.75, 0.5)] {
            let x = random_positions(12, &mut rng);
            let f = aggregation_rhs(&spec, &x).unwrap();
            let s = pair_sum(&f);
            let scale = f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(s[0].abs() < 1e-12 * scale * 12.0 && s[1].abs() < 1e-12 * scale * 12.0);
        }
    }

    #[test]
    fn coincident_particles_rejected() {
        let err = aggregation_rhs(&morse(), &[1.0, 1.0, 0.0, 0.0, 1.0, 1.0]).unwrap_err();
        assert!(matches!(err, Error::CoincidentParticles { i: 0, j: 2 }));
    }

    #[test]
    fn force_is_negative_energy_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let spec = morse();
        let x = random_positions(6, &mut rng);
        let f = aggregation_rhs(&spec, &x).unwrap();
        let h = 1e-6;
        for k in 0..x.len() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k] += h;
            xm[k] -= h;
            let g = (interaction_energy(&spec, &xp).unwrap() - interaction_energy(&spec, &xm).unwrap()) / (2.0 * h);
            assert!((f[k] + g).abs() < 1e-6 * f[k].abs().max(1e-3), "component {k}: {} vs {}", f[k], -g);
        }
    }

    #[test]
    fn energy_decreases_along_gradient_flow() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let spec = morse();
        let x0 = random_positions(8, &mut rng);
        let mut last = interaction_energy(&spec, &x0).unwrap();
        rk4_integrate(
            |_, y, dy| {
                dy.copy_from_slice(&aggregation_rhs(&spec, y)?);
                Ok(())
            },
            &x0,
            1e-3,
            2.0,
            |_, _, y| {
                let e = interaction_energy(&spec, y).unwrap();
                assert!(e <= last + 1e-14);
                last = e;
            },
        )
        .unwrap();
    }

    #[test]
    fn single_particle_propulsion() {
        let params = ModelParams::default();
        let s = ParticleState::new(vec![0.0, 0.0], vec![0.0, 0.0]).unwrap();
        let (_, dv) = swarm_rhs(&morse(), &params, &s).unwrap();
        assert_eq!(dv, vec![0.0, 0.0]);

        let speed = params.speed();
        let s = ParticleState::new(vec![0.0, 0.0], vec![2.0 * speed, 0.0]).unwrap();
        let (dx, dv) = swarm_rhs(&morse(), &params, &s).unwrap();
        assert_eq!(dx, s.v);
        assert!(dv[0] < 0.0 && dv[1] == 0.0);
    }

    #[test]
    fn flock_has_no_acceleration() {
        let params = ModelParams::default();
        let s0 = params.speed();
        let m0 = [s0 * 0.3f64.cos(), s0 * 0.3f64.sin()];
        let s = ParticleState::new(vec![0.0, 0.0, r_star(), 0.0], [m0, m0].concat()).unwrap();
        let (_, dv) = swarm_rhs(&morse(), &params, &s).unwrap();
        assert!(dv.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn meanvel_round_trip_and_consistency() {
        let s = ParticleState::new(vec![0.0, 1.0, 2.0, 3.0], vec![1.0, 2.0, 1.0, 2.0]).unwrap();
        let q = to_meanvel(&s);
        assert_eq!(q.v, vec![0.0; 4]);
        assert_eq!(q.m, [1.0, 2.0]);
        assert_eq!(from_meanvel(&q), s);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = ParticleState::new(random_positions(5, &mut rng), random_positions(5, &mut rng)).unwrap();
        let q = to_meanvel(&s);
        assert!(q.consistency_defect() < 1e-15);
        let back = from_meanvel(&q);
        for (a, b) in back.v.iter().zip(&s.v) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn meanvel_flock_is_stationary() {
        let params = ModelParams::default();
        let s0 = params.speed();
        let q = MeanVelState {
            x: vec![0.0, 0.0, r_star(), 0.0],
            v: vec![0.0; 4],
            m: [s0 * 0.3f64.cos(), s0 * 0.3f64.sin()],
        };
        let d = meanvel_rhs(&morse(), &params, &q).unwrap();
        assert!(d.to_vec().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn meanvel_matches_transformed_swarm() {
        let params = ModelParams::new(1.0, 5.0).unwrap();
        let spec = morse();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..5 {
            let s = ParticleState::new(random_positions(5, &mut rng), random_positions(5, &mut rng)).unwrap();
            let (dx, dv) = swarm_rhs(&spec, &params, &s).unwrap();
            // the transform is linear in (x, v), so it maps tangent vectors too
            let n = 5.0;
            let sum = pair_sum(&dv);
            let dm = [sum[0] / n, sum[1] / n];
            let q = to_meanvel(&s);
            let d = meanvel_rhs(&spec, &params, &q).unwrap();
            // position derivative in the frame is v - m
            let dx_frame: Vec<f64> = dx.chunks_exact(2).flat_map(|v| [v[0] - q.m[0], v[1] - q.m[1]]).collect();
            let dv_frame: Vec<f64> = dv.chunks_exact(2).flat_map(|a| [a[0] - dm[0], a[1] - dm[1]]).collect();
            for (a, b) in d.x.iter().zip(&dx_frame) {
                assert!((a - b).abs() < 1e-10);
            }
            for (a, b) in d.v.iter().zip(&dv_frame) {
                assert!((a - b).abs() < 1e-10);
            }
            assert!((d.m[0] - dm[0]).abs() < 1e-10 && (d.m[1] - dm[1]).abs() < 1e-10);
            let s = pair_sum(&d.v);
            assert!(s[0].abs() < 1e-12 && s[1].abs() < 1e-12);
        }
    }

    #[test]
    fn meanvel_flow_preserves_consistency() {
        let params = ModelParams::default();
        let spec = morse();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let s = ParticleState::new(random_positions(6, &mut rng), random_positions(6, &mut rng)).unwrap();
        let q0 = to_meanvel(&s);
        let y = rk4_integrate(
            |_, y, dy| {
                let q = MeanVelState::from_vec(y)?;
                dy.copy_from_slice(&meanvel_rhs(&spec, &params, &q)?.to_vec());
                Ok(())
            },
            &q0.to_vec(),
            1e-2,
            10.0,
            |_, _, _| {},
        )
        .unwrap();
        let q = MeanVelState::from_vec(&y).unwrap();
        let s = pair_sum(&q.v);
        assert!(s[0].abs() < 1e-8 && s[1].abs() < 1e-8);
    }

    #[test]
    fn rk4_exponential_decay() {
        let solve = |dt: f64| {
            rk4_integrate(
                |_, y, dy| {
                    dy[0] = -y[0];
                    Ok(())
                },
                &[1.0],
                dt,
                1.0,
                |_, _, _| {},
            )
            .unwrap()[0]
        };
        let exact = (-1.0f64).exp();
        let e1 = (solve(0.1) - exact).abs();
        let e2 = (solve(0.05) - exact).abs();
        assert!(e1 < 1e-6, "{e1}");
        let ratio = e1 / e2;
        assert!((ratio - 16.0).abs() < 1.0, "convergence ratio {ratio}");
    }

    #[test]
    fn rk4_zero_field_and_observer() {
        let y0 = [1.5, -2.0, 3.25];
        let mut seen = Vec::new();
        let y = rk4_integrate(
            |_, _, dy| {
                dy.iter_mut().for_each(|d| *d = 0.0);
                Ok(())
            },
            &y0,
            0.3,
            1.0,
            |step, t, _| seen.push((step, t)),
        )
        .unwrap();
        assert_eq!(y, y0.to_vec());
        assert_eq!(seen.len(), 5);
        assert_eq!(seen.last().unwrap(), &(4, 1.0));
    }

    #[test]
    fn rk4_divergence_reports_step() {
        let err = rk4_integrate(
            |_, y, dy| {
                dy[0] = y[0] * y[0];
                Ok(())
            },
            &[1.0],
            0.1,
            5.0,
            |_, _, _| {},
        )
        .unwrap_err();
        match err {
            Error::Divergence { step } => assert!(step > 1 && step < 50),
            other => panic!("unexpected {other:?}"),
        }
        assert!(rk4_integrate(|_, _, _| Ok(()), &[0.0], 0.0, 1.0, |_, _, _| {}).is_err());
    }

    #[test]
    fn trajectory_csv_layout() {
        let s = ParticleState::new(vec![0.0, 1.0, 2.0, 3.0], vec![0.5, 0.0, 0.0, 0.5]).unwrap();
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, &[(0.0, s.clone()), (0.5, s)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,particle,x,y,vx,vy");
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[2], "0,1,2,3,0,0.5");
    }
}
