//! Analytic linearisations around a flock.
//!
//! * `G(x)`: Jacobian of the aggregation model, built from 2x2 Hessian blocks.
//! * `F`: Jacobian of the mean-velocity-frame system at `(x, 0, m0)`, of size
//!   `4N + 2`.
//! * `F_B^B`: `F` restricted to the `4N`-dimensional subspace of
//!   mean-velocity-consistent perturbations, written in the basis `B`.

use serde::{Deserialize, Serialize};

use crate::dynamics::{aggregation_rhs, ModelParams};
use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::potentials::PotentialSpec;

/// Positions of a (numerically) stationary state of the aggregation model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryConfig {
    pub positions: Vec<f64>,
    /// `||aggregation_rhs(positions)||_inf` under `spec`.
    pub residual: f64,
    pub spec: PotentialSpec,
}

impl StationaryConfig {
    pub fn new(spec: PotentialSpec, positions: Vec<f64>) -> Result<Self> {
        let residual = stationarity_residual(&spec, &positions)?;
        Ok(StationaryConfig {
            positions,
            residual,
            spec,
        })
    }

    pub fn len(&self) -> usize {
        self.positions.len() / 2
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Same positions under amplitude `d`; the residual scales linearly.
    pub fn rescaled(&self, d: f64) -> Self {
        let factor = d / self.spec.d;
        StationaryConfig {
            positions: self.positions.clone(),
            residual: self.residual * factor,
            spec: self.spec.with_scale(d),
        }
    }
}

pub fn stationarity_residual(spec: &PotentialSpec, x: &[f64]) -> Result<f64> {
    Ok(aggregation_rhs(spec, x)?
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs())))
}

/// A member of the flock family: spatial profile plus common velocity `m0`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlockFamilyMember {
    pub config: StationaryConfig,
    pub m0: [f64; 2],
}

impl FlockFamilyMember {
    /// Member with `m0 = s (cos theta, sin theta)`, `s = sqrt(alpha / beta)`.
    pub fn with_angle(config: StationaryConfig, params: &ModelParams, theta: f64) -> Self {
        let s = params.speed();
        FlockFamilyMember {
            config,
            m0: [s * theta.cos(), s * theta.sin()],
        }
    }

    pub fn check_speed(&self, params: &ModelParams) -> Result<()> {
        let speed = self.m0[0].hypot(self.m0[1]);
        let expected = params.speed();
        if (speed - expected).abs() > 1e-12 * expected.max(1.0) {
            return Err(Error::SpeedConstraint { speed, expected });
        }
        Ok(())
    }
}

/// `G(x)` with diagonal blocks `-sum_j Hess W(x_i - x_j)` and off-diagonal
/// blocks `Hess W(x_i - x_j)`.
pub fn assemble_g(config: &StationaryConfig) -> Result<DenseMatrix> {
    assemble_g_at(&config.spec, &config.positions)
}

pub fn assemble_g_at(spec: &PotentialSpec, x: &[f64]) -> Result<DenseMatrix> {
    let n = x.len() / 2;
    let mut g = DenseMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in (i + 1)..n {
            let d = [x[2 * i] - x[2 * j], x[2 * i + 1] - x[2 * j + 1]];
            let h = spec.hessian(d).map_err(|e| match e {
                Error::CoincidentParticles { .. } => Error::CoincidentParticles { i, j },
                other => other,
            })?;
            for a in 0..2 {
                for b in 0..2 {
                    g[(2 * i + a, 2 * j + b)] = h[a][b];
                    g[(2 * j + a, 2 * i + b)] = h[a][b];
                    g[(2 * i + a, 2 * i + b)] -= h[a][b];
                    g[(2 * j + a, 2 * j + b)] -= h[a][b];
                }
            }
        }
    }
    Ok(g)
}

/// Infinitesimal translations `w1`, `w2` and rotation `w3` of `x`.
pub fn kernel_vectors_w(x: &[f64]) -> [Vec<f64>; 3] {
    let n = x.len() / 2;
    let w1 = (0..n).flat_map(|_| [1.0, 0.0]).collect();
    let w2 = (0..n).flat_map(|_| [0.0, 1.0]).collect();
    let w3 = x.chunks_exact(2).flat_map(|p| [-p[1], p[0]]).collect();
    [w1, w2, w3]
}

/// `2 beta m0 m0^T`.
fn velocity_damping(m0: [f64; 2], beta: f64) -> [[f64; 2]; 2] {
    [
        [2.0 * beta * m0[0] * m0[0], 2.0 * beta * m0[0] * m0[1]],
        [2.0 * beta * m0[1] * m0[0], 2.0 * beta * m0[1] * m0[1]],
    ]
}

/// Jacobian of the mean-velocity-frame system at `(x, 0, m0)`.
pub fn assemble_f(member: &FlockFamilyMember, params: &ModelParams) -> Result<DenseMatrix> {
    member.check_speed(params)?;
    let g = assemble_g(&member.config)?;
    let n = member.config.len();
    let nf = n as f64;
    let dim = 4 * n + 2;
    let mb = velocity_damping(member.m0, params.beta);
    let mut f = DenseMatrix::zeros(dim, dim);
    for k in 0..2 * n {
        f[(k, 2 * n + k)] = 1.0;
    }
    f.set_block(2 * n, 0, &g);
    for i in 0..n {
        for j in 0..n {
            let c = if i == j { (nf - 1.0) / nf } else { -1.0 / nf };
            for a in 0..2 {
                for b in 0..2 {
                    f[(2 * n + 2 * i + a, 2 * n + 2 * j + b)] = -c * mb[a][b];
                }
            }
        }
    }
    for j in 0..n {
        for a in 0..2 {
            for b in 0..2 {
                f[(4 * n + a, 2 * n + 2 * j + b)] = -mb[a][b] / nf;
            }
        }
    }
    for a in 0..2 {
        for b in 0..2 {
            f[(4 * n + a, 4 * n + b)] = -mb[a][b];
        }
    }
    Ok(f)
}

/// The `4N` basis vectors of the consistent subspace, each of length `4N + 2`:
/// unit position vectors, velocity vectors `e_k - e_N` for the first `N - 1`
/// particles (per coordinate), and the two mean-velocity unit vectors.
pub fn basis_b(n: usize) -> Vec<Vec<f64>> {
    let dim = 4 * n + 2;
    let mut basis = Vec::with_capacity(4 * n);
    for i in 0..2 * n {
        let mut b = vec![0.0; dim];
        b[i] = 1.0;
        basis.push(b);
    }
    for k in 0..n.saturating_sub(1) {
        for c in 0..2 {
            let mut b = vec![0.0; dim];
            b[2 * n + 2 * k + c] = 1.0;
            b[2 * n + 2 * (n - 1) + c] = -1.0;
            basis.push(b);
        }
    }
    for c in 0..2 {
        let mut b = vec![0.0; dim];
        b[4 * n + c] = 1.0;
        basis.push(b);
    }
    basis
}

/// Projection of a perturbation `(dx, dv)` onto the consistent subspace,
/// as a `4N + 2` vector `(dx, dv_i - mean, mean)`.
pub fn project_p(dx: &[f64], dv: &[f64]) -> Vec<f64> {
    let n = dv.len() / 2;
    let nf = n.max(1) as f64;
    let s = crate::dynamics::pair_sum(dv);
    let mean = [s[0] / nf, s[1] / nf];
    let mut out = dx.to_vec();
    out.extend(dv.chunks_exact(2).flat_map(|v| [v[0] - mean[0], v[1] - mean[1]]));
    out.extend_from_slice(&mean);
    out
}

/// Coordinates of [`project_p`] in the basis [`basis_b`] (length `4N`).
pub fn coordinates_in_b(dx: &[f64], dv: &[f64]) -> Vec<f64> {
    let n = dv.len() / 2;
    let p = project_p(dx, dv);
    let mut coords = p[..2 * n].to_vec();
    coords.extend_from_slice(&p[2 * n..2 * n + 2 * (n - 1)]);
    coords.extend_from_slice(&p[4 * n..]);
    coords
}

/// `F` restricted to span(B), in B coordinates:
///
/// ```text
/// [ 0        [I_{2N-2}; -1^T (x) I_2]     0           ]
/// [ ceil(G)  -I_{N-1} (x) 2b m0 m0^T      0           ]
/// [ 0        0                            -2b m0 m0^T ]
/// ```
///
/// `ceil(G)` is `G` without its last two rows (particle `N` is eliminated).
pub fn assemble_fbb(member: &FlockFamilyMember, params: &ModelParams) -> Result<DenseMatrix> {
    member.check_speed(params)?;
    let g = assemble_g(&member.config)?;
    let n = member.config.len();
    let dim = 4 * n;
    let r = 2 * n - 2;
    let mb = velocity_damping(member.m0, params.beta);
    let mut f = DenseMatrix::zeros(dim, dim);
    for k in 0..r {
        f[(k, 2 * n + k)] = 1.0;
    }
    for k in 0..n.saturating_sub(1) {
        for c in 0..2 {
            f[(2 * n - 2 + c, 2 * n + 2 * k + c)] = -1.0;
        }
    }
    f.set_block(2 * n, 0, &g.block(0, r, 0, 2 * n));
    for k in 0..n.saturating_sub(1) {
        for a in 0..2 {
            for b in 0..2 {
                f[(2 * n + 2 * k + a, 2 * n + 2 * k + b)] = -mb[a][b];
            }
        }
    }
    for a in 0..2 {
        for b in 0..2 {
            f[(4 * n - 2 + a, 4 * n - 2 + b)] = -mb[a][b];
        }
    }
    Ok(f)
}

/// Upper-left `(4N - 2)` block `H` of `F_B^B`; the trailing 2x2 block
/// `-2 beta m0 m0^T` is decoupled from it.
pub fn h_block(fbb: &DenseMatrix) -> DenseMatrix {
    let k = fbb.rows() - 2;
    fbb.block(0, k, 0, k)
}

/// Kernel witnesses of `F_B^B`: `z_i = (w_i, 0, 0)` for `i = 1..3` and
/// `z_4 = (0, 0, m0_perp)` with `m0_perp = (-m0_2, m0_1)`.
pub fn kernel_vectors_z(member: &FlockFamilyMember) -> [Vec<f64>; 4] {
    let n = member.config.len();
    let dim = 4 * n;
    let [w1, w2, w3] = kernel_vectors_w(&member.config.positions);
    let lift = |w: Vec<f64>| {
        let mut z = w;
        z.resize(dim, 0.0);
        z
    };
    let mut z4 = vec![0.0; dim];
    z4[dim - 2] = -member.m0[1];
    z4[dim - 1] = member.m0[0];
    [lift(w1), lift(w2), lift(w3), z4]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{meanvel_rhs, MeanVelState};
    use crate::linalg::{dot, general_eigenvalues, norm2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn morse() -> PotentialSpec {
        PotentialSpec::morse(10.0 / 9.0, 0.75)
    }

    fn random_config(n: usize, seed: u64) -> StationaryConfig {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = (0..2 * n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        StationaryConfig::new(morse(), x).unwrap()
    }

    /// Central-difference Jacobian of a vector field.
    fn fd_jacobian<F: Fn(&[f64]) -> Vec<f64>>(f: F, y: &[f64], h: f64) -> DenseMatrix {
        let n = y.len();
        let m = f(y).len();
        let mut jac = DenseMatrix::zeros(m, n);
        for k in 0..n {
            let mut yp = y.to_vec();
            let mut ym = y.to_vec();
            yp[k] += h;
            ym[k] -= h;
            let (fp, fm) = (f(&yp), f(&ym));
            for i in 0..m {
                jac[(i, k)] = (fp[i] - fm[i]) / (2.0 * h);
            }
        }
        jac
    }

    #[test]
    fn g_matches_finite_differences() {
        let cfg = random_config(10, 1);
        let g = assemble_g(&cfg).unwrap();
        let fd = fd_jacobian(|x| aggregation_rhs(&cfg.spec, x).unwrap(), &cfg.positions, 1e-5);
        assert!(g.sub(&fd).max_abs() < 1e-6 * g.max_abs());
    }

    #[test]
    fn g_symmetric_with_zero_column_sums() {
        let cfg = random_config(9, 2);
        let g = assemble_g(&cfg).unwrap();
        assert_eq!(g.asymmetry(), 0.0);
        let n = cfg.len();
        for col in 0..2 * n {
            for c in 0..2 {
                let s: f64 = (0..n).map(|i| g[(2 * i + c, col)]).sum();
                assert!(s.abs() < 1e-12 * g.max_abs());
            }
        }
        // translations are in the kernel for any configuration
        let [w1, w2, _] = kernel_vectors_w(&cfg.positions);
        assert!(norm2(&g.mul_vec(&w1)) < 1e-12 * g.frobenius_norm());
        assert!(norm2(&g.mul_vec(&w2)) < 1e-12 * g.frobenius_norm());
    }

    #[test]
    fn g_two_particles() {
        let spec = morse();
        let cfg = StationaryConfig::new(spec, vec![0.0, 0.0, 1.4, 0.0]).unwrap();
        let g = assemble_g(&cfg).unwrap();
        let h = spec.hessian([-1.4, 0.0]).unwrap();
        for a in 0..2 {
            for b in 0..2 {
                assert_eq!(g[(a, 2 + b)], h[a][b]);
                assert_eq!(g[(a, b)], -h[a][b]);
                assert_eq!(g[(2 + a, 2 + b)], -h[a][b]);
            }
        }
    }

    #[test]
    fn rotation_vector_is_kernel_up_to_residual() {
        // G(x) w3 = J f(x) for any x, so |G w3| equals the force norm
        let cfg = random_config(7, 3);
        let g = assemble_g(&cfg).unwrap();
        let [_, _, w3] = kernel_vectors_w(&cfg.positions);
        let f = aggregation_rhs(&cfg.spec, &cfg.positions).unwrap();
        let jf: Vec<f64> = f.chunks_exact(2).flat_map(|p| [-p[1], p[0]]).collect();
        let gw = g.mul_vec(&w3);
        for (a, b) in gw.iter().zip(&jf) {
            assert!((a - b).abs() < 1e-10 * g.max_abs().max(1.0));
        }
    }

    #[test]
    fn w_vectors() {
        let [w1, w2, w3] = kernel_vectors_w(&[3.0, 4.0]);
        assert_eq!(w1, vec![1.0, 0.0]);
        assert_eq!(w2, vec![0.0, 1.0]);
        assert_eq!(w3, vec![-4.0, 3.0]);
        let x = random_config(6, 4).positions;
        let [w1, w2, w3] = kernel_vectors_w(&x);
        assert_eq!(dot(&w1, &w2), 0.0);
        assert_eq!(dot(&w3, &x), 0.0);
    }

    fn member(n: usize, seed: u64, theta: f64) -> (FlockFamilyMember, ModelParams) {
        let params = ModelParams::new(1.0, 5.0).unwrap();
        (FlockFamilyMember::with_angle(random_config(n, seed), &params, theta), params)
    }

    #[test]
    fn f_matches_finite_differences_of_frame_system() {
        let (mem, params) = member(5, 5, 0.3);
        let f = assemble_f(&mem, &params).unwrap();
        let n = mem.config.len();
        let mut q = mem.config.positions.clone();
        q.extend(vec![0.0; 2 * n]);
        q.extend_from_slice(&mem.m0);
        let fd = fd_jacobian(
            |y| {
                let s = MeanVelState::from_vec(y).unwrap();
                meanvel_rhs(&mem.config.spec, &params, &s).unwrap().to_vec()
            },
            &q,
            1e-5,
        );
        assert!(f.sub(&fd).max_abs() < 1e-6 * f.max_abs());
    }

    #[test]
    fn f_mean_block() {
        let (mem, params) = member(4, 6, 0.0);
        let f = assemble_f(&mem, &params).unwrap();
        let d = 4 * 4;
        assert!((f[(d, d)] + 2.0 * params.alpha).abs() < 1e-14);
        assert_eq!(f[(d, d + 1)], 0.0);
        assert_eq!(f[(d + 1, d)], 0.0);
        assert_eq!(f[(d + 1, d + 1)], 0.0);
        let (mem, params) = member(4, 6, 1.1);
        let f = assemble_f(&mem, &params).unwrap();
        let eig = general_eigenvalues(&f.block(d, d + 2, d, d + 2)).unwrap();
        assert!(eig.eigenvalues[0].norm() < 1e-14);
        assert!((eig.eigenvalues[1].re + 2.0 * params.alpha).abs() < 1e-14);
    }

    #[test]
    fn speed_constraint_enforced() {
        let (mut mem, params) = member(3, 7, 0.0);
        mem.m0 = [1.0, 0.0];
        assert!(matches!(assemble_f(&mem, &params), Err(Error::SpeedConstraint { .. })));
        assert!(assemble_fbb(&mem, &params).is_err());
    }

    #[test]
    fn projection_cases() {
        let dx = vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6];
        let p = project_p(&dx, &[1.0, -2.0, 1.0, -2.0, 1.0, -2.0]);
        assert_eq!(&p[..6], dx.as_slice());
        assert!(p[6..12].iter().all(|v| v.abs() < 1e-15));
        assert_eq!(&p[12..], &[1.0, -2.0]);

        let dv = vec![1.0, 0.5, -2.0, 0.0, 1.0, -0.5];
        let p = project_p(&dx, &dv);
        assert_eq!(&p[6..12], dv.as_slice());
        assert_eq!(&p[12..], &[0.0, 0.0]);
    }

    #[test]
    fn basis_recombination() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let n = 4;
        let dx: Vec<f64> = (0..2 * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let dv: Vec<f64> = (0..2 * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let coords = coordinates_in_b(&dx, &dv);
        let basis = basis_b(n);
        assert_eq!(coords.len(), basis.len());
        let mut recombined = vec![0.0; 4 * n + 2];
        for (c, b) in coords.iter().zip(&basis) {
            for (r, bi) in recombined.iter_mut().zip(b) {
                *r += c * bi;
            }
        }
        let p = project_p(&dx, &dv);
        for (a, b) in recombined.iter().zip(&p) {
            assert!((a - b).abs() < 1e-14);
        }
        // the embedded vector reconstructs (dx, dv) through v = v_dev + mean
        for i in 0..n {
            for c in 0..2 {
                let v = p[2 * n + 2 * i + c] + p[4 * n + c];
                assert!((v - dv[2 * i + c]).abs() < 1e-14);
            }
        }
    }

    /// Brute-force change of basis: solve `B C = F B` in the least-squares
    /// sense through the normal equations.
    fn restricted_by_solve(f: &DenseMatrix, n: usize) -> DenseMatrix {
        let basis = basis_b(n);
        let mut b = DenseMatrix::zeros(4 * n + 2, 4 * n);
        for (j, v) in basis.iter().enumerate() {
            b.set_col(j, v);
        }
        let fb = f.matmul(&b).unwrap();
        let bt = b.transpose();
        let mut lhs = bt.matmul(&b).unwrap();
        let mut rhs = bt.matmul(&fb).unwrap();
        let k = lhs.rows();
        // Gauss-Jordan with partial pivoting
        for c in 0..k {
            let p = (c..k).max_by(|&i, &j| lhs[(i, c)].abs().total_cmp(&lhs[(j, c)].abs())).unwrap();
            for j in 0..k {
                let t = lhs[(c, j)];
                lhs[(c, j)] = lhs[(p, j)];
                lhs[(p, j)] = t;
                let t = rhs[(c, j)];
                rhs[(c, j)] = rhs[(p, j)];
                rhs[(p, j)] = t;
            }
            let inv = 1.0 / lhs[(c, c)];
            for j in 0..k {
                lhs[(c, j)] *= inv;
                rhs[(c, j)] *= inv;
            }
            for i in 0..k {
                if i != c {
                    let fct = lhs[(i, c)];
                    for j in 0..k {
                        lhs[(i, j)] -= fct * lhs[(c, j)];
                        rhs[(i, j)] -= fct * rhs[(c, j)];
                    }
                }
            }
        }
        // invariance: F B must lie in span(B)
        let resid = b.matmul(&rhs).unwrap().sub(&fb);
        assert!(resid.max_abs() < 1e-10 * f.max_abs());
        rhs
    }

    #[test]
    fn fbb_matches_change_of_basis() {
        for seed in 0..3 {
            let (mem, params) = member(3, 20 + seed, 0.3 + seed as f64);
            let f = assemble_f(&mem, &params).unwrap();
            let fbb = assemble_fbb(&mem, &params).unwrap();
            let brute = restricted_by_solve(&f, 3);
            assert!(brute.sub(&fbb).max_abs() < 1e-10 * fbb.max_abs(), "{:?}\n{:?}", brute, fbb);
        }
    }

    #[test]
    fn fbb_block_structure() {
        let (mem, params) = member(5, 30, 0.7);
        let fbb = assemble_fbb(&mem, &params).unwrap();
        let k = fbb.rows() - 2;
        for i in 0..k {
            for c in 0..2 {
                assert_eq!(fbb[(i, k + c)], 0.0);
                assert_eq!(fbb[(k + c, i)], 0.0);
            }
        }
        assert_eq!(h_block(&fbb).rows(), 4 * 5 - 2);
        let z = kernel_vectors_z(&mem);
        assert!(fbb.mul_vec(&z[3]).iter().all(|v| v.abs() < 1e-15));
        assert!(norm2(&fbb.mul_vec(&z[0])) < 1e-12 * fbb.frobenius_norm());
        assert!(norm2(&fbb.mul_vec(&z[1])) < 1e-12 * fbb.frobenius_norm());
    }
}
