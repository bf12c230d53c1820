use super::solver::{solve_linear_from, SolveStats, SolverOptions};
use crate::error::{Error, Result};
use crate::fem::BlockedSparseMatrix;
use crate::math::Vec3;

/// Displacements and velocities at step `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct SimState {
    pub u: Vec<Vec3>,
    pub v: Vec<Vec3>,
    pub t: usize,
}

impl SimState {
    pub fn zeros(n: usize) -> Self {
        Self { u: vec![Vec3::zeros(); n], v: vec![Vec3::zeros(); n], t: 0 }
    }
}

/// `D = α₁ M + α₂ K` on the union pattern.
pub fn rayleigh_damping(
    m: &BlockedSparseMatrix,
    k: &BlockedSparseMatrix,
    alpha1: f64,
    alpha2: f64,
) -> Result<BlockedSparseMatrix> {
    if alpha1 < 0.0 || alpha2 < 0.0 {
        return Err(Error::Config(format!("Rayleigh coefficients must be non-negative, got ({alpha1}, {alpha2})")));
    }
    BlockedSparseMatrix::linear_combination(alpha1, m, alpha2, k)
}

pub fn validate_theta(theta: f64) -> Result<()> {
    if !(0.5..1.0).contains(&theta) {
        return Err(Error::Config(format!("Newmark θ must lie in [0.5, 1), got {theta}")));
    }
    Ok(())
}

/// Left-hand matrix `M/(θΔt) + D + θΔt K`.
pub fn newmark_matrix(
    m: &BlockedSparseMatrix,
    d: &BlockedSparseMatrix,
    k: &BlockedSparseMatrix,
    theta: f64,
    dt: f64,
) -> Result<BlockedSparseMatrix> {
    let mut a = BlockedSparseMatrix::linear_combination(1.0, d, theta * dt, k)?;
    a.add_scaled(1.0 / (theta * dt), m)?;
    Ok(a)
}

/// Right-hand side `(M/(θΔt) + D − (1−θ)Δt K) u + M v / θ + Δt f`.
pub fn newmark_rhs(
    m: &BlockedSparseMatrix,
    d: &BlockedSparseMatrix,
    k: &BlockedSparseMatrix,
    state: &SimState,
    f: &[Vec3],
    theta: f64,
    dt: f64,
) -> Vec<Vec3> {
    let mu = m.mul_vec(&state.u);
    let du = d.mul_vec(&state.u);
    let ku = k.mul_vec(&state.u);
    let mv = m.mul_vec(&state.v);
    (0..state.u.len())
        .map(|i| mu[i] / (theta * dt) + du[i] - ku[i] * ((1.0 - theta) * dt) + mv[i] / theta + f[i] * dt)
        .collect()
}

/// `u̇ᵗ = (uᵗ − uᵗ⁻¹)/(θΔt) − (1−θ)/θ · u̇ᵗ⁻¹`.
pub fn newmark_velocity(u_new: &[Vec3], prev: &SimState, theta: f64, dt: f64) -> Vec<Vec3> {
    u_new
        .iter()
        .zip(&prev.u)
        .zip(&prev.v)
        .map(|((un, uo), vo)| (un - uo) / (theta * dt) - vo * ((1.0 - theta) / theta))
        .collect()
}

/// One implicit step with time-split force `f = θ f_cur + (1−θ) f_prev`.
#[allow(clippy::too_many_arguments)]
pub fn newmark_step(
    state: &SimState,
    m: &BlockedSparseMatrix,
    d: &BlockedSparseMatrix,
    k: &BlockedSparseMatrix,
    f_prev: &[Vec3],
    f_cur: &[Vec3],
    theta: f64,
    dt: f64,
    solver: &SolverOptions,
) -> Result<(SimState, SolveStats)> {
    validate_theta(theta)?;
    if !(dt > 0.0) {
        return Err(Error::Config(format!("time step must be positive, got {dt}")));
    }
    let n = state.u.len();
    for len in [state.v.len(), f_prev.len(), f_cur.len(), m.block_dim(), k.block_dim(), d.block_dim()] {
        if len != n {
            return Err(Error::Dimension { expected: n, got: len });
        }
    }
    let f: Vec<Vec3> = f_prev.iter().zip(f_cur).map(|(a, b)| b * theta + a * (1.0 - theta)).collect();
    let a = newmark_matrix(m, d, k, theta, dt)?;
    let rhs = newmark_rhs(m, d, k, state, &f, theta, dt);
    let (u, stats) = solve_linear_from(&a, &rhs, Some(&state.u), solver.tolerance, solver.max_iter_factor * 3 * n)?;
    let v = newmark_velocity(&u, state, theta, dt);
    Ok((SimState { u, v, t: state.t + 1 }, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Mat3;

    fn scalar(x: f64, n: usize) -> BlockedSparseMatrix {
        BlockedSparseMatrix::diagonal(&vec![Mat3::identity() * x; n])
    }

    fn opts() -> SolverOptions {
        SolverOptions { tolerance: 1e-14, max_iter_factor: 10 }
    }

    #[test]
    fn equilibrium_stays_at_rest() {
        let z = vec![Vec3::zeros(); 2];
        let (s, _) = newmark_step(&SimState::zeros(2), &scalar(1.0, 2), &scalar(0.1, 2), &scalar(5.0, 2), &z, &z, 0.6, 0.01, &opts()).unwrap();
        assert!(s.u.iter().chain(&s.v).all(|v| *v == Vec3::zeros()));
        assert_eq!(s.t, 1);
    }

    #[test]
    fn free_fall_is_ballistic() {
        let m = 2.0;
        let f = vec![Vec3::new(0.0, 0.0, -3.0)];
        let mut s = SimState::zeros(1);
        let dt = 0.05;
        for step in 1..=20 {
            let (n, _) = newmark_step(&s, &scalar(m, 1), &scalar(0.0, 1), &scalar(0.0, 1), &f, &f, 0.6, dt, &opts()).unwrap();
            assert!((n.v[0][2] - s.v[0][2] - (-3.0 / m) * dt).abs() < 1e-10);
            let t = step as f64 * dt;
            assert!((n.v[0][2] + 1.5 * t).abs() < 1e-10);
            s = n;
        }
    }

    // θ-method written directly in (u, v) form:
    // m (v' − v)/Δt = θ F(u', v') + (1−θ) F(u, v),  (u' − u)/Δt = θ v' + (1−θ) v,  F = f − c v − k u.
    fn reference(m: f64, c: f64, k: f64, f: f64, theta: f64, dt: f64, u: f64, v: f64) -> (f64, f64) {
        // eliminate v' = (u' − u)/(θΔt) − (1−θ)/θ v and solve the linear equation for u'
        let a = 1.0 / (theta * dt);
        let b = -(u * a) - (1.0 - theta) / theta * v;
        // m (a u' + b − v)/Δt + θ(c (a u' + b) + k u') = f − (1−θ)(c v + k u)
        let lhs = m * a / dt + theta * (c * a + k);
        let rhs = f - (1.0 - theta) * (c * v + k * u) - m * (b - v) / dt - theta * c * b;
        let un = rhs / lhs;
        (un, a * un + b)
    }

    #[test]
    fn oscillator_matches_scalar_recurrence() {
        let (m, k, a1, a2, theta, dt) = (1.5, 40.0, 0.3, 0.01, 0.6, 0.02);
        let c = a1 * m + a2 * k;
        let mm = scalar(m, 1);
        let kk = scalar(k, 1);
        let dd = rayleigh_damping(&mm, &kk, a1, a2).unwrap();
        let mut s = SimState { u: vec![Vec3::new(1.0, -0.5, 0.25)], v: vec![Vec3::new(0.0, 2.0, 0.0)], t: 0 };
        let mut r: Vec<(f64, f64)> = (0..3).map(|i| (s.u[0][i], s.v[0][i])).collect();
        let f = vec![Vec3::new(0.5, 0.0, -1.0)];
        for _ in 0..100 {
            s = newmark_step(&s, &mm, &dd, &kk, &f, &f, theta, dt, &opts()).unwrap().0;
            for (i, ri) in r.iter_mut().enumerate() {
                *ri = reference(m, c, k, f[0][i], theta, dt, ri.0, ri.1);
                assert!((s.u[0][i] - ri.0).abs() < 1e-12 * (1.0 + ri.0.abs()));
                assert!((s.v[0][i] - ri.1).abs() < 1e-10 * (1.0 + ri.1.abs()));
            }
        }
    }

    #[test]
    fn energy_non_increasing_without_damping() {
        let (m, k) = (1.0, 100.0);
        let mm = scalar(m, 1);
        let kk = scalar(k, 1);
        let dd = scalar(0.0, 1);
        let z = vec![Vec3::zeros()];
        let mut s = SimState { u: vec![Vec3::new(1.0, 0.0, 0.0)], v: vec![Vec3::zeros()], t: 0 };
        let energy = |s: &SimState| 0.5 * m * s.v[0].norm_squared() + 0.5 * k * s.u[0].norm_squared();
        let mut e = energy(&s);
        for _ in 0..200 {
            s = newmark_step(&s, &mm, &dd, &kk, &z, &z, 0.6, 0.01, &opts()).unwrap().0;
            let en = energy(&s);
            assert!(en <= e * (1.0 + 1e-12));
            e = en;
        }
    }

    #[test]
    fn rayleigh_examples() {
        let m = scalar(2.0, 2);
        let mut k = BlockedSparseMatrix::with_pattern(2, [(0, 0), (0, 1), (1, 0), (1, 1)]);
        k.add_block(0, 1, &Mat3::from_element(0.5));
        k.add_block(1, 0, &Mat3::from_element(0.5));
        k.add_block(0, 0, &(Mat3::identity() * 3.0));
        let d = rayleigh_damping(&m, &k, 0.0, 0.0).unwrap();
        assert_eq!(d.max_abs(), 0.0);
        let d = rayleigh_damping(&m, &k, 0.7, 0.0).unwrap();
        assert_eq!(d.block(0, 1).map(|b| b.abs().max()).unwrap_or(0.0), 0.0);
        let d = rayleigh_damping(&m, &k, 0.7, 0.2).unwrap();
        let dense = m.to_dense() * 0.7 + k.to_dense() * 0.2;
        assert!((d.to_dense() - dense).abs().max() < 1e-15);
        assert!(rayleigh_damping(&m, &k, -1.0, 0.0).is_err());
    }

    #[test]
    fn theta_range_enforced() {
        assert!(validate_theta(0.4).is_err());
        assert!(validate_theta(1.0).is_err());
        assert!(validate_theta(0.5).is_ok());
    }
}
