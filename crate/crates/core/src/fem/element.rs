//! Per-cell matrices evaluated with corner quadrature: every integral over a
//! cell is approximated by `Σ_c w(e, c) · integrand(v_c)`.

use nalgebra::{SMatrix, SVector};

use crate::error::{Error, Result};
use crate::math::{corner_offset, trilinear_weight_gradients, Mat3, Vec3};

pub type Mat24 = SMatrix<f64, 24, 24>;
pub type Vec24 = SVector<f64, 24>;

/// `g[q][i] = ∇N_i(v_q)` in world units. Entries lie in `{−1/h, 0, 1/h}`.
pub fn corner_gradients(h: f64) -> [[Vec3; 8]; 8] {
    let mut g = [[Vec3::zeros(); 8]; 8];
    for (q, gq) in g.iter_mut().enumerate() {
        let o = corner_offset(q);
        let xi = Vec3::new(o[0] as f64, o[1] as f64, o[2] as f64);
        let d = trilinear_weight_gradients(&xi);
        for i in 0..8 {
            gq[i] = d[i] / h;
        }
    }
    g
}

pub fn block(m: &Mat24, i: usize, j: usize) -> Mat3 {
    m.fixed_view::<3, 3>(3 * i, 3 * j).into_owned()
}

fn add_block(m: &mut Mat24, i: usize, j: usize, b: &Mat3) {
    let mut v = m.fixed_view_mut::<3, 3>(3 * i, 3 * j);
    v += b;
}

/// Unit-weight stiffness contributions of a single quadrature corner, split
/// into the `μ` and `λ` parts.
#[derive(Clone, Debug)]
pub struct ReferenceElement {
    pub h: f64,
    pub mu_parts: [Mat24; 8],
    pub lambda_parts: [Mat24; 8],
    pub gradients: [[Vec3; 8]; 8],
}

impl ReferenceElement {
    pub fn new(h: f64) -> Self {
        let gradients = corner_gradients(h);
        let mut mu_parts = [Mat24::zeros(); 8];
        let mut lambda_parts = [Mat24::zeros(); 8];
        for q in 0..8 {
            let d = &gradients[q];
            for i in 0..8 {
                for j in 0..8 {
                    let lam = d[i] * d[j].transpose();
                    let mu = d[j] * d[i].transpose() + Mat3::identity() * d[i].dot(&d[j]);
                    add_block(&mut lambda_parts[q], i, j, &lam);
                    add_block(&mut mu_parts[q], i, j, &mu);
                }
            }
        }
        Self { h, mu_parts, lambda_parts, gradients }
    }

    /// `(K_μ, K_λ)` for a cell with volume weights `w_v`; `K = μ K_μ + λ K_λ`.
    pub fn stiffness_parts(&self, w_v: &[f64; 8]) -> (Mat24, Mat24) {
        let mut km = Mat24::zeros();
        let mut kl = Mat24::zeros();
        for q in 0..8 {
            if w_v[q] != 0.0 {
                km += self.mu_parts[q] * w_v[q];
                kl += self.lambda_parts[q] * w_v[q];
            }
        }
        (km, kl)
    }
}

/// `K^e` for Lamé parameters `(μ, λ)` and volume weights `w_v`.
pub fn element_stiffness(mu: f64, lambda: f64, w_v: &[f64; 8], h: f64) -> Mat24 {
    let (km, kl) = ReferenceElement::new(h).stiffness_parts(w_v);
    km * mu + kl * lambda
}

/// Lumped `M^e`: block `(i, i)` is `m · w_v(e, i) · I₃`.
pub fn element_mass(m: f64, w_v: &[f64; 8]) -> Mat24 {
    let mut out = Mat24::zeros();
    for i in 0..8 {
        for a in 0..3 {
            out[(3 * i + a, 3 * i + a)] = m * w_v[i];
        }
    }
    out
}

/// Nitsche matrices of a Dirichlet cell. The boundary contribution to the
/// stiffness is `−(μ C_μ + λ C_λ) + η P`.
#[derive(Clone, Debug)]
pub struct NitscheParts {
    pub consistency_mu: Mat24,
    pub consistency_lambda: Mat24,
    pub penalty: Mat24,
}

impl NitscheParts {
    pub fn new(w_b: &[f64; 8], n: &Vec3, h: f64) -> Self {
        let g = corner_gradients(h);
        let mut cm = Mat24::zeros();
        let mut cl = Mat24::zeros();
        let mut p = Mat24::zeros();
        for i in 0..8 {
            if w_b[i] == 0.0 {
                continue;
            }
            for j in 0..8 {
                // traction σ(N_j e_b) n at v_i, as a matrix acting on u_j
                let d = g[i][j];
                let kd_mu = Mat3::identity() * d.dot(n) + d * n.transpose();
                let kd_lambda = n * d.transpose();
                let wm = kd_mu * w_b[i];
                let wl = kd_lambda * w_b[i];
                add_block(&mut cm, i, j, &wm);
                add_block(&mut cm, j, i, &wm.transpose());
                add_block(&mut cl, i, j, &wl);
                add_block(&mut cl, j, i, &wl.transpose());
            }
            add_block(&mut p, i, i, &(Mat3::identity() * w_b[i]));
        }
        Self { consistency_mu: cm, consistency_lambda: cl, penalty: p }
    }

    pub fn matrix(&self, mu: f64, lambda: f64, eta: f64) -> Mat24 {
        self.penalty * eta - self.consistency_mu * mu - self.consistency_lambda * lambda
    }
}

/// Matrix increment and right-hand side increment for prescribed boundary
/// displacement `u_d` (zero when `None`).
pub fn nitsche_dirichlet_terms(
    mu: f64,
    lambda: f64,
    w_b: &[f64; 8],
    n: &Vec3,
    eta: f64,
    h: f64,
    u_d: Option<&[Vec3; 8]>,
) -> Result<(Mat24, Vec24)> {
    if !(eta > 0.0) {
        return Err(Error::Config(format!("Nitsche penalty must be positive, got {eta}")));
    }
    let k = NitscheParts::new(w_b, n, h).matrix(mu, lambda, eta);
    let mut rhs = Vec24::zeros();
    if let Some(ud) = u_d {
        let flat = Vec24::from_iterator(ud.iter().flat_map(|v| [v[0], v[1], v[2]]));
        rhs = k * flat;
    }
    Ok((k, rhs))
}
