use super::corotation::{compute_corotation, ElementRotation};
use super::element::{block, Mat24, NitscheParts, ReferenceElement, Vec24};
use super::sparse::BlockedSparseMatrix;
use crate::error::{Error, Result};
use crate::grid::SimulationGrid;
use crate::math::{corner_offset, Mat3, Vec3};

/// Precomputed per-cell data for repeated global assembly.
#[derive(Clone, Debug)]
pub struct Assembler {
    h: f64,
    num_dofs: usize,
    cell_dofs: Vec<[usize; 8]>,
    stiffness_mu: Vec<Mat24>,
    stiffness_lambda: Vec<Mat24>,
    nitsche: Vec<(usize, NitscheParts)>,
    pattern: BlockedSparseMatrix,
    slots: Vec<[usize; 64]>,
    nodal_volumes: Vec<f64>,
    /// Corner rest offsets relative to the cell origin.
    local_rest: [Vec3; 8],
}

impl Assembler {
    pub fn new(grid: &SimulationGrid) -> Self {
        let h = grid.spacing();
        let reference = ReferenceElement::new(h);
        let n = grid.num_dofs();
        let cell_dofs: Vec<[usize; 8]> = (0..grid.num_cells()).map(|e| *grid.cell_dofs(e)).collect();
        let entries = cell_dofs.iter().flat_map(|d| (0..64).map(move |k| (d[k / 8], d[k % 8])));
        let pattern = BlockedSparseMatrix::with_pattern(n, entries.collect::<Vec<_>>());
        let slots = cell_dofs
            .iter()
            .map(|d| std::array::from_fn(|k| pattern.position(d[k / 8], d[k % 8]).expect("pattern covers cell")))
            .collect();
        let (stiffness_mu, stiffness_lambda) =
            (0..grid.num_cells()).map(|e| reference.stiffness_parts(grid.volume_weights(e))).unzip();
        let nitsche = grid
            .dirichlet_cells()
            .map(|s| (s.cell, NitscheParts::new(&s.quadrature.weights, &s.quadrature.normal, h)))
            .collect();
        let local_rest = std::array::from_fn(|c| {
            let o = corner_offset(c);
            Vec3::new(o[0] as f64, o[1] as f64, o[2] as f64) * h
        });
        Self {
            h,
            num_dofs: n,
            cell_dofs,
            stiffness_mu,
            stiffness_lambda,
            nitsche,
            pattern,
            slots,
            nodal_volumes: grid.nodal_volumes(),
            local_rest,
        }
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn num_dofs(&self) -> usize {
        self.num_dofs
    }

    pub fn num_cells(&self) -> usize {
        self.cell_dofs.len()
    }

    pub fn cell_dofs(&self, e: usize) -> &[usize; 8] {
        &self.cell_dofs[e]
    }

    pub fn stiffness_parts(&self, e: usize) -> (&Mat24, &Mat24) {
        (&self.stiffness_mu[e], &self.stiffness_lambda[e])
    }

    pub fn nitsche_parts(&self) -> &[(usize, NitscheParts)] {
        &self.nitsche
    }

    pub fn nodal_volumes(&self) -> &[f64] {
        &self.nodal_volumes
    }

    pub fn local_rest(&self) -> &[Vec3; 8] {
        &self.local_rest
    }

    pub fn element_stiffness(&self, e: usize, mu: f64, lambda: f64) -> Mat24 {
        self.stiffness_mu[e] * mu + self.stiffness_lambda[e] * lambda
    }

    pub fn gather(&self, e: usize, u: &[Vec3]) -> [Vec3; 8] {
        self.cell_dofs[e].map(|d| u[d])
    }

    /// Per-cell rotations for displacement `u`.
    pub fn rotations(&self, u: &[Vec3], previous: Option<&[ElementRotation]>) -> Vec<ElementRotation> {
        (0..self.num_cells())
            .map(|e| {
                let fallback = previous.map(|p| p[e].r).unwrap_or_else(Mat3::identity);
                compute_corotation(&self.gather(e, u), self.h, &fallback)
            })
            .collect()
    }

    /// Global stiffness `Σ_e T K^e Tᵀ` plus the Nitsche boundary terms.
    pub fn stiffness(&self, mu: f64, lambda: f64, eta: f64, rotations: Option<&[Mat3]>) -> BlockedSparseMatrix {
        let mut k = self.pattern.zeros_like();
        for e in 0..self.num_cells() {
            let ke = self.element_stiffness(e, mu, lambda);
            let r = rotations.map(|r| r[e]);
            for (idx, &slot) in self.slots[e].iter().enumerate() {
                let b = block(&ke, idx / 8, idx % 8);
                *k.block_at_mut(slot) += match r {
                    Some(r) => r * b * r.transpose(),
                    None => b,
                };
            }
        }
        for (e, parts) in &self.nitsche {
            let ne = parts.matrix(mu, lambda, eta);
            for (idx, &slot) in self.slots[*e].iter().enumerate() {
                *k.block_at_mut(slot) += block(&ne, idx / 8, idx % 8);
            }
        }
        k
    }

    /// Corotational offset `g_r = Σ_e R K^e (Rᵀx′ − x′)`; the elastic force is `−K_r u − g_r`.
    pub fn rotation_offset(&self, mu: f64, lambda: f64, rotations: &[Mat3]) -> Vec<Vec3> {
        let mut g = vec![Vec3::zeros(); self.num_dofs];
        for e in 0..self.num_cells() {
            let r = rotations[e];
            let y = Vec24::from_iterator(self.local_rest.iter().flat_map(|x| {
                let d = r.transpose() * x - x;
                [d[0], d[1], d[2]]
            }));
            let z = self.element_stiffness(e, mu, lambda) * y;
            for (c, &d) in self.cell_dofs[e].iter().enumerate() {
                g[d] += r * Vec3::new(z[3 * c], z[3 * c + 1], z[3 * c + 2]);
            }
        }
        g
    }

    /// Lumped mass per DOF, `m Σ_e w_v(e, i)`.
    pub fn mass_diagonal(&self, m: f64) -> Vec<f64> {
        self.nodal_volumes.iter().map(|w| m * w).collect()
    }

    pub fn mass_matrix(&self, m: f64) -> BlockedSparseMatrix {
        let diag: Vec<Mat3> = self.mass_diagonal(m).iter().map(|&v| Mat3::identity() * v).collect();
        BlockedSparseMatrix::diagonal(&diag)
    }

    /// Body force `m g Σ_e w_v(e, i)` per DOF.
    pub fn gravity_force(&self, m: f64, g: &Vec3) -> Vec<Vec3> {
        self.nodal_volumes.iter().map(|w| g * (m * w)).collect()
    }
}

/// Stiffness and force for one step: gravity minus the corotational offset.
/// `u_prev` supplies the rotations when `corotation` is set.
pub fn assemble_global(
    assembler: &Assembler,
    mu: f64,
    lambda: f64,
    eta: f64,
    mass_density: f64,
    gravity: &Vec3,
    u_prev: &[Vec3],
    corotation: bool,
) -> Result<(BlockedSparseMatrix, Vec<Vec3>)> {
    if u_prev.len() != assembler.num_dofs() {
        return Err(Error::Dimension { expected: assembler.num_dofs(), got: u_prev.len() });
    }
    let mut f = assembler.gravity_force(mass_density, gravity);
    if !corotation {
        return Ok((assembler.stiffness(mu, lambda, eta, None), f));
    }
    let rot: Vec<Mat3> = assembler.rotations(u_prev, None).iter().map(|r| r.r).collect();
    let k = assembler.stiffness(mu, lambda, eta, Some(&rot));
    for (fi, gi) in f.iter_mut().zip(assembler.rotation_offset(mu, lambda, &rot)) {
        *fi -= gi;
    }
    Ok((k, f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::element::element_stiffness;
    use crate::grid::{DirichletRegion, Shape, SignedDistanceGrid};
    use nalgebra::{DVector, Rotation3, Unit};

    fn single_cell() -> SimulationGrid {
        let sdf = SignedDistanceGrid::from_fn([2, 2, 2], 1.0, Vec3::zeros(), |_| -1.0).unwrap();
        SimulationGrid::new(sdf, &DirichletRegion::None).unwrap()
    }

    fn bar(dirichlet: bool) -> SimulationGrid {
        let shape = Shape::Bar { start: [0.0; 3], length: 6.0, half_width: 1.3, half_height: 1.3 };
        let sdf = SignedDistanceGrid::from_shape(&shape, 1.0, 1).unwrap();
        let region = if dirichlet {
            DirichletRegion::HalfSpace { point: [0.6, 0.0, 0.0], normal: [1.0, 0.0, 0.0] }
        } else {
            DirichletRegion::None
        };
        SimulationGrid::new(sdf, &region).unwrap()
    }

    #[test]
    fn single_cell_equals_element_matrix() {
        let a = Assembler::new(&single_cell());
        let k = a.stiffness(1.3, 0.4, 1e8, None).to_dense();
        let ke = element_stiffness(1.3, 0.4, &[0.125; 8], 1.0);
        for r in 0..24 {
            for c in 0..24 {
                assert_eq!(k[(r, c)], ke[(r, c)]);
            }
        }
    }

    #[test]
    fn global_matrix_symmetric_and_deterministic() {
        let grid = bar(true);
        let a = Assembler::new(&grid);
        let mut u = vec![Vec3::zeros(); grid.num_dofs()];
        for (i, x) in grid.rest_positions().iter().enumerate() {
            u[i] = Vec3::new(0.1 * x[1].sin(), 0.05 * x[0], -0.2 * (0.3 * x[0]).cos()) + Vec3::repeat(i as f64 * 1e-3);
        }
        let (k1, f1) = assemble_global(&a, 100.0, 50.0, 1e8, 1.0, &Vec3::new(0.0, 0.0, -9.0), &u, true).unwrap();
        let (k2, f2) = assemble_global(&a, 100.0, 50.0, 1e8, 1.0, &Vec3::new(0.0, 0.0, -9.0), &u, true).unwrap();
        assert_eq!(k1, k2);
        assert_eq!(f1, f2);
        assert!(k1.asymmetry() <= 1e-9 * k1.inf_norm());
    }

    #[test]
    fn linear_stiffness_independent_of_state() {
        let grid = bar(false);
        let a = Assembler::new(&grid);
        let zero = vec![Vec3::zeros(); grid.num_dofs()];
        let other = vec![Vec3::new(0.3, -0.1, 0.2); grid.num_dofs()];
        let g = Vec3::zeros();
        let (k0, _) = assemble_global(&a, 10.0, 5.0, 1e8, 1.0, &g, &zero, false).unwrap();
        let (k1, _) = assemble_global(&a, 10.0, 5.0, 1e8, 1.0, &g, &other, false).unwrap();
        assert_eq!(k0, k1);
        assert!(assemble_global(&a, 10.0, 5.0, 1e8, 1.0, &g, &zero[1..], false).is_err());
    }

    #[test]
    fn gravity_sums_to_volume() {
        let grid = bar(false);
        let a = Assembler::new(&grid);
        let f = a.gravity_force(1.0, &Vec3::new(0.0, 0.0, -1.0));
        let total: f64 = f.iter().map(|v| v[2]).sum();
        assert!((total + grid.volume()).abs() < 1e-10 * grid.volume());
    }

    #[test]
    fn rigid_rotation_produces_no_force() {
        let grid = bar(false);
        let a = Assembler::new(&grid);
        let q = Rotation3::from_axis_angle(&Unit::new_normalize(Vec3::new(0.2, 1.0, 0.4)), 0.8).into_inner();
        let u: Vec<Vec3> = grid.rest_positions().iter().map(|x| (q - Mat3::identity()) * x).collect();
        let (k, f) = assemble_global(&a, 100.0, 80.0, 1e8, 1.0, &Vec3::zeros(), &u, true).unwrap();
        let ku = k.mul_vec(&u);
        let scale = k.inf_norm() * 10.0;
        for (a, b) in ku.iter().zip(&f) {
            // elastic force −K_r u − g_r vanishes for a rigid motion
            assert!((a - b).norm() < 1e-9 * scale);
        }
    }

    #[test]
    fn nitsche_pins_the_fixed_end() {
        let grid = bar(true);
        let a = Assembler::new(&grid);
        let k = a.stiffness(500.0, 300.0, 1e8, None);
        let f = a.gravity_force(1.0, &Vec3::new(0.0, 0.0, -10.0));
        let dense = k.to_dense();
        let rhs = DVector::from_iterator(k.dim(), f.iter().flat_map(|v| [v[0], v[1], v[2]]));
        let u = dense.clone().cholesky().expect("SPD").solve(&rhs);
        let umax = u.amax();
        assert!(umax > 1e-3);
        for s in grid.dirichlet_cells() {
            let corners = grid.cell_dofs(s.cell);
            let w = crate::math::trilinear_weights(&s.quadrature.centroid);
            let mut us = Vec3::zeros();
            for c in 0..8 {
                let d = corners[c];
                us += Vec3::new(u[3 * d], u[3 * d + 1], u[3 * d + 2]) * w[c];
            }
            assert!(us.norm() < 1e-4 * umax, "{} vs {umax}", us.norm());
        }
    }
}
