//! Broken polynomial spaces on a triangular mesh.
//!
//! The basis is modal and orthonormal on the reference triangle, so element
//! mass matrices are det(J)·I. Volume and face quadrature both use rules of
//! order 2ℓ+2; state-dependent coefficients make the integrands non-polynomial
//! and the extra two orders over-integrate the bilinear terms.

use std::sync::Arc;

use crate::basis::ReferenceBasis;
use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::quadrature::{interval_rule, QuadratureRule};
use crate::Point2;

/// Trace orientation of an element edge relative to the face's own
/// parametrization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeSide {
    /// Element traverses the face vertices in face order (the plus side).
    Forward = 0,
    /// Element traverses them in reverse (the minus side).
    Reversed = 1,
}

/// Semantic role of a coefficient vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldRole {
    HealthyProtein,
    MisfoldedProtein,
    ArterialPressure,
    CapillaryPressure,
    VenousPressure,
    Auxiliary,
}

/// Broken polynomial space of fixed degree ℓ ≥ 1 on every element.
#[derive(Debug)]
pub struct DgSpace {
    pub mesh: Arc<Mesh>,
    pub degree: usize,
    pub dofs_per_element: usize,
    basis: ReferenceBasis,
    pub volume_rule: QuadratureRule,
    /// 1D Gauss parameters/weights on [0, 1] for face integrals.
    pub face_points: Vec<f64>,
    pub face_weights: Vec<f64>,
    vol_values: Vec<f64>,
    vol_grads: Vec<Point2>,
    edge_values: [[Vec<f64>; 2]; 3],
    edge_grads: [[Vec<Point2>; 2]; 3],
    jac_inv_t: Vec<[[f64; 2]; 2]>,
    det_jac: Vec<f64>,
}

/// Builds the broken space of degree ℓ ≥ 1 over `mesh`.
pub fn build_space(mesh: Arc<Mesh>, degree: usize) -> Result<Arc<DgSpace>> {
    DgSpace::new(mesh, degree).map(Arc::new)
}

impl DgSpace {
    pub fn new(mesh: Arc<Mesh>, degree: usize) -> Result<DgSpace> {
        if degree == 0 {
            return Err(Error::invalid_argument(
                "polynomial degree must be at least 1",
            ));
        }
        let basis = ReferenceBasis::new(degree);
        let ndofs = basis.ndofs;
        let quad_order = 2 * degree + 2;
        let volume_rule = QuadratureRule::triangle(quad_order);
        let (face_points, face_weights) = interval_rule(quad_order);

        let nq = volume_rule.len();
        let mut vol_values = vec![0.0; nq * ndofs];
        let mut vol_grads = vec![[0.0; 2]; nq * ndofs];
        for (q, &p) in volume_rule.points.iter().enumerate() {
            basis.eval(p, &mut vol_values[q * ndofs..(q + 1) * ndofs]);
            basis.eval_grad(p, &mut vol_grads[q * ndofs..(q + 1) * ndofs]);
        }

        // Reference vertices; local edge e runs from vertex e to vertex e+1.
        let ref_verts: [Point2; 3] = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let nqf = face_points.len();
        let mut edge_values: [[Vec<f64>; 2]; 3] = Default::default();
        let mut edge_grads: [[Vec<Point2>; 2]; 3] = Default::default();
        for edge in 0..3 {
            let a = ref_verts[edge];
            let b = ref_verts[(edge + 1) % 3];
            for side in [EdgeSide::Forward, EdgeSide::Reversed] {
                let mut vals = vec![0.0; nqf * ndofs];
                let mut grads = vec![[0.0; 2]; nqf * ndofs];
                for (q, &t) in face_points.iter().enumerate() {
                    let s = match side {
                        EdgeSide::Forward => t,
                        EdgeSide::Reversed => 1.0 - t,
                    };
                    let p = [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])];
                    basis.eval(p, &mut vals[q * ndofs..(q + 1) * ndofs]);
                    basis.eval_grad(p, &mut grads[q * ndofs..(q + 1) * ndofs]);
                }
                edge_values[edge][side as usize] = vals;
                edge_grads[edge][side as usize] = grads;
            }
        }

        let mut jac_inv_t = Vec::with_capacity(mesh.num_elements());
        let mut det_jac = Vec::with_capacity(mesh.num_elements());
        for k in 0..mesh.num_elements() {
            let [v0, v1, v2] = mesh.element_vertices(k);
            let j = [
                [v1[0] - v0[0], v2[0] - v0[0]],
                [v1[1] - v0[1], v2[1] - v0[1]],
            ];
            let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
            // J⁻ᵀ maps reference gradients to physical ones.
            jac_inv_t.push([
                [j[1][1] / det, -j[1][0] / det],
                [-j[0][1] / det, j[0][0] / det],
            ]);
            det_jac.push(det);
        }

        Ok(DgSpace {
            mesh,
            degree,
            dofs_per_element: ndofs,
            basis,
            volume_rule,
            face_points,
            face_weights,
            vol_values,
            vol_grads,
            edge_values,
            edge_grads,
            jac_inv_t,
            det_jac,
        })
    }

    pub fn total_dofs(&self) -> usize {
        self.mesh.num_elements() * self.dofs_per_element
    }

    pub fn elem_dofs(&self, k: usize) -> std::ops::Range<usize> {
        k * self.dofs_per_element..(k + 1) * self.dofs_per_element
    }

    pub fn det_jac(&self, k: usize) -> f64 {
        self.det_jac[k]
    }

    pub fn jac_inv_t(&self, k: usize) -> [[f64; 2]; 2] {
        self.jac_inv_t[k]
    }

    /// Physical coordinates of a reference point inside element `k`.
    pub fn map_to_physical(&self, k: usize, p: Point2) -> Point2 {
        let [v0, v1, v2] = self.mesh.element_vertices(k);
        [
            v0[0] + p[0] * (v1[0] - v0[0]) + p[1] * (v2[0] - v0[0]),
            v0[1] + p[0] * (v1[1] - v0[1]) + p[1] * (v2[1] - v0[1]),
        ]
    }

    /// Reference coordinates of a physical point assumed to lie in element `k`.
    pub fn map_to_reference(&self, k: usize, x: Point2) -> Point2 {
        let [v0, v1, v2] = self.mesh.element_vertices(k);
        let j = [
            [v1[0] - v0[0], v2[0] - v0[0]],
            [v1[1] - v0[1], v2[1] - v0[1]],
        ];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        let d = [x[0] - v0[0], x[1] - v0[1]];
        [
            (j[1][1] * d[0] - j[0][1] * d[1]) / det,
            (-j[1][0] * d[0] + j[0][0] * d[1]) / det,
        ]
    }

    /// Basis values at the volume quadrature points: slice of length
    /// `dofs_per_element` for point `q`.
    pub(crate) fn vol_basis(&self, q: usize) -> &[f64] {
        let n = self.dofs_per_element;
        &self.vol_values[q * n..(q + 1) * n]
    }

    pub(crate) fn vol_ref_grads(&self, q: usize) -> &[Point2] {
        let n = self.dofs_per_element;
        &self.vol_grads[q * n..(q + 1) * n]
    }

    pub(crate) fn edge_basis(&self, edge: usize, side: EdgeSide, q: usize) -> &[f64] {
        let n = self.dofs_per_element;
        &self.edge_values[edge][side as usize][q * n..(q + 1) * n]
    }

    pub(crate) fn edge_ref_grads(&self, edge: usize, side: EdgeSide, q: usize) -> &[Point2] {
        let n = self.dofs_per_element;
        &self.edge_grads[edge][side as usize][q * n..(q + 1) * n]
    }

    /// Basis value table at arbitrary reference points (used to evaluate
    /// fields of one space at the quadrature points of another).
    pub fn basis_table_at(&self, ref_points: &[Point2]) -> Vec<f64> {
        let n = self.dofs_per_element;
        let mut table = vec![0.0; ref_points.len() * n];
        for (q, &p) in ref_points.iter().enumerate() {
            self.basis.eval(p, &mut table[q * n..(q + 1) * n]);
        }
        table
    }

    /// Elementwise L² projection of a pointwise function.
    pub fn l2_project(
        self: &Arc<Self>,
        role: FieldRole,
        f: impl Fn(Point2) -> f64,
    ) -> FieldVector {
        let n = self.dofs_per_element;
        let mut coeffs = vec![0.0; self.total_dofs()];
        for k in 0..self.mesh.num_elements() {
            let block = &mut coeffs[k * n..(k + 1) * n];
            for (q, (&p, &w)) in self
                .volume_rule
                .points
                .iter()
                .zip(&self.volume_rule.weights)
                .enumerate()
            {
                let x = self.map_to_physical(k, p);
                let fv = f(x);
                let basis = self.vol_basis(q);
                for i in 0..n {
                    // Orthonormal reference basis: mass block is det(J)·I and
                    // the det(J) factors cancel.
                    block[i] += w * fv * basis[i];
                }
            }
        }
        FieldVector {
            space: Arc::clone(self),
            coeffs,
            role,
        }
    }
}

/// Coefficient vector over a [`DgSpace`].
#[derive(Debug, Clone)]
pub struct FieldVector {
    pub space: Arc<DgSpace>,
    pub coeffs: Vec<f64>,
    pub role: FieldRole,
}

impl FieldVector {
    pub fn zeros(space: Arc<DgSpace>, role: FieldRole) -> FieldVector {
        let n = space.total_dofs();
        FieldVector {
            space,
            coeffs: vec![0.0; n],
            role,
        }
    }

    pub fn from_coeffs(space: Arc<DgSpace>, role: FieldRole, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != space.total_dofs() {
            return Err(Error::invalid_argument(format!(
                "coefficient vector length {} does not match space dimension {}",
                coeffs.len(),
                space.total_dofs()
            )));
        }
        Ok(FieldVector {
            space,
            coeffs,
            role,
        })
    }

    /// Constant field with the given value.
    pub fn constant(space: Arc<DgSpace>, role: FieldRole, value: f64) -> FieldVector {
        space.l2_project(role, |_| value)
    }

    /// Values and physical gradients at the volume quadrature points of
    /// element `k`.
    pub fn eval_at_quadrature(&self, k: usize) -> (Vec<f64>, Vec<Point2>) {
        let s = &self.space;
        let n = s.dofs_per_element;
        let nq = s.volume_rule.len();
        let block = &self.coeffs[k * n..(k + 1) * n];
        let jit = s.jac_inv_t(k);
        let mut values = vec![0.0; nq];
        let mut grads = vec![[0.0; 2]; nq];
        for q in 0..nq {
            let basis = s.vol_basis(q);
            let rgrads = s.vol_ref_grads(q);
            let mut v = 0.0;
            let mut g = [0.0; 2];
            for i in 0..n {
                v += block[i] * basis[i];
                g[0] += block[i] * rgrads[i][0];
                g[1] += block[i] * rgrads[i][1];
            }
            values[q] = v;
            grads[q] = [
                jit[0][0] * g[0] + jit[0][1] * g[1],
                jit[1][0] * g[0] + jit[1][1] * g[1],
            ];
        }
        (values, grads)
    }

    /// Values at the volume quadrature points only, written into `out`.
    pub fn values_at_quadrature(&self, k: usize, out: &mut [f64]) {
        let s = &self.space;
        let n = s.dofs_per_element;
        let block = &self.coeffs[k * n..(k + 1) * n];
        for (q, slot) in out.iter_mut().enumerate() {
            let basis = s.vol_basis(q);
            *slot = block.iter().zip(basis).map(|(c, b)| c * b).sum();
        }
    }

    /// Trace values at the face quadrature points of a local edge.
    pub fn values_on_edge(&self, k: usize, edge: usize, side: EdgeSide, out: &mut [f64]) {
        let s = &self.space;
        let n = s.dofs_per_element;
        let block = &self.coeffs[k * n..(k + 1) * n];
        for (q, slot) in out.iter_mut().enumerate() {
            let basis = s.edge_basis(edge, side, q);
            *slot = block.iter().zip(basis).map(|(c, b)| c * b).sum();
        }
    }

    /// Field value at an arbitrary physical point inside element `k`.
    pub fn eval_at(&self, k: usize, x: Point2) -> f64 {
        let s = &self.space;
        let n = s.dofs_per_element;
        let p = s.map_to_reference(k, x);
        let mut basis = vec![0.0; n];
        s.basis.eval(p, &mut basis);
        self.coeffs[k * n..(k + 1) * n]
            .iter()
            .zip(&basis)
            .map(|(c, b)| c * b)
            .sum()
    }

    /// ∫_Ω field dx.
    pub fn integral(&self) -> f64 {
        let s = &self.space;
        let nq = s.volume_rule.len();
        let mut vals = vec![0.0; nq];
        let mut total = 0.0;
        for k in 0..s.mesh.num_elements() {
            self.values_at_quadrature(k, &mut vals);
            let det = s.det_jac(k);
            total += det
                * vals
                    .iter()
                    .zip(&s.volume_rule.weights)
                    .map(|(v, w)| v * w)
                    .sum::<f64>();
        }
        total
    }

    /// Maximum over all volume quadrature points.
    pub fn max_at_quadrature(&self) -> f64 {
        self.fold_quadrature(f64::NEG_INFINITY, f64::max)
    }

    /// Minimum over all volume quadrature points.
    pub fn min_at_quadrature(&self) -> f64 {
        self.fold_quadrature(f64::INFINITY, f64::min)
    }

    fn fold_quadrature(&self, init: f64, f: impl Fn(f64, f64) -> f64) -> f64 {
        let s = &self.space;
        let nq = s.volume_rule.len();
        let mut vals = vec![0.0; nq];
        let mut acc = init;
        for k in 0..s.mesh.num_elements() {
            self.values_at_quadrature(k, &mut vals);
            for &v in &vals {
                acc = f(acc, v);
            }
        }
        acc
    }

    /// Elementwise mean values (cell data for visualization).
    pub fn elementwise_means(&self) -> Vec<f64> {
        let s = &self.space;
        let nq = s.volume_rule.len();
        let mut vals = vec![0.0; nq];
        let mut means = Vec::with_capacity(s.mesh.num_elements());
        for k in 0..s.mesh.num_elements() {
            self.values_at_quadrature(k, &mut vals);
            // Weights sum to 1/2 on the reference triangle.
            let mean: f64 = 2.0
                * vals
                    .iter()
                    .zip(&s.volume_rule.weights)
                    .map(|(v, w)| v * w)
                    .sum::<f64>();
            means.push(mean);
        }
        means
    }

    /// Values at the three element corners (point data for visualization).
    pub fn corner_values(&self, k: usize) -> [f64; 3] {
        let s = &self.space;
        let n = s.dofs_per_element;
        let block = &self.coeffs[k * n..(k + 1) * n];
        let mut out = [0.0; 3];
        let mut basis = vec![0.0; n];
        for (c, corner) in [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]].into_iter().enumerate() {
            s.basis.eval(corner, &mut basis);
            out[c] = block.iter().zip(&basis).map(|(a, b)| a * b).sum();
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_finite())
    }
}
