//! Assembly of SIPG diffusion operators, weighted mass matrices and load
//! vectors.
//!
//! The face penalty is η = C_η · ℓ² · κ_F / h_F, where κ_F is the
//! normal-direction component of the coefficient tensor averaged over the
//! face (both sides on interior faces) and h_F the smaller diameter of the
//! adjacent elements. Nonhomogeneous Dirichlet data enters through a lift
//! vector on the right-hand side; boundary faces without Dirichlet data
//! contribute nothing, which realizes zero-flux conditions.

use crate::error::{Error, Result};
use crate::mesh::BoundaryTag;
use crate::space::{DgSpace, EdgeSide, FieldVector};
use crate::sparse::{CsrPattern, SparseMatrix};
use crate::Point2;

/// Symmetric 2×2 tensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymTensor2 {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl SymTensor2 {
    pub fn isotropic(c: f64) -> SymTensor2 {
        SymTensor2 {
            xx: c,
            xy: 0.0,
            yy: c,
        }
    }

    pub fn mul_vec(&self, v: Point2) -> Point2 {
        [
            self.xx * v[0] + self.xy * v[1],
            self.xy * v[0] + self.yy * v[1],
        ]
    }

    /// nᵀ T n for a unit vector n.
    pub fn normal_component(&self, n: Point2) -> f64 {
        let tn = self.mul_vec(n);
        n[0] * tn[0] + n[1] * tn[1]
    }

    pub fn eigenvalues(&self) -> (f64, f64) {
        let mean = 0.5 * (self.xx + self.yy);
        let det = self.xx * self.yy - self.xy * self.xy;
        let disc = (mean * mean - det).max(0.0).sqrt();
        (mean - disc, mean + disc)
    }

    pub fn is_spsd(&self, tol: f64) -> bool {
        let (lo, _) = self.eigenvalues();
        lo >= -tol
    }
}

/// Values of a coefficient at the volume quadrature points of every element,
/// laid out as `values[k * nq + q]`.
#[derive(Debug, Clone)]
pub struct QuadratureValues {
    pub nq: usize,
    pub values: Vec<f64>,
}

impl QuadratureValues {
    pub fn zeros(n_elements: usize, nq: usize) -> QuadratureValues {
        QuadratureValues {
            nq,
            values: vec![0.0; n_elements * nq],
        }
    }

    pub fn elem(&self, k: usize) -> &[f64] {
        &self.values[k * self.nq..(k + 1) * self.nq]
    }

    pub fn elem_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.values[k * self.nq..(k + 1) * self.nq]
    }
}

/// Scalar coefficient for weighted mass matrices and load vectors: constant,
/// analytic in position, dependent on one or two state fields, or a
/// precomputed per-quadrature-point table.
pub enum ScalarCoefficient<'a> {
    Constant(f64),
    Analytic(&'a (dyn Fn(Point2) -> f64 + Sync)),
    State {
        field: &'a FieldVector,
        map: &'a (dyn Fn(f64, Point2) -> f64 + Sync),
    },
    TwoState {
        fields: [&'a FieldVector; 2],
        map: &'a (dyn Fn(f64, f64, Point2) -> f64 + Sync),
    },
    AtQuadrature(&'a QuadratureValues),
}

impl ScalarCoefficient<'_> {
    /// Coefficient values at the volume quadrature points of element `k`.
    fn volume_values(&self, space: &DgSpace, k: usize, xs: &[Point2], out: &mut [f64]) {
        match self {
            ScalarCoefficient::Constant(c) => out.fill(*c),
            ScalarCoefficient::Analytic(f) => {
                for (o, &x) in out.iter_mut().zip(xs) {
                    *o = f(x);
                }
            }
            ScalarCoefficient::State { field, map } => {
                let vals = field_volume_values(field, space, k, xs);
                for ((o, v), &x) in out.iter_mut().zip(&vals).zip(xs) {
                    *o = map(*v, x);
                }
            }
            ScalarCoefficient::TwoState { fields, map } => {
                let a = field_volume_values(fields[0], space, k, xs);
                let b = field_volume_values(fields[1], space, k, xs);
                for (q, o) in out.iter_mut().enumerate() {
                    *o = map(a[q], b[q], xs[q]);
                }
            }
            ScalarCoefficient::AtQuadrature(table) => {
                assert_eq!(
                    table.nq,
                    space.volume_rule.len(),
                    "precomputed quadrature table does not match the assembly rule"
                );
                out.copy_from_slice(table.elem(k));
            }
        }
    }
}

/// Tensor coefficient for SIPG diffusion operators.
pub enum TensorCoefficient<'a> {
    Constant(SymTensor2),
    Analytic(&'a (dyn Fn(Point2) -> SymTensor2 + Sync)),
    /// Scalar state-dependent coefficient times the identity, the shape of
    /// the capillary permeability law.
    State {
        field: &'a FieldVector,
        map: &'a (dyn Fn(f64, Point2) -> f64 + Sync),
    },
}

impl TensorCoefficient<'_> {
    fn volume_values(&self, space: &DgSpace, k: usize, xs: &[Point2], out: &mut [SymTensor2]) {
        match self {
            TensorCoefficient::Constant(t) => out.fill(*t),
            TensorCoefficient::Analytic(f) => {
                for (o, &x) in out.iter_mut().zip(xs) {
                    *o = f(x);
                }
            }
            TensorCoefficient::State { field, map } => {
                let vals = field_volume_values(field, space, k, xs);
                for ((o, v), &x) in out.iter_mut().zip(&vals).zip(xs) {
                    *o = SymTensor2::isotropic(map(*v, x));
                }
            }
        }
    }

    /// One-sided trace values at face quadrature points of element `k`.
    fn face_values(
        &self,
        space: &DgSpace,
        k: usize,
        edge: usize,
        side: EdgeSide,
        xs: &[Point2],
        out: &mut [SymTensor2],
    ) {
        match self {
            TensorCoefficient::Constant(t) => out.fill(*t),
            TensorCoefficient::Analytic(f) => {
                for (o, &x) in out.iter_mut().zip(xs) {
                    *o = f(x);
                }
            }
            TensorCoefficient::State { field, map } => {
                let mut vals = vec![0.0; xs.len()];
                if shares_tables(field, space) {
                    field.values_on_edge(k, edge, side, &mut vals);
                } else {
                    for (v, &x) in vals.iter_mut().zip(xs) {
                        *v = field.eval_at(k, x);
                    }
                }
                for ((o, v), &x) in out.iter_mut().zip(&vals).zip(xs) {
                    *o = SymTensor2::isotropic(map(*v, x));
                }
            }
        }
    }
}

/// A field built over the same mesh with the same degree shares the
/// quadrature layout of the assembly space, so its precomputed tables apply.
fn shares_tables(field: &FieldVector, space: &DgSpace) -> bool {
    field.space.degree == space.degree && std::sync::Arc::ptr_eq(&field.space.mesh, &space.mesh)
}

/// Field values at the quadrature points of the assembly space; takes the
/// fast table path when the field lives on a space with the same layout.
fn field_volume_values(field: &FieldVector, space: &DgSpace, k: usize, xs: &[Point2]) -> Vec<f64> {
    let mut vals = vec![0.0; xs.len()];
    if shares_tables(field, space) {
        field.values_at_quadrature(k, &mut vals);
    } else {
        for (v, &x) in vals.iter_mut().zip(xs) {
            *v = field.eval_at(k, x);
        }
    }
    vals
}

/// SIPG operator with its Dirichlet lift.
#[derive(Debug, Clone)]
pub struct AssembledOperator {
    pub matrix: SparseMatrix,
    pub dirichlet_lift: Vec<f64>,
}

/// Constant Dirichlet data imposed on a set of boundary tags.
#[derive(Debug, Clone)]
pub struct DirichletSpec {
    pub tags: Vec<BoundaryTag>,
    pub value: f64,
}

impl DirichletSpec {
    pub fn on(tags: &[BoundaryTag], value: f64) -> DirichletSpec {
        DirichletSpec {
            tags: tags.to_vec(),
            value,
        }
    }

    fn applies(&self, tag: BoundaryTag) -> bool {
        self.tags.contains(&tag)
    }
}

/// Weighted mass matrix [(w φ_j, φ_i)]; block diagonal over elements.
pub fn assemble_mass(space: &DgSpace, weight: &ScalarCoefficient) -> SparseMatrix {
    let mut cache = None;
    assemble_mass_cached(space, weight, &mut cache)
}

/// [`assemble_mass`] with a reusable pattern cache; all weighted masses on
/// one space share the block-diagonal layout.
pub fn assemble_mass_cached(
    space: &DgSpace,
    weight: &ScalarCoefficient,
    cache: &mut Option<CsrPattern>,
) -> SparseMatrix {
    let n = space.dofs_per_element;
    let nq = space.volume_rule.len();
    let nelem = space.mesh.num_elements();
    let mut triplets = Vec::with_capacity(nelem * n * n);
    let mut w = vec![0.0; nq];
    let mut xs = vec![[0.0; 2]; nq];
    for k in 0..nelem {
        for (q, &p) in space.volume_rule.points.iter().enumerate() {
            xs[q] = space.map_to_physical(k, p);
        }
        weight.volume_values(space, k, &xs, &mut w);
        let det = space.det_jac(k);
        let base = k * n;
        for i in 0..n {
            for j in 0..=i {
                let mut acc = 0.0;
                for q in 0..nq {
                    let basis = space.vol_basis(q);
                    acc += space.volume_rule.weights[q] * w[q] * basis[i] * basis[j];
                }
                acc *= det;
                triplets.push((base + i, base + j, acc));
                if i != j {
                    triplets.push((base + j, base + i, acc));
                }
            }
        }
    }
    SparseMatrix::from_triplets_cached(space.total_dofs(), space.total_dofs(), &triplets, cache)
}

/// Load vector [(f, φ_i)].
pub fn assemble_load(space: &DgSpace, f: &ScalarCoefficient) -> Vec<f64> {
    let n = space.dofs_per_element;
    let nq = space.volume_rule.len();
    let mut load = vec![0.0; space.total_dofs()];
    let mut w = vec![0.0; nq];
    let mut xs = vec![[0.0; 2]; nq];
    for k in 0..space.mesh.num_elements() {
        for (q, &p) in space.volume_rule.points.iter().enumerate() {
            xs[q] = space.map_to_physical(k, p);
        }
        f.volume_values(space, k, &xs, &mut w);
        let det = space.det_jac(k);
        let block = &mut load[k * n..(k + 1) * n];
        for q in 0..nq {
            let basis = space.vol_basis(q);
            let s = det * space.volume_rule.weights[q] * w[q];
            for i in 0..n {
                block[i] += s * basis[i];
            }
        }
    }
    load
}

/// SIPG diffusion operator for −∇·(K∇·): volume term plus interior-face
/// terms; boundary faces matching `dirichlet` get Nitsche-type terms and a
/// lift, all other boundary faces are zero-flux.
pub fn assemble_sipg(
    space: &DgSpace,
    tensor: &TensorCoefficient,
    dirichlet: Option<&DirichletSpec>,
    penalty_scale: f64,
) -> Result<AssembledOperator> {
    let mut cache = None;
    assemble_sipg_cached(space, tensor, dirichlet, penalty_scale, &mut cache)
}

/// [`assemble_sipg`] with a reusable pattern cache for per-step rebuilds
/// with state-dependent coefficients.
pub fn assemble_sipg_cached(
    space: &DgSpace,
    tensor: &TensorCoefficient,
    dirichlet: Option<&DirichletSpec>,
    penalty_scale: f64,
    cache: &mut Option<CsrPattern>,
) -> Result<AssembledOperator> {
    if !(penalty_scale > 0.0) {
        return Err(Error::invalid_argument(format!(
            "penalty scale must be positive (got {penalty_scale})"
        )));
    }
    let n = space.dofs_per_element;
    let nq = space.volume_rule.len();
    let nqf = space.face_points.len();
    let nelem = space.mesh.num_elements();
    let total = space.total_dofs();
    let ell2 = (space.degree * space.degree) as f64;

    let mut triplets: Vec<(usize, usize, f64)> = Vec::with_capacity(nelem * n * n * 4);
    let mut lift = vec![0.0; total];

    // Volume term with physical gradients.
    let mut tensors = vec![SymTensor2::isotropic(0.0); nq];
    let mut xs = vec![[0.0; 2]; nq];
    let mut grads = vec![[0.0; 2]; nq * n];
    for k in 0..nelem {
        for (q, &p) in space.volume_rule.points.iter().enumerate() {
            xs[q] = space.map_to_physical(k, p);
        }
        tensor.volume_values(space, k, &xs, &mut tensors);
        for (q, t) in tensors.iter().enumerate() {
            if !t.is_spsd(1e-12 * (1.0 + t.xx.abs() + t.yy.abs())) {
                return Err(Error::invalid_argument(format!(
                    "diffusion tensor not positive semidefinite at element {k}, point {q}"
                )));
            }
        }
        let det = space.det_jac(k);
        let jit = space.jac_inv_t(k);
        for q in 0..nq {
            let ref_grads = space.vol_ref_grads(q);
            for i in 0..n {
                let g = ref_grads[i];
                grads[q * n + i] = [
                    jit[0][0] * g[0] + jit[0][1] * g[1],
                    jit[1][0] * g[0] + jit[1][1] * g[1],
                ];
            }
        }
        let base = k * n;
        for i in 0..n {
            for j in 0..=i {
                let mut acc = 0.0;
                for q in 0..nq {
                    let kg = tensors[q].mul_vec(grads[q * n + j]);
                    let gi = grads[q * n + i];
                    acc += space.volume_rule.weights[q] * (kg[0] * gi[0] + kg[1] * gi[1]);
                }
                acc *= det;
                triplets.push((base + i, base + j, acc));
                if i != j {
                    triplets.push((base + j, base + i, acc));
                }
            }
        }
    }

    // Interior faces.
    let mut t_plus = vec![SymTensor2::isotropic(0.0); nqf];
    let mut t_minus = vec![SymTensor2::isotropic(0.0); nqf];
    let mut xf = vec![[0.0; 2]; nqf];
    let mut basis_side = [vec![0.0; nqf * n], vec![0.0; nqf * n]];
    let mut kgrad_side = [vec![[0.0; 2]; nqf * n], vec![[0.0; 2]; nqf * n]];
    for face in &space.mesh.interior_faces {
        let [kp, km] = face.elems;
        let [ep, em] = face.local;
        let normal = face.normal;
        let va = space.mesh.vertices[face.verts[0]];
        let vb = space.mesh.vertices[face.verts[1]];
        for (q, &t) in space.face_points.iter().enumerate() {
            xf[q] = [va[0] + t * (vb[0] - va[0]), va[1] + t * (vb[1] - va[1])];
        }
        tensor.face_values(space, kp, ep, EdgeSide::Forward, &xf, &mut t_plus);
        tensor.face_values(space, km, em, EdgeSide::Reversed, &xf, &mut t_minus);

        // Face-averaged normal-direction coefficient drives the penalty.
        let kappa = t_plus
            .iter()
            .zip(&t_minus)
            .map(|(a, b)| 0.5 * (a.normal_component(normal) + b.normal_component(normal)))
            .sum::<f64>()
            / nqf as f64;
        let h_f = space.mesh.diameters[kp].min(space.mesh.diameters[km]);
        let eta = penalty_scale * ell2 * kappa / h_f;

        for (s, (k, e, side)) in [
            (kp, ep, EdgeSide::Forward),
            (km, em, EdgeSide::Reversed),
        ]
        .into_iter()
        .enumerate()
        {
            let jit = space.jac_inv_t(k);
            let ts = if s == 0 { &t_plus } else { &t_minus };
            for q in 0..nqf {
                let vals = space.edge_basis(e, side, q);
                let rgrads = space.edge_ref_grads(e, side, q);
                for i in 0..n {
                    basis_side[s][q * n + i] = vals[i];
                    let g = [
                        jit[0][0] * rgrads[i][0] + jit[0][1] * rgrads[i][1],
                        jit[1][0] * rgrads[i][0] + jit[1][1] * rgrads[i][1],
                    ];
                    kgrad_side[s][q * n + i] = ts[q].mul_vec(g);
                }
            }
        }

        let bases = [kp * n, km * n];
        let signs = [1.0, -1.0];
        for s in 0..2 {
            for r in 0..2 {
                for i in 0..n {
                    for j in 0..n {
                        let mut acc = 0.0;
                        for q in 0..nqf {
                            let w = space.face_weights[q] * face.length;
                            let phi_i = basis_side[s][q * n + i];
                            let phi_j = basis_side[r][q * n + j];
                            let kg_j = kgrad_side[r][q * n + j];
                            let kg_i = kgrad_side[s][q * n + i];
                            let flux_j = 0.5 * (kg_j[0] * normal[0] + kg_j[1] * normal[1]);
                            let flux_i = 0.5 * (kg_i[0] * normal[0] + kg_i[1] * normal[1]);
                            acc += w
                                * (eta * signs[s] * signs[r] * phi_i * phi_j
                                    - signs[s] * phi_i * flux_j
                                    - signs[r] * phi_j * flux_i);
                        }
                        triplets.push((bases[s] + i, bases[r] + j, acc));
                    }
                }
            }
        }
    }

    // Boundary faces: Nitsche terms on Dirichlet tags, nothing elsewhere.
    if let Some(spec) = dirichlet {
        let g = spec.value;
        let mut tb = vec![SymTensor2::isotropic(0.0); nqf];
        for face in &space.mesh.boundary_faces {
            if !spec.applies(face.tag) {
                continue;
            }
            let k = face.elem;
            let e = face.local;
            let normal = face.normal;
            let va = space.mesh.vertices[face.verts[0]];
            let vb = space.mesh.vertices[face.verts[1]];
            for (q, &t) in space.face_points.iter().enumerate() {
                xf[q] = [va[0] + t * (vb[0] - va[0]), va[1] + t * (vb[1] - va[1])];
            }
            tensor.face_values(space, k, e, EdgeSide::Forward, &xf, &mut tb);
            let kappa = tb
                .iter()
                .map(|t| t.normal_component(normal))
                .sum::<f64>()
                / nqf as f64;
            let eta = penalty_scale * ell2 * kappa / space.mesh.diameters[k];

            let jit = space.jac_inv_t(k);
            let base = k * n;
            for q in 0..nqf {
                let w = space.face_weights[q] * face.length;
                let vals = space.edge_basis(e, EdgeSide::Forward, q);
                let rgrads = space.edge_ref_grads(e, EdgeSide::Forward, q);
                let mut fluxes = vec![0.0; n];
                for i in 0..n {
                    let gphys = [
                        jit[0][0] * rgrads[i][0] + jit[0][1] * rgrads[i][1],
                        jit[1][0] * rgrads[i][0] + jit[1][1] * rgrads[i][1],
                    ];
                    let kg = tb[q].mul_vec(gphys);
                    fluxes[i] = kg[0] * normal[0] + kg[1] * normal[1];
                }
                for i in 0..n {
                    for j in 0..n {
                        let acc = w
                            * (eta * vals[i] * vals[j]
                                - vals[i] * fluxes[j]
                                - vals[j] * fluxes[i]);
                        triplets.push((base + i, base + j, acc));
                    }
                    lift[base + i] += w * g * (eta * vals[i] - fluxes[i]);
                }
            }
        }
    }

    Ok(AssembledOperator {
        matrix: SparseMatrix::from_triplets_cached(total, total, &triplets, cache),
        dirichlet_lift: lift,
    })
}
