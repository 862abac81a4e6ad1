//! Sparse linear solvers and block composition of the pressure system.
//!
//! The default path is a sparse direct factorization (Cholesky for the
//! symmetric positive definite systems produced by the scheme, LU as the
//! fallback); the symbolic factorization is cached and reused across time
//! steps because the sparsity patterns are fixed. A preconditioned conjugate
//! gradient solver is available behind a config flag.

use faer::prelude::Solve;
use faer::sparse::linalg::solvers::{Llt, Lu, SymbolicLlt, SymbolicLu};
use faer::sparse::{SparseColMat, SparseColMatRef, SymbolicSparseColMatRef, Triplet};
use faer::{Mat, Side};

use crate::error::{Error, Result};
use crate::sparse::{CsrPattern, SparseMatrix};

/// Solver selection, from the run configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SolverKind {
    Direct,
    Cg { tol: f64, max_iter: usize },
}

/// The 3×3 block pressure system with its stacked right-hand side
/// (Dirichlet lifts).
pub struct BlockSystem<'a> {
    pub blocks: [[Option<&'a SparseMatrix>; 3]; 3],
    pub rhs: [&'a [f64]; 3],
}

/// Assembles the monolithic 3N×3N matrix and stacked right-hand side.
pub fn compose_block(sys: &BlockSystem) -> Result<(SparseMatrix, Vec<f64>)> {
    let mut cache = None;
    compose_block_cached(sys, &mut cache)
}

/// [`compose_block`] with a reusable pattern cache for the per-step rebuild
/// with fixed block patterns.
pub fn compose_block_cached(
    sys: &BlockSystem,
    cache: &mut Option<CsrPattern>,
) -> Result<(SparseMatrix, Vec<f64>)> {
    let mut n = None;
    for row in &sys.blocks {
        for block in row.iter().flatten() {
            if block.n_rows() != block.n_cols() {
                return Err(Error::invalid_argument("pressure blocks must be square"));
            }
            match n {
                None => n = Some(block.n_rows()),
                Some(m) if m == block.n_rows() => {}
                Some(m) => {
                    return Err(Error::invalid_argument(format!(
                        "block dimension {} does not match {}",
                        block.n_rows(),
                        m
                    )))
                }
            }
        }
    }
    let n = n.ok_or_else(|| Error::invalid_argument("all blocks empty"))?;
    for r in &sys.rhs {
        if r.len() != n {
            return Err(Error::invalid_argument(format!(
                "right-hand side length {} does not match block dimension {n}",
                r.len()
            )));
        }
    }

    let nnz: usize = sys
        .blocks
        .iter()
        .flatten()
        .flatten()
        .map(|b| b.nnz())
        .sum();
    let mut triplets = Vec::with_capacity(nnz);
    for (bi, row) in sys.blocks.iter().enumerate() {
        for (bj, block) in row.iter().enumerate() {
            if let Some(m) = block {
                for r in 0..n {
                    let (cols, vals) = m.row(r);
                    for (&c, &v) in cols.iter().zip(vals) {
                        triplets.push((bi * n + r, bj * n + c, v));
                    }
                }
            }
        }
    }
    let mono = SparseMatrix::from_triplets_cached(3 * n, 3 * n, &triplets, cache);
    let mut rhs = Vec::with_capacity(3 * n);
    for r in &sys.rhs {
        rhs.extend_from_slice(r);
    }
    Ok((mono, rhs))
}

/// Reinterprets a symmetric CSR matrix as a faer column-major view without
/// copying (CSR of A is CSC of Aᵀ, and Aᵀ = A).
fn symmetric_faer_view(a: &SparseMatrix) -> SparseColMatRef<'_, usize, f64> {
    let (row_ptr, col_idx, values) = a.csr_parts();
    let symbolic =
        SymbolicSparseColMatRef::new_checked(a.n_rows(), a.n_cols(), row_ptr, None, col_idx);
    SparseColMatRef::new(symbolic, values)
}

fn to_faer(a: &SparseMatrix) -> Result<SparseColMat<usize, f64>> {
    let (row_ptr, col_idx, values) = a.csr_parts();
    let mut triplets = Vec::with_capacity(values.len());
    for r in 0..a.n_rows() {
        for idx in row_ptr[r]..row_ptr[r + 1] {
            triplets.push(Triplet::new(r, col_idx[idx], values[idx]));
        }
    }
    SparseColMat::try_new_from_triplets(a.n_rows(), a.n_cols(), &triplets)
        .map_err(|e| Error::InvalidState(format!("sparse conversion failed: {e:?}")))
}

fn column_from(b: &[f64]) -> Mat<f64> {
    let mut m = Mat::zeros(b.len(), 1);
    for (i, &v) in b.iter().enumerate() {
        m[(i, 0)] = v;
    }
    m
}

fn check_residual(a: &SparseMatrix, x: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    let mut r = a.matvec_alloc(x);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri -= bi;
    }
    let res = norm2(&r);
    let bound = 1e-10 * (a.max_abs() * norm2(x) + norm2(b));
    if res.is_finite() && res <= bound.max(1e-300) {
        Ok(x.to_vec())
    } else {
        Err(Error::NoConvergence {
            iterations: 0,
            residual: res,
        })
    }
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// One-shot sparse LU solve.
pub fn solve_direct(a: &SparseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    if a.n_rows() != a.n_cols() || a.n_rows() != b.len() {
        return Err(Error::invalid_argument("solve_direct needs a square system"));
    }
    let fa = to_faer(a)?;
    let symbolic = SymbolicLu::try_new(fa.symbolic())
        .map_err(|e| Error::InvalidState(format!("symbolic LU failed: {e:?}")))?;
    let lu = Lu::try_new_with_symbolic(symbolic, fa.as_ref()).map_err(|e| match e {
        faer::sparse::linalg::LuError::SymbolicSingular { index } => {
            Error::Singular { pivot: index }
        }
        other => Error::InvalidState(format!("LU factorization failed: {other:?}")),
    })?;
    let x = lu.solve(column_from(b));
    let xs: Vec<f64> = (0..b.len()).map(|i| x[(i, 0)]).collect();
    check_residual(a, &xs, b)
}

/// Direct solver with cached symbolic factorizations, for repeated solves
/// with a fixed sparsity pattern and changing values.
#[derive(Default)]
pub struct DirectSolver {
    llt: Option<(SparseMatrix, SymbolicLlt<usize>)>,
    lu: Option<(SparseMatrix, SymbolicLu<usize>)>,
}

impl DirectSolver {
    pub fn new() -> DirectSolver {
        DirectSolver::default()
    }

    /// Cholesky solve for a symmetric positive definite matrix; falls back
    /// to LU when a nonpositive pivot shows up (the misfolded-protein system
    /// can lose definiteness for large Δt). The matrix must be symmetric:
    /// its CSR storage is reinterpreted column-major without copying, and
    /// the final residual check is performed against the original rows.
    pub fn solve_spd(&mut self, a: &SparseMatrix, b: &[f64]) -> Result<Vec<f64>> {
        if a.n_rows() != a.n_cols() || a.n_rows() != b.len() {
            return Err(Error::invalid_argument("solve_spd needs a square system"));
        }
        let fa = symmetric_faer_view(a);
        let symbolic = match &self.llt {
            Some((pattern, sym)) if pattern.same_pattern(a) => sym.clone(),
            _ => {
                let sym = SymbolicLlt::try_new(fa.symbolic(), Side::Lower)
                    .map_err(|e| Error::InvalidState(format!("symbolic Cholesky failed: {e:?}")))?;
                self.llt = Some((a.clone(), sym.clone()));
                sym
            }
        };
        match Llt::try_new_with_symbolic(symbolic, fa, Side::Lower) {
            Ok(llt) => {
                let x = llt.solve(column_from(b));
                let xs: Vec<f64> = (0..b.len()).map(|i| x[(i, 0)]).collect();
                check_residual(a, &xs, b)
            }
            Err(_) => self.solve_lu(a, fa, b),
        }
    }

    fn solve_lu(
        &mut self,
        a: &SparseMatrix,
        fa: SparseColMatRef<'_, usize, f64>,
        b: &[f64],
    ) -> Result<Vec<f64>> {
        let symbolic = match &self.lu {
            Some((pattern, sym)) if pattern.same_pattern(a) => sym.clone(),
            _ => {
                let sym = SymbolicLu::try_new(fa.symbolic())
                    .map_err(|e| Error::InvalidState(format!("symbolic LU failed: {e:?}")))?;
                self.lu = Some((a.clone(), sym.clone()));
                sym
            }
        };
        let lu = Lu::try_new_with_symbolic(symbolic, fa).map_err(|e| match e {
            faer::sparse::linalg::LuError::SymbolicSingular { index } => {
                Error::Singular { pivot: index }
            }
            other => Error::InvalidState(format!("LU factorization failed: {other:?}")),
        })?;
        let x = lu.solve(column_from(b));
        let xs: Vec<f64> = (0..b.len()).map(|i| x[(i, 0)]).collect();
        check_residual(a, &xs, b)
    }
}

/// Preconditioner for [`solve_cg`].
pub enum Preconditioner {
    None,
    Jacobi,
    /// Dense factorization of consecutive diagonal blocks of the given size
    /// (the element blocks of a dG operator).
    BlockJacobi(usize),
}

/// Preconditioned conjugate gradients for symmetric positive definite
/// systems. Deterministic for fixed inputs; reports non-convergence with the
/// final residual, and indefiniteness through the curvature test.
pub fn solve_cg(
    a: &SparseMatrix,
    b: &[f64],
    tol: f64,
    max_iter: usize,
    precond: &Preconditioner,
) -> Result<Vec<f64>> {
    if a.n_rows() != a.n_cols() || a.n_rows() != b.len() {
        return Err(Error::invalid_argument("solve_cg needs a square system"));
    }
    let n = b.len();
    let apply_m = build_preconditioner(a, precond)?;

    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let norm_b = norm2(b).max(1e-300);
    if norm2(&r) / norm_b <= tol {
        return Ok(x);
    }
    let mut z = vec![0.0; n];
    apply_m(&r, &mut z);
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let mut ap = vec![0.0; n];

    for it in 0..max_iter {
        a.matvec(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if pap <= 0.0 {
            return Err(Error::NotPositiveDefinite {
                curvature: pap,
                iteration: it,
            });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if norm2(&r) / norm_b <= tol {
            return Ok(x);
        }
        apply_m(&r, &mut z);
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        residual: norm2(&r) / norm_b,
    })
}

type PrecondFn = Box<dyn Fn(&[f64], &mut [f64])>;

fn build_preconditioner(a: &SparseMatrix, precond: &Preconditioner) -> Result<PrecondFn> {
    match precond {
        Preconditioner::None => Ok(Box::new(|r: &[f64], z: &mut [f64]| {
            z.copy_from_slice(r);
        })),
        Preconditioner::Jacobi => {
            let n = a.n_rows();
            let mut diag = vec![0.0; n];
            for i in 0..n {
                let (cols, vals) = a.row(i);
                for (&c, &v) in cols.iter().zip(vals) {
                    if c == i {
                        diag[i] = v;
                    }
                }
                if diag[i] <= 0.0 {
                    return Err(Error::NotPositiveDefinite {
                        curvature: diag[i],
                        iteration: 0,
                    });
                }
            }
            Ok(Box::new(move |r: &[f64], z: &mut [f64]| {
                for i in 0..r.len() {
                    z[i] = r[i] / diag[i];
                }
            }))
        }
        Preconditioner::BlockJacobi(bs) => {
            let bs = *bs;
            let n = a.n_rows();
            if bs == 0 || n % bs != 0 {
                return Err(Error::invalid_argument(format!(
                    "block size {bs} does not divide system size {n}"
                )));
            }
            let nb = n / bs;
            // Cholesky factors of the diagonal blocks, stored packed.
            let mut factors = vec![0.0; nb * bs * bs];
            for kb in 0..nb {
                let base = kb * bs;
                let mut block = vec![0.0; bs * bs];
                for i in 0..bs {
                    let (cols, vals) = a.row(base + i);
                    for (&c, &v) in cols.iter().zip(vals) {
                        if c >= base && c < base + bs {
                            block[i * bs + (c - base)] = v;
                        }
                    }
                }
                let l = &mut factors[kb * bs * bs..(kb + 1) * bs * bs];
                dense_cholesky(&block, bs, l).ok_or(Error::NotPositiveDefinite {
                    curvature: 0.0,
                    iteration: 0,
                })?;
            }
            Ok(Box::new(move |r: &[f64], z: &mut [f64]| {
                for kb in 0..nb {
                    let base = kb * bs;
                    let l = &factors[kb * bs * bs..(kb + 1) * bs * bs];
                    cholesky_solve(l, bs, &r[base..base + bs], &mut z[base..base + bs]);
                }
            }))
        }
    }
}

/// L such that A = L Lᵀ for a small dense SPD block; returns None when a
/// pivot is nonpositive.
fn dense_cholesky(a: &[f64], n: usize, l: &mut [f64]) -> Option<()> {
    l.fill(0.0);
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s <= 0.0 {
                    return None;
                }
                l[i * n + j] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Some(())
}

fn cholesky_solve(l: &[f64], n: usize, b: &[f64], x: &mut [f64]) {
    // Forward then backward substitution.
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in i + 1..n {
            s -= l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(values: &[f64]) -> SparseMatrix {
        let triplets: Vec<_> = values
            .iter()
            .enumerate()
            .map(|(i, &v)| (i, i, v))
            .collect();
        SparseMatrix::from_triplets(values.len(), values.len(), &triplets)
    }

    #[test]
    fn identity_and_diagonal_solves() {
        let a = diag(&[1.0, 1.0, 1.0]);
        let x = solve_direct(&a, &[3.0, -1.0, 2.0]).unwrap();
        assert_eq!(x, vec![3.0, -1.0, 2.0]);

        let a = diag(&[2.0, 4.0]);
        let x = solve_direct(&a, &[2.0, 8.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn singular_matrix_reported() {
        let a = SparseMatrix::from_triplets(2, 2, &[(0, 0, 1.0)]);
        // Row 1 is structurally empty.
        match solve_direct(&a, &[1.0, 1.0]) {
            Err(Error::Singular { .. }) | Err(Error::NoConvergence { .. }) => {}
            other => panic!("expected singularity, got {other:?}"),
        }
    }

    #[test]
    fn cg_exact_on_small_diagonal() {
        let a = diag(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        let b = vec![1.0; 5];
        let x = solve_cg(&a, &b, 1e-12, 5, &Preconditioner::None).unwrap();
        for (i, &xi) in x.iter().enumerate() {
            assert!((xi - 1.0 / (i as f64 + 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn cg_rejects_indefinite() {
        let a = diag(&[1.0, -1.0]);
        match solve_cg(&a, &[1.0, 1.0], 1e-10, 10, &Preconditioner::None) {
            Err(Error::NotPositiveDefinite { .. }) => {}
            other => panic!("expected indefiniteness error, got {other:?}"),
        }
    }

    #[test]
    fn cg_matches_direct_on_spd_system() {
        // SPD tridiagonal system.
        let n = 40;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.5));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        let a = SparseMatrix::from_triplets(n, n, &t);
        let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let xd = solve_direct(&a, &b).unwrap();
        for pc in [
            Preconditioner::None,
            Preconditioner::Jacobi,
            Preconditioner::BlockJacobi(4),
        ] {
            let xc = solve_cg(&a, &b, 1e-13, 500, &pc).unwrap();
            let rel: f64 = xd
                .iter()
                .zip(&xc)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
                / xd.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(rel < 1e-8, "rel diff {rel}");
        }
    }

    #[test]
    fn cg_deterministic() {
        let a = diag(&[3.0, 5.0, 7.0]);
        let b = vec![1.0, 2.0, 3.0];
        let x1 = solve_cg(&a, &b, 1e-14, 10, &Preconditioner::Jacobi).unwrap();
        let x2 = solve_cg(&a, &b, 1e-14, 10, &Preconditioner::Jacobi).unwrap();
        assert_eq!(x1, x2);
    }

    #[test]
    fn compose_block_shapes_and_symmetry() {
        let a = diag(&[1.0, 2.0]);
        let m = SparseMatrix::from_triplets(2, 2, &[(0, 0, 0.5), (1, 1, 0.5)]);
        let zero_rhs = vec![0.0; 2];
        // Standard layout: coupling masses off the diagonal with minus signs.
        let d0 = SparseMatrix::linear_combination(&[(1.0, &a), (1.0, &m)]).unwrap();
        let mut neg = m.clone();
        neg.scale(-1.0);
        let sys = BlockSystem {
            blocks: [
                [Some(&d0), Some(&neg), None],
                [Some(&neg), Some(&d0), Some(&neg)],
                [None, Some(&neg), Some(&d0)],
            ],
            rhs: [&zero_rhs, &zero_rhs, &zero_rhs],
        };
        let (mono, rhs) = compose_block(&sys).unwrap();
        assert_eq!(mono.n_rows(), 6);
        assert_eq!(rhs.len(), 6);
        assert!(mono.asymmetry() < 1e-12);

        // Block-diagonal when couplings vanish.
        let sys = BlockSystem {
            blocks: [
                [Some(&a), None, None],
                [None, Some(&a), None],
                [None, None, Some(&a)],
            ],
            rhs: [&zero_rhs, &zero_rhs, &zero_rhs],
        };
        let (mono, _) = compose_block(&sys).unwrap();
        assert_eq!(mono.nnz(), 3 * a.nnz());
    }

    #[test]
    fn cached_symbolic_reuse_gives_same_answers() {
        let mut solver = DirectSolver::new();
        let n = 30;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 3.0));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        let a = SparseMatrix::from_triplets(n, n, &t);
        let b = vec![1.0; n];
        let x1 = solver.solve_spd(&a, &b).unwrap();
        // Same pattern, scaled values: symbolic factorization is reused.
        let t2: Vec<_> = t.iter().map(|&(r, c, v)| (r, c, 2.0 * v)).collect();
        let a2 = SparseMatrix::from_triplets(n, n, &t2);
        let x2 = solver.solve_spd(&a2, &b).unwrap();
        for (u, v) in x1.iter().zip(&x2) {
            assert!((u - 2.0 * v).abs() < 1e-12);
        }
    }

    #[test]
    fn spd_fallback_to_lu_for_indefinite() {
        let mut solver = DirectSolver::new();
        let a = diag(&[1.0, -2.0]);
        let x = solver.solve_spd(&a, &[1.0, 2.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-14);
        assert!((x[1] + 1.0).abs() < 1e-14);
    }
}
