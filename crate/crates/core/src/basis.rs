//! Modal basis for ℙ_ℓ on the reference triangle, orthonormalized in L².
//!
//! The basis is built from graded monomials ξ^a η^b by a Cholesky
//! factorization of their exact Gram matrix (∫ ξ^a η^b has a closed form on
//! the reference triangle), so element mass matrices are det(J) times the
//! identity.

use crate::Point2;

#[derive(Debug, Clone)]
pub(crate) struct ReferenceBasis {
    pub ndofs: usize,
    /// Monomial exponents (a, b) in graded order.
    exponents: Vec<(u32, u32)>,
    /// Row i holds the monomial coefficients of basis function i; lower
    /// triangular with positive diagonal, so the basis spans ℙ_ℓ exactly.
    coeffs: Vec<Vec<f64>>,
}

/// Exact ∫_T̂ ξ^a η^b = a! b! / (a + b + 2)! on the reference triangle.
fn monomial_integral(a: u32, b: u32) -> f64 {
    let fact = |k: u32| (1..=k as u64).product::<u64>() as f64;
    fact(a) * fact(b) / fact(a + b + 2)
}

impl ReferenceBasis {
    pub fn new(degree: usize) -> Self {
        let ndofs = (degree + 1) * (degree + 2) / 2;
        let mut exponents = Vec::with_capacity(ndofs);
        for total in 0..=degree as u32 {
            for a in (0..=total).rev() {
                exponents.push((a, total - a));
            }
        }

        // Gram matrix of the monomials, then G = L Lᵀ.
        let mut gram = vec![vec![0.0; ndofs]; ndofs];
        for i in 0..ndofs {
            for j in 0..ndofs {
                let (ai, bi) = exponents[i];
                let (aj, bj) = exponents[j];
                gram[i][j] = monomial_integral(ai + aj, bi + bj);
            }
        }
        let lower = cholesky(&gram);
        let coeffs = invert_lower_triangular(&lower);

        ReferenceBasis {
            ndofs,
            exponents,
            coeffs,
        }
    }

    /// Basis values at a reference point.
    pub fn eval(&self, p: Point2, out: &mut [f64]) {
        let mono = self.monomials(p);
        for (i, row) in self.coeffs.iter().enumerate() {
            out[i] = row
                .iter()
                .zip(&mono)
                .map(|(c, m)| c * m)
                .sum();
        }
    }

    /// Basis gradients (w.r.t. reference coordinates) at a reference point.
    pub fn eval_grad(&self, p: Point2, out: &mut [Point2]) {
        let [xi, eta] = p;
        let mut dxi = vec![0.0; self.ndofs];
        let mut deta = vec![0.0; self.ndofs];
        for (k, &(a, b)) in self.exponents.iter().enumerate() {
            dxi[k] = if a == 0 {
                0.0
            } else {
                a as f64 * xi.powi(a as i32 - 1) * eta.powi(b as i32)
            };
            deta[k] = if b == 0 {
                0.0
            } else {
                b as f64 * xi.powi(a as i32) * eta.powi(b as i32 - 1)
            };
        }
        for (i, row) in self.coeffs.iter().enumerate() {
            let gx: f64 = row.iter().zip(&dxi).map(|(c, m)| c * m).sum();
            let gy: f64 = row.iter().zip(&deta).map(|(c, m)| c * m).sum();
            out[i] = [gx, gy];
        }
    }

    fn monomials(&self, [xi, eta]: Point2) -> Vec<f64> {
        self.exponents
            .iter()
            .map(|&(a, b)| xi.powi(a as i32) * eta.powi(b as i32))
            .collect()
    }
}

/// Dense Cholesky of a small SPD matrix; panics on loss of positivity, which
/// cannot happen for a Gram matrix of linearly independent monomials.
fn cholesky(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                assert!(s > 0.0, "Gram matrix not positive definite");
                l[i][j] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    l
}

fn invert_lower_triangular(l: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = l.len();
    let mut inv = vec![vec![0.0; n]; n];
    for i in 0..n {
        inv[i][i] = 1.0 / l[i][i];
        for j in 0..i {
            let mut s = 0.0;
            for k in j..i {
                s += l[i][k] * inv[k][j];
            }
            inv[i][j] = -s / l[i][i];
        }
    }
    inv
}
