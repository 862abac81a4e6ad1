//! Quadrature rules on the reference triangle and the unit interval.
//!
//! The reference triangle is T̂ = {(ξ, η) : ξ ≥ 0, η ≥ 0, ξ + η ≤ 1} with
//! area 1/2. Triangle rules are conical products of Gauss-Legendre rules
//! through the Duffy map ξ = u(1 − v), η = v, which integrates any bivariate
//! polynomial of total degree ≤ `order` exactly.

use crate::Point2;

/// A quadrature rule on the reference triangle.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    /// Points in reference coordinates (ξ, η).
    pub points: Vec<Point2>,
    /// Weights in reference area; they sum to 1/2.
    pub weights: Vec<f64>,
    /// Largest total polynomial degree integrated exactly.
    pub order: usize,
}

impl QuadratureRule {
    /// Conical-product rule exact for total degree `order`.
    pub fn triangle(order: usize) -> Self {
        // ∫_T̂ p = ∫₀¹∫₀¹ p(u(1−v), v) (1−v) du dv. For total degree d the
        // u-degree is ≤ d and the v-degree ≤ d + 1, so n Gauss points per
        // direction suffice when 2n − 1 ≥ d + 1.
        let n = (order + 2).div_ceil(2);
        let (xu, wu) = gauss_legendre_unit(n);
        let mut points = Vec::with_capacity(n * n);
        let mut weights = Vec::with_capacity(n * n);
        for (&v, &wv) in xu.iter().zip(&wu) {
            for (&u, &wuu) in xu.iter().zip(&wu) {
                points.push([u * (1.0 - v), v]);
                weights.push(wuu * wv * (1.0 - v));
            }
        }
        QuadratureRule {
            points,
            weights,
            order,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Gauss-Legendre nodes and weights on [0, 1], exact for degree `order`.
pub fn interval_rule(order: usize) -> (Vec<f64>, Vec<f64>) {
    let n = (order + 2) / 2;
    gauss_legendre_unit(n)
}

/// n-point Gauss-Legendre rule mapped from [-1, 1] to [0, 1].
fn gauss_legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let nodes = x.iter().map(|&t| 0.5 * (t + 1.0)).collect();
    let weights = w.iter().map(|&wi| 0.5 * wi).collect();
    (nodes, weights)
}

/// n-point Gauss-Legendre rule on [-1, 1] via Newton iteration on P_n.
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Chebyshev initial guess for the i-th positive root.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        let (_, d) = legendre_with_derivative(n, 0.0);
        nodes[n / 2] = 0.0;
        weights[n / 2] = 2.0 / (d * d);
    }
    (nodes, weights)
}

/// Evaluates (P_n(x), P_n'(x)) by the three-term recurrence.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn monomial_integral(a: u32, b: u32) -> f64 {
        // ∫_T̂ ξ^a η^b = a! b! / (a + b + 2)!
        let fact = |k: u32| (1..=k as u64).product::<u64>() as f64;
        fact(a) * fact(b) / fact(a + b + 2)
    }

    #[test]
    fn weights_sum_to_reference_area() {
        for order in 1..=10 {
            let rule = QuadratureRule::triangle(order);
            let sum: f64 = rule.weights.iter().sum();
            assert!((sum - 0.5).abs() < 1e-14, "order {order}: sum {sum}");
        }
    }

    #[test]
    fn monomials_integrated_exactly() {
        for order in 1..=10usize {
            let rule = QuadratureRule::triangle(order);
            for a in 0..=order as u32 {
                for b in 0..=(order as u32 - a) {
                    let num: f64 = rule
                        .points
                        .iter()
                        .zip(&rule.weights)
                        .map(|(p, w)| w * p[0].powi(a as i32) * p[1].powi(b as i32))
                        .sum();
                    let exact = monomial_integral(a, b);
                    assert!(
                        (num - exact).abs() < 1e-13,
                        "order {order}, xi^{a} eta^{b}: {num} vs {exact}"
                    );
                }
            }
        }
    }

    #[test]
    fn interval_rule_exact() {
        for order in 1..=12usize {
            let (x, w) = interval_rule(order);
            for d in 0..=order as u32 {
                let num: f64 = x
                    .iter()
                    .zip(&w)
                    .map(|(&xi, &wi)| wi * xi.powi(d as i32))
                    .sum();
                let exact = 1.0 / (d as f64 + 1.0);
                assert!((num - exact).abs() < 1e-14, "deg {d}: {num} vs {exact}");
            }
        }
    }

    #[test]
    fn gauss_nodes_symmetric_and_sorted() {
        let (x, w) = gauss_legendre(7);
        for i in 0..7 {
            assert!((x[i] + x[6 - i]).abs() < 1e-15);
            assert!((w[i] - w[6 - i]).abs() < 1e-15);
        }
        assert!(x.windows(2).all(|p| p[0] < p[1]));
    }
}
