//! Gauss–Legendre rules on `[0, 1]` aligned with the breakpoints of a
//! diffraction profile, so the integrand is smooth on every panel.

use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::propagator::DiffractionProfile;
use crate::{Error, Result};

pub const DEFAULT_ORDER: usize = 16;

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[−1, 1]`,
/// nodes ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = alloc::vec![0.0; n];
    let mut weights = alloc::vec![0.0; n];
    let pi = core::f64::consts::PI;
    for i in 0..n.div_ceil(2) {
        // Tricomi's initial guess for the i-th largest root.
        let mut x = (pi * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[n - 1 - i] = x;
        nodes[i] = -x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Quadrature over one period: `(t_k, w_k, D(t_k))`, weights summing to 1.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureRule {
    order: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    thetas: Vec<f64>,
}

impl QuadratureRule {
    /// `order` points on every segment of the profile.
    pub fn new(profile: &DiffractionProfile, order: usize) -> Result<QuadratureRule> {
        if order == 0 {
            return Err(Error::InvalidConfig("quadrature order must be positive"));
        }
        let (x, w) = gauss_legendre(order);
        let breaks = profile.breakpoints();
        let mut nodes = Vec::with_capacity(order * (breaks.len() - 1));
        let mut weights = Vec::with_capacity(nodes.capacity());
        let mut thetas = Vec::with_capacity(nodes.capacity());
        for pair in breaks.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let half = 0.5 * (b - a);
            for (xi, wi) in x.iter().zip(&w) {
                let t = a + half * (xi + 1.0);
                nodes.push(t);
                weights.push(half * wi);
                thetas.push(profile.integral_d(t)?);
            }
        }
        Ok(QuadratureRule {
            order,
            nodes,
            weights,
            thetas,
        })
    }

    pub fn with_default_order(profile: &DiffractionProfile) -> QuadratureRule {
        QuadratureRule::new(profile, DEFAULT_ORDER).expect("default order is valid")
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `D(t_k)` at every node.
    pub fn thetas(&self) -> &[f64] {
        &self.thetas
    }

    /// `(w_k, D(t_k))` pairs.
    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.weights
            .iter()
            .copied()
            .zip(self.thetas.iter().copied())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::propagator::Segment;
    use approx::assert_relative_eq;

    #[test]
    fn weights_sum_to_two() {
        for n in 1..=40 {
            let (x, w) = gauss_legendre(n);
            assert_relative_eq!(w.iter().sum::<f64>(), 2.0, max_relative = 1e-14);
            assert!(w.iter().all(|&w| w > 0.0));
            assert!(x.windows(2).all(|p| p[0] < p[1]));
        }
    }

    #[test]
    fn integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(16);
        for k in 0..32 {
            let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(k)).sum();
            let exact = if k % 2 == 1 {
                0.0
            } else {
                2.0 / (k as f64 + 1.0)
            };
            assert!((q - exact).abs() < 1e-14, "k={k}: {q} vs {exact}");
        }
    }

    #[test]
    fn three_point_rule() {
        let (x, w) = gauss_legendre(3);
        assert_relative_eq!(x[2], (0.6f64).sqrt(), max_relative = 1e-15);
        assert_relative_eq!(w[1], 8.0 / 9.0, max_relative = 1e-15);
        assert_eq!(x[1], 0.0);
    }

    #[test]
    fn rule_is_aligned_with_segments() {
        let p = DiffractionProfile::new(alloc::vec![
            Segment {
                length: 0.3,
                value: 2.0
            },
            Segment {
                length: 0.7,
                value: -6.0 / 7.0
            },
        ])
        .unwrap();
        let rule = QuadratureRule::new(&p, 8).unwrap();
        assert_eq!(rule.len(), 16);
        assert_relative_eq!(
            rule.weights().iter().sum::<f64>(),
            1.0,
            max_relative = 1e-14
        );
        assert!(rule.nodes()[..8].iter().all(|&t| t > 0.0 && t < 0.3));
        assert!(rule.nodes()[8..].iter().all(|&t| t > 0.3 && t < 1.0));
        // ∫₀¹ D(t) dt for a piecewise-linear D is integrated exactly.
        let integral: f64 = rule.points().map(|(w, th)| w * th).sum();
        let exact = 0.5 * 0.3 * 0.6 + 0.5 * 0.7 * 0.6;
        assert_relative_eq!(integral, exact, max_relative = 1e-13);
    }
}
