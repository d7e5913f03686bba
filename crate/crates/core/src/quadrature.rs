//! Triangle quadrature by collapsed (Duffy) Gauss-Legendre products.
//!
//! A rule of polynomial degree `k` uses `m = ceil((k + 2) / 2)` Gauss points per
//! direction, which integrates every polynomial of total degree `<= k` exactly
//! on the reference triangle `{xi, eta >= 0, xi + eta <= 1}`.

use std::sync::OnceLock;

/// Gauss-Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre_unit(m: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(m >= 1);
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    for i in 0..m.div_ceil(2) {
        // Tricomi initial guess, then Newton on P_m.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(m, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(m, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = 0.5 * (1.0 - x);
        nodes[m - 1 - i] = 0.5 * (1.0 + x);
        weights[i] = 0.5 * w;
        weights[m - 1 - i] = 0.5 * w;
    }
    (nodes, weights)
}

fn legendre(m: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if m == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=m {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = m as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Quadrature rule on the reference triangle, in barycentric coordinates.
///
/// Weights sum to 1 (they are fractions of the triangle area).
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleRule {
    pub degree: usize,
    pub bary: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

impl TriangleRule {
    pub fn new(degree: usize) -> TriangleRule {
        let m = (degree + 2).div_ceil(2).max(1);
        let (x, w) = gauss_legendre_unit(m);
        let mut bary = Vec::with_capacity(m * m);
        let mut weights = Vec::with_capacity(m * m);
        for (u, wu) in x.iter().zip(&w) {
            for (v, wv) in x.iter().zip(&w) {
                let xi = *u;
                let eta = v * (1.0 - u);
                bary.push([1.0 - xi - eta, xi, eta]);
                // reference area 1/2, normalised to 1
                weights.push(2.0 * wu * wv * (1.0 - u));
            }
        }
        TriangleRule {
            degree,
            bary,
            weights,
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Cached rules for the degrees used throughout the crate.
pub fn rule(degree: usize) -> &'static TriangleRule {
    static RULES: OnceLock<Vec<TriangleRule>> = OnceLock::new();
    let rules = RULES.get_or_init(|| (0..=12).map(TriangleRule::new).collect());
    &rules[degree.min(12)]
}

/// Degree used for polynomial assembly integrands.
pub const ASSEMBLY_DEGREE: usize = 4;
/// Degree used for integrands with non-polynomial powers `|.|^p`.
pub const POWER_DEGREE: usize = 6;

/// Two-point Gauss rule on `[0, 1]`, exact for cubics (used on edges).
pub fn edge_rule() -> ([f64; 2], [f64; 2]) {
    let d = 0.5 / 3f64.sqrt();
    ([0.5 - d, 0.5 + d], [0.5, 0.5])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(n: u32) -> f64 {
        (1..=n).map(|k| k as f64).product()
    }

    #[test]
    fn gauss_legendre_integrates_monomials() {
        for m in 1..8 {
            let (x, w) = gauss_legendre_unit(m);
            for k in 0..(2 * m) {
                let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(k as i32)).sum();
                assert!((q - 1.0 / (k as f64 + 1.0)).abs() < 1e-14, "m={m} k={k}");
            }
        }
    }

    // Exact reference-triangle moments: a! b! c! / (a + b + c + 2)! times 2 (area-normalised).
    #[test]
    fn triangle_rules_are_exact_to_their_degree() {
        for degree in [2, 4, 6, 8] {
            let r = TriangleRule::new(degree);
            for a in 0..=degree as u32 {
                for b in 0..=(degree as u32 - a) {
                    let c = degree as u32 - a - b;
                    let exact = 2.0 * factorial(a) * factorial(b) * factorial(c)
                        / factorial(a + b + c + 2);
                    let q: f64 = r
                        .bary
                        .iter()
                        .zip(&r.weights)
                        .map(|(l, w)| w * l[0].powi(a as i32) * l[1].powi(b as i32) * l[2].powi(c as i32))
                        .sum();
                    assert!((q - exact).abs() < 1e-14, "deg {degree}: {a} {b} {c}");
                }
            }
        }
    }

    #[test]
    fn weights_sum_to_one() {
        for d in 0..=12 {
            let s: f64 = rule(d).weights.iter().sum();
            assert!((s - 1.0).abs() < 1e-14);
        }
    }
}
