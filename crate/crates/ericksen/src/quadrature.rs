//! Fixed symmetric quadrature rules on reference simplices.
//!
//! Both rules are exact for all polynomials of total degree 4 (the tet
//! rule is degree 5), which is what the quartic double-well integrand
//! and the squared phase-field penalty terms require.  Points are given
//! in barycentric coordinates and are strictly interior, so integrands
//! that are only piecewise smooth across mesh faces are never sampled
//! on a face.  Weights are normalized to sum to one; multiply by the
//! cell volume to integrate.

use std::sync::OnceLock;

#[derive(Clone, Debug)]
pub struct Quadrature {
    /// Barycentric coordinates, one entry per vertex of the simplex.
    pub points: Vec<Vec<f64>>,
    /// Weights summing to 1.
    pub weights: Vec<f64>,
}

impl Quadrature {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

fn push_orbit(points: &mut Vec<Vec<f64>>, weights: &mut Vec<f64>, base: &[f64], w: f64) {
    // all distinct permutations of `base`
    let mut perms: Vec<Vec<f64>> = Vec::new();
    let mut idx: Vec<usize> = (0..base.len()).collect();
    permute(&mut idx, 0, &mut |p| {
        let cand: Vec<f64> = p.iter().map(|&k| base[k]).collect();
        if !perms.iter().any(|q| q == &cand) {
            perms.push(cand);
        }
    });
    for p in perms {
        points.push(p);
        weights.push(w);
    }
}

fn permute(idx: &mut Vec<usize>, k: usize, visit: &mut dyn FnMut(&[usize])) {
    if k == idx.len() {
        visit(idx);
        return;
    }
    for i in k..idx.len() {
        idx.swap(k, i);
        permute(idx, k + 1, visit);
        idx.swap(k, i);
    }
}

/// Degree-4 symmetric rule on the triangle (6 points, positive weights).
pub fn triangle_rule() -> &'static Quadrature {
    static RULE: OnceLock<Quadrature> = OnceLock::new();
    RULE.get_or_init(|| {
        let mut points = Vec::new();
        let mut weights = Vec::new();
        let a = 0.44594849091596488;
        let wa = 0.22338158967801147;
        let b = 0.09157621350977074;
        let wb = 0.10995174365532187;
        push_orbit(&mut points, &mut weights, &[a, a, 1.0 - 2.0 * a], wa);
        push_orbit(&mut points, &mut weights, &[b, b, 1.0 - 2.0 * b], wb);
        Quadrature { points, weights }
    })
}

/// Degree-5 symmetric rule on the tetrahedron (15 points, positive weights).
pub fn tetrahedron_rule() -> &'static Quadrature {
    static RULE: OnceLock<Quadrature> = OnceLock::new();
    RULE.get_or_init(|| {
        let mut points = Vec::new();
        let mut weights = Vec::new();
        let w0 = 0.0021976469841244014;
        let a1 = 0.09272517692635789;
        let w1 = 0.07347213869288484;
        let a2 = 0.31099918360227350;
        let w2 = 0.11194509609042122;
        let b = 0.45432496627333178;
        let w3 = 0.042688902313775227;
        push_orbit(&mut points, &mut weights, &[0.25, 0.25, 0.25, 0.25], w0);
        push_orbit(&mut points, &mut weights, &[a1, a1, a1, 1.0 - 3.0 * a1], w1);
        push_orbit(&mut points, &mut weights, &[a2, a2, a2, 1.0 - 3.0 * a2], w2);
        push_orbit(&mut points, &mut weights, &[b, b, 0.5 - b, 0.5 - b], w3);
        Quadrature { points, weights }
    })
}

/// Rule for the simplex of the given spatial dimension (2 or 3).
pub fn simplex_rule(dim: usize) -> &'static Quadrature {
    match dim {
        2 => triangle_rule(),
        3 => tetrahedron_rule(),
        _ => panic!("no quadrature rule for dimension {dim}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(n: usize) -> f64 {
        (1..=n).map(|k| k as f64).product()
    }

    /// Exact integral of a barycentric monomial over the reference
    /// simplex of unit measure: d! * prod(a_i!) / (sum a_i + d)!.
    fn bary_monomial_integral(powers: &[usize], dim: usize) -> f64 {
        let s: usize = powers.iter().sum();
        let num: f64 = factorial(dim) * powers.iter().map(|&a| factorial(a)).product::<f64>();
        num / factorial(s + dim)
    }

    fn check_rule(rule: &Quadrature, dim: usize, degree: usize) -> f64 {
        // enumerate all monomials lam^p with total degree <= degree
        let nv = dim + 1;
        let mut worst: f64 = 0.0;
        let mut powers = vec![0usize; nv];
        loop {
            let total: usize = powers.iter().sum();
            if total <= degree {
                let approx: f64 = rule
                    .points
                    .iter()
                    .zip(&rule.weights)
                    .map(|(p, w)| {
                        w * p
                            .iter()
                            .zip(&powers)
                            .map(|(l, &a)| l.powi(a as i32))
                            .product::<f64>()
                    })
                    .sum();
                let exact = bary_monomial_integral(&powers, dim);
                worst = worst.max((approx - exact).abs());
            }
            // odometer over powers in 0..=degree
            let mut k = 0;
            loop {
                powers[k] += 1;
                if powers[k] <= degree {
                    break;
                }
                powers[k] = 0;
                k += 1;
                if k == nv {
                    return worst;
                }
            }
        }
    }

    #[test]
    fn triangle_exact_degree_4() {
        let r = triangle_rule();
        assert_eq!(r.len(), 6);
        assert!(check_rule(r, 2, 4) < 1e-15, "worst = {}", check_rule(r, 2, 4));
    }

    #[test]
    fn tetrahedron_exact_degree_5() {
        let r = tetrahedron_rule();
        assert_eq!(r.len(), 15);
        assert!(check_rule(r, 3, 5) < 1e-15, "worst = {}", check_rule(r, 3, 5));
    }

    #[test]
    fn weights_positive_points_interior() {
        for dim in [2, 3] {
            let r = simplex_rule(dim);
            assert!((r.weights.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            for (p, w) in r.points.iter().zip(&r.weights) {
                assert!(*w > 0.0);
                assert!(p.iter().all(|&l| l > 1e-8), "point {p:?} not interior");
            }
        }
    }

    #[test]
    fn quartic_barycentric_monomial() {
        // int lam^4 over a simplex of unit measure: 2-D 1/15, 3-D 1/35
        assert!((bary_monomial_integral(&[4, 0, 0], 2) - 1.0 / 15.0).abs() < 1e-15);
        assert!((bary_monomial_integral(&[4, 0, 0, 0], 3) - 1.0 / 35.0).abs() < 1e-15);
        for dim in [2, 3] {
            let r = simplex_rule(dim);
            let approx: f64 = r
                .points
                .iter()
                .zip(&r.weights)
                .map(|(p, w)| w * p[0].powi(4))
                .sum();
            let exact = if dim == 2 { 1.0 / 15.0 } else { 1.0 / 35.0 };
            assert!((approx - exact).abs() < 1e-15);
        }
    }
}
