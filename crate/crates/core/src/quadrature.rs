//! Triangle quadrature rules in barycentric coordinates. Weights sum to one
//! and are multiplied by the triangle area by the caller.

pub struct Rule {
    pub points: &'static [[f64; 3]],
    pub weights: &'static [f64],
}

impl Rule {
    pub fn iter(&self) -> impl Iterator<Item = ([f64; 3], f64)> + '_ {
        self.points.iter().copied().zip(self.weights.iter().copied())
    }
}

/// Edge-midpoint rule, exact for polynomials of degree 2.
pub const EDGE_MIDPOINT: Rule = Rule {
    points: &[[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]],
    weights: &[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
};

// Radon's 7-point rule, exact for degree 5.
const SQRT15: f64 = 3.872_983_346_207_417;
const A1: f64 = (6.0 - SQRT15) / 21.0;
const B1: f64 = (9.0 + 2.0 * SQRT15) / 21.0;
const A2: f64 = (6.0 + SQRT15) / 21.0;
const B2: f64 = (9.0 - 2.0 * SQRT15) / 21.0;
const W1: f64 = (155.0 - SQRT15) / 1200.0;
const W2: f64 = (155.0 + SQRT15) / 1200.0;

/// Seven-point rule, exact for polynomials of degree 5.
pub const DEGREE5: Rule = Rule {
    points: &[
        [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
        [A1, A1, B1],
        [A1, B1, A1],
        [B1, A1, A1],
        [A2, A2, B2],
        [A2, B2, A2],
        [B2, A2, A2],
    ],
    weights: &[9.0 / 40.0, W1, W1, W1, W2, W2, W2],
};

#[cfg(test)]
mod tests {
    use super::*;

    // ∫_T λ₀^a λ₁^b λ₂^c dx / |T| = 2 a! b! c! / (a+b+c+2)!
    fn exact_moment(a: u32, b: u32, c: u32) -> f64 {
        let f = |n: u32| (1..=n).map(f64::from).product::<f64>();
        2.0 * f(a) * f(b) * f(c) / f(a + b + c + 2)
    }

    fn check(rule: &Rule, degree: u32) {
        assert!((rule.weights.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        for a in 0..=degree {
            for b in 0..=degree - a {
                for c in 0..=degree - a - b {
                    let q: f64 = rule
                        .iter()
                        .map(|(p, w)| w * p[0].powi(a as i32) * p[1].powi(b as i32) * p[2].powi(c as i32))
                        .sum();
                    assert!((q - exact_moment(a, b, c)).abs() < 1e-15, "{a} {b} {c}");
                }
            }
        }
    }

    #[test]
    fn edge_midpoint_is_degree_two() {
        check(&EDGE_MIDPOINT, 2);
        let cubic: f64 = EDGE_MIDPOINT.iter().map(|(p, w)| w * p[0].powi(3)).sum();
        assert!((cubic - exact_moment(3, 0, 0)).abs() > 1e-3);
    }

    #[test]
    fn radon_is_degree_five() {
        check(&DEGREE5, 5);
    }
}
