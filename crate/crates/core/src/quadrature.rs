//! Quadrature rules on the reference tetrahedron, in barycentric coordinates
//! with weights normalized to sum to one (multiply by the cell volume).

/// A barycentric point and its volume-fraction weight.
pub type TetPoint = ([f64; 4], f64);

/// Four-point rule, exact for polynomials of degree 2.
pub fn tet_degree2() -> Vec<TetPoint> {
    let a = 0.585_410_196_624_968_5;
    let b = 0.138_196_601_125_010_5;
    (0..4)
        .map(|k| {
            let mut l = [b; 4];
            l[k] = a;
            (l, 0.25)
        })
        .collect()
}

/// Keast eleven-point rule, exact for polynomials of degree 4. One weight is
/// negative.
pub fn tet_degree4() -> Vec<TetPoint> {
    let mut pts = vec![([0.25; 4], -0.013_155_555_555_555_6 * 6.0)];
    let (a, b) = (0.071_428_571_428_571_4, 0.785_714_285_714_285_7);
    for k in 0..4 {
        let mut l = [a; 4];
        l[k] = b;
        pts.push((l, 0.007_622_222_222_222_2 * 6.0));
    }
    let (c, d) = (0.399_403_576_166_799_2, 0.100_596_423_833_200_8);
    for (i, j) in [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)] {
        let mut l = [d; 4];
        l[i] = c;
        l[j] = c;
        pts.push((l, 0.024_888_888_888_888_9 * 6.0));
    }
    pts
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(n: u32) -> f64 {
        (1..=n).map(f64::from).product()
    }

    // ∫ λ1^a λ2^b λ3^c λ4^d over a unit-volume tet = 6·a!b!c!d!/(a+b+c+d+3)!
    fn exact(p: [u32; 4]) -> f64 {
        6.0 * p.iter().map(|&k| factorial(k)).product::<f64>()
            / factorial(p.iter().sum::<u32>() + 3)
    }

    fn check(rule: &[TetPoint], degree: u32, tol: f64) {
        for a in 0..=degree {
            for b in 0..=degree - a {
                for c in 0..=degree - a - b {
                    for d in 0..=degree - a - b - c {
                        let p = [a, b, c, d];
                        let q: f64 = rule
                            .iter()
                            .map(|(l, w)| w * (0..4).map(|k| l[k].powi(p[k] as i32)).product::<f64>())
                            .sum();
                        assert!((q - exact(p)).abs() < tol, "{p:?}: {q} vs {}", exact(p));
                    }
                }
            }
        }
    }

    #[test]
    fn degree2_rule_is_exact() {
        check(&tet_degree2(), 2, 1e-15);
    }

    #[test]
    fn degree4_rule_is_exact() {
        check(&tet_degree4(), 4, 1e-13);
    }
}
