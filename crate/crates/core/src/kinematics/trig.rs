//! Roots of `s·sin x + c·cos x = g` through the tangent half-angle `T = tan(x/2)`.
//!
//! The substitution turns the equation into `(g + c)T² − 2sT + (g − c) = 0`.
//! The point `x = π` is invisible to it (`T → ∞`), so it is tested directly
//! whenever the leading coefficient vanishes.

use std::f64::consts::PI;

use crate::geometry::normalize_angle;

/// Relative size below which a coefficient counts as zero.
pub const COEFF_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum TrigRoots {
    /// Negative discriminant.
    None,
    /// Every angle solves the equation.
    Indeterminate,
    /// One or two roots in `(−π, π]`, sorted; a double root is listed twice.
    Roots { roots: Vec<f64>, double: bool },
}

fn polish(s: f64, c: f64, g: f64, x: f64) -> f64 {
    let (sx, cx) = x.sin_cos();
    let f = s * sx + c * cx - g;
    let df = s * cx - c * sx;
    if df.abs() > COEFF_EPS * s.hypot(c) {
        normalize_angle(x - f / df)
    } else {
        x
    }
}

/// Solves `s·sin x + c·cos x = g`.
pub fn solve_sin_cos(s: f64, c: f64, g: f64) -> TrigRoots {
    solve_sin_cos_scaled(s, c, g, 0.0)
}

/// As [`solve_sin_cos`], with coefficients judged against `reference`, the
/// magnitude of the terms they were computed from. Cancellation can leave
/// coefficients of rounding size that are meaningless on their own.
pub fn solve_sin_cos_scaled(s: f64, c: f64, g: f64, reference: f64) -> TrigRoots {
    let scale = s.hypot(c);
    let size = scale.max(g.abs()).max(reference).max(f64::MIN_POSITIVE);
    if scale <= COEFF_EPS * size {
        return if g.abs() <= COEFF_EPS * size {
            TrigRoots::Indeterminate
        } else {
            TrigRoots::None
        };
    }
    // Quarter discriminant of the quadratic in T.
    let disc = scale * scale - g * g;
    let tol = COEFF_EPS * scale * scale;
    if disc < -tol {
        return TrigRoots::None;
    }
    let qa = g + c;
    let qb = -2.0 * s;
    let qc = g - c;

    let mut double = false;
    let mut roots = if disc.abs() <= tol {
        double = true;
        // Tangency: the single root sits where the gradient of the left side is parallel to (s, c).
        let x = if qa.abs() <= COEFF_EPS * scale {
            PI
        } else {
            2.0 * (s / qa).atan()
        };
        vec![x, x]
    } else if qa.abs() <= COEFF_EPS * scale {
        // x = π solves the equation; the other root comes from the linear remainder.
        let other = 2.0 * (qc / (-qb)).atan();
        vec![PI, other]
    } else {
        let sq = (4.0 * disc).sqrt();
        let q = -0.5 * (qb + qb.signum() * sq);
        let (t1, t2) = if q == 0.0 { (0.0, 0.0) } else { (q / qa, qc / q) };
        vec![2.0 * t1.atan(), 2.0 * t2.atan()]
    };
    if !double {
        for x in roots.iter_mut() {
            *x = polish(s, c, g, *x);
        }
    }
    for x in roots.iter_mut() {
        *x = normalize_angle(*x);
    }
    roots.sort_by(f64::total_cmp);
    TrigRoots::Roots { roots, double }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn residual(s: f64, c: f64, g: f64, x: f64) -> f64 {
        s * x.sin() + c * x.cos() - g
    }

    #[test]
    fn two_roots() {
        // sin x + cos x = 1 at x = 0 and x = π/2
        match solve_sin_cos(1.0, 1.0, 1.0) {
            TrigRoots::Roots { roots, double } => {
                assert!(!double);
                assert!((roots[0] - 0.0).abs() < 1e-15);
                assert!((roots[1] - PI / 2.0).abs() < 1e-15);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn root_at_pi_is_found() {
        // cos x = -1 + 0.5 sin x has x = π and one more root
        match solve_sin_cos(-0.5, 1.0, -1.0) {
            TrigRoots::Roots { roots, .. } => {
                assert!(roots.contains(&PI));
                for x in roots {
                    assert!(residual(-0.5, 1.0, -1.0, x).abs() < 1e-14);
                }
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn tangency_and_empty() {
        let r = solve_sin_cos(1.0, 1.0, 2f64.sqrt());
        match r {
            TrigRoots::Roots { roots, double } => {
                assert!(double);
                assert!((roots[0] - PI / 4.0).abs() < 1e-7);
                assert_eq!(roots[0], roots[1]);
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(solve_sin_cos(1.0, 1.0, 1.5), TrigRoots::None);
        assert_eq!(solve_sin_cos(0.0, 0.0, 0.0), TrigRoots::Indeterminate);
        assert_eq!(solve_sin_cos(0.0, 0.0, 1.0), TrigRoots::None);
        assert_eq!(solve_sin_cos_scaled(1e-17, 2e-17, 1e-17, 1.0), TrigRoots::Indeterminate);
    }

    proptest! {
        #[test]
        fn roots_satisfy_equation(x1 in -PI..PI, s in -3.0f64..3.0, c in -3.0f64..3.0) {
            prop_assume!(s.hypot(c) > 1e-3);
            // choose g so that x1 is a root
            let g = s * x1.sin() + c * x1.cos();
            match solve_sin_cos(s, c, g) {
                TrigRoots::Roots { roots, .. } => {
                    for &x in &roots {
                        prop_assert!(residual(s, c, g, x).abs() < 1e-12 * (1.0 + s.hypot(c)));
                    }
                    let hit = roots.iter().any(|&x| normalize_angle(x - x1).abs() < 1e-5);
                    prop_assert!(hit);
                }
                other => prop_assert!(false, "{other:?}"),
            }
        }
    }
}
