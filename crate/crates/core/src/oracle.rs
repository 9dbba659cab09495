//! Brute-force root finders on the raw rod residuals.
//!
//! Nothing here uses the closed-form solution formulas; only the residual
//! `‖C_i − B_i‖² − ρ²` is evaluated, by dense sampling and refinement.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::geometry::{angle_diff, Orientation, Vec3};
use crate::mechanism::{link_frame, platform_points, JointAngles, Leg, MechanismParams};

pub const SAMPLES_1D: usize = 1_000_000;
pub const GRID_2D: usize = 2000;
pub const BISECTION_TOLERANCE: f64 = 1e-12;
pub const ROOT_RESIDUAL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RootSet1D {
    /// Sorted roots in `(−π, π]`.
    pub roots: Vec<f64>,
    /// Per root: true when it is a merged or tangent double root.
    pub double: Vec<bool>,
    pub tolerance: f64,
}

impl RootSet1D {
    /// Roots with double roots listed twice, as solvers that count multiplicity report them.
    pub fn with_multiplicity(&self) -> Vec<f64> {
        let mut v = Vec::new();
        for (r, d) in self.roots.iter().zip(&self.double) {
            v.push(*r);
            if *d {
                v.push(*r);
            }
        }
        v
    }
}

/// Leg residual as a function of the joint angle with the platform point fixed.
struct LegResidual {
    d: Vec3,
    u: Vec3,
    v: Vec3,
    l: f64,
    rho2: f64,
}

impl LegResidual {
    fn new(m: &MechanismParams, leg: Leg, o: &Orientation) -> Self {
        let (c1, c2) = platform_points(m, o);
        let c = if leg == Leg::One { c1 } else { c2 };
        let (u, v) = link_frame(m, leg);
        LegResidual {
            d: c - m.anchor(leg),
            u,
            v,
            l: m.link_length,
            rho2: m.rod_length * m.rod_length,
        }
    }

    fn eval(&self, theta: f64) -> f64 {
        let (s, c) = theta.sin_cos();
        (self.d - (self.u * c + self.v * s) * self.l).norm_squared() - self.rho2
    }
}

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let mut flo = f(lo);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm < 0.0) == (flo < 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Golden-section minimum of `|f|` on `[lo, hi]`.
fn golden_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (f(x1).abs(), f(x2).abs());
    while hi - lo > tol {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1).abs();
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2).abs();
        }
    }
    0.5 * (lo + hi)
}

/// All roots of leg `leg`'s residual over `θ ∈ (−π, π]` by sampling and bisection.
///
/// Sign changes are bisected to [`BISECTION_TOLERANCE`]. Local minima of `|e|`
/// without a sign change are refined and kept as double roots when the residual
/// vanishes there. Roots closer than the sample pitch are merged.
pub fn bisect_leg_residual(m: &MechanismParams, leg: Leg, o: &Orientation) -> RootSet1D {
    bisect_leg_residual_with(m, leg, o, SAMPLES_1D)
}

pub fn bisect_leg_residual_with(m: &MechanismParams, leg: Leg, o: &Orientation, samples: usize) -> RootSet1D {
    let f = LegResidual::new(m, leg, o);
    let e = |x: f64| f.eval(x);
    let pitch = 2.0 * PI / samples as f64;
    // One sample of overlap on each side closes the periodic window.
    let theta = |j: isize| -PI + j as f64 * pitch;
    let values: Vec<f64> = (-1..=samples as isize + 1).map(|j| e(theta(j))).collect();
    let at = |j: isize| values[(j + 1) as usize];

    let mut found: Vec<(f64, bool)> = Vec::new();
    for j in 0..samples as isize {
        let (a, b) = (at(j), at(j + 1));
        if a == 0.0 {
            found.push((theta(j), false));
        } else if (a < 0.0) != (b < 0.0) && b != 0.0 {
            found.push((bisect(e, theta(j), theta(j + 1), BISECTION_TOLERANCE), false));
        }
        let (prev, next) = (at(j - 1), at(j + 1));
        let touches = a.abs() <= prev.abs() && a.abs() <= next.abs();
        let same_sign = (prev < 0.0) == (a < 0.0) && (a < 0.0) == (next < 0.0);
        if touches && same_sign {
            let x = golden_min(e, theta(j - 1), theta(j + 1), BISECTION_TOLERANCE);
            if e(x).abs() < ROOT_RESIDUAL {
                found.push((x, true));
            }
        }
    }
    for r in found.iter_mut() {
        r.0 = crate::geometry::normalize_angle(r.0);
    }
    found.sort_by(|a, b| a.0.total_cmp(&b.0));

    let merge = 2.0 * pitch;
    let mut roots: Vec<f64> = Vec::new();
    let mut double: Vec<bool> = Vec::new();
    for (x, d) in found {
        if let Some(last) = roots.last_mut() {
            if angle_diff(x, *last).abs() < merge {
                *last = 0.5 * (*last + x);
                let k = double.len() - 1;
                double[k] = true;
                continue;
            }
        }
        roots.push(x);
        double.push(d);
    }
    // Wrap-around duplicate at ±π.
    if roots.len() > 1 && angle_diff(roots[0], roots[roots.len() - 1]).abs() < merge {
        roots.pop();
        double.pop();
        double[0] = true;
    }
    RootSet1D {
        roots,
        double,
        tolerance: BISECTION_TOLERANCE,
    }
}

/// Both rod residuals as functions of (pitch, roll) for fixed joints.
struct FkResidual {
    b1: Vec3,
    b2: Vec3,
    p: f64,
    rho2: f64,
    s3: f64,
    c3: f64,
}

impl FkResidual {
    fn new(m: &MechanismParams, j: &JointAngles) -> Self {
        let (u1, v1) = link_frame(m, Leg::One);
        let (u2, v2) = link_frame(m, Leg::Two);
        let elbow = |a: Vec3, u: Vec3, v: Vec3, t: f64| a + (u * t.cos() + v * t.sin()) * m.link_length;
        let (s3, c3) = j.theta3.sin_cos();
        FkResidual {
            b1: elbow(m.anchor(Leg::One), u1, v1, j.theta1),
            b2: elbow(m.anchor(Leg::Two), u2, v2, j.theta2),
            p: m.platform_radius,
            rho2: m.rod_length * m.rod_length,
            s3,
            c3,
        }
    }

    // Columns x and y of Rz(θ3) Ry(φ) Rx(ψ), written out from the sines and cosines.
    fn eval_sc(&self, sp: f64, cp: f64, sr: f64, cr: f64) -> (f64, f64) {
        let (s3, c3) = (self.s3, self.c3);
        let c1 = Vec3::new(c3 * cp, s3 * cp, -sp) * self.p;
        let c2 = Vec3::new(c3 * sp * sr - s3 * cr, s3 * sp * sr + c3 * cr, cp * sr) * self.p;
        (
            (c1 - self.b1).norm_squared() - self.rho2,
            (c2 - self.b2).norm_squared() - self.rho2,
        )
    }

    fn eval(&self, pitch: f64, roll: f64) -> (f64, f64) {
        let (sp, cp) = pitch.sin_cos();
        let (sr, cr) = roll.sin_cos();
        self.eval_sc(sp, cp, sr, cr)
    }
}

fn newton_2d(f: &FkResidual, mut x: [f64; 2]) -> Option<[f64; 2]> {
    let h = 1e-7;
    for _ in 0..40 {
        let (e1, e2) = f.eval(x[0], x[1]);
        if e1.abs().max(e2.abs()) < 1e-14 {
            break;
        }
        let (a1, a2) = f.eval(x[0] + h, x[1]);
        let (b1, b2) = f.eval(x[0] - h, x[1]);
        let (c1, c2) = f.eval(x[0], x[1] + h);
        let (d1, d2) = f.eval(x[0], x[1] - h);
        let j = [
            [(a1 - b1) / (2.0 * h), (c1 - d1) / (2.0 * h)],
            [(a2 - b2) / (2.0 * h), (c2 - d2) / (2.0 * h)],
        ];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        if det.abs() < 1e-14 {
            return None;
        }
        let dx = (e1 * j[1][1] - e2 * j[0][1]) / det;
        let dy = (j[0][0] * e2 - j[1][0] * e1) / det;
        x = [x[0] - dx.clamp(-0.1, 0.1), x[1] - dy.clamp(-0.1, 0.1)];
    }
    let (e1, e2) = f.eval(x[0], x[1]);
    (e1.abs().max(e2.abs()) < ROOT_RESIDUAL).then(|| x.map(crate::geometry::normalize_angle))
}

/// Simultaneous roots `(pitch, roll)` of both rod residuals, yaw fixed to `θ3`.
pub fn grid_fk_roots(m: &MechanismParams, j: &JointAngles) -> Vec<(f64, f64)> {
    grid_fk_roots_with(m, j, GRID_2D)
}

/// Scans an `n × n` periodic grid for cells where both residuals change sign,
/// then refines each candidate with Newton's method.
pub fn grid_fk_roots_with(m: &MechanismParams, j: &JointAngles, n: usize) -> Vec<(f64, f64)> {
    let f = FkResidual::new(m, j);
    let step = 2.0 * PI / n as f64;
    let angle = |i: usize| -PI + (i as f64 + 0.5) * step;
    let table: Vec<(f64, f64)> = (0..n).map(|i| angle(i).sin_cos()).collect();

    // e1 depends only on pitch.
    let e1: Vec<f64> = table.iter().map(|&(sp, cp)| f.eval_sc(sp, cp, 0.0, 1.0).0).collect();
    let mut roots: Vec<(f64, f64)> = Vec::new();
    for a in 0..n {
        let a1 = (a + 1) % n;
        let e1_changes = (e1[a] <= 0.0) != (e1[a1] <= 0.0) || e1[a] == 0.0;
        if !e1_changes {
            continue;
        }
        let (sa, ca) = table[a];
        let (sb, cb) = table[a1];
        let row_a: Vec<f64> = table.iter().map(|&(sr, cr)| f.eval_sc(sa, ca, sr, cr).1).collect();
        let row_b: Vec<f64> = table.iter().map(|&(sr, cr)| f.eval_sc(sb, cb, sr, cr).1).collect();
        for b in 0..n {
            let b1 = (b + 1) % n;
            let corners = [row_a[b], row_a[b1], row_b[b], row_b[b1]];
            let pos = corners.iter().any(|v| *v >= 0.0);
            let neg = corners.iter().any(|v| *v <= 0.0);
            if !(pos && neg) {
                continue;
            }
            let seed = [angle(a) + 0.5 * step, angle(b) + 0.5 * step];
            if let Some(x) = newton_2d(&f, seed) {
                let dup = roots
                    .iter()
                    .any(|r| angle_diff(r.0, x[0]).abs() < 1e-7 && angle_diff(r.1, x[1]).abs() < 1e-7);
                if !dup {
                    roots.push((x[0], x[1]));
                }
            }
        }
    }
    roots.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    roots
}

/// Distance between angle tuples: largest wrapped component difference.
pub fn angle_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| angle_diff(*x, *y).abs())
        .fold(0.0, f64::max)
}

/// Hausdorff distance between two sets of angle tuples; `+∞` if exactly one is empty.
pub fn hausdorff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    match (a.is_empty(), b.is_empty()) {
        (true, true) => return 0.0,
        (true, false) | (false, true) => return f64::INFINITY,
        _ => {}
    }
    let directed = |x: &[Vec<f64>], y: &[Vec<f64>]| {
        x.iter()
            .map(|p| y.iter().map(|q| angle_distance(p, q)).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    directed(a, b).max(directed(b, a))
}
