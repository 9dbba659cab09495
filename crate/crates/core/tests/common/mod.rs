//! Constructions of singular poses shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use wristkin::differential::build_jacobians;
use wristkin::geometry::{angle_diff, rpy_from_rotation};
use wristkin::mechanism::{assemble_pose, elbow_point};
use wristkin::{solve_ik, JointAngles, Leg, Mat3, MechanismParams, Orientation, PoseSolution, Vec3};

/// Joint angles where `‖place(B1, A1)‖` equals the platform radius, found as
/// sign changes or tangent minima of the gap over a scan.
pub fn leg1_candidates(m: &MechanismParams, place: &impl Fn(Vec3, Vec3) -> Vec3) -> Vec<f64> {
    let a1 = m.anchor(Leg::One);
    let gap = |t: f64| place(elbow_point(m, Leg::One, t), a1).norm() - m.platform_radius;
    let n = 3600;
    let at = |k: usize| -PI + k as f64 * 2.0 * PI / n as f64;
    let mut out = Vec::new();
    for k in 0..n {
        let (mut lo, mut hi) = (at(k), at(k + 1));
        if gap(lo).signum() != gap(hi).signum() {
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if gap(mid).signum() == gap(lo).signum() {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            out.push(0.5 * (lo + hi));
        } else if k > 0 && gap(lo).abs() < gap(at(k - 1)).abs() && gap(lo).abs() <= gap(hi).abs() {
            let (mut lo, mut hi) = (at(k - 1), hi);
            for _ in 0..200 {
                let (x1, x2) = (lo + (hi - lo) / 3.0, hi - (hi - lo) / 3.0);
                if gap(x1).abs() < gap(x2).abs() {
                    hi = x2;
                } else {
                    lo = x1;
                }
            }
            let t = 0.5 * (lo + hi);
            if gap(t).abs() < 1e-9 {
                out.push(t);
            }
        }
    }
    out
}

/// Pose with leg 1 at a candidate `θ1` and `C1` placed by `place(B1, A1)`.
/// Leg 2 comes from the inverse model over a roll scan; the pose maximizing
/// `score` is kept so that only the intended singularity is present.
pub fn construct_leg1(
    m: &MechanismParams,
    place: impl Fn(Vec3, Vec3) -> Vec3,
    score: impl Fn(&PoseSolution) -> f64,
) -> Option<PoseSolution> {
    let a1 = m.anchor(Leg::One);
    let mut best: Option<(f64, PoseSolution)> = None;
    for theta1 in leg1_candidates(m, &place) {
        let c1 = place(elbow_point(m, Leg::One, theta1), a1).normalize();
        // C1 = p·R x̂ = p (cos yaw cos φ, sin yaw cos φ, −sin φ)
        let yaw = c1.y.atan2(c1.x);
        let pitch = (-c1.z).clamp(-1.0, 1.0).asin();
        for r in 0..360 {
            let roll = -PI + r as f64 * PI / 180.0;
            let o = Orientation::new(yaw, pitch, roll);
            let Ok(set) = solve_ik(m, &o) else { continue };
            for p in &set.solutions {
                let j = JointAngles::new(theta1, p.joints.theta2, yaw);
                if let Ok(pose) = assemble_pose(m, &j, &o) {
                    let s = score(&pose);
                    if best.as_ref().is_none_or(|(b, _)| s > *b) {
                        best = Some((s, pose));
                    }
                }
            }
        }
    }
    best.map(|(_, p)| p)
}

/// Pose with `B1, B2, C1, C2` and `O` in one plane: the plane through `O, B1, B2`
/// carries `C1` at distance `ρ` from `B1`, and `C2` is `C1` turned a quarter
/// turn in that plane; `θ2` is bisected until `‖C2 − B2‖ = ρ`.
pub fn coplanar_pose(m: &MechanismParams) -> Option<PoseSolution> {
    let (p, rho) = (m.platform_radius, m.rod_length);
    let frame = |t1: f64, t2: f64, s_alpha: f64, sigma: f64| -> Option<(Vec3, Vec3, f64)> {
        let b1 = elbow_point(m, Leg::One, t1);
        let b2 = elbow_point(m, Leg::Two, t2);
        let n = b1.cross(&b2);
        if n.norm() < 1e-6 {
            return None;
        }
        let n = n.normalize();
        let e1 = b1.normalize();
        let e2 = n.cross(&e1);
        let cos_a = (p * p + b1.norm_squared() - rho * rho) / (2.0 * p * b1.norm());
        if cos_a.abs() > 1.0 {
            return None;
        }
        let c1 = (e1 * cos_a + e2 * (s_alpha * (1.0 - cos_a * cos_a).sqrt())) * p;
        let c2 = n.cross(&c1) * sigma;
        Some((c1, c2, (c2 - b2).norm() - rho))
    };
    let home = m.home_orientation();
    let mut best: Option<(f64, PoseSolution)> = None;
    let n = 360;
    let at = |k: usize| -PI + k as f64 * 2.0 * PI / n as f64;
    for i in 0..n {
        let t1 = at(i);
        for (s_alpha, sigma) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
            let g = |t2: f64| frame(t1, t2, s_alpha, sigma).map(|f| f.2);
            for k in 0..n {
                let (Some(g0), Some(g1)) = (g(at(k)), g(at(k + 1))) else {
                    continue;
                };
                if g0.signum() == g1.signum() {
                    continue;
                }
                let (mut lo, mut hi, mut glo) = (at(k), at(k + 1), g0);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    let Some(gm) = g(mid) else { break };
                    if gm.signum() == glo.signum() {
                        lo = mid;
                        glo = gm;
                    } else {
                        hi = mid;
                    }
                }
                let t2 = 0.5 * (lo + hi);
                let Some((c1, c2, _)) = frame(t1, t2, s_alpha, sigma) else {
                    continue;
                };
                let (x, y) = (c1 / p, c2 / p);
                let rot = Mat3::from_columns(&[x, y, x.cross(&y)]);
                let Ok(o) = rpy_from_rotation(&rot) else { continue };
                let Ok(pose) = assemble_pose(m, &JointAngles::new(t1, t2, o.yaw), &o) else {
                    continue;
                };
                // Prefer a pose near home that is otherwise regular.
                let dk = build_jacobians(&pose, m);
                let distance = angle_diff(o.yaw, home.yaw).abs() + o.pitch.abs() + o.roll.abs();
                let s = dk.normalized_det_b.abs() - 1e-3 * distance;
                if best.as_ref().is_none_or(|(b, _)| s > *b) {
                    best = Some((s, pose));
                }
            }
        }
    }
    best.map(|(_, p)| p)
}
