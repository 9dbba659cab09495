//! Velocity model `A ω = B q̇`, singularity classification, conditioning and isotropy.
//!
//! Rows 1 and 2 of `A` are `(p_i × r_i)ᵀ` and `B` is `diag((l_i × r_i)·i_i, 1)`,
//! where `p_i` is the platform point, `l_i` the link and `r_i` the rod of leg `i`.
//! Row 3 of the legacy inverse Jacobian is `(0, 0, 1)`, which equates the yaw
//! actuator rate with `ω_z`. The yaw/pitch/roll rate map gives instead
//! `θ̇3 = ω_z + tan φ (cos θ3 ω_x + sin θ3 ω_y)`; both rows are exposed.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    angle_diff, angular_velocity_to_rpy_rates, max_abs, rot_axis, rpy_from_rotation, Mat3, Orientation, Vec3,
};
use crate::kinematics::{solve_ik, track_branch, WORKING_ELBOW_SIGNS};
use crate::mechanism::{Leg, MechanismParams, PoseSolution};

pub const DEFAULT_THRESHOLD: f64 = 1e-6;

/// Tolerance for isotropy residuals.
pub const ISOTROPY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffKinematics {
    pub a: Mat3,
    pub b: Mat3,
    /// `B⁻¹A`; `None` at a serial singularity.
    pub jinv_paper: Option<Mat3>,
    /// `B⁻¹A` with the exact yaw-actuator row; `None` at a serial singularity or gimbal lock.
    pub jinv_exact: Option<Mat3>,
    pub det_a: f64,
    pub det_b: f64,
    pub normalized_det_a: f64,
    pub normalized_det_b: f64,
    pub kappa_a: f64,
    pub kappa_paper: f64,
    pub kappa_exact: f64,
    /// `(l_i × r_i)·i_i / (‖l_i‖‖r_i‖)` per leg.
    pub serial_margins: [f64; 2],
}

impl DiffKinematics {
    pub fn inverse_paper(&self) -> Result<&Mat3> {
        self.jinv_paper.as_ref().ok_or_else(|| self.serial_error())
    }

    pub fn inverse_exact(&self) -> Result<&Mat3> {
        self.jinv_exact.as_ref().ok_or_else(|| self.serial_error())
    }

    fn serial_error(&self) -> Error {
        let leg = if self.serial_margins[0].abs() <= self.serial_margins[1].abs() {
            1
        } else {
            2
        };
        Error::SerialSingular {
            leg,
            value: self.b[(leg - 1, leg - 1)],
        }
    }

    /// Platform angular velocity produced by actuator rates, solving `A ω = B q̇`.
    pub fn angular_velocity(&self, qdot: &Vec3) -> Option<Vec3> {
        self.a.lu().solve(&(self.b * qdot))
    }
}

fn serial_term(pose: &PoseSolution, m: &MechanismParams, leg: Leg) -> f64 {
    pose.link(leg).cross(&pose.rod(leg)).dot(&m.axis(leg))
}

fn normalized_serial(pose: &PoseSolution, m: &MechanismParams, leg: Leg) -> f64 {
    let l = pose.link(leg);
    let r = pose.rod(leg);
    serial_term(pose, m, leg) / (l.norm() * r.norm())
}

/// `det A / (‖p1‖‖r1‖‖p2‖‖r2‖)`, zero for aligned and coplanar legs alike.
pub fn normalized_det_a(pose: &PoseSolution) -> f64 {
    let scale: f64 = Leg::BOTH
        .iter()
        .map(|&leg| pose.platform(leg).norm() * pose.rod(leg).norm())
        .product();
    velocity_matrix_a(pose).determinant() / scale
}

/// Product of the per-leg serial margins.
pub fn normalized_det_b(pose: &PoseSolution, m: &MechanismParams) -> f64 {
    normalized_serial(pose, m, Leg::One) * normalized_serial(pose, m, Leg::Two)
}

fn velocity_matrix_a(pose: &PoseSolution) -> Mat3 {
    let n1 = pose.c1.cross(&pose.rod(Leg::One));
    let n2 = pose.c2.cross(&pose.rod(Leg::Two));
    Mat3::new(n1.x, n1.y, n1.z, n2.x, n2.y, n2.z, 0.0, 0.0, 1.0)
}

/// Exact yaw-actuator row `(tan φ cos θ3, tan φ sin θ3, 1)`.
fn exact_yaw_row(o: &Orientation) -> Result<[f64; 3]> {
    let mut row = [0.0; 3];
    for (k, e) in [Vec3::x(), Vec3::y(), Vec3::z()].iter().enumerate() {
        row[k] = angular_velocity_to_rpy_rates(o, e)?.yaw;
    }
    Ok(row)
}

pub fn build_jacobians(pose: &PoseSolution, m: &MechanismParams) -> DiffKinematics {
    build_jacobians_with_threshold(pose, m, DEFAULT_THRESHOLD)
}

/// Inverse Jacobians are withheld when a normalized serial margin is below `threshold`.
pub fn build_jacobians_with_threshold(pose: &PoseSolution, m: &MechanismParams, threshold: f64) -> DiffKinematics {
    let a = velocity_matrix_a(pose);
    let b11 = serial_term(pose, m, Leg::One);
    let b22 = serial_term(pose, m, Leg::Two);
    let b = Mat3::from_diagonal(&Vec3::new(b11, b22, 1.0));
    let serial_margins = [
        normalized_serial(pose, m, Leg::One),
        normalized_serial(pose, m, Leg::Two),
    ];
    let invertible = serial_margins.iter().all(|v| v.abs() >= threshold);

    let jinv_paper = invertible.then(|| {
        let mut j = a;
        j.row_mut(0).scale_mut(1.0 / b11);
        j.row_mut(1).scale_mut(1.0 / b22);
        j
    });
    let jinv_exact = match (jinv_paper, exact_yaw_row(&pose.orientation)) {
        (Some(mut j), Ok(row)) => {
            for (k, v) in row.iter().enumerate() {
                j[(2, k)] = *v;
            }
            Some(j)
        }
        _ => None,
    };
    let kappa = |j: &Option<Mat3>| j.as_ref().map_or(f64::INFINITY, condition_number);
    DiffKinematics {
        det_a: a.determinant(),
        det_b: b11 * b22,
        normalized_det_a: normalized_det_a(pose),
        normalized_det_b: serial_margins[0] * serial_margins[1],
        kappa_a: condition_number(&a),
        kappa_paper: kappa(&jinv_paper),
        kappa_exact: kappa(&jinv_exact),
        a,
        b,
        jinv_paper,
        jinv_exact,
        serial_margins,
    }
}

/// Eigenvalues of a symmetric 3×3 matrix in descending order.
fn symmetric_eigenvalues(g: &Mat3) -> [f64; 3] {
    let p1 = g[(0, 1)].powi(2) + g[(0, 2)].powi(2) + g[(1, 2)].powi(2);
    let q = g.trace() / 3.0;
    if p1 == 0.0 {
        let mut d = [g[(0, 0)], g[(1, 1)], g[(2, 2)]];
        d.sort_by(|x, y| y.total_cmp(x));
        return d;
    }
    let p2 = (g[(0, 0)] - q).powi(2) + (g[(1, 1)] - q).powi(2) + (g[(2, 2)] - q).powi(2) + 2.0 * p1;
    let p = (p2 / 6.0).sqrt();
    let bm = (g - Mat3::identity() * q) / p;
    let r = (bm.determinant() / 2.0).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;
    let e1 = q + 2.0 * p * phi.cos();
    let e3 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
    let e2 = 3.0 * q - e1 - e3;
    [e1, e2, e3]
}

/// 2-norm condition number `σ_max/σ_min`; `+∞` when `σ_min < 1e-300`.
pub fn condition_number(mat: &Mat3) -> f64 {
    let g = mat.transpose() * mat;
    let [e1, e2, _] = symmetric_eigenvalues(&g);
    if !(e1 > 0.0 && e2 > 0.0) {
        return f64::INFINITY;
    }
    // The smallest eigenvalue loses accuracy to cancellation; the determinant does not.
    let det = mat.determinant();
    let sigma_min = (det * det / (e1 * e2)).sqrt();
    if sigma_min.is_nan() || sigma_min < 1e-300 {
        return f64::INFINITY;
    }
    e1.sqrt() / sigma_min
}

/// Central finite-difference inverse Jacobian.
///
/// Column `k` perturbs the platform by a rotation of `±h` about fixed axis `k`
/// and differences the joint angles of the inverse solution on the same branch.
pub fn fd_jacobian(m: &MechanismParams, pose: &PoseSolution, h: f64) -> Result<Mat3> {
    if !(1e-8..=1e-4).contains(&h) {
        return Err(Error::InvalidInput(format!("step {h:e} outside [1e-8, 1e-4]")));
    }
    let r = pose.orientation.rotation();
    let mut jac = Mat3::zeros();
    for (k, axis) in [Vec3::x(), Vec3::y(), Vec3::z()].iter().enumerate() {
        let mut joints = [[0.0; 3]; 2];
        for (slot, step) in [h, -h].into_iter().enumerate() {
            let o = rpy_from_rotation(&(rot_axis(axis, step) * r))?;
            let set = solve_ik(m, &o).map_err(|_| Error::BranchJump { axis: k })?;
            let moved = track_branch(&set, pose).ok_or(Error::BranchJump { axis: k })?;
            let jump = (0..3)
                .map(|i| angle_diff(moved.joints.to_array()[i], pose.joints.to_array()[i]).abs())
                .fold(0.0, f64::max);
            // A genuine neighbour moves by O(h); anything far larger is the other root.
            if jump > 1e3 * h.max(1e-6) {
                return Err(Error::BranchJump { axis: k });
            }
            joints[slot] = moved.joints.to_array();
        }
        for i in 0..3 {
            jac[(i, k)] = angle_diff(joints[0][i], joints[1][i]) / (2.0 * h);
        }
    }
    Ok(jac)
}

/// Geometric sub-case of a serial singularity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SerialPair {
    LinkRod,
    RodAxis,
    LinkAxis,
    Coplanar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SingularityKind {
    NonSingular,
    /// `B1, B2, C1, C2` and `O` coplanar.
    ParallelCoplanar,
    /// `B_i, C_i` and `O` aligned.
    ParallelAligned {
        leg: usize,
    },
    /// Rows `p_i × r_i` and the yaw row are coplanar without the legs being coplanar.
    ParallelCoaxial,
    SerialAligned {
        leg: usize,
        pair: SerialPair,
    },
}

impl fmt::Display for SingularityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SingularityKind::NonSingular => write!(f, "non-singular"),
            SingularityKind::ParallelCoplanar => write!(f, "parallel-coplanar"),
            SingularityKind::ParallelAligned { leg } => write!(f, "parallel-aligned-{leg}"),
            SingularityKind::ParallelCoaxial => write!(f, "parallel-coaxial"),
            SingularityKind::SerialAligned { leg, pair } => {
                let pair = match pair {
                    SerialPair::LinkRod => "l-r",
                    SerialPair::RodAxis => "r-i",
                    SerialPair::LinkAxis => "l-i",
                    SerialPair::Coplanar => "coplanar",
                };
                write!(f, "serial-{leg}-{pair}")
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SingularityReport {
    pub kind: SingularityKind,
    /// `min(|normalized det A|, |normalized det B|)`.
    pub margin: f64,
    pub normalized_det_a: f64,
    pub normalized_det_b: f64,
}

impl SingularityReport {
    pub fn is_singular(&self) -> bool {
        self.kind != SingularityKind::NonSingular
    }
}

fn parallelism(u: &Vec3, v: &Vec3) -> f64 {
    let scale = u.norm() * v.norm();
    if scale == 0.0 {
        0.0
    } else {
        u.cross(v).norm() / scale
    }
}

/// Parallel singularities are tested before serial ones.
pub fn classify_singularity(pose: &PoseSolution, m: &MechanismParams, threshold: f64) -> SingularityReport {
    let det_a = normalized_det_a(pose);
    let det_b = normalized_det_b(pose, m);
    let margin = det_a.abs().min(det_b.abs());
    // Sub-cases are decided at the looser tolerance √threshold, since the
    // determinant vanishes faster than the geometric quantities near a corner.
    let loose = threshold.sqrt();
    let kind = if det_a.abs() < threshold {
        let aligned: Vec<f64> = Leg::BOTH
            .iter()
            .map(|&leg| parallelism(&pose.platform(leg), &pose.rod(leg)))
            .collect();
        let n1 = pose.c1.cross(&pose.rod(Leg::One));
        let n2 = pose.c2.cross(&pose.rod(Leg::Two));
        let scale: f64 = Leg::BOTH
            .iter()
            .map(|&leg| pose.platform(leg).norm() * pose.rod(leg).norm())
            .product();
        if aligned[0] < loose && aligned[0] <= aligned[1] {
            SingularityKind::ParallelAligned { leg: 1 }
        } else if aligned[1] < loose {
            SingularityKind::ParallelAligned { leg: 2 }
        } else if n1.cross(&n2).norm() / scale < loose {
            SingularityKind::ParallelCoplanar
        } else {
            SingularityKind::ParallelCoaxial
        }
    } else if det_b.abs() < threshold {
        let margins = [
            normalized_serial(pose, m, Leg::One),
            normalized_serial(pose, m, Leg::Two),
        ];
        let leg = if margins[0].abs() <= margins[1].abs() {
            Leg::One
        } else {
            Leg::Two
        };
        let l = pose.link(leg);
        let r = pose.rod(leg);
        let i = m.axis(leg);
        let pair = if parallelism(&l, &r) < loose {
            SerialPair::LinkRod
        } else if parallelism(&r, &i) < loose {
            SerialPair::RodAxis
        } else if parallelism(&l, &i) < loose {
            SerialPair::LinkAxis
        } else {
            SerialPair::Coplanar
        };
        SingularityKind::SerialAligned {
            leg: leg.number(),
            pair,
        }
    } else {
        SingularityKind::NonSingular
    };
    SingularityReport {
        kind,
        margin,
        normalized_det_a: det_a,
        normalized_det_b: det_b,
    }
}

/// Magnitudes of the isotropy conditions at a pose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsotropyReport {
    /// `|p_i·r_i|`
    pub platform_rod_dot: [f64; 2],
    /// `|(p1 × r1)·(p2 × r2)|`
    pub row_dot: f64,
    /// `|‖p_i × r_i‖ − 1|`
    pub row_norm: [f64; 2],
    /// `|(p_i × r_i)·ẑ|`, orthogonality to the yaw row.
    pub row_yaw_dot: [f64; 2],
    /// `|l_i·r_i|`
    pub link_rod_dot: [f64; 2],
    /// `|l_i·i_i|`
    pub link_axis_dot: [f64; 2],
    /// `|(l_i × r_i)·i_i − 1|`
    pub serial_unit: [f64; 2],
    pub a_identity_distance: f64,
    pub b_identity_distance: f64,
    pub kappa_a: f64,
}

impl IsotropyReport {
    pub fn a_residuals(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(7);
        v.extend(self.platform_rod_dot);
        v.push(self.row_dot);
        v.extend(self.row_norm);
        v.extend(self.row_yaw_dot);
        v
    }

    pub fn b_residuals(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(6);
        v.extend(self.link_rod_dot);
        v.extend(self.link_axis_dot);
        v.extend(self.serial_unit);
        v
    }

    pub fn max_a_residual(&self) -> f64 {
        self.a_residuals().into_iter().fold(0.0, f64::max)
    }

    pub fn max_b_residual(&self) -> f64 {
        self.b_residuals().into_iter().fold(0.0, f64::max)
    }

    pub fn is_a_isotropic(&self, tol: f64) -> bool {
        self.max_a_residual() < tol && self.kappa_a - 1.0 < tol
    }

    pub fn is_isotropic(&self, tol: f64) -> bool {
        self.is_a_isotropic(tol) && self.max_b_residual() < tol
    }
}

pub fn isotropy_report(pose: &PoseSolution, m: &MechanismParams) -> IsotropyReport {
    let a = velocity_matrix_a(pose);
    let n = [a.row(0).transpose(), a.row(1).transpose()];
    let per_leg = |f: &dyn Fn(Leg) -> f64| [f(Leg::One), f(Leg::Two)];
    let b = Mat3::from_diagonal(&Vec3::new(
        serial_term(pose, m, Leg::One),
        serial_term(pose, m, Leg::Two),
        1.0,
    ));
    IsotropyReport {
        platform_rod_dot: per_leg(&|leg| pose.platform(leg).dot(&pose.rod(leg)).abs()),
        row_dot: n[0].dot(&n[1]).abs(),
        row_norm: per_leg(&|leg| (n[leg.index()].norm() - 1.0).abs()),
        row_yaw_dot: per_leg(&|leg| n[leg.index()].z.abs()),
        link_rod_dot: per_leg(&|leg| pose.link(leg).dot(&pose.rod(leg)).abs()),
        link_axis_dot: per_leg(&|leg| pose.link(leg).dot(&m.axis(leg)).abs()),
        serial_unit: per_leg(&|leg| (serial_term(pose, m, leg) - 1.0).abs()),
        a_identity_distance: max_abs(&(a - Mat3::identity())),
        b_identity_distance: max_abs(&(b - Mat3::identity())),
        kappa_a: condition_number(&a),
    }
}

/// Which conditions an isotropic search enforced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IsotropyMode {
    /// Both `A` and `B` isotropic.
    Full,
    /// Only `A` isotropic.
    AOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsotropicConfig {
    pub pose: PoseSolution,
    pub mode: IsotropyMode,
    /// Largest residual of the enforced conditions.
    pub residual: f64,
}

const ELBOW_KEYS: [[i8; 2]; 4] = [
    WORKING_ELBOW_SIGNS,
    [WORKING_ELBOW_SIGNS[0], -WORKING_ELBOW_SIGNS[1]],
    [-WORKING_ELBOW_SIGNS[0], WORKING_ELBOW_SIGNS[1]],
    [-WORKING_ELBOW_SIGNS[0], -WORKING_ELBOW_SIGNS[1]],
];

fn pose_on_branch(m: &MechanismParams, o: &Orientation, key: [i8; 2]) -> Option<PoseSolution> {
    let set = solve_ik(m, o).ok()?;
    set.solutions.into_iter().find(|p| p.branch.elbow == key)
}

/// Signed isotropy conditions; their magnitudes are the report fields.
fn signed_residuals(pose: &PoseSolution, m: &MechanismParams, mode: IsotropyMode) -> Vec<f64> {
    let a = velocity_matrix_a(pose);
    let n = [a.row(0).transpose(), a.row(1).transpose()];
    let mut r = Vec::with_capacity(13);
    for leg in Leg::BOTH {
        r.push(pose.platform(leg).dot(&pose.rod(leg)));
    }
    r.push(n[0].dot(&n[1]));
    for v in &n {
        r.push(v.norm() - 1.0);
        r.push(v.z);
    }
    if mode == IsotropyMode::Full {
        for leg in Leg::BOTH {
            r.push(pose.link(leg).dot(&pose.rod(leg)));
            r.push(pose.link(leg).dot(&m.axis(leg)));
            r.push(serial_term(pose, m, leg) - 1.0);
        }
    }
    r
}

fn residual_vector(m: &MechanismParams, x: &Vec3, key: [i8; 2], mode: IsotropyMode) -> Option<Vec<f64>> {
    let o = Orientation::new(x[0], x[1], x[2]);
    let pose = pose_on_branch(m, &o, key)?;
    Some(signed_residuals(&pose, m, mode))
}

fn max_magnitude(r: &[f64]) -> f64 {
    r.iter().fold(0.0, |a: f64, v| a.max(v.abs()))
}

/// Levenberg–Marquardt on the squared residuals over (yaw, pitch, roll).
fn minimize(m: &MechanismParams, start: Vec3, key: [i8; 2], mode: IsotropyMode) -> Option<(Vec3, f64)> {
    let cost = |r: &[f64]| r.iter().map(|v| v * v).sum::<f64>();
    let mut x = start;
    let mut r = residual_vector(m, &x, key, mode)?;
    let mut f = cost(&r);
    let mut lambda = 1e-3;
    let h = 1e-7;
    for _ in 0..200 {
        if max_magnitude(&r) < 1e-12 {
            break;
        }
        let mut jac = nalgebra::DMatrix::<f64>::zeros(r.len(), 3);
        for k in 0..3 {
            let mut xp = x;
            xp[k] += h;
            let mut xm = x;
            xm[k] -= h;
            let (rp, rm) = (residual_vector(m, &xp, key, mode)?, residual_vector(m, &xm, key, mode)?);
            for i in 0..r.len() {
                jac[(i, k)] = (rp[i] - rm[i]) / (2.0 * h);
            }
        }
        let rv = nalgebra::DVector::from_column_slice(&r);
        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * rv;
        let mut improved = false;
        for _ in 0..20 {
            let mut damped = jtj.clone();
            for k in 0..3 {
                damped[(k, k)] += lambda * (1.0 + jtj[(k, k)]);
            }
            let Some(step) = damped.lu().solve(&jtr) else {
                lambda *= 10.0;
                continue;
            };
            let candidate = x - Vec3::new(step[0], step[1], step[2]);
            if let Some(rc) = residual_vector(m, &candidate, key, mode) {
                let fc = cost(&rc);
                if fc < f {
                    x = candidate;
                    r = rc;
                    f = fc;
                    lambda = (lambda / 10.0).max(1e-15);
                    improved = true;
                    break;
                }
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    Some((x, max_magnitude(&r)))
}

fn search_starts(m: &MechanismParams) -> Vec<Vec3> {
    let home = m.home_orientation();
    let mut starts = vec![Vec3::new(home.yaw, home.pitch, home.roll)];
    let tau = std::f64::consts::TAU;
    for iy in 0..8 {
        for pitch in [0.0, -0.4, 0.4] {
            for roll in [0.0, -0.4, 0.4] {
                starts.push(Vec3::new(
                    iy as f64 * tau / 8.0 - std::f64::consts::PI + 0.1,
                    pitch,
                    roll,
                ));
            }
        }
    }
    starts
}

/// Multi-start search for an isotropic posture.
///
/// Full isotropy of `A` and `B` is tried first, then isotropy of `A` alone.
/// Starts and branches are visited in a fixed order beginning at the home
/// posture on the working branch, so the result is deterministic.
pub fn find_isotropic_config(m: &MechanismParams) -> Result<IsotropicConfig> {
    let mut best = f64::INFINITY;
    for mode in [IsotropyMode::Full, IsotropyMode::AOnly] {
        for start in search_starts(m) {
            for key in ELBOW_KEYS {
                let Some((x, residual)) = minimize(m, start, key, mode) else {
                    continue;
                };
                best = best.min(residual);
                if residual < ISOTROPY_TOLERANCE {
                    let o = Orientation::new(x[0], x[1], x[2]);
                    let pose = pose_on_branch(m, &o, key).expect("branch exists at converged point");
                    return Ok(IsotropicConfig { pose, mode, residual });
                }
            }
        }
    }
    Err(Error::NotFound { best_residual: best })
}
