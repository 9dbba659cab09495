//! Direct and inverse position models.
//!
//! The inverse model splits into one trigonometric equation per RUS leg, each
//! solved with the tangent half-angle of its joint. The direct model uses the
//! fact that `C1 = p·R x̂` does not depend on roll: leg 1 fixes the pitch,
//! then leg 2 fixes the roll. For the parallel-actuator design the pitch
//! equation always has the root `φ = π/2` independently of the joints; those
//! assemblies are reported as spurious.

pub mod trig;

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{angle_diff, rpy_axes, Orientation};
use crate::mechanism::{
    assemble_unchecked, elbow_point, link_frame, platform_points, rod_residuals, JointAngles, Leg, MechanismParams,
    PoseSolution, VariantTag,
};
use trig::{solve_sin_cos_scaled, TrigRoots, COEFF_EPS};

/// Elbow signs of the prototype's assembly mode, calibrated at the isotropic posture.
pub const WORKING_ELBOW_SIGNS: [i8; 2] = [1, 1];

/// Platform sign of the prototype's assembly mode.
pub const WORKING_PLATFORM_SIGN: i8 = 1;

/// Residual accepted for every returned solution.
pub const SOLUTION_TOLERANCE: f64 = 1e-10;

/// Distance from `π/2` below which a direct solution is on the spurious branch.
pub const SPURIOUS_TOLERANCE: f64 = 1e-9;

pub const NEWTON_MAX_ITERATIONS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FkSolutionSet {
    pub solutions: Vec<PoseSolution>,
    pub spurious_count: usize,
    /// Index of the prototype's assembly, if present.
    pub working: Option<usize>,
}

impl FkSolutionSet {
    pub fn is_spurious(pose: &PoseSolution) -> bool {
        (pose.orientation.pitch - FRAC_PI_2).abs() < SPURIOUS_TOLERANCE
    }

    pub fn working_pose(&self) -> Option<&PoseSolution> {
        self.working.map(|i| &self.solutions[i])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IkSolutionSet {
    pub solutions: Vec<PoseSolution>,
    /// Number of roots of each leg (a double root counts twice).
    pub leg_roots: [usize; 2],
    pub double_root: [bool; 2],
    pub working: Option<usize>,
}

impl IkSolutionSet {
    pub fn working_pose(&self) -> Option<&PoseSolution> {
        self.working.map(|i| &self.solutions[i])
    }
}

fn max_residual(m: &MechanismParams, j: &JointAngles, o: &Orientation) -> f64 {
    let (e1, e2) = rod_residuals(m, j, o);
    e1.abs().max(e2.abs())
}

/// Roots of one leg's constraint `‖C_i − B_i(θ)‖² = ρ²` in its joint angle.
fn leg_roots(m: &MechanismParams, leg: Leg, o: &Orientation) -> Result<(Vec<f64>, bool)> {
    let (c1, c2) = platform_points(m, o);
    let c = if leg == Leg::One { c1 } else { c2 };
    let d = m.anchor(leg) - c;
    let (u, v) = link_frame(m, leg);
    let l = m.link_length;
    // ‖d‖² + ℓ² + 2ℓ (cos θ d·u + sin θ d·v) = ρ²
    let cos_coeff = 2.0 * l * d.dot(&u);
    let sin_coeff = 2.0 * l * d.dot(&v);
    let rhs = m.rod_length * m.rod_length - d.norm_squared() - l * l;
    let reference = m.rod_length * m.rod_length + d.norm_squared() + l * l;
    match solve_sin_cos_scaled(sin_coeff, cos_coeff, rhs, reference) {
        TrigRoots::None => Err(Error::Unreachable { leg: leg.number() }),
        TrigRoots::Indeterminate => Err(Error::DegenerateQuadratic(format!(
            "leg {} constraint holds for every joint angle",
            leg.number()
        ))),
        TrigRoots::Roots { roots, double } => Ok((roots, double)),
    }
}

/// Per-leg choice of the root whose elbow sign best matches the working signs.
fn select_working_ik(solutions: &[PoseSolution], m: &MechanismParams) -> Option<usize> {
    let score = |p: &PoseSolution| -> f64 {
        Leg::BOTH
            .iter()
            .map(|&leg| {
                let l = p.link(leg);
                let r = p.rod(leg);
                let v = l.cross(&r).dot(&m.axis(leg)) / (l.norm() * r.norm());
                f64::from(WORKING_ELBOW_SIGNS[leg.index()]) * v
            })
            .sum()
    };
    solutions
        .iter()
        .enumerate()
        .max_by(|(_, a), (_, b)| score(a).total_cmp(&score(b)))
        .map(|(i, _)| i)
}

/// All joint solutions reaching orientation `o` (leg 3 is the yaw itself).
pub fn solve_ik(m: &MechanismParams, o: &Orientation) -> Result<IkSolutionSet> {
    if !o.is_finite() {
        return Err(Error::InvalidInput("orientation must be finite".into()));
    }
    let (r1, d1) = leg_roots(m, Leg::One, o)?;
    let (r2, d2) = leg_roots(m, Leg::Two, o)?;
    let mut solutions = Vec::with_capacity(r1.len() * r2.len());
    for &t1 in &r1 {
        for &t2 in &r2 {
            let j = JointAngles::new(t1, t2, o.yaw);
            let residual = max_residual(m, &j, o);
            // Tangent roots are only accurate to the square root of rounding.
            if residual > SOLUTION_TOLERANCE && !(d1 || d2) {
                return Err(Error::NoRealSolution(format!(
                    "inverse root residual {residual:e} exceeds tolerance"
                )));
            }
            solutions.push(assemble_unchecked(m, &j, o));
        }
    }
    solutions.sort_by(|a, b| {
        a.joints
            .theta1
            .total_cmp(&b.joints.theta1)
            .then(a.joints.theta2.total_cmp(&b.joints.theta2))
    });
    let working = select_working_ik(&solutions, m);
    Ok(IkSolutionSet {
        leg_roots: [r1.len(), r2.len()],
        double_root: [d1, d2],
        solutions,
        working,
    })
}

/// Pitch roots of leg 1 for fixed yaw and `θ1`, with a flag marking the
/// joint-independent `φ = π/2` root when present.
fn pitch_roots(m: &MechanismParams, j: &JointAngles) -> Result<Vec<(f64, bool)>> {
    let b1 = elbow_point(m, Leg::One, j.theta1);
    let p = m.platform_radius;
    let (s3, c3) = j.theta3.sin_cos();
    // C1 = p (c3 cφ, s3 cφ, −sφ); the constraint reads C1·B1 = (p² + ‖B1‖² − ρ²)/2
    let sin_coeff = -p * b1.z;
    let cos_coeff = p * (c3 * b1.x + s3 * b1.y);
    let rhs = (p * p + b1.norm_squared() - m.rod_length * m.rod_length) / 2.0;
    let reference = (p * p + b1.norm_squared() + m.rod_length * m.rod_length) / 2.0;
    let scale = sin_coeff.hypot(cos_coeff).max(rhs.abs()).max(reference);

    // Q = tan(φ/2) = 1 is a root when the φ = π/2 residual vanishes identically.
    if (sin_coeff - rhs).abs() <= COEFF_EPS * scale {
        // (Q − 1)((g + c)Q − (g − c)) = 0
        let lead = rhs + cos_coeff;
        let tail = rhs - cos_coeff;
        let other = if lead.abs() > COEFF_EPS * scale {
            2.0 * (tail / lead).atan()
        } else if tail.abs() > COEFF_EPS * scale {
            // Q → ∞: the substitution misses φ = π, which solves the equation here.
            std::f64::consts::PI
        } else {
            return Err(Error::DegenerateQuadratic(
                "pitch equation is indeterminate for these joint angles".into(),
            ));
        };
        let other = {
            let (sx, cx) = other.sin_cos();
            let f = sin_coeff * sx + cos_coeff * cx - rhs;
            let df = sin_coeff * cx - cos_coeff * sx;
            if df.abs() > COEFF_EPS * scale {
                other - f / df
            } else {
                other
            }
        };
        let mut roots = vec![(FRAC_PI_2, true)];
        if (other - FRAC_PI_2).abs() >= SPURIOUS_TOLERANCE {
            roots.push((crate::geometry::normalize_angle(other), false));
        }
        return Ok(roots);
    }
    match solve_sin_cos_scaled(sin_coeff, cos_coeff, rhs, reference) {
        TrigRoots::None => Err(Error::NoRealSolution("pitch equation has no real root".into())),
        TrigRoots::Indeterminate => Err(Error::DegenerateQuadratic(
            "pitch equation is indeterminate for these joint angles".into(),
        )),
        TrigRoots::Roots { mut roots, double } => {
            if double {
                roots.dedup();
            }
            Ok(roots.into_iter().map(|x| (x, false)).collect())
        }
    }
}

/// Roll roots of leg 2 for fixed yaw, pitch and `θ2`.
fn roll_roots(m: &MechanismParams, j: &JointAngles, pitch: f64) -> Result<Vec<f64>> {
    let b2 = elbow_point(m, Leg::Two, j.theta2);
    let p = m.platform_radius;
    let (s3, c3) = j.theta3.sin_cos();
    let (sp, cp) = pitch.sin_cos();
    // C2 = p (c3 sφ sψ − s3 cψ, s3 sφ sψ + c3 cψ, cφ sψ)
    let sin_coeff = p * (sp * (c3 * b2.x + s3 * b2.y) + cp * b2.z);
    let cos_coeff = p * (-s3 * b2.x + c3 * b2.y);
    let rhs = (p * p + b2.norm_squared() - m.rod_length * m.rod_length) / 2.0;
    let reference = (p * p + b2.norm_squared() + m.rod_length * m.rod_length) / 2.0;
    match solve_sin_cos_scaled(sin_coeff, cos_coeff, rhs, reference) {
        TrigRoots::None => Ok(Vec::new()),
        TrigRoots::Indeterminate => Err(Error::DegenerateQuadratic(
            "roll equation is indeterminate for these joint angles".into(),
        )),
        TrigRoots::Roots { mut roots, double } => {
            if double {
                roots.dedup();
            }
            Ok(roots)
        }
    }
}

fn select_working_fk(solutions: &[PoseSolution]) -> Option<usize> {
    solutions
        .iter()
        .position(|p| !FkSolutionSet::is_spurious(p) && p.branch.platform == WORKING_PLATFORM_SIGN)
}

/// Closed-form direct model of the parallel-actuator design.
fn solve_fk_closed_form(m: &MechanismParams, j: &JointAngles) -> Result<FkSolutionSet> {
    let mut solutions = Vec::new();
    for (pitch, _) in pitch_roots(m, j)? {
        for roll in roll_roots(m, j, pitch)? {
            let o = Orientation::new(j.theta3, pitch, roll);
            let residual = max_residual(m, j, &o);
            if residual > SOLUTION_TOLERANCE {
                return Err(Error::NoRealSolution(format!(
                    "direct root residual {residual:e} exceeds tolerance"
                )));
            }
            solutions.push(assemble_unchecked(m, j, &o));
        }
    }
    if solutions.is_empty() {
        return Err(Error::NoRealSolution(
            "roll equation has negative discriminant on every pitch branch".into(),
        ));
    }
    solutions.sort_by(|a, b| {
        a.orientation
            .pitch
            .total_cmp(&b.orientation.pitch)
            .then(a.orientation.roll.total_cmp(&b.orientation.roll))
    });
    let spurious_count = solutions.iter().filter(|p| FkSolutionSet::is_spurious(p)).count();
    let working = select_working_fk(&solutions);
    Ok(FkSolutionSet {
        solutions,
        spurious_count,
        working,
    })
}

/// All assemblies for the joint angles `j`.
///
/// The closed form is used for the parallel-actuator design; the other designs
/// fall back to [`solve_fk_numeric`] seeded at the home posture and return a
/// single solution.
pub fn solve_fk(m: &MechanismParams, j: &JointAngles) -> Result<FkSolutionSet> {
    if m.variant == VariantTag::ParallelActuators {
        return solve_fk_closed_form(m, j);
    }
    let home = m.home_orientation();
    let seed = Orientation::new(j.theta3, home.pitch, home.roll);
    let found = solve_fk_numeric(m, j, &seed)?;
    let spurious_count = usize::from(FkSolutionSet::is_spurious(&found.pose));
    let solutions = vec![found.pose];
    let working = select_working_fk(&solutions);
    Ok(FkSolutionSet {
        solutions,
        spurious_count,
        working,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumericFk {
    pub pose: PoseSolution,
    /// Residual evaluations performed, including the converged one.
    pub iterations: usize,
    pub residual: f64,
}

/// Newton iteration on the rod residuals over (pitch, roll), yaw fixed to `θ3`.
pub fn solve_fk_numeric(m: &MechanismParams, j: &JointAngles, seed: &Orientation) -> Result<NumericFk> {
    let mut o = Orientation::new(j.theta3, seed.pitch, seed.roll);
    let b1 = elbow_point(m, Leg::One, j.theta1);
    let b2 = elbow_point(m, Leg::Two, j.theta2);
    let mut residual = f64::INFINITY;
    for iteration in 1..=NEWTON_MAX_ITERATIONS {
        let (c1, c2) = platform_points(m, &o);
        let r1 = c1 - b1;
        let r2 = c2 - b2;
        let e1 = r1.norm_squared() - m.rod_length * m.rod_length;
        let e2 = r2.norm_squared() - m.rod_length * m.rod_length;
        residual = e1.abs().max(e2.abs());
        if residual < 1e-12 {
            return Ok(NumericFk {
                pose: assemble_unchecked(m, j, &o),
                iterations: iteration,
                residual,
            });
        }
        // ∂C/∂pitch = ŷ′ × C, ∂C/∂roll = x̂″ × C; C1 does not depend on roll.
        let [_, y1, x2] = rpy_axes(&o);
        let j11 = 2.0 * r1.dot(&y1.cross(&c1));
        let j21 = 2.0 * r2.dot(&y1.cross(&c2));
        let j22 = 2.0 * r2.dot(&x2.cross(&c2));
        let det = j11 * j22;
        if det.abs() < 1e-12 {
            return Err(Error::NoConvergence {
                iterations: iteration,
                residual,
                last: o,
            });
        }
        let d_pitch = e1 / j11;
        let d_roll = (e2 - j21 * d_pitch) / j22;
        let clamp = |v: f64| v.clamp(-0.5, 0.5);
        o = Orientation::new(o.yaw, o.pitch - clamp(d_pitch), o.roll - clamp(d_roll));
    }
    Err(Error::NoConvergence {
        iterations: NEWTON_MAX_ITERATIONS,
        residual,
        last: o,
    })
}

/// Elbow-sign key of an inverse solution.
pub type BranchKey = (i8, i8);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchMap {
    pub branches: BTreeMap<String, Vec<JointAngles>>,
    pub double_root: [bool; 2],
}

impl BranchMap {
    pub fn key_name(key: BranchKey) -> String {
        let s = |v: i8| match v {
            1 => "+",
            -1 => "-",
            _ => "0",
        };
        format!("{}{}", s(key.0), s(key.1))
    }

    pub fn get(&self, key: BranchKey) -> Option<&Vec<JointAngles>> {
        self.branches.get(&Self::key_name(key))
    }

    pub fn len(&self) -> usize {
        self.branches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.branches.is_empty()
    }
}

/// Groups the inverse solutions by their elbow signs.
pub fn enumerate_branches(m: &MechanismParams, o: &Orientation) -> Result<BranchMap> {
    let set = solve_ik(m, o)?;
    let mut branches: BTreeMap<String, Vec<JointAngles>> = BTreeMap::new();
    for pose in &set.solutions {
        let key = (pose.branch.elbow[0], pose.branch.elbow[1]);
        branches.entry(BranchMap::key_name(key)).or_default().push(pose.joints);
    }
    Ok(BranchMap {
        branches,
        double_root: set.double_root,
    })
}

/// Inverse solution with the same elbow signs as `reference`, nearest in joint space.
pub fn track_branch(set: &IkSolutionSet, reference: &PoseSolution) -> Option<PoseSolution> {
    let dist = |p: &PoseSolution| {
        angle_diff(p.joints.theta1, reference.joints.theta1).abs()
            + angle_diff(p.joints.theta2, reference.joints.theta2).abs()
    };
    set.solutions
        .iter()
        .filter(|p| p.branch.elbow == reference.branch.elbow)
        .min_by(|a, b| dist(a).total_cmp(&dist(b)))
        .cloned()
}
