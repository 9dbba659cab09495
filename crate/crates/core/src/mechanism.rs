//! Geometry of one vertebra: anchors, actuated links, rods and platform points.
//!
//! Legs 1 and 2 are RUS chains. The actuated revolute joint of leg `i` sits at
//! `A_i` with axis `i_i`; the elbow is `B_i = A_i + ℓ (cos θ u_i + sin θ (i_i × u_i))`
//! where `u_i` is the zero reference of the link (see [`link_reference`]).
//! The rod `B_i C_i` has length `ρ` and the platform points are
//! `C_1 = p·R x̂`, `C_2 = p·R ŷ` in the fixed frame. Leg 3 is the coaxial
//! revolute chain, whose actuated joint is the yaw angle itself.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{normalize_angle, Orientation, Vec3};

/// Tolerance on rod residuals accepted by [`assemble_pose`].
pub const ASSEMBLY_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VariantTag {
    ParallelAxes,
    OrthogonalAxes,
    ParallelActuators,
}

impl VariantTag {
    pub const ALL: [VariantTag; 3] = [
        VariantTag::ParallelAxes,
        VariantTag::OrthogonalAxes,
        VariantTag::ParallelActuators,
    ];

    pub fn name(self) -> &'static str {
        match self {
            VariantTag::ParallelAxes => "parallel-axes",
            VariantTag::OrthogonalAxes => "orthogonal-axes",
            VariantTag::ParallelActuators => "parallel-actuators",
        }
    }
}

impl std::str::FromStr for VariantTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        VariantTag::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown variant `{s}`")))
    }
}

fn default_scale() -> f64 {
    1.0
}

/// Geometry of one vertebra in unit-mechanism lengths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MechanismParams {
    pub variant: VariantTag,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub link_length: f64,
    pub rod_length: f64,
    pub platform_radius: f64,
    pub i1: Vec3,
    pub i2: Vec3,
    /// Millimetres per unit length, applied only when exporting.
    #[serde(default = "default_scale")]
    pub scale_mm: f64,
}

/// Leg selector for the two RUS legs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Leg {
    One,
    Two,
}

impl Leg {
    pub const BOTH: [Leg; 2] = [Leg::One, Leg::Two];

    pub fn index(self) -> usize {
        match self {
            Leg::One => 0,
            Leg::Two => 1,
        }
    }

    pub fn number(self) -> usize {
        self.index() + 1
    }
}

impl MechanismParams {
    pub fn from_variant(variant: VariantTag) -> Self {
        mechanism_from_variant(variant)
    }

    /// Parses a JSON config; missing `scale_mm` defaults to 1.
    pub fn from_json(text: &str) -> Result<Self> {
        let m: MechanismParams = serde_json::from_str(text).map_err(|e| Error::InvalidInput(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, axis) in [("i1", &self.i1), ("i2", &self.i2)] {
            if (axis.norm() - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidInput(format!("{name} must be a unit vector")));
            }
        }
        for (name, v) in [
            ("link_length", self.link_length),
            ("rod_length", self.rod_length),
            ("platform_radius", self.platform_radius),
            ("scale_mm", self.scale_mm),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(format!("{name} must be positive")));
            }
        }
        if ![self.a, self.b, self.c].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput("anchor coordinates must be finite".into()));
        }
        Ok(())
    }

    pub fn axis(&self, leg: Leg) -> Vec3 {
        match leg {
            Leg::One => self.i1,
            Leg::Two => self.i2,
        }
    }

    pub fn anchor(&self, leg: Leg) -> Vec3 {
        let (a1, a2) = anchor_points(self);
        match leg {
            Leg::One => a1,
            Leg::Two => a2,
        }
    }

    /// Mid-envelope posture used as the centre of workspace boxes and gaits.
    ///
    /// For both parallel-axis designs this is the isotropic posture, yaw π/4
    /// with zero pitch and roll. The orthogonal design has no isotropic posture
    /// with unit lengths; yaw −π/2 sits at its best singularity margin.
    pub fn home_orientation(&self) -> Orientation {
        match self.variant {
            VariantTag::ParallelAxes | VariantTag::ParallelActuators => Orientation::new(FRAC_PI_4, 0.0, 0.0),
            VariantTag::OrthogonalAxes => ORTHOGONAL_HOME,
        }
    }
}

const ORTHOGONAL_HOME: Orientation = Orientation {
    yaw: -std::f64::consts::FRAC_PI_2,
    pitch: 0.0,
    roll: 0.0,
};

/// Parameter set of each design variant for a unit mechanism.
pub fn mechanism_from_variant(variant: VariantTag) -> MechanismParams {
    let h = FRAC_1_SQRT_2;
    match variant {
        VariantTag::ParallelAxes => MechanismParams {
            variant,
            a: h,
            b: (SQRT_2 - 2.0) / 2.0,
            c: -1.0,
            link_length: 1.0,
            rod_length: 1.0,
            platform_radius: 1.0,
            i1: Vec3::x(),
            i2: Vec3::x(),
            scale_mm: 1.0,
        },
        // Link and rod lengths are not given for this design; unit lengths are a
        // documented default.
        VariantTag::OrthogonalAxes => MechanismParams {
            variant,
            a: 0.0,
            b: 0.0,
            c: 0.0,
            link_length: 1.0,
            rod_length: 1.0,
            platform_radius: 1.0,
            i1: Vec3::x(),
            i2: Vec3::y(),
            scale_mm: 1.0,
        },
        // ℓ = √2/2 is the radius of the elbow circles B_i = (±√2/2, √2/2 cos θ, −1 + √2/2 sin θ).
        VariantTag::ParallelActuators => MechanismParams {
            variant,
            a: h,
            b: 0.0,
            c: -1.0,
            link_length: h,
            rod_length: 1.0,
            platform_radius: 1.0,
            i1: Vec3::x(),
            i2: Vec3::x(),
            scale_mm: 1.0,
        },
    }
}

/// `A1 = (a, b, c)`, `A2 = (−a, b, c)`.
pub fn anchor_points(m: &MechanismParams) -> (Vec3, Vec3) {
    (Vec3::new(m.a, m.b, m.c), Vec3::new(-m.a, m.b, m.c))
}

/// Direction of the link at zero joint angle: `+ŷ` projected onto the plane
/// normal to the actuator axis, or `+ẑ` projected when the axis is along `ŷ`.
pub fn link_reference(axis: &Vec3) -> Vec3 {
    let project = |v: Vec3| v - axis * axis.dot(&v);
    let from_y = project(Vec3::y());
    if from_y.norm() > 1e-6 {
        from_y.normalize()
    } else {
        project(Vec3::z()).normalize()
    }
}

/// Orthonormal pair `(u, i × u)` spanning the plane of the elbow circle.
pub fn link_frame(m: &MechanismParams, leg: Leg) -> (Vec3, Vec3) {
    let axis = m.axis(leg);
    let u = link_reference(&axis);
    (u, axis.cross(&u))
}

/// Elbow position `B_i` for joint angle `theta`.
pub fn elbow_point(m: &MechanismParams, leg: Leg, theta: f64) -> Vec3 {
    let (u, v) = link_frame(m, leg);
    let (s, c) = theta.sin_cos();
    m.anchor(leg) + (u * c + v * s) * m.link_length
}

/// Platform points `C1`, `C2` in the fixed frame.
pub fn platform_points(m: &MechanismParams, o: &Orientation) -> (Vec3, Vec3) {
    let r = o.rotation();
    (
        r.column(0).into_owned() * m.platform_radius,
        r.column(1).into_owned() * m.platform_radius,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointAngles {
    pub theta1: f64,
    pub theta2: f64,
    pub theta3: f64,
}

impl JointAngles {
    pub fn new(theta1: f64, theta2: f64, theta3: f64) -> Self {
        Self {
            theta1: normalize_angle(theta1),
            theta2: normalize_angle(theta2),
            theta3: normalize_angle(theta3),
        }
    }

    pub fn leg(&self, leg: Leg) -> f64 {
        match leg {
            Leg::One => self.theta1,
            Leg::Two => self.theta2,
        }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.theta1, self.theta2, self.theta3]
    }
}

/// `e_i = ‖C_i − B_i‖² − ρ²` for both RUS legs.
pub fn rod_residuals(m: &MechanismParams, j: &JointAngles, o: &Orientation) -> (f64, f64) {
    let (c1, c2) = platform_points(m, o);
    let rho2 = m.rod_length * m.rod_length;
    let b1 = elbow_point(m, Leg::One, j.theta1);
    let b2 = elbow_point(m, Leg::Two, j.theta2);
    ((c1 - b1).norm_squared() - rho2, (c2 - b2).norm_squared() - rho2)
}

/// Residual of a single leg as a function of its joint angle.
pub fn leg_residual(m: &MechanismParams, leg: Leg, theta: f64, o: &Orientation) -> f64 {
    let (c1, c2) = platform_points(m, o);
    let c = match leg {
        Leg::One => c1,
        Leg::Two => c2,
    };
    (c - elbow_point(m, leg, theta)).norm_squared() - m.rod_length * m.rod_length
}

/// Sign with an exact zero, as stored in branch keys.
pub fn sign(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

/// Assembly-mode flags of a pose.
///
/// `elbow[i]` is the sign of `(l_i × r_i)·i_i`, which tells apart the two
/// elbow positions solving one leg. `platform` is the sign of `(p_2 × r_2)·x̂″`,
/// which tells apart the two roll solutions of the direct model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BranchFlags {
    pub elbow: [i8; 2],
    pub platform: i8,
}

/// A consistent assembly with all characteristic points in the fixed frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseSolution {
    pub joints: JointAngles,
    pub orientation: Orientation,
    pub a1: Vec3,
    pub a2: Vec3,
    pub b1: Vec3,
    pub b2: Vec3,
    pub c1: Vec3,
    pub c2: Vec3,
    pub branch: BranchFlags,
}

impl PoseSolution {
    pub fn anchor(&self, leg: Leg) -> Vec3 {
        match leg {
            Leg::One => self.a1,
            Leg::Two => self.a2,
        }
    }

    pub fn elbow(&self, leg: Leg) -> Vec3 {
        match leg {
            Leg::One => self.b1,
            Leg::Two => self.b2,
        }
    }

    pub fn platform(&self, leg: Leg) -> Vec3 {
        match leg {
            Leg::One => self.c1,
            Leg::Two => self.c2,
        }
    }

    /// Link vector `l_i = B_i − A_i`.
    pub fn link(&self, leg: Leg) -> Vec3 {
        self.elbow(leg) - self.anchor(leg)
    }

    /// Rod vector `r_i = C_i − B_i`.
    pub fn rod(&self, leg: Leg) -> Vec3 {
        self.platform(leg) - self.elbow(leg)
    }

    /// Legacy dot products `l_i·r_i`; equal for both elbow solutions of a leg.
    pub fn link_rod_dots(&self) -> [f64; 2] {
        Leg::BOTH.map(|leg| self.link(leg).dot(&self.rod(leg)))
    }
}

fn branch_flags(m: &MechanismParams, o: &Orientation, points: &[Vec3; 6]) -> BranchFlags {
    let [a1, a2, b1, b2, c1, c2] = *points;
    let elbow = |a: Vec3, b: Vec3, c: Vec3, axis: Vec3| sign((b - a).cross(&(c - b)).dot(&axis));
    let roll_axis = o.rotation().column(0).into_owned();
    BranchFlags {
        elbow: [elbow(a1, b1, c1, m.i1), elbow(a2, b2, c2, m.i2)],
        platform: sign(c2.cross(&(c2 - b2)).dot(&roll_axis)),
    }
}

/// Builds a [`PoseSolution`] after checking the rod and coaxial-leg constraints.
pub fn assemble_pose(m: &MechanismParams, j: &JointAngles, o: &Orientation) -> Result<PoseSolution> {
    let (e1, e2) = rod_residuals(m, j, o);
    let yaw_gap = crate::geometry::angle_diff(j.theta3, o.yaw).abs();
    if !(e1.abs() < ASSEMBLY_TOLERANCE && e2.abs() < ASSEMBLY_TOLERANCE && yaw_gap < ASSEMBLY_TOLERANCE) {
        return Err(Error::InconsistentAssembly { e1, e2 });
    }
    Ok(assemble_unchecked(m, j, o))
}

pub(crate) fn assemble_unchecked(m: &MechanismParams, j: &JointAngles, o: &Orientation) -> PoseSolution {
    let (a1, a2) = anchor_points(m);
    let (c1, c2) = platform_points(m, o);
    let b1 = elbow_point(m, Leg::One, j.theta1);
    let b2 = elbow_point(m, Leg::Two, j.theta2);
    let points = [a1, a2, b1, b2, c1, c2];
    PoseSolution {
        joints: *j,
        orientation: *o,
        a1,
        a2,
        b1,
        b2,
        c1,
        c2,
        branch: branch_flags(m, o, &points),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn pa() -> MechanismParams {
        mechanism_from_variant(VariantTag::ParallelActuators)
    }

    #[test]
    fn variant_parameters() {
        let m = pa();
        assert_eq!(m.a, SQRT_2 / 2.0);
        assert_eq!((m.b, m.c), (0.0, -1.0));
        assert_eq!(m.link_length, SQRT_2 / 2.0);
        assert_eq!(m.rod_length, 1.0);
        assert_eq!((m.i1, m.i2), (Vec3::x(), Vec3::x()));

        let m = mechanism_from_variant(VariantTag::ParallelAxes);
        assert_eq!(m.a, SQRT_2 / 2.0);
        assert_abs_diff_eq!(m.b, (2f64.sqrt() - 2.0) / 2.0, epsilon = 1e-16);
        assert_eq!((m.c, m.link_length, m.rod_length), (-1.0, 1.0, 1.0));

        let m = mechanism_from_variant(VariantTag::OrthogonalAxes);
        assert_eq!((m.a, m.b, m.c), (0.0, 0.0, 0.0));
        assert_eq!(m.i1.dot(&m.i2), 0.0);
        for v in VariantTag::ALL {
            mechanism_from_variant(v).validate().unwrap();
        }
    }

    #[test]
    fn anchors() {
        let h = SQRT_2 / 2.0;
        let (a1, a2) = anchor_points(&pa());
        assert_eq!(a1, Vec3::new(h, 0.0, -1.0));
        assert_eq!(a2, Vec3::new(-h, 0.0, -1.0));
        let (a1, _) = anchor_points(&mechanism_from_variant(VariantTag::ParallelAxes));
        assert_abs_diff_eq!(a1, Vec3::new(h, (2f64.sqrt() - 2.0) / 2.0, -1.0), epsilon = 1e-16);
        let (a1, a2) = anchor_points(&mechanism_from_variant(VariantTag::OrthogonalAxes));
        assert_eq!((a1, a2), (Vec3::zeros(), Vec3::zeros()));
    }

    #[test]
    fn elbow_points_match_closed_form() {
        let h = SQRT_2 / 2.0;
        let m = pa();
        assert_abs_diff_eq!(elbow_point(&m, Leg::One, 0.0), Vec3::new(h, h, -1.0), epsilon = 1e-15);
        assert_abs_diff_eq!(
            elbow_point(&m, Leg::One, FRAC_PI_2),
            Vec3::new(h, 0.0, -1.0 + h),
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(elbow_point(&m, Leg::Two, PI), Vec3::new(-h, -h, -1.0), epsilon = 1e-15);
        // B_i = (±√2/2, √2/2 C_i, −1 + √2/2 S_i) for arbitrary angles
        for &t in &[0.1, -2.3, 1.7] {
            let b2 = elbow_point(&m, Leg::Two, t);
            assert_abs_diff_eq!(b2, Vec3::new(-h, h * t.cos(), -1.0 + h * t.sin()), epsilon = 1e-15);
        }
    }

    #[test]
    fn platform_points_match_component_formulas() {
        let m = pa();
        let (c1, c2) = platform_points(&m, &Orientation::IDENTITY);
        assert_eq!((c1, c2), (Vec3::x(), Vec3::y()));
        let (c1, c2) = platform_points(&m, &Orientation::new(FRAC_PI_2, 0.0, 0.0));
        assert_abs_diff_eq!(c1, Vec3::y(), epsilon = 1e-15);
        assert_abs_diff_eq!(c2, -Vec3::x(), epsilon = 1e-15);

        let (t3, ph, ps) = (FRAC_PI_4, PI / 12.0, PI / 12.0);
        let (s3, c3, sp, cp, ss, cs) = (t3.sin(), t3.cos(), ph.sin(), ph.cos(), ps.sin(), ps.cos());
        let oracle1 = Vec3::new(c3 * cp, s3 * cp, -sp);
        let oracle2 = Vec3::new(c3 * sp * ss - s3 * cs, s3 * sp * ss + c3 * cs, cp * ss);
        let (c1, c2) = platform_points(&m, &Orientation::new(t3, ph, ps));
        assert_abs_diff_eq!(c1, oracle1, epsilon = 1e-14);
        assert_abs_diff_eq!(c2, oracle2, epsilon = 1e-14);
    }

    #[test]
    fn residual_at_rest_pose() {
        let (e1, _) = rod_residuals(&pa(), &JointAngles::new(0.0, 0.0, 0.0), &Orientation::IDENTITY);
        let h = SQRT_2 / 2.0;
        assert_abs_diff_eq!(e1, (1.0 - h).powi(2) + 0.5, epsilon = 1e-15);
        let err = assemble_pose(&pa(), &JointAngles::new(0.0, 0.0, 0.0), &Orientation::IDENTITY);
        assert!(matches!(err, Err(Error::InconsistentAssembly { .. })));
    }

    #[test]
    fn home_posture_assembles() {
        // θ1 = θ2 = 0 at yaw π/4 puts both rods along +z.
        let m = pa();
        let pose = assemble_pose(&m, &JointAngles::new(0.0, 0.0, FRAC_PI_4), &m.home_orientation()).unwrap();
        assert_abs_diff_eq!(pose.rod(Leg::One), Vec3::z(), epsilon = 1e-15);
        assert_abs_diff_eq!(pose.rod(Leg::Two), Vec3::z(), epsilon = 1e-15);
        assert_eq!(
            pose.branch,
            BranchFlags {
                elbow: [1, 1],
                platform: 1
            }
        );
    }

    #[test]
    fn config_json_round_trip() {
        let m = pa();
        let text = serde_json::to_string(&m).unwrap();
        assert!(text.contains("\"variant\":\"parallel-actuators\""));
        assert_eq!(MechanismParams::from_json(&text).unwrap(), m);
        let no_scale = text.replace(",\"scale_mm\":1.0", "");
        assert_eq!(MechanismParams::from_json(&no_scale).unwrap().scale_mm, 1.0);
        let bad_axis = text.replace("\"i1\":[1.0,0.0,0.0]", "\"i1\":[2.0,0.0,0.0]");
        assert!(MechanismParams::from_json(&bad_axis).is_err());
    }

    #[test]
    fn variant_names_parse() {
        for v in VariantTag::ALL {
            assert_eq!(v.name().parse::<VariantTag>().unwrap(), v);
        }
        assert!("spiral".parse::<VariantTag>().is_err());
    }

    proptest! {
        #[test]
        fn elbow_stays_on_circle(t in -PI..PI, leg in 0usize..2, v in 0usize..3) {
            let m = mechanism_from_variant(VariantTag::ALL[v]);
            let leg = Leg::BOTH[leg];
            let l = elbow_point(&m, leg, t) - m.anchor(leg);
            prop_assert!((l.norm() - m.link_length).abs() < 1e-12);
            prop_assert!(l.dot(&m.axis(leg)).abs() < 1e-12);
        }

        #[test]
        fn platform_points_orthonormal(y in -PI..PI, p in -PI..PI, r in -PI..PI) {
            let (c1, c2) = platform_points(&pa(), &Orientation::new(y, p, r));
            prop_assert!((c1.norm() - 1.0).abs() < 1e-12);
            prop_assert!((c2.norm() - 1.0).abs() < 1e-12);
            prop_assert!(c1.dot(&c2).abs() < 1e-12);
        }

        #[test]
        fn residuals_match_point_recomputation(
            t1 in -PI..PI, t2 in -PI..PI, y in -PI..PI, p in -PI..PI, r in -PI..PI,
        ) {
            let m = pa();
            let (j, o) = (JointAngles::new(t1, t2, y), Orientation::new(y, p, r));
            let (e1, e2) = rod_residuals(&m, &j, &o);
            let rot = o.rotation();
            // independent recomputation from raw coordinates
            let h = SQRT_2 / 2.0;
            let b1 = [h, h * t1.cos(), -1.0 + h * t1.sin()];
            let b2 = [-h, h * t2.cos(), -1.0 + h * t2.sin()];
            let d1: f64 = (0..3).map(|k| (rot[(k, 0)] - b1[k]).powi(2)).sum::<f64>() - 1.0;
            let d2: f64 = (0..3).map(|k| (rot[(k, 1)] - b2[k]).powi(2)).sum::<f64>() - 1.0;
            prop_assert!((e1 - d1).abs() < 1e-14);
            prop_assert!((e2 - d2).abs() < 1e-14);
        }
    }
}
