//! Plot-ready scene export.
//!
//! Schema:
//! ```text
//! { "variant": str, "units": "mm",
//!   "poses": [ { "label": str, "orientation": {yaw, pitch, roll}, "joints": {...},
//!                "margin": real, "points": [ {"label": str, "xyz": [x, y, z]} ],
//!                "segments": [ {"kind": "link"|"rod"|"platform"|"axis", "from": str, "to": str} ] } ] }
//! ```

use serde::Serialize;
use wristkin::differential::{classify_singularity, DEFAULT_THRESHOLD};
use wristkin::{Leg, MechanismParams, PoseSolution, Vec3};

const AXIS_LENGTH: f64 = 0.3;

#[derive(Debug, Serialize)]
pub struct ScenePoint {
    pub label: String,
    pub xyz: [f64; 3],
}

#[derive(Debug, Serialize)]
pub struct SceneSegment {
    pub kind: &'static str,
    pub from: String,
    pub to: String,
}

#[derive(Debug, Serialize)]
pub struct ScenePose {
    pub label: String,
    pub orientation: wristkin::Orientation,
    pub joints: wristkin::JointAngles,
    pub margin: f64,
    pub points: Vec<ScenePoint>,
    pub segments: Vec<SceneSegment>,
}

#[derive(Debug, Serialize)]
pub struct SceneFile {
    pub variant: &'static str,
    pub units: &'static str,
    pub poses: Vec<ScenePose>,
}

impl SceneFile {
    pub fn new(m: &MechanismParams, poses: &[(String, &PoseSolution)]) -> Self {
        SceneFile {
            variant: m.variant.name(),
            units: "mm",
            poses: poses.iter().map(|(label, p)| scene_pose(m, label, p)).collect(),
        }
    }
}

fn scene_pose(m: &MechanismParams, label: &str, p: &PoseSolution) -> ScenePose {
    let scale = m.scale_mm;
    let point = |label: &str, v: Vec3| ScenePoint {
        label: label.to_string(),
        xyz: [v.x * scale, v.y * scale, v.z * scale],
    };
    let seg = |kind, from: &str, to: &str| SceneSegment {
        kind,
        from: from.to_string(),
        to: to.to_string(),
    };
    let mut points = vec![point("O", Vec3::zeros())];
    let mut segments = Vec::new();
    for leg in Leg::BOTH {
        let n = leg.number();
        let (a, b, c) = (format!("A{n}"), format!("B{n}"), format!("C{n}"));
        let tip = format!("I{n}");
        points.push(point(&a, p.anchor(leg)));
        points.push(point(&b, p.elbow(leg)));
        points.push(point(&c, p.platform(leg)));
        points.push(point(&tip, p.anchor(leg) + m.axis(leg) * AXIS_LENGTH));
        segments.push(seg("link", &a, &b));
        segments.push(seg("rod", &b, &c));
        segments.push(seg("platform", "O", &c));
        segments.push(seg("axis", &a, &tip));
    }
    ScenePose {
        label: label.to_string(),
        orientation: p.orientation,
        joints: p.joints,
        margin: classify_singularity(p, m, DEFAULT_THRESHOLD).margin,
        points,
        segments,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use wristkin::{mechanism_from_variant, solve_ik, VariantTag};

    #[test]
    fn segments_reference_defined_points() {
        let m = mechanism_from_variant(VariantTag::ParallelActuators);
        let set = solve_ik(&m, &m.home_orientation()).unwrap();
        let poses: Vec<(String, &PoseSolution)> = set
            .solutions
            .iter()
            .enumerate()
            .map(|(i, p)| (format!("ik-{i}"), p))
            .collect();
        let scene = SceneFile::new(&m, &poses);
        for pose in &scene.poses {
            for s in &pose.segments {
                assert!(pose.points.iter().any(|p| p.label == s.from));
                assert!(pose.points.iter().any(|p| p.label == s.to));
            }
            assert!(pose.points.iter().all(|p| p.xyz.iter().all(|v| v.is_finite())));
        }
    }
}
