//! Travelling-wave gait commands for a chain of vertebrae and their validation.
//!
//! Vertebra `k` sits at arc position `s_k = (k − ½)/N` and receives the yaw
//! offset `A(s_k) sin 2π(f t − s_k/λ)` around the wrist's home posture. Pitch is
//! a constant offset and roll is `gain × pitch`. All wave parameters are
//! placeholders: only periodicity, phase lag and clamping are relied upon.

use std::f64::consts::TAU;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::differential::{build_jacobians_with_threshold, classify_singularity, DEFAULT_THRESHOLD};
use crate::error::{Error, Result};
use crate::geometry::{angle_diff, rpy_rates_to_angular_velocity, Orientation, RpyRates, Vec3};
use crate::kinematics::{solve_ik, track_branch};
use crate::mechanism::{BranchFlags, JointAngles, MechanismParams, PoseSolution};
use crate::workspace::ENVELOPE_DEG;

/// Cross-section of a vertebra in millimetres (width, thickness).
pub const VERTEBRA_SECTION_MM: [f64; 2] = [150.0, 100.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaitParams {
    pub vertebra_count: usize,
    pub body_length_mm: f64,
    pub vertebra_thickness_mm: f64,
    /// Placeholder.
    pub cycle_frequency_hz: f64,
    /// Wavelength as a fraction of body length. Placeholder.
    pub wavelength: f64,
    /// Piecewise-linear yaw amplitude `(s, radians)`, sorted by `s`. Placeholder.
    pub yaw_amplitude: Vec<(f64, f64)>,
    pub pitch_offset: f64,
    /// Roll commanded per radian of pitch.
    pub roll_gain: f64,
}

impl Default for GaitParams {
    fn default() -> Self {
        GaitParams {
            vertebra_count: 10,
            body_length_mm: 1500.0,
            vertebra_thickness_mm: 100.0,
            cycle_frequency_hz: 1.0,
            wavelength: 0.8,
            yaw_amplitude: vec![(0.0, 10f64.to_radians()), (1.0, 30f64.to_radians())],
            pitch_offset: 0.0,
            roll_gain: 0.0,
        }
    }
}

impl GaitParams {
    /// Gait whose raw commands reach the yaw, pitch and roll envelope limits.
    pub fn full_envelope() -> Self {
        let [_, pitch, roll] = ENVELOPE_DEG.map(f64::to_radians);
        GaitParams {
            yaw_amplitude: vec![(0.0, ENVELOPE_DEG[0].to_radians()), (1.0, ENVELOPE_DEG[0].to_radians())],
            pitch_offset: pitch,
            roll_gain: roll / pitch,
            ..GaitParams::default()
        }
    }

    pub fn zero_amplitude() -> Self {
        GaitParams {
            yaw_amplitude: vec![(0.0, 0.0), (1.0, 0.0)],
            ..GaitParams::default()
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let g: GaitParams = serde_json::from_str(text).map_err(|e| Error::InvalidInput(e.to_string()))?;
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.vertebra_count < 1 {
            return Err(Error::InvalidInput("vertebra_count must be at least 1".into()));
        }
        if !(self.cycle_frequency_hz > 0.0 && self.cycle_frequency_hz.is_finite()) {
            return Err(Error::InvalidInput("cycle_frequency_hz must be positive".into()));
        }
        if !(self.wavelength > 0.0 && self.wavelength.is_finite()) {
            return Err(Error::InvalidInput("wavelength must be positive".into()));
        }
        if self.yaw_amplitude.is_empty() || self.yaw_amplitude.windows(2).any(|w| w[0].0 > w[1].0) {
            return Err(Error::InvalidInput(
                "yaw_amplitude must be a non-empty table sorted by s".into(),
            ));
        }
        Ok(())
    }

    pub fn arc_position(&self, vertebra: usize) -> f64 {
        (vertebra as f64 - 0.5) / self.vertebra_count as f64
    }

    pub fn amplitude_at(&self, s: f64) -> f64 {
        let t = &self.yaw_amplitude;
        if s <= t[0].0 {
            return t[0].1;
        }
        for w in t.windows(2) {
            let ((s0, a0), (s1, a1)) = (w[0], w[1]);
            if s <= s1 {
                return if s1 == s0 {
                    a1
                } else {
                    a0 + (a1 - a0) * (s - s0) / (s1 - s0)
                };
            }
        }
        t[t.len() - 1].1
    }

    fn phase(&self, vertebra: usize, t: f64) -> f64 {
        TAU * (self.cycle_frequency_hz * t - self.arc_position(vertebra) / self.wavelength)
    }
}

fn envelope() -> [f64; 3] {
    ENVELOPE_DEG.map(f64::to_radians)
}

/// Unclamped offset command of vertebra `vertebra` (1-based) at time `t`.
pub fn gait_orientation_raw(g: &GaitParams, vertebra: usize, t: f64) -> Orientation {
    let yaw = g.amplitude_at(g.arc_position(vertebra)) * g.phase(vertebra, t).sin();
    Orientation {
        yaw,
        pitch: g.pitch_offset,
        roll: g.roll_gain * g.pitch_offset,
    }
}

/// Offset command clamped to the envelope; identity when every amplitude is zero.
pub fn gait_orientation(g: &GaitParams, vertebra: usize, t: f64) -> Orientation {
    let raw = gait_orientation_raw(g, vertebra, t);
    let [y, p, r] = envelope();
    Orientation {
        yaw: raw.yaw.clamp(-y, y),
        pitch: raw.pitch.clamp(-p, p),
        roll: raw.roll.clamp(-r, r),
    }
}

/// Time derivative of [`gait_orientation`]; zero while a clamp is active.
pub fn gait_rates(g: &GaitParams, vertebra: usize, t: f64) -> RpyRates {
    let raw = gait_orientation_raw(g, vertebra, t);
    let limit = envelope()[0];
    let yaw = if raw.yaw.abs() > limit {
        0.0
    } else {
        g.amplitude_at(g.arc_position(vertebra)) * TAU * g.cycle_frequency_hz * g.phase(vertebra, t).cos()
    };
    RpyRates {
        yaw,
        pitch: 0.0,
        roll: 0.0,
    }
}

pub const VIOLATION_UNREACHABLE: u8 = 1;
pub const VIOLATION_SINGULAR: u8 = 2;
pub const VIOLATION_ENVELOPE: u8 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub time: f64,
    /// Commanded orientation of the platform, home posture included.
    pub command: Orientation,
    pub joints: Option<JointAngles>,
    pub branch: Option<BranchFlags>,
    pub margin: Option<f64>,
    pub kappa: Option<f64>,
    pub omega: Vec3,
    /// Central differences of the joint angles along the trajectory.
    pub fd_rates: Option<[f64; 3]>,
    /// Exact inverse Jacobian applied to `omega`.
    pub model_rates: Option<[f64; 3]>,
    /// `θ̇1/ω_z`, when `ω_z` is not negligible.
    pub yaw_ratio: Option<f64>,
    pub flags: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub vertebra: usize,
    pub sample: usize,
    pub flags: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VertebraTrace {
    pub vertebra: usize,
    pub samples: Vec<TrajectorySample>,
    /// `max |fd − model| / max |model|` over the cycle.
    pub rate_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryReport {
    pub samples_per_cycle: usize,
    pub vertebrae: Vec<VertebraTrace>,
    pub violations: Vec<Violation>,
    pub branch_continuous: bool,
    pub max_rate_error: Option<f64>,
}

fn trace_vertebra(
    m: &MechanismParams,
    g: &GaitParams,
    vertebra: usize,
    samples_per_cycle: usize,
    threshold: f64,
) -> Result<VertebraTrace> {
    let home = m.home_orientation();
    let dt = 1.0 / (g.cycle_frequency_hz * samples_per_cycle as f64);
    let [ey, ep, er] = envelope();
    let mut samples = Vec::with_capacity(samples_per_cycle);
    let mut previous: Option<(PoseSolution, bool)> = None;
    for n in 0..samples_per_cycle {
        let t = n as f64 * dt;
        let offset = gait_orientation(g, vertebra, t);
        let raw = gait_orientation_raw(g, vertebra, t);
        let command = home.offset_by(&offset);
        let omega = rpy_rates_to_angular_velocity(&command, &gait_rates(g, vertebra, t));
        let mut flags = 0;
        // Commands on the boundary are inside; the tolerance absorbs rounding of gain × pitch.
        let tol = 1e-12;
        if raw.yaw.abs() > ey + tol || raw.pitch.abs() > ep + tol || raw.roll.abs() > er + tol {
            flags |= VIOLATION_ENVELOPE;
        }
        let pose = match solve_ik(m, &command) {
            Ok(set) => match &previous {
                Some((prev, prev_singular)) => match track_branch(&set, prev) {
                    Some(p) => Some(p),
                    None => {
                        let p = set.working_pose().cloned();
                        let singular_here = p
                            .as_ref()
                            .is_some_and(|p| classify_singularity(p, m, threshold).is_singular());
                        if !prev_singular && !singular_here {
                            return Err(Error::BranchDiscontinuity { vertebra, sample: n });
                        }
                        p
                    }
                },
                None => set.working_pose().cloned(),
            },
            Err(_) => None,
        };
        let mut sample = TrajectorySample {
            time: t,
            command,
            joints: None,
            branch: None,
            margin: None,
            kappa: None,
            omega,
            fd_rates: None,
            model_rates: None,
            yaw_ratio: None,
            flags,
        };
        match pose {
            Some(pose) => {
                let dk = build_jacobians_with_threshold(&pose, m, threshold);
                let report = classify_singularity(&pose, m, threshold);
                if report.is_singular() {
                    sample.flags |= VIOLATION_SINGULAR;
                }
                sample.joints = Some(pose.joints);
                sample.branch = Some(pose.branch);
                sample.margin = Some(report.margin);
                sample.kappa = Some(dk.kappa_exact);
                sample.model_rates = dk.jinv_exact.map(|j| (j * omega).into());
                previous = Some((pose, report.is_singular()));
            }
            None => {
                sample.flags |= VIOLATION_UNREACHABLE;
                previous = None;
            }
        }
        samples.push(sample);
    }

    // The command is periodic, so differences wrap around the cycle.
    let count = samples.len();
    for n in 0..count {
        let before = samples[(n + count - 1) % count].joints;
        let after = samples[(n + 1) % count].joints;
        if let (Some(a), Some(b)) = (before, after) {
            let (a, b) = (a.to_array(), b.to_array());
            let fd = [0, 1, 2].map(|i| angle_diff(b[i], a[i]) / (2.0 * dt));
            let s = &mut samples[n];
            s.fd_rates = Some(fd);
            if s.omega.z.abs() > 1e-12 {
                s.yaw_ratio = Some(fd[0] / s.omega.z);
            }
        }
    }
    let peak = samples
        .iter()
        .filter_map(|s| s.model_rates)
        .flat_map(|r| r.map(f64::abs))
        .fold(0.0, f64::max);
    let worst = samples
        .iter()
        .filter_map(|s| Some((s.fd_rates?, s.model_rates?)))
        .flat_map(|(fd, model)| [0, 1, 2].map(|i| (fd[i] - model[i]).abs()))
        .fold(None, |acc: Option<f64>, e| Some(acc.map_or(e, |a| a.max(e))));
    let rate_error = worst.map(|w| if peak > 0.0 { w / peak } else { w });
    Ok(VertebraTrace {
        vertebra,
        samples,
        rate_error,
    })
}

pub fn validate_trajectory(m: &MechanismParams, g: &GaitParams, samples_per_cycle: usize) -> Result<TrajectoryReport> {
    validate_trajectory_with_threshold(m, g, samples_per_cycle, DEFAULT_THRESHOLD)
}

/// Solves every sample of one cycle per vertebra, tracking the assembly branch.
pub fn validate_trajectory_with_threshold(
    m: &MechanismParams,
    g: &GaitParams,
    samples_per_cycle: usize,
    threshold: f64,
) -> Result<TrajectoryReport> {
    g.validate()?;
    if samples_per_cycle < 8 {
        return Err(Error::InvalidInput("samples_per_cycle must be at least 8".into()));
    }
    let vertebrae: Vec<VertebraTrace> = (1..=g.vertebra_count)
        .into_par_iter()
        .map(|k| trace_vertebra(m, g, k, samples_per_cycle, threshold))
        .collect::<Result<_>>()?;
    let violations = vertebrae
        .iter()
        .flat_map(|v| {
            v.samples
                .iter()
                .enumerate()
                .filter(|(_, s)| s.flags != 0)
                .map(|(n, s)| Violation {
                    vertebra: v.vertebra,
                    sample: n,
                    flags: s.flags,
                })
        })
        .collect();
    let branch_continuous = vertebrae.iter().all(|v| {
        v.samples.windows(2).all(|w| match (w[0].branch, w[1].branch) {
            (Some(a), Some(b)) => a.elbow == b.elbow || (w[0].flags | w[1].flags) & VIOLATION_SINGULAR != 0,
            _ => true,
        })
    });
    let max_rate_error = vertebrae
        .iter()
        .filter_map(|v| v.rate_error)
        .fold(None, |acc: Option<f64>, e| Some(acc.map_or(e, |a| a.max(e))));
    Ok(TrajectoryReport {
        samples_per_cycle,
        vertebrae,
        violations,
        branch_continuous,
        max_rate_error,
    })
}

pub const TRAJECTORY_CSV_HEADER: [&str; 11] = [
    "time",
    "vertebra",
    "yaw",
    "pitch",
    "roll",
    "theta1",
    "theta2",
    "theta3",
    "margin",
    "kappa",
    "viol_flags",
];

pub fn write_trajectory_csv<W: Write>(report: &TrajectoryReport, out: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRAJECTORY_CSV_HEADER)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for v in &report.vertebrae {
        for s in &v.samples {
            let j = s.joints;
            w.write_record([
                s.time.to_string(),
                v.vertebra.to_string(),
                s.command.yaw.to_string(),
                s.command.pitch.to_string(),
                s.command.roll.to_string(),
                opt(j.map(|j| j.theta1)),
                opt(j.map(|j| j.theta2)),
                opt(j.map(|j| j.theta3)),
                opt(s.margin),
                opt(s.kappa),
                s.flags.to_string(),
            ])?;
        }
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanism::{mechanism_from_variant, VariantTag};

    fn pa() -> MechanismParams {
        mechanism_from_variant(VariantTag::ParallelActuators)
    }

    #[test]
    fn zero_amplitude_is_identity() {
        let g = GaitParams::zero_amplitude();
        for k in 1..=g.vertebra_count {
            for t in [0.0, 0.13, 0.5, 7.25] {
                assert_eq!(gait_orientation(&g, k, t), Orientation::IDENTITY);
            }
        }
    }

    #[test]
    fn periodic() {
        let g = GaitParams::default();
        for k in 1..=g.vertebra_count {
            for t in [0.0, 0.1, 0.37, 0.9] {
                let a = gait_orientation(&g, k, t);
                let b = gait_orientation(&g, k, t + 1.0 / g.cycle_frequency_hz);
                assert!((a.yaw - b.yaw).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn adjacent_vertebrae_lag_by_arc_over_wavelength() {
        let g = GaitParams::default();
        let n = 100_000;
        // Time of the first upward zero crossing of the yaw command.
        let crossing = |k: usize| {
            let y = |i: usize| gait_orientation(&g, k, i as f64 / n as f64).yaw;
            let i = (0..n).find(|&i| y(i) <= 0.0 && y(i + 1) > 0.0).unwrap();
            let (a, b) = (y(i), y(i + 1));
            (i as f64 + a / (a - b)) / n as f64
        };
        let ds = 1.0 / g.vertebra_count as f64;
        let expected = ds / g.wavelength;
        for k in 1..g.vertebra_count {
            let lag = (crossing(k + 1) - crossing(k)).rem_euclid(1.0);
            assert!((lag - expected).abs() < 1e-6, "{lag} vs {expected}");
        }
    }

    #[test]
    fn clamped_to_envelope() {
        let g = GaitParams {
            yaw_amplitude: vec![(0.0, 80f64.to_radians())],
            pitch_offset: 0.5,
            roll_gain: 1.0,
            ..GaitParams::default()
        };
        let [y, p, r] = envelope();
        for t in 0..50 {
            let o = gait_orientation(&g, 3, t as f64 / 50.0);
            assert!(o.yaw.abs() <= y && o.pitch.abs() <= p && o.roll.abs() <= r);
        }
    }

    #[test]
    fn zero_amplitude_trajectory_is_clean() {
        let m = pa();
        let report = validate_trajectory(&m, &GaitParams::zero_amplitude(), 16).unwrap();
        assert!(report.violations.is_empty());
        let home = solve_ik(&m, &m.home_orientation()).unwrap();
        let margin = classify_singularity(home.working_pose().unwrap(), &m, DEFAULT_THRESHOLD).margin;
        for v in &report.vertebrae {
            assert!(v.samples.iter().all(|s| s.margin == Some(margin)));
        }
    }

    #[test]
    fn excessive_amplitude_is_reported() {
        let g = GaitParams {
            yaw_amplitude: vec![(0.0, 80f64.to_radians())],
            ..GaitParams::default()
        };
        let report = validate_trajectory(&pa(), &g, 64).unwrap();
        assert!(!report.violations.is_empty());
        assert!(report.violations.iter().any(|v| v.flags & VIOLATION_ENVELOPE != 0));
    }

    #[test]
    fn too_few_samples() {
        assert!(matches!(
            validate_trajectory(&pa(), &GaitParams::default(), 4),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn config_round_trip() {
        let g = GaitParams::full_envelope();
        let text = serde_json::to_string(&g).unwrap();
        assert_eq!(GaitParams::from_json(&text).unwrap(), g);
        assert_eq!(GaitParams::from_json("{}").unwrap(), GaitParams::default());
    }
}
