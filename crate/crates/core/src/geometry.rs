//! Vector and rotation primitives shared by the rest of the crate.
//!
//! Orientations use the intrinsic z–y′–x″ (yaw, pitch, roll) composition
//! `R = Rz(yaw) · Ry(pitch) · Rx(roll)`, where yaw is also the coordinate of
//! the first (actuated) revolute joint of the coaxial leg.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = nalgebra::Vector3<f64>;
pub type Mat3 = nalgebra::Matrix3<f64>;

/// Below this `|cos(pitch)|` yaw and roll can no longer be separated.
pub const GIMBAL_TOLERANCE: f64 = 1e-9;

/// Accepted deviation from orthogonality in [`rpy_from_rotation`].
pub const ROTATION_TOLERANCE: f64 = 1e-9;

/// Wraps an angle into `(-π, π]`.
pub fn normalize_angle(angle: f64) -> f64 {
    let mut a = angle % (2.0 * PI);
    if a <= -PI {
        a += 2.0 * PI;
    } else if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// Signed shortest difference `a - b` on the circle.
pub fn angle_diff(a: f64, b: f64) -> f64 {
    normalize_angle(a - b)
}

/// Platform attitude as a yaw/pitch/roll triple, radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Orientation {
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
}

impl Orientation {
    pub const IDENTITY: Orientation = Orientation {
        yaw: 0.0,
        pitch: 0.0,
        roll: 0.0,
    };

    /// Builds an orientation with every angle wrapped into `(-π, π]`.
    pub fn new(yaw: f64, pitch: f64, roll: f64) -> Self {
        Self {
            yaw: normalize_angle(yaw),
            pitch: normalize_angle(pitch),
            roll: normalize_angle(roll),
        }
    }

    pub fn from_degrees(yaw: f64, pitch: f64, roll: f64) -> Self {
        Self::new(yaw.to_radians(), pitch.to_radians(), roll.to_radians())
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.yaw, self.pitch, self.roll]
    }

    pub fn rotation(&self) -> Mat3 {
        rotation_from_rpy(self)
    }

    /// Adds per-axis offsets to the angles (used for envelopes around a home posture).
    pub fn offset_by(&self, offset: &Orientation) -> Orientation {
        Orientation::new(
            self.yaw + offset.yaw,
            self.pitch + offset.pitch,
            self.roll + offset.roll,
        )
    }

    pub fn is_finite(&self) -> bool {
        self.yaw.is_finite() && self.pitch.is_finite() && self.roll.is_finite()
    }
}

pub fn rot_x(angle: f64) -> Mat3 {
    let (s, c) = angle.sin_cos();
    Mat3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

pub fn rot_y(angle: f64) -> Mat3 {
    let (s, c) = angle.sin_cos();
    Mat3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

pub fn rot_z(angle: f64) -> Mat3 {
    let (s, c) = angle.sin_cos();
    Mat3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Rotation about an arbitrary unit axis (Rodrigues).
pub fn rot_axis(axis: &Vec3, angle: f64) -> Mat3 {
    let k = axis.normalize();
    let (s, c) = angle.sin_cos();
    let skew = skew(&k);
    Mat3::identity() + skew * s + skew * skew * (1.0 - c)
}

pub fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// `Rz(yaw) · Ry(pitch) · Rx(roll)`, written out in closed form.
pub fn rotation_from_rpy(o: &Orientation) -> Mat3 {
    let (s3, c3) = o.yaw.sin_cos();
    let (sp, cp) = o.pitch.sin_cos();
    let (sr, cr) = o.roll.sin_cos();
    Mat3::new(
        c3 * cp,
        c3 * sp * sr - s3 * cr,
        c3 * sp * cr + s3 * sr,
        s3 * cp,
        s3 * sp * sr + c3 * cr,
        s3 * sp * cr - c3 * sr,
        -sp,
        cp * sr,
        cp * cr,
    )
}

/// Frobenius norm of `MᵀM − I`.
pub fn orthogonality_error(m: &Mat3) -> f64 {
    (m.transpose() * m - Mat3::identity()).norm()
}

/// Inverse of [`rotation_from_rpy`] with pitch in `[-π/2, π/2]`.
pub fn rpy_from_rotation(m: &Mat3) -> Result<Orientation> {
    let orthogonality = orthogonality_error(m);
    let det = m.determinant();
    if orthogonality.is_nan() || orthogonality >= ROTATION_TOLERANCE || (det - 1.0).abs() > ROTATION_TOLERANCE {
        return Err(Error::NotARotation { orthogonality, det });
    }
    let cos_pitch = m[(0, 0)].hypot(m[(1, 0)]);
    if cos_pitch < GIMBAL_TOLERANCE {
        return Err(Error::GimbalLock { cos_pitch });
    }
    let pitch = (-m[(2, 0)]).atan2(cos_pitch);
    let yaw = m[(1, 0)].atan2(m[(0, 0)]);
    let roll = m[(2, 1)].atan2(m[(2, 2)]);
    Ok(Orientation::new(yaw, pitch, roll))
}

/// Yaw, pitch and roll rates. Field names match [`Orientation`].
pub type RpyRates = Orientation;

/// Instantaneous joint axes of the yaw/pitch/roll chain: `ẑ`, `ŷ′`, `x̂″`.
pub fn rpy_axes(o: &Orientation) -> [Vec3; 3] {
    let (s3, c3) = o.yaw.sin_cos();
    let (sp, cp) = o.pitch.sin_cos();
    [Vec3::z(), Vec3::new(-s3, c3, 0.0), Vec3::new(c3 * cp, s3 * cp, -sp)]
}

/// `ω = yaw_rate·ẑ + pitch_rate·ŷ′ + roll_rate·x̂″`.
pub fn rpy_rates_to_angular_velocity(o: &Orientation, rates: &RpyRates) -> Vec3 {
    let [z, y1, x2] = rpy_axes(o);
    z * rates.yaw + y1 * rates.pitch + x2 * rates.roll
}

/// Inverts the rate composition for the yaw/pitch/roll rates.
pub fn angular_velocity_to_rpy_rates(o: &Orientation, omega: &Vec3) -> Result<RpyRates> {
    let (s3, c3) = o.yaw.sin_cos();
    let (sp, cp) = o.pitch.sin_cos();
    if cp.abs() < GIMBAL_TOLERANCE {
        return Err(Error::GimbalLock { cos_pitch: cp });
    }
    let roll = (c3 * omega.x + s3 * omega.y) / cp;
    let pitch = -s3 * omega.x + c3 * omega.y;
    let yaw = omega.z + sp * roll;
    Ok(RpyRates { yaw, pitch, roll })
}

/// Largest absolute entry.
pub fn max_abs(m: &Mat3) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}
