//! Kinematics of a two-degree-of-freedom spherical parallel wrist with a
//! coaxial yaw actuator, used as the joint between eel-robot vertebrae.

pub mod differential;
pub mod error;
pub mod gait;
pub mod geometry;
pub mod kinematics;
pub mod mechanism;
pub mod oracle;
pub mod workspace;

pub use error::{Error, Result};
pub use geometry::{Mat3, Orientation, Vec3};
pub use kinematics::{solve_fk, solve_fk_numeric, solve_ik, FkSolutionSet, IkSolutionSet};
pub use mechanism::{mechanism_from_variant, JointAngles, Leg, MechanismParams, PoseSolution, VariantTag};
