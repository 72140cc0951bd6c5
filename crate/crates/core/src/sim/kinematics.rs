use nalgebra::{Rotation3, Vector3};
use serde::{Deserialize, Serialize};

/// Joint vector of the six-axis robot, radians.
pub type Joints = [f64; 6];

/// Cartesian pose. `orientation` holds ZYX Euler angles `[yaw, pitch, roll]`:
/// the rotation is `Rz(yaw) * Ry(pitch) * Rx(roll)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pose {
    pub position: [f64; 3],
    pub orientation: [f64; 3],
}

impl Pose {
    pub const IDENTITY: Pose = Pose { position: [0.0; 3], orientation: [0.0; 3] };

    pub fn rotation(&self) -> Rotation3<f64> {
        let [yaw, pitch, roll] = self.orientation;
        Rotation3::from_euler_angles(roll, pitch, yaw)
    }

    pub fn position_vector(&self) -> Vector3<f64> {
        Vector3::from(self.position)
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().chain(&self.orientation).all(|v| v.is_finite())
    }
}

/// Forward and inverse kinematics of the robot arm.
pub trait Kinematics: Send + Sync {
    fn fk(&self, joints: &Joints) -> Pose;

    /// `None` when the pose is unreachable.
    fn ik(&self, pose: &Pose) -> Option<Joints>;
}

/// Joints 1-3 are the TCP position and joints 4-6 its yaw, pitch and roll.
/// Trivially invertible, so `fk(ik(p)) == p` holds bit for bit.
#[derive(Debug, Clone, Copy, Default)]
pub struct CartesianKinematics;

impl Kinematics for CartesianKinematics {
    fn fk(&self, j: &Joints) -> Pose {
        Pose { position: [j[0], j[1], j[2]], orientation: [j[3], j[4], j[5]] }
    }

    fn ik(&self, pose: &Pose) -> Option<Joints> {
        let [x, y, z] = pose.position;
        let [a, b, c] = pose.orientation;
        Some([x, y, z, a, b, c])
    }
}
