use crate::lie::{rotation_from_rpy, so3_exp, ExtendedPose};
use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

/// Shape of the second horizontal coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LateralShape {
    /// `p_y = A_y cos(w_y t)`: a closed loop.
    #[default]
    Cos,
    /// `p_y = A_y sin(w_y t)`.
    Sin,
}

/// Position `p_i(t) = A_i·f_i(w_i t)` and constant body rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrajectorySpec {
    pub amplitude: [f64; 3],
    pub frequency: [f64; 3],
    pub lateral: LateralShape,
    /// Body angular rate, rad/s.
    pub body_rate: [f64; 3],
    /// Initial attitude as roll, pitch, yaw.
    pub initial_rpy: [f64; 3],
}

impl Default for TrajectorySpec {
    fn default() -> Self {
        Self {
            amplitude: [70.0, 80.0, 7.0],
            frequency: [0.15, 0.15, 0.75],
            lateral: LateralShape::Cos,
            body_rate: [0.2, 0.3, 0.1],
            initial_rpy: [0.0, 0.0, 0.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthSample {
    pub state: ExtendedPose,
    /// Body angular rate.
    pub omega: Vector3<f64>,
    /// World-frame acceleration.
    pub accel: Vector3<f64>,
}

impl TrajectorySpec {
    fn initial_rotation(&self) -> Matrix3<f64> {
        let [r, p, y] = self.initial_rpy;
        rotation_from_rpy(r, p, y)
    }

    /// Position, velocity and acceleration at `t`.
    pub fn kinematics(&self, t: f64) -> [Vector3<f64>; 3] {
        let mut out = [Vector3::zeros(); 3];
        for i in 0..3 {
            let (a, w) = (self.amplitude[i], self.frequency[i]);
            let (s, c) = (w * t).sin_cos();
            let use_cos = i == 1 && self.lateral == LateralShape::Cos;
            let (p, v) = if use_cos {
                (a * c, -a * w * s)
            } else {
                (a * s, a * w * c)
            };
            out[0][i] = p;
            out[1][i] = v;
            out[2][i] = -w * w * p;
        }
        out
    }

    pub fn ground_truth(&self, t: f64) -> TruthSample {
        let [p, v, a] = self.kinematics(t);
        let omega = Vector3::from(self.body_rate);
        let rot = self.initial_rotation() * so3_exp(&(omega * t));
        TruthSample {
            state: ExtendedPose::new(rot, p, v),
            omega,
            accel: a,
        }
    }
}

pub fn ground_truth(t: f64, spec: &TrajectorySpec) -> TruthSample {
    spec.ground_truth(t)
}
