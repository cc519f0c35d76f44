//! Root-relative 3D poses.

use crate::error::{Error, Result};

/// A pose is a flat `[x0, y0, z0, x1, y1, z1, ...]` vector of joint
/// positions in millimeters, listed in skeleton joint order.
///
/// Poses are root-relative by convention: joint 0 is the root and sits at
/// the origin. Operations that promise root-relative output (sampling,
/// corruption, prediction) re-zero the root explicitly; raw network decode
/// output may carry a small root offset until it is re-zeroed.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose {
    joints: Vec<f64>,
}

impl Pose {
    /// Wrap a coordinate vector. The length must be a positive multiple of
    /// three and every entry finite.
    pub fn new(joints: Vec<f64>) -> Result<Pose> {
        if joints.is_empty() || joints.len() % 3 != 0 {
            return Err(Error::Dimension {
                op: "pose",
                detail: format!(
                    "coordinate count must be a positive multiple of 3, got {}",
                    joints.len()
                ),
            });
        }
        if !joints.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { op: "pose" });
        }
        Ok(Pose { joints })
    }

    pub fn from_slice(coords: &[f64]) -> Result<Pose> {
        Pose::new(coords.to_vec())
    }

    /// All-zero pose with the given joint count.
    pub fn zeros(joint_count: usize) -> Pose {
        Pose {
            joints: vec![0.0; joint_count * 3],
        }
    }

    pub fn joint_count(&self) -> usize {
        self.joints.len() / 3
    }

    /// Flat coordinate dimension `3 * joint_count`.
    pub fn dim(&self) -> usize {
        self.joints.len()
    }

    pub fn joint(&self, index: usize) -> [f64; 3] {
        let base = index * 3;
        [
            self.joints[base],
            self.joints[base + 1],
            self.joints[base + 2],
        ]
    }

    pub fn set_joint(&mut self, index: usize, position: [f64; 3]) {
        let base = index * 3;
        self.joints[base..base + 3].copy_from_slice(&position);
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.joints
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.joints
    }

    /// Force the root joint onto the origin.
    pub fn zero_root(&mut self) {
        self.joints[0] = 0.0;
        self.joints[1] = 0.0;
        self.joints[2] = 0.0;
    }

    pub fn is_root_centered(&self) -> bool {
        self.joints[0] == 0.0 && self.joints[1] == 0.0 && self.joints[2] == 0.0
    }
}
