//! Articulated skeleton model and forward kinematics.
//!
//! A skeleton is a tree of joints rooted at joint 0. Every non-root joint
//! `j` carries the limb from `parent(j)` to `j`: its length in millimeters
//! and the range of the local rotation that orients it. Joint `j`'s Euler
//! angles (yaw, pitch, roll) build `R_j = Rz(yaw)·Ry(pitch)·Rx(roll)`;
//! orientations accumulate down the tree, `G_j = G_parent · R_j`, and the
//! limb extends along the rotated z-axis:
//!
//! ```text
//! p_root = 0,   p_j = p_parent + length_j · (G_j · ẑ)
//! ```
//!
//! Angle ranges need not straddle zero — the midpoint of a range acts as
//! the rest angle, which is how the default human model points legs down
//! and arms out from a shared convention.

use crate::autoencoder::Pose;
use crate::error::{Error, Result};
use crate::numerics::RngStream;

/// One limb, named after its child joint.
#[derive(Debug, Clone, PartialEq)]
pub struct Limb {
    pub name: String,
    pub parent: usize,
    pub child: usize,
}

/// Inclusive angle interval in radians.
pub type AngleRange = (f64, f64);

#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonModel {
    parents: Vec<Option<usize>>,
    limb_lengths: Vec<f64>,
    angle_ranges: Vec<[AngleRange; 3]>,
    joint_names: Vec<String>,
    limbs: Vec<Limb>,
}

impl SkeletonModel {
    /// Build and validate a model. Joints must be listed in topological
    /// order: joint 0 is the root (no parent) and every other joint's
    /// parent index must be smaller than its own, which guarantees the
    /// parent links form a tree. `limb_lengths[0]` is ignored.
    pub fn new(
        parents: Vec<Option<usize>>,
        limb_lengths: Vec<f64>,
        angle_ranges: Vec<[AngleRange; 3]>,
        joint_names: Vec<String>,
    ) -> Result<SkeletonModel> {
        let op = "skeleton_model";
        let count = parents.len();
        let fail = |name: &'static str, detail: String| Error::Parameter { op, name, detail };
        if count < 2 {
            return Err(fail("parents", format!("need at least 2 joints, got {count}")));
        }
        if limb_lengths.len() != count || angle_ranges.len() != count || joint_names.len() != count
        {
            return Err(Error::Dimension {
                op,
                detail: format!(
                    "{count} joints but {} lengths, {} angle ranges, {} names",
                    limb_lengths.len(),
                    angle_ranges.len(),
                    joint_names.len()
                ),
            });
        }
        if parents[0].is_some() {
            return Err(fail("parents", "joint 0 is the root and has no parent".into()));
        }
        for j in 1..count {
            match parents[j] {
                Some(p) if p < j => {}
                Some(p) => {
                    return Err(fail(
                        "parents",
                        format!("joint {j} has parent {p}; parents must precede children"),
                    ))
                }
                None => return Err(fail("parents", format!("joint {j} has no parent"))),
            }
            let len = limb_lengths[j];
            if !(len > 0.0 && len.is_finite()) {
                return Err(fail(
                    "limb_lengths",
                    format!("limb into joint {j} must be positive, got {len}"),
                ));
            }
        }
        for (j, ranges) in angle_ranges.iter().enumerate() {
            for &(lo, hi) in ranges {
                if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                    return Err(fail(
                        "angle_ranges",
                        format!("joint {j} has an empty or non-finite range ({lo}, {hi})"),
                    ));
                }
            }
        }
        for (j, name) in joint_names.iter().enumerate() {
            if name.is_empty() || name.contains([',', ';', ':', '\n', '=']) {
                return Err(fail(
                    "joint_names",
                    format!("joint {j} name {name:?} is empty or contains reserved characters"),
                ));
            }
            if joint_names[..j].contains(name) {
                return Err(fail("joint_names", format!("duplicate joint name {name:?}")));
            }
        }
        let limbs = parents
            .iter()
            .enumerate()
            .filter_map(|(child, parent)| {
                parent.map(|parent| Limb {
                    name: joint_names[child].clone(),
                    parent,
                    child,
                })
            })
            .collect();
        Ok(SkeletonModel {
            parents,
            limb_lengths,
            angle_ranges,
            joint_names,
            limbs,
        })
    }

    /// The default 17-joint humanoid: pelvis root; spine–thorax–neck–head
    /// chain; three-joint legs and arms on each side. Lengths are rough
    /// human proportions in millimeters.
    pub fn default_human() -> SkeletonModel {
        const FRAC_PI_2: f64 = std::f64::consts::FRAC_PI_2;
        let n = |center: [f64; 3], width: [f64; 3]| -> [AngleRange; 3] {
            [
                (center[0] - width[0], center[0] + width[0]),
                (center[1] - width[1], center[1] + width[1]),
                (center[2] - width[2], center[2] + width[2]),
            ]
        };
        // (name, parent, length, angle center, angle width); centers encode
        // the rest direction, widths the articulation freedom.
        #[rustfmt::skip]
        let table: Vec<(&str, Option<usize>, f64, [f64; 3], [f64; 3])> = vec![
            ("pelvis",     None,      0.0, [0.0, 0.0, 0.0],        [0.5, 0.1, 0.1]),
            ("spine",      Some(0), 150.0, [0.0, 0.0, 0.0],        [0.1, 0.15, 0.1]),
            ("thorax",     Some(1), 150.0, [0.0, 0.0, 0.0],        [0.1, 0.1, 0.1]),
            ("neck",       Some(2), 100.0, [0.0, 0.0, 0.0],        [0.2, 0.2, 0.15]),
            ("head",       Some(3), 120.0, [0.0, 0.0, 0.0],        [0.15, 0.15, 0.1]),
            ("l_hip",      Some(0),  90.0, [0.0, FRAC_PI_2, 0.0],  [0.05, 0.05, 0.05]),
            ("l_knee",     Some(5), 400.0, [0.0, FRAC_PI_2, 0.0],  [0.2, 0.4, 0.1]),
            ("l_ankle",    Some(6), 400.0, [0.0, 0.5, 0.0],        [0.05, 0.5, 0.05]),
            ("r_hip",      Some(0),  90.0, [0.0, -FRAC_PI_2, 0.0], [0.05, 0.05, 0.05]),
            ("r_knee",     Some(8), 400.0, [0.0, -FRAC_PI_2, 0.0], [0.2, 0.4, 0.1]),
            ("r_ankle",    Some(9), 400.0, [0.0, 0.5, 0.0],        [0.05, 0.5, 0.05]),
            ("l_shoulder", Some(2), 150.0, [0.0, FRAC_PI_2, 0.0],  [0.05, 0.05, 0.05]),
            ("l_elbow",    Some(11), 280.0, [0.0, FRAC_PI_2, 0.0], [0.3, 0.5, 0.2]),
            ("l_wrist",    Some(12), 250.0, [0.0, -0.5, 0.0],      [0.05, 0.5, 0.05]),
            ("r_shoulder", Some(2), 150.0, [0.0, -FRAC_PI_2, 0.0], [0.05, 0.05, 0.05]),
            ("r_elbow",    Some(14), 280.0, [0.0, -FRAC_PI_2, 0.0], [0.3, 0.5, 0.2]),
            ("r_wrist",    Some(15), 250.0, [0.0, 0.5, 0.0],       [0.05, 0.5, 0.05]),
        ];
        SkeletonModel::new(
            table.iter().map(|r| r.1).collect(),
            table.iter().map(|r| r.2).collect(),
            table.iter().map(|r| n(r.3, r.4)).collect(),
            table.iter().map(|r| r.0.to_string()).collect(),
        )
        .expect("default model is valid")
    }

    pub fn joint_count(&self) -> usize {
        self.parents.len()
    }

    pub fn parent(&self, joint: usize) -> Option<usize> {
        self.parents[joint]
    }

    /// Length of the limb from `parent(joint)` into `joint`, millimeters.
    pub fn limb_length(&self, joint: usize) -> f64 {
        self.limb_lengths[joint]
    }

    pub fn angle_ranges(&self, joint: usize) -> &[AngleRange; 3] {
        &self.angle_ranges[joint]
    }

    pub fn joint_name(&self, joint: usize) -> &str {
        &self.joint_names[joint]
    }

    pub fn joint_names(&self) -> &[String] {
        &self.joint_names
    }

    pub fn limbs(&self) -> &[Limb] {
        &self.limbs
    }

    pub(crate) fn parents(&self) -> &[Option<usize>] {
        &self.parents
    }

    pub(crate) fn limb_lengths(&self) -> &[f64] {
        &self.limb_lengths
    }

    pub(crate) fn raw_angle_ranges(&self) -> &[[AngleRange; 3]] {
        &self.angle_ranges
    }

    /// Longest root-to-leaf path of limb lengths, in millimeters; the
    /// model's characteristic size, used e.g. to express noise levels as a
    /// fraction of body size.
    pub fn scale_mm(&self) -> f64 {
        let mut depth = vec![0.0f64; self.joint_count()];
        let mut best = 0.0f64;
        for j in 1..self.joint_count() {
            let p = self.parents[j].expect("non-root");
            depth[j] = depth[p] + self.limb_lengths[j];
            best = best.max(depth[j]);
        }
        best
    }

    /// Same topology with every limb length multiplied by `factor` —
    /// subject variants are built this way.
    pub fn scaled(&self, factor: f64) -> Result<SkeletonModel> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(Error::Parameter {
                op: "skeleton_scaled",
                name: "factor",
                detail: format!("must be positive, got {factor}"),
            });
        }
        let mut lengths = self.limb_lengths.clone();
        for l in lengths.iter_mut().skip(1) {
            *l *= factor;
        }
        SkeletonModel::new(
            self.parents.clone(),
            lengths,
            self.angle_ranges.clone(),
            self.joint_names.clone(),
        )
    }

    /// Same topology with every angle range shrunk or stretched about its
    /// midpoint by `factor` — action presets are built this way. `factor`
    /// of zero collapses every range to the canonical pose.
    pub fn with_angle_scale(&self, factor: f64) -> Result<SkeletonModel> {
        if !(factor >= 0.0 && factor.is_finite()) {
            return Err(Error::Parameter {
                op: "skeleton_angle_scale",
                name: "factor",
                detail: format!("must be >= 0, got {factor}"),
            });
        }
        let ranges = self
            .angle_ranges
            .iter()
            .map(|r| {
                r.map(|(lo, hi)| {
                    let center = 0.5 * (lo + hi);
                    let half = 0.5 * (hi - lo) * factor;
                    (center - half, center + half)
                })
            })
            .collect();
        SkeletonModel::new(
            self.parents.clone(),
            self.limb_lengths.clone(),
            ranges,
            self.joint_names.clone(),
        )
    }
}

type Mat3 = [[f64; 3]; 3];

fn mat3_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    out
}

fn rot_zyx(yaw: f64, pitch: f64, roll: f64) -> Mat3 {
    let (sz, cz) = yaw.sin_cos();
    let (sy, cy) = pitch.sin_cos();
    let (sx, cx) = roll.sin_cos();
    let rz = [[cz, -sz, 0.0], [sz, cz, 0.0], [0.0, 0.0, 1.0]];
    let ry = [[cy, 0.0, sy], [0.0, 1.0, 0.0], [-sy, 0.0, cy]];
    let rx = [[1.0, 0.0, 0.0], [0.0, cx, -sx], [0.0, sx, cx]];
    mat3_mul(&mat3_mul(&rz, &ry), &rx)
}

/// Forward kinematics for one full set of joint angles, `angles[j] =
/// (yaw, pitch, roll)`. The root sits at the origin, so the result is
/// root-relative by construction.
pub fn forward_kinematics(model: &SkeletonModel, angles: &[[f64; 3]]) -> Result<Pose> {
    if angles.len() != model.joint_count() {
        return Err(Error::Dimension {
            op: "forward_kinematics",
            detail: format!(
                "model has {} joints, got {} angle triples",
                model.joint_count(),
                angles.len()
            ),
        });
    }
    let count = model.joint_count();
    let mut global: Vec<Mat3> = Vec::with_capacity(count);
    let mut positions = vec![[0.0f64; 3]; count];
    for j in 0..count {
        let local = rot_zyx(angles[j][0], angles[j][1], angles[j][2]);
        match model.parent(j) {
            None => global.push(local),
            Some(p) => {
                let g = mat3_mul(&global[p], &local);
                let dir = [g[0][2], g[1][2], g[2][2]];
                let len = model.limb_length(j);
                for k in 0..3 {
                    positions[j][k] = positions[p][k] + len * dir[k];
                }
                global.push(g);
            }
        }
    }
    Pose::new(positions.into_iter().flatten().collect())
}

/// Draw joint angles uniformly within the model's ranges (joint order,
/// yaw/pitch/roll within each joint) and run forward kinematics.
pub fn sample_pose(model: &SkeletonModel, rng: &mut RngStream) -> Pose {
    let angles: Vec<[f64; 3]> = model
        .angle_ranges
        .iter()
        .map(|r| r.map(|(lo, hi)| rng.uniform_in(lo, hi)))
        .collect();
    forward_kinematics(model, &angles).expect("angles match model")
}

/// The deterministic pose at every range's midpoint.
pub fn canonical_pose(model: &SkeletonModel) -> Pose {
    let angles: Vec<[f64; 3]> = model
        .angle_ranges
        .iter()
        .map(|r| r.map(|(lo, hi)| 0.5 * (lo + hi)))
        .collect();
    forward_kinematics(model, &angles).expect("angles match model")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_joint_chain() -> SkeletonModel {
        SkeletonModel::new(
            vec![None, Some(0)],
            vec![0.0, 100.0],
            vec![[(0.0, 0.0); 3], [(0.0, 0.0); 3]],
            vec!["root".into(), "tip".into()],
        )
        .unwrap()
    }

    #[test]
    fn zero_angle_chain_extends_along_z() {
        let model = two_joint_chain();
        let mut rng = RngStream::new(1);
        let pose = sample_pose(&model, &mut rng);
        assert_eq!(pose.joint(0), [0.0, 0.0, 0.0]);
        assert_eq!(pose.joint(1), [0.0, 0.0, 100.0]);
    }

    #[test]
    fn collapsed_ranges_are_deterministic_across_rngs() {
        let model = two_joint_chain();
        let a = sample_pose(&model, &mut RngStream::new(1));
        let b = sample_pose(&model, &mut RngStream::new(999));
        assert_eq!(a, b);
        assert_eq!(a, canonical_pose(&model));
    }

    #[test]
    fn default_human_shape() {
        let model = SkeletonModel::default_human();
        assert_eq!(model.joint_count(), 17);
        assert_eq!(model.limbs().len(), 16);
        assert_eq!(model.joint_name(0), "pelvis");
        assert_eq!(model.limbs()[0].name, "spine");
        // longest chain is pelvis -> spine -> thorax -> shoulder -> elbow -> wrist
        assert_eq!(model.scale_mm(), 150.0 + 150.0 + 150.0 + 280.0 + 250.0);
    }

    #[test]
    fn sampled_limbs_keep_their_exact_lengths() {
        let model = SkeletonModel::default_human();
        let mut rng = RngStream::new(42);
        for _ in 0..50 {
            let pose = sample_pose(&model, &mut rng);
            assert!(pose.is_root_centered());
            for limb in model.limbs() {
                let p = pose.joint(limb.parent);
                let c = pose.joint(limb.child);
                let len = ((c[0] - p[0]).powi(2) + (c[1] - p[1]).powi(2) + (c[2] - p[2]).powi(2))
                    .sqrt();
                let want = model.limb_length(limb.child);
                assert!(
                    (len - want).abs() <= 1e-9,
                    "{}: {len} vs {want}",
                    limb.name
                );
            }
        }
    }

    #[test]
    fn same_seed_reproduces_the_sequence() {
        let model = SkeletonModel::default_human();
        let mut a = RngStream::new(7);
        let mut b = RngStream::new(7);
        for _ in 0..5 {
            assert_eq!(sample_pose(&model, &mut a), sample_pose(&model, &mut b));
        }
    }

    #[test]
    fn scaling_scales_lengths_and_angle_scale_zero_collapses() {
        let model = SkeletonModel::default_human();
        let half = model.scaled(0.5).unwrap();
        assert_eq!(half.limb_length(6), 200.0);
        assert_eq!(half.scale_mm(), 0.5 * model.scale_mm());
        let frozen = model.with_angle_scale(0.0).unwrap();
        let a = sample_pose(&frozen, &mut RngStream::new(3));
        let b = sample_pose(&frozen, &mut RngStream::new(4));
        assert_eq!(a, b);
        assert_eq!(a, canonical_pose(&model));
        assert!(model.scaled(0.0).is_err());
        assert!(model.with_angle_scale(-1.0).is_err());
    }

    #[test]
    fn invalid_models_are_rejected() {
        // forward-referencing parent breaks the topological-order rule
        assert!(SkeletonModel::new(
            vec![None, Some(2), Some(1)],
            vec![0.0, 1.0, 1.0],
            vec![[(0.0, 0.0); 3]; 3],
            vec!["a".into(), "b".into(), "c".into()],
        )
        .is_err());
        // zero limb length
        assert!(SkeletonModel::new(
            vec![None, Some(0)],
            vec![0.0, 0.0],
            vec![[(0.0, 0.0); 3]; 2],
            vec!["a".into(), "b".into()],
        )
        .is_err());
        // inverted angle range
        assert!(SkeletonModel::new(
            vec![None, Some(0)],
            vec![0.0, 1.0],
            vec![[(0.0, 0.0); 3], [(1.0, -1.0), (0.0, 0.0), (0.0, 0.0)]],
            vec!["a".into(), "b".into()],
        )
        .is_err());
        // duplicate joint names
        assert!(SkeletonModel::new(
            vec![None, Some(0)],
            vec![0.0, 1.0],
            vec![[(0.0, 0.0); 3]; 2],
            vec!["a".into(), "a".into()],
        )
        .is_err());
    }

    #[test]
    fn canonical_human_is_plausibly_upright() {
        let model = SkeletonModel::default_human();
        let pose = canonical_pose(&model);
        // head above pelvis, ankles below, wrists hang low
        assert!(pose.joint(4)[2] > 400.0, "head at {:?}", pose.joint(4));
        assert!(pose.joint(7)[2] < -700.0, "l_ankle at {:?}", pose.joint(7));
        assert!(pose.joint(10)[2] < -700.0, "r_ankle at {:?}", pose.joint(10));
        assert!(pose.joint(13)[2] < -100.0, "l_wrist at {:?}", pose.joint(13));
        // left and right sides land on opposite x sides
        assert!(pose.joint(6)[0] > 0.0 && pose.joint(9)[0] < 0.0);
    }
}
