//! Pose-accuracy and structure-preservation metrics.
//!
//! Position accuracy is the mean per-joint position error (MPJPE): the
//! average Euclidean distance between predicted and ground-truth joints in
//! millimeters. Structure preservation is measured on limb-length ratios:
//! for a pose, the matrix of pairwise log-ratios `ln(len_i) - ln(len_j)`;
//! over a test set, the per-cell mean absolute deviation between predicted
//! and ground-truth log-ratio matrices. Ratios are invariant to uniform
//! scaling of a pose, so these matrices isolate proportions from size.

use crate::autoencoder::Pose;
use crate::error::{Error, Result};
use crate::synthdata::SkeletonModel;

/// Mean per-joint position error in millimeters.
pub fn mpjpe(predicted: &Pose, truth: &Pose) -> Result<f64> {
    if predicted.joint_count() != truth.joint_count() {
        return Err(Error::Dimension {
            op: "mpjpe",
            detail: format!(
                "predicted pose has {} joints, ground truth {}",
                predicted.joint_count(),
                truth.joint_count()
            ),
        });
    }
    let count = predicted.joint_count();
    let mut total = 0.0;
    for j in 0..count {
        let p = predicted.joint(j);
        let t = truth.joint(j);
        total +=
            ((p[0] - t[0]).powi(2) + (p[1] - t[1]).powi(2) + (p[2] - t[2]).powi(2)).sqrt();
    }
    Ok(total / count as f64)
}

/// Mean MPJPE over aligned prediction/truth sequences.
pub fn mean_mpjpe(predictions: &[Pose], truths: &[Pose]) -> Result<f64> {
    check_aligned("mean_mpjpe", predictions, truths)?;
    let mut total = 0.0;
    for (p, t) in predictions.iter().zip(truths) {
        total += mpjpe(p, t)?;
    }
    Ok(total / predictions.len() as f64)
}

fn check_aligned(op: &'static str, predictions: &[Pose], truths: &[Pose]) -> Result<()> {
    if predictions.len() != truths.len() {
        return Err(Error::Dimension {
            op,
            detail: format!(
                "{} predictions vs {} ground-truth poses",
                predictions.len(),
                truths.len()
            ),
        });
    }
    if predictions.is_empty() {
        return Err(Error::Parameter {
            op,
            name: "predictions",
            detail: "need at least one sample".into(),
        });
    }
    Ok(())
}

/// Realized limb lengths of a pose, ordered like `model.limbs()`.
pub fn limb_lengths(pose: &Pose, model: &SkeletonModel) -> Result<Vec<f64>> {
    if pose.joint_count() != model.joint_count() {
        return Err(Error::Dimension {
            op: "limb_lengths",
            detail: format!(
                "pose has {} joints, model {}",
                pose.joint_count(),
                model.joint_count()
            ),
        });
    }
    Ok(model
        .limbs()
        .iter()
        .map(|limb| {
            let p = pose.joint(limb.parent);
            let c = pose.joint(limb.child);
            ((c[0] - p[0]).powi(2) + (c[1] - p[1]).powi(2) + (c[2] - p[2]).powi(2)).sqrt()
        })
        .collect())
}

/// Pairwise log-ratios of one pose's limb lengths: `entry(i, j) =
/// ln(len_i) - ln(len_j)`. Antisymmetric with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct LimbRatioMatrix {
    names: Vec<String>,
    values: Vec<f64>,
}

impl LimbRatioMatrix {
    fn from_lengths(names: Vec<String>, lengths: &[f64]) -> LimbRatioMatrix {
        let n = lengths.len();
        let logs: Vec<f64> = lengths.iter().map(|l| l.ln()).collect();
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                values[i * n + j] = logs[i] - logs[j];
            }
        }
        LimbRatioMatrix { names, values }
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn limb_names(&self) -> &[String] {
        &self.names
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.dim() + j]
    }
}

/// Log-ratio matrix of a single pose. Ground-truth poses must have strictly
/// positive limb lengths; a zero-length limb is a domain error naming it.
pub fn log_ratio_matrix(pose: &Pose, model: &SkeletonModel) -> Result<LimbRatioMatrix> {
    let lengths = limb_lengths(pose, model)?;
    for (limb, &len) in model.limbs().iter().zip(&lengths) {
        if len == 0.0 {
            return Err(Error::Domain {
                op: "log_ratio_matrix",
                detail: format!("limb {:?} has zero length; log-ratios are undefined", limb.name),
            });
        }
    }
    Ok(LimbRatioMatrix::from_lengths(
        model.limbs().iter().map(|l| l.name.clone()).collect(),
        &lengths,
    ))
}

/// Lengths shorter than this are clamped before taking logs on the
/// prediction side, so degenerate predictions degrade the score instead of
/// aborting the evaluation.
pub const MIN_PREDICTED_LIMB_MM: f64 = 1e-6;

/// Per-cell mean absolute deviation between predicted and ground-truth
/// log-ratio matrices over an aligned test set. Symmetric, zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioErrorMatrix {
    names: Vec<String>,
    values: Vec<f64>,
    flagged_samples: usize,
}

impl RatioErrorMatrix {
    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn limb_names(&self) -> &[String] {
        &self.names
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.dim() + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// How many prediction samples had at least one limb clamped up to
    /// [`MIN_PREDICTED_LIMB_MM`].
    pub fn flagged_samples(&self) -> usize {
        self.flagged_samples
    }
}

/// Structure-preservation error over a test set. Ground-truth limbs must be
/// strictly positive; predicted limbs shorter than
/// [`MIN_PREDICTED_LIMB_MM`] are clamped and the sample counted in
/// [`RatioErrorMatrix::flagged_samples`].
pub fn ratio_error_matrix(
    predictions: &[Pose],
    truths: &[Pose],
    model: &SkeletonModel,
) -> Result<RatioErrorMatrix> {
    check_aligned("ratio_error_matrix", predictions, truths)?;
    let n = model.limbs().len();
    let mut accum = vec![0.0; n * n];
    let mut flagged = 0usize;
    for (pred, truth) in predictions.iter().zip(truths) {
        let true_matrix = log_ratio_matrix(truth, model)?;
        let mut pred_lengths = limb_lengths(pred, model)?;
        if pred_lengths.iter().any(|&l| l < MIN_PREDICTED_LIMB_MM) {
            flagged += 1;
            for l in &mut pred_lengths {
                *l = l.max(MIN_PREDICTED_LIMB_MM);
            }
        }
        let pred_logs: Vec<f64> = pred_lengths.iter().map(|l| l.ln()).collect();
        for i in 0..n {
            for j in 0..n {
                let pred_ratio = pred_logs[i] - pred_logs[j];
                accum[i * n + j] += (pred_ratio - true_matrix.get(i, j)).abs();
            }
        }
    }
    let count = predictions.len() as f64;
    for v in &mut accum {
        *v /= count;
    }
    Ok(RatioErrorMatrix {
        names: model.limbs().iter().map(|l| l.name.clone()).collect(),
        values: accum,
        flagged_samples: flagged,
    })
}

/// Limbs of the default humanoid that count as "lower body"; everything
/// else is "upper body". The split is by limb name so it survives model
/// rescaling and custom length tables with the same topology.
pub const DEFAULT_LOWER_BODY_LIMBS: &[&str] = &[
    "l_hip", "l_knee", "l_ankle", "r_hip", "r_knee", "r_ankle",
];

/// Resolve limb names to indices into `model.limbs()`.
pub fn limb_indices(model: &SkeletonModel, names: &[&str]) -> Result<Vec<usize>> {
    names
        .iter()
        .map(|name| {
            model
                .limbs()
                .iter()
                .position(|l| l.name == *name)
                .ok_or_else(|| Error::Parameter {
                    op: "limb_indices",
                    name: "names",
                    detail: format!("model has no limb named {name:?}"),
                })
        })
        .collect()
}

/// The (lower, upper) body partition for a model, using
/// [`DEFAULT_LOWER_BODY_LIMBS`] and its complement.
pub fn default_partitions(model: &SkeletonModel) -> Result<(Vec<usize>, Vec<usize>)> {
    let lower = limb_indices(model, DEFAULT_LOWER_BODY_LIMBS)?;
    let upper = (0..model.limbs().len())
        .filter(|i| !lower.contains(i))
        .collect();
    Ok((lower, upper))
}

fn pair_sum(matrix: &RatioErrorMatrix, set: &[usize]) -> Result<f64> {
    let n = matrix.dim();
    for &i in set {
        if i >= n {
            return Err(Error::Parameter {
                op: "partition_sums",
                name: "partitions",
                detail: format!("limb index {i} out of range for {n} limbs"),
            });
        }
    }
    let mut unique: Vec<usize> = set.to_vec();
    unique.sort_unstable();
    unique.dedup();
    let mut total = 0.0;
    for (a, &i) in unique.iter().enumerate() {
        for &j in &unique[a + 1..] {
            total += matrix.get(i, j);
        }
    }
    Ok(total)
}

/// Sums of error cells over unordered limb pairs drawn from the lower-body
/// set, the upper-body set, and all limbs. Each unordered pair is counted
/// once (the matrix is symmetric, so this equals half the off-diagonal sum
/// of the restricted submatrix).
pub fn partition_sums(
    matrix: &RatioErrorMatrix,
    lower: &[usize],
    upper: &[usize],
) -> Result<(f64, f64, f64)> {
    let full: Vec<usize> = (0..matrix.dim()).collect();
    Ok((
        pair_sum(matrix, lower)?,
        pair_sum(matrix, upper)?,
        pair_sum(matrix, &full)?,
    ))
}
