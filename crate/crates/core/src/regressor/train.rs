//! Image-to-pose regression trainers.
//!
//! One generic mini-batch ADAM loop drives every variant: latent-code
//! regression (the pipeline's second stage), the direct pose baseline, the
//! widened-head baseline, and the PCA-coefficient baseline.  All randomness
//! derives from substreams of `RngStream::new(config.seed)`, so each
//! trainer is a deterministic function of its inputs.

use super::cnn::{self, CnnArchitecture, ImageEncoderParams};
use super::pca::{fit_pca, stack_pca};
use super::stacked::StackedNetworkParams;
use crate::autoencoder::{encode, AutoEncoderParams, Pose};
use crate::error::{Error, Result};
use crate::numerics::{AdamConfig, AdamSet, RngStream, Tensor};
use crate::synthdata::{DatasetRecord, GrayImage};
use crate::trainlog::{EpochStat, TrainLog};

/// Substream indices off the master stream `RngStream::new(config.seed)`:
/// `INIT` seeds parameter initialization, `FIT` the training loop.
pub(crate) const INIT: u64 = 100;
pub(crate) const FIT: u64 = 300;

/// Substream indices off the fit stream inside [`fit_model`].
const SHUFFLE: u64 = 1;
const DROPOUT: u64 = 2;
const CROP: u64 = 3;

/// Hyper-parameters shared by all regression trainers.
#[derive(Debug, Clone, PartialEq)]
pub struct RegTrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Dropout probability for the CNN's hidden dense layers.
    pub dropout: f64,
    /// Randomly crop oversized training images; inference always
    /// center-crops.  Has no effect when images already match the input.
    pub augment: bool,
    pub seed: u64,
}

impl Default for RegTrainConfig {
    fn default() -> Self {
        RegTrainConfig {
            learning_rate: 1e-3,
            batch_size: 16,
            epochs: 30,
            dropout: 0.5,
            augment: false,
            seed: 0,
        }
    }
}

impl RegTrainConfig {
    pub fn validate(&self) -> Result<()> {
        let op = "reg_train_config";
        let fail = |name: &'static str, detail: String| Error::Parameter { op, name, detail };
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(fail(
                "learning_rate",
                format!("must be finite and positive, got {}", self.learning_rate),
            ));
        }
        if self.batch_size == 0 {
            return Err(fail("batch_size", "must be at least 1".into()));
        }
        if !self.dropout.is_finite() || !(0.0..1.0).contains(&self.dropout) {
            return Err(fail("dropout", format!("must lie in [0, 1), got {}", self.dropout)));
        }
        Ok(())
    }
}

/// Convert dataset records into network inputs and their poses, checking
/// that image sizes and pose dimensions are uniform.
pub(crate) fn record_inputs(
    op: &'static str,
    records: &[DatasetRecord],
) -> Result<(Vec<Tensor>, Vec<Pose>)> {
    let Some(first) = records.first() else {
        return Err(Error::Parameter {
            op,
            name: "records",
            detail: "training set is empty".into(),
        });
    };
    let image_size = first.image.size();
    let pose_dim = first.pose.dim();
    let mut images = Vec::with_capacity(records.len());
    let mut poses = Vec::with_capacity(records.len());
    for (i, record) in records.iter().enumerate() {
        if record.image.size() != image_size || record.pose.dim() != pose_dim {
            return Err(Error::Dimension {
                op,
                detail: format!(
                    "record {i} has image size {} and pose dimension {}; \
                     the set started with {image_size} and {pose_dim}",
                    record.image.size(),
                    record.pose.dim()
                ),
            });
        }
        images.push(cnn::image_to_tensor(&record.image)?);
        poses.push(record.pose.clone());
    }
    Ok((images, poses))
}

/// Mini-batch ADAM over any model exposing its tensors.  Per-sample losses
/// are summed within a batch and the gradient is divided by the batch size
/// before the optimizer step, so loss curves are comparable across batch
/// sizes.  The log records the mean per-sample loss of each epoch.
///
/// When a `checkpoint` metric is given, the model is scored after every
/// epoch (and once on entry) and the best-scoring snapshot is returned;
/// otherwise the final-epoch parameters are.  With `epochs == 0` the input
/// model is returned unchanged.
#[allow(clippy::too_many_arguments)]
pub(crate) fn fit_model<M, TM, SG>(
    mut model: M,
    images: &[Tensor],
    targets: &[Vec<f64>],
    config: &RegTrainConfig,
    rng: &mut RngStream,
    mut tensors_mut: TM,
    mut sample_grads: SG,
    checkpoint: Option<&dyn Fn(&M) -> Result<f64>>,
) -> Result<(M, TrainLog)>
where
    M: Clone,
    TM: FnMut(&mut M) -> Vec<&mut Tensor>,
    SG: FnMut(&M, &Tensor, &[f64], &mut RngStream, &mut RngStream) -> Result<(f64, Vec<Tensor>)>,
{
    let op = "fit_model";
    config.validate()?;
    if images.is_empty() {
        return Err(Error::Parameter {
            op,
            name: "images",
            detail: "training set must contain at least one sample".into(),
        });
    }
    if images.len() != targets.len() {
        return Err(Error::Dimension {
            op,
            detail: format!("{} images vs {} targets", images.len(), targets.len()),
        });
    }
    if config.epochs == 0 {
        return Ok((model, TrainLog::new()));
    }

    let mut shuffle_rng = rng.substream(SHUFFLE);
    let mut dropout_rng = rng.substream(DROPOUT);
    let mut crop_rng = rng.substream(CROP);

    let mut adam = {
        let tensors = tensors_mut(&mut model);
        let refs: Vec<&Tensor> = tensors.iter().map(|t| &**t).collect();
        AdamSet::for_tensors(&refs, AdamConfig::with_learning_rate(config.learning_rate))?
    };

    let mut best: Option<(f64, M)> = match checkpoint {
        Some(metric) => Some((metric(&model)?, model.clone())),
        None => None,
    };

    let n = images.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut log = TrainLog::new();
    for epoch in 1..=config.epochs {
        shuffle_rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let mut batch: Option<Vec<Tensor>> = None;
            for &i in chunk {
                let (loss, grads) = sample_grads(
                    &model,
                    &images[i],
                    &targets[i],
                    &mut dropout_rng,
                    &mut crop_rng,
                )?;
                epoch_loss += loss;
                batch = Some(match batch {
                    None => grads,
                    Some(mut acc) => {
                        for (a, g) in acc.iter_mut().zip(&grads) {
                            a.add_in_place(g)?;
                        }
                        acc
                    }
                });
            }
            let mut grads = batch.expect("batch chunks are never empty");
            let scale = 1.0 / chunk.len() as f64;
            for g in &mut grads {
                g.scale(scale);
            }
            let grad_refs: Vec<&Tensor> = grads.iter().collect();
            adam.step(tensors_mut(&mut model), &grad_refs)?;
        }
        let eval = match checkpoint {
            Some(metric) => {
                let score = metric(&model)?;
                if let Some((best_score, best_model)) = &mut best {
                    if score < *best_score {
                        *best_score = score;
                        *best_model = model.clone();
                    }
                }
                Some(score)
            }
            None => None,
        };
        log.push(EpochStat {
            epoch,
            train_loss: epoch_loss / n as f64,
            eval_mpjpe: eval,
        });
    }
    let result = match best {
        Some((_, snapshot)) => snapshot,
        None => model,
    };
    Ok((result, log))
}

/// Root-mean-square of all target entries, used to set the CNN output
/// scale so the trainable head works at unit magnitude regardless of the
/// targets' units.  Degenerate targets fall back to 1.
fn target_rms(targets: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for target in targets {
        for &x in target {
            total += x * x;
        }
        count += target.len();
    }
    if count == 0 {
        return 1.0;
    }
    let rms = (total / count as f64).sqrt();
    if rms.is_finite() && rms > 0.0 {
        rms
    } else {
        1.0
    }
}

/// Train a CNN on image/target pairs with ADAM.  On entry (when training
/// will actually run) the output scale is frozen to the target RMS; it is
/// not a trainable parameter.
fn fit_cnn(
    mut params: ImageEncoderParams,
    images: &[Tensor],
    targets: &[Vec<f64>],
    config: &RegTrainConfig,
    rng: &mut RngStream,
) -> Result<(ImageEncoderParams, TrainLog)> {
    let dim = params.output_dim();
    if let Some(bad) = targets.iter().position(|t| t.len() != dim) {
        return Err(Error::Dimension {
            op: "fit_cnn",
            detail: format!(
                "target {bad} has dimension {}, expected {dim}",
                targets[bad].len()
            ),
        });
    }
    if config.epochs > 0 && !targets.is_empty() {
        params.set_output_scale(target_rms(targets));
    }
    fit_model(
        params,
        images,
        targets,
        config,
        rng,
        |model| model.tensors_mut(),
        |model, image, target, dropout_rng, crop_rng| {
            cnn::train_sample_grads(
                model,
                image,
                target,
                config.dropout,
                config.augment,
                dropout_rng,
                crop_rng,
            )
        },
        None,
    )
}

/// Train the image-to-latent regressor against a frozen auto-encoder.
///
/// Targets are the auto-encoder codes of the ground-truth poses, computed
/// once up front; the auto-encoder itself is never modified.
pub fn train_latent_regression(
    arch: &CnnArchitecture,
    ae: &AutoEncoderParams,
    records: &[DatasetRecord],
    config: &RegTrainConfig,
) -> Result<(ImageEncoderParams, TrainLog)> {
    let op = "train_latent_regression";
    let (images, poses) = record_inputs(op, records)?;
    if poses[0].dim() != ae.input_dim() {
        return Err(Error::Dimension {
            op,
            detail: format!(
                "records carry {}-dimensional poses but the auto-encoder expects {}",
                poses[0].dim(),
                ae.input_dim()
            ),
        });
    }
    let targets: Vec<Vec<f64>> = poses
        .iter()
        .map(|pose| Ok(encode(ae, pose)?.into_vec()))
        .collect::<Result<_>>()?;
    let master = RngStream::new(config.seed);
    let params =
        ImageEncoderParams::init(arch.clone(), ae.latent_dim(), &mut master.substream(INIT))?;
    fit_cnn(params, &images, &targets, config, &mut master.substream(FIT))
}

/// CNN-Direct: regress straight to the pose vector with the same CNN body.
pub fn train_direct_baseline(
    arch: &CnnArchitecture,
    records: &[DatasetRecord],
    config: &RegTrainConfig,
) -> Result<(ImageEncoderParams, TrainLog)> {
    let (images, poses) = record_inputs("train_direct_baseline", records)?;
    let targets: Vec<Vec<f64>> = poses.iter().map(|p| p.as_slice().to_vec()).collect();
    let master = RngStream::new(config.seed);
    let params =
        ImageEncoderParams::init(arch.clone(), targets[0].len(), &mut master.substream(INIT))?;
    fit_cnn(params, &images, &targets, config, &mut master.substream(FIT))
}

/// CNN-ExtraFC: CNN-Direct with one extra ReLU dense layer of width
/// `extra_dim` before the pose output.
pub fn train_extrafc_baseline(
    arch: &CnnArchitecture,
    records: &[DatasetRecord],
    config: &RegTrainConfig,
    extra_dim: usize,
) -> Result<(ImageEncoderParams, TrainLog)> {
    if extra_dim == 0 {
        return Err(Error::Parameter {
            op: "train_extrafc_baseline",
            name: "extra_dim",
            detail: "extra layer width must be at least 1".into(),
        });
    }
    let mut widened = arch.clone();
    widened.fc_widths.push(extra_dim);
    train_direct_baseline(&widened, records, config)
}

/// CNN-PCA: regress to the coefficients of a PCA pose basis fit on the
/// training poses, and return the network stacked with the frozen
/// reprojection as its single linear decoder layer.  Further fine-tuning
/// (which unfreezes that layer) is available via
/// [`finetune_stacked`](super::finetune_stacked).
pub fn train_pca_baseline(
    arch: &CnnArchitecture,
    records: &[DatasetRecord],
    config: &RegTrainConfig,
    k: usize,
) -> Result<(StackedNetworkParams, TrainLog)> {
    let op = "train_pca_baseline";
    let (images, poses) = record_inputs(op, records)?;
    let basis = fit_pca(&poses, k)?;
    let targets: Vec<Vec<f64>> = poses
        .iter()
        .map(|pose| basis.project(pose))
        .collect::<Result<_>>()?;
    let master = RngStream::new(config.seed);
    let params = ImageEncoderParams::init(arch.clone(), k, &mut master.substream(INIT))?;
    let (trained, log) = fit_cnn(params, &images, &targets, config, &mut master.substream(FIT))?;
    Ok((stack_pca(trained, &basis)?, log))
}

/// Predict a pose with a direct-regression CNN (center crop, no dropout).
/// The root joint is re-pinned at the origin, matching
/// [`predict_pose`](super::predict_pose).
pub fn predict_direct(params: &ImageEncoderParams, image: &GrayImage) -> Result<Pose> {
    let mut pose = Pose::new(cnn::cnn_forward(params, image)?)?;
    pose.zero_root();
    Ok(pose)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthdata::{generate, CameraConfig, GenerateConfig, SkeletonModel};

    fn desk_records(n: usize, seed: u64) -> Vec<DatasetRecord> {
        let model = SkeletonModel::default_human();
        let camera = CameraConfig::default();
        let config = GenerateConfig { n_train: n, n_test: 1, seed, ..Default::default() };
        generate(&model, &camera, &config).unwrap().train
    }

    fn small_arch() -> CnnArchitecture {
        CnnArchitecture {
            input_size: 32,
            conv_channels: vec![3, 4],
            conv_kernels: vec![3, 3],
            fc_widths: vec![16],
        }
    }

    fn small_config(epochs: usize, seed: u64) -> RegTrainConfig {
        RegTrainConfig {
            epochs,
            batch_size: 4,
            dropout: 0.0,
            seed,
            ..Default::default()
        }
    }

    fn tiny_ae(records: &[DatasetRecord], sizes: &[usize], seed: u64) -> AutoEncoderParams {
        let dim = records[0].pose.dim();
        let mut rng = RngStream::new(seed);
        AutoEncoderParams::init(dim, sizes, &mut rng).unwrap()
    }

    #[test]
    fn latent_regression_freezes_the_autoencoder() {
        let records = desk_records(6, 3);
        let ae = tiny_ae(&records, &[56, 52], 5);
        let before = ae.clone();
        let (_, log) =
            train_latent_regression(&small_arch(), &ae, &records, &small_config(2, 7)).unwrap();
        assert_eq!(ae, before, "auto-encoder changed during latent regression");
        assert_eq!(log.len(), 2);
    }

    #[test]
    fn direct_training_halves_the_loss_on_a_small_set() {
        let records = desk_records(20, 11);
        let config = small_config(25, 13);
        let (_, log) = train_direct_baseline(&small_arch(), &records, &config).unwrap();
        let first = log.first().unwrap().train_loss;
        let last = log.last().unwrap().train_loss;
        assert!(
            last <= 0.5 * first,
            "loss did not halve: first epoch {first}, last epoch {last}"
        );
    }

    #[test]
    fn direct_output_dimension_matches_the_pose() {
        let records = desk_records(4, 17);
        let config = small_config(1, 19);
        let (params, _) = train_direct_baseline(&small_arch(), &records, &config).unwrap();
        assert_eq!(params.output_dim(), 51);
        let pose = predict_direct(&params, &records[0].image).unwrap();
        assert_eq!(pose.dim(), 51);
        assert_eq!(&pose.as_slice()[..3], &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn training_is_deterministic_under_the_seed() {
        let records = desk_records(8, 23);
        let config = small_config(3, 29);
        let (a, log_a) = train_direct_baseline(&small_arch(), &records, &config).unwrap();
        let (b, log_b) = train_direct_baseline(&small_arch(), &records, &config).unwrap();
        assert_eq!(a, b);
        assert_eq!(log_a, log_b);
    }

    #[test]
    fn zero_epochs_returns_the_seeded_initialization() {
        let records = desk_records(4, 31);
        let config = small_config(0, 37);
        let (params, log) = train_direct_baseline(&small_arch(), &records, &config).unwrap();
        assert!(log.is_empty());
        // Replay the documented stream layout by hand.
        let master = RngStream::new(37);
        let expected =
            ImageEncoderParams::init(small_arch(), 51, &mut master.substream(INIT)).unwrap();
        assert_eq!(params, expected);
    }

    #[test]
    fn extrafc_widens_the_head() {
        let records = desk_records(4, 41);
        let config = small_config(0, 43);
        let (params, _) =
            train_extrafc_baseline(&small_arch(), &records, &config, 24).unwrap();
        assert_eq!(params.arch().fc_widths, vec![16, 24]);
        assert_eq!(params.output_dim(), 51);
        assert!(matches!(
            train_extrafc_baseline(&small_arch(), &records, &config, 0),
            Err(Error::Parameter { name: "extra_dim", .. })
        ));
    }

    #[test]
    fn pca_baseline_supports_the_reported_widths() {
        let records = desk_records(60, 47);
        let config = small_config(1, 53);
        for k in [30, 40, 51] {
            let (params, log) =
                train_pca_baseline(&small_arch(), &records, &config, k).unwrap();
            assert_eq!(params.latent_dim(), k);
            assert_eq!(params.output_dim(), 51);
            assert_eq!(log.len(), 1);
            let pose = crate::regressor::predict_pose(&params, &records[0].image).unwrap();
            assert_eq!(pose.dim(), 51);
        }
    }

    #[test]
    fn latent_mismatch_is_rejected() {
        let records = desk_records(4, 59);
        // Auto-encoder over a different pose dimension.
        let mut rng = RngStream::new(61);
        let ae = AutoEncoderParams::init(12, &[14, 13], &mut rng).unwrap();
        let err = train_latent_regression(&small_arch(), &ae, &records, &small_config(1, 2))
            .unwrap_err();
        assert!(matches!(err, Error::Dimension { op: "train_latent_regression", .. }));
    }

    #[test]
    fn empty_record_sets_are_rejected() {
        let err = train_direct_baseline(&small_arch(), &[], &small_config(1, 2)).unwrap_err();
        assert!(matches!(err, Error::Parameter { name: "records", .. }));
    }
}
