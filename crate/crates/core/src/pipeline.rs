//! Experiment orchestration: one typed configuration drives data
//! generation, staged training, evaluation, and layer-size sweeps, with
//! every artifact rooted in a single output directory.
//!
//! Stages communicate only through files, so each one can be rerun in
//! isolation: `gen-data` writes `dataset/`, the training stages write
//! `models/*.plmf` and `logs/*.csv`, `eval` writes `report/`. A stage
//! that needs an artifact another stage produces checks for the file and
//! reports which stage to run first when it is missing.
//!
//! Every output directory carries `experiment.txt`, which records the
//! hash of the configuration that produced it plus a content hash per
//! artifact. Stages refuse to mix artifacts from different
//! configurations, and because every trainer is deterministic in its
//! seed, rerunning a stage reproduces its artifacts byte for byte.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::autoencoder::{finetune_ae, pretrain_layerwise, AeTrainConfig, AutoEncoderParams};
use crate::error::{Error, Result};
use crate::eval::{
    default_partitions, evaluate_method, matrix_csv, write_heatmap, write_report_csv, EvalReport,
};
use crate::model_io;
use crate::regressor::{
    finetune_stacked, fit_pca, predict_direct, predict_pose, stack_decoder, train_direct_baseline,
    train_extrafc_baseline, train_latent_regression, train_pca_baseline, CnnArchitecture,
    ImageEncoderParams, RegTrainConfig, StackedNetworkParams,
};
use crate::synthdata::{
    generate_dataset, load_dataset, ActionSpec, CameraConfig, Dataset, GenerateConfig,
    SkeletonModel, SubjectSpec,
};
use crate::trainlog::write_loss_csv;
use crate::Pose;

/// Everything one experiment needs, gathered into a single value. Each
/// stage reads only its own part, but the hash covers the whole
/// configuration so artifacts produced under one output directory are
/// guaranteed to belong together.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub data: GenerateConfig,
    pub camera: CameraConfig,
    /// Encode widths of the pose auto-encoder, pose side inward.
    pub ae_layer_sizes: Vec<usize>,
    pub ae: AeTrainConfig,
    pub cnn: CnnArchitecture,
    pub reg: RegTrainConfig,
    /// Epoch budget for end-to-end fine-tuning of the stacked network.
    pub finetune_epochs: usize,
    /// Component count for the PCA reprojection baseline.
    pub pca_components: usize,
    /// Width of the inserted layer in the extra-FC baseline.
    pub extra_fc_width: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            data: GenerateConfig::default(),
            camera: CameraConfig::default(),
            ae_layer_sizes: vec![128],
            ae: AeTrainConfig {
                lambda: 0.1,
                noise_sigmas: vec![30.0],
                learning_rate: 1e-3,
                batch_size: 10,
                epochs: 40,
                seed: 7,
            },
            cnn: CnnArchitecture::default(),
            reg: RegTrainConfig {
                learning_rate: 1e-3,
                batch_size: 16,
                epochs: 60,
                dropout: 0.1,
                augment: false,
                seed: 7,
            },
            finetune_epochs: 30,
            pca_components: 51,
            extra_fc_width: 2000,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.data.validate()?;
        self.camera.validate()?;
        if self.ae_layer_sizes.is_empty() {
            return Err(Error::Config(
                "ae.layer_sizes must name at least one encode width".into(),
            ));
        }
        self.ae.validate(self.ae_layer_sizes.len())?;
        self.cnn.validate()?;
        self.reg.validate()?;
        if self.camera.image_size < self.cnn.input_size {
            return Err(Error::Config(format!(
                "camera.image_size ({}) must be at least cnn.input_size ({})",
                self.camera.image_size, self.cnn.input_size
            )));
        }
        if self.pca_components == 0 {
            return Err(Error::Config("pca.components must be at least 1".into()));
        }
        if self.extra_fc_width == 0 {
            return Err(Error::Config("extrafc.width must be at least 1".into()));
        }
        Ok(())
    }

    /// Reseeds every stage from one master value. Data generation, the
    /// auto-encoder, and the regression trainers get distinct seeds at
    /// fixed offsets so their random streams never coincide.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.data.seed = seed;
        self.ae.seed = seed.wrapping_add(1);
        self.reg.seed = seed.wrapping_add(2);
        self
    }
}

fn join_usizes(values: &[usize]) -> String {
    values
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

fn join_floats(values: &[f64]) -> String {
    values
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

fn join_subjects(subjects: &[SubjectSpec]) -> String {
    subjects
        .iter()
        .map(|s| format!("{}:{}", s.id, s.limb_scale))
        .collect::<Vec<_>>()
        .join(",")
}

fn join_actions(actions: &[ActionSpec]) -> String {
    actions
        .iter()
        .map(|a| format!("{}:{}", a.name, a.angle_scale))
        .collect::<Vec<_>>()
        .join(",")
}

/// Renders the configuration as the canonical `key = value` text: fixed
/// key order, one line per field. This is both the on-disk config format
/// and the byte stream the config hash is computed over.
pub fn canonical_config_text(config: &PipelineConfig) -> String {
    let mut out = String::new();
    let mut put = |key: &str, value: String| {
        out.push_str(key);
        out.push_str(" = ");
        out.push_str(&value);
        out.push('\n');
    };
    put("data.n_train", config.data.n_train.to_string());
    put("data.n_test", config.data.n_test.to_string());
    put(
        "data.train_subjects",
        join_subjects(&config.data.train_subjects),
    );
    put(
        "data.test_subjects",
        join_subjects(&config.data.test_subjects),
    );
    put("data.actions", join_actions(&config.data.actions));
    put("data.seed", config.data.seed.to_string());
    put("camera.view_axis", config.camera.view_axis.as_str().into());
    put("camera.image_size", config.camera.image_size.to_string());
    put("camera.mm_per_pixel", config.camera.mm_per_pixel.to_string());
    put(
        "camera.line_thickness",
        config.camera.line_thickness.to_string(),
    );
    put("ae.layer_sizes", join_usizes(&config.ae_layer_sizes));
    put("ae.noise_sigmas", join_floats(&config.ae.noise_sigmas));
    put("ae.lambda", config.ae.lambda.to_string());
    put("ae.learning_rate", config.ae.learning_rate.to_string());
    put("ae.batch_size", config.ae.batch_size.to_string());
    put("ae.epochs", config.ae.epochs.to_string());
    put("ae.seed", config.ae.seed.to_string());
    put("cnn.input_size", config.cnn.input_size.to_string());
    put("cnn.conv_channels", join_usizes(&config.cnn.conv_channels));
    put("cnn.conv_kernels", join_usizes(&config.cnn.conv_kernels));
    put("cnn.fc_widths", join_usizes(&config.cnn.fc_widths));
    put("reg.learning_rate", config.reg.learning_rate.to_string());
    put("reg.batch_size", config.reg.batch_size.to_string());
    put("reg.epochs", config.reg.epochs.to_string());
    put("reg.dropout", config.reg.dropout.to_string());
    put("reg.augment", config.reg.augment.to_string());
    put("reg.seed", config.reg.seed.to_string());
    put("finetune.epochs", config.finetune_epochs.to_string());
    put("pca.components", config.pca_components.to_string());
    put("extrafc.width", config.extra_fc_width.to_string());
    out
}

/// SHA-256 of the canonical configuration text, as lowercase hex.
pub fn config_hash(config: &PipelineConfig) -> String {
    sha256_hex(canonical_config_text(config).as_bytes())
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}

/// Fixed artifact layout under one output root.
#[derive(Debug, Clone)]
pub struct OutputLayout {
    root: PathBuf,
}

impl OutputLayout {
    pub fn new(root: &Path) -> OutputLayout {
        OutputLayout { root: root.to_path_buf() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn dataset_dir(&self) -> PathBuf {
        self.root.join("dataset")
    }

    pub fn model_path(&self, name: &str) -> PathBuf {
        self.root.join("models").join(format!("{name}.plmf"))
    }

    pub fn log_path(&self, name: &str) -> PathBuf {
        self.root.join("logs").join(format!("{name}.csv"))
    }

    pub fn report_dir(&self) -> PathBuf {
        self.root.join("report")
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.root.join("experiment.txt")
    }

    pub fn config_path(&self) -> PathBuf {
        self.root.join("config.txt")
    }

    pub fn sweep_csv_path(&self) -> PathBuf {
        self.root.join("sweep.csv")
    }

    pub fn sweep_run_dir(&self, label: &str) -> PathBuf {
        self.root.join("sweep").join(label)
    }
}

fn hash_file(path: &Path) -> Result<String> {
    let bytes =
        std::fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    Ok(sha256_hex(&bytes))
}

fn read_manifest(path: &Path) -> Result<Option<(String, BTreeMap<String, String>)>> {
    if !path.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let mut hash = None;
    let mut artifacts = BTreeMap::new();
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix("config_hash = ") {
            hash = Some(rest.trim().to_string());
        } else if let Some(rest) = line.strip_prefix("artifact ") {
            // The hash is the last space-separated token; the relative
            // path before it may itself contain spaces.
            let mut fields = rest.rsplitn(2, ' ');
            if let (Some(sha), Some(rel)) = (fields.next(), fields.next()) {
                artifacts.insert(rel.to_string(), sha.to_string());
            }
        }
    }
    match hash {
        Some(hash) => Ok(Some((hash, artifacts))),
        None => Err(Error::Format {
            path: path.display().to_string(),
            detail: "experiment manifest is missing its config_hash line".into(),
        }),
    }
}

fn hash_mismatch(root: &Path, found: &str, want: &str) -> Error {
    Error::Config(format!(
        "output directory {} holds artifacts for a different configuration \
         (config hash {} vs {}); use a fresh output directory or regenerate \
         with gen-data --force",
        root.display(),
        found,
        want
    ))
}

/// Fails fast when the output directory was produced under a different
/// configuration. A missing manifest is fine: the directory is fresh.
fn check_manifest(layout: &OutputLayout, config: &PipelineConfig) -> Result<()> {
    let want = config_hash(config);
    match read_manifest(&layout.manifest_path())? {
        Some((found, _)) if found != want => Err(hash_mismatch(layout.root(), &found, &want)),
        _ => Ok(()),
    }
}

/// Records content hashes for freshly written artifacts in
/// `experiment.txt` and keeps `config.txt` current. Entries from earlier
/// stages under the same configuration are preserved.
fn record_artifacts(
    layout: &OutputLayout,
    config: &PipelineConfig,
    paths: &[PathBuf],
) -> Result<()> {
    let hash = config_hash(config);
    let mut artifacts = match read_manifest(&layout.manifest_path())? {
        Some((found, map)) if found == hash => map,
        Some((found, _)) => return Err(hash_mismatch(layout.root(), &found, &hash)),
        None => BTreeMap::new(),
    };
    for path in paths {
        let rel = path
            .strip_prefix(layout.root())
            .unwrap_or(path)
            .to_string_lossy()
            .replace('\\', "/");
        artifacts.insert(rel, hash_file(path)?);
    }
    let mut text = format!("config_hash = {hash}\n");
    for (rel, sha) in &artifacts {
        text.push_str(&format!("artifact {rel} {sha}\n"));
    }
    let manifest_path = layout.manifest_path();
    std::fs::write(&manifest_path, text)
        .map_err(|e| Error::io(format!("writing {}", manifest_path.display()), e))?;
    let config_path = layout.config_path();
    std::fs::write(&config_path, canonical_config_text(config))
        .map_err(|e| Error::io(format!("writing {}", config_path.display()), e))
}

/// Generates the synthetic dataset under `<out_dir>/dataset`. Refuses to
/// overwrite an existing dataset unless `force` is set; with `force` the
/// experiment manifest starts over, since artifacts trained on the old
/// data no longer belong to this run.
pub fn stage_gen_data(config: &PipelineConfig, out_dir: &Path, force: bool) -> Result<Dataset> {
    config.validate()?;
    let layout = OutputLayout::new(out_dir);
    let data_dir = layout.dataset_dir();
    if data_dir.join("manifest.txt").exists() {
        if !force {
            return Err(Error::Config(format!(
                "dataset already exists at {}; pass --force to regenerate",
                data_dir.display()
            )));
        }
        let manifest = layout.manifest_path();
        if manifest.exists() {
            std::fs::remove_file(&manifest)
                .map_err(|e| Error::io(format!("removing {}", manifest.display()), e))?;
        }
    } else {
        check_manifest(&layout, config)?;
    }
    let dataset = generate_dataset(
        &SkeletonModel::default_human(),
        &config.camera,
        &config.data,
        &data_dir,
    )?;
    let artifacts = ["manifest.txt", "poses.bin", "images.bin"]
        .iter()
        .map(|name| data_dir.join(name))
        .collect::<Vec<_>>();
    record_artifacts(&layout, config, &artifacts)?;
    Ok(dataset)
}

/// One training stage of the pipeline or one baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainStage {
    /// Greedy pretraining plus fine-tuning of the pose auto-encoder.
    Ae,
    /// Image-to-latent CNN regression onto the auto-encoder's codes.
    Latent,
    /// Decoder stacking and end-to-end fine-tuning of the full pipeline.
    Finetune,
    /// CNN regressing poses directly.
    Direct,
    /// CNN regressing PCA coefficients, reprojected by the basis.
    Pca,
    /// Direct CNN with an extra wide fully-connected layer.
    Extrafc,
}

impl TrainStage {
    pub fn parse(text: &str) -> Result<TrainStage> {
        match text {
            "ae" => Ok(TrainStage::Ae),
            "latent" => Ok(TrainStage::Latent),
            "finetune" => Ok(TrainStage::Finetune),
            "direct" => Ok(TrainStage::Direct),
            "pca" => Ok(TrainStage::Pca),
            "extrafc" => Ok(TrainStage::Extrafc),
            other => Err(Error::Config(format!(
                "unknown training stage `{other}`; expected ae, latent, finetune, direct, pca, or extrafc"
            ))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TrainStage::Ae => "ae",
            TrainStage::Latent => "latent",
            TrainStage::Finetune => "finetune",
            TrainStage::Direct => "direct",
            TrainStage::Pca => "pca",
            TrainStage::Extrafc => "extrafc",
        }
    }
}

fn load_required_dataset(layout: &OutputLayout, stage: &str) -> Result<Dataset> {
    let manifest = layout.dataset_dir().join("manifest.txt");
    if !manifest.exists() {
        return Err(Error::MissingStage {
            stage: stage.to_string(),
            requires: "gen-data".into(),
            artifact: manifest.display().to_string(),
        });
    }
    load_dataset(&layout.dataset_dir())
}

fn require_artifact(path: &Path, stage: &str, requires: &str) -> Result<()> {
    if !path.exists() {
        return Err(Error::MissingStage {
            stage: stage.to_string(),
            requires: requires.to_string(),
            artifact: path.display().to_string(),
        });
    }
    Ok(())
}

fn load_required_autoencoder(layout: &OutputLayout, stage: &str) -> Result<AutoEncoderParams> {
    let path = layout.model_path("ae");
    require_artifact(&path, stage, "train --stage ae")?;
    model_io::load_autoencoder(&path)
}

fn load_required_latent_cnn(layout: &OutputLayout, stage: &str) -> Result<ImageEncoderParams> {
    let path = layout.model_path("latent_cnn");
    require_artifact(&path, stage, "train --stage latent")?;
    model_io::load_image_encoder(&path)
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path)
        .map_err(|e| Error::io(format!("creating {}", path.display()), e))
}

fn train_poses(dataset: &Dataset) -> Vec<Pose> {
    dataset.train.iter().map(|r| r.pose.clone()).collect()
}

/// Runs one training stage against the dataset under `out_dir`, writing
/// its model file and loss CSVs. Returns the paths written. Prior-stage
/// models are read, never modified.
pub fn stage_train(
    config: &PipelineConfig,
    out_dir: &Path,
    stage: TrainStage,
) -> Result<Vec<PathBuf>> {
    config.validate()?;
    let layout = OutputLayout::new(out_dir);
    check_manifest(&layout, config)?;
    let stage_name = format!("train --stage {}", stage.as_str());
    let dataset = load_required_dataset(&layout, &stage_name)?;
    create_dir(&layout.root().join("models"))?;
    create_dir(&layout.root().join("logs"))?;

    let mut written = Vec::new();
    let save_log = |name: &str, log: &[crate::trainlog::EpochStat]| -> Result<PathBuf> {
        let path = layout.log_path(name);
        write_loss_csv(&path, log)?;
        Ok(path)
    };

    match stage {
        TrainStage::Ae => {
            let poses = train_poses(&dataset);
            let (pretrained, stage_logs) =
                pretrain_layerwise(&poses, &config.ae_layer_sizes, &config.ae)?;
            let (params, finetune_log) = finetune_ae(&pretrained, &poses, &config.ae)?;
            let model = layout.model_path("ae");
            model_io::save_autoencoder(&model, &params)?;
            written.push(model);
            for (j, log) in stage_logs.iter().enumerate() {
                written.push(save_log(&format!("ae_pretrain_{}", j + 1), log)?);
            }
            written.push(save_log("ae_finetune", &finetune_log)?);
        }
        TrainStage::Latent => {
            let ae = load_required_autoencoder(&layout, &stage_name)?;
            let (params, log) =
                train_latent_regression(&config.cnn, &ae, &dataset.train, &config.reg)?;
            let model = layout.model_path("latent_cnn");
            model_io::save_image_encoder(&model, &params)?;
            written.push(model);
            written.push(save_log("latent_cnn", &log)?);
        }
        TrainStage::Finetune => {
            let ae = load_required_autoencoder(&layout, &stage_name)?;
            let cnn = load_required_latent_cnn(&layout, &stage_name)?;
            let stacked = stack_decoder(cnn, &ae)?;
            let mut finetune_config = config.reg.clone();
            finetune_config.epochs = config.finetune_epochs;
            let (params, log) = finetune_stacked(stacked, &dataset.train, &finetune_config)?;
            let model = layout.model_path("pipeline");
            model_io::save_stacked(&model, &params)?;
            written.push(model);
            written.push(save_log("pipeline_finetune", &log)?);
        }
        TrainStage::Direct => {
            let (params, log) = train_direct_baseline(&config.cnn, &dataset.train, &config.reg)?;
            let model = layout.model_path("direct");
            model_io::save_image_encoder(&model, &params)?;
            written.push(model);
            written.push(save_log("direct", &log)?);
        }
        TrainStage::Pca => {
            let poses = train_poses(&dataset);
            let basis = fit_pca(&poses, config.pca_components)?;
            let basis_path = layout.model_path("pca_basis");
            model_io::save_pca_basis(&basis_path, &basis)?;
            written.push(basis_path);
            let (params, log) =
                train_pca_baseline(&config.cnn, &dataset.train, &config.reg, config.pca_components)?;
            let model = layout.model_path("pca");
            model_io::save_stacked(&model, &params)?;
            written.push(model);
            written.push(save_log("pca", &log)?);
        }
        TrainStage::Extrafc => {
            let (params, log) = train_extrafc_baseline(
                &config.cnn,
                &dataset.train,
                &config.reg,
                config.extra_fc_width,
            )?;
            let model = layout.model_path("extrafc");
            model_io::save_image_encoder(&model, &params)?;
            written.push(model);
            written.push(save_log("extrafc", &log)?);
        }
    }
    record_artifacts(&layout, config, &written)?;
    Ok(written)
}

/// Method names `stage_eval` understands, in report order.
pub const EVAL_METHODS: [&str; 6] = ["truth", "pipeline", "latent", "direct", "extrafc", "pca"];

fn check_skeleton(method: &str, model_dim: usize, dataset: &Dataset) -> Result<()> {
    let pose_dim = 3 * dataset.model.joint_count();
    if model_dim != pose_dim {
        return Err(Error::Dimension {
            op: "eval",
            detail: format!(
                "model `{method}` predicts {model_dim}-dimensional poses but the \
                 dataset skeleton has {pose_dim} coordinates: incompatible skeleton"
            ),
        });
    }
    Ok(())
}

fn predict_stacked_all(
    method: &str,
    params: &StackedNetworkParams,
    dataset: &Dataset,
) -> Result<Vec<Pose>> {
    check_skeleton(method, params.output_dim(), dataset)?;
    dataset
        .test
        .iter()
        .map(|r| predict_pose(params, &r.image))
        .collect()
}

fn predict_direct_all(
    method: &str,
    params: &ImageEncoderParams,
    dataset: &Dataset,
) -> Result<Vec<Pose>> {
    check_skeleton(method, params.output_dim(), dataset)?;
    dataset
        .test
        .iter()
        .map(|r| predict_direct(params, &r.image))
        .collect()
}

fn method_predictions(layout: &OutputLayout, method: &str, dataset: &Dataset) -> Result<Vec<Pose>> {
    match method {
        "truth" => Ok(dataset.test.iter().map(|r| r.pose.clone()).collect()),
        "pipeline" => {
            let path = layout.model_path("pipeline");
            require_artifact(&path, "eval", "train --stage finetune")?;
            predict_stacked_all(method, &model_io::load_stacked(&path)?, dataset)
        }
        "latent" => {
            // The un-finetuned pipeline: latent CNN stacked with the
            // auto-encoder's decoder exactly as fine-tuning would start.
            let ae = load_required_autoencoder(layout, "eval")?;
            let cnn = load_required_latent_cnn(layout, "eval")?;
            predict_stacked_all(method, &stack_decoder(cnn, &ae)?, dataset)
        }
        "direct" => {
            let path = layout.model_path("direct");
            require_artifact(&path, "eval", "train --stage direct")?;
            predict_direct_all(method, &model_io::load_image_encoder(&path)?, dataset)
        }
        "extrafc" => {
            let path = layout.model_path("extrafc");
            require_artifact(&path, "eval", "train --stage extrafc")?;
            predict_direct_all(method, &model_io::load_image_encoder(&path)?, dataset)
        }
        "pca" => {
            let path = layout.model_path("pca");
            require_artifact(&path, "eval", "train --stage pca")?;
            predict_stacked_all(method, &model_io::load_stacked(&path)?, dataset)
        }
        other => Err(Error::Config(format!(
            "unknown evaluation method `{other}`; expected one of truth, \
             pipeline, latent, direct, extrafc, pca"
        ))),
    }
}

/// Ground truth first, then every method whose model files are present.
fn available_methods(layout: &OutputLayout) -> Vec<String> {
    let mut out = vec!["truth".to_string()];
    for name in ["pipeline", "latent", "direct", "extrafc", "pca"] {
        let present = if name == "latent" {
            layout.model_path("ae").exists() && layout.model_path("latent_cnn").exists()
        } else {
            layout.model_path(name).exists()
        };
        if present {
            out.push(name.to_string());
        }
    }
    out
}

/// Evaluates the requested methods (all available ones when `methods` is
/// empty) on the test split, writing `report/report.csv` plus a ratio
/// CSV and heatmap per method. Returns the assembled report.
pub fn stage_eval(
    config: &PipelineConfig,
    out_dir: &Path,
    methods: &[String],
) -> Result<EvalReport> {
    config.validate()?;
    let layout = OutputLayout::new(out_dir);
    check_manifest(&layout, config)?;
    let dataset = load_required_dataset(&layout, "eval")?;
    let (lower, upper) = default_partitions(&dataset.model)?;
    let chosen: Vec<String> = if methods.is_empty() {
        available_methods(&layout)
    } else {
        methods.to_vec()
    };

    let mut rows = Vec::new();
    let mut matrices = Vec::new();
    for method in &chosen {
        let predictions = method_predictions(&layout, method, &dataset)?;
        let (mut method_rows, matrix) = evaluate_method(
            method,
            &predictions,
            &dataset.test,
            &dataset.model,
            &lower,
            &upper,
        )?;
        rows.append(&mut method_rows);
        matrices.push((method.clone(), matrix));
    }

    let report_dir = layout.report_dir();
    create_dir(&report_dir)?;
    let mut written = Vec::new();
    let report_path = report_dir.join("report.csv");
    write_report_csv(&report_path, &rows)?;
    written.push(report_path);
    for (method, matrix) in &matrices {
        let ratio_path = report_dir.join(format!("ratio_{method}.csv"));
        std::fs::write(&ratio_path, matrix_csv(matrix))
            .map_err(|e| Error::io(format!("writing {}", ratio_path.display()), e))?;
        written.push(ratio_path);
        let heatmap_base = report_dir.join(format!("heatmap_{method}"));
        write_heatmap(matrix, &heatmap_base)?;
        written.push(heatmap_base.with_extension("pgm"));
        written.push(heatmap_base.with_extension("txt"));
    }
    record_artifacts(&layout, config, &written)?;
    Ok(EvalReport { rows, matrices })
}

/// Outcome of one sweep value: either the aggregate test metrics of the
/// fine-tuned pipeline, or the error that stopped that run.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub layers: Vec<usize>,
    pub test_mpjpe_mm: Option<f64>,
    pub full_ratio_sum: Option<f64>,
    pub error: Option<String>,
}

impl SweepRow {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

/// Directory label for one sweep value, e.g. `ae-300-300`.
pub fn sweep_label(layers: &[usize]) -> String {
    let joined = layers
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("-");
    format!("ae-{joined}")
}

fn sweep_value_config(base: &PipelineConfig, layers: &[usize]) -> PipelineConfig {
    let mut config = base.clone();
    config.ae_layer_sizes = layers.to_vec();
    if config.ae.noise_sigmas.len() != layers.len() {
        let sigma = config.ae.noise_sigmas.first().copied().unwrap_or(0.0);
        config.ae.noise_sigmas = vec![sigma; layers.len()];
    }
    config
}

fn run_sweep_value(config: &PipelineConfig, run_dir: &Path) -> Result<(f64, f64)> {
    stage_gen_data(config, run_dir, true)?;
    stage_train(config, run_dir, TrainStage::Ae)?;
    stage_train(config, run_dir, TrainStage::Latent)?;
    stage_train(config, run_dir, TrainStage::Finetune)?;
    let report = stage_eval(config, run_dir, &["pipeline".to_string()])?;
    let aggregate = report
        .rows
        .iter()
        .find(|row| row.method == "pipeline" && row.action == "all")
        .ok_or_else(|| Error::Config("sweep evaluation produced no aggregate row".into()))?;
    Ok((aggregate.mpjpe_mm, aggregate.full_sum))
}

/// CSV rendering of sweep results: one row per configuration value, with
/// metrics blank and the message recorded for failed runs.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("ae_layers,status,test_mpjpe_mm,full_ratio_sum,error\n");
    for row in rows {
        let layers = row
            .layers
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join("-");
        match (&row.error, row.test_mpjpe_mm, row.full_ratio_sum) {
            (None, Some(mpjpe), Some(full)) => {
                out.push_str(&format!("{layers},ok,{mpjpe:.2},{full:.4},\n"));
            }
            (error, _, _) => {
                let message = error.as_deref().unwrap_or("run produced no metrics");
                out.push_str(&format!("{layers},failed,,,{}\n", message.replace(',', ";")));
            }
        }
    }
    out
}

/// Runs the full pipeline (gen-data through eval) once per layer-size
/// value, each run in its own subdirectory under `<out_dir>/sweep`. A
/// failed value is recorded in its row and the sweep continues; the
/// caller decides the exit status from [`SweepRow::failed`]. Writes the
/// comparison table to `<out_dir>/sweep.csv`.
pub fn run_sweep(
    config: &PipelineConfig,
    out_dir: &Path,
    values: &[Vec<usize>],
) -> Result<Vec<SweepRow>> {
    config.validate()?;
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one ae-layers value".into()));
    }
    let layout = OutputLayout::new(out_dir);
    check_manifest(&layout, config)?;
    let mut rows = Vec::with_capacity(values.len());
    for layers in values {
        let run_dir = layout.sweep_run_dir(&sweep_label(layers));
        let run_config = sweep_value_config(config, layers);
        let row = match run_sweep_value(&run_config, &run_dir) {
            Ok((mpjpe, full)) => SweepRow {
                layers: layers.clone(),
                test_mpjpe_mm: Some(mpjpe),
                full_ratio_sum: Some(full),
                error: None,
            },
            Err(error) => SweepRow {
                layers: layers.clone(),
                test_mpjpe_mm: None,
                full_ratio_sum: None,
                error: Some(error.to_string()),
            },
        };
        rows.push(row);
    }
    let csv_path = layout.sweep_csv_path();
    std::fs::write(&csv_path, sweep_csv(&rows))
        .map_err(|e| Error::io(format!("writing {}", csv_path.display()), e))?;
    record_artifacts(&layout, config, &[csv_path])?;
    Ok(rows)
}
