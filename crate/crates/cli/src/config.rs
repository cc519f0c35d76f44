//! The experiment configuration file: a flat, line-oriented `key = value`
//! text format, sections expressed by key prefixes (`data.`, `camera.`,
//! `ae.`, `cnn.`, `reg.`, …).
//!
//! The keys mirror the canonical rendering in
//! [`poselift_core::pipeline::canonical_config_text`], so the `config.txt`
//! a run writes next to its artifacts can be fed back through `--config`
//! unchanged. Omitted keys keep their defaults. Blank lines and lines
//! starting with `#` are comments. Unknown and duplicate keys are
//! rejected, and the assembled configuration is validated before it is
//! returned, so no stage ever starts from a half-checked config.

use std::collections::BTreeSet;
use std::path::Path;

use poselift_core::error::{Error, Result};
use poselift_core::pipeline::PipelineConfig;
use poselift_core::synthdata::{ActionSpec, SubjectSpec, ViewAxis};

/// Parses and validates a configuration, starting from the defaults.
pub fn parse_config(text: &str) -> Result<PipelineConfig> {
    let mut config = PipelineConfig::default();
    let mut seen = BTreeSet::new();
    for (index, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let at_line = |detail: String| Error::Config(format!("line {}: {detail}", index + 1));
        let Some((key, value)) = line.split_once('=') else {
            return Err(at_line(format!("expected `key = value`, got `{line}`")));
        };
        let (key, value) = (key.trim(), value.trim());
        if !seen.insert(key.to_string()) {
            return Err(at_line(format!("duplicate key `{key}`")));
        }
        apply(&mut config, key, value).map_err(|error| match error {
            Error::Config(detail) => at_line(detail),
            other => other,
        })?;
    }
    config.validate()?;
    Ok(config)
}

/// Reads a configuration file from disk.
pub fn load_config(path: &Path) -> Result<PipelineConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    parse_config(&text)
}

fn apply(config: &mut PipelineConfig, key: &str, value: &str) -> Result<()> {
    match key {
        "data.n_train" => config.data.n_train = parse_usize(key, value)?,
        "data.n_test" => config.data.n_test = parse_usize(key, value)?,
        "data.train_subjects" => config.data.train_subjects = parse_subjects(key, value)?,
        "data.test_subjects" => config.data.test_subjects = parse_subjects(key, value)?,
        "data.actions" => config.data.actions = parse_actions(key, value)?,
        "data.seed" => config.data.seed = parse_u64(key, value)?,
        "camera.view_axis" => config.camera.view_axis = parse_axis(key, value)?,
        "camera.image_size" => config.camera.image_size = parse_usize(key, value)?,
        "camera.mm_per_pixel" => config.camera.mm_per_pixel = parse_f64(key, value)?,
        "camera.line_thickness" => config.camera.line_thickness = parse_f64(key, value)?,
        "ae.layer_sizes" => config.ae_layer_sizes = parse_usize_list(key, value)?,
        "ae.noise_sigmas" => config.ae.noise_sigmas = parse_f64_list(key, value)?,
        "ae.lambda" => config.ae.lambda = parse_f64(key, value)?,
        "ae.learning_rate" => config.ae.learning_rate = parse_f64(key, value)?,
        "ae.batch_size" => config.ae.batch_size = parse_usize(key, value)?,
        "ae.epochs" => config.ae.epochs = parse_usize(key, value)?,
        "ae.seed" => config.ae.seed = parse_u64(key, value)?,
        "cnn.input_size" => config.cnn.input_size = parse_usize(key, value)?,
        "cnn.conv_channels" => config.cnn.conv_channels = parse_usize_list(key, value)?,
        "cnn.conv_kernels" => config.cnn.conv_kernels = parse_usize_list(key, value)?,
        "cnn.fc_widths" => config.cnn.fc_widths = parse_usize_list(key, value)?,
        "reg.learning_rate" => config.reg.learning_rate = parse_f64(key, value)?,
        "reg.batch_size" => config.reg.batch_size = parse_usize(key, value)?,
        "reg.epochs" => config.reg.epochs = parse_usize(key, value)?,
        "reg.dropout" => config.reg.dropout = parse_f64(key, value)?,
        "reg.augment" => config.reg.augment = parse_bool(key, value)?,
        "reg.seed" => config.reg.seed = parse_u64(key, value)?,
        "finetune.epochs" => config.finetune_epochs = parse_usize(key, value)?,
        "pca.components" => config.pca_components = parse_usize(key, value)?,
        "extrafc.width" => config.extra_fc_width = parse_usize(key, value)?,
        // Convenience: one master seed for data generation and both
        // trainers. Later `*.seed` lines still override individually.
        "seed" => {
            let seed = parse_u64(key, value)?;
            *config = config.clone().with_seed(seed);
        }
        other => {
            return Err(Error::Config(format!("unknown config key `{other}`")));
        }
    }
    Ok(())
}

fn parse_usize(key: &str, value: &str) -> Result<usize> {
    value.parse().map_err(|_| {
        Error::Config(format!("key `{key}`: expected an unsigned integer, got `{value}`"))
    })
}

fn parse_u64(key: &str, value: &str) -> Result<u64> {
    value.parse().map_err(|_| {
        Error::Config(format!("key `{key}`: expected an unsigned integer, got `{value}`"))
    })
}

fn parse_f64(key: &str, value: &str) -> Result<f64> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("key `{key}`: expected a number, got `{value}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(Error::Config(format!(
            "key `{key}`: expected true or false, got `{other}`"
        ))),
    }
}

/// Comma-separated unsigned integers, e.g. `300,300`.
pub fn parse_usize_list(key: &str, value: &str) -> Result<Vec<usize>> {
    value.split(',').map(|item| parse_usize(key, item.trim())).collect()
}

fn parse_f64_list(key: &str, value: &str) -> Result<Vec<f64>> {
    value.split(',').map(|item| parse_f64(key, item.trim())).collect()
}

fn parse_axis(key: &str, value: &str) -> Result<ViewAxis> {
    match value {
        "x" => Ok(ViewAxis::X),
        "y" => Ok(ViewAxis::Y),
        "z" => Ok(ViewAxis::Z),
        other => Err(Error::Config(format!(
            "key `{key}`: expected x, y, or z, got `{other}`"
        ))),
    }
}

/// `id:limb_scale` pairs, comma-separated, e.g. `0:0.9,1:1.1`.
fn parse_subjects(key: &str, value: &str) -> Result<Vec<SubjectSpec>> {
    value
        .split(',')
        .map(|item| {
            let item = item.trim();
            let Some((id, scale)) = item.split_once(':') else {
                return Err(Error::Config(format!(
                    "key `{key}`: expected `id:limb_scale`, got `{item}`"
                )));
            };
            Ok(SubjectSpec {
                id: id.trim().parse().map_err(|_| {
                    Error::Config(format!("key `{key}`: bad subject id in `{item}`"))
                })?,
                limb_scale: parse_f64(key, scale.trim())?,
            })
        })
        .collect()
}

/// `name:angle_scale` pairs, comma-separated, e.g. `calm:0.5,active:1`.
fn parse_actions(key: &str, value: &str) -> Result<Vec<ActionSpec>> {
    value
        .split(',')
        .map(|item| {
            let item = item.trim();
            let Some((name, scale)) = item.split_once(':') else {
                return Err(Error::Config(format!(
                    "key `{key}`: expected `name:angle_scale`, got `{item}`"
                )));
            };
            Ok(ActionSpec {
                name: name.trim().to_string(),
                angle_scale: parse_f64(key, scale.trim())?,
            })
        })
        .collect()
}
