//! Versioned binary container for trained model parameters.
//!
//! One format serves every model family.  Layout, all integers little
//! endian:
//!
//! ```text
//! magic    b"PLMF"
//! version  u32 (currently 1)
//! kind     u32 (1 auto-encoder, 2 image encoder, 3 stacked network, 4 PCA basis)
//! meta     u32 entry count, then per entry:
//!            key length u32, key bytes (UTF-8), value length u32, value bytes
//! tensors  u32 tensor count, then per tensor:
//!            name length u32, name bytes, rank u32, dims u64 × rank,
//!            values f64 × product(dims)
//! ```
//!
//! Loaders rebuild models through the same validating constructors used for
//! freshly initialized parameters, so a corrupt or mislabeled file cannot
//! produce a structurally invalid model.  Floating-point meta values (the
//! CNN output scale) are stored as hexadecimal bit patterns so save/load
//! round-trips are bit exact.

use std::path::Path;

use crate::autoencoder::{AeLayer, AutoEncoderParams};
use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::regressor::{
    CnnArchitecture, ConvLayer, DenseLayer, ImageEncoderParams, PcaBasis, StackedNetworkParams,
};

const MAGIC: &[u8; 4] = b"PLMF";
const VERSION: u32 = 1;

/// Which model family a container file holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    AutoEncoder,
    ImageEncoder,
    StackedNetwork,
    PcaBasis,
}

impl ModelKind {
    fn code(self) -> u32 {
        match self {
            ModelKind::AutoEncoder => 1,
            ModelKind::ImageEncoder => 2,
            ModelKind::StackedNetwork => 3,
            ModelKind::PcaBasis => 4,
        }
    }

    fn from_code(code: u32) -> Option<ModelKind> {
        match code {
            1 => Some(ModelKind::AutoEncoder),
            2 => Some(ModelKind::ImageEncoder),
            3 => Some(ModelKind::StackedNetwork),
            4 => Some(ModelKind::PcaBasis),
            _ => None,
        }
    }

    /// Human-readable name used in error messages and by the CLI.
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::AutoEncoder => "auto-encoder",
            ModelKind::ImageEncoder => "image encoder",
            ModelKind::StackedNetwork => "stacked network",
            ModelKind::PcaBasis => "pca basis",
        }
    }
}

// --- writing -----------------------------------------------------------------

struct Writer {
    bytes: Vec<u8>,
}

impl Writer {
    fn new(kind: ModelKind, meta: &[(String, String)]) -> Writer {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(MAGIC);
        bytes.extend_from_slice(&VERSION.to_le_bytes());
        bytes.extend_from_slice(&kind.code().to_le_bytes());
        bytes.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        for (key, value) in meta {
            for text in [key, value] {
                bytes.extend_from_slice(&(text.len() as u32).to_le_bytes());
                bytes.extend_from_slice(text.as_bytes());
            }
        }
        Writer { bytes }
    }

    fn finish(mut self, tensors: &[(String, &Tensor)]) -> Vec<u8> {
        self.bytes.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
        for (name, tensor) in tensors {
            self.bytes.extend_from_slice(&(name.len() as u32).to_le_bytes());
            self.bytes.extend_from_slice(name.as_bytes());
            self.bytes.extend_from_slice(&(tensor.rank() as u32).to_le_bytes());
            for &dim in tensor.shape() {
                self.bytes.extend_from_slice(&(dim as u64).to_le_bytes());
            }
            for v in tensor.as_slice() {
                self.bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        self.bytes
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .map_err(|e| Error::io(format!("creating {}", parent.display()), e))?;
        }
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

fn meta_entry(key: &str, value: impl std::fmt::Display) -> (String, String) {
    (key.to_string(), value.to_string())
}

fn f64_bits_hex(value: f64) -> String {
    format!("{:016x}", value.to_bits())
}

// --- reading -----------------------------------------------------------------

struct Parsed {
    path: String,
    kind: ModelKind,
    meta: Vec<(String, String)>,
    tensors: Vec<(String, Tensor)>,
}

impl Parsed {
    fn format_err(&self, detail: impl Into<String>) -> Error {
        Error::Format { path: self.path.clone(), detail: detail.into() }
    }

    fn meta_str(&self, key: &str) -> Result<&str> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| self.format_err(format!("missing meta entry `{key}`")))
    }

    fn meta_usize(&self, key: &str) -> Result<usize> {
        let text = self.meta_str(key)?;
        text.parse()
            .map_err(|_| self.format_err(format!("meta entry `{key}` is not a count: `{text}`")))
    }

    fn meta_f64_bits(&self, key: &str) -> Result<f64> {
        let text = self.meta_str(key)?;
        let bits = u64::from_str_radix(text, 16).map_err(|_| {
            self.format_err(format!("meta entry `{key}` is not a hex bit pattern: `{text}`"))
        })?;
        Ok(f64::from_bits(bits))
    }

    fn tensor(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| self.format_err(format!("missing tensor `{name}`")))
    }

    fn take_tensor(&self, name: &str) -> Result<Tensor> {
        self.tensor(name).cloned()
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    offset: usize,
    path: String,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.offset + n > self.bytes.len() {
            return Err(Error::Format {
                path: self.path.clone(),
                detail: format!(
                    "truncated: needed {n} bytes at offset {}, file has {}",
                    self.offset,
                    self.bytes.len()
                ),
            });
        }
        let slice = &self.bytes[self.offset..self.offset + n];
        self.offset += n;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let len = self.u32()? as usize;
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| Error::Format {
            path: self.path.clone(),
            detail: "string field is not valid UTF-8".into(),
        })
    }
}

fn parse_file(path: &Path) -> Result<Parsed> {
    let bytes =
        std::fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let mut cursor = Cursor { bytes: &bytes, offset: 0, path: path.display().to_string() };
    let fail = |cursor: &Cursor, detail: String| Error::Format {
        path: cursor.path.clone(),
        detail,
    };

    let found = cursor.take(4)?;
    if found != MAGIC {
        return Err(fail(&cursor, format!("bad magic {found:?}, expected {MAGIC:?}")));
    }
    let version = cursor.u32()?;
    if version != VERSION {
        return Err(fail(
            &cursor,
            format!("unsupported version {version}, this build reads {VERSION}"),
        ));
    }
    let kind_code = cursor.u32()?;
    let Some(kind) = ModelKind::from_code(kind_code) else {
        return Err(fail(&cursor, format!("unknown model kind {kind_code}")));
    };

    let meta_count = cursor.u32()? as usize;
    let mut meta = Vec::with_capacity(meta_count);
    for _ in 0..meta_count {
        let key = cursor.string()?;
        let value = cursor.string()?;
        meta.push((key, value));
    }

    let tensor_count = cursor.u32()? as usize;
    let mut tensors = Vec::with_capacity(tensor_count);
    for _ in 0..tensor_count {
        let name = cursor.string()?;
        let rank = cursor.u32()? as usize;
        let mut shape = Vec::with_capacity(rank);
        let mut len = 1usize;
        for _ in 0..rank {
            let dim = cursor.u64()? as usize;
            len = len.checked_mul(dim).ok_or_else(|| {
                fail(&cursor, format!("tensor `{name}` has an overflowing shape"))
            })?;
            shape.push(dim);
        }
        if len.checked_mul(8).map_or(true, |need| cursor.offset + need > bytes.len()) {
            return Err(fail(
                &cursor,
                format!("tensor `{name}` declares more data than the file holds"),
            ));
        }
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            data.push(cursor.f64()?);
        }
        tensors.push((name, Tensor::from_vec(&shape, data)?));
    }
    if cursor.offset != bytes.len() {
        return Err(fail(
            &cursor,
            format!("{} trailing bytes after the declared content", bytes.len() - cursor.offset),
        ));
    }
    Ok(Parsed { path: cursor.path, kind, meta, tensors })
}

fn expect_kind(parsed: &Parsed, expected: ModelKind) -> Result<()> {
    if parsed.kind != expected {
        return Err(parsed.format_err(format!(
            "file holds a {} model, expected a {}",
            parsed.kind.as_str(),
            expected.as_str()
        )));
    }
    Ok(())
}

/// Read just the model kind stored in a container file.
pub fn peek_kind(path: &Path) -> Result<ModelKind> {
    Ok(parse_file(path)?.kind)
}

// --- auto-encoder ------------------------------------------------------------

fn autoencoder_tensors(params: &AutoEncoderParams) -> Vec<(String, &Tensor)> {
    let mut out = Vec::with_capacity(3 * params.layer_count());
    for (j, layer) in params.layers().iter().enumerate() {
        out.push((format!("layer{j}.weight"), &layer.weight));
        out.push((format!("layer{j}.encode_bias"), &layer.encode_bias));
        out.push((format!("layer{j}.decode_bias"), &layer.decode_bias));
    }
    out
}

/// Save an auto-encoder to a container file.
pub fn save_autoencoder(path: &Path, params: &AutoEncoderParams) -> Result<()> {
    let meta = vec![meta_entry("layers", params.layer_count())];
    let writer = Writer::new(ModelKind::AutoEncoder, &meta);
    write_file(path, &writer.finish(&autoencoder_tensors(params)))
}

/// Load an auto-encoder from a container file.
pub fn load_autoencoder(path: &Path) -> Result<AutoEncoderParams> {
    let parsed = parse_file(path)?;
    expect_kind(&parsed, ModelKind::AutoEncoder)?;
    autoencoder_from(&parsed, "")
}

fn autoencoder_from(parsed: &Parsed, prefix: &str) -> Result<AutoEncoderParams> {
    let count = parsed.meta_usize(&format!("{prefix}layers"))?;
    let mut layers = Vec::with_capacity(count);
    for j in 0..count {
        let weight = parsed.take_tensor(&format!("{prefix}layer{j}.weight"))?;
        let encode_bias = parsed.take_tensor(&format!("{prefix}layer{j}.encode_bias"))?;
        let decode_bias = parsed.take_tensor(&format!("{prefix}layer{j}.decode_bias"))?;
        let (out_dim, in_dim) = weight.dims2("autoencoder")?;
        if encode_bias.shape() != [out_dim] || decode_bias.shape() != [in_dim] {
            return Err(parsed.format_err(format!(
                "layer {j} biases {:?}/{:?} do not match weight shape [{out_dim}, {in_dim}]",
                encode_bias.shape(),
                decode_bias.shape()
            )));
        }
        layers.push(AeLayer { weight, encode_bias, decode_bias });
    }
    AutoEncoderParams::from_layers(layers)
}

// --- image encoder -----------------------------------------------------------

fn image_encoder_meta(params: &ImageEncoderParams, prefix: &str) -> Vec<(String, String)> {
    vec![
        meta_entry(&format!("{prefix}input_size"), params.arch().input_size),
        meta_entry(&format!("{prefix}conv_layers"), params.conv_layers().len()),
        meta_entry(&format!("{prefix}dense_layers"), params.dense_layers().len()),
        (format!("{prefix}output_scale"), f64_bits_hex(params.output_scale())),
    ]
}

fn image_encoder_tensors<'a>(
    params: &'a ImageEncoderParams,
    prefix: &str,
) -> Vec<(String, &'a Tensor)> {
    let mut out = Vec::new();
    for (i, layer) in params.conv_layers().iter().enumerate() {
        out.push((format!("{prefix}conv{i}.kernels"), &layer.kernels));
        out.push((format!("{prefix}conv{i}.bias"), &layer.bias));
    }
    for (i, layer) in params.dense_layers().iter().enumerate() {
        out.push((format!("{prefix}dense{i}.weights"), &layer.weights));
        out.push((format!("{prefix}dense{i}.bias"), &layer.bias));
    }
    out.push((format!("{prefix}output.weights"), &params.output_layer().weights));
    out.push((format!("{prefix}output.bias"), &params.output_layer().bias));
    out
}

fn image_encoder_from(parsed: &Parsed, prefix: &str) -> Result<ImageEncoderParams> {
    let input_size = parsed.meta_usize(&format!("{prefix}input_size"))?;
    let conv_count = parsed.meta_usize(&format!("{prefix}conv_layers"))?;
    let dense_count = parsed.meta_usize(&format!("{prefix}dense_layers"))?;
    let output_scale = parsed.meta_f64_bits(&format!("{prefix}output_scale"))?;

    let mut conv = Vec::with_capacity(conv_count);
    let mut conv_channels = Vec::with_capacity(conv_count);
    let mut conv_kernels = Vec::with_capacity(conv_count);
    for i in 0..conv_count {
        let kernels = parsed.take_tensor(&format!("{prefix}conv{i}.kernels"))?;
        let bias = parsed.take_tensor(&format!("{prefix}conv{i}.bias"))?;
        let (out_c, _, k, _) = kernels.dims4("image_encoder")?;
        conv_channels.push(out_c);
        conv_kernels.push(k);
        conv.push(ConvLayer { kernels, bias });
    }
    let mut dense = Vec::with_capacity(dense_count);
    let mut fc_widths = Vec::with_capacity(dense_count);
    for i in 0..dense_count {
        let weights = parsed.take_tensor(&format!("{prefix}dense{i}.weights"))?;
        let bias = parsed.take_tensor(&format!("{prefix}dense{i}.bias"))?;
        fc_widths.push(weights.dims2("image_encoder")?.0);
        dense.push(DenseLayer { weights, bias });
    }
    let output = DenseLayer {
        weights: parsed.take_tensor(&format!("{prefix}output.weights"))?,
        bias: parsed.take_tensor(&format!("{prefix}output.bias"))?,
    };
    let arch = CnnArchitecture { input_size, conv_channels, conv_kernels, fc_widths };
    ImageEncoderParams::from_parts(arch, conv, dense, output, output_scale)
}

/// Save a CNN image encoder to a container file.
pub fn save_image_encoder(path: &Path, params: &ImageEncoderParams) -> Result<()> {
    let writer = Writer::new(ModelKind::ImageEncoder, &image_encoder_meta(params, ""));
    write_file(path, &writer.finish(&image_encoder_tensors(params, "")))
}

/// Load a CNN image encoder from a container file.
pub fn load_image_encoder(path: &Path) -> Result<ImageEncoderParams> {
    let parsed = parse_file(path)?;
    expect_kind(&parsed, ModelKind::ImageEncoder)?;
    image_encoder_from(&parsed, "")
}

// --- stacked network ----------------------------------------------------------

/// Save a stacked network to a container file.
pub fn save_stacked(path: &Path, params: &StackedNetworkParams) -> Result<()> {
    let mut meta = image_encoder_meta(params.encoder(), "encoder.");
    meta.push(meta_entry("decoder_layers", params.decoder_layers().len()));
    let mut tensors = image_encoder_tensors(params.encoder(), "encoder.");
    for (i, layer) in params.decoder_layers().iter().enumerate() {
        tensors.push((format!("decoder{i}.weights"), &layer.weights));
        tensors.push((format!("decoder{i}.bias"), &layer.bias));
    }
    let writer = Writer::new(ModelKind::StackedNetwork, &meta);
    write_file(path, &writer.finish(&tensors))
}

/// Load a stacked network from a container file.
pub fn load_stacked(path: &Path) -> Result<StackedNetworkParams> {
    let parsed = parse_file(path)?;
    expect_kind(&parsed, ModelKind::StackedNetwork)?;
    let encoder = image_encoder_from(&parsed, "encoder.")?;
    let count = parsed.meta_usize("decoder_layers")?;
    let mut decoder = Vec::with_capacity(count);
    for i in 0..count {
        decoder.push(DenseLayer {
            weights: parsed.take_tensor(&format!("decoder{i}.weights"))?,
            bias: parsed.take_tensor(&format!("decoder{i}.bias"))?,
        });
    }
    StackedNetworkParams::from_parts(encoder, decoder)
}

// --- PCA basis -----------------------------------------------------------------

/// Save a PCA basis to a container file.
pub fn save_pca_basis(path: &Path, basis: &PcaBasis) -> Result<()> {
    let mean = Tensor::vector(basis.mean().to_vec())?;
    let variance = Tensor::vector(basis.explained_variance().to_vec())?;
    let tensors = vec![
        ("mean".to_string(), &mean),
        ("components".to_string(), basis.components()),
        ("explained_variance".to_string(), &variance),
    ];
    let writer = Writer::new(ModelKind::PcaBasis, &[]);
    write_file(path, &writer.finish(&tensors))
}

/// Load a PCA basis from a container file.
pub fn load_pca_basis(path: &Path) -> Result<PcaBasis> {
    let parsed = parse_file(path)?;
    expect_kind(&parsed, ModelKind::PcaBasis)?;
    let mean = parsed.take_tensor("mean")?;
    let components = parsed.take_tensor("components")?;
    let variance = parsed.take_tensor("explained_variance")?;
    PcaBasis::from_parts(mean.into_vec(), components, variance.into_vec())
}
