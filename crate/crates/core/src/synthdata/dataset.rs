//! Dataset generation and persistence.
//!
//! A dataset pairs rendered images with their ground-truth poses. Subjects
//! are limb-length scale variants of the base skeleton; the train and test
//! splits draw from disjoint subject sets, so test bodies are never seen in
//! training. Actions scale the joint angle ranges about their midpoints.
//!
//! On disk a dataset is a directory of three files:
//!
//! * `manifest.txt` — `key=value` lines recording the format version, the
//!   full skeleton model, camera, subject/action specs, counts, seed, and
//!   the SHA-256 of the two binary files;
//! * `poses.bin` — magic `PLPD`, version, record count, pose dimension,
//!   then per record: sample id (u64), subject id (u32), action index
//!   (u32), pose coordinates (f64, little-endian);
//! * `images.bin` — magic `PLIM`, version, image count, image side length,
//!   then 8-bit pixels, row-major, one image after another.
//!
//! Train records come first in both binaries; `n_train`/`n_test` in the
//! manifest say where the split falls. Everything is deterministic given
//! the manifest.

use std::path::Path;

use sha2::{Digest, Sha256};

use super::render::{render, CameraConfig, GrayImage, ViewAxis};
use super::skeleton::{sample_pose, SkeletonModel};
use crate::autoencoder::Pose;
use crate::error::{Error, Result};
use crate::numerics::RngStream;

const MANIFEST_VERSION: u64 = 1;
const POSES_MAGIC: &[u8; 4] = b"PLPD";
const IMAGES_MAGIC: &[u8; 4] = b"PLIM";
const BIN_VERSION: u32 = 1;

/// Per-sample RNG streams: train sample `i` uses `TRAIN_TAG + i`, test
/// sample `i` uses `TEST_TAG + i`, both off the master stream.
const TRAIN_TAG: u64 = 1 << 32;
const TEST_TAG: u64 = 2 << 32;

/// A subject variant: the base skeleton with all limb lengths scaled.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectSpec {
    pub id: u32,
    pub limb_scale: f64,
}

/// An action regime: angle ranges scaled about their midpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionSpec {
    pub name: String,
    pub angle_scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerateConfig {
    pub n_train: usize,
    pub n_test: usize,
    pub train_subjects: Vec<SubjectSpec>,
    pub test_subjects: Vec<SubjectSpec>,
    pub actions: Vec<ActionSpec>,
    pub seed: u64,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        let subject = |id: u32, limb_scale: f64| SubjectSpec { id, limb_scale };
        GenerateConfig {
            n_train: 200,
            n_test: 50,
            train_subjects: vec![
                subject(0, 0.90),
                subject(1, 0.95),
                subject(2, 1.00),
                subject(3, 1.05),
                subject(4, 1.10),
            ],
            test_subjects: vec![subject(5, 0.925), subject(6, 1.075)],
            actions: vec![
                ActionSpec {
                    name: "calm".into(),
                    angle_scale: 0.5,
                },
                ActionSpec {
                    name: "active".into(),
                    angle_scale: 1.0,
                },
            ],
            seed: 7,
        }
    }
}

impl GenerateConfig {
    pub fn validate(&self) -> Result<()> {
        let op = "generate_config";
        let fail = |name: &'static str, detail: String| Error::Parameter { op, name, detail };
        if self.n_train == 0 || self.n_test == 0 {
            return Err(fail(
                "n_train",
                format!(
                    "both splits must be non-empty, got n_train={} n_test={}",
                    self.n_train, self.n_test
                ),
            ));
        }
        if self.train_subjects.is_empty() || self.test_subjects.is_empty() {
            return Err(fail("subjects", "both splits need at least one subject".into()));
        }
        for s in self.train_subjects.iter().chain(&self.test_subjects) {
            if !(s.limb_scale > 0.0 && s.limb_scale.is_finite()) {
                return Err(fail(
                    "subjects",
                    format!("subject {} limb scale must be positive, got {}", s.id, s.limb_scale),
                ));
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for s in self.train_subjects.iter().chain(&self.test_subjects) {
            if !seen.insert(s.id) {
                return Err(fail(
                    "subjects",
                    format!("subject id {} appears in both splits (or twice in one)", s.id),
                ));
            }
        }
        if self.actions.is_empty() {
            return Err(fail("actions", "need at least one action".into()));
        }
        let mut names = std::collections::BTreeSet::new();
        for a in &self.actions {
            if a.name.is_empty() || a.name.contains([',', ';', ':', '\n', '=']) {
                return Err(fail(
                    "actions",
                    format!("action name {:?} is empty or contains reserved characters", a.name),
                ));
            }
            if !names.insert(a.name.as_str()) {
                return Err(fail("actions", format!("duplicate action name {:?}", a.name)));
            }
            if !(a.angle_scale >= 0.0 && a.angle_scale.is_finite()) {
                return Err(fail(
                    "actions",
                    format!("action {:?} angle scale must be >= 0, got {}", a.name, a.angle_scale),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRecord {
    pub sample_id: u64,
    pub pose: Pose,
    pub image: GrayImage,
    pub subject_id: u32,
    pub action: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub model: SkeletonModel,
    pub camera: CameraConfig,
    pub config: GenerateConfig,
    pub train: Vec<DatasetRecord>,
    pub test: Vec<DatasetRecord>,
}

fn generate_split(
    model: &SkeletonModel,
    camera: &CameraConfig,
    subjects: &[SubjectSpec],
    actions: &[ActionSpec],
    master: &RngStream,
    tag: u64,
    count: usize,
    first_sample_id: u64,
) -> Result<Vec<DatasetRecord>> {
    let mut records = Vec::with_capacity(count);
    for i in 0..count {
        // Per-sample stream; draw order is subject, action, then angles.
        let mut rng = master.substream(tag + i as u64);
        let subject = &subjects[rng.index(subjects.len())];
        let action_index = rng.index(actions.len());
        let action = &actions[action_index];
        let variant = model
            .scaled(subject.limb_scale)?
            .with_angle_scale(action.angle_scale)?;
        let pose = sample_pose(&variant, &mut rng);
        let image = render(&pose, variant.limbs(), camera)?;
        records.push(DatasetRecord {
            sample_id: first_sample_id + i as u64,
            pose,
            image,
            subject_id: subject.id,
            action: action.name.clone(),
        });
    }
    Ok(records)
}

/// Generate a dataset in memory. Fully deterministic given the inputs.
pub fn generate(
    model: &SkeletonModel,
    camera: &CameraConfig,
    config: &GenerateConfig,
) -> Result<Dataset> {
    camera.validate()?;
    config.validate()?;
    let master = RngStream::new(config.seed);
    let train = generate_split(
        model,
        camera,
        &config.train_subjects,
        &config.actions,
        &master,
        TRAIN_TAG,
        config.n_train,
        0,
    )?;
    let test = generate_split(
        model,
        camera,
        &config.test_subjects,
        &config.actions,
        &master,
        TEST_TAG,
        config.n_test,
        config.n_train as u64,
    )?;
    Ok(Dataset {
        model: model.clone(),
        camera: camera.clone(),
        config: config.clone(),
        train,
        test,
    })
}

/// Generate and persist a dataset directory in one step.
pub fn generate_dataset(
    model: &SkeletonModel,
    camera: &CameraConfig,
    config: &GenerateConfig,
    dir: &Path,
) -> Result<Dataset> {
    let dataset = generate(model, camera, config)?;
    save_dataset(&dataset, dir)?;
    Ok(dataset)
}

// --- serialization helpers -------------------------------------------------

fn join<T: std::fmt::Display>(items: impl IntoIterator<Item = T>, sep: &str) -> String {
    items
        .into_iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(sep)
}

fn manifest_text(dataset: &Dataset, poses_sha: &str, images_sha: &str) -> String {
    let model = &dataset.model;
    let camera = &dataset.camera;
    let config = &dataset.config;
    let parents = join(
        model
            .parents()
            .iter()
            .map(|p| p.map_or(-1i64, |v| v as i64)),
        ",",
    );
    let lengths = join(model.limb_lengths().iter(), ",");
    let ranges = model
        .raw_angle_ranges()
        .iter()
        .map(|r| {
            r.iter()
                .flat_map(|&(lo, hi)| [lo, hi])
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(":")
        })
        .collect::<Vec<_>>()
        .join(",");
    let subjects = |list: &[SubjectSpec]| {
        list.iter()
            .map(|s| format!("{}:{}", s.id, s.limb_scale))
            .collect::<Vec<_>>()
            .join(";")
    };
    let actions = config
        .actions
        .iter()
        .map(|a| format!("{}:{}", a.name, a.angle_scale))
        .collect::<Vec<_>>()
        .join(";");
    format!(
        "format=plds\n\
         version={MANIFEST_VERSION}\n\
         seed={}\n\
         n_train={}\n\
         n_test={}\n\
         joint_names={}\n\
         parents={parents}\n\
         limb_lengths={lengths}\n\
         angle_ranges={ranges}\n\
         train_subjects={}\n\
         test_subjects={}\n\
         actions={actions}\n\
         view_axis={}\n\
         image_size={}\n\
         mm_per_pixel={}\n\
         line_thickness={}\n\
         poses_sha256={poses_sha}\n\
         images_sha256={images_sha}\n",
        config.seed,
        config.n_train,
        config.n_test,
        model.joint_names().join(","),
        subjects(&config.train_subjects),
        subjects(&config.test_subjects),
        camera.view_axis.as_str(),
        camera.image_size,
        camera.mm_per_pixel,
        camera.line_thickness,
    )
}

fn poses_bytes(dataset: &Dataset) -> Vec<u8> {
    let dim = dataset.model.joint_count() * 3;
    let records = dataset.train.iter().chain(&dataset.test);
    let count = dataset.train.len() + dataset.test.len();
    let mut out = Vec::with_capacity(24 + count * (16 + dim * 8));
    out.extend_from_slice(POSES_MAGIC);
    out.extend_from_slice(&BIN_VERSION.to_le_bytes());
    out.extend_from_slice(&(count as u64).to_le_bytes());
    out.extend_from_slice(&(dim as u64).to_le_bytes());
    for record in records {
        out.extend_from_slice(&record.sample_id.to_le_bytes());
        out.extend_from_slice(&record.subject_id.to_le_bytes());
        let action_index = dataset
            .config
            .actions
            .iter()
            .position(|a| a.name == record.action)
            .expect("record action is listed in the config") as u32;
        out.extend_from_slice(&action_index.to_le_bytes());
        for v in record.pose.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn images_bytes(dataset: &Dataset) -> Vec<u8> {
    let size = dataset.camera.image_size;
    let count = dataset.train.len() + dataset.test.len();
    let mut out = Vec::with_capacity(24 + count * size * size);
    out.extend_from_slice(IMAGES_MAGIC);
    out.extend_from_slice(&BIN_VERSION.to_le_bytes());
    out.extend_from_slice(&(count as u64).to_le_bytes());
    out.extend_from_slice(&(size as u64).to_le_bytes());
    for record in dataset.train.iter().chain(&dataset.test) {
        out.extend_from_slice(&record.image.to_bytes());
    }
    out
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Write the dataset directory (`manifest.txt`, `poses.bin`, `images.bin`).
pub fn save_dataset(dataset: &Dataset, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    let poses = poses_bytes(dataset);
    let images = images_bytes(dataset);
    let manifest = manifest_text(dataset, &sha256_hex(&poses), &sha256_hex(&images));
    let write = |name: &str, bytes: &[u8]| -> Result<()> {
        let path = dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    };
    write("poses.bin", &poses)?;
    write("images.bin", &images)?;
    write("manifest.txt", manifest.as_bytes())
}

// --- loading ----------------------------------------------------------------

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
}

fn check_header(cursor: &mut Cursor, magic: &[u8; 4]) -> Result<()> {
    let found = cursor.take(4)?;
    if found != magic {
        return Err(Error::Format {
            path: cursor.path.clone(),
            detail: format!("bad magic {found:?}, expected {magic:?}"),
        });
    }
    let version = cursor.u32()?;
    if version != BIN_VERSION {
        return Err(Error::Format {
            path: cursor.path.clone(),
            detail: format!("unsupported version {version}, this build reads {BIN_VERSION}"),
        });
    }
    Ok(())
}

struct Manifest {
    entries: Vec<(String, String)>,
    path: String,
}

impl Manifest {
    fn parse(path: &Path, text: &str) -> Result<Manifest> {
        let known = [
            "format",
            "version",
            "seed",
            "n_train",
            "n_test",
            "joint_names",
            "parents",
            "limb_lengths",
            "angle_ranges",
            "train_subjects",
            "test_subjects",
            "actions",
            "view_axis",
            "image_size",
            "mm_per_pixel",
            "line_thickness",
            "poses_sha256",
            "images_sha256",
        ];
        let mut entries = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Format {
                    path: path.display().to_string(),
                    detail: format!("line {}: expected key=value, got {line:?}", lineno + 1),
                });
            };
            if !known.contains(&key) {
                return Err(Error::Format {
                    path: path.display().to_string(),
                    detail: format!("line {}: unknown key {key:?}", lineno + 1),
                });
            }
            entries.push((key.to_string(), value.to_string()));
        }
        Ok(Manifest {
            entries,
            path: path.display().to_string(),
        })
    }

    fn get(&self, key: &str) -> Result<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| Error::Format {
                path: self.path.clone(),
                detail: format!("missing key {key:?}"),
            })
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.get(key)?;
        raw.parse().map_err(|_| Error::Format {
            path: self.path.clone(),
            detail: format!("key {key:?}: cannot parse {raw:?}"),
        })
    }

    fn bad(&self, key: &str, detail: String) -> Error {
        Error::Format {
            path: self.path.clone(),
            detail: format!("key {key:?}: {detail}"),
        }
    }
}

fn parse_list<T: std::str::FromStr>(manifest: &Manifest, key: &str, sep: char) -> Result<Vec<T>> {
    manifest
        .get(key)?
        .split(sep)
        .map(|item| {
            item.parse::<T>()
                .map_err(|_| manifest.bad(key, format!("cannot parse item {item:?}")))
        })
        .collect()
}

fn parse_subjects(manifest: &Manifest, key: &str) -> Result<Vec<SubjectSpec>> {
    manifest
        .get(key)?
        .split(';')
        .map(|item| {
            let parts: Vec<&str> = item.split(':').collect();
            let fail = || manifest.bad(key, format!("expected id:scale, got {item:?}"));
            if parts.len() != 2 {
                return Err(fail());
            }
            Ok(SubjectSpec {
                id: parts[0].parse().map_err(|_| fail())?,
                limb_scale: parts[1].parse().map_err(|_| fail())?,
            })
        })
        .collect()
}

fn parse_actions(manifest: &Manifest) -> Result<Vec<ActionSpec>> {
    manifest
        .get("actions")?
        .split(';')
        .map(|item| {
            let fail = || manifest.bad("actions", format!("expected name:scale, got {item:?}"));
            let (name, scale) = item.split_once(':').ok_or_else(fail)?;
            Ok(ActionSpec {
                name: name.to_string(),
                angle_scale: scale.parse().map_err(|_| fail())?,
            })
        })
        .collect()
}

fn parse_model(manifest: &Manifest) -> Result<SkeletonModel> {
    let names: Vec<String> = manifest
        .get("joint_names")?
        .split(',')
        .map(str::to_string)
        .collect();
    let parents: Vec<i64> = parse_list(manifest, "parents", ',')?;
    let parents: Vec<Option<usize>> = parents
        .into_iter()
        .map(|p| if p < 0 { None } else { Some(p as usize) })
        .collect();
    let lengths: Vec<f64> = parse_list(manifest, "limb_lengths", ',')?;
    let ranges: Vec<[(f64, f64); 3]> = manifest
        .get("angle_ranges")?
        .split(',')
        .map(|joint| {
            let vals: Vec<f64> = joint
                .split(':')
                .map(|v| {
                    v.parse::<f64>()
                        .map_err(|_| manifest.bad("angle_ranges", format!("bad number {v:?}")))
                })
                .collect::<Result<_>>()?;
            if vals.len() != 6 {
                return Err(manifest.bad(
                    "angle_ranges",
                    format!("expected 6 numbers per joint, got {}", vals.len()),
                ));
            }
            Ok([(vals[0], vals[1]), (vals[2], vals[3]), (vals[4], vals[5])])
        })
        .collect::<Result<_>>()?;
    SkeletonModel::new(parents, lengths, ranges, names)
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))
}

/// Load a dataset directory written by [`save_dataset`], verifying the
/// header versions, the record counts, and the recorded checksums.
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let manifest_path = dir.join("manifest.txt");
    let text = String::from_utf8(read_file(&manifest_path)?).map_err(|_| Error::Format {
        path: manifest_path.display().to_string(),
        detail: "manifest is not valid UTF-8".into(),
    })?;
    let manifest = Manifest::parse(&manifest_path, &text)?;
    let format: String = manifest.parsed("format")?;
    if format != "plds" {
        return Err(manifest.bad("format", format!("expected \"plds\", got {format:?}")));
    }
    let version: u64 = manifest.parsed("version")?;
    if version != MANIFEST_VERSION {
        return Err(manifest.bad(
            "version",
            format!("unsupported version {version}, this build reads {MANIFEST_VERSION}"),
        ));
    }

    let model = parse_model(&manifest)?;
    let camera = CameraConfig {
        view_axis: ViewAxis::parse(manifest.get("view_axis")?)?,
        image_size: manifest.parsed("image_size")?,
        mm_per_pixel: manifest.parsed("mm_per_pixel")?,
        line_thickness: manifest.parsed("line_thickness")?,
    };
    camera.validate()?;
    let config = GenerateConfig {
        n_train: manifest.parsed("n_train")?,
        n_test: manifest.parsed("n_test")?,
        train_subjects: parse_subjects(&manifest, "train_subjects")?,
        test_subjects: parse_subjects(&manifest, "test_subjects")?,
        actions: parse_actions(&manifest)?,
        seed: manifest.parsed("seed")?,
    };
    config.validate()?;
    let count = config.n_train + config.n_test;

    let poses_path = dir.join("poses.bin");
    let poses_raw = read_file(&poses_path)?;
    let mut cursor = Cursor {
        bytes: &poses_raw,
        offset: 0,
        path: poses_path.display().to_string(),
    };
    check_header(&mut cursor, POSES_MAGIC)?;
    let pose_count = cursor.u64()? as usize;
    let dim = cursor.u64()? as usize;
    if pose_count != count || dim != model.joint_count() * 3 {
        return Err(Error::Format {
            path: cursor.path.clone(),
            detail: format!(
                "manifest promises {count} poses of dimension {}, file has {pose_count} of {dim}",
                model.joint_count() * 3
            ),
        });
    }
    struct RawRecord {
        sample_id: u64,
        subject_id: u32,
        action_index: usize,
        pose: Pose,
    }
    let mut raw_records = Vec::with_capacity(count);
    for _ in 0..count {
        let sample_id = cursor.u64()?;
        let subject_id = cursor.u32()?;
        let action_index = cursor.u32()? as usize;
        if action_index >= config.actions.len() {
            return Err(Error::Format {
                path: cursor.path.clone(),
                detail: format!(
                    "record {sample_id}: action index {action_index} out of range ({} actions)",
                    config.actions.len()
                ),
            });
        }
        let mut coords = Vec::with_capacity(dim);
        for _ in 0..dim {
            coords.push(cursor.f64()?);
        }
        raw_records.push(RawRecord {
            sample_id,
            subject_id,
            action_index,
            pose: Pose::new(coords)?,
        });
    }
    if cursor.offset != poses_raw.len() {
        return Err(Error::Format {
            path: cursor.path.clone(),
            detail: format!("{} trailing bytes", poses_raw.len() - cursor.offset),
        });
    }
    let want_sha = manifest.get("poses_sha256")?;
    let got_sha = sha256_hex(&poses_raw);
    if want_sha != got_sha {
        return Err(Error::Format {
            path: poses_path.display().to_string(),
            detail: format!("checksum mismatch: manifest {want_sha}, file {got_sha}"),
        });
    }

    let images_path = dir.join("images.bin");
    let images_raw = read_file(&images_path)?;
    let mut cursor = Cursor {
        bytes: &images_raw,
        offset: 0,
        path: images_path.display().to_string(),
    };
    check_header(&mut cursor, IMAGES_MAGIC)?;
    let image_count = cursor.u64()? as usize;
    let side = cursor.u64()? as usize;
    if image_count != count || side != camera.image_size {
        return Err(Error::Format {
            path: cursor.path.clone(),
            detail: format!(
                "manifest promises {count} images of side {}, file has {image_count} of {side}",
                camera.image_size
            ),
        });
    }
    let mut images = Vec::with_capacity(count);
    for _ in 0..count {
        images.push(GrayImage::from_bytes(side, cursor.take(side * side)?)?);
    }
    if cursor.offset != images_raw.len() {
        return Err(Error::Format {
            path: cursor.path.clone(),
            detail: format!("{} trailing bytes", images_raw.len() - cursor.offset),
        });
    }
    let want_sha = manifest.get("images_sha256")?;
    let got_sha = sha256_hex(&images_raw);
    if want_sha != got_sha {
        return Err(Error::Format {
            path: images_path.display().to_string(),
            detail: format!("checksum mismatch: manifest {want_sha}, file {got_sha}"),
        });
    }

    let mut records: Vec<DatasetRecord> = raw_records
        .into_iter()
        .zip(images)
        .map(|(raw, image)| DatasetRecord {
            sample_id: raw.sample_id,
            pose: raw.pose,
            image,
            subject_id: raw.subject_id,
            action: config.actions[raw.action_index].name.clone(),
        })
        .collect();
    let test = records.split_off(config.n_train);
    Ok(Dataset {
        model,
        camera,
        config,
        train: records,
        test,
    })
}
