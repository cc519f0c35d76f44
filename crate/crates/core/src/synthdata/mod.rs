//! Synthetic articulated-skeleton data: a 17-joint humanoid with forward
//! kinematics, an orthographic stick-figure renderer, and a reproducible
//! dataset generator whose train/test splits use disjoint body variants.

pub mod dataset;
pub mod render;
pub mod skeleton;

pub use dataset::{
    generate, generate_dataset, load_dataset, save_dataset, ActionSpec, Dataset, DatasetRecord,
    GenerateConfig, SubjectSpec,
};
pub use render::{render, CameraConfig, GrayImage, ViewAxis};
pub use skeleton::{
    canonical_pose, forward_kinematics, sample_pose, AngleRange, Limb, SkeletonModel,
};
