//! Evaluation: mean per-joint position error and limb-length-ratio
//! structure preservation, with CSV/heatmap report rendering.

pub mod metrics;
pub mod report;

pub use metrics::{
    default_partitions, limb_indices, limb_lengths, log_ratio_matrix, mean_mpjpe, mpjpe,
    partition_sums, ratio_error_matrix, LimbRatioMatrix, RatioErrorMatrix,
    DEFAULT_LOWER_BODY_LIMBS, MIN_PREDICTED_LIMB_MM,
};
pub use report::{
    evaluate_method, heatmap_pgm, matrix_csv, report_csv, write_heatmap, write_report_csv,
    EvalReport, EvalRow,
};
