//! Evaluation reports: the method × action table and its CSV rendering,
//! plus ratio-error matrix exports (CSV and PGM heatmap).

use std::path::Path;

use super::metrics::{
    mean_mpjpe, partition_sums, ratio_error_matrix, RatioErrorMatrix,
};
use crate::autoencoder::Pose;
use crate::error::{Error, Result};
use crate::pgm::pgm_bytes;
use crate::synthdata::{DatasetRecord, SkeletonModel};

/// One line of the evaluation table.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub method: String,
    pub action: String,
    pub mpjpe_mm: f64,
    pub lower_sum: f64,
    pub upper_sum: f64,
    pub full_sum: f64,
}

/// Evaluation of every method on a shared test set.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    /// Whole-test-set ratio-error matrix per method, in row order.
    pub matrices: Vec<(String, RatioErrorMatrix)>,
}

/// Evaluate one method's predictions against the records they were made
/// for. Emits one row per action (in order of first appearance) and a
/// final `all` row over the entire set, plus the whole-set ratio-error
/// matrix. The partition index sets select which limb pairs count as
/// lower/upper body.
pub fn evaluate_method(
    method: &str,
    predictions: &[Pose],
    records: &[DatasetRecord],
    model: &SkeletonModel,
    lower: &[usize],
    upper: &[usize],
) -> Result<(Vec<EvalRow>, RatioErrorMatrix)> {
    if predictions.len() != records.len() {
        return Err(Error::Dimension {
            op: "evaluate_method",
            detail: format!(
                "{} predictions vs {} records",
                predictions.len(),
                records.len()
            ),
        });
    }
    if predictions.is_empty() {
        return Err(Error::Parameter {
            op: "evaluate_method",
            name: "predictions",
            detail: "need at least one sample".into(),
        });
    }
    let mut actions: Vec<&str> = Vec::new();
    for record in records {
        if !actions.contains(&record.action.as_str()) {
            actions.push(&record.action);
        }
    }
    let mut rows = Vec::with_capacity(actions.len() + 1);
    let evaluate_subset = |action: &str, preds: &[Pose], truths: &[Pose]| -> Result<EvalRow> {
        let matrix = ratio_error_matrix(preds, truths, model)?;
        let (lower_sum, upper_sum, full_sum) = partition_sums(&matrix, lower, upper)?;
        Ok(EvalRow {
            method: method.to_string(),
            action: action.to_string(),
            mpjpe_mm: mean_mpjpe(preds, truths)?,
            lower_sum,
            upper_sum,
            full_sum,
        })
    };
    for action in &actions {
        let mut preds = Vec::new();
        let mut truths = Vec::new();
        for (p, r) in predictions.iter().zip(records) {
            if r.action == *action {
                preds.push(p.clone());
                truths.push(r.pose.clone());
            }
        }
        rows.push(evaluate_subset(action, &preds, &truths)?);
    }
    let truths: Vec<Pose> = records.iter().map(|r| r.pose.clone()).collect();
    rows.push(evaluate_subset("all", predictions, &truths)?);
    let matrix = ratio_error_matrix(predictions, &truths, model)?;
    Ok((rows, matrix))
}

/// CSV rendering of the evaluation table: header
/// `method,action,mpjpe_mm,lower_sum,upper_sum,full_sum`, numeric cells
/// with two decimal places.
pub fn report_csv(rows: &[EvalRow]) -> String {
    let mut out = String::from("method,action,mpjpe_mm,lower_sum,upper_sum,full_sum\n");
    for row in rows {
        out.push_str(&format!(
            "{},{},{:.2},{:.2},{:.2},{:.2}\n",
            row.method, row.action, row.mpjpe_mm, row.lower_sum, row.upper_sum, row.full_sum
        ));
    }
    out
}

pub fn write_report_csv(path: &Path, rows: &[EvalRow]) -> Result<()> {
    std::fs::write(path, report_csv(rows))
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// CSV rendering of a ratio-error matrix: a `limb` header column followed
/// by one column per limb, cells with six decimal places.
pub fn matrix_csv(matrix: &RatioErrorMatrix) -> String {
    let names = matrix.limb_names();
    let mut out = String::from("limb");
    for name in names {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for (i, name) in names.iter().enumerate() {
        out.push_str(name);
        for j in 0..matrix.dim() {
            out.push_str(&format!(",{:.6}", matrix.get(i, j)));
        }
        out.push('\n');
    }
    out
}

/// Render the matrix as a PGM heatmap (linear gray map, 0 → smallest cell,
/// 255 → largest) plus a sidecar text that records the mapping. Returns
/// `(pgm bytes, sidecar text)`.
pub fn heatmap_pgm(matrix: &RatioErrorMatrix) -> Result<(Vec<u8>, String)> {
    let n = matrix.dim();
    let values = matrix.values();
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = max - min;
    let pixels: Vec<u8> = values
        .iter()
        .map(|&v| {
            if span == 0.0 {
                0
            } else {
                ((v - min) / span * 255.0).round() as u8
            }
        })
        .collect();
    let sidecar = format!(
        "min={min}\nmax={max}\nmapping=linear gray, 0 -> min, 255 -> max\nlimbs={}\nflagged_samples={}\n",
        matrix.limb_names().join(","),
        matrix.flagged_samples(),
    );
    Ok((pgm_bytes(n, n, &pixels)?, sidecar))
}

/// Write `<base>.pgm` and `<base>.txt` for a ratio-error matrix.
pub fn write_heatmap(matrix: &RatioErrorMatrix, base: &Path) -> Result<()> {
    let (pgm, sidecar) = heatmap_pgm(matrix)?;
    let pgm_path = base.with_extension("pgm");
    let txt_path = base.with_extension("txt");
    std::fs::write(&pgm_path, pgm)
        .map_err(|e| Error::io(format!("writing {}", pgm_path.display()), e))?;
    std::fs::write(&txt_path, sidecar)
        .map_err(|e| Error::io(format!("writing {}", txt_path.display()), e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngStream;
    use crate::synthdata::{
        generate, sample_pose, CameraConfig, GenerateConfig, SkeletonModel,
    };

    #[test]
    fn csv_renders_published_style_rows_byte_for_byte() {
        let row = |method: &str, action: &str, mpjpe: f64, sums: [f64; 3]| EvalRow {
            method: method.into(),
            action: action.into(),
            mpjpe_mm: mpjpe,
            lower_sum: sums[0],
            upper_sum: sums[1],
            full_sum: sums[2],
        };
        let rows = vec![
            row("ours", "Walking", 65.75, [1.2, 3.4, 4.6]),
            row("ours", "Discussion", 129.06, [2.0, 14.43, 16.43]),
        ];
        assert_eq!(
            report_csv(&rows),
            "method,action,mpjpe_mm,lower_sum,upper_sum,full_sum\n\
             ours,Walking,65.75,1.20,3.40,4.60\n\
             ours,Discussion,129.06,2.00,14.43,16.43\n"
        );
    }

    #[test]
    fn empty_report_is_header_only() {
        assert_eq!(
            report_csv(&[]),
            "method,action,mpjpe_mm,lower_sum,upper_sum,full_sum\n"
        );
    }

    #[test]
    fn evaluate_method_groups_by_action_and_appends_all() {
        let model = SkeletonModel::default_human();
        let config = GenerateConfig {
            n_train: 2,
            n_test: 10,
            ..GenerateConfig::default()
        };
        let ds = generate(&model, &CameraConfig::default(), &config).unwrap();
        let predictions: Vec<Pose> = ds.test.iter().map(|r| r.pose.clone()).collect();
        let (lower, upper) = super::super::metrics::default_partitions(&model).unwrap();
        let (rows, matrix) =
            evaluate_method("echo", &predictions, &ds.test, &model, &lower, &upper).unwrap();
        // perfect predictions: all zeros everywhere
        for row in &rows {
            assert_eq!(row.method, "echo");
            assert_eq!(row.mpjpe_mm, 0.0);
            assert_eq!(row.full_sum, 0.0);
        }
        assert_eq!(rows.last().unwrap().action, "all");
        let seen: Vec<&str> = rows.iter().map(|r| r.action.as_str()).collect();
        for r in &ds.test {
            assert!(seen.contains(&r.action.as_str()));
        }
        assert!(matrix.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn heatmap_maps_linearly_with_sidecar() {
        let model = SkeletonModel::default_human();
        let mut rng = RngStream::new(3);
        let truths: Vec<Pose> = (0..3).map(|_| sample_pose(&model, &mut rng)).collect();
        let preds: Vec<Pose> = (0..3).map(|_| sample_pose(&model, &mut rng)).collect();
        let matrix = ratio_error_matrix(&preds, &truths, &model).unwrap();
        let (pgm, sidecar) = heatmap_pgm(&matrix).unwrap();
        assert!(pgm.starts_with(b"P5\n16 16\n255\n"));
        let pixels = &pgm[b"P5\n16 16\n255\n".len()..];
        assert_eq!(pixels.len(), 256);
        // diagonal is the matrix minimum (zero) and maps to 0
        assert_eq!(pixels[0], 0);
        assert!(pixels.contains(&255));
        assert!(sidecar.contains("min=0") && sidecar.contains("max="), "{sidecar}");
        assert!(sidecar.contains("flagged_samples=0"));

        let zero = ratio_error_matrix(&truths, &truths, &model).unwrap();
        let (flat, _) = heatmap_pgm(&zero).unwrap();
        assert!(flat[b"P5\n16 16\n255\n".len()..].iter().all(|&b| b == 0));
    }

    #[test]
    fn matrix_csv_lists_limbs_in_both_axes() {
        let model = SkeletonModel::default_human();
        let mut rng = RngStream::new(4);
        let truths: Vec<Pose> = (0..2).map(|_| sample_pose(&model, &mut rng)).collect();
        let matrix = ratio_error_matrix(&truths, &truths, &model).unwrap();
        let csv = matrix_csv(&matrix);
        let mut lines = csv.lines();
        let header = lines.next().unwrap();
        assert!(header.starts_with("limb,spine,thorax"));
        assert_eq!(csv.lines().count(), 17); // header + 16 limbs
        assert!(csv.lines().skip(1).all(|l| l.contains(",0.000000")));
    }
}
