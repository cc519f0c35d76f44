//! Per-epoch training logs and their CSV form.

use std::path::Path;

use crate::error::{Error, Result};

/// One row of a training log. `train_loss` is the mean per-sample loss
/// accumulated while the epoch's updates were applied; `eval_mpjpe` is the
/// mean per-joint position error (millimeters) of the model on the training
/// set at the end of the epoch, where the stage defines one.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochStat {
    pub epoch: usize,
    pub train_loss: f64,
    pub eval_mpjpe: Option<f64>,
}

pub type TrainLog = Vec<EpochStat>;

/// CSV rendering: header `epoch,train_loss,eval_mpjpe`, one row per epoch,
/// losses printed with six decimal places, a missing metric as an empty cell.
pub fn loss_csv(log: &[EpochStat]) -> String {
    let mut out = String::from("epoch,train_loss,eval_mpjpe\n");
    for row in log {
        match row.eval_mpjpe {
            Some(m) => out.push_str(&format!("{},{:.6},{:.6}\n", row.epoch, row.train_loss, m)),
            None => out.push_str(&format!("{},{:.6},\n", row.epoch, row.train_loss)),
        }
    }
    out
}

pub fn write_loss_csv(path: &Path, log: &[EpochStat]) -> Result<()> {
    std::fs::write(path, loss_csv(log))
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))
}
