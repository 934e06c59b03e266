//! Evaluation quantities: accuracy, calibration, OOD separation and PCA.

mod calibration;
mod ood;
mod pca;

pub use calibration::{
    calibration_report, CalibrationBin, CalibrationReport, Histograms, DEFAULT_BINS,
};
pub use ood::{aupr, auroc, fpr_at_95_tpr, ood_report, pr_curve, roc_curve, OodReport};
pub use pca::{pca_project, PcaProjection};

use crate::error::{Error, Result};

/// Fraction of positions where `pred` equals `labels`.
pub fn accuracy<P, L>(pred: &[P], labels: &[L]) -> Result<f64>
where
    P: Copy + TryInto<i64>,
    L: Copy + TryInto<i64>,
{
    if pred.len() != labels.len() {
        return Err(Error::dims(format!(
            "{} predictions for {} labels",
            pred.len(),
            labels.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::EmptyInput("accuracy"));
    }
    let hits = pred
        .iter()
        .zip(labels)
        .filter(|(&p, &l)| match (p.try_into(), l.try_into()) {
            (Ok(p), Ok(l)) => p == l,
            _ => false,
        })
        .count();
    Ok(hits as f64 / pred.len() as f64)
}
