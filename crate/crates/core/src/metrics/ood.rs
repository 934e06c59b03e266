//! Separation of in-distribution (positive) from OOD scores.
//!
//! Scores are confidences: higher means "more in-distribution".

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OodReport {
    pub auroc: f64,
    pub aupr: f64,
    pub fpr95: f64,
    /// `(fpr, tpr)` from `(0, 0)` to `(1, 1)`.
    pub roc_points: Vec<(f64, f64)>,
    /// `(recall, precision)` per threshold, descending threshold.
    pub pr_points: Vec<(f64, f64)>,
}

fn check(id: &[f64], ood: &[f64]) -> Result<()> {
    if id.is_empty() {
        return Err(Error::EmptyInput("in-distribution scores"));
    }
    if ood.is_empty() {
        return Err(Error::EmptyInput("OOD scores"));
    }
    if id.iter().chain(ood).any(|s| s.is_nan()) {
        return Err(Error::InvalidArgument("NaN score".into()));
    }
    Ok(())
}

/// Cumulative `(threshold, #id ≥ t, #ood ≥ t)` for every distinct score,
/// highest threshold first.
fn sweep(id: &[f64], ood: &[f64]) -> Vec<(f64, usize, usize)> {
    let mut all: Vec<(f64, bool)> = id
        .iter()
        .map(|&s| (s, true))
        .chain(ood.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut out: Vec<(f64, usize, usize)> = Vec::new();
    let (mut tp, mut fp) = (0, 0);
    let mut i = 0;
    while i < all.len() {
        let t = all[i].0;
        while i < all.len() && all[i].0 == t {
            if all[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        out.push((t, tp, fp));
    }
    out
}

/// Probability that a random ID score beats a random OOD score, ties ½,
/// from mid-ranks (Mann–Whitney U).
pub fn auroc(id: &[f64], ood: &[f64]) -> Result<f64> {
    check(id, ood)?;
    let mut all: Vec<(f64, bool)> = id
        .iter()
        .map(|&s| (s, true))
        .chain(ood.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Twice the rank sum keeps mid-ranks integral.
    let mut rank_sum_x2: u128 = 0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        // Ranks i+1..=j share the mid-rank (i+1+j)/2.
        let ids = all[i..j].iter().filter(|e| e.1).count() as u128;
        rank_sum_x2 += ids * (i + 1 + j) as u128;
        i = j;
    }
    let n1 = id.len() as u128;
    let n2 = ood.len() as u128;
    let u_x2 = rank_sum_x2 - n1 * (n1 + 1);
    Ok(u_x2 as f64 / (2 * n1 * n2) as f64)
}

pub fn roc_curve(id: &[f64], ood: &[f64]) -> Result<Vec<(f64, f64)>> {
    check(id, ood)?;
    let (n1, n2) = (id.len() as f64, ood.len() as f64);
    let mut pts = vec![(0.0, 0.0)];
    pts.extend(
        sweep(id, ood)
            .into_iter()
            .map(|(_, tp, fp)| (fp as f64 / n2, tp as f64 / n1)),
    );
    Ok(pts)
}

pub fn pr_curve(id: &[f64], ood: &[f64]) -> Result<Vec<(f64, f64)>> {
    check(id, ood)?;
    let n1 = id.len() as f64;
    Ok(sweep(id, ood)
        .into_iter()
        .map(|(_, tp, fp)| (tp as f64 / n1, tp as f64 / (tp + fp) as f64))
        .collect())
}

/// Step-wise area under the precision-recall curve, ID positive:
/// `Σ (Rₖ − Rₖ₋₁)·Pₖ` over descending distinct thresholds.
pub fn aupr(id: &[f64], ood: &[f64]) -> Result<f64> {
    let mut prev = 0.0;
    let mut area = 0.0;
    for (r, p) in pr_curve(id, ood)? {
        area += (r - prev) * p;
        prev = r;
    }
    Ok(area)
}

/// OOD acceptance rate at the highest threshold that keeps at least 95 % of
/// ID scores. No interpolation.
pub fn fpr_at_95_tpr(id: &[f64], ood: &[f64]) -> Result<f64> {
    check(id, ood)?;
    let mut sorted = id.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    // Smallest k with k / n >= 0.95, in integers: 20k >= 19n.
    let k = (19 * sorted.len()).div_ceil(20).max(1);
    let t = sorted[k - 1];
    let accepted = ood.iter().filter(|&&s| s >= t).count();
    Ok(accepted as f64 / ood.len() as f64)
}

pub fn ood_report(id: &[f64], ood: &[f64]) -> Result<OodReport> {
    Ok(OodReport {
        auroc: auroc(id, ood)?,
        aupr: aupr(id, ood)?,
        fpr95: fpr_at_95_tpr(id, ood)?,
        roc_points: roc_curve(id, ood)?,
        pr_points: pr_curve(id, ood)?,
    })
}
