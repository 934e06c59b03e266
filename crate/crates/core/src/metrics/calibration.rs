use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_BINS: usize = 15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBin {
    pub lower: f64,
    pub upper: f64,
    /// Zero for empty bins.
    pub mean_confidence: f64,
    /// Zero for empty bins.
    pub accuracy: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Histograms {
    pub correct: Vec<usize>,
    pub incorrect: Vec<usize>,
    pub ood: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub bins: Vec<CalibrationBin>,
    pub ece: f64,
    pub histograms: Histograms,
}

impl CalibrationReport {
    pub fn num_samples(&self) -> usize {
        self.bins.iter().map(|b| b.count).sum()
    }

    /// `bin_lower,bin_upper,mean_conf,accuracy,count` table.
    pub fn reliability_csv(&self) -> String {
        let mut s = String::from("bin_lower,bin_upper,mean_conf,accuracy,count\n");
        for b in &self.bins {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                b.lower, b.upper, b.mean_confidence, b.accuracy, b.count
            );
        }
        s
    }

    /// `bin_lower,bin_upper,correct,incorrect,ood` table.
    pub fn histogram_csv(&self) -> String {
        let mut s = String::from("bin_lower,bin_upper,correct,incorrect,ood\n");
        for (i, b) in self.bins.iter().enumerate() {
            let h = &self.histograms;
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                b.lower, b.upper, h.correct[i], h.incorrect[i], h.ood[i]
            );
        }
        s
    }
}

/// Bin of `conf` among `n` equal-width bins `[b/n, (b+1)/n)`, the last bin
/// closed at 1.
fn bin_index(conf: f64, n: usize) -> usize {
    let edge = |b: usize| b as f64 / n as f64;
    let mut b = ((conf * n as f64).floor() as usize).min(n - 1);
    // Product rounding can disagree with the b/n edges by one ulp.
    while b > 0 && conf < edge(b) {
        b -= 1;
    }
    while b + 1 < n && conf >= edge(b + 1) {
        b += 1;
    }
    b
}

fn check_conf(v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::OutOfRange(format!("confidence {v} outside [0, 1]")));
    }
    Ok(())
}

/// Equal-width reliability bins, ECE and confidence histograms.
pub fn calibration_report(
    confidence: &[f64],
    correct: &[bool],
    ood_confidence: Option<&[f64]>,
    num_bins: usize,
) -> Result<CalibrationReport> {
    if num_bins == 0 {
        return Err(Error::InvalidArgument("num_bins must be at least 1".into()));
    }
    if confidence.len() != correct.len() {
        return Err(Error::dims(format!(
            "{} confidences for {} correctness flags",
            confidence.len(),
            correct.len()
        )));
    }
    let mut conf_sum = vec![0.0; num_bins];
    let mut hits = vec![0usize; num_bins];
    let mut hist = Histograms {
        correct: vec![0; num_bins],
        incorrect: vec![0; num_bins],
        ood: vec![0; num_bins],
    };
    for (&c, &ok) in confidence.iter().zip(correct) {
        check_conf(c)?;
        let b = bin_index(c, num_bins);
        conf_sum[b] += c;
        if ok {
            hits[b] += 1;
            hist.correct[b] += 1;
        } else {
            hist.incorrect[b] += 1;
        }
    }
    for &c in ood_confidence.unwrap_or(&[]) {
        check_conf(c)?;
        hist.ood[bin_index(c, num_bins)] += 1;
    }

    let n = confidence.len() as f64;
    let mut ece = 0.0;
    let mut bins = Vec::with_capacity(num_bins);
    for b in 0..num_bins {
        let count = hist.correct[b] + hist.incorrect[b];
        let (mean_confidence, accuracy) = if count > 0 {
            (conf_sum[b] / count as f64, hits[b] as f64 / count as f64)
        } else {
            (0.0, 0.0)
        };
        if count > 0 {
            ece += count as f64 / n * (accuracy - mean_confidence).abs();
        }
        bins.push(CalibrationBin {
            lower: b as f64 / num_bins as f64,
            upper: (b + 1) as f64 / num_bins as f64,
            mean_confidence,
            accuracy,
            count,
        });
    }
    Ok(CalibrationReport {
        bins,
        ece,
        histograms: hist,
    })
}
