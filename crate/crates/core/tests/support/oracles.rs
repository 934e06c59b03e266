//! Brute-force reference implementations, written without engine code.
#![allow(dead_code)]

use nalgebra::{DMatrix, SymmetricEigen};

pub fn ece(conf: &[f64], correct: &[bool], bins: usize) -> f64 {
    let n = conf.len() as f64;
    let mut total = 0.0;
    for b in 0..bins {
        let lo = b as f64 / bins as f64;
        let hi = (b + 1) as f64 / bins as f64;
        let members: Vec<usize> = (0..conf.len())
            .filter(|&i| conf[i] >= lo && (conf[i] < hi || (b == bins - 1 && conf[i] <= 1.0)))
            .collect();
        if members.is_empty() {
            continue;
        }
        let m = members.len() as f64;
        let acc = members.iter().filter(|&&i| correct[i]).count() as f64 / m;
        let avg = members.iter().map(|&i| conf[i]).sum::<f64>() / m;
        total += m / n * (acc - avg).abs();
    }
    total
}

pub fn auroc(id: &[f64], ood: &[f64]) -> f64 {
    let mut wins = 0.0;
    for &a in id {
        for &b in ood {
            if a > b {
                wins += 1.0;
            } else if a == b {
                wins += 0.5;
            }
        }
    }
    wins / (id.len() * ood.len()) as f64
}

fn distinct_desc(id: &[f64], ood: &[f64]) -> Vec<f64> {
    let mut t: Vec<f64> = id.iter().chain(ood).copied().collect();
    t.sort_by(|a, b| b.partial_cmp(a).unwrap());
    t.dedup();
    t
}

pub fn aupr(id: &[f64], ood: &[f64]) -> f64 {
    let mut area = 0.0;
    let mut prev_recall = 0.0;
    for t in distinct_desc(id, ood) {
        let tp = id.iter().filter(|&&s| s >= t).count() as f64;
        let fp = ood.iter().filter(|&&s| s >= t).count() as f64;
        let recall = tp / id.len() as f64;
        area += (recall - prev_recall) * tp / (tp + fp);
        prev_recall = recall;
    }
    area
}

pub fn fpr95(id: &[f64], ood: &[f64]) -> f64 {
    // Highest threshold whose TPR reaches 95 %.
    for t in distinct_desc(id, ood) {
        let tpr = id.iter().filter(|&&s| s >= t).count() as f64 / id.len() as f64;
        if tpr >= 0.95 {
            return ood.iter().filter(|&&s| s >= t).count() as f64 / ood.len() as f64;
        }
    }
    unreachable!("the lowest threshold admits every ID score")
}

/// Principal axes of a row-major `n × d` data set from a dense symmetric
/// eigensolver.
pub struct DensePca {
    /// Eigenvalues in descending order.
    pub values: Vec<f64>,
    /// Unit eigenvectors, same order as `values`.
    pub vectors: Vec<Vec<f64>>,
    pub total_variance: f64,
    /// Mean-centred data, row-major.
    pub centred: Vec<Vec<f64>>,
}

pub fn dense_pca(data: &[f64], n: usize, d: usize) -> DensePca {
    let x = DMatrix::from_row_slice(n, d, data);
    let mean = x.row_mean();
    let mut centred = x.clone();
    for mut row in centred.row_iter_mut() {
        row -= &mean;
    }
    let cov = centred.transpose() * &centred / (n as f64 - 1.0);
    let eig = SymmetricEigen::new(cov.clone());
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    DensePca {
        values: order.iter().map(|&j| eig.eigenvalues[j]).collect(),
        vectors: order
            .iter()
            .map(|&j| eig.eigenvectors.column(j).iter().copied().collect())
            .collect(),
        total_variance: cov.trace(),
        centred: (0..n)
            .map(|i| (0..d).map(|a| centred[(i, a)]).collect())
            .collect(),
    }
}
