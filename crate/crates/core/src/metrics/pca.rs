use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaProjection {
    /// `N × k` coordinates.
    pub coords: Matrix,
    /// `k × D` unit principal axes.
    pub components: Matrix,
    pub explained_variance: Vec<f64>,
    pub explained_variance_ratio: Vec<f64>,
    pub mean: Vec<f64>,
}

/// Projects mean-centred `embs` onto the top `k` covariance eigenvectors.
/// Each axis is oriented so its first non-negligible coordinate is positive.
pub fn pca_project(embs: &Matrix, k: usize) -> Result<PcaProjection> {
    let (n, d) = (embs.rows(), embs.cols());
    if !(1..=d).contains(&k) {
        return Err(Error::InvalidArgument(format!("k = {k} with D = {d}")));
    }
    if n <= k {
        return Err(Error::InvalidArgument(format!(
            "PCA needs N > k, got N = {n}, k = {k}"
        )));
    }
    let mut mean = vec![0.0; d];
    for r in embs.iter_rows() {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let mut centred = embs.clone();
    for i in 0..n {
        for (v, m) in centred.row_mut(i).iter_mut().zip(&mean) {
            *v -= m;
        }
    }
    let mut cov = Matrix::zeros(d, d);
    for r in centred.iter_rows() {
        for a in 0..d {
            if r[a] == 0.0 {
                continue;
            }
            for b in a..d {
                cov.set(a, b, cov.get(a, b) + r[a] * r[b]);
            }
        }
    }
    let denom = (n - 1) as f64;
    for a in 0..d {
        for b in a..d {
            let v = cov.get(a, b) / denom;
            cov.set(a, b, v);
            cov.set(b, a, v);
        }
    }
    let total: f64 = (0..d).map(|a| cov.get(a, a)).sum();
    if total <= 0.0 {
        return Err(Error::ZeroVariance);
    }

    let (values, vectors) = linalg::symmetric_eigen(&cov)?;
    let mut components = Matrix::zeros(k, d);
    for j in 0..k {
        let row = components.row_mut(j);
        row.copy_from_slice(vectors.row(j));
        let scale = row.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if let Some(first) = row.iter().find(|v| v.abs() > 1e-12 * scale) {
            if *first < 0.0 {
                row.iter_mut().for_each(|v| *v = -*v);
            }
        }
    }
    let explained_variance: Vec<f64> = values[..k].iter().map(|v| v.max(0.0)).collect();
    let explained_variance_ratio = explained_variance.iter().map(|v| v / total).collect();
    let coords = centred.matmul_transposed(&components)?;
    Ok(PcaProjection {
        coords,
        components,
        explained_variance,
        explained_variance_ratio,
        mean,
    })
}
