//! Deterministic 2-d principal-component projection of embeddings, the
//! reproducible replacement for t-SNE cluster plots.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Projection {
    pub coords: Vec<[f64; 2]>,
    pub variance_explained: [f64; 2],
    /// Set when the input was rank-deficient (all embeddings identical).
    pub degenerate: bool,
}

/// Project embeddings onto their top two principal components. Component
/// signs are fixed by forcing the largest-magnitude coordinate positive.
pub fn project_embeddings_2d(embeddings: &[Vec<f32>]) -> Result<Projection> {
    let n = embeddings.len();
    if n < 3 {
        return Err(Error::InvalidInput(format!("projection needs at least 3 embeddings, got {n}")));
    }
    let dim = embeddings[0].len();
    let mut mean = vec![0.0f64; dim];
    for e in embeddings {
        for (d, v) in e.iter().enumerate() {
            mean[d] += *v as f64;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let x = DMatrix::from_fn(n, dim, |r, c| embeddings[r][c] as f64 - mean[c]);
    let cov = (x.transpose() * &x) / n as f64;
    let eig = nalgebra::SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let total: f64 = eig.eigenvalues.iter().map(|v| v.max(0.0)).sum();
    if total <= 1e-12 {
        return Ok(Projection {
            coords: vec![[0.0, 0.0]; n],
            variance_explained: [0.0, 0.0],
            degenerate: true,
        });
    }

    let mut axes = Vec::with_capacity(2);
    let mut variance_explained = [0.0f64; 2];
    for (slot, &idx) in order.iter().take(2).enumerate() {
        let mut v: DVector<f64> = eig.eigenvectors.column(idx).into_owned();
        // Sign convention: the largest-magnitude entry is positive.
        let mut arg = 0usize;
        for (i, val) in v.iter().enumerate() {
            if val.abs() > v[arg].abs() {
                arg = i;
            }
        }
        if v[arg] < 0.0 {
            v = -v;
        }
        variance_explained[slot] = eig.eigenvalues[idx].max(0.0) / total;
        axes.push(v);
    }

    let coords = (0..n)
        .map(|r| {
            let row = x.row(r);
            [row.transpose().dot(&axes[0]), row.transpose().dot(&axes[1])]
        })
        .collect();
    Ok(Projection { coords, variance_explained, degenerate: false })
}
