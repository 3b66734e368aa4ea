//! Linear probes: multinomial logistic regression on frozen embeddings,
//! the objective stand-in for eyeballing t-SNE clusters.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::det;
use crate::error::{Error, Result};

pub const MIN_ITEMS_PER_CLASS: usize = 10;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeReport {
    pub task: String,
    pub accuracy: f64,
    pub chance: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub n_classes: usize,
}

/// Train a linear probe on a 70/30 uid-disjoint stratified split and report
/// test accuracy. Deterministic given `split_seed`.
pub fn fit_linear_probe(
    embeddings: &[Vec<f32>],
    labels: &[usize],
    class_names: &[&str],
    split_seed: u64,
    task: &str,
) -> Result<ProbeReport> {
    assert_eq!(embeddings.len(), labels.len());
    let n_classes = class_names.len();
    let dim = embeddings.first().map(|e| e.len()).unwrap_or(0);

    // Stratified split; every class needs enough items on both sides.
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &label) in labels.iter().enumerate() {
        per_class[label].push(i);
    }
    let mut train_idx = Vec::new();
    let mut test_idx = Vec::new();
    for (class, items) in per_class.iter().enumerate() {
        if items.is_empty() {
            continue;
        }
        if items.len() < MIN_ITEMS_PER_CLASS {
            return Err(Error::ProbeClassTooSmall(class_names[class].to_string(), MIN_ITEMS_PER_CLASS));
        }
        let perm = det::permutation(det::mix_str(split_seed, "probe-split", &[class as u64]), items.len());
        let n_train = (items.len() * 7) / 10;
        for (rank, &p) in perm.iter().enumerate() {
            if rank < n_train {
                train_idx.push(items[p]);
            } else {
                test_idx.push(items[p]);
            }
        }
    }
    let classes_present = per_class.iter().filter(|c| !c.is_empty()).count();

    // Standardize with train statistics.
    let mut mean = vec![0.0f64; dim];
    for &i in &train_idx {
        for (d, v) in embeddings[i].iter().enumerate() {
            mean[d] += *v as f64;
        }
    }
    mean.iter_mut().for_each(|m| *m /= train_idx.len() as f64);
    let mut std = vec![0.0f64; dim];
    for &i in &train_idx {
        for (d, v) in embeddings[i].iter().enumerate() {
            let c = *v as f64 - mean[d];
            std[d] += c * c;
        }
    }
    std.iter_mut().for_each(|s| *s = (*s / train_idx.len() as f64).sqrt() + 1e-6);

    let matrix = |idx: &[usize]| -> DMatrix<f64> {
        DMatrix::from_fn(idx.len(), dim, |r, c| (embeddings[idx[r]][c] as f64 - mean[c]) / std[c])
    };
    let x_train = matrix(&train_idx);
    let x_test = matrix(&test_idx);

    let n = train_idx.len();
    let mut y = DMatrix::<f64>::zeros(n, n_classes);
    for (r, &i) in train_idx.iter().enumerate() {
        y[(r, labels[i])] = 1.0;
    }

    // Full-batch gradient descent with momentum on the ridge-regularized
    // cross-entropy; plenty for a linear model on standardized features.
    let mut w = DMatrix::<f64>::zeros(dim, n_classes);
    let mut b = nalgebra::DVector::<f64>::zeros(n_classes);
    let mut vw = DMatrix::<f64>::zeros(dim, n_classes);
    let mut vb = nalgebra::DVector::<f64>::zeros(n_classes);
    let (lr, momentum, l2, iters) = (0.5, 0.9, 1e-4, 300);
    for _ in 0..iters {
        let mut p = &x_train * &w;
        for r in 0..n {
            for c in 0..n_classes {
                p[(r, c)] += b[c];
            }
            let row_max = (0..n_classes).map(|c| p[(r, c)]).fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for c in 0..n_classes {
                p[(r, c)] = (p[(r, c)] - row_max).exp();
                z += p[(r, c)];
            }
            for c in 0..n_classes {
                p[(r, c)] /= z;
            }
        }
        let diff = &p - &y;
        let gw = (x_train.transpose() * &diff) / n as f64 + &w * l2;
        let gb = diff.row_sum().transpose() / n as f64;
        vw = vw * momentum - gw * lr;
        vb = vb * momentum - gb * lr;
        w += &vw;
        b += &vb;
    }

    let logits = &x_test * &w;
    let mut correct = 0usize;
    for (r, &i) in test_idx.iter().enumerate() {
        let mut best = 0usize;
        let mut best_v = f64::NEG_INFINITY;
        for c in 0..n_classes {
            let v = logits[(r, c)] + b[c];
            if v > best_v {
                best_v = v;
                best = c;
            }
        }
        if best == labels[i] {
            correct += 1;
        }
    }
    Ok(ProbeReport {
        task: task.to_string(),
        accuracy: correct as f64 / test_idx.len() as f64,
        chance: 1.0 / classes_present as f64,
        n_train: train_idx.len(),
        n_test: test_idx.len(),
        n_classes: classes_present,
    })
}
