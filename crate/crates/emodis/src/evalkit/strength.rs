//! Pitch-proxy contours and strength-ranking confusion matrices.
//!
//! True F0 needs waveforms, which this system never produces; instead the
//! corpus plants its prosody in a known mel band, and the contour is the
//! spectral centroid of that band smoothed with a 5-frame moving average.

use serde::{Deserialize, Serialize};

use crate::det;
use crate::mel::MelSpectrogram;

/// Per-frame spectral centroid over the pitch band, 5-frame smoothed.
pub fn pitch_proxy_contour(mel: &MelSpectrogram, band: (usize, usize)) -> Vec<f64> {
    let (lo, hi) = band;
    let raw: Vec<f64> = (0..mel.n_frames())
        .map(|t| {
            let mut num = 0.0f64;
            let mut den = 0.0f64;
            for c in lo..hi.min(mel.n_channels()) {
                let v = mel.get(t, c) as f64;
                num += c as f64 * v;
                den += v;
            }
            if den.abs() < 1e-12 {
                (lo + hi) as f64 / 2.0
            } else {
                num / den
            }
        })
        .collect();
    // Centered moving average, window shrinking at the edges.
    (0..raw.len())
        .map(|t| {
            let a = t.saturating_sub(2);
            let b = (t + 3).min(raw.len());
            raw[a..b].iter().sum::<f64>() / (b - a) as f64
        })
        .collect()
}

pub fn contour_variance(series: &[f64]) -> f64 {
    if series.is_empty() {
        return 0.0;
    }
    let mean = series.iter().sum::<f64>() / series.len() as f64;
    series.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / series.len() as f64
}

/// Row-normalized 3x3 ranking matrix: `matrix[level][rank]` is the rate at
/// which the synthesis at scalar level `level` was ranked `rank`-th by
/// pitch-proxy variance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StrengthConfusion {
    pub matrix: [[f64; 3]; 3],
    pub n_triples: usize,
    pub skipped: usize,
}

impl StrengthConfusion {
    pub fn diagonal(&self) -> [f64; 3] {
        [self.matrix[0][0], self.matrix[1][1], self.matrix[2][2]]
    }
}

/// Rank each triple (weak, medium, strong synthesis of the same sentence) by
/// contour variance. Ties break by a seeded draw so degenerate inputs spread
/// uniformly instead of collapsing to one rank.
pub fn strength_confusion(
    triples: &[[&MelSpectrogram; 3]],
    band: (usize, usize),
    tie_seed: u64,
) -> StrengthConfusion {
    let mut counts = [[0usize; 3]; 3];
    for (ti, triple) in triples.iter().enumerate() {
        let keyed: Vec<(f64, f64, usize)> = triple
            .iter()
            .enumerate()
            .map(|(level, mel)| {
                let var = contour_variance(&pitch_proxy_contour(mel, band));
                let tie = det::unit_f64(det::mix_str(tie_seed, "tie", &[ti as u64, level as u64]));
                (var, tie, level)
            })
            .collect();
        let mut order = keyed.clone();
        order.sort_by(|a, b| (a.0, a.1).partial_cmp(&(b.0, b.1)).unwrap());
        for (rank, &(_, _, level)) in order.iter().enumerate() {
            counts[level][rank] += 1;
        }
    }
    let n = triples.len().max(1);
    let mut matrix = [[0.0f64; 3]; 3];
    for level in 0..3 {
        for rank in 0..3 {
            matrix[level][rank] = counts[level][rank] as f64 / n as f64;
        }
    }
    StrengthConfusion { matrix, n_triples: triples.len(), skipped: 0 }
}
