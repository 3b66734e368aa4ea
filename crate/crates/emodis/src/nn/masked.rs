//! Masked sequence losses and related numerics. Padding positions are
//! excluded by construction: every reduction divides by the mask mass, not by
//! the padded element count.

use candle_core::Tensor;
use candle_nn::ops::log_softmax;

use crate::error::Result;

/// Loss reduction over the batch dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reduction {
    Mean,
    Sum,
}

/// `[batch, max_len]` mask with 1 for valid positions.
pub fn seq_mask(lens: &[usize], max_len: usize, device: &candle_core::Device) -> Result<Tensor> {
    let mut data = vec![0.0f32; lens.len() * max_len];
    for (row, &len) in lens.iter().enumerate() {
        data[row * max_len..row * max_len + len.min(max_len)].fill(1.0);
    }
    Ok(Tensor::from_vec(data, (lens.len(), max_len), device)?)
}

/// Mean squared error over valid frames; `pred`/`target` are
/// `[batch, time, channels]`, `mask` is `[batch, time]`.
pub fn masked_mse(pred: &Tensor, target: &Tensor, mask: &Tensor) -> Result<Tensor> {
    let channels = pred.dim(2)?;
    let d = (pred - target)?.sqr()?;
    let d = d.broadcast_mul(&mask.unsqueeze(2)?)?;
    let denom = mask.sum_all()?.affine(channels as f64, 0.0)?;
    Ok(d.sum_all()?.broadcast_div(&denom)?)
}

/// Mean absolute error over valid frames.
pub fn masked_mae(pred: &Tensor, target: &Tensor, mask: &Tensor) -> Result<Tensor> {
    let channels = pred.dim(2)?;
    let d = (pred - target)?.abs()?;
    let d = d.broadcast_mul(&mask.unsqueeze(2)?)?;
    let denom = mask.sum_all()?.affine(channels as f64, 0.0)?;
    Ok(d.sum_all()?.broadcast_div(&denom)?)
}

/// Numerically stable `ln(1 + exp(-|x|))`.
fn log1p_exp_neg_abs(x: &Tensor) -> Result<Tensor> {
    Ok((x.abs()?.neg()?.exp()? + 1.0)?.log()?)
}

/// Stable softplus: `relu(x) + ln(1 + exp(-|x|))`.
pub fn softplus(x: &Tensor) -> Result<Tensor> {
    Ok((x.relu()? + log1p_exp_neg_abs(x)?)?)
}

/// Binary cross-entropy with logits, averaged over masked positions.
/// Element form: `max(x, 0) - x * z + ln(1 + exp(-|x|))`.
pub fn masked_bce_with_logits(logits: &Tensor, targets: &Tensor, mask: &Tensor) -> Result<Tensor> {
    let per_elem = ((logits.relu()? - (logits * targets)?)? + log1p_exp_neg_abs(logits)?)?;
    let masked = (per_elem * mask)?;
    let denom = mask.sum_all()?;
    Ok(masked.sum_all()?.broadcast_div(&denom)?)
}

/// Multi-class cross-entropy from logits `[batch, classes]` and integer
/// labels, with the requested batch reduction.
pub fn cross_entropy(logits: &Tensor, labels: &[u32], reduction: Reduction) -> Result<Tensor> {
    let device = logits.device();
    let lsm = log_softmax(logits, 1)?;
    let ids = Tensor::from_vec(labels.to_vec(), (labels.len(), 1), device)?;
    let picked = lsm.gather(&ids, 1)?.squeeze(1)?;
    let neg = picked.neg()?;
    match reduction {
        Reduction::Mean => Ok(neg.mean_all()?),
        Reduction::Sum => Ok(neg.sum_all()?),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::Device;

    fn dev() -> Device {
        Device::Cpu
    }

    #[test]
    fn mask_shape_and_content() {
        let m = seq_mask(&[2, 4], 4, &dev()).unwrap();
        assert_eq!(m.to_vec2::<f32>().unwrap(), vec![vec![1.0, 1.0, 0.0, 0.0], vec![1.0; 4]]);
    }

    #[test]
    fn masked_mse_ignores_padding() {
        let target = Tensor::zeros((1, 3, 2), candle_core::DType::F32, &dev()).unwrap();
        // Garbage in the padded frame must not matter.
        let pred =
            Tensor::from_vec(vec![1.0f32, 1.0, 1.0, 1.0, 999.0, -999.0], (1, 3, 2), &dev()).unwrap();
        let mask = seq_mask(&[2], 3, &dev()).unwrap();
        let loss = masked_mse(&pred, &target, &mask).unwrap().to_scalar::<f32>().unwrap();
        assert!((loss - 1.0).abs() < 1e-6);
    }

    #[test]
    fn bce_confident_and_uniform() {
        let mask = seq_mask(&[2], 2, &dev()).unwrap();
        let targets = Tensor::from_vec(vec![1.0f32, 0.0], (1, 2), &dev()).unwrap();
        let confident = Tensor::from_vec(vec![30.0f32, -30.0], (1, 2), &dev()).unwrap();
        let loss =
            masked_bce_with_logits(&confident, &targets, &mask).unwrap().to_scalar::<f32>().unwrap();
        assert!(loss < 1e-6);
        let zeros = Tensor::zeros((1, 2), candle_core::DType::F32, &dev()).unwrap();
        let loss = masked_bce_with_logits(&zeros, &targets, &mask).unwrap().to_scalar::<f32>().unwrap();
        assert!((loss - std::f32::consts::LN_2).abs() < 1e-6);
    }

    #[test]
    fn softplus_stable_at_extremes() {
        let x = Tensor::from_vec(vec![-100.0f32, 0.0, 100.0], 3, &dev()).unwrap();
        let y = softplus(&x).unwrap().to_vec1::<f32>().unwrap();
        assert!(y[0].abs() < 1e-6);
        assert!((y[1] - std::f32::consts::LN_2).abs() < 1e-6);
        assert!((y[2] - 100.0).abs() < 1e-4);
        assert!(y.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn cross_entropy_matches_hand_computation() {
        // Batch of 3 random logit rows evaluated against a direct f64
        // computation of -log softmax.
        let rows = [[0.5f64, -1.2, 2.0], [0.0, 0.0, 0.0], [-3.0, 4.0, 1.0]];
        let labels = [2u32, 1, 0];
        let flat: Vec<f32> = rows.iter().flatten().map(|v| *v as f32).collect();
        let logits = Tensor::from_vec(flat, (3, 3), &dev()).unwrap();

        let mut expected_sum = 0.0f64;
        for (row, &label) in rows.iter().zip(&labels) {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = row.iter().map(|v| (v - m).exp()).sum();
            expected_sum += -(row[label as usize] - m - z.ln());
        }
        let sum = cross_entropy(&logits, &labels, Reduction::Sum).unwrap().to_scalar::<f32>().unwrap();
        let mean = cross_entropy(&logits, &labels, Reduction::Mean).unwrap().to_scalar::<f32>().unwrap();
        assert!((sum as f64 - expected_sum).abs() < 1e-5, "{sum} vs {expected_sum}");
        assert!((mean as f64 - expected_sum / 3.0).abs() < 1e-5);
    }

    #[test]
    fn uniform_logits_give_ln_n_classes() {
        let logits = Tensor::zeros((4, 8), candle_core::DType::F32, &dev()).unwrap();
        let loss = cross_entropy(&logits, &[0, 3, 5, 7], Reduction::Mean)
            .unwrap()
            .to_scalar::<f32>()
            .unwrap();
        assert!((loss - (8.0f32).ln()).abs() < 1e-6);
    }
}
