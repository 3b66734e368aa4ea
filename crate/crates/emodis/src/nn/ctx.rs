use std::cell::Cell;

use candle_core::Tensor;

use crate::det;
use crate::error::Result;

/// Per-forward-pass context: train/eval switch and a counter-based dropout
/// stream so identical passes draw identical masks.
pub struct ForwardCtx {
    pub train: bool,
    drop_seed: u64,
    counter: Cell<u64>,
}

impl ForwardCtx {
    pub fn eval() -> Self {
        Self { train: false, drop_seed: 0, counter: Cell::new(0) }
    }

    pub fn train(drop_seed: u64) -> Self {
        Self { train: true, drop_seed, counter: Cell::new(0) }
    }

    /// Inverted dropout; identity in eval mode or at rate 0.
    pub fn dropout(&self, x: &Tensor, rate: f64) -> Result<Tensor> {
        if !self.train || rate <= 0.0 {
            return Ok(x.clone());
        }
        let call = self.counter.get();
        self.counter.set(call + 1);
        let n = x.elem_count();
        let scale = 1.0 / (1.0 - rate);
        let base = det::mix(self.drop_seed, &[call]);
        let mask: Vec<f32> = (0..n)
            .map(|i| {
                if det::unit_f64(det::mix(base, &[i as u64])) < rate {
                    0.0
                } else {
                    scale as f32
                }
            })
            .collect();
        let mask = Tensor::from_vec(mask, x.shape(), x.device())?;
        Ok(x.broadcast_mul(&mask)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::Device;

    #[test]
    fn eval_mode_is_identity() {
        let x = Tensor::from_vec(vec![1.0f32; 100], 100, &Device::Cpu).unwrap();
        let ctx = ForwardCtx::eval();
        let y = ctx.dropout(&x, 0.5).unwrap();
        assert_eq!(y.to_vec1::<f32>().unwrap(), x.to_vec1::<f32>().unwrap());
    }

    #[test]
    fn rate_zero_in_train_mode_is_identity() {
        let x = Tensor::from_vec(vec![2.0f32; 64], 64, &Device::Cpu).unwrap();
        let ctx = ForwardCtx::train(9);
        let y = ctx.dropout(&x, 0.0).unwrap();
        assert_eq!(y.to_vec1::<f32>().unwrap(), x.to_vec1::<f32>().unwrap());
    }

    #[test]
    fn same_seed_same_masks_and_roughly_right_rate() {
        let x = Tensor::from_vec(vec![1.0f32; 4000], 4000, &Device::Cpu).unwrap();
        let a = ForwardCtx::train(3).dropout(&x, 0.5).unwrap().to_vec1::<f32>().unwrap();
        let b = ForwardCtx::train(3).dropout(&x, 0.5).unwrap().to_vec1::<f32>().unwrap();
        assert_eq!(a, b);
        let kept = a.iter().filter(|v| **v > 0.0).count() as f64 / a.len() as f64;
        assert!((kept - 0.5).abs() < 0.05, "keep rate {kept}");
    }
}
