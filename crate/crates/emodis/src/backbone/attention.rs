//! Monotonic GMM attention. Component means only ever move forward: the
//! per-step increments go through a softplus, so mu is non-decreasing by
//! construction. Mixture scores are evaluated on 1-based memory positions and
//! renormalized over the valid length.

use candle_core::Tensor;

use crate::error::Result;
use crate::nn::masked::softplus;
use crate::nn::{Dense, ParamStore};

const SIGMA_EPS: f64 = 1e-4;

pub struct GmmAttention {
    q1: Dense,
    q2: Dense,
    k: usize,
}

impl GmmAttention {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        query_dim: usize,
        hidden: usize,
        k: usize,
        init_delta: f64,
        init_sigma: f64,
    ) -> Result<Self> {
        let q1 = Dense::new(store, &format!("{name}.q1"), query_dim, hidden)?;
        // Bias the projection so softplus starts at the requested movement
        // rate and width: softplus(b) = v  =>  b = ln(exp(v) - 1).
        let inv_softplus = |v: f64| (v.exp() - 1.0).ln() as f32;
        let mut bias = vec![0.0f32; 3 * k];
        bias[..k].fill(inv_softplus(init_delta));
        bias[k..2 * k].fill(inv_softplus(init_sigma));
        let q2 = Dense::with_bias_init(store, &format!("{name}.q2"), hidden, 3 * k, &bias)?;
        Ok(Self { q1, q2, k })
    }

    pub fn initial_state(&self, batch: usize, device: &candle_core::Device) -> Result<Tensor> {
        Ok(Tensor::zeros((batch, self.k), candle_core::DType::F32, device)?)
    }

    /// One attention step.
    ///
    /// Returns `(weights [B, L], mu' [B, K])`; weight rows sum to 1 over the
    /// masked length.
    pub fn step(&self, query: &Tensor, mu: &Tensor, mask: &Tensor) -> Result<(Tensor, Tensor)> {
        let (b, l) = mask.dims2()?;
        let h = self.q1.forward(query)?.tanh()?;
        let p = self.q2.forward(&h)?;
        let delta = softplus(&p.narrow(1, 0, self.k)?)?;
        let sigma = (softplus(&p.narrow(1, self.k, self.k)?)? + SIGMA_EPS)?;
        let w = candle_nn::ops::softmax(&p.narrow(1, 2 * self.k, self.k)?, 1)?;

        let mu_next = (mu + delta)?;

        // Positions are 1-based; the initial mu = 0 sits just left of the
        // first phone.
        let pos: Vec<f32> = (1..=l).map(|j| j as f32).collect();
        let pos = Tensor::from_vec(pos, (1, 1, l), query.device())?;
        let z = pos.broadcast_sub(&mu_next.unsqueeze(2)?)?;
        let var2 = sigma.sqr()?.affine(2.0, 0.0)?.unsqueeze(2)?;
        let phi = z.sqr()?.broadcast_div(&var2)?.neg()?.exp()?;
        let scores = phi.broadcast_mul(&w.unsqueeze(2)?)?.sum(1)?; // [B, L]

        // Mask invalid positions, floor the valid ones so a fully decayed
        // mixture degrades to uniform instead of dividing by zero, then
        // renormalize exactly.
        let scores = ((scores * mask)? + mask.affine(1e-10, 0.0)?)?;
        let denom = scores.sum_keepdim(1)?;
        let weights = scores.broadcast_div(&denom)?;
        debug_assert_eq!(weights.dims(), &[b, l]);
        Ok((weights, mu_next))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::masked::seq_mask;
    use candle_core::Device;

    fn dev() -> Device {
        Device::Cpu
    }

    #[test]
    fn weights_sum_to_one_and_mu_is_monotone() {
        let mut store = ParamStore::new(2, dev());
        let attn = GmmAttention::new(&mut store, "a", 8, 6, 3, 0.3, 1.2).unwrap();
        let mask = seq_mask(&[5, 9], 9, &dev()).unwrap();
        let mut mu = attn.initial_state(2, &dev()).unwrap();
        for step in 0..12 {
            let q = Tensor::from_vec(
                (0..16).map(|i| ((i + step) as f32 * 0.7).sin()).collect::<Vec<_>>(),
                (2, 8),
                &dev(),
            )
            .unwrap();
            let (weights, mu_next) = attn.step(&q, &mu, &mask).unwrap();
            let rows = weights.sum(1).unwrap().to_vec1::<f32>().unwrap();
            for r in rows {
                assert!((r - 1.0).abs() < 1e-6, "row sum {r}");
            }
            // Masked tail carries no mass.
            let w = weights.to_vec2::<f32>().unwrap();
            for t in 5..9 {
                assert!(w[0][t] < 1e-9);
            }
            let prev = mu.to_vec2::<f32>().unwrap();
            let next = mu_next.to_vec2::<f32>().unwrap();
            for (pr, nr) in prev.iter().zip(&next) {
                for (p, n) in pr.iter().zip(nr) {
                    assert!(n >= p, "mu must be non-decreasing: {p} -> {n}");
                }
            }
            mu = mu_next;
        }
    }

    #[test]
    fn zero_delta_leaves_mu_unchanged() {
        // Force the increment projection to produce a hugely negative
        // pre-activation so softplus evaluates to exactly 0 in f32.
        let mut store = ParamStore::new(2, dev());
        let attn = GmmAttention::new(&mut store, "a", 4, 4, 2, 0.3, 1.0).unwrap();
        for name in store.names() {
            if name == "a.q2.w" {
                let var = store.get(&name).unwrap();
                store.set_value(&name, &var.as_tensor().zeros_like().unwrap()).unwrap();
            }
            if name == "a.q2.b" {
                let mut b = store.get(&name).unwrap().as_tensor().to_vec1::<f32>().unwrap();
                b[0] = -100.0;
                b[1] = -100.0;
                store
                    .set_value(&name, &Tensor::from_vec(b.clone(), b.len(), &dev()).unwrap())
                    .unwrap();
            }
        }
        let mask = seq_mask(&[6], 6, &dev()).unwrap();
        let mu = Tensor::from_vec(vec![2.0f32, 3.0], (1, 2), &dev()).unwrap();
        let q = Tensor::ones((1, 4), candle_core::DType::F32, &dev()).unwrap();
        let (_, mu_next) = attn.step(&q, &mu, &mask).unwrap();
        assert_eq!(mu_next.to_vec2::<f32>().unwrap(), vec![vec![2.0, 3.0]]);
    }

    #[test]
    fn single_component_matches_direct_gaussian() {
        // One component, mu forced to 3, sigma to 0.5, L = 6: the weights
        // must equal the renormalized Gaussian evaluated at j = 1..6.
        let mut store = ParamStore::new(2, dev());
        let attn = GmmAttention::new(&mut store, "a", 4, 4, 1, 0.3, 1.0).unwrap();
        let inv_softplus = |v: f64| (v.exp() - 1.0).ln() as f32;
        for name in store.names() {
            if name == "a.q2.w" {
                let var = store.get(&name).unwrap();
                store.set_value(&name, &var.as_tensor().zeros_like().unwrap()).unwrap();
            }
            if name == "a.q2.b" {
                // delta = 3 so that mu: 0 -> 3; sigma = 0.5 - eps so the
                // post-eps value is exactly 0.5.
                let b = vec![inv_softplus(3.0), inv_softplus(0.5 - SIGMA_EPS), 0.0f32];
                store.set_value(&name, &Tensor::from_vec(b, 3, &dev()).unwrap()).unwrap();
            }
        }
        let mask = seq_mask(&[6], 6, &dev()).unwrap();
        let mu = attn.initial_state(1, &dev()).unwrap();
        let q = Tensor::zeros((1, 4), candle_core::DType::F32, &dev()).unwrap();
        let (weights, mu_next) = attn.step(&q, &mu, &mask).unwrap();
        assert!((mu_next.to_vec2::<f32>().unwrap()[0][0] - 3.0).abs() < 1e-5);

        let sigma = 0.5f64;
        let raw: Vec<f64> =
            (1..=6).map(|j| (-((j as f64 - 3.0).powi(2)) / (2.0 * sigma * sigma)).exp()).collect();
        let sum: f64 = raw.iter().sum();
        let got = weights.to_vec2::<f32>().unwrap();
        for (j, r) in raw.iter().enumerate() {
            let expected = r / sum;
            assert!(
                (got[0][j] as f64 - expected).abs() < 1e-5,
                "j={}: {} vs {}",
                j + 1,
                got[0][j],
                expected
            );
        }
    }
}
