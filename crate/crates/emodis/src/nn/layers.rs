use candle_core::Tensor;
use candle_nn::ops::sigmoid;

use crate::error::Result;
use crate::nn::{Init, ParamStore};

/// Fully connected layer; weight layout `[out, in]`.
#[derive(Clone)]
pub struct Dense {
    w: Tensor,
    b: Option<Tensor>,
}

impl Dense {
    pub fn new(store: &mut ParamStore, name: &str, in_dim: usize, out_dim: usize) -> Result<Self> {
        let w = store.take(&format!("{name}.w"), &[out_dim, in_dim], Init::KaimingIn(in_dim))?;
        let b = store.take(&format!("{name}.b"), &[out_dim], Init::Zeros)?;
        Ok(Self { w, b: Some(b) })
    }

    pub fn with_bias_init(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        bias: &[f32],
    ) -> Result<Self> {
        assert_eq!(bias.len(), out_dim);
        let w = store.take(&format!("{name}.w"), &[out_dim, in_dim], Init::KaimingIn(in_dim))?;
        let b = store.take(&format!("{name}.b"), &[out_dim], Init::Zeros)?;
        // Overwrite the zero bias with the requested values.
        store.set_value(
            &format!("{name}.b"),
            &Tensor::from_vec(bias.to_vec(), out_dim, store.device())?,
        )?;
        Ok(Self { w, b: Some(b) })
    }

    /// Input `[.., in]` -> `[.., out]`; accepts 2-d or 3-d input.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = match x.dims().len() {
            2 => x.matmul(&self.w.t()?)?,
            3 => x.broadcast_matmul(&self.w.t()?)?,
            d => {
                return Err(crate::Error::InvalidInput(format!("dense expects 2-d or 3-d input, got {d}-d")))
            }
        };
        match &self.b {
            Some(b) => Ok(y.broadcast_add(b)?),
            None => Ok(y),
        }
    }
}

/// 1-d convolution over `[batch, channels, time]`.
#[derive(Clone)]
pub struct Conv1dLayer {
    w: Tensor,
    b: Tensor,
    kernel: usize,
}

impl Conv1dLayer {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
    ) -> Result<Self> {
        let w = store.take(
            &format!("{name}.w"),
            &[out_ch, in_ch, kernel],
            Init::KaimingIn(in_ch * kernel),
        )?;
        let b = store.take(&format!("{name}.b"), &[out_ch], Init::Zeros)?;
        Ok(Self { w, b, kernel })
    }

    /// Same-length convolution: asymmetric zero padding keeps the output time
    /// dimension equal to the input even for even kernel widths.
    pub fn forward_same(&self, x: &Tensor) -> Result<Tensor> {
        let left = self.kernel / 2;
        let right = self.kernel - 1 - left;
        let x = x.pad_with_zeros(2, left, right)?;
        let y = x.conv1d(&self.w, 0, 1, 1, 1)?;
        Ok(y.broadcast_add(&self.b.reshape((1, (), 1))?)?)
    }
}

/// 2-d convolution over `[batch, channels, height, width]`.
#[derive(Clone)]
pub struct Conv2dLayer {
    w: Tensor,
    b: Tensor,
    padding: usize,
    stride: usize,
}

impl Conv2dLayer {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        padding: usize,
        stride: usize,
    ) -> Result<Self> {
        let w = store.take(
            &format!("{name}.w"),
            &[out_ch, in_ch, kernel, kernel],
            Init::KaimingIn(in_ch * kernel * kernel),
        )?;
        let b = store.take(&format!("{name}.b"), &[out_ch], Init::Zeros)?;
        Ok(Self { w, b, padding, stride })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = x.conv2d(&self.w, self.padding, self.stride, 1, 1)?;
        Ok(y.broadcast_add(&self.b.reshape((1, (), 1, 1))?)?)
    }
}

#[derive(Clone)]
pub struct LstmState {
    pub h: Tensor,
    pub c: Tensor,
}

/// LSTM cell with merged bias; forget gate bias starts at 1.
#[derive(Clone)]
pub struct LstmCell {
    w_ih: Tensor,
    w_hh: Tensor,
    b: Tensor,
    hidden: usize,
}

impl LstmCell {
    pub fn new(store: &mut ParamStore, name: &str, in_dim: usize, hidden: usize) -> Result<Self> {
        let bound = 1.0 / (hidden as f64).sqrt();
        let w_ih = store.take(&format!("{name}.w_ih"), &[4 * hidden, in_dim], Init::Uniform(bound))?;
        let w_hh = store.take(&format!("{name}.w_hh"), &[4 * hidden, hidden], Init::Uniform(bound))?;
        let mut bias = vec![0.0f32; 4 * hidden];
        bias[hidden..2 * hidden].iter_mut().for_each(|v| *v = 1.0);
        let b = store.take(&format!("{name}.b"), &[4 * hidden], Init::Zeros)?;
        store.set_value(&format!("{name}.b"), &Tensor::from_vec(bias, 4 * hidden, store.device())?)?;
        Ok(Self { w_ih, w_hh, b, hidden })
    }

    pub fn zero_state(&self, batch: usize) -> Result<LstmState> {
        let z = Tensor::zeros((batch, self.hidden), self.w_ih.dtype(), self.w_ih.device())?;
        Ok(LstmState { h: z.clone(), c: z })
    }

    pub fn step(&self, x: &Tensor, state: &LstmState) -> Result<LstmState> {
        let gates = (x.matmul(&self.w_ih.t()?)? + state.h.matmul(&self.w_hh.t()?)?)?
            .broadcast_add(&self.b)?;
        let chunks = gates.chunk(4, 1)?;
        let i = sigmoid(&chunks[0])?;
        let f = sigmoid(&chunks[1])?;
        let g = chunks[2].tanh()?;
        let o = sigmoid(&chunks[3])?;
        let c = ((f * &state.c)? + (i * g)?)?;
        let h = (o * c.tanh()?)?;
        Ok(LstmState { h, c })
    }
}

/// GRU cell following the usual reset/update/new-gate formulation.
#[derive(Clone)]
pub struct GruCell {
    w_ih: Tensor,
    w_hh: Tensor,
    b_ih: Tensor,
    b_hh: Tensor,
    hidden: usize,
}

impl GruCell {
    pub fn new(store: &mut ParamStore, name: &str, in_dim: usize, hidden: usize) -> Result<Self> {
        let bound = 1.0 / (hidden as f64).sqrt();
        let w_ih = store.take(&format!("{name}.w_ih"), &[3 * hidden, in_dim], Init::Uniform(bound))?;
        let w_hh = store.take(&format!("{name}.w_hh"), &[3 * hidden, hidden], Init::Uniform(bound))?;
        let b_ih = store.take(&format!("{name}.b_ih"), &[3 * hidden], Init::Zeros)?;
        let b_hh = store.take(&format!("{name}.b_hh"), &[3 * hidden], Init::Zeros)?;
        Ok(Self { w_ih, w_hh, b_ih, b_hh, hidden })
    }

    pub fn zero_state(&self, batch: usize) -> Result<Tensor> {
        Ok(Tensor::zeros((batch, self.hidden), self.w_ih.dtype(), self.w_ih.device())?)
    }

    pub fn step(&self, x: &Tensor, h: &Tensor) -> Result<Tensor> {
        let xg = x.matmul(&self.w_ih.t()?)?.broadcast_add(&self.b_ih)?;
        let hg = h.matmul(&self.w_hh.t()?)?.broadcast_add(&self.b_hh)?;
        let xc = xg.chunk(3, 1)?;
        let hc = hg.chunk(3, 1)?;
        let r = sigmoid(&(&xc[0] + &hc[0])?)?;
        let z = sigmoid(&(&xc[1] + &hc[1])?)?;
        let n = (&xc[2] + (r * &hc[2])?)?.tanh()?;
        let one_minus_z = z.affine(-1.0, 1.0)?;
        Ok(((one_minus_z * n)? + (z * h)?)?)
    }

    /// Run over `[batch, time, features]`, returning all hidden states
    /// `[batch, time, hidden]`.
    pub fn seq(&self, xs: &Tensor) -> Result<Tensor> {
        let (b, t, _) = xs.dims3()?;
        let mut h = self.zero_state(b)?;
        let mut outs = Vec::with_capacity(t);
        for i in 0..t {
            let x = xs.narrow(1, i, 1)?.squeeze(1)?.contiguous()?;
            h = self.step(&x, &h)?;
            outs.push(h.clone());
        }
        Ok(Tensor::stack(&outs, 1)?)
    }

    /// Run over the sequence and keep only the final hidden state.
    pub fn last_state(&self, xs: &Tensor) -> Result<Tensor> {
        let (b, t, _) = xs.dims3()?;
        let mut h = self.zero_state(b)?;
        for i in 0..t {
            let x = xs.narrow(1, i, 1)?.squeeze(1)?.contiguous()?;
            h = self.step(&x, &h)?;
        }
        Ok(h)
    }
}

/// Highway layer: `t * relu(h(x)) + (1 - t) * x` with the transform gate
/// biased toward pass-through at init.
#[derive(Clone)]
pub struct Highway {
    transform: Dense,
    carry: Dense,
}

impl Highway {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Result<Self> {
        let transform = Dense::with_bias_init(
            store,
            &format!("{name}.t"),
            dim,
            dim,
            &vec![-1.0f32; dim],
        )?;
        let carry = Dense::new(store, &format!("{name}.h"), dim, dim)?;
        Ok(Self { transform, carry })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let t = sigmoid(&self.transform.forward(x)?)?;
        let h = self.carry.forward(x)?.relu()?;
        let one_minus_t = t.affine(-1.0, 1.0)?;
        Ok(((t * h)? + (one_minus_t * x)?)?)
    }
}
