//! Text encoder: phone embedding, pre-net, and a CBHG block (convolution
//! bank, highway stack, bidirectional GRU).

use candle_core::Tensor;

use crate::backbone::BackboneConfig;
use crate::error::Result;
use crate::nn::masked::seq_mask;
use crate::nn::{Conv1dLayer, Dense, ForwardCtx, GruCell, Highway, ParamStore};

pub struct TextEncoder {
    embed: Tensor,
    prenet1: Dense,
    prenet2: Dense,
    bank: Vec<Conv1dLayer>,
    proj1: Conv1dLayer,
    proj2: Conv1dLayer,
    highways: Vec<Highway>,
    gru_fwd: GruCell,
    gru_bwd: GruCell,
    dropout: f64,
}

impl TextEncoder {
    pub fn new(store: &mut ParamStore, name: &str, cfg: &BackboneConfig) -> Result<Self> {
        assert!(cfg.enc_dim % 2 == 0, "enc_dim must be even for the bidirectional GRU");
        let embed = store.take(
            &format!("{name}.embed"),
            &[cfg.n_symbols, cfg.embed_dim],
            crate::nn::Init::Uniform(0.08),
        )?;
        let (p1, p2) = cfg.prenet_dims;
        let prenet1 = Dense::new(store, &format!("{name}.prenet1"), cfg.embed_dim, p1)?;
        let prenet2 = Dense::new(store, &format!("{name}.prenet2"), p1, p2)?;
        let mut bank = Vec::new();
        for k in 1..=cfg.bank_kernels {
            bank.push(Conv1dLayer::new(store, &format!("{name}.bank{k}"), p2, cfg.bank_channels, k)?);
        }
        let proj1 = Conv1dLayer::new(
            store,
            &format!("{name}.proj1"),
            cfg.bank_kernels * cfg.bank_channels,
            cfg.proj_channels,
            3,
        )?;
        let proj2 = Conv1dLayer::new(store, &format!("{name}.proj2"), cfg.proj_channels, p2, 3)?;
        let mut highways = Vec::new();
        for i in 0..cfg.highway_layers {
            highways.push(Highway::new(store, &format!("{name}.highway{i}"), p2)?);
        }
        let half = cfg.enc_dim / 2;
        let gru_fwd = GruCell::new(store, &format!("{name}.gru_fwd"), p2, half)?;
        let gru_bwd = GruCell::new(store, &format!("{name}.gru_bwd"), p2, half)?;
        Ok(Self {
            embed,
            prenet1,
            prenet2,
            bank,
            proj1,
            proj2,
            highways,
            gru_fwd,
            gru_bwd,
            dropout: cfg.dropout,
        })
    }

    /// Reverse each row of `[batch, time, dim]` within its own true length;
    /// padded positions stay in place. Used to run the backward GRU without
    /// letting padding leak into real positions.
    fn reverse_by_len(x: &Tensor, lens: &[usize]) -> Result<Tensor> {
        let (b, t, d) = x.dims3()?;
        let mut ids = Vec::with_capacity(b * t);
        for &len in lens {
            for j in 0..t {
                let src = if j < len { (len - 1 - j) as u32 } else { j as u32 };
                ids.push(src);
            }
        }
        let ids = Tensor::from_vec(ids, (b, t, 1), x.device())?
            .expand((b, t, d))?
            .contiguous()?;
        Ok(x.gather(&ids, 1)?)
    }

    /// Phones `[batch, max_len]` -> states `[batch, max_len, enc_dim]`.
    pub fn forward(&self, phones: &Tensor, lens: &[usize], ctx: &ForwardCtx) -> Result<Tensor> {
        let (b, l) = phones.dims2()?;
        let mask = seq_mask(lens, l, phones.device())?; // [B, L]
        let mask3 = mask.unsqueeze(2)?;

        let flat = phones.flatten_all()?;
        let x = self.embed.index_select(&flat, 0)?.reshape((b, l, ()))?;
        let x = x.broadcast_mul(&mask3)?;

        let x = ctx.dropout(&self.prenet1.forward(&x)?.relu()?, self.dropout)?;
        let x = ctx.dropout(&self.prenet2.forward(&x)?.relu()?, self.dropout)?;

        // Convolution bank over time.
        let xt = x.transpose(1, 2)?.contiguous()?; // [B, P2, L]
        let mut bank_outs = Vec::with_capacity(self.bank.len());
        for conv in &self.bank {
            bank_outs.push(conv.forward_same(&xt)?.relu()?);
        }
        let bank = Tensor::cat(&bank_outs, 1)?;
        // Max pooling, width 2, stride 1, same length. Activations are
        // post-relu so the zero pad cannot win spuriously at the edge.
        let padded = bank.pad_with_zeros(2, 0, 1)?;
        let pooled = padded.narrow(2, 0, l)?.maximum(&padded.narrow(2, 1, l)?)?;
        let y = self.proj1.forward_same(&pooled)?.relu()?;
        let y = self.proj2.forward_same(&y)?;
        let y = (y + xt)?; // residual
        let y = y.transpose(1, 2)?.contiguous()?; // [B, L, P2]
        let mut y = y.broadcast_mul(&mask3)?;

        for hw in &self.highways {
            y = hw.forward(&y)?;
        }

        // Bidirectional GRU with per-item reversal for the backward pass.
        let fwd = self.gru_fwd.seq(&y)?;
        let rev_in = Self::reverse_by_len(&y, lens)?;
        let bwd = Self::reverse_by_len(&self.gru_bwd.seq(&rev_in)?, lens)?;
        let out = Tensor::cat(&[fwd, bwd], 2)?;
        Ok(out.broadcast_mul(&mask3)?)
    }
}
