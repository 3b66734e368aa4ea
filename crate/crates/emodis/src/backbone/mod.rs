//! Modified Tacotron-style acoustic model: pre-net + CBHG text encoder, GMM
//! attention, autoregressive decoder conditioned on the emotion embedding
//! (encoder side, strength-scalable) and the speaker look-up embedding
//! (decoder side, frame level), plus a convolutional postnet.

mod attention;
mod cbhg;
mod decoder;

pub use attention::GmmAttention;
pub use cbhg::TextEncoder;
pub use decoder::{DecoderCell, DecoderState, StepOutput};

use candle_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::nn::masked::{masked_bce_with_logits, masked_mae, masked_mse, seq_mask};
use crate::nn::{Conv1dLayer, ForwardCtx, ParamStore};

/// Mel regression criterion. The reconstruction objective defaults to MSE
/// with MAE available behind this switch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    Mse,
    Mae,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct BackboneConfig {
    pub n_symbols: usize,
    pub embed_dim: usize,
    pub prenet_dims: (usize, usize),
    pub bank_kernels: usize,
    pub bank_channels: usize,
    pub proj_channels: usize,
    pub highway_layers: usize,
    pub enc_dim: usize,
    pub emotion_dim: usize,
    pub spk_embed_dim: usize,
    pub attn_rnn_dim: usize,
    pub dec_rnn_dim: usize,
    pub attn_hidden: usize,
    pub gmm_k: usize,
    pub attn_init_delta: f64,
    pub attn_init_sigma: f64,
    pub reduction: usize,
    pub postnet_channels: usize,
    pub postnet_layers: usize,
    pub postnet_kernel: usize,
    pub mel_channels: usize,
    pub dropout: f64,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        Self {
            n_symbols: crate::corpus::symbols::SYMBOL_COUNT,
            embed_dim: 256,
            prenet_dims: (256, 128),
            bank_kernels: 8,
            bank_channels: 64,
            proj_channels: 256,
            highway_layers: 2,
            enc_dim: 256,
            emotion_dim: 256,
            spk_embed_dim: 128,
            attn_rnn_dim: 256,
            dec_rnn_dim: 512,
            attn_hidden: 128,
            gmm_k: 5,
            attn_init_delta: 0.3,
            attn_init_sigma: 1.2,
            reduction: 2,
            postnet_channels: 128,
            postnet_layers: 5,
            postnet_kernel: 5,
            mel_channels: 80,
            dropout: 0.5,
        }
    }
}

impl BackboneConfig {
    /// A small configuration for fast tests.
    pub fn tiny(mel_channels: usize) -> Self {
        Self {
            embed_dim: 16,
            prenet_dims: (16, 12),
            bank_kernels: 3,
            bank_channels: 8,
            proj_channels: 16,
            highway_layers: 1,
            enc_dim: 16,
            emotion_dim: 16,
            spk_embed_dim: 8,
            attn_rnn_dim: 16,
            dec_rnn_dim: 24,
            attn_hidden: 8,
            gmm_k: 2,
            postnet_channels: 8,
            postnet_layers: 3,
            mel_channels,
            ..Self::default()
        }
    }
}

/// Everything a teacher-forced pass produces.
pub struct DecoderOutput {
    /// `[batch, ceil(T/r)*r, mel]` before the postnet.
    pub mel_before: Tensor,
    /// `mel_before + postnet residual`.
    pub mel_after: Tensor,
    /// `[batch, steps]`, one logit per decoder step.
    pub stop_logits: Tensor,
    /// `[batch, steps, memory_len]`.
    pub alignments: Tensor,
    /// `[batch, steps, gmm_k]` attention means after each step.
    pub mus: Tensor,
}

pub struct Backbone {
    pub encoder: TextEncoder,
    pub decoder: DecoderCell,
    postnet: Vec<Conv1dLayer>,
    pub config: BackboneConfig,
}

impl Backbone {
    pub fn new(store: &mut ParamStore, name: &str, cfg: &BackboneConfig) -> Result<Self> {
        let encoder = TextEncoder::new(store, &format!("{name}.encoder"), cfg)?;
        let decoder = DecoderCell::new(store, &format!("{name}.decoder"), cfg)?;
        let mut postnet = Vec::new();
        for i in 0..cfg.postnet_layers {
            let in_ch = if i == 0 { cfg.mel_channels } else { cfg.postnet_channels };
            let out_ch =
                if i + 1 == cfg.postnet_layers { cfg.mel_channels } else { cfg.postnet_channels };
            postnet.push(Conv1dLayer::new(
                store,
                &format!("{name}.postnet{i}"),
                in_ch,
                out_ch,
                cfg.postnet_kernel,
            )?);
        }
        Ok(Self { encoder, decoder, postnet, config: cfg.clone() })
    }

    /// Broadcast `scalar * e` over time and concatenate it to every encoder
    /// state row.
    pub fn condition_on_emotion(states: &Tensor, e: &Tensor, scalar: f64) -> Result<Tensor> {
        let (b, l, _) = states.dims3()?;
        let scaled = crate::edm::scale_embedding(e, scalar)?;
        let e_dim = scaled.dim(1)?;
        let tiled = scaled.unsqueeze(1)?.expand((b, l, e_dim))?.contiguous()?;
        Ok(Tensor::cat(&[states, &tiled], 2)?)
    }

    fn postnet_residual(&self, mel: &Tensor) -> Result<Tensor> {
        let mut x = mel.transpose(1, 2)?.contiguous()?;
        let n = self.postnet.len();
        for (i, conv) in self.postnet.iter().enumerate() {
            x = conv.forward_same(&x)?;
            if i + 1 < n {
                x = x.tanh()?;
            }
        }
        Ok(x.transpose(1, 2)?.contiguous()?)
    }

    /// `mel_before + postnet residual` for a `[batch, time, mel]` tensor.
    pub fn postnet_mel(&self, mel_before: &Tensor) -> Result<Tensor> {
        Ok((mel_before + self.postnet_residual(mel_before)?)?)
    }

    /// Teacher-forced training pass. `target_mel` is `[batch, t_max, mel]`;
    /// decoder inputs are the ground-truth previous frames.
    pub fn forward_teacher_forced(
        &self,
        phones: &Tensor,
        phone_lens: &[usize],
        target_mel: &Tensor,
        e: &Tensor,
        scalar: f64,
        spk: &Tensor,
        ctx: &ForwardCtx,
    ) -> Result<DecoderOutput> {
        let (b, t_max, c) = target_mel.dims3()?;
        let device = target_mel.device();
        let r = self.config.reduction;
        let steps = t_max.div_ceil(r);

        let enc = self.encoder.forward(phones, phone_lens, ctx)?;
        let memory = Self::condition_on_emotion(&enc, e, scalar)?;
        let memory_mask = seq_mask(phone_lens, phones.dim(1)?, device)?;

        let mut state = self.decoder.initial_state(b, device)?;
        let go = Tensor::zeros((b, c), candle_core::DType::F32, device)?;
        let mut frames = Vec::with_capacity(steps);
        let mut stops = Vec::with_capacity(steps);
        let mut aligns = Vec::with_capacity(steps);
        let mut mus = Vec::with_capacity(steps);
        for s in 0..steps {
            let prev = if s == 0 {
                go.clone()
            } else {
                target_mel.narrow(1, s * r - 1, 1)?.squeeze(1)?.contiguous()?
            };
            let (out, next) = self.decoder.step(&prev, spk, &memory, &memory_mask, state, ctx)?;
            frames.push(out.frames.reshape((b, r, c))?);
            stops.push(out.stop_logit);
            aligns.push(out.weights);
            mus.push(next.mu.clone());
            state = next;
        }
        let mel_before = Tensor::cat(&frames, 1)?; // [B, steps*r, C]
        let mel_after = self.postnet_mel(&mel_before)?;
        Ok(DecoderOutput {
            mel_before,
            mel_after,
            stop_logits: Tensor::cat(&stops, 1)?,
            alignments: Tensor::stack(&aligns, 1)?,
            mus: Tensor::stack(&mus, 1)?,
        })
    }

    /// Reconstruction loss: masked regression on both decoder outputs plus
    /// masked stop-token cross-entropy. Padding never contributes.
    pub fn taco_loss(
        &self,
        out: &DecoderOutput,
        target_mel: &Tensor,
        mel_lens: &[usize],
        mode: LossMode,
    ) -> Result<Tensor> {
        let (_b, t_max, _c) = target_mel.dims3()?;
        let device = target_mel.device();
        let r = self.config.reduction;
        let frame_mask = seq_mask(mel_lens, t_max, device)?;

        let before = out.mel_before.narrow(1, 0, t_max)?;
        let after = out.mel_after.narrow(1, 0, t_max)?;
        let reg = match mode {
            LossMode::Mse => (masked_mse(&before, target_mel, &frame_mask)?
                + masked_mse(&after, target_mel, &frame_mask)?)?,
            LossMode::Mae => (masked_mae(&before, target_mel, &frame_mask)?
                + masked_mae(&after, target_mel, &frame_mask)?)?,
        };

        let steps = out.stop_logits.dim(1)?;
        let step_lens: Vec<usize> = mel_lens.iter().map(|&l| l.div_ceil(r)).collect();
        let step_mask = seq_mask(&step_lens, steps, device)?;
        let mut stop_targets = vec![0.0f32; mel_lens.len() * steps];
        for (row, &n) in step_lens.iter().enumerate() {
            if n > 0 {
                stop_targets[row * steps + (n - 1)] = 1.0;
            }
        }
        let stop_targets = Tensor::from_vec(stop_targets, (mel_lens.len(), steps), device)?;
        let stop = masked_bce_with_logits(&out.stop_logits, &stop_targets, &step_mask)?;
        Ok((reg + stop)?)
    }
}
