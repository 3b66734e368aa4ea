//! Autoregressive decoder cell. Each step consumes the previous mel frame
//! through a pre-net, concatenates the speaker look-up embedding and the
//! attention context, runs a two-layer recurrent stack, and projects
//! `reduction` mel frames plus one stop logit.

use candle_core::Tensor;

use crate::backbone::attention::GmmAttention;
use crate::backbone::BackboneConfig;
use crate::error::Result;
use crate::nn::{Dense, ForwardCtx, LstmCell, LstmState, ParamStore};

pub struct DecoderCell {
    prenet1: Dense,
    prenet2: Dense,
    attn_rnn: LstmCell,
    dec_rnn: LstmCell,
    pub attention: GmmAttention,
    proj_mel: Dense,
    proj_stop: Dense,
    dropout: f64,
    pub r: usize,
    pub mel_channels: usize,
    memory_dim: usize,
}

pub struct DecoderState {
    pub attn: LstmState,
    pub dec: LstmState,
    pub mu: Tensor,
    pub context: Tensor,
}

pub struct StepOutput {
    /// `[batch, r * mel_channels]`, pre-postnet.
    pub frames: Tensor,
    /// `[batch, 1]` stop logit for the whole step.
    pub stop_logit: Tensor,
    /// `[batch, memory_len]` attention weights.
    pub weights: Tensor,
}

impl DecoderCell {
    pub fn new(store: &mut ParamStore, name: &str, cfg: &BackboneConfig) -> Result<Self> {
        let memory_dim = cfg.enc_dim + cfg.emotion_dim;
        let (p1, p2) = cfg.prenet_dims;
        let prenet1 = Dense::new(store, &format!("{name}.prenet1"), cfg.mel_channels, p1)?;
        let prenet2 = Dense::new(store, &format!("{name}.prenet2"), p1, p2)?;
        let attn_rnn = LstmCell::new(
            store,
            &format!("{name}.attn_rnn"),
            p2 + memory_dim + cfg.spk_embed_dim,
            cfg.attn_rnn_dim,
        )?;
        let attention = GmmAttention::new(
            store,
            &format!("{name}.gmm"),
            cfg.attn_rnn_dim,
            cfg.attn_hidden,
            cfg.gmm_k,
            cfg.attn_init_delta,
            cfg.attn_init_sigma,
        )?;
        let dec_rnn = LstmCell::new(
            store,
            &format!("{name}.dec_rnn"),
            cfg.attn_rnn_dim + memory_dim,
            cfg.dec_rnn_dim,
        )?;
        let proj_mel = Dense::new(
            store,
            &format!("{name}.proj_mel"),
            cfg.dec_rnn_dim + memory_dim,
            cfg.reduction * cfg.mel_channels,
        )?;
        let proj_stop =
            Dense::new(store, &format!("{name}.proj_stop"), cfg.dec_rnn_dim + memory_dim, 1)?;
        Ok(Self {
            prenet1,
            prenet2,
            attn_rnn,
            dec_rnn,
            attention,
            proj_mel,
            proj_stop,
            dropout: cfg.dropout,
            r: cfg.reduction,
            mel_channels: cfg.mel_channels,
            memory_dim,
        })
    }

    pub fn initial_state(&self, batch: usize, device: &candle_core::Device) -> Result<DecoderState> {
        Ok(DecoderState {
            attn: self.attn_rnn.zero_state(batch)?,
            dec: self.dec_rnn.zero_state(batch)?,
            mu: self.attention.initial_state(batch, device)?,
            context: Tensor::zeros((batch, self.memory_dim), candle_core::DType::F32, device)?,
        })
    }

    pub fn step(
        &self,
        prev_frame: &Tensor,
        spk: &Tensor,
        memory: &Tensor,
        memory_mask: &Tensor,
        state: DecoderState,
        ctx: &ForwardCtx,
    ) -> Result<(StepOutput, DecoderState)> {
        let p = ctx.dropout(&self.prenet1.forward(prev_frame)?.relu()?, self.dropout)?;
        let p = ctx.dropout(&self.prenet2.forward(&p)?.relu()?, self.dropout)?;

        let attn_in = Tensor::cat(&[&p, &state.context, spk], 1)?;
        let attn_state = self.attn_rnn.step(&attn_in, &state.attn)?;

        let (weights, mu) = self.attention.step(&attn_state.h, &state.mu, memory_mask)?;
        let context = weights.unsqueeze(1)?.matmul(memory)?.squeeze(1)?;

        let dec_in = Tensor::cat(&[&attn_state.h, &context], 1)?;
        let dec_state = self.dec_rnn.step(&dec_in, &state.dec)?;

        let out = Tensor::cat(&[&dec_state.h, &context], 1)?;
        let frames = self.proj_mel.forward(&out)?;
        let stop_logit = self.proj_stop.forward(&out)?;

        Ok((
            StepOutput { frames, stop_logit, weights },
            DecoderState { attn: attn_state, dec: dec_state, mu, context },
        ))
    }
}
