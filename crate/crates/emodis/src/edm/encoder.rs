//! Reference-style mel encoder: six strided 2-d convolutions, a GRU whose
//! last state summarizes the utterance, and three fully connected layers.

use candle_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::mel::MelSpectrogram;
use crate::nn::{Conv2dLayer, Dense, GruCell, ParamStore};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RefEncoderConfig {
    pub conv_channels: Vec<usize>,
    pub gru_hidden: usize,
    pub embed_dim: usize,
}

impl Default for RefEncoderConfig {
    fn default() -> Self {
        Self { conv_channels: vec![32, 32, 64, 64, 128, 128], gru_hidden: 128, embed_dim: 256 }
    }
}

pub struct RefEncoder {
    convs: Vec<Conv2dLayer>,
    gru: GruCell,
    fc1: Dense,
    fc2: Dense,
    fc3: Dense,
    freq_after_convs: usize,
    last_channels: usize,
}

impl RefEncoder {
    pub fn new(store: &mut ParamStore, name: &str, mel_channels: usize, cfg: &RefEncoderConfig) -> Result<Self> {
        let mut convs = Vec::new();
        let mut in_ch = 1;
        for (i, &out_ch) in cfg.conv_channels.iter().enumerate() {
            convs.push(Conv2dLayer::new(store, &format!("{name}.conv{i}"), in_ch, out_ch, 3, 1, 2)?);
            in_ch = out_ch;
        }
        // Stride-2 with padding 1 maps n -> ceil(n / 2) at every layer.
        let mut freq = mel_channels;
        for _ in &cfg.conv_channels {
            freq = freq.div_ceil(2);
        }
        let last_channels = *cfg.conv_channels.last().expect("at least one conv layer");
        let gru = GruCell::new(store, &format!("{name}.gru"), last_channels * freq, cfg.gru_hidden)?;
        let fc1 = Dense::new(store, &format!("{name}.fc1"), cfg.gru_hidden, cfg.embed_dim)?;
        let fc2 = Dense::new(store, &format!("{name}.fc2"), cfg.embed_dim, cfg.embed_dim)?;
        let fc3 = Dense::new(store, &format!("{name}.fc3"), cfg.embed_dim, cfg.embed_dim)?;
        Ok(Self { convs, gru, fc1, fc2, fc3, freq_after_convs: freq, last_channels })
    }

    /// Mel `[batch, time, channels]` -> embedding `[batch, embed_dim]`.
    pub fn forward(&self, mel: &Tensor) -> Result<Tensor> {
        let (b, _t, _c) = mel.dims3()?;
        let mut x = mel.unsqueeze(1)?; // [B, 1, T, C]
        for conv in &self.convs {
            x = conv.forward(&x)?.relu()?;
        }
        // [B, ch, T', C'] -> [B, T', ch * C']
        let (_, ch, t2, c2) = x.dims4()?;
        debug_assert_eq!(ch, self.last_channels);
        debug_assert_eq!(c2, self.freq_after_convs);
        let x = x.permute((0, 2, 1, 3))?.reshape((b, t2, ch * c2))?;
        let last = self.gru.last_state(&x)?;
        let h = self.fc1.forward(&last)?.relu()?;
        let h = self.fc2.forward(&h)?.relu()?;
        Ok(self.fc3.forward(&h)?.tanh()?)
    }

    /// Convenience path for a single utterance.
    pub fn embed_one(&self, mel: &MelSpectrogram, device: &candle_core::Device) -> Result<Vec<f32>> {
        let t = Tensor::from_vec(mel.data().to_vec(), (1, mel.n_frames(), mel.n_channels()), device)?;
        let e = self.forward(&t)?;
        Ok(e.squeeze(0)?.to_vec1::<f32>()?)
    }
}
