//! Emotion disentangling module (EDM).
//!
//! Two reference-style encoders read the same mel: the emotion encoder
//! produces `e_i`, the speaker encoder `s_i`. Four losses shape them:
//! an emotion classification loss on `e_i`, an orthogonality penalty between
//! `s_i` and `e_i`, a speaker classification loss on `s_i`, and an
//! adversarial emotion classification loss on `s_i` behind a gradient
//! reversal layer. The model instantiates the module twice with unshared
//! parameters: once on the reference mel next to the text encoder and once on
//! the predicted mel behind the decoder.

mod encoder;

pub use encoder::{RefEncoder, RefEncoderConfig};

use candle_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::corpus::EmotionLabel;
use crate::error::Result;
use crate::nn::masked::{cross_entropy, Reduction};
use crate::nn::{grad_reverse, Dense, ParamStore};

/// Scalar loss report; `total` is reconstructed from the components with the
/// exact same arithmetic the training graph uses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdmLosses {
    pub l_ec: f64,
    pub l_ort: f64,
    pub l_sc: f64,
    pub l_adv: f64,
    pub total: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl EdmLosses {
    /// `total = l_ec + alpha * l_ort + beta * l_sc + (1 - beta) * l_adv`.
    pub fn from_components(l_ec: f64, l_ort: f64, l_sc: f64, l_adv: f64, alpha: f64, beta: f64) -> Self {
        let total = l_ec + alpha * l_ort + beta * l_sc + (1.0 - beta) * l_adv;
        Self { l_ec, l_ort, l_sc, l_adv, total, alpha, beta }
    }

    pub fn recomposed(&self) -> f64 {
        self.l_ec + self.alpha * self.l_ort + self.beta * self.l_sc + (1.0 - self.beta) * self.l_adv
    }
}

/// Loss tensors still attached to the graph.
pub struct EdmLossTensors {
    pub l_ec: Tensor,
    pub l_ort: Tensor,
    pub l_sc: Tensor,
    pub l_adv: Tensor,
    pub total: Tensor,
}

impl EdmLossTensors {
    pub fn to_scalars(&self, alpha: f64, beta: f64) -> Result<EdmLosses> {
        Ok(EdmLosses::from_components(
            self.l_ec.to_scalar::<f32>()? as f64,
            self.l_ort.to_scalar::<f32>()? as f64,
            self.l_sc.to_scalar::<f32>()? as f64,
            self.l_adv.to_scalar::<f32>()? as f64,
            alpha,
            beta,
        ))
    }
}

/// Emotion classification loss: negative log probability of the labels.
pub fn loss_ec(logits: &Tensor, labels: &[u32], reduction: Reduction) -> Result<Tensor> {
    cross_entropy(logits, labels, reduction)
}

/// Orthogonality loss between paired speaker and emotion embeddings:
/// each term is the squared Frobenius norm of the 1x1 product `s_i^T e_i`,
/// i.e. the squared dot product.
pub fn loss_ort(s: &Tensor, e: &Tensor, reduction: Reduction) -> Result<Tensor> {
    let dots = (s * e)?.sum(1)?;
    let sq = dots.sqr()?;
    match reduction {
        Reduction::Mean => Ok(sq.mean_all()?),
        Reduction::Sum => Ok(sq.sum_all()?),
    }
}

/// Speaker classification loss on speaker embeddings.
pub fn loss_sc(logits: &Tensor, labels: &[u32], reduction: Reduction) -> Result<Tensor> {
    cross_entropy(logits, labels, reduction)
}

/// Adversarial loss: emotion classification on the speaker embedding behind
/// gradient reversal. Minimizing it trains the classifier normally while
/// pushing the speaker encoder away from emotion information.
pub fn loss_adv(
    s: &Tensor,
    emotion_labels: &[u32],
    adv_classifier: &Dense,
    lambda: f64,
    reduction: Reduction,
) -> Result<Tensor> {
    let reversed = grad_reverse(s, lambda)?;
    let logits = adv_classifier.forward(&reversed)?;
    cross_entropy(&logits, emotion_labels, reduction)
}

/// Emotion matching loss between the reference embedding (treated as the
/// target: gradient blocked) and the embedding of the synthesized mel.
pub fn emotion_matching_loss(e_ref: &Tensor, e_syn: &Tensor) -> Result<Tensor> {
    let d = (e_ref.detach() - e_syn)?;
    Ok(d.sqr()?.mean_all()?)
}

/// Multiply the emotion embedding by a strength scalar. Training always uses
/// 1; inference levels weak/medium/strong are 1/2/3.
pub fn scale_embedding(e: &Tensor, scalar: f64) -> Result<Tensor> {
    Ok(e.affine(scalar, 0.0)?)
}

/// One EDM instance: both encoders plus the three classifier heads.
pub struct Edm {
    pub emotion_encoder: RefEncoder,
    pub speaker_encoder: RefEncoder,
    emotion_cls: Dense,
    speaker_cls: Dense,
    adv_cls: Dense,
    grl_lambda: f64,
}

impl Edm {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        mel_channels: usize,
        n_speakers: usize,
        cfg: &RefEncoderConfig,
        grl_lambda: f64,
    ) -> Result<Self> {
        let emotion_encoder = RefEncoder::new(store, &format!("{name}.emotion"), mel_channels, cfg)?;
        let speaker_encoder = RefEncoder::new(store, &format!("{name}.speaker"), mel_channels, cfg)?;
        let emotion_cls =
            Dense::new(store, &format!("{name}.emotion_cls"), cfg.embed_dim, EmotionLabel::COUNT)?;
        let speaker_cls = Dense::new(store, &format!("{name}.speaker_cls"), cfg.embed_dim, n_speakers)?;
        let adv_cls = Dense::new(store, &format!("{name}.adv_cls"), cfg.embed_dim, EmotionLabel::COUNT)?;
        Ok(Self { emotion_encoder, speaker_encoder, emotion_cls, speaker_cls, adv_cls, grl_lambda })
    }

    pub fn emotion_logits(&self, e: &Tensor) -> Result<Tensor> {
        self.emotion_cls.forward(e)
    }

    pub fn speaker_logits(&self, s: &Tensor) -> Result<Tensor> {
        self.speaker_cls.forward(s)
    }

    /// Run both encoders on one mel batch and compute all four losses.
    pub fn losses(
        &self,
        mel: &Tensor,
        emotion_labels: &[u32],
        speaker_labels: &[u32],
        alpha: f64,
        beta: f64,
        reduction: Reduction,
    ) -> Result<(EdmLossTensors, Tensor, Tensor)> {
        self.losses_split(mel, mel, emotion_labels, speaker_labels, alpha, beta, reduction)
    }

    /// As [`Edm::losses`] but the emotion and speaker branches may read
    /// different views of the mel. The decoder-side module feeds the speaker
    /// branch a detached mel so reversed emotion gradients and the speaker
    /// classification loss stop at the predicted spectrogram.
    pub fn losses_split(
        &self,
        mel_for_emotion: &Tensor,
        mel_for_speaker: &Tensor,
        emotion_labels: &[u32],
        speaker_labels: &[u32],
        alpha: f64,
        beta: f64,
        reduction: Reduction,
    ) -> Result<(EdmLossTensors, Tensor, Tensor)> {
        let e = self.emotion_encoder.forward(mel_for_emotion)?;
        let s = self.speaker_encoder.forward(mel_for_speaker)?;
        let l_ec = loss_ec(&self.emotion_cls.forward(&e)?, emotion_labels, reduction)?;
        let l_ort = loss_ort(&s, &e, reduction)?;
        let l_sc = loss_sc(&self.speaker_cls.forward(&s)?, speaker_labels, reduction)?;
        let l_adv = loss_adv(&s, emotion_labels, &self.adv_cls, self.grl_lambda, reduction)?;
        let total = ((&l_ec + l_ort.affine(alpha, 0.0)?)?
            + (l_sc.affine(beta, 0.0)? + l_adv.affine(1.0 - beta, 0.0)?)?)?;
        Ok((EdmLossTensors { l_ec, l_ort, l_sc, l_adv, total }, e, s))
    }
}

#[cfg(test)]
mod tests;
