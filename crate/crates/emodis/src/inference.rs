//! Synthesis: text + target speaker + reference mel + strength scalar to a
//! predicted mel. Only the backbone, the encoder-side emotion encoder, and
//! the speaker look-up table take part; the speaker encoder and all
//! classifier heads stay untouched, which [`InferenceModel::load`] enforces by
//! never even loading them.

use std::path::Path;

use candle_core::{Device, Tensor};

use crate::backbone::Backbone;
use crate::corpus::SpeakerId;
use crate::edm::{scale_embedding, RefEncoder};
use crate::error::{Error, Result};
use crate::mel::MelSpectrogram;
use crate::nn::masked::seq_mask;
use crate::nn::{ForwardCtx, Init, ParamStore};
use crate::trainer::{load_checkpoint, Model, ModelMeta};

pub struct SynthesisRequest {
    pub phones: Vec<u32>,
    pub target_speaker: SpeakerId,
    pub reference_mel: MelSpectrogram,
    pub strength_scalar: f64,
    pub max_frames: usize,
}

impl SynthesisRequest {
    pub fn new(
        phones: Vec<u32>,
        target_speaker: SpeakerId,
        reference_mel: MelSpectrogram,
        strength_scalar: f64,
    ) -> Self {
        let max_frames = 10 * phones.len().max(1);
        Self { phones, target_speaker, reference_mel, strength_scalar, max_frames }
    }

    fn validate(&self) -> Result<()> {
        if self.phones.is_empty() {
            return Err(Error::InvalidInput("phone sequence is empty".into()));
        }
        if !self.strength_scalar.is_finite() || self.strength_scalar < 0.0 {
            return Err(Error::InvalidInput(format!(
                "strength scalar must be finite and non-negative, got {}",
                self.strength_scalar
            )));
        }
        Ok(())
    }
}

pub struct SynthesisOutput {
    pub mel: MelSpectrogram,
    /// `[steps][memory_len]` attention weights.
    pub alignments: Vec<Vec<f32>>,
    /// Decoder step at which the stop probability crossed 0.5.
    pub stop_step: Option<usize>,
    /// Set when decoding hit `max_frames` without a stop.
    pub truncated: bool,
}

/// Minimal parameter set for synthesis, loaded straight from a checkpoint.
pub struct InferenceModel {
    pub backbone: Backbone,
    pub emotion_encoder: RefEncoder,
    spk_table: Tensor,
    pub store: ParamStore,
    pub meta: ModelMeta,
}

impl InferenceModel {
    /// Load only the tensors synthesis needs: the backbone, the encoder-side
    /// emotion encoder, and the speaker look-up table.
    pub fn load(path: &Path, device: Device) -> Result<Self> {
        let ckpt = load_checkpoint(path)?;
        let meta = ckpt.meta.model.clone();
        let mut store = ParamStore::new(0, device.clone());
        let backbone = Backbone::new(&mut store, "backbone", &meta.backbone)?;
        let emotion_encoder = RefEncoder::new(
            &mut store,
            "edm_enc.emotion",
            meta.backbone.mel_channels,
            &meta.ref_encoder,
        )?;
        let spk_table = store.take(
            "spk_table",
            &[meta.n_speakers, meta.backbone.spk_embed_dim],
            Init::Zeros,
        )?;
        for name in store.names() {
            match ckpt.tensor(&name, &device)? {
                Some(t) => store.set_value(&name, &t)?,
                None => {
                    return Err(Error::CheckpointFormat {
                        path: path.into(),
                        msg: format!("missing tensor `{name}`"),
                    })
                }
            }
        }
        Ok(Self { backbone, emotion_encoder, spk_table, store, meta })
    }

    pub fn speaker_row(&self, id: SpeakerId) -> Result<Tensor> {
        if id.index() >= self.meta.n_speakers {
            return Err(Error::InvalidInput(format!(
                "speaker {} out of range ({} speakers)",
                id.0, self.meta.n_speakers
            )));
        }
        Ok(self.spk_table.narrow(0, id.index(), 1)?)
    }

    pub fn synthesize(&self, req: &SynthesisRequest) -> Result<SynthesisOutput> {
        synthesize_parts(&self.backbone, &self.emotion_encoder, &self.speaker_row(req.target_speaker)?, req)
    }

    pub fn extract_emotion_embedding(&self, mel: &MelSpectrogram, scalar: f64) -> Result<Vec<f32>> {
        extract_emotion_embedding_parts(&self.emotion_encoder, mel, scalar, self.store.device())
    }
}

impl Model {
    pub fn synthesize(&self, req: &SynthesisRequest) -> Result<SynthesisOutput> {
        let ids = vec![req.target_speaker.0];
        if req.target_speaker.index() >= self.meta.n_speakers {
            return Err(Error::InvalidInput(format!(
                "speaker {} out of range ({} speakers)",
                req.target_speaker.0, self.meta.n_speakers
            )));
        }
        let spk = self.speaker_rows(&ids)?;
        synthesize_parts(&self.backbone, &self.edm_enc.emotion_encoder, &spk, req)
    }

    pub fn extract_emotion_embedding(&self, mel: &MelSpectrogram, scalar: f64) -> Result<Vec<f32>> {
        extract_emotion_embedding_parts(&self.edm_enc.emotion_encoder, mel, scalar, self.device())
    }
}

/// Run the emotion encoder on one utterance and fold in the strength scalar.
pub fn extract_emotion_embedding_parts(
    encoder: &RefEncoder,
    mel: &MelSpectrogram,
    scalar: f64,
    device: &Device,
) -> Result<Vec<f32>> {
    let t = Tensor::from_vec(
        mel.data().to_vec(),
        (1, mel.n_frames(), mel.n_channels()),
        device,
    )?;
    let e = encoder.forward(&t)?;
    let e = scale_embedding(&e, scalar)?;
    Ok(e.squeeze(0)?.to_vec1::<f32>()?)
}

/// Autoregressive decoding; stops when the stop probability passes 0.5 or
/// `max_frames` is reached.
pub fn synthesize_parts(
    backbone: &Backbone,
    emotion_encoder: &RefEncoder,
    spk_row: &Tensor,
    req: &SynthesisRequest,
) -> Result<SynthesisOutput> {
    req.validate()?;
    let device = spk_row.device().clone();
    let ctx = ForwardCtx::eval();
    let c = backbone.config.mel_channels;
    let r = backbone.config.reduction;
    if req.reference_mel.n_channels() != c {
        return Err(Error::InvalidInput(format!(
            "reference mel has {} channels, model expects {c}",
            req.reference_mel.n_channels()
        )));
    }

    let l = req.phones.len();
    let phones = Tensor::from_vec(req.phones.clone(), (1, l), &device)?;
    let enc = backbone.encoder.forward(&phones, &[l], &ctx)?;

    let ref_mel = Tensor::from_vec(
        req.reference_mel.data().to_vec(),
        (1, req.reference_mel.n_frames(), req.reference_mel.n_channels()),
        &device,
    )?;
    let e = emotion_encoder.forward(&ref_mel)?;
    let memory = Backbone::condition_on_emotion(&enc, &e, req.strength_scalar)?;
    let memory_mask = seq_mask(&[l], l, &device)?;

    let max_steps = req.max_frames.div_ceil(r).max(1);
    let mut state = backbone.decoder.initial_state(1, &device)?;
    let mut prev = Tensor::zeros((1, c), candle_core::DType::F32, &device)?;
    let mut frames = Vec::new();
    let mut alignments = Vec::new();
    let mut stop_step = None;
    for s in 0..max_steps {
        let (out, next) = backbone.decoder.step(&prev, spk_row, &memory, &memory_mask, state, &ctx)?;
        state = next;
        let group = out.frames.reshape((1, r, c))?;
        prev = group.narrow(1, r - 1, 1)?.squeeze(1)?.contiguous()?;
        frames.push(group);
        alignments.push(out.weights.squeeze(0)?.to_vec1::<f32>()?);
        let stop_prob = 1.0 / (1.0 + (-out.stop_logit.to_vec2::<f32>()?[0][0] as f64).exp());
        if stop_prob > 0.5 {
            stop_step = Some(s);
            break;
        }
    }
    let truncated = stop_step.is_none();

    let mel_before = Tensor::cat(&frames, 1)?;
    let mel_after = backbone.postnet_mel(&mel_before)?;
    let (_, t_out, _) = mel_after.dims3()?;
    let t_out = t_out.min(req.max_frames);
    let data = mel_after.narrow(1, 0, t_out)?.flatten_all()?.to_vec1::<f32>()?;
    Ok(SynthesisOutput {
        mel: MelSpectrogram::new(data, t_out, c),
        alignments,
        stop_step,
        truncated,
    })
}
