//! Training: the composite objective, the optimization loop, and run
//! artifacts (config snapshot, metrics log, checkpoints).

mod adam;
mod checkpoint;

pub use adam::Adam;
pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta, LoadedCheckpoint};

use std::io::Write;
use std::path::{Path, PathBuf};

use candle_core::{Device, Tensor};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backbone::{Backbone, BackboneConfig, DecoderOutput, LossMode};
use crate::corpus::{Batcher, LoadedCorpus, TrainingBatch};
use crate::edm::{emotion_matching_loss, Edm, RefEncoderConfig};
use crate::error::{Error, Result};
use crate::nn::masked::Reduction;
use crate::nn::{ForwardCtx, Init, ParamStore};

/// Ablation variants. `WoOrt` drops the orthogonality term of the
/// encoder-side module; `Wo2Ort` drops both orthogonality terms and disables
/// the decoder-side module entirely (the emotion matching loss stays, served
/// by the encoder-side emotion encoder).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    Full,
    WoOrt,
    Wo2Ort,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReductionMode {
    Mean,
    Sum,
}

impl From<ReductionMode> for Reduction {
    fn from(m: ReductionMode) -> Self {
        match m {
            ReductionMode::Mean => Reduction::Mean,
            ReductionMode::Sum => Reduction::Sum,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub alpha: f64,
    pub beta: f64,
    pub ablation: Ablation,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_steps: usize,
    pub seed: u64,
    pub loss_mode: LossMode,
    pub reduction_mode: ReductionMode,
    pub decoder_adv_backprop: bool,
    pub warmup_steps: usize,
    pub log_interval: usize,
    pub save_interval: usize,
    pub grl_lambda: f64,
    pub backbone: BackboneConfig,
    pub ref_encoder: RefEncoderConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            alpha: 0.02,
            beta: 0.5,
            ablation: Ablation::Full,
            learning_rate: 1e-3,
            batch_size: 16,
            max_steps: 5000,
            seed: 7,
            loss_mode: LossMode::Mse,
            reduction_mode: ReductionMode::Mean,
            decoder_adv_backprop: false,
            warmup_steps: 500,
            log_interval: 1,
            save_interval: 1000,
            grl_lambda: 1.0,
            backbone: BackboneConfig::default(),
            ref_encoder: RefEncoderConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alpha < 0.0 {
            return Err(Error::InvalidInput(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::InvalidInput(format!("beta must be in [0, 1], got {}", self.beta)));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidInput("batch_size must be >= 1".into()));
        }
        if self.backbone.emotion_dim != self.ref_encoder.embed_dim {
            return Err(Error::InvalidInput(format!(
                "backbone.emotion_dim ({}) must match ref_encoder.embed_dim ({})",
                self.backbone.emotion_dim, self.ref_encoder.embed_dim
            )));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: TrainConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Stable digest of the canonical JSON form.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(json.as_bytes());
        format!("{:x}", hasher.finalize())
    }

    /// Effective encoder-side orthogonality weight under the ablation.
    pub fn alpha_encoder_side(&self) -> f64 {
        match self.ablation {
            Ablation::Full => self.alpha,
            Ablation::WoOrt | Ablation::Wo2Ort => 0.0,
        }
    }
}

/// Everything needed to rebuild a model: sizes plus speaker count.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelMeta {
    pub n_speakers: usize,
    pub backbone: BackboneConfig,
    pub ref_encoder: RefEncoderConfig,
    pub grl_lambda: f64,
}

impl ModelMeta {
    pub fn from_config(config: &TrainConfig, n_speakers: usize) -> Self {
        Self {
            n_speakers,
            backbone: config.backbone.clone(),
            ref_encoder: config.ref_encoder.clone(),
            grl_lambda: config.grl_lambda,
        }
    }
}

/// The full trainable system: backbone, the two unshared EDMs, and the
/// speaker look-up table.
pub struct Model {
    pub backbone: Backbone,
    pub edm_enc: Edm,
    pub edm_dec: Edm,
    spk_table: Tensor,
    pub store: ParamStore,
    pub meta: ModelMeta,
}

impl Model {
    pub fn build(meta: &ModelMeta, seed: u64, device: Device) -> Result<Model> {
        let mut store = ParamStore::new(seed, device);
        let backbone = Backbone::new(&mut store, "backbone", &meta.backbone)?;
        let mel_channels = meta.backbone.mel_channels;
        let edm_enc = Edm::new(
            &mut store,
            "edm_enc",
            mel_channels,
            meta.n_speakers,
            &meta.ref_encoder,
            meta.grl_lambda,
        )?;
        let edm_dec = Edm::new(
            &mut store,
            "edm_dec",
            mel_channels,
            meta.n_speakers,
            &meta.ref_encoder,
            meta.grl_lambda,
        )?;
        let spk_table = store.take(
            "spk_table",
            &[meta.n_speakers, meta.backbone.spk_embed_dim],
            Init::Uniform(0.1),
        )?;
        Ok(Model { backbone, edm_enc, edm_dec, spk_table, store, meta: meta.clone() })
    }

    pub fn from_checkpoint(ckpt: &LoadedCheckpoint, device: Device) -> Result<Model> {
        let model = Model::build(&ckpt.meta.model, 0, device.clone())?;
        for name in model.store.names() {
            match ckpt.tensor(&name, &device)? {
                Some(t) => model.store.set_value(&name, &t)?,
                None => {
                    return Err(Error::CheckpointFormat {
                        path: ckpt.path.clone(),
                        msg: format!("missing tensor `{name}`"),
                    })
                }
            }
        }
        Ok(model)
    }

    /// Rows of the speaker look-up table for a batch of speaker ids.
    pub fn speaker_rows(&self, ids: &[u32]) -> Result<Tensor> {
        let idx = Tensor::from_vec(ids.to_vec(), ids.len(), self.spk_table.device())?;
        Ok(self.spk_table.index_select(&idx, 0)?)
    }

    pub fn device(&self) -> &Device {
        self.store.device()
    }
}

/// Scalar losses of one step. `total` always reconstructs exactly from the
/// four components.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub step: usize,
    pub l_taco: f64,
    pub l_edm: f64,
    pub l_edmd: f64,
    pub l_emo: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn from_components(step: usize, l_taco: f64, l_edm: f64, l_edmd: f64, l_emo: f64) -> Self {
        Self { step, l_taco, l_edm, l_edmd, l_emo, total: l_taco + l_edm + l_edmd + l_emo }
    }

    pub fn recomposed(&self) -> f64 {
        self.l_taco + self.l_edm + self.l_edmd + self.l_emo
    }

    pub fn is_finite(&self) -> bool {
        self.total.is_finite()
    }
}

/// Batch moved onto the device.
pub struct BatchTensors {
    pub phones: Tensor,
    pub phone_lens: Vec<usize>,
    pub mels: Tensor,
    pub mel_lens: Vec<usize>,
    pub emotions: Vec<u32>,
    pub speakers: Vec<u32>,
}

impl BatchTensors {
    pub fn new(batch: &TrainingBatch, device: &Device) -> Result<Self> {
        let phones =
            Tensor::from_vec(batch.phones.clone(), (batch.len(), batch.max_phone_len), device)?;
        let mels = Tensor::from_vec(
            batch.mels.clone(),
            (batch.len(), batch.max_frames, batch.n_channels),
            device,
        )?;
        Ok(Self {
            phones,
            phone_lens: batch.phone_lens.clone(),
            mels,
            mel_lens: batch.mel_lens.clone(),
            emotions: batch.emotions.clone(),
            speakers: batch.speakers.clone(),
        })
    }
}

/// Run the composite objective on one batch: reconstruction, encoder-side
/// EDM, decoder-side EDM, and the emotion matching loss.
///
/// Training pairs are text/audio of the same utterance, so the reference mel
/// for the encoder-side EDM is the batch's ground-truth mel. The decoder-side
/// module reads the predicted mel; its speaker branch sees a detached copy
/// unless `decoder_adv_backprop` is set, so reversed emotion gradients stop
/// at the spectrogram instead of fighting the decoder's emotion objective.
pub fn total_loss(
    model: &Model,
    batch: &BatchTensors,
    config: &TrainConfig,
    step: usize,
    ctx: &ForwardCtx,
) -> Result<(Tensor, LossBreakdown, DecoderOutput)> {
    let reduction: Reduction = config.reduction_mode.into();
    let t_max = batch.mels.dim(1)?;

    // Encoder-side EDM on the reference (ground-truth) mel. Its emotion
    // embedding conditions the backbone, scalar fixed at 1 during training.
    let (enc_losses, e_ref, _s_ref) = model.edm_enc.losses(
        &batch.mels,
        &batch.emotions,
        &batch.speakers,
        config.alpha_encoder_side(),
        config.beta,
        reduction,
    )?;

    let spk = model.speaker_rows(&batch.speakers)?;
    let out = model.backbone.forward_teacher_forced(
        &batch.phones,
        &batch.phone_lens,
        &batch.mels,
        &e_ref,
        1.0,
        &spk,
        ctx,
    )?;
    let l_taco = model.backbone.taco_loss(&out, &batch.mels, &batch.mel_lens, config.loss_mode)?;

    let pred = out.mel_after.narrow(1, 0, t_max)?;
    let (l_edmd, l_emo) = match config.ablation {
        Ablation::Wo2Ort => {
            // Decoder-side module removed; the matching loss reads the
            // predicted mel through the encoder-side emotion encoder.
            let e_syn = model.edm_enc.emotion_encoder.forward(&pred)?;
            let zero = Tensor::zeros((), candle_core::DType::F32, model.device())?;
            (zero, emotion_matching_loss(&e_ref, &e_syn)?)
        }
        Ablation::Full | Ablation::WoOrt => {
            let mel_for_speaker =
                if config.decoder_adv_backprop { pred.clone() } else { pred.detach() };
            let (dec_losses, e_syn, _s_syn) = model.edm_dec.losses_split(
                &pred,
                &mel_for_speaker,
                &batch.emotions,
                &batch.speakers,
                config.alpha,
                config.beta,
                reduction,
            )?;
            (dec_losses.total, emotion_matching_loss(&e_ref, &e_syn)?)
        }
    };

    let total = ((&l_taco + &enc_losses.total)? + (&l_edmd + &l_emo)?)?;
    let breakdown = LossBreakdown::from_components(
        step,
        l_taco.to_scalar::<f32>()? as f64,
        enc_losses.total.to_scalar::<f32>()? as f64,
        l_edmd.to_scalar::<f32>()? as f64,
        l_emo.to_scalar::<f32>()? as f64,
    );
    Ok((total, breakdown, out))
}

pub struct TrainOutcome {
    pub final_checkpoint: PathBuf,
    pub metrics_path: PathBuf,
    pub steps_run: usize,
}

fn lr_at(config: &TrainConfig, step: usize) -> f64 {
    if config.warmup_steps == 0 {
        return config.learning_rate;
    }
    config.learning_rate * ((step + 1) as f64 / config.warmup_steps as f64).min(1.0)
}

/// Train on a loaded corpus, writing the run directory layout underneath
/// `out_dir`: a config snapshot before the first step, `metrics.log` with one
/// loss record per logged step, and periodic checkpoints.
pub fn train(
    config: &TrainConfig,
    corpus: &LoadedCorpus,
    out_dir: &Path,
    resume: Option<&Path>,
) -> Result<TrainOutcome> {
    config.validate()?;
    if config.backbone.mel_channels != corpus.manifest.feature_config.mel_channels {
        return Err(Error::InvalidInput(format!(
            "model expects {} mel channels but the corpus provides {}",
            config.backbone.mel_channels, corpus.manifest.feature_config.mel_channels
        )));
    }
    let device = Device::Cpu;
    let run = crate::cli::RunDirectory::prepare(out_dir)?;
    run.write_config_snapshot(config)?;
    run.write_manifest_ref(&corpus.manifest.root.join("manifest.jsonl"))?;

    let meta = ModelMeta::from_config(config, corpus.manifest.n_speakers());
    let (model, mut adam, start_step) = match resume {
        None => {
            let model = Model::build(&meta, config.seed, device)?;
            let adam = Adam::new(&model.store)?;
            (model, adam, 0)
        }
        Some(path) => {
            let ckpt = load_checkpoint(path)?;
            if ckpt.meta.config_fingerprint != config.fingerprint() {
                eprintln!(
                    "warning: checkpoint fingerprint {} does not match config fingerprint {}",
                    ckpt.meta.config_fingerprint,
                    config.fingerprint()
                );
            }
            let model = Model::from_checkpoint(&ckpt, device.clone())?;
            let mut adam = Adam::new(&model.store)?;
            let dev = device.clone();
            adam.restore(ckpt.meta.step, |name| {
                ckpt.tensor(name, &dev).ok().flatten()
            })?;
            (model, adam, ckpt.meta.step)
        }
    };

    let metrics_path = run.metrics_path();
    let mut metrics = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&metrics_path)
        .map_err(|e| Error::io(&metrics_path, e))?;

    let ckpt_path = |step: usize| run.checkpoints_dir().join(format!("step_{step:06}.ckpt"));
    let save = |model: &Model, adam: &Adam, step: usize, path: &Path| -> Result<()> {
        save_checkpoint(model, &adam.state_tensors(), step, config, path)
    };

    // Initial checkpoint so a zero-step run still leaves a usable artifact.
    let mut last_saved = ckpt_path(start_step);
    if resume.is_none() || !last_saved.exists() {
        save(&model, &adam, start_step, &last_saved)?;
    }

    let batcher = Batcher::new(config.batch_size, config.seed);
    let n_items = corpus.manifest.utterances.len();
    let mut epoch_plan = batcher.epoch_batches(n_items, 0);
    let mut epoch = 0u64;
    let batches_per_epoch = epoch_plan.len();

    for step in start_step..config.max_steps {
        let wanted_epoch = (step / batches_per_epoch) as u64;
        if wanted_epoch != epoch {
            epoch = wanted_epoch;
            epoch_plan = batcher.epoch_batches(n_items, epoch);
        }
        let indices = &epoch_plan[step % batches_per_epoch];
        let batch = batcher.build(corpus, indices);
        let tensors = BatchTensors::new(&batch, &device)?;
        let ctx = ForwardCtx::train(crate::det::mix_str(config.seed, "dropout", &[step as u64]));

        let (total, breakdown, _) = total_loss(&model, &tensors, config, step, &ctx)?;
        if !breakdown.is_finite() {
            return Err(Error::Diverged { step, last_checkpoint: Some(last_saved) });
        }
        let grads = total.backward()?;
        adam.step(&model.store, &grads, lr_at(config, step))?;

        if config.log_interval > 0 && step % config.log_interval == 0 {
            let line = serde_json::to_string(&breakdown)?;
            writeln!(metrics, "{line}").map_err(|e| Error::io(&metrics_path, e))?;
        }
        let done = step + 1;
        if config.save_interval > 0 && done % config.save_interval == 0 && done < config.max_steps {
            let p = ckpt_path(done);
            save(&model, &adam, done, &p)?;
            last_saved = p;
        }
    }

    let final_path = run.checkpoints_dir().join("final.ckpt");
    save(&model, &adam, config.max_steps.max(start_step), &final_path)?;
    Ok(TrainOutcome {
        final_checkpoint: final_path,
        metrics_path,
        steps_run: config.max_steps.saturating_sub(start_step),
    })
}

/// Parse a metrics log back into loss records.
pub fn read_metrics(path: &Path) -> Result<Vec<LossBreakdown>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(line)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
