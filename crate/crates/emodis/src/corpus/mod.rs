//! Synthetic emotional corpus with known latent factors.
//!
//! Every utterance is rendered from three independent factor channels:
//! per-phone spectral content, a per-speaker timbre envelope (multiplicative),
//! and an emotion-specific low-frequency prosody modulation whose amplitude is
//! linear in the latent strength. Because the factors are planted, speaker
//! leakage and strength control become measurable quantities.

mod batch;
mod generate;
mod manifest;
pub mod render;
pub mod symbols;

pub use batch::{Batcher, TrainingBatch};
pub use generate::{generate_corpus, CorpusSpec};
pub use manifest::{load_manifest, save_manifest};
pub use render::{phone_durations, render_utterance, speaker_timbre, EmotionProsody, PITCH_BAND_VALUE};

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::mel::MelSpectrogram;

/// The eight emotion classes. `NeutralT` is reserved for the target speaker's
/// own style, treated as one more class next to the seven source emotions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmotionLabel {
    Neutral,
    Happy,
    Surprise,
    Angry,
    Disgust,
    Fear,
    Sad,
    NeutralT,
}

impl EmotionLabel {
    pub const COUNT: usize = 8;

    /// All classes in declaration order; indices are the stable codes 0..7.
    pub const ALL: [EmotionLabel; 8] = [
        EmotionLabel::Neutral,
        EmotionLabel::Happy,
        EmotionLabel::Surprise,
        EmotionLabel::Angry,
        EmotionLabel::Disgust,
        EmotionLabel::Fear,
        EmotionLabel::Sad,
        EmotionLabel::NeutralT,
    ];

    /// The six classes that take part in emotion transfer.
    pub const TRANSFER: [EmotionLabel; 6] = [
        EmotionLabel::Happy,
        EmotionLabel::Surprise,
        EmotionLabel::Angry,
        EmotionLabel::Disgust,
        EmotionLabel::Fear,
        EmotionLabel::Sad,
    ];

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&e| e == self).unwrap()
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            EmotionLabel::Neutral => "neutral",
            EmotionLabel::Happy => "happy",
            EmotionLabel::Surprise => "surprise",
            EmotionLabel::Angry => "angry",
            EmotionLabel::Disgust => "disgust",
            EmotionLabel::Fear => "fear",
            EmotionLabel::Sad => "sad",
            EmotionLabel::NeutralT => "neutral_t",
        }
    }

    pub fn is_neutral_style(self) -> bool {
        matches!(self, EmotionLabel::Neutral | EmotionLabel::NeutralT)
    }
}

/// Index into the manifest's speaker list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SpeakerId(pub u32);

impl SpeakerId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpeakerRole {
    Source,
    Target,
}

/// A speaker with a fixed spectral envelope applied multiplicatively to
/// everything they utter.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpeakerProfile {
    pub id: SpeakerId,
    pub role: SpeakerRole,
    pub timbre: Vec<f32>,
}

/// Acoustic frontend parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub sample_rate: u32,
    pub frame_length_ms: f32,
    pub frame_shift_ms: f32,
    pub mel_channels: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self { sample_rate: 16_000, frame_length_ms: 50.0, frame_shift_ms: 12.5, mel_channels: 80 }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.frame_shift_ms >= self.frame_length_ms {
            return Err(Error::CorpusSpec(format!(
                "frame_shift ({} ms) must be smaller than frame_length ({} ms)",
                self.frame_shift_ms, self.frame_length_ms
            )));
        }
        if self.mel_channels < 8 {
            return Err(Error::CorpusSpec(format!(
                "mel_channels must be at least 8, got {}",
                self.mel_channels
            )));
        }
        Ok(())
    }

    pub fn frame_shift_s(&self) -> f64 {
        self.frame_shift_ms as f64 / 1000.0
    }

    /// Channel range `[lo, hi)` that carries the planted pitch-proxy
    /// modulation. The band is flat in content and timbre so its spectral
    /// centroid moves only with prosody.
    pub fn pitch_band(&self) -> (usize, usize) {
        let c = self.mel_channels;
        let lo = c * 3 / 4;
        let hi = (lo + (c / 8).max(2)).min(c);
        (lo, hi)
    }
}

/// One labeled utterance of the corpus.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Utterance {
    pub uid: String,
    pub speaker: SpeakerId,
    pub emotion: EmotionLabel,
    /// Generator-side ground-truth prosody amplitude (dimensionless).
    pub latent_strength: f32,
    pub phones: Vec<u32>,
    pub mel_path: String,
    pub n_frames: usize,
}

/// Header plus utterance records; the root directory anchors mel paths.
#[derive(Debug, Clone)]
pub struct CorpusManifest {
    pub speakers: Vec<SpeakerProfile>,
    pub feature_config: FeatureConfig,
    pub seed: u64,
    pub utterances: Vec<Utterance>,
    pub root: PathBuf,
}

impl CorpusManifest {
    pub fn n_speakers(&self) -> usize {
        self.speakers.len()
    }

    pub fn mel_abs_path(&self, utt: &Utterance) -> PathBuf {
        self.root.join(&utt.mel_path)
    }

    pub fn target_speaker(&self) -> Option<&SpeakerProfile> {
        self.speakers.iter().find(|s| s.role == SpeakerRole::Target)
    }

    pub fn source_speakers(&self) -> Vec<&SpeakerProfile> {
        self.speakers.iter().filter(|s| s.role == SpeakerRole::Source).collect()
    }

    pub fn load_mel(&self, utt: &Utterance) -> Result<MelSpectrogram> {
        MelSpectrogram::load(&self.mel_abs_path(utt))
    }

    /// Structural invariants shared by the generator and the loader.
    pub fn validate(&self, check_files: bool) -> Result<()> {
        self.feature_config.validate()?;
        let n_targets = self.speakers.iter().filter(|s| s.role == SpeakerRole::Target).count();
        if n_targets != 1 {
            return Err(Error::CorpusSpec(format!(
                "exactly one target speaker required, found {n_targets}"
            )));
        }
        for (i, s) in self.speakers.iter().enumerate() {
            if s.id.index() != i {
                return Err(Error::CorpusSpec(format!(
                    "speaker ids must be dense and ordered; slot {i} holds id {}",
                    s.id.0
                )));
            }
            if s.timbre.len() != self.feature_config.mel_channels {
                return Err(Error::CorpusSpec(format!(
                    "speaker {} timbre has {} channels, expected {}",
                    s.id.0,
                    s.timbre.len(),
                    self.feature_config.mel_channels
                )));
            }
        }
        let mut seen = std::collections::HashSet::new();
        for u in &self.utterances {
            if !seen.insert(u.uid.as_str()) {
                return Err(Error::CorpusSpec(format!("duplicate uid `{}`", u.uid)));
            }
            let profile = self
                .speakers
                .get(u.speaker.index())
                .ok_or_else(|| Error::CorpusSpec(format!("uid `{}`: unknown speaker {}", u.uid, u.speaker.0)))?;
            let is_target = profile.role == SpeakerRole::Target;
            if is_target != (u.emotion == EmotionLabel::NeutralT) {
                return Err(Error::CorpusSpec(format!(
                    "uid `{}`: target speakers carry only neutral_t and sources never do",
                    u.uid
                )));
            }
            if u.latent_strength == 0.0 && !u.emotion.is_neutral_style() {
                return Err(Error::CorpusSpec(format!(
                    "uid `{}`: zero latent strength requires a neutral-style emotion",
                    u.uid
                )));
            }
            if check_files {
                let path = self.mel_abs_path(u);
                let (frames, channels) = MelSpectrogram::read_header(&path)
                    .map_err(|_| Error::MissingFeature { uid: u.uid.clone(), path: path.clone() })?;
                if frames != u.n_frames || channels != self.feature_config.mel_channels {
                    return Err(Error::FeatureFormat {
                        path,
                        msg: format!(
                            "uid `{}`: header {}x{} does not match manifest {}x{}",
                            u.uid, frames, channels, u.n_frames, self.feature_config.mel_channels
                        ),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Corpus plus all features resident in memory; what training and evaluation
/// actually consume.
pub struct LoadedCorpus {
    pub manifest: CorpusManifest,
    pub mels: Vec<MelSpectrogram>,
}

impl LoadedCorpus {
    pub fn load(manifest: CorpusManifest) -> Result<Self> {
        let mut mels = Vec::with_capacity(manifest.utterances.len());
        for u in &manifest.utterances {
            mels.push(manifest.load_mel(u)?);
        }
        Ok(Self { manifest, mels })
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::load(load_manifest(path)?)
    }
}
