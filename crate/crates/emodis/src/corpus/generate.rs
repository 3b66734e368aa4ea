//! Corpus specification and deterministic generation.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::corpus::{
    render, save_manifest, symbols, CorpusManifest, EmotionLabel, FeatureConfig, SpeakerId,
    SpeakerProfile, SpeakerRole, Utterance,
};
use crate::det;
use crate::error::{Error, Result};

/// What to generate. The default is the desk-scale corpus: one target speaker
/// with 400 neutral-style utterances and two source speakers with 100
/// utterances for each of the seven source emotions.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusSpec {
    pub n_source_speakers: usize,
    pub n_target_speakers: usize,
    pub utterances_per_source_emotion: usize,
    pub target_utterances: usize,
    pub phone_inventory: usize,
    pub phones_per_utterance: (usize, usize),
    pub feature_config: FeatureConfig,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            n_source_speakers: 2,
            n_target_speakers: 1,
            utterances_per_source_emotion: 100,
            target_utterances: 400,
            phone_inventory: symbols::SYMBOL_COUNT,
            phones_per_utterance: (5, 9),
            feature_config: FeatureConfig::default(),
        }
    }
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<()> {
        self.feature_config.validate()?;
        if self.n_target_speakers != 1 {
            return Err(Error::CorpusSpec(format!(
                "exactly one target speaker required, spec declares {}",
                self.n_target_speakers
            )));
        }
        if self.n_source_speakers == 0 {
            return Err(Error::CorpusSpec("at least one source speaker required".into()));
        }
        if self.utterances_per_source_emotion == 0 && self.target_utterances == 0 {
            return Err(Error::CorpusSpec("spec declares zero utterances".into()));
        }
        if self.phone_inventory == 0 || self.phone_inventory > symbols::SYMBOL_COUNT {
            return Err(Error::CorpusSpec(format!(
                "phone inventory must be in 1..={}, got {}",
                symbols::SYMBOL_COUNT,
                self.phone_inventory
            )));
        }
        let (lo, hi) = self.phones_per_utterance;
        if lo == 0 || hi < lo {
            return Err(Error::CorpusSpec(format!(
                "phones_per_utterance range ({lo}, {hi}) is invalid"
            )));
        }
        Ok(())
    }

    pub fn total_utterances(&self) -> usize {
        self.n_target_speakers * self.target_utterances
            + self.n_source_speakers * 7 * self.utterances_per_source_emotion
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: CorpusSpec = serde_json::from_str(&text)?;
        spec.validate()?;
        Ok(spec)
    }
}

fn draw_phones(spec: &CorpusSpec, seed: u64, index: u64) -> Vec<u32> {
    let (lo, hi) = spec.phones_per_utterance;
    let len = lo + det::range_u64(det::mix_str(seed, "plen", &[index]), (hi - lo + 1) as u64) as usize;
    (0..len)
        .map(|j| det::range_u64(det::mix_str(seed, "phone", &[index, j as u64]), spec.phone_inventory as u64) as u32)
        .collect()
}

/// Generate features and manifest under `out_dir`; bit-identical for a given
/// `(spec, seed)` pair.
pub fn generate_corpus(spec: &CorpusSpec, out_dir: &Path, seed: u64) -> Result<CorpusManifest> {
    spec.validate()?;
    let feats_dir = out_dir.join("feats");
    std::fs::create_dir_all(&feats_dir).map_err(|e| Error::io(&feats_dir, e))?;

    // Speaker 0 is the target; sources follow.
    let mut speakers = Vec::new();
    speakers.push(SpeakerProfile {
        id: SpeakerId(0),
        role: SpeakerRole::Target,
        timbre: render::speaker_timbre(seed, 0, &spec.feature_config),
    });
    for s in 0..spec.n_source_speakers {
        speakers.push(SpeakerProfile {
            id: SpeakerId((s + 1) as u32),
            role: SpeakerRole::Source,
            timbre: render::speaker_timbre(seed, (s + 1) as u64, &spec.feature_config),
        });
    }

    let mut utterances = Vec::with_capacity(spec.total_utterances());
    let mut global = 0u64;
    for profile in &speakers {
        let plan: Vec<(EmotionLabel, usize)> = match profile.role {
            SpeakerRole::Target => vec![(EmotionLabel::NeutralT, spec.target_utterances)],
            SpeakerRole::Source => EmotionLabel::ALL
                .iter()
                .filter(|e| **e != EmotionLabel::NeutralT)
                .map(|&e| (e, spec.utterances_per_source_emotion))
                .collect(),
        };
        for (emotion, count) in plan {
            for i in 0..count {
                let uid = format!("s{:02}_{}_{:04}", profile.id.0, emotion.name(), i);
                let phones = draw_phones(spec, seed, global);
                let latent_strength = match emotion {
                    EmotionLabel::Neutral => 0.0,
                    EmotionLabel::NeutralT => 1.0,
                    _ => det::range_f64(det::mix_str(seed, "strength", &[global]), 1.0, 3.0) as f32,
                };
                let utt_seed = det::mix_str(seed, "utt", &[global]);
                let mel = render::render_utterance(
                    &phones,
                    profile,
                    emotion,
                    latent_strength as f64,
                    utt_seed,
                    &spec.feature_config,
                )?;
                let mel_path = format!("feats/{uid}.mel");
                mel.save(&out_dir.join(&mel_path))?;
                utterances.push(Utterance {
                    uid,
                    speaker: profile.id,
                    emotion,
                    latent_strength,
                    phones,
                    mel_path,
                    n_frames: mel.n_frames(),
                });
                global += 1;
            }
        }
    }

    let manifest = CorpusManifest {
        speakers,
        feature_config: spec.feature_config.clone(),
        seed,
        utterances,
        root: out_dir.to_path_buf(),
    };
    manifest.validate(false)?;
    save_manifest(&manifest, &out_dir.join("manifest.jsonl"))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> CorpusSpec {
        CorpusSpec {
            utterances_per_source_emotion: 2,
            target_utterances: 4,
            phones_per_utterance: (2, 3),
            ..CorpusSpec::default()
        }
    }

    #[test]
    fn default_spec_counts() {
        let spec = CorpusSpec::default();
        assert_eq!(spec.total_utterances(), 400 + 2 * 700);
    }

    #[test]
    fn two_targets_rejected() {
        let spec = CorpusSpec { n_target_speakers: 2, ..CorpusSpec::default() };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn zero_utterances_rejected() {
        let spec = CorpusSpec {
            utterances_per_source_emotion: 0,
            target_utterances: 0,
            ..CorpusSpec::default()
        };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn generation_counts_and_roles() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = generate_corpus(&small_spec(), dir.path(), 7).unwrap();
        assert_eq!(manifest.speakers.len(), 3);
        assert_eq!(manifest.utterances.len(), 4 + 2 * 7 * 2);
        manifest.validate(true).unwrap();
        // Target speaker utters only neutral_t with strength 1.
        for u in &manifest.utterances {
            if u.speaker == SpeakerId(0) {
                assert_eq!(u.emotion, EmotionLabel::NeutralT);
                assert_eq!(u.latent_strength, 1.0);
            } else {
                assert_ne!(u.emotion, EmotionLabel::NeutralT);
            }
            if u.emotion == EmotionLabel::Neutral {
                assert_eq!(u.latent_strength, 0.0);
            }
        }
    }

    #[test]
    fn regeneration_is_byte_identical() {
        let spec = small_spec();
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        generate_corpus(&spec, d1.path(), 42).unwrap();
        generate_corpus(&spec, d2.path(), 42).unwrap();
        let m1 = std::fs::read(d1.path().join("manifest.jsonl")).unwrap();
        let m2 = std::fs::read(d2.path().join("manifest.jsonl")).unwrap();
        assert_eq!(m1, m2);
        for entry in std::fs::read_dir(d1.path().join("feats")).unwrap() {
            let name = entry.unwrap().file_name();
            let a = std::fs::read(d1.path().join("feats").join(&name)).unwrap();
            let b = std::fs::read(d2.path().join("feats").join(&name)).unwrap();
            assert_eq!(a, b, "feature file {name:?} differs between runs");
        }
    }
}
