//! Speaker-leakage measurement: a locally trained speaker classifier serves
//! as the verification model; its penultimate activations are the
//! verification embeddings, and leakage is read off cosine similarities
//! between synthesized and real utterances.

use candle_core::{Device, Tensor};
use serde::{Deserialize, Serialize};

use crate::corpus::{LoadedCorpus, SpeakerRole};
use crate::det;
use crate::error::{Error, Result};
use crate::mel::MelSpectrogram;
use crate::nn::masked::{cross_entropy, Reduction};
use crate::nn::{Conv2dLayer, Dense, ParamStore};
use crate::trainer::Adam;

pub const REQUIRED_VERIFIER_ACCURACY: f64 = 0.95;

/// Small convolutional speaker classifier trained on real corpus mels.
pub struct SpeakerVerifier {
    convs: Vec<Conv2dLayer>,
    fc_emb: Dense,
    fc_out: Dense,
    store: ParamStore,
    pub holdout_accuracy: f64,
}

impl SpeakerVerifier {
    fn build(store: &mut ParamStore, n_speakers: usize) -> Result<(Vec<Conv2dLayer>, Dense, Dense)> {
        let mut convs = Vec::new();
        let chans = [16usize, 32, 64];
        let mut in_ch = 1;
        for (i, &out_ch) in chans.iter().enumerate() {
            convs.push(Conv2dLayer::new(store, &format!("verifier.conv{i}"), in_ch, out_ch, 3, 1, 2)?);
            in_ch = out_ch;
        }
        let fc_emb = Dense::new(store, "verifier.fc_emb", 64, 64)?;
        let fc_out = Dense::new(store, "verifier.fc_out", 64, n_speakers)?;
        Ok((convs, fc_emb, fc_out))
    }

    fn forward_from(&self, mel: &Tensor) -> Result<(Tensor, Tensor)> {
        let mut x = mel.unsqueeze(1)?;
        for conv in &self.convs {
            x = conv.forward(&x)?.relu()?;
        }
        // Global average pool over time and frequency.
        let pooled = x.mean(3)?.mean(2)?;
        let emb = self.fc_emb.forward(&pooled)?.relu()?;
        let logits = self.fc_out.forward(&emb)?;
        Ok((emb, logits))
    }

    /// Train on the real corpus until held-out accuracy reaches
    /// [`REQUIRED_VERIFIER_ACCURACY`] (or the epoch budget runs out, leaving
    /// whatever accuracy was reached for the caller to check).
    pub fn train(corpus: &LoadedCorpus, seed: u64) -> Result<Self> {
        let device = Device::Cpu;
        let n_speakers = corpus.manifest.n_speakers();
        let mut store = ParamStore::new(det::mix_str(seed, "verifier", &[]), device.clone());
        let (convs, fc_emb, fc_out) = Self::build(&mut store, n_speakers)?;
        let mut verifier =
            Self { convs, fc_emb, fc_out, store, holdout_accuracy: 0.0 };

        let n = corpus.mels.len();
        let perm = det::permutation(det::mix_str(seed, "verifier-split", &[]), n);
        let n_train = (n * 4) / 5;
        let train_idx = &perm[..n_train];
        let holdout_idx = &perm[n_train..];

        let mut adam = Adam::new(&verifier.store)?;
        let batch_size = 32usize;
        let max_epochs = 40usize;
        for epoch in 0..max_epochs {
            let order = det::permutation(det::mix_str(seed, "verifier-epoch", &[epoch as u64]), n_train);
            for chunk in order.chunks(batch_size) {
                let indices: Vec<usize> = chunk.iter().map(|&i| train_idx[i]).collect();
                let (mels, labels) = Self::batch(corpus, &indices, &device)?;
                let (_, logits) = verifier.forward_from(&mels)?;
                let loss = cross_entropy(&logits, &labels, Reduction::Mean)?;
                let grads = loss.backward()?;
                adam.step(&verifier.store, &grads, 2e-3)?;
            }
            verifier.holdout_accuracy = verifier.accuracy(corpus, holdout_idx)?;
            if verifier.holdout_accuracy >= 0.97 {
                break;
            }
        }
        Ok(verifier)
    }

    fn batch(corpus: &LoadedCorpus, indices: &[usize], device: &Device) -> Result<(Tensor, Vec<u32>)> {
        let max_t = indices.iter().map(|&i| corpus.mels[i].n_frames()).max().unwrap_or(1);
        let c = corpus.manifest.feature_config.mel_channels;
        let mut data = vec![0.0f32; indices.len() * max_t * c];
        let mut labels = Vec::with_capacity(indices.len());
        for (row, &i) in indices.iter().enumerate() {
            let mel = &corpus.mels[i];
            data[row * max_t * c..row * max_t * c + mel.data().len()].copy_from_slice(mel.data());
            labels.push(corpus.manifest.utterances[i].speaker.0);
        }
        Ok((Tensor::from_vec(data, (indices.len(), max_t, c), device)?, labels))
    }

    pub fn accuracy(&self, corpus: &LoadedCorpus, indices: &[usize]) -> Result<f64> {
        let mut correct = 0usize;
        for chunk in indices.chunks(64) {
            let (mels, labels) = Self::batch(corpus, chunk, self.store.device())?;
            let (_, logits) = self.forward_from(&mels)?;
            let preds = logits.argmax(1)?.to_vec1::<u32>()?;
            correct += preds.iter().zip(&labels).filter(|(p, l)| p == l).count();
        }
        Ok(correct as f64 / indices.len().max(1) as f64)
    }

    /// Verification embedding of one utterance.
    pub fn embed(&self, mel: &MelSpectrogram) -> Result<Vec<f32>> {
        let t = Tensor::from_vec(
            mel.data().to_vec(),
            (1, mel.n_frames(), mel.n_channels()),
            self.store.device(),
        )?;
        let (emb, _) = self.forward_from(&t)?;
        Ok(emb.squeeze(0)?.to_vec1::<f32>()?)
    }
}

pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let mut dot = 0.0f64;
    let mut na = 0.0f64;
    let mut nb = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        dot += *x as f64 * *y as f64;
        na += *x as f64 * *x as f64;
        nb += *y as f64 * *y as f64;
    }
    dot / (na.sqrt() * nb.sqrt()).max(1e-12)
}

/// Cosine-similarity context values reported by the original evaluation;
/// carried in the report for side-by-side display, never enforced.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PaperContext {
    pub target_upper_bound: f64,
    pub cross_lower_bound: f64,
    pub proposed_to_target: f64,
    pub proposed_to_source: f64,
}

impl Default for PaperContext {
    fn default() -> Self {
        Self {
            target_upper_bound: 0.75,
            cross_lower_bound: 0.17,
            proposed_to_target: 0.60,
            proposed_to_source: 0.28,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LeakageReport {
    pub cos_to_target: f64,
    pub cos_to_source: f64,
    /// Mean cosine between disjoint random pairs of real target utterances.
    pub target_upper_bound: f64,
    /// Mean cosine between random real target/source pairs.
    pub cross_lower_bound: f64,
    pub n_synth: usize,
    pub n_pairs: usize,
    pub verifier_holdout_accuracy: f64,
    pub paper_context: PaperContext,
}

/// Mean pairwise cosine between synthesized utterances and real target /
/// source utterances, plus the two real-data bounds.
pub fn leakage_cosine(
    synth: &[MelSpectrogram],
    corpus: &LoadedCorpus,
    verifier: &SpeakerVerifier,
    seed: u64,
) -> Result<LeakageReport> {
    if verifier.holdout_accuracy < REQUIRED_VERIFIER_ACCURACY {
        return Err(Error::VerifierUntrained {
            reached: verifier.holdout_accuracy,
            required: REQUIRED_VERIFIER_ACCURACY,
        });
    }
    if synth.is_empty() {
        return Err(Error::InvalidInput("no synthesized utterances provided".into()));
    }
    let target_idx: Vec<usize> = corpus
        .manifest
        .utterances
        .iter()
        .enumerate()
        .filter(|(_, u)| {
            corpus.manifest.speakers[u.speaker.index()].role == SpeakerRole::Target
        })
        .map(|(i, _)| i)
        .collect();
    let source_idx: Vec<usize> = (0..corpus.mels.len()).filter(|i| !target_idx.contains(i)).collect();

    let embed_corpus = |indices: &[usize]| -> Result<Vec<Vec<f32>>> {
        indices.iter().map(|&i| verifier.embed(&corpus.mels[i])).collect()
    };
    // Sample a bounded set of real utterances per side.
    let pick = |pool: &[usize], count: usize, tag: &str| -> Vec<usize> {
        let perm = det::permutation(det::mix_str(seed, tag, &[]), pool.len());
        perm.iter().take(count).map(|&p| pool[p]).collect()
    };
    let target_sample = pick(&target_idx, 200.min(target_idx.len()), "leak-target");
    let source_sample = pick(&source_idx, 200.min(source_idx.len()), "leak-source");
    let target_embs = embed_corpus(&target_sample)?;
    let source_embs = embed_corpus(&source_sample)?;
    let synth_embs: Vec<Vec<f32>> = synth.iter().map(|m| verifier.embed(m)).collect::<Result<_>>()?;

    // Random pairing keeps semantic content out of the comparison.
    let mut cos_to_target = 0.0;
    let mut cos_to_source = 0.0;
    let reps = 8usize;
    for (i, emb) in synth_embs.iter().enumerate() {
        for rep in 0..reps {
            let t = det::range_u64(det::mix_str(seed, "pair-t", &[i as u64, rep as u64]), target_embs.len() as u64) as usize;
            let s = det::range_u64(det::mix_str(seed, "pair-s", &[i as u64, rep as u64]), source_embs.len() as u64) as usize;
            cos_to_target += cosine(emb, &target_embs[t]);
            cos_to_source += cosine(emb, &source_embs[s]);
        }
    }
    let n_pairs = synth_embs.len() * reps;
    cos_to_target /= n_pairs as f64;
    cos_to_source /= n_pairs as f64;

    // Real-data bounds from disjoint random pairs.
    let mut upper = 0.0;
    let mut lower = 0.0;
    let n_bound = 300usize;
    for k in 0..n_bound {
        let a = det::range_u64(det::mix_str(seed, "ub-a", &[k as u64]), target_embs.len() as u64) as usize;
        let mut b = det::range_u64(det::mix_str(seed, "ub-b", &[k as u64]), target_embs.len() as u64) as usize;
        if b == a {
            b = (b + 1) % target_embs.len();
        }
        upper += cosine(&target_embs[a], &target_embs[b]);
        let s = det::range_u64(det::mix_str(seed, "lb-s", &[k as u64]), source_embs.len() as u64) as usize;
        lower += cosine(&target_embs[a], &source_embs[s]);
    }
    upper /= n_bound as f64;
    lower /= n_bound as f64;

    Ok(LeakageReport {
        cos_to_target,
        cos_to_source,
        target_upper_bound: upper,
        cross_lower_bound: lower,
        n_synth: synth.len(),
        n_pairs,
        verifier_holdout_accuracy: verifier.holdout_accuracy,
        paper_context: PaperContext::default(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_basics() {
        let a = vec![1.0f32, 0.0, 2.0];
        assert!((cosine(&a, &a) - 1.0).abs() < 1e-12, "self-similarity is exactly 1");
        let b = vec![0.0f32, 3.0, 0.0];
        assert!(cosine(&a, &b).abs() < 1e-12);
        let c = vec![-1.0f32, 0.0, -2.0];
        assert!((cosine(&a, &c) + 1.0).abs() < 1e-12);
        for v in [cosine(&a, &b), cosine(&a, &c)] {
            assert!((-1.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn untrained_verifier_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let spec = crate::corpus::CorpusSpec {
            utterances_per_source_emotion: 2,
            target_utterances: 4,
            phones_per_utterance: (2, 3),
            ..Default::default()
        };
        crate::corpus::generate_corpus(&spec, dir.path(), 3).unwrap();
        let corpus = LoadedCorpus::from_path(&dir.path().join("manifest.jsonl")).unwrap();
        let mut store = ParamStore::new(0, Device::Cpu);
        let (convs, fc_emb, fc_out) = SpeakerVerifier::build(&mut store, 3).unwrap();
        let verifier = SpeakerVerifier { convs, fc_emb, fc_out, store, holdout_accuracy: 0.4 };
        let synth = vec![corpus.mels[0].clone()];
        let err = leakage_cosine(&synth, &corpus, &verifier, 1).unwrap_err();
        assert!(matches!(err, Error::VerifierUntrained { .. }));
    }
}
