//! Deterministic shuffled batching with padding and masks.

use crate::corpus::LoadedCorpus;
use crate::det;

/// A padded batch; padding positions carry zeros and are excluded from every
/// loss through the length vectors.
#[derive(Debug, Clone)]
pub struct TrainingBatch {
    pub uids: Vec<String>,
    /// Phone ids, row-major `[batch, max_phone_len]`, padded with 0.
    pub phones: Vec<u32>,
    pub phone_lens: Vec<usize>,
    pub max_phone_len: usize,
    /// Mel frames, row-major `[batch, max_frames, channels]`, padded with 0.
    pub mels: Vec<f32>,
    pub mel_lens: Vec<usize>,
    pub max_frames: usize,
    pub n_channels: usize,
    /// Emotion class codes y_i.
    pub emotions: Vec<u32>,
    /// Speaker labels l_i.
    pub speakers: Vec<u32>,
    pub latent_strengths: Vec<f32>,
    /// Set when the requested batch size exceeded the corpus size.
    pub undersized: bool,
}

impl TrainingBatch {
    pub fn len(&self) -> usize {
        self.uids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.uids.is_empty()
    }
}

/// Epoch-shuffled batch planner. The order of every epoch is a pure function
/// of `(shuffle_seed, epoch)`.
pub struct Batcher {
    batch_size: usize,
    shuffle_seed: u64,
}

impl Batcher {
    pub fn new(batch_size: usize, shuffle_seed: u64) -> Self {
        assert!(batch_size >= 1, "batch_size must be at least 1");
        Self { batch_size, shuffle_seed }
    }

    pub fn epoch_order(&self, n_items: usize, epoch: u64) -> Vec<usize> {
        det::permutation(det::mix_str(self.shuffle_seed, "epoch", &[epoch]), n_items)
    }

    /// Index groups for one epoch; a trailing partial group is dropped unless
    /// the corpus itself is smaller than one batch.
    pub fn epoch_batches(&self, n_items: usize, epoch: u64) -> Vec<Vec<usize>> {
        let order = self.epoch_order(n_items, epoch);
        if n_items <= self.batch_size {
            return vec![order];
        }
        order.chunks_exact(self.batch_size).map(|c| c.to_vec()).collect()
    }

    pub fn build(&self, corpus: &LoadedCorpus, indices: &[usize]) -> TrainingBatch {
        let n = indices.len();
        let n_channels = corpus.manifest.feature_config.mel_channels;
        let max_phone_len =
            indices.iter().map(|&i| corpus.manifest.utterances[i].phones.len()).max().unwrap_or(0);
        let max_frames = indices.iter().map(|&i| corpus.mels[i].n_frames()).max().unwrap_or(0);

        let mut batch = TrainingBatch {
            uids: Vec::with_capacity(n),
            phones: vec![0; n * max_phone_len],
            phone_lens: Vec::with_capacity(n),
            max_phone_len,
            mels: vec![0.0; n * max_frames * n_channels],
            mel_lens: Vec::with_capacity(n),
            max_frames,
            n_channels,
            emotions: Vec::with_capacity(n),
            speakers: Vec::with_capacity(n),
            latent_strengths: Vec::with_capacity(n),
            undersized: n < self.batch_size,
        };
        for (row, &i) in indices.iter().enumerate() {
            let utt = &corpus.manifest.utterances[i];
            let mel = &corpus.mels[i];
            batch.uids.push(utt.uid.clone());
            batch.phone_lens.push(utt.phones.len());
            batch.mel_lens.push(mel.n_frames());
            batch.emotions.push(utt.emotion.index() as u32);
            batch.speakers.push(utt.speaker.0);
            batch.latent_strengths.push(utt.latent_strength);
            batch.phones[row * max_phone_len..row * max_phone_len + utt.phones.len()]
                .copy_from_slice(&utt.phones);
            let dst = row * max_frames * n_channels;
            batch.mels[dst..dst + mel.data().len()].copy_from_slice(mel.data());
        }
        batch
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_corpus, CorpusSpec, LoadedCorpus};

    fn tiny() -> LoadedCorpus {
        let dir = tempfile::tempdir().unwrap();
        let spec = CorpusSpec {
            utterances_per_source_emotion: 1,
            target_utterances: 2,
            phones_per_utterance: (2, 4),
            ..CorpusSpec::default()
        };
        generate_corpus(&spec, dir.path(), 3).unwrap();
        LoadedCorpus::from_path(&dir.path().join("manifest.jsonl")).unwrap()
    }

    #[test]
    fn padding_and_mask_lengths() {
        let corpus = tiny();
        let batcher = Batcher::new(2, 1);
        // Pick the two utterances with the most different frame counts.
        let mut idx: Vec<usize> = (0..corpus.mels.len()).collect();
        idx.sort_by_key(|&i| corpus.mels[i].n_frames());
        let pair = vec![idx[0], *idx.last().unwrap()];
        let batch = batcher.build(&corpus, &pair);
        assert_eq!(batch.max_frames, corpus.mels[pair[1]].n_frames());
        assert_eq!(batch.mel_lens, vec![corpus.mels[pair[0]].n_frames(), corpus.mels[pair[1]].n_frames()]);
        // Padded tail of the short row must be zero.
        let c = batch.n_channels;
        for t in batch.mel_lens[0]..batch.max_frames {
            for ch in 0..c {
                assert_eq!(batch.mels[t * c + ch], 0.0);
            }
        }
    }

    #[test]
    fn same_seed_same_order() {
        let a = Batcher::new(4, 9).epoch_order(50, 2);
        let b = Batcher::new(4, 9).epoch_order(50, 2);
        let c = Batcher::new(4, 9).epoch_order(50, 3);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn oversized_batch_flagged() {
        let corpus = tiny();
        let n = corpus.mels.len();
        let batcher = Batcher::new(n + 10, 0);
        let groups = batcher.epoch_batches(n, 0);
        assert_eq!(groups.len(), 1);
        let batch = batcher.build(&corpus, &groups[0]);
        assert!(batch.undersized);
        assert_eq!(batch.len(), n);
    }

    #[test]
    fn masked_l1_equals_frame_weighted_mean_of_per_utterance_l1() {
        // Oracle: compute the masked L1 of a padded 3-utterance batch two
        // ways; they must agree because padding contributes nothing.
        let corpus = tiny();
        let batcher = Batcher::new(3, 7);
        let indices = vec![0, 5, 9];
        let batch = batcher.build(&corpus, &indices);
        let c = batch.n_channels;

        // Route 1: masked sum over the padded tensor against a shifted copy.
        let pred: Vec<f32> = batch.mels.iter().map(|v| v + 0.25).collect();
        let mut masked_sum = 0.0f64;
        let mut masked_count = 0usize;
        for row in 0..batch.len() {
            for t in 0..batch.max_frames {
                if t < batch.mel_lens[row] {
                    for ch in 0..c {
                        let k = (row * batch.max_frames + t) * c + ch;
                        masked_sum += (pred[k] - batch.mels[k]).abs() as f64;
                        masked_count += 1;
                    }
                }
            }
        }
        let masked_l1 = masked_sum / masked_count as f64;

        // Route 2: per-utterance unpadded L1 means, weighted by frame count.
        let mut weighted = 0.0f64;
        let mut total_frames = 0usize;
        for &i in &indices {
            let mel = &corpus.mels[i];
            let per_utt: f64 = mel.data().iter().map(|v| ((v + 0.25) - v).abs() as f64).sum::<f64>()
                / mel.data().len() as f64;
            weighted += per_utt * mel.n_frames() as f64;
            total_frames += mel.n_frames();
        }
        let weighted_mean = weighted / total_frames as f64;
        assert!((masked_l1 - weighted_mean).abs() < 1e-9, "{masked_l1} vs {weighted_mean}");
    }
}
