use candle_core::Device;

use super::*;
use crate::corpus::{generate_corpus, CorpusSpec, FeatureConfig};
use crate::edm::RefEncoderConfig;

fn tiny_config() -> TrainConfig {
    TrainConfig {
        batch_size: 4,
        max_steps: 4,
        warmup_steps: 2,
        save_interval: 100,
        log_interval: 1,
        backbone: BackboneConfig::tiny(16),
        ref_encoder: RefEncoderConfig { conv_channels: vec![4, 8], gru_hidden: 8, embed_dim: 16 },
        ..Default::default()
    }
}

fn tiny_corpus(dir: &std::path::Path) -> LoadedCorpus {
    let spec = CorpusSpec {
        utterances_per_source_emotion: 1,
        target_utterances: 3,
        phones_per_utterance: (2, 4),
        feature_config: FeatureConfig { mel_channels: 16, ..FeatureConfig::default() },
        ..CorpusSpec::default()
    };
    generate_corpus(&spec, dir, 5).unwrap();
    LoadedCorpus::from_path(&dir.join("manifest.jsonl")).unwrap()
}

fn tiny_model_and_batch(corpus: &LoadedCorpus, config: &TrainConfig) -> (Model, BatchTensors) {
    let meta = ModelMeta::from_config(config, corpus.manifest.n_speakers());
    let model = Model::build(&meta, 3, Device::Cpu).unwrap();
    let batcher = Batcher::new(4, 1);
    let batch = batcher.build(corpus, &[0, 4, 8, 12]);
    let tensors = BatchTensors::new(&batch, &Device::Cpu).unwrap();
    (model, tensors)
}

#[test]
fn breakdown_worked_example_and_recomposition() {
    let b = LossBreakdown::from_components(0, 2.0, 1.0, 1.0, 0.5);
    assert_eq!(b.total, 4.5);
    assert_eq!(b.total, b.recomposed());
}

#[test]
fn total_loss_components_recompose_and_wo_2ort_zeroes_edmd() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = tiny_corpus(dir.path());
    let config = tiny_config();
    let (model, tensors) = tiny_model_and_batch(&corpus, &config);

    let ctx = crate::nn::ForwardCtx::eval();
    let (_, breakdown, _) = total_loss(&model, &tensors, &config, 0, &ctx).unwrap();
    assert_eq!(breakdown.total, breakdown.recomposed(), "Eq.6 algebra must be bit-exact");
    assert!(breakdown.l_edmd > 0.0);

    let wo2 = TrainConfig { ablation: Ablation::Wo2Ort, ..config };
    let (_, breakdown, _) = total_loss(&model, &tensors, &wo2, 0, &ctx).unwrap();
    assert_eq!(breakdown.l_edmd, 0.0, "wo_2ort must report l_edmd as exactly 0");
    assert!(breakdown.l_emo > 0.0, "the matching loss stays in wo_2ort");
}

#[test]
fn zero_alpha_produces_exactly_zero_ort_gradients() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = tiny_corpus(dir.path());
    let config = tiny_config();
    let (model, tensors) = tiny_model_and_batch(&corpus, &config);
    let (losses, _, _) = model
        .edm_enc
        .losses(&tensors.mels, &tensors.emotions, &tensors.speakers, 0.0, 0.5, crate::nn::masked::Reduction::Mean)
        .unwrap();
    // The term that reaches the objective is alpha * l_ort; at alpha = 0 its
    // gradient must vanish identically on every parameter.
    let scaled = losses.l_ort.affine(0.0, 0.0).unwrap();
    let grads = scaled.backward().unwrap();
    for (name, var) in model.store.iter() {
        if let Some(g) = grads.get(var.as_tensor()) {
            let v = g.flatten_all().unwrap().to_vec1::<f32>().unwrap();
            assert!(v.iter().all(|x| *x == 0.0), "nonzero ort gradient on {name}");
        }
    }
}

#[test]
fn zero_step_run_leaves_initial_checkpoint_and_empty_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = tiny_corpus(&dir.path().join("corpus"));
    let config = TrainConfig { max_steps: 0, ..tiny_config() };
    let out = dir.path().join("run");
    let outcome = train(&config, &corpus, &out, None).unwrap();
    assert_eq!(outcome.steps_run, 0);
    assert!(out.join("checkpoints/step_000000.ckpt").exists());
    assert!(outcome.final_checkpoint.exists());
    let metrics = read_metrics(&outcome.metrics_path).unwrap();
    assert!(metrics.is_empty(), "no steps, no metric lines");
    assert!(out.join("config.json").exists(), "config snapshot written before first step");
}

#[test]
fn checkpoint_roundtrip_reproduces_forward_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = tiny_corpus(&dir.path().join("corpus"));
    let config = tiny_config();
    let (model, tensors) = tiny_model_and_batch(&corpus, &config);

    let path = dir.path().join("model.ckpt");
    save_checkpoint(&model, &[], 0, &config, &path).unwrap();
    let loaded = load_checkpoint(&path).unwrap();
    assert_eq!(loaded.meta.config_fingerprint, config.fingerprint());
    let restored = Model::from_checkpoint(&loaded, Device::Cpu).unwrap();

    let ctx = crate::nn::ForwardCtx::eval();
    let (_, b1, out1) = total_loss(&model, &tensors, &config, 0, &ctx).unwrap();
    let (_, b2, out2) = total_loss(&restored, &tensors, &config, 0, &ctx).unwrap();
    assert_eq!(b1.total.to_bits(), b2.total.to_bits(), "forward must be bit-identical");
    let m1 = out1.mel_after.flatten_all().unwrap().to_vec1::<f32>().unwrap();
    let m2 = out2.mel_after.flatten_all().unwrap().to_vec1::<f32>().unwrap();
    assert_eq!(m1, m2);
}

#[test]
fn wrong_version_checkpoint_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = tiny_corpus(&dir.path().join("corpus"));
    let config = tiny_config();
    let (model, _) = tiny_model_and_batch(&corpus, &config);
    let path = dir.path().join("model.ckpt");
    save_checkpoint(&model, &[], 0, &config, &path).unwrap();
    let mut bytes = std::fs::read(&path).unwrap();
    bytes[7] = 9; // future version
    std::fs::write(&path, bytes).unwrap();
    match load_checkpoint(&path) {
        Err(Error::CheckpointVersion { found, expected, .. }) => {
            assert_eq!(found, 9);
            assert_eq!(expected, 1);
        }
        other => panic!("expected version error, got {other:?}"),
    }
}

#[test]
fn fingerprint_tracks_config_changes() {
    let a = tiny_config();
    let b = TrainConfig { alpha: 0.03, ..tiny_config() };
    assert_eq!(a.fingerprint(), tiny_config().fingerprint());
    assert_ne!(a.fingerprint(), b.fingerprint());
}

#[test]
fn resume_continues_step_counter_without_loss_spike() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = tiny_corpus(&dir.path().join("corpus"));
    let out = dir.path().join("run");

    let phase1 = TrainConfig { max_steps: 6, ..tiny_config() };
    let outcome1 = train(&phase1, &corpus, &out, None).unwrap();
    let metrics1 = read_metrics(&outcome1.metrics_path).unwrap();
    assert_eq!(metrics1.len(), 6);
    let pre_save = metrics1.last().unwrap().total;

    let phase2 = TrainConfig { max_steps: 12, ..tiny_config() };
    let outcome2 = train(&phase2, &corpus, &out, Some(&outcome1.final_checkpoint)).unwrap();
    assert_eq!(outcome2.steps_run, 6);
    let metrics2 = read_metrics(&outcome2.metrics_path).unwrap();
    assert_eq!(metrics2.len(), 12);
    let steps: Vec<usize> = metrics2.iter().map(|m| m.step).collect();
    assert_eq!(steps, (0..12).collect::<Vec<_>>(), "step counter must continue at k");
    let resumed = metrics2[6].total;
    assert!(
        resumed <= 2.0 * pre_save,
        "loss after resume ({resumed}) spiked above 2x pre-save ({pre_save})"
    );
    let ckpt = load_checkpoint(&outcome2.final_checkpoint).unwrap();
    assert_eq!(ckpt.meta.step, 12);
}

#[test]
fn divergence_aborts_with_last_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = tiny_corpus(&dir.path().join("corpus"));
    // An absurd learning rate reliably blows the loss up to non-finite.
    let config = TrainConfig {
        learning_rate: 1e18,
        warmup_steps: 0,
        max_steps: 30,
        ..tiny_config()
    };
    let out = dir.path().join("run");
    match train(&config, &corpus, &out, None) {
        Err(Error::Diverged { last_checkpoint, .. }) => {
            let last = last_checkpoint.expect("a checkpoint should be retained");
            assert!(last.exists());
            load_checkpoint(&last).unwrap();
        }
        Ok(_) => {
            // Tiny models can survive even this; acceptable, but then the
            // run must have produced finite metrics throughout.
            let metrics = read_metrics(&out.join("metrics.log")).unwrap();
            assert!(metrics.iter().all(|m| m.is_finite()));
        }
        Err(other) => panic!("unexpected error: {other}"),
    }
}
