//! Objective evaluations standing in for the human-rating experiments:
//! linear probes for disentanglement, verifier cosines for speaker leakage,
//! deterministic 2-d projections, and pitch-proxy strength ranking.

mod leakage;
pub mod plots;
mod probe;
mod project;
mod strength;

pub use leakage::{cosine, leakage_cosine, LeakageReport, PaperContext, SpeakerVerifier, REQUIRED_VERIFIER_ACCURACY};
pub use probe::{fit_linear_probe, ProbeReport, MIN_ITEMS_PER_CLASS};
pub use project::{project_embeddings_2d, Projection};
pub use strength::{contour_variance, pitch_proxy_contour, strength_confusion, StrengthConfusion};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{render_utterance, EmotionLabel, LoadedCorpus, SpeakerRole};
use crate::det;
use crate::error::{Error, Result};
use crate::inference::SynthesisRequest;
use crate::mel::MelSpectrogram;
use crate::trainer::Model;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbeddingPoint {
    pub uid: String,
    pub emotion: String,
    pub speaker: u32,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DisentangleReport {
    pub probes: Vec<ProbeReport>,
    pub variance_explained: [f64; 2],
    pub points: Vec<EmbeddingPoint>,
}

impl DisentangleReport {
    pub fn probe(&self, task: &str) -> Option<&ProbeReport> {
        self.probes.iter().find(|p| p.task == task)
    }
}

/// Extract embeddings from every corpus utterance and fit the four probes.
///
/// Emotion probes run on the full corpus. Speaker probes on the emotion
/// embedding run on source-speaker utterances only: the target speaker owns
/// the neutral_t class outright, so including it lets a probe read the
/// speaker straight off the emotion label instead of off leaked timbre,
/// which is the thing being measured.
pub fn eval_disentangle(model: &Model, corpus: &LoadedCorpus, seed: u64) -> Result<DisentangleReport> {
    let device = model.device().clone();
    let n = corpus.mels.len();
    let mut e_embs = Vec::with_capacity(n);
    let mut s_embs = Vec::with_capacity(n);
    for mel in &corpus.mels {
        e_embs.push(model.edm_enc.emotion_encoder.embed_one(mel, &device)?);
        s_embs.push(model.edm_enc.speaker_encoder.embed_one(mel, &device)?);
    }

    let utts = &corpus.manifest.utterances;
    let emotion_labels: Vec<usize> = utts.iter().map(|u| u.emotion.index()).collect();
    let emotion_names: Vec<&str> = EmotionLabel::ALL.iter().map(|e| e.name()).collect();

    let source_rows: Vec<usize> = (0..n)
        .filter(|&i| {
            corpus.manifest.speakers[utts[i].speaker.index()].role == SpeakerRole::Source
        })
        .collect();
    let source_speaker_ids: Vec<u32> = {
        let mut ids: Vec<u32> = source_rows.iter().map(|&i| utts[i].speaker.0).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    };
    let source_speaker_names: Vec<String> =
        source_speaker_ids.iter().map(|id| format!("speaker{id}")).collect();
    let source_speaker_labels: Vec<usize> = source_rows
        .iter()
        .map(|&i| source_speaker_ids.iter().position(|&id| id == utts[i].speaker.0).unwrap())
        .collect();
    let gather = |rows: &[usize], embs: &[Vec<f32>]| -> Vec<Vec<f32>> {
        rows.iter().map(|&i| embs[i].clone()).collect()
    };

    let all_speaker_labels: Vec<usize> = utts.iter().map(|u| u.speaker.index()).collect();
    let all_speaker_names: Vec<String> =
        (0..corpus.manifest.n_speakers()).map(|i| format!("speaker{i}")).collect();

    let mut probes = Vec::new();
    probes.push(fit_linear_probe(&e_embs, &emotion_labels, &emotion_names, seed, "emotion_on_e")?);
    probes.push(fit_linear_probe(
        &gather(&source_rows, &e_embs),
        &source_speaker_labels,
        &source_speaker_names.iter().map(String::as_str).collect::<Vec<_>>(),
        seed,
        "speaker_on_e",
    )?);
    probes.push(fit_linear_probe(
        &s_embs,
        &all_speaker_labels,
        &all_speaker_names.iter().map(String::as_str).collect::<Vec<_>>(),
        seed,
        "speaker_on_s",
    )?);
    let source_emotion_labels: Vec<usize> =
        source_rows.iter().map(|&i| utts[i].emotion.index()).collect();
    probes.push(fit_linear_probe(
        &gather(&source_rows, &s_embs),
        &source_emotion_labels,
        &emotion_names,
        seed,
        "emotion_on_s",
    )?);

    let projection = project_embeddings_2d(&e_embs)?;
    let points = (0..n)
        .map(|i| EmbeddingPoint {
            uid: utts[i].uid.clone(),
            emotion: utts[i].emotion.name().to_string(),
            speaker: utts[i].speaker.0,
            x: projection.coords[i][0],
            y: projection.coords[i][1],
        })
        .collect();

    Ok(DisentangleReport {
        probes,
        variance_explained: projection.variance_explained,
        points,
    })
}

/// Deterministic evaluation sentences (phone sequences).
pub fn test_sentences(seed: u64, count: usize) -> Vec<Vec<u32>> {
    (0..count)
        .map(|i| {
            let len = 6 + det::range_u64(det::mix_str(seed, "sent-len", &[i as u64]), 3) as usize;
            (0..len)
                .map(|j| {
                    det::range_u64(
                        det::mix_str(seed, "sent-sym", &[i as u64, j as u64]),
                        crate::corpus::symbols::SYMBOL_COUNT as u64,
                    ) as u32
                })
                .collect()
        })
        .collect()
}

/// Synthesize the cross-speaker transfer set: every test sentence in the
/// target speaker's voice for each transferable emotion, with references
/// picked from real source utterances.
pub fn synth_transfer_set(
    model: &Model,
    corpus: &LoadedCorpus,
    seed: u64,
    n_sentences: usize,
    scalar: f64,
) -> Result<Vec<MelSpectrogram>> {
    let target = corpus
        .manifest
        .target_speaker()
        .ok_or_else(|| Error::InvalidInput("corpus has no target speaker".into()))?
        .id;
    let sentences = test_sentences(seed, n_sentences);
    let mut out = Vec::new();
    for emotion in EmotionLabel::TRANSFER {
        let pool: Vec<usize> = corpus
            .manifest
            .utterances
            .iter()
            .enumerate()
            .filter(|(_, u)| u.emotion == emotion)
            .map(|(i, _)| i)
            .collect();
        if pool.is_empty() {
            return Err(Error::InvalidInput(format!("corpus has no `{}` utterances", emotion.name())));
        }
        for (si, phones) in sentences.iter().enumerate() {
            let pick = det::range_u64(
                det::mix_str(seed, "ref-pick", &[emotion.index() as u64, si as u64]),
                pool.len() as u64,
            ) as usize;
            let reference = corpus.mels[pool[pick]].clone();
            let req = SynthesisRequest::new(phones.clone(), target, reference, scalar);
            out.push(model.synthesize(&req)?.mel);
        }
    }
    Ok(out)
}

/// Train the local verifier and measure speaker-leakage cosines on the
/// transfer set (10 sentences x 6 emotions at scalar 1).
pub fn eval_leakage(model: &Model, corpus: &LoadedCorpus, seed: u64) -> Result<LeakageReport> {
    let verifier = SpeakerVerifier::train(corpus, seed)?;
    let synth = synth_transfer_set(model, corpus, seed, 10, 1.0)?;
    leakage_cosine(&synth, corpus, &verifier, seed)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TripleVariance {
    pub sentence: usize,
    pub emotion: String,
    pub variances: [f64; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContourSeries {
    pub emotion: String,
    pub scalar: f64,
    pub series: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StrengthReport {
    pub confusion: StrengthConfusion,
    /// Fraction of (sentence, emotion) pairs whose pitch-proxy variance is
    /// non-decreasing across scalars 1, 2, 3.
    pub monotone_fraction: f64,
    pub n_triples: usize,
    pub skipped: usize,
    pub triples: Vec<TripleVariance>,
    pub contours: Vec<ContourSeries>,
}

/// Strength control evaluation: synthesize every test sentence at scalars
/// {1, 2, 3} per emotion and rank the outputs by pitch-proxy variance.
/// References are generator-rendered at latent strength 1 so the scalar is
/// the only strength lever.
pub fn eval_strength(
    model: &Model,
    corpus: &LoadedCorpus,
    seed: u64,
    n_sentences: usize,
) -> Result<StrengthReport> {
    let band = corpus.manifest.feature_config.pitch_band();
    let target = corpus
        .manifest
        .target_speaker()
        .ok_or_else(|| Error::InvalidInput("corpus has no target speaker".into()))?
        .id;
    let source = corpus
        .manifest
        .source_speakers()
        .first()
        .cloned()
        .cloned()
        .ok_or_else(|| Error::InvalidInput("corpus has no source speaker".into()))?;
    let sentences = test_sentences(seed, n_sentences);
    let scalars = [1.0f64, 2.0, 3.0];

    let mut mels: Vec<[MelSpectrogram; 3]> = Vec::new();
    let mut meta: Vec<(usize, EmotionLabel)> = Vec::new();
    let mut skipped = 0usize;
    let mut contours = Vec::new();
    for emotion in EmotionLabel::TRANSFER {
        // One fixed reference per emotion, rendered at unit latent strength.
        let ref_phones: Vec<u32> = (0..10)
            .map(|j| {
                det::range_u64(
                    det::mix_str(seed, "strength-ref", &[emotion.index() as u64, j as u64]),
                    crate::corpus::symbols::SYMBOL_COUNT as u64,
                ) as u32
            })
            .collect();
        let reference = render_utterance(
            &ref_phones,
            &source,
            emotion,
            1.0,
            det::mix_str(seed, "strength-ref-seed", &[emotion.index() as u64]),
            &corpus.manifest.feature_config,
        )?;
        for (si, phones) in sentences.iter().enumerate() {
            let mut triple: Vec<MelSpectrogram> = Vec::with_capacity(3);
            let mut ok = true;
            for &scalar in &scalars {
                let req = SynthesisRequest::new(phones.clone(), target, reference.clone(), scalar);
                match model.synthesize(&req) {
                    Ok(out) if out.mel.n_frames() >= 2 => triple.push(out.mel),
                    _ => {
                        ok = false;
                        break;
                    }
                }
            }
            if !ok {
                skipped += 1;
                continue;
            }
            let triple: [MelSpectrogram; 3] = triple.try_into().unwrap();
            if si == 0 {
                for (k, mel) in triple.iter().enumerate() {
                    contours.push(ContourSeries {
                        emotion: emotion.name().to_string(),
                        scalar: scalars[k],
                        series: pitch_proxy_contour(mel, band),
                    });
                }
            }
            meta.push((si, emotion));
            mels.push(triple);
        }
    }

    let refs: Vec<[&MelSpectrogram; 3]> = mels.iter().map(|t| [&t[0], &t[1], &t[2]]).collect();
    let mut confusion = strength_confusion(&refs, band, seed);
    confusion.skipped = skipped;

    let mut triples = Vec::new();
    let mut monotone = 0usize;
    for (k, t) in mels.iter().enumerate() {
        let v: Vec<f64> =
            t.iter().map(|m| contour_variance(&pitch_proxy_contour(m, band))).collect();
        if v[0] <= v[1] && v[1] <= v[2] {
            monotone += 1;
        }
        triples.push(TripleVariance {
            sentence: meta[k].0,
            emotion: meta[k].1.name().to_string(),
            variances: [v[0], v[1], v[2]],
        });
    }
    Ok(StrengthReport {
        confusion,
        monotone_fraction: monotone as f64 / mels.len().max(1) as f64,
        n_triples: mels.len(),
        skipped,
        triples,
        contours,
    })
}

/// Figure renderers shared by `eval` and `plot`.
pub fn render_disentangle_plots(report: &DisentangleReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let emotion_names: Vec<String> =
        EmotionLabel::ALL.iter().map(|e| e.name().to_string()).collect();
    let by_emotion: Vec<([f64; 2], usize)> = report
        .points
        .iter()
        .map(|p| {
            let class = emotion_names.iter().position(|n| *n == p.emotion).unwrap_or(0);
            ([p.x, p.y], class)
        })
        .collect();
    plots::svg_scatter(
        &by_emotion,
        &emotion_names,
        "emotion embeddings by emotion",
        &dir.join("embeddings_by_emotion.svg"),
    )?;
    let n_speakers = report.points.iter().map(|p| p.speaker).max().unwrap_or(0) as usize + 1;
    let speaker_names: Vec<String> = (0..n_speakers).map(|i| format!("speaker{i}")).collect();
    let by_speaker: Vec<([f64; 2], usize)> =
        report.points.iter().map(|p| ([p.x, p.y], p.speaker as usize)).collect();
    plots::svg_scatter(
        &by_speaker,
        &speaker_names,
        "emotion embeddings by speaker",
        &dir.join("embeddings_by_speaker.svg"),
    )?;
    Ok(())
}

pub fn render_strength_plots(report: &StrengthReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let labels: Vec<String> = ["weak", "medium", "strong"].iter().map(|s| s.to_string()).collect();
    let matrix: Vec<Vec<f64>> = report.confusion.matrix.iter().map(|r| r.to_vec()).collect();
    plots::svg_heatmap(
        &matrix,
        &labels,
        &labels,
        "strength ranking confusion (rows: scalar level, cols: rank)",
        &dir.join("strength_confusion.svg"),
    )?;
    let mut by_emotion: std::collections::BTreeMap<String, Vec<(String, Vec<f64>)>> =
        Default::default();
    for c in &report.contours {
        by_emotion
            .entry(c.emotion.clone())
            .or_default()
            .push((format!("scalar {}", c.scalar), c.series.clone()));
    }
    for (emotion, series) in by_emotion {
        plots::svg_lines(
            &series,
            &format!("pitch-proxy contour, {emotion}"),
            &dir.join(format!("pitch_contours_{emotion}.svg")),
        )?;
    }
    Ok(())
}
