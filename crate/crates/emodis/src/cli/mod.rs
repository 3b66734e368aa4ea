//! The `emodis` command line: corpus generation, training, synthesis,
//! embedding extraction, evaluations, and figure rendering.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime failure. All randomness is
//! controlled by `--seed`; the `EMODIS_SEED` environment variable overrides
//! the flag when set.

mod rundir;

pub use rundir::RunDirectory;

use std::path::{Path, PathBuf};

use candle_core::Device;
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use crate::corpus::{self, generate_corpus, CorpusSpec, LoadedCorpus, SpeakerId};
use crate::error::Result;
use crate::evalkit;
use crate::inference::{InferenceModel, SynthesisRequest};
use crate::mel::MelSpectrogram;
use crate::trainer::{self, load_checkpoint, Model, TrainConfig};

pub const SEED_ENV: &str = "EMODIS_SEED";

#[derive(Parser)]
#[command(name = "emodis", version, about = "Cross-speaker emotion transfer TTS at desk scale")]
struct Cli {
    /// Seed for all randomness; EMODIS_SEED overrides when set.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Corpus operations.
    Corpus {
        #[command(subcommand)]
        command: CorpusCommand,
    },
    /// Train a model on a corpus manifest.
    Train(TrainArgs),
    /// Synthesize a mel-spectrogram from text.
    Synth(SynthArgs),
    /// Extract an emotion embedding from a mel feature file.
    Embed(EmbedArgs),
    /// Objective evaluations on a trained checkpoint.
    Eval {
        #[command(subcommand)]
        command: EvalCommand,
    },
    /// Re-render figures from the reports of a run directory.
    Plot(PlotArgs),
}

#[derive(Subcommand)]
enum CorpusCommand {
    /// Generate a synthetic corpus.
    Generate(CorpusGenerateArgs),
}

#[derive(Args)]
struct CorpusGenerateArgs {
    /// Corpus spec file (JSON); defaults to the desk-scale corpus.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Training config file (JSON); defaults to the desk-scale config.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Resume from a checkpoint file.
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    text: String,
    /// Target speaker id.
    #[arg(long)]
    speaker: u32,
    /// Reference utterance: a uid (requires --manifest) or a mel file path.
    #[arg(long)]
    reference: String,
    /// Manifest for resolving reference uids.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Emotion strength scalar (1 weak, 2 medium, 3 strong).
    #[arg(long, default_value_t = 1.0)]
    strength: f64,
    #[arg(long)]
    out: PathBuf,
    /// Decoding cap in frames; defaults to 10x the phone count.
    #[arg(long)]
    max_frames: Option<usize>,
}

#[derive(Args)]
struct EmbedArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Mel feature file to embed.
    #[arg(long)]
    mel: PathBuf,
    /// Strength scalar folded into the embedding.
    #[arg(long, default_value_t = 1.0)]
    scalar: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum EvalCommand {
    /// Linear probes and 2-d projection of the emotion embeddings.
    Disentangle(EvalArgs),
    /// Speaker-leakage cosines through the locally trained verifier.
    Leakage(EvalArgs),
    /// Strength ranking confusion and contour monotonicity.
    Strength(EvalArgs),
}

#[derive(Args)]
struct PlotArgs {
    /// Run directory containing reports/.
    #[arg(long)]
    run: PathBuf,
}

/// Entry point used by `main` and by tests. Returns the process exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    0
                }
                _ => {
                    eprint!("{e}");
                    1
                }
            }
        }
    };
    let seed = std::env::var(SEED_ENV).ok().and_then(|v| v.parse::<u64>().ok()).or(cli.seed);
    match run(cli.command, seed) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn run(command: Command, seed: Option<u64>) -> Result<()> {
    match command {
        Command::Corpus { command: CorpusCommand::Generate(args) } => {
            let spec = match &args.spec {
                Some(path) => CorpusSpec::load(path)?,
                None => CorpusSpec::default(),
            };
            let seed = seed.unwrap_or(7);
            let manifest = generate_corpus(&spec, &args.out, seed)?;
            println!(
                "generated {} utterances for {} speakers under {}",
                manifest.utterances.len(),
                manifest.speakers.len(),
                args.out.display()
            );
            Ok(())
        }
        Command::Train(args) => {
            let mut config = match &args.config {
                Some(path) => TrainConfig::load(path)?,
                None => TrainConfig::default(),
            };
            if let Some(s) = seed {
                config.seed = s;
            }
            let corpus = LoadedCorpus::from_path(&args.manifest)?;
            let outcome = trainer::train(&config, &corpus, &args.out, args.resume.as_deref())?;
            println!(
                "trained {} steps; final checkpoint {}",
                outcome.steps_run,
                outcome.final_checkpoint.display()
            );
            Ok(())
        }
        Command::Synth(args) => {
            let model = InferenceModel::load(&args.checkpoint, Device::Cpu)?;
            let phones = corpus::symbols::text_to_phones(&args.text)?;
            let reference = resolve_reference(&args.reference, args.manifest.as_deref())?;
            if args.strength > 3.0 {
                eprintln!(
                    "warning: strength scalar {} is above the calibrated range (1..3); \
                     very large scalars can degrade quality",
                    args.strength
                );
            }
            let mut req =
                SynthesisRequest::new(phones, SpeakerId(args.speaker), reference, args.strength);
            if let Some(mf) = args.max_frames {
                req.max_frames = mf;
            }
            let out = model.synthesize(&req)?;
            out.mel.save(&args.out)?;
            match out.stop_step {
                Some(s) => println!(
                    "synthesized {} frames (stop at decoder step {s}) -> {}",
                    out.mel.n_frames(),
                    args.out.display()
                ),
                None => println!(
                    "synthesized {} frames (truncated at max_frames) -> {}",
                    out.mel.n_frames(),
                    args.out.display()
                ),
            }
            Ok(())
        }
        Command::Embed(args) => {
            let model = InferenceModel::load(&args.checkpoint, Device::Cpu)?;
            let mel = MelSpectrogram::load(&args.mel)?;
            let embedding = model.extract_emotion_embedding(&mel, args.scalar)?;
            let json = serde_json::json!({
                "mel": args.mel.display().to_string(),
                "scalar": args.scalar,
                "embedding": embedding,
            });
            write_text(&args.out, &serde_json::to_string(&json)?)?;
            println!("embedded {} -> {}", args.mel.display(), args.out.display());
            Ok(())
        }
        Command::Eval { command } => {
            let (args, which) = match &command {
                EvalCommand::Disentangle(a) => (a, "disentangle"),
                EvalCommand::Leakage(a) => (a, "leakage"),
                EvalCommand::Strength(a) => (a, "strength"),
            };
            let seed = seed.unwrap_or(7);
            let run = RunDirectory::prepare(&args.out)?;
            let ckpt = load_checkpoint(&args.checkpoint)?;
            let model = Model::from_checkpoint(&ckpt, Device::Cpu)?;
            let corpus = LoadedCorpus::from_path(&args.manifest)?;
            match which {
                "disentangle" => {
                    let report = evalkit::eval_disentangle(&model, &corpus, seed)?;
                    write_text(
                        &run.reports_dir().join("disentangle.json"),
                        &serde_json::to_string_pretty(&report.probes)?,
                    )?;
                    let mut lines = String::new();
                    for p in &report.points {
                        lines.push_str(&serde_json::to_string(p)?);
                        lines.push('\n');
                    }
                    write_text(&run.reports_dir().join("embedding_points.jsonl"), &lines)?;
                    evalkit::render_disentangle_plots(&report, &run.plots_dir())?;
                    for p in &report.probes {
                        println!(
                            "{}: accuracy {:.3} (chance {:.3}, n_test {})",
                            p.task, p.accuracy, p.chance, p.n_test
                        );
                    }
                }
                "leakage" => {
                    let report = evalkit::eval_leakage(&model, &corpus, seed)?;
                    write_text(
                        &run.reports_dir().join("leakage.json"),
                        &serde_json::to_string_pretty(&report)?,
                    )?;
                    println!(
                        "cos_to_target {:.3} cos_to_source {:.3} (bounds: target {:.3}, cross {:.3})",
                        report.cos_to_target,
                        report.cos_to_source,
                        report.target_upper_bound,
                        report.cross_lower_bound
                    );
                }
                _ => {
                    let report = evalkit::eval_strength(&model, &corpus, seed, 10)?;
                    write_text(
                        &run.reports_dir().join("strength.json"),
                        &serde_json::to_string_pretty(&report)?,
                    )?;
                    evalkit::render_strength_plots(&report, &run.plots_dir())?;
                    println!(
                        "confusion diagonal {:?}, monotone fraction {:.3} over {} triples",
                        report.confusion.diagonal(),
                        report.monotone_fraction,
                        report.n_triples
                    );
                }
            }
            Ok(())
        }
        Command::Plot(args) => {
            let run = RunDirectory::prepare(&args.run)?;
            let mut rendered = 0usize;
            let dis_path = run.reports_dir().join("disentangle.json");
            let pts_path = run.reports_dir().join("embedding_points.jsonl");
            if dis_path.exists() && pts_path.exists() {
                let probes: Vec<evalkit::ProbeReport> =
                    serde_json::from_str(&read_text(&dis_path)?)?;
                let points = read_text(&pts_path)?
                    .lines()
                    .filter(|l| !l.trim().is_empty())
                    .map(serde_json::from_str)
                    .collect::<std::result::Result<Vec<evalkit::EmbeddingPoint>, _>>()?;
                let report = evalkit::DisentangleReport {
                    probes,
                    variance_explained: [0.0, 0.0],
                    points,
                };
                evalkit::render_disentangle_plots(&report, &run.plots_dir())?;
                rendered += 1;
            }
            let strength_path = run.reports_dir().join("strength.json");
            if strength_path.exists() {
                let report: evalkit::StrengthReport = serde_json::from_str(&read_text(&strength_path)?)?;
                evalkit::render_strength_plots(&report, &run.plots_dir())?;
                rendered += 1;
            }
            if rendered == 0 {
                return Err(crate::Error::InvalidInput(format!(
                    "no reports found under {}",
                    run.reports_dir().display()
                )));
            }
            println!("rendered figures into {}", run.plots_dir().display());
            Ok(())
        }
    }
}

fn resolve_reference(reference: &str, manifest: Option<&Path>) -> Result<MelSpectrogram> {
    if let Some(manifest_path) = manifest {
        let manifest = corpus::load_manifest(manifest_path)?;
        if let Some(utt) = manifest.utterances.iter().find(|u| u.uid == reference) {
            return manifest.load_mel(utt);
        }
    }
    let path = Path::new(reference);
    if path.exists() {
        return MelSpectrogram::load(path);
    }
    Err(crate::Error::InvalidInput(format!(
        "reference `{reference}` is neither a known uid nor an existing mel file"
    )))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| crate::Error::io(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| crate::Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| crate::Error::io(path, e))
}
