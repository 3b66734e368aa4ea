//! Line-delimited manifest format: one JSON header record (speakers, feature
//! config, seed) followed by one JSON record per utterance.

use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

use crate::corpus::{CorpusManifest, FeatureConfig, SpeakerProfile, Utterance};
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
struct Header {
    speakers: Vec<SpeakerProfile>,
    feature_config: FeatureConfig,
    seed: u64,
}

pub fn save_manifest(manifest: &CorpusManifest, path: &Path) -> Result<()> {
    let header = Header {
        speakers: manifest.speakers.clone(),
        feature_config: manifest.feature_config.clone(),
        seed: manifest.seed,
    };
    let mut out = String::new();
    out.push_str(&serde_json::to_string(&header)?);
    out.push('\n');
    for u in &manifest.utterances {
        out.push_str(&serde_json::to_string(u)?);
        out.push('\n');
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Parse and fully validate a manifest, including feature-file existence and
/// header agreement for every utterance.
pub fn load_manifest(path: &Path) -> Result<CorpusManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    let (_, first) = lines.next().ok_or_else(|| Error::ManifestParse {
        path: path.into(),
        line: 1,
        msg: "empty manifest".into(),
    })?;
    let header: Header = serde_json::from_str(first).map_err(|e| Error::ManifestParse {
        path: path.into(),
        line: 1,
        msg: e.to_string(),
    })?;
    let mut utterances = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let utt: Utterance = serde_json::from_str(line).map_err(|e| Error::ManifestParse {
            path: path.into(),
            line: i + 1,
            msg: e.to_string(),
        })?;
        utterances.push(utt);
    }
    let root = path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();
    let manifest = CorpusManifest {
        speakers: header.speakers,
        feature_config: header.feature_config,
        seed: header.seed,
        utterances,
        root,
    };
    manifest.validate(true)?;
    Ok(manifest)
}
