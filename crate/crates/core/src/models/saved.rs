//! Model directories.
//!
//! ```text
//! <dir>/manifest.json    format version, model spec, vocabulary sizes and hashes
//! <dir>/params.bin       parameter checkpoint
//! <dir>/source.vocab     token<TAB>count lines
//! <dir>/target.vocab
//! ```
//!
//! Loading rebuilds the architecture from the manifest and requires the
//! checkpoint to hold exactly its parameters with matching shapes.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Model, ModelError, ModelSpec};
use crate::data::{DataError, Vocabs, Vocabulary};
use crate::numerics::checkpoint;

pub const MODEL_FORMAT_VERSION: u32 = 1;

const MANIFEST: &str = "manifest.json";
const PARAMS: &str = "params.bin";
const SOURCE_VOCAB: &str = "source.vocab";
const TARGET_VOCAB: &str = "target.vocab";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VocabInfo {
    pub size: usize,
    pub sha256: String,
}

impl VocabInfo {
    fn of(v: &Vocabulary) -> Self {
        Self {
            size: v.len(),
            sha256: v.fingerprint(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format_version: u32,
    pub model: ModelSpec,
    pub source_vocab: VocabInfo,
    pub target_vocab: VocabInfo,
}

fn manifest_error(dir: &Path, message: impl Into<String>) -> ModelError {
    ModelError::Manifest {
        dir: dir.to_path_buf(),
        message: message.into(),
    }
}

pub fn save_model(dir: &Path, model: &Model, vocabs: &Vocabs) -> Result<(), ModelError> {
    std::fs::create_dir_all(dir).map_err(|e| DataError::io(dir, e))?;
    let manifest = Manifest {
        format_version: MODEL_FORMAT_VERSION,
        model: model.spec(),
        source_vocab: VocabInfo::of(&vocabs.source),
        target_vocab: VocabInfo::of(&vocabs.target),
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    let path = dir.join(MANIFEST);
    std::fs::write(&path, json + "\n").map_err(|e| DataError::io(&path, e))?;
    let path = dir.join(PARAMS);
    checkpoint::save(model.store(), &path).map_err(|e| DataError::io(&path, e))?;
    vocabs.source.save(&dir.join(SOURCE_VOCAB))?;
    vocabs.target.save(&dir.join(TARGET_VOCAB))?;
    Ok(())
}

/// Reads only the manifest of a model directory.
pub fn read_manifest(dir: &Path) -> Result<Manifest, ModelError> {
    let path = dir.join(MANIFEST);
    let text = std::fs::read_to_string(&path).map_err(|e| DataError::io(&path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| manifest_error(dir, e.to_string()))?;
    if manifest.format_version != MODEL_FORMAT_VERSION {
        return Err(manifest_error(
            dir,
            format!(
                "format version {} is not supported (expected {MODEL_FORMAT_VERSION})",
                manifest.format_version
            ),
        ));
    }
    Ok(manifest)
}

pub fn load_model(dir: &Path) -> Result<(Model, Vocabs), ModelError> {
    let manifest = read_manifest(dir)?;
    let vocabs = Vocabs {
        source: Vocabulary::load(&dir.join(SOURCE_VOCAB))?,
        target: Vocabulary::load(&dir.join(TARGET_VOCAB))?,
    };
    for (name, info, v) in [
        ("source", &manifest.source_vocab, &vocabs.source),
        ("target", &manifest.target_vocab, &vocabs.target),
    ] {
        if *info != VocabInfo::of(v) {
            return Err(manifest_error(dir, format!("{name} vocabulary does not match the manifest")));
        }
    }
    let mut model = Model::build(&manifest.model, &vocabs, 0)?;
    let params = checkpoint::load(&dir.join(PARAMS))?;
    model.store_mut().load_values(&params)?;
    Ok((model, vocabs))
}
