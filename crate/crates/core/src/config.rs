//! The declarative TOML document read by the command-line tool.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical::sha256_hex;
use crate::corpus::{read_treebank, treebank_files, CorpusError, TreebankConfig};
use crate::course::{CourseConfig, InputDigest};
use crate::lexicon::{parse_lexicon, LexiconConfig, LexiconError, LexiconLoad};
use crate::linker::{link, LinkedCorpus};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Toml {
        path: String,
        #[source]
        source: toml::de::Error,
    },
    #[error("{0}: no [course] table")]
    NoCourse(String),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub treebank: TreebankConfig,
    pub lexicon: LexiconConfig,
    pub course: Option<CourseConfig>,
}

impl Config {
    pub fn from_toml(text: &str, origin: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|source| ConfigError::Toml {
            path: origin.to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text, &path.display().to_string())
    }

    pub fn course(&self, origin: &str) -> Result<&CourseConfig, ConfigError> {
        self.course
            .as_ref()
            .ok_or_else(|| ConfigError::NoCourse(origin.to_string()))
    }
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Lexicon(#[from] LexiconError),
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// A linked corpus with the diagnostics gathered while loading it.
#[derive(Debug)]
pub struct Loaded {
    pub corpus: LinkedCorpus,
    pub lexicon: LexiconLoad,
    pub warnings: Vec<String>,
    pub inputs: Vec<InputDigest>,
}

/// Read the treebank directory and lexicon file and link them.
pub fn load_inputs(treebank: &Path, lexicon: &Path, cfg: &Config) -> Result<Loaded, LoadError> {
    let ingested = read_treebank(treebank, &cfg.treebank)?;
    let lex_bytes = fs::read(lexicon).map_err(|source| LoadError::Io {
        path: lexicon.display().to_string(),
        source,
    })?;
    let lexicon_load = parse_lexicon(lex_bytes.as_slice(), &cfg.lexicon)?;

    let mut inputs = Vec::new();
    let files: Vec<PathBuf> = treebank_files(treebank)?;
    for path in files {
        let bytes = fs::read(&path).map_err(|source| LoadError::Io {
            path: path.display().to_string(),
            source,
        })?;
        inputs.push(InputDigest {
            name: format!("treebank/{}", file_name(&path)),
            sha256: sha256_hex(&bytes),
        });
    }
    inputs.push(InputDigest {
        name: format!("lexicon/{}", file_name(lexicon)),
        sha256: sha256_hex(&lex_bytes),
    });

    let mut warnings = ingested.warnings;
    if lexicon_load.skipped_rows > 0 {
        warnings.push(format!(
            "lexicon: skipped {} rows with an empty language, form or concept",
            lexicon_load.skipped_rows
        ));
    }
    let corpus = link(ingested.sentences, &lexicon_load.entries);
    for entry in corpus.multiword_entries() {
        warnings.push(format!(
            "lexicon: multiword form `{}` ({}) cannot match a single token",
            entry.form, entry.concept_id
        ));
    }
    Ok(Loaded {
        corpus,
        lexicon: lexicon_load,
        warnings,
        inputs,
    })
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}
