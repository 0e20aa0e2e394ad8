//! CoNLL-U treebank reader.
//!
//! Only the token sequence, the original text and the translation comments of
//! each sentence are kept. Dependency columns are checked for shape and then
//! dropped.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::BufRead;
use std::path::{Path, PathBuf};
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::normalize::{norm, squash_whitespace};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{file}:{line}: expected 10 tab-separated columns, found {found}")]
    MalformedLine { file: String, line: usize, found: usize },
    #[error("{file}:{line}: {reason}")]
    BadToken { file: String, line: usize, reason: String },
    #[error("{file}:{line}: duplicate sent_id `{sent_id}`")]
    DuplicateSentId { file: String, line: usize, sent_id: String },
    #[error("{file}:{line}: input is not valid UTF-8")]
    Encoding { file: String, line: usize },
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub index: usize,
    pub form: String,
    pub norm: String,
}

impl Token {
    pub fn new(index: usize, form: &str) -> Self {
        Token {
            index,
            form: form.to_string(),
            norm: norm(form),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranslationText {
    pub lang_code: String,
    pub raw: String,
    pub cleaned: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub sent_id: String,
    pub language: String,
    pub tokens: Vec<Token>,
    pub original_text: String,
    pub translations: BTreeMap<String, TranslationText>,
    pub source_file: String,
}

impl Sentence {
    /// Cleaned translation for a language code, if the sentence has one.
    pub fn translation(&self, lang_code: &str) -> Option<&str> {
        self.translations.get(lang_code).map(|t| t.cleaned.as_str())
    }

    pub fn forms(&self) -> Vec<String> {
        self.tokens.iter().map(|t| t.form.clone()).collect()
    }
}

/// How to interpret one CoNLL-U stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IngestConfig {
    /// Language name assigned to every sentence in the stream.
    pub language: String,
    /// Metadata comment key → translation language code.
    pub translation_keys: BTreeMap<String, String>,
    /// Metadata key holding the original-language sentence.
    pub text_key: String,
    /// Name used in error locations and generated sentence ids.
    pub source_name: String,
}

impl IngestConfig {
    pub fn new(language: impl Into<String>, source_name: impl Into<String>) -> Self {
        IngestConfig {
            language: language.into(),
            translation_keys: default_translation_keys(),
            text_key: "text".to_string(),
            source_name: source_name.into(),
        }
    }
}

pub fn default_translation_keys() -> BTreeMap<String, String> {
    [("text_por", "pt"), ("text_eng", "en"), ("text_en", "en")]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

/// Sentences read from one or more streams plus non-fatal diagnostics.
#[derive(Debug, Clone, Default)]
pub struct Ingested {
    pub sentences: Vec<Sentence>,
    pub warnings: Vec<String>,
}

/// Parenthetical whose content is `<text>, <4-digit year>` optionally followed
/// by `:` and page numbers or page ranges.
static CITATION: LazyLock<Regex> = LazyLock::new(|| {
    let pages = r"[0-9]+(?:\s*[-–]\s*[0-9]+)?";
    Regex::new(&format!(
        r"\([^()]+?,\s*[0-9]{{4}}(?:\s*:\s*{pages}(?:\s*,\s*{pages})*)?\s*\)"
    ))
    .expect("citation pattern compiles")
});

fn strip_citations(text: &str) -> String {
    let mut current = text.to_string();
    loop {
        let next = CITATION.replace_all(&current, " ").into_owned();
        if next == current {
            return current;
        }
        current = next;
    }
}

/// Remove bibliographic citations from a translation, collapse whitespace and
/// case-fold.
///
/// `"ele colhe cacau (harrison, 2013:12)"` becomes `"ele colhe cacau"`;
/// parentheticals without a year, such as `"(ver nota)"`, are kept.
pub fn clean_translation(raw: &str) -> String {
    let mut current = raw.to_string();
    // Removal can expose a new citation or leave a combining mark next to a
    // base character, so iterate to a fixed point.
    for _ in 0..16 {
        let next = squash_whitespace(&norm(&strip_citations(&current)));
        if next == current {
            break;
        }
        current = next;
    }
    current
}

struct Block {
    start_line: usize,
    sent_id: Option<String>,
    metadata: Vec<(String, String)>,
    forms: Vec<String>,
}

impl Block {
    fn new(start_line: usize) -> Self {
        Block {
            start_line,
            sent_id: None,
            metadata: Vec::new(),
            forms: Vec::new(),
        }
    }

    fn is_empty(&self) -> bool {
        self.sent_id.is_none() && self.metadata.is_empty() && self.forms.is_empty()
    }
}

/// Parse a CoNLL-U stream into sentences.
///
/// Multiword-token ranges (`1-2`) and empty nodes (`1.1`) are skipped. A block
/// without `# sent_id` gets the id `<source>:<block ordinal>` and a warning.
pub fn parse_conllu<R: BufRead>(input: R, cfg: &IngestConfig) -> Result<Ingested, CorpusError> {
    let file = cfg.source_name.as_str();
    let mut out = Ingested::default();
    let mut seen: HashSet<String> = HashSet::new();
    let mut block = Block::new(1);
    let mut ordinal = 0usize;
    let mut line_no = 0usize;

    for line in input.split(b'\n') {
        line_no += 1;
        let line = line.map_err(|source| CorpusError::Io {
            path: file.to_string(),
            source,
        })?;
        let line = String::from_utf8(line).map_err(|_| CorpusError::Encoding {
            file: file.to_string(),
            line: line_no,
        })?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        let line = if line_no == 1 {
            line.strip_prefix('\u{feff}').unwrap_or(line)
        } else {
            line
        };

        if line.trim().is_empty() {
            if !block.is_empty() {
                ordinal += 1;
                finish_block(block, ordinal, cfg, &mut seen, &mut out)?;
            }
            block = Block::new(line_no + 1);
            continue;
        }

        if let Some(comment) = line.strip_prefix('#') {
            if let Some((key, value)) = comment.split_once('=') {
                let key = key.trim();
                let value = value.trim();
                if key == "sent_id" {
                    block.sent_id = Some(value.to_string());
                } else {
                    block.metadata.push((key.to_string(), value.to_string()));
                }
            }
            continue;
        }

        let columns: Vec<&str> = line.split('\t').collect();
        if columns.len() != 10 {
            return Err(CorpusError::MalformedLine {
                file: file.to_string(),
                line: line_no,
                found: columns.len(),
            });
        }
        let id = columns[0].trim();
        if id.contains('-') || id.contains('.') {
            continue;
        }
        if id.parse::<u32>().is_err() {
            return Err(CorpusError::BadToken {
                file: file.to_string(),
                line: line_no,
                reason: format!("token id `{id}` is not an integer"),
            });
        }
        let form = columns[1].trim();
        if form.is_empty() {
            return Err(CorpusError::BadToken {
                file: file.to_string(),
                line: line_no,
                reason: "empty FORM column".to_string(),
            });
        }
        // HEAD is read leniently: "_" and non-numeric values are tolerated.
        let _head = columns[6].trim().parse::<u32>().ok();
        block.forms.push(form.to_string());
    }

    if !block.is_empty() {
        ordinal += 1;
        finish_block(block, ordinal, cfg, &mut seen, &mut out)?;
    }
    Ok(out)
}

fn finish_block(
    block: Block,
    ordinal: usize,
    cfg: &IngestConfig,
    seen: &mut HashSet<String>,
    out: &mut Ingested,
) -> Result<(), CorpusError> {
    let file = cfg.source_name.as_str();
    let sent_id = match block.sent_id {
        Some(id) => id,
        None => {
            let id = format!("{file}:{ordinal}");
            out.warnings.push(format!(
                "{file}:{}: block without sent_id, using `{id}`",
                block.start_line
            ));
            id
        }
    };
    if block.forms.is_empty() {
        out.warnings.push(format!(
            "{file}:{}: sentence `{sent_id}` has no tokens, skipped",
            block.start_line
        ));
        return Ok(());
    }
    if !seen.insert(sent_id.clone()) {
        return Err(CorpusError::DuplicateSentId {
            file: file.to_string(),
            line: block.start_line,
            sent_id,
        });
    }

    let mut original_text = None;
    let mut translations = BTreeMap::new();
    for (key, value) in &block.metadata {
        if *key == cfg.text_key {
            original_text.get_or_insert_with(|| value.clone());
        } else if let Some(code) = cfg.translation_keys.get(key) {
            if translations.contains_key(code) {
                continue;
            }
            let cleaned = clean_translation(value);
            if cleaned.is_empty() {
                out.warnings.push(format!(
                    "{file}: sentence `{sent_id}`: `{key}` is empty after cleaning, ignored"
                ));
                continue;
            }
            translations.insert(
                code.clone(),
                TranslationText {
                    lang_code: code.clone(),
                    raw: value.clone(),
                    cleaned,
                },
            );
        }
    }

    let tokens: Vec<Token> = block.forms.iter().enumerate().map(|(i, f)| Token::new(i, f)).collect();
    let original_text = original_text.unwrap_or_else(|| block.forms.join(" "));

    out.sentences.push(Sentence {
        sent_id,
        language: cfg.language.clone(),
        tokens,
        original_text,
        translations,
        source_file: file.to_string(),
    });
    Ok(())
}

/// Treebank-directory level settings: which language each file holds and
/// which metadata keys carry translations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TreebankConfig {
    /// File stem, or the ISO code before the first `_` of the stem, mapped to
    /// a language name. Consulted before the built-in ISO table.
    pub languages: BTreeMap<String, String>,
    pub default_language: Option<String>,
    pub translation_keys: BTreeMap<String, String>,
    pub text_key: String,
}

impl Default for TreebankConfig {
    fn default() -> Self {
        TreebankConfig {
            languages: BTreeMap::new(),
            default_language: None,
            translation_keys: default_translation_keys(),
            text_key: "text".to_string(),
        }
    }
}

/// ISO 639-3 codes used as file prefixes by the Tupian treebank.
const KNOWN_LANGUAGES: &[(&str, &str)] = &[
    ("aqz", "Akuntsu"),
    ("arr", "Karo"),
    ("eme", "Teko"),
    ("gub", "Guajajara"),
    ("mpu", "Makurap"),
    ("myu", "Munduruku"),
    ("tpn", "Tupinamba"),
    ("urb", "Kaapor"),
];

impl TreebankConfig {
    pub fn language_for(&self, path: &Path) -> String {
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let prefix = stem.split('_').next().unwrap_or(&stem).to_string();
        if let Some(lang) = self.languages.get(&stem).or_else(|| self.languages.get(&prefix)) {
            return lang.clone();
        }
        if let Some((_, lang)) = KNOWN_LANGUAGES.iter().find(|(code, _)| *code == prefix) {
            return lang.to_string();
        }
        self.default_language.clone().unwrap_or(stem)
    }

    pub fn ingest_config_for(&self, path: &Path) -> IngestConfig {
        IngestConfig {
            language: self.language_for(path),
            translation_keys: self.translation_keys.clone(),
            text_key: self.text_key.clone(),
            source_name: path
                .file_name()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| path.display().to_string()),
        }
    }
}

/// `.conllu` files directly under `dir`, sorted by name. A plain file path is
/// returned as-is.
pub fn treebank_files(dir: &Path) -> Result<Vec<PathBuf>, CorpusError> {
    let io_err = |source| CorpusError::Io {
        path: dir.display().to_string(),
        source,
    };
    if dir.is_file() {
        return Ok(vec![dir.to_path_buf()]);
    }
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err)? {
        let path = entry.map_err(io_err)?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == "conllu") {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Read every treebank file under `dir`. Sentence ids must be unique across
/// the whole load.
pub fn read_treebank(dir: &Path, cfg: &TreebankConfig) -> Result<Ingested, CorpusError> {
    let mut all = Ingested::default();
    let mut seen = HashSet::new();
    for path in treebank_files(dir)? {
        let ingest = cfg.ingest_config_for(&path);
        let file = fs::File::open(&path).map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let parsed = parse_conllu(std::io::BufReader::new(file), &ingest)?;
        for s in &parsed.sentences {
            if !seen.insert(s.sent_id.clone()) {
                return Err(CorpusError::DuplicateSentId {
                    file: ingest.source_name.clone(),
                    line: 0,
                    sent_id: s.sent_id.clone(),
                });
            }
        }
        all.sentences.extend(parsed.sentences);
        all.warnings.extend(parsed.warnings);
    }
    Ok(all)
}
