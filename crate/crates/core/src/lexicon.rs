//! Delimited lexical-database reader producing (language, form, concept)
//! entries.

use std::collections::HashSet;
use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::normalize::norm;

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("column `{0}` not found in lexicon header")]
    MissingColumn(String),
    #[error("lexicon config: {0}")]
    Config(String),
    #[error("lexicon row {row}: {source}")]
    Csv {
        row: usize,
        #[source]
        source: csv::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LexicalEntry {
    pub language: String,
    pub form: String,
    pub norm_form: String,
    pub concept_id: String,
    pub gloss: String,
}

impl LexicalEntry {
    pub fn new(language: &str, form: &str, concept_id: &str, gloss: &str) -> Self {
        LexicalEntry {
            language: language.to_string(),
            form: form.to_string(),
            norm_form: norm(form),
            concept_id: concept_id.to_string(),
            gloss: gloss.to_string(),
        }
    }

    pub fn is_multiword(&self) -> bool {
        self.norm_form.split_whitespace().nth(1).is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LexiconConfig {
    pub delimiter: char,
    /// Column holding the language name. When absent, `language` must be set.
    pub language_column: Option<String>,
    /// Fixed language for single-language tables.
    pub language: Option<String>,
    pub form_column: String,
    pub concept_column: String,
    pub gloss_column: Option<String>,
    /// Splits one form cell into several variants, e.g. `","`.
    pub form_separator: Option<String>,
}

impl Default for LexiconConfig {
    fn default() -> Self {
        LexiconConfig {
            delimiter: '\t',
            language_column: Some("language".to_string()),
            language: None,
            form_column: "form".to_string(),
            concept_column: "concept".to_string(),
            gloss_column: Some("gloss".to_string()),
            form_separator: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LexiconLoad {
    pub entries: Vec<LexicalEntry>,
    pub data_rows: usize,
    /// Rows dropped for an empty form, concept or language cell.
    pub skipped_rows: usize,
    pub duplicates: usize,
}

impl LexiconLoad {
    pub fn multiword_forms(&self) -> impl Iterator<Item = &LexicalEntry> {
        self.entries.iter().filter(|e| e.is_multiword())
    }
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize, LexiconError> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| LexiconError::MissingColumn(name.to_string()))
}

/// Parse a lexicon table. A table with only a header row yields no entries.
pub fn parse_lexicon<R: Read>(input: R, cfg: &LexiconConfig) -> Result<LexiconLoad, LexiconError> {
    if !cfg.delimiter.is_ascii() {
        return Err(LexiconError::Config(format!(
            "delimiter {:?} must be a single ASCII character",
            cfg.delimiter
        )));
    }
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(cfg.delimiter as u8)
        .flexible(true)
        .from_reader(input);
    let headers = reader
        .headers()
        .map_err(|source| LexiconError::Csv { row: 1, source })?
        .clone();
    let mut load = LexiconLoad::default();
    if headers.is_empty() {
        return Ok(load);
    }

    let language_col = match (&cfg.language_column, &cfg.language) {
        (Some(name), _) => Some(column(&headers, name)?),
        (None, Some(_)) => None,
        (None, None) => {
            return Err(LexiconError::Config(
                "either language_column or language must be set".to_string(),
            ))
        }
    };
    let form_col = column(&headers, &cfg.form_column)?;
    let concept_col = column(&headers, &cfg.concept_column)?;
    // glosses are optional; without the column the concept id stands in
    let gloss_col = cfg.gloss_column.as_deref().and_then(|name| column(&headers, name).ok());

    let mut seen = HashSet::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|source| LexiconError::Csv { row: i + 2, source })?;
        load.data_rows += 1;
        let cell = |idx: usize| record.get(idx).unwrap_or("").trim();

        let language = match language_col {
            Some(idx) => cell(idx).to_string(),
            None => cfg.language.clone().unwrap_or_default(),
        };
        let form_cell = cell(form_col);
        let concept_id = cell(concept_col);
        if language.is_empty() || form_cell.is_empty() || concept_id.is_empty() {
            load.skipped_rows += 1;
            continue;
        }
        let gloss = gloss_col.map(cell).filter(|g| !g.is_empty()).unwrap_or(concept_id);

        let variants: Vec<&str> = match cfg.form_separator.as_deref() {
            Some(sep) if !sep.is_empty() => form_cell.split(sep).map(str::trim).filter(|v| !v.is_empty()).collect(),
            _ => vec![form_cell],
        };
        for form in variants {
            let entry = LexicalEntry::new(&language, form, concept_id, gloss);
            let key = (
                entry.language.clone(),
                entry.norm_form.clone(),
                entry.concept_id.clone(),
            );
            if seen.insert(key) {
                load.entries.push(entry);
            } else {
                load.duplicates += 1;
            }
        }
    }
    Ok(load)
}
