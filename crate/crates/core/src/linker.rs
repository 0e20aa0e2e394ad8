//! Exact-form linking of lexicon concepts onto treebank tokens.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Sentence;
use crate::lexicon::LexicalEntry;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LinkError {
    #[error("no sentences for language `{0}`")]
    UnknownLanguage(String),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ConceptHit {
    pub sentence_id: String,
    pub token_index: usize,
    pub concept_id: String,
    /// Surface form of the matched token.
    pub matched_form: String,
}

/// Sentences annotated with concept hits, plus lookup indexes. Immutable once
/// built.
#[derive(Debug, Clone, Default)]
pub struct LinkedCorpus {
    sentences: BTreeMap<String, Sentence>,
    hits: Vec<ConceptHit>,
    by_language: BTreeMap<String, Vec<String>>,
    by_concept: BTreeMap<(String, String), Vec<String>>,
    hits_by_sentence: HashMap<String, (usize, usize)>,
    glossary: BTreeMap<String, String>,
    multiword_entries: Vec<LexicalEntry>,
}

impl LinkedCorpus {
    pub fn sentences(&self) -> &BTreeMap<String, Sentence> {
        &self.sentences
    }

    pub fn sentence(&self, id: &str) -> Option<&Sentence> {
        self.sentences.get(id)
    }

    /// All hits ordered by (sentence id, token index, concept id).
    pub fn hits(&self) -> &[ConceptHit] {
        &self.hits
    }

    pub fn hits_for(&self, sentence_id: &str) -> &[ConceptHit] {
        match self.hits_by_sentence.get(sentence_id) {
            Some(&(start, end)) => &self.hits[start..end],
            None => &[],
        }
    }

    pub fn languages(&self) -> impl Iterator<Item = &str> {
        self.by_language.keys().map(String::as_str)
    }

    /// Sentence ids of a language, sorted.
    pub fn sentence_ids(&self, language: &str) -> &[String] {
        self.by_language.get(language).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Distinct sentence ids of `language` containing `concept_id`, sorted.
    pub fn sentences_with_concept(&self, language: &str, concept_id: &str) -> &[String] {
        self.by_concept
            .get(&(language.to_string(), concept_id.to_string()))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// Concept id → gloss, first gloss seen per concept.
    pub fn glossary(&self) -> &BTreeMap<String, String> {
        &self.glossary
    }

    /// Lexicon entries whose form spans several words; these cannot match a
    /// single token.
    pub fn multiword_entries(&self) -> &[LexicalEntry] {
        &self.multiword_entries
    }
}

/// Link every lexicon entry to every token of a same-language sentence with an
/// identical normalized form.
pub fn link(sentences: Vec<Sentence>, entries: &[LexicalEntry]) -> LinkedCorpus {
    let mut index: HashMap<(&str, &str), Vec<&LexicalEntry>> = HashMap::new();
    let mut glossary = BTreeMap::new();
    let mut multiword_entries = Vec::new();
    for entry in entries {
        glossary
            .entry(entry.concept_id.clone())
            .or_insert_with(|| entry.gloss.clone());
        if entry.is_multiword() {
            log::debug!("multiword lexicon form `{}` cannot match a single token", entry.form);
            multiword_entries.push(entry.clone());
        }
        index
            .entry((entry.language.as_str(), entry.norm_form.as_str()))
            .or_default()
            .push(entry);
    }

    let mut hits = Vec::new();
    for sentence in &sentences {
        for token in &sentence.tokens {
            if let Some(matches) = index.get(&(sentence.language.as_str(), token.norm.as_str())) {
                hits.extend(matches.iter().map(|entry| ConceptHit {
                    sentence_id: sentence.sent_id.clone(),
                    token_index: token.index,
                    concept_id: entry.concept_id.clone(),
                    matched_form: token.form.clone(),
                }));
            }
        }
    }
    hits.sort();

    let mut by_language: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for s in &sentences {
        by_language
            .entry(s.language.clone())
            .or_default()
            .push(s.sent_id.clone());
    }
    for ids in by_language.values_mut() {
        ids.sort();
    }

    let sentences: BTreeMap<String, Sentence> = sentences.into_iter().map(|s| (s.sent_id.clone(), s)).collect();

    let mut concept_sets: BTreeMap<(String, String), BTreeSet<String>> = BTreeMap::new();
    let mut hits_by_sentence: HashMap<String, (usize, usize)> = HashMap::new();
    for (i, hit) in hits.iter().enumerate() {
        let language = sentences[&hit.sentence_id].language.clone();
        concept_sets
            .entry((language, hit.concept_id.clone()))
            .or_default()
            .insert(hit.sentence_id.clone());
        hits_by_sentence
            .entry(hit.sentence_id.clone())
            .and_modify(|range| range.1 = i + 1)
            .or_insert((i, i + 1));
    }
    let by_concept = concept_sets
        .into_iter()
        .map(|(k, v)| (k, v.into_iter().collect()))
        .collect();

    LinkedCorpus {
        sentences,
        hits,
        by_language,
        by_concept,
        hits_by_sentence,
        glossary,
        multiword_entries,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub language: String,
    pub has_concept: bool,
    pub count_pt: usize,
    pub count_en: usize,
}

/// Per language, split by whether a sentence carries at least one concept hit:
/// how many sentences have a Portuguese and an English translation. Only
/// groups containing at least one sentence produce a row.
pub fn coverage_stats(corpus: &LinkedCorpus) -> Vec<CoverageRow> {
    let mut rows = Vec::new();
    for (language, ids) in &corpus.by_language {
        for has_concept in [true, false] {
            let group: Vec<&Sentence> = ids
                .iter()
                .filter(|id| !corpus.hits_for(id).is_empty() == has_concept)
                .map(|id| &corpus.sentences[id])
                .collect();
            if group.is_empty() {
                continue;
            }
            let count = |code: &str| group.iter().filter(|s| s.translation(code).is_some()).count();
            rows.push(CoverageRow {
                language: language.clone(),
                has_concept,
                count_pt: count("pt"),
                count_en: count("en"),
            });
        }
    }
    rows
}

/// Render coverage rows as a tab-separated table with a header line.
pub fn coverage_tsv(rows: &[CoverageRow]) -> String {
    let mut out = String::from("language\thas_concept\tpt\ten\n");
    for row in rows {
        let flag = if row.has_concept { "True" } else { "False" };
        let _ = writeln!(out, "{}\t{}\t{}\t{}", row.language, flag, row.count_pt, row.count_en);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConceptCount {
    pub concept_id: String,
    pub sentences: usize,
}

/// Concepts of `language` appearing in strictly more than `min_sentences`
/// distinct sentences, most frequent first.
pub fn candidate_concepts(
    corpus: &LinkedCorpus,
    language: &str,
    min_sentences: usize,
) -> Result<Vec<ConceptCount>, LinkError> {
    if corpus.sentence_ids(language).is_empty() {
        return Err(LinkError::UnknownLanguage(language.to_string()));
    }
    let mut counts: Vec<ConceptCount> = corpus
        .by_concept
        .iter()
        .filter(|((lang, _), _)| lang == language)
        .map(|((_, concept), ids)| ConceptCount {
            concept_id: concept.clone(),
            sentences: ids.len(),
        })
        .filter(|c| c.sentences > min_sentences)
        .collect();
    counts.sort_by(|a, b| {
        b.sentences
            .cmp(&a.sentences)
            .then_with(|| a.concept_id.cmp(&b.concept_id))
    });
    Ok(counts)
}
