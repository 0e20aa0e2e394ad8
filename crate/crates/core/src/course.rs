//! Course pack construction: section sentence selection, the three exercise
//! generators, lesson assembly and the seeded end-to-end build.
//!
//! All randomness is derived from one root seed. Every random stream is keyed
//! by the section subject, a stream name and an ordinal (see
//! [`derive_seed`]), so a section's content depends only on the root seed,
//! the corpus and that section's own spec.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use rand::seq::{index, IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Sentence;
use crate::linker::{ConceptHit, LinkedCorpus};
use crate::normalize::norm;

pub const SCHEMA_VERSION: u32 = 1;
/// Translation language used for prompts and answers.
pub const PROMPT_LANG: &str = "pt";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BuildError {
    #[error("invalid course config: {0}")]
    ConfigInvalid(String),
    #[error("section `{subject}`: no sentences contain its concepts and have a Portuguese translation")]
    EmptySection { subject: String },
    #[error("sentence `{sentence_id}`: needs {needed} distractors, only {available} available")]
    InsufficientDistractorPool {
        sentence_id: String,
        needed: usize,
        available: usize,
    },
    #[error("section `{subject}` has {concepts} concepts, fewer than {n_options} options")]
    SectionTooSmall {
        subject: String,
        concepts: usize,
        n_options: usize,
    },
    #[error("section `{subject}`: lesson quota needs {needed} {kind} exercises, pool has {available}")]
    InsufficientPool {
        subject: String,
        kind: ExerciseKind,
        needed: usize,
        available: usize,
    },
    #[error("sentence `{0}` has no Portuguese translation")]
    MissingTranslation(String),
    #[error("section `{subject}`: {source}")]
    InSection {
        subject: String,
        #[source]
        source: Box<BuildError>,
    },
}

impl BuildError {
    /// True when the inputs are well formed but cannot yield the requested
    /// course, as opposed to a malformed config.
    pub fn is_infeasible(&self) -> bool {
        match self {
            BuildError::ConfigInvalid(_) => false,
            BuildError::InSection { source, .. } => source.is_infeasible(),
            _ => true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ExerciseKind {
    TS1,
    TS2,
    CM,
}

impl ExerciseKind {
    pub const ALL: [ExerciseKind; 3] = [ExerciseKind::TS1, ExerciseKind::TS2, ExerciseKind::CM];

    pub fn as_str(self) -> &'static str {
        match self {
            ExerciseKind::TS1 => "TS1",
            ExerciseKind::TS2 => "TS2",
            ExerciseKind::CM => "CM",
        }
    }
}

impl fmt::Display for ExerciseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub fn default_quota() -> BTreeMap<ExerciseKind, usize> {
    BTreeMap::from([(ExerciseKind::TS1, 1), (ExerciseKind::TS2, 1), (ExerciseKind::CM, 2)])
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SectionSpec {
    pub subject: String,
    #[serde(alias = "concepts")]
    pub concept_ids: BTreeSet<String>,
    pub lessons: usize,
    #[serde(default = "default_quota", alias = "quota")]
    pub lesson_quota: BTreeMap<ExerciseKind, usize>,
}

impl SectionSpec {
    pub fn lesson_size(&self) -> usize {
        self.lesson_quota.values().sum()
    }

    fn check(&self) -> Result<(), BuildError> {
        let invalid = |msg: String| Err(BuildError::ConfigInvalid(msg));
        if self.subject.trim().is_empty() {
            return invalid("section subject is empty".into());
        }
        if self.concept_ids.is_empty() {
            return invalid(format!("section `{}` lists no concepts", self.subject));
        }
        if self.lessons == 0 {
            return invalid(format!("section `{}` has zero lessons", self.subject));
        }
        if self.lesson_size() == 0 {
            return invalid(format!("section `{}` has an all-zero lesson quota", self.subject));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Answer {
    Tokens(Vec<String>),
    Concept(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exercise {
    pub id: String,
    pub kind: ExerciseKind,
    /// Portuguese sentence (TS1), target-language sentence (TS2) or the
    /// target-language word (CM).
    pub prompt: String,
    pub answer: Answer,
    /// Shuffled token bank (TS1/TS2) or shuffled concept options (CM).
    pub bank: Vec<String>,
    pub source_sentence_id: String,
    pub concept_ids: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lesson {
    pub index: usize,
    pub exercises: Vec<Exercise>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Section {
    pub spec: SectionSpec,
    pub lessons: Vec<Lesson>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub name: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub tool_version: String,
    pub seed: u64,
    pub inputs: Vec<InputDigest>,
    /// Where TS distractor sentences are drawn from.
    pub distractor_scope: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildSettings {
    pub k_distractors: usize,
    pub n_options: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoursePack {
    pub schema_version: u32,
    pub course_id: String,
    pub language: String,
    pub seed: u64,
    pub settings: BuildSettings,
    /// Concept id → human-readable gloss for every concept in the sections.
    pub glossary: BTreeMap<String, String>,
    pub sections: Vec<Section>,
    pub provenance: Provenance,
}

impl CoursePack {
    pub fn lesson(&self, section: usize, lesson: usize) -> Option<&Lesson> {
        self.sections.get(section)?.lessons.get(lesson)
    }

    /// Number of lessons in each section, in course order.
    pub fn shape(&self) -> Vec<usize> {
        self.sections.iter().map(|s| s.lessons.len()).collect()
    }

    pub fn exercises(&self) -> impl Iterator<Item = &Exercise> {
        self.sections
            .iter()
            .flat_map(|s| s.lessons.iter())
            .flat_map(|l| l.exercises.iter())
    }

    pub fn find_exercise(&self, id: &str) -> Option<&Exercise> {
        self.exercises().find(|e| e.id == id)
    }
}

fn default_k() -> usize {
    4
}

fn default_n() -> usize {
    4
}

fn default_sample() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CourseConfig {
    #[serde(alias = "id")]
    pub course_id: String,
    pub language: String,
    #[serde(default = "default_k")]
    pub k_distractors: usize,
    #[serde(default = "default_n")]
    pub n_options: usize,
    /// Initial number of other sentences sampled for a distractor pool.
    #[serde(default = "default_sample")]
    pub distractor_sample: usize,
    #[serde(default)]
    pub sections: Vec<SectionSpec>,
}

/// FNV-1a, 64-bit. Stable across platforms and releases, unlike std hashers.
pub fn stable_hash(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Seed for one random stream: the root seed XOR a stable hash of
/// `subject \x1f stream \x1f ordinal`.
pub fn derive_seed(root: u64, subject: &str, stream: &str, ordinal: u64) -> u64 {
    let key = format!("{subject}\u{1f}{stream}\u{1f}{ordinal}");
    root ^ stable_hash(key.as_bytes())
}

pub fn stream_rng(root: u64, subject: &str, stream: &str, ordinal: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(root, subject, stream, ordinal))
}

/// Sentences of `language` that carry at least one of the section's concepts
/// and have a Portuguese translation, ordered by sentence id.
pub fn select_section_sentences<'a>(
    corpus: &'a LinkedCorpus,
    spec: &SectionSpec,
    language: &str,
) -> Result<Vec<&'a Sentence>, BuildError> {
    if spec.concept_ids.is_empty() {
        return Err(BuildError::ConfigInvalid(format!(
            "section `{}` lists no concepts",
            spec.subject
        )));
    }
    let ids: BTreeSet<&String> = spec
        .concept_ids
        .iter()
        .flat_map(|c| corpus.sentences_with_concept(language, c))
        .collect();
    let selected: Vec<&Sentence> = ids
        .into_iter()
        .filter_map(|id| corpus.sentence(id))
        .filter(|s| s.translation(PROMPT_LANG).is_some())
        .collect();
    if selected.is_empty() {
        return Err(BuildError::EmptySection {
            subject: spec.subject.clone(),
        });
    }
    Ok(selected)
}

fn pt_tokens(sentence: &Sentence) -> Option<Vec<String>> {
    sentence
        .translation(PROMPT_LANG)
        .map(|t| t.split_whitespace().map(str::to_string).collect())
}

/// Draw `k` distractor tokens from the shuffled, de-duplicated token pool of a
/// random sample of other sentences. Tokens whose normalized form occurs in
/// the answer are excluded. The sample doubles until it covers every other
/// sentence.
fn draw_distractors<R, F>(
    sentence: &Sentence,
    corpus: &LinkedCorpus,
    rng: &mut R,
    k: usize,
    initial_sample: usize,
    answer: &[String],
    tokens_of: F,
) -> Result<Vec<String>, BuildError>
where
    R: Rng + ?Sized,
    F: Fn(&Sentence) -> Vec<String>,
{
    if k == 0 {
        return Ok(Vec::new());
    }
    let others: Vec<&Sentence> = corpus
        .sentence_ids(&sentence.language)
        .iter()
        .filter(|id| **id != sentence.sent_id)
        .filter_map(|id| corpus.sentence(id))
        .collect();
    let excluded: HashSet<String> = answer.iter().map(|t| norm(t)).collect();
    let mut sample_size = initial_sample.max(1).min(others.len());
    loop {
        let mut pool = Vec::new();
        let mut seen = HashSet::new();
        for other in others.choose_multiple(rng, sample_size) {
            for token in tokens_of(other) {
                let key = norm(&token);
                if !excluded.contains(&key) && seen.insert(key) {
                    pool.push(token);
                }
            }
        }
        pool.shuffle(rng);
        if pool.len() >= k {
            pool.truncate(k);
            return Ok(pool);
        }
        if sample_size >= others.len() {
            return Err(BuildError::InsufficientDistractorPool {
                sentence_id: sentence.sent_id.clone(),
                needed: k,
                available: pool.len(),
            });
        }
        sample_size = (sample_size * 2).min(others.len());
    }
}

fn sentence_concepts(corpus: &LinkedCorpus, sentence: &Sentence) -> BTreeSet<String> {
    corpus
        .hits_for(&sentence.sent_id)
        .iter()
        .map(|h| h.concept_id.clone())
        .collect()
}

fn shuffled_bank<R: Rng + ?Sized>(answer: &[String], distractors: Vec<String>, rng: &mut R) -> Vec<String> {
    let mut bank: Vec<String> = answer.iter().cloned().chain(distractors).collect();
    bank.shuffle(rng);
    // Learners see the bank, so avoid handing them the answer already in order.
    let mut tries = 0;
    while answer.len() > 1 && tries < 16 && contains_run(&bank, answer) {
        bank.shuffle(rng);
        tries += 1;
    }
    bank
}

fn contains_run(haystack: &[String], run: &[String]) -> bool {
    haystack.windows(run.len()).any(|w| w == run)
}

/// Translate-to-target exercise: Portuguese prompt, target tokens to order.
pub fn gen_ts1<R: Rng + ?Sized>(
    sentence: &Sentence,
    corpus: &LinkedCorpus,
    rng: &mut R,
    k_distractors: usize,
) -> Result<Exercise, BuildError> {
    gen_ts1_sampled(sentence, corpus, rng, k_distractors, default_sample())
}

fn gen_ts1_sampled<R: Rng + ?Sized>(
    sentence: &Sentence,
    corpus: &LinkedCorpus,
    rng: &mut R,
    k_distractors: usize,
    sample: usize,
) -> Result<Exercise, BuildError> {
    let prompt = sentence
        .translation(PROMPT_LANG)
        .ok_or_else(|| BuildError::MissingTranslation(sentence.sent_id.clone()))?
        .to_string();
    let answer = sentence.forms();
    let distractors = draw_distractors(sentence, corpus, rng, k_distractors, sample, &answer, |s| s.forms())?;
    Ok(Exercise {
        id: format!("ts1:{}", sentence.sent_id),
        kind: ExerciseKind::TS1,
        prompt,
        bank: shuffled_bank(&answer, distractors, rng),
        answer: Answer::Tokens(answer),
        source_sentence_id: sentence.sent_id.clone(),
        concept_ids: sentence_concepts(corpus, sentence),
    })
}

/// Translate-from-target exercise: target sentence prompt, Portuguese tokens
/// to order.
pub fn gen_ts2<R: Rng + ?Sized>(
    sentence: &Sentence,
    corpus: &LinkedCorpus,
    rng: &mut R,
    k_distractors: usize,
) -> Result<Exercise, BuildError> {
    gen_ts2_sampled(sentence, corpus, rng, k_distractors, default_sample())
}

fn gen_ts2_sampled<R: Rng + ?Sized>(
    sentence: &Sentence,
    corpus: &LinkedCorpus,
    rng: &mut R,
    k_distractors: usize,
    sample: usize,
) -> Result<Exercise, BuildError> {
    let answer = pt_tokens(sentence).ok_or_else(|| BuildError::MissingTranslation(sentence.sent_id.clone()))?;
    let distractors = draw_distractors(sentence, corpus, rng, k_distractors, sample, &answer, |s| {
        pt_tokens(s).unwrap_or_default()
    })?;
    Ok(Exercise {
        id: format!("ts2:{}", sentence.sent_id),
        kind: ExerciseKind::TS2,
        prompt: sentence.forms().join(" "),
        bank: shuffled_bank(&answer, distractors, rng),
        answer: Answer::Tokens(answer),
        source_sentence_id: sentence.sent_id.clone(),
        concept_ids: sentence_concepts(corpus, sentence),
    })
}

/// Concept-match exercise: the matched word, the hit's concept and
/// `n_options - 1` other concepts from the section, shuffled.
pub fn gen_cm<R: Rng + ?Sized>(
    hit: &ConceptHit,
    spec: &SectionSpec,
    rng: &mut R,
    n_options: usize,
) -> Result<Exercise, BuildError> {
    if n_options < 2 {
        return Err(BuildError::ConfigInvalid(format!(
            "n_options must be at least 2, got {n_options}"
        )));
    }
    if spec.concept_ids.len() < n_options {
        return Err(BuildError::SectionTooSmall {
            subject: spec.subject.clone(),
            concepts: spec.concept_ids.len(),
            n_options,
        });
    }
    if !spec.concept_ids.contains(&hit.concept_id) {
        return Err(BuildError::ConfigInvalid(format!(
            "concept `{}` is not part of section `{}`",
            hit.concept_id, spec.subject
        )));
    }
    let others: Vec<&String> = spec.concept_ids.iter().filter(|c| **c != hit.concept_id).collect();
    let mut options: Vec<String> = others
        .choose_multiple(rng, n_options - 1)
        .map(|c| (*c).clone())
        .collect();
    options.push(hit.concept_id.clone());
    options.shuffle(rng);
    Ok(Exercise {
        // The id must not reveal the answer: it is sent to learners.
        id: format!("cm:{}:{}", hit.sentence_id, hit.token_index),
        kind: ExerciseKind::CM,
        prompt: hit.matched_form.clone(),
        answer: Answer::Concept(hit.concept_id.clone()),
        bank: options,
        source_sentence_id: hit.sentence_id.clone(),
        concept_ids: BTreeSet::from([hit.concept_id.clone()]),
    })
}

/// Fill `spec.lessons` lessons from the exercise pool. Within a lesson no
/// exercise repeats; across lessons exercises may be reused.
pub fn assemble_lessons<R: Rng + ?Sized>(
    pool: &BTreeMap<ExerciseKind, Vec<Exercise>>,
    spec: &SectionSpec,
    rng: &mut R,
) -> Result<Vec<Lesson>, BuildError> {
    for (&kind, &needed) in &spec.lesson_quota {
        let available = pool.get(&kind).map_or(0, Vec::len);
        if available < needed {
            return Err(BuildError::InsufficientPool {
                subject: spec.subject.clone(),
                kind,
                needed,
                available,
            });
        }
    }
    let mut lessons = Vec::with_capacity(spec.lessons);
    for lesson_index in 0..spec.lessons {
        let mut exercises = Vec::with_capacity(spec.lesson_size());
        for (&kind, &needed) in &spec.lesson_quota {
            if needed == 0 {
                continue;
            }
            let candidates = &pool[&kind];
            let mut picked = index::sample(rng, candidates.len(), needed).into_vec();
            picked.sort_unstable();
            exercises.extend(picked.into_iter().map(|i| candidates[i].clone()));
        }
        exercises.shuffle(rng);
        lessons.push(Lesson {
            index: lesson_index,
            exercises,
        });
    }
    Ok(lessons)
}

fn in_section(subject: &str, err: BuildError) -> BuildError {
    match err {
        BuildError::ConfigInvalid(_) | BuildError::InSection { .. } => err,
        BuildError::EmptySection { .. } | BuildError::SectionTooSmall { .. } | BuildError::InsufficientPool { .. } => {
            err
        }
        other => BuildError::InSection {
            subject: subject.to_string(),
            source: Box::new(other),
        },
    }
}

/// Every exercise a section can draw from, grouped by kind. Kinds with a zero
/// quota are not generated.
pub fn section_pool(
    corpus: &LinkedCorpus,
    cfg: &CourseConfig,
    spec: &SectionSpec,
    seed: u64,
) -> Result<BTreeMap<ExerciseKind, Vec<Exercise>>, BuildError> {
    let subject = spec.subject.as_str();
    let wrap = |e| in_section(subject, e);
    let sentences = select_section_sentences(corpus, spec, &cfg.language)?;
    let wanted = |kind| spec.lesson_quota.get(&kind).copied().unwrap_or(0) > 0;
    let mut pool: BTreeMap<ExerciseKind, Vec<Exercise>> = BTreeMap::new();

    if wanted(ExerciseKind::TS1) {
        let mut out = Vec::with_capacity(sentences.len());
        for (ordinal, sentence) in sentences.iter().enumerate() {
            let mut rng = stream_rng(seed, subject, "TS1", ordinal as u64);
            let mut ex =
                gen_ts1_sampled(sentence, corpus, &mut rng, cfg.k_distractors, cfg.distractor_sample).map_err(wrap)?;
            ex.id = format!("{subject}:{}", ex.id);
            out.push(ex);
        }
        pool.insert(ExerciseKind::TS1, out);
    }
    if wanted(ExerciseKind::TS2) {
        let mut out = Vec::with_capacity(sentences.len());
        for (ordinal, sentence) in sentences.iter().enumerate() {
            let mut rng = stream_rng(seed, subject, "TS2", ordinal as u64);
            let mut ex =
                gen_ts2_sampled(sentence, corpus, &mut rng, cfg.k_distractors, cfg.distractor_sample).map_err(wrap)?;
            ex.id = format!("{subject}:{}", ex.id);
            out.push(ex);
        }
        pool.insert(ExerciseKind::TS2, out);
    }
    if wanted(ExerciseKind::CM) {
        // One exercise per distinct (word, concept) pair, first occurrence wins.
        let mut seen = HashSet::new();
        let mut id_uses: HashMap<String, usize> = HashMap::new();
        let mut out = Vec::new();
        let hits = sentences
            .iter()
            .flat_map(|s| corpus.hits_for(&s.sent_id))
            .filter(|h| spec.concept_ids.contains(&h.concept_id));
        for hit in hits {
            if !seen.insert((norm(&hit.matched_form), hit.concept_id.clone())) {
                continue;
            }
            let mut rng = stream_rng(seed, subject, "CM", out.len() as u64);
            let mut ex = gen_cm(hit, spec, &mut rng, cfg.n_options).map_err(wrap)?;
            // a token linked to several section concepts yields several exercises
            let uses = id_uses.entry(ex.id.clone()).or_default();
            *uses += 1;
            ex.id = match *uses {
                1 => format!("{subject}:{}", ex.id),
                n => format!("{subject}:{}:{n}", ex.id),
            };
            out.push(ex);
        }
        pool.insert(ExerciseKind::CM, out);
    }
    Ok(pool)
}

/// Build the full course pack. Provenance input digests are left empty for
/// the caller to fill in.
pub fn build_course(corpus: &LinkedCorpus, cfg: &CourseConfig, seed: u64) -> Result<CoursePack, BuildError> {
    if cfg.sections.is_empty() {
        return Err(BuildError::ConfigInvalid("no sections configured".into()));
    }
    if cfg.course_id.trim().is_empty() {
        return Err(BuildError::ConfigInvalid("course id is empty".into()));
    }
    let mut subjects = HashSet::new();
    for spec in &cfg.sections {
        spec.check()?;
        if !subjects.insert(spec.subject.as_str()) {
            return Err(BuildError::ConfigInvalid(format!(
                "section subject `{}` appears twice",
                spec.subject
            )));
        }
    }

    let mut sections = Vec::with_capacity(cfg.sections.len());
    for spec in &cfg.sections {
        let pool = section_pool(corpus, cfg, spec, seed)?;
        let mut rng = stream_rng(seed, &spec.subject, "lessons", 0);
        let lessons = assemble_lessons(&pool, spec, &mut rng)?;
        sections.push(Section {
            spec: spec.clone(),
            lessons,
        });
    }

    let glossary = cfg
        .sections
        .iter()
        .flat_map(|s| s.concept_ids.iter())
        .map(|c| {
            let gloss = corpus.glossary().get(c).cloned().unwrap_or_else(|| c.clone());
            (c.clone(), gloss)
        })
        .collect();

    Ok(CoursePack {
        schema_version: SCHEMA_VERSION,
        course_id: cfg.course_id.clone(),
        language: cfg.language.clone(),
        seed,
        settings: BuildSettings {
            k_distractors: cfg.k_distractors,
            n_options: cfg.n_options,
        },
        glossary,
        sections,
        provenance: Provenance {
            tool: "bilingo".into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            seed,
            inputs: Vec::new(),
            distractor_scope: "language".into(),
        },
    })
}
