//! Builds gamified language courses from a dependency treebank and a lexical
//! database, and runs the learner state machine that plays them.
//!
//! Pipeline: [`corpus`] reads CoNLL-U sentences, [`lexicon`] reads
//! (language, form, concept) rows, [`linker`] attaches concepts to tokens by
//! exact normalized form, and [`course`] turns the linked corpus into a seeded
//! [`CoursePack`]. [`engine`] grades answers and tracks gems, lockouts,
//! progression and streaks; [`store`] persists packs and learner state.

pub mod canonical;
pub mod config;
pub mod corpus;
pub mod course;
pub mod engine;
pub mod lexicon;
pub mod linker;
pub mod normalize;
pub mod store;
pub mod validate;

#[cfg(test)]
mod testutil;

pub use corpus::{clean_translation, parse_conllu, IngestConfig, Sentence, Token, TranslationText};
pub use course::{
    build_course, Answer, CourseConfig, CoursePack, Exercise, ExerciseKind, Lesson, Section, SectionSpec,
};
pub use engine::{attempt, complete_lesson, grade, submit, GradeResult, Rules, StudentState, Submission};
pub use lexicon::{parse_lexicon, LexicalEntry, LexiconConfig};
pub use linker::{candidate_concepts, coverage_stats, link, ConceptHit, CoverageRow, LinkedCorpus};
pub use normalize::norm;
pub use store::{load_pack, save_pack, StateStore};
pub use validate::{validate_pack, Violation};
