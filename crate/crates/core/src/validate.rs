//! Structural checks over a built course pack.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use crate::course::{Answer, CoursePack, Exercise, ExerciseKind, SectionSpec, SCHEMA_VERSION};
use crate::engine::{grade, Submission};
use crate::normalize::norm;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// `section/lesson` position, when the problem is inside a lesson.
    pub location: String,
    pub exercise_id: Option<String>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.exercise_id {
            Some(id) => write!(f, "{} exercise `{}`: {}", self.location, id, self.message),
            None => write!(f, "{}: {}", self.location, self.message),
        }
    }
}

struct Report {
    violations: Vec<Violation>,
}

impl Report {
    fn add(&mut self, location: &str, exercise: Option<&Exercise>, message: impl Into<String>) {
        self.violations.push(Violation {
            location: location.to_string(),
            exercise_id: exercise.map(|e| e.id.clone()),
            message: message.into(),
        });
    }
}

fn check_exercise(report: &mut Report, loc: &str, spec: &SectionSpec, n_options: usize, ex: &Exercise) {
    let mut add = |msg: String| report.add(loc, Some(ex), msg);
    match (ex.kind, &ex.answer) {
        (ExerciseKind::TS1 | ExerciseKind::TS2, Answer::Tokens(answer)) => {
            if answer.is_empty() {
                add("empty answer".into());
            }
            let mut bank: HashMap<&str, usize> = HashMap::new();
            for token in &ex.bank {
                *bank.entry(token.as_str()).or_default() += 1;
            }
            for token in answer {
                match bank.get_mut(token.as_str()) {
                    Some(n) if *n > 0 => *n -= 1,
                    _ => add(format!("answer token `{token}` missing from bank")),
                }
            }
            let answer_norms: HashSet<String> = answer.iter().map(|t| norm(t)).collect();
            for (token, left) in bank {
                if left > 0 && answer_norms.contains(&norm(token)) {
                    add(format!("distractor `{token}` normalizes to an answer token"));
                }
            }
            if grade(ex, &Submission::Tokens(answer.clone())) != Ok(true) {
                add("its own answer does not grade as correct".into());
            }
        }
        (ExerciseKind::CM, Answer::Concept(answer)) => {
            let correct = ex.bank.iter().filter(|o| *o == answer).count();
            if correct != 1 {
                add(format!("{correct} options equal the answer, expected exactly 1"));
            }
            let distinct: HashSet<&String> = ex.bank.iter().collect();
            if distinct.len() != ex.bank.len() {
                add("duplicate option".into());
            }
            for option in &ex.bank {
                if !spec.concept_ids.contains(option) {
                    add(format!(
                        "option `{option}` is not a concept of section `{}`",
                        spec.subject
                    ));
                }
            }
            if ex.bank.len() != n_options {
                add(format!("{} options, expected {n_options}", ex.bank.len()));
            }
            if grade(ex, &Submission::Concept(answer.clone())) != Ok(true) {
                add("its own answer does not grade as correct".into());
            }
        }
        (kind, _) => add(format!("{kind} exercise has the wrong answer shape")),
    }
}

/// Every invariant violation in the pack; empty means valid.
pub fn validate_pack(pack: &CoursePack) -> Vec<Violation> {
    let mut report = Report { violations: Vec::new() };
    if pack.schema_version != SCHEMA_VERSION {
        report.add(
            "pack",
            None,
            format!("schema_version {} (expected {SCHEMA_VERSION})", pack.schema_version),
        );
    }
    if pack.sections.is_empty() {
        report.add("pack", None, "no sections");
    }
    let mut by_id: HashMap<&str, &Exercise> = HashMap::new();
    for (s_idx, section) in pack.sections.iter().enumerate() {
        let spec = &section.spec;
        if section.lessons.len() != spec.lessons {
            report.add(
                &format!("section {s_idx}"),
                None,
                format!(
                    "{} lessons, section config asks for {}",
                    section.lessons.len(),
                    spec.lessons
                ),
            );
        }
        for concept in &spec.concept_ids {
            if !pack.glossary.contains_key(concept) {
                report.add(
                    &format!("section {s_idx}"),
                    None,
                    format!("concept `{concept}` has no gloss"),
                );
            }
        }
        for (l_idx, lesson) in section.lessons.iter().enumerate() {
            let loc = format!("section {s_idx} lesson {l_idx}");
            if lesson.index != l_idx {
                report.add(&loc, None, format!("lesson index {} out of sequence", lesson.index));
            }
            let mut kinds: BTreeMap<ExerciseKind, usize> = BTreeMap::new();
            let mut ids = HashSet::new();
            for ex in &lesson.exercises {
                *kinds.entry(ex.kind).or_default() += 1;
                if !ids.insert(ex.id.as_str()) {
                    report.add(&loc, Some(ex), "appears twice in the lesson");
                }
                match by_id.get(ex.id.as_str()) {
                    Some(other) if *other != ex => {
                        report.add(&loc, Some(ex), "differs from another exercise with the same id")
                    }
                    _ => {
                        by_id.insert(&ex.id, ex);
                    }
                }
                check_exercise(&mut report, &loc, spec, pack.settings.n_options, ex);
            }
            let quota: BTreeMap<ExerciseKind, usize> = spec
                .lesson_quota
                .iter()
                .filter(|(_, &n)| n > 0)
                .map(|(&k, &n)| (k, n))
                .collect();
            if kinds != quota {
                report.add(
                    &loc,
                    None,
                    format!("exercise kinds {kinds:?} do not match quota {quota:?}"),
                );
            }
        }
    }
    report.violations
}
