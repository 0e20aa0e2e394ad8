//! Learner state machine: grading, red gems, lockout, linear progression,
//! daily streak and daily quest.
//!
//! Every transition is a pure function of its inputs. Time is passed in as
//! UTC seconds and calendar dates are derived in UTC.

use chrono::{DateTime, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::course::{Answer, CoursePack, Exercise, ExerciseKind};
use crate::normalize::norm;

pub const LOCKOUT_SECS: i64 = 300;
pub const DEFAULT_GEMS: u32 = 3;
pub const DEFAULT_QUEST_TARGET: u32 = 2;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum EngineError {
    #[error("submission shape does not match {0} exercise")]
    ShapeMismatch(ExerciseKind),
    #[error("state belongs to course `{state}`, exercise to `{exercise}`")]
    WrongCourse { state: String, exercise: String },
    #[error("current lesson is not finished")]
    LessonIncomplete,
    #[error("course already completed")]
    CourseComplete,
    #[error("exercise `{0}` not found")]
    UnknownExercise(String),
    #[error("exercise `{got}` is not the current exercise (expected `{expected}`)")]
    NotCurrent { got: String, expected: String },
    #[error("timestamp {0} is out of range")]
    BadTimestamp(i64),
    #[error("state invariant violated: {0}")]
    Invariant(String),
}

/// Tunables carried inside each state so transitions need no outside config.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rules {
    pub gems_max: u32,
    pub lockout_secs: i64,
    pub quest_target: u32,
    /// Gems return to `gems_max` once a lockout has expired.
    pub refill_on_expiry: bool,
}

impl Default for Rules {
    fn default() -> Self {
        Rules {
            gems_max: DEFAULT_GEMS,
            lockout_secs: LOCKOUT_SECS,
            quest_target: DEFAULT_QUEST_TARGET,
            refill_on_expiry: true,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cursor {
    pub section: usize,
    pub lesson: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LessonRun {
    pub exercise_index: usize,
    pub mistakes: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gems {
    pub current: u32,
    pub max: u32,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Streak {
    pub days: u32,
    pub last_active_date: Option<NaiveDate>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Quest {
    pub lessons_completed_today: u32,
    pub date: Option<NaiveDate>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudentState {
    pub student_id: String,
    pub course_id: String,
    pub cursor: Cursor,
    pub lesson_run: Option<LessonRun>,
    pub gems: Gems,
    pub lockout_until: Option<i64>,
    pub streak: Streak,
    pub quest: Quest,
    pub course_complete: bool,
    pub rules: Rules,
}

impl StudentState {
    pub fn new(student_id: impl Into<String>, course_id: impl Into<String>, rules: Rules) -> Self {
        StudentState {
            student_id: student_id.into(),
            course_id: course_id.into(),
            cursor: Cursor::default(),
            lesson_run: None,
            gems: Gems {
                current: rules.gems_max,
                max: rules.gems_max,
            },
            lockout_until: None,
            streak: Streak::default(),
            quest: Quest::default(),
            course_complete: false,
            rules,
        }
    }

    pub fn check_invariants(&self) -> Result<(), EngineError> {
        let fail = |msg: &str| Err(EngineError::Invariant(msg.to_string()));
        if self.gems.max == 0 {
            return fail("gems.max must be positive");
        }
        if self.gems.current > self.gems.max {
            return fail("gems.current exceeds gems.max");
        }
        if self.lockout_until.is_some() && self.gems.current != 0 {
            return fail("lockout with gems remaining");
        }
        if self.gems.max != self.rules.gems_max {
            return fail("gems.max disagrees with rules");
        }
        Ok(())
    }

    /// Remaining lockout seconds at `now`, zero when not locked out.
    pub fn lockout_remaining(&self, now: i64) -> i64 {
        self.lockout_until.map_or(0, |until| (until - now).max(0))
    }

    pub fn is_locked_out(&self, now: i64) -> bool {
        self.lockout_remaining(now) > 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Submission {
    Tokens(Vec<String>),
    Concept(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GradeResult {
    pub correct: bool,
    /// The expected answer, revealed once the exercise has been graded.
    pub expected: Option<Answer>,
    pub gem_delta: i32,
    pub locked_out: bool,
    pub lockout_remaining_s: i64,
    pub lesson_completed: bool,
}

/// TS answers match on the normalized token sequence; CM on the concept id.
pub fn grade(exercise: &Exercise, submission: &Submission) -> Result<bool, EngineError> {
    match (&exercise.answer, submission) {
        (Answer::Tokens(expected), Submission::Tokens(given))
            if matches!(exercise.kind, ExerciseKind::TS1 | ExerciseKind::TS2) =>
        {
            Ok(expected.len() == given.len() && expected.iter().zip(given).all(|(a, b)| norm(a) == norm(b)))
        }
        (Answer::Concept(expected), Submission::Concept(given)) if exercise.kind == ExerciseKind::CM => {
            Ok(expected == given)
        }
        _ => Err(EngineError::ShapeMismatch(exercise.kind)),
    }
}

fn locked_result(remaining: i64) -> GradeResult {
    GradeResult {
        correct: false,
        expected: None,
        gem_delta: 0,
        locked_out: true,
        lockout_remaining_s: remaining,
        lesson_completed: false,
    }
}

/// Grade one submission and update gems and the lesson run.
///
/// While locked out the attempt is rejected and the state returned unchanged.
/// A mistake costs one gem; losing the last gem starts a lockout and resets
/// the lesson run, so the lesson restarts once the lockout ends.
pub fn attempt(
    state: &StudentState,
    course_id: &str,
    exercise: &Exercise,
    submission: &Submission,
    now: i64,
) -> Result<(StudentState, GradeResult), EngineError> {
    if state.course_id != course_id {
        return Err(EngineError::WrongCourse {
            state: state.course_id.clone(),
            exercise: course_id.to_string(),
        });
    }
    if state.course_complete {
        return Err(EngineError::CourseComplete);
    }
    if let Some(until) = state.lockout_until {
        if now < until {
            return Ok((state.clone(), locked_result(until - now)));
        }
    }
    let correct = grade(exercise, submission)?;

    let mut next = state.clone();
    if next.lockout_until.take().is_some() && next.rules.refill_on_expiry {
        next.gems.current = next.gems.max;
    }
    let mut run = next.lesson_run.unwrap_or_default();
    let mut result = GradeResult {
        correct,
        expected: Some(exercise.answer.clone()),
        gem_delta: 0,
        locked_out: false,
        lockout_remaining_s: 0,
        lesson_completed: false,
    };
    if correct {
        run.exercise_index += 1;
        next.lesson_run = Some(run);
    } else {
        next.gems.current = next.gems.current.saturating_sub(1);
        result.gem_delta = -1;
        run.mistakes += 1;
        if next.gems.current == 0 {
            next.lockout_until = Some(now + next.rules.lockout_secs);
            next.lesson_run = None;
            result.locked_out = true;
            result.lockout_remaining_s = next.rules.lockout_secs;
        } else {
            next.lesson_run = Some(run);
        }
    }
    Ok((next, result))
}

pub fn utc_date(now: i64) -> Result<NaiveDate, EngineError> {
    DateTime::from_timestamp(now, 0)
        .map(|dt| dt.date_naive())
        .ok_or(EngineError::BadTimestamp(now))
}

/// Streak after activity on `today`: unchanged on a repeat day, +1 on the
/// day after the last activity, otherwise back to 1.
pub fn next_streak(streak: Streak, today: NaiveDate) -> Streak {
    let days = match streak.last_active_date {
        Some(last) if last == today && streak.days > 0 => streak.days,
        Some(last) if last.succ_opt() == Some(today) => streak.days + 1,
        _ => 1,
    };
    Streak {
        days,
        last_active_date: Some(today),
    }
}

/// Lessons per section and exercises per lesson, as the engine sees a course.
pub type CourseShape = Vec<Vec<usize>>;

pub fn course_shape(pack: &CoursePack) -> CourseShape {
    pack.sections
        .iter()
        .map(|s| s.lessons.iter().map(|l| l.exercises.len()).collect())
        .collect()
}

/// Finish the current lesson: advance the cursor and update streak and quest.
pub fn complete_lesson(state: &StudentState, shape: &CourseShape, now: i64) -> Result<StudentState, EngineError> {
    if state.course_complete {
        return Err(EngineError::CourseComplete);
    }
    let Cursor { section, lesson } = state.cursor;
    let size = shape
        .get(section)
        .and_then(|s| s.get(lesson))
        .copied()
        .ok_or_else(|| EngineError::Invariant(format!("cursor ({section},{lesson}) outside course")))?;
    let done = state.lesson_run.map_or(0, |r| r.exercise_index);
    if done < size {
        return Err(EngineError::LessonIncomplete);
    }

    let today = utc_date(now)?;
    let mut next = state.clone();
    next.lesson_run = None;
    if lesson + 1 < shape[section].len() {
        next.cursor.lesson += 1;
    } else if let Some(offset) = shape[section + 1..].iter().position(|s| !s.is_empty()) {
        next.cursor = Cursor {
            section: section + 1 + offset,
            lesson: 0,
        };
    } else {
        next.course_complete = true;
    }
    next.streak = next_streak(state.streak, today);
    next.quest = if state.quest.date == Some(today) {
        Quest {
            lessons_completed_today: state.quest.lessons_completed_today + 1,
            date: Some(today),
        }
    } else {
        Quest {
            lessons_completed_today: 1,
            date: Some(today),
        }
    };
    Ok(next)
}

/// Result of one answer submission against a course pack.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub state: StudentState,
    pub result: GradeResult,
    /// False when the attempt was rejected and nothing changed.
    pub changed: bool,
}

/// The full answer transition used by the service: locate the exercise,
/// require it to be the learner's current one, grade it, and complete the
/// lesson when its last exercise has been passed.
pub fn submit(
    state: &StudentState,
    pack: &CoursePack,
    exercise_id: &str,
    submission: &Submission,
    now: i64,
) -> Result<Outcome, EngineError> {
    let exercise = pack
        .find_exercise(exercise_id)
        .ok_or_else(|| EngineError::UnknownExercise(exercise_id.to_string()))?;
    if state.course_complete {
        return Err(EngineError::CourseComplete);
    }
    if state.is_locked_out(now) {
        let (same, result) = attempt(state, &pack.course_id, exercise, submission, now)?;
        return Ok(Outcome {
            state: same,
            result,
            changed: false,
        });
    }
    let lesson = pack
        .lesson(state.cursor.section, state.cursor.lesson)
        .ok_or_else(|| EngineError::Invariant("cursor outside course".into()))?;
    let index = state.lesson_run.map_or(0, |r| r.exercise_index);
    let current = lesson
        .exercises
        .get(index)
        .ok_or_else(|| EngineError::Invariant("lesson run past end of lesson".into()))?;
    if current.id != exercise_id {
        return Err(EngineError::NotCurrent {
            got: exercise_id.to_string(),
            expected: current.id.clone(),
        });
    }

    let (mut next, mut result) = attempt(state, &pack.course_id, exercise, submission, now)?;
    if result.correct && next.lesson_run.map_or(0, |r| r.exercise_index) >= lesson.exercises.len() {
        next = complete_lesson(&next, &course_shape(pack), now)?;
        result.lesson_completed = true;
    }
    Ok(Outcome {
        state: next,
        result,
        changed: true,
    })
}

/// One recorded answer submission.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerEvent {
    pub exercise_id: String,
    pub submission: Submission,
    pub now: i64,
}

/// Re-run a sequence of submissions from `initial`.
pub fn replay<'a, I>(initial: &StudentState, pack: &CoursePack, events: I) -> Result<StudentState, EngineError>
where
    I: IntoIterator<Item = &'a AnswerEvent>,
{
    let mut state = initial.clone();
    for event in events {
        state = submit(&state, pack, &event.exercise_id, &event.submission, event.now)?.state;
    }
    Ok(state)
}
