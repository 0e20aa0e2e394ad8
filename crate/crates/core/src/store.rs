//! File-backed storage for course packs and learner state.
//!
//! A store directory holds `state.json`, a canonical snapshot of every
//! learner's state, and `journal.jsonl`, one JSON line per committed
//! transition. A commit appends its journal line (synced) before replacing the
//! snapshot through write-temp-then-rename, and each journal line carries the
//! resulting state. On open, journal lines newer than the snapshot are rolled
//! forward, so a crash at any point leaves either the old or the new state.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical::{to_canonical_line, to_canonical_string};
use crate::course::{CoursePack, SCHEMA_VERSION};
use crate::engine::{AnswerEvent, GradeResult, Rules, StudentState};

const SNAPSHOT: &str = "state.json";
const SNAPSHOT_TMP: &str = "state.json.tmp";
const JOURNAL: &str = "journal.jsonl";
const STORE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}: schema_version {found} is not supported (expected {expected})")]
    SchemaMismatch { path: String, found: i64, expected: u32 },
    #[error("refusing to commit invalid state: {0}")]
    InvalidState(String),
    #[error("simulated crash at {0:?}")]
    SimulatedCrash(CrashPoint),
}

impl StoreError {
    fn io(path: &Path, source: io::Error) -> Self {
        StoreError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    fn parse(path: &Path, err: &serde_json::Error) -> Self {
        StoreError::Parse {
            path: path.display().to_string(),
            line: err.line(),
            column: err.column(),
            message: err.to_string(),
        }
    }
}

/// Where a commit can be cut short in crash tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrashPoint {
    BeforeJournal,
    AfterJournal,
    AfterTempWrite,
}

fn write_atomic(path: &Path, bytes: &[u8], crash: Option<CrashPoint>) -> Result<(), StoreError> {
    let tmp = path.with_extension("json.tmp");
    {
        let mut file = File::create(&tmp).map_err(|e| StoreError::io(&tmp, e))?;
        file.write_all(bytes).map_err(|e| StoreError::io(&tmp, e))?;
        file.sync_all().map_err(|e| StoreError::io(&tmp, e))?;
    }
    if crash == Some(CrashPoint::AfterTempWrite) {
        return Err(StoreError::SimulatedCrash(CrashPoint::AfterTempWrite));
    }
    fs::rename(&tmp, path).map_err(|e| StoreError::io(path, e))?;
    if let Some(dir) = path.parent() {
        // Directory fsync is not supported everywhere; the rename itself is
        // already atomic.
        if let Ok(d) = File::open(dir) {
            let _ = d.sync_all();
        }
    }
    Ok(())
}

/// Write a course pack as canonical JSON, atomically.
pub fn save_pack(path: &Path, pack: &CoursePack) -> Result<(), StoreError> {
    let text = to_canonical_string(pack).map_err(|e| StoreError::parse(path, &e))?;
    write_atomic(path, text.as_bytes(), None)
}

pub fn parse_pack(text: &str, path: &Path) -> Result<CoursePack, StoreError> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| StoreError::parse(path, &e))?;
    let found = value.get("schema_version").and_then(|v| v.as_i64()).unwrap_or(-1);
    if found != i64::from(SCHEMA_VERSION) {
        return Err(StoreError::SchemaMismatch {
            path: path.display().to_string(),
            found,
            expected: SCHEMA_VERSION,
        });
    }
    serde_json::from_value(value).map_err(|e| StoreError::parse(path, &e))
}

/// Read a course pack, checking its schema version.
pub fn load_pack(path: &Path) -> Result<CoursePack, StoreError> {
    let text = fs::read_to_string(path).map_err(|e| StoreError::io(path, e))?;
    parse_pack(&text, path)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct Snapshot {
    store_version: u32,
    /// Sequence number of the last journal record reflected here.
    journal_seq: u64,
    students: BTreeMap<String, StudentState>,
}

/// One committed answer transition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JournalRecord {
    pub seq: u64,
    pub student_id: String,
    pub course_id: String,
    pub nonce: Option<String>,
    pub event: AnswerEvent,
    pub result: GradeResult,
    pub state_after: StudentState,
}

/// The parts of a journal record supplied by the caller; the store assigns
/// the sequence number.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transition {
    pub nonce: Option<String>,
    pub event: AnswerEvent,
    pub result: GradeResult,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CommitAck {
    pub seq: u64,
}

pub fn state_key(student_id: &str, course_id: &str) -> String {
    format!("{course_id}/{student_id}")
}

fn idempotency_key(course_id: &str, student_id: &str, exercise_id: &str, nonce: &str) -> String {
    format!("{course_id}\u{1f}{student_id}\u{1f}{exercise_id}\u{1f}{nonce}")
}

#[derive(Debug)]
pub struct StateStore {
    dir: PathBuf,
    snapshot: Snapshot,
    journal: Vec<JournalRecord>,
    by_nonce: HashMap<String, usize>,
}

impl StateStore {
    /// Open or create a store in `dir`, rolling forward any journal records
    /// the snapshot does not yet reflect.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| StoreError::io(&dir, e))?;
        let snap_path = dir.join(SNAPSHOT);
        let snapshot = match fs::read_to_string(&snap_path) {
            Ok(text) => {
                let snap: Snapshot = serde_json::from_str(&text).map_err(|e| StoreError::parse(&snap_path, &e))?;
                if snap.store_version != STORE_VERSION {
                    return Err(StoreError::SchemaMismatch {
                        path: snap_path.display().to_string(),
                        found: i64::from(snap.store_version),
                        expected: STORE_VERSION,
                    });
                }
                snap
            }
            Err(e) if e.kind() == io::ErrorKind::NotFound => Snapshot {
                store_version: STORE_VERSION,
                journal_seq: 0,
                students: BTreeMap::new(),
            },
            Err(e) => return Err(StoreError::io(&snap_path, e)),
        };
        let _ = fs::remove_file(dir.join(SNAPSHOT_TMP));

        let journal = read_journal(&dir.join(JOURNAL))?;
        let mut store = StateStore {
            dir,
            snapshot,
            journal: Vec::new(),
            by_nonce: HashMap::new(),
        };
        let mut rolled = false;
        for record in journal {
            if record.seq > store.snapshot.journal_seq {
                store.snapshot.journal_seq = record.seq;
                store.snapshot.students.insert(
                    state_key(&record.student_id, &record.course_id),
                    record.state_after.clone(),
                );
                rolled = true;
            }
            store.index(record);
        }
        if rolled {
            store.write_snapshot(None)?;
        }
        Ok(store)
    }

    fn index(&mut self, record: JournalRecord) {
        if let Some(nonce) = &record.nonce {
            let key = idempotency_key(&record.course_id, &record.student_id, &record.event.exercise_id, nonce);
            self.by_nonce.insert(key, self.journal.len());
        }
        self.journal.push(record);
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn get(&self, student_id: &str, course_id: &str) -> Option<&StudentState> {
        self.snapshot.students.get(&state_key(student_id, course_id))
    }

    pub fn students(&self) -> impl Iterator<Item = &StudentState> {
        self.snapshot.students.values()
    }

    /// The stored state, or a fresh one (cursor at the start, full gems,
    /// no streak) which is persisted before returning.
    pub fn get_or_create_state(
        &mut self,
        student_id: &str,
        course_id: &str,
        rules: Rules,
    ) -> Result<StudentState, StoreError> {
        let key = state_key(student_id, course_id);
        if let Some(state) = self.snapshot.students.get(&key) {
            return Ok(state.clone());
        }
        let state = StudentState::new(student_id, course_id, rules);
        state
            .check_invariants()
            .map_err(|e| StoreError::InvalidState(e.to_string()))?;
        self.snapshot.students.insert(key.clone(), state.clone());
        if let Err(e) = self.write_snapshot(None) {
            self.snapshot.students.remove(&key);
            return Err(e);
        }
        Ok(state)
    }

    /// The journal record previously committed under this idempotency key.
    pub fn find_by_nonce(
        &self,
        course_id: &str,
        student_id: &str,
        exercise_id: &str,
        nonce: &str,
    ) -> Option<&JournalRecord> {
        self.by_nonce
            .get(&idempotency_key(course_id, student_id, exercise_id, nonce))
            .map(|&i| &self.journal[i])
    }

    pub fn commit(&mut self, state: &StudentState, transition: Transition) -> Result<CommitAck, StoreError> {
        self.commit_inner(state, transition, None)
    }

    /// `commit` that stops at `crash`, leaving the files as a killed process
    /// would. The in-memory store must be discarded afterwards.
    #[doc(hidden)]
    pub fn commit_interrupted(
        &mut self,
        state: &StudentState,
        transition: Transition,
        crash: CrashPoint,
    ) -> Result<CommitAck, StoreError> {
        self.commit_inner(state, transition, Some(crash))
    }

    fn commit_inner(
        &mut self,
        state: &StudentState,
        transition: Transition,
        crash: Option<CrashPoint>,
    ) -> Result<CommitAck, StoreError> {
        state
            .check_invariants()
            .map_err(|e| StoreError::InvalidState(e.to_string()))?;
        let record = JournalRecord {
            seq: self.snapshot.journal_seq + 1,
            student_id: state.student_id.clone(),
            course_id: state.course_id.clone(),
            nonce: transition.nonce,
            event: transition.event,
            result: transition.result,
            state_after: state.clone(),
        };
        if crash == Some(CrashPoint::BeforeJournal) {
            return Err(StoreError::SimulatedCrash(CrashPoint::BeforeJournal));
        }
        self.append_journal(&record)?;
        if crash == Some(CrashPoint::AfterJournal) {
            return Err(StoreError::SimulatedCrash(CrashPoint::AfterJournal));
        }

        let key = state_key(&state.student_id, &state.course_id);
        let previous = self.snapshot.students.insert(key.clone(), state.clone());
        let previous_seq = self.snapshot.journal_seq;
        self.snapshot.journal_seq = record.seq;
        if let Err(e) = self.write_snapshot(crash) {
            // The journal line is durable and will be rolled forward on the
            // next open; keep memory consistent with what is on disk now.
            match previous {
                Some(p) => self.snapshot.students.insert(key, p),
                None => self.snapshot.students.remove(&key),
            };
            self.snapshot.journal_seq = previous_seq;
            return Err(e);
        }
        let seq = record.seq;
        self.index(record);
        Ok(CommitAck { seq })
    }

    fn append_journal(&self, record: &JournalRecord) -> Result<(), StoreError> {
        let path = self.dir.join(JOURNAL);
        let mut line = to_canonical_line(record).map_err(|e| StoreError::parse(&path, &e))?;
        line.push('\n');
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| StoreError::io(&path, e))?;
        file.write_all(line.as_bytes()).map_err(|e| StoreError::io(&path, e))?;
        file.sync_data().map_err(|e| StoreError::io(&path, e))
    }

    fn write_snapshot(&self, crash: Option<CrashPoint>) -> Result<(), StoreError> {
        let path = self.dir.join(SNAPSHOT);
        let text = to_canonical_string(&self.snapshot).map_err(|e| StoreError::parse(&path, &e))?;
        write_atomic(&path, text.as_bytes(), crash)
    }

    pub fn journal(&self) -> &[JournalRecord] {
        &self.journal
    }

    pub fn journal_len(&self) -> usize {
        self.journal.len()
    }

    /// Latest state per learner according to the journal alone.
    pub fn replay_journal(&self) -> BTreeMap<String, StudentState> {
        let mut states = BTreeMap::new();
        for record in &self.journal {
            states.insert(
                state_key(&record.student_id, &record.course_id),
                record.state_after.clone(),
            );
        }
        states
    }
}

/// Parse the journal. A final line without its newline is a write that never
/// completed and is dropped; any other bad line is an error.
fn read_journal(path: &Path) -> Result<Vec<JournalRecord>, StoreError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(StoreError::io(path, e)),
    };
    let mut records = Vec::new();
    let mut reader = BufReader::new(file);
    let mut line_no = 0;
    let mut buf = String::new();
    loop {
        buf.clear();
        let n = reader.read_line(&mut buf).map_err(|e| StoreError::io(path, e))?;
        if n == 0 {
            break;
        }
        line_no += 1;
        if !buf.ends_with('\n') {
            log::warn!("{}: dropping incomplete final journal line", path.display());
            break;
        }
        let line = buf.trim_end();
        if line.is_empty() {
            continue;
        }
        let record: JournalRecord = serde_json::from_str(line).map_err(|e| StoreError::Parse {
            path: path.display().to_string(),
            line: line_no,
            column: e.column(),
            message: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(records)
}
