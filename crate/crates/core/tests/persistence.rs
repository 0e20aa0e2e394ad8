mod common;

use std::fs;
use std::sync::{Arc, Mutex};
use std::thread;

use bilingo_core::engine::{AnswerEvent, GradeResult, Rules, StudentState, Submission};
use bilingo_core::store::{load_pack, save_pack, CrashPoint, StateStore, StoreError, Transition};
use proptest::prelude::*;

fn transition(now: i64) -> Transition {
    Transition {
        nonce: None,
        event: AnswerEvent {
            exercise_id: "e".into(),
            submission: Submission::Concept("YAM".into()),
            now,
        },
        result: GradeResult {
            correct: false,
            expected: None,
            gem_delta: -1,
            locked_out: false,
            lockout_remaining_s: 0,
            lesson_completed: false,
        },
    }
}

#[test]
fn golden_pack_loads_and_round_trips() {
    let path = common::fixtures().join("course/golden_pack_seed42.json");
    let pack = load_pack(&path).unwrap();
    assert_eq!(pack.sections.len(), 2);
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("copy.json");
    save_pack(&out, &pack).unwrap();
    assert_eq!(fs::read(&out).unwrap(), fs::read(&path).unwrap());
    assert_eq!(load_pack(&out).unwrap(), pack);
}

#[test]
fn crash_points_leave_old_or_new_state() {
    for crash in [
        CrashPoint::BeforeJournal,
        CrashPoint::AfterJournal,
        CrashPoint::AfterTempWrite,
    ] {
        let dir = tempfile::tempdir().unwrap();
        let old = {
            let mut store = StateStore::open(dir.path()).unwrap();
            let mut s = store.get_or_create_state("ana", "c", Rules::default()).unwrap();
            s.gems.current = 2;
            store.commit(&s, transition(1)).unwrap();
            s
        };
        let mut new = old.clone();
        new.gems.current = 1;
        {
            let mut store = StateStore::open(dir.path()).unwrap();
            let err = store.commit_interrupted(&new, transition(2), crash).unwrap_err();
            assert!(matches!(err, StoreError::SimulatedCrash(_)));
            // process dies here
        }
        let snapshot = fs::read_to_string(dir.path().join("state.json")).unwrap();
        assert!(serde_json::from_str::<serde_json::Value>(&snapshot).is_ok());

        let reopened = StateStore::open(dir.path()).unwrap();
        let got = reopened.get("ana", "c").unwrap();
        match crash {
            CrashPoint::BeforeJournal => assert_eq!(got, &old),
            CrashPoint::AfterJournal | CrashPoint::AfterTempWrite => assert_eq!(got, &new),
        }
        assert!(!dir.path().join("state.json.tmp").exists());
        assert_eq!(reopened.replay_journal().get("c/ana"), Some(got));
    }
}

#[test]
fn garbage_temp_file_is_ignored() {
    let dir = tempfile::tempdir().unwrap();
    let s = {
        let mut store = StateStore::open(dir.path()).unwrap();
        store.get_or_create_state("ana", "c", Rules::default()).unwrap()
    };
    fs::write(dir.path().join("state.json.tmp"), b"{\"store_vers").unwrap();
    let reopened = StateStore::open(dir.path()).unwrap();
    assert_eq!(reopened.get("ana", "c"), Some(&s));
}

#[test]
fn commit_visible_after_reload() {
    let dir = tempfile::tempdir().unwrap();
    let mut store = StateStore::open(dir.path()).unwrap();
    let mut s = store.get_or_create_state("ana", "c", Rules::default()).unwrap();
    s.gems.current = 0;
    s.lockout_until = Some(1300);
    store.commit(&s, transition(1000)).unwrap();
    std::mem::forget(store);
    let reopened = StateStore::open(dir.path()).unwrap();
    assert_eq!(reopened.get("ana", "c"), Some(&s));
}

#[test]
fn concurrent_create_persists_one_state() {
    let dir = tempfile::tempdir().unwrap();
    let store = Arc::new(Mutex::new(StateStore::open(dir.path()).unwrap()));
    let handles: Vec<_> = (0..8)
        .map(|_| {
            let store = Arc::clone(&store);
            thread::spawn(move || {
                store
                    .lock()
                    .unwrap()
                    .get_or_create_state("ana", "c", Rules::default())
                    .unwrap()
            })
        })
        .collect();
    let states: Vec<StudentState> = handles.into_iter().map(|h| h.join().unwrap()).collect();
    assert!(states.windows(2).all(|w| w[0] == w[1]));
    drop(store);
    let reopened = StateStore::open(dir.path()).unwrap();
    assert_eq!(reopened.students().count(), 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn saved_state_reloads_identically(gems in 0u32..=3, days in 0u32..500, section in 0usize..4, lesson in 0usize..4, idx in prop::option::of(0usize..4)) {
        let dir = tempfile::tempdir().unwrap();
        let mut store = StateStore::open(dir.path()).unwrap();
        let mut s = store.get_or_create_state("ana", "c", Rules::default()).unwrap();
        s.gems.current = gems;
        if gems == 0 {
            s.lockout_until = Some(10_000);
        }
        s.streak.days = days;
        s.cursor.section = section;
        s.cursor.lesson = lesson;
        s.lesson_run = idx.map(|i| bilingo_core::engine::LessonRun { exercise_index: i, mistakes: 1 });
        store.commit(&s, transition(5)).unwrap();
        let before = fs::read(dir.path().join("state.json")).unwrap();
        drop(store);
        let reopened = StateStore::open(dir.path()).unwrap();
        prop_assert_eq!(reopened.get("ana", "c"), Some(&s));
        prop_assert_eq!(fs::read(dir.path().join("state.json")).unwrap(), before);
    }
}
