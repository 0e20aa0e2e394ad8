//! Acceptance run: one PASS/FAIL line per criterion. Run with
//! `cargo test -p bilingo --test acceptance -- --nocapture`.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use bilingo_core::config::{load_inputs, Config};
use bilingo_core::corpus::{clean_translation, Sentence, Token, TranslationText};
use bilingo_core::course::{section_pool, Answer, ExerciseKind};
use bilingo_core::engine::{complete_lesson, grade, submit, LessonRun, Rules, StudentState, Submission};
use bilingo_core::lexicon::LexicalEntry;
use bilingo_core::linker::{candidate_concepts, coverage_stats, link, ConceptHit};
use bilingo_core::store::{CrashPoint, StateStore, Transition};
use chrono::NaiveDate;
use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn run(name: &str, f: impl FnOnce() -> Check) -> bool {
    let started = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into());
        Err(msg)
    });
    let ms = started.elapsed().as_millis();
    match &outcome {
        Ok(detail) => println!("PASS  {name:<34} {detail} [{ms} ms]"),
        Err(why) => println!("FAIL  {name:<34} {why} [{ms} ms]"),
    }
    outcome.is_ok()
}

const WORKED_EXAMPLES: [(&str, &str, &str); 8] = [
    ("food", "ela foi buscar cará", "oho kara ipiaromo"),
    (
        "food",
        "a mãe de josé foi a roça para buscar carã",
        "oho zuze ihi kope kara ipiaromo",
    ),
    ("food", "tem abacaxi na roça de josé", "heta nana zuze kope"),
    ("food", "ele colhe cacau", "opo?o aka?u a?e"),
    ("animal", "a mulher envolveu o peixe", "owan kuza pira a?e"),
    ("animal", "foi o queixado", "tazahu ru?u"),
    (
        "animal",
        "o que foi que o queixado comeu na roça",
        "ma?e tazahu u?u kope ra?e",
    ),
    ("animal", "o homem alimentou o peixe", "opoz awa pira a?e"),
];

fn worked_examples() -> Check {
    let started = Instant::now();
    let root = fixtures().join("course");
    let cfg = Config::load(&root.join("course.toml")).map_err(|e| e.to_string())?;
    let course = cfg.course.clone().ok_or("no course")?;
    let loaded = load_inputs(&root.join("treebank"), &root.join("lexicon.tsv"), &cfg).map_err(|e| e.to_string())?;
    let mut got = BTreeSet::new();
    for spec in &course.sections {
        let pool = section_pool(&loaded.corpus, &course, spec, 42).map_err(|e| e.to_string())?;
        for ex in &pool[&ExerciseKind::TS1] {
            let Answer::Tokens(answer) = &ex.answer else {
                return Err(format!("{}: not a token answer", ex.id));
            };
            got.insert((spec.subject.clone(), ex.prompt.clone(), answer.join(" ")));
        }
    }
    let want: BTreeSet<_> = WORKED_EXAMPLES
        .iter()
        .map(|(s, p, a)| (s.to_string(), p.to_string(), a.to_string()))
        .collect();
    let elapsed = started.elapsed();
    ensure(got == want, format!("mismatch: got {got:?}"))?;
    ensure(elapsed.as_secs_f64() < 1.0, format!("took {elapsed:?}"))?;
    Ok(format!("8/8 rows in {elapsed:?}"))
}

fn citation_cleaning() -> Check {
    ensure(
        clean_translation("ele colhe cacau (harrison, 2013:12)") == "ele colhe cacau",
        "worked example",
    )?;
    const PIECES: &[&str] = &[
        "a",
        "B",
        "ç",
        "É",
        "e\u{301}",
        " ",
        "  ",
        "\t",
        "(",
        ")",
        ",",
        ":",
        "2013",
        "12",
        "(Harrison, 2013:12)",
        "(x, 1999)",
        "ß",
        "Σ",
        "?",
        "\u{a0}",
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for i in 0..1000 {
        let len = rng.random_range(0..12);
        let s: String = (0..len).map(|_| PIECES[rng.random_range(0..PIECES.len())]).collect();
        let once = clean_translation(&s);
        ensure(
            clean_translation(&once) == once,
            format!("case {i}: {s:?} not idempotent"),
        )?;
    }
    Ok("example + 1000 idempotence cases".into())
}

const FORMS: &[&str] = &[
    "kara",
    "Kara",
    "pira",
    "oho",
    "a?e",
    "nana",
    "josé",
    "Jose\u{301}",
    "kope",
    "awa",
];
const LANGS: &[&str] = &["Guajajara", "Karo", "Akuntsu"];
const CONCEPTS: &[&str] = &["YAM", "FISH", "GO", "PINEAPPLE", "FIELD", "MAN"];

fn text(code: &str) -> TranslationText {
    TranslationText {
        lang_code: code.into(),
        raw: "x".into(),
        cleaned: "x".into(),
    }
}

fn random_corpus(rng: &mut ChaCha8Rng) -> (Vec<Sentence>, Vec<LexicalEntry>) {
    let sentences = (0..rng.random_range(0..=30))
        .map(|i| {
            let mut translations = BTreeMap::new();
            if rng.random_bool(0.6) {
                translations.insert("pt".to_string(), text("pt"));
            }
            if rng.random_bool(0.5) {
                translations.insert("en".to_string(), text("en"));
            }
            Sentence {
                sent_id: format!("s{i:03}"),
                language: LANGS[rng.random_range(0..LANGS.len())].into(),
                tokens: (0..rng.random_range(1..=6))
                    .map(|j| Token::new(j, FORMS[rng.random_range(0..FORMS.len())]))
                    .collect(),
                original_text: String::new(),
                translations,
                source_file: "random".into(),
            }
        })
        .collect();
    let entries = (0..rng.random_range(0..=50))
        .map(|_| {
            LexicalEntry::new(
                LANGS[rng.random_range(0..LANGS.len())],
                FORMS[rng.random_range(0..FORMS.len())],
                CONCEPTS[rng.random_range(0..CONCEPTS.len())],
                "g",
            )
        })
        .collect();
    (sentences, entries)
}

fn oracle(sentences: &[Sentence], entries: &[LexicalEntry]) -> Vec<ConceptHit> {
    let mut hits = Vec::new();
    for s in sentences {
        for t in &s.tokens {
            for e in entries {
                if s.language == e.language && t.norm == e.norm_form {
                    hits.push(ConceptHit {
                        sentence_id: s.sent_id.clone(),
                        token_index: t.index,
                        concept_id: e.concept_id.clone(),
                        matched_form: t.form.clone(),
                    });
                }
            }
        }
    }
    hits.sort();
    hits
}

fn linker_oracle() -> Check {
    let started = Instant::now();
    let mut total = 0;
    for seed in 0..200 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (sentences, entries) = random_corpus(&mut rng);
        let expected = oracle(&sentences, &entries);
        let corpus = link(sentences, &entries);
        ensure(corpus.hits() == expected.as_slice(), format!("corpus {seed} differs"))?;
        total += expected.len();
    }
    let elapsed = started.elapsed();
    ensure(elapsed.as_secs() < 10, format!("took {elapsed:?}"))?;
    Ok(format!("200 corpora, {total} hits, {elapsed:?}"))
}

fn coverage_conservation() -> Check {
    for seed in 0..200 {
        let mut rng = ChaCha8Rng::seed_from_u64(1_000 + seed);
        let (sentences, entries) = random_corpus(&mut rng);
        let rows = coverage_stats(&link(sentences.clone(), &entries));
        for lang in LANGS {
            let of_lang: Vec<_> = sentences.iter().filter(|s| s.language == *lang).collect();
            let pt = of_lang.iter().filter(|s| s.translation("pt").is_some()).count();
            let en = of_lang.iter().filter(|s| s.translation("en").is_some()).count();
            let mine: Vec<_> = rows.iter().filter(|r| r.language == *lang).collect();
            ensure(
                mine.iter().map(|r| r.count_pt).sum::<usize>() == pt,
                format!("case {seed} {lang} pt"),
            )?;
            ensure(
                mine.iter().map(|r| r.count_en).sum::<usize>() == en,
                format!("case {seed} {lang} en"),
            )?;
        }
    }
    Ok("200 cases".into())
}

fn threshold_boundary() -> Check {
    let sentence = |i: usize, form: &str| Sentence {
        sent_id: format!("{form}{i:02}"),
        language: "Guajajara".into(),
        tokens: vec![Token::new(0, form)],
        original_text: form.into(),
        translations: BTreeMap::new(),
        source_file: "t".into(),
    };
    let mut sentences: Vec<Sentence> = (0..11).map(|i| sentence(i, "kara")).collect();
    sentences.extend((0..10).map(|i| sentence(i, "nana")));
    let entries = [
        LexicalEntry::new("Guajajara", "kara", "YAM", "yam"),
        LexicalEntry::new("Guajajara", "nana", "PINEAPPLE", "pineapple"),
    ];
    let got = candidate_concepts(&link(sentences, &entries), "Guajajara", 10).map_err(|e| e.to_string())?;
    let ids: Vec<_> = got.iter().map(|c| (c.concept_id.as_str(), c.sentences)).collect();
    ensure(ids == [("YAM", 11)], format!("got {ids:?}"))?;
    Ok("11 kept, 10 dropped".into())
}

fn determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut digests = Vec::new();
    for name in ["a.json", "b.json"] {
        let path = dir.path().join(name);
        let args = build_args(&path, 42);
        let out = bilingo(&args.iter().map(String::as_str).collect::<Vec<_>>());
        ensure(out.status.success(), common::text(&out.stderr))?;
        digests.push(hex::encode(Sha256::digest(fs::read(&path).map_err(|e| e.to_string())?)));
    }
    ensure(digests[0] == digests[1], "two builds differ")?;
    let pinned = fs::read_to_string(fixtures().join("course/golden_pack_seed42.sha256")).map_err(|e| e.to_string())?;
    ensure(
        digests[0] == pinned.trim(),
        format!("digest {} != golden {}", digests[0], pinned.trim()),
    )?;
    Ok(format!("sha256 {}", &digests[0][..16]))
}

fn generator_grader() -> Check {
    let pack = golden();
    let mut n = 0;
    for ex in pack.exercises() {
        let sub = match &ex.answer {
            Answer::Tokens(t) => Submission::Tokens(t.clone()),
            Answer::Concept(c) => Submission::Concept(c.clone()),
        };
        ensure(grade(ex, &sub) == Ok(true), format!("{} rejects its own answer", ex.id))?;
        n += 1;
    }
    Ok(format!("{n} exercises"))
}

fn gem_state_machine() -> Check {
    let started = Instant::now();
    let pack = golden();
    let current = |s: &StudentState| {
        let lesson = pack.lesson(s.cursor.section, s.cursor.lesson).unwrap();
        lesson.exercises[s.lesson_run.map_or(0, |r| r.exercise_index)].clone()
    };
    let answer = |s: &StudentState, correct: bool, now: i64| {
        let ex = current(s);
        let sub: Submission = serde_json::from_value(payload(&ex, correct)).unwrap();
        submit(s, &pack, &ex.id, &sub, now).unwrap()
    };

    // worked timeline
    let t = T0;
    let mut s = StudentState::new("ana", COURSE, Rules::default());
    for _ in 0..3 {
        s = answer(&s, false, t).state;
    }
    ensure(
        s.lockout_until == Some(t + 300),
        format!("lockout_until {:?}", s.lockout_until),
    )?;
    let early = answer(&s, true, t + 299);
    ensure(
        early.result.locked_out && early.result.lockout_remaining_s == 1 && !early.changed,
        "early retry",
    )?;
    let on_time = answer(&s, true, t + 300);
    ensure(
        on_time.result.correct && on_time.state.gems.current == 3,
        "retry at expiry",
    )?;

    // every correct/wrong sequence of length 10 from full gems
    let mut states = 0;
    for mask in 0u32..1 << 10 {
        let mut s = StudentState::new("ana", COURSE, Rules::default());
        let mut mistakes = 0u32;
        for step in 0..10 {
            let before = s.clone();
            let out = answer(&s, mask & (1 << step) != 0, t + step);
            s = out.state;
            s.check_invariants().map_err(|e| e.to_string())?;
            states += 1;
            if before.is_locked_out(t + step) {
                ensure(s == before, "state changed during lockout")?;
                continue;
            }
            ensure(
                !(s.gems.current < before.gems.current && s.cursor != before.cursor),
                "gem loss and advance in one step",
            )?;
            if mask & (1 << step) == 0 {
                mistakes += 1;
                ensure(
                    s.gems.current == 3 - mistakes,
                    format!("mask {mask:b} step {step}: gems"),
                )?;
                ensure(
                    (s.gems.current == 0) == (s.lockout_until == Some(t + step + 300)),
                    "lockout edge",
                )?;
            } else {
                ensure(s.gems.current == before.gems.current, "correct answer changed gems")?;
            }
        }
    }
    let elapsed = started.elapsed();
    ensure(elapsed.as_secs_f64() < 1.0, format!("took {elapsed:?}"))?;
    Ok(format!("{states} transitions, {elapsed:?}"))
}

fn streak_rules() -> Check {
    let base = NaiveDate::from_ymd_opt(2026, 1, 1)
        .unwrap()
        .and_hms_opt(0, 0, 0)
        .unwrap()
        .and_utc()
        .timestamp();
    let shape = vec![vec![1; 100]];
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..500 {
        let mut s = StudentState::new("ana", COURSE, Rules::default());
        let mut day = 0i64;
        let mut last_day: Option<i64> = None;
        let mut expected = 0u32;
        for _ in 0..rng.random_range(1..40) {
            day += rng.random_range(0..4);
            let now = base + day * 86_400 + rng.random_range(0..86_400);
            s.lesson_run = Some(LessonRun {
                exercise_index: 1,
                mistakes: 0,
            });
            s = complete_lesson(&s, &shape, now).map_err(|e| e.to_string())?;
            expected = match last_day {
                Some(d) if d == day => expected,
                Some(d) if d + 1 == day => expected + 1,
                _ => 1,
            };
            last_day = Some(day);
            ensure(
                s.streak.days == expected,
                format!("case {case}: day {day} streak {}", s.streak.days),
            )?;
        }
    }
    Ok("500 random date sequences".into())
}

fn crash_safety() -> Check {
    let transition = |now| Transition {
        nonce: None,
        event: bilingo_core::engine::AnswerEvent {
            exercise_id: "e".into(),
            submission: Submission::Concept("YAM".into()),
            now,
        },
        result: bilingo_core::GradeResult {
            correct: false,
            expected: None,
            gem_delta: -1,
            locked_out: false,
            lockout_remaining_s: 0,
            lesson_completed: false,
        },
    };
    for crash in [
        CrashPoint::BeforeJournal,
        CrashPoint::AfterJournal,
        CrashPoint::AfterTempWrite,
    ] {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let mut store = StateStore::open(dir.path()).map_err(|e| e.to_string())?;
        let mut old = store
            .get_or_create_state("ana", COURSE, Rules::default())
            .map_err(|e| e.to_string())?;
        old.gems.current = 2;
        store.commit(&old, transition(1)).map_err(|e| e.to_string())?;
        let mut new = old.clone();
        new.gems.current = 1;
        let _ = store.commit_interrupted(&new, transition(2), crash);
        drop(store);
        let text = fs::read_to_string(dir.path().join("state.json")).map_err(|e| e.to_string())?;
        serde_json::from_str::<serde_json::Value>(&text)
            .map_err(|e| format!("{crash:?}: snapshot unparseable: {e}"))?;
        let reopened = StateStore::open(dir.path()).map_err(|e| e.to_string())?;
        let got = reopened.get("ana", COURSE).ok_or("state lost")?;
        ensure(*got == old || *got == new, format!("{crash:?}: neither old nor new"))?;
    }
    Ok("3 kill points reload old or new".into())
}

fn api_hygiene() -> Check {
    let runtime = tokio::runtime::Builder::new_current_thread()
        .enable_all()
        .build()
        .map_err(|e| e.to_string())?;
    let (scanned, leaks) = runtime.block_on(async {
        let app = TestApp::new();
        play_through_scanning(&app, "ana").await
    });
    ensure(leaks.is_empty(), format!("{leaks:?}"))?;
    Ok(format!("{scanned} lesson payloads clean"))
}

#[test]
fn acceptance() {
    let checks: [Criterion; 11] = [
        ("worked_example_exercises", worked_examples),
        ("citation_cleaning", citation_cleaning),
        ("linker_oracle_equivalence", linker_oracle),
        ("coverage_conservation", coverage_conservation),
        ("threshold_boundary", threshold_boundary),
        ("determinism_golden_digest", determinism),
        ("generator_grader_compatibility", generator_grader),
        ("gem_state_machine", gem_state_machine),
        ("streak_rules", streak_rules),
        ("persistence_crash_safety", crash_safety),
        ("api_answer_hygiene", api_hygiene),
    ];
    let failed: Vec<&str> = checks
        .into_iter()
        .filter_map(|(name, f)| (!run(name, f)).then_some(name))
        .collect();
    println!("{} of 11 criteria passed", 11 - failed.len());
    assert!(failed.is_empty(), "failed: {failed:?}");
}
