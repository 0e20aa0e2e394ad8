//! Synthetic inputs for the benchmarks.

use std::collections::BTreeMap;

use bilingo_core::corpus::{Sentence, Token, TranslationText};
use bilingo_core::lexicon::LexicalEntry;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SYLLABLES: &[&str] = &[
    "ka", "ra", "pi", "o", "ho", "na", "zu", "ze", "a?", "e", "ku", "wa", "ta", "hu",
];

fn word(rng: &mut ChaCha8Rng) -> String {
    (0..rng.random_range(2..5))
        .map(|_| SYLLABLES[rng.random_range(0..SYLLABLES.len())])
        .collect()
}

/// `n_sentences` single-language sentences and a lexicon of `n_entries`
/// forms drawn from the same vocabulary.
pub fn synthetic_corpus(n_sentences: usize, n_entries: usize, seed: u64) -> (Vec<Sentence>, Vec<LexicalEntry>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sentences = (0..n_sentences)
        .map(|i| {
            let tokens: Vec<Token> = (0..rng.random_range(2..10))
                .map(|j| Token::new(j, &word(&mut rng)))
                .collect();
            let pt = TranslationText {
                lang_code: "pt".into(),
                raw: "x".into(),
                cleaned: "x".into(),
            };
            Sentence {
                sent_id: format!("b{i:06}"),
                language: "Guajajara".into(),
                original_text: tokens.iter().map(|t| t.form.as_str()).collect::<Vec<_>>().join(" "),
                tokens,
                translations: BTreeMap::from([("pt".to_string(), pt)]),
                source_file: "bench".into(),
            }
        })
        .collect();
    let entries = (0..n_entries)
        .map(|i| LexicalEntry::new("Guajajara", &word(&mut rng), &format!("C{}", i % 200), "g"))
        .collect();
    (sentences, entries)
}

/// Translations with citations, mixed case and decomposed accents.
pub fn noisy_translations(n: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let mut s = String::from("Ele Colhe cacau e Jose\u{301}  foi a roça");
            if rng.random_bool(0.5) {
                s.push_str(&format!(
                    " (Harrison, {}:{})",
                    rng.random_range(1900..2030),
                    rng.random_range(1..400)
                ));
            }
            s
        })
        .collect()
}
