//! Token normalization shared by the treebank reader, the lexicon reader and
//! the grader.

use unicode_normalization::UnicodeNormalization;

/// Canonical comparison key for a surface form: Unicode NFC followed by full
/// case folding.
///
/// Case folding can produce sequences that recompose differently under NFC,
/// so the fold is repeated until the result is stable. This makes `norm`
/// idempotent, which the grader and linker both rely on.
pub fn norm(form: &str) -> String {
    let mut current: String = form.nfc().collect();
    loop {
        let folded = caseless::default_case_fold_str(&current);
        let next: String = folded.nfc().collect();
        if next == current {
            return next;
        }
        current = next;
    }
}

/// Collapse runs of whitespace into single spaces and trim the ends.
pub fn squash_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}
