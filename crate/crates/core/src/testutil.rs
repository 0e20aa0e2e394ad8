use std::collections::BTreeMap;

use crate::corpus::{Sentence, Token, TranslationText};

pub(crate) fn sentence(id: &str, language: &str, forms: &[&str], pt: Option<&str>) -> Sentence {
    let mut translations = BTreeMap::new();
    if let Some(pt) = pt {
        translations.insert(
            "pt".to_string(),
            TranslationText {
                lang_code: "pt".into(),
                raw: pt.into(),
                cleaned: pt.into(),
            },
        );
    }
    Sentence {
        sent_id: id.into(),
        language: language.into(),
        tokens: forms.iter().enumerate().map(|(i, f)| Token::new(i, f)).collect(),
        original_text: forms.join(" "),
        translations,
        source_file: "t".into(),
    }
}
