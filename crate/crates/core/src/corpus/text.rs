//! Tokenization and sentence splitting.
//!
//! Both operate on NFC-normalized text. Neither lowercases.

use unicode_normalization::UnicodeNormalization;

/// Marks split off the start or end of a whitespace-delimited chunk.
/// Apostrophes and hyphens are not in the set, so contractions such as
/// `don't` stay whole.
const DETACHED: &[char] = &[
    '.', ',', '?', '!', ';', ':', '"', '(', ')', '[', ']', '{', '}', '\u{2026}', '\u{201c}',
    '\u{201d}', '\u{ab}', '\u{bb}',
];

const TERMINATORS: &[char] = &['.', '?', '!'];

pub fn nfc(text: &str) -> String {
    text.nfc().collect()
}

pub fn is_detached_punct(c: char) -> bool {
    DETACHED.contains(&c)
}

/// Splits on whitespace, then peels leading and trailing punctuation marks
/// off each chunk as single-character tokens.
///
/// ```
/// use yesno_core::corpus::tokenize;
/// assert_eq!(tokenize("Did it?"), vec!["Did", "it", "?"]);
/// ```
pub fn tokenize(text: &str) -> Vec<String> {
    let text = nfc(text);
    let mut tokens = Vec::new();
    for chunk in text.split_whitespace() {
        let start = chunk
            .char_indices()
            .find(|&(_, c)| !is_detached_punct(c))
            .map(|(i, _)| i)
            .unwrap_or(chunk.len());
        let end = chunk
            .char_indices()
            .rev()
            .find(|&(_, c)| !is_detached_punct(c))
            .map(|(i, c)| i + c.len_utf8())
            .unwrap_or(start)
            .max(start);
        tokens.extend(chunk[..start].chars().map(String::from));
        if start < end {
            tokens.push(chunk[start..end].to_string());
        }
        tokens.extend(chunk[end..].chars().map(String::from));
    }
    tokens
}

/// Lowercased tokens, the form every keyword rule compares against.
pub fn lower_tokens(text: &str) -> Vec<String> {
    tokenize(text).into_iter().map(|t| t.to_lowercase()).collect()
}

/// Splits after `.`, `?` or `!` when followed by whitespace or the end of
/// the text. Terminators stay with their sentence, internal whitespace is
/// collapsed, and empty sentences are never returned.
pub fn split_sentences(text: &str) -> Vec<String> {
    let text = nfc(text);
    let mut sentences = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    for word in text.split_whitespace() {
        current.push(word);
        if word.ends_with(TERMINATORS) {
            sentences.push(current.join(" "));
            current.clear();
        }
    }
    if !current.is_empty() {
        sentences.push(current.join(" "));
    }
    sentences
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn tokenize_examples() {
        assert_eq!(
            tokenize("Do you like Mexican food?"),
            vec!["Do", "you", "like", "Mexican", "food", "?"]
        );
        assert_eq!(tokenize("Did it?"), vec!["Did", "it", "?"]);
        assert!(tokenize("").is_empty());
        assert!(tokenize("   \t ").is_empty());
    }

    #[test]
    fn tokenize_keeps_contractions_and_splits_runs() {
        assert_eq!(tokenize("don't?!"), vec!["don't", "?", "!"]);
        assert_eq!(tokenize("(yes)"), vec!["(", "yes", ")"]);
        assert_eq!(tokenize("..."), vec![".", ".", "."]);
        assert_eq!(tokenize("e.g. fine"), vec!["e.g", ".", "fine"]);
    }

    #[test]
    fn tokenize_normalizes_to_nfc() {
        // "e" + combining acute vs precomposed
        assert_eq!(tokenize("cafe\u{301}"), tokenize("caf\u{e9}"));
    }

    #[test]
    fn split_examples() {
        assert_eq!(split_sentences("Well. Maybe. Yes."), vec!["Well.", "Maybe.", "Yes."]);
        assert_eq!(
            split_sentences("Yeah, I think so. We had fun."),
            vec!["Yeah, I think so.", "We had fun."]
        );
        assert_eq!(split_sentences("no punctuation here"), vec!["no punctuation here"]);
        assert!(split_sentences("").is_empty());
    }

    #[test]
    fn split_needs_whitespace_after_terminator() {
        assert_eq!(split_sentences("3.5 is fine?Really! ok"), vec!["3.5 is fine?Really!", "ok"]);
    }

    fn word() -> impl Strategy<Value = String> {
        ("[a-zA-Z']{1,8}", prop::sample::select(vec!["", "", "?", ".", ",", "!"]))
            .prop_map(|(w, p)| format!("{w}{p}"))
    }

    proptest! {
        #[test]
        fn tokens_rejoin_to_input(words in prop::collection::vec(word(), 0..12)) {
            let input = words.join(" ");
            let mut rebuilt = String::new();
            for tok in tokenize(&input) {
                let punct = tok.chars().count() == 1 && tok.chars().all(is_detached_punct);
                if !rebuilt.is_empty() && !punct {
                    rebuilt.push(' ');
                }
                rebuilt.push_str(&tok);
            }
            prop_assert_eq!(rebuilt, input);
        }

        #[test]
        fn sentences_rejoin_to_normalized_input(text in "[a-z .?!\t\n]{0,60}") {
            let normalized = text.split_whitespace().collect::<Vec<_>>().join(" ");
            prop_assert_eq!(split_sentences(&text).join(" "), normalized);
            prop_assert!(split_sentences(&text).iter().all(|s| !s.is_empty()));
        }
    }
}
