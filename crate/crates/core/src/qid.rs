//! Yes-no question identification.
//!
//! Relaxed rules look only at the question turn. Strict rules additionally
//! require the next turn of the same dialogue to open with a direct answer.
//! Corpora annotated with dialogue acts can be scanned by act tag instead.

use std::collections::BTreeSet;
use std::io::Write;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{lower_tokens, split_sentences, Corpus, Turn, TurnRef};
use crate::error::{Error, Result};
use crate::seeding;

const SAMPLE_STREAM: u64 = 0x5143_4944;

fn set(words: &[&str]) -> BTreeSet<String> {
    words.iter().map(|w| w.to_string()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QidRuleConfig {
    pub auxiliary_verbs: BTreeSet<String>,
    pub wh_words: BTreeSet<String>,
    pub min_token_count_exclusive: usize,
    pub answer_keywords: BTreeSet<String>,
    pub answer_sentence_window: usize,
}

impl Default for QidRuleConfig {
    fn default() -> Self {
        Self {
            auxiliary_verbs: set(&[
                "do", "does", "did", "don't", "doesn't", "didn't", "is", "isn't", "are", "aren't",
                "was", "wasn't", "were", "weren't", "have", "haven't", "has", "hasn't", "can",
                "can't", "could", "couldn't", "will", "won't", "would", "wouldn't", "may",
                "might",
            ]),
            wh_words: set(&[
                "what", "when", "where", "which", "who", "whom", "whose", "why", "how",
            ]),
            min_token_count_exclusive: 3,
            answer_keywords: set(&["yes", "yea", "yup", "yep", "yeah", "sure", "no", "nope"]),
            answer_sentence_window: 2,
        }
    }
}

impl QidRuleConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(w) = self.auxiliary_verbs.intersection(&self.wh_words).next() {
            return Err(Error::InvalidConfig(format!(
                "`{w}` is both an auxiliary verb and a wh-word"
            )));
        }
        Ok(())
    }
}

/// Dialogue-act tags that mark a yes-no question, matched verbatim.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogueActConfig {
    pub yes_no_act_labels: BTreeSet<String>,
}

pub const SWDA_YES_NO_ACTS: &[&str] = &[
    "qh", "qy", "qy^d", "^g", "qy^t", "qy^r", "qy^m", "qy^h", "qy^c", "qy^2", "qy(^q)", "qy^g",
    "qy^g^t", "qy^g^r", "qy^g^c", "qy^d^t", "qy^d^r", "qy^d^m", "qy^d^h", "qy^d^c", "qy^d(^q)",
    "qy^c^r",
];

pub const MRDA_YES_NO_ACTS: &[&str] = &["qy", "g"];

impl DialogueActConfig {
    pub fn swda() -> Self {
        Self {
            yes_no_act_labels: set(SWDA_YES_NO_ACTS),
        }
    }

    pub fn mrda() -> Self {
        Self {
            yes_no_act_labels: set(MRDA_YES_NO_ACTS),
        }
    }
}

/// Union of the SWDA and MRDA tag lists.
impl Default for DialogueActConfig {
    fn default() -> Self {
        let mut labels = set(SWDA_YES_NO_ACTS);
        labels.extend(MRDA_YES_NO_ACTS.iter().map(|s| s.to_string()));
        Self {
            yes_no_act_labels: labels,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QidMode {
    Relaxed,
    Strict,
    DialogueAct,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QidMatch {
    pub dialogue_id: String,
    pub question_turn_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer_turn_id: Option<String>,
    pub mode: QidMode,
    #[serde(default)]
    pub has_direct_answer: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QidStats {
    pub total_turns: usize,
    pub match_count: usize,
    pub precision_sample: Vec<QidMatch>,
    pub sample_seed: u64,
}

fn ends_with_question_mark(text: &str) -> bool {
    text.trim_end().ends_with('?')
}

pub fn is_yes_no_question_relaxed(turn: &Turn, config: &QidRuleConfig) -> bool {
    if !ends_with_question_mark(&turn.text) {
        return false;
    }
    let tokens = lower_tokens(&turn.text);
    tokens.len() > config.min_token_count_exclusive
        && tokens.iter().any(|t| config.auxiliary_verbs.contains(t))
        && !tokens.iter().any(|t| config.wh_words.contains(t))
}

/// Lowercased tokens of the first `window` sentences of `text`.
pub(crate) fn window_tokens(text: &str, window: usize) -> impl Iterator<Item = String> {
    split_sentences(text)
        .into_iter()
        .take(window)
        .flat_map(|s| lower_tokens(&s))
}

pub fn has_direct_answer(next_turn: &Turn, config: &QidRuleConfig) -> bool {
    window_tokens(&next_turn.text, config.answer_sentence_window)
        .any(|t| config.answer_keywords.contains(&t))
}

pub fn identify_by_dialogue_acts(turn: &Turn, config: &DialogueActConfig) -> Result<bool> {
    let act = turn
        .dialogue_act
        .as_deref()
        .ok_or_else(|| Error::NotAnnotated(turn.turn_id.clone()))?;
    Ok(config.yes_no_act_labels.contains(act))
}

fn scan_dialogue(
    corpus: &Corpus,
    d: usize,
    mode: QidMode,
    rules: &QidRuleConfig,
    acts: &DialogueActConfig,
) -> Result<Vec<QidMatch>> {
    let dialogue = &corpus.dialogues()[d];
    let mut out = Vec::new();
    for (t, turn) in dialogue.turns.iter().enumerate() {
        let question = match mode {
            QidMode::Relaxed | QidMode::Strict => is_yes_no_question_relaxed(turn, rules),
            QidMode::DialogueAct => identify_by_dialogue_acts(turn, acts)?,
        };
        if !question {
            continue;
        }
        let answer = corpus.next(TurnRef { dialogue: d, turn: t });
        let direct = answer.is_some_and(|a| has_direct_answer(a, rules));
        if mode == QidMode::Strict && !direct {
            continue;
        }
        out.push(QidMatch {
            dialogue_id: dialogue.dialogue_id.clone(),
            question_turn_id: turn.turn_id.clone(),
            answer_turn_id: answer.map(|a| a.turn_id.clone()),
            mode,
            has_direct_answer: direct,
        });
    }
    Ok(out)
}

/// Scans every turn of the corpus and draws a seeded uniform sample of the
/// matches for manual precision auditing. Dialogues are scanned in
/// parallel; output order is always (dialogue id, ordinal).
pub fn scan_corpus(
    corpus: &Corpus,
    mode: QidMode,
    rules: &QidRuleConfig,
    acts: &DialogueActConfig,
    sample_size: usize,
    seed: u64,
) -> Result<(Vec<QidMatch>, QidStats)> {
    rules.validate()?;
    let per_dialogue = (0..corpus.dialogues().len())
        .into_par_iter()
        .map(|d| scan_dialogue(corpus, d, mode, rules, acts))
        .collect::<Result<Vec<_>>>()?;
    let matches: Vec<QidMatch> = per_dialogue.into_iter().flatten().collect();

    let k = sample_size.min(matches.len());
    let mut picked = index::sample(&mut seeding::stream(seed, &[SAMPLE_STREAM]), matches.len(), k)
        .into_vec();
    picked.sort_unstable();
    let stats = QidStats {
        total_turns: corpus.turn_count(),
        match_count: matches.len(),
        precision_sample: picked.into_iter().map(|i| matches[i].clone()).collect(),
        sample_seed: seed,
    };
    Ok((matches, stats))
}

fn tsv_cell(s: &str) -> String {
    s.replace(['\t', '\n', '\r'], " ")
}

/// Writes the precision sample as `dialogue_id  question  answer` rows.
pub fn write_audit(corpus: &Corpus, sample: &[QidMatch], mut out: impl Write) -> Result<()> {
    let io = |e| Error::io("<audit>", e);
    writeln!(out, "dialogue_id\tquestion\tanswer").map_err(io)?;
    for m in sample {
        let question = corpus
            .turn(&m.question_turn_id)
            .ok_or_else(|| Error::UnknownTurn(m.question_turn_id.clone()))?;
        let answer = m
            .answer_turn_id
            .as_deref()
            .and_then(|id| corpus.turn(id))
            .map(|t| t.text.as_str())
            .unwrap_or("");
        writeln!(
            out,
            "{}\t{}\t{}",
            tsv_cell(&m.dialogue_id),
            tsv_cell(&question.text),
            tsv_cell(answer)
        )
        .map_err(io)?;
    }
    Ok(())
}

pub fn write_matches(matches: &[QidMatch], mut out: impl Write) -> Result<()> {
    for m in matches {
        serde_json::to_writer(&mut out, m)?;
        out.write_all(b"\n").map_err(|e| Error::io("<matches>", e))?;
    }
    Ok(())
}

pub fn read_matches(reader: impl std::io::BufRead) -> Result<Vec<QidMatch>> {
    crate::jsonl::read_lines(reader)
}
