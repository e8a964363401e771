//! Distant supervision: strict-rule matches whose answers carry a polar
//! keyword become Yes/No training instances.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Label};
use crate::error::{Error, Result};
use crate::qid::{window_tokens, QidMatch};
use crate::seeding;

const BALANCE_STREAM: u64 = 0x4241_4c41;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Gold,
    Distant,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Origin {
    #[serde(default)]
    pub dialogue_id: String,
    #[serde(default)]
    pub question_turn_id: String,
    #[serde(default)]
    pub answer_turn_id: String,
}

impl std::fmt::Display for Origin {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "({}, {}, {})",
            self.dialogue_id, self.question_turn_id, self.answer_turn_id
        )
    }
}

/// A question/answer pair with optional interpretation label. This is the
/// interchange record for gold sets, distant sets, and exported epochs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QAInstance {
    #[serde(default)]
    pub context: Vec<String>,
    pub question: String,
    pub answer: String,
    #[serde(default)]
    pub label: Option<Label>,
    pub source: Source,
    #[serde(default)]
    pub origin: Origin,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistantConfig {
    pub yes_keywords: BTreeSet<String>,
    pub no_keywords: BTreeSet<String>,
    pub context_window: usize,
    pub answer_sentence_window: usize,
}

impl Default for DistantConfig {
    fn default() -> Self {
        let set = |w: &[&str]| w.iter().map(|s| s.to_string()).collect();
        Self {
            yes_keywords: set(&["yes", "yea", "yup", "yep", "yeah", "sure"]),
            no_keywords: set(&["no", "nope"]),
            context_window: 1,
            answer_sentence_window: 2,
        }
    }
}

impl DistantConfig {
    pub fn validate(&self) -> Result<()> {
        match self.yes_keywords.intersection(&self.no_keywords).next() {
            Some(w) => Err(Error::InvalidConfig(format!(
                "`{w}` is both a yes and a no keyword"
            ))),
            None => Ok(()),
        }
    }
}

/// Yes or No when exactly one polarity appears among the whole lowercased
/// tokens of the answer's first sentences; `None` when neither or both do.
pub fn label_direct_answer(answer_text: &str, config: &DistantConfig) -> Option<Label> {
    let (mut yes, mut no) = (false, false);
    for tok in window_tokens(answer_text, config.answer_sentence_window) {
        yes |= config.yes_keywords.contains(&tok);
        no |= config.no_keywords.contains(&tok);
    }
    match (yes, no) {
        (true, false) => Some(Label::Yes),
        (false, true) => Some(Label::No),
        _ => None,
    }
}

pub fn extract_distant_instances(
    corpus: &Corpus,
    matches: &[QidMatch],
    config: &DistantConfig,
) -> Result<Vec<QAInstance>> {
    config.validate()?;
    let mut out = Vec::new();
    for m in matches {
        let answer_id = m
            .answer_turn_id
            .as_deref()
            .ok_or_else(|| Error::MalformedMatch(m.question_turn_id.clone()))?;
        let q_ref = corpus
            .locate(&m.question_turn_id)
            .ok_or_else(|| Error::UnknownTurn(m.question_turn_id.clone()))?;
        let answer = corpus
            .turn(answer_id)
            .ok_or_else(|| Error::UnknownTurn(answer_id.to_string()))?;
        let Some(label) = label_direct_answer(&answer.text, config) else {
            continue;
        };
        let dialogue = &corpus.dialogues()[q_ref.dialogue];
        let first = q_ref.turn.saturating_sub(config.context_window);
        out.push(QAInstance {
            context: dialogue.turns[first..q_ref.turn]
                .iter()
                .map(|t| t.text.clone())
                .collect(),
            question: dialogue.turns[q_ref.turn].text.clone(),
            answer: answer.text.clone(),
            label: Some(label),
            source: Source::Distant,
            origin: Origin {
                dialogue_id: dialogue.dialogue_id.clone(),
                question_turn_id: m.question_turn_id.clone(),
                answer_turn_id: answer_id.to_string(),
            },
        });
    }
    out.sort_by(|a, b| a.origin.cmp(&b.origin));
    Ok(out)
}

/// Downsamples every label present to the size of the rarest one, then
/// shuffles. Instances are first sorted by origin so the result does not
/// depend on input order.
pub fn balance_dataset(instances: &[QAInstance], seed: u64) -> Result<Vec<QAInstance>> {
    let mut sorted: Vec<&QAInstance> = instances.iter().collect();
    sorted.sort_by(|a, b| a.origin.cmp(&b.origin));
    let mut by_label: BTreeMap<Label, Vec<&QAInstance>> = BTreeMap::new();
    for inst in sorted {
        let label = inst
            .label
            .ok_or_else(|| Error::Unlabeled(inst.origin.to_string()))?;
        by_label.entry(label).or_default().push(inst);
    }
    let Some(minority) = by_label.values().map(Vec::len).min() else {
        return Ok(Vec::new());
    };
    let mut rng = seeding::stream(seed, &[BALANCE_STREAM]);
    let mut out = Vec::with_capacity(minority * by_label.len());
    for group in by_label.values() {
        let mut picked = index::sample(&mut rng, group.len(), minority).into_vec();
        picked.sort_unstable();
        out.extend(picked.into_iter().map(|i| group[i].clone()));
    }
    out.shuffle(&mut rng);
    Ok(out)
}

pub fn label_counts(instances: &[QAInstance]) -> BTreeMap<Option<Label>, usize> {
    let mut counts = BTreeMap::new();
    for inst in instances {
        *counts.entry(inst.label).or_default() += 1;
    }
    counts
}
