//! Dialogue corpora in the utterance-per-line JSON format.
//!
//! Each line is an object with `id`, `conversation_id`, `speaker`, `text`,
//! and either an explicit `ordinal` or a `reply_to` link to the previous
//! turn. `meta.dialogue_act` carries an optional act tag. Unknown keys are
//! ignored so exports from common conversation toolkits load unchanged.

mod labels;
pub mod text;

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use labels::{normalize_label, FineLabelMap, Label, Mapped};
pub use text::{is_detached_punct, lower_tokens, nfc, split_sentences, tokenize};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Turn {
    pub turn_id: String,
    pub dialogue_id: String,
    pub ordinal: usize,
    pub speaker: String,
    pub text: String,
    pub dialogue_act: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dialogue {
    pub dialogue_id: String,
    pub turns: Vec<Turn>,
}

/// Position of a turn inside a [`Corpus`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TurnRef {
    pub dialogue: usize,
    pub turn: usize,
}

/// Dialogues ordered by id, turns by ordinal. Immutable once built.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    dialogues: Vec<Dialogue>,
    index: HashMap<String, TurnRef>,
}

impl PartialEq for Corpus {
    fn eq(&self, other: &Self) -> bool {
        self.dialogues == other.dialogues
    }
}

#[derive(Debug, Deserialize)]
struct RawUtterance {
    id: String,
    conversation_id: String,
    speaker: String,
    text: String,
    #[serde(default)]
    reply_to: Option<String>,
    #[serde(default)]
    ordinal: Option<usize>,
    #[serde(default)]
    meta: Option<RawMeta>,
}

#[derive(Debug, Default, Deserialize)]
struct RawMeta {
    #[serde(default)]
    dialogue_act: Option<String>,
}

#[derive(Serialize)]
struct OutUtterance<'a> {
    id: &'a str,
    conversation_id: &'a str,
    speaker: &'a str,
    text: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    reply_to: Option<&'a str>,
    ordinal: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    meta: Option<OutMeta<'a>>,
}

#[derive(Serialize)]
struct OutMeta<'a> {
    dialogue_act: &'a str,
}

impl Corpus {
    /// Builds a corpus from dialogues, sorting them by id and checking that
    /// turn ids are unique and ordinals are consecutive from zero.
    pub fn from_dialogues(mut dialogues: Vec<Dialogue>) -> Result<Self> {
        dialogues.sort_by(|a, b| a.dialogue_id.cmp(&b.dialogue_id));
        let mut index = HashMap::new();
        for (d, dialogue) in dialogues.iter().enumerate() {
            for (t, turn) in dialogue.turns.iter().enumerate() {
                if turn.ordinal != t || turn.dialogue_id != dialogue.dialogue_id {
                    return Err(Error::Ordering {
                        turn_id: turn.turn_id.clone(),
                        reason: format!(
                            "expected ordinal {t} in dialogue `{}`",
                            dialogue.dialogue_id
                        ),
                    });
                }
                if turn.text.trim().is_empty() {
                    return Err(Error::Parse {
                        line: 0,
                        message: format!("turn `{}` has empty text", turn.turn_id),
                    });
                }
                if index
                    .insert(turn.turn_id.clone(), TurnRef { dialogue: d, turn: t })
                    .is_some()
                {
                    return Err(Error::DuplicateId(turn.turn_id.clone()));
                }
            }
        }
        Ok(Self { dialogues, index })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(BufReader::new(file)).map_err(|e| match e {
            Error::Io { source, .. } => Error::io(path, source),
            other => other,
        })
    }

    pub fn read(reader: impl BufRead) -> Result<Self> {
        let mut groups: BTreeMap<String, Vec<RawUtterance>> = BTreeMap::new();
        let mut seen = HashMap::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io("<input>", e))?;
            if line.trim().is_empty() {
                continue;
            }
            let raw: RawUtterance = serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            if raw.text.trim().is_empty() {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("turn `{}` has empty text", raw.id),
                });
            }
            if seen.insert(raw.id.clone(), i + 1).is_some() {
                return Err(Error::DuplicateId(raw.id));
            }
            groups.entry(raw.conversation_id.clone()).or_default().push(raw);
        }

        let dialogues = groups
            .into_iter()
            .map(|(dialogue_id, raws)| {
                let ordered = order_turns(raws)?;
                let turns = ordered
                    .into_iter()
                    .enumerate()
                    .map(|(ordinal, raw)| Turn {
                        turn_id: raw.id,
                        dialogue_id: dialogue_id.clone(),
                        ordinal,
                        speaker: raw.speaker,
                        text: raw.text,
                        dialogue_act: raw.meta.and_then(|m| m.dialogue_act),
                    })
                    .collect();
                Ok(Dialogue { dialogue_id, turns })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_dialogues(dialogues)
    }

    /// Writes one line per turn with both `ordinal` and `reply_to` set.
    pub fn write(&self, mut out: impl Write) -> Result<()> {
        for dialogue in &self.dialogues {
            for (i, turn) in dialogue.turns.iter().enumerate() {
                let line = OutUtterance {
                    id: &turn.turn_id,
                    conversation_id: &turn.dialogue_id,
                    speaker: &turn.speaker,
                    text: &turn.text,
                    reply_to: i.checked_sub(1).map(|p| dialogue.turns[p].turn_id.as_str()),
                    ordinal: turn.ordinal,
                    meta: turn
                        .dialogue_act
                        .as_deref()
                        .map(|dialogue_act| OutMeta { dialogue_act }),
                };
                serde_json::to_writer(&mut out, &line)?;
                out.write_all(b"\n").map_err(|e| Error::io("<output>", e))?;
            }
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = std::io::BufWriter::new(file);
        self.write(&mut out)?;
        out.flush().map_err(|e| Error::io(path, e))
    }

    pub fn dialogues(&self) -> &[Dialogue] {
        &self.dialogues
    }

    pub fn turn_count(&self) -> usize {
        self.dialogues.iter().map(|d| d.turns.len()).sum()
    }

    pub fn locate(&self, turn_id: &str) -> Option<TurnRef> {
        self.index.get(turn_id).copied()
    }

    pub fn get(&self, r: TurnRef) -> Option<&Turn> {
        self.dialogues.get(r.dialogue)?.turns.get(r.turn)
    }

    pub fn turn(&self, turn_id: &str) -> Option<&Turn> {
        self.locate(turn_id).and_then(|r| self.get(r))
    }

    /// The turn following `r` in the same dialogue.
    pub fn next(&self, r: TurnRef) -> Option<&Turn> {
        self.get(TurnRef {
            dialogue: r.dialogue,
            turn: r.turn + 1,
        })
    }

    pub fn turns(&self) -> impl Iterator<Item = (TurnRef, &Turn)> {
        self.dialogues.iter().enumerate().flat_map(|(d, dialogue)| {
            dialogue
                .turns
                .iter()
                .enumerate()
                .map(move |(t, turn)| (TurnRef { dialogue: d, turn: t }, turn))
        })
    }
}

fn order_turns(raws: Vec<RawUtterance>) -> Result<Vec<RawUtterance>> {
    let with_ordinal = raws.iter().filter(|r| r.ordinal.is_some()).count();
    if with_ordinal == raws.len() {
        let mut raws = raws;
        raws.sort_by_key(|r| r.ordinal);
        if let Some((i, bad)) = raws
            .iter()
            .enumerate()
            .find(|(i, r)| r.ordinal != Some(*i))
        {
            return Err(Error::Ordering {
                turn_id: bad.id.clone(),
                reason: format!("ordinal {:?} where {i} was expected", bad.ordinal.unwrap()),
            });
        }
        return Ok(raws);
    }
    if with_ordinal > 0 {
        let bad = raws.iter().find(|r| r.ordinal.is_none()).unwrap();
        return Err(Error::Ordering {
            turn_id: bad.id.clone(),
            reason: "missing ordinal while other turns in the conversation have one".into(),
        });
    }

    let ids: HashMap<&str, usize> = raws.iter().enumerate().map(|(i, r)| (r.id.as_str(), i)).collect();
    let mut root = None;
    let mut child: HashMap<usize, usize> = HashMap::new();
    for (i, raw) in raws.iter().enumerate() {
        match raw.reply_to.as_deref() {
            None => {
                if root.replace(i).is_some() {
                    return Err(Error::Ordering {
                        turn_id: raw.id.clone(),
                        reason: "second turn without reply_to in the conversation".into(),
                    });
                }
            }
            Some(parent) => {
                let &p = ids.get(parent).ok_or_else(|| Error::Ordering {
                    turn_id: raw.id.clone(),
                    reason: format!("reply_to `{parent}` is not in the conversation"),
                })?;
                if child.insert(p, i).is_some() {
                    return Err(Error::Ordering {
                        turn_id: raw.id.clone(),
                        reason: format!("`{parent}` already has a reply"),
                    });
                }
            }
        }
    }
    let Some(mut at) = root else {
        return Err(Error::Ordering {
            turn_id: raws[0].id.clone(),
            reason: "reply chain has no starting turn".into(),
        });
    };
    let mut order = vec![at];
    while let Some(&next) = child.get(&at) {
        order.push(next);
        at = next;
    }
    if order.len() != raws.len() {
        let mut visited = vec![false; raws.len()];
        order.iter().for_each(|&i| visited[i] = true);
        let stray = visited.iter().position(|v| !v).unwrap();
        return Err(Error::Ordering {
            turn_id: raws[stray].id.clone(),
            reason: "turn is not reachable from the start of the reply chain".into(),
        });
    }
    let mut slots: Vec<Option<RawUtterance>> = raws.into_iter().map(Some).collect();
    Ok(order.into_iter().map(|i| slots[i].take().unwrap()).collect())
}
