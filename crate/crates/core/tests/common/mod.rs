#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use yesno_core::{Corpus, Dialogue, Label, Turn};

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub struct Expected {
    pub relaxed: Vec<String>,
    pub strict: Vec<String>,
    pub acts: Vec<String>,
    pub distant_labels: BTreeMap<String, Label>,
}

pub fn expected() -> Expected {
    let text = std::fs::read_to_string(fixture("dialogues60.expected.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    let ids = |k: &str| -> Vec<String> {
        v[k].as_array()
            .unwrap()
            .iter()
            .map(|x| x.as_str().unwrap().to_string())
            .collect()
    };
    Expected {
        relaxed: ids("relaxed"),
        strict: ids("strict"),
        acts: ids("acts"),
        distant_labels: serde_json::from_value(v["distant_labels"].clone()).unwrap(),
    }
}

const WORDS: &[&str] = &[
    "do", "is", "can", "would", "what", "how", "why", "you", "it", "the", "train", "coffee", "like",
    "yes", "no", "yeah", "nope", "sure", "maybe", "nobody", "yesterday", "okay", "really",
];

fn random_text(rng: &mut ChaCha8Rng) -> String {
    let sentences = rng.random_range(1..=3);
    let mut parts = Vec::new();
    for _ in 0..sentences {
        let len = rng.random_range(1..=7);
        let words: Vec<&str> = (0..len).map(|_| WORDS[rng.random_range(0..WORDS.len())]).collect();
        let end = ["?", ".", "!", ""][rng.random_range(0..4)];
        parts.push(format!("{}{end}", words.join(" ")));
    }
    parts.join(" ")
}

/// A small corpus of random word salad heavy in question and keyword tokens.
pub fn random_corpus(seed: u64) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dialogues = (0..rng.random_range(1..=4))
        .map(|d| {
            let dialogue_id = format!("r{d}");
            let turns = (0..rng.random_range(1..=8))
                .map(|t| Turn {
                    turn_id: format!("r{d}-{t}"),
                    dialogue_id: dialogue_id.clone(),
                    ordinal: t,
                    speaker: if t % 2 == 0 { "a" } else { "b" }.into(),
                    text: random_text(&mut rng),
                    dialogue_act: None,
                })
                .collect();
            Dialogue { dialogue_id, turns }
        })
        .collect();
    Corpus::from_dialogues(dialogues).unwrap()
}

pub fn random_labels(rng: &mut ChaCha8Rng, n: usize) -> Vec<Label> {
    (0..n).map(|_| Label::ALL[rng.random_range(0..3)]).collect()
}
