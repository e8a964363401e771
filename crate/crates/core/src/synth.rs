//! Synthetic dialogue domains for end-to-end checks of the training
//! strategies.
//!
//! A source domain supplies labeled question/answer pairs over all three
//! labels. A shifted target domain supplies (a) a dialogue corpus whose
//! yes-no questions are answered with planted polar keywords, from which
//! distant instances are mined, and (b) a labeled test set of indirect
//! answers that includes Middle. Answers are built from label cue phrases
//! plus neutral filler. Some cues exist only in one domain, some are
//! shared, and a few switch polarity between domains. Some source fillers
//! co-occur with a label in the source domain but are neutral in the target.

use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::blend::{build_blended_plan, build_gold_only_plan, build_merged_plan, BlendConfig, Decay, MergeConfig};
use crate::corpus::{Corpus, Dialogue, Label, Turn};
use crate::distant::{balance_dataset, extract_distant_instances, DistantConfig, Origin, QAInstance, Source};
use crate::error::Result;
use crate::eval::{score, EvalReport};
use crate::model::{predict_all, train, Field, TrainConfig};
use crate::qid::{scan_corpus, DialogueActConfig, QidMode, QidRuleConfig};
use crate::seeding;

const GOLD_STREAM: u64 = 1;
const CORPUS_STREAM: u64 = 2;
const TEST_STREAM: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Domain {
    Source,
    Target,
}

struct Lexicon {
    source_yes: &'static [&'static str],
    source_no: &'static [&'static str],
    target_yes: &'static [&'static str],
    target_no: &'static [&'static str],
    shared_yes: &'static [&'static str],
    shared_no: &'static [&'static str],
    middle: &'static [&'static str],
    /// Yes in the source domain, No in the target domain.
    flipped: &'static [&'static str],
    /// No in the source domain, Yes in the target domain.
    reverse_flipped: &'static [&'static str],
    source_filler: &'static [&'static str],
    target_filler: &'static [&'static str],
    /// Co-occur with Yes (first) or No (second) answers in the source
    /// domain only.
    leaning_filler: [&'static [&'static str]; 2],
    source_questions: &'static [&'static str],
    target_questions: &'static [&'static str],
}

const LEXICON: Lexicon = Lexicon {
    source_yes: &[
        "i love it",
        "that sounds great",
        "count me in",
        "i do that every week",
        "it is my favorite",
        "i would enjoy that a lot",
        "i grew up eating it",
        "i could do it daily",
    ],
    source_no: &[
        "i hate it",
        "not my thing",
        "i am allergic",
        "i never touch it",
        "that bores me",
        "i would rather stay home",
        "it makes me feel sick",
        "i gave it up years ago",
    ],
    target_yes: &[
        "please book it",
        "that is the one i need",
        "go ahead and reserve it",
        "put me down for that",
        "that fits my schedule",
        "i will take it",
        "lock it in for me",
        "add it to my itinerary",
    ],
    target_no: &[
        "keep my current booking",
        "cancel that request",
        "i will skip it",
        "that is over my budget",
        "leave it as is",
        "do not change anything",
        "i already have one",
        "take it off the reservation",
    ],
    shared_yes: &["absolutely", "of course", "definitely", "that works for me"],
    shared_no: &["not really", "i would not", "not at all", "i doubt it"],
    middle: &[
        "it depends",
        "hard to say",
        "i am not certain",
        "maybe",
        "i have mixed feelings",
        "could go either way",
        "let me think about it",
        "i cannot decide yet",
    ],
    flipped: &["same as before", "just like last time", "the usual"],
    reverse_flipped: &["something new", "a change for once", "first time for everything"],
    source_filler: &[
        "my sister cooks a lot",
        "the place downtown is nice",
        "we talked about it yesterday",
        "my friends say the same",
        "it was in the news",
    ],
    target_filler: &[
        "my flight lands at noon",
        "the agent called earlier",
        "i checked the website",
        "the hotel is near the airport",
        "my manager approved the trip",
    ],
    leaning_filler: [
        &["on the weekend", "with my friends"],
        &["after work", "on weekdays"],
    ],
    source_questions: &[
        "Do you like {}?",
        "Would you try {} this weekend?",
        "Have you ever had {}?",
        "Are you a fan of {}?",
        "Can you cook {} at home?",
    ],
    target_questions: &[
        "Do you want {} on this trip?",
        "Would you like {} for the return leg?",
        "Should I add {} to your booking?",
        "Can I reserve {} for you?",
        "Is {} okay for your flight?",
    ],
};

const SOURCE_TOPICS: &[&str] = &[
    "mexican food", "sushi", "hiking", "jazz", "board games", "spicy curry", "camping",
    "street tacos", "opera", "baking bread",
];
const TARGET_TOPICS: &[&str] = &[
    "a window seat", "a rental car", "an extra bag", "the early flight", "travel insurance",
    "a hotel shuttle", "priority boarding", "a vegetarian meal", "lounge access", "a later connection",
];

const YES_KEYWORDS: &[&str] = &["yes", "yeah", "yep", "yup", "yea", "sure"];
const NO_KEYWORDS: &[&str] = &["no", "nope"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub gold_size: usize,
    /// Direct-answer yes-no exchanges planted in the target corpus; half Yes.
    pub distant_size: usize,
    pub test_size: usize,
    /// Label proportions (Yes, No, Middle).
    pub gold_mix: [f64; 3],
    pub test_mix: [f64; 3],
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 13,
            gold_size: 2000,
            distant_size: 8000,
            test_size: 600,
            gold_mix: [0.40, 0.40, 0.20],
            test_mix: [0.45, 0.35, 0.20],
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticSuite {
    pub gold: Vec<QAInstance>,
    pub target_corpus: Corpus,
    /// Planted label of every direct-answer exchange, by question turn id.
    pub latent: BTreeMap<String, Label>,
    pub test: Vec<QAInstance>,
    /// Size of the mined set returned by `distant_instances`.
    pub distant_size: usize,
}

fn pick<'a>(rng: &mut ChaCha8Rng, items: &[&'a str]) -> &'a str {
    items.choose(rng).copied().expect("non-empty word list")
}

/// Exactly `round(mix * n)` of each label (remainder to Yes), shuffled.
fn label_sequence(rng: &mut ChaCha8Rng, n: usize, mix: [f64; 3]) -> Vec<Label> {
    use rand::seq::SliceRandom;
    let no = (mix[1] * n as f64).round() as usize;
    let middle = ((mix[2] * n as f64).round() as usize).min(n - no.min(n));
    let yes = n - no.min(n) - middle;
    let mut labels: Vec<Label> = std::iter::repeat_n(Label::Yes, yes)
        .chain(std::iter::repeat_n(Label::No, no.min(n)))
        .chain(std::iter::repeat_n(Label::Middle, middle))
        .collect();
    labels.shuffle(rng);
    labels
}

fn question(rng: &mut ChaCha8Rng, domain: Domain) -> String {
    let (templates, topics) = match domain {
        Domain::Source => (LEXICON.source_questions, SOURCE_TOPICS),
        Domain::Target => (LEXICON.target_questions, TARGET_TOPICS),
    };
    pick(rng, templates).replace("{}", pick(rng, topics))
}

fn cue(rng: &mut ChaCha8Rng, domain: Domain, label: Label) -> &'static str {
    let l = &LEXICON;
    let roll: f64 = rng.random();
    match (label, domain) {
        (Label::Middle, _) => pick(rng, l.middle),
        (Label::Yes, Domain::Source) if roll < 0.25 => pick(rng, l.flipped),
        (Label::No, Domain::Target) if roll < 0.25 => pick(rng, l.flipped),
        (Label::No, Domain::Source) if roll < 0.25 => pick(rng, l.reverse_flipped),
        (Label::Yes, Domain::Target) if roll < 0.25 => pick(rng, l.reverse_flipped),
        (Label::Yes, _) if roll < 0.40 => pick(rng, l.shared_yes),
        (Label::No, _) if roll < 0.40 => pick(rng, l.shared_no),
        (Label::Yes, Domain::Source) => pick(rng, l.source_yes),
        (Label::No, Domain::Source) => pick(rng, l.source_no),
        (Label::Yes, Domain::Target) => pick(rng, l.target_yes),
        (Label::No, Domain::Target) => pick(rng, l.target_no),
    }
}

/// An indirect answer: a cue phrase and some filler, no polar keyword.
fn indirect_answer(rng: &mut ChaCha8Rng, domain: Domain, label: Label) -> String {
    let mut parts = vec![cue(rng, domain, label).to_string()];
    if label == Label::Middle {
        // hedges come stacked and without elaboration
        parts.push(pick(rng, LEXICON.middle).to_string());
        return sentence(parts);
    }
    let filler = match domain {
        Domain::Source => LEXICON.source_filler,
        Domain::Target => LEXICON.target_filler,
    };
    if rng.random_bool(0.7) {
        parts.push(pick(rng, filler).to_string());
    }
    let leaning = match (domain, label) {
        (Domain::Source, Label::Yes) => Some(LEXICON.leaning_filler[0]),
        (Domain::Source, Label::No) => Some(LEXICON.leaning_filler[1]),
        (_, Label::Middle) => None,
        (Domain::Target, _) => Some(*LEXICON.leaning_filler.choose(rng).unwrap()),
    };
    if let Some(words) = leaning {
        if rng.random_bool(0.6) {
            parts.push(pick(rng, words).to_string());
        }
    }
    sentence(parts)
}

fn sentence(parts: Vec<String>) -> String {
    let text = parts.join(" ");
    text[..1].to_uppercase() + &text[1..] + "."
}

fn direct_answer(rng: &mut ChaCha8Rng, label: Label) -> String {
    let keyword = match label {
        Label::Yes => pick(rng, YES_KEYWORDS),
        _ => pick(rng, NO_KEYWORDS),
    };
    let rest = indirect_answer(rng, Domain::Target, label);
    let mut keyword = keyword.to_string();
    keyword[..1].make_ascii_uppercase();
    format!("{keyword}, {}{}", &rest[..1].to_lowercase(), &rest[1..])
}

fn labeled(question: String, answer: String, label: Label, origin: Origin) -> QAInstance {
    QAInstance {
        context: vec![],
        question,
        answer,
        label: Some(label),
        source: Source::Gold,
        origin,
    }
}

fn synthetic_origin(prefix: &str, i: usize) -> Origin {
    Origin {
        dialogue_id: format!("{prefix}{i:05}"),
        question_turn_id: format!("{prefix}{i:05}-q"),
        answer_turn_id: format!("{prefix}{i:05}-a"),
    }
}

const OPENERS: &[&str] = &[
    "Good morning, thanks for calling.",
    "Hi, I need help with my trip.",
    "Hello again.",
    "Thanks for waiting.",
];
const WH_QUESTIONS: &[&str] = &[
    "What time does your flight leave?",
    "Where are you flying from today?",
    "How many bags are you bringing?",
    "Which airport works best for you?",
];
const STATEMENTS: &[&str] = &[
    "Let me pull up your reservation.",
    "I see two options on the screen.",
    "The system is a bit slow today.",
    "Okay, I have noted that.",
];
const SHORT_QUESTIONS: &[&str] = &["Really?", "Is it?", "Right?"];

fn target_corpus(rng: &mut ChaCha8Rng, config: &SynthConfig) -> (Corpus, BTreeMap<String, Label>) {
    // some planted pairs are lost to strict matching and balancing
    let planted = config.distant_size + config.distant_size * 2 / 5;
    let labels = label_sequence(rng, planted, [0.5, 0.5, 0.0]);
    let mut latent = BTreeMap::new();
    let mut dialogues = Vec::new();
    let mut remaining = labels.into_iter().peekable();
    let mut d = 0;
    while remaining.peek().is_some() {
        let dialogue_id = format!("air{d:05}");
        let mut texts: Vec<String> = vec![pick(rng, OPENERS).into()];
        let mut planted = Vec::new();
        if rng.random_bool(0.5) {
            texts.push(pick(rng, WH_QUESTIONS).into());
            texts.push(pick(rng, STATEMENTS).into());
        }
        for _ in 0..rng.random_range(1..=2) {
            let Some(label) = remaining.next() else { break };
            planted.push((texts.len(), label));
            texts.push(question(rng, Domain::Target));
            texts.push(direct_answer(rng, label));
            if rng.random_bool(0.3) {
                // yes-no question with an indirect answer: relaxed match only
                texts.push(question(rng, Domain::Target));
                let l = *[Label::Yes, Label::No, Label::Middle].choose(rng).unwrap();
                texts.push(indirect_answer(rng, Domain::Target, l));
            }
        }
        if rng.random_bool(0.3) {
            texts.push(pick(rng, SHORT_QUESTIONS).into());
        }
        texts.push(pick(rng, STATEMENTS).into());
        let turns = texts
            .into_iter()
            .enumerate()
            .map(|(t, text)| Turn {
                turn_id: format!("{dialogue_id}-{t:02}"),
                dialogue_id: dialogue_id.clone(),
                ordinal: t,
                speaker: if t % 2 == 0 { "agent" } else { "customer" }.into(),
                text,
                dialogue_act: None,
            })
            .collect::<Vec<_>>();
        for (t, label) in planted {
            latent.insert(turns[t].turn_id.clone(), label);
        }
        dialogues.push(Dialogue { dialogue_id, turns });
        d += 1;
    }
    let corpus = Corpus::from_dialogues(dialogues).expect("generated corpus is well formed");
    (corpus, latent)
}

pub fn generate(config: &SynthConfig) -> SyntheticSuite {
    let mut rng = seeding::stream(config.seed, &[GOLD_STREAM]);
    let gold = label_sequence(&mut rng, config.gold_size, config.gold_mix)
        .into_iter()
        .enumerate()
        .map(|(i, label)| {
            let q = question(&mut rng, Domain::Source);
            let a = indirect_answer(&mut rng, Domain::Source, label);
            labeled(q, a, label, synthetic_origin("src", i))
        })
        .collect();

    let mut rng = seeding::stream(config.seed, &[CORPUS_STREAM]);
    let (target_corpus, latent) = target_corpus(&mut rng, config);

    let mut rng = seeding::stream(config.seed, &[TEST_STREAM]);
    let test = label_sequence(&mut rng, config.test_size, config.test_mix)
        .into_iter()
        .enumerate()
        .map(|(i, label)| {
            let q = question(&mut rng, Domain::Target);
            let a = indirect_answer(&mut rng, Domain::Target, label);
            labeled(q, a, label, synthetic_origin("tst", i))
        })
        .collect();

    SyntheticSuite {
        gold,
        target_corpus,
        latent,
        test,
        distant_size: config.distant_size,
    }
}

impl SyntheticSuite {
    /// Mines the target corpus with strict rules and keyword labeling, then
    /// balances the result and keeps `distant_size / 2` instances per label.
    pub fn distant_instances(&self, seed: u64) -> Result<Vec<QAInstance>> {
        let (matches, _) = scan_corpus(
            &self.target_corpus,
            QidMode::Strict,
            &QidRuleConfig::default(),
            &DialogueActConfig::default(),
            0,
            seed,
        )?;
        let mined = extract_distant_instances(&self.target_corpus, &matches, &DistantConfig::default())?;
        let per_label = self.distant_size / 2;
        let mut kept = BTreeMap::<Label, usize>::new();
        let balanced = balance_dataset(&mined, seed)?;
        let out: Vec<QAInstance> = balanced
            .into_iter()
            .filter(|x| {
                let n = kept.entry(x.label.expect("mined instances are labeled")).or_default();
                *n += 1;
                *n <= per_label
            })
            .collect();
        if out.len() < 2 * per_label {
            log::warn!("mined {} distant instances, wanted {}", out.len(), 2 * per_label);
        }
        Ok(out)
    }
}

/// Curriculum settings for comparing training strategies on a suite.
/// Gold-only and merged runs train for `m + n` epochs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendConfig {
    pub alpha: f64,
    pub m: usize,
    pub n: usize,
    pub train: TrainConfig,
}

impl Default for TrendConfig {
    /// Questions in the generated domains carry topic but no label signal,
    /// so only answers are featurized.
    fn default() -> Self {
        Self {
            alpha: 0.5,
            m: 4,
            n: 2,
            train: TrainConfig {
                learning_rate: 0.2,
                fields_used: [Field::Answer].into_iter().collect(),
                ..TrainConfig::default()
            },
        }
    }
}

/// Scores on the target test set per training strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendResult {
    pub gold_only: EvalReport,
    pub merged: EvalReport,
    pub merged_capped: EvalReport,
    pub blended: EvalReport,
    pub gold_size: usize,
    pub distant_size: usize,
}

pub fn run_trend(suite: &SyntheticSuite, config: &TrendConfig, seed: u64) -> Result<TrendResult> {
    let distant = suite.distant_instances(seed)?;
    let epochs = config.m + config.n;
    let gold_labels: Vec<Label> = suite.test.iter().map(|x| x.label.unwrap()).collect();
    let evaluate = |plan| -> Result<EvalReport> {
        let model = train(&plan, &config.train)?;
        let predicted: Vec<Label> = predict_all(&model, &suite.test).into_iter().map(|p| p.label).collect();
        score(&gold_labels, &predicted)
    };
    let merge = |cap| MergeConfig {
        epochs,
        seed,
        distant_cap: cap,
    };
    Ok(TrendResult {
        gold_only: evaluate(build_gold_only_plan(&suite.gold, epochs, seed)?)?,
        merged: evaluate(build_merged_plan(&suite.gold, &distant, &merge(None))?)?,
        merged_capped: evaluate(build_merged_plan(
            &suite.gold,
            &distant,
            &merge(Some(suite.gold.len())),
        )?)?,
        blended: evaluate(build_blended_plan(
            &suite.gold,
            &distant,
            &BlendConfig {
                alpha: config.alpha,
                m: config.m,
                n: config.n,
                seed,
                distant_cap: None,
                decay: Decay::Geometric,
            },
        )?)?,
        gold_size: suite.gold.len(),
        distant_size: distant.len(),
    })
}
