use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context as _};
use serde::Serialize;
use yesno_core::blend::{self, BlendConfig, Decay, MergeConfig};
use yesno_core::distant::{self, DistantConfig, QAInstance};
use yesno_core::eval::{self, align_predictions, EvalReport, McNemarMethod, McNemarResult, PredictionRecord};
use yesno_core::llm_probe::{
    self, CompletionClient, GenerationParams, HttpClient, HttpClientConfig, PromptTemplate, RecordingClient,
    ReplayClient,
};
use yesno_core::model::{self, Field, LinearModel, TrainConfig};
use yesno_core::qid::{self, DialogueActConfig, QidMode, QidRuleConfig};
use yesno_core::synth::{self, SynthConfig};
use yesno_core::{jsonl, Corpus, Error, Label, DEFAULT_SEED};

use crate::args::*;
use crate::settings::{report, usage, Settings};

/// Core errors with the offending file named. I/O errors already carry it.
fn at<T>(path: &Path, result: yesno_core::Result<T>) -> anyhow::Result<T> {
    result.map_err(|e| match e {
        Error::Io { .. } => anyhow::Error::new(e),
        other => anyhow::Error::new(other).context(path.display().to_string()),
    })
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).with_context(|| parent.display().to_string())?;
    }
    let file = File::create(path).with_context(|| path.display().to_string())?;
    Ok(BufWriter::new(file))
}

fn finish(mut out: BufWriter<File>, path: &Path) -> anyhow::Result<()> {
    out.flush().with_context(|| path.display().to_string())
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> anyhow::Result<()> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n").with_context(|| path.display().to_string())?;
    finish(out, path)
}

fn load_instances(path: &Path) -> anyhow::Result<Vec<QAInstance>> {
    at(path, jsonl::load(path))
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    let settings = Settings::load(cli.config.as_deref())?;
    for key in settings.keys() {
        log::debug!("config key `{key}` set");
    }
    let seed = settings.pick(cli.seed, "seed", DEFAULT_SEED)?;
    match cli.command {
        Command::Identify(a) => identify(a, &settings, seed),
        Command::Distill(a) => distill(a, &settings, seed),
        Command::Plan(a) => plan(a, &settings, seed),
        Command::Train(a) => train(a, &settings, seed),
        Command::Predict(a) => predict(a),
        Command::Evaluate(a) => evaluate(a, &settings),
        Command::Probe(a) => probe(a, &settings),
        Command::Synth(a) => write_synth(a, &settings, seed),
    }
}

#[derive(Serialize)]
struct IdentifyEffective<'a> {
    corpus: &'a Path,
    mode: ModeArg,
    sample: usize,
    seed: u64,
    out: &'a Path,
    audit: Option<&'a Path>,
}

fn identify(a: IdentifyArgs, s: &Settings, seed: u64) -> anyhow::Result<()> {
    let mode = s.pick(a.mode, "mode", ModeArg::Strict)?;
    let sample = s.pick(a.sample, "sample", 200)?;
    report(
        "identify",
        &IdentifyEffective {
            corpus: &a.corpus,
            mode,
            sample,
            seed,
            out: &a.out,
            audit: a.audit.as_deref(),
        },
    );
    let corpus = at(&a.corpus, Corpus::load(&a.corpus))?;
    let mode = match mode {
        ModeArg::Relaxed => QidMode::Relaxed,
        ModeArg::Strict => QidMode::Strict,
        ModeArg::Acts => QidMode::DialogueAct,
    };
    let (matches, stats) = at(
        &a.corpus,
        qid::scan_corpus(
            &corpus,
            mode,
            &QidRuleConfig::default(),
            &DialogueActConfig::default(),
            sample,
            seed,
        ),
    )?;
    let mut out = create(&a.out)?;
    qid::write_matches(&matches, &mut out)?;
    finish(out, &a.out)?;
    if let Some(path) = &a.audit {
        let mut out = create(path)?;
        qid::write_audit(&corpus, &stats.precision_sample, &mut out)?;
        finish(out, path)?;
    }
    if let Some(path) = &a.stats {
        write_json(&stats, path)?;
    }
    log::info!("{} matches among {} turns", stats.match_count, stats.total_turns);
    Ok(())
}

#[derive(Serialize)]
struct DistillEffective<'a> {
    corpus: &'a Path,
    matches: &'a Path,
    balance: bool,
    seed: u64,
    context_window: usize,
    answer_sentence_window: usize,
    out: &'a Path,
}

fn distill(a: DistillArgs, s: &Settings, seed: u64) -> anyhow::Result<()> {
    let balance = a.balance || s.get("balance")?.unwrap_or(false);
    let mut cfg = DistantConfig::default();
    cfg.context_window = s.pick(a.context_window, "context_window", cfg.context_window)?;
    cfg.answer_sentence_window = s.pick(a.answer_window, "answer_sentence_window", cfg.answer_sentence_window)?;
    report(
        "distill",
        &DistillEffective {
            corpus: &a.corpus,
            matches: &a.matches,
            balance,
            seed,
            context_window: cfg.context_window,
            answer_sentence_window: cfg.answer_sentence_window,
            out: &a.out,
        },
    );
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let corpus = at(&a.corpus, Corpus::load(&a.corpus))?;
    let file = File::open(&a.matches).with_context(|| a.matches.display().to_string())?;
    let matches = at(&a.matches, qid::read_matches(BufReader::new(file)))?;
    let mut instances = at(&a.matches, distant::extract_distant_instances(&corpus, &matches, &cfg))?;
    if balance {
        instances = distant::balance_dataset(&instances, seed)?;
    }
    for (label, count) in distant::label_counts(&instances) {
        let name = label.map_or("unlabeled", |l| l.as_str());
        log::info!("{name}: {count}");
    }
    at(&a.out, jsonl::save(&instances, &a.out))
}

#[derive(Serialize)]
struct PlanEffective<'a> {
    gold: &'a Path,
    distant: Option<&'a Path>,
    strategy: StrategyArg,
    alpha: f64,
    m: usize,
    n: usize,
    epochs: usize,
    cap: Option<usize>,
    decay: DecayArg,
    seed: u64,
    out: &'a Path,
}

fn plan(a: PlanArgs, s: &Settings, seed: u64) -> anyhow::Result<()> {
    let strategy = s.pick(a.strategy, "strategy", StrategyArg::Blended)?;
    let alpha = s.pick(a.alpha, "alpha", 0.5)?;
    let m = s.pick(a.m, "m", 3)?;
    let n = s.pick(a.n, "n", 2)?;
    let epochs = s.pick(a.epochs, "epochs", m + n)?;
    let cap = s.pick_opt(a.cap, "cap")?;
    let decay = s.pick(a.decay, "decay", DecayArg::Geometric)?;
    report(
        "plan",
        &PlanEffective {
            gold: &a.gold,
            distant: a.distant.as_deref(),
            strategy,
            alpha,
            m,
            n,
            epochs,
            cap,
            decay,
            seed,
            out: &a.out,
        },
    );
    let gold = load_instances(&a.gold)?;
    let distant = match (&a.distant, strategy) {
        (Some(path), _) => load_instances(path)?,
        (None, StrategyArg::GoldOnly) => Vec::new(),
        (None, _) => return Err(usage("--distant is required for merged and blended plans")),
    };
    let plan = match strategy {
        StrategyArg::GoldOnly => blend::build_gold_only_plan(&gold, epochs, seed),
        StrategyArg::Merged => blend::build_merged_plan(
            &gold,
            &distant,
            &MergeConfig {
                epochs,
                seed,
                distant_cap: cap,
            },
        ),
        StrategyArg::Blended => blend::build_blended_plan(
            &gold,
            &distant,
            &BlendConfig {
                alpha,
                m,
                n,
                seed,
                distant_cap: cap,
                decay: match decay {
                    DecayArg::Geometric => Decay::Geometric,
                    DecayArg::Linear => Decay::Linear,
                },
            },
        ),
    };
    let plan = plan.map_err(|e| match e {
        Error::InvalidConfig(msg) => usage(msg),
        other => other.into(),
    })?;
    let files = blend::export_plan(&plan, &a.out)?;
    log::info!(
        "{} epochs, sizes {:?}, gold {:?}, {} files",
        plan.epochs.len(),
        plan.epoch_sizes(),
        plan.gold_counts(),
        files.len()
    );
    Ok(())
}

fn train(a: TrainArgs, s: &Settings, seed: u64) -> anyhow::Result<()> {
    let d = TrainConfig::default();
    let fields: Option<Vec<FieldArg>> = s.pick_opt(a.fields, "fields")?;
    let config = TrainConfig {
        learning_rate: s.pick(a.learning_rate, "learning_rate", d.learning_rate)?,
        l2: s.pick(a.l2, "l2", d.l2)?,
        num_buckets: s.pick(a.buckets, "num_buckets", d.num_buckets)?,
        ngram_orders: match s.pick_opt(a.ngrams, "ngram_orders")? {
            Some(v) => v.into_iter().collect(),
            None => d.ngram_orders,
        },
        fields_used: match fields {
            Some(v) => v
                .into_iter()
                .map(|f| match f {
                    FieldArg::Context => Field::Context,
                    FieldArg::Question => Field::Question,
                    FieldArg::Answer => Field::Answer,
                })
                .collect(),
            None => d.fields_used,
        },
        max_tokens_per_field: s.pick(a.max_tokens_per_field, "max_tokens_per_field", d.max_tokens_per_field)?,
        seed,
    };
    #[derive(Serialize)]
    struct Effective<'a> {
        plan: &'a Path,
        out: &'a Path,
        #[serde(flatten)]
        config: &'a TrainConfig,
    }
    report(
        "train",
        &Effective {
            plan: &a.plan,
            out: &a.out,
            config: &config,
        },
    );
    config.validate().map_err(|e| usage(e.to_string()))?;
    let (manifest, epochs) = at(&a.plan, blend::load_plan_dir(&a.plan))?;
    log::info!("training {:?} plan with {} epochs", manifest.strategy, epochs.len());
    let model = at(&a.plan, model::train_epochs(&epochs, &config))?;
    at(&a.out, model.save(&a.out))
}

fn predict(a: PredictArgs) -> anyhow::Result<()> {
    report("predict", &BTreeMap::from([("model", &a.model), ("in", &a.input), ("out", &a.out)]));
    let model = at(&a.model, LinearModel::load(&a.model))?;
    let instances = load_instances(&a.input)?;
    let records: Vec<PredictionRecord> = model::predict_all(&model, &instances)
        .into_iter()
        .zip(&instances)
        .map(|(p, x)| PredictionRecord {
            origin: x.origin.clone(),
            label: Some(p.label),
            probabilities: Some(model.class_labels.iter().copied().zip(p.probabilities).collect()),
            raw: None,
        })
        .collect();
    at(&a.out, jsonl::save(&records, &a.out))
}

#[derive(Serialize)]
struct Report {
    #[serde(flatten)]
    scores: EvalReport,
    /// Predictions left out because they carry no label.
    excluded: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    mcnemar: Option<McNemarResult>,
}

fn score_predictions(gold: &[Label], predicted: &[Option<Label>], strict: bool) -> anyhow::Result<(EvalReport, usize)> {
    if strict {
        return Ok((eval::score_with(gold, predicted, Default::default())?, 0));
    }
    let (g, p): (Vec<Label>, Vec<Label>) = gold
        .iter()
        .zip(predicted)
        .filter_map(|(g, p)| p.map(|p| (*g, p)))
        .unzip();
    if g.is_empty() {
        return Err(anyhow!("no prediction carries a label"));
    }
    Ok((eval::score(&g, &p)?, gold.len() - g.len()))
}

fn evaluate(a: EvaluateArgs, s: &Settings) -> anyhow::Result<()> {
    let method = s.pick(a.mcnemar, "mcnemar", McNemarArg::Chi2)?;
    let strict = a.strict || s.get("strict")?.unwrap_or(false);
    #[derive(Serialize)]
    struct Effective<'a> {
        gold: &'a Path,
        pred: &'a Path,
        pred2: Option<&'a Path>,
        mcnemar: McNemarArg,
        strict: bool,
        out: &'a Path,
    }
    report(
        "evaluate",
        &Effective {
            gold: &a.gold,
            pred: &a.pred,
            pred2: a.pred2.as_deref(),
            mcnemar: method,
            strict,
            out: &a.out,
        },
    );
    let gold = load_instances(&a.gold)?;
    let first: Vec<PredictionRecord> = at(&a.pred, jsonl::load(&a.pred))?;
    let (labels, predicted) = at(&a.pred, align_predictions(&gold, &first))?;
    let (scores, excluded) = score_predictions(&labels, &predicted, strict)?;
    let mcnemar = match &a.pred2 {
        None => None,
        Some(path) => {
            let second: Vec<PredictionRecord> = at(path, jsonl::load(path))?;
            let (_, other) = at(path, align_predictions(&gold, &second))?;
            let method = match method {
                McNemarArg::Chi2 => McNemarMethod::ContinuityCorrectedChi2,
                McNemarArg::Exact => McNemarMethod::ExactBinomial,
            };
            Some(eval::mcnemar(&labels, &predicted, &other, method)?)
        }
    };
    log::info!("macro F1 {:.4}, accuracy {:.4}, n {}", scores.macro_f1, scores.accuracy, scores.n);
    write_json(
        &Report {
            scores,
            excluded,
            mcnemar,
        },
        &a.out,
    )
}

fn probe(a: ProbeArgs, s: &Settings) -> anyhow::Result<()> {
    let shots = s.pick(a.shots, "shots", 4)?;
    let client_kind = s.pick(a.client, "client", ClientArg::Replay)?;
    let store: Option<PathBuf> = s.pick_opt(a.store, "store")?;
    let parallelism = s.pick(a.parallelism, "parallelism", 1)?;
    let d = GenerationParams::default();
    let params = GenerationParams {
        temperature: s.get("temperature")?.unwrap_or(d.temperature),
        top_p: s.get("top_p")?.unwrap_or(d.top_p),
        max_tokens: s.get("max_tokens")?.unwrap_or(d.max_tokens),
    };
    #[derive(Serialize)]
    struct Effective<'a> {
        input: &'a Path,
        shots: usize,
        client: ClientArg,
        store: Option<&'a Path>,
        template: Option<&'a Path>,
        parallelism: usize,
        params: &'a GenerationParams,
        out: &'a Path,
    }
    report(
        "probe",
        &Effective {
            input: &a.input,
            shots,
            client: client_kind,
            store: store.as_deref(),
            template: a.template.as_deref(),
            parallelism,
            params: &params,
            out: &a.out,
        },
    );
    let template = match &a.template {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| path.display().to_string())?;
            serde_json::from_str(&text).with_context(|| path.display().to_string())?
        }
        None => PromptTemplate::default(),
    };
    let instances = load_instances(&a.input)?;
    let client: Box<dyn CompletionClient> = match (client_kind, store) {
        (ClientArg::Replay, Some(dir)) => Box::new(at(&dir, ReplayClient::open(&dir))?),
        (ClientArg::Replay, None) => return Err(usage("--store is required with --client replay")),
        (ClientArg::Live, store) => {
            let http = HttpClient::new(HttpClientConfig::from_env().map_err(|e| usage(e.to_string()))?);
            match store {
                Some(dir) => Box::new(RecordingClient::new(http, dir)),
                None => Box::new(http),
            }
        }
    };
    let outcome = llm_probe::probe_benchmark(&instances, &template, shots, client.as_ref(), &params, parallelism)?;
    let records: Vec<PredictionRecord> = outcome
        .responses
        .into_iter()
        .zip(&instances)
        .map(|(r, x)| PredictionRecord {
            origin: x.origin.clone(),
            label: r.label,
            probabilities: None,
            raw: Some(r.raw),
        })
        .collect();
    at(&a.out, jsonl::save(&records, &a.out))?;
    write_json(&outcome.manifest, &a.out.with_extension("manifest.json"))?;
    log::info!("{} responses, {} unmapped", records.len(), outcome.unmapped);
    Ok(())
}

fn write_synth(a: SynthArgs, s: &Settings, seed: u64) -> anyhow::Result<()> {
    let d = SynthConfig::default();
    let config = SynthConfig {
        seed,
        gold_size: s.pick(a.gold_size, "gold_size", d.gold_size)?,
        distant_size: s.pick(a.distant_size, "distant_size", d.distant_size)?,
        test_size: s.pick(a.test_size, "test_size", d.test_size)?,
        ..d
    };
    report("synth", &config);
    let suite = synth::generate(&config);
    let dir = &a.out;
    at(dir, jsonl::save(&suite.gold, dir.join("source_gold.jsonl")))?;
    at(dir, jsonl::save(&suite.test, dir.join("target_test.jsonl")))?;
    at(dir, suite.target_corpus.save(dir.join("target_corpus.jsonl")))?;
    write_json(&suite.latent, &dir.join("target_latent.json"))
}
