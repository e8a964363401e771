//! Hashed n-gram features and a multinomial logistic regression trained by
//! plain SGD, one pass per epoch of a training plan.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blend::TrainingPlan;
use crate::corpus::{lower_tokens, Label};
use crate::distant::QAInstance;
use crate::error::{Error, Result};
use crate::seeding;

const GRADIENT_STREAM: u64 = 0x4752_4144;
const MODEL_MAGIC: &[u8; 4] = b"YNLM";
const MODEL_VERSION: u32 = 1;
const PROBE_MAX_FEATURES: usize = 10;
const FD_STEP: f64 = 1e-5;

/// 64-bit FNV-1a. Stable across runs, processes and platforms.
pub fn stable_hash(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Field {
    Context,
    Question,
    Answer,
}

impl Field {
    fn prefix(self) -> &'static str {
        match self {
            Field::Context => "c",
            Field::Question => "q",
            Field::Answer => "a",
        }
    }
}

/// The part of the configuration a trained model must share with the
/// featurizer at prediction time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub num_buckets: usize,
    pub ngram_orders: BTreeSet<usize>,
    pub fields_used: BTreeSet<Field>,
    pub max_tokens_per_field: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub l2: f64,
    pub num_buckets: usize,
    pub ngram_orders: BTreeSet<usize>,
    pub fields_used: BTreeSet<Field>,
    pub max_tokens_per_field: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            l2: 1e-6,
            num_buckets: 1 << 18,
            ngram_orders: [1, 2].into_iter().collect(),
            fields_used: [Field::Question, Field::Answer].into_iter().collect(),
            max_tokens_per_field: 512,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn feature_config(&self) -> FeatureConfig {
        FeatureConfig {
            num_buckets: self.num_buckets,
            ngram_orders: self.ngram_orders.clone(),
            fields_used: self.fields_used.clone(),
            max_tokens_per_field: self.max_tokens_per_field,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad("learning_rate must be positive");
        }
        if !(self.l2 >= 0.0) || self.learning_rate * self.l2 >= 1.0 {
            return bad("l2 must be non-negative and learning_rate * l2 < 1");
        }
        if !self.num_buckets.is_power_of_two() {
            return bad("num_buckets must be a power of two");
        }
        if self.ngram_orders.is_empty() || self.ngram_orders.contains(&0) {
            return bad("ngram_orders must be non-empty positive orders");
        }
        if self.fields_used.is_empty() {
            return bad("fields_used must not be empty");
        }
        Ok(())
    }
}

/// Sparse, L2-normalized feature vector; indices ascending, no zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub entries: Vec<(usize, f64)>,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn add_ngrams(counts: &mut BTreeMap<usize, f64>, field: Field, text: &str, config: &FeatureConfig) {
    let mut tokens = lower_tokens(text);
    tokens.truncate(config.max_tokens_per_field);
    let mask = config.num_buckets as u64 - 1;
    for &order in &config.ngram_orders {
        for gram in tokens.windows(order) {
            let key = format!("{}:{}", field.prefix(), gram.join("_"));
            *counts.entry((stable_hash(&key) & mask) as usize).or_default() += 1.0;
        }
    }
}

pub fn featurize(instance: &QAInstance, config: &FeatureConfig) -> FeatureVector {
    let mut counts = BTreeMap::new();
    for &field in &config.fields_used {
        match field {
            Field::Context => instance
                .context
                .iter()
                .for_each(|t| add_ngrams(&mut counts, field, t, config)),
            Field::Question => add_ngrams(&mut counts, field, &instance.question, config),
            Field::Answer => add_ngrams(&mut counts, field, &instance.answer, config),
        }
    }
    let norm = counts.values().map(|c| c * c).sum::<f64>().sqrt();
    FeatureVector {
        entries: counts.into_iter().map(|(i, c)| (i, c / norm)).collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub class_labels: Vec<Label>,
    /// Row-major `[class][bucket]`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub num_buckets: usize,
    pub features: FeatureConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: Label,
    pub probabilities: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelHeader {
    class_labels: Vec<Label>,
    num_buckets: usize,
    features: FeatureConfig,
}

impl LinearModel {
    pub fn zeros(features: FeatureConfig) -> Self {
        let classes = Label::ALL.len();
        Self {
            class_labels: Label::ALL.to_vec(),
            weights: vec![0.0; classes * features.num_buckets],
            bias: vec![0.0; classes],
            num_buckets: features.num_buckets,
            features,
        }
    }

    pub fn weight(&self, class: usize, bucket: usize) -> f64 {
        self.weights[class * self.num_buckets + bucket]
    }

    pub fn scores(&self, x: &FeatureVector) -> Vec<f64> {
        (0..self.class_labels.len())
            .map(|k| {
                let row = &self.weights[k * self.num_buckets..(k + 1) * self.num_buckets];
                self.bias[k] + x.entries.iter().map(|&(j, v)| row[j] * v).sum::<f64>()
            })
            .collect()
    }

    pub fn predict_features(&self, x: &FeatureVector) -> Prediction {
        let probabilities = softmax(&self.scores(x));
        let best = argmax(&probabilities);
        Prediction {
            label: self.class_labels[best],
            probabilities,
        }
    }

    /// Versioned little-endian container: magic, version, JSON header,
    /// then raw `f64` bias and weights.
    pub fn write(&self, mut out: impl Write) -> Result<()> {
        let io = |e| Error::io("<model>", e);
        let header = serde_json::to_vec(&ModelHeader {
            class_labels: self.class_labels.clone(),
            num_buckets: self.num_buckets,
            features: self.features.clone(),
        })?;
        out.write_all(MODEL_MAGIC).map_err(io)?;
        out.write_all(&MODEL_VERSION.to_le_bytes()).map_err(io)?;
        out.write_all(&(header.len() as u64).to_le_bytes()).map_err(io)?;
        out.write_all(&header).map_err(io)?;
        let mut buf = Vec::with_capacity(8 * (self.bias.len() + self.weights.len()));
        for v in self.bias.iter().chain(&self.weights) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&buf).map_err(io)
    }

    pub fn read(mut input: impl Read) -> Result<Self> {
        let io = |e| Error::io("<model>", e);
        let mut fixed = [0u8; 16];
        input.read_exact(&mut fixed).map_err(io)?;
        if &fixed[..4] != MODEL_MAGIC {
            return Err(Error::ModelFormat("bad magic".into()));
        }
        let version = u32::from_le_bytes(fixed[4..8].try_into().unwrap());
        if version != MODEL_VERSION {
            return Err(Error::ModelFormat(format!("unsupported version {version}")));
        }
        let header_len = u64::from_le_bytes(fixed[8..16].try_into().unwrap()) as usize;
        let mut header = vec![0u8; header_len];
        input.read_exact(&mut header).map_err(io)?;
        let header: ModelHeader = serde_json::from_slice(&header)?;
        if header.features.num_buckets != header.num_buckets {
            return Err(Error::ModelFormat("bucket count mismatch".into()));
        }
        let classes = header.class_labels.len();
        let expected = classes * (1 + header.num_buckets);
        let mut body = Vec::new();
        input.read_to_end(&mut body).map_err(io)?;
        if body.len() != expected * 8 {
            return Err(Error::ModelFormat(format!(
                "expected {} parameter bytes, found {}",
                expected * 8,
                body.len()
            )));
        }
        let mut values = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        let bias = values.by_ref().take(classes).collect();
        let weights = values.collect();
        Ok(Self {
            class_labels: header.class_labels,
            weights,
            bias,
            num_buckets: header.num_buckets,
            features: header.features,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut buf = Vec::new();
        self.write(&mut buf)?;
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::read(bytes.as_slice())
    }
}

pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// First index of the maximum, so ties go to the earlier class.
fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// `p - onehot(label)`, the log-loss gradient with respect to the scores.
pub fn score_residuals(probabilities: &[f64], class_labels: &[Label], label: Label) -> Vec<f64> {
    probabilities
        .iter()
        .zip(class_labels)
        .map(|(&p, &c)| p - if c == label { 1.0 } else { 0.0 })
        .collect()
}

pub fn predict(model: &LinearModel, instance: &QAInstance) -> Prediction {
    model.predict_features(&featurize(instance, &model.features))
}

/// Predicts in parallel; output order matches input order.
pub fn predict_all(model: &LinearModel, instances: &[QAInstance]) -> Vec<Prediction> {
    instances.par_iter().map(|x| predict(model, x)).collect()
}

/// SGD state with the weights kept as `scale * raw` so L2 decay costs O(1)
/// per step instead of touching every bucket.
struct Sgd {
    model: LinearModel,
    raw: Vec<f64>,
    scale: f64,
    lr: f64,
    decay: f64,
}

impl Sgd {
    fn new(config: &TrainConfig) -> Self {
        let model = LinearModel::zeros(config.feature_config());
        let raw = model.weights.clone();
        Self {
            model,
            raw,
            scale: 1.0,
            lr: config.learning_rate,
            decay: 1.0 - config.learning_rate * config.l2,
        }
    }

    fn step(&mut self, x: &FeatureVector, label: Label) {
        let buckets = self.model.num_buckets;
        let classes = self.model.class_labels.len();
        let scores: Vec<f64> = (0..classes)
            .map(|k| {
                let row = &self.raw[k * buckets..(k + 1) * buckets];
                self.model.bias[k]
                    + self.scale * x.entries.iter().map(|&(j, v)| row[j] * v).sum::<f64>()
            })
            .collect();
        let residuals = score_residuals(&softmax(&scores), &self.model.class_labels, label);
        self.scale *= self.decay;
        for (k, r) in residuals.iter().enumerate() {
            let step = self.lr * r / self.scale;
            for &(j, v) in &x.entries {
                self.raw[k * buckets + j] -= step * v;
            }
            self.model.bias[k] -= self.lr * r;
        }
        if self.scale < 1e-9 {
            self.fold();
        }
    }

    fn fold(&mut self) {
        let scale = self.scale;
        self.raw.iter_mut().for_each(|w| *w *= scale);
        self.scale = 1.0;
    }

    fn finish(mut self) -> LinearModel {
        self.fold();
        self.model.weights = self.raw;
        self.model
    }
}

fn label_of(instance: &QAInstance) -> Result<Label> {
    instance
        .label
        .ok_or_else(|| Error::Unlabeled(instance.origin.to_string()))
}

/// Trains over the plan's epochs in order, visiting instances in plan order.
pub fn train(plan: &TrainingPlan, config: &TrainConfig) -> Result<LinearModel> {
    config.validate()?;
    if plan.is_empty() {
        return Err(Error::EmptyPlan);
    }
    let features = config.feature_config();
    let pool: Vec<(FeatureVector, Label)> = plan
        .pool()
        .par_iter()
        .map(|x| Ok((featurize(x, &features), label_of(x)?)))
        .collect::<Result<_>>()?;
    let mut sgd = Sgd::new(config);
    for epoch in &plan.epochs {
        for &i in &epoch.instances {
            let (x, y) = &pool[i];
            sgd.step(x, *y);
        }
    }
    Ok(sgd.finish())
}

/// Same as [`train`] for epochs read back from an exported plan directory.
pub fn train_epochs(epochs: &[Vec<QAInstance>], config: &TrainConfig) -> Result<LinearModel> {
    config.validate()?;
    if epochs.iter().all(Vec::is_empty) {
        return Err(Error::EmptyPlan);
    }
    let features = config.feature_config();
    let mut sgd = Sgd::new(config);
    for epoch in epochs {
        let rows: Vec<(FeatureVector, Label)> = epoch
            .par_iter()
            .map(|x| Ok((featurize(x, &features), label_of(x)?)))
            .collect::<Result<_>>()?;
        for (x, y) in &rows {
            sgd.step(x, *y);
        }
    }
    Ok(sgd.finish())
}

/// Gradient of `-log p(label) + l2/2 * |W|^2` restricted to the weights of
/// the active features, `[class][position in x]`, and the biases.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeGradient {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

pub fn log_loss_gradient(model: &LinearModel, x: &FeatureVector, label: Label, l2: f64) -> ProbeGradient {
    let p = softmax(&model.scores(x));
    let r = score_residuals(&p, &model.class_labels, label);
    ProbeGradient {
        weights: r
            .iter()
            .enumerate()
            .map(|(k, rk)| {
                x.entries
                    .iter()
                    .map(|&(j, v)| rk * v + l2 * model.weight(k, j))
                    .collect()
            })
            .collect(),
        bias: r,
    }
}

fn probe_loss(model: &LinearModel, x: &FeatureVector, label: Label, l2: f64) -> f64 {
    let p = softmax(&model.scores(x));
    let k = model.class_labels.iter().position(|&c| c == label).unwrap();
    let reg: f64 = (0..model.class_labels.len())
        .flat_map(|c| x.entries.iter().map(move |&(j, _)| (c, j)))
        .map(|(c, j)| model.weight(c, j).powi(2))
        .sum();
    -p[k].ln() + 0.5 * l2 * reg
}

pub fn gradient_check(config: &TrainConfig, probe_size: usize) -> Result<f64> {
    gradient_check_with(config, probe_size, log_loss_gradient)
}

/// Compares `analytic` against central finite differences on a seeded
/// random probe of at most 10 active features and returns the largest
/// relative error over all probed parameters.
pub fn gradient_check_with<F>(config: &TrainConfig, probe_size: usize, analytic: F) -> Result<f64>
where
    F: Fn(&LinearModel, &FeatureVector, Label, f64) -> ProbeGradient,
{
    if probe_size == 0 {
        return Err(Error::InvalidConfig("probe_size must be at least 1".into()));
    }
    config.validate()?;
    let mut rng = seeding::stream(config.seed, &[GRADIENT_STREAM]);
    let width = probe_size.min(PROBE_MAX_FEATURES).min(config.num_buckets);
    let mut buckets = rand::seq::index::sample(&mut rng, config.num_buckets, width).into_vec();
    buckets.sort_unstable();
    let raw: Vec<f64> = (0..width).map(|_| rng.random_range(0.1..1.0)).collect();
    let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    let x = FeatureVector {
        entries: buckets.iter().zip(&raw).map(|(&j, v)| (j, v / norm)).collect(),
    };

    let mut model = LinearModel::zeros(config.feature_config());
    for k in 0..model.class_labels.len() {
        model.bias[k] = rng.random_range(-0.5..0.5);
        for &j in &buckets {
            model.weights[k * model.num_buckets + j] = rng.random_range(-1.0..1.0);
        }
    }
    let label = Label::ALL[rng.random_range(0..Label::ALL.len())];
    let grad = analytic(&model, &x, label, config.l2);

    let rel = |a: f64, n: f64| (a - n).abs() / (a.abs() + n.abs()).max(1e-8);
    let mut worst = 0.0f64;
    for k in 0..model.class_labels.len() {
        for (pos, &j) in buckets.iter().enumerate() {
            let at = k * model.num_buckets + j;
            let numeric = central_difference(&mut model, |m| &mut m.weights[at], &x, label, config.l2);
            worst = worst.max(rel(grad.weights[k][pos], numeric));
        }
        let numeric = central_difference(&mut model, |m| &mut m.bias[k], &x, label, config.l2);
        worst = worst.max(rel(grad.bias[k], numeric));
    }
    Ok(worst)
}

fn central_difference(
    model: &mut LinearModel,
    param: impl Fn(&mut LinearModel) -> &mut f64,
    x: &FeatureVector,
    label: Label,
    l2: f64,
) -> f64 {
    let original = *param(model);
    *param(model) = original + FD_STEP;
    let up = probe_loss(model, x, label, l2);
    *param(model) = original - FD_STEP;
    let down = probe_loss(model, x, label, l2);
    *param(model) = original;
    (up - down) / (2.0 * FD_STEP)
}
