//! Training curricula over gold and distantly supervised instances.
//!
//! A blended plan runs `m` blending epochs in which every distant instance
//! is used together with a fresh random subset of the gold instances whose
//! size shrinks by the blending factor, followed by `n` epochs of distant
//! instances only.

use std::path::{Path, PathBuf};

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::distant::{QAInstance, Source};
use crate::error::{Error, Result};
use crate::jsonl;
use crate::seeding;

const CAP_STREAM: u64 = 0x4341_5050;
const GOLD_STREAM: u64 = 0x474f_4c44;
const SHUFFLE_STREAM: u64 = 0x5348_5546;

pub const PLAN_MANIFEST: &str = "plan.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    GoldOnly,
    Merged,
    Blended,
}

/// How the gold fraction shrinks over blending epochs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decay {
    /// `alpha^(i-1)`
    #[default]
    Geometric,
    /// `max(0, 1 - (i-1)(1-alpha))`
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlendConfig {
    pub alpha: f64,
    pub m: usize,
    pub n: usize,
    pub seed: u64,
    pub distant_cap: Option<usize>,
    #[serde(default)]
    pub decay: Decay,
}

impl BlendConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidConfig(format!(
                "alpha must be in [0, 1], got {}",
                self.alpha
            )));
        }
        if self.m < 1 {
            return Err(Error::InvalidConfig("m must be at least 1".into()));
        }
        check_cap(self.distant_cap)
    }

    /// Fraction of gold instances used in blending epoch `i` (1-based).
    pub fn gold_fraction(&self, i: usize) -> f64 {
        let steps = (i - 1) as f64;
        match self.decay {
            Decay::Geometric => self.alpha.powi((i - 1) as i32),
            Decay::Linear => (1.0 - steps * (1.0 - self.alpha)).max(0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeConfig {
    pub epochs: usize,
    pub seed: u64,
    pub distant_cap: Option<usize>,
}

fn check_cap(cap: Option<usize>) -> Result<()> {
    if cap == Some(0) {
        return Err(Error::InvalidConfig("distant cap must be positive".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpochDataset {
    pub gold_count: usize,
    pub distant_count: usize,
    /// Indices into [`TrainingPlan::pool`].
    pub instances: Vec<usize>,
}

/// The `plan.json` written next to exported epochs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanManifest {
    pub strategy: Strategy,
    pub alpha: Option<f64>,
    pub m: Option<usize>,
    pub n: Option<usize>,
    pub seed: u64,
    pub cap: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decay: Option<Decay>,
    pub epoch_sizes: Vec<usize>,
    pub gold_counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPlan {
    pub strategy: Strategy,
    pub provenance: PlanManifest,
    pool: Vec<QAInstance>,
    pub epochs: Vec<EpochDataset>,
}

impl TrainingPlan {
    pub fn pool(&self) -> &[QAInstance] {
        &self.pool
    }

    pub fn epoch_instances(&self, epoch: usize) -> impl Iterator<Item = &QAInstance> {
        self.epochs[epoch].instances.iter().map(|&i| &self.pool[i])
    }

    pub fn epoch_sizes(&self) -> Vec<usize> {
        self.epochs.iter().map(|e| e.instances.len()).collect()
    }

    pub fn gold_counts(&self) -> Vec<usize> {
        self.epochs.iter().map(|e| e.gold_count).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.iter().all(|e| e.instances.is_empty())
    }
}

fn cap_distant(distant: &[QAInstance], cap: Option<usize>, seed: u64) -> Vec<QAInstance> {
    match cap {
        Some(cap) if cap < distant.len() => {
            let mut picked =
                index::sample(&mut seeding::stream(seed, &[CAP_STREAM]), distant.len(), cap)
                    .into_vec();
            picked.sort_unstable();
            picked.into_iter().map(|i| distant[i].clone()).collect()
        }
        _ => distant.to_vec(),
    }
}

fn shuffled(mut instances: Vec<usize>, seed: u64, epoch: usize) -> Vec<usize> {
    instances.shuffle(&mut seeding::stream(seed, &[SHUFFLE_STREAM, epoch as u64]));
    instances
}

fn pool_of(gold: &[QAInstance], distant: Vec<QAInstance>) -> Vec<QAInstance> {
    let mut pool = gold.to_vec();
    pool.extend(distant);
    pool
}

fn full_epochs(
    gold: &[QAInstance],
    distant: &[QAInstance],
    epochs: usize,
    seed: u64,
    cap: Option<usize>,
    strategy: Strategy,
) -> Result<TrainingPlan> {
    if epochs < 1 {
        return Err(Error::InvalidConfig("epochs must be at least 1".into()));
    }
    check_cap(cap)?;
    if gold.is_empty() && distant.is_empty() {
        return Err(Error::EmptyPlan);
    }
    let distant = cap_distant(distant, cap, seed);
    let pool = pool_of(gold, distant);
    let all: Vec<usize> = (0..pool.len()).collect();
    let epochs: Vec<EpochDataset> = (0..epochs)
        .map(|e| EpochDataset {
            gold_count: gold.len(),
            distant_count: pool.len() - gold.len(),
            instances: shuffled(all.clone(), seed, e),
        })
        .collect();
    let provenance = PlanManifest {
        strategy,
        alpha: None,
        m: None,
        n: None,
        seed,
        cap,
        decay: None,
        epoch_sizes: epochs.iter().map(|e| e.instances.len()).collect(),
        gold_counts: epochs.iter().map(|e| e.gold_count).collect(),
    };
    Ok(TrainingPlan {
        strategy,
        provenance,
        pool,
        epochs,
    })
}

pub fn build_gold_only_plan(gold: &[QAInstance], epochs: usize, seed: u64) -> Result<TrainingPlan> {
    full_epochs(gold, &[], epochs, seed, None, Strategy::GoldOnly)
}

/// Every epoch holds all gold and all (capped) distant instances.
pub fn build_merged_plan(
    gold: &[QAInstance],
    distant: &[QAInstance],
    config: &MergeConfig,
) -> Result<TrainingPlan> {
    full_epochs(
        gold,
        distant,
        config.epochs,
        config.seed,
        config.distant_cap,
        Strategy::Merged,
    )
}

pub fn build_blended_plan(
    gold: &[QAInstance],
    distant: &[QAInstance],
    config: &BlendConfig,
) -> Result<TrainingPlan> {
    config.validate()?;
    if gold.is_empty() || distant.is_empty() {
        return Err(Error::InvalidConfig(
            "blending needs at least one gold and one distant instance".into(),
        ));
    }
    let distant = cap_distant(distant, config.distant_cap, config.seed);
    let pool = pool_of(gold, distant);
    let distant_idx: Vec<usize> = (gold.len()..pool.len()).collect();

    let mut epochs = Vec::with_capacity(config.m + config.n);
    for i in 1..=config.m {
        // f64::round is half-away-from-zero
        let want = (config.gold_fraction(i) * gold.len() as f64).round();
        let take = (want.max(0.0) as usize).min(gold.len());
        let mut rng = seeding::stream(config.seed, &[GOLD_STREAM, i as u64]);
        let mut chosen = index::sample(&mut rng, gold.len(), take).into_vec();
        chosen.sort_unstable();
        chosen.extend_from_slice(&distant_idx);
        epochs.push(EpochDataset {
            gold_count: take,
            distant_count: distant_idx.len(),
            instances: shuffled(chosen, config.seed, i - 1),
        });
    }
    for e in config.m..config.m + config.n {
        epochs.push(EpochDataset {
            gold_count: 0,
            distant_count: distant_idx.len(),
            instances: shuffled(distant_idx.clone(), config.seed, e),
        });
    }
    let provenance = PlanManifest {
        strategy: Strategy::Blended,
        alpha: Some(config.alpha),
        m: Some(config.m),
        n: Some(config.n),
        seed: config.seed,
        cap: config.distant_cap,
        decay: Some(config.decay),
        epoch_sizes: epochs.iter().map(|e| e.instances.len()).collect(),
        gold_counts: epochs.iter().map(|e| e.gold_count).collect(),
    };
    Ok(TrainingPlan {
        strategy: Strategy::Blended,
        provenance,
        pool,
        epochs,
    })
}

pub fn epoch_file_name(epoch: usize) -> String {
    format!("epoch_{epoch:03}.jsonl")
}

/// Writes one JSON-lines file per epoch plus `plan.json`.
pub fn export_plan(plan: &TrainingPlan, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    if plan.is_empty() {
        return Err(Error::EmptyPlan);
    }
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::with_capacity(plan.epochs.len() + 1);
    for e in 0..plan.epochs.len() {
        let path = dir.join(epoch_file_name(e));
        let rows: Vec<&QAInstance> = plan.epoch_instances(e).collect();
        jsonl::save(&rows, &path)?;
        written.push(path);
    }
    let path = dir.join(PLAN_MANIFEST);
    let mut json = serde_json::to_string_pretty(&plan.provenance)?;
    json.push('\n');
    std::fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    written.push(path);
    Ok(written)
}

/// Reads back an exported plan directory as epoch datasets in order.
pub fn load_plan_dir(dir: impl AsRef<Path>) -> Result<(PlanManifest, Vec<Vec<QAInstance>>)> {
    let dir = dir.as_ref();
    let path = dir.join(PLAN_MANIFEST);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: PlanManifest = serde_json::from_str(&text)?;
    let epochs = (0..manifest.epoch_sizes.len())
        .map(|e| jsonl::load(dir.join(epoch_file_name(e))))
        .collect::<Result<Vec<_>>>()?;
    for (e, (rows, &size)) in epochs.iter().zip(&manifest.epoch_sizes).enumerate() {
        if rows.len() != size {
            return Err(Error::InvalidConfig(format!(
                "{} has {} rows, plan.json says {size}",
                epoch_file_name(e),
                rows.len()
            )));
        }
    }
    Ok((manifest, epochs))
}

/// Counts gold-sourced rows, for sanity checks on loaded epochs.
pub fn count_gold(rows: &[QAInstance]) -> usize {
    rows.iter().filter(|r| r.source == Source::Gold).count()
}
