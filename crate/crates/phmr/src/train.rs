//! Training harness: deterministic multi-seed runs for the answer reasoner
//! and the personality predictor.
//!
//! One run = a fixed corpus split, a subword vocabulary built from the
//! training split only, per-seed model initialization, Adam with two
//! learning-rate groups and linear warmup, early stopping on the validation
//! metric with best-checkpoint restore, and a serialized manifest holding
//! everything needed to reproduce the numbers. Seeds train as independent
//! parallel workers; a non-finite loss aborts only its own seed and is
//! recorded in the manifest.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autodiff::Tape;
use crate::corpus::{trisect, ClipEpisode, CorpusSplit, RawVisualRecord};
use crate::encode::{encode_episode, EncodedEpisode, EncoderConfig};
use crate::error::{Error, Result};
use crate::mbti::{MbtiType, PersonalityProfile, Pole};
use crate::metrics::{self, MetricSet};
use crate::model::predictor::{
    first_pole_targets, threshold_profile, DimensionScores, PredictedProfile, PredictorInputs,
    PredictorModel, DEFAULT_THRESHOLD,
};
use crate::model::prm::{ModalityMask, PrmModel};
use crate::model::ModelConfig;
use crate::nn::{save_checkpoint, DropoutState, LrGroup, ParamStore};
use crate::text::vocab::Vocabulary;
use crate::text::whitespace_token_count;

pub const MANIFEST_SCHEMA: &str = "phmr-run-1";

/// Resample count and seed for every significance test in the harness.
pub const BOOTSTRAP_RESAMPLES: usize = 2000;
pub const BOOTSTRAP_SEED: u64 = 13;

/// Where the reasoner's personality input comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PersonalitySource {
    /// Annotated profiles from the corpus.
    Gold,
    /// Profiles produced by a trained predictor (stage two).
    Predicted,
    /// No personality input at all: the personality branch is disabled.
    None,
}

/// Hyperparameters of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub batch_size: usize,
    /// Learning rate of the fusion group (per-modality score heads and, by
    /// default, the video projection).
    pub lr_fusion: f64,
    /// Learning rate of every other parameter.
    pub lr_rest: f64,
    /// Warmup length as a fraction of the total optimizer steps.
    pub warmup_frac: f64,
    pub seeds: Vec<u64>,
    pub modality: ModalityMask,
    pub personality_source: PersonalitySource,
    /// Keep the video projection in the fast fusion group. Turning this off
    /// moves it to the slow group.
    pub video_proj_in_fusion: bool,
    /// Subword vocabulary budget (including pad and unknown).
    pub vocab_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            patience: 5,
            batch_size: 8,
            lr_fusion: 1e-3,
            lr_rest: 7e-5,
            warmup_frac: 0.1,
            seeds: vec![1, 2, 3, 4],
            modality: ModalityMask::FULL,
            personality_source: PersonalitySource::Gold,
            video_proj_in_fusion: true,
            vocab_size: 4096,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.patience == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "epochs, patience and batch_size must be positive".into(),
            ));
        }
        if !(self.lr_fusion > 0.0 && self.lr_rest > 0.0) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.warmup_frac) {
            return Err(Error::Config("warmup_frac must lie in [0, 1]".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("need at least one seed".into()));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(Error::Config("seeds must be distinct".into()));
        }
        if self.vocab_size < 3 {
            return Err(Error::Config("vocab_size must be at least 3".into()));
        }
        self.modality.validate()
    }

    /// The modality mask actually used: a `none` personality source forces
    /// the personality branch off.
    pub fn effective_mask(&self) -> ModalityMask {
        let mut m = self.modality;
        if self.personality_source == PersonalitySource::None {
            m.use_p = false;
        }
        m
    }
}

/// Linear warmup multiplier for the optimizer step being taken (1-based).
/// At step `w/2` the rate is half the group rate; from step `w` on it is
/// the full group rate.
pub fn warmup_multiplier(step: u64, warmup_steps: u64) -> f64 {
    if warmup_steps == 0 {
        1.0
    } else {
        (step as f64 / warmup_steps as f64).min(1.0)
    }
}

fn mix(a: u64, b: u64) -> u64 {
    // splitmix64 finalizer over the xored inputs
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A corpus in memory: episodes plus their visual feature records.
pub struct CorpusData {
    pub episodes: Vec<ClipEpisode>,
    pub records: BTreeMap<String, RawVisualRecord>,
}

impl CorpusData {
    pub fn new(episodes: Vec<ClipEpisode>, records: BTreeMap<String, RawVisualRecord>) -> Self {
        CorpusData { episodes, records }
    }

    /// Content hash over episodes (serialized) and visual records (exact
    /// bytes), independent of where the corpus lives on disk.
    pub fn content_hash(&self) -> Result<String> {
        let mut hasher = Sha256::new();
        for e in &self.episodes {
            hasher.update(serde_json::to_string(e)?.as_bytes());
            hasher.update([b'\n']);
        }
        for (id, rec) in &self.records {
            hasher.update(id.as_bytes());
            for &t in &rec.timestamps {
                hasher.update(t.to_le_bytes());
            }
            for &x in &rec.features {
                hasher.update(x.to_le_bytes());
            }
        }
        Ok(hex(&hasher.finalize()))
    }

    pub fn record_for(&self, id: &str) -> Option<&RawVisualRecord> {
        self.records.get(id)
    }
}

impl From<crate::syngen::GeneratedCorpus> for CorpusData {
    fn from(g: crate::syngen::GeneratedCorpus) -> Self {
        CorpusData::new(g.episodes, g.records)
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Short content hash of any serializable config; names the run directory.
pub fn config_hash(value: &impl Serialize) -> Result<String> {
    let json = serde_json::to_string(value)?;
    let digest = Sha256::digest(json.as_bytes());
    Ok(hex(&digest)[..12].to_string())
}

/// All text a vocabulary may learn from: utterances, behaviors, options,
/// speaker and subject tags, plus the closed personality-phrase language
/// (every person tag and all sixteen type codes).
pub fn vocabulary_texts(episodes: &[&ClipEpisode]) -> Vec<String> {
    let mut texts = Vec::new();
    for e in episodes {
        for u in &e.utterances {
            texts.push(u.text.clone());
            texts.push(u.speaker.clone());
        }
        for b in &e.behaviors {
            texts.push(b.text.clone());
            texts.push(b.subject.clone());
        }
        for o in &e.options {
            texts.push(o.clone());
        }
        for (tag, _) in e.profile.iter() {
            texts.push(tag.to_string());
        }
    }
    let codes: Vec<String> = MbtiType::all()
        .iter()
        .map(|t| t.to_string().to_lowercase())
        .collect();
    texts.push(codes.join(" "));
    // episode-local alias tokens, enough for the largest profile seen
    let max_people = episodes.iter().map(|e| e.profile.len()).max().unwrap_or(0);
    if max_people > 0 {
        let aliases: Vec<String> = (0..max_people).map(crate::encode::person_alias).collect();
        texts.push(aliases.join(" "));
    }
    texts
}

/// Episodes encoded once and shared read-only by every seed.
pub struct PreparedData {
    pub vocab: Vocabulary,
    /// Aligned with the corpus episode order.
    pub encoded: Vec<EncodedEpisode>,
    pub train_idx: Vec<usize>,
    pub val_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
    /// Raw visual width shared by every episode.
    pub d_raw: usize,
}

impl PreparedData {
    pub fn gold(&self, idx: &[usize]) -> Vec<usize> {
        idx.iter().map(|&i| self.encoded[i].gold).collect()
    }
}

fn index_of(episodes: &[ClipEpisode]) -> BTreeMap<&str, usize> {
    episodes
        .iter()
        .enumerate()
        .map(|(i, e)| (e.id.as_str(), i))
        .collect()
}

fn resolve_ids(ids: &[String], by_id: &BTreeMap<&str, usize>) -> Result<Vec<usize>> {
    ids.iter()
        .map(|id| {
            by_id
                .get(id.as_str())
                .copied()
                .ok_or_else(|| Error::Corpus(format!("split references unknown episode {id}")))
        })
        .collect()
}

/// Build the vocabulary from the training split only, then encode every
/// episode with it. `profiles`, when given, substitutes each episode's
/// personality input (stage two); gold profiles still label the predictor.
pub fn prepare(
    corpus: &CorpusData,
    split: &CorpusSplit,
    enc_cfg: &EncoderConfig,
    profiles: Option<&BTreeMap<String, PredictedProfile>>,
    vocab_size: usize,
) -> Result<PreparedData> {
    let all_ids: Vec<String> = corpus.episodes.iter().map(|e| e.id.clone()).collect();
    split.validate_disjoint_cover(&all_ids)?;
    let by_id = index_of(&corpus.episodes);
    let train_idx = resolve_ids(&split.train, &by_id)?;
    let val_idx = resolve_ids(&split.validation, &by_id)?;
    let test_idx = resolve_ids(&split.test, &by_id)?;

    let train_eps: Vec<&ClipEpisode> = train_idx.iter().map(|&i| &corpus.episodes[i]).collect();
    let vocab = Vocabulary::build(vocabulary_texts(&train_eps), vocab_size, 1)?;

    let mut d_raw = None;
    let mut encoded = Vec::with_capacity(corpus.episodes.len());
    for e in &corpus.episodes {
        let record = corpus.record_for(&e.id);
        let timestamps: Vec<f64> = record.map(|r| r.timestamps.clone()).unwrap_or_default();
        let tri = trisect(e, &timestamps);
        let substituted;
        let profile: &PersonalityProfile = match profiles {
            Some(map) => {
                let p = map.get(&e.id).ok_or_else(|| {
                    Error::Config(format!("no predicted profile for episode {}", e.id))
                })?;
                p.validate()?;
                substituted = p.as_profile();
                &substituted
            }
            None => &e.profile,
        };
        let enc = encode_episode(e, &tri, &vocab, record, enc_cfg, profile)?;
        match d_raw {
            None => d_raw = Some(enap_d_raw(&enc)),
            Some(d) if d == enap_d_raw(&enc) => {}
            Some(d) => {
                return Err(Error::Shape {
                    expected: format!("d_raw {d}"),
                    actual: format!("d_raw {} in episode {}", enap_d_raw(&enc), e.id),
                })
            }
        }
        encoded.push(enc);
    }
    Ok(PreparedData {
        vocab,
        encoded,
        train_idx,
        val_idx,
        test_idx,
        d_raw: d_raw.ok_or_else(|| Error::Corpus("empty corpus".into()))?,
    })
}

fn enap_d_raw(enc: &EncodedEpisode) -> usize {
    enc.video.d_raw
}

/// Fill the data-dependent fields of a model config: vocabulary size and
/// raw visual width.
pub fn resolve_model_config(base: &ModelConfig, data: &PreparedData) -> ModelConfig {
    let mut cfg = base.clone();
    cfg.n_vocab = data.vocab.size();
    cfg.d_raw = data.d_raw;
    cfg
}

/// Outcome of one seed: either full metrics or the divergence point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SeedOutcome {
    Completed {
        seed: u64,
        best_epoch: usize,
        epochs_run: usize,
        val_metric: f64,
        test: MetricSet,
    },
    Diverged {
        seed: u64,
        epoch: usize,
    },
}

impl SeedOutcome {
    pub fn completed(&self) -> Option<&MetricSet> {
        match self {
            SeedOutcome::Completed { test, .. } => Some(test),
            SeedOutcome::Diverged { .. } => None,
        }
    }
}

/// Everything needed to reproduce and audit one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema: String,
    /// "reasoner" or "personality_predictor".
    pub model_kind: String,
    /// Short hash naming the run directory.
    pub config_hash: String,
    pub corpus_hash: String,
    pub n_train: usize,
    pub n_validation: usize,
    pub n_test: usize,
    /// Trainable scalars (frozen rows excluded).
    pub n_parameters: usize,
    pub modality: String,
    pub personality_source: PersonalitySource,
    pub seeds: Vec<u64>,
    pub per_seed: Vec<SeedOutcome>,
    /// Mean over completed seeds.
    pub mean_test: MetricSet,
    pub diverged_seeds: Vec<u64>,
    pub wall_seconds: f64,
    pub artifacts: Vec<String>,
    pub train_config: TrainConfig,
    pub model_config: ModelConfig,
    pub encoder_config: EncoderConfig,
}

impl RunManifest {
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let m: RunManifest = serde_json::from_reader(std::io::BufReader::new(file))?;
        if m.schema != MANIFEST_SCHEMA {
            return Err(Error::Corpus(format!("unknown manifest schema {:?}", m.schema)));
        }
        Ok(m)
    }

    /// Every deterministic field, i.e. the manifest minus wall time and
    /// artifact paths. Two runs of the same config must agree on this.
    pub fn deterministic_view(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("manifest serializes");
        let obj = v.as_object_mut().expect("manifest is an object");
        obj.remove("wall_seconds");
        obj.remove("artifacts");
        v
    }
}

fn mean_metrics(sets: &[&MetricSet]) -> MetricSet {
    let n = sets.len() as f64;
    let avg = |f: fn(&MetricSet) -> Option<f64>| {
        let vals: Vec<f64> = sets.iter().filter_map(|m| f(m)).collect();
        if vals.is_empty() || vals.len() != sets.len() {
            None
        } else {
            Some(vals.iter().sum::<f64>() / n)
        }
    };
    MetricSet {
        accuracy: avg(|m| m.accuracy),
        hamming_loss: avg(|m| m.hamming_loss),
        ranking_loss: avg(|m| m.ranking_loss),
        average_precision: avg(|m| m.average_precision),
    }
}

/// The learning-rate groups must be non-empty and cover every scalar.
/// Checked once per seed right before the first optimizer step.
fn assert_group_partition(store: &ParamStore) -> Result<()> {
    let (fusion, rest) = store.group_counts();
    let total: usize = store.iter().map(|p| p.value.len()).sum();
    if fusion == 0 || rest == 0 || fusion + rest != total {
        return Err(Error::Config(format!(
            "learning-rate groups do not partition the parameters \
             (fusion {fusion} + rest {rest} != total {total})"
        )));
    }
    Ok(())
}

struct EpochPlan {
    warmup_steps: u64,
}

fn plan(cfg: &TrainConfig, n_train: usize) -> EpochPlan {
    let steps_per_epoch = n_train.div_ceil(cfg.batch_size);
    let total = (cfg.epochs * steps_per_epoch) as f64;
    EpochPlan {
        warmup_steps: (cfg.warmup_frac * total).floor() as u64,
    }
}

/// Shared early-stopping state: tracks the best validation metric seen and
/// the parameter snapshot that produced it.
struct BestTracker {
    best_metric: f64,
    best_epoch: usize,
    snapshot: Vec<ndarray::Array2<f64>>,
    since_best: usize,
}

impl BestTracker {
    fn new(store: &ParamStore) -> Self {
        BestTracker {
            best_metric: f64::NEG_INFINITY,
            best_epoch: 0,
            snapshot: store.snapshot(),
            since_best: 0,
        }
    }

    /// Returns true when training should stop.
    fn observe(&mut self, epoch: usize, metric: f64, store: &ParamStore, patience: usize) -> bool {
        if metric > self.best_metric {
            self.best_metric = metric;
            self.best_epoch = epoch;
            self.snapshot = store.snapshot();
            self.since_best = 0;
        } else {
            self.since_best += 1;
        }
        self.since_best >= patience
    }
}

// ---------------------------------------------------------------------------
// Reasoner training
// ---------------------------------------------------------------------------

/// One completed reasoner seed: restored-best parameters plus test outputs.
pub struct PrmSeedArtifacts {
    pub seed: u64,
    pub store: Option<ParamStore>,
    /// Predicted option index per test episode (aligned with `test_idx`).
    pub test_predictions: Option<Vec<usize>>,
}

pub struct TrainedPrm {
    pub manifest: RunManifest,
    pub seeds: Vec<PrmSeedArtifacts>,
    pub resolved_model: ModelConfig,
}

impl TrainedPrm {
    /// Test predictions of every completed seed concatenated in seed order,
    /// with the gold labels repeated to match. This is the paired sample
    /// used for significance tests between systems run on the same seeds.
    pub fn pooled_test_predictions(&self, data: &PreparedData) -> (Vec<usize>, Vec<usize>) {
        let gold = data.gold(&data.test_idx);
        let mut preds = Vec::new();
        let mut golds = Vec::new();
        for s in &self.seeds {
            if let Some(p) = &s.test_predictions {
                preds.extend_from_slice(p);
                golds.extend_from_slice(&gold);
            }
        }
        (preds, golds)
    }
}

struct PrmSeedRun {
    outcome: SeedOutcome,
    store: Option<ParamStore>,
    test_predictions: Option<Vec<usize>>,
}

fn train_prm_seed(
    data: &PreparedData,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    mask: &ModalityMask,
    seed: u64,
) -> Result<PrmSeedRun> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let model = PrmModel::register(&mut store, model_cfg, &mut rng)?;
    if !cfg.video_proj_in_fusion {
        store.set_group("video_proj.w", LrGroup::Rest)?;
        store.set_group("video_proj.b", LrGroup::Rest)?;
    }
    assert_group_partition(&store)?;

    let plan = plan(cfg, data.train_idx.len());
    let mut dropout = DropoutState::new(model_cfg.dropout, mix(seed, 0x60D1));
    let mut tracker = BestTracker::new(&store);
    let mut epochs_run = 0;

    'epochs: for epoch in 1..=cfg.epochs {
        epochs_run = epoch;
        let mut order = data.train_idx.clone();
        let mut shuffle_rng = ChaCha20Rng::seed_from_u64(mix(seed, epoch as u64));
        order.shuffle(&mut shuffle_rng);

        for batch in order.chunks(cfg.batch_size) {
            store.zero_grads();
            for &i in batch {
                let mut tape = Tape::new();
                let (loss, _) = model.loss(&mut tape, &store, &data.encoded[i], mask, &mut dropout)?;
                if !tape.scalar(loss).is_finite() {
                    return Err(Error::Divergence { seed, epoch });
                }
                let grads = tape.backward(loss);
                store.accumulate_scaled(&tape, &grads, 1.0 / batch.len() as f64);
            }
            if !store.grad_norm().is_finite() {
                return Err(Error::Divergence { seed, epoch });
            }
            let step = store.optimizer_step_count() + 1;
            let mult = warmup_multiplier(step, plan.warmup_steps);
            store.adam_step(cfg.lr_fusion, cfg.lr_rest, mult);
        }

        let mut correct = 0usize;
        for &i in &data.val_idx {
            let fwd = model.predict(&store, &data.encoded[i], mask)?;
            if fwd.predicted == data.encoded[i].gold {
                correct += 1;
            }
        }
        let val_acc = correct as f64 / data.val_idx.len().max(1) as f64;
        if tracker.observe(epoch, val_acc, &store, cfg.patience) {
            break 'epochs;
        }
    }

    store.restore(&tracker.snapshot);
    let mut predictions = Vec::with_capacity(data.test_idx.len());
    for &i in &data.test_idx {
        predictions.push(model.predict(&store, &data.encoded[i], mask)?.predicted);
    }
    let test_acc = metrics::accuracy(&predictions, &data.gold(&data.test_idx))?;
    Ok(PrmSeedRun {
        outcome: SeedOutcome::Completed {
            seed,
            best_epoch: tracker.best_epoch,
            epochs_run,
            val_metric: tracker.best_metric,
            test: MetricSet {
                accuracy: Some(test_acc),
                ..MetricSet::default()
            },
        },
        store: Some(store),
        test_predictions: Some(predictions),
    })
}

fn finish_run(
    kind: &str,
    data: &PreparedData,
    cfg: &TrainConfig,
    model_cfg: &ModelConfig,
    enc_cfg: &EncoderConfig,
    corpus_hash: String,
    mask_label: String,
    outcomes: Vec<SeedOutcome>,
    started: Instant,
) -> Result<RunManifest> {
    let completed: Vec<&MetricSet> = outcomes.iter().filter_map(|o| o.completed()).collect();
    if completed.is_empty() {
        // every seed diverged; surface the first failure
        if let Some(SeedOutcome::Diverged { seed, epoch }) = outcomes.first() {
            return Err(Error::Divergence {
                seed: *seed,
                epoch: *epoch,
            });
        }
        return Err(Error::Config("no seeds to train".into()));
    }
    let diverged_seeds: Vec<u64> = outcomes
        .iter()
        .filter_map(|o| match o {
            SeedOutcome::Diverged { seed, .. } => Some(*seed),
            _ => None,
        })
        .collect();
    let identity = serde_json::json!({
        "kind": kind,
        "train": cfg,
        "model": model_cfg,
        "encoder": enc_cfg,
        "corpus": corpus_hash,
    });
    // parameter count is identical across seeds; derive it cheaply via a
    // scratch registration
    let n_parameters = scratch_parameter_count(kind, model_cfg)?;
    let mean_test = mean_metrics(&completed);
    drop(completed);
    Ok(RunManifest {
        schema: MANIFEST_SCHEMA.to_string(),
        model_kind: kind.to_string(),
        config_hash: config_hash(&identity)?,
        corpus_hash,
        n_train: data.train_idx.len(),
        n_validation: data.val_idx.len(),
        n_test: data.test_idx.len(),
        n_parameters,
        modality: mask_label,
        personality_source: cfg.personality_source,
        seeds: cfg.seeds.clone(),
        per_seed: outcomes,
        mean_test,
        diverged_seeds,
        wall_seconds: started.elapsed().as_secs_f64(),
        artifacts: Vec::new(),
        train_config: cfg.clone(),
        model_config: model_cfg.clone(),
        encoder_config: enc_cfg.clone(),
    })
}

fn scratch_parameter_count(kind: &str, model_cfg: &ModelConfig) -> Result<usize> {
    let mut store = ParamStore::new();
    let mut rng = ChaCha20Rng::seed_from_u64(0);
    match kind {
        "reasoner" => {
            PrmModel::register(&mut store, model_cfg, &mut rng)?;
        }
        _ => {
            PredictorModel::register(&mut store, model_cfg, &mut rng)?;
        }
    }
    Ok(store.scalar_count())
}

/// Train the reasoner over every configured seed on pre-encoded data.
pub fn train_prm_prepared(
    data: &PreparedData,
    corpus_hash: String,
    base_model: &ModelConfig,
    enc_cfg: &EncoderConfig,
    cfg: &TrainConfig,
) -> Result<TrainedPrm> {
    cfg.validate()?;
    let started = Instant::now();
    let model_cfg = resolve_model_config(base_model, data);
    let mask = cfg.effective_mask();

    let results: Vec<Result<PrmSeedRun>> = cfg
        .seeds
        .par_iter()
        .map(|&seed| train_prm_seed(data, &model_cfg, cfg, &mask, seed))
        .collect();

    let mut outcomes = Vec::new();
    let mut artifacts = Vec::new();
    for (&seed, r) in cfg.seeds.iter().zip(results) {
        match r {
            Ok(run) => {
                outcomes.push(run.outcome);
                artifacts.push(PrmSeedArtifacts {
                    seed,
                    store: run.store,
                    test_predictions: run.test_predictions,
                });
            }
            Err(Error::Divergence { seed, epoch }) => {
                outcomes.push(SeedOutcome::Diverged { seed, epoch });
                artifacts.push(PrmSeedArtifacts {
                    seed,
                    store: None,
                    test_predictions: None,
                });
            }
            Err(e) => return Err(e),
        }
    }
    let manifest = finish_run(
        "reasoner",
        data,
        cfg,
        &model_cfg,
        enc_cfg,
        corpus_hash,
        mask.label(),
        outcomes,
        started,
    )?;
    Ok(TrainedPrm {
        manifest,
        seeds: artifacts,
        resolved_model: model_cfg,
    })
}

/// Prepare (vocabulary + encodings) and train the reasoner in one call.
/// `profiles` must be given iff the personality source is `predicted`.
pub fn train_prm(
    corpus: &CorpusData,
    split: &CorpusSplit,
    base_model: &ModelConfig,
    enc_cfg: &EncoderConfig,
    cfg: &TrainConfig,
    profiles: Option<&BTreeMap<String, PredictedProfile>>,
) -> Result<TrainedPrm> {
    cfg.validate()?;
    match cfg.personality_source {
        PersonalitySource::Predicted if profiles.is_none() => {
            return Err(Error::Config(
                "personality source is `predicted` but no profiles were given".into(),
            ));
        }
        PersonalitySource::Gold | PersonalitySource::None if profiles.is_some() => {
            return Err(Error::Config(
                "profiles supplied but the personality source is not `predicted`".into(),
            ));
        }
        _ => {}
    }
    let data = prepare(corpus, split, enc_cfg, profiles, cfg.vocab_size)?;
    train_prm_prepared(&data, corpus.content_hash()?, base_model, enc_cfg, cfg)
}

// ---------------------------------------------------------------------------
// Predictor training
// ---------------------------------------------------------------------------

/// One (episode, person) training instance for the predictor.
#[derive(Debug, Clone, PartialEq)]
pub struct PersonInstance {
    /// Index into the encoded episode list.
    pub episode: usize,
    /// Row of this person in the episode's person grids.
    pub row: usize,
    pub tag: String,
    pub gold: MbtiType,
}

/// Expand episode indices into per-person instances, in deterministic
/// (episode, sorted tag) order. Gold labels come from the gold profile even
/// when encodings were built with substituted profiles.
pub fn person_instances(
    corpus: &CorpusData,
    data: &PreparedData,
    idx: &[usize],
) -> Vec<PersonInstance> {
    let mut out = Vec::new();
    for &i in idx {
        let enc = &data.encoded[i];
        for (row, tag) in enc.person_tags.iter().enumerate() {
            if let Some(gold) = corpus.episodes[i].profile.get(tag) {
                out.push(PersonInstance {
                    episode: i,
                    row,
                    tag: tag.clone(),
                    gold,
                });
            }
        }
    }
    out
}

pub struct PredictorSeedArtifacts {
    pub seed: u64,
    pub store: Option<ParamStore>,
}

pub struct TrainedPredictor {
    pub manifest: RunManifest,
    pub seeds: Vec<PredictorSeedArtifacts>,
    pub resolved_model: ModelConfig,
    pub inputs: PredictorInputs,
}

impl TrainedPredictor {
    /// Completed seed with the best validation metric (ties to the earliest
    /// seed in config order).
    pub fn best_seed(&self) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (pos, outcome) in self.manifest.per_seed.iter().enumerate() {
            if let SeedOutcome::Completed { val_metric, .. } = outcome {
                if best.map(|(_, m)| *val_metric > m).unwrap_or(true) {
                    best = Some((pos, *val_metric));
                }
            }
        }
        best.map(|(pos, _)| pos)
    }
}

fn eval_predictor(
    model: &PredictorModel,
    store: &ParamStore,
    data: &PreparedData,
    instances: &[PersonInstance],
    inputs: &PredictorInputs,
) -> Result<(Vec<DimensionScores>, MetricSet)> {
    let mut scores8 = Vec::with_capacity(instances.len());
    let mut gold8 = Vec::with_capacity(instances.len());
    let mut pred_types = Vec::with_capacity(instances.len());
    let mut gold_types = Vec::with_capacity(instances.len());
    let mut all_scores = Vec::with_capacity(instances.len());
    for inst in instances {
        let s = model.predict(store, &data.encoded[inst.episode], inst.row, inputs)?;
        let mut row = [0.0f64; 8];
        for k in 0..4 {
            row[2 * k] = s.0[k];
            row[2 * k + 1] = 1.0 - s.0[k];
        }
        scores8.push(row);
        gold8.push(inst.gold.to_eight_labels());
        pred_types.push(s.threshold(DEFAULT_THRESHOLD));
        gold_types.push(inst.gold);
        all_scores.push(s);
    }
    let exact = pred_types
        .iter()
        .zip(&gold_types)
        .filter(|(p, g)| p == g)
        .count() as f64
        / instances.len().max(1) as f64;
    let set = MetricSet {
        accuracy: Some(exact),
        hamming_loss: Some(metrics::hamming_loss(&pred_types, &gold_types)?),
        ranking_loss: Some(metrics::ranking_loss(&scores8, &gold8)?),
        average_precision: Some(metrics::average_precision(&scores8, &gold8)?),
    };
    Ok((all_scores, set))
}

struct PredictorSeedRun {
    outcome: SeedOutcome,
    store: Option<ParamStore>,
}

fn train_predictor_seed(
    data: &PreparedData,
    train_insts: &[PersonInstance],
    val_insts: &[PersonInstance],
    test_insts: &[PersonInstance],
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    inputs: &PredictorInputs,
    seed: u64,
) -> Result<PredictorSeedRun> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let model = PredictorModel::register(&mut store, model_cfg, &mut rng)?;
    if !cfg.video_proj_in_fusion {
        store.set_group("video_proj.w", LrGroup::Rest)?;
        store.set_group("video_proj.b", LrGroup::Rest)?;
    }
    assert_group_partition(&store)?;

    let plan = plan(cfg, train_insts.len());
    let mut dropout = DropoutState::new(model_cfg.dropout, mix(seed, 0x92ED));
    let mut tracker = BestTracker::new(&store);
    let mut epochs_run = 0;

    'epochs: for epoch in 1..=cfg.epochs {
        epochs_run = epoch;
        let mut order: Vec<usize> = (0..train_insts.len()).collect();
        let mut shuffle_rng = ChaCha20Rng::seed_from_u64(mix(seed, epoch as u64));
        order.shuffle(&mut shuffle_rng);

        for batch in order.chunks(cfg.batch_size) {
            store.zero_grads();
            for &k in batch {
                let inst = &train_insts[k];
                let mut tape = Tape::new();
                let (loss, _) = model.loss(
                    &mut tape,
                    &store,
                    &data.encoded[inst.episode],
                    inst.row,
                    inst.gold,
                    inputs,
                    &mut dropout,
                )?;
                if !tape.scalar(loss).is_finite() {
                    return Err(Error::Divergence { seed, epoch });
                }
                let grads = tape.backward(loss);
                store.accumulate_scaled(&tape, &grads, 1.0 / batch.len() as f64);
            }
            if !store.grad_norm().is_finite() {
                return Err(Error::Divergence { seed, epoch });
            }
            let step = store.optimizer_step_count() + 1;
            let mult = warmup_multiplier(step, plan.warmup_steps);
            store.adam_step(cfg.lr_fusion, cfg.lr_rest, mult);
        }

        let (_, val_set) = eval_predictor(&model, &store, data, val_insts, inputs)?;
        let val_ap = val_set.average_precision.unwrap_or(0.0);
        if tracker.observe(epoch, val_ap, &store, cfg.patience) {
            break 'epochs;
        }
    }

    store.restore(&tracker.snapshot);
    let (_, test_set) = eval_predictor(&model, &store, data, test_insts, inputs)?;
    Ok(PredictorSeedRun {
        outcome: SeedOutcome::Completed {
            seed,
            best_epoch: tracker.best_epoch,
            epochs_run,
            val_metric: tracker.best_metric,
            test: test_set,
        },
        store: Some(store),
    })
}

/// Train the personality predictor over every configured seed. The modality
/// mask in `cfg` is ignored; `inputs` selects the predictor's modalities
/// (behaviors default to off). Early stopping tracks validation average
/// precision.
pub fn train_predictor(
    corpus: &CorpusData,
    split: &CorpusSplit,
    base_model: &ModelConfig,
    enc_cfg: &EncoderConfig,
    cfg: &TrainConfig,
    inputs: &PredictorInputs,
) -> Result<TrainedPredictor> {
    cfg.validate()?;
    inputs.validate()?;
    let started = Instant::now();
    let data = prepare(corpus, split, enc_cfg, None, cfg.vocab_size)?;
    let corpus_hash = corpus.content_hash()?;
    let model_cfg = resolve_model_config(base_model, &data);
    let train_insts = person_instances(corpus, &data, &data.train_idx);
    let val_insts = person_instances(corpus, &data, &data.val_idx);
    let test_insts = person_instances(corpus, &data, &data.test_idx);
    if train_insts.is_empty() || val_insts.is_empty() || test_insts.is_empty() {
        return Err(Error::Corpus(
            "every split needs at least one (episode, person) instance".into(),
        ));
    }

    let results: Vec<Result<PredictorSeedRun>> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            train_predictor_seed(
                &data,
                &train_insts,
                &val_insts,
                &test_insts,
                &model_cfg,
                cfg,
                inputs,
                seed,
            )
        })
        .collect();

    let mut outcomes = Vec::new();
    let mut artifacts = Vec::new();
    for (&seed, r) in cfg.seeds.iter().zip(results) {
        match r {
            Ok(run) => {
                outcomes.push(run.outcome);
                artifacts.push(PredictorSeedArtifacts {
                    seed,
                    store: run.store,
                });
            }
            Err(Error::Divergence { seed, epoch }) => {
                outcomes.push(SeedOutcome::Diverged { seed, epoch });
                artifacts.push(PredictorSeedArtifacts { seed, store: None });
            }
            Err(e) => return Err(e),
        }
    }
    let manifest = finish_run(
        "personality_predictor",
        &data,
        cfg,
        &model_cfg,
        enc_cfg,
        corpus_hash,
        format!(
            "{}{}{}",
            if inputs.use_d { "D" } else { "" },
            if inputs.use_v { "V" } else { "" },
            if inputs.use_b { "B" } else { "" },
        ),
        outcomes,
        started,
    )?;
    Ok(TrainedPredictor {
        manifest,
        seeds: artifacts,
        resolved_model: model_cfg,
        inputs: *inputs,
    })
}

/// Per-axis first-pole frequency in the training labels, used as a constant
/// prediction. The thresholded type is the per-axis majority vote (ties go
/// to the first pole).
pub fn majority_baseline(train_golds: &[MbtiType]) -> Result<(DimensionScores, MbtiType)> {
    if train_golds.is_empty() {
        return Err(Error::Metric("majority baseline needs training labels".into()));
    }
    let n = train_golds.len() as f64;
    let mut scores = [0.0f64; 4];
    for t in train_golds {
        for (k, p) in t.poles().iter().enumerate() {
            if *p == Pole::First {
                scores[k] += 1.0;
            }
        }
    }
    for s in &mut scores {
        *s /= n;
    }
    let scores = DimensionScores(scores);
    Ok((scores, scores.threshold(DEFAULT_THRESHOLD)))
}

/// Run a trained predictor over whole episodes, producing one thresholded
/// profile per episode (scores for every tagged person).
pub fn predict_profiles(
    model: &PredictorModel,
    store: &ParamStore,
    corpus: &CorpusData,
    data: &PreparedData,
    idx: &[usize],
    inputs: &PredictorInputs,
    tau: f64,
) -> Result<BTreeMap<String, PredictedProfile>> {
    let mut out = BTreeMap::new();
    for &i in idx {
        let enc = &data.encoded[i];
        let mut scores = BTreeMap::new();
        for (row, tag) in enc.person_tags.iter().enumerate() {
            let s = model.predict(store, enc, row, inputs)?;
            scores.insert(tag.clone(), s);
        }
        out.insert(corpus.episodes[i].id.clone(), threshold_profile(&scores, tau));
    }
    Ok(out)
}

/// Like [`predict_profiles`], but scores are pooled per person before
/// thresholding: every appearance of a tag across `pool_idx` contributes
/// one score vector, the mean is thresholded once, and each episode's
/// profile restates that pooled result for the tags it names. A recurring
/// cast member shows up in many clips, so pooling averages away
/// single-clip noise and hands the downstream reasoner one consistent
/// type per person. Tags never seen in `pool_idx` fall back to pooling
/// over the whole corpus.
pub fn predict_profiles_aggregated(
    model: &PredictorModel,
    store: &ParamStore,
    corpus: &CorpusData,
    data: &PreparedData,
    pool_idx: &[usize],
    inputs: &PredictorInputs,
    tau: f64,
) -> Result<BTreeMap<String, PredictedProfile>> {
    let pool: BTreeSet<usize> = pool_idx.iter().copied().collect();
    let mut per_episode: Vec<Vec<DimensionScores>> = Vec::with_capacity(data.encoded.len());
    for enc in &data.encoded {
        let mut rows = Vec::with_capacity(enc.person_tags.len());
        for row in 0..enc.person_tags.len() {
            rows.push(model.predict(store, enc, row, inputs)?);
        }
        per_episode.push(rows);
    }

    // (sum, count) per tag, pooled either over `pool_idx` or over everything
    fn add<'a>(acc: &mut BTreeMap<&'a str, ([f64; 4], f64)>, tag: &'a str, s: &DimensionScores) {
        let e = acc.entry(tag).or_insert(([0.0; 4], 0.0));
        for (k, v) in e.0.iter_mut().enumerate() {
            *v += s.0[k];
        }
        e.1 += 1.0;
    }
    let mut primary: BTreeMap<&str, ([f64; 4], f64)> = BTreeMap::new();
    let mut fallback: BTreeMap<&str, ([f64; 4], f64)> = BTreeMap::new();
    for (i, enc) in data.encoded.iter().enumerate() {
        for (row, tag) in enc.person_tags.iter().enumerate() {
            let s = &per_episode[i][row];
            add(&mut fallback, tag, s);
            if pool.contains(&i) {
                add(&mut primary, tag, s);
            }
        }
    }
    let mean = |(sum, n): &([f64; 4], f64)| DimensionScores(std::array::from_fn(|k| sum[k] / n));
    let pooled: BTreeMap<&str, DimensionScores> = fallback
        .iter()
        .map(|(tag, fb)| (*tag, mean(primary.get(tag).unwrap_or(fb))))
        .collect();

    let mut out = BTreeMap::new();
    for (i, enc) in data.encoded.iter().enumerate() {
        let mut scores = BTreeMap::new();
        for tag in &enc.person_tags {
            scores.insert(tag.clone(), pooled[tag.as_str()]);
        }
        out.insert(corpus.episodes[i].id.clone(), threshold_profile(&scores, tau));
    }
    Ok(out)
}

/// Predicted profiles that simply restate the gold annotations: first-pole
/// scores of exactly 1.0 or 0.0, thresholding back to the gold types. Used
/// to check that the two-stage pipeline collapses to the gold pipeline when
/// the predictor is a perfect oracle.
pub fn gold_oracle_profiles(corpus: &CorpusData) -> BTreeMap<String, PredictedProfile> {
    let mut out = BTreeMap::new();
    for e in &corpus.episodes {
        let mut scores = BTreeMap::new();
        for (tag, t) in e.profile.iter() {
            scores.insert(tag.to_string(), DimensionScores(first_pole_targets(t)));
        }
        out.insert(e.id.clone(), threshold_profile(&scores, DEFAULT_THRESHOLD));
    }
    out
}

// ---------------------------------------------------------------------------
// Rule baselines
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    Random,
    Longest,
    Shortest,
}

/// Non-learning baselines over the four options. `longest`/`shortest` count
/// whitespace tokens and break ties toward the lowest option index; the
/// seed only matters for `random`.
pub fn rule_baseline(kind: BaselineKind, episodes: &[ClipEpisode], seed: u64) -> Vec<usize> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    episodes
        .iter()
        .map(|e| match kind {
            BaselineKind::Random => rng.random_range(0..e.options.len()),
            BaselineKind::Longest => pick_by_length(&e.options, true),
            BaselineKind::Shortest => pick_by_length(&e.options, false),
        })
        .collect()
}

fn pick_by_length(options: &[String], longest: bool) -> usize {
    let mut best = 0;
    let mut best_len = whitespace_token_count(&options[0]);
    for (i, o) in options.iter().enumerate().skip(1) {
        let len = whitespace_token_count(o);
        if (longest && len > best_len) || (!longest && len < best_len) {
            best = i;
            best_len = len;
        }
    }
    best
}

// ---------------------------------------------------------------------------
// Ablation grid
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationCell {
    /// "D", "V", "B" or "DVB".
    pub modality: String,
    pub with_personality: bool,
    pub mean_accuracy: f64,
    pub per_seed_accuracy: Vec<f64>,
    pub diverged_seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationPair {
    pub modality: String,
    /// Mean accuracy with personality minus without.
    pub delta: f64,
    /// One-sided paired bootstrap over pooled (episode, seed) predictions.
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub cells: Vec<AblationCell>,
    pub pairs: Vec<AblationPair>,
    pub n_test: usize,
    pub seeds: Vec<u64>,
}

impl AblationReport {
    /// Flat CSV, one row per cell.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("modality,personality,mean_accuracy,per_seed_accuracy\n");
        for c in &self.cells {
            out.push_str(&format!(
                "{},{},{:.6},{}\n",
                c.modality,
                if c.with_personality { "with" } else { "without" },
                c.mean_accuracy,
                c.per_seed_accuracy
                    .iter()
                    .map(|a| format!("{a:.6}"))
                    .collect::<Vec<_>>()
                    .join(";")
            ));
        }
        out.push('\n');
        out.push_str("modality,delta_with_minus_without,p_value\n");
        for p in &self.pairs {
            out.push_str(&format!("{},{:.6},{:.6}\n", p.modality, p.delta, p.p_value));
        }
        out
    }
}

fn cell_accuracies(trained: &TrainedPrm) -> (f64, Vec<f64>) {
    let per_seed: Vec<f64> = trained
        .manifest
        .per_seed
        .iter()
        .filter_map(|o| o.completed().and_then(|m| m.accuracy))
        .collect();
    (
        trained.manifest.mean_test.accuracy.unwrap_or(f64::NAN),
        per_seed,
    )
}

/// The full modality-by-personality grid: each single modality and the
/// all-modality row, each with and without personality input, trained on
/// identical seeds, plus paired significance of every personality delta.
pub fn ablation_suite(
    corpus: &CorpusData,
    split: &CorpusSplit,
    base_model: &ModelConfig,
    enc_cfg: &EncoderConfig,
    base_cfg: &TrainConfig,
) -> Result<AblationReport> {
    base_cfg.validate()?;
    let data = prepare(corpus, split, enc_cfg, None, base_cfg.vocab_size)?;
    let corpus_hash = corpus.content_hash()?;
    let grid = [
        ("D", ModalityMask { use_d: true, use_v: false, use_b: false, use_p: true }),
        ("V", ModalityMask { use_d: false, use_v: true, use_b: false, use_p: true }),
        ("B", ModalityMask { use_d: false, use_v: false, use_b: true, use_p: true }),
        ("DVB", ModalityMask { use_d: true, use_v: true, use_b: true, use_p: true }),
    ];
    let mut cells = Vec::new();
    let mut pairs = Vec::new();
    for (name, with_mask) in grid {
        let mut runs = Vec::new();
        for with_p in [true, false] {
            let mut cfg = base_cfg.clone();
            cfg.modality = ModalityMask {
                use_p: with_p,
                ..with_mask
            };
            cfg.personality_source = if with_p {
                PersonalitySource::Gold
            } else {
                PersonalitySource::None
            };
            let trained =
                train_prm_prepared(&data, corpus_hash.clone(), base_model, enc_cfg, &cfg)?;
            let (mean, per_seed) = cell_accuracies(&trained);
            cells.push(AblationCell {
                modality: name.to_string(),
                with_personality: with_p,
                mean_accuracy: mean,
                per_seed_accuracy: per_seed,
                diverged_seeds: trained.manifest.diverged_seeds.clone(),
            });
            runs.push(trained);
        }
        let (with_p_run, no_p_run) = (&runs[0], &runs[1]);
        let (preds_a, preds_b, gold) = paired_predictions(with_p_run, no_p_run, &data);
        let p_value = if gold.is_empty() {
            1.0
        } else {
            metrics::paired_bootstrap(&preds_a, &preds_b, &gold, BOOTSTRAP_RESAMPLES, BOOTSTRAP_SEED)?
        };
        let delta = cells[cells.len() - 2].mean_accuracy - cells[cells.len() - 1].mean_accuracy;
        pairs.push(AblationPair {
            modality: name.to_string(),
            delta,
            p_value,
        });
    }
    Ok(AblationReport {
        cells,
        pairs,
        n_test: data.test_idx.len(),
        seeds: base_cfg.seeds.clone(),
    })
}

/// Align two systems' test predictions over the seeds completed by both,
/// repeating the gold labels once per shared seed. The (episode, seed)
/// pairs form the units of the paired bootstrap.
pub fn paired_predictions(
    a: &TrainedPrm,
    b: &TrainedPrm,
    data: &PreparedData,
) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let gold = data.gold(&data.test_idx);
    let mut pa = Vec::new();
    let mut pb = Vec::new();
    let mut g = Vec::new();
    for (sa, sb) in a.seeds.iter().zip(&b.seeds) {
        if let (Some(x), Some(y)) = (&sa.test_predictions, &sb.test_predictions) {
            pa.extend_from_slice(x);
            pb.extend_from_slice(y);
            g.extend_from_slice(&gold);
        }
    }
    (pa, pb, g)
}

// ---------------------------------------------------------------------------
// Two-stage pipeline
// ---------------------------------------------------------------------------

/// Outputs of the two-stage pipeline: the predictor, the reasoner trained on
/// gold profiles, and the reasoner retrained from scratch on the predictor's
/// thresholded profiles.
pub struct StageTwo {
    pub predictor: TrainedPredictor,
    pub gold: TrainedPrm,
    pub predicted: TrainedPrm,
    /// Predicted profile per episode id, exported alongside the run.
    pub profiles: BTreeMap<String, PredictedProfile>,
    /// Mean gold accuracy minus mean predicted-profile accuracy.
    pub accuracy_gap: f64,
}

/// Full second stage: train (or reuse) the gold-profile reasoner, train the
/// predictor, threshold its scores into profiles for every episode, and
/// retrain the reasoner from scratch with personality input swapped to the
/// predicted profiles. Seeds are shared between the two reasoner runs.
pub fn stage_two(
    corpus: &CorpusData,
    split: &CorpusSplit,
    base_model: &ModelConfig,
    enc_cfg: &EncoderConfig,
    prm_cfg: &TrainConfig,
    predictor_cfg: &TrainConfig,
    inputs: &PredictorInputs,
    gold_run: Option<TrainedPrm>,
) -> Result<StageTwo> {
    if prm_cfg.personality_source != PersonalitySource::Gold {
        return Err(Error::Config(
            "stage two starts from a gold-profile reasoner config".into(),
        ));
    }
    let gold = match gold_run {
        Some(run) => run,
        None => train_prm(corpus, split, base_model, enc_cfg, prm_cfg, None)?,
    };

    let predictor = train_predictor(corpus, split, base_model, enc_cfg, predictor_cfg, inputs)?;
    let best = predictor
        .best_seed()
        .ok_or(Error::Divergence { seed: 0, epoch: 0 })?;
    let store = predictor.seeds[best]
        .store
        .as_ref()
        .expect("best seed has a store");
    let model = PredictorModel::bind(store, &predictor.resolved_model)?;

    // profiles for every episode, predicted with the best checkpoint and
    // pooled per person over the train+validation clips (never the test
    // clips, whose labels the second stage is judged on)
    let pred_data = prepare(corpus, split, enc_cfg, None, predictor_cfg.vocab_size)?;
    let pool_idx: Vec<usize> = pred_data
        .train_idx
        .iter()
        .chain(&pred_data.val_idx)
        .copied()
        .collect();
    let profiles = predict_profiles_aggregated(
        &model,
        store,
        corpus,
        &pred_data,
        &pool_idx,
        inputs,
        DEFAULT_THRESHOLD,
    )?;

    let mut predicted_cfg = prm_cfg.clone();
    predicted_cfg.personality_source = PersonalitySource::Predicted;
    let predicted = train_prm(
        corpus,
        split,
        base_model,
        enc_cfg,
        &predicted_cfg,
        Some(&profiles),
    )?;

    let accuracy_gap = gold.manifest.mean_test.accuracy.unwrap_or(f64::NAN)
        - predicted.manifest.mean_test.accuracy.unwrap_or(f64::NAN);
    Ok(StageTwo {
        predictor,
        gold,
        predicted,
        profiles,
        accuracy_gap,
    })
}

/// Write predicted profiles in the gold-profile JSON shape (one flat
/// tag-to-type object per episode) plus a sidecar with the raw scores.
pub fn export_predicted_profiles(
    dir: &Path,
    profiles: &BTreeMap<String, PredictedProfile>,
) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir)?;
    let types: BTreeMap<&String, &BTreeMap<String, MbtiType>> =
        profiles.iter().map(|(id, p)| (id, &p.types)).collect();
    let scores: BTreeMap<&String, &BTreeMap<String, DimensionScores>> =
        profiles.iter().map(|(id, p)| (id, &p.scores)).collect();
    let types_path = dir.join("predicted_profiles.json");
    let scores_path = dir.join("predicted_scores.json");
    serde_json::to_writer_pretty(
        std::io::BufWriter::new(std::fs::File::create(&types_path)?),
        &types,
    )?;
    serde_json::to_writer_pretty(
        std::io::BufWriter::new(std::fs::File::create(&scores_path)?),
        &scores,
    )?;
    Ok((types_path, scores_path))
}

/// Full predicted-profile bundle (types, scores, threshold per episode) as
/// one JSON file, so a later `train` with the predicted personality source
/// can reload exactly what the predictor produced.
pub fn save_predicted_profiles(
    path: &Path,
    profiles: &BTreeMap<String, PredictedProfile>,
) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    serde_json::to_writer_pretty(
        std::io::BufWriter::new(std::fs::File::create(path)?),
        profiles,
    )?;
    Ok(())
}

pub fn load_predicted_profiles(path: &Path) -> Result<BTreeMap<String, PredictedProfile>> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Config(format!("cannot read profiles {}: {e}", path.display())))?;
    let profiles: BTreeMap<String, PredictedProfile> =
        serde_json::from_reader(std::io::BufReader::new(file))?;
    for p in profiles.values() {
        p.validate()?;
    }
    Ok(profiles)
}

// ---------------------------------------------------------------------------
// Run persistence
// ---------------------------------------------------------------------------

/// Write a reasoner run to `base/<config-hash>/`: the manifest, the
/// vocabulary, and one checkpoint per completed seed. Returns the run
/// directory; the manifest is updated in place with the artifact names.
pub fn persist_prm_run(
    base: &Path,
    trained: &mut TrainedPrm,
    data: &PreparedData,
) -> Result<PathBuf> {
    let dir = base.join(&trained.manifest.config_hash);
    std::fs::create_dir_all(&dir)?;
    data.vocab.save(&dir.join("vocab.txt"))?;
    let mut artifacts = vec!["vocab.txt".to_string()];
    let config_json = serde_json::to_string(&serde_json::json!({
        "kind": trained.manifest.model_kind,
        "model": trained.manifest.model_config,
        "encoder": trained.manifest.encoder_config,
    }))?;
    for s in &trained.seeds {
        if let Some(store) = &s.store {
            let name = format!("seed{}.ckpt", s.seed);
            save_checkpoint(&dir.join(&name), store, &config_json)?;
            artifacts.push(name);
        }
    }
    artifacts.push("manifest.json".to_string());
    trained.manifest.artifacts = artifacts;
    trained.manifest.save(&dir.join("manifest.json"))?;
    Ok(dir)
}

/// Write a predictor run analogously to [`persist_prm_run`].
pub fn persist_predictor_run(
    base: &Path,
    trained: &mut TrainedPredictor,
    vocab: &Vocabulary,
) -> Result<PathBuf> {
    let dir = base.join(&trained.manifest.config_hash);
    std::fs::create_dir_all(&dir)?;
    vocab.save(&dir.join("vocab.txt"))?;
    let mut artifacts = vec!["vocab.txt".to_string()];
    let config_json = serde_json::to_string(&serde_json::json!({
        "kind": trained.manifest.model_kind,
        "model": trained.manifest.model_config,
        "encoder": trained.manifest.encoder_config,
    }))?;
    for s in &trained.seeds {
        if let Some(store) = &s.store {
            let name = format!("seed{}.ckpt", s.seed);
            save_checkpoint(&dir.join(&name), store, &config_json)?;
            artifacts.push(name);
        }
    }
    artifacts.push("manifest.json".to_string());
    trained.manifest.artifacts = artifacts;
    trained.manifest.save(&dir.join("manifest.json"))?;
    Ok(dir)
}
