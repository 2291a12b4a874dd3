//! One TOML config drives every CLI verb. The file is versioned by a
//! `schema` tag, every field has a default, and `--set dotted.path=value`
//! overrides individual entries without editing the file. Outputs land
//! under `out_dir/<12-hex config hash>/`, so a config change can never
//! silently overwrite another run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::encode::{EncoderConfig, SpeakerMode};
use crate::error::{Error, Result};
use crate::model::predictor::PredictorInputs;
use crate::model::ModelConfig;
use crate::syngen::GeneratorConfig;
use crate::train::{config_hash, TrainConfig};

pub const CONFIG_SCHEMA: &str = "phmr-config-1";

/// Corpus file locations, relative to the run directory unless absolute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusPaths {
    pub episodes: PathBuf,
    pub sidecar: PathBuf,
    pub traces: PathBuf,
    pub split: PathBuf,
}

impl Default for CorpusPaths {
    fn default() -> Self {
        CorpusPaths {
            episodes: "corpus/episodes.jsonl".into(),
            sidecar: "corpus/visual.bin".into(),
            traces: "corpus/traces.json".into(),
            split: "corpus/split.json".into(),
        }
    }
}

/// How `split` carves the corpus: proportional random shares, or the
/// two-corpus recipe where a held-out id list becomes the test set and the
/// rest splits 80/20 into train/validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitKind {
    Random,
    HeldOutTest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSection {
    pub kind: SplitKind,
    /// Relative shares for train/validation/test under `random`.
    pub ratio: [usize; 3],
    pub seed: u64,
    /// JSON file with the held-out episode id list (`held_out_test` only).
    pub held_out_ids: Option<PathBuf>,
}

impl Default for SplitSection {
    fn default() -> Self {
        SplitSection {
            kind: SplitKind::Random,
            ratio: [4, 1, 1],
            seed: 17,
            held_out_ids: None,
        }
    }
}

/// Predictor-specific settings on top of its training schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PredictorSection {
    pub inputs: PredictorInputs,
    /// First-pole decision threshold on the sigmoid scores.
    pub threshold: f64,
    /// Pool scores per person over train+validation episodes before
    /// thresholding (one consistent type per person). Off = per-episode.
    pub aggregate: bool,
    /// Where `predict-personality` drops the profile bundle and `train`
    /// with a predicted source picks it up (relative to `out_dir`).
    pub profiles: PathBuf,
}

impl Default for PredictorSection {
    fn default() -> Self {
        PredictorSection {
            inputs: PredictorInputs::default(),
            threshold: 0.5,
            aggregate: true,
            profiles: PathBuf::from("predicted/profiles.json"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReportSection {
    /// Words kept per pole in the frequency report.
    pub top_k: usize,
}

impl Default for ReportSection {
    fn default() -> Self {
        ReportSection { top_k: 50 }
    }
}

/// The whole application config: one section per pipeline stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AppConfig {
    pub schema: String,
    /// Run directories are created under this root.
    pub out_dir: PathBuf,
    pub corpus: CorpusPaths,
    pub generator: GeneratorConfig,
    pub split: SplitSection,
    pub encoder: EncoderConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Training schedule for the personality predictor.
    pub predictor_train: TrainConfig,
    pub predictor: PredictorSection,
    pub report: ReportSection,
}

impl Default for AppConfig {
    fn default() -> Self {
        AppConfig {
            schema: CONFIG_SCHEMA.into(),
            out_dir: "runs".into(),
            corpus: CorpusPaths::default(),
            generator: GeneratorConfig::default(),
            split: SplitSection::default(),
            encoder: EncoderConfig {
                l_d: 8,
                l_a: 8,
                l_b: 6,
                l_p: 4,
                speaker_mode: SpeakerMode::Additive,
                alias_tags: true,
            },
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            predictor_train: TrainConfig::default(),
            predictor: PredictorSection::default(),
            report: ReportSection::default(),
        }
    }
}

impl AppConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let cfg: AppConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("bad config: {e}")))?;
        cfg.check_schema()?;
        Ok(cfg)
    }

    pub fn check_schema(&self) -> Result<()> {
        if self.schema != CONFIG_SCHEMA {
            return Err(Error::Config(format!(
                "config schema {:?} unsupported (expected {CONFIG_SCHEMA:?})",
                self.schema
            )));
        }
        Ok(())
    }

    /// Apply `dotted.path=value` overrides. Values are parsed as TOML, so
    /// strings with special characters need quotes: `--set corpus.split='"s.json"'`.
    pub fn apply_overrides(&mut self, overrides: &[String]) -> Result<()> {
        if overrides.is_empty() {
            return Ok(());
        }
        let mut tree = toml::Value::try_from(&*self)
            .map_err(|e| Error::Config(format!("config not representable: {e}")))?;
        for item in overrides {
            let (path, raw) = item
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {item:?} is not path=value")))?;
            let value = parse_toml_value(raw.trim())?;
            set_path(&mut tree, path.trim(), value)?;
        }
        *self = tree
            .try_into()
            .map_err(|e| Error::Config(format!("override produced invalid config: {e}")))?;
        self.check_schema()
    }

    /// Twelve hex characters over the canonical JSON form; names the run
    /// directory.
    pub fn hash(&self) -> Result<String> {
        config_hash(self)
    }

    /// `out_dir/<config hash>`.
    pub fn run_dir(&self) -> Result<PathBuf> {
        Ok(self.out_dir.join(self.hash()?))
    }

    /// Resolve a data path against `out_dir` unless absolute. Data files
    /// (corpus, split, predicted profiles) live directly under `out_dir` so
    /// that every experiment hash over the same corpus shares them; only
    /// per-experiment artifacts go under [`AppConfig::run_dir`].
    pub fn resolve(&self, p: &Path) -> Result<PathBuf> {
        if p.is_absolute() {
            Ok(p.to_path_buf())
        } else {
            Ok(self.out_dir.join(p))
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(format!("serialize: {e}")))
    }
}

fn parse_toml_value(raw: &str) -> Result<toml::Value> {
    let doc = format!("x = {raw}");
    if let Ok(table) = doc.parse::<toml::Table>() {
        return Ok(table["x"].clone());
    }
    // bare word: treat as a string (lets users skip quotes for enum names)
    Ok(toml::Value::String(raw.to_string()))
}

fn set_path(tree: &mut toml::Value, path: &str, value: toml::Value) -> Result<()> {
    let segments: Vec<&str> = path.split('.').collect();
    if segments.iter().any(|s| s.is_empty()) {
        return Err(Error::Config(format!("bad override path {path:?}")));
    }
    let mut node = tree;
    for seg in &segments[..segments.len() - 1] {
        node = node
            .as_table_mut()
            .and_then(|t| t.get_mut(*seg))
            .ok_or_else(|| Error::Config(format!("unknown config section {seg:?} in {path:?}")))?;
    }
    let last = segments[segments.len() - 1];
    let table = node
        .as_table_mut()
        .ok_or_else(|| Error::Config(format!("{path:?} does not name a table entry")))?;
    if !table.contains_key(last) {
        return Err(Error::Config(format!("unknown config key {last:?} in {path:?}")));
    }
    table.insert(last.to_string(), value);
    Ok(())
}
