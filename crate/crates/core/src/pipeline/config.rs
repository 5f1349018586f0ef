//! Run configuration: a flat key-value file, environment overrides, and
//! command-line flags, resolved in that order (flags win).
//!
//! Every command receives one fully resolved [`RunConfig`], and every
//! command serializes that resolved config next to its outputs, so any
//! artifact directory states exactly how it was produced.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::datagen::{load_jsonl, synth_task, RetrievalDataset, SynthRule};
use crate::distill::AblationVariant;
use crate::error::{Error, Result};
use crate::student::PredictSpan;
use crate::teacher::ScoreMode;
use crate::tinylm::LMConfig;

/// Prefix for environment-variable overrides: `JEPA_IR_<KEY>` (uppercased
/// config key, e.g. `JEPA_IR_D_MODEL=32`).
pub const ENV_PREFIX: &str = "JEPA_IR_";

/// Where training and evaluation data comes from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DataSource {
    /// Generated rationale task: pool size and per-split query counts.
    Synth { n_docs: usize, train: usize, dev: usize, test: usize },
    Jsonl(PathBuf),
}

/// One resolved run configuration. `seed` is mandatory — there is no
/// implicit default, so every artifact records the seed that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: LMConfig,
    pub data: DataSource,
    pub lr: f64,
    pub batch: usize,
    pub steps: usize,
    /// Secondary cap in epochs; 0 means step-capped only.
    pub epochs: usize,
    pub w: f64,
    pub seed: u64,
    pub out: PathBuf,
    pub score_mode: ScoreMode,
    pub predict_span: PredictSpan,
    pub variant: AblationVariant,
    pub k: usize,
    /// Predictor depth in linear layers.
    pub pred_layers: usize,
    /// Dev evaluation cadence (teacher training), in steps.
    pub eval_every: usize,
    /// Non-improving dev evaluations tolerated before early stop.
    pub patience: usize,
}

const KNOWN_KEYS: &[&str] = &[
    "d_model",
    "n_layers",
    "n_heads",
    "vocab_size",
    "max_window",
    "l_d_max",
    "data",
    "n_docs",
    "train_queries",
    "dev_queries",
    "test_queries",
    "lr",
    "batch",
    "steps",
    "epochs",
    "w",
    "seed",
    "out",
    "score_mode",
    "predict_span",
    "variant",
    "k",
    "pred_layers",
    "eval_every",
    "patience",
];

/// Parse the flat `key = value` format: one pair per line, `#` comments,
/// blank lines ignored. Unknown keys are rejected with their line number.
pub fn parse_flat(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Parse {
                line: idx + 1,
                msg: format!("expected 'key = value', got '{line}'"),
            });
        };
        let key = key.trim().to_string();
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(Error::Parse { line: idx + 1, msg: format!("unknown config key '{key}'") });
        }
        out.insert(key, value.trim().to_string());
    }
    Ok(out)
}

/// Collect `JEPA_IR_*` environment overrides as config keys.
pub fn env_overrides() -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    for (key, value) in std::env::vars() {
        if let Some(rest) = key.strip_prefix(ENV_PREFIX) {
            let key = rest.to_ascii_lowercase();
            if KNOWN_KEYS.contains(&key.as_str()) {
                out.insert(key, value);
            }
        }
    }
    out
}

fn parse_key<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::validation(format!("config key '{key}': bad value '{value}' ({e})")))
}

impl RunConfig {
    /// Resolve a configuration from layered sources. Later maps win key by
    /// key; `seed` must be present in at least one layer.
    pub fn resolve(layers: &[&BTreeMap<String, String>]) -> Result<RunConfig> {
        let mut merged: BTreeMap<&str, &str> = BTreeMap::new();
        for layer in layers {
            for (k, v) in layer.iter() {
                merged.insert(k, v);
            }
        }
        for key in merged.keys() {
            if !KNOWN_KEYS.contains(key) {
                return Err(Error::validation(format!("unknown config key '{key}'")));
            }
        }

        let mut model = LMConfig::default();
        if let Some(v) = merged.get("d_model") {
            model.d_model = parse_key("d_model", v)?;
        }
        if let Some(v) = merged.get("n_layers") {
            model.n_layers = parse_key("n_layers", v)?;
        }
        if let Some(v) = merged.get("n_heads") {
            model.n_heads = parse_key("n_heads", v)?;
        }
        if let Some(v) = merged.get("vocab_size") {
            model.vocab_size = parse_key("vocab_size", v)?;
        }
        if let Some(v) = merged.get("max_window") {
            model.max_window = parse_key("max_window", v)?;
        }
        if let Some(v) = merged.get("l_d_max") {
            model.l_d_max = parse_key("l_d_max", v)?;
        }
        model.validate()?;

        let data = match merged.get("data").copied().unwrap_or("synth") {
            "synth" => DataSource::Synth {
                n_docs: merged.get("n_docs").map(|v| parse_key("n_docs", v)).transpose()?.unwrap_or(8),
                train: merged
                    .get("train_queries")
                    .map(|v| parse_key("train_queries", v))
                    .transpose()?
                    .unwrap_or(200),
                dev: merged
                    .get("dev_queries")
                    .map(|v| parse_key("dev_queries", v))
                    .transpose()?
                    .unwrap_or(50),
                test: merged
                    .get("test_queries")
                    .map(|v| parse_key("test_queries", v))
                    .transpose()?
                    .unwrap_or(100),
            },
            path => DataSource::Jsonl(PathBuf::from(path)),
        };

        let seed = merged
            .get("seed")
            .ok_or_else(|| {
                Error::usage("seed is mandatory: set it via --seed, the config file, or JEPA_IR_SEED")
            })
            .and_then(|v| parse_key("seed", v))?;

        let cfg = RunConfig {
            model,
            data,
            lr: merged.get("lr").map(|v| parse_key("lr", v)).transpose()?.unwrap_or(1e-3),
            batch: merged.get("batch").map(|v| parse_key("batch", v)).transpose()?.unwrap_or(16),
            steps: merged.get("steps").map(|v| parse_key("steps", v)).transpose()?.unwrap_or(600),
            epochs: merged.get("epochs").map(|v| parse_key("epochs", v)).transpose()?.unwrap_or(0),
            w: merged.get("w").map(|v| parse_key("w", v)).transpose()?.unwrap_or(0.25),
            seed,
            out: PathBuf::from(merged.get("out").copied().unwrap_or("out")),
            score_mode: merged
                .get("score_mode")
                .map(|v| parse_key("score_mode", v))
                .transpose()?
                .unwrap_or_default(),
            predict_span: merged
                .get("predict_span")
                .map(|v| parse_key("predict_span", v))
                .transpose()?
                .unwrap_or_default(),
            variant: merged
                .get("variant")
                .map(|v| parse_key("variant", v))
                .transpose()?
                .unwrap_or_default(),
            k: merged.get("k").map(|v| parse_key("k", v)).transpose()?.unwrap_or(5),
            pred_layers: merged
                .get("pred_layers")
                .map(|v| parse_key("pred_layers", v))
                .transpose()?
                .unwrap_or(2),
            eval_every: merged
                .get("eval_every")
                .map(|v| parse_key("eval_every", v))
                .transpose()?
                .unwrap_or(100),
            patience: merged
                .get("patience")
                .map(|v| parse_key("patience", v))
                .transpose()?
                .unwrap_or(12),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.batch == 0 {
            return Err(Error::validation("batch must be positive"));
        }
        if self.k == 0 {
            return Err(Error::validation("k must be at least 1"));
        }
        if self.w < 0.0 {
            return Err(Error::validation("w must be nonnegative"));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::validation("lr must be positive and finite"));
        }
        if self.pred_layers == 0 {
            return Err(Error::validation("pred_layers must be at least 1"));
        }
        if let DataSource::Synth { n_docs, .. } = self.data {
            if n_docs < 2 {
                return Err(Error::validation("synth pool needs at least 2 documents"));
            }
        }
        Ok(())
    }

    /// Serialize back to the flat format, every key explicit, fixed order.
    pub fn to_flat_string(&self) -> String {
        let mut s = String::new();
        let m = &self.model;
        let _ = writeln!(s, "d_model = {}", m.d_model);
        let _ = writeln!(s, "n_layers = {}", m.n_layers);
        let _ = writeln!(s, "n_heads = {}", m.n_heads);
        let _ = writeln!(s, "vocab_size = {}", m.vocab_size);
        let _ = writeln!(s, "max_window = {}", m.max_window);
        let _ = writeln!(s, "l_d_max = {}", m.l_d_max);
        match &self.data {
            DataSource::Synth { n_docs, train, dev, test } => {
                let _ = writeln!(s, "data = synth");
                let _ = writeln!(s, "n_docs = {n_docs}");
                let _ = writeln!(s, "train_queries = {train}");
                let _ = writeln!(s, "dev_queries = {dev}");
                let _ = writeln!(s, "test_queries = {test}");
            }
            DataSource::Jsonl(path) => {
                let _ = writeln!(s, "data = {}", path.display());
            }
        }
        let _ = writeln!(s, "lr = {}", self.lr);
        let _ = writeln!(s, "batch = {}", self.batch);
        let _ = writeln!(s, "steps = {}", self.steps);
        let _ = writeln!(s, "epochs = {}", self.epochs);
        let _ = writeln!(s, "w = {}", self.w);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "out = {}", self.out.display());
        let _ = writeln!(s, "score_mode = {}", self.score_mode);
        let _ = writeln!(s, "predict_span = {}", self.predict_span);
        let _ = writeln!(s, "variant = {}", self.variant);
        let _ = writeln!(s, "k = {}", self.k);
        let _ = writeln!(s, "pred_layers = {}", self.pred_layers);
        let _ = writeln!(s, "eval_every = {}", self.eval_every);
        let _ = writeln!(s, "patience = {}", self.patience);
        s
    }

    /// Materialize the configured dataset.
    pub fn load_dataset(&self) -> Result<RetrievalDataset> {
        match &self.data {
            DataSource::Synth { n_docs, train, dev, test } => {
                let rule =
                    SynthRule { seed: self.seed, n_docs: *n_docs, ..SynthRule::default() };
                synth_task(&rule, *train, *dev, *test)
            }
            DataSource::Jsonl(path) => {
                if !path.exists() {
                    return Err(Error::usage(format!(
                        "dataset file '{}' does not exist",
                        path.display()
                    )));
                }
                load_jsonl(path)
            }
        }
    }
}

/// Read and parse a config file.
pub fn load_config_file(path: &Path) -> Result<BTreeMap<String, String>> {
    if !path.exists() {
        return Err(Error::usage(format!("config file '{}' does not exist", path.display())));
    }
    parse_flat(&std::fs::read_to_string(path)?)
}
