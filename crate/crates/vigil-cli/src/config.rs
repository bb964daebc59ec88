//! Run configuration: a JSON file with three sections (`model`, `train`,
//! `data`) merged with command-line overrides. Unknown keys are rejected.
//!
//! Relative `dataset`, `vectors` and `lexicon` paths resolve against the
//! config file's directory; `out_dir` resolves against the working
//! directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use vigil_core::error::{Error, Result};
use vigil_core::model::{ModelKind, ModelSpec};
use vigil_core::train::{ClassWeighting, TrainConfig};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    model: RawModel,
    #[serde(default)]
    train: RawTrain,
    data: RawData,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    kind: Option<ModelKind>,
    max_len: Option<usize>,
    embed_dim: Option<usize>,
    dropout_rate: Option<f64>,
    lstm_units: Option<usize>,
    gru_units: Option<usize>,
    conv_filters: Option<usize>,
    kernel_widths: Option<Vec<usize>>,
    num_classes: Option<usize>,
    embeddings_trainable: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTrain {
    batch_size: Option<usize>,
    max_epochs: Option<usize>,
    learning_rate: Option<f64>,
    beta1: Option<f64>,
    beta2: Option<f64>,
    epsilon: Option<f64>,
    early_stopping_patience: Option<usize>,
    seed: Option<u64>,
    class_weighting: Option<ClassWeighting>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawData {
    dataset: PathBuf,
    vectors: Option<PathBuf>,
    lexicon: Option<PathBuf>,
    out_dir: Option<PathBuf>,
    min_frequency: Option<u32>,
    val_fraction: Option<f64>,
}

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub model: Option<ModelKind>,
    pub seed: Option<u64>,
    pub vectors: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub class_weights: Option<ClassWeighting>,
}

/// Fully resolved configuration for one training run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub spec: ModelSpec,
    pub train: TrainConfig,
    pub val_fraction: f64,
    pub dataset: PathBuf,
    pub vectors: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub min_frequency: u32,
}

impl RunConfig {
    pub fn load(config_path: &Path, overrides: &Overrides) -> Result<RunConfig> {
        let text = fs::read_to_string(config_path)?;
        let raw: RawConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", config_path.display())))?;
        let base = config_path.parent().unwrap_or_else(|| Path::new("."));

        let kind = overrides
            .model
            .or(raw.model.kind)
            .unwrap_or(ModelKind::BiGruLstmCnn);
        // Kind-specific defaults first, explicit values on top.
        let defaults = ModelSpec::new(kind);
        let spec = ModelSpec {
            kind,
            max_len: raw.model.max_len.unwrap_or(defaults.max_len),
            embed_dim: raw.model.embed_dim.unwrap_or(defaults.embed_dim),
            dropout_rate: raw.model.dropout_rate.unwrap_or(defaults.dropout_rate),
            lstm_units: raw.model.lstm_units.unwrap_or(defaults.lstm_units),
            gru_units: raw.model.gru_units.unwrap_or(defaults.gru_units),
            conv_filters: raw.model.conv_filters.unwrap_or(defaults.conv_filters),
            kernel_widths: raw.model.kernel_widths.unwrap_or(defaults.kernel_widths),
            num_classes: raw.model.num_classes.unwrap_or(defaults.num_classes),
            embeddings_trainable: raw
                .model
                .embeddings_trainable
                .unwrap_or(defaults.embeddings_trainable),
        };
        spec.validate()?;

        let td = TrainConfig::default();
        let train = TrainConfig {
            batch_size: raw.train.batch_size.unwrap_or(td.batch_size),
            max_epochs: raw.train.max_epochs.unwrap_or(td.max_epochs),
            learning_rate: raw.train.learning_rate.unwrap_or(td.learning_rate),
            beta1: raw.train.beta1.unwrap_or(td.beta1),
            beta2: raw.train.beta2.unwrap_or(td.beta2),
            epsilon: raw.train.epsilon.unwrap_or(td.epsilon),
            early_stopping_patience: raw
                .train
                .early_stopping_patience
                .unwrap_or(td.early_stopping_patience),
            seed: overrides.seed.or(raw.train.seed).unwrap_or(td.seed),
            class_weighting: overrides
                .class_weights
                .or(raw.train.class_weighting)
                .unwrap_or(td.class_weighting),
        };
        train.validate()?;

        let val_fraction = raw.data.val_fraction.unwrap_or(0.1);
        if !(0.0..1.0).contains(&val_fraction) || val_fraction == 0.0 {
            return Err(Error::Config(format!(
                "val_fraction must lie in (0, 1), got {val_fraction}"
            )));
        }

        let resolve = |p: &PathBuf| -> PathBuf {
            if p.is_absolute() {
                p.clone()
            } else {
                base.join(p)
            }
        };
        let dataset = resolve(&raw.data.dataset);
        let vectors = overrides
            .vectors
            .clone()
            .or_else(|| raw.data.vectors.as_ref().map(resolve));
        let lexicon = overrides
            .lexicon
            .clone()
            .or_else(|| raw.data.lexicon.as_ref().map(resolve));
        let out_dir = overrides
            .out_dir
            .clone()
            .or(raw.data.out_dir)
            .unwrap_or_else(|| PathBuf::from("runs").join(kind_slug(kind)));

        for (name, path) in [
            ("dataset", Some(&dataset)),
            ("vectors", vectors.as_ref()),
            ("lexicon", lexicon.as_ref()),
        ] {
            if let Some(p) = path {
                if !p.exists() {
                    return Err(Error::Data(format!(
                        "{name} path does not exist: {}",
                        p.display()
                    )));
                }
            }
        }

        Ok(RunConfig {
            spec,
            train,
            val_fraction,
            dataset,
            vectors,
            lexicon,
            out_dir,
            min_frequency: raw.data.min_frequency.unwrap_or(1),
        })
    }
}

fn kind_slug(kind: ModelKind) -> &'static str {
    match kind {
        ModelKind::TextCnn => "textcnn",
        ModelKind::BiGruCnn => "bigru-cnn",
        ModelKind::BiGruLstmCnn => "bigru-lstm-cnn",
    }
}
