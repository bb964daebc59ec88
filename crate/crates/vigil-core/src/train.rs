//! Training: stratified splitting, class weighting, Adam, the fit loop with
//! early stopping, and evaluation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::metrics::{eval_report, EvalReport};
use crate::model::Model;
use crate::params::{Binding, ParamStore};
use crate::rng::RngState;
use crate::scalar::Scalar;
use crate::text::dataset::NUM_CLASSES;
use crate::text::vocab::EncodedBatch;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClassWeighting {
    #[serde(rename = "none")]
    None,
    #[serde(rename = "inverse_frequency")]
    InverseFrequency,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Epochs without validation macro-F1 improvement before stopping.
    pub early_stopping_patience: usize,
    pub seed: u64,
    pub class_weighting: ClassWeighting,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            max_epochs: 50,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            early_stopping_patience: 5,
            seed: 42,
            class_weighting: ClassWeighting::InverseFrequency,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::Config("batch_size and max_epochs must be positive".into()));
        }
        if self.learning_rate < 0.0 {
            return Err(Error::Config("learning_rate must be non-negative".into()));
        }
        if self.early_stopping_patience < 1 {
            return Err(Error::Config("early_stopping_patience must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("Adam betas must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Per-class sample counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabelDistribution {
    pub counts: [usize; NUM_CLASSES],
}

impl LabelDistribution {
    pub fn from_labels(labels: &[u8]) -> LabelDistribution {
        let mut counts = [0usize; NUM_CLASSES];
        for &l in labels {
            counts[l as usize] += 1;
        }
        LabelDistribution { counts }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

/// Inverse-frequency weights `w_c = N / (3 · n_c)`.
pub fn class_weights(dist: &LabelDistribution) -> Result<[f64; NUM_CLASSES]> {
    let n = dist.total();
    if n == 0 {
        return Err(Error::Config("cannot weight an empty distribution".into()));
    }
    let mut w = [0.0; NUM_CLASSES];
    for (c, &count) in dist.counts.iter().enumerate() {
        if count == 0 {
            return Err(Error::Config(format!(
                "class {c} has no samples; use class_weighting = none"
            )));
        }
        w[c] = n as f64 / (NUM_CLASSES as f64 * count as f64);
    }
    Ok(w)
}

/// Split row indices into (train, validation) preserving per-class
/// proportions within rounding. Deterministic for a given seed.
pub fn stratified_split(
    labels: &[u8],
    val_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..1.0).contains(&val_fraction) || val_fraction == 0.0 {
        return Err(Error::Config(format!(
            "val_fraction must lie in (0, 1), got {val_fraction}"
        )));
    }
    let mut rng = RngState::new(seed);
    let mut train = Vec::new();
    let mut val = Vec::new();
    for class in 0..NUM_CLASSES as u8 {
        let mut members: Vec<usize> = labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == class)
            .map(|(i, _)| i)
            .collect();
        rng.shuffle(&mut members);
        // Round half up, capped by the class size.
        let n_val = ((members.len() as f64 * val_fraction + 0.5).floor() as usize)
            .min(members.len());
        val.extend_from_slice(&members[..n_val]);
        train.extend_from_slice(&members[n_val..]);
    }
    if train.is_empty() || val.is_empty() {
        return Err(Error::Config(format!(
            "split with val_fraction {val_fraction} leaves an empty side ({} train, {} val)",
            train.len(),
            val.len()
        )));
    }
    train.sort_unstable();
    val.sort_unstable();
    Ok((train, val))
}

/// Adam optimizer state over a parameter store.
pub struct Adam<T> {
    lr: T,
    beta1: f64,
    beta2: f64,
    epsilon: T,
    step: u64,
    first: Vec<Vec<T>>,
    second: Vec<Vec<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(cfg: &TrainConfig, store: &ParamStore<T>) -> Adam<T> {
        let (first, second) = store
            .iter()
            .map(|(_, p)| {
                (
                    vec![T::zero(); p.value.numel()],
                    vec![T::zero(); p.value.numel()],
                )
            })
            .unzip();
        Adam {
            lr: T::from_f64(cfg.learning_rate),
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            epsilon: T::from_f64(cfg.epsilon),
            step: 0,
            first,
            second,
        }
    }

    /// Apply one update from gradients in registry order; `None` entries
    /// (frozen parameters) are skipped.
    pub fn step(&mut self, store: &mut ParamStore<T>, grads: &[Option<&[T]>]) -> Result<()> {
        if grads.len() != self.first.len() {
            return Err(Error::Contract(format!(
                "{} gradients for {} parameters",
                grads.len(),
                self.first.len()
            )));
        }
        self.step += 1;
        let b1 = T::from_f64(self.beta1);
        let b2 = T::from_f64(self.beta2);
        let corr1 = T::from_f64(1.0 - self.beta1.powi(self.step as i32));
        let corr2 = T::from_f64(1.0 - self.beta2.powi(self.step as i32));
        let one = T::one();
        let ids: Vec<crate::params::ParamId> = store.iter().map(|(id, _)| id).collect();
        for (idx, id) in ids.into_iter().enumerate() {
            let Some(grad) = grads[idx] else { continue };
            let m = &mut self.first[idx];
            let v = &mut self.second[idx];
            let theta = store.value_mut(id).data_mut();
            for i in 0..theta.len() {
                let g = grad[i];
                m[i] = b1 * m[i] + (one - b1) * g;
                v[i] = b2 * v[i] + (one - b2) * g * g;
                let m_hat = m[i] / corr1;
                let v_hat = v[i] / corr2;
                theta[i] = theta[i] - self.lr * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val: EvalReport,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub history: Vec<EpochStats>,
    pub best_epoch: usize,
    pub best_macro_f1: f64,
    pub stopped_early: bool,
}

/// Run predictions and score them against the batch labels.
pub fn evaluate<T: Scalar>(model: &Model<T>, data: &EncodedBatch) -> Result<EvalReport> {
    let gold = data
        .labels
        .as_ref()
        .ok_or_else(|| Error::Contract("evaluate requires labeled data".into()))?;
    let preds = model.predict(data)?;
    let pred_labels: Vec<u8> = preds.iter().map(|p| p.label).collect();
    eval_report(gold, &pred_labels)
}

/// Mini-batch training with Adam on weighted cross-entropy.
///
/// Keeps the best-validation-macro-F1 parameters; on return the model holds
/// that snapshot. Training aborts with a numeric error if the loss leaves
/// the finite range.
pub fn fit<T: Scalar>(
    model: &mut Model<T>,
    train: &EncodedBatch,
    val: &EncodedBatch,
    cfg: &TrainConfig,
) -> Result<FitResult> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    let labels = train
        .labels
        .as_ref()
        .ok_or_else(|| Error::Contract("fit requires labeled training data".into()))?
        .clone();

    let weights: Option<Vec<T>> = match cfg.class_weighting {
        ClassWeighting::None => None,
        ClassWeighting::InverseFrequency => {
            let w = class_weights(&LabelDistribution::from_labels(&labels))?;
            Some(w.iter().map(|&x| T::from_f64(x)).collect())
        }
    };

    let mut rng = RngState::new(cfg.seed);
    let mut adam = Adam::new(cfg, model.store());
    let mut history = Vec::new();
    let mut best_epoch = 0usize;
    let mut best_macro_f1 = f64::NEG_INFINITY;
    let mut best_snapshot = model.store().snapshot();
    let mut stopped_early = false;

    let n = train.len();
    for epoch in 1..=cfg.max_epochs {
        let mut order: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut order);

        let mut loss_sum = 0.0f64;
        for chunk in order.chunks(cfg.batch_size) {
            let sub = train.select(chunk);
            let sub_labels = sub.labels.as_ref().expect("labels selected with rows");

            let mut g = Graph::new();
            let bind = Binding::bind(&mut g, model.store());
            let logits = model.forward_train(&mut g, &bind, sub.ids(), &mut rng)?;
            let loss = g.softmax_cross_entropy(logits, sub_labels, weights.as_deref())?;
            let loss_val = g.value(loss).item().into_f64();
            if !loss_val.is_finite() {
                return Err(Error::Numeric(format!(
                    "loss became {loss_val} at epoch {epoch}; try a lower learning_rate than {}",
                    cfg.learning_rate
                )));
            }
            g.backward(loss)?;
            let grads = bind.grads(&g);
            adam.step(model.store_mut(), &grads)?;
            loss_sum += loss_val * chunk.len() as f64;
        }
        let train_loss = loss_sum / n as f64;
        let val_report = evaluate(model, val)?;

        if val_report.macro_f1 > best_macro_f1 {
            best_macro_f1 = val_report.macro_f1;
            best_epoch = epoch;
            best_snapshot = model.store().snapshot();
        }
        history.push(EpochStats {
            epoch,
            train_loss,
            val: val_report,
        });
        if epoch - best_epoch >= cfg.early_stopping_patience {
            stopped_early = true;
            break;
        }
    }
    model.store_mut().restore(&best_snapshot)?;
    Ok(FitResult {
        history,
        best_epoch,
        best_macro_f1,
        stopped_early,
    })
}

/// History CSV: one row per epoch.
pub fn history_csv(history: &[EpochStats]) -> String {
    let mut out = String::from(
        "epoch,train_loss,val_macro_f1,val_micro_f1,val_weighted_f1,val_accuracy,val_f1_clean,val_f1_offensive,val_f1_hate\n",
    );
    for h in history {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            h.epoch,
            h.train_loss,
            h.val.macro_f1,
            h.val.micro_f1,
            h.val.weighted_f1,
            h.val.accuracy,
            h.val.per_class[0].f1,
            h.val.per_class[1].f1,
            h.val.per_class[2].f1,
        ));
    }
    out
}
