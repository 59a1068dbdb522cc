//! Adam training loop with alternating estimator updates, per-epoch
//! history and checkpoints.

mod adam;

pub use adam::{adam_step, AdamConfig, AdamState};

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::mmqnet::{forward, Batch, Model, ModelConfig};
use crate::objective::{class_loss, recon_loss, total_loss, CmiEstimator, LossWeights};
use crate::seed;
use crate::synthgen::{FeatureScaler, FeatureSet};
use crate::tensor_ad::{ParamStore, Tape, Tensor};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(flatten)]
    pub adam: AdamConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub weights: LossWeights,
    pub estimator_steps: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            adam: AdamConfig::default(),
            epochs: 300,
            batch_size: 128,
            seed: 0,
            weights: LossWeights::default(),
            estimator_steps: 5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.adam.validate().map_err(Error::Config)?;
        self.weights.validate().map_err(Error::Config)?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    #[serde(rename = "L_R")]
    pub l_r: f64,
    #[serde(rename = "L_C")]
    pub l_c: f64,
    #[serde(rename = "L_I")]
    pub l_i: f64,
    #[serde(rename = "L_total")]
    pub l_total: f64,
    pub train_acc: f64,
    pub val_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
    /// Last checkpoint written, if any.
    pub checkpoint: Option<PathBuf>,
}

impl TrainHistory {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        if self.records.is_empty() {
            w.write_record(["epoch", "L_R", "L_C", "L_I", "L_total", "train_acc", "val_acc"])?;
        }
        for r in &self.records {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }
}

/// Loss values of one optimisation step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLosses {
    pub l_r: f64,
    pub l_c: f64,
    pub l_i: f64,
    pub l_total: f64,
    pub correct: usize,
}

/// Mutable training state: model, optimiser moments and estimator.
pub struct Trainer {
    pub model: Model,
    pub estimator: CmiEstimator,
    pub config: TrainConfig,
    state: AdamState,
}

fn argmax_row(row: &[f64]) -> usize {
    row.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
        .0
}

/// Argmax of each row of `[B, classes]` logits.
pub fn predictions(logits: &Tensor) -> Vec<usize> {
    let c = logits.shape()[1];
    logits.data().chunks(c).map(argmax_row).collect()
}

impl Trainer {
    pub fn new(model: Model, config: TrainConfig) -> Result<Trainer> {
        config.validate()?;
        let estimator = CmiEstimator::for_width(model.config.d_model, config.adam, config.seed);
        let state = AdamState::new(&model.params);
        Ok(Trainer {
            model,
            estimator,
            config,
            state,
        })
    }

    /// Forward, `k` estimator updates on detached features, then one Adam
    /// step of the model on the weighted total loss.
    pub fn step(&mut self, batch: &Batch) -> Result<StepLosses> {
        let tape = Tape::new();
        let p = self.model.bind(&tape)?;
        let out = forward(&self.model.config, &p, batch)?;
        let l_r = recon_loss(out.recon, out.target, &batch.a)?;
        let l_c = class_loss(out.logits, &batch.y)?;
        self.estimator
            .train(&out.f_c.value(), &out.f_i.value(), &batch.y, self.config.estimator_steps)?;
        let l_i = self.estimator.estimate(out.f_c, out.f_i, &batch.y)?;
        let total = total_loss(l_r, l_c, l_i, &self.config.weights)?;
        tape.backward(total)?;
        let grads: Vec<Option<Tensor>> = p.vars().iter().map(|v| v.grad()).collect();
        adam_step(&mut self.model.params, &grads, &mut self.state, &self.config.adam)?;
        let correct = predictions(&out.logits.value())
            .iter()
            .zip(&batch.y)
            .filter(|(p, y)| p == y)
            .count();
        Ok(StepLosses {
            l_r: l_r.value().item(),
            l_c: l_c.value().item(),
            l_i: l_i.value().item(),
            l_total: total.value().item(),
            correct,
        })
    }

    /// Training order for `epoch`, a pure function of `(seed, epoch)`.
    pub fn epoch_order(seed_value: u64, epoch: usize, n: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut seed::rng(seed_value, seed::SHUFFLE, epoch as u64));
        order
    }

    pub fn run_epoch(&mut self, epoch: usize, train: &[FeatureSet], val: &[FeatureSet]) -> Result<EpochRecord> {
        let order = Trainer::epoch_order(self.config.seed, epoch, train.len());
        let (mut sums, mut correct) = ([0.0; 4], 0);
        for chunk in order.chunks(self.config.batch_size) {
            let batch = Batch::from_sets(chunk.iter().map(|&i| &train[i]))?;
            let s = self.step(&batch)?;
            let w = chunk.len() as f64;
            for (acc, v) in sums.iter_mut().zip([s.l_r, s.l_c, s.l_i, s.l_total]) {
                *acc += w * v;
            }
            correct += s.correct;
        }
        let n = train.len() as f64;
        Ok(EpochRecord {
            epoch: epoch + 1,
            l_r: sums[0] / n,
            l_c: sums[1] / n,
            l_i: sums[2] / n,
            l_total: sums[3] / n,
            train_acc: correct as f64 / n,
            val_acc: if val.is_empty() { f64::NAN } else { evaluate(&self.model, val)? },
        })
    }
}

/// Accuracy of `model` on feature sets.
pub fn evaluate(model: &Model, sets: &[FeatureSet]) -> Result<f64> {
    let logits = model.predict_logits(&Batch::from_sets(sets)?)?;
    let labels: Vec<usize> = sets.iter().map(|s| s.y).collect();
    crate::evalharness::accuracy(&predictions(&logits), &labels)
}

/// Where [`train`] writes `history.csv` and `params.bin`.
#[derive(Debug, Clone, Default)]
pub struct TrainOutput {
    pub dir: Option<PathBuf>,
}

pub const HISTORY_FILE: &str = "history.csv";
pub const PARAMS_FILE: &str = "params.bin";
pub const MODEL_META_FILE: &str = "meta.json";

/// Trains `model` in place. With an output directory, the checkpoint is
/// refreshed after every epoch and the history is written even when an
/// epoch fails, so the last good checkpoint survives an abort.
pub fn train(
    model: &mut Model,
    train_sets: &[FeatureSet],
    val_sets: &[FeatureSet],
    cfg: &TrainConfig,
    out: &TrainOutput,
) -> Result<TrainHistory> {
    if train_sets.is_empty() {
        return Err(Error::Usage("training set is empty".into()));
    }
    let mut trainer = Trainer::new(model.clone(), cfg.clone())?;
    let mut history = TrainHistory::default();
    if let Some(dir) = &out.dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut failure = None;
    for epoch in 0..cfg.epochs {
        match trainer.run_epoch(epoch, train_sets, val_sets) {
            Ok(rec) => {
                log::debug!(
                    "epoch {} L_total {:.4} train_acc {:.3} val_acc {:.3}",
                    rec.epoch,
                    rec.l_total,
                    rec.train_acc,
                    rec.val_acc
                );
                history.records.push(rec);
                if let Some(dir) = &out.dir {
                    let path = dir.join(PARAMS_FILE);
                    trainer.model.params.save(&path)?;
                    history.checkpoint = Some(path);
                }
            }
            Err(e) => {
                log::error!("epoch {} failed: {e}", epoch + 1);
                failure = Some(e);
                break;
            }
        }
    }
    if let Some(dir) = &out.dir {
        history.write_csv(&dir.join(HISTORY_FILE))?;
    }
    if let Some(e) = failure {
        return Err(e);
    }
    *model = trainer.model;
    Ok(history)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ModelMeta {
    model: ModelConfig,
    scaler: FeatureScaler,
}

/// Writes `params.bin` and `meta.json` (architecture and feature scaling).
pub fn save_model(dir: &Path, model: &Model, scaler: &FeatureScaler) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    model.params.save(&dir.join(PARAMS_FILE))?;
    let meta = ModelMeta {
        model: model.config.clone(),
        scaler: scaler.clone(),
    };
    let path = dir.join(MODEL_META_FILE);
    fs::write(&path, serde_json::to_string_pretty(&meta)?).map_err(|e| Error::io(&path, e))
}

/// Loads a model saved by [`save_model`], checking every tensor against the
/// recorded architecture.
pub fn load_model(dir: &Path) -> Result<(Model, FeatureScaler)> {
    let path = dir.join(MODEL_META_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let meta: ModelMeta = serde_json::from_str(&text)?;
    meta.model.validate()?;
    let params = load_checkpoint(&dir.join(PARAMS_FILE), &meta.model)?;
    Ok((
        Model {
            config: meta.model,
            params,
        },
        meta.scaler,
    ))
}

pub fn save_checkpoint(params: &ParamStore, path: &Path) -> Result<()> {
    params.save(path)
}

/// Loads a checkpoint and validates it against `config`'s layout.
pub fn load_checkpoint(path: &Path, config: &ModelConfig) -> Result<ParamStore> {
    let params = ParamStore::load(path)?;
    params.check_layout(&Model::layout(config))?;
    Ok(params)
}
