//! Supervised training loop and evaluation.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::adamw::{AdamW, AdamWConfig};
use super::metrics::{MetricCounts, Metrics};
use super::policy::{
    loss, Batch, Dropout, LossWeights, Policy, PolicyConfig, PolicyNet,
};
use crate::datagen::{FeatureSchema, GraphSample, GraphState, Normalization};
use crate::error::{Error, Result};
use crate::seeding::{derive_seed, rng_for};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub batch_size: usize,
    pub aux_weight: f64,
    pub move_emphasis: f64,
    pub seed: u64,
    pub hidden: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            lr: 1e-3,
            weight_decay: 1e-4,
            dropout: 0.1,
            batch_size: 128,
            aux_weight: 0.15,
            move_emphasis: 1.25,
            seed: 0,
            hidden: 128,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && self.weight_decay >= 0.0
            && (0.0..1.0).contains(&self.dropout)
            && self.batch_size > 0
            && self.aux_weight >= 0.0
            && self.move_emphasis > 0.0
            && self.hidden > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::Dataset(format!("invalid training config {self:?}")))
        }
    }

    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            aux_weight: self.aux_weight,
            move_emphasis: self.move_emphasis,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val: Metrics,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters of the epoch with the best validation exact accuracy.
    pub policy: Policy,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
}

const EVAL_BATCH: usize = 256;

/// Inference-mode metrics of `policy` on `samples`.
pub fn evaluate(policy: &Policy, samples: &[GraphSample], weights: &LossWeights) -> Result<Metrics> {
    let mut counts = MetricCounts::default();
    let mut loss_sum = 0.0;
    for chunk in samples.chunks(EVAL_BATCH) {
        let states: Vec<&GraphState> = chunk.iter().map(|s| &s.state).collect();
        let batch = policy.batch(&states)?;
        let labels: Vec<usize> = chunk.iter().flat_map(|s| s.label.iter().copied()).collect();
        let fwd = policy.net.forward(&batch, None);
        let scores = fwd.scores();
        let out = loss(&batch, &scores, &fwd.move_logits(), &labels, weights)?;
        loss_sum += out.loss * batch.num_robots() as f64;
        accumulate(&batch, &scores, &labels, &mut counts);
    }
    Ok(counts.finish(if counts.robots == 0 {
        0.0
    } else {
        loss_sum / counts.robots as f64
    }))
}

fn accumulate(batch: &Batch, scores: &[f64], labels: &[usize], counts: &mut MetricCounts) {
    for r in 0..batch.num_robots() {
        let cands: Vec<(usize, f64)> = batch
            .candidates(r)
            .map(|k| (batch.cand_team[k], scores[k]))
            .collect();
        counts.add(&cands, labels[r], batch.robot_cur_local[r]);
    }
}

/// Trains a fresh network on `train`, selecting the epoch with the best
/// validation exact accuracy (earliest on ties).
pub fn train(
    train: &[GraphSample],
    val: &[GraphSample],
    normalization: &Normalization,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    let schema = FeatureSchema::current();
    let net = PolicyNet::new(
        PolicyConfig::for_schema(&schema, config.hidden),
        derive_seed(config.seed, &[1]),
    );
    let mut policy = Policy::new(net, normalization.clone(), schema)?;
    let weights = config.loss_weights();
    let mut opt = AdamW::new(
        AdamWConfig {
            lr: config.lr,
            weight_decay: config.weight_decay,
            ..AdamWConfig::default()
        },
        &policy.net.params,
    );

    let mut best = policy.clone();
    let mut best_epoch = 0;
    let mut best_acc = f64::NEG_INFINITY;
    let mut history = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 1..=config.epochs {
        order.sort_unstable();
        order.shuffle(&mut rng_for(config.seed, &[2, epoch as u64]));
        let (mut loss_sum, mut robots) = (0.0, 0usize);
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let states: Vec<&GraphState> = chunk.iter().map(|&i| &train[i].state).collect();
            let labels: Vec<usize> = chunk
                .iter()
                .flat_map(|&i| train[i].label.iter().copied())
                .collect();
            let batch = policy.batch(&states)?;
            let dropout = Dropout {
                rate: config.dropout,
                rng: rng_for(config.seed, &[3, epoch as u64, b as u64]),
            };
            let fwd = policy.net.forward(&batch, Some(dropout));
            let out = loss(&batch, &fwd.scores(), &fwd.move_logits(), &labels, &weights)?;
            if !out.loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    loss: out.loss,
                    epoch,
                    batch: b,
                    first_sample: chunk[0],
                });
            }
            let grads = fwd.backward(&out.d_scores, &out.d_aux, policy.net.params.len());
            opt.step(&mut policy.net.params, &grads);
            loss_sum += out.loss * batch.num_robots() as f64;
            robots += batch.num_robots();
        }
        let val_metrics = evaluate(&policy, val, &weights)?;
        let train_loss = if robots == 0 { 0.0 } else { loss_sum / robots as f64 };
        log::info!(
            "epoch {epoch}: train loss {train_loss:.4}, val loss {:.4}, exact {:.4}, move/stay {:.4}, top-3 {:.4}",
            val_metrics.loss,
            val_metrics.exact_acc,
            val_metrics.move_stay_acc,
            val_metrics.top3_acc
        );
        history.push(EpochRecord {
            epoch,
            train_loss,
            val: val_metrics,
        });
        if val.is_empty() || val_metrics.exact_acc > best_acc {
            best_acc = val_metrics.exact_acc;
            best = policy.clone();
            best_epoch = epoch;
        }
    }
    Ok(TrainOutcome {
        policy: best,
        best_epoch,
        history,
    })
}

/// Writes `epoch, train_loss, val_loss, exact_acc, ms_acc, top3, move_target`.
pub fn write_history_csv(history: &[EpochRecord], path: &Path) -> Result<()> {
    let mut out = String::from("epoch,train_loss,val_loss,exact_acc,ms_acc,top3,move_target\n");
    for h in history {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            h.epoch,
            h.train_loss,
            h.val.loss,
            h.val.exact_acc,
            h.val.move_stay_acc,
            h.val.top3_acc,
            h.val.move_target_acc
        ));
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}
