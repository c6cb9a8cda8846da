//! Mini-batch SGD training of the Siamese descriptor network.
//!
//! Each batch holds equal positive and negative counts. Per-pair gradients
//! are computed in parallel but reduced in a fixed pair order, so training
//! is deterministic regardless of thread count.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array4;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{grid_to_tensor, pair_backward_tensors, Gradients, NetWeights};
use crate::error::io_err;
use crate::sampler::PairLabel;
use crate::seed::stream_rng;
use crate::tdf::VoxelGrid;
use crate::{Error, Result};

/// One training sample, pre-converted to input tensors.
#[derive(Debug, Clone)]
pub struct PairSample {
    pub a: Array4<f32>,
    pub b: Array4<f32>,
    pub label: PairLabel,
}

impl PairSample {
    pub fn from_grids(a: &VoxelGrid, b: &VoxelGrid, label: PairLabel) -> Self {
        Self {
            a: grid_to_tensor(a),
            b: grid_to_tensor(b),
            label,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Contrastive-loss margin in descriptor-distance units.
    pub margin: f64,
    pub learning_rate: f64,
    /// Must be even; each batch takes half positives, half negatives.
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            margin: 1.0,
            learning_rate: 0.01,
            batch_size: 32,
            epochs: 12,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return Err(Error::Config("margin must be positive".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning rate must be >= 0".into()));
        }
        if self.batch_size == 0 || self.batch_size % 2 != 0 {
            return Err(Error::Config(format!(
                "batch size {} must be even and positive",
                self.batch_size
            )));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub pos_mean_dist: f64,
    pub neg_mean_dist: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
}

impl TrainHistory {
    pub fn final_loss(&self) -> f64 {
        self.epochs.last().map_or(f64::NAN, |e| e.mean_loss)
    }

    pub fn initial_loss(&self) -> f64 {
        self.epochs.first().map_or(f64::NAN, |e| e.mean_loss)
    }

    /// CSV: epoch, mean_loss, pos_mean_dist, neg_mean_dist.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("epoch,mean_loss,pos_mean_dist,neg_mean_dist\n");
        for e in &self.epochs {
            writeln!(
                out,
                "{},{},{},{}",
                e.epoch, e.mean_loss, e.pos_mean_dist, e.neg_mean_dist
            )
            .expect("string write");
        }
        fs::write(path, out).map_err(|e| io_err(path, e))
    }
}

/// Train on a balanced dataset; returns updated weights and the per-epoch
/// loss history. Deterministic for a fixed seed.
pub fn train(
    weights: NetWeights,
    samples: &[PairSample],
    cfg: &TrainConfig,
) -> Result<(NetWeights, TrainHistory)> {
    cfg.validate()?;
    let pos_ids: Vec<usize> = (0..samples.len())
        .filter(|&i| samples[i].label.is_positive())
        .collect();
    let neg_ids: Vec<usize> = (0..samples.len())
        .filter(|&i| !samples[i].label.is_positive())
        .collect();
    if pos_ids.is_empty() || pos_ids.len() != neg_ids.len() {
        return Err(Error::InvalidInput(format!(
            "dataset must be balanced and non-empty: {} positive vs {} negative",
            pos_ids.len(),
            neg_ids.len()
        )));
    }

    let mut weights = weights;
    let mut history = TrainHistory::default();
    let half = cfg.batch_size / 2;

    for epoch in 0..cfg.epochs {
        let mut rng = stream_rng(cfg.seed, epoch as u64);
        let mut pos = pos_ids.clone();
        let mut neg = neg_ids.clone();
        pos.shuffle(&mut rng);
        neg.shuffle(&mut rng);

        let mut loss_sum = 0.0;
        let mut pos_dist_sum = 0.0;
        let mut neg_dist_sum = 0.0;

        for (pos_chunk, neg_chunk) in pos.chunks(half).zip(neg.chunks(half)) {
            let batch: Vec<usize> = pos_chunk.iter().chain(neg_chunk).copied().collect();
            let results: Vec<(f64, f64, Gradients, PairLabel)> = batch
                .par_iter()
                .map(|&i| {
                    let s = &samples[i];
                    let (loss, dist, grads) =
                        pair_backward_tensors(&weights, &s.a, &s.b, s.label, cfg.margin)
                            .expect("validated shapes");
                    (loss, dist, grads, s.label)
                })
                .collect();

            let mut total = Gradients::zeros_like(&weights);
            for (loss, dist, grads, label) in &results {
                loss_sum += loss;
                if label.is_positive() {
                    pos_dist_sum += dist;
                } else {
                    neg_dist_sum += dist;
                }
                total.add_assign(grads);
            }
            let step = (cfg.learning_rate / batch.len() as f64) as f32;
            if step != 0.0 {
                for (conv, (gk, gb)) in weights.convs.iter_mut().zip(&total.convs) {
                    conv.kernel.zip_mut_with(gk, |w, g| *w -= step * g);
                    conv.bias.zip_mut_with(gb, |w, g| *w -= step * g);
                }
            }
        }

        let n = (pos.len() + neg.len()) as f64;
        history.epochs.push(EpochStats {
            epoch,
            mean_loss: loss_sum / n,
            pos_mean_dist: pos_dist_sum / pos.len() as f64,
            neg_mean_dist: neg_dist_sum / neg.len() as f64,
        });
    }
    Ok((weights, history))
}
