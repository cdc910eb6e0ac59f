//! Mini-batch Adam training with early stopping on validation loss.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datakit::{
    encode_conditions, one_hot, Dataset, NormalizationBounds, Split, SubjectRecord,
};
use crate::error::{invalid, Error, Result};
use crate::model::{Adam, AdamConfig, LossBreakdown, ModelCheckpoint, ModelConfig, Network};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Number of consecutive non-improving epochs tolerated before stopping.
    pub patience: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Architecture; `beta`, grid dims and T live here.
    pub model: ModelConfig,
    pub bounds: NormalizationBounds,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            patience: 20,
            lr: 5e-4,
            batch_size: 8,
            seed: 0,
            model: ModelConfig::default(),
            bounds: NormalizationBounds::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(invalid!("epochs and batch size must be positive"));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(invalid!("learning rate must be positive, got {}", self.lr));
        }
        self.bounds.validate()?;
        self.model.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train: LossBreakdown,
    pub val: LossBreakdown,
    pub wall_time_s: f64,
    pub improved: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl TrainHistory {
    pub fn best(&self) -> &EpochRecord {
        &self.epochs[self.best_epoch]
    }
}

/// One JSON object per epoch.
pub fn write_history_jsonl(history: &TrainHistory, path: &Path) -> Result<()> {
    let mut out = Vec::new();
    for e in &history.epochs {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n").expect("write to Vec");
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

struct Sample<'a> {
    record: &'a SubjectRecord,
    cvec: Vec<f64>,
}

impl Sample<'_> {
    fn frames(&self) -> Vec<Vec<f64>> {
        self.record.sequence.frames().iter().map(one_hot).collect()
    }
}

fn prepare<'a>(
    dataset: &'a Dataset,
    split: Split,
    config: &TrainConfig,
) -> Result<Vec<Sample<'a>>> {
    dataset
        .split(split)
        .map(|r| {
            let seq = &r.sequence;
            if seq.dims() != config.model.grid_dims || seq.t_frames() != config.model.t_frames {
                return Err(Error::ShapeMismatch(format!(
                    "subject {} has grid {:?} x {} frames, model expects {:?} x {}",
                    r.subject_id,
                    seq.dims(),
                    seq.t_frames(),
                    config.model.grid_dims,
                    config.model.t_frames
                )));
            }
            Ok(Sample {
                record: r,
                cvec: encode_conditions(&r.profile, &config.bounds)?.0.to_vec(),
            })
        })
        .collect()
}

/// Validation loss with `z0` at the posterior mean.
fn evaluate(net: &Network, samples: &[Sample]) -> Result<LossBreakdown> {
    let eps = vec![0.0; net.config.latent_dim_z0];
    let losses = samples
        .par_iter()
        .map(|s| net.forward_backward(&s.frames(), &s.cvec, &eps, None))
        .collect::<Result<Vec<_>>>()?;
    LossBreakdown::mean(&losses).ok_or_else(|| invalid!("empty evaluation set"))
}

/// Trains from a seeded initialization and returns the checkpoint of the
/// best validation epoch. Data order, reparameterization noise and
/// initialization all derive from `config.seed`.
pub fn train(dataset: &Dataset, config: &TrainConfig) -> Result<(ModelCheckpoint, TrainHistory)> {
    train_with(dataset, config, &mut |_, _| true)
}

/// Like [`train`], calling `on_epoch` with each finished epoch and the
/// current weights. Returning `false` stops training after that epoch.
pub fn train_with(
    dataset: &Dataset,
    config: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochRecord, &Network) -> bool,
) -> Result<(ModelCheckpoint, TrainHistory)> {
    config.validate()?;
    let train_set = prepare(dataset, Split::Train, config)?;
    let val_set = prepare(dataset, Split::Val, config)?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(invalid!(
            "training needs non-empty train and val splits (got {} and {})",
            train_set.len(),
            val_set.len()
        ));
    }
    let first = &train_set[0].record.sequence;
    let (spacing, frame_period_s) = (first.spacing(), first.frame_period_s());

    let mut net = Network::new(config.model.clone(), config.seed)?;
    let mut opt = Adam::new(
        &net,
        AdamConfig {
            lr: config.lr,
            ..AdamConfig::default()
        },
    );
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x5EED));
    let nz = config.model.latent_dim_z0;
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = TrainHistory {
        epochs: Vec::new(),
        best_epoch: 0,
        stopped_early: false,
    };
    let mut best_net = net.clone();
    let mut best_val = f64::INFINITY;
    let mut since_best = 0usize;
    let start = Instant::now();

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_losses = Vec::with_capacity(train_set.len());
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            let eps: Vec<Vec<f64>> = batch
                .iter()
                .map(|_| (0..nz).map(|_| StandardNormal.sample(&mut rng)).collect())
                .collect();
            let scale = 1.0 / batch.len() as f64;
            let results = batch
                .par_iter()
                .zip(&eps)
                .map(|(&i, e)| {
                    let s = &train_set[i];
                    let mut g = net.zeros_like();
                    let loss =
                        net.forward_backward(&s.frames(), &s.cvec, e, Some((&mut g, scale)))?;
                    Ok((loss, g))
                })
                .collect::<Result<Vec<_>>>()
                .map_err(|e| invalid!("epoch {epoch}, batch {b}: {e}"))?;
            let mut grad = net.zeros_like();
            for (loss, g) in results {
                grad.axpy(1.0, &g);
                epoch_losses.push(loss);
            }
            if grad
                .params()
                .iter()
                .any(|(_, t)| t.data.iter().any(|v| !v.is_finite()))
            {
                return Err(Error::NonFinite(format!(
                    "gradient at epoch {epoch}, batch {b}"
                )));
            }
            opt.step(&mut net, &grad);
        }
        let train_loss = LossBreakdown::mean(&epoch_losses).expect("non-empty train set");
        let val_loss = evaluate(&net, &val_set)
            .map_err(|e| invalid!("validation after epoch {epoch}: {e}"))?;
        let improved = val_loss.total < best_val;
        if improved {
            best_val = val_loss.total;
            best_net = net.clone();
            history.best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
        }
        log::info!(
            "epoch {epoch}: train {:.5} (kl {:.2}) val {:.5}{}",
            train_loss.total,
            train_loss.kl,
            val_loss.total,
            if improved { " *" } else { "" }
        );
        history.epochs.push(EpochRecord {
            epoch,
            train: train_loss,
            val: val_loss,
            wall_time_s: start.elapsed().as_secs_f64(),
            improved,
        });
        if !on_epoch(history.epochs.last().expect("just pushed"), &net) {
            break;
        }
        if since_best > config.patience {
            history.stopped_early = true;
            break;
        }
    }
    let ckpt = ModelCheckpoint {
        network: best_net,
        bounds: config.bounds,
        spacing,
        frame_period_s,
    };
    Ok((ckpt, history))
}
