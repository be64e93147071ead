//! Denoiser training loop with resumable checkpoints.

use std::path::Path;

use log::info;
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::citygrid::{Dataset, WalkingGraph};
use crate::denoiser::Denoiser;
use crate::error::{Error, Result};
use crate::fairdemand::{region_condition, FairDemandParams};
use crate::nn::Adam;
use crate::sde::{make_condition_graph, perturb, sample_time, NoisySample};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub clip_norm: Option<f64>,
    /// Per-epoch multiplicative learning-rate factor; 1 keeps it constant.
    pub lr_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch: 8,
            lr: 3e-4,
            weight_decay: 1e-2,
            clip_norm: Some(1.0),
            lr_decay: 1.0,
            seed: 0,
        }
    }
}

/// Everything besides the weights needed to continue or reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    /// Completed epochs.
    pub epoch: usize,
    pub loss_curve: Vec<f64>,
    pub config: TrainConfig,
    pub optimizer: Adam,
    /// Frozen conditioning module the model was trained against.
    pub fairdemand: Option<FairDemandParams>,
}

/// A clean graph with its conditioning, ready for perturbation.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainItem {
    pub region_id: usize,
    pub graph: WalkingGraph,
    /// `N_max × cond_dim`.
    pub condition: Array2<f64>,
    /// `n × n`.
    pub condition_graph: Array2<f64>,
}

pub fn training_items(ds: &Dataset, fairdemand: &FairDemandParams) -> Result<Vec<TrainItem>> {
    let residence = ds.categories.residence();
    ds.regions
        .iter()
        .map(|r| {
            Ok(TrainItem {
                region_id: r.record.region_id,
                graph: r.graph.clone(),
                condition: region_condition(r, ds.n_max, fairdemand)?.values,
                condition_graph: make_condition_graph(&r.graph, residence),
            })
        })
        .collect()
}

fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64 + 1);
    rng
}

/// Fresh optimizer state for a new run.
pub fn start(model: &Denoiser, config: TrainConfig, fairdemand: Option<FairDemandParams>) -> TrainingMeta {
    let mut optimizer = Adam::new(model.params(), config.lr, config.weight_decay);
    optimizer.clip_norm = config.clip_norm;
    TrainingMeta {
        epoch: 0,
        loss_curve: Vec::new(),
        config,
        optimizer,
        fairdemand,
    }
}

/// Trains until `meta.epoch == until` (at most `meta.config.epochs`). Each
/// epoch draws from its own random stream, so stopping and resuming from a
/// checkpoint reproduces an uninterrupted run exactly. When `checkpoint` is
/// set the model is saved after every epoch.
pub fn train(
    model: &mut Denoiser,
    meta: &mut TrainingMeta,
    items: &[TrainItem],
    until: usize,
    checkpoint: Option<&Path>,
) -> Result<()> {
    if items.is_empty() {
        return Err(Error::Degenerate("no training graphs".into()));
    }
    if meta.config.batch == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    if !(meta.config.lr >= 0.0 && meta.config.lr_decay > 0.0 && meta.config.lr_decay <= 1.0) {
        return Err(Error::Config(format!(
            "need lr >= 0 and lr_decay in (0, 1], got {} and {}",
            meta.config.lr, meta.config.lr_decay
        )));
    }
    let until = until.min(meta.config.epochs);
    let k_cat = model.k_cat;
    let mut order: Vec<usize> = (0..items.len()).collect();
    while meta.epoch < until {
        let epoch = meta.epoch;
        let mut rng = epoch_rng(meta.config.seed, epoch);
        meta.optimizer.lr = meta.config.lr * meta.config.lr_decay.powi(epoch as i32);
        order.sort_unstable();
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(meta.config.batch) {
            let samples: Vec<NoisySample> = chunk
                .iter()
                .map(|&i| perturb(&items[i].graph, k_cat, sample_time(&mut rng), &model.schedule, &mut rng))
                .collect::<Result<_>>()?;
            let batch: Vec<_> = samples
                .into_iter()
                .zip(chunk)
                .map(|(s, &i)| (s, &items[i].condition, &items[i].condition_graph))
                .collect();
            let dropout = (model.config.dropout > 0.0).then_some(&mut rng as &mut dyn rand::RngCore);
            let (loss, grads) = model.loss_and_grads(&batch, dropout)?;
            if !loss.is_finite() {
                return Err(Error::Training {
                    epoch,
                    message: format!("loss became {loss}"),
                });
            }
            meta.optimizer.update(model.params_mut(), &grads);
            total += loss;
            batches += 1;
        }
        if !model.params().all_finite() {
            return Err(Error::Training {
                epoch,
                message: "parameters became non-finite".into(),
            });
        }
        let mean = total / batches as f64;
        meta.loss_curve.push(mean);
        meta.epoch += 1;
        info!("epoch {} loss {mean:.4}", meta.epoch);
        if let Some(path) = checkpoint {
            model.save(path, meta)?;
        }
    }
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(Denoiser, TrainingMeta)> {
    Denoiser::load(path)
}
