//! Attention-based fair-demand module.
//!
//! A region's query is built from its urban attributes and demand classes;
//! keys and values come from the per-node grid features. The attended row is
//! broadcast over the region's nodes and multiplied elementwise with the
//! projected grid features to give the conditioning embedding consumed by the
//! denoiser. The module is pretrained on its own with a max-min entropy
//! objective over predicted facility-category distributions, then frozen.

use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::citygrid::{Dataset, Region, RegionRecord};
use crate::error::{Error, Result};
use crate::nn::{init_uniform, Adam, ParamSet};
use crate::tape::{Tape, Var};

/// Parameter indices inside [`FairDemandParams::params`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
struct Slots {
    query: usize,
    key: usize,
    value: usize,
    head: usize,
    output: usize,
    feature: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairDemandParams {
    pub attr_dim: usize,
    pub k_cat: usize,
    pub feature_dim: usize,
    pub hidden: usize,
    params: ParamSet,
    slots: Slots,
}

/// Per-region conditioning matrix, `N_max × hidden`, zero on masked rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionEmbedding {
    pub region_id: usize,
    pub values: Array2<f64>,
}

impl FairDemandParams {
    pub fn init(attr_dim: usize, k_cat: usize, feature_dim: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::default();
        let q_in = attr_dim + k_cat;
        let slots = Slots {
            query: params.push("W_q", init_uniform(&mut rng, q_in, hidden, q_in)),
            key: params.push("W_k", init_uniform(&mut rng, feature_dim, hidden, feature_dim)),
            value: params.push("W_v", init_uniform(&mut rng, feature_dim, hidden, feature_dim)),
            head: params.push("W_H", init_uniform(&mut rng, hidden, hidden, hidden)),
            output: params.push("W_O", init_uniform(&mut rng, hidden, k_cat, hidden / 4)),
            feature: params.push("W_F", init_uniform(&mut rng, feature_dim, hidden, feature_dim)),
        };
        Self {
            attr_dim,
            k_cat,
            feature_dim,
            hidden,
            params,
            slots,
        }
    }

    pub fn for_dataset(ds: &Dataset, hidden: usize, seed: u64) -> Self {
        let attr_dim = ds.regions.first().map_or(4, |r| r.record.urban_attributes.len());
        Self::init(attr_dim, ds.k_cat(), ds.feature_dim, hidden, seed)
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn check(&self, record: &RegionRecord) -> Result<()> {
        if record.urban_attributes.len() != self.attr_dim || record.demand.len() != self.k_cat {
            return Err(Error::Shape(format!(
                "region {}: query input {}+{} does not match W_q rows {}+{}",
                record.region_id,
                record.urban_attributes.len(),
                record.demand.len(),
                self.attr_dim,
                self.k_cat
            )));
        }
        if let Some(row) = record.grid_features.iter().find(|r| r.len() != self.feature_dim) {
            return Err(Error::Shape(format!(
                "region {}: feature width {} but W_k expects {}",
                record.region_id,
                row.len(),
                self.feature_dim
            )));
        }
        if record.grid_features.is_empty() {
            return Err(Error::Shape(format!("region {} has no nodes", record.region_id)));
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let ck = FairDemandCheckpoint {
            format: FAIRDEMAND_FORMAT.into(),
            version: FAIRDEMAND_VERSION,
            shapes: self
                .params
                .names()
                .iter()
                .enumerate()
                .map(|(i, n)| (n.clone(), self.params.value(i).dim()))
                .collect(),
            params: self.clone(),
        };
        let text = serde_json::to_string(&ck).map_err(|e| Error::Format(e.to_string()))?;
        write_atomic(path.as_ref(), text.as_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let v: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| Error::Format(format!("fair-demand checkpoint: {e}")))?;
        if v.get("format").and_then(|f| f.as_str()) != Some(FAIRDEMAND_FORMAT) {
            return Err(Error::Format("not a fair-demand checkpoint".into()));
        }
        let version = v.get("version").and_then(|f| f.as_u64());
        if version != Some(FAIRDEMAND_VERSION as u64) {
            return Err(Error::Format(format!(
                "fair-demand checkpoint version {version:?}, expected {FAIRDEMAND_VERSION}"
            )));
        }
        let ck: FairDemandCheckpoint =
            serde_json::from_value(v).map_err(|e| Error::Format(format!("fair-demand checkpoint: {e}")))?;
        for (i, (name, shape)) in ck.shapes.iter().enumerate() {
            if ck.params.params.name(i) != name || ck.params.params.value(i).dim() != *shape {
                return Err(Error::Format(format!("parameter {name} does not match its shape header")));
            }
        }
        Ok(ck.params)
    }
}

pub const FAIRDEMAND_FORMAT: &str = "fairlayout-fairdemand";
pub const FAIRDEMAND_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct FairDemandCheckpoint {
    format: String,
    version: u32,
    shapes: Vec<(String, (usize, usize))>,
    params: FairDemandParams,
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Query input: `ln(1 + a)` for each urban attribute, then demand class / 3.
fn query_input(record: &RegionRecord) -> Array2<f64> {
    let row: Vec<f64> = record
        .urban_attributes
        .iter()
        .map(|a| a.max(0.0).ln_1p())
        .chain(record.demand.iter().map(|&d| d as f64 / 3.0))
        .collect();
    Array2::from_shape_vec((1, row.len()), row).expect("row")
}

fn feature_input(record: &RegionRecord) -> Array2<f64> {
    let n = record.grid_features.len();
    let d = record.grid_features.first().map_or(0, Vec::len);
    Array2::from_shape_fn((n, d), |(i, j)| record.grid_features[i][j])
}

struct AttentionOut {
    /// `1 × n` attention weights.
    alpha: Var,
    /// `1 × hidden` attended row.
    row: Var,
}

fn attention(tape: &mut Tape, p: &FairDemandParams, record: &RegionRecord) -> AttentionOut {
    let q_in = tape.constant(query_input(record));
    let f = tape.constant(feature_input(record));
    let wq = tape.param(&p.params, p.slots.query);
    let wk = tape.param(&p.params, p.slots.key);
    let wv = tape.param(&p.params, p.slots.value);
    let wh = tape.param(&p.params, p.slots.head);
    let q = tape.matmul(q_in, wq);
    let k = tape.matmul(f, wk);
    let v = tape.matmul(f, wv);
    let kt = tape.transpose(k);
    let scores = tape.matmul(q, kt);
    let scores = tape.scale(scores, 1.0 / (p.hidden as f64).sqrt());
    let alpha = tape.softmax_rows(scores, None);
    let av = tape.matmul(alpha, v);
    let row = tape.matmul(av, wh);
    AttentionOut { alpha, row }
}

fn category_logits(tape: &mut Tape, p: &FairDemandParams, record: &RegionRecord) -> Var {
    let out = attention(tape, p, record);
    let wo = tape.param(&p.params, p.slots.output);
    tape.matmul(out.row, wo)
}

/// Result of [`demand_attention`].
#[derive(Debug, Clone, PartialEq)]
pub struct DemandAttention {
    /// Attention weights over the region's active nodes.
    pub alpha: Vec<f64>,
    /// `N_max × hidden`; the attended row on every active node, zero elsewhere.
    pub h: Array2<f64>,
}

/// Attention of the region's demand query over its node features.
pub fn demand_attention(record: &RegionRecord, n_max: usize, params: &FairDemandParams) -> Result<DemandAttention> {
    params.check(record)?;
    let n = record.grid_features.len();
    if n > n_max {
        return Err(Error::Capacity { nodes: n, n_max });
    }
    let mut tape = Tape::new();
    let out = attention(&mut tape, params, record);
    let row = tape.value(out.row);
    let mut h = Array2::zeros((n_max, params.hidden));
    for i in 0..n {
        h.row_mut(i).assign(&row.row(0));
    }
    Ok(DemandAttention {
        alpha: tape.value(out.alpha).row(0).to_vec(),
        h,
    })
}

/// Grid features mapped to the hidden width, padded to `N_max` rows.
pub fn project_features(record: &RegionRecord, n_max: usize, params: &FairDemandParams) -> Result<Array2<f64>> {
    params.check(record)?;
    let f = record.feature_matrix(n_max, params.feature_dim);
    Ok(f.dot(params.params.value(params.slots.feature)))
}

/// Hadamard product of the attended rows and the projected features. Rows
/// past `active` are zeroed.
pub fn condition_embedding(
    region_id: usize,
    h: &Array2<f64>,
    f_proj: &Array2<f64>,
    active: usize,
) -> Result<ConditionEmbedding> {
    if h.dim() != f_proj.dim() {
        return Err(Error::Shape(format!("H is {:?} but F_proj is {:?}", h.dim(), f_proj.dim())));
    }
    let mut values = h * f_proj;
    for i in active..values.nrows() {
        values.row_mut(i).fill(0.0);
    }
    Ok(ConditionEmbedding { region_id, values })
}

/// Full conditioning path for one region.
pub fn region_condition(region: &Region, n_max: usize, params: &FairDemandParams) -> Result<ConditionEmbedding> {
    let att = demand_attention(&region.record, n_max, params)?;
    let fp = project_features(&region.record, n_max, params)?;
    condition_embedding(region.record.region_id, &att.h, &fp, region.graph.n())
}

pub fn dataset_conditions(ds: &Dataset, params: &FairDemandParams) -> Result<Vec<ConditionEmbedding>> {
    ds.regions.iter().map(|r| region_condition(r, ds.n_max, params)).collect()
}

/// Batch-mean category distribution after masking residence categories.
fn mean_distribution(logits: &Array2<f64>, allowed: &[bool]) -> Vec<f64> {
    let (n, k) = logits.dim();
    let mut mean = vec![0.0; k];
    for r in 0..n {
        let max = (0..k)
            .filter(|&c| allowed[c])
            .map(|c| logits[[r, c]])
            .fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = (0..k)
            .map(|c| if allowed[c] { (logits[[r, c]] - max).exp() } else { 0.0 })
            .collect();
        let sum: f64 = exps.iter().sum();
        for c in 0..k {
            mean[c] += exps[c] / sum / n as f64;
        }
    }
    mean
}

fn neg_x_log_x(x: f64) -> f64 {
    if x > 0.0 { -x * x.ln() } else { 0.0 }
}

/// Smallest per-category entropy term `−p̄ ln p̄` over non-residence
/// categories.
pub fn min_category_entropy(batch_logits: &Array2<f64>, residence_mask: &[bool]) -> Result<f64> {
    let allowed = allowed_from(batch_logits, residence_mask)?;
    let mean = mean_distribution(batch_logits, &allowed);
    Ok((0..mean.len())
        .filter(|&c| allowed[c])
        .map(|c| neg_x_log_x(mean[c]))
        .fold(f64::INFINITY, f64::min))
}

fn allowed_from(batch_logits: &Array2<f64>, residence_mask: &[bool]) -> Result<Vec<bool>> {
    if batch_logits.nrows() == 0 {
        return Err(Error::Degenerate("empty batch".into()));
    }
    if residence_mask.len() != batch_logits.ncols() {
        return Err(Error::Shape(format!(
            "{} mask entries for {} logits",
            residence_mask.len(),
            batch_logits.ncols()
        )));
    }
    if batch_logits.iter().any(|x| !x.is_finite()) {
        return Err(Error::Input("non-finite logits".into()));
    }
    let allowed: Vec<bool> = residence_mask.iter().map(|&r| !r).collect();
    if !allowed.iter().any(|&a| a) {
        return Err(Error::Degenerate("every category is masked".into()));
    }
    Ok(allowed)
}

/// Max-min entropy loss `1 / (min_j −p̄_j ln p̄_j + 1)` over a batch of
/// category logits. `residence_mask[j]` marks categories forced to zero
/// probability.
pub fn fairness_loss(batch_logits: &Array2<f64>, residence_mask: &[bool]) -> Result<f64> {
    Ok(1.0 / (min_category_entropy(batch_logits, residence_mask)? + 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            epochs: 60,
            batch: 6,
            lr: 1e-5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainLog {
    /// Mean batch loss per epoch.
    pub epoch_loss: Vec<f64>,
    /// Min per-category mean entropy over the whole training set, before
    /// training (index 0) and after each epoch.
    pub min_entropy: Vec<f64>,
    /// Dataset-level fairness loss matching `min_entropy`.
    pub dataset_loss: Vec<f64>,
}

/// Category logits of every region, one row each.
pub fn dataset_logits(ds: &Dataset, params: &FairDemandParams) -> Result<Array2<f64>> {
    let mut rows = Array2::zeros((ds.len(), params.k_cat));
    for (i, r) in ds.regions.iter().enumerate() {
        params.check(&r.record)?;
        let mut tape = Tape::new();
        let l = category_logits(&mut tape, params, &r.record);
        rows.row_mut(i).assign(&tape.value(l).row(0));
    }
    Ok(rows)
}

/// Pretrains the module with Adam on the max-min entropy loss. When
/// `checkpoint` is given, parameters are written there after every finite
/// epoch, so a divergence leaves the last good state on disk.
pub fn pretrain(
    ds: &Dataset,
    mut params: FairDemandParams,
    cfg: &PretrainConfig,
    checkpoint: Option<&Path>,
) -> Result<(FairDemandParams, PretrainLog)> {
    if ds.is_empty() {
        return Err(Error::Degenerate("pretraining needs at least one region".into()));
    }
    if cfg.batch == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    let residence = ds.categories.facility_mask().iter().map(|&f| !f).collect::<Vec<_>>();
    let allowed = ds.categories.facility_mask();
    let mut log = PretrainLog {
        epoch_loss: Vec::with_capacity(cfg.epochs),
        min_entropy: Vec::with_capacity(cfg.epochs + 1),
        dataset_loss: Vec::with_capacity(cfg.epochs + 1),
    };
    let record = |log: &mut PretrainLog, p: &FairDemandParams| -> Result<()> {
        let logits = dataset_logits(ds, p)?;
        let e = min_category_entropy(&logits, &residence)?;
        log.min_entropy.push(e);
        log.dataset_loss.push(1.0 / (e + 1.0));
        Ok(())
    };
    record(&mut log, &params)?;

    let mut opt = Adam::new(&params.params, cfg.lr, 0.0);
    let mut order: Vec<usize> = (0..ds.len()).collect();
    for epoch in 0..cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch) {
            let mut tape = Tape::new();
            let rows: Vec<Var> = chunk
                .iter()
                .map(|&i| category_logits(&mut tape, &params, &ds.regions[i].record))
                .collect();
            let logits = tape.concat_rows(&rows);
            let probs = tape.softmax_rows(logits, Some(&allowed));
            let mean = tape.mean_rows(probs);
            let ent = tape.neg_x_log_x(mean);
            let min = tape.min_over(ent, &allowed);
            let shifted = tape.add_scalar(min, 1.0);
            let loss = tape.recip(shifted);
            let value = tape.scalar(loss);
            if !value.is_finite() {
                return Err(Error::Training {
                    epoch,
                    message: format!("fairness loss became {value}"),
                });
            }
            let grads = tape.backward(loss, params.params.len());
            opt.update(&mut params.params, &grads);
            total += value;
            batches += 1;
        }
        if !params.params.all_finite() {
            return Err(Error::Training {
                epoch,
                message: "non-finite parameters".into(),
            });
        }
        log.epoch_loss.push(total / batches as f64);
        record(&mut log, &params)?;
        if let Some(path) = checkpoint {
            params.save(path)?;
        }
    }
    Ok((params, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::citygrid::{generate_synthetic_city, GeneratorConfig};
    use rand::Rng;

    fn mask() -> Vec<bool> {
        (0..14).map(|k| k == 0).collect()
    }

    fn record(features: Vec<Vec<f64>>) -> RegionRecord {
        RegionRecord {
            region_id: 3,
            urban_attributes: vec![3000.0, 600.0, 50_000.0, 2.0],
            demand: vec![2; 14],
            grid_features: features,
            population: 3000,
            elderly_population: 600,
        }
    }

    #[test]
    fn single_node_attends_fully() {
        let p = FairDemandParams::init(4, 14, 5, 8, 1);
        let rec = record(vec![vec![1.0, 0.2, 0.3, 2.0, 1.0]]);
        let att = demand_attention(&rec, 4, &p).unwrap();
        assert_eq!(att.alpha, vec![1.0]);
        let v = feature_input(&rec).dot(p.params.value(p.slots.value));
        let expected = v.dot(p.params.value(p.slots.head));
        for j in 0..8 {
            assert!((att.h[[0, j]] - expected[[0, j]]).abs() < 1e-12);
        }
        assert_eq!(att.h.row(1).sum(), 0.0);
    }

    #[test]
    fn identical_keys_split_attention_evenly() {
        let p = FairDemandParams::init(4, 14, 5, 8, 2);
        let row = vec![0.0, 0.4, 0.6, 1.0, 1.0];
        let att = demand_attention(&record(vec![row.clone(), row]), 4, &p).unwrap();
        assert!((att.alpha[0] - 0.5).abs() < 1e-15 && (att.alpha[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn attention_rows_are_normalized() {
        let p = FairDemandParams::init(4, 14, 5, 8, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let feats = (0..5).map(|_| (0..5).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let att = demand_attention(&record(feats), 8, &p).unwrap();
        assert!((att.alpha.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn shape_errors() {
        let p = FairDemandParams::init(4, 14, 5, 8, 3);
        let rec = record(vec![vec![1.0; 3]]);
        assert!(matches!(demand_attention(&rec, 4, &p), Err(Error::Shape(_))));
        let h = Array2::zeros((4, 8));
        let f = Array2::zeros((4, 7));
        assert!(matches!(condition_embedding(0, &h, &f, 2), Err(Error::Shape(_))));
    }

    #[test]
    fn condition_embedding_matches_the_scalar_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let h = Array2::from_shape_fn((6, 5), |_| rng.random_range(-1.0..1.0));
        let f = Array2::from_shape_fn((6, 5), |_| rng.random_range(-1.0..1.0));
        let c = condition_embedding(0, &h, &f, 4).unwrap();
        for i in 0..6 {
            for j in 0..5 {
                let want = if i < 4 { h[[i, j]] * f[[i, j]] } else { 0.0 };
                assert_eq!(c.values[[i, j]], want);
            }
        }
        let ones = Array2::ones((6, 5));
        assert_eq!(condition_embedding(0, &h, &ones, 6).unwrap().values, h);
        let zeros = Array2::zeros((6, 5));
        assert_eq!(condition_embedding(0, &zeros, &f, 6).unwrap().values, zeros);
    }

    #[test]
    fn fairness_loss_anchors() {
        // Uniform logits: p̄ = 1/13 on every facility category.
        let uniform = Array2::zeros((3, 14));
        let l = fairness_loss(&uniform, &mask()).unwrap();
        let e = (13f64).ln() / 13.0;
        assert!((l - 1.0 / (1.0 + e)).abs() < 1e-12);
        assert!((l - 0.8352).abs() < 1e-4);
        // A category with vanishing mass drives the loss to 1.
        let mut skewed = Array2::zeros((2, 14));
        skewed[[0, 5]] = -1e4;
        skewed[[1, 5]] = -1e4;
        assert!((fairness_loss(&skewed, &mask()).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(fairness_loss(&uniform, &[true; 14]), Err(Error::Degenerate(_))));
    }

    #[test]
    fn residence_probability_is_exactly_zero() {
        let mut logits = Array2::zeros((1, 14));
        logits[[0, 0]] = 50.0;
        let mean = mean_distribution(&logits, &ds_allowed());
        assert_eq!(mean[0], 0.0);
        assert!((mean.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    fn ds_allowed() -> Vec<bool> {
        mask().iter().map(|&m| !m).collect()
    }

    #[test]
    fn fairness_loss_stays_in_the_analytic_band() {
        let lower = 1.0 / (1.0 + (-1f64).exp());
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let n = rng.random_range(1..9);
            let scale = rng.random_range(0.01..20.0);
            let logits = Array2::from_shape_fn((n, 14), |_| scale * rng.random_range(-1.0..1.0));
            let l = fairness_loss(&logits, &mask()).unwrap();
            assert!(l > lower && l <= 1.0, "{l}");
            for c in [0.5, 2.0, 10.0] {
                let l2 = fairness_loss(&(&logits * c), &mask()).unwrap();
                assert!(l2 > lower && l2 <= 1.0);
            }
        }
    }

    fn tiny_dataset() -> Dataset {
        let cfg = GeneratorConfig {
            regions: 12,
            balance: 0.5,
            ..Default::default()
        };
        generate_synthetic_city(&cfg, 21).unwrap()
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let ds = tiny_dataset();
        let p = FairDemandParams::for_dataset(&ds, 8, 5);
        let cfg = PretrainConfig {
            epochs: 3,
            lr: 0.0,
            ..Default::default()
        };
        let (after, log) = pretrain(&ds, p.clone(), &cfg, None).unwrap();
        assert_eq!(after, p);
        assert!(log.dataset_loss.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn pretraining_is_reproducible_and_improves_fairness() {
        let ds = tiny_dataset();
        let p = FairDemandParams::for_dataset(&ds, 8, 5);
        let cfg = PretrainConfig {
            epochs: 20,
            lr: 1e-3,
            ..Default::default()
        };
        let (a, log_a) = pretrain(&ds, p.clone(), &cfg, None).unwrap();
        let (b, log_b) = pretrain(&ds, p, &cfg, None).unwrap();
        assert_eq!(a, b);
        assert_eq!(log_a, log_b);
        assert!(log_a.min_entropy.last() > log_a.min_entropy.first());
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fd.ckpt");
        let p = FairDemandParams::init(4, 14, 5, 8, 1);
        p.save(&path).unwrap();
        assert_eq!(FairDemandParams::load(&path).unwrap(), p);
        let text = std::fs::read_to_string(&path).unwrap().replacen("\"version\":1", "\"version\":7", 1);
        std::fs::write(&path, text).unwrap();
        assert!(matches!(FairDemandParams::load(&path), Err(Error::Format(_))));
    }
}
