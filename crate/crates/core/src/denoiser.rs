//! Conditional noise-prediction network.
//!
//! Each forward pass works on the active `n` nodes only. Pair tensors are
//! stored flattened as `n² × c` with row `i·n + j`. A layer runs an
//! edge-gated attention block and a message-passing block side by side; their
//! node outputs are summed and passed through a shared feed-forward merge.

use std::collections::VecDeque;
use std::path::Path;

use ndarray::Array2;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{FeedForward, LayerNorm, Linear, ParamSet};
use crate::sde::{NoisePredictor, NoiseSchedule, NoisySample};
use crate::tape::{Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DenoiserConfig {
    pub layers: usize,
    pub d_hidden: usize,
    pub heads: usize,
    pub m_walk: usize,
    pub time_embed_dim: usize,
    pub dropout: f64,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        Self {
            layers: 3,
            d_hidden: 128,
            heads: 4,
            m_walk: 20,
            time_embed_dim: 128,
            dropout: 0.0,
        }
    }
}

impl DenoiserConfig {
    /// `layers = 0` is accepted and gives a heads-only network.
    pub fn validate(&self) -> Result<()> {
        if self.heads == 0 || self.d_hidden == 0 || !self.d_hidden.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "d_hidden {} must be a positive multiple of heads {}",
                self.d_hidden, self.heads
            )));
        }
        if self.m_walk == 0 {
            return Err(Error::Config("m_walk must be at least 1".into()));
        }
        if self.time_embed_dim < 2 || !self.time_embed_dim.is_multiple_of(2) {
            return Err(Error::Config("time_embed_dim must be even and at least 2".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }

    pub fn node_feature_dim(&self, k_cat: usize) -> usize {
        k_cat + self.m_walk + 2
    }

    /// Noisy edge value, shortest-path buckets `0..=m_walk+1`, condition bit.
    pub fn edge_feature_dim(&self) -> usize {
        self.m_walk + 4
    }

    /// Closed-form trainable parameter count.
    pub fn parameter_count(&self, k_cat: usize, cond_dim: usize) -> usize {
        let d = self.d_hidden;
        let linear = |i: usize, o: usize| i * o + o;
        let inputs = linear(self.node_feature_dim(k_cat), d)
            + linear(cond_dim, d)
            + linear(self.edge_feature_dim(), d)
            + linear(self.time_embed_dim, d)
            + linear(d, d);
        let per_layer = 13 * d * d + 20 * d;
        let heads = 2 * linear(d, d) + linear(d, d) + linear(d, k_cat) + 4 * linear(d, d) + linear(d, 1);
        inputs + self.layers * per_layer + heads
    }
}

/// Structural features for one noisy graph.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedGraph {
    /// `n × (K_cat + m_walk + 2)`.
    pub node_feats: Array2<f64>,
    /// `n² × (m_walk + 4)`.
    pub edge_feats: Array2<f64>,
    /// Binarized adjacency used for the walk features and message passing.
    pub adjacency: Array2<f64>,
}

fn bfs_distances(adj: &Array2<f64>, src: usize) -> Vec<Option<usize>> {
    let n = adj.nrows();
    let mut dist = vec![None; n];
    dist[src] = Some(0);
    let mut queue = VecDeque::from([src]);
    while let Some(u) = queue.pop_front() {
        let du = dist[u].expect("visited");
        for v in 0..n {
            if adj[[u, v]] > 0.0 && dist[v].is_none() {
                dist[v] = Some(du + 1);
                queue.push_back(v);
            }
        }
    }
    dist
}

/// Closeness centrality with the Wasserman–Faust correction for
/// disconnected graphs.
fn closeness(dist: &[Option<usize>]) -> f64 {
    let n = dist.len();
    let (reach, total) = dist
        .iter()
        .filter_map(|d| *d)
        .filter(|&d| d > 0)
        .fold((0usize, 0usize), |(r, s), d| (r + 1, s + d));
    if reach == 0 || n < 2 {
        return 0.0;
    }
    (reach as f64 / (n - 1) as f64) * (reach as f64 / total as f64)
}

/// Walk, degree, centrality and shortest-path features of a noisy graph.
/// `alpha` is the signal scale at the sample's time; the adjacency is
/// binarized where `a / alpha > 0.5`.
pub fn augment(
    x: &Array2<f64>,
    a: &Array2<f64>,
    alpha: f64,
    condition_graph: &Array2<f64>,
    m_walk: usize,
) -> AugmentedGraph {
    let n = a.nrows();
    let adjacency = Array2::from_shape_fn((n, n), |(i, j)| f64::from(u8::from(i != j && a[[i, j]] > 0.5 * alpha)));
    let mut walk = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        let deg: f64 = adjacency.row(i).sum();
        if deg == 0.0 {
            walk[[i, i]] = 1.0;
        } else {
            for j in 0..n {
                walk[[i, j]] = adjacency[[i, j]] / deg;
            }
        }
    }
    let k_cat = x.ncols();
    let mut node_feats = Array2::zeros((n, k_cat + m_walk + 2));
    node_feats.slice_mut(ndarray::s![.., ..k_cat]).assign(x);
    let mut power = walk.clone();
    for step in 0..m_walk {
        for i in 0..n {
            node_feats[[i, k_cat + step]] = power[[i, i]];
        }
        if step + 1 < m_walk {
            power = power.dot(&walk);
        }
    }
    let width = m_walk + 4;
    let mut edge_feats = Array2::zeros((n * n, width));
    for i in 0..n {
        let dist = bfs_distances(&adjacency, i);
        node_feats[[i, k_cat + m_walk]] = adjacency.row(i).sum() / n as f64;
        node_feats[[i, k_cat + m_walk + 1]] = closeness(&dist);
        for j in 0..n {
            let row = i * n + j;
            edge_feats[[row, 0]] = a[[i, j]];
            let bucket = match dist[j] {
                Some(d) if d <= m_walk => d,
                _ => m_walk + 1,
            };
            edge_feats[[row, 1 + bucket]] = 1.0;
            edge_feats[[row, width - 1]] = condition_graph[[i, j]];
        }
    }
    AugmentedGraph {
        node_feats,
        edge_feats,
        adjacency,
    }
}

/// Sinusoidal encoding of `t` scaled to `[0, 1000]`: sines in the first half,
/// cosines in the second.
pub fn sinusoidal_encoding(t: f64, dim: usize) -> Array2<f64> {
    let half = dim / 2;
    let scaled = t * 1000.0;
    let mut out = Array2::zeros((1, dim));
    for k in 0..half {
        let freq = (-(10_000f64).ln() * k as f64 / half as f64).exp();
        out[[0, k]] = (scaled * freq).sin();
        out[[0, half + k]] = (scaled * freq).cos();
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HybridLayer {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub gate_logit: Linear,
    pub gate_value: Linear,
    pub attn_norm: LayerNorm,
    pub msg_node: Linear,
    pub msg_edge: Linear,
    pub node_ffn: FeedForward,
    pub edge_ffn: FeedForward,
    pub merge: FeedForward,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct Layout {
    node_in: Linear,
    cond_in: Linear,
    edge_in: Linear,
    time_hidden: Linear,
    time_out: Linear,
    layers: Vec<HybridLayer>,
    skip_node: Linear,
    skip_edge: Linear,
    node_head: [Linear; 2],
    edge_mlp: [Linear; 2],
    edge_conv: [Linear; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Denoiser {
    pub config: DenoiserConfig,
    pub schedule: NoiseSchedule,
    pub k_cat: usize,
    pub cond_dim: usize,
    params: ParamSet,
    layout: Layout,
}

/// Tape handles for the two noise predictions.
#[derive(Debug, Clone, Copy)]
pub struct NoiseVars {
    /// `n × K_cat`.
    pub eps_x: Var,
    /// `n² × 1`.
    pub eps_a: Var,
}

impl Denoiser {
    pub fn new(config: DenoiserConfig, schedule: NoiseSchedule, k_cat: usize, cond_dim: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamSet::default();
        let d = config.d_hidden;
        let r = &mut rng;
        let mut layers = Vec::with_capacity(config.layers);
        let node_in = Linear::new(&mut p, "node_in", config.node_feature_dim(k_cat), d, true, r);
        let cond_in = Linear::new(&mut p, "cond_in", cond_dim, d, true, r);
        let edge_in = Linear::new(&mut p, "edge_in", config.edge_feature_dim(), d, true, r);
        let time_hidden = Linear::new(&mut p, "time.hidden", config.time_embed_dim, d, true, r);
        let time_out = Linear::new(&mut p, "time.out", d, d, true, r);
        for l in 0..config.layers {
            let name = |s: &str| format!("layer{l}.{s}");
            layers.push(HybridLayer {
                query: Linear::new(&mut p, &name("query"), d, d, true, r),
                key: Linear::new(&mut p, &name("key"), d, d, true, r),
                value: Linear::new(&mut p, &name("value"), d, d, true, r),
                gate_logit: Linear::new(&mut p, &name("gate_logit"), d, d, true, r),
                gate_value: Linear::new(&mut p, &name("gate_value"), d, d, true, r),
                attn_norm: LayerNorm::new(&mut p, &name("attn_norm"), d),
                msg_node: Linear::new(&mut p, &name("msg_node"), d, d, false, r),
                msg_edge: Linear::new(&mut p, &name("msg_edge"), d, d, true, r),
                node_ffn: FeedForward::new(&mut p, &name("node_ffn"), d, r),
                edge_ffn: FeedForward::new(&mut p, &name("edge_ffn"), d, r),
                merge: FeedForward::new(&mut p, &name("merge"), d, r),
            });
        }
        let layout = Layout {
            node_in,
            cond_in,
            edge_in,
            time_hidden,
            time_out,
            layers,
            skip_node: Linear::new(&mut p, "skip_node", d, d, true, r),
            skip_edge: Linear::new(&mut p, "skip_edge", d, d, true, r),
            node_head: [
                Linear::new(&mut p, "node_head.0", d, d, true, r),
                Linear::new(&mut p, "node_head.1", d, k_cat, true, r),
            ],
            edge_mlp: [
                Linear::new(&mut p, "edge_mlp.0", d, d, true, r),
                Linear::new(&mut p, "edge_mlp.1", d, d, true, r),
            ],
            edge_conv: [
                Linear::new(&mut p, "edge_conv.0", d, d, true, r),
                Linear::new(&mut p, "edge_conv.1", d, d, true, r),
                Linear::new(&mut p, "edge_conv.2", d, 1, true, r),
            ],
        };
        Ok(Self {
            config,
            schedule,
            k_cat,
            cond_dim,
            params: p,
            layout,
        })
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn parameter_count(&self) -> usize {
        self.params.count()
    }

    /// `sin/cos` encoding followed by two dense layers, `1 × d_hidden`.
    pub fn time_embedding(&self, tape: &mut Tape, t: f64) -> Var {
        let enc = tape.constant(sinusoidal_encoding(t, self.config.time_embed_dim));
        let h = self.layout.time_hidden.forward(tape, &self.params, enc);
        let h = tape.silu(h);
        self.layout.time_out.forward(tape, &self.params, h)
    }

    /// Records the full forward pass on `tape`. `condition` may carry padding
    /// rows past `n`. With `dropout` set, node updates are randomly zeroed.
    #[allow(clippy::too_many_arguments)]
    pub fn forward(
        &self,
        tape: &mut Tape,
        x: &Array2<f64>,
        a: &Array2<f64>,
        t: f64,
        condition: &Array2<f64>,
        condition_graph: &Array2<f64>,
        mut dropout: Option<&mut (dyn RngCore + '_)>,
    ) -> Result<NoiseVars> {
        let n = x.nrows();
        if n == 0 {
            return Err(Error::Shape("graph has no active nodes".into()));
        }
        if x.ncols() != self.k_cat || a.dim() != (n, n) || condition_graph.dim() != (n, n) {
            return Err(Error::Config(format!(
                "inputs X {:?}, A {:?}, Ā {:?} do not fit a {}-category model",
                x.dim(),
                a.dim(),
                condition_graph.dim(),
                self.k_cat
            )));
        }
        if condition.nrows() < n || condition.ncols() != self.cond_dim {
            return Err(Error::Config(format!(
                "condition is {:?}, expected at least {n} rows of width {}",
                condition.dim(),
                self.cond_dim
            )));
        }
        let (alpha, _) = self.schedule.marginal_params(t)?;
        let aug = augment(x, a, alpha, condition_graph, self.config.m_walk);
        let p = &self.params;
        let lay = &self.layout;

        let temb = self.time_embedding(tape, t);
        let node_in = tape.constant(aug.node_feats);
        let cond = tape.constant(condition.slice(ndarray::s![..n, ..]).to_owned());
        let edge_in = tape.constant(aug.edge_feats);
        let hx = lay.node_in.forward(tape, p, node_in);
        let hc = lay.cond_in.forward(tape, p, cond);
        let h0 = tape.add(hx, hc);
        let mut h = tape.add_row(h0, temb);
        let mut e = lay.edge_in.forward(tape, p, edge_in);

        let norm_adj = normalized_adjacency(&aug.adjacency);
        let norm_flat = norm_adj.clone().into_shape_with_order((n * n, 1)).expect("square");
        let norm_adj = tape.constant(norm_adj);
        let norm_flat = tape.constant(norm_flat);

        let mut node_skip = h;
        let mut edge_skip = e;
        for layer in &lay.layers {
            let hin = tape.add_row(h, temb);
            let attn = self.gtb_forward(tape, layer, hin, e, n);
            let (msg_node, msg_edge) = self.mpb_forward(tape, layer, hin, e, norm_adj, norm_flat, n);
            let fused = tape.add(attn, msg_node);
            let mut update = layer.merge.forward(tape, p, fused);
            if let Some(rng) = dropout.as_deref_mut() {
                update = apply_dropout(tape, update, self.config.dropout, rng);
            }
            h = tape.add(h, update);
            e = tape.add(e, msg_edge);
            node_skip = tape.add(node_skip, h);
            edge_skip = tape.add(edge_skip, e);
        }

        let node_agg = lay.skip_node.forward(tape, p, node_skip);
        let edge_agg = lay.skip_edge.forward(tape, p, edge_skip);

        let z = lay.node_head[0].forward(tape, p, node_agg);
        let z = tape.silu(z);
        let eps_x = lay.node_head[1].forward(tape, p, z);

        let ei = tape.expand_i(node_agg, n);
        let ej = tape.expand_j(node_agg, n);
        let pair = tape.add(edge_agg, ei);
        let pair = tape.add(pair, ej);
        let z = lay.edge_mlp[0].forward(tape, p, pair);
        let z = tape.silu(z);
        let mut z = lay.edge_mlp[1].forward(tape, p, z);
        for (c, conv) in lay.edge_conv.iter().enumerate() {
            z = conv.forward(tape, p, z);
            if c + 1 < lay.edge_conv.len() {
                z = tape.silu(z);
            }
        }
        let sym = tape.sym_pairs(z, n);
        let off_diag = tape.constant(Array2::from_shape_fn((n * n, 1), |(r, _)| {
            f64::from(u8::from(r / n != r % n))
        }));
        let eps_a = tape.mul_col(sym, off_diag);
        Ok(NoiseVars { eps_x, eps_a })
    }

    /// Edge-gated multi-head attention with residual and layer norm.
    pub fn gtb_forward(&self, tape: &mut Tape, layer: &HybridLayer, h: Var, e: Var, n: usize) -> Var {
        let p = &self.params;
        let heads = self.config.heads;
        let dk = (self.config.d_hidden / heads) as f64;
        let q = layer.query.forward(tape, p, h);
        let k = layer.key.forward(tape, p, h);
        let v = layer.value.forward(tape, p, h);
        let g0 = layer.gate_logit.forward(tape, p, e);
        let g0 = tape.tanh(g0);
        let g1 = layer.gate_value.forward(tape, p, e);
        let g1 = tape.tanh(g1);
        let qi = tape.expand_i(q, n);
        let kj = tape.expand_j(k, n);
        let vj = tape.expand_j(v, n);
        let score = tape.mul(g0, qi);
        let score = tape.mul(score, kj);
        let logits = tape.head_sum(score, heads);
        let logits = tape.scale(logits, 1.0 / dk.sqrt());
        let weights = tape.pair_softmax(logits, n);
        let weights = tape.head_expand(weights, self.config.d_hidden);
        let msg = tape.mul(g1, vj);
        let msg = tape.mul(weights, msg);
        let agg = tape.sum_j(msg, n);
        let res = tape.add(h, agg);
        layer.attn_norm.forward(tape, p, res)
    }

    /// Graph convolution over the normalized adjacency (with self loops),
    /// gathering neighbour edge features too. Returns node and edge updates;
    /// the edge update is symmetric by construction.
    #[allow(clippy::too_many_arguments)]
    pub fn mpb_forward(
        &self,
        tape: &mut Tape,
        layer: &HybridLayer,
        h: Var,
        e: Var,
        norm_adj: Var,
        norm_flat: Var,
        n: usize,
    ) -> (Var, Var) {
        let p = &self.params;
        let hw = layer.msg_node.forward(tape, p, h);
        let nodes = tape.matmul(norm_adj, hw);
        let ew = layer.msg_edge.forward(tape, p, e);
        let ew = tape.mul_col(ew, norm_flat);
        let edges = tape.sum_j(ew, n);
        let agg = tape.add(nodes, edges);
        let node_out = layer.node_ffn.forward(tape, p, agg);
        let ai = tape.expand_i(agg, n);
        let aj = tape.expand_j(agg, n);
        let pair = tape.add(ai, aj);
        let edge_out = layer.edge_ffn.forward(tape, p, pair);
        (node_out, edge_out)
    }

    /// Noise predictions as plain arrays: `n × K_cat` and `n × n`.
    pub fn predict_noise(
        &self,
        x: &Array2<f64>,
        a: &Array2<f64>,
        t: f64,
        condition: &Array2<f64>,
        condition_graph: &Array2<f64>,
    ) -> Result<(Array2<f64>, Array2<f64>)> {
        let mut tape = Tape::new();
        let out = self.forward(&mut tape, x, a, t, condition, condition_graph, None)?;
        let n = x.nrows();
        let eps_a = tape.value(out.eps_a).clone().into_shape_with_order((n, n)).expect("square");
        Ok((tape.value(out.eps_x).clone(), eps_a))
    }

    /// Records the ε-matching loss of one noisy sample.
    pub fn sample_loss(
        &self,
        tape: &mut Tape,
        sample: &NoisySample,
        condition: &Array2<f64>,
        condition_graph: &Array2<f64>,
        dropout: Option<&mut (dyn RngCore + '_)>,
    ) -> Result<Var> {
        let n = sample.n();
        let out = self.forward(tape, &sample.x, &sample.a, sample.t, condition, condition_graph, dropout)?;
        let tx = tape.constant(sample.eps_x.clone());
        let ta = tape.constant(sample.eps_a.clone().into_shape_with_order((n * n, 1)).expect("square"));
        let dx = tape.sub(out.eps_x, tx);
        let dx2 = tape.mul(dx, dx);
        let da = tape.sub(out.eps_a, ta);
        let da2 = tape.mul(da, da);
        let lx = tape.sum_all(dx2);
        let la = tape.sum_all(da2);
        Ok(tape.add(lx, la))
    }

    /// Mean loss over a batch of noisy samples and the matching gradients.
    pub fn loss_and_grads(
        &self,
        batch: &[(NoisySample, &Array2<f64>, &Array2<f64>)],
        mut dropout: Option<&mut (dyn RngCore + '_)>,
    ) -> Result<(f64, Vec<Option<Array2<f64>>>)> {
        if batch.is_empty() {
            return Err(Error::Degenerate("empty batch".into()));
        }
        let scale = 1.0 / batch.len() as f64;
        let mut total = 0.0;
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; self.params.len()];
        for (sample, cond, abar) in batch {
            let mut tape = Tape::new();
            let loss = self.sample_loss(&mut tape, sample, cond, abar, dropout.as_deref_mut())?;
            total += tape.scalar(loss);
            for (acc, g) in grads.iter_mut().zip(tape.backward(loss, self.params.len())) {
                if let Some(g) = g {
                    match acc {
                        Some(a) => a.scaled_add(scale, &g),
                        None => *acc = Some(g * scale),
                    }
                }
            }
        }
        Ok((total * scale, grads))
    }

    pub fn to_checkpoint<M: Serialize>(&self, meta: &M) -> Result<String> {
        let doc = CheckpointOut {
            format: DENOISER_FORMAT,
            version: DENOISER_VERSION,
            config: &self.config,
            schedule: &self.schedule,
            k_cat: self.k_cat,
            cond_dim: self.cond_dim,
            params: &self.params,
            meta,
        };
        serde_json::to_string(&doc).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_checkpoint<M: for<'de> Deserialize<'de>>(text: &str) -> Result<(Self, M)> {
        let v: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Format(format!("model checkpoint: {e}")))?;
        if v.get("format").and_then(|f| f.as_str()) != Some(DENOISER_FORMAT) {
            return Err(Error::Format("not a model checkpoint".into()));
        }
        let version = v.get("version").and_then(|f| f.as_u64());
        if version != Some(u64::from(DENOISER_VERSION)) {
            return Err(Error::Format(format!(
                "model checkpoint version {version:?}, expected {DENOISER_VERSION}"
            )));
        }
        let doc: CheckpointIn<M> =
            serde_json::from_value(v).map_err(|e| Error::Format(format!("model checkpoint: {e}")))?;
        let mut model = Self::new(doc.config, doc.schedule, doc.k_cat, doc.cond_dim, 0)?;
        if model.params.names() != doc.params.names() {
            return Err(Error::Format("parameter names do not match the configuration".into()));
        }
        for i in 0..model.params.len() {
            if model.params.value(i).dim() != doc.params.value(i).dim() {
                return Err(Error::Format(format!(
                    "parameter {} has shape {:?}, expected {:?}",
                    model.params.name(i),
                    doc.params.value(i).dim(),
                    model.params.value(i).dim()
                )));
            }
        }
        model.params = doc.params;
        Ok((model, doc.meta))
    }

    pub fn save<M: Serialize>(&self, path: impl AsRef<Path>, meta: &M) -> Result<()> {
        crate::fairdemand::write_atomic(path.as_ref(), self.to_checkpoint(meta)?.as_bytes())
    }

    pub fn load<M: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<(Self, M)> {
        Self::from_checkpoint(&std::fs::read_to_string(path)?)
    }
}

pub const DENOISER_FORMAT: &str = "fairlayout-denoiser";
pub const DENOISER_VERSION: u32 = 1;

#[derive(Serialize)]
struct CheckpointOut<'a, M> {
    format: &'static str,
    version: u32,
    config: &'a DenoiserConfig,
    schedule: &'a NoiseSchedule,
    k_cat: usize,
    cond_dim: usize,
    params: &'a ParamSet,
    meta: &'a M,
}

#[derive(Deserialize)]
struct CheckpointIn<M> {
    config: DenoiserConfig,
    schedule: NoiseSchedule,
    k_cat: usize,
    cond_dim: usize,
    params: ParamSet,
    meta: M,
}

/// `D^{-1/2} (Â + I) D^{-1/2}`.
fn normalized_adjacency(adj: &Array2<f64>) -> Array2<f64> {
    let n = adj.nrows();
    let with_self = adj + &Array2::<f64>::eye(n);
    let inv_sqrt: Vec<f64> = with_self.rows().into_iter().map(|r| 1.0 / r.sum().sqrt()).collect();
    Array2::from_shape_fn((n, n), |(i, j)| with_self[[i, j]] * inv_sqrt[i] * inv_sqrt[j])
}

fn apply_dropout(tape: &mut Tape, x: Var, rate: f64, rng: &mut dyn RngCore) -> Var {
    if rate == 0.0 {
        return x;
    }
    let keep = 1.0 / (1.0 - rate);
    let mask = Array2::from_shape_simple_fn(tape.shape(x), || if rng.random::<f64>() < rate { 0.0 } else { keep });
    let mask = tape.constant(mask);
    tape.mul(x, mask)
}

impl NoisePredictor for Denoiser {
    fn predict(
        &self,
        sample: &NoisySample,
        condition: &Array2<f64>,
        condition_graph: &Array2<f64>,
    ) -> Result<(Array2<f64>, Array2<f64>)> {
        self.predict_noise(&sample.x, &sample.a, sample.t, condition, condition_graph)
    }
}
