//! Reverse-time generation and decoding of layouts.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::citygrid::{Dataset, Provenance, WalkingGraph};
use crate::denoiser::Denoiser;
use crate::error::{Error, Result};
use crate::fairdemand::ConditionEmbedding;
use crate::sde::{gaussian_matrix, make_condition_graph, symmetric_noise, NoiseSchedule};

/// Final integration time; the schedules are singular at exactly zero.
pub const T_END: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerMethod {
    Dpm3,
    EulerMaruyama,
}

impl SamplerMethod {
    pub fn name(self) -> &'static str {
        match self {
            Self::Dpm3 => "dpm3",
            Self::EulerMaruyama => "euler-maruyama",
        }
    }
}

impl std::str::FromStr for SamplerMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dpm3" => Ok(Self::Dpm3),
            "euler-maruyama" | "em" => Ok(Self::EulerMaruyama),
            other => Err(Error::Config(format!("unknown sampler {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub method: SamplerMethod,
    /// Denoiser evaluations for `dpm3`, steps for `euler-maruyama`.
    pub steps: usize,
    pub clamp_residences: bool,
    pub decode_threshold: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            method: SamplerMethod::Dpm3,
            steps: 200,
            clamp_residences: true,
            decode_threshold: 0.5,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps < 10 {
            return Err(Error::Config(format!("sampler steps {} below 10", self.steps)));
        }
        if !(self.decode_threshold > 0.0 && self.decode_threshold < 1.0) {
            return Err(Error::Config(format!("decode threshold {} outside (0, 1)", self.decode_threshold)));
        }
        Ok(())
    }
}

/// Fixed residence slots of a region: their one-hot rows and the edges among
/// them.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidenceTemplate {
    pub n: usize,
    pub n_max: usize,
    pub k_cat: usize,
    pub residence: usize,
    pub slots: Vec<usize>,
    /// Edge flags between slots, indexed like `slots × slots`.
    pub edges: Vec<bool>,
}

impl ResidenceTemplate {
    pub fn from_graph(graph: &WalkingGraph, k_cat: usize, residence: usize) -> Self {
        let slots = graph.nodes_of(residence);
        let edges = slots
            .iter()
            .flat_map(|&i| slots.iter().map(move |&j| (i, j)))
            .map(|(i, j)| graph.has_edge(i, j))
            .collect();
        Self {
            n: graph.n(),
            n_max: graph.n_max(),
            k_cat,
            residence,
            slots,
            edges,
        }
    }

    fn edge(&self, a: usize, b: usize) -> f64 {
        f64::from(u8::from(self.edges[a * self.slots.len() + b]))
    }

    /// Overwrites residence rows and residence pairs with the template
    /// perturbed to signal scale `alpha` and noise scale `sigma`.
    fn clamp<R: Rng>(&self, x: &mut Array2<f64>, a: &mut Array2<f64>, alpha: f64, sigma: f64, rng: &mut R) {
        for &i in &self.slots {
            for k in 0..self.k_cat {
                let clean = f64::from(u8::from(k == self.residence));
                let z: f64 = rng.sample(StandardNormal);
                x[[i, k]] = alpha * clean + sigma * z;
            }
        }
        for (p, &i) in self.slots.iter().enumerate() {
            for (q, &j) in self.slots.iter().enumerate().skip(p + 1) {
                let z: f64 = rng.sample(StandardNormal);
                let v = alpha * self.edge(p, q) + sigma * z;
                a[[i, j]] = v;
                a[[j, i]] = v;
            }
        }
    }
}

/// Converts real tensors of the active nodes into a layout. `forbidden`
/// categories are never chosen by the row argmax.
pub fn decode_graph(
    x: &Array2<f64>,
    a: &Array2<f64>,
    n_max: usize,
    threshold: f64,
    forbidden: &[usize],
) -> Result<WalkingGraph> {
    let (n, k_cat) = x.dim();
    if a.dim() != (n, n) {
        return Err(Error::Shape(format!("X is {:?} but A is {:?}", x.dim(), a.dim())));
    }
    if x.iter().chain(a.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Input("non-finite tensor entries".into()));
    }
    let categories = (0..n)
        .map(|i| {
            let mut best: Option<usize> = None;
            for k in (0..k_cat).filter(|k| !forbidden.contains(k)) {
                if best.is_none_or(|b| x[[i, k]] > x[[i, b]]) {
                    best = Some(k);
                }
            }
            best.ok_or_else(|| Error::Config("every category is forbidden".into()))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut adjacency = vec![false; n * n];
    for i in 0..n {
        for j in 0..n {
            adjacency[i * n + j] = i != j && 0.5 * (a[[i, j]] + a[[j, i]]) > threshold;
        }
    }
    WalkingGraph::from_parts(n_max, k_cat, categories, adjacency, None)
}

/// Order sequence for `nfe` evaluations: third-order steps with a lower-order
/// tail so the counts add up exactly.
pub fn dpm_orders(nfe: usize) -> Vec<usize> {
    let k = nfe / 3 + 1;
    let mut orders = match nfe % 3 {
        0 => {
            let mut o = vec![3; k.saturating_sub(2)];
            o.extend([2, 1]);
            o
        }
        1 => {
            let mut o = vec![3; k - 1];
            o.push(1);
            o
        }
        _ => {
            let mut o = vec![3; k - 1];
            o.push(2);
            o
        }
    };
    orders.retain(|&o| o > 0);
    orders
}

/// State of a reverse trajectory: node and edge tensors updated together.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub x: Array2<f64>,
    pub a: Array2<f64>,
}

impl State {
    fn combine(&self, cs: f64, eps: &State, ce: f64) -> State {
        State {
            x: &self.x * cs + &eps.x * ce,
            a: &self.a * cs + &eps.a * ce,
        }
    }

    fn add_scaled(mut self, other: &State, c: f64) -> State {
        self.x.scaled_add(c, &other.x);
        self.a.scaled_add(c, &other.a);
        self
    }

    fn diff(a: &State, b: &State) -> State {
        State {
            x: &a.x - &b.x,
            a: &a.a - &b.a,
        }
    }

    fn is_finite(&self) -> bool {
        self.x.iter().chain(self.a.iter()).all(|v| v.is_finite())
    }
}

/// One noise-prediction call.
pub type NoiseFn<'a> = dyn FnMut(&State, f64) -> Result<State> + 'a;

fn dpm_step(
    sched: &NoiseSchedule,
    eps: &mut NoiseFn<'_>,
    state: &State,
    s: f64,
    t: f64,
    order: usize,
) -> Result<State> {
    let (ls, lt) = (sched.half_log_snr(s), sched.half_log_snr(t));
    let h = lt - ls;
    let (a_s, _) = sched.alpha_sigma(s);
    let (a_t, sig_t) = sched.alpha_sigma(t);
    let e_s = eps(state, s)?;
    let first = state.combine(a_t / a_s, &e_s, -sig_t * h.exp_m1());
    match order {
        1 => Ok(first),
        2 => {
            let r1 = 0.5;
            let s1 = sched.time_of_half_log_snr(ls + r1 * h);
            let (a1, sig1) = sched.alpha_sigma(s1);
            let u1 = state.combine(a1 / a_s, &e_s, -sig1 * (r1 * h).exp_m1());
            let d1 = State::diff(&eps(&u1, s1)?, &e_s);
            Ok(first.add_scaled(&d1, -sig_t / (2.0 * r1) * h.exp_m1()))
        }
        3 => {
            let (r1, r2) = (1.0 / 3.0, 2.0 / 3.0);
            let s1 = sched.time_of_half_log_snr(ls + r1 * h);
            let s2 = sched.time_of_half_log_snr(ls + r2 * h);
            let (a1, sig1) = sched.alpha_sigma(s1);
            let (a2, sig2) = sched.alpha_sigma(s2);
            let u1 = state.combine(a1 / a_s, &e_s, -sig1 * (r1 * h).exp_m1());
            let d1 = State::diff(&eps(&u1, s1)?, &e_s);
            let phi22 = (r2 * h).exp_m1() / (r2 * h) - 1.0;
            let u2 = state
                .combine(a2 / a_s, &e_s, -sig2 * (r2 * h).exp_m1())
                .add_scaled(&d1, -sig2 * r2 / r1 * phi22);
            let d2 = State::diff(&eps(&u2, s2)?, &e_s);
            let phi2 = h.exp_m1() / h - 1.0;
            Ok(first.add_scaled(&d2, -sig_t / r2 * phi2))
        }
        other => Err(Error::Config(format!("solver order {other} not supported"))),
    }
}

/// Integrates the reverse dynamics from `t = 1` down to [`T_END`]. `after_step`
/// runs on the state after every outer step with the new time.
pub fn integrate<R: Rng>(
    sched: &NoiseSchedule,
    method: SamplerMethod,
    steps: usize,
    init: State,
    eps: &mut NoiseFn<'_>,
    rng: &mut R,
    after_step: &mut dyn FnMut(&mut State, f64, &mut R),
) -> Result<State> {
    let mut state = init;
    match method {
        SamplerMethod::Dpm3 => {
            let orders = dpm_orders(steps);
            let (l0, l1) = (sched.half_log_snr(1.0), sched.half_log_snr(T_END));
            let times: Vec<f64> = (0..=orders.len())
                .map(|i| match i {
                    0 => 1.0,
                    i if i == orders.len() => T_END,
                    i => sched.time_of_half_log_snr(l0 + (l1 - l0) * i as f64 / orders.len() as f64),
                })
                .collect();
            for (step, &order) in orders.iter().enumerate() {
                state = dpm_step(sched, eps, &state, times[step], times[step + 1], order)?;
                after_step(&mut state, times[step + 1], rng);
                if !state.is_finite() {
                    return Err(Error::Sampling {
                        step,
                        message: "state became non-finite".into(),
                    });
                }
            }
        }
        SamplerMethod::EulerMaruyama => {
            let dt = (1.0 - T_END) / steps as f64;
            for step in 0..steps {
                let t = 1.0 - step as f64 * dt;
                let (_, sigma) = sched.alpha_sigma(t);
                let beta = sched.beta(t);
                let e = eps(&state, t)?;
                let drift = state.combine(0.5 * beta * dt, &e, -beta * dt / sigma);
                let scale = (beta * dt).sqrt();
                let zx = gaussian_matrix(state.x.nrows(), state.x.ncols(), rng);
                let za = symmetric_noise(state.a.nrows(), rng);
                state = state.add_scaled(&drift, 1.0);
                state.x.scaled_add(scale, &zx);
                state.a.scaled_add(scale, &za);
                after_step(&mut state, t - dt, rng);
                if !state.is_finite() {
                    return Err(Error::Sampling {
                        step,
                        message: "state became non-finite".into(),
                    });
                }
            }
        }
    }
    Ok(state)
}

/// Generates a layout with `n` active nodes matching `template`.
pub fn sample(
    model: &Denoiser,
    condition: &Array2<f64>,
    condition_graph: &Array2<f64>,
    template: &ResidenceTemplate,
    config: &SamplerConfig,
    seed: u64,
) -> Result<WalkingGraph> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = template.n;
    let init = State {
        x: gaussian_matrix(n, template.k_cat, &mut rng),
        a: symmetric_noise(n, &mut rng),
    };
    let mut eps = |s: &State, t: f64| -> Result<State> {
        let (x, a) = model.predict_noise(&s.x, &s.a, t, condition, condition_graph)?;
        Ok(State { x, a })
    };
    let sched = model.schedule;
    let clamp = config.clamp_residences;
    let mut after = |s: &mut State, t: f64, rng: &mut ChaCha8Rng| {
        if clamp {
            let (alpha, sigma) = sched.alpha_sigma(t);
            template.clamp(&mut s.x, &mut s.a, alpha, sigma, rng);
        }
    };
    let end = integrate(&sched, config.method, config.steps, init, &mut eps, &mut rng, &mut after)?;
    let (alpha, _) = sched.alpha_sigma(T_END);
    let mut x = end.x / alpha;
    let mut a = end.a / alpha;
    if clamp {
        template.clamp(&mut x, &mut a, 1.0, 0.0, &mut rng);
    }
    let forbidden = if clamp { vec![template.residence] } else { Vec::new() };
    let mut graph = decode_graph(&x, &a, template.n_max, config.decode_threshold, &forbidden)?;
    if clamp {
        let mut cats = graph.categories().to_vec();
        for &i in &template.slots {
            cats[i] = template.residence;
        }
        graph = WalkingGraph::from_parts(template.n_max, template.k_cat, cats, graph.adjacency().to_vec(), None)?;
    }
    Ok(graph)
}

/// Seed used for one region, derived from the run seed and the region id.
pub fn region_seed(seed: u64, region_id: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(region_id as u64);
    rng.random()
}

/// One generated layout per region, in dataset order.
pub fn generate_for_dataset(
    model: &Denoiser,
    dataset: &Dataset,
    conditions: &[ConditionEmbedding],
    config: &SamplerConfig,
    seed: u64,
) -> Result<Vec<(WalkingGraph, Provenance)>> {
    config.validate()?;
    let residence = dataset.categories.residence();
    dataset
        .regions
        .iter()
        .map(|region| {
            let id = region.record.region_id;
            let cond = conditions
                .iter()
                .find(|c| c.region_id == id)
                .ok_or_else(|| Error::Config(format!("no condition embedding for region {id}")))?;
            let template = ResidenceTemplate::from_graph(&region.graph, dataset.k_cat(), residence);
            let abar = make_condition_graph(&region.graph, residence);
            let s = region_seed(seed, id);
            let graph = sample(model, &cond.values, &abar, &template, config, s)?;
            log::debug!("region {id} sampled with seed {s}");
            Ok((
                graph,
                Provenance {
                    method: config.method.name().into(),
                    seed: s,
                    steps: Some(config.steps),
                    source: None,
                },
            ))
        })
        .collect()
}
