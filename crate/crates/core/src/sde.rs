//! Variance-preserving diffusion of graph tensors.
//!
//! Node categories `X` (`n × K_cat`) and the adjacency `A` (`n × n`) of the
//! active nodes are perturbed with Gaussian noise; padding rows up to `N_max`
//! are never materialised, which keeps every masked entry at zero.

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::citygrid::WalkingGraph;
use crate::error::{Error, Result};

const COSINE_OFFSET: f64 = 0.008;
/// Cosine time horizon clipped so that `α` stays well above zero at `t = 1`.
const COSINE_T_MAX: f64 = 0.9946;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleKind {
    LinearVp,
    Cosine,
}

impl std::str::FromStr for ScheduleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear-vp" => Ok(Self::LinearVp),
            "cosine" => Ok(Self::Cosine),
            other => Err(Error::Config(format!("unknown schedule {other:?} (expected linear-vp or cosine)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    pub kind: ScheduleKind,
    pub beta_min: f64,
    pub beta_max: f64,
    pub steps: usize,
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        Self::cosine()
    }
}

impl NoiseSchedule {
    pub fn linear() -> Self {
        Self {
            kind: ScheduleKind::LinearVp,
            beta_min: 0.1,
            beta_max: 20.0,
            steps: 200,
        }
    }

    pub fn cosine() -> Self {
        Self {
            kind: ScheduleKind::Cosine,
            ..Self::linear()
        }
    }

    pub fn of_kind(kind: ScheduleKind) -> Self {
        Self { kind, ..Self::linear() }
    }

    fn cosine_angle(t: f64) -> f64 {
        (t * COSINE_T_MAX + COSINE_OFFSET) / (1.0 + COSINE_OFFSET) * std::f64::consts::FRAC_PI_2
    }

    /// `ln α_t` for `t ∈ [0, 1]` (unchecked).
    pub fn log_alpha(&self, t: f64) -> f64 {
        match self.kind {
            ScheduleKind::LinearVp => -0.25 * t * t * (self.beta_max - self.beta_min) - 0.5 * t * self.beta_min,
            ScheduleKind::Cosine => Self::cosine_angle(t).cos().ln() - Self::cosine_angle(0.0).cos().ln(),
        }
    }

    /// `(α_t, σ_t)` without the domain check.
    pub fn alpha_sigma(&self, t: f64) -> (f64, f64) {
        let la = self.log_alpha(t);
        (la.exp(), (-(2.0 * la).exp_m1()).max(0.0).sqrt())
    }

    pub fn marginal_params(&self, t: f64) -> Result<(f64, f64)> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::Domain(format!("t = {t} outside [0, 1]")));
        }
        Ok(self.alpha_sigma(t))
    }

    /// Instantaneous rate `β(t) = −2 d ln α / dt`.
    pub fn beta(&self, t: f64) -> f64 {
        match self.kind {
            ScheduleKind::LinearVp => self.beta_min + t * (self.beta_max - self.beta_min),
            ScheduleKind::Cosine => {
                let du = COSINE_T_MAX * std::f64::consts::PI / (2.0 * (1.0 + COSINE_OFFSET));
                2.0 * Self::cosine_angle(t).tan() * du
            }
        }
    }

    /// Half log signal-to-noise ratio `ln α_t − ln σ_t`.
    pub fn half_log_snr(&self, t: f64) -> f64 {
        let (a, s) = self.alpha_sigma(t);
        a.ln() - s.ln()
    }

    /// Inverse of [`Self::half_log_snr`].
    pub fn time_of_half_log_snr(&self, lambda: f64) -> f64 {
        let tail = (-2.0 * lambda).exp().ln_1p();
        match self.kind {
            ScheduleKind::LinearVp => {
                let (b0, b1) = (self.beta_min, self.beta_max);
                let disc = b0 * b0 + 2.0 * (b1 - b0) * tail;
                2.0 * tail / (disc.sqrt() + b0)
            }
            ScheduleKind::Cosine => {
                let alpha = (-0.5 * tail).exp();
                let u = (alpha * Self::cosine_angle(0.0).cos()).acos();
                (u * 2.0 * (1.0 + COSINE_OFFSET) / std::f64::consts::PI - COSINE_OFFSET) / COSINE_T_MAX
            }
        }
    }

    /// Euler–Maruyama integration of `dx = −½β x dt + √β dw` from `t = 0` to
    /// `t = t_end`, in place on independent scalar particles.
    pub fn simulate_forward<R: Rng>(&self, particles: &mut [f64], t_end: f64, steps: usize, rng: &mut R) {
        let dt = t_end / steps as f64;
        for s in 0..steps {
            let beta = self.beta(s as f64 * dt);
            let drift = 1.0 - 0.5 * beta * dt;
            let diffusion = (beta * dt).sqrt();
            for x in particles.iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *x = *x * drift + diffusion * z;
            }
        }
    }
}

/// A graph at diffusion time `t`, restricted to its `n` active nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisySample {
    /// `n × K_cat`.
    pub x: Array2<f64>,
    /// `n × n`, symmetric with zero diagonal.
    pub a: Array2<f64>,
    pub t: f64,
    pub eps_x: Array2<f64>,
    pub eps_a: Array2<f64>,
    pub n_max: usize,
}

impl NoisySample {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    /// `N_max × K_cat` view with zero padding.
    pub fn padded_x(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.n_max, self.x.ncols()));
        out.slice_mut(ndarray::s![..self.n(), ..]).assign(&self.x);
        out
    }

    pub fn padded_a(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.n_max, self.n_max));
        out.slice_mut(ndarray::s![..self.n(), ..self.n()]).assign(&self.a);
        out
    }
}

/// Symmetric noise with zero diagonal, drawn on the strict upper triangle in
/// row-major order.
pub fn symmetric_noise<R: Rng>(n: usize, rng: &mut R) -> Array2<f64> {
    let mut e = Array2::zeros((n, n));
    for i in 0..n {
        for j in i + 1..n {
            let z: f64 = rng.sample(StandardNormal);
            e[[i, j]] = z;
            e[[j, i]] = z;
        }
    }
    e
}

pub fn gaussian_matrix<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.sample(StandardNormal))
}

/// Perturbs `graph` to time `t` with fresh noise.
pub fn perturb<R: Rng>(
    graph: &WalkingGraph,
    k_cat: usize,
    t: f64,
    schedule: &NoiseSchedule,
    rng: &mut R,
) -> Result<NoisySample> {
    let n = graph.n();
    let eps_x = gaussian_matrix(n, k_cat, rng);
    let eps_a = symmetric_noise(n, rng);
    perturb_with_noise(graph, k_cat, t, schedule, eps_x, eps_a)
}

/// Perturbation with caller-supplied noise. `eps_a` must be symmetric with a
/// zero diagonal.
pub fn perturb_with_noise(
    graph: &WalkingGraph,
    k_cat: usize,
    t: f64,
    schedule: &NoiseSchedule,
    eps_x: Array2<f64>,
    eps_a: Array2<f64>,
) -> Result<NoisySample> {
    graph.validate(k_cat)?;
    if !(t > 0.0 && t <= 1.0) {
        return Err(Error::Domain(format!("perturbation time {t} outside (0, 1]")));
    }
    let n = graph.n();
    if eps_x.dim() != (n, k_cat) || eps_a.dim() != (n, n) {
        return Err(Error::Shape(format!(
            "noise shapes {:?}/{:?} for a graph of {n} nodes",
            eps_x.dim(),
            eps_a.dim()
        )));
    }
    let (alpha, sigma) = schedule.marginal_params(t)?;
    let x = graph_x(graph, k_cat) * alpha + &eps_x * sigma;
    let a = graph_a(graph) * alpha + &eps_a * sigma;
    Ok(NoisySample {
        x,
        a,
        t,
        eps_x,
        eps_a,
        n_max: graph.n_max(),
    })
}

/// Active-node one-hot categories, `n × K_cat`.
pub fn graph_x(graph: &WalkingGraph, k_cat: usize) -> Array2<f64> {
    let mut x = Array2::zeros((graph.n(), k_cat));
    for (i, &c) in graph.categories().iter().enumerate() {
        x[[i, c]] = 1.0;
    }
    x
}

/// Active-node adjacency, `n × n`.
pub fn graph_a(graph: &WalkingGraph) -> Array2<f64> {
    let n = graph.n();
    Array2::from_shape_fn((n, n), |(i, j)| f64::from(u8::from(graph.has_edge(i, j))))
}

/// Edges with at least one residence endpoint, `n × n`.
pub fn make_condition_graph(graph: &WalkingGraph, residence: usize) -> Array2<f64> {
    let n = graph.n();
    Array2::from_shape_fn((n, n), |(i, j)| {
        let touches = graph.category(i) == residence || graph.category(j) == residence;
        f64::from(u8::from(touches && graph.has_edge(i, j)))
    })
}

/// Anything that maps a noisy sample to predicted node and edge noise.
pub trait NoisePredictor {
    /// `condition` is `N_max × d` (rows past `n` ignored); `condition_graph` is
    /// `n × n`.
    fn predict(
        &self,
        sample: &NoisySample,
        condition: &Array2<f64>,
        condition_graph: &Array2<f64>,
    ) -> Result<(Array2<f64>, Array2<f64>)>;
}

/// One training item: a clean graph and its conditioning.
#[derive(Debug, Clone, Copy)]
pub struct DiffusionInput<'a> {
    pub graph: &'a WalkingGraph,
    pub condition: &'a Array2<f64>,
    pub condition_graph: &'a Array2<f64>,
}

/// Squared node error plus twice the strict-upper-triangle edge error.
pub fn noise_error(sample: &NoisySample, eps_x_hat: &Array2<f64>, eps_a_hat: &Array2<f64>) -> f64 {
    let node: f64 = (&sample.eps_x - eps_x_hat).iter().map(|d| d * d).sum();
    let n = sample.n();
    let mut edge = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let d = sample.eps_a[[i, j]] - eps_a_hat[[i, j]];
            edge += d * d;
        }
    }
    node + 2.0 * edge
}

/// Uniform time in `(0, 1]`.
pub fn sample_time<R: Rng>(rng: &mut R) -> f64 {
    1.0 - rng.random::<f64>()
}

/// Monte-Carlo ε-matching loss: one time and one noise draw per graph, mean
/// over the batch.
pub fn score_matching_loss<P: NoisePredictor + ?Sized, R: Rng>(
    predictor: &P,
    batch: &[DiffusionInput<'_>],
    k_cat: usize,
    schedule: &NoiseSchedule,
    rng: &mut R,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Degenerate("empty batch".into()));
    }
    let mut total = 0.0;
    for item in batch {
        let t = sample_time(rng);
        let sample = perturb(item.graph, k_cat, t, schedule, rng)?;
        let (ex, ea) = predictor.predict(&sample, item.condition, item.condition_graph)?;
        if ex.dim() != sample.x.dim() || ea.dim() != sample.a.dim() {
            return Err(Error::Shape("predictor output does not match the sample".into()));
        }
        total += noise_error(&sample, &ex, &ea);
    }
    let loss = total / batch.len() as f64;
    if !loss.is_finite() {
        return Err(Error::Training {
            epoch: 0,
            message: format!("score-matching loss is {loss}"),
        });
    }
    Ok(loss)
}
