//! Parameter storage, dense layers and the Adam optimizer.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::tape::{Tape, Var};

/// Named, ordered collection of parameter matrices.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    names: Vec<String>,
    values: Vec<Array2<f64>>,
}

impl ParamSet {
    pub fn push(&mut self, name: impl Into<String>, value: Array2<f64>) -> usize {
        self.names.push(name.into());
        self.values.push(value);
        self.values.len() - 1
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, index: usize) -> &Array2<f64> {
        &self.values[index]
    }

    pub fn value_mut(&mut self, index: usize) -> &mut Array2<f64> {
        &mut self.values[index]
    }

    pub fn name(&self, index: usize) -> &str {
        &self.names[index]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.iter().all(|x| x.is_finite()))
    }
}

/// Uniform `±1/√fan_in` initialisation.
pub fn init_uniform<R: Rng>(rng: &mut R, rows: usize, cols: usize, fan_in: usize) -> Array2<f64> {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-bound..bound))
}

/// `x W + b` layer; holds indices into a [`ParamSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Linear {
    pub weight: usize,
    pub bias: Option<usize>,
}

impl Linear {
    pub fn new<R: Rng>(
        params: &mut ParamSet,
        name: &str,
        inputs: usize,
        outputs: usize,
        bias: bool,
        rng: &mut R,
    ) -> Self {
        let weight = params.push(format!("{name}.weight"), init_uniform(rng, inputs, outputs, inputs));
        let bias = bias.then(|| {
            params.push(format!("{name}.bias"), init_uniform(rng, 1, outputs, inputs))
        });
        Self { weight, bias }
    }

    pub fn forward(&self, tape: &mut Tape, params: &ParamSet, x: Var) -> Var {
        let w = tape.param(params, self.weight);
        let y = tape.matmul(x, w);
        match self.bias {
            Some(b) => {
                let b = tape.param(params, b);
                tape.add_row(y, b)
            }
            None => y,
        }
    }
}

/// Layer normalization with learned gain and shift.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerNorm {
    pub gain: usize,
    pub shift: usize,
}

impl LayerNorm {
    pub fn new(params: &mut ParamSet, name: &str, width: usize) -> Self {
        let gain = params.push(format!("{name}.gain"), Array2::ones((1, width)));
        let shift = params.push(format!("{name}.shift"), Array2::zeros((1, width)));
        Self { gain, shift }
    }

    pub fn forward(&self, tape: &mut Tape, params: &ParamSet, x: Var) -> Var {
        let y = tape.layer_norm(x);
        let g = tape.param(params, self.gain);
        let y = tape.mul_row(y, g);
        let s = tape.param(params, self.shift);
        tape.add_row(y, s)
    }
}

/// Two-layer perceptron with SiLU followed by layer normalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedForward {
    pub hidden: Linear,
    pub out: Linear,
    pub norm: LayerNorm,
}

impl FeedForward {
    pub fn new<R: Rng>(params: &mut ParamSet, name: &str, width: usize, rng: &mut R) -> Self {
        Self {
            hidden: Linear::new(params, &format!("{name}.hidden"), width, width, true, rng),
            out: Linear::new(params, &format!("{name}.out"), width, width, true, rng),
            norm: LayerNorm::new(params, &format!("{name}.norm"), width),
        }
    }

    pub fn forward(&self, tape: &mut Tape, params: &ParamSet, x: Var) -> Var {
        let h = self.hidden.forward(tape, params, x);
        let h = tape.silu(h);
        let h = self.out.forward(tape, params, h);
        self.norm.forward(tape, params, h)
    }
}

/// Adam with decoupled weight decay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
    pub step: u64,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
}

impl Adam {
    pub fn new(params: &ParamSet, lr: f64, weight_decay: f64) -> Self {
        let zeros: Vec<_> = (0..params.len())
            .map(|i| Array2::zeros(params.value(i).dim()))
            .collect();
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            clip_norm: None,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// Applies one update. Missing gradients count as zero.
    pub fn update(&mut self, params: &mut ParamSet, grads: &[Option<Array2<f64>>]) {
        assert_eq!(grads.len(), params.len());
        self.step += 1;
        let scale = match self.clip_norm {
            Some(max) => {
                let norm = grads
                    .iter()
                    .flatten()
                    .map(|g| g.iter().map(|x| x * x).sum::<f64>())
                    .sum::<f64>()
                    .sqrt();
                if norm > max { max / norm } else { 1.0 }
            }
            None => 1.0,
        };
        let b1t = 1.0 - self.beta1.powi(self.step as i32);
        let b2t = 1.0 - self.beta2.powi(self.step as i32);
        let (beta1, beta2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        for (i, g) in grads.iter().enumerate() {
            let p = params.value_mut(i);
            if self.weight_decay != 0.0 {
                let decay = lr * self.weight_decay;
                p.mapv_inplace(|x| x - decay * x);
            }
            match g {
                Some(g) => ndarray::Zip::from(p)
                    .and(&mut self.m[i])
                    .and(&mut self.v[i])
                    .and(g)
                    .for_each(|p, m, v, &g| {
                        let g = g * scale;
                        *m = beta1 * *m + (1.0 - beta1) * g;
                        *v = beta2 * *v + (1.0 - beta2) * g * g;
                        *p -= lr * (*m / b1t) / ((*v / b2t).sqrt() + eps);
                    }),
                None => ndarray::Zip::from(p)
                    .and(&mut self.m[i])
                    .and(&mut self.v[i])
                    .for_each(|p, m, v| {
                        *m *= beta1;
                        *v *= beta2;
                        *p -= lr * (*m / b1t) / ((*v / b2t).sqrt() + eps);
                    }),
            }
        }
    }
}
