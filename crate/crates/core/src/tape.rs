//! A small reverse-mode automatic differentiation tape over dense `f64`
//! matrices.
//!
//! Every value is a row-major 2-D matrix. Edge tensors of an `n`-node graph
//! are stored flattened as `n² × c` matrices with row index `i * n + j`,
//! and the pair operations ([`Tape::expand_i`], [`Tape::expand_j`],
//! [`Tape::sum_j`], [`Tape::pair_softmax`], [`Tape::sym_pairs`]) understand
//! that layout.
//!
//! The tape is rebuilt for every forward pass. Parameters enter through
//! [`Tape::param`] and their gradients are collected by index in
//! [`Tape::backward`].

use ndarray::{Array2, Axis};

use crate::nn::ParamSet;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param(usize),
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    MulCol(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Tanh(Var),
    Silu(Var),
    Recip(Var),
    NegXLogX(Var),
    LayerNorm { x: Var, inv_std: Vec<f64> },
    SoftmaxRows(Var),
    PairSoftmax { x: Var, n: usize },
    ExpandI { x: Var, n: usize },
    ExpandJ { x: Var, n: usize },
    SumJ { x: Var, n: usize },
    HeadSum { x: Var, heads: usize },
    HeadExpand { x: Var, width: usize },
    SymPairs { x: Var, n: usize },
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SumAll(Var),
    MeanRows(Var),
    MinOver { x: Var, arg: usize },
}

#[derive(Debug)]
struct Node {
    value: Array2<f64>,
    op: Op,
}

/// Recorded computation graph.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

const LN_EPS: f64 = 1e-5;

fn std_layout(a: Array2<f64>) -> Array2<f64> {
    if a.is_standard_layout() {
        a
    } else {
        a.as_standard_layout().into_owned()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> Var {
        self.nodes.push(Node {
            value: std_layout(value),
            op,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.dim()
    }

    /// Scalar value of a `1 × 1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[[0, 0]]
    }

    /// Constant input; no gradient flows into it.
    pub fn constant(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn param(&mut self, params: &ParamSet, index: usize) -> Var {
        self.push(params.value(index).clone(), Op::Param(index))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).t().as_standard_layout().into_owned();
        self.push(v, Op::Transpose(a))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) - self.value(b);
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) * self.value(b);
        self.push(v, Op::Mul(a, b))
    }

    /// `a + b` with the `1 × c` row `b` broadcast over the rows of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(b).0, 1, "add_row expects a single row");
        let v = self.value(a) + self.value(b);
        self.push(v, Op::AddRow(a, b))
    }

    /// `a ⊙ b` with the `1 × c` row `b` broadcast over the rows of `a`.
    pub fn mul_row(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(b).0, 1, "mul_row expects a single row");
        let v = self.value(a) * self.value(b);
        self.push(v, Op::MulRow(a, b))
    }

    /// `a ⊙ b` with the `m × 1` column `b` broadcast over the columns of `a`.
    pub fn mul_col(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(b).1, 1, "mul_col expects a single column");
        let v = self.value(a) * self.value(b);
        self.push(v, Op::MulCol(a, b))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a) * s;
        self.push(v, Op::Scale(a, s))
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a) + s;
        self.push(v, Op::AddScalar(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    pub fn silu(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| x / (1.0 + (-x).exp()));
        self.push(v, Op::Silu(a))
    }

    pub fn recip(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| 1.0 / x);
        self.push(v, Op::Recip(a))
    }

    /// Elementwise `−x ln x` with `0 · ln 0 := 0`.
    pub fn neg_x_log_x(&mut self, a: Var) -> Var {
        let v = self
            .value(a)
            .mapv(|x| if x > 0.0 { -x * x.ln() } else { 0.0 });
        self.push(v, Op::NegXLogX(a))
    }

    /// Row-wise layer normalization without affine terms.
    pub fn layer_norm(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let (rows, cols) = x.dim();
        let mut out = Array2::zeros((rows, cols));
        let mut inv_std = Vec::with_capacity(rows);
        for (r, row) in x.outer_iter().enumerate() {
            let mean = row.sum() / cols as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
            let inv = 1.0 / (var + LN_EPS).sqrt();
            inv_std.push(inv);
            for (c, v) in row.iter().enumerate() {
                out[[r, c]] = (v - mean) * inv;
            }
        }
        self.push(out, Op::LayerNorm { x: a, inv_std })
    }

    /// Row softmax. Columns with `allowed[c] == false` receive probability
    /// exactly zero.
    pub fn softmax_rows(&mut self, a: Var, allowed: Option<&[bool]>) -> Var {
        let x = self.value(a);
        let (rows, cols) = x.dim();
        let mut out = Array2::zeros((rows, cols));
        for r in 0..rows {
            let ok = |c: usize| allowed.is_none_or(|m| m[c]);
            let max = (0..cols)
                .filter(|&c| ok(c))
                .map(|c| x[[r, c]])
                .fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for c in 0..cols {
                if ok(c) {
                    let e = (x[[r, c]] - max).exp();
                    out[[r, c]] = e;
                    sum += e;
                }
            }
            out.row_mut(r).mapv_inplace(|v| v / sum);
        }
        self.push(out, Op::SoftmaxRows(a))
    }

    /// Softmax over `j` of an `n² × h` matrix of pair scores, separately for
    /// every `(i, head)`.
    pub fn pair_softmax(&mut self, a: Var, n: usize) -> Var {
        let x = self.value(a);
        let heads = x.ncols();
        assert_eq!(x.nrows(), n * n);
        let xs = x.as_slice().expect("standard layout");
        let mut out = vec![0.0; xs.len()];
        for i in 0..n {
            for h in 0..heads {
                let idx = |j: usize| (i * n + j) * heads + h;
                let max = (0..n).map(|j| xs[idx(j)]).fold(f64::NEG_INFINITY, f64::max);
                let mut sum = 0.0;
                for j in 0..n {
                    let e = (xs[idx(j)] - max).exp();
                    out[idx(j)] = e;
                    sum += e;
                }
                for j in 0..n {
                    out[idx(j)] /= sum;
                }
            }
        }
        let v = Array2::from_shape_vec((n * n, heads), out).expect("shape");
        self.push(v, Op::PairSoftmax { x: a, n })
    }

    /// `n × d → n² × d`, row `(i, j)` is row `i` of the input.
    pub fn expand_i(&mut self, a: Var, n: usize) -> Var {
        let x = self.value(a);
        let d = x.ncols();
        assert_eq!(x.nrows(), n);
        let xs = x.as_slice().expect("standard layout");
        let mut out = Vec::with_capacity(n * n * d);
        for i in 0..n {
            let row = &xs[i * d..(i + 1) * d];
            for _ in 0..n {
                out.extend_from_slice(row);
            }
        }
        let v = Array2::from_shape_vec((n * n, d), out).expect("shape");
        self.push(v, Op::ExpandI { x: a, n })
    }

    /// `n × d → n² × d`, row `(i, j)` is row `j` of the input.
    pub fn expand_j(&mut self, a: Var, n: usize) -> Var {
        let x = self.value(a);
        let d = x.ncols();
        assert_eq!(x.nrows(), n);
        let xs = x.as_slice().expect("standard layout");
        let mut out = Vec::with_capacity(n * n * d);
        for _ in 0..n {
            out.extend_from_slice(xs);
        }
        let v = Array2::from_shape_vec((n * n, d), out).expect("shape");
        self.push(v, Op::ExpandJ { x: a, n })
    }

    /// `n² × d → n × d`, summing over `j`.
    pub fn sum_j(&mut self, a: Var, n: usize) -> Var {
        let x = self.value(a);
        let d = x.ncols();
        assert_eq!(x.nrows(), n * n);
        let xs = x.as_slice().expect("standard layout");
        let mut out = vec![0.0; n * d];
        for i in 0..n {
            let acc = &mut out[i * d..(i + 1) * d];
            for j in 0..n {
                let row = &xs[(i * n + j) * d..(i * n + j + 1) * d];
                for (o, v) in acc.iter_mut().zip(row) {
                    *o += v;
                }
            }
        }
        let v = Array2::from_shape_vec((n, d), out).expect("shape");
        self.push(v, Op::SumJ { x: a, n })
    }

    /// Sums each of `heads` contiguous column chunks: `m × d → m × heads`.
    pub fn head_sum(&mut self, a: Var, heads: usize) -> Var {
        let x = self.value(a);
        let (m, d) = x.dim();
        assert_eq!(d % heads, 0);
        let w = d / heads;
        let xs = x.as_slice().expect("standard layout");
        let mut out = vec![0.0; m * heads];
        for r in 0..m {
            for h in 0..heads {
                out[r * heads + h] = xs[r * d + h * w..r * d + (h + 1) * w].iter().sum();
            }
        }
        let v = Array2::from_shape_vec((m, heads), out).expect("shape");
        self.push(v, Op::HeadSum { x: a, heads })
    }

    /// Repeats each column over a chunk: `m × heads → m × width`.
    pub fn head_expand(&mut self, a: Var, width: usize) -> Var {
        let x = self.value(a);
        let (m, heads) = x.dim();
        assert_eq!(width % heads, 0);
        let w = width / heads;
        let xs = x.as_slice().expect("standard layout");
        let mut out = Vec::with_capacity(m * width);
        for r in 0..m {
            for h in 0..heads {
                let v = xs[r * heads + h];
                out.extend(std::iter::repeat_n(v, w));
            }
        }
        let v = Array2::from_shape_vec((m, width), out).expect("shape");
        self.push(v, Op::HeadExpand { x: a, width })
    }

    /// `(x_ij + x_ji) / 2` on an `n² × c` pair matrix.
    pub fn sym_pairs(&mut self, a: Var, n: usize) -> Var {
        let x = self.value(a);
        let c = x.ncols();
        assert_eq!(x.nrows(), n * n);
        let xs = x.as_slice().expect("standard layout");
        let mut out = vec![0.0; xs.len()];
        for i in 0..n {
            for j in 0..n {
                for k in 0..c {
                    out[(i * n + j) * c + k] =
                        0.5 * (xs[(i * n + j) * c + k] + xs[(j * n + i) * c + k]);
                }
            }
        }
        let v = Array2::from_shape_vec((n * n, c), out).expect("shape");
        self.push(v, Op::SymPairs { x: a, n })
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let v = ndarray::concatenate(Axis(1), &views).expect("row counts agree");
        self.push(v, Op::ConcatCols(parts.to_vec()))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let v = ndarray::concatenate(Axis(0), &views).expect("column counts agree");
        self.push(v, Op::ConcatRows(parts.to_vec()))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        self.push(Array2::from_elem((1, 1), s), Op::SumAll(a))
    }

    pub fn mean_rows(&mut self, a: Var) -> Var {
        let v = self
            .value(a)
            .mean_axis(Axis(0))
            .expect("non-empty")
            .insert_axis(Axis(0));
        self.push(v, Op::MeanRows(a))
    }

    /// Minimum of a `1 × c` row over the allowed columns (ties resolve to the
    /// lowest column). Panics if nothing is allowed.
    pub fn min_over(&mut self, a: Var, allowed: &[bool]) -> Var {
        let x = self.value(a);
        assert_eq!(x.nrows(), 1);
        let mut arg = None;
        for c in 0..x.ncols() {
            if allowed[c] && arg.is_none_or(|b: usize| x[[0, c]] < x[[0, b]]) {
                arg = Some(c);
            }
        }
        let arg = arg.expect("at least one allowed column");
        let v = Array2::from_elem((1, 1), x[[0, arg]]);
        self.push(v, Op::MinOver { x: a, arg })
    }

    /// Reverse pass from a `1 × 1` node. Returns one gradient slot per
    /// parameter of the set the tape's params were drawn from; parameters
    /// that did not take part stay `None`.
    pub fn backward(&self, loss: Var, n_params: usize) -> Vec<Option<Array2<f64>>> {
        assert_eq!(self.shape(loss), (1, 1), "backward needs a scalar");
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Array2::ones((1, 1)));
        let mut param_grads: Vec<Option<Array2<f64>>> = vec![None; n_params];

        fn acc(slot: &mut Option<Array2<f64>>, g: Array2<f64>) {
            match slot {
                Some(s) => *s += &g,
                None => *slot = Some(g),
            }
        }

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let g = if g.is_standard_layout() { g } else { g.as_standard_layout().into_owned() };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::Param(p) => acc(&mut param_grads[*p], g),
                Op::MatMul(a, b) => {
                    let ga = g.dot(&self.value(*b).t());
                    let gb = self.value(*a).t().dot(&g);
                    acc(&mut grads[a.0], ga);
                    acc(&mut grads[b.0], gb);
                }
                Op::Transpose(a) => {
                    acc(&mut grads[a.0], g.t().as_standard_layout().into_owned());
                }
                Op::Add(a, b) => {
                    acc(&mut grads[b.0], g.clone());
                    acc(&mut grads[a.0], g);
                }
                Op::Sub(a, b) => {
                    acc(&mut grads[b.0], -&g);
                    acc(&mut grads[a.0], g);
                }
                Op::Mul(a, b) => {
                    let ga = &g * self.value(*b);
                    let gb = &g * self.value(*a);
                    acc(&mut grads[a.0], ga);
                    acc(&mut grads[b.0], gb);
                }
                Op::AddRow(a, b) => {
                    let gb = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    acc(&mut grads[b.0], gb);
                    acc(&mut grads[a.0], g);
                }
                Op::MulRow(a, b) => {
                    let ga = &g * self.value(*b);
                    let gb = (&g * self.value(*a)).sum_axis(Axis(0)).insert_axis(Axis(0));
                    acc(&mut grads[a.0], ga);
                    acc(&mut grads[b.0], gb);
                }
                Op::MulCol(a, b) => {
                    let ga = &g * self.value(*b);
                    let gb = (&g * self.value(*a)).sum_axis(Axis(1)).insert_axis(Axis(1));
                    acc(&mut grads[a.0], ga);
                    acc(&mut grads[b.0], gb);
                }
                Op::Scale(a, s) => acc(&mut grads[a.0], g * *s),
                Op::AddScalar(a) => acc(&mut grads[a.0], g),
                Op::Tanh(a) => {
                    let mut ga = g;
                    ga.zip_mut_with(&node.value, |gv, y| *gv *= 1.0 - y * y);
                    acc(&mut grads[a.0], ga);
                }
                Op::Silu(a) => {
                    let mut ga = g;
                    ga.zip_mut_with(self.value(*a), |gv, &x| {
                        let s = 1.0 / (1.0 + (-x).exp());
                        *gv *= s * (1.0 + x * (1.0 - s));
                    });
                    acc(&mut grads[a.0], ga);
                }
                Op::Recip(a) => {
                    let mut ga = g;
                    ga.zip_mut_with(&node.value, |gv, y| *gv *= -y * y);
                    acc(&mut grads[a.0], ga);
                }
                Op::NegXLogX(a) => {
                    let mut ga = g;
                    ga.zip_mut_with(self.value(*a), |gv, &x| {
                        *gv *= if x > 0.0 { -x.ln() - 1.0 } else { 0.0 };
                    });
                    acc(&mut grads[a.0], ga);
                }
                Op::LayerNorm { x, inv_std } => {
                    let y = &node.value;
                    let cols = y.ncols() as f64;
                    let mut gx = Array2::zeros(y.dim());
                    for r in 0..y.nrows() {
                        let gr = g.row(r);
                        let yr = y.row(r);
                        let mean_g = gr.sum() / cols;
                        let mean_gy = gr.dot(&yr) / cols;
                        for c in 0..y.ncols() {
                            gx[[r, c]] = inv_std[r] * (gr[c] - mean_g - yr[c] * mean_gy);
                        }
                    }
                    acc(&mut grads[x.0], gx);
                }
                Op::SoftmaxRows(a) => {
                    let y = &node.value;
                    let mut gx = Array2::zeros(y.dim());
                    for r in 0..y.nrows() {
                        let dot = g.row(r).dot(&y.row(r));
                        for c in 0..y.ncols() {
                            gx[[r, c]] = y[[r, c]] * (g[[r, c]] - dot);
                        }
                    }
                    acc(&mut grads[a.0], gx);
                }
                Op::PairSoftmax { x, n } => {
                    let n = *n;
                    let y = node.value.as_slice().expect("standard layout");
                    let heads = node.value.ncols();
                    let gs = g.as_slice().expect("standard layout");
                    let mut gx = vec![0.0; y.len()];
                    for i in 0..n {
                        for h in 0..heads {
                            let idx = |j: usize| (i * n + j) * heads + h;
                            let dot: f64 = (0..n).map(|j| gs[idx(j)] * y[idx(j)]).sum();
                            for j in 0..n {
                                gx[idx(j)] = y[idx(j)] * (gs[idx(j)] - dot);
                            }
                        }
                    }
                    let gx = Array2::from_shape_vec(node.value.dim(), gx).expect("shape");
                    acc(&mut grads[x.0], gx);
                }
                Op::ExpandI { x, n } => {
                    let n = *n;
                    let d = g.ncols();
                    let gs = g.as_slice().expect("standard layout");
                    let mut gx = vec![0.0; n * d];
                    for i in 0..n {
                        let out = &mut gx[i * d..(i + 1) * d];
                        for j in 0..n {
                            for (o, v) in out.iter_mut().zip(&gs[(i * n + j) * d..(i * n + j + 1) * d]) {
                                *o += v;
                            }
                        }
                    }
                    acc(&mut grads[x.0], Array2::from_shape_vec((n, d), gx).expect("shape"));
                }
                Op::ExpandJ { x, n } => {
                    let n = *n;
                    let d = g.ncols();
                    let gs = g.as_slice().expect("standard layout");
                    let mut gx = vec![0.0; n * d];
                    for i in 0..n {
                        for (o, v) in gx.iter_mut().zip(&gs[i * n * d..(i + 1) * n * d]) {
                            *o += v;
                        }
                    }
                    acc(&mut grads[x.0], Array2::from_shape_vec((n, d), gx).expect("shape"));
                }
                Op::SumJ { x, n } => {
                    let n = *n;
                    let d = g.ncols();
                    let gs = g.as_slice().expect("standard layout");
                    let mut gx = Vec::with_capacity(n * n * d);
                    for i in 0..n {
                        for _ in 0..n {
                            gx.extend_from_slice(&gs[i * d..(i + 1) * d]);
                        }
                    }
                    acc(&mut grads[x.0], Array2::from_shape_vec((n * n, d), gx).expect("shape"));
                }
                Op::HeadSum { x, heads } => {
                    let (m, d) = self.shape(*x);
                    let w = d / heads;
                    let gs = g.as_slice().expect("standard layout");
                    let mut gx = Vec::with_capacity(m * d);
                    for r in 0..m {
                        for h in 0..*heads {
                            gx.extend(std::iter::repeat_n(gs[r * heads + h], w));
                        }
                    }
                    acc(&mut grads[x.0], Array2::from_shape_vec((m, d), gx).expect("shape"));
                }
                Op::HeadExpand { x, width } => {
                    let (m, heads) = self.shape(*x);
                    let w = width / heads;
                    let gs = g.as_slice().expect("standard layout");
                    let mut gx = vec![0.0; m * heads];
                    for r in 0..m {
                        for h in 0..heads {
                            gx[r * heads + h] =
                                gs[r * width + h * w..r * width + (h + 1) * w].iter().sum();
                        }
                    }
                    acc(&mut grads[x.0], Array2::from_shape_vec((m, heads), gx).expect("shape"));
                }
                Op::SymPairs { x, n } => {
                    let n = *n;
                    let c = g.ncols();
                    let gs = g.as_slice().expect("standard layout");
                    let mut gx = vec![0.0; gs.len()];
                    for i in 0..n {
                        for j in 0..n {
                            for k in 0..c {
                                gx[(i * n + j) * c + k] =
                                    0.5 * (gs[(i * n + j) * c + k] + gs[(j * n + i) * c + k]);
                            }
                        }
                    }
                    acc(&mut grads[x.0], Array2::from_shape_vec(g.dim(), gx).expect("shape"));
                }
                Op::ConcatCols(parts) => {
                    let mut start = 0;
                    for p in parts {
                        let w = self.shape(*p).1;
                        let gp = g.slice(ndarray::s![.., start..start + w]).to_owned();
                        acc(&mut grads[p.0], gp);
                        start += w;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut start = 0;
                    for p in parts {
                        let h = self.shape(*p).0;
                        let gp = g.slice(ndarray::s![start..start + h, ..]).to_owned();
                        acc(&mut grads[p.0], gp);
                        start += h;
                    }
                }
                Op::SumAll(a) => {
                    let s = g[[0, 0]];
                    acc(&mut grads[a.0], Array2::from_elem(self.shape(*a), s));
                }
                Op::MeanRows(a) => {
                    let (rows, _) = self.shape(*a);
                    let row = &g / rows as f64;
                    let ga = row
                        .broadcast(self.shape(*a))
                        .expect("broadcast row")
                        .to_owned();
                    acc(&mut grads[a.0], ga);
                }
                Op::MinOver { x, arg } => {
                    let mut ga = Array2::zeros(self.shape(*x));
                    ga[[0, *arg]] = g[[0, 0]];
                    acc(&mut grads[x.0], ga);
                }
            }
        }
        param_grads
    }
}
