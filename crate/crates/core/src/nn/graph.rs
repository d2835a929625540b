//! Reverse-mode tape.
//!
//! Every operation appends a node holding its output and whatever it needs
//! for the backward pass. Nodes are created in topological order, so
//! [`Graph::backward`] replays the tape from the output towards the leaves.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::params::ParamStore;
use super::tensor::{gemm, MatView, Real, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Elementwise activations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    /// tanh approximation, `0.5·x·(1 + tanh(√(2/π)·(x + 0.044715·x³)))`.
    Gelu,
    Relu,
}

const GELU_COEFF: f64 = 0.044715;
const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;

enum Op<T> {
    Leaf,
    Linear { x: Var, w: Var, b: Option<Var> },
    MatMul { a: Var, b: Var },
    Add { a: Var, b: Var },
    Conv1d { x: Var, w: Var, b: Var, dilation: usize },
    LayerNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<T>, rstd: Vec<T> },
    Act { x: Var, kind: Activation },
    Prelu { x: Var, a: Var },
    Dropout { x: Var, mask: Vec<T> },
    Attention { x: Var, wq: Var, wk: Var, wv: Var, q: Vec<T>, k: Vec<T>, v: Vec<T>, p: Vec<T> },
    MaxRows { x: Var, argmax: Vec<usize> },
    Embedding { table: Var, indices: Vec<usize> },
    Concat { parts: Vec<Var> },
    NeighborSum { h: Var, neighbors: Vec<Vec<usize>>, scales: Vec<T> },
    Sum { x: Var },
    /// Scalar loss whose gradient w.r.t. `x` was computed in the forward pass.
    Loss { x: Var, grad: Vec<T> },
}

impl<T> Op<T> {
    fn parents(&self) -> Vec<Var> {
        match self {
            Op::Leaf => vec![],
            Op::Linear { x, w, b } => [Some(*x), Some(*w), *b].into_iter().flatten().collect(),
            Op::MatMul { a, b } | Op::Add { a, b } => vec![*a, *b],
            Op::Conv1d { x, w, b, .. } => vec![*x, *w, *b],
            Op::LayerNorm { x, gamma, beta, .. } => vec![*x, *gamma, *beta],
            Op::Act { x, .. } | Op::Dropout { x, .. } | Op::MaxRows { x, .. } | Op::Sum { x } | Op::Loss { x, .. } => {
                vec![*x]
            }
            Op::Prelu { x, a } => vec![*x, *a],
            Op::Attention { x, wq, wk, wv, .. } => vec![*x, *wq, *wk, *wv],
            Op::Embedding { table, .. } => vec![*table],
            Op::Concat { parts } => parts.clone(),
            Op::NeighborSum { h, .. } => vec![*h],
        }
    }
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Parameters of a [`ParamStore`] bound as leaves of one graph.
#[derive(Debug, Clone)]
pub struct ParamVars {
    vars: Vec<Var>,
    index: HashMap<String, usize>,
}

impl ParamVars {
    pub fn get(&self, name: &str) -> Result<Var> {
        self.index
            .get(name)
            .map(|&i| self.vars[i])
            .ok_or_else(|| Error::config(format!("missing parameter `{name}`")))
    }

    pub fn var_of(&self, id: usize) -> Option<Var> {
        self.vars.get(id).copied()
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }
}

/// Gradients of a scalar output w.r.t. every node it depends on.
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Real> Gradients<T> {
    pub fn wrt(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }
}

pub struct Graph<T: Real> {
    nodes: Vec<Node<T>>,
    mode: Mode,
    rng: ChaCha8Rng,
}

fn accumulate<T: Real>(slot: &mut Option<Vec<T>>, delta: Vec<T>) {
    match slot {
        Some(g) => g.iter_mut().zip(delta).for_each(|(a, d)| *a += d),
        None => *slot = Some(delta),
    }
}

fn col_sums<T: Real>(m: &[T], rows: usize, cols: usize) -> Vec<T> {
    let mut out = vec![T::zero(); cols];
    for r in 0..rows {
        for (o, v) in out.iter_mut().zip(&m[r * cols..(r + 1) * cols]) {
            *o += *v;
        }
    }
    out
}

/// Row-wise softmax with max subtraction, in place.
pub fn softmax_rows<T: Real>(m: &mut [T], cols: usize) {
    for row in m.chunks_mut(cols) {
        let max = row.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v = *v / sum;
        }
    }
}

/// `[L, C_in]` → `[L, C_in·K]` patches, column `c·K + k` holding `x[l + (k − K/2)·d, c]`.
fn im2col<T: Real>(x: &[T], len: usize, c_in: usize, kernel: usize, dilation: usize) -> Vec<T> {
    let half = (kernel / 2) as isize;
    let width = c_in * kernel;
    let mut cols = vec![T::zero(); len * width];
    for l in 0..len {
        let row = &mut cols[l * width..(l + 1) * width];
        for k in 0..kernel {
            let src = l as isize + (k as isize - half) * dilation as isize;
            if src < 0 || src >= len as isize {
                continue;
            }
            let xr = &x[src as usize * c_in..(src as usize + 1) * c_in];
            for (c, &v) in xr.iter().enumerate() {
                row[c * kernel + k] = v;
            }
        }
    }
    cols
}

fn col2im<T: Real>(dcols: &[T], len: usize, c_in: usize, kernel: usize, dilation: usize) -> Vec<T> {
    let half = (kernel / 2) as isize;
    let width = c_in * kernel;
    let mut dx = vec![T::zero(); len * c_in];
    for l in 0..len {
        let row = &dcols[l * width..(l + 1) * width];
        for k in 0..kernel {
            let src = l as isize + (k as isize - half) * dilation as isize;
            if src < 0 || src >= len as isize {
                continue;
            }
            let dxr = &mut dx[src as usize * c_in..(src as usize + 1) * c_in];
            for (c, d) in dxr.iter_mut().enumerate() {
                *d += row[c * kernel + k];
            }
        }
    }
    dx
}

impl<T: Real> Graph<T> {
    pub fn new(mode: Mode, seed: u64) -> Self {
        Graph { nodes: Vec::new(), mode, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn data(&self, v: Var) -> &[T] {
        self.nodes[v.0].value.data()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        let parents = op.parents();
        if cfg!(debug_assertions) && parents.iter().all(|p| self.nodes[p.0].value.all_finite()) {
            debug_assert!(value.all_finite(), "non-finite output from finite inputs");
        }
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    /// Non-trainable input.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, requires_grad: false });
        Var(self.nodes.len() - 1)
    }

    /// Trainable leaf.
    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, requires_grad: true });
        Var(self.nodes.len() - 1)
    }

    /// Binds every parameter of `store` as a trainable leaf.
    pub fn bind_params(&mut self, store: &ParamStore<T>) -> ParamVars {
        let mut vars = Vec::with_capacity(store.len());
        let mut index = HashMap::with_capacity(store.len());
        for (i, (name, t)) in store.iter().enumerate() {
            let mut value = t.clone();
            value.grad = None;
            vars.push(self.leaf(value));
            index.insert(name.to_string(), i);
        }
        ParamVars { vars, index }
    }

    /// `y = x·W + b` over the last dimension of `x`; `W` is `[in, out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (xs, ws) = (self.shape(x).to_vec(), self.shape(w).to_vec());
        let inner = *xs.last().unwrap();
        if ws.len() != 2 || ws[0] != inner {
            return Err(Error::shape(format!("linear: input {xs:?} vs weight {ws:?}")));
        }
        let out = ws[1];
        if let Some(b) = b {
            if self.shape(b) != [out] {
                return Err(Error::shape(format!("linear: bias {:?} vs output width {out}", self.shape(b))));
            }
        }
        let n = self.value(x).leading();
        let mut y = vec![T::zero(); n * out];
        if let Some(b) = b {
            let bias = self.data(b);
            for row in y.chunks_mut(out) {
                row.copy_from_slice(bias);
            }
        }
        let beta = if b.is_some() { T::one() } else { T::zero() };
        gemm(T::one(), MatView::new(self.data(x), n, inner), MatView::new(self.data(w), inner, out), beta, &mut y);
        let mut shape = xs;
        *shape.last_mut().unwrap() = out;
        Ok(self.push(Tensor::new(&shape, y)?, Op::Linear { x, w, b }))
    }

    /// Plain matrix product of two 2-D tensors.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::shape(format!("matmul: {sa:?} · {sb:?}")));
        }
        let mut y = vec![T::zero(); sa[0] * sb[1]];
        gemm(T::one(), MatView::new(self.data(a), sa[0], sa[1]), MatView::new(self.data(b), sb[0], sb[1]), T::zero(), &mut y);
        Ok(self.push(Tensor::new(&[sa[0], sb[1]], y)?, Op::MatMul { a, b }))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(format!("add: {:?} + {:?}", self.shape(a), self.shape(b))));
        }
        let y: Vec<T> = self.data(a).iter().zip(self.data(b)).map(|(&p, &q)| p + q).collect();
        let shape = self.shape(a).to_vec();
        Ok(self.push(Tensor::new(&shape, y)?, Op::Add { a, b }))
    }

    /// Same-length dilated cross-correlation.
    ///
    /// `x` is position-major `[L, C_in]`, `w` is `[C_out, C_in, K]` with odd
    /// `K`; output is `[L, C_out]`. Positions outside the sequence read zero.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Var, dilation: usize) -> Result<Var> {
        let (xs, ws) = (self.shape(x).to_vec(), self.shape(w).to_vec());
        if ws.len() != 3 || xs.len() != 2 || ws[1] != xs[1] {
            return Err(Error::shape(format!("conv1d: input {xs:?} vs kernels {ws:?}")));
        }
        let (c_out, c_in, kernel) = (ws[0], ws[1], ws[2]);
        if kernel % 2 == 0 {
            return Err(Error::config(format!("conv1d kernel size must be odd, got {kernel}")));
        }
        if dilation == 0 {
            return Err(Error::config("conv1d dilation must be at least 1"));
        }
        if self.shape(b) != [c_out] {
            return Err(Error::shape(format!("conv1d: bias {:?} vs {c_out} output channels", self.shape(b))));
        }
        let len = xs[0];
        let cols = im2col(self.data(x), len, c_in, kernel, dilation);
        let mut y = vec![T::zero(); len * c_out];
        for row in y.chunks_mut(c_out) {
            row.copy_from_slice(self.data(b));
        }
        let wmat = MatView::new(self.data(w), c_out, c_in * kernel).t();
        gemm(T::one(), MatView::new(&cols, len, c_in * kernel), wmat, T::one(), &mut y);
        Ok(self.push(Tensor::new(&[len, c_out], y)?, Op::Conv1d { x, w, b, dilation }))
    }

    /// Normalises each row over the last dimension (population variance).
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let d = self.value(x).last_dim();
        if self.shape(gamma) != [d] || self.shape(beta) != [d] {
            return Err(Error::shape(format!("layer_norm: width {d} vs gamma {:?}", self.shape(gamma))));
        }
        let eps = T::lit(eps);
        let n = self.value(x).leading();
        let dt = T::lit(d as f64);
        let mut xhat = vec![T::zero(); n * d];
        let mut rstd = vec![T::zero(); n];
        let mut y = vec![T::zero(); n * d];
        let (xv, g, bt) = (self.data(x), self.data(gamma), self.data(beta));
        for r in 0..n {
            let row = &xv[r * d..(r + 1) * d];
            let mean = row.iter().copied().sum::<T>() / dt;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / dt;
            let rs = T::one() / (var + eps).sqrt();
            rstd[r] = rs;
            for j in 0..d {
                let h = (row[j] - mean) * rs;
                xhat[r * d + j] = h;
                y[r * d + j] = h * g[j] + bt[j];
            }
        }
        let shape = self.shape(x).to_vec();
        Ok(self.push(Tensor::new(&shape, y)?, Op::LayerNorm { x, gamma, beta, xhat, rstd }))
    }

    pub fn activation(&mut self, x: Var, kind: Activation) -> Var {
        let data: Vec<T> = match kind {
            Activation::Gelu => self.data(x).iter().map(|&v| gelu(v)).collect(),
            Activation::Relu => self.data(x).iter().map(|&v| v.max(T::zero())).collect(),
        };
        let shape = self.shape(x).to_vec();
        self.push(Tensor::new(&shape, data).expect("same shape"), Op::Act { x, kind })
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        self.activation(x, Activation::Gelu)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.activation(x, Activation::Relu)
    }

    /// Parametric ReLU with a single trainable slope `a` (shape `[1]`).
    pub fn prelu(&mut self, x: Var, a: Var) -> Result<Var> {
        if self.shape(a) != [1] {
            return Err(Error::shape(format!("prelu slope must be [1], got {:?}", self.shape(a))));
        }
        let slope = self.data(a)[0];
        let data: Vec<T> = self.data(x).iter().map(|&v| if v > T::zero() { v } else { slope * v }).collect();
        let shape = self.shape(x).to_vec();
        Ok(self.push(Tensor::new(&shape, data)?, Op::Prelu { x, a }))
    }

    /// Inverted dropout; the identity in eval mode.
    pub fn dropout(&mut self, x: Var, p: f64) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::config(format!("dropout probability {p} outside [0, 1)")));
        }
        if self.mode == Mode::Eval || p == 0.0 {
            return Ok(x);
        }
        let keep = T::lit(1.0 / (1.0 - p));
        let n = self.value(x).len();
        let mask: Vec<T> = (0..n).map(|_| if self.rng.gen::<f64>() >= p { keep } else { T::zero() }).collect();
        let data: Vec<T> = self.data(x).iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        let shape = self.shape(x).to_vec();
        Ok(self.push(Tensor::new(&shape, data)?, Op::Dropout { x, mask }))
    }

    /// Single-head self-attention with residual: `softmax(QKᵀ/√D)·V + x`.
    pub fn self_attention(&mut self, x: Var, wq: Var, wk: Var, wv: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 2 {
            return Err(Error::shape(format!("self_attention expects [L, D], got {xs:?}")));
        }
        let (len, d) = (xs[0], xs[1]);
        for w in [wq, wk, wv] {
            if self.shape(w) != [d, d] {
                return Err(Error::shape(format!("self_attention: projection {:?} vs width {d}", self.shape(w))));
            }
        }
        let xm = MatView::new(self.data(x), len, d);
        let project = |w: &[T]| {
            let mut out = vec![T::zero(); len * d];
            gemm(T::one(), xm, MatView::new(w, d, d), T::zero(), &mut out);
            out
        };
        let q = project(self.data(wq));
        let k = project(self.data(wk));
        let v = project(self.data(wv));
        let scale = T::one() / T::lit(d as f64).sqrt();
        let mut p = vec![T::zero(); len * len];
        gemm(scale, MatView::new(&q, len, d), MatView::new(&k, len, d).t(), T::zero(), &mut p);
        softmax_rows(&mut p, len);
        let mut y = self.data(x).to_vec();
        gemm(T::one(), MatView::new(&p, len, len), MatView::new(&v, len, d), T::one(), &mut y);
        Ok(self.push(Tensor::new(&xs, y)?, Op::Attention { x, wq, wk, wv, q, k, v, p }))
    }

    /// Column-wise maximum over the rows of a 2-D tensor. Ties go to the lowest row.
    pub fn max_rows(&mut self, x: Var) -> Result<Var> {
        let len = self.shape(x)[0];
        self.max_rows_prefix(x, len)
    }

    /// [`max_rows`](Self::max_rows) restricted to the first `rows` rows.
    pub fn max_rows_prefix(&mut self, x: Var, rows: usize) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 2 {
            return Err(Error::shape(format!("max pool expects [L, C], got {xs:?}")));
        }
        if rows == 0 || rows > xs[0] {
            return Err(Error::shape(format!("max pool over {rows} of {} rows", xs[0])));
        }
        let (len, c) = (rows, xs[1]);
        let xv = self.data(x);
        let mut best: Vec<T> = xv[..c].to_vec();
        let mut argmax = vec![0usize; c];
        for l in 1..len {
            for j in 0..c {
                let v = xv[l * c + j];
                if v > best[j] {
                    best[j] = v;
                    argmax[j] = l;
                }
            }
        }
        Ok(self.push(Tensor::new(&[c], best)?, Op::MaxRows { x, argmax }))
    }

    /// Rows of `table` (`[V, D]`) selected by `indices`.
    pub fn embedding(&mut self, table: Var, indices: &[u32]) -> Result<Var> {
        let ts = self.shape(table).to_vec();
        if ts.len() != 2 {
            return Err(Error::shape(format!("embedding table must be 2-D, got {ts:?}")));
        }
        let (vocab, d) = (ts[0], ts[1]);
        let idx: Vec<usize> = indices.iter().map(|&i| i as usize).collect();
        if let Some(&bad) = idx.iter().find(|&&i| i >= vocab) {
            return Err(Error::shape(format!("embedding index {bad} outside vocabulary of {vocab}")));
        }
        let tv = self.data(table);
        let mut out = Vec::with_capacity(idx.len() * d);
        for &i in &idx {
            out.extend_from_slice(&tv[i * d..(i + 1) * d]);
        }
        Ok(self.push(Tensor::new(&[idx.len(), d], out)?, Op::Embedding { table, indices: idx }))
    }

    /// Flattens and concatenates the inputs into one vector.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::shape("concat of nothing"));
        }
        let mut out = Vec::new();
        for &p in parts {
            out.extend_from_slice(self.data(p));
        }
        let n = out.len();
        Ok(self.push(Tensor::new(&[n], out)?, Op::Concat { parts: parts.to_vec() }))
    }

    /// Stacks equally sized inputs as the rows of a `[parts, len]` matrix.
    pub fn stack_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let width = parts.first().map(|&p| self.value(p).len()).ok_or_else(|| Error::shape("stack of nothing"))?;
        if parts.iter().any(|&p| self.value(p).len() != width) {
            return Err(Error::shape("stack_rows needs equally sized inputs"));
        }
        let mut out = Vec::with_capacity(parts.len() * width);
        for &p in parts {
            out.extend_from_slice(self.data(p));
        }
        Ok(self.push(Tensor::new(&[parts.len(), width], out)?, Op::Concat { parts: parts.to_vec() }))
    }

    /// `out[i] = scale · Σ_{j ∈ neighbors[i]} h[j]`, summed in list order.
    ///
    /// With `row_normalize` the scale of row `i` is `1/|neighbors[i]|`,
    /// otherwise 1.
    pub fn neighbor_sum(&mut self, h: Var, neighbors: &[Vec<usize>], row_normalize: bool) -> Result<Var> {
        let hs = self.shape(h).to_vec();
        if hs.len() != 2 || hs[0] != neighbors.len() {
            return Err(Error::shape(format!("neighbor_sum: features {hs:?} vs {} nodes", neighbors.len())));
        }
        let (n, d) = (hs[0], hs[1]);
        if neighbors.iter().flatten().any(|&j| j >= n) {
            return Err(Error::shape("neighbor index out of range"));
        }
        let scales: Vec<T> = neighbors
            .iter()
            .map(|nb| if row_normalize && !nb.is_empty() { T::one() / T::lit(nb.len() as f64) } else { T::one() })
            .collect();
        let hv = self.data(h);
        let mut out = vec![T::zero(); n * d];
        for (i, nbrs) in neighbors.iter().enumerate() {
            let row = &mut out[i * d..(i + 1) * d];
            for &j in nbrs {
                for (o, &v) in row.iter_mut().zip(&hv[j * d..(j + 1) * d]) {
                    *o += v;
                }
            }
            if scales[i] != T::one() {
                row.iter_mut().for_each(|o| *o = *o * scales[i]);
            }
        }
        Ok(self.push(Tensor::new(&hs, out)?, Op::NeighborSum { h, neighbors: neighbors.to_vec(), scales }))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.data(x).iter().copied().sum::<T>();
        self.push(Tensor::scalar(s), Op::Sum { x })
    }

    /// Scalar loss node with a precomputed gradient w.r.t. `x`.
    pub(crate) fn loss_node(&mut self, x: Var, value: T, grad: Vec<T>) -> Result<Var> {
        if grad.len() != self.value(x).len() {
            return Err(Error::shape("loss gradient length"));
        }
        Ok(self.push(Tensor::scalar(value), Op::Loss { x, grad }))
    }

    /// Gradients of the scalar `out` w.r.t. every node it depends on.
    pub fn backward(&self, out: Var) -> Result<Gradients<T>> {
        if self.value(out).len() != 1 {
            return Err(Error::shape(format!("backward needs a scalar output, got {:?}", self.shape(out))));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[out.0] = Some(vec![T::one()]);
        for i in (0..=out.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if node.requires_grad {
                self.backprop_node(node, &g, &mut grads);
            }
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn backprop_node(&self, node: &Node<T>, g: &[T], grads: &mut [Option<Vec<T>>]) {
        match &node.op {
            Op::Leaf => {}
            Op::Linear { x, w, b } => {
                let inner = self.value(*x).last_dim();
                let n = self.value(*x).leading();
                let out = self.value(*w).shape()[1];
                let gm = MatView::new(g, n, out);
                if self.needs(*x) {
                    let mut dx = vec![T::zero(); n * inner];
                    gemm(T::one(), gm, MatView::new(self.data(*w), inner, out).t(), T::zero(), &mut dx);
                    accumulate(&mut grads[x.0], dx);
                }
                if self.needs(*w) {
                    let mut dw = vec![T::zero(); inner * out];
                    gemm(T::one(), MatView::new(self.data(*x), n, inner).t(), gm, T::zero(), &mut dw);
                    accumulate(&mut grads[w.0], dw);
                }
                if let Some(b) = b {
                    if self.needs(*b) {
                        accumulate(&mut grads[b.0], col_sums(g, n, out));
                    }
                }
            }
            Op::MatMul { a, b } => {
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                let (m, k, n) = (sa[0], sa[1], sb[1]);
                let gm = MatView::new(g, m, n);
                if self.needs(*a) {
                    let mut da = vec![T::zero(); m * k];
                    gemm(T::one(), gm, MatView::new(self.data(*b), k, n).t(), T::zero(), &mut da);
                    accumulate(&mut grads[a.0], da);
                }
                if self.needs(*b) {
                    let mut db = vec![T::zero(); k * n];
                    gemm(T::one(), MatView::new(self.data(*a), m, k).t(), gm, T::zero(), &mut db);
                    accumulate(&mut grads[b.0], db);
                }
            }
            Op::Add { a, b } => {
                if self.needs(*a) {
                    accumulate(&mut grads[a.0], g.to_vec());
                }
                if self.needs(*b) {
                    accumulate(&mut grads[b.0], g.to_vec());
                }
            }
            Op::Conv1d { x, w, b, dilation } => {
                let ws = self.shape(*w);
                let (c_out, c_in, kernel) = (ws[0], ws[1], ws[2]);
                let len = self.shape(*x)[0];
                let gm = MatView::new(g, len, c_out);
                let width = c_in * kernel;
                if self.needs(*w) {
                    let cols = im2col(self.data(*x), len, c_in, kernel, *dilation);
                    let mut dw = vec![T::zero(); c_out * width];
                    gemm(T::one(), gm.t(), MatView::new(&cols, len, width), T::zero(), &mut dw);
                    accumulate(&mut grads[w.0], dw);
                }
                if self.needs(*b) {
                    accumulate(&mut grads[b.0], col_sums(g, len, c_out));
                }
                if self.needs(*x) {
                    let mut dcols = vec![T::zero(); len * width];
                    gemm(T::one(), gm, MatView::new(self.data(*w), c_out, width), T::zero(), &mut dcols);
                    accumulate(&mut grads[x.0], col2im(&dcols, len, c_in, kernel, *dilation));
                }
            }
            Op::LayerNorm { x, gamma, beta, xhat, rstd } => {
                let d = self.value(*x).last_dim();
                let n = rstd.len();
                let gam = self.data(*gamma);
                if self.needs(*gamma) {
                    let mut dg = vec![T::zero(); d];
                    for r in 0..n {
                        for j in 0..d {
                            dg[j] += g[r * d + j] * xhat[r * d + j];
                        }
                    }
                    accumulate(&mut grads[gamma.0], dg);
                }
                if self.needs(*beta) {
                    accumulate(&mut grads[beta.0], col_sums(g, n, d));
                }
                if self.needs(*x) {
                    let dt = T::lit(d as f64);
                    let mut dx = vec![T::zero(); n * d];
                    for r in 0..n {
                        let mut mean_dh = T::zero();
                        let mut mean_dh_h = T::zero();
                        for j in 0..d {
                            let dh = g[r * d + j] * gam[j];
                            mean_dh += dh;
                            mean_dh_h += dh * xhat[r * d + j];
                        }
                        mean_dh = mean_dh / dt;
                        mean_dh_h = mean_dh_h / dt;
                        for j in 0..d {
                            let dh = g[r * d + j] * gam[j];
                            dx[r * d + j] = rstd[r] * (dh - mean_dh - xhat[r * d + j] * mean_dh_h);
                        }
                    }
                    accumulate(&mut grads[x.0], dx);
                }
            }
            Op::Act { x, kind } => {
                if self.needs(*x) {
                    let xv = self.data(*x);
                    let dx: Vec<T> = match kind {
                        Activation::Gelu => xv.iter().zip(g).map(|(&v, &gv)| gv * gelu_grad(v)).collect(),
                        Activation::Relu => {
                            xv.iter().zip(g).map(|(&v, &gv)| if v > T::zero() { gv } else { T::zero() }).collect()
                        }
                    };
                    accumulate(&mut grads[x.0], dx);
                }
            }
            Op::Prelu { x, a } => {
                let slope = self.data(*a)[0];
                let xv = self.data(*x);
                if self.needs(*x) {
                    let dx = xv.iter().zip(g).map(|(&v, &gv)| if v > T::zero() { gv } else { slope * gv }).collect();
                    accumulate(&mut grads[x.0], dx);
                }
                if self.needs(*a) {
                    let da = xv.iter().zip(g).filter(|(&v, _)| v <= T::zero()).map(|(&v, &gv)| v * gv).sum::<T>();
                    accumulate(&mut grads[a.0], vec![da]);
                }
            }
            Op::Dropout { x, mask } => {
                if self.needs(*x) {
                    accumulate(&mut grads[x.0], g.iter().zip(mask).map(|(&gv, &m)| gv * m).collect());
                }
            }
            Op::Attention { x, wq, wk, wv, q, k, v, p } => {
                let xs = self.shape(*x);
                let (len, d) = (xs[0], xs[1]);
                let scale = T::one() / T::lit(d as f64).sqrt();
                let gm = MatView::new(g, len, d);
                let pm = MatView::new(p, len, len);
                let xm = MatView::new(self.data(*x), len, d);

                let mut dp = vec![T::zero(); len * len];
                gemm(T::one(), gm, MatView::new(v, len, d).t(), T::zero(), &mut dp);
                let mut dv = vec![T::zero(); len * d];
                gemm(T::one(), pm.t(), gm, T::zero(), &mut dv);
                // softmax backward, folded with the 1/√D logit scale
                for r in 0..len {
                    let prow = &p[r * len..(r + 1) * len];
                    let drow = &mut dp[r * len..(r + 1) * len];
                    let dot = prow.iter().zip(drow.iter()).map(|(&a, &b)| a * b).sum::<T>();
                    for (dv_, &pv) in drow.iter_mut().zip(prow) {
                        *dv_ = pv * (*dv_ - dot) * scale;
                    }
                }
                let ds = MatView::new(&dp, len, len);
                let mut dq = vec![T::zero(); len * d];
                gemm(T::one(), ds, MatView::new(k, len, d), T::zero(), &mut dq);
                let mut dk = vec![T::zero(); len * d];
                gemm(T::one(), ds.t(), MatView::new(q, len, d), T::zero(), &mut dk);

                for (w, dproj) in [(*wq, &dq), (*wk, &dk), (*wv, &dv)] {
                    if self.needs(w) {
                        let mut dw = vec![T::zero(); d * d];
                        gemm(T::one(), xm.t(), MatView::new(dproj, len, d), T::zero(), &mut dw);
                        accumulate(&mut grads[w.0], dw);
                    }
                }
                if self.needs(*x) {
                    let mut dx = g.to_vec();
                    for (w, dproj) in [(*wq, &dq), (*wk, &dk), (*wv, &dv)] {
                        gemm(T::one(), MatView::new(dproj, len, d), MatView::new(self.data(w), d, d).t(), T::one(), &mut dx);
                    }
                    accumulate(&mut grads[x.0], dx);
                }
            }
            Op::MaxRows { x, argmax } => {
                if self.needs(*x) {
                    let c = argmax.len();
                    let mut dx = vec![T::zero(); self.value(*x).len()];
                    for (j, &l) in argmax.iter().enumerate() {
                        dx[l * c + j] = g[j];
                    }
                    accumulate(&mut grads[x.0], dx);
                }
            }
            Op::Embedding { table, indices } => {
                if self.needs(*table) {
                    let d = self.shape(*table)[1];
                    let mut dt = vec![T::zero(); self.value(*table).len()];
                    for (r, &i) in indices.iter().enumerate() {
                        for (o, &gv) in dt[i * d..(i + 1) * d].iter_mut().zip(&g[r * d..(r + 1) * d]) {
                            *o += gv;
                        }
                    }
                    accumulate(&mut grads[table.0], dt);
                }
            }
            Op::Concat { parts } => {
                let mut offset = 0;
                for &p in parts {
                    let n = self.value(p).len();
                    if self.needs(p) {
                        accumulate(&mut grads[p.0], g[offset..offset + n].to_vec());
                    }
                    offset += n;
                }
            }
            Op::NeighborSum { h, neighbors, scales } => {
                if self.needs(*h) {
                    let d = self.shape(*h)[1];
                    let mut dh = vec![T::zero(); self.value(*h).len()];
                    for (i, nbrs) in neighbors.iter().enumerate() {
                        for &j in nbrs {
                            for (o, &gv) in dh[j * d..(j + 1) * d].iter_mut().zip(&g[i * d..(i + 1) * d]) {
                                *o += gv * scales[i];
                            }
                        }
                    }
                    accumulate(&mut grads[h.0], dh);
                }
            }
            Op::Sum { x } => {
                if self.needs(*x) {
                    accumulate(&mut grads[x.0], vec![g[0]; self.value(*x).len()]);
                }
            }
            Op::Loss { x, grad } => {
                if self.needs(*x) {
                    accumulate(&mut grads[x.0], grad.iter().map(|&v| v * g[0]).collect());
                }
            }
        }
    }
}

#[inline]
pub fn gelu<T: Real>(x: T) -> T {
    let c = T::lit(SQRT_2_OVER_PI);
    let u = c * (x + T::lit(GELU_COEFF) * x * x * x);
    T::lit(0.5) * x * (T::one() + u.tanh())
}

#[inline]
pub fn gelu_grad<T: Real>(x: T) -> T {
    let c = T::lit(SQRT_2_OVER_PI);
    let k = T::lit(GELU_COEFF);
    let t = (c * (x + k * x * x * x)).tanh();
    let half = T::lit(0.5);
    half * (T::one() + t) + half * x * (T::one() - t * t) * c * (T::one() + T::lit(3.0) * k * x * x)
}
