use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use super::kernels;
use super::{ParamId, ParamStore, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Handle to a value recorded in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Sparse weight matrix whose entries are drawn from a shared candidate
/// vector: `w[r][c] = sign[r][c] * candidates[index[r][c]]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HashIndex {
    pub rows: usize,
    pub cols: usize,
    pub index: Vec<u32>,
    pub sign: Vec<i8>,
}

enum Op<T> {
    Leaf,
    Param,
    MatMul { a: Var, b: Var, m: usize, k: usize, n: usize },
    Linear { w: Var, x: Var, b: Option<Var> },
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    ScalarMul { s: Var, v: Var },
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    Concat(Vec<Var>),
    Slice { src: Var, start: usize },
    Reshape(Var),
    Transpose { a: Var, rows: usize, cols: usize },
    Sum(Var),
    Softmax(Var),
    CrossEntropy { logits: Var, target: usize, probs: Vec<T> },
    Embedding { table: Var, row: usize },
    Conv { x: Var, k: Var, b: Var, cols: Vec<T>, c_in: usize, h: usize, w: usize },
    MaxPool { x: Var, argmax: Vec<u32> },
    Lstm { x: Var, h: Var, c: Var, w: Var, b: Var, gates: Vec<T>, tanh_c: Vec<T> },
    Hashed { cand: Var, x: Var, table: Arc<HashIndex> },
}

struct Node<T> {
    value: Tensor<T>,
    grad: Option<Vec<T>>,
    requires_grad: bool,
    op: Op<T>,
}

/// Append-only record of operations; backward replays it in reverse.
///
/// A graph is confined to one thread. Parameters are copied in on first use
/// and their gradients flow back with [`Graph::accumulate_param_grads`].
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    params: Vec<Option<Var>>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            params: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn data(&self, v: Var) -> &[T] {
        self.nodes[v.0].value.data()
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Gradient of `v` after [`Graph::backward`]; `None` when nothing reached it.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.nodes[v.0].grad.as_deref()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.rg(v)
    }

    /// Constant input (no gradient).
    pub fn input(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Free leaf tensor, optionally tracked for gradients.
    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    /// Leaf holding the current value of a parameter (one node per parameter).
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        if id.0 >= self.params.len() {
            self.params.resize(id.0 + 1, None);
        }
        if let Some(v) = self.params[id.0] {
            return v;
        }
        let v = self.push(store.value(id).clone(), Op::Param, true);
        self.params[id.0] = Some(v);
        v
    }

    /// `a[m×k] · b[k×n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::dim("matmul", sa, sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let out = kernels::matmul(self.data(a), self.data(b), m, k, n);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor { shape: vec![m, n], data: out }, Op::MatMul { a, b, m, k, n }, rg))
    }

    /// `w[o×i] · x[i] + b[o]`.
    pub fn linear(&mut self, w: Var, x: Var, b: Option<Var>) -> Result<Var> {
        let sw = self.shape(w);
        if sw.len() != 2 || sw[1] != self.value(x).len() {
            return Err(Error::dim("linear", sw, self.shape(x)));
        }
        let (rows, cols) = (sw[0], sw[1]);
        if let Some(b) = b {
            if self.value(b).len() != rows {
                return Err(Error::dim("linear bias", &[rows], self.shape(b)));
            }
        }
        let out = kernels::matvec(self.data(w), self.data(x), b.map(|b| self.data(b)), rows, cols);
        let rg = self.rg(w) || self.rg(x) || b.is_some_and(|b| self.rg(b));
        Ok(self.push(Tensor { shape: vec![rows], data: out }, Op::Linear { w, x, b }, rg))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::dim(op, self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let data = self.data(a).iter().zip(self.data(b)).map(|(x, y)| *x + *y).collect();
        let shape = self.shape(a).to_vec();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor { shape, data }, Op::Add(a, b), rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let data = self.data(a).iter().zip(self.data(b)).map(|(x, y)| *x * *y).collect();
        let shape = self.shape(a).to_vec();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor { shape, data }, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, factor: T) -> Var {
        let data = self.data(a).iter().map(|x| *x * factor).collect();
        let shape = self.shape(a).to_vec();
        let rg = self.rg(a);
        self.push(Tensor { shape, data }, Op::Scale(a, factor), rg)
    }

    /// `s * v` for a one-element `s`.
    pub fn scalar_mul(&mut self, s: Var, v: Var) -> Result<Var> {
        if self.value(s).len() != 1 {
            return Err(Error::dim("scalar_mul", self.shape(s), &[1]));
        }
        let sv = self.data(s)[0];
        let data = self.data(v).iter().map(|x| *x * sv).collect();
        let shape = self.shape(v).to_vec();
        let rg = self.rg(s) || self.rg(v);
        Ok(self.push(Tensor { shape, data }, Op::ScalarMul { s, v }, rg))
    }

    fn unary(&mut self, a: Var, f: impl Fn(T) -> T, op: Op<T>) -> Var {
        let data = self.data(a).iter().map(|x| f(*x)).collect();
        let shape = self.shape(a).to_vec();
        let rg = self.rg(a);
        self.push(Tensor { shape, data }, op, rg)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.tanh(), Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, kernels::sigmoid, Op::Sigmoid(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |x| if x > T::zero() { x } else { T::zero() }, Op::Relu(a))
    }

    /// Flattening concatenation into a rank-1 tensor.
    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let mut data = Vec::with_capacity(parts.iter().map(|p| self.value(*p).len()).sum());
        for p in parts {
            data.extend_from_slice(self.data(*p));
        }
        let rg = parts.iter().any(|p| self.rg(*p));
        self.push(
            Tensor {
                shape: vec![data.len()],
                data,
            },
            Op::Concat(parts.to_vec()),
            rg,
        )
    }

    /// Rank-1 window `src[start..start + len]` of the flattened source.
    pub fn slice(&mut self, src: Var, start: usize, len: usize) -> Result<Var> {
        let total = self.value(src).len();
        if len == 0 || start + len > total {
            return Err(Error::dim("slice", &[start, start + len], &[total]));
        }
        let data = self.data(src)[start..start + len].to_vec();
        let rg = self.rg(src);
        Ok(self.push(Tensor { shape: vec![len], data }, Op::Slice { src, start }, rg))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(a).clone().reshape(shape)?;
        let rg = self.rg(a);
        Ok(self.push(value, Op::Reshape(a), rg))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let s = self.shape(a);
        if s.len() != 2 {
            return Err(Error::dim("transpose", s, &[0, 0]));
        }
        let (rows, cols) = (s[0], s[1]);
        let src = self.data(a);
        let mut data = vec![T::zero(); rows * cols];
        for r in 0..rows {
            for c in 0..cols {
                data[c * rows + r] = src[r * cols + c];
            }
        }
        let rg = self.rg(a);
        Ok(self.push(Tensor { shape: vec![cols, rows], data }, Op::Transpose { a, rows, cols }, rg))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s: T = self.data(a).iter().copied().sum();
        let rg = self.rg(a);
        self.push(Tensor { shape: vec![1], data: vec![s] }, Op::Sum(a), rg)
    }

    /// Stable softmax over all elements.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let x = self.data(a);
        if x.iter().any(|v| v.is_nan()) {
            return Err(Error::Numeric {
                op: "softmax",
                msg: "NaN input".into(),
            });
        }
        let data = kernels::softmax(x);
        let shape = self.shape(a).to_vec();
        let rg = self.rg(a);
        Ok(self.push(Tensor { shape, data }, Op::Softmax(a), rg))
    }

    /// `-log softmax(logits)[target]` as a one-element tensor.
    pub fn cross_entropy(&mut self, logits: Var, target: usize) -> Result<Var> {
        let x = self.data(logits);
        if target >= x.len() {
            return Err(Error::Index {
                index: target,
                len: x.len(),
            });
        }
        if x.iter().any(|v| v.is_nan()) {
            return Err(Error::Numeric {
                op: "cross_entropy",
                msg: "NaN input".into(),
            });
        }
        let max = x.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = x.iter().map(|v| (*v - max).exp()).sum::<T>().ln() + max;
        let loss = lse - x[target];
        let probs = kernels::softmax(x);
        let rg = self.rg(logits);
        Ok(self.push(
            Tensor {
                shape: vec![1],
                data: vec![loss],
            },
            Op::CrossEntropy { logits, target, probs },
            rg,
        ))
    }

    /// Row `row` of a `[rows × dim]` table.
    pub fn embedding(&mut self, table: Var, row: usize) -> Result<Var> {
        let s = self.shape(table);
        if s.len() != 2 {
            return Err(Error::dim("embedding", s, &[0, 0]));
        }
        if row >= s[0] {
            return Err(Error::Index { index: row, len: s[0] });
        }
        let dim = s[1];
        let data = self.data(table)[row * dim..(row + 1) * dim].to_vec();
        let rg = self.rg(table);
        Ok(self.push(Tensor { shape: vec![dim], data }, Op::Embedding { table, row }, rg))
    }

    /// 3×3 convolution (stride 1, zero padding 1) of `x[c_in×h×w]` with
    /// `k[c_out×c_in×3×3]` plus `b[c_out]`.
    pub fn conv2d(&mut self, x: Var, k: Var, b: Var) -> Result<Var> {
        let (sx, sk) = (self.shape(x), self.shape(k));
        if sx.len() != 3 || sk.len() != 4 || sk[2] != 3 || sk[3] != 3 || sk[1] != sx[0] {
            return Err(Error::dim("conv2d", sx, sk));
        }
        let (c_in, h, w, c_out) = (sx[0], sx[1], sx[2], sk[0]);
        if self.value(b).len() != c_out {
            return Err(Error::dim("conv2d bias", &[c_out], self.shape(b)));
        }
        let (out, cols) = kernels::conv3x3(self.data(x), self.data(k), self.data(b), c_in, c_out, h, w);
        let rg = self.rg(x) || self.rg(k) || self.rg(b);
        let cols = if self.rg(k) { cols } else { Vec::new() };
        Ok(self.push(
            Tensor {
                shape: vec![c_out, h, w],
                data: out,
            },
            Op::Conv { x, k, b, cols, c_in, h, w },
            rg,
        ))
    }

    pub fn maxpool2x2(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x);
        if s.len() != 3 || s[1] % 2 != 0 || s[2] % 2 != 0 || s[1] == 0 || s[2] == 0 {
            return Err(Error::dim("maxpool2x2", s, &[0, 2, 2]));
        }
        let (c, h, w) = (s[0], s[1], s[2]);
        let (out, argmax) = kernels::maxpool2x2(self.data(x), c, h, w);
        let rg = self.rg(x);
        Ok(self.push(
            Tensor {
                shape: vec![c, h / 2, w / 2],
                data: out,
            },
            Op::MaxPool { x, argmax },
            rg,
        ))
    }

    /// One LSTM step with gate order (input, forget, candidate, output).
    ///
    /// `w` is `[4d × (in + d)]` acting on `[x; h]`, `b` is `[4d]`.
    pub fn lstm_step(&mut self, x: Var, h: Var, c: Var, w: Var, b: Var) -> Result<(Var, Var)> {
        let d = self.value(h).len();
        let n_in = self.value(x).len();
        let sw = self.shape(w);
        if self.value(c).len() != d || sw.len() != 2 || sw[0] != 4 * d || sw[1] != n_in + d {
            return Err(Error::dim("lstm_step", sw, &[4 * d, n_in + d]));
        }
        if self.value(b).len() != 4 * d {
            return Err(Error::dim("lstm_step bias", self.shape(b), &[4 * d]));
        }
        let mut xh = Vec::with_capacity(n_in + d);
        xh.extend_from_slice(self.data(x));
        xh.extend_from_slice(self.data(h));
        let mut gates = kernels::matvec(self.data(w), &xh, Some(self.data(b)), 4 * d, n_in + d);
        for (i, z) in gates.iter_mut().enumerate() {
            *z = if i / d == 2 { z.tanh() } else { kernels::sigmoid(*z) };
        }
        let c_prev = self.data(c);
        let mut out = vec![T::zero(); 2 * d];
        let mut tanh_c = vec![T::zero(); d];
        for j in 0..d {
            let (ig, fg, gg, og) = (gates[j], gates[d + j], gates[2 * d + j], gates[3 * d + j]);
            let c_new = fg * c_prev[j] + ig * gg;
            tanh_c[j] = c_new.tanh();
            out[j] = og * tanh_c[j];
            out[d + j] = c_new;
        }
        let rg = [x, h, c, w, b].iter().any(|v| self.rg(*v));
        let joint = self.push(
            Tensor {
                shape: vec![2 * d],
                data: out,
            },
            Op::Lstm { x, h, c, w, b, gates, tanh_c },
            rg,
        );
        let h_new = self.slice(joint, 0, d)?;
        let c_new = self.slice(joint, d, d)?;
        Ok((h_new, c_new))
    }

    /// `y[r] = sum_c sign[r,c] * cand[index[r,c]] * x[c]`.
    pub fn hashed_matvec(&mut self, cand: Var, x: Var, table: &Arc<HashIndex>) -> Result<Var> {
        let n_cand = self.value(cand).len();
        if self.value(x).len() != table.cols {
            return Err(Error::dim("hashed_matvec", self.shape(x), &[table.cols]));
        }
        if table.index.iter().any(|&i| i as usize >= n_cand) {
            return Err(Error::dim("hashed_matvec candidates", &[n_cand], self.shape(cand)));
        }
        let (cv, xv) = (self.data(cand), self.data(x));
        let mut out = vec![T::zero(); table.rows];
        for (r, o) in out.iter_mut().enumerate() {
            let mut acc = T::zero();
            for c in 0..table.cols {
                let e = r * table.cols + c;
                let w = cv[table.index[e] as usize];
                acc += if table.sign[e] > 0 { w * xv[c] } else { -(w * xv[c]) };
            }
            *o = acc;
        }
        let rg = self.rg(cand) || self.rg(x);
        Ok(self.push(
            Tensor {
                shape: vec![table.rows],
                data: out,
            },
            Op::Hashed {
                cand,
                x,
                table: Arc::clone(table),
            },
            rg,
        ))
    }

    /// Clear every gradient recorded in this graph.
    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    /// Reverse-mode sweep from a one-element `loss`.
    ///
    /// Leaf gradients accumulate across calls; intermediate gradients are
    /// consumed.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::Usage(alloc::format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        if !self.rg(loss) {
            return Ok(());
        }
        add_into(&mut self.nodes[loss.0], &[T::one()]);
        for i in (0..=loss.0).rev() {
            let (before, rest) = self.nodes.split_at_mut(i);
            let node = &mut rest[0];
            if matches!(node.op, Op::Leaf | Op::Param) || !node.requires_grad {
                continue;
            }
            let Some(dy) = node.grad.take() else {
                continue;
            };
            propagate(before, node, &dy);
        }
        Ok(())
    }

    /// Add the gradients of every parameter leaf into `store`.
    pub fn accumulate_param_grads(&self, store: &mut ParamStore<T>) {
        for (pid, v) in self.params.iter().enumerate() {
            let Some(v) = v else { continue };
            if let Some(g) = self.grad(*v) {
                store
                    .grad_mut(ParamId(pid))
                    .iter_mut()
                    .zip(g)
                    .for_each(|(a, b)| *a += *b);
            }
        }
    }
}

fn add_into<T: Scalar>(node: &mut Node<T>, delta: &[T]) {
    match &mut node.grad {
        Some(g) => g.iter_mut().zip(delta).for_each(|(a, b)| *a += *b),
        None => node.grad = Some(delta.to_vec()),
    }
}

fn grad_slot<T: Scalar>(node: &mut Node<T>) -> &mut Vec<T> {
    let n = node.value.len();
    node.grad.get_or_insert_with(|| vec![T::zero(); n])
}

fn propagate<T: Scalar>(nodes: &mut [Node<T>], node: &Node<T>, dy: &[T]) {
    let rg = |nodes: &[Node<T>], v: Var| nodes[v.0].requires_grad;
    let y = node.value.data();
    match &node.op {
        Op::Leaf | Op::Param => {}
        Op::MatMul { a, b, m, k, n } => {
            let (m, k, n) = (*m, *k, *n);
            if rg(nodes, *a) {
                // dA = dY · Bᵀ
                let bv = nodes[b.0].value.data().to_vec();
                let ga = grad_slot(&mut nodes[a.0]);
                T::gemm(m, n, k, T::one(), dy, n, 1, &bv, 1, n, T::one(), ga, k, 1);
            }
            if rg(nodes, *b) {
                // dB = Aᵀ · dY
                let av = nodes[a.0].value.data().to_vec();
                let gb = grad_slot(&mut nodes[b.0]);
                T::gemm(k, m, n, T::one(), &av, 1, k, dy, n, 1, T::one(), gb, n, 1);
            }
        }
        Op::Linear { w, x, b } => {
            let cols = nodes[x.0].value.len();
            if rg(nodes, *w) {
                let xv = nodes[x.0].value.data().to_vec();
                let gw = grad_slot(&mut nodes[w.0]);
                for (row, d) in gw.chunks_exact_mut(cols).zip(dy) {
                    if *d != T::zero() {
                        row.iter_mut().zip(&xv).for_each(|(g, xj)| *g += *d * *xj);
                    }
                }
            }
            if rg(nodes, *x) {
                let mut gx = vec![T::zero(); cols];
                for (row, d) in nodes[w.0].value.data().chunks_exact(cols).zip(dy) {
                    gx.iter_mut().zip(row).for_each(|(g, wv)| *g += *d * *wv);
                }
                add_into(&mut nodes[x.0], &gx);
            }
            if let Some(b) = b {
                if rg(nodes, *b) {
                    add_into(&mut nodes[b.0], dy);
                }
            }
        }
        Op::Add(a, b) => {
            for v in [a, b] {
                if rg(nodes, *v) {
                    add_into(&mut nodes[v.0], dy);
                }
            }
        }
        Op::Mul(a, b) => {
            let av = nodes[a.0].value.data().to_vec();
            let bv = nodes[b.0].value.data().to_vec();
            if rg(nodes, *a) {
                let d: Vec<T> = dy.iter().zip(&bv).map(|(g, x)| *g * *x).collect();
                add_into(&mut nodes[a.0], &d);
            }
            if rg(nodes, *b) {
                let d: Vec<T> = dy.iter().zip(&av).map(|(g, x)| *g * *x).collect();
                add_into(&mut nodes[b.0], &d);
            }
        }
        Op::Scale(a, f) => {
            if rg(nodes, *a) {
                let d: Vec<T> = dy.iter().map(|g| *g * *f).collect();
                add_into(&mut nodes[a.0], &d);
            }
        }
        Op::ScalarMul { s, v } => {
            let sv = nodes[s.0].value.data()[0];
            if rg(nodes, *s) {
                let ds: T = dy.iter().zip(nodes[v.0].value.data()).map(|(g, x)| *g * *x).sum();
                add_into(&mut nodes[s.0], &[ds]);
            }
            if rg(nodes, *v) {
                let d: Vec<T> = dy.iter().map(|g| *g * sv).collect();
                add_into(&mut nodes[v.0], &d);
            }
        }
        Op::Tanh(a) => {
            let d: Vec<T> = dy.iter().zip(y).map(|(g, t)| *g * (T::one() - *t * *t)).collect();
            add_into(&mut nodes[a.0], &d);
        }
        Op::Sigmoid(a) => {
            let d: Vec<T> = dy.iter().zip(y).map(|(g, s)| *g * *s * (T::one() - *s)).collect();
            add_into(&mut nodes[a.0], &d);
        }
        Op::Relu(a) => {
            let d: Vec<T> = dy
                .iter()
                .zip(y)
                .map(|(g, v)| if *v > T::zero() { *g } else { T::zero() })
                .collect();
            add_into(&mut nodes[a.0], &d);
        }
        Op::Concat(parts) => {
            let mut off = 0;
            for p in parts {
                let n = nodes[p.0].value.len();
                if rg(nodes, *p) {
                    add_into(&mut nodes[p.0], &dy[off..off + n]);
                }
                off += n;
            }
        }
        Op::Slice { src, start } => {
            let g = grad_slot(&mut nodes[src.0]);
            g[*start..*start + dy.len()]
                .iter_mut()
                .zip(dy)
                .for_each(|(a, b)| *a += *b);
        }
        Op::Reshape(a) => add_into(&mut nodes[a.0], dy),
        Op::Transpose { a, rows, cols } => {
            let (rows, cols) = (*rows, *cols);
            let g = grad_slot(&mut nodes[a.0]);
            for r in 0..rows {
                for c in 0..cols {
                    g[r * cols + c] += dy[c * rows + r];
                }
            }
        }
        Op::Sum(a) => {
            let g = grad_slot(&mut nodes[a.0]);
            g.iter_mut().for_each(|v| *v += dy[0]);
        }
        Op::Softmax(a) => {
            let dot: T = dy.iter().zip(y).map(|(g, p)| *g * *p).sum();
            let d: Vec<T> = dy.iter().zip(y).map(|(g, p)| *p * (*g - dot)).collect();
            add_into(&mut nodes[a.0], &d);
        }
        Op::CrossEntropy { logits, target, probs } => {
            let g = grad_slot(&mut nodes[logits.0]);
            for (i, (gv, p)) in g.iter_mut().zip(probs).enumerate() {
                let onehot = if i == *target { T::one() } else { T::zero() };
                *gv += dy[0] * (*p - onehot);
            }
        }
        Op::Embedding { table, row } => {
            let dim = dy.len();
            let g = grad_slot(&mut nodes[table.0]);
            g[row * dim..(row + 1) * dim]
                .iter_mut()
                .zip(dy)
                .for_each(|(a, b)| *a += *b);
        }
        Op::Conv { x, k, b, cols, c_in, h, w } => {
            let (c_in, h, w) = (*c_in, *h, *w);
            let hw = h * w;
            let c_out = dy.len() / hw;
            if rg(nodes, *b) {
                let db: Vec<T> = dy.chunks_exact(hw).map(|ch| ch.iter().copied().sum()).collect();
                add_into(&mut nodes[b.0], &db);
            }
            if rg(nodes, *k) {
                // dK = dY · colsᵀ
                let gk = grad_slot(&mut nodes[k.0]);
                T::gemm(c_out, hw, c_in * 9, T::one(), dy, hw, 1, cols, 1, hw, T::one(), gk, c_in * 9, 1);
            }
            if rg(nodes, *x) {
                // dcols = Kᵀ · dY
                let mut dcols = vec![T::zero(); c_in * 9 * hw];
                let kv = nodes[k.0].value.data();
                T::gemm(c_in * 9, c_out, hw, T::one(), kv, 1, c_in * 9, dy, hw, 1, T::zero(), &mut dcols, hw, 1);
                let dx = kernels::col2im3x3(&dcols, c_in, h, w);
                add_into(&mut nodes[x.0], &dx);
            }
        }
        Op::MaxPool { x, argmax } => {
            let g = grad_slot(&mut nodes[x.0]);
            for (d, i) in dy.iter().zip(argmax) {
                g[*i as usize] += *d;
            }
        }
        Op::Lstm { x, h, c, w, b, gates, tanh_c } => {
            let d = tanh_c.len();
            let n_in = nodes[x.0].value.len();
            let (dh, dc_ext) = dy.split_at(d);
            let c_prev = nodes[c.0].value.data();
            let mut dz = vec![T::zero(); 4 * d];
            let mut dc_prev = vec![T::zero(); d];
            for j in 0..d {
                let (ig, fg, gg, og) = (gates[j], gates[d + j], gates[2 * d + j], gates[3 * d + j]);
                let tc = tanh_c[j];
                let dc = dc_ext[j] + dh[j] * og * (T::one() - tc * tc);
                let d_o = dh[j] * tc;
                dz[j] = dc * gg * ig * (T::one() - ig);
                dz[d + j] = dc * c_prev[j] * fg * (T::one() - fg);
                dz[2 * d + j] = dc * ig * (T::one() - gg * gg);
                dz[3 * d + j] = d_o * og * (T::one() - og);
                dc_prev[j] = dc * fg;
            }
            if rg(nodes, *c) {
                add_into(&mut nodes[c.0], &dc_prev);
            }
            if rg(nodes, *b) {
                add_into(&mut nodes[b.0], &dz);
            }
            let cols = n_in + d;
            if rg(nodes, *w) {
                let mut xh = Vec::with_capacity(cols);
                xh.extend_from_slice(nodes[x.0].value.data());
                xh.extend_from_slice(nodes[h.0].value.data());
                let gw = grad_slot(&mut nodes[w.0]);
                for (row, dzv) in gw.chunks_exact_mut(cols).zip(&dz) {
                    row.iter_mut().zip(&xh).for_each(|(g, v)| *g += *dzv * *v);
                }
            }
            if rg(nodes, *x) || rg(nodes, *h) {
                let mut dxh = vec![T::zero(); cols];
                for (row, dzv) in nodes[w.0].value.data().chunks_exact(cols).zip(&dz) {
                    dxh.iter_mut().zip(row).for_each(|(g, wv)| *g += *dzv * *wv);
                }
                if rg(nodes, *x) {
                    add_into(&mut nodes[x.0], &dxh[..n_in]);
                }
                if rg(nodes, *h) {
                    add_into(&mut nodes[h.0], &dxh[n_in..]);
                }
            }
        }
        Op::Hashed { cand, x, table } => {
            let xv = nodes[x.0].value.data().to_vec();
            let cv = nodes[cand.0].value.data().to_vec();
            if rg(nodes, *cand) {
                let g = grad_slot(&mut nodes[cand.0]);
                for (r, d) in dy.iter().enumerate() {
                    for (c, xc) in xv.iter().enumerate() {
                        let e = r * table.cols + c;
                        let v = *d * *xc;
                        let slot = &mut g[table.index[e] as usize];
                        if table.sign[e] > 0 {
                            *slot += v;
                        } else {
                            *slot += -v;
                        }
                    }
                }
            }
            if rg(nodes, *x) {
                let mut gx = vec![T::zero(); xv.len()];
                for (r, d) in dy.iter().enumerate() {
                    for (c, g) in gx.iter_mut().enumerate() {
                        let e = r * table.cols + c;
                        let v = *d * cv[table.index[e] as usize];
                        *g += if table.sign[e] > 0 { v } else { -v };
                    }
                }
                add_into(&mut nodes[x.0], &gx);
            }
        }
    }
}
