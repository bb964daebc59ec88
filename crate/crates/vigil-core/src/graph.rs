//! Reverse-mode automatic differentiation.
//!
//! A [`Graph`] is a linear tape of executed operations. Recording order is
//! topological by construction: every operand of a node precedes it, so the
//! backward sweep is a single reverse pass that visits each node exactly once.
//!
//! Gradients accumulate into per-node buffers. Each `backward` call adds a
//! fresh adjoint pass on top of whatever is already stored; callers zero
//! gradients between steps. Leaves are inserted with [`Graph::leaf`]
//! (constants) or [`Graph::param`] (differentiable).

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Handle to a value recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

struct Node<T> {
    value: Tensor<T>,
    grad: Option<Vec<T>>,
    requires_grad: bool,
    op: Op<T>,
}

enum Op<T> {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// Broadcast a rank-1 bias over the last axis of `x`.
    AddBias { x: Var, bias: Var },
    Scale(Var, T),
    AddScalar(Var),
    Matmul(Var, Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Sum(Var),
    Mean(Var),
    ConcatLast(Vec<Var>),
    TimeSlice { x: Var, t: usize },
    StackTime(Vec<Var>),
    Conv1d { x: Var, kernels: Var, bias: Var },
    GlobalMaxPool { x: Var, argmax: Vec<usize> },
    Embedding { table: Var, ids: Vec<u32>, pad: u32 },
    SoftmaxCrossEntropy {
        logits: Var,
        labels: Vec<u8>,
        weights: Option<Vec<T>>,
        /// Row-major softmax probabilities cached at forward time.
        probs: Vec<T>,
    },
}

/// Tape of differentiable operations over tensors of element type `T`.
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    check_finite: bool,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            check_finite: false,
        }
    }

    /// When enabled, every recorded value is checked for NaN/Inf.
    pub fn set_check_finite(&mut self, on: bool) {
        self.check_finite = on;
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Insert a constant leaf; no gradient will flow into it.
    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.push(value, false, Op::Leaf)
            .expect("leaf insertion cannot fail without finite checks")
    }

    /// Insert a differentiable leaf.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.push(value, true, Op::Leaf)
            .expect("leaf insertion cannot fail without finite checks")
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient of `v`, if backward has run.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.nodes[v.0].grad.as_deref()
    }

    pub fn grad_tensor(&self, v: Var) -> Option<Tensor<T>> {
        let node = &self.nodes[v.0];
        node.grad.as_ref().map(|g| {
            Tensor::new(node.value.shape().to_vec(), g.clone())
                .expect("gradient buffer matches value shape")
        })
    }

    pub fn zero_grads(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    fn push(&mut self, value: Tensor<T>, requires_grad: bool, op: Op<T>) -> Result<Var> {
        if self.check_finite {
            value.validate_finite()?;
        }
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    // ── Elementwise and scalar ops ──────────────────────────────────────

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::shape("add", ta.shape(), tb.shape()));
        }
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(&x, &y)| x + y)
            .collect();
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        let rg = self.any_grad(&[a, b]);
        self.push(out, rg, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::shape("sub", ta.shape(), tb.shape()));
        }
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(&x, &y)| x - y)
            .collect();
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        let rg = self.any_grad(&[a, b]);
        self.push(out, rg, Op::Sub(a, b))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::shape("mul", ta.shape(), tb.shape()));
        }
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(&x, &y)| x * y)
            .collect();
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        let rg = self.any_grad(&[a, b]);
        self.push(out, rg, Op::Mul(a, b))
    }

    pub fn scale(&mut self, x: Var, c: T) -> Result<Var> {
        let out = self.value(x).map(|v| v * c);
        let rg = self.nodes[x.0].requires_grad;
        self.push(out, rg, Op::Scale(x, c))
    }

    pub fn add_scalar(&mut self, x: Var, c: T) -> Result<Var> {
        let out = self.value(x).map(|v| v + c);
        let rg = self.nodes[x.0].requires_grad;
        self.push(out, rg, Op::AddScalar(x))
    }

    /// 1 - x, used for gate complements.
    pub fn one_minus(&mut self, x: Var) -> Result<Var> {
        let neg = self.scale(x, -T::one())?;
        self.add_scalar(neg, T::one())
    }

    /// Broadcast-add a rank-1 bias over the last axis of `x`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (tx, tb) = (self.value(x), self.value(bias));
        let d = *tx.shape().last().unwrap_or(&0);
        if tb.rank() != 1 || tb.shape()[0] != d {
            return Err(Error::shape("add_bias", tx.shape(), tb.shape()));
        }
        let bdata = tb.data();
        let data = tx
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| v + bdata[i % d])
            .collect();
        let out = Tensor::new(tx.shape().to_vec(), data)?;
        let rg = self.any_grad(&[x, bias]);
        self.push(out, rg, Op::AddBias { x, bias })
    }

    // ── Activations ─────────────────────────────────────────────────────

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).map(stable_sigmoid);
        let rg = self.nodes[x.0].requires_grad;
        self.push(out, rg, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).map(|v| v.tanh());
        let rg = self.nodes[x.0].requires_grad;
        self.push(out, rg, Op::Tanh(x))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).map(|v| if v > T::zero() { v } else { T::zero() });
        let rg = self.nodes[x.0].requires_grad;
        self.push(out, rg, Op::Relu(x))
    }

    // ── Reductions ──────────────────────────────────────────────────────

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let mut acc = T::zero();
        for &v in self.value(x).data() {
            acc += v;
        }
        let rg = self.nodes[x.0].requires_grad;
        self.push(Tensor::scalar(acc), rg, Op::Sum(x))
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let n = self.value(x).numel();
        if n == 0 {
            return Err(Error::Contract("mean of an empty tensor".into()));
        }
        let mut acc = T::zero();
        for &v in self.value(x).data() {
            acc += v;
        }
        let rg = self.nodes[x.0].requires_grad;
        self.push(
            Tensor::scalar(acc / T::from_f64(n as f64)),
            rg,
            Op::Mean(x),
        )
    }

    // ── Structural ops ──────────────────────────────────────────────────

    /// Concatenate along the last axis; all leading axes must agree.
    pub fn concat_last(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::Contract("concat_last of zero tensors".into()));
        }
        let first = self.value(parts[0]).shape().to_vec();
        let lead = &first[..first.len() - 1];
        let mut total_last = 0;
        for &p in parts {
            let s = self.value(p).shape();
            if s.len() != first.len() || &s[..s.len() - 1] != lead {
                return Err(Error::shape("concat_last", &first, s));
            }
            total_last += s[s.len() - 1];
        }
        let rows: usize = lead.iter().product();
        let mut data = Vec::with_capacity(rows * total_last);
        for r in 0..rows {
            for &p in parts {
                let t = self.value(p);
                let w = *t.shape().last().unwrap();
                data.extend_from_slice(&t.data()[r * w..(r + 1) * w]);
            }
        }
        let mut shape = lead.to_vec();
        shape.push(total_last);
        let out = Tensor::new(shape, data)?;
        let rg = self.any_grad(parts);
        self.push(out, rg, Op::ConcatLast(parts.to_vec()))
    }

    /// Select timestep `t` of a `[batch, time, chan]` tensor as `[batch, chan]`.
    pub fn time_slice(&mut self, x: Var, t: usize) -> Result<Var> {
        let tx = self.value(x);
        if tx.rank() != 3 {
            return Err(Error::shape("time_slice", tx.shape(), &[t]));
        }
        let (b, steps, c) = (tx.shape()[0], tx.shape()[1], tx.shape()[2]);
        if t >= steps {
            return Err(Error::shape("time_slice", tx.shape(), &[t]));
        }
        let mut data = Vec::with_capacity(b * c);
        for i in 0..b {
            let start = (i * steps + t) * c;
            data.extend_from_slice(&tx.data()[start..start + c]);
        }
        let out = Tensor::new(vec![b, c], data)?;
        let rg = self.nodes[x.0].requires_grad;
        self.push(out, rg, Op::TimeSlice { x, t })
    }

    /// Stack `[batch, chan]` tensors into `[batch, time, chan]`.
    pub fn stack_time(&mut self, steps: &[Var]) -> Result<Var> {
        if steps.is_empty() {
            return Err(Error::Contract("stack_time of zero timesteps".into()));
        }
        let first = self.value(steps[0]).shape().to_vec();
        if first.len() != 2 {
            return Err(Error::shape("stack_time", &first, &[]));
        }
        for &s in steps {
            if self.value(s).shape() != first.as_slice() {
                return Err(Error::shape("stack_time", &first, self.value(s).shape()));
            }
        }
        let (b, c) = (first[0], first[1]);
        let t = steps.len();
        let mut data = vec![T::zero(); b * t * c];
        for (ti, &s) in steps.iter().enumerate() {
            let sd = self.value(s).data();
            for i in 0..b {
                let dst = (i * t + ti) * c;
                data[dst..dst + c].copy_from_slice(&sd[i * c..(i + 1) * c]);
            }
        }
        let out = Tensor::new(vec![b, t, c], data)?;
        let rg = self.any_grad(steps);
        self.push(out, rg, Op::StackTime(steps.to_vec()))
    }

    // ── Linear algebra ──────────────────────────────────────────────────

    /// Matrix product of `[m, k]` and `[k, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rank() != 2 || tb.rank() != 2 || ta.shape()[1] != tb.shape()[0] {
            return Err(Error::shape("matmul", ta.shape(), tb.shape()));
        }
        let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
        let data = mm(ta.data(), tb.data(), m, k, n);
        let out = Tensor::new(vec![m, n], data)?;
        let rg = self.any_grad(&[a, b]);
        self.push(out, rg, Op::Matmul(a, b))
    }

    // ── Neural-network ops ──────────────────────────────────────────────

    /// Valid 1-D convolution over time with per-filter bias.
    ///
    /// `x` is `[batch, time, in_chan]`, `kernels` is
    /// `[filters, width, in_chan]`, `bias` is `[filters]`; the output is
    /// `[batch, time - width + 1, filters]`.
    pub fn conv1d(&mut self, x: Var, kernels: Var, bias: Var) -> Result<Var> {
        let (tx, tk, tb) = (self.value(x), self.value(kernels), self.value(bias));
        if tx.rank() != 3 || tk.rank() != 3 || tx.shape()[2] != tk.shape()[2] {
            return Err(Error::shape("conv1d", tx.shape(), tk.shape()));
        }
        let (b, t, ci) = (tx.shape()[0], tx.shape()[1], tx.shape()[2]);
        let (f, kw) = (tk.shape()[0], tk.shape()[1]);
        if t < kw {
            return Err(Error::shape("conv1d", tx.shape(), tk.shape()));
        }
        if tb.rank() != 1 || tb.shape()[0] != f {
            return Err(Error::shape("conv1d", tk.shape(), tb.shape()));
        }
        let to = t - kw + 1;
        let (xd, kd, bd) = (tx.data(), tk.data(), tb.data());
        let mut out = vec![T::zero(); b * to * f];
        for bi in 0..b {
            for o in 0..to {
                for j in 0..f {
                    let mut acc = bd[j];
                    for dt in 0..kw {
                        let xrow = &xd[(bi * t + o + dt) * ci..(bi * t + o + dt + 1) * ci];
                        let krow = &kd[(j * kw + dt) * ci..(j * kw + dt + 1) * ci];
                        for c in 0..ci {
                            acc += xrow[c] * krow[c];
                        }
                    }
                    out[(bi * to + o) * f + j] = acc;
                }
            }
        }
        let out = Tensor::new(vec![b, to, f], out)?;
        let rg = self.any_grad(&[x, kernels, bias]);
        self.push(out, rg, Op::Conv1d { x, kernels, bias })
    }

    /// Per-channel max over the time axis of `[batch, time, chan]`.
    ///
    /// Gradient is routed to the earliest maximal timestep.
    pub fn global_max_pool(&mut self, x: Var) -> Result<Var> {
        let tx = self.value(x);
        if tx.rank() != 3 || tx.shape()[1] == 0 {
            return Err(Error::shape("global_max_pool", tx.shape(), &[]));
        }
        let (b, t, c) = (tx.shape()[0], tx.shape()[1], tx.shape()[2]);
        let xd = tx.data();
        let mut out = vec![T::zero(); b * c];
        let mut argmax = vec![0usize; b * c];
        for bi in 0..b {
            for ch in 0..c {
                let mut best = xd[(bi * t) * c + ch];
                let mut best_t = 0;
                for ti in 1..t {
                    let v = xd[(bi * t + ti) * c + ch];
                    if v > best {
                        best = v;
                        best_t = ti;
                    }
                }
                out[bi * c + ch] = best;
                argmax[bi * c + ch] = best_t;
            }
        }
        let out = Tensor::new(vec![b, c], out)?;
        let rg = self.nodes[x.0].requires_grad;
        self.push(out, rg, Op::GlobalMaxPool { x, argmax })
    }

    /// Row lookup into an embedding table.
    ///
    /// `ids` is a flat `[batch * seq_len]` id matrix; the output is
    /// `[batch, seq_len, embed_dim]`. Rows equal to `pad` receive no
    /// gradient, keeping the padding row frozen.
    pub fn embedding(&mut self, table: Var, ids: &[u32], seq_len: usize, pad: u32) -> Result<Var> {
        let tt = self.value(table);
        if tt.rank() != 2 {
            return Err(Error::shape("embedding", tt.shape(), &[ids.len(), seq_len]));
        }
        if seq_len == 0 || ids.len() % seq_len != 0 {
            return Err(Error::Contract(format!(
                "embedding: {} ids do not fill rows of width {seq_len}",
                ids.len()
            )));
        }
        let (vocab, dim) = (tt.shape()[0], tt.shape()[1]);
        let batch = ids.len() / seq_len;
        let td = tt.data();
        let mut data = Vec::with_capacity(ids.len() * dim);
        for (pos, &id) in ids.iter().enumerate() {
            let id = id as usize;
            if id >= vocab {
                return Err(Error::Data(format!(
                    "token id {id} out of range for vocabulary of {vocab} at row {}, position {}",
                    pos / seq_len,
                    pos % seq_len
                )));
            }
            data.extend_from_slice(&td[id * dim..(id + 1) * dim]);
        }
        let out = Tensor::new(vec![batch, seq_len, dim], data)?;
        let rg = self.nodes[table.0].requires_grad;
        self.push(
            out,
            rg,
            Op::Embedding {
                table,
                ids: ids.to_vec(),
                pad,
            },
        )
    }

    /// Mean over the batch of `w[label] * (-log softmax(logits)[label])`.
    ///
    /// Numerically stabilized by max subtraction. `weights`, when given,
    /// must hold one positive factor per class.
    pub fn softmax_cross_entropy(
        &mut self,
        logits: Var,
        labels: &[u8],
        weights: Option<&[T]>,
    ) -> Result<Var> {
        let tl = self.value(logits);
        if tl.rank() != 2 {
            return Err(Error::shape("softmax_cross_entropy", tl.shape(), &[labels.len()]));
        }
        let (b, c) = (tl.shape()[0], tl.shape()[1]);
        if labels.len() != b {
            return Err(Error::shape("softmax_cross_entropy", tl.shape(), &[labels.len()]));
        }
        if let Some(w) = weights {
            if w.len() != c {
                return Err(Error::Config(format!(
                    "class weights: expected {c} entries, got {}",
                    w.len()
                )));
            }
            if let Some(bad) = w.iter().find(|v| **v <= T::zero()) {
                return Err(Error::Config(format!(
                    "class weights must be positive, got {bad}"
                )));
            }
        }
        let ld = tl.data();
        let mut probs = vec![T::zero(); b * c];
        let mut loss = T::zero();
        for i in 0..b {
            let y = labels[i] as usize;
            if y >= c {
                return Err(Error::Data(format!(
                    "label {y} out of range for {c} classes at row {i}"
                )));
            }
            let row = &ld[i * c..(i + 1) * c];
            let mut maxv = row[0];
            for &v in &row[1..] {
                if v > maxv {
                    maxv = v;
                }
            }
            let mut denom = T::zero();
            for &v in row {
                denom += (v - maxv).exp();
            }
            let log_denom = denom.ln();
            for (j, &v) in row.iter().enumerate() {
                probs[i * c + j] = (v - maxv - log_denom).exp();
            }
            let w = weights.map_or(T::one(), |w| w[y]);
            loss += w * (log_denom - (row[y] - maxv));
        }
        loss = loss / T::from_f64(b as f64);
        let rg = self.nodes[logits.0].requires_grad;
        self.push(
            Tensor::scalar(loss),
            rg,
            Op::SoftmaxCrossEntropy {
                logits,
                labels: labels.to_vec(),
                weights: weights.map(|w| w.to_vec()),
                probs,
            },
        )
    }

    // ── Backward ────────────────────────────────────────────────────────

    /// Accumulate `d loss / d node` into every `requires_grad` node reachable
    /// from `loss`. Unreachable `requires_grad` leaves receive explicit
    /// zeros, and repeated calls without [`Graph::zero_grads`] add up.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        {
            let lnode = &self.nodes[loss.0];
            if !lnode.value.is_scalar() {
                return Err(Error::Contract(format!(
                    "backward requires a scalar loss, got shape {:?}",
                    lnode.value.shape()
                )));
            }
            if !lnode.requires_grad {
                return Err(Error::Contract(
                    "backward on a value with no differentiable inputs".into(),
                ));
            }
        }
        for n in &mut self.nodes {
            if n.requires_grad && n.grad.is_none() {
                n.grad = Some(vec![T::zero(); n.value.numel()]);
            }
        }
        // Fresh adjoints per call; persistent grads only accumulate the result.
        let mut adj: Vec<Option<Vec<T>>> = Vec::with_capacity(loss.0 + 1);
        adj.resize_with(loss.0 + 1, || None);
        adj[loss.0] = Some(vec![T::one()]);

        for i in (0..=loss.0).rev() {
            let Some(up) = adj[i].take() else { continue };
            {
                let node = &mut self.nodes[i];
                let g = node.grad.as_mut().expect("allocated above");
                for (gi, ui) in g.iter_mut().zip(&up) {
                    *gi += *ui;
                }
            }
            self.propagate(i, &up, &mut adj);
        }
        Ok(())
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn slot<'a>(&self, adj: &'a mut [Option<Vec<T>>], v: Var) -> &'a mut [T] {
        let n = self.nodes[v.0].value.numel();
        adj[v.0].get_or_insert_with(|| vec![T::zero(); n])
    }

    fn propagate(&self, i: usize, up: &[T], adj: &mut [Option<Vec<T>>]) {
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                for &v in &[*a, *b] {
                    if self.wants(v) {
                        let d = self.slot(adj, v);
                        for (di, ui) in d.iter_mut().zip(up) {
                            *di += *ui;
                        }
                    }
                }
            }
            Op::Sub(a, b) => {
                if self.wants(*a) {
                    let d = self.slot(adj, *a);
                    for (di, ui) in d.iter_mut().zip(up) {
                        *di += *ui;
                    }
                }
                if self.wants(*b) {
                    let d = self.slot(adj, *b);
                    for (di, ui) in d.iter_mut().zip(up) {
                        *di -= *ui;
                    }
                }
            }
            Op::Mul(a, b) => {
                if self.wants(*a) {
                    let bd: Vec<T> = self.value(*b).data().to_vec();
                    let d = self.slot(adj, *a);
                    for ((di, ui), bi) in d.iter_mut().zip(up).zip(&bd) {
                        *di += *ui * *bi;
                    }
                }
                if self.wants(*b) {
                    let ad: Vec<T> = self.value(*a).data().to_vec();
                    let d = self.slot(adj, *b);
                    for ((di, ui), ai) in d.iter_mut().zip(up).zip(&ad) {
                        *di += *ui * *ai;
                    }
                }
            }
            Op::AddBias { x, bias } => {
                if self.wants(*x) {
                    let d = self.slot(adj, *x);
                    for (di, ui) in d.iter_mut().zip(up) {
                        *di += *ui;
                    }
                }
                if self.wants(*bias) {
                    let w = self.value(*bias).numel();
                    let d = self.slot(adj, *bias);
                    for (i, ui) in up.iter().enumerate() {
                        d[i % w] += *ui;
                    }
                }
            }
            Op::Scale(x, c) => {
                if self.wants(*x) {
                    let c = *c;
                    let d = self.slot(adj, *x);
                    for (di, ui) in d.iter_mut().zip(up) {
                        *di += *ui * c;
                    }
                }
            }
            Op::AddScalar(x) => {
                if self.wants(*x) {
                    let d = self.slot(adj, *x);
                    for (di, ui) in d.iter_mut().zip(up) {
                        *di += *ui;
                    }
                }
            }
            Op::Matmul(a, b) => {
                let (m, k) = {
                    let s = self.value(*a).shape();
                    (s[0], s[1])
                };
                let n = self.value(*b).shape()[1];
                if self.wants(*a) {
                    // dA = dY · Bᵀ
                    let contrib = mm_nt(up, self.value(*b).data(), m, n, k);
                    let d = self.slot(adj, *a);
                    for (di, ci) in d.iter_mut().zip(&contrib) {
                        *di += *ci;
                    }
                }
                if self.wants(*b) {
                    // dB = Aᵀ · dY
                    let contrib = mm_tn(self.value(*a).data(), up, m, k, n);
                    let d = self.slot(adj, *b);
                    for (di, ci) in d.iter_mut().zip(&contrib) {
                        *di += *ci;
                    }
                }
            }
            Op::Sigmoid(x) => {
                if self.wants(*x) {
                    let s: Vec<T> = self.nodes[i].value.data().to_vec();
                    let d = self.slot(adj, *x);
                    for ((di, ui), si) in d.iter_mut().zip(up).zip(&s) {
                        *di += *ui * *si * (T::one() - *si);
                    }
                }
            }
            Op::Tanh(x) => {
                if self.wants(*x) {
                    let t: Vec<T> = self.nodes[i].value.data().to_vec();
                    let d = self.slot(adj, *x);
                    for ((di, ui), ti) in d.iter_mut().zip(up).zip(&t) {
                        *di += *ui * (T::one() - *ti * *ti);
                    }
                }
            }
            Op::Relu(x) => {
                if self.wants(*x) {
                    let y: Vec<T> = self.nodes[i].value.data().to_vec();
                    let d = self.slot(adj, *x);
                    for ((di, ui), yi) in d.iter_mut().zip(up).zip(&y) {
                        if *yi > T::zero() {
                            *di += *ui;
                        }
                    }
                }
            }
            Op::Sum(x) => {
                if self.wants(*x) {
                    let u = up[0];
                    let d = self.slot(adj, *x);
                    for di in d.iter_mut() {
                        *di += u;
                    }
                }
            }
            Op::Mean(x) => {
                if self.wants(*x) {
                    let n = self.value(*x).numel();
                    let u = up[0] / T::from_f64(n as f64);
                    let d = self.slot(adj, *x);
                    for di in d.iter_mut() {
                        *di += u;
                    }
                }
            }
            Op::ConcatLast(parts) => {
                let widths: Vec<usize> =
                    parts.iter().map(|p| *self.value(*p).shape().last().unwrap()).collect();
                let total: usize = widths.iter().sum();
                let rows = up.len() / total;
                let mut offset = 0;
                for (pi, &p) in parts.iter().enumerate() {
                    let w = widths[pi];
                    if self.wants(p) {
                        let d = self.slot(adj, p);
                        for r in 0..rows {
                            let src = &up[r * total + offset..r * total + offset + w];
                            let dst = &mut d[r * w..(r + 1) * w];
                            for (di, si) in dst.iter_mut().zip(src) {
                                *di += *si;
                            }
                        }
                    }
                    offset += w;
                }
            }
            Op::TimeSlice { x, t } => {
                if self.wants(*x) {
                    let s = self.value(*x).shape();
                    let (b, steps, c) = (s[0], s[1], s[2]);
                    let t = *t;
                    let d = self.slot(adj, *x);
                    for bi in 0..b {
                        let dst = (bi * steps + t) * c;
                        let src = &up[bi * c..(bi + 1) * c];
                        for (j, si) in src.iter().enumerate() {
                            d[dst + j] += *si;
                        }
                    }
                }
            }
            Op::StackTime(steps) => {
                let t = steps.len();
                let (b, c) = {
                    let s = self.value(steps[0]).shape();
                    (s[0], s[1])
                };
                for (ti, &sv) in steps.iter().enumerate() {
                    if self.wants(sv) {
                        let d = self.slot(adj, sv);
                        for bi in 0..b {
                            let src = (bi * t + ti) * c;
                            for j in 0..c {
                                d[bi * c + j] += up[src + j];
                            }
                        }
                    }
                }
            }
            Op::Conv1d { x, kernels, bias } => {
                let (b, t, ci) = {
                    let s = self.value(*x).shape();
                    (s[0], s[1], s[2])
                };
                let (f, kw) = {
                    let s = self.value(*kernels).shape();
                    (s[0], s[1])
                };
                let to = t - kw + 1;
                if self.wants(*x) {
                    let kd: Vec<T> = self.value(*kernels).data().to_vec();
                    let d = self.slot(adj, *x);
                    for bi in 0..b {
                        for o in 0..to {
                            for j in 0..f {
                                let u = up[(bi * to + o) * f + j];
                                for dt in 0..kw {
                                    let xoff = (bi * t + o + dt) * ci;
                                    let koff = (j * kw + dt) * ci;
                                    for c in 0..ci {
                                        d[xoff + c] += u * kd[koff + c];
                                    }
                                }
                            }
                        }
                    }
                }
                if self.wants(*kernels) {
                    let xd: Vec<T> = self.value(*x).data().to_vec();
                    let d = self.slot(adj, *kernels);
                    for bi in 0..b {
                        for o in 0..to {
                            for j in 0..f {
                                let u = up[(bi * to + o) * f + j];
                                for dt in 0..kw {
                                    let xoff = (bi * t + o + dt) * ci;
                                    let koff = (j * kw + dt) * ci;
                                    for c in 0..ci {
                                        d[koff + c] += u * xd[xoff + c];
                                    }
                                }
                            }
                        }
                    }
                }
                if self.wants(*bias) {
                    let d = self.slot(adj, *bias);
                    for bi in 0..b {
                        for o in 0..to {
                            for j in 0..f {
                                d[j] += up[(bi * to + o) * f + j];
                            }
                        }
                    }
                }
            }
            Op::GlobalMaxPool { x, argmax } => {
                if self.wants(*x) {
                    let s = self.value(*x).shape();
                    let (b, t, c) = (s[0], s[1], s[2]);
                    let d = self.slot(adj, *x);
                    for bi in 0..b {
                        for ch in 0..c {
                            let ti = argmax[bi * c + ch];
                            d[(bi * t + ti) * c + ch] += up[bi * c + ch];
                        }
                    }
                }
            }
            Op::Embedding { table, ids, pad } => {
                if self.wants(*table) {
                    let dim = self.value(*table).shape()[1];
                    let d = self.slot(adj, *table);
                    for (pos, &id) in ids.iter().enumerate() {
                        if id == *pad {
                            continue;
                        }
                        let dst = id as usize * dim;
                        let src = &up[pos * dim..(pos + 1) * dim];
                        for (j, si) in src.iter().enumerate() {
                            d[dst + j] += *si;
                        }
                    }
                }
            }
            Op::SoftmaxCrossEntropy {
                logits,
                labels,
                weights,
                probs,
            } => {
                if self.wants(*logits) {
                    let c = self.value(*logits).shape()[1];
                    let b = labels.len();
                    let u = up[0] / T::from_f64(b as f64);
                    let d = self.slot(adj, *logits);
                    for i in 0..b {
                        let y = labels[i] as usize;
                        let w = weights.as_ref().map_or(T::one(), |w| w[y]);
                        for j in 0..c {
                            let indicator = if j == y { T::one() } else { T::zero() };
                            d[i * c + j] += u * w * (probs[i * c + j] - indicator);
                        }
                    }
                }
            }
        }
    }
}

/// Numerically stable logistic function.
fn stable_sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// C[m,n] = A[m,k] · B[k,n]
fn mm<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut c = vec![T::zero(); m * n];
    for i in 0..m {
        for p in 0..k {
            let a_ip = a[i * k + p];
            let brow = &b[p * n..(p + 1) * n];
            let crow = &mut c[i * n..(i + 1) * n];
            for j in 0..n {
                crow[j] += a_ip * brow[j];
            }
        }
    }
    c
}

/// C[m,k] = A[m,n] · B[k,n]ᵀ
fn mm_nt<T: Scalar>(a: &[T], b: &[T], m: usize, n: usize, k: usize) -> Vec<T> {
    let mut c = vec![T::zero(); m * k];
    for i in 0..m {
        let arow = &a[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            let mut acc = T::zero();
            for j in 0..n {
                acc += arow[j] * brow[j];
            }
            c[i * k + p] = acc;
        }
    }
    c
}

/// C[k,n] = A[m,k]ᵀ · B[m,n]
fn mm_tn<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut c = vec![T::zero(); k * n];
    for i in 0..m {
        for p in 0..k {
            let a_ip = a[i * k + p];
            let brow = &b[i * n..(i + 1) * n];
            let crow = &mut c[p * n..(p + 1) * n];
            for j in 0..n {
                crow[j] += a_ip * brow[j];
            }
        }
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn matmul_identity() {
        let mut g = Graph::<f64>::new();
        let i2 = g.leaf(Tensor::from_rows(&[&[1.0, 0.0], &[0.0, 1.0]]));
        let m = g.leaf(Tensor::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]));
        let y = g.matmul(i2, m).unwrap();
        assert_eq!(g.value(y).data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn matmul_hand_computed() {
        // [[1,2]] x [[3],[4]] = [[11]]
        let mut g = Graph::<f64>::new();
        let a = g.leaf(Tensor::from_rows(&[&[1.0, 2.0]]));
        let b = g.leaf(Tensor::from_rows(&[&[3.0], &[4.0]]));
        let y = g.matmul(a, b).unwrap();
        assert_eq!(g.value(y).shape(), &[1, 1]);
        assert_eq!(g.value(y).item(), 11.0);
    }

    #[test]
    fn matmul_zero_annihilates() {
        let mut g = Graph::<f32>::new();
        let z = g.leaf(Tensor::zeros(&[2, 2]));
        let m = g.leaf(Tensor::from_rows(&[&[5.0f32, -1.0, 2.0], &[7.0, 0.5, 3.0]]));
        let y = g.matmul(z, m).unwrap();
        assert!(g.value(y).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn matmul_shape_mismatch_names_both_shapes() {
        let mut g = Graph::<f64>::new();
        let a = g.leaf(Tensor::zeros(&[2, 3]));
        let b = g.leaf(Tensor::zeros(&[4, 2]));
        let err = g.matmul(a, b).unwrap_err().to_string();
        assert!(err.contains("[2, 3]") && err.contains("[4, 2]"), "{err}");
    }

    #[test]
    fn backward_of_sum_of_squares() {
        // loss = sum(x ⊙ x), x = [1,2,3] → grad x = [2,4,6]
        let mut g = Graph::<f64>::new();
        let x = g.param(Tensor::from_vec(vec![1.0, 2.0, 3.0]));
        let sq = g.mul(x, x).unwrap();
        let loss = g.sum(sq).unwrap();
        g.backward(loss).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[2.0, 4.0, 6.0]);
    }

    #[test]
    fn backward_of_matmul_sum() {
        // loss = sum(x·W), x=[[1,1]], W=[[2],[3]] → grad W = [[1],[1]]
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::from_rows(&[&[1.0, 1.0]]));
        let w = g.param(Tensor::from_rows(&[&[2.0], &[3.0]]));
        let y = g.matmul(x, w).unwrap();
        let loss = g.sum(y).unwrap();
        g.backward(loss).unwrap();
        assert_eq!(g.grad(w).unwrap(), &[1.0, 1.0]);
    }

    #[test]
    fn unused_parameter_gets_zero_grad() {
        let mut g = Graph::<f64>::new();
        let x = g.param(Tensor::from_vec(vec![2.0]));
        let y = g.param(Tensor::from_vec(vec![5.0]));
        let loss = g.sum(x).unwrap();
        g.backward(loss).unwrap();
        assert_eq!(g.grad(y).unwrap(), &[0.0]);
    }

    #[test]
    fn backward_rejects_non_scalar_loss() {
        let mut g = Graph::<f64>::new();
        let x = g.param(Tensor::from_vec(vec![1.0, 2.0]));
        let err = g.backward(x).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn grads_accumulate_until_zeroed() {
        let mut g = Graph::<f64>::new();
        let x = g.param(Tensor::from_vec(vec![3.0, -1.0]));
        let sq = g.mul(x, x).unwrap();
        let loss = g.sum(sq).unwrap();
        g.backward(loss).unwrap();
        let first = g.grad(x).unwrap().to_vec();
        g.backward(loss).unwrap();
        let second = g.grad(x).unwrap().to_vec();
        for (a, b) in first.iter().zip(&second) {
            assert_eq!(*b, 2.0 * *a);
        }
        g.zero_grads();
        assert!(g.grad(x).is_none());
    }

    #[test]
    fn shared_input_accumulates_from_both_uses() {
        // loss = sum(x) + sum(x) → grad x = 2 everywhere
        let mut g = Graph::<f64>::new();
        let x = g.param(Tensor::from_vec(vec![1.0, 1.0]));
        let s1 = g.sum(x).unwrap();
        let s2 = g.sum(x).unwrap();
        let loss = g.add(s1, s2).unwrap();
        g.backward(loss).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[2.0, 2.0]);
    }

    #[test]
    fn softmax_ce_uniform_logits() {
        let mut g = Graph::<f64>::new();
        let logits = g.leaf(Tensor::from_rows(&[&[0.0, 0.0, 0.0]]));
        let loss = g.softmax_cross_entropy(logits, &[1], None).unwrap();
        assert!(close(g.value(loss).item(), 3.0f64.ln(), 1e-12));
    }

    #[test]
    fn softmax_ce_saturated_correct() {
        let mut g = Graph::<f64>::new();
        let logits = g.leaf(Tensor::from_rows(&[&[100.0, 0.0, 0.0]]));
        let loss = g.softmax_cross_entropy(logits, &[0], None).unwrap();
        assert!(g.value(loss).item() < 1e-12);
    }

    #[test]
    fn softmax_ce_hand_computed() {
        // logits [1,2,3], label 2 → 0.4076059644
        let mut g = Graph::<f64>::new();
        let logits = g.leaf(Tensor::from_rows(&[&[1.0, 2.0, 3.0]]));
        let loss = g.softmax_cross_entropy(logits, &[2], None).unwrap();
        assert!(close(g.value(loss).item(), 0.4076059644443803, 1e-12));
    }

    #[test]
    fn softmax_ce_label_out_of_range() {
        let mut g = Graph::<f64>::new();
        let logits = g.leaf(Tensor::zeros(&[2, 3]));
        let err = g.softmax_cross_entropy(logits, &[0, 7], None).unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, Error::Data(_)) && msg.contains("row 1"), "{msg}");
    }

    #[test]
    fn softmax_ce_unit_weights_match_unweighted() {
        let mut g = Graph::<f64>::new();
        let logits = g.leaf(Tensor::from_rows(&[&[0.3, -1.2, 0.8], &[2.0, 0.1, -0.4]]));
        let a = g.softmax_cross_entropy(logits, &[2, 0], None).unwrap();
        let ones = [1.0, 1.0, 1.0];
        let b = g.softmax_cross_entropy(logits, &[2, 0], Some(&ones)).unwrap();
        assert_eq!(g.value(a).item(), g.value(b).item());
    }

    #[test]
    fn softmax_ce_rejects_nonpositive_weights() {
        let mut g = Graph::<f64>::new();
        let logits = g.leaf(Tensor::zeros(&[1, 3]));
        let w = [1.0, 0.0, 1.0];
        let err = g.softmax_cross_entropy(logits, &[0], Some(&w)).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn conv1d_sliding_window() {
        // x=[1,2,3,4], kernel [1,0,-1] → [-2,-2]
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::new(vec![1, 4, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let k = g.leaf(Tensor::new(vec![1, 3, 1], vec![1.0, 0.0, -1.0]).unwrap());
        let b = g.leaf(Tensor::from_vec(vec![0.0]));
        let y = g.conv1d(x, k, b).unwrap();
        assert_eq!(g.value(y).shape(), &[1, 2, 1]);
        assert_eq!(g.value(y).data(), &[-2.0, -2.0]);
    }

    #[test]
    fn conv1d_too_short_input() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::zeros(&[1, 2, 1]));
        let k = g.leaf(Tensor::zeros(&[1, 3, 1]));
        let b = g.leaf(Tensor::zeros(&[1]));
        let err = g.conv1d(x, k, b).unwrap_err();
        assert!(matches!(err, Error::Shape { .. }));
    }

    #[test]
    fn max_pool_takes_channel_max() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::new(vec![1, 3, 1], vec![1.0, 9.0, 3.0]).unwrap());
        let y = g.global_max_pool(x).unwrap();
        assert_eq!(g.value(y).data(), &[9.0]);
    }

    #[test]
    fn max_pool_tie_routes_to_earliest() {
        let mut g = Graph::<f64>::new();
        let x = g.param(Tensor::new(vec![1, 3, 1], vec![5.0, 5.0, 1.0]).unwrap());
        let y = g.global_max_pool(x).unwrap();
        let loss = g.sum(y).unwrap();
        g.backward(loss).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn embedding_rejects_out_of_range_id() {
        let mut g = Graph::<f64>::new();
        let table = g.leaf(Tensor::zeros(&[4, 2]));
        let err = g.embedding(table, &[0, 9], 2, 0).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("position 1"), "{msg}");
    }

    #[test]
    fn embedding_pad_rows_receive_no_gradient() {
        let mut g = Graph::<f64>::new();
        let table = g.param(Tensor::from_rows(&[&[0.0, 0.0], &[1.0, 1.0], &[2.0, 2.0]]));
        let y = g.embedding(table, &[0, 2, 2], 3, 0).unwrap();
        let loss = g.sum(y).unwrap();
        g.backward(loss).unwrap();
        let grad = g.grad(table).unwrap();
        assert_eq!(&grad[0..2], &[0.0, 0.0]);
        assert_eq!(&grad[4..6], &[2.0, 2.0]);
    }

    #[test]
    fn concat_and_slice_round_trip_shapes() {
        let mut g = Graph::<f64>::new();
        let a = g.leaf(Tensor::new(vec![2, 2, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let b = g.leaf(Tensor::new(vec![2, 2, 2], vec![5.0; 8]).unwrap());
        let y = g.concat_last(&[a, b]).unwrap();
        assert_eq!(g.value(y).shape(), &[2, 2, 3]);
        let s = g.time_slice(y, 1).unwrap();
        assert_eq!(g.value(s).shape(), &[2, 3]);
        assert_eq!(g.value(s).data(), &[2.0, 5.0, 5.0, 4.0, 5.0, 5.0]);
    }

    #[test]
    fn stack_time_inverts_slices() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::new(vec![2, 3, 2], (0..12).map(f64::from).collect()).unwrap());
        let slices: Vec<Var> = (0..3).map(|t| g.time_slice(x, t).unwrap()).collect();
        let y = g.stack_time(&slices).unwrap();
        assert_eq!(g.value(y).data(), g.value(x).data());
    }

    #[test]
    fn finite_check_mode_rejects_nan() {
        let mut g = Graph::<f32>::new();
        g.set_check_finite(true);
        let a = g.leaf(Tensor::from_vec(vec![1.0f32, f32::MAX]));
        let b = g.leaf(Tensor::from_vec(vec![1.0f32, f32::MAX]));
        // overflow to +inf
        assert!(g.mul(a, b).is_err());
    }
}
