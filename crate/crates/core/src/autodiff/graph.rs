//! Reverse-mode tape over dense 2-D tensors.
//!
//! Nodes are appended in evaluation order, so the node list is already a
//! topological order and `backward` is a single reverse sweep.

use std::collections::HashMap;
use std::rc::Rc;

use super::params::ParamStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::io::UNLABELED;
use crate::scalar::Scalar;

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// `scale · x + shift`
    Affine(Var, T),
    LeakyRelu(Var, T),
    Sigmoid(Var),
    Log(Var),
    Exp(Var),
    Clamp(Var, T, T),
    ConcatCols(Vec<Var>),
    SliceRows(Var, usize),
    CumsumCols(Var),
    /// Row `i·m + j` = `center[i] + other[edges[i·m + j]]`.
    EdgeGatherAdd {
        center: Var,
        other: Var,
        edges: Rc<Vec<usize>>,
        per_node: usize,
    },
    /// Per column argmax row within each group of consecutive rows.
    GroupMax {
        x: Var,
        argmax: Vec<usize>,
    },
    /// Kernel-major `exp(−γ_j · d²_ik)` expansion.
    RbfExpand {
        sq_dist: Rc<Tensor<T>>,
        gammas: Var,
    },
    SoftmaxCe {
        logits: Var,
        /// Row-wise softmax probabilities.
        probs: Tensor<T>,
        labels: Vec<u32>,
        weights: Option<Vec<T>>,
        norm: T,
    },
    Standardize {
        x: Var,
        xhat: Tensor<T>,
        inv_std: Vec<T>,
    },
    Mean(Var),
    Sum(Var),
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
    param: Option<String>,
}

/// One forward pass worth of recorded operations.
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    params: HashMap<String, Var>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn shape_err(op: &'static str, lhs: (usize, usize), rhs: (usize, usize)) -> Error {
    Error::Shape { op, lhs, rhs }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            params: HashMap::new(),
        }
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

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool, name: &'static str) -> Result<Var> {
        if cfg!(debug_assertions) && !value.is_finite() {
            return Err(Error::NonFinite(format!("output of {name}")));
        }
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            param: None,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Input that receives no gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: false,
            param: None,
        });
        Var(self.nodes.len() - 1)
    }

    /// Leaf bound to a named parameter of `store`. Repeated calls return the same node.
    pub fn param(&mut self, store: &ParamStore<T>, name: &str) -> Result<Var> {
        if let Some(&v) = self.params.get(name) {
            return Ok(v);
        }
        let value = store
            .get(name)
            .ok_or_else(|| Error::Argument(format!("unknown parameter '{name}'")))?
            .clone();
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: true,
            param: Some(name.to_string()),
        });
        let v = Var(self.nodes.len() - 1);
        self.params.insert(name.to_string(), v);
        Ok(v)
    }

    /// Parameter value entered as a constant (frozen for this pass).
    pub fn frozen_param(&mut self, store: &ParamStore<T>, name: &str) -> Result<Var> {
        let value = store
            .get(name)
            .ok_or_else(|| Error::Argument(format!("unknown parameter '{name}'")))?
            .clone();
        Ok(self.constant(value))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(&[a, b]);
        self.push(out, Op::MatMul(a, b), rg, "matmul")
    }

    /// Adds a `1 × cols` row to every row of `x`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (xs, bs) = (self.shape(x), self.shape(bias));
        if bs.0 != 1 || bs.1 != xs.1 {
            return Err(shape_err("add_bias", xs, bs));
        }
        let b = self.value(bias).data().to_vec();
        let mut out = self.value(x).clone();
        for row in out.data_mut().chunks_exact_mut(xs.1.max(1)) {
            for (o, &bv) in row.iter_mut().zip(&b) {
                *o = *o + bv;
            }
        }
        let rg = self.rg(&[x, bias]);
        self.push(out, Op::AddBias(x, bias), rg, "add_bias")
    }

    fn zip_same(&mut self, a: Var, b: Var, name: &'static str, f: impl Fn(T, T) -> T) -> Result<Tensor<T>> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(shape_err(name, sa, sb));
        }
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Tensor::new(sa.0, sa.1, data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same(a, b, "add", |x, y| x + y)?;
        let rg = self.rg(&[a, b]);
        self.push(out, Op::Add(a, b), rg, "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same(a, b, "sub", |x, y| x - y)?;
        let rg = self.rg(&[a, b]);
        self.push(out, Op::Sub(a, b), rg, "sub")
    }

    /// Element-wise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same(a, b, "mul", |x, y| x * y)?;
        let rg = self.rg(&[a, b]);
        self.push(out, Op::Mul(a, b), rg, "mul")
    }

    fn map(&self, x: Var, f: impl Fn(T) -> T) -> Tensor<T> {
        let v = self.value(x);
        Tensor::new(v.rows(), v.cols(), v.data().iter().map(|&a| f(a)).collect()).expect("same shape")
    }

    /// `scale · x + shift`, element-wise.
    pub fn affine(&mut self, x: Var, scale: T, shift: T) -> Result<Var> {
        let out = self.map(x, |a| scale * a + shift);
        let rg = self.rg(&[x]);
        self.push(out, Op::Affine(x, scale), rg, "affine")
    }

    pub fn scale(&mut self, x: Var, s: T) -> Result<Var> {
        self.affine(x, s, T::zero())
    }

    pub fn leaky_relu(&mut self, x: Var, slope: T) -> Result<Var> {
        let out = self.map(x, |a| if a > T::zero() { a } else { slope * a });
        let rg = self.rg(&[x]);
        self.push(out, Op::LeakyRelu(x, slope), rg, "leaky_relu")
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let out = self.map(x, |a| {
            if a >= T::zero() {
                T::one() / (T::one() + (-a).exp())
            } else {
                let e = a.exp();
                e / (T::one() + e)
            }
        });
        let rg = self.rg(&[x]);
        self.push(out, Op::Sigmoid(x), rg, "sigmoid")
    }

    pub fn log(&mut self, x: Var) -> Result<Var> {
        let out = self.map(x, |a| a.ln());
        let rg = self.rg(&[x]);
        self.push(out, Op::Log(x), rg, "log")
    }

    pub fn exp(&mut self, x: Var) -> Result<Var> {
        let out = self.map(x, |a| a.exp());
        let rg = self.rg(&[x]);
        self.push(out, Op::Exp(x), rg, "exp")
    }

    /// Clamps into `[lo, hi]`; gradient passes only where the input is inside.
    pub fn clamp(&mut self, x: Var, lo: T, hi: T) -> Result<Var> {
        if self.value(x).data().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("clamp input".into()));
        }
        let out = self.map(x, |a| a.max(lo).min(hi));
        let rg = self.rg(&[x]);
        self.push(out, Op::Clamp(x, lo, hi), rg, "clamp")
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or_else(|| Error::Argument("concat of nothing".into()))?;
        let rows = self.shape(first).0;
        for &p in parts {
            if self.shape(p).0 != rows {
                return Err(shape_err("concat_cols", self.shape(first), self.shape(p)));
            }
        }
        let cols: usize = parts.iter().map(|&p| self.shape(p).1).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let out = Tensor::new(rows, cols, data)?;
        let rg = self.rg(parts);
        self.push(out, Op::ConcatCols(parts.to_vec()), rg, "concat_cols")
    }

    /// Rows `start..end` of `x`.
    pub fn slice_rows(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let (rows, cols) = self.shape(x);
        if start > end || end > rows {
            return Err(shape_err("slice_rows", (rows, cols), (start, end)));
        }
        let out = Tensor::new(end - start, cols, self.value(x).data()[start * cols..end * cols].to_vec())?;
        let rg = self.rg(&[x]);
        self.push(out, Op::SliceRows(x, start), rg, "slice_rows")
    }

    /// Running sum along each row.
    pub fn cumsum_cols(&mut self, x: Var) -> Result<Var> {
        let mut out = self.value(x).clone();
        let cols = out.cols();
        if cols > 0 {
            for row in out.data_mut().chunks_exact_mut(cols) {
                for c in 1..cols {
                    row[c] = row[c] + row[c - 1];
                }
            }
        }
        let rg = self.rg(&[x]);
        self.push(out, Op::CumsumCols(x), rg, "cumsum_cols")
    }

    /// Builds per-edge rows `center[i] + other[j]` for `j` in node `i`'s edge list.
    ///
    /// `edges` is flattened with exactly `per_node` entries per node.
    pub fn edge_gather_add(&mut self, center: Var, other: Var, edges: Rc<Vec<usize>>, per_node: usize) -> Result<Var> {
        let (sc, so) = (self.shape(center), self.shape(other));
        if sc != so {
            return Err(shape_err("edge_gather_add", sc, so));
        }
        let (n, c) = sc;
        if per_node == 0 || edges.len() != n * per_node {
            return Err(shape_err("edge_gather_add", sc, (edges.len(), per_node)));
        }
        if let Some(&bad) = edges.iter().find(|&&j| j >= n) {
            return Err(Error::Argument(format!("edge target {bad} out of range for {n} nodes")));
        }
        let cv = self.value(center);
        let ov = self.value(other);
        let mut data = Vec::with_capacity(n * per_node * c);
        for i in 0..n {
            let ci = cv.row(i);
            for &j in &edges[i * per_node..(i + 1) * per_node] {
                data.extend(ci.iter().zip(ov.row(j)).map(|(&a, &b)| a + b));
            }
        }
        let out = Tensor::new(n * per_node, c, data)?;
        let rg = self.rg(&[center, other]);
        self.push(
            out,
            Op::EdgeGatherAdd {
                center,
                other,
                edges,
                per_node,
            },
            rg,
            "edge_gather_add",
        )
    }

    /// Reduces each run of `group` consecutive rows to its per-column maximum.
    /// Gradients route to the first maximal row.
    pub fn rowwise_max_over_groups(&mut self, x: Var, group: usize) -> Result<Var> {
        let (rows, cols) = self.shape(x);
        if group == 0 || rows % group != 0 {
            return Err(shape_err("rowwise_max_over_groups", (rows, cols), (group, 0)));
        }
        let xv = self.value(x);
        let n = rows / group;
        let mut out = Tensor::zeros(n, cols);
        let mut argmax = vec![0usize; n * cols];
        for g in 0..n {
            for c in 0..cols {
                let mut best = g * group;
                for r in g * group + 1..(g + 1) * group {
                    if xv.get(r, c) > xv.get(best, c) {
                        best = r;
                    }
                }
                argmax[g * cols + c] = best;
                out.set(g, c, xv.get(best, c));
            }
        }
        let rg = self.rg(&[x]);
        self.push(out, Op::GroupMax { x, argmax }, rg, "rowwise_max_over_groups")
    }

    /// `out[i, j·K + k] = exp(−gammas[j] · sq_dist[i, k])`.
    pub fn rbf_expand(&mut self, sq_dist: Rc<Tensor<T>>, gammas: Var) -> Result<Var> {
        let gs = self.shape(gammas);
        if gs.0 != 1 {
            return Err(shape_err("rbf_expand", sq_dist.shape(), gs));
        }
        let (n, k) = sq_dist.shape();
        let g = self.value(gammas).data().to_vec();
        let mut data = Vec::with_capacity(n * k * g.len());
        for i in 0..n {
            let row = sq_dist.row(i);
            for &gj in &g {
                data.extend(row.iter().map(|&d| (-gj * d).exp()));
            }
        }
        let out = Tensor::new(n, k * g.len(), data)?;
        let rg = self.rg(&[gammas]);
        self.push(out, Op::RbfExpand { sq_dist, gammas }, rg, "rbf_expand")
    }

    /// Mean softmax cross-entropy over rows whose label is not [`UNLABELED`].
    ///
    /// With optional per-class `weights` the mean is weighted. If no row is
    /// labeled the loss is 0 and so are its gradients.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[u32], weights: Option<&[T]>) -> Result<Var> {
        let (rows, cols) = self.shape(logits);
        if labels.len() != rows {
            return Err(shape_err("softmax_cross_entropy", (rows, cols), (labels.len(), 1)));
        }
        if let Some(w) = weights {
            if w.len() != cols {
                return Err(shape_err("softmax_cross_entropy weights", (rows, cols), (1, w.len())));
            }
        }
        let z = self.value(logits);
        let mut probs = Tensor::zeros(rows, cols);
        let mut total = T::zero();
        let mut norm = T::zero();
        for r in 0..rows {
            let row = z.row(r);
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let sum: T = row.iter().fold(T::zero(), |s, &v| s + (v - max).exp());
            let lse = max + sum.ln();
            for c in 0..cols {
                probs.set(r, c, (row[c] - lse).exp());
            }
            let l = labels[r];
            if l == UNLABELED {
                continue;
            }
            if l as usize >= cols {
                return Err(Error::Argument(format!("label {l} out of range for {cols} logits")));
            }
            let w = weights.map_or(T::one(), |w| w[l as usize]);
            total = total + w * (lse - row[l as usize]);
            norm = norm + w;
        }
        let loss = if norm > T::zero() { total / norm } else { T::zero() };
        let rg = self.rg(&[logits]);
        self.push(
            Tensor::scalar(loss),
            Op::SoftmaxCe {
                logits,
                probs,
                labels: labels.to_vec(),
                weights: weights.map(|w| w.to_vec()),
                norm,
            },
            rg,
            "softmax_cross_entropy",
        )
    }

    /// Per-column standardization over rows: `(x − mean) / sqrt(var + eps)`.
    pub fn standardize(&mut self, x: Var, eps: T) -> Result<Var> {
        let (rows, cols) = self.shape(x);
        let xv = self.value(x);
        let n = T::from_usize_lossy(rows.max(1));
        let mut xhat = Tensor::zeros(rows, cols);
        let mut inv_std = vec![T::zero(); cols];
        for c in 0..cols {
            let mean = (0..rows).fold(T::zero(), |s, r| s + xv.get(r, c)) / n;
            let var = (0..rows).fold(T::zero(), |s, r| {
                let d = xv.get(r, c) - mean;
                s + d * d
            }) / n;
            let is = T::one() / (var + eps).sqrt();
            inv_std[c] = is;
            for r in 0..rows {
                xhat.set(r, c, (xv.get(r, c) - mean) * is);
            }
        }
        let rg = self.rg(&[x]);
        self.push(xhat.clone(), Op::Standardize { x, xhat, inv_std }, rg, "standardize")
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x);
        if v.is_empty() {
            return Err(Error::Argument("mean of empty tensor".into()));
        }
        let m = v.data().iter().fold(T::zero(), |s, &a| s + a) / T::from_usize_lossy(v.len());
        let rg = self.rg(&[x]);
        self.push(Tensor::scalar(m), Op::Mean(x), rg, "mean")
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).data().iter().fold(T::zero(), |s, &a| s + a);
        let rg = self.rg(&[x]);
        self.push(Tensor::scalar(s), Op::Sum(x), rg, "sum")
    }

    /// Propagates d`loss` to every parameter leaf and adds it into `store`'s gradients.
    ///
    /// Gradients accumulate across calls until [`ParamStore::zero_grad`].
    pub fn backward(&self, loss: Var, store: &mut ParamStore<T>) -> Result<()> {
        let grads = self.gradients(loss)?;
        for (node, grad) in self.nodes.iter().zip(grads) {
            if let (Some(name), Some(g)) = (&node.param, grad) {
                store.accumulate_grad(name, &g)?;
            }
        }
        Ok(())
    }

    /// Gradient of `loss` with respect to every node (None where unreachable).
    pub fn gradients(&self, loss: Var) -> Result<Vec<Option<Tensor<T>>>> {
        if self.shape(loss) != (1, 1) {
            return Err(Error::Argument(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(T::one()));
        for id in (0..=loss.0).rev() {
            let Some(gout) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            if node.requires_grad {
                self.backprop_node(node, &gout, &mut grads);
            }
            grads[id] = Some(gout);
        }
        Ok(grads)
    }

    fn acc(&self, grads: &mut [Option<Tensor<T>>], v: Var, f: impl FnOnce(&mut Tensor<T>)) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        let (r, c) = self.shape(v);
        let g = grads[v.0].get_or_insert_with(|| Tensor::zeros(r, c));
        f(g);
    }

    fn backprop_node(&self, node: &Node<T>, gout: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        let add_into = |g: &mut Tensor<T>, src: &[T]| {
            for (a, &b) in g.data_mut().iter_mut().zip(src) {
                *a = *a + b;
            }
        };
        let elementwise = |grads: &mut [Option<Tensor<T>>], x: Var, f: &dyn Fn(usize, T) -> T| {
            self.acc(grads, x, |g| {
                for (i, (a, &d)) in g.data_mut().iter_mut().zip(gout.data()).enumerate() {
                    *a = *a + f(i, d);
                }
            });
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k, n) = (av.rows(), av.cols(), bv.cols());
                self.acc(grads, *a, |g| T::gemm_nt_acc(m, n, k, gout.data(), bv.data(), g.data_mut()));
                self.acc(grads, *b, |g| T::gemm_tn_acc(k, m, n, av.data(), gout.data(), g.data_mut()));
            }
            Op::AddBias(x, bias) => {
                self.acc(grads, *x, |g| add_into(g, gout.data()));
                let cols = gout.cols();
                self.acc(grads, *bias, |g| {
                    if cols == 0 {
                        return;
                    }
                    for row in gout.data().chunks_exact(cols) {
                        add_into(g, row);
                    }
                });
            }
            Op::Add(a, b) => {
                self.acc(grads, *a, |g| add_into(g, gout.data()));
                self.acc(grads, *b, |g| add_into(g, gout.data()));
            }
            Op::Sub(a, b) => {
                self.acc(grads, *a, |g| add_into(g, gout.data()));
                elementwise(grads, *b, &|_, d| -d);
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                elementwise(grads, *a, &|i, d| d * bv[i]);
                elementwise(grads, *b, &|i, d| d * av[i]);
            }
            Op::Affine(x, s) => elementwise(grads, *x, &|_, d| *s * d),
            Op::LeakyRelu(x, slope) => {
                let xv = self.value(*x).data();
                elementwise(grads, *x, &|i, d| if xv[i] > T::zero() { d } else { *slope * d });
            }
            Op::Sigmoid(x) => {
                let y = node.value.data();
                elementwise(grads, *x, &|i, d| d * y[i] * (T::one() - y[i]));
            }
            Op::Log(x) => {
                let xv = self.value(*x).data();
                elementwise(grads, *x, &|i, d| d / xv[i]);
            }
            Op::Exp(x) => {
                let y = node.value.data();
                elementwise(grads, *x, &|i, d| d * y[i]);
            }
            Op::Clamp(x, lo, hi) => {
                let xv = self.value(*x).data();
                elementwise(grads, *x, &|i, d| if xv[i] >= *lo && xv[i] <= *hi { d } else { T::zero() });
            }
            Op::ConcatCols(parts) => {
                let rows = gout.rows();
                let mut offset = 0;
                for &p in parts {
                    let pc = self.shape(p).1;
                    self.acc(grads, p, |g| {
                        for r in 0..rows {
                            let src = &gout.row(r)[offset..offset + pc];
                            for (a, &b) in g.data_mut()[r * pc..(r + 1) * pc].iter_mut().zip(src) {
                                *a = *a + b;
                            }
                        }
                    });
                    offset += pc;
                }
            }
            Op::SliceRows(x, start) => {
                let cols = gout.cols();
                let start = *start;
                self.acc(grads, *x, |g| {
                    let dst = &mut g.data_mut()[start * cols..start * cols + gout.len()];
                    for (a, &b) in dst.iter_mut().zip(gout.data()) {
                        *a = *a + b;
                    }
                });
            }
            Op::CumsumCols(x) => {
                let cols = gout.cols();
                self.acc(grads, *x, |g| {
                    for (grow, orow) in g.data_mut().chunks_exact_mut(cols).zip(gout.data().chunks_exact(cols)) {
                        let mut running = T::zero();
                        for c in (0..cols).rev() {
                            running = running + orow[c];
                            grow[c] = grow[c] + running;
                        }
                    }
                });
            }
            Op::EdgeGatherAdd {
                center,
                other,
                edges,
                per_node,
            } => {
                let cols = gout.cols();
                let n = self.shape(*center).0;
                self.acc(grads, *center, |g| {
                    for i in 0..n {
                        let dst = &mut g.data_mut()[i * cols..(i + 1) * cols];
                        for e in 0..*per_node {
                            for (a, &b) in dst.iter_mut().zip(gout.row(i * per_node + e)) {
                                *a = *a + b;
                            }
                        }
                    }
                });
                self.acc(grads, *other, |g| {
                    for (row, &j) in edges.iter().enumerate() {
                        let dst = &mut g.data_mut()[j * cols..(j + 1) * cols];
                        for (a, &b) in dst.iter_mut().zip(gout.row(row)) {
                            *a = *a + b;
                        }
                    }
                });
            }
            Op::GroupMax { x, argmax, .. } => {
                let cols = gout.cols();
                self.acc(grads, *x, |g| {
                    for (k, &src_row) in argmax.iter().enumerate() {
                        let c = k % cols;
                        let v = g.get(src_row, c) + gout.data()[k];
                        g.set(src_row, c, v);
                    }
                });
            }
            Op::RbfExpand { sq_dist, gammas } => {
                let (n, k) = sq_dist.shape();
                let j = self.shape(*gammas).1;
                let y = &node.value;
                self.acc(grads, *gammas, |g| {
                    for i in 0..n {
                        for jj in 0..j {
                            let mut s = T::zero();
                            for kk in 0..k {
                                let col = jj * k + kk;
                                s = s - gout.get(i, col) * y.get(i, col) * sq_dist.get(i, kk);
                            }
                            g.data_mut()[jj] = g.data_mut()[jj] + s;
                        }
                    }
                });
            }
            Op::SoftmaxCe {
                logits,
                probs,
                labels,
                weights,
                norm,
            } => {
                if *norm <= T::zero() {
                    return;
                }
                let up = gout.item() / *norm;
                let cols = probs.cols();
                self.acc(grads, *logits, |g| {
                    for (r, &l) in labels.iter().enumerate() {
                        if l == UNLABELED {
                            continue;
                        }
                        let w = weights.as_ref().map_or(T::one(), |w| w[l as usize]) * up;
                        for c in 0..cols {
                            let onehot = if c == l as usize { T::one() } else { T::zero() };
                            let v = g.get(r, c) + w * (probs.get(r, c) - onehot);
                            g.set(r, c, v);
                        }
                    }
                });
            }
            Op::Standardize { x, xhat, inv_std } => {
                let (rows, cols) = xhat.shape();
                let n = T::from_usize_lossy(rows.max(1));
                self.acc(grads, *x, |g| {
                    for c in 0..cols {
                        let mut sum_d = T::zero();
                        let mut sum_dx = T::zero();
                        for r in 0..rows {
                            sum_d = sum_d + gout.get(r, c);
                            sum_dx = sum_dx + gout.get(r, c) * xhat.get(r, c);
                        }
                        for r in 0..rows {
                            let d = inv_std[c] / n * (n * gout.get(r, c) - sum_d - xhat.get(r, c) * sum_dx);
                            g.set(r, c, g.get(r, c) + d);
                        }
                    }
                });
            }
            Op::Mean(x) => {
                let scale = gout.item() / T::from_usize_lossy(self.value(*x).len());
                self.acc(grads, *x, |g| g.data_mut().iter_mut().for_each(|a| *a = *a + scale));
            }
            Op::Sum(x) => {
                let d = gout.item();
                self.acc(grads, *x, |g| g.data_mut().iter_mut().for_each(|a| *a = *a + d));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn leaky_relu_values() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::new(1, 2, vec![-1.0, 2.0]).unwrap());
        let y = g.leaky_relu(x, 0.2).unwrap();
        assert_eq!(g.value(y).data(), &[-0.2, 2.0]);
    }

    #[test]
    fn uniform_logits_give_ln_c() {
        let mut g = Graph::<f64>::new();
        let z = g.constant(Tensor::zeros(3, 4));
        let l = g.softmax_cross_entropy(z, &[0, 3, 2], None).unwrap();
        assert!((g.value(l).item() - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn all_sentinel_mask_is_zero_loss_zero_grad() {
        let mut s = ParamStore::<f64>::new();
        s.insert("z", Tensor::from_fn(3, 4, |r, c| (r + 2 * c) as f64)).unwrap();
        let mut g = Graph::new();
        let z = g.param(&s, "z").unwrap();
        let l = g.softmax_cross_entropy(z, &[UNLABELED; 3], None).unwrap();
        assert_eq!(g.value(l).item(), 0.0);
        g.backward(l, &mut s).unwrap();
        assert!(s.grad("z").unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_gradient_is_input_broadcast() {
        // loss = sum(x · W) with x fixed → dW[i, j] = x[i].
        let mut s = ParamStore::<f64>::new();
        s.insert("w", Tensor::from_fn(3, 2, |r, c| (r * c) as f64)).unwrap();
        let mut g = Graph::new();
        let x = g.constant(Tensor::new(1, 3, vec![0.5, -1.0, 2.0]).unwrap());
        let w = g.param(&s, "w").unwrap();
        let y = g.matmul(x, w).unwrap();
        let l = g.sum(y).unwrap();
        g.backward(l, &mut s).unwrap();
        assert_eq!(s.grad("w").unwrap().data(), &[0.5, 0.5, -1.0, -1.0, 2.0, 2.0]);
        // A second pass without zeroing accumulates.
        g.backward(l, &mut s).unwrap();
        assert_eq!(s.grad("w").unwrap().data(), &[1.0, 1.0, -2.0, -2.0, 4.0, 4.0]);
    }

    #[test]
    fn errors() {
        let mut s = ParamStore::<f64>::new();
        s.insert("a", Tensor::zeros(2, 3)).unwrap();
        let mut g = Graph::new();
        let a = g.param(&s, "a").unwrap();
        let err = g.matmul(a, a).unwrap_err().to_string();
        assert!(err.contains("(2, 3)") && err.contains("matmul"), "{err}");
        assert!(g.backward(a, &mut s).is_err());
        let b = g.constant(Tensor::zeros(2, 2));
        assert!(g.add(a, b).is_err());
        assert!(g.param(&s, "missing").is_err());
        let nan = g.constant(Tensor::scalar(f64::NAN));
        assert!(g.clamp(nan, 0.0, 1.0).is_err());
    }

    #[test]
    fn first_index_wins_group_max_ties() {
        let mut s = ParamStore::<f64>::new();
        s.insert("x", Tensor::full(3, 1, 1.0)).unwrap();
        let mut g = Graph::new();
        let x = g.param(&s, "x").unwrap();
        let m = g.rowwise_max_over_groups(x, 3).unwrap();
        let l = g.sum(m).unwrap();
        g.backward(l, &mut s).unwrap();
        assert_eq!(s.grad("x").unwrap().data(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn frozen_param_gets_no_gradient() {
        let mut s = ParamStore::<f64>::new();
        s.insert("a", Tensor::scalar(2.0)).unwrap();
        s.insert("b", Tensor::scalar(3.0)).unwrap();
        let mut g = Graph::new();
        let a = g.param(&s, "a").unwrap();
        let b = g.frozen_param(&s, "b").unwrap();
        let y = g.mul(a, b).unwrap();
        g.backward(y, &mut s).unwrap();
        assert_eq!(s.grad("a").unwrap().item(), 3.0);
        assert_eq!(s.grad("b").unwrap().item(), 0.0);
    }
}
