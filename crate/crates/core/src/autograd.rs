//! Reverse-mode automatic differentiation over [`Tensor`]s.
//!
//! A [`Graph`] records every operation applied to its [`Var`]s. Calling
//! [`Graph::backward`] on a scalar walks the tape in reverse and returns the
//! gradient of every parameter leaf. Graphs are single-use: build one per
//! forward pass and drop it afterwards.

use std::cell::{Ref, RefCell};
use std::fmt;
use std::ops;
use std::rc::Rc;

use crate::conv::{self, ConvGeom};
use crate::tensor::{for_each_offset, gemm, numel, strides, Mat, Tensor};

/// Backward rule for operations defined outside this module.
pub trait Function {
    /// Returns one gradient per input; `needs[i]` is false when input `i` takes no gradient.
    fn backward(&self, inputs: &[&Tensor], output: &Tensor, grad: &Tensor, needs: &[bool]) -> Vec<Option<Tensor>>;
}

#[derive(Clone, Copy, Debug)]
enum BinaryKind {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Clone, Copy, Debug)]
enum UnaryKind {
    Sigmoid,
    Tanh,
    Relu,
    LeakyRelu(f64),
    Exp,
    Ln,
    Square,
    Softplus,
}

enum Op {
    Leaf,
    Binary { kind: BinaryKind, a: usize, b: usize },
    Unary { kind: UnaryKind, x: usize },
    Scale { x: usize, c: f64 },
    Offset { x: usize },
    Clamp { x: usize, lo: f64, hi: f64 },
    MatMul { a: usize, b: usize },
    Reshape { x: usize },
    Permute { x: usize, perm: Vec<usize> },
    Narrow { x: usize, axis: usize, start: usize },
    Select { x: usize, axis: usize, indices: Vec<usize> },
    Concat { xs: Vec<usize>, axis: usize },
    SumAll { x: usize },
    SumAxis { x: usize, axis: usize },
    LogSumExp { x: usize, axis: usize },
    Conv2d { x: usize, w: usize, b: usize, geom: ConvGeom, col: Vec<f64> },
    AvgPool { x: usize, k: usize },
    Upsample { x: usize, k: usize },
    NodeMix { x: usize, m: Rc<Tensor> },
    Custom { inputs: Vec<usize>, f: Box<dyn Function> },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// The tape.
#[derive(Default)]
pub struct Graph {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a value recorded on a [`Graph`].
#[derive(Clone, Copy)]
pub struct Var<'g> {
    graph: &'g Graph,
    id: usize,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var#{} {:?}", self.id, *self.value())
    }
}

/// Gradients of parameter leaves, produced by [`Graph::backward`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var<'_>) -> Option<&Tensor> {
        self.grads.get(v.id).and_then(|g| g.as_ref())
    }

    /// Gradient of `v`, or zeros of its shape when no path reached it.
    pub fn get_or_zeros(&self, v: Var<'_>) -> Tensor {
        self.get(v).cloned().unwrap_or_else(|| Tensor::zeros(v.value().shape()))
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// A differentiable leaf.
    pub fn param(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, false)
    }

    pub fn scalar(&self, value: f64) -> Var<'_> {
        self.constant(Tensor::scalar(value))
    }

    /// Records an externally computed value with a custom backward rule.
    pub fn custom<'g>(&'g self, inputs: &[Var<'g>], value: Tensor, f: Box<dyn Function>) -> Var<'g> {
        let ids: Vec<usize> = inputs.iter().map(|v| v.id).collect();
        let rg = self.any_requires_grad(&ids);
        self.push(value, Op::Custom { inputs: ids, f }, rg)
    }

    fn push(&self, value: Tensor, op: Op, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        let op = if requires_grad { op } else { Op::Leaf };
        nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var {
            graph: self,
            id: nodes.len() - 1,
        }
    }

    fn any_requires_grad(&self, ids: &[usize]) -> bool {
        let nodes = self.nodes.borrow();
        ids.iter().any(|&i| nodes[i].requires_grad)
    }

    fn value_of(&self, id: usize) -> Ref<'_, Tensor> {
        Ref::map(self.nodes.borrow(), |n| &n[id].value)
    }

    /// Back-propagates from a one-element `loss`.
    pub fn backward(&self, loss: Var<'_>) -> Gradients {
        assert!(std::ptr::eq(loss.graph, self), "loss belongs to another graph");
        let nodes = self.nodes.borrow();
        assert_eq!(nodes[loss.id].value.len(), 1, "backward needs a scalar loss");
        let mut grads: Vec<Option<Tensor>> = (0..nodes.len()).map(|_| None).collect();
        grads[loss.id] = Some(Tensor::ones(nodes[loss.id].value.shape()));

        for id in (0..=loss.id).rev() {
            let node = &nodes[id];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            for (input, dg) in backward_op(&nodes, node, &g) {
                match &mut grads[input] {
                    Some(acc) => acc.add_assign(&dg),
                    slot @ None => *slot = Some(dg),
                }
            }
        }
        Gradients { grads }
    }
}

fn broadcast_shape(a: &[usize], b: &[usize]) -> Vec<usize> {
    let n = a.len().max(b.len());
    (0..n)
        .map(|i| {
            let da = if i + a.len() >= n { a[i + a.len() - n] } else { 1 };
            let db = if i + b.len() >= n { b[i + b.len() - n] } else { 1 };
            assert!(da == db || da == 1 || db == 1, "cannot broadcast {a:?} with {b:?}");
            da.max(db)
        })
        .collect()
}

fn broadcast_to(t: &Tensor, shape: &[usize]) -> Tensor {
    if t.shape() == shape {
        return t.clone();
    }
    let pad = shape.len() - t.ndim();
    let st = strides(t.shape());
    let src_strides: Vec<usize> = (0..shape.len())
        .map(|i| {
            if i < pad || t.shape()[i - pad] == 1 {
                0
            } else {
                st[i - pad]
            }
        })
        .collect();
    let mut out = Vec::with_capacity(numel(shape));
    for_each_offset(shape, &src_strides, |off| out.push(t.data()[off]));
    Tensor::new(shape.to_vec(), out)
}

/// Sums `t` down to `shape` (the adjoint of [`broadcast_to`]).
fn reduce_to(t: Tensor, shape: &[usize]) -> Tensor {
    if t.shape() == shape {
        return t;
    }
    let pad = t.ndim() - shape.len();
    let st = strides(shape);
    let dst_strides: Vec<usize> = (0..t.ndim())
        .map(|i| {
            if i < pad || shape[i - pad] == 1 {
                0
            } else {
                st[i - pad]
            }
        })
        .collect();
    let mut out = vec![0.0; numel(shape)];
    let mut k = 0;
    let data = t.data();
    for_each_offset(t.shape(), &dst_strides, |off| {
        out[off] += data[k];
        k += 1;
    });
    Tensor::new(shape.to_vec(), out)
}

fn binary_forward(kind: BinaryKind, a: &Tensor, b: &Tensor) -> Tensor {
    let f = match kind {
        BinaryKind::Add => |x: f64, y: f64| x + y,
        BinaryKind::Sub => |x: f64, y: f64| x - y,
        BinaryKind::Mul => |x: f64, y: f64| x * y,
        BinaryKind::Div => |x: f64, y: f64| x / y,
    };
    if a.shape() == b.shape() {
        return a.zip_map(b, f);
    }
    // common case: trailing-suffix broadcast of `b` (bias rows)
    let shape = broadcast_shape(a.shape(), b.shape());
    if shape == a.shape() && a.shape().ends_with(b.shape()) {
        let inner = b.len();
        let bd = b.data();
        let data = a.data().chunks(inner).flat_map(|row| row.iter().zip(bd).map(|(&x, &y)| f(x, y))).collect();
        return Tensor::new(shape, data);
    }
    broadcast_to(a, &shape).zip_map(&broadcast_to(b, &shape), f)
}

fn unary_forward(kind: UnaryKind, x: &Tensor) -> Tensor {
    match kind {
        UnaryKind::Sigmoid => x.map(sigmoid),
        UnaryKind::Tanh => x.map(f64::tanh),
        UnaryKind::Relu => x.map(|v| v.max(0.0)),
        UnaryKind::LeakyRelu(a) => x.map(|v| if v > 0.0 { v } else { a * v }),
        UnaryKind::Exp => x.map(f64::exp),
        UnaryKind::Ln => x.map(f64::ln),
        UnaryKind::Square => x.map(|v| v * v),
        UnaryKind::Softplus => x.map(softplus),
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn logsumexp_axis(x: &Tensor, axis: usize) -> Tensor {
    let shape = x.shape();
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    let dim = shape[axis];
    let d = x.data();
    let mut out = vec![0.0; outer * inner];
    for o in 0..outer {
        for i in 0..inner {
            let at = |k: usize| d[(o * dim + k) * inner + i];
            let m = (0..dim).map(at).fold(f64::NEG_INFINITY, f64::max);
            out[o * inner + i] = if m == f64::NEG_INFINITY {
                m
            } else {
                m + (0..dim).map(|k| (at(k) - m).exp()).sum::<f64>().ln()
            };
        }
    }
    let mut s = shape.to_vec();
    s.remove(axis);
    Tensor::new(s, out)
}

fn backward_op(nodes: &[Node], node: &Node, g: &Tensor) -> Vec<(usize, Tensor)> {
    let val = |i: usize| &nodes[i].value;
    let needs = |i: usize| nodes[i].requires_grad;
    let mut out = Vec::with_capacity(2);
    let y = &node.value;
    match &node.op {
        Op::Leaf => {}
        Op::Binary { kind, a, b } => {
            let (av, bv) = (val(*a), val(*b));
            match kind {
                BinaryKind::Add => {
                    if needs(*a) {
                        out.push((*a, reduce_to(g.clone(), av.shape())));
                    }
                    if needs(*b) {
                        out.push((*b, reduce_to(g.clone(), bv.shape())));
                    }
                }
                BinaryKind::Sub => {
                    if needs(*a) {
                        out.push((*a, reduce_to(g.clone(), av.shape())));
                    }
                    if needs(*b) {
                        out.push((*b, reduce_to(g.map(|v| -v), bv.shape())));
                    }
                }
                BinaryKind::Mul => {
                    if needs(*a) {
                        let bb = broadcast_to(bv, y.shape());
                        out.push((*a, reduce_to(g.zip_map(&bb, |x, y| x * y), av.shape())));
                    }
                    if needs(*b) {
                        let ab = broadcast_to(av, y.shape());
                        out.push((*b, reduce_to(g.zip_map(&ab, |x, y| x * y), bv.shape())));
                    }
                }
                BinaryKind::Div => {
                    let bb = broadcast_to(bv, y.shape());
                    if needs(*a) {
                        out.push((*a, reduce_to(g.zip_map(&bb, |x, y| x / y), av.shape())));
                    }
                    if needs(*b) {
                        // d(a/b)/db = -y/b
                        let gy = g.zip_map(y, |x, y| x * y);
                        out.push((*b, reduce_to(gy.zip_map(&bb, |x, y| -x / y), bv.shape())));
                    }
                }
            }
        }
        Op::Unary { kind, x } => {
            let xv = val(*x);
            let d = match kind {
                UnaryKind::Sigmoid => g.zip_map(y, |g, y| g * y * (1.0 - y)),
                UnaryKind::Tanh => g.zip_map(y, |g, y| g * (1.0 - y * y)),
                UnaryKind::Relu => g.zip_map(xv, |g, x| if x > 0.0 { g } else { 0.0 }),
                UnaryKind::LeakyRelu(a) => {
                    let a = *a;
                    g.zip_map(xv, |g, x| if x > 0.0 { g } else { a * g })
                }
                UnaryKind::Exp => g.zip_map(y, |g, y| g * y),
                UnaryKind::Ln => g.zip_map(xv, |g, x| g / x),
                UnaryKind::Square => g.zip_map(xv, |g, x| 2.0 * g * x),
                UnaryKind::Softplus => g.zip_map(xv, |g, x| g * sigmoid(x)),
            };
            out.push((*x, d));
        }
        Op::Scale { x, c } => out.push((*x, g.map(|v| v * c))),
        Op::Offset { x } => out.push((*x, g.clone())),
        Op::Clamp { x, lo, hi } => {
            let (lo, hi) = (*lo, *hi);
            out.push((*x, g.zip_map(val(*x), |g, x| if x >= lo && x <= hi { g } else { 0.0 })));
        }
        Op::MatMul { a, b } => {
            let (av, bv) = (val(*a), val(*b));
            let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
            if needs(*a) {
                let mut da = vec![0.0; m * k];
                gemm(m, n, k, 1.0, Mat::row_major(g.data(), n), Mat::transposed(bv.data(), n), 0.0, &mut da, k);
                out.push((*a, Tensor::new(vec![m, k], da)));
            }
            if needs(*b) {
                let mut db = vec![0.0; k * n];
                gemm(k, m, n, 1.0, Mat::transposed(av.data(), k), Mat::row_major(g.data(), n), 0.0, &mut db, n);
                out.push((*b, Tensor::new(vec![k, n], db)));
            }
        }
        Op::Reshape { x } => out.push((*x, g.clone().reshape(val(*x).shape()))),
        Op::Permute { x, perm } => {
            let mut inv = vec![0; perm.len()];
            for (i, &p) in perm.iter().enumerate() {
                inv[p] = i;
            }
            out.push((*x, g.permute(&inv)));
        }
        Op::Narrow { x, axis, start } => {
            let xs = val(*x).shape();
            let outer: usize = xs[..*axis].iter().product();
            let inner: usize = xs[*axis + 1..].iter().product();
            let (dim, len) = (xs[*axis], g.shape()[*axis]);
            let mut d = vec![0.0; numel(xs)];
            for o in 0..outer {
                let dst = (o * dim + start) * inner;
                d[dst..dst + len * inner].copy_from_slice(&g.data()[o * len * inner..(o + 1) * len * inner]);
            }
            out.push((*x, Tensor::new(xs.to_vec(), d)));
        }
        Op::Select { x, axis, indices } => {
            let xs = val(*x).shape();
            let outer: usize = xs[..*axis].iter().product();
            let inner: usize = xs[*axis + 1..].iter().product();
            let dim = xs[*axis];
            let mut d = vec![0.0; numel(xs)];
            for o in 0..outer {
                for (j, &i) in indices.iter().enumerate() {
                    let src = &g.data()[(o * indices.len() + j) * inner..(o * indices.len() + j + 1) * inner];
                    for (dst, s) in d[(o * dim + i) * inner..(o * dim + i + 1) * inner].iter_mut().zip(src) {
                        *dst += s;
                    }
                }
            }
            out.push((*x, Tensor::new(xs.to_vec(), d)));
        }
        Op::Concat { xs, axis } => {
            let mut start = 0;
            for &x in xs {
                let len = val(x).shape()[*axis];
                if needs(x) {
                    out.push((x, g.narrow(*axis, start, len)));
                }
                start += len;
            }
        }
        Op::SumAll { x } => out.push((*x, Tensor::full(val(*x).shape(), g.item()))),
        Op::SumAxis { x, axis } => {
            let xs = val(*x).shape();
            let mut kept = xs.to_vec();
            kept[*axis] = 1;
            out.push((*x, broadcast_to(&g.clone().reshape(&kept), xs)));
        }
        Op::LogSumExp { x, axis } => {
            let xv = val(*x);
            let xs = xv.shape();
            let outer: usize = xs[..*axis].iter().product();
            let inner: usize = xs[*axis + 1..].iter().product();
            let dim = xs[*axis];
            let mut d = vec![0.0; numel(xs)];
            for o in 0..outer {
                for i in 0..inner {
                    let (yo, go) = (y.data()[o * inner + i], g.data()[o * inner + i]);
                    for k in 0..dim {
                        let at = (o * dim + k) * inner + i;
                        d[at] = go * (xv.data()[at] - yo).exp();
                    }
                }
            }
            out.push((*x, Tensor::new(xs.to_vec(), d)));
        }
        Op::Conv2d { x, w, b, geom, col } => {
            let wv = val(*w);
            let c_out = wv.shape()[0];
            let grads = conv::conv2d_backward(g.data(), wv.data(), col, c_out, *geom, [needs(*x), needs(*w), needs(*b)]);
            if let Some(dx) = grads.dx {
                out.push((*x, Tensor::new(val(*x).shape().to_vec(), dx)));
            }
            if let Some(dw) = grads.dw {
                out.push((*w, Tensor::new(wv.shape().to_vec(), dw)));
            }
            if let Some(db) = grads.db {
                out.push((*b, Tensor::new(vec![c_out], db)));
            }
        }
        Op::AvgPool { x, k } => out.push((*x, upsample(g, *k).map(|v| v / (k * k) as f64))),
        Op::Upsample { x, k } => out.push((*x, pool_sum(g, *k))),
        Op::NodeMix { x, m } => out.push((*x, node_mix(&m.transpose(), g))),
        Op::Custom { inputs, f } => {
            let ins: Vec<&Tensor> = inputs.iter().map(|&i| val(i)).collect();
            let nd: Vec<bool> = inputs.iter().map(|&i| needs(i)).collect();
            for (i, d) in inputs.iter().zip(f.backward(&ins, y, g, &nd)) {
                if let (true, Some(d)) = (needs(*i), d) {
                    assert_eq!(d.shape(), val(*i).shape(), "custom op returned misshaped gradient");
                    out.push((*i, d));
                }
            }
        }
    }
    out
}

/// Sums non-overlapping `k x k` blocks of a `[.., h, w]` tensor.
fn pool_sum(x: &Tensor, k: usize) -> Tensor {
    let s = x.shape();
    let nd = s.len();
    let (h, w) = (s[nd - 2], s[nd - 1]);
    assert!(h % k == 0 && w % k == 0, "pooling {k} does not divide {h}x{w}");
    let (ho, wo) = (h / k, w / k);
    let planes = numel(&s[..nd - 2]);
    let mut out = vec![0.0; planes * ho * wo];
    for p in 0..planes {
        for y in 0..h {
            for xx in 0..w {
                out[(p * ho + y / k) * wo + xx / k] += x.data()[(p * h + y) * w + xx];
            }
        }
    }
    let mut shape = s.to_vec();
    shape[nd - 2] = ho;
    shape[nd - 1] = wo;
    Tensor::new(shape, out)
}

/// Nearest-neighbour upsampling of a `[.., h, w]` tensor.
fn upsample(x: &Tensor, k: usize) -> Tensor {
    let s = x.shape();
    let nd = s.len();
    let (h, w) = (s[nd - 2], s[nd - 1]);
    let (ho, wo) = (h * k, w * k);
    let planes = numel(&s[..nd - 2]);
    let mut out = vec![0.0; planes * ho * wo];
    for p in 0..planes {
        for y in 0..ho {
            for xx in 0..wo {
                out[(p * ho + y) * wo + xx] = x.data()[(p * h + y / k) * w + xx / k];
            }
        }
    }
    let mut shape = s.to_vec();
    shape[nd - 2] = ho;
    shape[nd - 1] = wo;
    Tensor::new(shape, out)
}

/// `out[.., n, :] = sum_m m[n, m] * x[.., m, :]` for `x` of shape `[.., N, c]`.
pub fn node_mix(m: &Tensor, x: &Tensor) -> Tensor {
    let s = x.shape();
    let nd = s.len();
    assert!(nd >= 2, "node_mix needs [.., N, c], got {s:?}");
    let (n, c) = (s[nd - 2], s[nd - 1]);
    assert_eq!(m.shape(), &[n, n], "node_mix operator {:?} vs {n} nodes", m.shape());
    let lead = numel(&s[..nd - 2]);
    let mut out = vec![0.0; x.len()];
    for l in 0..lead {
        let xs = &x.data()[l * n * c..(l + 1) * n * c];
        gemm(n, n, c, 1.0, Mat::row_major(m.data(), n), Mat::row_major(xs, c), 0.0, &mut out[l * n * c..(l + 1) * n * c], c);
    }
    Tensor::new(s.to_vec(), out)
}

impl<'g> Var<'g> {
    pub fn graph(&self) -> &'g Graph {
        self.graph
    }

    pub fn value(&self) -> Ref<'g, Tensor> {
        self.graph.value_of(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    pub fn item(&self) -> f64 {
        self.value().item()
    }

    pub fn requires_grad(&self) -> bool {
        self.graph.nodes.borrow()[self.id].requires_grad
    }

    fn unary(self, kind: UnaryKind) -> Var<'g> {
        let v = unary_forward(kind, &self.value());
        let rg = self.requires_grad();
        self.graph.push(v, Op::Unary { kind, x: self.id }, rg)
    }

    fn binary(self, other: Var<'g>, kind: BinaryKind) -> Var<'g> {
        assert!(std::ptr::eq(self.graph, other.graph), "vars from different graphs");
        let v = binary_forward(kind, &self.value(), &other.value());
        let rg = self.requires_grad() || other.requires_grad();
        self.graph.push(
            v,
            Op::Binary {
                kind,
                a: self.id,
                b: other.id,
            },
            rg,
        )
    }

    pub fn add(self, other: Var<'g>) -> Var<'g> {
        self.binary(other, BinaryKind::Add)
    }

    pub fn sub(self, other: Var<'g>) -> Var<'g> {
        self.binary(other, BinaryKind::Sub)
    }

    pub fn mul(self, other: Var<'g>) -> Var<'g> {
        self.binary(other, BinaryKind::Mul)
    }

    pub fn div(self, other: Var<'g>) -> Var<'g> {
        self.binary(other, BinaryKind::Div)
    }

    pub fn sigmoid(self) -> Var<'g> {
        self.unary(UnaryKind::Sigmoid)
    }

    pub fn tanh(self) -> Var<'g> {
        self.unary(UnaryKind::Tanh)
    }

    pub fn relu(self) -> Var<'g> {
        self.unary(UnaryKind::Relu)
    }

    pub fn leaky_relu(self, slope: f64) -> Var<'g> {
        self.unary(UnaryKind::LeakyRelu(slope))
    }

    pub fn exp(self) -> Var<'g> {
        self.unary(UnaryKind::Exp)
    }

    pub fn ln(self) -> Var<'g> {
        self.unary(UnaryKind::Ln)
    }

    pub fn square(self) -> Var<'g> {
        self.unary(UnaryKind::Square)
    }

    pub fn softplus(self) -> Var<'g> {
        self.unary(UnaryKind::Softplus)
    }

    pub fn scale(self, c: f64) -> Var<'g> {
        let v = self.value().map(|x| x * c);
        let rg = self.requires_grad();
        self.graph.push(v, Op::Scale { x: self.id, c }, rg)
    }

    /// Adds a constant to every element.
    pub fn offset(self, c: f64) -> Var<'g> {
        let v = self.value().map(|x| x + c);
        let rg = self.requires_grad();
        self.graph.push(v, Op::Offset { x: self.id }, rg)
    }

    /// Elementwise clamp; the gradient is zero outside `[lo, hi]`.
    pub fn clamp(self, lo: f64, hi: f64) -> Var<'g> {
        let v = self.value().map(|x| x.clamp(lo, hi));
        let rg = self.requires_grad();
        self.graph.push(v, Op::Clamp { x: self.id, lo, hi }, rg)
    }

    pub fn matmul(self, other: Var<'g>) -> Var<'g> {
        let v = self.value().matmul(&other.value());
        let rg = self.requires_grad() || other.requires_grad();
        self.graph.push(v, Op::MatMul { a: self.id, b: other.id }, rg)
    }

    pub fn reshape(self, shape: &[usize]) -> Var<'g> {
        let v = self.value().clone().reshape(shape);
        let rg = self.requires_grad();
        self.graph.push(v, Op::Reshape { x: self.id }, rg)
    }

    pub fn permute(self, perm: &[usize]) -> Var<'g> {
        let v = self.value().permute(perm);
        let rg = self.requires_grad();
        self.graph.push(
            v,
            Op::Permute {
                x: self.id,
                perm: perm.to_vec(),
            },
            rg,
        )
    }

    pub fn narrow(self, axis: usize, start: usize, len: usize) -> Var<'g> {
        let v = self.value().narrow(axis, start, len);
        let rg = self.requires_grad();
        self.graph.push(v, Op::Narrow { x: self.id, axis, start }, rg)
    }

    pub fn select(self, axis: usize, indices: &[usize]) -> Var<'g> {
        let v = self.value().select(axis, indices);
        let rg = self.requires_grad();
        self.graph.push(
            v,
            Op::Select {
                x: self.id,
                axis,
                indices: indices.to_vec(),
            },
            rg,
        )
    }

    pub fn concat(parts: &[Var<'g>], axis: usize) -> Var<'g> {
        assert!(!parts.is_empty());
        let graph = parts[0].graph;
        let v = {
            let vals: Vec<Ref<Tensor>> = parts.iter().map(|p| p.value()).collect();
            let refs: Vec<&Tensor> = vals.iter().map(|r| &**r).collect();
            Tensor::concat(&refs, axis)
        };
        let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
        let rg = graph.any_requires_grad(&ids);
        graph.push(v, Op::Concat { xs: ids, axis }, rg)
    }

    pub fn sum(self) -> Var<'g> {
        let v = Tensor::scalar(self.value().sum());
        let rg = self.requires_grad();
        self.graph.push(v, Op::SumAll { x: self.id }, rg)
    }

    pub fn mean(self) -> Var<'g> {
        let n = self.value().len() as f64;
        self.sum().scale(1.0 / n)
    }

    /// Sums over `axis`, removing it.
    pub fn sum_axis(self, axis: usize) -> Var<'g> {
        let v = self.value().sum_axis(axis);
        let rg = self.requires_grad();
        self.graph.push(v, Op::SumAxis { x: self.id, axis }, rg)
    }

    pub fn mean_axis(self, axis: usize) -> Var<'g> {
        let n = self.value().shape()[axis] as f64;
        self.sum_axis(axis).scale(1.0 / n)
    }

    /// Numerically stable `ln sum exp` over `axis`, removing it.
    pub fn logsumexp(self, axis: usize) -> Var<'g> {
        let v = logsumexp_axis(&self.value(), axis);
        let rg = self.requires_grad();
        self.graph.push(v, Op::LogSumExp { x: self.id, axis }, rg)
    }

    /// Same-padded stride-1 convolution: `self [B, Cin, H, W]`, `weight [Cout, Cin, k, k]`, `bias [Cout]`.
    pub fn conv2d(self, weight: Var<'g>, bias: Var<'g>) -> Var<'g> {
        let (v, geom, col) = {
            let x = self.value();
            let w = weight.value();
            let (xs, ws) = (x.shape(), w.shape());
            assert_eq!(xs.len(), 4, "conv2d input must be [B, C, H, W], got {xs:?}");
            assert_eq!(ws.len(), 4, "conv2d weight must be [Cout, Cin, k, k], got {ws:?}");
            assert_eq!(xs[1], ws[1], "conv2d channel mismatch {xs:?} vs {ws:?}");
            assert!(ws[2] == ws[3] && ws[2] % 2 == 1, "conv2d kernel must be square and odd");
            assert_eq!(bias.value().shape(), &[ws[0]]);
            let geom = ConvGeom {
                batch: xs[0],
                c_in: xs[1],
                height: xs[2],
                width: xs[3],
                kernel: ws[2],
            };
            let (out, col) = conv::conv2d_forward(x.data(), w.data(), bias.value().data(), ws[0], geom);
            (Tensor::new(vec![xs[0], ws[0], xs[2], xs[3]], out), geom, col)
        };
        let rg = self.graph.any_requires_grad(&[self.id, weight.id, bias.id]);
        let col = if rg { col } else { Vec::new() };
        self.graph.push(
            v,
            Op::Conv2d {
                x: self.id,
                w: weight.id,
                b: bias.id,
                geom,
                col,
            },
            rg,
        )
    }

    /// Mean over non-overlapping `k x k` blocks of the last two axes.
    pub fn avg_pool2d(self, k: usize) -> Var<'g> {
        let v = pool_sum(&self.value(), k).map(|x| x / (k * k) as f64);
        let rg = self.requires_grad();
        self.graph.push(v, Op::AvgPool { x: self.id, k }, rg)
    }

    pub fn upsample2d(self, k: usize) -> Var<'g> {
        let v = upsample(&self.value(), k);
        let rg = self.requires_grad();
        self.graph.push(v, Op::Upsample { x: self.id, k }, rg)
    }

    /// Applies a constant node operator along the second-to-last axis.
    pub fn node_mix(self, m: &Rc<Tensor>) -> Var<'g> {
        let v = node_mix(m, &self.value());
        let rg = self.requires_grad();
        self.graph.push(v, Op::NodeMix { x: self.id, m: Rc::clone(m) }, rg)
    }
}

impl<'g> ops::Add for Var<'g> {
    type Output = Var<'g>;
    fn add(self, rhs: Var<'g>) -> Var<'g> {
        Var::add(self, rhs)
    }
}

impl<'g> ops::Sub for Var<'g> {
    type Output = Var<'g>;
    fn sub(self, rhs: Var<'g>) -> Var<'g> {
        Var::sub(self, rhs)
    }
}

impl<'g> ops::Mul for Var<'g> {
    type Output = Var<'g>;
    fn mul(self, rhs: Var<'g>) -> Var<'g> {
        Var::mul(self, rhs)
    }
}

impl<'g> ops::Neg for Var<'g> {
    type Output = Var<'g>;
    fn neg(self) -> Var<'g> {
        self.scale(-1.0)
    }
}
