//! Reverse-mode differentiation over a recorded operation tape.
//!
//! A [`Graph`] is built per forward pass and confined to one thread. Nodes are
//! appended in evaluation order, so a reverse sweep over the node list is a
//! valid topological order for backpropagation. Shape errors inside the graph
//! are programming errors and panic with the producing operation named;
//! non-finite values are recorded as a fault and surface as an error from
//! [`Graph::check`] and [`Graph::backward`].

use std::cell::{Ref, RefCell};

use crate::error::{Error, Result};
use crate::numerics::kernels::{self, sigmoid, NormStats};
use crate::numerics::tensor::{cst, matmul_nt_into, matmul_tn_into, Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Clone, Copy)]
pub struct Var<'g, T: Real> {
    graph: &'g Graph<T>,
    id: NodeId,
}

enum Op<T> {
    Leaf,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    Scale(NodeId, T),
    MatMul(NodeId, NodeId),
    Transpose(NodeId),
    Relu(NodeId),
    Silu(NodeId),
    Square(NodeId),
    Sum(NodeId),
    Mean(NodeId),
    LayerNorm { x: NodeId, gain: NodeId, bias: NodeId, stats: NormStats<T> },
    GroupNorm { x: NodeId, gain: NodeId, bias: NodeId, groups: usize, stats: NormStats<T> },
    SoftmaxRows(NodeId),
    LogSoftmaxRows(NodeId),
    Conv1d { x: NodeId, w: NodeId, stride: usize, padding: usize },
    SliceCols { x: NodeId, start: usize },
    ConcatCols(Vec<NodeId>),
    GatherRows { x: NodeId, index: Vec<usize> },
    /// A scalar whose gradient w.r.t. `x` was computed during the forward pass.
    Precomputed { x: NodeId, grad: Tensor<T> },
}

struct Node<T: Real> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
    name: &'static str,
}

pub struct Graph<T: Real> {
    nodes: RefCell<Vec<Node<T>>>,
    fault: RefCell<Option<usize>>,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients from one backward sweep, indexed by node.
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Gradients<T> {
    pub fn wrt(&self, v: Var<'_, T>) -> Option<&Tensor<T>> {
        self.grads[v.id.0].as_ref()
    }

    /// Gradient for `v`, or zeros shaped like its value when it did not participate.
    pub fn wrt_or_zero(&self, v: Var<'_, T>) -> Tensor<T> {
        match self.wrt(v) {
            Some(g) => g.clone(),
            None => Tensor::zeros(v.graph.nodes.borrow()[v.id.0].value.shape()),
        }
    }
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: RefCell::new(Vec::new()), fault: RefCell::new(None) }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, name: &'static str, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var<'_, T> {
        let mut nodes = self.nodes.borrow_mut();
        let id = nodes.len();
        if self.fault.borrow().is_none() && !value.is_finite() {
            *self.fault.borrow_mut() = Some(id);
        }
        nodes.push(Node { value, op, requires_grad, name });
        Var { graph: self, id: NodeId(id) }
    }

    /// A trainable leaf.
    pub fn param(&self, value: Tensor<T>) -> Var<'_, T> {
        self.push("param", value, Op::Leaf, true)
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&self, value: Tensor<T>) -> Var<'_, T> {
        self.push("constant", value, Op::Leaf, false)
    }

    fn value_ref(&self, id: NodeId) -> Ref<'_, Tensor<T>> {
        Ref::map(self.nodes.borrow(), |n| &n[id.0].value)
    }

    fn rg(&self, id: NodeId) -> bool {
        self.nodes.borrow()[id.0].requires_grad
    }

    /// Errors if any recorded value is non-finite, naming the producing op.
    pub fn check(&self) -> Result<()> {
        match *self.fault.borrow() {
            None => Ok(()),
            Some(id) => {
                let nodes = self.nodes.borrow();
                let index = nodes[id].value.data().iter().position(|x| !x.is_finite()).unwrap_or(0);
                Err(Error::NonFinite { op: format!("{} (node {id})", nodes[id].name), index })
            }
        }
    }

    /// Backpropagates from a one-element `loss`.
    pub fn backward(&self, loss: Var<'_, T>) -> Result<Gradients<T>> {
        self.check()?;
        let nodes = self.nodes.borrow();
        let root = &nodes[loss.id.0];
        if root.value.len() != 1 {
            return Err(Error::InvalidArgument(format!(
                "backward needs a scalar loss, got shape {:?}",
                root.value.shape()
            )));
        }
        if !root.requires_grad {
            return Err(Error::InvalidArgument("loss is detached from every parameter".into()));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..nodes.len()).map(|_| None).collect();
        grads[loss.id.0] = Some(Tensor::new(root.value.shape().to_vec(), vec![T::one()])?);

        for i in (0..=loss.id.0).rev() {
            let node = &nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(gout) = grads[i].take() else { continue };
            backprop_node(&nodes, node, &gout, &mut grads);
            grads[i] = Some(gout);
        }
        Ok(Gradients { grads })
    }
}

fn accumulate<T: Real>(grads: &mut [Option<Tensor<T>>], nodes: &[Node<T>], id: NodeId, delta: Tensor<T>) {
    if !nodes[id.0].requires_grad {
        return;
    }
    match &mut grads[id.0] {
        Some(g) => {
            for (a, &b) in g.data_mut().iter_mut().zip(delta.data()) {
                *a = *a + b;
            }
        }
        slot @ None => *slot = Some(delta),
    }
}

fn like<T: Real>(t: &Tensor<T>, data: Vec<T>) -> Tensor<T> {
    Tensor::new(t.shape().to_vec(), data).expect("gradient shape")
}

fn backprop_node<T: Real>(nodes: &[Node<T>], node: &Node<T>, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
    let val = |id: NodeId| &nodes[id.0].value;
    let gd = g.data();
    match &node.op {
        Op::Leaf => {}
        Op::Add(a, b) => {
            accumulate(grads, nodes, *a, g.clone());
            accumulate(grads, nodes, *b, g.clone());
        }
        Op::Sub(a, b) => {
            accumulate(grads, nodes, *a, g.clone());
            accumulate(grads, nodes, *b, g.map(|x| -x));
        }
        Op::Mul(a, b) => {
            let (va, vb) = (val(*a), val(*b));
            accumulate(grads, nodes, *a, like(va, gd.iter().zip(vb.data()).map(|(&x, &y)| x * y).collect()));
            accumulate(grads, nodes, *b, like(vb, gd.iter().zip(va.data()).map(|(&x, &y)| x * y).collect()));
        }
        Op::AddRow(a, row) => {
            accumulate(grads, nodes, *a, g.clone());
            let c = val(*row).len();
            let mut acc = vec![T::zero(); c];
            for (i, &x) in gd.iter().enumerate() {
                acc[i % c] = acc[i % c] + x;
            }
            accumulate(grads, nodes, *row, like(val(*row), acc));
        }
        Op::Scale(a, s) => accumulate(grads, nodes, *a, g.scale(*s)),
        Op::MatMul(a, b) => {
            let (va, vb) = (val(*a), val(*b));
            let (m, k) = va.dims2().unwrap();
            let n = vb.dims2().unwrap().1;
            if nodes[a.0].requires_grad {
                let mut da = vec![T::zero(); m * k];
                matmul_nt_into(gd, vb.data(), &mut da, m, n, k);
                accumulate(grads, nodes, *a, like(va, da));
            }
            if nodes[b.0].requires_grad {
                let mut db = vec![T::zero(); k * n];
                matmul_tn_into(va.data(), gd, &mut db, k, m, n);
                accumulate(grads, nodes, *b, like(vb, db));
            }
        }
        Op::Transpose(a) => accumulate(grads, nodes, *a, g.transpose().unwrap()),
        Op::Relu(a) => {
            let va = val(*a);
            let d = gd.iter().zip(va.data()).map(|(&x, &v)| if v > T::zero() { x } else { T::zero() }).collect();
            accumulate(grads, nodes, *a, like(va, d));
        }
        Op::Silu(a) => {
            let va = val(*a);
            let d = gd
                .iter()
                .zip(va.data())
                .map(|(&x, &v)| {
                    let s = sigmoid(v);
                    x * (s + v * s * (T::one() - s))
                })
                .collect();
            accumulate(grads, nodes, *a, like(va, d));
        }
        Op::Square(a) => {
            let va = val(*a);
            let two: T = cst(2.0);
            let d = gd.iter().zip(va.data()).map(|(&x, &v)| two * x * v).collect();
            accumulate(grads, nodes, *a, like(va, d));
        }
        Op::Sum(a) => accumulate(grads, nodes, *a, Tensor::full(val(*a).shape(), gd[0])),
        Op::Mean(a) => {
            let va = val(*a);
            let s = gd[0] / cst(va.len() as f64);
            accumulate(grads, nodes, *a, Tensor::full(va.shape(), s));
        }
        Op::LayerNorm { x, gain, bias, stats } => {
            let vx = val(*x);
            let (r, c) = vx.dims2().unwrap();
            let gain_d = val(*gain).data();
            let mut dgain = vec![T::zero(); c];
            let mut dbias = vec![T::zero(); c];
            let mut dx = vec![T::zero(); r * c];
            let nc: T = cst(c as f64);
            for i in 0..r {
                let mut sum_dh = T::zero();
                let mut sum_dh_h = T::zero();
                for j in 0..c {
                    let idx = i * c + j;
                    let h = stats.xhat[idx];
                    dgain[j] = dgain[j] + gd[idx] * h;
                    dbias[j] = dbias[j] + gd[idx];
                    let dh = gd[idx] * gain_d[j];
                    sum_dh = sum_dh + dh;
                    sum_dh_h = sum_dh_h + dh * h;
                }
                let is = stats.inv_std[i];
                for j in 0..c {
                    let idx = i * c + j;
                    let dh = gd[idx] * gain_d[j];
                    dx[idx] = is / nc * (nc * dh - sum_dh - stats.xhat[idx] * sum_dh_h);
                }
            }
            accumulate(grads, nodes, *x, like(vx, dx));
            accumulate(grads, nodes, *gain, like(val(*gain), dgain));
            accumulate(grads, nodes, *bias, like(val(*bias), dbias));
        }
        Op::GroupNorm { x, gain, bias, groups, stats } => {
            let vx = val(*x);
            let (t, c) = vx.dims2().unwrap();
            let cg = c / groups;
            let gain_d = val(*gain).data();
            let mut dgain = vec![T::zero(); c];
            let mut dbias = vec![T::zero(); c];
            for (idx, &gv) in gd.iter().enumerate() {
                dgain[idx % c] = dgain[idx % c] + gv * stats.xhat[idx];
                dbias[idx % c] = dbias[idx % c] + gv;
            }
            let mut dx = vec![T::zero(); t * c];
            let n: T = cst((t * cg) as f64);
            for gr in 0..*groups {
                let mut sum_dh = T::zero();
                let mut sum_dh_h = T::zero();
                for r in 0..t {
                    for j in gr * cg..(gr + 1) * cg {
                        let idx = r * c + j;
                        let dh = gd[idx] * gain_d[j];
                        sum_dh = sum_dh + dh;
                        sum_dh_h = sum_dh_h + dh * stats.xhat[idx];
                    }
                }
                let is = stats.inv_std[gr];
                for r in 0..t {
                    for j in gr * cg..(gr + 1) * cg {
                        let idx = r * c + j;
                        let dh = gd[idx] * gain_d[j];
                        dx[idx] = is / n * (n * dh - sum_dh - stats.xhat[idx] * sum_dh_h);
                    }
                }
            }
            accumulate(grads, nodes, *x, like(vx, dx));
            accumulate(grads, nodes, *gain, like(val(*gain), dgain));
            accumulate(grads, nodes, *bias, like(val(*bias), dbias));
        }
        Op::SoftmaxRows(a) => {
            let y = &node.value;
            let c = *y.shape().last().unwrap();
            let yd = y.data();
            let mut dx = vec![T::zero(); yd.len()];
            for r in 0..yd.len() / c {
                let s = (r * c..(r + 1) * c).fold(T::zero(), |acc, i| acc + gd[i] * yd[i]);
                for i in r * c..(r + 1) * c {
                    dx[i] = yd[i] * (gd[i] - s);
                }
            }
            accumulate(grads, nodes, *a, like(y, dx));
        }
        Op::LogSoftmaxRows(a) => {
            let y = &node.value;
            let c = *y.shape().last().unwrap();
            let yd = y.data();
            let mut dx = vec![T::zero(); yd.len()];
            for r in 0..yd.len() / c {
                let s = (r * c..(r + 1) * c).fold(T::zero(), |acc, i| acc + gd[i]);
                for i in r * c..(r + 1) * c {
                    dx[i] = gd[i] - yd[i].exp() * s;
                }
            }
            accumulate(grads, nodes, *a, like(y, dx));
        }
        Op::Conv1d { x, w, stride, padding } => {
            let (vx, vw) = (val(*x), val(*w));
            let (len, cin) = vx.dims2().unwrap();
            let (k, cout) = (vw.shape()[0], vw.shape()[2]);
            let tout = node.value.shape()[0];
            let (xd, wd) = (vx.data(), vw.data());
            let need_x = nodes[x.0].requires_grad;
            let need_w = nodes[w.0].requires_grad;
            let mut dx = vec![T::zero(); if need_x { len * cin } else { 0 }];
            let mut dw = vec![T::zero(); if need_w { k * cin * cout } else { 0 }];
            for t in 0..tout {
                let grow = &gd[t * cout..(t + 1) * cout];
                for kk in 0..k {
                    let r = (t * stride + kk) as isize - *padding as isize;
                    if r < 0 || r as usize >= len {
                        continue;
                    }
                    let r = r as usize;
                    let wk = &wd[kk * cin * cout..(kk + 1) * cin * cout];
                    if need_x {
                        matmul_nt_into(grow, wk, &mut dx[r * cin..(r + 1) * cin], 1, cout, cin);
                    }
                    if need_w {
                        matmul_tn_into(
                            &xd[r * cin..(r + 1) * cin],
                            grow,
                            &mut dw[kk * cin * cout..(kk + 1) * cin * cout],
                            cin,
                            1,
                            cout,
                        );
                    }
                }
            }
            if need_x {
                accumulate(grads, nodes, *x, like(vx, dx));
            }
            if need_w {
                accumulate(grads, nodes, *w, like(vw, dw));
            }
        }
        Op::SliceCols { x, start } => {
            let vx = val(*x);
            let (r, c) = vx.dims2().unwrap();
            let w = node.value.shape()[1];
            let mut dx = vec![T::zero(); r * c];
            for i in 0..r {
                dx[i * c + start..i * c + start + w].copy_from_slice(&gd[i * w..(i + 1) * w]);
            }
            accumulate(grads, nodes, *x, like(vx, dx));
        }
        Op::ConcatCols(parts) => {
            let total = node.value.shape()[1];
            let rows = node.value.shape()[0];
            let mut off = 0;
            for p in parts {
                let vp = val(*p);
                let w = vp.shape()[1];
                let mut dp = Vec::with_capacity(rows * w);
                for i in 0..rows {
                    dp.extend_from_slice(&gd[i * total + off..i * total + off + w]);
                }
                accumulate(grads, nodes, *p, like(vp, dp));
                off += w;
            }
        }
        Op::GatherRows { x, index } => {
            let vx = val(*x);
            let c = vx.shape()[1];
            let mut dx = vec![T::zero(); vx.len()];
            for (o, &src) in index.iter().enumerate() {
                for j in 0..c {
                    dx[src * c + j] = dx[src * c + j] + gd[o * c + j];
                }
            }
            accumulate(grads, nodes, *x, like(vx, dx));
        }
        Op::Precomputed { x, grad } => accumulate(grads, nodes, *x, grad.scale(gd[0])),
    }
}

fn shape_panic(op: &str, e: Error) -> ! {
    panic!("{op}: {e}")
}

impl<'g, T: Real> Var<'g, T> {
    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn graph(&self) -> &'g Graph<T> {
        self.graph
    }

    pub fn value(&self) -> Tensor<T> {
        self.graph.value_ref(self.id).clone()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.graph.value_ref(self.id).shape().to_vec()
    }

    pub fn requires_grad(&self) -> bool {
        self.graph.rg(self.id)
    }

    fn unary(self, name: &'static str, value: Tensor<T>, op: Op<T>) -> Var<'g, T> {
        let rg = self.requires_grad();
        self.graph.push(name, value, op, rg)
    }

    fn binary(self, other: Var<'g, T>, name: &'static str, value: Tensor<T>, op: Op<T>) -> Var<'g, T> {
        let rg = self.requires_grad() || other.requires_grad();
        self.graph.push(name, value, op, rg)
    }

    pub fn add(self, other: Var<'g, T>) -> Var<'g, T> {
        let v = {
            let (a, b) = (self.graph.value_ref(self.id), self.graph.value_ref(other.id));
            a.add(&b).unwrap_or_else(|e| shape_panic("add", e))
        };
        self.binary(other, "add", v, Op::Add(self.id, other.id))
    }

    pub fn sub(self, other: Var<'g, T>) -> Var<'g, T> {
        let v = {
            let (a, b) = (self.graph.value_ref(self.id), self.graph.value_ref(other.id));
            a.sub(&b).unwrap_or_else(|e| shape_panic("sub", e))
        };
        self.binary(other, "sub", v, Op::Sub(self.id, other.id))
    }

    pub fn mul(self, other: Var<'g, T>) -> Var<'g, T> {
        let v = {
            let (a, b) = (self.graph.value_ref(self.id), self.graph.value_ref(other.id));
            a.zip_map(&b, |x, y| x * y).unwrap_or_else(|e| shape_panic("mul", e))
        };
        self.binary(other, "mul", v, Op::Mul(self.id, other.id))
    }

    /// Adds a row vector (any tensor with `cols` entries) to every row.
    pub fn add_row(self, row: Var<'g, T>) -> Var<'g, T> {
        let v = {
            let (a, b) = (self.graph.value_ref(self.id), self.graph.value_ref(row.id));
            let c = *a.shape().last().unwrap();
            if b.len() != c {
                shape_panic("add_row", Error::Shape(format!("row of {} for {c} columns", b.len())));
            }
            let bd = b.data();
            like(&a, a.data().iter().enumerate().map(|(i, &x)| x + bd[i % c]).collect())
        };
        self.binary(row, "add_row", v, Op::AddRow(self.id, row.id))
    }

    pub fn scale(self, s: f64) -> Var<'g, T> {
        let s: T = cst(s);
        let v = self.graph.value_ref(self.id).scale(s);
        self.unary("scale", v, Op::Scale(self.id, s))
    }

    pub fn matmul(self, other: Var<'g, T>) -> Var<'g, T> {
        let v = {
            let (a, b) = (self.graph.value_ref(self.id), self.graph.value_ref(other.id));
            a.matmul(&b).unwrap_or_else(|e| shape_panic("matmul", e))
        };
        self.binary(other, "matmul", v, Op::MatMul(self.id, other.id))
    }

    /// Affine map `self · w + b`, with `w` shaped `[In, Out]`.
    pub fn linear(self, w: Var<'g, T>, b: Var<'g, T>) -> Var<'g, T> {
        self.matmul(w).add_row(b)
    }

    pub fn transpose(self) -> Var<'g, T> {
        let v = self.graph.value_ref(self.id).transpose().unwrap_or_else(|e| shape_panic("transpose", e));
        self.unary("transpose", v, Op::Transpose(self.id))
    }

    pub fn relu(self) -> Var<'g, T> {
        let v = self.graph.value_ref(self.id).map(|x| x.max(T::zero()));
        self.unary("relu", v, Op::Relu(self.id))
    }

    pub fn silu(self) -> Var<'g, T> {
        let v = kernels::silu(&self.graph.value_ref(self.id));
        self.unary("silu", v, Op::Silu(self.id))
    }

    pub fn square(self) -> Var<'g, T> {
        let v = self.graph.value_ref(self.id).map(|x| x * x);
        self.unary("square", v, Op::Square(self.id))
    }

    pub fn sum(self) -> Var<'g, T> {
        let v = Tensor::scalar(self.graph.value_ref(self.id).sum());
        self.unary("sum", v, Op::Sum(self.id))
    }

    pub fn mean(self) -> Var<'g, T> {
        let v = {
            let a = self.graph.value_ref(self.id);
            Tensor::scalar(a.sum() / cst(a.len() as f64))
        };
        self.unary("mean", v, Op::Mean(self.id))
    }

    pub fn layer_norm(self, gain: Var<'g, T>, bias: Var<'g, T>, eps: f64) -> Var<'g, T> {
        let (v, stats) = {
            let x = self.graph.value_ref(self.id);
            let (g, b) = (self.graph.value_ref(gain.id), self.graph.value_ref(bias.id));
            kernels::layer_norm_stats(&x, &g, &b, eps).unwrap_or_else(|e| shape_panic("layer_norm", e))
        };
        let rg = self.requires_grad() || gain.requires_grad() || bias.requires_grad();
        self.graph.push("layer_norm", v, Op::LayerNorm { x: self.id, gain: gain.id, bias: bias.id, stats }, rg)
    }

    pub fn group_norm(self, groups: usize, gain: Var<'g, T>, bias: Var<'g, T>, eps: f64) -> Var<'g, T> {
        let (v, stats) = {
            let x = self.graph.value_ref(self.id);
            let (g, b) = (self.graph.value_ref(gain.id), self.graph.value_ref(bias.id));
            kernels::group_norm_stats(&x, groups, &g, &b, eps).unwrap_or_else(|e| shape_panic("group_norm", e))
        };
        let rg = self.requires_grad() || gain.requires_grad() || bias.requires_grad();
        self.graph.push(
            "group_norm",
            v,
            Op::GroupNorm { x: self.id, gain: gain.id, bias: bias.id, groups, stats },
            rg,
        )
    }

    pub fn softmax_rows(self) -> Var<'g, T> {
        let v = {
            let x = self.graph.value_ref(self.id);
            let axis = x.rank() - 1;
            kernels::softmax(&x, axis).unwrap_or_else(|e| shape_panic("softmax", e))
        };
        self.unary("softmax", v, Op::SoftmaxRows(self.id))
    }

    pub fn log_softmax_rows(self) -> Var<'g, T> {
        let v = {
            let x = self.graph.value_ref(self.id);
            let c = *x.shape().last().unwrap();
            let mut out = Vec::with_capacity(x.len());
            for row in x.data().chunks(c) {
                let m = row.iter().copied().fold(T::neg_infinity(), T::max);
                let lse = m + row.iter().map(|&v| (v - m).exp()).sum::<T>().ln();
                out.extend(row.iter().map(|&v| v - lse));
            }
            like(&x, out)
        };
        self.unary("log_softmax", v, Op::LogSoftmaxRows(self.id))
    }

    pub fn conv1d(self, w: Var<'g, T>, stride: usize, padding: usize) -> Var<'g, T> {
        let v = {
            let (x, k) = (self.graph.value_ref(self.id), self.graph.value_ref(w.id));
            kernels::conv1d(&x, &k, stride, padding).unwrap_or_else(|e| shape_panic("conv1d", e))
        };
        self.binary(w, "conv1d", v, Op::Conv1d { x: self.id, w: w.id, stride, padding })
    }

    pub fn slice_cols(self, start: usize, width: usize) -> Var<'g, T> {
        let v = {
            let x = self.graph.value_ref(self.id);
            let (r, c) = x.dims2().unwrap_or_else(|e| shape_panic("slice_cols", e));
            assert!(width > 0 && start + width <= c, "slice_cols: {start}+{width} exceeds {c} columns");
            let mut out = Vec::with_capacity(r * width);
            for i in 0..r {
                out.extend_from_slice(&x.row(i)[start..start + width]);
            }
            Tensor::new(vec![r, width], out).unwrap()
        };
        self.unary("slice_cols", v, Op::SliceCols { x: self.id, start })
    }

    pub fn concat_cols(parts: &[Var<'g, T>]) -> Var<'g, T> {
        assert!(!parts.is_empty(), "concat_cols: no inputs");
        let graph = parts[0].graph;
        let v = {
            let vals: Vec<_> = parts.iter().map(|p| graph.value_ref(p.id)).collect();
            let rows = vals[0].dims2().unwrap_or_else(|e| shape_panic("concat_cols", e)).0;
            let total: usize = vals.iter().map(|v| v.shape()[1]).sum();
            let mut out = Vec::with_capacity(rows * total);
            for i in 0..rows {
                for v in &vals {
                    assert_eq!(v.shape()[0], rows, "concat_cols: row counts differ");
                    out.extend_from_slice(v.row(i));
                }
            }
            Tensor::new(vec![rows, total], out).unwrap()
        };
        let rg = parts.iter().any(|p| p.requires_grad());
        graph.push("concat_cols", v, Op::ConcatCols(parts.iter().map(|p| p.id).collect()), rg)
    }

    /// Builds a `[index.len(), C]` matrix whose row `i` is row `index[i]` of self.
    pub fn gather_rows(self, index: Vec<usize>) -> Var<'g, T> {
        let v = {
            let x = self.graph.value_ref(self.id);
            let (r, c) = x.dims2().unwrap_or_else(|e| shape_panic("gather_rows", e));
            assert!(!index.is_empty() && index.iter().all(|&i| i < r), "gather_rows: index out of range");
            let mut out = Vec::with_capacity(index.len() * c);
            for &i in &index {
                out.extend_from_slice(x.row(i));
            }
            Tensor::new(vec![index.len(), c], out).unwrap()
        };
        self.unary("gather_rows", v, Op::GatherRows { x: self.id, index })
    }

    /// Records a scalar `value` whose gradient w.r.t. self is `grad`.
    pub fn precomputed_scalar(self, name: &'static str, value: T, grad: Tensor<T>) -> Var<'g, T> {
        assert_eq!(grad.shape(), self.shape().as_slice(), "{name}: gradient shape");
        self.unary(name, Tensor::scalar(value), Op::Precomputed { x: self.id, grad })
    }
}
