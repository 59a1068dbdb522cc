use std::cell::RefCell;

use super::kernels::{gemm, transpose_batched};
use super::{shape_err, AdError, Tensor};

/// Magnitude of the additive penalty applied to disallowed attention logits.
pub const MASK_LARGE: f64 = 1e9;

const LN_EPS: f64 = 1e-5;

#[derive(Debug)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    AddBias(usize, usize),
    MatMul(usize, usize),
    BatchMatMul(usize, usize),
    Transpose(usize),
    Reshape(usize),
    Concat {
        inputs: Vec<usize>,
        axis: usize,
    },
    Slice {
        input: usize,
        axis: usize,
        start: usize,
    },
    Select {
        on: usize,
        off: usize,
        mask: Vec<bool>,
    },
    Expand(usize),
    Relu(usize),
    Log(usize),
    Softmax(usize),
    Sum(usize),
    Mean(usize),
    Mse(usize, usize),
    CrossEntropy {
        logits: usize,
        probs: Vec<f64>,
        targets: Vec<usize>,
    },
    LayerNorm {
        x: usize,
        gamma: usize,
        beta: usize,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Records a computation for reverse-mode differentiation.
///
/// Nodes are appended in evaluation order, which is already a topological
/// order, so backward is a single reverse sweep.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    grads: RefCell<Vec<Option<Vec<f64>>>>,
}

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

/// `[outer, axis_len, inner]` view of a shape around `axis`.
fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn batch_dims(shape: &[usize]) -> (usize, usize, usize) {
    let r = shape.len();
    (shape[..r - 2].iter().product(), shape[r - 2], shape[r - 1])
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// A leaf that receives a gradient.
    pub fn leaf(&self, value: Tensor) -> Result<Var<'_>, AdError> {
        self.push("leaf", value, Op::Leaf, true)
    }

    /// A leaf that is treated as a constant (no gradient).
    pub fn constant(&self, value: Tensor) -> Result<Var<'_>, AdError> {
        self.push("constant", value, Op::Leaf, false)
    }

    fn push(
        &self,
        name: &'static str,
        value: Tensor,
        op: Op,
        requires_grad: bool,
    ) -> Result<Var<'_>, AdError> {
        if !value.is_finite() {
            return Err(AdError::NonFinite { op: name });
        }
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var {
            tape: self,
            id: nodes.len() - 1,
        })
    }

    fn needs_grad(&self, ids: &[usize]) -> bool {
        let nodes = self.nodes.borrow();
        ids.iter().any(|&i| nodes[i].requires_grad)
    }

    /// Concatenates along `axis`; all other dimensions must agree.
    pub fn concat<'t>(&'t self, parts: &[Var<'t>], axis: usize) -> Result<Var<'t>, AdError> {
        if parts.is_empty() {
            return Err(shape_err("concat", "no inputs"));
        }
        let nodes = self.nodes.borrow();
        let first = nodes[parts[0].id].value.shape().to_vec();
        if axis >= first.len() {
            return Err(shape_err("concat", format!("axis {axis} on rank {}", first.len())));
        }
        let mut total = 0;
        for p in parts {
            let s = nodes[p.id].value.shape();
            let same_rank = s.len() == first.len();
            if !same_rank || s.iter().enumerate().any(|(d, &v)| d != axis && v != first[d]) {
                return Err(shape_err("concat", format!("{first:?} vs {s:?} on axis {axis}")));
            }
            total += s[axis];
        }
        let mut shape = first.clone();
        shape[axis] = total;
        let (outer, _, inner) = axis_split(&first, axis);
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for p in parts {
                let v = &nodes[p.id].value;
                let w = v.shape()[axis] * inner;
                data.extend_from_slice(&v.data()[o * w..(o + 1) * w]);
            }
        }
        drop(nodes);
        let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
        let rg = self.needs_grad(&ids);
        self.push("concat", Tensor::new(shape, data)?, Op::Concat { inputs: ids, axis }, rg)
    }

    /// Elementwise choice: `on` where `mask` is true, `off` elsewhere.
    pub fn select<'t>(&'t self, on: Var<'t>, off: Var<'t>, mask: &[bool]) -> Result<Var<'t>, AdError> {
        let nodes = self.nodes.borrow();
        let (a, b) = (&nodes[on.id].value, &nodes[off.id].value);
        if a.shape() != b.shape() || mask.len() != a.numel() {
            return Err(shape_err(
                "select",
                format!("{:?} / {:?} with mask of {}", a.shape(), b.shape(), mask.len()),
            ));
        }
        let data = mask
            .iter()
            .zip(a.data().iter().zip(b.data()))
            .map(|(&m, (&x, &y))| if m { x } else { y })
            .collect();
        let shape = a.shape().to_vec();
        drop(nodes);
        let rg = self.needs_grad(&[on.id, off.id]);
        self.push(
            "select",
            Tensor::new(shape, data)?,
            Op::Select {
                on: on.id,
                off: off.id,
                mask: mask.to_vec(),
            },
            rg,
        )
    }

    /// Gradient of the last [`backward`](Self::backward) call for `var`.
    pub fn grad(&self, var: Var<'_>) -> Option<Tensor> {
        let grads = self.grads.borrow();
        let g = grads.get(var.id)?.as_ref()?;
        let shape = self.nodes.borrow()[var.id].value.shape().to_vec();
        Tensor::new(shape, g.clone()).ok()
    }

    /// Fills gradients for every node that requires one.
    ///
    /// `loss` must be a one-element tensor recorded on this tape.
    pub fn backward(&self, loss: Var<'_>) -> Result<(), AdError> {
        if !std::ptr::eq(loss.tape, self) {
            return Err(AdError::Usage("loss was recorded on a different tape".into()));
        }
        let nodes = self.nodes.borrow();
        if nodes[loss.id].value.numel() != 1 {
            return Err(AdError::Usage(format!(
                "backward needs a scalar loss, got shape {:?}",
                nodes[loss.id].value.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; nodes.len()];
        grads[loss.id] = Some(vec![1.0]);

        for id in (0..=loss.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            if node.requires_grad {
                backprop(&nodes, node, &g, &mut grads);
            }
            grads[id] = Some(g);
        }
        drop(nodes);
        *self.grads.borrow_mut() = grads;
        Ok(())
    }
}

fn acc<'g>(grads: &'g mut [Option<Vec<f64>>], nodes: &[Node], id: usize) -> Option<&'g mut Vec<f64>> {
    if !nodes[id].requires_grad {
        return None;
    }
    let n = nodes[id].value.numel();
    Some(grads[id].get_or_insert_with(|| vec![0.0; n]))
}

fn backprop(nodes: &[Node], node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
    let val = |id: usize| &nodes[id].value;
    match &node.op {
        Op::Leaf => {}
        Op::Add(a, b) => {
            for id in [*a, *b] {
                if let Some(ga) = acc(grads, nodes, id) {
                    ga.iter_mut().zip(g).for_each(|(x, y)| *x += y);
                }
            }
        }
        Op::Sub(a, b) => {
            if let Some(ga) = acc(grads, nodes, *a) {
                ga.iter_mut().zip(g).for_each(|(x, y)| *x += y);
            }
            if let Some(gb) = acc(grads, nodes, *b) {
                gb.iter_mut().zip(g).for_each(|(x, y)| *x -= y);
            }
        }
        Op::Mul(a, b) => {
            if let Some(ga) = acc(grads, nodes, *a) {
                for ((x, y), o) in ga.iter_mut().zip(g).zip(val(*b).data()) {
                    *x += y * o;
                }
            }
            if let Some(gb) = acc(grads, nodes, *b) {
                for ((x, y), o) in gb.iter_mut().zip(g).zip(val(*a).data()) {
                    *x += y * o;
                }
            }
        }
        Op::Scale(a, s) => {
            if let Some(ga) = acc(grads, nodes, *a) {
                ga.iter_mut().zip(g).for_each(|(x, y)| *x += y * s);
            }
        }
        Op::AddBias(a, b) => {
            if let Some(ga) = acc(grads, nodes, *a) {
                ga.iter_mut().zip(g).for_each(|(x, y)| *x += y);
            }
            if let Some(gb) = acc(grads, nodes, *b) {
                let w = gb.len();
                for chunk in g.chunks(w) {
                    gb.iter_mut().zip(chunk).for_each(|(x, y)| *x += y);
                }
            }
        }
        Op::MatMul(a, b) | Op::BatchMatMul(a, b) => {
            let (av, bv) = (val(*a), val(*b));
            let (batch, m, k) = batch_dims(av.shape());
            let n = bv.shape()[bv.rank() - 1];
            if let Some(ga) = acc(grads, nodes, *a) {
                for t in 0..batch {
                    gemm(
                        m,
                        n,
                        k,
                        &g[t * m * n..(t + 1) * m * n],
                        false,
                        &bv.data()[t * k * n..(t + 1) * k * n],
                        true,
                        &mut ga[t * m * k..(t + 1) * m * k],
                        true,
                    );
                }
            }
            if let Some(gb) = acc(grads, nodes, *b) {
                for t in 0..batch {
                    gemm(
                        k,
                        m,
                        n,
                        &av.data()[t * m * k..(t + 1) * m * k],
                        true,
                        &g[t * m * n..(t + 1) * m * n],
                        false,
                        &mut gb[t * k * n..(t + 1) * k * n],
                        true,
                    );
                }
            }
        }
        Op::Transpose(a) => {
            if let Some(ga) = acc(grads, nodes, *a) {
                let (batch, r, c) = batch_dims(node.value.shape());
                let back = transpose_batched(g, batch, r, c);
                ga.iter_mut().zip(&back).for_each(|(x, y)| *x += y);
            }
        }
        Op::Reshape(a) | Op::Expand(a) => {
            if let Some(ga) = acc(grads, nodes, *a) {
                let w = ga.len();
                for chunk in g.chunks(w) {
                    ga.iter_mut().zip(chunk).for_each(|(x, y)| *x += y);
                }
            }
        }
        Op::Concat { inputs, axis } => {
            let (outer, total, inner) = axis_split(node.value.shape(), *axis);
            let mut offset = 0;
            for &id in inputs {
                let len = val(id).shape()[*axis];
                if let Some(gi) = acc(grads, nodes, id) {
                    let w = len * inner;
                    for o in 0..outer {
                        let src = &g[o * total * inner + offset * inner..][..w];
                        gi[o * w..(o + 1) * w]
                            .iter_mut()
                            .zip(src)
                            .for_each(|(x, y)| *x += y);
                    }
                }
                offset += len;
            }
        }
        Op::Slice { input, axis, start } => {
            let (outer, full, inner) = axis_split(val(*input).shape(), *axis);
            let len = node.value.shape()[*axis];
            if let Some(gi) = acc(grads, nodes, *input) {
                let w = len * inner;
                for o in 0..outer {
                    let dst = &mut gi[o * full * inner + start * inner..][..w];
                    dst.iter_mut()
                        .zip(&g[o * w..(o + 1) * w])
                        .for_each(|(x, y)| *x += y);
                }
            }
        }
        Op::Select { on, off, mask } => {
            if let Some(ga) = acc(grads, nodes, *on) {
                for ((x, y), &m) in ga.iter_mut().zip(g).zip(mask) {
                    if m {
                        *x += y;
                    }
                }
            }
            if let Some(gb) = acc(grads, nodes, *off) {
                for ((x, y), &m) in gb.iter_mut().zip(g).zip(mask) {
                    if !m {
                        *x += y;
                    }
                }
            }
        }
        Op::Relu(a) => {
            if let Some(ga) = acc(grads, nodes, *a) {
                for ((x, y), &v) in ga.iter_mut().zip(g).zip(val(*a).data()) {
                    if v > 0.0 {
                        *x += y;
                    }
                }
            }
        }
        Op::Log(a) => {
            if let Some(ga) = acc(grads, nodes, *a) {
                for ((x, y), &v) in ga.iter_mut().zip(g).zip(val(*a).data()) {
                    *x += y / v;
                }
            }
        }
        Op::Softmax(a) => {
            if let Some(ga) = acc(grads, nodes, *a) {
                let shape = node.value.shape();
                let w = shape[shape.len() - 1];
                let y = node.value.data();
                for ((gr, yr), dst) in g.chunks(w).zip(y.chunks(w)).zip(ga.chunks_mut(w)) {
                    let dot: f64 = gr.iter().zip(yr).map(|(p, q)| p * q).sum();
                    for ((d, &gi), &yi) in dst.iter_mut().zip(gr).zip(yr) {
                        *d += yi * (gi - dot);
                    }
                }
            }
        }
        Op::Sum(a) => {
            if let Some(ga) = acc(grads, nodes, *a) {
                ga.iter_mut().for_each(|x| *x += g[0]);
            }
        }
        Op::Mean(a) => {
            if let Some(ga) = acc(grads, nodes, *a) {
                let s = g[0] / ga.len() as f64;
                ga.iter_mut().for_each(|x| *x += s);
            }
        }
        Op::Mse(a, b) => {
            let (av, bv) = (val(*a).data(), val(*b).data());
            let s = 2.0 * g[0] / av.len() as f64;
            if let Some(ga) = acc(grads, nodes, *a) {
                for ((x, p), q) in ga.iter_mut().zip(av).zip(bv) {
                    *x += s * (p - q);
                }
            }
            if let Some(gb) = acc(grads, nodes, *b) {
                for ((x, p), q) in gb.iter_mut().zip(av).zip(bv) {
                    *x -= s * (p - q);
                }
            }
        }
        Op::CrossEntropy {
            logits,
            probs,
            targets,
        } => {
            if let Some(gl) = acc(grads, nodes, *logits) {
                let n = targets.len();
                let c = probs.len() / n;
                let s = g[0] / n as f64;
                for (i, &t) in targets.iter().enumerate() {
                    for j in 0..c {
                        let onehot = if j == t { 1.0 } else { 0.0 };
                        gl[i * c + j] += s * (probs[i * c + j] - onehot);
                    }
                }
            }
        }
        Op::LayerNorm {
            x,
            gamma,
            beta,
            xhat,
            inv_std,
        } => {
            let w = val(*gamma).numel();
            let gam = val(*gamma).data().to_vec();
            if let Some(gb) = acc(grads, nodes, *beta) {
                for chunk in g.chunks(w) {
                    gb.iter_mut().zip(chunk).for_each(|(x, y)| *x += y);
                }
            }
            if let Some(gg) = acc(grads, nodes, *gamma) {
                for (chunk, xh) in g.chunks(w).zip(xhat.chunks(w)) {
                    for ((x, y), h) in gg.iter_mut().zip(chunk).zip(xh) {
                        *x += y * h;
                    }
                }
            }
            if let Some(gx) = acc(grads, nodes, *x) {
                let nf = w as f64;
                for (r, ((chunk, xh), dst)) in g
                    .chunks(w)
                    .zip(xhat.chunks(w))
                    .zip(gx.chunks_mut(w))
                    .enumerate()
                {
                    let mut s1 = 0.0;
                    let mut s2 = 0.0;
                    for j in 0..w {
                        let d = chunk[j] * gam[j];
                        s1 += d;
                        s2 += d * xh[j];
                    }
                    for j in 0..w {
                        let d = chunk[j] * gam[j];
                        dst[j] += inv_std[r] / nf * (nf * d - s1 - xh[j] * s2);
                    }
                }
            }
        }
    }
}

impl<'t> Var<'t> {
    pub fn id(self) -> usize {
        self.id
    }

    pub fn tape(self) -> &'t Tape {
        self.tape
    }

    /// Copy of the forward value, detached from the tape.
    pub fn value(self) -> Tensor {
        self.tape.nodes.borrow()[self.id].value.clone()
    }

    pub fn shape(self) -> Vec<usize> {
        self.tape.nodes.borrow()[self.id].value.shape().to_vec()
    }

    pub fn requires_grad(self) -> bool {
        self.tape.nodes.borrow()[self.id].requires_grad
    }

    pub fn grad(self) -> Option<Tensor> {
        self.tape.grad(self)
    }

    /// Value as a new constant leaf: the gradient path is cut here.
    pub fn detach(self) -> Result<Var<'t>, AdError> {
        self.tape.constant(self.value())
    }

    fn unary(
        self,
        name: &'static str,
        f: impl FnOnce(&Tensor) -> Result<(Tensor, Op), AdError>,
    ) -> Result<Var<'t>, AdError> {
        let nodes = self.tape.nodes.borrow();
        let (value, op) = f(&nodes[self.id].value)?;
        let rg = nodes[self.id].requires_grad;
        drop(nodes);
        self.tape.push(name, value, op, rg)
    }

    fn binary(
        self,
        other: Var<'t>,
        name: &'static str,
        f: impl FnOnce(&Tensor, &Tensor) -> Result<(Tensor, Op), AdError>,
    ) -> Result<Var<'t>, AdError> {
        debug_assert!(std::ptr::eq(self.tape, other.tape));
        let nodes = self.tape.nodes.borrow();
        let (value, op) = f(&nodes[self.id].value, &nodes[other.id].value)?;
        let rg = nodes[self.id].requires_grad || nodes[other.id].requires_grad;
        drop(nodes);
        self.tape.push(name, value, op, rg)
    }

    fn zip_same(
        self,
        other: Var<'t>,
        name: &'static str,
        make: fn(usize, usize) -> Op,
        f: fn(f64, f64) -> f64,
    ) -> Result<Var<'t>, AdError> {
        let (ia, ib) = (self.id, other.id);
        self.binary(other, name, |a, b| {
            if a.shape() != b.shape() {
                return Err(shape_err(name, format!("{:?} vs {:?}", a.shape(), b.shape())));
            }
            let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
            Ok((Tensor::new(a.shape().to_vec(), data)?, make(ia, ib)))
        })
    }

    pub fn add(self, other: Var<'t>) -> Result<Var<'t>, AdError> {
        self.zip_same(other, "add", Op::Add, |x, y| x + y)
    }

    pub fn sub(self, other: Var<'t>) -> Result<Var<'t>, AdError> {
        self.zip_same(other, "sub", Op::Sub, |x, y| x - y)
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(self, other: Var<'t>) -> Result<Var<'t>, AdError> {
        self.zip_same(other, "hadamard", Op::Mul, |x, y| x * y)
    }

    pub fn scale(self, s: f64) -> Result<Var<'t>, AdError> {
        let id = self.id;
        self.unary("scale", |a| {
            let data = a.data().iter().map(|x| x * s).collect();
            Ok((Tensor::new(a.shape().to_vec(), data)?, Op::Scale(id, s)))
        })
    }

    /// Adds `bias`, whose shape must equal the trailing dimensions of `self`,
    /// to every leading-index slice.
    pub fn add_bias(self, bias: Var<'t>) -> Result<Var<'t>, AdError> {
        let (ia, ib) = (self.id, bias.id);
        self.binary(bias, "add_bias", |a, b| {
            let (sa, sb) = (a.shape(), b.shape());
            if sb.len() > sa.len() || sa[sa.len() - sb.len()..] != *sb {
                return Err(shape_err("add_bias", format!("{sa:?} + {sb:?}")));
            }
            let w = b.numel().max(1);
            let mut data = a.data().to_vec();
            for chunk in data.chunks_mut(w) {
                chunk.iter_mut().zip(b.data()).for_each(|(x, y)| *x += y);
            }
            Ok((Tensor::new(sa.to_vec(), data)?, Op::AddBias(ia, ib)))
        })
    }

    /// 2-D matrix product.
    pub fn matmul(self, other: Var<'t>) -> Result<Var<'t>, AdError> {
        let (ia, ib) = (self.id, other.id);
        self.binary(other, "matmul", |a, b| {
            let (sa, sb) = (a.shape(), b.shape());
            if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
                return Err(shape_err("matmul", format!("{sa:?} x {sb:?}")));
            }
            let (m, k, n) = (sa[0], sa[1], sb[1]);
            let mut c = vec![0.0; m * n];
            gemm(m, k, n, a.data(), false, b.data(), false, &mut c, false);
            Ok((Tensor::new(vec![m, n], c)?, Op::MatMul(ia, ib)))
        })
    }

    /// Batched product of `[b, m, k]` and `[b, k, n]`.
    pub fn bmm(self, other: Var<'t>) -> Result<Var<'t>, AdError> {
        let (ia, ib) = (self.id, other.id);
        self.binary(other, "bmm", |a, b| {
            let (sa, sb) = (a.shape(), b.shape());
            if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] || sa[2] != sb[1] {
                return Err(shape_err("bmm", format!("{sa:?} x {sb:?}")));
            }
            let (batch, m, k, n) = (sa[0], sa[1], sa[2], sb[2]);
            let mut c = vec![0.0; batch * m * n];
            for t in 0..batch {
                gemm(
                    m,
                    k,
                    n,
                    &a.data()[t * m * k..(t + 1) * m * k],
                    false,
                    &b.data()[t * k * n..(t + 1) * k * n],
                    false,
                    &mut c[t * m * n..(t + 1) * m * n],
                    false,
                );
            }
            Ok((Tensor::new(vec![batch, m, n], c)?, Op::BatchMatMul(ia, ib)))
        })
    }

    /// Swaps the last two dimensions.
    pub fn transpose(self) -> Result<Var<'t>, AdError> {
        let id = self.id;
        self.unary("transpose", |a| {
            let s = a.shape();
            if s.len() < 2 {
                return Err(shape_err("transpose", format!("rank {}", s.len())));
            }
            let (batch, r, c) = batch_dims(s);
            let mut shape = s.to_vec();
            let n = shape.len();
            shape.swap(n - 2, n - 1);
            let data = transpose_batched(a.data(), batch, r, c);
            Ok((Tensor::new(shape, data)?, Op::Transpose(id)))
        })
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Var<'t>, AdError> {
        let id = self.id;
        self.unary("reshape", |a| {
            Ok((a.clone().reshaped(shape)?, Op::Reshape(id)))
        })
    }

    /// `len` entries of `axis` starting at `start`.
    pub fn slice(self, axis: usize, start: usize, len: usize) -> Result<Var<'t>, AdError> {
        let id = self.id;
        self.unary("slice", |a| {
            let s = a.shape();
            if axis >= s.len() || start + len > s[axis] {
                return Err(shape_err("slice", format!("{start}+{len} on axis {axis} of {s:?}")));
            }
            let (outer, full, inner) = axis_split(s, axis);
            let w = len * inner;
            let mut data = Vec::with_capacity(outer * w);
            for o in 0..outer {
                data.extend_from_slice(&a.data()[o * full * inner + start * inner..][..w]);
            }
            let mut shape = s.to_vec();
            shape[axis] = len;
            Ok((
                Tensor::new(shape, data)?,
                Op::Slice {
                    input: id,
                    axis,
                    start,
                },
            ))
        })
    }

    /// Repeats the tensor `n` times along a new leading axis.
    pub fn expand(self, n: usize) -> Result<Var<'t>, AdError> {
        let id = self.id;
        self.unary("expand", |a| {
            let mut shape = vec![n];
            shape.extend_from_slice(a.shape());
            let data = a.data().repeat(n);
            Ok((Tensor::new(shape, data)?, Op::Expand(id)))
        })
    }

    pub fn relu(self) -> Result<Var<'t>, AdError> {
        let id = self.id;
        self.unary("relu", |a| {
            let data = a.data().iter().map(|&x| x.max(0.0)).collect();
            Ok((Tensor::new(a.shape().to_vec(), data)?, Op::Relu(id)))
        })
    }

    pub fn log(self) -> Result<Var<'t>, AdError> {
        let id = self.id;
        self.unary("log", |a| {
            let data = a.data().iter().map(|&x| x.ln()).collect();
            Ok((Tensor::new(a.shape().to_vec(), data)?, Op::Log(id)))
        })
    }

    /// Softmax over the last dimension of `self + mask`.
    ///
    /// `mask` is an additive constant with entries in `{0, -MASK_LARGE}`;
    /// masked entries come out as exact zeros as long as each row keeps at
    /// least one unmasked entry.
    pub fn softmax_lastdim(self, mask: Option<&Tensor>) -> Result<Var<'t>, AdError> {
        let id = self.id;
        self.unary("softmax", |a| {
            if let Some(m) = mask {
                if m.shape() != a.shape() {
                    return Err(shape_err(
                        "softmax",
                        format!("mask {:?} vs logits {:?}", m.shape(), a.shape()),
                    ));
                }
            }
            let w = *a.shape().last().ok_or_else(|| shape_err("softmax", "scalar input"))?;
            let mut data = a.data().to_vec();
            if let Some(m) = mask {
                data.iter_mut().zip(m.data()).for_each(|(x, y)| *x += y);
            }
            for row in data.chunks_mut(w) {
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut z = 0.0;
                for x in row.iter_mut() {
                    *x = (*x - max).exp();
                    z += *x;
                }
                row.iter_mut().for_each(|x| *x /= z);
            }
            Ok((Tensor::new(a.shape().to_vec(), data)?, Op::Softmax(id)))
        })
    }

    pub fn sum(self) -> Result<Var<'t>, AdError> {
        let id = self.id;
        self.unary("sum", |a| Ok((Tensor::scalar(a.data().iter().sum()), Op::Sum(id))))
    }

    pub fn mean(self) -> Result<Var<'t>, AdError> {
        let id = self.id;
        self.unary("mean", |a| {
            if a.numel() == 0 {
                return Err(shape_err("mean", "empty tensor"));
            }
            let m = a.data().iter().sum::<f64>() / a.numel() as f64;
            Ok((Tensor::scalar(m), Op::Mean(id)))
        })
    }

    /// Mean squared difference over all elements.
    pub fn mse(self, target: Var<'t>) -> Result<Var<'t>, AdError> {
        let (ia, ib) = (self.id, target.id);
        self.binary(target, "mse", |a, b| {
            if a.shape() != b.shape() || a.numel() == 0 {
                return Err(shape_err("mse", format!("{:?} vs {:?}", a.shape(), b.shape())));
            }
            let s: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum();
            Ok((Tensor::scalar(s / a.numel() as f64), Op::Mse(ia, ib)))
        })
    }

    /// Mean cross-entropy of `[n, classes]` logits against class indices.
    pub fn cross_entropy_with_logits(self, targets: &[usize]) -> Result<Var<'t>, AdError> {
        let id = self.id;
        self.unary("cross_entropy", |a| {
            let s = a.shape();
            if s.len() != 2 || s[0] != targets.len() || s[0] == 0 {
                return Err(shape_err(
                    "cross_entropy",
                    format!("logits {s:?} with {} targets", targets.len()),
                ));
            }
            let c = s[1];
            if let Some(&t) = targets.iter().find(|&&t| t >= c) {
                return Err(shape_err("cross_entropy", format!("target {t} with {c} classes")));
            }
            let mut probs = a.data().to_vec();
            let mut loss = 0.0;
            for (row, &t) in probs.chunks_mut(c).zip(targets) {
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
                loss += lse - row[t];
                row.iter_mut().for_each(|x| *x = (*x - lse).exp());
            }
            let value = Tensor::scalar(loss / targets.len() as f64);
            Ok((
                value,
                Op::CrossEntropy {
                    logits: id,
                    probs,
                    targets: targets.to_vec(),
                },
            ))
        })
    }

    /// Layer normalisation over the last dimension with affine `gamma`, `beta`.
    pub fn layer_norm(self, gamma: Var<'t>, beta: Var<'t>) -> Result<Var<'t>, AdError> {
        let tape = self.tape;
        let nodes = tape.nodes.borrow();
        let (x, gm, bt) = (
            &nodes[self.id].value,
            &nodes[gamma.id].value,
            &nodes[beta.id].value,
        );
        let w = *x.shape().last().ok_or_else(|| shape_err("layer_norm", "scalar input"))?;
        if gm.shape() != [w] || bt.shape() != [w] {
            return Err(shape_err(
                "layer_norm",
                format!("x {:?}, gamma {:?}, beta {:?}", x.shape(), gm.shape(), bt.shape()),
            ));
        }
        let rows = x.numel() / w;
        let mut xhat = Vec::with_capacity(x.numel());
        let mut inv_std = Vec::with_capacity(rows);
        let mut out = Vec::with_capacity(x.numel());
        for row in x.data().chunks(w) {
            let mu = row.iter().sum::<f64>() / w as f64;
            let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / w as f64;
            let is = 1.0 / (var + LN_EPS).sqrt();
            inv_std.push(is);
            for (j, v) in row.iter().enumerate() {
                let h = (v - mu) * is;
                xhat.push(h);
                out.push(h * gm.data()[j] + bt.data()[j]);
            }
        }
        let shape = x.shape().to_vec();
        let rg = nodes[self.id].requires_grad
            || nodes[gamma.id].requires_grad
            || nodes[beta.id].requires_grad;
        drop(nodes);
        tape.push(
            "layer_norm",
            Tensor::new(shape, out)?,
            Op::LayerNorm {
                x: self.id,
                gamma: gamma.id,
                beta: beta.id,
                xhat,
                inv_std,
            },
            rg,
        )
    }
}
