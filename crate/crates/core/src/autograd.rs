//! Tape-based reverse-mode differentiation over [`Tensor`] values.
//!
//! Every differentiable operation appends a node to a [`Tape`] holding its
//! output value and enough saved state to run its vector-Jacobian product.
//! [`Tape::backward`] walks the nodes in reverse execution order exactly once.
//!
//! ```
//! use emoseq_core::autograd::Tape;
//! use emoseq_core::tensor::Tensor;
//!
//! let tape = Tape::<f64>::new();
//! let x = tape.leaf(Tensor::from_f64(&[3], &[1.0, 2.0, 3.0]).unwrap().with_grad());
//! let loss = x.mul(x).unwrap().sum();
//! let grads = tape.backward(loss).unwrap();
//! assert_eq!(grads.wrt(x).unwrap(), &[2.0, 4.0, 6.0]);
//! ```

use std::cell::{Ref, RefCell};
use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::tensor::{Scalar, Tensor};

#[derive(Debug)]
enum Op<T> {
    Leaf,
    MatMul { a: usize, b: usize, m: usize, k: usize, n: usize },
    BatchMatMul { a: usize, b: usize, batch: usize, m: usize, k: usize, n: usize },
    Add { a: usize, b: usize },
    Mul { a: usize, b: usize },
    Scale { a: usize, factor: T },
    MaskMul { a: usize, mask: Vec<T> },
    Tanh { a: usize },
    Sigmoid { a: usize },
    Concat { parts: Vec<(usize, usize)>, outer: usize },
    Narrow { a: usize, width: usize, start: usize, len: usize },
    Reshape { a: usize },
    Softmax { a: usize, width: usize },
    SelectRows { cond: Vec<bool>, a: usize, b: usize },
    GatherRows { table: usize, ids: Vec<usize>, width: usize },
    GatherMatMul { x: usize, w: usize, idx: Vec<usize>, rows: usize, d: usize, k: usize },
    CrossEntropy { logits: usize, targets: Vec<Option<usize>>, probs: Vec<T>, scale: T },
    Sum { a: usize },
}

#[derive(Debug)]
struct Node<T> {
    shape: Vec<usize>,
    value: Vec<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Ordered record of executed operations. Confined to one thread.
#[derive(Debug, Default)]
pub struct Tape<T> {
    nodes: RefCell<Vec<Node<T>>>,
    params: RefCell<HashMap<usize, usize>>,
}

/// Handle to a node on a tape.
#[derive(Clone, Copy, Debug)]
pub struct Var<'t, T> {
    tape: &'t Tape<T>,
    id: usize,
}

/// Per-node gradients produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
    params: HashMap<usize, usize>,
}

impl<T: Scalar> Gradients<T> {
    pub fn wrt(&self, var: Var<'_, T>) -> Option<&[T]> {
        self.grads.get(var.id)?.as_deref()
    }

    /// Gradient for the parameter at `index` in the store bound to the tape.
    pub fn param(&self, index: usize) -> Option<&[T]> {
        let node = *self.params.get(&index)?;
        self.grads[node].as_deref()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
            params: RefCell::new(HashMap::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, shape: Vec<usize>, value: Vec<T>, op: Op<T>, needs_grad: bool) -> Var<'_, T> {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            shape,
            value,
            op,
            needs_grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn needs(&self, ids: &[usize]) -> bool {
        let nodes = self.nodes.borrow();
        ids.iter().any(|&i| nodes[i].needs_grad)
    }

    /// A leaf; it receives a gradient when `tensor.requires_grad` is set.
    pub fn leaf(&self, tensor: Tensor<T>) -> Var<'_, T> {
        let needs = tensor.requires_grad;
        let shape = tensor.shape().to_vec();
        self.push(shape, tensor.into_data(), Op::Leaf, needs)
    }

    pub fn constant(&self, tensor: Tensor<T>) -> Var<'_, T> {
        let shape = tensor.shape().to_vec();
        self.push(shape, tensor.into_data(), Op::Leaf, false)
    }

    /// Binds a stored parameter as a leaf. Each parameter is bound at most
    /// once per tape so repeated uses share one gradient slot.
    pub fn param(&self, store: &ParamStore<T>, name: &str) -> Result<Var<'_, T>> {
        let index = store
            .index_of(name)
            .ok_or_else(|| Error::contract(format!("no parameter named {name:?}")))?;
        if let Some(&id) = self.params.borrow().get(&index) {
            return Ok(Var { tape: self, id });
        }
        let t = store.get_index(index);
        let var = self.push(t.shape().to_vec(), t.data().to_vec(), Op::Leaf, t.requires_grad);
        self.params.borrow_mut().insert(index, var.id);
        Ok(var)
    }

    /// Runs reverse accumulation from a scalar `loss`.
    pub fn backward(&self, loss: Var<'_, T>) -> Result<Gradients<T>> {
        let nodes = self.nodes.borrow();
        let root = &nodes[loss.id];
        if root.value.len() != 1 {
            return Err(Error::contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                root.shape
            )));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..nodes.len()).map(|_| None).collect();
        grads[loss.id] = Some(vec![T::one()]);
        for id in (0..=loss.id).rev() {
            let node = &nodes[id];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            backprop(&nodes, node, &g, &mut grads);
            if matches!(node.op, Op::Leaf) {
                grads[id] = Some(g);
            }
        }
        Ok(Gradients {
            grads,
            params: self.params.borrow().clone(),
        })
    }
}

fn accumulate<T: Scalar>(grads: &mut [Option<Vec<T>>], id: usize, delta: Vec<T>) {
    match &mut grads[id] {
        Some(g) => g.iter_mut().zip(&delta).for_each(|(g, d)| *g = *g + *d),
        slot @ None => *slot = Some(delta),
    }
}

fn backprop<T: Scalar>(nodes: &[Node<T>], node: &Node<T>, g: &[T], grads: &mut [Option<Vec<T>>]) {
    let needs = |i: usize| nodes[i].needs_grad;
    match &node.op {
        Op::Leaf => {}
        &Op::MatMul { a, b, m, k, n } => {
            if needs(a) {
                let mut da = vec![T::zero(); m * k];
                T::gemm(m, n, k, g, false, &nodes[b].value, true, &mut da, false);
                accumulate(grads, a, da);
            }
            if needs(b) {
                let mut db = vec![T::zero(); k * n];
                T::gemm(k, m, n, &nodes[a].value, true, g, false, &mut db, false);
                accumulate(grads, b, db);
            }
        }
        &Op::BatchMatMul { a, b, batch, m, k, n } => {
            let (av, bv) = (&nodes[a].value, &nodes[b].value);
            if needs(a) {
                let mut da = vec![T::zero(); batch * m * k];
                for i in 0..batch {
                    T::gemm(
                        m,
                        n,
                        k,
                        &g[i * m * n..(i + 1) * m * n],
                        false,
                        &bv[i * k * n..(i + 1) * k * n],
                        true,
                        &mut da[i * m * k..(i + 1) * m * k],
                        false,
                    );
                }
                accumulate(grads, a, da);
            }
            if needs(b) {
                let mut db = vec![T::zero(); batch * k * n];
                for i in 0..batch {
                    T::gemm(
                        k,
                        m,
                        n,
                        &av[i * m * k..(i + 1) * m * k],
                        true,
                        &g[i * m * n..(i + 1) * m * n],
                        false,
                        &mut db[i * k * n..(i + 1) * k * n],
                        false,
                    );
                }
                accumulate(grads, b, db);
            }
        }
        &Op::Add { a, b } => {
            if needs(a) {
                accumulate(grads, a, g.to_vec());
            }
            if needs(b) {
                let nb = nodes[b].value.len();
                let mut db = vec![T::zero(); nb];
                for chunk in g.chunks(nb) {
                    db.iter_mut().zip(chunk).for_each(|(d, x)| *d = *d + *x);
                }
                accumulate(grads, b, db);
            }
        }
        &Op::Mul { a, b } => {
            let (av, bv) = (&nodes[a].value, &nodes[b].value);
            if needs(a) {
                accumulate(grads, a, g.iter().zip(bv).map(|(g, y)| *g * *y).collect());
            }
            if needs(b) {
                accumulate(grads, b, g.iter().zip(av).map(|(g, x)| *g * *x).collect());
            }
        }
        &Op::Scale { a, factor } => {
            accumulate(grads, a, g.iter().map(|g| *g * factor).collect());
        }
        Op::MaskMul { a, mask } => {
            accumulate(grads, *a, g.iter().zip(mask).map(|(g, m)| *g * *m).collect());
        }
        &Op::Tanh { a } => {
            let y = &node.value;
            accumulate(
                grads,
                a,
                g.iter().zip(y).map(|(g, y)| *g * (T::one() - *y * *y)).collect(),
            );
        }
        &Op::Sigmoid { a } => {
            let y = &node.value;
            accumulate(
                grads,
                a,
                g.iter().zip(y).map(|(g, y)| *g * *y * (T::one() - *y)).collect(),
            );
        }
        Op::Concat { parts, outer } => {
            let total: usize = parts.iter().map(|p| p.1).sum();
            let mut offset = 0;
            for &(id, inner) in parts {
                if needs(id) {
                    let mut d = Vec::with_capacity(outer * inner);
                    for o in 0..*outer {
                        let base = o * total + offset;
                        d.extend_from_slice(&g[base..base + inner]);
                    }
                    accumulate(grads, id, d);
                }
                offset += inner;
            }
        }
        &Op::Narrow { a, width, start, len } => {
            let rows = g.len() / len;
            let mut d = vec![T::zero(); rows * width];
            for r in 0..rows {
                d[r * width + start..r * width + start + len]
                    .copy_from_slice(&g[r * len..(r + 1) * len]);
            }
            accumulate(grads, a, d);
        }
        &Op::Reshape { a } => accumulate(grads, a, g.to_vec()),
        &Op::Softmax { a, width } => {
            let y = &node.value;
            let mut d = vec![T::zero(); y.len()];
            for ((dr, yr), gr) in d.chunks_mut(width).zip(y.chunks(width)).zip(g.chunks(width)) {
                let dot = yr.iter().zip(gr).fold(T::zero(), |s, (y, g)| s + *y * *g);
                for ((d, y), g) in dr.iter_mut().zip(yr).zip(gr) {
                    *d = *y * (*g - dot);
                }
            }
            accumulate(grads, a, d);
        }
        Op::SelectRows { cond, a, b } => {
            let block = g.len() / cond.len();
            for (id, take) in [(*a, true), (*b, false)] {
                if !needs(id) {
                    continue;
                }
                let mut d = vec![T::zero(); g.len()];
                for (r, &c) in cond.iter().enumerate() {
                    if c == take {
                        d[r * block..(r + 1) * block].copy_from_slice(&g[r * block..(r + 1) * block]);
                    }
                }
                accumulate(grads, id, d);
            }
        }
        Op::GatherRows { table, ids, width } => {
            let mut d = vec![T::zero(); nodes[*table].value.len()];
            for (r, &i) in ids.iter().enumerate() {
                let dst = &mut d[i * width..(i + 1) * width];
                dst.iter_mut()
                    .zip(&g[r * width..(r + 1) * width])
                    .for_each(|(d, g)| *d = *d + *g);
            }
            accumulate(grads, *table, d);
        }
        Op::GatherMatMul { x, w, idx, rows, d, k } => {
            let (rows, d, k) = (*rows, *d, *k);
            let (xv, wv) = (&nodes[*x].value, &nodes[*w].value);
            if needs(*x) {
                let mut dx = vec![T::zero(); xv.len()];
                for (b, &e) in idx.iter().enumerate() {
                    T::gemm(
                        rows,
                        k,
                        d,
                        &g[b * rows * k..(b + 1) * rows * k],
                        false,
                        &wv[e * d * k..(e + 1) * d * k],
                        true,
                        &mut dx[b * rows * d..(b + 1) * rows * d],
                        false,
                    );
                }
                accumulate(grads, *x, dx);
            }
            if needs(*w) {
                let mut dw = vec![T::zero(); wv.len()];
                for (b, &e) in idx.iter().enumerate() {
                    T::gemm(
                        d,
                        rows,
                        k,
                        &xv[b * rows * d..(b + 1) * rows * d],
                        true,
                        &g[b * rows * k..(b + 1) * rows * k],
                        false,
                        &mut dw[e * d * k..(e + 1) * d * k],
                        true,
                    );
                }
                accumulate(grads, *w, dw);
            }
        }
        Op::CrossEntropy {
            logits,
            targets,
            probs,
            scale,
        } => {
            let width = probs.len() / targets.len();
            let up = g[0] * *scale;
            let mut d = vec![T::zero(); probs.len()];
            for (b, t) in targets.iter().enumerate() {
                if let Some(t) = *t {
                    let row = &mut d[b * width..(b + 1) * width];
                    row.iter_mut()
                        .zip(&probs[b * width..(b + 1) * width])
                        .for_each(|(d, p)| *d = *p * up);
                    row[t] = row[t] - up;
                }
            }
            accumulate(grads, *logits, d);
        }
        &Op::Sum { a } => {
            let n = nodes[a].value.len();
            accumulate(grads, a, vec![g[0]; n]);
        }
    }
}

fn softmax_row<T: Scalar>(row: &[T], keep: Option<&[bool]>, out: &mut [T]) {
    let kept = |j: usize| keep.is_none_or(|k| k[j]);
    let max = row
        .iter()
        .enumerate()
        .filter(|(j, _)| kept(*j))
        .fold(T::neg_infinity(), |m, (_, x)| m.max(*x));
    let mut sum = T::zero();
    for (j, (o, x)) in out.iter_mut().zip(row).enumerate() {
        *o = if kept(j) { (*x - max).exp() } else { T::zero() };
        sum = sum + *o;
    }
    out.iter_mut().for_each(|o| *o = *o / sum);
}

impl<'t, T: Scalar> Var<'t, T> {
    pub fn id(&self) -> usize {
        self.id
    }

    fn node(&self) -> Ref<'t, Node<T>> {
        Ref::map(self.tape.nodes.borrow(), |n| &n[self.id])
    }

    pub fn shape(&self) -> Vec<usize> {
        self.node().shape.clone()
    }

    pub fn numel(&self) -> usize {
        self.node().value.len()
    }

    pub fn data(&self) -> Ref<'t, [T]> {
        Ref::map(self.node(), |n| n.value.as_slice())
    }

    pub fn value(&self) -> Tensor<T> {
        let n = self.node();
        Tensor::new(&n.shape, n.value.clone()).expect("tape node is well-formed")
    }

    /// Scalar value of a one-element node.
    pub fn item(&self) -> T {
        self.node().value[0]
    }

    fn same_tape(&self, other: &Var<'_, T>) {
        assert!(
            std::ptr::eq(self.tape, other.tape),
            "operands recorded on different tapes"
        );
    }

    fn unary(&self, f: impl Fn(T) -> T, op: Op<T>) -> Var<'t, T> {
        let (shape, value, needs) = {
            let n = self.node();
            (n.shape.clone(), n.value.iter().map(|x| f(*x)).collect(), n.needs_grad)
        };
        self.tape.push(shape, value, op, needs)
    }

    /// `[m×k]·[k×n]`.
    pub fn matmul(&self, other: Var<'_, T>) -> Result<Var<'t, T>> {
        self.same_tape(&other);
        let (sa, sb) = (self.shape(), other.shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::dim("matmul", &sa, &sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![T::zero(); m * n];
        T::gemm(m, k, n, &self.data(), false, &other.data(), false, &mut out, false);
        let needs = self.tape.needs(&[self.id, other.id]);
        Ok(self.tape.push(
            vec![m, n],
            out,
            Op::MatMul {
                a: self.id,
                b: other.id,
                m,
                k,
                n,
            },
            needs,
        ))
    }

    /// Batched product `[B×m×k]·[B×k×n] → [B×m×n]`.
    pub fn bmm(&self, other: Var<'_, T>) -> Result<Var<'t, T>> {
        self.same_tape(&other);
        let (sa, sb) = (self.shape(), other.shape());
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] || sa[2] != sb[1] {
            return Err(Error::dim("bmm", &sa, &sb));
        }
        let (batch, m, k, n) = (sa[0], sa[1], sa[2], sb[2]);
        let mut out = vec![T::zero(); batch * m * n];
        {
            let (av, bv) = (self.data(), other.data());
            for i in 0..batch {
                T::gemm(
                    m,
                    k,
                    n,
                    &av[i * m * k..(i + 1) * m * k],
                    false,
                    &bv[i * k * n..(i + 1) * k * n],
                    false,
                    &mut out[i * m * n..(i + 1) * m * n],
                    false,
                );
            }
        }
        let needs = self.tape.needs(&[self.id, other.id]);
        Ok(self.tape.push(
            vec![batch, m, n],
            out,
            Op::BatchMatMul {
                a: self.id,
                b: other.id,
                batch,
                m,
                k,
                n,
            },
            needs,
        ))
    }

    /// Elementwise sum. `other` may also be a trailing-axes suffix of
    /// `self`'s shape, in which case it is broadcast over the leading axes.
    pub fn add(&self, other: Var<'_, T>) -> Result<Var<'t, T>> {
        self.same_tape(&other);
        let (sa, sb) = (self.shape(), other.shape());
        if sb.len() > sa.len() || sa[sa.len() - sb.len()..] != sb[..] {
            return Err(Error::dim("add", &sa, &sb));
        }
        let out = {
            let (av, bv) = (self.data(), other.data());
            av.chunks(bv.len())
                .flat_map(|c| c.iter().zip(bv.iter()).map(|(x, y)| *x + *y))
                .collect()
        };
        let needs = self.tape.needs(&[self.id, other.id]);
        Ok(self.tape.push(
            sa,
            out,
            Op::Add {
                a: self.id,
                b: other.id,
            },
            needs,
        ))
    }

    pub fn mul(&self, other: Var<'_, T>) -> Result<Var<'t, T>> {
        self.same_tape(&other);
        let (sa, sb) = (self.shape(), other.shape());
        if sa != sb {
            return Err(Error::dim("mul", &sa, &sb));
        }
        let out = self
            .data()
            .iter()
            .zip(other.data().iter())
            .map(|(x, y)| *x * *y)
            .collect();
        let needs = self.tape.needs(&[self.id, other.id]);
        Ok(self.tape.push(
            sa,
            out,
            Op::Mul {
                a: self.id,
                b: other.id,
            },
            needs,
        ))
    }

    pub fn scale(&self, factor: T) -> Var<'t, T> {
        self.unary(|x| x * factor, Op::Scale { a: self.id, factor })
    }

    /// Multiplies by a constant mask (used for dropout).
    pub fn mask_mul(&self, mask: Vec<T>) -> Result<Var<'t, T>> {
        if mask.len() != self.numel() {
            return Err(Error::dim("mask_mul", &self.shape(), &[mask.len()]));
        }
        let out = self.data().iter().zip(&mask).map(|(x, m)| *x * *m).collect();
        let needs = self.node().needs_grad;
        Ok(self
            .tape
            .push(self.shape(), out, Op::MaskMul { a: self.id, mask }, needs))
    }

    pub fn tanh(&self) -> Var<'t, T> {
        self.unary(|x| x.tanh(), Op::Tanh { a: self.id })
    }

    pub fn sigmoid(&self) -> Var<'t, T> {
        self.unary(
            |x| {
                if x >= T::zero() {
                    T::one() / (T::one() + (-x).exp())
                } else {
                    let e = x.exp();
                    e / (T::one() + e)
                }
            },
            Op::Sigmoid { a: self.id },
        )
    }

    /// Slice `[start, start+len)` of the last axis.
    pub fn narrow(&self, start: usize, len: usize) -> Result<Var<'t, T>> {
        let shape = self.shape();
        let width = *shape.last().expect("non-empty shape");
        if len == 0 || start + len > width {
            return Err(Error::dim("narrow", &shape, &[start, len]));
        }
        let out: Vec<T> = self
            .data()
            .chunks(width)
            .flat_map(|r| r[start..start + len].iter().copied())
            .collect();
        let mut new_shape = shape;
        *new_shape.last_mut().unwrap() = len;
        let needs = self.node().needs_grad;
        Ok(self.tape.push(
            new_shape,
            out,
            Op::Narrow {
                a: self.id,
                width,
                start,
                len,
            },
            needs,
        ))
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Var<'t, T>> {
        if shape.iter().product::<usize>() != self.numel() || shape.contains(&0) {
            return Err(Error::dim("reshape", &self.shape(), shape));
        }
        let value = self.data().to_vec();
        let needs = self.node().needs_grad;
        Ok(self
            .tape
            .push(shape.to_vec(), value, Op::Reshape { a: self.id }, needs))
    }

    /// Softmax over the last axis, computed with max subtraction.
    pub fn softmax(&self) -> Result<Var<'t, T>> {
        self.masked_softmax(None)
    }

    /// Softmax over the last axis. Positions where `keep` is false get
    /// probability exactly zero and no gradient. Every row must keep at
    /// least one position.
    pub fn masked_softmax(&self, keep: Option<&[bool]>) -> Result<Var<'t, T>> {
        let shape = self.shape();
        let width = *shape.last().expect("non-empty shape");
        if let Some(k) = keep {
            if k.len() != self.numel() {
                return Err(Error::dim("masked_softmax", &shape, &[k.len()]));
            }
            if k.chunks(width).any(|r| !r.iter().any(|&x| x)) {
                return Err(Error::contract("softmax row with every position masked"));
            }
        }
        let out = {
            let v = self.data();
            if v.iter().any(|x| x.is_nan()) {
                return Err(Error::Numeric("NaN input to softmax".into()));
            }
            let mut out = vec![T::zero(); v.len()];
            for (r, (row, o)) in v.chunks(width).zip(out.chunks_mut(width)).enumerate() {
                softmax_row(row, keep.map(|k| &k[r * width..(r + 1) * width]), o);
            }
            out
        };
        let needs = self.node().needs_grad;
        Ok(self
            .tape
            .push(shape, out, Op::Softmax { a: self.id, width }, needs))
    }

    /// Row-wise choice over the first axis: row `r` comes from `self` when
    /// `cond[r]` holds, otherwise from `other`.
    pub fn select_rows(&self, cond: &[bool], other: Var<'_, T>) -> Result<Var<'t, T>> {
        self.same_tape(&other);
        let (sa, sb) = (self.shape(), other.shape());
        if sa != sb || sa[0] != cond.len() {
            return Err(Error::dim("select_rows", &sa, &sb));
        }
        let block = self.numel() / cond.len();
        let out = {
            let (av, bv) = (self.data(), other.data());
            let mut out = Vec::with_capacity(av.len());
            for (r, &c) in cond.iter().enumerate() {
                let src = if c { &av } else { &bv };
                out.extend_from_slice(&src[r * block..(r + 1) * block]);
            }
            out
        };
        let needs = self.tape.needs(&[self.id, other.id]);
        Ok(self.tape.push(
            sa,
            out,
            Op::SelectRows {
                cond: cond.to_vec(),
                a: self.id,
                b: other.id,
            },
            needs,
        ))
    }

    /// Rows of a 2-d table: `[N×w]` gathered by `ids` into `[len×w]`.
    pub fn gather_rows(&self, ids: &[usize]) -> Result<Var<'t, T>> {
        let shape = self.shape();
        if shape.len() != 2 || ids.is_empty() || ids.iter().any(|&i| i >= shape[0]) {
            return Err(Error::dim("gather_rows", &shape, ids));
        }
        let width = shape[1];
        let out = {
            let v = self.data();
            let mut out = Vec::with_capacity(ids.len() * width);
            for &i in ids {
                out.extend_from_slice(&v[i * width..(i + 1) * width]);
            }
            out
        };
        let needs = self.node().needs_grad;
        Ok(self.tape.push(
            vec![ids.len(), width],
            out,
            Op::GatherRows {
                table: self.id,
                ids: ids.to_vec(),
                width,
            },
            needs,
        ))
    }

    /// Per-item product with a selected matrix: `self` is `[B×d]` or
    /// `[B×R×d]`, `weights` is `[S×d×k]`, and item `b` is multiplied by
    /// `weights[idx[b]]`.
    pub fn gather_matmul(&self, weights: Var<'_, T>, idx: &[usize]) -> Result<Var<'t, T>> {
        self.same_tape(&weights);
        let (sx, sw) = (self.shape(), weights.shape());
        let (batch, rows, d) = match sx[..] {
            [b, d] => (b, 1, d),
            [b, r, d] => (b, r, d),
            _ => return Err(Error::dim("gather_matmul", &sx, &sw)),
        };
        if sw.len() != 3 || sw[1] != d || idx.len() != batch || idx.iter().any(|&e| e >= sw[0]) {
            return Err(Error::dim("gather_matmul", &sx, &sw));
        }
        let k = sw[2];
        let mut out = vec![T::zero(); batch * rows * k];
        {
            let (xv, wv) = (self.data(), weights.data());
            for (b, &e) in idx.iter().enumerate() {
                T::gemm(
                    rows,
                    d,
                    k,
                    &xv[b * rows * d..(b + 1) * rows * d],
                    false,
                    &wv[e * d * k..(e + 1) * d * k],
                    false,
                    &mut out[b * rows * k..(b + 1) * rows * k],
                    false,
                );
            }
        }
        let mut shape = sx;
        *shape.last_mut().unwrap() = k;
        let needs = self.tape.needs(&[self.id, weights.id]);
        Ok(self.tape.push(
            shape,
            out,
            Op::GatherMatMul {
                x: self.id,
                w: weights.id,
                idx: idx.to_vec(),
                rows,
                d,
                k,
            },
            needs,
        ))
    }

    /// `scale · Σ_b −log softmax(self[b])[target_b]` over rows whose target
    /// is present. `self` is `[B×V]`.
    pub fn cross_entropy(&self, targets: &[Option<usize>], scale: T) -> Result<Var<'t, T>> {
        let shape = self.shape();
        if shape.len() != 2 || shape[0] != targets.len() {
            return Err(Error::dim("cross_entropy", &shape, &[targets.len()]));
        }
        let width = shape[1];
        if targets.iter().flatten().any(|&t| t >= width) {
            return Err(Error::contract("cross_entropy target out of range"));
        }
        let (probs, loss) = {
            let v = self.data();
            if v.iter().any(|x| x.is_nan()) {
                return Err(Error::Numeric("NaN logits".into()));
            }
            let mut probs = vec![T::zero(); v.len()];
            let mut loss = T::zero();
            for (b, t) in targets.iter().enumerate() {
                let row = &v[b * width..(b + 1) * width];
                softmax_row(row, None, &mut probs[b * width..(b + 1) * width]);
                if let Some(t) = *t {
                    let max = row.iter().fold(T::neg_infinity(), |m, x| m.max(*x));
                    let lse = max + row.iter().fold(T::zero(), |s, x| s + (*x - max).exp()).ln();
                    loss = loss + (lse - row[t]);
                }
            }
            (probs, loss * scale)
        };
        let needs = self.node().needs_grad;
        Ok(self.tape.push(
            vec![1],
            vec![loss],
            Op::CrossEntropy {
                logits: self.id,
                targets: targets.to_vec(),
                probs,
                scale,
            },
            needs,
        ))
    }

    pub fn sum(&self) -> Var<'t, T> {
        let s = self.data().iter().fold(T::zero(), |s, x| s + *x);
        let needs = self.node().needs_grad;
        self.tape.push(vec![1], vec![s], Op::Sum { a: self.id }, needs)
    }
}

/// Concatenation along `axis`; operands keep their order.
pub fn concat<'t, T: Scalar>(parts: &[Var<'t, T>], axis: usize) -> Result<Var<'t, T>> {
    let first = parts
        .first()
        .ok_or_else(|| Error::contract("concat of zero tensors"))?;
    let tape = first.tape;
    let base = first.shape();
    if axis >= base.len() {
        return Err(Error::dim("concat", &base, &[axis]));
    }
    let outer: usize = base[..axis].iter().product();
    let mut out_shape = base.clone();
    out_shape[axis] = 0;
    let mut layout = Vec::with_capacity(parts.len());
    for p in parts {
        first.same_tape(p);
        let s = p.shape();
        if s.len() != base.len()
            || s[..axis] != base[..axis]
            || s[axis + 1..] != base[axis + 1..]
        {
            return Err(Error::dim("concat", &base, &s));
        }
        out_shape[axis] += s[axis];
        layout.push((p.id, s[axis..].iter().product::<usize>()));
    }
    let mut out = Vec::with_capacity(out_shape.iter().product());
    {
        let nodes = tape.nodes.borrow();
        for o in 0..outer {
            for &(id, inner) in &layout {
                out.extend_from_slice(&nodes[id].value[o * inner..(o + 1) * inner]);
            }
        }
    }
    let ids: Vec<usize> = layout.iter().map(|l| l.0).collect();
    let needs = tape.needs(&ids);
    Ok(tape.push(
        out_shape,
        out,
        Op::Concat {
            parts: layout,
            outer,
        },
        needs,
    ))
}
