//! Tape of tensor operations with reverse-mode gradients.
//!
//! Nodes are appended in evaluation order, so walking the tape backward is a
//! reverse topological traversal. Every op checks its output for non-finite
//! values and reports a [`Error::NumericFault`] instead of propagating them.

use super::tensor::{split_axis, strides, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Input,
    Param,
    Conv1d {
        x: Var,
        w: Var,
        b: Var,
        /// Input zero-padded by `k / 2` frames on both ends of every
        /// sequence, `[batch, len + k - 1, c_in]`.
        padded: Vec<f64>,
    },
    Dense {
        x: Var,
        w: Var,
        b: Var,
    },
    Relu(Var),
    Sigmoid(Var),
    Softmax {
        x: Var,
        axis: usize,
    },
    Mean {
        x: Var,
        axis: usize,
    },
    Sum {
        x: Var,
        axis: usize,
    },
    Mul {
        a: Var,
        b: Var,
    },
    Reshape(Var),
    Permute {
        x: Var,
        perm: Vec<usize>,
    },
    Concat {
        parts: Vec<Var>,
    },
    Bce {
        logits: Var,
        targets: Vec<f64>,
        pos_weight: f64,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Graph::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(c.len() >= m * n);
    if k == 0 {
        c[..m * n].iter_mut().for_each(|v| *v *= beta);
        return;
    }
    assert!(a.len() > (m - 1) * rsa + (k - 1) * csa);
    assert!(b.len() > (k - 1) * rsb + (n - 1) * csb);
    // SAFETY: bounds of all three operands are asserted above for the
    // given strides; `c` is a distinct, exclusively borrowed buffer.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Copies `batch` sequences of `len × c` values into a buffer with `pad`
/// zero frames before and after each sequence.
fn pad_sequences(x: &[f64], batch: usize, len: usize, c: usize, pad: usize) -> Vec<f64> {
    let span = (len + 2 * pad) * c;
    let mut out = vec![0.0; batch * span];
    for n in 0..batch {
        out[n * span + pad * c..][..len * c].copy_from_slice(&x[n * len * c..][..len * c]);
    }
    out
}

/// `a · b` into a fresh `m × n` row-major buffer.
fn gemm_new(m: usize, k: usize, n: usize, a: &[f64], sa: (usize, usize), b: &[f64], sb: (usize, usize)) -> Vec<f64> {
    if k == 0 || m == 0 || n == 0 {
        return vec![0.0; m * n];
    }
    assert!(a.len() > (m - 1) * sa.0 + (k - 1) * sa.1);
    assert!(b.len() > (k - 1) * sb.0 + (n - 1) * sb.1);
    let mut c: Vec<f64> = Vec::with_capacity(m * n);
    // SAFETY: operand bounds are asserted above; with beta = 0 dgemm writes
    // every element of C without reading it, so all m·n entries are
    // initialized before `set_len`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            sa.0 as isize,
            sa.1 as isize,
            b.as_ptr(),
            sb.0 as isize,
            sb.1 as isize,
            0.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
        c.set_len(m * n);
    }
    c
}

/// Visits every element of `shape` in row-major order, tracking two offsets
/// that advance by their own per-axis strides.
fn for_each_strided(
    shape: &[usize],
    sa: &[usize],
    sb: &[usize],
    mut f: impl FnMut(usize, usize, usize),
) {
    let rank = shape.len();
    let n: usize = shape.iter().product();
    let mut idx = vec![0usize; rank];
    let (mut oa, mut ob) = (0usize, 0usize);
    for lin in 0..n {
        f(lin, oa, ob);
        let mut d = rank;
        while d > 0 {
            d -= 1;
            idx[d] += 1;
            oa += sa[d];
            ob += sb[d];
            if idx[d] < shape[d] {
                break;
            }
            oa -= sa[d] * shape[d];
            ob -= sb[d] * shape[d];
            idx[d] = 0;
        }
    }
}

/// Output shape of a broadcast between `a` and `b` plus the element strides
/// of each operand over that shape (zero along broadcast axes).
fn broadcast(a: &[usize], b: &[usize]) -> Result<(Vec<usize>, Vec<usize>, Vec<usize>)> {
    let rank = a.len().max(b.len());
    let pad = |s: &[usize]| {
        let mut v = vec![1; rank - s.len()];
        v.extend_from_slice(s);
        v
    };
    let (pa, pb) = (pad(a), pad(b));
    let (ra, rb) = (strides(&pa), strides(&pb));
    let mut out = Vec::with_capacity(rank);
    let mut sa = Vec::with_capacity(rank);
    let mut sb = Vec::with_capacity(rank);
    for d in 0..rank {
        let (da, db) = (pa[d], pb[d]);
        let dim = match (da, db) {
            _ if da == db => da,
            (1, _) => db,
            (_, 1) => da,
            _ => {
                return Err(Error::Shape(format!(
                    "cannot broadcast {a:?} with {b:?}"
                )))
            }
        };
        out.push(dim);
        sa.push(if da == 1 { 0 } else { ra[d] });
        sb.push(if db == 1 { 0 } else { rb[d] });
    }
    Ok((out, sa, sb))
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

pub fn sigmoid_scalar(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, name: &str) -> Result<Var> {
        value.check_finite(name)?;
        let needs_grad = match &op {
            Op::Input => false,
            Op::Param => true,
            Op::Conv1d { x, w, b, .. } | Op::Dense { x, w, b } => {
                self.needs(*x) || self.needs(*w) || self.needs(*b)
            }
            Op::Relu(x) | Op::Sigmoid(x) | Op::Reshape(x) => self.needs(*x),
            Op::Softmax { x, .. }
            | Op::Mean { x, .. }
            | Op::Sum { x, .. }
            | Op::Permute { x, .. } => self.needs(*x),
            Op::Mul { a, b } => self.needs(*a) || self.needs(*b),
            Op::Concat { parts } => parts.iter().any(|p| self.needs(*p)),
            Op::Bce { logits, .. } => self.needs(*logits),
        };
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// A constant leaf; no gradient is tracked for it.
    pub fn input(&mut self, t: Tensor) -> Result<Var> {
        self.push(t, Op::Input, "input")
    }

    /// A trainable leaf.
    pub fn param(&mut self, t: Tensor) -> Result<Var> {
        self.push(t, Op::Param, "param")
    }

    /// Same-length temporal convolution with zero padding.
    ///
    /// `x` is `[batch, len, c_in]` (or `[len, c_in]`), `w` is
    /// `[k, c_in, c_out]` with odd `k`, `b` is `[c_out]`.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xs, ws, bs) = (
            self.value(x).shape().to_vec(),
            self.value(w).shape().to_vec(),
            self.value(b).shape().to_vec(),
        );
        let (batch, len, c_in) = match xs[..] {
            [l, c] => (1, l, c),
            [n, l, c] => (n, l, c),
            _ => return Err(Error::Shape(format!("conv1d input must be rank 2 or 3, got {xs:?}"))),
        };
        let [k, wc_in, c_out] = ws[..] else {
            return Err(Error::Shape(format!("conv1d weights must be [k, c_in, c_out], got {ws:?}")));
        };
        if wc_in != c_in || bs != [c_out] || k % 2 == 0 {
            return Err(Error::Shape(format!(
                "conv1d input {xs:?}, weights {ws:?}, bias {bs:?} (odd k required)"
            )));
        }
        let width = k * c_in;
        let padded = pad_sequences(self.value(x).data(), batch, len, c_in, k / 2);
        let span = (len + k - 1) * c_in;
        let bd = self.value(b).data();
        let mut out = Vec::with_capacity(batch * len * c_out);
        for _ in 0..batch * len {
            out.extend_from_slice(bd);
        }
        let wd = self.value(w).data();
        // Row t of the im2col matrix is the contiguous run starting at
        // frame t of the padded sequence, so it is read in place.
        for n in 0..batch {
            gemm(
                len,
                width,
                c_out,
                &padded[n * span..(n + 1) * span],
                (c_in, 1),
                wd,
                (c_out, 1),
                1.0,
                &mut out[n * len * c_out..(n + 1) * len * c_out],
            );
        }
        let mut shape = xs.clone();
        *shape.last_mut().unwrap() = c_out;
        self.push(Tensor::new(shape, out)?, Op::Conv1d { x, w, b, padded }, "conv1d")
    }

    /// Affine map over the last axis: `x · w + b`.
    pub fn dense(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xs, ws, bs) = (
            self.value(x).shape().to_vec(),
            self.value(w).shape().to_vec(),
            self.value(b).shape().to_vec(),
        );
        let c_in = *xs.last().ok_or_else(|| Error::Shape("dense on scalar".into()))?;
        if ws.len() != 2 || ws[0] != c_in || bs != [ws[1]] {
            return Err(Error::Shape(format!(
                "dense input {xs:?}, weights {ws:?}, bias {bs:?}"
            )));
        }
        let c_out = ws[1];
        let rows = self.value(x).len() / c_in.max(1);
        let mut out = Vec::with_capacity(rows * c_out);
        for _ in 0..rows {
            out.extend_from_slice(self.value(b).data());
        }
        gemm(
            rows,
            c_in,
            c_out,
            self.value(x).data(),
            (c_in, 1),
            self.value(w).data(),
            (c_out, 1),
            1.0,
            &mut out,
        );
        let mut shape = xs;
        *shape.last_mut().unwrap() = c_out;
        self.push(Tensor::new(shape, out)?, Op::Dense { x, w, b }, "dense")
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x);
        let out = Tensor::new(v.shape().to_vec(), v.data().iter().map(|a| a.max(0.0)).collect())?;
        self.push(out, Op::Relu(x), "relu")
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x);
        let out = Tensor::new(
            v.shape().to_vec(),
            v.data().iter().map(|&a| sigmoid_scalar(a)).collect(),
        )?;
        self.push(out, Op::Sigmoid(x), "sigmoid")
    }

    fn check_axis(&self, x: Var, axis: usize, op: &str) -> Result<()> {
        let rank = self.value(x).rank();
        if axis >= rank {
            return Err(Error::Shape(format!("{op}: axis {axis} out of range for rank {rank}")));
        }
        Ok(())
    }

    /// Max-shifted softmax along `axis`.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        self.check_axis(x, axis, "softmax")?;
        let v = self.value(x);
        let (outer, n, inner) = split_axis(v.shape(), axis);
        let src = v.data();
        let mut out = vec![0.0; src.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |j: usize| o * n * inner + j * inner + i;
                let max = (0..n).map(|j| src[at(j)]).fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                for j in 0..n {
                    let e = (src[at(j)] - max).exp();
                    out[at(j)] = e;
                    total += e;
                }
                for j in 0..n {
                    out[at(j)] /= total;
                }
            }
        }
        let shape = v.shape().to_vec();
        self.push(Tensor::new(shape, out)?, Op::Softmax { x, axis }, "softmax")
    }

    fn reduce(&mut self, x: Var, axis: usize, scale_by_len: bool) -> Result<Var> {
        let name = if scale_by_len { "mean" } else { "sum" };
        self.check_axis(x, axis, name)?;
        let v = self.value(x);
        let (outer, n, inner) = split_axis(v.shape(), axis);
        let src = v.data();
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            let dst = &mut out[o * inner..(o + 1) * inner];
            for j in 0..n {
                let row = &src[(o * n + j) * inner..][..inner];
                for (d, s) in dst.iter_mut().zip(row) {
                    *d += s;
                }
            }
        }
        if scale_by_len && n > 0 {
            out.iter_mut().for_each(|d| *d /= n as f64);
        }
        let mut shape = v.shape().to_vec();
        shape.remove(axis);
        if shape.is_empty() {
            shape.push(1);
        }
        let op = if scale_by_len {
            Op::Mean { x, axis }
        } else {
            Op::Sum { x, axis }
        };
        self.push(Tensor::new(shape, out)?, op, name)
    }

    /// Mean over `axis`, removing it.
    pub fn mean(&mut self, x: Var, axis: usize) -> Result<Var> {
        self.reduce(x, axis, true)
    }

    /// Sum over `axis`, removing it.
    pub fn sum(&mut self, x: Var, axis: usize) -> Result<Var> {
        self.reduce(x, axis, false)
    }

    /// Elementwise product with broadcasting over size-1 axes.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (shape, sa, sb) = broadcast(self.value(a).shape(), self.value(b).shape())?;
        let (ad, bd) = (self.value(a).data(), self.value(b).data());
        let mut out = vec![0.0; shape.iter().product()];
        for_each_strided(&shape, &sa, &sb, |lin, oa, ob| out[lin] = ad[oa] * bd[ob]);
        self.push(Tensor::new(shape, out)?, Op::Mul { a, b }, "mul")
    }

    /// Contracts `axis` of `x` with `weights`, which must broadcast against
    /// `x` (size 1 on every axis the weights do not vary along).
    pub fn weighted_sum(&mut self, x: Var, weights: Var, axis: usize) -> Result<Var> {
        let prod = self.mul(x, weights)?;
        self.sum(prod, axis)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(x).clone().reshape(shape)?;
        self.push(t, Op::Reshape(x), "reshape")
    }

    /// Collapses every axis from `from_axis` onward into one.
    pub fn flatten(&mut self, x: Var, from_axis: usize) -> Result<Var> {
        let s = self.value(x).shape();
        if from_axis >= s.len() {
            return Err(Error::Shape(format!("flatten: axis {from_axis} out of range for {s:?}")));
        }
        let mut shape = s[..from_axis].to_vec();
        shape.push(s[from_axis..].iter().product());
        self.reshape(x, &shape)
    }

    /// Reorders axes: output axis `i` is input axis `perm[i]`.
    pub fn permute(&mut self, x: Var, perm: &[usize]) -> Result<Var> {
        let v = self.value(x);
        let rank = v.rank();
        let mut seen = vec![false; rank];
        if perm.len() != rank || perm.iter().any(|&p| p >= rank || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::Shape(format!("invalid permutation {perm:?} for rank {rank}")));
        }
        let in_strides = strides(v.shape());
        let shape: Vec<usize> = perm.iter().map(|&p| v.shape()[p]).collect();
        let sp: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
        let src = v.data();
        let mut out = vec![0.0; src.len()];
        for_each_strided(&shape, &sp, &sp, |lin, off, _| out[lin] = src[off]);
        self.push(
            Tensor::new(shape, out)?,
            Op::Permute {
                x,
                perm: perm.to_vec(),
            },
            "permute",
        )
    }

    /// Concatenates along axis 0.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Shape("concat of nothing".into()))?;
        let tail = self.value(*first).shape()[1..].to_vec();
        let mut rows = 0;
        let mut data = Vec::new();
        for p in parts {
            let v = self.value(*p);
            if v.shape()[1..] != tail[..] {
                return Err(Error::Shape(format!(
                    "concat: trailing shape {:?} vs {tail:?}",
                    &v.shape()[1..]
                )));
            }
            rows += v.shape()[0];
            data.extend_from_slice(v.data());
        }
        let mut shape = vec![rows];
        shape.extend(tail);
        self.push(
            Tensor::new(shape, data)?,
            Op::Concat {
                parts: parts.to_vec(),
            },
            "concat",
        )
    }

    /// Mean binary cross-entropy on logits, in the overflow-free softplus form.
    /// Positive targets are weighted by `pos_weight`.
    pub fn bce_with_logits(&mut self, logits: Var, targets: &[f64], pos_weight: f64) -> Result<Var> {
        let z = self.value(logits);
        if z.len() != targets.len() || targets.is_empty() {
            return Err(Error::Shape(format!(
                "bce: {} logits vs {} targets",
                z.len(),
                targets.len()
            )));
        }
        if targets.iter().any(|&y| y != 0.0 && y != 1.0) {
            return Err(Error::Invalid("bce targets must be 0 or 1".into()));
        }
        let loss: f64 = z
            .data()
            .iter()
            .zip(targets)
            .map(|(&z, &y)| pos_weight * y * softplus(-z) + (1.0 - y) * softplus(z))
            .sum::<f64>()
            / targets.len() as f64;
        self.push(
            Tensor::scalar(loss),
            Op::Bce {
                logits,
                targets: targets.to_vec(),
                pos_weight,
            },
            "bce",
        )
    }

    /// Sign pattern of every ReLU input on the tape. Finite-difference checks
    /// use it to discard probes that straddle a kink.
    pub fn relu_pattern(&self) -> Vec<bool> {
        self.nodes
            .iter()
            .filter_map(|n| match n.op {
                Op::Relu(x) => Some(self.value(x).data().iter().map(|&v| v > 0.0)),
                _ => None,
            })
            .flatten()
            .collect()
    }

    /// Reverse sweep from a one-element `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::Shape(format!(
                "backward needs a scalar, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(self.value(loss).shape(), 1.0));
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            g.check_finite("backward")?;
            self.propagate(node, &g, &mut grads)?;
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, delta: Tensor) {
        if !self.needs(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(g) => g.add_assign(&delta),
            slot => *slot = Some(delta),
        }
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let gd = g.data();
        match &node.op {
            Op::Input | Op::Param => {}
            Op::Conv1d { x, w, b, padded } => {
                let xs = self.value(*x).shape();
                let (k, c_in, c_out) = {
                    let s = self.value(*w).shape();
                    (s[0], s[1], s[2])
                };
                let (batch, len) = if xs.len() == 2 { (1, xs[0]) } else { (xs[0], xs[1]) };
                let width = k * c_in;
                if self.needs(*w) {
                    let span = (len + k - 1) * c_in;
                    let mut dw = vec![0.0; width * c_out];
                    for n in 0..batch {
                        gemm(
                            width,
                            len,
                            c_out,
                            &padded[n * span..(n + 1) * span],
                            (1, c_in),
                            &gd[n * len * c_out..(n + 1) * len * c_out],
                            (c_out, 1),
                            1.0,
                            &mut dw,
                        );
                    }
                    self.accumulate(grads, *w, Tensor::new(vec![k, c_in, c_out], dw)?);
                }
                if self.needs(*b) {
                    let mut db = vec![0.0; c_out];
                    for row in gd.chunks_exact(c_out) {
                        db.iter_mut().zip(row).for_each(|(d, r)| *d += r);
                    }
                    self.accumulate(grads, *b, Tensor::new(vec![c_out], db)?);
                }
                if self.needs(*x) {
                    // The input gradient is the same-length convolution of the
                    // output gradient with the taps reversed and transposed.
                    let wd = self.value(*w).data();
                    let mut flipped = vec![0.0; k * c_out * c_in];
                    for o in 0..k {
                        for ci in 0..c_in {
                            for co in 0..c_out {
                                flipped[((k - 1 - o) * c_out + co) * c_in + ci] = wd[(o * c_in + ci) * c_out + co];
                            }
                        }
                    }
                    let gpad = pad_sequences(gd, batch, len, c_out, k / 2);
                    let span = (len + k - 1) * c_out;
                    let mut dx = vec![0.0; batch * len * c_in];
                    for n in 0..batch {
                        gemm(
                            len,
                            k * c_out,
                            c_in,
                            &gpad[n * span..(n + 1) * span],
                            (c_out, 1),
                            &flipped,
                            (c_in, 1),
                            0.0,
                            &mut dx[n * len * c_in..(n + 1) * len * c_in],
                        );
                    }
                    self.accumulate(grads, *x, Tensor::new(xs.to_vec(), dx)?);
                }
            }
            Op::Dense { x, w, b } => {
                let xv = self.value(*x);
                let (c_in, c_out) = {
                    let s = self.value(*w).shape();
                    (s[0], s[1])
                };
                let rows = xv.len() / c_in.max(1);
                if self.needs(*w) {
                    let dw = gemm_new(c_in, rows, c_out, xv.data(), (1, c_in), gd, (c_out, 1));
                    self.accumulate(grads, *w, Tensor::new(vec![c_in, c_out], dw)?);
                }
                if self.needs(*b) {
                    let mut db = vec![0.0; c_out];
                    for row in gd.chunks_exact(c_out) {
                        db.iter_mut().zip(row).for_each(|(d, r)| *d += r);
                    }
                    self.accumulate(grads, *b, Tensor::new(vec![c_out], db)?);
                }
                if self.needs(*x) {
                    let dx = gemm_new(rows, c_out, c_in, gd, (c_out, 1), self.value(*w).data(), (1, c_out));
                    self.accumulate(grads, *x, Tensor::new(xv.shape().to_vec(), dx)?);
                }
            }
            Op::Relu(x) => {
                let xv = self.value(*x);
                let dx = xv
                    .data()
                    .iter()
                    .zip(gd)
                    .map(|(&a, &g)| if a > 0.0 { g } else { 0.0 })
                    .collect();
                self.accumulate(grads, *x, Tensor::new(xv.shape().to_vec(), dx)?);
            }
            Op::Sigmoid(x) => {
                let dx = node
                    .value
                    .data()
                    .iter()
                    .zip(gd)
                    .map(|(&s, &g)| g * s * (1.0 - s))
                    .collect();
                self.accumulate(grads, *x, Tensor::new(node.value.shape().to_vec(), dx)?);
            }
            Op::Softmax { x, axis } => {
                let y = node.value.data();
                let (outer, n, inner) = split_axis(node.value.shape(), *axis);
                let mut dx = vec![0.0; y.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let at = |j: usize| o * n * inner + j * inner + i;
                        let dot: f64 = (0..n).map(|j| gd[at(j)] * y[at(j)]).sum();
                        for j in 0..n {
                            dx[at(j)] = y[at(j)] * (gd[at(j)] - dot);
                        }
                    }
                }
                self.accumulate(grads, *x, Tensor::new(node.value.shape().to_vec(), dx)?);
            }
            Op::Mean { x, axis } | Op::Sum { x, axis } => {
                let xs = self.value(*x).shape();
                let (outer, n, inner) = split_axis(xs, *axis);
                let scale = if matches!(node.op, Op::Mean { .. }) {
                    1.0 / n.max(1) as f64
                } else {
                    1.0
                };
                let mut dx = vec![0.0; outer * n * inner];
                for o in 0..outer {
                    let src = &gd[o * inner..(o + 1) * inner];
                    for j in 0..n {
                        let dst = &mut dx[(o * n + j) * inner..][..inner];
                        dst.iter_mut().zip(src).for_each(|(d, s)| *d = s * scale);
                    }
                }
                self.accumulate(grads, *x, Tensor::new(xs.to_vec(), dx)?);
            }
            Op::Mul { a, b } => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (shape, sa, sb) = broadcast(av.shape(), bv.shape())?;
                let (ad, bd) = (av.data(), bv.data());
                let mut da = vec![0.0; ad.len()];
                let mut db = vec![0.0; bd.len()];
                for_each_strided(&shape, &sa, &sb, |lin, oa, ob| {
                    da[oa] += gd[lin] * bd[ob];
                    db[ob] += gd[lin] * ad[oa];
                });
                let (ash, bsh) = (av.shape().to_vec(), bv.shape().to_vec());
                self.accumulate(grads, *a, Tensor::new(ash, da)?);
                self.accumulate(grads, *b, Tensor::new(bsh, db)?);
            }
            Op::Reshape(x) => {
                let shape = self.value(*x).shape().to_vec();
                self.accumulate(grads, *x, g.clone().reshape(&shape)?);
            }
            Op::Permute { x, perm } => {
                let xs = self.value(*x).shape();
                let in_strides = strides(xs);
                let sp: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
                let mut dx = vec![0.0; gd.len()];
                for_each_strided(node.value.shape(), &sp, &sp, |lin, off, _| dx[off] = gd[lin]);
                self.accumulate(grads, *x, Tensor::new(xs.to_vec(), dx)?);
            }
            Op::Concat { parts } => {
                let mut offset = 0;
                for p in parts {
                    let v = self.value(*p);
                    let n = v.len();
                    let piece = Tensor::new(v.shape().to_vec(), gd[offset..offset + n].to_vec())?;
                    offset += n;
                    self.accumulate(grads, *p, piece);
                }
            }
            Op::Bce {
                logits,
                targets,
                pos_weight,
            } => {
                let z = self.value(*logits);
                let scale = gd[0] / targets.len() as f64;
                let dz = z
                    .data()
                    .iter()
                    .zip(targets)
                    .map(|(&z, &y)| {
                        let s = sigmoid_scalar(z);
                        scale * (pos_weight * y * (s - 1.0) + (1.0 - y) * s)
                    })
                    .collect();
                self.accumulate(grads, *logits, Tensor::new(z.shape().to_vec(), dz)?);
            }
        }
        Ok(())
    }
}
