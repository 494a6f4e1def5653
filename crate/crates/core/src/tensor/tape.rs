use std::borrow::Cow;

use rand::Rng;

use super::{numel, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Elementwise primitives addressable by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Elementwise {
    Add,
    Sub,
    Mul,
    Relu,
    Sigmoid,
    Square,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    Square(Var),
    ReduceSum {
        input: Var,
        outer: usize,
        len: usize,
        inner: usize,
    },
    Reshape(Var),
    Transpose(Var),
    Concat(Vec<Var>),
    Gather {
        table: Var,
        rows: Vec<usize>,
        weights: Option<Vec<f64>>,
    },
    AddBias(Var, Var),
    ScaleRows(Var, Var),
    ScaleCols(Var, Var),
    SoftmaxRows(Var),
    Dropout {
        input: Var,
        mask: Vec<f64>,
    },
    Bce {
        probs: Var,
        targets: Vec<f64>,
    },
    BceVar {
        probs: Var,
        targets: Var,
    },
    Cin {
        prev: Var,
        base: Var,
        weight: Var,
        prev_maps: usize,
        fields: usize,
        maps: usize,
        dim: usize,
    },
}

struct Node<'a> {
    shape: Vec<usize>,
    value: Cow<'a, [f64]>,
    op: Op,
    needs_grad: bool,
}

/// Probability clamp used by the cross-entropy op.
pub const PROB_EPS: f64 = 1e-7;

/// Linear record of executed ops. Values borrowed from parameter stores live
/// for `'a`; everything computed on the tape is owned by it.
#[derive(Default)]
pub struct Tape<'a> {
    nodes: Vec<Node<'a>>,
}

/// Adjoints produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&[f64]> {
        self.grads.get(var.0).and_then(|g| g.as_deref())
    }
}

/// Logistic function, evaluated without overflow for large `|x|`.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Per-element binary cross-entropy with the probability clamped to
/// `[PROB_EPS, 1 - PROB_EPS]`.
pub(crate) fn bce_term(target: f64, prob: f64) -> f64 {
    let p = prob.clamp(PROB_EPS, 1.0 - PROB_EPS);
    -(target * p.ln() + (1.0 - target) * (1.0 - p).ln())
}

fn accumulate(grads: &mut [Option<Vec<f64>>], var: Var, delta: Vec<f64>) {
    match &mut grads[var.0] {
        Some(g) => g.iter_mut().zip(&delta).for_each(|(a, b)| *a += b),
        slot @ None => *slot = Some(delta),
    }
}

impl<'a> Tape<'a> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, shape: Vec<usize>, value: Cow<'a, [f64]>, op: Op, needs_grad: bool) -> Var {
        debug_assert_eq!(numel(&shape), value.len());
        self.nodes.push(Node {
            shape,
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Records a value that never receives a gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        let shape = t.shape().to_vec();
        self.push(shape, Cow::Owned(t.into_values()), Op::Leaf, false)
    }

    pub fn constant_from(&mut self, shape: &[usize], values: Vec<f64>) -> Result<Var> {
        let t = Tensor::new(shape, values)?;
        Ok(self.constant(t))
    }

    /// Records an owned value that does receive a gradient.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        let shape = t.shape().to_vec();
        self.push(shape, Cow::Owned(t.into_values()), Op::Leaf, true)
    }

    /// Records a borrowed trainable tensor without copying it.
    pub fn param(&mut self, t: &'a Tensor) -> Var {
        self.push(
            t.shape().to_vec(),
            Cow::Borrowed(t.values()),
            Op::Leaf,
            true,
        )
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn tensor(&self, v: Var) -> Tensor {
        let n = &self.nodes[v.0];
        Tensor::new(&n.shape, n.value.to_vec()).expect("node shape matches its values")
    }

    fn dims2(&self, v: Var, what: &str) -> Result<(usize, usize)> {
        match self.shape(v) {
            [r, c] => Ok((*r, *c)),
            s => Err(Error::shape(format!(
                "{what} expects a 2-d tensor, got {s:?}"
            ))),
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims2(a, "matmul")?;
        let (k2, n) = self.dims2(b, "matmul")?;
        if k != k2 {
            return Err(Error::shape(format!(
                "matmul inner dimensions differ: [{m}x{k}] * [{k2}x{n}]"
            )));
        }
        let av = self.value(a);
        let bv = self.value(b);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let x = av[i * k + p];
                if x == 0.0 {
                    continue;
                }
                let brow = &bv[p * n..(p + 1) * n];
                row.iter_mut().zip(brow).for_each(|(o, w)| *o += x * w);
            }
        }
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(vec![m, n], Cow::Owned(out), Op::MatMul(a, b), ng))
    }

    fn broadcast_shape(&self, a: Var, b: Var, what: &str) -> Result<Vec<usize>> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa == sb {
            Ok(sa.to_vec())
        } else if numel(sa) == 1 {
            Ok(sb.to_vec())
        } else if numel(sb) == 1 {
            Ok(sa.to_vec())
        } else {
            Err(Error::shape(format!(
                "{what}: incompatible shapes {sa:?} and {sb:?}"
            )))
        }
    }

    fn binary(
        &mut self,
        a: Var,
        b: Var,
        what: &str,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        let shape = self.broadcast_shape(a, b, what)?;
        let n = numel(&shape);
        let (av, bv) = (self.value(a), self.value(b));
        let out: Vec<f64> = (0..n)
            .map(|i| {
                let x = if av.len() == 1 { av[0] } else { av[i] };
                let y = if bv.len() == 1 { bv[0] } else { bv[i] };
                f(x, y)
            })
            .collect();
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(shape, Cow::Owned(out), op, ng))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    /// Multiplies by a constant scalar.
    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).iter().map(|x| x * c).collect();
        let shape = self.shape(a).to_vec();
        let ng = self.needs(a);
        self.push(shape, Cow::Owned(out), Op::Scale(a, c), ng)
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let out = self.value(a).iter().map(|&x| f(x)).collect();
        let shape = self.shape(a).to_vec();
        let ng = self.needs(a);
        self.push(shape, Cow::Owned(out), op, ng)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.max(0.0), Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, |x| x * x, Op::Square(a))
    }

    pub fn elementwise(&mut self, op: Elementwise, args: &[Var]) -> Result<Var> {
        let arity = match op {
            Elementwise::Add | Elementwise::Sub | Elementwise::Mul => 2,
            _ => 1,
        };
        if args.len() != arity {
            return Err(Error::invalid(format!(
                "{op:?} takes {arity} argument(s), got {}",
                args.len()
            )));
        }
        Ok(match op {
            Elementwise::Add => self.add(args[0], args[1])?,
            Elementwise::Sub => self.sub(args[0], args[1])?,
            Elementwise::Mul => self.mul(args[0], args[1])?,
            Elementwise::Relu => self.relu(args[0]),
            Elementwise::Sigmoid => self.sigmoid(args[0]),
            Elementwise::Square => self.square(args[0]),
        })
    }

    /// Sums along `axis`, or over every element when `axis` is `None`.
    pub fn reduce_sum(&mut self, a: Var, axis: Option<usize>) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        let (outer, len, inner, out_shape) = match axis {
            None => (1, numel(&shape), 1, Vec::new()),
            Some(ax) if ax < shape.len() => {
                let mut out_shape = shape.clone();
                out_shape.remove(ax);
                (
                    numel(&shape[..ax]),
                    shape[ax],
                    numel(&shape[ax + 1..]),
                    out_shape,
                )
            }
            Some(ax) => {
                return Err(Error::shape(format!(
                    "axis {ax} out of range for shape {shape:?}"
                )))
            }
        };
        let av = self.value(a);
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for l in 0..len {
                let src = &av[(o * len + l) * inner..(o * len + l + 1) * inner];
                out[o * inner..(o + 1) * inner]
                    .iter_mut()
                    .zip(src)
                    .for_each(|(d, s)| *d += s);
            }
        }
        let ng = self.needs(a);
        Ok(self.push(
            out_shape,
            Cow::Owned(out),
            Op::ReduceSum {
                input: a,
                outer,
                len,
                inner,
            },
            ng,
        ))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let n = self.value(a).len();
        if n == 0 {
            return Err(Error::shape("mean of an empty tensor"));
        }
        let s = self.reduce_sum(a, None)?;
        Ok(self.scale(s, 1.0 / n as f64))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        if numel(shape) != self.value(a).len() {
            return Err(Error::shape(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape(a)
            )));
        }
        let value = self.value(a).to_vec();
        let ng = self.needs(a);
        Ok(self.push(shape.to_vec(), Cow::Owned(value), Op::Reshape(a), ng))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let (r, c) = self.dims2(a, "transpose")?;
        let av = self.value(a);
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = av[i * c + j];
            }
        }
        let ng = self.needs(a);
        Ok(self.push(vec![c, r], Cow::Owned(out), Op::Transpose(a), ng))
    }

    /// Concatenates 2-d tensors with equal row counts along the column axis.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::shape("concat of zero tensors"))?;
        let (rows, _) = self.dims2(first, "concat")?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.dims2(p, "concat")?;
            if r != rows {
                return Err(Error::shape(format!("concat row mismatch: {r} vs {rows}")));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(p)[r * w..(r + 1) * w]);
            }
        }
        let ng = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(
            vec![rows, total],
            Cow::Owned(out),
            Op::Concat(parts.to_vec()),
            ng,
        ))
    }

    /// Row lookup `table[rows[l]] * weights[l]`, producing `[rows.len(), d]`.
    pub fn gather(
        &mut self,
        table: Var,
        rows: Vec<usize>,
        weights: Option<Vec<f64>>,
    ) -> Result<Var> {
        let (v, d) = self.dims2(table, "gather")?;
        if let Some(w) = &weights {
            if w.len() != rows.len() {
                return Err(Error::shape("gather weights length differs from row count"));
            }
        }
        let tv = self.value(table);
        let mut out = Vec::with_capacity(rows.len() * d);
        for (l, &r) in rows.iter().enumerate() {
            if r >= v {
                return Err(Error::shape(format!(
                    "row index {r} out of range for table of {v} rows"
                )));
            }
            let src = &tv[r * d..(r + 1) * d];
            match &weights {
                Some(w) => out.extend(src.iter().map(|x| x * w[l])),
                None => out.extend_from_slice(src),
            }
        }
        let shape = vec![rows.len(), d];
        let ng = self.needs(table);
        Ok(self.push(
            shape,
            Cow::Owned(out),
            Op::Gather {
                table,
                rows,
                weights,
            },
            ng,
        ))
    }

    /// `x[b, :] + bias` for `x: [B, n]`, `bias` with `n` elements.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (rows, n) = self.dims2(x, "add_bias")?;
        let bv = self.value(bias);
        if bv.len() != n {
            return Err(Error::shape(format!("bias of {} for width {n}", bv.len())));
        }
        let xv = self.value(x);
        let out = (0..rows * n).map(|i| xv[i] + bv[i % n]).collect();
        let ng = self.needs(x) || self.needs(bias);
        Ok(self.push(vec![rows, n], Cow::Owned(out), Op::AddBias(x, bias), ng))
    }

    /// `x[b, :] * s[b]` for `x: [B, n]`, `s` with `B` elements.
    pub fn scale_rows(&mut self, x: Var, s: Var) -> Result<Var> {
        let (rows, n) = self.dims2(x, "scale_rows")?;
        let sv = self.value(s);
        if sv.len() != rows {
            return Err(Error::shape(format!(
                "{} row scales for {rows} rows",
                sv.len()
            )));
        }
        let xv = self.value(x);
        let out = (0..rows * n).map(|i| xv[i] * sv[i / n]).collect();
        let ng = self.needs(x) || self.needs(s);
        Ok(self.push(vec![rows, n], Cow::Owned(out), Op::ScaleRows(x, s), ng))
    }

    /// `x[:, j] * w[j]` for `x: [B, n]`, `w` with `n` elements.
    pub fn scale_cols(&mut self, x: Var, w: Var) -> Result<Var> {
        let (rows, n) = self.dims2(x, "scale_cols")?;
        let wv = self.value(w);
        if wv.len() != n {
            return Err(Error::shape(format!(
                "{} column scales for width {n}",
                wv.len()
            )));
        }
        let xv = self.value(x);
        let out = (0..rows * n).map(|i| xv[i] * wv[i % n]).collect();
        let ng = self.needs(x) || self.needs(w);
        Ok(self.push(vec![rows, n], Cow::Owned(out), Op::ScaleCols(x, w), ng))
    }

    /// Row-wise softmax with max subtraction.
    pub fn softmax_rows(&mut self, x: Var) -> Result<Var> {
        let (rows, n) = self.dims2(x, "softmax_rows")?;
        let xv = self.value(x);
        let mut out = vec![0.0; rows * n];
        for r in 0..rows {
            let row = &xv[r * n..(r + 1) * n];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let dst = &mut out[r * n..(r + 1) * n];
            let mut total = 0.0;
            for (d, &v) in dst.iter_mut().zip(row) {
                *d = (v - max).exp();
                total += *d;
            }
            dst.iter_mut().for_each(|d| *d /= total);
        }
        let ng = self.needs(x);
        Ok(self.push(vec![rows, n], Cow::Owned(out), Op::SoftmaxRows(x), ng))
    }

    /// Inverted dropout: kept entries are scaled by `1 / (1 - rate)`.
    pub fn dropout<R: Rng + ?Sized>(
        &mut self,
        a: Var,
        rate: f64,
        training: bool,
        rng: &mut R,
    ) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::invalid(format!(
                "dropout rate {rate} outside [0, 1)"
            )));
        }
        if !training || rate == 0.0 {
            return Ok(a);
        }
        let keep = 1.0 / (1.0 - rate);
        let mask: Vec<f64> = (0..self.value(a).len())
            .map(|_| {
                if rng.random::<f64>() < rate {
                    0.0
                } else {
                    keep
                }
            })
            .collect();
        let out = self
            .value(a)
            .iter()
            .zip(&mask)
            .map(|(x, m)| x * m)
            .collect();
        let shape = self.shape(a).to_vec();
        let ng = self.needs(a);
        Ok(self.push(shape, Cow::Owned(out), Op::Dropout { input: a, mask }, ng))
    }

    /// Mean binary cross-entropy of `probs` against constant `targets` in `[0, 1]`.
    pub fn bce(&mut self, probs: Var, targets: Vec<f64>) -> Result<Var> {
        let pv = self.value(probs);
        if pv.len() != targets.len() || pv.is_empty() {
            return Err(Error::shape(format!(
                "bce over {} probabilities and {} targets",
                pv.len(),
                targets.len()
            )));
        }
        let total: f64 = pv.iter().zip(&targets).map(|(&p, &y)| bce_term(y, p)).sum();
        let value = total / pv.len() as f64;
        let ng = self.needs(probs);
        Ok(self.push(
            Vec::new(),
            Cow::Owned(vec![value]),
            Op::Bce { probs, targets },
            ng,
        ))
    }

    /// Like [`Self::bce`], but the targets are themselves recorded values and
    /// receive the gradient `(ln(1 - p) - ln p) / B`.
    pub fn bce_var(&mut self, probs: Var, targets: Var) -> Result<Var> {
        let (pv, tv) = (self.value(probs), self.value(targets));
        if pv.len() != tv.len() || pv.is_empty() {
            return Err(Error::shape(format!(
                "bce over {} probabilities and {} targets",
                pv.len(),
                tv.len()
            )));
        }
        let total: f64 = pv.iter().zip(tv).map(|(&p, &y)| bce_term(y, p)).sum();
        let value = total / pv.len() as f64;
        let ng = self.needs(probs) || self.needs(targets);
        Ok(self.push(
            Vec::new(),
            Cow::Owned(vec![value]),
            Op::BceVar { probs, targets },
            ng,
        ))
    }

    /// One compressed-interaction layer.
    ///
    /// `prev: [B, prev_maps * dim]`, `base: [B, fields * dim]`,
    /// `weight: [maps, prev_maps * fields]`; returns `[B, maps * dim]` with
    /// `out[b, h, k] = sum_{i,j} weight[h, i*fields + j] * prev[b, i, k] * base[b, j, k]`.
    pub fn cin_layer(&mut self, prev: Var, base: Var, weight: Var, dim: usize) -> Result<Var> {
        let (rows, pw) = self.dims2(prev, "cin_layer")?;
        let (rows2, bw) = self.dims2(base, "cin_layer")?;
        let (maps, ww) = self.dims2(weight, "cin_layer")?;
        if dim == 0 || pw % dim != 0 || bw % dim != 0 || rows != rows2 {
            return Err(Error::shape("cin_layer input widths inconsistent with dim"));
        }
        let (prev_maps, fields) = (pw / dim, bw / dim);
        if ww != prev_maps * fields {
            return Err(Error::shape(format!(
                "cin weight width {ww}, expected {}",
                prev_maps * fields
            )));
        }
        let (pv, bv, wv) = (self.value(prev), self.value(base), self.value(weight));
        let mut out = vec![0.0; rows * maps * dim];
        let mut z = vec![0.0; dim];
        for b in 0..rows {
            let o = &mut out[b * maps * dim..(b + 1) * maps * dim];
            for i in 0..prev_maps {
                let pi = &pv[(b * prev_maps + i) * dim..(b * prev_maps + i + 1) * dim];
                for j in 0..fields {
                    let bj = &bv[(b * fields + j) * dim..(b * fields + j + 1) * dim];
                    z.iter_mut()
                        .zip(pi.iter().zip(bj))
                        .for_each(|(z, (p, q))| *z = p * q);
                    for h in 0..maps {
                        let w = wv[h * ww + i * fields + j];
                        o[h * dim..(h + 1) * dim]
                            .iter_mut()
                            .zip(&z)
                            .for_each(|(o, z)| *o += w * z);
                    }
                }
            }
        }
        let ng = self.needs(prev) || self.needs(base) || self.needs(weight);
        Ok(self.push(
            vec![rows, maps * dim],
            Cow::Owned(out),
            Op::Cin {
                prev,
                base,
                weight,
                prev_maps,
                fields,
                maps,
                dim,
            },
            ng,
        ))
    }

    /// Replays adjoints from a scalar `loss` back to every recorded input.
    ///
    /// Trainable leaves recorded before `loss` that it does not depend on
    /// receive an all-zero gradient.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let node = &self.nodes[loss.0];
        if node.value.len() != 1 {
            return Err(Error::shape(format!(
                "backward needs a scalar loss, got shape {:?}",
                node.shape
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[i] = Some(g);
        }
        for (i, node) in self.nodes[..=loss.0].iter().enumerate() {
            if node.needs_grad && matches!(node.op, Op::Leaf) && grads[i].is_none() {
                grads[i] = Some(vec![0.0; node.value.len()]);
            }
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node<'a>, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let val = |v: Var| -> &[f64] { &self.nodes[v.0].value };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = (self.nodes[a.0].shape[0], self.nodes[a.0].shape[1]);
                let n = self.nodes[b.0].shape[1];
                let (av, bv) = (val(*a), val(*b));
                if self.needs(*a) {
                    let mut ga = vec![0.0; m * k];
                    for i in 0..m {
                        let gi = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            let brow = &bv[p * n..(p + 1) * n];
                            ga[i * k + p] = gi.iter().zip(brow).map(|(x, y)| x * y).sum();
                        }
                    }
                    accumulate(grads, *a, ga);
                }
                if self.needs(*b) {
                    let mut gb = vec![0.0; k * n];
                    for i in 0..m {
                        let gi = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            let x = av[i * k + p];
                            if x == 0.0 {
                                continue;
                            }
                            gb[p * n..(p + 1) * n]
                                .iter_mut()
                                .zip(gi)
                                .for_each(|(d, s)| *d += x * s);
                        }
                    }
                    accumulate(grads, *b, gb);
                }
            }
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => {
                let sign = if matches!(node.op, Op::Sub(..)) {
                    -1.0
                } else {
                    1.0
                };
                let is_mul = matches!(node.op, Op::Mul(..));
                let (av, bv) = (val(*a), val(*b));
                let pick = |v: &[f64], i: usize| if v.len() == 1 { v[0] } else { v[i] };
                for (side, other, s) in [(*a, bv, 1.0), (*b, av, sign)] {
                    if !self.needs(side) {
                        continue;
                    }
                    let per: Vec<f64> = (0..g.len())
                        .map(|i| {
                            if is_mul {
                                g[i] * pick(other, i)
                            } else {
                                s * g[i]
                            }
                        })
                        .collect();
                    let delta = if self.nodes[side.0].value.len() == 1 && g.len() != 1 {
                        vec![per.iter().sum()]
                    } else {
                        per
                    };
                    accumulate(grads, side, delta);
                }
            }
            Op::Scale(a, c) => accumulate(grads, *a, g.iter().map(|x| x * c).collect()),
            Op::Relu(a) => {
                let av = val(*a);
                accumulate(
                    grads,
                    *a,
                    g.iter()
                        .zip(av)
                        .map(|(g, &x)| if x > 0.0 { *g } else { 0.0 })
                        .collect(),
                );
            }
            Op::Sigmoid(a) => {
                let y = &node.value;
                accumulate(
                    grads,
                    *a,
                    g.iter()
                        .zip(y.iter())
                        .map(|(g, y)| g * y * (1.0 - y))
                        .collect(),
                );
            }
            Op::Square(a) => {
                let av = val(*a);
                accumulate(
                    grads,
                    *a,
                    g.iter().zip(av).map(|(g, x)| 2.0 * x * g).collect(),
                );
            }
            Op::ReduceSum {
                input,
                outer,
                len,
                inner,
            } => {
                let mut ga = vec![0.0; outer * len * inner];
                for o in 0..*outer {
                    for l in 0..*len {
                        ga[(o * len + l) * inner..(o * len + l + 1) * inner]
                            .copy_from_slice(&g[o * inner..(o + 1) * inner]);
                    }
                }
                accumulate(grads, *input, ga);
            }
            Op::Reshape(a) => accumulate(grads, *a, g.to_vec()),
            Op::Transpose(a) => {
                let (r, c) = (self.nodes[a.0].shape[0], self.nodes[a.0].shape[1]);
                let mut ga = vec![0.0; r * c];
                for i in 0..r {
                    for j in 0..c {
                        ga[i * c + j] = g[j * r + i];
                    }
                }
                accumulate(grads, *a, ga);
            }
            Op::Concat(parts) => {
                let rows = node.shape[0];
                let total = node.shape[1];
                let mut offset = 0;
                for p in parts {
                    let w = self.nodes[p.0].shape[1];
                    if self.needs(*p) {
                        let mut gp = Vec::with_capacity(rows * w);
                        for r in 0..rows {
                            gp.extend_from_slice(&g[r * total + offset..r * total + offset + w]);
                        }
                        accumulate(grads, *p, gp);
                    }
                    offset += w;
                }
            }
            Op::Gather {
                table,
                rows,
                weights,
            } => {
                let shape = &self.nodes[table.0].shape;
                let d = shape[1];
                let mut gt = vec![0.0; shape[0] * d];
                for (l, &r) in rows.iter().enumerate() {
                    let w = weights.as_ref().map_or(1.0, |w| w[l]);
                    gt[r * d..(r + 1) * d]
                        .iter_mut()
                        .zip(&g[l * d..(l + 1) * d])
                        .for_each(|(t, s)| *t += w * s);
                }
                accumulate(grads, *table, gt);
            }
            Op::AddBias(x, b) => {
                let n = node.shape[1];
                if self.needs(*x) {
                    accumulate(grads, *x, g.to_vec());
                }
                if self.needs(*b) {
                    let mut gb = vec![0.0; n];
                    g.chunks(n)
                        .for_each(|row| gb.iter_mut().zip(row).for_each(|(d, s)| *d += s));
                    accumulate(grads, *b, gb);
                }
            }
            Op::ScaleRows(x, s) => {
                let n = node.shape[1];
                let (xv, sv) = (val(*x), val(*s));
                if self.needs(*x) {
                    accumulate(
                        grads,
                        *x,
                        g.iter().enumerate().map(|(i, g)| g * sv[i / n]).collect(),
                    );
                }
                if self.needs(*s) {
                    let gs = g
                        .chunks(n)
                        .zip(xv.chunks(n))
                        .map(|(gr, xr)| gr.iter().zip(xr).map(|(a, b)| a * b).sum())
                        .collect();
                    accumulate(grads, *s, gs);
                }
            }
            Op::ScaleCols(x, w) => {
                let n = node.shape[1];
                let (xv, wv) = (val(*x), val(*w));
                if self.needs(*x) {
                    accumulate(
                        grads,
                        *x,
                        g.iter().enumerate().map(|(i, g)| g * wv[i % n]).collect(),
                    );
                }
                if self.needs(*w) {
                    let mut gw = vec![0.0; n];
                    for (i, (g, x)) in g.iter().zip(xv).enumerate() {
                        gw[i % n] += g * x;
                    }
                    accumulate(grads, *w, gw);
                }
            }
            Op::SoftmaxRows(x) => {
                let n = node.shape[1];
                let y = &node.value;
                let mut gx = vec![0.0; y.len()];
                for ((gr, yr), dst) in g.chunks(n).zip(y.chunks(n)).zip(gx.chunks_mut(n)) {
                    let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                    for ((d, g), y) in dst.iter_mut().zip(gr).zip(yr) {
                        *d = y * (g - dot);
                    }
                }
                accumulate(grads, *x, gx);
            }
            Op::Dropout { input, mask } => {
                accumulate(
                    grads,
                    *input,
                    g.iter().zip(mask).map(|(g, m)| g * m).collect(),
                );
            }
            Op::Bce { probs, targets } => {
                let pv = val(*probs);
                let n = pv.len() as f64;
                let gp = pv
                    .iter()
                    .zip(targets)
                    .map(|(&p, &y)| {
                        let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
                        g[0] * (-(y / p) + (1.0 - y) / (1.0 - p)) / n
                    })
                    .collect();
                accumulate(grads, *probs, gp);
            }
            Op::BceVar { probs, targets } => {
                let (pv, tv) = (val(*probs), val(*targets));
                let n = pv.len() as f64;
                let mut gp = Vec::with_capacity(pv.len());
                let mut gt = Vec::with_capacity(pv.len());
                for (&p, &y) in pv.iter().zip(tv) {
                    let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
                    gp.push(g[0] * (-(y / p) + (1.0 - y) / (1.0 - p)) / n);
                    gt.push(g[0] * ((1.0 - p).ln() - p.ln()) / n);
                }
                accumulate(grads, *probs, gp);
                accumulate(grads, *targets, gt);
            }
            Op::Cin {
                prev,
                base,
                weight,
                prev_maps,
                fields,
                maps,
                dim,
            } => {
                let (prev_maps, fields, maps, dim) = (*prev_maps, *fields, *maps, *dim);
                let rows = node.shape[0];
                let (pv, bv, wv) = (val(*prev), val(*base), val(*weight));
                let ww = prev_maps * fields;
                let mut gp = vec![0.0; pv.len()];
                let mut gb = vec![0.0; bv.len()];
                let mut gw = vec![0.0; wv.len()];
                let mut t = vec![0.0; dim];
                for b in 0..rows {
                    let gr = &g[b * maps * dim..(b + 1) * maps * dim];
                    for i in 0..prev_maps {
                        let po = (b * prev_maps + i) * dim;
                        for j in 0..fields {
                            let bo = (b * fields + j) * dim;
                            t.iter_mut().for_each(|x| *x = 0.0);
                            for h in 0..maps {
                                let w = wv[h * ww + i * fields + j];
                                let gh = &gr[h * dim..(h + 1) * dim];
                                let mut acc = 0.0;
                                for k in 0..dim {
                                    t[k] += gh[k] * w;
                                    acc += gh[k] * pv[po + k] * bv[bo + k];
                                }
                                gw[h * ww + i * fields + j] += acc;
                            }
                            for k in 0..dim {
                                gp[po + k] += t[k] * bv[bo + k];
                                gb[bo + k] += t[k] * pv[po + k];
                            }
                        }
                    }
                }
                if self.needs(*prev) {
                    accumulate(grads, *prev, gp);
                }
                if self.needs(*base) {
                    accumulate(grads, *base, gb);
                }
                if self.needs(*weight) {
                    accumulate(grads, *weight, gw);
                }
            }
        }
    }
}
