//! Reverse-mode gradient tape over the primitive set the model needs.
//!
//! Every operation appends a node holding its forward value. Nodes whose
//! inputs are all constants are marked as not requiring gradients, so data
//! tensors (features, stored positional encodings) cost nothing at backward
//! time. Complex values live on the tape packed as a `[2, d, L]` tensor, real
//! block first.

use std::sync::atomic::{AtomicU64, Ordering};

use super::dft::{DftPlan, Direction};
use super::tensor::Tensor;
use super::NumericsError;

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u64,
    idx: usize,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Affine(Var, f64),
    Concat(Vec<Var>),
    Reshape(Var),
    Relu(Var),
    Tanh(Var),
    Sigmoid(Var),
    MeanRows(Var),
    Sum(Var),
    Norm2(Var),
    LogClamped(Var, f64),
    Dft(Var),
    ComplexMul(Var, Var, Var),
    Idft(Var),
    FilterKernel(Var, Var, Var),
    RowDot(Var, Var),
    AddN(Vec<Var>),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Records operations for one forward pass.
#[derive(Debug)]
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients of a scalar with respect to every node that required one.
#[derive(Debug)]
pub struct Gradients {
    tape: u64,
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        if v.tape != self.tape {
            return None;
        }
        self.grads.get(v.idx).and_then(|g| g.as_ref())
    }
}

/// Shapes of a matmul operand pair viewed as `(m × k) · (k × n)`.
struct MatDims {
    m: usize,
    k: usize,
    n: usize,
}

fn matmul_dims(a: &[usize], b: &[usize]) -> Option<(MatDims, Vec<usize>)> {
    let (m, ka, a_vec) = match a.len() {
        1 => (1, a[0], true),
        2 => (a[0], a[1], false),
        _ => return None,
    };
    let (kb, n, b_vec) = match b.len() {
        1 => (b[0], 1, true),
        2 => (b[0], b[1], false),
        _ => return None,
    };
    if ka != kb {
        return None;
    }
    let out_shape = match (a_vec, b_vec) {
        (false, false) => vec![m, n],
        (false, true) => vec![m],
        (true, false) => vec![n],
        (true, true) => vec![],
    };
    Some((MatDims { m, k: ka, n }, out_shape))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn gemm(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    if n == 1 {
        for (i, o) in out.iter_mut().enumerate() {
            *o = dot(&a[i * k..(i + 1) * k], b);
        }
        return;
    }
    for i in 0..m {
        let out_row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    }
}

/// Accumulator of node `idx`, created as zeros on first use.
fn grad_slot(grads: &mut [Option<Vec<f64>>], idx: usize, len: usize) -> &mut Vec<f64> {
    grads[idx].get_or_insert_with(|| vec![0.0; len])
}

impl Tape {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var {
            tape: self.id,
            idx: self.nodes.len() - 1,
        }
    }

    fn node(&self, v: Var) -> &Node {
        debug_assert_eq!(v.tape, self.id, "variable from another tape");
        &self.nodes[v.idx]
    }

    fn grad_flag(&self, vars: &[Var]) -> bool {
        vars.iter().any(|&v| self.node(v).needs_grad)
    }

    /// Constant input; receives no gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Learnable input; backward reports its gradient.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.node(v).value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.node(v).value.shape()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let (d, out_shape) =
            matmul_dims(sa, sb).ok_or_else(|| NumericsError::shape("matmul", sa, sb))?;
        let mut out = vec![0.0; d.m * d.n];
        gemm(
            self.value(a).data(),
            self.value(b).data(),
            d.m,
            d.k,
            d.n,
            &mut out,
        );
        let flag = self.grad_flag(&[a, b]);
        Ok(self.push(
            Tensor::new(out_shape, out)?,
            Op::MatMul(a, b),
            flag,
        ))
    }

    fn zip_same(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var, NumericsError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(NumericsError::shape(name, ta.shape(), tb.shape()));
        }
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let value = Tensor::new(ta.shape().to_vec(), data)?;
        let flag = self.grad_flag(&[a, b]);
        Ok(self.push(value, op, flag))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.zip_same("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.zip_same("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    /// Elementwise product of equal shapes.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.zip_same("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// `scale · a + shift`, elementwise.
    pub fn affine(&mut self, a: Var, scale: f64, shift: f64) -> Var {
        let value = self.value(a).map(|x| scale * x + shift);
        let flag = self.grad_flag(&[a]);
        self.push(value, Op::Affine(a, scale), flag)
    }

    pub fn scale(&mut self, a: Var, scale: f64) -> Var {
        self.affine(a, scale, 0.0)
    }

    /// Concatenates vectors (or scalars) end to end.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, NumericsError> {
        let mut data = Vec::new();
        for &p in parts {
            let t = self.value(p);
            if t.rank() > 1 {
                return Err(NumericsError::Rank {
                    op: "concat",
                    shape: t.shape().to_vec(),
                });
            }
            data.extend_from_slice(t.data());
        }
        let flag = self.grad_flag(parts);
        Ok(self.push(Tensor::vector(data), Op::Concat(parts.to_vec()), flag))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var, NumericsError> {
        let t = self.value(a);
        if shape.iter().product::<usize>() != t.len() {
            return Err(NumericsError::shape("reshape", t.shape(), shape));
        }
        let value = t.clone().reshape_unchecked(shape.to_vec());
        let flag = self.grad_flag(&[a]);
        Ok(self.push(value, Op::Reshape(a), flag))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| x.max(0.0));
        let flag = self.grad_flag(&[a]);
        self.push(value, Op::Relu(a), flag)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::tanh);
        let flag = self.grad_flag(&[a]);
        self.push(value, Op::Tanh(a), flag)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).map(sigmoid);
        let flag = self.grad_flag(&[a]);
        self.push(value, Op::Sigmoid(a), flag)
    }

    /// Mean over the rows of a matrix; zero rows give the zero vector.
    pub fn mean_rows(&mut self, a: Var) -> Result<Var, NumericsError> {
        let t = self.value(a);
        if t.rank() != 2 {
            return Err(NumericsError::Rank {
                op: "mean_rows",
                shape: t.shape().to_vec(),
            });
        }
        let (r, c) = (t.rows(), t.cols());
        let mut out = vec![0.0; c];
        if r > 0 {
            for i in 0..r {
                for (o, x) in out.iter_mut().zip(t.row(i)) {
                    *o += x;
                }
            }
            out.iter_mut().for_each(|o| *o /= r as f64);
        }
        let flag = self.grad_flag(&[a]);
        Ok(self.push(Tensor::vector(out), Op::MeanRows(a), flag))
    }

    /// `m · w` for an `r × c` matrix and a length-`c` (or `c × 1`) weight.
    pub fn weighted_sum_cols(&mut self, m: Var, w: Var) -> Result<Var, NumericsError> {
        let w_shape = self.shape(w).to_vec();
        let w_vec = match w_shape.as_slice() {
            [c, 1] => self.reshape(w, &[*c])?,
            [_] => w,
            _ => return Err(NumericsError::shape("weighted_sum_cols", self.shape(m), &w_shape)),
        };
        self.matmul(m, w_vec)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        let flag = self.grad_flag(&[a]);
        self.push(Tensor::scalar(s), Op::Sum(a), flag)
    }

    /// Euclidean norm; the subgradient at the origin is zero.
    pub fn norm2(&mut self, a: Var) -> Var {
        let n = self.value(a).data().iter().map(|x| x * x).sum::<f64>().sqrt();
        let flag = self.grad_flag(&[a]);
        self.push(Tensor::scalar(n), Op::Norm2(a), flag)
    }

    /// `ln(clamp(a, eps, 1 − eps))`; clamped entries pass no gradient.
    pub fn log_clamped(&mut self, a: Var, eps: f64) -> Var {
        let value = self.value(a).map(|x| x.clamp(eps, 1.0 - eps).ln());
        let flag = self.grad_flag(&[a]);
        self.push(value, Op::LogClamped(a, eps), flag)
    }

    /// Row-wise forward DFT of a `d × L` tensor into a packed `[2, d, L]`.
    pub fn dft(&mut self, a: Var) -> Result<Var, NumericsError> {
        let t = self.value(a);
        if t.rank() != 2 || t.cols() == 0 {
            return Err(NumericsError::Rank {
                op: "dft",
                shape: t.shape().to_vec(),
            });
        }
        let (d, l) = (t.rows(), t.cols());
        let plan = DftPlan::cached(l);
        let zeros = vec![0.0; l];
        let mut out = vec![0.0; 2 * d * l];
        let (re, im) = out.split_at_mut(d * l);
        for r in 0..d {
            plan.transform(
                t.row(r),
                &zeros,
                Direction::Forward,
                &mut re[r * l..(r + 1) * l],
                &mut im[r * l..(r + 1) * l],
            );
        }
        let flag = self.grad_flag(&[a]);
        Ok(self.push(Tensor::new(vec![2, d, l], out)?, Op::Dft(a), flag))
    }

    /// Elementwise product of a packed spectrum with a complex filter given
    /// as separate `d × L` real and imaginary tensors.
    pub fn complex_mul(
        &mut self,
        spec: Var,
        filter_re: Var,
        filter_im: Var,
    ) -> Result<Var, NumericsError> {
        let s = self.value(spec);
        let (fr, fi) = (self.value(filter_re), self.value(filter_im));
        if s.rank() != 3 || s.shape()[0] != 2 || fr.shape() != &s.shape()[1..] || fr.shape() != fi.shape() {
            return Err(NumericsError::shape("complex_mul", s.shape(), fr.shape()));
        }
        let n = fr.len();
        let (sr, si) = s.data().split_at(n);
        let mut out = vec![0.0; 2 * n];
        for i in 0..n {
            let (a, b) = (sr[i], si[i]);
            let (c, d) = (fr.data()[i], fi.data()[i]);
            out[i] = a * c - b * d;
            out[n + i] = a * d + b * c;
        }
        let value = Tensor::new(s.shape().to_vec(), out)?;
        let flag = self.grad_flag(&[spec, filter_re, filter_im]);
        Ok(self.push(value, Op::ComplexMul(spec, filter_re, filter_im), flag))
    }

    /// Row-wise normalized inverse DFT of a packed spectrum, real part kept.
    pub fn idft(&mut self, spec: Var) -> Result<Var, NumericsError> {
        let s = self.value(spec);
        if s.rank() != 3 || s.shape()[0] != 2 || s.shape()[2] == 0 {
            return Err(NumericsError::Rank {
                op: "idft",
                shape: s.shape().to_vec(),
            });
        }
        let (d, l) = (s.shape()[1], s.shape()[2]);
        let plan = DftPlan::cached(l);
        let (sr, si) = s.data().split_at(d * l);
        let mut out = vec![0.0; d * l];
        let mut scratch = vec![0.0; l];
        for r in 0..d {
            plan.transform(
                &sr[r * l..(r + 1) * l],
                &si[r * l..(r + 1) * l],
                Direction::Backward,
                &mut out[r * l..(r + 1) * l],
                &mut scratch,
            );
        }
        let scale = 1.0 / l as f64;
        out.iter_mut().for_each(|x| *x *= scale);
        let flag = self.grad_flag(&[spec]);
        Ok(self.push(Tensor::matrix(d, l, out)?, Op::Idft(spec), flag))
    }

    /// Collapses a complex filter and a length-`L` pooling vector into the
    /// real `d × L` kernel `G` with
    /// `weighted_sum_cols(idft(F ⊙ dft(H)), s) = row_dot(H, G)` for every `H`.
    pub fn filter_kernel(
        &mut self,
        filter_re: Var,
        filter_im: Var,
        pool: Var,
    ) -> Result<Var, NumericsError> {
        let (fr, fi, s) = (self.value(filter_re), self.value(filter_im), self.value(pool));
        if fr.rank() != 2 || fr.shape() != fi.shape() || fr.cols() == 0 || s.len() != fr.cols() {
            return Err(NumericsError::shape("filter_kernel", fr.shape(), s.shape()));
        }
        let (d, l) = (fr.rows(), fr.cols());
        let plan = DftPlan::cached(l);
        // The direct sums keep exactly representable twiddles exact, and
        // entries inside the summation's rounding bound are flushed to zero,
        // so an identity filter with one-hot pooling yields a one-hot kernel.
        let (sr, si) = pool_spectrum(&plan, s.data());
        let mut out = vec![0.0; d * l];
        let (mut pr, mut pi) = (vec![0.0; l], vec![0.0; l]);
        let mut scratch = vec![0.0; l];
        let scale = 1.0 / l as f64;
        for r in 0..d {
            let mut mass = 0.0;
            for k in 0..l {
                let (a, b) = (fr.data()[r * l + k], fi.data()[r * l + k]);
                pr[k] = a * sr[k] - b * si[k];
                pi[k] = a * si[k] + b * sr[k];
                mass += pr[k].abs() + pi[k].abs();
            }
            let floor = l as f64 * f64::EPSILON * mass;
            let row = &mut out[r * l..(r + 1) * l];
            plan.transform_naive(&pr, &pi, Direction::Forward, row, &mut scratch);
            for x in row.iter_mut() {
                *x = if x.abs() <= floor { 0.0 } else { *x * scale };
            }
        }
        let flag = self.grad_flag(&[filter_re, filter_im, pool]);
        Ok(self.push(
            Tensor::matrix(d, l, out)?,
            Op::FilterKernel(filter_re, filter_im, pool),
            flag,
        ))
    }

    /// Sum of equal-shape values.
    pub fn add_n(&mut self, parts: &[Var]) -> Result<Var, NumericsError> {
        let first = parts
            .first()
            .ok_or_else(|| NumericsError::shape("add_n", &[], &[]))?;
        let mut acc = self.value(*first).clone();
        for &p in &parts[1..] {
            let t = self.value(p);
            if t.shape() != acc.shape() {
                return Err(NumericsError::shape("add_n", acc.shape(), t.shape()));
            }
            acc.data_mut().iter_mut().zip(t.data()).for_each(|(a, b)| *a += b);
        }
        let flag = self.grad_flag(parts);
        Ok(self.push(acc, Op::AddN(parts.to_vec()), flag))
    }

    /// Per-row dot product of two equal-shape matrices.
    pub fn row_dot(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rank() != 2 || ta.shape() != tb.shape() {
            return Err(NumericsError::shape("row_dot", ta.shape(), tb.shape()));
        }
        let out = (0..ta.rows())
            .map(|r| ta.row(r).iter().zip(tb.row(r)).map(|(x, y)| x * y).sum())
            .collect();
        let flag = self.grad_flag(&[a, b]);
        Ok(self.push(Tensor::vector(out), Op::RowDot(a, b), flag))
    }

    /// Propagates `∂loss/∂node` back to every node that requires it.
    pub fn backward(&self, loss: Var) -> Result<Gradients, NumericsError> {
        if loss.tape != self.id || loss.idx >= self.nodes.len() {
            return Err(NumericsError::NotOnTape);
        }
        if self.nodes[loss.idx].value.len() != 1 {
            return Err(NumericsError::NonScalarLoss(
                self.nodes[loss.idx].value.shape().to_vec(),
            ));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.idx + 1];
        grads[loss.idx] = Some(vec![1.0]);
        for i in (0..=loss.idx).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[i] = Some(g);
        }
        let grads = grads
            .into_iter()
            .enumerate()
            .map(|(i, g)| {
                g.map(|data| {
                    Tensor::new(self.nodes[i].value.shape().to_vec(), data)
                        .expect("gradient shape mirrors value shape")
                })
            })
            .collect();
        Ok(Gradients {
            tape: self.id,
            grads,
        })
    }

    fn accumulate(&self, grads: &mut [Option<Vec<f64>>], v: Var, delta: Vec<f64>) {
        if !self.nodes[v.idx].needs_grad {
            return;
        }
        match &mut grads[v.idx] {
            Some(acc) => acc.iter_mut().zip(delta).for_each(|(a, d)| *a += d),
            slot @ None => *slot = Some(delta),
        }
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.idx].needs_grad
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (&self.nodes[a.idx].value, &self.nodes[b.idx].value);
                let (d, _) = matmul_dims(ta.shape(), tb.shape()).expect("checked at record");
                let (ad, bd) = (ta.data(), tb.data());
                if self.needs(*a) {
                    // dA += G · Bᵀ
                    let da = grad_slot(grads, a.idx, d.m * d.k);
                    for i in 0..d.m {
                        let g_row = &g[i * d.n..(i + 1) * d.n];
                        let da_row = &mut da[i * d.k..(i + 1) * d.k];
                        if d.n == 1 {
                            let gi = g_row[0];
                            if gi != 0.0 {
                                da_row.iter_mut().zip(bd).for_each(|(o, &bv)| *o += gi * bv);
                            }
                        } else {
                            for (p, o) in da_row.iter_mut().enumerate() {
                                *o += dot(g_row, &bd[p * d.n..(p + 1) * d.n]);
                            }
                        }
                    }
                }
                if self.needs(*b) {
                    // dB += Aᵀ · G
                    let db = grad_slot(grads, b.idx, d.k * d.n);
                    for i in 0..d.m {
                        let g_row = &g[i * d.n..(i + 1) * d.n];
                        let a_row = &ad[i * d.k..(i + 1) * d.k];
                        if d.n == 1 {
                            let gi = g_row[0];
                            if gi != 0.0 {
                                db.iter_mut().zip(a_row).for_each(|(o, &av)| *o += gi * av);
                            }
                            continue;
                        }
                        for (p, &av) in a_row.iter().enumerate() {
                            if av == 0.0 {
                                continue;
                            }
                            for (o, &gv) in db[p * d.n..(p + 1) * d.n].iter_mut().zip(g_row) {
                                *o += av * gv;
                            }
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.to_vec());
                self.accumulate(grads, *b, g.to_vec());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.to_vec());
                self.accumulate(grads, *b, g.iter().map(|x| -x).collect());
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (&self.nodes[a.idx].value, &self.nodes[b.idx].value);
                if self.needs(*a) {
                    let da = g.iter().zip(tb.data()).map(|(x, y)| x * y).collect();
                    self.accumulate(grads, *a, da);
                }
                if self.needs(*b) {
                    let db = g.iter().zip(ta.data()).map(|(x, y)| x * y).collect();
                    self.accumulate(grads, *b, db);
                }
            }
            Op::Affine(a, scale) => {
                self.accumulate(grads, *a, g.iter().map(|x| x * scale).collect());
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                for p in parts {
                    let n = self.nodes[p.idx].value.len();
                    self.accumulate(grads, *p, g[offset..offset + n].to_vec());
                    offset += n;
                }
            }
            Op::Reshape(a) => self.accumulate(grads, *a, g.to_vec()),
            Op::Relu(a) => {
                let x = self.nodes[a.idx].value.data();
                let da = g
                    .iter()
                    .zip(x)
                    .map(|(gv, &xv)| if xv > 0.0 { *gv } else { 0.0 })
                    .collect();
                self.accumulate(grads, *a, da);
            }
            Op::Tanh(a) => {
                let y = node.value.data();
                let da = g.iter().zip(y).map(|(gv, yv)| gv * (1.0 - yv * yv)).collect();
                self.accumulate(grads, *a, da);
            }
            Op::Sigmoid(a) => {
                let y = node.value.data();
                let da = g.iter().zip(y).map(|(gv, yv)| gv * yv * (1.0 - yv)).collect();
                self.accumulate(grads, *a, da);
            }
            Op::MeanRows(a) => {
                let t = &self.nodes[a.idx].value;
                let (r, c) = (t.rows(), t.cols());
                let mut da = vec![0.0; r * c];
                if r > 0 {
                    let inv = 1.0 / r as f64;
                    for i in 0..r {
                        for j in 0..c {
                            da[i * c + j] = g[j] * inv;
                        }
                    }
                }
                self.accumulate(grads, *a, da);
            }
            Op::Sum(a) => {
                let n = self.nodes[a.idx].value.len();
                self.accumulate(grads, *a, vec![g[0]; n]);
            }
            Op::Norm2(a) => {
                let x = self.nodes[a.idx].value.data();
                let norm = node.value.item();
                let da = if norm > 0.0 {
                    x.iter().map(|xv| g[0] * xv / norm).collect()
                } else {
                    vec![0.0; x.len()]
                };
                self.accumulate(grads, *a, da);
            }
            Op::LogClamped(a, eps) => {
                let x = self.nodes[a.idx].value.data();
                let da = g
                    .iter()
                    .zip(x)
                    .map(|(gv, &xv)| {
                        if xv > *eps && xv < 1.0 - eps {
                            gv / xv
                        } else {
                            0.0
                        }
                    })
                    .collect();
                self.accumulate(grads, *a, da);
            }
            Op::Dft(a) => {
                let (d, l) = (node.value.shape()[1], node.value.shape()[2]);
                let plan = DftPlan::cached(l);
                let (gr, gi) = g.split_at(d * l);
                let mut da = vec![0.0; d * l];
                let mut scratch = vec![0.0; l];
                for r in 0..d {
                    plan.transform(
                        &gr[r * l..(r + 1) * l],
                        &gi[r * l..(r + 1) * l],
                        Direction::Backward,
                        &mut da[r * l..(r + 1) * l],
                        &mut scratch,
                    );
                }
                self.accumulate(grads, *a, da);
            }
            Op::ComplexMul(spec, fr, fi) => {
                let s = self.nodes[spec.idx].value.data();
                let (frv, fiv) = (
                    self.nodes[fr.idx].value.data(),
                    self.nodes[fi.idx].value.data(),
                );
                let n = frv.len();
                let (sr, si) = s.split_at(n);
                let (gr, gi) = g.split_at(n);
                if self.needs(*spec) {
                    let mut ds = vec![0.0; 2 * n];
                    for i in 0..n {
                        ds[i] = gr[i] * frv[i] + gi[i] * fiv[i];
                        ds[n + i] = -gr[i] * fiv[i] + gi[i] * frv[i];
                    }
                    self.accumulate(grads, *spec, ds);
                }
                if self.needs(*fr) {
                    let d: Vec<f64> = (0..n).map(|i| gr[i] * sr[i] + gi[i] * si[i]).collect();
                    self.accumulate(grads, *fr, d);
                }
                if self.needs(*fi) {
                    let d: Vec<f64> = (0..n).map(|i| -gr[i] * si[i] + gi[i] * sr[i]).collect();
                    self.accumulate(grads, *fi, d);
                }
            }
            Op::Idft(spec) => {
                let (d, l) = (node.value.rows(), node.value.cols());
                let plan = DftPlan::cached(l);
                let zeros = vec![0.0; l];
                let mut ds = vec![0.0; 2 * d * l];
                let (dr, di) = ds.split_at_mut(d * l);
                for r in 0..d {
                    plan.transform(
                        &g[r * l..(r + 1) * l],
                        &zeros,
                        Direction::Forward,
                        &mut dr[r * l..(r + 1) * l],
                        &mut di[r * l..(r + 1) * l],
                    );
                }
                let scale = 1.0 / l as f64;
                ds.iter_mut().for_each(|x| *x *= scale);
                self.accumulate(grads, *spec, ds);
            }
            Op::FilterKernel(fr, fi, pool) => {
                let (frv, fiv) = (
                    self.nodes[fr.idx].value.data(),
                    self.nodes[fi.idx].value.data(),
                );
                let sv = self.nodes[pool.idx].value.data();
                let (d, l) = (node.value.rows(), node.value.cols());
                let plan = DftPlan::cached(l);
                let (sr, si) = pool_spectrum(&plan, sv);
                let zeros = vec![0.0; l];
                let scale = 1.0 / l as f64;
                let mut dfr = vec![0.0; d * l];
                let mut dfi = vec![0.0; d * l];
                let (mut dsr, mut dsi) = (vec![0.0; l], vec![0.0; l]);
                let (mut pr, mut pi) = (vec![0.0; l], vec![0.0; l]);
                for r in 0..d {
                    plan.transform(&g[r * l..(r + 1) * l], &zeros, Direction::Backward, &mut pr, &mut pi);
                    for k in 0..l {
                        let (gpr, gpi) = (pr[k] * scale, pi[k] * scale);
                        let i = r * l + k;
                        dfr[i] = gpr * sr[k] + gpi * si[k];
                        dfi[i] = -gpr * si[k] + gpi * sr[k];
                        dsr[k] += gpr * frv[i] + gpi * fiv[i];
                        dsi[k] += -gpr * fiv[i] + gpi * frv[i];
                    }
                }
                self.accumulate(grads, *fr, dfr);
                self.accumulate(grads, *fi, dfi);
                if self.needs(*pool) {
                    let mut ds = vec![0.0; l];
                    plan.transform(&dsr, &dsi, Direction::Forward, &mut ds, &mut pr);
                    self.accumulate(grads, *pool, ds);
                }
            }
            Op::AddN(parts) => {
                for p in parts {
                    self.accumulate(grads, *p, g.to_vec());
                }
            }
            Op::RowDot(a, b) => {
                let (ta, tb) = (&self.nodes[a.idx].value, &self.nodes[b.idx].value);
                let c = ta.cols();
                let outer = |m: &Tensor| -> Vec<f64> {
                    m.data().iter().enumerate().map(|(i, x)| g[i / c] * x).collect()
                };
                if self.needs(*a) {
                    self.accumulate(grads, *a, outer(tb));
                }
                if self.needs(*b) {
                    self.accumulate(grads, *b, outer(ta));
                }
            }
        }
    }
}

/// `S_k = Σ_j s_j · exp(+i·2π·j·k/L)`.
fn pool_spectrum(plan: &DftPlan, s: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let l = s.len();
    let (mut sr, mut si) = (vec![0.0; l], vec![0.0; l]);
    plan.transform_naive(s, &vec![0.0; l], Direction::Backward, &mut sr, &mut si);
    (sr, si)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
