//! Learnable positional encoding: the per-node history store, the filtered
//! Fourier approximation, the post-batch update, and the drift bound check.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::graph::TimeEncoder;
use crate::model::{uniform, Dims, ModelError};
use crate::numerics::{Checkpoint, Parameters, Tape, Tensor, Var};
use crate::pe_init::InitialPe;

/// The two-layer update `p̃ + tanh(W_self·p̃ + W2·relu(W1·q))`.
#[derive(Clone, Debug, PartialEq)]
pub struct PeMlp {
    /// `d_P × (d_T + d_P)`; the time block comes first.
    pub w1: Tensor,
    /// `d_P × d_P`.
    pub w2: Tensor,
    /// `d_P × d_P`.
    pub w_self: Tensor,
}

#[derive(Clone, Copy, Debug)]
pub struct PeMlpVars {
    pub w1: Var,
    pub w2: Var,
    pub w_self: Var,
}

impl PeMlp {
    pub fn init(d_p: usize, d_t: usize, rng: &mut impl Rng) -> Self {
        Self {
            w1: uniform(rng, &[d_p, d_t + d_p], d_t + d_p),
            w2: uniform(rng, &[d_p, d_p], d_p),
            w_self: uniform(rng, &[d_p, d_p], d_p),
        }
    }

    pub fn zeros(d_p: usize, d_t: usize) -> Self {
        Self {
            w1: Tensor::zeros(&[d_p, d_t + d_p]),
            w2: Tensor::zeros(&[d_p, d_p]),
            w_self: Tensor::zeros(&[d_p, d_p]),
        }
    }

    pub fn register(&self, tape: &mut Tape, trainable: bool) -> PeMlpVars {
        let mut put = |t: &Tensor| if trainable { tape.param(t.clone()) } else { tape.constant(t.clone()) };
        PeMlpVars {
            w1: put(&self.w1),
            w2: put(&self.w2),
            w_self: put(&self.w_self),
        }
    }

    /// Evaluates the update without recording.
    pub fn apply(&self, p_tilde: &[f64], q: &[f64]) -> Vec<f64> {
        let hidden: Vec<f64> = self.w1.matvec(q).into_iter().map(|x| x.max(0.0)).collect();
        let a = self.w2.matvec(&hidden);
        let b = self.w_self.matvec(p_tilde);
        p_tilde
            .iter()
            .zip(a.iter().zip(&b))
            .map(|(p, (x, y))| p + (x + y).tanh())
            .collect()
    }

    pub(crate) fn visit_prefixed(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        f(&format!("{prefix}.w1"), &self.w1);
        f(&format!("{prefix}.w2"), &self.w2);
        f(&format!("{prefix}.w_self"), &self.w_self);
    }

    pub(crate) fn visit_prefixed_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        f(&format!("{prefix}.w1"), &mut self.w1);
        f(&format!("{prefix}.w2"), &mut self.w2);
        f(&format!("{prefix}.w_self"), &mut self.w_self);
    }
}

/// Records the update on a tape.
pub fn pe_update(tape: &mut Tape, mlp: &PeMlpVars, p_tilde: Var, q: Var) -> Result<Var, ModelError> {
    let h = tape.matmul(mlp.w1, q)?;
    let h = tape.relu(h);
    let a = tape.matmul(mlp.w2, h)?;
    let b = tape.matmul(mlp.w_self, p_tilde)?;
    let s = tape.add(a, b)?;
    let s = tape.tanh(s);
    Ok(tape.add(p_tilde, s)?)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpeParams {
    /// Real part of the `d_P × L` filter.
    pub filter_re: Tensor,
    /// Imaginary part of the `d_P × L` filter.
    pub filter_im: Tensor,
    /// `L × 1` pooling weights over the filtered history.
    pub sum_pool: Tensor,
    pub mlp: PeMlp,
}

#[derive(Clone, Copy, Debug)]
pub struct LpeVars {
    pub filter_re: Var,
    pub filter_im: Var,
    pub sum_pool: Var,
    /// Collapsed filter-and-pool kernel, `d_P × L`.
    pub kernel: Var,
    pub mlp: PeMlpVars,
}

impl LpeParams {
    /// Identity filter, random pooling and update weights.
    pub fn init(dims: Dims, rng: &mut impl Rng) -> Self {
        Self {
            filter_re: Tensor::filled(&[dims.d_p, dims.l], 1.0),
            filter_im: Tensor::zeros(&[dims.d_p, dims.l]),
            sum_pool: uniform(rng, &[dims.l, 1], dims.l),
            mlp: PeMlp::init(dims.d_p, dims.d_t, rng),
        }
    }

    /// Identity filter, newest-column pooling, zero update weights: the
    /// stored encodings are carried forward unchanged.
    pub fn pass_through(d_p: usize, d_t: usize, l: usize) -> Self {
        let mut pool = Tensor::zeros(&[l, 1]);
        pool.data_mut()[l - 1] = 1.0;
        Self {
            filter_re: Tensor::filled(&[d_p, l], 1.0),
            filter_im: Tensor::zeros(&[d_p, l]),
            sum_pool: pool,
            mlp: PeMlp::zeros(d_p, d_t),
        }
    }

    pub fn d_p(&self) -> usize {
        self.filter_re.rows()
    }

    pub fn history_len(&self) -> usize {
        self.filter_re.cols()
    }

    pub fn register(&self, tape: &mut Tape, trainable: bool) -> Result<LpeVars, ModelError> {
        let mut put = |t: &Tensor| if trainable { tape.param(t.clone()) } else { tape.constant(t.clone()) };
        let (filter_re, filter_im, sum_pool) = (put(&self.filter_re), put(&self.filter_im), put(&self.sum_pool));
        let kernel = tape.filter_kernel(filter_re, filter_im, sum_pool)?;
        Ok(LpeVars {
            filter_re,
            filter_im,
            sum_pool,
            kernel,
            mlp: self.mlp.register(tape, trainable),
        })
    }

    /// The collapsed kernel `G` with `approximate_pe(H) = row_dot(H, G)`.
    pub fn kernel(&self) -> Result<Tensor, ModelError> {
        let mut tape = Tape::new();
        let v = self.register(&mut tape, false)?;
        Ok(tape.value(v.kernel).clone())
    }
}

impl Parameters for LpeParams {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor)) {
        f("lpe.filter_re", &self.filter_re);
        f("lpe.filter_im", &self.filter_im);
        f("lpe.sum_pool", &self.sum_pool);
        self.mlp.visit_prefixed("lpe", f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor)) {
        f("lpe.filter_re", &mut self.filter_re);
        f("lpe.filter_im", &mut self.filter_im);
        f("lpe.sum_pool", &mut self.sum_pool);
        self.mlp.visit_prefixed_mut("lpe", f);
    }
}

/// `idft(filter ⊙ dft(history)) · sum_pool`, evaluated literally.
pub fn approximate_pe(history: &Tensor, params: &LpeParams) -> Result<Tensor, ModelError> {
    let mut tape = Tape::new();
    let h = tape.constant(history.clone());
    let fr = tape.constant(params.filter_re.clone());
    let fi = tape.constant(params.filter_im.clone());
    let pool = tape.constant(params.sum_pool.clone());
    let out = approximate_pe_on_tape(&mut tape, h, fr, fi, pool)?;
    Ok(tape.value(out).clone())
}

pub fn approximate_pe_on_tape(
    tape: &mut Tape,
    history: Var,
    filter_re: Var,
    filter_im: Var,
    sum_pool: Var,
) -> Result<Var, ModelError> {
    let spec = tape.dft(history)?;
    let filtered = tape.complex_mul(spec, filter_re, filter_im)?;
    let back = tape.idft(filtered)?;
    Ok(tape.weighted_sum_cols(back, sum_pool)?)
}

/// Per-node ring of the `L` most recent committed encodings.
#[derive(Clone, Debug, PartialEq)]
pub struct PositionalStore {
    l: usize,
    d_p: usize,
    step: u64,
    rings: Vec<VecDeque<(u64, Vec<f64>)>>,
}

impl PositionalStore {
    pub fn new(num_nodes: usize, l: usize, d_p: usize) -> Self {
        Self {
            l,
            d_p,
            step: 0,
            rings: vec![VecDeque::with_capacity(l); num_nodes],
        }
    }

    /// Empty rings, step 0, with present initial rows stored at step 0.
    pub fn reset(&mut self, init: Option<&InitialPe>) {
        self.step = 0;
        for ring in &mut self.rings {
            ring.clear();
        }
        if let Some(init) = init {
            for (u, ring) in self.rings.iter_mut().enumerate() {
                if let Some(row) = init.row(u) {
                    ring.push_back((0, row.to_vec()));
                }
            }
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.rings.len()
    }

    pub fn history_len(&self) -> usize {
        self.l
    }

    pub fn dim(&self) -> usize {
        self.d_p
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    /// Advances the global step; subsequent commits land on it.
    pub fn begin_step(&mut self) -> u64 {
        self.step += 1;
        self.step
    }

    pub fn entries(&self, u: usize) -> impl Iterator<Item = (u64, &[f64])> {
        self.rings[u].iter().map(|(s, v)| (*s, v.as_slice()))
    }

    /// Appends at the current step, evicting the oldest entry when full.
    pub fn commit(&mut self, u: usize, pe: Vec<f64>) -> Result<(), ModelError> {
        if pe.len() != self.d_p {
            return Err(ModelError::Shape(format!(
                "committed encoding has length {}, expected {}",
                pe.len(),
                self.d_p
            )));
        }
        if !pe.iter().all(|x| x.is_finite()) {
            return Err(ModelError::Shape(format!("non-finite encoding committed for node {u}")));
        }
        let ring = &mut self.rings[u];
        if let Some(&(last, _)) = ring.back() {
            if last >= self.step {
                return Err(ModelError::StepOrder {
                    node: u,
                    step: self.step,
                    last,
                });
            }
        }
        if ring.len() == self.l {
            ring.pop_front();
        }
        ring.push_back((self.step, pe));
        Ok(())
    }

    /// `d_P × L`, oldest entry leftmost, missing columns zero on the left.
    pub fn history_matrix(&self, u: usize) -> Tensor {
        let (d, l) = (self.d_p, self.l);
        let mut m = Tensor::zeros(&[d, l]);
        let ring = &self.rings[u];
        let offset = l - ring.len();
        for (c, (_, pe)) in ring.iter().enumerate() {
            for (r, &x) in pe.iter().enumerate() {
                m.set2(r, offset + c, x);
            }
        }
        m
    }

    pub fn to_checkpoint(&self, ckpt: &mut Checkpoint) {
        let n = self.rings.len();
        let mut steps = Tensor::filled(&[n, self.l], -1.0);
        let mut values = Vec::with_capacity(n * self.l * self.d_p);
        for (u, ring) in self.rings.iter().enumerate() {
            for c in 0..self.l {
                match ring.get(c) {
                    Some((s, pe)) => {
                        steps.set2(u, c, *s as f64);
                        values.extend_from_slice(pe);
                    }
                    None => values.extend(std::iter::repeat_n(0.0, self.d_p)),
                }
            }
        }
        ckpt.insert("store.steps", steps);
        ckpt.insert(
            "store.values",
            Tensor::new(vec![n, self.l * self.d_p], values).expect("sized above"),
        );
        ckpt.insert("store.step", Tensor::scalar(self.step as f64));
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self, ModelError> {
        let missing = |n: &str| ModelError::Checkpoint(format!("missing `{n}`"));
        let steps = ckpt.get("store.steps").ok_or_else(|| missing("store.steps"))?;
        let values = ckpt.get("store.values").ok_or_else(|| missing("store.values"))?;
        let step = ckpt.get("store.step").ok_or_else(|| missing("store.step"))?.item() as u64;
        let (n, l) = (steps.rows(), steps.cols());
        if l == 0 || values.rows() != n || values.cols() % l != 0 {
            return Err(ModelError::Checkpoint("store tensors disagree in shape".into()));
        }
        let d_p = values.cols() / l;
        let mut store = Self::new(n, l, d_p);
        store.step = step;
        for u in 0..n {
            for c in 0..l {
                let s = steps.get2(u, c);
                if s >= 0.0 {
                    let pe = values.row(u)[c * d_p..(c + 1) * d_p].to_vec();
                    store.rings[u].push_back((s as u64, pe));
                }
            }
        }
        Ok(store)
    }
}

/// Sum of `[f_T(t − t_j) ‖ p_j]` over real (non-padding) neighbors, given
/// as `(p_j, t − t_j)`.
pub fn neighbor_context(
    neighbors: &[(&[f64], f64)],
    d_p: usize,
    time: &TimeEncoder,
) -> Result<Vec<f64>, ModelError> {
    let d_t = time.dim();
    let mut q = vec![0.0; d_t + d_p];
    let mut enc = vec![0.0; d_t];
    for (pe, delta) in neighbors {
        time.encode_into(*delta, &mut enc)?;
        q[..d_t].iter_mut().zip(&enc).for_each(|(a, b)| *a += b);
        q[d_t..].iter_mut().zip(pe.iter()).for_each(|(a, b)| *a += b);
    }
    Ok(q)
}

/// Computes the committed encoding of `u` and appends it to the store.
pub fn commit_pe(
    store: &mut PositionalStore,
    u: usize,
    p_tilde_u: &[f64],
    neighbors: &[(&[f64], f64)],
    mlp: &PeMlp,
    time: &TimeEncoder,
) -> Result<Vec<f64>, ModelError> {
    let q = neighbor_context(neighbors, p_tilde_u.len(), time)?;
    let p = mlp.apply(p_tilde_u, &q);
    store.commit(u, p.clone())?;
    Ok(p)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub max_step_diff: f64,
    pub bound: f64,
    pub satisfied: bool,
    /// `‖p̃^t − p̃^(t+1)‖₂` per consecutive pair.
    pub step_diffs: Vec<f64>,
}

/// Compares the largest consecutive drift of a trace of approximate
/// encodings against `(Σ_i λ_i · mean_r |W_filter[r, i]|) · (2L − 2)` with
/// `λ_k = 2 − cos(2πk/L)`.
pub fn drift_bound_check(trace: &[Vec<f64>], params: &LpeParams) -> Result<BoundCheck, ModelError> {
    if trace.len() < 2 {
        return Err(ModelError::TraceTooShort(trace.len()));
    }
    let step_diffs: Vec<f64> = trace
        .windows(2)
        .map(|w| w[0].iter().zip(&w[1]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
        .collect();
    let max_step_diff = step_diffs.iter().copied().fold(0.0, f64::max);
    let (d, l) = (params.d_p(), params.history_len());
    let mut weighted = 0.0;
    for i in 0..l {
        let k = (i + 1) as f64;
        let lambda = 2.0 - (2.0 * std::f64::consts::PI * k / l as f64).cos();
        let mean_mag = (0..d)
            .map(|r| params.filter_re.get2(r, i).hypot(params.filter_im.get2(r, i)))
            .sum::<f64>()
            / d as f64;
        weighted += lambda * mean_mag;
    }
    let bound = weighted * (2.0 * l as f64 - 2.0);
    Ok(BoundCheck {
        max_step_diff,
        bound,
        satisfied: max_step_diff <= bound,
        step_diffs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::dft::DftPlan;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    fn random_params(rng: &mut ChaCha8Rng, d: usize, l: usize) -> LpeParams {
        LpeParams {
            filter_re: random(rng, &[d, l]),
            filter_im: random(rng, &[d, l]),
            sum_pool: random(rng, &[l, 1]),
            mlp: PeMlp::init(d, 2, rng),
        }
    }

    /// Direct sums with fresh trig calls, complex product, direct inverse,
    /// then a hand-written weighted column sum.
    fn oracle(h: &Tensor, p: &LpeParams) -> Vec<f64> {
        let (d, l) = (h.rows(), h.cols());
        let tau = 2.0 * std::f64::consts::PI;
        (0..d)
            .map(|r| {
                let mut xr = vec![0.0; l];
                let mut xi = vec![0.0; l];
                for j in 1..=l {
                    for k in 1..=l {
                        let th = -tau * (j * k) as f64 / l as f64;
                        xr[j - 1] += h.get2(r, k - 1) * th.cos();
                        xi[j - 1] += h.get2(r, k - 1) * th.sin();
                    }
                }
                let (yr, yi): (Vec<f64>, Vec<f64>) = (0..l)
                    .map(|j| {
                        let (a, b) = (xr[j], xi[j]);
                        let (c, e) = (p.filter_re.get2(r, j), p.filter_im.get2(r, j));
                        (a * c - b * e, a * e + b * c)
                    })
                    .unzip();
                let mut acc = 0.0;
                for j in 1..=l {
                    let mut v = 0.0;
                    for k in 1..=l {
                        let th = tau * (j * k) as f64 / l as f64;
                        v += yr[k - 1] * th.cos() - yi[k - 1] * th.sin();
                    }
                    acc += v / l as f64 * p.sum_pool.data()[j - 1];
                }
                acc
            })
            .collect()
    }

    #[test]
    fn history_matrix_padding() {
        let mut s = PositionalStore::new(3, 4, 2);
        s.begin_step();
        s.commit(1, vec![1.0, 2.0]).unwrap();
        let h = s.history_matrix(1);
        assert_eq!(h.column(3), vec![1.0, 2.0]);
        for c in 0..3 {
            assert_eq!(h.column(c), vec![0.0, 0.0]);
        }
        assert_eq!(s.history_matrix(0), Tensor::zeros(&[2, 4]));
        for k in 0..4 {
            s.begin_step();
            s.commit(2, vec![k as f64, -(k as f64)]).unwrap();
        }
        let h = s.history_matrix(2);
        for c in 0..4 {
            assert_eq!(h.column(c), vec![c as f64, -(c as f64)]);
        }
    }

    #[test]
    fn initial_rows_fill_newest_column() {
        let init = crate::pe_init::laplacian_pe(&[(0, 1)], 3, 2).unwrap();
        let mut s = PositionalStore::new(3, 3, 2);
        s.reset(Some(&init));
        assert_eq!(s.history_matrix(0).column(2), init.matrix.row(0).to_vec());
        assert_eq!(s.history_matrix(2), Tensor::zeros(&[2, 3]));
    }

    #[test]
    fn duplicate_step_is_rejected() {
        let mut s = PositionalStore::new(1, 2, 1);
        s.begin_step();
        s.commit(0, vec![1.0]).unwrap();
        assert!(matches!(s.commit(0, vec![2.0]), Err(ModelError::StepOrder { .. })));
    }

    #[test]
    fn ring_order_survives_many_commits() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s = PositionalStore::new(7, 5, 2);
        for _ in 0..10_000 {
            if rng.gen_bool(0.3) {
                s.begin_step();
            }
            let u = rng.gen_range(0..7);
            let _ = s.commit(u, vec![rng.gen(), rng.gen()]);
        }
        for u in 0..7 {
            let steps: Vec<u64> = s.entries(u).map(|(k, _)| k).collect();
            assert!(steps.len() <= 5);
            assert!(steps.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn pass_through_selects_newest_column() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for l in [1, 3, 4, 7, 100] {
            let p = LpeParams::pass_through(3, 2, l);
            let h = random(&mut rng, &[3, l]);
            let out = approximate_pe(&h, &p).unwrap();
            for r in 0..3 {
                assert!((out.data()[r] - h.get2(r, l - 1)).abs() < 1e-9);
            }
            let kernel = p.kernel().unwrap();
            for r in 0..3 {
                for c in 0..l {
                    assert_eq!(kernel.get2(r, c), if c == l - 1 { 1.0 } else { 0.0 });
                }
            }
        }
    }

    #[test]
    fn zero_history_gives_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = random_params(&mut rng, 3, 5);
        assert_eq!(approximate_pe(&Tensor::zeros(&[3, 5]), &p).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn matches_composition_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for l in [4, 5, 8] {
            let p = random_params(&mut rng, 3, l);
            let h = random(&mut rng, &[3, l]);
            let out = approximate_pe(&h, &p).unwrap();
            let expect = oracle(&h, &p);
            let kernel = p.kernel().unwrap();
            for r in 0..3 {
                assert!((out.data()[r] - expect[r]).abs() < 1e-9);
                let fast: f64 = h.row(r).iter().zip(kernel.row(r)).map(|(a, b)| a * b).sum();
                assert!((fast - expect[r]).abs() < 1e-9);
            }
        }
        assert!(!DftPlan::new(5).uses_fft());
    }

    #[test]
    fn linear_in_history() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = random_params(&mut rng, 4, 6);
        let (h1, h2) = (random(&mut rng, &[4, 6]), random(&mut rng, &[4, 6]));
        let (a, b) = (0.7, -1.3);
        let mix = Tensor::matrix(
            4,
            6,
            h1.data().iter().zip(h2.data()).map(|(x, y)| a * x + b * y).collect(),
        )
        .unwrap();
        let lhs = approximate_pe(&mix, &p).unwrap();
        let (o1, o2) = (approximate_pe(&h1, &p).unwrap(), approximate_pe(&h2, &p).unwrap());
        for r in 0..4 {
            assert!((lhs.data()[r] - (a * o1.data()[r] + b * o2.data()[r])).abs() < 1e-9);
        }
    }

    #[test]
    fn filter_and_pool_receive_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let p = random_params(&mut rng, 3, 4);
        let h = random(&mut rng, &[3, 4]);
        let mut tape = Tape::new();
        let v = p.register(&mut tape, true).unwrap();
        let hv = tape.constant(h);
        let out = tape.row_dot(hv, v.kernel).unwrap();
        let sq = tape.mul(out, out).unwrap();
        let loss = tape.sum(sq);
        let g = tape.backward(loss).unwrap();
        for var in [v.filter_re, v.filter_im, v.sum_pool] {
            assert!(g.get(var).unwrap().max_abs() > 0.0);
        }
    }

    #[test]
    fn zero_update_commits_zero() {
        let time = TimeEncoder::new(2, 10.0, 10.0);
        let mut s = PositionalStore::new(1, 3, 2);
        s.begin_step();
        let p = commit_pe(&mut s, 0, &[0.0, 0.0], &[], &PeMlp::zeros(2, 2), &time).unwrap();
        assert_eq!(p, vec![0.0, 0.0]);
        assert_eq!(s.history_matrix(0).column(2), vec![0.0, 0.0]);
    }

    #[test]
    fn hand_evaluated_update() {
        let time = TimeEncoder::new(2, 10.0, 10.0);
        let mlp = PeMlp {
            w1: Tensor::matrix(2, 4, vec![1.0, 0.0, 0.5, 0.0, 0.0, -1.0, 0.0, 2.0]).unwrap(),
            w2: Tensor::matrix(2, 2, vec![1.0, 1.0, 0.0, 1.0]).unwrap(),
            w_self: Tensor::matrix(2, 2, vec![0.5, 0.0, 0.0, -0.5]).unwrap(),
        };
        let p = [0.2, -0.4];
        let n1 = [1.0, 0.0];
        let n2 = [0.0, 0.5];
        let (d1, d2) = (0.0, std::f64::consts::PI);
        let mut s = PositionalStore::new(1, 2, 2);
        s.begin_step();
        let got = commit_pe(&mut s, 0, &p, &[(&n1, d1), (&n2, d2)], &mlp, &time).unwrap();
        // q = [cos0 + cosπ, cos(0·ω2) + cos(π·ω2), 1, 0.5]
        let w2 = 10f64.powf(-0.1);
        let q = [0.0, 1.0 + (std::f64::consts::PI * w2).cos(), 1.0, 0.5];
        let h0 = (q[0] + 0.5 * q[2]).max(0.0);
        let h1 = (-q[1] + 2.0 * q[3]).max(0.0);
        let e0 = 0.2 + (h0 + h1 + 0.5 * 0.2).tanh();
        let e1 = -0.4 + (h1 + (-0.5) * (-0.4)).tanh();
        assert!((got[0] - e0).abs() < 1e-14);
        assert!((got[1] - e1).abs() < 1e-14);
        for (g, x) in got.iter().zip(p) {
            assert!((g - x).abs() <= 1.0);
        }
    }

    #[test]
    fn tape_update_matches_plain() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mlp = PeMlp::init(3, 2, &mut rng);
        let p = [0.3, -0.1, 0.8];
        let q = [0.5, 1.0, -0.2, 0.4, 0.9];
        let mut tape = Tape::new();
        let vars = mlp.register(&mut tape, true);
        let pv = tape.constant(Tensor::vector(p.to_vec()));
        let qv = tape.constant(Tensor::vector(q.to_vec()));
        let out = pe_update(&mut tape, &vars, pv, qv).unwrap();
        let plain = mlp.apply(&p, &q);
        for (a, b) in tape.value(out).data().iter().zip(&plain) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn bound_check_edge_cases() {
        let p = LpeParams::pass_through(2, 2, 4);
        let flat = vec![vec![1.0, 2.0]; 5];
        let c = drift_bound_check(&flat, &p).unwrap();
        assert_eq!(c.max_step_diff, 0.0);
        assert!(c.satisfied);
        // λ_k for L = 4: 2 − cos(πk/2) → 2, 3, 2, 1; filter magnitude 1.
        assert!((c.bound - 8.0 * 6.0).abs() < 1e-12);

        let p1 = LpeParams::pass_through(2, 2, 1);
        assert_eq!(drift_bound_check(&flat, &p1).unwrap().bound, 0.0);
        let moving = vec![vec![0.0, 0.0], vec![0.0, 1e-9]];
        assert!(!drift_bound_check(&moving, &p1).unwrap().satisfied);
        assert!(matches!(
            drift_bound_check(&flat[..1], &p),
            Err(ModelError::TraceTooShort(1))
        ));
    }

    #[test]
    fn store_checkpoint_roundtrip() {
        let mut s = PositionalStore::new(3, 2, 2);
        for k in 0..3 {
            s.begin_step();
            s.commit(k % 2, vec![k as f64, 1.0]).unwrap();
        }
        let mut ck = Checkpoint::new();
        s.to_checkpoint(&mut ck);
        assert_eq!(PositionalStore::from_checkpoint(&ck).unwrap(), s);
    }
}
