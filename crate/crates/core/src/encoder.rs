//! Node, link and positional encodings, their fusion into a temporal
//! representation, and the link predictor.

use std::collections::HashMap;

use rand::Rng;

use crate::graph::{EventStream, NeighborEntry, TimeEncoder};
use crate::lpe::{pe_update, LpeVars, PeMlp, PeMlpVars};
use crate::model::{uniform, Dims, ModelError, ModelParams};
use crate::numerics::{Parameters, Tape, Tensor, Var};
use crate::lpe::PositionalStore;

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderParams {
    /// `(d_T+d_E) × (d_T+d_E)`, applied on the right of `H`.
    pub w_link1: Tensor,
    /// `(d_T+d_E) × (d_T+d_E)`.
    pub w_link2: Tensor,
    /// `K × 1`.
    pub w_link_sum: Tensor,
    /// `d_N × (d_N + d_T + d_E)`.
    pub w_fuse: Tensor,
    /// `d_N × (d_N + d_P)`.
    pub w_out: Tensor,
    /// Separate positional-branch weights; `None` reuses the update MLP.
    pub pe_mlp: Option<PeMlp>,
    /// `2d_N × d_N`, applied on the right of `[h_u ‖ h_v]`.
    pub pred_w1: Tensor,
    /// `d_N × 1`.
    pub pred_w2: Tensor,
}

impl EncoderParams {
    pub fn init(dims: Dims, share_pe_mlp: bool, rng: &mut impl Rng) -> Self {
        let (dte, dn) = (dims.d_te(), dims.d_n);
        Self {
            w_link1: uniform(rng, &[dte, dte], dte),
            w_link2: uniform(rng, &[dte, dte], dte),
            w_link_sum: uniform(rng, &[dims.k, 1], dims.k),
            w_fuse: uniform(rng, &[dn, dn + dte], dn + dte),
            w_out: uniform(rng, &[dn, dn + dims.d_p], dn + dims.d_p),
            pe_mlp: (!share_pe_mlp).then(|| PeMlp::init(dims.d_p, dims.d_t, rng)),
            pred_w1: uniform(rng, &[2 * dn, dn], 2 * dn),
            pred_w2: uniform(rng, &[dn, 1], dn),
        }
    }

    /// All weights zero.
    pub fn zeros(dims: Dims, share_pe_mlp: bool) -> Self {
        let (dte, dn) = (dims.d_te(), dims.d_n);
        Self {
            w_link1: Tensor::zeros(&[dte, dte]),
            w_link2: Tensor::zeros(&[dte, dte]),
            w_link_sum: Tensor::zeros(&[dims.k, 1]),
            w_fuse: Tensor::zeros(&[dn, dn + dte]),
            w_out: Tensor::zeros(&[dn, dn + dims.d_p]),
            pe_mlp: (!share_pe_mlp).then(|| PeMlp::zeros(dims.d_p, dims.d_t)),
            pred_w1: Tensor::zeros(&[2 * dn, dn]),
            pred_w2: Tensor::zeros(&[dn, 1]),
        }
    }
}

impl Parameters for EncoderParams {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor)) {
        f("enc.w_link1", &self.w_link1);
        f("enc.w_link2", &self.w_link2);
        f("enc.w_link_sum", &self.w_link_sum);
        f("enc.w_fuse", &self.w_fuse);
        f("enc.w_out", &self.w_out);
        if let Some(m) = &self.pe_mlp {
            m.visit_prefixed("enc.pe", f);
        }
        f("pred.w1", &self.pred_w1);
        f("pred.w2", &self.pred_w2);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor)) {
        f("enc.w_link1", &mut self.w_link1);
        f("enc.w_link2", &mut self.w_link2);
        f("enc.w_link_sum", &mut self.w_link_sum);
        f("enc.w_fuse", &mut self.w_fuse);
        f("enc.w_out", &mut self.w_out);
        if let Some(m) = &mut self.pe_mlp {
            m.visit_prefixed_mut("enc.pe", f);
        }
        f("pred.w1", &mut self.pred_w1);
        f("pred.w2", &mut self.pred_w2);
    }
}

#[derive(Clone, Copy, Debug)]
pub struct EncoderVars {
    pub w_link1: Var,
    pub w_link2: Var,
    /// Reshaped to length `K`.
    pub w_link_sum: Var,
    pub w_fuse: Var,
    pub w_out: Var,
    pub pe_mlp: PeMlpVars,
    pub pred_w1: Var,
    /// Reshaped to length `d_N`.
    pub pred_w2: Var,
}

/// Tape handles for every parameter, keyed like [`Parameters::visit`].
#[derive(Clone, Debug)]
pub struct ModelVars {
    pub lpe: LpeVars,
    pub encoder: EncoderVars,
    pub named: Vec<(String, Var)>,
}

impl ModelVars {
    pub fn register(params: &ModelParams, tape: &mut Tape, trainable: bool) -> Result<Self, ModelError> {
        let lpe = params.lpe.register(tape, trainable)?;
        let e = &params.encoder;
        let mut put = |t: &Tensor| if trainable { tape.param(t.clone()) } else { tape.constant(t.clone()) };
        let (w_link1, w_link2, w_link_sum_raw) = (put(&e.w_link1), put(&e.w_link2), put(&e.w_link_sum));
        let (w_fuse, w_out) = (put(&e.w_fuse), put(&e.w_out));
        let (pred_w1, pred_w2_raw) = (put(&e.pred_w1), put(&e.pred_w2));
        let pe_mlp = match &e.pe_mlp {
            Some(m) => m.register(tape, trainable),
            None => lpe.mlp,
        };
        let w_link_sum = tape.reshape(w_link_sum_raw, &[e.w_link_sum.rows()])?;
        let pred_w2 = tape.reshape(pred_w2_raw, &[e.pred_w2.rows()])?;
        let mut named = vec![
            ("lpe.filter_re".to_string(), lpe.filter_re),
            ("lpe.filter_im".to_string(), lpe.filter_im),
            ("lpe.sum_pool".to_string(), lpe.sum_pool),
            ("lpe.w1".to_string(), lpe.mlp.w1),
            ("lpe.w2".to_string(), lpe.mlp.w2),
            ("lpe.w_self".to_string(), lpe.mlp.w_self),
            ("enc.w_link1".to_string(), w_link1),
            ("enc.w_link2".to_string(), w_link2),
            ("enc.w_link_sum".to_string(), w_link_sum_raw),
            ("enc.w_fuse".to_string(), w_fuse),
            ("enc.w_out".to_string(), w_out),
        ];
        if e.pe_mlp.is_some() {
            named.push(("enc.pe.w1".to_string(), pe_mlp.w1));
            named.push(("enc.pe.w2".to_string(), pe_mlp.w2));
            named.push(("enc.pe.w_self".to_string(), pe_mlp.w_self));
        }
        named.push(("pred.w1".to_string(), pred_w1));
        named.push(("pred.w2".to_string(), pred_w2_raw));
        Ok(Self {
            lpe,
            encoder: EncoderVars {
                w_link1,
                w_link2,
                w_link_sum,
                w_fuse,
                w_out,
                pe_mlp,
                pred_w1,
                pred_w2,
            },
            named,
        })
    }
}

/// `x_u` plus the mean feature row of neighbors in `[t − t_gap, t)`.
pub fn node_encoding(stream: &EventStream, u: usize, t: f64, t_gap: f64) -> Vec<f64> {
    let mut h = stream.node_feature(u).to_vec();
    let window = stream.window_neighbors(u, t, t_gap);
    if !window.is_empty() {
        let inv = 1.0 / window.len() as f64;
        let mut mean = vec![0.0; h.len()];
        for e in window {
            mean.iter_mut()
                .zip(stream.node_feature(e.neighbor))
                .for_each(|(m, x)| *m += x);
        }
        h.iter_mut().zip(&mean).for_each(|(a, m)| *a += m * inv);
    }
    h
}

/// `K × (d_T + d_E)` rows `[f_T(t − t_k) ‖ e_k]`; padding rows are zero.
pub fn link_history(
    stream: &EventStream,
    recent: &[NeighborEntry],
    t: f64,
    time: &TimeEncoder,
) -> Result<Tensor, ModelError> {
    let (d_t, d_e) = (time.dim(), stream.edge_dim());
    let width = d_t + d_e;
    let mut h = Tensor::zeros(&[recent.len(), width]);
    let data = h.data_mut();
    for (k, e) in recent.iter().enumerate() {
        if e.is_padding() {
            continue;
        }
        let row = &mut data[k * width..(k + 1) * width];
        time.encode_into(t - e.timestamp, &mut row[..d_t])?;
        row[d_t..].copy_from_slice(stream.edge_feature(e.event_index));
    }
    Ok(h)
}

/// `W_link2 · relu((H · W_link1)ᵀ · w_sum)`, computed as
/// `W_link2 · relu((w_sumᵀ · H) · W_link1)`.
pub fn link_encoding_on_tape(tape: &mut Tape, vars: &EncoderVars, h: Var) -> Result<Var, ModelError> {
    let pooled = tape.matmul(vars.w_link_sum, h)?;
    let z = tape.matmul(pooled, vars.w_link1)?;
    let z = tape.relu(z);
    Ok(tape.matmul(vars.w_link2, z)?)
}

/// Plain evaluation of the link encoding for one node.
pub fn link_encoding(
    stream: &EventStream,
    u: usize,
    t: f64,
    params: &EncoderParams,
    time: &TimeEncoder,
) -> Result<Vec<f64>, ModelError> {
    let k = params.w_link_sum.rows();
    let recent = stream.recent_interactions(u, t, k);
    let h = link_history(stream, &recent, t, time)?;
    let mut tape = Tape::new();
    let hv = tape.constant(h);
    let w_sum = tape.constant(Tensor::vector(params.w_link_sum.data().to_vec()));
    let w1 = tape.constant(params.w_link1.clone());
    let w2 = tape.constant(params.w_link2.clone());
    let pooled = tape.matmul(w_sum, hv)?;
    let z = tape.matmul(pooled, w1)?;
    let z = tape.relu(z);
    let out = tape.matmul(w2, z)?;
    Ok(tape.value(out).data().to_vec())
}

/// `sigmoid(relu([h_u ‖ h_v] · W1) · W2)` as a length-1 value.
pub fn predict_on_tape(tape: &mut Tape, vars: &EncoderVars, h_u: Var, h_v: Var) -> Result<Var, ModelError> {
    let x = tape.concat(&[h_u, h_v])?;
    let z = tape.matmul(x, vars.pred_w1)?;
    let z = tape.relu(z);
    let s = tape.matmul(z, vars.pred_w2)?;
    let s = tape.reshape(s, &[1])?;
    Ok(tape.sigmoid(s))
}

/// Plain evaluation of the link predictor.
pub fn predict_link(h_u: &[f64], h_v: &[f64], params: &EncoderParams) -> f64 {
    let x: Vec<f64> = h_u.iter().chain(h_v).copied().collect();
    let d_n = params.pred_w1.cols();
    let mut hidden = vec![0.0; d_n];
    for (i, &xi) in x.iter().enumerate() {
        for (h, w) in hidden.iter_mut().zip(params.pred_w1.row(i)) {
            *h += xi * w;
        }
    }
    let s: f64 = hidden
        .iter()
        .zip(params.pred_w2.data())
        .map(|(h, w)| h.max(0.0) * w)
        .sum();
    crate::numerics::tape::sigmoid(s)
}

/// Non-recorded inputs to a forward pass.
#[derive(Clone, Copy)]
pub struct ForwardInputs<'a> {
    pub stream: &'a EventStream,
    pub store: &'a PositionalStore,
    pub time: &'a TimeEncoder,
    pub t_gap: f64,
}

/// One batch's recording: approximate encodings and temporal
/// representations are memoized per node and per `(node, t)`.
pub struct Forward<'a> {
    pub tape: Tape,
    pub vars: ModelVars,
    inputs: ForwardInputs<'a>,
    dims: Dims,
    pe_cache: HashMap<usize, Var>,
    rep_cache: HashMap<(usize, u64), Var>,
}

impl<'a> Forward<'a> {
    pub fn new(params: &ModelParams, inputs: ForwardInputs<'a>, trainable: bool) -> Result<Self, ModelError> {
        let dims = params.dims;
        if inputs.time.dim() != dims.d_t
            || inputs.stream.node_dim() != dims.d_n
            || inputs.stream.edge_dim() != dims.d_e
            || inputs.store.dim() != dims.d_p
            || inputs.store.history_len() != dims.l
        {
            return Err(ModelError::Shape(format!(
                "inputs (d_T={}, d_N={}, d_E={}, d_P={}, L={}) do not match model {:?}",
                inputs.time.dim(),
                inputs.stream.node_dim(),
                inputs.stream.edge_dim(),
                inputs.store.dim(),
                inputs.store.history_len(),
                dims
            )));
        }
        let mut tape = Tape::new();
        let vars = ModelVars::register(params, &mut tape, trainable)?;
        Ok(Self {
            tape,
            vars,
            inputs,
            dims,
            pe_cache: HashMap::new(),
            rep_cache: HashMap::new(),
        })
    }

    /// Approximate encoding of `u` from the store's history.
    pub fn approx_pe(&mut self, u: usize) -> Result<Var, ModelError> {
        if let Some(&v) = self.pe_cache.get(&u) {
            return Ok(v);
        }
        let h = self.tape.constant(self.inputs.store.history_matrix(u));
        let v = self.tape.row_dot(h, self.vars.lpe.kernel)?;
        self.pe_cache.insert(u, v);
        Ok(v)
    }

    pub fn approx_pe_value(&mut self, u: usize) -> Result<Vec<f64>, ModelError> {
        let v = self.approx_pe(u)?;
        Ok(self.tape.value(v).data().to_vec())
    }

    /// Temporal representation of `u` at `t`.
    pub fn representation(&mut self, u: usize, t: f64) -> Result<Var, ModelError> {
        if let Some(&v) = self.rep_cache.get(&(u, t.to_bits())) {
            return Ok(v);
        }
        let ForwardInputs {
            stream,
            time,
            t_gap,
            ..
        } = self.inputs;
        let recent = stream.recent_interactions(u, t, self.dims.k);

        let node = self.tape.constant(Tensor::vector(node_encoding(stream, u, t, t_gap)));
        let h = self.tape.constant(link_history(stream, &recent, t, time)?);
        let link = link_encoding_on_tape(&mut self.tape, &self.vars.encoder, h)?;
        let ne = self.tape.concat(&[node, link])?;
        let h_ne = self.tape.matmul(self.vars.encoder.w_fuse, ne)?;

        let mut time_sum = vec![0.0; self.dims.d_t];
        let mut enc = vec![0.0; self.dims.d_t];
        let mut pes = Vec::new();
        for e in recent.iter().filter(|e| !e.is_padding()) {
            time.encode_into(t - e.timestamp, &mut enc)?;
            time_sum.iter_mut().zip(&enc).for_each(|(a, b)| *a += b);
            pes.push(self.approx_pe(e.neighbor)?);
        }
        let pe_sum = if pes.is_empty() {
            self.tape.constant(Tensor::zeros(&[self.dims.d_p]))
        } else {
            self.tape.add_n(&pes)?
        };
        let time_sum = self.tape.constant(Tensor::vector(time_sum));
        let q = self.tape.concat(&[time_sum, pe_sum])?;
        let p_u = self.approx_pe(u)?;
        let h_p = pe_update(&mut self.tape, &self.vars.encoder.pe_mlp, p_u, q)?;

        let both = self.tape.concat(&[h_ne, h_p])?;
        let out = self.tape.matmul(self.vars.encoder.w_out, both)?;
        self.rep_cache.insert((u, t.to_bits()), out);
        Ok(out)
    }

    /// Link probability for `(u, v)` at `t`, as a length-1 value.
    pub fn probability(&mut self, u: usize, v: usize, t: f64) -> Result<Var, ModelError> {
        let h_u = self.representation(u, t)?;
        let h_v = self.representation(v, t)?;
        predict_on_tape(&mut self.tape, &self.vars.encoder, h_u, h_v)
    }
}

/// Plain evaluation of one temporal representation.
pub fn temporal_representation(
    params: &ModelParams,
    inputs: ForwardInputs<'_>,
    u: usize,
    t: f64,
) -> Result<Vec<f64>, ModelError> {
    let mut f = Forward::new(params, inputs, false)?;
    let v = f.representation(u, t)?;
    Ok(f.tape.value(v).data().to_vec())
}
