//! Property suites with independent reference computations.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{ConfigFile, RunConfig};
use crate::graph::{chronological_split, EventStream};
use crate::lpe::{drift_bound_check, PositionalStore};
use crate::model::{Dims, ModelParams};
use crate::numerics::dft::Direction;
use crate::numerics::{dft_time_axis, idft_time_axis, symmetric_eigendecomposition, DftPlan, Parameters, Tensor};
use crate::pe_init::{normalized_laplacian, InitialPe, PeInitMethod};
use crate::synthetic::{random_stream, static_graph};
use crate::training::{
    average_precision, batch_objective, replay, roc_auc, static_graph_trace, train, TrainError,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Gradients,
    Fourier,
    Eigen,
    Metrics,
    Bound,
    All,
}

impl Suite {
    pub const EACH: [Suite; 5] = [Suite::Gradients, Suite::Fourier, Suite::Eigen, Suite::Metrics, Suite::Bound];

    pub fn as_str(&self) -> &'static str {
        match self {
            Suite::Gradients => "gradients",
            Suite::Fourier => "fourier",
            Suite::Eigen => "eigen",
            Suite::Metrics => "metrics",
            Suite::Bound => "bound",
            Suite::All => "all",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, thiserror::Error)]
#[error("unknown check suite `{0}` (expected gradients, fourier, eigen, metrics, bound or all)")]
pub struct UnknownSuite(pub String);

impl FromStr for Suite {
    type Err = UnknownSuite;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "gradients" | "gradient" => Ok(Suite::Gradients),
            "fourier" | "dft" => Ok(Suite::Fourier),
            "eigen" => Ok(Suite::Eigen),
            "metrics" => Ok(Suite::Metrics),
            "bound" => Ok(Suite::Bound),
            "all" => Ok(Suite::All),
            _ => Err(UnknownSuite(s.to_string())),
        }
    }
}

/// One measured property against its threshold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub suite: Suite,
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    pub threshold: f64,
    pub detail: String,
    pub seconds: f64,
}

impl CheckResult {
    fn new(suite: Suite, name: &str, passed: bool, measured: f64, threshold: f64, detail: String) -> Self {
        Self {
            suite,
            name: name.to_string(),
            passed,
            measured,
            threshold,
            detail,
            seconds: 0.0,
        }
    }

    fn failed(suite: Suite, name: &str, err: impl fmt::Display) -> Self {
        Self::new(suite, name, false, f64::NAN, f64::NAN, format!("error: {err}"))
    }
}

fn timed(f: impl FnOnce() -> Vec<CheckResult>) -> Vec<CheckResult> {
    let start = Instant::now();
    let mut out = f();
    let secs = start.elapsed().as_secs_f64();
    for c in &mut out {
        c.seconds = secs;
    }
    out
}

/// Runs `suite` (every suite for [`Suite::All`]).
pub fn run_suite(suite: Suite, seed: u64) -> Vec<CheckResult> {
    match suite {
        Suite::All => Suite::EACH.iter().flat_map(|&s| run_suite(s, seed)).collect(),
        Suite::Gradients => timed(|| gradient_checks(seed)),
        Suite::Fourier => timed(|| vec![fourier_roundtrips(seed), fourier_naive_agreement(seed)]),
        Suite::Eigen => timed(|| vec![eigen_random_symmetric(seed), laplacian_spectra(seed)]),
        Suite::Metrics => timed(|| vec![metric_oracles(seed), untrained_auc(seed)]),
        Suite::Bound => timed(|| vec![bound_after_training(seed, 5)]),
    }
}

// ---------------------------------------------------------------- gradients

/// Tiny-model configuration used by the gradient check.
pub fn tiny_config(seed: u64) -> RunConfig {
    let file = ConfigFile {
        d_t: Some(4),
        d_n: Some(4),
        d_e: Some(4),
        d_p: Some(4),
        l: Some(3),
        k: Some(2),
        batch_size: Some(2),
        t_gap: Some(3.0),
        seed: Some(seed),
        ..ConfigFile::default()
    };
    file.resolve(None).expect("tiny config is valid")
}

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-scale..scale)).collect()).expect("shape")
}

/// Largest central-difference relative error over every scalar of every
/// parameter, for both the shared and the separate positional MLP.
pub fn gradient_checks(seed: u64) -> Vec<CheckResult> {
    [true, false]
        .iter()
        .map(|&share| {
            let name = if share { "gradients (shared pe mlp)" } else { "gradients (separate pe mlp)" };
            match gradient_check(seed, share) {
                Ok((err, worst, count)) => CheckResult::new(
                    Suite::Gradients,
                    name,
                    err < 1e-4,
                    err,
                    1e-4,
                    format!("{count} scalars checked; worst `{worst}`"),
                ),
                Err(e) => CheckResult::failed(Suite::Gradients, name, e),
            }
        })
        .collect()
}

/// Returns `(max relative error, worst parameter, scalars checked)`.
pub fn gradient_check(seed: u64, share_pe_mlp: bool) -> Result<(f64, String, usize), TrainError> {
    let mut config = tiny_config(seed);
    config.share_pe_mlp = share_pe_mlp;
    let dims = config.dims();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw = vec![
        (0, 1, 1.0),
        (1, 2, 1.5),
        (2, 3, 2.0),
        (0, 3, 2.5),
        (1, 4, 3.0),
        (0, 2, 3.5),
        (3, 4, 4.0),
        (2, 4, 4.5),
    ];
    let nodes = random_tensor(&mut rng, &[5, dims.d_n], 1.0);
    let edges = random_tensor(&mut rng, &[raw.len(), dims.d_e], 1.0);
    let stream = EventStream::new(raw, nodes, edges)?;
    let time = config.time_encoder();

    let mut params = ModelParams::init(dims, share_pe_mlp, &mut rng);
    params.lpe.filter_re = random_tensor(&mut rng, &[dims.d_p, dims.l], 1.0);
    params.lpe.filter_im = random_tensor(&mut rng, &[dims.d_p, dims.l], 1.0);

    let init = InitialPe::build(PeInitMethod::Laplacian, &[(0, 1), (1, 2)], 5, dims.d_p)?;
    let mut store = PositionalStore::new(5, dims.l, dims.d_p);
    store.reset(Some(&init));
    replay(&params, &stream, &mut store, 0..6, 2, &time, config.t_gap)?;

    let events = &stream.events()[6..8];
    let negatives = [(3, 0), (2, 1)];
    let (_, grads) = batch_objective(&params, &stream, &store, events, &negatives, &config, &time)?;
    let loss_at = |p: &ModelParams| -> Result<f64, TrainError> {
        Ok(batch_objective(p, &stream, &store, events, &negatives, &config, &time)?.0)
    };

    let mut names = Vec::new();
    params.visit(&mut |name, t| names.push((name.to_string(), t.len())));
    let h = 1e-5;
    let mut worst = (0.0, String::new());
    let mut count = 0;
    for (name, len) in names {
        let analytic = grads.get(&name).cloned();
        for i in 0..len {
            let shifted = |delta: f64| {
                let mut p = params.clone();
                p.visit_mut(&mut |n, t| {
                    if n == name {
                        t.data_mut()[i] += delta;
                    }
                });
                p
            };
            let numeric = (loss_at(&shifted(h))? - loss_at(&shifted(-h))?) / (2.0 * h);
            let a = analytic.as_ref().map_or(0.0, |g| g.data()[i]);
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            if err > worst.0 {
                worst = (err, format!("{name}[{i}]"));
            }
            count += 1;
        }
    }
    Ok((worst.0, worst.1, count))
}

// ------------------------------------------------------------------ fourier

const FOURIER_LENGTHS: [usize; 6] = [1, 2, 3, 8, 16, 100];

fn random_sequences(seed: u64) -> Vec<Tensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xf0);
    (0..100)
        .map(|i| {
            let l = FOURIER_LENGTHS[i % FOURIER_LENGTHS.len()];
            let d = rng.gen_range(1..=8);
            random_tensor(&mut rng, &[d, l], 10.0)
        })
        .collect()
}

pub fn fourier_roundtrips(seed: u64) -> CheckResult {
    let mut err: f64 = 0.0;
    for x in random_sequences(seed) {
        match dft_time_axis(&x).and_then(|s| idft_time_axis(&s)) {
            Ok(back) => err = err.max(back.max_abs_diff(&x)),
            Err(e) => return CheckResult::failed(Suite::Fourier, "roundtrip", e),
        }
    }
    CheckResult::new(Suite::Fourier, "roundtrip", err < 1e-9, err, 1e-9, "100 random d_P × L sequences".into())
}

/// Compares the planned transform with a direct evaluation of the 1-based sum.
pub fn fourier_naive_agreement(seed: u64) -> CheckResult {
    let mut err: f64 = 0.0;
    for x in random_sequences(seed) {
        let (d, l) = (x.rows(), x.cols());
        let spec = match dft_time_axis(&x) {
            Ok(s) => s,
            Err(e) => return CheckResult::failed(Suite::Fourier, "naive agreement", e),
        };
        for r in 0..d {
            for j in 1..=l {
                let (mut re, mut im) = (0.0, 0.0);
                for k in 1..=l {
                    let theta = -2.0 * std::f64::consts::PI * (j * k) as f64 / l as f64;
                    re += x.get2(r, k - 1) * theta.cos();
                    im += x.get2(r, k - 1) * theta.sin();
                }
                err = err
                    .max((spec.real_part.get2(r, j - 1) - re).abs())
                    .max((spec.imag_part.get2(r, j - 1) - im).abs());
            }
        }
    }
    let plan = DftPlan::new(16);
    let mut out = (vec![0.0; 16], vec![0.0; 16]);
    plan.transform(&[1.0; 16], &[0.0; 16], Direction::Forward, &mut out.0, &mut out.1);
    err = err.max((out.0[15] - 16.0).abs());
    CheckResult::new(
        Suite::Fourier,
        "naive agreement",
        err < 1e-10,
        err,
        1e-10,
        "against a direct sum over the same sequences".into(),
    )
}

// -------------------------------------------------------------------- eigen

fn random_symmetric(rng: &mut ChaCha8Rng, n: usize) -> Tensor {
    let mut m = Tensor::zeros(&[n, n]);
    for i in 0..n {
        for j in 0..=i {
            let v = rng.gen_range(-1.0..1.0);
            m.set2(i, j, v);
            m.set2(j, i, v);
        }
    }
    m
}

pub fn eigen_random_symmetric(seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xe1);
    let (mut residual, mut ortho): (f64, f64) = (0.0, 0.0);
    let mut problems = Vec::new();
    for case in 0..50 {
        let n = 1 + case % 20;
        let a = random_symmetric(&mut rng, n);
        let eig = match symmetric_eigendecomposition(&a) {
            Ok(e) => e,
            Err(e) => return CheckResult::failed(Suite::Eigen, "random symmetric", e),
        };
        let v = &eig.vectors;
        for c in 0..n {
            let col = v.column(c);
            let av = a.matvec(&col);
            for r in 0..n {
                residual = residual.max((av[r] - eig.values[c] * col[r]).abs());
            }
            let pivot = col
                .iter()
                .enumerate()
                .fold((0, -1.0), |best, (i, x)| if x.abs() > best.1 { (i, x.abs()) } else { best })
                .0;
            if col[pivot] < 0.0 {
                problems.push(format!("case {case} column {c} violates the sign convention"));
            }
            for c2 in 0..n {
                let dot: f64 = (0..n).map(|r| v.get2(r, c) * v.get2(r, c2)).sum();
                ortho = ortho.max((dot - if c == c2 { 1.0 } else { 0.0 }).abs());
            }
        }
        if eig.values.windows(2).any(|w| w[0] > w[1]) {
            problems.push(format!("case {case} eigenvalues are not ascending"));
        }
    }
    let worst = residual.max(ortho);
    CheckResult::new(
        Suite::Eigen,
        "random symmetric",
        worst < 1e-8 && problems.is_empty(),
        worst,
        1e-8,
        if problems.is_empty() {
            format!("residual {residual:.2e}, orthonormality {ortho:.2e}")
        } else {
            problems.join("; ")
        },
    )
}

pub fn laplacian_spectra(seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x1a);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for _ in 0..30 {
        let n = rng.gen_range(2..=20);
        let p = rng.gen_range(0.1..0.8);
        let mut adj = vec![Vec::new(); n];
        for i in 0..n {
            for j in i + 1..n {
                if rng.gen_bool(p) {
                    adj[i].push(j);
                    adj[j].push(i);
                }
            }
        }
        match symmetric_eigendecomposition(&normalized_laplacian(&adj)) {
            Ok(e) => {
                lo = lo.min(e.values[0]);
                hi = hi.max(e.values[n - 1]);
            }
            Err(e) => return CheckResult::failed(Suite::Eigen, "laplacian spectra", e),
        }
    }
    let excess = (-1e-9 - lo).max(hi - (2.0 + 1e-9)).max(0.0);
    CheckResult::new(
        Suite::Eigen,
        "laplacian spectra",
        excess == 0.0,
        excess,
        0.0,
        format!("30 random graphs, spectrum within [{lo:.3e}, {hi:.6}]"),
    )
}

// ------------------------------------------------------------------ metrics

/// Precision-recall sum recomputed from scratch at every cut-off.
pub fn brute_force_ap(scores: &[f64], labels: &[bool]) -> f64 {
    let n = scores.len();
    // Rank of i: items with a higher score, or an equal score earlier.
    let rank = |i: usize| {
        (0..n)
            .filter(|&j| scores[j] > scores[i] || (scores[j] == scores[i] && j < i))
            .count()
    };
    let mut by_rank = vec![0; n];
    for i in 0..n {
        by_rank[rank(i)] = i;
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for k in 1..=n {
        let tp = by_rank[..k].iter().filter(|&&i| labels[i]).count();
        let precision = tp as f64 / k as f64;
        let recall = tp as f64 / pos as f64;
        ap += precision * (recall - prev_recall);
        prev_recall = recall;
    }
    ap
}

/// Pairwise comparison count.
pub fn brute_force_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for i in 0..scores.len() {
        for j in 0..scores.len() {
            if labels[i] && !labels[j] {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
    }
    wins / pairs
}

pub fn metric_oracles(seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x3e);
    let mut mismatches = 0;
    let mut checked = 0;
    for _ in 0..200 {
        let n = rng.gen_range(2..=10);
        // Coarse scores make ties common.
        let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0..6) as f64 / 5.0).collect();
        let mut labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
        labels[0] = true;
        labels[1] = false;
        let ap = average_precision(&scores, &labels).unwrap_or(f64::NAN);
        let auc = roc_auc(&scores, &labels).unwrap_or(f64::NAN);
        if ap.to_bits() != brute_force_ap(&scores, &labels).to_bits() {
            mismatches += 1;
        }
        if auc.to_bits() != brute_force_auc(&scores, &labels).to_bits() {
            mismatches += 1;
        }
        checked += 2;
    }
    CheckResult::new(
        Suite::Metrics,
        "metric oracles",
        mismatches == 0,
        mismatches as f64,
        0.0,
        format!("{checked} comparisons, bit-exact"),
    )
}

/// ROC-AUC of freshly initialized parameters on a random stream.
pub fn untrained_auc(seed: u64) -> CheckResult {
    let run = || -> Result<f64, TrainError> {
        let mut config = tiny_config(seed);
        config.d_t = 8;
        config.d_p = 8;
        config.d_n = 8;
        config.d_e = 8;
        config.batch_size = 50;
        config.l = 5;
        config.k = 5;
        config.t_gap = 20.0;
        let stream = random_stream(60, 1000, 8, 8, seed)?;
        let split = chronological_split(&stream, (0.5, 0.25, 0.25))?;
        let params = ModelParams::init(config.dims(), true, &mut ChaCha8Rng::seed_from_u64(seed));
        let init = InitialPe::zero(60, config.d_p);
        let inputs = crate::training::EvalInputs {
            params: &params,
            init_pe: &init,
            stream: &stream,
            split: &split,
            config: &config,
        };
        let cells = crate::training::evaluate_cells(
            inputs,
            &[(crate::training::Setting::Transductive, crate::training::Strategy::Random)],
            seed,
        )?;
        Ok(cells[0].roc_auc)
    };
    match run() {
        Ok(auc) => CheckResult::new(
            Suite::Metrics,
            "untrained roc-auc",
            (auc - 0.5).abs() <= 0.1,
            auc,
            0.1,
            "250 positives and 250 negatives; passes within 0.5 ± 0.1".into(),
        ),
        Err(e) => CheckResult::failed(Suite::Metrics, "untrained roc-auc", e),
    }
}

// -------------------------------------------------------------------- bound

/// Dimensions of the static-graph bound experiment.
pub fn bound_dims() -> Dims {
    Dims {
        d_n: 8,
        d_e: 8,
        d_t: 8,
        d_p: 8,
        l: 5,
        k: 4,
    }
}

/// Trains on a 10-node static graph repeated 50 times, then checks the
/// drift of node 0's approximation on the same replay.
pub fn bound_after_training(seed: u64, epochs: usize) -> CheckResult {
    let run = || -> Result<(crate::lpe::BoundCheck, usize), TrainError> {
        let dims = bound_dims();
        let edges = static_graph(10, 4, seed);
        let raw: Vec<_> = (0..50)
            .flat_map(|s| edges.iter().map(move |&(a, b)| (a, b, s as f64)))
            .collect();
        let stream = EventStream::featureless(raw, 10, dims.d_n, dims.d_e)?;
        let split = chronological_split(&stream, (0.7, 0.15, 0.15))?;
        let config = RunConfig {
            d_n: dims.d_n,
            d_e: dims.d_e,
            d_t: dims.d_t,
            d_p: dims.d_p,
            l: dims.l,
            k: dims.k,
            batch_size: edges.len(),
            t_gap: 2.0,
            lr: 1e-3,
            max_epochs: epochs,
            seed,
            ..RunConfig::from_preset("synthetic").expect("preset")
        };
        let outcome = train(&stream, &split, &config)?;
        let trace = static_graph_trace(
            &outcome.params,
            &edges,
            10,
            50,
            0,
            PeInitMethod::Laplacian,
            &config.time_encoder(),
            config.t_gap,
        )?;
        Ok((drift_bound_check(&trace.approx, &outcome.params.lpe)?, outcome.epochs.len()))
    };
    match run() {
        Ok((check, epochs_run)) => CheckResult::new(
            Suite::Bound,
            "drift bound",
            check.satisfied,
            check.max_step_diff,
            check.bound,
            format!(
                "max_step_diff {:.6e} <= bound {:.6e} after {epochs_run} epochs over 50 steps",
                check.max_step_diff, check.bound
            ),
        ),
        Err(e) => CheckResult::failed(Suite::Bound, "drift bound", e),
    }
}
