//! Discrete Fourier transform along the time axis of a `d × L` sequence.
//!
//! Indices follow the 1-based convention
//! `X_j = Σ_{k=1..L} x_k · exp(−i·2π·j·k/L)` for `j = 1..L`, so a constant
//! row concentrates all of its energy in the last bin (`j = L`). The inverse
//! carries the `1/L` factor, making the pair mutually inverse.
//!
//! Transforms run through [`DftPlan`], which caches the twiddle table for one
//! length and switches to a radix-2 FFT when the length is a power of two.

use std::cell::RefCell;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::rc::Rc;

use super::tensor::{ComplexTensor, Tensor};
use super::NumericsError;

/// Direction of the complex exponential in [`DftPlan::transform`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// `exp(−i·2π·j·k/L)`
    Forward,
    /// `exp(+i·2π·j·k/L)`, unnormalized.
    Backward,
}

impl Direction {
    fn sign(self) -> f64 {
        match self {
            Direction::Forward => -1.0,
            Direction::Backward => 1.0,
        }
    }
}

/// Precomputed tables for one sequence length.
#[derive(Debug)]
pub struct DftPlan {
    len: usize,
    /// `cos(2π·m/L)` for `m = 0..L`.
    cos: Vec<f64>,
    /// `sin(2π·m/L)` for `m = 0..L`.
    sin: Vec<f64>,
    radix2: bool,
}

thread_local! {
    static PLANS: RefCell<HashMap<usize, Rc<DftPlan>>> = RefCell::new(HashMap::new());
}

impl DftPlan {
    pub fn new(len: usize) -> Self {
        assert!(len >= 1, "DFT length must be at least 1");
        let (sin, cos): (Vec<f64>, Vec<f64>) = (0..len)
            .map(|m| (2.0 * PI * m as f64 / len as f64).sin_cos())
            .unzip();
        Self {
            len,
            cos,
            sin,
            radix2: len.is_power_of_two() && len > 1,
        }
    }

    /// Shared plan for `len`, built once per thread.
    pub fn cached(len: usize) -> Rc<DftPlan> {
        PLANS.with(|plans| {
            plans
                .borrow_mut()
                .entry(len)
                .or_insert_with(|| Rc::new(DftPlan::new(len)))
                .clone()
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn uses_fft(&self) -> bool {
        self.radix2
    }

    /// `Y_j = Σ_{k=1..L} z_k · exp(s·i·2π·j·k/L)` for `j = 1..L`.
    ///
    /// Slices hold the 1-based sequences at 0-based positions.
    pub fn transform(
        &self,
        re: &[f64],
        im: &[f64],
        dir: Direction,
        out_re: &mut [f64],
        out_im: &mut [f64],
    ) {
        if self.radix2 {
            self.transform_fft(re, im, dir, out_re, out_im);
        } else {
            self.transform_naive(re, im, dir, out_re, out_im);
        }
    }

    pub fn transform_naive(
        &self,
        re: &[f64],
        im: &[f64],
        dir: Direction,
        out_re: &mut [f64],
        out_im: &mut [f64],
    ) {
        let n = self.len;
        let s = dir.sign();
        for j in 1..=n {
            let mut acc_re = 0.0;
            let mut acc_im = 0.0;
            for k in 1..=n {
                let m = (j * k) % n;
                let (c, sn) = (self.cos[m], s * self.sin[m]);
                let (a, b) = (re[k - 1], im[k - 1]);
                acc_re += a * c - b * sn;
                acc_im += a * sn + b * c;
            }
            out_re[j - 1] = acc_re;
            out_im[j - 1] = acc_im;
        }
    }

    /// Shifts the 1-based sum onto a 0-based FFT:
    /// `Y_j = exp(s·i·2π·j/L) · FFT(z_{m+1})[j mod L]`.
    fn transform_fft(
        &self,
        re: &[f64],
        im: &[f64],
        dir: Direction,
        out_re: &mut [f64],
        out_im: &mut [f64],
    ) {
        let n = self.len;
        let s = dir.sign();
        let mut buf_re = re.to_vec();
        let mut buf_im = im.to_vec();
        self.fft_in_place(&mut buf_re, &mut buf_im, s);
        for j in 1..=n {
            let idx = j % n;
            let (c, sn) = (self.cos[idx], s * self.sin[idx]);
            let (a, b) = (buf_re[idx], buf_im[idx]);
            out_re[j - 1] = a * c - b * sn;
            out_im[j - 1] = a * sn + b * c;
        }
    }

    /// Iterative radix-2 Cooley-Tukey over 0-based indices.
    fn fft_in_place(&self, re: &mut [f64], im: &mut [f64], s: f64) {
        let n = self.len;
        let bits = n.trailing_zeros();
        for i in 0..n {
            let j = i.reverse_bits() >> (usize::BITS - bits);
            if j > i {
                re.swap(i, j);
                im.swap(i, j);
            }
        }
        let mut size = 2;
        while size <= n {
            let half = size / 2;
            let stride = n / size;
            for start in (0..n).step_by(size) {
                for k in 0..half {
                    let t = k * stride;
                    let (c, sn) = (self.cos[t], s * self.sin[t]);
                    let (xr, xi) = (re[start + k + half], im[start + k + half]);
                    let tr = xr * c - xi * sn;
                    let ti = xr * sn + xi * c;
                    let (ur, ui) = (re[start + k], im[start + k]);
                    re[start + k] = ur + tr;
                    im[start + k] = ui + ti;
                    re[start + k + half] = ur - tr;
                    im[start + k + half] = ui - ti;
                }
            }
            size *= 2;
        }
    }
}

fn check_rank2(name: &'static str, t: &Tensor) -> Result<(usize, usize), NumericsError> {
    if t.rank() != 2 || t.cols() == 0 {
        return Err(NumericsError::Rank {
            op: name,
            shape: t.shape().to_vec(),
        });
    }
    Ok((t.rows(), t.cols()))
}

/// Per-row forward DFT of a `d × L` real tensor.
pub fn dft_time_axis(seq: &Tensor) -> Result<ComplexTensor, NumericsError> {
    let (rows, len) = check_rank2("dft_time_axis", seq)?;
    let plan = DftPlan::cached(len);
    let zeros = vec![0.0; len];
    let mut re = vec![0.0; rows * len];
    let mut im = vec![0.0; rows * len];
    for r in 0..rows {
        let span = r * len..(r + 1) * len;
        plan.transform(
            seq.row(r),
            &zeros,
            Direction::Forward,
            &mut re[span.clone()],
            &mut im[span],
        );
    }
    ComplexTensor::new(
        Tensor::matrix(rows, len, re)?,
        Tensor::matrix(rows, len, im)?,
    )
}

/// Per-row inverse DFT, `x_j = (1/L)·Re(Σ_k X_k·exp(+i·2π·j·k/L))`.
pub fn idft_time_axis(spec: &ComplexTensor) -> Result<Tensor, NumericsError> {
    let (rows, len) = check_rank2("idft_time_axis", &spec.real_part)?;
    let plan = DftPlan::cached(len);
    let scale = 1.0 / len as f64;
    let mut out = vec![0.0; rows * len];
    let mut scratch = vec![0.0; len];
    for r in 0..rows {
        plan.transform(
            spec.real_part.row(r),
            spec.imag_part.row(r),
            Direction::Backward,
            &mut out[r * len..(r + 1) * len],
            &mut scratch,
        );
    }
    out.iter_mut().for_each(|x| *x *= scale);
    Tensor::matrix(rows, len, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Direct evaluation with fresh trig calls, independent of the plan tables.
    fn oracle_dft(x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = x.len();
        let mut re = vec![0.0; n];
        let mut im = vec![0.0; n];
        for j in 1..=n {
            for k in 1..=n {
                let theta = -2.0 * PI * (j as f64) * (k as f64) / n as f64;
                re[j - 1] += x[k - 1] * theta.cos();
                im[j - 1] += x[k - 1] * theta.sin();
            }
        }
        (re, im)
    }

    #[test]
    fn constant_row_spikes_at_last_bin() {
        for len in [1, 2, 3, 5, 8, 12] {
            let seq = Tensor::matrix(1, len, vec![2.5; len]).unwrap();
            let spec = dft_time_axis(&seq).unwrap();
            for j in 0..len {
                let expected = if j == len - 1 { 2.5 * len as f64 } else { 0.0 };
                assert!((spec.real_part.data()[j] - expected).abs() < 1e-12);
                assert!(spec.imag_part.data()[j].abs() < 1e-12);
            }
            let back = idft_time_axis(&spec).unwrap();
            assert!(back.max_abs_diff(&seq) < 1e-12);
        }
    }

    #[test]
    fn single_sample_is_identity() {
        let seq = Tensor::matrix(3, 1, vec![1.5, -2.0, 0.25]).unwrap();
        let spec = dft_time_axis(&seq).unwrap();
        assert!(spec.real_part.max_abs_diff(&seq) < 1e-15);
        assert!(spec.imag_part.max_abs() < 1e-15);
    }

    #[test]
    fn fft_and_naive_paths_agree_with_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for len in [2, 4, 8, 16, 64, 3, 7, 100] {
            let plan = DftPlan::new(len);
            let x: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let y: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let (mut fr, mut fi) = (vec![0.0; len], vec![0.0; len]);
            let (mut nr, mut ni) = (vec![0.0; len], vec![0.0; len]);
            for dir in [Direction::Forward, Direction::Backward] {
                plan.transform(&x, &y, dir, &mut fr, &mut fi);
                plan.transform_naive(&x, &y, dir, &mut nr, &mut ni);
                for j in 0..len {
                    assert!((fr[j] - nr[j]).abs() < 1e-10, "len {len}");
                    assert!((fi[j] - ni[j]).abs() < 1e-10, "len {len}");
                }
            }
            let seq = Tensor::matrix(1, len, x.clone()).unwrap();
            let spec = dft_time_axis(&seq).unwrap();
            let (or, oi) = oracle_dft(&x);
            for j in 0..len {
                assert!((spec.real_part.data()[j] - or[j]).abs() < 1e-10);
                assert!((spec.imag_part.data()[j] - oi[j]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn zero_spectrum_inverts_to_zero() {
        let spec = ComplexTensor::zeros(&[4, 6]);
        assert_eq!(idft_time_axis(&spec).unwrap(), Tensor::zeros(&[4, 6]));
    }

    #[test]
    fn random_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let data: Vec<f64> = (0..32).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let seq = Tensor::matrix(4, 8, data).unwrap();
        let back = idft_time_axis(&dft_time_axis(&seq).unwrap()).unwrap();
        assert!(back.max_abs_diff(&seq) < 1e-9);
    }

    #[test]
    fn rejects_vectors() {
        assert!(dft_time_axis(&Tensor::vector(vec![1.0, 2.0])).is_err());
    }
}
