//! Bindings used by `www/index.html`.

use wasm_bindgen::prelude::*;

use lstep_core::graph::TimeEncoder;
use lstep_core::lpe::{approximate_pe, LpeParams};
use lstep_core::numerics::Tensor;
use lstep_core::pe_init::laplacian_pe;

/// Row-major `deltas.len() × dim` time encodings.
#[wasm_bindgen]
pub fn time_encoding(dim: usize, alpha: f64, beta: f64, deltas: Vec<f64>) -> Result<Vec<f64>, JsError> {
    if dim == 0 || alpha <= 1.0 || beta <= 0.0 {
        return Err(JsError::new("need dim >= 1, alpha > 1 and beta > 0"));
    }
    let enc = TimeEncoder::new(dim, alpha, beta);
    let mut out = vec![0.0; deltas.len() * dim];
    for (row, &d) in out.chunks_mut(dim).zip(&deltas) {
        enc.encode_into(d.max(0.0), row).map_err(|e| JsError::new(&e.to_string()))?;
    }
    Ok(out)
}

/// Filter that keeps frequency bins within `cutoff` of zero.
pub fn low_pass(l: usize, cutoff: usize) -> LpeParams {
    let mut params = LpeParams::pass_through(1, 1, l);
    for j in 1..=l {
        let dist = if j == l { 0 } else { j.min(l - j) };
        params.filter_re.data_mut()[j - 1] = if dist <= cutoff { 1.0 } else { 0.0 };
    }
    params
}

/// Filtered value of each window of `l` consecutive entries, read at the
/// newest position. Entries before the first full window are `NaN`.
#[wasm_bindgen]
pub fn lpe_filter(series: Vec<f64>, l: usize, cutoff: usize) -> Result<Vec<f64>, JsError> {
    if l == 0 || l > series.len() {
        return Err(JsError::new("window must be between 1 and the series length"));
    }
    let params = low_pass(l, cutoff);
    let mut out = vec![f64::NAN; series.len()];
    for t in l..=series.len() {
        let window = Tensor::matrix(1, l, series[t - l..t].to_vec()).map_err(|e| JsError::new(&e.to_string()))?;
        let p = approximate_pe(&window, &params).map_err(|e| JsError::new(&e.to_string()))?;
        out[t - 1] = p.data()[0];
    }
    Ok(out)
}

/// Row-major `num_nodes × d_p` Laplacian encodings for edges given as
/// consecutive endpoint pairs.
#[wasm_bindgen]
pub fn laplacian_encoding(num_nodes: usize, edges: Vec<u32>, d_p: usize) -> Result<Vec<f64>, JsError> {
    if !edges.len().is_multiple_of(2) {
        return Err(JsError::new("edge list must hold endpoint pairs"));
    }
    let pairs: Vec<(usize, usize)> = edges.chunks(2).map(|c| (c[0] as usize, c[1] as usize)).collect();
    if let Some(&(a, b)) = pairs.iter().find(|&&(a, b)| a >= num_nodes || b >= num_nodes) {
        return Err(JsError::new(&format!("edge ({a}, {b}) is outside 0..{num_nodes}")));
    }
    let pe = laplacian_pe(&pairs, num_nodes, d_p).map_err(|e| JsError::new(&e.to_string()))?;
    Ok(pe.matrix.into_data())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_band_reproduces_the_newest_value() {
        let series: Vec<f64> = (0..20).map(|i| (i as f64 * 0.7).sin()).collect();
        let out = lpe_filter(series.clone(), 8, 8).unwrap();
        assert!(out[..7].iter().all(|x| x.is_nan()));
        for t in 7..20 {
            assert!((out[t] - series[t]).abs() < 1e-12);
        }
    }

    #[test]
    fn dc_only_gives_the_window_mean() {
        let series = vec![1.0, 3.0, 2.0, 6.0];
        let out = lpe_filter(series, 4, 0).unwrap();
        assert!((out[3] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn laplacian_of_an_edge() {
        let pe = laplacian_encoding(3, vec![0, 1], 2).unwrap();
        assert_eq!(pe.len(), 6);
        assert_eq!(&pe[4..], &[0.0, 0.0]);
    }
}
