use super::GraphError;

/// Fixed cosine time encoder `f(Δ)_i = cos(Δ·ω_i)` with
/// `ω_i = α^(−(i−1)/β)`. Has no learnable parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeEncoder {
    alpha: f64,
    beta: f64,
    omega: Vec<f64>,
}

impl TimeEncoder {
    pub fn new(dim: usize, alpha: f64, beta: f64) -> Self {
        let omega = (0..dim)
            .map(|i| alpha.powf(-(i as f64) / beta))
            .collect();
        Self { alpha, beta, omega }
    }

    pub fn dim(&self) -> usize {
        self.omega.len()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    pub fn encode(&self, delta: f64) -> Result<Vec<f64>, GraphError> {
        let mut out = vec![0.0; self.dim()];
        self.encode_into(delta, &mut out)?;
        Ok(out)
    }

    pub fn encode_into(&self, delta: f64, out: &mut [f64]) -> Result<(), GraphError> {
        if !(delta >= 0.0 && delta.is_finite()) {
            return Err(GraphError::NegativeDelta(delta));
        }
        for (o, w) in out.iter_mut().zip(&self.omega) {
            *o = (delta * w).cos();
        }
        Ok(())
    }
}

impl Default for TimeEncoder {
    fn default() -> Self {
        Self::new(100, 10.0, 10.0)
    }
}
