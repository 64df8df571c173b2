//! Dense row-major real and complex tensors.

use super::NumericsError;

/// Dense row-major `f64` tensor. Rank 0 (scalar), 1 (vector) and 2 (matrix)
/// are what the model uses; higher ranks only appear in checkpoint blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, NumericsError> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(NumericsError::DataLength {
                shape,
                len: data.len(),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; len],
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let len = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; len],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: Vec::new(),
            data: vec![value],
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, NumericsError> {
        Self::new(vec![rows, cols], data)
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn rows(&self) -> usize {
        match self.shape.len() {
            0 => 1,
            1 => self.shape[0],
            _ => self.shape[0],
        }
    }

    pub fn cols(&self) -> usize {
        match self.shape.len() {
            0 | 1 => 1,
            _ => self.shape[1],
        }
    }

    /// Value of a rank-0 or single-element tensor.
    pub fn item(&self) -> f64 {
        self.data[0]
    }

    pub fn get2(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.shape[1] + c]
    }

    pub fn set2(&mut self, r: usize, c: usize, v: f64) {
        let cols = self.shape[1];
        self.data[r * cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows()).map(|r| self.get2(r, c)).collect()
    }

    pub fn transpose(&self) -> Self {
        let (r, c) = (self.rows(), self.cols());
        let mut out = Self::zeros(&[c, r]);
        for i in 0..r {
            for j in 0..c {
                out.data[j * r + i] = self.data[i * c + j];
            }
        }
        out
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Plain matrix product for rank-2 operands.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor, NumericsError> {
        if self.rank() != 2 || other.rank() != 2 || self.shape[1] != other.shape[0] {
            return Err(NumericsError::shape("matmul", &self.shape, &other.shape));
        }
        let (m, k, n) = (self.shape[0], self.shape[1], other.shape[1]);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let a_row = &self.data[i * k..(i + 1) * k];
            let out_row = &mut out[i * n..(i + 1) * n];
            for (p, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[p * n..(p + 1) * n];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Tensor::matrix(m, n, out)
    }

    /// `self · x` for a matrix and a slice of its column count.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.rank(), 2, "matvec needs a matrix");
        assert_eq!(self.shape[1], x.len(), "matvec length mismatch");
        (0..self.shape[0])
            .map(|r| self.row(r).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub(crate) fn reshape_unchecked(mut self, shape: Vec<usize>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), self.data.len());
        self.shape = shape;
        self
    }
}

/// Complex tensor stored as separate real and imaginary parts.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexTensor {
    pub real_part: Tensor,
    pub imag_part: Tensor,
}

impl ComplexTensor {
    pub fn new(real_part: Tensor, imag_part: Tensor) -> Result<Self, NumericsError> {
        if real_part.shape() != imag_part.shape() {
            return Err(NumericsError::shape(
                "complex parts",
                real_part.shape(),
                imag_part.shape(),
            ));
        }
        Ok(Self {
            real_part,
            imag_part,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            real_part: Tensor::zeros(shape),
            imag_part: Tensor::zeros(shape),
        }
    }

    /// `1 + 0i` everywhere.
    pub fn ones(shape: &[usize]) -> Self {
        Self {
            real_part: Tensor::filled(shape, 1.0),
            imag_part: Tensor::zeros(shape),
        }
    }

    pub fn shape(&self) -> &[usize] {
        self.real_part.shape()
    }

    /// Elementwise complex product.
    pub fn hadamard(&self, other: &ComplexTensor) -> Result<ComplexTensor, NumericsError> {
        if self.shape() != other.shape() {
            return Err(NumericsError::shape("hadamard", self.shape(), other.shape()));
        }
        let n = self.real_part.len();
        let (ar, ai) = (self.real_part.data(), self.imag_part.data());
        let (br, bi) = (other.real_part.data(), other.imag_part.data());
        let mut re = Vec::with_capacity(n);
        let mut im = Vec::with_capacity(n);
        for i in 0..n {
            re.push(ar[i] * br[i] - ai[i] * bi[i]);
            im.push(ar[i] * bi[i] + ai[i] * br[i]);
        }
        let shape = self.shape().to_vec();
        Ok(ComplexTensor {
            real_part: Tensor::new(shape.clone(), re)?,
            imag_part: Tensor::new(shape, im)?,
        })
    }
}
