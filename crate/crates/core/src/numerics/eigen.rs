//! Dense symmetric eigensolver.
//!
//! Small matrices use cyclic Jacobi rotations; larger ones go through
//! Householder tridiagonalization followed by implicit QL. Both paths return
//! eigenvalues in ascending order with each eigenvector's largest-magnitude
//! entry made non-negative (ties resolved at the lowest index).

use super::tensor::Tensor;
use super::NumericsError;

#[derive(Clone, Copy, Debug)]
pub struct EigenConfig {
    /// Largest accepted dimension.
    pub max_dim: usize,
    /// Dimensions up to this use Jacobi.
    pub jacobi_max_dim: usize,
    pub max_sweeps: usize,
    pub symmetry_tol: f64,
}

impl Default for EigenConfig {
    fn default() -> Self {
        Self {
            max_dim: 5000,
            jacobi_max_dim: 512,
            max_sweeps: 100,
            symmetry_tol: 1e-10,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SymmetricEigen {
    /// Ascending.
    pub values: Vec<f64>,
    /// `n × n`, eigenvector `i` in column `i`.
    pub vectors: Tensor,
}

pub fn symmetric_eigendecomposition(m: &Tensor) -> Result<SymmetricEigen, NumericsError> {
    symmetric_eigendecomposition_with(m, &EigenConfig::default())
}

pub fn symmetric_eigendecomposition_with(
    m: &Tensor,
    cfg: &EigenConfig,
) -> Result<SymmetricEigen, NumericsError> {
    let a = validated(m, cfg)?;
    let n = m.rows();
    if n <= cfg.jacobi_max_dim {
        jacobi(a, n, cfg.max_sweeps)
    } else {
        tridiagonal_ql(a, n, cfg.max_sweeps.max(30))
    }
}

/// Forces the Householder + QL path regardless of size.
pub fn symmetric_eigendecomposition_ql(m: &Tensor) -> Result<SymmetricEigen, NumericsError> {
    let cfg = EigenConfig::default();
    let a = validated(m, &cfg)?;
    tridiagonal_ql(a, m.rows(), 30)
}

/// Forces the Jacobi path regardless of size.
pub fn symmetric_eigendecomposition_jacobi(m: &Tensor) -> Result<SymmetricEigen, NumericsError> {
    let cfg = EigenConfig::default();
    let a = validated(m, &cfg)?;
    jacobi(a, m.rows(), cfg.max_sweeps)
}

/// Row-major symmetrized copy of `m`.
fn validated(m: &Tensor, cfg: &EigenConfig) -> Result<Vec<f64>, NumericsError> {
    if m.rank() != 2 || m.rows() != m.cols() {
        return Err(NumericsError::NotSquare(m.shape().to_vec()));
    }
    let n = m.rows();
    if n > cfg.max_dim {
        return Err(NumericsError::TooLarge {
            n,
            cap: cfg.max_dim,
        });
    }
    if !m.is_finite() {
        return Err(NumericsError::NonFinite("eigendecomposition input".into()));
    }
    let mut a = m.data().to_vec();
    for i in 0..n {
        for j in i + 1..n {
            let (x, y) = (a[i * n + j], a[j * n + i]);
            if (x - y).abs() > cfg.symmetry_tol {
                return Err(NumericsError::Asymmetric {
                    row: i,
                    col: j,
                    diff: (x - y).abs(),
                });
            }
            let avg = 0.5 * (x + y);
            a[i * n + j] = avg;
            a[j * n + i] = avg;
        }
    }
    Ok(a)
}

fn jacobi(mut a: Vec<f64>, n: usize, max_sweeps: usize) -> Result<SymmetricEigen, NumericsError> {
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let frob = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let tol = 1e-15 * frob.max(f64::MIN_POSITIVE);
    let mut converged = n <= 1;
    for _ in 0..max_sweeps {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += a[p * n + q] * a[p * n + q];
            }
        }
        if off.sqrt() <= tol {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let sign = if theta >= 0.0 { 1.0 } else { -1.0 };
                let t = sign / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k * n + p], a[k * n + q]);
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p * n + k], a[q * n + k]);
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                for k in 0..n {
                    let (vkp, vkq) = (v[k * n + p], v[k * n + q]);
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    if !converged {
        return Err(NumericsError::NoConvergence {
            iterations: max_sweeps,
        });
    }
    let values = (0..n).map(|i| a[i * n + i]).collect();
    finish(values, v, n)
}

/// Householder reduction to tridiagonal form, then implicit QL with shifts.
fn tridiagonal_ql(
    mut v: Vec<f64>,
    n: usize,
    max_iter: usize,
) -> Result<SymmetricEigen, NumericsError> {
    if n == 0 {
        return finish(Vec::new(), Vec::new(), 0);
    }
    let idx = |r: usize, c: usize| r * n + c;
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];

    for j in 0..n {
        d[j] = v[idx(n - 1, j)];
    }
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for k in 0..i {
            scale += d[k].abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[idx(i - 1, j)];
                v[idx(i, j)] = 0.0;
                v[idx(j, i)] = 0.0;
            }
        } else {
            for k in 0..i {
                d[k] /= scale;
                h += d[k] * d[k];
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = 0.0;
            }
            for j in 0..i {
                f = d[j];
                v[idx(j, i)] = f;
                g = e[j] + v[idx(j, j)] * f;
                for k in j + 1..i {
                    g += v[idx(k, j)] * d[k];
                    e[k] += v[idx(k, j)] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[idx(k, j)] -= f * e[k] + g * d[k];
                }
                d[j] = v[idx(i - 1, j)];
                v[idx(i, j)] = 0.0;
            }
        }
        d[i] = h;
    }
    for i in 0..n - 1 {
        v[idx(n - 1, i)] = v[idx(i, i)];
        v[idx(i, i)] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[idx(k, i + 1)] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[idx(k, i + 1)] * v[idx(k, j)];
                }
                for k in 0..=i {
                    v[idx(k, j)] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[idx(k, i + 1)] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[idx(n - 1, j)];
        v[idx(n - 1, j)] = 0.0;
    }
    v[idx(n - 1, n - 1)] = 1.0;
    e[0] = 0.0;

    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    let mut f = 0.0;
    let mut tst1 = 0.0_f64;
    let eps = f64::EPSILON;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > max_iter {
                    return Err(NumericsError::NoConvergence { iterations: iter });
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for k in 0..n {
                        h = v[idx(k, i + 1)];
                        v[idx(k, i + 1)] = s * v[idx(k, i)] + c * h;
                        v[idx(k, i)] = c * v[idx(k, i)] - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    finish(d, v, n)
}

/// Sorts ascending and applies the sign convention.
fn finish(values: Vec<f64>, v: Vec<f64>, n: usize) -> Result<SymmetricEigen, NumericsError> {
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]).then(i.cmp(&j)));
    let mut out = vec![0.0; n * n];
    let mut sorted = Vec::with_capacity(n);
    for (new_col, &old_col) in order.iter().enumerate() {
        sorted.push(values[old_col]);
        let mut pivot = 0;
        let mut best = -1.0;
        for r in 0..n {
            let x = v[r * n + old_col].abs();
            if x > best {
                best = x;
                pivot = r;
            }
        }
        let flip = if v[pivot * n + old_col] < 0.0 { -1.0 } else { 1.0 };
        for r in 0..n {
            out[r * n + new_col] = flip * v[r * n + old_col];
        }
    }
    Ok(SymmetricEigen {
        values: sorted,
        vectors: Tensor::matrix(n, n, out)?,
    })
}
