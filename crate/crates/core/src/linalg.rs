//! Dense symmetric positive definite linear algebra.
//!
//! Matrices are stored row-major in a flat `Vec<f64>`. Inverses are never
//! formed; every Σ⁻¹ product goes through the Cholesky factor.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// A symmetric covariance matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl CovMatrix {
    /// Builds from row-major entries, checking symmetry to 1e-12 relative.
    pub fn from_row_major(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(domain("covariance dimension must be positive"));
        }
        if data.len() != dim * dim {
            return Err(Error::Shape {
                expected: dim * dim,
                actual: data.len(),
            });
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(domain(format!("covariance entry {bad} is not finite")));
        }
        let scale = data
            .iter()
            .fold(0.0_f64, |m, v| m.max(v.abs()))
            .max(f64::MIN_POSITIVE);
        for i in 0..dim {
            for j in 0..i {
                let (a, b) = (data[i * dim + j], data[j * dim + i]);
                if (a - b).abs() > 1e-12 * scale {
                    return Err(domain(format!(
                        "covariance is not symmetric at ({i}, {j}): {a} vs {b}"
                    )));
                }
            }
        }
        Ok(Self { dim, data })
    }

    /// Builds from nested rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        let mut data = Vec::with_capacity(dim * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::Shape {
                    expected: dim,
                    actual: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::from_row_major(dim, data)
    }

    pub fn identity(dim: usize) -> Self {
        let mut data = vec![0.0; dim * dim];
        for i in 0..dim {
            data[i * dim + i] = 1.0;
        }
        Self { dim, data }
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let dim = diag.len();
        let mut data = vec![0.0; dim * dim];
        for (i, &d) in diag.iter().enumerate() {
            data[i * dim + i] = d;
        }
        Self { dim, data }
    }

    /// Trusted construction for matrices symmetric by construction.
    pub(crate) fn from_symmetric_unchecked(dim: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), dim * dim);
        Self { dim, data }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }

    pub fn is_identity(&self) -> bool {
        (0..self.dim)
            .all(|i| (0..self.dim).all(|j| self.get(i, j) == if i == j { 1.0 } else { 0.0 }))
    }

    /// `Σ x`.
    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.dim, x.len())?;
        Ok(self
            .data
            .chunks_exact(self.dim)
            .map(|row| dot(row, x))
            .collect())
    }

    /// `xᵀ Σ x`.
    pub fn quad_form(&self, x: &[f64]) -> Result<f64> {
        Ok(dot(&self.mul_vec(x)?, x))
    }
}

/// Lower-triangular Cholesky factor `D` with `D Dᵀ = Σ`.
#[derive(Debug, Clone, PartialEq)]
pub struct CholeskyFactor {
    dim: usize,
    lower: Vec<f64>,
}

impl CholeskyFactor {
    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j > i {
            0.0
        } else {
            self.lower[i * self.dim + j]
        }
    }

    /// Row `i` of the factor up to and including the diagonal.
    #[inline]
    pub(crate) fn row(&self, i: usize) -> &[f64] {
        &self.lower[i * self.dim..i * self.dim + i + 1]
    }

    /// `D Dᵀ`.
    pub fn reconstruct(&self) -> CovMatrix {
        let n = self.dim;
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let v = dot(&self.row(i)[..=j], &self.row(j)[..=j]);
                data[i * n + j] = v;
                data[j * n + i] = v;
            }
        }
        CovMatrix::from_symmetric_unchecked(n, data)
    }

    /// Solves `D y = b`.
    pub fn forward_solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        check_len(self.dim, b.len())?;
        let mut y = b.to_vec();
        for i in 0..self.dim {
            let row = self.row(i);
            y[i] = (y[i] - dot(&row[..i], &y[..i])) / row[i];
        }
        Ok(y)
    }

    /// Solves `Dᵀ x = y`.
    pub fn backward_solve(&self, y: &[f64]) -> Result<Vec<f64>> {
        check_len(self.dim, y.len())?;
        let n = self.dim;
        let mut x = y.to_vec();
        for i in (0..n).rev() {
            x[i] /= self.lower[i * n + i];
            let xi = x[i];
            for (k, xk) in x[..i].iter_mut().enumerate() {
                *xk -= self.lower[i * n + k] * xi;
            }
        }
        Ok(x)
    }
}

/// The scalars `A = 1ᵀΣ⁻¹1`, `B = 1ᵀΣ⁻¹μ`, `C = μᵀΣ⁻¹μ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadScalars {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl QuadScalars {
    /// `C - B²/A`, the squared Σ⁻¹-norm of μ after projecting out the
    /// budget direction. Nonnegative up to rounding.
    pub fn residual(&self) -> f64 {
        self.c - self.b * self.b / self.a
    }
}

/// Cholesky–Banachiewicz factorization.
///
/// A pivot at or below `dim · ε · max_diag` is reported as
/// [`Error::NotPositiveDefinite`].
pub fn cholesky(m: &CovMatrix) -> Result<CholeskyFactor> {
    let n = m.dim;
    let max_diag = (0..n).fold(0.0_f64, |acc, i| acc.max(m.get(i, i)));
    let threshold = n as f64 * f64::EPSILON * max_diag;
    let mut lower = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let (head, tail) = lower.split_at_mut(i * n);
            let row_i = &mut tail[..n];
            let s = if j < i {
                dot(&row_i[..j], &head[j * n..j * n + j])
            } else {
                dot(&row_i[..j], &row_i[..j])
            };
            if i == j {
                let pivot = m.get(i, i) - s;
                if !(pivot > threshold) {
                    return Err(Error::NotPositiveDefinite { index: i, pivot });
                }
                row_i[i] = pivot.sqrt();
            } else {
                row_i[j] = (m.get(i, j) - s) / head[j * n + j];
            }
        }
    }
    Ok(CholeskyFactor { dim: n, lower })
}

/// Solves `Σ x = b` through the factor.
pub fn spd_solve(f: &CholeskyFactor, b: &[f64]) -> Result<Vec<f64>> {
    f.backward_solve(&f.forward_solve(b)?)
}

/// Computes `A`, `B`, `C` from the forward solves `D⁻¹1` and `D⁻¹μ`.
pub fn quad_scalars(f: &CholeskyFactor, mu: &[f64]) -> Result<QuadScalars> {
    Ok(forward_quad_scalars(f, mu)?.0)
}

/// Like [`quad_scalars`] but also returns `D⁻¹1` and `D⁻¹μ` for reuse.
pub(crate) fn forward_quad_scalars(
    f: &CholeskyFactor,
    mu: &[f64],
) -> Result<(QuadScalars, Vec<f64>, Vec<f64>)> {
    let ones = vec![1.0; f.dim];
    let y1 = f.forward_solve(&ones)?;
    let ymu = f.forward_solve(mu)?;
    let scalars = QuadScalars {
        a: dot(&y1, &y1),
        b: dot(&y1, &ymu),
        c: dot(&ymu, &ymu),
    };
    Ok((scalars, y1, ymu))
}

/// Dot product with four independent accumulators. The summation order is
/// fixed, so results are bit-reproducible.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0_f64; 4];
    let chunks = n / 4;
    for k in 0..chunks {
        let i = 4 * k;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in 4 * chunks..n {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::Shape { expected, actual })
    }
}
