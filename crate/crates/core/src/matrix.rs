//! Dense symmetric matrices and the handful of factorizations the pipeline
//! needs: symmetric eigendecomposition, Cholesky, nearest positive
//! semidefinite projection, log-determinants and trace products.
//!
//! Storage is a full row-major buffer. Symmetry is exact: every constructor
//! either checks it or enforces it by averaging mirrored entries.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A real symmetric `dim × dim` matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    /// Builds a matrix from a row-major buffer, rejecting asymmetric or
    /// non-finite input.
    pub fn from_row_major(dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                got: data.len(),
            });
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        for i in 0..dim {
            for j in (i + 1)..dim {
                if data[i * dim + j] != data[j * dim + i] {
                    return Err(Error::NotSymmetric { row: i, col: j });
                }
            }
        }
        Ok(Self { dim, data })
    }

    /// Builds a matrix from a row-major buffer, replacing each mirrored pair
    /// by its average.
    pub fn symmetrize(dim: usize, mut data: Vec<f64>) -> Result<Self> {
        if data.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                got: data.len(),
            });
        }
        for i in 0..dim {
            for j in (i + 1)..dim {
                let avg = 0.5 * (data[i * dim + j] + data[j * dim + i]);
                data[i * dim + j] = avg;
                data[j * dim + i] = avg;
            }
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { dim, data })
    }

    /// Builds a matrix from the upper triangle produced by `f(i, j)` with `i <= j`.
    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = vec![0.0; dim * dim];
        for i in 0..dim {
            for j in i..dim {
                let v = f(i, j);
                data[i * dim + j] = v;
                data[j * dim + i] = v;
            }
        }
        Self { dim, data }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_diag(&vec![1.0; dim])
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let dim = diag.len();
        let mut m = Self::zeros(dim);
        for (i, &d) in diag.iter().enumerate() {
            m.data[i * dim + i] = d;
        }
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    /// Row-major view of all entries.
    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    /// Writes `v` at `(i, j)` and `(j, i)`.
    pub(crate) fn set_sym(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.dim + j] = v;
        self.data[j * self.dim + i] = v;
    }

    /// Principal submatrix on the given (row = column) positions.
    pub fn principal_submatrix(&self, idx: &[usize]) -> SymMatrix {
        let m = idx.len();
        let mut data = Vec::with_capacity(m * m);
        for &a in idx {
            let row = self.row(a);
            data.extend(idx.iter().map(|&b| row[b]));
        }
        SymMatrix { dim: m, data }
    }

    pub fn scaled(&self, c: f64) -> SymMatrix {
        SymMatrix {
            dim: self.dim,
            data: self.data.iter().map(|x| x * c).collect(),
        }
    }

    /// Entrywise (Hadamard) product.
    pub fn hadamard(&self, other: &SymMatrix) -> Result<SymMatrix> {
        self.check_dim(other)?;
        Ok(SymMatrix {
            dim: self.dim,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a * b)
                .collect(),
        })
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn frobenius_distance(&self, other: &SymMatrix) -> Result<f64> {
        self.check_dim(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt())
    }

    pub fn max_abs_diff(&self, other: &SymMatrix) -> Result<f64> {
        self.check_dim(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// Plain matrix product; the result is generally not symmetric.
    pub fn matmul(&self, other: &SymMatrix) -> Result<Vec<f64>> {
        self.check_dim(other)?;
        let n = self.dim;
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            let a = self.row(i);
            let o = &mut out[i * n..(i + 1) * n];
            for (k, &aik) in a.iter().enumerate() {
                if aik == 0.0 {
                    continue;
                }
                for (oj, &bkj) in o.iter_mut().zip(other.row(k)) {
                    *oj += aik * bkj;
                }
            }
        }
        Ok(out)
    }

    pub fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.data)
    }

    fn check_dim(&self, other: &SymMatrix) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: other.dim,
            });
        }
        Ok(())
    }
}

/// Eigenvalues in descending order with orthonormal eigenvectors stored as
/// the columns of a row-major `dim × dim` buffer.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub values: Vec<f64>,
    pub vectors: Vec<f64>,
}

impl EigenDecomposition {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Entry `i` of eigenvector `k`.
    #[inline]
    pub fn vector_entry(&self, i: usize, k: usize) -> f64 {
        self.vectors[i * self.values.len() + k]
    }

    /// `V diag(f(λ)) Vᵀ`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> SymMatrix {
        let n = self.dim();
        let mapped: Vec<f64> = self.values.iter().map(|&l| f(l)).collect();
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            let vi = &self.vectors[i * n..(i + 1) * n];
            for j in i..n {
                let vj = &self.vectors[j * n..(j + 1) * n];
                let s: f64 = vi
                    .iter()
                    .zip(vj)
                    .zip(&mapped)
                    .map(|((a, b), l)| a * b * l)
                    .sum();
                data[i * n + j] = s;
                data[j * n + i] = s;
            }
        }
        SymMatrix { dim: n, data }
    }
}

/// Symmetric eigendecomposition (Householder tridiagonalization followed by
/// implicit QL, via `nalgebra`).
pub fn eigen_sym(a: &SymMatrix) -> Result<EigenDecomposition> {
    if a.data.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }
    let n = a.dim;
    if n == 0 {
        return Ok(EigenDecomposition {
            values: vec![],
            vectors: vec![],
        });
    }
    let budget = 100 * n.max(10);
    let eig = SymmetricEigen::try_new(a.to_nalgebra(), f64::EPSILON, budget)
        .ok_or(Error::NoConvergence)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = vec![0.0; n * n];
    for (col, &k) in order.iter().enumerate() {
        for i in 0..n {
            vectors[i * n + col] = eig.eigenvectors[(i, k)];
        }
    }
    Ok(EigenDecomposition { values, vectors })
}

/// Default eigenvalue floor for projections: `1e-8 · max(λ_max, 1)`.
pub fn default_psd_floor(lambda_max: f64) -> f64 {
    1e-8 * lambda_max.max(1.0)
}

/// Frobenius-nearest symmetric matrix whose eigenvalues are all at least
/// `floor`: `V diag(max(λᵢ, floor)) Vᵀ`.
///
/// Inputs that already satisfy the floor are returned unchanged.
pub fn nearest_psd(a: &SymMatrix, floor: f64) -> Result<SymMatrix> {
    if floor < 0.0 || !floor.is_finite() {
        return Err(Error::InvalidInput(format!("psd floor must be >= 0, got {floor}")));
    }
    if a.data.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }
    if min_eigenvalue_exceeds(a, floor) {
        return Ok(a.clone());
    }
    let eig = eigen_sym(a)?;
    Ok(eig.reconstruct_with(|l| l.max(floor)))
}

/// [`nearest_psd`] with the floor from [`default_psd_floor`].
pub fn nearest_psd_default(a: &SymMatrix) -> Result<SymMatrix> {
    if a.data.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }
    // Gershgorin bound on λ_max gives a floor at least as large as the exact
    // one, so a successful shifted factorization proves the input is fine.
    let gersh = (0..a.dim)
        .map(|i| a.row(i).iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    if min_eigenvalue_exceeds(a, default_psd_floor(gersh)) {
        return Ok(a.clone());
    }
    let eig = eigen_sym(a)?;
    let floor = default_psd_floor(eig.values.first().copied().unwrap_or(0.0));
    Ok(eig.reconstruct_with(|l| l.max(floor)))
}

/// True when `a − floor·I` admits a Cholesky factorization.
fn min_eigenvalue_exceeds(a: &SymMatrix, floor: f64) -> bool {
    let n = a.dim;
    let mut buf = a.data.clone();
    for i in 0..n {
        buf[i * n + i] -= floor;
    }
    cholesky_in_place(&mut buf, n).is_ok()
}

/// `Σᵢ log λᵢ` of a positive definite matrix, via Cholesky.
pub fn logdet_psd(a: &SymMatrix) -> Result<f64> {
    Ok(Cholesky::new(a)?.logdet())
}

/// `Tr(AᵀB) = Σᵢⱼ AᵢⱼBᵢⱼ`.
pub fn trace_product(a: &SymMatrix, b: &SymMatrix) -> Result<f64> {
    a.check_dim(b)?;
    Ok(a.data.iter().zip(&b.data).map(|(x, y)| x * y).sum())
}

/// Lower-triangular Cholesky factor `A = LLᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    dim: usize,
    l: Vec<f64>,
}

impl Cholesky {
    pub fn new(a: &SymMatrix) -> Result<Self> {
        let mut l = a.data.clone();
        cholesky_in_place(&mut l, a.dim)?;
        Ok(Self { dim: a.dim, l })
    }

    pub fn logdet(&self) -> f64 {
        let n = self.dim;
        2.0 * (0..n).map(|i| self.l[i * n + i].ln()).sum::<f64>()
    }

    /// `out = L z`.
    pub fn lower_mul(&self, z: &[f64], out: &mut [f64]) {
        let n = self.dim;
        for (i, o) in out.iter_mut().enumerate().take(n) {
            *o = dot(&self.l[i * n..=i * n + i], &z[..=i]);
        }
    }

    /// Solves `Ax = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.dim;
        for i in 0..n {
            let row = &self.l[i * n..i * n + i];
            let s: f64 = row.iter().zip(&b[..i]).map(|(l, x)| l * x).sum();
            b[i] = (b[i] - s) / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in (i + 1)..n {
                s -= self.l[k * n + i] * b[k];
            }
            b[i] = s / self.l[i * n + i];
        }
    }

    pub fn inverse(&self) -> SymMatrix {
        let n = self.dim;
        // L⁻¹ by forward substitution, then A⁻¹ = L⁻ᵀ L⁻¹.
        let mut linv = vec![0.0; n * n];
        for j in 0..n {
            linv[j * n + j] = 1.0 / self.l[j * n + j];
            for i in (j + 1)..n {
                let mut s = 0.0;
                for k in j..i {
                    s += self.l[i * n + k] * linv[k * n + j];
                }
                linv[i * n + j] = -s / self.l[i * n + i];
            }
        }
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let mut s = 0.0;
                for k in j..n {
                    s += linv[k * n + i] * linv[k * n + j];
                }
                data[i * n + j] = s;
                data[j * n + i] = s;
            }
        }
        SymMatrix { dim: n, data }
    }
}

/// In-place Cholesky of a row-major `n × n` buffer; only the lower triangle
/// of the result is meaningful.
pub(crate) fn cholesky_in_place(a: &mut [f64], n: usize) -> Result<()> {
    for j in 0..n {
        let (top, bottom) = a.split_at_mut((j + 1) * n);
        let row_j = &mut top[j * n..(j + 1) * n];
        let d = row_j[j] - dot(&row_j[..j], &row_j[..j]);
        if !(d > 0.0 && d.is_finite()) {
            return Err(Error::NotPositiveDefinite);
        }
        let d = d.sqrt();
        row_j[j] = d;
        let lj = &row_j[..j];
        for row_i in bottom.chunks_exact_mut(n) {
            let s = row_i[j] - dot(&row_i[..j], lj);
            row_i[j] = s / d;
        }
    }
    Ok(())
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Log-determinant of a small positive definite row-major buffer,
/// destroying its contents.
pub(crate) fn logdet_in_place(a: &mut [f64], n: usize) -> Result<f64> {
    cholesky_in_place(a, n)?;
    Ok(2.0 * (0..n).map(|i| a[i * n + i].ln()).sum::<f64>())
}
