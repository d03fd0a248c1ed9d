//! Segment covariance estimation under missingness.
//!
//! All estimators are computed from [`Moments`], running pairwise sums over
//! a set of rows. Moments support adding and removing single rows, so a
//! split scan can move the split point one row at a time in `O(p²)`.

use serde::{Deserialize, Serialize};

use crate::data::{DataMatrix, Segment, VariableSubset};
use crate::error::{Error, Result};
use crate::matrix::{default_psd_floor, nearest_psd_default, SymMatrix};

/// Covariance estimator used for a segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovMethod {
    /// Plain maximum-likelihood covariance; requires fully observed data.
    Complete,
    /// Zero-padded centered values (mean imputation).
    Average,
    /// Average imputation rescaled by the inverse observation rates, then
    /// projected onto the PSD cone.
    Lw,
    /// Pairwise-complete covariances, projected onto the PSD cone.
    Pairwise,
}

impl CovMethod {
    pub const ALL: [CovMethod; 4] = [
        CovMethod::Complete,
        CovMethod::Average,
        CovMethod::Lw,
        CovMethod::Pairwise,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CovMethod::Complete => "complete",
            CovMethod::Average => "average",
            CovMethod::Lw => "lw",
            CovMethod::Pairwise => "pairwise",
        }
    }
}

impl std::str::FromStr for CovMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "complete" => Ok(CovMethod::Complete),
            "average" | "av" => Ok(CovMethod::Average),
            "lw" => Ok(CovMethod::Lw),
            "pairwise" | "pair" => Ok(CovMethod::Pairwise),
            other => Err(Error::InvalidInput(format!("unknown covariance method '{other}'"))),
        }
    }
}

/// Per-variable centers subtracted before accumulating sums; keeps the
/// accumulated products well scaled when the data have large means.
pub fn column_centers(data: &DataMatrix) -> Vec<f64> {
    let p = data.p();
    let mut sums = vec![0.0; p];
    let mut counts = vec![0usize; p];
    for i in 0..data.n() {
        for (j, (&v, &o)) in data.row_values(i).iter().zip(data.row_mask(i)).enumerate() {
            if o {
                sums[j] += v;
                counts[j] += 1;
            }
        }
    }
    sums.iter()
        .zip(&counts)
        .map(|(&s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
        .collect()
}

/// Pairwise sums over a set of rows, with values shifted by fixed centers `c`:
///
/// * `count[j][k]` — rows where both `j` and `k` are observed,
/// * `sx[j][k]`    — `Σ (x_j − c_j)` over those rows (not symmetric),
/// * `sxx[j][k]`   — `Σ (x_j − c_j)(x_k − c_k)` over those rows.
#[derive(Debug, Clone)]
pub struct Moments {
    p: usize,
    rows: usize,
    shift: Vec<f64>,
    count: Vec<f64>,
    sx: Vec<f64>,
    sxx: Vec<f64>,
    scratch_idx: Vec<usize>,
    scratch_val: Vec<f64>,
}

impl Moments {
    pub fn empty(shift: Vec<f64>) -> Self {
        let p = shift.len();
        Self {
            p,
            rows: 0,
            shift,
            count: vec![0.0; p * p],
            sx: vec![0.0; p * p],
            sxx: vec![0.0; p * p],
            scratch_idx: Vec::with_capacity(p),
            scratch_val: Vec::with_capacity(p),
        }
    }

    pub fn from_rows(data: &DataMatrix, shift: &[f64], rows: impl IntoIterator<Item = usize>) -> Self {
        let mut m = Self::empty(shift.to_vec());
        for i in rows {
            m.add_row(data, i);
        }
        m
    }

    pub fn for_segment(data: &DataMatrix, shift: &[f64], seg: Segment) -> Self {
        Self::from_rows(data, shift, seg.rows())
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn add_row(&mut self, data: &DataMatrix, i: usize) {
        self.update(data, i, 1.0);
        self.rows += 1;
    }

    pub fn remove_row(&mut self, data: &DataMatrix, i: usize) {
        self.update(data, i, -1.0);
        self.rows -= 1;
    }

    fn update(&mut self, data: &DataMatrix, i: usize, sign: f64) {
        let p = self.p;
        self.scratch_idx.clear();
        self.scratch_val.clear();
        for (j, (&v, &o)) in data.row_values(i).iter().zip(data.row_mask(i)).enumerate() {
            if o {
                self.scratch_idx.push(j);
                self.scratch_val.push(v - self.shift[j]);
            }
        }
        for (&a, &ya) in self.scratch_idx.iter().zip(&self.scratch_val) {
            let base = a * p;
            let sya = sign * ya;
            for (&b, &yb) in self.scratch_idx.iter().zip(&self.scratch_val) {
                self.count[base + b] += sign;
                self.sx[base + b] += sya;
                self.sxx[base + b] += sya * yb;
            }
        }
    }

    /// Observed count of each variable.
    pub fn counts(&self) -> Vec<usize> {
        (0..self.p)
            .map(|j| self.count[j * self.p + j].round() as usize)
            .collect()
    }

    #[inline]
    pub fn joint_count(&self, j: usize, k: usize) -> f64 {
        self.count[j * self.p + k]
    }

    pub fn subset(&self, k: usize) -> Result<VariableSubset> {
        VariableSubset::from_counts(&self.counts(), k)
    }

    /// Means over observed entries for the subset variables. Every subset
    /// variable must have at least one observation.
    pub fn means(&self, subset: &VariableSubset) -> Vec<f64> {
        subset
            .indices
            .iter()
            .map(|&j| {
                let c = self.count[j * self.p + j];
                self.shift[j] + self.sx[j * self.p + j] / c
            })
            .collect()
    }

    /// Row-major `|J| × |J|` matrix of `Σ o_j o_k (x_j − μ_j)(x_k − μ_k)` over
    /// the accumulated rows for arbitrary centers `μ` (one per subset entry).
    pub fn centered_cross(&self, subset: &VariableSubset, mu: &[f64]) -> Vec<f64> {
        let p = self.p;
        let idx = &subset.indices;
        let q = idx.len();
        let m: Vec<f64> = idx.iter().zip(mu).map(|(&j, &u)| u - self.shift[j]).collect();
        let mut out = vec![0.0; q * q];
        for (a, &j) in idx.iter().enumerate() {
            for b in a..q {
                let k = idx[b];
                let jk = j * p + k;
                let kj = k * p + j;
                let v = self.sxx[jk] - m[b] * self.sx[jk] - m[a] * self.sx[kj]
                    + m[a] * m[b] * self.count[jk];
                out[a * q + b] = v;
                out[b * q + a] = v;
            }
        }
        out
    }

    /// Zero-padded (average imputation) covariance with the segment's own
    /// means and divisor equal to the number of rows.
    pub fn average_cov(&self, subset: &VariableSubset) -> SymMatrix {
        let mu = self.means(subset);
        let q = subset.len();
        let inv = 1.0 / self.rows as f64;
        let data = self.centered_cross(subset, &mu).into_iter().map(|v| v * inv).collect();
        sym_unchecked(q, data)
    }

    /// Pairwise-complete covariances: each entry is the ML estimate over the
    /// rows where both variables are observed, centered by the means over
    /// those same rows. Pairs observed together fewer than twice get zero.
    pub fn pairwise_cov(&self, subset: &VariableSubset) -> SymMatrix {
        let p = self.p;
        let idx = &subset.indices;
        let q = idx.len();
        let mut data = vec![0.0; q * q];
        for (a, &j) in idx.iter().enumerate() {
            for b in a..q {
                let k = idx[b];
                let jk = j * p + k;
                let n = self.count[jk];
                let v = if n < 2.0 {
                    0.0
                } else {
                    (self.sxx[jk] - self.sx[jk] * self.sx[k * p + j] / n) / n
                };
                data[a * q + b] = v;
                data[b * q + a] = v;
            }
        }
        sym_unchecked(q, data)
    }

    /// Observation-rate correction `M̂` for the subset variables.
    pub fn lw_multiplier(&self, subset: &VariableSubset) -> Result<SymMatrix> {
        let len = self.rows as f64;
        let keep: Vec<f64> = subset
            .indices
            .iter()
            .map(|&j| self.count[j * self.p + j] / len)
            .collect();
        if keep.iter().any(|&r| r <= 0.0) {
            return Err(Error::DegenerateRho);
        }
        let q = keep.len();
        Ok(SymMatrix::from_fn(q, |a, b| {
            if a == b {
                1.0 / keep[a]
            } else {
                1.0 / (keep[a] * keep[b])
            }
        }))
    }

    fn support(&self, subset: &VariableSubset) -> Vec<usize> {
        let idx = &subset.indices;
        let mut out = Vec::with_capacity(idx.len() * idx.len());
        for &j in idx {
            for &k in idx {
                out.push(self.count[j * self.p + k].round() as usize);
            }
        }
        out
    }

    /// Covariance estimate over `subset` with the given method.
    pub fn estimate(&self, subset: &VariableSubset, method: CovMethod) -> Result<CovarianceEstimate> {
        if subset.is_empty() {
            return Err(Error::EmptySubset);
        }
        let (matrix, support) = match method {
            CovMethod::Complete => {
                if subset
                    .indices
                    .iter()
                    .any(|&j| self.count[j * self.p + j] < self.rows as f64)
                {
                    return Err(Error::HasMissing);
                }
                (lift_diagonal(self.average_cov(subset)), None)
            }
            CovMethod::Average => (lift_diagonal(self.average_cov(subset)), None),
            CovMethod::Lw => {
                let m = self.lw_multiplier(subset)?;
                let raw = self.average_cov(subset).hadamard(&m)?;
                (lift_diagonal(nearest_psd_default(&raw)?), Some(self.support(subset)))
            }
            CovMethod::Pairwise => (
                lift_diagonal(nearest_psd_default(&self.pairwise_cov(subset))?),
                Some(self.support(subset)),
            ),
        };
        Ok(CovarianceEstimate {
            means: self.means(subset),
            subset: subset.clone(),
            matrix,
            method,
            support,
        })
    }
}

fn sym_unchecked(q: usize, data: Vec<f64>) -> SymMatrix {
    SymMatrix::from_row_major(q, data).expect("moment matrices are symmetric by construction")
}

/// Replaces non-positive diagonal entries by the projection floor so the
/// estimate is usable as a glasso input.
fn lift_diagonal(mut s: SymMatrix) -> SymMatrix {
    let max_diag = s.diag().into_iter().fold(0.0, f64::max);
    let floor = default_psd_floor(max_diag);
    for i in 0..s.dim() {
        if s.get(i, i) < floor {
            s.set_sym(i, i, floor);
        }
    }
    s
}

/// A covariance estimate over a retained-variable subset.
#[derive(Debug, Clone)]
pub struct CovarianceEstimate {
    pub subset: VariableSubset,
    pub matrix: SymMatrix,
    pub method: CovMethod,
    /// Centering means, one per subset variable.
    pub means: Vec<f64>,
    /// Row-major joint observation counts over the subset (lw and pairwise).
    pub support: Option<Vec<usize>>,
}

fn segment_moments(data: &DataMatrix, seg: Segment) -> Result<Moments> {
    data.check_segment(seg)?;
    Ok(Moments::for_segment(data, &column_centers(data), seg))
}

fn check_k(k: usize) -> Result<()> {
    if k < 2 {
        return Err(Error::InvalidInput(format!("min_obs must be >= 2, got {k}")));
    }
    Ok(())
}

/// Estimate for `seg` restricted to the variables observed at least `k` times.
pub fn estimate(data: &DataMatrix, seg: Segment, k: usize, method: CovMethod) -> Result<CovarianceEstimate> {
    check_k(k)?;
    let m = segment_moments(data, seg)?;
    let subset = m.subset(k)?;
    m.estimate(&subset, method)
}

/// Maximum-likelihood covariance of a fully observed segment.
pub fn cov_complete(data: &DataMatrix, seg: Segment) -> Result<CovarianceEstimate> {
    if data.has_missing_in(seg) {
        return Err(Error::HasMissing);
    }
    let m = segment_moments(data, seg)?;
    m.estimate(&VariableSubset::all(data.p(), 2), CovMethod::Complete)
}

pub fn cov_average(data: &DataMatrix, seg: Segment, k: usize) -> Result<CovarianceEstimate> {
    estimate(data, seg, k, CovMethod::Average)
}

pub fn cov_lw(data: &DataMatrix, seg: Segment, k: usize) -> Result<CovarianceEstimate> {
    estimate(data, seg, k, CovMethod::Lw)
}

pub fn cov_pairwise(data: &DataMatrix, seg: Segment, k: usize) -> Result<CovarianceEstimate> {
    estimate(data, seg, k, CovMethod::Pairwise)
}

/// `M̂ᵢⱼ = 1/((1−ρ̂ᵢ)(1−ρ̂ⱼ))` off the diagonal and `1/(1−ρ̂ᵢ)` on it, with
/// `ρ̂` the empirical missing fraction of each subset variable in `seg`.
pub fn lw_multiplier(data: &DataMatrix, seg: Segment, subset: &VariableSubset) -> Result<SymMatrix> {
    segment_moments(data, seg)?.lw_multiplier(subset)
}
