//! Observation matrix with an explicit missingness mask, and segment queries.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `n × p` observations; `observed[i * p + j]` is false where the value is
/// missing. Values under a false mask bit are never read.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    n: usize,
    p: usize,
    values: Vec<f64>,
    observed: Vec<bool>,
}

impl DataMatrix {
    pub fn new(n: usize, p: usize, mut values: Vec<f64>, observed: Vec<bool>) -> Result<Self> {
        if n == 0 || p == 0 {
            return Err(Error::InvalidInput(format!(
                "data needs n >= 1 and p >= 1, got {n} x {p}"
            )));
        }
        if values.len() != n * p || observed.len() != n * p {
            return Err(Error::DimensionMismatch {
                expected: n * p,
                got: values.len().min(observed.len()),
            });
        }
        for (v, &o) in values.iter_mut().zip(&observed) {
            if o {
                if !v.is_finite() {
                    return Err(Error::NonFinite);
                }
            } else {
                *v = 0.0;
            }
        }
        Ok(Self {
            n,
            p,
            values,
            observed,
        })
    }

    /// A fully observed matrix from a row-major buffer.
    pub fn complete(n: usize, p: usize, values: Vec<f64>) -> Result<Self> {
        Self::new(n, p, values, vec![true; n * p])
    }

    /// Builds from rows of optional values; all rows must have equal length.
    pub fn from_rows(rows: &[Vec<Option<f64>>]) -> Result<Self> {
        let n = rows.len();
        let p = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(n * p);
        let mut observed = Vec::with_capacity(n * p);
        for row in rows {
            if row.len() != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    got: row.len(),
                });
            }
            for v in row {
                values.push(v.unwrap_or(0.0));
                observed.push(v.is_some());
            }
        }
        Self::new(n, p, values, observed)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn p(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        let idx = i * self.p + j;
        self.observed[idx].then(|| self.values[idx])
    }

    #[inline]
    pub fn is_observed(&self, i: usize, j: usize) -> bool {
        self.observed[i * self.p + j]
    }

    /// Raw row values; entries under a false mask bit are zero.
    #[inline]
    pub fn row_values(&self, i: usize) -> &[f64] {
        &self.values[i * self.p..(i + 1) * self.p]
    }

    #[inline]
    pub fn row_mask(&self, i: usize) -> &[bool] {
        &self.observed[i * self.p..(i + 1) * self.p]
    }

    pub fn mask(&self) -> &[bool] {
        &self.observed
    }

    pub fn missing_count(&self) -> usize {
        self.observed.iter().filter(|&&o| !o).count()
    }

    pub fn has_missing_in(&self, seg: Segment) -> bool {
        self.observed[seg.start * self.p..seg.end * self.p]
            .iter()
            .any(|&o| !o)
    }

    /// Copy with the given cells marked missing.
    pub(crate) fn with_mask(&self, observed: Vec<bool>) -> DataMatrix {
        let mut values = self.values.clone();
        for (v, &o) in values.iter_mut().zip(&observed) {
            if !o {
                *v = 0.0;
            }
        }
        DataMatrix {
            n: self.n,
            p: self.p,
            values,
            observed,
        }
    }

    /// Full segment `(0, n]`.
    pub fn full_segment(&self) -> Segment {
        Segment {
            start: 0,
            end: self.n,
        }
    }

    pub fn check_segment(&self, seg: Segment) -> Result<()> {
        if seg.start >= seg.end || seg.end > self.n {
            return Err(Error::InvalidSegment {
                start: seg.start,
                end: seg.end,
                n: self.n,
            });
        }
        Ok(())
    }
}

/// Half-open interval `(start, end]` in the 1-based row convention, i.e.
/// storage rows `start..end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
}

impl Segment {
    pub fn new(start: usize, end: usize) -> Result<Self> {
        if start >= end {
            return Err(Error::InvalidSegment { start, end, n: end });
        }
        Ok(Self { start, end })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    #[inline]
    pub fn rows(&self) -> std::ops::Range<usize> {
        self.start..self.end
    }

    /// `(start, s]` and `(s, end]`.
    pub fn split_at(&self, s: usize) -> (Segment, Segment) {
        debug_assert!(self.start < s && s < self.end);
        (
            Segment {
                start: self.start,
                end: s,
            },
            Segment { start: s, end: self.end },
        )
    }
}

/// Variables with at least `k` observed values in some segment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariableSubset {
    pub indices: Vec<usize>,
    pub k: usize,
}

impl VariableSubset {
    pub fn all(p: usize, k: usize) -> Self {
        Self {
            indices: (0..p).collect(),
            k,
        }
    }

    /// Subset of variables whose count reaches `k`.
    pub fn from_counts(counts: &[usize], k: usize) -> Result<Self> {
        let indices: Vec<usize> = counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c >= k)
            .map(|(j, _)| j)
            .collect();
        if indices.is_empty() {
            return Err(Error::EmptySubset);
        }
        Ok(Self { indices, k })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Positions of `other`'s variables within `self`, or `None` when `other`
    /// is not contained in `self`.
    pub fn positions_of(&self, other: &VariableSubset) -> Option<Vec<usize>> {
        let mut out = Vec::with_capacity(other.len());
        let mut it = self.indices.iter().enumerate();
        for &v in &other.indices {
            loop {
                match it.next() {
                    Some((pos, &w)) if w == v => {
                        out.push(pos);
                        break;
                    }
                    Some((_, &w)) if w < v => continue,
                    _ => return None,
                }
            }
        }
        Some(out)
    }
}

/// Per-variable mean over the observed entries of `seg`; `None` for
/// variables with no observed entry.
pub fn segment_means(data: &DataMatrix, seg: Segment) -> Result<Vec<Option<f64>>> {
    data.check_segment(seg)?;
    let p = data.p();
    let mut sums = vec![0.0; p];
    let mut counts = vec![0usize; p];
    for i in seg.rows() {
        for (j, (&v, &o)) in data.row_values(i).iter().zip(data.row_mask(i)).enumerate() {
            if o {
                sums[j] += v;
                counts[j] += 1;
            }
        }
    }
    Ok(sums
        .into_iter()
        .zip(counts)
        .map(|(s, c)| (c > 0).then(|| s / c as f64))
        .collect())
}

/// Number of observed entries per variable within `seg`.
pub fn observed_counts(data: &DataMatrix, seg: Segment) -> Result<Vec<usize>> {
    data.check_segment(seg)?;
    let mut counts = vec![0usize; data.p()];
    for i in seg.rows() {
        for (c, &o) in counts.iter_mut().zip(data.row_mask(i)) {
            *c += o as usize;
        }
    }
    Ok(counts)
}

/// Variables with at least `k` observed values in `seg`, ascending.
///
/// Returns [`Error::EmptySubset`] when none qualifies; callers treat that
/// segment as unsplittable.
pub fn variable_subset(data: &DataMatrix, seg: Segment, k: usize) -> Result<VariableSubset> {
    if k < 2 {
        return Err(Error::InvalidInput(format!("min_obs must be >= 2, got {k}")));
    }
    VariableSubset::from_counts(&observed_counts(data, seg)?, k)
}
