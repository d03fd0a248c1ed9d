//! Rand index and adjusted Rand index of two segmentations of `1..=n`.
//!
//! Both are computed from the contingency table of block overlaps, which
//! for contiguous segmentations is found by one sweep over the boundaries.
//! Pair counts are exact integers; the final ratios are rounded once.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest `n` for which every intermediate pair-count product fits in
/// `i128`.
pub const MAX_N: usize = 1 << 31;

/// A segmentation of `1..=n` into contiguous blocks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    n: usize,
    boundaries: Vec<usize>,
}

impl Partition {
    /// `boundaries` must be strictly increasing from `0` to `n`.
    pub fn new(boundaries: Vec<usize>) -> Result<Self> {
        let ok = boundaries.len() >= 2 && boundaries[0] == 0 && boundaries.windows(2).all(|w| w[0] < w[1]);
        if !ok {
            return Err(Error::InvalidInput(format!(
                "partition boundaries must increase strictly from 0, got {boundaries:?}"
            )));
        }
        let n = *boundaries.last().unwrap();
        if n > MAX_N {
            return Err(Error::InvalidInput(format!("partition size {n} exceeds {MAX_N}")));
        }
        Ok(Self { n, boundaries })
    }

    /// Blocks split after each change point; duplicates and points outside
    /// `1..n` are rejected.
    pub fn from_change_points(n: usize, change_points: &[usize]) -> Result<Self> {
        let mut b = Vec::with_capacity(change_points.len() + 2);
        b.push(0);
        b.extend_from_slice(change_points);
        b.push(n);
        Self::new(b)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn boundaries(&self) -> &[usize] {
        &self.boundaries
    }

    pub fn change_points(&self) -> &[usize] {
        &self.boundaries[1..self.boundaries.len() - 1]
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        self.boundaries.windows(2).map(|w| w[1] - w[0]).collect()
    }
}

fn pairs(x: usize) -> i128 {
    let x = x as i128;
    x * (x - 1) / 2
}

/// `(Σᵢⱼ C(nᵢⱼ,2), Σᵢ C(aᵢ,2), Σⱼ C(bⱼ,2), C(n,2))`.
fn pair_counts(a: &Partition, b: &Partition) -> Result<(i128, i128, i128, i128)> {
    if a.n != b.n {
        return Err(Error::SizeMismatch { left: a.n, right: b.n });
    }
    if a.n < 2 {
        return Err(Error::InvalidInput(format!("need n >= 2, got {}", a.n)));
    }
    let (ab, bb) = (&a.boundaries, &b.boundaries);
    let (mut i, mut j) = (1, 1);
    let mut lo = 0;
    let mut joint = 0;
    while i < ab.len() && j < bb.len() {
        let hi = ab[i].min(bb[j]);
        joint += pairs(hi - lo);
        lo = hi;
        if ab[i] == hi {
            i += 1;
        }
        if bb[j] == hi {
            j += 1;
        }
    }
    let sa = a.block_sizes().into_iter().map(pairs).sum();
    let sb = b.block_sizes().into_iter().map(pairs).sum();
    Ok((joint, sa, sb, pairs(a.n)))
}

/// Fraction of the `C(n,2)` pairs on which the two partitions agree.
pub fn rand_index(a: &Partition, b: &Partition) -> Result<f64> {
    let (joint, sa, sb, total) = pair_counts(a, b)?;
    let agree = total + 2 * joint - sa - sb;
    Ok(agree as f64 / total as f64)
}

/// Hubert–Arabie adjusted Rand index; `1` for identical partitions.
pub fn adjusted_rand(a: &Partition, b: &Partition) -> Result<f64> {
    let (joint, sa, sb, total) = pair_counts(a, b)?;
    // Both sides scaled by 2·C(n,2) to stay integral.
    let num = 2 * (joint * total - sa * sb);
    let den = (sa + sb) * total - 2 * sa * sb;
    if den == 0 {
        return Ok(if a == b { 1.0 } else { 0.0 });
    }
    Ok(num as f64 / den as f64)
}
