//! Likelihood gains of splitting a segment.
//!
//! Missing-data losses are the observed-part Gaussian log-likelihood: each
//! row contributes through the principal submatrix of the precision matrix
//! on its observed variables. All losses and gains here are reported on the
//! scale of [`segment_loss`](crate::glasso::segment_loss), i.e. twice the
//! normalized observed-part log-likelihood, so that missing-data gains
//! reduce to complete-data gains on fully observed input.
//!
//! [`SegmentEvaluator`] fits the full segment once and then evaluates both
//! the naive and the adjusted gain at any split. Its quadratic terms come
//! from pairwise moments (`Σᵢ (xᵢ−μ)ᵀΩ(xᵢ−μ)` over observed parts equals
//! `Tr(Ω C)` with `C` the zero-padded cross-product matrix) and its per-row
//! log-determinants use `log|Ω_oo| = log|Ω| + log|Σ_mm|` when few variables
//! are missing.

use std::collections::HashMap;
use std::ops::Range;
use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::{column_centers, cov_complete, CovMethod, CovarianceEstimate, Moments};
use crate::data::{DataMatrix, Segment, VariableSubset};
use crate::error::{Error, Result};
use crate::glasso::{glasso_fit, glasso_fit_warm, segment_loss, GlassoConfig, PrecisionFit};
use crate::matrix::{logdet_in_place, Cholesky, SymMatrix};

const LOG_2PI: f64 = 1.837_877_066_409_345_5;

/// Splits evaluated per task; each task rebuilds its moments once and then
/// moves the split one row at a time.
const CHUNK: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GainKind {
    Complete,
    Naive,
    Adjusted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainCurve {
    pub segment: Segment,
    pub splits: Vec<usize>,
    pub gains: Vec<f64>,
    pub subset_k: usize,
    pub method: CovMethod,
    pub kind: GainKind,
    /// Set when the segment has no variable with `subset_k` observations.
    pub empty_subset: bool,
}

impl GainCurve {
    pub fn empty(segment: Segment, subset_k: usize, method: CovMethod, kind: GainKind, empty_subset: bool) -> Self {
        Self {
            segment,
            splits: Vec::new(),
            gains: Vec::new(),
            subset_k,
            method,
            kind,
            empty_subset,
        }
    }

    pub fn len(&self) -> usize {
        self.splits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.splits.is_empty()
    }
}

/// Admissible splits of `seg`: both children keep at least `margin` rows.
pub fn admissible_splits(seg: Segment, margin: usize) -> Range<usize> {
    let m = margin.max(1);
    if seg.len() < 2 * m {
        return 0..0;
    }
    (seg.start + m)..(seg.end - m + 1)
}

/// Normalized observed-part negative log-likelihood
/// `(1/(2n)) Σᵢ [−log|2π Ω_oᵢ| + (x_oᵢ − μ_oᵢ)ᵀ Ω_oᵢ (x_oᵢ − μ_oᵢ)]` over
/// the rows of `seg`, where `oᵢ` are the variables of `subset` observed in
/// row `i` and `Ω_oᵢ` is the principal submatrix of `omega`. Rows without
/// any observed subset variable contribute zero.
///
/// Row evaluation is direct; log-determinants are cached per pattern.
pub fn loglik_observed(
    omega: &SymMatrix,
    means: &[f64],
    data: &DataMatrix,
    seg: Segment,
    subset: &VariableSubset,
    n_total: usize,
) -> Result<f64> {
    data.check_segment(seg)?;
    let q = subset.len();
    if omega.dim() != q || means.len() != q {
        return Err(Error::DimensionMismatch {
            expected: q,
            got: if omega.dim() != q { omega.dim() } else { means.len() },
        });
    }
    let mut cache: HashMap<Vec<usize>, f64> = HashMap::new();
    let mut total = 0.0;
    let mut pos = Vec::with_capacity(q);
    let mut dev = Vec::with_capacity(q);
    for i in seg.rows() {
        pos.clear();
        dev.clear();
        for (a, &j) in subset.indices.iter().enumerate() {
            if let Some(x) = data.get(i, j) {
                pos.push(a);
                dev.push(x - means[a]);
            }
        }
        if pos.is_empty() {
            continue;
        }
        let ld = match cache.get(&pos) {
            Some(&v) => v,
            None => {
                let v = logdet_in_place(&mut omega.principal_submatrix(&pos).as_slice().to_vec(), pos.len())
                    .expect("principal submatrices of a positive definite matrix are positive definite");
                cache.insert(pos.clone(), v);
                v
            }
        };
        let mut quad = 0.0;
        for (a, &pa) in pos.iter().enumerate() {
            let row = omega.row(pa);
            let s: f64 = pos.iter().zip(&dev).map(|(&pb, &d)| row[pb] * d).sum();
            quad += dev[a] * s;
        }
        total += -(pos.len() as f64 * LOG_2PI + ld) + quad;
    }
    Ok(total / (2.0 * n_total as f64))
}

/// Complete-data gain `L((u,v]) − L((u,s]) − L((s,v])`, each term the
/// in-sample loss of its own glasso fit.
pub fn gain_complete(data: &DataMatrix, seg: Segment, s: usize, cfg: &GlassoConfig) -> Result<f64> {
    check_split(data, seg, s)?;
    let n = data.n();
    let (left, right) = seg.split_at(s);
    let mut total = 0.0;
    for (part, sign) in [(seg, 1.0), (left, -1.0), (right, -1.0)] {
        let est = cov_complete(data, part)?;
        let fit = glasso_fit(&est, part.len(), n, cfg)?;
        total += sign * segment_loss(&fit, &est, part.len(), n)?;
    }
    Ok(total)
}

/// Gain with each of the three segments fitted and evaluated on its own
/// variable subset.
pub fn gain_missing_naive(
    data: &DataMatrix,
    seg: Segment,
    s: usize,
    k: usize,
    method: CovMethod,
    cfg: &GlassoConfig,
) -> Result<f64> {
    check_split(data, seg, s)?;
    let ev = SegmentEvaluator::new(data, seg, k, method, cfg)?;
    Ok(ev.evaluate(s)?.ok_or(Error::EmptySubset)?.naive)
}

/// Gain that evaluates the full-segment fit, restricted to each child's
/// variable subset, on the child's rows.
pub fn gain_missing_adjusted(
    data: &DataMatrix,
    seg: Segment,
    s: usize,
    k: usize,
    method: CovMethod,
    cfg: &GlassoConfig,
) -> Result<f64> {
    check_split(data, seg, s)?;
    let ev = SegmentEvaluator::new(data, seg, k, method, cfg)?;
    Ok(ev.evaluate(s)?.ok_or(Error::EmptySubset)?.adjusted)
}

/// Adjusted gain at every admissible split of `seg`. Splits whose children
/// have no usable variable are left out.
pub fn gain_curve(
    data: &DataMatrix,
    seg: Segment,
    k: usize,
    method: CovMethod,
    cfg: &GlassoConfig,
    margin: usize,
) -> Result<GainCurve> {
    Ok(gain_curves(data, seg, k, method, cfg, margin)?.0)
}

/// Adjusted and naive curves from one pass.
pub fn gain_curves(
    data: &DataMatrix,
    seg: Segment,
    k: usize,
    method: CovMethod,
    cfg: &GlassoConfig,
    margin: usize,
) -> Result<(GainCurve, GainCurve)> {
    data.check_segment(seg)?;
    let adj_kind = if data.has_missing_in(seg) { GainKind::Adjusted } else { GainKind::Complete };
    let splits: Vec<usize> = admissible_splits(seg, margin).collect();
    let empty = |flag| {
        (
            GainCurve::empty(seg, k, method, adj_kind, flag),
            GainCurve::empty(seg, k, method, GainKind::Naive, flag),
        )
    };
    if splits.is_empty() {
        return Ok(empty(false));
    }
    let ev = match SegmentEvaluator::new(data, seg, k, method, cfg) {
        Ok(ev) => ev,
        Err(Error::EmptySubset) => return Ok(empty(true)),
        Err(e) => return Err(e),
    };
    let (mut adj, mut naive) = empty(false);
    for g in ev.evaluate_many(&splits)?.into_iter().flatten() {
        adj.splits.push(g.split);
        adj.gains.push(g.adjusted);
        naive.splits.push(g.split);
        naive.gains.push(g.naive);
    }
    Ok((adj, naive))
}

fn check_split(data: &DataMatrix, seg: Segment, s: usize) -> Result<()> {
    data.check_segment(seg)?;
    if s <= seg.start || s >= seg.end {
        return Err(Error::InvalidInput(format!(
            "split {s} is not interior to ({}, {}]",
            seg.start, seg.end
        )));
    }
    Ok(())
}

/// Both gain estimates at one split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitGains {
    pub split: usize,
    pub naive: f64,
    pub adjusted: f64,
}

/// Precision matrix with its log-determinant and lazily inverted covariance
/// for sub-determinants.
pub(crate) struct PrecisionTerms {
    omega: SymMatrix,
    chol: Cholesky,
    logdet: f64,
    sigma: OnceLock<SymMatrix>,
}

pub(crate) type LogdetCache = HashMap<Vec<u64>, f64>;

impl PrecisionTerms {
    pub(crate) fn new(omega: SymMatrix) -> Result<Self> {
        let chol = Cholesky::new(&omega)?;
        let logdet = chol.logdet();
        Ok(Self {
            omega,
            chol,
            logdet,
            sigma: OnceLock::new(),
        })
    }

    fn dim(&self) -> usize {
        self.omega.dim()
    }

    /// `log|Ω_KK|` for the positions flagged in `keep` (`count` of them).
    fn sub_logdet(&self, keep: &[bool], count: usize) -> Result<f64> {
        let q = self.dim();
        if count == q {
            return Ok(self.logdet);
        }
        if count == 0 {
            return Ok(0.0);
        }
        let pick = |want: bool| -> Vec<usize> { (0..q).filter(|&a| keep[a] == want).collect() };
        if q - count <= count {
            let sigma = self.sigma.get_or_init(|| self.chol.inverse());
            let miss = pick(false);
            let mut buf = sigma.principal_submatrix(&miss).as_slice().to_vec();
            Ok(self.logdet + logdet_in_place(&mut buf, miss.len())?)
        } else {
            let obs = pick(true);
            let mut buf = self.omega.principal_submatrix(&obs).as_slice().to_vec();
            logdet_in_place(&mut buf, obs.len())
        }
    }

    /// `log|Ω_oo|` for row `i`, with `o` the observed variables among the
    /// evaluation positions `eval` of `vars`.
    fn row_logdet(
        &self,
        data: &DataMatrix,
        i: usize,
        vars: &VariableSubset,
        eval: &[usize],
        keep: &mut Vec<bool>,
        cache: &mut LogdetCache,
    ) -> Result<f64> {
        let q = self.dim();
        keep.clear();
        keep.resize(q, false);
        let mask = data.row_mask(i);
        let mut count = 0;
        for &a in eval {
            if mask[vars.indices[a]] {
                keep[a] = true;
                count += 1;
            }
        }
        if count == q || count == 0 {
            return self.sub_logdet(keep, count);
        }
        let mut key = vec![0u64; q.div_ceil(64)];
        for (a, &b) in keep.iter().enumerate() {
            if b {
                key[a / 64] |= 1 << (a % 64);
            }
        }
        if let Some(&v) = cache.get(&key) {
            return Ok(v);
        }
        let v = self.sub_logdet(keep, count)?;
        cache.insert(key, v);
        Ok(v)
    }

    pub(crate) fn rows_logdet(
        &self,
        data: &DataMatrix,
        rows: Range<usize>,
        vars: &VariableSubset,
        eval: &[usize],
        cache: &mut LogdetCache,
    ) -> Result<f64> {
        let mut keep = Vec::with_capacity(self.dim());
        let mut total = 0.0;
        for i in rows {
            total += self.row_logdet(data, i, vars, eval, &mut keep, cache)?;
        }
        Ok(total)
    }
}

/// Loss term `(1/n)·Σᵢ[−log|2πΩ_oᵢ| + quadᵢ]` of a precision matrix over
/// `vars`, evaluated on the variables at positions `eval` with the rows
/// summarized by `moments`. `logdet_sum` is the row log-determinant total.
pub(crate) fn observed_term(
    terms: &PrecisionTerms,
    means: &[f64],
    eval: &[usize],
    eval_subset: &VariableSubset,
    moments: &Moments,
    logdet_sum: f64,
    n_total: usize,
) -> f64 {
    let mu: Vec<f64> = eval.iter().map(|&a| means[a]).collect();
    let cross = moments.centered_cross(eval_subset, &mu);
    let q = eval.len();
    let mut quad = 0.0;
    let mut count = 0.0;
    for (a, &pa) in eval.iter().enumerate() {
        let row = terms.omega.row(pa);
        let c = &cross[a * q..(a + 1) * q];
        quad += eval.iter().zip(c).map(|(&pb, &v)| row[pb] * v).sum::<f64>();
        let j = eval_subset.indices[a];
        count += moments.joint_count(j, j);
    }
    (quad - logdet_sum - LOG_2PI * count) / n_total as f64
}

/// A fitted segment part: subset, estimate, fit and precision terms.
struct Part {
    subset: VariableSubset,
    est: CovarianceEstimate,
    fit: PrecisionFit,
    terms: PrecisionTerms,
}

/// Full-segment fit shared by every split of one segment.
pub struct SegmentEvaluator<'a> {
    data: &'a DataMatrix,
    seg: Segment,
    k: usize,
    method: CovMethod,
    cfg: GlassoConfig,
    shift: Vec<f64>,
    full: Part,
    full_loss: f64,
    /// Prefix sums of the per-row `log|Ω_oo|` of the full fit.
    full_prefix: Vec<f64>,
}

impl<'a> SegmentEvaluator<'a> {
    /// Fits `seg` with penalty from `cfg.lambda0`.
    pub fn new(data: &'a DataMatrix, seg: Segment, k: usize, method: CovMethod, cfg: &GlassoConfig) -> Result<Self> {
        data.check_segment(seg)?;
        if k < 2 {
            return Err(Error::InvalidInput(format!("min_obs must be >= 2, got {k}")));
        }
        let shift = column_centers(data);
        let moments = Moments::for_segment(data, &shift, seg);
        let subset = moments.subset(k)?;
        let est = moments.estimate(&subset, method)?;
        let fit = glasso_fit(&est, seg.len(), data.n(), cfg)?;
        let terms = PrecisionTerms::new(fit.omega.clone())?;
        let all_pos: Vec<usize> = (0..subset.len()).collect();
        let mut cache = LogdetCache::new();
        let mut keep = Vec::new();
        let mut full_prefix = Vec::with_capacity(seg.len() + 1);
        full_prefix.push(0.0);
        let mut acc = 0.0;
        for i in seg.rows() {
            acc += terms.row_logdet(data, i, &subset, &all_pos, &mut keep, &mut cache)?;
            full_prefix.push(acc);
        }
        let full_loss = observed_term(&terms, &est.means, &all_pos, &subset, &moments, acc, data.n());
        Ok(Self {
            data,
            seg,
            k,
            method,
            cfg: *cfg,
            shift,
            full: Part { subset, est, fit, terms },
            full_loss,
            full_prefix,
        })
    }

    pub fn segment(&self) -> Segment {
        self.seg
    }

    pub fn full_fit(&self) -> &PrecisionFit {
        &self.full.fit
    }

    /// True when some cell of the segment is missing.
    pub fn has_missing(&self) -> bool {
        self.data.has_missing_in(self.seg)
    }

    pub fn full_estimate(&self) -> &CovarianceEstimate {
        &self.full.est
    }

    /// Observed-part loss of the full segment under its own fit.
    pub fn full_loss(&self) -> f64 {
        self.full_loss
    }

    /// Gains at `s`, or `None` when a child has no usable variable.
    pub fn evaluate(&self, s: usize) -> Result<Option<SplitGains>> {
        check_split(self.data, self.seg, s)?;
        let left = Moments::from_rows(self.data, &self.shift, self.seg.start..s);
        let right = Moments::from_rows(self.data, &self.shift, s..self.seg.end);
        self.evaluate_with(s, &left, &right, &mut LogdetCache::new())
    }

    /// Gains at each of the sorted `splits`, in order. Work is split into
    /// fixed-size chunks, so the result does not depend on the thread pool.
    pub fn evaluate_many(&self, splits: &[usize]) -> Result<Vec<Option<SplitGains>>> {
        if splits.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput("splits must be strictly increasing".into()));
        }
        for &s in splits {
            check_split(self.data, self.seg, s)?;
        }
        let chunks: Vec<Result<Vec<Option<SplitGains>>>> = splits
            .par_chunks(CHUNK)
            .map(|chunk| {
                let first = chunk[0];
                let mut left = Moments::from_rows(self.data, &self.shift, self.seg.start..first);
                let mut right = Moments::from_rows(self.data, &self.shift, first..self.seg.end);
                let mut cache = LogdetCache::new();
                let mut at = first;
                let mut out = Vec::with_capacity(chunk.len());
                for &s in chunk {
                    while at < s {
                        left.add_row(self.data, at);
                        right.remove_row(self.data, at);
                        at += 1;
                    }
                    out.push(self.evaluate_with(s, &left, &right, &mut cache)?);
                }
                Ok(out)
            })
            .collect();
        let mut out = Vec::with_capacity(splits.len());
        for c in chunks {
            out.extend(c?);
        }
        Ok(out)
    }

    fn fit_part(&self, moments: &Moments, len: usize) -> Result<Option<(Part, Vec<usize>)>> {
        let subset = match moments.subset(self.k) {
            Ok(s) => s,
            Err(Error::EmptySubset) => return Ok(None),
            Err(e) => return Err(e),
        };
        let pos = self
            .full
            .subset
            .positions_of(&subset)
            .expect("a child's variable subset is contained in its parent's");
        let est = moments.estimate(&subset, self.method)?;
        let warm = self.full.fit.restricted(&pos);
        let fit = glasso_fit_warm(&est, len, self.data.n(), &self.cfg, Some(&warm))?;
        let terms = PrecisionTerms::new(fit.omega.clone())?;
        Ok(Some((Part { subset, est, fit, terms }, pos)))
    }

    fn evaluate_with(
        &self,
        s: usize,
        left: &Moments,
        right: &Moments,
        full_cache: &mut LogdetCache,
    ) -> Result<Option<SplitGains>> {
        let n = self.data.n();
        let (u, v) = (self.seg.start, self.seg.end);
        let Some((lp, lpos)) = self.fit_part(left, s - u)? else {
            return Ok(None);
        };
        let Some((rp, rpos)) = self.fit_part(right, v - s)? else {
            return Ok(None);
        };
        let mut own = 0.0;
        for (part, m, rows) in [(&lp, left, u..s), (&rp, right, s..v)] {
            let pos: Vec<usize> = (0..part.subset.len()).collect();
            let mut cache = LogdetCache::new();
            let ld = part.terms.rows_logdet(self.data, rows, &part.subset, &pos, &mut cache)?;
            own += observed_term(&part.terms, &part.est.means, &pos, &part.subset, m, ld, n);
        }
        let mut restricted = 0.0;
        let q = self.full.subset.len();
        for (pos, sub, m, rows) in [(&lpos, &lp.subset, left, u..s), (&rpos, &rp.subset, right, s..v)] {
            let ld = if pos.len() == q {
                self.full_prefix[rows.end - u] - self.full_prefix[rows.start - u]
            } else {
                self.full.terms.rows_logdet(self.data, rows, &self.full.subset, pos, full_cache)?
            };
            restricted += observed_term(&self.full.terms, &self.full.est.means, pos, sub, m, ld, n);
        }
        Ok(Some(SplitGains {
            split: s,
            naive: self.full_loss - own,
            adjusted: restricted - own,
        }))
    }
}
