//! Penalty selection by cross-validation and the split acceptance rule.
//!
//! Fold `f` of a segment `(u, v]` holds out rows `u + f, u + f + F, …`.
//! Each fold fits the training rows along the whole `λ₀` grid (largest
//! first, warm-started) and scores the held-out rows with the observed-part
//! loss under the training means and precision. A split is kept when the
//! parent's best cross-validated loss exceeds the children's sum.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::{column_centers, CovMethod, Moments};
use crate::data::{DataMatrix, Segment};
use crate::error::{Error, Result};
use crate::gain::{admissible_splits, observed_term, GainCurve, LogdetCache, PrecisionTerms, SegmentEvaluator};
use crate::glasso::{glasso_fit_warm, GlassoConfig, PrecisionFit};
use crate::search::{best_split_grid, best_split_optimistic, Decision, GainOracle, NodeFit, SearchConfig, SplitModel};

/// `len` log-spaced values from `lo` to `hi`, ascending.
pub fn log_grid(lo: f64, hi: f64, len: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi >= lo && hi.is_finite()) || len == 0 || (len == 1 && hi != lo) {
        return Err(Error::InvalidInput(format!(
            "log grid needs 0 < lo <= hi and len >= 1, got lo = {lo}, hi = {hi}, len = {len}"
        )));
    }
    if len == 1 {
        return Ok(vec![lo]);
    }
    let (a, b) = (lo.ln(), hi.ln());
    Ok((0..len)
        .map(|i| {
            if i == len - 1 {
                hi
            } else {
                (a + (b - a) * i as f64 / (len - 1) as f64).exp()
            }
        })
        .collect())
}

/// Ten log-spaced values from 0.01 to 2.
pub fn default_lambda_grid() -> Vec<f64> {
    log_grid(0.01, 2.0, 10).expect("constant grid bounds are valid")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    /// Minimum observed count for a variable to enter a segment's model.
    pub k: usize,
    pub method: CovMethod,
    pub lambda_grid: Vec<f64>,
    pub folds: usize,
    pub glasso: GlassoConfig,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            k: 5,
            method: CovMethod::Lw,
            lambda_grid: default_lambda_grid(),
            folds: 10,
            glasso: GlassoConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub lambda_grid: Vec<f64>,
    /// Summed held-out loss per grid value; infinite when a fold failed.
    pub cv_losses: Vec<f64>,
    pub best_lambda0: f64,
    pub best_loss: f64,
}

/// Cross-validated loss of each `λ₀` in `lambda_grid` on `seg`.
pub fn cv_lambda(
    data: &DataMatrix,
    seg: Segment,
    k: usize,
    method: CovMethod,
    lambda_grid: &[f64],
    folds: usize,
    glasso: &GlassoConfig,
) -> Result<CvResult> {
    data.check_segment(seg)?;
    if folds < 2 || seg.len() < folds {
        return Err(Error::InvalidInput(format!(
            "cross-validation needs 2 <= folds <= segment length, got {folds} folds for {} rows",
            seg.len()
        )));
    }
    if k < 2 {
        return Err(Error::InvalidInput(format!("min_obs must be >= 2, got {k}")));
    }
    check_grid(lambda_grid)?;
    // Largest penalty first, so each fit warm-starts from a sparser one.
    let mut order: Vec<usize> = (0..lambda_grid.len()).collect();
    order.sort_by(|&a, &b| lambda_grid[b].total_cmp(&lambda_grid[a]));

    let shift = column_centers(data);
    let full = Moments::for_segment(data, &shift, seg);
    let per_fold: Vec<Vec<f64>> = (0..folds)
        .into_par_iter()
        .map(|f| fold_losses(data, seg, &full, &shift, f, folds, k, method, lambda_grid, &order, glasso))
        .collect();
    let mut cv_losses = vec![0.0; lambda_grid.len()];
    for fl in per_fold {
        for (c, l) in cv_losses.iter_mut().zip(fl) {
            *c += l;
        }
    }
    // Ties go to the larger penalty.
    let mut best = order[0];
    for &i in &order[1..] {
        if cv_losses[i] < cv_losses[best] {
            best = i;
        }
    }
    Ok(CvResult {
        lambda_grid: lambda_grid.to_vec(),
        best_lambda0: lambda_grid[best],
        best_loss: cv_losses[best],
        cv_losses,
    })
}

/// [`cv_lambda`] with the settings of `sel`.
pub fn cv_with(data: &DataMatrix, seg: Segment, sel: &SelectionConfig) -> Result<CvResult> {
    cv_lambda(data, seg, sel.k, sel.method, &sel.lambda_grid, sel.folds, &sel.glasso)
}

fn check_grid(grid: &[f64]) -> Result<()> {
    let sorted = grid.windows(2).all(|w| w[0] < w[1]) || grid.windows(2).all(|w| w[0] > w[1]);
    if grid.is_empty() || !sorted || grid.iter().any(|&l| !(l >= 0.0 && l.is_finite())) {
        return Err(Error::InvalidInput(format!(
            "lambda grid must be nonempty, strictly monotone and nonnegative, got {grid:?}"
        )));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn fold_losses(
    data: &DataMatrix,
    seg: Segment,
    full: &Moments,
    shift: &[f64],
    f: usize,
    folds: usize,
    k: usize,
    method: CovMethod,
    grid: &[f64],
    order: &[usize],
    glasso: &GlassoConfig,
) -> Vec<f64> {
    let mut losses = vec![f64::INFINITY; grid.len()];
    let test_rows: Vec<usize> = (seg.start + f..seg.end).step_by(folds).collect();
    let mut train = full.clone();
    for &i in &test_rows {
        train.remove_row(data, i);
    }
    let test = Moments::from_rows(data, shift, test_rows.iter().copied());
    // A variable unseen (or seen fewer than k times) in training is left out
    // of this fold's model and of its held-out evaluation.
    let Ok(subset) = train.subset(k) else {
        return losses;
    };
    let Ok(est) = train.estimate(&subset, method) else {
        return losses;
    };
    let pos: Vec<usize> = (0..subset.len()).collect();
    let n = data.n();
    let mut warm: Option<PrecisionFit> = None;
    for &li in order {
        let cfg = glasso.with_lambda0(grid[li]);
        let Ok(fit) = glasso_fit_warm(&est, train.rows(), n, &cfg, warm.as_ref()) else {
            continue;
        };
        if let Ok(terms) = PrecisionTerms::new(fit.omega.clone()) {
            let mut cache = LogdetCache::new();
            let mut ld = 0.0;
            let mut ok = true;
            for &i in &test_rows {
                match terms.rows_logdet(data, i..i + 1, &subset, &pos, &mut cache) {
                    Ok(v) => ld += v,
                    Err(_) => ok = false,
                }
            }
            if ok {
                losses[li] = observed_term(&terms, &est.means, &pos, &subset, &test, ld, n);
            }
        }
        warm = Some(fit);
    }
    losses
}

/// True when the parent's loss strictly exceeds the children's sum. Any
/// non-finite loss rejects.
pub fn accept_split(parent: &CvResult, left: &CvResult, right: &CvResult) -> bool {
    let (p, l, r) = (parent.best_loss, left.best_loss, right.best_loss);
    p.is_finite() && l.is_finite() && r.is_finite() && p - l - r > 0.0
}

/// Gain oracle over one segment, using the adjusted gain.
pub struct EvaluatorOracle<'a>(pub SegmentEvaluator<'a>);

impl GainOracle for EvaluatorOracle<'_> {
    fn gain_at(&self, s: usize) -> Result<Option<f64>> {
        Ok(self.0.evaluate(s)?.map(|g| g.adjusted))
    }

    fn curve(&self, splits: &[usize]) -> Result<GainCurve> {
        let ev = &self.0;
        let seg = ev.segment();
        let est = ev.full_estimate();
        let kind = if ev.has_missing() {
            crate::gain::GainKind::Adjusted
        } else {
            crate::gain::GainKind::Complete
        };
        let mut curve = GainCurve::empty(seg, est.subset.k, est.method, kind, false);
        for g in ev.evaluate_many(splits)?.into_iter().flatten() {
            curve.splits.push(g.split);
            curve.gains.push(g.adjusted);
        }
        Ok(curve)
    }
}

/// Split model that selects `λ₀` by cross-validation per segment and
/// accepts splits by [`accept_split`]. Cross-validation results are cached
/// per segment, so children evaluated for an acceptance decision are reused
/// when the recursion descends into them.
pub struct CvSplitModel<'d> {
    data: &'d DataMatrix,
    sel: SelectionConfig,
    cache: HashMap<Segment, CvResult>,
}

impl<'d> CvSplitModel<'d> {
    pub fn new(data: &'d DataMatrix, sel: SelectionConfig) -> Self {
        Self {
            data,
            sel,
            cache: HashMap::new(),
        }
    }

    /// Cross-validation of `seg`, or `None` when it is shorter than the
    /// fold count.
    pub fn cv(&mut self, seg: Segment) -> Result<Option<&CvResult>> {
        if seg.len() < self.sel.folds {
            return Ok(None);
        }
        if !self.cache.contains_key(&seg) {
            let cv = cv_with(self.data, seg, &self.sel)?;
            self.cache.insert(seg, cv);
        }
        Ok(self.cache.get(&seg))
    }
}

impl SplitModel for CvSplitModel<'_> {
    type Oracle<'a>
        = EvaluatorOracle<'a>
    where
        Self: 'a;

    fn prepare(&mut self, seg: Segment) -> Result<Option<NodeFit>> {
        Ok(self.cv(seg)?.map(|cv| NodeFit {
            best_lambda0: Some(cv.best_lambda0),
            cv_loss: Some(cv.best_loss),
        }))
    }

    fn oracle(&self, seg: Segment) -> Result<Option<EvaluatorOracle<'_>>> {
        let Some(cv) = self.cache.get(&seg) else {
            return Ok(None);
        };
        let cfg = self.sel.glasso.with_lambda0(cv.best_lambda0);
        match SegmentEvaluator::new(self.data, seg, self.sel.k, self.sel.method, &cfg) {
            Ok(ev) => Ok(Some(EvaluatorOracle(ev))),
            Err(Error::EmptySubset) => Ok(None),
            Err(e) => Err(e),
        }
    }

    fn decide(&mut self, seg: Segment, split: usize) -> Result<Decision> {
        let (left, right) = seg.split_at(split);
        let Some(parent) = self.cv(seg)?.cloned() else {
            return Ok(Decision::rejected());
        };
        let Some(l) = self.cv(left)?.cloned() else {
            return Ok(Decision::rejected());
        };
        let Some(r) = self.cv(right)?.cloned() else {
            return Ok(Decision::rejected());
        };
        Ok(Decision {
            accepted: accept_split(&parent, &l, &r),
            cv_loss_children: Some([l.best_loss, r.best_loss]),
        })
    }
}

/// Outcome of [`select_and_split`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitDecision {
    pub candidate: Option<usize>,
    pub gain: Option<f64>,
    pub accepted: bool,
    pub parent: Option<CvResult>,
    pub children: Option<(CvResult, CvResult)>,
}

/// One step of the segmentation: select `λ₀` on `seg`, find the best split
/// with the configured strategy and decide whether to keep it.
pub fn select_and_split(
    data: &DataMatrix,
    seg: Segment,
    sel: &SelectionConfig,
    search: &SearchConfig,
) -> Result<SplitDecision> {
    data.check_segment(seg)?;
    let margin = search.margin(data.n())?;
    let mut model = CvSplitModel::new(data, sel.clone());
    let mut out = SplitDecision {
        candidate: None,
        gain: None,
        accepted: false,
        parent: None,
        children: None,
    };
    let splits: Vec<usize> = admissible_splits(seg, margin).collect();
    if splits.is_empty() || model.prepare(seg)?.is_none() {
        return Ok(out);
    }
    out.parent = model.cache.get(&seg).cloned();
    let best = {
        let Some(oracle) = model.oracle(seg)? else {
            return Ok(out);
        };
        if search.optimistic() && splits.len() >= 5 {
            best_split_optimistic(&oracle, seg, margin)?.map(|o| (o.split, o.gain))
        } else {
            match best_split_grid(&oracle.curve(&splits)?) {
                Ok(b) => Some(b),
                Err(Error::EmptyCurve) => None,
                Err(e) => return Err(e),
            }
        }
    };
    let Some((s, g)) = best else {
        return Ok(out);
    };
    out.candidate = Some(s);
    out.gain = Some(g);
    out.accepted = model.decide(seg, s)?.accepted;
    let (l, r) = seg.split_at(s);
    if let (Some(a), Some(b)) = (model.cache.get(&l), model.cache.get(&r)) {
        out.children = Some((a.clone(), b.clone()));
    }
    Ok(out)
}
