//! Split search and segmentation drivers.
//!
//! The recursive drivers are generic over a [`SplitModel`], which supplies
//! a gain oracle per segment and decides whether a candidate split is kept.
//! [`CvSplitModel`](crate::selection::CvSplitModel) is the model used on
//! data; tests drive the same recursion with synthetic curves.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::{cov_complete, CovMethod};
use crate::data::{DataMatrix, Segment};
use crate::error::{Error, Result};
use crate::gain::{admissible_splits, GainCurve, SegmentEvaluator};
use crate::glasso::{glasso_fit, segment_loss, GlassoConfig};
use crate::selection::{CvSplitModel, SelectionConfig};

/// Largest `n` accepted by [`dp_partition`] on complete data.
pub const DP_CAP_COMPLETE: usize = 500;
/// Largest `n` accepted by [`dp_partition`] when values are missing.
pub const DP_CAP_MISSING: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    FullGrid,
    Optimistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Segmentation {
    Bs,
    Obs,
    SeedBs,
    Dp,
}

impl std::str::FromStr for Segmentation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bs" => Ok(Segmentation::Bs),
            "obs" => Ok(Segmentation::Obs),
            "seedbs" => Ok(Segmentation::SeedBs),
            "dp" => Ok(Segmentation::Dp),
            other => Err(Error::InvalidInput(format!("unknown search '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Minimal segment length as a fraction of `n`.
    pub delta: f64,
    /// Per-segment penalty, used by [`dp_partition`] only.
    pub gamma: f64,
    pub strategy: Strategy,
    pub segmentation: Segmentation,
    pub seed_decay: f64,
    pub rng_seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            delta: 0.1,
            gamma: 0.0,
            strategy: Strategy::FullGrid,
            segmentation: Segmentation::Bs,
            seed_decay: std::f64::consts::FRAC_1_SQRT_2,
            rng_seed: 0,
        }
    }
}

impl SearchConfig {
    pub fn with_segmentation(self, segmentation: Segmentation) -> Self {
        Self { segmentation, ..self }
    }

    /// Minimal segment length `⌈δn⌉`.
    pub fn margin(&self, n: usize) -> Result<usize> {
        if !(self.delta > 0.0 && self.delta < 0.5) {
            return Err(Error::InvalidInput(format!("delta must be in (0, 0.5), got {}", self.delta)));
        }
        if !(self.gamma >= 0.0) {
            return Err(Error::InvalidInput(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        let dn = self.delta * n as f64;
        if dn < 1.0 - 1e-9 {
            return Err(Error::InvalidInput(format!(
                "delta * n must be at least 1, got {} * {n}",
                self.delta
            )));
        }
        Ok((dn - 1e-9).ceil().max(1.0) as usize)
    }

    /// Whether candidate splits come from optimistic search.
    pub fn optimistic(&self) -> bool {
        self.segmentation == Segmentation::Obs || self.strategy == Strategy::Optimistic
    }
}

/// Gain evaluation for one segment.
pub trait GainOracle {
    /// Gain at split `s`, or `None` when the split cannot be evaluated.
    fn gain_at(&self, s: usize) -> Result<Option<f64>>;

    /// Gains at the sorted `splits`, leaving out splits without a value.
    fn curve(&self, splits: &[usize]) -> Result<GainCurve>;
}

/// Penalty selection outcome recorded for a segment.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NodeFit {
    pub best_lambda0: Option<f64>,
    pub cv_loss: Option<f64>,
}

/// Acceptance verdict for a candidate split.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub accepted: bool,
    pub cv_loss_children: Option<[f64; 2]>,
}

impl Decision {
    pub fn rejected() -> Self {
        Self {
            accepted: false,
            cv_loss_children: None,
        }
    }
}

/// Per-segment gain oracle and split acceptance used by the segmentation
/// drivers.
pub trait SplitModel {
    type Oracle<'a>: GainOracle
    where
        Self: 'a;

    /// Per-segment setup; `None` marks the segment as a leaf.
    fn prepare(&mut self, seg: Segment) -> Result<Option<NodeFit>>;

    /// Gain oracle of a prepared segment, or `None` when it has no usable
    /// variable.
    fn oracle(&self, seg: Segment) -> Result<Option<Self::Oracle<'_>>>;

    fn decide(&mut self, seg: Segment, split: usize) -> Result<Decision>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub segment: Segment,
    pub candidate: Option<usize>,
    pub gain: Option<f64>,
    pub accepted: bool,
    pub best_lambda0: Option<f64>,
    pub cv_loss_parent: Option<f64>,
    pub cv_loss_children: Option<[f64; 2]>,
    /// Full gain curve, recorded when the candidate came from a grid scan.
    pub gain_curve: Option<GainCurve>,
    pub evaluations: usize,
    pub children: Vec<TreeNode>,
}

impl TreeNode {
    fn leaf(segment: Segment) -> Self {
        Self {
            segment,
            candidate: None,
            gain: None,
            accepted: false,
            best_lambda0: None,
            cv_loss_parent: None,
            cv_loss_children: None,
            gain_curve: None,
            evaluations: 0,
            children: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationResult {
    pub n: usize,
    /// Sorted; each is the last row of a left segment, so `s` splits
    /// `(u, v]` into `(u, s]` and `(s, v]`.
    pub change_points: Vec<usize>,
    /// BS/OBS: one root with nested children. SeedBS: one node per seeded
    /// interval. DP: empty.
    pub tree: Vec<TreeNode>,
    pub segmentation: Segmentation,
    pub method: Option<CovMethod>,
    /// Minimized objective of [`dp_partition`].
    pub objective: Option<f64>,
}

impl SegmentationResult {
    /// True when no segment produced a candidate split.
    pub fn all_unsplittable(&self) -> bool {
        fn any_candidate(nodes: &[TreeNode]) -> bool {
            nodes
                .iter()
                .any(|t| t.candidate.is_some() || any_candidate(&t.children))
        }
        self.segmentation != Segmentation::Dp && !any_candidate(&self.tree)
    }
}

/// Largest gain; ties go to the smallest split.
pub fn best_split_grid(curve: &GainCurve) -> Result<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (&s, &g) in curve.splits.iter().zip(&curve.gains) {
        if best.is_none_or(|(_, bg)| g > bg) {
            best = Some((s, g));
        }
    }
    best.ok_or(Error::EmptyCurve)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimisticOutcome {
    pub split: usize,
    pub gain: f64,
    pub evaluations: usize,
}

/// Optimistic search over the admissible splits of `seg`.
///
/// Keeps a bracket `[l, r]` with an evaluated interior point `m` and probes
/// the midpoint `w` of the longer side. If `w` is at least as good as `m` the
/// bracket shrinks to the side of `w`, otherwise the far side of `w` is
/// discarded. Brackets of fewer than five points are scanned exhaustively.
/// A unimodal curve yields its maximum with `O(log len)` evaluations.
/// Returns the best evaluated point of the final bracket (or of the whole
/// run when no bracket point has a value); `None` when nothing evaluated.
pub fn best_split_optimistic<O: GainOracle + ?Sized>(
    oracle: &O,
    seg: Segment,
    margin: usize,
) -> Result<Option<OptimisticOutcome>> {
    let splits = admissible_splits(seg, margin);
    if splits.len() < 5 {
        return Err(Error::InvalidInput(format!(
            "optimistic search needs a segment of length >= 2 * margin + 4, got {} with margin {margin}",
            seg.len()
        )));
    }
    let mut memo: HashMap<usize, Option<f64>> = HashMap::new();
    let mut eval = |s: usize| -> Result<Option<f64>> {
        if let Some(&v) = memo.get(&s) {
            return Ok(v);
        }
        let v = oracle.gain_at(s)?;
        memo.insert(s, v);
        Ok(v)
    };
    let key = |v: Option<f64>| v.unwrap_or(f64::NEG_INFINITY);
    let (mut l, mut r) = (splits.start, splits.end - 1);
    let mut m = l + (r - l) / 2;
    let mut gm = key(eval(m)?);
    while r - l + 1 >= 5 {
        if r - m > m - l {
            let w = m + (r - m).div_ceil(2);
            let gw = key(eval(w)?);
            if gw >= gm {
                l = m;
                m = w;
                gm = gw;
            } else {
                r = w;
            }
        } else {
            let w = m - (m - l).div_ceil(2);
            let gw = key(eval(w)?);
            if gw >= gm {
                r = m;
                m = w;
                gm = gw;
            } else {
                l = w;
            }
        }
    }
    let mut best: Option<(usize, f64)> = None;
    for s in l..=r {
        if let Some(g) = eval(s)? {
            if best.is_none_or(|(_, bg)| g > bg) {
                best = Some((s, g));
            }
        }
    }
    if best.is_none() {
        let mut seen: Vec<(usize, f64)> = memo.iter().filter_map(|(&s, &g)| g.map(|g| (s, g))).collect();
        seen.sort_by_key(|&(s, _)| s);
        for (s, g) in seen {
            if best.is_none_or(|(_, bg)| g > bg) {
                best = Some((s, g));
            }
        }
    }
    Ok(best.map(|(split, gain)| OptimisticOutcome {
        split,
        gain,
        evaluations: memo.len(),
    }))
}

/// Binary segmentation driven by `model` over `(0, n]`: every segment of
/// length at least `2·margin` gets a candidate split (grid scan, or
/// optimistic search when `optimistic`), and the recursion descends into
/// both children of each accepted split, depth first.
pub fn segment_recursively<M: SplitModel>(
    model: &mut M,
    n: usize,
    margin: usize,
    optimistic: bool,
) -> Result<(Vec<usize>, TreeNode)> {
    let mut cps = Vec::new();
    let root = Segment::new(0, n)?;
    let tree = recurse(model, root, margin, optimistic, &mut cps)?;
    cps.sort_unstable();
    Ok((cps, tree))
}

fn recurse<M: SplitModel>(
    model: &mut M,
    seg: Segment,
    margin: usize,
    optimistic: bool,
    cps: &mut Vec<usize>,
) -> Result<TreeNode> {
    let mut node = TreeNode::leaf(seg);
    let splits: Vec<usize> = admissible_splits(seg, margin).collect();
    if splits.is_empty() {
        return Ok(node);
    }
    let Some(fit) = model.prepare(seg)? else {
        return Ok(node);
    };
    node.best_lambda0 = fit.best_lambda0;
    node.cv_loss_parent = fit.cv_loss;
    let best = {
        let Some(oracle) = model.oracle(seg)? else {
            return Ok(node);
        };
        if optimistic && splits.len() >= 5 {
            best_split_optimistic(&oracle, seg, margin)?.map(|o| {
                node.evaluations = o.evaluations;
                (o.split, o.gain)
            })
        } else {
            let curve = oracle.curve(&splits)?;
            node.evaluations = splits.len();
            let best = best_split_grid(&curve).ok();
            node.gain_curve = Some(curve);
            best
        }
    };
    let Some((s, g)) = best else {
        return Ok(node);
    };
    node.candidate = Some(s);
    node.gain = Some(g);
    let decision = model.decide(seg, s)?;
    node.accepted = decision.accepted;
    node.cv_loss_children = decision.cv_loss_children;
    if decision.accepted {
        cps.push(s);
        let (left, right) = seg.split_at(s);
        node.children.push(recurse(model, left, margin, optimistic, cps)?);
        node.children.push(recurse(model, right, margin, optimistic, cps)?);
    }
    Ok(node)
}

/// Binary segmentation (or its optimistic variant) with cross-validated
/// penalties and acceptance.
pub fn binary_segmentation(data: &DataMatrix, search: &SearchConfig, sel: &SelectionConfig) -> Result<SegmentationResult> {
    let n = data.n();
    let margin = search.margin(n)?;
    let mut model = CvSplitModel::new(data, sel.clone());
    let (change_points, tree) = segment_recursively(&mut model, n, margin, search.optimistic())?;
    Ok(SegmentationResult {
        n,
        change_points,
        tree: vec![tree],
        segmentation: if search.optimistic() { Segmentation::Obs } else { Segmentation::Bs },
        method: Some(sel.method),
        objective: None,
    })
}

/// Seeded intervals: layer `k = 1, 2, …` has length `lₖ = n·decayᵏ⁻¹`
/// and `2⌈n/lₖ⌉ − 1` intervals evenly shifted from `(0, lₖ]` to
/// `(n − lₖ, n]`, with floor-rounded endpoints. Layers stop before
/// `lₖ < min_len`; repeated intervals are dropped.
pub fn seeded_intervals(n: usize, decay: f64, min_len: usize) -> Result<Vec<Segment>> {
    let lo = std::f64::consts::FRAC_1_SQRT_2;
    if !(decay >= lo - 1e-12 && decay < 1.0) {
        return Err(Error::InvalidInput(format!("decay must be in [1/sqrt(2), 1), got {decay}")));
    }
    if min_len < 2 {
        return Err(Error::InvalidInput(format!("min_len must be >= 2, got {min_len}")));
    }
    const EPS: f64 = 1e-9;
    let mut out = Vec::new();
    let mut seen = std::collections::HashSet::new();
    let nf = n as f64;
    let mut len = nf;
    while len + EPS >= min_len as f64 {
        let count = 2 * (nf / len - EPS).ceil() as usize - 1;
        let shift = if count > 1 { (nf - len) / (count - 1) as f64 } else { 0.0 };
        for i in 0..count {
            let a = (i as f64 * shift + EPS).floor() as usize;
            let b = ((i as f64 * shift + len + EPS).floor() as usize).min(n);
            let seg = Segment::new(a, b)?;
            if seen.insert(seg) {
                out.push(seg);
            }
        }
        len *= decay;
    }
    Ok(out)
}

/// Seeded binary segmentation driven by `model`: one grid-scan candidate per
/// seeded interval, ranked by gain; a candidate closer than `margin` to an
/// accepted change point is skipped, the others are kept when the model
/// accepts them on their interval.
pub fn seeded_with<M: SplitModel>(
    model: &mut M,
    n: usize,
    margin: usize,
    decay: f64,
) -> Result<(Vec<usize>, Vec<TreeNode>)> {
    let intervals = seeded_intervals(n, decay, 2 * margin)?;
    let mut nodes = Vec::with_capacity(intervals.len());
    for seg in intervals {
        let mut node = TreeNode::leaf(seg);
        if let Some(fit) = model.prepare(seg)? {
            node.best_lambda0 = fit.best_lambda0;
            node.cv_loss_parent = fit.cv_loss;
            if let Some(oracle) = model.oracle(seg)? {
                let splits: Vec<usize> = admissible_splits(seg, margin).collect();
                let curve = oracle.curve(&splits)?;
                node.evaluations = splits.len();
                if let Ok((s, g)) = best_split_grid(&curve) {
                    node.candidate = Some(s);
                    node.gain = Some(g);
                }
                node.gain_curve = Some(curve);
            }
        }
        nodes.push(node);
    }
    let mut order: Vec<usize> = (0..nodes.len()).filter(|&i| nodes[i].candidate.is_some()).collect();
    order.sort_by(|&a, &b| nodes[b].gain.unwrap().total_cmp(&nodes[a].gain.unwrap()));
    let mut cps: Vec<usize> = Vec::new();
    for i in order {
        let s = nodes[i].candidate.unwrap();
        if cps.iter().any(|&c| c.abs_diff(s) < margin) {
            continue;
        }
        let d = model.decide(nodes[i].segment, s)?;
        nodes[i].accepted = d.accepted;
        nodes[i].cv_loss_children = d.cv_loss_children;
        if d.accepted {
            cps.push(s);
        }
    }
    cps.sort_unstable();
    Ok((cps, nodes))
}

/// Seeded binary segmentation with cross-validated penalties and
/// acceptance.
pub fn seeded_bs(data: &DataMatrix, search: &SearchConfig, sel: &SelectionConfig) -> Result<SegmentationResult> {
    let n = data.n();
    let margin = search.margin(n)?;
    let mut model = CvSplitModel::new(data, sel.clone());
    let (change_points, tree) = seeded_with(&mut model, n, margin, search.seed_decay)?;
    Ok(SegmentationResult {
        n,
        change_points,
        tree,
        segmentation: Segmentation::SeedBs,
        method: Some(sel.method),
        objective: None,
    })
}

/// Exact minimizer of `Σⱼ loss(segmentⱼ) + γ·(#segments)` over partitions
/// of `(0, n]` into segments of length at least `margin`. `loss` returns
/// `None` for segments that cannot be fitted. Ties go to the earliest
/// last boundary. Returns the change points and the minimum.
pub fn optimal_partition<F>(n: usize, margin: usize, gamma: f64, loss: F) -> Result<(Vec<usize>, f64)>
where
    F: Fn(Segment) -> Result<Option<f64>> + Sync,
{
    let m = margin.max(1);
    if n < m {
        return Err(Error::InvalidInput(format!("n = {n} is shorter than the margin {m}")));
    }
    // costs[b] holds loss((a, b]) for a = 0..=b - m.
    let costs: Vec<Vec<Option<f64>>> = (0..=n)
        .into_par_iter()
        .map(|b| {
            if b < m {
                return Ok(Vec::new());
            }
            (0..=b - m)
                .map(|a| {
                    if a != 0 && a < m {
                        Ok(None)
                    } else {
                        loss(Segment { start: a, end: b })
                    }
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let mut best = vec![f64::INFINITY; n + 1];
    let mut prev = vec![usize::MAX; n + 1];
    best[0] = 0.0;
    for b in m..=n {
        for a in 0..=b - m {
            if let Some(c) = costs[b][a] {
                let v = best[a] + c + gamma;
                if best[a].is_finite() && v < best[b] {
                    best[b] = v;
                    prev[b] = a;
                }
            }
        }
    }
    if !best[n].is_finite() {
        return Err(Error::InvalidInput("no admissible partition".into()));
    }
    let mut cps = Vec::new();
    let mut b = n;
    while b > 0 {
        let a = prev[b];
        if a > 0 {
            cps.push(a);
        }
        b = a;
    }
    cps.reverse();
    Ok((cps, best[n]))
}

/// Penalized partition with a fixed `λ₀`. Complete data use the in-sample
/// glasso loss of each segment; data with missing values use the
/// observed-part loss of the `method` fit on each segment.
pub fn dp_partition(
    data: &DataMatrix,
    search: &SearchConfig,
    k: usize,
    method: CovMethod,
    glasso: &GlassoConfig,
) -> Result<SegmentationResult> {
    let n = data.n();
    let complete = data.missing_count() == 0;
    let cap = if complete { DP_CAP_COMPLETE } else { DP_CAP_MISSING };
    if n > cap {
        return Err(Error::CapExceeded { n, cap });
    }
    let margin = search.margin(n)?;
    let loss = |seg: Segment| -> Result<Option<f64>> {
        if complete {
            let est = cov_complete(data, seg)?;
            let fit = glasso_fit(&est, seg.len(), n, glasso)?;
            Ok(Some(segment_loss(&fit, &est, seg.len(), n)?))
        } else {
            match SegmentEvaluator::new(data, seg, k, method, glasso) {
                Ok(ev) => Ok(Some(ev.full_loss())),
                Err(Error::EmptySubset) => Ok(None),
                Err(e) => Err(e),
            }
        }
    };
    let (change_points, objective) = optimal_partition(n, margin, search.gamma, loss)?;
    Ok(SegmentationResult {
        n,
        change_points,
        tree: Vec::new(),
        segmentation: Segmentation::Dp,
        method: Some(if complete { CovMethod::Complete } else { method }),
        objective: Some(objective),
    })
}
