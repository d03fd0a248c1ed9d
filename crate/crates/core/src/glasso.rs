//! L1-penalized Gaussian precision estimation (graphical lasso) by block
//! coordinate descent over columns, with the segment-length scaled penalty
//! and the scaled in-sample loss used for gains.

use serde::{Deserialize, Serialize};

use crate::covariance::CovarianceEstimate;
use crate::error::{Error, Result};
use crate::matrix::{logdet_psd, trace_product, SymMatrix};

/// Off-diagonal entries at or below this magnitude count as zero.
pub const ZERO_THRESHOLD: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlassoConfig {
    pub lambda0: f64,
    pub tol: f64,
    pub max_sweeps: usize,
    pub penalize_diagonal: bool,
}

impl Default for GlassoConfig {
    fn default() -> Self {
        Self {
            lambda0: 0.1,
            tol: 1e-4,
            max_sweeps: 200,
            penalize_diagonal: false,
        }
    }
}

impl GlassoConfig {
    pub fn with_lambda0(self, lambda0: f64) -> Self {
        Self { lambda0, ..self }
    }

    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || self.max_sweeps == 0 || !(self.lambda0 >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "glasso config needs tol > 0, max_sweeps >= 1, lambda0 >= 0; got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Penalty actually applied to a segment of `seg_len` rows out of `n_total`.
pub fn scaled_lambda(lambda0: f64, seg_len: usize, n_total: usize) -> f64 {
    (n_total as f64 / seg_len as f64).sqrt() * lambda0
}

#[derive(Debug, Clone)]
pub struct PrecisionFit {
    pub omega: SymMatrix,
    /// Working covariance `W ≈ Ω⁻¹` maintained by the solver.
    pub sigma_hat: SymMatrix,
    pub lambda_used: f64,
    pub sweeps: usize,
    pub converged: bool,
}

impl PrecisionFit {
    /// Number of off-diagonal pairs with `|Ωᵢⱼ| > ZERO_THRESHOLD`.
    pub fn edge_count(&self) -> usize {
        let d = self.omega.dim();
        let mut c = 0;
        for i in 0..d {
            for j in (i + 1)..d {
                if self.omega.get(i, j).abs() > ZERO_THRESHOLD {
                    c += 1;
                }
            }
        }
        c
    }

    /// Principal submatrices at `positions`, for warm-starting a fit on a
    /// subset of the variables.
    pub fn restricted(&self, positions: &[usize]) -> PrecisionFit {
        PrecisionFit {
            omega: self.omega.principal_submatrix(positions),
            sigma_hat: self.sigma_hat.principal_submatrix(positions),
            lambda_used: self.lambda_used,
            sweeps: self.sweeps,
            converged: self.converged,
        }
    }
}

/// Fits the glasso on `est` with penalty `√(n_total / seg_len) · λ₀`.
pub fn glasso_fit(
    est: &CovarianceEstimate,
    seg_len: usize,
    n_total: usize,
    cfg: &GlassoConfig,
) -> Result<PrecisionFit> {
    glasso_fit_warm(est, seg_len, n_total, cfg, None)
}

/// As [`glasso_fit`], starting from a previous fit of the same dimension.
pub fn glasso_fit_warm(
    est: &CovarianceEstimate,
    seg_len: usize,
    n_total: usize,
    cfg: &GlassoConfig,
    warm: Option<&PrecisionFit>,
) -> Result<PrecisionFit> {
    if seg_len == 0 || n_total < seg_len {
        return Err(Error::InvalidInput(format!(
            "need 1 <= seg_len <= n_total, got {seg_len} / {n_total}"
        )));
    }
    let lambda = scaled_lambda(cfg.lambda0, seg_len, n_total);
    glasso_solve(&est.matrix, lambda, cfg, warm)
}

/// Minimizes `Tr(ΩS) − log|Ω| + λ Σ_{i≠j} |Ωᵢⱼ|` (plus the diagonal when
/// `cfg.penalize_diagonal`) over positive definite `Ω`.
///
/// Returns the last iterate with `converged = false` when the sweep budget
/// runs out.
pub fn glasso_solve(
    s: &SymMatrix,
    lambda: f64,
    cfg: &GlassoConfig,
    warm: Option<&PrecisionFit>,
) -> Result<PrecisionFit> {
    cfg.validate()?;
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidInput(format!("penalty must be finite and >= 0, got {lambda}")));
    }
    let p = s.dim();
    if p == 0 {
        return Err(Error::EmptySubset);
    }
    let sd = s.as_slice();
    if (0..p).any(|i| !(sd[i * p + i] > 0.0)) {
        return Err(Error::NotPsd);
    }
    let diag_pen = if cfg.penalize_diagonal { lambda } else { 0.0 };

    if let Some(prev) = warm.filter(|f| f.omega.dim() == p) {
        if let Ok(fit) = solve_from(sd, p, lambda, diag_pen, cfg, Some(prev)) {
            return Ok(fit);
        }
    }
    solve_from(sd, p, lambda, diag_pen, cfg, None)
}

fn solve_from(
    sd: &[f64],
    p: usize,
    lambda: f64,
    diag_pen: f64,
    cfg: &GlassoConfig,
    warm: Option<&PrecisionFit>,
) -> Result<PrecisionFit> {
    // W starts at S (+ λI on the diagonal when it is penalized). A warm start
    // always seeds the column coefficients; it also seeds W when that is
    // dual feasible (|Wᵢⱼ − Sᵢⱼ| ≤ λ) and positive definite.
    let mut w: Vec<f64> = sd.to_vec();
    let mut beta = vec![0.0; p * p];
    if let Some(prev) = warm {
        let om = prev.omega.as_slice();
        for j in 0..p {
            let ojj = om[j * p + j];
            for k in 0..p {
                if k != j {
                    beta[j * p + k] = -om[k * p + j] / ojj;
                }
            }
        }
        let cand = prev.sigma_hat.as_slice();
        let feasible = (0..p).all(|i| (0..p).all(|j| i == j || (cand[i * p + j] - sd[i * p + j]).abs() <= lambda));
        if feasible {
            let mut c = cand.to_vec();
            for i in 0..p {
                c[i * p + i] = sd[i * p + i] + diag_pen;
            }
            if crate::matrix::cholesky_in_place(&mut c.clone(), p).is_ok() {
                w = c;
            }
        }
    }
    for i in 0..p {
        w[i * p + i] = sd[i * p + i] + diag_pen;
    }

    let mut off_abs = 0.0;
    for i in 0..p {
        for j in 0..p {
            if i != j {
                off_abs += sd[i * p + j].abs();
            }
        }
    }
    let pairs = (p * (p - 1)) as f64;
    let mean_off = if p > 1 { off_abs / pairs } else { 0.0 };
    let threshold = cfg.tol * mean_off;
    let scale = (0..p).map(|i| sd[i * p + i]).sum::<f64>() / p as f64;
    let inner_tol = 1e-1 * cfg.tol * scale;

    let mut r = vec![0.0; p];
    let mut sweeps = 0;
    let mut converged = p == 1;
    while !converged && sweeps < cfg.max_sweeps {
        sweeps += 1;
        let mut change = 0.0;
        for j in 0..p {
            let b = &mut beta[j * p..(j + 1) * p];
            lasso_column(&w, sd, p, j, lambda, inner_tol, b, &mut r);
            for k in 0..p {
                if k == j {
                    continue;
                }
                change += (w[k * p + j] - r[k]).abs();
                w[k * p + j] = r[k];
                w[j * p + k] = r[k];
            }
        }
        let mean_change = change / pairs;
        if !mean_change.is_finite() {
            return Err(Error::NotPsd);
        }
        converged = mean_change <= threshold;
    }

    let mut omega = vec![0.0; p * p];
    for j in 0..p {
        let b = &beta[j * p..(j + 1) * p];
        let mut t = w[j * p + j];
        for k in 0..p {
            if k != j {
                t -= w[j * p + k] * b[k];
            }
        }
        if !(t > 0.0) {
            return Err(Error::NotPsd);
        }
        let ojj = 1.0 / t;
        omega[j * p + j] = ojj;
        for k in 0..p {
            if k != j {
                omega[k * p + j] = -b[k] * ojj;
            }
        }
    }
    let omega = SymMatrix::symmetrize(p, omega).map_err(|_| Error::NotPsd)?;
    let sigma_hat = SymMatrix::symmetrize(p, w).map_err(|_| Error::NotPsd)?;
    Ok(PrecisionFit {
        omega,
        sigma_hat,
        lambda_used: lambda,
        sweeps,
        converged,
    })
}

/// Coordinate descent for column `j`:
/// `min ½ βᵀ W₁₁ β − βᵀ s₁₂ + λ‖β‖₁`, leaving `r = W₁₁ β` on exit.
#[allow(clippy::too_many_arguments)]
fn lasso_column(
    w: &[f64],
    s: &[f64],
    p: usize,
    j: usize,
    lambda: f64,
    tol: f64,
    beta: &mut [f64],
    r: &mut [f64],
) {
    r.fill(0.0);
    for k in 0..p {
        let bk = beta[k];
        if k == j || bk == 0.0 {
            continue;
        }
        for (rl, &wl) in r.iter_mut().zip(&w[k * p..(k + 1) * p]) {
            *rl += bk * wl;
        }
    }
    let s_col = &s[j * p..(j + 1) * p];
    let max_passes = 1000;
    let mut full_pass = true;
    for _ in 0..max_passes {
        let mut max_delta: f64 = 0.0;
        let mut active_changed = false;
        for k in 0..p {
            if k == j || (!full_pass && beta[k] == 0.0) {
                continue;
            }
            let wkk = w[k * p + k];
            let g = s_col[k] - r[k] + wkk * beta[k];
            let new = soft_threshold(g, lambda) / wkk;
            let delta = new - beta[k];
            if delta != 0.0 {
                if (beta[k] == 0.0) != (new == 0.0) {
                    active_changed = true;
                }
                beta[k] = new;
                for (rl, &wl) in r.iter_mut().zip(&w[k * p..(k + 1) * p]) {
                    *rl += delta * wl;
                }
                max_delta = max_delta.max(delta.abs() * wkk);
            }
        }
        if max_delta <= tol {
            if full_pass && !active_changed {
                break;
            }
            full_pass = true;
        } else {
            full_pass = false;
        }
    }
    beta[j] = 0.0;
}

#[inline]
fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// In-sample loss `(seg_len / n_total) · (Tr(ΩS) − log|Ω|)`; the penalty is
/// not part of the loss.
pub fn segment_loss(
    fit: &PrecisionFit,
    est: &CovarianceEstimate,
    seg_len: usize,
    n_total: usize,
) -> Result<f64> {
    scaled_gaussian_loss(&fit.omega, &est.matrix, seg_len, n_total)
}

pub(crate) fn scaled_gaussian_loss(
    omega: &SymMatrix,
    s: &SymMatrix,
    seg_len: usize,
    n_total: usize,
) -> Result<f64> {
    let tr = trace_product(omega, s)?;
    let ld = logdet_psd(omega)?;
    Ok(seg_len as f64 / n_total as f64 * (tr - ld))
}

/// Largest KKT violation of a fit against the stationarity conditions of
/// the penalized problem, using `W = Ω⁻¹`.
pub fn kkt_residual(fit: &PrecisionFit, s: &SymMatrix, penalize_diagonal: bool) -> Result<f64> {
    let p = s.dim();
    let w = crate::matrix::Cholesky::new(&fit.omega)?.inverse();
    let lambda = fit.lambda_used;
    let mut worst: f64 = 0.0;
    for i in 0..p {
        for j in 0..p {
            let g = s.get(i, j) - w.get(i, j);
            let o = fit.omega.get(i, j);
            let pen = if i == j && !penalize_diagonal { 0.0 } else { lambda };
            let v = if i != j && o.abs() <= ZERO_THRESHOLD {
                (g.abs() - pen).max(0.0)
            } else {
                (g + pen * o.signum()).abs()
            };
            worst = worst.max(v);
        }
    }
    Ok(worst)
}
