use hdcpd::search::{SearchConfig, Segmentation};
use hdcpd::selection::{log_grid, SelectionConfig};
use hdcpd::{CovMethod, GlassoConfig};
use serde::{Deserialize, Serialize};

use crate::args::{DetectArgs, PenaltyArgs};
use crate::{CliError, Result};

const CV_MIN: f64 = 0.01;
const CV_MAX: f64 = 2.0;
const CV_SIZE: usize = 10;
const FOLDS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Penalty {
    Fixed { lambda0: f64 },
    Cv { grid: Vec<f64>, folds: usize },
}

impl Penalty {
    /// Fixed λ₀ and cross-validation flags are mutually exclusive.
    pub fn from_args(a: &PenaltyArgs) -> Result<Self> {
        match a.lambda0 {
            Some(_) if Self::has_cv_flags(a) => Err(CliError::Config(
                "--lambda0 conflicts with --cv-min/--cv-max/--cv-size/--folds".into(),
            )),
            Some(l) if !(l >= 0.0 && l.is_finite()) => Err(CliError::Config(format!("--lambda0 must be >= 0, got {l}"))),
            Some(lambda0) => Ok(Penalty::Fixed { lambda0 }),
            None => {
                let grid = log_grid(a.cv_min.unwrap_or(CV_MIN), a.cv_max.unwrap_or(CV_MAX), a.cv_size.unwrap_or(CV_SIZE))?;
                let folds = a.folds.unwrap_or(FOLDS);
                if folds < 2 {
                    return Err(CliError::Config(format!("--folds must be at least 2, got {folds}")));
                }
                Ok(Penalty::Cv { grid, folds })
            }
        }
    }

    fn has_cv_flags(a: &PenaltyArgs) -> bool {
        a.cv_min.is_some() || a.cv_max.is_some() || a.cv_size.is_some() || a.folds.is_some()
    }
}

/// Validated detection settings, echoed into the result document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub method: CovMethod,
    pub search: Segmentation,
    pub delta: f64,
    pub min_obs: usize,
    pub penalty: Penalty,
    /// Set for dp only.
    pub gamma: Option<f64>,
    pub seed: u64,
    pub input: String,
}

impl RunConfig {
    pub fn from_args(a: &DetectArgs) -> Result<Self> {
        let method: CovMethod = a.method.parse()?;
        let search: Segmentation = a.search.parse()?;
        if !(a.delta > 0.0 && a.delta < 0.5) {
            return Err(CliError::Config(format!("--delta must be in (0, 0.5), got {}", a.delta)));
        }
        if a.min_obs < 2 {
            return Err(CliError::Config(format!("--min-obs must be at least 2, got {}", a.min_obs)));
        }
        let penalty = match (search, a.gamma) {
            (Segmentation::Dp, None) => return Err(CliError::Config("--search dp requires --gamma".into())),
            (Segmentation::Dp, Some(g)) if !(g >= 0.0) => {
                return Err(CliError::Config(format!("--gamma must be >= 0, got {g}")))
            }
            (Segmentation::Dp, Some(_)) if Penalty::has_cv_flags(&a.penalty) => {
                return Err(CliError::Config("--search dp uses a fixed --lambda0; cross-validation flags conflict".into()))
            }
            (Segmentation::Dp, Some(_)) => Penalty::Fixed {
                lambda0: a.penalty.lambda0.unwrap_or(GlassoConfig::default().lambda0),
            },
            (_, Some(_)) => return Err(CliError::Config("--gamma is only valid with --search dp".into())),
            (_, None) => Penalty::from_args(&a.penalty)?,
        };
        Ok(Self {
            method,
            search,
            delta: a.delta,
            min_obs: a.min_obs,
            penalty,
            gamma: a.gamma,
            seed: a.seed,
            input: a.input.display().to_string(),
        })
    }

    pub fn search_config(&self) -> SearchConfig {
        SearchConfig {
            delta: self.delta,
            gamma: self.gamma.unwrap_or(0.0),
            segmentation: self.search,
            rng_seed: self.seed,
            ..SearchConfig::default()
        }
    }

    /// A fixed λ₀ becomes a one-point grid: the penalty is pinned while
    /// split acceptance still compares cross-validated losses.
    pub fn selection_config(&self) -> SelectionConfig {
        let base = SelectionConfig::default();
        let (lambda_grid, folds) = match &self.penalty {
            Penalty::Fixed { lambda0 } => (vec![*lambda0], base.folds),
            Penalty::Cv { grid, folds } => (grid.clone(), *folds),
        };
        SelectionConfig {
            k: self.min_obs,
            method: self.method,
            lambda_grid,
            folds,
            ..base
        }
    }
}
