use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use hdcpd::gain::{gain_curves, GainKind};
use hdcpd::metrics::{adjusted_rand, rand_index, Partition};
use hdcpd::search::{binary_segmentation, dp_partition, seeded_bs, SearchConfig, Segmentation, TreeNode};
use hdcpd::selection::cv_lambda;
use hdcpd::simulation::{default_scenario, simulate, Missingness, Network, Scenario};
use hdcpd::{CovMethod, GlassoConfig, Segment};
use serde::{Deserialize, Serialize};

use crate::args::{DetectArgs, EvaluateArgs, GainsArgs, SimulateArgs};
use crate::config::{Penalty, RunConfig};
use crate::table::{default_header, read_csv, write_csv, Table};
use crate::{exit, CliError, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::io(format!("opening {}", path.display()), e))
}

fn read_table(path: &Path) -> Result<Table> {
    read_csv(open(path)?)
}

/// Pretty JSON to `path`, or to stdout when `path` is `None`.
fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> Result<()> {
    let context = || path.map_or("stdout".to_string(), |p| p.display().to_string());
    let mut out: Box<dyn Write> = match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| CliError::io(format!("creating {}", p.display()), e))?,
        )),
        None => Box::new(std::io::stdout().lock()),
    };
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| CliError::io(context(), e.into()))?;
    writeln!(out).and_then(|_| out.flush()).map_err(|e| CliError::io(context(), e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    serde_json::from_reader(open(path)?).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectOutput {
    pub version: String,
    pub n: usize,
    pub p: usize,
    /// Sorted, 1-based: each is the last row of its left segment.
    pub change_points: Vec<usize>,
    pub search: Segmentation,
    pub method: Option<CovMethod>,
    /// Penalized objective, dp only.
    pub objective: Option<f64>,
    /// True when no segment produced a candidate split.
    pub unsplittable: bool,
    pub tree: Vec<TreeNode>,
    pub config: RunConfig,
    pub timing: Timing,
}

pub fn detect(a: &DetectArgs) -> Result<i32> {
    let cfg = RunConfig::from_args(a)?;
    let table = read_table(&a.input)?;
    let data = &table.data;
    let search = cfg.search_config();
    let sel = cfg.selection_config();
    let t = Instant::now();
    let res = match cfg.search {
        Segmentation::Bs | Segmentation::Obs => binary_segmentation(data, &search, &sel)?,
        Segmentation::SeedBs => seeded_bs(data, &search, &sel)?,
        Segmentation::Dp => {
            let Penalty::Fixed { lambda0 } = cfg.penalty else {
                unreachable!("dp configs carry a fixed penalty")
            };
            dp_partition(data, &search, cfg.min_obs, cfg.method, &sel.glasso.with_lambda0(lambda0))?
        }
    };
    let unsplittable = res.all_unsplittable();
    let out = DetectOutput {
        version: VERSION.into(),
        n: data.n(),
        p: data.p(),
        change_points: res.change_points,
        search: res.segmentation,
        method: res.method,
        objective: res.objective,
        unsplittable,
        tree: res.tree,
        config: cfg,
        timing: Timing {
            seconds: t.elapsed().as_secs_f64(),
        },
    };
    write_json(a.output.as_deref(), &out)?;
    Ok(if unsplittable { exit::NOTHING_TO_SPLIT } else { exit::OK })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissingSpec {
    pub kind: Missingness,
    pub fraction: f64,
    pub missing_cells: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub version: String,
    pub n: usize,
    pub p: usize,
    /// 1-based, as in detection results.
    pub change_points: Vec<usize>,
    /// Includes `0` and `n`.
    pub boundaries: Vec<usize>,
    pub network: Network,
    pub missing: MissingSpec,
    pub seed: u64,
}

fn truth_path(a: &SimulateArgs) -> PathBuf {
    a.truth.clone().unwrap_or_else(|| a.output.with_extension("truth.json"))
}

pub fn simulate_cmd(a: &SimulateArgs) -> Result<i32> {
    let network: Network = a.network.parse()?;
    let kind: Missingness = a.missing.parse()?;
    if !(0.0..1.0).contains(&a.fraction) {
        return Err(CliError::Config(format!("--fraction must be in [0, 1), got {}", a.fraction)));
    }
    if kind == Missingness::None && a.fraction > 0.0 {
        return Err(CliError::Config("--fraction needs --missing mcar or block".into()));
    }
    let scn = match (&a.change_points, a.n) {
        (None, None) if a.p.is_none() => default_scenario(network, a.seed)?,
        (None, _) => {
            return Err(CliError::Config(
                "--n and --p need --change-points; omit all three for the default scenario".into(),
            ))
        }
        (Some(cps), n) => {
            let n = n.unwrap_or(500);
            let mut b = vec![0];
            b.extend(cps.iter().copied());
            b.push(n);
            if !b.windows(2).all(|w| w[0] < w[1]) {
                return Err(CliError::Config(format!("change points must increase strictly inside (0, {n})")));
            }
            Scenario::from_boundaries(b, a.p.unwrap_or(100), network, a.seed)?
        }
    };
    let data = simulate(&scn, kind, a.fraction, a.seed)?;
    let file = File::create(&a.output).map_err(|e| CliError::io(format!("creating {}", a.output.display()), e))?;
    write_csv(
        BufWriter::new(file),
        &Table {
            header: default_header(data.p()),
            data: data.clone(),
        },
    )?;
    let truth = Truth {
        version: VERSION.into(),
        n: scn.n,
        p: scn.p,
        change_points: scn.change_points().to_vec(),
        boundaries: scn.boundaries.clone(),
        network,
        missing: MissingSpec {
            kind,
            fraction: a.fraction,
            missing_cells: data.missing_count(),
        },
        seed: a.seed,
    };
    write_json(Some(&truth_path(a)), &truth)?;
    Ok(exit::OK)
}

/// Fields shared by truth and result documents.
#[derive(Debug, Deserialize)]
struct ChangePoints {
    n: usize,
    change_points: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distance {
    pub change_point: usize,
    /// `None` when there is no true change point.
    pub nearest_true: Option<usize>,
    pub distance: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub version: String,
    pub n: usize,
    pub rand: f64,
    pub adjusted_rand: f64,
    pub true_count: usize,
    pub estimated_count: usize,
    pub distances: Vec<Distance>,
}

pub fn evaluate(truth: &[usize], found: &[usize], n: usize) -> Result<Metrics> {
    let (t, f) = (Partition::from_change_points(n, truth)?, Partition::from_change_points(n, found)?);
    let distances = found
        .iter()
        .map(|&c| {
            let nearest = truth.iter().copied().min_by_key(|&t| t.abs_diff(c));
            Distance {
                change_point: c,
                nearest_true: nearest,
                distance: nearest.map(|t| t.abs_diff(c)),
            }
        })
        .collect();
    Ok(Metrics {
        version: VERSION.into(),
        n,
        rand: rand_index(&t, &f)?,
        adjusted_rand: adjusted_rand(&t, &f)?,
        true_count: truth.len(),
        estimated_count: found.len(),
        distances,
    })
}

pub fn evaluate_cmd(a: &EvaluateArgs) -> Result<i32> {
    let truth: ChangePoints = read_json(&a.truth)?;
    let result: ChangePoints = read_json(&a.result)?;
    if truth.n != result.n {
        return Err(CliError::Core(hdcpd::Error::SizeMismatch {
            left: truth.n,
            right: result.n,
        }));
    }
    write_json(a.output.as_deref(), &evaluate(&truth.change_points, &result.change_points, truth.n)?)?;
    Ok(exit::OK)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Points {
    pub splits: Vec<usize>,
    pub gains: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodCurve {
    pub method: CovMethod,
    /// `complete` on fully observed segments, `adjusted` otherwise.
    pub kind: GainKind,
    pub lambda0: f64,
    /// Set when no variable reaches the observation threshold.
    pub empty_subset: bool,
    pub curve: Points,
    pub naive: Option<Points>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainsOutput {
    pub version: String,
    pub n: usize,
    pub p: usize,
    pub segment: Segment,
    pub margin: usize,
    pub min_obs: usize,
    pub penalty: Penalty,
    pub curves: Vec<MethodCurve>,
}

pub fn gains(a: &GainsArgs) -> Result<i32> {
    let penalty = Penalty::from_args(&a.penalty)?;
    let table = read_table(&a.input)?;
    let data = &table.data;
    let seg = match a.segment.as_deref() {
        None => data.full_segment(),
        Some(&[start, end]) => Segment::new(start, end)?,
        Some(other) => return Err(CliError::Config(format!("--segment needs start,end, got {other:?}"))),
    };
    data.check_segment(seg)?;
    let margin = SearchConfig {
        delta: a.delta,
        ..SearchConfig::default()
    }
    .margin(data.n())?;
    let has_missing = data.has_missing_in(seg);
    let methods: Vec<CovMethod> = if a.method.eq_ignore_ascii_case("all") {
        CovMethod::ALL
            .into_iter()
            .filter(|&m| m != CovMethod::Complete || !has_missing)
            .collect()
    } else {
        vec![a.method.parse()?]
    };
    let glasso = GlassoConfig::default();
    let mut curves = Vec::with_capacity(methods.len());
    for m in methods {
        let lambda0 = match &penalty {
            Penalty::Fixed { lambda0 } => *lambda0,
            Penalty::Cv { grid, folds } => cv_lambda(data, seg, a.min_obs, m, grid, *folds, &glasso)?.best_lambda0,
        };
        let (adj, naive) = gain_curves(data, seg, a.min_obs, m, &glasso.with_lambda0(lambda0), margin)?;
        curves.push(MethodCurve {
            method: m,
            kind: adj.kind,
            lambda0,
            empty_subset: adj.empty_subset,
            curve: Points {
                splits: adj.splits,
                gains: adj.gains,
            },
            naive: a.include_naive.then_some(Points {
                splits: naive.splits,
                gains: naive.gains,
            }),
        });
    }
    let empty = curves.iter().any(|c| c.empty_subset);
    let out = GainsOutput {
        version: VERSION.into(),
        n: data.n(),
        p: data.p(),
        segment: seg,
        margin,
        min_obs: a.min_obs,
        penalty,
        curves,
    };
    write_json(a.output.as_deref(), &out)?;
    Ok(if empty { exit::NOTHING_TO_SPLIT } else { exit::OK })
}
