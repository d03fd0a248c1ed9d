//! Synthetic scenarios: sparse precision generators, piecewise Gaussian
//! sampling and missingness mechanisms.
//!
//! Randomness comes from [`rng_for`], which derives independent ChaCha
//! streams from one seed so each stage can be reproduced on its own.

use std::ops::Range;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Exp, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::matrix::{eigen_sym, Cholesky, SymMatrix};

/// Stream ids used with [`rng_for`].
pub mod streams {
    pub const SCENARIO: u64 = 1;
    pub const SAMPLE: u64 = 2;
    pub const MISSING: u64 = 3;
}

/// Deterministic generator for `(seed, stream)`; distinct streams never
/// overlap.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Network {
    RandomGraph,
    ChainNetwork,
}

impl std::str::FromStr for Network {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rn" | "random" | "random_graph" => Ok(Network::RandomGraph),
            "cn" | "chain" | "chain_network" => Ok(Network::ChainNetwork),
            other => Err(Error::InvalidInput(format!("unknown network '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Missingness {
    None,
    Mcar,
    Block,
}

impl std::str::FromStr for Missingness {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(Missingness::None),
            "mcar" => Ok(Missingness::Mcar),
            "block" | "blockwise" => Ok(Missingness::Block),
            other => Err(Error::InvalidInput(format!("unknown missingness '{other}'"))),
        }
    }
}

/// Random graph precision: each unordered pair is an edge with probability
/// `q` and gets `edge_value`; the diagonal is then raised by
/// `|λ_min| + diag_increment`. Returns `(precision, covariance)`.
pub fn gen_random_graph_precision<R: Rng + ?Sized>(
    p: usize,
    q: f64,
    edge_value: f64,
    diag_increment: f64,
    rng: &mut R,
) -> Result<(SymMatrix, SymMatrix)> {
    if p < 2 || !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidInput(format!("need p >= 2 and q in [0, 1], got p = {p}, q = {q}")));
    }
    let mut adj = SymMatrix::zeros(p);
    for i in 0..p {
        for j in (i + 1)..p {
            if rng.random_bool(q) {
                adj.set_sym(i, j, edge_value);
            }
        }
    }
    let lmin = eigen_sym(&adj)?.values.last().copied().unwrap_or(0.0);
    let shift = lmin.abs() + diag_increment;
    for i in 0..p {
        adj.set_sym(i, i, shift);
    }
    let cov = Cholesky::new(&adj)?.inverse();
    Ok((adj, cov))
}

/// Chain network: `Σᵢⱼ = exp(−a|sᵢ − sⱼ|)` with `s₁` and the increments
/// drawn from `U(0.5, 1)`. The precision is tridiagonal before the optional
/// symmetric permutation. Returns `(precision, covariance)`.
pub fn gen_chain_network<R: Rng + ?Sized>(
    p: usize,
    a: f64,
    permute: bool,
    rng: &mut R,
) -> Result<(SymMatrix, SymMatrix)> {
    if p < 2 || !(a > 0.0) {
        return Err(Error::InvalidInput(format!("need p >= 2 and a > 0, got p = {p}, a = {a}")));
    }
    let mut s: Vec<f64> = Vec::with_capacity(p);
    let mut acc = 0.0f64;
    for _ in 0..p {
        acc += rng.random_range(0.5..1.0);
        s.push(acc);
    }
    let mut perm: Vec<usize> = (0..p).collect();
    if permute {
        perm.shuffle(rng);
    }
    let cov = SymMatrix::from_fn(p, |i, j| {
        if i == j {
            1.0
        } else {
            (-a * (s[perm[i]] - s[perm[j]]).abs()).exp()
        }
    });
    let prec = chain_precision(&s, a, &perm);
    Ok((prec, cov))
}

/// Closed-form inverse of the chain covariance. With `rᵢ = exp(−a(sᵢ₊₁ − sᵢ))`
/// the process is a first-order autoregression, so the precision is the
/// tridiagonal matrix of its conditional regressions.
fn chain_precision(s: &[f64], a: f64, perm: &[usize]) -> SymMatrix {
    let p = s.len();
    let r: Vec<f64> = s.windows(2).map(|w| (-a * (w[1] - w[0])).exp()).collect();
    let c: Vec<f64> = r.iter().map(|&x| x * x / (1.0 - x * x)).collect();
    let diag: Vec<f64> = (0..p)
        .map(|i| 1.0 + if i > 0 { c[i - 1] } else { 0.0 } + if i + 1 < p { c[i] } else { 0.0 })
        .collect();
    let off: Vec<f64> = r.iter().map(|&x| -x / (1.0 - x * x)).collect();
    let mut inv = vec![0usize; p];
    for (pos, &orig) in perm.iter().enumerate() {
        inv[orig] = pos;
    }
    let mut m = SymMatrix::zeros(p);
    for i in 0..p {
        m.set_sym(inv[i], inv[i], diag[i]);
        if i + 1 < p {
            m.set_sym(inv[i], inv[i + 1], off[i]);
        }
    }
    m
}

/// Piecewise stationary ground truth.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scenario {
    pub n: usize,
    pub p: usize,
    /// Segment boundaries including `0` and `n`.
    pub boundaries: Vec<usize>,
    pub network: Network,
    pub precisions: Vec<SymMatrix>,
    pub covariances: Vec<SymMatrix>,
    pub rng_seed: u64,
}

impl Scenario {
    /// Draws a fresh precision matrix per segment of `boundaries`.
    pub fn from_boundaries(boundaries: Vec<usize>, p: usize, network: Network, seed: u64) -> Result<Self> {
        let mut rng = rng_for(seed, streams::SCENARIO);
        Self::build(boundaries, p, network, seed, &mut rng)
    }

    fn build(
        boundaries: Vec<usize>,
        p: usize,
        network: Network,
        seed: u64,
        rng: &mut ChaCha20Rng,
    ) -> Result<Self> {
        if boundaries.len() < 2 || boundaries[0] != 0 || boundaries.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput(format!(
                "boundaries must be strictly increasing from 0, got {boundaries:?}"
            )));
        }
        let n = *boundaries.last().unwrap();
        let mut precisions = Vec::new();
        let mut covariances = Vec::new();
        for _ in 1..boundaries.len() {
            let (prec, cov) = match network {
                Network::RandomGraph => gen_random_graph_precision(p, 5.0 / p as f64, 0.3, 0.1, rng)?,
                Network::ChainNetwork => gen_chain_network(p, 0.5, true, rng)?,
            };
            precisions.push(prec);
            covariances.push(cov);
        }
        Ok(Self {
            n,
            p,
            boundaries,
            network,
            precisions,
            covariances,
            rng_seed: seed,
        })
    }

    /// Interior boundaries, i.e. the true change points.
    pub fn change_points(&self) -> &[usize] {
        &self.boundaries[1..self.boundaries.len() - 1]
    }
}

/// `n = 500`, `p = 100`, segments of sizes 70, 120, 120 and 190 in random
/// order.
pub fn default_scenario(network: Network, seed: u64) -> Result<Scenario> {
    let mut rng = rng_for(seed, streams::SCENARIO);
    let mut sizes = [70usize, 120, 120, 190];
    sizes.shuffle(&mut rng);
    let mut boundaries = vec![0];
    for s in sizes {
        boundaries.push(boundaries.last().unwrap() + s);
    }
    Scenario::build(boundaries, 100, network, seed, &mut rng)
}

/// The default scenario with its change points fixed at 120, 240 and 310.
pub fn fixed_scenario(network: Network, seed: u64) -> Result<Scenario> {
    Scenario::from_boundaries(vec![0, 120, 240, 310, 500], 100, network, seed)
}

/// Draws rows `i ∈ (bⱼ, bⱼ₊₁]` i.i.d. from `N(0, Σⱼ)` as `L z`.
pub fn sample_scenario<R: Rng + ?Sized>(scn: &Scenario, rng: &mut R) -> Result<DataMatrix> {
    let p = scn.p;
    let mut values = vec![0.0; scn.n * p];
    let mut z = vec![0.0; p];
    for (j, cov) in scn.covariances.iter().enumerate() {
        let chol = Cholesky::new(cov)?;
        for i in scn.boundaries[j]..scn.boundaries[j + 1] {
            for zk in z.iter_mut() {
                *zk = rng.sample(StandardNormal);
            }
            chol.lower_mul(&z, &mut values[i * p..(i + 1) * p]);
        }
    }
    DataMatrix::complete(scn.n, p, values)
}

fn check_fraction(fraction: f64) -> Result<()> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::InvalidInput(format!("missing fraction must be in [0, 1), got {fraction}")));
    }
    Ok(())
}

/// Masks uniformly chosen observed cells until exactly
/// `round(fraction · n · p)` cells are missing.
pub fn delete_mcar<R: Rng + ?Sized>(data: &DataMatrix, fraction: f64, rng: &mut R) -> Result<DataMatrix> {
    check_fraction(fraction)?;
    let total = data.n() * data.p();
    let target = (fraction * total as f64).round() as usize;
    let already = data.missing_count();
    if target <= already {
        return Ok(data.clone());
    }
    let observed: Vec<usize> = (0..total).filter(|&c| data.mask()[c]).collect();
    let mut mask = data.mask().to_vec();
    for pick in index::sample(rng, observed.len(), target - already) {
        mask[observed[pick]] = false;
    }
    Ok(data.with_mask(mask))
}

/// One outage: the same rows masked in each of `vars`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub vars: Vec<usize>,
    /// Drawn length before clipping, at least one row.
    pub len: usize,
    /// One-based midpoint row.
    pub mid: usize,
}

impl Block {
    /// Zero-based half-open rows of the block clipped to `n` rows.
    pub fn rows(&self, n: usize) -> Range<usize> {
        let l = self.len as i64;
        let start = self.mid as i64 - l / 2;
        let end = start + l - 1;
        let lo = start.max(1) as usize;
        let hi = end.min(n as i64) as usize;
        lo - 1..hi
    }
}

/// Draws outages for an `n × p` matrix: `k ~ Poi(p/20)` variables, a length
/// `Exp(mean n/8)` rounded to at least one row and a midpoint uniform in
/// `1..=n`.
#[derive(Debug, Clone)]
pub struct BlockSampler {
    n: usize,
    p: usize,
    count: Poisson<f64>,
    length: Exp<f64>,
}

impl BlockSampler {
    pub fn new(n: usize, p: usize) -> Result<Self> {
        if n == 0 || p == 0 {
            return Err(Error::InvalidInput(format!("empty data matrix {n} x {p}")));
        }
        let count =
            Poisson::new(p as f64 / 20.0).map_err(|e| Error::InvalidInput(format!("block variable count: {e}")))?;
        let length = Exp::new(8.0 / n as f64).map_err(|e| Error::InvalidInput(format!("block length: {e}")))?;
        Ok(Self { n, p, count, length })
    }

    /// Next outage, or `None` when no variable was drawn.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<Block> {
        let k = (self.count.sample(rng) as usize).min(self.p);
        if k == 0 {
            return None;
        }
        let vars = index::sample(rng, self.p, k).into_vec();
        let len = (self.length.sample(rng).round() as usize).max(1);
        let mid = rng.random_range(1..=self.n);
        Some(Block { vars, len, mid })
    }
}

/// Blockwise outages from [`BlockSampler`], repeated until at least
/// `fraction · n · p` cells are missing.
pub fn delete_blockwise<R: Rng + ?Sized>(data: &DataMatrix, fraction: f64, rng: &mut R) -> Result<DataMatrix> {
    check_fraction(fraction)?;
    let (n, p) = (data.n(), data.p());
    let target = (fraction * (n * p) as f64).ceil() as usize;
    let sampler = BlockSampler::new(n, p)?;
    let mut mask = data.mask().to_vec();
    let mut missing = data.missing_count();
    while missing < target {
        let Some(block) = sampler.draw(rng) else {
            continue;
        };
        for &j in &block.vars {
            for i in block.rows(n) {
                let c = i * p + j;
                if mask[c] {
                    mask[c] = false;
                    missing += 1;
                }
            }
        }
    }
    Ok(data.with_mask(mask))
}

/// Applies `kind` at `fraction`.
pub fn apply_missingness<R: Rng + ?Sized>(
    data: &DataMatrix,
    kind: Missingness,
    fraction: f64,
    rng: &mut R,
) -> Result<DataMatrix> {
    match kind {
        Missingness::None => Ok(data.clone()),
        Missingness::Mcar => delete_mcar(data, fraction, rng),
        Missingness::Block => delete_blockwise(data, fraction, rng),
    }
}

/// Samples `scn` and applies missingness, each from its own stream of
/// `seed`.
pub fn simulate(scn: &Scenario, kind: Missingness, fraction: f64, seed: u64) -> Result<DataMatrix> {
    let data = sample_scenario(scn, &mut rng_for(seed, streams::SAMPLE))?;
    apply_missingness(&data, kind, fraction, &mut rng_for(seed, streams::MISSING))
}
