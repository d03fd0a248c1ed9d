//! Independent reference implementations used as test oracles. Everything
//! here works on plain nested vectors and avoids the library's numerics.
#![allow(dead_code)]

use hdcpd::{DataMatrix, Segment, SymMatrix, VariableSubset};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Mat = Vec<Vec<f64>>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn to_mat(a: &SymMatrix) -> Mat {
    let p = a.dim();
    (0..p).map(|i| (0..p).map(|j| a.get(i, j)).collect()).collect()
}

pub fn to_sym(a: &Mat) -> SymMatrix {
    let p = a.len();
    SymMatrix::from_row_major(p, a.iter().flatten().copied().collect()).unwrap()
}

pub fn identity(p: usize) -> Mat {
    (0..p).map(|i| (0..p).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
}

pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    let (n, m, k) = (a.len(), b[0].len(), b.len());
    (0..n)
        .map(|i| (0..m).map(|j| (0..k).map(|l| a[i][l] * b[l][j]).sum()).collect())
        .collect()
}

pub fn transpose(a: &Mat) -> Mat {
    (0..a[0].len()).map(|j| a.iter().map(|r| r[j]).collect()).collect()
}

pub fn max_abs_diff(a: &Mat, b: &Mat) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub fn frobenius(a: &Mat, b: &Mat) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Symmetric matrix with entries uniform in `[-1, 1]`.
pub fn random_sym<R: Rng>(p: usize, rng: &mut R) -> Mat {
    let mut a = vec![vec![0.0; p]; p];
    for i in 0..p {
        for j in i..p {
            let v = rng.random_range(-1.0..1.0);
            a[i][j] = v;
            a[j][i] = v;
        }
    }
    a
}

/// `BBᵀ/p + shift·I` with `B` uniform in `[-1, 1]`.
pub fn random_spd<R: Rng>(p: usize, shift: f64, rng: &mut R) -> Mat {
    let b: Mat = (0..p).map(|_| (0..p).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let mut a = matmul(&b, &transpose(&b));
    for (i, row) in a.iter_mut().enumerate() {
        for v in row.iter_mut() {
            *v /= p as f64;
        }
        row[i] += shift;
    }
    a
}

/// Cyclic Jacobi eigendecomposition: eigenvalues (unsorted) and the matrix
/// whose columns are the eigenvectors.
pub fn jacobi_eigen(a: &Mat) -> (Vec<f64>, Mat) {
    let p = a.len();
    let mut a = a.clone();
    let mut v = identity(p);
    for _ in 0..100 {
        let off: f64 = (0..p)
            .flat_map(|i| (0..p).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for i in 0..p {
            for j in i + 1..p {
                if a[i][j].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[j][j] - a[i][i]) / (2.0 * a[i][j]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..p {
                    let (aki, akj) = (a[k][i], a[k][j]);
                    a[k][i] = c * aki - s * akj;
                    a[k][j] = s * aki + c * akj;
                }
                for k in 0..p {
                    let (aik, ajk) = (a[i][k], a[j][k]);
                    a[i][k] = c * aik - s * ajk;
                    a[j][k] = s * aik + c * ajk;
                }
                for k in 0..p {
                    let (vki, vkj) = (v[k][i], v[k][j]);
                    v[k][i] = c * vki - s * vkj;
                    v[k][j] = s * vki + c * vkj;
                }
            }
        }
    }
    ((0..p).map(|i| a[i][i]).collect(), v)
}

/// `V diag(f(λ)) Vᵀ` from the Jacobi oracle.
pub fn spectral_map(a: &Mat, f: impl Fn(f64) -> f64) -> Mat {
    let (vals, v) = jacobi_eigen(a);
    let p = a.len();
    let mut out = vec![vec![0.0; p]; p];
    for (k, &l) in vals.iter().enumerate() {
        let fl = f(l);
        for i in 0..p {
            for j in 0..p {
                out[i][j] += fl * v[i][k] * v[j][k];
            }
        }
    }
    out
}

/// Gauss–Jordan inverse with partial pivoting.
pub fn inverse(a: &Mat) -> Mat {
    let p = a.len();
    let mut m: Mat = a
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut row = r.clone();
            row.extend((0..p).map(|j| if i == j { 1.0 } else { 0.0 }));
            row
        })
        .collect();
    for c in 0..p {
        let piv = (c..p).max_by(|&x, &y| m[x][c].abs().total_cmp(&m[y][c].abs())).unwrap();
        m.swap(c, piv);
        let d = m[c][c];
        for v in m[c].iter_mut() {
            *v /= d;
        }
        for r in 0..p {
            if r != c {
                let f = m[r][c];
                if f != 0.0 {
                    for k in 0..2 * p {
                        m[r][k] -= f * m[c][k];
                    }
                }
            }
        }
    }
    m.into_iter().map(|r| r[p..].to_vec()).collect()
}

/// `log|det A|` by Gaussian elimination; panics on a non-positive
/// determinant.
pub fn logdet(a: &Mat) -> f64 {
    let p = a.len();
    let mut m = a.clone();
    let mut sign = 1.0;
    let mut acc = 0.0;
    for c in 0..p {
        let piv = (c..p).max_by(|&x, &y| m[x][c].abs().total_cmp(&m[y][c].abs())).unwrap();
        if piv != c {
            m.swap(c, piv);
            sign = -sign;
        }
        let d = m[c][c];
        assert!(d != 0.0, "singular matrix");
        sign *= d.signum();
        acc += d.abs().ln();
        for r in c + 1..p {
            let f = m[r][c] / d;
            for k in c..p {
                m[r][k] -= f * m[c][k];
            }
        }
    }
    assert!(sign > 0.0, "determinant is not positive");
    acc
}

pub fn submatrix(a: &Mat, idx: &[usize]) -> Mat {
    idx.iter().map(|&i| idx.iter().map(|&j| a[i][j]).collect()).collect()
}

/// Per-row observed-part negative log-likelihood,
/// `Σᵢ [−log|2πΩ_oᵢ| + (x−μ)ᵀΩ_oᵢ(x−μ)] / n_total` over rows of `seg`,
/// with `omega` and `means` indexed by `subset` positions.
pub fn naive_observed_loss(
    omega: &Mat,
    means: &[f64],
    data: &DataMatrix,
    seg: Segment,
    subset: &VariableSubset,
    n_total: usize,
) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut total = 0.0;
    for i in seg.start..seg.end {
        let obs: Vec<usize> = (0..subset.indices.len())
            .filter(|&a| data.get(i, subset.indices[a]).is_some())
            .collect();
        if obs.is_empty() {
            continue;
        }
        let sub = submatrix(omega, &obs);
        let x: Vec<f64> = obs
            .iter()
            .map(|&a| data.get(i, subset.indices[a]).unwrap() - means[a])
            .collect();
        let mut quad = 0.0;
        for (r, xr) in x.iter().enumerate() {
            for (c, xc) in x.iter().enumerate() {
                quad += xr * sub[r][c] * xc;
            }
        }
        total += -(logdet(&sub) + obs.len() as f64 * two_pi.ln()) + quad;
    }
    total / n_total as f64
}

/// Rows `rows` of `data` as a new matrix, keeping the mask.
pub fn take_rows(data: &DataMatrix, rows: &[usize]) -> DataMatrix {
    let p = data.p();
    let mut values = Vec::with_capacity(rows.len() * p);
    let mut mask = Vec::with_capacity(rows.len() * p);
    for &i in rows {
        for j in 0..p {
            values.push(data.get(i, j).unwrap_or(0.0));
            mask.push(data.is_observed(i, j));
        }
    }
    DataMatrix::new(rows.len(), p, values, mask).unwrap()
}

/// Labels `0, 1, …` of the blocks of `(0, n]` split after each change point.
pub fn labels(n: usize, cps: &[usize]) -> Vec<usize> {
    (0..n).map(|i| cps.iter().filter(|&&c| c <= i).count()).collect()
}

/// Rand index by enumerating all pairs.
pub fn brute_rand(n: usize, a: &[usize], b: &[usize]) -> f64 {
    let (la, lb) = (labels(n, a), labels(n, b));
    let mut agree = 0u64;
    let mut total = 0u64;
    for i in 0..n {
        for j in i + 1..n {
            total += 1;
            if (la[i] == la[j]) == (lb[i] == lb[j]) {
                agree += 1;
            }
        }
    }
    agree as f64 / total as f64
}

/// Adjusted Rand index from pair enumeration, in the expected-index form.
pub fn brute_adjusted_rand(n: usize, a: &[usize], b: &[usize]) -> f64 {
    let (la, lb) = (labels(n, a), labels(n, b));
    let (mut both, mut same_a, mut same_b, mut total) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..n {
        for j in i + 1..n {
            total += 1.0;
            let sa = la[i] == la[j];
            let sb = lb[i] == lb[j];
            if sa {
                same_a += 1.0;
            }
            if sb {
                same_b += 1.0;
            }
            if sa && sb {
                both += 1.0;
            }
        }
    }
    let expected = same_a * same_b / total;
    let max = 0.5 * (same_a + same_b);
    if max == expected {
        return if a == b { 1.0 } else { 0.0 };
    }
    (both - expected) / (max - expected)
}

/// Every change-point set of `(0, n]` whose segments all have length at
/// least `m`.
pub fn admissible_partitions(n: usize, m: usize) -> Vec<Vec<usize>> {
    fn go(start: usize, n: usize, m: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if n - start >= m {
            out.push(cur.clone());
        }
        for c in start + m..=n.saturating_sub(m) {
            cur.push(c);
            go(c, n, m, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(0, n, m, &mut Vec::new(), &mut out);
    out
}
