mod common;

use common::*;
use hdcpd::glasso::{glasso_fit, glasso_fit_warm, glasso_solve, kkt_residual, scaled_lambda, segment_loss};
use hdcpd::{CovMethod, CovarianceEstimate, Error, GlassoConfig, PrecisionFit, SymMatrix, VariableSubset};
use proptest::prelude::*;

fn est(s: &Mat) -> CovarianceEstimate {
    let p = s.len();
    CovarianceEstimate {
        subset: VariableSubset::all(p, 2),
        matrix: to_sym(s),
        method: CovMethod::Complete,
        means: vec![0.0; p],
        support: None,
    }
}

fn fit(s: &Mat, lambda0: f64) -> PrecisionFit {
    glasso_fit(&est(s), 100, 100, &GlassoConfig::default().with_lambda0(lambda0)).unwrap()
}

fn max_off_diag(s: &Mat) -> f64 {
    let p = s.len();
    (0..p)
        .flat_map(|i| (0..p).filter(move |&j| j != i).map(move |j| (i, j)))
        .map(|(i, j)| s[i][j].abs())
        .fold(0.0, f64::max)
}

fn edges(f: &PrecisionFit) -> Vec<(usize, usize)> {
    let p = f.omega.dim();
    let mut out = Vec::new();
    for i in 0..p {
        for j in i + 1..p {
            if f.omega.get(i, j).abs() > 1e-8 {
                out.push((i, j));
            }
        }
    }
    out
}

#[test]
fn identity_input_gives_identity() {
    for l in [0.0, 0.05, 1.0, 10.0] {
        let f = fit(&identity(5), l);
        assert!(max_abs_diff(&to_mat(&f.omega), &identity(5)) < 1e-14);
    }
}

#[test]
fn full_shrinkage_gives_inverse_diagonal() {
    let mut r = rng(21);
    for _ in 0..10 {
        let s = random_spd(6, 0.5, &mut r);
        let f = fit(&s, max_off_diag(&s));
        for i in 0..6 {
            for j in 0..6 {
                let want = if i == j { 1.0 / s[i][i] } else { 0.0 };
                assert_eq!(f.omega.get(i, j), want);
            }
        }
    }
}

#[test]
fn unpenalized_fit_is_the_inverse() {
    let mut r = rng(22);
    for _ in 0..20 {
        let s = random_spd(4, 0.5, &mut r);
        let f = fit(&s, 0.0);
        assert!(max_abs_diff(&to_mat(&f.omega), &inverse(&s)) < 1e-6);
    }
}

#[test]
fn penalty_scales_with_segment_length() {
    assert!((scaled_lambda(0.2, 25, 100) - 0.4).abs() < 1e-15);
    let s = random_spd(4, 0.5, &mut rng(23));
    let f = glasso_fit(&est(&s), 25, 100, &GlassoConfig::default().with_lambda0(0.2)).unwrap();
    assert!((f.lambda_used - 0.4).abs() < 1e-15);
    let bad = glasso_fit(&est(&s), 0, 100, &GlassoConfig::default());
    assert!(bad.is_err());
    assert!(glasso_fit(&est(&s), 101, 100, &GlassoConfig::default()).is_err());
}

#[test]
fn rejects_non_positive_diagonal() {
    let s = vec![vec![1.0, 0.0], vec![0.0, 0.0]];
    let e = glasso_solve(&to_sym(&s), 0.1, &GlassoConfig::default(), None).unwrap_err();
    assert_eq!(e, Error::NotPsd);
    let cfg = GlassoConfig {
        tol: 0.0,
        ..GlassoConfig::default()
    };
    assert!(glasso_solve(&SymMatrix::identity(2), 0.1, &cfg, None).is_err());
}

#[test]
fn segment_loss_examples() {
    let f = fit(&identity(3), 0.1);
    assert!((segment_loss(&f, &est(&identity(3)), 50, 50).unwrap() - 3.0).abs() < 1e-12);
    let mut r = rng(24);
    for _ in 0..10 {
        let s = random_spd(3, 0.3, &mut r);
        let f = fit(&s, 0.1);
        let o = to_mat(&f.omega);
        let tr: f64 = (0..3).flat_map(|i| (0..3).map(move |j| (i, j))).map(|(i, j)| o[i][j] * s[i][j]).sum();
        let naive = 30.0 / 120.0 * (tr - logdet(&o));
        assert!((segment_loss(&f, &est(&s), 30, 120).unwrap() - naive).abs() < 1e-12);
    }
}

#[test]
fn fit_invariants_hold() {
    let mut r = rng(25);
    for _ in 0..20 {
        let p = 8;
        let s = random_spd(p, 0.2, &mut r);
        for l in [0.01, 0.05, 0.2] {
            let f = fit(&s, l);
            assert!(f.converged);
            let prod = matmul(&to_mat(&f.omega), &to_mat(&f.sigma_hat));
            assert!(max_abs_diff(&prod, &identity(p)) <= 1e-4 * p as f64);
            for i in 0..p {
                assert!((f.sigma_hat.get(i, i) - s[i][i]).abs() <= 1e-4);
            }
            assert!(logdet(&to_mat(&f.omega)).is_finite());
        }
    }
}

const GRID: [f64; 7] = [0.01, 0.02, 0.05, 0.1, 0.2, 0.4, 0.8];

fn tight(s: &Mat, lambda0: f64) -> PrecisionFit {
    let cfg = GlassoConfig {
        tol: 1e-12,
        ..GlassoConfig::default()
    };
    glasso_fit(&est(s), 100, 100, &cfg.with_lambda0(lambda0)).unwrap()
}

/// Component label of each vertex of the graph with edges `e`.
fn components(p: usize, e: &[(usize, usize)]) -> Vec<usize> {
    let mut label: Vec<usize> = (0..p).collect();
    loop {
        let mut changed = false;
        for &(i, j) in e {
            let m = label[i].min(label[j]);
            if label[i] != m || label[j] != m {
                label[i] = m;
                label[j] = m;
                changed = true;
            }
        }
        if !changed {
            return label;
        }
    }
}

/// Unit-diagonal-dominant input whose off-diagonal entries above 0.01 form a
/// random tree, so every thresholded graph on the grid is a forest.
fn tree_input(p: usize, seed: u64) -> Mat {
    use rand::Rng;
    let mut r = rng(seed);
    let mut s: Mat = vec![vec![0.0; p]; p];
    for i in 0..p {
        for j in i + 1..p {
            let v: f64 = r.random_range(-0.005..0.005);
            s[i][j] = v;
            s[j][i] = v;
        }
    }
    for i in 1..p {
        let parent = r.random_range(0..i);
        let v = r.random_range(0.02..0.3) * if r.random_bool(0.5) { 1.0 } else { -1.0 };
        s[i][parent] = v;
        s[parent][i] = v;
    }
    for i in 0..p {
        s[i][i] = 1.0 + s[i].iter().map(|v| v.abs()).sum::<f64>();
    }
    s
}

#[test]
fn components_match_the_thresholded_graph() {
    let mut r = rng(28);
    for seed in 0..20 {
        let s = if seed % 2 == 0 { tree_input(10, 260 + seed) } else { random_spd(10, 0.1, &mut r) };
        for &l in &GRID {
            let thresholded: Vec<(usize, usize)> = (0..10)
                .flat_map(|i| (i + 1..10).map(move |j| (i, j)))
                .filter(|&(i, j)| s[i][j].abs() > l)
                .collect();
            assert_eq!(components(10, &edges(&tight(&s, l))), components(10, &thresholded), "lambda {l}");
        }
    }
}

#[test]
fn forest_inputs_have_shrinking_supports() {
    for seed in 0..10 {
        let s = tree_input(10, 260 + seed);
        let sets: Vec<Vec<(usize, usize)>> = GRID.iter().map(|&l| edges(&tight(&s, l))).collect();
        for w in sets.windows(2) {
            assert!(w[1].iter().all(|e| w[0].contains(e)), "{:?} not within {:?}", w[1], w[0]);
        }
    }
}

#[test]
fn connected_components_coarsen_as_the_penalty_grows() {
    let mut r = rng(26);
    for _ in 0..10 {
        let s = random_spd(10, 0.1, &mut r);
        let labels: Vec<Vec<usize>> = GRID.iter().map(|&l| components(10, &edges(&tight(&s, l)))).collect();
        for w in labels.windows(2) {
            for i in 0..10 {
                for j in 0..10 {
                    if w[1][i] == w[1][j] {
                        assert_eq!(w[0][i], w[0][j]);
                    }
                }
            }
        }
    }
}

/// On dense inputs an edge can enter the exact solution at a larger
/// penalty; both fits below are certified by their KKT residuals.
#[test]
fn edge_sets_need_not_shrink_on_dense_inputs() {
    let mut r = rng(26);
    let _ = random_spd(10, 0.1, &mut r);
    let s = random_spd(10, 0.1, &mut r);
    let (lo, hi) = (tight(&s, 0.02), tight(&s, 0.05));
    for f in [&lo, &hi] {
        assert!(kkt_residual(f, &to_sym(&s), false).unwrap() < 1e-10);
    }
    assert_eq!(lo.omega.get(1, 7), 0.0);
    assert!(hi.omega.get(1, 7).abs() > 1e-2);
}

#[test]
fn warm_start_reaches_the_same_fit() {
    let mut r = rng(27);
    let cfg = GlassoConfig {
        tol: 1e-10,
        ..GlassoConfig::default()
    };
    for _ in 0..10 {
        let s = random_spd(8, 0.2, &mut r);
        let other = random_spd(8, 0.2, &mut r);
        let prev = glasso_fit(&est(&other), 100, 100, &cfg.with_lambda0(0.05)).unwrap();
        let cold = glasso_fit(&est(&s), 100, 100, &cfg.with_lambda0(0.1)).unwrap();
        let warm = glasso_fit_warm(&est(&s), 100, 100, &cfg.with_lambda0(0.1), Some(&prev)).unwrap();
        assert!(cold.omega.max_abs_diff(&warm.omega).unwrap() < 1e-7);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn kkt_conditions_hold(seed in 0u64..100_000, p in 2usize..10, li in 0usize..3) {
        let lambda0 = [0.05, 0.2, 0.8][li];
        let s = random_spd(p, 0.2, &mut rng(seed));
        let cfg = GlassoConfig::default().with_lambda0(lambda0);
        let f = glasso_fit(&est(&s), 100, 100, &cfg).unwrap();
        prop_assert!(f.converged);
        let res = kkt_residual(&f, &to_sym(&s), false).unwrap();
        prop_assert!(res <= cfg.tol, "kkt residual {res}");
    }

    #[test]
    fn unpenalized_fit_is_scale_equivariant(seed in 0u64..100_000, ci in 0usize..2) {
        let c = [0.5, 2.0][ci];
        let s = random_spd(5, 0.3, &mut rng(seed));
        let cs: Mat = s.iter().map(|r| r.iter().map(|v| v * c).collect()).collect();
        let base = to_mat(&fit(&s, 0.0).omega);
        let scaled = to_mat(&fit(&cs, 0.0).omega);
        let expect: Mat = base.iter().map(|r| r.iter().map(|v| v / c).collect()).collect();
        prop_assert!(max_abs_diff(&scaled, &expect) < 1e-6);
    }
}
