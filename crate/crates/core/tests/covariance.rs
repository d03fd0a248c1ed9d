mod common;

use common::*;
use hdcpd::covariance::{
    column_centers, cov_average, cov_complete, cov_lw, cov_pairwise, estimate, lw_multiplier, Moments,
};
use hdcpd::matrix::{eigen_sym, nearest_psd_default};
use hdcpd::simulation::{delete_mcar, rng_for};
use hdcpd::{CovMethod, DataMatrix, Error, Segment, SymMatrix, VariableSubset};
use proptest::prelude::*;
use rand_distr::{Distribution, StandardNormal};

fn seg(a: usize, b: usize) -> Segment {
    Segment::new(a, b).unwrap()
}

fn close(a: &SymMatrix, b: &[f64], tol: f64) -> bool {
    a.as_slice().iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

fn min_eig(a: &SymMatrix) -> f64 {
    *eigen_sym(a).unwrap().values.last().unwrap()
}

fn normal_data(n: usize, p: usize, seed: u64) -> DataMatrix {
    let mut r = rng(seed);
    let v: Vec<f64> = (0..n * p).map(|_| StandardNormal.sample(&mut r)).collect();
    DataMatrix::complete(n, p, v).unwrap()
}

/// Column 1 observed at rows 0, 2, 3 only.
fn toy_one_missing() -> DataMatrix {
    DataMatrix::from_rows(&[
        vec![Some(1.0), Some(2.0)],
        vec![Some(3.0), None],
        vec![Some(5.0), Some(6.0)],
        vec![Some(7.0), Some(8.0)],
    ])
    .unwrap()
}

#[test]
fn complete_examples() {
    let d = DataMatrix::complete(3, 2, vec![1.0, 2.0, 1.0, 2.0, 1.0, 2.0]).unwrap();
    let e = cov_complete(&d, seg(0, 3)).unwrap();
    // Zero variances are lifted to the tiny projection floor.
    assert_eq!(e.matrix.get(0, 1), 0.0);
    assert!(e.matrix.diag().iter().all(|&v| (0.0..=1e-8).contains(&v)));

    let d = DataMatrix::complete(2, 2, vec![0.0, 0.0, 2.0, 2.0]).unwrap();
    assert!(close(&cov_complete(&d, seg(0, 2)).unwrap().matrix, &[1.0; 4], 1e-14));

    let d = normal_data(10_000, 3, 11);
    let e = cov_complete(&d, seg(0, 10_000)).unwrap();
    assert!(close(&e.matrix, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0], 0.05));
    assert_eq!(e.subset.indices, vec![0, 1, 2]);
    assert_eq!(cov_complete(&toy_one_missing(), seg(0, 4)).unwrap_err(), Error::HasMissing);
}

#[test]
fn average_examples() {
    let d = normal_data(40, 3, 12);
    let c = cov_complete(&d, seg(0, 40)).unwrap();
    let a = cov_average(&d, seg(0, 40), 5).unwrap();
    assert!(close(&a.matrix, c.matrix.as_slice(), 1e-12));

    let d = DataMatrix::from_rows(&[
        vec![Some(1.0), Some(2.0)],
        vec![Some(-1.0), None],
        vec![Some(4.0), Some(2.0)],
        vec![Some(0.0), None],
    ])
    .unwrap();
    let a = cov_average(&d, seg(0, 4), 2).unwrap();
    assert!(a.matrix.get(1, 1) <= 1e-8 * a.matrix.get(0, 0));
    assert!(a.matrix.get(0, 1).abs() < 1e-14);

    // Centered column 0: -3, -1, 1, 3; column 1: -10/3, 0, 2/3, 8/3.
    let a = cov_average(&toy_one_missing(), seg(0, 4), 2).unwrap();
    let third = 14.0 / 3.0;
    assert!(close(&a.matrix, &[5.0, third, third, third], 1e-12));
    assert!((a.means[1] - 16.0 / 3.0).abs() < 1e-12);
}

#[test]
fn lw_multiplier_examples() {
    let d = normal_data(10, 2, 13);
    let all = VariableSubset::all(2, 2);
    assert!(close(&lw_multiplier(&d, seg(0, 10), &all).unwrap(), &[1.0; 4], 0.0));

    let half: Vec<bool> = (0..4).flat_map(|i| [i % 2 == 0, true]).collect();
    let d = DataMatrix::new(4, 2, vec![1.0; 8], half).unwrap();
    assert!(close(&lw_multiplier(&d, seg(0, 4), &all).unwrap(), &[2.0, 2.0, 2.0, 1.0], 1e-15));

    let mask: Vec<bool> = (0..5).flat_map(|i| [i != 0, i != 4]).collect();
    let d = DataMatrix::new(5, 2, vec![1.0; 10], mask).unwrap();
    let m = lw_multiplier(&d, seg(0, 5), &all).unwrap();
    assert!(close(&m, &[1.25, 1.5625, 1.5625, 1.25], 1e-12));

    let gone = DataMatrix::new(3, 2, vec![1.0; 6], vec![true, false, true, false, true, false]).unwrap();
    assert_eq!(lw_multiplier(&gone, seg(0, 3), &all).unwrap_err(), Error::DegenerateRho);
}

#[test]
fn lw_examples() {
    let d = normal_data(50, 4, 14);
    let a = cov_average(&d, seg(0, 50), 5).unwrap();
    let l = cov_lw(&d, seg(0, 50), 5).unwrap();
    assert!(close(&l.matrix, a.matrix.as_slice(), 1e-12));
    assert_eq!(l.method, CovMethod::Lw);

    // Average estimate rescaled by M gives [[5, 56/9], [56/9, 56/9]], which is
    // indefinite; the result is its projection.
    let toy = toy_one_missing();
    let l = cov_lw(&toy, seg(0, 4), 2).unwrap();
    let s = 56.0 / 9.0;
    let raw = to_sym(&vec![vec![5.0, s], vec![s, s]]);
    assert!(min_eig(&raw) < 0.0);
    assert!(min_eig(&l.matrix) >= -1e-10);
    let oracle = spectral_map(&to_mat(&raw), |x| x.max(0.0));
    assert!(max_abs_diff(&to_mat(&l.matrix), &oracle) < 1e-6);
}

#[test]
fn lw_is_closer_to_truth_than_average_under_mcar() {
    let (n, p) = (10_000, 5);
    let mut wins = 0;
    for rep in 0..20 {
        let d = normal_data(n, p, 100 + rep);
        let d = delete_mcar(&d, 0.3, &mut rng_for(rep, 3)).unwrap();
        let truth = identity(p);
        let lw = to_mat(&cov_lw(&d, seg(0, n), 5).unwrap().matrix);
        let av = to_mat(&cov_average(&d, seg(0, n), 5).unwrap().matrix);
        if frobenius(&lw, &truth) < frobenius(&av, &truth) {
            wins += 1;
        }
    }
    assert!(wins > 10, "lw closer in only {wins}/20 replicates");
}

#[test]
fn pairwise_examples() {
    let d = normal_data(50, 4, 15);
    let c = cov_complete(&d, seg(0, 50)).unwrap();
    let pw = cov_pairwise(&d, seg(0, 50), 5).unwrap();
    assert!(close(&pw.matrix, c.matrix.as_slice(), 1e-12));

    let never = DataMatrix::from_rows(&[
        vec![Some(1.0), None],
        vec![Some(2.0), None],
        vec![None, Some(3.0)],
        vec![None, Some(5.0)],
    ])
    .unwrap();
    let pw = cov_pairwise(&never, seg(0, 4), 2).unwrap();
    assert_eq!(pw.matrix.get(0, 1), 0.0);
    assert_eq!(pw.support.as_ref().unwrap()[1], 0);

    // Joint rows 0, 3, 4: x = (1, 4, 5), y = (2, 5, 8), covariance 4. The
    // variances use each variable's own rows: 2.5 and 5.25.
    let toy = DataMatrix::from_rows(&[
        vec![Some(1.0), Some(2.0)],
        vec![Some(2.0), None],
        vec![None, Some(3.0)],
        vec![Some(4.0), Some(5.0)],
        vec![Some(5.0), Some(8.0)],
    ])
    .unwrap();
    let m = Moments::for_segment(&toy, &column_centers(&toy), seg(0, 5));
    let all = VariableSubset::all(2, 2);
    let raw = m.pairwise_cov(&all);
    assert!(close(&raw, &[2.5, 4.0, 4.0, 5.25], 1e-12));
    let pw = cov_pairwise(&toy, seg(0, 5), 2).unwrap();
    assert!(close(&pw.matrix, nearest_psd_default(&raw).unwrap().as_slice(), 1e-14));
    assert!(min_eig(&pw.matrix) >= -1e-8);
    assert_eq!(pw.support.unwrap(), vec![4, 3, 3, 4]);
}

#[test]
fn empty_subset_is_reported() {
    let d = DataMatrix::new(3, 2, vec![0.0; 6], vec![true, false, false, false, false, false]).unwrap();
    for m in [CovMethod::Average, CovMethod::Lw, CovMethod::Pairwise] {
        assert_eq!(estimate(&d, seg(0, 3), 2, m).unwrap_err(), Error::EmptySubset);
    }
}

fn masked(n: usize, p: usize, seed: u64, keep: f64) -> DataMatrix {
    let mut r = rng(seed);
    let v: Vec<f64> = (0..n * p).map(|_| StandardNormal.sample(&mut r)).collect();
    let m: Vec<bool> = (0..n * p).map(|_| rand::Rng::random_bool(&mut r, keep)).collect();
    DataMatrix::new(n, p, v, m).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn estimators_agree_on_complete_data(seed in 0u64..10_000, n in 12usize..60, p in 1usize..6) {
        let d = normal_data(n, p, seed);
        let c = cov_complete(&d, seg(0, n)).unwrap();
        for m in [CovMethod::Average, CovMethod::Lw, CovMethod::Pairwise] {
            let e = estimate(&d, seg(0, n), 5, m).unwrap();
            prop_assert!(close(&e.matrix, c.matrix.as_slice(), 1e-12));
            prop_assert_eq!(&e.means, &c.means);
        }
    }

    #[test]
    fn corrected_estimators_are_psd(seed in 0u64..10_000, n in 4usize..40, p in 1usize..7, keep in 0.3f64..1.0) {
        let d = masked(n, p, seed, keep);
        for m in [CovMethod::Lw, CovMethod::Pairwise] {
            if let Ok(e) = estimate(&d, seg(0, n), 2, m) {
                prop_assert!(min_eig(&e.matrix) >= -1e-8);
                prop_assert!(e.matrix.diag().iter().all(|&v| v > 0.0));
                prop_assert_eq!(e.matrix.dim(), e.subset.len());
            }
        }
    }
}
