//! Distributional checks of the samplers against independent references.

use ndarray::Array2;
use powermap::distributions::{CovStructure, Distribution};
use powermap::numeric::moments;
use powermap::testcases::{make_case, TestCaseId};
use powermap::Seed;
use rand::seq::SliceRandom;

/// Two-sample energy-distance permutation test; returns the p-value.
fn energy_test(a: &Array2<f64>, b: &Array2<f64>, permutations: usize, seed: Seed) -> f64 {
    let rows: Vec<&[f64]> = a.rows().into_iter().chain(b.rows()).map(|r| r.to_slice().unwrap()).collect();
    let n = rows.len();
    let mut dist = vec![0.0f64; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let v = rows[i].iter().zip(rows[j]).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            dist[i * n + j] = v;
            dist[j * n + i] = v;
        }
    }
    let na = a.nrows();
    let stat = |labels: &[bool]| -> f64 {
        let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
        for i in 0..n {
            let row = &dist[i * n..(i + 1) * n];
            for j in i + 1..n {
                match (labels[i], labels[j]) {
                    (true, true) => aa += row[j],
                    (false, false) => bb += row[j],
                    _ => ab += row[j],
                }
            }
        }
        let (fa, fb) = (na as f64, (n - na) as f64);
        2.0 * ab / (fa * fb) - 2.0 * aa / (fa * fa) - 2.0 * bb / (fb * fb)
    };
    let mut labels: Vec<bool> = (0..n).map(|i| i < na).collect();
    let observed = stat(&labels);
    let mut rng = seed.rng();
    let mut exceed = 0;
    for _ in 0..permutations {
        labels.shuffle(&mut rng);
        if stat(&labels) >= observed {
            exceed += 1;
        }
    }
    (1 + exceed) as f64 / (1 + permutations) as f64
}

const M: usize = 1000;
const PERMS: usize = 99;

#[test]
fn structured_sampler_matches_cholesky_in_law() {
    let panel = [
        (4, CovStructure::FullConstant, 0.3),
        (8, CovStructure::FullConstant, -0.1),
        (4, CovStructure::Checker, 0.4),
        (8, CovStructure::Checker, 0.2),
        (4, CovStructure::BlockPairs, 0.5),
        (8, CovStructure::BlockPairs, -0.6),
        (4, CovStructure::MixtureMatched, 0.8),
        (8, CovStructure::MixtureMatched, 0.3),
    ];
    for (i, (d, s, eps)) in panel.into_iter().enumerate() {
        let g = Distribution::gaussian(d, s, eps).unwrap();
        let fast = g.sample(M, Seed(2023).child("structured", i as u64));
        let dense = g.sample_cholesky(M, Seed(2023).child("cholesky", i as u64)).unwrap();
        let p = energy_test(&fast, &dense, PERMS, Seed(i as u64));
        assert!(p > 0.01, "{s:?} d={d} eps={eps}: p = {p}");
    }
}

#[test]
fn energy_test_detects_missing_correlation() {
    let g = Distribution::gaussian(8, CovStructure::FullConstant, 0.3).unwrap();
    let id = Distribution::gaussian(8, CovStructure::Identity, 0.0).unwrap();
    let p = energy_test(&g.sample(M, Seed(1)), &id.sample_cholesky(M, Seed(2)).unwrap(), PERMS, Seed(3));
    assert!(p <= 0.01, "{p}");
}

fn ks_statistic(a: &mut [f64], b: &mut [f64]) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut best) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        best = best.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    best
}

#[test]
fn single_cases_only_alter_the_first_column() {
    let m = 100_000;
    // Two-sample KS critical value at alpha = 0.01 for equal sizes.
    let crit = 1.628 * (2.0 / m as f64).sqrt();
    for (id, eps) in [
        (TestCaseId::NormalSingleMeanUp, 0.9079),
        (TestCaseId::NormalSingleStdUp, 2.4514),
        (TestCaseId::ExpSingleMeanUp, 3.0),
    ] {
        let pair = make_case(id, 4, eps).unwrap();
        let gt = pair.ground_truth.sample(m, Seed(10));
        let f = pair.forecast.sample(m, Seed(11));
        for j in 1..4 {
            let ks = ks_statistic(&mut gt.column(j).to_vec(), &mut f.column(j).to_vec());
            assert!(ks < crit, "{id:?} column {j}: {ks}");
        }
        let ks0 = ks_statistic(&mut gt.column(0).to_vec(), &mut f.column(0).to_vec());
        assert!(ks0 > 10.0 * crit, "{id:?} first column not altered");
    }
}

#[test]
fn covariance_families_have_standard_normal_marginals() {
    let m = 100_000;
    for (id, eps) in [
        (TestCaseId::FullCovMissing, 0.2055),
        (TestCaseId::FullCovExtra, 0.1268),
        (TestCaseId::CheckerCovMissing, 0.2055),
        (TestCaseId::CheckerCovExtra, 0.1268),
        (TestCaseId::BlockCovMissing, 0.3058),
        (TestCaseId::BlockCovExtra, 0.3201),
    ] {
        let pair = make_case(id, 16, eps).unwrap();
        for dist in [&pair.ground_truth, &pair.forecast] {
            let x = dist.sample(m, Seed(5));
            for j in [0, 7, 15] {
                let (mean, sd, _) = moments(&x.column(j).to_vec());
                assert!(mean.abs() < 0.015, "{id:?} col {j} mean {mean}");
                assert!((sd * sd - 1.0).abs() < 0.02, "{id:?} col {j} var {}", sd * sd);
            }
        }
    }
}
