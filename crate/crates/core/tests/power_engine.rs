use powermap::numeric::norm_quantile;
use powermap::power::*;
use powermap::scoring::ScoringRule;
use powermap::testcases::{make_case, CasePair, Family, TestCaseId};
use powermap::Seed;

const SEED: Seed = Seed(2023);

fn stats(case: &CasePair, rule: &ScoringRule, m: usize, k: usize) -> DeltaStats {
    estimate_delta_with(case, rule, m, k, SEED, EstimateOptions { retain_deltas: true, ..Default::default() }).unwrap()
}

#[test]
fn identical_pair_has_vanishing_gap() {
    for (id, rule) in [
        (TestCaseId::NormalSingleMeanUp, ScoringRule::crps_q()),
        (TestCaseId::FullCovMissing, ScoringRule::EsPartial { p: 1.0 }),
        (TestCaseId::NormalAllStdDown, ScoringRule::Variogram { p: 1.0 }),
        (TestCaseId::MixtureExtra, ScoringRule::Nll),
    ] {
        let case = make_case(id, 8, id.identity_eps()).unwrap();
        let s = stats(&case, &rule, 32, 1000);
        assert!(s.mean.abs() <= 3.0 * s.stddev / (s.k as f64).sqrt(), "{id:?} {rule}: {s:?}");
    }
}

/// Mean and standard deviation within three standard errors of the exact law.
fn assert_gaussian_gap(s: &DeltaStats, mu: f64, sigma: f64) {
    let k = s.k as f64;
    assert!((s.mean - mu).abs() < 3.0 * sigma / k.sqrt(), "mean {} vs {mu}", s.mean);
    // Standard error of the sample sd of a Gaussian is sigma / sqrt(2(K-1)).
    assert!((s.stddev - sigma).abs() < 3.0 * sigma / (2.0 * (k - 1.0)).sqrt(), "sd {} vs {sigma}", s.stddev);
}

#[test]
fn mean_shift_nll_gap_follows_exact_law() {
    let eps: f64 = 0.9079;
    let case = make_case(TestCaseId::NormalSingleMeanUp, 16, eps).unwrap();
    let s = stats(&case, &ScoringRule::Nll, 1, 1000);
    assert!((eps * eps / 2.0 - 0.4121).abs() < 1e-4);
    assert_gaussian_gap(&s, eps * eps / 2.0, eps);
    // The gap is the linear map eps * y - eps^2 / 2 of the first coordinate.
    let y0 = case.ground_truth.sample_one(SEED.child("y", 0))[0];
    assert!((s.deltas.as_ref().unwrap()[0] - (eps * y0 - eps * eps / 2.0)).abs() < 1e-12);

    let (d, eps) = (16usize, 0.2270f64);
    let case = make_case(TestCaseId::NormalAllMeanUp, d, eps).unwrap();
    let s = stats(&case, &ScoringRule::Nll, 1, 1000);
    let (mu, sigma) = (d as f64 * eps * eps / 2.0, eps * (d as f64).sqrt());
    assert!((mu - 0.4123).abs() < 1e-4 && (sigma - 0.9080).abs() < 1e-4);
    assert_gaussian_gap(&s, mu, sigma);
}

#[test]
fn closed_form_moments_match_monte_carlo() {
    for id in TestCaseId::all() {
        let d = 16;
        let Ok(eps) = tune_epsilon(*id, d, &TuneOptions { method: TuneMethod::Analytic, ..Default::default() }) else {
            assert!(matches!(id.info().family, Family::SkewNormal | Family::Mixture));
            continue;
        };
        let (mu, sigma) = nll_gap_moments(*id, d, eps.eps).unwrap();
        let (mc_mu, mc_sigma) = nll_gap_moments_mc(&make_case(*id, d, eps.eps).unwrap(), 200_000, SEED).unwrap();
        assert!((mc_mu - mu).abs() < 0.02 * mu.max(sigma), "{id:?}: {mc_mu} vs {mu}");
        assert!((mc_sigma / sigma - 1.0).abs() < 0.03, "{id:?}: {mc_sigma} vs {sigma}");
    }
}

#[test]
fn analytic_and_monte_carlo_tuning_agree() {
    let analytic = TuneOptions { method: TuneMethod::Analytic, ..Default::default() };
    let mc = TuneOptions { method: TuneMethod::MonteCarlo, mc_samples: 200_000, seed: SEED, ..Default::default() };
    for id in TestCaseId::all() {
        if !matches!(id.info().family, Family::Normal | Family::FullCov | Family::CheckerCov | Family::BlockCov) {
            continue;
        }
        let a = tune_epsilon(*id, 16, &analytic).unwrap();
        let b = tune_epsilon(*id, 16, &mc).unwrap();
        assert_eq!(b.method, TuneMethod::MonteCarlo);
        assert!((a.eps - b.eps).abs() / a.eps < 0.02, "{id:?}: {} vs {}", a.eps, b.eps);
    }
}

#[test]
fn full_and_checker_tune_identically() {
    for d in [16, 64, 512] {
        for (a, b) in [
            (TestCaseId::FullCovMissing, TestCaseId::CheckerCovMissing),
            (TestCaseId::FullCovExtra, TestCaseId::CheckerCovExtra),
        ] {
            let opts = TuneOptions::default();
            assert_eq!(tune_epsilon(a, d, &opts).unwrap().eps, tune_epsilon(b, d, &opts).unwrap().eps);
        }
    }
}

#[test]
fn mean_shift_power_depends_on_total_shift_only() {
    let base = 0.9079;
    for d in [4usize, 16, 64, 256] {
        let eps = base / (d as f64).sqrt();
        let (mu, sigma) = nll_gap_moments(TestCaseId::NormalAllMeanUp, d, eps).unwrap();
        let (mu1, sigma1) = nll_gap_moments(TestCaseId::NormalSingleMeanUp, d, base).unwrap();
        assert!((power_at(mu / sigma, 30, 0.05) - power_at(mu1 / sigma1, 30, 0.05)).abs() < 1e-12);
        let t = tune_epsilon(TestCaseId::NormalAllMeanUp, d, &TuneOptions::default()).unwrap();
        assert!((t.eps * (d as f64).sqrt() - 0.9079).abs() < 1e-3, "d={d}: {}", t.eps);
    }
}

#[test]
fn estimates_are_independent_of_worker_count() {
    let case = make_case(TestCaseId::FullCovMissing, 16, 0.2055).unwrap();
    let rule = ScoringRule::EsPartial { p: 1.0 };
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| stats(&case, &rule, 64, 300))
    };
    let one = run(1);
    let four = run(4);
    assert_eq!(one, four);
    assert_eq!(one.mean.to_bits(), four.mean.to_bits());
}

#[test]
fn trial_errors_carry_context() {
    let case = make_case(TestCaseId::NormalAllMeanUp, 8, 0.5).unwrap();
    // Constant columns make the DS covariance singular on every trial.
    let err = estimate_delta(&case, &ScoringRule::DawidSebastiani, 8, 10, SEED).unwrap_err();
    assert!(err.to_string().contains("m = 8"), "{err}");
}

/// Simulated rejection rate of the n-replicate test versus the normal
/// approximation, for every case whose gap kurtosis is not in the top 5%.
#[test]
fn normal_approximation_matches_simulated_rejections() {
    // Large K so the moment estimates are not the dominant error.
    let (d, n, alpha, k) = (16, 30, 0.05, 100_000);
    let ensembles = 2000;
    let z = norm_quantile(1.0 - alpha);
    let mut rows = Vec::new();
    for id in TestCaseId::all() {
        let eps = tune_epsilon(*id, d, &TuneOptions::default()).unwrap().eps;
        let case = make_case(*id, d, eps).unwrap();
        let s = stats(&case, &ScoringRule::Nll, 1, k);
        let predicted = power_from_stats(&s, n, alpha).unwrap().power;
        let critical = z * s.stddev / (n as f64).sqrt();
        let fresh = Seed(99).child(id.slug(), 0);
        let big = estimate_delta_with(
            &case,
            &ScoringRule::Nll,
            1,
            ensembles * n,
            fresh,
            EstimateOptions { retain_deltas: true, ..Default::default() },
        )
        .unwrap();
        let deltas = big.deltas.unwrap();
        let rejected = deltas.chunks(n).filter(|c| c.iter().sum::<f64>() / n as f64 >= critical).count();
        rows.push((*id, s.excess_kurtosis.abs(), predicted, rejected as f64 / ensembles as f64));
    }
    let mut kurt: Vec<f64> = rows.iter().map(|r| r.1).collect();
    kurt.sort_by(f64::total_cmp);
    let cutoff = kurt[((0.95 * kurt.len() as f64).ceil() as usize).min(kurt.len()) - 1];
    for (id, k, predicted, rate) in rows {
        if k >= cutoff {
            continue;
        }
        assert!((rate - predicted).abs() <= 0.05, "{id:?}: simulated {rate} vs predicted {predicted}");
    }
}
