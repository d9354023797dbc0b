//! Power analysis of a scoring rule on a test case.
//!
//! The score gap `delta = S(y, X_f) - S(y, X_gt)` is simulated over `K`
//! independent trials. Its mean and standard deviation feed a normal
//! approximation of the `n`-replicate average, from which power and the
//! minimal `n` reaching a target power follow in closed form.

use crate::error::{invalid, Error, Result};
use crate::numeric::{moments, norm_cdf, norm_quantile};
use crate::rng::Seed;
use crate::scoring::{Forecast, PairStrategy, ScoringRule};
use crate::testcases::{make_case, CasePair, Direction, Family, Subset, TestCaseId};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;

/// Full specification of one power computation.
#[derive(Debug, Clone)]
pub struct TrialConfig {
    pub case: CasePair,
    pub rule: ScoringRule,
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub alpha: f64,
    pub seed: Seed,
}

impl TrialConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(invalid(format!("need K >= 2 trials, got {}", self.k)));
        }
        check_alpha(self.alpha)?;
        if self.n < 1 {
            return Err(invalid("n must be >= 1"));
        }
        if self.m < 1 && !self.rule.needs_density() {
            return Err(invalid("m must be >= 1"));
        }
        self.rule.validate()?;
        if let Some(reason) = self.rule.undefined_reason(self.case.d, self.m) {
            return Err(invalid(reason));
        }
        Ok(())
    }

    pub fn run(&self) -> Result<PowerResult> {
        self.validate()?;
        let stats = estimate_delta(&self.case, &self.rule, self.m, self.k, self.seed)?;
        power_from_stats(&stats, self.n, self.alpha)
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    Ok(())
}

/// Monte Carlo summary of the score gap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaStats {
    pub mean: f64,
    /// Unbiased (`K - 1`) standard deviation.
    pub stddev: f64,
    pub k: usize,
    pub excess_kurtosis: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deltas: Option<Vec<f64>>,
}

impl DeltaStats {
    pub fn from_deltas(deltas: Vec<f64>, retain: bool) -> Self {
        let (mean, stddev, excess_kurtosis) = moments(&deltas);
        DeltaStats {
            mean,
            stddev,
            k: deltas.len(),
            excess_kurtosis,
            deltas: retain.then_some(deltas),
        }
    }

    /// Summary with the given moments and no raw values.
    pub fn from_moments(mean: f64, stddev: f64, k: usize) -> Self {
        DeltaStats { mean, stddev, k, excess_kurtosis: 0.0, deltas: None }
    }

    /// Standardized effect `mean / stddev`.
    pub fn effect(&self) -> f64 {
        self.mean / self.stddev
    }
}

/// A sample size that may be unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum SampleCount {
    Finite(u64),
    Infinite,
}

impl fmt::Display for SampleCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SampleCount::Finite(n) => write!(f, "{n}"),
            SampleCount::Infinite => write!(f, "inf"),
        }
    }
}

impl Serialize for SampleCount {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            SampleCount::Finite(n) => s.serialize_u64(*n),
            SampleCount::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for SampleCount {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            N(u64),
            S(String),
        }
        match Raw::deserialize(d)? {
            Raw::N(n) => Ok(SampleCount::Finite(n)),
            Raw::S(s) if s == "inf" => Ok(SampleCount::Infinite),
            Raw::S(s) => Err(serde::de::Error::custom(format!("bad sample count `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerResult {
    pub power: f64,
    /// Critical value `t_alpha` of the null `N(0, stddev^2 / n)`.
    pub critical_value: f64,
    /// Minimal `n` for 80% power at the same `alpha`.
    pub n_min_80: SampleCount,
    pub n: usize,
    pub alpha: f64,
    /// Set when `stddev == 0` and the normal approximation is undefined.
    pub degenerate: bool,
    pub stats: DeltaStats,
}

/// Options for [`estimate_delta_with`].
#[derive(Debug, Clone, Copy, Default)]
pub struct EstimateOptions {
    pub retain_deltas: bool,
    pub strategy: PairStrategy,
}

/// One draw of the score gap for trial `trial`.
pub fn delta_trial(
    case: &CasePair,
    rule: &ScoringRule,
    m: usize,
    seed: Seed,
    trial: usize,
    strategy: PairStrategy,
) -> Result<f64> {
    let t = trial as u64;
    let y = case.ground_truth.sample_one(seed.child("y", t));
    let delta = if rule.needs_density() {
        rule.score(&y, Forecast::Density(&case.forecast))? - rule.score(&y, Forecast::Density(&case.ground_truth))?
    } else {
        let x_gt = case.ground_truth.sample(m, seed.child("x-gt", t));
        let x_f = case.forecast.sample(m, seed.child("x-f", t));
        rule.score_with(&y, Forecast::Sample(x_f.view()), strategy)?
            - rule.score_with(&y, Forecast::Sample(x_gt.view()), strategy)?
    };
    if !delta.is_finite() {
        return Err(Error::NonFinite);
    }
    Ok(delta)
}

/// Estimates the moments of the score gap from `k` trials.
pub fn estimate_delta(case: &CasePair, rule: &ScoringRule, m: usize, k: usize, seed: Seed) -> Result<DeltaStats> {
    estimate_delta_with(case, rule, m, k, seed, EstimateOptions::default())
}

pub fn estimate_delta_with(
    case: &CasePair,
    rule: &ScoringRule,
    m: usize,
    k: usize,
    seed: Seed,
    opts: EstimateOptions,
) -> Result<DeltaStats> {
    if k < 2 {
        return Err(invalid(format!("need K >= 2 trials, got {k}")));
    }
    rule.validate()?;
    if let Some(reason) = rule.undefined_reason(case.d, m) {
        return Err(invalid(reason));
    }
    let deltas = (0..k)
        .into_par_iter()
        .map(|t| {
            delta_trial(case, rule, m, seed, t, opts.strategy).map_err(|e| Error::Trial { trial: t, source: Box::new(e) })
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(DeltaStats::from_deltas(deltas, opts.retain_deltas))
}

/// Power of a one-sided z-test at standardized effect `effect`.
pub fn power_at(effect: f64, n: usize, alpha: f64) -> f64 {
    // Exact at the null; the quantile round trip is only good to ~1e-11.
    if effect == 0.0 {
        return alpha;
    }
    norm_cdf((n as f64).sqrt() * effect - norm_quantile(1.0 - alpha))
}

/// Normal-approximation power of the `n`-replicate test.
pub fn power_from_stats(stats: &DeltaStats, n: usize, alpha: f64) -> Result<PowerResult> {
    if n < 1 {
        return Err(invalid("n must be >= 1"));
    }
    check_alpha(alpha)?;
    let z = norm_quantile(1.0 - alpha);
    let degenerate = !(stats.stddev > 0.0);
    let power = if degenerate {
        if stats.mean > 0.0 {
            1.0
        } else {
            alpha
        }
    } else {
        power_at(stats.effect(), n, alpha)
    };
    let stats = DeltaStats { deltas: None, ..stats.clone() };
    Ok(PowerResult {
        power,
        critical_value: z * stats.stddev / (n as f64).sqrt(),
        n_min_80: n_min(&stats, alpha, 0.8)?,
        n,
        alpha,
        degenerate,
        stats,
    })
}

/// Smallest `n` whose power reaches `target_power`.
pub fn n_min(stats: &DeltaStats, alpha: f64, target_power: f64) -> Result<SampleCount> {
    check_alpha(alpha)?;
    if !(target_power > 0.0 && target_power < 1.0) {
        return Err(invalid(format!("target power must lie in (0, 1), got {target_power}")));
    }
    if !(stats.mean > 0.0) {
        return Ok(SampleCount::Infinite);
    }
    if !(stats.stddev > 0.0) {
        return Ok(SampleCount::Finite(1));
    }
    let z = norm_quantile(1.0 - alpha) + norm_quantile(target_power);
    let n = (z / stats.effect()).powi(2).ceil();
    Ok(if n.is_finite() && n < u64::MAX as f64 {
        SampleCount::Finite((n as u64).max(1))
    } else {
        SampleCount::Infinite
    })
}

/// How tuning evaluates the NLL gap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TuneMethod {
    /// Closed-form moments.
    Analytic,
    /// Fixed-seed Monte Carlo moments.
    MonteCarlo,
    /// Closed form for Gaussian families, Monte Carlo otherwise.
    #[default]
    Auto,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TuneOptions {
    pub target_power: f64,
    pub alpha: f64,
    pub n: usize,
    pub method: TuneMethod,
    pub mc_samples: usize,
    pub seed: Seed,
}

impl Default for TuneOptions {
    fn default() -> Self {
        TuneOptions {
            target_power: 0.8,
            alpha: 0.05,
            n: 30,
            method: TuneMethod::Auto,
            mc_samples: 10_000,
            seed: Seed(0x7E5E_ED00),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub eps: f64,
    /// NLL power at `eps` under the method used.
    pub power: f64,
    pub method: TuneMethod,
    pub evaluations: usize,
}

fn affected_dims(id: TestCaseId, d: usize) -> f64 {
    match id.info().subset {
        Subset::Single => 1.0,
        Subset::All => d as f64,
    }
}

/// Closed-form mean and standard deviation of the NLL gap.
pub fn nll_gap_moments(id: TestCaseId, d: usize, eps: f64) -> Result<(f64, f64)> {
    let info = id.info();
    let k = affected_dims(id, d);
    // Zero-mean Gaussian pair: eigenvalues of Sigma_f^{-1} Sigma_gt with multiplicities.
    let spectral = |eigs: &[(f64, f64)]| -> (f64, f64) {
        let mut mean = 0.0;
        let mut var = 0.0;
        for &(lambda, mult) in eigs {
            mean += 0.5 * mult * (lambda - 1.0 - lambda.ln());
            var += 0.5 * mult * (lambda - 1.0).powi(2);
        }
        (mean, var.sqrt())
    };
    let df = d as f64;
    let invert = |eigs: Vec<(f64, f64)>| -> Vec<(f64, f64)> {
        if info.direction == Direction::Extra {
            eigs.into_iter().map(|(l, mult)| (1.0 / l, mult)).collect()
        } else {
            eigs
        }
    };
    // Validates eps and d exactly as the sampler would.
    make_case(id, d, eps)?;
    Ok(match info.family {
        Family::Normal if matches!(id, TestCaseId::NormalSingleMeanUp | TestCaseId::NormalAllMeanUp) => {
            (0.5 * k * eps * eps, k.sqrt() * eps.abs())
        }
        Family::Normal => spectral(&[(eps * eps, k)]),
        Family::Exponential => (k * (eps - 1.0 - eps.ln()), k.sqrt() * (eps - 1.0).abs()),
        Family::FullCov | Family::CheckerCov => {
            spectral(&invert(vec![(1.0 + (df - 1.0) * eps, 1.0), (1.0 - eps, df - 1.0)]))
        }
        Family::BlockCov => spectral(&invert(vec![(1.0 + eps, df / 2.0), (1.0 - eps, df / 2.0)])),
        Family::SkewNormal | Family::Mixture => return Err(Error::NoClosedForm(id.slug().to_string())),
    })
}

const MC_CHUNK: usize = 256;

/// Monte Carlo mean and standard deviation of the NLL gap from `samples`
/// ground-truth draws under a fixed seed.
pub fn nll_gap_moments_mc(case: &CasePair, samples: usize, seed: Seed) -> Result<(f64, f64)> {
    if samples < 2 {
        return Err(invalid("need at least 2 Monte Carlo samples"));
    }
    let chunks = samples.div_ceil(MC_CHUNK);
    let per_chunk = (0..chunks)
        .into_par_iter()
        .map(|c| -> Result<Vec<f64>> {
            let rows = MC_CHUNK.min(samples - c * MC_CHUNK);
            let y = case.ground_truth.sample(rows, seed.child("nll-gap", c as u64));
            y.rows()
                .into_iter()
                .map(|r| {
                    let r = r.to_slice().expect("standard layout");
                    Ok(case.ground_truth.log_density(r)? - case.forecast.log_density(r)?)
                })
                .collect()
        })
        .collect::<Result<Vec<_>>>()?;
    let deltas: Vec<f64> = per_chunk.into_iter().flatten().collect();
    let (mean, sd, _) = moments(&deltas);
    Ok((mean, sd))
}

/// Search space for `eps`: `eps = map(t)` for `t` in `(0, t_max)`, with
/// power increasing in `t` and `t = 0` the identity.
struct Path {
    map: fn(f64, f64) -> f64,
    identity: f64,
    t_max: Option<f64>,
    t_init: f64,
}

fn search_path(id: TestCaseId) -> Path {
    let info = id.info();
    let up = |identity: f64, t: f64| identity + t;
    let down = |identity: f64, t: f64| identity - t;
    let identity = info.identity_eps;
    match (info.family, info.direction) {
        (Family::Normal | Family::Exponential, Direction::Down) => {
            Path { map: down, identity, t_max: Some(1.0), t_init: 0.5 }
        }
        (Family::FullCov | Family::CheckerCov | Family::BlockCov, _) => {
            Path { map: up, identity, t_max: Some(1.0), t_init: 0.5 }
        }
        _ => Path { map: up, identity, t_max: None, t_init: 1.0 },
    }
}

/// Finds the `eps` at which the NLL reaches the target power.
pub fn tune_epsilon(id: TestCaseId, d: usize, opts: &TuneOptions) -> Result<TuneResult> {
    check_alpha(opts.alpha)?;
    if !(opts.target_power > opts.alpha && opts.target_power < 1.0) {
        return Err(invalid(format!("target power must lie in (alpha, 1), got {}", opts.target_power)));
    }
    if opts.n < 1 {
        return Err(invalid("n must be >= 1"));
    }
    let family = id.info().family;
    let method = match opts.method {
        TuneMethod::Auto => match family {
            Family::Exponential | Family::SkewNormal | Family::Mixture => TuneMethod::MonteCarlo,
            _ => TuneMethod::Analytic,
        },
        m => m,
    };
    let path = search_path(id);
    let eps_at = |t: f64| (path.map)(path.identity, t);
    let mut evaluations = 0usize;
    let mut power = |t: f64| -> Result<f64> {
        evaluations += 1;
        let eps = eps_at(t);
        let (mean, sd) = match method {
            TuneMethod::MonteCarlo => nll_gap_moments_mc(&make_case(id, d, eps)?, opts.mc_samples, opts.seed)?,
            _ => nll_gap_moments(id, d, eps)?,
        };
        Ok(if sd > 0.0 { power_at(mean / sd, opts.n, opts.alpha) } else { opts.alpha })
    };

    let target = opts.target_power;
    let (mut lo, mut hi) = (0.0, path.t_init);
    let mut p_hi = power(hi)?;
    let mut expansions = 0;
    while p_hi < target {
        expansions += 1;
        if expansions > 200 {
            return Err(Error::BracketFailure { target, lo: eps_at(0.0), hi: eps_at(hi) });
        }
        lo = hi;
        hi = match path.t_max {
            Some(max) => hi + 0.5 * (max - hi),
            None => 2.0 * hi,
        };
        p_hi = power(hi)?;
    }

    let mut p_mid = p_hi;
    let mut mid = hi;
    for _ in 0..200 {
        mid = 0.5 * (lo + hi);
        p_mid = power(mid)?;
        let done = match method {
            TuneMethod::MonteCarlo => (hi - lo) < 1e-6 * eps_at(mid).abs(),
            _ => (p_mid - target).abs() < 1e-12 || (hi - lo) < 1e-15 * eps_at(mid).abs().max(1e-300),
        };
        if done {
            break;
        }
        if p_mid < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(TuneResult { eps: eps_at(mid), power: p_mid, method, evaluations })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats(mean: f64, sd: f64) -> DeltaStats {
        DeltaStats::from_moments(mean, sd, 1000)
    }

    #[test]
    fn zero_effect_gives_alpha() {
        let r = power_from_stats(&stats(0.0, 1.3), 30, 0.05).unwrap();
        assert!((r.power - 0.05).abs() < 1e-9);
        assert_eq!(r.n_min_80, SampleCount::Infinite);
    }

    #[test]
    fn eighty_percent_reference_point() {
        let s = stats(2.4865 / 30f64.sqrt(), 1.0);
        let r = power_from_stats(&s, 30, 0.05).unwrap();
        assert!((r.power - 0.8).abs() < 1e-4, "{}", r.power);
        assert_eq!(n_min(&s, 0.05, 0.8).unwrap(), SampleCount::Finite(30));
        assert_eq!(r.n_min_80, SampleCount::Finite(30));
        assert!((r.critical_value - 1.644_853_626_951_472 / 30f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn degenerate_variance() {
        let r = power_from_stats(&stats(0.5, 0.0), 30, 0.05).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.power, 1.0);
        let r = power_from_stats(&stats(0.0, 0.0), 30, 0.05).unwrap();
        assert_eq!(r.power, 0.05);
    }

    #[test]
    fn quadratic_n_min_law() {
        let a = n_min(&stats(0.2, 1.0), 0.05, 0.8).unwrap();
        let b = n_min(&stats(0.1, 1.0), 0.05, 0.8).unwrap();
        match (a, b) {
            (SampleCount::Finite(a), SampleCount::Finite(b)) => {
                assert!(b >= 4 * a - 4 && b <= 4 * a, "{a} {b}");
            }
            _ => panic!(),
        }
        assert_eq!(n_min(&stats(-0.1, 1.0), 0.05, 0.8).unwrap(), SampleCount::Infinite);
    }

    #[test]
    fn sample_count_serde() {
        let v = serde_json::to_string(&[SampleCount::Finite(3), SampleCount::Infinite]).unwrap();
        assert_eq!(v, r#"[3,"inf"]"#);
        let back: Vec<SampleCount> = serde_json::from_str(&v).unwrap();
        assert_eq!(back, vec![SampleCount::Finite(3), SampleCount::Infinite]);
    }

    #[test]
    fn closed_form_moments_match_hand_algebra() {
        let (m, s) = nll_gap_moments(TestCaseId::NormalSingleMeanUp, 8, 0.9079).unwrap();
        assert!((m - 0.9079f64.powi(2) / 2.0).abs() < 1e-15);
        assert!((s - 0.9079).abs() < 1e-15);
        let (m, s) = nll_gap_moments(TestCaseId::NormalAllMeanUp, 16, 0.2270).unwrap();
        assert!((m - 16.0 * 0.2270f64.powi(2) / 2.0).abs() < 1e-12);
        assert!((s - 4.0 * 0.2270).abs() < 1e-12);
        let eps: f64 = 0.58;
        let (m, s) = nll_gap_moments(TestCaseId::NormalSingleStdDown, 8, eps).unwrap();
        assert!((m - ((eps * eps - 1.0) / 2.0 - eps.ln())).abs() < 1e-14);
        assert!((s - (eps * eps - 1.0).abs() / 2f64.sqrt()).abs() < 1e-14);
        assert!(matches!(nll_gap_moments(TestCaseId::SkewAllDown, 8, 1.0), Err(Error::NoClosedForm(_))));
    }

    #[test]
    fn full_and_checker_share_moments() {
        for d in [16, 33, 64] {
            let a = nll_gap_moments(TestCaseId::FullCovMissing, d, 0.1).unwrap();
            let b = nll_gap_moments(TestCaseId::CheckerCovMissing, d, 0.1).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn analytic_tuning_reference_values() {
        let opts = TuneOptions { method: TuneMethod::Analytic, ..Default::default() };
        let t = tune_epsilon(TestCaseId::NormalSingleMeanUp, 16, &opts).unwrap();
        assert!((t.eps - 0.9079).abs() < 1e-3, "{}", t.eps);
        assert!((t.power - 0.8).abs() < 1e-9);
        let t = tune_epsilon(TestCaseId::NormalSingleStdUp, 16, &opts).unwrap();
        assert!((t.eps - 2.4514).abs() < 1e-3, "{}", t.eps);
    }

    #[test]
    fn config_validation() {
        let case = make_case(TestCaseId::NormalSingleMeanUp, 4, 0.5).unwrap();
        let cfg = TrialConfig {
            case,
            rule: ScoringRule::DawidSebastiani,
            m: 4,
            n: 30,
            k: 10,
            alpha: 0.05,
            seed: Seed(1),
        };
        assert!(cfg.validate().is_err());
        assert!(TrialConfig { m: 5, ..cfg.clone() }.validate().is_ok());
        assert!(TrialConfig { m: 5, k: 1, ..cfg.clone() }.validate().is_err());
        assert!(TrialConfig { m: 5, alpha: 1.0, ..cfg }.validate().is_err());
    }

    #[allow(dead_code)]
    fn _assert_send_sync() {
        fn check<T: Send + Sync>() {}
        check::<CasePair>();
        check::<crate::distributions::Distribution>();
        check::<ScoringRule>();
    }
}
