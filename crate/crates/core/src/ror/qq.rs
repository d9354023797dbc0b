use crate::error::{invalid, Result};
use crate::numeric::{moments, norm_quantile};
use crate::rng::Seed;
use crate::scoring::empirical_quantile;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Excess-kurtosis quantiles at which cases are picked for Q-Q inspection.
pub const KURTOSIS_QUANTILES: [f64; 4] = [0.02, 0.05, 0.95, 0.98];

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct QqOptions {
    pub n: usize,
    pub resamples: usize,
    pub seed: Seed,
    /// Relative tolerance on the tail spread ratio before flagging.
    pub tail_tolerance: f64,
}

impl Default for QqOptions {
    fn default() -> Self {
        QqOptions { n: 30, resamples: 10_000, seed: Seed(0), tail_tolerance: 0.15 }
    }
}

/// Empirical versus normal quantiles of `n`-replicate means of the deltas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QqReport {
    pub n: usize,
    pub resamples: usize,
    pub levels: Vec<f64>,
    pub empirical: Vec<f64>,
    /// Normal quantiles with the deltas' mean and standard error.
    pub theoretical: Vec<f64>,
    /// Largest quantile gap in units of the deltas' standard deviation.
    pub max_gap_sigma: f64,
    /// Least-squares fit of standardized empirical on standard normal quantiles.
    pub slope: f64,
    pub intercept: f64,
    /// `(q99 - q01) / (q75 - q25)` relative to its normal value.
    pub tail_ratio: f64,
    pub tail_deviation: bool,
}

/// Bootstraps means of `n` deltas and compares their quantiles with the
/// normal approximation used by the power computation.
pub fn qq_diagnostic(deltas: &[f64], opts: &QqOptions) -> Result<QqReport> {
    if deltas.len() < 2 {
        return Err(invalid("need at least two raw deltas"));
    }
    if opts.n < 1 || opts.resamples < 2 {
        return Err(invalid("n and resamples must be positive"));
    }
    let (mean, sd, _) = moments(deltas);
    if !(sd > 0.0) {
        return Err(invalid("deltas have zero spread"));
    }
    let mut rng = opts.seed.rng();
    let k = deltas.len();
    let mut means: Vec<f64> = (0..opts.resamples)
        .map(|_| (0..opts.n).map(|_| deltas[rng.random_range(0..k)]).sum::<f64>() / opts.n as f64)
        .collect();
    means.sort_by(f64::total_cmp);

    let levels: Vec<f64> = (1..=99).map(|i| i as f64 / 100.0).collect();
    let se = sd / (opts.n as f64).sqrt();
    let z: Vec<f64> = levels.iter().map(|&p| norm_quantile(p)).collect();
    let empirical: Vec<f64> = levels.iter().map(|&p| empirical_quantile(&means, p)).collect();
    let theoretical: Vec<f64> = z.iter().map(|&z| mean + se * z).collect();
    let max_gap_sigma =
        empirical.iter().zip(&theoretical).map(|(e, t)| (e - t).abs()).fold(0.0, f64::max) / sd;

    let standardized: Vec<f64> = empirical.iter().map(|e| (e - mean) / se).collect();
    let zbar = z.iter().sum::<f64>() / z.len() as f64;
    let sbar = standardized.iter().sum::<f64>() / z.len() as f64;
    let sxy: f64 = z.iter().zip(&standardized).map(|(a, b)| (a - zbar) * (b - sbar)).sum();
    let sxx: f64 = z.iter().map(|a| (a - zbar).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = sbar - slope * zbar;

    let q = |p: f64| empirical_quantile(&means, p);
    let normal_ratio = (norm_quantile(0.99) - norm_quantile(0.01)) / (norm_quantile(0.75) - norm_quantile(0.25));
    let tail_ratio = (q(0.99) - q(0.01)) / (q(0.75) - q(0.25)) / normal_ratio;

    Ok(QqReport {
        n: opts.n,
        resamples: opts.resamples,
        levels,
        empirical,
        theoretical,
        max_gap_sigma,
        slope,
        intercept,
        tail_ratio,
        tail_deviation: (tail_ratio - 1.0).abs() > opts.tail_tolerance,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KurtosisPick<T> {
    pub quantile: f64,
    pub item: T,
    pub excess_kurtosis: f64,
}

/// Picks the items whose excess kurtosis sits at each of `quantiles` of the
/// pooled kurtosis values (nearest rank).
pub fn kurtosis_selection<T: Clone>(items: &[(T, f64)], quantiles: &[f64]) -> Vec<KurtosisPick<T>> {
    let mut ranked: Vec<&(T, f64)> = items.iter().filter(|(_, k)| k.is_finite()).collect();
    if ranked.is_empty() {
        return Vec::new();
    }
    ranked.sort_by(|a, b| a.1.total_cmp(&b.1));
    quantiles
        .iter()
        .map(|&q| {
            let idx = ((q * ranked.len() as f64).ceil() as usize).clamp(1, ranked.len()) - 1;
            KurtosisPick { quantile: q, item: ranked[idx].0.clone(), excess_kurtosis: ranked[idx].1 }
        })
        .collect()
}
