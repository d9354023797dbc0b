//! Scoring rules and their finite-sample estimators.
//!
//! All sample-based rules take the observation `y` (length `d`) and a forecast
//! sample `x` (`m x d`, one draw per row). Lower is better for every rule.

use crate::distributions::Distribution;
use crate::error::{invalid, Error, Result};
use crate::numeric::KahanSum;
use nalgebra::{DMatrix, DVector};
use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Loop schedule for the O(m^2) pair sums of CRPS-E and ES-Full.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairStrategy {
    /// Row-by-row double loop, compensated per pair.
    Exact,
    /// Tiled double loop, compensated per tile.
    #[default]
    Blocked,
}

const PAIR_TILE: usize = 64;

/// The 19 CRPS-Q levels 0.05, 0.10, ..., 0.95.
pub fn default_quantile_levels() -> Vec<f64> {
    (1..=19).map(|i| i as f64 / 20.0).collect()
}

/// A scoring rule together with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ScoringRule {
    Nll,
    CrpsQ { levels: Vec<f64> },
    CrpsE,
    EsFull { p: f64 },
    EsPartial { p: f64 },
    Variogram { p: f64 },
    DawidSebastiani,
}

impl ScoringRule {
    pub fn crps_q() -> Self {
        ScoringRule::CrpsQ { levels: default_quantile_levels() }
    }

    /// The seven rules of the benchmark with default parameters.
    pub fn all() -> Vec<ScoringRule> {
        vec![
            ScoringRule::Nll,
            ScoringRule::crps_q(),
            ScoringRule::CrpsE,
            ScoringRule::EsFull { p: 1.0 },
            ScoringRule::EsPartial { p: 1.0 },
            ScoringRule::Variogram { p: 1.0 },
            ScoringRule::DawidSebastiani,
        ]
    }

    /// Only NLL consumes a forecast density; the others consume samples.
    pub fn needs_density(&self) -> bool {
        matches!(self, ScoringRule::Nll)
    }

    /// Whether evaluation cost grows as `m^2`.
    pub fn is_quadratic_in_m(&self) -> bool {
        matches!(self, ScoringRule::CrpsE | ScoringRule::EsFull { .. })
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ScoringRule::EsFull { p } | ScoringRule::EsPartial { p } => {
                if !(*p > 0.0 && *p < 2.0) {
                    return Err(invalid(format!("energy score needs 0 < p < 2, got {p}")));
                }
            }
            ScoringRule::Variogram { p } => {
                if !(*p > 0.0) || !p.is_finite() {
                    return Err(invalid(format!("variogram needs p > 0, got {p}")));
                }
            }
            ScoringRule::CrpsQ { levels } => check_levels(levels)?,
            _ => {}
        }
        Ok(())
    }

    /// Checks that a `(d, m)` configuration is admissible, returning a
    /// reason when the rule is undefined there.
    pub fn undefined_reason(&self, d: usize, m: usize) -> Option<String> {
        match self {
            ScoringRule::Nll => None,
            ScoringRule::DawidSebastiani if m <= d => Some(format!("ds undefined: m = {m} <= d = {d}")),
            ScoringRule::Variogram { .. } if d < 2 => Some("variogram needs d >= 2".into()),
            ScoringRule::Variogram { .. } if m < 1 => Some("variogram needs m >= 1".into()),
            ScoringRule::CrpsQ { .. } | ScoringRule::CrpsE | ScoringRule::EsFull { .. } | ScoringRule::EsPartial { .. }
                if m < 2 =>
            {
                Some(format!("{self} needs m >= 2"))
            }
            _ => None,
        }
    }

    pub fn score(&self, y: &[f64], forecast: Forecast<'_>) -> Result<f64> {
        self.score_with(y, forecast, PairStrategy::default())
    }

    pub fn score_with(&self, y: &[f64], forecast: Forecast<'_>, strategy: PairStrategy) -> Result<f64> {
        match (self, forecast) {
            (ScoringRule::Nll, Forecast::Density(dist)) => nll(y, dist),
            (ScoringRule::Nll, Forecast::Sample(_)) => Err(Error::DensityRequired(self.to_string())),
            (_, Forecast::Density(_)) => Err(Error::SampleRequired(self.to_string())),
            (ScoringRule::CrpsQ { levels }, Forecast::Sample(x)) => crps_q(y, x, levels),
            (ScoringRule::CrpsE, Forecast::Sample(x)) => crps_e_with(y, x, strategy),
            (ScoringRule::EsFull { p }, Forecast::Sample(x)) => es_full_with(y, x, *p, strategy),
            (ScoringRule::EsPartial { p }, Forecast::Sample(x)) => es_partial(y, x, *p),
            (ScoringRule::Variogram { p }, Forecast::Sample(x)) => variogram(y, x, *p),
            (ScoringRule::DawidSebastiani, Forecast::Sample(x)) => dawid_sebastiani(y, x),
        }
    }

    /// Like [`score`](Self::score) but wraps the value with its context.
    pub fn evaluate(&self, y: &[f64], forecast: Forecast<'_>) -> Result<ScoreValue> {
        let m = match forecast {
            Forecast::Sample(x) => x.nrows(),
            Forecast::Density(_) => 0,
        };
        let value = self.score(y, forecast)?;
        if !value.is_finite() {
            return Err(Error::NonFinite);
        }
        Ok(ScoreValue { value, rule: self.clone(), d: y.len(), m })
    }
}

impl fmt::Display for ScoringRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let with_p = |f: &mut fmt::Formatter<'_>, name: &str, p: f64| {
            if p == 1.0 {
                write!(f, "{name}")
            } else {
                write!(f, "{name}-p{p}")
            }
        };
        match self {
            ScoringRule::Nll => write!(f, "nll"),
            ScoringRule::CrpsQ { levels } => {
                if *levels == default_quantile_levels() {
                    write!(f, "crps-q")
                } else {
                    let l: Vec<String> = levels.iter().map(|q| q.to_string()).collect();
                    write!(f, "crps-q[{}]", l.join(","))
                }
            }
            ScoringRule::CrpsE => write!(f, "crps-e"),
            ScoringRule::EsFull { p } => with_p(f, "es-full", *p),
            ScoringRule::EsPartial { p } => with_p(f, "es-partial", *p),
            ScoringRule::Variogram { p } => with_p(f, "vg", *p),
            ScoringRule::DawidSebastiani => write!(f, "ds"),
        }
    }
}

impl FromStr for ScoringRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let parse_p = |rest: &str| -> Result<f64> {
            let v = rest
                .strip_prefix("-p")
                .or_else(|| rest.strip_prefix(":p="))
                .or_else(|| rest.strip_prefix("@p="))
                .ok_or_else(|| Error::Parse(format!("bad rule suffix in `{s}`")))?;
            v.parse::<f64>().map_err(|_| Error::Parse(format!("bad power parameter in `{s}`")))
        };
        let rule = if let Some(rest) = s.strip_prefix("crps-q") {
            if rest.is_empty() {
                ScoringRule::crps_q()
            } else {
                let inner = rest
                    .strip_prefix('[')
                    .and_then(|r| r.strip_suffix(']'))
                    .ok_or_else(|| Error::Parse(format!("bad quantile list in `{s}`")))?;
                let levels = inner
                    .split(',')
                    .map(|t| t.trim().parse::<f64>().map_err(|_| Error::Parse(format!("bad level `{t}`"))))
                    .collect::<Result<Vec<_>>>()?;
                ScoringRule::CrpsQ { levels }
            }
        } else {
            const NAMES: [&str; 8] = ["nll", "crps-e", "dawid-sebastiani", "ds", "es-full", "es-partial", "variogram", "vg"];
            let name = NAMES
                .iter()
                .find(|n| s.starts_with(**n))
                .ok_or_else(|| Error::Parse(format!("unknown scoring rule `{s}`")))?;
            let rest = &s[name.len()..];
            let p = if rest.is_empty() { 1.0 } else { parse_p(rest)? };
            match *name {
                "nll" if rest.is_empty() => ScoringRule::Nll,
                "crps-e" if rest.is_empty() => ScoringRule::CrpsE,
                "ds" | "dawid-sebastiani" if rest.is_empty() => ScoringRule::DawidSebastiani,
                "es-full" => ScoringRule::EsFull { p },
                "es-partial" => ScoringRule::EsPartial { p },
                "vg" | "variogram" => ScoringRule::Variogram { p },
                _ => return Err(Error::Parse(format!("unknown scoring rule `{s}`"))),
            }
        };
        rule.validate()?;
        Ok(rule)
    }
}

impl TryFrom<String> for ScoringRule {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ScoringRule> for String {
    fn from(r: ScoringRule) -> String {
        r.to_string()
    }
}

/// What a rule is scored against.
#[derive(Debug, Clone, Copy)]
pub enum Forecast<'a> {
    Sample(ArrayView2<'a, f64>),
    Density(&'a Distribution),
}

/// A score with the context it was computed in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreValue {
    pub value: f64,
    pub rule: ScoringRule,
    pub d: usize,
    pub m: usize,
}

fn check_levels(levels: &[f64]) -> Result<()> {
    if levels.is_empty() {
        return Err(invalid("quantile level list is empty"));
    }
    if levels.iter().any(|q| !(*q > 0.0 && *q < 1.0)) {
        return Err(invalid("quantile levels must lie in (0, 1)"));
    }
    if levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid("quantile levels must be strictly increasing"));
    }
    Ok(())
}

fn check_sample(y: &[f64], x: &ArrayView2<'_, f64>, min_rows: usize) -> Result<()> {
    if x.nrows() == 0 {
        return Err(Error::EmptySample);
    }
    if x.ncols() != y.len() {
        return Err(Error::DimensionMismatch { expected: y.len(), got: x.ncols() });
    }
    if x.nrows() < min_rows {
        return Err(Error::TooFewSamples { need: min_rows, got: x.nrows() });
    }
    if y.iter().any(|v| !v.is_finite()) || x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(())
}

/// Rows of `x` in lexicographic order. Rules whose value does not depend
/// on row order accumulate over this canonical order, so shuffling the
/// sample leaves them bit-identical.
fn canonical_rows(x: &ArrayView2<'_, f64>) -> Array2<f64> {
    let mut order: Vec<usize> = (0..x.nrows()).collect();
    order.sort_by(|&a, &b| {
        x.row(a)
            .iter()
            .zip(x.row(b).iter())
            .map(|(u, v)| u.total_cmp(v))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    x.select(Axis(0), &order)
}

/// Columns of `x` laid out contiguously (`d x m`).
fn columns(x: &ArrayView2<'_, f64>) -> Array2<f64> {
    x.t().as_standard_layout().into_owned()
}

/// Order-statistic indices and weight of the midpoint-plotting-position
/// quantile: `(1 - w) * x[lo] + w * x[hi]`.
fn quantile_support(m: usize, q: f64) -> (usize, usize, f64) {
    let h = q * m as f64 - 0.5;
    if h <= 0.0 {
        return (0, 0, 0.0);
    }
    if h >= (m - 1) as f64 {
        return (m - 1, m - 1, 0.0);
    }
    let lo = h.floor() as usize;
    (lo, lo + 1, h - lo as f64)
}

/// Empirical quantile by linear interpolation between midpoint plotting
/// positions `(i - 0.5) / m`. `sorted` must be ascending.
pub fn empirical_quantile(sorted: &[f64], q: f64) -> f64 {
    let (lo, hi, w) = quantile_support(sorted.len(), q);
    sorted[lo] + w * (sorted[hi] - sorted[lo])
}

/// Partially orders `v` so that every position in `ranks` (ascending,
/// deduplicated) holds its order statistic.
fn select_ranks(v: &mut [f64], ranks: &[usize]) {
    if ranks.is_empty() {
        return;
    }
    let mid = ranks.len() / 2;
    let k = ranks[mid];
    v.select_nth_unstable_by(k, f64::total_cmp);
    let (left, right) = v.split_at_mut(k);
    select_ranks(left, &ranks[..mid]);
    let upper: Vec<usize> = ranks[mid + 1..].iter().map(|r| r - k - 1).collect();
    select_ranks(&mut right[1..], &upper);
}

/// Quantile (pinball) form of the CRPS, averaged over dimensions.
///
/// Each dimension contributes `1/|Q| sum_q (1[Q_q > y] - q)(Q_q - y)` with
/// `Q_q` the empirical quantile of the column. No factor 2 is applied.
pub fn crps_q(y: &[f64], x: ArrayView2<'_, f64>, levels: &[f64]) -> Result<f64> {
    check_sample(y, &x, 2)?;
    check_levels(levels)?;
    let m = x.nrows();
    let support: Vec<(usize, usize, f64)> = levels.iter().map(|&q| quantile_support(m, q)).collect();
    let mut ranks: Vec<usize> = support.iter().flat_map(|&(lo, hi, _)| [lo, hi]).collect();
    ranks.sort_unstable();
    ranks.dedup();
    let cols = columns(&x);
    let mut buf = Vec::with_capacity(m);
    let mut total = KahanSum::new();
    for (col, &ya) in cols.rows().into_iter().zip(y) {
        buf.clear();
        buf.extend(col.iter().copied());
        select_ranks(&mut buf, &ranks);
        let mut dim_sum = 0.0;
        for (&q, &(lo, hi, w)) in levels.iter().zip(&support) {
            let diff = buf[lo] + w * (buf[hi] - buf[lo]) - ya;
            let indicator = if diff > 0.0 { 1.0 } else { 0.0 };
            dim_sum += (indicator - q) * diff;
        }
        total.add(dim_sum / levels.len() as f64);
    }
    Ok(total.value() / y.len() as f64)
}

/// `sum_{i<j} pair(i, j)` under the given loop schedule.
fn pair_sum(m: usize, strategy: PairStrategy, pair: impl Fn(usize, usize) -> f64) -> f64 {
    let mut acc = KahanSum::new();
    match strategy {
        PairStrategy::Exact => {
            for i in 0..m {
                for j in i + 1..m {
                    acc.add(pair(i, j));
                }
            }
        }
        PairStrategy::Blocked => {
            for bi in (0..m).step_by(PAIR_TILE) {
                let ei = (bi + PAIR_TILE).min(m);
                for bj in (bi..m).step_by(PAIR_TILE) {
                    let ej = (bj + PAIR_TILE).min(m);
                    let mut tile = 0.0;
                    for i in bi..ei {
                        for j in bj.max(i + 1)..ej {
                            tile += pair(i, j);
                        }
                    }
                    acc.add(tile);
                }
            }
        }
    }
    acc.value()
}

/// `1/m sum_i obs(i) - 1/(m(m-1)) sum_{i<j} pair(i, j)`.
fn energy_form(
    m: usize,
    strategy: PairStrategy,
    obs: impl Fn(usize) -> f64,
    pair: impl Fn(usize, usize) -> f64,
) -> f64 {
    let mf = m as f64;
    let mut first = KahanSum::new();
    for i in 0..m {
        first.add(obs(i));
    }
    first.value() / mf - pair_sum(m, strategy, pair) / (mf * (mf - 1.0))
}

/// Expectation form of the CRPS, averaged over dimensions. O(d m^2).
pub fn crps_e(y: &[f64], x: ArrayView2<'_, f64>) -> Result<f64> {
    crps_e_with(y, x, PairStrategy::default())
}

pub fn crps_e_with(y: &[f64], x: ArrayView2<'_, f64>, strategy: PairStrategy) -> Result<f64> {
    check_sample(y, &x, 2)?;
    let m = x.nrows();
    let cols = columns(&canonical_rows(&x).view());
    let mut total = KahanSum::new();
    for (col, &ya) in cols.rows().into_iter().zip(y) {
        let c = col.as_slice().expect("standard layout");
        total.add(energy_form(m, strategy, |i| (ya - c[i]).abs(), |i, j| (c[i] - c[j]).abs()));
    }
    Ok(total.value() / y.len() as f64)
}

#[inline]
fn norm_pow(a: &[f64], b: &[f64], p: f64) -> f64 {
    let dist = if a.len() == 1 {
        (a[0] - b[0]).abs()
    } else {
        a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt()
    };
    if p == 1.0 {
        dist
    } else {
        dist.powf(p)
    }
}

fn check_energy_power(p: f64) -> Result<()> {
    if !(p > 0.0 && p < 2.0) {
        return Err(invalid(format!("energy score needs 0 < p < 2, got {p}")));
    }
    Ok(())
}

/// Energy score with the complete pair sum. O(d m^2).
pub fn es_full(y: &[f64], x: ArrayView2<'_, f64>, p: f64) -> Result<f64> {
    es_full_with(y, x, p, PairStrategy::default())
}

pub fn es_full_with(y: &[f64], x: ArrayView2<'_, f64>, p: f64, strategy: PairStrategy) -> Result<f64> {
    check_sample(y, &x, 2)?;
    check_energy_power(p)?;
    let x = canonical_rows(&x);
    let rows: Vec<&[f64]> = x.rows().into_iter().map(|r| r.to_slice().expect("standard layout")).collect();
    Ok(energy_form(rows.len(), strategy, |i| norm_pow(y, rows[i], p), |i, j| norm_pow(rows[i], rows[j], p)))
}

/// Energy score where each draw enters the second sum once: draw `i` is
/// paired with draw `i + floor(m/2)`. O(d m).
pub fn es_partial(y: &[f64], x: ArrayView2<'_, f64>, p: f64) -> Result<f64> {
    check_sample(y, &x, 2)?;
    check_energy_power(p)?;
    let m = x.nrows();
    let half = m / 2;
    let x = x.as_standard_layout();
    let row = |i: usize| x.row(i).to_slice().expect("standard layout");
    let mut first = KahanSum::new();
    for i in 0..m {
        first.add(norm_pow(y, row(i), p));
    }
    let mut second = KahanSum::new();
    for i in 0..half {
        second.add(norm_pow(row(i), row(i + half), p));
    }
    Ok(first.value() / m as f64 - second.value() / (2 * half) as f64)
}

#[inline]
fn abs_pow(v: f64, p: f64) -> f64 {
    let a = v.abs();
    if p == 1.0 {
        a
    } else if p == 2.0 {
        a * a
    } else if p == 0.5 {
        a.sqrt()
    } else {
        a.powf(p)
    }
}

// Eight independent lanes so the sum vectorizes without reassociation.
#[inline]
fn mean_abs_diff_pow(a: &[f64], b: &[f64], p: f64) -> f64 {
    let mut lanes = [0.0f64; 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    if p == 1.0 {
        for (u, v) in (&mut ca).zip(&mut cb) {
            for k in 0..8 {
                lanes[k] += (u[k] - v[k]).abs();
            }
        }
    } else {
        for (u, v) in (&mut ca).zip(&mut cb) {
            for k in 0..8 {
                lanes[k] += abs_pow(u[k] - v[k], p);
            }
        }
    }
    let mut tail = 0.0;
    for (u, v) in ca.remainder().iter().zip(cb.remainder()) {
        tail += abs_pow(u - v, p);
    }
    let s = ((lanes[0] + lanes[4]) + (lanes[1] + lanes[5])) + ((lanes[2] + lanes[6]) + (lanes[3] + lanes[7]));
    (s + tail) / a.len() as f64
}

/// Variogram score of order `p`, summed over ordered pairs `a != b`.
/// O(d^2 m).
pub fn variogram(y: &[f64], x: ArrayView2<'_, f64>, p: f64) -> Result<f64> {
    check_sample(y, &x, 1)?;
    if y.len() < 2 {
        return Err(invalid("variogram needs d >= 2"));
    }
    if !(p > 0.0) || !p.is_finite() {
        return Err(invalid(format!("variogram needs p > 0, got {p}")));
    }
    let cols = columns(&canonical_rows(&x).view());
    let d = y.len();
    let col = |a: usize| cols.row(a).to_slice().expect("standard layout");
    let mut total = KahanSum::new();
    for a in 0..d {
        let ca = col(a);
        let mut row_sum = 0.0;
        for b in a + 1..d {
            let expected = mean_abs_diff_pow(ca, col(b), p);
            let r = abs_pow(y[a] - y[b], p) - expected;
            row_sum += r * r;
        }
        total.add(row_sum);
    }
    Ok(2.0 * total.value())
}

/// Negative log-likelihood of `y` under the forecast density.
pub fn nll(y: &[f64], forecast: &Distribution) -> Result<f64> {
    Ok(-forecast.log_density(y)?)
}

/// Dawid-Sebastiani score from given moments:
/// `ln det Sigma + (y - mu)^T Sigma^{-1} (y - mu)`.
pub fn dawid_sebastiani_from_moments(y: &[f64], mean: &[f64], cov: &DMatrix<f64>) -> Result<f64> {
    let d = y.len();
    if mean.len() != d || cov.nrows() != d || cov.ncols() != d {
        return Err(Error::DimensionMismatch { expected: d, got: mean.len() });
    }
    let chol = cov.clone().cholesky().ok_or(Error::NumericallySingular)?;
    let l = chol.l_dirty();
    let mut log_det = 0.0;
    for i in 0..d {
        let v = l[(i, i)];
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::NumericallySingular);
        }
        log_det += 2.0 * v.ln();
    }
    let r = DVector::from_iterator(d, y.iter().zip(mean).map(|(a, b)| a - b));
    let w = l.solve_lower_triangular(&r).ok_or(Error::NumericallySingular)?;
    let value = log_det + w.norm_squared();
    if !value.is_finite() {
        return Err(Error::NumericallySingular);
    }
    Ok(value)
}

/// Dawid-Sebastiani score with mean and unbiased covariance estimated from
/// the sample. Defined only for `m > d`.
pub fn dawid_sebastiani(y: &[f64], x: ArrayView2<'_, f64>) -> Result<f64> {
    check_sample(y, &x, 1)?;
    let (m, d) = x.dim();
    if m <= d {
        return Err(Error::RankDeficient { m, d });
    }
    let x = canonical_rows(&x);
    let mean: Vec<f64> = (0..d).map(|j| x.column(j).sum() / m as f64).collect();
    let centered = DMatrix::from_fn(m, d, |i, j| x[(i, j)] - mean[j]);
    let cov = centered.tr_mul(&centered) / (m as f64 - 1.0);
    dawid_sebastiani_from_moments(y, &mean, &cov)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use crate::distributions::Marginal;
    use crate::rng::Seed;

    #[test]
    fn crps_q_degenerate_sample_is_zero() {
        let x = Array2::zeros((10, 1));
        assert_eq!(crps_q(&[0.0], x.view(), &default_quantile_levels()).unwrap(), 0.0);
    }

    #[test]
    fn crps_q_identical_columns_equal_univariate() {
        let col = [0.3, -1.2, 0.8, 2.0, -0.1, 0.0, 1.1];
        let x1 = Array2::from_shape_fn((7, 1), |(i, _)| col[i]);
        let x2 = Array2::from_shape_fn((7, 2), |(i, _)| col[i]);
        let l = default_quantile_levels();
        assert_eq!(crps_q(&[0.4], x1.view(), &l).unwrap(), crps_q(&[0.4, 0.4], x2.view(), &l).unwrap());
    }

    #[test]
    fn empirical_quantile_midpoints() {
        let s = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(empirical_quantile(&s, 0.125), 1.0);
        assert_eq!(empirical_quantile(&s, 0.375), 2.0);
        assert_eq!(empirical_quantile(&s, 0.5), 2.5);
        assert_eq!(empirical_quantile(&s, 0.01), 1.0);
        assert_eq!(empirical_quantile(&s, 0.99), 4.0);
    }

    #[test]
    fn crps_e_hand_values() {
        assert_eq!(crps_e(&[0.0], Array2::zeros((5, 1)).view()).unwrap(), 0.0);
        assert_eq!(crps_e(&[0.0], array![[-1.0], [1.0]].view()).unwrap(), 0.0);
        assert!(matches!(crps_e(&[0.0], array![[1.0]].view()), Err(Error::TooFewSamples { .. })));
        assert!(matches!(crps_e(&[0.0], Array2::zeros((0, 1)).view()), Err(Error::EmptySample)));
    }

    #[test]
    fn energy_hand_values() {
        let x = array![[0.0, 0.0], [1.0, 1.0]];
        assert!(es_full(&[0.0, 0.0], x.view(), 1.0).unwrap().abs() < 1e-15);
        assert_eq!(es_partial(&[0.0], array![[0.0], [2.0]].view(), 1.0).unwrap(), 0.0);
        let y = [0.5, -1.0, 2.0];
        let copies = Array2::from_shape_fn((6, 3), |(_, j)| y[j]);
        assert_eq!(es_full(&y, copies.view(), 1.3).unwrap(), 0.0);
        assert_eq!(es_partial(&y, copies.view(), 1.3).unwrap(), 0.0);
        assert!(es_full(&y, copies.view(), 2.0).is_err());
        assert!(es_partial(&y, copies.view(), 0.0).is_err());
    }

    #[test]
    fn es_partial_odd_m_pairs_with_floor_half() {
        // m = 3: draw 0 pairs with draw 1; draw 2 is unpaired.
        let x = array![[0.0], [2.0], [5.0]];
        let first = (0.0 + 2.0 + 5.0) / 3.0;
        let second = 2.0 / 2.0;
        assert_eq!(es_partial(&[0.0], x.view(), 1.0).unwrap(), first - second);
    }

    #[test]
    fn crps_q_selection_matches_full_sort() {
        let x = Distribution::iid(Marginal::standard_normal(), 3).unwrap().sample(101, Seed(9));
        let y = [0.3, -1.2, 2.0];
        let levels = default_quantile_levels();
        let mut naive = 0.0;
        for (j, &ya) in y.iter().enumerate() {
            let mut col = x.column(j).to_vec();
            col.sort_by(f64::total_cmp);
            for &q in &levels {
                let diff = empirical_quantile(&col, q) - ya;
                naive += ((diff > 0.0) as u8 as f64 - q) * diff / levels.len() as f64;
            }
        }
        let fast = crps_q(&y, x.view(), &levels).unwrap();
        assert!((fast - naive / 3.0).abs() < 1e-14);
    }

    #[test]
    fn variogram_hand_values() {
        let x = array![[0.0, 0.0]];
        assert_eq!(variogram(&[0.0, 1.0], x.view(), 1.0).unwrap(), 2.0);
        let y = [0.1, 0.7, -0.3];
        let rows = Array2::from_shape_fn((4, 3), |(_, j)| y[j]);
        assert_eq!(variogram(&y, rows.view(), 0.5).unwrap(), 0.0);
        assert!(variogram(&[1.0], array![[1.0]].view(), 1.0).is_err());
    }

    #[test]
    fn dawid_sebastiani_hand_value() {
        let x = array![[-1.0], [0.0], [1.0]];
        assert_eq!(dawid_sebastiani(&[0.0], x.view()).unwrap(), 0.0);
        let sq = Array2::<f64>::zeros((3, 3));
        assert!(matches!(dawid_sebastiani(&[0.0; 3], sq.view()), Err(Error::RankDeficient { m: 3, d: 3 })));
        let flat = array![[1.0, 2.0], [1.0, 2.0], [1.0, 2.0]];
        assert!(matches!(dawid_sebastiani(&[0.0, 0.0], flat.view()), Err(Error::NumericallySingular)));
    }

    #[test]
    fn rule_names_round_trip() {
        for r in ScoringRule::all()
            .into_iter()
            .chain([ScoringRule::EsPartial { p: 0.5 }, ScoringRule::Variogram { p: 1.5 }])
        {
            let s = r.to_string();
            assert_eq!(s.parse::<ScoringRule>().unwrap(), r, "{s}");
        }
        assert_eq!("es-partial:p=0.5".parse::<ScoringRule>().unwrap(), ScoringRule::EsPartial { p: 0.5 });
        assert_eq!(
            "crps-q[0.1,0.5,0.9]".parse::<ScoringRule>().unwrap(),
            ScoringRule::CrpsQ { levels: vec![0.1, 0.5, 0.9] }
        );
        assert!("es-full-p2".parse::<ScoringRule>().is_err());
        assert!("crps-x".parse::<ScoringRule>().is_err());
        assert!("crps-q[0.5,0.1]".parse::<ScoringRule>().is_err());
    }

    #[test]
    fn density_and_sample_dispatch() {
        let dist = Distribution::iid(crate::distributions::Marginal::standard_normal(), 1).unwrap();
        let v = ScoringRule::Nll.score(&[0.0], Forecast::Density(&dist)).unwrap();
        assert!((v - 0.918_938_533_204_672_7).abs() < 1e-12);
        let x = Array2::zeros((4, 1));
        assert!(ScoringRule::Nll.score(&[0.0], Forecast::Sample(x.view())).is_err());
        assert!(ScoringRule::CrpsE.score(&[0.0], Forecast::Density(&dist)).is_err());
    }

    #[test]
    fn blocked_and_exact_agree() {
        let x = Array2::from_shape_fn((150, 3), |(i, j)| ((i * 31 + j * 17) % 23) as f64 / 7.0 - 1.3);
        let y = [0.2, -0.4, 1.0];
        let a = es_full_with(&y, x.view(), 0.7, PairStrategy::Exact).unwrap();
        let b = es_full_with(&y, x.view(), 0.7, PairStrategy::Blocked).unwrap();
        assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        let a = crps_e_with(&y, x.view(), PairStrategy::Exact).unwrap();
        let b = crps_e_with(&y, x.view(), PairStrategy::Blocked).unwrap();
        assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }
}
