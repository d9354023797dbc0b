//! Downstream plant-commitment problem on empirical scenarios.
//!
//! A seller picks at most `M` plants and commits to delivering `s_t` in each
//! period, paid `s_t` and fined `lambda` per unit short. For a fixed plant
//! set the problem separates per period into a newsvendor quantile.

use crate::error::{invalid, Error, Result};
use crate::numeric::compensated_sum;
use crate::power::{power_from_stats, DeltaStats, PowerResult};
use crate::rng::Seed;
use crate::scoring::{Forecast, ScoringRule};
use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::io::{Read, Write};

/// Production values indexed by scenario, plant and period.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSet {
    scenarios: usize,
    plants: usize,
    periods: usize,
    values: Vec<f64>,
}

impl ScenarioSet {
    /// `values` is laid out scenario-major, then plant, then period.
    pub fn new(scenarios: usize, plants: usize, periods: usize, values: Vec<f64>) -> Result<Self> {
        if scenarios < 2 {
            return Err(invalid(format!("need at least 2 scenarios, got {scenarios}")));
        }
        if plants == 0 || periods == 0 {
            return Err(invalid("need at least one plant and one period"));
        }
        let len = scenarios * plants * periods;
        if values.len() != len {
            return Err(Error::DimensionMismatch { expected: len, got: values.len() });
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(invalid(format!("production values must be finite and >= 0, got {v}")));
        }
        Ok(ScenarioSet { scenarios, plants, periods, values })
    }

    pub fn scenarios(&self) -> usize {
        self.scenarios
    }

    pub fn plants(&self) -> usize {
        self.plants
    }

    pub fn periods(&self) -> usize {
        self.periods
    }

    pub fn get(&self, k: usize, i: usize, t: usize) -> f64 {
        self.values[(k * self.plants + i) * self.periods + t]
    }

    /// Scenario totals of the active plants, indexed `[t][k]`.
    fn period_totals(&self, active: &[bool]) -> Vec<Vec<f64>> {
        (0..self.periods)
            .map(|t| {
                (0..self.scenarios)
                    .map(|k| (0..self.plants).filter(|&i| active[i]).map(|i| self.get(k, i, t)).sum())
                    .collect()
            })
            .collect()
    }

    /// One row per scenario, `plants * periods` columns.
    pub fn as_sample(&self) -> Array2<f64> {
        Array2::from_shape_vec((self.scenarios, self.plants * self.periods), self.values.clone())
            .expect("shape matches storage")
    }

    pub fn from_sample(plants: usize, periods: usize, sample: ArrayView2<'_, f64>) -> Result<Self> {
        if sample.ncols() != plants * periods {
            return Err(Error::DimensionMismatch { expected: plants * periods, got: sample.ncols() });
        }
        ScenarioSet::new(sample.nrows(), plants, periods, sample.iter().copied().collect())
    }

    /// Reads the long format `scenario,plant,period,value` with 0-based
    /// indices; every combination must appear exactly once.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            scenario: usize,
            plant: usize,
            period: usize,
            value: f64,
        }
        let mut rows = Vec::new();
        for r in csv::Reader::from_reader(input).deserialize::<Row>() {
            rows.push(r?);
        }
        if rows.is_empty() {
            return Err(Error::EmptySample);
        }
        let k = rows.iter().map(|r| r.scenario).max().unwrap() + 1;
        let n = rows.iter().map(|r| r.plant).max().unwrap() + 1;
        let t = rows.iter().map(|r| r.period).max().unwrap() + 1;
        let mut values = vec![f64::NAN; k * n * t];
        let mut seen = vec![false; k * n * t];
        for r in rows {
            let idx = (r.scenario * n + r.plant) * t + r.period;
            if std::mem::replace(&mut seen[idx], true) {
                return Err(Error::Parse(format!(
                    "duplicate entry for scenario {}, plant {}, period {}",
                    r.scenario, r.plant, r.period
                )));
            }
            values[idx] = r.value;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            let (kk, rest) = (missing / (n * t), missing % (n * t));
            return Err(Error::Parse(format!(
                "missing entry for scenario {kk}, plant {}, period {}",
                rest / t,
                rest % t
            )));
        }
        ScenarioSet::new(k, n, t, values)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["scenario", "plant", "period", "value"])?;
        for k in 0..self.scenarios {
            for i in 0..self.plants {
                for t in 0..self.periods {
                    w.write_record([k.to_string(), i.to_string(), t.to_string(), self.get(k, i, t).to_string()])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub active: Vec<bool>,
    pub commitments: Vec<f64>,
}

impl Plan {
    pub fn active_indices(&self) -> Vec<usize> {
        self.active.iter().enumerate().filter(|(_, a)| **a).map(|(i, _)| i).collect()
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 1.0) || !lambda.is_finite() {
        return Err(invalid(format!("penalty lambda must be finite and > 1, got {lambda}")));
    }
    Ok(())
}

fn check_active(sc: &ScenarioSet, active: &[bool]) -> Result<()> {
    if active.len() != sc.plants {
        return Err(Error::DimensionMismatch { expected: sc.plants, got: active.len() });
    }
    Ok(())
}

/// Order statistic `q_(ceil(K / lambda))` of the per-period totals.
pub fn optimal_commitments(sc: &ScenarioSet, active: &[bool], lambda: f64) -> Result<Vec<f64>> {
    check_lambda(lambda)?;
    check_active(sc, active)?;
    if !active.iter().any(|a| *a) {
        return Ok(vec![0.0; sc.periods]);
    }
    let rank = ((sc.scenarios as f64 / lambda).ceil() as usize).clamp(1, sc.scenarios);
    Ok(sc
        .period_totals(active)
        .into_iter()
        .map(|mut totals| {
            let (_, v, _) = totals.select_nth_unstable_by(rank - 1, f64::total_cmp);
            *v
        })
        .collect())
}

/// Average over scenarios of `sum_t s_t - lambda * max(0, s_t - q_t)`.
pub fn expected_profit(sc: &ScenarioSet, plan: &Plan, lambda: f64) -> Result<f64> {
    check_active(sc, &plan.active)?;
    if plan.commitments.len() != sc.periods {
        return Err(Error::DimensionMismatch { expected: sc.periods, got: plan.commitments.len() });
    }
    if plan.commitments.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
        return Err(invalid("commitments must be finite and >= 0"));
    }
    let totals = sc.period_totals(&plan.active);
    let per_scenario = (0..sc.scenarios).map(|k| {
        plan.commitments
            .iter()
            .zip(&totals)
            .map(|(&s, q)| s - lambda * (s - q[k]).max(0.0))
            .sum::<f64>()
    });
    Ok(compensated_sum(per_scenario) / sc.scenarios as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectStrategy {
    Exhaustive,
    Greedy,
}

/// Largest plant count accepted by exhaustive search.
pub const EXHAUSTIVE_LIMIT: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub plan: Plan,
    pub profit: f64,
    pub strategy: SelectStrategy,
    /// How equally profitable plant sets are ordered.
    pub tie_break: String,
}

fn evaluate(sc: &ScenarioSet, active: Vec<bool>, lambda: f64) -> Result<(Plan, f64)> {
    let commitments = optimal_commitments(sc, &active, lambda)?;
    let plan = Plan { active, commitments };
    let profit = expected_profit(sc, &plan, lambda)?;
    Ok((plan, profit))
}

/// Higher profit wins; equal profits go to the lexicographically smaller
/// sorted index list.
fn better(a: &(Plan, f64), b: &(Plan, f64)) -> Ordering {
    let tol = 1e-12 * a.1.abs().max(b.1.abs()).max(1.0);
    if (a.1 - b.1).abs() > tol {
        return a.1.total_cmp(&b.1);
    }
    b.0.active_indices().cmp(&a.0.active_indices())
}

/// Chooses at most `max_active` plants and their optimal commitments.
pub fn select_plants(sc: &ScenarioSet, max_active: usize, lambda: f64, strategy: SelectStrategy) -> Result<Selection> {
    check_lambda(lambda)?;
    let n = sc.plants;
    let best = match strategy {
        SelectStrategy::Exhaustive => {
            if n > EXHAUSTIVE_LIMIT {
                return Err(invalid(format!("exhaustive search supports at most {EXHAUSTIVE_LIMIT} plants, got {n}")));
            }
            (0u32..1 << n)
                .into_par_iter()
                .filter(|mask| mask.count_ones() as usize <= max_active)
                .map(|mask| evaluate(sc, (0..n).map(|i| mask >> i & 1 == 1).collect(), lambda))
                .try_reduce_with(|a, b| Ok(if better(&a, &b) == Ordering::Less { b } else { a }))
                .expect("the empty set is always a candidate")?
        }
        SelectStrategy::Greedy => {
            let mut current = evaluate(sc, vec![false; n], lambda)?;
            while current.0.active_indices().len() < max_active {
                let mut step: Option<(Plan, f64)> = None;
                for i in (0..n).filter(|&i| !current.0.active[i]) {
                    let mut active = current.0.active.clone();
                    active[i] = true;
                    let cand = evaluate(sc, active, lambda)?;
                    if step.as_ref().is_none_or(|s| better(&cand, s) == Ordering::Greater) {
                        step = Some(cand);
                    }
                }
                match step {
                    Some(s) if s.1 > current.1 => current = s,
                    _ => break,
                }
            }
            current
        }
    };
    Ok(Selection { plan: best.0, profit: best.1, strategy, tie_break: "lexicographic plant index".into() })
}

/// Operators that turn a ground-truth sample into a forecast sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Perturbation {
    /// Permutes each column independently.
    BreakCorrelations { seed: Seed },
    Scale { factor: f64 },
    Shift { offset: f64 },
}

impl Perturbation {
    /// Same operator with its randomness re-keyed for `index`.
    fn for_index(self, index: u64) -> Self {
        match self {
            Perturbation::BreakCorrelations { seed } => {
                Perturbation::BreakCorrelations { seed: seed.child("loo", index) }
            }
            other => other,
        }
    }
}

pub fn perturb(sample: ArrayView2<'_, f64>, kind: Perturbation) -> Result<Array2<f64>> {
    if sample.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(match kind {
        Perturbation::Scale { factor } => sample.mapv(|v| v * factor),
        Perturbation::Shift { offset } => sample.mapv(|v| v + offset),
        Perturbation::BreakCorrelations { seed } => {
            if sample.nrows() < 2 {
                return Err(invalid("breaking correlations needs at least 2 rows"));
            }
            let mut out = sample.to_owned();
            for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
                let mut values = col.to_vec();
                values.shuffle(&mut seed.child("column", j as u64).rng());
                col.assign(&ndarray::ArrayView1::from(&values));
            }
            out
        }
    })
}

/// Leave-one-out power on an empirical sample: each row is scored against
/// the perturbed and the unperturbed remaining rows. Reusing rows biases
/// the estimate upward.
pub fn loo_power(
    gt: ArrayView2<'_, f64>,
    perturbation: Perturbation,
    rule: &ScoringRule,
    n: usize,
    alpha: f64,
) -> Result<PowerResult> {
    let (m, d) = gt.dim();
    if m < 3 {
        return Err(Error::TooFewSamples { need: 3, got: m });
    }
    if rule.needs_density() {
        return Err(Error::SampleRequired(rule.to_string()));
    }
    rule.validate()?;
    if let Some(reason) = rule.undefined_reason(d, m - 1) {
        return Err(invalid(reason));
    }
    let deltas = (0..m)
        .into_par_iter()
        .map(|i| -> Result<f64> {
            let rest = gt.select(Axis(0), &(0..m).filter(|&r| r != i).collect::<Vec<_>>());
            let forecast = perturb(rest.view(), perturbation.for_index(i as u64))?;
            let y = gt.row(i).to_vec();
            let delta = rule.score(&y, Forecast::Sample(forecast.view()))? - rule.score(&y, Forecast::Sample(rest.view()))?;
            if !delta.is_finite() {
                return Err(Error::NonFinite);
            }
            Ok(delta)
        })
        .collect::<Result<Vec<f64>>>()?;
    power_from_stats(&DeltaStats::from_deltas(deltas, false), n, alpha)
}

/// Reads an `m x d` sample from CSV with a header row of column names.
pub fn read_sample_csv<R: Read>(input: R) -> Result<Array2<f64>> {
    let mut rdr = csv::Reader::from_reader(input);
    let d = rdr.headers()?.len();
    let mut values = Vec::new();
    let mut m = 0;
    for rec in rdr.records() {
        let rec = rec?;
        for field in rec.iter() {
            let v: f64 = field.trim().parse().map_err(|_| Error::Parse(format!("not a number: `{field}`")))?;
            values.push(v);
        }
        m += 1;
    }
    if m == 0 {
        return Err(Error::EmptySample);
    }
    let out = Array2::from_shape_vec((m, d), values).map_err(|e| Error::Parse(e.to_string()))?;
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(out)
}
