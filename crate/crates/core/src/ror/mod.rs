//! Region-of-reliability maps.
//!
//! A sweep evaluates the power of one rule on one test case over a grid of
//! dimensions `d` and forecast sample sizes `m`, each `d` using the `eps`
//! tuned for that dimension. Surfaces are smoothed on `(log2 d, log2 m)` with
//! a thin-plate spline and contoured at fixed power levels.

mod contour;
mod qq;
mod svg;
mod tps;

pub use contour::{contour_field, extract_contours, ContourLevel, ContourSet, Polyline};
pub use qq::{kurtosis_selection, qq_diagnostic, KurtosisPick, QqOptions, QqReport, KURTOSIS_QUANTILES};
pub use svg::render_svg;
pub use tps::ThinPlateSpline;

use crate::error::{invalid, Error, Result};
use crate::power::{estimate_delta_with, power_from_stats, tune_epsilon, EstimateOptions, TuneMethod, TuneOptions};
use crate::rng::Seed;
use crate::scoring::{PairStrategy, ScoringRule};
use crate::testcases::{make_case, TestCaseId};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;

/// Contour levels drawn by default.
pub const DEFAULT_LEVELS: [f64; 3] = [0.2, 0.5, 0.8];
/// Dense resampling factor per axis used for contouring.
pub const DEFAULT_RESOLUTION: usize = 8;

fn powers_of_two(lo: u32, hi: u32) -> Vec<usize> {
    (lo..=hi).map(|e| 1usize << e).collect()
}

/// Axes of a sweep, plus the replication count and test level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub d_values: Vec<usize>,
    pub m_values: Vec<usize>,
    pub n: usize,
    pub alpha: f64,
}

impl Default for SweepGrid {
    fn default() -> Self {
        SweepGrid::paper()
    }
}

impl SweepGrid {
    pub fn new(d_values: Vec<usize>, m_values: Vec<usize>, n: usize, alpha: f64) -> Result<Self> {
        let g = SweepGrid { d_values, m_values, n, alpha };
        g.validate()?;
        Ok(g)
    }

    /// `d` in 2^4..2^12, `m` in 2^4..2^14.
    pub fn paper() -> Self {
        SweepGrid { d_values: powers_of_two(4, 12), m_values: powers_of_two(4, 14), n: 30, alpha: 0.05 }
    }

    /// `d` in {2^4, 2^6, 2^8}, `m` in 2^4..2^12.
    pub fn desk() -> Self {
        SweepGrid { d_values: vec![16, 64, 256], m_values: powers_of_two(4, 12), n: 30, alpha: 0.05 }
    }

    pub fn validate(&self) -> Result<()> {
        let axis = |name: &str, v: &[usize], min: usize| -> Result<()> {
            if v.is_empty() {
                return Err(invalid(format!("{name} axis is empty")));
            }
            if v.windows(2).any(|w| w[0] >= w[1]) {
                return Err(invalid(format!("{name} axis must be strictly increasing")));
            }
            if let Some(bad) = v.iter().find(|&&x| x < min || !x.is_power_of_two()) {
                return Err(invalid(format!("{name} value {bad} is not a power of two >= {min}")));
            }
            Ok(())
        };
        axis("d", &self.d_values, 2)?;
        axis("m", &self.m_values, 1)?;
        if self.n < 1 {
            return Err(invalid("n must be >= 1"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(invalid(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        Ok(())
    }

    /// `[log2 d_min, log2 d_max, log2 m_min, log2 m_max]`.
    pub fn log2_bounds(&self) -> [f64; 4] {
        let l = |v: usize| (v as f64).log2();
        [
            l(self.d_values[0]),
            l(*self.d_values.last().unwrap()),
            l(self.m_values[0]),
            l(*self.m_values.last().unwrap()),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaskKind {
    /// The rule is not defined at this `(d, m)`.
    Undefined,
    /// Left out by configuration (cost cap).
    Skipped,
    /// Evaluation raised an error.
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mask {
    pub kind: MaskKind,
    pub reason: String,
}

impl Mask {
    fn new(kind: MaskKind, reason: impl Into<String>) -> Self {
        Mask { kind, reason: reason.into() }
    }

    /// `kind: reason`, as written to CSV.
    pub fn label(&self) -> String {
        let kind = match self.kind {
            MaskKind::Undefined => "undefined",
            MaskKind::Skipped => "skipped",
            MaskKind::Failed => "failed",
        };
        format!("{kind}: {}", self.reason)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub d: usize,
    pub m: usize,
    /// NaN when tuning failed; serialized as `null`.
    #[serde(with = "nan_as_null")]
    pub eps: f64,
    pub power: Option<f64>,
    pub mean: Option<f64>,
    pub stddev: Option<f64>,
    pub excess_kurtosis: Option<f64>,
    pub mask: Option<Mask>,
}

/// Power of one rule on one case over a sweep grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSurface {
    pub grid: SweepGrid,
    pub case: TestCaseId,
    pub rule: ScoringRule,
    /// Row-major `|d| x |m|`.
    pub cells: Vec<Cell>,
}

impl PowerSurface {
    pub fn cell(&self, i: usize, j: usize) -> &Cell {
        &self.cells[i * self.grid.m_values.len() + j]
    }

    /// Power at axis indices `(i, j)`, `None` when masked.
    pub fn value(&self, i: usize, j: usize) -> Option<f64> {
        self.cell(i, j).power
    }

    pub fn rows(&self) -> impl Iterator<Item = &[Cell]> {
        self.cells.chunks(self.grid.m_values.len())
    }

    pub fn failed_cells(&self) -> usize {
        self.cells.iter().filter(|c| matches!(&c.mask, Some(m) if m.kind == MaskKind::Failed)).count()
    }

    /// Builds a surface from a power function, for synthetic inputs.
    pub fn from_fn(
        grid: SweepGrid,
        case: TestCaseId,
        rule: ScoringRule,
        mut f: impl FnMut(usize, usize) -> Option<f64>,
    ) -> Self {
        let mut cells = Vec::with_capacity(grid.d_values.len() * grid.m_values.len());
        for &d in &grid.d_values {
            for &m in &grid.m_values {
                let power = f(d, m);
                let mask = power.is_none().then(|| Mask::new(MaskKind::Undefined, "synthetic"));
                cells.push(Cell { d, m, eps: f64::NAN, power, mean: None, stddev: None, excess_kurtosis: None, mask });
            }
        }
        PowerSurface { grid, case, rule, cells }
    }
}

mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

/// Knobs of a sweep beyond the grid itself.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SweepOptions {
    pub k: usize,
    pub seed: Seed,
    /// Quadratic-cost rules are skipped above this `m`; `None` forces them.
    pub max_quadratic_m: Option<usize>,
    pub target_power: f64,
    pub tune_method: TuneMethod,
    pub tune_samples: usize,
    pub strategy: PairStrategy,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            k: 1000,
            seed: Seed(0),
            max_quadratic_m: Some(4096),
            target_power: 0.8,
            tune_method: TuneMethod::Auto,
            tune_samples: 10_000,
            strategy: PairStrategy::default(),
        }
    }
}

impl SweepOptions {
    pub fn tune_options(&self, grid: &SweepGrid) -> TuneOptions {
        TuneOptions {
            target_power: self.target_power,
            alpha: grid.alpha,
            n: grid.n,
            method: self.tune_method,
            mc_samples: self.tune_samples,
            seed: self.seed.child("tune", 0),
        }
    }
}

/// Tuned `eps` for each `d` of the grid.
pub fn tune_grid(case: TestCaseId, grid: &SweepGrid, opts: &SweepOptions) -> Vec<Result<f64>> {
    let tune = opts.tune_options(grid);
    grid.d_values.iter().map(|&d| tune_epsilon(case, d, &tune).map(|t| t.eps)).collect()
}

/// Sweeps `rule` on `case` with default options apart from `k` and `seed`.
pub fn sweep(case: TestCaseId, rule: &ScoringRule, grid: &SweepGrid, k: usize, seed: Seed) -> Result<PowerSurface> {
    let opts = SweepOptions { k, seed, ..Default::default() };
    let eps = tune_grid(case, grid, &opts);
    sweep_with(case, rule, grid, &opts, &eps)
}

/// Sweeps with the given per-`d` tuning outcomes. Cell failures are masked,
/// never propagated; only an invalid grid or rule is an error.
pub fn sweep_with(
    case: TestCaseId,
    rule: &ScoringRule,
    grid: &SweepGrid,
    opts: &SweepOptions,
    epsilons: &[Result<f64>],
) -> Result<PowerSurface> {
    grid.validate()?;
    rule.validate()?;
    if epsilons.len() != grid.d_values.len() {
        return Err(Error::DimensionMismatch { expected: grid.d_values.len(), got: epsilons.len() });
    }
    let cell_seed = opts.seed.child("cells", 0);
    let est = EstimateOptions { retain_deltas: false, strategy: opts.strategy };
    let mut cells = Vec::with_capacity(grid.d_values.len() * grid.m_values.len());
    for (&d, eps) in grid.d_values.iter().zip(epsilons) {
        let pair = match eps {
            Ok(e) => make_case(case, d, *e).map_err(|e| e.to_string()),
            Err(e) => Err(format!("tuning: {e}")),
        };
        let eps_value = *eps.as_ref().unwrap_or(&f64::NAN);
        for &m in &grid.m_values {
            let mut cell = Cell {
                d,
                m,
                eps: eps_value,
                power: None,
                mean: None,
                stddev: None,
                excess_kurtosis: None,
                mask: None,
            };
            let pair = match &pair {
                Ok(p) => p,
                Err(reason) => {
                    cell.mask = Some(Mask::new(MaskKind::Failed, reason.clone()));
                    cells.push(cell);
                    continue;
                }
            };
            if let Some(reason) = rule.undefined_reason(d, m) {
                cell.mask = Some(Mask::new(MaskKind::Undefined, reason));
            } else if let Some(cap) = opts.max_quadratic_m.filter(|&cap| rule.is_quadratic_in_m() && m > cap) {
                cell.mask = Some(Mask::new(MaskKind::Skipped, format!("m = {m} above quadratic-cost cap {cap}")));
            } else {
                let outcome = estimate_delta_with(pair, rule, m, opts.k, cell_seed, est)
                    .and_then(|stats| power_from_stats(&stats, grid.n, grid.alpha));
                match outcome {
                    Ok(r) => {
                        cell.power = Some(r.power);
                        cell.mean = Some(r.stats.mean);
                        cell.stddev = Some(r.stats.stddev);
                        cell.excess_kurtosis = Some(r.stats.excess_kurtosis);
                    }
                    Err(e) => cell.mask = Some(Mask::new(MaskKind::Failed, e.to_string())),
                }
            }
            cells.push(cell);
        }
    }
    Ok(PowerSurface { grid: grid.clone(), case, rule: rule.clone(), cells })
}

/// Smooth interpolant of a surface on `(log2 d, log2 m)`.
#[derive(Debug, Clone)]
pub struct SmoothSurface {
    spline: ThinPlateSpline,
    bounds: [f64; 4],
    nx: usize,
    ny: usize,
}

impl SmoothSurface {
    /// Evaluates at `(log2 d, log2 m)`.
    pub fn eval(&self, log2_d: f64, log2_m: f64) -> f64 {
        self.spline.eval(log2_d, log2_m)
    }

    pub fn bounds(&self) -> [f64; 4] {
        self.bounds
    }

    /// Node counts of the underlying grid along each axis.
    pub fn grid_shape(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }
}

/// Thin-plate-spline fit to the unmasked cells, with ridge `smoothing`.
pub fn smooth_surface(surface: &PowerSurface, smoothing: f64) -> Result<SmoothSurface> {
    let mut nodes = Vec::new();
    let mut values = Vec::new();
    for c in &surface.cells {
        if let Some(p) = c.power {
            nodes.push([(c.d as f64).log2(), (c.m as f64).log2()]);
            values.push(p);
        }
    }
    if nodes.len() < 4 {
        return Err(Error::DegenerateNodes(format!("{} unmasked cells, need at least 4", nodes.len())));
    }
    let spline = ThinPlateSpline::fit(&nodes, &values, smoothing)?;
    Ok(SmoothSurface {
        spline,
        bounds: surface.grid.log2_bounds(),
        nx: surface.grid.d_values.len(),
        ny: surface.grid.m_values.len(),
    })
}

/// Contours of a smoothed surface at `resolution` times the grid density.
pub fn surface_contours(smooth: &SmoothSurface, levels: &[f64], resolution: usize) -> Result<ContourSet> {
    let (nx, ny) = smooth.grid_shape();
    extract_contours(|x, y| smooth.eval(x, y), smooth.bounds(), (nx, ny), levels, resolution)
}

/// One entry of a rule-by-case summary table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryEntry {
    pub case: TestCaseId,
    pub rule: ScoringRule,
    /// `None` when no cell contributed.
    pub value: Option<f64>,
    pub cells: usize,
}

/// Mean over `d` of the maximum over `m` of power, per surface.
pub fn summary_max_mean(surfaces: &[PowerSurface]) -> Vec<SummaryEntry> {
    surfaces
        .iter()
        .map(|s| {
            let maxima: Vec<f64> = s
                .rows()
                .filter_map(|row| row.iter().filter_map(|c| c.power).reduce(f64::max))
                .collect();
            let value = (!maxima.is_empty()).then(|| maxima.iter().sum::<f64>() / maxima.len() as f64);
            SummaryEntry { case: s.case, rule: s.rule.clone(), value, cells: maxima.len() }
        })
        .collect()
}

/// Share of unmasked cells with `m > d` whose power reaches `level`.
pub fn ror_fraction(surfaces: &[PowerSurface], level: f64) -> Vec<SummaryEntry> {
    surfaces
        .iter()
        .map(|s| {
            let eligible: Vec<f64> = s.cells.iter().filter(|c| c.m > c.d).filter_map(|c| c.power).collect();
            let hits = eligible.iter().filter(|&&p| p >= level).count();
            let value = (!eligible.is_empty()).then(|| hits as f64 / eligible.len() as f64);
            SummaryEntry { case: s.case, rule: s.rule.clone(), value, cells: eligible.len() }
        })
        .collect()
}

/// Pivots summary entries into a text table with rules as rows and cases
/// as columns, values to 4 decimals.
pub fn format_summary_table(entries: &[SummaryEntry]) -> String {
    let mut cases: Vec<TestCaseId> = entries.iter().map(|e| e.case).collect();
    cases.sort();
    cases.dedup();
    let mut rules: Vec<String> = Vec::new();
    let mut table: BTreeMap<(String, TestCaseId), Option<f64>> = BTreeMap::new();
    for e in entries {
        let r = e.rule.to_string();
        if !rules.contains(&r) {
            rules.push(r.clone());
        }
        table.insert((r, e.case), e.value);
    }
    let rule_w = rules.iter().map(|r| r.len()).max().unwrap_or(4).max(4);
    let mut out = format!("{:<rule_w$}", "rule");
    for c in &cases {
        out.push_str(&format!("  {:>w$}", c.slug(), w = c.slug().len().max(6)));
    }
    out.push('\n');
    for r in &rules {
        out.push_str(&format!("{r:<rule_w$}"));
        for c in &cases {
            let w = c.slug().len().max(6);
            let cell = match table.get(&(r.clone(), *c)) {
                Some(Some(v)) => format!("{v:.4}"),
                _ => "-".to_string(),
            };
            out.push_str(&format!("  {cell:>w$}"));
        }
        out.push('\n');
    }
    out
}

fn opt_num(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes surfaces in long CSV format, one row per cell.
pub fn write_surfaces_csv<W: Write>(surfaces: &[PowerSurface], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["case", "rule", "d", "m", "n", "alpha", "epsilon", "power", "mask_reason"])?;
    for s in surfaces {
        let (case, rule) = (s.case.slug().to_string(), s.rule.to_string());
        for c in &s.cells {
            w.write_record([
                case.clone(),
                rule.clone(),
                c.d.to_string(),
                c.m.to_string(),
                s.grid.n.to_string(),
                s.grid.alpha.to_string(),
                if c.eps.is_finite() { c.eps.to_string() } else { String::new() },
                opt_num(c.power),
                c.mask.as_ref().map(Mask::label).unwrap_or_default(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
