use crate::config::{parse_cases, ConfigError, Profile, RunConfig};
use crate::manifest::{ArtifactWriter, RunManifest, CONFIG_FILE};
use anyhow::{Context, Result};
use powermap::decision::{
    expected_profit, loo_power, optimal_commitments, perturb, select_plants, Perturbation, Plan, ScenarioSet,
    SelectStrategy, Selection, EXHAUSTIVE_LIMIT,
};
use powermap::power::{SampleCount, TuneMethod, TuneOptions};
use powermap::ror::{
    format_summary_table, render_svg, ror_fraction, smooth_surface, summary_max_mean, surface_contours, sweep_with,
    tune_grid, write_surfaces_csv, ContourLevel, ContourSet, PowerSurface, DEFAULT_LEVELS, DEFAULT_RESOLUTION,
};
use powermap::{make_case, tune_epsilon, PowerResult, ScoringRule, Seed, TestCaseId, TrialConfig};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const OUTPUT_DIR_ENV: &str = "POWERMAP_OUTPUT_DIR";
pub const DEFAULT_OUTPUT_DIR: &str = "powermap-out";

/// Outcome of a command that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Complete,
    /// Some cells were masked by errors.
    Partial { failed: usize },
}

impl Status {
    pub fn exit_code(self) -> u8 {
        match self {
            Status::Complete => 0,
            Status::Partial { .. } => 3,
        }
    }

    fn from_failures(failed: usize) -> Self {
        if failed == 0 {
            Status::Complete
        } else {
            Status::Partial { failed }
        }
    }
}

/// Flag > config file > environment > built-in default.
pub fn resolve_output_dir(flag: Option<&Path>, cfg: &RunConfig) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| cfg.output_dir.clone())
        .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR))
}

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct ConfigArgs {
    pub config: Option<PathBuf>,
    pub profile: Option<Profile>,
    pub cases: Vec<String>,
    pub rules: Vec<String>,
    pub k: Option<usize>,
    pub master_seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
}

pub fn build_config(args: &ConfigArgs) -> Result<RunConfig, ConfigError> {
    let fallback = args.profile.unwrap_or(Profile::Desk);
    let mut cfg = match &args.config {
        Some(path) => RunConfig::from_file(path, fallback)?,
        None => RunConfig::preset(fallback),
    };
    // An explicit profile flag must agree with the file's.
    if let Some(p) = args.profile {
        if p != cfg.profile && args.config.is_some() {
            return Err(ConfigError::new(format!(
                "--profile {p} conflicts with profile `{}` in the config file",
                cfg.profile
            )));
        }
    }
    if !args.cases.is_empty() {
        cfg.cases.0 = parse_cases(&args.cases)?;
    }
    if !args.rules.is_empty() {
        cfg.rules = args
            .rules
            .iter()
            .map(|r| r.parse::<ScoringRule>().map_err(|e| ConfigError::new(format!("rule `{r}`: {e}"))))
            .collect::<Result<_, _>>()?;
    }
    if let Some(k) = args.k {
        cfg.k = k;
    }
    if let Some(s) = args.master_seed {
        cfg.master_seed = s;
    }
    cfg.output_dir = Some(resolve_output_dir(args.output_dir.as_deref(), &cfg));
    cfg.validate()?;
    Ok(cfg)
}

// ---------------------------------------------------------------- cases

pub fn cmd_cases(filter: &[String], json: bool) -> Result<String> {
    let ids = if filter.is_empty() { TestCaseId::all().to_vec() } else { parse_cases(filter)? };
    let infos: Vec<_> = ids.iter().map(|id| id.info()).collect();
    if json {
        return Ok(serde_json::to_string_pretty(&infos)? + "\n");
    }
    let mut out = format!("{:<24} {:<32} {:>12}  {}\n", "case", "description", "identity eps", "valid eps");
    for i in &infos {
        out += &format!("{:<24} {:<32} {:>12}  {}\n", i.id.slug(), i.label, i.identity_eps, i.valid_range);
    }
    Ok(out)
}

// ---------------------------------------------------------------- tune

/// Tuned `eps` per case (rows) and `d` (columns).
#[derive(Debug, Clone)]
pub struct TuneTable {
    pub d_values: Vec<usize>,
    pub rows: Vec<(TestCaseId, Vec<Result<f64, String>>)>,
}

impl TuneTable {
    pub fn failures(&self) -> usize {
        self.rows.iter().flat_map(|(_, r)| r).filter(|r| r.is_err()).count()
    }

    pub fn get(&self, id: TestCaseId, d: usize) -> Option<&Result<f64, String>> {
        let j = self.d_values.iter().position(|&x| x == d)?;
        self.rows.iter().find(|(c, _)| *c == id).map(|(_, r)| &r[j])
    }

    /// Wide CSV: one row per case, one column per `d`; failed cells empty.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["case".to_string()];
        header.extend(self.d_values.iter().map(|d| d.to_string()));
        w.write_record(&header)?;
        for (id, row) in &self.rows {
            let mut rec = vec![id.slug().to_string()];
            rec.extend(row.iter().map(|r| r.as_ref().map(|e| e.to_string()).unwrap_or_default()));
            w.write_record(&rec)?;
        }
        Ok(String::from_utf8(w.into_inner()?)?)
    }
}

pub fn tune_table(cfg: &RunConfig) -> Result<TuneTable, ConfigError> {
    let grid = cfg.grid()?;
    let opts = cfg.sweep_options();
    let rows = cfg
        .cases
        .0
        .iter()
        .map(|&id| (id, tune_grid(id, &grid, &opts).into_iter().map(|r| r.map_err(|e| e.to_string())).collect()))
        .collect();
    Ok(TuneTable { d_values: grid.d_values, rows })
}

pub fn cmd_tune(cfg: &RunConfig, out: &Path) -> Result<(Status, TuneTable)> {
    cfg.validate()?;
    let mut w = ArtifactWriter::create(out)?;
    w.write(CONFIG_FILE, cfg.to_json().as_bytes())?;
    let table = tune_table(cfg)?;
    for (id, row) in &table.rows {
        for (d, r) in table.d_values.iter().zip(row) {
            if let Err(e) = r {
                eprintln!("tuning {id} at d = {d} failed: {e}");
            }
        }
    }
    w.write("tune.csv", table.to_csv()?.as_bytes())?;
    let failed = table.failures();
    w.finish("tune", cfg.hash(), failed)?;
    Ok((Status::from_failures(failed), table))
}

// ---------------------------------------------------------------- power

#[derive(Debug, Clone)]
pub struct PowerArgs {
    pub case: TestCaseId,
    pub rule: ScoringRule,
    pub d: usize,
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub alpha: f64,
    pub seed: u64,
    /// Tuned when absent.
    pub eps: Option<f64>,
    pub target_power: f64,
    pub tune_method: TuneMethod,
    pub tune_samples: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PowerReport {
    pub case: TestCaseId,
    pub rule: ScoringRule,
    pub d: usize,
    pub m: usize,
    pub k: usize,
    pub seed: u64,
    pub eps: f64,
    pub eps_tuned: bool,
    pub result: PowerResult,
}

/// One cell, seeded exactly as a sweep with the same master seed would.
pub fn cmd_power(args: &PowerArgs) -> Result<PowerReport> {
    let seed = Seed(args.seed);
    let eps = match args.eps {
        Some(e) => e,
        None => {
            let opts = TuneOptions {
                target_power: args.target_power,
                alpha: args.alpha,
                n: args.n,
                method: args.tune_method,
                mc_samples: args.tune_samples,
                seed: seed.child("tune", 0),
            };
            tune_epsilon(args.case, args.d, &opts).context("tuning eps")?.eps
        }
    };
    let case = make_case(args.case, args.d, eps).map_err(|e| ConfigError::new(e.to_string()))?;
    let trial = TrialConfig {
        case,
        rule: args.rule.clone(),
        m: args.m,
        n: args.n,
        k: args.k,
        alpha: args.alpha,
        seed: seed.child("cells", 0),
    };
    trial.validate().map_err(|e| ConfigError::new(e.to_string()))?;
    let result = trial.run()?;
    Ok(PowerReport {
        case: args.case,
        rule: args.rule.clone(),
        d: args.d,
        m: args.m,
        k: args.k,
        seed: args.seed,
        eps,
        eps_tuned: args.eps.is_none(),
        result,
    })
}

// ---------------------------------------------------------------- sweep

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContourReport {
    /// Thin-plate-spline ridge parameter.
    pub smoothing: f64,
    /// Dense lattice intervals per grid interval.
    pub resolution: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub levels: Vec<ContourLevel>,
}

pub fn contour_report(surface: &PowerSurface) -> ContourReport {
    let smoothing = 0.0;
    let resolution = DEFAULT_RESOLUTION;
    match smooth_surface(surface, smoothing).and_then(|s| surface_contours(&s, &DEFAULT_LEVELS, resolution)) {
        Ok(set) => ContourReport { smoothing, resolution, error: None, levels: set.levels },
        Err(e) => ContourReport { smoothing, resolution, error: Some(e.to_string()), levels: Vec::new() },
    }
}

/// Directory-safe form of a rule name.
pub fn rule_dir(rule: &ScoringRule) -> String {
    rule.to_string()
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
        .collect()
}

/// Files derived from a surface without any Monte Carlo work.
fn surface_figures(surface: &PowerSurface) -> Result<(String, String)> {
    let contours = contour_report(surface);
    let set = ContourSet { levels: contours.levels.clone() };
    Ok((serde_json::to_string_pretty(&contours)? + "\n", render_svg(surface, Some(&set))))
}

#[derive(Debug)]
pub struct SweepReport {
    pub status: Status,
    pub surfaces: Vec<PowerSurface>,
    pub manifest: RunManifest,
}

/// Runs every (case, rule) surface and writes `out/case/rule/{surface.csv,
/// surface.json, contours.json, heatmap.svg}`, `tune.csv`, `surfaces.csv`,
/// `config.json` and finally `manifest.json`.
pub fn run_sweep(cfg: &RunConfig, out: &Path) -> Result<SweepReport> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    let opts = cfg.sweep_options();
    let mut w = ArtifactWriter::create(out)?;
    w.write(CONFIG_FILE, cfg.to_json().as_bytes())?;

    let total = cfg.cases.0.len() * cfg.rules.len();
    let mut surfaces = Vec::with_capacity(total);
    let mut tune_rows = Vec::new();
    for &case in &cfg.cases.0 {
        let eps = tune_grid(case, &grid, &opts);
        tune_rows.push((case, eps.iter().map(|r| r.as_ref().map(|e| *e).map_err(|e| e.to_string())).collect()));
        for rule in &cfg.rules {
            let surface = sweep_with(case, rule, &grid, &opts, &eps)?;
            let dir = format!("{}/{}", case.slug(), rule_dir(rule));
            let mut csv = Vec::new();
            write_surfaces_csv(std::slice::from_ref(&surface), &mut csv)?;
            w.write(&format!("{dir}/surface.csv"), &csv)?;
            w.write(&format!("{dir}/surface.json"), (serde_json::to_string_pretty(&surface)? + "\n").as_bytes())?;
            let (contours, svg) = surface_figures(&surface)?;
            w.write(&format!("{dir}/contours.json"), contours.as_bytes())?;
            w.write(&format!("{dir}/heatmap.svg"), svg.as_bytes())?;
            eprintln!(
                "[{}/{total}] {case} {rule}: {} failed cells",
                surfaces.len() + 1,
                surface.failed_cells()
            );
            surfaces.push(surface);
        }
    }
    let tune = TuneTable { d_values: grid.d_values.clone(), rows: tune_rows };
    w.write("tune.csv", tune.to_csv()?.as_bytes())?;
    let mut all = Vec::new();
    write_surfaces_csv(&surfaces, &mut all)?;
    w.write("surfaces.csv", &all)?;
    let failed = surfaces.iter().map(PowerSurface::failed_cells).sum();
    let manifest = w.finish("sweep", cfg.hash(), failed)?;
    Ok(SweepReport { status: Status::from_failures(failed), surfaces, manifest })
}

/// Every `case/rule/surface.json` under `dir`, in path order.
pub fn load_surfaces(dir: &Path) -> Result<Vec<PowerSurface>> {
    let mut paths = Vec::new();
    for case in std::fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let case = case?.path();
        if !case.is_dir() {
            continue;
        }
        for rule in std::fs::read_dir(&case)? {
            let file = rule?.path().join("surface.json");
            if file.is_file() {
                paths.push(file);
            }
        }
    }
    paths.sort();
    if paths.is_empty() {
        return Err(ConfigError::new(format!("no surfaces under {}", dir.display())).into());
    }
    paths
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p)?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))
        })
        .collect()
}

// ---------------------------------------------------------------- summary

#[derive(Debug, Clone, Serialize)]
pub struct SummaryReport {
    pub max_mean: Vec<powermap::ror::SummaryEntry>,
    pub level: f64,
    pub ror_fraction: Vec<powermap::ror::SummaryEntry>,
}

pub fn summarize(surfaces: &[PowerSurface], level: f64) -> SummaryReport {
    SummaryReport { max_mean: summary_max_mean(surfaces), level, ror_fraction: ror_fraction(surfaces, level) }
}

pub fn cmd_summary(dir: &Path, level: f64, json: bool) -> Result<String> {
    let report = summarize(&load_surfaces(dir)?, level);
    if json {
        return Ok(serde_json::to_string_pretty(&report)? + "\n");
    }
    Ok(format!(
        "Mean over d of the maximum power over m\n{}\nShare of cells with m > d and power >= {level}\n{}",
        format_summary_table(&report.max_mean),
        format_summary_table(&report.ror_fraction)
    ))
}

// ---------------------------------------------------------------- render

/// Regenerates contours and heatmaps from stored surfaces into `out`.
pub fn cmd_render(dir: &Path, out: &Path) -> Result<usize> {
    let surfaces = load_surfaces(dir)?;
    for s in &surfaces {
        let sub = out.join(s.case.slug()).join(rule_dir(&s.rule));
        std::fs::create_dir_all(&sub)?;
        let (contours, svg) = surface_figures(s)?;
        std::fs::write(sub.join("contours.json"), contours)?;
        std::fs::write(sub.join("heatmap.svg"), svg)?;
    }
    Ok(surfaces.len())
}

// ---------------------------------------------------------------- decision

/// `break-correlations[:SEED]`, `scale:C` or `shift:C`.
pub fn parse_perturbation(s: &str, default_seed: Seed) -> Result<Perturbation, ConfigError> {
    let (kind, arg) = s.split_once(':').map(|(k, a)| (k, Some(a))).unwrap_or((s, None));
    let num = |a: Option<&str>| -> Result<f64, ConfigError> {
        a.and_then(|v| v.parse::<f64>().ok())
            .filter(|v| v.is_finite())
            .ok_or_else(|| ConfigError::new(format!("perturbation `{s}` needs a finite number")))
    };
    match kind {
        "break-correlations" => {
            let seed = match arg {
                Some(a) => Seed(a.parse().map_err(|_| ConfigError::new(format!("bad seed in `{s}`")))?),
                None => default_seed,
            };
            Ok(Perturbation::BreakCorrelations { seed })
        }
        "scale" => Ok(Perturbation::Scale { factor: num(arg)? }),
        "shift" => Ok(Perturbation::Shift { offset: num(arg)? }),
        _ => Err(ConfigError::new(format!("unknown perturbation `{s}`"))),
    }
}

#[derive(Debug, Clone)]
pub struct DecisionArgs {
    pub scenarios: PathBuf,
    pub max_active: usize,
    pub lambda: f64,
    /// Exhaustive up to the size limit, greedy beyond, when absent.
    pub strategy: Option<SelectStrategy>,
    pub perturbations: Vec<Perturbation>,
    pub rules: Vec<ScoringRule>,
    pub n: usize,
    pub alpha: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LooEntry {
    pub rule: ScoringRule,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub power: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_min_80: Option<SampleCount>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Plan chosen on perturbed scenarios, scored on the original ones.
#[derive(Debug, Clone, Serialize)]
pub struct ProfitReport {
    pub plan: Plan,
    pub planned_profit: f64,
    pub realized_profit: f64,
    /// Relative to the plan chosen on the original scenarios, in percent.
    pub decrease_pct: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PerturbationReport {
    pub perturbation: Perturbation,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub profit: Option<ProfitReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub profit_error: Option<String>,
    pub loo_power: Vec<LooEntry>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DecisionReport {
    pub scenarios: usize,
    pub plants: usize,
    pub periods: usize,
    pub lambda: f64,
    pub max_active: usize,
    pub selection: Selection,
    pub perturbations: Vec<PerturbationReport>,
}

pub fn cmd_decision(args: &DecisionArgs) -> Result<DecisionReport> {
    let file = std::fs::File::open(&args.scenarios).with_context(|| format!("opening {}", args.scenarios.display()))?;
    let sc = ScenarioSet::read_csv(file).map_err(|e| ConfigError::new(format!("{}: {e}", args.scenarios.display())))?;
    if args.lambda.is_nan() || args.lambda <= 1.0 {
        return Err(ConfigError::new(format!("lambda must exceed 1, got {}", args.lambda)).into());
    }
    let strategy = args.strategy.unwrap_or(if sc.plants() <= EXHAUSTIVE_LIMIT {
        SelectStrategy::Exhaustive
    } else {
        SelectStrategy::Greedy
    });
    let selection = select_plants(&sc, args.max_active, args.lambda, strategy).map_err(|e| ConfigError::new(e.to_string()))?;
    let sample = sc.as_sample();
    let mut reports = Vec::new();
    for &p in &args.perturbations {
        let profit = perturb(sample.view(), p)
            .and_then(|x| ScenarioSet::from_sample(sc.plants(), sc.periods(), x.view()))
            .and_then(|forecast| {
                let planned = select_plants(&forecast, args.max_active, args.lambda, strategy)?;
                let commitments = optimal_commitments(&forecast, &planned.plan.active, args.lambda)?;
                let plan = Plan { active: planned.plan.active, commitments };
                let realized = expected_profit(&sc, &plan, args.lambda)?;
                let base = selection.profit;
                let decrease_pct = if base != 0.0 { 100.0 * (base - realized) / base.abs() } else { 0.0 };
                Ok(ProfitReport { plan, planned_profit: planned.profit, realized_profit: realized, decrease_pct })
            });
        let loo = args
            .rules
            .iter()
            .map(|rule| match loo_power(sample.view(), p, rule, args.n, args.alpha) {
                Ok(r) => LooEntry { rule: rule.clone(), power: Some(r.power), n_min_80: Some(r.n_min_80), error: None },
                Err(e) => LooEntry { rule: rule.clone(), power: None, n_min_80: None, error: Some(e.to_string()) },
            })
            .collect();
        let (profit, profit_error) = match profit {
            Ok(r) => (Some(r), None),
            Err(e) => (None, Some(e.to_string())),
        };
        reports.push(PerturbationReport { perturbation: p, profit, profit_error, loo_power: loo });
    }
    Ok(DecisionReport {
        scenarios: sc.scenarios(),
        plants: sc.plants(),
        periods: sc.periods(),
        lambda: args.lambda,
        max_active: args.max_active,
        selection,
        perturbations: reports,
    })
}
