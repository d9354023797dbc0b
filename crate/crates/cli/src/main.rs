use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};
use powermap::decision::SelectStrategy;
use powermap::power::TuneMethod;
use powermap::{ScoringRule, Seed, TestCaseId};
use powermap_cli::commands::{self, ConfigArgs, DecisionArgs, PowerArgs};
use powermap_cli::{manifest, ConfigError, Profile, Status};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "powermap", version, about = "Power of multivariate scoring rules under known misspecification")]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProfileArg {
    Desk,
    Paper,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Analytic,
    MonteCarlo,
    Auto,
}

impl From<MethodArg> for TuneMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Analytic => TuneMethod::Analytic,
            MethodArg::MonteCarlo => TuneMethod::MonteCarlo,
            MethodArg::Auto => TuneMethod::Auto,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Exhaustive,
    Greedy,
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration; fields left out come from the profile.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    profile: Option<ProfileArg>,
    /// Test case (repeatable, or `all`).
    #[arg(long = "case")]
    cases: Vec<String>,
    /// Scoring rule, e.g. `crps-q`, `es-partial`, `vg-p0.5` (repeatable).
    #[arg(long = "rule")]
    rules: Vec<String>,
    /// Monte Carlo trials per cell.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Defaults to the config's, then $POWERMAP_OUTPUT_DIR, then ./powermap-out.
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

impl RunArgs {
    fn to_config_args(&self) -> ConfigArgs {
        ConfigArgs {
            config: self.config.clone(),
            profile: self.profile.map(|p| match p {
                ProfileArg::Desk => Profile::Desk,
                ProfileArg::Paper => Profile::Paper,
            }),
            cases: self.cases.clone(),
            rules: self.rules.clone(),
            k: self.k,
            master_seed: self.seed,
            output_dir: self.output_dir.clone(),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// List the test cases.
    Cases {
        /// Only these cases.
        names: Vec<String>,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Tune eps for every case and dimension of the grid.
    Tune(RunArgs),
    /// Power of one rule at one (case, d, m).
    Power {
        #[arg(long)]
        case: TestCaseId,
        #[arg(long)]
        rule: ScoringRule,
        #[arg(long)]
        d: usize,
        /// Forecast sample size (ignored by nll).
        #[arg(long, default_value_t = 1000)]
        m: usize,
        #[arg(long, default_value_t = 30)]
        n: usize,
        #[arg(long, default_value_t = 1000)]
        k: usize,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, default_value_t = 2023)]
        seed: u64,
        /// Discrepancy size; tuned to the target NLL power when omitted.
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long, default_value_t = 0.8)]
        target_power: f64,
        #[arg(long, value_enum, default_value = "auto")]
        tune_method: MethodArg,
        #[arg(long, default_value_t = 10_000)]
        tune_samples: usize,
    },
    /// Power surfaces over the (d, m) grid with contours and heatmaps.
    Sweep(RunArgs),
    /// Summary tables of a sweep directory.
    Summary {
        dir: PathBuf,
        /// Power level for the reliable-region share.
        #[arg(long, default_value_t = 0.5)]
        level: f64,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Regenerate contours and heatmaps from stored surfaces.
    Render {
        dir: PathBuf,
        /// Defaults to DIR itself.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check every file of an output directory against its manifest.
    Verify { dir: PathBuf },
    /// Plant selection with commitments, plus leave-one-out power of
    /// perturbed scenario sets.
    Decision {
        /// Long CSV with header scenario,plant,period,value.
        scenarios: PathBuf,
        /// Most plants that may be active.
        #[arg(long)]
        max_active: usize,
        #[arg(long, default_value_t = 10.0)]
        lambda: f64,
        #[arg(long, value_enum)]
        strategy: Option<StrategyArg>,
        /// `break-correlations[:SEED]`, `scale:C` or `shift:C` (repeatable).
        #[arg(long = "perturb")]
        perturbations: Vec<String>,
        /// Sample-based rules for leave-one-out power (repeatable).
        #[arg(long = "rule", default_values_t = ["crps-q".to_string(), "es-partial".to_string(), "vg".to_string()])]
        rules: Vec<String>,
        #[arg(long, default_value_t = 30)]
        n: usize,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, default_value_t = 2023)]
        seed: u64,
    },
}

fn run(cli: Cli) -> Result<Status> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global()?;
    }
    match cli.command {
        Command::Cases { names, format } => {
            print!("{}", commands::cmd_cases(&names, matches!(format, Format::Json))?);
        }
        Command::Tune(args) => {
            let cfg = commands::build_config(&args.to_config_args())?;
            let out = cfg.output_dir.clone().expect("resolved by build_config");
            let (status, table) = commands::cmd_tune(&cfg, &out)?;
            print!("{}", table.to_csv()?);
            eprintln!("wrote {}", out.display());
            return Ok(status);
        }
        Command::Power { case, rule, d, m, n, k, alpha, seed, eps, target_power, tune_method, tune_samples } => {
            let report = commands::cmd_power(&PowerArgs {
                case,
                rule,
                d,
                m,
                n,
                k,
                alpha,
                seed,
                eps,
                target_power,
                tune_method: tune_method.into(),
                tune_samples,
            })?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Sweep(args) => {
            let cfg = commands::build_config(&args.to_config_args())?;
            let out = cfg.output_dir.clone().expect("resolved by build_config");
            let report = commands::run_sweep(&cfg, &out)?;
            eprintln!("wrote {} files under {}", report.manifest.artifacts.len() + 1, out.display());
            return Ok(report.status);
        }
        Command::Summary { dir, level, format } => {
            print!("{}", commands::cmd_summary(&dir, level, matches!(format, Format::Json))?);
        }
        Command::Render { dir, out } => {
            let n = commands::cmd_render(&dir, out.as_ref().unwrap_or(&dir))?;
            eprintln!("rendered {n} surfaces");
        }
        Command::Verify { dir } => {
            let bad = manifest::verify(&dir)?;
            if !bad.is_empty() {
                for p in &bad {
                    eprintln!("mismatch: {p}");
                }
                anyhow::bail!("{} of the listed files do not match the manifest", bad.len());
            }
            eprintln!("all files match");
        }
        Command::Decision { scenarios, max_active, lambda, strategy, perturbations, rules, n, alpha, seed } => {
            let perturbations = perturbations
                .iter()
                .map(|p| commands::parse_perturbation(p, Seed(seed)))
                .collect::<Result<Vec<_>, _>>()?;
            let rules = rules
                .iter()
                .map(|r| r.parse::<ScoringRule>().map_err(|e| ConfigError::new(format!("rule `{r}`: {e}"))))
                .collect::<Result<Vec<_>, _>>()?;
            let report = commands::cmd_decision(&DecisionArgs {
                scenarios,
                max_active,
                lambda,
                strategy: strategy.map(|s| match s {
                    StrategyArg::Exhaustive => SelectStrategy::Exhaustive,
                    StrategyArg::Greedy => SelectStrategy::Greedy,
                }),
                perturbations,
                rules,
                n,
                alpha,
            })?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
    }
    Ok(Status::Complete)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(status) => ExitCode::from(status.exit_code()),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if e.downcast_ref::<ConfigError>().is_some() { 2 } else { 1 })
        }
    }
}
