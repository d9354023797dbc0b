//! Run configuration: a profile preset, overlaid by a JSON file, overlaid by
//! command-line flags.

use powermap::power::TuneMethod;
use powermap::ror::{SweepGrid, SweepOptions};
use powermap::{ScoringRule, Seed, TestCaseId};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

/// Rejected input. Maps to exit code 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

impl ConfigError {
    pub fn new(msg: impl Into<String>) -> Self {
        ConfigError(msg.into())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    /// Small grid, K = 200.
    Desk,
    /// Full grid, K = 1000.
    Paper,
}

impl FromStr for Profile {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, ConfigError> {
        match s {
            "desk" => Ok(Profile::Desk),
            "paper" => Ok(Profile::Paper),
            other => Err(ConfigError(format!("unknown profile `{other}` (expected desk or paper)"))),
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Profile::Desk => "desk",
            Profile::Paper => "paper",
        })
    }
}

/// Parses case names, failing on the first unknown one.
pub fn parse_cases(names: &[String]) -> Result<Vec<TestCaseId>, ConfigError> {
    let mut out = Vec::new();
    for name in names {
        if name == "all" {
            out.extend(TestCaseId::all());
            continue;
        }
        let id = name.parse::<TestCaseId>().map_err(|_| ConfigError(format!("unknown test case `{name}`")))?;
        out.push(id);
    }
    Ok(out)
}

/// Case list; reads `"all"` or a list of names, writes the explicit list.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseList(pub Vec<TestCaseId>);

impl Serialize for CaseList {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.0.serialize(s)
    }
}

impl<'de> Deserialize<'de> for CaseList {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            One(String),
            Many(Vec<String>),
        }
        let names = match Raw::deserialize(d)? {
            Raw::One(s) => vec![s],
            Raw::Many(v) => v,
        };
        parse_cases(&names).map(CaseList).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub profile: Profile,
    pub cases: CaseList,
    pub rules: Vec<ScoringRule>,
    pub d_values: Vec<usize>,
    pub m_values: Vec<usize>,
    pub k: usize,
    pub n: usize,
    pub alpha: f64,
    pub target_power: f64,
    pub master_seed: u64,
    pub tune_method: TuneMethod,
    pub tune_samples: usize,
    /// Quadratic-cost rules are skipped above this `m`; `null` lifts the cap.
    pub max_quadratic_m: Option<usize>,
    /// Not part of the config hash.
    pub output_dir: Option<PathBuf>,
}

/// Every field optional; what a config file may contain.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct Overlay {
    profile: Option<Profile>,
    cases: Option<CaseList>,
    rules: Option<Vec<ScoringRule>>,
    d_values: Option<Vec<usize>>,
    m_values: Option<Vec<usize>>,
    k: Option<usize>,
    n: Option<usize>,
    alpha: Option<f64>,
    target_power: Option<f64>,
    master_seed: Option<u64>,
    tune_method: Option<TuneMethod>,
    tune_samples: Option<usize>,
    #[serde(default, deserialize_with = "present")]
    max_quadratic_m: Option<Option<usize>>,
    output_dir: Option<PathBuf>,
}

/// Distinguishes an explicit `null` from an absent field.
fn present<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Option<usize>>, D::Error> {
    Ok(Some(Option::deserialize(d)?))
}

impl RunConfig {
    pub fn preset(profile: Profile) -> Self {
        let rules = match profile {
            Profile::Desk => vec![
                ScoringRule::Nll,
                ScoringRule::crps_q(),
                ScoringRule::EsPartial { p: 1.0 },
                ScoringRule::Variogram { p: 1.0 },
            ],
            Profile::Paper => vec![
                ScoringRule::Nll,
                ScoringRule::crps_q(),
                ScoringRule::CrpsE,
                ScoringRule::EsFull { p: 1.0 },
                ScoringRule::EsPartial { p: 1.0 },
                ScoringRule::Variogram { p: 1.0 },
                ScoringRule::DawidSebastiani,
            ],
        };
        let (grid, k) = match profile {
            Profile::Desk => (SweepGrid::desk(), 200),
            Profile::Paper => (SweepGrid::paper(), 1000),
        };
        RunConfig {
            profile,
            cases: CaseList(TestCaseId::all().to_vec()),
            rules,
            d_values: grid.d_values,
            m_values: grid.m_values,
            k,
            n: grid.n,
            alpha: grid.alpha,
            target_power: 0.8,
            master_seed: 2023,
            tune_method: TuneMethod::Auto,
            tune_samples: 10_000,
            max_quadratic_m: Some(1 << 12),
            output_dir: None,
        }
    }

    /// Preset of the file's profile (or `fallback`) with the file's fields on top.
    pub fn from_json(text: &str, fallback: Profile) -> Result<Self, ConfigError> {
        let o: Overlay = serde_json::from_str(text).map_err(|e| ConfigError(format!("config: {e}")))?;
        let mut c = RunConfig::preset(o.profile.unwrap_or(fallback));
        macro_rules! take {
            ($($f:ident),*) => { $(if let Some(v) = o.$f { c.$f = v; })* };
        }
        take!(cases, rules, d_values, m_values, k, n, alpha, target_power, master_seed, tune_method, tune_samples, max_quadratic_m);
        if o.output_dir.is_some() {
            c.output_dir = o.output_dir;
        }
        Ok(c)
    }

    pub fn from_file(path: &Path, fallback: Profile) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        Self::from_json(&text, fallback)
    }

    /// Checks every precondition of the work the config describes.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let err = |m: String| Err(ConfigError(m));
        if self.cases.0.is_empty() {
            return err("no test cases selected".into());
        }
        if self.rules.is_empty() {
            return err("no scoring rules selected".into());
        }
        for (i, c) in self.cases.0.iter().enumerate() {
            if self.cases.0[..i].contains(c) {
                return err(format!("test case `{c}` listed twice"));
            }
        }
        for (i, r) in self.rules.iter().enumerate() {
            r.validate().map_err(|e| ConfigError(format!("rule `{r}`: {e}")))?;
            if self.rules[..i].iter().any(|q| q.to_string() == r.to_string()) {
                return err(format!("rule `{r}` listed twice"));
            }
        }
        self.grid()?;
        if self.k < 2 {
            return err(format!("K must be at least 2, got {}", self.k));
        }
        if !(self.target_power > self.alpha && self.target_power < 1.0) {
            return err(format!("target_power must lie in (alpha, 1), got {}", self.target_power));
        }
        if self.tune_samples < 2 {
            return err(format!("tune_samples must be at least 2, got {}", self.tune_samples));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<SweepGrid, ConfigError> {
        SweepGrid::new(self.d_values.clone(), self.m_values.clone(), self.n, self.alpha)
            .map_err(|e| ConfigError(format!("grid: {e}")))
    }

    pub fn sweep_options(&self) -> SweepOptions {
        SweepOptions {
            k: self.k,
            seed: Seed(self.master_seed),
            max_quadratic_m: self.max_quadratic_m,
            target_power: self.target_power,
            tune_method: self.tune_method,
            tune_samples: self.tune_samples,
            ..Default::default()
        }
    }

    /// SHA-256 of the canonical JSON form, ignoring `output_dir`.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = None;
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
