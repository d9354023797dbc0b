//! The nineteen benchmark test cases.
//!
//! Each case maps `(d, eps)` to a ground-truth / forecast pair that differ in
//! one controlled feature. At `eps = identity_eps` the two laws coincide.

use crate::distributions::{CovStructure, Distribution, Marginal};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum TestCaseId {
    NormalSingleMeanUp,
    NormalAllMeanUp,
    NormalSingleStdDown,
    NormalSingleStdUp,
    NormalAllStdDown,
    NormalAllStdUp,
    ExpSingleMeanDown,
    ExpSingleMeanUp,
    ExpAllMeanDown,
    ExpAllMeanUp,
    SkewAllDown,
    FullCovMissing,
    FullCovExtra,
    CheckerCovMissing,
    CheckerCovExtra,
    BlockCovMissing,
    BlockCovExtra,
    MixtureMissing,
    MixtureExtra,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Normal,
    Exponential,
    SkewNormal,
    FullCov,
    CheckerCov,
    BlockCov,
    Mixture,
}

/// Which dimensions the discrepancy touches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Subset {
    Single,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    Up,
    Down,
    /// The ground truth carries structure the forecast lacks.
    Missing,
    /// The forecast carries structure the ground truth lacks.
    Extra,
}

/// Static description of a test case.
#[derive(Debug, Clone, Serialize)]
pub struct CaseInfo {
    pub id: TestCaseId,
    pub label: &'static str,
    pub family: Family,
    pub subset: Subset,
    pub direction: Direction,
    pub identity_eps: f64,
    /// Human-readable admissible range for `eps`.
    pub valid_range: &'static str,
}

const ALL: [TestCaseId; 19] = [
    TestCaseId::NormalSingleMeanUp,
    TestCaseId::NormalAllMeanUp,
    TestCaseId::NormalSingleStdDown,
    TestCaseId::NormalSingleStdUp,
    TestCaseId::NormalAllStdDown,
    TestCaseId::NormalAllStdUp,
    TestCaseId::ExpSingleMeanDown,
    TestCaseId::ExpSingleMeanUp,
    TestCaseId::ExpAllMeanDown,
    TestCaseId::ExpAllMeanUp,
    TestCaseId::SkewAllDown,
    TestCaseId::FullCovMissing,
    TestCaseId::FullCovExtra,
    TestCaseId::CheckerCovMissing,
    TestCaseId::CheckerCovExtra,
    TestCaseId::BlockCovMissing,
    TestCaseId::BlockCovExtra,
    TestCaseId::MixtureMissing,
    TestCaseId::MixtureExtra,
];

impl TestCaseId {
    pub fn all() -> &'static [TestCaseId; 19] {
        &ALL
    }

    /// Stable identifier used on the command line and in output files.
    pub fn slug(self) -> &'static str {
        use TestCaseId::*;
        match self {
            NormalSingleMeanUp => "normal-single-mean-up",
            NormalAllMeanUp => "normal-all-mean-up",
            NormalSingleStdDown => "normal-single-std-down",
            NormalSingleStdUp => "normal-single-std-up",
            NormalAllStdDown => "normal-all-std-down",
            NormalAllStdUp => "normal-all-std-up",
            ExpSingleMeanDown => "exp-single-mean-down",
            ExpSingleMeanUp => "exp-single-mean-up",
            ExpAllMeanDown => "exp-all-mean-down",
            ExpAllMeanUp => "exp-all-mean-up",
            SkewAllDown => "skew-all-down",
            FullCovMissing => "full-cov-missing",
            FullCovExtra => "full-cov-extra",
            CheckerCovMissing => "checker-cov-missing",
            CheckerCovExtra => "checker-cov-extra",
            BlockCovMissing => "block-cov-missing",
            BlockCovExtra => "block-cov-extra",
            MixtureMissing => "mixture-missing",
            MixtureExtra => "mixture-extra",
        }
    }

    pub fn info(self) -> CaseInfo {
        use Direction::*;
        use Family::*;
        use Subset::*;
        use TestCaseId::*;
        let (label, family, subset, direction, identity_eps, valid_range) = match self {
            NormalSingleMeanUp => ("Normal (Single, mu up)", Normal, Single, Up, 0.0, "eps finite"),
            NormalAllMeanUp => ("Normal (All, mu up)", Normal, All, Up, 0.0, "eps finite"),
            NormalSingleStdDown => ("Normal (Single, sigma down)", Normal, Single, Down, 1.0, "eps > 0"),
            NormalSingleStdUp => ("Normal (Single, sigma up)", Normal, Single, Up, 1.0, "eps > 0"),
            NormalAllStdDown => ("Normal (All, sigma down)", Normal, All, Down, 1.0, "eps > 0"),
            NormalAllStdUp => ("Normal (All, sigma up)", Normal, All, Up, 1.0, "eps > 0"),
            ExpSingleMeanDown => ("Exponential (Single, mu down)", Exponential, Single, Down, 1.0, "eps > 0"),
            ExpSingleMeanUp => ("Exponential (Single, mu up)", Exponential, Single, Up, 1.0, "eps > 0"),
            ExpAllMeanDown => ("Exponential (All, mu down)", Exponential, All, Down, 1.0, "eps > 0"),
            ExpAllMeanUp => ("Exponential (All, mu up)", Exponential, All, Up, 1.0, "eps > 0"),
            SkewAllDown => ("Skew Normal (All, alpha down)", SkewNormal, All, Down, 0.0, "eps finite"),
            FullCovMissing => ("Full Cov (Missing)", FullCov, All, Missing, 0.0, "-1/(d-1) < eps < 1"),
            FullCovExtra => ("Full Cov (Extra)", FullCov, All, Extra, 0.0, "-1/(d-1) < eps < 1"),
            CheckerCovMissing => ("Checker Cov (Missing)", CheckerCov, All, Missing, 0.0, "-1/(d-1) < eps < 1"),
            CheckerCovExtra => ("Checker Cov (Extra)", CheckerCov, All, Extra, 0.0, "-1/(d-1) < eps < 1"),
            BlockCovMissing => ("Block Cov (Missing)", BlockCov, All, Missing, 0.0, "|eps| < 1, d even"),
            BlockCovExtra => ("Block Cov (Extra)", BlockCov, All, Extra, 0.0, "|eps| < 1, d even"),
            MixtureMissing => ("Mixture (Missing)", Mixture, All, Missing, 0.0, "eps finite"),
            MixtureExtra => ("Mixture (Extra)", Mixture, All, Extra, 0.0, "eps finite"),
        };
        CaseInfo { id: self, label, family, subset, direction, identity_eps, valid_range }
    }

    pub fn identity_eps(self) -> f64 {
        self.info().identity_eps
    }
}

impl fmt::Display for TestCaseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.slug())
    }
}

impl FromStr for TestCaseId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase().replace('_', "-");
        ALL.iter()
            .copied()
            .find(|c| c.slug() == s)
            .ok_or_else(|| Error::Parse(format!("unknown test case `{s}`")))
    }
}

impl TryFrom<String> for TestCaseId {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<TestCaseId> for String {
    fn from(c: TestCaseId) -> String {
        c.slug().to_string()
    }
}

/// A ground-truth / forecast pair.
#[derive(Debug, Clone, PartialEq)]
pub struct CasePair {
    pub id: TestCaseId,
    pub ground_truth: Distribution,
    pub forecast: Distribution,
    pub d: usize,
    pub eps: f64,
    pub identity_eps: f64,
}

/// Every case with its metadata, in stable order.
pub fn list_cases() -> Vec<CaseInfo> {
    ALL.iter().map(|c| c.info()).collect()
}

fn case_error(id: TestCaseId, d: usize, eps: f64, reason: impl Into<String>) -> Error {
    Error::InvalidCase { case: id.slug().to_string(), d, eps, reason: reason.into() }
}

/// Builds the distribution pair of `id` at dimension `d` and magnitude `eps`.
pub fn make_case(id: TestCaseId, d: usize, eps: f64) -> Result<CasePair> {
    use TestCaseId::*;
    let info = id.info();
    let fail = |reason: String| case_error(id, d, eps, reason);
    if d < 2 {
        return Err(fail("d must be at least 2".into()));
    }
    if !eps.is_finite() {
        return Err(fail("eps must be finite".into()));
    }
    let wrap = |r: Result<Distribution>| r.map_err(|e| fail(e.to_string()));
    let std_normal = Marginal::standard_normal();

    // Marginal families: the first dimension (Single) or all of them (All)
    // take `altered` in the ground truth; the forecast is the reference law.
    let marginal_pair = |altered: Marginal, reference: Marginal| -> Result<(Distribution, Distribution)> {
        let mut gt = vec![reference; d];
        match info.subset {
            Subset::Single => gt[0] = altered,
            Subset::All => gt.iter_mut().for_each(|m| *m = altered),
        }
        Ok((wrap(Distribution::independent(gt))?, wrap(Distribution::iid(reference, d))?))
    };
    let positive = |what: &str| -> Result<()> {
        if eps > 0.0 {
            Ok(())
        } else {
            Err(fail(format!("{what} needs eps > 0")))
        }
    };
    let covariance_pair = |structure: CovStructure| -> Result<(Distribution, Distribution)> {
        let structured = wrap(Distribution::gaussian(d, structure, eps))?;
        let identity = wrap(Distribution::gaussian(d, CovStructure::Identity, 0.0))?;
        Ok(match info.direction {
            Direction::Missing => (structured, identity),
            _ => (identity, structured),
        })
    };

    let (ground_truth, forecast) = match id {
        NormalSingleMeanUp | NormalAllMeanUp => marginal_pair(Marginal::Normal { mean: eps, std_dev: 1.0 }, std_normal)?,
        NormalSingleStdDown | NormalSingleStdUp | NormalAllStdDown | NormalAllStdUp => {
            positive("a standard deviation")?;
            marginal_pair(Marginal::Normal { mean: 0.0, std_dev: eps }, std_normal)?
        }
        ExpSingleMeanDown | ExpSingleMeanUp | ExpAllMeanDown | ExpAllMeanUp => {
            positive("an exponential mean")?;
            marginal_pair(Marginal::Exponential { rate: 1.0 / eps }, Marginal::Exponential { rate: 1.0 })?
        }
        SkewAllDown => {
            let skew = Marginal::standardized_skew(eps).map_err(|e| fail(e.to_string()))?;
            marginal_pair(skew, std_normal)?
        }
        FullCovMissing | FullCovExtra => covariance_pair(CovStructure::FullConstant)?,
        CheckerCovMissing | CheckerCovExtra => covariance_pair(CovStructure::Checker)?,
        BlockCovMissing | BlockCovExtra => covariance_pair(CovStructure::BlockPairs)?,
        MixtureMissing | MixtureExtra => {
            let mixture = wrap(Distribution::mixture(d, eps))?;
            let matched = wrap(Distribution::gaussian(d, CovStructure::MixtureMatched, eps))?;
            if id == MixtureMissing {
                (mixture, matched)
            } else {
                (matched, mixture)
            }
        }
    };
    Ok(CasePair { id, ground_truth, forecast, d, eps, identity_eps: info.identity_eps })
}
