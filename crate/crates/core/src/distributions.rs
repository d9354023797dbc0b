//! Samplers and exact log-densities for the distribution families of the
//! benchmark.
//!
//! Structured Gaussian covariances (constant, checkerboard, 2x2 blocks and the
//! mixture-matched `I + eps^2 J`) are sampled in O(d) per draw via closed-form
//! square roots; a dense Cholesky path is kept for cross-checking.

use crate::error::{invalid, Error, Result};
use crate::numeric::{log_cosh, log_norm_cdf, norm_log_pdf, sqrt_2_over_pi, LN_SQRT_2PI};
use crate::rng::Seed;
use nalgebra::{DMatrix, DVector};
use ndarray::{Array2, ArrayViewMut1};
use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::{LN_2, PI};

/// An `m x d` matrix of draws, one draw per row.
pub type SampleMatrix = Array2<f64>;

/// A univariate marginal law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Marginal {
    Normal { mean: f64, std_dev: f64 },
    Exponential { rate: f64 },
    SkewNormal { location: f64, scale: f64, shape: f64 },
}

/// Location and scale giving a skew-normal with shape `alpha` zero mean and
/// unit variance.
pub fn standardized_skew_params(alpha: f64) -> (f64, f64) {
    let delta = alpha / (1.0 + alpha * alpha).sqrt();
    let omega = (1.0 - 2.0 * delta * delta / PI).powf(-0.5);
    let xi = -omega * delta * sqrt_2_over_pi();
    (xi, omega)
}

impl Marginal {
    pub fn normal(mean: f64, std_dev: f64) -> Result<Self> {
        if !(std_dev > 0.0) || !mean.is_finite() || !std_dev.is_finite() {
            return Err(invalid(format!("normal needs finite mean and std_dev > 0, got ({mean}, {std_dev})")));
        }
        Ok(Marginal::Normal { mean, std_dev })
    }

    pub fn standard_normal() -> Self {
        Marginal::Normal { mean: 0.0, std_dev: 1.0 }
    }

    pub fn exponential(rate: f64) -> Result<Self> {
        if !(rate > 0.0) || !rate.is_finite() {
            return Err(invalid(format!("exponential needs rate > 0, got {rate}")));
        }
        Ok(Marginal::Exponential { rate })
    }

    pub fn skew_normal(location: f64, scale: f64, shape: f64) -> Result<Self> {
        if !(scale > 0.0) || !location.is_finite() || !shape.is_finite() || !scale.is_finite() {
            return Err(invalid(format!(
                "skew-normal needs finite parameters and scale > 0, got ({location}, {scale}, {shape})"
            )));
        }
        Ok(Marginal::SkewNormal { location, scale, shape })
    }

    /// Skew-normal with shape `alpha`, mean 0 and variance 1.
    pub fn standardized_skew(alpha: f64) -> Result<Self> {
        if !alpha.is_finite() {
            return Err(invalid("skew shape must be finite"));
        }
        let (xi, omega) = standardized_skew_params(alpha);
        Marginal::skew_normal(xi, omega, alpha)
    }

    pub fn log_density(&self, x: f64) -> f64 {
        match *self {
            Marginal::Normal { mean, std_dev } => norm_log_pdf((x - mean) / std_dev) - std_dev.ln(),
            Marginal::Exponential { rate } => {
                if x < 0.0 {
                    f64::NEG_INFINITY
                } else {
                    rate.ln() - rate * x
                }
            }
            Marginal::SkewNormal { location, scale, shape } => {
                let z = (x - location) / scale;
                LN_2 + norm_log_pdf(z) - scale.ln() + log_norm_cdf(shape * z)
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Marginal::Normal { mean, .. } => mean,
            Marginal::Exponential { rate } => 1.0 / rate,
            Marginal::SkewNormal { location, scale, shape } => {
                let delta = shape / (1.0 + shape * shape).sqrt();
                location + scale * delta * sqrt_2_over_pi()
            }
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            Marginal::Normal { std_dev, .. } => std_dev * std_dev,
            Marginal::Exponential { rate } => 1.0 / (rate * rate),
            Marginal::SkewNormal { scale, shape, .. } => {
                let delta = shape / (1.0 + shape * shape).sqrt();
                scale * scale * (1.0 - 2.0 * delta * delta / PI)
            }
        }
    }

    /// Standardized third moment.
    pub fn skewness(&self) -> f64 {
        match *self {
            Marginal::Normal { .. } => 0.0,
            Marginal::Exponential { .. } => 2.0,
            Marginal::SkewNormal { shape, .. } => {
                let delta = shape / (1.0 + shape * shape).sqrt();
                let b = delta * sqrt_2_over_pi();
                0.5 * (4.0 - PI) * b.powi(3) / (1.0 - b * b).powf(1.5)
            }
        }
    }

    #[inline]
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Marginal::Normal { mean, std_dev } => {
                let z: f64 = rng.sample(StandardNormal);
                mean + std_dev * z
            }
            Marginal::Exponential { rate } => {
                let e: f64 = rng.sample(Exp1);
                e / rate
            }
            Marginal::SkewNormal { location, scale, shape } => {
                let delta = shape / (1.0 + shape * shape).sqrt();
                let u: f64 = rng.sample(StandardNormal);
                let v: f64 = rng.sample(StandardNormal);
                location + scale * (delta * u.abs() + (1.0 - delta * delta).sqrt() * v)
            }
        }
    }
}

/// Correlation pattern of a zero-mean, unit-scale structured Gaussian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CovStructure {
    /// `I`.
    Identity,
    /// `(1 - eps) I + eps J`.
    FullConstant,
    /// `(1 - eps) I + eps s s^T`, `s_a = (-1)^a`.
    Checker,
    /// Block diagonal with `[[1, eps], [eps, 1]]` blocks.
    BlockPairs,
    /// `I + eps^2 J`: the covariance of the two-component mixture.
    MixtureMatched,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Factor {
    Identity,
    /// `a I + b v v^T` with `v` all-ones (`alternate = false`) or alternating signs.
    RankOne {
        a: f64,
        b: f64,
        alternate: bool,
        sqrt_a: f64,
        // (sqrt(a + b d) - sqrt(a)) / d
        lift: f64,
    },
    Blocks {
        rho: f64,
        cross: f64,
    },
}

/// Zero-mean Gaussian with a structured covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuredGaussian {
    dim: usize,
    structure: CovStructure,
    eps: f64,
    factor: Factor,
    log_det: f64,
}

impl StructuredGaussian {
    pub fn new(dim: usize, structure: CovStructure, eps: f64) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dimension must be >= 1"));
        }
        if !eps.is_finite() {
            return Err(invalid("eps must be finite"));
        }
        let d = dim as f64;
        let rank_one = |a: f64, b: f64, alternate: bool| -> Result<(Factor, f64)> {
            let top = a + b * d;
            if !(a > 0.0) || !(top > 0.0) {
                return Err(invalid(format!(
                    "{structure:?} covariance with eps = {eps} is not positive definite at d = {dim}"
                )));
            }
            let sqrt_a = a.sqrt();
            let factor = Factor::RankOne { a, b, alternate, sqrt_a, lift: (top.sqrt() - sqrt_a) / d };
            Ok((factor, (d - 1.0) * a.ln() + top.ln()))
        };
        let (factor, log_det) = match structure {
            CovStructure::Identity => (Factor::Identity, 0.0),
            CovStructure::FullConstant => rank_one(1.0 - eps, eps, false)?,
            CovStructure::Checker => rank_one(1.0 - eps, eps, true)?,
            CovStructure::MixtureMatched => rank_one(1.0, eps * eps, false)?,
            CovStructure::BlockPairs => {
                if !dim.is_multiple_of(2) {
                    return Err(invalid(format!("block-pair covariance needs even d, got {dim}")));
                }
                if !(eps.abs() < 1.0) {
                    return Err(invalid(format!("block-pair covariance needs |eps| < 1, got {eps}")));
                }
                let det = 1.0 - eps * eps;
                (Factor::Blocks { rho: eps, cross: det.sqrt() }, d / 2.0 * det.ln())
            }
        };
        Ok(StructuredGaussian { dim, structure, eps, factor, log_det })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn structure(&self) -> CovStructure {
        self.structure
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// `ln det Sigma`.
    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// Eigenvalues of the covariance, with multiplicities expanded.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let d = self.dim;
        match self.factor {
            Factor::Identity => vec![1.0; d],
            Factor::RankOne { a, b, .. } => {
                let mut ev = vec![a; d];
                ev[0] = a + b * d as f64;
                ev
            }
            Factor::Blocks { rho, .. } => (0..d).map(|i| if i % 2 == 0 { 1.0 + rho } else { 1.0 - rho }).collect(),
        }
    }

    #[inline]
    fn sign(alternate: bool, j: usize) -> f64 {
        if alternate && j % 2 == 1 {
            -1.0
        } else {
            1.0
        }
    }

    fn fill_row<R: Rng + ?Sized>(&self, rng: &mut R, mut row: ArrayViewMut1<f64>) {
        for v in row.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        match self.factor {
            Factor::Identity => {}
            Factor::RankOne { alternate, sqrt_a, lift, .. } => {
                let proj: f64 = row.iter().enumerate().map(|(j, z)| Self::sign(alternate, j) * z).sum();
                let shift = lift * proj;
                for (j, v) in row.iter_mut().enumerate() {
                    *v = sqrt_a * *v + shift * Self::sign(alternate, j);
                }
            }
            Factor::Blocks { rho, cross } => {
                let s = row.as_slice_mut().expect("rows are contiguous");
                for pair in s.chunks_exact_mut(2) {
                    pair[1] = rho * pair[0] + cross * pair[1];
                }
            }
        }
    }

    fn quadratic_form(&self, y: &[f64]) -> f64 {
        match self.factor {
            Factor::Identity => y.iter().map(|v| v * v).sum(),
            Factor::RankOne { a, b, alternate, .. } => {
                let d = self.dim as f64;
                let q: f64 = y.iter().map(|v| v * v).sum();
                let s: f64 = y.iter().enumerate().map(|(j, v)| Self::sign(alternate, j) * v).sum();
                (q - s * s / d) / a + s * s / (d * (a + b * d))
            }
            Factor::Blocks { rho, .. } => {
                let det = 1.0 - rho * rho;
                y.chunks_exact(2)
                    .map(|p| (p[0] * p[0] - 2.0 * rho * p[0] * p[1] + p[1] * p[1]) / det)
                    .sum()
            }
        }
    }

    pub fn log_density(&self, y: &[f64]) -> f64 {
        -0.5 * (self.quadratic_form(y) + self.log_det) - self.dim as f64 * LN_SQRT_2PI
    }

    /// Dense covariance matrix.
    pub fn covariance(&self) -> DMatrix<f64> {
        let d = self.dim;
        DMatrix::from_fn(d, d, |i, j| match self.factor {
            Factor::Identity => (i == j) as u8 as f64,
            Factor::RankOne { a, b, alternate, .. } => {
                let diag = if i == j { a } else { 0.0 };
                diag + b * Self::sign(alternate, i) * Self::sign(alternate, j)
            }
            Factor::Blocks { rho, .. } => {
                if i == j {
                    1.0
                } else if i / 2 == j / 2 {
                    rho
                } else {
                    0.0
                }
            }
        })
    }
}

/// Equal-weight mixture `N(eps 1, I) / 2 + N(-eps 1, I) / 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianMixtureTwo {
    dim: usize,
    eps: f64,
}

impl GaussianMixtureTwo {
    pub fn new(dim: usize, eps: f64) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dimension must be >= 1"));
        }
        if !eps.is_finite() {
            return Err(invalid("eps must be finite"));
        }
        Ok(GaussianMixtureTwo { dim, eps })
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    fn fill_row<R: Rng + ?Sized>(&self, rng: &mut R, row: ArrayViewMut1<f64>) {
        let shift = if rng.random::<bool>() { self.eps } else { -self.eps };
        for v in row {
            let z: f64 = rng.sample(StandardNormal);
            *v = z + shift;
        }
    }

    pub fn log_density(&self, y: &[f64]) -> f64 {
        let d = self.dim as f64;
        let base: f64 = y.iter().map(|&v| norm_log_pdf(v)).sum();
        let s: f64 = y.iter().sum();
        base - 0.5 * d * self.eps * self.eps + log_cosh(self.eps * s)
    }
}

/// A d-variate law: a sampler plus an exact log-density.
#[derive(Debug, Clone, PartialEq)]
pub enum Distribution {
    IndependentMarginals(Vec<Marginal>),
    GaussianStructured(StructuredGaussian),
    GaussianMixtureTwo(GaussianMixtureTwo),
}

impl Distribution {
    pub fn independent(marginals: Vec<Marginal>) -> Result<Self> {
        if marginals.is_empty() {
            return Err(invalid("dimension must be >= 1"));
        }
        Ok(Distribution::IndependentMarginals(marginals))
    }

    pub fn iid(marginal: Marginal, dim: usize) -> Result<Self> {
        Self::independent(vec![marginal; dim])
    }

    pub fn gaussian(dim: usize, structure: CovStructure, eps: f64) -> Result<Self> {
        Ok(Distribution::GaussianStructured(StructuredGaussian::new(dim, structure, eps)?))
    }

    pub fn mixture(dim: usize, eps: f64) -> Result<Self> {
        Ok(Distribution::GaussianMixtureTwo(GaussianMixtureTwo::new(dim, eps)?))
    }

    pub fn dim(&self) -> usize {
        match self {
            Distribution::IndependentMarginals(m) => m.len(),
            Distribution::GaussianStructured(g) => g.dim,
            Distribution::GaussianMixtureTwo(g) => g.dim,
        }
    }

    /// Draws `m` i.i.d. rows. Identical `(self, m, seed)` give identical bits.
    pub fn sample(&self, m: usize, seed: Seed) -> SampleMatrix {
        let mut rng = seed.rng();
        let mut out = Array2::zeros((m, self.dim()));
        for row in out.rows_mut() {
            self.fill_row(&mut rng, row);
        }
        out
    }

    /// Draws a single vector.
    pub fn sample_one(&self, seed: Seed) -> Vec<f64> {
        self.sample(1, seed).into_raw_vec_and_offset().0
    }

    pub(crate) fn fill_row<R: Rng + ?Sized>(&self, rng: &mut R, mut row: ArrayViewMut1<f64>) {
        match self {
            Distribution::IndependentMarginals(ms) => {
                for (v, m) in row.iter_mut().zip(ms) {
                    *v = m.sample(rng);
                }
            }
            Distribution::GaussianStructured(g) => g.fill_row(rng, row.view_mut()),
            Distribution::GaussianMixtureTwo(g) => g.fill_row(rng, row.view_mut()),
        }
    }

    /// Exact log-density at `y`. Points outside the support give `-inf`.
    pub fn log_density(&self, y: &[f64]) -> Result<f64> {
        if y.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: y.len() });
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(match self {
            Distribution::IndependentMarginals(ms) => ms.iter().zip(y).map(|(m, &v)| m.log_density(v)).sum(),
            Distribution::GaussianStructured(g) => g.log_density(y),
            Distribution::GaussianMixtureTwo(g) => g.log_density(y),
        })
    }

    pub fn mean(&self) -> Vec<f64> {
        match self {
            Distribution::IndependentMarginals(ms) => ms.iter().map(Marginal::mean).collect(),
            _ => vec![0.0; self.dim()],
        }
    }

    /// Dense covariance matrix.
    pub fn covariance(&self) -> DMatrix<f64> {
        match self {
            Distribution::IndependentMarginals(ms) => {
                DMatrix::from_diagonal(&DVector::from_iterator(ms.len(), ms.iter().map(Marginal::variance)))
            }
            Distribution::GaussianStructured(g) => g.covariance(),
            Distribution::GaussianMixtureTwo(g) => {
                let e2 = g.eps * g.eps;
                DMatrix::from_fn(g.dim, g.dim, |i, j| if i == j { 1.0 + e2 } else { e2 })
            }
        }
    }

    /// Whether the law is exactly multivariate normal.
    pub fn is_gaussian(&self) -> bool {
        match self {
            Distribution::IndependentMarginals(ms) => ms.iter().all(|m| matches!(m, Marginal::Normal { .. })),
            Distribution::GaussianStructured(_) => true,
            Distribution::GaussianMixtureTwo(g) => g.eps == 0.0,
        }
    }

    /// Generic O(d^3) sampler through a dense Cholesky factor. Gaussian laws only.
    pub fn sample_cholesky(&self, m: usize, seed: Seed) -> Result<SampleMatrix> {
        if !self.is_gaussian() {
            return Err(invalid("Cholesky sampling needs a Gaussian law"));
        }
        let d = self.dim();
        let chol = self.covariance().cholesky().ok_or(Error::NumericallySingular)?;
        let l = chol.l();
        let mean = self.mean();
        let mut rng = seed.rng();
        let mut out = Array2::zeros((m, d));
        let mut z = DVector::zeros(d);
        for mut row in out.rows_mut() {
            for v in z.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            let x = &l * &z;
            for ((o, xi), mu) in row.iter_mut().zip(x.iter()).zip(&mean) {
                *o = xi + mu;
            }
        }
        Ok(out)
    }
}
