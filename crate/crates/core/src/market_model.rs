//! Domain types of the market and the per-owner privacy accounting.

use alloc::vec::Vec;
use core::f64::consts::SQRT_2;

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::rng;

/// Coefficients with magnitude at or below this count as zero in `||q||_0`.
pub const SUPPORT_ZERO_TOL: f64 = 1e-12;

/// Semi-norm `f` used by the original pricing function.
#[derive(Debug, Clone, PartialEq)]
pub enum NormKind {
    L2,
    /// `sqrt(sum_j w_j q_j^2)` with every `w_j > 0`.
    WeightedL2(Vec<f64>),
}

/// How the buyer's value intensity `A(q)` is obtained.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum IntensityKind {
    /// `ln(1 + ||q||_0)`.
    #[default]
    LogSupport,
    Constant(f64),
    /// Exact-match lookup on the coefficient vector.
    Table(Vec<(Vec<f64>, f64)>),
    /// `ln(q_1 + shift)` for single-item queries.
    ShiftedLog(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearQuery {
    coeffs: Vec<f64>,
    norm: NormKind,
    intensity: IntensityKind,
}

impl LinearQuery {
    /// L2 semi-norm and log-support intensity.
    pub fn new(coeffs: impl Into<Vec<f64>>) -> Result<Self> {
        let coeffs = coeffs.into();
        if coeffs.is_empty() {
            return Err(Error::EmptyQuery);
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("query coefficients"));
        }
        Ok(Self {
            coeffs,
            norm: NormKind::L2,
            intensity: IntensityKind::LogSupport,
        })
    }

    pub fn with_norm(mut self, norm: NormKind) -> Result<Self> {
        if let NormKind::WeightedL2(w) = &norm {
            if w.len() != self.coeffs.len() {
                return Err(Error::DimensionMismatch {
                    expected: self.coeffs.len(),
                    found: w.len(),
                });
            }
            if let Some(&bad) = w.iter().find(|&&v| !(v > 0.0 && v.is_finite())) {
                return Err(Error::NonPositiveParameter {
                    name: "norm weight",
                    value: bad,
                });
            }
        }
        self.norm = norm;
        Ok(self)
    }

    pub fn with_intensity(mut self, intensity: IntensityKind) -> Self {
        self.intensity = intensity;
        self
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn norm_kind(&self) -> &NormKind {
        &self.norm
    }

    pub fn intensity_kind(&self) -> &IntensityKind {
        &self.intensity
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Same norm and intensity kind, coefficients multiplied by `alpha`.
    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            coeffs: self.coeffs.iter().map(|c| c * alpha).collect(),
            norm: self.norm.clone(),
            intensity: self.intensity.clone(),
        }
    }

    /// Same norm and intensity kind with new coefficients.
    pub fn with_coeffs(&self, coeffs: impl Into<Vec<f64>>) -> Result<Self> {
        let fresh = Self::new(coeffs)?;
        let fresh = fresh.with_norm(self.norm.clone())?;
        Ok(fresh.with_intensity(self.intensity.clone()))
    }
}

/// One game instance: owner weights `c`, change bound `gamma`, minimum
/// tradable variance and the pricing exponent `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketScenario {
    privacy_weights: Vec<f64>,
    change_bound: f64,
    sigma_min: f64,
    exponent: f64,
    sigma_min_overrides: Vec<(Vec<f64>, f64)>,
    any_exponent: bool,
}

impl MarketScenario {
    /// Validated scenario; `p` must lie in `(1/2, 1]`.
    pub fn new(
        privacy_weights: impl Into<Vec<f64>>,
        change_bound: f64,
        sigma_min: f64,
        exponent: f64,
    ) -> Result<Self> {
        let s = Self::build(privacy_weights.into(), change_bound, sigma_min, exponent, false)?;
        Ok(s)
    }

    /// Test mode: accepts any finite `p > 0`. Only meant for demonstrating
    /// that pricing outside `(1/2, 1]` admits arbitrage.
    pub fn new_allowing_any_exponent(
        privacy_weights: impl Into<Vec<f64>>,
        change_bound: f64,
        sigma_min: f64,
        exponent: f64,
    ) -> Result<Self> {
        Self::build(privacy_weights.into(), change_bound, sigma_min, exponent, true)
    }

    fn build(
        privacy_weights: Vec<f64>,
        change_bound: f64,
        sigma_min: f64,
        exponent: f64,
        any_exponent: bool,
    ) -> Result<Self> {
        if privacy_weights.is_empty() {
            return Err(Error::EmptyQuery);
        }
        if let Some(&bad) = privacy_weights.iter().find(|&&c| !(c > 0.0 && c.is_finite())) {
            return Err(Error::NonPositiveParameter {
                name: "privacy weight",
                value: bad,
            });
        }
        positive("gamma", change_bound)?;
        positive("sigma_min", sigma_min)?;
        check_exponent(exponent, any_exponent)?;
        Ok(Self {
            privacy_weights,
            change_bound,
            sigma_min,
            exponent,
            sigma_min_overrides: Vec::new(),
            any_exponent,
        })
    }

    pub fn with_exponent(mut self, exponent: f64) -> Result<Self> {
        check_exponent(exponent, self.any_exponent)?;
        self.exponent = exponent;
        Ok(self)
    }

    pub fn with_change_bound(mut self, change_bound: f64) -> Result<Self> {
        positive("gamma", change_bound)?;
        self.change_bound = change_bound;
        Ok(self)
    }

    pub fn with_sigma_min(mut self, sigma_min: f64) -> Result<Self> {
        positive("sigma_min", sigma_min)?;
        self.sigma_min = sigma_min;
        Ok(self)
    }

    pub fn with_privacy_weights(mut self, weights: impl Into<Vec<f64>>) -> Result<Self> {
        let rebuilt = Self::build(
            weights.into(),
            self.change_bound,
            self.sigma_min,
            self.exponent,
            self.any_exponent,
        )?;
        self.privacy_weights = rebuilt.privacy_weights;
        Ok(self)
    }

    /// Query-specific minimum tradable variance, matched on exact coefficients.
    pub fn with_sigma_min_override(mut self, coeffs: impl Into<Vec<f64>>, sigma_min: f64) -> Result<Self> {
        positive("sigma_min", sigma_min)?;
        self.sigma_min_overrides.push((coeffs.into(), sigma_min));
        Ok(self)
    }

    pub fn privacy_weights(&self) -> &[f64] {
        &self.privacy_weights
    }

    pub fn change_bound(&self) -> f64 {
        self.change_bound
    }

    pub fn sigma_min(&self) -> f64 {
        self.sigma_min
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    pub fn dimension(&self) -> usize {
        self.privacy_weights.len()
    }

    /// Whether `p` lies in `(1/2, 1]`. Only false for test-mode scenarios.
    pub fn exponent_is_valid(&self) -> bool {
        exponent_in_range(self.exponent)
    }

    pub fn sigma_min_for(&self, q: &LinearQuery) -> f64 {
        self.sigma_min_overrides
            .iter()
            .find(|(c, _)| c.as_slice() == q.coeffs())
            .map_or(self.sigma_min, |&(_, v)| v)
    }

    pub(crate) fn check_dimension(&self, q: &LinearQuery) -> Result<()> {
        if q.len() != self.dimension() {
            return Err(Error::DimensionMismatch {
                expected: self.dimension(),
                found: q.len(),
            });
        }
        Ok(())
    }
}

pub(crate) fn exponent_in_range(p: f64) -> bool {
    p > 0.5 && p <= 1.0
}

fn check_exponent(p: f64, any_exponent: bool) -> Result<()> {
    let ok = if any_exponent {
        p > 0.0 && p.is_finite()
    } else {
        exponent_in_range(p)
    };
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidExponent(p))
    }
}

fn positive(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositiveParameter { name, value })
    }
}

pub(crate) fn check_variance(sigma: f64) -> Result<()> {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositiveVariance(sigma))
    }
}

/// A query together with the noise variance it is answered at.
#[derive(Debug, Clone, PartialEq)]
pub struct PricedQuery {
    query: LinearQuery,
    sigma: f64,
}

impl PricedQuery {
    pub fn new(query: LinearQuery, sigma: f64) -> Result<Self> {
        check_variance(sigma)?;
        Ok(Self { query, sigma })
    }

    pub fn query(&self) -> &LinearQuery {
        &self.query
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Database {
    items: Vec<f64>,
}

impl Database {
    pub fn new(items: impl Into<Vec<f64>>) -> Result<Self> {
        let items = items.into();
        if items.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("database items"));
        }
        Ok(Self { items })
    }

    pub fn items(&self) -> &[f64] {
        &self.items
    }
}

/// Exact answer `q . x`.
pub fn query_answer(q: &LinearQuery, x: &Database) -> Result<f64> {
    if q.len() != x.items.len() {
        return Err(Error::DimensionMismatch {
            expected: q.len(),
            found: x.items.len(),
        });
    }
    Ok(q.coeffs.iter().zip(&x.items).map(|(a, b)| a * b).sum())
}

/// Laplace scale `b` whose variance `2 b^2` equals `sigma`.
pub fn laplace_scale(sigma: f64) -> Result<f64> {
    check_variance(sigma)?;
    Ok(libm::sqrt(sigma / 2.0))
}

/// Density of `Lap(center, scale)` at `z`.
pub fn laplace_density(z: f64, center: f64, scale: f64) -> f64 {
    libm::exp(-libm::fabs(z - center) / scale) / (2.0 * scale)
}

/// Zero-mean Laplace noise of variance `sigma`, drawn by inverse-CDF from a
/// seeded ChaCha stream.
#[derive(Debug, Clone)]
pub struct LaplaceNoise {
    scale: f64,
    rng: ChaCha8Rng,
}

impl LaplaceNoise {
    pub fn new(sigma: f64, seed: u64) -> Result<Self> {
        Ok(Self {
            scale: laplace_scale(sigma)?,
            rng: rng::seeded(seed),
        })
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn sample(&mut self) -> f64 {
        let u = rng::open_unit(&mut self.rng);
        if u < 0.5 {
            self.scale * libm::log(2.0 * u)
        } else {
            -self.scale * libm::log(2.0 * (1.0 - u))
        }
    }
}

impl Iterator for LaplaceNoise {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        Some(self.sample())
    }
}

/// Laplace mechanism answer `q(x) + xi` with `Var[xi] = sigma`.
pub fn laplace_answer(q: &LinearQuery, x: &Database, sigma: f64, seed: u64) -> Result<f64> {
    let mut noise = LaplaceNoise::new(sigma, seed)?;
    Ok(query_answer(q, x)? + noise.sample())
}

pub fn semi_norm(q: &LinearQuery) -> f64 {
    match &q.norm {
        NormKind::L2 => libm::sqrt(q.coeffs.iter().map(|c| c * c).sum()),
        NormKind::WeightedL2(w) => {
            libm::sqrt(q.coeffs.iter().zip(w).map(|(c, w)| w * c * c).sum())
        }
    }
}

/// `||q||_0` with [`SUPPORT_ZERO_TOL`].
pub fn support_size(q: &LinearQuery) -> usize {
    q.coeffs
        .iter()
        .filter(|c| libm::fabs(**c) > SUPPORT_ZERO_TOL)
        .count()
}

pub fn value_intensity(q: &LinearQuery) -> Result<f64> {
    match &q.intensity {
        IntensityKind::LogSupport => Ok(libm::log(1.0 + support_size(q) as f64)),
        IntensityKind::Constant(v) => Ok(*v),
        IntensityKind::Table(entries) => entries
            .iter()
            .find(|(c, _)| c.as_slice() == q.coeffs())
            .map(|&(_, v)| v)
            .ok_or(Error::MissingIntensity),
        IntensityKind::ShiftedLog(shift) => {
            if q.len() != 1 {
                return Err(Error::IntensityDomain("shifted-log needs a single-item query"));
            }
            let arg = q.coeffs[0] + shift;
            if arg > 0.0 {
                Ok(libm::log(arg))
            } else {
                Err(Error::IntensityDomain("shifted-log argument must be positive"))
            }
        }
    }
}

fn coefficient(i: usize, q: &LinearQuery, s: &MarketScenario) -> Result<f64> {
    s.check_dimension(q)?;
    q.coeffs
        .get(i)
        .copied()
        .ok_or(Error::IndexOutOfRange { index: i, len: q.len() })
}

/// Upper bound `gamma |q_i| / sqrt(sigma/2)` on owner `i`'s privacy loss
/// (0-based `i`).
pub fn privacy_loss_bound(i: usize, q: &LinearQuery, sigma: f64, s: &MarketScenario) -> Result<f64> {
    let qi = coefficient(i, q, s)?;
    Ok(s.change_bound * libm::fabs(qi) / laplace_scale(sigma)?)
}

/// Micro-payment `gamma c_i |q_i| / sqrt(sigma/2)` owed to owner `i`.
pub fn micro_payment(i: usize, q: &LinearQuery, sigma: f64, s: &MarketScenario) -> Result<f64> {
    let qi = coefficient(i, q, s)?;
    let c = s.privacy_weights[i];
    Ok(s.change_bound * c * libm::fabs(qi) / laplace_scale(sigma)?)
}

/// Sum of all micro-payments for `(q, sigma)`.
pub fn total_compensation(q: &LinearQuery, sigma: f64, s: &MarketScenario) -> Result<f64> {
    s.check_dimension(q)?;
    let b = laplace_scale(sigma)?;
    Ok(q.coeffs
        .iter()
        .zip(&s.privacy_weights)
        .map(|(qi, c)| s.change_bound * c * libm::fabs(*qi) / b)
        .sum())
}

/// Aggregate privacy-cost threshold `Gamma(q) = sqrt(2) gamma sum_i c_i |q_i|`.
pub fn gamma_threshold(q: &LinearQuery, s: &MarketScenario) -> Result<f64> {
    s.check_dimension(q)?;
    let weighted: f64 = q
        .coeffs
        .iter()
        .zip(&s.privacy_weights)
        .map(|(qi, c)| c * libm::fabs(*qi))
        .sum();
    Ok(SQRT_2 * s.change_bound * weighted)
}
