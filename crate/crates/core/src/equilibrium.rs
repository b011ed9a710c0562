//! Closed-form Stackelberg solutions for balanced (`p = 1`) and power pricing.
//!
//! Everything here is expressed through five scalars of a game instance: the
//! value intensity `A`, the threshold `Gamma`, the semi-norm `f`, `sigma_min`
//! and the exponent `p`. Regimes:
//!
//! * `Profitable` when `A >= 2 p Gamma`: the maker earns a positive profit at
//!   `k* = (A / (2 p f^{2p}))^{1/p} sigma_min^{(2p-1)/(2p)}` and the buyer takes
//!   `sigma_min`.
//! * `BreakEven` when `Gamma < A < 2 p Gamma`: the buyer trades at the price
//!   threshold and the maker's profit is zero for every `k`.
//! * `NoTrade` when `A <= Gamma`: the buyer's utility increases in `sigma`
//!   without bound and nothing is bought.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::market_model::{
    exponent_in_range, gamma_threshold, semi_norm, value_intensity, LinearQuery, MarketScenario,
};
use crate::pricing::power;

/// Pricing level reported for the break-even regime, where every `k` is optimal.
pub const CANONICAL_INDIFFERENT_LEVEL: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regime {
    Profitable,
    BreakEven,
    NoTrade,
}

impl Regime {
    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::Profitable => "Profitable",
            Regime::BreakEven => "BreakEven",
            Regime::NoTrade => "NoTrade",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "Profitable" => Some(Regime::Profitable),
            "BreakEven" => Some(Regime::BreakEven),
            "NoTrade" => Some(Regime::NoTrade),
            _ => None,
        }
    }
}

impl core::fmt::Display for Regime {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Regime of `(A, Gamma, p)`; `A = 2 p Gamma` counts as profitable and
/// `A = Gamma` as no trade.
pub fn classify(intensity: f64, threshold: f64, p: f64) -> Regime {
    if intensity <= threshold {
        Regime::NoTrade
    } else if intensity >= 2.0 * p * threshold {
        Regime::Profitable
    } else {
        Regime::BreakEven
    }
}

/// The buyer's variance choice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VarianceChoice {
    Finite(f64),
    /// Utility increases without bound in `sigma`; no purchase.
    NoTrade,
}

impl VarianceChoice {
    pub fn value(&self) -> Option<f64> {
        match self {
            VarianceChoice::Finite(v) => Some(*v),
            VarianceChoice::NoTrade => None,
        }
    }
}

/// The maker's pricing level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PricingLevel {
    Level(f64),
    /// Every `k > 0` is optimal.
    Indifferent,
}

impl PricingLevel {
    pub fn value(&self) -> Option<f64> {
        match self {
            PricingLevel::Level(k) => Some(*k),
            PricingLevel::Indifferent => None,
        }
    }

    /// The level itself, or [`CANONICAL_INDIFFERENT_LEVEL`].
    pub fn representative(&self) -> f64 {
        self.value().unwrap_or(CANONICAL_INDIFFERENT_LEVEL)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquilibriumResult {
    pub regime: Regime,
    pub k_star: PricingLevel,
    pub sigma_star: VarianceChoice,
    pub maker_profit: f64,
    pub buyer_utility: f64,
    /// Level below which the maker earns nothing (profitable regime only).
    pub k_lower: Option<f64>,
    /// Peak of the profit curve, equal to `k*` (profitable regime only).
    pub k_upper: Option<f64>,
}

/// Scalars that determine the game for one query under one scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GameInstance {
    intensity: f64,
    threshold: f64,
    norm: f64,
    sigma_min: f64,
    exponent: f64,
}

impl GameInstance {
    pub fn new(q: &LinearQuery, s: &MarketScenario) -> Result<Self> {
        let threshold = gamma_threshold(q, s)?;
        Self::from_parts(
            value_intensity(q)?,
            threshold,
            semi_norm(q),
            s.sigma_min_for(q),
            s.exponent(),
        )
    }

    /// `A`, `Gamma`, `f`, `sigma_min`, `p`.
    pub fn from_parts(
        intensity: f64,
        threshold: f64,
        norm: f64,
        sigma_min: f64,
        exponent: f64,
    ) -> Result<Self> {
        if !exponent_in_range(exponent) {
            return Err(Error::InvalidExponent(exponent));
        }
        if !intensity.is_finite() {
            return Err(Error::NonFinite("value intensity"));
        }
        if !(threshold >= 0.0 && threshold.is_finite()) {
            return Err(Error::NonPositiveParameter {
                name: "threshold",
                value: threshold,
            });
        }
        if norm == 0.0 {
            return Err(Error::ZeroNorm);
        }
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::NonPositiveParameter {
                name: "semi-norm",
                value: norm,
            });
        }
        if !(sigma_min > 0.0 && sigma_min.is_finite()) {
            return Err(Error::NonPositiveParameter {
                name: "sigma_min",
                value: sigma_min,
            });
        }
        Ok(Self {
            intensity,
            threshold,
            norm,
            sigma_min,
            exponent,
        })
    }

    pub fn intensity(&self) -> f64 {
        self.intensity
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn sigma_min(&self) -> f64 {
        self.sigma_min
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    pub fn regime(&self) -> Regime {
        classify(self.intensity, self.threshold, self.exponent)
    }

    fn norm_pow(&self) -> f64 {
        power(self.norm * self.norm, self.exponent)
    }

    /// `2 / (2p - 1)`.
    fn variance_exponent(&self) -> f64 {
        2.0 / (2.0 * self.exponent - 1.0)
    }

    /// `sigma_min^{(2p-1)/(2p)}`.
    fn sigma_min_factor(&self) -> f64 {
        let p = self.exponent;
        libm::pow(self.sigma_min, (2.0 * p - 1.0) / (2.0 * p))
    }

    /// Variance at which both branches of the price coincide:
    /// `(k^p f^{2p} / Gamma)^{2/(2p-1)}`. Above it the compensation branch is
    /// active.
    pub fn sigma_pricing_threshold(&self, k: f64) -> Result<f64> {
        check_level(k)?;
        if self.threshold == 0.0 {
            return Err(Error::ZeroThreshold);
        }
        let base = power(k, self.exponent) * self.norm_pow() / self.threshold;
        Ok(libm::pow(base, self.variance_exponent()))
    }

    /// Stationary point of the buyer's utility on the original-price branch:
    /// `(2p k^p f^{2p} / A)^{2/(2p-1)}`.
    pub fn interior_response(&self, k: f64) -> Result<f64> {
        check_level(k)?;
        if self.intensity <= 0.0 {
            return Err(Error::IntensityDomain("interior response needs A(q) > 0"));
        }
        let base =
            2.0 * self.exponent * power(k, self.exponent) * self.norm_pow() / self.intensity;
        Ok(libm::pow(base, self.variance_exponent()))
    }

    /// Stage II: the buyer's optimal variance for a posted level `k`.
    pub fn buyer_best_response(&self, k: f64) -> Result<VarianceChoice> {
        check_level(k)?;
        let sigma = match self.regime() {
            Regime::NoTrade => return Ok(VarianceChoice::NoTrade),
            Regime::BreakEven => self.sigma_pricing_threshold(k)?,
            Regime::Profitable => self.interior_response(k)?,
        };
        Ok(VarianceChoice::Finite(sigma.max(self.sigma_min)))
    }

    /// `(Gamma / f^{2p})^{1/p} sigma_min^{(2p-1)/(2p)}`, profitable regime only.
    pub fn k_lower(&self) -> Option<f64> {
        (self.regime() == Regime::Profitable).then(|| {
            power(self.threshold / self.norm_pow(), 1.0 / self.exponent) * self.sigma_min_factor()
        })
    }

    /// `(A / (2p f^{2p}))^{1/p} sigma_min^{(2p-1)/(2p)}`, profitable regime only.
    pub fn k_upper(&self) -> Option<f64> {
        (self.regime() == Regime::Profitable).then(|| {
            let ratio = self.intensity / (2.0 * self.exponent * self.norm_pow());
            power(ratio, 1.0 / self.exponent) * self.sigma_min_factor()
        })
    }

    /// Stage I objective: maker profit when the buyer best-responds to `k`.
    pub fn maker_profit_curve(&self, k: f64) -> Result<f64> {
        check_level(k)?;
        let (Some(lower), Some(upper)) = (self.k_lower(), self.k_upper()) else {
            return Ok(0.0);
        };
        let p = self.exponent;
        if k <= lower {
            Ok(0.0)
        } else if k <= upper {
            Ok(self.maker_utility_at(self.sigma_min, k))
        } else {
            let root = libm::pow(
                self.intensity / (2.0 * p * power(k, p) * self.norm_pow()),
                1.0 / (2.0 * p - 1.0),
            );
            Ok(root * (self.intensity / (2.0 * p) - self.threshold))
        }
    }

    /// `((k f^2/sigma)^p - Gamma/sqrt(sigma))^+`.
    pub fn maker_utility_at(&self, sigma: f64, k: f64) -> f64 {
        (self.powered_original(sigma, k) - self.threshold / libm::sqrt(sigma)).max(0.0)
    }

    /// `A/sqrt(sigma) - max{(k f^2/sigma)^p, Gamma/sqrt(sigma)}`.
    pub fn buyer_utility_at(&self, sigma: f64, k: f64) -> f64 {
        let root = libm::sqrt(sigma);
        self.intensity / root - self.powered_original(sigma, k).max(self.threshold / root)
    }

    fn powered_original(&self, sigma: f64, k: f64) -> f64 {
        power(k * self.norm * self.norm / sigma, self.exponent)
    }

    pub fn equilibrium(&self) -> EquilibriumResult {
        let regime = self.regime();
        match regime {
            Regime::Profitable => {
                let k_lower = self.k_lower();
                let k_upper = self.k_upper();
                let k = k_upper.unwrap_or(CANONICAL_INDIFFERENT_LEVEL);
                EquilibriumResult {
                    regime,
                    k_star: PricingLevel::Level(k),
                    sigma_star: VarianceChoice::Finite(self.sigma_min),
                    maker_profit: self.maker_utility_at(self.sigma_min, k),
                    buyer_utility: self.buyer_utility_at(self.sigma_min, k),
                    k_lower,
                    k_upper,
                }
            }
            Regime::BreakEven => {
                let k = CANONICAL_INDIFFERENT_LEVEL;
                // Gamma > A / (2p) > 0 here, so the threshold exists.
                let sigma = self
                    .sigma_pricing_threshold(k)
                    .map_or(self.sigma_min, |t| t.max(self.sigma_min));
                EquilibriumResult {
                    regime,
                    k_star: PricingLevel::Indifferent,
                    sigma_star: VarianceChoice::Finite(sigma),
                    maker_profit: 0.0,
                    buyer_utility: self.buyer_utility_at(sigma, k),
                    k_lower: None,
                    k_upper: None,
                }
            }
            Regime::NoTrade => EquilibriumResult {
                regime,
                k_star: PricingLevel::Indifferent,
                sigma_star: VarianceChoice::NoTrade,
                maker_profit: 0.0,
                buyer_utility: 0.0,
                k_lower: None,
                k_upper: None,
            },
        }
    }
}

fn check_level(k: f64) -> Result<()> {
    if k > 0.0 && k.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositivePricingLevel(k))
    }
}

pub fn classify_regime(q: &LinearQuery, s: &MarketScenario) -> Result<Regime> {
    Ok(GameInstance::new(q, s)?.regime())
}

pub fn buyer_best_response(q: &LinearQuery, k: f64, s: &MarketScenario) -> Result<VarianceChoice> {
    GameInstance::new(q, s)?.buyer_best_response(k)
}

pub fn maker_profit_curve(q: &LinearQuery, k: f64, s: &MarketScenario) -> Result<f64> {
    GameInstance::new(q, s)?.maker_profit_curve(k)
}

pub fn stackelberg_equilibrium(q: &LinearQuery, s: &MarketScenario) -> Result<EquilibriumResult> {
    Ok(GameInstance::new(q, s)?.equilibrium())
}

/// Bisection width used to bracket regime crossings along a sweep.
pub const BOUNDARY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionRow {
    pub q: f64,
    pub intensity: f64,
    pub threshold: f64,
    /// `2 p Gamma(q)`.
    pub profit_threshold: f64,
    pub regime: Regime,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionBoundary {
    pub q: f64,
    pub left: Regime,
    pub right: Regime,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionSegment {
    pub lo: f64,
    pub hi: f64,
    pub regime: Regime,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionTable {
    pub rows: Vec<RegionRow>,
    pub boundaries: Vec<RegionBoundary>,
    pub segments: Vec<RegionSegment>,
}

impl RegionTable {
    /// Total length of the sweep range classified as `regime`.
    pub fn width(&self, regime: Regime) -> f64 {
        self.segments
            .iter()
            .filter(|s| s.regime == regime)
            .map(|s| s.hi - s.lo)
            .sum()
    }

    /// Regimes of consecutive segments.
    pub fn regime_sequence(&self) -> Vec<Regime> {
        self.segments.iter().map(|s| s.regime).collect()
    }
}

/// Tabulates the regime of a single-item query `q` over `[lo, hi]` with
/// `resolution` evenly spaced points and brackets every crossing by bisection.
/// `intensity` supplies `A(q)` for the scalar coefficient.
pub fn region_boundaries<F>(
    lo: f64,
    hi: f64,
    s: &MarketScenario,
    resolution: usize,
    intensity: F,
) -> Result<RegionTable>
where
    F: Fn(f64) -> Result<f64>,
{
    if s.dimension() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            found: s.dimension(),
        });
    }
    if !lo.is_finite() || !hi.is_finite() || lo >= hi {
        return Err(Error::InvalidGrid("sweep range must satisfy lo < hi"));
    }
    if resolution < 2 {
        return Err(Error::InvalidGrid("sweep needs at least two points"));
    }
    if !exponent_in_range(s.exponent()) {
        return Err(Error::InvalidExponent(s.exponent()));
    }
    let p = s.exponent();
    let evaluate = |q: f64| -> Result<RegionRow> {
        let a = intensity(q)?;
        let g = gamma_threshold(&LinearQuery::new([q])?, s)?;
        Ok(RegionRow {
            q,
            intensity: a,
            threshold: g,
            profit_threshold: 2.0 * p * g,
            regime: classify(a, g, p),
        })
    };

    let step = (hi - lo) / (resolution - 1) as f64;
    let mut rows = Vec::with_capacity(resolution);
    for i in 0..resolution {
        let q = if i + 1 == resolution { hi } else { lo + step * i as f64 };
        rows.push(evaluate(q)?);
    }

    let mut boundaries = Vec::new();
    for pair in rows.windows(2) {
        let (left, right) = (pair[0], pair[1]);
        if left.regime == right.regime {
            continue;
        }
        let (mut a, mut b) = (left.q, right.q);
        while b - a > BOUNDARY_TOL {
            let mid = 0.5 * (a + b);
            if evaluate(mid)?.regime == left.regime {
                a = mid;
            } else {
                b = mid;
            }
        }
        boundaries.push(RegionBoundary {
            q: 0.5 * (a + b),
            left: left.regime,
            right: right.regime,
        });
    }

    let mut segments = Vec::with_capacity(boundaries.len() + 1);
    let mut start = lo;
    let mut regime = rows[0].regime;
    for b in &boundaries {
        segments.push(RegionSegment {
            lo: start,
            hi: b.q,
            regime,
        });
        start = b.q;
        regime = b.right;
    }
    segments.push(RegionSegment { lo: start, hi, regime });

    Ok(RegionTable {
        rows,
        boundaries,
        segments,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_model::{IntensityKind, PricedQuery};
    use crate::pricing::{balanced_price, buyer_utility, maker_utility};
    use crate::rng;
    use core::f64::consts::SQRT_2;
    use rand::Rng;

    fn inst(a: f64, g: f64, f: f64, sigma_min: f64, p: f64) -> GameInstance {
        GameInstance::from_parts(a, g, f, sigma_min, p).unwrap()
    }

    fn close(a: f64, b: f64, rtol: f64) -> bool {
        (a - b).abs() <= rtol * b.abs().max(1e-300)
    }

    #[test]
    fn regime_examples() {
        assert_eq!(classify(10.0, SQRT_2, 1.0), Regime::Profitable);
        assert_eq!(classify(2.5, SQRT_2, 1.0), Regime::BreakEven);
        for p in [0.51, 0.75, 1.0] {
            assert_eq!(classify(1.0, SQRT_2, p), Regime::NoTrade);
        }
        assert_eq!(classify(2.0, SQRT_2, 0.75), Regime::BreakEven);
        assert_eq!(classify(3.0, 1.5, 1.0), Regime::Profitable);
        assert_eq!(classify(1.5, 1.5, 1.0), Regime::NoTrade);
        assert_eq!(classify(5f64.ln(), 0.0, 1.0), Regime::Profitable);
    }

    #[test]
    fn regime_from_query_and_scenario() {
        // q = (1), c = (1), gamma = 1 gives Gamma = sqrt(2).
        let s = MarketScenario::new([1.0], 1.0, 1.0, 1.0).unwrap();
        let q = |a| LinearQuery::new([1.0]).unwrap().with_intensity(IntensityKind::Constant(a));
        assert_eq!(classify_regime(&q(10.0), &s).unwrap(), Regime::Profitable);
        assert_eq!(classify_regime(&q(2.5), &s).unwrap(), Regime::BreakEven);
        assert_eq!(classify_regime(&q(1.0), &s).unwrap(), Regime::NoTrade);
        assert_eq!(
            classify_regime(&LinearQuery::new([0.0]).unwrap(), &s),
            Err(Error::ZeroNorm)
        );
    }

    #[test]
    fn pricing_threshold_examples() {
        let g = inst(10.0, SQRT_2, 1.0, 1.0, 1.0);
        assert!(close(g.sigma_pricing_threshold(1.0).unwrap(), 0.5, 1e-15));
        assert!(close(g.sigma_pricing_threshold(SQRT_2).unwrap(), 1.0, 1e-15));
        let free = inst(1.0, 0.0, 1.0, 1.0, 1.0);
        assert_eq!(free.sigma_pricing_threshold(1.0), Err(Error::ZeroThreshold));
        assert!(g.sigma_pricing_threshold(0.0).is_err());
    }

    #[test]
    fn price_branches_meet_at_threshold() {
        let mut rng = rng::seeded(21);
        for _ in 0..100 {
            let p = rng.gen_range(0.51..=1.0);
            let c = rng.gen_range(0.1..3.0);
            let x = rng.gen_range(0.2..3.0);
            let k = libm::exp(rng.gen_range(-2.0..2.0));
            let s = MarketScenario::new([c], 1.0, 1.0, p).unwrap();
            let q = LinearQuery::new([x]).unwrap();
            let g = GameInstance::new(&q, &s).unwrap();
            let t = g.sigma_pricing_threshold(k).unwrap();
            let original = power(k * x * x / t, p);
            let comp = g.threshold() / t.sqrt();
            assert!(close(original, comp, 1e-9));
            let price = balanced_price(&PricedQuery::new(q, t).unwrap(), k, &s).unwrap();
            assert!(close(price, comp, 1e-9));
        }
    }

    #[test]
    fn best_response_examples() {
        let g = inst(10.0, SQRT_2, 1.0, 0.01, 1.0);
        let VarianceChoice::Finite(s) = g.buyer_best_response(1.0).unwrap() else {
            panic!()
        };
        assert!(close(s, 0.04, 1e-14));
        let g = inst(2.5, SQRT_2, 1.0, 0.01, 1.0);
        let VarianceChoice::Finite(s) = g.buyer_best_response(1.0).unwrap() else {
            panic!()
        };
        assert!(close(s, 0.5, 1e-14));
        let g = inst(1.0, SQRT_2, 1.0, 0.01, 1.0);
        assert_eq!(g.buyer_best_response(1.0).unwrap(), VarianceChoice::NoTrade);
        assert!(g.buyer_best_response(-1.0).is_err());
    }

    #[test]
    fn best_response_is_clamped_to_sigma_min() {
        let g = inst(2.5, SQRT_2, 1.0, 2.0, 1.0);
        assert_eq!(g.buyer_best_response(1.0).unwrap(), VarianceChoice::Finite(2.0));
        let g = inst(10.0, SQRT_2, 1.0, 2.0, 1.0);
        assert_eq!(g.buyer_best_response(1.0).unwrap(), VarianceChoice::Finite(2.0));
    }

    #[test]
    fn boundary_tie_has_matching_branches() {
        // At A = 2 Gamma the interior point equals the price threshold.
        let g = inst(2.0 * SQRT_2, SQRT_2, 1.3, 0.01, 1.0);
        assert_eq!(g.regime(), Regime::Profitable);
        for k in [0.3, 1.0, 4.0] {
            let a = g.interior_response(k).unwrap();
            let b = g.sigma_pricing_threshold(k).unwrap();
            assert!(close(a, b, 1e-12));
        }
    }

    #[test]
    fn profit_curve_examples() {
        let g = inst(10.0, SQRT_2, 1.0, 1.0, 1.0);
        assert!(close(g.k_lower().unwrap(), SQRT_2, 1e-15));
        assert!(close(g.k_upper().unwrap(), 5.0, 1e-15));
        assert!(close(g.maker_profit_curve(5.0).unwrap(), 5.0 - SQRT_2, 1e-14));
        assert_eq!(g.maker_profit_curve(g.k_lower().unwrap()).unwrap(), 0.0);
        assert_eq!(g.maker_profit_curve(0.5).unwrap(), 0.0);
        // Tail at p = 1 reduces to A (A - 2 Gamma) / (4 k f^2).
        let tail = 10.0 * (10.0 - 2.0 * SQRT_2) / (4.0 * 8.0);
        assert!(close(g.maker_profit_curve(8.0).unwrap(), tail, 1e-13));
        let be = inst(2.5, SQRT_2, 1.0, 1.0, 1.0);
        assert_eq!(be.maker_profit_curve(3.0).unwrap(), 0.0);
        assert!(be.maker_profit_curve(0.0).is_err());
    }

    #[test]
    fn profit_curve_is_single_peaked() {
        for (a, p) in [(10.0, 1.0), (10.0, 0.75), (5.0, 0.6)] {
            let g = inst(a, SQRT_2, 1.0, 1.0, p);
            let peak = g.k_upper().unwrap();
            let ks: Vec<f64> = (0..10_000)
                .map(|i| libm::pow(10.0, -3.0 + 6.0 * i as f64 / 9_999.0))
                .collect();
            let values: Vec<f64> = ks.iter().map(|k| g.maker_profit_curve(*k).unwrap()).collect();
            for i in 1..ks.len() {
                if ks[i] <= peak {
                    assert!(values[i] >= values[i - 1]);
                } else if ks[i - 1] >= peak {
                    assert!(values[i] <= values[i - 1]);
                }
            }
        }
    }

    #[test]
    fn profit_curve_is_continuous_at_kinks() {
        let mut rng = rng::seeded(31);
        for _ in 0..200 {
            let p = rng.gen_range(0.55..=1.0);
            let g_val = rng.gen_range(0.1..2.0);
            let a = 2.0 * p * g_val * rng.gen_range(1.05..4.0);
            let g = inst(a, g_val, rng.gen_range(0.5..2.0), libm::exp(rng.gen_range(-2.0..2.0)), p);
            for kink in [g.k_lower().unwrap(), g.k_upper().unwrap()] {
                let h = kink * 1e-11;
                let left = g.maker_profit_curve(kink - h).unwrap();
                let right = g.maker_profit_curve(kink + h).unwrap();
                let scale = g.maker_profit_curve(g.k_upper().unwrap()).unwrap();
                assert!((left - right).abs() <= 1e-9 * scale);
            }
        }
    }

    #[test]
    fn equilibrium_examples() {
        let e = inst(10.0, SQRT_2, 1.0, 1.0, 1.0).equilibrium();
        assert_eq!(e.regime, Regime::Profitable);
        assert!(close(e.k_star.value().unwrap(), 5.0, 1e-15));
        assert_eq!(e.sigma_star, VarianceChoice::Finite(1.0));
        assert!(close(e.maker_profit, 5.0 - SQRT_2, 1e-14));
        assert!(close(e.buyer_utility, 5.0, 1e-14));

        let e = inst(5.0, SQRT_2, 1.0, 1.0, 1.0).equilibrium();
        assert!(close(e.k_star.value().unwrap(), 2.5, 1e-15));
        assert_eq!(e.sigma_star, VarianceChoice::Finite(1.0));

        let e = inst(5.0, SQRT_2, 1.0, 1.0, 0.75).equilibrium();
        let expected = libm::pow(5.0 / 1.5, 4.0 / 3.0);
        assert!(close(e.k_star.value().unwrap(), expected, 1e-14));
        assert!((expected - 4.9793).abs() < 1e-4);
        assert_eq!(e.sigma_star, VarianceChoice::Finite(1.0));

        let e = inst(1.0, SQRT_2, 1.0, 1.0, 1.0).equilibrium();
        assert_eq!(e.regime, Regime::NoTrade);
        assert_eq!(e.sigma_star, VarianceChoice::NoTrade);
        assert_eq!(e.k_star, PricingLevel::Indifferent);
        assert_eq!(e.maker_profit, 0.0);

        let e = inst(2.5, SQRT_2, 1.0, 1.0, 1.0).equilibrium();
        assert_eq!(e.regime, Regime::BreakEven);
        assert_eq!(e.k_star, PricingLevel::Indifferent);
        assert_eq!(e.k_star.representative(), 1.0);
        assert_eq!(e.maker_profit, 0.0);
        assert_eq!(e.sigma_star, VarianceChoice::Finite(1.0));
        assert!(close(e.buyer_utility, 2.5 - SQRT_2, 1e-14));
    }

    #[test]
    fn zero_threshold_is_profitable_with_zero_lower_level() {
        let g = inst(5f64.ln(), 0.0, 1.0, 1.0, 1.0);
        assert_eq!(g.regime(), Regime::Profitable);
        assert_eq!(g.k_lower(), Some(0.0));
        let e = g.equilibrium();
        assert!(e.maker_profit > 0.0);
    }

    #[test]
    fn equilibrium_through_query_agrees_with_parts() {
        let s = MarketScenario::new([0.5, 0.25], 1.0, 1.0, 1.0).unwrap();
        let q = LinearQuery::new([1.0, 2.0])
            .unwrap()
            .with_intensity(IntensityKind::Constant(10.0));
        let e = stackelberg_equilibrium(&q, &s).unwrap();
        let f2 = 5.0;
        assert!(close(e.k_star.value().unwrap(), 10.0 / (2.0 * f2), 1e-14));
        assert!(close(e.maker_profit, maker_profit_curve(&q, 1.0, &s).unwrap(), 1e-14));
    }

    #[test]
    fn best_response_beats_dense_grid() {
        let mut rng = rng::seeded(41);
        let grid: Vec<f64> = (0..4000).map(|i| libm::pow(10.0, -4.0 + 8.0 * i as f64 / 3999.0)).collect();
        for _ in 0..500 {
            let p = rng.gen_range(0.55..=1.0);
            let g_val = rng.gen_range(0.1..2.0);
            let a = g_val * rng.gen_range(1.02..6.0);
            let sigma_min = libm::exp(rng.gen_range(-3.0..1.0));
            let g = inst(a, g_val, rng.gen_range(0.5..2.0), sigma_min, p);
            let k = libm::exp(rng.gen_range(-2.0..2.0));
            let best = g.buyer_best_response(k).unwrap().value().unwrap();
            let at_best = g.buyer_utility_at(best, k);
            for &s in grid.iter().filter(|s| **s >= sigma_min) {
                assert!(at_best >= g.buyer_utility_at(s, k) - 1e-9);
            }
        }
    }

    #[test]
    fn equilibrium_level_beats_dense_grid() {
        let mut rng = rng::seeded(43);
        let grid: Vec<f64> = (0..4000).map(|i| libm::pow(10.0, -3.0 + 6.0 * i as f64 / 3999.0)).collect();
        for _ in 0..500 {
            let p = rng.gen_range(0.55..=1.0);
            let g_val = rng.gen_range(0.1..2.0);
            let a = 2.0 * p * g_val * rng.gen_range(1.0..5.0);
            let g = inst(a, g_val, rng.gen_range(0.5..2.0), libm::exp(rng.gen_range(-2.0..1.0)), p);
            let best = g.maker_profit_curve(g.equilibrium().k_star.value().unwrap()).unwrap();
            for &k in &grid {
                assert!(best >= g.maker_profit_curve(k).unwrap() - 1e-9);
            }
        }
    }

    #[test]
    fn break_even_profit_vanishes_at_best_response() {
        let mut rng = rng::seeded(47);
        let mut checked = 0;
        while checked < 500 {
            let p = rng.gen_range(0.55..=1.0);
            let c = rng.gen_range(0.2..2.0);
            let x = rng.gen_range(0.3..2.0);
            let s = MarketScenario::new([c], 1.0, libm::exp(rng.gen_range(-3.0..1.0)), p).unwrap();
            let gamma = SQRT_2 * c * x;
            let a = rng.gen_range(gamma..2.0 * p * gamma);
            let q = LinearQuery::new([x]).unwrap().with_intensity(IntensityKind::Constant(a));
            let g = GameInstance::new(&q, &s).unwrap();
            if g.regime() != Regime::BreakEven {
                continue;
            }
            checked += 1;
            for j in 0..20 {
                let k = libm::pow(10.0, -2.0 + 4.0 * j as f64 / 19.0);
                let sigma = g.buyer_best_response(k).unwrap().value().unwrap();
                let pq = PricedQuery::new(q.clone(), sigma).unwrap();
                assert!(maker_utility(&pq, k, &s).unwrap() <= 1e-12);
                assert!(g.maker_utility_at(sigma, k) <= 1e-12);
            }
        }
    }

    #[test]
    fn power_formulas_reduce_to_linear_ones() {
        let mut rng = rng::seeded(53);
        for _ in 0..1000 {
            let g_val = rng.gen_range(0.1..2.0);
            let a = g_val * rng.gen_range(2.0..6.0);
            let f = rng.gen_range(0.3..3.0);
            let sigma_min = libm::exp(rng.gen_range(-3.0..3.0));
            let k = libm::exp(rng.gen_range(-3.0..3.0));
            let g = inst(a, g_val, f, sigma_min, 1.0);
            let f2 = f * f;
            assert!(close(g.k_upper().unwrap(), a * sigma_min.sqrt() / (2.0 * f2), 1e-12));
            assert!(close(g.k_lower().unwrap(), g_val * sigma_min.sqrt() / f2, 1e-12));
            assert!(close(g.interior_response(k).unwrap(), 4.0 * (k / a).powi(2) * f2 * f2, 1e-12));
            assert!(close(
                g.sigma_pricing_threshold(k).unwrap(),
                (k / g_val).powi(2) * f2 * f2,
                1e-12
            ));
        }
    }

    #[test]
    fn level_decreases_with_exponent() {
        let mut last = f64::INFINITY;
        for i in 0..=45 {
            let p = 0.55 + 0.01 * i as f64;
            let e = inst(5.0, SQRT_2, 1.0, 1.0, p).equilibrium();
            let k = e.k_star.value().unwrap();
            assert!(k < last);
            assert_eq!(e.sigma_star, VarianceChoice::Finite(1.0));
            last = k;
        }
        assert!(close(last, 2.5, 1e-12));
    }

    #[test]
    fn lower_exponent_raises_peak_profit_at_reference_point() {
        let linear = inst(10.0, SQRT_2, 1.0, 1.0, 1.0).equilibrium().maker_profit;
        let power = inst(10.0, SQRT_2, 1.0, 1.0, 0.75).equilibrium().maker_profit;
        assert!(power > linear);
    }

    #[test]
    fn buyer_utility_closed_form_matches_pricing() {
        let s = MarketScenario::new([0.6, 1.1], 0.9, 0.5, 0.8).unwrap();
        let q = LinearQuery::new([1.2, -0.4])
            .unwrap()
            .with_intensity(IntensityKind::Constant(7.0));
        let g = GameInstance::new(&q, &s).unwrap();
        for sigma in [0.5, 1.0, 3.0] {
            for k in [0.2, 1.0, 5.0] {
                let pq = PricedQuery::new(q.clone(), sigma).unwrap();
                assert!(close(g.buyer_utility_at(sigma, k), buyer_utility(&pq, k, &s).unwrap(), 1e-12));
            }
        }
    }

    fn shifted_log(q: f64) -> Result<f64> {
        value_intensity(
            &LinearQuery::new([q])
                .unwrap()
                .with_intensity(IntensityKind::ShiftedLog(5.0)),
        )
    }

    #[test]
    fn regions_follow_expected_order() {
        let s = MarketScenario::new([1.0], 1.0, 1.0, 1.0).unwrap();
        let table = region_boundaries(-4.99, 4.0, &s, 2001, shifted_log).unwrap();
        use Regime::*;
        assert_eq!(
            table.regime_sequence(),
            vec![NoTrade, BreakEven, Profitable, BreakEven, NoTrade]
        );
        for b in &table.boundaries {
            let a = shifted_log(b.q).unwrap();
            let g = SQRT_2 * b.q.abs();
            let target = if b.left == Profitable || b.right == Profitable { 2.0 * g } else { g };
            assert!((a - target).abs() < 1e-5);
        }
        let zero = table.rows.iter().find(|r| r.q.abs() < 1e-9);
        assert!(zero.is_none() || zero.unwrap().regime == Profitable);
        assert_eq!(
            region_boundaries(-1.0, 1.0, &s, 3, shifted_log).unwrap().rows[1].regime,
            Profitable
        );
    }

    #[test]
    fn profitable_width_shrinks_with_gamma() {
        let mut last = f64::INFINITY;
        for gamma in [0.5, 1.0, 2.0] {
            let s = MarketScenario::new([1.0], gamma, 1.0, 1.0).unwrap();
            let table = region_boundaries(-4.99, 4.0, &s, 2001, shifted_log).unwrap();
            let w = table.width(Regime::Profitable);
            assert!(w < last);
            last = w;
        }
    }

    #[test]
    fn break_even_band_shrinks_with_exponent() {
        let mut last = f64::INFINITY;
        for p in [1.0, 0.75, 0.6, 0.52] {
            let s = MarketScenario::new([1.0], 1.0, 1.0, p).unwrap();
            let table = region_boundaries(-4.99, 4.0, &s, 2001, shifted_log).unwrap();
            let w = table.width(Regime::BreakEven);
            assert!(w < last);
            last = w;
        }
    }

    #[test]
    fn region_errors() {
        let s = MarketScenario::new([1.0], 1.0, 1.0, 1.0).unwrap();
        assert!(region_boundaries(-6.0, 1.0, &s, 10, shifted_log).is_err());
        assert!(region_boundaries(1.0, 1.0, &s, 10, shifted_log).is_err());
        let s2 = MarketScenario::new([1.0, 1.0], 1.0, 1.0, 1.0).unwrap();
        assert!(region_boundaries(-1.0, 1.0, &s2, 10, shifted_log).is_err());
    }
}
