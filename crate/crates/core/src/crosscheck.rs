//! Closed-form solutions checked against the brute-force oracle.

use alloc::vec::Vec;

use rand::Rng;

use crate::equilibrium::{stackelberg_equilibrium, EquilibriumResult, PricingLevel, Regime, VarianceChoice};
use crate::error::Result;
use crate::market_model::{gamma_threshold, IntensityKind, LinearQuery, MarketScenario};
use crate::oracle::{oracle_equilibrium, GridSpec, OracleEquilibrium, OracleReport, OracleVerdict};

pub const COMPARE_RTOL: f64 = 1e-3;
pub const COMPARE_ATOL: f64 = 1e-12;

pub fn regime_of(verdict: OracleVerdict) -> Regime {
    match verdict {
        OracleVerdict::Profitable => Regime::Profitable,
        OracleVerdict::BreakEven => Regime::BreakEven,
        OracleVerdict::NoTrade => Regime::NoTrade,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonReport {
    pub closed_form: EquilibriumResult,
    pub oracle: OracleEquilibrium,
    pub regime_match: bool,
    /// Present for profitable instances.
    pub k: Option<OracleReport>,
    pub sigma: Option<OracleReport>,
    pub profit: Option<OracleReport>,
}

impl ComparisonReport {
    pub fn passed(&self) -> bool {
        self.regime_match
            && [self.k, self.sigma, self.profit]
                .iter()
                .flatten()
                .all(|r| r.within_tolerance)
    }
}

/// Solves `(q, s)` both ways and compares.
pub fn compare(
    q: &LinearQuery,
    s: &MarketScenario,
    k_grid: &GridSpec,
    sigma_grid: &GridSpec,
) -> Result<ComparisonReport> {
    let closed = stackelberg_equilibrium(q, s)?;
    let oracle = oracle_equilibrium(q, s, k_grid, sigma_grid)?;
    Ok(compare_against(&closed, &oracle))
}

/// Compares a closed-form result with an oracle outcome. Values are compared
/// only when both sides agree the instance is profitable.
pub fn compare_against(closed: &EquilibriumResult, oracle: &OracleEquilibrium) -> ComparisonReport {
    let regime_match = closed.regime == regime_of(oracle.verdict);
    let mut report = ComparisonReport {
        closed_form: *closed,
        oracle: *oracle,
        regime_match,
        k: None,
        sigma: None,
        profit: None,
    };
    if !(regime_match && closed.regime == Regime::Profitable) {
        return report;
    }
    let (PricingLevel::Level(k), VarianceChoice::Finite(sigma), Some(sigma_hat)) =
        (closed.k_star, closed.sigma_star, oracle.sigma)
    else {
        return report;
    };
    let rep = |o, c, bound| OracleReport::new(o, c, COMPARE_RTOL, COMPARE_ATOL, bound);
    report.k = Some(rep(oracle.k, k, oracle.k_spacing));
    report.sigma = Some(rep(sigma_hat, sigma, oracle.sigma_spacing));
    report.profit = Some(rep(oracle.maker_profit, closed.maker_profit, oracle.profit_variation));
    report
}

/// A closed-form result dressed up as an oracle outcome with zero grid
/// spacing.
pub fn as_oracle(closed: &EquilibriumResult) -> OracleEquilibrium {
    let verdict = match closed.regime {
        Regime::Profitable => OracleVerdict::Profitable,
        Regime::BreakEven => OracleVerdict::BreakEven,
        Regime::NoTrade => OracleVerdict::NoTrade,
    };
    OracleEquilibrium {
        verdict,
        k: closed.k_star.representative(),
        sigma: closed.sigma_star.value(),
        maker_profit: closed.maker_profit,
        buyer_utility: closed.buyer_utility,
        k_spacing: 0.0,
        sigma_spacing: 0.0,
        profit_variation: 0.0,
        max_resolved_profit: closed.maker_profit,
    }
}

/// A seeded random game landing in `regime`, with a constant intensity placed
/// strictly inside the regime's band.
///
/// Up to three items with weights, change bound and coefficient magnitudes in
/// `[0.5, 1.5]` and `sigma_min` log-uniform in `[0.01, 10]`. With these ranges
/// the equilibrium level stays inside the default oracle grid.
pub fn random_instance(seed: u64, regime: Regime, p: f64) -> Result<(LinearQuery, MarketScenario)> {
    let mut rng = crate::rng::seeded(seed);
    let n = rng.gen_range(1..=3);
    let weights: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..=1.5)).collect();
    let coeffs: Vec<f64> = (0..n)
        .map(|_| {
            let magnitude = rng.gen_range(0.5..=1.5);
            if rng.gen_bool(0.5) {
                magnitude
            } else {
                -magnitude
            }
        })
        .collect();
    let gamma = rng.gen_range(0.5..=1.5);
    let sigma_min = libm::exp(rng.gen_range(libm::log(0.01)..=libm::log(10.0)));
    let s = MarketScenario::new(weights, gamma, sigma_min, p)?;
    let q = LinearQuery::new(coeffs)?;
    let threshold = gamma_threshold(&q, &s)?;
    let intensity = match regime {
        Regime::Profitable => 2.0 * p * threshold * rng.gen_range(1.1..=3.0),
        Regime::BreakEven => threshold * (1.0 + (2.0 * p - 1.0) * rng.gen_range(0.1..=0.9)),
        Regime::NoTrade => threshold * rng.gen_range(0.1..=0.9),
    };
    Ok((q.with_intensity(IntensityKind::Constant(intensity)), s))
}
