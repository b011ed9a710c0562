//! Balanced and power pricing, utilities of both parties, and the
//! linear-answerability / arbitrage machinery.

use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::market_model::{
    self, semi_norm, total_compensation, value_intensity, LinearQuery, MarketScenario,
    PricedQuery,
};
use crate::rng;

/// Relative tolerance applied to the bundle price sum.
pub const ARBITRAGE_RTOL: f64 = 1e-9;

/// Pricing level `k` together with the exponent `p` it is applied under.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PricingSpec {
    k: f64,
    p: f64,
    k_pow: f64,
}

impl PricingSpec {
    /// Strict: `k > 0` and `p` in `(1/2, 1]`.
    pub fn new(k: f64, p: f64) -> Result<Self> {
        if !market_model::exponent_in_range(p) {
            return Err(Error::InvalidExponent(p));
        }
        Self::unchecked_exponent(k, p)
    }

    /// Uses the scenario's exponent, which has already been validated
    /// according to the scenario's mode.
    pub fn for_scenario(k: f64, s: &MarketScenario) -> Result<Self> {
        Self::unchecked_exponent(k, s.exponent())
    }

    fn unchecked_exponent(k: f64, p: f64) -> Result<Self> {
        if !(k > 0.0 && k.is_finite()) {
            return Err(Error::NonPositivePricingLevel(k));
        }
        Ok(Self {
            k,
            p,
            k_pow: power(k, p),
        })
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn p(&self) -> f64 {
        self.p
    }
}

#[inline]
pub(crate) fn power(x: f64, p: f64) -> f64 {
    if p == 1.0 {
        x
    } else {
        libm::pow(x, p)
    }
}

/// The `k`-independent pieces of every price and utility at one `(q, sigma)`:
/// `(f^2/sigma)^p`, the total compensation and the buyer's valuation.
///
/// Prices for a pricing level are then `max{k^p (f^2/sigma)^p, compensation}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuoteTerms {
    unit_price: f64,
    compensation: f64,
    valuation: f64,
}

impl QuoteTerms {
    pub fn new(pq: &PricedQuery, s: &MarketScenario) -> Result<Self> {
        Self::at(pq.query(), pq.sigma(), s)
    }

    /// Same as [`QuoteTerms::new`] without building a [`PricedQuery`].
    pub fn at(q: &LinearQuery, sigma: f64, s: &MarketScenario) -> Result<Self> {
        market_model::check_variance(sigma)?;
        let f = semi_norm(q);
        Ok(Self {
            unit_price: power(f * f / sigma, s.exponent()),
            compensation: total_compensation(q, sigma, s)?,
            valuation: value_intensity(q)? / libm::sqrt(sigma),
        })
    }

    /// `(k f^2 / sigma)^p`.
    #[inline]
    pub fn powered_original(&self, level: &PricingSpec) -> f64 {
        level.k_pow * self.unit_price
    }

    #[inline]
    pub fn compensation(&self) -> f64 {
        self.compensation
    }

    #[inline]
    pub fn valuation(&self) -> f64 {
        self.valuation
    }

    #[inline]
    pub fn balanced_price(&self, level: &PricingSpec) -> f64 {
        self.powered_original(level).max(self.compensation)
    }

    #[inline]
    pub fn buyer_utility(&self, level: &PricingSpec) -> f64 {
        self.valuation - self.balanced_price(level)
    }

    #[inline]
    pub fn maker_utility(&self, level: &PricingSpec) -> f64 {
        (self.powered_original(level) - self.compensation).max(0.0)
    }
}

/// Column-wise [`QuoteTerms`] for a whole variance grid, so that utilities at
/// one pricing level can be evaluated in a single vectorizable pass.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QuoteTable {
    unit_price: Vec<f64>,
    compensation: Vec<f64>,
    valuation: Vec<f64>,
}

impl QuoteTable {
    /// Every term scales as a power of `sigma`, so the query is evaluated once
    /// at unit variance and rescaled per row.
    pub fn at(q: &LinearQuery, sigmas: &[f64], s: &MarketScenario) -> Result<Self> {
        let unit = QuoteTerms::at(q, 1.0, s)?;
        let p = s.exponent();
        let mut table = Self {
            unit_price: Vec::with_capacity(sigmas.len()),
            compensation: Vec::with_capacity(sigmas.len()),
            valuation: Vec::with_capacity(sigmas.len()),
        };
        for &sigma in sigmas {
            market_model::check_variance(sigma)?;
            let root = libm::sqrt(sigma);
            table.unit_price.push(unit.unit_price / power(sigma, p));
            table.compensation.push(unit.compensation / root);
            table.valuation.push(unit.valuation / root);
        }
        Ok(table)
    }

    pub fn len(&self) -> usize {
        self.valuation.len()
    }

    pub fn is_empty(&self) -> bool {
        self.valuation.is_empty()
    }

    pub fn get(&self, i: usize) -> QuoteTerms {
        QuoteTerms {
            unit_price: self.unit_price[i],
            compensation: self.compensation[i],
            valuation: self.valuation[i],
        }
    }

    /// Writes the buyer's utility at every row into `out`.
    pub fn buyer_utilities(&self, level: &PricingSpec, out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            self.unit_price
                .iter()
                .zip(&self.compensation)
                .zip(&self.valuation)
                .map(|((u, c), v)| {
                    let original = level.k_pow * u;
                    v - if original > *c { original } else { *c }
                }),
        );
    }
}

fn price_terms(pq: &PricedQuery, s: &MarketScenario) -> Result<(f64, f64)> {
    let q = pq.query();
    let sigma = pq.sigma();
    let f = semi_norm(q);
    Ok((
        power(f * f / sigma, s.exponent()),
        total_compensation(q, sigma, s)?,
    ))
}

/// Original tariff `k f(q)^2 / sigma`.
pub fn original_price(pq: &PricedQuery, k: f64) -> Result<f64> {
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::NonPositivePricingLevel(k));
    }
    let f = semi_norm(pq.query());
    Ok(k * (f * f / pq.sigma()))
}

/// `max{(k f^2/sigma)^p, sum_i mu_i}`; the balanced price when `p = 1`.
pub fn balanced_price(pq: &PricedQuery, k: f64, s: &MarketScenario) -> Result<f64> {
    let level = PricingSpec::for_scenario(k, s)?;
    let (unit, comp) = price_terms(pq, s)?;
    Ok((level.k_pow * unit).max(comp))
}

/// Gross informational value `A(q) / sqrt(sigma)`.
pub fn buyer_valuation(pq: &PricedQuery) -> Result<f64> {
    Ok(value_intensity(pq.query())? / libm::sqrt(pq.sigma()))
}

pub fn buyer_utility(pq: &PricedQuery, k: f64, s: &MarketScenario) -> Result<f64> {
    Ok(buyer_valuation(pq)? - balanced_price(pq, k, s)?)
}

/// Revenue minus compensation, `((k f^2/sigma)^p - sum_i mu_i)^+`.
pub fn maker_utility(pq: &PricedQuery, k: f64, s: &MarketScenario) -> Result<f64> {
    let level = PricingSpec::for_scenario(k, s)?;
    let (unit, comp) = price_terms(pq, s)?;
    Ok((level.k_pow * unit - comp).max(0.0))
}

/// Coefficients `alpha` expressing a target query through a bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct AnswerabilityWitness {
    alphas: Vec<f64>,
}

impl AnswerabilityWitness {
    pub fn new(alphas: impl Into<Vec<f64>>) -> Result<Self> {
        let alphas = alphas.into();
        if alphas.iter().any(|a| !a.is_finite()) {
            return Err(Error::NonFinite("witness coefficients"));
        }
        if alphas.iter().all(|a| *a == 0.0) {
            return Err(Error::ZeroWitness);
        }
        Ok(Self { alphas })
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArbitrageReport {
    pub target_price: f64,
    pub bundle_price_sum: f64,
    pub violated: bool,
    /// `bundle_price_sum - target_price`; negative means the bundle is cheaper.
    pub slack: f64,
}

/// Checks `sum_j alpha_j q_j = q` (max-norm, within `tol`) and
/// `sum_j alpha_j^2 sigma_j <= sigma (1 + tol)`.
pub fn is_linearly_answerable(
    target: &PricedQuery,
    bundle: &[PricedQuery],
    witness: &AnswerabilityWitness,
    tol: f64,
) -> Result<bool> {
    if bundle.is_empty() {
        return Err(Error::EmptyBundle);
    }
    if witness.alphas.len() != bundle.len() {
        return Err(Error::DimensionMismatch {
            expected: bundle.len(),
            found: witness.alphas.len(),
        });
    }
    let n = target.query().len();
    if let Some(bad) = bundle.iter().find(|b| b.query().len() != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: bad.query().len(),
        });
    }
    let mut combined = alloc::vec![0.0; n];
    let mut variance = 0.0;
    for (alpha, item) in witness.alphas.iter().zip(bundle) {
        for (acc, c) in combined.iter_mut().zip(item.query().coeffs()) {
            *acc += alpha * c;
        }
        variance += alpha * alpha * item.sigma();
    }
    let max_err = combined
        .iter()
        .zip(target.query().coeffs())
        .map(|(a, b)| libm::fabs(a - b))
        .fold(0.0, f64::max);
    Ok(max_err <= tol && variance <= target.sigma() * (1.0 + tol))
}

/// Target, bundle and witness where the target is answerable by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct AnswerableInstance {
    pub target: PricedQuery,
    pub bundle: Vec<PricedQuery>,
    pub witness: AnswerabilityWitness,
}

fn random_query(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| {
            if rng.gen_bool(0.2) {
                0.0
            } else {
                rng.gen_range(-2.0..2.0)
            }
        })
        .collect()
}

fn random_alpha(rng: &mut impl Rng) -> f64 {
    let magnitude = rng.gen_range(0.05..2.0);
    if rng.gen_bool(0.5) {
        magnitude
    } else {
        -magnitude
    }
}

/// Samples `m` bundle queries of dimension `n` and a witness, then sets the
/// target to `(sum_j alpha_j q_j, sum_j alpha_j^2 sigma_j)`.
pub fn make_answerable_instance(
    seed: u64,
    n: usize,
    m: usize,
    s: &MarketScenario,
) -> Result<AnswerableInstance> {
    if n == 0 || m == 0 {
        return Err(Error::EmptyBundle);
    }
    if n != s.dimension() {
        return Err(Error::DimensionMismatch {
            expected: s.dimension(),
            found: n,
        });
    }
    let mut rng = rng::seeded(seed);
    let mut bundle = Vec::with_capacity(m);
    let mut alphas = Vec::with_capacity(m);
    for _ in 0..m {
        let coeffs = random_query(&mut rng, n);
        let sigma = libm::exp(rng.gen_range(-4.0..4.0));
        bundle.push(PricedQuery::new(LinearQuery::new(coeffs)?, sigma)?);
        alphas.push(random_alpha(&mut rng));
    }
    let target = combine(&bundle, &alphas)?;
    Ok(AnswerableInstance {
        target,
        bundle,
        witness: AnswerabilityWitness::new(alphas)?,
    })
}

fn combine(bundle: &[PricedQuery], alphas: &[f64]) -> Result<PricedQuery> {
    let n = bundle[0].query().len();
    let mut coeffs = alloc::vec![0.0; n];
    let mut sigma = 0.0;
    for (alpha, item) in alphas.iter().zip(bundle) {
        for (acc, c) in coeffs.iter_mut().zip(item.query().coeffs()) {
            *acc += alpha * c;
        }
        sigma += alpha * alpha * item.sigma();
    }
    PricedQuery::new(LinearQuery::new(coeffs)?, sigma)
}

/// Prices the target and the bundle at `(k, p)` and flags
/// `pi(target) > sum_j pi(bundle_j) + tol (1 + |sum|)`.
pub fn check_arbitrage(
    target: &PricedQuery,
    bundle: &[PricedQuery],
    witness: &AnswerabilityWitness,
    k: f64,
    s: &MarketScenario,
    tol: f64,
) -> Result<ArbitrageReport> {
    if !is_linearly_answerable(target, bundle, witness, tol)? {
        return Err(Error::NotAnswerable);
    }
    let target_price = balanced_price(target, k, s)?;
    let mut bundle_price_sum = 0.0;
    for item in bundle {
        bundle_price_sum += balanced_price(item, k, s)?;
    }
    let slack = bundle_price_sum - target_price;
    Ok(ArbitrageReport {
        target_price,
        bundle_price_sum,
        violated: target_price > bundle_price_sum + tol * (1.0 + libm::fabs(bundle_price_sum)),
        slack,
    })
}

/// A violating instance found by [`search_arbitrage_counterexample`].
#[derive(Debug, Clone, PartialEq)]
pub struct Counterexample {
    pub instance: AnswerableInstance,
    pub k: f64,
    pub report: ArbitrageReport,
    /// Number of (bundle, alpha) pairs evaluated up to and including this one.
    pub trials: usize,
}

/// Alpha values scanned for each coordinate in the two-query search.
pub const ALPHA_GRID: [f64; 8] = [-2.0, -1.0, -0.5, -0.25, 0.25, 0.5, 1.0, 2.0];

/// Randomized search over two-query bundles and an exhaustive alpha grid for
/// a pricing violation. Each (bundle, alpha pair) counts as one trial.
pub fn search_arbitrage_counterexample(
    seed: u64,
    max_trials: usize,
    s: &MarketScenario,
) -> Result<Option<Counterexample>> {
    let n = s.dimension();
    let mut rng = rng::seeded(seed);
    let mut trials = 0;
    while trials < max_trials {
        let k = libm::exp(rng.gen_range(-3.0..3.0));
        let bundle = [
            PricedQuery::new(
                LinearQuery::new(random_query(&mut rng, n))?,
                libm::exp(rng.gen_range(-4.0..4.0)),
            )?,
            PricedQuery::new(
                LinearQuery::new(random_query(&mut rng, n))?,
                libm::exp(rng.gen_range(-4.0..4.0)),
            )?,
        ];
        for a0 in ALPHA_GRID {
            for a1 in ALPHA_GRID {
                if trials >= max_trials {
                    return Ok(None);
                }
                trials += 1;
                let alphas = [a0, a1];
                let target = combine(&bundle, &alphas)?;
                let witness = AnswerabilityWitness::new(alphas)?;
                let report =
                    check_arbitrage(&target, &bundle, &witness, k, s, ARBITRAGE_RTOL)?;
                if report.violated {
                    return Ok(Some(Counterexample {
                        instance: AnswerableInstance {
                            target,
                            bundle: bundle.to_vec(),
                            witness,
                        },
                        k,
                        report,
                        trials,
                    }));
                }
            }
        }
    }
    Ok(None)
}
