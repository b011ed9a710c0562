//! Brute-force solver for both stages of the game.
//!
//! Utilities are evaluated only through [`crate::pricing`]; nothing here knows
//! the closed-form solutions. Each search is a coarse scan followed by one
//! linear refinement pass around the coarse argmax. Ties go to the lowest grid
//! index, so results do not depend on evaluation order.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::market_model::{LinearQuery, MarketScenario};
use crate::pricing::{PricingSpec, QuoteTable};

/// Default number of coarse and refined points per axis.
pub const DEFAULT_POINTS: usize = 4096;
/// Profit at or below this, once grid resolution is accounted for, is zero.
pub const ZERO_PROFIT_TOL: f64 = 1e-8;
/// Fraction of the variance grid examined for the no-trade signature.
pub const NO_TRADE_TAIL: f64 = 0.01;
/// Coarse steps on each side of the coarse `k` argmax covered by refinement.
pub const K_REFINE_HALF_WIDTH: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridScale {
    Linear,
    Logarithmic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    lo: f64,
    hi: f64,
    points: usize,
    scale: GridScale,
    refine_points: usize,
}

impl GridSpec {
    /// A grid without a refinement pass.
    pub fn new(lo: f64, hi: f64, points: usize, scale: GridScale) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidGrid("grid needs finite lo < hi"));
        }
        if points < 2 {
            return Err(Error::InvalidGrid("grid needs at least two points"));
        }
        if scale == GridScale::Logarithmic && lo <= 0.0 {
            return Err(Error::InvalidGrid("logarithmic grid needs lo > 0"));
        }
        Ok(Self {
            lo,
            hi,
            points,
            scale,
            refine_points: 0,
        })
    }

    /// Enables a linear refinement pass of `refine_points` around the coarse
    /// argmax; `0` disables it.
    pub fn with_refinement(mut self, refine_points: usize) -> Result<Self> {
        if refine_points == 1 || refine_points == 2 {
            return Err(Error::InvalidGrid("refinement needs 0 or at least three points"));
        }
        self.refine_points = refine_points;
        Ok(self)
    }

    /// `[max(1e-4, sigma_min), 1e4]`, logarithmic, 4096 + 4096 points.
    pub fn default_sigma(sigma_min: f64) -> Result<Self> {
        Self::new(sigma_min.max(1e-4), 1e4, DEFAULT_POINTS, GridScale::Logarithmic)?
            .with_refinement(DEFAULT_POINTS)
    }

    /// `[1e-4, 1e4]`, logarithmic, 4096 + 4096 points.
    pub fn default_k() -> Self {
        Self {
            lo: 1e-4,
            hi: 1e4,
            points: DEFAULT_POINTS,
            scale: GridScale::Logarithmic,
            refine_points: DEFAULT_POINTS,
        }
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn scale(&self) -> GridScale {
        self.scale
    }

    pub fn refine_points(&self) -> usize {
        self.refine_points
    }

    /// Coarse grid values with exact endpoints.
    pub fn values(&self) -> Vec<f64> {
        match self.scale {
            GridScale::Linear => linspace(self.lo, self.hi, self.points),
            GridScale::Logarithmic => {
                let (a, b) = (libm::log(self.lo), libm::log(self.hi));
                let last = self.points - 1;
                (0..self.points)
                    .map(|i| match i {
                        0 => self.lo,
                        i if i == last => self.hi,
                        i => libm::exp(a + (b - a) * i as f64 / last as f64),
                    })
                    .collect()
            }
        }
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let last = n - 1;
    (0..n)
        .map(|i| match i {
            0 => lo,
            i if i == last => hi,
            i => lo + (hi - lo) * i as f64 / last as f64,
        })
        .collect()
}

/// Index of the first maximum.
fn argmax(values: impl Iterator<Item = f64>) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.enumerate() {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best
}

/// Brute-force buyer response at one pricing level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleResponse {
    pub sigma: f64,
    pub utility: f64,
    /// The maximizer sits at the grid's upper edge with utility still rising.
    pub no_trade: bool,
    /// Spacing of the finest grid around `sigma`.
    pub spacing: f64,
    pub lower_neighbor: Option<f64>,
    pub upper_neighbor: Option<f64>,
}

/// Brute-force Stackelberg outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleVerdict {
    Profitable,
    BreakEven,
    NoTrade,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleEquilibrium {
    pub verdict: OracleVerdict,
    pub k: f64,
    /// `None` when no level produces a purchase.
    pub sigma: Option<f64>,
    pub maker_profit: f64,
    pub buyer_utility: f64,
    /// Spacing of the finest `k` grid around `k`.
    pub k_spacing: f64,
    /// Spacing of the finest variance grid around `sigma`.
    pub sigma_spacing: f64,
    /// Largest profit change to a neighbouring `k` on the finest grid.
    pub profit_variation: f64,
    /// Largest profit net of its local grid variation over all scanned levels.
    pub max_resolved_profit: f64,
}

/// Variance grid with precomputed quote terms and memoized refinements.
struct SigmaLattice<'a> {
    q: &'a LinearQuery,
    s: &'a MarketScenario,
    coarse: Vec<f64>,
    coarse_terms: QuoteTable,
    refine_points: usize,
    tail_start: usize,
    refined: BTreeMap<usize, (Vec<f64>, QuoteTable)>,
    scratch: Vec<f64>,
}

/// First index of the largest value; the maximum is found with a branch-free
/// reduction before the index is located.
fn argmax_slice(values: &[f64]) -> (usize, f64) {
    let mut lanes = [f64::NEG_INFINITY; 8];
    let chunks = values.chunks_exact(8);
    let rest = chunks.remainder();
    for chunk in chunks {
        for (lane, v) in lanes.iter_mut().zip(chunk) {
            *lane = if *v > *lane { *v } else { *lane };
        }
    }
    let best = lanes
        .iter()
        .chain(rest)
        .fold(f64::NEG_INFINITY, |m, v| if *v > m { *v } else { m });
    let index = values.iter().position(|v| *v == best).unwrap_or(0);
    (index, values[index])
}

impl<'a> SigmaLattice<'a> {
    fn new(q: &'a LinearQuery, s: &'a MarketScenario, grid: &GridSpec) -> Result<Self> {
        let sigma_min = s.sigma_min_for(q);
        if grid.lo < sigma_min {
            return Err(Error::GridBelowSigmaMin {
                lo: grid.lo,
                sigma_min,
            });
        }
        let coarse = grid.values();
        let coarse_terms = QuoteTable::at(q, &coarse, s)?;
        let tail = (libm::ceil(grid.points as f64 * NO_TRADE_TAIL) as usize).max(2);
        Ok(Self {
            q,
            s,
            tail_start: grid.points - tail.min(grid.points),
            coarse,
            coarse_terms,
            refine_points: grid.refine_points,
            refined: BTreeMap::new(),
            scratch: Vec::new(),
        })
    }

    fn ensure_refinement(&mut self, centre: usize) -> Result<()> {
        if !self.refined.contains_key(&centre) {
            let lo = self.coarse[centre.saturating_sub(1)];
            let hi = self.coarse[(centre + 1).min(self.coarse.len() - 1)];
            let sigmas = linspace(lo, hi, self.refine_points);
            let terms = QuoteTable::at(self.q, &sigmas, self.s)?;
            self.refined.insert(centre, (sigmas, terms));
        }
        Ok(())
    }

    /// Buyer response, maker profit there, and the largest profit change to a
    /// neighbouring grid point.
    fn respond(&mut self, level: &PricingSpec, refine: bool) -> Result<(OracleResponse, f64, f64)> {
        self.coarse_terms.buyer_utilities(level, &mut self.scratch);
        let (i, best) = argmax_slice(&self.scratch);
        let last = self.coarse.len() - 1;
        let rising = self.scratch[self.tail_start..].windows(2).all(|w| w[1] > w[0]);
        if i == last && rising {
            let response = OracleResponse {
                sigma: self.coarse[last],
                utility: best,
                no_trade: true,
                spacing: self.coarse[last] - self.coarse[last - 1],
                lower_neighbor: Some(self.coarse[last - 1]),
                upper_neighbor: None,
            };
            return Ok((response, 0.0, 0.0));
        }
        let refined = refine && self.refine_points > 0;
        if refined {
            self.ensure_refinement(i)?;
        }
        let (sigmas, terms) = if refined {
            let (sigmas, terms) = &self.refined[&i];
            (sigmas.as_slice(), terms)
        } else {
            (self.coarse.as_slice(), &self.coarse_terms)
        };
        let (j, utility) = if refined {
            terms.buyer_utilities(level, &mut self.scratch);
            argmax_slice(&self.scratch)
        } else {
            (i, best)
        };
        let lower = j.checked_sub(1);
        let upper = (j + 1 < sigmas.len()).then_some(j + 1);
        let profit = terms.get(j).maker_utility(level);
        let variation = [lower, upper]
            .into_iter()
            .flatten()
            .map(|n| (terms.get(n).maker_utility(level) - profit).abs())
            .fold(0.0, f64::max);
        let spacing = [lower, upper]
            .into_iter()
            .flatten()
            .map(|n| (sigmas[n] - sigmas[j]).abs())
            .fold(0.0, f64::max);
        let response = OracleResponse {
            sigma: sigmas[j],
            utility,
            no_trade: false,
            spacing,
            lower_neighbor: lower.map(|n| sigmas[n]),
            upper_neighbor: upper.map(|n| sigmas[n]),
        };
        Ok((response, profit, variation))
    }
}

/// Maximizes the buyer's utility over `sigma_grid` for the level `k`.
pub fn oracle_best_response(
    q: &LinearQuery,
    k: f64,
    s: &MarketScenario,
    sigma_grid: &GridSpec,
) -> Result<OracleResponse> {
    let level = PricingSpec::for_scenario(k, s)?;
    let mut lattice = SigmaLattice::new(q, s, sigma_grid)?;
    Ok(lattice.respond(&level, true)?.0)
}

struct LevelOutcome {
    k: f64,
    response: OracleResponse,
    profit: f64,
}

/// Scans `k_grid`, solving the buyer's problem at every level, and returns the
/// level with the largest maker profit.
pub fn oracle_equilibrium(
    q: &LinearQuery,
    s: &MarketScenario,
    k_grid: &GridSpec,
    sigma_grid: &GridSpec,
) -> Result<OracleEquilibrium> {
    let mut lattice = SigmaLattice::new(q, s, sigma_grid)?;
    let mut max_resolved = f64::NEG_INFINITY;

    let mut scan = |lattice: &mut SigmaLattice<'_>, ks: &[f64], refine: bool| -> Result<Vec<Option<LevelOutcome>>> {
        ks.iter()
            .map(|&k| {
                let level = PricingSpec::for_scenario(k, s)?;
                let (response, profit, variation) = lattice.respond(&level, refine)?;
                if response.no_trade {
                    return Ok(None);
                }
                max_resolved = max_resolved.max(profit - variation);
                Ok(Some(LevelOutcome {
                    k,
                    response,
                    profit,
                }))
            })
            .collect()
    };

    let coarse_k = k_grid.values();
    let coarse = scan(&mut lattice, &coarse_k, false)?;
    let Some((centre, _)) = argmax(
        coarse
            .iter()
            .map(|o| o.as_ref().map_or(f64::NEG_INFINITY, |o| o.profit)),
    )
    .filter(|(_, v)| *v > f64::NEG_INFINITY) else {
        return Ok(OracleEquilibrium {
            verdict: OracleVerdict::NoTrade,
            k: coarse_k[0],
            sigma: None,
            maker_profit: 0.0,
            buyer_utility: 0.0,
            k_spacing: coarse_k[1] - coarse_k[0],
            sigma_spacing: 0.0,
            profit_variation: 0.0,
            max_resolved_profit: 0.0,
        });
    };

    let (fine_k, fine) = if k_grid.refine_points > 0 {
        let lo = coarse_k[centre.saturating_sub(K_REFINE_HALF_WIDTH)];
        let hi = coarse_k[(centre + K_REFINE_HALF_WIDTH).min(coarse_k.len() - 1)];
        let ks = linspace(lo, hi, k_grid.refine_points);
        let outcomes = scan(&mut lattice, &ks, true)?;
        (ks, outcomes)
    } else {
        (coarse_k, coarse)
    };

    let profits: Vec<f64> = fine
        .iter()
        .map(|o| o.as_ref().map_or(f64::NEG_INFINITY, |o| o.profit))
        .collect();
    let (best, _) = argmax(profits.iter().copied()).expect("grid has points");
    let outcome = fine[best].as_ref().ok_or(Error::InvalidGrid(
        "refined pricing window produced no purchase",
    ))?;
    let neighbours = [best.checked_sub(1), (best + 1 < fine_k.len()).then_some(best + 1)];
    let profit_variation = neighbours
        .iter()
        .flatten()
        .filter(|n| profits[**n].is_finite())
        .map(|n| (profits[*n] - outcome.profit).abs())
        .fold(0.0, f64::max);
    let k_spacing = neighbours
        .iter()
        .flatten()
        .map(|n| (fine_k[*n] - outcome.k).abs())
        .fold(0.0, f64::max);
    let verdict = if max_resolved <= ZERO_PROFIT_TOL {
        OracleVerdict::BreakEven
    } else {
        OracleVerdict::Profitable
    };
    Ok(OracleEquilibrium {
        verdict,
        k: outcome.k,
        sigma: Some(outcome.response.sigma),
        maker_profit: outcome.profit,
        buyer_utility: outcome.response.utility,
        k_spacing,
        sigma_spacing: outcome.response.spacing,
        profit_variation,
        max_resolved_profit: max_resolved.max(0.0),
    })
}

/// One oracle value set against its closed-form counterpart.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleReport {
    pub oracle_value: f64,
    pub closed_form_value: f64,
    pub abs_gap: f64,
    pub rel_gap: f64,
    pub within_tolerance: bool,
    pub grid_resolution_bound: f64,
}

impl OracleReport {
    /// `within_tolerance` holds iff
    /// `abs_gap <= max(atol, rtol |closed_form|) + grid_resolution_bound`.
    pub fn new(
        oracle_value: f64,
        closed_form_value: f64,
        rtol: f64,
        atol: f64,
        grid_resolution_bound: f64,
    ) -> Self {
        let abs_gap = (oracle_value - closed_form_value).abs();
        let scale = closed_form_value.abs();
        let rel_gap = if scale > 0.0 { abs_gap / scale } else { abs_gap };
        Self {
            oracle_value,
            closed_form_value,
            abs_gap,
            rel_gap,
            within_tolerance: abs_gap <= atol.max(rtol * scale) + grid_resolution_bound,
            grid_resolution_bound,
        }
    }
}
