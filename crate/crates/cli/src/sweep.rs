//! One-parameter sweeps producing [`SweepRow`]s in grid order.
//!
//! * `k`: the maker's profit curve. `k_star` is the equilibrium level; the
//!   variance, profit and buyer utility columns are evaluated at the swept
//!   level with the buyer best-responding.
//! * `p`, `gamma`: the equilibrium of the scenario's query as the exponent or
//!   change bound varies.
//! * `q`: the equilibrium of the single-item query `[q]`, which traces the
//!   regime boundaries.

use dp_market_core::equilibrium::{classify, GameInstance};
use dp_market_core::market_model::{gamma_threshold, semi_norm, value_intensity};
use dp_market_core::oracle::{GridScale, GridSpec};
use dp_market_core::{Error, IntensityKind, LinearQuery, MarketScenario, Regime, VarianceChoice};

use crate::rows::{LevelCell, SweepRow, VarianceCell};
use crate::scenario::{ScenarioFile, SweepVar};
use crate::CliError;

pub const DEFAULT_POINTS: usize = 101;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepGrid {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
    pub scale: GridScale,
}

impl SweepGrid {
    /// Command-line values take precedence over the scenario's sweep block.
    pub fn resolve(
        file: &ScenarioFile,
        lo: Option<f64>,
        hi: Option<f64>,
        points: Option<usize>,
        scale: Option<GridScale>,
    ) -> Result<Self, CliError> {
        let lo = lo.or(file.sweep.lo).ok_or_else(|| {
            CliError::Usage("sweep needs a lower bound (--lo or sweep.lo)".into())
        })?;
        let hi = hi.or(file.sweep.hi).ok_or_else(|| {
            CliError::Usage("sweep needs an upper bound (--hi or sweep.hi)".into())
        })?;
        let grid = Self {
            lo,
            hi,
            points: points.or(file.sweep.points).unwrap_or(DEFAULT_POINTS),
            scale: scale.or(file.sweep.scale).unwrap_or(GridScale::Linear),
        };
        grid.spec()?;
        Ok(grid)
    }

    fn spec(&self) -> Result<GridSpec, CliError> {
        GridSpec::new(self.lo, self.hi, self.points, self.scale)
            .map_err(|e| CliError::Usage(format!("sweep grid: {e}")))
    }

    pub fn values(&self) -> Result<Vec<f64>, CliError> {
        Ok(self.spec()?.values())
    }
}

pub fn run(file: &ScenarioFile, var: SweepVar, grid: &SweepGrid) -> Result<Vec<SweepRow>, CliError> {
    let (q, s) = file.build(false)?;
    let values = grid.values()?;
    match var {
        SweepVar::K => sweep_k(&q, &s, &values),
        SweepVar::P => values
            .iter()
            .map(|&p| equilibrium_row(p, &q, &s.clone().with_exponent(p)?))
            .collect(),
        SweepVar::Gamma => values
            .iter()
            .map(|&g| equilibrium_row(g, &q, &s.clone().with_change_bound(g)?))
            .collect(),
        SweepVar::Q => {
            if q.len() != 1 {
                return Err(CliError::Usage(format!(
                    "--var q needs a single-item scenario, this one has {} items",
                    q.len()
                )));
            }
            if matches!(q.intensity_kind(), IntensityKind::Table(_)) {
                return Err(CliError::Usage(
                    "--var q cannot sweep a table intensity; use constant, log-support or shifted-log"
                        .into(),
                ));
            }
            values
                .iter()
                .map(|&x| equilibrium_row(x, &q.with_coeffs([x])?, &s))
                .collect()
        }
    }
}

fn equilibrium_row(value: f64, q: &LinearQuery, s: &MarketScenario) -> Result<SweepRow, CliError> {
    let intensity = value_intensity(q)?;
    let threshold = gamma_threshold(q, s)?;
    if semi_norm(q) == 0.0 {
        return Ok(SweepRow {
            value,
            intensity,
            threshold,
            regime: classify(intensity, threshold, s.exponent()),
            k_star: LevelCell::Undefined,
            sigma_star: VarianceCell::Undefined,
            psi_star: None,
            phi_star: None,
        });
    }
    let e = GameInstance::new(q, s)?.equilibrium();
    Ok(SweepRow::from_equilibrium(value, intensity, threshold, &e))
}

fn sweep_k(q: &LinearQuery, s: &MarketScenario, ks: &[f64]) -> Result<Vec<SweepRow>, CliError> {
    let g = GameInstance::new(q, s)?;
    let e = g.equilibrium();
    ks.iter()
        .map(|&k| {
            let (sigma_star, psi, phi) = match g.buyer_best_response(k)? {
                VarianceChoice::NoTrade => (VarianceCell::NoTrade, 0.0, 0.0),
                VarianceChoice::Finite(sigma) => (
                    VarianceCell::Value(sigma),
                    g.maker_profit_curve(k)?,
                    g.buyer_utility_at(sigma, k),
                ),
            };
            Ok(SweepRow {
                value: k,
                intensity: g.intensity(),
                threshold: g.threshold(),
                regime: e.regime,
                k_star: LevelCell::from_level(e.k_star),
                sigma_star,
                psi_star: Some(psi),
                phi_star: Some(phi),
            })
        })
        .collect::<Result<Vec<_>, Error>>()
        .map_err(CliError::from)
}

/// Total length of the swept range whose rows fall in `regime`, measured
/// between midpoints of neighbouring grid points.
pub fn regime_width(rows: &[SweepRow], regime: Regime) -> f64 {
    let n = rows.len();
    (0..n)
        .filter(|&i| rows[i].regime == regime)
        .map(|i| {
            let left = if i == 0 { rows[0].value } else { 0.5 * (rows[i - 1].value + rows[i].value) };
            let right = if i + 1 == n { rows[n - 1].value } else { 0.5 * (rows[i].value + rows[i + 1].value) };
            right - left
        })
        .sum()
}

/// Regimes of consecutive runs of rows.
pub fn regime_sequence(rows: &[SweepRow]) -> Vec<Regime> {
    let mut seq: Vec<Regime> = Vec::new();
    for row in rows {
        if seq.last() != Some(&row.regime) {
            seq.push(row.regime);
        }
    }
    seq
}
