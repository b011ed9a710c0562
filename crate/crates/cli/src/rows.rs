//! Sweep rows and their CSV form.

use std::io::{Read, Write};

use dp_market_core::{EquilibriumResult, PricingLevel, Regime, VarianceChoice};
use thiserror::Error;

pub const HEADER: [&str; 8] = [
    "value",
    "A",
    "Gamma",
    "regime",
    "k_star",
    "sigma_star",
    "psi_star",
    "phi_star",
];

pub const INDIFFERENT: &str = "indifferent";
pub const NO_TRADE: &str = "no-trade";
pub const UNDEFINED: &str = "undefined";

#[derive(Debug, Error)]
pub enum RowError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("row {row}: column {column}: {message}")]
    Field {
        row: usize,
        column: &'static str,
        message: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LevelCell {
    Value(f64),
    Indifferent,
    /// The query has zero semi-norm, so no tariff is defined.
    Undefined,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VarianceCell {
    Value(f64),
    NoTrade,
    Undefined,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub intensity: f64,
    pub threshold: f64,
    pub regime: Regime,
    pub k_star: LevelCell,
    pub sigma_star: VarianceCell,
    /// `None` when undefined.
    pub psi_star: Option<f64>,
    pub phi_star: Option<f64>,
}

/// Shortest representation that parses back to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

impl LevelCell {
    pub fn from_level(level: PricingLevel) -> Self {
        match level {
            PricingLevel::Level(k) => LevelCell::Value(k),
            PricingLevel::Indifferent => LevelCell::Indifferent,
        }
    }

    fn render(&self) -> String {
        match self {
            LevelCell::Value(k) => fmt_f64(*k),
            LevelCell::Indifferent => INDIFFERENT.into(),
            LevelCell::Undefined => UNDEFINED.into(),
        }
    }

    fn read(s: &str) -> Result<Self, String> {
        match s {
            INDIFFERENT => Ok(LevelCell::Indifferent),
            UNDEFINED => Ok(LevelCell::Undefined),
            _ => read_f64(s).map(LevelCell::Value),
        }
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            LevelCell::Value(v) => Some(*v),
            _ => None,
        }
    }
}

impl VarianceCell {
    pub fn from_choice(choice: VarianceChoice) -> Self {
        match choice {
            VarianceChoice::Finite(s) => VarianceCell::Value(s),
            VarianceChoice::NoTrade => VarianceCell::NoTrade,
        }
    }

    fn render(&self) -> String {
        match self {
            VarianceCell::Value(s) => fmt_f64(*s),
            VarianceCell::NoTrade => NO_TRADE.into(),
            VarianceCell::Undefined => UNDEFINED.into(),
        }
    }

    fn read(s: &str) -> Result<Self, String> {
        match s {
            NO_TRADE => Ok(VarianceCell::NoTrade),
            UNDEFINED => Ok(VarianceCell::Undefined),
            _ => read_f64(s).map(VarianceCell::Value),
        }
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            VarianceCell::Value(v) => Some(*v),
            _ => None,
        }
    }
}

fn read_f64(s: &str) -> Result<f64, String> {
    s.parse::<f64>().map_err(|_| format!("`{s}` is not a number"))
}

fn render_opt(x: Option<f64>) -> String {
    x.map_or_else(|| UNDEFINED.into(), fmt_f64)
}

fn read_opt(s: &str) -> Result<Option<f64>, String> {
    if s == UNDEFINED {
        Ok(None)
    } else {
        read_f64(s).map(Some)
    }
}

impl SweepRow {
    pub fn from_equilibrium(value: f64, intensity: f64, threshold: f64, e: &EquilibriumResult) -> Self {
        Self {
            value,
            intensity,
            threshold,
            regime: e.regime,
            k_star: LevelCell::from_level(e.k_star),
            sigma_star: VarianceCell::from_choice(e.sigma_star),
            psi_star: Some(e.maker_profit),
            phi_star: Some(e.buyer_utility),
        }
    }

    pub fn record(&self) -> [String; 8] {
        [
            fmt_f64(self.value),
            fmt_f64(self.intensity),
            fmt_f64(self.threshold),
            self.regime.as_str().to_string(),
            self.k_star.render(),
            self.sigma_star.render(),
            render_opt(self.psi_star),
            render_opt(self.phi_star),
        ]
    }

    pub fn from_record(row: usize, record: &csv::StringRecord) -> Result<Self, RowError> {
        if record.len() != HEADER.len() {
            return Err(RowError::Field {
                row,
                column: "value",
                message: format!("expected {} columns, found {}", HEADER.len(), record.len()),
            });
        }
        let field = |i: usize| &record[i];
        let wrap = |column: &'static str| move |message: String| RowError::Field { row, column, message };
        let parsed = Self {
            value: read_f64(field(0)).map_err(wrap("value"))?,
            intensity: read_f64(field(1)).map_err(wrap("A"))?,
            threshold: read_f64(field(2)).map_err(wrap("Gamma"))?,
            regime: Regime::parse(field(3))
                .ok_or_else(|| format!("unknown regime `{}`", field(3)))
                .map_err(wrap("regime"))?,
            k_star: LevelCell::read(field(4)).map_err(wrap("k_star"))?,
            sigma_star: VarianceCell::read(field(5)).map_err(wrap("sigma_star"))?,
            psi_star: read_opt(field(6)).map_err(wrap("psi_star"))?,
            phi_star: read_opt(field(7)).map_err(wrap("phi_star"))?,
        };
        parsed.check().map_err(|(column, message)| RowError::Field { row, column, message })?;
        Ok(parsed)
    }

    /// Type invariants every row satisfies.
    pub fn check(&self) -> Result<(), (&'static str, String)> {
        if self.threshold.is_nan() || self.threshold < 0.0 {
            return Err(("Gamma", "threshold must be nonnegative".into()));
        }
        if let Some(psi) = self.psi_star {
            if psi.is_nan() || psi < 0.0 {
                return Err(("psi_star", "maker profit must be nonnegative".into()));
            }
        }
        let undefined = self.k_star == LevelCell::Undefined;
        if undefined != (self.sigma_star == VarianceCell::Undefined)
            || undefined != self.psi_star.is_none()
            || undefined != self.phi_star.is_none()
        {
            return Err(("k_star", "undefined cells must appear together".into()));
        }
        if undefined {
            return Ok(());
        }
        match self.regime {
            Regime::NoTrade => {
                if self.sigma_star != VarianceCell::NoTrade {
                    return Err(("sigma_star", "no-trade rows carry `no-trade`".into()));
                }
                if self.intensity > self.threshold {
                    return Err(("A", "no-trade needs A <= Gamma".into()));
                }
            }
            Regime::BreakEven | Regime::Profitable => {
                if !matches!(self.sigma_star, VarianceCell::Value(s) if s > 0.0) {
                    return Err(("sigma_star", "trading rows carry a positive variance".into()));
                }
                if self.intensity <= self.threshold {
                    return Err(("A", "trading needs A > Gamma".into()));
                }
            }
        }
        match (self.regime, self.k_star) {
            (Regime::Profitable, LevelCell::Value(k)) if k > 0.0 => Ok(()),
            (Regime::Profitable, _) => Err(("k_star", "profitable rows carry a positive level".into())),
            (_, LevelCell::Indifferent) => Ok(()),
            _ => Err(("k_star", "only profitable rows carry a level".into())),
        }
    }
}

pub fn write_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<(), RowError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HEADER)?;
    for row in rows {
        w.write_record(row.record())?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<SweepRow>, RowError> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    if header.iter().ne(HEADER.iter().copied()) {
        return Err(RowError::Field {
            row: 0,
            column: "value",
            message: format!("unexpected header `{}`", header.iter().collect::<Vec<_>>().join(",")),
        });
    }
    r.records()
        .enumerate()
        .map(|(i, rec)| SweepRow::from_record(i + 1, &rec?))
        .collect()
}
