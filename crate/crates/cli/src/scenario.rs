//! Flat `key = value` scenario files.
//!
//! ```text
//! # single-item profitable scenario
//! coeffs = [1]
//! privacy_weights = [1]
//! gamma = 1
//! sigma_min = 1
//! p = 1
//! norm_kind = l2
//! intensity_kind = constant 10
//! sweep.variable = k
//! sweep.lo = 0.01
//! sweep.hi = 20
//! sweep.points = 400
//! sweep.scale = log
//! ```
//!
//! `norm_kind` is `l2` or `weighted-l2 [w1, w2, ...]`. `intensity_kind` is
//! `log-support`, `constant <A>`, `shifted-log <shift>` or `table`; a table
//! is listed under `intensity_table` as `[q1, q2] -> A` entries separated by
//! `;`. Blank lines and lines starting with `#` are ignored.

use std::fmt::Write as _;
use std::str::FromStr;

use dp_market_core::oracle::GridScale;
use dp_market_core::{IntensityKind, LinearQuery, MarketScenario, NormKind};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {key}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub key: String,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepVar {
    K,
    Q,
    P,
    Gamma,
}

impl SweepVar {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepVar::K => "k",
            SweepVar::Q => "q",
            SweepVar::P => "p",
            SweepVar::Gamma => "gamma",
        }
    }
}

impl FromStr for SweepVar {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "k" => Ok(SweepVar::K),
            "q" => Ok(SweepVar::Q),
            "p" => Ok(SweepVar::P),
            "gamma" => Ok(SweepVar::Gamma),
            other => Err(format!("expected one of k, q, p, gamma, got `{other}`")),
        }
    }
}

pub fn parse_scale(s: &str) -> Result<GridScale, String> {
    match s {
        "linear" => Ok(GridScale::Linear),
        "log" => Ok(GridScale::Logarithmic),
        other => Err(format!("expected `linear` or `log`, got `{other}`")),
    }
}

pub fn scale_name(scale: GridScale) -> &'static str {
    match scale {
        GridScale::Linear => "linear",
        GridScale::Logarithmic => "log",
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepBlock {
    pub variable: Option<SweepVar>,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    pub points: Option<usize>,
    pub scale: Option<GridScale>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioFile {
    pub coeffs: Vec<f64>,
    pub privacy_weights: Vec<f64>,
    pub gamma: f64,
    pub sigma_min: f64,
    pub p: f64,
    pub norm: NormKind,
    pub intensity: IntensityKind,
    pub sweep: SweepBlock,
}

const REQUIRED: [&str; 5] = ["coeffs", "privacy_weights", "gamma", "sigma_min", "p"];
const KNOWN: [&str; 13] = [
    "coeffs",
    "privacy_weights",
    "gamma",
    "sigma_min",
    "p",
    "norm_kind",
    "intensity_kind",
    "intensity_table",
    "sweep.variable",
    "sweep.lo",
    "sweep.hi",
    "sweep.points",
    "sweep.scale",
];

struct Entry<'a> {
    line: usize,
    key: &'a str,
    value: &'a str,
}

impl Entry<'_> {
    fn error(&self, message: impl Into<String>) -> ParseError {
        ParseError {
            line: self.line,
            key: self.key.to_string(),
            message: message.into(),
        }
    }

    fn number(&self) -> Result<f64, ParseError> {
        parse_number(self.value).map_err(|m| self.error(m))
    }

    fn list(&self) -> Result<Vec<f64>, ParseError> {
        parse_list(self.value).map_err(|m| self.error(m))
    }
}

fn parse_number(s: &str) -> Result<f64, String> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| format!("`{}` is not a number", s.trim()))
}

fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    let s = s.trim();
    let inner = s
        .strip_prefix('[')
        .and_then(|r| r.strip_suffix(']'))
        .ok_or_else(|| format!("expected a bracketed list, got `{s}`"))?;
    if inner.trim().is_empty() {
        return Ok(Vec::new());
    }
    inner.split(',').map(parse_number).collect()
}

fn parse_norm(e: &Entry<'_>) -> Result<NormKind, ParseError> {
    let v = e.value.trim();
    if v == "l2" {
        return Ok(NormKind::L2);
    }
    match v.strip_prefix("weighted-l2") {
        Some(rest) => Ok(NormKind::WeightedL2(parse_list(rest).map_err(|m| e.error(m))?)),
        None => Err(e.error(format!("expected `l2` or `weighted-l2 [..]`, got `{v}`"))),
    }
}

/// Intensity kind; a table is returned empty and filled from `intensity_table`.
fn parse_intensity(e: &Entry<'_>) -> Result<IntensityKind, ParseError> {
    let v = e.value.trim();
    let (word, rest) = v.split_once(char::is_whitespace).unwrap_or((v, ""));
    let payload = || parse_number(rest).map_err(|m| e.error(m));
    match word {
        "log-support" if rest.trim().is_empty() => Ok(IntensityKind::LogSupport),
        "table" if rest.trim().is_empty() => Ok(IntensityKind::Table(Vec::new())),
        "constant" => Ok(IntensityKind::Constant(payload()?)),
        "shifted-log" => Ok(IntensityKind::ShiftedLog(payload()?)),
        _ => Err(e.error(format!(
            "expected `log-support`, `constant <v>`, `shifted-log <v>` or `table`, got `{v}`"
        ))),
    }
}

fn parse_table(e: &Entry<'_>) -> Result<Vec<(Vec<f64>, f64)>, ParseError> {
    e.value
        .split(';')
        .filter(|chunk| !chunk.trim().is_empty())
        .map(|chunk| {
            let (coeffs, value) = chunk
                .split_once("->")
                .ok_or_else(|| e.error(format!("expected `[..] -> value`, got `{}`", chunk.trim())))?;
            Ok((
                parse_list(coeffs).map_err(|m| e.error(m))?,
                parse_number(value).map_err(|m| e.error(m))?,
            ))
        })
        .collect()
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self, ParseError> {
        let mut entries: Vec<Entry<'_>> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (key, value) = trimmed.split_once('=').ok_or_else(|| ParseError {
                line,
                key: trimmed.to_string(),
                message: "expected `key = value`".into(),
            })?;
            let key = key.trim();
            if !KNOWN.contains(&key) {
                return Err(ParseError {
                    line,
                    key: key.to_string(),
                    message: "unknown key".into(),
                });
            }
            if let Some(prev) = entries.iter().find(|e| e.key == key) {
                return Err(ParseError {
                    line,
                    key: key.to_string(),
                    message: format!("duplicate key (first set on line {})", prev.line),
                });
            }
            entries.push(Entry { line, key, value });
        }
        let get = |key: &str| entries.iter().find(|e| e.key == key);
        let last_line = text.lines().count().max(1);
        for key in REQUIRED {
            if get(key).is_none() {
                return Err(ParseError {
                    line: last_line,
                    key: key.to_string(),
                    message: "missing required key".into(),
                });
            }
        }
        let required = |key: &str| get(key).expect("checked above");

        let norm = get("norm_kind").map(parse_norm).transpose()?.unwrap_or(NormKind::L2);
        let mut intensity = get("intensity_kind")
            .map(parse_intensity)
            .transpose()?
            .unwrap_or_default();
        match (&mut intensity, get("intensity_table")) {
            (IntensityKind::Table(entries), Some(e)) => *entries = parse_table(e)?,
            (IntensityKind::Table(_), None) => {
                return Err(ParseError {
                    line: get("intensity_kind").map_or(last_line, |e| e.line),
                    key: "intensity_table".into(),
                    message: "required when intensity_kind = table".into(),
                })
            }
            (_, Some(e)) => return Err(e.error("only allowed when intensity_kind = table")),
            (_, None) => {}
        }

        let sweep = SweepBlock {
            variable: get("sweep.variable")
                .map(|e| e.value.trim().parse().map_err(|m: String| e.error(m)))
                .transpose()?,
            lo: get("sweep.lo").map(Entry::number).transpose()?,
            hi: get("sweep.hi").map(Entry::number).transpose()?,
            points: get("sweep.points")
                .map(|e| {
                    e.value
                        .trim()
                        .parse::<usize>()
                        .map_err(|_| e.error(format!("`{}` is not a point count", e.value.trim())))
                })
                .transpose()?,
            scale: get("sweep.scale")
                .map(|e| parse_scale(e.value.trim()).map_err(|m| e.error(m)))
                .transpose()?,
        };

        Ok(Self {
            coeffs: required("coeffs").list()?,
            privacy_weights: required("privacy_weights").list()?,
            gamma: required("gamma").number()?,
            sigma_min: required("sigma_min").number()?,
            p: required("p").number()?,
            norm,
            intensity,
            sweep,
        })
    }

    /// Serializes back into the file format; floats use shortest round-trip
    /// formatting.
    pub fn to_text(&self) -> String {
        fn list(v: &[f64]) -> String {
            let items: Vec<String> = v.iter().map(|x| format!("{x:?}")).collect();
            format!("[{}]", items.join(", "))
        }
        let mut out = String::new();
        let _ = writeln!(out, "coeffs = {}", list(&self.coeffs));
        let _ = writeln!(out, "privacy_weights = {}", list(&self.privacy_weights));
        let _ = writeln!(out, "gamma = {:?}", self.gamma);
        let _ = writeln!(out, "sigma_min = {:?}", self.sigma_min);
        let _ = writeln!(out, "p = {:?}", self.p);
        match &self.norm {
            NormKind::L2 => out.push_str("norm_kind = l2\n"),
            NormKind::WeightedL2(w) => {
                let _ = writeln!(out, "norm_kind = weighted-l2 {}", list(w));
            }
        }
        match &self.intensity {
            IntensityKind::LogSupport => out.push_str("intensity_kind = log-support\n"),
            IntensityKind::Constant(v) => {
                let _ = writeln!(out, "intensity_kind = constant {v:?}");
            }
            IntensityKind::ShiftedLog(v) => {
                let _ = writeln!(out, "intensity_kind = shifted-log {v:?}");
            }
            IntensityKind::Table(entries) => {
                out.push_str("intensity_kind = table\n");
                let cells: Vec<String> = entries
                    .iter()
                    .map(|(c, v)| format!("{} -> {v:?}", list(c)))
                    .collect();
                let _ = writeln!(out, "intensity_table = {}", cells.join("; "));
            }
        }
        if let Some(v) = self.sweep.variable {
            let _ = writeln!(out, "sweep.variable = {}", v.as_str());
        }
        if let Some(v) = self.sweep.lo {
            let _ = writeln!(out, "sweep.lo = {v:?}");
        }
        if let Some(v) = self.sweep.hi {
            let _ = writeln!(out, "sweep.hi = {v:?}");
        }
        if let Some(v) = self.sweep.points {
            let _ = writeln!(out, "sweep.points = {v}");
        }
        if let Some(v) = self.sweep.scale {
            let _ = writeln!(out, "sweep.scale = {}", scale_name(v));
        }
        out
    }

    /// Builds the validated query and scenario. `allow_any_exponent` admits
    /// exponents outside `(1/2, 1]` for arbitrage demonstrations.
    pub fn build(&self, allow_any_exponent: bool) -> dp_market_core::Result<(LinearQuery, MarketScenario)> {
        let query = LinearQuery::new(self.coeffs.clone())?
            .with_norm(self.norm.clone())?
            .with_intensity(self.intensity.clone());
        let scenario = if allow_any_exponent {
            MarketScenario::new_allowing_any_exponent(
                self.privacy_weights.clone(),
                self.gamma,
                self.sigma_min,
                self.p,
            )?
        } else {
            MarketScenario::new(self.privacy_weights.clone(), self.gamma, self.sigma_min, self.p)?
        };
        if query.len() != scenario.dimension() {
            return Err(dp_market_core::Error::DimensionMismatch {
                expected: scenario.dimension(),
                found: query.len(),
            });
        }
        Ok((query, scenario))
    }
}
