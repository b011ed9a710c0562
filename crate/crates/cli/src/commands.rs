//! Command-line interface.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use dp_market_core::equilibrium::GameInstance;
use dp_market_core::oracle::GridScale;
use dp_market_core::{EquilibriumResult, PricingLevel, VarianceChoice};
use serde_json::{json, Value};

use crate::rows::{fmt_f64, INDIFFERENT, NO_TRADE};
use crate::scenario::{parse_scale, ScenarioFile, SweepVar};
use crate::sweep::{self, SweepGrid};
use crate::verify::{self, VerifyOptions};
use crate::CliError;

#[derive(Debug, Parser)]
#[command(name = "dp-market", version, about = "Stackelberg pricing of differentially private queries")]
pub struct Cli {
    /// Accept exponents outside (1/2, 1]; only useful with `verify`.
    #[arg(long, global = true)]
    pub test_mode_allow_invalid_p: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the trading regime with A, Gamma and 2pGamma.
    Classify(ScenarioArg),
    /// Solve for the equilibrium pricing level and variance.
    Equilibrium {
        #[command(flatten)]
        scenario: ScenarioArg,
        #[arg(long, conflicts_with = "csv")]
        json: bool,
        #[arg(long)]
        csv: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a CSV sweep over k, q, p or gamma.
    Sweep {
        #[command(flatten)]
        scenario: ScenarioArg,
        #[arg(long, value_parser = clap::builder::ValueParser::new(|s: &str| s.parse::<SweepVar>()))]
        var: Option<SweepVar>,
        #[arg(long, allow_negative_numbers = true)]
        lo: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        hi: Option<f64>,
        #[arg(long)]
        points: Option<usize>,
        #[arg(long, value_parser = clap::builder::ValueParser::new(parse_scale))]
        scale: Option<GridScale>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare closed forms with the brute-force oracle and run arbitrage checks.
    Verify {
        #[command(flatten)]
        scenario: ScenarioArg,
        #[arg(long, default_value_t = 200)]
        instances: usize,
        #[arg(long, env = "DP_MARKET_SEED", default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Args)]
pub struct ScenarioArg {
    /// Scenario file.
    pub scenario: PathBuf,
}

impl ScenarioArg {
    fn load(&self) -> Result<ScenarioFile, CliError> {
        let text = fs::read_to_string(&self.scenario).map_err(|source| CliError::Io {
            path: self.scenario.display().to_string(),
            source,
        })?;
        Ok(ScenarioFile::parse(&text)?)
    }
}

fn emit(out: Option<&Path>, bytes: &[u8], stdout: &mut dyn Write) -> Result<(), CliError> {
    let io = |path: &Path| {
        let path = path.display().to_string();
        move |source| CliError::Io { path, source }
    };
    match out {
        Some(path) => fs::write(path, bytes).map_err(io(path)),
        None => stdout.write_all(bytes).map_err(io(Path::new("<stdout>"))),
    }
}

fn level_json(level: PricingLevel) -> Value {
    match level {
        PricingLevel::Level(k) => json!(k),
        PricingLevel::Indifferent => json!(INDIFFERENT),
    }
}

fn variance_json(choice: VarianceChoice) -> Value {
    match choice {
        VarianceChoice::Finite(s) => json!(s),
        VarianceChoice::NoTrade => json!(NO_TRADE),
    }
}

fn level_text(level: PricingLevel) -> String {
    level.value().map_or_else(|| INDIFFERENT.into(), fmt_f64)
}

fn variance_text(choice: VarianceChoice) -> String {
    choice.value().map_or_else(|| NO_TRADE.into(), fmt_f64)
}

fn opt_text(x: Option<f64>) -> String {
    x.map_or_else(String::new, fmt_f64)
}

fn render_equilibrium(g: &GameInstance, e: &EquilibriumResult, json: bool, csv: bool) -> Result<Vec<u8>, CliError> {
    if json {
        let doc = json!({
            "regime": e.regime.as_str(),
            "A": g.intensity(),
            "Gamma": g.threshold(),
            "k_star": level_json(e.k_star),
            "sigma_star": variance_json(e.sigma_star),
            "psi_star": e.maker_profit,
            "phi_star": e.buyer_utility,
            "k_lower": e.k_lower,
            "k_upper": e.k_upper,
        });
        let mut text = serde_json::to_string_pretty(&doc).expect("json values serialize");
        text.push('\n');
        return Ok(text.into_bytes());
    }
    let fields = [
        ("regime", e.regime.as_str().to_string()),
        ("A", fmt_f64(g.intensity())),
        ("Gamma", fmt_f64(g.threshold())),
        ("k_star", level_text(e.k_star)),
        ("sigma_star", variance_text(e.sigma_star)),
        ("psi_star", fmt_f64(e.maker_profit)),
        ("phi_star", fmt_f64(e.buyer_utility)),
        ("k_lower", opt_text(e.k_lower)),
        ("k_upper", opt_text(e.k_upper)),
    ];
    if csv {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| CliError::Output(e.into());
        w.write_record(fields.iter().map(|(k, _)| *k)).map_err(err)?;
        w.write_record(fields.iter().map(|(_, v)| v.as_str())).map_err(err)?;
        return w.into_inner().map_err(|e| CliError::Output(csv::Error::from(e.into_error()).into()));
    }
    let mut text = String::new();
    for (k, v) in fields {
        text.push_str(&format!("{k:<11} {}\n", if v.is_empty() { "-" } else { &v }));
    }
    Ok(text.into_bytes())
}

/// Runs one parsed command, writing its report to `stdout`.
pub fn execute(cli: Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    let allow = cli.test_mode_allow_invalid_p;
    match cli.command {
        Command::Classify(arg) => {
            let (q, s) = arg.load()?.build(allow)?;
            let g = GameInstance::new(&q, &s)?;
            let line = format!(
                "{} A={} Gamma={} 2pGamma={}\n",
                g.regime(),
                fmt_f64(g.intensity()),
                fmt_f64(g.threshold()),
                fmt_f64(2.0 * g.exponent() * g.threshold())
            );
            emit(None, line.as_bytes(), stdout)
        }
        Command::Equilibrium { scenario, json, csv, out } => {
            let (q, s) = scenario.load()?.build(allow)?;
            let g = GameInstance::new(&q, &s)?;
            let bytes = render_equilibrium(&g, &g.equilibrium(), json, csv)?;
            emit(out.as_deref(), &bytes, stdout)
        }
        Command::Sweep {
            scenario,
            var,
            lo,
            hi,
            points,
            scale,
            out,
        } => {
            let file = scenario.load()?;
            let var = var
                .or(file.sweep.variable)
                .ok_or_else(|| CliError::Usage("sweep needs --var or sweep.variable".into()))?;
            let grid = SweepGrid::resolve(&file, lo, hi, points, scale)?;
            let rows = sweep::run(&file, var, &grid)?;
            let mut bytes = Vec::new();
            crate::rows::write_csv(&rows, &mut bytes)?;
            emit(out.as_deref(), &bytes, stdout)
        }
        Command::Verify {
            scenario,
            instances,
            seed,
        } => {
            let file = scenario.load()?;
            let summary = verify::run(&file, VerifyOptions { instances, seed }, allow)?;
            emit(None, summary.render().as_bytes(), stdout)?;
            if summary.passed() {
                Ok(())
            } else {
                let seeds: Vec<String> = summary
                    .oracle_failures
                    .iter()
                    .map(|f| f.seed)
                    .chain(summary.arbitrage_failures.iter().map(|f| f.seed))
                    .map(|s| s.to_string())
                    .collect();
                Err(CliError::Verification(if seeds.is_empty() {
                    format!("arbitrage counterexample found (search seed {seed})")
                } else {
                    format!("failing seeds: {}", seeds.join(", "))
                }))
            }
        }
    }
}
