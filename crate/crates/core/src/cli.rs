use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::config::{RunConfig, Scenario};
use crate::error::{Error, Result};
use crate::error_variance::{hedging_error_variance, ErrorOptions};
use crate::fs::{build_tables, TableOptions};
use crate::hedge::{strike_sweep, HedgeExperiment, Strategy};
use crate::model::TimeGrid;
use crate::payoff::{check_admissible, choose_abscissa};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Parser)]
#[command(name = "fshedge", version, about = "Variance-optimal hedging for exponential additive models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Run configuration (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Overrides `experiment.seed`.
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Output file; overrides `output.path`, stdout when neither is set.
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Contour truncation tolerance relative to the strike for `price` and
    /// `simulate`, relative cutoff tolerance of J₀ for `error`.
    #[arg(long, global = true, value_name = "FLOAT")]
    pub tol: Option<f64>,
    /// Worker threads; all cores by default.
    #[arg(long, global = true, value_name = "INT")]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Check the model assumptions and the payoff abscissa.
    Validate,
    /// Initial capital and hedge ratio of both strategies per strike.
    Price {
        /// Also dump the γ and η-tail tables of the first scenario and strike.
        #[arg(long, value_name = "PATH")]
        tables: Option<PathBuf>,
    },
    /// Closed-form variance of the variance-optimal hedging error.
    Error,
    /// Monte Carlo backtest of both strategies.
    Simulate,
    /// NIG parameters and excess kurtosis per tail factor.
    KurtosisTable,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub tol: Option<f64>,
}

impl Overrides {
    fn apply(&self, config: &mut RunConfig) -> Result<()> {
        if let Some(seed) = self.seed {
            config.experiment.seed = seed;
        }
        if let Some(tol) = self.tol {
            if !(tol > 0.0 && tol < 1.0) {
                return Err(Error::Config(format!("--tol must lie in (0, 1), got {tol}")));
            }
        }
        Ok(())
    }

    fn table_options(&self) -> TableOptions {
        let mut options = TableOptions::default();
        if let Some(tol) = self.tol {
            options.discretize.tol = tol;
        }
        options
    }

    fn error_options(&self) -> ErrorOptions {
        let mut options = ErrorOptions::default();
        if let Some(tol) = self.tol {
            options.rel_tol = tol;
        }
        options
    }
}

/// Process exit status for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Parameter(_) => 2,
        Error::OutOfDomain { .. }
        | Error::Degenerate(_)
        | Error::StructureCondition(_)
        | Error::Admissibility(_) => 3,
        Error::Quadrature(_) | Error::Numerical(_) => 4,
    }
}

fn io_error(e: io::Error) -> Error {
    Error::Config(format!("cannot write output: {e}"))
}

fn csv_error(e: csv::Error) -> Error {
    Error::Config(format!("cannot write output: {e}"))
}

struct Table<'a> {
    writer: csv::Writer<&'a mut dyn Write>,
    precision: usize,
}

impl<'a> Table<'a> {
    fn new(out: &'a mut dyn Write, name: &str, columns: &[&str], precision: usize) -> Result<Self> {
        writeln!(out, "# fshedge {name} v{SCHEMA_VERSION}: {}", columns.join(",")).map_err(io_error)?;
        let mut writer = csv::Writer::from_writer(out);
        writer.write_record(columns).map_err(csv_error)?;
        Ok(Self { writer, precision })
    }

    fn num(&self, x: f64) -> String {
        format!("{:.*}", self.precision, x)
    }

    fn row(&mut self, fields: &[String]) -> Result<()> {
        self.writer.write_record(fields).map_err(csv_error)
    }

    fn finish(mut self) -> Result<()> {
        self.writer.flush().map_err(io_error)
    }
}

fn tail_label(s: &Scenario) -> String {
    s.tail_factor.map(|c| c.to_string()).unwrap_or_default()
}

fn scenario_abscissa(config: &RunConfig, s: &Scenario) -> Result<f64> {
    choose_abscissa(config.payoff.kind, &s.model, config.payoff.abscissa)
}

/// Prints one line per assumption; `Ok(false)` when any necessary one fails.
pub fn cmd_validate(config: &RunConfig, out: &mut dyn Write) -> Result<bool> {
    let mut ok = true;
    for s in config.scenarios()? {
        if let Some(c) = s.tail_factor {
            writeln!(out, "[C = {c}]").map_err(io_error)?;
        }
        let report = s.model.validate();
        for check in &report.checks {
            let status = match (check.passed, check.sufficient_only) {
                (true, _) => "PASS",
                (false, true) => "WARN",
                (false, false) => "FAIL",
            };
            writeln!(out, "{status} {}: {}", check.name, check.detail).map_err(io_error)?;
        }
        ok &= report.passed();
        if !report.passed() {
            continue;
        }
        let payoff = scenario_abscissa(config, &s).and_then(|r| {
            config
                .strikes()
                .iter()
                .try_for_each(|&k| check_admissible(&config.measure(k, r)?, &s.model))
                .map(|_| r)
        });
        match payoff {
            Ok(r) => writeln!(out, "PASS payoff abscissa: R = {r}"),
            Err(e) => {
                ok = false;
                writeln!(out, "FAIL payoff abscissa: {e}")
            }
        }
        .map_err(io_error)?;
    }
    Ok(ok)
}

pub fn cmd_price(
    config: &RunConfig,
    overrides: &Overrides,
    out: &mut dyn Write,
    tables: Option<&mut dyn Write>,
) -> Result<()> {
    let options = overrides.table_options();
    let scenarios = config.scenarios()?;
    if let Some(dump) = tables {
        let s = &scenarios[0];
        let r = scenario_abscissa(config, s)?;
        let measure = config.measure(config.strikes()[0], r)?;
        let grid = TimeGrid::uniform(s.model.horizon, config.experiment.rebalances[0], config.experiment.refinement)?;
        build_tables(&s.model, &measure, &grid, &options)?.write_csv(dump)?;
    }
    let mut table = Table::new(
        out,
        "price",
        &["C", "K", "V0_VO", "V0_BS", "delta_VO", "delta_BS"],
        config.output.precision,
    )?;
    for s in &scenarios {
        let r = scenario_abscissa(config, s)?;
        for row in strike_sweep(&s.model, config.payoff.kind, &config.strikes(), Some(r), &options)? {
            let fields = vec![
                tail_label(s),
                row.strike.to_string(),
                table.num(row.vo_capital),
                table.num(row.bs_capital),
                table.num(row.vo_delta),
                table.num(row.bs_delta),
            ];
            table.row(&fields)?;
        }
    }
    table.finish()
}

pub fn cmd_error(config: &RunConfig, overrides: &Overrides, out: &mut dyn Write) -> Result<()> {
    let options = overrides.error_options();
    let mut table = Table::new(
        out,
        "error",
        &["C", "K", "J0", "sqrt_J0", "cutoff", "last_change", "settled"],
        config.output.precision,
    )?;
    for s in &config.scenarios()? {
        let r = scenario_abscissa(config, s)?;
        for k in config.strikes() {
            let ev = hedging_error_variance(&s.model, &config.measure(k, r)?, &options)?;
            let fields = vec![
                tail_label(s),
                k.to_string(),
                table.num(ev.value),
                table.num(ev.std()),
                ev.cutoff.to_string(),
                format!("{:.3e}", ev.last_change),
                ev.settled.to_string(),
            ];
            table.row(&fields)?;
        }
    }
    table.finish()
}

pub fn cmd_simulate(config: &RunConfig, overrides: &Overrides, out: &mut dyn Write) -> Result<()> {
    let e = &config.experiment;
    let mut table = Table::new(
        out,
        "simulate",
        &["strategy", "N", "K", "C", "bias", "std", "stderr", "V0"],
        config.output.precision,
    )?;
    for s in &config.scenarios()? {
        let r = scenario_abscissa(config, s)?;
        for k in config.strikes() {
            for &n in &e.rebalances {
                let result = HedgeExperiment {
                    model: s.model.clone(),
                    payoff: config.measure(k, r)?,
                    rebalances: n,
                    refinement: e.refinement,
                    paths: e.paths,
                    seed: e.seed,
                    strategies: vec![Strategy::VarianceOptimal, Strategy::BlackScholes],
                    keep_errors: false,
                    tables: overrides.table_options(),
                }
                .run()?;
                for sr in &result.strategies {
                    let fields = vec![
                        sr.strategy.label().to_string(),
                        n.to_string(),
                        k.to_string(),
                        tail_label(s),
                        table.num(sr.bias),
                        table.num(sr.std),
                        table.num(sr.stderr),
                        table.num(sr.capital),
                    ];
                    table.row(&fields)?;
                }
            }
        }
    }
    table.finish()
}

pub fn cmd_kurtosis_table(config: &RunConfig, out: &mut dyn Write) -> Result<()> {
    if config.experiment.tail_factors.is_empty() {
        return Err(Error::Config(
            "experiment.tail_factors: kurtosis-table needs at least one tail factor".into(),
        ));
    }
    let mut table = Table::new(
        out,
        "kurtosis-table",
        &["C", "alpha", "beta", "delta", "mu", "excess_kurtosis"],
        config.output.precision,
    )?;
    for s in &config.scenarios()? {
        let law = s.model.driver.as_ref().expect("tail factors imply a driver");
        let crate::levy::LevyLaw::Nig { alpha, beta, delta, mu } = *law else {
            unreachable!("tail factors imply an NIG driver")
        };
        let fields = vec![
            tail_label(s),
            table.num(alpha),
            table.num(beta),
            table.num(delta),
            table.num(mu),
            table.num(law.moments().excess_kurtosis),
        ];
        table.row(&fields)?;
    }
    table.finish()
}

fn open(path: &PathBuf) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::Config(format!("cannot create {}: {e}", path.display())))
}

/// Runs the parsed command line; returns the process exit status.
pub fn run(cli: &Cli) -> Result<i32> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(Error::Config("--threads must be positive".into()));
        }
        // fails only if the pool was already built, e.g. from a second call
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config PATH is required".into()))?;
    let mut config = RunConfig::load(path)?;
    let overrides = Overrides {
        seed: cli.seed,
        tol: cli.tol,
    };
    overrides.apply(&mut config)?;

    let target = cli.out.clone().or_else(|| config.output.path.clone());
    let stdout = io::stdout();
    let mut out: Box<dyn Write> = match &target {
        Some(p) => Box::new(open(p)?),
        None => Box::new(stdout.lock()),
    };
    let code = match &cli.command {
        Command::Validate => {
            if cmd_validate(&config, &mut out)? {
                0
            } else {
                3
            }
        }
        Command::Price { tables } => {
            let mut dump = tables.as_ref().map(open).transpose()?;
            cmd_price(&config, &overrides, &mut out, dump.as_mut().map(|w| w as &mut dyn Write))?;
            if let Some(mut w) = dump {
                w.flush().map_err(io_error)?;
            }
            0
        }
        Command::Error => {
            cmd_error(&config, &overrides, &mut out)?;
            0
        }
        Command::Simulate => {
            cmd_simulate(&config, &overrides, &mut out)?;
            0
        }
        Command::KurtosisTable => {
            cmd_kurtosis_table(&config, &mut out)?;
            0
        }
    };
    out.flush().map_err(io_error)?;
    Ok(code)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(extra: &str) -> RunConfig {
        let text = format!(
            r#"
[model]
horizon = 0.25
s0 = 100
driver = {{ law = "nig", alpha = 38.46, beta = -3.85, delta = 6.40, mu = 0.64 }}

[payoff]
kind = "call"
strike = 99
{extra}
"#
        );
        RunConfig::parse(&text).unwrap()
    }

    #[test]
    fn exit_codes_follow_error_class() {
        assert_eq!(exit_code(&Error::Config("x".into())), 2);
        assert_eq!(exit_code(&Error::StructureCondition("x".into())), 3);
        assert_eq!(exit_code(&Error::Numerical("x".into())), 4);
    }

    #[test]
    fn kurtosis_table_rows() {
        let c = config("[experiment]\ntail_factors = [0.08, 1]\n[output]\nprecision = 4");
        let mut buf = Vec::new();
        cmd_kurtosis_table(&c, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("# fshedge kurtosis-table v1"));
        assert_eq!(lines[1], "C,alpha,beta,delta,mu,excess_kurtosis");
        assert!(lines[2].starts_with("0.08,3.0768,"), "{}", lines[2]);
        assert!(lines[3].starts_with("1,38.4600,-3.8500,6.4000,0.6400,"), "{}", lines[3]);
    }

    #[test]
    fn validate_reports_each_assumption() {
        let mut buf = Vec::new();
        assert!(cmd_validate(&config(""), &mut buf).unwrap());
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("PASS 2 ∈ D"), "{text}");
        assert!(text.contains("PASS payoff abscissa: R = 0.5"), "{text}");
    }
}
