//! Monte Carlo backtest of the discrete variance-optimal feedback strategy
//! against a Black-Scholes delta hedge on common simulated paths.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::fs::{build_tables, FsTables, TableOptions};
use crate::model::{AdditiveModel, TimeGrid};
use crate::payoff::{choose_abscissa, ContourMeasure, PayoffKind};

fn std_normal_cdf(x: f64) -> f64 {
    Normal::new(0.0, 1.0).expect("unit normal").cdf(x)
}

/// Zero-rate Black-Scholes price with total variance `σ²τ`.
pub fn bs_price(kind: PayoffKind, s: f64, strike: f64, sigma: f64, tau: f64) -> f64 {
    let sd = sigma * tau.sqrt();
    if !(sd > 0.0) {
        return kind.payoff(strike, s);
    }
    let d1 = ((s / strike).ln() + 0.5 * sd * sd) / sd;
    let d2 = d1 - sd;
    let call = s * std_normal_cdf(d1) - strike * std_normal_cdf(d2);
    match kind {
        PayoffKind::Call => call,
        PayoffKind::Put => call - s + strike,
    }
}

pub fn bs_delta(kind: PayoffKind, s: f64, strike: f64, sigma: f64, tau: f64) -> f64 {
    let sd = sigma * tau.sqrt();
    let call = if sd > 0.0 {
        std_normal_cdf(((s / strike).ln() + 0.5 * sd * sd) / sd)
    } else if s > strike {
        1.0
    } else {
        0.0
    };
    match kind {
        PayoffKind::Call => call,
        PayoffKind::Put => call - 1.0,
    }
}

/// Volatility whose log-normal model matches `Var(log S_T)`.
pub fn bs_volatility(model: &AdditiveModel) -> f64 {
    (model.log_variance(model.horizon) / model.horizon).sqrt()
}

/// Positions held over each rebalance interval and the portfolio values
/// `V_{t_i} = V₀ + Σ_{k<i} φ_k (S_{t_{k+1}} − S_{t_k})`.
#[derive(Debug, Clone, PartialEq)]
pub struct HedgeTrajectory {
    pub positions: Vec<f64>,
    pub values: Vec<f64>,
    /// `V_T − f(S_T)`.
    pub error: f64,
}

fn run_gains<F: FnMut(usize, f64, f64) -> f64>(capital: f64, path: &[f64], payoff: f64, mut position: F) -> HedgeTrajectory {
    let n = path.len() - 1;
    let mut positions = Vec::with_capacity(n);
    let mut values = Vec::with_capacity(n + 1);
    let mut value = capital;
    values.push(value);
    for i in 0..n {
        let phi = position(i, path[i], value - capital);
        value += phi * (path[i + 1] - path[i]);
        positions.push(phi);
        values.push(value);
    }
    HedgeTrajectory {
        positions,
        values,
        error: value - payoff,
    }
}

/// `φ_i = ξ_{t_i}(S_i) + λ_{t_i}/S_i·(H_{t_i}(S_i) − V₀ − G_i)` with
/// `V₀ = H₀(s0)`.
pub fn vo_hedge_trajectory(tables: &FsTables, path: &[f64]) -> HedgeTrajectory {
    assert_eq!(path.len(), tables.dates(), "path and tables must share the rebalance grid");
    let capital = tables.initial_capital();
    let payoff = tables.payoff(path[path.len() - 1]);
    run_gains(capital, path, payoff, |i, s, gains| {
        let state = tables.claim_state(i, s);
        state.hedge + tables.lambda[i] / s * (state.value - capital - gains)
    })
}

pub fn vo_hedge_path(tables: &FsTables, path: &[f64]) -> f64 {
    vo_hedge_trajectory(tables, path).error
}

/// Black-Scholes comparator: capital is the Black-Scholes price, the
/// position is the Black-Scholes delta at the remaining variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BsHedger {
    pub kind: PayoffKind,
    pub strike: f64,
    pub sigma: f64,
    pub horizon: f64,
}

impl BsHedger {
    pub fn capital(&self, s0: f64) -> f64 {
        bs_price(self.kind, s0, self.strike, self.sigma, self.horizon)
    }

    pub fn delta(&self, s: f64, t: f64) -> f64 {
        bs_delta(self.kind, s, self.strike, self.sigma, self.horizon - t)
    }

    pub fn trajectory(&self, knots: &[f64], path: &[f64]) -> HedgeTrajectory {
        let payoff = self.kind.payoff(self.strike, path[path.len() - 1]);
        run_gains(self.capital(path[0]), path, payoff, |i, s, _| self.delta(s, knots[i]))
    }
}

pub fn bs_hedge_path(hedger: &BsHedger, knots: &[f64], path: &[f64]) -> f64 {
    hedger.trajectory(knots, path).error
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    VarianceOptimal,
    BlackScholes,
}

impl Strategy {
    pub fn label(self) -> &'static str {
        match self {
            Strategy::VarianceOptimal => "VO",
            Strategy::BlackScholes => "BS",
        }
    }
}

#[derive(Debug, Clone)]
pub struct HedgeExperiment {
    pub model: AdditiveModel,
    pub payoff: ContourMeasure,
    pub rebalances: usize,
    pub refinement: usize,
    pub paths: usize,
    pub seed: u64,
    pub strategies: Vec<Strategy>,
    pub keep_errors: bool,
    pub tables: TableOptions,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategyResult {
    pub strategy: Strategy,
    pub capital: f64,
    /// Mean of `V_T − f(S_T)`.
    pub bias: f64,
    pub std: f64,
    /// Standard error of the bias.
    pub stderr: f64,
    pub errors: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HedgeResult {
    pub rebalances: usize,
    pub paths: usize,
    pub strategies: Vec<StrategyResult>,
}

impl HedgeResult {
    pub fn get(&self, strategy: Strategy) -> Option<&StrategyResult> {
        self.strategies.iter().find(|r| r.strategy == strategy)
    }
}

/// Generator for path `index`: one ChaCha stream per path under the base
/// seed, so results do not depend on scheduling.
pub fn path_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn summarize(strategy: Strategy, capital: f64, errors: Vec<f64>, keep: bool) -> StrategyResult {
    let n = errors.len() as f64;
    let bias = errors.iter().sum::<f64>() / n;
    let var = if errors.len() > 1 {
        errors.iter().map(|e| (e - bias).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    StrategyResult {
        strategy,
        capital,
        bias,
        std: var.sqrt(),
        stderr: (var / n).sqrt(),
        errors: keep.then_some(errors),
    }
}

impl HedgeExperiment {
    pub fn validate(&self) -> Result<()> {
        if self.rebalances == 0 || self.refinement == 0 || self.paths == 0 {
            return Err(Error::Parameter(
                "rebalances, refinement and paths must all be positive".into(),
            ));
        }
        if self.strategies.contains(&Strategy::BlackScholes) && self.payoff.kind().is_none() {
            return Err(Error::Parameter(
                "the Black-Scholes comparator needs a call or put payoff".into(),
            ));
        }
        self.model.ensure_valid()
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::uniform(self.model.horizon, self.rebalances, self.refinement)
    }

    /// Build everything, then simulate every path once and feed the same
    /// path to each strategy.
    pub fn run(&self) -> Result<HedgeResult> {
        self.validate()?;
        let grid = self.grid()?;
        let tables = if self.strategies.contains(&Strategy::VarianceOptimal) {
            Some(build_tables(&self.model, &self.payoff, &grid, &self.tables)?)
        } else {
            None
        };
        let bs = self.payoff.kind().map(|(kind, strike)| BsHedger {
            kind,
            strike,
            sigma: bs_volatility(&self.model),
            horizon: self.model.horizon,
        });
        let knots = grid.knots();

        let per_path: Vec<Vec<f64>> = (0..self.paths)
            .into_par_iter()
            .map(|p| {
                let mut rng = path_rng(self.seed, p);
                let path = self.model.sample_path(&grid, &mut rng);
                self.strategies
                    .iter()
                    .map(|s| match s {
                        Strategy::VarianceOptimal => vo_hedge_path(tables.as_ref().unwrap(), &path),
                        Strategy::BlackScholes => bs_hedge_path(bs.as_ref().unwrap(), knots, &path),
                    })
                    .collect()
            })
            .collect();

        let strategies = self
            .strategies
            .iter()
            .enumerate()
            .map(|(k, &s)| {
                let errors: Vec<f64> = per_path.iter().map(|e| e[k]).collect();
                let capital = match s {
                    Strategy::VarianceOptimal => tables.as_ref().unwrap().initial_capital(),
                    Strategy::BlackScholes => bs.unwrap().capital(self.model.s0),
                };
                summarize(s, capital, errors, self.keep_errors)
            })
            .collect();
        Ok(HedgeResult {
            rebalances: self.rebalances,
            paths: self.paths,
            strategies,
        })
    }
}

pub fn run_experiment(exp: &HedgeExperiment) -> Result<HedgeResult> {
    exp.run()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub strike: f64,
    pub vo_capital: f64,
    pub bs_capital: f64,
    pub vo_delta: f64,
    pub bs_delta: f64,
}

/// Initial capital and initial hedge ratio of both strategies across strikes.
pub fn strike_sweep(
    model: &AdditiveModel,
    kind: PayoffKind,
    strikes: &[f64],
    abscissa: Option<f64>,
    options: &TableOptions,
) -> Result<Vec<SweepRow>> {
    model.ensure_valid()?;
    let r = choose_abscissa(kind, model, abscissa)?;
    let grid = TimeGrid::uniform(model.horizon, 1, 1)?;
    let sigma = bs_volatility(model);
    strikes
        .iter()
        .map(|&k| {
            let measure = ContourMeasure::vanilla(kind, k, r)?;
            let tables = build_tables(model, &measure, &grid, options)?;
            let state = tables.claim_state(0, model.s0);
            Ok(SweepRow {
                strike: k,
                vo_capital: state.value,
                bs_capital: bs_price(kind, model.s0, k, sigma, model.horizon),
                // no deficit yet, so φ₀ = ξ₀
                vo_delta: state.hedge,
                bs_delta: bs_delta(kind, model.s0, k, sigma, model.horizon),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy::LevyLaw;

    #[test]
    fn black_scholes_reference_values() {
        // s = K = 100, σ√τ = 0.2: price = 100·(2N(0.1) − 1)
        let p = bs_price(PayoffKind::Call, 100.0, 100.0, 0.4, 0.25);
        assert!((p - 7.965567455405804).abs() < 1e-9);
        let put = bs_price(PayoffKind::Put, 100.0, 90.0, 0.4, 0.25);
        let call = bs_price(PayoffKind::Call, 100.0, 90.0, 0.4, 0.25);
        assert!((call - put - 10.0).abs() < 1e-12);
        let d = bs_delta(PayoffKind::Call, 100.0, 100.0, 0.4, 0.25);
        assert!((d - std_normal_cdf(0.1)).abs() < 1e-15);
        assert!((bs_delta(PayoffKind::Put, 100.0, 100.0, 0.4, 0.25) - d + 1.0).abs() < 1e-15);
    }

    #[test]
    fn delta_hedge_sums_gains() {
        let h = BsHedger {
            kind: PayoffKind::Call,
            strike: 100.0,
            sigma: 0.3,
            horizon: 1.0,
        };
        let knots = [0.0, 0.5, 1.0];
        let path = [100.0, 110.0, 105.0];
        let tr = h.trajectory(&knots, &path);
        let v1 = tr.values[0] + tr.positions[0] * 10.0;
        assert_eq!(tr.values[1], v1);
        assert_eq!(tr.values[2], v1 + tr.positions[1] * -5.0);
        assert_eq!(tr.error, tr.values[2] - 5.0);
    }

    #[test]
    fn experiment_is_reproducible() {
        let law = LevyLaw::nig(38.46, -3.85, 6.40, 0.64).unwrap().rescale_tails(0.2).unwrap();
        let exp = HedgeExperiment {
            model: AdditiveModel::levy(law, 0.25, 100.0),
            payoff: ContourMeasure::call(99.0, 0.5).unwrap(),
            rebalances: 4,
            refinement: 1,
            paths: 64,
            seed: 7,
            strategies: vec![Strategy::VarianceOptimal, Strategy::BlackScholes],
            keep_errors: true,
            tables: TableOptions::default(),
        };
        let a = exp.run().unwrap();
        let b = exp.run().unwrap();
        assert_eq!(a, b);
        let other = HedgeExperiment { seed: 8, ..exp.clone() }.run().unwrap();
        assert_ne!(a, other);
    }
}
