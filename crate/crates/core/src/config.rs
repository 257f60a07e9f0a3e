use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::levy::LevyLaw;
use crate::model::{AdditiveModel, Loading, PiecewiseLinear};
use crate::payoff::{ContourMeasure, PayoffKind};

/// Declarative run description, read from TOML.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub payoff: PayoffConfig,
    #[serde(default)]
    pub experiment: ExperimentConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub horizon: f64,
    pub s0: f64,
    /// Absent for a pure Gaussian model.
    pub driver: Option<DriverConfig>,
    #[serde(default)]
    pub loading: LoadingConfig,
    #[serde(default)]
    pub sigma_long: f64,
    /// `(t, m(t))` knots of the deterministic trend.
    #[serde(default)]
    pub trend: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "law", rename_all = "lowercase", deny_unknown_fields)]
pub enum DriverConfig {
    Nig { alpha: f64, beta: f64, delta: f64, mu: f64 },
    Vg { alpha: f64, beta: f64, delta: f64, mu: f64 },
    Poisson { intensity: f64 },
    Brownian { drift: f64, sigma: f64 },
}

impl DriverConfig {
    pub fn law(&self) -> Result<LevyLaw> {
        match *self {
            DriverConfig::Nig { alpha, beta, delta, mu } => LevyLaw::nig(alpha, beta, delta, mu),
            DriverConfig::Vg { alpha, beta, delta, mu } => LevyLaw::vg(alpha, beta, delta, mu),
            DriverConfig::Poisson { intensity } => LevyLaw::poisson(intensity),
            DriverConfig::Brownian { drift, sigma } => LevyLaw::brownian(drift, sigma),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LoadingConfig {
    Constant { value: f64 },
    Exponential { sigma_s: f64, mean_reversion: f64, delivery: f64 },
    /// Clock `ψ` given by `(t, ψ(t))` knots.
    TimeChange { psi: Vec<(f64, f64)> },
}

impl Default for LoadingConfig {
    fn default() -> Self {
        LoadingConfig::Constant { value: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PayoffConfig {
    pub kind: PayoffKind,
    pub strike: f64,
    pub abscissa: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_rebalances")]
    pub rebalances: Vec<usize>,
    #[serde(default = "default_refinement")]
    pub refinement: usize,
    #[serde(default = "default_paths")]
    pub paths: usize,
    #[serde(default)]
    pub seed: u64,
    /// Strikes to sweep; the payoff strike when empty.
    #[serde(default)]
    pub strikes: Vec<f64>,
    /// NIG tail factors `C`; the driver is used as given when empty.
    #[serde(default)]
    pub tail_factors: Vec<f64>,
}

fn default_rebalances() -> Vec<usize> {
    vec![12]
}

fn default_refinement() -> usize {
    16
}

fn default_paths() -> usize {
    5000
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            rebalances: default_rebalances(),
            refinement: default_refinement(),
            paths: default_paths(),
            seed: 0,
            strikes: Vec::new(),
            tail_factors: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub path: Option<PathBuf>,
    /// Digits after the decimal point in CSV output.
    #[serde(default = "default_precision")]
    pub precision: usize,
}

fn default_precision() -> usize {
    6
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            path: None,
            precision: default_precision(),
        }
    }
}

/// One model instance of the run together with its tail factor, if any.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub tail_factor: Option<f64>,
    pub model: AdditiveModel,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let config: RunConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string().trim_end().to_string()))?;
        config.check()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    fn check(&self) -> Result<()> {
        let field = |name: &str, msg: String| Err(Error::Config(format!("{name}: {msg}")));
        let e = &self.experiment;
        if e.rebalances.is_empty() || e.rebalances.contains(&0) {
            return field("experiment.rebalances", "must be a nonempty list of positive integers".into());
        }
        if e.refinement == 0 {
            return field("experiment.refinement", "must be positive".into());
        }
        if e.paths < 2 {
            return field("experiment.paths", format!("need at least 2, got {}", e.paths));
        }
        if let Some(k) = e.strikes.iter().find(|k| !(**k > 0.0 && k.is_finite())) {
            return field("experiment.strikes", format!("strikes must be positive, got {k}"));
        }
        if !e.tail_factors.is_empty() && !matches!(self.model.driver, Some(DriverConfig::Nig { .. })) {
            return field("experiment.tail_factors", "tail factors require an NIG driver".into());
        }
        if self.output.precision > 17 {
            return field("output.precision", format!("at most 17 digits, got {}", self.output.precision));
        }
        Ok(())
    }

    /// The model exactly as configured.
    pub fn base_model(&self) -> Result<AdditiveModel> {
        let m = &self.model;
        let driver = m.driver.as_ref().map(DriverConfig::law).transpose()?;
        let loading = match &m.loading {
            LoadingConfig::Constant { value } => Loading::Constant(*value),
            LoadingConfig::Exponential {
                sigma_s,
                mean_reversion,
                delivery,
            } => Loading::ExponentialDecay {
                sigma_s: *sigma_s,
                mean_reversion: *mean_reversion,
                delivery: *delivery,
            },
            LoadingConfig::TimeChange { psi } => Loading::TimeChange(PiecewiseLinear::new(psi.clone())?),
        };
        if driver.is_none() && !matches!(loading, Loading::Constant(_)) {
            return Err(Error::Config("model.loading: a loading requires model.driver".into()));
        }
        let trend = if m.trend.is_empty() {
            PiecewiseLinear::zero()
        } else {
            PiecewiseLinear::new(m.trend.clone())?
        };
        Ok(AdditiveModel {
            driver,
            loading,
            sigma_long: m.sigma_long,
            trend,
            horizon: m.horizon,
            s0: m.s0,
        })
    }

    /// One scenario per tail factor, or the base model alone.
    pub fn scenarios(&self) -> Result<Vec<Scenario>> {
        let base = self.base_model()?;
        if self.experiment.tail_factors.is_empty() {
            return Ok(vec![Scenario {
                tail_factor: None,
                model: base,
            }]);
        }
        let law = base.driver.expect("checked in parse");
        self.experiment
            .tail_factors
            .iter()
            .map(|&c| {
                let mut model = base.clone();
                model.driver = Some(law.rescale_tails(c)?);
                Ok(Scenario {
                    tail_factor: Some(c),
                    model,
                })
            })
            .collect()
    }

    pub fn strikes(&self) -> Vec<f64> {
        if self.experiment.strikes.is_empty() {
            vec![self.payoff.strike]
        } else {
            self.experiment.strikes.clone()
        }
    }

    pub fn measure(&self, strike: f64, abscissa: f64) -> Result<ContourMeasure> {
        ContourMeasure::vanilla(self.payoff.kind, strike, abscissa)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const NIG: &str = r#"
[model]
horizon = 0.25
s0 = 100
driver = { law = "nig", alpha = 38.46, beta = -3.85, delta = 6.40, mu = 0.64 }

[payoff]
kind = "call"
strike = 99

[experiment]
rebalances = [4, 12, 64]
tail_factors = [0.08, 2e0]
"#;

    #[test]
    fn parses_levy_config_with_defaults() {
        let c = RunConfig::parse(NIG).unwrap();
        assert_eq!(c.experiment.refinement, 16);
        assert_eq!(c.experiment.paths, 5000);
        assert_eq!(c.output.precision, 6);
        assert_eq!(c.strikes(), vec![99.0]);
        let s = c.scenarios().unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[1].tail_factor, Some(2.0));
        assert!(s[0].model.is_stationary());
    }

    #[test]
    fn parses_two_factor_loading() {
        let text = r#"
[model]
horizon = 0.25
s0 = 100
driver = { law = "nig", alpha = 15.81, beta = -1.581, delta = 15.57, mu = 1.56 }
loading = { kind = "exponential", sigma_s = 0.5747, mean_reversion = 3, delivery = 0.25 }

[payoff]
kind = "put"
strike = 1.2e2
abscissa = -1.5
"#;
        let c = RunConfig::parse(text).unwrap();
        let m = c.base_model().unwrap();
        assert!(!m.is_stationary());
        assert!(m.validate().passed());
        assert_eq!(c.payoff.kind, PayoffKind::Put);
        assert_eq!(c.payoff.abscissa, Some(-1.5));
    }

    #[test]
    fn diagnostics_name_the_field() {
        let bad = NIG.replace("strike = 99", "strike = 99\nstrikes = 3");
        let err = RunConfig::parse(&bad).unwrap_err().to_string();
        assert!(err.contains("strikes"), "{err}");
        assert!(err.contains("line"), "{err}");

        let bad = NIG.replace("rebalances = [4, 12, 64]", "rebalances = [4, 0]");
        let err = RunConfig::parse(&bad).unwrap_err().to_string();
        assert!(err.contains("experiment.rebalances"), "{err}");

        let bad = NIG.replace("law = \"nig\"", "law = \"cauchy\"");
        assert!(matches!(RunConfig::parse(&bad), Err(Error::Config(_))));
    }

    #[test]
    fn tail_factors_need_nig() {
        let bad = NIG.replace(
            "driver = { law = \"nig\", alpha = 38.46, beta = -3.85, delta = 6.40, mu = 0.64 }",
            "driver = { law = \"poisson\", intensity = 2 }",
        );
        let err = RunConfig::parse(&bad).unwrap_err().to_string();
        assert!(err.contains("tail_factors"), "{err}");
    }
}
