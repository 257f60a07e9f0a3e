//! Additive log-price models `X_t = m_t + ∫_0^t l_s dΛ_s + σ_l W_t` and the
//! time densities everything downstream is built from.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::levy::{DomainStrip, LevyLaw};
use crate::quadrature::{cumulative_trapezoid, integrate_adaptive};

/// Relative tolerance for the adaptive time integrals of `κ^Λ(z l_s)`.
pub const KAPPA_TOL: f64 = 1e-10;

/// Continuous piecewise-linear function given by knots `(t, value)`,
/// extended linearly beyond the outer knots.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinear {
    knots: Vec<(f64, f64)>,
}

impl PiecewiseLinear {
    pub fn new(mut knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.is_empty() {
            return Err(Error::Parameter("piecewise-linear function needs a knot".into()));
        }
        if knots.iter().any(|(t, v)| !t.is_finite() || !v.is_finite()) {
            return Err(Error::Parameter("piecewise-linear knots must be finite".into()));
        }
        knots.sort_by(|a, b| a.0.total_cmp(&b.0));
        if knots.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::Parameter("duplicate knot time".into()));
        }
        Ok(Self { knots })
    }

    pub fn zero() -> Self {
        Self {
            knots: vec![(0.0, 0.0)],
        }
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    fn segment(&self, t: f64) -> usize {
        // index k of the segment [t_k, t_{k+1}) holding t, clamped to the ends
        let n = self.knots.len();
        if n < 2 {
            return 0;
        }
        match self.knots.partition_point(|&(tk, _)| tk <= t) {
            0 => 0,
            p if p >= n => n - 2,
            p => p - 1,
        }
    }

    pub fn slope(&self, t: f64) -> f64 {
        if self.knots.len() < 2 {
            return 0.0;
        }
        let k = self.segment(t);
        let (t0, v0) = self.knots[k];
        let (t1, v1) = self.knots[k + 1];
        (v1 - v0) / (t1 - t0)
    }

    pub fn value(&self, t: f64) -> f64 {
        if self.knots.len() < 2 {
            return self.knots[0].1;
        }
        let k = self.segment(t);
        let (t0, v0) = self.knots[k];
        v0 + self.slope(t) * (t - t0)
    }

    /// Interior knot times strictly inside `(a, b)`.
    pub fn breakpoints(&self, a: f64, b: f64) -> impl Iterator<Item = f64> + '_ {
        self.knots
            .iter()
            .map(|k| k.0)
            .filter(move |&t| t > a && t < b)
    }

    pub fn is_affine(&self) -> bool {
        if self.knots.len() < 3 {
            return true;
        }
        let s0 = (self.knots[1].1 - self.knots[0].1) / (self.knots[1].0 - self.knots[0].0);
        self.knots.windows(2).all(|w| {
            let s = (w[1].1 - w[0].1) / (w[1].0 - w[0].0);
            (s - s0).abs() <= 1e-14 * s0.abs().max(1.0)
        })
    }
}

/// Deterministic multiplier `l_t` applied to the Lévy driver.
#[derive(Debug, Clone, PartialEq)]
pub enum Loading {
    Constant(f64),
    /// `σ_s·e^{−λ(T_d − t)}`: Samuelson-type volatility growth towards delivery.
    ExponentialDecay {
        sigma_s: f64,
        mean_reversion: f64,
        delivery: f64,
    },
    /// `√ψ'(t)` for a strictly increasing piecewise-linear clock `ψ`; with a
    /// standard Brownian driver this gives `X_t = W_{ψ(t)}` in law.
    TimeChange(PiecewiseLinear),
}

impl Loading {
    #[inline]
    pub fn at(&self, t: f64) -> f64 {
        match self {
            Loading::Constant(c) => *c,
            Loading::ExponentialDecay {
                sigma_s,
                mean_reversion,
                delivery,
            } => sigma_s * (-mean_reversion * (delivery - t)).exp(),
            Loading::TimeChange(psi) => psi.slope(t).max(0.0).sqrt(),
        }
    }

    /// `(inf, sup)` of the loading over `[0, horizon]`.
    pub fn bounds(&self, horizon: f64) -> (f64, f64) {
        match self {
            Loading::Constant(c) => (*c, *c),
            Loading::ExponentialDecay { .. } => {
                let (a, b) = (self.at(0.0), self.at(horizon));
                (a.min(b), a.max(b))
            }
            Loading::TimeChange(psi) => {
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                let mut probe = vec![0.0];
                probe.extend(psi.breakpoints(0.0, horizon));
                for t in probe {
                    let v = self.at(t);
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
                (lo, hi)
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        match self {
            Loading::Constant(_) => true,
            Loading::ExponentialDecay { mean_reversion, .. } => *mean_reversion == 0.0,
            Loading::TimeChange(psi) => psi.is_affine(),
        }
    }

    /// Times where the loading is not smooth.
    fn breakpoints(&self, a: f64, b: f64) -> Vec<f64> {
        match self {
            Loading::TimeChange(psi) => psi.breakpoints(a, b).collect(),
            _ => Vec::new(),
        }
    }
}

/// Rebalance knots `0 = t_0 < … < t_N = T` plus `M` sub-steps per interval
/// for time integrals and path sub-stepping.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    knots: Vec<f64>,
    refinement: usize,
}

impl TimeGrid {
    pub fn new(knots: Vec<f64>, refinement: usize) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::Parameter("time grid needs at least one interval".into()));
        }
        if knots[0] != 0.0 {
            return Err(Error::Parameter("time grid must start at 0".into()));
        }
        if knots.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Parameter("time grid knots must be strictly increasing".into()));
        }
        if refinement == 0 {
            return Err(Error::Parameter("refinement must be at least 1".into()));
        }
        Ok(Self { knots, refinement })
    }

    pub fn uniform(horizon: f64, intervals: usize, refinement: usize) -> Result<Self> {
        if !(horizon > 0.0) || intervals == 0 {
            return Err(Error::Parameter(format!(
                "uniform grid needs horizon > 0 and N >= 1, got ({horizon}, {intervals})"
            )));
        }
        let knots = (0..=intervals)
            .map(|i| {
                if i == intervals {
                    horizon
                } else {
                    horizon * i as f64 / intervals as f64
                }
            })
            .collect();
        Self::new(knots, refinement)
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn intervals(&self) -> usize {
        self.knots.len() - 1
    }

    pub fn refinement(&self) -> usize {
        self.refinement
    }

    pub fn horizon(&self) -> f64 {
        *self.knots.last().unwrap()
    }

    /// `N·M + 1` points; knot `i` sits at index `i·M`.
    pub fn refined(&self) -> Vec<f64> {
        let m = self.refinement;
        let mut out = Vec::with_capacity(self.intervals() * m + 1);
        for w in self.knots.windows(2) {
            let h = (w[1] - w[0]) / m as f64;
            out.extend((0..m).map(|k| w[0] + h * k as f64));
        }
        out.push(self.horizon());
        out
    }
}

/// Result of one assumption check.
#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionCheck {
    pub name: String,
    pub passed: bool,
    /// Sufficient-only conditions are informative and never fail a model.
    pub sufficient_only: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub checks: Vec<AssumptionCheck>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed || c.sufficient_only)
    }

    pub fn failures(&self) -> impl Iterator<Item = &AssumptionCheck> {
        self.checks.iter().filter(|c| !c.passed && !c.sufficient_only)
    }

    fn push(&mut self, name: &str, passed: bool, detail: String) {
        self.checks.push(AssumptionCheck {
            name: name.to_string(),
            passed,
            sufficient_only: false,
            detail,
        });
    }
}

/// `S_t = s0·exp(m_t + ∫_0^t l_s dΛ_s + σ_l W_t)` with independent `Λ`, `W`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdditiveModel {
    pub driver: Option<LevyLaw>,
    pub loading: Loading,
    pub sigma_long: f64,
    pub trend: PiecewiseLinear,
    pub horizon: f64,
    pub s0: f64,
}

impl AdditiveModel {
    /// Exponential Lévy model `S = s0·e^{Λ}`.
    pub fn levy(driver: LevyLaw, horizon: f64, s0: f64) -> Self {
        Self {
            driver: Some(driver),
            loading: Loading::Constant(1.0),
            sigma_long: 0.0,
            trend: PiecewiseLinear::zero(),
            horizon,
            s0,
        }
    }

    /// Two-factor forward model with a short-term factor loaded by
    /// `σ_s·e^{−λ(T_d − t)}` and a Gaussian long-term factor.
    pub fn two_factor(
        driver: LevyLaw,
        sigma_s: f64,
        mean_reversion: f64,
        delivery: f64,
        sigma_long: f64,
        horizon: f64,
        s0: f64,
    ) -> Self {
        Self {
            driver: Some(driver),
            loading: Loading::ExponentialDecay {
                sigma_s,
                mean_reversion,
                delivery,
            },
            sigma_long,
            trend: PiecewiseLinear::zero(),
            horizon,
            s0,
        }
    }

    /// `X_t = W_{ψ(t)}` for a piecewise-linear clock `ψ` with `ψ(0) = 0`.
    pub fn time_changed_gaussian(psi: PiecewiseLinear, horizon: f64, s0: f64) -> Self {
        Self {
            driver: Some(LevyLaw::Brownian {
                drift: 0.0,
                sigma: 1.0,
            }),
            loading: Loading::TimeChange(psi),
            sigma_long: 0.0,
            trend: PiecewiseLinear::zero(),
            horizon,
            s0,
        }
    }

    /// Pure Gaussian model without a jump driver.
    pub fn gaussian(sigma: f64, horizon: f64, s0: f64) -> Self {
        Self {
            driver: None,
            loading: Loading::Constant(1.0),
            sigma_long: sigma,
            trend: PiecewiseLinear::zero(),
            horizon,
            s0,
        }
    }

    pub fn with_trend(mut self, trend: PiecewiseLinear) -> Self {
        self.trend = trend;
        self
    }

    pub fn loading_bounds(&self) -> (f64, f64) {
        self.loading.bounds(self.horizon)
    }

    /// All time densities are constant in t.
    pub fn is_stationary(&self) -> bool {
        self.trend.is_affine() && (self.driver.is_none() || self.loading.is_constant())
    }

    /// The strip of `z` for which `z·l_s` stays in the driver's domain for
    /// every `s ∈ [0, T]`.
    pub fn effective_domain(&self) -> DomainStrip {
        let Some(driver) = self.driver else {
            return DomainStrip::whole_plane();
        };
        let d = driver.domain();
        if d.is_whole_plane() {
            return d;
        }
        let (lo, hi) = self.loading_bounds();
        if !(lo > 0.0) {
            return DomainStrip::closed(0.0, 0.0);
        }
        // both ends of [lo, hi] must keep z·l inside the driver strip
        DomainStrip {
            lower: d.lower / lo,
            upper: d.upper / hi,
            lower_closed: d.lower_closed,
            upper_closed: d.upper_closed,
        }
    }

    pub fn check_domain(&self, z: Complex64) -> Result<()> {
        let strip = self.effective_domain();
        if strip.contains(z.re) {
            Ok(())
        } else {
            Err(Error::OutOfDomain { re: z.re, strip })
        }
    }

    /// `dκ_t(z)/dt` without domain checks.
    #[inline]
    pub fn kappa_density_unchecked(&self, z: Complex64, t: f64) -> Complex64 {
        let mut out = z * self.trend.slope(t) + z * z * (0.5 * self.sigma_long * self.sigma_long);
        if let Some(driver) = &self.driver {
            out += driver.kappa_unchecked(z * self.loading.at(t));
        }
        out
    }

    /// `dκ_t(z)/dt = z m'(t) + z²σ_l²/2 + κ^Λ(z l_t)`.
    pub fn kappa_density(&self, z: Complex64, t: f64) -> Result<Complex64> {
        self.check_domain(z)?;
        Ok(self.kappa_density_unchecked(z, t))
    }

    /// Real-argument density.
    #[inline]
    pub fn kappa_density_real(&self, x: f64, t: f64) -> f64 {
        let mut out = x * self.trend.slope(t) + 0.5 * x * x * self.sigma_long * self.sigma_long;
        if let Some(driver) = &self.driver {
            out += driver.kappa_real(x * self.loading.at(t));
        }
        out
    }

    /// `κ_t(z) = z m_t + z²σ_l² t/2 + ∫_0^t κ^Λ(z l_s) ds`.
    pub fn kappa_t(&self, z: Complex64, t: f64) -> Result<Complex64> {
        self.check_domain(z)?;
        let gaussian =
            z * self.trend.value(t) + z * z * (0.5 * self.sigma_long * self.sigma_long * t);
        Ok(gaussian + self.driver_integral(z, 0.0, t))
    }

    /// `∫_a^b κ^Λ(z l_s) ds`, adaptive and split at loading breakpoints.
    pub fn driver_integral(&self, z: Complex64, a: f64, b: f64) -> Complex64 {
        let Some(driver) = self.driver else {
            return Complex64::new(0.0, 0.0);
        };
        if b <= a {
            return Complex64::new(0.0, 0.0);
        }
        if let Loading::Constant(c) = self.loading {
            return driver.kappa_unchecked(z * c) * (b - a);
        }
        let mut cuts = vec![a];
        cuts.extend(self.loading.breakpoints(a, b));
        cuts.push(b);
        cuts.windows(2)
            .map(|w| {
                integrate_adaptive(w[0], w[1], KAPPA_TOL, |s| {
                    // evaluate at an interior point of each segment so the
                    // one-sided slope of a piecewise clock is the right one
                    driver.kappa_unchecked(z * self.loading.at(s))
                })
            })
            .sum()
    }

    /// `dρ_t/dt = σ_l² + κ^Λ(2 l_t) − 2κ^Λ(l_t)`; must be strictly positive.
    pub fn rho_density(&self, t: f64) -> Result<f64> {
        let mut out = self.sigma_long * self.sigma_long;
        if let Some(driver) = &self.driver {
            let l = self.loading.at(t);
            out += driver.kappa_real(2.0 * l) - 2.0 * driver.kappa_real(l);
        }
        if out > 0.0 && out.is_finite() {
            Ok(out)
        } else {
            Err(Error::Degenerate(format!(
                "reference variance density is {out} at t = {t}: increments are deterministic"
            )))
        }
    }

    /// `ρ_t = κ_t(2) − 2κ_t(1)`.
    pub fn rho(&self, t: f64) -> Result<f64> {
        let two = self.kappa_t(Complex64::new(2.0, 0.0), t)?;
        let one = self.kappa_t(Complex64::new(1.0, 0.0), t)?;
        Ok(two.re - 2.0 * one.re)
    }

    /// `λ_t = dκ_t(1)/dρ_t`.
    pub fn lambda(&self, t: f64) -> Result<f64> {
        self.check_domain(Complex64::new(2.0, 0.0))?;
        Ok(self.kappa_density_real(1.0, t) / self.rho_density(t)?)
    }

    /// Mean-variance trade-off `K_t = ∫_0^t λ_u² dρ_u`.
    pub fn mvt(&self, t: f64) -> Result<f64> {
        self.check_domain(Complex64::new(2.0, 0.0))?;
        if self.is_stationary() {
            let l = self.lambda(0.0)?;
            return Ok(l * l * self.rho_density(0.0)? * t);
        }
        let mut cuts = vec![0.0];
        cuts.extend(self.loading.breakpoints(0.0, t));
        cuts.extend(self.trend.breakpoints(0.0, t));
        cuts.push(t);
        cuts.sort_by(f64::total_cmp);
        let mut total = 0.0;
        for w in cuts.windows(2) {
            let v = integrate_adaptive(w[0], w[1], KAPPA_TOL, |s| {
                let k1 = self.kappa_density_real(1.0, s);
                let rho = self.rho_density(s).unwrap_or(f64::NAN);
                Complex64::new(k1 * k1 / rho, 0.0)
            });
            total += v.re;
        }
        if total.is_finite() {
            Ok(total)
        } else {
            Err(Error::StructureCondition(format!(
                "mean-variance trade-off is not finite on [0, {t}]"
            )))
        }
    }

    /// Trapezoidal `K` on the given times (starting at 0).
    pub fn mvt_on(&self, times: &[f64]) -> Result<Vec<f64>> {
        let mut density = Vec::with_capacity(times.len());
        for &t in times {
            let k1 = self.kappa_density_real(1.0, t);
            density.push(k1 * k1 / self.rho_density(t)?);
        }
        let out = cumulative_trapezoid(times, &density);
        if out.iter().all(|v| v.is_finite()) {
            Ok(out)
        } else {
            Err(Error::StructureCondition("mean-variance trade-off diverges".into()))
        }
    }

    /// `Var(X_t) = Var(Λ_1)·∫_0^t l_s² ds + σ_l² t`.
    pub fn log_variance(&self, t: f64) -> f64 {
        let mut v = self.sigma_long * self.sigma_long * t;
        if let Some(driver) = &self.driver {
            let k2 = driver.cumulants()[1];
            let l2 = match self.loading {
                Loading::Constant(c) => c * c * t,
                _ => {
                    let mut cuts = vec![0.0];
                    cuts.extend(self.loading.breakpoints(0.0, t));
                    cuts.push(t);
                    cuts.windows(2)
                        .map(|w| {
                            integrate_adaptive(w[0], w[1], KAPPA_TOL, |s| {
                                let l = self.loading.at(s);
                                Complex64::new(l * l, 0.0)
                            })
                            .re
                        })
                        .sum()
                }
            };
            v += k2 * l2;
        }
        v
    }

    /// Check every standing assumption and report each outcome.
    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        report.push(
            "s0 > 0 and T > 0",
            self.s0 > 0.0 && self.horizon > 0.0 && self.s0.is_finite() && self.horizon.is_finite(),
            format!("s0 = {}, T = {}", self.s0, self.horizon),
        );
        report.push(
            "m(0) = 0",
            self.trend.value(0.0).abs() < 1e-14,
            format!("m(0) = {}", self.trend.value(0.0)),
        );
        report.push(
            "sigma_l >= 0",
            self.sigma_long >= 0.0 && self.sigma_long.is_finite(),
            format!("sigma_l = {}", self.sigma_long),
        );
        let (lo, hi) = self.loading_bounds();
        if self.driver.is_some() {
            report.push(
                "inf l > 0 and sup l < inf",
                lo > 0.0 && hi.is_finite(),
                format!("loading range [{lo}, {hi}] on [0, {}]", self.horizon),
            );
        }
        if let Loading::ExponentialDecay {
            sigma_s,
            mean_reversion,
            delivery,
        } = self.loading
        {
            report.push(
                "sigma_s > 0, lambda >= 0, T_d >= T",
                sigma_s > 0.0 && mean_reversion >= 0.0 && delivery >= self.horizon,
                format!("sigma_s = {sigma_s}, lambda = {mean_reversion}, T_d = {delivery}"),
            );
        }
        if let Loading::TimeChange(psi) = &self.loading {
            report.push(
                "psi(0) = 0",
                psi.value(0.0).abs() < 1e-14,
                format!("psi(0) = {}", psi.value(0.0)),
            );
        }

        match self.driver {
            Some(driver) => {
                let strip = driver.domain();
                let ok = strip.contains(2.0 * hi) && strip.contains(2.0 * lo) && lo > 0.0;
                report.push(
                    "2 ∈ D",
                    ok,
                    format!("2·l in [{}, {}] against driver strip {strip}", 2.0 * lo, 2.0 * hi),
                );
                if ok {
                    let mut worst = f64::INFINITY;
                    for x in [lo, hi, 0.5 * (lo + hi)] {
                        worst = worst.min(driver.kappa_real(2.0 * x) - 2.0 * driver.kappa_real(x));
                    }
                    let sigma2 = self.sigma_long * self.sigma_long;
                    report.push(
                        "non-degenerate increments",
                        sigma2 > 0.0 || worst > 0.0,
                        format!(
                            "sigma_l^2 = {sigma2}, min over loadings of κ(2l) − 2κ(l) = {worst}"
                        ),
                    );
                }
                if let (
                    LevyLaw::Nig { alpha, beta, .. },
                    Loading::ExponentialDecay { sigma_s, .. },
                ) = (driver, &self.loading)
                {
                    let bound = 0.5 * (alpha - beta);
                    push_sufficient(
                        &mut report,
                        "sigma_s <= (alpha - beta)/2",
                        *sigma_s <= bound,
                        format!("sigma_s = {sigma_s}, (alpha - beta)/2 = {bound}"),
                    );
                }
            }
            None => {
                report.push(
                    "non-degenerate increments",
                    self.sigma_long > 0.0,
                    format!("sigma_l = {} with no jump driver", self.sigma_long),
                );
            }
        }
        report
    }

    /// Fail with the first violated assumption.
    pub fn ensure_valid(&self) -> Result<()> {
        let report = self.validate();
        let result = match report.failures().next() {
            None => Ok(()),
            Some(c) if c.name == "2 ∈ D" => Err(Error::Admissibility(format!(
                "{}: {}",
                c.name, c.detail
            ))),
            Some(c) => Err(Error::Degenerate(format!("{}: {}", c.name, c.detail))),
        };
        result
    }

    /// Spot values at the grid knots. Constant loadings use exact Lévy
    /// increments per interval; time-varying loadings are sub-stepped on the
    /// refined grid with the loading frozen at each sub-step's left end.
    pub fn sample_path<R: Rng + ?Sized>(&self, grid: &TimeGrid, rng: &mut R) -> Vec<f64> {
        let knots = grid.knots();
        let m = grid.refinement();
        let mut path = Vec::with_capacity(knots.len());
        let mut jump_part = 0.0;
        let mut gauss_part = 0.0;
        path.push(self.s0 * self.trend.value(0.0).exp());
        for w in knots.windows(2) {
            let (a, b) = (w[0], w[1]);
            if let Some(driver) = &self.driver {
                match self.loading {
                    Loading::Constant(c) => jump_part += c * driver.sample_increment(b - a, rng),
                    _ => {
                        let h = (b - a) / m as f64;
                        for k in 0..m {
                            let left = a + h * k as f64;
                            jump_part += self.loading.at(left) * driver.sample_increment(h, rng);
                        }
                    }
                }
            }
            if self.sigma_long > 0.0 {
                let n: f64 = rng.sample(StandardNormal);
                gauss_part += self.sigma_long * (b - a).sqrt() * n;
            }
            path.push(self.s0 * (self.trend.value(b) + jump_part + gauss_part).exp());
        }
        path
    }
}

fn push_sufficient(report: &mut ValidationReport, name: &str, passed: bool, detail: String) {
    report.checks.push(AssumptionCheck {
        name: name.to_string(),
        passed,
        sufficient_only: true,
        detail,
    });
}
