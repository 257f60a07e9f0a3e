//! Variance of the terminal hedging error of the variance-optimal strategy,
//! `J₀ = ∫∫ J₀(y,z) Π(dy)Π(dz)` with
//! `J₀(y,z) = s0^{y+z} ∫_0^T β(y,z,t) e^{κ_t(y+z) + α(y,z,t)} dρ_t`.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fs::TimeContext;
use crate::model::{AdditiveModel, TimeGrid};
use crate::payoff::{check_admissible, ContourMeasure, ContourQuadrature};

/// `β(y,z,t) = dρ_t(y,z)/dρ_t − γ(y,t)γ(z,t)` with
/// `ρ_t(y,z) = κ_t(y+z) − κ_t(y) − κ_t(z)`.
pub fn beta(model: &AdditiveModel, y: Complex64, z: Complex64, t: f64) -> Result<Complex64> {
    for p in [y, z, y + z, y + 1.0, z + 1.0] {
        model.check_domain(p)?;
    }
    let rho = model.rho_density(t)?;
    let k1 = model.kappa_density_real(1.0, t);
    let ky = model.kappa_density_unchecked(y, t);
    let kz = model.kappa_density_unchecked(z, t);
    let gy = (model.kappa_density_unchecked(y + 1.0, t) - ky - k1) / rho;
    let gz = (model.kappa_density_unchecked(z + 1.0, t) - kz - k1) / rho;
    Ok((model.kappa_density_unchecked(y + z, t) - ky - kz) / rho - gy * gz)
}

/// `α(y,z,t_i) = ∫_{t_i}^T η(y,ds) + ∫_{t_i}^T η(z,ds) − (K_T − K_{t_i})` at
/// the knots of `ctx`.
pub fn alpha(ctx: &TimeContext, model: &AdditiveModel, y: Complex64, z: Complex64) -> Vec<Complex64> {
    let py = ctx.node_profile(model, y);
    let pz = ctx.node_profile(model, z);
    let k = ctx.mvt();
    let kt = *k.last().unwrap_or(&0.0);
    (0..ctx.knots.len())
        .map(|i| py.eta_tail[i] + pz.eta_tail[i] - (kt - k[i]))
        .collect()
}

#[derive(Debug, Clone, Copy)]
pub struct ErrorOptions {
    /// Relative change between successive contour cutoffs that stops the
    /// doubling.
    pub rel_tol: f64,
    pub initial_cutoff: f64,
    pub max_cutoff: f64,
    pub panel_width: f64,
    pub gl_order: usize,
    /// Time steps for non-stationary models; stationary models are
    /// integrated exactly in one step.
    pub time_steps: usize,
}

impl Default for ErrorOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-3,
            initial_cutoff: 32.0,
            max_cutoff: 1024.0,
            panel_width: 1.0,
            gl_order: 16,
            time_steps: 64,
        }
    }
}

/// `∫_0^h (b_a + (b_b − b_a)s/h)·e^{φ_a + (φ_b − φ_a)s/h} ds`: exact when
/// the amplitude and the exponent are affine in time, which is the case
/// for every stationary model.
fn exp_affine_integral(h: f64, b_a: Complex64, b_b: Complex64, phi_a: Complex64, phi_b: Complex64) -> Complex64 {
    let d = phi_b - phi_a;
    let (e1, e2) = if d.norm() < 1e-3 {
        let d2 = d * d;
        (
            1.0 + d / 2.0 + d2 / 6.0 + d2 * d / 24.0 + d2 * d2 / 120.0,
            0.5 + d / 3.0 + d2 / 8.0 + d2 * d / 30.0 + d2 * d2 / 144.0,
        )
    } else {
        let ed = d.exp();
        ((ed - 1.0) / d, (ed * (d - 1.0) + 1.0) / (d * d))
    };
    phi_a.exp() * (b_a * e1 + (b_b - b_a) * e2) * h
}

/// Per-node data on the time grid.
struct NodeSeries {
    z: Complex64,
    /// `ln w + z ln s0`.
    log_weight: Complex64,
    eta_tail: Vec<Complex64>,
    gamma: Vec<Complex64>,
    kappa: Vec<Complex64>,
    /// Stationary models: `e^{ln w + z ln s0}` and `e^{… + T(η − k/2)}`
    /// with `η` and `k` the constant `η`- and MVT-densities.
    start: Complex64,
    damped: Complex64,
}

struct Kernel<'a> {
    model: &'a AdditiveModel,
    times: Vec<f64>,
    rho: Vec<f64>,
    mvt_tail: Vec<f64>,
    stationary: bool,
    ctx: TimeContext,
}

impl<'a> Kernel<'a> {
    fn new(model: &'a AdditiveModel, options: &ErrorOptions) -> Result<Self> {
        let stationary = model.is_stationary();
        let steps = if stationary { 1 } else { options.time_steps.max(1) };
        let grid = TimeGrid::uniform(model.horizon, steps, 1)?;
        let ctx = TimeContext::new(model, &grid)?;
        let times = ctx.knots.clone();
        let rho = times
            .iter()
            .map(|&t| model.rho_density(t))
            .collect::<Result<Vec<_>>>()?;
        let k = ctx.mvt();
        let kt = *k.last().unwrap_or(&0.0);
        Ok(Self {
            model,
            mvt_tail: k.iter().map(|v| kt - v).collect(),
            times,
            rho,
            stationary,
            ctx,
        })
    }

    fn series(&self, z: Complex64, weight: Complex64) -> NodeSeries {
        let profile = self.ctx.node_profile(self.model, z);
        let log_weight = weight.ln() + z * self.model.s0.ln();
        // eta_tail[0] = Tη and mvt_tail[0] = Tk when stationary
        let start = log_weight.exp();
        let damped = (log_weight + profile.eta_tail[0] - 0.5 * self.mvt_tail[0]).exp();
        NodeSeries {
            z,
            log_weight,
            eta_tail: profile.eta_tail,
            gamma: profile.gamma,
            kappa: self
                .times
                .iter()
                .map(|&t| self.model.kappa_density_unchecked(z, t))
                .collect(),
            start,
            damped,
        }
    }

    fn pair(&self, y: &NodeSeries, z: &NodeSeries) -> Complex64 {
        if self.stationary {
            self.pair_stationary(y, z)
        } else {
            self.pair_general(y, z)
        }
    }

    /// `w_y w_z s0^{y+z}·βρ'·(e^{Tκ(y+z)} − e^{T(η_y + η_z − k)})/(κ(y+z) − η_y − η_z + k)`.
    #[inline]
    fn pair_stationary(&self, y: &NodeSeries, z: &NodeSeries) -> Complex64 {
        let horizon = self.times[1];
        let ks = self.model.kappa_density_unchecked(y.z + z.z, 0.0);
        let amp = ks - y.kappa[0] - z.kappa[0] - y.gamma[0] * z.gamma[0] * self.rho[0];
        let rate = (y.eta_tail[0] + z.eta_tail[0] - self.mvt_tail[0]) / horizon;
        let d = (ks - rate) * horizon;
        let lower = y.damped * z.damped;
        let time_integral = if d.norm() < 1e-3 {
            let d2 = d * d;
            lower * horizon * (1.0 + d / 2.0 + d2 / 6.0 + d2 * d / 24.0 + d2 * d2 / 120.0)
        } else {
            (y.start * z.start * (ks * horizon).exp() - lower) * horizon / d
        };
        amp * time_integral
    }

    /// Trapezoidal `κ_t(y+z)` and the affine-exponential rule per step.
    fn pair_general(&self, y: &NodeSeries, z: &NodeSeries) -> Complex64 {
        let s = y.z + z.z;
        let mut total = Complex64::new(0.0, 0.0);
        let mut kappa_t = Complex64::new(0.0, 0.0);
        let mut prev = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
        for (i, &t) in self.times.iter().enumerate() {
            let ks = self.model.kappa_density_unchecked(s, t);
            if i > 0 {
                kappa_t += (prev.2 + ks) * (0.5 * (t - self.times[i - 1]));
            }
            let amp = ks - y.kappa[i] - z.kappa[i] - y.gamma[i] * z.gamma[i] * self.rho[i];
            let phi = y.log_weight + z.log_weight + kappa_t + y.eta_tail[i] + z.eta_tail[i]
                - self.mvt_tail[i];
            if i > 0 {
                total += exp_affine_integral(t - self.times[i - 1], prev.0, amp, prev.1, phi);
            }
            prev = (amp, phi, ks);
        }
        total
    }
}

/// `J₀(y,z)` for a single pair of exponents (unit weights).
pub fn j0_kernel(model: &AdditiveModel, y: Complex64, z: Complex64, options: &ErrorOptions) -> Result<Complex64> {
    for p in [y, z, y + z, y + 1.0, z + 1.0] {
        model.check_domain(p).map_err(|e| match e {
            Error::OutOfDomain { re, strip } => Error::Admissibility(format!(
                "pair exponent with real part {re} leaves the strip {strip}"
            )),
            other => other,
        })?;
    }
    let kernel = Kernel::new(model, options)?;
    let one = Complex64::new(1.0, 0.0);
    Ok(kernel.pair(&kernel.series(y, one), &kernel.series(z, one)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorVariance {
    pub value: f64,
    /// Imaginary residue of the terms that must be real on their own.
    pub imaginary: f64,
    pub cutoff: f64,
    /// Relative change at the last cutoff doubling.
    pub last_change: f64,
    pub settled: bool,
    pub nodes: usize,
}

impl ErrorVariance {
    pub fn std(&self) -> f64 {
        self.value.max(0.0).sqrt()
    }
}

/// `Σ_{y,z} F(y,z)` over atoms and both half-lines, using `F(y,z) = F(z,y)`
/// and `F(ȳ,z̄) = conj F(y,z)`: with `U` the upper half-line nodes the
/// line-line part is `2 Re Σ_{U×U} F + 2 Σ_{U×Ū} F`, the second sum real.
fn double_sum(
    kernel: &Kernel,
    atoms: &[NodeSeries],
    upper: &[NodeSeries],
    lower: &[NodeSeries],
) -> (f64, f64) {
    let n = upper.len();
    let rows: Vec<(Complex64, Complex64)> = (0..n)
        .into_par_iter()
        .map(|a| {
            let mut same = kernel.pair(&upper[a], &upper[a]);
            let mut cross = kernel.pair(&upper[a], &lower[a]);
            for b in a + 1..n {
                same += 2.0 * kernel.pair(&upper[a], &upper[b]);
                cross += 2.0 * kernel.pair(&upper[a], &lower[b]);
            }
            (same, cross)
        })
        .collect();
    let mut value = 0.0;
    let mut imaginary = 0.0;
    for (same, cross) in &rows {
        value += 2.0 * same.re + 2.0 * cross.re;
    }
    // Σ_a F(a, ā) must be real by itself
    imaginary += (0..n)
        .map(|a| kernel.pair(&upper[a], &lower[a]).im)
        .sum::<f64>()
        .abs();
    let mut atom_part = Complex64::new(0.0, 0.0);
    for x in atoms {
        for x2 in atoms {
            atom_part += kernel.pair(x, x2);
        }
        for v in upper.iter().chain(lower) {
            atom_part += 2.0 * kernel.pair(x, v);
        }
    }
    imaginary += atom_part.im.abs();
    (value + atom_part.re, imaginary)
}

/// Evaluate `J₀` on contours truncated at `U`, doubling `U` until the value
/// settles to `rel_tol` or `max_cutoff` is reached.
pub fn hedging_error_variance(
    model: &AdditiveModel,
    measure: &ContourMeasure,
    options: &ErrorOptions,
) -> Result<ErrorVariance> {
    model.ensure_valid()?;
    check_admissible(measure, model)?;
    let support = measure.real_support();
    for &a in &support {
        for &b in &support {
            if !model.effective_domain().contains(a + b) {
                return Err(Error::Admissibility(format!(
                    "pair exponent {} leaves the strip {}",
                    a + b,
                    model.effective_domain()
                )));
            }
        }
    }
    let kernel = Kernel::new(model, options)?;
    let scale = measure.scale();
    let evaluate = |cutoff: f64| -> (f64, f64, usize) {
        let quad = ContourQuadrature::from_panels(measure, cutoff, options.panel_width, options.gl_order);
        let atoms: Vec<NodeSeries> = quad.atoms.iter().map(|&(z, w)| kernel.series(z, w)).collect();
        let upper: Vec<NodeSeries> = quad
            .upper()
            .par_iter()
            .map(|n| kernel.series(n.z, n.weight))
            .collect();
        let lower: Vec<NodeSeries> = quad
            .upper()
            .par_iter()
            .map(|n| kernel.series(n.z.conj(), n.weight.conj()))
            .collect();
        let (v, im) = double_sum(&kernel, &atoms, &upper, &lower);
        (v, im, quad.atoms.len() + quad.len())
    };

    let floor = 1e-12 * scale * scale;
    let mut cutoff = options.initial_cutoff;
    let (mut value, mut imaginary, mut nodes) = evaluate(cutoff);
    let mut last_change = 0.0;
    let mut settled = true;
    if !measure.lines.is_empty() {
        settled = false;
        while 2.0 * cutoff <= options.max_cutoff {
            let (next, im, n) = evaluate(2.0 * cutoff);
            let change = (next - value).abs();
            cutoff *= 2.0;
            value = next;
            imaginary = im;
            nodes = n;
            last_change = change / value.abs().max(f64::MIN_POSITIVE);
            if change <= options.rel_tol * value.abs() + floor {
                settled = true;
                break;
            }
        }
    }
    if !(value.is_finite() && imaginary.is_finite()) {
        return Err(Error::Numerical("error variance is not finite".into()));
    }
    let floor = 1e-10 * scale * scale;
    if imaginary > 1e-8 * value.abs() + floor {
        return Err(Error::Numerical(format!(
            "error variance has imaginary residue {imaginary:e}"
        )));
    }
    if value < -(1e-8 * value.abs() + floor) {
        return Err(Error::Numerical(format!("error variance is negative: {value:e}")));
    }
    Ok(ErrorVariance {
        value,
        imaginary,
        cutoff,
        last_change,
        settled,
        nodes,
    })
}
