//! Föllmer-Schweizer ingredients `γ(z,t)`, `η(z,t)`, `λ_t` and the
//! node × date tables used to evaluate the claim price `H_t` and the pure
//! hedge `ξ_t` of a payoff given by a contour measure.

use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{AdditiveModel, TimeGrid};
use crate::payoff::{
    check_admissible, discretize, spot_power, ContourMeasure, ContourQuadrature, ContourTarget,
    DiscretizeOptions,
};

/// `γ(z,t) = [κ'(z+1,t) − κ'(z,t) − κ'(1,t)] / ρ'(t)`.
pub fn gamma(model: &AdditiveModel, z: Complex64, t: f64) -> Result<Complex64> {
    check_node(model, z)?;
    let k1 = model.kappa_density_real(1.0, t);
    let rho = model.rho_density(t)?;
    Ok(gamma_eta(model, z, t, k1, rho).0)
}

/// `η`-density `κ'(z,t) − γ(z,t)·κ'(1,t)`.
pub fn eta_density(model: &AdditiveModel, z: Complex64, t: f64) -> Result<Complex64> {
    check_node(model, z)?;
    let k1 = model.kappa_density_real(1.0, t);
    let rho = model.rho_density(t)?;
    Ok(gamma_eta(model, z, t, k1, rho).1)
}

/// `λ_t = κ'(1,t)/ρ'(t)`.
pub fn lambda(model: &AdditiveModel, t: f64) -> Result<f64> {
    model.lambda(t)
}

fn check_node(model: &AdditiveModel, z: Complex64) -> Result<()> {
    model.check_domain(z)?;
    model.check_domain(z + 1.0)?;
    model.check_domain(Complex64::new(2.0, 0.0))
}

#[inline]
fn gamma_eta(model: &AdditiveModel, z: Complex64, t: f64, k1: f64, rho: f64) -> (Complex64, Complex64) {
    let kz = model.kappa_density_unchecked(z, t);
    let kz1 = model.kappa_density_unchecked(z + 1.0, t);
    let g = (kz1 - kz - k1) / rho;
    (g, kz - g * k1)
}

/// Time discretisation shared by every node: rebalance knots, the refined
/// grid and two Gauss points inside each refined interval (so loading kinks
/// that sit on grid points are never evaluated).
#[derive(Debug, Clone)]
pub struct TimeContext {
    pub knots: Vec<f64>,
    pub refined: Vec<f64>,
    refinement: usize,
    stationary: bool,
    horizon: f64,
    gauss_t: Vec<[f64; 2]>,
    gauss_k1: Vec<[f64; 2]>,
    gauss_rho: Vec<[f64; 2]>,
    knot_k1: Vec<f64>,
    knot_rho: Vec<f64>,
}

impl TimeContext {
    pub fn new(model: &AdditiveModel, grid: &TimeGrid) -> Result<Self> {
        if (grid.horizon() - model.horizon).abs() > 1e-12 * model.horizon {
            return Err(Error::Parameter(format!(
                "grid ends at {} but the model horizon is {}",
                grid.horizon(),
                model.horizon
            )));
        }
        let refined = grid.refined();
        let offset = 0.5 / 3f64.sqrt();
        let mut gauss_t = Vec::with_capacity(refined.len());
        let mut gauss_k1 = Vec::with_capacity(refined.len());
        let mut gauss_rho = Vec::with_capacity(refined.len());
        for w in refined.windows(2) {
            let (mid, h) = (0.5 * (w[0] + w[1]), w[1] - w[0]);
            let ts = [mid - offset * h, mid + offset * h];
            gauss_k1.push(ts.map(|t| model.kappa_density_real(1.0, t)));
            gauss_rho.push([model.rho_density(ts[0])?, model.rho_density(ts[1])?]);
            gauss_t.push(ts);
        }
        let knots = grid.knots().to_vec();
        let knot_k1 = knots.iter().map(|&t| model.kappa_density_real(1.0, t)).collect();
        let knot_rho = knots
            .iter()
            .map(|&t| model.rho_density(t))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            knots,
            refined,
            refinement: grid.refinement(),
            stationary: model.is_stationary(),
            horizon: model.horizon,
            gauss_t,
            gauss_k1,
            gauss_rho,
            knot_k1,
            knot_rho,
        })
    }

    pub fn lambda(&self) -> Vec<f64> {
        self.knot_k1.iter().zip(&self.knot_rho).map(|(k, r)| k / r).collect()
    }

    /// `K` at the knots, integrating `λ²ρ'` with the two Gauss points of
    /// every refined interval.
    pub fn mvt(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.knots.len()];
        let mut acc = 0.0;
        for (idx, w) in self.refined.windows(2).enumerate() {
            let h = w[1] - w[0];
            let f = |g: usize| self.gauss_k1[idx][g].powi(2) / self.gauss_rho[idx][g];
            acc += 0.5 * h * (f(0) + f(1));
            if (idx + 1) % self.refinement == 0 {
                out[(idx + 1) / self.refinement] = acc;
            }
        }
        out
    }

    /// `γ(z, t_i)` and `∫_{t_i}^T η(z, ds)` at every knot.
    pub fn node_profile(&self, model: &AdditiveModel, z: Complex64) -> NodeProfile {
        let n = self.knots.len();
        if self.stationary {
            let (g, eta) = gamma_eta(model, z, 0.0, self.knot_k1[0], self.knot_rho[0]);
            return NodeProfile {
                gamma: vec![g; n],
                eta_tail: self.knots.iter().map(|&t| eta * (self.horizon - t)).collect(),
            };
        }
        let gamma = (0..n)
            .map(|i| gamma_eta(model, z, self.knots[i], self.knot_k1[i], self.knot_rho[i]).0)
            .collect();
        let mut eta_tail = vec![Complex64::new(0.0, 0.0); n];
        let mut acc = Complex64::new(0.0, 0.0);
        for idx in (0..self.gauss_t.len()).rev() {
            let h = self.refined[idx + 1] - self.refined[idx];
            let e = |g: usize| {
                gamma_eta(
                    model,
                    z,
                    self.gauss_t[idx][g],
                    self.gauss_k1[idx][g],
                    self.gauss_rho[idx][g],
                )
                .1
            };
            acc += (e(0) + e(1)) * (0.5 * h);
            if idx % self.refinement == 0 {
                eta_tail[idx / self.refinement] = acc;
            }
        }
        NodeProfile { gamma, eta_tail }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeProfile {
    pub gamma: Vec<Complex64>,
    pub eta_tail: Vec<Complex64>,
}

/// Value and pure-hedge component at one date and spot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClaimState {
    pub value: f64,
    pub hedge: f64,
}

#[derive(Debug, Clone)]
struct AtomTerm {
    z: Complex64,
    amp: Complex64,
    gamma_amp: Complex64,
}

/// One line at one date, truncated to the panels that matter there. `amp`
/// and `gamma_amp` are stored local-node major: entry `k·panels + p`.
#[derive(Debug, Clone)]
struct LineSlice {
    abscissa: f64,
    width: f64,
    local: Vec<f64>,
    panels: usize,
    amp: Vec<Complex64>,
    gamma_amp: Vec<Complex64>,
}

#[derive(Debug, Clone)]
struct DateSlice {
    atoms: Vec<AtomTerm>,
    lines: Vec<LineSlice>,
}

impl DateSlice {
    /// `H = Σ W s^z`, `ξ = Σ γW s^{z−1}`. Nodes on one line at offset `k`
    /// in successive panels differ by `i·width` in `z`, so their powers of
    /// `s` form a geometric sequence evaluated by Horner's rule.
    fn evaluate(&self, s: f64) -> ClaimState {
        let x = s.ln();
        let mut value = 0.0;
        let mut hedge = 0.0;
        for a in &self.atoms {
            let p = spot_power(s, a.z);
            value += (a.amp * p).re;
            hedge += (a.gamma_amp * p).re;
        }
        for line in &self.lines {
            let step = Complex64::from_polar(1.0, line.width * x);
            let mut h = Complex64::new(0.0, 0.0);
            let mut g = Complex64::new(0.0, 0.0);
            for (k, &c) in line.local.iter().enumerate() {
                let amp = &line.amp[k * line.panels..(k + 1) * line.panels];
                let gam = &line.gamma_amp[k * line.panels..(k + 1) * line.panels];
                let mut acc_h = Complex64::new(0.0, 0.0);
                let mut acc_g = Complex64::new(0.0, 0.0);
                for p in (0..line.panels).rev() {
                    acc_h = acc_h * step + amp[p];
                    acc_g = acc_g * step + gam[p];
                }
                let phase = Complex64::from_polar(1.0, c * x);
                h += acc_h * phase;
                g += acc_g * phase;
            }
            let base = (line.abscissa * x).exp();
            value += 2.0 * base * h.re;
            hedge += 2.0 * base * g.re;
        }
        ClaimState {
            value,
            hedge: hedge / s,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct TableOptions {
    pub discretize: DiscretizeOptions,
    /// Spot interval over which per-date truncation errors are bounded;
    /// defaults to `s0·exp(±(10·sd(X_T) + 1))`.
    pub spot_range: Option<(f64, f64)>,
}

/// Converges `V₀ = H₀(s0)` together with `H` at the last rebalance date
/// before maturity, where the `η`-damping is weakest.
struct HedgeTarget<'a> {
    model: &'a AdditiveModel,
    ctx: &'a TimeContext,
    s0: f64,
    spots: [f64; 3],
    range: (f64, f64),
}

impl HedgeTarget<'_> {
    fn tails(&self, z: Complex64) -> (Complex64, Complex64) {
        let profile = self.ctx.node_profile(self.model, z);
        let last = self.ctx.knots.len() - 2;
        (profile.eta_tail[0], profile.eta_tail[last])
    }
}

impl ContourTarget for HedgeTarget<'_> {
    fn probes(&self) -> usize {
        1 + self.spots.len()
    }

    fn transfer(&self, z: Complex64, out: &mut [Complex64]) {
        let (first, last) = self.tails(z);
        out[0] = (first + z * self.s0.ln()).exp();
        for (o, s) in out[1..].iter_mut().zip(&self.spots) {
            *o = (last + z * s.ln()).exp();
        }
    }

    fn envelope(&self, z: Complex64) -> f64 {
        let (first, last) = self.tails(z);
        let damp = first.re.exp().max(last.re.exp());
        damp * self.range.0.powf(z.re).max(self.range.1.powf(z.re))
    }
}

/// Precomputed FS tables at the rebalance knots.
#[derive(Debug, Clone)]
pub struct FsTables {
    pub knots: Vec<f64>,
    pub lambda: Vec<f64>,
    pub mvt: Vec<f64>,
    pub quadrature: ContourQuadrature,
    /// `gamma[i][j] = γ(z_j, t_i)` for the upper-half nodes.
    pub gamma: Vec<Vec<Complex64>>,
    /// `eta_tail[i][j] = ∫_{t_i}^T η(z_j, ds)`.
    pub eta_tail: Vec<Vec<Complex64>>,
    pub s0: f64,
    pub spot_range: (f64, f64),
    measure: ContourMeasure,
    slices: Vec<DateSlice>,
}

pub fn build_tables(
    model: &AdditiveModel,
    measure: &ContourMeasure,
    grid: &TimeGrid,
    options: &TableOptions,
) -> Result<FsTables> {
    model.ensure_valid()?;
    check_admissible(measure, model)?;
    let ctx = TimeContext::new(model, grid)?;
    let sd = model.log_variance(model.horizon).sqrt();
    let drift = model.trend.value(model.horizon);
    let spot_range = options.spot_range.unwrap_or_else(|| {
        let spread = 10.0 * sd + 1.0;
        (
            model.s0 * (drift - spread).exp(),
            model.s0 * (drift + spread).exp(),
        )
    });
    if !(spot_range.0 > 0.0 && spot_range.1 > spot_range.0) {
        return Err(Error::Parameter(format!("bad spot range {spot_range:?}")));
    }
    let centre = model.s0 * drift.exp();
    let target = HedgeTarget {
        model,
        ctx: &ctx,
        s0: model.s0,
        spots: [centre * (-0.5f64).exp(), centre, centre * 0.5f64.exp()],
        range: spot_range,
    };
    let quadrature = discretize(measure, &target, &options.discretize)?;

    let profiles: Vec<NodeProfile> = quadrature
        .upper()
        .par_iter()
        .map(|node| ctx.node_profile(model, node.z))
        .collect();
    for (node, p) in quadrature.upper().iter().zip(&profiles) {
        let finite = p.gamma.iter().chain(&p.eta_tail).all(|v| v.re.is_finite() && v.im.is_finite());
        if !finite {
            return Err(Error::Numerical(format!("non-finite FS table entry at z = {}", node.z)));
        }
    }
    let atom_profiles: Vec<NodeProfile> = quadrature
        .atoms
        .iter()
        .map(|&(z, _)| ctx.node_profile(model, z))
        .collect();

    let n_knots = ctx.knots.len();
    let gamma: Vec<Vec<Complex64>> = (0..n_knots)
        .map(|i| profiles.iter().map(|p| p.gamma[i]).collect())
        .collect();
    let eta_tail: Vec<Vec<Complex64>> = (0..n_knots)
        .map(|i| profiles.iter().map(|p| p.eta_tail[i]).collect())
        .collect();

    let tol = options.discretize.tol * measure.scale();
    let scale = measure.scale();
    let slices = (0..n_knots - 1)
        .map(|i| {
            let atoms = quadrature
                .atoms
                .iter()
                .zip(&atom_profiles)
                .map(|(&(z, w), p)| {
                    let amp = w * p.eta_tail[i].exp();
                    AtomTerm {
                        z,
                        amp,
                        gamma_amp: amp * p.gamma[i],
                    }
                })
                .collect();
            let lines = quadrature
                .lines
                .iter()
                .map(|layout| {
                    let g = quadrature.gl_order();
                    let panels = layout.panels;
                    let mut amp = vec![Complex64::new(0.0, 0.0); g * panels];
                    let mut gamma_amp = amp.clone();
                    let mut panel_bound = vec![0.0; panels];
                    let r = layout.abscissa;
                    let env_h = spot_range.0.powf(r).max(spot_range.1.powf(r));
                    let env_x = spot_range.0.powf(r - 1.0).max(spot_range.1.powf(r - 1.0)) * scale;
                    for p in 0..panels {
                        for k in 0..g {
                            let j = layout.offset + p * g + k;
                            let w = quadrature.upper()[j].weight * eta_tail[i][j].exp();
                            let gw = w * gamma[i][j];
                            amp[k * panels + p] = w;
                            gamma_amp[k * panels + p] = gw;
                            panel_bound[p] += w.norm() * env_h + gw.norm() * env_x;
                        }
                    }
                    // keep the shortest prefix of panels whose dropped tail
                    // (both half-lines) stays under the tolerance
                    let mut keep = panels;
                    let mut suffix = 0.0;
                    while keep > 0 && 2.0 * (suffix + panel_bound[keep - 1]) <= 0.5 * tol {
                        suffix += panel_bound[keep - 1];
                        keep -= 1;
                    }
                    let compact = |v: &[Complex64]| -> Vec<Complex64> {
                        (0..g)
                            .flat_map(|k| v[k * panels..k * panels + keep].iter().copied())
                            .collect()
                    };
                    LineSlice {
                        abscissa: r,
                        width: quadrature.panel_width,
                        local: quadrature.local_nodes.clone(),
                        panels: keep,
                        amp: compact(&amp),
                        gamma_amp: compact(&gamma_amp),
                    }
                })
                .collect();
            DateSlice { atoms, lines }
        })
        .collect();

    Ok(FsTables {
        knots: ctx.knots.clone(),
        lambda: ctx.lambda(),
        mvt: ctx.mvt(),
        quadrature,
        gamma,
        eta_tail,
        s0: model.s0,
        spot_range,
        measure: measure.clone(),
        slices,
    })
}

impl FsTables {
    pub fn dates(&self) -> usize {
        self.knots.len()
    }

    pub fn measure(&self) -> &ContourMeasure {
        &self.measure
    }

    /// Number of line panels kept at knot `i` (summed over lines).
    pub fn panels_at(&self, i: usize) -> usize {
        self.slices[i].lines.iter().map(|l| l.panels).sum()
    }

    /// `H_{t_i}(s)` and `ξ_{t_i}(s)` for a knot before maturity.
    pub fn claim_state(&self, i: usize, s: f64) -> ClaimState {
        self.slices[i].evaluate(s)
    }

    /// `H_{t_i}(s)`; at maturity this is the payoff itself.
    pub fn claim_value(&self, i: usize, s: f64) -> f64 {
        if i + 1 == self.knots.len() {
            self.payoff(s)
        } else {
            self.slices[i].evaluate(s).value
        }
    }

    pub fn hedge_integrand(&self, i: usize, s: f64) -> f64 {
        self.slices[i].evaluate(s).hedge
    }

    pub fn payoff(&self, s: f64) -> f64 {
        self.measure.payoff(s).unwrap_or_else(|| self.measure.evaluate(s).re)
    }

    /// Complex `H` and `ξ` summed over every atom and every node of both
    /// half-lines without truncation; the imaginary parts measure how far
    /// the tables are from conjugate pairing.
    pub fn claim_state_complex(
        &self,
        i: usize,
        s: f64,
        conjugate_gamma: &[Complex64],
        conjugate_tail: &[Complex64],
    ) -> (Complex64, Complex64) {
        let x = s.ln();
        let mut h = Complex64::new(0.0, 0.0);
        let mut g = Complex64::new(0.0, 0.0);
        for a in &self.slices[i].atoms {
            let p = spot_power(s, a.z);
            h += a.amp * p;
            g += a.gamma_amp * p / s;
        }
        for (j, node) in self.quadrature.upper().iter().enumerate() {
            let p = (node.z * x).exp();
            let w = node.weight * self.eta_tail[i][j].exp();
            h += w * p;
            g += w * self.gamma[i][j] * p / s;
            let zc = node.z.conj();
            let pc = (zc * x).exp();
            let wc = node.weight.conj() * conjugate_tail[j].exp();
            h += wc * pc;
            g += wc * conjugate_gamma[j] * pc / s;
        }
        (h, g)
    }

    /// `V₀ = H₀(s0)`.
    pub fn initial_capital(&self) -> f64 {
        self.claim_value(0, self.s0)
    }

    /// `(node, Re z, Im z, t, Re γ, Im γ, Re η-tail, Im η-tail)` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Numerical(format!("csv export failed: {e}"));
        w.write_record(["node", "re_z", "im_z", "t", "re_gamma", "im_gamma", "re_eta_tail", "im_eta_tail"])
            .map_err(io)?;
        for (j, node) in self.quadrature.upper().iter().enumerate() {
            for (i, t) in self.knots.iter().enumerate() {
                let g = self.gamma[i][j];
                let e = self.eta_tail[i][j];
                w.write_record(&[
                    j.to_string(),
                    node.z.re.to_string(),
                    node.z.im.to_string(),
                    t.to_string(),
                    g.re.to_string(),
                    g.im.to_string(),
                    e.re.to_string(),
                    e.im.to_string(),
                ])
                .map_err(io)?;
            }
        }
        w.flush().map_err(|e| Error::Numerical(format!("csv export failed: {e}")))?;
        Ok(())
    }
}
