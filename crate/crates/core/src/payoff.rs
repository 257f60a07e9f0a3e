//! European payoffs written as `f(s) = ∫ s^z Π(dz)` for a finite complex
//! measure `Π` made of atoms and vertical lines, and the truncated
//! Gauss-Legendre discretisation of those lines.

use std::f64::consts::PI;

use num_complex::Complex64;

use rayon::prelude::*;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::model::AdditiveModel;
use crate::quadrature::{integrate_adaptive, GaussLegendre};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PayoffKind {
    Call,
    Put,
}

impl PayoffKind {
    pub fn default_abscissa(self) -> f64 {
        match self {
            PayoffKind::Call => 0.5,
            PayoffKind::Put => -1.0,
        }
    }

    pub fn payoff(self, strike: f64, s: f64) -> f64 {
        match self {
            PayoffKind::Call => (s - strike).max(0.0),
            PayoffKind::Put => (strike - s).max(0.0),
        }
    }

    pub fn abscissa_is_valid(self, r: f64) -> bool {
        match self {
            PayoffKind::Call => r > 0.0 && r < 1.0,
            PayoffKind::Put => r < 0.0 && r.is_finite(),
        }
    }
}

/// The line `Re z = abscissa` carrying `Π(dz) = K^{1−z}/(2πi·z(z−1)) dz`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerticalLine {
    pub abscissa: f64,
    pub strike: f64,
}

impl VerticalLine {
    pub fn point(&self, u: f64) -> Complex64 {
        Complex64::new(self.abscissa, u)
    }

    /// Density of `Π` against `du` at `z = R + iu`: `K^{1−z}/(2π·z(z−1))`.
    #[inline]
    pub fn density(&self, u: f64) -> Complex64 {
        let z = self.point(u);
        let k_pow = ((1.0 - z) * self.strike.ln()).exp();
        k_pow / (z * (z - 1.0) * (2.0 * PI))
    }

    /// `sup_{|u| ≥ u0} |density|`, using `|z(z−1)| ≥ u²`.
    fn density_bound(&self, u0: f64) -> f64 {
        self.strike.powf(1.0 - self.abscissa) / (2.0 * PI * u0 * u0)
    }
}

/// Finite complex measure `Π`: atoms `(z, w)` plus vertical lines.
#[derive(Debug, Clone, PartialEq)]
pub struct ContourMeasure {
    pub atoms: Vec<(Complex64, Complex64)>,
    pub lines: Vec<VerticalLine>,
    kind: Option<(PayoffKind, f64)>,
}

impl ContourMeasure {
    /// Atoms and lines with a conjugate-symmetric atom set, so the
    /// represented payoff is real.
    pub fn new(atoms: Vec<(Complex64, Complex64)>, lines: Vec<VerticalLine>) -> Result<Self> {
        for &(z, w) in &atoms {
            if !(z.re.is_finite() && z.im.is_finite() && w.re.is_finite() && w.im.is_finite()) {
                return Err(Error::Parameter("atoms must be finite".into()));
            }
            let partner = atoms
                .iter()
                .any(|&(y, v)| y == z.conj() && v == w.conj());
            if !partner {
                return Err(Error::Parameter(format!(
                    "atom at {z} has no conjugate partner"
                )));
            }
        }
        for line in &lines {
            if !(line.strike > 0.0) || !line.abscissa.is_finite() {
                return Err(Error::Parameter(format!("bad line {line:?}")));
            }
            if line.abscissa == 0.0 || line.abscissa == 1.0 {
                return Err(Error::Parameter("line passes through a pole".into()));
            }
        }
        Ok(Self {
            atoms,
            lines,
            kind: None,
        })
    }

    /// `(s − K)_+ = s + (1/2πi)∫_{R−i∞}^{R+i∞} s^z K^{1−z}/(z(z−1)) dz`, `0 < R < 1`.
    pub fn call(strike: f64, abscissa: f64) -> Result<Self> {
        Self::vanilla(PayoffKind::Call, strike, abscissa)
    }

    /// `(K − s)_+ = (1/2πi)∫_{R−i∞}^{R+i∞} s^z K^{1−z}/(z(z−1)) dz`, `R < 0`.
    pub fn put(strike: f64, abscissa: f64) -> Result<Self> {
        Self::vanilla(PayoffKind::Put, strike, abscissa)
    }

    pub fn vanilla(kind: PayoffKind, strike: f64, abscissa: f64) -> Result<Self> {
        if !(strike > 0.0 && strike.is_finite()) {
            return Err(Error::Parameter(format!("strike must be positive, got {strike}")));
        }
        if !kind.abscissa_is_valid(abscissa) {
            return Err(Error::Parameter(format!(
                "abscissa {abscissa} not admissible for a {kind:?}"
            )));
        }
        let atoms = match kind {
            PayoffKind::Call => vec![(Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0))],
            PayoffKind::Put => Vec::new(),
        };
        Ok(Self {
            atoms,
            lines: vec![VerticalLine { abscissa, strike }],
            kind: Some((kind, strike)),
        })
    }

    /// `Π = w·δ_z` for a real `z`: the claim `w·S_T^z`.
    pub fn atom(z: f64, weight: f64) -> Self {
        Self {
            atoms: vec![(Complex64::new(z, 0.0), Complex64::new(weight, 0.0))],
            lines: Vec::new(),
            kind: None,
        }
    }

    pub fn kind(&self) -> Option<(PayoffKind, f64)> {
        self.kind
    }

    pub fn strike(&self) -> Option<f64> {
        self.kind.map(|(_, k)| k)
    }

    /// Natural currency scale for tolerances.
    pub fn scale(&self) -> f64 {
        self.lines
            .iter()
            .map(|l| l.strike)
            .fold(None, |acc: Option<f64>, k| Some(acc.map_or(k, |a| a.max(k))))
            .unwrap_or(1.0)
    }

    /// `I₀`: real parts of the support.
    pub fn real_support(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self
            .atoms
            .iter()
            .map(|a| a.0.re)
            .chain(self.lines.iter().map(|l| l.abscissa))
            .collect();
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }

    /// Exact payoff for call/put measures.
    pub fn payoff(&self, s: f64) -> Option<f64> {
        self.kind.map(|(kind, k)| kind.payoff(k, s))
    }

    /// `∫ s^z Π(dz)` evaluated directly: panels on `|u| ≤ 2·10⁴` plus the
    /// leading `−1/u²` term of the line density integrated analytically
    /// beyond that.
    pub fn evaluate(&self, s: f64) -> Complex64 {
        let x = s.ln();
        let mut total: Complex64 = self
            .atoms
            .iter()
            .map(|&(z, w)| w * spot_power(s, z))
            .sum();
        let cutoff = 2.0e4;
        let rule = GaussLegendre::new(16);
        for line in &self.lines {
            let a = (s / line.strike).ln();
            let width = 2.0 / a.abs().max(1.0);
            let panels = (cutoff / width).ceil() as usize;
            let width = cutoff / panels as f64;
            let mut acc = Complex64::new(0.0, 0.0);
            for p in 0..panels {
                let (lo, hi) = (p as f64 * width, (p + 1) as f64 * width);
                for (u, w) in rule.mapped(lo, hi) {
                    let up = line.density(u) * (line.point(u) * x).exp();
                    let down = line.density(-u) * (line.point(-u) * x).exp();
                    acc += (up + down) * w;
                }
            }
            let amplitude = line.strike * (s / line.strike).powf(line.abscissa) / PI;
            acc -= amplitude * cosine_tail(a, cutoff);
            total += acc;
        }
        total
    }
}

/// `∫_U^∞ cos(a v)/v² dv = cos(aU)/U − |a|·(π/2 − Si(|a|U))`, where
/// `π/2 − Si(x) = f(x)·cos x + g(x)·sin x` with the auxiliary functions
/// `f(x) = ∫_0^∞ e^{−xt}/(1+t²) dt` and `g(x) = ∫_0^∞ t·e^{−xt}/(1+t²) dt`.
fn cosine_tail(a: f64, u: f64) -> f64 {
    let a = a.abs();
    let head = (a * u).cos() / u;
    if a == 0.0 {
        return head;
    }
    let x = a * u;
    // substitute s = x t, so both integrands decay like e^{−s}
    let fg = integrate_adaptive(0.0, 60.0, 1e-13, |s| {
        let t = s / x;
        let damp = (-s).exp() / (1.0 + t * t);
        Complex64::new(damp, t * damp)
    }) / x;
    head - a * (fg.re * x.cos() + fg.im * x.sin())
}

/// `s^z`, exact for real exponents so integer atoms reproduce `s` bitwise.
#[inline]
pub fn spot_power(s: f64, z: Complex64) -> Complex64 {
    if z.im == 0.0 {
        Complex64::new(s.powf(z.re), 0.0)
    } else {
        (z * s.ln()).exp()
    }
}

/// Pick the line abscissa for a call or put so that `2R·l` stays inside the
/// driver's strip (with a 5% margin) for every loading value.
pub fn choose_abscissa(
    kind: PayoffKind,
    model: &AdditiveModel,
    requested: Option<f64>,
) -> Result<f64> {
    let strip = model.effective_domain();
    let admissible = |r: f64| strip.contains_with_margin(2.0 * r, 0.05);
    let mut r = requested.unwrap_or(kind.default_abscissa());
    if !kind.abscissa_is_valid(r) {
        return Err(Error::Parameter(format!(
            "abscissa {r} not admissible for a {kind:?}"
        )));
    }
    for _ in 0..64 {
        if admissible(r) {
            return Ok(r);
        }
        r = match kind {
            PayoffKind::Call => 0.5 * (r + 0.5),
            PayoffKind::Put => 0.5 * r,
        };
    }
    Err(Error::Admissibility(format!(
        "no {kind:?} abscissa keeps 2R·l inside {strip}"
    )))
}

/// Check the admissibility set: `2I₀ ∪ {2}` and `I₀ + 1` inside the
/// model's effective strip.
pub fn check_admissible(measure: &ContourMeasure, model: &AdditiveModel) -> Result<()> {
    let strip = model.effective_domain();
    let support = measure.real_support();
    let mut points: Vec<f64> = support.iter().map(|x| 2.0 * x).collect();
    points.push(2.0);
    points.extend(support.iter().map(|x| x + 1.0));
    for p in points {
        if !strip.contains(p) {
            return Err(Error::Admissibility(format!(
                "{p} lies outside the effective strip {strip}"
            )));
        }
    }
    Ok(())
}

/// What the contour discretisation is converged against. Targets must be
/// conjugate-symmetric, `t(z̄) = conj t(z)`, so only the upper half of each
/// line is evaluated.
pub trait ContourTarget: Sync {
    /// Number of scalar quantities `∫ t_k dΠ` that must all converge.
    fn probes(&self) -> usize {
        1
    }
    /// Per-node factors `t_k(z)`, written into `out` (length `probes()`).
    fn transfer(&self, z: Complex64, out: &mut [Complex64]);
    /// Upper bound of `|t_k(z)|` over every later use of the quadrature;
    /// drives the truncation point.
    fn envelope(&self, z: Complex64) -> f64;
}

/// Undamped reconstruction at a fixed spot.
#[derive(Debug, Clone, Copy)]
pub struct SpotTarget {
    pub spot: f64,
}

impl ContourTarget for SpotTarget {
    fn transfer(&self, z: Complex64, out: &mut [Complex64]) {
        out[0] = (z * self.spot.ln()).exp();
    }

    fn envelope(&self, z: Complex64) -> f64 {
        self.spot.powf(z.re)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DiscretizeOptions {
    /// Tolerance relative to the measure's scale (the strike).
    pub tol: f64,
    pub gl_order: usize,
    /// Initial panel width in `u`; halved on each refinement.
    pub panel_width: f64,
    pub max_nodes: usize,
}

impl Default for DiscretizeOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            gl_order: 16,
            panel_width: 8.0,
            max_nodes: 1 << 20,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadNode {
    pub z: Complex64,
    /// `Π`-density times quadrature weight.
    pub weight: Complex64,
}

/// Where one line's nodes sit in the upper-half node list: node
/// `offset + p·G + k` lies at `u = p·width + local_nodes[k]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineLayout {
    pub abscissa: f64,
    pub strike: f64,
    pub offset: usize,
    pub panels: usize,
}

/// Discretised `Π`: exact atoms plus line nodes on equal-width
/// Gauss-Legendre panels. Only the `Im z > 0` half is stored; the other half
/// is its conjugate.
#[derive(Debug, Clone, PartialEq)]
pub struct ContourQuadrature {
    pub atoms: Vec<(Complex64, Complex64)>,
    upper: Vec<QuadNode>,
    pub lines: Vec<LineLayout>,
    /// Gauss-Legendre nodes mapped to `[0, panel_width]`.
    pub local_nodes: Vec<f64>,
    pub u_max: f64,
    pub panel_width: f64,
}

impl ContourQuadrature {
    /// Nodes with `Im z > 0`, ordered by line, then panel, then local node.
    pub fn upper(&self) -> &[QuadNode] {
        &self.upper
    }

    /// Every line node: the upper half followed by its conjugates.
    pub fn nodes(&self) -> impl Iterator<Item = QuadNode> + '_ {
        self.upper.iter().copied().chain(self.upper.iter().map(|n| QuadNode {
            z: n.z.conj(),
            weight: n.weight.conj(),
        }))
    }

    pub fn len(&self) -> usize {
        2 * self.upper.len()
    }

    pub fn is_empty(&self) -> bool {
        self.upper.is_empty()
    }

    pub fn gl_order(&self) -> usize {
        self.local_nodes.len()
    }

    /// `Σ w·t(z)` over atoms and all nodes, summed in full complex arithmetic.
    pub fn integrate<F: Fn(Complex64) -> Complex64>(&self, f: F) -> Complex64 {
        let atoms: Complex64 = self.atoms.iter().map(|&(z, w)| w * f(z)).sum();
        atoms + self.nodes().map(|n| n.weight * f(n.z)).sum::<Complex64>()
    }

    /// Payoff reconstruction `Σ w_j s^{z_j}` (+ atoms).
    pub fn reconstruct(&self, s: f64) -> Complex64 {
        let x = s.ln();
        self.integrate(|z| (z * x).exp())
    }

    /// `[0, u_max]` split into equal panels no wider than `panel_width`, the
    /// same split on every line.
    pub fn from_panels(
        measure: &ContourMeasure,
        u_max: f64,
        panel_width: f64,
        gl_order: usize,
    ) -> Self {
        let rule = GaussLegendre::new(gl_order);
        let panels = (u_max / panel_width).ceil().max(1.0) as usize;
        let width = u_max / panels as f64;
        let local: Vec<(f64, f64)> = rule.mapped(0.0, width).collect();
        let mut upper = Vec::with_capacity(measure.lines.len() * panels * gl_order);
        let mut lines = Vec::with_capacity(measure.lines.len());
        for line in &measure.lines {
            lines.push(LineLayout {
                abscissa: line.abscissa,
                strike: line.strike,
                offset: upper.len(),
                panels,
            });
            for p in 0..panels {
                let base = p as f64 * width;
                for &(c, w) in &local {
                    let u = base + c;
                    upper.push(QuadNode {
                        z: line.point(u),
                        weight: line.density(u) * w,
                    });
                }
            }
        }
        Self {
            atoms: measure.atoms.clone(),
            upper,
            lines,
            local_nodes: local.iter().map(|p| p.0).collect(),
            u_max,
            panel_width: width,
        }
    }
}

fn probe_values<T: ContourTarget + ?Sized>(quad: &ContourQuadrature, target: &T) -> Vec<f64> {
    let k = target.probes();
    let mut total = vec![0.0; k];
    let mut buf = vec![Complex64::new(0.0, 0.0); k];
    for &(z, w) in &quad.atoms {
        target.transfer(z, &mut buf);
        for (t, b) in total.iter_mut().zip(&buf) {
            *t += (w * b).re;
        }
    }
    let lines = quad
        .upper()
        .par_iter()
        .fold(
            || (vec![Complex64::new(0.0, 0.0); k], vec![Complex64::new(0.0, 0.0); k]),
            |(mut acc, mut buf), node| {
                target.transfer(node.z, &mut buf);
                for (a, b) in acc.iter_mut().zip(&buf) {
                    *a += node.weight * b;
                }
                (acc, buf)
            },
        )
        .map(|(acc, _)| acc)
        .reduce(
            || vec![Complex64::new(0.0, 0.0); k],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(&b) {
                    *x += y;
                }
                a
            },
        );
    for (t, l) in total.iter_mut().zip(&lines) {
        *t += 2.0 * l.re;
    }
    total
}

/// Truncate each line where the tail bound `2·∫_U^∞ |g|·envelope` falls
/// below half the tolerance, then halve the panel width until two
/// successive estimates of every probe differ by less than the tolerance.
pub fn discretize<T: ContourTarget + ?Sized>(
    measure: &ContourMeasure,
    target: &T,
    options: &DiscretizeOptions,
) -> Result<ContourQuadrature> {
    if !(options.tol > 0.0) || !(options.panel_width > 0.0) || options.gl_order == 0 {
        return Err(Error::Parameter(format!("bad discretisation options {options:?}")));
    }
    let tol = options.tol * measure.scale();
    if measure.lines.is_empty() {
        return Ok(ContourQuadrature::from_panels(
            measure,
            options.panel_width,
            options.panel_width,
            options.gl_order,
        ));
    }

    let limit = options.max_nodes as f64 * options.panel_width
        / (options.gl_order * 2 * measure.lines.len()) as f64;
    let mut u_max: f64 = 0.0;
    for line in &measure.lines {
        let tail = |u: f64| {
            let env = [1.0, 1.5, 2.0, 4.0]
                .iter()
                .map(|f| target.envelope(line.point(f * u)))
                .fold(0.0, f64::max);
            // both half-lines: 2·∫_u^∞ K^{1−R}/(2πv²) dv · env
            2.0 * env * line.density_bound(u) * u
        };
        let mut u = options.panel_width;
        while tail(u) > 0.5 * tol {
            u *= 2.0;
            if u > limit {
                return Err(Error::Quadrature(format!(
                    "line at R = {} needs more than {} nodes to truncate at tol {tol:e}",
                    line.abscissa, options.max_nodes
                )));
            }
        }
        let (mut lo, mut hi) = (0.5 * u, u);
        if tail(lo) > 0.5 * tol {
            for _ in 0..30 {
                let mid = 0.5 * (lo + hi);
                if tail(mid) > 0.5 * tol {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            u = hi;
        }
        u_max = u_max.max(u);
    }

    let mut width = options.panel_width;
    let mut quad = ContourQuadrature::from_panels(measure, u_max, width, options.gl_order);
    let mut estimate = probe_values(&quad, target);
    loop {
        width *= 0.5;
        let finer = ContourQuadrature::from_panels(measure, u_max, width, options.gl_order);
        if finer.len() > options.max_nodes {
            return Err(Error::Quadrature(format!(
                "panel refinement did not converge within {} nodes",
                options.max_nodes
            )));
        }
        let next = probe_values(&finer, target);
        let change = next
            .iter()
            .zip(&estimate)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        estimate = next;
        quad = finer;
        if change < tol {
            return Ok(quad);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy::LevyLaw;

    #[test]
    fn call_reconstruction_at_reference_points() {
        let k = 100.0;
        let call = ContourMeasure::call(k, 0.5).unwrap();
        assert!(call.evaluate(k).re.abs() < 1e-6 * k);
        assert!((call.evaluate(2.0 * k).re - k).abs() < 1e-6 * k);
        assert!(call.evaluate(1e-3).re.abs() < 1e-6 * k);
    }

    #[test]
    fn put_reconstruction_and_parity() {
        let k = 80.0;
        let put = ContourMeasure::put(k, -1.0).unwrap();
        let call = ContourMeasure::call(k, 0.5).unwrap();
        assert!(put.evaluate(k).re.abs() < 1e-6 * k);
        assert!((put.evaluate(0.5 * k).re - 0.5 * k).abs() < 1e-6 * k);
        for s in [30.0, 75.0, 80.0, 99.0, 250.0] {
            let parity = call.evaluate(s).re - put.evaluate(s).re;
            assert!((parity - (s - k)).abs() < 2e-6 * k, "s={s}");
        }
    }

    #[test]
    fn constructors_reject_bad_abscissas() {
        assert!(ContourMeasure::call(100.0, 1.2).is_err());
        assert!(ContourMeasure::call(100.0, 0.0).is_err());
        assert!(ContourMeasure::put(100.0, 0.0).is_err());
        assert!(ContourMeasure::put(-1.0, -1.0).is_err());
        let z = Complex64::new(0.5, 1.0);
        assert!(ContourMeasure::new(vec![(z, Complex64::new(1.0, 0.0))], vec![]).is_err());
    }

    #[test]
    fn abscissa_defaults_and_shrinking() {
        let poisson = AdditiveModel::levy(LevyLaw::poisson(1.0).unwrap(), 1.0, 1.0);
        assert_eq!(choose_abscissa(PayoffKind::Call, &poisson, None).unwrap(), 0.5);
        assert_eq!(choose_abscissa(PayoffKind::Put, &poisson, None).unwrap(), -1.0);

        let nig = AdditiveModel::two_factor(
            LevyLaw::nig(15.81, -1.581, 15.57, 1.56).unwrap(),
            0.5747,
            3.0,
            0.25,
            0.0,
            0.25,
            100.0,
        );
        assert_eq!(choose_abscissa(PayoffKind::Put, &nig, None).unwrap(), -1.0);

        // strip [-1.5, 2.5]: R=-1 gives 2R=-2 outside, shrinks to -0.5
        let narrow = AdditiveModel::levy(LevyLaw::nig(2.0, -0.5, 1.0, 0.0).unwrap(), 1.0, 1.0);
        assert_eq!(choose_abscissa(PayoffKind::Put, &narrow, None).unwrap(), -0.5);

        // strip [-0.4, 0.4]: even the call midpoint fails
        let tiny = AdditiveModel::levy(LevyLaw::nig(0.4, 0.0, 1.0, 0.0).unwrap(), 1.0, 1.0);
        assert!(matches!(
            choose_abscissa(PayoffKind::Call, &tiny, None),
            Err(Error::Admissibility(_))
        ));
    }

    #[test]
    fn quadrature_nodes_are_conjugate_closed() {
        let call = ContourMeasure::call(100.0, 0.5).unwrap();
        let q = discretize(&call, &SpotTarget { spot: 100.0 }, &DiscretizeOptions {
            tol: 1e-3,
            ..Default::default()
        })
        .unwrap();
        let nodes: Vec<QuadNode> = q.nodes().collect();
        let half = q.upper().len();
        for j in 0..half {
            assert_eq!(nodes[j + half].z, nodes[j].z.conj());
            assert_eq!(nodes[j + half].weight, nodes[j].weight.conj());
            assert!(nodes[j].z.im > 0.0);
        }
        let v = q.reconstruct(130.0);
        assert!(v.im.abs() <= 1e-12 * v.re.abs().max(1.0));
    }

    #[test]
    fn atom_only_measure() {
        let m = ContourMeasure::atom(1.0, 1.0);
        let q = discretize(&m, &SpotTarget { spot: 5.0 }, &Default::default()).unwrap();
        assert!(q.is_empty());
        assert!((q.reconstruct(5.0).re - 5.0).abs() < 1e-15);
    }

    #[test]
    fn cosine_tail_matches_direct_integration() {
        let (a, u) = (0.7, 50.0);
        // direct: integrate cos(a v)/v² on [u, u + 2000] and add the crude 1/(u+2000) remainder
        let far = u + 20_000.0;
        let direct = integrate_adaptive(u, far, 1e-12, |v| Complex64::new((a * v).cos() / (v * v), 0.0)).re;
        let exact = cosine_tail(a, u);
        let remainder = cosine_tail(a, far);
        assert!((direct + remainder - exact).abs() < 1e-10);
        assert!((cosine_tail(0.0, u) - 1.0 / u).abs() < 1e-15);
    }
}
