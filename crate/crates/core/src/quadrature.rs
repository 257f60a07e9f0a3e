//! Gauss-Legendre rules, adaptive panel integration of complex integrands
//! and trapezoidal accumulation on a fixed grid.

use num_complex::Complex64;

/// Gauss-Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Nodes are the roots of `P_n`, located by Newton iteration from the
    /// Chebyshev-like initial guess.
    pub fn new(order: usize) -> Self {
        assert!(order >= 1, "Gauss-Legendre order must be positive");
        let n = order;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    /// Nodes and weights mapped to `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (mid + half * x, half * w))
    }

    pub fn integrate<F>(&self, a: f64, b: f64, mut f: F) -> Complex64
    where
        F: FnMut(f64) -> Complex64,
    {
        self.mapped(a, b).map(|(x, w)| f(x) * w).sum()
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p, d)
}

/// Adaptive bisection with a 10-point Gauss-Legendre panel rule. A panel is
/// accepted when the sum over its two halves agrees with the whole-panel
/// estimate to `rel_tol` (or an absolute floor relative to the running total).
pub fn integrate_adaptive<F>(a: f64, b: f64, rel_tol: f64, f: F) -> Complex64
where
    F: Fn(f64) -> Complex64,
{
    if a == b {
        return Complex64::new(0.0, 0.0);
    }
    let rule = GaussLegendre::new(10);
    let whole = rule.integrate(a, b, &f);
    let scale = whole.norm().max(f64::MIN_POSITIVE);
    adaptive_panel(&rule, a, b, whole, rel_tol, scale, 0, &f)
}

#[allow(clippy::too_many_arguments)]
fn adaptive_panel<F>(
    rule: &GaussLegendre,
    a: f64,
    b: f64,
    whole: Complex64,
    rel_tol: f64,
    scale: f64,
    depth: usize,
    f: &F,
) -> Complex64
where
    F: Fn(f64) -> Complex64,
{
    let mid = 0.5 * (a + b);
    let left = rule.integrate(a, mid, f);
    let right = rule.integrate(mid, b, f);
    let refined = left + right;
    let err = (refined - whole).norm();
    if depth >= 40 || err <= rel_tol * refined.norm().max(1e-3 * scale) {
        return refined;
    }
    adaptive_panel(rule, a, mid, left, rel_tol, scale, depth + 1, f)
        + adaptive_panel(rule, mid, b, right, rel_tol, scale, depth + 1, f)
}

/// Cumulative trapezoid: `out[i] = ∫_{t_0}^{t_i} f`.
pub fn cumulative_trapezoid<T>(times: &[f64], values: &[T]) -> Vec<T>
where
    T: Copy + std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T> + Default,
{
    debug_assert_eq!(times.len(), values.len());
    let mut out = Vec::with_capacity(times.len());
    let mut acc = T::default();
    out.push(acc);
    for i in 1..times.len() {
        let h = times[i] - times[i - 1];
        acc = acc + (values[i - 1] + values[i]) * (0.5 * h);
        out.push(acc);
    }
    out
}

/// Backward trapezoid: `out[i] = ∫_{t_i}^{t_last} f`, with `out[last] = 0`.
pub fn tail_trapezoid<T>(times: &[f64], values: &[T]) -> Vec<T>
where
    T: Copy + std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T> + Default,
{
    debug_assert_eq!(times.len(), values.len());
    let n = times.len();
    let mut out = vec![T::default(); n];
    let mut acc = T::default();
    for i in (0..n.saturating_sub(1)).rev() {
        let h = times[i + 1] - times[i];
        acc = acc + (values[i] + values[i + 1]) * (0.5 * h);
        out[i] = acc;
    }
    out
}
