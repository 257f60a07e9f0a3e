//! Base Lévy laws: closed-form cumulant generating functions, their real
//! domains, low-order moments, tail rescaling and exact increment sampling.

use std::fmt;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};

use crate::error::{Error, Result};

/// Vertical strip `{z : Re z ∈ (lower, upper)}` on which a cumulant
/// generating function is finite. Each end may be open or closed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DomainStrip {
    pub lower: f64,
    pub upper: f64,
    pub lower_closed: bool,
    pub upper_closed: bool,
}

impl DomainStrip {
    pub fn whole_plane() -> Self {
        Self {
            lower: f64::NEG_INFINITY,
            upper: f64::INFINITY,
            lower_closed: false,
            upper_closed: false,
        }
    }

    pub fn closed(lower: f64, upper: f64) -> Self {
        Self {
            lower,
            upper,
            lower_closed: true,
            upper_closed: true,
        }
    }

    pub fn open(lower: f64, upper: f64) -> Self {
        Self {
            lower,
            upper,
            lower_closed: false,
            upper_closed: false,
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        if x.is_nan() {
            return false;
        }
        let above = if self.lower_closed {
            x >= self.lower
        } else {
            x > self.lower
        };
        let below = if self.upper_closed {
            x <= self.upper
        } else {
            x < self.upper
        };
        above && below
    }

    /// `x` stays inside even after being pushed `margin` (relative) further
    /// away from the origin.
    pub fn contains_with_margin(&self, x: f64, margin: f64) -> bool {
        self.contains(x) && self.contains(x * (1.0 + margin))
    }

    pub fn is_whole_plane(&self) -> bool {
        self.lower == f64::NEG_INFINITY && self.upper == f64::INFINITY
    }
}

impl fmt::Display for DomainStrip {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let l = if self.lower_closed { '[' } else { ']' };
        let r = if self.upper_closed { ']' } else { '[' };
        write!(f, "{l}{}, {}{r} + iR", self.lower, self.upper)
    }
}

/// Law of the time-one marginal of a Lévy process, per unit of time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LevyLaw {
    /// Normal inverse Gaussian, `κ(z) = μz + δ(√(α²−β²) − √(α²−(β+z)²))`.
    Nig {
        alpha: f64,
        beta: f64,
        delta: f64,
        mu: f64,
    },
    /// Variance gamma, `κ(z) = μz + δ Log(α / (α − βz − z²/2))`.
    Vg {
        alpha: f64,
        beta: f64,
        delta: f64,
        mu: f64,
    },
    /// Raw (uncompensated) Poisson counts, `κ(z) = λ(e^z − 1)`.
    Poisson { intensity: f64 },
    /// `κ(z) = bz + σ²z²/2`.
    Brownian { drift: f64, sigma: f64 },
}

/// Mean, variance, skewness and excess kurtosis of the time-one marginal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
}

impl LevyLaw {
    pub fn nig(alpha: f64, beta: f64, delta: f64, mu: f64) -> Result<Self> {
        let law = LevyLaw::Nig {
            alpha,
            beta,
            delta,
            mu,
        };
        law.check()?;
        Ok(law)
    }

    pub fn vg(alpha: f64, beta: f64, delta: f64, mu: f64) -> Result<Self> {
        let law = LevyLaw::Vg {
            alpha,
            beta,
            delta,
            mu,
        };
        law.check()?;
        Ok(law)
    }

    pub fn poisson(intensity: f64) -> Result<Self> {
        let law = LevyLaw::Poisson { intensity };
        law.check()?;
        Ok(law)
    }

    pub fn brownian(drift: f64, sigma: f64) -> Result<Self> {
        let law = LevyLaw::Brownian { drift, sigma };
        law.check()?;
        Ok(law)
    }

    /// Parameter invariants of each family.
    pub fn check(&self) -> Result<()> {
        let finite = |xs: &[f64]| xs.iter().all(|x| x.is_finite());
        match *self {
            LevyLaw::Nig {
                alpha,
                beta,
                delta,
                mu,
            } => {
                if !finite(&[alpha, beta, delta, mu]) {
                    return Err(Error::Parameter("NIG parameters must be finite".into()));
                }
                if !(alpha > beta.abs()) {
                    return Err(Error::Parameter(format!(
                        "NIG requires alpha > |beta|, got alpha={alpha}, beta={beta}"
                    )));
                }
                if !(delta > 0.0) {
                    return Err(Error::Parameter(format!("NIG requires delta > 0, got {delta}")));
                }
            }
            LevyLaw::Vg {
                alpha,
                beta,
                delta,
                mu,
            } => {
                if !finite(&[alpha, beta, delta, mu]) {
                    return Err(Error::Parameter("VG parameters must be finite".into()));
                }
                if !(alpha > 0.0) {
                    return Err(Error::Parameter(format!("VG requires alpha > 0, got {alpha}")));
                }
                // negative delta gives a cumulant function with no probability law behind it
                if !(delta > 0.0) {
                    return Err(Error::Parameter(format!("VG requires delta > 0, got {delta}")));
                }
            }
            LevyLaw::Poisson { intensity } => {
                if !(intensity > 0.0 && intensity.is_finite()) {
                    return Err(Error::Parameter(format!(
                        "Poisson intensity must be positive, got {intensity}"
                    )));
                }
            }
            LevyLaw::Brownian { drift, sigma } => {
                if !finite(&[drift, sigma]) || sigma < 0.0 {
                    return Err(Error::Parameter(format!(
                        "Brownian requires finite drift and sigma >= 0, got ({drift}, {sigma})"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &'static str {
        match self {
            LevyLaw::Nig { .. } => "NIG",
            LevyLaw::Vg { .. } => "VG",
            LevyLaw::Poisson { .. } => "Poisson",
            LevyLaw::Brownian { .. } => "Brownian",
        }
    }

    pub fn domain(&self) -> DomainStrip {
        match *self {
            LevyLaw::Nig { alpha, beta, .. } => DomainStrip::closed(-alpha - beta, alpha - beta),
            LevyLaw::Vg { alpha, beta, .. } => {
                let root = (beta * beta + 2.0 * alpha).sqrt();
                DomainStrip::open(-beta - root, -beta + root)
            }
            LevyLaw::Poisson { .. } | LevyLaw::Brownian { .. } => DomainStrip::whole_plane(),
        }
    }

    /// Checked evaluation of the cumulant generating function.
    pub fn kappa(&self, z: Complex64) -> Result<Complex64> {
        let strip = self.domain();
        if !strip.contains(z.re) {
            return Err(Error::OutOfDomain { re: z.re, strip });
        }
        Ok(self.kappa_unchecked(z))
    }

    /// Cumulant generating function without the strip check. Principal
    /// branches of `sqrt` and `ln` are used throughout.
    #[inline]
    pub fn kappa_unchecked(&self, z: Complex64) -> Complex64 {
        match *self {
            LevyLaw::Nig {
                alpha,
                beta,
                delta,
                mu,
            } => {
                let a2 = alpha * alpha;
                let g0 = (a2 - beta * beta).sqrt();
                let bz = z + beta;
                let gz = (Complex64::new(a2, 0.0) - bz * bz).sqrt();
                z * mu + (Complex64::new(g0, 0.0) - gz) * delta
            }
            LevyLaw::Vg {
                alpha,
                beta,
                delta,
                mu,
            } => {
                // Re(α − βz − z²/2) > 0 inside the strip, so the principal
                // log of the denominator is continuous there
                let denom = Complex64::new(alpha, 0.0) - z * beta - z * z * 0.5;
                z * mu + (Complex64::new(alpha.ln(), 0.0) - denom.ln()) * delta
            }
            LevyLaw::Poisson { intensity } => (z.exp() - 1.0) * intensity,
            LevyLaw::Brownian { drift, sigma } => z * drift + z * z * (0.5 * sigma * sigma),
        }
    }

    /// Real-argument evaluation.
    #[inline]
    pub fn kappa_real(&self, x: f64) -> f64 {
        match *self {
            LevyLaw::Nig {
                alpha,
                beta,
                delta,
                mu,
            } => {
                let a2 = alpha * alpha;
                let g0 = (a2 - beta * beta).sqrt();
                let gx = (a2 - (beta + x) * (beta + x)).max(0.0).sqrt();
                mu * x + delta * (g0 - gx)
            }
            LevyLaw::Vg {
                alpha,
                beta,
                delta,
                mu,
            } => mu * x + delta * (alpha / (alpha - beta * x - 0.5 * x * x)).ln(),
            LevyLaw::Poisson { intensity } => intensity * x.exp_m1(),
            LevyLaw::Brownian { drift, sigma } => drift * x + 0.5 * sigma * sigma * x * x,
        }
    }

    /// First four cumulants of the time-one marginal.
    pub fn cumulants(&self) -> [f64; 4] {
        match *self {
            LevyLaw::Nig {
                alpha,
                beta,
                delta,
                mu,
            } => {
                let a2 = alpha * alpha;
                let g = (a2 - beta * beta).sqrt();
                [
                    mu + delta * beta / g,
                    delta * a2 / g.powi(3),
                    3.0 * delta * a2 * beta / g.powi(5),
                    3.0 * delta * a2 * (a2 + 4.0 * beta * beta) / g.powi(7),
                ]
            }
            LevyLaw::Vg {
                alpha,
                beta,
                delta,
                mu,
            } => {
                // X = μ + βG + √G·N with G ~ Gamma(δ, rate α); cumulants of G
                // are δ(n−1)!/αⁿ, composed with w(z) = βz + z²/2
                let g1 = delta / alpha;
                let g2 = delta / alpha.powi(2);
                let g3 = 2.0 * delta / alpha.powi(3);
                let g4 = 6.0 * delta / alpha.powi(4);
                let b = beta;
                [
                    mu + g1 * b,
                    g2 * b * b + g1,
                    g3 * b.powi(3) + 3.0 * g2 * b,
                    g4 * b.powi(4) + 6.0 * g3 * b * b + 3.0 * g2,
                ]
            }
            LevyLaw::Poisson { intensity } => [intensity; 4],
            LevyLaw::Brownian { drift, sigma } => [drift, sigma * sigma, 0.0, 0.0],
        }
    }

    pub fn moments(&self) -> Moments {
        let [k1, k2, k3, k4] = self.cumulants();
        let (skewness, excess_kurtosis) = if k2 > 0.0 {
            (k3 / k2.powf(1.5), k4 / (k2 * k2))
        } else {
            (0.0, 0.0)
        };
        Moments {
            mean: k1,
            variance: k2,
            skewness,
            excess_kurtosis,
        }
    }

    /// Multiply the NIG tail parameter α by `factor` and re-solve β, δ, μ so
    /// that mean, variance and skewness are unchanged.
    ///
    /// With α fixed, variance and skewness give
    /// `S·√V·(α² − β²) = 3β`, a quadratic in β whose root in `(−α, α)` is
    /// taken in its cancellation-free form; δ and μ then follow directly.
    pub fn rescale_tails(&self, factor: f64) -> Result<LevyLaw> {
        let LevyLaw::Nig { alpha, .. } = *self else {
            return Err(Error::Parameter(format!(
                "tail rescaling applies to NIG laws only, got {}",
                self.name()
            )));
        };
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(Error::Parameter(format!(
                "tail factor must be positive, got {factor}"
            )));
        }
        let m = self.moments();
        let new_alpha = factor * alpha;
        let c = m.skewness * m.variance.sqrt();
        let a2 = new_alpha * new_alpha;
        let new_beta = 2.0 * c * a2 / (3.0 + (9.0 + 4.0 * c * c * a2).sqrt());
        if !(new_beta.abs() < new_alpha) {
            return Err(Error::Parameter(format!(
                "skewness {} unattainable with alpha = {new_alpha}",
                m.skewness
            )));
        }
        let g = (a2 - new_beta * new_beta).sqrt();
        let new_delta = m.variance * g.powi(3) / a2;
        let new_mu = m.mean - new_delta * new_beta / g;
        LevyLaw::nig(new_alpha, new_beta, new_delta, new_mu)
    }

    /// One draw of the increment over `dt`.
    pub fn sample_increment<R: Rng + ?Sized>(&self, dt: f64, rng: &mut R) -> f64 {
        debug_assert!(dt > 0.0);
        match *self {
            LevyLaw::Nig {
                alpha,
                beta,
                delta,
                mu,
            } => {
                let g = (alpha * alpha - beta * beta).sqrt();
                let scale = delta * dt;
                let v = sample_inverse_gaussian(scale / g, scale * scale, rng);
                let n: f64 = rng.sample(StandardNormal);
                mu * dt + beta * v + v.sqrt() * n
            }
            LevyLaw::Vg {
                alpha,
                beta,
                delta,
                mu,
            } => {
                let gamma = Gamma::new(delta * dt, 1.0 / alpha).expect("validated VG parameters");
                let v: f64 = gamma.sample(rng);
                let n: f64 = rng.sample(StandardNormal);
                mu * dt + beta * v + v.sqrt() * n
            }
            LevyLaw::Poisson { intensity } => {
                let p = Poisson::new(intensity * dt).expect("validated intensity");
                p.sample(rng)
            }
            LevyLaw::Brownian { drift, sigma } => {
                let n: f64 = rng.sample(StandardNormal);
                drift * dt + sigma * dt.sqrt() * n
            }
        }
    }
}

/// Michael–Schucany–Haas transform for the inverse Gaussian law with the
/// given mean and shape.
pub fn sample_inverse_gaussian<R: Rng + ?Sized>(mean: f64, shape: f64, rng: &mut R) -> f64 {
    let n: f64 = rng.sample(StandardNormal);
    let y = mean * n * n;
    // mean + mean/(2·shape)·(y − √(4·shape·y + y²)), rearranged to avoid
    // cancellation when y ≫ shape
    let root = (4.0 * shape * y + y * y).sqrt();
    let x = mean - 2.0 * mean * y / (y + root);
    let x = if x > 0.0 { x } else { f64::MIN_POSITIVE };
    let u: f64 = rng.gen();
    if u * (mean + x) <= mean {
        x
    } else {
        mean * mean / x
    }
}
