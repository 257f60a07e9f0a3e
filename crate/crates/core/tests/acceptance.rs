//! One PASS/FAIL line per acceptance criterion. Criteria listed in
//! `UNATTAINABLE` are reported but do not fail the run.

use std::process::ExitCode;
use std::time::Instant;

use num_complex::Complex64;

use fshedge::error_variance::{beta, hedging_error_variance, ErrorOptions};
use fshedge::fs::{build_tables, eta_density, gamma, TableOptions, TimeContext};
use fshedge::hedge::{bs_price, strike_sweep, HedgeExperiment, Strategy, StrategyResult};
use fshedge::levy::LevyLaw;
use fshedge::model::{AdditiveModel, PiecewiseLinear, TimeGrid};
use fshedge::payoff::{ContourMeasure, PayoffKind};

/// The rounded published NIG parameters have mean −0.0039, outside ±1e−3.
const UNATTAINABLE: &[usize] = &[1];

const S0: f64 = 100.0;
const T: f64 = 0.25;

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn base_law() -> LevyLaw {
    LevyLaw::nig(38.46, -3.85, 6.40, 0.64).unwrap()
}

fn nig_model(c: f64) -> AdditiveModel {
    AdditiveModel::levy(base_law().rescale_tails(c).unwrap(), T, S0)
}

fn electricity() -> AdditiveModel {
    let law = LevyLaw::nig(15.81, -1.581, 15.57, 1.56).unwrap();
    AdditiveModel::two_factor(law, 0.5747, 3.0, T, 0.0, T, S0)
}

fn time_change() -> AdditiveModel {
    let psi = PiecewiseLinear::new(vec![(0.0, 0.0), (0.1, 0.02), (0.25, 0.05)]).unwrap();
    AdditiveModel::time_changed_gaussian(psi, T, S0)
}

fn experiment(model: AdditiveModel, payoff: ContourMeasure, n: usize, m: usize, keep: bool) -> HedgeExperiment {
    let strategies = if payoff.kind().is_some() {
        vec![Strategy::VarianceOptimal, Strategy::BlackScholes]
    } else {
        vec![Strategy::VarianceOptimal]
    };
    HedgeExperiment {
        model,
        payoff,
        rebalances: n,
        refinement: m,
        paths: 5000,
        seed: 2024,
        strategies,
        keep_errors: keep,
        tables: TableOptions::default(),
    }
}

fn within(x: f64, target: f64, tol: f64) -> bool {
    (x - target).abs() <= tol
}

/// Standard error of a sample standard deviation from the sample kurtosis.
fn std_stderr(errors: &[f64]) -> f64 {
    let n = errors.len() as f64;
    let mean = errors.iter().sum::<f64>() / n;
    let m2 = errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n;
    let m4 = errors.iter().map(|e| (e - mean).powi(4)).sum::<f64>() / n;
    let kurt = m4 / (m2 * m2);
    m2.sqrt() * ((kurt - 1.0) / (4.0 * n)).sqrt()
}

fn criterion_1() -> Outcome {
    let m = base_law().moments();
    let checks = [
        within(m.mean, 0.0, 1e-3),
        within(m.variance, 0.1681, 0.002),
        within(m.skewness, -0.02, 0.005),
        within(m.excess_kurtosis, 0.01, 0.005),
    ];
    outcome(
        checks.iter().all(|&c| c),
        format!(
            "mean {:.5} var {:.5} skew {:.5} exkurt {:.5} (in tolerance: {:?})",
            m.mean, m.variance, m.skewness, m.excess_kurtosis, checks
        ),
    )
}

fn criterion_2() -> Outcome {
    let cs = [0.08, 0.14, 0.2, 1.0, 2.0];
    let alphas = [3.08, 5.38, 7.69, 38.46, 76.92];
    let kurts = [1.87, 0.61, 0.30, 0.01, 0.004];
    let mut ok = true;
    let mut rows = Vec::new();
    for i in 0..cs.len() {
        let law = base_law().rescale_tails(cs[i]).unwrap();
        let LevyLaw::Nig { alpha, .. } = law else { unreachable!() };
        let k = law.moments().excess_kurtosis;
        ok &= within(alpha, alphas[i], 0.01) && within(k, kurts[i], 0.02);
        rows.push(format!("C={} α={alpha:.3} κ4={k:.4}", cs[i]));
    }
    outcome(ok, rows.join("; "))
}

fn criterion_3() -> Outcome {
    let sigma = base_law().moments().variance.sqrt();
    let p = bs_price(PayoffKind::Call, S0, 99.0, sigma, T);
    outcome(within(p, 8.65, 0.05), format!("BS capital {p:.4} (σ_BS = {sigma:.4})"))
}

fn criterion_4() -> Outcome {
    let rows = strike_sweep(&nig_model(0.08), PayoffKind::Call, &[99.0, 150.0], None, &TableOptions::default()).unwrap();
    let r99 = rows[0].bs_capital / rows[0].vo_capital;
    let r150 = rows[1].bs_capital / rows[1].vo_capital;
    let ok = within(r99, 1.22, 0.04) && within(rows[1].bs_capital, 0.23, 0.02) && within(r150, 0.57, 0.06);
    outcome(
        ok,
        format!(
            "K=99: V0_VO {:.4} V0_BS {:.4} ratio {r99:.4}; K=150: V0_VO {:.4} V0_BS {:.4} ratio {r150:.4}",
            rows[0].vo_capital, rows[0].bs_capital, rows[1].vo_capital, rows[1].bs_capital
        ),
    )
}

fn criterion_5() -> Outcome {
    let models = [
        ("poisson", AdditiveModel::levy(LevyLaw::poisson(2.0).unwrap(), T, S0)),
        ("time-change", time_change()),
    ];
    let mut ok = true;
    let mut worst = 0.0f64;
    for (_, model) in &models {
        for k in [80.0, 99.0, 120.0] {
            let j0 = hedging_error_variance(model, &ContourMeasure::call(k, 0.5).unwrap(), &ErrorOptions::default())
                .unwrap()
                .value;
            ok &= j0.abs() <= 1e-8 * k * k;
            worst = worst.max(j0.abs() / (k * k));
        }
    }
    outcome(ok, format!("max |J0|/K² = {worst:.2e}"))
}

fn criterion_6() -> Outcome {
    let model = nig_model(0.08);
    let atom = ContourMeasure::atom(1.0, 1.0);
    let grid = TimeGrid::uniform(T, 12, 1).unwrap();
    let v0 = build_tables(&model, &atom, &grid, &TableOptions::default()).unwrap().initial_capital();
    let res = experiment(model.clone(), atom.clone(), 12, 1, true).run().unwrap();
    let errors = res.strategies[0].errors.as_ref().unwrap();
    let max_err = errors.iter().fold(0.0f64, |m, e| m.max(e.abs()));
    let j0 = hedging_error_variance(&model, &atom, &ErrorOptions::default()).unwrap().value;
    let ok = v0 == S0 && max_err <= 1e-10 * S0 && j0.abs() <= 1e-10 * S0 * S0;
    outcome(ok, format!("V0 - s0 = {:.1e}, max |error| {max_err:.1e}, J0 {j0:.1e}", v0 - S0))
}

/// `∫_R s^z K^{1−z} / (2π z(z−1)) du` along `Re z = r` by a plain trapezoid
/// sum over `[−U, U]`; exponentially accurate in `h` since the integrand is
/// analytic in a strip, truncation `O(1/(|ln(s/K)|·U²))`.
fn riemann_line(s: f64, k: f64, r: f64) -> f64 {
    let (h, u_max) = (0.05, 2e4);
    let a = (s / k).ln();
    let n = (u_max / h) as usize;
    let term = |u: f64| {
        let z = Complex64::new(r, u);
        (k * (z * a).exp() / (z * (z - 1.0))).re / (2.0 * std::f64::consts::PI)
    };
    let mut sum = 0.5 * term(0.0);
    for j in 1..=n {
        sum += term(j as f64 * h);
    }
    2.0 * h * sum
}

fn criterion_7() -> Outcome {
    let k = 99.0;
    let call = ContourMeasure::call(k, 0.5).unwrap();
    let put = ContourMeasure::put(k, -1.0).unwrap();
    let (mut rec, mut oracle, mut parity) = (0.0f64, 0.0f64, 0.0f64);
    for j in 0..33 {
        let s = k / 4.0 + j as f64 * (4.0 * k - k / 4.0) / 32.0;
        let c = call.evaluate(s).re;
        let p = put.evaluate(s).re;
        rec = rec.max((c - (s - k).max(0.0)).abs()).max((p - (k - s).max(0.0)).abs());
        let c_oracle = s + riemann_line(s, k, 0.5);
        let p_oracle = riemann_line(s, k, -1.0);
        oracle = oracle.max((c - c_oracle).abs()).max((p - p_oracle).abs());
        parity = parity.max((c - p - (s - k)).abs());
    }
    let ok = rec <= 1e-6 * k && oracle <= 1e-6 * k && parity <= 2e-6 * k;
    outcome(
        ok,
        format!("max |rec − payoff| {rec:.2e}, vs Riemann oracle {oracle:.2e}, parity {parity:.2e} (K = {k})"),
    )
}

fn criterion_8() -> Outcome {
    let model = nig_model(0.08);
    let call = ContourMeasure::call(99.0, 0.5).unwrap();
    let ev = hedging_error_variance(&model, &call, &ErrorOptions::default()).unwrap();
    let res = experiment(model, call, 64, 1, true).run().unwrap();
    let vo = &res.strategies[0];
    let se = std_stderr(vo.errors.as_ref().unwrap());
    let band = 1.96 * se + 0.1 * ev.std();
    outcome(
        (vo.std - ev.std()).abs() <= band,
        format!(
            "MC std {:.4} vs √J0 {:.4} (J0 {:.3}, settled {}), band ±{band:.4} with SE {se:.4}",
            vo.std,
            ev.std(),
            ev.value,
            ev.settled
        ),
    )
}

fn pair(c: f64) -> (StrategyResult, StrategyResult) {
    let res = experiment(nig_model(c), ContourMeasure::call(99.0, 0.5).unwrap(), 12, 1, false)
        .run()
        .unwrap();
    (res.strategies[0].clone(), res.strategies[1].clone())
}

fn criterion_9() -> Outcome {
    let (vo_h, bs_h) = pair(0.08);
    let (vo_g, bs_g) = pair(2.0);
    let heavy = vo_h.std <= 0.95 * bs_h.std;
    let gauss = (vo_g.std - bs_g.std).abs() / bs_g.std <= 0.05;
    let bias = vo_h.bias.abs() <= 0.1 * vo_h.std && vo_g.bias.abs() <= 0.1 * vo_g.std;
    let bs_sign = bs_h.bias > 0.0;
    outcome(
        heavy && gauss && bias && bs_sign,
        format!(
            "C=0.08: VO std {:.4} bias {:.4}, BS std {:.4} bias {:.4}, ratio {:.3}; C=2: VO std {:.4} bias {:.4}, BS std {:.4}, rel diff {:.4}",
            vo_h.std,
            vo_h.bias,
            bs_h.std,
            bs_h.bias,
            vo_h.std / bs_h.std,
            vo_g.std,
            vo_g.bias,
            bs_g.std,
            (vo_g.std - bs_g.std).abs() / bs_g.std
        ),
    )
}

fn criterion_10() -> Outcome {
    let model = electricity();
    let valid = model.validate().passed();
    let mut ok = valid;
    let mut prev: Option<(f64, f64)> = None;
    let mut rows = Vec::new();
    for n in [4, 12, 64] {
        let res = experiment(model.clone(), ContourMeasure::call(99.0, 0.5).unwrap(), n, 16, true)
            .run()
            .unwrap();
        let vo = &res.strategies[0];
        let se = std_stderr(vo.errors.as_ref().unwrap());
        ok &= vo.bias.abs() <= 0.1 * vo.std;
        if let Some((std, se_prev)) = prev {
            ok &= vo.std <= std + 1.96 * (se * se + se_prev * se_prev).sqrt();
        }
        prev = Some((vo.std, se));
        rows.push(format!("N={n}: bias {:.4} std {:.4}", vo.bias, vo.std));
    }
    outcome(ok, format!("validation {}; {}", if valid { "passed" } else { "failed" }, rows.join(", ")))
}

fn criterion_11() -> Outcome {
    let mut failures: Vec<String> = Vec::new();
    let mut check = |name: &str, ok: bool| {
        if !ok {
            failures.push(name.to_string());
        }
    };
    let models = [nig_model(0.08), electricity(), time_change()];
    let nodes = [
        Complex64::new(0.5, 0.7),
        Complex64::new(-1.0, 3.0),
        Complex64::new(0.3, -25.0),
        Complex64::new(-0.5, 120.0),
    ];
    let times = [0.0, 0.03, 0.1, 0.2, 0.25];
    let close = |a: Complex64, b: Complex64| (a - b).norm() <= 1e-12 * (1.0 + a.norm());

    for model in &models {
        for &t in &times {
            check("rho density positive", model.rho_density(t).unwrap() > 0.0);
            check("gamma(1) = 1", (gamma(model, Complex64::new(1.0, 0.0), t).unwrap() - 1.0).norm() < 1e-12);
            check("eta(1) = 0", eta_density(model, Complex64::new(1.0, 0.0), t).unwrap().norm() < 1e-12);
            for &z in &nodes {
                let k = model.kappa_density(z, t).unwrap();
                check("kappa conjugate symmetry", close(model.kappa_density(z.conj(), t).unwrap(), k.conj()));
                let g = gamma(model, z, t).unwrap();
                check("gamma conjugate symmetry", close(gamma(model, z.conj(), t).unwrap(), g.conj()));
                let e = eta_density(model, z, t).unwrap();
                check("eta conjugate symmetry", close(eta_density(model, z.conj(), t).unwrap(), e.conj()));
                let b = beta(model, z.conj(), z, t).unwrap();
                check("beta(z̄, z) >= 0", b.re >= -1e-12 && b.im.abs() <= 1e-12 * (1.0 + b.re.abs()));
                // central difference of κ_t in t
                let h = 1e-6;
                let (lo, hi) = ((t - h).max(0.0), (t + h).min(T));
                let fd = (model.kappa_t(z, hi).unwrap() - model.kappa_t(z, lo).unwrap()) / (hi - lo);
                let exact = if t == 0.0 || t == T {
                    model.kappa_density(z, 0.5 * (lo + hi)).unwrap()
                } else {
                    k
                };
                check("kappa_density finite difference", (fd - exact).norm() <= 1e-4 * exact.norm());
            }
        }
    }

    let grid = TimeGrid::uniform(T, 6, 8).unwrap();
    for model in &models[..2] {
        let ctx = TimeContext::new(model, &grid).unwrap();
        for measure in [ContourMeasure::call(99.0, 0.5).unwrap(), ContourMeasure::put(99.0, -1.0).unwrap()] {
            let tables = build_tables(model, &measure, &grid, &TableOptions::default()).unwrap();
            let conj: Vec<_> = tables
                .quadrature
                .upper()
                .iter()
                .map(|n| ctx.node_profile(model, n.z.conj()))
                .collect();
            for (j, node) in tables.quadrature.upper().iter().enumerate() {
                let p = ctx.node_profile(model, node.z);
                for i in 0..grid.knots().len() {
                    check("table conjugate symmetry", close(conj[j].gamma[i], p.gamma[i].conj()));
                    check("table conjugate symmetry", close(conj[j].eta_tail[i], p.eta_tail[i].conj()));
                }
            }
            for i in [0, 3] {
                let cg: Vec<_> = conj.iter().map(|p| p.gamma[i]).collect();
                let ct: Vec<_> = conj.iter().map(|p| p.eta_tail[i]).collect();
                for s in [70.0, 99.0, 130.0] {
                    let (h, xi) = tables.claim_state_complex(i, s, &cg, &ct);
                    check("H real", h.im.abs() <= 1e-10 * (1.0 + h.re.abs()));
                    check("xi real", xi.im.abs() <= 1e-10 * (1.0 + xi.re.abs()));
                }
            }
            if model.is_stationary() {
                let ev = hedging_error_variance(model, &measure, &ErrorOptions::default()).unwrap();
                check("J0 real", ev.imaginary.abs() <= 1e-8 * ev.value.abs());
            }
        }
    }

    let exp = HedgeExperiment {
        paths: 500,
        ..experiment(electricity(), ContourMeasure::put(99.0, -1.0).unwrap(), 6, 8, true)
    };
    let a = exp.run().unwrap();
    let b = exp.run().unwrap();
    let bitwise = a.strategies.iter().zip(&b.strategies).all(|(x, y)| {
        let (ex, ey) = (x.errors.as_ref().unwrap(), y.errors.as_ref().unwrap());
        ex.iter().zip(ey).all(|(p, q)| p.to_bits() == q.to_bits())
    });
    check("bitwise reproducibility", bitwise);

    failures.dedup();
    let detail = if failures.is_empty() {
        "all properties hold".to_string()
    } else {
        format!("violated: {}", failures.join(", "))
    };
    outcome(failures.is_empty(), detail)
}

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("moment reproduction", criterion_1),
        ("kurtosis table", criterion_2),
        ("Black-Scholes capital", criterion_3),
        ("capital ratios", criterion_4),
        ("complete-market zeros", criterion_5),
        ("atom hedge", criterion_6),
        ("payoff reconstruction", criterion_7),
        ("Monte Carlo vs closed-form error variance", criterion_8),
        ("strategy comparison", criterion_9),
        ("non-stationary analog", criterion_10),
        ("property suite", criterion_11),
    ];
    let mut unexpected = Vec::new();
    for (i, (name, run)) in criteria.iter().enumerate() {
        let id = i + 1;
        let start = Instant::now();
        let out = run();
        let status = if out.passed { "PASS" } else { "FAIL" };
        let note = if !out.passed && UNATTAINABLE.contains(&id) {
            " [known unattainable]"
        } else {
            ""
        };
        println!(
            "{status} criterion {id:>2} ({name}): {}{note} [{:.1}s]",
            out.detail,
            start.elapsed().as_secs_f64()
        );
        if !out.passed && !UNATTAINABLE.contains(&id) {
            unexpected.push(id);
        }
    }
    if unexpected.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("unexpected failures: {unexpected:?}");
        ExitCode::FAILURE
    }
}
