//! Worked-example fixtures behind `vortex check`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vortex_core::algebra::{flatten, Circulations, MuMatrix};
use vortex_core::analysis::{gamma_sweep, SweepOptions};
use vortex_core::constraints::{constraint_jacobian, constraint_residuals};
use vortex_core::dynamics::{
    integrate, invariant_drift_report, moment_map, Flow, InitialState, RelativeCoordinates,
};
use vortex_core::hamiltonian::{fd_step, reduced_gradient, ReducedHamiltonian, VortexConfiguration};
use vortex_core::linalg::{leading_minors, numerical_rank};
use vortex_core::scenario::{build_scenario, Scenario, ScenarioKind, ScenarioParams};
use vortex_core::stability::{
    linearize, multiset_distance, restricted_hessian, solve_multiplier_system, spectrum, Verdict,
};
use vortex_core::{Error, Result};

pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn pm(z: Complex64, times: usize) -> Vec<Complex64> {
    (0..times).flat_map(|_| [z, -z]).collect()
}

fn real_sqrt(x: f64) -> Complex64 {
    c(x, 0.0).sqrt()
}

fn with_gamma(kind: ScenarioKind, g: f64) -> Result<Scenario> {
    build_scenario(kind, &ScenarioParams::with_gamma(g))
}

fn with_circulations(g: Vec<f64>) -> Result<Scenario> {
    build_scenario(
        ScenarioKind::Equilateral3,
        &ScenarioParams { circulations: Some(g), ..Default::default() },
    )
}

fn spectrum_error(s: &Scenario, expected: &[Complex64]) -> Result<f64> {
    let ev = spectrum(&linearize(&s.mu0()?, &s.circ)?.matrix)?;
    if ev.len() != expected.len() {
        return Ok(f64::INFINITY);
    }
    Ok(multiset_distance(&ev, expected))
}

fn rel(got: &[f64], want: &[f64]) -> f64 {
    if got.len() != want.len() {
        return f64::INFINITY;
    }
    got.iter()
        .zip(want)
        .map(|(x, y)| if *y == 0.0 { x.abs() } else { ((x - y) / y).abs() })
        .fold(0.0, f64::max)
}

type Check = fn() -> Result<(f64, f64)>;

fn equilateral_spectrum() -> Result<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0_f64;
    let mut done = 0;
    while done < 20 {
        let g: Vec<f64> = (0..3)
            .map(|_| rng.random_range(0.2..2.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 })
            .collect();
        if g.iter().sum::<f64>().abs() < 0.2 {
            continue;
        }
        let s2 = g[0] * g[1] + g[0] * g[2] + g[1] * g[2];
        let mut want = vec![c(0.0, 0.0); 2];
        want.extend(pm(real_sqrt(-s2) * (3f64.sqrt() / (2.0 * PI)), 1));
        worst = worst.max(spectrum_error(&with_circulations(g)?, &want)?);
        done += 1;
    }
    Ok((worst, 1e-8))
}

fn triangle_spectrum() -> Result<(f64, f64)> {
    let mut worst = 0.0_f64;
    for g in [-5.0, -2.0, 0.5, 2.0, 5.0] {
        let mut want = pm(c(0.0, 1.0 / PI), 1);
        want.extend(pm(real_sqrt(g - 1.0) / (2.0 * PI), 2));
        want.extend(vec![c(0.0, 0.0); 3]);
        worst = worst.max(spectrum_error(&with_gamma(ScenarioKind::TriangleWithCenter, g)?, &want)?);
    }
    Ok((worst, 1e-8))
}

fn square_spectrum() -> Result<(f64, f64)> {
    let mut worst = 0.0_f64;
    for g in [-1.0, 0.5, 1.0, 2.0, 3.0] {
        let mut want = pm(c(0.0, 0.25 / PI), 1);
        want.extend(pm(c(0.0, 1.0 / PI), 1));
        want.extend(pm(c(0.0, 1.25 / PI), 1));
        want.extend(pm(real_sqrt(-g - 0.5) / PI, 1));
        want.extend(pm(real_sqrt(g - 2.25) / (2.0 * PI), 2));
        want.extend(vec![c(0.0, 0.0); 4]);
        worst = worst.max(spectrum_error(&with_gamma(ScenarioKind::SquareWithCenter, g)?, &want)?);
    }
    Ok((worst, 1e-8))
}

fn zero_total() -> Result<(f64, f64)> {
    let s = with_gamma(ScenarioKind::TriangleWithCenter, -3.0)?;
    let mu = s.mu0()?;
    let m = solve_multiplier_system(&mu, &s.circ, &[1], 1.0)?;
    let v = s.reference_tangent_basis().ok_or(Error::UnsupportedScenario("no basis".into()))?;
    let h = restricted_hessian(&mu, &s.circ, &m, &v)?;
    let want = DMatrix::from_row_slice(2, 2, &[-4.0, 2.0, 2.0, -4.0]) / 9.0;
    let h_err = (h - want).amax() / 1e-2;
    let mut expected = pm(c(3.5f64.sqrt() / PI, 0.0), 1);
    expected.extend(pm(c(0.0, 1.25 / PI), 1));
    expected.extend(pm(c(0.0, 0.25 / PI), 1));
    expected.extend(vec![c(0.0, 0.0); 3]);
    let s_err = spectrum_error(&with_gamma(ScenarioKind::SquareWithCenter, -4.0)?, &expected)?;
    // Both errors scaled to a common tolerance of 1e-8.
    Ok((h_err.max(s_err), 1e-8))
}

const GAMMAS: [f64; 5] = [-5.0, -1.0, 0.5, 2.0, 7.0];

fn multipliers() -> Result<(f64, f64)> {
    let mut worst = 0.0_f64;
    for g in GAMMAS {
        let s = build_scenario(ScenarioKind::Equilateral3, &ScenarioParams::with_gamma(g))?;
        let m = solve_multiplier_system(&s.mu0()?, &s.circ, &[1], 1.0)?;
        worst = worst.max(rel(&m.to_vector(), &[2.0 + g, 0.0]));

        let s = with_gamma(ScenarioKind::TriangleWithCenter, g)?;
        let q = 2.0 * g / (3.0 * (g + 3.0));
        let m = solve_multiplier_system(&s.mu0()?, &s.circ, &[1], 1.0)?;
        worst = worst.max(rel(&m.to_vector(), &[g + 1.0, q, q, -2.0 * q, 0.0]));

        let s = with_gamma(ScenarioKind::SquareWithCenter, g)?;
        let (p, q) = ((3.0 * g + 2.0) / (g + 4.0), (g - 1.0) / (g + 4.0));
        let want = [(2.0 * g + 3.0) / 2.0, p / 4.0, p / 2.0, p / 4.0, -p / 2.0, -q, 0.0, q, -p / 2.0, -q];
        let m = solve_multiplier_system(&s.mu0()?, &s.circ, &[1], 1.0)?;
        worst = worst.max(rel(&m.to_vector(), &want));
    }
    Ok((worst, 1e-8))
}

fn reference_minors(s: &Scenario) -> Result<Vec<f64>> {
    let mu = s.mu0()?;
    let m = solve_multiplier_system(&mu, &s.circ, &[1], 1.0)?;
    let v = s.reference_tangent_basis().ok_or(Error::UnsupportedScenario("no basis".into()))?;
    Ok(leading_minors(&restricted_hessian(&mu, &s.circ, &m, &v)?))
}

fn minors() -> Result<(f64, f64)> {
    let mut worst = 0.0_f64;
    for g in [-5.0_f64, -2.0, 0.5, 2.0, 5.0] {
        let (p, s) = (9.0 * g * g + 20.0 * g + 3.0, g + 3.0);
        let want = [
            2.0 * p / (3.0 * s),
            -16.0 * g * (g - 1.0) / (3.0 * s),
            -8.0 * g * (g - 1.0) * p / (3.0 * s * s),
            16.0 * (g - 1.0).powi(2) * g * g / (s * s),
        ];
        worst = worst.max(rel(&reference_minors(&with_gamma(ScenarioKind::TriangleWithCenter, g)?)?, &want));
    }
    for g in [-1.0_f64, 0.3, 1.0, 2.0, 3.0] {
        let p = 4.0 * g.powi(3) + 63.0 * g * g + 192.0 * g + 66.0;
        let q = (g + 4.0).powi(2);
        let want = [
            (g + 14.0) / (2.0 * (g + 4.0)),
            p / (2.0 * q),
            (2.0 * g + 1.0) * p / q,
            -(3.0 * g + 22.0) * (2.0 * g + 1.0) * g * (4.0 * g - 9.0) / (2.0 * q),
            2.0 * (2.0 * g + 1.0) * g * (4.0 * g - 9.0) * (g - 6.0) / q,
            2.0 * (2.0 * g + 1.0) * g * g * (4.0 * g - 9.0).powi(2) / q,
        ];
        worst = worst.max(rel(&reference_minors(&with_gamma(ScenarioKind::SquareWithCenter, g)?)?, &want));
    }
    Ok((worst, 1e-6))
}

type Family<'a> = (ScenarioKind, f64, f64, &'a [f64], &'a dyn Fn(f64) -> Option<Verdict>);

/// Fraction of mismatched verdicts on the proven intervals.
fn verdict_regions() -> Result<(f64, f64)> {
    let step = 0.1;
    let tri = |g: f64| {
        if g < -3.0 || (0.0 < g && g < 1.0) {
            Some(Verdict::CertifiedStable)
        } else if g > 1.0 {
            Some(Verdict::LinearlyUnstable)
        } else {
            None
        }
    };
    let sq = |g: f64| {
        if 0.0 < g && g < 2.25 {
            Some(Verdict::CertifiedStable)
        } else if !(-0.5..=2.25).contains(&g) {
            Some(Verdict::LinearlyUnstable)
        } else {
            None
        }
    };
    let (mut bad, mut total) = (0usize, 0usize);
    let families: [Family; 2] = [
        (ScenarioKind::TriangleWithCenter, -6.0, 3.0, &[-3.0, 0.0, 1.0], &tri),
        (ScenarioKind::SquareWithCenter, -6.0, 5.0, &[-4.0, -0.5, 0.0, 2.25], &sq),
    ];
    for (kind, from, to, bounds, proven) in families {
        let t = gamma_sweep(kind, &ScenarioParams::default(), from, to, step, &SweepOptions::default())?;
        for row in &t.rows {
            if bounds.iter().any(|b| (row.gamma - b).abs() <= step + 1e-9) {
                continue;
            }
            if let Some(v) = proven(row.gamma) {
                total += 1;
                bad += usize::from(row.verdict != Some(v));
            }
        }
    }
    Ok((bad as f64 / total.max(1) as f64, 0.0))
}

fn random_configuration(rng: &mut ChaCha8Rng) -> Result<VortexConfiguration> {
    loop {
        let n = rng.random_range(3..=5usize);
        let q: Vec<Complex64> =
            (0..n).map(|_| c(rng.random_range(-1.2..1.2), rng.random_range(-1.2..1.2))).collect();
        let g: Vec<f64> = (0..n)
            .map(|_| rng.random_range(0.3..1.5) * if rng.random_bool(0.3) { -1.0 } else { 1.0 })
            .collect();
        let sep = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .map(|(i, j)| (q[i] - q[j]).norm())
            .fold(f64::INFINITY, f64::min);
        if sep >= 0.6 && g.iter().sum::<f64>().abs() >= 0.5 {
            return VortexConfiguration::new(q, Circulations::new(g)?);
        }
    }
}

fn runs() -> Result<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut gap, mut drift) = (0.0_f64, 0.0_f64);
    for _ in 0..10 {
        let init = InitialState::Configuration(random_configuration(&mut rng)?);
        let full = integrate(&init, 5.0, 1e-3, Flow::Full)?;
        let red = integrate(&init, 5.0, 1e-3, Flow::Reduced)?;
        if full.aborted.is_some() || red.aborted.is_some() {
            return Ok((f64::INFINITY, 0.0));
        }
        for (a, b) in full.states.iter().zip(&red.states) {
            gap = gap.max(a.0.iter().zip(&b.0).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max));
        }
        for t in [&full, &red] {
            let r = invariant_drift_report(t)?;
            drift = r.casimirs.iter().fold(drift.max(r.hamiltonian.max), |m, s| m.max(s.max));
            drift = drift.max(r.residual_max.max);
        }
    }
    Ok((gap, drift))
}

fn submersion() -> Result<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut bad = 0;
    for n in 2..=5 {
        for _ in 0..100 {
            let z = (0..n)
                .map(|_| Complex64::from_polar(rng.random_range(0.5..2.0), rng.random_range(0.0..2.0 * PI)))
                .collect();
            let mu = moment_map(&RelativeCoordinates { z });
            bad += usize::from(numerical_rank(&constraint_jacobian(&mu), 1e-8) != (n - 1) * (n - 1));
        }
    }
    Ok((bad as f64, 0.0))
}

fn derivatives() -> Result<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0_f64;
    for _ in 0..100 {
        let cfg = random_configuration(&mut rng)?;
        let mu = moment_map(&vortex_core::dynamics::relative_coordinates(&cfg)?);
        let x = flatten(&mu);
        let h = ReducedHamiltonian::new(&cfg.circ);
        let g = reduced_gradient(&mu, &cfg.circ)?.partials;
        let step = fd_step(&x);
        let scale = g.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        for k in 0..x.len() {
            let (mut p, mut q) = (x.0.clone(), x.0.clone());
            p[k] += step;
            q[k] -= step;
            let fd = (h.value(&p)? - h.value(&q)?) / (2.0 * step);
            worst = worst.max((fd - g[k]).abs() / scale);
        }

        let n = rng.random_range(2..=5usize);
        let y: Vec<f64> = (0..n * n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let at = |v: &[f64]| -> Result<MuMatrix> { vortex_core::algebra::unflatten(&v.to_vec().into(), n) };
        let jac = constraint_jacobian(&at(&y)?);
        let step = 1e-6 * 3.0;
        for k in 0..y.len() {
            let (mut p, mut q) = (y.clone(), y.clone());
            p[k] += step;
            q[k] -= step;
            let (rp, rq) = (constraint_residuals(&at(&p)?), constraint_residuals(&at(&q)?));
            for r in 0..jac.nrows() {
                let fd = (rp.values[r] - rq.values[r]) / (2.0 * step);
                worst = worst.max((fd - jac[(r, k)]).abs() / jac.amax());
            }
        }
    }
    Ok((worst, 1e-6))
}

fn outcome(name: &'static str, r: Result<(f64, f64)>, tol: f64, what: &str) -> CheckResult {
    match r {
        Ok((err, _)) => CheckResult {
            name,
            passed: err <= tol,
            detail: format!("{what} {err:.2e} (tolerance {tol:.0e})"),
        },
        Err(e) => CheckResult { name, passed: false, detail: format!("error: {e}") },
    }
}

pub fn run() -> Vec<CheckResult> {
    let simple: [(&'static str, Check, &str); 7] = [
        ("N=3 equilateral spectrum", equilateral_spectrum, "max eigenvalue distance"),
        ("triangle+center spectrum", triangle_spectrum, "max eigenvalue distance"),
        ("square+center spectrum", square_spectrum, "max eigenvalue distance"),
        ("zero-total fixtures", zero_total, "scaled max error"),
        ("multiplier reproduction", multipliers, "max relative error"),
        ("minor formulas", minors, "max relative error"),
        ("verdict regions", verdict_regions, "mismatch fraction"),
    ];
    let mut out: Vec<CheckResult> = simple
        .into_iter()
        .map(|(name, f, what)| {
            let r = f();
            let tol = r.as_ref().map(|x| x.1).unwrap_or(0.0);
            outcome(name, r, tol, what)
        })
        .collect();
    let r = runs();
    let (gap, drift) = match &r {
        Ok(x) => (Ok((x.0, 0.0)), Ok((x.1, 0.0))),
        Err(e) => (Err(Error::InvalidArgument(e.to_string())), Err(Error::InvalidArgument(e.to_string()))),
    };
    out.push(outcome("reduction consistency", gap, 1e-6, "max sup-norm gap"));
    out.push(outcome("conservation", drift, 1e-8, "max invariant drift"));
    out.push(outcome("submersion property", submersion(), 0.0, "rank-deficient points"));
    out.push(outcome("derivative checks", derivatives(), 1e-6, "max relative error"));
    out
}
