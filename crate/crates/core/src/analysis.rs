//! Scenario analysis, parameter sweeps and their JSON/CSV serialization.

use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::algebra::{flatten, CoordinateVector, MuMatrix, Regime};
use crate::dynamics::fmt_f64;
use crate::dynamics::{
    integrate, invariant_drift_report, moment_map, relative_coordinates, DriftReport, Flow, InitialState,
    RelativeCoordinates, Trajectory,
};
use crate::error::{Error, Result};
use crate::linalg::leading_minors;
use crate::par::{map_ordered, Execution};
use crate::scenario::{build_scenario, Scenario, ScenarioKind, ScenarioParams};
use crate::stability::{
    energy_casimir_certificate, is_fixed_point, restricted_hessian, solve_multiplier_system, tangent_basis,
    CertificateResult, MultiplierSet, Verdict, DEFAULT_SEED,
};

pub const TOOL_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioDescriptor {
    pub name: String,
    pub kind: String,
    pub free_parameter: Option<f64>,
    pub circulations: Vec<f64>,
    pub positions: Vec<[f64; 2]>,
    pub regime: Regime,
}

impl From<&Scenario> for ScenarioDescriptor {
    fn from(s: &Scenario) -> Self {
        Self {
            name: s.name.clone(),
            kind: s.kind.to_string(),
            free_parameter: s.free_parameter,
            circulations: s.circ.gammas().to_vec(),
            positions: s.positions.iter().map(|q| [q.re, q.im]).collect(),
            regime: s.regime(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorroborationOptions {
    pub t_end: f64,
    pub dt: f64,
    /// Size of the initial offset from the fixed point (sup-norm).
    pub perturb: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisOptions {
    pub casimirs: Vec<usize>,
    pub seed: u64,
    pub corroborate: Option<CorroborationOptions>,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self { casimirs: vec![1], seed: DEFAULT_SEED, corroborate: None }
    }
}

/// Multipliers and minors on the scenario's tabulated tangent basis with
/// `a0 = +1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceEvaluation {
    pub multipliers: MultiplierSet,
    pub restricted_hessian: Vec<Vec<f64>>,
    pub minors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftSummary {
    pub options: CorroborationOptions,
    pub initial_offset: f64,
    pub max_deviation: f64,
    pub final_deviation: f64,
    pub invariants: DriftReport,
    pub aborted: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub tool_version: String,
    pub scenario: ScenarioDescriptor,
    pub casimirs: Vec<usize>,
    pub fixed_point: Vec<f64>,
    pub fixed_point_residual: f64,
    pub spectrum: Vec<Complex64>,
    pub max_real_part: f64,
    pub verdict: Verdict,
    pub multipliers: Option<MultiplierSet>,
    pub minors: Option<Vec<f64>>,
    pub certificate: CertificateResult,
    pub reference: Option<ReferenceEvaluation>,
    pub drift: Option<DriftSummary>,
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Minors on the tabulated basis, or `None` where the scenario has none or
/// no critical combination with `a0 = +1` exists.
pub fn reference_evaluation(scenario: &Scenario, mu0: &MuMatrix) -> Result<Option<ReferenceEvaluation>> {
    let Some(basis) = scenario.reference_tangent_basis() else {
        return Ok(None);
    };
    let multipliers = match solve_multiplier_system(mu0, &scenario.circ, &[1], 1.0) {
        Ok(m) => m,
        Err(Error::Infeasible { .. }) => return Ok(None),
        Err(e) => return Err(e),
    };
    let h = restricted_hessian(mu0, &scenario.circ, &multipliers, &basis)?;
    Ok(Some(ReferenceEvaluation { minors: leading_minors(&h), restricted_hessian: rows_of(&h), multipliers }))
}

pub fn analyze(scenario: &Scenario, opts: &AnalysisOptions) -> Result<AnalysisReport> {
    let mu0 = scenario.mu0()?;
    let fp = is_fixed_point(&mu0, &scenario.circ)?;
    if !fp.ok {
        return Err(Error::NotAFixedPoint { residual: fp.residual });
    }
    let certificate = energy_casimir_certificate(&mu0, &scenario.circ, &opts.casimirs, opts.seed)?;
    let reference = if opts.casimirs == [1] { reference_evaluation(scenario, &mu0)? } else { None };
    let drift = opts.corroborate.map(|o| corroborate(scenario, &mu0, o)).transpose()?;
    Ok(AnalysisReport {
        tool_version: TOOL_VERSION.to_string(),
        scenario: scenario.into(),
        casimirs: opts.casimirs.clone(),
        fixed_point: flatten(&mu0).0,
        fixed_point_residual: fp.residual,
        spectrum: certificate.spectrum.clone(),
        max_real_part: certificate.max_real_part,
        verdict: certificate.verdict,
        multipliers: certificate.multipliers.clone(),
        minors: certificate.minors.clone(),
        certificate,
        reference,
        drift,
    })
}

fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}

/// Shape coordinates `J(z + s w)` near the fixed point, with a fixed
/// direction `w` and `s` tuned so the sup-norm offset from `J(z)` is
/// `eps`. Moving in `z` keeps the state on the rank-one constraint set.
pub fn perturbed_state(scenario: &Scenario, eps: f64) -> Result<CoordinateVector> {
    if !(eps.is_finite() && eps >= 0.0) {
        return Err(Error::InvalidArgument(format!("perturbation must be finite and >= 0, got {eps}")));
    }
    let z = relative_coordinates(&scenario.configuration())?.z;
    let base = flatten(&moment_map(&RelativeCoordinates { z: z.clone() }));
    if eps == 0.0 {
        return Ok(base);
    }
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let w: Vec<Complex64> =
        (0..z.len()).map(|k| Complex64::from_polar(1.0, golden * (k + 1) as f64)).collect();
    let at = |s: f64| {
        let zs = z.iter().zip(&w).map(|(a, b)| a + b * s).collect();
        flatten(&moment_map(&RelativeCoordinates { z: zs }))
    };
    let scale = z.iter().fold(1.0_f64, |m, q| m.max(q.norm()));
    let mut s = eps / scale;
    for _ in 0..3 {
        let off = sup_distance(&at(s).0, &base.0);
        if off == 0.0 {
            break;
        }
        s *= eps / off;
    }
    Ok(at(s))
}

/// Reduced trajectory from [`perturbed_state`].
pub fn perturbed_trajectory(scenario: &Scenario, eps: f64, t_end: f64, dt: f64) -> Result<Trajectory> {
    let coords = perturbed_state(scenario, eps)?;
    integrate(&InitialState::Coordinates { coords, circ: scenario.circ.clone() }, t_end, dt, Flow::Reduced)
}

/// Sup-norm distance of every sample from `mu0`.
pub fn deviation_series(traj: &Trajectory, mu0: &MuMatrix) -> Vec<f64> {
    let c = flatten(mu0);
    traj.states.iter().map(|s| sup_distance(&s.0, &c.0)).collect()
}

fn corroborate(scenario: &Scenario, mu0: &MuMatrix, o: CorroborationOptions) -> Result<DriftSummary> {
    let traj = perturbed_trajectory(scenario, o.perturb, o.t_end, o.dt)?;
    let dev = deviation_series(&traj, mu0);
    Ok(DriftSummary {
        options: o,
        initial_offset: dev.first().copied().unwrap_or(0.0),
        max_deviation: dev.iter().copied().fold(0.0, f64::max),
        final_deviation: dev.last().copied().unwrap_or(0.0),
        invariants: invariant_drift_report(&traj)?,
        aborted: traj.aborted.clone(),
    })
}

/// `from, from + step, ..., <= to`, rounded to 12 decimals so that grid
/// points such as 0 and -3 are hit exactly. Empty when `to < from`.
pub fn gamma_grid(from: f64, to: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && step.is_finite() && from.is_finite() && to.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "need finite bounds and step > 0, got from={from}, to={to}, step={step}"
        )));
    }
    if to < from {
        return Ok(Vec::new());
    }
    let count = ((to - from) / step + 1e-9).floor() as usize + 1;
    Ok((0..count)
        .map(|k| {
            let g = from + k as f64 * step;
            let r = (g * 1e12).round() / 1e12;
            if r == 0.0 {
                0.0
            } else {
                r
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub gamma: f64,
    pub verdict: Option<Verdict>,
    pub max_real_part: Option<f64>,
    pub minors: Vec<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MinorBasis {
    /// The scenario's tabulated tangent basis.
    Reference,
    /// The orthonormal null-space basis.
    Numerical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub scenario: String,
    pub casimirs: Vec<usize>,
    /// Minors are those of the `a0 = +1` restricted Hessian on this basis.
    pub minor_basis: MinorBasis,
    pub minor_count: usize,
    pub rows: Vec<SweepRow>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOptions {
    pub casimirs: Vec<usize>,
    pub seed: u64,
    pub execution: Execution,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self { casimirs: vec![1], seed: DEFAULT_SEED, execution: Execution::default() }
    }
}

fn sweep_minors(scenario: &Scenario, mu0: &MuMatrix, casimirs: &[usize]) -> Result<(Vec<f64>, MinorBasis)> {
    if casimirs == [1] {
        if let Some(r) = reference_evaluation(scenario, mu0)? {
            return Ok((r.minors, MinorBasis::Reference));
        }
    }
    let basis = tangent_basis(mu0, &scenario.circ, casimirs)?;
    let m = solve_multiplier_system(mu0, &scenario.circ, casimirs, 1.0)?;
    let h = restricted_hessian(mu0, &scenario.circ, &m, &basis)?;
    Ok((leading_minors(&h), MinorBasis::Numerical))
}

fn sweep_point(
    kind: ScenarioKind,
    base: &ScenarioParams,
    gamma: f64,
    opts: &SweepOptions,
) -> (SweepRow, Option<MinorBasis>) {
    let mut row = SweepRow { gamma, verdict: None, max_real_part: None, minors: Vec::new(), error: None };
    let run = |row: &mut SweepRow| -> Result<Option<MinorBasis>> {
        let params = ScenarioParams { gamma: Some(gamma), ..base.clone() };
        let scenario = build_scenario(kind, &params)?;
        let mu0 = scenario.mu0()?;
        let cert = energy_casimir_certificate(&mu0, &scenario.circ, &opts.casimirs, opts.seed)?;
        row.verdict = Some(cert.verdict);
        row.max_real_part = Some(cert.max_real_part);
        match sweep_minors(&scenario, &mu0, &opts.casimirs) {
            Ok((minors, b)) => {
                row.minors = minors;
                Ok(Some(b))
            }
            Err(e) => {
                row.error = Some(format!("minors: {e}"));
                Ok(None)
            }
        }
    };
    match run(&mut row) {
        Ok(b) => (row, b),
        Err(e) => {
            row.error = Some(e.to_string());
            (row, None)
        }
    }
}

fn is_excluded(gamma: f64, excluded: &[f64]) -> Option<f64> {
    excluded.iter().copied().find(|e| (gamma - e).abs() <= 1e-9 * e.abs().max(1.0))
}

/// Certificate verdict, largest real part and minors at every grid point,
/// in grid order. Excluded parameter values are skipped with a note;
/// failures at individual points are recorded in the row.
pub fn gamma_sweep(
    kind: ScenarioKind,
    base: &ScenarioParams,
    from: f64,
    to: f64,
    step: f64,
    opts: &SweepOptions,
) -> Result<SweepTable> {
    if kind == ScenarioKind::Custom {
        return Err(Error::UnsupportedScenario("custom scenarios have no free parameter".into()));
    }
    let excluded = kind.excluded_parameters();
    let mut notes = Vec::new();
    let grid: Vec<f64> = gamma_grid(from, to, step)?
        .into_iter()
        .filter(|&g| match is_excluded(g, &excluded) {
            Some(e) => {
                notes.push(format!("skipped excluded gamma = {e}"));
                false
            }
            None => true,
        })
        .collect();
    let results = map_ordered(&grid, opts.execution, |&g| sweep_point(kind, base, g, opts));
    let minor_basis = results.iter().find_map(|(_, b)| *b).unwrap_or(MinorBasis::Numerical);
    let rows: Vec<SweepRow> = results.into_iter().map(|(r, _)| r).collect();
    let minor_count = match build_scenario(kind, &ScenarioParams { gamma: Some(1.0), ..base.clone() }) {
        Ok(s) => s.tangent_dim(opts.casimirs.len()),
        Err(_) => rows.iter().map(|r| r.minors.len()).max().unwrap_or(0),
    };
    Ok(SweepTable {
        scenario: kind.to_string(),
        casimirs: opts.casimirs.clone(),
        minor_basis,
        minor_count,
        rows,
        notes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Format {
    Json,
    Csv,
}

impl Format {
    /// `.csv` selects CSV; anything else JSON.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::Json,
        }
    }
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            _ => Err(Error::InvalidArgument(format!("unknown format {s:?}"))),
        }
    }
}

/// Something with a JSON and a CSV rendering.
pub trait Emit: Serialize {
    fn write_csv<W: Write>(&self, out: W) -> Result<()>;

    fn write_json<W: Write>(&self, mut out: W) -> Result<()> {
        serde_json::to_writer_pretty(&mut out, self)?;
        out.write_all(b"\n")?;
        Ok(())
    }

    fn write_to<W: Write>(&self, format: Format, out: W) -> Result<()> {
        match format {
            Format::Json => self.write_json(out),
            Format::Csv => self.write_csv(out),
        }
    }
}

pub fn emit<T: Emit>(item: &T, format: Format, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut out = std::io::BufWriter::new(file);
    item.write_to(format, &mut out)?;
    out.flush()?;
    Ok(())
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

/// Columns: `gamma, verdict, max_re_lambda, d1..dK, error`.
impl Emit for SweepTable {
    fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let k = self.rows.iter().map(|r| r.minors.len()).fold(self.minor_count, usize::max);
        let mut header = vec!["gamma".to_string(), "verdict".into(), "max_re_lambda".into()];
        header.extend((1..=k).map(|i| format!("d{i}")));
        header.push("error".into());
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![
                fmt_f64(r.gamma),
                r.verdict.map(|v| v.to_string()).unwrap_or_default(),
                opt(r.max_real_part),
            ];
            rec.extend((0..k).map(|i| opt(r.minors.get(i).copied())));
            rec.push(r.error.clone().unwrap_or_default());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// A single summary row: `scenario, gamma, verdict, max_re_lambda,
/// fixed_point_residual, d1..dK` with the certificate's minors.
impl Emit for AnalysisReport {
    fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let minors = self.minors.clone().unwrap_or_default();
        let mut header = vec![
            "scenario".to_string(),
            "gamma".into(),
            "verdict".into(),
            "max_re_lambda".into(),
            "fixed_point_residual".into(),
        ];
        header.extend((1..=minors.len()).map(|i| format!("d{i}")));
        w.write_record(&header)?;
        let mut rec = vec![
            self.scenario.kind.clone(),
            opt(self.scenario.free_parameter),
            self.verdict.to_string(),
            fmt_f64(self.max_real_part),
            fmt_f64(self.fixed_point_residual),
        ];
        rec.extend(minors.iter().map(|x| fmt_f64(*x)));
        w.write_record(&rec)?;
        w.flush()?;
        Ok(())
    }
}

impl Emit for Trajectory {
    fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        Trajectory::write_csv(self, out)
    }
}
