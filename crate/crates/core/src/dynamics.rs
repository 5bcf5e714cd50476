//! Point-vortex equations of motion, relative coordinates and the moment
//! map, the Lie-Poisson vector field, and a fixed-step RK4 driver that
//! records invariant drift along the way.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::algebra::{flatten, unflatten, Circulations, CoordinateVector, CouplingMatrix, MuMatrix, Regime};
use crate::constraints::{casimir, constraint_residuals};
use crate::error::{Error, Result};
use crate::hamiltonian::{check_collisions, dual_matrix, ReducedHamiltonian, VortexConfiguration};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Tolerance on `|sum G_i q_i|` for the zero-total reduction.
pub const IMPULSE_TOL: f64 = 1e-9;

/// `dq_i/dt = i/(2 pi) sum_{j != i} G_j (q_i - q_j) / |q_i - q_j|^2`.
pub fn full_vector_field(cfg: &VortexConfiguration) -> Result<Vec<Complex64>> {
    point_vortex_velocities(&cfg.positions, cfg.circ.gammas())
}

/// [`full_vector_field`] on raw slices, for any number of vortices.
pub fn point_vortex_velocities(q: &[Complex64], g: &[f64]) -> Result<Vec<Complex64>> {
    if q.len() != g.len() {
        return Err(Error::DimensionMismatch { expected: g.len(), found: q.len() });
    }
    check_collisions(q)?;
    Ok(velocities_unchecked(q, g))
}

fn velocities_unchecked(q: &[Complex64], g: &[f64]) -> Vec<Complex64> {
    let mut v = vec![Complex64::new(0.0, 0.0); q.len()];
    for i in 0..q.len() {
        for j in i + 1..q.len() {
            let d = q[i] - q[j];
            let k = d / (2.0 * PI * d.norm_sqr());
            v[i] += I * g[j] * k;
            v[j] -= I * g[i] * k;
        }
    }
    v
}

/// Positions relative to the reference vortex (the last one, or the
/// second-to-last when the total circulation vanishes).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelativeCoordinates {
    pub z: Vec<Complex64>,
}

pub fn relative_coordinates(cfg: &VortexConfiguration) -> Result<RelativeCoordinates> {
    check_collisions(&cfg.positions)?;
    let n = cfg.circ.reduced_dim();
    let reference = cfg.positions[cfg.circ.reference_index()];
    Ok(RelativeCoordinates { z: cfg.positions[..n].iter().map(|q| q - reference).collect() })
}

/// `J(z) = i z z^*`.
pub fn moment_map(z: &RelativeCoordinates) -> MuMatrix {
    let n = z.z.len();
    let zz = nalgebra::DMatrix::from_fn(n, n, |r, c| z.z[r] * z.z[c].conj());
    MuMatrix::from_hermitian(&zz)
}

/// The Lie-Poisson system of one circulation set: coupling matrix plus
/// reduced Hamiltonian, built once and reused by the integrator.
#[derive(Debug, Clone)]
pub struct LiePoissonSystem {
    circ: Circulations,
    coupling: CouplingMatrix,
    hamiltonian: ReducedHamiltonian,
}

impl LiePoissonSystem {
    pub fn new(circ: &Circulations) -> Result<Self> {
        Ok(Self {
            circ: circ.clone(),
            coupling: CouplingMatrix::new(circ)?,
            hamiltonian: ReducedHamiltonian::new(circ),
        })
    }

    pub fn circ(&self) -> &Circulations {
        &self.circ
    }

    pub fn coupling(&self) -> &CouplingMatrix {
        &self.coupling
    }

    pub fn hamiltonian(&self) -> &ReducedHamiltonian {
        &self.hamiltonian
    }

    pub fn n(&self) -> usize {
        self.coupling.n()
    }

    /// `X_h(mu) = -mu G K^{-1} + K^{-1} G mu` with `G = dh/dmu`.
    pub fn vector_field(&self, mu: &MuMatrix) -> Result<MuMatrix> {
        let n = self.n();
        if mu.n() != n {
            return Err(Error::DimensionMismatch { expected: n, found: mu.n() });
        }
        let grad = self.hamiltonian.gradient(flatten(mu).as_slice())?;
        let g = dual_matrix(&grad, n)?;
        let kinv = self.coupling.complex_inverse();
        let m = mu.entries();
        let out = -(m * g.entries() * &kinv) + &kinv * g.entries() * m;
        Ok(MuMatrix::from_entries_unchecked(out))
    }

    pub fn vector_field_coords(&self, coords: &[f64]) -> Result<Vec<f64>> {
        let mu = unflatten(&CoordinateVector(coords.to_vec()), self.n())?;
        Ok(flatten(&self.vector_field(&mu)?).0)
    }
}

pub fn lie_poisson_vector_field(mu: &MuMatrix, circ: &Circulations) -> Result<MuMatrix> {
    LiePoissonSystem::new(circ)?.vector_field(mu)
}

/// Invariant values recorded at one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftSample {
    pub hamiltonian: f64,
    pub casimirs: Vec<f64>,
    pub residuals: Vec<f64>,
}

impl DriftSample {
    pub fn residual_max(&self) -> f64 {
        self.residuals.iter().fold(0.0_f64, |m, r| m.max(r.abs()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub n: usize,
    pub times: Vec<f64>,
    pub states: Vec<CoordinateVector>,
    /// Vortex positions, present for full-space runs.
    pub positions: Option<Vec<Vec<Complex64>>>,
    pub drift: Vec<DriftSample>,
    /// Reason the run stopped early, if it did.
    pub aborted: Option<String>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last_state(&self) -> Option<&CoordinateVector> {
        self.states.last()
    }

    /// Writes `t,coord_0,...,H,C1,...,Cn,Rmax`, one row per sample.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend((0..self.n * self.n).map(|k| format!("coord_{k}")));
        header.push("H".into());
        header.extend((1..=self.n).map(|j| format!("C{j}")));
        header.push("Rmax".into());
        w.write_record(&header)?;
        for ((t, state), drift) in self.times.iter().zip(&self.states).zip(&self.drift) {
            let mut row = Vec::with_capacity(header.len());
            row.push(fmt_f64(*t));
            row.extend(state.0.iter().map(|x| fmt_f64(*x)));
            row.push(fmt_f64(drift.hamiltonian));
            row.extend(drift.casimirs.iter().map(|x| fmt_f64(*x)));
            row.push(fmt_f64(drift.residual_max()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

/// Shortest decimal form that parses back to the same `f64`.
pub(crate) fn fmt_f64(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || (1e-5..1e16).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialState {
    /// Shape coordinates for the reduced flow.
    Coordinates { coords: CoordinateVector, circ: Circulations },
    /// Vortex positions; the reduced flow starts at `J(z(0))`.
    Configuration(VortexConfiguration),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Flow {
    Full,
    Reduced,
}

/// Classical RK4 with a fixed step close to `dt` that lands on `t_end`.
///
/// A collision or a domain error mid-run truncates the trajectory and sets
/// [`Trajectory::aborted`]; invalid arguments are returned as errors.
pub fn integrate(initial: &InitialState, t_end: f64, dt: f64, flow: Flow) -> Result<Trajectory> {
    if !(dt > 0.0 && t_end > 0.0 && dt.is_finite() && t_end.is_finite()) {
        return Err(Error::InvalidArgument(format!("need dt > 0 and t_end > 0, got dt={dt}, t_end={t_end}")));
    }
    let steps = (t_end / dt).round().max(1.0) as usize;
    let h = t_end / steps as f64;
    match (flow, initial) {
        (Flow::Reduced, InitialState::Coordinates { coords, circ }) => {
            integrate_reduced(&LiePoissonSystem::new(circ)?, coords, steps, h)
        }
        (Flow::Reduced, InitialState::Configuration(cfg)) => {
            check_reducible(cfg)?;
            let coords = flatten(&moment_map(&relative_coordinates(cfg)?));
            integrate_reduced(&LiePoissonSystem::new(&cfg.circ)?, &coords, steps, h)
        }
        (Flow::Full, InitialState::Configuration(cfg)) => {
            check_reducible(cfg)?;
            integrate_full(cfg, steps, h)
        }
        (Flow::Full, InitialState::Coordinates { .. }) => {
            Err(Error::InvalidArgument("the full flow needs vortex positions".into()))
        }
    }
}

/// The zero-total reduction eliminates the last vortex through a vanishing
/// linear impulse.
pub fn check_reducible(cfg: &VortexConfiguration) -> Result<()> {
    check_collisions(&cfg.positions)?;
    if cfg.circ.regime() == Regime::ZeroTotal {
        let scale =
            cfg.positions.iter().zip(cfg.circ.gammas()).fold(1.0_f64, |m, (q, g)| m.max((q * g).norm()));
        let impulse = cfg.linear_impulse().norm();
        if impulse > IMPULSE_TOL * scale {
            return Err(Error::NonzeroImpulse { impulse });
        }
    }
    Ok(())
}

fn sample(system: &LiePoissonSystem, coords: &[f64]) -> Result<DriftSample> {
    let mu = unflatten(&CoordinateVector(coords.to_vec()), system.n())?;
    let hamiltonian = system.hamiltonian().value(coords)?;
    let casimirs =
        (1..=system.n()).map(|j| casimir(&mu, system.coupling(), j)).collect::<Result<Vec<_>>>()?;
    let residuals = constraint_residuals(&mu).values;
    Ok(DriftSample { hamiltonian, casimirs, residuals })
}

fn axpy(x: &[f64], a: f64, y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(x, y)| x + a * y).collect()
}

fn integrate_reduced(
    system: &LiePoissonSystem,
    start: &CoordinateVector,
    steps: usize,
    h: f64,
) -> Result<Trajectory> {
    let n = system.n();
    if start.len() != n * n {
        return Err(Error::DimensionMismatch { expected: n * n, found: start.len() });
    }
    let mut traj = Trajectory {
        n,
        times: vec![0.0],
        states: vec![start.clone()],
        positions: None,
        drift: vec![sample(system, &start.0)?],
        aborted: None,
    };
    let f = |x: &[f64]| system.vector_field_coords(x);
    let mut x = start.0.clone();
    for step in 1..=steps {
        let next = (|| -> Result<(Vec<f64>, DriftSample)> {
            let k1 = f(&x)?;
            let k2 = f(&axpy(&x, 0.5 * h, &k1))?;
            let k3 = f(&axpy(&x, 0.5 * h, &k2))?;
            let k4 = f(&axpy(&x, h, &k3))?;
            let next: Vec<f64> =
                (0..x.len()).map(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect();
            let s = sample(system, &next)?;
            Ok((next, s))
        })();
        match next {
            Ok((next, s)) => {
                x = next;
                traj.times.push(step as f64 * h);
                traj.states.push(CoordinateVector(x.clone()));
                traj.drift.push(s);
            }
            Err(e) => {
                traj.aborted = Some(format!("t={}: {e}", step as f64 * h));
                break;
            }
        }
    }
    Ok(traj)
}

fn integrate_full(cfg: &VortexConfiguration, steps: usize, h: f64) -> Result<Trajectory> {
    let g = cfg.circ.gammas();
    let system = LiePoissonSystem::new(&cfg.circ)?;
    let reduce = |q: &[Complex64]| -> Result<CoordinateVector> {
        let c = VortexConfiguration { positions: q.to_vec(), circ: cfg.circ.clone() };
        Ok(flatten(&moment_map(&relative_coordinates(&c)?)))
    };
    let start = reduce(&cfg.positions)?;
    let mut traj = Trajectory {
        n: system.n(),
        times: vec![0.0],
        drift: vec![sample(&system, &start.0)?],
        states: vec![start],
        positions: Some(vec![cfg.positions.clone()]),
        aborted: None,
    };
    let f = |q: &[Complex64]| -> Result<Vec<Complex64>> { point_vortex_velocities(q, g) };
    let shift = |q: &[Complex64], a: f64, v: &[Complex64]| -> Vec<Complex64> {
        q.iter().zip(v).map(|(q, v)| q + v * a).collect()
    };
    let mut q = cfg.positions.clone();
    for step in 1..=steps {
        let next = (|| -> Result<(Vec<Complex64>, CoordinateVector, DriftSample)> {
            let k1 = f(&q)?;
            let k2 = f(&shift(&q, 0.5 * h, &k1))?;
            let k3 = f(&shift(&q, 0.5 * h, &k2))?;
            let k4 = f(&shift(&q, h, &k3))?;
            let next: Vec<Complex64> = (0..q.len())
                .map(|i| q[i] + (k1[i] + k2[i] * 2.0 + k3[i] * 2.0 + k4[i]) * (h / 6.0))
                .collect();
            let state = reduce(&next)?;
            let s = sample(&system, &state.0)?;
            Ok((next, state, s))
        })();
        match next {
            Ok((next, state, s)) => {
                q = next;
                traj.times.push(step as f64 * h);
                traj.states.push(state);
                traj.drift.push(s);
                if let Some(p) = traj.positions.as_mut() {
                    p.push(q.clone());
                }
            }
            Err(e) => {
                traj.aborted = Some(format!("t={}: {e}", step as f64 * h));
                break;
            }
        }
    }
    Ok(traj)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftStat {
    pub max: f64,
    pub last: f64,
}

impl DriftStat {
    fn of(values: impl Iterator<Item = f64>) -> Self {
        let mut values = values.peekable();
        let first = values.peek().copied().unwrap_or(0.0);
        let mut max = 0.0_f64;
        let mut last = 0.0;
        for v in values {
            last = (v - first).abs();
            max = max.max(last);
        }
        Self { max, last }
    }
}

/// Maximum and final deviation of each recorded invariant from its
/// initial value. `residual_max` tracks the constraint sup-norm itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    pub samples: usize,
    pub hamiltonian: DriftStat,
    pub casimirs: Vec<DriftStat>,
    pub residuals: Vec<DriftStat>,
    pub residual_max: DriftStat,
}

pub fn invariant_drift_report(traj: &Trajectory) -> Result<DriftReport> {
    let first = traj.drift.first().ok_or(Error::EmptyTrajectory)?;
    let d = &traj.drift;
    Ok(DriftReport {
        samples: d.len(),
        hamiltonian: DriftStat::of(d.iter().map(|s| s.hamiltonian)),
        casimirs: (0..first.casimirs.len()).map(|j| DriftStat::of(d.iter().map(|s| s.casimirs[j]))).collect(),
        residuals: (0..first.residuals.len())
            .map(|j| DriftStat::of(d.iter().map(|s| s.residuals[j])))
            .collect(),
        residual_max: DriftStat::of(d.iter().map(|s| s.residual_max())),
    })
}
