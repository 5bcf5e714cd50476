//! Full-space vortex Hamiltonian and the reduced Hamiltonians on the
//! shape variables.
//!
//! Every logarithm in the reduced Hamiltonian has an argument that is a
//! squared inter-vortex distance, and every such distance is a linear
//! function of the coordinates of `mu = i z z^*`. The reduced Hamiltonian
//! is therefore stored as a list of weighted logs of linear forms, which
//! gives the value, gradient and Hessian in closed form:
//!
//! ```text
//! h(mu)    = -1/(4 pi) sum_t w_t ln(l_t . mu)
//! dh       = -1/(4 pi) sum_t w_t l_t / (l_t . mu)
//! d^2 h    =  1/(4 pi) sum_t w_t l_t l_t^T / (l_t . mu)^2
//! ```
//!
//! With zero total circulation the far vortex `q_N` is eliminated through
//! the linear impulse, assumed to vanish: `q_N - q_{N-1} = -(1/G_N) sum_i G_i z_i`.
//! The last log of that Hamiltonian is then `ln((1/G_N^2) |sum_i G_i z_i|^2)`,
//! i.e. its argument contains `G_i^2 mu_i` (not `G_i^2 ln mu_i`); the
//! pullback test in this module shows only the former reproduces `H`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::algebra::{flatten, offdiag_slot, Circulations, CoordinateVector, MuMatrix, Regime};
use crate::error::{Error, Result};

/// Minimum separation between two vortices, in length units.
pub const COLLISION_TOL: f64 = 1e-9;
/// Smallest admissible logarithm argument.
pub const LOG_FLOOR: f64 = 1e-300;

/// Positions of the vortices in the complex plane together with their
/// circulations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VortexConfiguration {
    pub positions: Vec<Complex64>,
    pub circ: Circulations,
}

impl VortexConfiguration {
    pub fn new(positions: Vec<Complex64>, circ: Circulations) -> Result<Self> {
        if positions.len() != circ.len() {
            return Err(Error::DimensionMismatch { expected: circ.len(), found: positions.len() });
        }
        check_collisions(&positions)?;
        Ok(Self { positions, circ })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// `sum_i G_i q_i`.
    pub fn linear_impulse(&self) -> Complex64 {
        self.positions.iter().zip(self.circ.gammas()).map(|(q, g)| q * g).sum()
    }
}

pub(crate) fn check_collisions(positions: &[Complex64]) -> Result<()> {
    for i in 0..positions.len() {
        for j in i + 1..positions.len() {
            let distance = (positions[i] - positions[j]).norm();
            if !(distance > COLLISION_TOL) {
                return Err(Error::Collision { i: i + 1, j: j + 1, distance });
            }
        }
    }
    Ok(())
}

/// `H(q) = -1/(4 pi) sum_{i<j} G_i G_j ln |q_i - q_j|^2`.
pub fn full_hamiltonian(cfg: &VortexConfiguration) -> Result<f64> {
    point_vortex_hamiltonian(&cfg.positions, cfg.circ.gammas())
}

/// [`full_hamiltonian`] on raw slices; accepts any number of vortices,
/// including the two-vortex case that [`Circulations`] excludes.
pub fn point_vortex_hamiltonian(q: &[Complex64], g: &[f64]) -> Result<f64> {
    if q.len() != g.len() {
        return Err(Error::DimensionMismatch { expected: g.len(), found: q.len() });
    }
    check_collisions(q)?;
    let mut acc = 0.0;
    for i in 0..q.len() {
        for j in i + 1..q.len() {
            acc += g[i] * g[j] * (q[i] - q[j]).norm_sqr().ln();
        }
    }
    Ok(-acc / (4.0 * PI))
}

/// One `w ln(l . mu)` term of the reduced Hamiltonian.
#[derive(Debug, Clone, PartialEq)]
pub struct LogTerm {
    pub weight: f64,
    pub form: Vec<f64>,
}

impl LogTerm {
    fn argument(&self, coords: &[f64]) -> f64 {
        self.form.iter().zip(coords).map(|(a, b)| a * b).sum()
    }
}

/// The reduced Hamiltonian of a circulation set, in either regime.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedHamiltonian {
    n: usize,
    terms: Vec<LogTerm>,
}

impl ReducedHamiltonian {
    pub fn new(circ: &Circulations) -> Self {
        let g = circ.gammas();
        let n = circ.reduced_dim();
        let count = g.len();
        // Coefficients of q_k - q_ref in the relative coordinates z.
        let coefficient = |k: usize| -> Vec<f64> {
            let mut c = vec![0.0; n];
            if k < n {
                c[k] = 1.0;
            } else if circ.regime() == Regime::ZeroTotal && k == count - 1 {
                let last = g[count - 1];
                for (j, cj) in c.iter_mut().enumerate() {
                    *cj = -g[j] / last;
                }
            }
            c
        };
        let coeffs: Vec<Vec<f64>> = (0..count).map(coefficient).collect();
        let mut terms = Vec::with_capacity(count * (count - 1) / 2);
        for a in 0..count {
            for b in a + 1..count {
                let d: Vec<f64> = coeffs[a].iter().zip(&coeffs[b]).map(|(x, y)| x - y).collect();
                terms.push(LogTerm { weight: g[a] * g[b], form: squared_norm_form(&d) });
            }
        }
        Self { n, terms }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn terms(&self) -> &[LogTerm] {
        &self.terms
    }

    fn arguments(&self, coords: &[f64]) -> Result<Vec<f64>> {
        if coords.len() != self.n * self.n {
            return Err(Error::DimensionMismatch { expected: self.n * self.n, found: coords.len() });
        }
        self.terms
            .iter()
            .map(|t| {
                let s = t.argument(coords);
                if s > LOG_FLOOR {
                    Ok(s)
                } else {
                    Err(Error::Domain(format!(
                        "log argument {s:e} is not positive (collision or infeasible shape)"
                    )))
                }
            })
            .collect()
    }

    pub fn value(&self, coords: &[f64]) -> Result<f64> {
        let args = self.arguments(coords)?;
        let acc: f64 = self.terms.iter().zip(&args).map(|(t, s)| t.weight * s.ln()).sum();
        Ok(-acc / (4.0 * PI))
    }

    /// Partial derivatives with respect to the flattened coordinates.
    pub fn gradient(&self, coords: &[f64]) -> Result<Vec<f64>> {
        let args = self.arguments(coords)?;
        let mut grad = vec![0.0; coords.len()];
        for (t, s) in self.terms.iter().zip(&args) {
            let f = -t.weight / (4.0 * PI * s);
            for (g, l) in grad.iter_mut().zip(&t.form) {
                *g += f * l;
            }
        }
        Ok(grad)
    }

    pub fn hessian(&self, coords: &[f64]) -> Result<DMatrix<f64>> {
        let args = self.arguments(coords)?;
        let dim = coords.len();
        let mut hess = DMatrix::zeros(dim, dim);
        for (t, s) in self.terms.iter().zip(&args) {
            let f = t.weight / (4.0 * PI * s * s);
            for r in 0..dim {
                if t.form[r] == 0.0 {
                    continue;
                }
                for c in 0..dim {
                    hess[(r, c)] += f * t.form[r] * t.form[c];
                }
            }
        }
        Ok(hess)
    }
}

/// Linear form `l` with `l . mu = |sum_j d_j z_j|^2` whenever `mu = i z z^*`.
fn squared_norm_form(d: &[f64]) -> Vec<f64> {
    let n = d.len();
    let mut form = vec![0.0; n * n];
    for j in 0..n {
        form[j] = d[j] * d[j];
        for k in j + 1..n {
            form[offdiag_slot(n, j, k)] = 2.0 * d[j] * d[k];
        }
    }
    form
}

fn check_regime(mu: &MuMatrix, circ: &Circulations) -> Result<()> {
    if mu.n() == circ.reduced_dim() {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected: circ.reduced_dim(), found: mu.n() })
    }
}

/// Reduced Hamiltonian `h(mu)`, or `h_0(mu)` when the total circulation vanishes.
pub fn reduced_hamiltonian(mu: &MuMatrix, circ: &Circulations) -> Result<f64> {
    check_regime(mu, circ)?;
    ReducedHamiltonian::new(circ).value(flatten(mu).as_slice())
}

/// The functional derivative `dh/dmu` together with the raw partials.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedGradient {
    pub matrix: MuMatrix,
    pub partials: Vec<f64>,
}

/// Assembles the algebra element `G` that represents the coordinate
/// partials `p` through the pairing, `<nu, G> = sum_k nu_k p_k`.
///
/// Diagonal entries are `2 i p_k`; the `(j,k)` entry above the diagonal is
/// `i (p_x + i p_y)`.
pub fn dual_matrix(partials: &[f64], n: usize) -> Result<MuMatrix> {
    if partials.len() != n * n {
        return Err(Error::DimensionMismatch { expected: n * n, found: partials.len() });
    }
    let mut h = DMatrix::<Complex64>::zeros(n, n);
    for k in 0..n {
        h[(k, k)] = Complex64::new(2.0 * partials[k], 0.0);
    }
    for j in 0..n {
        for k in j + 1..n {
            let s = offdiag_slot(n, j, k);
            h[(j, k)] = Complex64::new(partials[s], partials[s + 1]);
        }
    }
    Ok(MuMatrix::from_hermitian(&h))
}

pub fn reduced_gradient(mu: &MuMatrix, circ: &Circulations) -> Result<ReducedGradient> {
    check_regime(mu, circ)?;
    let partials = ReducedHamiltonian::new(circ).gradient(flatten(mu).as_slice())?;
    let matrix = dual_matrix(&partials, mu.n())?;
    Ok(ReducedGradient { matrix, partials })
}

/// Finite-difference step used for derivative cross-checks.
pub fn fd_step(coords: &CoordinateVector) -> f64 {
    let inf = coords.0.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    1e-6 * (1.0 + inf)
}
