//! Linear stability from the spectrum of the linearized Lie-Poisson field,
//! and the Energy-Casimir certificate on the rank-one constraint set.
//!
//! The combined function is `f = a0 4 pi h + sum a_j C_j + sum b_i R_i +
//! sum (c_ij Re R_ij + d_ij Im R_ij)`; the `4 pi` keeps the multipliers free
//! of `1/pi` factors and does not affect any sign.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Schur};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::algebra::{coordinate_basis, flatten, Circulations, CouplingMatrix, MuMatrix};
#[cfg(test)]
use crate::algebra::{unflatten, CoordinateVector};
use crate::constraints::{
    casimir_gradient, casimir_hessian, check_open_set, constraint_count, constraint_hessians,
    constraint_jacobian, constraint_residuals, RANK_RTOL,
};
use crate::dynamics::LiePoissonSystem;
use crate::error::{Error, Result};
use crate::hamiltonian::{dual_matrix, fd_step};
use crate::linalg;

/// Real parts above this are instabilities.
pub const SPEC_TOL: f64 = 1e-8;
/// Largest `|X_h(mu0)|_inf` accepted at a fixed point.
pub const FP_TOL: f64 = 1e-9;
/// Largest `|Df(mu0)|_inf` accepted after the multiplier solve.
pub const MULTIPLIER_TOL: f64 = 1e-8;
/// Constraint residual admitted for a point on the rank-one set, relative
/// to `1 + |mu|^2`.
pub const RANK_ONE_TOL: f64 = 1e-8;
/// Scale applied to `h` inside the combined function.
pub const ENERGY_SCALE: f64 = 4.0 * PI;
/// Seed of the generator used for randomized multiplier retries.
pub const DEFAULT_SEED: u64 = 0x5eed_2024;
/// Random elements of the affine solution set tried per sign of `a0`.
pub const RETRIES: usize = 8;

#[cfg(test)]
fn mu_from(coords: &[f64], n: usize) -> Result<MuMatrix> {
    unflatten(&CoordinateVector(coords.to_vec()), n)
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPointCheck {
    pub residual: f64,
    pub ok: bool,
}

pub fn is_fixed_point(mu0: &MuMatrix, circ: &Circulations) -> Result<FixedPointCheck> {
    let sys = LiePoissonSystem::new(circ)?;
    let x = sys.vector_field_coords(flatten(mu0).as_slice())?;
    let residual = inf_norm(&x);
    Ok(FixedPointCheck { residual, ok: residual < FP_TOL })
}

/// Jacobian of the flattened Lie-Poisson field at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct Linearization {
    pub matrix: DMatrix<f64>,
    /// `|X_h(mu0)|_inf`.
    pub residual: f64,
    /// False when `mu0` is not a fixed point; the matrix is still valid as
    /// a Jacobian but its spectrum has no stability meaning.
    pub at_fixed_point: bool,
}

/// Analytic Jacobian: with `G = dh/dmu` and `G' = dual(D^2 h . v)`,
/// `DX[v] = -v G K^{-1} - mu G' K^{-1} + K^{-1} G' mu + K^{-1} G v`.
pub fn linearize(mu0: &MuMatrix, circ: &Circulations) -> Result<Linearization> {
    let sys = LiePoissonSystem::new(circ)?;
    let n = sys.n();
    if mu0.n() != n {
        return Err(Error::DimensionMismatch { expected: n, found: mu0.n() });
    }
    let x = flatten(mu0);
    let grad = sys.hamiltonian().gradient(x.as_slice())?;
    let hess = sys.hamiltonian().hessian(x.as_slice())?;
    let g = dual_matrix(&grad, n)?;
    let kinv = sys.coupling().complex_inverse();
    let m = mu0.entries();
    let g_kinv = g.entries() * &kinv;
    let kinv_g = &kinv * g.entries();
    let dim = n * n;
    let mut a = DMatrix::zeros(dim, dim);
    for s in 0..dim {
        let v = coordinate_basis(n, s);
        let dg: Vec<f64> = hess.column(s).iter().copied().collect();
        let gp = dual_matrix(&dg, n)?;
        let out = -(v.entries() * &g_kinv) - m * gp.entries() * &kinv
            + &kinv * gp.entries() * m
            + &kinv_g * v.entries();
        let col = flatten(&MuMatrix::from_entries_unchecked(out)).0;
        a.set_column(s, &DVector::from_vec(col));
    }
    let field = sys.vector_field_coords(x.as_slice())?;
    let residual = inf_norm(&field);
    Ok(Linearization { matrix: a, residual, at_fixed_point: residual < FP_TOL })
}

/// Central-difference Jacobian of the flattened field, for cross-checks.
pub fn linearize_fd(mu0: &MuMatrix, circ: &Circulations) -> Result<DMatrix<f64>> {
    let sys = LiePoissonSystem::new(circ)?;
    let x = flatten(mu0);
    let h = fd_step(&x);
    let dim = x.len();
    let mut a = DMatrix::zeros(dim, dim);
    for s in 0..dim {
        let mut p = x.0.clone();
        let mut m = x.0.clone();
        p[s] += h;
        m[s] -= h;
        let fp = sys.vector_field_coords(&p)?;
        let fm = sys.vector_field_coords(&m)?;
        for r in 0..dim {
            a[(r, s)] = (fp[r] - fm[r]) / (2.0 * h);
        }
    }
    Ok(a)
}

/// Eigenvalues of a real square matrix via the real Schur form, sorted by
/// `(Re, Im)`.
pub fn spectrum(a: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch { expected: a.nrows(), found: a.ncols() });
    }
    if a.is_empty() {
        return Ok(Vec::new());
    }
    let schur = Schur::try_new(a.clone(), f64::EPSILON, 10_000).ok_or(Error::NoConvergence)?;
    let mut ev: Vec<Complex64> = schur.complex_eigenvalues().iter().copied().collect();
    ev.sort_by(|x, y| x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im)));
    Ok(ev)
}

pub fn max_real_part(ev: &[Complex64]) -> f64 {
    ev.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
}

/// Distance between two multisets of complex numbers: the largest gap
/// in a greedy nearest-pair matching. Infinite if the sizes differ.
pub fn multiset_distance(a: &[Complex64], b: &[Complex64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(a.len() * b.len());
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            pairs.push(((x - y).norm(), i, j));
        }
    }
    pairs.sort_by(|p, q| p.0.total_cmp(&q.0));
    let mut used_a = vec![false; a.len()];
    let mut used_b = vec![false; b.len()];
    let mut worst: f64 = 0.0;
    for (d, i, j) in pairs {
        if !used_a[i] && !used_b[j] {
            used_a[i] = true;
            used_b[j] = true;
            worst = worst.max(d);
        }
    }
    worst
}

/// Fails unless `mu0` lies in the open set and on the rank-one set.
pub fn check_constraint_set(mu0: &MuMatrix) -> Result<()> {
    check_open_set(mu0)?;
    let r = constraint_residuals(mu0).max_abs();
    let scale = 1.0 + flatten(mu0).0.iter().map(|x| x * x).sum::<f64>();
    if r > RANK_ONE_TOL * scale {
        return Err(Error::NotInOpenSet(format!("constraint residual {r:e}: point is not rank one")));
    }
    Ok(())
}

/// Columns `[DC_j for j in casimirs | DR_k for all k]`.
fn gradient_columns(mu0: &MuMatrix, k: &CouplingMatrix, casimirs: &[usize]) -> Result<DMatrix<f64>> {
    let dim = mu0.n() * mu0.n();
    let jac = constraint_jacobian(mu0);
    let cols = casimirs.len() + jac.nrows();
    let mut g = DMatrix::zeros(dim, cols);
    for (c, &j) in casimirs.iter().enumerate() {
        g.set_column(c, &DVector::from_vec(casimir_gradient(mu0, k, j)?));
    }
    for r in 0..jac.nrows() {
        g.set_column(casimirs.len() + r, &jac.row(r).transpose());
    }
    Ok(g)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndependenceReport {
    pub independent: bool,
    pub rank: usize,
    pub expected: usize,
    /// Casimir orders whose differential lies in the span of `DR`.
    pub dependent_on_constraints: Vec<usize>,
}

pub fn independence_check(
    mu0: &MuMatrix,
    circ: &Circulations,
    casimirs: &[usize],
) -> Result<IndependenceReport> {
    check_constraint_set(mu0)?;
    let k = CouplingMatrix::new(circ)?;
    let g = gradient_columns(mu0, &k, casimirs)?;
    let rank = linalg::numerical_rank(&g, RANK_RTOL);
    let expected = g.ncols();
    let jac = constraint_jacobian(mu0).transpose();
    let base_rank = linalg::numerical_rank(&jac, RANK_RTOL);
    let mut dependent = Vec::new();
    for &j in casimirs {
        let mut stacked = jac.clone().insert_column(jac.ncols(), 0.0);
        stacked.set_column(jac.ncols(), &DVector::from_vec(casimir_gradient(mu0, &k, j)?));
        if linalg::numerical_rank(&stacked, RANK_RTOL) == base_rank {
            dependent.push(j);
        }
    }
    Ok(IndependenceReport {
        independent: rank == expected,
        rank,
        expected,
        dependent_on_constraints: dependent,
    })
}

/// Coefficients of the combined function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiplierSet {
    pub a0: f64,
    /// Casimir orders paired with `a`.
    pub casimirs: Vec<usize>,
    pub a: Vec<f64>,
    /// Coefficients of `R_1..R_{n-1}`.
    pub b: Vec<f64>,
    /// Coefficients of `Re R_ij`, pairs in row-major order.
    pub c: Vec<f64>,
    /// Coefficients of `Im R_ij`.
    pub d: Vec<f64>,
    /// `|Df(mu0)|_inf`, re-evaluated after the solve.
    pub residual: f64,
    pub solution_space_dim: usize,
}

impl MultiplierSet {
    fn from_vector(a0: f64, casimirs: &[usize], n: usize, x: &[f64]) -> Self {
        let kc = casimirs.len();
        let nb = n.saturating_sub(1);
        let rest = &x[kc + nb..];
        Self {
            a0,
            casimirs: casimirs.to_vec(),
            a: x[..kc].to_vec(),
            b: x[kc..kc + nb].to_vec(),
            c: rest.iter().step_by(2).copied().collect(),
            d: rest.iter().skip(1).step_by(2).copied().collect(),
            residual: f64::NAN,
            solution_space_dim: 0,
        }
    }

    /// Constraint coefficients in the order of the constraint vector.
    pub fn constraint_coefficients(&self) -> Vec<f64> {
        let mut out = self.b.clone();
        for (c, d) in self.c.iter().zip(&self.d) {
            out.push(*c);
            out.push(*d);
        }
        out
    }

    /// `(a_1..a_K, b, c_12, d_12, ...)`, the printed ordering.
    pub fn to_vector(&self) -> Vec<f64> {
        let mut out = self.a.clone();
        out.extend(self.constraint_coefficients());
        out
    }
}

/// `Df(mu0)` in flattened coordinates, from scratch.
pub fn combined_gradient(mu0: &MuMatrix, circ: &Circulations, m: &MultiplierSet) -> Result<Vec<f64>> {
    let sys = LiePoissonSystem::new(circ)?;
    let x = flatten(mu0);
    let mut df: Vec<f64> =
        sys.hamiltonian().gradient(x.as_slice())?.into_iter().map(|g| m.a0 * ENERGY_SCALE * g).collect();
    for (&j, &aj) in m.casimirs.iter().zip(&m.a) {
        for (d, g) in df.iter_mut().zip(casimir_gradient(mu0, sys.coupling(), j)?) {
            *d += aj * g;
        }
    }
    let jac = constraint_jacobian(mu0);
    for (r, coef) in m.constraint_coefficients().iter().enumerate() {
        for (s, d) in df.iter_mut().enumerate() {
            *d += coef * jac[(r, s)];
        }
    }
    Ok(df)
}

/// Minimal-norm solution, the residual and the null space of the solve.
struct MultiplierSolve {
    set: MultiplierSet,
    vector: DVector<f64>,
    null: DMatrix<f64>,
}

fn solve_multipliers_full(
    mu0: &MuMatrix,
    circ: &Circulations,
    casimirs: &[usize],
    a0: f64,
) -> Result<MultiplierSolve> {
    if a0 != 1.0 && a0 != -1.0 {
        return Err(Error::InvalidArgument(format!("a0 must be +1 or -1, got {a0}")));
    }
    let sys = LiePoissonSystem::new(circ)?;
    let n = sys.n();
    let g = gradient_columns(mu0, sys.coupling(), casimirs)?;
    let grad_h = sys.hamiltonian().gradient(flatten(mu0).as_slice())?;
    let rhs = DVector::from_iterator(grad_h.len(), grad_h.iter().map(|x| -a0 * ENERGY_SCALE * x));
    let (x, _, nullity) = linalg::min_norm_solve(&g, &rhs, RANK_RTOL);
    let null = linalg::null_space(&g, RANK_RTOL);
    let mut set = MultiplierSet::from_vector(a0, casimirs, n, x.as_slice());
    set.solution_space_dim = nullity;
    set.residual = inf_norm(&combined_gradient(mu0, circ, &set)?);
    if !(set.residual <= MULTIPLIER_TOL) {
        return Err(Error::Infeasible { residual: set.residual });
    }
    Ok(MultiplierSolve { set, vector: x, null })
}

/// Solves `Df(mu0) = 0` for every coefficient except the fixed `a0`.
pub fn solve_multiplier_system(
    mu0: &MuMatrix,
    circ: &Circulations,
    casimirs: &[usize],
    a0: f64,
) -> Result<MultiplierSet> {
    Ok(solve_multipliers_full(mu0, circ, casimirs, a0)?.set)
}

/// Orthonormal basis (columns) of the tangent space of the level set
/// `{R = 0, C_j = C_j(mu0)}` at `mu0`.
pub fn tangent_basis(mu0: &MuMatrix, circ: &Circulations, casimirs: &[usize]) -> Result<DMatrix<f64>> {
    let k = CouplingMatrix::new(circ)?;
    let n = mu0.n();
    let g = gradient_columns(mu0, &k, casimirs)?;
    let basis = linalg::null_space(&g.transpose(), RANK_RTOL);
    let expected = (n * n).saturating_sub(constraint_count(n) + casimirs.len());
    if basis.ncols() != expected {
        return Err(Error::RankDeficiency { expected, found: basis.ncols() });
    }
    Ok(basis)
}

/// `D^2 f(mu0)`.
pub fn combined_hessian(mu0: &MuMatrix, circ: &Circulations, m: &MultiplierSet) -> Result<DMatrix<f64>> {
    let sys = LiePoissonSystem::new(circ)?;
    let n = sys.n();
    let mut hess = sys.hamiltonian().hessian(flatten(mu0).as_slice())? * (m.a0 * ENERGY_SCALE);
    for (&j, &aj) in m.casimirs.iter().zip(&m.a) {
        if aj != 0.0 {
            hess += casimir_hessian(mu0, sys.coupling(), j)? * aj;
        }
    }
    for (q, coef) in constraint_hessians(n).iter().zip(m.constraint_coefficients()) {
        hess += q * coef;
    }
    Ok(hess)
}

/// `V^T D^2 f(mu0) V` for a basis given as the columns of `basis`.
pub fn restricted_hessian(
    mu0: &MuMatrix,
    circ: &Circulations,
    m: &MultiplierSet,
    basis: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let dim = mu0.n() * mu0.n();
    if basis.nrows() != dim {
        return Err(Error::DimensionMismatch { expected: dim, found: basis.nrows() });
    }
    let h = combined_hessian(mu0, circ, m)?;
    Ok(basis.transpose() * h * basis)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SylvesterResult {
    pub positive_definite: bool,
    pub minors: Vec<f64>,
    pub min_eigenvalue: f64,
    /// Whether the minor test and the eigenvalue test agree.
    pub consistent: bool,
}

pub fn minor_tol(h: &DMatrix<f64>) -> f64 {
    1e-10 * (1.0 + linalg::norm_inf(h))
}

pub fn sylvester_verdict(h: &DMatrix<f64>) -> SylvesterResult {
    let sym = (h + h.transpose()) * 0.5;
    let minors = linalg::leading_minors(&sym);
    let tol = minor_tol(&sym);
    let by_minors = minors.iter().all(|&d| d > tol);
    let min_eigenvalue =
        if sym.is_empty() { f64::INFINITY } else { sym.clone().symmetric_eigenvalues().min() };
    let by_eigen = min_eigenvalue > 0.0;
    SylvesterResult {
        positive_definite: by_minors && by_eigen,
        minors,
        min_eigenvalue,
        consistent: by_minors == by_eigen,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    CertifiedStable,
    LinearlyUnstable,
    Inconclusive,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::CertifiedStable => "CertifiedStable",
            Verdict::LinearlyUnstable => "LinearlyUnstable",
            Verdict::Inconclusive => "Inconclusive",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateResult {
    pub verdict: Verdict,
    pub spectrum: Vec<Complex64>,
    pub max_real_part: f64,
    pub multipliers: Option<MultiplierSet>,
    /// Tangent basis vectors, one per entry.
    pub tangent_basis: Option<Vec<Vec<f64>>>,
    pub restricted_hessian: Option<Vec<Vec<f64>>>,
    pub minors: Option<Vec<f64>>,
    pub reason: Option<String>,
    /// Seed of the retry generator.
    pub seed: u64,
    /// Which element of the solution set certified: 0 for the
    /// minimal-norm solution, `k` for the `k`-th random retry.
    pub candidate: Option<usize>,
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn to_columns(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.column_iter().map(|c| c.iter().copied().collect()).collect()
}

struct Attempt {
    set: MultiplierSet,
    hessian: DMatrix<f64>,
    sylvester: SylvesterResult,
    candidate: usize,
}

/// Tries the minimal-norm multipliers, then up to [`RETRIES`] random
/// elements of the affine solution set, returning the first certifying
/// attempt or the minimal-norm one.
fn attempt_sign(
    mu0: &MuMatrix,
    circ: &Circulations,
    basis: &DMatrix<f64>,
    solve: &MultiplierSolve,
    rng: &mut ChaCha8Rng,
) -> Result<(Attempt, bool)> {
    let n = mu0.n();
    let evaluate = |set: MultiplierSet, candidate: usize| -> Result<Attempt> {
        let hessian = restricted_hessian(mu0, circ, &set, basis)?;
        let sylvester = sylvester_verdict(&hessian);
        Ok(Attempt { set, hessian, sylvester, candidate })
    };
    let first = evaluate(solve.set.clone(), 0)?;
    if first.sylvester.positive_definite || solve.null.ncols() == 0 {
        let ok = first.sylvester.positive_definite;
        return Ok((first, ok));
    }
    let scale = 1.0 + solve.vector.amax();
    for k in 1..=RETRIES {
        let xi = DVector::from_fn(solve.null.ncols(), |_, _| rng.random_range(-1.0..1.0) * scale);
        let x = &solve.vector + &solve.null * xi;
        let mut set = MultiplierSet::from_vector(solve.set.a0, &solve.set.casimirs, n, x.as_slice());
        set.solution_space_dim = solve.set.solution_space_dim;
        set.residual = inf_norm(&combined_gradient(mu0, circ, &set)?);
        if set.residual > MULTIPLIER_TOL {
            continue;
        }
        let attempt = evaluate(set, k)?;
        if attempt.sylvester.positive_definite {
            return Ok((attempt, true));
        }
    }
    Ok((first, false))
}

/// Runs the full pipeline: spectrum, independence, and for `a0 = +1, -1`
/// the multiplier solve, tangent basis, restricted Hessian and Sylvester
/// test.
pub fn energy_casimir_certificate(
    mu0: &MuMatrix,
    circ: &Circulations,
    casimirs: &[usize],
    seed: u64,
) -> Result<CertificateResult> {
    let fp = is_fixed_point(mu0, circ)?;
    if !fp.ok {
        return Err(Error::NotAFixedPoint { residual: fp.residual });
    }
    check_constraint_set(mu0)?;
    let lin = linearize(mu0, circ)?;
    let spectrum = spectrum(&lin.matrix)?;
    let max_re = max_real_part(&spectrum);
    let mut result = CertificateResult {
        verdict: Verdict::Inconclusive,
        spectrum,
        max_real_part: max_re,
        multipliers: None,
        tangent_basis: None,
        restricted_hessian: None,
        minors: None,
        reason: None,
        seed,
        candidate: None,
    };
    if max_re > SPEC_TOL {
        result.verdict = Verdict::LinearlyUnstable;
        return Ok(result);
    }
    let indep = independence_check(mu0, circ, casimirs)?;
    if !indep.independent {
        result.reason = Some(format!(
            "differentials not independent: rank {} of {}; Casimirs dependent on the constraints: {:?}",
            indep.rank, indep.expected, indep.dependent_on_constraints
        ));
        return Ok(result);
    }
    let basis = tangent_basis(mu0, circ, casimirs)?;
    result.tangent_basis = Some(to_columns(&basis));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut notes = Vec::new();
    for a0 in [1.0, -1.0] {
        let solve = match solve_multipliers_full(mu0, circ, casimirs, a0) {
            Ok(s) => s,
            Err(Error::Infeasible { residual }) => {
                notes.push(format!("a0 = {a0:+}: no critical combination (residual {residual:e})"));
                continue;
            }
            Err(e) => return Err(e),
        };
        let (attempt, certified) = attempt_sign(mu0, circ, &basis, &solve, &mut rng)?;
        let keep = certified || result.multipliers.is_none();
        if keep {
            result.multipliers = Some(attempt.set);
            result.restricted_hessian = Some(to_rows(&attempt.hessian));
            result.minors = Some(attempt.sylvester.minors.clone());
        }
        if certified {
            let max_abs_re = result.spectrum.iter().map(|z| z.re.abs()).fold(0.0, f64::max);
            if max_abs_re > SPEC_TOL {
                result.reason =
                    Some(format!("definite restricted Hessian contradicts spectrum (|Re| = {max_abs_re:e})"));
                return Ok(result);
            }
            result.verdict = Verdict::CertifiedStable;
            result.candidate = Some(attempt.candidate);
            return Ok(result);
        }
        notes.push(format!(
            "a0 = {a0:+}: restricted Hessian not positive definite (minors {:?})",
            attempt.sylvester.minors
        ));
    }
    result.reason = Some(notes.join("; "));
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn circ(g: &[f64]) -> Circulations {
        Circulations::new(g.to_vec()).unwrap()
    }

    fn mu_of(c: &[f64]) -> MuMatrix {
        let n = (c.len() as f64).sqrt().round() as usize;
        mu_from(c, n).unwrap()
    }

    fn s3() -> f64 {
        3f64.sqrt()
    }

    fn triangle() -> MuMatrix {
        mu_of(&[1.0, 1.0, 0.5, -s3() / 2.0])
    }

    fn triangle_center() -> MuMatrix {
        let h = s3() / 2.0;
        mu_of(&[1.0, 1.0, 1.0, -0.5, -h, -0.5, h, -0.5, -h])
    }

    fn square_center() -> MuMatrix {
        mu_of(&[1.0, 1.0, 1.0, 1.0, 0.0, -1.0, -1.0, 0.0, 0.0, 1.0, 0.0, -1.0, -1.0, 0.0, 0.0, -1.0])
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn fixed_point_examples() {
        let fp = is_fixed_point(&triangle(), &circ(&[1.0, 1.0, 1.0])).unwrap();
        assert!(fp.ok && fp.residual < 1e-12);
        let moved = mu_of(&[1.1, 1.0, 0.5, -s3() / 2.0]);
        assert!(!is_fixed_point(&moved, &circ(&[1.0, 1.0, 1.0])).unwrap().ok);
        for g in [0.5, 1.0, -1.0, 3.0, -7.0] {
            assert!(is_fixed_point(&square_center(), &circ(&[1.0, 1.0, 1.0, 1.0, g])).unwrap().ok);
        }
    }

    #[test]
    fn three_vortex_linearization_matches_printed_matrix() {
        for g in [[1.0, 1.0, 1.0], [1.0, 2.0, -0.5], [0.3, -1.7, 2.2]] {
            let (g1, g2, g3) = (g[0], g[1], g[2]);
            let r3 = s3();
            #[rustfmt::skip]
            let printed = DMatrix::from_row_slice(4, 4, &[
                -2.0 * r3 * g2, 0.0, 4.0 * r3 * g2, 0.0,
                0.0, 2.0 * r3 * g1, -4.0 * r3 * g1, 0.0,
                -r3 * (g2 + g3), r3 * (g1 + g3), 2.0 * r3 * (g2 - g1), 0.0,
                g2 - g3, g3 - g1, 2.0 * (g1 - g2), 0.0,
            ]) / (4.0 * PI);
            let lin = linearize(&triangle(), &circ(&g)).unwrap();
            assert!(lin.at_fixed_point);
            assert!((&lin.matrix - &printed).amax() < 1e-8, "{g:?}\n{}\n{}", lin.matrix, printed);
            assert!(lin.matrix.column(3).amax() < 1e-14);
        }
    }

    #[test]
    fn analytic_linearization_matches_differences() {
        let cases = [
            (triangle(), circ(&[1.0, 2.0, -0.5])),
            (triangle_center(), circ(&[1.0, 1.0, 1.0, 0.5])),
            (triangle_center(), circ(&[1.0, 1.0, 1.0, -4.0])),
            (square_center(), circ(&[1.0, 1.0, 1.0, 1.0, 2.0])),
            (mu_of(&[3.0, 3.0, 1.5, -1.5 * s3()]), circ(&[1.0, 1.0, 1.0, -3.0])),
            (mu_of(&[2.0, 4.0, 2.0, 2.0, -2.0, 0.0, -2.0, 2.0, -2.0]), circ(&[1.0, 1.0, 1.0, 1.0, -4.0])),
        ];
        for (mu, cc) in cases {
            let a = linearize(&mu, &cc).unwrap().matrix;
            let fd = linearize_fd(&mu, &cc).unwrap();
            for (x, y) in a.iter().zip(fd.iter()) {
                assert!((x - y).abs() <= 1e-6 * (1.0 + x.abs()), "{x} vs {y}");
            }
        }
    }

    #[test]
    fn linearization_flags_non_fixed_points() {
        let lin = linearize(&mu_of(&[1.1, 1.0, 0.5, -s3() / 2.0]), &circ(&[1.0, 1.0, 1.0])).unwrap();
        assert!(!lin.at_fixed_point && lin.residual > 1e-3);
    }

    #[test]
    fn spectrum_examples() {
        let a = linearize(&triangle(), &circ(&[1.0, 1.0, 1.0])).unwrap().matrix;
        let w = 3.0 / (2.0 * PI);
        let expect = [c(0.0, 0.0), c(0.0, 0.0), c(0.0, w), c(0.0, -w)];
        let got = spectrum(&a).unwrap();
        assert!(multiset_distance(&got, &expect) < 1e-8, "{got:?}");

        let a = linearize(&triangle_center(), &circ(&[1.0, 1.0, 1.0, 2.0])).unwrap().matrix;
        let r = 1.0 / (2.0 * PI);
        let expect = [
            c(0.0, 1.0 / PI),
            c(0.0, -1.0 / PI),
            c(r, 0.0),
            c(r, 0.0),
            c(-r, 0.0),
            c(-r, 0.0),
            c(0.0, 0.0),
            c(0.0, 0.0),
            c(0.0, 0.0),
        ];
        let got = spectrum(&a).unwrap();
        assert!(multiset_distance(&got, &expect) < 1e-8, "{got:?}");
        // sorted by real part
        assert!(got.windows(2).all(|p| p[0].re <= p[1].re));
        assert!(spectrum(&DMatrix::zeros(2, 3)).is_err());
        assert!(spectrum(&DMatrix::zeros(0, 0)).unwrap().is_empty());
    }

    #[test]
    fn zero_total_square_spectrum() {
        let mu = mu_of(&[2.0, 4.0, 2.0, 2.0, -2.0, 0.0, -2.0, 2.0, -2.0]);
        let a = linearize(&mu, &circ(&[1.0, 1.0, 1.0, 1.0, -4.0])).unwrap().matrix;
        let r = 3.5f64.sqrt() / PI;
        let expect = [
            c(r, 0.0),
            c(-r, 0.0),
            c(0.0, 5.0 / (4.0 * PI)),
            c(0.0, -5.0 / (4.0 * PI)),
            c(0.0, 1.0 / (4.0 * PI)),
            c(0.0, -1.0 / (4.0 * PI)),
            c(0.0, 0.0),
            c(0.0, 0.0),
            c(0.0, 0.0),
        ];
        let got = spectrum(&a).unwrap();
        assert!(multiset_distance(&got, &expect) < 1e-8, "{got:?}");
    }

    #[test]
    fn multiset_distance_basics() {
        let a = [c(1.0, 0.0), c(0.0, 1.0)];
        let b = [c(0.0, 1.0), c(1.0, 1e-9)];
        assert!(multiset_distance(&a, &b) <= 1e-9);
        assert!(multiset_distance(&a, &b[..1]).is_infinite());
    }

    #[test]
    fn independence_examples() {
        let tc = circ(&[1.0, 1.0, 1.0, 1.0]);
        let rep = independence_check(&triangle_center(), &tc, &[1]).unwrap();
        assert!(rep.independent);
        assert_eq!((rep.rank, rep.expected), (5, 5));
        let rep = independence_check(&triangle_center(), &tc, &[1, 2, 3]).unwrap();
        assert!(!rep.independent);
        assert_eq!(rep.rank, 5);
        let rep = independence_check(&square_center(), &circ(&[1.0, 1.0, 1.0, 1.0, 1.0]), &[1]).unwrap();
        assert!(rep.independent);
        assert_eq!(rep.rank, 10);
        let mut bad = flatten(&triangle_center()).0;
        bad[3] = 0.0;
        bad[4] = 0.0;
        assert!(matches!(independence_check(&mu_of(&bad), &tc, &[1]), Err(Error::NotInOpenSet(_))));
    }

    #[test]
    fn multipliers_three_vortices() {
        for g in [[1.0, 1.0, 1.0], [1.0, 2.0, 0.5], [2.0, -0.3, 1.4]] {
            let cc = circ(&g);
            let m = solve_multiplier_system(&triangle(), &cc, &[1], 1.0).unwrap();
            assert!(m.residual < 1e-8);
            assert_eq!(m.solution_space_dim, 0);
            assert!((m.a[0] - cc.total()).abs() <= 1e-8 * cc.total().abs());
            assert!(m.b[0].abs() < 1e-8);
            let m = solve_multiplier_system(&triangle(), &cc, &[1], -1.0).unwrap();
            assert!((m.a[0] + cc.total()).abs() <= 1e-8 * cc.total().abs());
        }
        assert!(solve_multiplier_system(&triangle(), &circ(&[1.0; 3]), &[1], 0.5).is_err());
    }

    #[test]
    fn multipliers_triangle_with_center() {
        for g in [-5.0, -2.0, 0.5, 2.0, 5.0] {
            let m =
                solve_multiplier_system(&triangle_center(), &circ(&[1.0, 1.0, 1.0, g]), &[1], 1.0).unwrap();
            let q = 2.0 * g / (3.0 * (g + 3.0));
            let expect = [g + 1.0, q, q, -2.0 * q, 0.0];
            for (x, y) in m.to_vector().iter().zip(expect) {
                assert!((x - y).abs() <= 1e-8 * y.abs().max(1.0), "γ={g}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn multipliers_square_with_center() {
        for g in [-1.0, 0.5, 1.0, 2.0, 3.0] {
            let m = solve_multiplier_system(&square_center(), &circ(&[1.0, 1.0, 1.0, 1.0, g]), &[1], 1.0)
                .unwrap();
            let p = (3.0 * g + 2.0) / (g + 4.0);
            let q = (g - 1.0) / (g + 4.0);
            let expect =
                [(2.0 * g + 3.0) / 2.0, p / 4.0, p / 2.0, p / 4.0, -p / 2.0, -q, 0.0, q, -p / 2.0, -q];
            for (x, y) in m.to_vector().iter().zip(expect) {
                assert!((x - y).abs() <= 1e-8 * y.abs().max(1.0), "γ={g}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn infeasible_multipliers_reported() {
        // Not a critical point of the combined function: no Casimirs at all
        // on a 3x3 problem leaves DR alone unable to cancel Dh.
        let r = solve_multiplier_system(&triangle_center(), &circ(&[1.0, 1.0, 1.0, 0.5]), &[], 1.0);
        assert!(matches!(r, Err(Error::Infeasible { .. })), "{r:?}");
    }

    #[test]
    fn tangent_basis_dimensions() {
        let tc = circ(&[1.0, 1.0, 1.0, 0.5]);
        let b = tangent_basis(&triangle_center(), &tc, &[1]).unwrap();
        assert_eq!(b.ncols(), 4);
        let sq = circ(&[1.0, 1.0, 1.0, 1.0, 1.0]);
        let b = tangent_basis(&square_center(), &sq, &[1]).unwrap();
        assert_eq!(b.ncols(), 6);
        let k = CouplingMatrix::new(&sq).unwrap();
        let g = gradient_columns(&square_center(), &k, &[1]).unwrap();
        assert!((g.transpose() * &b).amax() < 1e-10);
        assert!(matches!(
            tangent_basis(&triangle_center(), &tc, &[1, 2, 3]),
            Err(Error::RankDeficiency { .. })
        ));
    }

    #[test]
    fn zero_total_triangle_tangent_space_and_hessian() {
        let mu = mu_of(&[3.0, 3.0, 1.5, -1.5 * s3()]);
        let cc = circ(&[1.0, 1.0, 1.0, -3.0]);
        let b = tangent_basis(&mu, &cc, &[1]).unwrap();
        assert_eq!(b.ncols(), 2);
        let printed = DMatrix::from_column_slice(4, 2, &[1.0, 0.0, 1.0, 0.0, -1.0, 1.0, 0.0, 0.0]);
        // the printed vectors lie in the computed span and vice versa
        let proj = &b * b.transpose();
        assert!((&proj * &printed - &printed).amax() < 1e-10);
        assert_eq!(linalg::numerical_rank(&printed, 1e-10), 2);

        for a0 in [1.0, -1.0] {
            let m = solve_multiplier_system(&mu, &cc, &[1], a0).unwrap();
            // printed: c1 = -2 c0, c2 = 0
            assert_abs_diff_eq!(m.a[0], -2.0 * a0, epsilon = 1e-10);
            assert_abs_diff_eq!(m.b[0], 0.0, epsilon = 1e-10);
            let h = restricted_hessian(&mu, &cc, &m, &printed).unwrap();
            let expect = DMatrix::from_row_slice(2, 2, &[-4.0, 2.0, 2.0, -4.0]) * (a0 / 9.0);
            assert!((&h - &expect).amax() < 1e-10, "{h}");
        }
    }

    #[test]
    fn sylvester_examples() {
        let r = sylvester_verdict(&DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 3.0]));
        assert!(r.positive_definite && r.consistent);
        assert_abs_diff_eq!(r.minors[1], 6.0, epsilon = 1e-14);
        let r = sylvester_verdict(&(DMatrix::from_row_slice(2, 2, &[-4.0, 2.0, 2.0, -4.0]) * (-1.0 / 9.0)));
        assert!(r.positive_definite);
        assert_abs_diff_eq!(r.minors[0], 4.0 / 9.0, epsilon = 1e-14);
        assert_abs_diff_eq!(r.minors[1], 4.0 / 27.0, epsilon = 1e-14);
        let r = sylvester_verdict(&DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]));
        assert!(!r.positive_definite && r.consistent);
        assert_abs_diff_eq!(r.minors[1], -3.0, epsilon = 1e-14);
    }

    fn closed_form_minors_triangle(g: f64) -> [f64; 4] {
        let p = 9.0 * g * g + 20.0 * g + 3.0;
        let s = g + 3.0;
        [
            2.0 * p / (3.0 * s),
            -16.0 * g * (g - 1.0) / (3.0 * s),
            -8.0 * g * (g - 1.0) * p / (3.0 * s * s),
            16.0 * (g - 1.0).powi(2) * g * g / (s * s),
        ]
    }

    /// The printed first vector lacks the `e9` component without which it
    /// is not tangent to the constraint set; it is restored here.
    #[test]
    fn triangle_with_center_minors_with_printed_basis() {
        let r = s3();
        #[rustfmt::skip]
        let v = DMatrix::from_column_slice(9, 4, &[
            r, 0.0, -r, 0.0, -1.0, 0.0, 0.0, 0.0, 1.0,
            1.0, 0.0, -1.0, -1.0, 0.0, 0.0, 0.0, 1.0, 0.0,
            0.0, -r, r, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0,
            0.0, 1.0, -1.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0,
        ]);
        for g in [0.5, -4.0, 2.0] {
            let cc = circ(&[1.0, 1.0, 1.0, g]);
            let m = solve_multiplier_system(&triangle_center(), &cc, &[1], 1.0).unwrap();
            let h = restricted_hessian(&triangle_center(), &cc, &m, &v).unwrap();
            assert!((&h - h.transpose()).amax() < 1e-10);
            let minors = linalg::leading_minors(&h);
            for (x, y) in minors.iter().zip(closed_form_minors_triangle(g)) {
                assert!((x - y).abs() <= 1e-6 * y.abs(), "γ={g}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn certificates_for_worked_scenarios() {
        let tc = |g: f64| circ(&[1.0, 1.0, 1.0, g]);
        let r = energy_casimir_certificate(&triangle_center(), &tc(0.5), &[1], DEFAULT_SEED).unwrap();
        assert_eq!(r.verdict, Verdict::CertifiedStable);
        assert_eq!(r.multipliers.as_ref().unwrap().a0, 1.0);
        assert!(r.minors.as_ref().unwrap().iter().all(|&d| d > 0.0));
        let r = energy_casimir_certificate(&triangle_center(), &tc(-4.0), &[1], DEFAULT_SEED).unwrap();
        assert_eq!(r.verdict, Verdict::CertifiedStable);
        assert_eq!(r.multipliers.as_ref().unwrap().a0, -1.0);
        let r = energy_casimir_certificate(&triangle_center(), &tc(2.0), &[1], DEFAULT_SEED).unwrap();
        assert_eq!(r.verdict, Verdict::LinearlyUnstable);
        assert!(r.multipliers.is_none());

        let sq = |g: f64| circ(&[1.0, 1.0, 1.0, 1.0, g]);
        let r = energy_casimir_certificate(&square_center(), &sq(1.0), &[1], DEFAULT_SEED).unwrap();
        assert_eq!(r.verdict, Verdict::CertifiedStable);
        for g in [3.0, -1.0] {
            let r = energy_casimir_certificate(&square_center(), &sq(g), &[1], DEFAULT_SEED).unwrap();
            assert_eq!(r.verdict, Verdict::LinearlyUnstable, "γ={g}");
        }
        let r = energy_casimir_certificate(&square_center(), &sq(-0.25), &[1], DEFAULT_SEED).unwrap();
        assert_eq!(r.verdict, Verdict::Inconclusive);
        assert!(r.reason.is_some());

        let r = energy_casimir_certificate(&triangle(), &circ(&[1.0, 1.0, 1.0]), &[1], DEFAULT_SEED).unwrap();
        assert_eq!(r.verdict, Verdict::CertifiedStable);
    }

    #[test]
    fn certificate_rejects_bad_points() {
        let moved = mu_of(&[1.1, 1.0, 0.5, -s3() / 2.0]);
        assert!(matches!(
            energy_casimir_certificate(&moved, &circ(&[1.0; 3]), &[1], DEFAULT_SEED),
            Err(Error::NotAFixedPoint { .. })
        ));
    }

    #[test]
    fn dependent_casimirs_are_inconclusive() {
        let r = energy_casimir_certificate(&triangle_center(), &circ(&[1.0, 1.0, 1.0, 0.5]), &[1, 2, 3], 1)
            .unwrap();
        assert_eq!(r.verdict, Verdict::Inconclusive);
        assert!(r.reason.unwrap().contains("not independent"));
    }

    #[test]
    fn retry_path_explores_solution_set() {
        // With the dependent set {1, 2} the multiplier system has a
        // nontrivial solution space; every element must still solve it.
        let mu = triangle_center();
        let cc = circ(&[1.0, 1.0, 1.0, 0.5]);
        let solve = solve_multipliers_full(&mu, &cc, &[1, 2], 1.0).unwrap();
        assert!(solve.set.solution_space_dim > 0);
        assert_eq!(solve.null.ncols(), solve.set.solution_space_dim);
        let basis = tangent_basis(&mu, &cc, &[1]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (attempt, certified) = attempt_sign(&mu, &cc, &basis, &solve, &mut rng).unwrap();
        assert!(attempt.set.residual < MULTIPLIER_TOL);
        assert!(certified);
        // Determinism: same seed, same outcome.
        let mut rng2 = ChaCha8Rng::seed_from_u64(3);
        let (again, _) = attempt_sign(&mu, &cc, &basis, &solve, &mut rng2).unwrap();
        assert_eq!(again.candidate, attempt.candidate);
        assert_eq!(again.set, attempt.set);
    }

    #[test]
    fn spectra_are_symmetric_under_negation() {
        let cases = [
            (triangle(), circ(&[1.0, 2.0, -0.5])),
            (triangle_center(), circ(&[1.0, 1.0, 1.0, 0.5])),
            (triangle_center(), circ(&[1.0, 1.0, 1.0, 5.0])),
            (square_center(), circ(&[1.0, 1.0, 1.0, 1.0, -1.0])),
            (square_center(), circ(&[1.0, 1.0, 1.0, 1.0, 3.0])),
        ];
        for (mu, cc) in cases {
            let ev = spectrum(&linearize(&mu, &cc).unwrap().matrix).unwrap();
            let neg: Vec<Complex64> = ev.iter().map(|z| -z).collect();
            assert!(multiset_distance(&ev, &neg) < 1e-8, "{ev:?}");
        }
    }

    #[test]
    fn verdict_is_basis_invariant() {
        let mu = triangle_center();
        let cc = circ(&[1.0, 1.0, 1.0, 0.5]);
        let basis = tangent_basis(&mu, &cc, &[1]).unwrap();
        let m = solve_multiplier_system(&mu, &cc, &[1], 1.0).unwrap();
        let base = sylvester_verdict(&restricted_hessian(&mu, &cc, &m, &basis).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..10 {
            let q = DMatrix::from_fn(4, 4, |_, _| rng.random_range(-1.0..1.0)).qr().q();
            let rotated = &basis * q;
            let r = sylvester_verdict(&restricted_hessian(&mu, &cc, &m, &rotated).unwrap());
            assert_eq!(r.positive_definite, base.positive_definite);
        }
    }
}
