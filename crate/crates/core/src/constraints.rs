//! Trace Casimirs `C_j = tr((i K mu)^j)` and the rank-one constraint map
//! built from 2x2 determinants of the Hermitian matrix `-i mu`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::algebra::{
    coordinate_basis, flatten, offdiag_slot, Circulations, CouplingMatrix, MuMatrix, Regime,
};
use crate::error::{Error, Result};
use crate::linalg;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Largest admissible imaginary part of a Casimir trace, relative to scale.
pub const CASIMIR_IMAG_TOL: f64 = 1e-12;

/// Entries closer to zero than this are outside the open set where the
/// constraint map is a submersion.
pub const OPEN_SET_TOL: f64 = 1e-12;

/// Relative singular-value threshold for numerical rank.
pub const RANK_RTOL: f64 = 1e-8;

fn check_dims(mu: &MuMatrix, k: &CouplingMatrix) -> Result<()> {
    if mu.n() == k.n() {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected: k.n(), found: mu.n() })
    }
}

fn check_order(j: usize) -> Result<()> {
    if j == 0 {
        Err(Error::InvalidArgument("Casimir order must be at least 1".into()))
    } else {
        Ok(())
    }
}

fn ik_mu(mu: &MuMatrix, k: &CouplingMatrix) -> DMatrix<Complex64> {
    k.complex().map(|x| I * x) * mu.entries()
}

fn powers(a: &DMatrix<Complex64>, upto: usize) -> Vec<DMatrix<Complex64>> {
    let n = a.nrows();
    let mut out = Vec::with_capacity(upto + 1);
    out.push(DMatrix::identity(n, n));
    for p in 1..=upto {
        let next = &out[p - 1] * a;
        out.push(next);
    }
    out
}

/// `C_j(mu) = tr((i K mu)^j)`; the trace is real for skew-Hermitian `mu`.
pub fn casimir(mu: &MuMatrix, k: &CouplingMatrix, j: usize) -> Result<f64> {
    check_dims(mu, k)?;
    check_order(j)?;
    let a = ik_mu(mu, k);
    let t = powers(&a, j)[j].trace();
    let scale = a.iter().fold(1.0_f64, |m, z| m.max(z.norm())).powi(j as i32);
    if t.im.abs() > CASIMIR_IMAG_TOL * scale * a.nrows() as f64 {
        return Err(Error::Domain(format!(
            "Casimir C_{j} has imaginary part {:e}; input is not skew-Hermitian",
            t.im
        )));
    }
    Ok(t.re)
}

/// `tr(B E_s)` for every coordinate direction `E_s`.
fn trace_against_basis(b: &DMatrix<Complex64>, n: usize) -> Vec<f64> {
    // E for mu_k has i at (k,k); for x_jk, i at (j,k) and (k,j); for
    // y_jk, -1 at (j,k) and +1 at (k,j).
    let mut out = vec![0.0; n * n];
    for k in 0..n {
        out[k] = (I * b[(k, k)]).re;
    }
    for j in 0..n {
        for k in j + 1..n {
            let s = offdiag_slot(n, j, k);
            out[s] = (I * (b[(k, j)] + b[(j, k)])).re;
            out[s + 1] = (b[(j, k)] - b[(k, j)]).re;
        }
    }
    out
}

/// Gradient of `C_j` in flattened coordinates:
/// `dC_j/ds = j tr((iK mu)^{j-1} iK E_s)`.
pub fn casimir_gradient(mu: &MuMatrix, k: &CouplingMatrix, j: usize) -> Result<Vec<f64>> {
    check_dims(mu, k)?;
    check_order(j)?;
    let n = mu.n();
    let a = ik_mu(mu, k);
    let ik = k.complex().map(|x| I * x);
    let b = &powers(&a, j - 1)[j - 1] * ik;
    Ok(trace_against_basis(&b, n).into_iter().map(|x| j as f64 * x).collect())
}

/// Hessian of `C_j`:
/// `sum_{a=0}^{j-2} j tr(A^a L_s A^{j-2-a} L_t)` with `A = iK mu`, `L_s = iK E_s`.
pub fn casimir_hessian(mu: &MuMatrix, k: &CouplingMatrix, j: usize) -> Result<DMatrix<f64>> {
    check_dims(mu, k)?;
    check_order(j)?;
    let n = mu.n();
    let dim = n * n;
    if j == 1 {
        return Ok(DMatrix::zeros(dim, dim));
    }
    let a = ik_mu(mu, k);
    let pw = powers(&a, j - 2);
    let ik = k.complex().map(|x| I * x);
    let l: Vec<DMatrix<Complex64>> = (0..dim).map(|s| &ik * coordinate_basis(n, s).entries()).collect();
    let mut hess = DMatrix::zeros(dim, dim);
    for s in 0..dim {
        // Precompute A^a L_s A^{j-2-a} summed over a; then trace against L_t.
        let mut m = DMatrix::<Complex64>::zeros(n, n);
        for p in 0..=j - 2 {
            m += &pw[p] * &l[s] * &pw[j - 2 - p];
        }
        for t in s..dim {
            let v = j as f64 * (&m * &l[t]).trace().re;
            hess[(s, t)] = v;
            hess[(t, s)] = v;
        }
    }
    Ok(hess)
}

/// The linear first Casimir exactly as printed for the scenarios used in
/// the worked examples:
///
/// * `N = 3`, nonzero total: `(G2 (G1+G3) mu1 + G1 (G2+G3) mu2 - 2 G1 G2 mu3) / G`
/// * `(1,1,1,g)`, `g != -3`: `((g+2)(mu1+mu2+mu3) - 2 (mu4+mu6+mu8)) / (g+3)`
/// * `(1,1,1,-3)`: `(2/3)(mu1 + mu2 - mu3)`
/// * `(1,1,1,1,g)`, `g != -4`: `((g+3) sum mu_1..4 - 2 sum mu_{5,7,..,15}) / (g+4)`
///
/// Coordinates are one-based in these formulas.
pub fn scenario_casimir_c1(mu: &MuMatrix, circ: &Circulations) -> Result<f64> {
    let g = circ.gammas();
    let c = flatten(mu).0;
    if mu.n() != circ.reduced_dim() {
        return Err(Error::DimensionMismatch { expected: circ.reduced_dim(), found: mu.n() });
    }
    let unit = |xs: &[f64]| xs.iter().all(|&x| x == 1.0);
    match (g.len(), circ.regime()) {
        (3, Regime::NonZeroTotal) => {
            let (g1, g2, g3) = (g[0], g[1], g[2]);
            Ok((g2 * (g1 + g3) * c[0] + g1 * (g2 + g3) * c[1] - 2.0 * g1 * g2 * c[2]) / circ.total())
        }
        (4, Regime::NonZeroTotal) if unit(&g[..3]) => {
            let gm = g[3];
            Ok(((gm + 2.0) * (c[0] + c[1] + c[2]) - 2.0 * (c[3] + c[5] + c[7])) / (gm + 3.0))
        }
        (4, Regime::ZeroTotal) if unit(&g[..3]) => Ok(2.0 / 3.0 * (c[0] + c[1] - c[2])),
        (5, Regime::NonZeroTotal) if unit(&g[..4]) => {
            let gm = g[4];
            let diag: f64 = c[..4].iter().sum();
            let re: f64 = (1..=6).map(|j| c[2 * j + 2]).sum();
            Ok(((gm + 3.0) * diag - 2.0 * re) / (gm + 4.0))
        }
        _ => Err(Error::UnsupportedScenario(format!("no printed first Casimir for circulations {g:?}"))),
    }
}

/// Residuals of the rank-one constraint map, ordered
/// `(R_1..R_{n-1}, Re R_12, Im R_12, ..., Re R_{n-2,n-1}, Im R_{n-2,n-1})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintVector {
    pub values: Vec<f64>,
}

impl ConstraintVector {
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

/// Number of real constraint components for matrix dimension `n`.
pub fn constraint_count(n: usize) -> usize {
    n.saturating_sub(1).pow(2)
}

/// Index pairs `(i, j)`, zero-based `i < j <= n-2`, in output order.
fn complex_pairs(n: usize) -> Vec<(usize, usize)> {
    let m = n.saturating_sub(1);
    let mut out = Vec::new();
    for i in 0..m {
        for j in i + 1..m {
            out.push((i, j));
        }
    }
    out
}

pub fn constraint_residuals(mu: &MuMatrix) -> ConstraintVector {
    let n = mu.n();
    let h = mu.hermitian();
    let mut values = Vec::with_capacity(constraint_count(n));
    for i in 0..n.saturating_sub(1) {
        values.push(h[(i, i)].re * h[(i + 1, i + 1)].re - h[(i, i + 1)].norm_sqr());
    }
    for (i, j) in complex_pairs(n) {
        let r = h[(i, j)] * h[(i + 1, j + 1)] - h[(i, j + 1)] * h[(i + 1, j)];
        values.push(r.re);
        values.push(r.im);
    }
    ConstraintVector { values }
}

/// Entry `(r, c)` of `-i mu` as a complex linear form of the coordinates.
fn entry_form(n: usize, r: usize, c: usize) -> Vec<Complex64> {
    let mut f = vec![Complex64::new(0.0, 0.0); n * n];
    if r == c {
        f[r] = Complex64::new(1.0, 0.0);
    } else {
        let (j, k) = if r < c { (r, c) } else { (c, r) };
        let s = offdiag_slot(n, j, k);
        f[s] = Complex64::new(1.0, 0.0);
        f[s + 1] = Complex64::new(0.0, if r < c { 1.0 } else { -1.0 });
    }
    f
}

/// Adds `sign * part(P Q)` to the quadratic form `a` (value `x^T a x`),
/// where `P`, `Q` are complex linear forms and `part` picks Re or Im.
fn add_product(a: &mut DMatrix<f64>, p: &[Complex64], q: &[Complex64], sign: f64, imag: bool) {
    for (s, ps) in p.iter().enumerate() {
        if ps.re == 0.0 && ps.im == 0.0 {
            continue;
        }
        for (t, qt) in q.iter().enumerate() {
            let z = ps * qt;
            a[(s, t)] += sign * if imag { z.im } else { z.re };
        }
    }
}

/// Each constraint component as a quadratic form `R_k(x) = x^T Q_k x / 2`
/// with symmetric `Q_k`, which is also its Hessian.
pub fn constraint_hessians(n: usize) -> Vec<DMatrix<f64>> {
    let dim = n * n;
    let e = |r, c| entry_form(n, r, c);
    let mut out = Vec::with_capacity(constraint_count(n));
    let mut push = |terms: &[(Vec<Complex64>, Vec<Complex64>, f64)], imag: bool| {
        let mut a = DMatrix::zeros(dim, dim);
        for (p, q, sign) in terms {
            add_product(&mut a, p, q, *sign, imag);
        }
        out.push(&a + a.transpose());
    };
    for i in 0..n.saturating_sub(1) {
        let terms = [(e(i, i), e(i + 1, i + 1), 1.0), (e(i, i + 1), e(i + 1, i), -1.0)];
        push(&terms, false);
    }
    for (i, j) in complex_pairs(n) {
        let terms = [(e(i, j), e(i + 1, j + 1), 1.0), (e(i, j + 1), e(i + 1, j), -1.0)];
        push(&terms, false);
        push(&terms, true);
    }
    out
}

/// Jacobian of [`constraint_residuals`] with respect to the flattening,
/// one row per component.
pub fn constraint_jacobian(mu: &MuMatrix) -> DMatrix<f64> {
    let n = mu.n();
    let x = nalgebra::DVector::from_vec(flatten(mu).0);
    let hs = constraint_hessians(n);
    let mut jac = DMatrix::zeros(hs.len(), n * n);
    for (r, q) in hs.iter().enumerate() {
        jac.set_row(r, &(q * &x).transpose());
    }
    jac
}

/// Fails with `NotInOpenSet` if some entry of `mu` vanishes.
pub fn check_open_set(mu: &MuMatrix) -> Result<()> {
    let n = mu.n();
    for k in 0..n {
        if mu.diag(k).abs() <= OPEN_SET_TOL {
            return Err(Error::NotInOpenSet(format!("mu_{} = {:e}", k + 1, mu.diag(k))));
        }
    }
    for j in 0..n {
        for k in j + 1..n {
            let z = mu.offdiag(j, k);
            if z.norm() <= OPEN_SET_TOL {
                return Err(Error::NotInOpenSet(format!("mu_{}{} = {:e}", j + 1, k + 1, z.norm())));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankReport {
    pub rank: usize,
    pub nullity: usize,
    pub full_rank: bool,
}

/// Numerical rank of the constraint Jacobian on the open set of matrices
/// with no vanishing entries.
pub fn submersion_rank_check(mu: &MuMatrix) -> Result<RankReport> {
    check_open_set(mu)?;
    let jac = constraint_jacobian(mu);
    let rank = linalg::numerical_rank(&jac, RANK_RTOL);
    let dim = mu.n() * mu.n();
    Ok(RankReport { rank, nullity: dim - rank, full_rank: rank == jac.nrows() })
}
