//! The Lie algebra of skew-Hermitian matrices with the coupling-twisted
//! bracket, the coupling matrices, and the real coordinate flattening.
//!
//! An element `mu` is stored as the complex skew-Hermitian matrix itself.
//! Its real coordinates are read off the Hermitian matrix `-i mu`:
//! first the `n` diagonal entries, then `(Re, Im)` of every strictly upper
//! entry in row-major order, `(1,2), (1,3), ..., (1,n), (2,3), ...`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Which branch of the reduction applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    NonZeroTotal,
    ZeroTotal,
}

/// Vortex circulation strengths with the derived total and regime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Circulations {
    gammas: Vec<f64>,
    total: f64,
    regime: Regime,
}

impl Circulations {
    /// Relative threshold below which the total circulation counts as zero.
    pub const ZERO_TOTAL_RTOL: f64 = 1e-12;

    pub fn new(gammas: Vec<f64>) -> Result<Self> {
        if gammas.len() < 3 {
            return Err(Error::InvalidCirculations(format!(
                "need at least 3 vortices, got {}",
                gammas.len()
            )));
        }
        if let Some(i) = gammas.iter().position(|g| !g.is_finite() || *g == 0.0) {
            return Err(Error::InvalidCirculations(format!(
                "circulation {} is {}, must be finite and non-zero",
                i + 1,
                gammas[i]
            )));
        }
        let total: f64 = gammas.iter().sum();
        let scale = gammas.iter().fold(0.0_f64, |m, g| m.max(g.abs()));
        let regime = if total.abs() <= Self::ZERO_TOTAL_RTOL * scale {
            Regime::ZeroTotal
        } else {
            Regime::NonZeroTotal
        };
        Ok(Self { gammas, total, regime })
    }

    pub fn gammas(&self) -> &[f64] {
        &self.gammas
    }

    pub fn len(&self) -> usize {
        self.gammas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gammas.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    /// Size of the reduced matrix: `N - 1`, or `N - 2` when the total vanishes.
    pub fn reduced_dim(&self) -> usize {
        match self.regime {
            Regime::NonZeroTotal => self.len() - 1,
            Regime::ZeroTotal => self.len() - 2,
        }
    }

    /// Zero-based index of the vortex the relative coordinates are taken from.
    pub fn reference_index(&self) -> usize {
        match self.regime {
            Regime::NonZeroTotal => self.len() - 1,
            Regime::ZeroTotal => self.len() - 2,
        }
    }
}

impl TryFrom<Vec<f64>> for Circulations {
    type Error = Error;

    fn try_from(gammas: Vec<f64>) -> Result<Self> {
        Self::new(gammas)
    }
}

impl From<Circulations> for Vec<f64> {
    fn from(c: Circulations) -> Self {
        c.gammas
    }
}

/// The real symmetric coupling matrix that twists the bracket, with its
/// cached inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingMatrix {
    k: DMatrix<f64>,
    k_inv: DMatrix<f64>,
}

impl CouplingMatrix {
    pub fn new(circ: &Circulations) -> Result<Self> {
        build_coupling_matrix(circ)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.k
    }

    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.k_inv
    }

    pub fn n(&self) -> usize {
        self.k.nrows()
    }

    pub(crate) fn complex(&self) -> DMatrix<Complex64> {
        self.k.map(|x| Complex64::new(x, 0.0))
    }

    pub(crate) fn complex_inverse(&self) -> DMatrix<Complex64> {
        self.k_inv.map(|x| Complex64::new(x, 0.0))
    }
}

/// Builds the coupling matrix for the regime of `circ`.
///
/// For a non-zero total `G` the `(N-1) x (N-1)` matrix has entries
/// `G_i G_j / G` off the diagonal and `-G_i (G - G_i) / G` on it. When the
/// total vanishes the `(N-2) x (N-2)` matrix is
/// `-(1/G_N) [G_i G_j + delta_ij G_i G_N]`.
pub fn build_coupling_matrix(circ: &Circulations) -> Result<CouplingMatrix> {
    let g = circ.gammas();
    let n = circ.reduced_dim();
    let k =
        match circ.regime() {
            Regime::NonZeroTotal => {
                let total = circ.total();
                DMatrix::from_fn(n, n, |i, j| {
                    if i == j {
                        -g[i] * (total - g[i]) / total
                    } else {
                        g[i] * g[j] / total
                    }
                })
            }
            Regime::ZeroTotal => {
                let last = g[g.len() - 1];
                DMatrix::from_fn(n, n, |i, j| {
                    let entry = if i == j { g[i] * (last + g[i]) } else { g[i] * g[j] };
                    -entry / last
                })
            }
        };
    let k_inv = k.clone().lu().try_inverse().ok_or(Error::SingularCoupling { residual: f64::INFINITY })?;
    let residual = (&k * &k_inv - DMatrix::<f64>::identity(n, n)).amax();
    if !residual.is_finite() || residual > 1e-10 {
        return Err(Error::SingularCoupling { residual });
    }
    Ok(CouplingMatrix { k, k_inv })
}

/// An element of the (dual of the) Lie algebra: a skew-Hermitian matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MuMatrix {
    entries: DMatrix<Complex64>,
}

impl MuMatrix {
    pub const SKEW_TOL: f64 = 1e-12;

    /// Wraps `entries` after checking `entries^* = -entries` entrywise,
    /// relative to the largest entry.
    pub fn new(entries: DMatrix<Complex64>) -> Result<Self> {
        if !entries.is_square() {
            return Err(Error::DimensionMismatch { expected: entries.nrows(), found: entries.ncols() });
        }
        let deviation = skew_deviation(&entries);
        let scale = entries.iter().fold(1.0_f64, |m, z| m.max(z.norm()));
        if !(deviation <= Self::SKEW_TOL * scale) {
            return Err(Error::NotSkewHermitian { deviation });
        }
        Ok(Self { entries })
    }

    /// `mu = i * hermitian`; only the upper triangle and real diagonal of
    /// `hermitian` are read.
    pub fn from_hermitian(hermitian: &DMatrix<Complex64>) -> Self {
        let n = hermitian.nrows();
        let entries = DMatrix::from_fn(n, n, |r, c| {
            let h = match r.cmp(&c) {
                std::cmp::Ordering::Less => hermitian[(r, c)],
                std::cmp::Ordering::Equal => Complex64::new(hermitian[(r, r)].re, 0.0),
                std::cmp::Ordering::Greater => hermitian[(c, r)].conj(),
            };
            I * h
        });
        Self { entries }
    }

    pub(crate) fn from_entries_unchecked(entries: DMatrix<Complex64>) -> Self {
        Self { entries }
    }

    pub fn zeros(n: usize) -> Self {
        Self { entries: DMatrix::zeros(n, n) }
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<Complex64> {
        &self.entries
    }

    pub fn into_entries(self) -> DMatrix<Complex64> {
        self.entries
    }

    /// The Hermitian matrix `-i mu`, whose entries are the shape variables.
    pub fn hermitian(&self) -> DMatrix<Complex64> {
        self.entries.map(|z| -I * z)
    }

    /// Real diagonal shape variable `mu_k` (zero-based `k`).
    pub fn diag(&self, k: usize) -> f64 {
        self.entries[(k, k)].im
    }

    /// Complex off-diagonal shape variable `mu_{jk}` (zero-based, any order).
    pub fn offdiag(&self, j: usize, k: usize) -> Complex64 {
        -I * self.entries[(j, k)]
    }

    pub fn skew_deviation(&self) -> f64 {
        skew_deviation(&self.entries)
    }

    pub fn flatten(&self) -> CoordinateVector {
        flatten(self)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { entries: self.entries.map(|z| z * s) }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        check_same(self.n(), other.n())?;
        Ok(Self { entries: &self.entries + &other.entries })
    }
}

fn skew_deviation(m: &DMatrix<Complex64>) -> f64 {
    let n = m.nrows();
    let mut dev = 0.0_f64;
    for r in 0..n {
        for c in 0..n {
            dev = dev.max((m[(r, c)] + m[(c, r)].conj()).norm());
        }
    }
    dev
}

fn check_same(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

/// Real coordinates of a [`MuMatrix`], length `n^2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CoordinateVector(pub Vec<f64>);

impl CoordinateVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Matrix size `n` such that `len = n^2`, if the length is a square.
    pub fn matrix_dim(&self) -> Option<usize> {
        let n = (self.0.len() as f64).sqrt().round() as usize;
        (n * n == self.0.len()).then_some(n)
    }
}

impl From<Vec<f64>> for CoordinateVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// Position of `x_{jk}` (zero-based `j < k`) in the flattened coordinates;
/// `y_{jk}` follows at the next slot.
pub fn offdiag_slot(n: usize, j: usize, k: usize) -> usize {
    debug_assert!(j < k && k < n);
    // pairs preceding row j: sum_{r<j} (n - 1 - r)
    let before = j * (2 * n - j - 1) / 2;
    n + 2 * (before + (k - j - 1))
}

pub fn flatten(mu: &MuMatrix) -> CoordinateVector {
    let n = mu.n();
    let mut coords = Vec::with_capacity(n * n);
    coords.extend((0..n).map(|k| mu.diag(k)));
    for j in 0..n {
        for k in j + 1..n {
            let z = mu.offdiag(j, k);
            coords.push(z.re);
            coords.push(z.im);
        }
    }
    CoordinateVector(coords)
}

pub fn unflatten(v: &CoordinateVector, n: usize) -> Result<MuMatrix> {
    check_same(n * n, v.len())?;
    let c = &v.0;
    let mut m = DMatrix::<Complex64>::zeros(n, n);
    for k in 0..n {
        m[(k, k)] = Complex64::new(0.0, c[k]);
    }
    for j in 0..n {
        for k in j + 1..n {
            let s = offdiag_slot(n, j, k);
            let z = Complex64::new(c[s], c[s + 1]);
            m[(j, k)] = I * z;
            m[(k, j)] = I * z.conj();
        }
    }
    Ok(MuMatrix::from_entries_unchecked(m))
}

/// The matrix whose flattening is the `slot`-th unit vector.
pub fn coordinate_basis(n: usize, slot: usize) -> MuMatrix {
    let mut e = vec![0.0; n * n];
    e[slot] = 1.0;
    unflatten(&CoordinateVector(e), n).expect("length is n^2 by construction")
}

/// `<xi, eta> = 1/2 tr(xi^* eta)`.
pub fn pairing(xi: &MuMatrix, eta: &MuMatrix) -> Result<f64> {
    check_same(xi.n(), eta.n())?;
    let n = xi.n();
    let mut acc = Complex64::new(0.0, 0.0);
    for r in 0..n {
        for c in 0..n {
            acc += xi.entries[(r, c)].conj() * eta.entries[(r, c)];
        }
    }
    Ok(0.5 * acc.re)
}

/// `[xi, eta]_K = xi K^{-1} eta - eta K^{-1} xi`.
pub fn lie_bracket(xi: &MuMatrix, eta: &MuMatrix, k: &CouplingMatrix) -> Result<MuMatrix> {
    check_same(xi.n(), eta.n())?;
    check_same(k.n(), xi.n())?;
    let kinv = k.complex_inverse();
    let out = &xi.entries * &kinv * &eta.entries - &eta.entries * &kinv * &xi.entries;
    Ok(MuMatrix::from_entries_unchecked(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn circ(g: &[f64]) -> Circulations {
        Circulations::new(g.to_vec()).unwrap()
    }

    fn random_mu(rng: &mut ChaCha8Rng, n: usize) -> MuMatrix {
        let v: Vec<f64> = (0..n * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        unflatten(&CoordinateVector(v), n).unwrap()
    }

    #[test]
    fn coupling_equal_circulations() {
        let k = build_coupling_matrix(&circ(&[1.0, 1.0, 1.0])).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[-2.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, -2.0 / 3.0]);
        assert_abs_diff_eq!(k.matrix(), &expected, epsilon = 1e-15);
    }

    #[test]
    fn coupling_zero_total() {
        let c = circ(&[1.0, 1.0, 1.0, -3.0]);
        assert_eq!(c.regime(), Regime::ZeroTotal);
        let k = build_coupling_matrix(&c).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[-2.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, -2.0 / 3.0]);
        assert_abs_diff_eq!(k.matrix(), &expected, epsilon = 1e-15);
    }

    #[test]
    fn coupling_mixed_signs() {
        let k = build_coupling_matrix(&circ(&[1.0, -1.0, 1.0])).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, -1.0, 2.0]);
        assert_abs_diff_eq!(k.matrix(), &expected, epsilon = 1e-15);
    }

    #[test]
    fn circulation_validation() {
        assert!(Circulations::new(vec![1.0, 1.0]).is_err());
        assert!(Circulations::new(vec![1.0, 0.0, 1.0]).is_err());
        assert!(Circulations::new(vec![1.0, f64::NAN, 1.0]).is_err());
        let c = circ(&[0.1, 0.2, -0.3]);
        // 0.1 + 0.2 - 0.3 is ~5.5e-17, well inside 1e-12 * 0.3
        assert_eq!(c.regime(), Regime::ZeroTotal);
        assert_eq!(c.reduced_dim(), 1);
    }

    #[test]
    fn coupling_invariants_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let n_vortices = rng.random_range(3..8);
            let g: Vec<f64> = (0..n_vortices)
                .map(|_| {
                    let m = rng.random_range(0.3..2.0);
                    if rng.random_bool(0.5) {
                        m
                    } else {
                        -m
                    }
                })
                .collect();
            let Ok(c) = Circulations::new(g) else { continue };
            let Ok(k) = build_coupling_matrix(&c) else { continue };
            let n = k.n();
            assert_eq!(n, c.reduced_dim());
            assert_eq!(k.matrix(), &k.matrix().transpose());
            let residual = (k.matrix() * k.inverse() - DMatrix::<f64>::identity(n, n)).amax();
            assert!(residual < 1e-12 * (1.0 + k.inverse().amax()), "residual {residual}");
        }
    }

    #[test]
    fn flatten_triangle_fixed_point() {
        let s3 = 3f64.sqrt();
        let h = DMatrix::from_row_slice(
            2,
            2,
            &[
                Complex64::new(1.0, 0.0),
                Complex64::new(0.5, -s3 / 2.0),
                Complex64::new(0.5, s3 / 2.0),
                Complex64::new(1.0, 0.0),
            ],
        );
        let mu = MuMatrix::from_hermitian(&h);
        assert_eq!(flatten(&mu).0, vec![1.0, 1.0, 0.5, -s3 / 2.0]);
    }

    #[test]
    fn flatten_zero_and_errors() {
        assert_eq!(flatten(&MuMatrix::zeros(3)).0, vec![0.0; 9]);
        assert!(matches!(
            unflatten(&CoordinateVector(vec![0.0; 5]), 2),
            Err(Error::DimensionMismatch { expected: 4, found: 5 })
        ));
    }

    #[test]
    fn offdiag_slot_order() {
        let slots: Vec<usize> = (0..4).flat_map(|j| (j + 1..4).map(move |k| offdiag_slot(4, j, k))).collect();
        assert_eq!(slots, vec![4, 6, 8, 10, 12, 14]);
    }

    #[test]
    fn new_rejects_non_skew() {
        let m = DMatrix::from_element(2, 2, Complex64::new(1.0, 0.0));
        assert!(matches!(MuMatrix::new(m), Err(Error::NotSkewHermitian { .. })));
        let ok = unflatten(&CoordinateVector(vec![1.0, 2.0, 3.0, 4.0]), 2).unwrap();
        assert!(MuMatrix::new(ok.entries().clone()).is_ok());
    }

    #[test]
    fn pairing_examples() {
        let ii = MuMatrix::new(DMatrix::from_diagonal_element(2, 2, I)).unwrap();
        assert_abs_diff_eq!(pairing(&ii, &ii).unwrap(), 1.0, epsilon = 1e-15);
        assert_eq!(pairing(&MuMatrix::zeros(2), &ii).unwrap(), 0.0);
        let s3 = 3f64.sqrt();
        let mu = unflatten(&CoordinateVector(vec![1.0, 1.0, 0.5, -s3 / 2.0]), 2).unwrap();
        assert_abs_diff_eq!(pairing(&mu, &mu).unwrap(), 2.0, epsilon = 1e-14);
        assert!(pairing(&mu, &MuMatrix::zeros(3)).is_err());
    }

    #[test]
    fn pairing_is_half_frobenius() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 2..6 {
            let xi = random_mu(&mut rng, n);
            let fro = xi.entries().norm_squared();
            assert_abs_diff_eq!(pairing(&xi, &xi).unwrap(), 0.5 * fro, epsilon = 1e-12);
        }
    }

    #[test]
    fn bracket_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let circs = [
            vec![1.0, 1.0, 1.0],
            vec![1.0, -2.0, 0.5, 1.5],
            vec![0.7, 1.2, -0.4, 2.0, 1.1],
            vec![1.0, 1.0, 1.0, 1.0, 1.0, 0.5],
        ];
        for g in &circs {
            let k = build_coupling_matrix(&circ(g)).unwrap();
            let n = k.n();
            for _ in 0..100 {
                let (a, b, c) = (random_mu(&mut rng, n), random_mu(&mut rng, n), random_mu(&mut rng, n));
                let ab = lie_bracket(&a, &b, &k).unwrap();
                let ba = lie_bracket(&b, &a, &k).unwrap();
                assert!(ab.skew_deviation() < 1e-12 * (1.0 + ab.entries().camax()));
                assert!((ab.entries() + ba.entries()).camax() < 1e-14 * (1.0 + ab.entries().camax()));
                assert!(lie_bracket(&a, &a, &k).unwrap().entries().camax() < 1e-14);
                let jac = lie_bracket(&a, &lie_bracket(&b, &c, &k).unwrap(), &k).unwrap().entries()
                    + lie_bracket(&b, &lie_bracket(&c, &a, &k).unwrap(), &k).unwrap().entries()
                    + lie_bracket(&c, &lie_bracket(&a, &b, &k).unwrap(), &k).unwrap().entries();
                assert!(jac.camax() < 1e-10, "jacobi residual {}", jac.camax());
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn flatten_roundtrip_is_exact(n in 1usize..6, seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let v: Vec<f64> = (0..n * n).map(|_| rng.random_range(-1e3..1e3)).collect();
            let mu = unflatten(&CoordinateVector(v.clone()), n).unwrap();
            proptest::prop_assert_eq!(&flatten(&mu).0, &v);
            let again = unflatten(&flatten(&mu), n).unwrap();
            proptest::prop_assert_eq!(again, mu);
        }
    }
}
