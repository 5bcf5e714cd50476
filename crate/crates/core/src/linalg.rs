//! Dense helpers on top of nalgebra's SVD: numerical rank, orthonormal
//! null spaces and minimal-norm least squares.

use nalgebra::{DMatrix, DVector};

/// Singular values in descending order.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    let mut s: Vec<f64> = m.singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Count of singular values above `rtol * sigma_max`.
pub fn numerical_rank(m: &DMatrix<f64>, rtol: f64) -> usize {
    let s = singular_values(m);
    let Some(&top) = s.first() else { return 0 };
    if top == 0.0 {
        return 0;
    }
    s.iter().filter(|&&x| x > rtol * top).count()
}

/// Orthonormal basis (as columns) of `{v : m v = 0}`, using the relative
/// singular-value threshold `rtol`.
pub fn null_space(m: &DMatrix<f64>, rtol: f64) -> DMatrix<f64> {
    let cols = m.ncols();
    // Pad with zero rows so the SVD returns a full right-singular basis.
    let rows = m.nrows().max(cols);
    let mut padded = DMatrix::<f64>::zeros(rows, cols);
    padded.view_mut((0, 0), (m.nrows(), cols)).copy_from(m);
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let top = svd.singular_values.max();
    let keep: Vec<usize> =
        (0..cols).filter(|&k| top == 0.0 || svd.singular_values[k] <= rtol * top).collect();
    DMatrix::from_fn(cols, keep.len(), |r, c| v_t[(keep[c], r)])
}

/// Minimal-norm least-squares solution of `a x = b` with the residual
/// `|a x - b|_inf` and the dimension of the solution set's null space.
pub fn min_norm_solve(a: &DMatrix<f64>, b: &DVector<f64>, rtol: f64) -> (DVector<f64>, f64, usize) {
    let svd = a.clone().svd(true, true);
    let top = svd.singular_values.max();
    let eps = rtol * top;
    let x = svd.solve(b, eps).unwrap_or_else(|_| DVector::zeros(a.ncols()));
    let residual = (a * &x - b).amax();
    let rank = svd.singular_values.iter().filter(|&&s| s > eps).count();
    (x, residual, a.ncols() - rank)
}

/// Leading principal minors `det(m[..k, ..k])`, `k = 1..=n`.
pub fn leading_minors(m: &DMatrix<f64>) -> Vec<f64> {
    (1..=m.nrows()).map(|k| m.view((0, 0), (k, k)).clone_owned().determinant()).collect()
}

/// Maximum absolute row sum.
pub fn norm_inf(m: &DMatrix<f64>) -> f64 {
    m.row_iter().map(|r| r.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_space_of_wide_matrix() {
        let m = DMatrix::from_row_slice(2, 4, &[1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, -1.0]);
        let ns = null_space(&m, 1e-10);
        assert_eq!(ns.ncols(), 2);
        assert!((&m * &ns).amax() < 1e-14);
        let gram = ns.transpose() * &ns;
        assert!((gram - DMatrix::<f64>::identity(2, 2)).amax() < 1e-14);
    }

    #[test]
    fn rank_and_min_norm() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0, 0.0, 1.0, 1.0]);
        assert_eq!(numerical_rank(&m, 1e-10), 2);
        let b = DVector::from_vec(vec![1.0, 2.0, 0.0]);
        let (x, res, nullity) = min_norm_solve(&m, &b, 1e-10);
        assert!(res < 1e-12);
        assert_eq!(nullity, 1);
        // minimal norm: orthogonal to the null direction (1, 1, -1)
        assert!((x[0] + x[1] - x[2]).abs() < 1e-12);
    }

    #[test]
    fn minors() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 3.0]);
        let d = leading_minors(&m);
        assert!((d[0] - 2.0).abs() < 1e-15 && (d[1] - 6.0).abs() < 1e-14);
        assert_eq!(norm_inf(&DMatrix::from_row_slice(2, 2, &[1.0, -2.0, 0.5, 0.5])), 3.0);
    }
}
