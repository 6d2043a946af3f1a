//! Small dense linear-algebra helpers shared across the crate.
//!
//! Everything here operates on `nalgebra` dynamic matrices. The matrix
//! exponential uses scaling and squaring with a fixed-order Taylor tail
//! bound, which is plenty for the small (n <= 8) matrices this crate sees.

use nalgebra::{DMatrix, DVector};

/// Largest singular value of `m`.
pub fn sigma_max(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

/// Eigenvalues of a symmetric matrix, ascending.
///
/// The input is symmetrized first so tiny asymmetries from upstream
/// arithmetic do not produce complex pairs.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> DVector<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let mut ev: Vec<f64> = sym.symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    DVector::from_vec(ev)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn sym_eig_min(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m)[0]
}

/// Largest eigenvalue of a symmetric matrix.
pub fn sym_eig_max(m: &DMatrix<f64>) -> f64 {
    let ev = sym_eigenvalues(m);
    ev[ev.len() - 1]
}

/// Matrix exponential by scaling and squaring.
///
/// Scales `m` by 2^-s until its 1-norm is below 0.5, sums the Taylor
/// series to machine precision, then squares back. Absolute truncation
/// error is far below the 1e-12 tolerance used by the discretization
/// routines for the matrix sizes involved.
pub fn expm(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "expm needs a square matrix");
    let norm = one_norm(m);
    let s = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as u32
    } else {
        0
    };
    let scaled = m / 2f64.powi(s as i32);

    let mut result = DMatrix::identity(n, n);
    let mut term = DMatrix::identity(n, n);
    for k in 1..=40 {
        term = &term * &scaled / k as f64;
        result += &term;
        if one_norm(&term) < 1e-18 {
            break;
        }
    }
    for _ in 0..s {
        result = &result * &result;
    }
    result
}

fn one_norm(m: &DMatrix<f64>) -> f64 {
    (0..m.ncols())
        .map(|j| m.column(j).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Solves the discrete Lyapunov equation `A' P A - P = -Q` for symmetric
/// `P` by vectorization. Only used at design/config-validation time on
/// small systems, so the dense Kronecker solve is fine.
pub fn dlyap(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    assert_eq!(a.ncols(), n);
    assert_eq!(q.nrows(), n);
    assert_eq!(q.ncols(), n);
    // vec(P) - (A ox A)' vec(P) = vec(Q) with ox the Kronecker product.
    let mut k = DMatrix::zeros(n * n, n * n);
    for i in 0..n {
        for j in 0..n {
            for p in 0..n {
                for r in 0..n {
                    // coefficient of P[p,r] in (A' P A)[i,j]
                    k[(i * n + j, p * n + r)] = a[(p, i)] * a[(r, j)];
                }
            }
        }
    }
    let lhs = DMatrix::identity(n * n, n * n) - k;
    let rhs = DVector::from_fn(n * n, |idx, _| q[(idx / n, idx % n)]);
    let sol = lhs.lu().solve(&rhs)?;
    let p = DMatrix::from_fn(n, n, |i, j| sol[i * n + j]);
    Some((&p + p.transpose()) * 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn expm_matches_scalar_exponential() {
        let m = DMatrix::from_row_slice(1, 1, &[-0.3]);
        assert_relative_eq!(expm(&m)[(0, 0)], (-0.3f64).exp(), epsilon = 1e-14);
    }

    #[test]
    fn expm_nilpotent_block_is_exact() {
        // exp([[0, t], [0, 0]]) = [[1, t], [0, 1]]
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 0.7, 0.0, 0.0]);
        let e = expm(&m);
        assert_relative_eq!(e[(0, 0)], 1.0, epsilon = 1e-14);
        assert_relative_eq!(e[(0, 1)], 0.7, epsilon = 1e-14);
        assert_relative_eq!(e[(1, 0)], 0.0, epsilon = 1e-14);
        assert_relative_eq!(e[(1, 1)], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn expm_rotation_matches_closed_form() {
        let w = 1.3;
        let m = DMatrix::from_row_slice(2, 2, &[0.0, -w, w, 0.0]);
        let e = expm(&m);
        assert_relative_eq!(e[(0, 0)], w.cos(), epsilon = 1e-13);
        assert_relative_eq!(e[(1, 0)], w.sin(), epsilon = 1e-13);
    }

    #[test]
    fn sigma_max_of_diagonal() {
        let m = DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, -5.0]);
        assert_relative_eq!(sigma_max(&m), 5.0, epsilon = 1e-12);
    }

    #[test]
    fn dlyap_recovers_residual() {
        let a = DMatrix::from_row_slice(2, 2, &[0.5, 0.2, -0.1, 0.3]);
        let q = DMatrix::identity(2, 2);
        let p = dlyap(&a, &q).unwrap();
        let resid = &p - a.transpose() * &p * &a - &q;
        assert!(one_norm(&resid) < 1e-12);
        assert!(sym_eig_min(&p) > 0.0);
    }
}
