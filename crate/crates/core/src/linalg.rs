//! Dense matrix helpers: Kronecker product, column stacking, minimum-norm
//! least squares, Lyapunov solves and spectral utilities.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

/// Kronecker product `E ⊗ F`.
pub fn kron(e: &DMatrix<f64>, f: &DMatrix<f64>) -> DMatrix<f64> {
    let (er, ec) = e.shape();
    let (fr, fc) = f.shape();
    let mut out = DMatrix::zeros(er * fr, ec * fc);
    for i in 0..er {
        for j in 0..ec {
            let s = e[(i, j)];
            if s == 0.0 {
                continue;
            }
            out.view_mut((i * fr, j * fc), (fr, fc)).copy_from(&(f * s));
        }
    }
    out
}

/// Column-stacking vectorization.
pub fn vec(e: &DMatrix<f64>) -> DVector<f64> {
    // nalgebra storage is column-major, which is exactly vec(E).
    DVector::from_column_slice(e.as_slice())
}

/// Inverse of [`vec`] for a matrix with `rows` rows.
pub fn unvec(v: &[f64], rows: usize) -> DMatrix<f64> {
    assert!(rows > 0 && v.len() % rows == 0, "unvec: length not divisible by rows");
    DMatrix::from_column_slice(rows, v.len() / rows, v)
}

pub fn identity(n: usize) -> DMatrix<f64> {
    DMatrix::identity(n, n)
}

/// Minimum-norm least-squares solution of `m x = b`; singular values below
/// `rel_tol * sigma_max` are discarded.
pub fn min_norm_solve(m: &DMatrix<f64>, b: &DVector<f64>, rel_tol: f64) -> DVector<f64> {
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let eps = if smax > 0.0 { rel_tol * smax } else { 0.0 };
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let mut coeffs = u.transpose() * b;
    for (c, s) in coeffs.iter_mut().zip(svd.singular_values.iter()) {
        *c = if *s > eps { *c / *s } else { 0.0 };
    }
    v_t.transpose() * coeffs
}

/// Numerical rank with singular values compared against `rel_tol * sigma_max`.
pub fn numerical_rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.clone().singular_values();
    let smax = sv.max();
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|s| **s > rel_tol * smax).count()
}

/// Numerical rank of a complex matrix.
pub fn numerical_rank_complex(m: &DMatrix<Complex64>, rel_tol: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.clone().singular_values();
    let smax = sv.max();
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|s| **s > rel_tol * smax).count()
}

/// Induced 2-norm (largest singular value).
pub fn norm2(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().singular_values().max()
}

pub fn eigenvalues(m: &DMatrix<f64>) -> Vec<Complex64> {
    m.clone().complex_eigenvalues().iter().copied().collect()
}

/// Largest real part over the spectrum; `-inf` for an empty matrix.
pub fn spectral_abscissa(m: &DMatrix<f64>) -> f64 {
    eigenvalues(m)
        .iter()
        .map(|l| l.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Solves `a x + x aᵀ = q` by vectorization:
/// `(I ⊗ a + a ⊗ I) vec(x) = vec(q)`. Returns `None` if singular.
pub fn solve_lyapunov(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let i = identity(n);
    let op = kron(&i, a) + kron(a, &i);
    let sol = op.lu().solve(&vec(q))?;
    let x = unvec(sol.as_slice(), n);
    // symmetrize: the exact solution is symmetric whenever q is
    Some((&x + x.transpose()) * 0.5)
}

/// Block-diagonal stacking.
pub fn block_diag(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), b.shape()).copy_from(*b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn kron_identity_is_block_diagonal() {
        let m = dmatrix![1.0, 2.0; 3.0, 4.0];
        let k = kron(&identity(2), &m);
        assert_eq!(k, block_diag(&[&m, &m]));
    }

    #[test]
    fn vec_stacks_columns() {
        let m = dmatrix![1.0, 3.0; 2.0, 4.0];
        assert_eq!(vec(&m).as_slice(), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(unvec(&[1.0, 2.0, 3.0, 4.0], 2), m);
    }

    #[test]
    fn min_norm_solution_of_underdetermined_system() {
        // x + y = 2 has minimum-norm solution (1, 1)
        let m = dmatrix![1.0, 1.0];
        let x = min_norm_solve(&m, &DVector::from_vec(vec![2.0]), 1e-12);
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn lyapunov_scalar() {
        // -2x - 2x = -4  => x = 1
        let a = dmatrix![-2.0];
        let x = solve_lyapunov(&a, &dmatrix![-4.0]).unwrap();
        assert!((x[(0, 0)] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn rank_and_abscissa() {
        let m = dmatrix![1.0, 2.0; 2.0, 4.0];
        assert_eq!(numerical_rank(&m, 1e-9), 1);
        let a = dmatrix![0.0, 1.0; -2.0, -3.0];
        assert!((spectral_abscissa(&a) + 1.0).abs() < 1e-12);
    }
}
