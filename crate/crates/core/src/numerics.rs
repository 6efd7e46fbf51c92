//! Dense complex linear algebra used throughout the crate.
//!
//! Matrices are `nalgebra::DMatrix<Complex64>`. Operators on `n x n`
//! matrices are represented on column-stacked vectors: `vec(X)[j*n + i] =
//! X[(i, j)]`, which is exactly nalgebra's column-major storage, so that
//! `vec(A X B) = (B^T ⊗ A) vec(X)`.

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);

#[inline]
pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

/// Matrix unit `e_{ij}` (0-based) of size `rows x cols`.
pub fn unit(rows: usize, cols: usize, i: usize, j: usize) -> CMatrix {
    let mut m = CMatrix::zeros(rows, cols);
    m[(i, j)] = ONE;
    m
}

/// Real diagonal matrix.
pub fn diag(values: &[f64]) -> CMatrix {
    let n = values.len();
    CMatrix::from_fn(n, n, |i, j| if i == j { c(values[i], 0.0) } else { ZERO })
}

/// Column-stacking vectorization.
pub fn vec_of(x: &CMatrix) -> CVector {
    CVector::from_column_slice(x.as_slice())
}

/// Inverse of [`vec_of`].
pub fn unvec(v: &CVector, rows: usize, cols: usize) -> CMatrix {
    assert_eq!(v.len(), rows * cols, "unvec: length mismatch");
    CMatrix::from_column_slice(rows, cols, v.as_slice())
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

pub fn conj(a: &CMatrix) -> CMatrix {
    a.map(|z| z.conj())
}

pub fn trace(a: &CMatrix) -> Complex64 {
    a.trace()
}

/// Frobenius norm.
pub fn fro(a: &CMatrix) -> f64 {
    a.norm()
}

/// Largest singular value, from the eigenvalues of the smaller of
/// `A*A` and `AA*`.
pub fn op_norm(a: &CMatrix) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    let g = if a.nrows() >= a.ncols() { a.adjoint() * a } else { a * a.adjoint() };
    let g = hermitian_part(&g);
    g.symmetric_eigenvalues().max().max(0.0).sqrt()
}

/// Sum of singular values.
pub fn trace_norm(a: &CMatrix) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.clone().singular_values().sum()
}

pub fn hermitian_part(a: &CMatrix) -> CMatrix {
    (a + a.adjoint()) * c(0.5, 0.0)
}

pub fn hermiticity_defect(a: &CMatrix) -> f64 {
    fro(&(a - a.adjoint()))
}

fn check_square(a: &CMatrix, what: &str) -> Result<usize> {
    if a.nrows() != a.ncols() {
        return Err(Error::Shape(format!(
            "{what} requires a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(a.nrows())
}

/// Eigenvalues (with algebraic multiplicity) and right eigenvectors of a
/// general complex square matrix.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub eigenvalues: Vec<Complex64>,
    /// Unit-norm right eigenvectors, one column per eigenvalue.
    pub eigenvectors: CMatrix,
    /// Set when every pair meets the residual bound and the eigenvector
    /// matrix is numerically nonsingular.
    pub diagonalizable: bool,
    /// `max_i ||A v_i - λ_i v_i|| / ||A||`.
    pub max_residual: f64,
}

/// Residual bound (relative to `||A||`) used for the diagonalizability flag.
pub const EIG_RESIDUAL_TOL: f64 = 1e-8;

/// General complex eigendecomposition via the complex Schur form
/// `A = Q T Q*`; eigenvectors by back substitution on `T`.
pub fn eig(a: &CMatrix) -> Result<EigenDecomposition> {
    let n = check_square(a, "eig")?;
    if n == 0 {
        return Ok(EigenDecomposition {
            eigenvalues: vec![],
            eigenvectors: CMatrix::zeros(0, 0),
            diagonalizable: true,
            max_residual: 0.0,
        });
    }
    if a.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Shape("eig: non-finite entries".into()));
    }
    let schur = a
        .clone()
        .try_schur(f64::EPSILON, 1000 * n)
        .ok_or_else(|| Error::NonConvergence(format!("complex Schur reduction of a {n}x{n} matrix")))?;
    let (q, t) = schur.unpack();
    let eigenvalues: Vec<Complex64> = (0..n).map(|k| t[(k, k)]).collect();

    let scale = fro(&t).max(f64::MIN_POSITIVE);
    let small = f64::EPSILON * scale;
    let mut y = CMatrix::zeros(n, n);
    for k in 0..n {
        let lam = t[(k, k)];
        y[(k, k)] = ONE;
        for j in (0..k).rev() {
            let mut s = ZERO;
            for l in (j + 1)..=k {
                s += t[(j, l)] * y[(l, k)];
            }
            let mut den = t[(j, j)] - lam;
            if den.norm() < small {
                den = c(small, 0.0);
            }
            y[(j, k)] = -s / den;
        }
    }
    let mut vecs = q * y;
    for mut col in vecs.column_iter_mut() {
        let nrm = col.norm();
        if nrm > 0.0 {
            col /= c(nrm, 0.0);
        }
    }

    let anorm = fro(a).max(f64::MIN_POSITIVE);
    let mut max_residual: f64 = 0.0;
    for (k, &lam) in eigenvalues.iter().enumerate() {
        let v = vecs.column(k);
        let r = (a * v - v * lam).norm() / anorm;
        max_residual = max_residual.max(r);
    }
    let smin = vecs.clone().singular_values().min();
    let diagonalizable = max_residual <= EIG_RESIDUAL_TOL && smin >= 1e-8;
    Ok(EigenDecomposition {
        eigenvalues,
        eigenvectors: vecs,
        diagonalizable,
        max_residual,
    })
}

/// Default rank-revealing threshold, relative to `σ_max`.
pub fn default_kernel_tol(a: &CMatrix) -> f64 {
    a.nrows().max(a.ncols()) as f64 * f64::EPSILON
}

/// Orthonormal basis (as columns) of the numerical null space of `a`:
/// right singular vectors whose singular value is at most
/// `tol * max(σ_max, 1)`. The floor keeps near-zero matrices (such as
/// `σ - 1` for a one-dimensional system) from having an empty kernel.
/// With `tol = None` the threshold is `max(rows, cols) * eps`.
pub fn kernel(a: &CMatrix, tol: Option<f64>) -> Result<CMatrix> {
    let (rows, cols) = a.shape();
    if cols == 0 {
        return Ok(CMatrix::zeros(0, 0));
    }
    let rel = tol.unwrap_or_else(|| default_kernel_tol(a));
    if rel < 0.0 {
        return Err(Error::Shape("kernel tolerance must be non-negative".into()));
    }
    // Pad wide matrices so that the SVD yields a full set of right vectors;
    // reduce tall ones to their triangular QR factor, which has the same
    // singular values and right singular vectors.
    let work = if rows < cols {
        let mut p = CMatrix::zeros(cols, cols);
        p.view_mut((0, 0), (rows, cols)).copy_from(a);
        p
    } else if rows > 2 * cols {
        a.clone().qr().r()
    } else {
        a.clone()
    };
    let svd = SVD::try_new(work, false, true, f64::EPSILON, 0)
        .ok_or_else(|| Error::NonConvergence("singular value decomposition".into()))?;
    let sigma_max = svd.singular_values.max();
    let vt = svd.v_t.expect("requested right singular vectors");
    let thr = rel * sigma_max.max(1.0);
    let idx: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] <= thr)
        .collect();
    let mut out = CMatrix::zeros(cols, idx.len());
    for (k, &i) in idx.iter().enumerate() {
        let v = vt.row(i).adjoint();
        out.set_column(k, &v);
    }
    Ok(out)
}

/// Real eigenvalues (ascending) and orthonormal eigenvectors of a Hermitian
/// matrix. The input is Hermitized first.
pub fn hermitian_eigen(a: &CMatrix) -> Result<(Vec<f64>, CMatrix)> {
    let n = check_square(a, "hermitian_eigen")?;
    if n == 0 {
        return Ok((vec![], CMatrix::zeros(0, 0)));
    }
    let h = hermitian_part(a);
    let se = SymmetricEigen::try_new(h, f64::EPSILON, 0)
        .ok_or_else(|| Error::NonConvergence("Hermitian eigendecomposition".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| se.eigenvalues[i].total_cmp(&se.eigenvalues[j]));
    let vals = order.iter().map(|&i| se.eigenvalues[i]).collect();
    let mut vecs = CMatrix::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        vecs.set_column(k, &se.eigenvectors.column(i));
    }
    Ok((vals, vecs))
}

fn check_hermitian(rho: &CMatrix, tol: f64) -> Result<()> {
    let defect = hermiticity_defect(rho);
    if defect > tol.max(f64::EPSILON) * fro(rho).max(1.0) {
        return Err(Error::NotHermitian(defect));
    }
    Ok(())
}

fn spectral_function(vals: &[f64], vecs: &CMatrix, f: impl Fn(f64) -> f64) -> CMatrix {
    let mut scaled = vecs.clone();
    for (k, &v) in vals.iter().enumerate() {
        scaled.column_mut(k).scale_mut(f(v));
    }
    let out = scaled * vecs.adjoint();
    hermitian_part(&out)
}

/// Positive square root of a Hermitian PSD matrix. Eigenvalues in
/// `[-tol, 0)` are treated as zero.
pub fn herm_sqrt(rho: &CMatrix, tol: f64) -> Result<CMatrix> {
    check_square(rho, "herm_sqrt")?;
    check_hermitian(rho, tol)?;
    let (vals, vecs) = hermitian_eigen(rho)?;
    if let Some(&min) = vals.first() {
        if min < -tol {
            return Err(Error::NotPsd(min));
        }
    }
    Ok(spectral_function(&vals, &vecs, |x| x.max(0.0).sqrt()))
}

/// Inverse positive square root; requires the smallest eigenvalue to
/// exceed `tol`.
pub fn herm_inv_sqrt(rho: &CMatrix, tol: f64) -> Result<CMatrix> {
    check_square(rho, "herm_inv_sqrt")?;
    check_hermitian(rho, tol)?;
    let (vals, vecs) = hermitian_eigen(rho)?;
    if let Some(&min) = vals.first() {
        if min < -tol {
            return Err(Error::NotPsd(min));
        }
        if min <= tol {
            return Err(Error::Singular(min));
        }
    }
    Ok(spectral_function(&vals, &vecs, |x| 1.0 / x.sqrt()))
}

/// Gram–Schmidt (two passes) with rank dropping: a vector is kept when its
/// component orthogonal to the current basis has norm above `tol` times its
/// own norm.
pub fn orthonormalize(vectors: &[CVector], tol: f64) -> Vec<CVector> {
    let mut basis: Vec<CVector> = Vec::new();
    for v in vectors {
        if let Some(q) = orthogonal_remainder(&basis, v, tol) {
            basis.push(q);
        }
    }
    basis
}

/// Normalized component of `v` orthogonal to `basis`, if it is not
/// negligible relative to `||v||`.
pub fn orthogonal_remainder(basis: &[CVector], v: &CVector, tol: f64) -> Option<CVector> {
    let nv = v.norm();
    if nv == 0.0 {
        return None;
    }
    let mut w = v.clone();
    for _ in 0..2 {
        for q in basis {
            let coeff = q.dotc(&w);
            w.axpy(-coeff, q, ONE);
        }
    }
    let nw = w.norm();
    if nw <= tol * nv {
        return None;
    }
    Some(w / c(nw, 0.0))
}

/// Greedy bipartite matching of two multisets of complex numbers: every
/// element of `a` must find a distinct partner in `b` within `tol`.
pub fn spectra_match(a: &[Complex64], b: &[Complex64], tol: f64) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let mut used = vec![false; b.len()];
    for x in a {
        let best = b
            .iter()
            .enumerate()
            .filter(|(j, _)| !used[*j])
            .map(|(j, y)| (j, (x - y).norm()))
            .min_by(|p, q| p.1.total_cmp(&q.1));
        match best {
            Some((j, dist)) if dist <= tol => used[j] = true,
            _ => return false,
        }
    }
    true
}

/// Every element of `a` lies within `tol` of some element of `b`.
pub fn set_contained(a: &[Complex64], b: &[Complex64], tol: f64) -> bool {
    a.iter().all(|x| b.iter().any(|y| (x - y).norm() <= tol))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sorted_re(v: &[Complex64]) -> Vec<f64> {
        let mut r: Vec<f64> = v.iter().map(|z| z.re).collect();
        r.sort_by(f64::total_cmp);
        r
    }

    #[test]
    fn eig_of_diagonal() {
        let e = eig(&diag(&[1.0, 2.0])).unwrap();
        assert_eq!(sorted_re(&e.eigenvalues), vec![1.0, 2.0]);
        assert!(e.diagonalizable);
    }

    #[test]
    fn eig_of_swap() {
        let a = CMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO]);
        let e = eig(&a).unwrap();
        let vals = sorted_re(&e.eigenvalues);
        assert!((vals[0] + 1.0).abs() < 1e-14 && (vals[1] - 1.0).abs() < 1e-14);
        for z in &e.eigenvalues {
            assert!(z.im.abs() < 1e-14);
        }
        assert!(e.max_residual < 1e-14);
    }

    #[test]
    fn eig_rejects_non_square() {
        assert!(matches!(eig(&CMatrix::zeros(2, 3)), Err(Error::Shape(_))));
    }

    #[test]
    fn eig_flags_jordan_block() {
        let a = CMatrix::from_row_slice(2, 2, &[ONE, ONE, ZERO, ONE]);
        let e = eig(&a).unwrap();
        assert!(!e.diagonalizable);
    }

    #[test]
    fn kernel_examples() {
        let k = kernel(&diag(&[1.0, 0.0]), None).unwrap();
        assert_eq!(k.ncols(), 1);
        assert!((k[(1, 0)].norm() - 1.0).abs() < 1e-14);
        assert!(k[(0, 0)].norm() < 1e-14);
        assert_eq!(kernel(&identity(3), None).unwrap().ncols(), 0);
    }

    #[test]
    fn kernel_of_wide_matrix() {
        let a = CMatrix::from_row_slice(1, 3, &[ONE, ONE, ZERO]);
        let k = kernel(&a, None).unwrap();
        assert_eq!(k.ncols(), 2);
        assert!((a * &k).norm() < 1e-14);
    }

    #[test]
    fn kernel_of_tall_matrix() {
        let mut a = CMatrix::zeros(7, 3);
        a[(0, 0)] = ONE;
        a[(4, 0)] = c(0.0, 2.0);
        a[(6, 2)] = c(-1.0, 0.5);
        let k = kernel(&a, None).unwrap();
        assert_eq!(k.ncols(), 1);
        assert!((k[(1, 0)].norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn sqrt_examples() {
        let s = herm_sqrt(&diag(&[4.0, 9.0]), 1e-12).unwrap();
        assert!((s - diag(&[2.0, 3.0])).norm() < 1e-14);
        let s = herm_sqrt(&identity(3), 1e-12).unwrap();
        assert!((s - identity(3)).norm() < 1e-14);
        let s = herm_sqrt(&diag(&[0.5, 0.5]), 1e-12).unwrap();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert!((s - diag(&[r, r])).norm() < 1e-14);
    }

    #[test]
    fn sqrt_errors() {
        assert!(matches!(herm_sqrt(&diag(&[1.0, -0.5]), 1e-12), Err(Error::NotPsd(_))));
        assert!(matches!(herm_inv_sqrt(&diag(&[1.0, 0.0]), 1e-12), Err(Error::Singular(_))));
        let nonherm = CMatrix::from_row_slice(2, 2, &[ONE, ONE, ZERO, ONE]);
        assert!(matches!(herm_sqrt(&nonherm, 1e-12), Err(Error::NotHermitian(_))));
        let inv = herm_inv_sqrt(&diag(&[4.0, 0.25]), 1e-12).unwrap();
        assert!((inv - diag(&[0.5, 2.0])).norm() < 1e-14);
    }

    #[test]
    fn vec_identity_column_stacking() {
        let a = CMatrix::from_fn(2, 3, |i, j| c(i as f64 + 1.0, j as f64));
        let x = CMatrix::from_fn(3, 4, |i, j| c((i * j) as f64, 1.0 - i as f64));
        let b = CMatrix::from_fn(4, 2, |i, j| c(j as f64 - i as f64, 0.5));
        let lhs = vec_of(&(&a * &x * &b));
        let rhs = kron(&b.transpose(), &a) * vec_of(&x);
        assert!((lhs - rhs).norm() < 1e-12);
    }

    #[test]
    fn matching_is_order_free() {
        let a = [c(1.0, 0.0), c(-1.0, 0.0), c(0.0, 0.0)];
        let b = [c(0.0, 1e-12), c(-1.0, 0.0), c(1.0, 1e-10)];
        assert!(spectra_match(&a, &b, 1e-8));
        assert!(!spectra_match(&a, &b[..2], 1e-8));
        let dup = [c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)];
        assert!(!spectra_match(&a, &dup, 1e-8));
    }
}
