//! Small dense linear-algebra toolkit over `Complex<f64>`.
//!
//! Everything here is desk-scale: dense SVD, Cholesky and LU from `nalgebra`,
//! plus the few compositions the operator-theoretic modules keep needing
//! (Gram-orthonormal bases, principal angles, Hermitian parts).

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen, SVD};
use num_complex::Complex64;
use rand::Rng;

use crate::error::{EvoError, Result};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);

pub fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn to_complex(m: &DMatrix<f64>) -> CMat {
    m.map(c)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn diag(values: &[f64]) -> CMat {
    let mut m = CMat::zeros(values.len(), values.len());
    for (i, v) in values.iter().enumerate() {
        m[(i, i)] = c(*v);
    }
    m
}

/// `(M + M^H) / 2`.
pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()).map(|x| x * 0.5)
}

/// Smallest eigenvalue of a Hermitian matrix (the input is symmetrized first).
pub fn min_eig_hermitian(m: &CMat) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    let h = hermitian_part(m);
    let eig = SymmetricEigen::new(h);
    eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}

pub fn max_eig_hermitian(m: &CMat) -> f64 {
    if m.nrows() == 0 {
        return f64::NEG_INFINITY;
    }
    let h = hermitian_part(m);
    let eig = SymmetricEigen::new(h);
    eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
}

pub fn singular_values(m: &CMat) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let svd = SVD::new(m.clone(), false, false);
    let mut s: Vec<f64> = svd.singular_values.iter().cloned().collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    s
}

pub fn spectral_norm(m: &CMat) -> f64 {
    singular_values(m).first().cloned().unwrap_or(0.0)
}

pub fn smallest_singular_value(m: &CMat) -> f64 {
    singular_values(m).last().cloned().unwrap_or(0.0)
}

/// Frobenius norm.
pub fn fro(m: &CMat) -> f64 {
    m.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

pub fn vec_norm(v: &CVec) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Euclidean-orthonormal basis of `ker m`, using the relative singular value
/// threshold `rel_tol * sigma_max`.
pub fn nullspace(m: &CMat, rel_tol: f64) -> CMat {
    let n = m.ncols();
    if n == 0 {
        return CMat::zeros(0, 0);
    }
    // pad to square so that the full right singular basis is available
    let rows = m.nrows().max(n);
    let mut a = CMat::zeros(rows, n);
    a.view_mut((0, 0), (m.nrows(), n)).copy_from(m);
    let svd = SVD::new(a, false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let sigma = &svd.singular_values;
    let smax = sigma.iter().cloned().fold(0.0, f64::max);
    let thresh = rel_tol * smax.max(f64::MIN_POSITIVE);
    let cols: Vec<usize> = (0..sigma.len()).filter(|&i| sigma[i] <= thresh).collect();
    let mut basis = CMat::zeros(n, cols.len());
    for (j, &i) in cols.iter().enumerate() {
        let row = v_t.row(i).adjoint();
        basis.set_column(j, &row);
    }
    basis
}

/// Euclidean-orthonormal basis of the range of `m` (columns with
/// `sigma > rel_tol * sigma_max`), together with the kept singular values.
pub fn range_basis(m: &CMat, rel_tol: f64) -> (CMat, Vec<f64>) {
    if m.ncols() == 0 || m.nrows() == 0 {
        return (CMat::zeros(m.nrows(), 0), Vec::new());
    }
    let svd = SVD::new(m.clone(), true, false);
    let u = svd.u.expect("requested left singular vectors");
    let sigma = &svd.singular_values;
    let smax = sigma.iter().cloned().fold(0.0, f64::max);
    let mut idx: Vec<usize> = (0..sigma.len())
        .filter(|&i| sigma[i] > rel_tol * smax)
        .collect();
    idx.sort_by(|&a, &b| sigma[b].partial_cmp(&sigma[a]).unwrap());
    let mut basis = CMat::zeros(m.nrows(), idx.len());
    for (j, &i) in idx.iter().enumerate() {
        basis.set_column(j, &u.column(i));
    }
    (basis, idx.iter().map(|&i| sigma[i]).collect())
}

pub fn cholesky(m: &CMat) -> Result<Cholesky<Complex64, Dyn>> {
    Cholesky::new(hermitian_part(m))
        .ok_or_else(|| EvoError::Singular("matrix is not Hermitian positive definite".into()))
}

/// Re-orthonormalizes the columns of `basis` in the inner product `x^H gram y`.
pub fn orthonormalize_in(gram: &CMat, basis: &CMat) -> Result<CMat> {
    if basis.ncols() == 0 {
        return Ok(basis.clone());
    }
    let small = basis.adjoint() * gram * basis;
    let ch = cholesky(&small)?;
    // basis * L^{-H}
    let l = ch.l();
    let lh = l.adjoint();
    let inv = lh
        .try_inverse()
        .ok_or_else(|| EvoError::Singular("degenerate basis".into()))?;
    Ok(basis * inv)
}

/// Largest sine of the principal angles between two subspaces given by
/// `gram`-orthonormal bases. Returns 1 when the dimensions differ.
pub fn principal_angle_sin(gram: &CMat, q1: &CMat, q2: &CMat) -> f64 {
    if q1.ncols() != q2.ncols() {
        return 1.0;
    }
    if q1.ncols() == 0 {
        return 0.0;
    }
    let l = match cholesky(gram) {
        Ok(ch) => ch.l(),
        Err(_) => return f64::NAN,
    };
    let one_side = |a: &CMat, b: &CMat| {
        let resid = a - b * (b.adjoint() * gram * a);
        spectral_norm(&(l.adjoint() * resid))
    };
    one_side(q1, q2).max(one_side(q2, q1)).min(1.0)
}

/// Solves `m x = b` by LU with partial pivoting; reports singularity when the
/// pivot ratio falls below `1e-14`.
pub fn lu_solve(m: &CMat, b: &CMat) -> Option<CMat> {
    let lu = m.clone().lu();
    let u = lu.u();
    let mut pmax: f64 = 0.0;
    let mut pmin = f64::INFINITY;
    for i in 0..u.nrows().min(u.ncols()) {
        let p = u[(i, i)].norm();
        pmax = pmax.max(p);
        pmin = pmin.min(p);
    }
    if u.nrows() > 0 && (pmin <= 1e-14 * pmax || pmax == 0.0) {
        return None;
    }
    lu.solve(b)
}

pub fn lu_solve_vec(m: &CMat, b: &CVec) -> Option<CVec> {
    let bm = CMat::from_column_slice(b.len(), 1, b.as_slice());
    lu_solve(m, &bm).map(|x| CVec::from_column_slice(x.as_slice()))
}

pub fn inverse(m: &CMat) -> Result<CMat> {
    lu_solve(m, &identity(m.nrows())).ok_or_else(|| EvoError::Singular("matrix inverse".into()))
}

/// Inverse square root of a Hermitian positive definite matrix.
pub fn inv_sqrt_hpd(m: &CMat) -> Result<CMat> {
    let eig = SymmetricEigen::new(hermitian_part(m));
    if eig.eigenvalues.iter().any(|&l| l <= 0.0) {
        return Err(EvoError::Singular("matrix is not positive definite".into()));
    }
    let d = diag(&eig.eigenvalues.iter().map(|l| 1.0 / l.sqrt()).collect::<Vec<_>>());
    Ok(&eig.eigenvectors * d * eig.eigenvectors.adjoint())
}

/// Square root of a Hermitian positive definite matrix.
pub fn sqrt_hpd(m: &CMat) -> Result<CMat> {
    let eig = SymmetricEigen::new(hermitian_part(m));
    if eig.eigenvalues.iter().any(|&l| l <= 0.0) {
        return Err(EvoError::Singular("matrix is not positive definite".into()));
    }
    let d = diag(&eig.eigenvalues.iter().map(|l| l.sqrt()).collect::<Vec<_>>());
    Ok(&eig.eigenvectors * d * eig.eigenvectors.adjoint())
}

pub fn random_cmat<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> CMat {
    CMat::from_fn(rows, cols, |_, _| {
        Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
    })
}

pub fn random_cvec<R: Rng>(rng: &mut R, n: usize) -> CVec {
    CVec::from_fn(n, |_, _| {
        Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
    })
}

/// Random skew-Hermitian matrix.
pub fn random_skew<R: Rng>(rng: &mut R, n: usize) -> CMat {
    let a = random_cmat(rng, n, n);
    (&a - a.adjoint()).map(|x| x * 0.5)
}

/// Random Hermitian positive definite matrix with spectrum in `[lo, lo + 1 + n]`.
pub fn random_hpd<R: Rng>(rng: &mut R, n: usize, lo: f64) -> CMat {
    let a = random_cmat(rng, n, n);
    &a * a.adjoint() + identity(n).map(|x| x * lo)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn nullspace_of_rank_deficient() {
        let m = to_complex(&DMatrix::from_row_slice(2, 3, &[1.0, 1.0, 0.0, 2.0, 2.0, 0.0]));
        let n = nullspace(&m, 1e-10);
        assert_eq!(n.ncols(), 2);
        assert!(fro(&(&m * &n)) < 1e-12);
    }

    #[test]
    fn principal_angles_of_same_space_vanish() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = random_hpd(&mut rng, 6, 1.0);
        let b = random_cmat(&mut rng, 6, 2);
        let q1 = orthonormalize_in(&g, &b).unwrap();
        let mix = random_cmat(&mut rng, 2, 2);
        let q2 = orthonormalize_in(&g, &(&b * mix)).unwrap();
        assert!(principal_angle_sin(&g, &q1, &q2) < 1e-10);
        let other = orthonormalize_in(&g, &random_cmat(&mut rng, 6, 2)).unwrap();
        assert!(principal_angle_sin(&g, &q1, &other) > 1e-3);
    }

    #[test]
    fn singular_lu_is_reported() {
        let m = to_complex(&DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]));
        assert!(lu_solve(&m, &identity(2)).is_none());
    }

    #[test]
    fn inv_sqrt_squares_to_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let g = random_hpd(&mut rng, 5, 0.5);
        let s = inv_sqrt_hpd(&g).unwrap();
        let err = fro(&(&s * &g * &s - identity(5)));
        assert!(err < 1e-10, "{err}");
    }
}
