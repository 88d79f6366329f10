//! Dense factorizations shared by the solvers.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen, LU};

use crate::error::{Error, Result};

/// Factorization of a symmetric matrix: Cholesky when it is positive definite,
/// partial-pivot LU otherwise (indefinite or saddle-point systems).
#[derive(Debug, Clone)]
pub enum SymmetricFactor {
    Cholesky(Cholesky<f64, Dyn>),
    Lu(LU<f64, Dyn, Dyn>),
}

impl SymmetricFactor {
    pub fn new(m: &DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::SolveFailure("matrix is not square".into()));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::SolveFailure("matrix has non-finite entries".into()));
        }
        if let Some(c) = Cholesky::new(m.clone()) {
            return Ok(SymmetricFactor::Cholesky(c));
        }
        let lu = LU::new(m.clone());
        let u = lu.u();
        let scale = u.diagonal().amax();
        let min = u.diagonal().iter().fold(f64::INFINITY, |a, b| a.min(b.abs()));
        if !(scale > 0.0) || min <= 1e-15 * scale {
            return Err(Error::SolveFailure("matrix is numerically singular".into()));
        }
        Ok(SymmetricFactor::Lu(lu))
    }

    pub fn is_positive_definite(&self) -> bool {
        matches!(self, SymmetricFactor::Cholesky(_))
    }

    pub fn solve(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        let x = match self {
            SymmetricFactor::Cholesky(c) => c.solve(b),
            SymmetricFactor::Lu(lu) => lu
                .solve(b)
                .ok_or_else(|| Error::SolveFailure("LU solve failed".into()))?,
        };
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::SolveFailure("solution has non-finite entries".into()));
        }
        Ok(x)
    }
}

pub fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Eigenvalues of the pencil `A x = λ B x`, `B` symmetric positive definite, ascending.
pub fn generalized_eigenvalues(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<Vec<f64>> {
    let c = Cholesky::new(b.clone()).ok_or_else(|| Error::SolveFailure("B not positive definite".into()))?;
    let l = c.l();
    let linv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::SolveFailure("triangular inverse failed".into()))?;
    let mut s = &linv * a * linv.transpose();
    symmetrize(&mut s);
    Ok(symmetric_eigenvalues(&s))
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// `‖A − Aᵀ‖_F / ‖A‖_F`.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.norm();
    if n == 0.0 {
        return 0.0;
    }
    (m - m.transpose()).norm() / n
}

/// Singular values, descending.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    let fm = faer::Mat::<f64>::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)]);
    match fm.singular_values() {
        Ok(s) => s,
        Err(_) => {
            let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
            s.sort_by(|a, b| b.total_cmp(a));
            s
        }
    }
}

/// Thin SVD `a = U diag(s) Vᵀ`, singular values descending, `U` of size rows × min(rows, cols).
#[derive(Debug, Clone)]
pub struct ThinSvd {
    pub u: DMatrix<f64>,
    pub s: DVector<f64>,
    pub v_t: DMatrix<f64>,
}

fn reconstruction_error(m: &DMatrix<f64>, u: &DMatrix<f64>, s: &DVector<f64>, v_t: &DMatrix<f64>) -> f64 {
    let mut us = u.clone();
    for (mut c, sk) in us.column_iter_mut().zip(s.iter()) {
        c *= *sk;
    }
    (us * v_t - m).amax()
}

/// Thin SVD computed by faer, with the reconstruction checked.
pub fn thin_svd(a: &DMatrix<f64>) -> Result<ThinSvd> {
    let (m, n) = a.shape();
    let fa = faer::Mat::<f64>::from_fn(m, n, |i, j| a[(i, j)]);
    let svd = fa.thin_svd().map_err(|e| Error::SolveFailure(format!("SVD failed: {e:?}")))?;
    let (fu, fv, fs) = (svd.U(), svd.V(), svd.S().column_vector());
    let k = m.min(n);
    let out = ThinSvd {
        u: DMatrix::from_fn(m, k, |i, j| fu[(i, j)]),
        s: DVector::from_fn(k, |i, _| fs[i]),
        v_t: DMatrix::from_fn(k, n, |i, j| fv[(j, i)]),
    };
    let tol = 1e-12 * a.amax().max(f64::MIN_POSITIVE);
    if reconstruction_error(a, &out.u, &out.s, &out.v_t) > tol {
        return Err(Error::SolveFailure("SVD did not reproduce the matrix".into()));
    }
    Ok(out)
}

/// Least-squares solve through a thin SVD; returns the solution and the
/// 2-norm condition number of `a`.
pub fn least_squares(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
    let svd = thin_svd(a)?;
    let smax = svd.s.max();
    let smin = svd.s.min();
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    let mut c = svd.u.transpose() * b;
    for (ci, si) in c.iter_mut().zip(svd.s.iter()) {
        *ci = if *si > 0.0 { *ci / si } else { 0.0 };
    }
    Ok((svd.v_t.transpose() * c, cond))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_symmetric(n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        &a + a.transpose()
    }

    #[test]
    fn thin_svd_reconstructs_rank_deficient() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let b = DMatrix::from_fn(200, 6, |_, _| rng.random_range(-1.0..1.0));
        // last column is a combination of two others
        let mut a = DMatrix::zeros(200, 7);
        a.columns_mut(0, 6).copy_from(&b);
        let dep = b.column(1) * 2.0 - b.column(4);
        a.set_column(6, &dep);
        let svd = thin_svd(&a).unwrap();
        assert_eq!(svd.u.shape(), (200, 7));
        assert!(reconstruction_error(&a, &svd.u, &svd.s, &svd.v_t) < 1e-12);
        assert!(svd.s.iter().filter(|v| **v < 1e-12).count() == 1);
        assert!((svd.u.transpose() * &svd.u - DMatrix::identity(7, 7)).amax() < 1e-12);
    }

    #[test]
    fn indefinite_solve_round_trip() {
        let a = random_symmetric(30, 1);
        let f = SymmetricFactor::new(&a).unwrap();
        assert!(!f.is_positive_definite());
        let x0 = DVector::from_fn(30, |i, _| (i as f64).sin());
        let x = f.solve(&(&a * &x0)).unwrap();
        assert!((x - x0).norm() < 1e-10);
    }

    #[test]
    fn spd_uses_cholesky() {
        let a = random_symmetric(20, 2);
        let spd = &a * a.transpose() + DMatrix::identity(20, 20);
        assert!(SymmetricFactor::new(&spd).unwrap().is_positive_definite());
    }

    #[test]
    fn singular_rejected() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(SymmetricFactor::new(&a).is_err());
    }

    #[test]
    fn generalized_pencil() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 6.0]);
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]);
        let ev = generalized_eigenvalues(&a, &b).unwrap();
        assert!((ev[0] - 2.0).abs() < 1e-14 && (ev[1] - 3.0).abs() < 1e-14);
    }
}
