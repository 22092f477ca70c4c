//! Complex dense linear-algebra kernels shared by the link and Lagrangian
//! layers: SVD pseudo-inverse, Gram inverse, and the column-times-row outer
//! products that drive the analytic gradient and Hessian.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::{Error, Result};

/// Dense complex matrix, double precision.
pub type CMatrix = DMatrix<Complex64>;
/// Dense complex column vector, double precision.
pub type CVector = DVector<Complex64>;

/// Relative singular-value cutoff for rank decisions.
pub const RANK_TOL: f64 = 1e-12;
/// Condition-number ceiling for the Gram inverse; beyond this the ZF link is
/// physically meaningless and we fail loudly.
pub const COND_MAX: f64 = 1e12;

/// Moore-Penrose pseudo-inverse via SVD with relative cutoff [`RANK_TOL`].
///
/// Errors with [`Error::RankDeficient`] when the smallest singular value
/// falls below `RANK_TOL` times the largest, so degenerate channel draws are
/// rejected instead of silently amplified.
pub fn pseudo_inverse(a: &CMatrix) -> Result<CMatrix> {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smax > 0.0) || smin < RANK_TOL * smax {
        return Err(Error::RankDeficient {
            smallest: smin,
            tol: RANK_TOL,
        });
    }
    svd.pseudo_inverse(RANK_TOL * smax)
        .map_err(|_| Error::RankDeficient {
            smallest: smin,
            tol: RANK_TOL,
        })
}

/// Inverse of the Gram matrix, `T = (Q^H Q)^{-1}`.
///
/// The result is Hermitian positive definite for full-column-rank `Q`.
/// Errors with [`Error::Singular`] when the condition number of `Q^H Q`
/// exceeds [`COND_MAX`].
pub fn gram_inverse(q: &CMatrix) -> Result<CMatrix> {
    let gram = q.adjoint() * q;
    let svd = gram.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if cond > COND_MAX {
        return Err(Error::Singular {
            cond,
            max: COND_MAX,
        });
    }
    let inv = gram.try_inverse().ok_or(Error::Singular {
        cond,
        max: COND_MAX,
    })?;
    // symmetrize to kill roundoff skew
    Ok((&inv + inv.adjoint()).scale(0.5))
}

/// Outer product of a column `a` (length M) and a row `b` (length K),
/// entry `(m, k) = a_m * b_k`.
pub fn col_row_outer(a: &CVector, b: &[Complex64]) -> CMatrix {
    CMatrix::from_fn(a.len(), b.len(), |m, k| a[m] * b[k])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use num_complex::Complex64 as C;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_cmatrix(rng: &mut impl Rng, rows: usize, cols: usize) -> CMatrix {
        CMatrix::from_fn(rows, cols, |_, _| {
            C::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
        })
    }

    #[test]
    fn pinv_identity() {
        let i3 = CMatrix::identity(3, 3);
        let p = pseudo_inverse(&i3).unwrap();
        assert_relative_eq!((p - i3).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn pinv_diagonal() {
        let a = CMatrix::from_diagonal(&CVector::from_vec(vec![C::new(2.0, 0.0), C::new(4.0, 0.0)]));
        let p = pseudo_inverse(&a).unwrap();
        assert_relative_eq!(p[(0, 0)].re, 0.5, epsilon = 1e-14);
        assert_relative_eq!(p[(1, 1)].re, 0.25, epsilon = 1e-14);
        assert_relative_eq!(p[(0, 1)].norm(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn pinv_left_inverse_of_tall_full_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random_cmatrix(&mut rng, 6, 3);
        let p = pseudo_inverse(&a).unwrap();
        let residual = (&p * &a - CMatrix::identity(3, 3)).norm();
        assert!(residual < 1e-10, "||A+A - I|| = {residual:e}");
    }

    #[test]
    fn pinv_moore_penrose_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let a = random_cmatrix(&mut rng, 7, 4);
            let p = pseudo_inverse(&a).unwrap();
            let scale = a.norm().max(p.norm());
            assert!((&a * &p * &a - &a).norm() / scale < 1e-9);
            assert!((&p * &a * &p - &p).norm() / scale < 1e-9);
            let ap = &a * &p;
            assert!((ap.adjoint() - &ap).norm() / scale < 1e-9);
            let pa = &p * &a;
            assert!((pa.adjoint() - &pa).norm() / scale < 1e-9);
        }
    }

    #[test]
    fn pinv_rejects_rank_deficient() {
        // second column is a multiple of the first
        let a = CMatrix::from_fn(4, 2, |m, k| C::new((m + 1) as f64 * (k + 1) as f64, 0.0));
        assert!(matches!(pseudo_inverse(&a), Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn gram_inverse_identity_and_diag() {
        let t = gram_inverse(&CMatrix::identity(2, 2)).unwrap();
        assert_relative_eq!((t - CMatrix::identity(2, 2)).norm(), 0.0, epsilon = 1e-12);

        let q = CMatrix::from_diagonal(&CVector::from_vec(vec![C::new(2.0, 0.0), C::new(1.0, 0.0)]));
        let t = gram_inverse(&q).unwrap();
        assert_relative_eq!(t[(0, 0)].re, 0.25, epsilon = 1e-14);
        assert_relative_eq!(t[(1, 1)].re, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn gram_inverse_is_inverse_and_hermitian_pd() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let q = random_cmatrix(&mut rng, 5, 3);
        let t = gram_inverse(&q).unwrap();
        let gram = q.adjoint() * &q;
        assert!((&t * gram - CMatrix::identity(3, 3)).norm() < 1e-10);
        assert!((t.adjoint() - &t).norm() < 1e-12);
        for _ in 0..10 {
            let x = CVector::from_fn(3, |_, _| C::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
            let quad = (x.adjoint() * &t * &x)[(0, 0)];
            assert!(quad.re > 0.0);
        }
    }

    #[test]
    fn gram_inverse_rejects_singular() {
        let q = CMatrix::from_fn(3, 2, |m, _| C::new(m as f64, 1.0));
        assert!(matches!(gram_inverse(&q), Err(Error::Singular { .. })));
    }

    #[test]
    fn outer_product_small() {
        let a = CVector::from_vec(vec![C::new(1.0, 0.0), C::new(0.0, 1.0)]);
        let b = [C::new(1.0, 0.0), C::new(-1.0, 0.0)];
        let m = col_row_outer(&a, &b);
        assert_eq!(m[(0, 0)], C::new(1.0, 0.0));
        assert_eq!(m[(0, 1)], C::new(-1.0, 0.0));
        assert_eq!(m[(1, 0)], C::new(0.0, 1.0));
        assert_eq!(m[(1, 1)], C::new(0.0, -1.0));
    }

    #[test]
    fn outer_product_of_zero_is_zero() {
        let a = CVector::zeros(4);
        let b = [C::new(1.0, 2.0); 3];
        assert_eq!(col_row_outer(&a, &b).norm(), 0.0);
    }

    #[test]
    fn outer_product_has_rank_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let a = CVector::from_fn(5, |_, _| C::new(rng.gen(), rng.gen()));
        let b: Vec<C> = (0..4).map(|_| C::new(rng.gen(), rng.gen())).collect();
        let m = col_row_outer(&a, &b);
        let sv = m.svd(false, false).singular_values;
        assert!(sv[0] > 1e-3);
        for i in 1..sv.len() {
            assert!(sv[i] < 1e-12 * sv[0], "sv[{i}] = {:e}", sv[i]);
        }
    }

    #[test]
    fn trace_cyclic_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let a = random_cmatrix(&mut rng, 3, 4);
        let b = random_cmatrix(&mut rng, 4, 5);
        let c = random_cmatrix(&mut rng, 5, 3);
        let t1 = (&a * &b * &c).trace();
        let t2 = (&b * &c * &a).trace();
        let t3 = (&c * &a * &b).trace();
        assert!((t1 - t2).norm() < 1e-12 && (t2 - t3).norm() < 1e-12);
    }
}
