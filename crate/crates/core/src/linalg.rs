//! Small helpers for complex Hermitian matrices.
//!
//! Log-determinants of Hermitian positive-definite matrices go through a
//! Cholesky factorization, which is the stable route for this matrix class.
//! Assemblies are re-symmetrized with `(A + A^H)/2` to suppress rounding
//! drift before factorizations.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use num_complex::Complex64;

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub const LN2: f64 = std::f64::consts::LN_2;

/// `(A + A^H) / 2`.
pub fn hermitize(a: &CMat) -> CMat {
    let half = C64::new(0.5, 0.0);
    (a + a.adjoint()) * half
}

/// Max absolute deviation from Hermitian symmetry, relative to the scale
/// `max(1, max |a_ij|)`.
pub fn hermitian_defect(a: &CMat) -> f64 {
    let scale = a.iter().map(|z| z.norm()).fold(1.0_f64, f64::max);
    let d = a - a.adjoint();
    d.iter().map(|z| z.norm()).fold(0.0_f64, f64::max) / scale
}

/// Complex identity matrix.
pub fn ceye(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// Real scalar times identity, as a complex matrix.
pub fn ceye_scaled(n: usize, s: f64) -> CMat {
    CMat::identity(n, n) * C64::new(s, 0.0)
}

pub fn cholesky(a: &CMat) -> Option<Cholesky<C64, Dyn>> {
    Cholesky::new(a.clone())
}

/// `log2 |A|` for Hermitian positive definite `A`; `None` if the Cholesky
/// factorization fails.
pub fn logdet2_hpd(a: &CMat) -> Option<f64> {
    let chol = cholesky(a)?;
    let l = chol.l();
    let mut acc = 0.0;
    for i in 0..a.nrows() {
        let d = l[(i, i)].re;
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        acc += d.ln();
    }
    Some(2.0 * acc / LN2)
}

/// `log2 |A|` with eigenvalues floored at `floor` before taking logs.
/// Used where a natural-barrier term must stay finite at pattern edges.
pub fn logdet2_floored(a: &CMat, floor: f64) -> Option<f64> {
    let eig = a.clone().symmetric_eigen();
    let mut acc = 0.0;
    for &lam in eig.eigenvalues.iter() {
        let lam = lam.max(floor);
        if !lam.is_finite() || lam <= 0.0 {
            return None;
        }
        acc += lam.ln();
    }
    Some(acc / LN2)
}

/// Inverse of a Hermitian positive definite matrix via Cholesky,
/// re-symmetrized.
pub fn inv_hpd(a: &CMat) -> Option<CMat> {
    let inv = cholesky(a)?.inverse();
    Some(hermitize(&inv))
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_eig(a: &CMat) -> f64 {
    let eig = a.clone().symmetric_eigen();
    eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Submatrix `A[rows, cols]`.
pub fn extract(a: &CMat, rows: &[usize], cols: &[usize]) -> CMat {
    CMat::from_fn(rows.len(), cols.len(), |i, j| a[(rows[i], cols[j])])
}

/// `target[idx, idx] += block`.
pub fn embed_add(target: &mut CMat, idx: &[usize], block: &CMat) {
    for (bi, &ti) in idx.iter().enumerate() {
        for (bj, &tj) in idx.iter().enumerate() {
            target[(ti, tj)] += block[(bi, bj)];
        }
    }
}

/// `Re Tr(A B)`.
pub fn re_trace_prod(a: &CMat, b: &CMat) -> f64 {
    debug_assert_eq!(a.ncols(), b.nrows());
    let mut acc = 0.0;
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            let prod = a[(i, k)] * b[(k, i)];
            acc += prod.re;
        }
    }
    acc
}

/// All entries finite.
pub fn all_finite(a: &CMat) -> bool {
    a.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn logdet_matches_diagonal_product() {
        let a = CMat::from_diagonal(&CVec::from_vec(vec![
            C64::new(2.0, 0.0),
            C64::new(3.0, 0.0),
            C64::new(5.0, 0.0),
        ]));
        let ld = logdet2_hpd(&a).unwrap();
        assert!(rel(ld, (30.0_f64).log2()) < 1e-12);
    }

    #[test]
    fn hermitize_makes_hermitian() {
        let a = CMat::from_fn(3, 3, |i, j| C64::new((i + 2 * j) as f64, (i * j) as f64));
        let h = hermitize(&a);
        assert!(hermitian_defect(&h) < 1e-15);
    }

    #[test]
    fn inverse_roundtrip() {
        let g = CMat::from_fn(4, 4, |i, j| {
            C64::new(((i * 7 + j * 3) % 5) as f64 - 2.0, ((i + 2 * j) % 3) as f64 - 1.0)
        });
        let a = &g * g.adjoint() + ceye_scaled(4, 1.0);
        let inv = inv_hpd(&a).unwrap();
        let err = (&a * &inv - ceye(4)).iter().map(|z| z.norm()).fold(0.0_f64, f64::max);
        assert!(err < 1e-10, "err = {err}");
    }

    #[test]
    fn floored_logdet_stays_finite_at_zero() {
        let a = CMat::zeros(2, 2);
        let ld = logdet2_floored(&a, 1e-12).unwrap();
        assert!(rel(ld, 2.0 * (1e-12_f64).log2()) < 1e-9);
    }
}
