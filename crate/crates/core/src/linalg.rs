//! Small dense helpers shared by the Riccati, filter and simulation code.

use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::error::{Error, Result};

/// Condition-number ceiling for matrices that get inverted inside a Riccati step.
pub const COND_LIMIT: f64 = 1e14;

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Largest absolute entry of `m - mᵀ`.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Extreme eigenvalues of a symmetric matrix (the upper triangle is trusted).
pub fn eig_range(m: &DMatrix<f64>) -> (f64, f64) {
    if m.nrows() == 1 {
        return (m[(0, 0)], m[(0, 0)]);
    }
    let ev = m.clone().symmetric_eigenvalues();
    let lo = ev.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = ev.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

/// `m ⪰ 0` up to `rel_tol` times the spectral scale of `m`.
pub fn is_psd(m: &DMatrix<f64>, rel_tol: f64) -> bool {
    if m.nrows() == 0 {
        return true;
    }
    let (lo, hi) = eig_range(m);
    lo >= -rel_tol * hi.abs().max(lo.abs()).max(f64::MIN_POSITIVE)
}

/// Strict positive definiteness: smallest eigenvalue above `rel_tol` times the largest.
pub fn is_pd(m: &DMatrix<f64>, rel_tol: f64) -> bool {
    if m.nrows() == 0 {
        return true;
    }
    let (lo, hi) = eig_range(m);
    hi > 0.0 && lo > rel_tol * hi
}

/// Spectral norm of a symmetric matrix.
pub fn sym_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    let (lo, hi) = eig_range(m);
    lo.abs().max(hi.abs())
}

/// Spectral radius of a general square matrix.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    match m.nrows() {
        0 => 0.0,
        1 => m[(0, 0)].abs(),
        _ => m
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max),
    }
}

/// Cholesky factor of a symmetric positive definite matrix, refusing matrices whose
/// condition number exceeds [`COND_LIMIT`].
pub fn guarded_cholesky(s: &DMatrix<f64>, op: &'static str) -> Result<Cholesky<f64, Dyn>> {
    let (lo, hi) = eig_range(s);
    let cond = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(cond.is_finite() && cond <= COND_LIMIT) {
        return Err(Error::Singular {
            op,
            stage: None,
            cond,
        });
    }
    Cholesky::new(s.clone()).ok_or(Error::Singular {
        op,
        stage: None,
        cond,
    })
}

/// `x · s⁻¹` for a factored symmetric `s`.
pub fn right_solve(x: &DMatrix<f64>, s: &Cholesky<f64, Dyn>) -> DMatrix<f64> {
    s.solve(&x.transpose()).transpose()
}

/// log det of a symmetric positive definite matrix, via its Cholesky factor.
pub fn log_det_pd(m: &DMatrix<f64>) -> Option<f64> {
    if m.nrows() == 1 {
        let v = m[(0, 0)];
        return (v > 0.0).then(|| v.ln());
    }
    let c = Cholesky::new(m.clone())?;
    let l = c.l_dirty();
    Some(2.0 * (0..m.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>())
}

/// Symmetric square root with negative eigenvalues clipped to zero.
pub fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    if m.nrows() == 1 {
        return DMatrix::from_element(1, 1, m[(0, 0)].max(0.0).sqrt());
    }
    let eig = symmetrize(m).symmetric_eigen();
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| v.max(0.0).sqrt()));
    &eig.eigenvectors * d * eig.eigenvectors.transpose()
}

/// Trace of a product without forming it.
pub fn trace_prod(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.component_mul(&b.transpose()).sum()
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_det_matches_product_of_eigenvalues() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let expected = (2.0_f64 * 1.0 - 0.25).ln();
        assert!((log_det_pd(&m).unwrap() - expected).abs() < 1e-14);
        assert!(log_det_pd(&DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0])).is_none());
    }

    #[test]
    fn cholesky_guard_rejects_ill_conditioned() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1e-15]);
        assert!(matches!(
            guarded_cholesky(&m, "t"),
            Err(Error::Singular { .. })
        ));
        let ok = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1e-10]);
        assert!(guarded_cholesky(&ok, "t").is_ok());
    }

    #[test]
    fn spectral_radius_of_rotation_scaled() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, -0.5, 0.5, 0.0]);
        assert!((spectral_radius(&m) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn psd_sqrt_squares_back() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let r = psd_sqrt(&m);
        assert!((&r * &r - &m).abs().max() < 1e-12);
    }
}
