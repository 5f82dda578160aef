use nalgebra::{Schur, SVD};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::Matrix;

const MAX_ITER: usize = 10_000;

fn ensure_finite(m: &Matrix, what: &'static str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// Largest singular value (induced 2-norm).
pub fn spectral_norm(m: &Matrix) -> Result<f64> {
    ensure_finite(m, "spectral_norm input")?;
    if m.is_empty() {
        return Ok(0.0);
    }
    let svd = SVD::try_new(m.clone(), false, false, f64::EPSILON, MAX_ITER)
        .ok_or_else(|| Error::NoConvergence("SVD iteration cap reached".into()))?;
    Ok(svd.singular_values.max())
}

pub fn abs_matrix(m: &Matrix) -> Matrix {
    m.abs()
}

/// All eigenvalues of a real square matrix (Hessenberg reduction followed
/// by shifted QR, via a real Schur decomposition).
pub fn eigenvalues(m: &Matrix) -> Result<Vec<Complex64>> {
    if !m.is_square() {
        return Err(Error::dim(format!(
            "eigenvalues of a {}x{} matrix",
            m.nrows(),
            m.ncols()
        )));
    }
    ensure_finite(m, "eigenvalue input")?;
    if m.is_empty() {
        return Ok(Vec::new());
    }
    if let Some(schur) = Schur::try_new(m.clone(), f64::EPSILON, MAX_ITER) {
        return Ok(schur.complex_eigenvalues().iter().copied().collect());
    }
    // The shifted QR has no exceptional shifts and can cycle, notably on
    // Hamiltonian matrices. An orthogonal similarity keeps the spectrum and
    // breaks the cycle.
    let n = m.nrows();
    for attempt in 1..=8 {
        let v = nalgebra::DVector::from_fn(n, |i, _| ((i + 1) as f64 * (attempt as f64 + 0.5)).sin() + 0.1);
        let h = Matrix::identity(n, n) - (&v * v.transpose()) * (2.0 / v.norm_squared());
        if let Some(schur) = Schur::try_new(&h * m * &h, f64::EPSILON, MAX_ITER) {
            return Ok(schur.complex_eigenvalues().iter().copied().collect());
        }
    }
    Err(Error::NoConvergence("QR iteration cap reached in eigenvalues".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn sorted_re(mut v: Vec<Complex64>) -> Vec<Complex64> {
        v.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        v
    }

    #[test]
    fn norms() {
        assert!((spectral_norm(&Matrix::identity(3, 3)).unwrap() - 1.0).abs() < 1e-14);
        let d = dmatrix![2.0, 0.0; 0.0, -5.0];
        assert!((spectral_norm(&d).unwrap() - 5.0).abs() < 1e-14);
        let bad = dmatrix![f64::NAN];
        assert!(matches!(spectral_norm(&bad), Err(Error::NonFinite(_))));
    }

    #[test]
    fn abs_cases() {
        assert_eq!(abs_matrix(&dmatrix![-1.0, 2.0; 0.0, -3.0]), dmatrix![1.0, 2.0; 0.0, 3.0]);
        assert_eq!(abs_matrix(&Matrix::zeros(2, 3)), Matrix::zeros(2, 3));
        let pos = dmatrix![1.0, 0.5; 2.0, 0.0];
        assert_eq!(abs_matrix(&pos), pos);
    }

    #[test]
    fn eigen_cases() {
        let e = sorted_re(eigenvalues(&Matrix::from_diagonal(&nalgebra::dvector![3.0, 1.0, 2.0])).unwrap());
        for (l, want) in e.iter().zip([1.0, 2.0, 3.0]) {
            assert!((l.re - want).abs() < 1e-12 && l.im.abs() < 1e-12);
        }
        let rot = sorted_re(eigenvalues(&dmatrix![0.0, 1.0; -1.0, 0.0]).unwrap());
        assert!(rot[0].re.abs() < 1e-12 && (rot[0].im + 1.0).abs() < 1e-12);
        assert!(rot[1].re.abs() < 1e-12 && (rot[1].im - 1.0).abs() < 1e-12);

        // companion matrix of s^2 - s - 1
        let fib = sorted_re(eigenvalues(&dmatrix![0.0, 1.0; 1.0, 1.0]).unwrap());
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        assert!((fib[1].re - phi).abs() < 1e-12);
        assert!((fib[0].re - (1.0 - phi)).abs() < 1e-12);
        assert!(eigenvalues(&Matrix::zeros(2, 3)).is_err());
    }
}
