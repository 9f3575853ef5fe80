//! Small dense helpers: sorted symmetric eigen-decompositions, spectral
//! norms and Hurwitz tests.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Eigen-decomposition of a real symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    /// Eigenvalues in ascending order.
    pub values: DVector<f64>,
    /// Column `i` is the unit eigenvector for `values[i]`.
    pub vectors: DMatrix<f64>,
}

impl SymmetricEigen {
    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        self.values[self.values.len() - 1]
    }
}

/// Eigen-decomposition of the symmetric matrix whose upper triangle is that
/// of `a`, sorted ascending.
pub fn symmetric_eigen(a: &DMatrix<f64>) -> Result<SymmetricEigen> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::Dimension {
            what: "symmetric eigen (square)",
            expected: n,
            got: a.ncols(),
        });
    }
    if n == 0 {
        return Err(Error::Empty("matrix"));
    }
    let m = DMatrix::from_fn(n, n, |i, j| if i <= j { a[(i, j)] } else { a[(j, i)] });
    let eig = m.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok(SymmetricEigen { values, vectors })
}

/// Largest singular value, via the eigenvalues of `aᵀa`.
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    let ata = a.transpose() * a;
    symmetric_eigen(&ata)
        .map(|e| e.max().max(0.0).sqrt())
        .unwrap_or(f64::NAN)
}

pub fn is_symmetric(a: &DMatrix<f64>, tol: f64) -> bool {
    a.is_square()
        && (0..a.nrows()).all(|i| (0..i).all(|j| (a[(i, j)] - a[(j, i)]).abs() <= tol))
}

/// Largest real part over the spectrum of a general square matrix.
pub fn max_real_eigenvalue(a: &DMatrix<f64>) -> f64 {
    a.complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Real and imaginary parts of every eigenvalue, sorted by real part then
/// imaginary part.
pub fn eigenvalues(a: &DMatrix<f64>) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = a.complex_eigenvalues().iter().map(|z| (z.re, z.im)).collect();
    out.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.total_cmp(&y.1)));
    out
}

pub fn ensure_hurwitz(a: &DMatrix<f64>, what: &str) -> Result<()> {
    let max_real = max_real_eigenvalue(a);
    if max_real < 0.0 {
        Ok(())
    } else {
        Err(Error::NotHurwitz {
            what: what.to_string(),
            max_real,
        })
    }
}

pub fn diag(entries: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_diagonal(entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn eigen_matches_characteristic_polynomial() {
        // λ² − 120λ + 1100 = 0 → 10, 110
        let h = DMatrix::from_row_slice(2, 2, &[100.0, 30.0, 30.0, 20.0]);
        let e = symmetric_eigen(&h).unwrap();
        assert_relative_eq!(e.min(), 10.0, epsilon = 1e-12);
        assert_relative_eq!(e.max(), 110.0, epsilon = 1e-12);
        let recon = &e.vectors * DMatrix::from_diagonal(&e.values) * e.vectors.transpose();
        assert_relative_eq!(recon, h, epsilon = 1e-10);
    }

    #[test]
    fn diagonal_input_sorts_values() {
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, -1.0, 2.0]));
        let e = symmetric_eigen(&d).unwrap();
        assert_eq!(e.values.as_slice(), &[-1.0, 2.0, 3.0]);
    }

    #[test]
    fn spectral_norm_of_symmetric_is_largest_abs_eigenvalue() {
        let h = DMatrix::from_row_slice(2, 2, &[100.0, 30.0, 30.0, 20.0]);
        assert_relative_eq!(spectral_norm(&h), 110.0, epsilon = 1e-10);
        assert_relative_eq!(spectral_norm(&(-h)), 110.0, epsilon = 1e-10);
    }

    #[test]
    fn hurwitz_checks() {
        let stable = DMatrix::from_row_slice(2, 2, &[-1.0, 5.0, 0.0, -2.0]);
        assert!(ensure_hurwitz(&stable, "a").is_ok());
        let unstable = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -2.0]);
        assert!(matches!(
            ensure_hurwitz(&unstable, "a"),
            Err(Error::NotHurwitz { .. })
        ));
    }
}
