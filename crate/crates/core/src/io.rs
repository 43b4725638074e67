//! JSON form of a square complex matrix: `{"dim": d, "re": [...], "im": [...]}`
//! with row-major entries. Used for state files and replay dumps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcore::{ComplexMatrix, DensityMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixRecord {
    pub dim: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl MatrixRecord {
    pub fn from_matrix(m: &ComplexMatrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch(format!("{}x{} matrix is not square", m.nrows(), m.ncols())));
        }
        let d = m.nrows();
        let mut re = Vec::with_capacity(d * d);
        let mut im = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                re.push(m[(i, j)].re);
                im.push(m[(i, j)].im);
            }
        }
        Ok(Self { dim: d, re, im })
    }

    pub fn to_matrix(&self) -> Result<ComplexMatrix> {
        let n = self.dim * self.dim;
        if self.dim == 0 || self.re.len() != n || self.im.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "dim {} needs {} entries, got re={} im={}",
                self.dim,
                n,
                self.re.len(),
                self.im.len()
            )));
        }
        Ok(ComplexMatrix::from_fn(self.dim, self.dim, |i, j| {
            num_complex::Complex64::new(self.re[i * self.dim + j], self.im[i * self.dim + j])
        }))
    }

    /// Parses into a state, accepting Hermiticity, trace and positivity
    /// defects up to `tol`.
    pub fn to_density(&self, tol: f64) -> Result<DensityMatrix> {
        DensityMatrix::with_tolerance(self.to_matrix()?, tol)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcore::{random_density, StateKind};

    #[test]
    fn round_trip_is_exact() {
        let rho = random_density(3, StateKind::GinibreMixed, 12).unwrap();
        let rec = MatrixRecord::from_matrix(rho.matrix()).unwrap();
        let text = serde_json::to_string(&rec).unwrap();
        let back: MatrixRecord = serde_json::from_str(&text).unwrap();
        assert_eq!(&back.to_matrix().unwrap(), rho.matrix());
    }

    #[test]
    fn rejects_bad_shapes() {
        let rec = MatrixRecord {
            dim: 2,
            re: vec![1.0, 0.0, 0.0],
            im: vec![0.0; 4],
        };
        assert!(rec.to_matrix().is_err());
        assert!(MatrixRecord::from_matrix(&ComplexMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn density_tolerance() {
        let rec = MatrixRecord {
            dim: 2,
            re: vec![0.5 + 1e-8, 0.0, 0.0, 0.5],
            im: vec![0.0; 4],
        };
        assert!(rec.to_density(1e-6).is_ok());
        assert!(rec.to_density(1e-10).is_err());
    }
}
