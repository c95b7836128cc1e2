//! Dense linear-algebra helpers shared by the posterior and importance code.

use alloc::vec::Vec;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Relative jitter added on the first retry: `JITTER_SCALE * trace / dim`.
pub const JITTER_SCALE: f64 = 1e-10;
/// Number of doublings of the jitter before giving up.
pub const JITTER_DOUBLINGS: usize = 6;

/// Cholesky factorization of a symmetric positive-definite matrix.
///
/// On failure the diagonal is loaded with `1e-10 * trace / dim`, doubling up
/// to six times. The error carries the smallest eigenvalue of the input.
pub fn cholesky_jittered(m: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    if let Some(c) = m.clone().cholesky() {
        return Ok(c);
    }
    let dim = m.nrows();
    let mut jitter = JITTER_SCALE * m.trace().abs() / dim.max(1) as f64;
    if jitter > 0.0 {
        for _ in 0..=JITTER_DOUBLINGS {
            let mut a = m.clone();
            for i in 0..dim {
                a[(i, i)] += jitter;
            }
            if let Some(c) = a.cholesky() {
                return Ok(c);
            }
            jitter *= 2.0;
        }
    }
    Err(Error::Factorization {
        min_eigenvalue: min_eigenvalue(m),
    })
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::NAN;
    }
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
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

/// A square-root factor `L` with `L Lᵀ = m` for a positive semidefinite `m`.
///
/// Uses Cholesky when it succeeds and otherwise an eigendecomposition with
/// negative eigenvalues clamped to zero, so singular covariances are fine.
pub fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    if let Some(c) = m.clone().cholesky() {
        return c.l();
    }
    let eig = SymmetricEigen::new(m.clone());
    let mut q = eig.eigenvectors;
    for (k, lambda) in eig.eigenvalues.iter().enumerate() {
        let s = libm::sqrt(lambda.max(0.0));
        q.column_mut(k).scale_mut(s);
    }
    q
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Linear-interpolation quantile of ascending data (the "type 7" rule).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = libm::floor(h) as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Serde adapter writing a matrix as `{ rows, cols, data }` with row-major data.
pub mod serde_matrix {
    use super::*;

    #[derive(Serialize, Deserialize)]
    struct MatrixDoc {
        rows: usize,
        cols: usize,
        data: Vec<f64>,
    }

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> core::result::Result<S::Ok, S::Error> {
        let mut data = Vec::with_capacity(m.len());
        for i in 0..m.nrows() {
            data.extend(m.row(i).iter().copied());
        }
        MatrixDoc {
            rows: m.nrows(),
            cols: m.ncols(),
            data,
        }
        .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> core::result::Result<DMatrix<f64>, D::Error> {
        let doc = MatrixDoc::deserialize(d)?;
        if doc.rows * doc.cols != doc.data.len() {
            return Err(serde::de::Error::custom("matrix data length does not match its shape"));
        }
        Ok(DMatrix::from_row_slice(doc.rows, doc.cols, &doc.data))
    }
}

/// Serde adapter writing a vector as a plain sequence.
pub mod serde_vector {
    use super::*;

    pub fn serialize<S: Serializer>(v: &DVector<f64>, s: S) -> core::result::Result<S::Ok, S::Error> {
        v.as_slice().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> core::result::Result<DVector<f64>, D::Error> {
        let data = Vec::<f64>::deserialize(d)?;
        Ok(DVector::from_vec(data))
    }
}
