//! Feature matrices and DCTR-style feature extraction.

mod dctr;
pub(crate) mod io;

pub use dctr::{extract_dctr, extract_dctr_batch, DctrConfig, DCTR_KERNELS, DCTR_PHASE_CLASSES};
pub use io::{decode_matrix, encode_matrix, read_csv, read_matrix, write_matrix, MATRIX_MAGIC, MATRIX_VERSION};

use std::collections::HashSet;

use crate::error::{Error, Result};

/// An n×d matrix of per-image feature vectors with one id per row.
///
/// Entries are stored as `f32`, row-major, which is also the on-disk
/// layout. All arithmetic on feature matrices is carried out in `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
    ids: Vec<String>,
}

impl FeatureMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>, ids: Vec<String>) -> Result<Self> {
        if rows == 0 {
            return Err(Error::EmptySet("feature matrix"));
        }
        if cols == 0 {
            return Err(Error::InvalidParameter("feature dimension must be at least 1".into()));
        }
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch { left: data.len(), right: rows * cols });
        }
        if ids.len() != rows {
            return Err(Error::DimensionMismatch { left: ids.len(), right: rows });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature matrix"));
        }
        let mut seen = HashSet::with_capacity(ids.len());
        for id in &ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::DuplicateId(id.clone()));
            }
        }
        Ok(Self { rows, cols, data, ids })
    }

    /// Builds a matrix from equal-length rows, naming them `0..n`.
    pub fn from_rows<T: Copy + Into<f64>>(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::DimensionMismatch { left: r.len(), right: cols });
            }
            data.extend(r.iter().map(|&v| v.into() as f32));
        }
        let ids = (0..rows.len()).map(|i| i.to_string()).collect();
        Self::new(rows.len(), cols, data, ids)
    }

    pub fn from_vectors(vectors: Vec<Vec<f32>>, ids: Vec<String>) -> Result<Self> {
        let cols = vectors.first().map_or(0, Vec::len);
        let rows = vectors.len();
        let mut data = Vec::with_capacity(rows * cols);
        for v in vectors {
            if v.len() != cols {
                return Err(Error::DimensionMismatch { left: v.len(), right: cols });
            }
            data.extend(v);
        }
        Self::new(rows, cols, data, ids)
    }

    pub fn n(&self) -> usize {
        self.rows
    }

    pub fn d(&self) -> usize {
        self.cols
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.cols)
    }

    /// Column-wise mean.
    pub fn mean(&self) -> Vec<f64> {
        let mut acc = vec![0.0f64; self.cols];
        for r in self.rows() {
            for (a, &v) in acc.iter_mut().zip(r) {
                *a += v as f64;
            }
        }
        let n = self.rows as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        acc
    }

    pub fn has_non_finite(&self) -> bool {
        self.data.iter().any(|v| !v.is_finite())
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        let mut ids = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(self.row(i));
            ids.push(self.ids[i].clone());
        }
        Self::new(indices.len(), self.cols, data, ids)
    }

    /// Vertical concatenation. Ids must stay unique across parts.
    pub fn concat(parts: &[&FeatureMatrix]) -> Result<Self> {
        let first = parts.first().ok_or(Error::EmptySet("concatenation"))?;
        let cols = first.cols;
        let mut data = Vec::new();
        let mut ids = Vec::new();
        for p in parts {
            if p.cols != cols {
                return Err(Error::DimensionMismatch { left: p.cols, right: cols });
            }
            data.extend_from_slice(&p.data);
            ids.extend(p.ids.iter().cloned());
        }
        Self::new(ids.len(), cols, data, ids)
    }

    /// Same data with every id prefixed, used before concatenating sets
    /// whose ids could collide.
    pub fn prefixed(&self, prefix: &str) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.clone(),
            ids: self.ids.iter().map(|id| format!("{prefix}{id}")).collect(),
        }
    }

    /// Dense f64 copy, rows × cols, column-major (nalgebra layout).
    pub(crate) fn to_dmatrix(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_fn(self.rows, self.cols, |i, j| self.data[i * self.cols + j] as f64)
    }

    pub(crate) fn check_same_dim(&self, other: &FeatureMatrix) -> Result<()> {
        if self.cols != other.cols {
            return Err(Error::DimensionMismatch { left: self.cols, right: other.cols });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_duplicate_ids_and_nan() {
        let err = FeatureMatrix::new(2, 1, vec![1.0, 2.0], vec!["a".into(), "a".into()]).unwrap_err();
        assert!(matches!(err, Error::DuplicateId(_)));
        let err = FeatureMatrix::new(1, 1, vec![f32::NAN], vec!["a".into()]).unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
        assert!(matches!(FeatureMatrix::from_rows::<f64>(&[]), Err(Error::EmptySet(_))));
    }

    #[test]
    fn mean_and_select() {
        let m = FeatureMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 6.0]]).unwrap();
        assert_eq!(m.mean(), vec![2.0, 4.0]);
        let s = m.select(&[1]).unwrap();
        assert_eq!(s.row(0), &[3.0, 6.0]);
        assert_eq!(s.ids(), &["1".to_string()]);
    }
}
