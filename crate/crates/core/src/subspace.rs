//! Linear manifold estimation by PCA and principal-angle distances.

use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen, SVD};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{self, FeatureMatrix};
use crate::linalg::{orthonormalize_columns, orthonormality_residual};

/// Fraction of variance kept by default when estimating a manifold.
pub const DEFAULT_VARIANCE_THRESHOLD: f64 = 0.999;

/// Affine PCA subspace: a mean plus an orthonormal d×k basis.
#[derive(Debug, Clone, PartialEq)]
pub struct Subspace {
    mean: Vec<f64>,
    basis: DMatrix<f64>,
    explained_variance: Vec<f64>,
    variance_captured: f64,
}

/// Principal angles in radians, ascending, each in [0, π/2].
#[derive(Debug, Clone, PartialEq)]
pub struct AngleSpectrum(pub Vec<f64>);

impl AngleSpectrum {
    pub fn angles(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Subspace {
    /// Subspace spanned by the columns of `basis` (orthonormalized here),
    /// with zero mean and unit explained variance per direction.
    pub fn from_basis(basis: DMatrix<f64>) -> Result<Self> {
        if basis.ncols() == 0 || basis.nrows() == 0 {
            return Err(Error::InvalidParameter("basis must have at least one column".into()));
        }
        if basis.ncols() > basis.nrows() {
            return Err(Error::InvalidParameter("more basis vectors than ambient dimensions".into()));
        }
        let k = basis.ncols();
        let d = basis.nrows();
        Ok(Self {
            mean: vec![0.0; d],
            basis: orthonormalize_columns(basis),
            explained_variance: vec![1.0; k],
            variance_captured: 1.0,
        })
    }

    /// Span of the given vectors (one per element).
    pub fn spanned_by(vectors: &[Vec<f64>]) -> Result<Self> {
        let d = vectors.first().map_or(0, Vec::len);
        if vectors.iter().any(|v| v.len() != d) {
            return Err(Error::InvalidParameter("vectors of unequal length".into()));
        }
        Self::from_basis(DMatrix::from_fn(d, vectors.len(), |i, j| vectors[j][i]))
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// d×k matrix with orthonormal columns.
    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn explained_variance(&self) -> &[f64] {
        &self.explained_variance
    }

    pub fn variance_captured(&self) -> f64 {
        self.variance_captured
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn orthonormality_residual(&self) -> f64 {
        orthonormality_residual(&self.basis)
    }

    /// Right-multiplies the basis by a k×k orthogonal matrix; the span is unchanged.
    pub fn rotated(&self, rotation: &DMatrix<f64>) -> Result<Self> {
        if rotation.nrows() != self.dim() || rotation.ncols() != self.dim() {
            return Err(Error::DimensionMismatch { left: rotation.nrows(), right: self.dim() });
        }
        Ok(Self { basis: &self.basis * rotation, ..self.clone() })
    }
}

/// Estimates the PCA subspace of `features`, keeping the smallest number
/// of leading components whose cumulative explained-variance ratio reaches
/// `variance_threshold`.
///
/// The principal directions come from the thin SVD of the centered data.
/// When d > n the SVD is obtained from the n×n Gram matrix `X·Xᵀ`
/// (whose eigenvectors are the left singular vectors); the right singular
/// vectors are then `Xᵀ·u / σ`, re-orthonormalized.
pub fn pca_subspace(features: &FeatureMatrix, variance_threshold: f64) -> Result<Subspace> {
    if !(variance_threshold > 0.0 && variance_threshold <= 1.0) {
        return Err(Error::InvalidParameter(format!("variance threshold {variance_threshold} not in (0, 1]")));
    }
    let n = features.n();
    let d = features.d();
    if n < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: n });
    }
    let first = features.row(0);
    if features.rows().all(|r| r == first) {
        return Err(Error::DegenerateData);
    }
    let mean = features.mean();
    let mut x = features.to_dmatrix();
    for mut row in x.row_iter_mut() {
        for (v, m) in row.iter_mut().zip(&mean) {
            *v -= m;
        }
    }

    let (sing, directions) = if d <= n {
        let svd = SVD::new(x, false, true);
        let vt = svd.v_t.expect("requested V");
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
        let s: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
        let v = DMatrix::from_fn(d, order.len(), |r, c| vt[(order[c], r)]);
        (s, DirectionSource::Explicit(v))
    } else {
        let gram = &x * x.transpose();
        let eig = SymmetricEigen::new(gram);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let s: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0).sqrt()).collect();
        let u = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
        (s, DirectionSource::FromGram { x, u })
    };

    let total: f64 = sing.iter().map(|s| s * s).sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateData);
    }
    let tol = sing[0] * (n.max(d) as f64) * f64::EPSILON;
    let rank = sing.iter().take_while(|&&s| s > tol).count().max(1);
    let max_k = rank.min(n - 1).min(d).max(1);

    let mut cumulative = 0.0;
    let mut k = max_k;
    for (i, s) in sing.iter().enumerate().take(max_k) {
        cumulative += s * s / total;
        if cumulative >= variance_threshold - 1e-12 {
            k = i + 1;
            break;
        }
    }
    let captured: f64 = sing[..k].iter().map(|s| s * s).sum::<f64>() / total;

    let basis = match directions {
        DirectionSource::Explicit(v) => v.columns(0, k).into_owned(),
        DirectionSource::FromGram { x, u } => {
            let uk = u.columns(0, k);
            let mut v = x.transpose() * uk;
            for (j, mut col) in v.column_iter_mut().enumerate() {
                col /= sing[j];
            }
            orthonormalize_columns(v)
        }
    };
    let denom = (n - 1) as f64;
    Ok(Subspace {
        mean,
        basis,
        explained_variance: sing[..k].iter().map(|s| s * s / denom).collect(),
        variance_captured: captured.min(1.0),
    })
}

enum DirectionSource {
    Explicit(DMatrix<f64>),
    FromGram { x: DMatrix<f64>, u: DMatrix<f64> },
}

fn cross_product(a: &Subspace, b: &Subspace) -> Result<DMatrix<f64>> {
    if a.ambient_dim() != b.ambient_dim() {
        return Err(Error::DimensionMismatch { left: a.ambient_dim(), right: b.ambient_dim() });
    }
    Ok(a.basis.transpose() * &b.basis)
}

/// Principal angles between the spans of `a` and `b`:
/// `θᵢ = arccos(σᵢ)`, σᵢ the singular values of `Aᵀ·B` clamped to [0, 1].
pub fn principal_angles(a: &Subspace, b: &Subspace) -> Result<AngleSpectrum> {
    let m = cross_product(a, b)?;
    let sv = m.singular_values();
    let mut angles: Vec<f64> = sv.iter().map(|s| s.clamp(0.0, 1.0).acos()).collect();
    angles.sort_by(f64::total_cmp);
    Ok(AngleSpectrum(angles))
}

/// Normalized squared chordal distance, `Σ sin²θᵢ / min(N, K)`, in [0, 1].
pub fn nscd(a: &Subspace, b: &Subspace) -> Result<f64> {
    let angles = principal_angles(a, b)?;
    Ok(nscd_from_angles(&angles))
}

pub fn nscd_from_angles(angles: &AngleSpectrum) -> f64 {
    let m = angles.len() as f64;
    let s: f64 = angles.0.iter().map(|t| t.sin().powi(2)).sum();
    (s / m).clamp(0.0, 1.0)
}

#[derive(Debug, Serialize, Deserialize)]
struct SubspaceSidecar {
    schema_version: u32,
    ambient_dim: usize,
    dim: usize,
    variance_captured: f64,
}

fn array_matrix(id: &str, rows: usize, cols: usize, values: impl Iterator<Item = f64>) -> Result<FeatureMatrix> {
    let data: Vec<f32> = values.map(|v| v as f32).collect();
    let ids = (0..rows).map(|i| format!("{id}{i}")).collect();
    FeatureMatrix::new(rows, cols, data, ids)
}

/// Persists as `<stem>.mean.sgfm`, `<stem>.basis.sgfm` (one basis vector
/// per row), `<stem>.variance.sgfm` and a `<stem>.json` sidecar.
pub fn write_subspace(s: &Subspace, stem: impl AsRef<Path>) -> Result<()> {
    let stem = stem.as_ref();
    let d = s.ambient_dim();
    let k = s.dim();
    let with_ext = |ext: &str| {
        let mut p = stem.as_os_str().to_owned();
        p.push(ext);
        std::path::PathBuf::from(p)
    };
    features::write_matrix(&array_matrix("mean", 1, d, s.mean.iter().copied())?, with_ext(".mean.sgfm"))?;
    let basis_rows = (0..k).flat_map(|j| (0..d).map(move |i| (i, j))).map(|(i, j)| s.basis[(i, j)]);
    features::write_matrix(&array_matrix("v", k, d, basis_rows)?, with_ext(".basis.sgfm"))?;
    features::write_matrix(
        &array_matrix("variance", 1, k, s.explained_variance.iter().copied())?,
        with_ext(".variance.sgfm"),
    )?;
    let sidecar = SubspaceSidecar { schema_version: 1, ambient_dim: d, dim: k, variance_captured: s.variance_captured };
    features::io::write_atomic(&with_ext(".json"), serde_json::to_string_pretty(&sidecar)?.as_bytes())
}

/// Inverse of [`write_subspace`]. Arrays are stored in single precision,
/// so the basis is re-orthonormalized on load.
pub fn read_subspace(stem: impl AsRef<Path>) -> Result<Subspace> {
    let stem = stem.as_ref();
    let with_ext = |ext: &str| {
        let mut p = stem.as_os_str().to_owned();
        p.push(ext);
        std::path::PathBuf::from(p)
    };
    let sidecar_path = with_ext(".json");
    let text = std::fs::read_to_string(&sidecar_path).map_err(|e| Error::io(&sidecar_path, e))?;
    let sidecar: SubspaceSidecar = serde_json::from_str(&text)?;
    let mean = features::read_matrix(with_ext(".mean.sgfm"))?;
    let basis = features::read_matrix(with_ext(".basis.sgfm"))?;
    let var = features::read_matrix(with_ext(".variance.sgfm"))?;
    if basis.n() != sidecar.dim || basis.d() != sidecar.ambient_dim || mean.d() != sidecar.ambient_dim {
        return Err(Error::DimensionMismatch { left: basis.n(), right: sidecar.dim });
    }
    let b = DMatrix::from_fn(basis.d(), basis.n(), |i, j| basis.row(j)[i] as f64);
    Ok(Subspace {
        mean: mean.row(0).iter().map(|&v| v as f64).collect(),
        basis: orthonormalize_columns(b),
        explained_variance: var.row(0).iter().map(|&v| v as f64).collect(),
        variance_captured: sidecar.variance_captured,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    fn e(d: usize, i: usize) -> Vec<f64> {
        let mut v = vec![0.0; d];
        v[i] = 1.0;
        v
    }

    #[test]
    fn plus_shape_gives_plane() {
        let f = FeatureMatrix::from_rows(&[
            vec![1.0, 0.0, 0.0],
            vec![-1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, -1.0, 0.0],
        ])
        .unwrap();
        let s = pca_subspace(&f, 0.999).unwrap();
        assert_eq!(s.dim(), 2);
        assert!(s.mean().iter().all(|v| v.abs() < 1e-15));
        // basis spans e1, e2: projection of e3 is zero
        assert!(s.basis().row(2).iter().all(|v| v.abs() < 1e-12));
        assert!(s.orthonormality_residual() < 1e-8);
    }

    #[test]
    fn elongated_cross_needs_two_components() {
        // First component explains 0.5 / 0.505 ≈ 0.990 < 0.999.
        let f = FeatureMatrix::from_rows(&[
            vec![1.0, 0.0, 0.0],
            vec![-1.0, 0.0, 0.0],
            vec![0.0, 0.1, 0.0],
            vec![0.0, -0.1, 0.0],
        ])
        .unwrap();
        let s = pca_subspace(&f, 0.999).unwrap();
        assert_eq!(s.dim(), 2);
        let ratio = s.explained_variance()[0] / s.explained_variance().iter().sum::<f64>();
        // f32 storage of 0.1 perturbs the ratio slightly
        assert!((ratio - 0.5 / 0.505).abs() < 1e-6);
        assert!(pca_subspace(&f, 0.98).unwrap().dim() == 1);
    }

    #[test]
    fn data_on_a_line_gives_one_direction() {
        let dir = [0.6, 0.0, 0.8];
        let rows: Vec<Vec<f64>> =
            [-2.0, -0.5, 0.25, 1.0, 3.0].iter().map(|t| dir.iter().map(|c| 1.0 + c * t).collect()).collect();
        let s = pca_subspace(&FeatureMatrix::from_rows(&rows).unwrap(), 0.999).unwrap();
        assert_eq!(s.dim(), 1);
        let b = s.basis().column(0);
        let dot: f64 = b.iter().zip(dir).map(|(a, c)| a * c).sum();
        assert!((dot.abs() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn wide_data_uses_gram_path_and_agrees_with_svd() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let rows: Vec<Vec<f64>> = (0..12).map(|_| (0..40).map(|_| rng.random::<f64>()).collect()).collect();
        let wide = FeatureMatrix::from_rows(&rows).unwrap();
        let s = pca_subspace(&wide, 0.9).unwrap();
        assert!(s.orthonormality_residual() < 1e-8);
        // Oracle: SVD of the centered matrix directly.
        let mut x = wide.to_dmatrix();
        let mean = wide.mean();
        for mut r in x.row_iter_mut() {
            for (v, m) in r.iter_mut().zip(&mean) {
                *v -= m;
            }
        }
        let svd = SVD::new(x, false, true);
        let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        for (i, ev) in s.explained_variance().iter().enumerate() {
            assert!((ev - sv[i] * sv[i] / 11.0).abs() < 1e-9);
        }
        let vt = svd.v_t.unwrap();
        let oracle_rows: Vec<usize> = {
            let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
            idx.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
            idx.into_iter().take(s.dim()).collect()
        };
        let oracle = DMatrix::from_fn(40, s.dim(), |r, c| vt[(oracle_rows[c], r)]);
        let other = Subspace::from_basis(oracle).unwrap();
        assert!(nscd(&s, &other).unwrap() < 1e-10);
    }

    #[test]
    fn pca_errors() {
        let one = FeatureMatrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        assert!(matches!(pca_subspace(&one, 0.999), Err(Error::InsufficientSamples { .. })));
        let same = FeatureMatrix::from_rows(&[vec![1.0, 2.0], vec![1.0, 2.0], vec![1.0, 2.0]]).unwrap();
        assert!(matches!(pca_subspace(&same, 0.999), Err(Error::DegenerateData)));
    }

    #[test]
    fn angle_examples() {
        let a = Subspace::spanned_by(&[e(3, 0)]).unwrap();
        let b = Subspace::spanned_by(&[e(3, 1)]).unwrap();
        assert_eq!(principal_angles(&a, &a).unwrap().angles(), &[0.0]);
        assert!((principal_angles(&a, &b).unwrap().angles()[0] - FRAC_PI_2).abs() < 1e-12);
        let c = Subspace::spanned_by(&[e(2, 0)]).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let diag = Subspace::spanned_by(&[vec![h, h]]).unwrap();
        assert!((principal_angles(&c, &diag).unwrap().angles()[0] - FRAC_PI_4).abs() < 1e-12);
        let wrong = Subspace::spanned_by(&[e(2, 0)]).unwrap();
        assert!(matches!(principal_angles(&a, &wrong), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn nscd_examples() {
        let a = Subspace::spanned_by(&[e(3, 0)]).unwrap();
        let b = Subspace::spanned_by(&[e(3, 1)]).unwrap();
        assert_eq!(nscd(&a, &a).unwrap(), 0.0);
        assert_eq!(nscd(&a, &b).unwrap(), 1.0);
        let p = Subspace::spanned_by(&[e(3, 0), e(3, 1)]).unwrap();
        let q = Subspace::spanned_by(&[e(3, 0), e(3, 2)]).unwrap();
        assert!((nscd(&p, &q).unwrap() - 0.5).abs() < 1e-10);
        // nested subspaces count as equal
        assert!(nscd(&a, &p).unwrap() < 1e-12);
    }

    #[test]
    fn subspace_persistence() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let rows: Vec<Vec<f64>> = (0..10).map(|_| (0..30).map(|_| rng.random::<f64>()).collect()).collect();
        let s = pca_subspace(&FeatureMatrix::from_rows(&rows).unwrap(), 0.95).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("target");
        write_subspace(&s, &stem).unwrap();
        let back = read_subspace(&stem).unwrap();
        assert_eq!(back.dim(), s.dim());
        assert_eq!(back.variance_captured(), s.variance_captured());
        assert!(back.orthonormality_residual() < 1e-8);
        assert!(nscd(&s, &back).unwrap() < 1e-10);
    }
}
