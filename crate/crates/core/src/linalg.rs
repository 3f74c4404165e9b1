use nalgebra::DMatrix;

/// Orthonormalizes the columns of `v` (d×k, full column rank assumed).
///
/// Two rounds of Cholesky-QR: each round is one k×k Gram product, a
/// Cholesky factorization and a triangular solve. Falls back to Householder
/// QR when the Gram matrix is not numerically positive definite.
pub(crate) fn orthonormalize_columns(mut v: DMatrix<f64>) -> DMatrix<f64> {
    for _ in 0..2 {
        let g = v.transpose() * &v;
        match g.cholesky() {
            Some(ch) => {
                // v ← v · L⁻ᵀ, i.e. solve L · vᵀ_new = vᵀ
                let l = ch.l();
                let vt = v.transpose();
                let solved = l.solve_lower_triangular(&vt).expect("cholesky factor is invertible");
                v = solved.transpose();
            }
            None => {
                let k = v.ncols();
                let q = v.qr().q();
                return q.columns(0, k).into_owned();
            }
        }
    }
    v
}

/// Largest absolute deviation of `bᵀb` from the identity.
pub(crate) fn orthonormality_residual(b: &DMatrix<f64>) -> f64 {
    let g = b.transpose() * b;
    let mut worst = 0.0f64;
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - target).abs());
        }
    }
    worst
}

/// Dot product with eight independent accumulators combined in a fixed order.
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for i in 0..8 {
            acc[i] += x[i] * y[i];
        }
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

/// `y ← y + alpha·x`.
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
