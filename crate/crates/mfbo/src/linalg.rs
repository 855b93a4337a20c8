//! Thin wrappers around nalgebra factorizations with jitter escalation.

use crate::error::{MfboError, Result};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

/// Relative jitter ladder: start at `1e-10 * scale`, escalate by 10x up to
/// `1e-4 * scale` while the factorization keeps failing.
pub const JITTER_START_REL: f64 = 1e-10;
pub const JITTER_MAX_REL: f64 = 1e-4;

/// A Cholesky factor of `K + jitter * I` together with the jitter that was
/// actually applied.
#[derive(Debug, Clone)]
pub struct CholFactor {
    chol: Cholesky<f64, Dyn>,
    jitter: f64,
}

impl CholFactor {
    /// Factorizes `k + jitter*I`, escalating the jitter relative to `scale`
    /// (typically the signal variance) until the matrix is numerically SPD.
    pub fn with_jitter(k: &DMatrix<f64>, scale: f64) -> Result<CholFactor> {
        let scale = if scale > 0.0 && scale.is_finite() { scale } else { 1.0 };
        let mut jitter = JITTER_START_REL * scale;
        let max_jitter = JITTER_MAX_REL * scale;
        loop {
            let mut kj = k.clone();
            for i in 0..kj.nrows() {
                kj[(i, i)] += jitter;
            }
            if let Some(chol) = Cholesky::new(kj) {
                return Ok(CholFactor { chol, jitter });
            }
            jitter *= 10.0;
            if jitter > max_jitter * (1.0 + 1e-12) {
                return Err(MfboError::NotPositiveDefinite { max_jitter });
            }
        }
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn dim(&self) -> usize {
        self.chol.l_dirty().nrows()
    }

    /// Solves `(K + jitter*I) z = b`.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }

    /// Solves `L v = b` (forward substitution only).
    pub fn solve_lower(&self, b: &DVector<f64>) -> DVector<f64> {
        let l = self.chol.l_dirty();
        let mut v = b.clone();
        l.solve_lower_triangular_mut(&mut v);
        v
    }

    /// `log |K + jitter*I|` from the factor diagonal.
    pub fn log_det(&self) -> f64 {
        let l = self.chol.l_dirty();
        (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>() * 2.0
    }
}

/// Solves the small symmetric system `m b = rhs`, adding an escalating ridge
/// when the matrix is singular (collinear regression bases).
pub(crate) fn solve_sym(m: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    let p = m.nrows();
    let scale = (0..p).map(|i| m[(i, i)].abs()).fold(0.0f64, f64::max).max(1e-300);
    let mut ridge = 0.0;
    for _ in 0..8 {
        let mut mr = m.clone();
        for i in 0..p {
            mr[(i, i)] += ridge;
        }
        if let Some(sol) = mr.lu().solve(rhs) {
            if sol.iter().all(|v| v.is_finite()) {
                return Some(sol);
            }
        }
        ridge = if ridge == 0.0 { 1e-12 * scale } else { ridge * 100.0 };
    }
    None
}

/// Builds the Gram matrix `K[i,j] = cov(rows[i], rows[j])` from a callback.
pub fn gram<F: Fn(usize, usize) -> f64>(n: usize, cov: F) -> DMatrix<f64> {
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = cov(i, j);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factorizes_spd_with_base_jitter() {
        let k = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let f = CholFactor::with_jitter(&k, 1.0).unwrap();
        assert!((f.jitter() - 1e-10).abs() < 1e-24);
        let b = DVector::from_column_slice(&[1.0, 2.0]);
        let z = f.solve(&b);
        let r = &k * &z - &b;
        assert!(r.amax() < 1e-8);
    }

    #[test]
    fn escalates_on_duplicate_rows() {
        // rank-1 matrix: needs jitter beyond the first rung
        let k = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let f = CholFactor::with_jitter(&k, 1.0).unwrap();
        assert!(f.jitter() >= 1e-10);
        assert!(f.jitter() <= 1e-4);
    }

    #[test]
    fn fails_on_negative_definite() {
        let k = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(
            CholFactor::with_jitter(&k, 1.0),
            Err(MfboError::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn log_det_matches_lu() {
        let k = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.2, 1.0, 3.0, 0.5, 0.2, 0.5, 2.0]);
        let f = CholFactor::with_jitter(&k, 1.0).unwrap();
        let det = k.clone().lu().determinant();
        assert!((f.log_det() - det.ln()).abs() < 1e-8);
    }
}
