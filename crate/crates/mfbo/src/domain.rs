//! Box-constrained design domains.

use crate::error::{MfboError, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// An axis-aligned box `[lower, upper]^d` of design variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoxDomain {
    /// Requires `lower[j] < upper[j]` for every coordinate and `d >= 1`.
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(MfboError::invalid(format!(
                "domain needs matching nonempty bounds, got {} lower / {} upper",
                lower.len(),
                upper.len()
            )));
        }
        for j in 0..lower.len() {
            if !(lower[j] < upper[j]) || !lower[j].is_finite() || !upper[j].is_finite() {
                return Err(MfboError::invalid(format!(
                    "domain bound {j}: lower ({}) must be < upper ({})",
                    lower[j], upper[j]
                )));
            }
        }
        Ok(BoxDomain { lower, upper })
    }

    /// `[lo, hi]^d` with the same scalar bounds in every coordinate.
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// Width of coordinate `j`.
    pub fn range(&self, j: usize) -> f64 {
        self.upper[j] - self.lower[j]
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(&v, (&lo, &hi))| v >= lo && v <= hi)
    }

    /// Projects `x` onto the box in place.
    pub fn clamp(&self, x: &mut [f64]) {
        for j in 0..x.len() {
            x[j] = x[j].clamp(self.lower[j], self.upper[j]);
        }
    }

    /// One uniform draw from the box.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.dim())
            .map(|j| rng.gen_range(self.lower[j]..self.upper[j]))
            .collect()
    }

    /// `n` independent uniform draws.
    pub fn sample_n<R: Rng>(&self, n: usize, rng: &mut R) -> Vec<Vec<f64>> {
        (0..n).map(|_| self.sample(rng)).collect()
    }

    /// `n` Latin-hypercube draws: one point per stratum along every axis,
    /// strata paired by independent seeded shuffles.
    pub fn sample_lhs<R: Rng>(&self, n: usize, rng: &mut R) -> Vec<Vec<f64>> {
        let d = self.dim();
        let mut columns: Vec<Vec<usize>> = Vec::with_capacity(d);
        for _ in 0..d {
            let mut perm: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                let j = rng.gen_range(0..=i);
                perm.swap(i, j);
            }
            columns.push(perm);
        }
        (0..n)
            .map(|i| {
                (0..d)
                    .map(|j| {
                        let cell = columns[j][i] as f64;
                        let u: f64 = rng.gen();
                        self.lower[j] + (cell + u) / n as f64 * self.range(j)
                    })
                    .collect()
            })
            .collect()
    }
}

/// Lexicographic comparison used by every deterministic tie-break rule.
pub fn lex_less(a: &[f64], b: &[f64]) -> bool {
    for (x, y) in a.iter().zip(b) {
        if x < y {
            return true;
        }
        if x > y {
            return false;
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rejects_inverted_bounds() {
        assert!(BoxDomain::new(vec![0.0, 1.0], vec![1.0, 1.0]).is_err());
        assert!(BoxDomain::new(vec![], vec![]).is_err());
    }

    #[test]
    fn samples_stay_inside() {
        let d = BoxDomain::new(vec![-2.0, 0.0], vec![1.0, 0.5]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for x in d.sample_n(200, &mut rng) {
            assert!(d.contains(&x));
        }
    }

    #[test]
    fn lhs_stratifies_each_axis() {
        let d = BoxDomain::cube(2, 0.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 10;
        let pts = d.sample_lhs(n, &mut rng);
        for j in 0..2 {
            let mut cells: Vec<usize> = pts.iter().map(|p| (p[j] * n as f64) as usize).collect();
            cells.sort_unstable();
            assert_eq!(cells, (0..n).collect::<Vec<_>>());
        }
    }

    #[test]
    fn lex_order() {
        assert!(lex_less(&[0.0, 2.0], &[1.0, 0.0]));
        assert!(lex_less(&[1.0, 0.0], &[1.0, 2.0]));
        assert!(!lex_less(&[1.0, 2.0], &[1.0, 2.0]));
    }
}
