//! Squared-exponential covariance with per-axis lengthscales (ARD).

use crate::error::{MfboError, Result};
use serde::{Deserialize, Serialize};

/// Anisotropic squared-exponential kernel
/// `k(x, x') = sigma_f2 * exp(-1/2 sum_j ((x_j - x'_j) / l_j)^2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    lengthscales: Vec<f64>,
    signal_variance: f64,
}

impl KernelSpec {
    /// All lengthscales and the signal variance must be strictly positive.
    pub fn squared_exponential(lengthscales: Vec<f64>, signal_variance: f64) -> Result<Self> {
        if lengthscales.is_empty() {
            return Err(MfboError::invalid("kernel needs at least one lengthscale"));
        }
        for (j, &l) in lengthscales.iter().enumerate() {
            if !(l > 0.0) || !l.is_finite() {
                return Err(MfboError::invalid(format!("lengthscale[{j}] = {l} must be > 0")));
            }
        }
        if !(signal_variance > 0.0) || !signal_variance.is_finite() {
            return Err(MfboError::invalid(format!(
                "signal_variance = {signal_variance} must be > 0"
            )));
        }
        Ok(KernelSpec { lengthscales, signal_variance })
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    pub fn lengthscales(&self) -> &[f64] {
        &self.lengthscales
    }

    pub fn signal_variance(&self) -> f64 {
        self.signal_variance
    }

    /// Returns a copy with the signal variance multiplied by `s`.
    pub(crate) fn scale_variance(&self, s: f64) -> KernelSpec {
        KernelSpec {
            lengthscales: self.lengthscales.clone(),
            signal_variance: self.signal_variance * s,
        }
    }

    /// Evaluates `k(x, y)`; the inputs must match the kernel dimension.
    pub fn eval_checked(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        if x.len() != self.dim() || y.len() != self.dim() {
            return Err(MfboError::invalid(format!(
                "kernel dimension {} but inputs have {} and {}",
                self.dim(),
                x.len(),
                y.len()
            )));
        }
        Ok(self.eval(x, y))
    }

    /// Evaluates `k(x, y)` without dimension checks (hot path).
    #[inline]
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut q = 0.0;
        for j in 0..self.lengthscales.len() {
            let z = (x[j] - y[j]) / self.lengthscales[j];
            q += z * z;
        }
        self.signal_variance * (-0.5 * q).exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn value_at_identical_inputs_is_signal_variance() {
        let k = KernelSpec::squared_exponential(vec![1.0], 1.0).unwrap();
        assert_eq!(k.eval(&[0.0], &[0.0]), 1.0);
        let k = KernelSpec::squared_exponential(vec![0.3, 2.0], 4.5).unwrap();
        assert_eq!(k.eval(&[1.0, -2.0], &[1.0, -2.0]), 4.5);
    }

    #[test]
    fn unit_distance_value() {
        let k = KernelSpec::squared_exponential(vec![1.0], 1.0).unwrap();
        let v = k.eval(&[0.0], &[1.0]);
        assert!((v - (-0.5f64).exp()).abs() < 1e-15);
        assert!((v - 0.60653).abs() < 1e-5);
    }

    #[test]
    fn anisotropic_hand_value() {
        // l = [2, 1], sigma_f2 = 4, x = (0,0), x' = (2,1): 4 * exp(-1) = 1.47152
        let k = KernelSpec::squared_exponential(vec![2.0, 1.0], 4.0).unwrap();
        let v = k.eval(&[0.0, 0.0], &[2.0, 1.0]);
        assert!((v - 4.0 * (-1.0f64).exp()).abs() < 1e-14);
        assert!((v - 1.47152).abs() < 1e-5);
    }

    #[test]
    fn symmetry_over_random_pairs() {
        let k = KernelSpec::squared_exponential(vec![0.7, 1.3, 0.2], 2.2).unwrap();
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let y: Vec<f64> = (0..3).map(|_| rng.gen_range(-5.0..5.0)).collect();
            assert_eq!(k.eval(&x, &y), k.eval(&y, &x));
        }
    }

    #[test]
    fn rejects_bad_parameters_and_dims() {
        assert!(KernelSpec::squared_exponential(vec![0.0], 1.0).is_err());
        assert!(KernelSpec::squared_exponential(vec![1.0], -1.0).is_err());
        let k = KernelSpec::squared_exponential(vec![1.0, 1.0], 1.0).unwrap();
        assert!(k.eval_checked(&[0.0], &[0.0, 0.0]).is_err());
    }
}
