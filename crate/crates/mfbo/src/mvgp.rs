//! Multivariate (multi-output) Gaussian processes over stacked observations.
//!
//! The covariance between outputs is a coregionalization rule
//! `S(x, x') = sum_t r_t r_t' kappa_t(x, x')` with `r_t` the columns of a
//! coefficient matrix `R`. Observations are heterotopic: each training row is
//! an `(x, output)` pair, so different outputs may be sampled at different
//! sites. With isotopic data this reduces to the classic block form.

use crate::error::{MfboError, Result};
use crate::kernel::KernelSpec;
use crate::linalg::{gram, CholFactor};
use nalgebra::{DMatrix, DVector};

/// One training observation: a site, the index of the observed output
/// (0-based), and the value.
#[derive(Debug, Clone)]
pub struct TaggedObservation {
    pub x: Vec<f64>,
    pub output: usize,
    pub y: f64,
}

/// Multi-output GP with linear-model-of-coregionalization structure.
#[derive(Debug, Clone)]
pub struct MvGpModel {
    num_outputs: usize,
    mean_constants: Vec<f64>,
    /// Combination coefficients; column `t` scales the latent GP with kernel `t`.
    r: DMatrix<f64>,
    kernels: Vec<KernelSpec>,
    noise_diag: Vec<f64>,
    obs: Vec<(Vec<f64>, usize)>,
    y: DVector<f64>,
    factor: CholFactor,
    alpha: DVector<f64>,
}

impl MvGpModel {
    /// Conditions the prior on tagged observations with fixed parameters.
    pub fn with_params(
        observations: Vec<TaggedObservation>,
        r: DMatrix<f64>,
        kernels: Vec<KernelSpec>,
        noise_diag: Vec<f64>,
        mean_constants: Vec<f64>,
    ) -> Result<MvGpModel> {
        let t = kernels.len();
        if t == 0 || r.nrows() != t || r.ncols() != t || noise_diag.len() != t || mean_constants.len() != t {
            return Err(MfboError::invalid("coregionalization shapes disagree"));
        }
        if observations.is_empty() {
            return Err(MfboError::invalid("need at least one observation"));
        }
        let d = kernels[0].dim();
        for o in &observations {
            if o.x.len() != d {
                return Err(MfboError::invalid("observation dimension mismatch"));
            }
            if o.output >= t {
                return Err(MfboError::invalid(format!("output index {} out of range", o.output)));
            }
        }
        let n = observations.len();
        let y = DVector::from_iterator(n, observations.iter().map(|o| o.y));
        let obs: Vec<(Vec<f64>, usize)> = observations.into_iter().map(|o| (o.x, o.output)).collect();

        let model = MvGpModel {
            num_outputs: t,
            mean_constants,
            r,
            kernels,
            noise_diag,
            obs,
            y,
            // placeholder, replaced below
            factor: CholFactor::with_jitter(&DMatrix::identity(1, 1), 1.0)?,
            alpha: DVector::zeros(1),
        };
        model.refactor()
    }

    fn refactor(mut self) -> Result<MvGpModel> {
        let n = self.obs.len();
        let k = {
            let mut k = gram(n, |i, j| {
                self.cross_entry(&self.obs[i].0, self.obs[i].1, &self.obs[j].0, self.obs[j].1)
            });
            for i in 0..n {
                k[(i, i)] += self.noise_diag[self.obs[i].1];
            }
            k
        };
        let scale = self
            .kernels
            .iter()
            .map(|kk| kk.signal_variance())
            .fold(0.0f64, f64::max);
        self.factor = CholFactor::with_jitter(&k, scale)?;
        let resid = DVector::from_iterator(
            n,
            self.obs.iter().zip(self.y.iter()).map(|((_, t), &v)| v - self.mean_constants[*t]),
        );
        self.alpha = self.factor.solve(&resid);
        Ok(self)
    }

    /// `S(xa, xb)[ta, tb]` of the coregionalization rule.
    pub fn cross_entry(&self, xa: &[f64], ta: usize, xb: &[f64], tb: usize) -> f64 {
        (0..self.num_outputs)
            .map(|t| self.r[(ta, t)] * self.r[(tb, t)] * self.kernels[t].eval(xa, xb))
            .sum()
    }

    /// The full inter-group matrix `S(xa, xb)`.
    pub fn intergroup(&self, xa: &[f64], xb: &[f64]) -> DMatrix<f64> {
        let t = self.num_outputs;
        DMatrix::from_fn(t, t, |i, j| self.cross_entry(xa, i, xb, j))
    }

    /// The training covariance actually factorized (noise and jitter included).
    pub fn stacked_covariance(&self) -> DMatrix<f64> {
        let n = self.obs.len();
        let mut k = gram(n, |i, j| {
            self.cross_entry(&self.obs[i].0, self.obs[i].1, &self.obs[j].0, self.obs[j].1)
        });
        for i in 0..n {
            k[(i, i)] += self.noise_diag[self.obs[i].1] + self.factor.jitter();
        }
        k
    }

    /// Posterior mean vector and covariance matrix over all outputs at `xq`.
    pub fn predict(&self, xq: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>)> {
        if xq.len() != self.kernels[0].dim() {
            return Err(MfboError::invalid("query dimension mismatch"));
        }
        let n = self.obs.len();
        let t = self.num_outputs;
        let mut kq = DMatrix::zeros(n, t);
        for (i, (x, ti)) in self.obs.iter().enumerate() {
            for s in 0..t {
                kq[(i, s)] = self.cross_entry(xq, s, x, *ti);
            }
        }
        let mean = DVector::from_fn(t, |s, _| {
            self.mean_constants[s] + kq.column(s).dot(&self.alpha)
        });
        let solved = self.factor.solve_matrix(&kq);
        let cov = self.intergroup(xq, xq) - kq.transpose() * solved;
        Ok((mean, cov))
    }

    /// Mean and variance of a single output.
    pub fn predict_output(&self, xq: &[f64], output: usize) -> Result<(f64, f64)> {
        if output >= self.num_outputs {
            return Err(MfboError::invalid(format!("output index {output} out of range")));
        }
        let (mean, cov) = self.predict(xq)?;
        Ok((mean[output], cov[(output, output)].max(0.0)))
    }

    /// Posterior covariance between `(xa, ta)` and `(xb, tb)`.
    pub fn posterior_cov(&self, xa: &[f64], ta: usize, xb: &[f64], tb: usize) -> Result<f64> {
        if ta >= self.num_outputs || tb >= self.num_outputs {
            return Err(MfboError::invalid("output index out of range"));
        }
        let n = self.obs.len();
        let ka = DVector::from_iterator(
            n,
            self.obs.iter().map(|(x, ti)| self.cross_entry(xa, ta, x, *ti)),
        );
        let kb = DVector::from_iterator(
            n,
            self.obs.iter().map(|(x, ti)| self.cross_entry(xb, tb, x, *ti)),
        );
        Ok(self.cross_entry(xa, ta, xb, tb) - ka.dot(&self.factor.solve(&kb)))
    }

    /// Re-conditions with one extra observation, all parameters fixed.
    pub fn with_observation(&self, x: &[f64], output: usize, y: f64) -> Result<MvGpModel> {
        if output >= self.num_outputs {
            return Err(MfboError::invalid(format!("output index {output} out of range")));
        }
        let mut m = self.clone();
        m.obs.push((x.to_vec(), output));
        m.y = m.y.push(y);
        m.refactor()
    }

    pub fn num_outputs(&self) -> usize {
        self.num_outputs
    }

    pub fn jitter(&self) -> f64 {
        self.factor.jitter()
    }

    pub fn mean_constants(&self) -> &[f64] {
        &self.mean_constants
    }

    pub fn coefficients(&self) -> &DMatrix<f64> {
        &self.r
    }

    pub fn kernels(&self) -> &[KernelSpec] {
        &self.kernels
    }

    pub fn observations(&self) -> &[(Vec<f64>, usize)] {
        &self.obs
    }

    pub(crate) fn set_mean_constants(mut self, means: Vec<f64>) -> Result<MvGpModel> {
        if means.len() != self.num_outputs {
            return Err(MfboError::invalid("mean vector length mismatch"));
        }
        self.mean_constants = means;
        self.refactor()
    }

    pub(crate) fn observed_values(&self) -> &DVector<f64> {
        &self.y
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::GpModel;
    use crate::seed;
    use rand::Rng;

    fn se(ls: f64, sf2: f64, d: usize) -> KernelSpec {
        KernelSpec::squared_exponential(vec![ls; d], sf2).unwrap()
    }

    #[test]
    fn single_output_reduces_to_univariate_gp() {
        let mut rng = seed::rng(4);
        let obs: Vec<TaggedObservation> = (0..7)
            .map(|_| {
                let x = vec![rng.gen::<f64>()];
                TaggedObservation { y: (3.0 * x[0]).sin(), x, output: 0 }
            })
            .collect();
        let xs: Vec<Vec<f64>> = obs.iter().map(|o| o.x.clone()).collect();
        let ys: Vec<f64> = obs.iter().map(|o| o.y).collect();
        let k = se(0.4, 1.2, 1);
        let mv = MvGpModel::with_params(
            obs,
            DMatrix::identity(1, 1),
            vec![k.clone()],
            vec![0.0],
            vec![0.1],
        )
        .unwrap();
        let gp = GpModel::with_params(xs, ys, k, 0.0, 0.1).unwrap();
        for &q in &[0.1, 0.5, 0.77] {
            let (mv_mean, mv_cov) = mv.predict(&[q]).unwrap();
            let (m, v) = gp.predict(&[q]).unwrap();
            assert!((mv_mean[0] - m).abs() < 1e-12);
            assert!((mv_cov[(0, 0)].max(0.0) - v).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_r_with_disjoint_data_decouples() {
        let mut rng = seed::rng(5);
        let mut obs = Vec::new();
        let mut per_output: Vec<(Vec<Vec<f64>>, Vec<f64>)> = vec![(vec![], vec![]); 2];
        for t in 0..2usize {
            for _ in 0..6 {
                let x = vec![rng.gen::<f64>()];
                let y = if t == 0 { x[0] * x[0] } else { (4.0 * x[0]).cos() };
                per_output[t].0.push(x.clone());
                per_output[t].1.push(y);
                obs.push(TaggedObservation { x, output: t, y });
            }
        }
        // equal signal variances keep the jitter ladder identical on both sides
        let kernels = vec![se(0.3, 2.0, 1), se(0.5, 2.0, 1)];
        let mv = MvGpModel::with_params(
            obs,
            DMatrix::identity(2, 2),
            kernels.clone(),
            vec![0.0, 0.0],
            vec![0.2, -0.3],
        )
        .unwrap();
        for t in 0..2usize {
            let gp = GpModel::with_params(
                per_output[t].0.clone(),
                per_output[t].1.clone(),
                kernels[t].clone(),
                0.0,
                if t == 0 { 0.2 } else { -0.3 },
            )
            .unwrap();
            for &q in &[0.15, 0.6, 0.9] {
                let (mv_mean, mv_cov) = mv.predict(&[q]).unwrap();
                let (m, v) = gp.predict(&[q]).unwrap();
                assert!((mv_mean[t] - m).abs() < 1e-8);
                assert!((mv_cov[(t, t)].max(0.0) - v).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn coupled_two_output_matches_dense_conditioning() {
        let mut rng = seed::rng(6);
        let mut obs = Vec::new();
        for i in 0..10 {
            let x = vec![rng.gen::<f64>()];
            let t = i % 2;
            let y = (2.5 * x[0]).sin() + 0.3 * t as f64;
            obs.push(TaggedObservation { x, output: t, y });
        }
        let r = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.7, 1.0]);
        let kernels = vec![se(0.35, 1.4, 1), se(0.6, 0.5, 1)];
        let means = vec![0.1, 0.4];
        let mv = MvGpModel::with_params(obs.clone(), r.clone(), kernels.clone(), vec![0.0, 0.0], means.clone())
            .unwrap();

        // dense stacked-conditioning oracle
        let n = obs.len();
        let entry = |xa: &[f64], ta: usize, xb: &[f64], tb: usize| -> f64 {
            (0..2).map(|t| r[(ta, t)] * r[(tb, t)] * kernels[t].eval(xa, xb)).sum()
        };
        let mut k = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                k[(i, j)] = entry(&obs[i].x, obs[i].output, &obs[j].x, obs[j].output);
            }
            k[(i, i)] += mv.jitter();
        }
        let kinv = k.try_inverse().unwrap();
        let resid = DVector::from_iterator(n, obs.iter().map(|o| o.y - means[o.output]));
        for &q in &[0.2, 0.45, 0.81] {
            let (mean, cov) = mv.predict(&[q]).unwrap();
            for s in 0..2usize {
                let kq = DVector::from_iterator(n, obs.iter().map(|o| entry(&[q], s, &o.x, o.output)));
                let want_mean = means[s] + kq.dot(&(&kinv * &resid));
                let want_var = entry(&[q], s, &[q], s) - kq.dot(&(&kinv * &kq));
                assert!((mean[s] - want_mean).abs() < 1e-8);
                assert!((cov[(s, s)] - want_var).abs() < 1e-8);
            }
            assert!((cov[(0, 1)] - cov[(1, 0)]).abs() < 1e-12, "covariance not symmetric");
        }
    }
}
