//! Exact Gaussian-process regression with a linear regression basis.
//!
//! `BasisGp` is the workhorse shared by the single-fidelity model and every
//! multi-fidelity surrogate: a GP prior with mean `h(x)' * beta` and an ARD
//! squared-exponential covariance, conditioned on observations through a
//! jittered Cholesky factor. `GpModel` is the public constant-mean special
//! case. Hyperparameters are chosen by multistart maximum likelihood in log
//! space; the regression coefficients are profiled out in closed form
//! (generalized least squares), so estimating them jointly with the kernel
//! never enlarges the search space.

use crate::ascent::{multistart_coordinate_ascent, ParamSpace};
use crate::domain::BoxDomain;
use crate::error::{MfboError, Result};
use crate::kernel::KernelSpec;
use crate::linalg::{gram, CholFactor};
use crate::seed;
use nalgebra::{DMatrix, DVector};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Observation-noise treatment during fitting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseSetting {
    /// Deterministic observations: `sigma_y^2 = 0`, interpolation up to jitter.
    NoiseFree,
    /// `log sigma_y^2` searched in `[-16, 0]` (standardized units).
    Free,
    /// Fixed variance, not searched.
    Fixed(f64),
}

/// Knobs for the maximum-likelihood search.
#[derive(Debug, Clone)]
pub struct FitOptions {
    pub noise: NoiseSetting,
    /// Multistart count (restart 0 is a deterministic heuristic start).
    pub restarts: usize,
    /// Coordinate-ascent sweeps per restart.
    pub sweeps: usize,
    /// Golden-section refinements per line search.
    pub golden_iters: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { noise: NoiseSetting::NoiseFree, restarts: 10, sweeps: 4, golden_iters: 20 }
    }
}

impl FitOptions {
    /// Cheaper settings for per-iteration refits inside optimization loops.
    pub fn fast() -> Self {
        FitOptions { noise: NoiseSetting::NoiseFree, restarts: 4, sweeps: 2, golden_iters: 14 }
    }
}

/// GP with prior mean `h(x)' * beta`; the caller supplies basis rows.
#[derive(Debug, Clone)]
pub(crate) struct BasisGp {
    pub kernel: KernelSpec,
    pub noise_variance: f64,
    pub x: Vec<Vec<f64>>,
    pub h: DMatrix<f64>,
    pub y: DVector<f64>,
    pub beta: DVector<f64>,
    pub factor: CholFactor,
    pub alpha: DVector<f64>,
}

use crate::linalg::solve_sym;

impl BasisGp {
    /// Conditions on `(x, y)` with GLS-profiled coefficients.
    pub fn condition(
        x: Vec<Vec<f64>>,
        y: DVector<f64>,
        h: DMatrix<f64>,
        kernel: KernelSpec,
        noise_variance: f64,
    ) -> Result<BasisGp> {
        let n = x.len();
        if n == 0 || y.len() != n || h.nrows() != n {
            return Err(MfboError::invalid("training data shapes disagree"));
        }
        let k = gram(n, |i, j| kernel.eval(&x[i], &x[j]))
            + DMatrix::from_diagonal_element(n, n, noise_variance);
        let factor = CholFactor::with_jitter(&k, kernel.signal_variance())?;
        let ainv_h = factor.solve_matrix(&h);
        let ainv_y = factor.solve(&y);
        let hth = h.transpose() * &ainv_h;
        let hty = h.transpose() * &ainv_y;
        let beta = solve_sym(&hth, &hty)
            .ok_or_else(|| MfboError::TrainingFailure("degenerate regression basis".into()))?;
        let resid = &y - &h * &beta;
        let alpha = factor.solve(&resid);
        Ok(BasisGp { kernel, noise_variance, x, h, y, beta, factor, alpha })
    }

    /// Conditions with externally fixed coefficients (no GLS step).
    pub fn condition_with_beta(
        x: Vec<Vec<f64>>,
        y: DVector<f64>,
        h: DMatrix<f64>,
        kernel: KernelSpec,
        noise_variance: f64,
        beta: DVector<f64>,
    ) -> Result<BasisGp> {
        let n = x.len();
        if n == 0 || y.len() != n || h.nrows() != n || h.ncols() != beta.len() {
            return Err(MfboError::invalid("training data shapes disagree"));
        }
        let k = gram(n, |i, j| kernel.eval(&x[i], &x[j]))
            + DMatrix::from_diagonal_element(n, n, noise_variance);
        let factor = CholFactor::with_jitter(&k, kernel.signal_variance())?;
        let resid = &y - &h * &beta;
        let alpha = factor.solve(&resid);
        Ok(BasisGp { kernel, noise_variance, x, h, y, beta, factor, alpha })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    fn kvec(&self, xq: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.x.len(), self.x.iter().map(|r| self.kernel.eval(r, xq)))
    }

    /// Posterior mean and variance at `xq` with basis row `hq`.
    pub fn predict(&self, xq: &[f64], hq: &[f64]) -> (f64, f64) {
        let kq = self.kvec(xq);
        let prior_mean: f64 = hq.iter().zip(self.beta.iter()).map(|(a, b)| a * b).sum();
        let mean = prior_mean + kq.dot(&self.alpha);
        let v = self.factor.solve_lower(&kq);
        let var = (self.kernel.eval(xq, xq) - v.norm_squared()).max(0.0);
        (mean, var)
    }

    /// Posterior covariance `cov[f(a), f(b)]`.
    pub fn post_cov(&self, a: &[f64], b: &[f64]) -> f64 {
        let ka = self.kvec(a);
        let kb = self.kvec(b);
        self.kernel.eval(a, b) - ka.dot(&self.factor.solve(&kb))
    }

    /// Log marginal likelihood of the held data under the current prior.
    pub fn log_marginal_likelihood(&self) -> f64 {
        let resid = &self.y - &self.h * &self.beta;
        -0.5 * resid.dot(&self.alpha) - 0.5 * self.factor.log_det()
            - 0.5 * self.len() as f64 * LN_2PI
    }

    /// Re-conditions with one extra observation, keeping the kernel and noise
    /// fixed; `reprofile` re-solves the GLS coefficients, otherwise `beta`
    /// is kept as-is.
    pub fn with_observation(&self, x: &[f64], hq: &[f64], y: f64, reprofile: bool) -> Result<BasisGp> {
        let mut xs = self.x.clone();
        xs.push(x.to_vec());
        let mut ys = self.y.iter().copied().collect::<Vec<_>>();
        ys.push(y);
        let mut h = self.h.clone().insert_row(self.h.nrows(), 0.0);
        for (j, v) in hq.iter().enumerate() {
            h[(self.h.nrows(), j)] = *v;
        }
        let y = DVector::from_vec(ys);
        if reprofile {
            BasisGp::condition(xs, y, h, self.kernel.clone(), self.noise_variance)
        } else {
            BasisGp::condition_with_beta(xs, y, h, self.kernel.clone(), self.noise_variance, self.beta.clone())
        }
    }
}

/// Standardization constants for internal output scaling.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Standardizer {
    pub shift: f64,
    pub scale: f64,
}

impl Standardizer {
    pub fn from_values(values: impl Iterator<Item = f64> + Clone) -> Standardizer {
        let n = values.clone().count().max(1) as f64;
        let mean = values.clone().sum::<f64>() / n;
        let var = values.clone().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let sd = var.sqrt();
        Standardizer { shift: mean, scale: if sd > 1e-12 { sd } else { 1.0 } }
    }

    pub fn fwd(&self, v: f64) -> f64 {
        (v - self.shift) / self.scale
    }

    pub fn back_mean(&self, v: f64) -> f64 {
        self.shift + self.scale * v
    }

    pub fn back_var(&self, v: f64) -> f64 {
        self.scale * self.scale * v
    }
}

/// Hyperparameter layout shared by the fits: `[log l_1..d, log sf2, (log sy2)]`.
pub(crate) fn kernel_param_space(domain: &BoxDomain, noise: NoiseSetting) -> ParamSpace {
    let d = domain.dim();
    let mut lo = Vec::with_capacity(d + 2);
    let mut hi = Vec::with_capacity(d + 2);
    let mut start = Vec::with_capacity(d + 2);
    for j in 0..d {
        let r = domain.range(j);
        lo.push((1e-3 * r).ln());
        hi.push((10.0 * r).ln());
        start.push((0.25 * r).ln());
    }
    lo.push(-10.0);
    hi.push(10.0);
    start.push(0.0);
    if matches!(noise, NoiseSetting::Free) {
        lo.push(-16.0);
        hi.push(0.0);
        start.push(-6.0);
    }
    ParamSpace { lo, hi, default_start: start }
}

pub(crate) fn kernel_from_params(params: &[f64], d: usize) -> (KernelSpec, f64) {
    let ls: Vec<f64> = params[..d].iter().map(|v| v.exp()).collect();
    let sf2 = params[d].exp();
    let kernel = KernelSpec::squared_exponential(ls, sf2).expect("positive by construction");
    let sy2 = if params.len() > d + 1 { params[d + 1].exp() } else { 0.0 };
    (kernel, sy2)
}

fn noise_from(setting: NoiseSetting, searched: f64) -> f64 {
    match setting {
        NoiseSetting::NoiseFree => 0.0,
        NoiseSetting::Free => searched,
        NoiseSetting::Fixed(v) => v,
    }
}

/// Fits a basis GP on pre-scaled outputs by multistart profile likelihood.
pub(crate) fn fit_basis_gp(
    x: Vec<Vec<f64>>,
    y: DVector<f64>,
    h: DMatrix<f64>,
    domain: &BoxDomain,
    seed_value: u64,
    opts: &FitOptions,
) -> Result<BasisGp> {
    let d = domain.dim();
    let space = kernel_param_space(domain, opts.noise);
    let objective = |params: &[f64]| -> f64 {
        let (kernel, searched) = kernel_from_params(params, d);
        let sy2 = noise_from(opts.noise, searched);
        match BasisGp::condition(x.clone(), y.clone(), h.clone(), kernel, sy2) {
            Ok(m) => m.log_marginal_likelihood(),
            Err(_) => f64::NEG_INFINITY,
        }
    };
    let (best, _) = multistart_coordinate_ascent(
        objective,
        &space,
        opts.restarts,
        opts.sweeps,
        opts.golden_iters,
        seed_value,
    )
    .map_err(|e| MfboError::TrainingFailure(format!("likelihood search failed: {e}")))?;
    let (kernel, searched) = kernel_from_params(&best, d);
    BasisGp::condition(x, y, h, kernel, noise_from(opts.noise, searched))
}

fn ones_basis(n: usize) -> DMatrix<f64> {
    DMatrix::from_element(n, 1, 1.0)
}

/// A trained exact GP with constant mean: the single-fidelity surrogate.
#[derive(Debug, Clone)]
pub struct GpModel {
    inner: BasisGp,
}

impl GpModel {
    /// Builds a model from explicit hyperparameters (no fitting, no scaling).
    pub fn with_params(
        x: Vec<Vec<f64>>,
        y: Vec<f64>,
        kernel: KernelSpec,
        noise_variance: f64,
        mean_constant: f64,
    ) -> Result<GpModel> {
        if x.is_empty() || x.len() != y.len() {
            return Err(MfboError::invalid("need matching nonempty inputs and outputs"));
        }
        if x.iter().any(|r| r.len() != kernel.dim()) {
            return Err(MfboError::invalid("input rows must match the kernel dimension"));
        }
        if noise_variance < 0.0 {
            return Err(MfboError::invalid("noise variance must be nonnegative"));
        }
        let n = x.len();
        let inner = BasisGp::condition_with_beta(
            x,
            DVector::from_vec(y),
            ones_basis(n),
            kernel,
            noise_variance,
            DVector::from_element(1, mean_constant),
        )?;
        Ok(GpModel { inner })
    }

    /// Maximum-likelihood fit with default options (noise-free, 10 restarts).
    ///
    /// Outputs are standardized internally; the returned model carries
    /// de-standardized hyperparameters, so predictions are in original units.
    pub fn fit(x: Vec<Vec<f64>>, y: Vec<f64>, domain: &BoxDomain, seed_value: u64) -> Result<GpModel> {
        Self::fit_with(x, y, domain, seed_value, &FitOptions::default())
    }

    pub fn fit_with(
        x: Vec<Vec<f64>>,
        y: Vec<f64>,
        domain: &BoxDomain,
        seed_value: u64,
        opts: &FitOptions,
    ) -> Result<GpModel> {
        if x.is_empty() || x.len() != y.len() {
            return Err(MfboError::invalid("need matching nonempty inputs and outputs"));
        }
        for (i, r) in x.iter().enumerate() {
            if r.len() != domain.dim() {
                return Err(MfboError::invalid(format!("row {i} has dimension {}", r.len())));
            }
            if !domain.contains(r) {
                return Err(MfboError::invalid(format!("row {i} lies outside the domain")));
            }
        }
        // exact duplicates are guaranteed-singular without noise: keep first
        let (x, y) = if matches!(opts.noise, NoiseSetting::NoiseFree) {
            dedup_rows(x, y)
        } else {
            (x, y)
        };
        let std = Standardizer::from_values(y.iter().copied());
        let ys = DVector::from_iterator(y.len(), y.iter().map(|&v| std.fwd(v)));
        let fitted = fit_basis_gp(x.clone(), ys, ones_basis(x.len()), domain, seed_value, opts)?;
        // map hyperparameters back to original units and re-condition there
        let kernel = fitted.kernel.scale_variance(std.scale * std.scale);
        let noise = fitted.noise_variance * std.scale * std.scale;
        let beta = std.back_mean(fitted.beta[0]);
        let inner = BasisGp::condition_with_beta(
            x,
            DVector::from_vec(y),
            ones_basis(fitted.len()),
            kernel,
            noise,
            DVector::from_element(1, beta),
        )?;
        Ok(GpModel { inner })
    }

    /// Posterior predictive mean and variance at `xq` (Gaussian conditioning).
    pub fn predict(&self, xq: &[f64]) -> Result<(f64, f64)> {
        if xq.len() != self.dim() {
            return Err(MfboError::invalid(format!(
                "query dimension {} but model has {}",
                xq.len(),
                self.dim()
            )));
        }
        Ok(self.inner.predict(xq, &[1.0]))
    }

    /// Posterior covariance between two query points.
    pub fn posterior_cov(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        if a.len() != self.dim() || b.len() != self.dim() {
            return Err(MfboError::invalid("query dimension mismatch"));
        }
        Ok(self.inner.post_cov(a, b))
    }

    /// Log marginal likelihood of the stored data under the stored prior.
    pub fn log_marginal_likelihood(&self) -> f64 {
        self.inner.log_marginal_likelihood()
    }

    /// Adds one observation without touching any hyperparameter.
    pub fn with_observation(&self, x: &[f64], y: f64) -> Result<GpModel> {
        Ok(GpModel { inner: self.inner.with_observation(x, &[1.0], y, false)? })
    }

    pub fn dim(&self) -> usize {
        self.inner.kernel.dim()
    }

    pub fn len(&self) -> usize {
        self.inner.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inner.len() == 0
    }

    pub fn mean_constant(&self) -> f64 {
        self.inner.beta[0]
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.inner.kernel
    }

    pub fn noise_variance(&self) -> f64 {
        self.inner.noise_variance
    }

    pub fn jitter(&self) -> f64 {
        self.inner.factor.jitter()
    }

    pub fn x_train(&self) -> &[Vec<f64>] {
        &self.inner.x
    }

    pub fn y_train(&self) -> impl Iterator<Item = f64> + '_ {
        self.inner.y.iter().copied()
    }

    pub(crate) fn inner(&self) -> &BasisGp {
        &self.inner
    }
}

fn dedup_rows(x: Vec<Vec<f64>>, y: Vec<f64>) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut xs: Vec<Vec<f64>> = Vec::with_capacity(x.len());
    let mut ys = Vec::with_capacity(y.len());
    for (r, v) in x.into_iter().zip(y) {
        if !xs.iter().any(|p| p == &r) {
            xs.push(r);
            ys.push(v);
        }
    }
    (xs, ys)
}
