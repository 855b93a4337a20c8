//! Recursive multi-fidelity model: each level regresses on the frozen
//! posterior mean of the level below it.
//!
//! Level 1 is a plain constant-mean GP on its own data. Level `t` models
//! `f_t(x) = rho_{t-1}(x) * mhat_{t-1}(x) + delta_t(x)`, where `mhat_{t-1}`
//! is the already-fitted posterior mean of level `t-1` and `rho` is a linear
//! combination of basis functions (constant by default, optionally
//! `[1, x_1, ..., x_d]`). The scaling coefficients and the discrepancy mean
//! are profiled by generalized least squares inside each per-level
//! likelihood fit, so training costs `T` separate cubic solves instead of
//! one joint solve over all levels.
//!
//! Predictive variance propagates the lower level:
//! `v_t(x) = rho_{t-1}(x)^2 v_{t-1}(x) + v_delta_t(x)`.

use crate::error::{MfboError, Result};
use crate::gp::{fit_basis_gp, BasisGp, FitOptions, Standardizer};
use crate::kernel::KernelSpec;
use crate::seed;
use crate::surrogates::FidelityDataset;
use nalgebra::{DMatrix, DVector};

/// Basis for the scaling function `rho_{t-1}(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RhoBasis {
    /// `rho(x) = b` (matches the auto-regressive constant coefficient).
    Constant,
    /// `rho(x) = b_0 + b_1 x_1 + ... + b_d x_d`.
    Linear,
}

impl RhoBasis {
    /// Number of rho coefficients for input dimension `d`.
    fn width(&self, d: usize) -> usize {
        match self {
            RhoBasis::Constant => 1,
            RhoBasis::Linear => 1 + d,
        }
    }

    /// Regression row for a non-source level: rho terms scaled by the lower
    /// posterior mean, then the discrepancy-mean constant.
    fn h_row(&self, x: &[f64], mean_prev: f64) -> Vec<f64> {
        match self {
            RhoBasis::Constant => vec![mean_prev, 1.0],
            RhoBasis::Linear => {
                let mut row = Vec::with_capacity(x.len() + 2);
                row.push(mean_prev);
                for &v in x {
                    row.push(v * mean_prev);
                }
                row.push(1.0);
                row
            }
        }
    }

    fn rho_value(&self, x: &[f64], beta: &DVector<f64>) -> f64 {
        match self {
            RhoBasis::Constant => beta[0],
            RhoBasis::Linear => beta[0] + x.iter().enumerate().map(|(j, v)| beta[1 + j] * v).sum::<f64>(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RecursiveMf {
    levels: Vec<BasisGp>,
    basis: RhoBasis,
    std: Standardizer,
    dim: usize,
}

impl RecursiveMf {
    /// Sequential per-level maximum-likelihood fit.
    pub fn fit(data: &FidelityDataset, basis: RhoBasis, seed_value: u64, opts: &FitOptions) -> Result<RecursiveMf> {
        let t_count = data.num_fidelities();
        for t in 1..=t_count {
            if data.level(t)?.len() < 2 {
                return Err(MfboError::TrainingFailure(format!(
                    "level {t}: need at least two points per fidelity"
                )));
            }
        }
        let std = Standardizer::from_values(data.all_values());
        let dim = data.domain().dim();
        let mut levels: Vec<BasisGp> = Vec::with_capacity(t_count);
        for t in 1..=t_count {
            let level = data.level(t)?;
            let ys = DVector::from_iterator(level.len(), level.f.iter().map(|&v| std.fwd(v)));
            let h = build_h(&levels, basis, &level.x, dim);
            let level_seed = if t == 1 { seed_value } else { seed::derive(seed_value, &[t as u64]) };
            let gp = fit_basis_gp(level.x.clone(), ys, h, data.domain(), level_seed, opts)
                .map_err(|e| MfboError::TrainingFailure(format!("level {t}: {e}")))?;
            levels.push(gp);
        }
        Ok(RecursiveMf { levels, basis, std, dim })
    }

    /// Builds the chain from explicit constant-rho parameters (no fitting,
    /// no output scaling).
    pub fn with_params(
        data: &FidelityDataset,
        kernels: Vec<KernelSpec>,
        rho_constants: Vec<f64>,
        delta_means: Vec<f64>,
        noise_variances: Vec<f64>,
    ) -> Result<RecursiveMf> {
        let t_count = data.num_fidelities();
        if kernels.len() != t_count
            || rho_constants.len() + 1 != t_count
            || delta_means.len() != t_count
            || noise_variances.len() != t_count
        {
            return Err(MfboError::invalid("parameter vectors must match the level count"));
        }
        let dim = data.domain().dim();
        let basis = RhoBasis::Constant;
        let mut levels: Vec<BasisGp> = Vec::with_capacity(t_count);
        for t in 1..=t_count {
            let level = data.level(t)?;
            let ys = DVector::from_vec(level.f.clone());
            let h = build_h(&levels, basis, &level.x, dim);
            let beta = if t == 1 {
                DVector::from_vec(vec![delta_means[0]])
            } else {
                DVector::from_vec(vec![rho_constants[t - 2], delta_means[t - 1]])
            };
            let gp = BasisGp::condition_with_beta(
                level.x.clone(),
                ys,
                h,
                kernels[t - 1].clone(),
                noise_variances[t - 1],
                beta,
            )?;
            levels.push(gp);
        }
        Ok(RecursiveMf {
            levels,
            basis,
            std: Standardizer { shift: 0.0, scale: 1.0 },
            dim,
        })
    }

    pub fn num_fidelities(&self) -> usize {
        self.levels.len()
    }

    /// Standardized chain evaluation up to level `t` (1-based).
    fn chain(&self, x: &[f64], t: usize) -> Vec<(f64, f64)> {
        let mut out: Vec<(f64, f64)> = Vec::with_capacity(t);
        for (i, gp) in self.levels.iter().take(t).enumerate() {
            if i == 0 {
                out.push(gp.predict(x, &[1.0]));
            } else {
                let (m_prev, v_prev) = out[i - 1];
                let h = self.basis.h_row(x, m_prev);
                let (m, v_delta) = gp.predict(x, &h);
                let rho = self.basis.rho_value(x, &gp.beta);
                out.push((m, rho * rho * v_prev + v_delta));
            }
        }
        out
    }

    /// Posterior mean and variance at fidelity `t` (original units).
    pub fn predict(&self, x: &[f64], t: usize) -> Result<(f64, f64)> {
        self.check(x, t)?;
        let (m, v) = self.chain(x, t)[t - 1];
        Ok((self.std.back_mean(m), self.std.back_var(v)))
    }

    /// The fitted scaling `rho_{t-1}(x)` feeding level `t` (`t >= 2`).
    pub fn rho(&self, x: &[f64], t: usize) -> Result<f64> {
        self.check(x, t)?;
        if t < 2 {
            return Err(MfboError::invalid("rho is defined for levels 2 and above"));
        }
        Ok(self.basis.rho_value(x, &self.levels[t - 1].beta))
    }

    /// Posterior covariance between two points at the top fidelity.
    pub fn posterior_cov_top(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        self.check(a, self.num_fidelities())?;
        self.check(b, self.num_fidelities())?;
        let mut cov = self.levels[0].post_cov(a, b);
        for gp in self.levels.iter().skip(1) {
            let rho_a = self.basis.rho_value(a, &gp.beta);
            let rho_b = self.basis.rho_value(b, &gp.beta);
            cov = rho_a * rho_b * cov + gp.post_cov(a, b);
        }
        Ok(self.std.back_var(cov))
    }

    /// Correlation between the fidelity-`t` and top-fidelity posteriors at
    /// `x`: the rho product from `t` to the top scaled by the standard
    /// deviations. Zero variance below the top resolves to 0.
    pub fn cross_correlation(&self, x: &[f64], t: usize) -> Result<f64> {
        self.check(x, t)?;
        let top = self.num_fidelities();
        if t == top {
            return Ok(1.0);
        }
        let chain = self.chain(x, top);
        let (_, v_t) = chain[t - 1];
        let (_, v_top) = chain[top - 1];
        let mut rho_prod = 1.0;
        for level in (t + 1)..=top {
            rho_prod *= self.basis.rho_value(x, &self.levels[level - 1].beta);
        }
        let denom = (v_t * v_top).sqrt();
        if denom < 1e-300 {
            return Ok(0.0);
        }
        Ok((rho_prod * v_t / denom).clamp(-1.0, 1.0))
    }

    /// Re-conditions levels `t..=T` after adding one observation (original
    /// units) at fidelity `t`. Kernel hyperparameters stay fixed; the scaling
    /// and mean coefficients are re-profiled because the regressor changes.
    pub fn with_observation(&self, x: &[f64], y: f64, t: usize) -> Result<RecursiveMf> {
        self.check(x, t)?;
        let ys = self.std.fwd(y);
        let mut levels: Vec<BasisGp> = self.levels.iter().take(t - 1).cloned().collect();
        for (i, gp) in self.levels.iter().enumerate().skip(t - 1) {
            let (mut xs, mut yv) = (gp.x.clone(), gp.y.iter().copied().collect::<Vec<_>>());
            if i == t - 1 {
                xs.push(x.to_vec());
                yv.push(ys);
            }
            let h = build_h(&levels, self.basis, &xs, self.dim);
            let gp_new = BasisGp::condition(
                xs,
                DVector::from_vec(yv),
                h,
                gp.kernel.clone(),
                gp.noise_variance,
            )?;
            levels.push(gp_new);
        }
        Ok(RecursiveMf { levels, basis: self.basis, std: self.std, dim: self.dim })
    }

    fn check(&self, x: &[f64], t: usize) -> Result<()> {
        if x.len() != self.dim {
            return Err(MfboError::invalid("query dimension mismatch"));
        }
        if t == 0 || t > self.levels.len() {
            return Err(MfboError::invalid(format!(
                "fidelity {t} out of range 1..={}",
                self.levels.len()
            )));
        }
        Ok(())
    }

    pub(crate) fn level_gp(&self, t: usize) -> &BasisGp {
        &self.levels[t - 1]
    }
}

/// Regression rows for a new level given the frozen chain below it.
fn build_h(chain: &[BasisGp], basis: RhoBasis, x_rows: &[Vec<f64>], dim: usize) -> DMatrix<f64> {
    if chain.is_empty() {
        return DMatrix::from_element(x_rows.len(), 1, 1.0);
    }
    let width = basis.width(dim) + 1;
    let mut h = DMatrix::zeros(x_rows.len(), width);
    for (r, x) in x_rows.iter().enumerate() {
        // evaluate the chain posterior mean at x
        let mut mean = 0.0;
        for (i, gp) in chain.iter().enumerate() {
            if i == 0 {
                mean = gp.predict(x, &[1.0]).0;
            } else {
                let hrow = basis.h_row(x, mean);
                mean = gp.predict(x, &hrow).0;
            }
        }
        for (c, v) in basis.h_row(x, mean).into_iter().enumerate() {
            h[(r, c)] = v;
        }
    }
    h
}
