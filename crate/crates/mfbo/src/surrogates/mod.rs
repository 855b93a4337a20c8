//! Multi-fidelity surrogate models.
//!
//! All models train on a [`FidelityDataset`] (per-fidelity design/observation
//! tables plus an evaluation cost per fidelity) and expose posterior mean and
//! variance at any fidelity `t in 1..=T`, with `T` the highest fidelity.
//! Outputs are standardized internally with pooled statistics across all
//! fidelities; predictions are returned in original units.

mod augmented;
mod cokriging;
mod gmgp;
mod hierarchical;
mod lmc;
mod recursive;

pub use augmented::{AugmentedInputGp, FidelityKernel};
pub use cokriging::CoKrigingTwoLevel;
pub use gmgp::{FidelityDag, GmgpRecursive};
pub use hierarchical::HierarchicalKriging;
pub use lmc::fit_lmc;
pub use recursive::{RecursiveMf, RhoBasis};

use crate::domain::{lex_less, BoxDomain};
use crate::error::{MfboError, Result};
use crate::gp::{FitOptions, GpModel};
use crate::mvgp::MvGpModel;
use serde::{Deserialize, Serialize};

/// Design/observation table of one fidelity level.
#[derive(Debug, Clone, Default)]
pub struct LevelData {
    pub x: Vec<Vec<f64>>,
    pub f: Vec<f64>,
}

impl LevelData {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

/// Per-fidelity training data `D_t` plus the cost model `c(t)`.
///
/// Fidelity indices are 1-based; fidelity `T` is the highest.
#[derive(Debug, Clone)]
pub struct FidelityDataset {
    domain: BoxDomain,
    levels: Vec<LevelData>,
    costs: Vec<f64>,
}

impl FidelityDataset {
    pub fn new(domain: BoxDomain, levels: Vec<LevelData>, costs: Vec<f64>) -> Result<Self> {
        if levels.is_empty() {
            return Err(MfboError::invalid("need at least one fidelity level"));
        }
        if costs.len() != levels.len() {
            return Err(MfboError::invalid("one cost per fidelity required"));
        }
        if costs.iter().any(|&c| !(c > 0.0) || !c.is_finite()) {
            return Err(MfboError::invalid("fidelity costs must be positive"));
        }
        for (li, level) in levels.iter().enumerate() {
            if level.x.len() != level.f.len() {
                return Err(MfboError::invalid(format!("level {} rows disagree", li + 1)));
            }
            for row in &level.x {
                if !domain.contains(row) {
                    return Err(MfboError::invalid(format!(
                        "level {} has a design point outside the domain",
                        li + 1
                    )));
                }
            }
        }
        Ok(FidelityDataset { domain, levels, costs })
    }

    /// Single-fidelity dataset with unit cost.
    pub fn single(domain: BoxDomain, x: Vec<Vec<f64>>, f: Vec<f64>) -> Result<Self> {
        Self::new(domain, vec![LevelData { x, f }], vec![1.0])
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    /// Number of fidelity levels `T`.
    pub fn num_fidelities(&self) -> usize {
        self.levels.len()
    }

    /// Data of fidelity `t` (1-based).
    pub fn level(&self, t: usize) -> Result<&LevelData> {
        self.check_fidelity(t)?;
        Ok(&self.levels[t - 1])
    }

    pub fn cost(&self, t: usize) -> Result<f64> {
        self.check_fidelity(t)?;
        Ok(self.costs[t - 1])
    }

    pub fn costs(&self) -> &[f64] {
        &self.costs
    }

    /// Appends one observation at fidelity `t`.
    pub fn push(&mut self, t: usize, x: Vec<f64>, f: f64) -> Result<()> {
        self.check_fidelity(t)?;
        if !self.domain.contains(&x) {
            return Err(MfboError::invalid("design point outside the domain"));
        }
        self.levels[t - 1].x.push(x);
        self.levels[t - 1].f.push(f);
        Ok(())
    }

    pub fn check_fidelity(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.levels.len() {
            return Err(MfboError::invalid(format!(
                "fidelity {t} out of range 1..={}",
                self.levels.len()
            )));
        }
        Ok(())
    }

    /// Best observation at the highest fidelity (the best-found operator);
    /// ties resolve to the lexicographically smallest design point.
    pub fn best_found(&self) -> Option<(Vec<f64>, f64)> {
        let top = self.levels.last()?;
        let mut best: Option<(&Vec<f64>, f64)> = None;
        for (x, &f) in top.x.iter().zip(&top.f) {
            let better = match &best {
                None => true,
                Some((bx, bf)) => f < *bf || (f == *bf && lex_less(x, bx)),
            };
            if better {
                best = Some((x, f));
            }
        }
        best.map(|(x, f)| (x.clone(), f))
    }

    /// All observed values across fidelities (pooled, for standardization).
    pub fn all_values(&self) -> impl Iterator<Item = f64> + Clone + '_ {
        self.levels.iter().flat_map(|l| l.f.iter().copied())
    }

    pub fn total_points(&self) -> usize {
        self.levels.iter().map(|l| l.len()).sum()
    }
}

/// Which multi-fidelity model to fit (configuration-level choice).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SurrogateKind {
    /// Plain GP on the highest fidelity only.
    Gp,
    /// Two-level co-Kriging (auto-regressive, joint likelihood).
    CoKriging,
    /// Recursive auto-regressive chain with a constant or linear scaling basis.
    Recursive {
        #[serde(default)]
        linear_rho: bool,
    },
    /// Hierarchical Kriging: scaled lower-level posterior mean as prior mean.
    Hierarchical,
    /// Linear model of coregionalization (multi-output GP).
    Lmc,
    /// Graphical recursive model on a chain DAG.
    GmgpChain,
    /// Single GP over (fidelity, x) with a product kernel on continuous t.
    AugmentedContinuous,
    /// Single GP over (fidelity, x) with the compound-symmetry fidelity kernel.
    AugmentedCompoundSymmetry,
    /// Single GP over (fidelity, x) with a shared kernel plus per-fidelity
    /// discrepancy kernels switched by a Kronecker delta.
    AugmentedKroneckerSum,
}

/// Tagged union of trained multi-fidelity surrogates.
///
/// With one fidelity level every kind degenerates to a plain GP, so fitting
/// delegates straight to [`GpModel`] and reproduces it bit for bit.
#[derive(Debug, Clone)]
pub enum MfSurrogate {
    Single(GpModel),
    CoKriging(CoKrigingTwoLevel),
    Recursive(RecursiveMf),
    Hierarchical(HierarchicalKriging),
    Lmc(MvGpModel),
    Gmgp(GmgpRecursive),
    Augmented(AugmentedInputGp),
}

impl MfSurrogate {
    /// Fits the requested model to the dataset.
    pub fn fit(
        data: &FidelityDataset,
        kind: &SurrogateKind,
        seed: u64,
        opts: &FitOptions,
    ) -> Result<MfSurrogate> {
        let t = data.num_fidelities();
        if t == 1 || matches!(kind, SurrogateKind::Gp) {
            let top = data.level(t)?;
            let gp = GpModel::fit_with(top.x.clone(), top.f.clone(), data.domain(), seed, opts)?;
            return Ok(MfSurrogate::Single(gp));
        }
        match kind {
            SurrogateKind::Gp => unreachable!(),
            SurrogateKind::CoKriging => {
                Ok(MfSurrogate::CoKriging(CoKrigingTwoLevel::fit(data, seed, opts)?))
            }
            SurrogateKind::Recursive { linear_rho } => {
                let basis = if *linear_rho { RhoBasis::Linear } else { RhoBasis::Constant };
                Ok(MfSurrogate::Recursive(RecursiveMf::fit(data, basis, seed, opts)?))
            }
            SurrogateKind::Hierarchical => {
                Ok(MfSurrogate::Hierarchical(HierarchicalKriging::fit(data, seed, opts)?))
            }
            SurrogateKind::Lmc => Ok(MfSurrogate::Lmc(fit_lmc(data, seed, opts)?)),
            SurrogateKind::GmgpChain => {
                let dag = FidelityDag::chain(t)?;
                Ok(MfSurrogate::Gmgp(GmgpRecursive::fit(data, &dag, seed, opts)?))
            }
            SurrogateKind::AugmentedContinuous => Ok(MfSurrogate::Augmented(
                AugmentedInputGp::fit(data, augmented::FitKernelChoice::Continuous, seed, opts)?,
            )),
            SurrogateKind::AugmentedCompoundSymmetry => Ok(MfSurrogate::Augmented(
                AugmentedInputGp::fit(data, augmented::FitKernelChoice::CompoundSymmetry, seed, opts)?,
            )),
            SurrogateKind::AugmentedKroneckerSum => Ok(MfSurrogate::Augmented(
                AugmentedInputGp::fit(data, augmented::FitKernelChoice::KroneckerSum, seed, opts)?,
            )),
        }
    }

    /// Number of fidelity levels the surrogate can predict at.
    pub fn num_fidelities(&self) -> usize {
        match self {
            MfSurrogate::Single(_) => 1,
            MfSurrogate::CoKriging(_) => 2,
            MfSurrogate::Recursive(m) => m.num_fidelities(),
            MfSurrogate::Hierarchical(m) => m.num_fidelities(),
            MfSurrogate::Lmc(m) => m.num_outputs(),
            MfSurrogate::Gmgp(m) => m.num_fidelities(),
            MfSurrogate::Augmented(m) => m.num_fidelities(),
        }
    }

    /// Posterior mean and variance at fidelity `t` (1-based).
    pub fn predict(&self, x: &[f64], t: usize) -> Result<(f64, f64)> {
        let tmax = self.num_fidelities();
        if t == 0 || t > tmax {
            return Err(MfboError::invalid(format!("fidelity {t} out of range 1..={tmax}")));
        }
        match self {
            MfSurrogate::Single(m) => m.predict(x),
            MfSurrogate::CoKriging(m) => m.predict(x, t),
            MfSurrogate::Recursive(m) => m.predict(x, t),
            MfSurrogate::Hierarchical(m) => m.predict(x, t),
            MfSurrogate::Lmc(m) => m.predict_output(x, t - 1),
            MfSurrogate::Gmgp(m) => m.predict(x, t),
            MfSurrogate::Augmented(m) => m.predict(x, t),
        }
    }

    /// Posterior at the highest fidelity.
    pub fn predict_hf(&self, x: &[f64]) -> Result<(f64, f64)> {
        self.predict(x, self.num_fidelities())
    }

    /// Posterior covariance between two points at the highest fidelity.
    pub fn posterior_cov_hf(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        match self {
            MfSurrogate::Single(m) => m.posterior_cov(a, b),
            MfSurrogate::CoKriging(m) => m.posterior_cov(a, 2, b, 2),
            MfSurrogate::Recursive(m) => m.posterior_cov_top(a, b),
            MfSurrogate::Hierarchical(m) => m.posterior_cov_top(a, b),
            MfSurrogate::Lmc(m) => {
                let t = m.num_outputs() - 1;
                m.posterior_cov(a, t, b, t)
            }
            MfSurrogate::Gmgp(m) => m.posterior_cov_top(a, b),
            MfSurrogate::Augmented(m) => {
                m.posterior_cov(a, self.num_fidelities(), b, self.num_fidelities())
            }
        }
    }

    /// Re-conditions with one extra observation at fidelity `t`, keeping all
    /// hyperparameters fixed (pre-posterior fantasy updates).
    pub fn with_observation(&self, x: &[f64], y: f64, t: usize) -> Result<MfSurrogate> {
        let tmax = self.num_fidelities();
        if t == 0 || t > tmax {
            return Err(MfboError::invalid(format!("fidelity {t} out of range 1..={tmax}")));
        }
        Ok(match self {
            MfSurrogate::Single(m) => MfSurrogate::Single(m.with_observation(x, y)?),
            MfSurrogate::CoKriging(m) => MfSurrogate::CoKriging(m.with_observation(x, y, t)?),
            MfSurrogate::Recursive(m) => MfSurrogate::Recursive(m.with_observation(x, y, t)?),
            MfSurrogate::Hierarchical(m) => {
                MfSurrogate::Hierarchical(m.with_observation(x, y, t)?)
            }
            MfSurrogate::Lmc(m) => MfSurrogate::Lmc(m.with_observation(x, t - 1, y)?),
            MfSurrogate::Gmgp(m) => MfSurrogate::Gmgp(m.with_observation(x, y, t)?),
            MfSurrogate::Augmented(m) => MfSurrogate::Augmented(m.with_observation(x, y, t)?),
        })
    }

    /// Posterior correlation between the fidelity-`t` and highest-fidelity
    /// predictions at `x` (the alpha_1 factor of the heuristic MF
    /// acquisition). Defined for the auto-regressive models; zero-variance
    /// cases resolve to 1 at the top fidelity and 0 below it.
    pub fn cross_correlation(&self, x: &[f64], t: usize) -> Result<f64> {
        let tmax = self.num_fidelities();
        if t == 0 || t > tmax {
            return Err(MfboError::invalid(format!("fidelity {t} out of range 1..={tmax}")));
        }
        if t == tmax {
            return Ok(1.0);
        }
        match self {
            MfSurrogate::Single(_) => Ok(1.0),
            MfSurrogate::CoKriging(m) => Ok(m.prior_cross_correlation(x)),
            MfSurrogate::Recursive(m) => m.cross_correlation(x, t),
            _ => Err(MfboError::invalid(
                "cross-fidelity correlation is only defined for the co-Kriging and recursive surrogates",
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_validation_and_best_found() {
        let domain = BoxDomain::cube(1, 0.0, 1.0).unwrap();
        let levels = vec![
            LevelData { x: vec![vec![0.1], vec![0.9]], f: vec![5.0, 4.0] },
            LevelData { x: vec![vec![0.2], vec![0.8], vec![0.5]], f: vec![3.0, 1.0, 1.0] },
        ];
        let data = FidelityDataset::new(domain.clone(), levels, vec![1.0, 4.0]).unwrap();
        assert_eq!(data.num_fidelities(), 2);
        // ties resolve lexicographically: 0.5 beats 0.8 at equal value
        let (x, f) = data.best_found().unwrap();
        assert_eq!(x, vec![0.5]);
        assert_eq!(f, 1.0);

        assert!(FidelityDataset::new(domain.clone(), vec![], vec![]).is_err());
        let bad = vec![LevelData { x: vec![vec![2.0]], f: vec![0.0] }];
        assert!(FidelityDataset::new(domain.clone(), bad, vec![1.0]).is_err());
        let neg_cost = vec![LevelData { x: vec![vec![0.5]], f: vec![0.0] }];
        assert!(FidelityDataset::new(domain, neg_cost, vec![0.0]).is_err());
    }

    #[test]
    fn fidelity_bounds_checked() {
        let domain = BoxDomain::cube(1, 0.0, 1.0).unwrap();
        let data = FidelityDataset::single(domain, vec![vec![0.5]], vec![1.0]).unwrap();
        assert!(data.level(0).is_err());
        assert!(data.level(2).is_err());
        assert!(data.level(1).is_ok());
    }
}
