//! Two-level co-Kriging: the auto-regressive model fitted by joint maximum
//! likelihood over the stacked low- and high-fidelity observations.
//!
//! The high-fidelity output is `f_2(x) = b_1 f_1(x) + delta_2(x)` with
//! independent GPs `f_1 ~ GP(mu_1, k_1)` and `delta_2 ~ GP(mu_2, k_2)`,
//! which induces the inter-group covariance
//!
//! ```text
//! S(x,x') = [ k_1        b_1 k_1            ]
//!           [ b_1 k_1    b_1^2 k_1 + k_2    ]
//! ```
//!
//! Setting `b_1 = 0` decouples the blocks exactly, so the high-fidelity
//! posterior collapses to a plain GP on the high-fidelity data alone.

use crate::ascent::{multistart_coordinate_ascent, ParamSpace};
use crate::error::{MfboError, Result};
use crate::gp::{FitOptions, NoiseSetting, Standardizer};
use crate::kernel::KernelSpec;
use crate::linalg::{gram, solve_sym, CholFactor};
use crate::surrogates::FidelityDataset;
use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub struct CoKrigingTwoLevel {
    b1: f64,
    kernel_lf: KernelSpec,
    kernel_hf: KernelSpec,
    /// delta-process mean constants (mu_1, mu_2); the HF prior mean is
    /// `b1 * mu_1 + mu_2`.
    mean_lf: f64,
    mean_hf_delta: f64,
    noise: [f64; 2],
    x_lf: Vec<Vec<f64>>,
    y_lf: Vec<f64>,
    x_hf: Vec<Vec<f64>>,
    y_hf: Vec<f64>,
    factor: CholFactor,
    alpha: DVector<f64>,
    std: Standardizer,
}

impl CoKrigingTwoLevel {
    /// Conditions the model with explicitly given parameters (no fitting, no
    /// output scaling). Intended for reductions and oracle checks.
    #[allow(clippy::too_many_arguments)]
    pub fn with_params(
        x_lf: Vec<Vec<f64>>,
        y_lf: Vec<f64>,
        x_hf: Vec<Vec<f64>>,
        y_hf: Vec<f64>,
        b1: f64,
        kernel_lf: KernelSpec,
        kernel_hf: KernelSpec,
        mean_lf: f64,
        mean_hf_delta: f64,
        noise: [f64; 2],
    ) -> Result<CoKrigingTwoLevel> {
        if x_lf.len() != y_lf.len() || x_hf.len() != y_hf.len() || x_lf.is_empty() || x_hf.is_empty() {
            return Err(MfboError::invalid("level data shapes disagree"));
        }
        condition(
            Params { b1, kernel_lf, kernel_hf, noise },
            &x_lf,
            &y_lf,
            &x_hf,
            &y_hf,
            Some((mean_lf, mean_hf_delta)),
        )
        .map(|(c, _)| c.into_model(x_lf, y_lf, x_hf, y_hf, Standardizer { shift: 0.0, scale: 1.0 }))
    }

    /// Joint maximum-likelihood fit over the stacked LF+HF data.
    pub fn fit(data: &FidelityDataset, seed: u64, opts: &FitOptions) -> Result<CoKrigingTwoLevel> {
        if data.num_fidelities() != 2 {
            return Err(MfboError::invalid("co-Kriging needs exactly two fidelity levels"));
        }
        let lf = data.level(1)?;
        let hf = data.level(2)?;
        if lf.len() < 2 || hf.len() < 2 {
            return Err(MfboError::invalid("need at least two points per fidelity"));
        }
        let std = Standardizer::from_values(data.all_values());
        let y_lf: Vec<f64> = lf.f.iter().map(|&v| std.fwd(v)).collect();
        let y_hf: Vec<f64> = hf.f.iter().map(|&v| std.fwd(v)).collect();

        let d = data.domain().dim();
        let space = param_space(data, opts);
        let objective = |p: &[f64]| -> f64 {
            match condition(unpack(p, d, opts), &lf.x, &y_lf, &hf.x, &y_hf, None) {
                Ok((_, lml)) => lml,
                Err(_) => f64::NEG_INFINITY,
            }
        };
        let (best, _) = multistart_coordinate_ascent(
            objective,
            &space,
            opts.restarts,
            opts.sweeps,
            opts.golden_iters,
            seed,
        )?;
        let (cond, _) = condition(unpack(&best, d, opts), &lf.x, &y_lf, &hf.x, &y_hf, None)?;
        Ok(cond.into_model(lf.x.clone(), y_lf, hf.x.clone(), y_hf, std))
    }

    /// Entry of the inter-group prior covariance `S(xa, xb)[ta, tb]`
    /// (internal standardized units; fidelities 1-based).
    pub fn prior_cov(&self, xa: &[f64], ta: usize, xb: &[f64], tb: usize) -> f64 {
        cross_entry(self.b1, &self.kernel_lf, &self.kernel_hf, xa, ta, xb, tb)
    }

    /// Posterior correlation between the LF and HF predictions at `x`
    /// implied by the prior structure: `b1 k1 / sqrt(k1 (b1^2 k1 + k2))`.
    pub fn prior_cross_correlation(&self, x: &[f64]) -> f64 {
        let k1 = self.kernel_lf.eval(x, x);
        let k2 = self.kernel_hf.eval(x, x);
        let denom = (k1 * (self.b1 * self.b1 * k1 + k2)).sqrt();
        if denom < 1e-300 {
            return 0.0;
        }
        self.b1 * k1 / denom
    }

    /// Posterior mean and variance at fidelity `t` (original units).
    pub fn predict(&self, x: &[f64], t: usize) -> Result<(f64, f64)> {
        if t == 0 || t > 2 {
            return Err(MfboError::invalid(format!("fidelity {t} out of range 1..=2")));
        }
        if x.len() != self.kernel_lf.dim() {
            return Err(MfboError::invalid("query dimension mismatch"));
        }
        let kq = self.kvec(x, t);
        let mean = self.prior_mean(t) + kq.dot(&self.alpha);
        let v = self.factor.solve_lower(&kq);
        let var = (self.prior_cov(x, t, x, t) - v.norm_squared()).max(0.0);
        Ok((self.std.back_mean(mean), self.std.back_var(var)))
    }

    /// Posterior covariance between `(xa, ta)` and `(xb, tb)` in original units.
    pub fn posterior_cov(&self, xa: &[f64], ta: usize, xb: &[f64], tb: usize) -> Result<f64> {
        if ta == 0 || ta > 2 || tb == 0 || tb > 2 {
            return Err(MfboError::invalid("fidelity out of range 1..=2"));
        }
        let ka = self.kvec(xa, ta);
        let kb = self.kvec(xb, tb);
        let c = self.prior_cov(xa, ta, xb, tb) - ka.dot(&self.factor.solve(&kb));
        Ok(self.std.back_var(c))
    }

    /// Re-conditions with one extra observation (original units) at fidelity
    /// `t`; `b1`, kernels, and mean constants stay fixed.
    pub fn with_observation(&self, x: &[f64], y: f64, t: usize) -> Result<CoKrigingTwoLevel> {
        if t == 0 || t > 2 {
            return Err(MfboError::invalid(format!("fidelity {t} out of range 1..=2")));
        }
        let mut x_lf = self.x_lf.clone();
        let mut y_lf = self.y_lf.clone();
        let mut x_hf = self.x_hf.clone();
        let mut y_hf = self.y_hf.clone();
        let ys = self.std.fwd(y);
        if t == 1 {
            x_lf.push(x.to_vec());
            y_lf.push(ys);
        } else {
            x_hf.push(x.to_vec());
            y_hf.push(ys);
        }
        let params = Params {
            b1: self.b1,
            kernel_lf: self.kernel_lf.clone(),
            kernel_hf: self.kernel_hf.clone(),
            noise: self.noise,
        };
        condition(params, &x_lf, &y_lf, &x_hf, &y_hf, Some((self.mean_lf, self.mean_hf_delta)))
            .map(|(c, _)| c.into_model(x_lf, y_lf, x_hf, y_hf, self.std))
    }

    fn kvec(&self, x: &[f64], t: usize) -> DVector<f64> {
        let n1 = self.x_lf.len();
        let n = n1 + self.x_hf.len();
        DVector::from_fn(n, |i, _| {
            let (xi, ti) = if i < n1 { (&self.x_lf[i], 1) } else { (&self.x_hf[i - n1], 2) };
            self.prior_cov(x, t, xi, ti)
        })
    }

    fn prior_mean(&self, t: usize) -> f64 {
        if t == 1 {
            self.mean_lf
        } else {
            self.b1 * self.mean_lf + self.mean_hf_delta
        }
    }

    pub fn b1(&self) -> f64 {
        self.b1
    }

    pub fn kernel_lf(&self) -> &KernelSpec {
        &self.kernel_lf
    }

    pub fn kernel_hf(&self) -> &KernelSpec {
        &self.kernel_hf
    }

    pub fn mean_lf(&self) -> f64 {
        self.mean_lf
    }

    pub fn mean_hf_delta(&self) -> f64 {
        self.mean_hf_delta
    }

    pub fn jitter(&self) -> f64 {
        self.factor.jitter()
    }

    pub fn output_shift(&self) -> f64 {
        self.std.shift
    }

    pub fn output_scale(&self) -> f64 {
        self.std.scale
    }
}

#[derive(Debug, Clone)]
struct Params {
    b1: f64,
    kernel_lf: KernelSpec,
    kernel_hf: KernelSpec,
    noise: [f64; 2],
}

struct Conditioned {
    params: Params,
    mean_lf: f64,
    mean_hf_delta: f64,
    factor: CholFactor,
    alpha: DVector<f64>,
}

impl Conditioned {
    fn into_model(
        self,
        x_lf: Vec<Vec<f64>>,
        y_lf: Vec<f64>,
        x_hf: Vec<Vec<f64>>,
        y_hf: Vec<f64>,
        std: Standardizer,
    ) -> CoKrigingTwoLevel {
        CoKrigingTwoLevel {
            b1: self.params.b1,
            kernel_lf: self.params.kernel_lf,
            kernel_hf: self.params.kernel_hf,
            mean_lf: self.mean_lf,
            mean_hf_delta: self.mean_hf_delta,
            noise: self.params.noise,
            x_lf,
            y_lf,
            x_hf,
            y_hf,
            factor: self.factor,
            alpha: self.alpha,
            std,
        }
    }
}

fn cross_entry(
    b1: f64,
    k_lf: &KernelSpec,
    k_hf: &KernelSpec,
    xa: &[f64],
    ta: usize,
    xb: &[f64],
    tb: usize,
) -> f64 {
    match (ta, tb) {
        (1, 1) => k_lf.eval(xa, xb),
        (1, 2) | (2, 1) => b1 * k_lf.eval(xa, xb),
        (2, 2) => b1 * b1 * k_lf.eval(xa, xb) + k_hf.eval(xa, xb),
        _ => unreachable!("fidelities validated upstream"),
    }
}

/// Builds the stacked factorization; mean constants come from GLS profiling
/// unless fixed values are supplied. Returns the log marginal likelihood.
fn condition(
    params: Params,
    x_lf: &[Vec<f64>],
    y_lf: &[f64],
    x_hf: &[Vec<f64>],
    y_hf: &[f64],
    fixed_means: Option<(f64, f64)>,
) -> Result<(Conditioned, f64)> {
    let n1 = x_lf.len();
    let n = n1 + x_hf.len();
    let row = |i: usize| -> (&[f64], usize) {
        if i < n1 {
            (&x_lf[i], 1)
        } else {
            (&x_hf[i - n1], 2)
        }
    };
    let mut k = gram(n, |i, j| {
        let (xi, ti) = row(i);
        let (xj, tj) = row(j);
        cross_entry(params.b1, &params.kernel_lf, &params.kernel_hf, xi, ti, xj, tj)
    });
    for i in 0..n {
        let (_, ti) = row(i);
        k[(i, i)] += params.noise[ti - 1];
    }
    let scale = params
        .kernel_lf
        .signal_variance()
        .max(params.b1 * params.b1 * params.kernel_lf.signal_variance() + params.kernel_hf.signal_variance());
    let factor = CholFactor::with_jitter(&k, scale)?;

    let y = DVector::from_fn(n, |i, _| if i < n1 { y_lf[i] } else { y_hf[i - n1] });
    // regression design: LF rows observe mu_1, HF rows observe b1*mu_1 + mu_2
    let h = DMatrix::from_fn(n, 2, |i, j| {
        let (_, ti) = row(i);
        match (ti, j) {
            (1, 0) => 1.0,
            (1, 1) => 0.0,
            (2, 0) => params.b1,
            (2, 1) => 1.0,
            _ => unreachable!(),
        }
    });
    let (mean_lf, mean_hf_delta) = match fixed_means {
        Some(m) => m,
        None => {
            let ainv_h = factor.solve_matrix(&h);
            let hth = h.transpose() * &ainv_h;
            let hty = h.transpose() * factor.solve(&y);
            let beta = solve_sym(&hth, &hty)
                .ok_or_else(|| MfboError::TrainingFailure("degenerate co-Kriging mean system".into()))?;
            (beta[0], beta[1])
        }
    };
    let prior = DVector::from_fn(n, |i, _| {
        let (_, ti) = row(i);
        if ti == 1 {
            mean_lf
        } else {
            params.b1 * mean_lf + mean_hf_delta
        }
    });
    let resid = &y - &prior;
    let alpha = factor.solve(&resid);
    let lml = -0.5 * resid.dot(&alpha)
        - 0.5 * factor.log_det()
        - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
    Ok((Conditioned { params, mean_lf, mean_hf_delta, factor, alpha }, lml))
}

fn param_space(data: &FidelityDataset, opts: &FitOptions) -> ParamSpace {
    let domain = data.domain();
    let d = domain.dim();
    let mut lo = vec![-10.0];
    let mut hi = vec![10.0];
    let mut start = vec![1.0];
    for _level in 0..2 {
        for j in 0..d {
            let r = domain.range(j);
            lo.push((1e-3 * r).ln());
            hi.push((10.0 * r).ln());
            start.push((0.25 * r).ln());
        }
        lo.push(-10.0);
        hi.push(10.0);
        start.push(0.0);
    }
    if matches!(opts.noise, NoiseSetting::Free) {
        lo.push(-16.0);
        hi.push(0.0);
        start.push(-6.0);
    }
    ParamSpace { lo, hi, default_start: start }
}

fn unpack(p: &[f64], d: usize, opts: &FitOptions) -> Params {
    let b1 = p[0];
    let block = |off: usize| -> KernelSpec {
        let ls: Vec<f64> = p[off..off + d].iter().map(|v| v.exp()).collect();
        KernelSpec::squared_exponential(ls, p[off + d].exp()).expect("positive by construction")
    };
    let kernel_lf = block(1);
    let kernel_hf = block(1 + d + 1);
    let noise_val = match opts.noise {
        NoiseSetting::NoiseFree => 0.0,
        NoiseSetting::Fixed(v) => v,
        NoiseSetting::Free => p[2 * (d + 1) + 1].exp(),
    };
    Params { b1, kernel_lf, kernel_hf, noise: [noise_val, noise_val] }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::BoxDomain;
    use crate::gp::GpModel;
    use crate::seed;
    use crate::surrogates::LevelData;
    use rand::Rng;

    fn se(ls: f64, sf2: f64) -> KernelSpec {
        KernelSpec::squared_exponential(vec![ls], sf2).unwrap()
    }

    fn linear_toy(slope: f64, intercept: f64) -> FidelityDataset {
        let domain = BoxDomain::cube(1, 0.0, 1.0).unwrap();
        let x_lf: Vec<Vec<f64>> = (0..12).map(|i| vec![i as f64 / 11.0]).collect();
        let f_lf: Vec<f64> = x_lf.iter().map(|r| r[0]).collect();
        let x_hf: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64 / 7.0]).collect();
        let f_hf: Vec<f64> = x_hf.iter().map(|r| slope * r[0] + intercept).collect();
        FidelityDataset::new(
            domain,
            vec![LevelData { x: x_lf, f: f_lf }, LevelData { x: x_hf, f: f_hf }],
            vec![1.0, 4.0],
        )
        .unwrap()
    }

    #[test]
    fn zero_b1_decouples_to_plain_hf_gp() {
        let mut rng = seed::rng(31);
        let x_hf: Vec<Vec<f64>> = (0..7).map(|_| vec![rng.gen::<f64>()]).collect();
        let y_hf: Vec<f64> = x_hf.iter().map(|r| (5.0 * r[0]).sin()).collect();
        let x_lf: Vec<Vec<f64>> = (0..9).map(|_| vec![rng.gen::<f64>()]).collect();
        let y_lf: Vec<f64> = x_lf.iter().map(|r| r[0]).collect();
        let k_hf = se(0.4, 2.0);
        let gp = GpModel::with_params(x_hf.clone(), y_hf.clone(), k_hf.clone(), 0.0, 0.3).unwrap();
        let ck = CoKrigingTwoLevel::with_params(
            x_lf,
            y_lf,
            x_hf,
            y_hf,
            0.0,
            se(0.2, 1.0),
            k_hf,
            0.5,
            0.3,
            [0.0, 0.0],
        )
        .unwrap();
        for &q in &[0.05, 0.33, 0.72, 0.98] {
            let (cm, cv) = ck.predict(&[q], 2).unwrap();
            let (gm, gv) = gp.predict(&[q]).unwrap();
            assert!((cm - gm).abs() < 1e-6, "mean {cm} vs {gm}");
            assert!((cv - gv).abs() < 1e-6);
        }
    }

    #[test]
    fn fitted_b1_recovers_linear_scaling() {
        let data = linear_toy(2.0, 0.0);
        let m = CoKrigingTwoLevel::fit(&data, 17, &FitOptions::default()).unwrap();
        // least-squares regression of F_H on f_L at shared points gives 2
        assert!((m.b1() - 2.0).abs() < 0.1, "b1 = {}", m.b1());
    }

    #[test]
    fn same_function_comparable_to_pooled_gp() {
        let domain = BoxDomain::cube(1, 0.0, 1.0).unwrap();
        let f = |x: f64| (4.0 * x).sin() + x;
        let x_lf: Vec<Vec<f64>> = (0..10).map(|i| vec![(2 * i) as f64 / 19.0]).collect();
        let x_hf: Vec<Vec<f64>> = (0..10).map(|i| vec![(2 * i + 1) as f64 / 19.0]).collect();
        let f_lf: Vec<f64> = x_lf.iter().map(|r| f(r[0])).collect();
        let f_hf: Vec<f64> = x_hf.iter().map(|r| f(r[0])).collect();
        let data = FidelityDataset::new(
            domain.clone(),
            vec![LevelData { x: x_lf.clone(), f: f_lf.clone() }, LevelData { x: x_hf.clone(), f: f_hf.clone() }],
            vec![1.0, 2.0],
        )
        .unwrap();
        let ck = CoKrigingTwoLevel::fit(&data, 5, &FitOptions::default()).unwrap();
        let pooled_x: Vec<Vec<f64>> = x_lf.iter().chain(&x_hf).cloned().collect();
        let pooled_f: Vec<f64> = f_lf.iter().chain(&f_hf).copied().collect();
        let gp = GpModel::fit(pooled_x, pooled_f, &domain, 5).unwrap();
        let probes: Vec<f64> = (0..40).map(|i| (i as f64 + 0.5) / 40.0).collect();
        let rmse = |pred: &dyn Fn(f64) -> f64| -> f64 {
            (probes.iter().map(|&q| (pred(q) - f(q)).powi(2)).sum::<f64>() / probes.len() as f64).sqrt()
        };
        let ck_rmse = rmse(&|q| ck.predict(&[q], 2).unwrap().0);
        let gp_rmse = rmse(&|q| gp.predict(&[q]).unwrap().0);
        assert!(
            ck_rmse <= 2.0 * gp_rmse + 1e-9,
            "co-Kriging RMSE {ck_rmse} vs pooled GP RMSE {gp_rmse}"
        );
    }

    #[test]
    fn markov_property_off_diagonal_block() {
        let data = linear_toy(1.5, 0.4);
        let m = CoKrigingTwoLevel::fit(&data, 3, &FitOptions::fast()).unwrap();
        let mut rng = seed::rng(8);
        for _ in 0..50 {
            let a = [rng.gen::<f64>()];
            let b = [rng.gen::<f64>()];
            let want = m.b1() * m.kernel_lf().eval(&a, &b);
            assert_eq!(m.prior_cov(&a, 2, &b, 1), want);
            assert_eq!(m.prior_cov(&a, 1, &b, 2), want);
        }
    }

    #[test]
    fn stacked_dense_conditioning_oracle() {
        let mut rng = seed::rng(14);
        let x_lf: Vec<Vec<f64>> = (0..6).map(|_| vec![rng.gen::<f64>()]).collect();
        let y_lf: Vec<f64> = x_lf.iter().map(|r| (3.0 * r[0]).cos()).collect();
        let x_hf: Vec<Vec<f64>> = (0..4).map(|_| vec![rng.gen::<f64>()]).collect();
        let y_hf: Vec<f64> = x_hf.iter().map(|r| 1.4 * (3.0 * r[0]).cos() + 0.2).collect();
        let (b1, k1, k2) = (1.4, se(0.5, 1.2), se(0.3, 0.4));
        let (mu1, mu2) = (0.1, 0.25);
        let m = CoKrigingTwoLevel::with_params(
            x_lf.clone(),
            y_lf.clone(),
            x_hf.clone(),
            y_hf.clone(),
            b1,
            k1.clone(),
            k2.clone(),
            mu1,
            mu2,
            [0.0, 0.0],
        )
        .unwrap();

        let n = 10;
        let pt = |i: usize| -> (&Vec<f64>, usize) {
            if i < 6 {
                (&x_lf[i], 1)
            } else {
                (&x_hf[i - 6], 2)
            }
        };
        let entry = |xa: &[f64], ta: usize, xb: &[f64], tb: usize| {
            cross_entry(b1, &k1, &k2, xa, ta, xb, tb)
        };
        let mut km = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let (xi, ti) = pt(i);
                let (xj, tj) = pt(j);
                km[(i, j)] = entry(xi, ti, xj, tj);
            }
            km[(i, i)] += m.jitter();
        }
        let kinv = km.try_inverse().unwrap();
        let prior = |t: usize| if t == 1 { mu1 } else { b1 * mu1 + mu2 };
        let resid = DVector::from_fn(n, |i, _| {
            let (_, ti) = pt(i);
            (if i < 6 { y_lf[i] } else { y_hf[i - 6] }) - prior(ti)
        });
        for &q in &[0.17, 0.52, 0.88] {
            for t in 1..=2usize {
                let kq = DVector::from_fn(n, |i, _| {
                    let (xi, ti) = pt(i);
                    entry(&[q], t, xi, ti)
                });
                let want_mean = prior(t) + kq.dot(&(&kinv * &resid));
                let want_var = entry(&[q], t, &[q], t) - kq.dot(&(&kinv * &kq));
                let (mean, var) = m.predict(&[q], t).unwrap();
                assert!((mean - want_mean).abs() < 1e-8);
                assert!((var - want_var.max(0.0)).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn adding_hf_point_collapses_variance_there() {
        let data = linear_toy(2.0, 1.0);
        let m = CoKrigingTwoLevel::fit(&data, 2, &FitOptions::fast()).unwrap();
        let q = [0.43];
        let (mean, var_before) = m.predict(&q, 2).unwrap();
        let m2 = m.with_observation(&q, mean, 2).unwrap();
        let (_, var_after) = m2.predict(&q, 2).unwrap();
        assert!(var_after <= var_before + 1e-8);
        assert!(var_after < 1e-6 * m.output_scale() * m.output_scale() + 1e-10);
    }

    #[test]
    fn rejects_wrong_level_count() {
        let domain = BoxDomain::cube(1, 0.0, 1.0).unwrap();
        let one = FidelityDataset::single(domain, vec![vec![0.1], vec![0.6]], vec![1.0, 2.0]).unwrap();
        assert!(CoKrigingTwoLevel::fit(&one, 0, &FitOptions::fast()).is_err());
    }
}
