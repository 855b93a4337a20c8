//! Deterministic multistart coordinate ascent used for hyperparameter search.
//!
//! The objective is maximized over a box in parameter space (log-transformed
//! coordinates are the caller's business). Each restart runs sweeps of
//! golden-section line searches, one coordinate at a time; the search never
//! accepts a downhill move, so the best value is monotone within a restart.

use crate::error::{MfboError, Result};
use crate::seed;
use rand::Rng;

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Search box plus the deterministic start used by restart 0.
#[derive(Debug, Clone)]
pub(crate) struct ParamSpace {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub default_start: Vec<f64>,
}

impl ParamSpace {
    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    fn clamp(&self, p: &mut [f64]) {
        for j in 0..p.len() {
            p[j] = p[j].clamp(self.lo[j], self.hi[j]);
        }
    }
}

/// Golden-section maximization of `f` on `[a, b]`, seeded with the current
/// best `(x, f(x))`; returns the best point actually evaluated.
fn golden_max<F: FnMut(f64) -> f64>(mut f: F, a0: f64, b0: f64, iters: usize, cur: (f64, f64)) -> (f64, f64) {
    let (mut a, mut b) = (a0, b0);
    let mut best = cur;
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    if f1 > best.1 {
        best = (x1, f1);
    }
    if f2 > best.1 {
        best = (x2, f2);
    }
    for _ in 0..iters {
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
            if f1 > best.1 {
                best = (x1, f1);
            }
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
            if f2 > best.1 {
                best = (x2, f2);
            }
        }
    }
    best
}

/// Maximizes `objective` (which returns `-inf` on failed evaluations) and
/// returns the best parameter vector with its value.
pub(crate) fn multistart_coordinate_ascent<F: FnMut(&[f64]) -> f64>(
    mut objective: F,
    space: &ParamSpace,
    restarts: usize,
    sweeps: usize,
    golden_iters: usize,
    seed_value: u64,
) -> Result<(Vec<f64>, f64)> {
    let d = space.dim();
    let mut best: Option<(Vec<f64>, f64)> = None;

    for r in 0..restarts.max(1) {
        let mut p = if r == 0 {
            let mut s = space.default_start.clone();
            space.clamp(&mut s);
            s
        } else {
            let mut rng = seed::rng(seed::derive(seed_value, &[r as u64]));
            (0..d).map(|j| rng.gen_range(space.lo[j]..=space.hi[j])).collect()
        };
        let mut val = objective(&p);
        if !val.is_finite() && r == 0 {
            // deterministic start may sit in a failing region; skip to random
            continue;
        }
        for _ in 0..sweeps {
            let before = val;
            for c in 0..d {
                if space.hi[c] - space.lo[c] <= 0.0 {
                    continue;
                }
                let (xc, fc) = golden_max(
                    |v| {
                        let mut q = p.clone();
                        q[c] = v;
                        let fv = objective(&q);
                        if fv.is_finite() {
                            fv
                        } else {
                            f64::NEG_INFINITY
                        }
                    },
                    space.lo[c],
                    space.hi[c],
                    golden_iters,
                    (p[c], val),
                );
                p[c] = xc;
                val = fc;
            }
            if val.is_finite() && (val - before).abs() <= 1e-10 * (1.0 + val.abs()) {
                break;
            }
        }
        if val.is_finite() {
            match &best {
                Some((_, bv)) if *bv >= val => {}
                _ => best = Some((p, val)),
            }
        }
    }

    best.ok_or_else(|| {
        MfboError::TrainingFailure(format!(
            "no restart of {restarts} produced a finite objective over {d} parameters"
        ))
    })
}
