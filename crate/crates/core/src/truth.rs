//! Known k-monotone densities used as ground truth in simulations.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::mixture::{check_k, MixingMeasure};
use crate::poly::falling;

/// A density that is k-monotone for every `k`, or a finite Beta(1, k) mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Truth {
    /// The standard exponential density `e^{-x}`.
    Exponential,
    /// `sum_i w_i k (t_i - x)_+^{k-1} / t_i^k` with unit total weight.
    Mixture { k: usize, measure: MixingMeasure },
}

impl Truth {
    /// `g^{(j)}(x)` for `j = 0..=max_deriv` at `x > 0`. Mixture derivatives
    /// are right limits.
    pub fn derivatives(&self, x: f64, max_deriv: usize) -> Vec<f64> {
        match self {
            Truth::Exponential => {
                let e = (-x).exp();
                (0..=max_deriv).map(|j| if j % 2 == 0 { e } else { -e }).collect()
            }
            Truth::Mixture { k, measure } => {
                let k = *k;
                let mut out = vec![0.0; max_deriv + 1];
                for (&t, &w) in measure.atoms().iter().zip(measure.weights()) {
                    if x >= t {
                        continue;
                    }
                    for (j, o) in out.iter_mut().enumerate().take(k) {
                        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                        *o += w * sign * k as f64 * falling(k - 1, j) * (t - x).powi((k - 1 - j) as i32)
                            / t.powi(k as i32);
                    }
                }
                out
            }
        }
    }

    pub fn density(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        self.derivatives(x, 0)[0]
    }

    /// Distribution function of the density.
    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        match self {
            Truth::Exponential => -(-x).exp_m1(),
            Truth::Mixture { k, measure } => measure
                .atoms()
                .iter()
                .zip(measure.weights())
                .map(|(&t, &w)| {
                    w * if x >= t {
                        1.0
                    } else {
                        1.0 - (1.0 - x / t).powi(*k as i32)
                    }
                })
                .sum(),
        }
    }

    /// Distribution function of the mixing measure in the order-`k`
    /// representation. For the exponential this is the Gamma(k + 1) CDF.
    pub fn mixing_cdf(&self, k: usize, t: f64) -> Result<f64> {
        check_k(k)?;
        if !(t > 0.0) {
            return domain(format!("mixing CDF needs t > 0, got {t}"));
        }
        match self {
            Truth::Exponential => {
                let mut term = 1.0;
                let mut sum = 1.0;
                for j in 1..=k {
                    term *= t / j as f64;
                    sum += term;
                }
                Ok(1.0 - (-t).exp() * sum)
            }
            Truth::Mixture { k: own, measure } => {
                if *own != k {
                    return domain(format!("mixture truth has order {own}, asked for order {k}"));
                }
                Ok(measure.cdf(t))
            }
        }
    }

    /// Whether `(-1)^k g^{(k)}(x0) > 0`, the curvature condition the local
    /// asymptotics need.
    pub fn curvature_ok(&self, k: usize, x0: f64) -> bool {
        let d = self.derivatives(x0, k)[k];
        let sign = if k.is_multiple_of(2) { 1.0 } else { -1.0 };
        sign * d > 0.0
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Truth::Exponential => Exp1.sample(rng),
            Truth::Mixture { k, measure } => {
                let u: f64 = rng.random::<f64>() * measure.total_mass();
                let mut acc = 0.0;
                let mut t = *measure.atoms().last().expect("nonempty mixing measure");
                for (&a, &w) in measure.atoms().iter().zip(measure.weights()) {
                    acc += w;
                    if u < acc {
                        t = a;
                        break;
                    }
                }
                let v: f64 = rng.random();
                t * (1.0 - v.powf(1.0 / *k as f64))
            }
        }
    }

    /// `n` draws; values are nudged away from zero so that they form a
    /// valid [`crate::Sample`].
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.draw(rng).max(f64::MIN_POSITIVE)).collect()
    }
}
