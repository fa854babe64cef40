//! Lomax (Pareto type II) distribution primitives.
//!
//! Density `f(x) = αβ(1+βx)^(−α−1)` and cdf `F(x) = 1 − (1+βx)^(−α)` on
//! `x ≥ 0`. Powers are evaluated as `exp(−α·ln(1+βx))` so extreme shape
//! draws from the importance sampler neither overflow nor lose the tail.
//!
//! The two left-truncated expectations used by the EM E-step live here too.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape/scale pair of one Lomax population.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LomaxParams {
    alpha: f64,
    beta: f64,
}

impl LomaxParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "Lomax shape must be positive and finite, got {alpha}"
            )));
        }
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "Lomax scale must be positive and finite, got {beta}"
            )));
        }
        Ok(Self { alpha, beta })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn ln_pdf(&self, x: f64) -> Result<f64> {
        check_support(x)?;
        Ok(self.alpha.ln() + self.beta.ln() - (self.alpha + 1.0) * (self.beta * x).ln_1p())
    }

    pub fn pdf(&self, x: f64) -> Result<f64> {
        self.ln_pdf(x).map(f64::exp)
    }

    /// `ln(1 − F(x)) = −α ln(1+βx)`.
    pub fn ln_survival(&self, x: f64) -> Result<f64> {
        check_support(x)?;
        Ok(-self.alpha * (self.beta * x).ln_1p())
    }

    pub fn cdf(&self, x: f64) -> Result<f64> {
        // 1 − exp(s) computed as −expm1(s) keeps precision near x = 0.
        self.ln_survival(x).map(|s| -s.exp_m1())
    }

    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(0.0..1.0).contains(&u) {
            return Err(Error::Domain(format!("quantile level must lie in [0, 1), got {u}")));
        }
        Ok(self.quantile_unchecked(u))
    }

    fn quantile_unchecked(&self, u: f64) -> f64 {
        // ((1−u)^(−1/α) − 1)/β
        ((-(-u).ln_1p() / self.alpha).exp_m1()) / self.beta
    }

    /// One inverse-cdf draw.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        // random::<f64>() lies in [0, 1)
        self.quantile_unchecked(rng.random::<f64>())
    }

    /// `count` i.i.d. draws.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, count: usize) -> Vec<f64> {
        (0..count).map(|_| self.draw(rng)).collect()
    }

    pub fn mean(&self) -> Option<f64> {
        (self.alpha > 1.0).then(|| 1.0 / (self.beta * (self.alpha - 1.0)))
    }

    /// `E[ln(1+βZ) | Z > w_r] = ln(1+βw_r) + 1/α`.
    pub fn trunc_e1(&self, w_r: f64) -> Result<f64> {
        check_support(w_r)?;
        Ok(trunc_e1(self.alpha, self.beta, w_r))
    }

    /// `E[Z/(1+βZ) | Z > w_r] = (1+(α+1)βw_r) / (β(α+1)(1+βw_r))`.
    pub fn trunc_e2(&self, w_r: f64) -> Result<f64> {
        check_support(w_r)?;
        Ok(trunc_e2(self.alpha, self.beta, w_r))
    }
}

fn check_support(x: f64) -> Result<()> {
    if x >= 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("argument must be nonnegative, got {x}")))
    }
}

#[inline]
pub(crate) fn trunc_e1(alpha: f64, beta: f64, w_r: f64) -> f64 {
    (beta * w_r).ln_1p() + 1.0 / alpha
}

#[inline]
pub(crate) fn trunc_e2(alpha: f64, beta: f64, w_r: f64) -> f64 {
    let bw = beta * w_r;
    (1.0 + (alpha + 1.0) * bw) / (beta * (alpha + 1.0) * (1.0 + bw))
}
