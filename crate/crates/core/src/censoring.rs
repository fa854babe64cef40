//! Joint type-II censoring: the observed sample, its generator, and the
//! exact distribution of the origin-indicator vector under equal scales.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lomax::LomaxParams;

/// Observed data of a joint type-II censored experiment.
///
/// `w` holds the `r` smallest pooled failure times in increasing order and
/// `nu[i]` is `true` when `w[i]` came from the X population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CensoredSample {
    w: Vec<f64>,
    nu: Vec<bool>,
    m: usize,
    n: usize,
}

impl CensoredSample {
    pub fn new(w: Vec<f64>, nu: Vec<bool>, m: usize, n: usize) -> Result<Self> {
        let r = w.len();
        if m == 0 || n == 0 {
            return Err(Error::InvalidParameter(format!(
                "sample sizes must be positive, got m={m}, n={n}"
            )));
        }
        if r == 0 || r > m + n {
            return Err(Error::InvalidRank { r, total: m + n });
        }
        if nu.len() != r {
            return Err(Error::InvalidParameter(format!(
                "indicator length {} does not match {} failure times",
                nu.len(),
                r
            )));
        }
        if let Some(i) = w.iter().position(|&x| !(x.is_finite() && x > 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "failure time {i} must be positive and finite, got {}",
                w[i]
            )));
        }
        if let Some(i) = w.windows(2).position(|p| p[1] <= p[0]) {
            return Err(Error::InvalidParameter(format!(
                "failure times must be strictly increasing (positions {i} and {})",
                i + 1
            )));
        }
        let m_r = nu.iter().filter(|&&v| v).count();
        if m_r > m || r - m_r > n {
            return Err(Error::InvalidParameter(format!(
                "indicator counts (m_r={m_r}, n_r={}) exceed sample sizes (m={m}, n={n})",
                r - m_r
            )));
        }
        Ok(Self { w, nu, m, n })
    }

    pub fn w(&self) -> &[f64] {
        &self.w
    }

    pub fn nu(&self) -> &[bool] {
        &self.nu
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn r(&self) -> usize {
        self.w.len()
    }

    /// Number of observed X failures.
    pub fn m_r(&self) -> usize {
        self.nu.iter().filter(|&&v| v).count()
    }

    /// Number of observed Y failures.
    pub fn n_r(&self) -> usize {
        self.r() - self.m_r()
    }

    /// The stopping time `w_r`.
    pub fn w_r(&self) -> f64 {
        self.w[self.w.len() - 1]
    }

    /// True when both populations contribute at least one failure.
    pub fn is_nondegenerate(&self) -> bool {
        let m_r = self.m_r();
        m_r != 0 && m_r != self.r()
    }

    pub fn require_nondegenerate(&self) -> Result<()> {
        if self.is_nondegenerate() {
            Ok(())
        } else {
            Err(Error::DegenerateIndicator { m_r: self.m_r(), r: self.r() })
        }
    }

    /// Failure times of one population with its censored count and `w_r`.
    pub(crate) fn population(&self, which: Population) -> PopData {
        let (total, from_x) = match which {
            Population::X => (self.m, true),
            Population::Y => (self.n, false),
        };
        let times: Vec<f64> =
            self.w.iter().zip(&self.nu).filter(|(_, &v)| v == from_x).map(|(&w, _)| w).collect();
        PopData { censored: total - times.len(), total, times, w_r: self.w_r() }
    }

    /// Pool two labelled samples, sort, and keep the `r` smallest.
    pub fn from_pooled(x: &[f64], y: &[f64], r: usize) -> Result<Self> {
        let (m, n) = (x.len(), y.len());
        if r == 0 || r > m + n {
            return Err(Error::InvalidRank { r, total: m + n });
        }
        let mut pooled: Vec<(f64, bool, usize)> = x
            .iter()
            .enumerate()
            .map(|(i, &v)| (v, true, i))
            .chain(y.iter().enumerate().map(|(i, &v)| (v, false, i)))
            .collect();
        // Exact ties: X before Y, then draw index.
        pooled.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)).then(a.2.cmp(&b.2)));
        pooled.truncate(r);
        let mut w: Vec<f64> = pooled.iter().map(|p| p.0).collect();
        let nu = pooled.iter().map(|p| p.1).collect();
        separate_ties(&mut w);
        Self::new(w, nu, m, n)
    }
}

/// Nudge exactly tied values upward by one ulp so `w` is strictly increasing.
pub(crate) fn separate_ties(w: &mut [f64]) {
    for i in 1..w.len() {
        if w[i] <= w[i - 1] {
            w[i] = w[i - 1].next_up();
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Population {
    X,
    Y,
}

/// One population's share of a joint sample.
///
/// A complete (uncensored) sample is the special case `censored == 0`.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct PopData {
    /// Observed failure times from this population.
    pub times: Vec<f64>,
    /// Units still on test at `w_r` (m − m_r or n − n_r).
    pub censored: usize,
    /// Population size (m or n).
    pub total: usize,
    pub w_r: f64,
}

impl PopData {
    pub fn complete(times: &[f64]) -> Self {
        PopData { times: times.to_vec(), censored: 0, total: times.len(), w_r: 0.0 }
    }

    pub fn observed(&self) -> usize {
        self.times.len()
    }
}

/// Simulate a joint type-II censored sample: `m` draws from `p1`, `n` from
/// `p2`, pooled and cut at the `r`-th failure.
pub fn generate<R: Rng + ?Sized>(
    p1: &LomaxParams,
    p2: &LomaxParams,
    m: usize,
    n: usize,
    r: usize,
    rng: &mut R,
) -> Result<CensoredSample> {
    if m == 0 || n == 0 {
        return Err(Error::InvalidParameter(format!(
            "sample sizes must be positive, got m={m}, n={n}"
        )));
    }
    if r == 0 || r > m + n {
        return Err(Error::InvalidRank { r, total: m + n });
    }
    let x = p1.sample(rng, m);
    let y = p2.sample(rng, n);
    CensoredSample::from_pooled(&x, &y, r)
}

/// Parameters of the indicator-vector law: shapes and sample sizes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeParams {
    pub alpha1: f64,
    pub alpha2: f64,
    pub m: usize,
    pub n: usize,
}

/// Largest `r` for which [`pmf_m`] enumerates.
pub const ENUMERATION_LIMIT: usize = 20;

/// `P(𝒱 = ν)` when both populations share the same scale.
pub fn pmf_nu(nu: &[bool], p: &SchemeParams) -> Result<f64> {
    let r = nu.len();
    if r == 0 || r > p.m + p.n {
        return Err(Error::InvalidRank { r, total: p.m + p.n });
    }
    if !(p.alpha1 > 0.0 && p.alpha2 > 0.0) {
        return Err(Error::InvalidParameter("shape parameters must be positive".into()));
    }
    let (a1, a2) = (p.alpha1, p.alpha2);
    let (mut mi, mut ni) = (0usize, 0usize);
    let mut log_p = 0.0;
    for &v in nu {
        // Hazard mass of the survivors before this failure.
        let denom = a1 * (p.m - mi) as f64 + a2 * (p.n - ni) as f64;
        if v {
            if mi == p.m {
                return Ok(0.0);
            }
            log_p += ((p.m - mi) as f64).ln() + a1.ln() - denom.ln();
            mi += 1;
        } else {
            if ni == p.n {
                return Ok(0.0);
            }
            log_p += ((p.n - ni) as f64).ln() + a2.ln() - denom.ln();
            ni += 1;
        }
    }
    Ok(log_p.exp())
}

/// `P(M_r = i)` by exhaustive enumeration over all indicator vectors.
pub fn pmf_m(i: usize, r: usize, p: &SchemeParams) -> Result<f64> {
    if r > ENUMERATION_LIMIT {
        return Err(Error::EnumerationTooLarge { r, limit: ENUMERATION_LIMIT });
    }
    if r == 0 || r > p.m + p.n {
        return Err(Error::InvalidRank { r, total: p.m + p.n });
    }
    if i > r {
        return Err(Error::Domain(format!("count {i} exceeds r={r}")));
    }
    let mut total = 0.0;
    let mut nu = vec![false; r];
    for mask in 0u32..(1u32 << r) {
        if mask.count_ones() as usize != i {
            continue;
        }
        for (j, v) in nu.iter_mut().enumerate() {
            *v = mask >> j & 1 == 1;
        }
        total += pmf_nu(&nu, p)?;
    }
    Ok(total)
}

/// Closed form of `P(M_r = 0)`.
pub fn pmf_m_none(r: usize, p: &SchemeParams) -> f64 {
    if r > p.n {
        return 0.0;
    }
    let (m, n) = (p.m as f64, p.n as f64);
    (1..=r)
        .map(|i| {
            let i = i as f64;
            (n - i + 1.0) * p.alpha2 / (m * p.alpha1 + p.alpha2 * (n - i + 1.0))
        })
        .product()
}

/// Closed form of `P(M_r = r)`.
pub fn pmf_m_all(r: usize, p: &SchemeParams) -> f64 {
    if r > p.m {
        return 0.0;
    }
    let (m, n) = (p.m as f64, p.n as f64);
    (1..=r)
        .map(|i| {
            let i = i as f64;
            (m - i + 1.0) * p.alpha1 / (p.alpha1 * (m - i + 1.0) + n * p.alpha2)
        })
        .product()
}
