//! Bayesian estimation under independent gamma priors by importance
//! sampling.
//!
//! The posterior factorizes as `β₁ ~ Gamma(m_r+c₁, d₁)`,
//! `α₁ | β₁ ~ Gamma(m_r+a₁, K₁)` (and the same for population Y) times a
//! weight `H(ψ)`. Gammas use the rate convention throughout.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::censoring::{CensoredSample, PopData, Population};
use crate::error::{Error, Result};
use crate::interval::{IntervalEstimate, IntervalMethod};
use crate::likelihood::Psi;

/// Default importance-sample size.
pub const DEFAULT_DRAWS: usize = 10_000;

/// Minimum number of draws for a credible interval.
pub const MIN_INTERVAL_DRAWS: usize = 100;

/// Gamma hyper-parameters: `α₁ ~ G(a₁, b₁)`, `β₁ ~ G(c₁, d₁)`, and the
/// population-2 analogues.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorHyper {
    pub a1: f64,
    pub b1: f64,
    pub c1: f64,
    pub d1: f64,
    pub a2: f64,
    pub b2: f64,
    pub c2: f64,
    pub d2: f64,
}

impl PriorHyper {
    pub fn to_array(&self) -> [f64; 8] {
        [self.a1, self.b1, self.c1, self.d1, self.a2, self.b2, self.c2, self.d2]
    }

    pub fn validate(&self) -> Result<()> {
        if self.to_array().iter().all(|v| v.is_finite() && *v > 0.0) {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("prior hyper-parameters must be positive: {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LossSpec {
    Sel,
    Linex { nu: f64 },
    Gel { kappa: f64 },
}

impl LossSpec {
    pub fn linex(nu: f64) -> Result<Self> {
        if nu == 0.0 || !nu.is_finite() {
            return Err(Error::InvalidParameter(format!("LINEX ν must be nonzero, got {nu}")));
        }
        Ok(LossSpec::Linex { nu })
    }

    pub fn gel(kappa: f64) -> Result<Self> {
        if kappa == 0.0 || !kappa.is_finite() {
            return Err(Error::InvalidParameter(format!("GEL κ must be nonzero, got {kappa}")));
        }
        Ok(LossSpec::Gel { kappa })
    }

    /// SEL, LINEX(±0.5) and GEL(±0.5).
    pub fn standard_set() -> Vec<LossSpec> {
        vec![
            LossSpec::Sel,
            LossSpec::Linex { nu: -0.5 },
            LossSpec::Linex { nu: 0.5 },
            LossSpec::Gel { kappa: -0.5 },
            LossSpec::Gel { kappa: 0.5 },
        ]
    }
}

impl fmt::Display for LossSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LossSpec::Sel => write!(f, "sel"),
            LossSpec::Linex { nu } => write!(f, "linex:{nu}"),
            LossSpec::Gel { kappa } => write!(f, "gel:{kappa}"),
        }
    }
}

impl FromStr for LossSpec {
    type Err = Error;

    /// `sel`, `linex:<ν>` or `gel:<κ>`.
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let (kind, arg) = match lower.split_once(':') {
            Some((k, a)) => (k, Some(a)),
            None => (lower.as_str(), None),
        };
        let num = |a: Option<&str>| -> Result<f64> {
            a.ok_or_else(|| Error::InvalidParameter(format!("loss `{s}` needs a parameter")))?
                .parse()
                .map_err(|_| Error::InvalidParameter(format!("bad loss parameter in `{s}`")))
        };
        match kind {
            "sel" if arg.is_none() => Ok(LossSpec::Sel),
            "linex" => LossSpec::linex(num(arg)?),
            "gel" => LossSpec::gel(num(arg)?),
            _ => Err(Error::InvalidParameter(format!("unknown loss `{s}`; use sel, linex:<nu> or gel:<kappa>"))),
        }
    }
}

/// Importance sample: proposal draws with their log weights `ln H(ψⱼ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedDraws {
    pub draws: Vec<Psi>,
    pub log_weights: Vec<f64>,
}

fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.map(|x| (x - max).exp()).sum::<f64>().ln()
}

impl WeightedDraws {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    /// Weights scaled to sum to one.
    pub fn normalized_weights(&self) -> Result<Vec<f64>> {
        let total = log_sum_exp(self.log_weights.iter().copied());
        if !total.is_finite() {
            return Err(Error::ZeroWeights);
        }
        Ok(self.log_weights.iter().map(|lw| (lw - total).exp()).collect())
    }

    /// `(Σw)²/Σw²`.
    pub fn effective_sample_size(&self) -> Result<f64> {
        let w = self.normalized_weights()?;
        Ok(1.0 / w.iter().map(|v| v * v).sum::<f64>())
    }

    /// Bayes estimate of `target(ψ)` under `loss`.
    pub fn estimate(&self, loss: LossSpec, target: impl Fn(&Psi) -> f64) -> Result<f64> {
        estimate(self, loss, target)
    }

    pub fn estimate_all(&self, loss: LossSpec) -> Result<[f64; 4]> {
        let mut out = [0.0; 4];
        for (k, v) in out.iter_mut().enumerate() {
            *v = estimate(self, loss, |p| p.to_array()[k])?;
        }
        Ok(out)
    }
}

fn pop_sums(p: &PopData, beta: f64) -> f64 {
    p.times.iter().map(|&w| (beta * w).ln_1p()).sum()
}

/// `T` draws from the gamma proposal with their importance log weights.
pub fn draw_posterior<R: Rng + ?Sized>(
    s: &CensoredSample,
    prior: &PriorHyper,
    t: usize,
    rng: &mut R,
) -> Result<WeightedDraws> {
    prior.validate()?;
    if t == 0 {
        return Err(Error::InsufficientDraws { need: 1, got: 0 });
    }
    let xs = s.population(Population::X);
    let ys = s.population(Population::Y);
    let (m_r, n_r) = (s.m_r() as f64, s.n_r() as f64);
    let gamma = |shape: f64, rate: f64| {
        Gamma::new(shape, 1.0 / rate).map_err(|e| Error::InvalidParameter(format!("gamma({shape}, {rate}): {e}")))
    };
    let beta1 = gamma(m_r + prior.c1, prior.d1)?;
    let beta2 = gamma(n_r + prior.c2, prior.d2)?;
    let (shape1, shape2) = (m_r + prior.a1, n_r + prior.a2);
    let mut draws = Vec::with_capacity(t);
    let mut log_weights = Vec::with_capacity(t);
    for _ in 0..t {
        let b1: f64 = beta1.sample(rng);
        let b2: f64 = beta2.sample(rng);
        let (s1, s2) = (pop_sums(&xs, b1), pop_sums(&ys, b2));
        let k1 = prior.b1 + xs.censored as f64 * (b1 * xs.w_r).ln_1p() + s1;
        let k2 = prior.b2 + ys.censored as f64 * (b2 * ys.w_r).ln_1p() + s2;
        let a1: f64 = gamma(shape1, k1)?.sample(rng);
        let a2: f64 = gamma(shape2, k2)?.sample(rng);
        draws.push(Psi { a1, b1, a2, b2 });
        log_weights.push(-s1 - s2 - shape1 * k1.ln() - shape2 * k2.ln());
    }
    Ok(WeightedDraws { draws, log_weights })
}

/// Unnormalized log posterior density of `ψ`.
pub fn log_posterior(psi: &Psi, s: &CensoredSample, prior: &PriorHyper) -> f64 {
    let gamma_kernel = |x: f64, shape: f64, rate: f64| (shape - 1.0) * x.ln() - rate * x;
    crate::likelihood::loglik(psi, s)
        + gamma_kernel(psi.a1, prior.a1, prior.b1)
        + gamma_kernel(psi.b1, prior.c1, prior.d1)
        + gamma_kernel(psi.a2, prior.a2, prior.b2)
        + gamma_kernel(psi.b2, prior.c2, prior.d2)
}

/// Self-normalized Bayes estimate under SEL, LINEX or GEL.
pub fn estimate(d: &WeightedDraws, loss: LossSpec, target: impl Fn(&Psi) -> f64) -> Result<f64> {
    if d.is_empty() || d.draws.len() != d.log_weights.len() {
        return Err(Error::InsufficientDraws { need: 1, got: d.len() });
    }
    let lw = &d.log_weights;
    let norm = log_sum_exp(lw.iter().copied());
    if !norm.is_finite() {
        return Err(Error::ZeroWeights);
    }
    let t: Vec<f64> = d.draws.iter().map(&target).collect();
    match loss {
        LossSpec::Sel => {
            let max = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let (mut num, mut den) = (0.0, 0.0);
            for (v, l) in t.iter().zip(lw) {
                let w = (l - max).exp();
                num += v * w;
                den += w;
            }
            Ok(num / den)
        }
        LossSpec::Linex { nu } => {
            let top = log_sum_exp(t.iter().zip(lw).map(|(v, l)| -nu * v + l));
            Ok(-(top - norm) / nu)
        }
        LossSpec::Gel { kappa } => {
            if t.iter().any(|v| *v <= 0.0) {
                return Err(Error::Domain("GEL estimate needs a positive target".into()));
            }
            let top = log_sum_exp(t.iter().zip(lw).map(|(v, l)| -kappa * v.ln() + l));
            Ok((-(top - norm) / kappa).exp())
        }
    }
}

/// Shortest interval holding posterior mass `level`, scanning the sorted
/// draws with cumulative normalized weights.
pub fn credible_interval(d: &WeightedDraws, target: impl Fn(&Psi) -> f64, level: f64) -> Result<IntervalEstimate> {
    if d.len() < MIN_INTERVAL_DRAWS {
        return Err(Error::InsufficientDraws { need: MIN_INTERVAL_DRAWS, got: d.len() });
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Domain(format!("level must lie in (0, 1), got {level}")));
    }
    let w = d.normalized_weights()?;
    let mut pts: Vec<(f64, f64)> = d.draws.iter().map(&target).zip(w).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    // cum[i] = mass of pts[..i]
    let mut cum = Vec::with_capacity(pts.len() + 1);
    cum.push(0.0);
    for p in &pts {
        cum.push(cum.last().unwrap() + p.1);
    }
    // Guard against the total falling a hair short of `level` by round-off.
    let need = level.min(cum[pts.len()]) - 1e-12;
    let mut best: Option<(f64, f64)> = None;
    let mut j = 0;
    for i in 0..pts.len() {
        if j < i {
            j = i;
        }
        while j < pts.len() && cum[j + 1] - cum[i] < need {
            j += 1;
        }
        if j == pts.len() {
            break;
        }
        let (lo, hi) = (pts[i].0, pts[j].0);
        if best.is_none_or(|(a, b)| hi - lo < b - a) {
            best = Some((lo, hi));
        }
    }
    let (lo, hi) = best.ok_or(Error::ZeroWeights)?;
    Ok(IntervalEstimate::new(lo, hi, level, IntervalMethod::Bayes))
}

/// Weighted posterior median of `target`.
pub fn weighted_median(d: &WeightedDraws, target: impl Fn(&Psi) -> f64) -> Result<f64> {
    let w = d.normalized_weights()?;
    let mut pts: Vec<(f64, f64)> = d.draws.iter().map(&target).zip(w).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut acc = 0.0;
    for (v, w) in &pts {
        acc += w;
        if acc >= 0.5 {
            return Ok(*v);
        }
    }
    Ok(pts.last().map(|p| p.0).unwrap_or(f64::NAN))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::censoring::generate;
    use crate::rng;
    use proptest::prelude::*;
    use rand::Rng;

    fn prior() -> PriorHyper {
        PriorHyper { a1: 4.0, b1: 2.0, c1: 3.0, d1: 1.0, a2: 6.0, b2: 2.0, c2: 15.0, d2: 3.0 }
    }

    fn sample(seed: u64) -> CensoredSample {
        let truth = Psi::new(2.0, 3.0, 3.0, 5.0).unwrap();
        let mut g = rng::stream(seed);
        loop {
            let s = generate(&truth.x(), &truth.y(), 20, 20, 10, &mut g).unwrap();
            if s.is_nondegenerate() {
                return s;
            }
        }
    }

    fn constant_draws(c: f64, t: usize) -> WeightedDraws {
        WeightedDraws {
            draws: vec![Psi { a1: c, b1: c, a2: c, b2: c }; t],
            log_weights: (0..t).map(|i| -(i as f64) * 0.01).collect(),
        }
    }

    #[test]
    fn loss_parsing() {
        assert_eq!("sel".parse::<LossSpec>().unwrap(), LossSpec::Sel);
        assert_eq!("LINEX:-0.5".parse::<LossSpec>().unwrap(), LossSpec::Linex { nu: -0.5 });
        assert_eq!("gel:0.5".parse::<LossSpec>().unwrap(), LossSpec::Gel { kappa: 0.5 });
        assert!("gel:0".parse::<LossSpec>().is_err());
        assert!("linex".parse::<LossSpec>().is_err());
        assert!("mse".parse::<LossSpec>().is_err());
        for l in LossSpec::standard_set() {
            assert_eq!(l.to_string().parse::<LossSpec>().unwrap(), l);
        }
    }

    #[test]
    fn constant_draws_return_constant() {
        let d = constant_draws(2.5, 50);
        for l in LossSpec::standard_set() {
            let e = d.estimate(l, |p| p.a1).unwrap();
            assert!((e - 2.5).abs() < 1e-12, "{l}: {e}");
        }
    }

    #[test]
    fn deterministic_draws() {
        let s = sample(1);
        let a = draw_posterior(&s, &prior(), 500, &mut rng::stream(3)).unwrap();
        let b = draw_posterior(&s, &prior(), 500, &mut rng::stream(3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn all_x_failures_leave_beta2_at_prior() {
        // Every failure from X: β₂ draws come from Gamma(c₂, d₂).
        let s = CensoredSample::new(vec![0.1, 0.2, 0.3], vec![true; 3], 5, 5).unwrap();
        let p = prior();
        let d = draw_posterior(&s, &p, 40_000, &mut rng::stream(8)).unwrap();
        let mean = d.draws.iter().map(|x| x.b2).sum::<f64>() / d.len() as f64;
        let sd = (p.c2).sqrt() / p.d2 / (d.len() as f64).sqrt();
        assert!((mean - p.c2 / p.d2).abs() < 4.0 * sd, "{mean}");
    }

    #[test]
    fn linex_small_nu_matches_sel() {
        let d = draw_posterior(&sample(2), &prior(), 5000, &mut rng::stream(4)).unwrap();
        let sel = d.estimate(LossSpec::Sel, |p| p.a1).unwrap();
        let lx = d.estimate(LossSpec::Linex { nu: 1e-6 }, |p| p.a1).unwrap();
        assert!((sel - lx).abs() < 1e-4);
    }

    #[test]
    fn uniform_interval_length() {
        let mut g = rng::stream(10);
        let d = WeightedDraws {
            draws: (0..20_000).map(|_| Psi { a1: g.random::<f64>(), b1: 1.0, a2: 1.0, b2: 1.0 }).collect(),
            log_weights: vec![0.0; 20_000],
        };
        let iv = credible_interval(&d, |p| p.a1, 0.95).unwrap();
        assert!((iv.length() - 0.95).abs() < 0.01, "{iv:?}");
    }

    #[test]
    fn symmetric_interval_is_central() {
        let n = 10_001;
        let d = WeightedDraws {
            // symmetric unimodal: normal quantile grid via a smooth transform
            draws: (0..n)
                .map(|i| {
                    let u = (i as f64 + 0.5) / n as f64;
                    Psi { a1: (u / (1.0 - u)).ln(), b1: 1.0, a2: 1.0, b2: 1.0 }
                })
                .collect(),
            log_weights: vec![0.0; n],
        };
        let iv = credible_interval(&d, |p| p.a1, 0.9).unwrap();
        assert!((iv.lower + iv.upper).abs() < 1e-3, "{iv:?}");
        let q = (0.95f64 / 0.05).ln();
        assert!((iv.upper - q).abs() < 1e-2);
    }

    #[test]
    fn too_few_draws_for_interval() {
        assert!(credible_interval(&constant_draws(1.0, 99), |p| p.a1, 0.95).is_err());
    }

    #[test]
    fn zero_weights_rejected() {
        let d = WeightedDraws { draws: vec![Psi { a1: 1.0, b1: 1.0, a2: 1.0, b2: 1.0 }], log_weights: vec![f64::NEG_INFINITY] };
        assert!(matches!(d.estimate(LossSpec::Sel, |p| p.a1), Err(Error::ZeroWeights)));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn gel_minus_one_is_sel(seed in 0u64..1000, shift in -50.0f64..50.0) {
            let mut g = rng::stream(seed);
            let draws: Vec<Psi> = (0..200).map(|_| Psi { a1: 0.1 + 5.0 * g.random::<f64>(), b1: 1.0, a2: 1.0, b2: 1.0 }).collect();
            let log_weights = (0..200).map(|_| shift + 3.0 * g.random::<f64>()).collect();
            let d = WeightedDraws { draws, log_weights };
            let sel = d.estimate(LossSpec::Sel, |p| p.a1).unwrap();
            let gel = d.estimate(LossSpec::Gel { kappa: -1.0 }, |p| p.a1).unwrap();
            prop_assert!((sel - gel).abs() <= 1e-10 * sel.abs());
        }

        #[test]
        fn estimates_invariant_to_weight_scale(seed in 0u64..1000, c in -700.0f64..700.0) {
            let d = draw_posterior(&sample(seed % 7), &prior(), 300, &mut rng::stream(seed)).unwrap();
            let shifted = WeightedDraws { draws: d.draws.clone(), log_weights: d.log_weights.iter().map(|l| l + c).collect() };
            for l in LossSpec::standard_set() {
                let a = d.estimate(l, |p| p.b2).unwrap();
                let b = shifted.estimate(l, |p| p.b2).unwrap();
                prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "{} {} {}", l, a, b);
            }
        }

        #[test]
        fn linex_ordering_and_interval_contains_median(seed in 0u64..1000) {
            let d = draw_posterior(&sample(seed % 5), &prior(), 400, &mut rng::stream(seed)).unwrap();
            let sel = d.estimate(LossSpec::Sel, |p| p.a2).unwrap();
            let lo = d.estimate(LossSpec::Linex { nu: 0.5 }, |p| p.a2).unwrap();
            let hi = d.estimate(LossSpec::Linex { nu: -0.5 }, |p| p.a2).unwrap();
            prop_assert!(lo <= sel + 1e-12 && sel <= hi + 1e-12);
            let iv = credible_interval(&d, |p| p.a2, 0.9).unwrap();
            let med = weighted_median(&d, |p| p.a2).unwrap();
            prop_assert!(iv.contains(med));
        }
    }
}
