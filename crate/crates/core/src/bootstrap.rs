//! Percentile (Boot-p) and studentized (Boot-t) bootstrap intervals around
//! the EM estimate.
//!
//! Replicate `i` uses the child stream `(seed, i, attempt)`. A replicate that
//! fails (degenerate indicators, EM error, or for Boot-t an unusable
//! information matrix) is redrawn with the next attempt, so exactly `D`
//! estimates enter the quantiles and results do not depend on thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::censoring::{generate, separate_ties, CensoredSample};
use crate::em::{fit_em, standard_errors};
use crate::error::{Error, Result};
use crate::interval::{IntervalEstimate, IntervalMethod};
use crate::likelihood::{FitResult, Psi, SolverConfig};
use crate::rng;
use rand::Rng;

/// Attempts per replicate index before the run is abandoned.
const ATTEMPT_CAP: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ResampleScheme {
    /// Draw `r` pairs `(w, ν)` with replacement and keep `m`, `n`.
    NonparametricPairs,
    /// Simulate a fresh joint-censored sample from `ψ̂`.
    Parametric,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub level: f64,
    pub scheme: ResampleScheme,
    pub seed: u64,
    pub em: SolverConfig,
    /// Treat an EM fit that stops without converging as a failed replicate.
    pub require_convergence: bool,
}

impl BootstrapConfig {
    pub fn new(replicates: usize, level: f64, seed: u64) -> Self {
        Self {
            replicates,
            level,
            scheme: ResampleScheme::NonparametricPairs,
            seed,
            em: SolverConfig::em(),
            require_convergence: true,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.replicates < 100 {
            return Err(Error::InvalidParameter(format!(
                "bootstrap needs at least 100 replicates, got {}",
                self.replicates
            )));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::Domain(format!("level must lie in (0, 1), got {}", self.level)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapReport {
    pub estimate: FitResult,
    pub boot_p: Option<[IntervalEstimate; 4]>,
    pub boot_t: Option<[IntervalEstimate; 4]>,
    /// Failed attempts that were redrawn, per method.
    pub redraws_p: usize,
    pub redraws_t: usize,
    pub replicates: usize,
}

/// One bootstrap data set drawn around `s` (and `psi_hat` for the parametric scheme).
pub fn resample<R: Rng + ?Sized>(
    s: &CensoredSample,
    psi_hat: &Psi,
    scheme: ResampleScheme,
    rng: &mut R,
) -> Result<CensoredSample> {
    match scheme {
        ResampleScheme::NonparametricPairs => {
            let r = s.r();
            let mut pairs: Vec<(f64, bool, usize)> = if r == s.m() + s.n() {
                // Complete data: resample within each population so the counts stay m and n.
                let (xs, ys): (Vec<usize>, Vec<usize>) = (0..r).partition(|&j| s.nu()[j]);
                let mut out = Vec::with_capacity(r);
                for pool in [&xs, &ys] {
                    for _ in 0..pool.len() {
                        let j = pool[rng.random_range(0..pool.len())];
                        out.push((s.w()[j], s.nu()[j], out.len()));
                    }
                }
                out
            } else {
                (0..r)
                    .map(|k| {
                        let j = rng.random_range(0..r);
                        (s.w()[j], s.nu()[j], k)
                    })
                    .collect()
            };
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.2.cmp(&b.2)));
            let mut w: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            separate_ties(&mut w);
            CensoredSample::new(w, pairs.iter().map(|p| p.1).collect(), s.m(), s.n())
        }
        ResampleScheme::Parametric => generate(&psi_hat.x(), &psi_hat.y(), s.m(), s.n(), s.r(), rng),
    }
}

/// Index of the `ceil(D·q)`-th order statistic (0-based), exact when `D·q`
/// is integral.
pub fn order_index(d: usize, q: f64) -> usize {
    let x = d as f64 * q;
    let k = if (x - x.round()).abs() < 1e-9 { x.round() } else { x.ceil() };
    (k as usize).clamp(1, d) - 1
}

fn quantile_pair(mut v: Vec<f64>, level: f64) -> (f64, f64) {
    v.sort_by(f64::total_cmp);
    let a = (1.0 - level) / 2.0;
    (v[order_index(v.len(), a)], v[order_index(v.len(), 1.0 - a)])
}

struct Replicate {
    p: Option<(Psi, usize)>,
    t: Option<([f64; 4], usize)>,
}

fn run_replicate(
    i: usize,
    s: &CensoredSample,
    fit: &FitResult,
    se_hat: Option<&[f64; 4]>,
    cfg: &BootstrapConfig,
    want_p: bool,
) -> Result<Replicate> {
    let want_t = se_hat.is_some();
    let mut out = Replicate { p: None, t: None };
    for attempt in 0..ATTEMPT_CAP {
        if (!want_p || out.p.is_some()) && (!want_t || out.t.is_some()) {
            return Ok(out);
        }
        let mut g = rng::child(cfg.seed, &[i as u64, attempt as u64]);
        let Ok(b) = resample(s, &fit.psi, cfg.scheme, &mut g) else { continue };
        if !b.is_nondegenerate() {
            continue;
        }
        let Ok(f) = fit_em(&b, &fit.psi, &cfg.em) else { continue };
        if !f.psi.is_valid() || (cfg.require_convergence && !f.converged) {
            continue;
        }
        if want_p && out.p.is_none() {
            out.p = Some((f.psi, attempt));
        }
        if want_t && out.t.is_none() {
            if let Ok(se) = standard_errors(&f.psi, &b) {
                if se.iter().all(|v| *v > 0.0) {
                    let est = f.psi.to_array();
                    let hat = fit.psi.to_array();
                    out.t = Some((std::array::from_fn(|k| (est[k] - hat[k]) / se[k]), attempt));
                }
            }
        }
    }
    if (!want_p || out.p.is_some()) && (!want_t || out.t.is_some()) {
        Ok(out)
    } else {
        Err(Error::RedrawCapExceeded(ATTEMPT_CAP))
    }
}

/// Fit `s` by EM from `init`, then build the requested bootstrap intervals
/// from one shared set of replicate streams.
pub fn bootstrap(
    s: &CensoredSample,
    init: &Psi,
    cfg: &BootstrapConfig,
    want_p: bool,
    want_t: bool,
) -> Result<BootstrapReport> {
    cfg.validate()?;
    s.require_nondegenerate()?;
    let fit = fit_em(s, init, &cfg.em)?;
    if !fit.psi.is_valid() || (cfg.require_convergence && !fit.converged) {
        return Err(Error::EmFailure(format!(
            "EM on the original sample did not converge (score sup-norm {:.3e} after {} iterations)",
            fit.final_gradient_norm, fit.iterations
        )));
    }
    let se_hat = if want_t { Some(standard_errors(&fit.psi, s)?) } else { None };
    let reps: Vec<Replicate> = (0..cfg.replicates)
        .into_par_iter()
        .map(|i| run_replicate(i, s, &fit, se_hat.as_ref(), cfg, want_p))
        .collect::<Result<_>>()?;
    let d = cfg.replicates;
    let check = |failed: usize| {
        if failed > d {
            Err(Error::BootstrapFailure { failed, accepted: d })
        } else {
            Ok(failed)
        }
    };
    let hat = fit.psi.to_array();
    let (mut boot_p, mut redraws_p) = (None, 0);
    if want_p {
        redraws_p = check(reps.iter().map(|r| r.p.as_ref().map_or(0, |p| p.1)).sum())?;
        boot_p = Some(std::array::from_fn(|k| {
            let v = reps.iter().map(|r| r.p.as_ref().expect("filled").0.to_array()[k]).collect();
            let (lo, hi) = quantile_pair(v, cfg.level);
            IntervalEstimate::new(lo, hi, cfg.level, IntervalMethod::BootP)
        }));
    }
    let (mut boot_t, mut redraws_t) = (None, 0);
    if let Some(se) = se_hat {
        redraws_t = check(reps.iter().map(|r| r.t.as_ref().map_or(0, |t| t.1)).sum())?;
        boot_t = Some(std::array::from_fn(|k| {
            let v = reps.iter().map(|r| r.t.as_ref().expect("filled").0[k]).collect();
            let (lo, hi) = quantile_pair(v, cfg.level);
            IntervalEstimate::clamped_at_zero(
                hat[k] + lo * se[k],
                hat[k] + hi * se[k],
                cfg.level,
                IntervalMethod::BootT,
            )
        }));
    }
    Ok(BootstrapReport { estimate: fit, boot_p, boot_t, redraws_p, redraws_t, replicates: d })
}

pub fn boot_p(s: &CensoredSample, init: &Psi, cfg: &BootstrapConfig) -> Result<[IntervalEstimate; 4]> {
    Ok(bootstrap(s, init, cfg, true, false)?.boot_p.expect("requested"))
}

pub fn boot_t(s: &CensoredSample, init: &Psi, cfg: &BootstrapConfig) -> Result<[IntervalEstimate; 4]> {
    Ok(bootstrap(s, init, cfg, false, true)?.boot_t.expect("requested"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::likelihood::default_init;

    fn sample(seed: u64, m: usize, n: usize, r: usize) -> CensoredSample {
        let truth = Psi::new(2.0, 3.0, 3.0, 5.0).unwrap();
        let mut g = rng::stream(seed);
        loop {
            let s = generate(&truth.x(), &truth.y(), m, n, r, &mut g).unwrap();
            if s.is_nondegenerate() {
                return s;
            }
        }
    }

    fn loose(seed: u64) -> BootstrapConfig {
        let mut cfg = BootstrapConfig::new(100, 0.95, seed);
        cfg.require_convergence = false;
        cfg.em.max_iter = 200;
        cfg
    }

    #[test]
    fn order_statistic_indices() {
        assert_eq!(order_index(100, 0.025), 2);
        assert_eq!(order_index(100, 0.975), 97);
        assert_eq!(order_index(1000, 0.025), 24);
        assert_eq!(order_index(1000, 0.975), 974);
        assert_eq!(order_index(100, 0.0), 0);
        assert_eq!(order_index(100, 1.0), 99);
    }

    #[test]
    fn identical_replicates_give_zero_width() {
        let (lo, hi) = quantile_pair(vec![1.25; 100], 0.95);
        assert_eq!((lo, hi), (1.25, 1.25));
    }

    #[test]
    fn symmetric_statistics_give_symmetric_interval() {
        // five symmetric atoms with equal mass
        let v: Vec<f64> = (0..200).map(|i| (i % 5) as f64 - 2.0).collect();
        let (lo, hi) = quantile_pair(v, 0.9);
        assert!((lo + hi).abs() < 1e-12, "{lo} {hi}");
    }

    #[test]
    fn pairs_resample_keeps_sizes() {
        let s = sample(3, 20, 20, 15);
        let b = resample(&s, &default_init(&s), ResampleScheme::NonparametricPairs, &mut rng::stream(1)).unwrap();
        assert_eq!((b.m(), b.n(), b.r()), (20, 20, 15));
        assert!(b.w().iter().all(|w| s.w().iter().any(|x| (x - w).abs() <= 1e-12 * x)));
    }

    #[test]
    fn complete_data_resample_keeps_population_counts() {
        let s = sample(6, 12, 9, 21);
        for seed in 0..20 {
            let b = resample(&s, &default_init(&s), ResampleScheme::NonparametricPairs, &mut rng::stream(seed)).unwrap();
            assert_eq!((b.m_r(), b.n_r()), (12, 9));
        }
    }

    #[test]
    fn rejects_small_d() {
        let s = sample(3, 20, 20, 15);
        let cfg = BootstrapConfig { replicates: 50, ..loose(1) };
        assert!(bootstrap(&s, &default_init(&s), &cfg, true, false).is_err());
    }

    #[test]
    fn deterministic_and_brackets_estimate() {
        let s = sample(4, 30, 30, 40);
        let cfg = loose(9);
        let a = bootstrap(&s, &default_init(&s), &cfg, true, true).unwrap();
        let b = bootstrap(&s, &default_init(&s), &cfg, true, true).unwrap();
        assert_eq!(a, b);
        let p = a.boot_p.unwrap();
        let t = a.boot_t.unwrap();
        for k in 0..4 {
            assert!(p[k].lower <= p[k].upper && t[k].lower <= t[k].upper);
            assert!(p[k].lower >= 0.0);
            let ratio = p[k].length() / t[k].length();
            assert!(ratio > 0.02 && ratio < 50.0, "widths {} {}", p[k].length(), t[k].length());
        }
        // Same streams regardless of which methods were requested.
        assert_eq!(boot_p(&s, &default_init(&s), &cfg).unwrap(), p);
    }

    #[test]
    fn parametric_scheme_runs() {
        let s = sample(5, 30, 30, 40);
        let cfg = BootstrapConfig { scheme: ResampleScheme::Parametric, ..loose(2) };
        let p = boot_p(&s, &default_init(&s), &cfg).unwrap();
        assert!(p.iter().all(|iv| iv.method == IntervalMethod::BootP));
    }
}
