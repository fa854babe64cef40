//! Observed-data likelihood, normal equations, and the Newton–Raphson MLE.
//!
//! The log-likelihood separates across populations. For one population with
//! `d` observed failures `w_i`, `k` units censored at `w_r`, and
//! `S(β) = Σ ln(1+βw_i) + k ln(1+βw_r)`:
//!
//! ```text
//! l(α, β) = d(ln α + ln β) − (α+1) Σ ln(1+βw_i) − αk ln(1+βw_r)
//! ```
//!
//! Setting `∂l/∂α = 0` gives `α(β) = d / S(β)`, which reduces the MLE to a
//! one-dimensional root search in `β` per population.

use serde::{Deserialize, Serialize};

use crate::censoring::{CensoredSample, PopData, Population};
use crate::error::{Error, Result};
use crate::lomax::LomaxParams;

/// Parameter vector `ψ = (α₁, β₁, α₂, β₂)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Psi {
    pub a1: f64,
    pub b1: f64,
    pub a2: f64,
    pub b2: f64,
}

impl Psi {
    pub fn new(a1: f64, b1: f64, a2: f64, b2: f64) -> Result<Self> {
        let psi = Self { a1, b1, a2, b2 };
        if psi.to_array().iter().all(|v| v.is_finite() && *v > 0.0) {
            Ok(psi)
        } else {
            Err(Error::InvalidParameter(format!(
                "all components of psi must be positive and finite, got {psi:?}"
            )))
        }
    }

    pub fn from_array(v: [f64; 4]) -> Result<Self> {
        Self::new(v[0], v[1], v[2], v[3])
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.a1, self.b1, self.a2, self.b2]
    }

    pub fn is_valid(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite() && *v > 0.0)
    }

    pub fn x(&self) -> LomaxParams {
        LomaxParams::new(self.a1, self.b1).expect("validated psi")
    }

    pub fn y(&self) -> LomaxParams {
        LomaxParams::new(self.a2, self.b2).expect("validated psi")
    }

    pub(crate) fn pop(&self, which: Population) -> (f64, f64) {
        match which {
            Population::X => (self.a1, self.b1),
            Population::Y => (self.a2, self.b2),
        }
    }

    pub(crate) fn from_pops(x: (f64, f64), y: (f64, f64)) -> Self {
        Self { a1: x.0, b1: x.1, a2: y.0, b2: y.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FitMethod {
    NR,
    EM,
    CompleteMLE,
}

/// Outcome of an iterative fit. Non-convergence is reported, not raised.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub psi: Psi,
    pub converged: bool,
    pub iterations: usize,
    /// Sup-norm of the score at `psi`.
    pub final_gradient_norm: f64,
    pub method: FitMethod,
}

/// Stopping rule for the iterative solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Newton: score tolerance. EM: relative parameter change.
    pub tol: f64,
    pub max_iter: usize,
    /// Score sup-norm a fit must reach to be flagged converged.
    pub grad_tol: f64,
}

impl SolverConfig {
    pub fn newton() -> Self {
        Self { tol: 1e-8, max_iter: 200, grad_tol: 1e-8 }
    }

    pub fn em() -> Self {
        Self { tol: 1e-8, max_iter: 5000, grad_tol: 1e-4 }
    }
}

/// Search interval for the profile scale.
pub const BETA_BRACKET: (f64, f64) = (1e-8, 1e8);

// --- per-population kernels -------------------------------------------------

pub(crate) fn pop_loglik(p: &PopData, alpha: f64, beta: f64) -> f64 {
    let d = p.observed() as f64;
    let obs: f64 = p.times.iter().map(|&w| (beta * w).ln_1p()).sum();
    let cens = p.censored as f64 * (beta * p.w_r).ln_1p();
    d * (alpha.ln() + beta.ln()) - (alpha + 1.0) * obs - alpha * cens
}

pub(crate) fn pop_gradient(p: &PopData, alpha: f64, beta: f64) -> (f64, f64) {
    let d = p.observed() as f64;
    let k = p.censored as f64;
    let (mut log_sum, mut ratio_sum) = (0.0, 0.0);
    for &w in &p.times {
        log_sum += (beta * w).ln_1p();
        ratio_sum += w / (1.0 + beta * w);
    }
    let da = d / alpha - log_sum - k * (beta * p.w_r).ln_1p();
    let db = d / beta - (alpha + 1.0) * ratio_sum - alpha * k * p.w_r / (1.0 + beta * p.w_r);
    (da, db)
}

/// `S(β) = Σ ln(1+βw_i) + k ln(1+βw_r)`.
fn pop_log_mass(p: &PopData, beta: f64) -> f64 {
    p.times.iter().map(|&w| (beta * w).ln_1p()).sum::<f64>()
        + p.censored as f64 * (beta * p.w_r).ln_1p()
}

pub(crate) fn pop_profile_alpha(p: &PopData, beta: f64) -> f64 {
    p.observed() as f64 / pop_log_mass(p, beta)
}

/// Profile score `g(β) = ∂l/∂β` at `α = α(β)` and its derivative.
fn pop_profile_score(p: &PopData, beta: f64) -> (f64, f64) {
    let d = p.observed() as f64;
    let k = p.censored as f64;
    let (mut s, mut a, mut a_prime) = (0.0, 0.0, 0.0);
    for &w in &p.times {
        let u = 1.0 + beta * w;
        s += (beta * w).ln_1p();
        a += w / u;
        a_prime -= (w / u) * (w / u);
    }
    let u_r = 1.0 + beta * p.w_r;
    let b = p.w_r / u_r;
    s += k * (beta * p.w_r).ln_1p();
    let s1 = a + k * b;
    let s2 = a_prime - k * b * b;
    let alpha = d / s;
    let alpha_prime = -d * s1 / (s * s);
    let g = d / beta - a - alpha * s1;
    let g_prime = -d / (beta * beta) - a_prime - alpha_prime * s1 - alpha * s2;
    (g, g_prime)
}

/// Result of the safeguarded 1-D solve.
struct ProfileRoot {
    beta: f64,
    converged: bool,
    iterations: usize,
}

/// Safeguarded Newton on the profile score with log-scale bisection inside
/// `BETA_BRACKET`.
fn solve_profile(p: &PopData, init_beta: f64, cfg: &SolverConfig) -> ProfileRoot {
    let (mut lo, mut hi) = BETA_BRACKET;
    let g_lo = pop_profile_score(p, lo).0;
    let g_hi = pop_profile_score(p, hi).0;
    let init = if init_beta.is_finite() && init_beta > 0.0 { init_beta } else { 1.0 };
    // The score is positive left of a maximizer and negative right of it.
    if !(g_lo > 0.0 && g_hi < 0.0) {
        let beta = if g_lo <= 0.0 { lo } else { hi };
        return ProfileRoot { beta, converged: false, iterations: 0 };
    }
    let mut x = init.clamp(lo, hi);
    for it in 1..=cfg.max_iter {
        let (g, gp) = pop_profile_score(p, x);
        if !g.is_finite() {
            return ProfileRoot { beta: x, converged: false, iterations: it };
        }
        if g.abs() <= cfg.tol {
            return ProfileRoot { beta: x, converged: true, iterations: it };
        }
        if g > 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let newton = x - g / gp;
        let next = if gp < 0.0 && newton > lo && newton < hi {
            newton
        } else {
            (lo * hi).sqrt()
        };
        if (hi - lo) <= 4.0 * f64::EPSILON * hi || next == x {
            let converged = pop_profile_score(p, next).0.abs() <= cfg.tol;
            return ProfileRoot { beta: next, converged, iterations: it };
        }
        x = next;
    }
    ProfileRoot { beta: x, converged: false, iterations: cfg.max_iter }
}

// --- public API -------------------------------------------------------------

/// Observed-data log-likelihood without the combinatorial constant.
pub fn loglik(psi: &Psi, s: &CensoredSample) -> f64 {
    [Population::X, Population::Y]
        .into_iter()
        .map(|which| {
            let (a, b) = psi.pop(which);
            pop_loglik(&s.population(which), a, b)
        })
        .sum()
}

/// Normal equations `(∂l/∂α₁, ∂l/∂β₁, ∂l/∂α₂, ∂l/∂β₂)`.
pub fn gradient(psi: &Psi, s: &CensoredSample) -> [f64; 4] {
    let gx = pop_gradient(&s.population(Population::X), psi.a1, psi.b1);
    let gy = pop_gradient(&s.population(Population::Y), psi.a2, psi.b2);
    [gx.0, gx.1, gy.0, gy.1]
}

pub fn sup_norm(v: &[f64; 4]) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

/// Closed-form conditional shape MLEs `(α₁(β₁), α₂(β₂))`.
pub fn profile_alpha(beta1: f64, beta2: f64, s: &CensoredSample) -> Result<(f64, f64)> {
    s.require_nondegenerate()?;
    if !(beta1 > 0.0 && beta2 > 0.0) {
        return Err(Error::InvalidParameter("scales must be positive".into()));
    }
    Ok((
        pop_profile_alpha(&s.population(Population::X), beta1),
        pop_profile_alpha(&s.population(Population::Y), beta2),
    ))
}

/// Newton–Raphson MLE via the two decoupled profile equations.
pub fn fit_nr(s: &CensoredSample, init: &Psi, cfg: &SolverConfig) -> Result<FitResult> {
    s.require_nondegenerate()?;
    let rx = solve_profile(&s.population(Population::X), init.b1, cfg);
    let ry = solve_profile(&s.population(Population::Y), init.b2, cfg);
    let (a1, a2) = profile_alpha(rx.beta, ry.beta, s)?;
    let psi = Psi { a1, b1: rx.beta, a2, b2: ry.beta };
    let norm = if psi.is_valid() { sup_norm(&gradient(&psi, s)) } else { f64::INFINITY };
    Ok(FitResult {
        psi,
        converged: rx.converged && ry.converged && norm <= cfg.grad_tol,
        iterations: rx.iterations.max(ry.iterations),
        final_gradient_norm: norm,
        method: FitMethod::NR,
    })
}

/// Complete-sample Lomax MLE `(α̂, β̂)` of one population.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompleteFit {
    pub params: LomaxParams,
    pub converged: bool,
    pub iterations: usize,
    pub final_gradient_norm: f64,
    pub loglik: f64,
}

/// Uncensored single-population MLE, profiling `α` out.
pub fn fit_complete(x: &[f64]) -> Result<CompleteFit> {
    if let Some(v) = x.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        return Err(Error::InvalidParameter(format!("observations must be positive, got {v}")));
    }
    let first = x.first().copied().unwrap_or(0.0);
    if x.len() < 2 || x.iter().all(|&v| v == first) {
        return Err(Error::InvalidParameter(
            "complete-sample fit needs at least two distinct observations".into(),
        ));
    }
    let pop = PopData::complete(x);
    let cfg = SolverConfig::newton();
    let init = moment_init(x).map(|p| p.beta()).unwrap_or(1.0);
    let root = solve_profile(&pop, init, &cfg);
    let beta = root.beta;
    let alpha = pop_profile_alpha(&pop, beta);
    let (ga, gb) = pop_gradient(&pop, alpha, beta);
    let norm = ga.abs().max(gb.abs());
    Ok(CompleteFit {
        params: LomaxParams::new(alpha, beta)?,
        converged: root.converged && norm <= cfg.grad_tol,
        iterations: root.iterations,
        final_gradient_norm: norm,
        loglik: pop_loglik(&pop, alpha, beta),
    })
}

/// Complete-sample log-likelihood of one population.
pub fn complete_loglik(p: &LomaxParams, x: &[f64]) -> f64 {
    pop_loglik(&PopData::complete(x), p.alpha(), p.beta())
}

/// Complete-sample score `(∂/∂α, ∂/∂β)` of one population.
pub fn complete_gradient(p: &LomaxParams, x: &[f64]) -> (f64, f64) {
    pop_gradient(&PopData::complete(x), p.alpha(), p.beta())
}

/// Method-of-moments Lomax fit; `None` when the coefficient of variation is
/// at most one (no Lomax with finite variance matches).
pub fn moment_init(x: &[f64]) -> Option<LomaxParams> {
    if x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let cv2 = var / (mean * mean);
    if !(cv2 > 1.0) {
        return None;
    }
    let alpha = 2.0 * cv2 / (cv2 - 1.0);
    LomaxParams::new(alpha, 1.0 / (mean * (alpha - 1.0))).ok()
}

/// Default starting point: moments of each population's observed failures,
/// falling back to `(1, 1, 1, 1)`.
pub fn default_init(s: &CensoredSample) -> Psi {
    let fit = |which| moment_init(&s.population(which).times).map(|p| (p.alpha(), p.beta()));
    match (fit(Population::X), fit(Population::Y)) {
        (Some(x), Some(y)) => Psi::from_pops(x, y),
        _ => Psi { a1: 1.0, b1: 1.0, a2: 1.0, b2: 1.0 },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::censoring::generate;
    use crate::rng;
    use crate::testutil::central_diff;
    use rand::Rng;

    fn psi(a1: f64, b1: f64, a2: f64, b2: f64) -> Psi {
        Psi::new(a1, b1, a2, b2).unwrap()
    }

    fn simulated(seed: u64, m: usize, n: usize, r: usize) -> CensoredSample {
        let truth = psi(2.0, 3.0, 3.0, 5.0);
        let mut rng = rng::stream(seed);
        loop {
            let s = generate(&truth.x(), &truth.y(), m, n, r, &mut rng).unwrap();
            if s.is_nondegenerate() {
                return s;
            }
        }
    }

    /// Term-by-term evaluation written directly from the likelihood formula.
    fn loglik_by_hand(p: &Psi, s: &CensoredSample) -> f64 {
        let (m, n) = (s.m() as f64, s.n() as f64);
        let (mr, nr) = (s.m_r() as f64, s.n_r() as f64);
        let wr = s.w_r();
        let mut l = mr * (p.a1.ln() + p.b1.ln()) + nr * (p.a2.ln() + p.b2.ln());
        for (&w, &v) in s.w().iter().zip(s.nu()) {
            if v {
                l -= (p.a1 + 1.0) * (1.0 + p.b1 * w).ln();
            } else {
                l -= (p.a2 + 1.0) * (1.0 + p.b2 * w).ln();
            }
        }
        l - p.a1 * (m - mr) * (1.0 + p.b1 * wr).ln() - p.a2 * (n - nr) * (1.0 + p.b2 * wr).ln()
    }

    #[test]
    fn psi_validation() {
        assert!(Psi::new(1.0, 1.0, 1.0, 0.0).is_err());
        assert!(Psi::new(1.0, f64::INFINITY, 1.0, 1.0).is_err());
    }

    #[test]
    fn loglik_single_observation() {
        let s = CensoredSample::new(vec![1.0], vec![true], 1, 1).unwrap();
        // m_r=1: ln1+ln1 − 2·ln2; Y fully censored at w_r=1: −1·1·ln2.
        let expect = -2.0 * 2f64.ln() - 2f64.ln();
        let got = loglik(&psi(1.0, 1.0, 1.0, 1.0), &s);
        assert!((got - expect).abs() < 1e-15, "{got}");
        assert!((got - loglik_by_hand(&psi(1.0, 1.0, 1.0, 1.0), &s)).abs() < 1e-15);
    }

    #[test]
    fn loglik_matches_hand_evaluation() {
        let s = simulated(4, 20, 20, 13);
        let p = psi(1.3, 0.7, 2.2, 4.1);
        assert!((loglik(&p, &s) - loglik_by_hand(&p, &s)).abs() < 1e-10);
    }

    #[test]
    fn shape_shift_without_y_failures_touches_only_censored_term() {
        let s = CensoredSample::new(vec![0.1, 0.3, 0.4], vec![true; 3], 5, 4).unwrap();
        let p = psi(2.0, 3.0, 3.0, 5.0);
        let shifted = psi(2.0, 3.0, 3.5, 5.0);
        let delta = loglik(&shifted, &s) - loglik(&p, &s);
        let expect = -0.5 * 4.0 * (1.0 + 5.0 * 0.4f64).ln();
        assert!((delta - expect).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = rng::stream(77);
        for trial in 0..20 {
            let m = rng.random_range(3..30);
            let n = rng.random_range(3..30);
            let r = rng.random_range(2..=m + n);
            let s = simulated(1000 + trial, m, n, r);
            let p = psi(
                rng.random_range(0.3..5.0),
                rng.random_range(0.3..8.0),
                rng.random_range(0.3..5.0),
                rng.random_range(0.3..8.0),
            );
            let g = gradient(&p, &s);
            let f = |v: &[f64; 4]| loglik(&Psi::from_array(*v).unwrap(), &s);
            for i in 0..4 {
                let fd = central_diff(f, &p.to_array(), i);
                let rel = (g[i] - fd).abs() / g[i].abs().max(1.0);
                assert!(rel < 1e-6, "trial {trial} coord {i}: {} vs {fd}", g[i]);
            }
        }
    }

    #[test]
    fn alpha_score_tends_to_count_over_shape_as_scale_vanishes() {
        let s = simulated(5, 10, 10, 12);
        let g = gradient(&psi(2.0, 1e-12, 3.0, 5.0), &s);
        assert!((g[0] - s.m_r() as f64 / 2.0).abs() < 1e-9);
    }

    #[test]
    fn profile_alpha_single_failure() {
        // ν=(1, 0): the X term has one observation and m−1 censored units.
        let s = CensoredSample::new(vec![0.5, 0.9], vec![true, false], 4, 3).unwrap();
        let (a1, _) = profile_alpha(2.0, 1.0, &s).unwrap();
        let expect = 1.0 / ((1.0 + 2.0 * 0.5f64).ln() + 3.0 * (1.0 + 2.0 * 0.9f64).ln());
        assert!((a1 - expect).abs() < 1e-15);
        // With r=1 the formula collapses to 1/(m ln(1+βw₁)); that case is
        // degenerate for the joint fit, so check the population kernel.
        let pop = PopData { times: vec![0.5], censored: 3, total: 4, w_r: 0.5 };
        let one = pop_profile_alpha(&pop, 2.0);
        assert!((one - 1.0 / (4.0 * 2f64.ln())).abs() < 1e-15);
    }

    #[test]
    fn profile_alpha_rejects_degenerate() {
        let s = CensoredSample::new(vec![0.5, 0.9], vec![false, false], 4, 3).unwrap();
        assert!(matches!(profile_alpha(1.0, 1.0, &s), Err(Error::DegenerateIndicator { .. })));
        assert!(matches!(
            fit_nr(&s, &psi(1.0, 1.0, 1.0, 1.0), &SolverConfig::newton()),
            Err(Error::DegenerateIndicator { .. })
        ));
    }

    #[test]
    fn profile_alpha_zeroes_shape_scores() {
        let s = simulated(8, 15, 15, 17);
        let mut rng = rng::stream(3);
        for _ in 0..20 {
            let (b1, b2) = (rng.random_range(0.01..50.0), rng.random_range(0.01..50.0));
            let (a1, a2) = profile_alpha(b1, b2, &s).unwrap();
            let g = gradient(&psi(a1, b1, a2, b2), &s);
            let scale_x = s.m_r() as f64 / a1;
            let scale_y = s.n_r() as f64 / a2;
            assert!(g[0].abs() <= 1e-12 * scale_x, "{}", g[0]);
            assert!(g[2].abs() <= 1e-12 * scale_y, "{}", g[2]);
        }
    }

    #[test]
    fn profile_score_derivative_matches_finite_difference() {
        let s = simulated(9, 20, 20, 25);
        let pop = s.population(Population::X);
        for &b in &[0.05, 0.7, 3.0, 40.0] {
            let (_, gp) = pop_profile_score(&pop, b);
            // The score is a small difference of O(d/β) terms; keep h wide.
            let h = 1e-3 * b;
            let fd = (pop_profile_score(&pop, b + h).0 - pop_profile_score(&pop, b - h).0) / (2.0 * h);
            assert!(((gp - fd) / gp).abs() < 1e-4, "b={b}: {gp} vs {fd}");
        }
    }

    #[test]
    fn nr_converged_fit_is_stationary() {
        let s = simulated(2024, 40, 40, 40);
        let fit = fit_nr(&s, &default_init(&s), &SolverConfig::newton()).unwrap();
        if fit.converged {
            assert!(fit.final_gradient_norm < 1e-8);
            assert!(sup_norm(&gradient(&fit.psi, &s)) < 1e-8);
        }
    }

    #[test]
    fn nr_on_complete_sample_equals_complete_fits() {
        let truth = psi(2.0, 3.0, 3.0, 5.0);
        let mut rng = rng::stream(31);
        // Draw until both complete-sample MLEs exist in the interior.
        let (x, y, fx, fy) = loop {
            let x = truth.x().sample(&mut rng, 60);
            let y = truth.y().sample(&mut rng, 50);
            let (fx, fy) = (fit_complete(&x).unwrap(), fit_complete(&y).unwrap());
            if fx.converged && fy.converged {
                break (x, y, fx, fy);
            }
        };
        let s = CensoredSample::from_pooled(&x, &y, 110).unwrap();
        let fit = fit_nr(&s, &default_init(&s), &SolverConfig::newton()).unwrap();
        assert!(fit.converged);
        let got = fit.psi.to_array();
        let want = [fx.params.alpha(), fx.params.beta(), fy.params.alpha(), fy.params.beta()];
        for i in 0..4 {
            assert!((got[i] - want[i]).abs() <= 1e-8 * want[i].max(1.0), "{got:?} vs {want:?}");
        }
    }

    #[test]
    fn nr_adversarial_init_does_not_panic() {
        for seed in 0..20 {
            let s = simulated(seed, 20, 20, 10);
            let fit = fit_nr(&s, &psi(1.0, 1e3, 1.0, 1e3), &SolverConfig::newton()).unwrap();
            if fit.converged {
                assert!(fit.final_gradient_norm <= 1e-8);
            }
        }
    }

    #[test]
    fn nr_reports_nonexistent_root_as_unconverged() {
        // Failure times evenly spread with no tail: the profile score has no
        // interior root, so the likelihood is maximized at the exponential
        // boundary β → 0.
        let w: Vec<f64> = (1..=12).map(|i| i as f64).collect();
        let nu = (0..12).map(|i| i % 2 == 0).collect();
        let s = CensoredSample::new(w, nu, 6, 6).unwrap();
        let fit = fit_nr(&s, &psi(1.0, 1e3, 1.0, 1e3), &SolverConfig::newton()).unwrap();
        assert!(!fit.converged);
    }

    #[test]
    fn complete_fit_is_stationary() {
        let x = psi(2.0, 3.0, 3.0, 5.0).x().sample(&mut rng::stream(12), 500);
        let fit = fit_complete(&x).unwrap();
        assert!(fit.converged);
        let (ga, gb) = complete_gradient(&fit.params, &x);
        assert!(ga.abs() < 1e-6 && gb.abs() < 1e-6);
    }

    #[test]
    fn complete_fit_rejects_bad_input() {
        assert!(fit_complete(&[1.0]).is_err());
        assert!(fit_complete(&[2.0, 2.0, 2.0]).is_err());
        assert!(fit_complete(&[2.0, -1.0]).is_err());
    }
}
