//! EM algorithm for the joint-censored MLE, the missing-information
//! (Louis) observed Fisher matrix, and normal-theory intervals.
//!
//! The `N − r` units still on test at `w_r` are the missing data. Their
//! conditional law is Lomax truncated on the left at `w_r`, so the E-step only
//! needs the two truncated expectations from [`crate::lomax`].

use nalgebra::{Matrix4, SMatrix};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::censoring::{CensoredSample, PopData, Population};
use crate::error::{Error, Result};
use crate::interval::{IntervalEstimate, IntervalMethod};
use crate::likelihood::{gradient, loglik, sup_norm, FitMethod, FitResult, Psi, SolverConfig};
use crate::lomax::{trunc_e1, trunc_e2};

/// Conditional expectations filled in by the E-step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EStepExpectations {
    pub e1_x: f64,
    pub e2_x: f64,
    pub e1_y: f64,
    pub e2_y: f64,
    pub n_missing_x: usize,
    pub n_missing_y: usize,
}

pub fn e_step(psi: &Psi, s: &CensoredSample) -> EStepExpectations {
    let w_r = s.w_r();
    EStepExpectations {
        e1_x: trunc_e1(psi.a1, psi.b1, w_r),
        e2_x: trunc_e2(psi.a1, psi.b1, w_r),
        e1_y: trunc_e1(psi.a2, psi.b2, w_r),
        e2_y: trunc_e2(psi.a2, psi.b2, w_r),
        n_missing_x: s.m() - s.m_r(),
        n_missing_y: s.n() - s.n_r(),
    }
}

/// One population's M-step. The shape is updated first; the scale update
/// then uses the fresh shape with the previous scale inside the sums.
fn pop_update(p: &PopData, alpha: f64, beta: f64) -> (f64, f64) {
    let total = p.total as f64;
    let k = p.censored as f64;
    let (mut log_sum, mut ratio_sum) = (0.0, 0.0);
    for &w in &p.times {
        log_sum += (beta * w).ln_1p();
        ratio_sum += w / (1.0 + beta * w);
    }
    let alpha_next = total / (log_sum + k * trunc_e1(alpha, beta, p.w_r));
    let beta_next =
        total / ((alpha_next + 1.0) * (ratio_sum + k * trunc_e2(alpha_next, beta, p.w_r)));
    (alpha_next, beta_next)
}

/// One EM iteration `ψ^k → ψ^{k+1}`.
pub fn em_step(psi: &Psi, s: &CensoredSample) -> Result<Psi> {
    s.require_nondegenerate()?;
    Ok(step_unchecked(psi, s))
}

fn step_unchecked(psi: &Psi, s: &CensoredSample) -> Psi {
    let x = pop_update(&s.population(Population::X), psi.a1, psi.b1);
    let y = pop_update(&s.population(Population::Y), psi.a2, psi.b2);
    Psi::from_pops(x, y)
}

fn max_relative_change(prev: &Psi, next: &Psi) -> f64 {
    prev.to_array()
        .iter()
        .zip(next.to_array())
        .map(|(a, b)| ((b - a) / a).abs())
        .fold(0.0, f64::max)
}

/// EM fit together with the observed-data log-likelihood after every step.
#[derive(Debug, Clone, PartialEq)]
pub struct EmTrace {
    pub fit: FitResult,
    /// `loglik[0]` is at the initial value.
    pub loglik: Vec<f64>,
}

/// Iterate EM until the largest relative parameter change is at most
/// `cfg.tol`. The fit is flagged converged only when, in addition, the score
/// sup-norm is at most `cfg.grad_tol`.
pub fn fit_em(s: &CensoredSample, init: &Psi, cfg: &SolverConfig) -> Result<FitResult> {
    run_em(s, init, cfg, false).map(|t| t.fit)
}

pub fn fit_em_traced(s: &CensoredSample, init: &Psi, cfg: &SolverConfig) -> Result<EmTrace> {
    run_em(s, init, cfg, true)
}

fn run_em(s: &CensoredSample, init: &Psi, cfg: &SolverConfig, trace: bool) -> Result<EmTrace> {
    s.require_nondegenerate()?;
    if !init.is_valid() {
        return Err(Error::InvalidParameter(format!("invalid EM starting point {init:?}")));
    }
    let mut path = Vec::new();
    if trace {
        path.push(loglik(init, s));
    }
    let mut psi = *init;
    let mut iterations = 0;
    let mut settled = false;
    while iterations < cfg.max_iter {
        let next = step_unchecked(&psi, s);
        iterations += 1;
        if !next.is_valid() {
            break;
        }
        let change = max_relative_change(&psi, &next);
        psi = next;
        if trace {
            path.push(loglik(&psi, s));
        }
        if change <= cfg.tol {
            settled = true;
            break;
        }
    }
    let norm = sup_norm(&gradient(&psi, s));
    let fit = FitResult {
        psi,
        converged: settled && norm <= cfg.grad_tol,
        iterations,
        final_gradient_norm: norm,
        method: FitMethod::EM,
    };
    Ok(EmTrace { fit, loglik: path })
}

/// Complete, missing, and observed information with the covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfoMatrices {
    pub complete: [[f64; 4]; 4],
    pub missing: [[f64; 4]; 4],
    pub observed: [[f64; 4]; 4],
    pub covariance: [[f64; 4]; 4],
}

impl InfoMatrices {
    pub fn variances(&self) -> [f64; 4] {
        std::array::from_fn(|i| self.covariance[i][i])
    }

    pub fn standard_errors(&self) -> [f64; 4] {
        self.variances().map(f64::sqrt)
    }

    /// Variances, rejecting negative or non-finite diagonal entries.
    pub fn checked_variances(&self) -> Result<[f64; 4]> {
        let var = self.variances();
        if var.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::SingularInformation);
        }
        Ok(var)
    }
}

/// Per-unit expected information `(αα, αβ, ββ)` of a Lomax observation
/// truncated on the left at `w_r` (`w_r = 0` is the untruncated case).
pub fn unit_information(alpha: f64, beta: f64, w_r: f64) -> [f64; 3] {
    let u = 1.0 + beta * w_r;
    [
        1.0 / (alpha * alpha),
        1.0 / (beta * (alpha + 1.0) * u),
        alpha / (beta * beta * (alpha + 2.0) * u * u),
    ]
}

fn block(count: usize, entries: [f64; 3]) -> [[f64; 2]; 2] {
    let c = count as f64;
    [[c * entries[0], c * entries[1]], [c * entries[1], c * entries[2]]]
}

fn assemble(x: [[f64; 2]; 2], y: [[f64; 2]; 2]) -> Matrix4<f64> {
    let mut out = Matrix4::zeros();
    for i in 0..2 {
        for j in 0..2 {
            out[(i, j)] = x[i][j];
            out[(i + 2, j + 2)] = y[i][j];
        }
    }
    out
}

fn to_rows(mat: &Matrix4<f64>) -> [[f64; 4]; 4] {
    std::array::from_fn(|i| std::array::from_fn(|j| mat[(i, j)]))
}

/// Observed Fisher information by the missing-information principle.
pub fn observed_info(psi: &Psi, s: &CensoredSample) -> Result<InfoMatrices> {
    if !psi.is_valid() {
        return Err(Error::InvalidParameter(format!("invalid psi {psi:?}")));
    }
    let w_r = s.w_r();
    let complete = assemble(
        block(s.m(), unit_information(psi.a1, psi.b1, 0.0)),
        block(s.n(), unit_information(psi.a2, psi.b2, 0.0)),
    );
    let missing = assemble(
        block(s.m() - s.m_r(), unit_information(psi.a1, psi.b1, w_r)),
        block(s.n() - s.n_r(), unit_information(psi.a2, psi.b2, w_r)),
    );
    let observed = complete - missing;
    let covariance = observed.try_inverse().ok_or(Error::SingularInformation)?;
    if covariance.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularInformation);
    }
    Ok(InfoMatrices {
        complete: to_rows(&complete),
        missing: to_rows(&missing),
        observed: to_rows(&observed),
        covariance: to_rows(&covariance),
    })
}

/// Two-sided standard normal critical value for `level`.
pub fn normal_critical(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Domain(format!("level must lie in (0, 1), got {level}")));
    }
    Ok(Normal::standard().inverse_cdf(1.0 - (1.0 - level) / 2.0))
}

/// `ψ̂ᵢ ± z·sd(ψ̂ᵢ)` with the lower bound clamped at zero.
pub fn approx_ci(fit: &FitResult, info: &InfoMatrices, level: f64) -> Result<[IntervalEstimate; 4]> {
    let z = normal_critical(level)?;
    // The Louis matrix combines expected complete information with the
    // observed missing part, so it is not guaranteed positive definite.
    let var = info.checked_variances()?;
    let est = fit.psi.to_array();
    Ok(std::array::from_fn(|i| {
        let half = z * var[i].sqrt();
        IntervalEstimate::clamped_at_zero(est[i] - half, est[i] + half, level, IntervalMethod::ACI)
    }))
}

/// Standard errors from the observed information at `psi`.
pub fn standard_errors(psi: &Psi, s: &CensoredSample) -> Result<[f64; 4]> {
    Ok(observed_info(psi, s)?.checked_variances()?.map(f64::sqrt))
}

/// Hessian-shaped helper for tests and diagnostics.
pub fn as_matrix(rows: &[[f64; 4]; 4]) -> SMatrix<f64, 4, 4> {
    Matrix4::from_fn(|i, j| rows[i][j])
}
