//! Monte Carlo experiment engine: grids over `(m, n, r)`, per-replicate EM,
//! bootstrap and Bayes estimation, and Avg/MSE/CP/IL aggregation.
//!
//! Replicate `i` of cell `(m, n, r)` draws from the child stream
//! `(seed, m, n, r, i)`, and reports are aggregated in replicate order, so a
//! rerun with the same config reproduces every number bit for bit.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bayes::{credible_interval, draw_posterior, LossSpec, PriorHyper, DEFAULT_DRAWS};
use crate::bootstrap::{bootstrap, BootstrapConfig};
use crate::censoring::{generate, CensoredSample};
use crate::em::{approx_ci, fit_em, observed_info};
use crate::error::{Error, Result};
use crate::interval::{IntervalEstimate, IntervalMethod};
use crate::likelihood::{default_init, Psi, SolverConfig};
use crate::rng;

/// Degenerate samples allowed per replicate, as a multiple of one draw.
pub const REDRAW_CAP: usize = 100;

pub const PARAM_NAMES: [&str; 4] = ["alpha1", "beta1", "alpha2", "beta2"];

const DESIGN_PRIORS: &str = include_str!("../data/design_priors.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub m: usize,
    pub n: usize,
    pub r: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorEntry {
    pub m: usize,
    pub n: usize,
    pub r: usize,
    pub prior: PriorHyper,
}

/// Where EM starts on each simulated sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmStart {
    /// The true parameter of the experiment.
    #[default]
    Truth,
    /// Moment estimates from the sample.
    Data,
}

fn default_level() -> f64 {
    0.95
}

fn default_draws() -> usize {
    DEFAULT_DRAWS
}

fn default_em() -> SolverConfig {
    SolverConfig::em()
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub true_psi: Psi,
    pub grid: Vec<Cell>,
    pub replications: usize,
    #[serde(default)]
    pub prior_schedule: Vec<PriorEntry>,
    #[serde(default = "LossSpec::standard_set")]
    pub losses: Vec<LossSpec>,
    #[serde(default = "default_level")]
    pub level: f64,
    pub seed: u64,
    #[serde(default)]
    pub bootstrap: Option<BootstrapConfig>,
    #[serde(default = "default_draws")]
    pub draws: usize,
    #[serde(default = "default_em")]
    pub em: SolverConfig,
    #[serde(default)]
    pub em_start: EmStart,
    #[serde(default = "default_true")]
    pub bayes: bool,
}

/// The hyper-parameter schedule shipped with the crate.
pub fn design_priors() -> Vec<PriorEntry> {
    serde_json::from_str(DESIGN_PRIORS).expect("bundled prior schedule parses")
}

impl ExperimentConfig {
    /// The simulation design: `ψ = (2, 3, 3, 5)` over the default grid.
    pub fn design(replications: usize, seed: u64) -> Self {
        let prior_schedule = design_priors();
        Self {
            true_psi: Psi { a1: 2.0, b1: 3.0, a2: 3.0, b2: 5.0 },
            grid: prior_schedule.iter().map(|p| Cell { m: p.m, n: p.n, r: p.r }).collect(),
            replications,
            prior_schedule,
            losses: LossSpec::standard_set(),
            level: 0.95,
            seed,
            bootstrap: None,
            draws: DEFAULT_DRAWS,
            em: SolverConfig::em(),
            em_start: EmStart::Truth,
            bayes: true,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn prior_for(&self, cell: Cell) -> Option<PriorHyper> {
        self.prior_schedule.iter().find(|p| p.m == cell.m && p.n == cell.n && p.r == cell.r).map(|p| p.prior)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.true_psi.is_valid() {
            return Err(Error::Config(format!("invalid true parameter {:?}", self.true_psi)));
        }
        if self.replications == 0 {
            return Err(Error::Config("replications must be positive".into()));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::Config(format!("level must lie in (0, 1), got {}", self.level)));
        }
        for &c in &self.grid {
            if c.m == 0 || c.n == 0 || c.r == 0 || c.r > c.m + c.n {
                return Err(Error::Config(format!("invalid grid cell {c:?}")));
            }
            if self.bayes && self.prior_for(c).is_none() {
                return Err(Error::Config(format!("no prior entry for cell {c:?}")));
            }
        }
        for p in &self.prior_schedule {
            p.prior.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        if self.bayes && self.draws < crate::bayes::MIN_INTERVAL_DRAWS {
            return Err(Error::Config(format!("need at least {} draws", crate::bayes::MIN_INTERVAL_DRAWS)));
        }
        Ok(())
    }
}

/// Point-estimate summary for one method and parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub method: String,
    pub parameter: String,
    pub avg: f64,
    /// Mean squared error.
    pub mse: f64,
    /// Mean loss under the method's own loss function.
    pub risk: f64,
}

/// Interval summary for one method and parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalRow {
    pub method: IntervalMethod,
    pub parameter: String,
    /// Percentage of intervals containing the truth.
    pub cp: f64,
    /// Mean interval length.
    pub il: f64,
    /// Intervals that entered the summary.
    pub count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CellDiagnostics {
    pub degenerate_redraws: usize,
    pub em_nonconverged: usize,
    pub aci_failures: usize,
    pub bootstrap_failures: usize,
    pub min_ess: Option<f64>,
    pub mean_ess: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub cell: Cell,
    pub replications: usize,
    pub estimates: Vec<EstimateRow>,
    pub intervals: Vec<IntervalRow>,
    pub diagnostics: CellDiagnostics,
}

impl CellReport {
    pub fn estimate(&self, method: &str, parameter: usize) -> Option<&EstimateRow> {
        self.estimates.iter().find(|e| e.method == method && e.parameter == PARAM_NAMES[parameter])
    }

    pub fn interval(&self, method: IntervalMethod, parameter: usize) -> Option<&IntervalRow> {
        self.intervals.iter().find(|e| e.method == method && e.parameter == PARAM_NAMES[parameter])
    }
}

/// Average loss of `estimates` against `truth`.
pub fn mse_under_loss(estimates: &[f64], truth: f64, loss: LossSpec) -> Result<f64> {
    if estimates.is_empty() {
        return Err(Error::InvalidParameter("no estimates".into()));
    }
    let n = estimates.len() as f64;
    let total: f64 = match loss {
        LossSpec::Sel => estimates.iter().map(|e| (e - truth).powi(2)).sum(),
        LossSpec::Linex { nu } => estimates
            .iter()
            .map(|e| {
                let d = nu * (e - truth);
                d.exp_m1() - d
            })
            .sum(),
        LossSpec::Gel { kappa } => {
            if truth <= 0.0 || estimates.iter().any(|e| *e <= 0.0) {
                return Err(Error::Domain("GEL risk needs positive estimates and truth".into()));
            }
            estimates
                .iter()
                .map(|e| {
                    let lr = (e / truth).ln();
                    (kappa * lr).exp_m1() - kappa * lr
                })
                .sum()
        }
    };
    Ok(total / n)
}

/// Quadratic MSE by a single Welford pass.
pub fn streaming_mse(estimates: impl IntoIterator<Item = f64>, truth: f64) -> f64 {
    let (mut k, mut mean, mut m2) = (0.0, 0.0, 0.0);
    for x in estimates {
        k += 1.0;
        let d = x - mean;
        mean += d / k;
        m2 += d * (x - mean);
    }
    m2 / k + (mean - truth).powi(2)
}

/// Coverage percentage and mean length.
pub fn coverage(intervals: &[IntervalEstimate], truth: f64) -> Result<(f64, f64)> {
    if intervals.is_empty() {
        return Err(Error::InvalidParameter("no intervals".into()));
    }
    let n = intervals.len() as f64;
    let hits = intervals.iter().filter(|iv| iv.contains(truth)).count() as f64;
    let len = intervals.iter().map(IntervalEstimate::length).sum::<f64>() / n;
    Ok((100.0 * hits / n, len))
}

struct RepOutcome {
    redraws: usize,
    em: [f64; 4],
    em_converged: bool,
    aci: Option<[IntervalEstimate; 4]>,
    boot_p: Option<[IntervalEstimate; 4]>,
    boot_t: Option<[IntervalEstimate; 4]>,
    boot_failed: bool,
    /// Per loss, per parameter.
    bayes: Vec<[f64; 4]>,
    credible: Option<[IntervalEstimate; 4]>,
    ess: Option<f64>,
}

fn draw_nondegenerate<R: Rng + ?Sized>(cfg: &ExperimentConfig, cell: Cell, g: &mut R) -> Result<(CensoredSample, usize)> {
    let (x, y) = (cfg.true_psi.x(), cfg.true_psi.y());
    for redraws in 0..REDRAW_CAP {
        let s = generate(&x, &y, cell.m, cell.n, cell.r, g)?;
        if s.is_nondegenerate() {
            return Ok((s, redraws));
        }
    }
    Err(Error::RedrawCapExceeded(REDRAW_CAP))
}

fn run_replicate(cfg: &ExperimentConfig, cell: Cell, prior: Option<&PriorHyper>, i: usize) -> Result<RepOutcome> {
    let mut g = rng::child(cfg.seed, &[cell.m as u64, cell.n as u64, cell.r as u64, i as u64]);
    let (s, redraws) = draw_nondegenerate(cfg, cell, &mut g)?;
    let init = match cfg.em_start {
        EmStart::Truth => cfg.true_psi,
        EmStart::Data => default_init(&s),
    };
    let fit = fit_em(&s, &init, &cfg.em)?;
    let aci = observed_info(&fit.psi, &s).and_then(|info| approx_ci(&fit, &info, cfg.level)).ok();
    let boot_seed: u64 = g.random();
    let (mut boot_p, mut boot_t, mut boot_failed) = (None, None, false);
    if let Some(bc) = &cfg.bootstrap {
        let bc = BootstrapConfig { seed: boot_seed, level: cfg.level, em: cfg.em, ..*bc };
        match bootstrap(&s, &init, &bc, true, true) {
            Ok(rep) => {
                boot_p = rep.boot_p;
                boot_t = rep.boot_t;
            }
            Err(_) => boot_failed = true,
        }
    }
    let (mut bayes, mut credible, mut ess) = (Vec::new(), None, None);
    if let Some(prior) = prior {
        let d = draw_posterior(&s, prior, cfg.draws, &mut g)?;
        for &loss in &cfg.losses {
            bayes.push(d.estimate_all(loss)?);
        }
        let mut ivs = Vec::with_capacity(4);
        for k in 0..4 {
            ivs.push(credible_interval(&d, |p| p.to_array()[k], cfg.level)?);
        }
        credible = Some([ivs[0], ivs[1], ivs[2], ivs[3]]);
        ess = Some(d.effective_sample_size()?);
    }
    Ok(RepOutcome {
        redraws,
        em: fit.psi.to_array(),
        em_converged: fit.converged,
        aci,
        boot_p,
        boot_t,
        boot_failed,
        bayes,
        credible,
        ess,
    })
}

fn method_label(loss: LossSpec) -> String {
    match loss {
        LossSpec::Sel => "SEL".into(),
        LossSpec::Linex { nu } => format!("LINEX({nu})"),
        LossSpec::Gel { kappa } => format!("GEL({kappa})"),
    }
}

fn interval_rows(
    method: IntervalMethod,
    reps: &[RepOutcome],
    pick: impl Fn(&RepOutcome) -> Option<&[IntervalEstimate; 4]>,
    truth: &[f64; 4],
) -> Result<Vec<IntervalRow>> {
    let mut rows = Vec::new();
    for k in 0..4 {
        let ivs: Vec<IntervalEstimate> = reps.iter().filter_map(|r| pick(r).map(|a| a[k])).collect();
        if ivs.is_empty() {
            continue;
        }
        let (cp, il) = coverage(&ivs, truth[k])?;
        rows.push(IntervalRow { method, parameter: PARAM_NAMES[k].into(), cp, il, count: ivs.len() });
    }
    Ok(rows)
}

/// Run all replications of one grid cell.
pub fn run_cell(cfg: &ExperimentConfig, cell: Cell) -> Result<CellReport> {
    cfg.validate()?;
    let prior = if cfg.bayes {
        Some(cfg.prior_for(cell).ok_or_else(|| Error::Config(format!("no prior entry for cell {cell:?}")))?)
    } else {
        None
    };
    let reps: Vec<RepOutcome> = (0..cfg.replications)
        .into_par_iter()
        .map(|i| run_replicate(cfg, cell, prior.as_ref(), i))
        .collect::<Result<_>>()?;
    let truth = cfg.true_psi.to_array();
    let mut estimates = Vec::new();
    let mut push = |method: String, loss: LossSpec, values: &dyn Fn(usize) -> Vec<f64>| -> Result<()> {
        for (k, name) in PARAM_NAMES.iter().enumerate() {
            let v = values(k);
            let avg = v.iter().sum::<f64>() / v.len() as f64;
            estimates.push(EstimateRow {
                method: method.clone(),
                parameter: (*name).into(),
                avg,
                mse: mse_under_loss(&v, truth[k], LossSpec::Sel)?,
                risk: mse_under_loss(&v, truth[k], loss)?,
            });
        }
        Ok(())
    };
    push("EM".into(), LossSpec::Sel, &|k| reps.iter().map(|r| r.em[k]).collect())?;
    if prior.is_some() {
        for (j, &loss) in cfg.losses.iter().enumerate() {
            push(method_label(loss), loss, &|k| reps.iter().map(|r| r.bayes[j][k]).collect())?;
        }
    }
    let mut intervals = interval_rows(IntervalMethod::ACI, &reps, |r| r.aci.as_ref(), &truth)?;
    intervals.extend(interval_rows(IntervalMethod::BootP, &reps, |r| r.boot_p.as_ref(), &truth)?);
    intervals.extend(interval_rows(IntervalMethod::BootT, &reps, |r| r.boot_t.as_ref(), &truth)?);
    intervals.extend(interval_rows(IntervalMethod::Bayes, &reps, |r| r.credible.as_ref(), &truth)?);
    let ess: Vec<f64> = reps.iter().filter_map(|r| r.ess).collect();
    let diagnostics = CellDiagnostics {
        degenerate_redraws: reps.iter().map(|r| r.redraws).sum(),
        em_nonconverged: reps.iter().filter(|r| !r.em_converged).count(),
        aci_failures: reps.iter().filter(|r| r.aci.is_none()).count(),
        bootstrap_failures: reps.iter().filter(|r| r.boot_failed).count(),
        min_ess: ess.iter().copied().reduce(f64::min),
        mean_ess: (!ess.is_empty()).then(|| ess.iter().sum::<f64>() / ess.len() as f64),
    };
    Ok(CellReport { cell, replications: cfg.replications, estimates, intervals, diagnostics })
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<CellReport>> {
    cfg.grid.iter().map(|&c| run_cell(cfg, c)).collect()
}

#[derive(Serialize)]
struct CsvRow<'a> {
    m: usize,
    n: usize,
    r: usize,
    method: &'a str,
    parameter: &'a str,
    avg: Option<f64>,
    mse: Option<f64>,
    risk: Option<f64>,
    cp: Option<f64>,
    il: Option<f64>,
    count: Option<usize>,
}

/// One CSV row per cell × method × parameter.
pub fn write_reports_csv<W: Write>(reports: &[CellReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    for rep in reports {
        let Cell { m, n, r } = rep.cell;
        for e in &rep.estimates {
            w.serialize(CsvRow {
                m,
                n,
                r,
                method: &e.method,
                parameter: &e.parameter,
                avg: Some(e.avg),
                mse: Some(e.mse),
                risk: Some(e.risk),
                cp: None,
                il: None,
                count: Some(rep.replications),
            })
            .map_err(io)?;
        }
        for iv in &rep.intervals {
            w.serialize(CsvRow {
                m,
                n,
                r,
                method: iv.method.label(),
                parameter: &iv.parameter,
                avg: None,
                mse: None,
                risk: None,
                cp: Some(iv.cp),
                il: Some(iv.il),
                count: Some(iv.count),
            })
            .map_err(io)?;
        }
    }
    w.flush()?;
    Ok(())
}
