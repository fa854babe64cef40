//! `jolo`: simulate, fit and summarize jointly type-II censored Lomax data.

mod report;

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use jolo_core::bayes::{credible_interval, draw_posterior, LossSpec, PriorHyper, DEFAULT_DRAWS};
use jolo_core::bootstrap::{bootstrap, BootstrapConfig, BootstrapReport, ResampleScheme};
use jolo_core::data::{self, ks_test, KsResult};
use jolo_core::em::{approx_ci, fit_em, observed_info};
use jolo_core::harness::{self, Cell, CellReport, ExperimentConfig, PriorEntry, PARAM_NAMES};
use jolo_core::likelihood::{default_init, fit_complete, fit_nr, loglik};
use jolo_core::{rng, CensoredSample, Error, FitResult, IntervalEstimate, LomaxParams, Psi, Result, SolverConfig};

use report::{num, opt, Table};

/// Priors used for the bladder-cancer analysis.
const DATA_PRIOR: PriorHyper =
    PriorHyper { a1: 110.0, b1: 10.0, c1: 2.0, d1: 200.0, a2: 40.0, b2: 10.0, c2: 1.0, d2: 300.0 };

#[derive(Parser)]
#[command(name = "jolo", version, about = "Inference for two Lomax populations under joint type-II censoring")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Text,
    Csv,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BootKind {
    P,
    T,
    Both,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Scheme {
    Pairs,
    Parametric,
}

#[derive(Args, Clone)]
struct Output {
    /// Output format.
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct Input {
    /// Dataset (`sample,value`) or censored sample (`index,w,nu`) CSV.
    #[arg(long)]
    data: PathBuf,
    /// Stopping rank; required for datasets, checked for censored samples.
    #[arg(long)]
    r: Option<usize>,
}

#[derive(Args, Clone, Copy)]
struct Seed {
    #[arg(long, env = "JOLO_SEED", default_value_t = 1)]
    seed: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a joint type-II censored sample.
    Simulate {
        #[arg(long)]
        m: usize,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        r: usize,
        /// alpha1,beta1,alpha2,beta2
        #[arg(long, default_value = "2,3,3,5")]
        psi: String,
        #[command(flatten)]
        seed: Seed,
        #[command(flatten)]
        output: Output,
    },
    /// EM estimates with normal-theory intervals.
    FitEm {
        #[command(flatten)]
        input: Input,
        #[arg(long, default_value_t = 0.95)]
        level: f64,
        #[arg(long, default_value_t = 5000)]
        max_iter: usize,
        #[command(flatten)]
        output: Output,
    },
    /// Newton-Raphson estimates on the profile likelihood.
    FitNr {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        output: Output,
    },
    /// Importance-sampling Bayes estimates and credible intervals.
    FitBayes {
        #[command(flatten)]
        input: Input,
        /// sel, linex:<nu> or gel:<kappa>; repeatable. Defaults to all five standard losses.
        #[arg(long)]
        loss: Vec<String>,
        /// JSON file with a1,b1,c1,d1,a2,b2,c2,d2.
        #[arg(long)]
        prior: Option<PathBuf>,
        /// Importance-sample size.
        #[arg(long, default_value_t = DEFAULT_DRAWS)]
        draws: usize,
        #[arg(long, default_value_t = 0.95)]
        level: f64,
        #[command(flatten)]
        seed: Seed,
        #[command(flatten)]
        output: Output,
    },
    /// Boot-p and Boot-t intervals around the EM estimate.
    Bootstrap {
        #[command(flatten)]
        input: Input,
        #[arg(long, value_enum, default_value = "both")]
        boot: BootKind,
        /// Bootstrap replicates D.
        #[arg(long, default_value_t = 1000)]
        reps: usize,
        #[arg(long, value_enum, default_value = "pairs")]
        scheme: Scheme,
        /// Keep replicates whose EM run stops without converging.
        #[arg(long)]
        allow_unconverged: bool,
        #[arg(long, default_value_t = 0.95)]
        level: f64,
        #[command(flatten)]
        seed: Seed,
        #[command(flatten)]
        output: Output,
    },
    /// Kolmogorov-Smirnov fit of each complete sample at its MLE.
    Ks {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        output: Output,
    },
    /// Run a Monte Carlo experiment.
    McRun {
        /// Experiment config JSON; defaults to the bundled design.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Prior schedule JSON replacing the config's.
        #[arg(long)]
        prior: Option<PathBuf>,
        /// Replications per cell.
        #[arg(long)]
        reps: Option<usize>,
        /// Restrict to cells `m,n,r`; repeatable.
        #[arg(long)]
        cell: Vec<String>,
        #[arg(long)]
        draws: Option<usize>,
        /// Also compute bootstrap intervals with this many replicates.
        #[arg(long)]
        boot_reps: Option<usize>,
        #[arg(long)]
        level: Option<f64>,
        /// Write the per-row CSV here as well.
        #[arg(long)]
        csv_out: Option<PathBuf>,
        #[arg(long, env = "JOLO_SEED")]
        seed: Option<u64>,
        #[command(flatten)]
        output: Output,
    },
}

fn usage(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn parse_psi(s: &str) -> Result<Psi> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse().map_err(|_| usage(format!("bad number `{t}` in --psi"))))
        .collect::<Result<_>>()?;
    let arr: [f64; 4] = v.try_into().map_err(|_| usage("--psi needs four comma-separated values"))?;
    Psi::from_array(arr)
}

fn parse_cell(s: &str) -> Result<Cell> {
    let v: Vec<usize> = s
        .split(',')
        .map(|t| t.trim().parse().map_err(|_| usage(format!("bad cell `{s}`"))))
        .collect::<Result<_>>()?;
    match v[..] {
        [m, n, r] => Ok(Cell { m, n, r }),
        _ => Err(usage(format!("cell must be m,n,r, got `{s}`"))),
    }
}

fn check_level(level: f64) -> Result<()> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(usage(format!("--level must lie in (0, 1), got {level}")))
    }
}

/// A loaded input: the censored sample and, for datasets, the raw samples.
struct Loaded {
    sample: CensoredSample,
    dataset: Option<data::Dataset>,
}

fn load(input: &Input) -> Result<Loaded> {
    let text = fs::read_to_string(&input.data)?;
    let first = text.lines().next().unwrap_or("");
    if first.split_whitespace().any(|t| t.starts_with("r=")) {
        let sample = data::parse_censored(&text)?;
        if let Some(r) = input.r {
            if r != sample.r() {
                return Err(usage(format!("--r {r} does not match the file's r={}", sample.r())));
            }
        }
        return Ok(Loaded { sample, dataset: None });
    }
    let d = data::parse_dataset(&text)?;
    let r = input.r.ok_or_else(|| usage("--r is required when --data is a two-sample dataset"))?;
    Ok(Loaded { sample: data::apply_joint_censoring(&d, r)?, dataset: Some(d) })
}

/// Complete-sample MLEs when the raw samples are available, else moment values.
fn initial_value(l: &Loaded) -> Psi {
    if let Some(d) = &l.dataset {
        if let (Ok(fx), Ok(fy)) = (fit_complete(&d.x), fit_complete(&d.y)) {
            if fx.converged && fy.converged {
                return Psi::new(fx.params.alpha(), fx.params.beta(), fy.params.alpha(), fy.params.beta())
                    .unwrap_or_else(|_| default_init(&l.sample));
            }
        }
    }
    default_init(&l.sample)
}

fn emit<T: Serialize>(value: &T, tables: impl FnOnce() -> Vec<Table>, output: &Output) -> Result<()> {
    let body = match output.format {
        Format::Json => serde_json::to_string_pretty(value)? + "\n",
        Format::Text => tables().iter().map(Table::text).collect::<Vec<_>>().join("\n"),
        Format::Csv => tables().iter().map(Table::csv).collect::<Vec<_>>().join("\n"),
    };
    write_out(body.as_bytes(), output)
}

fn write_out(bytes: &[u8], output: &Output) -> Result<()> {
    match &output.out {
        Some(p) => fs::write(p, bytes)?,
        None => std::io::stdout().write_all(bytes)?,
    }
    Ok(())
}

#[derive(Serialize)]
struct SampleSummary {
    m: usize,
    n: usize,
    r: usize,
    m_r: usize,
    n_r: usize,
    w_r: f64,
}

impl SampleSummary {
    fn of(s: &CensoredSample) -> Self {
        Self { m: s.m(), n: s.n(), r: s.r(), m_r: s.m_r(), n_r: s.n_r(), w_r: s.w_r() }
    }

    fn table(&self) -> Table {
        let mut t = Table::new("Sample", &["m", "n", "r", "m_r", "n_r", "w_r"]);
        t.row(vec![
            self.m.to_string(),
            self.n.to_string(),
            self.r.to_string(),
            self.m_r.to_string(),
            self.n_r.to_string(),
            num(self.w_r),
        ]);
        t
    }
}

fn fit_table(title: &str, fit: &FitResult) -> Table {
    let mut t = Table::new(
        format!(
            "{title} (converged: {}, iterations: {}, score sup-norm: {})",
            fit.converged,
            fit.iterations,
            num(fit.final_gradient_norm)
        ),
        &["parameter", "estimate"],
    );
    for (name, v) in PARAM_NAMES.iter().zip(fit.psi.to_array()) {
        t.row(vec![(*name).into(), num(v)]);
    }
    t
}

fn interval_table(title: &str, rows: &[(&str, &[IntervalEstimate; 4])]) -> Table {
    let mut t = Table::new(title, &["method", "parameter", "lower", "upper", "length"]);
    for (label, ivs) in rows {
        for (name, iv) in PARAM_NAMES.iter().zip(ivs.iter()) {
            t.row(vec![(*label).into(), (*name).into(), num(iv.lower), num(iv.upper), num(iv.length())]);
        }
    }
    t
}

fn simulate(m: usize, n: usize, r: usize, psi: &str, seed: u64, output: &Output) -> Result<()> {
    let psi = parse_psi(psi)?;
    let s = jolo_core::generate(&psi.x(), &psi.y(), m, n, r, &mut rng::stream(seed))?;
    if output.format == Format::Csv {
        let mut buf = Vec::new();
        data::write_censored(&s, &mut buf)?;
        return write_out(&buf, output);
    }
    #[derive(Serialize)]
    struct Sim<'a> {
        psi: Psi,
        seed: u64,
        summary: SampleSummary,
        sample: &'a CensoredSample,
    }
    let rep = Sim { psi, seed, summary: SampleSummary::of(&s), sample: &s };
    emit(
        &rep,
        || {
            let mut t = Table::new("Failures", &["index", "w", "population"]);
            for (i, (w, x)) in s.w().iter().zip(s.nu()).enumerate() {
                t.row(vec![(i + 1).to_string(), num(*w), if *x { "X" } else { "Y" }.into()]);
            }
            vec![rep.summary.table(), t]
        },
        output,
    )
}

fn fit_em_cmd(input: &Input, level: f64, max_iter: usize, output: &Output) -> Result<()> {
    check_level(level)?;
    let l = load(input)?;
    let init = initial_value(&l);
    let cfg = SolverConfig { max_iter, ..SolverConfig::em() };
    let fit = fit_em(&l.sample, &init, &cfg)?;
    let aci = observed_info(&fit.psi, &l.sample).and_then(|i| approx_ci(&fit, &i, level));
    #[derive(Serialize)]
    struct Rep {
        summary: SampleSummary,
        init: Psi,
        fit: FitResult,
        loglik: f64,
        level: f64,
        aci: Option<[IntervalEstimate; 4]>,
        aci_error: Option<String>,
    }
    let (aci, aci_error) = match aci {
        Ok(a) => (Some(a), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let rep = Rep {
        summary: SampleSummary::of(&l.sample),
        init,
        loglik: loglik(&fit.psi, &l.sample),
        fit,
        level,
        aci,
        aci_error,
    };
    emit(
        &rep,
        || {
            let mut out = vec![rep.summary.table(), fit_table("EM estimates", &rep.fit)];
            match (&rep.aci, &rep.aci_error) {
                (Some(a), _) => out.push(interval_table("Approximate confidence intervals", &[("ACI", a)])),
                (None, Some(e)) => out.push(Table::new(format!("ACI unavailable: {e}"), &[])),
                _ => {}
            }
            out
        },
        output,
    )
}

fn fit_nr_cmd(input: &Input, output: &Output) -> Result<()> {
    let l = load(input)?;
    let init = initial_value(&l);
    let fit = fit_nr(&l.sample, &init, &SolverConfig::newton())?;
    #[derive(Serialize)]
    struct Rep {
        summary: SampleSummary,
        fit: FitResult,
        loglik: f64,
    }
    let rep = Rep { summary: SampleSummary::of(&l.sample), loglik: loglik(&fit.psi, &l.sample), fit };
    emit(&rep, || vec![rep.summary.table(), fit_table("Newton-Raphson estimates", &rep.fit)], output)
}

#[derive(Serialize)]
struct LossEstimate {
    loss: LossSpec,
    estimate: [f64; 4],
}

#[allow(clippy::too_many_arguments)]
fn fit_bayes_cmd(
    input: &Input,
    losses: &[String],
    prior: Option<&Path>,
    draws: usize,
    level: f64,
    seed: u64,
    output: &Output,
) -> Result<()> {
    check_level(level)?;
    let l = load(input)?;
    let prior: PriorHyper = match prior {
        Some(p) => serde_json::from_str(&fs::read_to_string(p)?)?,
        None => DATA_PRIOR,
    };
    let losses: Vec<LossSpec> = if losses.is_empty() {
        LossSpec::standard_set()
    } else {
        losses.iter().map(|s| s.parse().map_err(|e: Error| usage(e.to_string()))).collect::<Result<_>>()?
    };
    let d = draw_posterior(&l.sample, &prior, draws, &mut rng::stream(seed))?;
    let estimates =
        losses.iter().map(|&loss| Ok(LossEstimate { loss, estimate: d.estimate_all(loss)? })).collect::<Result<Vec<_>>>()?;
    let mut ivs = Vec::new();
    for k in 0..4 {
        ivs.push(credible_interval(&d, |p| p.to_array()[k], level)?);
    }
    #[derive(Serialize)]
    struct Rep {
        summary: SampleSummary,
        prior: PriorHyper,
        draws: usize,
        seed: u64,
        effective_sample_size: f64,
        estimates: Vec<LossEstimate>,
        level: f64,
        credible: [IntervalEstimate; 4],
    }
    let rep = Rep {
        summary: SampleSummary::of(&l.sample),
        prior,
        draws,
        seed,
        effective_sample_size: d.effective_sample_size()?,
        estimates,
        level,
        credible: [ivs[0], ivs[1], ivs[2], ivs[3]],
    };
    emit(
        &rep,
        || {
            let mut t = Table::new(
                format!("Bayes estimates (T = {}, ESS = {})", rep.draws, num(rep.effective_sample_size)),
                &["loss", "alpha1", "beta1", "alpha2", "beta2"],
            );
            for e in &rep.estimates {
                let mut row = vec![e.loss.to_string()];
                row.extend(e.estimate.iter().map(|v| num(*v)));
                t.row(row);
            }
            vec![rep.summary.table(), t, interval_table("Credible intervals", &[("Bayes", &rep.credible)])]
        },
        output,
    )
}

#[allow(clippy::too_many_arguments)]
fn bootstrap_cmd(
    input: &Input,
    boot: BootKind,
    reps: usize,
    scheme: Scheme,
    allow_unconverged: bool,
    level: f64,
    seed: u64,
    output: &Output,
) -> Result<()> {
    check_level(level)?;
    let l = load(input)?;
    let init = initial_value(&l);
    let mut cfg = BootstrapConfig::new(reps, level, seed);
    cfg.scheme = match scheme {
        Scheme::Pairs => ResampleScheme::NonparametricPairs,
        Scheme::Parametric => ResampleScheme::Parametric,
    };
    cfg.require_convergence = !allow_unconverged;
    let rep: BootstrapReport =
        bootstrap(&l.sample, &init, &cfg, boot != BootKind::T, boot != BootKind::P)?;
    #[derive(Serialize)]
    struct Rep<'a> {
        summary: SampleSummary,
        config: BootstrapConfig,
        report: &'a BootstrapReport,
    }
    let out = Rep { summary: SampleSummary::of(&l.sample), config: cfg, report: &rep };
    emit(
        &out,
        || {
            let mut rows: Vec<(&str, &[IntervalEstimate; 4])> = Vec::new();
            if let Some(p) = &rep.boot_p {
                rows.push(("Boot-p", p));
            }
            if let Some(t) = &rep.boot_t {
                rows.push(("Boot-t", t));
            }
            vec![
                out.summary.table(),
                fit_table("EM estimates", &rep.estimate),
                interval_table(
                    &format!(
                        "Bootstrap intervals (D = {}, redraws p/t = {}/{})",
                        rep.replicates, rep.redraws_p, rep.redraws_t
                    ),
                    &rows,
                ),
            ]
        },
        output,
    )
}

#[derive(Serialize)]
struct KsRow {
    sample: &'static str,
    size: usize,
    alpha: f64,
    beta: f64,
    converged: bool,
    ks: KsResult,
}

fn ks_cmd(path: &Path, output: &Output) -> Result<()> {
    let d = data::ingest(path)?;
    let mut rows = Vec::new();
    for (label, xs) in [("X", &d.x), ("Y", &d.y)] {
        let fit = fit_complete(xs)?;
        let p: LomaxParams = fit.params;
        rows.push(KsRow {
            sample: label,
            size: xs.len(),
            alpha: p.alpha(),
            beta: p.beta(),
            converged: fit.converged,
            ks: ks_test(xs, &p)?,
        });
    }
    emit(
        &rows,
        || {
            let mut t = Table::new("Lomax MLEs and Kolmogorov-Smirnov tests", &["sample", "size", "alpha", "beta", "D", "p-value"]);
            for r in &rows {
                t.row(vec![
                    r.sample.into(),
                    r.size.to_string(),
                    num(r.alpha),
                    num(r.beta),
                    num(r.ks.statistic),
                    num(r.ks.p_value),
                ]);
            }
            vec![t]
        },
        output,
    )
}

#[allow(clippy::too_many_arguments)]
fn mc_run_cmd(
    config: Option<&Path>,
    prior: Option<&Path>,
    reps: Option<usize>,
    cells: &[String],
    draws: Option<usize>,
    boot_reps: Option<usize>,
    level: Option<f64>,
    csv_out: Option<&Path>,
    seed: Option<u64>,
    output: &Output,
) -> Result<()> {
    let mut cfg = match config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::design(1000, 1),
    };
    if let Some(p) = prior {
        let schedule: Vec<PriorEntry> = serde_json::from_str(&fs::read_to_string(p)?)?;
        cfg.prior_schedule = schedule;
    }
    if let Some(r) = reps {
        cfg.replications = r;
    }
    if !cells.is_empty() {
        cfg.grid = cells.iter().map(|c| parse_cell(c)).collect::<Result<_>>()?;
    }
    if let Some(t) = draws {
        cfg.draws = t;
    }
    if let Some(d) = boot_reps {
        let mut bc = BootstrapConfig::new(d, cfg.level, 0);
        bc.require_convergence = false;
        cfg.bootstrap = Some(bc);
    }
    if let Some(l) = level {
        check_level(l)?;
        cfg.level = l;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let reports: Vec<CellReport> = harness::run_experiment(&cfg)?;
    if let Some(p) = csv_out {
        harness::write_reports_csv(&reports, fs::File::create(p)?)?;
    }
    #[derive(Serialize)]
    struct Rep<'a> {
        config: &'a ExperimentConfig,
        cells: &'a [CellReport],
    }
    let rep = Rep { config: &cfg, cells: &reports };
    if output.format == Format::Csv {
        let mut buf = Vec::new();
        harness::write_reports_csv(&reports, &mut buf)?;
        return write_out(&buf, output);
    }
    emit(
        &rep,
        || {
            let mut out = Vec::new();
            for c in &reports {
                let Cell { m, n, r } = c.cell;
                let mut t = Table::new(
                    format!(
                        "(m, n, r) = ({m}, {n}, {r}), R = {}; EM not converged: {}, degenerate redraws: {}",
                        c.replications, c.diagnostics.em_nonconverged, c.diagnostics.degenerate_redraws
                    ),
                    &["method", "parameter", "Avg", "MSE", "risk", "CP", "IL"],
                );
                for e in &c.estimates {
                    t.row(vec![e.method.clone(), e.parameter.clone(), num(e.avg), num(e.mse), num(e.risk), String::new(), String::new()]);
                }
                for iv in &c.intervals {
                    t.row(vec![
                        iv.method.label().into(),
                        iv.parameter.clone(),
                        String::new(),
                        String::new(),
                        String::new(),
                        opt(Some(iv.cp)),
                        num(iv.il),
                    ]);
                }
                out.push(t);
            }
            out
        },
        output,
    )
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { m, n, r, psi, seed, output } => simulate(m, n, r, &psi, seed.seed, &output),
        Command::FitEm { input, level, max_iter, output } => fit_em_cmd(&input, level, max_iter, &output),
        Command::FitNr { input, output } => fit_nr_cmd(&input, &output),
        Command::FitBayes { input, loss, prior, draws, level, seed, output } => {
            fit_bayes_cmd(&input, &loss, prior.as_deref(), draws, level, seed.seed, &output)
        }
        Command::Bootstrap { input, boot, reps, scheme, allow_unconverged, level, seed, output } => {
            bootstrap_cmd(&input, boot, reps, scheme, allow_unconverged, level, seed.seed, &output)
        }
        Command::Ks { data, output } => ks_cmd(&data, &output),
        Command::McRun { config, prior, reps, cell, draws, boot_reps, level, csv_out, seed, output } => mc_run_cmd(
            config.as_deref(),
            prior.as_deref(),
            reps,
            &cell,
            draws,
            boot_reps,
            level,
            csv_out.as_deref(),
            seed,
            &output,
        ),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
