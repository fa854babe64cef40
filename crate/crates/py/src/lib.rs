use std::collections::BTreeMap;

use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;

use jolo_core::bayes::{self, LossSpec, PriorHyper};
use jolo_core::bootstrap::{self as boot, BootstrapConfig, ResampleScheme};
use jolo_core::data::{self, Dataset};
use jolo_core::em;
use jolo_core::error::ErrorClass;
use jolo_core::likelihood::{self as lik, default_init};
use jolo_core::{rng, Error, FitResult, IntervalEstimate, Psi, SolverConfig};

fn to_py(e: Error) -> PyErr {
    match e.class() {
        ErrorClass::Numerical => PyArithmeticError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn psi_from(v: (f64, f64, f64, f64)) -> PyResult<Psi> {
    Psi::new(v.0, v.1, v.2, v.3).map_err(to_py)
}

fn tuple4(a: [f64; 4]) -> (f64, f64, f64, f64) {
    (a[0], a[1], a[2], a[3])
}

type Interval = (f64, f64);

fn bounds(ivs: &[IntervalEstimate; 4]) -> Vec<Interval> {
    ivs.iter().map(|iv| (iv.lower, iv.upper)).collect()
}

/// Lomax (Pareto II) distribution with shape `alpha` and scale `beta`.
#[pyclass(name = "LomaxParams", frozen, skip_from_py_object)]
#[derive(Clone, Copy)]
struct PyLomax(jolo_core::LomaxParams);

#[pymethods]
impl PyLomax {
    #[new]
    fn new(alpha: f64, beta: f64) -> PyResult<Self> {
        jolo_core::LomaxParams::new(alpha, beta).map(Self).map_err(to_py)
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.0.alpha()
    }

    #[getter]
    fn beta(&self) -> f64 {
        self.0.beta()
    }

    fn pdf(&self, x: f64) -> PyResult<f64> {
        self.0.pdf(x).map_err(to_py)
    }

    fn cdf(&self, x: f64) -> PyResult<f64> {
        self.0.cdf(x).map_err(to_py)
    }

    fn quantile(&self, u: f64) -> PyResult<f64> {
        self.0.quantile(u).map_err(to_py)
    }

    #[pyo3(signature = (size, seed = 1))]
    fn sample(&self, size: usize, seed: u64) -> Vec<f64> {
        self.0.sample(&mut rng::stream(seed), size)
    }

    fn __repr__(&self) -> String {
        format!("LomaxParams(alpha={}, beta={})", self.0.alpha(), self.0.beta())
    }
}

/// Jointly type-II censored sample: ordered failure times `w` and
/// population indicators `nu` (True for the first population).
#[pyclass(name = "CensoredSample", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PySample(jolo_core::CensoredSample);

#[pymethods]
impl PySample {
    #[new]
    fn new(w: Vec<f64>, nu: Vec<bool>, m: usize, n: usize) -> PyResult<Self> {
        jolo_core::CensoredSample::new(w, nu, m, n).map(Self).map_err(to_py)
    }

    /// Simulate from `psi = (alpha1, beta1, alpha2, beta2)`.
    #[staticmethod]
    #[pyo3(signature = (psi, m, n, r, seed = 1))]
    fn generate(psi: (f64, f64, f64, f64), m: usize, n: usize, r: usize, seed: u64) -> PyResult<Self> {
        let psi = psi_from(psi)?;
        jolo_core::generate(&psi.x(), &psi.y(), m, n, r, &mut rng::stream(seed)).map(Self).map_err(to_py)
    }

    /// Censor two complete samples at the `r`-th pooled failure.
    #[staticmethod]
    fn from_samples(x: Vec<f64>, y: Vec<f64>, r: usize) -> PyResult<Self> {
        let d = Dataset::new(x, y).map_err(to_py)?;
        data::apply_joint_censoring(&d, r).map(Self).map_err(to_py)
    }

    /// Read a censored-sample CSV (`# m= n= r=` header, `index,w,nu` rows).
    #[staticmethod]
    fn read_csv(path: &str) -> PyResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| to_py(e.into()))?;
        data::parse_censored(&text).map(Self).map_err(to_py)
    }

    fn to_csv(&self) -> PyResult<String> {
        let mut buf = Vec::new();
        data::write_censored(&self.0, &mut buf).map_err(to_py)?;
        Ok(String::from_utf8_lossy(&buf).into_owned())
    }

    #[getter]
    fn w(&self) -> Vec<f64> {
        self.0.w().to_vec()
    }

    #[getter]
    fn nu(&self) -> Vec<bool> {
        self.0.nu().to_vec()
    }

    #[getter]
    fn m(&self) -> usize {
        self.0.m()
    }

    #[getter]
    fn n(&self) -> usize {
        self.0.n()
    }

    #[getter]
    fn r(&self) -> usize {
        self.0.r()
    }

    #[getter]
    fn m_r(&self) -> usize {
        self.0.m_r()
    }

    #[getter]
    fn n_r(&self) -> usize {
        self.0.n_r()
    }

    fn loglik(&self, psi: (f64, f64, f64, f64)) -> PyResult<f64> {
        Ok(lik::loglik(&psi_from(psi)?, &self.0))
    }

    fn gradient(&self, psi: (f64, f64, f64, f64)) -> PyResult<(f64, f64, f64, f64)> {
        Ok(tuple4(lik::gradient(&psi_from(psi)?, &self.0)))
    }

    fn __len__(&self) -> usize {
        self.0.r()
    }

    fn __repr__(&self) -> String {
        format!(
            "CensoredSample(m={}, n={}, r={}, m_r={}, w_r={})",
            self.0.m(),
            self.0.n(),
            self.0.r(),
            self.0.m_r(),
            self.0.w_r()
        )
    }
}

/// Outcome of an iterative fit.
#[pyclass(name = "Fit", frozen)]
struct PyFit(FitResult);

#[pymethods]
impl PyFit {
    #[getter]
    fn psi(&self) -> (f64, f64, f64, f64) {
        tuple4(self.0.psi.to_array())
    }

    #[getter]
    fn converged(&self) -> bool {
        self.0.converged
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.0.iterations
    }

    #[getter]
    fn gradient_norm(&self) -> f64 {
        self.0.final_gradient_norm
    }

    #[getter]
    fn method(&self) -> String {
        format!("{:?}", self.0.method)
    }

    fn __repr__(&self) -> String {
        format!("Fit(psi={:?}, converged={}, iterations={})", self.psi(), self.0.converged, self.0.iterations)
    }
}

fn init_or_default(s: &PySample, init: Option<(f64, f64, f64, f64)>) -> PyResult<Psi> {
    match init {
        Some(v) => psi_from(v),
        None => Ok(default_init(&s.0)),
    }
}

/// EM estimate of `(alpha1, beta1, alpha2, beta2)`.
#[pyfunction]
#[pyo3(signature = (sample, init = None, max_iter = 5000, tol = 1e-8))]
fn fit_em(sample: &PySample, init: Option<(f64, f64, f64, f64)>, max_iter: usize, tol: f64) -> PyResult<PyFit> {
    let cfg = SolverConfig { max_iter, tol, ..SolverConfig::em() };
    em::fit_em(&sample.0, &init_or_default(sample, init)?, &cfg).map(PyFit).map_err(to_py)
}

/// Newton-Raphson estimate on the profile likelihood.
#[pyfunction]
#[pyo3(signature = (sample, init = None))]
fn fit_nr(sample: &PySample, init: Option<(f64, f64, f64, f64)>) -> PyResult<PyFit> {
    lik::fit_nr(&sample.0, &init_or_default(sample, init)?, &SolverConfig::newton()).map(PyFit).map_err(to_py)
}

/// Complete-sample MLE `(alpha, beta, converged)` of one population.
#[pyfunction]
fn fit_complete(x: Vec<f64>) -> PyResult<(f64, f64, bool)> {
    let f = lik::fit_complete(&x).map_err(to_py)?;
    Ok((f.params.alpha(), f.params.beta(), f.converged))
}

/// Normal-theory intervals from the observed information at `psi`.
#[pyfunction]
#[pyo3(signature = (sample, fit, level = 0.95))]
fn approx_ci(sample: &PySample, fit: &PyFit, level: f64) -> PyResult<Vec<Interval>> {
    let info = em::observed_info(&fit.0.psi, &sample.0).map_err(to_py)?;
    em::approx_ci(&fit.0, &info, level).map(|a| bounds(&a)).map_err(to_py)
}

/// Boot-p and Boot-t intervals; returns `{"estimate", "boot_p", "boot_t"}`.
#[pyfunction]
#[allow(clippy::too_many_arguments)]
#[pyo3(signature = (sample, replicates = 1000, level = 0.95, seed = 1, scheme = "pairs", require_convergence = true, init = None))]
fn bootstrap(
    py: Python<'_>,
    sample: &PySample,
    replicates: usize,
    level: f64,
    seed: u64,
    scheme: &str,
    require_convergence: bool,
    init: Option<(f64, f64, f64, f64)>,
) -> PyResult<Py<PyAny>> {
    let mut cfg = BootstrapConfig::new(replicates, level, seed);
    cfg.scheme = match scheme {
        "pairs" => ResampleScheme::NonparametricPairs,
        "parametric" => ResampleScheme::Parametric,
        other => return Err(PyValueError::new_err(format!("unknown scheme `{other}`"))),
    };
    cfg.require_convergence = require_convergence;
    let init = init_or_default(sample, init)?;
    let s = sample.0.clone();
    let rep = py.detach(move || boot::bootstrap(&s, &init, &cfg, true, true)).map_err(to_py)?;
    let out = pyo3::types::PyDict::new(py);
    out.set_item("estimate", tuple4(rep.estimate.psi.to_array()))?;
    out.set_item("boot_p", rep.boot_p.as_ref().map(bounds))?;
    out.set_item("boot_t", rep.boot_t.as_ref().map(bounds))?;
    out.set_item("redraws_p", rep.redraws_p)?;
    out.set_item("redraws_t", rep.redraws_t)?;
    Ok(out.into_any().unbind())
}

/// Gamma hyperparameters `(a1, b1, c1, d1, a2, b2, c2, d2)`; shape/rate for
/// `alpha1, beta1, alpha2, beta2` in that order.
fn prior_from(v: (f64, f64, f64, f64, f64, f64, f64, f64)) -> PyResult<PriorHyper> {
    let p = PriorHyper { a1: v.0, b1: v.1, c1: v.2, d1: v.3, a2: v.4, b2: v.5, c2: v.6, d2: v.7 };
    p.validate().map_err(to_py)?;
    Ok(p)
}

/// Importance-sampling Bayes estimates keyed by loss (`sel`, `linex:0.5`,
/// `gel:-0.5`, ...) plus `"credible"` intervals and `"ess"`.
#[pyfunction]
#[pyo3(signature = (sample, prior, draws = 10000, seed = 1, losses = None, level = 0.95))]
fn bayes_estimate(
    py: Python<'_>,
    sample: &PySample,
    prior: (f64, f64, f64, f64, f64, f64, f64, f64),
    draws: usize,
    seed: u64,
    losses: Option<Vec<String>>,
    level: f64,
) -> PyResult<Py<PyAny>> {
    let prior = prior_from(prior)?;
    let losses: Vec<LossSpec> = match losses {
        Some(v) => v.iter().map(|s| s.parse::<LossSpec>().map_err(to_py)).collect::<PyResult<_>>()?,
        None => LossSpec::standard_set(),
    };
    let d = bayes::draw_posterior(&sample.0, &prior, draws, &mut rng::stream(seed)).map_err(to_py)?;
    let mut est = BTreeMap::new();
    for loss in losses {
        est.insert(loss.to_string(), tuple4(d.estimate_all(loss).map_err(to_py)?));
    }
    let mut cred = Vec::with_capacity(4);
    for k in 0..4 {
        let iv = bayes::credible_interval(&d, |p| p.to_array()[k], level).map_err(to_py)?;
        cred.push((iv.lower, iv.upper));
    }
    let out = pyo3::types::PyDict::new(py);
    out.set_item("estimates", est)?;
    out.set_item("credible", cred)?;
    out.set_item("ess", d.effective_sample_size().map_err(to_py)?)?;
    Ok(out.into_any().unbind())
}

/// One-sample Kolmogorov-Smirnov test against a Lomax law: `(D, p_value)`.
#[pyfunction]
fn ks_test(x: Vec<f64>, params: &PyLomax) -> PyResult<(f64, f64)> {
    let r = data::ks_test(&x, &params.0).map_err(to_py)?;
    Ok((r.statistic, r.p_value))
}

/// Load a two-sample dataset CSV as `(x, y)`.
#[pyfunction]
fn read_dataset(path: &str) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let d = data::ingest(path).map_err(to_py)?;
    Ok((d.x, d.y))
}

#[pymodule]
fn jolo_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyLomax>()?;
    m.add_class::<PySample>()?;
    m.add_class::<PyFit>()?;
    m.add_function(wrap_pyfunction!(fit_em, m)?)?;
    m.add_function(wrap_pyfunction!(fit_nr, m)?)?;
    m.add_function(wrap_pyfunction!(fit_complete, m)?)?;
    m.add_function(wrap_pyfunction!(approx_ci, m)?)?;
    m.add_function(wrap_pyfunction!(bootstrap, m)?)?;
    m.add_function(wrap_pyfunction!(bayes_estimate, m)?)?;
    m.add_function(wrap_pyfunction!(ks_test, m)?)?;
    m.add_function(wrap_pyfunction!(read_dataset, m)?)?;
    Ok(())
}
