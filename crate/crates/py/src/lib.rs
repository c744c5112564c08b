use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use stopsum::em::{em_fit as fit, EmConfig, PlanShape};
use stopsum::exit::*;
use stopsum::sampling::*;
use stopsum::sim::{sim_exit, sim_sampling, verify_tilting_identity, IdentityReport, IdentityTarget, SimResult};
use stopsum::MixedExpStep;

fn err(e: stopsum::Error) -> PyErr {
    if e.is_usage() {
        PyValueError::new_err(e.to_string())
    } else {
        PyArithmeticError::new_err(e.to_string())
    }
}

/// Step law: `Exp(theta1)` upward with probability `p`, else `-Exp(theta2)`.
#[pyclass(name = "MixedExpStep", module = "stopsum", frozen, from_py_object)]
#[derive(Clone)]
struct Step(MixedExpStep);

#[pymethods]
impl Step {
    #[new]
    fn new(p: f64, theta1: f64, theta2: f64) -> PyResult<Self> {
        MixedExpStep::new(p, theta1, theta2).map(Step).map_err(err)
    }

    #[getter]
    fn p(&self) -> f64 {
        self.0.p
    }

    #[getter]
    fn theta1(&self) -> f64 {
        self.0.theta1
    }

    #[getter]
    fn theta2(&self) -> f64 {
        self.0.theta2
    }

    fn mean(&self) -> f64 {
        self.0.mean()
    }

    fn mgf(&self, w: f64) -> PyResult<f64> {
        self.0.mgf(&w).map_err(err)
    }

    /// Nonzero root of `E(e^{wZ}) = 1` (zero without drift).
    fn w_star(&self) -> f64 {
        self.0.w_star()
    }

    /// Root of `u E(e^{wZ}) = 1` on the branch through `w*` at `u = 1`.
    fn w_u(&self, u: f64) -> PyResult<f64> {
        w_u_point(&self.0, u).map_err(err)
    }

    /// The step law under the measure tilted by `w`.
    fn tilt(&self, w: f64) -> PyResult<Step> {
        Ok(Step(self.0.tilt(w).map_err(err)?.as_step()))
    }

    fn __repr__(&self) -> String {
        format!("MixedExpStep(p={}, theta1={}, theta2={})", self.0.p, self.0.theta1, self.0.theta2)
    }
}

fn sim_dict<'py>(py: Python<'py>, r: &SimResult) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("t", r.samples.iter().map(|s| s.t).collect::<Vec<_>>())?;
    d.set_item("s", r.samples.iter().map(|s| s.s).collect::<Vec<_>>())?;
    d.set_item("censored", r.samples.iter().map(|s| s.censored).collect::<Vec<_>>())?;
    d.set_item("seed", r.seed)?;
    d.set_item("n_runs", r.n_runs)?;
    d.set_item("truncation_horizon", r.truncation_horizon)?;
    d.set_item("rng", &r.rng)?;
    Ok(d)
}

fn report_dict<'py>(py: Python<'py>, r: &IdentityReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("u", r.u)?;
    d.set_item("w", r.w)?;
    d.set_item("mgf", r.mgf)?;
    d.set_item("lhs", (r.lhs.mean, r.lhs.se))?;
    d.set_item("rhs", (r.rhs.mean, r.rhs.se))?;
    d.set_item("z_score", r.z_score)?;
    d.set_item("wald", (r.wald.mean, r.wald.se))?;
    d.set_item("wald_z", r.wald_z)?;
    d.set_item("censored", r.censored)?;
    d.set_item("rng", &r.rng)?;
    Ok(d)
}

/// Random walk started at 0, stopped on leaving `(-a, b)`; `a=None` means
/// no lower barrier.
#[pyclass(name = "ExitModel", module = "stopsum", frozen)]
struct Model(ExitModel);

#[pymethods]
impl Model {
    #[new]
    #[pyo3(signature = (step, b, a=None))]
    fn new(step: &Step, b: f64, a: Option<f64>) -> PyResult<Self> {
        match a {
            Some(a) if a.is_finite() => ExitModel::two_sided(step.0, a, b),
            _ => ExitModel::one_sided(step.0, b),
        }
        .map(Model)
        .map_err(err)
    }

    #[getter]
    fn a(&self) -> Option<f64> {
        self.0.a()
    }

    #[getter]
    fn b(&self) -> f64 {
        self.0.b
    }

    #[getter]
    fn step(&self) -> Step {
        Step(self.0.step)
    }

    /// `P(S_T >= b)`; for one-sided models, `P(T < inf)`.
    fn up_probability(&self) -> PyResult<f64> {
        match self.0.lower {
            LowerBarrier::Finite(_) => exit_up_probability(&self.0),
            LowerBarrier::Infinite => one_sided_prob_finite(&self.0.step, self.0.b),
        }
        .map_err(err)
    }

    /// `E(u^T)` for a two-sided model.
    fn pgf(&self, u: f64) -> PyResult<f64> {
        exit_pgf_point(&self.0, u).map_err(err)
    }

    /// `E(u^T e^{x S_T})`.
    fn joint_gf(&self, u: f64, x: f64) -> PyResult<f64> {
        exit_joint_gf(&self.0, u, x).map_err(err)
    }

    /// `P(T = m)` for `m = 0..=order`.
    #[pyo3(signature = (order=256, double_double=false))]
    fn pmf(&self, order: usize, double_double: bool) -> PyResult<Vec<f64>> {
        let precision = if double_double { Precision::DoubleDouble } else { Precision::Double };
        Ok(exit_pgf_series_with(&self.0, order, precision).map_err(err)?.pmf_t)
    }

    /// Pmf of `T` given an upward exit (given `T < inf` when one-sided).
    #[pyo3(signature = (order=256))]
    fn conditional_pmf(&self, order: usize) -> PyResult<Vec<f64>> {
        match self.0.lower {
            LowerBarrier::Finite(_) => exit_conditional_pgf_series(&self.0, order, Precision::Double),
            LowerBarrier::Infinite => one_sided_conditional_pmf(&self.0.step, self.0.b, order, Precision::Double),
        }
        .map_err(err)
    }

    #[pyo3(signature = (order=1024))]
    fn expected_time(&self, order: usize) -> PyResult<f64> {
        Ok(expected_exit_time(&self.0, order).map_err(err)?.mean)
    }

    #[pyo3(signature = (n_runs, seed, horizon=0))]
    fn simulate<'py>(&self, py: Python<'py>, n_runs: usize, seed: u64, horizon: u64) -> PyResult<Bound<'py, PyDict>> {
        let r = py.detach(|| sim_exit(&self.0, n_runs, seed, horizon)).map_err(err)?;
        sim_dict(py, &r)
    }

    #[pyo3(signature = (u, w, n_runs, seed, horizon=0))]
    fn verify_identity<'py>(
        &self,
        py: Python<'py>,
        u: f64,
        w: f64,
        n_runs: usize,
        seed: u64,
        horizon: u64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let target = IdentityTarget::Exit { model: self.0, horizon };
        let r = py.detach(|| verify_tilting_identity(&target, u, w, n_runs, seed)).map_err(err)?;
        report_dict(py, &r)
    }
}

/// Lots of `n` items with defect probability `p`; switch after `k`
/// consecutive lots with more than `c` defectives, or `k` of the last
/// `scan` lots when given.
#[pyclass(name = "SamplingPlan", module = "stopsum", frozen)]
struct Plan {
    plan: SamplingPlan,
    scan: Option<ScanRule>,
}

#[pymethods]
impl Plan {
    #[new]
    #[pyo3(signature = (n, p, c, k, scan=None))]
    fn new(n: u32, p: f64, c: u32, k: u32, scan: Option<u32>) -> PyResult<Self> {
        let plan = SamplingPlan::new(n, p, c, k).map_err(err)?;
        let scan = scan.map(|m| ScanRule::new(k, m)).transpose().map_err(err)?;
        Ok(Plan { plan, scan })
    }

    /// `P(Z > c)` for one lot.
    fn q(&self) -> f64 {
        self.plan.q()
    }

    /// `E(T)` under the run rule.
    fn expected_t(&self) -> f64 {
        self.plan.expected_t()
    }

    /// `E(u^T t^{S_T})`.
    fn joint_pgf(&self, u: f64, t: f64) -> PyResult<f64> {
        match self.scan {
            Some(rule) => scan_km_joint_pgf(&self.plan, rule, &u, &t),
            None => sampling_joint_pgf(&self.plan, &u, &t),
        }
        .map_err(err)
    }

    /// `P(T = r, S_T = m)` as rows `r = 0..=rmax`.
    fn joint_pmf(&self, rmax: usize, mmax: usize) -> PyResult<Vec<Vec<f64>>> {
        joint_pmf(&self.plan, self.scan, rmax, mmax).map_err(err)
    }

    #[pyo3(signature = (order=256))]
    fn st_pmf(&self, order: usize) -> PyResult<Vec<f64>> {
        st_pmf_with(&self.plan, self.scan, order).map_err(err)
    }

    #[pyo3(signature = (order=256))]
    fn t_pmf(&self, order: usize) -> PyResult<Vec<f64>> {
        t_pmf(&self.plan, self.scan, order).map_err(err)
    }

    /// Mean, percentiles and the distribution of `S_T`, with the truncation
    /// order doubled until the levels are covered.
    #[pyo3(signature = (levels=vec![0.5], order=256))]
    fn summary<'py>(&self, py: Python<'py>, levels: Vec<f64>, order: usize) -> PyResult<Bound<'py, PyDict>> {
        let s = st_summary(&self.plan, self.scan, &levels, order).map_err(err)?;
        let d = PyDict::new(py);
        d.set_item("mean", s.mean)?;
        d.set_item("levels", s.levels)?;
        d.set_item("percentiles", s.percentiles)?;
        d.set_item("order", s.distribution.order)?;
        d.set_item("captured", s.distribution.captured)?;
        d.set_item("pmf", s.distribution.pmf)?;
        d.set_item("cdf", s.distribution.cdf)?;
        d.set_item("tail", s.distribution.tail)?;
        Ok(d)
    }

    fn simulate<'py>(&self, py: Python<'py>, n_runs: usize, seed: u64) -> PyResult<Bound<'py, PyDict>> {
        let r = py.detach(|| sim_sampling(&self.plan, self.scan, n_runs, seed)).map_err(err)?;
        sim_dict(py, &r)
    }

    /// Identity check at `w = ln t`.
    fn verify_identity<'py>(&self, py: Python<'py>, u: f64, t: f64, n_runs: usize, seed: u64) -> PyResult<Bound<'py, PyDict>> {
        if !(t > 0.0) {
            return Err(PyValueError::new_err(format!("t must be positive, got {t}")));
        }
        let target = IdentityTarget::Sampling { plan: self.plan, scan: self.scan };
        let r = py.detach(|| verify_tilting_identity(&target, u, t.ln(), n_runs, seed)).map_err(err)?;
        report_dict(py, &r)
    }
}

/// EM estimate of `p` from observed switching times under the run rule.
#[pyfunction]
#[pyo3(signature = (taus, n, c, k, p0=0.5, epsilon=1e-8, alpha=0.05, max_iter=10_000))]
#[allow(clippy::too_many_arguments)]
fn em_fit<'py>(
    py: Python<'py>,
    taus: Vec<u64>,
    n: u32,
    c: u32,
    k: u32,
    p0: f64,
    epsilon: f64,
    alpha: f64,
    max_iter: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let mut config = EmConfig::new(PlanShape::new(n, c, k).map_err(err)?);
    config.p0 = p0;
    config.epsilon = epsilon;
    config.alpha = alpha;
    config.max_iter = max_iter;
    let r = py.detach(|| fit(&taus, &config)).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("p_hat", r.p_hat)?;
    d.set_item("se", r.fisher.powf(-0.5))?;
    d.set_item("ci", r.ci)?;
    d.set_item("fisher", r.fisher)?;
    d.set_item("iterations", r.iterations)?;
    d.set_item("trace", r.trace)?;
    d.set_item("cond_means", r.cond_means)?;
    d.set_item("loglik_trace", r.loglik_trace)?;
    Ok(d)
}

#[pymodule]
#[pyo3(name = "stopsum")]
fn init(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Step>()?;
    m.add_class::<Model>()?;
    m.add_class::<Plan>()?;
    m.add_function(wrap_pyfunction!(em_fit, m)?)?;
    m.add("RNG", stopsum::sim::RNG_NAME)?;
    Ok(())
}
