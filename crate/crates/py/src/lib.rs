//! Python module `flowlab`: model states, Bianchi and Gowdy evolution,
//! monotone functionals and the scenario runner.
//!
//! Structured inputs and outputs (model ids, scenarios, reports) cross the
//! boundary as plain dicts and lists through their JSON form.

use ::flowlab::bianchi::{cmc_lapse, constraint_residuals, evolve, BianchiSpec, EvolveConfig, Trajectory};
use ::flowlab::gowdy::{self, GowdyConfig, GowdyState, GowdyTrajectory};
use ::flowlab::models::{self, FlowState, ModelId};
use ::flowlab::monotone::{self, MonotoneSeries};
use ::flowlab::scaling;
use ::flowlab::scenario::{self, Scenario};
use ::flowlab::tensor::SymMat;
use ::flowlab::FlowError;
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyModule;
use serde::de::DeserializeOwned;
use serde::Serialize;

create_exception!(flowlab, FlowlabError, PyException);

fn err(e: FlowError) -> PyErr {
    match e {
        FlowError::Schema(m) | FlowError::Domain(m) => PyValueError::new_err(m),
        e => FlowlabError::new_err(e.to_string()),
    }
}

fn to_py<'py, T: Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| FlowlabError::new_err(e.to_string()))?;
    PyModule::import(py, "json")?.call_method1("loads", (text,))
}

fn from_py<T: DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = if let Ok(s) = obj.extract::<String>() {
        s
    } else {
        PyModule::import(obj.py(), "json")?.call_method1("dumps", (obj,))?.extract()?
    };
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Model from a name ("milne", "taub-flat", "bianchi-iii-flat") or a dict such as
/// {"kind": "kasner", "p": [..]}.
fn model_arg(obj: &Bound<'_, PyAny>) -> PyResult<ModelId> {
    if let Ok(name) = obj.extract::<String>() {
        if !name.trim_start().starts_with('{') {
            return scenario::zoo()
                .into_iter()
                .find(|m| m.name() == name)
                .ok_or_else(|| PyValueError::new_err(format!("unknown model '{name}'")));
        }
    }
    from_py(obj)
}

fn rows(m: &SymMat) -> Vec<Vec<f64>> {
    (0..m.dim()).map(|i| (0..m.dim()).map(|j| m.get(i, j)).collect()).collect()
}

fn sym(rows: Vec<Vec<f64>>) -> PyResult<SymMat> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(PyValueError::new_err("matrix must be square"));
    }
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    SymMat::new(n, &flat).map_err(err)
}

/// Spatial metric h, second fundamental form K and CMC lapse at Hubble time t.
#[pyclass(name = "FlowState", module = "flowlab", from_py_object)]
#[derive(Clone)]
struct PyFlowState(FlowState);

#[pymethods]
impl PyFlowState {
    #[new]
    fn new(t: f64, h: Vec<Vec<f64>>, k: Vec<Vec<f64>>) -> PyResult<Self> {
        let mut st = FlowState { t, h: sym(h)?, k: sym(k)?, lapse: 1.0, split: None };
        st.lapse = cmc_lapse(t, st.k0_sq().map_err(err)?, st.dim());
        Ok(PyFlowState(st))
    }

    #[getter]
    fn t(&self) -> f64 {
        self.0.t
    }

    #[getter]
    fn h(&self) -> Vec<Vec<f64>> {
        rows(&self.0.h)
    }

    #[getter]
    fn k(&self) -> Vec<Vec<f64>> {
        rows(&self.0.k)
    }

    #[getter]
    fn lapse(&self) -> f64 {
        self.0.lapse
    }

    fn mean_curvature(&self) -> PyResult<f64> {
        self.0.mean_curvature().map_err(err)
    }

    fn k0_sq(&self) -> PyResult<f64> {
        self.0.k0_sq().map_err(err)
    }

    fn volume(&self) -> f64 {
        self.0.volume()
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.0)
    }

    fn __repr__(&self) -> String {
        format!("FlowState(t={}, h={:?}, k={:?})", self.0.t, self.0.h.entries(), self.0.k.entries())
    }
}

/// Exact state of a model solution at Hubble time t.
#[pyfunction]
fn model_state(model: &Bound<'_, PyAny>, t: f64) -> PyResult<PyFlowState> {
    models::model_state(&model_arg(model)?, t).map(PyFlowState).map_err(err)
}

/// |Rm|_T of a model at time t.
#[pyfunction]
fn model_curvature_norm(model: &Bound<'_, PyAny>, t: f64) -> PyResult<f64> {
    models::model_curvature_norm(&model_arg(model)?, t).map_err(err)
}

/// The Kasner pair (p2, p3) completing p1, largest first.
#[pyfunction]
fn kasner_family(p1: f64) -> PyResult<(f64, f64)> {
    models::kasner_family(p1).map_err(err)
}

/// The six models with their default parameters, as dicts.
#[pyfunction]
fn zoo<'py>(py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &scenario::zoo())
}

/// Hamiltonian, momentum and gauge residuals of a state on the Milnor algebra `lam`.
#[pyfunction]
fn constraint_residuals_milnor<'py>(
    py: Python<'py>,
    state: &PyFlowState,
    lam: [f64; 3],
) -> PyResult<Bound<'py, PyAny>> {
    let r = constraint_residuals(&state.0, &::flowlab::algebra::LieAlgebra::milnor(lam)).map_err(err)?;
    to_py(py, &r)
}

/// Affine-invariant distance between the shapes (unit-determinant parts) of two metrics.
#[pyfunction]
fn shape_distance(p: Vec<Vec<f64>>, q: Vec<Vec<f64>>) -> PyResult<f64> {
    ::flowlab::tensor::shape_distance(&sym(p)?, &sym(q)?).map_err(err)
}

fn series<'py>(py: Python<'py>, s: &MonotoneSeries, tol: f64) -> PyResult<Bound<'py, PyAny>> {
    let verdict = monotone::monotone_check(s, tol);
    to_py(
        py,
        &serde_json::json!({
            "name": s.name,
            "times": s.times(),
            "values": s.values(),
            "residuals": s.residuals,
            "rigid": s.rigid,
            "verdict": verdict,
        }),
    )
}

/// Sampled Bianchi flow produced by the integrator or built from a model.
#[pyclass(name = "Trajectory", module = "flowlab")]
struct PyTrajectory(Trajectory);

#[pymethods]
impl PyTrajectory {
    fn __len__(&self) -> usize {
        self.0.samples.len()
    }

    fn times(&self) -> Vec<f64> {
        self.0.times()
    }

    fn span(&self) -> (f64, f64) {
        self.0.span()
    }

    fn sample(&self, i: usize) -> PyResult<PyFlowState> {
        self.0
            .samples
            .get(i)
            .cloned()
            .map(PyFlowState)
            .ok_or_else(|| PyValueError::new_err("sample index out of range"))
    }

    fn state_at(&self, t: f64) -> PyResult<PyFlowState> {
        self.0.state_at(t).map(PyFlowState).map_err(err)
    }

    fn stats<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.0.stats)
    }

    /// (−H)³ vol with its identity residuals and monotone verdict.
    #[pyo3(signature = (tol = 1e-10))]
    fn fm_volume<'py>(&self, py: Python<'py>, tol: f64) -> PyResult<Bound<'py, PyAny>> {
        series(py, &monotone::fm_volume(&self.0).map_err(err)?, tol)
    }

    fn shape_drift<'py>(&self, py: Python<'py>, s: f64, lam: f64) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &monotone::shape_drift_check(&self.0, s, lam).map_err(err)?)
    }

    fn classify<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &scaling::classify(&self.0).map_err(err)?)
    }

    #[pyo3(signature = (count = 4, forced = false))]
    fn blowdown<'py>(&self, py: Python<'py>, count: usize, forced: bool) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &scaling::blowdown(&self.0, count, forced).map_err(err)?)
    }

    fn kasner_fit<'py>(&self, py: Python<'py>, t_lo: f64, t_hi: f64) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &scaling::kasner_fit(&self.0, (t_lo, t_hi)).map_err(err)?)
    }

    /// Max shape distance between the rescaled view at s and the model over u in [1, lam].
    fn limit_compare(&self, s: f64, lam: f64, model: &Bound<'_, PyAny>) -> PyResult<f64> {
        let view = scaling::rescale(&self.0, s, lam).map_err(err)?;
        scaling::limit_compare(&view, &model_arg(model)?, lam).map_err(err)
    }

    fn reduced_volume<'py>(&self, py: Python<'py>, fiber: Vec<usize>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &monotone::reduced_volume_with(&self.0, &fiber).map_err(err)?)
    }
}

fn config(rtol: Option<f64>, samples_per_decade: Option<usize>) -> EvolveConfig {
    let mut cfg = EvolveConfig::default();
    if let Some(r) = rtol {
        cfg.rtol = r;
    }
    if let Some(n) = samples_per_decade {
        cfg.samples_per_decade = n;
    }
    cfg
}

/// Evolve a model's data at t0 to t1.
#[pyfunction]
#[pyo3(signature = (model, t0, t1, rtol = None, samples_per_decade = None))]
fn evolve_model(
    model: &Bound<'_, PyAny>,
    t0: f64,
    t1: f64,
    rtol: Option<f64>,
    samples_per_decade: Option<usize>,
) -> PyResult<PyTrajectory> {
    let spec = BianchiSpec::from_model(&model_arg(model)?, t0).map_err(err)?;
    let cfg = config(rtol, samples_per_decade);
    model.py().detach(|| evolve(&spec, t1, &cfg)).map(PyTrajectory).map_err(err)
}

/// Evolve diagonal Milnor data; K is completed from the Hamiltonian constraint.
#[pyfunction]
#[pyo3(signature = (lam, scale_factors, shear, t0, t1, rtol = None, samples_per_decade = None))]
#[allow(clippy::too_many_arguments)]
fn evolve_milnor(
    py: Python<'_>,
    lam: [f64; 3],
    scale_factors: [f64; 3],
    shear: [f64; 3],
    t0: f64,
    t1: f64,
    rtol: Option<f64>,
    samples_per_decade: Option<usize>,
) -> PyResult<PyTrajectory> {
    let spec = BianchiSpec::constraint_solved(lam, scale_factors, shear, t0).map_err(err)?;
    let cfg = config(rtol, samples_per_decade);
    py.detach(|| evolve(&spec, t1, &cfg)).map(PyTrajectory).map_err(err)
}

/// Closed-form model trajectory on the evolver's sample grid.
#[pyfunction]
#[pyo3(signature = (model, t0, t1, samples_per_decade = 200))]
fn model_trajectory(model: &Bound<'_, PyAny>, t0: f64, t1: f64, samples_per_decade: usize) -> PyResult<PyTrajectory> {
    Trajectory::from_model(&model_arg(model)?, t0, t1, samples_per_decade).map(PyTrajectory).map_err(err)
}

/// Stored slices of a T²-symmetric run in areal time R.
#[pyclass(name = "GowdyTrajectory", module = "flowlab")]
struct PyGowdyTrajectory(GowdyTrajectory);

#[pymethods]
impl PyGowdyTrajectory {
    fn __len__(&self) -> usize {
        self.0.states.len()
    }

    fn times(&self) -> Vec<f64> {
        self.0.states.iter().map(|s| s.r).collect()
    }

    /// (U, U_R, A, A_R) on the θ grid of slice i.
    #[allow(clippy::type_complexity)]
    fn fields(&self, i: usize) -> PyResult<(Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>)> {
        let s = self.0.states.get(i).ok_or_else(|| PyValueError::new_err("slice index out of range"))?;
        Ok((s.u.clone(), s.ur.clone(), s.a.clone(), s.ar.clone()))
    }

    #[pyo3(signature = (tol = 1e-8))]
    fn energy<'py>(&self, py: Python<'py>, tol: f64) -> PyResult<Bound<'py, PyAny>> {
        let (s, id) = monotone::gowdy_energy_series(&self.0).map_err(err)?;
        let out = series(py, &s, tol)?;
        out.set_item("identity_stated", id.max_stated())?;
        out.set_item("identity_corrected", id.max_corrected())?;
        Ok(out)
    }

    #[pyo3(signature = (tol = 1e-8))]
    fn equivolume<'py>(&self, py: Python<'py>, tol: f64) -> PyResult<Bound<'py, PyAny>> {
        series(py, &monotone::equivolume_momentum(&self.0).map_err(err)?, tol)
    }
}

/// Evolve the exact polarized mode U = J0(mR) cos(mθ) from r0 to r1.
#[pyfunction]
#[pyo3(signature = (m, r0, r1, n_theta, cfl = 0.5, store_every = 1))]
fn evolve_gowdy_bessel(
    py: Python<'_>,
    m: u32,
    r0: f64,
    r1: f64,
    n_theta: usize,
    cfl: f64,
    store_every: usize,
) -> PyResult<PyGowdyTrajectory> {
    let st = GowdyState::bessel_mode(m, r0, n_theta).map_err(err)?;
    let cfg = GowdyConfig { cfl, store_every };
    py.detach(|| gowdy::evolve_gowdy(&st, r1, &cfg)).map(PyGowdyTrajectory).map_err(err)
}

/// Evolve (U, U_R, A, A_R) sampled on a uniform θ grid from r0 to r1.
#[pyfunction]
#[pyo3(signature = (r0, u, ur, a, ar, r1, cfl = 0.5, store_every = 1))]
#[allow(clippy::too_many_arguments)]
fn evolve_gowdy(
    py: Python<'_>,
    r0: f64,
    u: Vec<f64>,
    ur: Vec<f64>,
    a: Vec<f64>,
    ar: Vec<f64>,
    r1: f64,
    cfl: f64,
    store_every: usize,
) -> PyResult<PyGowdyTrajectory> {
    let st = GowdyState::new(r0, u, ur, a, ar).map_err(err)?;
    let cfg = GowdyConfig { cfl, store_every };
    py.detach(|| gowdy::evolve_gowdy(&st, r1, &cfg)).map(PyGowdyTrajectory).map_err(err)
}

/// Vacuum residual, Ê_K constancy and twist constants of the pseudo-static family.
#[pyfunction]
#[pyo3(signature = (c, k, rs, sigma = None, n_theta = 64))]
fn verify_pseudo_static<'py>(
    py: Python<'py>,
    c: f64,
    k: f64,
    rs: Vec<f64>,
    sigma: Option<Bound<'py, PyAny>>,
    n_theta: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let sigma: models::SigmaProfile = match sigma {
        Some(s) => from_py(&s)?,
        None => models::SigmaProfile::zero(),
    };
    to_py(py, &gowdy::verify_pseudo_static(c, k, &sigma, &rs, n_theta).map_err(err)?)
}

/// Run one scenario (dict or JSON text); sweeps are expanded and run in order.
#[pyfunction]
fn run_scenario<'py>(py: Python<'py>, spec: &Bound<'py, PyAny>) -> PyResult<Bound<'py, PyAny>> {
    let sc: Scenario = from_py(spec)?;
    sc.validate().map_err(err)?;
    let leaves = sc.expand();
    let outcomes =
        py.detach(|| leaves.iter().map(scenario::run_scenario).collect::<Result<Vec<_>, _>>()).map_err(err)?;
    if outcomes.len() == 1 {
        to_py(py, &outcomes[0])
    } else {
        to_py(py, &outcomes)
    }
}

/// The built-in regression suite as a list of scenario dicts.
#[pyfunction]
fn default_suite<'py>(py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &scenario::default_suite())
}

#[pymodule(name = "flowlab")]
fn flowlab_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("FlowlabError", m.py().get_type::<FlowlabError>())?;
    m.add_class::<PyFlowState>()?;
    m.add_class::<PyTrajectory>()?;
    m.add_class::<PyGowdyTrajectory>()?;
    m.add_function(wrap_pyfunction!(model_state, m)?)?;
    m.add_function(wrap_pyfunction!(model_curvature_norm, m)?)?;
    m.add_function(wrap_pyfunction!(kasner_family, m)?)?;
    m.add_function(wrap_pyfunction!(zoo, m)?)?;
    m.add_function(wrap_pyfunction!(constraint_residuals_milnor, m)?)?;
    m.add_function(wrap_pyfunction!(shape_distance, m)?)?;
    m.add_function(wrap_pyfunction!(evolve_model, m)?)?;
    m.add_function(wrap_pyfunction!(evolve_milnor, m)?)?;
    m.add_function(wrap_pyfunction!(model_trajectory, m)?)?;
    m.add_function(wrap_pyfunction!(evolve_gowdy_bessel, m)?)?;
    m.add_function(wrap_pyfunction!(evolve_gowdy, m)?)?;
    m.add_function(wrap_pyfunction!(verify_pseudo_static, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(default_suite, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
