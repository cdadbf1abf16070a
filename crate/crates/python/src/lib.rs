//! Python bindings: hard instances, built-in protocols, the compilation
//! pipeline, entropy optimizers and the bound arithmetic.

use num_complex::Complex64;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use qsrd_core::bounds::{self, Mode, TheoremCheck};
use qsrd_core::hilbert::{DensityOperator, Register};
use qsrd_core::linalg::Matrix;
use qsrd_core::protocol::{self as proto, Layout, ProtocolSpec};
use qsrd_core::states::{self, HardInstance, InstanceDescriptor, REFEREE};
use qsrd_core::{compiler, entropies, facts, metrics};

fn err(e: qsrd_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_mode(mode: &str) -> PyResult<Mode> {
    mode.parse().map_err(err)
}

fn layout(d_a: Option<usize>) -> Layout {
    d_a.map_or(Layout::Transfer, |d_a| Layout::Redistribution { d_a })
}

/// Square complex matrix from nested rows.
fn matrix(rows: Vec<Vec<Complex64>>) -> PyResult<Matrix> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(PyValueError::new_err("matrix must be square"));
    }
    Ok(Matrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn rows(m: &Matrix) -> Vec<Vec<Complex64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Bipartite state on registers `A (dims[0])`, `B (dims[1])`.
fn bipartite(rho: Vec<Vec<Complex64>>, dims: (usize, usize)) -> PyResult<DensityOperator> {
    let regs = vec![Register::new("A", dims.0), Register::new("B", dims.1)];
    DensityOperator::new(regs, matrix(rho)?).map_err(err)
}

fn single(rho: Vec<Vec<Complex64>>) -> PyResult<DensityOperator> {
    let m = matrix(rho)?;
    DensityOperator::new(vec![Register::new("A", m.nrows())], m).map_err(err)
}

#[pyclass(name = "Instance", module = "qsrd", frozen)]
struct PyInstance {
    inner: HardInstance,
}

#[pymethods]
impl PyInstance {
    #[new]
    #[pyo3(signature = (d, d_a = 1, beta = 2.0, seed = 0))]
    fn new(d: usize, d_a: usize, beta: f64, seed: u64) -> PyResult<Self> {
        Ok(Self {
            inner: states::build_instance(d, d_a, beta, seed).map_err(err)?,
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner = InstanceDescriptor::from_json(text)
            .and_then(|d| d.build())
            .map_err(err)?;
        Ok(Self { inner })
    }

    fn to_json(&self) -> String {
        self.inner.descriptor().to_json()
    }

    #[getter]
    fn d(&self) -> usize {
        self.inner.d
    }

    #[getter]
    fn d_a(&self) -> usize {
        self.inner.d_a
    }

    #[getter]
    fn beta(&self) -> f64 {
        self.inner.beta
    }

    #[getter]
    fn eigenvalues(&self) -> Vec<f64> {
        self.inner.eigenvalues.clone()
    }

    fn omega_relation_residual(&self) -> PyResult<f64> {
        self.inner.omega_relation_residual().map_err(err)
    }

    /// `I(R:BC)` of the flat redistribution state.
    fn omega_mutual_information(&self) -> PyResult<f64> {
        entropies::mutual_info(&self.inner.omega.density(), &REFEREE, &["B", "C"]).map_err(err)
    }

    /// `I(R:C|B)` of the low-entropy redistribution state.
    fn psi_conditional_mutual_information(&self) -> PyResult<f64> {
        entropies::cond_mutual_info(&self.inner.psi.density(), &REFEREE, &["C"], &["B"]).map_err(err)
    }

    /// `H_max(R|C)` of the flat transfer state.
    fn omega_prime_hmax(&self) -> PyResult<f64> {
        Ok(entropies::hmax(&self.inner.omega_prime.density(), &["R"], &["C"])
            .map_err(err)?
            .value)
    }

    fn __repr__(&self) -> String {
        format!(
            "Instance(d={}, d_a={}, beta={}, seed={})",
            self.inner.d, self.inner.d_a, self.inner.beta, self.inner.seed
        )
    }
}

#[pyclass(name = "Protocol", module = "qsrd", frozen)]
struct PyProtocol {
    inner: ProtocolSpec,
}

#[pymethods]
impl PyProtocol {
    #[staticmethod]
    #[pyo3(signature = (d, d_a = None, theta = 0.0))]
    fn teleport(d: usize, d_a: Option<usize>, theta: f64) -> Self {
        Self {
            inner: proto::teleport(d, layout(d_a), theta),
        }
    }

    #[staticmethod]
    #[pyo3(signature = (d, max_index, d_a = None, seed = 0))]
    fn padded_teleport(d: usize, max_index: u32, d_a: Option<usize>, seed: u64) -> PyResult<Self> {
        Ok(Self {
            inner: proto::padded_teleport(d, layout(d_a), seed, max_index).map_err(err)?,
        })
    }

    #[staticmethod]
    #[pyo3(signature = (d, d_a = None, seed = 0))]
    fn synthetic(d: usize, d_a: Option<usize>, seed: u64) -> Self {
        Self {
            inner: proto::synthetic(d, layout(d_a), seed),
        }
    }

    #[staticmethod]
    #[pyo3(signature = (d, d_a = None))]
    fn do_nothing(d: usize, d_a: Option<usize>) -> Self {
        Self {
            inner: proto::do_nothing(d, layout(d_a)),
        }
    }

    /// Teleportation with its output rotation tuned so the error on the
    /// instance's transfer state equals `eps`. Returns `(protocol, measured)`.
    #[staticmethod]
    fn calibrated_teleport(instance: &PyInstance, eps: f64) -> PyResult<(Self, f64)> {
        let d = instance.inner.d;
        let (spec, _, measured) =
            proto::calibrate_teleport_noise(d, Layout::Transfer, &instance.inner.psi_tilde, eps).map_err(err)?;
        Ok((Self { inner: spec }, measured))
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: ProtocolSpec::from_json(text).map_err(err)?,
        })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn rounds(&self) -> usize {
        self.inner.rounds
    }

    /// Transcript distribution on the instance's matching input state as
    /// `[(messages, probability), ...]`.
    fn transcript(&self, instance: &PyInstance) -> PyResult<Vec<(Vec<u32>, f64)>> {
        let run = proto::run_protocol(&self.inner, input_for(&self.inner, &instance.inner)).map_err(err)?;
        Ok(run.transcript.distribution())
    }

    fn expected_cost(&self, instance: &PyInstance) -> PyResult<f64> {
        let run = proto::run_protocol(&self.inner, input_for(&self.inner, &instance.inner)).map_err(err)?;
        proto::expected_cost(&run.transcript).map_err(err)
    }
}

/// Redistribution state when Bob holds `B`, transfer state otherwise.
fn input_for<'a>(spec: &ProtocolSpec, inst: &'a HardInstance) -> &'a qsrd_core::hilbert::StateVector {
    if spec.bob.iter().any(|r| r.label == "B") {
        &inst.psi
    } else {
        &inst.psi_tilde
    }
}

/// Runs prune, rescale, truncate and compile. Returns the report as JSON text.
#[pyfunction]
#[pyo3(signature = (instance, protocol, mu, eps = None))]
fn pipeline(instance: &PyInstance, protocol: &PyProtocol, mu: f64, eps: Option<f64>) -> PyResult<String> {
    let input = input_for(&protocol.inner, &instance.inner);
    let outcome = compiler::run_pipeline(&protocol.inner, input, eps, mu).map_err(err)?;
    Ok(outcome.report.to_json())
}

/// Truncation of a transcript distribution. Returns a dict with the kept
/// tuples, dropped mass and worst-case cost.
#[pyfunction]
#[pyo3(signature = (distribution, mu, cost, eps = 0.0))]
fn truncate<'py>(
    py: Python<'py>,
    distribution: Vec<(Vec<u32>, f64)>,
    mu: f64,
    cost: f64,
    eps: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let t = compiler::truncate_distribution(&distribution, mu, cost, eps).map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("log_threshold", t.log_threshold)?;
    out.set_item("kept", t.kept)?;
    out.set_item("dropped", t.dropped)?;
    out.set_item("dropped_mass", t.dropped_mass)?;
    out.set_item("renormalized", t.renormalized)?;
    out.set_item("worst_case_cost", t.worst_case_cost)?;
    Ok(out)
}

#[pyfunction]
#[pyo3(signature = (mode, p, eps, log_d = bounds::DEFAULT_LOG_D))]
fn theorem<'py>(py: Python<'py>, mode: &str, p: f64, eps: f64, log_d: f64) -> PyResult<Bound<'py, PyDict>> {
    let check = bounds::theorem_contradiction_check(parse_mode(mode)?, p, eps, log_d).map_err(err)?;
    let out = PyDict::new(py);
    match check {
        TheoremCheck::Feasible(t) => {
            out.set_item("status", "feasible")?;
            out.set_item("beta", t.beta)?;
            out.set_item("mu", t.mu)?;
            out.set_item("product", t.product)?;
            out.set_item("error_bound", t.compiled_error_bound)?;
            out.set_item("cost_coefficient", t.cost_coefficient)?;
            out.set_item("cost_coefficient_verbatim", t.cost_coefficient_verbatim)?;
            out.set_item("lower_bound", t.lower_bound)?;
            out.set_item("contradiction", t.contradiction)?;
            out.set_item("contradiction_verbatim", t.contradiction_verbatim)?;
        }
        TheoremCheck::Infeasible { .. } => out.set_item("status", "infeasible")?,
        TheoremCheck::RangeViolation { max_eps, .. } => {
            out.set_item("status", "range-violation")?;
            out.set_item("max_eps", max_eps)?;
        }
    }
    Ok(out)
}

#[pyfunction]
fn max_eps(mode: &str, p: f64) -> PyResult<f64> {
    Ok(bounds::max_eps(parse_mode(mode)?, p))
}

#[pyfunction]
fn optimal_mu(mode: &str, p: f64, eps: f64) -> PyResult<f64> {
    Ok(bounds::optimal_mu(parse_mode(mode)?, p, eps))
}

#[pyfunction]
fn redistribution_lower_bound(log_d: f64, delta: f64) -> PyResult<f64> {
    Ok(bounds::redist_worst_case_lower_bound(log_d, delta).map_err(err)?.bits)
}

#[pyfunction]
fn transfer_lower_bound(log_d: f64, delta: f64) -> PyResult<f64> {
    bounds::transfer_worst_case_lower_bound(log_d, delta).map_err(err)
}

#[pyfunction]
fn low_entropy_distribution(d: usize, beta: f64) -> PyResult<Vec<f64>> {
    states::low_entropy_distribution(d, beta).map_err(err)
}

#[pyfunction]
fn entropy(rho: Vec<Vec<Complex64>>) -> PyResult<f64> {
    entropies::entropy(&single(rho)?).map_err(err)
}

#[pyfunction]
fn fidelity(rho: Vec<Vec<Complex64>>, sigma: Vec<Vec<Complex64>>) -> PyResult<f64> {
    metrics::fidelity(&single(rho)?, &single(sigma)?).map_err(err)
}

#[pyfunction]
fn purified_distance(rho: Vec<Vec<Complex64>>, sigma: Vec<Vec<Complex64>>) -> PyResult<f64> {
    metrics::purified_distance(&single(rho)?, &single(sigma)?).map_err(err)
}

/// `I_max(A:B)` of a state on `A ⊗ B` with the given dimensions.
#[pyfunction]
fn imax(rho: Vec<Vec<Complex64>>, dims: (usize, usize)) -> PyResult<f64> {
    Ok(entropies::imax(&bipartite(rho, dims)?, &["A"], &["B"])
        .map_err(err)?
        .value)
}

#[pyfunction]
fn hmin(rho: Vec<Vec<Complex64>>, dims: (usize, usize)) -> PyResult<f64> {
    Ok(entropies::hmin(&bipartite(rho, dims)?, &["A"], &["B"])
        .map_err(err)?
        .value)
}

#[pyfunction]
fn hmax(rho: Vec<Vec<Complex64>>, dims: (usize, usize)) -> PyResult<f64> {
    Ok(entropies::hmax(&bipartite(rho, dims)?, &["A"], &["B"])
        .map_err(err)?
        .value)
}

#[pyfunction]
fn mutual_information(rho: Vec<Vec<Complex64>>, dims: (usize, usize)) -> PyResult<f64> {
    entropies::mutual_info(&bipartite(rho, dims)?, &["A"], &["B"]).map_err(err)
}

type FactTuple = (String, usize, f64, f64, f64, bool);

/// Fact-suite rows as `(fact, trial, lhs, rhs, margin, pass)` tuples.
#[pyfunction]
#[pyo3(signature = (seed, trials, dim = 2))]
fn verify_facts(seed: u64, trials: usize, dim: usize) -> PyResult<Vec<FactTuple>> {
    let rows = facts::verify_facts(seed, trials, dim).map_err(err)?;
    Ok(rows
        .into_iter()
        .map(|r| (r.fact.to_string(), r.trial, r.lhs, r.rhs, r.margin, r.pass))
        .collect())
}

/// Density matrix of a seeded random state, for experiments from Python.
#[pyfunction]
#[pyo3(signature = (dim, rank, seed))]
fn random_density(dim: usize, rank: usize, seed: u64) -> PyResult<Vec<Vec<Complex64>>> {
    let mut rng = qsrd_core::hilbert::rng_from_seed(seed);
    let rho = qsrd_core::hilbert::random_density(vec![Register::new("A", dim)], rank, &mut rng).map_err(err)?;
    Ok(rows(rho.matrix()))
}

#[pymodule]
pub fn qsrd(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyInstance>()?;
    m.add_class::<PyProtocol>()?;
    m.add_function(wrap_pyfunction!(pipeline, m)?)?;
    m.add_function(wrap_pyfunction!(truncate, m)?)?;
    m.add_function(wrap_pyfunction!(theorem, m)?)?;
    m.add_function(wrap_pyfunction!(max_eps, m)?)?;
    m.add_function(wrap_pyfunction!(optimal_mu, m)?)?;
    m.add_function(wrap_pyfunction!(redistribution_lower_bound, m)?)?;
    m.add_function(wrap_pyfunction!(transfer_lower_bound, m)?)?;
    m.add_function(wrap_pyfunction!(low_entropy_distribution, m)?)?;
    m.add_function(wrap_pyfunction!(entropy, m)?)?;
    m.add_function(wrap_pyfunction!(fidelity, m)?)?;
    m.add_function(wrap_pyfunction!(purified_distance, m)?)?;
    m.add_function(wrap_pyfunction!(imax, m)?)?;
    m.add_function(wrap_pyfunction!(hmin, m)?)?;
    m.add_function(wrap_pyfunction!(hmax, m)?)?;
    m.add_function(wrap_pyfunction!(mutual_information, m)?)?;
    m.add_function(wrap_pyfunction!(verify_facts, m)?)?;
    m.add_function(wrap_pyfunction!(random_density, m)?)?;
    Ok(())
}
