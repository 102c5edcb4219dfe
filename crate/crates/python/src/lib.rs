//! Python bindings: circuit simulation, sampling, shot bounds, the chunk
//! formula, and the experiment runner.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use std::path::Path;

fn to_py(e: hpqs::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Parameterized circuit over RX/RY/RZ/CNOT with qubit 0 as the most
/// significant bit of the basis index.
#[pyclass]
struct Circuit {
    inner: hpqs::quantum::Circuit,
}

#[pymethods]
impl Circuit {
    #[new]
    fn new(n_qubits: usize) -> PyResult<Self> {
        Ok(Circuit { inner: hpqs::quantum::Circuit::new(n_qubits).map_err(to_py)? })
    }

    /// Rotation builders return the new parameter slot index.
    fn rx(&mut self, qubit: usize) -> PyResult<usize> {
        self.inner.rx(qubit).map_err(to_py)
    }

    fn ry(&mut self, qubit: usize) -> PyResult<usize> {
        self.inner.ry(qubit).map_err(to_py)
    }

    fn rz(&mut self, qubit: usize) -> PyResult<usize> {
        self.inner.rz(qubit).map_err(to_py)
    }

    fn cnot(&mut self, control: usize, target: usize) -> PyResult<()> {
        self.inner.cnot(control, target).map_err(to_py)
    }

    #[getter]
    fn n_qubits(&self) -> usize {
        self.inner.n_qubits()
    }

    #[getter]
    fn n_slots(&self) -> usize {
        self.inner.n_slots()
    }

    /// Exact basis-state probabilities for the given angles.
    fn probabilities(&self, theta: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.exact_probabilities(&theta).map_err(to_py)
    }

    /// Finite-shot measurement counts under a named noise preset.
    #[pyo3(signature = (theta, n_shot, seed, noise = "ideal"))]
    fn sample_counts(
        &self,
        theta: Vec<f64>,
        n_shot: u64,
        seed: u64,
        noise: &str,
    ) -> PyResult<Vec<u64>> {
        let preset = hpqs::shots::NoisePreset::builtin(noise)
            .ok_or_else(|| PyValueError::new_err(format!("unknown noise preset '{noise}'")))?;
        let budget = hpqs::shots::ShotBudget {
            n_qubits: self.inner.n_qubits(),
            n_shot,
            multiplier: None,
        };
        let emp =
            hpqs::shots::sample_circuit(&self.inner, &theta, &preset, &budget, seed).map_err(to_py)?;
        Ok(emp.counts().to_vec())
    }

    /// Exact expectation of a grouped-Z observable over the listed qubits.
    fn expectation(&self, theta: Vec<f64>, qubits: Vec<usize>) -> PyResult<f64> {
        let obs = hpqs::quantum::Observable::grouped_z(&qubits);
        let state = self.inner.simulate(&theta).map_err(to_py)?;
        hpqs::quantum::exact_expectation(&state, &obs).map_err(to_py)
    }

    /// Parameter-shift gradient of that expectation, one entry per slot.
    fn expectation_grad(&self, theta: Vec<f64>, qubits: Vec<usize>) -> PyResult<Vec<f64>> {
        let obs = hpqs::quantum::Observable::grouped_z(&qubits);
        hpqs::quantum::exact_expectation_grad(&self.inner, &theta, &obs).map_err(to_py)
    }
}

/// Worst-case estimation error over all basis probabilities at confidence
/// 1 - delta for a given shot budget.
#[pyfunction]
fn hoeffding_epsilon(n_qubits: usize, n_shot: u64, delta: f64) -> PyResult<f64> {
    hpqs::shots::hoeffding_epsilon(n_qubits, n_shot, delta).map_err(to_py)
}

/// Qubits needed to enumerate the ceil(m / n_mlp) generation chunks.
#[pyfunction]
fn qpa_qubit_count(m: usize, n_mlp: usize) -> PyResult<usize> {
    hpqs::tasks::qpa::qpa_qubit_count(m, n_mlp).map_err(to_py)
}

/// Run an experiment from TOML text; writes the configured artifacts and
/// returns the run record as JSON.
#[pyfunction]
fn run_experiment(config_toml: &str, data_root: &str) -> PyResult<String> {
    let config = hpqs::harness::config::parse_config(config_toml, &[]).map_err(to_py)?;
    let record =
        hpqs::harness::runner::run_experiment(&config, Path::new(data_root)).map_err(to_py)?;
    Ok(record.to_json())
}

/// Merge run-record JSON strings into (csv, plain-text table).
#[pyfunction]
fn compare_records(records: Vec<String>) -> PyResult<(String, String)> {
    let parsed: Vec<_> = records
        .iter()
        .map(|r| hpqs::harness::metrics::RunRecord::from_json(r).map_err(to_py))
        .collect::<PyResult<_>>()?;
    hpqs::harness::metrics::emit_comparison(&parsed).map_err(to_py)
}

#[pymodule]
fn hpqs_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<Circuit>()?;
    m.add_function(wrap_pyfunction!(hoeffding_epsilon, m)?)?;
    m.add_function(wrap_pyfunction!(qpa_qubit_count, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(compare_records, m)?)?;
    Ok(())
}
