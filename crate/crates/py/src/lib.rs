//! Python bindings for the `bellkit` crate.
//!
//! The module mirrors the command-line tool: the three document types
//! (`Behavior`, `Functional`, `Strategy`) are classes, and the analysis
//! steps (`evaluate`, `classify`, `projectivize`, `reduce`, `compress`,
//! `slocc_filter`, `optimize`, `pipeline`) are module functions whose
//! result objects expose the interesting numbers directly and the full
//! report through `as_dict()` in exactly the shape the CLI writes to
//! JSON files.
//!
//! Index conventions match the Rust API: parties, settings and outcomes
//! are 0-based in method arguments, while anything that names a piece of
//! a serialized document (vertex numbers, block indices, the labels in
//! `deterministic_behavior`) uses the 1-based labels of the file format.

use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use pyo3::IntoPyObjectExt;

use bellkit::blocks::{
    compress as core_compress, slocc_filter as core_slocc_filter, BlockDecomposition, SloccFilter,
};
use bellkit::classical::{classical_bound, is_classical, verify_certificate, MembershipCertificate};
use bellkit::json::{
    behavior_digest, render_json, BehaviorDto, CertificateDto, DecompositionDto, FilterDto,
    FunctionalDto, ReductionDto, SeesawResultDto, StrategyDto,
};
use bellkit::linalg::{CMat, CVec};
use bellkit::pipeline::{run_pipeline, PipelineReport};
use bellkit::projectivize::projectivize_strategy;
use bellkit::quantum::{born_behavior, check_projective, random_strategy, LocalMeasurement, QuantumStrategy};
use bellkit::reduction::{strip_shared_vectors, Reduction};
use bellkit::seesaw::{seesaw, SeesawConfig, SeesawResult, DEFAULT_SEED};
use bellkit::{
    bell_value, correlators, deterministic_behavior as core_deterministic, Behavior,
    BellFunctional, DeterministicStrategy, Error, Scenario,
};

fn to_py_err(e: Error) -> PyErr {
    match e {
        Error::Structural(_) | Error::Validation(_) => PyValueError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn json_to_py(py: Python<'_>, v: &serde_json::Value) -> PyResult<Py<PyAny>> {
    use serde_json::Value;
    match v {
        Value::Null => Ok(py.None()),
        Value::Bool(b) => b.into_py_any(py),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                i.into_py_any(py)
            } else if let Some(u) = n.as_u64() {
                u.into_py_any(py)
            } else {
                n.as_f64().unwrap_or(f64::NAN).into_py_any(py)
            }
        }
        Value::String(s) => s.into_py_any(py),
        Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(json_to_py(py, item)?)?;
            }
            list.into_py_any(py)
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (key, item) in map {
                dict.set_item(key, json_to_py(py, item)?)?;
            }
            dict.into_py_any(py)
        }
    }
}

fn dto_to_py<T: serde::Serialize>(py: Python<'_>, dto: &T) -> PyResult<Py<PyAny>> {
    let value = serde_json::to_value(dto)
        .map_err(|e| PyRuntimeError::new_err(format!("report serialization failed: {e}")))?;
    json_to_py(py, &value)
}

fn mat_from_py(rows: &[Vec<Complex64>], what: &str) -> PyResult<CMat> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(PyValueError::new_err(format!("{what}: rows have unequal lengths")));
    }
    Ok(CMat::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

fn mat_to_py(m: &CMat) -> Vec<Vec<Complex64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

type PyMeasurements = Vec<[[Vec<Vec<Complex64>>; 2]; 2]>;

fn measurements_from_py(data: PyMeasurements) -> PyResult<Vec<LocalMeasurement>> {
    let mut out = Vec::with_capacity(data.len());
    for (party, settings) in data.iter().enumerate() {
        let eff = |x: usize, a: usize| {
            mat_from_py(
                &settings[x][a],
                &format!("party {party} setting {x} outcome {a}"),
            )
        };
        let m = LocalMeasurement::new([[eff(0, 0)?, eff(0, 1)?], [eff(1, 0)?, eff(1, 1)?]])
            .map_err(to_py_err)?;
        out.push(m);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Behavior

/// Conditional outcome distribution for N parties, two settings and two
/// outcomes per party. The probability table is flat: settings index
/// times 2^N plus outcomes index, party 0 in the most significant bit.
#[pyclass(name = "Behavior", module = "bellkit_py", from_py_object)]
#[derive(Clone)]
struct PyBehavior {
    inner: Behavior,
}

#[pymethods]
impl PyBehavior {
    #[new]
    fn new(n_parties: usize, probabilities: Vec<f64>) -> PyResult<Self> {
        let s = Scenario::new(n_parties).map_err(to_py_err)?;
        let inner = Behavior::new(s, probabilities).map_err(to_py_err)?;
        inner.ensure_valid().map_err(to_py_err)?;
        Ok(PyBehavior { inner })
    }

    /// The maximally mixed behavior: every outcome equally likely.
    #[staticmethod]
    fn uniform(n_parties: usize) -> PyResult<Self> {
        let s = Scenario::new(n_parties).map_err(to_py_err)?;
        Ok(PyBehavior { inner: Behavior::uniform(s) })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let dto: BehaviorDto =
            bellkit::json::parse_json(text, "behavior document").map_err(to_py_err)?;
        Ok(PyBehavior { inner: dto.into_behavior().map_err(to_py_err)? })
    }

    fn to_json(&self) -> PyResult<String> {
        render_json(&BehaviorDto::from(&self.inner)).map_err(to_py_err)
    }

    #[getter]
    fn n_parties(&self) -> usize {
        self.inner.scenario().n_parties()
    }

    #[getter]
    fn probabilities(&self) -> Vec<f64> {
        self.inner.table().to_vec()
    }

    /// P(outcomes | settings), both given as per-party labels in {1, 2}.
    fn prob(&self, settings: Vec<u8>, outcomes: Vec<u8>) -> PyResult<f64> {
        let s = self.inner.scenario();
        let x = s.pack_labels(&settings).map_err(to_py_err)?;
        let a = s.pack_labels(&outcomes).map_err(to_py_err)?;
        Ok(self.inner.prob(x, a))
    }

    /// Full correlators for all 2^N joint settings, ordered by packed
    /// setting labels.
    fn correlators(&self) -> PyResult<Vec<f64>> {
        Ok(correlators(&self.inner).map_err(to_py_err)?.values().to_vec())
    }

    /// One full correlator, settings as per-party labels in {1, 2}.
    fn correlator(&self, settings: Vec<u8>) -> PyResult<f64> {
        let x = self.inner.scenario().pack_labels(&settings).map_err(to_py_err)?;
        Ok(correlators(&self.inner).map_err(to_py_err)?.value(x))
    }

    /// Weighted mixture of behaviors; weights must be a distribution.
    #[staticmethod]
    fn mix(parts: Vec<(f64, PyBehavior)>) -> PyResult<Self> {
        let refs: Vec<(f64, &Behavior)> = parts.iter().map(|(w, b)| (*w, &b.inner)).collect();
        Ok(PyBehavior { inner: Behavior::mix(&refs).map_err(to_py_err)? })
    }

    fn max_abs_diff(&self, other: &PyBehavior) -> f64 {
        self.inner.max_abs_diff(&other.inner)
    }

    /// SHA-256 of the canonical JSON rendering, hex encoded.
    fn digest(&self) -> String {
        behavior_digest(&self.inner)
    }

    fn __repr__(&self) -> String {
        format!(
            "Behavior(n_parties={}, {} entries)",
            self.inner.scenario().n_parties(),
            self.inner.table().len()
        )
    }
}

// ---------------------------------------------------------------------------
// Functional

/// A Bell functional in the homogeneous form sum_{x,a} c[x,a] P(a|x),
/// normalized so that classical behaviors give a non-negative value. A
/// negative value on a behavior therefore certifies a violation.
#[pyclass(name = "Functional", module = "bellkit_py", skip_from_py_object)]
#[derive(Clone)]
struct PyFunctional {
    inner: BellFunctional,
}

#[pymethods]
impl PyFunctional {
    #[new]
    fn new(n_parties: usize, coefficients: Vec<f64>) -> PyResult<Self> {
        let s = Scenario::new(n_parties).map_err(to_py_err)?;
        Ok(PyFunctional { inner: BellFunctional::new(s, coefficients).map_err(to_py_err)? })
    }

    /// Functional whose value is the correlator combination sum w[x] E[x].
    #[staticmethod]
    fn from_correlator_weights(n_parties: usize, weights: Vec<f64>) -> PyResult<Self> {
        let s = Scenario::new(n_parties).map_err(to_py_err)?;
        Ok(PyFunctional {
            inner: BellFunctional::from_correlator_weights(s, &weights).map_err(to_py_err)?,
        })
    }

    /// `bound - sum w[x] E[x]`, so classical behaviors obeying the bound
    /// give values >= 0 and the quantum optimum shows up as the most
    /// negative reachable value.
    #[staticmethod]
    fn from_upper_bound(n_parties: usize, weights: Vec<f64>, bound: f64) -> PyResult<Self> {
        let s = Scenario::new(n_parties).map_err(to_py_err)?;
        Ok(PyFunctional {
            inner: BellFunctional::from_upper_bound(s, &weights, bound).map_err(to_py_err)?,
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let dto: FunctionalDto =
            bellkit::json::parse_json(text, "functional document").map_err(to_py_err)?;
        Ok(PyFunctional { inner: dto.into_functional().map_err(to_py_err)? })
    }

    fn to_json(&self) -> PyResult<String> {
        render_json(&FunctionalDto::from(&self.inner)).map_err(to_py_err)
    }

    #[getter]
    fn n_parties(&self) -> usize {
        self.inner.scenario().n_parties()
    }

    #[getter]
    fn coefficients(&self) -> Vec<f64> {
        self.inner.coefficients().to_vec()
    }

    /// Value on a behavior. Negative means the behavior violates.
    fn value(&self, behavior: &PyBehavior) -> PyResult<f64> {
        bell_value(&self.inner, &behavior.inner).map_err(to_py_err)
    }

    /// Minimum over all deterministic strategies, with the 1-based index
    /// of the first minimizer in the vertex enumeration.
    fn classical_bound(&self) -> PyResult<(f64, usize)> {
        let b = classical_bound(&self.inner).map_err(to_py_err)?;
        Ok((b.value, b.optimizer.index() + 1))
    }

    /// Add a constant to the value of every normalized behavior.
    fn shift_uniform(&self, c: f64) -> Self {
        PyFunctional { inner: self.inner.shift_uniform(c) }
    }

    fn scale(&self, s: f64) -> Self {
        PyFunctional { inner: self.inner.scale(s) }
    }

    fn __repr__(&self) -> String {
        format!(
            "Functional(n_parties={}, {} coefficients)",
            self.inner.scenario().n_parties(),
            self.inner.coefficients().len()
        )
    }
}

// ---------------------------------------------------------------------------
// Strategy

/// A shared state plus one two-setting, two-outcome POVM per party.
///
/// Matrices cross the boundary as lists of rows of complex numbers. The
/// state is a density matrix on the tensor product of the local spaces,
/// party 0 in the most significant tensor factor; `measurements` is
/// indexed `[party][setting][outcome]`.
#[pyclass(name = "Strategy", module = "bellkit_py", skip_from_py_object)]
#[derive(Clone)]
struct PyStrategy {
    inner: QuantumStrategy,
}

#[pymethods]
impl PyStrategy {
    #[new]
    fn new(state: Vec<Vec<Complex64>>, measurements: PyMeasurements) -> PyResult<Self> {
        let state = mat_from_py(&state, "state")?;
        let ms = measurements_from_py(measurements)?;
        let inner = QuantumStrategy::new(state, ms).map_err(to_py_err)?;
        inner.validate().map_err(to_py_err)?;
        Ok(PyStrategy { inner })
    }

    /// Build from a pure state vector instead of a density matrix.
    #[staticmethod]
    fn from_pure(state: Vec<Complex64>, measurements: PyMeasurements) -> PyResult<Self> {
        let v = CVec::from_iterator(state.len(), state.iter().copied());
        let ms = measurements_from_py(measurements)?;
        let inner = QuantumStrategy::from_pure(&v, ms).map_err(to_py_err)?;
        inner.validate().map_err(to_py_err)?;
        Ok(PyStrategy { inner })
    }

    /// Haar-seeded random strategy, reproducible for a fixed seed.
    #[staticmethod]
    #[pyo3(signature = (dims, pure = false, projective = false, seed = DEFAULT_SEED))]
    fn random(dims: Vec<usize>, pure: bool, projective: bool, seed: u64) -> PyResult<Self> {
        Ok(PyStrategy { inner: random_strategy(&dims, pure, projective, seed).map_err(to_py_err)? })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let dto: StrategyDto =
            bellkit::json::parse_json(text, "strategy document").map_err(to_py_err)?;
        Ok(PyStrategy { inner: dto.into_strategy().map_err(to_py_err)? })
    }

    fn to_json(&self) -> PyResult<String> {
        render_json(&StrategyDto::from(&self.inner)).map_err(to_py_err)
    }

    #[getter]
    fn n_parties(&self) -> usize {
        self.inner.n_parties()
    }

    #[getter]
    fn dims(&self) -> Vec<usize> {
        self.inner.dims().to_vec()
    }

    #[getter]
    fn state(&self) -> Vec<Vec<Complex64>> {
        mat_to_py(self.inner.state())
    }

    /// POVM effect for (party, setting, outcome), all 0-based.
    fn effect(&self, party: usize, setting: usize, outcome: usize) -> PyResult<Vec<Vec<Complex64>>> {
        if party >= self.inner.n_parties() || setting > 1 || outcome > 1 {
            return Err(PyValueError::new_err(format!(
                "effect index out of range: party {party}, setting {setting}, outcome {outcome}"
            )));
        }
        Ok(mat_to_py(self.inner.measurement(party).effect(setting, outcome)))
    }

    /// The behavior this strategy produces under the Born rule.
    fn behavior(&self) -> PyResult<PyBehavior> {
        Ok(PyBehavior { inner: born_behavior(&self.inner).map_err(to_py_err)? })
    }

    fn is_projective(&self) -> bool {
        check_projective(&self.inner).all_projective()
    }

    /// Largest deviation of any effect from idempotence.
    fn projectivity_residual(&self) -> f64 {
        check_projective(&self.inner).max_residual()
    }

    fn __repr__(&self) -> String {
        format!("Strategy(dims={:?})", self.inner.dims())
    }
}

// ---------------------------------------------------------------------------
// Result wrappers

/// Outcome of a classical membership test: either a convex decomposition
/// over deterministic strategies or a separating functional.
#[pyclass(name = "Certificate", module = "bellkit_py")]
struct PyCertificate {
    inner: MembershipCertificate,
}

#[pymethods]
impl PyCertificate {
    /// "member" or "non_member".
    #[getter]
    fn kind(&self) -> &'static str {
        match self.inner {
            MembershipCertificate::Member { .. } => "member",
            MembershipCertificate::NonMember { .. } => "non_member",
        }
    }

    /// Reconstruction residual for members, separation margin for
    /// non-members. Small but positive in both cases.
    #[getter]
    fn slack(&self) -> f64 {
        match &self.inner {
            MembershipCertificate::Member { reconstruction_residual, .. } => *reconstruction_residual,
            MembershipCertificate::NonMember { value, .. } => -*value,
        }
    }

    /// Functional value on the behavior, for non-members.
    #[getter]
    fn value(&self) -> Option<f64> {
        match &self.inner {
            MembershipCertificate::Member { .. } => None,
            MembershipCertificate::NonMember { value, .. } => Some(*value),
        }
    }

    /// `(vertex, weight)` pairs with 1-based vertex indices, for members.
    #[getter]
    fn weights(&self) -> Option<Vec<(usize, f64)>> {
        match &self.inner {
            MembershipCertificate::Member { weights, .. } => {
                Some(weights.iter().map(|&(v, w)| (v + 1, w)).collect())
            }
            MembershipCertificate::NonMember { .. } => None,
        }
    }

    /// The separating functional, for non-members.
    #[getter]
    fn separating_functional(&self) -> Option<PyFunctional> {
        match &self.inner {
            MembershipCertificate::Member { .. } => None,
            MembershipCertificate::NonMember { functional, .. } => {
                Some(PyFunctional { inner: functional.clone() })
            }
        }
    }

    /// Re-check the certificate against a behavior; raises if it does
    /// not hold.
    fn verify(&self, behavior: &PyBehavior) -> PyResult<()> {
        verify_certificate(&behavior.inner, &self.inner).map_err(to_py_err)
    }

    fn as_dict(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        dto_to_py(py, &CertificateDto::from(&self.inner))
    }

    fn __repr__(&self) -> String {
        format!("Certificate(kind={:?}, slack={:.3e})", self.kind(), self.slack())
    }
}

/// Result of stripping locally deterministic directions from a
/// projective strategy.
#[pyclass(name = "Reduction", module = "bellkit_py")]
struct PyReduction {
    inner: Reduction,
}

#[pymethods]
impl PyReduction {
    /// The stripped strategy, or None if nothing with positive weight
    /// was left.
    #[getter]
    fn reduced(&self) -> Option<PyStrategy> {
        self.inner.reduced.as_ref().map(|s| PyStrategy { inner: s.clone() })
    }

    #[getter]
    fn residual_weight(&self) -> f64 {
        self.inner.residual_weight
    }

    #[getter]
    fn step_count(&self) -> usize {
        self.inner.steps.len()
    }

    /// Rebuild the input behavior from the residual part and the
    /// stripped factors; None when the residual weight vanished.
    fn reconstructed_behavior(&self) -> PyResult<Option<PyBehavior>> {
        Ok(self
            .inner
            .reconstructed_behavior()
            .map_err(to_py_err)?
            .map(|b| PyBehavior { inner: b }))
    }

    fn as_dict(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        dto_to_py(py, &ReductionDto::from(&self.inner))
    }

    fn __repr__(&self) -> String {
        format!(
            "Reduction(steps={}, residual_weight={:.6})",
            self.inner.steps.len(),
            self.inner.residual_weight
        )
    }
}

/// Block decomposition of an overlap-free projective strategy into
/// qubit-pair components.
#[pyclass(name = "Decomposition", module = "bellkit_py")]
struct PyDecomposition {
    inner: BlockDecomposition,
}

#[pymethods]
impl PyDecomposition {
    #[getter]
    fn reconstruction_residual(&self) -> f64 {
        self.inner.reconstruction_residual
    }

    #[getter]
    fn component_count(&self) -> usize {
        self.inner.components.len()
    }

    /// Number of 2x2 Jordan blocks at each party.
    #[getter]
    fn block_counts(&self) -> Vec<usize> {
        self.inner.party_blocks.iter().map(|pb| pb.blocks.len()).collect()
    }

    /// `(indices, weight)` per component; indices are the 1-based block
    /// choices per party used as keys in the JSON document.
    fn components(&self) -> Vec<(Vec<usize>, f64)> {
        self.inner
            .components
            .iter()
            .map(|c| (c.indices.iter().map(|k| k + 1).collect(), c.weight))
            .collect()
    }

    /// N-qubit strategy carried by component `i` (0-based position in
    /// `components()`), or None if its weight fell below the cutoff.
    fn component_strategy(&self, i: usize) -> PyResult<Option<PyStrategy>> {
        Ok(self
            .inner
            .component_strategy(i)
            .map_err(to_py_err)?
            .map(|s| PyStrategy { inner: s }))
    }

    fn as_dict(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        dto_to_py(py, &DecompositionDto::from(&self.inner))
    }

    fn __repr__(&self) -> String {
        format!(
            "Decomposition(components={}, residual={:.3e})",
            self.inner.components.len(),
            self.inner.reconstruction_residual
        )
    }
}

/// Local filter that projects each party onto one block, concentrating
/// the Bell violation on an N-qubit strategy.
#[pyclass(name = "Filter", module = "bellkit_py")]
struct PyFilter {
    inner: SloccFilter,
}

#[pymethods]
impl PyFilter {
    #[getter]
    fn success_probability(&self) -> f64 {
        self.inner.success_probability
    }

    #[getter]
    fn original_value(&self) -> f64 {
        self.inner.original_value
    }

    #[getter]
    fn filtered_value(&self) -> f64 {
        self.inner.filtered_value
    }

    /// 1-based block index chosen at each party.
    #[getter]
    fn selected(&self) -> Vec<usize> {
        self.inner.selected.iter().map(|k| k + 1).collect()
    }

    #[getter]
    fn filtered_strategy(&self) -> PyStrategy {
        PyStrategy { inner: self.inner.filtered_strategy.clone() }
    }

    /// Rank-2 projectors in the original local spaces, one per party.
    fn projectors(&self) -> Vec<Vec<Vec<Complex64>>> {
        self.inner.projectors.iter().map(mat_to_py).collect()
    }

    fn as_dict(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        dto_to_py(py, &FilterDto::from(&self.inner))
    }

    fn __repr__(&self) -> String {
        format!(
            "Filter(success_probability={:.6}, filtered_value={:+.6})",
            self.inner.success_probability, self.inner.filtered_value
        )
    }
}

/// Best strategy found by see-saw optimization of a functional.
#[pyclass(name = "SeesawResult", module = "bellkit_py")]
struct PySeesawResult {
    inner: SeesawResult,
}

#[pymethods]
impl PySeesawResult {
    #[getter]
    fn best_value(&self) -> f64 {
        self.inner.best_value
    }

    #[getter]
    fn best_strategy(&self) -> PyStrategy {
        PyStrategy { inner: self.inner.best_strategy.clone() }
    }

    #[getter]
    fn per_restart_values(&self) -> Vec<f64> {
        self.inner.per_restart_values.clone()
    }

    #[getter]
    fn rounds_used(&self) -> Vec<usize> {
        self.inner.rounds_used.clone()
    }

    fn as_dict(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        dto_to_py(py, &SeesawResultDto::from(&self.inner))
    }

    fn __repr__(&self) -> String {
        format!(
            "SeesawResult(best_value={:+.9}, restarts={})",
            self.inner.best_value,
            self.inner.per_restart_values.len()
        )
    }
}

/// Full analysis of one strategy against one functional: projectivize,
/// strip, compress, account for every component, locate the most
/// violating one.
#[pyclass(name = "PipelineReport", module = "bellkit_py")]
struct PyPipelineReport {
    inner: PipelineReport,
}

#[pymethods]
impl PyPipelineReport {
    #[getter]
    fn original_value(&self) -> f64 {
        self.inner.bell_values.original
    }

    #[getter]
    fn best_block_value(&self) -> Option<f64> {
        self.inner.bell_values.best_block
    }

    #[getter]
    fn classical_bound(&self) -> Option<f64> {
        self.inner.bell_values.classical_bound
    }

    /// "member", "non_member", or None when the scenario was too large
    /// to enumerate.
    #[getter]
    fn classical_certificate(&self) -> Option<String> {
        self.inner.classical_certificate.clone()
    }

    #[getter]
    fn branch_count(&self) -> usize {
        self.inner.branches.len()
    }

    #[getter]
    fn reconstruction_residual(&self) -> f64 {
        self.inner.reconstruction_residual
    }

    fn most_violating(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        dto_to_py(py, &self.inner.most_violating)
    }

    /// The human-readable report the CLI prints.
    fn text(&self) -> String {
        self.inner.render_text()
    }

    fn as_dict(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        dto_to_py(py, &self.inner)
    }

    fn __repr__(&self) -> String {
        format!(
            "PipelineReport(original_value={:+.9}, branches={})",
            self.inner.bell_values.original,
            self.inner.branches.len()
        )
    }
}

// ---------------------------------------------------------------------------
// Operations

/// Behavior of a strategy under the Born rule.
#[pyfunction]
fn evaluate(strategy: &PyStrategy) -> PyResult<PyBehavior> {
    strategy.behavior()
}

/// Decide membership in the classical polytope and return a checkable
/// certificate either way.
#[pyfunction]
fn classify(behavior: &PyBehavior) -> PyResult<PyCertificate> {
    Ok(PyCertificate { inner: is_classical(&behavior.inner).map_err(to_py_err)? })
}

/// Decompose non-projective measurements into a mixture of projective
/// strategies, returned as `(weight, strategy)` pairs.
#[pyfunction]
fn projectivize(strategy: &PyStrategy) -> PyResult<Vec<(f64, PyStrategy)>> {
    let mixture = projectivize_strategy(&strategy.inner).map_err(to_py_err)?;
    Ok(mixture
        .branches
        .into_iter()
        .map(|b| (b.weight, PyStrategy { inner: b.strategy }))
        .collect())
}

/// Strip shared range directions (locally deterministic parts) from a
/// projective strategy.
#[pyfunction]
fn reduce(strategy: &PyStrategy) -> PyResult<PyReduction> {
    Ok(PyReduction { inner: strip_shared_vectors(&strategy.inner).map_err(to_py_err)? })
}

/// Decompose an overlap-free projective strategy into its 2x2 Jordan
/// blocks and the qubit components they carry.
#[pyfunction]
fn compress(strategy: &PyStrategy) -> PyResult<PyDecomposition> {
    Ok(PyDecomposition { inner: core_compress(&strategy.inner).map_err(to_py_err)? })
}

/// Local filter concentrating the violation of `functional` onto the
/// best qubit component; requires a violating strategy.
#[pyfunction]
fn slocc_filter(strategy: &PyStrategy, functional: &PyFunctional) -> PyResult<PyFilter> {
    Ok(PyFilter {
        inner: core_slocc_filter(&strategy.inner, &functional.inner).map_err(to_py_err)?,
    })
}

/// See-saw minimization of a functional over strategies with the given
/// local dimensions. Deterministic for a fixed seed.
#[pyfunction]
#[pyo3(signature = (functional, dims, restarts = 20, max_rounds = 200, tol = 1e-10, seed = DEFAULT_SEED))]
fn optimize(
    functional: &PyFunctional,
    dims: Vec<usize>,
    restarts: usize,
    max_rounds: usize,
    tol: f64,
    seed: u64,
) -> PyResult<PySeesawResult> {
    let cfg = SeesawConfig { restarts, max_rounds, convergence_tol: tol, seed };
    Ok(PySeesawResult { inner: seesaw(&functional.inner, &dims, &cfg).map_err(to_py_err)? })
}

/// Run the whole chain (projectivize, strip, compress, evaluate, filter)
/// and return the consolidated report.
#[pyfunction]
fn pipeline(strategy: &PyStrategy, functional: &PyFunctional) -> PyResult<PyPipelineReport> {
    Ok(PyPipelineReport {
        inner: run_pipeline(&strategy.inner, &functional.inner).map_err(to_py_err)?,
    })
}

/// Behavior of a local deterministic strategy. `outcomes[party]` is the
/// pair of outcome labels in {1, 2} for the party's two settings.
#[pyfunction]
fn deterministic_behavior(outcomes: Vec<(u8, u8)>) -> PyResult<PyBehavior> {
    let s = Scenario::new(outcomes.len()).map_err(to_py_err)?;
    let strat =
        DeterministicStrategy::new(outcomes.iter().map(|&(a, b)| [a, b]).collect()).map_err(to_py_err)?;
    Ok(PyBehavior { inner: core_deterministic(&s, &strat).map_err(to_py_err)? })
}

#[pymodule]
fn bellkit_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyBehavior>()?;
    m.add_class::<PyFunctional>()?;
    m.add_class::<PyStrategy>()?;
    m.add_class::<PyCertificate>()?;
    m.add_class::<PyReduction>()?;
    m.add_class::<PyDecomposition>()?;
    m.add_class::<PyFilter>()?;
    m.add_class::<PySeesawResult>()?;
    m.add_class::<PyPipelineReport>()?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(classify, m)?)?;
    m.add_function(wrap_pyfunction!(projectivize, m)?)?;
    m.add_function(wrap_pyfunction!(reduce, m)?)?;
    m.add_function(wrap_pyfunction!(compress, m)?)?;
    m.add_function(wrap_pyfunction!(slocc_filter, m)?)?;
    m.add_function(wrap_pyfunction!(optimize, m)?)?;
    m.add_function(wrap_pyfunction!(pipeline, m)?)?;
    m.add_function(wrap_pyfunction!(deterministic_behavior, m)?)?;
    m.add("DEFAULT_SEED", DEFAULT_SEED)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
