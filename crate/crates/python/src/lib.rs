//! Python bindings for the `popescu` crate.

use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use popescu::chain::{self, LocalObservable, DEFAULT_DECAY_TOL};
use popescu::classify;
use popescu::cli::{self, SystemFile, TolOverrides};
use popescu::cpmap::{self, peripheral_values};
use popescu::dilation;
use popescu::modular;
use popescu::popescu::named;
use popescu::{CMatrix, Error, PopescuSystem, Tolerances};

type Nested = Vec<Vec<Complex64>>;

fn py_err(e: Error) -> PyErr {
    if e.is_numerical_health() {
        PyRuntimeError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn to_matrix(rows: &Nested) -> PyResult<CMatrix> {
    let r = rows.len();
    let c = rows.first().map_or(0, |row| row.len());
    if rows.iter().any(|row| row.len() != c) {
        return Err(PyValueError::new_err("ragged matrix"));
    }
    Ok(CMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

fn to_nested(m: &CMatrix) -> Nested {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

/// A row contraction `(V_1, ..., V_d)` with `Σ V_i V_i* = 1`.
#[pyclass(name = "System", module = "popescu_py", from_py_object)]
#[derive(Clone)]
struct PySystem {
    inner: PopescuSystem,
    tol: Tolerances,
}

impl PySystem {
    fn wrap(inner: PopescuSystem) -> Self {
        Self { inner, tol: Tolerances::default() }
    }

    fn state(&self) -> PyResult<cpmap::DensityState> {
        Ok(cpmap::invariant_state(&self.inner, self.tol.support).map_err(py_err)?.state)
    }
}

#[pymethods]
impl PySystem {
    #[new]
    #[pyo3(signature = (operators, tol = 1e-9))]
    fn new(operators: Vec<Nested>, tol: f64) -> PyResult<Self> {
        let ops = operators.iter().map(to_matrix).collect::<PyResult<Vec<_>>>()?;
        let mut s = Self::wrap(PopescuSystem::new(ops, tol).map_err(py_err)?);
        s.tol.validate = tol;
        Ok(s)
    }

    /// One of `"arveson"`, `"rank_one"`, `"swap"`.
    #[staticmethod]
    fn named(name: &str) -> PyResult<Self> {
        let sys = match name {
            "arveson" => named::arveson(),
            "rank_one" => named::rank_one(),
            "swap" => named::swap(),
            _ => return Err(PyValueError::new_err(format!("unknown system {name:?}"))),
        };
        Ok(Self::wrap(sys))
    }

    #[staticmethod]
    fn random(d: usize, n: usize, seed: u64) -> Self {
        Self::wrap(popescu::random_system(d, n, seed))
    }

    /// Parse a system file document.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let file = cli::parse_system_text(text.as_bytes(), "argument").map_err(|e| PyValueError::new_err(e.to_string()))?;
        let tol = file.effective_tolerances(&TolOverrides::default());
        let inner = file.to_system(tol.validate).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(Self { inner, tol })
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&SystemFile::from_system(&self.inner, None)).expect("system serializes")
    }

    #[getter]
    fn d(&self) -> usize {
        self.inner.d()
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    fn operators(&self) -> Vec<Nested> {
        self.inner.ops().iter().map(to_nested).collect()
    }

    /// `||Σ V_i V_i* - 1||`.
    fn validate(&self) -> f64 {
        self.inner.validate()
    }

    fn fixed_dim(&self) -> PyResult<usize> {
        Ok(cpmap::fixed_points(&self.inner, self.tol.kernel).map_err(py_err)?.dim())
    }

    fn invariant_state(&self) -> PyResult<Nested> {
        Ok(to_nested(&self.state()?.rho))
    }

    /// Peripheral eigenvalues of the transfer map.
    fn peripheral(&self) -> PyResult<Vec<Complex64>> {
        let p = cpmap::peripheral_spectrum(&self.inner, &self.tol).map_err(py_err)?;
        Ok(peripheral_values(&p))
    }

    /// Order of the gauge subgroup, or `None` when the system is not ergodic.
    fn k(&self) -> PyResult<Option<usize>> {
        Ok(classify::classify_od(&self.inner, &self.tol).map_err(py_err)?.k())
    }

    /// `True`, `False`, or `None` when the chain hypotheses fail.
    fn chain_pure(&self) -> PyResult<Option<bool>> {
        let ch = classify::classify_chain(&self.inner, &self.tol).map_err(py_err)?;
        Ok(match ch.verdict {
            classify::ChainVerdict::Pure => Some(true),
            classify::ChainVerdict::NotPure => Some(false),
            classify::ChainVerdict::HypothesesNotMet(_) => None,
        })
    }

    /// The full analysis report as a JSON string.
    fn analyze(&self) -> String {
        let file = SystemFile::from_system(&self.inner, None);
        let bytes = serde_json::to_vec(&file).expect("system serializes");
        serde_json::to_string(&cli::analyze_file(&file, &bytes, &TolOverrides::default()).json)
            .expect("report serializes")
    }

    /// Chain expectation of `factors[0] ⊗ factors[1] ⊗ ...`.
    fn expectation(&self, factors: Vec<Nested>) -> PyResult<Complex64> {
        let fs = factors.iter().map(to_matrix).collect::<PyResult<Vec<_>>>()?;
        let obs = LocalObservable::new(1, fs).map_err(py_err)?;
        chain::expectation(&self.inner, &self.state()?, &obs, 1e-8).map_err(py_err)
    }

    /// Clustering defects of single-site observables for gaps `0..=n_max`.
    #[pyo3(signature = (x, y, n_max = 50))]
    fn clustering(&self, x: Nested, y: Nested, n_max: usize) -> PyResult<Vec<f64>> {
        let x = LocalObservable::single(to_matrix(&x)?).map_err(py_err)?;
        let y = LocalObservable::single(to_matrix(&y)?).map_err(py_err)?;
        let cd = chain::clustering_defect(&self.inner, &self.state()?, &x, &y, n_max, DEFAULT_DECAY_TOL, 1e-8)
            .map_err(py_err)?;
        Ok(cd.defects)
    }

    /// `(quotient_dim, isometry, completeness, compression)` of the
    /// truncated dilation.
    #[pyo3(signature = (level = 3))]
    fn dilate(&self, level: usize) -> PyResult<(usize, f64, f64, f64)> {
        let dil = dilation::build(&self.inner, level, dilation::DEFAULT_GRAM_TOL).map_err(py_err)?;
        let r = dilation::cuntz_residuals(&dil);
        let c = dilation::compression_residual(&dil, &self.inner);
        Ok((dil.quotient_dim(), r.isometry_residual, r.completeness_residual, c))
    }

    /// Largest residual among the duality identities. Needs a faithful
    /// invariant state.
    fn duality_residual(&self) -> PyResult<f64> {
        let r = modular::verify_duality(&self.inner, &self.state()?, self.tol.kernel).map_err(py_err)?;
        Ok(r.max_residual())
    }

    /// The dual system in parameter form.
    fn dual(&self) -> PyResult<PySystem> {
        let dual = modular::dual_system(&self.inner, &self.state()?, self.tol.kernel).map_err(py_err)?;
        let inner = dual.parameter_system(self.tol.validate).map_err(py_err)?;
        Ok(Self { inner, tol: self.tol })
    }

    fn __repr__(&self) -> String {
        format!("System(d={}, n={})", self.inner.d(), self.inner.n())
    }
}

/// Dimension of the intertwiners `X` with `Σ W_i X V_i* = X`.
#[pyfunction]
fn intertwiners(w: &PySystem, v: &PySystem) -> PyResult<usize> {
    Ok(cpmap::mixed_fixed_points(&w.inner, &v.inner, w.tol.kernel).map_err(py_err)?.dim())
}

#[pymodule]
fn popescu_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySystem>()?;
    m.add_function(wrap_pyfunction!(intertwiners, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
