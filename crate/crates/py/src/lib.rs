use capcount::problem::{run, ProblemFile, Task};
use capcount::{
    CapError, CapacityOptions, CapacityResult, DeterminantalSpec, EstimateInterval, MatroidSpec, PolynomialOracle,
    ProductSpec, SparseTerms,
};
use nalgebra::DMatrix;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn to_py(e: CapError) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn matrix(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(PyValueError::new_err("matrix rows have different lengths"));
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

fn options(eps: f64, budget: usize, seed: u64) -> CapacityOptions {
    CapacityOptions::default().with_eps(eps).with_budget(budget).with_seed(seed)
}

/// A polynomial with nonnegative coefficients, accessed through evaluation.
#[pyclass(name = "Polynomial", frozen)]
struct PyPolynomial {
    inner: PolynomialOracle,
}

#[pymethods]
impl PyPolynomial {
    /// Explicit terms `[(exponents, coefficient), ...]`.
    #[staticmethod]
    #[pyo3(signature = (m, terms, assert_real_stable = false))]
    fn sparse(m: usize, terms: Vec<(Vec<u32>, f64)>, assert_real_stable: bool) -> PyResult<Self> {
        let g = PolynomialOracle::sparse(SparseTerms::new(m, terms).map_err(to_py)?);
        Ok(Self { inner: g.with_real_stable_assertion(assert_real_stable) })
    }

    /// Product of the linear forms given by the rows of `a`.
    #[staticmethod]
    fn product(a: Vec<Vec<f64>>) -> PyResult<Self> {
        Ok(Self { inner: PolynomialOracle::linear_product(ProductSpec::from_rows(&a).map_err(to_py)?) })
    }

    /// `Σ_S det(V_S V_Sᵀ) z^S` over `n`-subsets of the rows of `v`.
    #[staticmethod]
    #[pyo3(signature = (v, n = None))]
    fn determinantal(v: Vec<Vec<f64>>, n: Option<usize>) -> PyResult<Self> {
        let spec = DeterminantalSpec::from_rows(&v).map_err(to_py)?;
        let inner = match n {
            Some(n) => PolynomialOracle::determinantal_with_degree(spec, n),
            None => PolynomialOracle::determinantal(spec),
        };
        Ok(Self { inner })
    }

    /// `Π_j (Σ_{i∈P_j} z_i)^{b_j}`.
    #[staticmethod]
    fn partition_power(m: usize, parts: Vec<Vec<usize>>, powers: Vec<usize>) -> PyResult<Self> {
        Ok(Self { inner: PolynomialOracle::partition_power(m, parts, powers).map_err(to_py)? })
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.m()
    }

    #[getter]
    fn degree(&self) -> usize {
        self.inner.degree()
    }

    #[getter]
    fn is_multilinear(&self) -> bool {
        self.inner.is_multilinear()
    }

    #[getter]
    fn is_real_stable(&self) -> bool {
        self.inner.is_real_stable_asserted()
    }

    fn evaluate(&self, z: Vec<f64>) -> PyResult<f64> {
        self.inner.evaluate(&z).map_err(to_py)
    }

    fn log_evaluate(&self, z: Vec<f64>) -> PyResult<f64> {
        self.inner.log_evaluate(&z).map_err(to_py)
    }

    fn partial_derivative(&self, i: usize, w: Vec<f64>) -> PyResult<f64> {
        self.inner.partial_derivative(i, &w).map_err(to_py)
    }

    fn scaled(&self, c: f64) -> PyResult<Self> {
        Ok(Self { inner: self.inner.scaled(c).map_err(to_py)? })
    }

    fn __repr__(&self) -> String {
        format!("Polynomial(kind={:?}, m={}, degree={})", self.inner.kind(), self.inner.m(), self.inner.degree())
    }
}

/// A family of equal-size subsets of `0..m`, usually the bases of a matroid.
#[pyclass(name = "Matroid", frozen)]
struct PyMatroid {
    inner: MatroidSpec,
}

#[pymethods]
impl PyMatroid {
    #[staticmethod]
    fn uniform(m: usize, n: usize) -> PyResult<Self> {
        Ok(Self { inner: MatroidSpec::uniform(m, n).map_err(to_py)? })
    }

    #[staticmethod]
    fn partition(m: usize, parts: Vec<Vec<usize>>, quotas: Vec<usize>) -> PyResult<Self> {
        Ok(Self { inner: MatroidSpec::partition(m, parts, quotas).map_err(to_py)? })
    }

    #[staticmethod]
    fn graphic(vertices: usize, edges: Vec<(usize, usize)>) -> PyResult<Self> {
        Ok(Self { inner: MatroidSpec::graphic(vertices, edges).map_err(to_py)? })
    }

    #[staticmethod]
    #[pyo3(signature = (v, balanced = false))]
    fn linear(v: Vec<Vec<f64>>, balanced: bool) -> PyResult<Self> {
        let v = matrix(&v)?;
        let inner = if balanced { MatroidSpec::linear_balanced(v) } else { MatroidSpec::linear(v) };
        Ok(Self { inner: inner.map_err(to_py)? })
    }

    #[staticmethod]
    #[pyo3(signature = (m, bases, assert_strongly_rayleigh = false))]
    fn explicit(m: usize, bases: Vec<Vec<usize>>, assert_strongly_rayleigh: bool) -> PyResult<Self> {
        Ok(Self { inner: MatroidSpec::explicit(m, bases, assert_strongly_rayleigh).map_err(to_py)? })
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.m()
    }

    #[getter]
    fn rank(&self) -> usize {
        self.inner.rank()
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.inner.kind_name()
    }

    #[getter]
    fn is_matroid(&self) -> bool {
        self.inner.is_matroid()
    }

    fn is_base(&self, set: Vec<usize>) -> bool {
        self.inner.is_base(&set)
    }

    fn min_weight_base(&self, w: Vec<f64>) -> PyResult<(Vec<usize>, f64)> {
        self.inner.min_weight_base(&w).map_err(to_py)
    }

    #[pyo3(signature = (limit = 100_000))]
    fn enumerate_bases(&self, limit: usize) -> PyResult<Vec<Vec<usize>>> {
        self.inner.enumerate_bases(limit).map_err(to_py)
    }

    fn dual(&self) -> Self {
        Self { inner: self.inner.dual() }
    }

    fn __repr__(&self) -> String {
        format!("Matroid(kind={}, m={}, rank={})", self.inner.kind_name(), self.inner.m(), self.inner.rank())
    }
}

#[pyclass(name = "Capacity", frozen, get_all)]
struct PyCapacity {
    value: f64,
    log_value: f64,
    minimizer: Vec<f64>,
    status: &'static str,
    iterations: usize,
}

impl From<CapacityResult> for PyCapacity {
    fn from(r: CapacityResult) -> Self {
        Self {
            value: r.value,
            log_value: r.log_value,
            minimizer: r.minimizer,
            status: r.status.as_str(),
            iterations: r.iterations,
        }
    }
}

#[pymethods]
impl PyCapacity {
    fn __repr__(&self) -> String {
        format!("Capacity(value={}, status={})", self.value, self.status)
    }
}

/// A point estimate with an interval known to contain the target.
#[pyclass(name = "Estimate", frozen, get_all)]
struct PyEstimate {
    point: f64,
    lower: f64,
    upper: f64,
    bound_name: String,
    bound_value: f64,
    point_x: Option<Vec<f64>>,
    status: &'static str,
    iterations: usize,
}

impl From<EstimateInterval> for PyEstimate {
    fn from(e: EstimateInterval) -> Self {
        Self {
            point: e.point,
            lower: e.lower,
            upper: e.upper,
            bound_name: e.bound.name,
            bound_value: e.bound.value,
            point_x: e.point_x,
            status: e.status.as_str(),
            iterations: e.iterations,
        }
    }
}

#[pymethods]
impl PyEstimate {
    fn __repr__(&self) -> String {
        format!("Estimate(point={}, lower={}, upper={}, bound={})", self.point, self.lower, self.upper, self.bound_name)
    }
}

/// Capacity of `g` with respect to the base family.
#[pyfunction]
#[pyo3(signature = (g, mat, eps = 1e-6, budget = 10_000, seed = 0))]
fn cap(py: Python<'_>, g: &PyPolynomial, mat: &PyMatroid, eps: f64, budget: usize, seed: u64) -> PyResult<PyCapacity> {
    let opts = options(eps, budget, seed);
    let r = py.detach(|| capcount::cap(&g.inner, &mat.inner, &opts)).map_err(to_py)?;
    Ok(r.into())
}

/// Interval estimate of the coefficient sum over the bases.
#[pyfunction]
#[pyo3(signature = (g, mat, eps = 1e-6, budget = 10_000, seed = 0))]
fn count_estimate(
    py: Python<'_>,
    g: &PyPolynomial,
    mat: &PyMatroid,
    eps: f64,
    budget: usize,
    seed: u64,
) -> PyResult<PyEstimate> {
    let opts = options(eps, budget, seed);
    let e = py.detach(|| capcount::count_estimate(&g.inner, &mat.inner, &opts)).map_err(to_py)?;
    Ok(e.into())
}

/// Interval estimate of the largest coefficient indexed by a base.
#[pyfunction]
#[pyo3(signature = (g, mat, eps = 1e-6, budget = 10_000, seed = 0))]
fn max_estimate(
    py: Python<'_>,
    g: &PyPolynomial,
    mat: &PyMatroid,
    eps: f64,
    budget: usize,
    seed: u64,
) -> PyResult<PyEstimate> {
    let opts = options(eps, budget, seed);
    let e = py.detach(|| capcount::max_estimate(&g.inner, &mat.inner, &opts)).map_err(to_py)?;
    Ok(e.into())
}

/// Interval estimate of the largest principal minor of `l` indexed by a base.
#[pyfunction]
#[pyo3(signature = (l, mat, eps = 1e-6, budget = 10_000, seed = 0))]
fn subdet_max(
    py: Python<'_>,
    l: Vec<Vec<f64>>,
    mat: &PyMatroid,
    eps: f64,
    budget: usize,
    seed: u64,
) -> PyResult<PyEstimate> {
    let l = matrix(&l)?;
    let opts = options(eps, budget, seed);
    let e = py.detach(|| capcount::subdet_max(&l, &mat.inner, &opts)).map_err(to_py)?;
    Ok(e.into())
}

/// Runs a task on a JSON problem document and returns the JSON result document.
#[pyfunction]
#[pyo3(signature = (problem, task = None))]
fn run_problem(py: Python<'_>, problem: &str, task: Option<&str>) -> PyResult<String> {
    let p = ProblemFile::from_json(problem).map_err(to_py)?;
    let task = match task {
        Some(t) => serde_task(t)?,
        None => p.task.ok_or_else(|| PyValueError::new_err("problem has no task; pass one explicitly"))?,
    };
    let doc = py.detach(|| run(&p, task)).map_err(to_py)?;
    Ok(doc.to_json())
}

fn serde_task(name: &str) -> PyResult<Task> {
    serde_json::from_value(serde_json::Value::String(name.to_string()))
        .map_err(|_| PyValueError::new_err(format!("unknown task {name:?}")))
}

#[pymodule]
fn capcount_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPolynomial>()?;
    m.add_class::<PyMatroid>()?;
    m.add_class::<PyCapacity>()?;
    m.add_class::<PyEstimate>()?;
    m.add_function(wrap_pyfunction!(cap, m)?)?;
    m.add_function(wrap_pyfunction!(count_estimate, m)?)?;
    m.add_function(wrap_pyfunction!(max_estimate, m)?)?;
    m.add_function(wrap_pyfunction!(subdet_max, m)?)?;
    m.add_function(wrap_pyfunction!(run_problem, m)?)?;
    Ok(())
}
