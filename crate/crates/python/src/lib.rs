//! Python bindings: exact dyadics, norms, specs, construction, distances and counting.

use num_bigint::{BigInt, BigUint};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use polyfrac::construct::{self, FractalSpec, Role, SamplePoint};
use polyfrac::dimension::{self, ProfileBase, ProfileVariant};
use polyfrac::distset;
use polyfrac::dyadic::Dyadic;
use polyfrac::io::{self, ConfigDocument};
use polyfrac::norms::{PolyhedralNorm, Preset};
use polyfrac::rational::{format_rational, parse_rational};
use polyfrac::schedule::ScheduleRule;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

/// Exact value `mantissa * 2**-precision`.
#[pyclass(name = "Dyadic", module = "polyfrac_py", frozen, from_py_object)]
#[derive(Clone)]
struct PyDyadic(Dyadic);

#[pymethods]
impl PyDyadic {
    #[new]
    fn new(mantissa: BigInt, precision: u32) -> Self {
        PyDyadic(Dyadic::new(mantissa, precision))
    }

    #[getter]
    fn mantissa(&self) -> BigInt {
        self.0.mantissa().clone()
    }

    #[getter]
    fn precision(&self) -> u32 {
        self.0.precision()
    }

    /// Digit in place `j`, floor semantics.
    fn bit(&self, j: u32) -> PyResult<bool> {
        self.0.bit(j).map_err(value_err)
    }

    fn floor_scaled(&self, j: u32) -> BigInt {
        self.0.floor_scaled(j)
    }

    fn truncate(&self, p: u32) -> Self {
        PyDyadic(self.0.truncate(p))
    }

    fn __add__(&self, other: &Self) -> Self {
        PyDyadic(&self.0 + &other.0)
    }

    fn __sub__(&self, other: &Self) -> Self {
        PyDyadic(&self.0 - &other.0)
    }

    fn __mul__(&self, other: &Self) -> Self {
        PyDyadic(&self.0 * &other.0)
    }

    fn __neg__(&self) -> Self {
        PyDyadic(-&self.0)
    }

    fn __abs__(&self) -> Self {
        PyDyadic(self.0.abs())
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.0 == other.0
    }

    fn __lt__(&self, other: &Self) -> bool {
        self.0 < other.0
    }

    fn __le__(&self, other: &Self) -> bool {
        self.0 <= other.0
    }

    fn __hash__(&self) -> u64 {
        use std::hash::{Hash, Hasher};
        let mut h = std::collections::hash_map::DefaultHasher::new();
        self.0.hash(&mut h);
        h.finish()
    }

    fn __float__(&self) -> f64 {
        self.0.to_f64()
    }

    fn __str__(&self) -> String {
        self.0.to_string()
    }

    fn __repr__(&self) -> String {
        format!("Dyadic({}, {})", self.0.mantissa(), self.0.precision())
    }
}

fn dyadics(xs: Vec<PyDyadic>) -> Vec<Dyadic> {
    xs.into_iter().map(|x| x.0).collect()
}

#[pyclass(name = "Norm", module = "polyfrac_py", frozen, from_py_object)]
#[derive(Clone)]
struct PyNorm(PolyhedralNorm);

#[pymethods]
impl PyNorm {
    /// `"linf"` or `"l1"` in dimension `d`.
    #[staticmethod]
    fn preset(name: &str, d: usize) -> PyResult<Self> {
        let preset: Preset = name.parse().map_err(value_err)?;
        PolyhedralNorm::preset(preset, d).map(PyNorm).map_err(value_err)
    }

    /// One row of `(mantissa, precision)` pairs per functional.
    #[staticmethod]
    fn custom(rows: Vec<Vec<(i64, u32)>>) -> PyResult<Self> {
        PolyhedralNorm::custom(&rows).map(PyNorm).map_err(value_err)
    }

    #[getter]
    fn d(&self) -> usize {
        self.0.d()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn eval(&self, x: Vec<PyDyadic>) -> PyResult<PyDyadic> {
        self.0.eval(&dyadics(x)).map(PyDyadic).map_err(value_err)
    }

    /// 1-based index of the first maximizing functional.
    fn argmax(&self, x: Vec<PyDyadic>) -> PyResult<usize> {
        self.0.argmax(&dyadics(x)).map_err(value_err)
    }

    fn min_c(&self) -> u32 {
        self.0.min_c()
    }
}

#[pyclass(name = "Spec", module = "polyfrac_py", frozen, from_py_object)]
#[derive(Clone)]
struct PySpec(FractalSpec);

#[pymethods]
impl PySpec {
    #[new]
    #[pyo3(signature = (s, norm, m, c=None, widen=true, seed=0))]
    fn new(s: &str, norm: &PyNorm, m: Vec<u32>, c: Option<u32>, widen: bool, seed: u64) -> PyResult<Self> {
        let s = parse_rational(s).map_err(value_err)?;
        let rule = ScheduleRule::Explicit { m, widen };
        FractalSpec::generate(s, norm.0.clone(), c, &rule, seed)
            .map(PySpec)
            .map_err(value_err)
    }

    /// Resolves a JSON run configuration.
    #[staticmethod]
    fn from_config(text: &str) -> PyResult<Self> {
        let doc = ConfigDocument::from_json(text).map_err(value_err)?;
        doc.resolve().map(PySpec).map_err(value_err)
    }

    #[getter]
    fn d(&self) -> usize {
        self.0.d()
    }

    #[getter]
    fn s(&self) -> String {
        format_rational(&self.0.s())
    }

    #[getter]
    fn alpha(&self) -> String {
        format_rational(&self.0.alpha())
    }

    #[getter]
    fn c(&self) -> u32 {
        self.0.schedule().c()
    }

    #[getter]
    fn m(&self) -> Vec<u32> {
        self.0.schedule().m_list().to_vec()
    }

    #[getter]
    fn n(&self) -> Vec<u32> {
        self.0.schedule().n_list().to_vec()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.0.seed()
    }

    #[getter]
    fn precision(&self) -> u32 {
        self.0.precision()
    }

    #[getter]
    fn norm(&self) -> PyNorm {
        PyNorm(self.0.norm().clone())
    }

    /// Places `(lo, hi]` of block `k`.
    fn window(&self, k: usize) -> PyResult<(u32, u32)> {
        let w = self.0.schedule().window(k).map_err(value_err)?;
        Ok((w.lo, w.hi))
    }

    fn block_functional(&self, k: usize) -> usize {
        self.0.schedule().block_functional(k)
    }

    fn with_seed(&self, seed: u64) -> Self {
        PySpec(self.0.with_seed(seed))
    }
}

#[pyclass(name = "Point", module = "polyfrac_py", frozen, from_py_object)]
#[derive(Clone)]
struct PyPoint(SamplePoint);

#[pymethods]
impl PyPoint {
    #[new]
    #[pyo3(signature = (mantissas, precision, pinned=false))]
    fn new(mantissas: Vec<BigUint>, precision: u32, pinned: bool) -> PyResult<Self> {
        let role = if pinned { Role::Pinned } else { Role::Sample };
        SamplePoint::from_mantissas(mantissas, precision, role)
            .map(PyPoint)
            .ok_or_else(|| value_err("mantissa does not fit the precision"))
    }

    #[getter]
    fn mantissas(&self) -> Vec<BigUint> {
        self.0.mantissas().to_vec()
    }

    #[getter]
    fn precision(&self) -> u32 {
        self.0.precision()
    }

    #[getter]
    fn pinned(&self) -> bool {
        self.0.role() == Role::Pinned
    }

    fn coords(&self) -> Vec<PyDyadic> {
        self.0.coords().into_iter().map(PyDyadic).collect()
    }

    /// Digit of coordinate `i` (0-based) in place `j`.
    fn digit(&self, i: usize, j: u32) -> PyResult<bool> {
        if i >= self.0.d() {
            return Err(value_err(format!("coordinate {i} out of range")));
        }
        self.0.digit(i, j).map_err(value_err)
    }

    fn with_flipped_digit(&self, i: usize, j: u32) -> PyResult<Self> {
        if i >= self.0.d() || j == 0 || j > self.0.precision() {
            return Err(value_err(format!("no digit ({i}, {j})")));
        }
        let mut p = self.0.clone();
        p.flip_digit(i, j);
        Ok(PyPoint(p))
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.0 == other.0
    }

    fn __repr__(&self) -> String {
        format!("Point(d={}, precision={}, pinned={})", self.0.d(), self.0.precision(), self.pinned())
    }
}

fn points(xs: &[PyPoint]) -> Vec<SamplePoint> {
    xs.iter().map(|p| p.0.clone()).collect()
}

#[pyfunction]
fn pinned_point(spec: &PySpec) -> PyResult<PyPoint> {
    construct::pinned_point(&spec.0).map(PyPoint).map_err(runtime_err)
}

#[pyfunction]
fn sample_set(py: Python<'_>, spec: &PySpec, count: usize) -> PyResult<Vec<PyPoint>> {
    let spec = spec.0.clone();
    let pts = py
        .detach(|| construct::sample_set(&spec, count))
        .map_err(value_err)?;
    Ok(pts.into_iter().map(PyPoint).collect())
}

#[pyfunction]
fn membership(point: &PyPoint, spec: &PySpec, k: usize) -> PyResult<bool> {
    construct::membership(&point.0, &spec.0, k).map_err(value_err)
}

/// `(block, membership, carry, pattern)` for every block.
#[pyfunction]
fn check_point(point: &PyPoint, spec: &PySpec) -> PyResult<Vec<(usize, bool, bool, bool)>> {
    let checks = construct::check_point(&point.0, &spec.0).map_err(value_err)?;
    Ok(checks
        .into_iter()
        .map(|c| (c.block, c.membership, c.carry, c.pattern))
        .collect())
}

/// `(value, achieving functional)` per sample.
#[pyfunction]
fn pinned_distances(x: &PyPoint, ys: Vec<PyPoint>, norm: &PyNorm) -> PyResult<Vec<(PyDyadic, usize)>> {
    let records = distset::pinned(&x.0, &points(&ys), &norm.0).map_err(value_err)?;
    Ok(records
        .into_iter()
        .map(|r| (PyDyadic(r.value), r.achieving))
        .collect())
}

/// Whether the distance digits of `x - y` are constant on every shrunk window.
#[pyfunction]
fn collapse_holds(x: &PyPoint, y: &PyPoint, spec: &PySpec) -> PyResult<bool> {
    distset::collapse_check(&x.0, &y.0, &spec.0)
        .map(|r| r.passed())
        .map_err(value_err)
}

#[pyfunction]
#[pyo3(signature = (spec, r, budget=100_000_000))]
fn count_exact(py: Python<'_>, spec: &PySpec, r: u32, budget: u64) -> PyResult<BigUint> {
    let spec = spec.0.clone();
    py.detach(|| dimension::count_exact(&spec, r, budget))
        .map(|c| c.count)
        .map_err(runtime_err)
}

#[pyfunction]
fn decoupled_product_count(spec: &PySpec, r: u32) -> Option<BigUint> {
    dimension::decoupled_product_count(&spec.0, r)
}

/// `P(r)` for `r = 0 ..= r_max`; `functional = None` is the set profile.
#[pyfunction]
#[pyo3(signature = (spec, r_max, functional=None, c_aware=false))]
fn profile(spec: &PySpec, r_max: u32, functional: Option<usize>, c_aware: bool) -> Vec<i64> {
    let base = functional.map_or(ProfileBase::Set, ProfileBase::Distance);
    let variant = if c_aware {
        ProfileVariant::CAware
    } else {
        ProfileVariant::Ideal
    };
    let p = dimension::profile(&spec.0, base, variant);
    (0..=r_max).map(|r| p.eval(r)).collect()
}

/// `(r, bound, limit)` distance checkpoints of functional `ell`.
#[pyfunction]
fn distance_checkpoints(spec: &PySpec, ell: usize) -> Vec<(u32, u32, u32)> {
    dimension::distance_checkpoints(&spec.0, ell)
        .into_iter()
        .map(|c| (c.r, c.bound, c.limit()))
        .collect()
}

#[pyfunction]
fn falconer_check(dim_set: f64, dim_distance: f64, d: usize, tol: f64) -> bool {
    dimension::falconer_check(dim_set, dim_distance, d, tol).pass
}

#[pyfunction]
fn write_points(pts: Vec<PyPoint>) -> String {
    io::write_points(&points(&pts))
}

#[pyfunction]
fn parse_points(text: &str) -> PyResult<Vec<PyPoint>> {
    io::parse_points(text)
        .map(|v| v.into_iter().map(PyPoint).collect())
        .map_err(value_err)
}

#[pymodule]
fn polyfrac_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDyadic>()?;
    m.add_class::<PyNorm>()?;
    m.add_class::<PySpec>()?;
    m.add_class::<PyPoint>()?;
    m.add_function(wrap_pyfunction!(pinned_point, m)?)?;
    m.add_function(wrap_pyfunction!(sample_set, m)?)?;
    m.add_function(wrap_pyfunction!(membership, m)?)?;
    m.add_function(wrap_pyfunction!(check_point, m)?)?;
    m.add_function(wrap_pyfunction!(pinned_distances, m)?)?;
    m.add_function(wrap_pyfunction!(collapse_holds, m)?)?;
    m.add_function(wrap_pyfunction!(count_exact, m)?)?;
    m.add_function(wrap_pyfunction!(decoupled_product_count, m)?)?;
    m.add_function(wrap_pyfunction!(profile, m)?)?;
    m.add_function(wrap_pyfunction!(distance_checkpoints, m)?)?;
    m.add_function(wrap_pyfunction!(falconer_check, m)?)?;
    m.add_function(wrap_pyfunction!(write_points, m)?)?;
    m.add_function(wrap_pyfunction!(parse_points, m)?)?;
    Ok(())
}
