//! Python bindings: the main types (measure space, subspace, power map,
//! data pair) and operations (solves, projections, splits, audits) behind a
//! thin list-based interface.

use std::sync::Arc;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use pqlab::instance::{gen_grid_hodge, gen_random, GridParams, RandomParams};
use pqlab::interp;
use pqlab::io;
use pqlab::map::PPowerMap;
use pqlab::measure::{self, DataPair, ExponentPair, Field, MeasureSpace as CoreSpace, ScalarField};
use pqlab::solver::{self, SolveOptions};
use pqlab::subspace::{self, Sign, SubspacePair};

fn err(e: pqlab::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyclass(name = "MeasureSpace", from_py_object)]
#[derive(Clone)]
struct PySpace {
    inner: Arc<CoreSpace>,
}

#[pymethods]
impl PySpace {
    #[new]
    fn new(weights: Vec<f64>, value_dim: usize) -> PyResult<Self> {
        Ok(Self { inner: CoreSpace::new(weights, value_dim).map_err(err)? })
    }

    #[getter]
    fn point_count(&self) -> usize {
        self.inner.point_count()
    }

    #[getter]
    fn value_dim(&self) -> usize {
        self.inner.value_dim()
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.inner.weights().to_vec()
    }

    fn __repr__(&self) -> String {
        format!("MeasureSpace(points={}, value_dim={})", self.inner.point_count(), self.inner.value_dim())
    }
}

impl PySpace {
    fn field(&self, values: Vec<f64>) -> PyResult<Field> {
        Field::new(self.inner.clone(), values).map_err(err)
    }

    fn scalar(&self, values: Vec<f64>) -> PyResult<ScalarField> {
        ScalarField::new(self.inner.clone(), values).map_err(err)
    }
}

#[pyclass(name = "Subspace", from_py_object)]
#[derive(Clone)]
struct PySubspace {
    space: PySpace,
    inner: SubspacePair,
}

#[pymethods]
impl PySubspace {
    #[getter]
    fn dim_plus(&self) -> usize {
        self.inner.dim_plus()
    }

    #[getter]
    fn space(&self) -> PySpace {
        self.space.clone()
    }

    fn basis(&self) -> Vec<Vec<f64>> {
        self.inner.basis().iter().map(|e| e.values().to_vec()).collect()
    }

    fn project_plus(&self, values: Vec<f64>) -> PyResult<Vec<f64>> {
        let u = self.space.field(values)?;
        Ok(self.inner.project_plus(&u).map_err(err)?.values().to_vec())
    }

    fn project_minus(&self, values: Vec<f64>) -> PyResult<Vec<f64>> {
        let u = self.space.field(values)?;
        Ok(self.inner.project_minus(&u).map_err(err)?.values().to_vec())
    }

    fn __repr__(&self) -> String {
        format!("Subspace(dim_plus={})", self.inner.dim_plus())
    }
}

#[pyclass(name = "PPowerMap", from_py_object)]
#[derive(Clone)]
struct PyPPower {
    inner: PPowerMap,
}

#[pymethods]
impl PyPPower {
    #[new]
    #[pyo3(signature = (p, coefficient=None))]
    fn new(p: f64, coefficient: Option<Vec<f64>>) -> PyResult<Self> {
        let inner = match coefficient {
            Some(c) => PPowerMap::with_coefficient(p, c).map_err(err)?,
            None => PPowerMap::new(p).map_err(err)?,
        };
        Ok(Self { inner })
    }

    #[getter]
    fn p(&self) -> f64 {
        self.inner.exponents().p()
    }

    #[getter]
    fn q(&self) -> f64 {
        self.inner.exponents().q()
    }

    fn inverse(&self) -> PyPPower {
        PyPPower { inner: self.inner.inverse() }
    }

    fn __repr__(&self) -> String {
        format!("PPowerMap(p={})", self.p())
    }
}

#[pyclass(name = "DataPair", from_py_object)]
#[derive(Clone)]
struct PyPair {
    space: PySpace,
    inner: DataPair,
}

#[pymethods]
impl PyPair {
    #[new]
    fn new(space: PySpace, a: Vec<f64>, b: Vec<f64>, p: f64) -> PyResult<Self> {
        let exps = ExponentPair::new(p).map_err(err)?;
        let inner =
            DataPair::new(space.field(a)?, space.field(b)?, exps).map_err(err)?;
        Ok(Self { space, inner })
    }

    #[getter]
    fn a(&self) -> Vec<f64> {
        self.inner.a.values().to_vec()
    }

    #[getter]
    fn b(&self) -> Vec<f64> {
        self.inner.b.values().to_vec()
    }

    #[getter]
    fn p(&self) -> f64 {
        self.inner.exps.p()
    }

    fn bracket(&self) -> Vec<f64> {
        measure::bracket(&self.inner).values().to_vec()
    }

    fn __repr__(&self) -> String {
        format!("DataPair(points={}, p={})", self.space.inner.point_count(), self.p())
    }
}

#[pyclass(name = "SolveResult", get_all)]
struct PySolveResult {
    alpha: Vec<f64>,
    beta: Vec<f64>,
    residual_norm: f64,
    iterations: u32,
    converged: bool,
    basic_estimate_ratio: f64,
}

impl PySolveResult {
    fn from_report(report: solver::SolveReport) -> Self {
        Self {
            alpha: report.phi.a.values().to_vec(),
            beta: report.phi.b.values().to_vec(),
            residual_norm: report.residual_norm,
            iterations: report.iterations,
            converged: report.converged,
            basic_estimate_ratio: report.basic_estimate_ratio,
        }
    }
}

#[pyfunction]
fn conjugate_exponent(p: f64) -> PyResult<f64> {
    measure::conjugate_exponent(p).map_err(err)
}

#[pyfunction]
fn s_power(v: Vec<f64>, s: f64) -> PyResult<Vec<f64>> {
    measure::s_power(&v, s).map_err(err)
}

#[pyfunction]
fn inner(space: PySpace, u: Vec<f64>, v: Vec<f64>) -> PyResult<f64> {
    measure::inner(&space.field(u)?, &space.field(v)?).map_err(err)
}

#[pyfunction]
fn norm_s(space: PySpace, u: Vec<f64>, s: f64) -> PyResult<f64> {
    measure::norm_s(&space.field(u)?, s).map_err(err)
}

#[pyfunction]
fn distribution(space: PySpace, g: Vec<f64>, t: f64) -> PyResult<f64> {
    measure::distribution(&space.scalar(g)?, t).map_err(err)
}

#[pyfunction]
fn weak_quasinorm(space: PySpace, g: Vec<f64>, lam: f64) -> PyResult<f64> {
    measure::weak_quasinorm(&space.scalar(g)?, lam).map_err(err)
}

#[pyfunction]
fn build_subspace(space: PySpace, raw: Vec<Vec<f64>>) -> PyResult<PySubspace> {
    let fields: Vec<Field> = raw
        .into_iter()
        .map(|row| space.field(row))
        .collect::<PyResult<_>>()?;
    let inner = subspace::build_subspace(space.inner.clone(), &fields).map_err(err)?;
    Ok(PySubspace { space, inner })
}

#[pyfunction]
fn random_subspace(space: PySpace, m: usize, seed: u64) -> PyResult<PySubspace> {
    let inner = subspace::random_subspace(space.inner.clone(), m, seed).map_err(err)?;
    Ok(PySubspace { space, inner })
}

#[pyfunction]
fn grid_hodge(rows: usize, cols: usize, edge_weights: Vec<f64>) -> PyResult<(PySpace, PySubspace)> {
    let (space, pair) = subspace::grid_hodge(rows, cols, &edge_weights).map_err(err)?;
    let py_space = PySpace { inner: space };
    Ok((py_space.clone(), PySubspace { space: py_space, inner: pair }))
}

#[pyfunction]
#[pyo3(signature = (sub, sign, v, eps, s))]
fn commutator_defect(sub: PySubspace, sign: &str, v: Vec<f64>, eps: f64, s: f64) -> PyResult<(f64, f64)> {
    let sign = match sign {
        "plus" => Sign::Plus,
        "minus" => Sign::Minus,
        other => return Err(PyValueError::new_err(format!("sign must be plus or minus, got {other:?}"))),
    };
    let field = sub.space.field(v)?;
    subspace::commutator_defect(&sub.inner, sign, &field, eps, s).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (sub, map, f, tol=1e-9, seed_for_init=0))]
fn solve_system(sub: PySubspace, map: PyPPower, f: PyPair, tol: f64, seed_for_init: u64) -> PyResult<PySolveResult> {
    let opts = SolveOptions { tol, seed_for_init, ..Default::default() };
    let report = solver::solve_system(&sub.inner, &map.inner, &f.inner, &opts).map_err(err)?;
    Ok(PySolveResult::from_report(report))
}

#[pyfunction]
#[pyo3(signature = (sub, map, f, tol=1e-9, seed_for_init=0))]
fn solve_dual(sub: PySubspace, map: PyPPower, f: PyPair, tol: f64, seed_for_init: u64) -> PyResult<PySolveResult> {
    let opts = SolveOptions { tol, seed_for_init, ..Default::default() };
    let report = solver::solve_dual(&sub.inner, &map.inner, &f.inner, &opts).map_err(err)?;
    Ok(PySolveResult::from_report(report))
}

#[pyfunction]
#[pyo3(signature = (sub, f, p, tol=1e-9))]
fn lp_projection(sub: PySubspace, f: Vec<f64>, p: f64, tol: f64) -> PyResult<Vec<f64>> {
    let field = sub.space.field(f)?;
    Ok(solver::lp_projection(&sub.inner, &field, p, tol).map_err(err)?.values().to_vec())
}

#[pyfunction]
fn marcinkiewicz_split(f: PyPair, t: f64) -> PyResult<(PyPair, PyPair)> {
    let split = interp::marcinkiewicz_split(&f.inner, t).map_err(err)?;
    Ok((
        PyPair { space: f.space.clone(), inner: split.upper },
        PyPair { space: f.space.clone(), inner: split.lower },
    ))
}

#[pyfunction]
fn strong_type_ratio(phi: PyPair, f: PyPair, tau: f64) -> PyResult<f64> {
    interp::strong_type_ratio(&phi.inner, &f.inner, tau).map_err(err)
}

#[pyfunction]
fn weak_type_ratio(phi: PyPair, f: PyPair, lam: f64) -> PyResult<f64> {
    interp::weak_type_ratio(&phi.inner, &f.inner, lam).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (rows, cols, p, seed, unit_weights=false, unit_coefficient=false))]
fn gen_grid_instance_text(
    rows: usize,
    cols: usize,
    p: f64,
    seed: u64,
    unit_weights: bool,
    unit_coefficient: bool,
) -> PyResult<String> {
    let file = gen_grid_hodge(GridParams { rows, cols, unit_weights, unit_coefficient }, p, seed)
        .map_err(err)?;
    Ok(io::render_instance(&file))
}

#[pyfunction]
#[pyo3(signature = (points, dim, subspace_dim, p, seed, unit_weights=false, unit_coefficient=false))]
fn gen_random_instance_text(
    points: usize,
    dim: usize,
    subspace_dim: usize,
    p: f64,
    seed: u64,
    unit_weights: bool,
    unit_coefficient: bool,
) -> PyResult<String> {
    let file = gen_random(
        RandomParams { points, dim, subspace_dim, unit_weights, unit_coefficient },
        p,
        seed,
    )
    .map_err(err)?;
    Ok(io::render_instance(&file))
}

#[pymodule]
fn pqlab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySpace>()?;
    m.add_class::<PySubspace>()?;
    m.add_class::<PyPPower>()?;
    m.add_class::<PyPair>()?;
    m.add_class::<PySolveResult>()?;
    m.add_function(wrap_pyfunction!(conjugate_exponent, m)?)?;
    m.add_function(wrap_pyfunction!(s_power, m)?)?;
    m.add_function(wrap_pyfunction!(inner, m)?)?;
    m.add_function(wrap_pyfunction!(norm_s, m)?)?;
    m.add_function(wrap_pyfunction!(distribution, m)?)?;
    m.add_function(wrap_pyfunction!(weak_quasinorm, m)?)?;
    m.add_function(wrap_pyfunction!(build_subspace, m)?)?;
    m.add_function(wrap_pyfunction!(random_subspace, m)?)?;
    m.add_function(wrap_pyfunction!(grid_hodge, m)?)?;
    m.add_function(wrap_pyfunction!(commutator_defect, m)?)?;
    m.add_function(wrap_pyfunction!(solve_system, m)?)?;
    m.add_function(wrap_pyfunction!(solve_dual, m)?)?;
    m.add_function(wrap_pyfunction!(lp_projection, m)?)?;
    m.add_function(wrap_pyfunction!(marcinkiewicz_split, m)?)?;
    m.add_function(wrap_pyfunction!(strong_type_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(weak_type_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(gen_grid_instance_text, m)?)?;
    m.add_function(wrap_pyfunction!(gen_random_instance_text, m)?)?;
    Ok(())
}
