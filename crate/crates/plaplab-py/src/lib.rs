//! Python bindings for the plaplab laboratory: meshes, measures, solves,
//! potentials, trace constants, capacities and singular problems.
//!
//! Weights are passed as the exponent `t` of the model family `w = δ^t`
//! (`t = 0` is the unweighted case).

use plaplab::potential::PotentialVerdict;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;
use std::sync::Arc;

fn err(e: plaplab::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Simplicial mesh of an interval, rectangle or L-shaped domain.
#[pyclass(name = "Mesh")]
struct PyMesh {
    inner: plaplab::MeshRef,
}

#[pymethods]
impl PyMesh {
    /// Uniform mesh of the interval (a, b) with n_cells cells.
    #[staticmethod]
    fn interval(a: f64, b: f64, n_cells: usize) -> PyResult<PyMesh> {
        Ok(PyMesh {
            inner: Arc::new(plaplab::build_interval_mesh(a, b, n_cells).map_err(err)?),
        })
    }

    /// Structured triangulation of an axis-aligned rectangle.
    #[staticmethod]
    fn rectangle(x0: f64, y0: f64, x1: f64, y1: f64, h: f64) -> PyResult<PyMesh> {
        let vertices = plaplab::rectangle_vertices(x0, y0, x1, y1);
        Ok(PyMesh {
            inner: Arc::new(plaplab::build_polygon_mesh(&vertices, h).map_err(err)?),
        })
    }

    /// The unit L-shape (unit square minus its upper-right quarter).
    #[staticmethod]
    fn lshape(h: f64) -> PyResult<PyMesh> {
        Ok(PyMesh {
            inner: Arc::new(plaplab::build_polygon_mesh(&plaplab::lshape_vertices(), h).map_err(err)?),
        })
    }

    #[getter]
    fn n_nodes(&self) -> usize {
        self.inner.n_nodes()
    }

    #[getter]
    fn n_simplices(&self) -> usize {
        self.inner.n_simplices()
    }

    #[getter]
    fn dimension(&self) -> usize {
        self.inner.dimension()
    }

    fn total_volume(&self) -> f64 {
        self.inner.total_volume()
    }

    /// Node coordinates as a list of points.
    fn nodes(&self) -> Vec<Vec<f64>> {
        (0..self.inner.n_nodes()).map(|i| self.inner.node(i).to_vec()).collect()
    }

    /// Exact distance to the boundary per node.
    fn delta(&self) -> Vec<f64> {
        self.inner.deltas().to_vec()
    }

    fn boundary_mask(&self) -> Vec<bool> {
        (0..self.inner.n_nodes()).map(|i| self.inner.is_boundary(i)).collect()
    }

    /// Mesh with every cell split (h -> h/2).
    fn refined(&self) -> PyResult<PyMesh> {
        Ok(PyMesh {
            inner: Arc::new(self.inner.refined().map_err(err)?),
        })
    }

    fn __repr__(&self) -> String {
        format!(
            "Mesh(dim={}, nodes={}, simplices={})",
            self.inner.dimension(),
            self.inner.n_nodes(),
            self.inner.n_simplices()
        )
    }
}

/// Piecewise-linear function on a mesh.
#[pyclass(name = "Function")]
struct PyFunction {
    inner: plaplab::DiscreteFunction,
}

#[pymethods]
impl PyFunction {
    fn values(&self) -> Vec<f64> {
        self.inner.values().to_vec()
    }

    /// Value at a point by barycentric interpolation.
    fn eval(&self, point: Vec<f64>) -> PyResult<f64> {
        self.inner.eval(&point).map_err(err)
    }

    fn sup_norm(&self) -> f64 {
        self.inner.sup_norm()
    }

    fn __repr__(&self) -> String {
        format!("Function(sup={:.6e})", self.inner.sup_norm())
    }
}

/// Node-lumped nonnegative measure with optional point atoms.
#[pyclass(name = "Measure")]
struct PyMeasure {
    inner: plaplab::MeasureData,
}

#[pymethods]
impl PyMeasure {
    #[staticmethod]
    fn zero(mesh: &PyMesh) -> PyMeasure {
        PyMeasure {
            inner: plaplab::MeasureData::zero(&mesh.inner),
        }
    }

    #[staticmethod]
    fn lebesgue(mesh: &PyMesh) -> PyMeasure {
        PyMeasure {
            inner: plaplab::MeasureData::lebesgue(&mesh.inner),
        }
    }

    /// The model measure dσ = δ^{-s} dx (infinite total mass for s ≥ 1).
    #[staticmethod]
    fn power_density(mesh: &PyMesh, s: f64) -> PyResult<PyMeasure> {
        Ok(PyMeasure {
            inner: plaplab::MeasureData::power_density(&mesh.inner, s).map_err(err)?,
        })
    }

    #[staticmethod]
    fn point_atom(mesh: &PyMesh, position: Vec<f64>, mass: f64) -> PyResult<PyMeasure> {
        Ok(PyMeasure {
            inner: plaplab::MeasureData::point_atom(&mesh.inner, &position, mass).map_err(err)?,
        })
    }

    fn add_atom(&mut self, position: Vec<f64>, mass: f64) -> PyResult<()> {
        self.inner.add_atom(&position, mass).map_err(err)
    }

    fn scaled(&self, c: f64) -> PyMeasure {
        PyMeasure {
            inner: self.inner.scale(c),
        }
    }

    fn total_mass(&self) -> f64 {
        self.inner.total_mass()
    }

    #[getter]
    fn is_infinite(&self) -> bool {
        self.inner.is_symbolically_infinite()
    }

    fn __repr__(&self) -> String {
        format!("Measure(mass={:.6e})", self.inner.total_mass())
    }
}

fn weight_for(mesh: &PyMesh, t: f64) -> plaplab::Weight {
    plaplab::power_weight(&mesh.inner, t)
}

fn operator_for(p: f64, anisotropy: Option<Vec<f64>>) -> PyResult<plaplab::OperatorA> {
    match anisotropy {
        Some(diag) => plaplab::OperatorA::anisotropic(p, &diag).map_err(err),
        None => plaplab::OperatorA::isotropic(p).map_err(err),
    }
}

fn report_dict<'py>(py: Python<'py>, rep: &plaplab::SolveReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("iterations", rep.iterations)?;
    d.set_item("residual", rep.residual)?;
    d.set_item("energy", rep.energy)?;
    d.set_item("converged", rep.converged)?;
    d.set_item("blow_up", rep.blow_up)?;
    d.set_item("sup_norm", rep.sup_norm)?;
    Ok(d)
}

fn verdict_str(v: PotentialVerdict) -> &'static str {
    match v {
        PotentialVerdict::Converged => "converged",
        PotentialVerdict::Diverging => "diverging",
    }
}

/// Solve -div A(x, ∇u) = μ with u = 0 on the boundary; w = δ^t.
#[pyfunction]
#[pyo3(signature = (mesh, measure, p, t=0.0, anisotropy=None))]
fn solve<'py>(
    py: Python<'py>,
    mesh: &PyMesh,
    measure: &PyMeasure,
    p: f64,
    t: f64,
    anisotropy: Option<Vec<f64>>,
) -> PyResult<(PyFunction, Bound<'py, PyDict>)> {
    let w = weight_for(mesh, t);
    let a = operator_for(p, anisotropy)?;
    let opts = plaplab::SolverOptions::default();
    let (u, rep) = plaplab::solve(&mesh.inner, &w, &a, &measure.inner, &opts).map_err(err)?;
    Ok((PyFunction { inner: u }, report_dict(py, &rep)?))
}

/// Realize W_A σ by compact exhaustion; returns (function, verdict, stages).
#[pyfunction]
#[pyo3(signature = (mesh, measure, p, t=0.0, k_max=12, ratio=2.0))]
fn wa_potential<'py>(
    py: Python<'py>,
    mesh: &PyMesh,
    measure: &PyMeasure,
    p: f64,
    t: f64,
    k_max: usize,
    ratio: f64,
) -> PyResult<(PyFunction, String, Vec<Bound<'py, PyDict>>)> {
    let w = weight_for(mesh, t);
    let a = operator_for(p, None)?;
    let sched = plaplab::ExhaustionSchedule::for_mesh(&mesh.inner)
        .with_k_max(k_max)
        .with_ratio(ratio);
    let opts = plaplab::SolverOptions::default();
    let res = plaplab::wa_potential(&mesh.inner, &w, &a, &measure.inner, &sched, &opts).map_err(err)?;
    let stages = res
        .stages
        .iter()
        .map(|s| {
            let d = PyDict::new(py);
            d.set_item("k", s.k)?;
            d.set_item("radius", s.radius)?;
            d.set_item("sigma_mass", s.sigma_mass)?;
            d.set_item("sup", s.sup)?;
            d.set_item("energy", s.energy)?;
            Ok(d)
        })
        .collect::<PyResult<Vec<_>>>()?;
    Ok((
        PyFunction { inner: res.function },
        verdict_str(res.verdict).to_string(),
        stages,
    ))
}

/// Truncated Wolff potential W^R_{1,p,w} μ(x).
#[pyfunction]
#[pyo3(signature = (measure, x, radius, p, t=0.0, n_quad=64))]
fn wolff_potential(
    measure: &PyMeasure,
    x: Vec<f64>,
    radius: f64,
    p: f64,
    t: f64,
    n_quad: usize,
) -> PyResult<f64> {
    let mesh = PyMesh {
        inner: measure.inner.mesh().clone(),
    };
    let w = weight_for(&mesh, t);
    plaplab::wolff_potential(&measure.inner, &x, radius, p, &w, n_quad).map_err(err)
}

/// Lower-bound estimate of the best constant in ‖f‖_{L^q(σ)} ≤ C ‖∇f‖_{L^p(w)}.
#[pyfunction]
#[pyo3(signature = (mesh, measure, p, q, t=0.0, restarts=5, weak=false))]
fn estimate_trace_constant(
    mesh: &PyMesh,
    measure: &PyMeasure,
    p: f64,
    q: f64,
    t: f64,
    restarts: usize,
    weak: bool,
) -> PyResult<(f64, PyFunction)> {
    let w = weight_for(mesh, t);
    let est = if weak {
        plaplab::estimate_weak_trace_constant(&mesh.inner, &w, &measure.inner, p, q, restarts)
    } else {
        plaplab::estimate_trace_constant(&mesh.inner, &w, &measure.inner, p, q, restarts)
    }
    .map_err(err)?;
    Ok((est.value, PyFunction { inner: est.maximizer }))
}

/// Variational (p, w)-capacity of the node set `mask` against the domain.
#[pyfunction]
#[pyo3(signature = (mesh, mask, p, t=0.0))]
fn capacity(mesh: &PyMesh, mask: Vec<bool>, p: f64, t: f64) -> PyResult<(f64, PyFunction)> {
    let w = weight_for(mesh, t);
    let res = plaplab::capacity(&mesh.inner, &w, p, &mask).map_err(err)?;
    Ok((res.value, PyFunction { inner: res.minimizer }))
}

/// Hardy-quotient estimate; for p = 2 also the dense-eigensolve oracle.
#[pyfunction]
#[pyo3(signature = (mesh, p, t, restarts=5))]
fn hardy_check<'py>(
    py: Python<'py>,
    mesh: &PyMesh,
    p: f64,
    t: f64,
    restarts: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let est = plaplab::hardy_check(&mesh.inner, p, t, restarts).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("constant", est.constant)?;
    d.set_item("oracle", est.oracle_constant)?;
    Ok(d)
}

/// Solve -div A(x, ∇u) = σ h(u) for h(u) = u^{-gamma} (or u^{q-1} when
/// `sublinear_q` is given); returns (function, verdict, min_barrier_margin).
#[pyfunction]
#[pyo3(signature = (mesh, measure, p, gamma=1.0, t=0.0, sublinear_q=None, k_max=26))]
fn solve_singular(
    mesh: &PyMesh,
    measure: &PyMeasure,
    p: f64,
    gamma: f64,
    t: f64,
    sublinear_q: Option<f64>,
    k_max: usize,
) -> PyResult<(PyFunction, String, f64)> {
    let w = weight_for(mesh, t);
    let a = operator_for(p, None)?;
    let nl = match sublinear_q {
        Some(q) => plaplab::SingularNonlinearity::power_sublinear(q),
        None => plaplab::SingularNonlinearity::power_decreasing(gamma),
    }
    .map_err(err)?;
    let sched = plaplab::ExhaustionSchedule::for_mesh(&mesh.inner).with_k_max(k_max);
    let opts = plaplab::SolverOptions::default();
    let (u, report) =
        plaplab::solve_singular(&mesh.inner, &w, &a, &measure.inner, &nl, &sched, &opts).map_err(err)?;
    Ok((
        PyFunction { inner: u },
        verdict_str(report.verdict).to_string(),
        report.min_barrier_margin(),
    ))
}

/// g-transform g(u) = ((p-1)/(p-1+γ)) u^{(p-1+γ)/(p-1)} applied nodally.
#[pyfunction]
#[pyo3(signature = (function, gamma, p))]
fn g_transform(function: &PyFunction, gamma: f64, p: f64) -> PyResult<PyFunction> {
    let nl = plaplab::SingularNonlinearity::power_decreasing(gamma).map_err(err)?;
    Ok(PyFunction {
        inner: plaplab::g_transform(&function.inner, &nl, p).map_err(err)?,
    })
}

/// Weighted p-energy ∫ |∇f|^p δ^t dx.
#[pyfunction]
#[pyo3(signature = (function, p, t=0.0))]
fn weighted_p_energy(function: &PyFunction, p: f64, t: f64) -> PyResult<f64> {
    let mesh = PyMesh {
        inner: function.inner.mesh().clone(),
    };
    let w = weight_for(&mesh, t);
    plaplab::weighted_p_energy(&function.inner, &w, p).map_err(err)
}

/// ⟨σ, f⟩ pairing.
#[pyfunction]
fn measure_pairing(function: &PyFunction, measure: &PyMeasure) -> PyResult<f64> {
    plaplab::measure_pairing(&function.inner, &measure.inner).map_err(err)
}

/// L^q(σ) norm of f.
#[pyfunction]
fn lq_norm(function: &PyFunction, measure: &PyMeasure, q: f64) -> PyResult<f64> {
    plaplab::lq_norm(&function.inner, &measure.inner, q).map_err(err)
}

/// Weak L^{q,∞}(σ) quasinorm of f.
#[pyfunction]
fn weak_lq_norm(function: &PyFunction, measure: &PyMeasure, q: f64) -> PyResult<f64> {
    plaplab::weak_lq_norm(&function.inner, &measure.inner, q).map_err(err)
}

#[pymodule]
fn plaplab_py(_py: Python<'_>, m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMesh>()?;
    m.add_class::<PyFunction>()?;
    m.add_class::<PyMeasure>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(wa_potential, m)?)?;
    m.add_function(wrap_pyfunction!(wolff_potential, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_trace_constant, m)?)?;
    m.add_function(wrap_pyfunction!(capacity, m)?)?;
    m.add_function(wrap_pyfunction!(hardy_check, m)?)?;
    m.add_function(wrap_pyfunction!(solve_singular, m)?)?;
    m.add_function(wrap_pyfunction!(g_transform, m)?)?;
    m.add_function(wrap_pyfunction!(weighted_p_energy, m)?)?;
    m.add_function(wrap_pyfunction!(measure_pairing, m)?)?;
    m.add_function(wrap_pyfunction!(lq_norm, m)?)?;
    m.add_function(wrap_pyfunction!(weak_lq_norm, m)?)?;
    Ok(())
}
