//! Python bindings: surfaces, meshes, single solves, convergence studies and
//! the check suite.

use curvedfem::analysis::{
    perturbation_on_octant, run_case, run_convergence, vertex_values, CaseRun, ConvergenceTable, ExactCase, Method,
    RunOptions,
};
use curvedfem::assembly::AssemblyMode;
use curvedfem::mesh::{classify_mesh, generate_octant_mesh, generate_torus_sector_mesh};
use curvedfem::solver::{SolverMethod, DEFAULT_TOL};
use curvedfem::{Error, Vec3};
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io(e) => PyIOError::new_err(e.to_string()),
        Error::SolverFailure { .. } | Error::ProjectionNotConverged(_) | Error::NoBoundaryIntersection { .. } => {
            PyRuntimeError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn vec3(p: (f64, f64, f64)) -> Vec3 {
    Vec3::new(p.0, p.1, p.2)
}

fn options(sequential: bool, tol: f64, solver: &str) -> PyResult<RunOptions> {
    let solver = match solver {
        "direct" => SolverMethod::Direct,
        "gmres" => SolverMethod::Gmres {
            restart: 50,
            max_iter: 5000,
        },
        other => return Err(PyValueError::new_err(format!("unknown solver '{other}'"))),
    };
    Ok(RunOptions {
        mode: if sequential {
            AssemblyMode::Sequential
        } else {
            AssemblyMode::Parallel
        },
        tol,
        solver,
    })
}

/// A closed surface given implicitly by `F(x) = 0`, negative inside.
#[pyclass(name = "Surface", module = "curvedfem_py", frozen)]
struct PySurface(curvedfem::Surface);

#[pymethods]
impl PySurface {
    #[staticmethod]
    #[pyo3(signature = (radius=1.0, center=(0.0, 0.0, 0.0)))]
    fn sphere(radius: f64, center: (f64, f64, f64)) -> PyResult<Self> {
        curvedfem::Surface::sphere(vec3(center), radius).map(PySurface).map_err(to_py)
    }

    #[staticmethod]
    fn ellipsoid(a: f64, b: f64, c: f64) -> PyResult<Self> {
        curvedfem::Surface::ellipsoid(a, b, c).map(PySurface).map_err(to_py)
    }

    #[staticmethod]
    fn torus(major: f64, minor: f64) -> PyResult<Self> {
        curvedfem::Surface::torus(major, minor).map(PySurface).map_err(to_py)
    }

    fn implicit_value(&self, p: (f64, f64, f64)) -> f64 {
        self.0.implicit_value(&vec3(p))
    }

    fn contains(&self, p: (f64, f64, f64)) -> bool {
        self.0.contains(&vec3(p))
    }

    fn outward_normal(&self, p: (f64, f64, f64)) -> PyResult<(f64, f64, f64)> {
        let n = self.0.outward_normal(&vec3(p)).map_err(to_py)?;
        Ok((n.x, n.y, n.z))
    }

    fn closest_point(&self, p: (f64, f64, f64)) -> PyResult<(f64, f64, f64)> {
        let q = self.0.closest_point_projection(&vec3(p)).map_err(to_py)?;
        Ok((q.x, q.y, q.z))
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.0)
    }
}

/// A tetrahedral mesh together with its boundary classification counts.
#[pyclass(name = "Mesh", module = "curvedfem_py", frozen)]
struct PyMesh {
    mesh: curvedfem::Mesh,
    s_h: usize,
    r_h: usize,
    gamma_faces: usize,
}

impl PyMesh {
    fn wrap(mesh: curvedfem::Mesh) -> PyResult<Self> {
        let c = classify_mesh(&mesh).map_err(to_py)?;
        Ok(PyMesh {
            s_h: c.s_h.len(),
            r_h: c.r_h.len(),
            gamma_faces: c.gamma_faces.len(),
            mesh,
        })
    }
}

#[pymethods]
impl PyMesh {
    /// Octant of the region bounded by a sphere or ellipsoid, refined `j` times
    /// along each axis.
    #[staticmethod]
    fn octant(surface: PyRef<'_, PySurface>, j: usize) -> PyResult<Self> {
        Self::wrap(generate_octant_mesh(&surface.0, j).map_err(to_py)?)
    }

    /// Quarter sector of a solid torus with `i` cells per direction.
    #[staticmethod]
    #[pyo3(signature = (i, major=5.0 / 6.0, minor=1.0 / 6.0))]
    fn torus_sector(i: usize, major: f64, minor: f64) -> PyResult<Self> {
        Self::wrap(generate_torus_sector_mesh(i, major, minor).map_err(to_py)?)
    }

    /// Mesh of a named test case.
    #[staticmethod]
    fn for_case(case: &str, param: usize) -> PyResult<Self> {
        let case = ExactCase::by_name(case).map_err(to_py)?;
        Self::wrap(case.mesh(param).map_err(to_py)?)
    }

    #[getter]
    fn n_tets(&self) -> usize {
        self.mesh.n_tets()
    }

    #[getter]
    fn n_vertices(&self) -> usize {
        self.mesh.vertices.len()
    }

    #[getter]
    fn h(&self) -> f64 {
        self.mesh.h
    }

    #[getter]
    fn volume(&self) -> f64 {
        self.mesh.total_volume()
    }

    /// Number of elements with exactly one face on the curved boundary.
    #[getter]
    fn n_face_elements(&self) -> usize {
        self.s_h
    }

    /// Number of elements touching the curved boundary in exactly one edge.
    #[getter]
    fn n_edge_elements(&self) -> usize {
        self.r_h
    }

    #[getter]
    fn n_boundary_faces(&self) -> usize {
        self.gamma_faces
    }

    fn vertices(&self) -> Vec<(f64, f64, f64)> {
        self.mesh.vertices.iter().map(|v| (v.x, v.y, v.z)).collect()
    }

    fn tets(&self) -> Vec<[usize; 4]> {
        self.mesh.tets.clone()
    }

    fn __repr__(&self) -> String {
        format!("Mesh(n_tets={}, n_vertices={}, h={:.4})", self.mesh.n_tets(), self.mesh.vertices.len(), self.mesh.h)
    }
}

/// Result of one solve: errors against the exact solution and solver data.
#[pyclass(name = "Solution", module = "curvedfem_py", frozen)]
struct PySolution(CaseRun);

#[pymethods]
impl PySolution {
    #[getter]
    fn case(&self) -> &'static str {
        self.0.case.name
    }

    #[getter]
    fn method(&self) -> &'static str {
        self.0.method.name()
    }

    #[getter]
    fn k(&self) -> usize {
        self.0.k
    }

    #[getter]
    fn param(&self) -> usize {
        self.0.param
    }

    #[getter]
    fn h(&self) -> f64 {
        self.0.report.h
    }

    #[getter]
    fn n_dofs(&self) -> usize {
        self.0.report.n_dofs
    }

    #[getter]
    fn err_h1(&self) -> f64 {
        self.0.report.err_h1_broken
    }

    #[getter]
    fn err_l2(&self) -> f64 {
        self.0.report.err_l2
    }

    #[getter]
    fn err_nodal_max(&self) -> f64 {
        self.0.report.err_nodal_max
    }

    #[getter]
    fn relative_residual(&self) -> f64 {
        self.0.solve.relative_residual
    }

    #[getter]
    fn max_perturbation(&self) -> f64 {
        self.0.max_perturbation
    }

    /// Discrete solution at the mesh vertices.
    fn vertex_values(&self) -> Vec<f64> {
        vertex_values(&self.0.mesh, &self.0.solution)
    }

    fn __repr__(&self) -> String {
        format!(
            "Solution(case={}, method={}, k={}, param={}, err_h1={:.4e}, err_l2={:.4e})",
            self.0.case.name,
            self.0.method.name(),
            self.0.k,
            self.0.param,
            self.0.report.err_h1_broken,
            self.0.report.err_l2
        )
    }
}

/// Errors on a sequence of meshes with the observed convergence orders.
#[pyclass(name = "ConvergenceTable", module = "curvedfem_py", frozen)]
struct PyConvergenceTable(ConvergenceTable);

#[pymethods]
impl PyConvergenceTable {
    #[getter]
    fn params(&self) -> Vec<usize> {
        self.0.rows.iter().map(|r| r.param).collect()
    }

    #[getter]
    fn h(&self) -> Vec<f64> {
        self.0.rows.iter().map(|r| r.report.h).collect()
    }

    #[getter]
    fn err_h1(&self) -> Vec<f64> {
        self.0.rows.iter().map(|r| r.report.err_h1_broken).collect()
    }

    #[getter]
    fn err_l2(&self) -> Vec<f64> {
        self.0.rows.iter().map(|r| r.report.err_l2).collect()
    }

    /// Orders between consecutive rows; the first row has none.
    #[getter]
    fn eoc_h1(&self) -> Vec<Option<f64>> {
        (0..self.0.rows.len()).map(|i| self.0.eoc_h1(i)).collect()
    }

    #[getter]
    fn eoc_l2(&self) -> Vec<Option<f64>> {
        (0..self.0.rows.len()).map(|i| self.0.eoc_l2(i)).collect()
    }

    fn to_csv(&self) -> String {
        self.0.to_csv()
    }

    fn __str__(&self) -> String {
        self.0.to_text()
    }
}

/// Solves one test case. `case` is one of quadratic-ellipsoid, tp1, tp2, tp3;
/// `method` is new, polyhedral or nonconforming.
#[pyfunction]
#[pyo3(signature = (case, param, method="new", k=2, sequential=false, tol=DEFAULT_TOL, solver="direct"))]
fn solve(
    py: Python<'_>,
    case: &str,
    param: usize,
    method: &str,
    k: usize,
    sequential: bool,
    tol: f64,
    solver: &str,
) -> PyResult<PySolution> {
    let case = ExactCase::by_name(case).map_err(to_py)?;
    let method = Method::parse(method).map_err(to_py)?;
    let opts = options(sequential, tol, solver)?;
    py.detach(|| run_case(&case, method, k, param, &opts)).map(PySolution).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (case, params, method="new", k=2, sequential=false, tol=DEFAULT_TOL, solver="direct"))]
fn convergence(
    py: Python<'_>,
    case: &str,
    params: Vec<usize>,
    method: &str,
    k: usize,
    sequential: bool,
    tol: f64,
    solver: &str,
) -> PyResult<PyConvergenceTable> {
    let case = ExactCase::by_name(case).map_err(to_py)?;
    let method = Method::parse(method).map_err(to_py)?;
    let opts = options(sequential, tol, solver)?;
    py.detach(|| run_convergence(&case, method, k, &params, &opts))
        .map(PyConvergenceTable)
        .map_err(to_py)
}

/// Largest `||K - I||_inf` of the shifted-node matrices on an octant mesh.
/// `k=None` measures the nonconforming element.
#[pyfunction]
#[pyo3(signature = (surface, j, k=Some(2)))]
fn perturbation(surface: PyRef<'_, PySurface>, j: usize, k: Option<usize>) -> PyResult<f64> {
    perturbation_on_octant(&surface.0, j, k).map_err(to_py)
}

/// Runs the built-in property suite; returns `(name, passed, value, tolerance)`.
#[pyfunction]
fn run_checks(py: Python<'_>) -> Vec<(&'static str, bool, f64, f64)> {
    py.detach(curvedfem::checks::run_checks)
        .into_iter()
        .map(|c| (c.name, c.passed, c.value, c.tolerance))
        .collect()
}

#[pyfunction]
fn eoc(e1: f64, e2: f64, h1: f64, h2: f64) -> PyResult<f64> {
    curvedfem::analysis::eoc(e1, e2, h1, h2).map_err(to_py)
}

#[pymodule]
fn curvedfem_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySurface>()?;
    m.add_class::<PyMesh>()?;
    m.add_class::<PySolution>()?;
    m.add_class::<PyConvergenceTable>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(convergence, m)?)?;
    m.add_function(wrap_pyfunction!(perturbation, m)?)?;
    m.add_function(wrap_pyfunction!(run_checks, m)?)?;
    m.add_function(wrap_pyfunction!(eoc, m)?)?;
    Ok(())
}
