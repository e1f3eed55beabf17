//! Exact-solution test cases, error norms and convergence tables.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::time::Instant;

use nalgebra::DVector;

use crate::assembly::{
    assemble_new_method, assemble_polyhedral, lagrange_solution, new_method_solution, AssemblyMode, DirichletData,
    DiscreteSolution, LinearSystem,
};
use crate::error::{Error, Result};
use crate::fem::{quadrature_rule, QuadratureRule, ReferenceElement};
use crate::geometry::{Surface, Vec3};
use crate::mesh::{classify_mesh, generate_octant_mesh, generate_torus_sector_mesh, BoundaryClassification, Mesh};
use crate::nonconforming::{nc_assemble, nc_solution, NcSpace};
use crate::numbering::LagrangeNumbering;
use crate::solver::{solve_with, SolveReport, SolverMethod, DEFAULT_TOL};
use crate::trial::TrialSpace;

pub const TP2_A: f64 = 0.6;
pub const TP2_B: f64 = 0.8;
pub const TORUS_MAJOR: f64 = 5.0 / 6.0;
pub const TORUS_MINOR: f64 = 1.0 / 6.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaseId {
    QuadraticEllipsoid,
    Tp1Sphere,
    Tp2Ellipsoid,
    Tp3Torus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFamily {
    /// Octant of a sphere or ellipsoid, parameter `J`.
    Octant,
    /// Torus sector, parameter `I` (even).
    TorusSector,
}

/// A Poisson problem with known solution on a curved domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactCase {
    pub id: CaseId,
    pub name: &'static str,
    pub surface: Surface,
    pub family: MeshFamily,
    pub convex: bool,
}

impl ExactCase {
    pub fn new(id: CaseId) -> Self {
        let (name, surface, family, convex) = match id {
            CaseId::QuadraticEllipsoid => (
                "quadratic-ellipsoid",
                Surface::Ellipsoid { a: TP2_A, b: TP2_B, c: 1.0 },
                MeshFamily::Octant,
                true,
            ),
            CaseId::Tp1Sphere => ("tp1-sphere", Surface::unit_sphere(), MeshFamily::Octant, true),
            CaseId::Tp2Ellipsoid => (
                "tp2-ellipsoid",
                Surface::Ellipsoid { a: TP2_A, b: TP2_B, c: 1.0 },
                MeshFamily::Octant,
                true,
            ),
            CaseId::Tp3Torus => (
                "tp3-torus",
                Surface::Torus {
                    major: TORUS_MAJOR,
                    minor: TORUS_MINOR,
                },
                MeshFamily::TorusSector,
                false,
            ),
        };
        ExactCase {
            id,
            name,
            surface,
            family,
            convex,
        }
    }

    pub fn all() -> [ExactCase; 4] {
        [CaseId::QuadraticEllipsoid, CaseId::Tp1Sphere, CaseId::Tp2Ellipsoid, CaseId::Tp3Torus].map(ExactCase::new)
    }

    /// Accepts the full names and the short forms `tp1`, `tp2`, `tp3`.
    pub fn by_name(name: &str) -> Result<Self> {
        let id = match name {
            "quadratic-ellipsoid" | "quadratic" => CaseId::QuadraticEllipsoid,
            "tp1-sphere" | "tp1" => CaseId::Tp1Sphere,
            "tp2-ellipsoid" | "tp2" => CaseId::Tp2Ellipsoid,
            "tp3-torus" | "tp3" => CaseId::Tp3Torus,
            other => return Err(Error::InvalidArgument(format!("unknown case '{other}'"))),
        };
        Ok(ExactCase::new(id))
    }

    pub fn u(&self, p: &Vec3) -> f64 {
        let (x, y, z) = (p.x, p.y, p.z);
        match self.id {
            CaseId::QuadraticEllipsoid => 1.0 - ellipsoid_p(p),
            CaseId::Tp1Sphere => {
                let r2 = p.norm_squared();
                r2 - r2 * r2
            }
            CaseId::Tp2Ellipsoid => {
                let (a, b) = tp2_factors(p);
                a * b
            }
            CaseId::Tp3Torus => {
                let rho = x.hypot(y);
                TORUS_MINOR * TORUS_MINOR - z * z - (TORUS_MAJOR - rho).powi(2)
            }
        }
    }

    pub fn grad_u(&self, p: &Vec3) -> Vec3 {
        let (x, y, z) = (p.x, p.y, p.z);
        match self.id {
            CaseId::QuadraticEllipsoid => -grad_ellipsoid_p(p, TP2_A, TP2_B),
            CaseId::Tp1Sphere => p * (2.0 - 4.0 * p.norm_squared()),
            CaseId::Tp2Ellipsoid => {
                let (a, b) = tp2_factors(p);
                let ga = -grad_ellipsoid_p(p, TP2_A, TP2_B);
                let gb = -grad_ellipsoid_p(p, TP2_B, TP2_A);
                ga * b + gb * a
            }
            CaseId::Tp3Torus => {
                let rho = x.hypot(y);
                let s = 2.0 * (TORUS_MAJOR - rho) / rho;
                Vec3::new(s * x, s * y, -2.0 * z)
            }
        }
    }

    /// `f = -Laplace u`.
    pub fn f(&self, p: &Vec3) -> f64 {
        let lap_p = |a: f64, b: f64| 2.0 * (1.0 / (a * a) + 1.0 / (b * b) + 1.0);
        match self.id {
            CaseId::QuadraticEllipsoid => lap_p(TP2_A, TP2_B),
            CaseId::Tp1Sphere => -6.0 + 20.0 * p.norm_squared(),
            CaseId::Tp2Ellipsoid => {
                let (a, b) = tp2_factors(p);
                let ga = grad_ellipsoid_p(p, TP2_A, TP2_B);
                let gb = grad_ellipsoid_p(p, TP2_B, TP2_A);
                let l = lap_p(TP2_A, TP2_B);
                l * b - 2.0 * ga.dot(&gb) + a * l
            }
            CaseId::Tp3Torus => 6.0 - 2.0 * TORUS_MAJOR / p.x.hypot(p.y),
        }
    }

    pub fn dirichlet(&self) -> DirichletData<'static> {
        DirichletData::Homogeneous
    }

    pub fn validate_param(&self, param: usize) -> Result<()> {
        match self.family {
            MeshFamily::Octant if param == 0 => Err(Error::InvalidArgument("J must be at least 1".into())),
            MeshFamily::TorusSector if param < 2 || param % 2 != 0 => Err(Error::InvalidArgument(format!(
                "torus parameter I must be even and >= 2, got {param}"
            ))),
            _ => Ok(()),
        }
    }

    pub fn mesh(&self, param: usize) -> Result<Mesh> {
        self.validate_param(param)?;
        match self.family {
            MeshFamily::Octant => generate_octant_mesh(&self.surface, param),
            MeshFamily::TorusSector => generate_torus_sector_mesh(param, TORUS_MAJOR, TORUS_MINOR),
        }
    }

    /// Reference mesh size: `1/J` for octants, `pi/(8I)` for the torus.
    pub fn reference_h(&self, param: usize) -> f64 {
        match self.family {
            MeshFamily::Octant => 1.0 / param as f64,
            MeshFamily::TorusSector => PI / (8.0 * param as f64),
        }
    }
}

fn ellipsoid_p(p: &Vec3) -> f64 {
    (p.x / TP2_A).powi(2) + (p.y / TP2_B).powi(2) + p.z * p.z
}

/// Gradient of `(x/a)^2 + (y/b)^2 + z^2`.
fn grad_ellipsoid_p(p: &Vec3, a: f64, b: f64) -> Vec3 {
    Vec3::new(2.0 * p.x / (a * a), 2.0 * p.y / (b * b), 2.0 * p.z)
}

fn tp2_factors(p: &Vec3) -> (f64, f64) {
    let a = 1.0 - (p.x / TP2_A).powi(2) - (p.y / TP2_B).powi(2) - p.z * p.z;
    let b = 1.0 - (p.x / TP2_B).powi(2) - (p.y / TP2_A).powi(2) - p.z * p.z;
    (a, b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    New,
    Polyhedral,
    Nonconforming,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::New => "new",
            Method::Polyhedral => "polyhedral",
            Method::Nonconforming => "nonconforming",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "new" => Ok(Method::New),
            "polyhedral" => Ok(Method::Polyhedral),
            "nonconforming" | "nc" => Ok(Method::Nonconforming),
            other => Err(Error::InvalidArgument(format!("unknown method '{other}'"))),
        }
    }

    pub fn validate_degree(&self, k: usize) -> Result<()> {
        match (self, k) {
            (Method::Nonconforming, 2) => Ok(()),
            (Method::Nonconforming, _) => Err(Error::InvalidArgument(format!(
                "the nonconforming element exists only for k = 2, got k = {k}"
            ))),
            (_, 2 | 3) => Ok(()),
            _ => Err(Error::UnsupportedDegree(k)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorReport {
    /// Reference mesh size of the family.
    pub h: f64,
    /// Largest element diameter.
    pub h_max: f64,
    pub n_dofs: usize,
    pub err_h1_broken: f64,
    pub err_l2: f64,
    pub err_nodal_max: f64,
}

/// Element-wise `L2` and broken `H1` errors with the given rule, and the
/// largest error at the Lagrangian nodes of each element.
pub fn error_norms_with(
    mesh: &Mesh,
    solution: &DiscreteSolution,
    u: &dyn Fn(&Vec3) -> f64,
    grad_u: &dyn Fn(&Vec3) -> Vec3,
    quad: &QuadratureRule,
) -> Result<(f64, f64, f64)> {
    let reference = ReferenceElement::new(solution.degree)?;
    let values: Vec<Vec<f64>> = quad.points.iter().map(|p| reference.eval_all(p)).collect();
    let grads: Vec<Vec<Vec3>> = quad.points.iter().map(|p| reference.grad_all(p)).collect();
    let (mut h1, mut l2, mut nodal) = (0.0, 0.0, 0.0f64);
    for (t, c) in solution.coefficients.iter().enumerate() {
        let map = mesh.affine_map(t);
        for (q, w) in quad.weights.iter().enumerate() {
            let x = map.map(&quad.points[q]);
            let uh: f64 = values[q].iter().zip(c.iter()).map(|(v, ci)| v * ci).sum();
            let guh: Vec3 = grads[q].iter().zip(c.iter()).map(|(g, ci)| map.push_gradient(g) * *ci).sum();
            let wq = w * map.det;
            l2 += wq * (u(&x) - uh).powi(2);
            h1 += wq * (grad_u(&x) - guh).norm_squared();
        }
        for (i, xi) in reference.node_coords().iter().enumerate() {
            nodal = nodal.max((u(&map.map(xi)) - c[i]).abs());
        }
    }
    Ok((h1.sqrt(), l2.sqrt(), nodal))
}

/// Rule used for error norms: degree 9, so the squared error of a quartic
/// exact solution is integrated exactly.
pub fn norm_quadrature() -> QuadratureRule {
    QuadratureRule::collapsed_gauss(6)
}

pub fn error_norms(mesh: &Mesh, solution: &DiscreteSolution, case: &ExactCase, param: usize, n_dofs: usize) -> Result<ErrorReport> {
    let quad = norm_quadrature();
    let (h1, l2, nodal) = error_norms_with(mesh, solution, &|p| case.u(p), &|p| case.grad_u(p), &quad)?;
    Ok(ErrorReport {
        h: case.reference_h(param),
        h_max: mesh.h,
        n_dofs,
        err_h1_broken: h1,
        err_l2: l2,
        err_nodal_max: nodal,
    })
}

/// Experimental order of convergence between two refinement levels.
pub fn eoc(e1: f64, e2: f64, h1: f64, h2: f64) -> Result<f64> {
    if !(e1 > 0.0 && e2 > 0.0 && h2 > 0.0 && h1 > h2) {
        return Err(Error::InvalidArgument(format!(
            "eoc needs positive errors and h1 > h2 > 0, got e=({e1}, {e2}) h=({h1}, {h2})"
        )));
    }
    Ok((e1 / e2).ln() / (h1 / h2).ln())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub mode: AssemblyMode,
    pub tol: f64,
    pub solver: SolverMethod,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            mode: AssemblyMode::Parallel,
            tol: DEFAULT_TOL,
            solver: SolverMethod::Direct,
        }
    }
}

/// Everything produced by one solve.
#[derive(Debug, Clone)]
pub struct CaseRun {
    pub case: ExactCase,
    pub method: Method,
    pub k: usize,
    pub param: usize,
    pub mesh: Mesh,
    pub classification: BoundaryClassification,
    pub system: LinearSystem,
    pub solve: SolveReport,
    pub solution: DiscreteSolution,
    pub report: ErrorReport,
    pub solve_seconds: f64,
    /// Largest `||K - I||_inf` over elements touching the boundary.
    pub max_perturbation: f64,
}

pub fn run_case(case: &ExactCase, method: Method, k: usize, param: usize, opts: &RunOptions) -> Result<CaseRun> {
    method.validate_degree(k)?;
    let mesh = case.mesh(param)?;
    let classification = classify_mesh(&mesh)?;
    let quad = quadrature_rule(5)?;
    let f = |p: &Vec3| case.f(p);
    let g = case.dirichlet();
    let (system, max_perturbation, rebuild): (LinearSystem, f64, Box<dyn Fn(&LinearSystem, &[f64]) -> DiscreteSolution>) =
        match method {
            Method::New => {
                let trial = TrialSpace::build(&mesh, &classification, k)?;
                let system = assemble_new_method(&mesh, &classification, &trial, &f, g, &quad, opts.mode)?;
                let p = trial.max_perturbation();
                (system, p, Box::new(move |s, x| new_method_solution(&trial, s, x)))
            }
            Method::Polyhedral => {
                let reference = ReferenceElement::new(k)?;
                let numbering = LagrangeNumbering::new(&mesh, &reference);
                let system =
                    assemble_polyhedral(&mesh, &classification, &reference, &numbering, &f, g, &quad, opts.mode)?;
                (system, 0.0, Box::new(move |s, x| lagrange_solution(&numbering, s, x)))
            }
            Method::Nonconforming => {
                let space = NcSpace::build(&mesh, &classification)?;
                let system = nc_assemble(&mesh, &space, &f, &quad, opts.mode)?;
                let p = space.max_perturbation();
                (system, p, Box::new(move |s, x| nc_solution(&space, s, x)))
            }
        };
    let start = Instant::now();
    let solve = solve_with(&system.matrix, &system.rhs, opts.tol, opts.solver)?;
    let solve_seconds = start.elapsed().as_secs_f64();
    let solution = rebuild(&system, &solve.solution);
    let report = error_norms(&mesh, &solution, case, param, system.dimension())?;
    log::info!(
        "{} {} k={} param={}: n={} h1={:.3e} l2={:.3e}",
        case.name,
        method.name(),
        k,
        param,
        report.n_dofs,
        report.err_h1_broken,
        report.err_l2
    );
    Ok(CaseRun {
        case: *case,
        method,
        k,
        param,
        mesh,
        classification,
        system,
        solve,
        solution,
        report,
        solve_seconds,
        max_perturbation,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub param: usize,
    pub report: ErrorReport,
    pub solve_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTable {
    pub case: String,
    pub method: Method,
    pub k: usize,
    pub rows: Vec<ConvergenceRow>,
    /// Whether `solve_seconds` is written; off for reproducible output.
    pub record_timing: bool,
}

pub const CSV_HEADER: &str =
    "case,method,k,param,h,n_dofs,err_h1_broken,err_l2,err_nodal_max,eoc_h1,eoc_l2,solve_seconds";

impl ConvergenceTable {
    /// EOC of row `i` against row `i - 1`.
    pub fn eoc_h1(&self, i: usize) -> Option<f64> {
        self.pair_eoc(i, |r| r.err_h1_broken)
    }

    pub fn eoc_l2(&self, i: usize) -> Option<f64> {
        self.pair_eoc(i, |r| r.err_l2)
    }

    fn pair_eoc(&self, i: usize, e: impl Fn(&ErrorReport) -> f64) -> Option<f64> {
        if i == 0 || i >= self.rows.len() {
            return None;
        }
        let (a, b) = (&self.rows[i - 1].report, &self.rows[i].report);
        eoc(e(a), e(b), a.h, b.h).ok()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{CSV_HEADER}").unwrap();
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_default();
        for (i, row) in self.rows.iter().enumerate() {
            let r = &row.report;
            let timing = if self.record_timing {
                format!("{:.3}", row.solve_seconds)
            } else {
                String::new()
            };
            writeln!(
                s,
                "{},{},{},{},{:.10e},{},{:.10e},{:.10e},{:.10e},{},{},{}",
                self.case,
                self.method.name(),
                self.k,
                row.param,
                r.h,
                r.n_dofs,
                r.err_h1_broken,
                r.err_l2,
                r.err_nodal_max,
                opt(self.eoc_h1(i)),
                opt(self.eoc_l2(i)),
                timing
            )
            .unwrap();
        }
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{}  method={}  k={}", self.case, self.method.name(), self.k).unwrap();
        writeln!(
            s,
            "{:>6} {:>10} {:>9} {:>12} {:>7} {:>12} {:>7} {:>12}",
            "param", "h", "dofs", "H1 broken", "eoc", "L2", "eoc", "nodal max"
        )
        .unwrap();
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "-".into());
        for (i, row) in self.rows.iter().enumerate() {
            let r = &row.report;
            writeln!(
                s,
                "{:>6} {:>10.5} {:>9} {:>12.4e} {:>7} {:>12.4e} {:>7} {:>12.4e}",
                row.param,
                r.h,
                r.n_dofs,
                r.err_h1_broken,
                opt(self.eoc_h1(i)),
                r.err_l2,
                opt(self.eoc_l2(i)),
                r.err_nodal_max
            )
            .unwrap();
        }
        s
    }
}

pub fn run_convergence(
    case: &ExactCase,
    method: Method,
    k: usize,
    params: &[usize],
    opts: &RunOptions,
) -> Result<ConvergenceTable> {
    if params.is_empty() {
        return Err(Error::InvalidArgument("empty refinement list".into()));
    }
    method.validate_degree(k)?;
    for p in params {
        case.validate_param(*p)?;
    }
    if params.windows(2).any(|w| case.reference_h(w[1]) >= case.reference_h(w[0])) {
        return Err(Error::InvalidArgument(format!(
            "refinement list {params:?} must give strictly decreasing h"
        )));
    }
    let mut rows = Vec::with_capacity(params.len());
    for &param in params {
        let run = run_case(case, method, k, param, opts)?;
        rows.push(ConvergenceRow {
            param,
            report: run.report,
            solve_seconds: run.solve_seconds,
        });
    }
    Ok(ConvergenceTable {
        case: case.name.to_string(),
        method,
        k,
        rows,
        record_timing: opts.mode == AssemblyMode::Parallel,
    })
}

/// Largest `||K - I||_inf` over the boundary elements of an octant mesh,
/// for the Lagrange space of degree `k` or, with `k = None`, for the
/// nonconforming space.
pub fn perturbation_on_octant(surface: &Surface, j: usize, k: Option<usize>) -> Result<f64> {
    let mesh = generate_octant_mesh(surface, j)?;
    let classification = classify_mesh(&mesh)?;
    match k {
        Some(k) => Ok(TrialSpace::build(&mesh, &classification, k)?.max_perturbation()),
        None => Ok(NcSpace::build(&mesh, &classification)?.max_perturbation()),
    }
}

/// Values of a discrete solution at the mesh vertices, taken from the
/// first element containing each vertex.
pub fn vertex_values(mesh: &Mesh, solution: &DiscreteSolution) -> Vec<f64> {
    let mut out = vec![f64::NAN; mesh.vertices.len()];
    for (tet, c) in mesh.tets.iter().zip(&solution.coefficients) {
        for (l, &v) in tet.iter().enumerate() {
            if out[v].is_nan() {
                out[v] = c[l];
            }
        }
    }
    out
}

/// Lagrange interpolant of `u` on every element, for testing norms.
pub fn interpolate(mesh: &Mesh, degree: usize, u: &dyn Fn(&Vec3) -> f64) -> Result<DiscreteSolution> {
    let reference = ReferenceElement::new(degree)?;
    let coefficients = (0..mesh.n_tets())
        .map(|t| {
            let map = mesh.affine_map(t);
            DVector::from_iterator(
                reference.n_nodes(),
                reference.node_coords().iter().map(|xi| u(&map.map(xi))),
            )
        })
        .collect();
    Ok(DiscreteSolution { degree, coefficients })
}
