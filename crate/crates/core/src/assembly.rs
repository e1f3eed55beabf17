//! Assembly of the boundary-shifted Petrov-Galerkin system and of the
//! standard Galerkin system used by the polyhedral baseline.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fem::{AffineMap, QuadratureRule, ReferenceElement};
use crate::geometry::Vec3;
use crate::mesh::{BoundaryClassification, Mesh};
use crate::numbering::LagrangeNumbering;
use crate::sparse::CsrMatrix;
use crate::trial::TrialSpace;

/// Scalar field evaluated at physical points.
pub type Field<'a> = &'a (dyn Fn(&Vec3) -> f64 + Sync);

#[derive(Clone, Copy)]
pub enum DirichletData<'a> {
    Homogeneous,
    Function(Field<'a>),
}

impl DirichletData<'_> {
    pub fn eval(&self, p: &Vec3) -> f64 {
        match self {
            DirichletData::Homogeneous => 0.0,
            DirichletData::Function(g) => g(p),
        }
    }
}

/// Element kernels run on the rayon pool in `Parallel` mode; results are
/// merged in element order either way, so both modes give identical bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AssemblyMode {
    #[default]
    Sequential,
    Parallel,
}

/// Equation numbering: test and free trial unknowns share one index set.
#[derive(Debug, Clone)]
pub struct DofMap {
    pub equation: Vec<Option<usize>>,
    pub dirichlet_value: Vec<f64>,
    pub n_equations: usize,
}

impl DofMap {
    pub fn new(constrained: &[bool], mut value: impl FnMut(usize) -> f64) -> Self {
        let mut next = 0;
        let equation = constrained
            .iter()
            .map(|&c| {
                (!c).then(|| {
                    next += 1;
                    next - 1
                })
            })
            .collect();
        let dirichlet_value = constrained
            .iter()
            .enumerate()
            .map(|(i, &c)| if c { value(i) } else { 0.0 })
            .collect();
        DofMap {
            equation,
            dirichlet_value,
            n_equations: next,
        }
    }

    pub fn n_dofs(&self) -> usize {
        self.equation.len()
    }

    /// Full vector of values: solution for free dofs, data for the rest.
    pub fn expand(&self, x: &[f64]) -> Vec<f64> {
        self.equation
            .iter()
            .zip(&self.dirichlet_value)
            .map(|(e, d)| e.map_or(*d, |r| x[r]))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct LinearSystem {
    /// Row = test dof, column = trial dof.
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub dofs: DofMap,
    pub symmetric: bool,
}

impl LinearSystem {
    pub fn dimension(&self) -> usize {
        self.rhs.len()
    }

    /// Indices of rows and columns without a single nonzero entry.
    pub fn empty_rows_and_cols(&self) -> (Vec<usize>, Vec<usize>) {
        let n = self.dimension();
        let mut col_used = vec![false; n];
        let mut rows = Vec::new();
        for r in 0..n {
            let mut any = false;
            for (c, v) in self.matrix.row(r) {
                if v != 0.0 {
                    any = true;
                    col_used[c] = true;
                }
            }
            if !any {
                rows.push(r);
            }
        }
        let cols = (0..n).filter(|&c| !col_used[c]).collect();
        (rows, cols)
    }
}

/// Shape values and reference gradients at the quadrature points.
#[derive(Debug, Clone)]
pub struct ReferenceTables {
    pub values: Vec<Vec<f64>>,
    pub grads: Vec<Vec<Vec3>>,
}

impl ReferenceTables {
    pub fn new(reference: &ReferenceElement, quad: &QuadratureRule) -> Self {
        ReferenceTables {
            values: quad.points.iter().map(|p| reference.eval_all(p)).collect(),
            grads: quad.points.iter().map(|p| reference.grad_all(p)).collect(),
        }
    }
}

fn check_quadrature(reference: &ReferenceElement, quad: &QuadratureRule) -> Result<()> {
    let needed = 2 * (reference.degree() - 1);
    if quad.degree < needed {
        return Err(Error::UnsupportedQuadrature(needed));
    }
    Ok(())
}

fn check_volume(t: usize, map: &AffineMap) -> Result<()> {
    if !(map.det > 0.0) {
        return Err(Error::DegenerateElement {
            element: t,
            volume: map.volume(),
        });
    }
    Ok(())
}

/// `S_ij = int_T grad phi_i . grad phi_j`.
pub fn element_stiffness(map: &AffineMap, reference: &ReferenceElement, quad: &QuadratureRule) -> Result<DMatrix<f64>> {
    check_volume(0, map)?;
    Ok(stiffness_with_tables(map, &ReferenceTables::new(reference, quad), quad))
}

/// `b_i = int_T f phi_i`.
pub fn element_load(map: &AffineMap, f: Field, reference: &ReferenceElement, quad: &QuadratureRule) -> Result<DVector<f64>> {
    check_volume(0, map)?;
    Ok(load_with_tables(map, f, &ReferenceTables::new(reference, quad), quad))
}

pub(crate) fn stiffness_with_tables(map: &AffineMap, tables: &ReferenceTables, quad: &QuadratureRule) -> DMatrix<f64> {
    let n = tables.values[0].len();
    let mut s = DMatrix::zeros(n, n);
    for (q, w) in quad.weights.iter().enumerate() {
        let g: Vec<Vec3> = tables.grads[q].iter().map(|g| map.push_gradient(g)).collect();
        let wq = w * map.det;
        for i in 0..n {
            for j in i..n {
                s[(i, j)] += wq * g[i].dot(&g[j]);
            }
        }
    }
    for i in 0..n {
        for j in 0..i {
            s[(i, j)] = s[(j, i)];
        }
    }
    s
}

pub(crate) fn load_with_tables(map: &AffineMap, f: Field, tables: &ReferenceTables, quad: &QuadratureRule) -> DVector<f64> {
    let n = tables.values[0].len();
    let mut b = DVector::zeros(n);
    for (q, (p, w)) in quad.points.iter().zip(&quad.weights).enumerate() {
        let fq = f(&map.map(p)) * w * map.det;
        for i in 0..n {
            b[i] += fq * tables.values[q][i];
        }
    }
    b
}

/// Element matrix, load and the global dofs of its local basis.
pub(crate) struct ElementContribution {
    pub dofs: Vec<usize>,
    pub matrix: DMatrix<f64>,
    pub load: DVector<f64>,
}

pub(crate) fn assemble_contributions(
    n_elements: usize,
    dofs: DofMap,
    symmetric: bool,
    mode: AssemblyMode,
    kernel: impl Fn(usize) -> Result<ElementContribution> + Sync,
) -> Result<LinearSystem> {
    let contributions: Vec<ElementContribution> = match mode {
        AssemblyMode::Sequential => (0..n_elements).map(&kernel).collect::<Result<_>>()?,
        AssemblyMode::Parallel => (0..n_elements).into_par_iter().map(&kernel).collect::<Result<_>>()?,
    };
    let n = dofs.n_equations;
    let mut rhs = vec![0.0; n];
    let mut triplets = Vec::new();
    for c in &contributions {
        for (i, &gi) in c.dofs.iter().enumerate() {
            let Some(r) = dofs.equation[gi] else { continue };
            rhs[r] += c.load[i];
            for (j, &gj) in c.dofs.iter().enumerate() {
                let v = c.matrix[(i, j)];
                match dofs.equation[gj] {
                    Some(col) => triplets.push((r, col, v)),
                    None => {
                        let d = dofs.dirichlet_value[gj];
                        if d != 0.0 {
                            rhs[r] -= v * d;
                        }
                    }
                }
            }
        }
    }
    Ok(LinearSystem {
        matrix: CsrMatrix::from_triplets(n, n, &triplets),
        rhs,
        dofs,
        symmetric,
    })
}

/// Boundary-shifted Petrov-Galerkin system: trial functions interpolate the
/// Dirichlet data at the shifted nodes, test functions vanish on `Gamma_h`.
pub fn assemble_new_method(
    mesh: &Mesh,
    classification: &BoundaryClassification,
    trial: &TrialSpace,
    f: Field,
    g: DirichletData,
    quad: &QuadratureRule,
    mode: AssemblyMode,
) -> Result<LinearSystem> {
    check_quadrature(&trial.reference, quad)?;
    let constrained: Vec<bool> = (0..trial.numbering.n_nodes()).map(|n| trial.table.contains(n)).collect();
    let dofs = DofMap::new(&constrained, |n| g.eval(&trial.table.get(n).unwrap().shifted));
    let tables = ReferenceTables::new(&trial.reference, quad);
    let o_h = classification.contact.iter().map(|c| *c != crate::mesh::BoundaryContact::None).collect::<Vec<_>>();
    assemble_contributions(mesh.n_tets(), dofs, false, mode, |t| {
        let map = mesh.affine_map(t);
        check_volume(t, &map)?;
        let s0 = stiffness_with_tables(&map, &tables, quad);
        let matrix = match &trial.bases[t] {
            Some(b) => &s0 * &b.coefficients,
            None if o_h[t] => return Err(Error::MissingBasis(t)),
            None => s0,
        };
        Ok(ElementContribution {
            dofs: trial.numbering.element_nodes[t].clone(),
            matrix,
            load: load_with_tables(&map, f, &tables, quad),
        })
    })
}

/// Standard Galerkin system with Dirichlet data imposed at the nodes of
/// `Gamma_h`, evaluated at their closest points on the true boundary.
pub fn assemble_polyhedral(
    mesh: &Mesh,
    classification: &BoundaryClassification,
    reference: &ReferenceElement,
    numbering: &LagrangeNumbering,
    f: Field,
    g: DirichletData,
    quad: &QuadratureRule,
    mode: AssemblyMode,
) -> Result<LinearSystem> {
    check_quadrature(reference, quad)?;
    if !classification.violations.is_empty() {
        log::warn!(
            "{} elements violate the one-face-or-one-edge assumption",
            classification.violations.len()
        );
    }
    let constrained = numbering.on_gamma(classification);
    let mut values = vec![0.0; numbering.n_nodes()];
    if let DirichletData::Function(gf) = g {
        for n in (0..numbering.n_nodes()).filter(|&n| constrained[n]) {
            let m = numbering.positions[n];
            let p = match &mesh.domain.surface {
                Some(s) => s.closest_point_projection(&m)?,
                None => m,
            };
            values[n] = gf(&p);
        }
    }
    let dofs = DofMap::new(&constrained, |n| values[n]);
    let tables = ReferenceTables::new(reference, quad);
    assemble_contributions(mesh.n_tets(), dofs, true, mode, |t| {
        let map = mesh.affine_map(t);
        check_volume(t, &map)?;
        Ok(ElementContribution {
            dofs: numbering.element_nodes[t].clone(),
            matrix: stiffness_with_tables(&map, &tables, quad),
            load: load_with_tables(&map, f, &tables, quad),
        })
    })
}

/// Piecewise polynomial given by its Lagrange coefficients on each element.
#[derive(Debug, Clone)]
pub struct DiscreteSolution {
    pub degree: usize,
    pub coefficients: Vec<DVector<f64>>,
}

/// Element polynomials of the new method from the solved unknowns.
pub fn new_method_solution(trial: &TrialSpace, system: &LinearSystem, x: &[f64]) -> DiscreteSolution {
    let values = system.dofs.expand(x);
    let coefficients = trial
        .numbering
        .element_nodes
        .iter()
        .zip(&trial.bases)
        .map(|(nodes, basis)| {
            let b = DVector::from_iterator(nodes.len(), nodes.iter().map(|&n| values[n]));
            match basis {
                Some(basis) => basis.lagrange_coefficients(&b),
                None => b,
            }
        })
        .collect();
    DiscreteSolution {
        degree: trial.reference.degree(),
        coefficients,
    }
}

/// Element polynomials of a standard Lagrange solution.
pub fn lagrange_solution(numbering: &LagrangeNumbering, system: &LinearSystem, x: &[f64]) -> DiscreteSolution {
    let values = system.dofs.expand(x);
    DiscreteSolution {
        degree: numbering.degree,
        coefficients: numbering
            .element_nodes
            .iter()
            .map(|nodes| DVector::from_iterator(nodes.len(), nodes.iter().map(|&n| values[n])))
            .collect(),
    }
}
