//! Quadratic nonconforming element with face-centroid and edge-functional
//! degrees of freedom, and its boundary-shifted variant for homogeneous
//! Dirichlet data.
//!
//! Degrees of freedom of a tet, faces first (in `FACES` order), then edges
//! (in `EDGES` order):
//! `mu_F(v) = v(centroid of F)`,
//! `nu_e(v) = 0.4 v(M_e) + 0.3 (v(A_e) + v(B_e))`.
//! On elements touching `Gamma_h` the functionals of boundary faces and edges
//! are evaluated at points on the true boundary instead.

use nalgebra::{DMatrix, DVector};

use crate::assembly::{
    assemble_contributions, load_with_tables, stiffness_with_tables, AssemblyMode, DiscreteSolution, DofMap,
    ElementContribution, Field, LinearSystem, ReferenceTables,
};
use crate::error::{Error, Result};
use crate::fem::{QuadratureRule, ReferenceElement, EDGES, FACES};
use crate::geometry::{Line3, Vec3};
use crate::mesh::{BoundaryClassification, Mesh};
use crate::numbering::NodeEntity;
use crate::trial::{one_norm, shift_edge_node, MAX_NODE_MATRIX_CONDITION};

pub const NC_DOFS: usize = 10;

/// `0.4 v(M_e) + 0.3 (v(A_e) + v(B_e))`.
pub fn nc_edge_functional(at_a: f64, at_m: f64, at_b: f64) -> f64 {
    0.4 * at_m + 0.3 * (at_a + at_b)
}

/// A degree of freedom as a weighted sum of point values.
pub type PointFunctional = Vec<(f64, Vec3)>;

/// Functional `i` on the tet with vertices `v`, with `shifted` replacing the
/// face centroid or the edge midpoint.
fn functional_on(i: usize, v: &[Vec3; 4], shifted: Option<Vec3>) -> PointFunctional {
    if i < 4 {
        let f = FACES[i];
        let c = (v[f[0]] + v[f[1]] + v[f[2]]) / 3.0;
        vec![(1.0, shifted.unwrap_or(c))]
    } else {
        let [a, b] = EDGES[i - 4];
        let m = (v[a] + v[b]) * 0.5;
        vec![(0.4, shifted.unwrap_or(m)), (0.3, v[a]), (0.3, v[b])]
    }
}

fn reference_vertices() -> [Vec3; 4] {
    [Vec3::zeros(), Vec3::x(), Vec3::y(), Vec3::z()]
}

#[derive(Debug, Clone)]
pub struct NCReferenceElement {
    /// P2 Lagrange element the canonical basis is expanded in.
    pub p2: ReferenceElement,
    /// `D_ij = dof_i(phi_j)`.
    pub dof_matrix: DMatrix<f64>,
    /// `B = D^-1`; column i holds the Lagrange coefficients of `b_i`.
    pub coefficients: DMatrix<f64>,
}

pub fn nc_build_reference_basis() -> Result<NCReferenceElement> {
    let p2 = ReferenceElement::new(2)?;
    let v = reference_vertices();
    let mut d = DMatrix::zeros(NC_DOFS, NC_DOFS);
    for i in 0..NC_DOFS {
        for (w, p) in functional_on(i, &v, None) {
            for (j, phi) in p2.eval_all(&p).into_iter().enumerate() {
                d[(i, j)] += w * phi;
            }
        }
    }
    let coefficients = d
        .clone()
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::InvalidArgument("nonconforming DOF matrix is singular".into()))?;
    Ok(NCReferenceElement {
        p2,
        dof_matrix: d,
        coefficients,
    })
}

impl NCReferenceElement {
    pub fn eval_all(&self, xi: &Vec3) -> Vec<f64> {
        let phi = DVector::from_vec(self.p2.eval_all(xi));
        (self.coefficients.transpose() * phi).iter().copied().collect()
    }

    pub fn grad_all(&self, xi: &Vec3) -> Vec<Vec3> {
        let g = self.p2.grad_all(xi);
        (0..NC_DOFS)
            .map(|i| {
                g.iter()
                    .enumerate()
                    .map(|(j, gj)| gj * self.coefficients[(j, i)])
                    .sum()
            })
            .collect()
    }

    /// Applies the ten functionals to `v` on the reference tet.
    pub fn dofs_of(&self, v: &dyn Fn(&Vec3) -> f64) -> [f64; NC_DOFS] {
        let verts = reference_vertices();
        std::array::from_fn(|i| functional_on(i, &verts, None).iter().map(|(w, p)| w * v(p)).sum())
    }
}

/// Shifted functionals of one element of `O_h`.
#[derive(Debug, Clone)]
pub struct NcModifiedBasis {
    pub element: usize,
    /// `K_ij = shifted dof_i(b_j)`; identity rows for unshifted dofs.
    pub shifted_matrix: DMatrix<f64>,
    pub coefficients: DMatrix<f64>,
    pub condition: f64,
    pub shifted_local: Vec<usize>,
    /// Boundary point of each shifted functional.
    pub shifted_points: Vec<Vec3>,
}

impl NcModifiedBasis {
    pub fn perturbation_inf_norm(&self) -> f64 {
        let k = &self.shifted_matrix - DMatrix::identity(NC_DOFS, NC_DOFS);
        k.row_iter().map(|r| r.abs().sum()).fold(0.0, f64::max)
    }
}

/// Global face/edge numbering and shifted bases for the nonconforming space.
#[derive(Debug, Clone)]
pub struct NcSpace {
    pub reference: NCReferenceElement,
    pub element_dofs: Vec<[usize; NC_DOFS]>,
    pub entities: Vec<NodeEntity>,
    pub constrained: Vec<bool>,
    pub bases: Vec<Option<NcModifiedBasis>>,
}

impl NcSpace {
    pub fn build(mesh: &Mesh, classification: &BoundaryClassification) -> Result<Self> {
        let surface = mesh.domain.surface.as_ref();
        if surface.is_some() {
            if let Some(&t) = classification.violations.first() {
                return Err(Error::MeshAssumption {
                    element: t,
                    faces: (0..4).filter(|&l| classification.is_gamma_face[mesh.tet_faces[t][l]]).count(),
                    edges: (0..6).filter(|&l| classification.is_gamma_edge[mesh.tet_edges[t][l]]).count(),
                });
            }
        }
        let reference = nc_build_reference_basis()?;

        let mut face_dof = vec![usize::MAX; mesh.faces.len()];
        let mut edge_dof = vec![usize::MAX; mesh.edges.len()];
        let mut entities = Vec::new();
        let mut constrained = Vec::new();
        let mut element_dofs = Vec::with_capacity(mesh.n_tets());
        for t in 0..mesh.n_tets() {
            let mut local = [0; NC_DOFS];
            for l in 0..4 {
                let f = mesh.tet_faces[t][l];
                if face_dof[f] == usize::MAX {
                    face_dof[f] = entities.len();
                    entities.push(NodeEntity::Face(f));
                    constrained.push(classification.is_gamma_face[f]);
                }
                local[l] = face_dof[f];
            }
            for l in 0..6 {
                let e = mesh.tet_edges[t][l];
                if edge_dof[e] == usize::MAX {
                    edge_dof[e] = entities.len();
                    entities.push(NodeEntity::Edge(e));
                    constrained.push(classification.is_gamma_edge[e]);
                }
                local[4 + l] = edge_dof[e];
            }
            element_dofs.push(local);
        }

        // boundary points, computed once per face and edge
        let mut face_point: Vec<Option<Vec3>> = vec![None; mesh.faces.len()];
        for &f in &classification.gamma_faces {
            let c = mesh.face_centroid(f);
            face_point[f] = Some(match surface {
                None => c,
                Some(s) => {
                    let line = Line3::new(c, mesh.face_normal(f))?;
                    s.nearest_line_intersection(&line, mesh.h_t[mesh.faces[f].owner])?
                }
            });
        }
        let mut edge_point: Vec<Option<Vec3>> = vec![None; mesh.edges.len()];
        for &e in &classification.gamma_edges {
            let [a, b] = mesh.edges[e].vertices;
            let m = (mesh.vertices[a] + mesh.vertices[b]) * 0.5;
            let w = classification.skin[e]
                .ok_or_else(|| Error::InvalidArgument(format!("boundary edge {e} has no skin direction")))?;
            let h_ref = mesh.edges[e].tets.iter().map(|&t| mesh.h_t[t]).fold(0.0, f64::max);
            edge_point[e] = Some(shift_edge_node(&m, &w, surface, h_ref)?);
        }

        let mut bases = vec![None; mesh.n_tets()];
        for t in classification.o_h() {
            bases[t] = Some(build_nc_modified_basis(t, mesh, &reference, &face_point, &edge_point)?);
        }
        Ok(NcSpace {
            reference,
            element_dofs,
            entities,
            constrained,
            bases,
        })
    }

    pub fn n_dofs(&self) -> usize {
        self.entities.len()
    }

    pub fn n_free(&self) -> usize {
        self.constrained.iter().filter(|c| !**c).count()
    }

    pub fn max_perturbation(&self) -> f64 {
        self.bases
            .iter()
            .flatten()
            .map(|b| b.perturbation_inf_norm())
            .fold(0.0, f64::max)
    }
}

fn build_nc_modified_basis(
    t: usize,
    mesh: &Mesh,
    reference: &NCReferenceElement,
    face_point: &[Option<Vec3>],
    edge_point: &[Option<Vec3>],
) -> Result<NcModifiedBasis> {
    let map = mesh.affine_map(t);
    let verts = mesh.tet_vertices(t);
    let mut k = DMatrix::identity(NC_DOFS, NC_DOFS);
    let mut shifted_local = Vec::new();
    let mut shifted_points = Vec::new();
    for i in 0..NC_DOFS {
        let (point, original) = if i < 4 {
            let f = mesh.tet_faces[t][i];
            (face_point[f], mesh.face_centroid(f))
        } else {
            let [a, b] = EDGES[i - 4];
            (edge_point[mesh.tet_edges[t][i - 4]], (verts[a] + verts[b]) * 0.5)
        };
        let Some(p) = point else { continue };
        shifted_local.push(i);
        shifted_points.push(p);
        if p == original {
            continue;
        }
        for j in 0..NC_DOFS {
            k[(i, j)] = 0.0;
        }
        for (w, x) in functional_on(i, &verts, Some(p)) {
            let b = reference.eval_all(&map.pullback(&x));
            for j in 0..NC_DOFS {
                k[(i, j)] += w * b[j];
            }
        }
    }
    let coefficients = k.clone().lu().try_inverse().ok_or(Error::MeshTooCoarse {
        element: t,
        condition: f64::INFINITY,
    })?;
    let condition = one_norm(&k) * one_norm(&coefficients);
    if !(condition <= MAX_NODE_MATRIX_CONDITION) {
        return Err(Error::MeshTooCoarse { element: t, condition });
    }
    Ok(NcModifiedBasis {
        element: t,
        shifted_matrix: k,
        coefficients,
        condition,
        shifted_local,
        shifted_points,
    })
}

/// The ten functionals of element `t` applied to `v`, using the shifted
/// points of `basis` where given.
pub fn nc_dof_values(mesh: &Mesh, t: usize, basis: Option<&NcModifiedBasis>, v: &dyn Fn(&Vec3) -> f64) -> [f64; NC_DOFS] {
    let verts = mesh.tet_vertices(t);
    std::array::from_fn(|i| {
        let shifted = basis.and_then(|b| b.shifted_local.iter().position(|&l| l == i).map(|k| b.shifted_points[k]));
        functional_on(i, &verts, shifted).iter().map(|(w, p)| w * v(p)).sum()
    })
}

/// Broken Petrov-Galerkin system over the free face and edge dofs, `g = 0`.
pub fn nc_assemble(
    mesh: &Mesh,
    space: &NcSpace,
    f: Field,
    quad: &QuadratureRule,
    mode: AssemblyMode,
) -> Result<LinearSystem> {
    if quad.degree < 2 {
        return Err(Error::UnsupportedQuadrature(2));
    }
    let dofs = DofMap::new(&space.constrained, |_| 0.0);
    let tables = ReferenceTables::new(&space.reference.p2, quad);
    let b = &space.reference.coefficients;
    let bt = b.transpose();
    let symmetric = space.bases.iter().all(|b| b.is_none());
    assemble_contributions(mesh.n_tets(), dofs, symmetric, mode, |t| {
        let map = mesh.affine_map(t);
        if !(map.det > 0.0) {
            return Err(Error::DegenerateElement {
                element: t,
                volume: map.volume(),
            });
        }
        let s = &bt * stiffness_with_tables(&map, &tables, quad) * b;
        let matrix = match &space.bases[t] {
            Some(basis) => s * &basis.coefficients,
            None => s,
        };
        Ok(ElementContribution {
            dofs: space.element_dofs[t].to_vec(),
            matrix,
            load: &bt * load_with_tables(&map, f, &tables, quad),
        })
    })
}

/// Element polynomials, as P2 Lagrange coefficients, of a nonconforming solution.
pub fn nc_solution(space: &NcSpace, system: &LinearSystem, x: &[f64]) -> DiscreteSolution {
    let values = system.dofs.expand(x);
    let coefficients = space
        .element_dofs
        .iter()
        .zip(&space.bases)
        .map(|(dofs, basis)| {
            let v = DVector::from_iterator(NC_DOFS, dofs.iter().map(|&d| values[d]));
            let v = match basis {
                Some(basis) => &basis.coefficients * v,
                None => v,
            };
            &space.reference.coefficients * v
        })
        .collect();
    DiscreteSolution { degree: 2, coefficients }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{classify_mesh, generate_box_tet_mesh};
    use approx::assert_abs_diff_eq;

    #[test]
    fn edge_functional_examples() {
        assert_abs_diff_eq!(nc_edge_functional(1.0, 1.0, 1.0), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(nc_edge_functional(0.0, 0.5, 1.0), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(nc_edge_functional(0.0, 0.25, 1.0), 0.4, epsilon = 1e-15);
    }

    #[test]
    fn canonical_basis_has_delta_property() {
        let r = nc_build_reference_basis().unwrap();
        let id = &r.dof_matrix * &r.coefficients;
        assert!((id - DMatrix::<f64>::identity(10, 10)).amax() < 1e-12);
        for i in 0..NC_DOFS {
            let d = r.dofs_of(&|x| r.eval_all(x)[i]);
            for (j, dj) in d.iter().enumerate() {
                assert_abs_diff_eq!(*dj, if i == j { 1.0 } else { 0.0 }, epsilon = 1e-12);
            }
        }
        let s: f64 = r.eval_all(&Vec3::new(0.2, 0.3, 0.1)).iter().sum();
        assert_abs_diff_eq!(s, 1.0, epsilon = 1e-13);
    }

    #[test]
    fn gradients_match_differences() {
        let r = nc_build_reference_basis().unwrap();
        let x = Vec3::new(0.21, 0.17, 0.33);
        let g = r.grad_all(&x);
        let h = 1e-6;
        for d in 0..3 {
            let mut e = Vec3::zeros();
            e[d] = h;
            let p = r.eval_all(&(x + e));
            let m = r.eval_all(&(x - e));
            for i in 0..NC_DOFS {
                assert_abs_diff_eq!(g[i][d], (p[i] - m[i]) / (2.0 * h), epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn box_space_is_unshifted() {
        let m = generate_box_tet_mesh([2, 2, 2], Vec3::zeros(), Vec3::repeat(1.0)).unwrap();
        let c = classify_mesh(&m).unwrap();
        let s = NcSpace::build(&m, &c).unwrap();
        assert_eq!(s.n_dofs(), m.faces.len() + m.edges.len());
        assert_eq!(s.max_perturbation(), 0.0);
    }
}
