//! The boundary-shifted trial space.
//!
//! Lagrangian nodes on `Gamma_h` are relocated onto the true boundary:
//! vertices stay put, edge nodes move along the skin direction of their
//! edge, face-interior nodes (k = 3) move along the line from the opposite
//! vertex. On every element touching `Gamma_h` the trial polynomial is the
//! one interpolating the free nodal values at the unshifted nodes and the
//! Dirichlet data at the shifted ones; its coefficients in the standard
//! Lagrange basis are `C b` with `C = K^-1`, `K_ij = phi_j(shifted node i)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fem::ReferenceElement;
use crate::geometry::{Line3, Surface, Vec3};
use crate::mesh::{BoundaryClassification, BoundaryContact, Mesh};
use crate::numbering::{LagrangeNumbering, NodeEntity};

/// Largest tolerated 1-norm condition number of a node matrix.
pub const MAX_NODE_MATRIX_CONDITION: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShiftedNode {
    pub node: usize,
    pub original: Vec3,
    pub shifted: Vec3,
    pub entity: NodeEntity,
}

/// One shifted point per Lagrangian node on `Gamma_h`.
#[derive(Debug, Clone)]
pub struct ShiftedNodeTable {
    pub entries: Vec<ShiftedNode>,
    index: Vec<Option<usize>>,
}

impl ShiftedNodeTable {
    pub fn get(&self, node: usize) -> Option<&ShiftedNode> {
        self.index.get(node).copied().flatten().map(|i| &self.entries[i])
    }

    pub fn contains(&self, node: usize) -> bool {
        self.get(node).is_some()
    }

    /// Largest `|M - shifted(M)|` over the table.
    pub fn max_shift(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| (e.original - e.shifted).norm())
            .fold(0.0, f64::max)
    }
}

/// Edge node `m` moved along skin direction `w` onto the surface.
pub fn shift_edge_node(m: &Vec3, w: &Vec3, surface: Option<&Surface>, h_ref: f64) -> Result<Vec3> {
    match surface {
        None => Ok(*m),
        Some(s) => s.nearest_line_intersection(&Line3::new(*m, *w)?, h_ref),
    }
}

/// Face-interior node `m` moved along the line from the opposite vertex
/// `apex` onto the surface.
pub fn shift_face_node(apex: &Vec3, m: &Vec3, surface: Option<&Surface>, h_ref: f64) -> Result<Vec3> {
    match surface {
        None => Ok(*m),
        Some(s) => s.nearest_line_intersection(&Line3::new(*m, m - apex)?, h_ref),
    }
}

pub fn build_shifted_table(
    mesh: &Mesh,
    classification: &BoundaryClassification,
    numbering: &LagrangeNumbering,
) -> Result<ShiftedNodeTable> {
    let surface = mesh.domain.surface.as_ref();
    let on_gamma = numbering.on_gamma(classification);
    let mut entries = Vec::new();
    let mut index = vec![None; numbering.n_nodes()];
    for node in 0..numbering.n_nodes() {
        if !on_gamma[node] {
            continue;
        }
        let m = numbering.positions[node];
        let entity = numbering.entities[node];
        let shifted = match entity {
            NodeEntity::Vertex(_) => m,
            NodeEntity::Edge(e) => {
                let w = classification.skin[e].ok_or_else(|| {
                    Error::InvalidArgument(format!("boundary edge {e} has no skin direction"))
                })?;
                let h_ref = mesh.edges[e]
                    .tets
                    .iter()
                    .map(|&t| mesh.h_t[t])
                    .fold(0.0, f64::max);
                shift_edge_node(&m, &w, surface, h_ref)?
            }
            NodeEntity::Face(f) => {
                let face = &mesh.faces[f];
                let owner = face.owner;
                let apex = mesh.tets[owner]
                    .iter()
                    .find(|v| !face.vertices.contains(v))
                    .map(|&v| mesh.vertices[v])
                    .unwrap();
                shift_face_node(&apex, &m, surface, mesh.h_t[owner])?
            }
            NodeEntity::Cell(_) => unreachable!("interior nodes are never on Gamma_h"),
        };
        index[node] = Some(entries.len());
        entries.push(ShiftedNode {
            node,
            original: m,
            shifted,
            entity,
        });
    }
    Ok(ShiftedNodeTable { entries, index })
}

#[derive(Debug, Clone)]
pub struct ModifiedElementBasis {
    pub element: usize,
    /// `K_ij = phi_j(shifted node i)`, in reference coordinates.
    pub node_matrix: DMatrix<f64>,
    /// `C = K^-1`; column j holds the Lagrange coefficients of `psi_j`.
    pub coefficients: DMatrix<f64>,
    pub condition: f64,
    /// Local nodes on `Gamma_h` carrying Dirichlet data.
    pub dirichlet_local: Vec<usize>,
    pub free_local: Vec<usize>,
    /// Interpolation point of every local node.
    pub points: Vec<Vec3>,
}

impl ModifiedElementBasis {
    /// `max |K - I|` entry-wise row sum.
    pub fn perturbation_inf_norm(&self) -> f64 {
        let n = self.node_matrix.nrows();
        (self.node_matrix.clone() - DMatrix::identity(n, n)).row_iter().map(|r| r.abs().sum()).fold(0.0, f64::max)
    }

    /// Coefficients in the standard Lagrange basis of the trial polynomial
    /// taking `values` at the element's interpolation points.
    pub fn lagrange_coefficients(&self, values: &DVector<f64>) -> DVector<f64> {
        &self.coefficients * values
    }
}

/// Builds `K`, its inverse and the Dirichlet/free split for element `t`.
pub fn build_modified_basis(
    t: usize,
    mesh: &Mesh,
    numbering: &LagrangeNumbering,
    table: &ShiftedNodeTable,
    reference: &ReferenceElement,
) -> Result<ModifiedElementBasis> {
    let n = reference.n_nodes();
    let map = mesh.affine_map(t);
    let mut k = DMatrix::identity(n, n);
    let mut points = Vec::with_capacity(n);
    let mut dirichlet_local = Vec::new();
    let mut free_local = Vec::new();
    for (i, &node) in numbering.element_nodes[t].iter().enumerate() {
        match table.get(node) {
            Some(entry) => {
                dirichlet_local.push(i);
                points.push(entry.shifted);
                if entry.shifted != entry.original {
                    let xi = map.pullback(&entry.shifted);
                    let row = reference.eval_all(&xi);
                    for (j, v) in row.into_iter().enumerate() {
                        k[(i, j)] = v;
                    }
                }
            }
            None => {
                free_local.push(i);
                points.push(numbering.positions[node]);
            }
        }
    }
    let coefficients = k
        .clone()
        .lu()
        .try_inverse()
        .ok_or(Error::MeshTooCoarse {
            element: t,
            condition: f64::INFINITY,
        })?;
    let condition = one_norm(&k) * one_norm(&coefficients);
    if !(condition <= MAX_NODE_MATRIX_CONDITION) {
        return Err(Error::MeshTooCoarse {
            element: t,
            condition,
        });
    }
    Ok(ModifiedElementBasis {
        element: t,
        node_matrix: k,
        coefficients,
        condition,
        dirichlet_local,
        free_local,
        points,
    })
}

pub(crate) fn one_norm(m: &DMatrix<f64>) -> f64 {
    m.column_iter().map(|c| c.abs().sum()).fold(0.0, f64::max)
}

/// Dirichlet value `g(shifted node)` per global node on `Gamma_h`.
pub fn dirichlet_values(g: &dyn Fn(&Vec3) -> f64, table: &ShiftedNodeTable) -> Vec<(usize, f64)> {
    table.entries.iter().map(|e| (e.node, g(&e.shifted))).collect()
}

/// Everything needed to evaluate and assemble with the shifted trial space.
#[derive(Debug, Clone)]
pub struct TrialSpace {
    pub reference: ReferenceElement,
    pub numbering: LagrangeNumbering,
    pub table: ShiftedNodeTable,
    /// Modified basis for every element touching `Gamma_h`.
    pub bases: Vec<Option<ModifiedElementBasis>>,
}

impl TrialSpace {
    pub fn build(mesh: &Mesh, classification: &BoundaryClassification, degree: usize) -> Result<Self> {
        let curved = mesh.domain.surface.is_some();
        if curved {
            if let Some(&t) = classification.violations.first() {
                let faces = (0..4).filter(|&l| classification.is_gamma_face[mesh.tet_faces[t][l]]).count();
                let edges = (0..6).filter(|&l| classification.is_gamma_edge[mesh.tet_edges[t][l]]).count();
                return Err(Error::MeshAssumption {
                    element: t,
                    faces,
                    edges,
                });
            }
        }
        let reference = ReferenceElement::new(degree)?;
        let numbering = LagrangeNumbering::new(mesh, &reference);
        let table = build_shifted_table(mesh, classification, &numbering)?;
        let mut bases = vec![None; mesh.n_tets()];
        // on polyhedral domains elements touching the boundary in several
        // faces are allowed; their bases are the identity
        let touching = (0..mesh.n_tets()).filter(|&t| classification.contact[t] != BoundaryContact::None);
        for t in touching {
            bases[t] = Some(build_modified_basis(t, mesh, &numbering, &table, &reference)?);
        }
        Ok(TrialSpace {
            reference,
            numbering,
            table,
            bases,
        })
    }

    /// Largest `||K - I||_inf` over `O_h`.
    pub fn max_perturbation(&self) -> f64 {
        self.bases
            .iter()
            .flatten()
            .map(|b| b.perturbation_inf_norm())
            .fold(0.0, f64::max)
    }
}
