//! Global numbering of Lagrangian nodes.

use std::collections::HashMap;

use crate::fem::{NodeSupport, ReferenceElement};
use crate::geometry::Vec3;
use crate::mesh::{BoundaryClassification, Mesh};

/// Mesh entity a Lagrangian node belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeEntity {
    Vertex(usize),
    Edge(usize),
    Face(usize),
    Cell(usize),
}

#[derive(Debug, Clone)]
pub struct LagrangeNumbering {
    pub degree: usize,
    /// Global node per local node, per element.
    pub element_nodes: Vec<Vec<usize>>,
    pub positions: Vec<Vec3>,
    pub entities: Vec<NodeEntity>,
}

impl LagrangeNumbering {
    /// Numbers nodes in order of first appearance (element order, then
    /// local node order), so the result is deterministic.
    pub fn new(mesh: &Mesh, reference: &ReferenceElement) -> Self {
        let k = reference.degree();
        let mut ids: HashMap<Vec<usize>, usize> = HashMap::new();
        let mut positions = Vec::new();
        let mut entities = Vec::new();
        let mut element_nodes = Vec::with_capacity(mesh.n_tets());
        for (t, tet) in mesh.tets.iter().enumerate() {
            let map = mesh.affine_map(t);
            let mut local = Vec::with_capacity(reference.n_nodes());
            for (i, alpha) in reference.multi_indices().iter().enumerate() {
                let mut key: Vec<usize> = (0..4)
                    .flat_map(|v| std::iter::repeat(tet[v]).take(alpha[v]))
                    .collect();
                key.sort_unstable();
                let id = *ids.entry(key).or_insert_with(|| {
                    positions.push(map.map(&reference.node_coords()[i]));
                    entities.push(match reference.support(i) {
                        NodeSupport::Vertex(v) => NodeEntity::Vertex(tet[v]),
                        NodeSupport::Edge(e) => NodeEntity::Edge(mesh.tet_edges[t][e]),
                        NodeSupport::Face(f) => NodeEntity::Face(mesh.tet_faces[t][f]),
                        NodeSupport::Interior => NodeEntity::Cell(t),
                    });
                    positions.len() - 1
                });
                local.push(id);
            }
            element_nodes.push(local);
        }
        debug_assert_eq!(k, reference.degree());
        LagrangeNumbering {
            degree: k,
            element_nodes,
            positions,
            entities,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.positions.len()
    }

    /// Whether each global node lies on the polyhedral boundary `Gamma_h`.
    pub fn on_gamma(&self, classification: &BoundaryClassification) -> Vec<bool> {
        self.entities
            .iter()
            .map(|e| match *e {
                NodeEntity::Vertex(v) => classification.is_gamma_vertex[v],
                NodeEntity::Edge(e) => classification.is_gamma_edge[e],
                NodeEntity::Face(f) => classification.is_gamma_face[f],
                NodeEntity::Cell(_) => false,
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate_box_tet_mesh;

    #[test]
    fn p2_count_on_box() {
        let m = generate_box_tet_mesh([2, 2, 2], Vec3::zeros(), Vec3::repeat(1.0)).unwrap();
        let r = ReferenceElement::new(2).unwrap();
        let n = LagrangeNumbering::new(&m, &r);
        assert_eq!(n.n_nodes(), 5 * 5 * 5);
        let r3 = ReferenceElement::new(3).unwrap();
        let n3 = LagrangeNumbering::new(&m, &r3);
        assert_eq!(n3.n_nodes(), m.vertices.len() + 2 * m.edges.len() + m.faces.len());
    }
}
