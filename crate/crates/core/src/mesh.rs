//! Structured tetrahedral meshes, their topology, and the classification of
//! elements touching the polyhedral boundary.

use std::collections::HashMap;
use std::f64::consts::FRAC_PI_4;

use crate::error::{Error, Result};
use crate::fem::{AffineMap, EDGES, FACES};
use crate::geometry::{Surface, Vec3};

/// Relative volume below which an element is treated as degenerate.
const DEGENERATE_VOLUME: f64 = 1e-12;

/// Flat plane `normal . x = offset` carrying a homogeneous Neumann condition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plane {
    pub normal: Vec3,
    pub offset: f64,
}

impl Plane {
    pub fn through_origin(normal: Vec3) -> Self {
        Plane {
            normal: normal.normalize(),
            offset: 0.0,
        }
    }

    pub fn distance(&self, p: &Vec3) -> f64 {
        self.normal.dot(p) - self.offset
    }

    pub fn contains(&self, p: &Vec3, tol: f64) -> bool {
        self.distance(p).abs() <= tol
    }

    pub fn reflect_vector(&self, v: &Vec3) -> Vec3 {
        v - 2.0 * self.normal.dot(v) * self.normal
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DomainTag {
    Box,
    Octant,
    TorusSector,
    Custom,
}

/// The physical domain a mesh approximates: its curved boundary (absent for
/// polyhedral domains, whose boundary is exactly represented) and the
/// symmetry planes on which natural conditions hold.
#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    pub tag: DomainTag,
    pub surface: Option<Surface>,
    pub symmetry_planes: Vec<Plane>,
}

#[derive(Debug, Clone)]
pub struct Face {
    /// Sorted vertex ids.
    pub vertices: [usize; 3],
    pub owner: usize,
    pub neighbor: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct Edge {
    /// Sorted vertex ids.
    pub vertices: [usize; 2],
    pub tets: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Mesh {
    pub vertices: Vec<Vec3>,
    pub tets: Vec<[usize; 4]>,
    pub faces: Vec<Face>,
    pub edges: Vec<Edge>,
    /// Face ids per tet, in the local order of [`FACES`].
    pub tet_faces: Vec<[usize; 4]>,
    /// Edge ids per tet, in the local order of [`EDGES`].
    pub tet_edges: Vec<[usize; 6]>,
    pub h_t: Vec<f64>,
    pub h: f64,
    pub domain: Domain,
}

impl Mesh {
    /// Builds topology, flipping negatively oriented tets.
    pub fn new(vertices: Vec<Vec3>, mut tets: Vec<[usize; 4]>, domain: Domain) -> Result<Self> {
        for (t, tet) in tets.iter_mut().enumerate() {
            let vol = signed_volume(&vertices, tet);
            let scale = max_edge(&vertices, tet).powi(3);
            if !(vol.abs() > DEGENERATE_VOLUME * scale) {
                return Err(Error::DegenerateElement {
                    element: t,
                    volume: vol,
                });
            }
            if vol < 0.0 {
                tet.swap(2, 3);
            }
        }

        let mut face_ids: HashMap<[usize; 3], usize> = HashMap::new();
        let mut edge_ids: HashMap<[usize; 2], usize> = HashMap::new();
        let mut faces: Vec<Face> = Vec::new();
        let mut edges: Vec<Edge> = Vec::new();
        let mut tet_faces = Vec::with_capacity(tets.len());
        let mut tet_edges = Vec::with_capacity(tets.len());
        for (t, tet) in tets.iter().enumerate() {
            let mut tf = [0; 4];
            for (l, f) in FACES.iter().enumerate() {
                let mut key = [tet[f[0]], tet[f[1]], tet[f[2]]];
                key.sort_unstable();
                let id = *face_ids.entry(key).or_insert_with(|| {
                    faces.push(Face {
                        vertices: key,
                        owner: t,
                        neighbor: None,
                    });
                    faces.len() - 1
                });
                if faces[id].owner != t {
                    if faces[id].neighbor.is_some() {
                        return Err(Error::InvalidArgument(format!(
                            "face {key:?} shared by more than two elements"
                        )));
                    }
                    faces[id].neighbor = Some(t);
                }
                tf[l] = id;
            }
            let mut te = [0; 6];
            for (l, e) in EDGES.iter().enumerate() {
                let mut key = [tet[e[0]], tet[e[1]]];
                key.sort_unstable();
                let id = *edge_ids.entry(key).or_insert_with(|| {
                    edges.push(Edge {
                        vertices: key,
                        tets: Vec::new(),
                    });
                    edges.len() - 1
                });
                edges[id].tets.push(t);
                te[l] = id;
            }
            tet_faces.push(tf);
            tet_edges.push(te);
        }
        let h_t: Vec<f64> = tets.iter().map(|t| max_edge(&vertices, t)).collect();
        let h = h_t.iter().cloned().fold(0.0, f64::max);
        Ok(Mesh {
            vertices,
            tets,
            faces,
            edges,
            tet_faces,
            tet_edges,
            h_t,
            h,
            domain,
        })
    }

    pub fn n_tets(&self) -> usize {
        self.tets.len()
    }

    pub fn tet_vertices(&self, t: usize) -> [Vec3; 4] {
        let tet = &self.tets[t];
        [
            self.vertices[tet[0]],
            self.vertices[tet[1]],
            self.vertices[tet[2]],
            self.vertices[tet[3]],
        ]
    }

    pub fn affine_map(&self, t: usize) -> AffineMap {
        AffineMap::from_vertices(&self.tet_vertices(t))
    }

    pub fn volume(&self, t: usize) -> f64 {
        signed_volume(&self.vertices, &self.tets[t])
    }

    pub fn total_volume(&self) -> f64 {
        (0..self.n_tets()).map(|t| self.volume(t)).sum()
    }

    pub fn min_volume(&self) -> f64 {
        (0..self.n_tets())
            .map(|t| self.volume(t))
            .fold(f64::INFINITY, f64::min)
    }

    /// Ratio `max h_T / min h_T`.
    pub fn quasi_uniformity(&self) -> f64 {
        let min = self.h_t.iter().cloned().fold(f64::INFINITY, f64::min);
        self.h / min
    }

    /// Outward unit normal of a boundary face, oriented away from its owner.
    pub fn face_normal(&self, f: usize) -> Vec3 {
        let face = &self.faces[f];
        let [a, b, c] = face.vertices.map(|v| self.vertices[v]);
        let mut n = (b - a).cross(&(c - a)).normalize();
        let opposite = self.tets[face.owner]
            .iter()
            .find(|v| !face.vertices.contains(v))
            .copied()
            .unwrap();
        if n.dot(&(a - self.vertices[opposite])) < 0.0 {
            n = -n;
        }
        n
    }

    pub fn face_centroid(&self, f: usize) -> Vec3 {
        self.faces[f]
            .vertices
            .iter()
            .map(|&v| self.vertices[v])
            .sum::<Vec3>()
            / 3.0
    }
}

pub fn signed_volume(vertices: &[Vec3], tet: &[usize; 4]) -> f64 {
    let [a, b, c, d] = tet.map(|v| vertices[v]);
    (b - a).cross(&(c - a)).dot(&(d - a)) / 6.0
}

fn max_edge(vertices: &[Vec3], tet: &[usize; 4]) -> f64 {
    EDGES
        .iter()
        .map(|[i, j]| (vertices[tet[*i]] - vertices[tet[*j]]).norm())
        .fold(0.0, f64::max)
}

/// The six tets of the unit cell sharing the main diagonal, as offsets.
pub(crate) fn kuhn_cell() -> [[[usize; 3]; 4]; 6] {
    const PERMS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    PERMS.map(|p| {
        let mut out = [[0usize; 3]; 4];
        let mut cur = [0usize; 3];
        for (s, &axis) in p.iter().enumerate() {
            cur[axis] = 1;
            out[s + 1] = cur;
        }
        out
    })
}

/// Uniform box mesh, each cell split into six tets around the cell diagonal
/// parallel to `(hx, hy, hz)`.
pub fn generate_box_tet_mesh(n: [usize; 3], lo: Vec3, hi: Vec3) -> Result<Mesh> {
    if n.iter().any(|&c| c == 0) {
        return Err(Error::InvalidArgument("box mesh needs at least one cell per axis".into()));
    }
    let (vertices, tets) = box_grid(n, lo, hi);
    let planes = Vec::new();
    Mesh::new(
        vertices,
        tets,
        Domain {
            tag: DomainTag::Box,
            surface: None,
            symmetry_planes: planes,
        },
    )
}

fn box_grid(n: [usize; 3], lo: Vec3, hi: Vec3) -> (Vec<Vec3>, Vec<[usize; 4]>) {
    let id = |i: usize, j: usize, k: usize| (k * (n[1] + 1) + j) * (n[0] + 1) + i;
    let mut vertices = Vec::with_capacity((n[0] + 1) * (n[1] + 1) * (n[2] + 1));
    for k in 0..=n[2] {
        for j in 0..=n[1] {
            for i in 0..=n[0] {
                let t = Vec3::new(
                    i as f64 / n[0] as f64,
                    j as f64 / n[1] as f64,
                    k as f64 / n[2] as f64,
                );
                vertices.push(lo + (hi - lo).component_mul(&t));
            }
        }
    }
    let cell = kuhn_cell();
    let mut tets = Vec::with_capacity(6 * n[0] * n[1] * n[2]);
    for k in 0..n[2] {
        for j in 0..n[1] {
            for i in 0..n[0] {
                for t in &cell {
                    tets.push(t.map(|o| id(i + o[0], j + o[1], k + o[2])));
                }
            }
        }
    }
    (vertices, tets)
}

/// Octant `{x, y, z >= 0}` of a sphere or ellipsoid.
///
/// The corner tetrahedron `(O, e1, e2, e3)` is refined uniformly into `J^3`
/// congruent sub-tetrahedra; each vertex on the shell `x + y + z = j/J` is
/// then pushed radially onto the sphere of radius `j/J`, and the axes are
/// finally scaled by the semiaxes for an ellipsoid. All vertices of the
/// outer shell land on the surface.
pub fn generate_octant_mesh(surface: &Surface, j: usize) -> Result<Mesh> {
    if j == 0 {
        return Err(Error::InvalidArgument("octant mesh needs J >= 1".into()));
    }
    let (center, scale) = match *surface {
        Surface::Sphere { center, radius } => (center, Vec3::repeat(radius)),
        Surface::Ellipsoid { a, b, c } => (Vec3::zeros(), Vec3::new(a, b, c)),
        Surface::Torus { .. } => {
            return Err(Error::InvalidArgument("octant mesh needs a sphere or ellipsoid".into()))
        }
    };
    // Lattice points (i, j, k) with J >= i >= j >= k >= 0 form the Kuhn
    // simplex; (i - j, j - k, k) / J maps it onto the corner tetrahedron.
    let jf = j as f64;
    let mut index = HashMap::new();
    let mut vertices = Vec::new();
    for a in 0..=j {
        for b in 0..=a {
            for c in 0..=b {
                index.insert([a, b, c], vertices.len());
                let p = Vec3::new((a - b) as f64, (b - c) as f64, c as f64) / jf;
                let shell = a as f64 / jf;
                let q = if a == 0 { p } else { p * (shell / p.norm()) };
                vertices.push(center + q.component_mul(&scale));
            }
        }
    }
    let cell = kuhn_cell();
    let mut tets = Vec::with_capacity(j * j * j);
    for a in 0..j {
        for b in 0..=a {
            for c in 0..=b {
                for t in &cell {
                    let pts = t.map(|o| [a + o[0], b + o[1], c + o[2]]);
                    if pts.iter().all(|p| p[0] >= p[1] && p[1] >= p[2]) {
                        tets.push(pts.map(|p| index[&p]));
                    }
                }
            }
        }
    }
    let planes = (0..3)
        .map(|d| {
            let mut n = Vec3::zeros();
            n[d] = 1.0;
            Plane {
                normal: n,
                offset: center[d],
            }
        })
        .collect();
    Mesh::new(
        vertices,
        tets,
        Domain {
            tag: DomainTag::Octant,
            surface: Some(*surface),
            symmetry_planes: planes,
        },
    )
}

/// Maps the unit square onto the unit quarter disk so that the max-norm
/// level sets become circular arcs.
pub fn square_to_quarter_disk(y: f64, z: f64) -> (f64, f64) {
    let m = y.max(z);
    if m <= 0.0 {
        return (0.0, 0.0);
    }
    let phi = if y >= z {
        FRAC_PI_4 * (z / y)
    } else {
        2.0 * FRAC_PI_4 - FRAC_PI_4 * (y / z)
    };
    (m * phi.cos(), m * phi.sin())
}

/// Sector `{z >= 0, 0 <= theta <= pi/4}` of the torus around the z axis,
/// with `6 I^3` tets.
///
/// A `(2I) x (I/2) x (I/2)` box mesh of the unit cube is bent into a
/// quarter cylinder, mirrored into a half cylinder across `y = 0`, and
/// wrapped around the z axis with `rho = r_M + y r_m`, `theta = x pi/4`.
pub fn generate_torus_sector_mesh(i: usize, major: f64, minor: f64) -> Result<Mesh> {
    if i < 2 || i % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "torus mesh parameter I must be even and >= 2, got {i}"
        )));
    }
    let surface = Surface::torus(major, minor)?;
    let nx = 2 * i;
    let n = i / 2;
    // vertex (ix, iy, iz) with iy in -n..=n
    let ny = 2 * n + 1;
    let id = |ix: usize, iy: i64, iz: usize| (iz * ny + (iy + n as i64) as usize) * (nx + 1) + ix;
    let mut vertices = Vec::with_capacity((nx + 1) * ny * (n + 1));
    for iz in 0..=n {
        for iy in -(n as i64)..=(n as i64) {
            for ix in 0..=nx {
                let (dy, dz) = square_to_quarter_disk(iy.unsigned_abs() as f64 / n as f64, iz as f64 / n as f64);
                let y = dy.copysign(iy as f64);
                let theta = FRAC_PI_4 * ix as f64 / nx as f64;
                let rho = major + y * minor;
                vertices.push(Vec3::new(rho * theta.cos(), rho * theta.sin(), dz * minor));
            }
        }
    }
    let cell = kuhn_cell();
    let mut tets = Vec::with_capacity(6 * i * i * i);
    for iz in 0..n {
        for iy in 0..n {
            for ix in 0..nx {
                for t in &cell {
                    tets.push(t.map(|o| id(ix + o[0], (iy + o[1]) as i64, iz + o[2])));
                }
            }
        }
    }
    // mirror image across y = 0
    for iz in 0..n {
        for iy in 0..n {
            for ix in 0..nx {
                for t in &cell {
                    tets.push(t.map(|o| id(ix + o[0], -((iy + o[1]) as i64), iz + o[2])));
                }
            }
        }
    }
    let planes = vec![
        Plane::through_origin(Vec3::new(0.0, 0.0, 1.0)),
        Plane::through_origin(Vec3::new(0.0, 1.0, 0.0)),
        Plane::through_origin(Vec3::new(-FRAC_PI_4.sin(), FRAC_PI_4.cos(), 0.0)),
    ];
    Mesh::new(
        vertices,
        tets,
        Domain {
            tag: DomainTag::TorusSector,
            surface: Some(surface),
            symmetry_planes: planes,
        },
    )
}

/// How an element touches the polyhedral boundary `Gamma_h`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryContact {
    None,
    /// Element of `S_h`; local face index into [`FACES`].
    Face(usize),
    /// Element of `R_h`; local edge index into [`EDGES`].
    Edge(usize),
    /// Violates the one-face-or-one-edge assumption.
    Invalid,
}

#[derive(Debug, Clone)]
pub struct BoundaryClassification {
    pub gamma_faces: Vec<usize>,
    pub gamma_edges: Vec<usize>,
    pub gamma_vertices: Vec<usize>,
    pub is_gamma_face: Vec<bool>,
    pub is_gamma_edge: Vec<bool>,
    pub is_gamma_vertex: Vec<bool>,
    pub s_h: Vec<usize>,
    pub r_h: Vec<usize>,
    pub contact: Vec<BoundaryContact>,
    /// Unit skin direction per edge of `Gamma_h` (None elsewhere).
    pub skin: Vec<Option<Vec3>>,
    pub symmetry_vertices: Vec<bool>,
    /// Elements violating the one-face-or-one-edge assumption.
    pub violations: Vec<usize>,
}

impl BoundaryClassification {
    /// `O_h = S_h ∪ R_h`, sorted.
    pub fn o_h(&self) -> Vec<usize> {
        let mut o: Vec<usize> = self.s_h.iter().chain(&self.r_h).copied().collect();
        o.sort_unstable();
        o
    }

    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Classifies boundary entities of `mesh`.
///
/// Boundary faces lying in a symmetry plane are natural-condition faces;
/// every other boundary face must have its three vertices on `surface`
/// (or, with no surface, is part of a flat Dirichlet boundary).
pub fn classify_boundary(
    mesh: &Mesh,
    surface: Option<&Surface>,
    symmetry_planes: &[Plane],
) -> Result<BoundaryClassification> {
    let plane_tol = 1e-10 * mesh.h.max(1e-300);
    let symmetry_vertices: Vec<bool> = mesh
        .vertices
        .iter()
        .map(|v| symmetry_planes.iter().any(|p| p.contains(v, plane_tol)))
        .collect();
    let face_plane = |f: &Face| {
        symmetry_planes.iter().position(|p| {
            f.vertices
                .iter()
                .all(|&v| p.contains(&mesh.vertices[v], plane_tol))
        })
    };

    let mut is_gamma_face = vec![false; mesh.faces.len()];
    for (fid, face) in mesh.faces.iter().enumerate() {
        if face.neighbor.is_some() || face_plane(face).is_some() {
            continue;
        }
        if let Some(s) = surface {
            for &v in &face.vertices {
                let value = s.implicit_value(&mesh.vertices[v]);
                if value.abs() > s.tol_surface() {
                    return Err(Error::BoundaryVertexOffSurface { vertex: v, value });
                }
            }
        }
        is_gamma_face[fid] = true;
    }

    let mut is_gamma_edge = vec![false; mesh.edges.len()];
    let mut is_gamma_vertex = vec![false; mesh.vertices.len()];
    // Gamma_h faces incident to each Gamma_h edge.
    let mut edge_faces: HashMap<usize, Vec<usize>> = HashMap::new();
    for t in 0..mesh.n_tets() {
        for (lf, f) in FACES.iter().enumerate() {
            let fid = mesh.tet_faces[t][lf];
            if !is_gamma_face[fid] {
                continue;
            }
            for &lv in f {
                is_gamma_vertex[mesh.tets[t][lv]] = true;
            }
            for (le, e) in EDGES.iter().enumerate() {
                if f.contains(&e[0]) && f.contains(&e[1]) {
                    let eid = mesh.tet_edges[t][le];
                    is_gamma_edge[eid] = true;
                    edge_faces.entry(eid).or_default().push(fid);
                }
            }
        }
    }

    let mut s_h = Vec::new();
    let mut r_h = Vec::new();
    let mut violations = Vec::new();
    let mut contact = Vec::with_capacity(mesh.n_tets());
    for t in 0..mesh.n_tets() {
        let faces: Vec<usize> = (0..4).filter(|&l| is_gamma_face[mesh.tet_faces[t][l]]).collect();
        let edges: Vec<usize> = (0..6).filter(|&l| is_gamma_edge[mesh.tet_edges[t][l]]).collect();
        let c = match (faces.len(), edges.len()) {
            (0, 0) => BoundaryContact::None,
            (1, 3) => {
                s_h.push(t);
                BoundaryContact::Face(faces[0])
            }
            (0, 1) => {
                r_h.push(t);
                BoundaryContact::Edge(edges[0])
            }
            _ => {
                violations.push(t);
                BoundaryContact::Invalid
            }
        };
        contact.push(c);
    }

    let mut skin = vec![None; mesh.edges.len()];
    let mut keys: Vec<_> = edge_faces.keys().copied().collect();
    keys.sort_unstable();
    for eid in keys {
        let faces = &edge_faces[&eid];
        let [a, b] = mesh.edges[eid].vertices.map(|v| mesh.vertices[v]);
        let mut normals: Vec<Vec3> = faces.iter().map(|&f| mesh.face_normal(f)).collect();
        if faces.len() == 1 {
            // Edge on a symmetry plane: the mirrored face supplies the
            // second normal.
            if let Some(p) = symmetry_planes
                .iter()
                .find(|p| p.contains(&a, plane_tol) && p.contains(&b, plane_tol))
            {
                normals.push(p.reflect_vector(&normals[0]));
            }
        }
        let e = mesh.edges[eid].vertices;
        skin[eid] = Some(skin_direction(&a, &b, &normals).map_err(|_| Error::DegenerateSkin(e[0], e[1]))?);
    }

    let collect = |mask: &[bool]| mask.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i).collect();
    Ok(BoundaryClassification {
        gamma_faces: collect(&is_gamma_face),
        gamma_edges: collect(&is_gamma_edge),
        gamma_vertices: collect(&is_gamma_vertex),
        is_gamma_face,
        is_gamma_edge,
        is_gamma_vertex,
        s_h,
        r_h,
        contact,
        skin,
        symmetry_vertices,
        violations,
    })
}

/// Classification using the surface and symmetry planes recorded on the mesh.
pub fn classify_mesh(mesh: &Mesh) -> Result<BoundaryClassification> {
    classify_boundary(mesh, mesh.domain.surface.as_ref(), &mesh.domain.symmetry_planes)
}

/// Direction of the skin plane at boundary edge `a b`: the bisector of the
/// adjacent outward face normals, made orthogonal to the edge.
pub fn skin_direction(a: &Vec3, b: &Vec3, face_normals: &[Vec3]) -> Result<Vec3> {
    let e = (b - a).normalize();
    let sum: Vec3 = face_normals.iter().sum();
    let w = sum - sum.dot(&e) * e;
    let n = w.norm();
    if !(n > 1e-6 * sum.norm()) {
        return Err(Error::InvalidArgument("degenerate skin".into()));
    }
    let mut w = w / n;
    // remove the residual edge component left by rounding
    w -= w.dot(&e) * e;
    Ok(w.normalize())
}
