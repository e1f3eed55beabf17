//! Reference Lagrange tetrahedra of degree 2 and 3, tetrahedral quadrature
//! and affine element maps.
//!
//! The reference tetrahedron has vertices `(0,0,0)`, `(1,0,0)`, `(0,1,0)`,
//! `(0,0,1)`, with barycentric coordinates `l0 = 1 - x - y - z`, `l1 = x`,
//! `l2 = y`, `l3 = z`.
//!
//! # Node ordering
//!
//! Nodes are identified by their barycentric multi-index `alpha` (with
//! `|alpha| = k`) and are listed as
//!
//! 1. the four vertices `0..4`;
//! 2. the edge nodes, edge by edge in the order `01, 02, 03, 12, 13, 23`,
//!    each edge walked from its first vertex towards its second;
//! 3. for `k = 3`, one node per face in the order `012, 013, 023, 123`.
//!
//! Golden files and the global numbering rely on this order.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::geometry::Vec3;

/// Local vertex pairs of the six tetrahedron edges.
pub const EDGES: [[usize; 2]; 6] = [[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]];
/// Local vertex triples of the four tetrahedron faces.
pub const FACES: [[usize; 3]; 4] = [[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]];

/// Where a Lagrangian node sits on the element.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeSupport {
    Vertex(usize),
    Edge(usize),
    Face(usize),
    Interior,
}

#[derive(Debug, Clone)]
pub struct ReferenceElement {
    degree: usize,
    multi_indices: Vec<[usize; 4]>,
    coords: Vec<Vec3>,
}

impl ReferenceElement {
    pub fn new(degree: usize) -> Result<Self> {
        let multi_indices = lagrange_multi_indices(degree)?;
        let k = degree as f64;
        let coords = multi_indices
            .iter()
            .map(|a| Vec3::new(a[1] as f64 / k, a[2] as f64 / k, a[3] as f64 / k))
            .collect();
        Ok(Self {
            degree,
            multi_indices,
            coords,
        })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// `n_k = (k+3)(k+2)(k+1)/6`
    pub fn n_nodes(&self) -> usize {
        self.multi_indices.len()
    }

    /// Nodes not on a given boundary face: `m_k = k(k+2)(k+1)/6`.
    pub fn m_k(&self) -> usize {
        let k = self.degree;
        k * (k + 2) * (k + 1) / 6
    }

    /// Nodes not on a given boundary edge: `p_k = n_k - (k+1)`.
    pub fn p_k(&self) -> usize {
        self.n_nodes() - (self.degree + 1)
    }

    pub fn multi_indices(&self) -> &[[usize; 4]] {
        &self.multi_indices
    }

    pub fn node_coords(&self) -> &[Vec3] {
        &self.coords
    }

    pub fn support(&self, i: usize) -> NodeSupport {
        let a = &self.multi_indices[i];
        let on: Vec<usize> = (0..4).filter(|&v| a[v] > 0).collect();
        match on.len() {
            1 => NodeSupport::Vertex(on[0]),
            2 => NodeSupport::Edge(EDGES.iter().position(|e| e == &[on[0], on[1]]).unwrap()),
            3 => NodeSupport::Face(
                FACES
                    .iter()
                    .position(|f| f == &[on[0], on[1], on[2]])
                    .unwrap(),
            ),
            _ => NodeSupport::Interior,
        }
    }

    /// Local node indices lying on the closure of the given set of local
    /// vertices (a vertex, an edge or a face).
    pub fn nodes_on(&self, vertices: &[usize]) -> Vec<usize> {
        (0..self.n_nodes())
            .filter(|&i| (0..4).all(|v| self.multi_indices[i][v] == 0 || vertices.contains(&v)))
            .collect()
    }

    pub fn eval(&self, i: usize, xi: &Vec3) -> f64 {
        let l = barycentric(xi);
        lagrange_value(&self.multi_indices[i], &l, self.degree)
    }

    pub fn grad(&self, i: usize, xi: &Vec3) -> Vec3 {
        let l = barycentric(xi);
        let dl = lagrange_dlambda(&self.multi_indices[i], &l, self.degree);
        bary_to_ref_gradient(&dl)
    }

    pub fn eval_all(&self, xi: &Vec3) -> Vec<f64> {
        let l = barycentric(xi);
        self.multi_indices
            .iter()
            .map(|a| lagrange_value(a, &l, self.degree))
            .collect()
    }

    pub fn grad_all(&self, xi: &Vec3) -> Vec<Vec3> {
        let l = barycentric(xi);
        self.multi_indices
            .iter()
            .map(|a| bary_to_ref_gradient(&lagrange_dlambda(a, &l, self.degree)))
            .collect()
    }
}

/// Lagrangian node multi-indices in canonical order.
pub fn lagrange_multi_indices(k: usize) -> Result<Vec<[usize; 4]>> {
    if !(2..=3).contains(&k) {
        return Err(Error::UnsupportedDegree(k));
    }
    let mut out = Vec::new();
    for v in 0..4 {
        let mut a = [0; 4];
        a[v] = k;
        out.push(a);
    }
    for [p, q] in EDGES {
        for m in 1..k {
            let mut a = [0; 4];
            a[p] = k - m;
            a[q] = m;
            out.push(a);
        }
    }
    if k == 3 {
        for [p, q, r] in FACES {
            let mut a = [0; 4];
            a[p] = 1;
            a[q] = 1;
            a[r] = 1;
            out.push(a);
        }
    }
    Ok(out)
}

/// Reference coordinates of the Lagrangian nodes of degree `k`.
pub fn lagrange_nodes(k: usize) -> Result<Vec<Vec3>> {
    Ok(ReferenceElement::new(k)?.coords)
}

pub fn barycentric(xi: &Vec3) -> [f64; 4] {
    [1.0 - xi.x - xi.y - xi.z, xi.x, xi.y, xi.z]
}

fn bary_to_ref_gradient(dl: &[f64; 4]) -> Vec3 {
    Vec3::new(dl[1] - dl[0], dl[2] - dl[0], dl[3] - dl[0])
}

// phi_alpha = prod_i prod_{j < alpha_i} (k l_i - j) / (j + 1)
fn factor(a: usize, l: f64, k: usize) -> f64 {
    (0..a).fold(1.0, |acc, j| acc * (k as f64 * l - j as f64) / (j + 1) as f64)
}

fn factor_derivative(a: usize, l: f64, k: usize) -> f64 {
    let kf = k as f64;
    (0..a)
        .map(|m| {
            (0..a).fold(1.0, |acc, j| {
                let t = if j == m { kf } else { kf * l - j as f64 };
                acc * t / (j + 1) as f64
            })
        })
        .sum()
}

fn lagrange_value(a: &[usize; 4], l: &[f64; 4], k: usize) -> f64 {
    (0..4).map(|i| factor(a[i], l[i], k)).product()
}

fn lagrange_dlambda(a: &[usize; 4], l: &[f64; 4], k: usize) -> [f64; 4] {
    let f: [f64; 4] = std::array::from_fn(|i| factor(a[i], l[i], k));
    std::array::from_fn(|i| {
        let mut d = factor_derivative(a[i], l[i], k);
        for j in 0..4 {
            if j != i {
                d *= f[j];
            }
        }
        d
    })
}

/// Symmetric quadrature rule on the reference tetrahedron. Weights sum to
/// the reference volume `1/6`.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub degree: usize,
    pub points: Vec<Vec3>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// 4-point rule, exact for degree 2.
    pub fn four_point() -> Self {
        let a = (5.0 - 5.0_f64.sqrt()) / 20.0;
        let mut rule = QuadratureRule {
            degree: 2,
            points: Vec::new(),
            weights: Vec::new(),
        };
        rule.push_orbit4(a, 0.25);
        rule
    }

    /// 15-point rule with positive weights, exact for degree 5.
    pub fn fifteen_point() -> Self {
        let mut rule = QuadratureRule {
            degree: 5,
            points: vec![Vec3::repeat(0.25)],
            weights: vec![16.0 / 135.0 / 6.0],
        };
        rule.push_orbit4(0.091971078052723032789, 0.071937083779018620010);
        rule.push_orbit4(0.319793627829629908387, 0.069068207226272385281);
        let c = (1.0 - (3.0_f64 / 5.0).sqrt()) / 4.0;
        let d = 0.5 - c;
        let w = 10.0 / 189.0 / 6.0;
        for [i, j] in EDGES {
            let mut l = [c; 4];
            l[i] = d;
            l[j] = d;
            rule.points.push(Vec3::new(l[1], l[2], l[3]));
            rule.weights.push(w);
        }
        rule
    }

    /// Conical product of `n`-point Gauss-Legendre rules through the
    /// collapsed-cube map; exact for degree `2n - 3`.
    pub fn collapsed_gauss(n: usize) -> Self {
        let (x, w) = gauss_legendre(n);
        let mut rule = QuadratureRule {
            degree: 2 * n - 3,
            points: Vec::with_capacity(n * n * n),
            weights: Vec::with_capacity(n * n * n),
        };
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let (u, v, s) = (x[i], x[j], x[k]);
                    rule.points.push(Vec3::new(u, v * (1.0 - u), s * (1.0 - u) * (1.0 - v)));
                    rule.weights.push(w[i] * w[j] * w[k] * (1.0 - u).powi(2) * (1.0 - v));
                }
            }
        }
        rule
    }

    /// The rule applied on each of the `j^3` sub-tetrahedra of a uniform
    /// refinement of the reference tetrahedron.
    pub fn composite(&self, j: usize) -> Self {
        let jf = j as f64;
        let lattice = |p: [usize; 3]| Vec3::new((p[0] - p[1]) as f64, (p[1] - p[2]) as f64, p[2] as f64) / jf;
        let mut out = QuadratureRule {
            degree: self.degree,
            points: Vec::new(),
            weights: Vec::new(),
        };
        for a in 0..j {
            for b in 0..=a {
                for c in 0..=b {
                    for cell in crate::mesh::kuhn_cell() {
                        let pts = cell.map(|o| [a + o[0], b + o[1], c + o[2]]);
                        if !pts.iter().all(|p| p[0] >= p[1] && p[1] >= p[2]) {
                            continue;
                        }
                        let map = AffineMap::from_vertices(&pts.map(lattice));
                        let det = map.det.abs();
                        for (x, w) in self.points.iter().zip(&self.weights) {
                            out.points.push(map.map(x));
                            out.weights.push(w * det);
                        }
                    }
                }
            }
        }
        out
    }

    // Points with barycentrics (b, a, a, a) and permutations; `w` is the
    // normalized weight (rule weights summing to one).
    fn push_orbit4(&mut self, a: f64, w: f64) {
        let b = 1.0 - 3.0 * a;
        for v in 0..4 {
            let mut l = [a; 4];
            l[v] = b;
            self.points.push(Vec3::new(l[1], l[2], l[3]));
            self.weights.push(w / 6.0);
        }
    }
}

/// Gauss-Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for i in 0..n {
        let mut t = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            // three-term recurrence for P_n and its derivative
            let (mut p0, mut p1) = (1.0, t);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * t * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else if n == 1 { t } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (t * pn - pm) / (t * t - 1.0);
            let dt = pn / dp;
            t -= dt;
            if dt.abs() < 1e-16 {
                break;
            }
        }
        nodes.push(0.5 * (1.0 - t));
        weights.push(1.0 / ((1.0 - t * t) * dp * dp));
    }
    (nodes, weights)
}

/// Cheapest built-in rule exact to at least `min_degree`.
pub fn quadrature_rule(min_degree: usize) -> Result<QuadratureRule> {
    match min_degree {
        0..=2 => Ok(QuadratureRule::four_point()),
        3..=5 => Ok(QuadratureRule::fifteen_point()),
        d => Err(Error::UnsupportedQuadrature(d)),
    }
}

/// `x = B xi + b` taking the reference tetrahedron onto a physical one.
#[derive(Debug, Clone, Copy)]
pub struct AffineMap {
    pub linear: Matrix3<f64>,
    pub translation: Vec3,
    pub det: f64,
    inverse: Matrix3<f64>,
}

impl AffineMap {
    pub fn from_vertices(v: &[Vec3; 4]) -> Self {
        let linear = Matrix3::from_columns(&[v[1] - v[0], v[2] - v[0], v[3] - v[0]]);
        let det = linear.determinant();
        let inverse = linear.try_inverse().unwrap_or_else(|| Matrix3::from_element(f64::NAN));
        Self {
            linear,
            translation: v[0],
            det,
            inverse,
        }
    }

    pub fn volume(&self) -> f64 {
        self.det / 6.0
    }

    pub fn map(&self, xi: &Vec3) -> Vec3 {
        self.linear * xi + self.translation
    }

    pub fn pullback(&self, x: &Vec3) -> Vec3 {
        self.inverse * (x - self.translation)
    }

    /// Physical gradient from a reference gradient: `B^{-T} g`.
    pub fn push_gradient(&self, g: &Vector3<f64>) -> Vec3 {
        self.inverse.transpose() * g
    }
}
