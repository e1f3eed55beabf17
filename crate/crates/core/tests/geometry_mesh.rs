use std::collections::{BTreeMap, BTreeSet};

use curvedfem::geometry::{Line3, Surface, Vec3};
use curvedfem::mesh::{classify_mesh, generate_octant_mesh, generate_torus_sector_mesh, BoundaryContact, Mesh};
use curvedfem::numbering::NodeEntity;
use curvedfem::trial::TrialSpace;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn torus() -> Surface {
    Surface::torus(5.0 / 6.0, 1.0 / 6.0).unwrap()
}

fn ellipsoid() -> Surface {
    Surface::ellipsoid(0.6, 0.8, 1.0).unwrap()
}

/// All roots of `t -> F(o + t d)` on `[-r, r]`, by scanning and bisection.
fn bisection_roots(s: &Surface, line: &Line3, r: f64) -> Vec<f64> {
    let n = 4000;
    let f = |t: f64| s.implicit_value(&line.at(t));
    let mut roots = Vec::new();
    for i in 0..n {
        let (mut a, mut b) = (-r + 2.0 * r * i as f64 / n as f64, -r + 2.0 * r * (i + 1) as f64 / n as f64);
        let (fa, fb) = (f(a), f(b));
        if fa == 0.0 {
            roots.push(a);
            continue;
        }
        if fa * fb > 0.0 {
            continue;
        }
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if f(a) * f(m) <= 0.0 {
                b = m;
            } else {
                a = m;
            }
        }
        roots.push(0.5 * (a + b));
    }
    roots
}

#[test]
fn torus_line_intersection_matches_bisection() {
    let s = torus();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let h = 0.05;
    let mut checked = 0;
    for _ in 0..200 {
        let (theta, phi): (f64, f64) = (rng.random_range(0.0..6.28), rng.random_range(0.0..6.28));
        let rho = 5.0 / 6.0 + phi.cos() / 6.0;
        let on = Vec3::new(rho * theta.cos(), rho * theta.sin(), phi.sin() / 6.0);
        let offset = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let origin = on + 0.02 * offset;
        let d = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let line = Line3::new(origin, d).unwrap();
        let roots = bisection_roots(&s, &line, 4.0 * h);
        let Some(&t) = roots.iter().min_by(|a, b| a.abs().total_cmp(&b.abs())) else {
            assert!(s.nearest_line_intersection(&line, h).is_err());
            continue;
        };
        // skip near-ties between the two closest roots
        if roots.iter().any(|r| *r != t && (r.abs() - t.abs()).abs() < 1e-6) {
            continue;
        }
        let p = s.nearest_line_intersection(&line, h).unwrap();
        assert!((p - line.at(t)).norm() < 1e-10, "{p:?} vs {:?}", line.at(t));
        checked += 1;
    }
    assert!(checked > 150);
}

#[test]
fn ellipsoid_projection_matches_dense_sampling() {
    let s = ellipsoid();
    let n = 1000;
    let mut samples = Vec::with_capacity(n * n);
    for i in 0..n {
        let theta = std::f64::consts::PI * (i as f64 + 0.5) / n as f64;
        for j in 0..n {
            let phi = std::f64::consts::TAU * j as f64 / n as f64;
            samples.push(Vec3::new(0.6 * theta.sin() * phi.cos(), 0.8 * theta.sin() * phi.sin(), theta.cos()));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10 {
        let idx = rng.random_range(0..samples.len());
        let n = s.outward_normal(&samples[idx]).unwrap();
        let p = samples[idx] + rng.random_range(-0.1..0.1) * n;
        let q = s.closest_point_projection(&p).unwrap();
        assert!(s.implicit_value(&q).abs() < 1e-12);
        let oracle = samples.iter().map(|x| (x - p).norm()).fold(f64::INFINITY, f64::min);
        assert!(((q - p).norm() - oracle).abs() < 1e-4, "{} vs {oracle}", (q - p).norm());
    }
}

#[test]
fn mesh_counts() {
    assert_eq!(generate_octant_mesh(&Surface::unit_sphere(), 4).unwrap().n_tets(), 64);
    assert_eq!(generate_torus_sector_mesh(2, 5.0 / 6.0, 1.0 / 6.0).unwrap().n_tets(), 48);
    assert_eq!(generate_torus_sector_mesh(4, 5.0 / 6.0, 1.0 / 6.0).unwrap().n_tets(), 384);
    assert!(generate_torus_sector_mesh(3, 5.0 / 6.0, 1.0 / 6.0).is_err());
}

#[test]
fn curved_vertices_lie_on_surface() {
    let meshes = [
        (generate_octant_mesh(&Surface::unit_sphere(), 4).unwrap(), 1e-12),
        (generate_torus_sector_mesh(4, 5.0 / 6.0, 1.0 / 6.0).unwrap(), 1e-12),
    ];
    for (m, tol) in &meshes {
        let s = m.domain.surface.unwrap();
        let c = classify_mesh(m).unwrap();
        assert!(!c.gamma_vertices.is_empty());
        for &v in &c.gamma_vertices {
            assert!(s.implicit_value(&m.vertices[v]).abs() < *tol);
        }
    }
    let m = generate_octant_mesh(&Surface::unit_sphere(), 4).unwrap();
    for f in m.faces.iter().filter(|f| f.neighbor.is_none()) {
        for &v in &f.vertices {
            let p = m.vertices[v];
            let r = p.norm();
            assert!(r < 1.0 + 1e-12);
            if p.x > 1e-12 && p.y > 1e-12 && p.z > 1e-12 {
                assert!((r - 1.0).abs() < 1e-12, "shell vertex off sphere");
            }
        }
    }
}

#[test]
fn ellipsoid_octant_volumes_positive() {
    let m = generate_octant_mesh(&ellipsoid(), 8).unwrap();
    assert!((0..m.n_tets()).all(|t| m.volume(t) > 0.0));
}

/// Boundary faces with all vertices on the curved surface and not lying in a
/// symmetry plane, found by a direct scan.
fn scanned_gamma_faces(m: &Mesh) -> Vec<[usize; 3]> {
    let s = m.domain.surface.unwrap();
    let tol = 1e-10;
    m.faces
        .iter()
        .filter(|f| f.neighbor.is_none())
        .filter(|f| f.vertices.iter().all(|&v| s.implicit_value(&m.vertices[v]).abs() < tol))
        .filter(|f| {
            !m.domain
                .symmetry_planes
                .iter()
                .any(|p| f.vertices.iter().all(|&v| p.contains(&m.vertices[v], tol)))
        })
        .map(|f| f.vertices)
        .collect()
}

fn census(m: &Mesh) {
    let c = classify_mesh(m).unwrap();
    let faces: BTreeSet<[usize; 3]> = scanned_gamma_faces(m).into_iter().collect();
    let mut edges: BTreeSet<[usize; 2]> = BTreeSet::new();
    for f in &faces {
        for (a, b) in [(0, 1), (0, 2), (1, 2)] {
            edges.insert([f[a], f[b]]);
        }
    }
    assert_eq!(faces.len(), c.gamma_faces.len());
    let mut touching = 0;
    for (t, tet) in m.tets.iter().enumerate() {
        let mut v = *tet;
        v.sort_unstable();
        let nf = [[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]]
            .iter()
            .filter(|i| faces.contains(&[v[i[0]], v[i[1]], v[i[2]]]))
            .count();
        let ne = [[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]]
            .iter()
            .filter(|i| edges.contains(&[v[i[0]], v[i[1]]]))
            .count();
        match (nf, ne) {
            (0, 0) => assert!(matches!(c.contact[t], BoundaryContact::None)),
            (1, _) => assert!(c.s_h.contains(&t)),
            (0, 1) => assert!(c.r_h.contains(&t)),
            _ => assert!(c.violations.contains(&t)),
        }
        if nf + ne > 0 {
            touching += 1;
        }
    }
    assert_eq!(c.s_h.len() + c.r_h.len() + c.violations.len(), touching);
}

#[test]
fn boundary_sets_match_incidence_scan() {
    census(&generate_octant_mesh(&Surface::unit_sphere(), 4).unwrap());
    census(&generate_octant_mesh(&ellipsoid(), 4).unwrap());
    census(&generate_torus_sector_mesh(4, 5.0 / 6.0, 1.0 / 6.0).unwrap());
    let one = generate_octant_mesh(&Surface::unit_sphere(), 1).unwrap();
    let c = classify_mesh(&one).unwrap();
    assert_eq!((c.s_h.clone(), c.r_h.len()), (vec![0], 0));
}

#[test]
fn torus_boundary_is_a_surface_manifold() {
    let m = generate_torus_sector_mesh(2, 5.0 / 6.0, 1.0 / 6.0).unwrap();
    let mut incident: BTreeMap<[usize; 2], usize> = BTreeMap::new();
    for f in scanned_gamma_faces(&m) {
        for (a, b) in [(0, 1), (0, 2), (1, 2)] {
            *incident.entry([f[a], f[b]]).or_default() += 1;
        }
    }
    for (e, n) in incident {
        let in_plane = m
            .domain
            .symmetry_planes
            .iter()
            .any(|p| e.iter().all(|&v| p.contains(&m.vertices[v], 1e-10)));
        // edges on a cut plane bound the sector's piece of the surface
        assert_eq!(n, if in_plane { 1 } else { 2 }, "edge {e:?}");
    }
}

#[test]
fn skin_is_upright() {
    for j in [4, 8] {
        let m = generate_octant_mesh(&Surface::unit_sphere(), j).unwrap();
        let c = classify_mesh(&m).unwrap();
        let s = m.domain.surface.unwrap();
        for &e in &c.gamma_edges {
            let w = c.skin[e].unwrap();
            let [a, b] = m.edges[e].vertices;
            let mid = 0.5 * (m.vertices[a] + m.vertices[b]);
            let p = s.nearest_line_intersection(&Line3::new(mid, w).unwrap(), m.h).unwrap();
            let n = s.outward_normal(&p).unwrap();
            assert!(w.dot(&n).abs() >= 1.0 - m.h, "J={j} edge {e}: {}", w.dot(&n));
        }
    }
}

fn max_edge_shift(m: &Mesh) -> f64 {
    let c = classify_mesh(m).unwrap();
    let trial = TrialSpace::build(m, &c, 2).unwrap();
    trial
        .table
        .entries
        .iter()
        .filter(|e| matches!(e.entity, NodeEntity::Edge(_)))
        .map(|e| (e.original - e.shifted).norm())
        .fold(0.0, f64::max)
}

#[test]
fn edge_node_shift_is_second_order() {
    let s = ellipsoid();
    let d4 = max_edge_shift(&generate_octant_mesh(&s, 4).unwrap());
    let d8 = max_edge_shift(&generate_octant_mesh(&s, 8).unwrap());
    let ratio = d4 / d8;
    assert!((3.4..=4.6).contains(&ratio), "ratio {ratio}");
}

#[test]
fn cubic_face_nodes_scale_radially() {
    // Corner tet of the J = 1 octant: the apex is the origin, so the face
    // nodes move radially onto the sphere.
    let m = generate_octant_mesh(&Surface::unit_sphere(), 1).unwrap();
    let c = classify_mesh(&m).unwrap();
    let trial = TrialSpace::build(&m, &c, 3).unwrap();
    let faces: Vec<_> = trial.table.entries.iter().filter(|e| matches!(e.entity, NodeEntity::Face(_))).collect();
    assert_eq!(faces.len(), 1);
    let e = faces[0];
    let radial = e.original / e.original.norm();
    assert!((e.shifted - radial).norm() < 1e-12);
}
