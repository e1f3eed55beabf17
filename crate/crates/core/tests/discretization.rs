use curvedfem::analysis::{error_norms_with, run_case, CaseRun, ExactCase, Method, RunOptions};
use curvedfem::assembly::{
    assemble_new_method, assemble_polyhedral, element_stiffness, AssemblyMode, DirichletData,
};
use curvedfem::fem::{AffineMap, QuadratureRule, ReferenceElement};
use curvedfem::mesh::{classify_mesh, generate_box_tet_mesh, generate_octant_mesh, Mesh};
use curvedfem::nonconforming::{nc_assemble, nc_build_reference_basis, NcSpace, NC_DOFS};
use curvedfem::numbering::LagrangeNumbering;
use curvedfem::solver::solve;
use curvedfem::trial::TrialSpace;
use curvedfem::{Surface, Vec3};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn run(case: &str, method: Method, param: usize) -> CaseRun {
    run_case(&ExactCase::by_name(case).unwrap(), method, 2, param, &RunOptions::default()).unwrap()
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Monomial exponents of total degree <= 2.
fn exponents() -> Vec<[usize; 3]> {
    let mut e = Vec::new();
    for a in 0..=2 {
        for b in 0..=2 - a {
            for c in 0..=2 - a - b {
                e.push([a, b, c]);
            }
        }
    }
    e
}

fn monomial(e: &[usize; 3], p: &Vec3) -> f64 {
    p.x.powi(e[0] as i32) * p.y.powi(e[1] as i32) * p.z.powi(e[2] as i32)
}

/// Exact P2 stiffness on the reference tet: shape functions expanded in
/// monomials and products of their derivatives integrated in closed form.
fn exact_p2_stiffness(nodes: &[Vec3]) -> DMatrix<f64> {
    let e = exponents();
    let v = DMatrix::from_fn(nodes.len(), e.len(), |i, j| monomial(&e[j], &nodes[i]));
    // columns: coefficients of each shape function
    let c = v.try_inverse().unwrap();
    let integral = |a: [usize; 3]| factorial(a[0]) * factorial(a[1]) * factorial(a[2]) / factorial(a[0] + a[1] + a[2] + 3);
    let n = nodes.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for (p, ep) in e.iter().enumerate() {
                for (q, eq) in e.iter().enumerate() {
                    for d in 0..3 {
                        if ep[d] == 0 || eq[d] == 0 {
                            continue;
                        }
                        let mut a = [ep[0] + eq[0], ep[1] + eq[1], ep[2] + eq[2]];
                        a[d] -= 2;
                        s += c[(p, i)] * c[(q, j)] * (ep[d] * eq[d]) as f64 * integral(a);
                    }
                }
            }
            k[(i, j)] = s;
        }
    }
    k
}

#[test]
fn p2_stiffness_matches_exact_integration() {
    let r = ReferenceElement::new(2).unwrap();
    let map = AffineMap::from_vertices(&[Vec3::zeros(), Vec3::x(), Vec3::y(), Vec3::z()]);
    let k = element_stiffness(&map, &r, &QuadratureRule::fifteen_point()).unwrap();
    let exact = exact_p2_stiffness(r.node_coords());
    assert!((k - exact).amax() < 1e-13);
}

#[test]
fn quadratic_case_exact_at_free_nodes() {
    let case = ExactCase::by_name("quadratic").unwrap();
    let mesh = case.mesh(2).unwrap();
    let c = classify_mesh(&mesh).unwrap();
    let trial = TrialSpace::build(&mesh, &c, 2).unwrap();
    let r = run("quadratic", Method::New, 2);
    let mut checked = 0;
    for (node, eq) in r.system.dofs.equation.iter().enumerate() {
        if let Some(eq) = eq {
            let exact = case.u(&trial.numbering.positions[node]);
            assert!((r.solve.solution[*eq] - exact).abs() <= 1e-10);
            checked += 1;
        }
    }
    assert_eq!(checked, r.system.dimension());
}

/// Lagrange nodes minus those on the curved part of the mesh boundary,
/// counted from the mesh entities directly.
fn census(mesh: &Mesh, k: usize) -> usize {
    let s = mesh.domain.surface.unwrap();
    let on = |v: usize| s.implicit_value(&mesh.vertices[v]).abs() < 1e-10;
    let in_plane = |vs: &[usize]| {
        mesh.domain
            .symmetry_planes
            .iter()
            .any(|p| vs.iter().all(|&v| p.contains(&mesh.vertices[v], 1e-10)))
    };
    let gamma_faces: Vec<[usize; 3]> = mesh
        .faces
        .iter()
        .filter(|f| f.neighbor.is_none() && f.vertices.iter().all(|&v| on(v)) && !in_plane(&f.vertices))
        .map(|f| f.vertices)
        .collect();
    let mut gv: Vec<usize> = gamma_faces.iter().flatten().copied().collect();
    gv.sort_unstable();
    gv.dedup();
    let mut ge: Vec<[usize; 2]> = gamma_faces
        .iter()
        .flat_map(|f| [[f[0], f[1]], [f[0], f[2]], [f[1], f[2]]])
        .collect();
    ge.sort_unstable();
    ge.dedup();
    let total = mesh.vertices.len() + (k - 1) * mesh.edges.len() + if k == 3 { mesh.faces.len() } else { 0 };
    let gamma = gv.len() + (k - 1) * ge.len() + if k == 3 { gamma_faces.len() } else { 0 };
    total - gamma
}

#[test]
fn system_dimension_matches_node_census() {
    for s in [Surface::unit_sphere(), Surface::ellipsoid(0.6, 0.8, 1.0).unwrap()] {
        for (j, k) in [(2, 2), (4, 2), (4, 3)] {
            let mesh = generate_octant_mesh(&s, j).unwrap();
            let c = classify_mesh(&mesh).unwrap();
            let trial = TrialSpace::build(&mesh, &c, k).unwrap();
            let f = |_: &Vec3| 1.0;
            let sys = assemble_new_method(
                &mesh,
                &c,
                &trial,
                &f,
                DirichletData::Homogeneous,
                &QuadratureRule::fifteen_point(),
                AssemblyMode::Sequential,
            )
            .unwrap();
            assert_eq!(sys.dimension(), census(&mesh, k), "J={j} k={k}");
        }
    }
}

#[test]
fn polyhedral_quadratic_error_near_one_and_a_half_percent() {
    let r = run("quadratic", Method::Polyhedral, 16).report;
    let exact_norm = 1.0214597;
    let rel = r.err_h1_broken / exact_norm;
    assert!((0.008..=0.024).contains(&rel), "relative error {rel}");
}

#[test]
fn direct_solve_matches_dense_lu() {
    let r = run("tp2", Method::New, 4);
    let a = r.system.matrix.to_dense();
    let b = DVector::from_column_slice(&r.system.rhs);
    let x = a.clone().lu().solve(&b).unwrap();
    let ours = DVector::from_column_slice(&r.solve.solution);
    assert!(r.solve.relative_residual <= 1e-12);
    assert!((&ours - &x).norm() / x.norm() < 1e-9);
    // and from a fresh solve of the stored system
    let again = solve(&r.system, 1e-12).unwrap();
    assert_eq!(again.solution, r.solve.solution);
}

#[test]
fn cube_new_method_equals_polyhedral() {
    let mesh = generate_box_tet_mesh([3, 3, 3], Vec3::zeros(), Vec3::repeat(1.0)).unwrap();
    let c = classify_mesh(&mesh).unwrap();
    let quad = QuadratureRule::fifteen_point();
    let f = |p: &Vec3| p.x * p.y + 1.0;
    let g = |p: &Vec3| p.x + p.z * p.z;
    for k in [2, 3] {
        let trial = TrialSpace::build(&mesh, &c, k).unwrap();
        let new = assemble_new_method(&mesh, &c, &trial, &f, DirichletData::Function(&g), &quad, AssemblyMode::Sequential)
            .unwrap();
        let r = ReferenceElement::new(k).unwrap();
        let numbering = LagrangeNumbering::new(&mesh, &r);
        let poly = assemble_polyhedral(
            &mesh,
            &c,
            &r,
            &numbering,
            &f,
            DirichletData::Function(&g),
            &quad,
            AssemblyMode::Sequential,
        )
        .unwrap();
        assert_eq!(new.dimension(), poly.dimension());
        assert!((new.matrix.to_dense() - poly.matrix.to_dense()).amax() < 1e-13);
        let drhs = new.rhs.iter().zip(&poly.rhs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(drhs < 1e-13);
        assert!(new.matrix.asymmetry() < 1e-13);
    }
}

#[test]
fn nc_reference_basis() {
    let nc = nc_build_reference_basis().unwrap();
    let eye = DMatrix::<f64>::identity(NC_DOFS, NC_DOFS);
    assert!((&nc.dof_matrix * &nc.coefficients - eye).amax() < 1e-12);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let x = loop {
            let p = Vec3::new(rng.random(), rng.random(), rng.random());
            if p.sum() <= 1.0 {
                break p;
            }
        };
        assert!((nc.eval_all(&x).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let coef: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
        let e = exponents();
        let p = |y: &Vec3| e.iter().zip(&coef).map(|(e, c)| c * monomial(e, y)).sum::<f64>();
        let d = nc.dofs_of(&p);
        let got: f64 = nc.eval_all(&x).iter().zip(&d).map(|(b, d)| b * d).sum();
        assert!((got - p(&x)).abs() < 1e-10);
    }
}

#[test]
fn nc_dof_count_matches_census() {
    for j in [2, 4] {
        let mesh = generate_octant_mesh(&Surface::unit_sphere(), j).unwrap();
        let c = classify_mesh(&mesh).unwrap();
        let space = NcSpace::build(&mesh, &c).unwrap();
        assert_eq!(space.n_dofs(), mesh.faces.len() + mesh.edges.len());
        // P2 census minus the vertices is exactly edges; faces add one each
        let free_lagrange = census(&mesh, 2);
        let gamma_vertices = c.gamma_vertices.len();
        let interior_vertices = mesh.vertices.len() - gamma_vertices;
        let free_edges = free_lagrange - interior_vertices;
        assert_eq!(space.n_free(), free_edges + mesh.faces.len() - c.gamma_faces.len());
    }
}

#[test]
fn nc_cube_system_is_symmetric() {
    let mesh = generate_box_tet_mesh([3, 3, 3], Vec3::zeros(), Vec3::repeat(1.0)).unwrap();
    let c = classify_mesh(&mesh).unwrap();
    let space = NcSpace::build(&mesh, &c).unwrap();
    let f = |_: &Vec3| 1.0;
    let sys = nc_assemble(&mesh, &space, &f, &QuadratureRule::fifteen_point(), AssemblyMode::Sequential).unwrap();
    assert!(sys.matrix.asymmetry() < 1e-13);
}

#[test]
fn nc_quadratic_consistency() {
    let r = run("quadratic", Method::Nonconforming, 4).report;
    assert!(r.err_h1_broken <= 1e-9 && r.err_nodal_max <= 1e-9);
}

#[test]
fn norms_match_refined_quadrature() {
    let case = ExactCase::by_name("tp1").unwrap();
    let r = run("tp1", Method::New, 4);
    let oracle = QuadratureRule::collapsed_gauss(6).composite(3);
    let (h1, l2, _) = error_norms_with(&r.mesh, &r.solution, &|p| case.u(p), &|p| case.grad_u(p), &oracle).unwrap();
    assert!((l2 - r.report.err_l2).abs() / l2 < 1e-6);
    assert!((h1 - r.report.err_h1_broken).abs() / h1 < 1e-6);
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b
}

/// Known error magnitudes on the torus sector family. The L2 figures were
/// computed with the 15-point rule.
#[test]
fn torus_matches_reference_values() {
    let case = ExactCase::by_name("tp3").unwrap();
    let fifteen = QuadratureRule::fifteen_point();
    for (i, h1, l2) in [(2, 0.786085e-3, 0.133794e-4), (4, 0.205622e-3, 0.171222e-5)] {
        let r = run("tp3", Method::New, i);
        assert!(rel(r.report.err_h1_broken, h1) < 1e-3, "I={i}: {}", r.report.err_h1_broken);
        let (_, l2_15, _) = error_norms_with(&r.mesh, &r.solution, &|p| case.u(p), &|p| case.grad_u(p), &fifteen).unwrap();
        assert!(rel(l2_15, l2) < 1e-2, "I={i}: {l2_15}");
    }
    let poly = run("tp3", Method::Polyhedral, 2);
    assert!(rel(poly.report.err_h1_broken, 0.829181e-2) < 1e-3, "{}", poly.report.err_h1_broken);
}
