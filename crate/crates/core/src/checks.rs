//! Built-in property suite, run by `curvedfem check`.

use std::time::Instant;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analysis::{run_case, CaseId, ExactCase, Method, RunOptions};
use crate::assembly::AssemblyMode;
use crate::error::Result;
use crate::fem::{gauss_legendre, QuadratureRule, ReferenceElement, FACES};
use crate::geometry::{Surface, Vec3};
use crate::mesh::{classify_mesh, generate_octant_mesh, generate_torus_sector_mesh, Mesh};
use crate::nonconforming::{nc_build_reference_basis, nc_dof_values, NcSpace, NC_DOFS};
use crate::trial::TrialSpace;

const SEED: u64 = 0x5eed_c0de;

#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    /// Largest observed deviation and the tolerance it was held to.
    pub value: f64,
    pub tolerance: f64,
    pub seconds: f64,
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

fn random_ref_point(rng: &mut impl Rng) -> Vec3 {
    loop {
        let p = Vec3::new(rng.random(), rng.random(), rng.random());
        if p.sum() <= 1.0 {
            return p;
        }
    }
}

/// Random polynomial of total degree `k` in three variables.
struct RandomPoly {
    terms: Vec<([i32; 3], f64)>,
    center: Vec3,
}

impl RandomPoly {
    fn new(k: usize, center: Vec3, rng: &mut impl Rng) -> Self {
        let mut terms = Vec::new();
        for a in 0..=k as i32 {
            for b in 0..=k as i32 - a {
                for c in 0..=k as i32 - a - b {
                    terms.push(([a, b, c], rng.random_range(-1.0..1.0)));
                }
            }
        }
        RandomPoly { terms, center }
    }

    fn eval(&self, p: &Vec3) -> f64 {
        let d = p - self.center;
        self.terms.iter().map(|(e, c)| c * d.x.powi(e[0]) * d.y.powi(e[1]) * d.z.powi(e[2])).sum()
    }
}

/// Relative error of the rule on all monomials up to its degree.
pub fn quadrature_exactness(rule: &QuadratureRule) -> f64 {
    let mut worst = 0.0f64;
    for a in 0..=rule.degree {
        for b in 0..=rule.degree - a {
            for c in 0..=rule.degree - a - b {
                let exact = factorial(a) * factorial(b) * factorial(c) / factorial(a + b + c + 3);
                let got: f64 = rule
                    .points
                    .iter()
                    .zip(&rule.weights)
                    .map(|(p, w)| w * p.x.powi(a as i32) * p.y.powi(b as i32) * p.z.powi(c as i32))
                    .sum();
                worst = worst.max(((got - exact) / exact).abs());
            }
        }
    }
    worst
}

/// Largest violation of `phi_i(x_j) = delta_ij` and of the partition of unity.
pub fn shape_delta_and_unity(k: usize, samples: usize) -> Result<f64> {
    let r = ReferenceElement::new(k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst = 0.0f64;
    for (j, x) in r.node_coords().iter().enumerate() {
        for (i, v) in r.eval_all(x).iter().enumerate() {
            worst = worst.max((v - if i == j { 1.0 } else { 0.0 }).abs());
        }
    }
    for _ in 0..samples {
        let x = random_ref_point(&mut rng);
        worst = worst.max((r.eval_all(&x).iter().sum::<f64>() - 1.0).abs());
        let g: Vec3 = r.grad_all(&x).iter().sum();
        worst = worst.max(g.amax());
    }
    Ok(worst)
}

/// Largest gap between analytic gradients and central differences, for the
/// Lagrange elements and the nonconforming basis.
pub fn gradient_vs_differences(samples: usize) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 1);
    let h = 1e-5;
    let mut worst = 0.0f64;
    let nc = nc_build_reference_basis()?;
    let lagrange = [ReferenceElement::new(2)?, ReferenceElement::new(3)?];
    let evals: Vec<(Box<dyn Fn(&Vec3) -> Vec<f64>>, Box<dyn Fn(&Vec3) -> Vec<Vec3>>)> = vec![
        (Box::new(|x| lagrange[0].eval_all(x)), Box::new(|x| lagrange[0].grad_all(x))),
        (Box::new(|x| lagrange[1].eval_all(x)), Box::new(|x| lagrange[1].grad_all(x))),
        (Box::new(|x| nc.eval_all(x)), Box::new(|x| nc.grad_all(x))),
    ];
    for _ in 0..samples {
        let x = random_ref_point(&mut rng);
        for (eval, grad) in &evals {
            let g = grad(&x);
            for d in 0..3 {
                let mut e = Vec3::zeros();
                e[d] = h;
                let (p, m) = (eval(&(x + e)), eval(&(x - e)));
                for i in 0..g.len() {
                    worst = worst.max((g[i][d] - (p[i] - m[i]) / (2.0 * h)).abs());
                }
            }
        }
    }
    Ok(worst)
}

/// Largest relative error when a random `P_k` polynomial is rebuilt from its
/// values at the interpolation points of every boundary element.
pub fn modified_basis_reproduction(mesh: &Mesh, k: usize, samples: usize) -> Result<f64> {
    let classification = classify_mesh(mesh)?;
    let trial = TrialSpace::build(mesh, &classification, k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 2);
    let mut worst = 0.0f64;
    for basis in trial.bases.iter().flatten() {
        let t = basis.element;
        let map = mesh.affine_map(t);
        let p = RandomPoly::new(k, mesh.tet_vertices(t)[0], &mut rng);
        let values = DVector::from_iterator(basis.points.len(), basis.points.iter().map(|x| p.eval(x)));
        let c = basis.lagrange_coefficients(&values);
        let scale = values.amax().max(1e-300);
        for _ in 0..samples {
            let xi = random_ref_point(&mut rng);
            let got: f64 = trial.reference.eval_all(&xi).iter().zip(c.iter()).map(|(a, b)| a * b).sum();
            worst = worst.max((got - p.eval(&map.map(&xi))).abs() / scale);
        }
    }
    Ok(worst)
}

/// Same as [`modified_basis_reproduction`] for the shifted nonconforming
/// functionals and random quadratics.
pub fn nc_shifted_reproduction(mesh: &Mesh, samples: usize) -> Result<f64> {
    let classification = classify_mesh(mesh)?;
    let space = NcSpace::build(mesh, &classification)?;
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 3);
    let mut worst = 0.0f64;
    for basis in space.bases.iter().flatten() {
        let t = basis.element;
        let map = mesh.affine_map(t);
        let p = RandomPoly::new(2, mesh.tet_vertices(t)[0], &mut rng);
        let d = DVector::from_row_slice(&nc_dof_values(mesh, t, Some(basis), &|x| p.eval(x)));
        let c = &space.reference.coefficients * (&basis.coefficients * &d);
        let scale = d.amax().max(1e-300);
        for _ in 0..samples {
            let xi = random_ref_point(&mut rng);
            let got: f64 = space.reference.p2.eval_all(&xi).iter().zip(c.iter()).map(|(a, b)| a * b).sum();
            worst = worst.max((got - p.eval(&map.map(&xi))).abs() / scale);
        }
    }
    Ok(worst)
}

/// Smallest signed volume relative to `h^3` and the largest `|F|` over
/// curved-boundary vertices.
pub fn mesh_validity(mesh: &Mesh) -> Result<(f64, f64)> {
    let classification = classify_mesh(mesh)?;
    let min_vol = (0..mesh.n_tets())
        .map(|t| mesh.affine_map(t).det / 6.0)
        .fold(f64::INFINITY, f64::min)
        / mesh.h.powi(3);
    let off = match &mesh.domain.surface {
        Some(s) => classification
            .gamma_vertices
            .iter()
            .map(|&v| s.implicit_value(&mesh.vertices[v]).abs())
            .fold(0.0, f64::max),
        None => 0.0,
    };
    Ok((min_vol, off))
}

/// Patch test for the nonconforming element.
///
/// Returns the largest jump of the P1 face moments of a random
/// nonconforming function across interior faces, relative to its size, and
/// the largest error of the element-wise interpolant of a global quadratic.
pub fn nc_patch_test(mesh: &Mesh) -> Result<(f64, f64)> {
    let classification = classify_mesh(mesh)?;
    let space = NcSpace::build(mesh, &classification)?;
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 4);
    let dofs: Vec<f64> = (0..space.n_dofs()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let b = &space.reference.coefficients;
    // element polynomials of the canonical (unshifted) function
    let coeff: Vec<DVector<f64>> = space
        .element_dofs
        .iter()
        .map(|d| b * DVector::from_iterator(NC_DOFS, d.iter().map(|&i| dofs[i])))
        .collect();
    let eval = |t: usize, x: &Vec3| -> f64 {
        let xi = mesh.affine_map(t).pullback(x);
        space.reference.p2.eval_all(&xi).iter().zip(coeff[t].iter()).map(|(a, c)| a * c).sum()
    };
    // triangle rule: collapsed 4-point Gauss, exact to degree 6
    let (gx, gw) = gauss_legendre(4);
    let mut tri = Vec::new();
    for i in 0..4 {
        for j in 0..4 {
            tri.push((gx[i], gx[j] * (1.0 - gx[i]), gw[i] * gw[j] * (1.0 - gx[i])));
        }
    }
    let mut jump = 0.0f64;
    for face in &mesh.faces {
        let Some(nb) = face.neighbor else { continue };
        let [a, b2, c] = face.vertices.map(|v| mesh.vertices[v]);
        let area2 = (b2 - a).cross(&(c - a)).norm();
        for q in 0..4 {
            let mut moment = [0.0; 2];
            let mut size = 0.0f64;
            for &(s, t, w) in &tri {
                let x = a + (b2 - a) * s + (c - a) * t;
                let weight = match q {
                    0 => 1.0,
                    1 => s,
                    2 => t,
                    _ => 1.0 - s - t,
                };
                let (u0, u1) = (eval(face.owner, &x), eval(nb, &x));
                moment[0] += w * area2 * weight * u0;
                moment[1] += w * area2 * weight * u1;
                size = size.max(u0.abs());
            }
            jump = jump.max((moment[0] - moment[1]).abs() / (area2 * size.max(1.0)));
        }
    }
    let mut interp = 0.0f64;
    let p = RandomPoly::new(2, Vec3::zeros(), &mut rng);
    for t in 0..mesh.n_tets() {
        let d = DVector::from_row_slice(&nc_dof_values(mesh, t, None, &|x| p.eval(x)));
        let c = b * d;
        let map = mesh.affine_map(t);
        let xi = random_ref_point(&mut rng);
        let got: f64 = space.reference.p2.eval_all(&xi).iter().zip(c.iter()).map(|(a, c)| a * c).sum();
        interp = interp.max((got - p.eval(&map.map(&xi))).abs());
    }
    debug_assert_eq!(FACES.len(), 4);
    Ok((jump, interp))
}

fn timed(name: &'static str, tolerance: f64, f: impl FnOnce() -> Result<f64>) -> CheckOutcome {
    let start = Instant::now();
    let value = f().unwrap_or(f64::INFINITY);
    CheckOutcome {
        name,
        passed: value <= tolerance,
        value,
        tolerance,
        seconds: start.elapsed().as_secs_f64(),
    }
}

/// Runs the whole suite.
pub fn run_checks() -> Vec<CheckOutcome> {
    let sphere = Surface::unit_sphere();
    let ellipsoid = Surface::Ellipsoid { a: 0.6, b: 0.8, c: 1.0 };
    let meshes = || -> Result<Vec<Mesh>> {
        Ok(vec![
            generate_octant_mesh(&sphere, 4)?,
            generate_octant_mesh(&ellipsoid, 4)?,
            generate_torus_sector_mesh(4, 5.0 / 6.0, 1.0 / 6.0)?,
        ])
    };
    vec![
        timed("quadrature exact to degree 5", 1e-13, || {
            Ok(quadrature_exactness(&QuadratureRule::fifteen_point())
                .max(quadrature_exactness(&QuadratureRule::four_point())))
        }),
        timed("norm quadrature exact to degree 9", 1e-12, || {
            Ok(quadrature_exactness(&QuadratureRule::collapsed_gauss(6)))
        }),
        timed("shape delta and partition of unity", 1e-12, || {
            Ok(shape_delta_and_unity(2, 200)?.max(shape_delta_and_unity(3, 200)?))
        }),
        timed("gradients vs finite differences", 1e-6, || gradient_vs_differences(50)),
        timed("modified basis reproduces P_k", 1e-9, || {
            let mut worst = 0.0f64;
            for m in meshes()? {
                worst = worst.max(modified_basis_reproduction(&m, 2, 5)?);
                worst = worst.max(modified_basis_reproduction(&m, 3, 5)?);
            }
            Ok(worst)
        }),
        timed("shifted nonconforming dofs reproduce P_2", 1e-9, || {
            let mut worst = 0.0f64;
            for m in meshes()? {
                worst = worst.max(nc_shifted_reproduction(&m, 5)?);
            }
            Ok(worst)
        }),
        timed("elements with non-positive volume", 0.0, || {
            let mut bad = 0;
            for m in meshes()? {
                bad += (0..m.n_tets()).filter(|&t| !(m.affine_map(t).det > 0.0)).count();
            }
            Ok(bad as f64)
        }),
        timed("boundary vertices on surface", 1e-12, || {
            let mut worst = 0.0f64;
            for m in meshes()? {
                worst = worst.max(mesh_validity(&m)?.1);
            }
            Ok(worst)
        }),
        timed("nonconforming face-moment jumps vanish", 1e-12, || {
            let (j, _) = nc_patch_test(&generate_octant_mesh(&sphere, 3)?)?;
            Ok(j)
        }),
        timed("nonconforming interpolant reproduces P_2", 1e-10, || {
            let (_, i) = nc_patch_test(&generate_octant_mesh(&sphere, 3)?)?;
            Ok(i)
        }),
        timed("quadratic case reproduced exactly", 1e-10, || {
            let case = ExactCase::new(CaseId::QuadraticEllipsoid);
            let opts = RunOptions {
                mode: AssemblyMode::Sequential,
                ..RunOptions::default()
            };
            let mut worst = 0.0f64;
            for method in [Method::New, Method::Nonconforming] {
                let r = run_case(&case, method, 2, 2, &opts)?.report;
                worst = worst.max(r.err_h1_broken).max(r.err_nodal_max);
            }
            Ok(worst)
        }),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes() {
        for c in run_checks() {
            assert!(c.passed, "{} : {:e} > {:e}", c.name, c.value, c.tolerance);
        }
    }
}
