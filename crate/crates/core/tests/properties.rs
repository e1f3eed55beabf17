use curvedfem::analysis::eoc;
use curvedfem::assembly::{element_load, element_stiffness};
use curvedfem::fem::{AffineMap, QuadratureRule, ReferenceElement};
use curvedfem::sparse::CsrMatrix;
use curvedfem::{Surface, Vec3};
use proptest::prelude::*;

fn point(r: f64) -> impl Strategy<Value = Vec3> {
    (-r..r, -r..r, -r..r).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

/// Tets with volume bounded away from zero, positively oriented.
fn tet() -> impl Strategy<Value = [Vec3; 4]> {
    (point(1.0), point(1.0), point(1.0), point(1.0))
        .prop_map(|(a, b, c, d)| [a, b, c, d])
        .prop_filter("flat tet", |v| {
            let vol = (v[1] - v[0]).cross(&(v[2] - v[0])).dot(&(v[3] - v[0]));
            vol > 0.05
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn stiffness_is_symmetric_with_constant_kernel(v in tet(), k in 2usize..=3) {
        let r = ReferenceElement::new(k).unwrap();
        let s = element_stiffness(&AffineMap::from_vertices(&v), &r, &QuadratureRule::fifteen_point()).unwrap();
        let scale = s.amax();
        prop_assert!((&s - s.transpose()).amax() <= 1e-12 * scale);
        for row in s.row_iter() {
            prop_assert!(row.sum().abs() <= 1e-12 * scale);
        }
        let eig = s.symmetric_eigenvalues();
        prop_assert!(eig.min() >= -1e-10 * scale);
    }

    #[test]
    fn unit_load_sums_to_volume(v in tet()) {
        let map = AffineMap::from_vertices(&v);
        let r = ReferenceElement::new(2).unwrap();
        let one = |_: &Vec3| 1.0;
        let l = element_load(&map, &one, &r, &QuadratureRule::fifteen_point()).unwrap();
        prop_assert!((l.sum() - map.volume()).abs() <= 1e-13 * map.volume().max(1.0));
    }

    #[test]
    fn affine_map_round_trips(v in tet(), xi in (0.0..0.3, 0.0..0.3, 0.0..0.3)) {
        let map = AffineMap::from_vertices(&v);
        let xi = Vec3::new(xi.0, xi.1, xi.2);
        prop_assert!((map.pullback(&map.map(&xi)) - xi).norm() < 1e-10);
    }

    #[test]
    fn projection_is_normal_to_surface(p in point(1.3), which in 0usize..3) {
        let s = [
            Surface::unit_sphere(),
            Surface::ellipsoid(0.6, 0.8, 1.0).unwrap(),
            Surface::torus(5.0 / 6.0, 1.0 / 6.0).unwrap(),
        ][which];
        // stay away from the medial axis where the projection is not unique
        let far_from_axis = match s {
            Surface::Torus { major, .. } => ((p.x.hypot(p.y)) - major).hypot(p.z) > 0.05,
            _ => p.norm() > 0.5,
        };
        prop_assume!(far_from_axis);
        let q = s.closest_point_projection(&p).unwrap();
        prop_assert!(s.implicit_value(&q).abs() < 1e-10);
        let d = p - q;
        if d.norm() > 1e-8 {
            let n = s.outward_normal(&q).unwrap();
            prop_assert!(d.normalize().cross(&n).norm() < 1e-6);
        }
    }

    #[test]
    fn eoc_ignores_h_scale(e1 in 1e-8..1.0f64, r in 1.1..10.0f64, h in 1e-3..1.0f64, s in 0.1..10.0f64) {
        let e2 = e1 / r;
        let a = eoc(e1, e2, h, h / 2.0).unwrap();
        let b = eoc(e1, e2, s * h, s * h / 2.0).unwrap();
        prop_assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn csr_product_matches_dense(entries in prop::collection::vec((0usize..8, 0usize..6, -1.0..1.0f64), 0..40),
                                 x in prop::collection::vec(-1.0..1.0f64, 6)) {
        let a = CsrMatrix::from_triplets(8, 6, &entries);
        let dense = a.to_dense();
        let y = a.mul_vec(&x);
        let yd = &dense * nalgebra::DVector::from_column_slice(&x);
        for i in 0..8 {
            prop_assert!((y[i] - yd[i]).abs() < 1e-12);
        }
        let total: f64 = entries.iter().map(|e| e.2).sum();
        prop_assert!((dense.sum() - total).abs() < 1e-12);
    }
}
