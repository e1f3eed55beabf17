//! Analytic curved boundaries and the line constructions that place
//! shifted boundary nodes on them.
//!
//! Every surface is described by an implicit function `F` that is negative
//! inside the domain, zero on the boundary and positive outside.

use nalgebra::Vector3;

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Number of scan cells per `h_ref` used by the sign-change search.
const SCAN_CELLS_PER_H: f64 = 64.0;
/// Search bracket for line intersections, in units of `h_ref`.
const BRACKET_FACTOR: f64 = 4.0;
const MAX_PROJECTION_ITERS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Surface {
    Sphere { center: Vec3, radius: f64 },
    /// Axis-aligned ellipsoid centred at the origin.
    Ellipsoid { a: f64, b: f64, c: f64 },
    /// Torus around the z axis.
    Torus { major: f64, minor: f64 },
}

impl Surface {
    pub fn sphere(center: Vec3, radius: f64) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::InvalidSurface(format!("sphere radius {radius}")));
        }
        Ok(Surface::Sphere { center, radius })
    }

    pub fn unit_sphere() -> Self {
        Surface::Sphere {
            center: Vec3::zeros(),
            radius: 1.0,
        }
    }

    pub fn ellipsoid(a: f64, b: f64, c: f64) -> Result<Self> {
        if [a, b, c].iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidSurface(format!(
                "ellipsoid semiaxes ({a}, {b}, {c})"
            )));
        }
        Ok(Surface::Ellipsoid { a, b, c })
    }

    pub fn torus(major: f64, minor: f64) -> Result<Self> {
        if !(minor > 0.0 && minor < major) || !major.is_finite() {
            return Err(Error::InvalidSurface(format!(
                "torus radii major={major} minor={minor}"
            )));
        }
        Ok(Surface::Torus { major, minor })
    }

    /// Length scale used to make tolerances dimensionless.
    pub fn characteristic_length(&self) -> f64 {
        match *self {
            Surface::Sphere { radius, .. } => radius,
            Surface::Ellipsoid { a, b, c } => a.max(b).max(c),
            Surface::Torus { major, minor } => major + minor,
        }
    }

    /// Tolerance on `|F|` for a point to count as lying on the surface.
    pub fn tol_surface(&self) -> f64 {
        1e-9 * self.characteristic_length()
    }

    pub fn implicit_value(&self, p: &Vec3) -> f64 {
        match *self {
            Surface::Sphere { center, radius } => (p - center).norm_squared() - radius * radius,
            Surface::Ellipsoid { a, b, c } => {
                (p.x / a).powi(2) + (p.y / b).powi(2) + (p.z / c).powi(2) - 1.0
            }
            Surface::Torus { major, minor } => {
                let rho = p.x.hypot(p.y);
                (major - rho).powi(2) + p.z * p.z - minor * minor
            }
        }
    }

    pub fn gradient(&self, p: &Vec3) -> Vec3 {
        match *self {
            Surface::Sphere { center, .. } => 2.0 * (p - center),
            Surface::Ellipsoid { a, b, c } => Vec3::new(
                2.0 * p.x / (a * a),
                2.0 * p.y / (b * b),
                2.0 * p.z / (c * c),
            ),
            Surface::Torus { major, .. } => {
                let rho = p.x.hypot(p.y);
                if rho == 0.0 {
                    // The radial part is not differentiable on the axis; its
                    // one-sided slope is -2 * major in every radial direction.
                    return Vec3::new(0.0, 0.0, 2.0 * p.z);
                }
                let f = -2.0 * (major - rho) / rho;
                Vec3::new(f * p.x, f * p.y, 2.0 * p.z)
            }
        }
    }

    pub fn outward_normal(&self, p: &Vec3) -> Result<Vec3> {
        let g = self.gradient(p);
        let n = g.norm();
        if !(n > 1e-14 * self.characteristic_length()) {
            return Err(Error::DegenerateNormal(p.x, p.y, p.z));
        }
        Ok(g / n)
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        self.implicit_value(p) < 0.0
    }

    /// Intersection of the full line with the surface that is closest to the
    /// line origin, searched within `|t| <= 4 h_ref`.
    ///
    /// Ties between roots at equal distance go to the one along `+direction`.
    pub fn nearest_line_intersection(&self, line: &Line3, h_ref: f64) -> Result<Vec3> {
        let bracket = BRACKET_FACTOR * h_ref;
        let t = match *self {
            Surface::Sphere { .. } | Surface::Ellipsoid { .. } => {
                self.quadric_root(line, bracket)
            }
            Surface::Torus { .. } => self.scanned_root(line, h_ref, bracket),
        }
        .ok_or(Error::NoBoundaryIntersection { bracket })?;
        Ok(line.at(t))
    }

    fn quadric_root(&self, line: &Line3, bracket: f64) -> Option<f64> {
        let (o, d) = (line.origin, line.direction);
        let (qa, qb, qc) = match *self {
            Surface::Sphere { center, radius } => {
                let r = o - center;
                (d.norm_squared(), 2.0 * r.dot(&d), r.norm_squared() - radius * radius)
            }
            Surface::Ellipsoid { a, b, c } => {
                let s = Vec3::new(1.0 / (a * a), 1.0 / (b * b), 1.0 / (c * c));
                let sd = d.component_mul(&s);
                (
                    sd.dot(&d),
                    2.0 * sd.dot(&o),
                    o.component_mul(&s).dot(&o) - 1.0,
                )
            }
            Surface::Torus { .. } => unreachable!("torus has no quadratic restriction"),
        };
        let disc = qb * qb - 4.0 * qa * qc;
        if disc < 0.0 {
            return None;
        }
        let roots = if qc == 0.0 {
            [0.0, -qb / qa]
        } else {
            let q = -0.5 * (qb + qb.signum() * disc.sqrt());
            let q = if q == 0.0 { -0.5 * disc.sqrt() } else { q };
            [q / qa, qc / q]
        };
        let polish = |t: f64| {
            let dq = 2.0 * qa * t + qb;
            if dq != 0.0 {
                t - (qa * t * t + qb * t + qc) / dq
            } else {
                t
            }
        };
        pick_nearest(roots.iter().map(|&t| polish(t)), bracket)
    }

    fn scanned_root(&self, line: &Line3, h_ref: f64, bracket: f64) -> Option<f64> {
        let f = |t: f64| self.implicit_value(&line.at(t));
        let f0 = f(0.0);
        if f0 == 0.0 {
            return Some(0.0);
        }
        let step = h_ref / SCAN_CELLS_PER_H;
        let cells = (bracket / step).ceil() as usize;
        let (mut fp_prev, mut fm_prev) = (f0, f0);
        for i in 1..=cells {
            let t_hi = (i as f64 * step).min(bracket);
            let t_lo = (i - 1) as f64 * step;
            let (fp, fm) = (f(t_hi), f(-t_hi));
            let plus = (fp_prev * fp <= 0.0).then(|| bisect(&f, t_lo, t_hi, fp_prev));
            let minus = (fm_prev * fm <= 0.0).then(|| bisect(&f, -t_lo, -t_hi, fm_prev));
            if plus.is_some() || minus.is_some() {
                return pick_nearest(plus.into_iter().chain(minus), bracket);
            }
            fp_prev = fp;
            fm_prev = fm;
        }
        None
    }

    /// Closest point on the surface to `p`.
    pub fn closest_point_projection(&self, p: &Vec3) -> Result<Vec3> {
        match *self {
            Surface::Sphere { center, radius } => {
                let r = p - center;
                let n = r.norm();
                if n == 0.0 {
                    return Err(Error::DegenerateNormal(p.x, p.y, p.z));
                }
                Ok(center + r * (radius / n))
            }
            Surface::Torus { major, minor } => {
                let rho = p.x.hypot(p.y);
                if rho == 0.0 {
                    return Err(Error::DegenerateNormal(p.x, p.y, p.z));
                }
                let core = Vec3::new(p.x * major / rho, p.y * major / rho, 0.0);
                let r = p - core;
                let n = r.norm();
                if n == 0.0 {
                    return Err(Error::DegenerateNormal(p.x, p.y, p.z));
                }
                Ok(core + r * (minor / n))
            }
            Surface::Ellipsoid { a, b, c } => project_to_ellipsoid(p, [a, b, c]),
        }
    }
}

fn pick_nearest(roots: impl Iterator<Item = f64>, bracket: f64) -> Option<f64> {
    roots
        .filter(|t| t.is_finite() && t.abs() <= bracket)
        .fold(None, |best: Option<f64>, t| match best {
            Some(b) if b.abs() < t.abs() || (b.abs() == t.abs() && b >= t) => Some(b),
            _ => Some(t),
        })
}

fn bisect(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, mut fa: f64) -> f64 {
    if fa == 0.0 {
        return a;
    }
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m == a || m == b {
            break;
        }
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if fa * fm < 0.0 {
            b = m;
        } else {
            a = m;
            fa = fm;
        }
    }
    let fb = f(b);
    if fb.abs() < fa.abs() {
        b
    } else {
        a
    }
}

/// Closest point on an axis-aligned ellipsoid: Newton on the Lagrange
/// multiplier equation, safeguarded by bisection.
fn project_to_ellipsoid(p: &Vec3, s: [f64; 3]) -> Result<Vec3> {
    let s2 = [s[0] * s[0], s[1] * s[1], s[2] * s[2]];
    // q_i = s_i^2 p_i / (s_i^2 + t); g(t) = sum (s_i p_i / (s_i^2 + t))^2 - 1
    let g = |t: f64| -> (f64, f64) {
        let mut val = -1.0;
        let mut der = 0.0;
        for i in 0..3 {
            let den = s2[i] + t;
            let r = s[i] * p[i] / den;
            val += r * r;
            der += -2.0 * r * r / den;
        }
        (val, der)
    };
    let smin2 = s2.iter().cloned().fold(f64::INFINITY, f64::min);
    let pmax = p.abs().max();
    if pmax == 0.0 {
        let i = (0..3).min_by(|&i, &j| s[i].total_cmp(&s[j])).unwrap();
        let mut q = Vec3::zeros();
        q[i] = s[i];
        return Ok(q);
    }
    // g is decreasing on (-smin2, inf); bracket the root.
    let mut lo = -smin2;
    let mut hi = s.iter().cloned().fold(0.0, f64::max) * pmax;
    while g(hi).0 > 0.0 {
        hi *= 2.0;
    }
    let mut t = 0.0_f64.clamp(lo, hi);
    if t <= lo {
        t = 0.5 * (lo + hi);
    }
    for _ in 0..MAX_PROJECTION_ITERS {
        let (val, der) = g(t);
        if val > 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        let mut next = if der != 0.0 { t - val / der } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - t).abs() <= 1e-15 * (1.0 + t.abs()) {
            let q = Vec3::new(
                s2[0] * p.x / (s2[0] + next),
                s2[1] * p.y / (s2[1] + next),
                s2[2] * p.z / (s2[2] + next),
            );
            return Ok(q);
        }
        t = next;
    }
    Err(Error::ProjectionNotConverged(MAX_PROJECTION_ITERS))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Line3 {
    pub origin: Vec3,
    pub direction: Vec3,
}

impl Line3 {
    /// Builds a line, normalizing `direction`.
    pub fn new(origin: Vec3, direction: Vec3) -> Result<Self> {
        let n = direction.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::InvalidArgument("zero line direction".into()));
        }
        Ok(Line3 {
            origin,
            direction: direction / n,
        })
    }

    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + t * self.direction
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn torus() -> Surface {
        Surface::torus(5.0 / 6.0, 1.0 / 6.0).unwrap()
    }

    #[test]
    fn implicit_values() {
        assert_eq!(Surface::unit_sphere().implicit_value(&Vec3::new(1.0, 0.0, 0.0)), 0.0);
        let e = Surface::ellipsoid(0.6, 0.8, 1.0).unwrap();
        assert_eq!(e.implicit_value(&Vec3::zeros()), -1.0);
        assert_abs_diff_eq!(torus().implicit_value(&Vec3::new(1.0, 0.0, 0.0)), 0.0, epsilon = 1e-15);
        // On the axis the torus function is still defined.
        assert_abs_diff_eq!(
            torus().implicit_value(&Vec3::new(0.0, 0.0, 0.0)),
            25.0 / 36.0 - 1.0 / 36.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn normals() {
        let n = Surface::unit_sphere().outward_normal(&Vec3::new(0.0, 0.0, 1.0)).unwrap();
        assert_abs_diff_eq!(n, Vec3::new(0.0, 0.0, 1.0), epsilon = 1e-15);
        let n = torus().outward_normal(&Vec3::new(1.0, 0.0, 0.0)).unwrap();
        assert_abs_diff_eq!(n, Vec3::new(1.0, 0.0, 0.0), epsilon = 1e-15);
        let e = Surface::ellipsoid(0.6, 0.8, 1.0).unwrap();
        let n = e.outward_normal(&Vec3::new(0.6, 0.0, 0.0)).unwrap();
        assert_abs_diff_eq!(n, Vec3::new(1.0, 0.0, 0.0), epsilon = 1e-15);
        assert!(matches!(
            Surface::unit_sphere().outward_normal(&Vec3::zeros()),
            Err(Error::DegenerateNormal(..))
        ));
    }

    #[test]
    fn invalid_parameters() {
        assert!(Surface::sphere(Vec3::zeros(), 0.0).is_err());
        assert!(Surface::ellipsoid(0.6, -1.0, 1.0).is_err());
        assert!(Surface::torus(1.0, 1.0).is_err());
        assert!(Surface::torus(1.0, 0.0).is_err());
    }

    #[test]
    fn axis_line_intersections() {
        let l = Line3::new(Vec3::new(0.9, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0)).unwrap();
        let p = Surface::unit_sphere().nearest_line_intersection(&l, 0.1).unwrap();
        assert_abs_diff_eq!(p, Vec3::new(1.0, 0.0, 0.0), epsilon = 1e-15);

        let e = Surface::ellipsoid(0.6, 0.8, 1.0).unwrap();
        let l = Line3::new(Vec3::new(0.0, 0.0, 0.95), Vec3::new(0.0, 0.0, 1.0)).unwrap();
        let p = e.nearest_line_intersection(&l, 0.1).unwrap();
        assert_abs_diff_eq!(p, Vec3::new(0.0, 0.0, 1.0), epsilon = 1e-15);

        // Backwards direction still finds the nearest root.
        let l = Line3::new(Vec3::new(0.9, 0.0, 0.0), Vec3::new(-1.0, 0.0, 0.0)).unwrap();
        let p = Surface::unit_sphere().nearest_line_intersection(&l, 0.1).unwrap();
        assert_abs_diff_eq!(p, Vec3::new(1.0, 0.0, 0.0), epsilon = 1e-15);
    }

    #[test]
    fn no_intersection_in_bracket() {
        let l = Line3::new(Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0)).unwrap();
        let err = Surface::unit_sphere().nearest_line_intersection(&l, 0.1).unwrap_err();
        assert!(matches!(err, Error::NoBoundaryIntersection { .. }));
        let err = torus().nearest_line_intersection(&l, 0.01).unwrap_err();
        assert!(matches!(err, Error::NoBoundaryIntersection { .. }));
    }

    #[test]
    fn torus_line_on_equator() {
        let l = Line3::new(Vec3::new(0.98, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0)).unwrap();
        let p = torus().nearest_line_intersection(&l, 0.05).unwrap();
        assert_abs_diff_eq!(p, Vec3::new(1.0, 0.0, 0.0), epsilon = 1e-14);
    }

    #[test]
    fn projections() {
        let s = Surface::unit_sphere();
        assert_abs_diff_eq!(
            s.closest_point_projection(&Vec3::new(0.5, 0.0, 0.0)).unwrap(),
            Vec3::new(1.0, 0.0, 0.0),
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            s.closest_point_projection(&Vec3::new(0.0, 0.0, 1.0)).unwrap(),
            Vec3::new(0.0, 0.0, 1.0),
            epsilon = 1e-15
        );
        let e = Surface::ellipsoid(0.6, 0.8, 1.0).unwrap();
        let q = e.closest_point_projection(&Vec3::new(0.55, 0.0, 0.0)).unwrap();
        assert_abs_diff_eq!(q, Vec3::new(0.6, 0.0, 0.0), epsilon = 1e-14);
        let t = torus();
        let q = t.closest_point_projection(&Vec3::new(0.0, 0.9, 0.05)).unwrap();
        assert_abs_diff_eq!(t.implicit_value(&q), 0.0, epsilon = 1e-14);
    }
}
