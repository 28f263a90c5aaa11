//! Minimum-volume enclosing ellipsoids and the anisotropy diagnostics built on them.

use nalgebra::{Matrix3, Matrix4, Vector2, Vector3, Vector4};

use super::Polytope;
use crate::error::{Error, Result};

/// Khachiyan stopping tolerance on `max_i M_i / (d + 1) - 1`.
pub const MVEE_TOL: f64 = 1e-7;
pub const MVEE_MAX_ITER: usize = 100_000;

/// `{c + sum_i t_i r_i e_i : |t| <= 1}` with `r_1 <= r_2 <= r_3`.
#[derive(Clone, Debug, PartialEq)]
pub struct Ellipsoid {
    pub center: Vector3<f64>,
    pub axes: [Vector3<f64>; 3],
    pub radii: [f64; 3],
}

impl Ellipsoid {
    pub fn ball(center: Vector3<f64>, r: f64) -> Ellipsoid {
        Ellipsoid { center, axes: [Vector3::x(), Vector3::y(), Vector3::z()], radii: [r; 3] }
    }

    /// `sum_i ((x - c) . e_i / r_i)^2`; at most 1 inside.
    pub fn gauge(&self, x: &Vector3<f64>) -> f64 {
        let d = x - self.center;
        (0..3).map(|i| (d.dot(&self.axes[i]) / self.radii[i]).powi(2)).sum()
    }

    pub fn support(&self, u: &Vector3<f64>) -> f64 {
        self.center.dot(u) + (0..3).map(|i| (self.radii[i] * self.axes[i].dot(u)).powi(2)).sum::<f64>().sqrt()
    }

    /// Homothetic copy about the center.
    pub fn shrunk(&self, factor: f64) -> Ellipsoid {
        Ellipsoid { center: self.center, axes: self.axes, radii: self.radii.map(|r| r / factor) }
    }

    pub fn volume(&self) -> f64 {
        4.0 / 3.0 * std::f64::consts::PI * self.radii.iter().product::<f64>()
    }

    /// Whether `self` lies inside `p`, with absolute slack on each facet.
    pub fn inside(&self, p: &Polytope, slack: f64) -> bool {
        p.facets().iter().all(|f| self.support(&f.normal) <= f.offset + slack)
    }
}

/// Minimum-volume ellipsoid enclosing the vertices of `p`.
pub fn enclosing_ellipsoid(p: &Polytope) -> Result<Ellipsoid> {
    enclosing_ellipsoid_of_points(p.vertices())
}

/// Khachiyan's barycentric ascent with Todd–Yildirim away steps on the lifted
/// points `(x, 1)`. The result is inflated so every point satisfies `gauge <= 1`.
pub fn enclosing_ellipsoid_of_points(points: &[Vector3<f64>]) -> Result<Ellipsoid> {
    if points.len() < 4 {
        return Err(Error::DimensionDeficient("need at least 4 points".into()));
    }
    let n = points.len();
    let d = 3.0;
    let lifted: Vec<Vector4<f64>> = points.iter().map(|p| Vector4::new(p.x, p.y, p.z, 1.0)).collect();
    let mut u = vec![1.0 / n as f64; n];
    let mut m = vec![0.0; n];

    for _ in 0..MVEE_MAX_ITER {
        let mut x = Matrix4::zeros();
        for (q, &w) in lifted.iter().zip(&u) {
            x += q * q.transpose() * w;
        }
        let xinv = x
            .try_inverse()
            .ok_or_else(|| Error::DimensionDeficient("points span less than three dimensions".into()))?;
        for (mi, q) in m.iter_mut().zip(&lifted) {
            *mi = q.dot(&(xinv * q));
        }
        let (j, m_max) = m.iter().copied().enumerate().fold((0, f64::NEG_INFINITY), |b, c| if c.1 > b.1 { c } else { b });
        let (k, m_min) = m
            .iter()
            .copied()
            .enumerate()
            .filter(|&(i, _)| u[i] > 0.0)
            .fold((0, f64::INFINITY), |b, c| if c.1 < b.1 { c } else { b });
        if m_max <= (d + 1.0) * (1.0 + MVEE_TOL) {
            break;
        }
        if m_max - (d + 1.0) >= (d + 1.0) - m_min {
            let step = (m_max - d - 1.0) / ((d + 1.0) * (m_max - 1.0));
            u.iter_mut().for_each(|w| *w *= 1.0 - step);
            u[j] += step;
        } else {
            let mut step = (d + 1.0 - m_min) / ((d + 1.0) * (m_min - 1.0));
            let cap = u[k] / (1.0 - u[k]);
            step = step.min(cap);
            u.iter_mut().for_each(|w| *w *= 1.0 + step);
            u[k] -= step;
            if step == cap {
                u[k] = 0.0;
            }
        }
    }

    let center: Vector3<f64> = points.iter().zip(&u).map(|(p, w)| p * *w).sum();
    let mut scatter = Matrix3::zeros();
    for (p, &w) in points.iter().zip(&u) {
        let r = p - center;
        scatter += r * r.transpose() * w;
    }
    let eig = scatter.symmetric_eigen();
    let max_eig = eig.eigenvalues.max();
    if eig.eigenvalues.min() <= 1e-14 * max_eig.max(f64::MIN_POSITIVE) {
        return Err(Error::DimensionDeficient("points span less than three dimensions".into()));
    }
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let mut e = Ellipsoid {
        center,
        axes: order.map(|i| eig.eigenvectors.column(i).into_owned()),
        radii: order.map(|i| (d * eig.eigenvalues[i]).sqrt()),
    };
    let worst = points.iter().map(|p| e.gauge(p)).fold(0.0, f64::max);
    if worst > 1.0 {
        let s = worst.sqrt();
        e.radii = e.radii.map(|r| r * s);
    }
    Ok(e)
}

/// Anisotropy and origin-position measures of a body relative to its enclosing ellipsoid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlowdownDiagnostics {
    /// `r3 / r2`
    pub ratio_32: f64,
    /// `r2 / r1`
    pub ratio_21: f64,
    /// Distance from the projected origin to the ends of the body's shadow on the `r3` axis, over `r3`.
    pub axis_dist_ratio: f64,
    /// Distance from the projected origin to the boundary of the shadow on the `r2 r3` plane, over `r3`.
    pub plane_dist_ratio: f64,
}

pub fn blowdown_diagnostics(p: &Polytope) -> Result<BlowdownDiagnostics> {
    let e = enclosing_ellipsoid(p)?;
    Ok(diagnostics_with(p, &e))
}

pub(crate) fn diagnostics_with(p: &Polytope, e: &Ellipsoid) -> BlowdownDiagnostics {
    let [r1, r2, r3] = e.radii;
    let a3 = e.axes[2];
    let axis = p.support(&a3).min(p.support(&-a3)).max(0.0);

    let (a2, a3) = (e.axes[1], e.axes[2]);
    let shadow: Vec<Vector2<f64>> = p.vertices().iter().map(|v| Vector2::new(v.dot(&a2), v.dot(&a3))).collect();
    let plane = origin_depth_2d(&shadow).max(0.0);

    BlowdownDiagnostics { ratio_32: r3 / r2, ratio_21: r2 / r1, axis_dist_ratio: axis / r3, plane_dist_ratio: plane / r3 }
}

/// Signed distance from the origin to the boundary of the planar hull of
/// `pts` (positive inside).
fn origin_depth_2d(pts: &[Vector2<f64>]) -> f64 {
    let hull = hull_2d(pts);
    if hull.len() < 3 {
        return 0.0;
    }
    (0..hull.len())
        .map(|k| {
            let a = hull[k];
            let b = hull[(k + 1) % hull.len()];
            let edge = b - a;
            // counter-clockwise hull: interior to the left
            (edge.x * (-a.y) - edge.y * (-a.x)) / edge.norm()
        })
        .fold(f64::INFINITY, f64::min)
}

/// Andrew's monotone chain, counter-clockwise, collinear points dropped.
fn hull_2d(pts: &[Vector2<f64>]) -> Vec<Vector2<f64>> {
    let mut p: Vec<Vector2<f64>> = pts.to_vec();
    p.sort_by(|a, b| (a.x, a.y).partial_cmp(&(b.x, b.y)).unwrap());
    p.dedup();
    if p.len() < 3 {
        return p;
    }
    let cross = |o: &Vector2<f64>, a: &Vector2<f64>, b: &Vector2<f64>| (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
    let mut lower: Vec<Vector2<f64>> = Vec::new();
    for q in &p {
        while lower.len() >= 2 && cross(&lower[lower.len() - 2], &lower[lower.len() - 1], q) <= 0.0 {
            lower.pop();
        }
        lower.push(*q);
    }
    let mut upper: Vec<Vector2<f64>> = Vec::new();
    for q in p.iter().rev() {
        while upper.len() >= 2 && cross(&upper[upper.len() - 2], &upper[upper.len() - 1], q) <= 0.0 {
            upper.pop();
        }
        upper.push(*q);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convex::convex_hull_3d;
    use crate::sphere::SphericalGrid;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sphere_polytope() -> Polytope {
        let g = SphericalGrid::build(16).unwrap();
        convex_hull_3d(g.nodes()).unwrap()
    }

    #[test]
    fn box_radii_are_sqrt3_half_sides() {
        let p = Polytope::cuboid(2.0, 0.5, 1.0).unwrap();
        let e = enclosing_ellipsoid(&p).unwrap();
        let s3 = 3f64.sqrt();
        let expected = [0.5 * s3, 1.0 * s3, 2.0 * s3];
        for (r, x) in e.radii.iter().zip(expected) {
            assert!((r - x).abs() < 1e-5, "{r} vs {x}");
        }
        assert!(e.axes[2].x.abs() > 1.0 - 1e-9);
    }

    #[test]
    fn ball_is_its_own_ellipsoid() {
        let e = enclosing_ellipsoid(&sphere_polytope()).unwrap();
        for r in e.radii {
            assert!((r - 1.0).abs() < 1e-5, "{r}");
        }
        assert!(e.center.norm() < 1e-6);
    }

    #[test]
    fn simplex_john_containment() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let pts: Vec<Vector3<f64>> = (0..4)
                .map(|_| Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect();
            let p = convex_hull_3d(&pts).unwrap();
            let e = enclosing_ellipsoid(&p).unwrap();
            assert!(p.vertices().iter().all(|v| e.gauge(v) <= 1.0 + 1e-6));
            assert!(e.shrunk(3.0).inside(&p, 1e-6));
        }
    }

    #[test]
    fn coplanar_points_rejected() {
        let pts: Vec<Vector3<f64>> = (0..6).map(|i| Vector3::new(i as f64, (i * i) as f64 * 0.1, 0.0)).collect();
        assert!(matches!(enclosing_ellipsoid_of_points(&pts), Err(Error::DimensionDeficient(_))));
    }

    #[test]
    fn centered_ball_diagnostics() {
        let d = blowdown_diagnostics(&sphere_polytope()).unwrap();
        assert!((d.ratio_32 - 1.0).abs() < 1e-4 && (d.ratio_21 - 1.0).abs() < 1e-4);
        assert!(d.axis_dist_ratio > 0.95 && d.axis_dist_ratio <= 1.0 + 1e-9);
        assert!(d.plane_dist_ratio > 0.95 && d.plane_dist_ratio <= 1.0 + 1e-9);
    }

    #[test]
    fn elongated_box_diagnostics() {
        let m = 5.0;
        let d = blowdown_diagnostics(&Polytope::cuboid(1.0, 1.0, m).unwrap()).unwrap();
        assert!((d.ratio_32 - m).abs() < 1e-5);
        assert!((d.ratio_21 - 1.0).abs() < 1e-5);
        assert!((d.axis_dist_ratio - 1.0 / 3f64.sqrt()).abs() < 1e-5);
    }

    #[test]
    fn origin_on_face_gives_zero_plane_distance() {
        // Sides 2, 4, 6: the origin sits at the centre of the face y = 0.
        let p = Polytope::cuboid(1.0, 2.0, 3.0).unwrap().translated(&Vector3::new(0.0, 2.0, 0.0)).unwrap();
        let d = blowdown_diagnostics(&p).unwrap();
        assert!(d.plane_dist_ratio.abs() < 1e-9);
        assert!((d.axis_dist_ratio - 1.0 / 3f64.sqrt()).abs() < 1e-5);
    }
}
