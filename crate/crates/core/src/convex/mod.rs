//! Convex polytopes and the measures they carry on the sphere.
//!
//! A [`Polytope`] keeps its extreme points and polygonal facets. Each facet
//! carries its outward unit normal `nu_F` and support number
//! `h_F = max_x nu_F . x`; the surface-area measure puts mass `Area(F)` at
//! `nu_F`, the cone-volume measure puts `h_F Area(F) / 3` there.

mod ellipsoid;
mod hull;

use std::fmt::Write as _;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::fmt_f64;

pub use ellipsoid::{blowdown_diagnostics, enclosing_ellipsoid, BlowdownDiagnostics, Ellipsoid};
pub use hull::{convex_hull_3d, MERGE_ANGLE_TOL};

/// Slack allowed on `h_F >= 0` when asking whether the origin lies in the closure.
pub const ORIGIN_SLACK: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct Facet {
    pub normal: Vector3<f64>,
    pub offset: f64,
    /// Vertex indices, counter-clockwise seen from outside.
    pub vertices: Vec<usize>,
    pub area: f64,
}

impl Facet {
    pub(crate) fn new(normal: Vector3<f64>, offset: f64, vertices: Vec<usize>, pts: &[Vector3<f64>]) -> Facet {
        let mut twice = Vector3::zeros();
        for k in 0..vertices.len() {
            let a = pts[vertices[k]];
            let b = pts[vertices[(k + 1) % vertices.len()]];
            twice += a.cross(&b);
        }
        Facet { normal, offset, vertices, area: 0.5 * normal.dot(&twice) }
    }
}

#[derive(Clone, Debug)]
pub struct Polytope {
    vertices: Vec<Vector3<f64>>,
    facets: Vec<Facet>,
    centroid: Vector3<f64>,
}

impl Polytope {
    pub(crate) fn from_parts(vertices: Vec<Vector3<f64>>, facets: Vec<Facet>) -> Result<Polytope> {
        if let Some(f) = facets.iter().find(|f| !(f.area > 0.0)) {
            return Err(Error::DimensionDeficient(format!("zero-area facet with normal {:?}", f.normal)));
        }
        let centroid = volume_centroid(&vertices, &facets);
        Ok(Polytope { vertices, facets, centroid })
    }

    pub fn from_points(points: &[Vector3<f64>]) -> Result<Polytope> {
        convex_hull_3d(points)
    }

    /// The box `[-a, a] x [-b, b] x [-c, c]`.
    pub fn cuboid(a: f64, b: f64, c: f64) -> Result<Polytope> {
        let mut pts = Vec::with_capacity(8);
        for sx in [-1.0, 1.0] {
            for sy in [-1.0, 1.0] {
                for sz in [-1.0, 1.0] {
                    pts.push(Vector3::new(sx * a, sy * b, sz * c));
                }
            }
        }
        convex_hull_3d(&pts)
    }

    pub fn cube(half_side: f64) -> Result<Polytope> {
        Polytope::cuboid(half_side, half_side, half_side)
    }

    pub fn vertices(&self) -> &[Vector3<f64>] {
        &self.vertices
    }

    pub fn facets(&self) -> &[Facet] {
        &self.facets
    }

    pub fn centroid(&self) -> Vector3<f64> {
        self.centroid
    }

    /// Rebuilds the polytope from transformed vertices `x -> a x + t`.
    pub fn transformed(&self, a: &Matrix3<f64>, t: &Vector3<f64>) -> Result<Polytope> {
        let pts: Vec<Vector3<f64>> = self.vertices.iter().map(|v| a * v + t).collect();
        convex_hull_3d(&pts)
    }

    pub fn translated(&self, t: &Vector3<f64>) -> Result<Polytope> {
        self.transformed(&Matrix3::identity(), t)
    }

    pub fn scaled(&self, s: f64) -> Result<Polytope> {
        self.transformed(&(Matrix3::identity() * s), &Vector3::zeros())
    }

    /// Whether the origin lies in the closure, up to [`ORIGIN_SLACK`].
    pub fn contains_origin(&self) -> bool {
        self.facets.iter().all(|f| f.offset >= -ORIGIN_SLACK)
    }

    pub fn support(&self, u: &Vector3<f64>) -> f64 {
        support_function(self, u)
    }

    pub fn volume(&self) -> f64 {
        volume(self)
    }

    pub fn surface_area(&self) -> f64 {
        self.facets.iter().map(|f| f.area).sum()
    }

    /// Wavefront OBJ text (1-based indices).
    pub fn to_obj(&self) -> String {
        let mut out = String::new();
        for v in &self.vertices {
            let _ = writeln!(out, "v {} {} {}", fmt_f64(v.x), fmt_f64(v.y), fmt_f64(v.z));
        }
        for f in &self.facets {
            out.push('f');
            for i in &f.vertices {
                let _ = write!(out, " {}", i + 1);
            }
            out.push('\n');
        }
        out
    }

    /// Parses OBJ text. Only `v` records define the body: the polytope is the
    /// hull of the listed vertices; `f` records are checked for valid indices.
    pub fn from_obj(text: &str) -> Result<Polytope> {
        let mut pts = Vec::new();
        let mut faces = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let mut it = line.split_whitespace();
            match it.next() {
                Some("v") => {
                    let c: Vec<f64> = it
                        .map(|s| s.parse::<f64>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|e| Error::Parse(format!("line {}: {e}", ln + 1)))?;
                    if c.len() < 3 {
                        return Err(Error::Parse(format!("line {}: vertex needs 3 coordinates", ln + 1)));
                    }
                    pts.push(Vector3::new(c[0], c[1], c[2]));
                }
                Some("f") => {
                    let idx: Vec<usize> = it
                        .map(|s| s.split('/').next().unwrap_or("").parse::<usize>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|e| Error::Parse(format!("line {}: {e}", ln + 1)))?;
                    faces.push((ln + 1, idx));
                }
                _ => {}
            }
        }
        for (ln, f) in &faces {
            if f.len() < 3 || f.iter().any(|&i| i == 0 || i > pts.len()) {
                return Err(Error::Parse(format!("line {ln}: bad face indices")));
            }
        }
        convex_hull_3d(&pts)
    }
}

/// `h_P(u) = max_x u . x` over the vertices.
pub fn support_function(p: &Polytope, u: &Vector3<f64>) -> f64 {
    p.vertices.iter().map(|v| v.dot(u)).fold(f64::NEG_INFINITY, f64::max)
}

/// Volume by cones from an interior reference point to every facet.
pub fn volume(p: &Polytope) -> f64 {
    let c = p.vertices.iter().sum::<Vector3<f64>>() / p.vertices.len() as f64;
    p.facets.iter().map(|f| (f.offset - f.normal.dot(&c)) * f.area).sum::<f64>() / 3.0
}

fn volume_centroid(vertices: &[Vector3<f64>], facets: &[Facet]) -> Vector3<f64> {
    let c0 = vertices.iter().sum::<Vector3<f64>>() / vertices.len() as f64;
    let mut total = 0.0;
    let mut moment = Vector3::zeros();
    for f in facets {
        let a = vertices[f.vertices[0]];
        for k in 1..f.vertices.len() - 1 {
            let b = vertices[f.vertices[k]];
            let c = vertices[f.vertices[k + 1]];
            let vol = (a - c0).dot(&(b - c0).cross(&(c - c0))) / 6.0;
            total += vol;
            moment += (c0 + a + b + c) * (vol / 4.0);
        }
    }
    moment / total
}

/// Finite measure on the sphere: unit directions with nonnegative weights.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteMeasure {
    atoms: Vec<(Vector3<f64>, f64)>,
}

impl DiscreteMeasure {
    pub fn new(atoms: Vec<(Vector3<f64>, f64)>) -> Result<DiscreteMeasure> {
        for (u, w) in &atoms {
            if !(w.is_finite() && *w >= 0.0) {
                return Err(Error::InvalidParameter(format!("atom weight {w} is not finite and nonnegative")));
            }
            if (u.norm() - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidParameter(format!("atom direction {u:?} is not unit")));
            }
        }
        Ok(DiscreteMeasure { atoms })
    }

    pub fn atoms(&self) -> &[(Vector3<f64>, f64)] {
        &self.atoms
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|(_, w)| w).sum()
    }

    /// `sum_i w_i g(u_i)`.
    pub fn integrate(&self, g: impl Fn(&Vector3<f64>) -> f64) -> f64 {
        self.atoms.iter().map(|(u, w)| w * g(u)).sum()
    }

    /// CSV rows `nx,ny,nz,weight`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("nx,ny,nz,weight\n");
        for (u, w) in &self.atoms {
            let _ = writeln!(out, "{},{},{},{}", fmt_f64(u.x), fmt_f64(u.y), fmt_f64(u.z), fmt_f64(*w));
        }
        out
    }
}

/// One atom `(nu_F, Area(F))` per facet.
pub fn surface_area_measure(p: &Polytope) -> DiscreteMeasure {
    DiscreteMeasure { atoms: p.facets.iter().map(|f| (f.normal, f.area)).collect() }
}

/// One atom `(nu_F, h_F Area(F) / 3)` per facet. Requires the origin in the closure of `p`.
pub fn cone_volume_measure(p: &Polytope) -> Result<DiscreteMeasure> {
    if let Some(f) = p.facets.iter().find(|f| f.offset < -ORIGIN_SLACK) {
        return Err(Error::Precondition(format!(
            "origin lies outside the polytope (facet {:?} has h_F = {})",
            f.normal, f.offset
        )));
    }
    Ok(DiscreteMeasure { atoms: p.facets.iter().map(|f| (f.normal, f.offset.max(0.0) * f.area / 3.0)).collect() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_hull(seed: u64, n: usize) -> Polytope {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<Vector3<f64>> = (0..n)
            .map(|_| Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        convex_hull_3d(&pts).unwrap()
    }

    /// Volume by the divergence theorem over a fan triangulation of each facet,
    /// independent of the stored facet areas and offsets.
    fn divergence_volume(p: &Polytope) -> f64 {
        let v = p.vertices();
        let mut vol = 0.0;
        for f in p.facets() {
            for k in 1..f.vertices.len() - 1 {
                let (a, b, c) = (v[f.vertices[0]], v[f.vertices[k]], v[f.vertices[k + 1]]);
                vol += a.dot(&b.cross(&c)) / 6.0;
            }
        }
        vol
    }

    fn triangulated_area(p: &Polytope) -> f64 {
        let v = p.vertices();
        let mut area = 0.0;
        for f in p.facets() {
            for k in 1..f.vertices.len() - 1 {
                let (a, b, c) = (v[f.vertices[0]], v[f.vertices[k]], v[f.vertices[k + 1]]);
                area += 0.5 * (b - a).cross(&(c - a)).norm();
            }
        }
        area
    }

    fn rotation(seed: u64) -> Matrix3<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let axis = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        *nalgebra::Rotation3::from_scaled_axis(axis).matrix()
    }

    #[test]
    fn cube_support_values() {
        let c = Polytope::cube(1.0).unwrap();
        assert_eq!(support_function(&c, &Vector3::x()), 1.0);
        let d = Vector3::new(1.0, 1.0, 1.0).normalize();
        assert!((support_function(&c, &d) - 3f64.sqrt()).abs() < 1e-15);
        assert_eq!(c.volume(), 8.0);
        assert_eq!(c.centroid(), Vector3::zeros());
    }

    #[test]
    fn cube_surface_area_measure() {
        for t in [1.0, 0.5, 3.0] {
            let m = surface_area_measure(&Polytope::cube(t).unwrap());
            assert_eq!(m.atoms().len(), 6);
            for (_, w) in m.atoms() {
                assert!((w - 4.0 * t * t).abs() < 1e-12 * t * t);
            }
        }
    }

    #[test]
    fn cube_cone_volume_measure() {
        let m = cone_volume_measure(&Polytope::cube(1.0).unwrap()).unwrap();
        assert_eq!(m.atoms().len(), 6);
        for (_, w) in m.atoms() {
            assert_eq!(*w, 4.0 / 3.0);
        }
        assert!((m.total_mass() - 8.0).abs() < 1e-12);
    }

    #[test]
    fn origin_on_facet_gives_zero_atom() {
        let p = Polytope::cube(1.0).unwrap().translated(&Vector3::new(0.0, 0.0, 1.0)).unwrap();
        let m = cone_volume_measure(&p).unwrap();
        let bottom = m.atoms().iter().find(|(u, _)| u.z < -0.5).unwrap();
        assert_eq!(bottom.1, 0.0);
        assert!((m.total_mass() - 8.0).abs() < 1e-12);
    }

    #[test]
    fn origin_outside_is_rejected() {
        let p = Polytope::cube(1.0).unwrap().translated(&Vector3::new(3.0, 0.0, 0.0)).unwrap();
        assert!(matches!(cone_volume_measure(&p), Err(Error::Precondition(_))));
    }

    #[test]
    fn width_nonnegative() {
        let p = random_hull(9, 40);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let u = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
                .normalize();
            assert!(p.support(&u) + p.support(&-u) >= 0.0);
        }
    }

    #[test]
    fn obj_round_trip() {
        let p = random_hull(4, 25);
        let q = Polytope::from_obj(&p.to_obj()).unwrap();
        assert_eq!(p.vertices().len(), q.vertices().len());
        assert!((p.volume() - q.volume()).abs() < 1e-12);
        assert!(Polytope::from_obj("v 0 0 0\nf 1 2 3\n").is_err());
    }

    #[test]
    fn measure_csv_has_header_and_rows() {
        let csv = cone_volume_measure(&Polytope::cube(1.0).unwrap()).unwrap().to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "nx,ny,nz,weight");
        assert_eq!(lines.len(), 7);
    }

    #[test]
    fn invalid_atoms_rejected() {
        assert!(DiscreteMeasure::new(vec![(Vector3::x(), -1.0)]).is_err());
        assert!(DiscreteMeasure::new(vec![(Vector3::new(2.0, 0.0, 0.0), 1.0)]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn cone_volume_total_is_volume(seed in any::<u64>(), n in 6usize..60) {
            let p = random_hull(seed, n);
            prop_assume!(p.contains_origin());
            let total = cone_volume_measure(&p).unwrap().total_mass();
            let oracle = divergence_volume(&p);
            prop_assert!((total - oracle).abs() <= 1e-9 * oracle);
            prop_assert!((p.volume() - oracle).abs() <= 1e-9 * oracle);
        }

        #[test]
        fn surface_mass_is_triangulated_area(seed in any::<u64>(), n in 6usize..60) {
            let p = random_hull(seed, n);
            let mass = surface_area_measure(&p).total_mass();
            prop_assert!((mass - triangulated_area(&p)).abs() <= 1e-10 * mass);
        }

        #[test]
        fn polytope_invariants(seed in any::<u64>(), n in 5usize..80) {
            let p = random_hull(seed, n);
            for f in p.facets() {
                prop_assert!((f.normal.norm() - 1.0).abs() < 1e-12);
                for v in p.vertices() {
                    prop_assert!(f.normal.dot(v) <= f.offset + 1e-9);
                }
                for &i in &f.vertices {
                    prop_assert!((f.normal.dot(&p.vertices()[i]) - f.offset).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn measures_rotate_with_body(seed in any::<u64>()) {
            let p = random_hull(seed, 30);
            let r = rotation(seed ^ 0x5555);
            let q = p.transformed(&r, &Vector3::zeros()).unwrap();
            prop_assume!(p.contains_origin());
            let mp = cone_volume_measure(&p).unwrap();
            let mq = cone_volume_measure(&q).unwrap();
            let sp = surface_area_measure(&p);
            let sq = surface_area_measure(&q);
            prop_assert_eq!(mp.atoms().len(), mq.atoms().len());
            for ((u, w), (us, ws)) in mp.atoms().iter().zip(sp.atoms()) {
                let ru = r * u;
                let (v, wq) = mq.atoms().iter().min_by(|a, b| (a.0 - ru).norm().partial_cmp(&(b.0 - ru).norm()).unwrap()).unwrap();
                prop_assert!((v - ru).norm() < 1e-10);
                prop_assert!((w - wq).abs() <= 1e-10 * (1.0 + w));
                let rus = r * us;
                let (_, wsq) = sq.atoms().iter().min_by(|a, b| (a.0 - rus).norm().partial_cmp(&(b.0 - rus).norm()).unwrap()).unwrap();
                prop_assert!((ws - wsq).abs() <= 1e-10 * (1.0 + ws));
            }
        }

        #[test]
        fn cone_volume_scales_cubically(seed in any::<u64>(), t in 0.1f64..5.0) {
            let p = random_hull(seed, 25);
            prop_assume!(p.contains_origin());
            let q = p.scaled(t).unwrap();
            let mp = cone_volume_measure(&p).unwrap();
            let mq = cone_volume_measure(&q).unwrap();
            for (u, w) in mp.atoms() {
                let (_, wq) = mq.atoms().iter().min_by(|a, b| (a.0 - u).norm().partial_cmp(&(b.0 - u).norm()).unwrap()).unwrap();
                prop_assert!((wq - t.powi(3) * w).abs() <= 1e-10 * (t.powi(3) * w).max(1e-12));
            }
        }
    }
}
