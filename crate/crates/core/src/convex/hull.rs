//! Incremental 3D convex hull with coplanar-facet merging.

use std::collections::HashMap;

use nalgebra::Vector3;

use super::{Facet, Polytope};
use crate::error::{Error, Result};

/// Two adjacent triangles are merged when their normals differ by less than this angle.
pub const MERGE_ANGLE_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug)]
struct Tri {
    v: [usize; 3],
    normal: Vector3<f64>,
    offset: f64,
}

impl Tri {
    fn new(v: [usize; 3], pts: &[Vector3<f64>]) -> Tri {
        let n = (pts[v[1]] - pts[v[0]]).cross(&(pts[v[2]] - pts[v[0]]));
        let normal = n.normalize();
        Tri { v, normal, offset: normal.dot(&pts[v[0]]) }
    }

    fn dist(&self, p: &Vector3<f64>) -> f64 {
        self.normal.dot(p) - self.offset
    }

    fn edges(&self) -> [(usize, usize); 3] {
        [(self.v[0], self.v[1]), (self.v[1], self.v[2]), (self.v[2], self.v[0])]
    }
}

/// Convex hull of `points`. The vertex set of the result is exactly the set of
/// extreme points; coplanar triangles are merged into polygonal facets.
pub fn convex_hull_3d(points: &[Vector3<f64>]) -> Result<Polytope> {
    if points.len() < 4 {
        return Err(Error::DimensionDeficient(format!("need at least 4 points, got {}", points.len())));
    }
    if points.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
        return Err(Error::InvalidParameter("non-finite point".into()));
    }
    let scale = bounding_diameter(points);
    if scale == 0.0 {
        return Err(Error::DimensionDeficient("all points coincide".into()));
    }
    let eps = 1e-11 * scale;
    let seed = initial_simplex(points, scale)?;

    let interior = seed.iter().map(|&i| points[i]).sum::<Vector3<f64>>() / 4.0;
    let mut tris: Vec<Option<Tri>> = Vec::new();
    let mut edge_owner: HashMap<(usize, usize), usize> = HashMap::new();

    let [a, b, c, d] = seed;
    for face in [[a, b, c], [a, b, d], [a, c, d], [b, c, d]] {
        let mut t = Tri::new(face, points);
        if t.dist(&interior) > 0.0 {
            t = Tri::new([face[0], face[2], face[1]], points);
        }
        push_tri(&mut tris, &mut edge_owner, t);
    }

    let mut visible = Vec::new();
    for (pi, p) in points.iter().enumerate() {
        if seed.contains(&pi) {
            continue;
        }
        visible.clear();
        visible.extend(
            tris.iter()
                .enumerate()
                .filter_map(|(i, t)| t.as_ref().filter(|t| t.dist(p) > eps).map(|_| i)),
        );
        if visible.is_empty() {
            continue;
        }
        let mut horizon = Vec::new();
        for &fi in &visible {
            let t = tris[fi].unwrap();
            for (u, v) in t.edges() {
                let twin = edge_owner[&(v, u)];
                if !visible.contains(&twin) {
                    horizon.push((u, v));
                }
            }
        }
        for &fi in &visible {
            let t = tris[fi].take().unwrap();
            for e in t.edges() {
                edge_owner.remove(&e);
            }
        }
        for (u, v) in horizon {
            push_tri(&mut tris, &mut edge_owner, Tri::new([u, v, pi], points));
        }
    }

    let tris: Vec<Tri> = tris.into_iter().flatten().collect();
    merge_into_polytope(points, &tris, scale)
}

fn push_tri(tris: &mut Vec<Option<Tri>>, owner: &mut HashMap<(usize, usize), usize>, t: Tri) {
    let id = tris.len();
    for e in t.edges() {
        owner.insert(e, id);
    }
    tris.push(Some(t));
}

fn bounding_diameter(points: &[Vector3<f64>]) -> f64 {
    let mut lo = points[0];
    let mut hi = points[0];
    for p in points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    (hi - lo).norm()
}

fn initial_simplex(points: &[Vector3<f64>], scale: f64) -> Result<[usize; 4]> {
    let tol = 1e-9 * scale;
    let argmax = |f: &dyn Fn(&Vector3<f64>) -> f64| {
        points
            .iter()
            .enumerate()
            .map(|(i, p)| (i, f(p)))
            .fold((0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best })
    };
    let (a, _) = argmax(&|p| -p.x);
    let (b, dab) = argmax(&|p| (p - points[a]).norm());
    if dab <= tol {
        return Err(Error::DimensionDeficient("all points coincide".into()));
    }
    let dir = (points[b] - points[a]) / dab;
    let (c, dc) = argmax(&|p| {
        let w = p - points[a];
        (w - dir * w.dot(&dir)).norm()
    });
    if dc <= tol {
        return Err(Error::DimensionDeficient("points are collinear".into()));
    }
    let n = (points[b] - points[a]).cross(&(points[c] - points[a])).normalize();
    let (d, dd) = argmax(&|p| n.dot(&(p - points[a])).abs());
    if dd <= tol {
        return Err(Error::DimensionDeficient("points are coplanar".into()));
    }
    Ok([a, b, c, d])
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

fn merge_into_polytope(points: &[Vector3<f64>], tris: &[Tri], scale: f64) -> Result<Polytope> {
    let mut owner = HashMap::new();
    for (i, t) in tris.iter().enumerate() {
        for e in t.edges() {
            owner.insert(e, i);
        }
    }
    let mut parent: Vec<usize> = (0..tris.len()).collect();
    for (i, t) in tris.iter().enumerate() {
        for (u, v) in t.edges() {
            let j = owner[&(v, u)];
            let angle = (t.normal - tris[j].normal).norm();
            if angle < MERGE_ANGLE_TOL {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri] = rj;
                }
            }
        }
    }

    let mut groups: HashMap<usize, Vec<usize>> = HashMap::new();
    for i in 0..tris.len() {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }
    let mut roots: Vec<usize> = groups.keys().copied().collect();
    roots.sort_unstable();

    let collinear_tol = 1e-12 * scale * scale;
    let mut loops = Vec::with_capacity(roots.len());
    for r in roots {
        let members = &groups[&r];
        let mut next: HashMap<usize, usize> = HashMap::new();
        let mut area_normal = Vector3::zeros();
        for &ti in members {
            let t = &tris[ti];
            area_normal += (points[t.v[1]] - points[t.v[0]]).cross(&(points[t.v[2]] - points[t.v[0]]));
            for (u, v) in t.edges() {
                if find(&mut parent, owner[&(v, u)]) != r {
                    next.insert(u, v);
                }
            }
        }
        let start = *next.keys().min().expect("facet without boundary");
        let mut ring = vec![start];
        let mut cur = next[&start];
        while cur != start {
            if ring.len() > next.len() {
                return Err(Error::DimensionDeficient("non-manifold facet boundary".into()));
            }
            ring.push(cur);
            cur = next[&cur];
        }
        // Drop vertices lying on the segment between their neighbours.
        let mut changed = true;
        while changed && ring.len() > 3 {
            changed = false;
            for k in 0..ring.len() {
                let prev = points[ring[(k + ring.len() - 1) % ring.len()]];
                let here = points[ring[k]];
                let nxt = points[ring[(k + 1) % ring.len()]];
                if (here - prev).cross(&(nxt - here)).norm() <= collinear_tol {
                    ring.remove(k);
                    changed = true;
                    break;
                }
            }
        }
        loops.push((ring, area_normal));
    }

    let mut used: Vec<usize> = loops.iter().flat_map(|(ring, _)| ring.iter().copied()).collect();
    used.sort_unstable();
    used.dedup();
    let remap: HashMap<usize, usize> = used.iter().enumerate().map(|(new, &old)| (old, new)).collect();
    let vertices: Vec<Vector3<f64>> = used.iter().map(|&i| points[i]).collect();

    let mut facets = Vec::with_capacity(loops.len());
    for (ring, area_normal) in loops {
        let normal = area_normal.normalize();
        let offset = vertices.iter().map(|v| normal.dot(v)).fold(f64::NEG_INFINITY, f64::max);
        let loop_idx: Vec<usize> = ring.iter().map(|i| remap[i]).collect();
        facets.push(Facet::new(normal, offset, loop_idx, &vertices));
    }
    Polytope::from_parts(vertices, facets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cube_points() -> Vec<Vector3<f64>> {
        let mut pts = Vec::new();
        for &x in &[-1.0, 1.0] {
            for &y in &[-1.0, 1.0] {
                for &z in &[-1.0, 1.0] {
                    pts.push(Vector3::new(x, y, z));
                }
            }
        }
        pts
    }

    /// A point is extreme iff it is not in the hull of the others; checked by
    /// brute force over all candidate supporting directions given by triples.
    fn brute_force_extreme(points: &[Vector3<f64>]) -> Vec<bool> {
        let n = points.len();
        let mut extreme = vec![false; n];
        for i in 0..n {
            'triples: for j in 0..n {
                for k in (j + 1)..n {
                    for l in (k + 1)..n {
                        if [j, k, l].contains(&i) {
                            continue;
                        }
                        let nrm = (points[k] - points[j]).cross(&(points[l] - points[j]));
                        if nrm.norm() < 1e-12 {
                            continue;
                        }
                        for sign in [1.0, -1.0] {
                            let nn = nrm * sign;
                            let off = nn.dot(&points[j]);
                            if points.iter().enumerate().all(|(q, p)| q == i || nn.dot(p) <= off + 1e-12)
                                && nn.dot(&points[i]) > off + 1e-12
                            {
                                extreme[i] = true;
                                break 'triples;
                            }
                        }
                    }
                }
            }
        }
        extreme
    }

    #[test]
    fn cube_with_origin() {
        let mut pts = cube_points();
        pts.push(Vector3::zeros());
        let p = convex_hull_3d(&pts).unwrap();
        assert_eq!(p.vertices().len(), 8);
        assert_eq!(p.facets().len(), 6);
        let brute = brute_force_extreme(&pts);
        assert_eq!(brute.iter().filter(|&&e| e).count(), 8);
        assert!(!brute[8]);
        for f in p.facets() {
            let n = f.normal;
            assert!((n.abs().max() - 1.0).abs() < 1e-12 && (n.abs().sum() - 1.0).abs() < 1e-12);
            assert!((f.offset - 1.0).abs() < 1e-12);
            assert_eq!(f.vertices.len(), 4);
            assert!((f.area - 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn simplex_has_four_facets() {
        let pts = vec![
            Vector3::new(1.0, 1.0, 1.0),
            Vector3::new(1.0, -1.0, -1.0),
            Vector3::new(-1.0, 1.0, -1.0),
            Vector3::new(-1.0, -1.0, 1.0),
        ];
        let p = convex_hull_3d(&pts).unwrap();
        assert_eq!(p.facets().len(), 4);
        assert_eq!(p.vertices().len(), 4);
    }

    #[test]
    fn sphere_points_are_all_vertices() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pts: Vec<Vector3<f64>> = (0..100)
            .map(|_| {
                Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
                    .normalize()
            })
            .collect();
        let p = convex_hull_3d(&pts).unwrap();
        assert_eq!(p.vertices().len(), 100);
        assert!(p.facets().iter().all(|f| f.vertices.len() == 3));
        assert_eq!(p.facets().len(), 2 * 100 - 4);
    }

    #[test]
    fn random_cloud_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<Vector3<f64>> = (0..30)
            .map(|_| Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let p = convex_hull_3d(&pts).unwrap();
        let brute = brute_force_extreme(&pts);
        let mut expected: Vec<Vector3<f64>> =
            pts.iter().zip(&brute).filter(|(_, &e)| e).map(|(p, _)| *p).collect();
        let mut got = p.vertices().to_vec();
        let key = |v: &Vector3<f64>| (v.x, v.y, v.z);
        expected.sort_by(|a, b| key(a).partial_cmp(&key(b)).unwrap());
        got.sort_by(|a, b| key(a).partial_cmp(&key(b)).unwrap());
        assert_eq!(expected, got);
    }

    #[test]
    fn coplanar_input_rejected() {
        let pts: Vec<Vector3<f64>> = (0..10).map(|i| Vector3::new(i as f64, (i * i) as f64, 0.0)).collect();
        assert!(matches!(convex_hull_3d(&pts), Err(Error::DimensionDeficient(_))));
        let line: Vec<Vector3<f64>> = (0..5).map(|i| Vector3::new(i as f64, 0.0, 0.0)).collect();
        assert!(matches!(convex_hull_3d(&line), Err(Error::DimensionDeficient(_))));
        assert!(convex_hull_3d(&line[..3]).is_err());
    }

    #[test]
    fn coplanar_face_points_are_not_vertices() {
        let mut pts = cube_points();
        pts.push(Vector3::new(0.2, -0.3, 1.0));
        pts.push(Vector3::new(1.0, 0.0, 0.0));
        pts.push(Vector3::new(1.0, 1.0, 0.0));
        let p = convex_hull_3d(&pts).unwrap();
        assert_eq!(p.vertices().len(), 8);
        assert_eq!(p.facets().len(), 6);
    }
}
