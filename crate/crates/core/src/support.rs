//! Support functions sampled on the sphere grid.

use std::sync::Arc;

use nalgebra::Vector3;

use crate::convex::{convex_hull_3d, Polytope};
use crate::error::{Error, Result};
use crate::sphere::{FrameTensor, ScalarField, SphericalGrid};

/// Per-node smallest eigenvalue of `W = Hess h + h I`.
#[derive(Clone, Debug)]
pub struct ConvexityReport {
    pub min_eig: Vec<f64>,
    pub convex: bool,
}

impl ConvexityReport {
    pub fn worst(&self) -> (usize, f64) {
        self.min_eig
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::INFINITY), |b, c| if c.1 < b.1 { c } else { b })
    }
}

/// `W = Hess h + h I` at every node, from the band-limited part of `h`.
pub fn spherical_hessian(h: &ScalarField) -> Result<Vec<FrameTensor>> {
    let hess = h.grid().covariant_hessian(h)?;
    Ok(hess.iter().zip(h.values()).map(|(t, v)| t.shifted(*v)).collect())
}

pub fn check_convexity(h: &ScalarField) -> Result<ConvexityReport> {
    let min_eig: Vec<f64> = spherical_hessian(h)?.iter().map(FrameTensor::min_eig).collect();
    let convex = min_eig.iter().all(|&e| e > 0.0);
    Ok(ConvexityReport { min_eig, convex })
}

/// Support function of a convex body containing the origin in its interior,
/// with its convexity certificate. Both `h > 0` and `W > 0` hold at every node.
#[derive(Clone, Debug)]
pub struct SupportFunction {
    field: ScalarField,
    w: Vec<FrameTensor>,
    min_eig: Vec<f64>,
}

impl SupportFunction {
    pub fn new(field: ScalarField) -> Result<SupportFunction> {
        let w = spherical_hessian(&field)?;
        let min_eig: Vec<f64> = w.iter().map(FrameTensor::min_eig).collect();
        for (i, (&h, &e)) in field.values().iter().zip(&min_eig).enumerate() {
            if !(h > 0.0 && e > 0.0) {
                return Err(Error::Convexity { node: i, min_eig: e, h });
            }
        }
        Ok(SupportFunction { field, w, min_eig })
    }

    pub fn constant(grid: &Arc<SphericalGrid>, c: f64) -> Result<SupportFunction> {
        SupportFunction::new(ScalarField::constant(grid, c))
    }

    pub fn field(&self) -> &ScalarField {
        &self.field
    }

    pub fn grid(&self) -> &Arc<SphericalGrid> {
        self.field.grid()
    }

    pub fn values(&self) -> &[f64] {
        self.field.values()
    }

    /// `W = Hess h + h I` per node.
    pub fn w(&self) -> &[FrameTensor] {
        &self.w
    }

    pub fn min_eig(&self) -> &[f64] {
        &self.min_eig
    }

    pub fn min_eig_overall(&self) -> f64 {
        self.min_eig.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `det W` per node.
    pub fn det_w(&self) -> Vec<f64> {
        self.w.iter().map(FrameTensor::det).collect()
    }

    pub fn into_field(self) -> ScalarField {
        self.field
    }

    /// Boundary points `grad h + h u`: the point of the body whose outer normal is `u`.
    pub fn boundary_points(&self) -> Result<Vec<Vector3<f64>>> {
        let grid = self.grid();
        let grad = grid.gradient(&self.field)?;
        Ok(grid.nodes().iter().zip(&grad).zip(self.values()).map(|((u, g), h)| g + u * *h).collect())
    }

    /// Hull of [`SupportFunction::boundary_points`].
    pub fn to_polytope(&self) -> Result<Polytope> {
        convex_hull_3d(&self.boundary_points()?)
    }
}

/// `V = (1/3) int h det W`.
pub fn volume_from_support(h: &SupportFunction) -> f64 {
    let integrand: Vec<f64> = h.values().iter().zip(h.w()).map(|(v, w)| v * w.det()).collect();
    let grid = h.grid();
    let field = ScalarField::from_values(grid, integrand).expect("finite integrand");
    grid.integrate(&field) / 3.0
}

/// Largest nodewise gap between two sampled support functions: the grid
/// approximation of the Hausdorff distance between the bodies.
pub fn hausdorff_distance(hk: &ScalarField, hl: &ScalarField) -> Result<f64> {
    hk.max_abs_diff(hl)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convex::Polytope;
    use std::f64::consts::PI;

    fn grid() -> Arc<SphericalGrid> {
        SphericalGrid::build(16).unwrap()
    }

    #[test]
    fn unit_ball_volume() {
        let h = SupportFunction::constant(&grid(), 1.0).unwrap();
        assert!((volume_from_support(&h) - 4.0 * PI / 3.0).abs() < 1e-12);
        assert!(h.min_eig().iter().all(|e| (e - 1.0).abs() < 1e-12));
    }

    #[test]
    fn translated_ball_volume_matches_polytope_oracle() {
        let g = grid();
        let h = SupportFunction::new(ScalarField::from_fn(&g, |u| 1.0 + 0.1 * u.z)).unwrap();
        assert!((volume_from_support(&h) - 4.0 * PI / 3.0).abs() < 1e-12);
        // Independent oracle: hull of the boundary points of the translated ball.
        let poly = h.to_polytope().unwrap();
        let rel = (poly.volume() - 4.0 * PI / 3.0).abs() / (4.0 * PI / 3.0);
        assert!(rel < 2e-2, "polytope volume off by {rel}");
        assert!(poly.volume() < 4.0 * PI / 3.0);
    }

    #[test]
    fn translated_ball_stays_convex() {
        let g = grid();
        let rep = check_convexity(&ScalarField::from_fn(&g, |u| 1.0 + 0.9 * u.z)).unwrap();
        assert!(rep.convex);
        assert!(rep.min_eig.iter().all(|e| (e - 1.0).abs() < 1e-10));
    }

    #[test]
    fn large_quadrupole_is_not_convex() {
        let g = grid();
        // At the poles W = (1 - 2a) I for h = 1 + a P2(u.e3).
        let h = ScalarField::from_fn(&g, |u| 1.0 + 0.9 * (1.5 * u.z * u.z - 0.5));
        let rep = check_convexity(&h).unwrap();
        assert!(!rep.convex);
        assert!(rep.worst().1 < 0.0);
        assert!(matches!(SupportFunction::new(h), Err(Error::Convexity { .. })));
    }

    #[test]
    fn hausdorff_basics() {
        let g = grid();
        let b = ScalarField::constant(&g, 1.0);
        assert_eq!(hausdorff_distance(&b, &b).unwrap(), 0.0);
        assert_eq!(hausdorff_distance(&b, &ScalarField::constant(&g, 2.0)).unwrap(), 1.0);
        let other = ScalarField::constant(&SphericalGrid::build(8).unwrap(), 1.0);
        assert!(matches!(hausdorff_distance(&b, &other), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn cube_to_inscribed_ball() {
        let g = grid();
        let cube = Polytope::cube(1.0).unwrap();
        let hc = ScalarField::from_fn(&g, |u| cube.support(u));
        let hb = ScalarField::constant(&g, 1.0);
        let d = hausdorff_distance(&hc, &hb).unwrap();
        let exact = 3f64.sqrt() - 1.0;
        // grid sup misses the diagonal by O(L^-2)
        assert!(d <= exact + 1e-12 && exact - d < 2e-2, "{d}");
    }
}
