use nalgebra::Vector3;

use logmink_core::convex::{cone_volume_measure, enclosing_ellipsoid};
use logmink_core::experiments::gen_density;
use logmink_core::solver::{default_initial_guess, ma_residual, newton_solve, SolveOptions};
use logmink_core::support::volume_from_support;
use logmink_core::{DensitySpec, Polytope, ScalarField, SphericalGrid, SupportFunction};

#[test]
fn solved_body_has_the_prescribed_cone_volume() {
    let grid = SphericalGrid::build(16).unwrap();
    let f = gen_density(5, 0.2, 2.0, &grid).unwrap();
    let sol = newton_solve(&f, &default_initial_guess(&f).unwrap(), &SolveOptions::default()).unwrap();
    let body = sol.h.to_polytope().unwrap();
    let exact = f.total() / 3.0;
    assert!((volume_from_support(&sol.h) - exact).abs() < 1e-10 * exact);
    // The hull of the boundary points is inscribed in the smooth body.
    let mass = cone_volume_measure(&body).unwrap().total_mass();
    assert!(mass < exact && (exact - mass) / exact < 2e-2, "{mass} vs {exact}");
}

#[test]
fn solution_csv_roundtrip_revalidates() {
    let grid = SphericalGrid::build(12).unwrap();
    let f: DensitySpec = "harmonics:[(2,1,0.05),(3,-2,0.03)]".parse().unwrap();
    let f = f.build(&grid).unwrap();
    let sol = newton_solve(&f, &default_initial_guess(&f).unwrap(), &SolveOptions::default()).unwrap();
    let back = ScalarField::from_csv(&grid, &sol.h.field().to_csv()).unwrap();
    assert_eq!(back.values(), sol.h.values());
    let h = SupportFunction::new(back).unwrap();
    assert!(ma_residual(&h, &f).unwrap().sup_norm() <= 1e-10);
}

#[test]
fn obj_roundtrip_preserves_measures_and_ellipsoid() {
    let p = Polytope::cuboid(0.5, 1.0, 2.0).unwrap().translated(&Vector3::new(0.1, -0.2, 0.3)).unwrap();
    let q = Polytope::from_obj(&p.to_obj()).unwrap();
    assert!((p.volume() - q.volume()).abs() < 1e-12);
    let (mp, mq) = (cone_volume_measure(&p).unwrap(), cone_volume_measure(&q).unwrap());
    assert!((mp.total_mass() - mq.total_mass()).abs() < 1e-12);
    let (ep, eq) = (enclosing_ellipsoid(&p).unwrap(), enclosing_ellipsoid(&q).unwrap());
    for k in 0..3 {
        assert!((ep.radii[k] - eq.radii[k]).abs() < 1e-9);
    }
}

#[test]
fn density_descriptor_survives_text_roundtrip() {
    let grid = SphericalGrid::build(16).unwrap();
    for text in ["const:0.125", "harmonics:[(1,0,0.1)]", "random:42,0.05,2"] {
        let spec: DensitySpec = text.parse().unwrap();
        assert_eq!(spec.to_string(), text);
        let f = spec.build(&grid).unwrap();
        let again: DensitySpec = f.descriptor().parse().unwrap();
        assert_eq!(again.build(&grid).unwrap().values(), f.values());
    }
}
