//! Spectral solver and convex-geometry toolkit for the logarithmic Minkowski
//! problem `h det(Hess h + h I) = f` on the 2-sphere.
//!
//! * [`sphere`]: Gauss–Legendre grid, harmonic transforms, covariant derivatives.
//! * [`convex`]: polytopes, surface-area and cone-volume measures, enclosing ellipsoids.
//! * [`density`]: right-hand sides `f`, textual descriptors and seeded random densities.
//! * [`support`]: support functions sampled on the grid and their convexity certificate.
//! * [`solver`]: the Monge–Ampère operator, its linearization and the damped Newton solver.
//! * [`flow`]: normalized anisotropic Gauss curvature flow.
//! * [`experiments`]: seeded uniqueness, bound and blow-down diagnostic harnesses.
//! * [`io`]: atomic artifact writes.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod convex;
pub mod density;
pub mod error;
pub mod experiments;
pub mod flow;
pub mod io;
pub mod solver;
pub mod sphere;
pub mod support;

pub use convex::{BlowdownDiagnostics, DiscreteMeasure, Ellipsoid, Polytope};
pub use density::{DensityFunction, DensitySpec};
pub use error::{Error, Result};
pub use experiments::{ExperimentReport, ExperimentSpec, InitStrategy, SuiteKind};
pub use flow::{FlowOptions, FlowResult};
pub use solver::{SolveOptions, Solution};
pub use sphere::{HarmonicCoeffs, ScalarField, SphericalGrid};
pub use support::SupportFunction;

/// Formats a float so that it parses back to the same value, without
/// exponent notation for moderate magnitudes.
pub fn fmt_f64(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-4..1e15).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}
