//! The operator `R(h) = h det(Hess h + h I)`, its linearization, and a damped
//! Newton solver for `R(h) = f`.
//!
//! The equation is discretized by Galerkin projection onto the harmonic band
//! of the grid: the unknown is the coefficient vector of `h`, and the residual
//! is the band-limited part of `R(h) - f`. For band-limited exact solutions
//! (constant `f`, translated balls) this coincides with the nodal residual;
//! otherwise the nodal residual also contains the aliasing tail above the band.

use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fmt_f64;
use crate::sphere::{FrameTensor, ScalarField, SphericalGrid};
use crate::support::SupportFunction;

pub use crate::density::DensityFunction;

#[derive(Clone, Debug, PartialEq)]
pub struct SolveOptions {
    /// Sup-norm bound on the band-limited residual.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Step shrink factor during backtracking.
    pub backtrack: f64,
    pub min_step: f64,
    /// Iterates with `min h` below this are rejected.
    pub positivity_floor: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { tolerance: 1e-10, max_iterations: 50, backtrack: 0.5, min_step: 2f64.powi(-20), positivity_floor: 1e-8 }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        let ok = self.tolerance > 0.0
            && self.max_iterations > 0
            && self.backtrack > 0.0
            && self.backtrack < 1.0
            && self.min_step > 0.0
            && self.positivity_floor > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid solve options {self:?}")))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub residual_sup: f64,
    pub min_h: f64,
    pub min_eig_w: f64,
    /// Damping factor that produced this iterate (0 for the initial guess).
    pub step_size: f64,
}

#[derive(Clone, Debug, Default)]
pub struct SolveReport {
    pub records: Vec<IterationRecord>,
    /// Largest over smallest LU pivot magnitude of the last Newton system.
    pub pivot_ratio: f64,
}

impl SolveReport {
    pub fn iterations(&self) -> usize {
        self.records.last().map_or(0, |r| r.iter)
    }

    pub fn final_residual(&self) -> f64 {
        self.records.last().map_or(f64::INFINITY, |r| r.residual_sup)
    }

    /// CSV rows `iter,residual_sup,min_h,min_eig_W,step_size`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iter,residual_sup,min_h,min_eig_W,step_size\n");
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.iter,
                fmt_f64(r.residual_sup),
                fmt_f64(r.min_h),
                fmt_f64(r.min_eig_w),
                fmt_f64(r.step_size)
            );
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub h: SupportFunction,
    pub report: SolveReport,
}

fn check_grids(a: &SphericalGrid, b: &SphericalGrid) -> Result<()> {
    if a.bandwidth() != b.bandwidth() {
        return Err(Error::InvalidParameter(format!("grid mismatch: bandwidth {} vs {}", a.bandwidth(), b.bandwidth())));
    }
    Ok(())
}

/// `h det W` per node.
pub fn ma_operator(h: &SupportFunction) -> ScalarField {
    let vals = h.values().iter().zip(h.w()).map(|(v, w)| v * w.det()).collect();
    ScalarField::from_values(h.grid(), vals).expect("finite operator values")
}

/// Nodal `h det W - f`, including content above the grid band.
pub fn pointwise_residual(h: &SupportFunction, f: &DensityFunction) -> Result<ScalarField> {
    check_grids(h.grid(), f.grid())?;
    ma_operator(h).sub(f.field())
}

/// Band-limited part of `h det W - f`: the residual of the discrete equation.
/// Convexity is certified by the [`SupportFunction`] itself.
pub fn ma_residual(h: &SupportFunction, f: &DensityFunction) -> Result<ScalarField> {
    let raw = pointwise_residual(h, f)?;
    h.grid().project(&raw)
}

/// Derivative of `h det W` at `h` in direction `phi`:
/// `det(W) phi + h U^{ij} (phi_ij + phi delta_ij)` with `U` the cofactor matrix of `W`.
pub fn linearized_operator(h: &SupportFunction, phi: &ScalarField) -> Result<ScalarField> {
    check_grids(h.grid(), phi.grid())?;
    let hess = h.grid().covariant_hessian(phi)?;
    let vals = h
        .values()
        .iter()
        .zip(h.w())
        .zip(hess.iter().zip(phi.values()))
        .map(|((hv, w), (ph, p))| {
            let q = ph.shifted(*p);
            w.det() * p + hv * (w.pp * q.tt + w.tt * q.pp - 2.0 * w.tp * q.tp)
        })
        .collect();
    ScalarField::from_values(h.grid(), vals)
}

/// Default starting point `h0 = (mean f)^(1/3)`, exact for constant `f`.
pub fn default_initial_guess(f: &DensityFunction) -> Result<SupportFunction> {
    SupportFunction::constant(f.grid(), f.mean().cbrt())
}

/// Admissible iterate in coefficient space.
struct State {
    coeffs: DVector<f64>,
    h: DVector<f64>,
    w: Vec<FrameTensor>,
    residual: DVector<f64>,
    residual_sup: f64,
    min_h: f64,
    min_eig: f64,
}

enum Rejection {
    Positivity { node: usize, h: f64 },
    Convexity { node: usize, min_eig: f64, h: f64 },
}

impl Rejection {
    fn into_error(self) -> Error {
        match self {
            Rejection::Positivity { node, h } => Error::Convexity { node, min_eig: f64::NAN, h },
            Rejection::Convexity { node, min_eig, h } => Error::Convexity { node, min_eig, h },
        }
    }
}

struct NewtonSystem<'a> {
    grid: &'a Arc<SphericalGrid>,
    f: DVector<f64>,
    floor: f64,
}

impl NewtonSystem<'_> {
    fn evaluate(&self, coeffs: DVector<f64>) -> std::result::Result<State, Rejection> {
        let grid = self.grid;
        let h = grid.synth_matrix() * &coeffs;
        let w: Vec<FrameTensor> =
            grid.hessian_from_coeffs(coeffs.as_slice()).iter().zip(h.iter()).map(|(t, v)| t.shifted(*v)).collect();
        let mut min_h = f64::INFINITY;
        let mut min_eig = f64::INFINITY;
        for (i, (hv, wi)) in h.iter().zip(&w).enumerate() {
            if !(*hv >= self.floor) {
                return Err(Rejection::Positivity { node: i, h: *hv });
            }
            let e = wi.min_eig();
            if !(e > 0.0) {
                return Err(Rejection::Convexity { node: i, min_eig: e, h: *hv });
            }
            min_h = min_h.min(*hv);
            min_eig = min_eig.min(e);
        }
        let raw = DVector::from_iterator(h.len(), h.iter().zip(&w).zip(self.f.iter()).map(|((hv, wi), fv)| hv * wi.det() - fv));
        let residual = grid.analysis_matrix() * raw;
        let residual_sup = (grid.synth_matrix() * &residual).amax();
        Ok(State { coeffs, h, w, residual, residual_sup, min_h, min_eig })
    }

    /// Galerkin Jacobian `A J`, where `J` is the nodal linearization applied to the basis.
    fn jacobian(&self, s: &State) -> DMatrix<f64> {
        let grid = self.grid;
        let synth = grid.synth_matrix();
        let [mtt, mtp, mpp] = grid.hessian_matrices();
        let n = synth.nrows();
        let mut a = vec![0.0; n];
        let mut b = vec![0.0; n];
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        for i in 0..n {
            let (hv, w) = (s.h[i], s.w[i]);
            a[i] = w.det() + hv * (w.tt + w.pp);
            b[i] = hv * w.pp;
            c[i] = hv * w.tt;
            d[i] = -2.0 * hv * w.tp;
        }
        let mut j = DMatrix::zeros(n, synth.ncols());
        for col in 0..synth.ncols() {
            let (sc, tt, tp, pp) = (synth.column(col), mtt.column(col), mtp.column(col), mpp.column(col));
            let mut out = j.column_mut(col);
            for i in 0..n {
                out[i] = a[i] * sc[i] + b[i] * tt[i] + c[i] * pp[i] + d[i] * tp[i];
            }
        }
        grid.analysis_matrix() * j
    }
}

/// Damped Newton iteration for `h det(Hess h + h I) = f` from `h0`.
///
/// Each step solves the Galerkin-projected linear system, then halves the step
/// until the iterate keeps `h >= floor`, `W > 0`, and reduces the residual.
pub fn newton_solve(f: &DensityFunction, h0: &SupportFunction, opts: &SolveOptions) -> Result<Solution> {
    opts.validate()?;
    check_grids(f.grid(), h0.grid())?;
    let grid = f.grid();
    let system = NewtonSystem { grid, f: DVector::from_column_slice(f.values()), floor: opts.positivity_floor };
    let start = DVector::from_column_slice(grid.analyze(h0.field())?.as_slice());
    let mut state = system.evaluate(start).map_err(Rejection::into_error)?;
    let mut report = SolveReport::default();
    report.records.push(IterationRecord {
        iter: 0,
        residual_sup: state.residual_sup,
        min_h: state.min_h,
        min_eig_w: state.min_eig,
        step_size: 0.0,
    });

    for iter in 1..=opts.max_iterations {
        if state.residual_sup <= opts.tolerance {
            break;
        }
        let jac = system.jacobian(&state);
        let lu = jac.lu();
        let pivots = lu.u().diagonal().map(f64::abs);
        report.pivot_ratio = pivots.max() / pivots.min();
        let delta = lu.solve(&(-&state.residual)).ok_or(Error::Convergence { iterations: iter, residual: state.residual_sup })?;

        let mut t = 1.0;
        let mut last_rejection = None;
        let accepted = loop {
            match system.evaluate(&state.coeffs + &delta * t) {
                Ok(candidate) if candidate.residual_sup < state.residual_sup => break Some(candidate),
                Ok(_) => last_rejection = None,
                Err(r) => last_rejection = Some(r),
            }
            t *= opts.backtrack;
            if t < opts.min_step {
                break None;
            }
        };
        match accepted {
            Some(next) => state = next,
            None => {
                return Err(match last_rejection {
                    Some(r) => r.into_error(),
                    None => Error::Convergence { iterations: iter, residual: state.residual_sup },
                })
            }
        }
        report.records.push(IterationRecord {
            iter,
            residual_sup: state.residual_sup,
            min_h: state.min_h,
            min_eig_w: state.min_eig,
            step_size: t,
        });
    }
    if state.residual_sup > opts.tolerance {
        return Err(Error::Convergence { iterations: report.iterations(), residual: state.residual_sup });
    }
    let h = SupportFunction::new(ScalarField::from_values(grid, state.h.as_slice().to_vec())?)?;
    Ok(Solution { h, report })
}
