//! Normalized anisotropic Gauss curvature flow in support-function form.
//!
//! A body moving inward with normal speed `f(nu) K` has support function
//! obeying `dh/dt = -f / det W`. Volume normalization adds `lambda(t) h` with
//! `lambda = int f / (3 V(h))`, so that `dV/dt = 0` to first order; stationary
//! states satisfy `lambda h det W = f` and rescale to solutions of `h det W = f`.
//!
//! Degree-one content of the speed is a rigid translation. Near a stationary
//! state those modes grow like `e^t` (the origin drifts relative to the body),
//! so with `recenter` on the degree-one part of the speed is reflected and
//! tripled, which adds a translation velocity and leaves the set of stationary
//! states unchanged.

use std::fmt::Write as _;

use crate::density::DensityFunction;
use crate::error::{Error, Result};
use crate::fmt_f64;
use crate::solver::ma_operator;
use crate::sphere::{HarmonicCoeffs, ScalarField};
use crate::support::{volume_from_support, SupportFunction};

#[derive(Clone, Debug, PartialEq)]
pub struct FlowOptions {
    /// Initial time step.
    pub dt: f64,
    /// Grow `dt` towards the explicit stability limit after accepted steps.
    pub adaptive: bool,
    /// Stop when `||dh/dt||_inf / ||h||_inf` falls below this.
    pub stationarity_tol: f64,
    pub max_steps: usize,
    /// Volume renormalization (`lambda` term plus exact rescaling).
    pub renormalize: bool,
    /// Degree-one translation gauge (see module docs).
    pub recenter: bool,
    /// Step halvings allowed before a convexity loss is fatal.
    pub max_halvings: usize,
    /// Keep the body every `k` steps.
    pub snapshot_every: Option<usize>,
}

impl Default for FlowOptions {
    fn default() -> Self {
        FlowOptions {
            dt: 1e-3,
            adaptive: true,
            stationarity_tol: 1e-9,
            max_steps: 100_000,
            renormalize: true,
            recenter: true,
            max_halvings: 30,
            snapshot_every: None,
        }
    }
}

impl FlowOptions {
    fn validate(&self) -> Result<()> {
        if self.dt > 0.0 && self.stationarity_tol > 0.0 && self.max_steps > 0 && self.snapshot_every != Some(0) {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid flow options {self:?}")))
        }
    }
}

/// Velocity field of the flow at `h`.
#[derive(Clone, Debug)]
pub struct FlowSpeed {
    /// Band-limited `dh/dt` coefficients.
    pub coeffs: HarmonicCoeffs,
    pub lambda: f64,
    pub sup: f64,
    /// Explicit Euler stability bound for this state.
    pub dt_stable: f64,
}

pub fn flow_speed(h: &SupportFunction, f: &DensityFunction, opts: &FlowOptions) -> Result<FlowSpeed> {
    let grid = h.grid();
    if grid.bandwidth() != f.grid().bandwidth() {
        return Err(Error::InvalidParameter("grid mismatch between h and f".into()));
    }
    let lambda = if opts.renormalize { f.total() / (3.0 * volume_from_support(h)) } else { 0.0 };
    let mut stiffness: f64 = 0.0;
    let raw: Vec<f64> = h
        .values()
        .iter()
        .zip(h.w())
        .zip(f.values())
        .map(|((hv, w), fv)| {
            let det = w.det();
            let max_eig = w.trace() - w.min_eig();
            stiffness = stiffness.max(fv * max_eig / (det * det));
            -fv / det + lambda * hv
        })
        .collect();
    let mut coeffs = grid.analyze(&ScalarField::from_values(grid, raw)?)?;
    if opts.recenter {
        for m in -1..=1 {
            let v = coeffs.get(1, m);
            coeffs.set(1, m, -3.0 * v);
        }
    }
    let sup = grid.synthesize(&coeffs)?.sup_norm();
    let lmax = grid.max_degree() as f64;
    let dt_stable = 1.8 / (stiffness * lmax * (lmax + 1.0)).max(f64::MIN_POSITIVE);
    Ok(FlowSpeed { coeffs, lambda, sup, dt_stable })
}

#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub h: SupportFunction,
    pub lambda: f64,
    /// Time step actually taken after halvings.
    pub dt: f64,
}

/// One explicit Euler step `h + dt * speed`, projected to the grid band,
/// renormalized to the starting volume, and re-certified; `dt` is halved on
/// loss of admissibility.
pub fn flow_step(h: &SupportFunction, f: &DensityFunction, dt: f64, opts: &FlowOptions) -> Result<StepOutcome> {
    let speed = flow_speed(h, f, opts)?;
    step_with(h, &speed, dt, opts, 0.0)
}

fn step_with(h: &SupportFunction, speed: &FlowSpeed, dt: f64, opts: &FlowOptions, t: f64) -> Result<StepOutcome> {
    let grid = h.grid();
    let base = grid.analyze(h.field())?;
    let v0 = volume_from_support(h);
    let mut dt = dt;
    let mut last_err = None;
    for _ in 0..=opts.max_halvings {
        let next: Vec<f64> = base.as_slice().iter().zip(speed.coeffs.as_slice()).map(|(c, s)| c + dt * s).collect();
        let field = grid.synthesize(&HarmonicCoeffs::from_vec(grid.bandwidth(), next)?)?;
        match SupportFunction::new(field) {
            Ok(cand) => {
                if !opts.renormalize {
                    return Ok(StepOutcome { h: cand, lambda: speed.lambda, dt });
                }
                let s = (v0 / volume_from_support(&cand)).cbrt();
                let h = SupportFunction::new(cand.field().scaled(s))?;
                return Ok(StepOutcome { h, lambda: speed.lambda, dt });
            }
            Err(e) => last_err = Some(e),
        }
        dt *= 0.5;
    }
    Err(Error::StepFailure { t, reason: format!("{} after {} halvings", last_err.expect("at least one attempt"), opts.max_halvings) })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectoryRecord {
    pub t: f64,
    pub volume: f64,
    /// Sup of the band-limited `lambda h det W - f` (`lambda = 1` without renormalization).
    pub residual_sup: f64,
    pub min_h: f64,
}

#[derive(Clone, Debug, Default)]
pub struct Trajectory {
    pub records: Vec<TrajectoryRecord>,
    pub snapshots: Vec<(usize, SupportFunction)>,
}

impl Trajectory {
    /// CSV rows `t,volume,residual_sup,min_h`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,volume,residual_sup,min_h\n");
        for r in &self.records {
            let _ = writeln!(out, "{},{},{},{}", fmt_f64(r.t), fmt_f64(r.volume), fmt_f64(r.residual_sup), fmt_f64(r.min_h));
        }
        out
    }
}

fn record(t: f64, h: &SupportFunction, f: &DensityFunction, lambda: f64) -> Result<TrajectoryRecord> {
    let residual = ma_operator(h).scaled(lambda).sub(f.field())?;
    Ok(TrajectoryRecord {
        t,
        volume: volume_from_support(h),
        residual_sup: h.grid().project(&residual)?.sup_norm(),
        min_h: h.field().min(),
    })
}

/// Result of [`run_flow`].
#[derive(Clone, Debug)]
pub struct FlowResult {
    /// Stationary state rescaled to solve `h det W = f`.
    pub h: SupportFunction,
    /// Stationary state before rescaling; it solves `h det W = c f`.
    pub stationary: SupportFunction,
    /// The constant `c = 1 / lambda`.
    pub scale: f64,
    pub steps: usize,
    pub t: f64,
    pub trajectory: Trajectory,
}

/// Runs the normalized flow from `h0` until stationary, then rescales the
/// stationary body by `lambda^(1/3)` so that it solves `h det W = f`.
pub fn run_flow(f: &DensityFunction, h0: &SupportFunction, opts: &FlowOptions) -> Result<FlowResult> {
    opts.validate()?;
    if !opts.renormalize {
        return Err(Error::InvalidParameter("stationary states need volume renormalization".into()));
    }
    let mut h = h0.clone();
    let mut t = 0.0;
    let mut dt = opts.dt;
    let mut traj = Trajectory::default();
    let mut speed = flow_speed(&h, f, opts)?;
    traj.records.push(record(t, &h, f, speed.lambda)?);

    for step in 1..=opts.max_steps {
        if speed.sup <= opts.stationarity_tol * h.field().sup_norm() {
            let scale = 1.0 / speed.lambda;
            let rescaled = SupportFunction::new(h.field().scaled(speed.lambda.cbrt()))?;
            return Ok(FlowResult { h: rescaled, stationary: h, scale, steps: step - 1, t, trajectory: traj });
        }
        if opts.adaptive {
            dt = (dt * 1.25).min(speed.dt_stable);
        }
        let out = step_with(&h, &speed, dt, opts, t)?;
        let next_speed = flow_speed(&out.h, f, opts)?;
        if opts.adaptive && next_speed.sup > 1.5 * speed.sup && out.dt > 1e-12 {
            // explicit instability: retry with a smaller step
            dt = 0.5 * out.dt;
            continue;
        }
        t += out.dt;
        dt = out.dt;
        h = out.h;
        speed = next_speed;
        traj.records.push(record(t, &h, f, speed.lambda)?);
        if let Some(k) = opts.snapshot_every {
            if step % k == 0 {
                traj.snapshots.push((step, h.clone()));
            }
        }
    }
    Err(Error::Convergence { iterations: opts.max_steps, residual: speed.sup })
}

/// Integrates the flow over `[0, t_end]` with fixed steps of `opts.dt`.
pub fn evolve(f: &DensityFunction, h0: &SupportFunction, t_end: f64, opts: &FlowOptions) -> Result<(SupportFunction, Trajectory)> {
    opts.validate()?;
    let mut h = h0.clone();
    let mut t = 0.0;
    let mut traj = Trajectory::default();
    let lam = |s: &FlowSpeed| if opts.renormalize { s.lambda } else { 1.0 };
    let mut speed = flow_speed(&h, f, opts)?;
    traj.records.push(record(t, &h, f, lam(&speed))?);
    let mut step = 0;
    while t < t_end - 1e-12 * t_end.max(1.0) {
        let dt = opts.dt.min(t_end - t);
        let out = step_with(&h, &speed, dt, opts, t)?;
        t += out.dt;
        h = out.h;
        step += 1;
        speed = flow_speed(&h, f, opts)?;
        traj.records.push(record(t, &h, f, lam(&speed))?);
        if let Some(k) = opts.snapshot_every {
            if step % k == 0 {
                traj.snapshots.push((step, h.clone()));
            }
        }
    }
    Ok((h, traj))
}

/// Radius of a round sphere after time `t` of unnormalized flow with `f = 1`.
pub fn round_sphere_radius(r0: f64, t: f64) -> f64 {
    (r0.powi(3) - 3.0 * t).cbrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::gen_density;
    use crate::solver::{default_initial_guess, ma_residual, newton_solve, SolveOptions};
    use crate::sphere::SphericalGrid;
    use crate::support::hausdorff_distance;
    use std::sync::Arc;

    fn grid() -> Arc<SphericalGrid> {
        SphericalGrid::build(16).unwrap()
    }

    #[test]
    fn unit_sphere_is_stationary() {
        let g = grid();
        let h = SupportFunction::constant(&g, 1.0).unwrap();
        let f = DensityFunction::constant(&g, 1.0).unwrap();
        let out = flow_step(&h, &f, 1e-3, &FlowOptions::default()).unwrap();
        assert!((out.lambda - 1.0).abs() < 1e-12);
        assert!(out.h.field().max_abs_diff(h.field()).unwrap() < 1e-12);
    }

    #[test]
    fn round_sphere_speed_without_renormalization() {
        let g = grid();
        let h = SupportFunction::constant(&g, 2.0).unwrap();
        let f = DensityFunction::constant(&g, 1.0).unwrap();
        let opts = FlowOptions { renormalize: false, ..FlowOptions::default() };
        let dt = 1e-3;
        let out = flow_step(&h, &f, dt, &opts).unwrap();
        let rate = out.h.field().sub(h.field()).unwrap().scaled(1.0 / dt);
        assert!(rate.values().iter().all(|v| (v + 0.25).abs() < 1e-10));
    }

    #[test]
    fn translated_ball_is_stationary() {
        let g = grid();
        let h = SupportFunction::new(ScalarField::from_fn(&g, |u| 1.0 + 0.1 * u.z)).unwrap();
        let f = DensityFunction::from_terms(&g, &[(1, 0, 0.1)]).unwrap();
        let speed = flow_speed(&h, &f, &FlowOptions::default()).unwrap();
        assert!(speed.sup < 1e-9, "{}", speed.sup);
    }

    #[test]
    fn run_flow_constant_density() {
        let g = grid();
        let f = DensityFunction::constant(&g, 1.0).unwrap();
        let res = run_flow(&f, &SupportFunction::constant(&g, 1.5).unwrap(), &FlowOptions::default()).unwrap();
        assert!(res.h.values().iter().all(|v| (v - 1.0).abs() < 1e-7));
        let f8 = DensityFunction::constant(&g, 8.0).unwrap();
        let res = run_flow(&f8, &SupportFunction::constant(&g, 1.0).unwrap(), &FlowOptions::default()).unwrap();
        assert!(res.h.values().iter().all(|v| (v - 2.0).abs() < 1e-7));
    }

    #[test]
    fn run_flow_finds_translated_ball() {
        let g = grid();
        let f = DensityFunction::from_terms(&g, &[(1, 0, 0.1)]).unwrap();
        let res = run_flow(&f, &SupportFunction::constant(&g, 1.0).unwrap(), &FlowOptions::default()).unwrap();
        let exact = ScalarField::from_fn(&g, |u| 1.0 + 0.1 * u.z);
        assert!(res.h.field().max_abs_diff(&exact).unwrap() < 1e-6);
        assert!(ma_residual(&res.h, &f).unwrap().sup_norm() <= 1e-7);
    }

    #[test]
    fn volume_is_preserved() {
        let g = grid();
        let f = gen_density(2, 0.05, 2.0, &g).unwrap();
        let h0 = SupportFunction::constant(&g, 1.2).unwrap();
        let res = run_flow(&f, &h0, &FlowOptions::default()).unwrap();
        let v0 = volume_from_support(&h0);
        for r in &res.trajectory.records {
            assert!((r.volume - v0).abs() <= 1e-6 * v0);
        }
        assert!((res.scale * f.total() / 3.0 - v0).abs() <= 1e-6 * v0);
    }

    #[test]
    fn agrees_with_newton() {
        let g = grid();
        let f = gen_density(4, 0.05, 2.0, &g).unwrap();
        let h0 = default_initial_guess(&f).unwrap();
        let flow = run_flow(&f, &h0, &FlowOptions::default()).unwrap();
        let newton = newton_solve(&f, &h0, &SolveOptions::default()).unwrap();
        let d = hausdorff_distance(flow.h.field(), newton.h.field()).unwrap();
        assert!(d < 1e-6, "{d:e}");
        assert!(ma_residual(&flow.h, &f).unwrap().sup_norm() <= 1e-7);
    }

    #[test]
    fn shrinking_law() {
        let g = SphericalGrid::build(8).unwrap();
        let f = DensityFunction::constant(&g, 1.0).unwrap();
        let opts = FlowOptions { dt: 1e-4, adaptive: false, renormalize: false, ..FlowOptions::default() };
        let (h, traj) = evolve(&f, &SupportFunction::constant(&g, 1.0).unwrap(), 0.25, &opts).unwrap();
        let r = h.values()[0];
        assert!((r.powi(3) - (1.0 - 0.75)).abs() < 1e-3);
        assert!((r - round_sphere_radius(1.0, 0.25)).abs() < 1e-3);
        assert_eq!(traj.records.len(), 2501);
    }

    #[test]
    fn trajectory_csv() {
        let g = grid();
        let f = DensityFunction::constant(&g, 1.0).unwrap();
        let (_, traj) = evolve(&f, &SupportFunction::constant(&g, 1.0).unwrap(), 0.01, &FlowOptions::default()).unwrap();
        let csv = traj.to_csv();
        assert!(csv.starts_with("t,volume,residual_sup,min_h\n"));
        assert_eq!(csv.lines().count(), traj.records.len() + 1);
    }

    #[test]
    fn rejects_unnormalized_stationary_search() {
        let g = grid();
        let f = DensityFunction::constant(&g, 1.0).unwrap();
        let opts = FlowOptions { renormalize: false, ..FlowOptions::default() };
        assert!(run_flow(&f, &SupportFunction::constant(&g, 1.0).unwrap(), &opts).is_err());
    }
}
