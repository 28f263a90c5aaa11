use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use logmink_core::convex::{blowdown_diagnostics, cone_volume_measure, enclosing_ellipsoid, surface_area_measure};
use logmink_core::experiments::{run_experiment, ExperimentSpec, SuiteKind};
use logmink_core::flow::{run_flow, FlowOptions};
use logmink_core::io::write_atomic;
use logmink_core::solver::{default_initial_guess, ma_residual, newton_solve, SolveOptions};
use logmink_core::support::volume_from_support;
use logmink_core::{fmt_f64, DensityFunction, Polytope, SphericalGrid};

use crate::{CliError, Config};

/// Residual bound met by the rescaled stationary point of the flow.
pub const FLOW_TOLERANCE: f64 = 1e-7;

#[derive(Clone, Debug, PartialEq)]
pub struct CmdOutput {
    /// Whether the run met its tolerance or caps (exit code 0).
    pub ok: bool,
    pub summary: String,
    pub artifacts: Vec<PathBuf>,
}

struct Artifacts {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Artifacts {
    fn new(cfg: &Config) -> Result<Artifacts, CliError> {
        let dir = cfg.out_dir();
        std::fs::create_dir_all(&dir).map_err(logmink_core::Error::from)?;
        Ok(Artifacts { dir, written: Vec::new() })
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        write_atomic(&path, contents.as_bytes())?;
        self.written.push(path);
        Ok(())
    }
}

fn density(cfg: &Config) -> Result<(Arc<SphericalGrid>, DensityFunction), CliError> {
    let spec = cfg.density.as_ref().ok_or_else(|| CliError::Config("missing density (--f)".into()))?;
    let grid = SphericalGrid::build(cfg.bandwidth())?;
    let f = spec.build(&grid)?;
    Ok((grid, f))
}

fn solve_options(cfg: &Config) -> SolveOptions {
    let d = SolveOptions::default();
    SolveOptions { tolerance: cfg.tol.unwrap_or(d.tolerance), max_iterations: cfg.max_iter.unwrap_or(d.max_iterations), ..d }
}

fn load_polytope(cfg: &Config) -> Result<Polytope, CliError> {
    let path: &Path = cfg.obj.as_deref().ok_or_else(|| CliError::Config("missing input polytope (--obj)".into()))?;
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    Polytope::from_obj(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Newton solve of `h det W = f`. Writes `solution.csv`, `solve_report.csv`
/// and, with `write_obj`, `body.obj`.
pub fn cmd_solve(cfg: &Config) -> Result<CmdOutput, CliError> {
    cfg.validate()?;
    let (_, f) = density(cfg)?;
    let opts = solve_options(cfg);
    let sol = newton_solve(&f, &default_initial_guess(&f)?, &opts)?;
    let mut art = Artifacts::new(cfg)?;
    art.write("solution.csv", &sol.h.field().to_csv())?;
    art.write("solve_report.csv", &sol.report.to_csv())?;
    if cfg.write_obj.unwrap_or(false) {
        art.write("body.obj", &sol.h.to_polytope()?.to_obj())?;
    }
    let residual = sol.report.final_residual();
    let summary = format!(
        "density {}\niterations {}\nresidual_sup {}\nmin_h {}\nmax_h {}\nvolume {}",
        f.descriptor(),
        sol.report.iterations(),
        fmt_f64(residual),
        fmt_f64(sol.h.field().min()),
        fmt_f64(sol.h.field().max()),
        fmt_f64(volume_from_support(&sol.h))
    );
    Ok(CmdOutput { ok: residual <= opts.tolerance, summary, artifacts: art.written })
}

/// Normalized Gauss curvature flow to a stationary point. Writes
/// `flow_solution.csv`, `trajectory.csv` and `snapshot_<step>.obj` files.
pub fn cmd_flow(cfg: &Config) -> Result<CmdOutput, CliError> {
    cfg.validate()?;
    let (_, f) = density(cfg)?;
    let d = FlowOptions::default();
    let opts = FlowOptions {
        dt: cfg.dt.unwrap_or(d.dt),
        max_steps: cfg.max_steps.unwrap_or(d.max_steps),
        snapshot_every: cfg.snapshot_every,
        ..d
    };
    let res = run_flow(&f, &default_initial_guess(&f)?, &opts)?;
    let mut art = Artifacts::new(cfg)?;
    art.write("flow_solution.csv", &res.h.field().to_csv())?;
    art.write("trajectory.csv", &res.trajectory.to_csv())?;
    for (step, h) in &res.trajectory.snapshots {
        art.write(&format!("snapshot_{step:06}.obj"), &h.to_polytope()?.to_obj())?;
    }
    let residual = ma_residual(&res.h, &f)?.sup_norm();
    let summary = format!(
        "density {}\nsteps {}\nt {}\nscale {}\nresidual_sup {}\nmin_h {}\nmax_h {}",
        f.descriptor(),
        res.steps,
        fmt_f64(res.t),
        fmt_f64(res.scale),
        fmt_f64(residual),
        fmt_f64(res.h.field().min()),
        fmt_f64(res.h.field().max())
    );
    Ok(CmdOutput { ok: residual <= FLOW_TOLERANCE, summary, artifacts: art.written })
}

/// Cone-volume and surface-area measures of a polytope. Writes
/// `cone_volume.csv` and `surface_area.csv`.
pub fn cmd_measure(cfg: &Config) -> Result<CmdOutput, CliError> {
    cfg.validate()?;
    let p = load_polytope(cfg)?;
    let cone = cone_volume_measure(&p)?;
    let area = surface_area_measure(&p);
    let mut art = Artifacts::new(cfg)?;
    art.write("cone_volume.csv", &cone.to_csv())?;
    art.write("surface_area.csv", &area.to_csv())?;
    let summary = format!(
        "facets {}\nvolume {}\ncone_volume_total {}\nsurface_area {}",
        p.facets().len(),
        fmt_f64(p.volume()),
        fmt_f64(cone.total_mass()),
        fmt_f64(area.total_mass())
    );
    Ok(CmdOutput { ok: true, summary, artifacts: art.written })
}

/// Minimum-volume enclosing ellipsoid of a polytope. Writes `ellipsoid.csv`
/// with rows `center` and `axis1..3` (ascending radii).
pub fn cmd_john(cfg: &Config) -> Result<CmdOutput, CliError> {
    cfg.validate()?;
    let p = load_polytope(cfg)?;
    let e = enclosing_ellipsoid(&p)?;
    let mut csv = String::from("component,x,y,z,radius\n");
    let c = e.center;
    let _ = writeln!(csv, "center,{},{},{},", fmt_f64(c.x), fmt_f64(c.y), fmt_f64(c.z));
    for (k, (a, r)) in e.axes.iter().zip(e.radii).enumerate() {
        let _ = writeln!(csv, "axis{},{},{},{},{}", k + 1, fmt_f64(a.x), fmt_f64(a.y), fmt_f64(a.z), fmt_f64(r));
    }
    let mut art = Artifacts::new(cfg)?;
    art.write("ellipsoid.csv", &csv)?;
    let summary = format!(
        "radii {} {} {}\ncenter {} {} {}\nvolume {}",
        fmt_f64(e.radii[0]),
        fmt_f64(e.radii[1]),
        fmt_f64(e.radii[2]),
        fmt_f64(c.x),
        fmt_f64(c.y),
        fmt_f64(c.z),
        fmt_f64(e.volume())
    );
    Ok(CmdOutput { ok: true, summary, artifacts: art.written })
}

/// Blow-down diagnostics of a polytope (`--obj`) or of the solution for a
/// density (`--f`). Writes `diagnostics.csv`.
pub fn cmd_diag(cfg: &Config) -> Result<CmdOutput, CliError> {
    cfg.validate()?;
    let (source, p) = if cfg.obj.is_some() {
        ("obj".to_string(), load_polytope(cfg)?)
    } else {
        let (_, f) = density(cfg)?;
        let sol = newton_solve(&f, &default_initial_guess(&f)?, &solve_options(cfg))?;
        (f.descriptor().to_string(), sol.h.to_polytope()?)
    };
    let d = blowdown_diagnostics(&p)?;
    let row = format!(
        "{},{},{},{}",
        fmt_f64(d.ratio_32),
        fmt_f64(d.ratio_21),
        fmt_f64(d.axis_dist_ratio),
        fmt_f64(d.plane_dist_ratio)
    );
    let mut art = Artifacts::new(cfg)?;
    art.write("diagnostics.csv", &format!("ratio_32,ratio_21,axis_dist_ratio,plane_dist_ratio\n{row}\n"))?;
    Ok(CmdOutput { ok: true, summary: format!("source {source}\nratio_32,ratio_21,axis_dist_ratio,plane_dist_ratio\n{row}"), artifacts: art.written })
}

/// Runs an experiment suite. Writes `experiment_<kind>.csv`; succeeds iff
/// every solve converged and the suite cap holds.
pub fn cmd_experiment(cfg: &Config) -> Result<CmdOutput, CliError> {
    cfg.validate()?;
    let kind = cfg.kind.unwrap_or(SuiteKind::Uniqueness);
    let d = ExperimentSpec::new(kind);
    let spec = ExperimentSpec {
        kind,
        samples: cfg.samples.unwrap_or(d.samples),
        seed: cfg.seed.unwrap_or(d.seed),
        eps: cfg.eps.unwrap_or(d.eps),
        lambda: cfg.lambda.unwrap_or(d.lambda),
        bandwidth: cfg.bandwidth(),
        inits: cfg.inits.clone().unwrap_or(d.inits),
        tol: cfg.tol.unwrap_or(d.tol),
    };
    let rep = run_experiment(&spec)?;
    let mut art = Artifacts::new(cfg)?;
    art.write(&format!("experiment_{kind}.csv"), &rep.to_csv())?;
    let a = rep.aggregate;
    let summary = format!(
        "spec {spec}\nmax_pairwise {}\nmax_sup_h {}\nmin_min_h {}\nmax_residual {}\nmax_ratio_32 {}\nmax_ratio_21 {}\nfailures {}",
        fmt_f64(a.max_pairwise),
        fmt_f64(a.max_sup_h),
        fmt_f64(a.min_min_h),
        fmt_f64(a.max_residual),
        fmt_f64(a.max_ratio_32),
        fmt_f64(a.max_ratio_21),
        a.failures
    );
    Ok(CmdOutput { ok: rep.within_caps(), summary, artifacts: art.written })
}
