//! Seeded experiment harnesses: uniqueness across initializations, empirical
//! sup-norm bounds, and blow-down diagnostics of solutions.
//!
//! Sample `i` of a suite uses the density `gen_density(seed + i, eps, lambda, L)`.
//! Samples run in parallel but each is sequential and fully determined by its
//! index, so reports are byte-identical across runs.

use std::fmt::{self, Write as _};
use std::str::FromStr;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::convex::{blowdown_diagnostics, BlowdownDiagnostics};
use crate::density::{random_harmonic, DensityFunction};
use crate::error::{Error, Result};
use crate::flow::{run_flow, FlowOptions};
use crate::fmt_f64;
use crate::solver::{ma_residual, newton_solve, SolveOptions};
use crate::sphere::{ScalarField, SphericalGrid};
use crate::support::{hausdorff_distance, volume_from_support, SupportFunction};

pub use crate::density::gen_density;

/// Empirical cap on `ratio_32` and `ratio_21` for the diagnostics suite at `lambda = 2`.
pub const DIAGNOSTIC_RATIO_CAP: f64 = 3.0;
/// Empirical cap on `||h||_inf` for the bound suite at `lambda = 2`.
pub const BOUND_CAP: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SuiteKind {
    Uniqueness,
    Bound,
    Diagnostics,
}

impl fmt::Display for SuiteKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SuiteKind::Uniqueness => "uniqueness",
            SuiteKind::Bound => "bound",
            SuiteKind::Diagnostics => "diagnostics",
        })
    }
}

impl FromStr for SuiteKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<SuiteKind> {
        match s.trim() {
            "uniqueness" => Ok(SuiteKind::Uniqueness),
            "bound" => Ok(SuiteKind::Bound),
            "diagnostics" => Ok(SuiteKind::Diagnostics),
            other => Err(Error::Parse(format!("unknown suite kind {other:?}"))),
        }
    }
}

/// How a Newton solve is started.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InitStrategy {
    /// `h0 = (c * mean f)^(1/3)`.
    Constant(f64),
    /// The `Constant(1)` guess plus a seeded degree 1..4 harmonic of relative size `amp`.
    Perturbed(f64),
    /// Newton started from the rescaled stationary point of the flow.
    Flow,
}

impl InitStrategy {
    pub fn defaults_for(kind: SuiteKind) -> Vec<InitStrategy> {
        match kind {
            SuiteKind::Uniqueness => vec![
                InitStrategy::Constant(0.7),
                InitStrategy::Constant(1.0),
                InitStrategy::Constant(1.4),
                InitStrategy::Perturbed(0.02),
                InitStrategy::Flow,
            ],
            SuiteKind::Bound | SuiteKind::Diagnostics => vec![InitStrategy::Constant(1.0)],
        }
    }
}

impl fmt::Display for InitStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitStrategy::Constant(c) => write!(f, "const:{}", fmt_f64(*c)),
            InitStrategy::Perturbed(a) => write!(f, "perturb:{}", fmt_f64(*a)),
            InitStrategy::Flow => f.write_str("flow"),
        }
    }
}

impl FromStr for InitStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<InitStrategy> {
        let s = s.trim();
        let bad = || Error::Parse(format!("init strategy {s:?}: expected const:c, perturb:amp or flow"));
        if s == "flow" {
            return Ok(InitStrategy::Flow);
        }
        let (kind, val) = s.split_once(':').ok_or_else(bad)?;
        let v: f64 = val.trim().parse().map_err(|_| bad())?;
        let init = match kind.trim() {
            "const" => InitStrategy::Constant(v),
            "perturb" => InitStrategy::Perturbed(v),
            _ => return Err(bad()),
        };
        match init {
            InitStrategy::Constant(c) if !(c > 0.0 && c.is_finite()) => Err(bad()),
            InitStrategy::Perturbed(a) if !(a >= 0.0 && a.is_finite()) => Err(bad()),
            _ => Ok(init),
        }
    }
}

pub fn parse_inits(s: &str) -> Result<Vec<InitStrategy>> {
    s.split(';').filter(|t| !t.trim().is_empty()).map(str::parse).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub kind: SuiteKind,
    pub samples: usize,
    pub seed: u64,
    pub eps: f64,
    pub lambda: f64,
    pub bandwidth: usize,
    pub inits: Vec<InitStrategy>,
    /// Newton tolerance on the band-limited residual.
    pub tol: f64,
}

impl ExperimentSpec {
    /// Suite defaults: 20 samples at `eps = 0.05` for uniqueness; 50 samples
    /// for the bound suite and 20 for diagnostics at `eps = 0.95`, which the
    /// generator shrinks until `1/lambda < f < lambda`. All use `lambda = 2`
    /// and `L = 16`.
    pub fn new(kind: SuiteKind) -> ExperimentSpec {
        let (samples, eps) = match kind {
            SuiteKind::Uniqueness => (20, 0.05),
            SuiteKind::Bound => (50, 0.95),
            SuiteKind::Diagnostics => (20, 0.95),
        };
        ExperimentSpec {
            kind,
            samples,
            seed: 0,
            eps,
            lambda: 2.0,
            bandwidth: crate::sphere::DEFAULT_BANDWIDTH,
            inits: InitStrategy::defaults_for(kind),
            tol: SolveOptions::default().tolerance,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::InvalidParameter(m));
        if !(self.eps >= 0.0 && self.eps.is_finite()) {
            return err(format!("eps must be nonnegative, got {}", self.eps));
        }
        if !(self.lambda > 1.0 && self.lambda.is_finite()) {
            return err(format!("lambda must exceed 1, got {}", self.lambda));
        }
        if self.samples == 0 || self.inits.is_empty() {
            return err("need at least one sample and one init strategy".into());
        }
        if !(self.tol > 0.0) {
            return err(format!("tolerance must be positive, got {}", self.tol));
        }
        Ok(())
    }
}

impl fmt::Display for ExperimentSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let inits: Vec<String> = self.inits.iter().map(ToString::to_string).collect();
        write!(
            f,
            "kind={} samples={} seed={} eps={} lambda={} bandwidth={} inits={} tol={}",
            self.kind,
            self.samples,
            self.seed,
            fmt_f64(self.eps),
            fmt_f64(self.lambda),
            self.bandwidth,
            inits.join(";"),
            fmt_f64(self.tol)
        )
    }
}

/// Outcome of solving one density from every init strategy.
#[derive(Clone, Debug)]
pub struct SampleRecord {
    pub index: usize,
    pub descriptor: String,
    pub holder_proxy: f64,
    /// Converged solutions, in init-strategy order.
    pub solutions: Vec<SupportFunction>,
    /// `(init, message)` per failed solve.
    pub failures: Vec<(String, String)>,
    pub max_pairwise: f64,
    /// Largest `ma_residual` sup-norm, recomputed from the stored solutions.
    pub max_residual: f64,
    pub max_iterations: usize,
    pub sup_h: f64,
    pub min_h: f64,
    /// Largest `|V(h) - int f / 3| / (int f / 3)`.
    pub volume_rel_err: f64,
    /// Hausdorff distance between the flow's stationary point and the final solution.
    pub flow_gap: Option<f64>,
    pub diagnostics: Option<BlowdownDiagnostics>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aggregate {
    pub max_pairwise: f64,
    pub max_sup_h: f64,
    pub min_min_h: f64,
    pub max_residual: f64,
    pub max_volume_rel_err: f64,
    pub max_flow_gap: f64,
    pub max_ratio_32: f64,
    pub max_ratio_21: f64,
    /// Number of failed solves over all samples.
    pub failures: usize,
}

impl Aggregate {
    pub fn from_records(records: &[SampleRecord]) -> Aggregate {
        let max = |g: &dyn Fn(&SampleRecord) -> f64| records.iter().map(g).fold(0.0, f64::max);
        Aggregate {
            max_pairwise: max(&|r| r.max_pairwise),
            max_sup_h: max(&|r| r.sup_h),
            min_min_h: records.iter().map(|r| r.min_h).fold(f64::INFINITY, f64::min),
            max_residual: max(&|r| r.max_residual),
            max_volume_rel_err: max(&|r| r.volume_rel_err),
            max_flow_gap: max(&|r| r.flow_gap.unwrap_or(0.0)),
            max_ratio_32: max(&|r| r.diagnostics.map_or(0.0, |d| d.ratio_32)),
            max_ratio_21: max(&|r| r.diagnostics.map_or(0.0, |d| d.ratio_21)),
            failures: records.iter().map(|r| r.failures.len()).sum(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentReport {
    pub spec: ExperimentSpec,
    pub records: Vec<SampleRecord>,
    pub aggregate: Aggregate,
}

const CSV_HEADER: &str = "sample,density,holder_proxy,solves,failures,max_pairwise,max_residual,max_iterations,sup_h,min_h,volume_rel_err,flow_gap,ratio_32,ratio_21,axis_dist_ratio,plane_dist_ratio";

impl ExperimentReport {
    /// Suite-specific caps: all solves converged, plus the distance, bound or
    /// ratio cap of the suite.
    pub fn within_caps(&self) -> bool {
        let a = &self.aggregate;
        a.failures == 0
            && match self.spec.kind {
                SuiteKind::Uniqueness => a.max_pairwise <= 1e-6,
                SuiteKind::Bound => a.max_sup_h <= BOUND_CAP,
                SuiteKind::Diagnostics => a.max_ratio_32 <= DIAGNOSTIC_RATIO_CAP && a.max_ratio_21 <= DIAGNOSTIC_RATIO_CAP,
            }
    }

    /// One row per sample after a `# spec:` line and the header; the aggregate
    /// closes the file as a comment.
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
        let mut out = format!("# spec: {}\n{CSV_HEADER}\n", self.spec);
        for r in &self.records {
            let d = r.diagnostics;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.index,
                csv_quote(&r.descriptor),
                fmt_f64(r.holder_proxy),
                r.solutions.len(),
                r.failures.len(),
                fmt_f64(r.max_pairwise),
                fmt_f64(r.max_residual),
                r.max_iterations,
                fmt_f64(r.sup_h),
                fmt_f64(r.min_h),
                fmt_f64(r.volume_rel_err),
                opt(r.flow_gap),
                opt(d.map(|d| d.ratio_32)),
                opt(d.map(|d| d.ratio_21)),
                opt(d.map(|d| d.axis_dist_ratio)),
                opt(d.map(|d| d.plane_dist_ratio)),
            );
        }
        let a = &self.aggregate;
        let _ = writeln!(
            out,
            "# aggregate: max_pairwise={} max_sup_h={} min_min_h={} max_residual={} max_volume_rel_err={} max_flow_gap={} max_ratio_32={} max_ratio_21={} failures={}",
            fmt_f64(a.max_pairwise),
            fmt_f64(a.max_sup_h),
            fmt_f64(a.min_min_h),
            fmt_f64(a.max_residual),
            fmt_f64(a.max_volume_rel_err),
            fmt_f64(a.max_flow_gap),
            fmt_f64(a.max_ratio_32),
            fmt_f64(a.max_ratio_21),
            a.failures
        );
        out
    }
}

/// Quotes a CSV field that contains a comma or quote.
fn csv_quote(s: &str) -> String {
    if s.contains([',', '"']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn initial_guess(f: &DensityFunction, c: f64) -> Result<SupportFunction> {
    SupportFunction::constant(f.grid(), (c * f.mean()).cbrt())
}

/// Constant guess plus a random harmonic; the amplitude is halved until the
/// guess is admissible.
fn perturbed_guess(f: &DensityFunction, amp: f64, seed: u64) -> Result<SupportFunction> {
    let grid = f.grid();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = grid.synthesize(&random_harmonic(&mut rng, grid, 1, 4)?)?;
    let base = f.mean().cbrt();
    let mut a = amp;
    for _ in 0..30 {
        if let Ok(h) = SupportFunction::new(ScalarField::constant(grid, base).axpy(a * base, &g)?) {
            return Ok(h);
        }
        a *= 0.5;
    }
    initial_guess(f, 1.0)
}

struct Solved {
    h: SupportFunction,
    iterations: usize,
    flow_gap: Option<f64>,
}

fn solve_from(f: &DensityFunction, init: InitStrategy, seed: u64, opts: &SolveOptions) -> Result<Solved> {
    match init {
        InitStrategy::Constant(c) => {
            let s = newton_solve(f, &initial_guess(f, c)?, opts)?;
            Ok(Solved { iterations: s.report.iterations(), h: s.h, flow_gap: None })
        }
        InitStrategy::Perturbed(a) => {
            let s = newton_solve(f, &perturbed_guess(f, a, seed)?, opts)?;
            Ok(Solved { iterations: s.report.iterations(), h: s.h, flow_gap: None })
        }
        InitStrategy::Flow => {
            let flow = run_flow(f, &initial_guess(f, 1.0)?, &FlowOptions::default())?;
            let s = newton_solve(f, &flow.h, opts)?;
            let gap = hausdorff_distance(flow.h.field(), s.h.field())?;
            Ok(Solved { iterations: s.report.iterations(), h: s.h, flow_gap: Some(gap) })
        }
    }
}

/// Solves `f` from every init strategy and summarizes the solutions.
/// Individual solve failures are recorded, not propagated.
pub fn solve_sample(
    index: usize,
    f: &DensityFunction,
    inits: &[InitStrategy],
    opts: &SolveOptions,
    seed: u64,
    with_diagnostics: bool,
) -> SampleRecord {
    let mut solutions = Vec::new();
    let mut failures = Vec::new();
    let mut max_iterations = 0;
    let mut flow_gap = None;
    for (k, &init) in inits.iter().enumerate() {
        match solve_from(f, init, seed.wrapping_add(k as u64), opts) {
            Ok(s) => {
                max_iterations = max_iterations.max(s.iterations);
                if let Some(g) = s.flow_gap {
                    flow_gap = Some(flow_gap.map_or(g, |old: f64| old.max(g)));
                }
                solutions.push(s.h);
            }
            Err(e) => failures.push((init.to_string(), e.to_string())),
        }
    }

    let mut max_pairwise: f64 = 0.0;
    for (i, a) in solutions.iter().enumerate() {
        for b in &solutions[i + 1..] {
            max_pairwise = max_pairwise.max(hausdorff_distance(a.field(), b.field()).unwrap_or(f64::INFINITY));
        }
    }
    let target = f.total() / 3.0;
    let mut max_residual: f64 = 0.0;
    let mut volume_rel_err: f64 = 0.0;
    let (mut sup_h, mut min_h) = (f64::NAN, f64::NAN);
    for h in &solutions {
        max_residual = max_residual.max(ma_residual(h, f).map_or(f64::INFINITY, |r| r.sup_norm()));
        volume_rel_err = volume_rel_err.max((volume_from_support(h) - target).abs() / target);
        sup_h = sup_h.max(h.field().sup_norm());
        min_h = min_h.min(h.field().min());
    }
    let diagnostics = match solutions.first() {
        Some(h) if with_diagnostics => match h.to_polytope().and_then(|p| blowdown_diagnostics(&p)) {
            Ok(d) => Some(d),
            Err(e) => {
                failures.push(("diagnostics".into(), e.to_string()));
                None
            }
        },
        _ => None,
    };

    SampleRecord {
        index,
        descriptor: f.descriptor().to_string(),
        holder_proxy: f.holder_proxy(),
        solutions,
        failures,
        max_pairwise,
        max_residual,
        max_iterations,
        sup_h,
        min_h,
        volume_rel_err,
        flow_gap,
        diagnostics,
    }
}

fn run_suite(spec: &ExperimentSpec, expected: SuiteKind) -> Result<ExperimentReport> {
    spec.validate()?;
    if spec.kind != expected {
        return Err(Error::Precondition(format!("spec kind is {}, expected {expected}", spec.kind)));
    }
    let grid: Arc<SphericalGrid> = SphericalGrid::build(spec.bandwidth)?;
    let opts = SolveOptions { tolerance: spec.tol, ..SolveOptions::default() };
    let with_diagnostics = spec.kind != SuiteKind::Uniqueness;
    let records = (0..spec.samples)
        .into_par_iter()
        .map(|i| {
            let seed = spec.seed.wrapping_add(i as u64);
            match gen_density(seed, spec.eps, spec.lambda, &grid) {
                Ok(f) => solve_sample(i, &f, &spec.inits, &opts, seed, with_diagnostics),
                Err(e) => SampleRecord {
                    index: i,
                    descriptor: format!("random:{seed},{},{}", fmt_f64(spec.eps), fmt_f64(spec.lambda)),
                    holder_proxy: f64::NAN,
                    solutions: Vec::new(),
                    failures: vec![("density".into(), e.to_string())],
                    max_pairwise: 0.0,
                    max_residual: 0.0,
                    max_iterations: 0,
                    sup_h: f64::NAN,
                    min_h: f64::NAN,
                    volume_rel_err: 0.0,
                    flow_gap: None,
                    diagnostics: None,
                },
            }
        })
        .collect::<Vec<_>>();
    let aggregate = Aggregate::from_records(&records);
    Ok(ExperimentReport { spec: spec.clone(), records, aggregate })
}

/// Solves each sample from every init strategy and records pairwise distances.
pub fn run_uniqueness(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    run_suite(spec, SuiteKind::Uniqueness)
}

/// Records `||h||_inf`, `min h` and blow-down diagnostics per sample.
pub fn run_bound(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    run_suite(spec, SuiteKind::Bound)
}

/// Same records as [`run_bound`]; judged against [`DIAGNOSTIC_RATIO_CAP`].
pub fn run_diagnostics(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    run_suite(spec, SuiteKind::Diagnostics)
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    run_suite(spec, spec.kind)
}
