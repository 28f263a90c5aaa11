//! Right-hand sides `f` of the equation and their descriptors.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fmt_f64;
use crate::sphere::{schmidt_to_orthonormal, HarmonicCoeffs, ScalarField, SphericalGrid};

/// Hölder exponent used by [`holder_proxy`].
pub const HOLDER_EXPONENT: f64 = 0.5;

/// Retries allowed when a random density violates its bounds.
pub const GEN_RETRIES: usize = 100;

/// Positive band-limited density on the sphere.
#[derive(Clone, Debug)]
pub struct DensityFunction {
    coeffs: HarmonicCoeffs,
    field: ScalarField,
    bounds: (f64, f64),
    holder_proxy: f64,
    descriptor: String,
}

impl DensityFunction {
    /// Density from harmonic coefficients; bounds are the extreme nodal values.
    pub fn from_coeffs(grid: &Arc<SphericalGrid>, coeffs: HarmonicCoeffs, descriptor: impl Into<String>) -> Result<DensityFunction> {
        let field = grid.synthesize(&coeffs)?;
        let (lo, hi) = (field.min(), field.max());
        if !(lo > 0.0) {
            return Err(Error::InvalidParameter(format!("density must be positive, minimum is {lo}")));
        }
        let holder_proxy = holder_proxy(&field);
        Ok(DensityFunction { coeffs, field, bounds: (lo, hi), holder_proxy, descriptor: descriptor.into() })
    }

    /// Band-limited projection of sampled values.
    pub fn from_field(field: &ScalarField, descriptor: impl Into<String>) -> Result<DensityFunction> {
        let coeffs = field.grid().analyze(field)?;
        DensityFunction::from_coeffs(field.grid(), coeffs, descriptor)
    }

    pub fn constant(grid: &Arc<SphericalGrid>, c: f64) -> Result<DensityFunction> {
        DensitySpec::Const(c).build(grid)
    }

    /// `f = 1 + sum amp * S_l^m` with Schmidt semi-normalized harmonics
    /// (`S_1^0 = u.e3`); a `(0, 0, a)` term shifts the constant.
    pub fn from_terms(grid: &Arc<SphericalGrid>, terms: &[(usize, i64, f64)]) -> Result<DensityFunction> {
        DensitySpec::Harmonics(terms.to_vec()).build(grid)
    }

    /// Narrows the declared bounds; fails unless `lo <= f <= hi` at every node.
    pub fn with_bounds(mut self, lo: f64, hi: f64) -> Result<DensityFunction> {
        if !(lo > 0.0 && lo <= self.bounds.0 && self.bounds.1 <= hi) {
            return Err(Error::InvalidParameter(format!(
                "density range [{}, {}] not within [{lo}, {hi}]",
                self.bounds.0, self.bounds.1
            )));
        }
        self.bounds = (lo, hi);
        Ok(self)
    }

    pub fn coeffs(&self) -> &HarmonicCoeffs {
        &self.coeffs
    }

    pub fn field(&self) -> &ScalarField {
        &self.field
    }

    pub fn values(&self) -> &[f64] {
        self.field.values()
    }

    pub fn grid(&self) -> &Arc<SphericalGrid> {
        self.field.grid()
    }

    pub fn bounds(&self) -> (f64, f64) {
        self.bounds
    }

    pub fn holder_proxy(&self) -> f64 {
        self.holder_proxy
    }

    pub fn descriptor(&self) -> &str {
        &self.descriptor
    }

    /// `int f`.
    pub fn total(&self) -> f64 {
        self.grid().integrate(&self.field)
    }

    /// Mean value `int f / 4 pi`.
    pub fn mean(&self) -> f64 {
        self.total() / (4.0 * PI)
    }
}

/// `||f - 1||_inf + max |f(u) - f(v)| / d(u, v)^(1/2)` over node pairs at
/// geodesic distance at most `pi / L`: a computable stand-in for `||f - 1||_{C^alpha}`.
pub fn holder_proxy(f: &ScalarField) -> f64 {
    let grid = f.grid();
    let nodes = grid.nodes();
    let v = f.values();
    let reach = PI / grid.bandwidth() as f64;
    let cos_reach = reach.cos();
    let mut semi: f64 = 0.0;
    for i in 0..nodes.len() {
        for j in (i + 1)..nodes.len() {
            let c = nodes[i].dot(&nodes[j]);
            if c >= cos_reach {
                let d = c.clamp(-1.0, 1.0).acos();
                if d > 0.0 {
                    semi = semi.max((v[i] - v[j]).abs() / d.powf(HOLDER_EXPONENT));
                }
            }
        }
    }
    f.map(|x| x - 1.0).sup_norm() + semi
}

/// Textual density descriptor: `const:c`, `harmonics:[(l,m,amp),...]` or
/// `random:seed,eps,lambda`.
#[derive(Clone, Debug, PartialEq)]
pub enum DensitySpec {
    Const(f64),
    Harmonics(Vec<(usize, i64, f64)>),
    Random { seed: u64, eps: f64, lambda: f64 },
}

impl DensitySpec {
    pub fn build(&self, grid: &Arc<SphericalGrid>) -> Result<DensityFunction> {
        match self {
            DensitySpec::Const(c) => {
                let mut coeffs = HarmonicCoeffs::zeros(grid.bandwidth());
                coeffs.set(0, 0, c * (4.0 * PI).sqrt());
                DensityFunction::from_coeffs(grid, coeffs, self.to_string())
            }
            DensitySpec::Harmonics(terms) => {
                let mut coeffs = HarmonicCoeffs::zeros(grid.bandwidth());
                coeffs.set(0, 0, (4.0 * PI).sqrt());
                for &(l, m, amp) in terms {
                    if l > grid.max_degree() || m.unsigned_abs() as usize > l {
                        return Err(Error::InvalidParameter(format!(
                            "harmonic ({l},{m}) not representable at bandwidth {}",
                            grid.bandwidth()
                        )));
                    }
                    let cur = coeffs.get(l, m);
                    coeffs.set(l, m, cur + amp * schmidt_to_orthonormal(l));
                }
                DensityFunction::from_coeffs(grid, coeffs, self.to_string())
            }
            DensitySpec::Random { seed, eps, lambda } => gen_density(*seed, *eps, *lambda, grid),
        }
    }
}

impl fmt::Display for DensitySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DensitySpec::Const(c) => write!(f, "const:{}", fmt_f64(*c)),
            DensitySpec::Harmonics(terms) => {
                write!(f, "harmonics:[")?;
                for (k, (l, m, a)) in terms.iter().enumerate() {
                    if k > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "({l},{m},{})", fmt_f64(*a))?;
                }
                write!(f, "]")
            }
            DensitySpec::Random { seed, eps, lambda } => {
                write!(f, "random:{seed},{},{}", fmt_f64(*eps), fmt_f64(*lambda))
            }
        }
    }
}

impl FromStr for DensitySpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<DensitySpec> {
        let bad = |msg: &str| Error::Parse(format!("density descriptor {s:?}: {msg}"));
        let (kind, rest) = s.trim().split_once(':').ok_or_else(|| bad("expected kind:value"))?;
        let num = |t: &str| t.trim().parse::<f64>().map_err(|e| bad(&e.to_string()));
        match kind.trim() {
            "const" => Ok(DensitySpec::Const(num(rest)?)),
            "harmonics" => {
                let inner = rest
                    .trim()
                    .strip_prefix('[')
                    .and_then(|r| r.strip_suffix(']'))
                    .ok_or_else(|| bad("expected [..]"))?;
                let mut terms = Vec::new();
                for chunk in inner.split(')') {
                    let chunk = chunk.trim().trim_start_matches(',').trim();
                    if chunk.is_empty() {
                        continue;
                    }
                    let body = chunk.strip_prefix('(').ok_or_else(|| bad("expected (l,m,amp)"))?;
                    let parts: Vec<&str> = body.split(',').collect();
                    if parts.len() != 3 {
                        return Err(bad("expected (l,m,amp)"));
                    }
                    let l = parts[0].trim().parse::<usize>().map_err(|e| bad(&e.to_string()))?;
                    let m = parts[1].trim().parse::<i64>().map_err(|e| bad(&e.to_string()))?;
                    terms.push((l, m, num(parts[2])?));
                }
                Ok(DensitySpec::Harmonics(terms))
            }
            "random" => {
                let parts: Vec<&str> = rest.split(',').collect();
                if parts.len() != 3 {
                    return Err(bad("expected random:seed,eps,lambda"));
                }
                let seed = parts[0].trim().parse::<u64>().map_err(|e| bad(&e.to_string()))?;
                Ok(DensitySpec::Random { seed, eps: num(parts[1])?, lambda: num(parts[2])? })
            }
            other => Err(bad(&format!("unknown kind {other:?}"))),
        }
    }
}

/// Random degree-1..=`max_degree` harmonic combination with sup-norm 1 on the nodes.
pub fn random_harmonic(rng: &mut ChaCha8Rng, grid: &Arc<SphericalGrid>, min_degree: usize, max_degree: usize) -> Result<HarmonicCoeffs> {
    let mut g = HarmonicCoeffs::zeros(grid.bandwidth());
    for l in min_degree..=max_degree.min(grid.max_degree()) {
        for m in -(l as i64)..=l as i64 {
            g.set(l, m, rng.gen_range(-1.0..1.0));
        }
    }
    let norm = grid.synthesize(&g)?.sup_norm();
    if norm == 0.0 {
        return Err(Error::Generation("random harmonic vanished".into()));
    }
    HarmonicCoeffs::from_vec(grid.bandwidth(), g.as_slice().iter().map(|c| c / norm).collect())
}

/// `f = 1 + eps g / ||g||_inf` with `g` a seeded random combination of degrees
/// 1 through 4. If `1/lambda < f < lambda` fails the amplitude is shrunk by 10%
/// and rechecked.
pub fn gen_density(seed: u64, eps: f64, lambda: f64, grid: &Arc<SphericalGrid>) -> Result<DensityFunction> {
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(Error::InvalidParameter(format!("eps must be nonnegative, got {eps}")));
    }
    if !(lambda > 1.0) {
        return Err(Error::InvalidParameter(format!("lambda must exceed 1, got {lambda}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = random_harmonic(&mut rng, grid, 1, 4)?;
    let descriptor = DensitySpec::Random { seed, eps, lambda }.to_string();
    let mut amp = eps;
    for _ in 0..=GEN_RETRIES {
        let mut coeffs = HarmonicCoeffs::from_vec(grid.bandwidth(), g.as_slice().iter().map(|c| amp * c).collect())?;
        coeffs.set(0, 0, (4.0 * PI).sqrt());
        let field = grid.synthesize(&coeffs)?;
        if field.min() > 1.0 / lambda && field.max() < lambda {
            return DensityFunction::from_coeffs(grid, coeffs, descriptor.clone());
        }
        amp *= 0.9;
    }
    Err(Error::Generation(format!("{descriptor}: bounds not met after {GEN_RETRIES} retries")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Arc<SphericalGrid> {
        SphericalGrid::build(16).unwrap()
    }

    #[test]
    fn zero_eps_is_constant_one() {
        let f = gen_density(7, 0.0, 2.0, &grid()).unwrap();
        assert!(f.values().iter().all(|v| (v - 1.0).abs() < 1e-14));
        assert!(f.holder_proxy() < 1e-12);
    }

    #[test]
    fn eps_sets_sup_deviation() {
        for seed in 0..10 {
            let f = gen_density(seed, 0.05, 2.0, &grid()).unwrap();
            let dev = f.field().map(|v| v - 1.0).sup_norm();
            assert!((dev - 0.05).abs() < 1e-12, "seed {seed}: {dev}");
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = gen_density(42, 0.05, 2.0, &grid()).unwrap();
        let b = gen_density(42, 0.05, 2.0, &grid()).unwrap();
        let bits = |f: &DensityFunction| f.coeffs().as_slice().iter().map(|c| c.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        let c = gen_density(43, 0.05, 2.0, &grid()).unwrap();
        assert_ne!(bits(&a), bits(&c));
    }

    #[test]
    fn bounds_force_retry() {
        let f = gen_density(3, 0.9, 1.5, &grid()).unwrap();
        assert!(f.bounds().0 > 1.0 / 1.5 && f.bounds().1 < 1.5);
        assert!(gen_density(3, -0.1, 2.0, &grid()).is_err());
        assert!(gen_density(3, 0.1, 1.0, &grid()).is_err());
    }

    #[test]
    fn harmonics_preset_is_translated_ball_density() {
        let g = grid();
        let f = DensityFunction::from_terms(&g, &[(1, 0, 0.1)]).unwrap();
        for (v, u) in f.values().iter().zip(g.nodes()) {
            assert!((v - (1.0 + 0.1 * u.z)).abs() < 1e-14);
        }
        assert!((f.mean() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn nonpositive_density_rejected() {
        assert!(DensityFunction::constant(&grid(), 0.0).is_err());
        assert!(DensityFunction::from_terms(&grid(), &[(1, 0, 1.5)]).is_err());
        assert!(DensityFunction::from_terms(&grid(), &[(20, 0, 0.1)]).is_err());
    }

    #[test]
    fn with_bounds_checks_range() {
        let f = DensityFunction::from_terms(&grid(), &[(2, 1, 0.2)]).unwrap();
        assert!(f.clone().with_bounds(0.5, 2.0).is_ok());
        assert!(f.with_bounds(0.99, 2.0).is_err());
    }

    #[test]
    fn descriptor_round_trip() {
        for s in ["const:8", "harmonics:[(1,0,0.1),(2,-1,-0.05)]", "random:42,0.05,2", "harmonics:[]"] {
            let spec: DensitySpec = s.parse().unwrap();
            assert_eq!(spec.to_string(), s);
        }
        assert!("const:x".parse::<DensitySpec>().is_err());
        assert!("blob:1".parse::<DensitySpec>().is_err());
        assert!("harmonics:[(1,0)]".parse::<DensitySpec>().is_err());
    }

    #[test]
    fn holder_proxy_grows_with_eps() {
        let g = grid();
        let small = gen_density(5, 0.01, 2.0, &g).unwrap().holder_proxy();
        let large = gen_density(5, 0.1, 2.0, &g).unwrap().holder_proxy();
        assert!(small > 0.01 && large > small);
        assert!((large / small - 10.0).abs() < 1e-9);
    }
}
