//! Flat `key=value` run configuration.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use logmink_core::experiments::{parse_inits, InitStrategy, SuiteKind};
use logmink_core::sphere::{DEFAULT_BANDWIDTH, MIN_BANDWIDTH};
use logmink_core::{fmt_f64, DensitySpec};

use crate::CliError;

/// Every setting is optional so that a file and command-line flags can be
/// layered with [`Config::merge`]. Unset values fall back to the defaults of
/// the owning module.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Config {
    pub grid_l: Option<usize>,
    pub tol: Option<f64>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub density: Option<DensitySpec>,
    pub obj: Option<PathBuf>,
    pub kind: Option<SuiteKind>,
    pub samples: Option<usize>,
    pub eps: Option<f64>,
    pub lambda: Option<f64>,
    pub inits: Option<Vec<InitStrategy>>,
    pub dt: Option<f64>,
    pub max_steps: Option<usize>,
    pub max_iter: Option<usize>,
    pub snapshot_every: Option<usize>,
    pub write_obj: Option<bool>,
}

/// Recognized keys in normalized order.
pub const KEYS: [&str; 16] = [
    "grid_L",
    "tol",
    "out",
    "seed",
    "f",
    "obj",
    "kind",
    "samples",
    "eps",
    "lambda",
    "inits",
    "dt",
    "max_steps",
    "max_iter",
    "snapshot_every",
    "write_obj",
];

fn parse_value<T: FromStr>(key: &str, v: &str) -> Result<T, CliError>
where
    T::Err: fmt::Display,
{
    v.parse::<T>().map_err(|e| CliError::Config(format!("{key}={v}: {e}")))
}

impl Config {
    /// Parses `key=value` lines; blank lines and `#` comments are skipped.
    /// Keys may use `-` or `_`. Unknown and repeated keys are errors.
    pub fn parse(text: &str) -> Result<Config, CliError> {
        let mut cfg = Config::default();
        let mut seen = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected key=value, got {raw:?}", n + 1)))?;
            let key = canonical_key(k.trim())?;
            if seen.contains(&key) {
                return Err(CliError::Config(format!("line {}: duplicate key {key}", n + 1)));
            }
            seen.push(key);
            cfg.set(key, v.trim())?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Config, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Config::parse(&text)
    }

    fn set(&mut self, key: &str, v: &str) -> Result<(), CliError> {
        match key {
            "grid_L" => self.grid_l = Some(parse_value(key, v)?),
            "tol" => self.tol = Some(parse_value(key, v)?),
            "out" => self.out = Some(PathBuf::from(v)),
            "seed" => self.seed = Some(parse_value(key, v)?),
            "f" => self.density = Some(parse_value(key, v)?),
            "obj" => self.obj = Some(PathBuf::from(v)),
            "kind" => self.kind = Some(parse_value(key, v)?),
            "samples" => self.samples = Some(parse_value(key, v)?),
            "eps" => self.eps = Some(parse_value(key, v)?),
            "lambda" => self.lambda = Some(parse_value(key, v)?),
            "inits" => self.inits = Some(parse_inits(v).map_err(|e| CliError::Config(format!("{key}={v}: {e}")))?),
            "dt" => self.dt = Some(parse_value(key, v)?),
            "max_steps" => self.max_steps = Some(parse_value(key, v)?),
            "max_iter" => self.max_iter = Some(parse_value(key, v)?),
            "snapshot_every" => self.snapshot_every = Some(parse_value(key, v)?),
            "write_obj" => self.write_obj = Some(parse_value(key, v)?),
            _ => unreachable!("keys are canonicalized first"),
        }
        Ok(())
    }

    /// Values set in `over` replace those in `self`.
    pub fn merge(self, over: Config) -> Config {
        Config {
            grid_l: over.grid_l.or(self.grid_l),
            tol: over.tol.or(self.tol),
            out: over.out.or(self.out),
            seed: over.seed.or(self.seed),
            density: over.density.or(self.density),
            obj: over.obj.or(self.obj),
            kind: over.kind.or(self.kind),
            samples: over.samples.or(self.samples),
            eps: over.eps.or(self.eps),
            lambda: over.lambda.or(self.lambda),
            inits: over.inits.or(self.inits),
            dt: over.dt.or(self.dt),
            max_steps: over.max_steps.or(self.max_steps),
            max_iter: over.max_iter.or(self.max_iter),
            snapshot_every: over.snapshot_every.or(self.snapshot_every),
            write_obj: over.write_obj.or(self.write_obj),
        }
    }

    /// Range checks that do not depend on the command.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if let Some(l) = self.grid_l {
            if l < MIN_BANDWIDTH {
                return bad(format!("grid_L must be at least {MIN_BANDWIDTH}, got {l}"));
            }
        }
        for (key, v) in [("tol", self.tol), ("dt", self.dt)] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return bad(format!("{key} must be positive, got {v}"));
                }
            }
        }
        if let Some(e) = self.eps {
            if !(e >= 0.0 && e.is_finite()) {
                return bad(format!("eps must be nonnegative, got {e}"));
            }
        }
        if let Some(l) = self.lambda {
            if !(l > 1.0 && l.is_finite()) {
                return bad(format!("lambda must exceed 1, got {l}"));
            }
        }
        for (key, v) in [("samples", self.samples), ("max_steps", self.max_steps), ("max_iter", self.max_iter), ("snapshot_every", self.snapshot_every)] {
            if v == Some(0) {
                return bad(format!("{key} must be at least 1"));
            }
        }
        Ok(())
    }

    pub fn bandwidth(&self) -> usize {
        self.grid_l.unwrap_or(DEFAULT_BANDWIDTH)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("."))
    }

    /// One `key=value` line per set key, in [`KEYS`] order.
    pub fn normalized(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                out.push_str(k);
                out.push('=');
                out.push_str(&v);
                out.push('\n');
            }
        };
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        put("grid_L", self.grid_l.map(|v| v.to_string()));
        put("tol", self.tol.map(fmt_f64));
        put("out", path(&self.out));
        put("seed", self.seed.map(|v| v.to_string()));
        put("f", self.density.as_ref().map(ToString::to_string));
        put("obj", path(&self.obj));
        put("kind", self.kind.map(|k| k.to_string()));
        put("samples", self.samples.map(|v| v.to_string()));
        put("eps", self.eps.map(fmt_f64));
        put("lambda", self.lambda.map(fmt_f64));
        put("inits", self.inits.as_ref().map(|v| v.iter().map(ToString::to_string).collect::<Vec<_>>().join(";")));
        put("dt", self.dt.map(fmt_f64));
        put("max_steps", self.max_steps.map(|v| v.to_string()));
        put("max_iter", self.max_iter.map(|v| v.to_string()));
        put("snapshot_every", self.snapshot_every.map(|v| v.to_string()));
        put("write_obj", self.write_obj.map(|v| v.to_string()));
        out
    }
}

fn canonical_key(k: &str) -> Result<&'static str, CliError> {
    let k = k.replace('-', "_");
    KEYS.iter()
        .find(|&&c| c == k)
        .copied()
        .ok_or_else(|| CliError::Config(format!("unknown key {k:?}; expected one of {}", KEYS.join(", "))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_comments_and_dashes() {
        let cfg = Config::parse("# run\ngrid-L = 12\nf=harmonics:[(1,0,0.1)]  # ball\n\nwrite_obj=true\n").unwrap();
        assert_eq!(cfg.grid_l, Some(12));
        assert_eq!(cfg.density, Some(DensitySpec::Harmonics(vec![(1, 0, 0.1)])));
        assert_eq!(cfg.write_obj, Some(true));
        assert_eq!(cfg.normalized(), "grid_L=12\nf=harmonics:[(1,0,0.1)]\nwrite_obj=true\n");
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Config::parse("colour=red").is_err());
        assert!(Config::parse("tol=1e-8\ntol=1e-9").is_err());
        assert!(Config::parse("tol").is_err());
        assert!(Config::parse("f=nonsense").is_err());
        assert!(Config::parse("grid_L=2").unwrap().validate().is_err());
        assert!(Config::parse("lambda=1").unwrap().validate().is_err());
    }

    #[test]
    fn merge_prefers_overrides() {
        let file = Config::parse("tol=1e-8\nseed=3").unwrap();
        let flags = Config { seed: Some(5), ..Config::default() };
        let m = file.merge(flags);
        assert_eq!((m.tol, m.seed), (Some(1e-8), Some(5)));
    }

    fn arb_config() -> impl Strategy<Value = Config> {
        let density = prop_oneof![
            (0.01f64..10.0).prop_map(DensitySpec::Const),
            proptest::collection::vec((1usize..6, -1i64..=1, -0.2f64..0.2), 0..4).prop_map(DensitySpec::Harmonics),
            (any::<u64>(), 0.0f64..1.0, 1.01f64..5.0).prop_map(|(seed, eps, lambda)| DensitySpec::Random { seed, eps, lambda }),
        ];
        let kind = prop_oneof![Just(SuiteKind::Uniqueness), Just(SuiteKind::Bound), Just(SuiteKind::Diagnostics)];
        let init = prop_oneof![
            (0.1f64..3.0).prop_map(InitStrategy::Constant),
            (0.0f64..0.1).prop_map(InitStrategy::Perturbed),
            Just(InitStrategy::Flow)
        ];
        (
            (proptest::option::of(4usize..64), proptest::option::of(1e-14f64..1e-2), proptest::option::of("[a-z]{1,8}"), proptest::option::of(any::<u64>())),
            (proptest::option::of(density), proptest::option::of(kind), proptest::option::of(1usize..100), proptest::option::of(0.0f64..1.0)),
            (proptest::option::of(1.01f64..10.0), proptest::option::of(proptest::collection::vec(init, 1..5)), proptest::option::of(1e-6f64..1e-1)),
            (proptest::option::of(1usize..100_000), proptest::option::of(1usize..100), proptest::option::of(1usize..50), proptest::option::of(any::<bool>())),
        )
            .prop_map(|((grid_l, tol, out, seed), (density, kind, samples, eps), (lambda, inits, dt), (max_steps, max_iter, snapshot_every, write_obj))| Config {
                grid_l,
                tol,
                out: out.map(PathBuf::from),
                seed,
                density,
                obj: None,
                kind,
                samples,
                eps,
                lambda,
                inits,
                dt,
                max_steps,
                max_iter,
                snapshot_every,
                write_obj,
            })
    }

    proptest! {
        #[test]
        fn normalized_form_roundtrips(cfg in arb_config()) {
            let text = cfg.normalized();
            let back = Config::parse(&text).unwrap();
            prop_assert_eq!(&back, &cfg);
            prop_assert_eq!(back.normalized(), text);
        }
    }
}
