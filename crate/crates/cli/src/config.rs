//! Run configuration in a sectioned `key = value` text format.
//!
//! ```text
//! # comments start with '#'
//! [geometry]
//! shape = ellipsoid:2,1,1      # kind:a,b,c, or `sphere` / `cube`
//! resolution = 16, 8, 8        # or a single integer for all three axes
//!
//! [model]
//! eta = 0.1
//! alpha = 1
//! lambda = 0
//! period = 1
//! field = rotating:0,1,0;0,0,1 # or oscillating:x,y,z, optional `*amplitude`
//!
//! [tolerances]
//! minimize = 1e-8              # Euler-Lagrange residual target
//! shoot = 1e-8                 # periodic-orbit return defect
//! gmres = 1e-6                 # relative residual of each Newton solve
//! clearance = 1e-8             # |Re mu| below which the spectrum touches the axis
//! gap = 1e-3                   # shape-condition eigenvalue gap
//!
//! [run]
//! seed = 0
//! threads = 1                  # defaults to $MICROMAG_THREADS, else 1
//! output = out
//! initial = minimizer          # minimizer | uniform | random | file:PATH
//! etas = 0.05, 0.1, 0.2, 0.4   # scaling sweep
//! lambdas = 0, 5e-4, 1e-3      # continuation path
//! t_end = 1                    # evolve span, defaults to the period
//! dt = 0.001                   # step cap, defaults to the stability-derived step
//! sample_every = 1
//! samples = 20                 # random draws per property check
//! ```
//!
//! Only `geometry.shape`, `geometry.resolution` and `model.eta` are required.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use micromag_core::{ExternalFieldSpec, ShapeSpec, SimParams};

use crate::output::num;

pub const THREADS_ENV: &str = "MICROMAG_THREADS";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub minimize: f64,
    pub shoot: f64,
    pub gmres: f64,
    pub clearance: f64,
    pub gap: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            minimize: 1e-8,
            shoot: 1e-8,
            gmres: 1e-6,
            clearance: 1e-8,
            gap: 1e-3,
        }
    }
}

/// Starting field for pipelines that need one.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialState {
    /// The energy minimizer for the configured `eta`.
    Minimizer,
    /// Constant along the first axis.
    Uniform,
    /// Independent random unit vectors drawn from the seed.
    Random,
    File(PathBuf),
}

impl fmt::Display for InitialState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitialState::Minimizer => f.write_str("minimizer"),
            InitialState::Uniform => f.write_str("uniform"),
            InitialState::Random => f.write_str("random"),
            InitialState::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

impl FromStr for InitialState {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "minimizer" => Ok(InitialState::Minimizer),
            "uniform" => Ok(InitialState::Uniform),
            "random" => Ok(InitialState::Random),
            _ => match s.strip_prefix("file:") {
                Some(p) if !p.trim().is_empty() => Ok(InitialState::File(p.trim().into())),
                _ => Err(format!(
                    "expected minimizer, uniform, random or file:PATH, got `{s}`"
                )),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub shape: ShapeSpec,
    pub resolution: [usize; 3],
    pub params: SimParams,
    pub tolerances: Tolerances,
    pub seed: u64,
    pub threads: usize,
    pub output: PathBuf,
    pub initial: InitialState,
    pub etas: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub t_end: Option<f64>,
    pub dt: Option<f64>,
    pub sample_every: usize,
    pub samples: usize,
}

impl RunConfig {
    /// Defaults for everything but the three required keys.
    pub fn new(shape: ShapeSpec, resolution: [usize; 3], eta: f64) -> Self {
        RunConfig {
            shape,
            resolution,
            params: SimParams::autonomous(eta, 1.0),
            tolerances: Tolerances::default(),
            seed: 0,
            threads: 1,
            output: PathBuf::from("out"),
            initial: InitialState::Minimizer,
            etas: vec![0.05, 0.1, 0.2, 0.4],
            lambdas: vec![0.0, 5e-4, 1e-3],
            t_end: None,
            dt: None,
            sample_every: 1,
            samples: 20,
        }
    }

    pub fn span(&self) -> f64 {
        self.t_end.unwrap_or(self.params.period)
    }
}

/// One problem in a config text; `line` is 1-based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub key: Option<String>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(l) = self.line {
            write!(f, "line {l}: ")?;
        }
        if let Some(k) = &self.key {
            write!(f, "`{k}`: ")?;
        }
        f.write_str(&self.message)
    }
}

/// Every problem found in a config, in line order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigErrors(pub Vec<ConfigError>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

const KEYS: &[&str] = &[
    "geometry.shape",
    "geometry.resolution",
    "model.eta",
    "model.alpha",
    "model.lambda",
    "model.period",
    "model.field",
    "tolerances.minimize",
    "tolerances.shoot",
    "tolerances.gmres",
    "tolerances.clearance",
    "tolerances.gap",
    "run.seed",
    "run.threads",
    "run.output",
    "run.initial",
    "run.etas",
    "run.lambdas",
    "run.t_end",
    "run.dt",
    "run.sample_every",
    "run.samples",
];

const REQUIRED: &[&str] = &["geometry.shape", "geometry.resolution", "model.eta"];

struct Entry {
    value: String,
    line: usize,
}

struct Collector {
    entries: BTreeMap<String, Entry>,
    errors: Vec<ConfigError>,
}

impl Collector {
    fn err(&mut self, line: Option<usize>, key: &str, message: impl Into<String>) {
        self.errors.push(ConfigError {
            line,
            key: Some(key.to_string()),
            message: message.into(),
        });
    }

    /// Parses `key` if present; records a type error otherwise.
    fn get<T>(&mut self, key: &str, parse: impl Fn(&str) -> Result<T, String>) -> Option<T> {
        let (value, line) = match self.entries.get(key) {
            Some(e) => (e.value.clone(), e.line),
            None => return None,
        };
        match parse(&value) {
            Ok(v) => Some(v),
            Err(msg) => {
                self.err(Some(line), key, msg);
                None
            }
        }
    }

    fn line(&self, key: &str) -> Option<usize> {
        self.entries.get(key).map(|e| e.line)
    }

    /// Records a constraint error unless `ok`.
    fn require(&mut self, key: &str, ok: bool, message: &str) -> bool {
        if !ok {
            let line = self.line(key);
            self.err(line, key, message);
        }
        ok
    }
}

fn float(s: &str) -> Result<f64, String> {
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| format!("expected a finite number, got `{s}`"))
}

fn integer<T: FromStr>(s: &str) -> Result<T, String> {
    s.parse::<T>()
        .map_err(|_| format!("expected a non-negative integer, got `{s}`"))
}

fn float_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',').map(|x| float(x.trim())).collect()
}

fn resolution(s: &str) -> Result<[usize; 3], String> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|x| integer::<usize>(x.trim()))
        .collect::<Result<_, _>>()?;
    match parts.as_slice() {
        [n] => Ok([*n; 3]),
        [a, b, c] => Ok([*a, *b, *c]),
        _ => Err(format!("expected one or three integers, got `{s}`")),
    }
}

fn default_threads(c: &mut Collector) -> usize {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => n,
            _ => {
                c.errors.push(ConfigError {
                    line: None,
                    key: Some("run.threads".into()),
                    message: format!("{THREADS_ENV} = `{v}` is not a positive integer"),
                });
                1
            }
        },
        Err(_) => 1,
    }
}

/// Parses and validates a config; reports every problem found rather than
/// stopping at the first.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigErrors> {
    let mut c = Collector {
        entries: BTreeMap::new(),
        errors: Vec::new(),
    };
    let mut section: Option<String> = None;

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        if let Some(rest) = body.strip_prefix('[') {
            match rest.strip_suffix(']').map(str::trim) {
                Some(name) if ["geometry", "model", "tolerances", "run"].contains(&name) => {
                    section = Some(name.to_string());
                }
                Some(name) => {
                    c.errors.push(ConfigError {
                        line: Some(line),
                        key: None,
                        message: format!("unknown section `[{name}]`"),
                    });
                    section = None;
                }
                None => c.errors.push(ConfigError {
                    line: Some(line),
                    key: None,
                    message: format!("malformed section header `{body}`"),
                }),
            }
            continue;
        }
        let Some((k, v)) = body.split_once('=') else {
            c.errors.push(ConfigError {
                line: Some(line),
                key: None,
                message: format!("expected `key = value`, got `{body}`"),
            });
            continue;
        };
        let (k, v) = (k.trim(), v.trim());
        let Some(sec) = &section else {
            c.errors.push(ConfigError {
                line: Some(line),
                key: Some(k.to_string()),
                message: "key outside of a known section".into(),
            });
            continue;
        };
        let full = format!("{sec}.{k}");
        if !KEYS.contains(&full.as_str()) {
            c.err(Some(line), &full, "unknown key");
            continue;
        }
        if let Some(prev) = c.entries.get(&full) {
            let first = prev.line;
            c.err(
                Some(line),
                &full,
                format!("duplicate key (lines {first} and {line})"),
            );
            continue;
        }
        c.entries.insert(
            full,
            Entry {
                value: v.to_string(),
                line,
            },
        );
    }

    for key in REQUIRED {
        if !c.entries.contains_key(*key) {
            c.err(None, key, "missing required key");
        }
    }

    let shape = c.get("geometry.shape", |s| {
        s.parse::<ShapeSpec>().map_err(|e| e.to_string())
    });
    let res = c.get("geometry.resolution", resolution);
    if let Some(r) = res {
        c.require(
            "geometry.resolution",
            r.iter().all(|&n| n > 0),
            "every axis needs at least one cell",
        );
    }

    let d = SimParams::autonomous(1.0, 1.0);
    let eta = c.get("model.eta", float);
    if let Some(e) = eta {
        c.require("model.eta", e > 0.0, "eta must be strictly positive");
    }
    let alpha = c.get("model.alpha", float).unwrap_or(d.alpha);
    let lambda = c.get("model.lambda", float).unwrap_or(d.lambda);
    let period = c.get("model.period", float).unwrap_or(d.period);
    c.require("model.period", period > 0.0, "period must be strictly positive");
    let field = c
        .get("model.field", |s| {
            s.parse::<ExternalFieldSpec>().map_err(|e| e.to_string())
        })
        .unwrap_or(d.field);

    let dt0 = Tolerances::default();
    let tol = |c: &mut Collector, name: &str, default: f64| {
        let key = format!("tolerances.{name}");
        let v = c.get(&key, float).unwrap_or(default);
        c.require(&key, v > 0.0, "tolerance must be strictly positive");
        v
    };
    let tolerances = Tolerances {
        minimize: tol(&mut c, "minimize", dt0.minimize),
        shoot: tol(&mut c, "shoot", dt0.shoot),
        gmres: tol(&mut c, "gmres", dt0.gmres),
        clearance: tol(&mut c, "clearance", dt0.clearance),
        gap: tol(&mut c, "gap", dt0.gap),
    };

    let base = RunConfig::new(ShapeSpec::sphere(), [1; 3], 1.0);
    let seed = c.get("run.seed", integer::<u64>).unwrap_or(base.seed);
    let threads = match c.get("run.threads", integer::<usize>) {
        Some(n) => {
            c.require("run.threads", n > 0, "thread count must be positive");
            n
        }
        None if c.line("run.threads").is_some() => 1,
        None => default_threads(&mut c),
    };
    let output = c
        .get("run.output", |s| {
            if s.is_empty() {
                Err("output directory must not be empty".into())
            } else {
                Ok(PathBuf::from(s))
            }
        })
        .unwrap_or(base.output);
    let initial = c.get("run.initial", str::parse).unwrap_or(base.initial);
    let etas = c.get("run.etas", float_list).unwrap_or(base.etas);
    c.require(
        "run.etas",
        etas.iter().all(|&e| e > 0.0),
        "every eta must be strictly positive",
    );
    let lambdas = c.get("run.lambdas", float_list).unwrap_or(base.lambdas);
    c.require(
        "run.lambdas",
        lambdas.first() == Some(&0.0) && lambdas.windows(2).all(|w| w[0] < w[1]),
        "lambdas must start at 0 and increase strictly",
    );
    let t_end = c.get("run.t_end", float);
    if let Some(t) = t_end {
        c.require("run.t_end", t >= 0.0, "t_end must be non-negative");
    }
    let dt = c.get("run.dt", float);
    if let Some(v) = dt {
        c.require("run.dt", v > 0.0, "dt must be strictly positive");
    }
    let sample_every = c.get("run.sample_every", integer::<usize>).unwrap_or(1);
    c.require("run.sample_every", sample_every > 0, "must be positive");
    let samples = c.get("run.samples", integer::<usize>).unwrap_or(base.samples);
    c.require("run.samples", samples > 0, "must be positive");

    let params = eta.filter(|&e| e > 0.0 && period > 0.0).and_then(|eta| {
        let p = SimParams::autonomous(eta, alpha)
            .with_lambda(lambda)
            .with_period(period)
            .with_field(field);
        match p.validate() {
            Ok(()) => Some(p),
            Err(e) => {
                let line = c.line("model.field");
                c.err(line, "model.field", e.to_string());
                None
            }
        }
    });

    if !c.errors.is_empty() {
        c.errors.sort_by_key(|e| e.line.unwrap_or(usize::MAX));
        return Err(ConfigErrors(c.errors));
    }
    Ok(RunConfig {
        shape: shape.expect("validated"),
        resolution: res.expect("validated"),
        params: params.expect("validated"),
        tolerances,
        seed,
        threads,
        output,
        initial,
        etas,
        lambdas,
        t_end,
        dt,
        sample_every,
        samples,
    })
}

fn list(v: &[f64]) -> String {
    v.iter().map(|&x| num(x)).collect::<Vec<_>>().join(", ")
}

/// Writes every field explicitly so the text reproduces `c` exactly.
pub fn serialize_config(c: &RunConfig) -> String {
    let [a, b, d] = c.resolution;
    let t = &c.tolerances;
    let mut s = format!(
        "[geometry]\nshape = {}\nresolution = {a}, {b}, {d}\n\n\
         [model]\neta = {}\nalpha = {}\nlambda = {}\nperiod = {}\nfield = {}\n\n\
         [tolerances]\nminimize = {}\nshoot = {}\ngmres = {}\nclearance = {}\ngap = {}\n\n\
         [run]\nseed = {}\nthreads = {}\noutput = {}\ninitial = {}\netas = {}\nlambdas = {}\n",
        c.shape,
        num(c.params.eta),
        num(c.params.alpha),
        num(c.params.lambda),
        num(c.params.period),
        c.params.field,
        num(t.minimize),
        num(t.shoot),
        num(t.gmres),
        num(t.clearance),
        num(t.gap),
        c.seed,
        c.threads,
        c.output.display(),
        c.initial,
        list(&c.etas),
        list(&c.lambdas),
    );
    if let Some(v) = c.t_end {
        s += &format!("t_end = {}\n", num(v));
    }
    if let Some(v) = c.dt {
        s += &format!("dt = {}\n", num(v));
    }
    s += &format!(
        "sample_every = {}\nsamples = {}\n",
        c.sample_every, c.samples
    );
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[geometry]\nshape = ellipsoid:2,1,1\nresolution = 8\n[model]\neta = 0.1\n";

    #[test]
    fn minimal_config_fills_defaults() {
        let c = parse_config(&format!("{MINIMAL}[run]\nthreads = 2\n")).unwrap();
        assert_eq!(c.shape, ShapeSpec::prolate_spheroid());
        assert_eq!(c.resolution, [8; 3]);
        assert_eq!(c.params, SimParams::autonomous(0.1, 1.0));
        assert_eq!(c.tolerances, Tolerances::default());
        assert_eq!((c.seed, c.threads), (0, 2));
        assert_eq!(c.initial, InitialState::Minimizer);
        assert_eq!(c.span(), 1.0);
    }

    #[test]
    fn negative_eta_names_the_field() {
        let errs = parse_config(&MINIMAL.replace("0.1", "-1")).unwrap_err();
        assert_eq!(errs.0.len(), 1);
        assert_eq!(errs.0[0].key.as_deref(), Some("model.eta"));
        assert_eq!(errs.0[0].line, Some(5));
    }

    #[test]
    fn duplicate_key_lists_both_lines() {
        let text = format!("{MINIMAL}eta = 0.2\n");
        let errs = parse_config(&text).unwrap_err();
        let msg = errs.to_string();
        assert!(msg.contains("lines 5 and 6"), "{msg}");
    }

    #[test]
    fn all_errors_are_collected() {
        let text = "[geometry]\nshape = blob:1,1,1\nresolution = 0,4,x\nwhat = 3\n\
                    [model]\neta = 0.1\nalpha = fast\n[extra]\nnope\n[tolerances]\nshoot = 0\n";
        let errs = parse_config(text).unwrap_err();
        let lines: Vec<_> = errs.0.iter().map(|e| e.line).collect();
        assert_eq!(
            lines,
            vec![Some(2), Some(3), Some(4), Some(7), Some(8), Some(9), Some(11)],
            "{errs}"
        );
    }

    #[test]
    fn missing_required_keys_are_reported() {
        let errs = parse_config("[model]\nalpha = 1\n").unwrap_err();
        let keys: Vec<_> = errs.0.iter().filter_map(|e| e.key.clone()).collect();
        for k in REQUIRED {
            assert!(keys.iter().any(|x| x == k), "{keys:?}");
        }
    }

    #[test]
    fn round_trip() {
        let mut c = RunConfig::new(ShapeSpec::prolate_spheroid(), [12, 6, 6], 0.1);
        c.params = c
            .params
            .with_lambda(1e-3)
            .with_period(2.5)
            .with_field(ExternalFieldSpec::rotating([0.0, 1.0, 0.0], [0.0, 0.0, -1.0], 0.3, 1.0).unwrap());
        c.tolerances.shoot = 1e-9;
        c.seed = 42;
        c.threads = 3;
        c.initial = InitialState::File("state.mag".into());
        c.etas = vec![0.1, 0.2, 0.3];
        c.t_end = Some(0.1 + 0.2);
        c.dt = Some(1.0 / 3.0);
        let back = parse_config(&serialize_config(&c)).unwrap();
        assert_eq!(back, c);
        let plain = RunConfig::new(ShapeSpec::sphere(), [5; 3], 0.05);
        assert_eq!(parse_config(&serialize_config(&plain)).unwrap(), plain);
    }

    #[test]
    fn lambdas_and_field_constraints() {
        let errs = parse_config(&format!("{MINIMAL}field = rotating:1,0,0;1,0,0\n[run]\nlambdas = 0.1, 0\n")).unwrap_err();
        let keys: Vec<_> = errs.0.iter().filter_map(|e| e.key.clone()).collect();
        assert!(keys.contains(&"run.lambdas".to_string()));
        assert!(keys.contains(&"model.field".to_string()));
    }
}
