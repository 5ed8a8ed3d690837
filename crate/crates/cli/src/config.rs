//! `key = value` run configuration.

use std::collections::HashMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use mmc_ch::diagnostics::Interpolation;
use mmc_ch::solver::{CycleKind, Linearization};
use mmc_ch::{Config, Params, RegPolicy, SchemeVariant};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Location {
    Line(usize),
    Override(usize),
    Default,
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Line(n) => write!(f, "line {n}"),
            Location::Override(n) => write!(f, "override #{n}"),
            Location::Default => write!(f, "default"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("config error at {location}, key `{key}`: {message}")]
pub struct ConfigError {
    pub key: String,
    pub location: Location,
    pub message: String,
}

impl ConfigError {
    fn new(key: &str, location: Location, message: impl Into<String>) -> Self {
        Self { key: key.to_string(), location, message: message.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Simulate,
    Refine,
    Compare,
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "simulate" => Ok(Mode::Simulate),
            "refine" => Ok(Mode::Refine),
            "compare" => Ok(Mode::Compare),
            _ => Err(format!("unknown mode `{s}` (simulate, refine, compare)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialSpec {
    Cosine,
    Random {
        seed: u64,
        amplitude: f64,
    },
    /// A snapshot file as written by the simulate mode.
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefineConfig {
    pub grids: Vec<usize>,
    /// `dt = c h` on every grid.
    pub c: f64,
    pub t_final: f64,
    pub interpolation: Interpolation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareConfig {
    pub dts: Vec<f64>,
    pub t_final: f64,
    pub variants: Vec<SchemeVariant>,
    pub reference_variant: SchemeVariant,
    /// The reference runs at `dt / reference_divisor`.
    pub reference_divisor: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Steps between snapshots; 0 disables them.
    pub snapshot_every: usize,
    pub series_file: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mode: Mode,
    pub length: f64,
    pub grid_n: usize,
    pub dt: f64,
    pub t_final: f64,
    pub chi: f64,
    pub n1: f64,
    pub n2: f64,
    pub a_policy: RegPolicy<f64>,
    pub variant: SchemeVariant,
    pub initial: InitialSpec,
    pub solver: Config,
    /// Abort on the first invariant violation instead of reporting at the end.
    pub strict: bool,
    pub refine: RefineConfig,
    pub compare: CompareConfig,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Simulate,
            length: 64.0,
            grid_n: 256,
            dt: 1e-3,
            t_final: 25.0,
            chi: 2.37,
            n1: 5.12,
            n2: 0.16,
            a_policy: RegPolicy::Chi2Rho2,
            variant: SchemeVariant::Bdf2Regularized,
            initial: InitialSpec::Cosine,
            solver: Config::default(),
            strict: true,
            refine: RefineConfig {
                grids: vec![16, 32, 64, 128, 256],
                c: 2e-4,
                t_final: 0.128,
                interpolation: Interpolation::Bilinear,
            },
            compare: CompareConfig {
                dts: vec![1e-3, 2e-3],
                t_final: 1.6,
                variants: SchemeVariant::ALL.to_vec(),
                reference_variant: SchemeVariant::Bdf2FullImplicit,
                reference_divisor: 16,
            },
            output: OutputConfig {
                dir: PathBuf::from("out"),
                snapshot_every: 0,
                series_file: "series.csv".to_string(),
            },
        }
    }
}

impl RunConfig {
    pub fn params(&self) -> Params {
        Params::new(self.chi, self.n1, self.n2, self.a_policy).expect("validated at parse time")
    }
}

fn parse_num<T: FromStr>(s: &str) -> Result<T, String>
where
    T::Err: fmt::Display,
{
    s.parse().map_err(|e| format!("cannot parse `{s}`: {e}"))
}

fn parse_list<T>(s: &str, item: impl Fn(&str) -> Result<T, String>) -> Result<Vec<T>, String> {
    let items: Vec<T> = s.split(',').map(|v| item(v.trim())).collect::<Result<_, _>>()?;
    if items.is_empty() {
        return Err("empty list".into());
    }
    Ok(items)
}

fn parse_bool(s: &str) -> Result<bool, String> {
    match s {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(format!("cannot parse `{s}` as a boolean")),
    }
}

fn positive(v: f64) -> Result<f64, String> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{v} must be positive"))
    }
}

fn positive_int(v: usize) -> Result<usize, String> {
    if v > 0 {
        Ok(v)
    } else {
        Err("must be positive".into())
    }
}

/// Raw values that only make sense together; resolved after all lines are read.
#[derive(Default)]
struct Pending {
    initial: Option<String>,
    seed: Option<u64>,
    amplitude: Option<f64>,
    initial_file: Option<PathBuf>,
}

struct Parser {
    cfg: RunConfig,
    pending: Pending,
    seen: HashMap<String, Location>,
}

impl Parser {
    fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let c = &mut self.cfg;
        match key {
            "mode" => c.mode = value.parse()?,
            "length" => c.length = positive(parse_num(value)?)?,
            "grid_n" => c.grid_n = positive_int(parse_num(value)?)?,
            "dt" => c.dt = positive(parse_num(value)?)?,
            "t_final" => c.t_final = positive(parse_num(value)?)?,
            "chi" => c.chi = positive(parse_num(value)?)?,
            "n1" => c.n1 = positive(parse_num(value)?)?,
            "n2" => c.n2 = positive(parse_num(value)?)?,
            "a_policy" => {
                c.a_policy = if value == "chi2rho2" {
                    RegPolicy::Chi2Rho2
                } else {
                    let a: f64 = parse_num(value)?;
                    if !(a >= 0.0 && a.is_finite()) {
                        return Err(format!("{a} must be nonnegative"));
                    }
                    RegPolicy::Explicit(a)
                }
            }
            "variant" => c.variant = value.parse()?,
            "initial" => match value {
                "cosine" | "random" | "file" => self.pending.initial = Some(value.to_string()),
                _ => return Err(format!("unknown initial condition `{value}` (cosine, random, file)")),
            },
            "seed" => self.pending.seed = Some(parse_num(value)?),
            "amplitude" => {
                let a: f64 = parse_num(value)?;
                if !(a >= 0.0 && a.is_finite()) {
                    return Err(format!("{a} must be nonnegative"));
                }
                self.pending.amplitude = Some(a);
            }
            "initial_file" => self.pending.initial_file = Some(PathBuf::from(value)),
            "strict" => c.strict = parse_bool(value)?,

            "tol" => c.solver.tol = positive(parse_num(value)?)?,
            "max_cycles" => c.solver.max_cycles = positive_int(parse_num(value)?)?,
            "pre_sweeps" => c.solver.pre_sweeps = parse_num(value)?,
            "post_sweeps" => c.solver.post_sweeps = parse_num(value)?,
            "coarse_sweeps" => c.solver.coarse_sweeps = positive_int(parse_num(value)?)?,
            "min_level_n" => c.solver.min_level_n = positive_int(parse_num(value)?)?,
            "interior_eps" => c.solver.interior_eps = positive(parse_num(value)?)?,
            "cycle" => {
                c.solver.cycle = match value {
                    "v" | "V" => CycleKind::V,
                    "w" | "W" => CycleKind::W,
                    _ => return Err(format!("unknown cycle `{value}` (v, w)")),
                }
            }
            "linearization" => {
                c.solver.linearization = match value {
                    "newton" => Linearization::Newton,
                    "frozen" => Linearization::Frozen,
                    _ => return Err(format!("unknown linearization `{value}` (newton, frozen)")),
                }
            }

            "refine_grids" => {
                c.refine.grids = parse_list(value, |v| parse_num::<usize>(v).and_then(positive_int))?
            }
            "refine_c" => c.refine.c = positive(parse_num(value)?)?,
            "refine_t_final" => c.refine.t_final = positive(parse_num(value)?)?,
            "refine_interpolation" => {
                c.refine.interpolation = match value {
                    "bilinear" => Interpolation::Bilinear,
                    "nearest" => Interpolation::NearestNeighbor,
                    _ => return Err(format!("unknown interpolation `{value}` (bilinear, nearest)")),
                }
            }

            "compare_dts" => c.compare.dts = parse_list(value, |v| parse_num(v).and_then(positive))?,
            "compare_t_final" => c.compare.t_final = positive(parse_num(value)?)?,
            "compare_variants" => c.compare.variants = parse_list(value, str::parse)?,
            "reference_variant" => c.compare.reference_variant = value.parse()?,
            "reference_divisor" => c.compare.reference_divisor = positive_int(parse_num(value)?)?,

            "out_dir" => c.output.dir = PathBuf::from(value),
            "snapshot_every" => c.output.snapshot_every = parse_num(value)?,
            "series_file" => {
                if value.is_empty() || value.contains(['/', '\\']) {
                    return Err(format!("`{value}` must be a plain file name"));
                }
                c.output.series_file = value.to_string();
            }
            _ => return Err("unknown key".into()),
        }
        Ok(())
    }

    fn line(&mut self, raw: &str, location: Location) -> Result<(), ConfigError> {
        let text = raw.split('#').next().unwrap_or("").trim();
        if text.is_empty() {
            return Ok(());
        }
        let Some((key, value)) = text.split_once('=') else {
            return Err(ConfigError::new(text, location, "expected `key = value`"));
        };
        let (key, value) = (key.trim(), value.trim());
        self.set(key, value).map_err(|m| ConfigError::new(key, location.clone(), m))?;
        self.seen.insert(key.to_string(), location);
        Ok(())
    }

    fn at(&self, key: &str) -> Location {
        self.seen.get(key).cloned().unwrap_or(Location::Default)
    }

    fn finish(mut self) -> Result<RunConfig, ConfigError> {
        let p = std::mem::take(&mut self.pending);
        let kind = p.initial.as_deref().unwrap_or("cosine");
        for (key, set) in [("seed", p.seed.is_some()), ("amplitude", p.amplitude.is_some())] {
            if set && kind != "random" {
                return Err(ConfigError::new(key, self.at(key), "only valid with `initial = random`"));
            }
        }
        if p.initial_file.is_some() && kind != "file" {
            return Err(ConfigError::new(
                "initial_file",
                self.at("initial_file"),
                "only valid with `initial = file`",
            ));
        }
        self.cfg.initial = match kind {
            "random" => {
                InitialSpec::Random { seed: p.seed.unwrap_or(1234), amplitude: p.amplitude.unwrap_or(0.15) }
            }
            "file" => InitialSpec::File(p.initial_file.ok_or_else(|| {
                ConfigError::new("initial_file", self.at("initial"), "required with `initial = file`")
            })?),
            _ => InitialSpec::Cosine,
        };

        let c = &self.cfg;
        let params = Params::new(c.chi, c.n1, c.n2, c.a_policy)
            .map_err(|e| ConfigError::new("a_policy", self.at("a_policy"), e.to_string()))?;
        if let Err(e) = c.solver.validate(c.grid_n, &params) {
            let key = if c.solver.min_level_n < c.grid_n && !c.grid_n.is_power_of_two() {
                "grid_n"
            } else {
                "min_level_n"
            };
            return Err(ConfigError::new(key, self.at(key), e.to_string()));
        }
        if c.mode == Mode::Refine {
            let at = self.at("refine_grids");
            if c.refine.grids.len() < 2 || c.refine.grids.windows(2).any(|w| w[1] != 2 * w[0]) {
                return Err(ConfigError::new(
                    "refine_grids",
                    at,
                    "need at least two grids, each double the previous",
                ));
            }
            for &n in &c.refine.grids {
                c.solver
                    .validate(n, &params)
                    .map_err(|e| ConfigError::new("refine_grids", at.clone(), e.to_string()))?;
            }
        }
        Ok(self.cfg)
    }
}

/// Parses a configuration document, then applies `overrides` (each `key=value`) on top.
pub fn parse_config_with(text: &str, overrides: &[String]) -> Result<RunConfig, ConfigError> {
    let mut parser = Parser { cfg: RunConfig::default(), pending: Pending::default(), seen: HashMap::new() };
    for (k, raw) in text.lines().enumerate() {
        parser.line(raw, Location::Line(k + 1))?;
    }
    for (k, raw) in overrides.iter().enumerate() {
        parser.line(raw, Location::Override(k + 1))?;
    }
    parser.finish()
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    parse_config_with(text, &[])
}
