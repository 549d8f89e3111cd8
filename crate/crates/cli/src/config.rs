//! Flat `key = value` run configuration.
//!
//! Every key has a default, so an empty file describes the full-size run.
//! Unknown keys, malformed values and out-of-range parameters are errors
//! that name the line or the key.

use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};

use cls_core::analysis::{InitialCondition, Norm, Scenario};
use cls_core::carleman::CarlemanBasis;
use cls_core::evolve::{Scheme, TimeGrid};
use cls_core::model::NodeLayout;
use cls_core::schrodinger::RecoverySpec;
use sha2::{Digest, Sha256};

/// Keys in canonical order. Each is also a command-line flag with `_`
/// replaced by `-`.
pub const KEYS: &[&str] = &[
    "diffusion",
    "linear_rate",
    "quadratic_rate",
    "x_length",
    "n_x",
    "layout",
    "p_left",
    "p_right",
    "n_p",
    "t_end",
    "n_t",
    "dt",
    "order",
    "basis",
    "initial",
    "recovery",
    "sample_times",
    "scheme",
    "compare",
    "norm",
    "allow_unstable",
    "output_dir",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub key: Option<String>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(line) = self.line {
            write!(f, "line {line}: ")?;
        }
        if let Some(key) = &self.key {
            write!(f, "`{key}`: ")?;
        }
        f.write_str(&self.message)
    }
}

impl std::error::Error for ConfigError {}

fn err(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError {
        line: None,
        key: Some(key.to_string()),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub scheme: Scheme,
    /// Reference solver for error fields.
    pub compare: Option<Scheme>,
    pub norm: Norm,
    pub output_dir: PathBuf,
    /// Step size from a `dt` assignment, turned into `n_t` by
    /// [`RunConfig::finalize`] once `t_end` is known.
    pub dt: Option<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario::full_size(),
            scheme: Scheme::Cls,
            compare: None,
            norm: Norm::L2,
            output_dir: PathBuf::from("out"),
            dt: None,
        }
    }
}

fn parse_f64(key: &str, value: &str) -> Result<f64, ConfigError> {
    value
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| err(key, format!("expected a finite number, got `{value}`")))
}

/// Accepts `400000` as well as `4e5`.
fn parse_count(key: &str, value: &str) -> Result<usize, ConfigError> {
    if let Ok(n) = value.parse::<usize>() {
        return Ok(n);
    }
    match value.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.fract() == 0.0 && v < 1e15 => Ok(v as usize),
        _ => Err(err(key, format!("expected a non-negative integer, got `{value}`"))),
    }
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(err(key, format!("expected `true` or `false`, got `{value}`"))),
    }
}

fn parse_scheme(key: &str, value: &str) -> Result<Scheme, ConfigError> {
    Scheme::parse(value).ok_or_else(|| err(key, format!("unknown scheme `{value}` (fdm, cl, cls, exact)")))
}

fn parse_initial(value: &str) -> Result<InitialCondition, ConfigError> {
    match value.split_once(':') {
        None if value == "cosine" => Ok(InitialCondition::Cosine),
        Some(("constant", v)) => Ok(InitialCondition::Constant(parse_f64("initial", v)?)),
        _ => Err(err("initial", format!("expected `cosine` or `constant:<value>`, got `{value}`"))),
    }
}

fn format_initial(initial: InitialCondition) -> String {
    match initial {
        InitialCondition::Cosine => "cosine".into(),
        InitialCondition::Constant(v) => format!("constant:{v}"),
    }
}

fn parse_recovery(value: &str) -> Result<RecoverySpec, ConfigError> {
    let parts: Vec<&str> = value.split(':').collect();
    match parts.as_slice() {
        ["point"] => Ok(RecoverySpec::Point { index: None }),
        ["point", j] => Ok(RecoverySpec::Point {
            index: Some(parse_count("recovery", j)?),
        }),
        ["window", lo, hi] => {
            let (p_min, p_max) = (parse_f64("recovery", lo)?, parse_f64("recovery", hi)?);
            if p_min > p_max {
                return Err(err("recovery", "window bounds are reversed"));
            }
            Ok(RecoverySpec::Window { p_min, p_max })
        }
        _ => Err(err(
            "recovery",
            format!("expected `point`, `point:<index>` or `window:<p_min>:<p_max>`, got `{value}`"),
        )),
    }
}

fn format_recovery(recovery: RecoverySpec) -> String {
    match recovery {
        RecoverySpec::Point { index: None } => "point".into(),
        RecoverySpec::Point { index: Some(j) } => format!("point:{j}"),
        RecoverySpec::Window { p_min, p_max } => format!("window:{p_min}:{p_max}"),
    }
}

fn parse_times(value: &str) -> Result<Option<Vec<f64>>, ConfigError> {
    if value == "default" {
        return Ok(None);
    }
    value
        .split(',')
        .map(|t| parse_f64("sample_times", t.trim()))
        .collect::<Result<Vec<_>, _>>()
        .map(Some)
}

impl RunConfig {
    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let s = &mut self.scenario;
        match key {
            "diffusion" => s.params.diffusion = parse_f64(key, value)?,
            "linear_rate" => s.params.linear_rate = parse_f64(key, value)?,
            "quadratic_rate" => s.params.quadratic_rate = parse_f64(key, value)?,
            "x_length" => s.x_length = parse_f64(key, value)?,
            "n_x" => s.n_x = parse_count(key, value)?,
            "layout" => {
                s.layout = NodeLayout::parse(value)
                    .ok_or_else(|| err(key, format!("unknown layout `{value}` (vertex, cell_centered, left_offset)")))?
            }
            "p_left" => s.p_left = parse_f64(key, value)?,
            "p_right" => s.p_right = parse_f64(key, value)?,
            "n_p" => s.n_p = parse_count(key, value)?,
            "t_end" => s.t_end = parse_f64(key, value)?,
            "n_t" => s.n_t = parse_count(key, value)?,
            "dt" => self.dt = Some(parse_f64(key, value)?),
            "order" => s.order = parse_count(key, value)?,
            "basis" => {
                s.basis = CarlemanBasis::parse(value)
                    .ok_or_else(|| err(key, format!("unknown basis `{value}` (full, symmetric)")))?
            }
            "initial" => s.initial = parse_initial(value)?,
            "recovery" => s.recovery = parse_recovery(value)?,
            "sample_times" => s.options.sample_times = parse_times(value)?,
            "allow_unstable" => s.options.allow_unstable = parse_bool(key, value)?,
            "scheme" => self.scheme = parse_scheme(key, value)?,
            "compare" => {
                self.compare = match value {
                    "none" => None,
                    v => Some(parse_scheme(key, v)?),
                }
            }
            "norm" => self.norm = Norm::parse(value).ok_or_else(|| err(key, format!("unknown norm `{value}` (l2, max)")))?,
            "output_dir" => self.output_dir = PathBuf::from(value),
            _ => {
                return Err(ConfigError {
                    line: None,
                    key: None,
                    message: format!("unknown key `{key}` (expected one of {})", KEYS.join(", ")),
                })
            }
        }
        Ok(())
    }

    /// Resolves `dt` into `n_t` and validates.
    pub fn finalize(mut self) -> Result<Self, ConfigError> {
        if let Some(dt) = self.dt.take() {
            let grid = TimeGrid::from_step(dt, self.scenario.t_end).map_err(|e| err("dt", e.to_string()))?;
            self.scenario.n_t = grid.n_t();
        }
        self.validate()?;
        Ok(self)
    }

    /// Checks every constraint by building the grids the solvers will use.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let s = &self.scenario;
        fn core(key: &'static str) -> impl Fn(cls_core::Error) -> ConfigError {
            move |e| err(key, e.to_string())
        }
        s.params.validate().map_err(core("diffusion/linear_rate/quadratic_rate"))?;
        s.grid().map_err(core("n_x/x_length"))?;
        s.aux_grid().map_err(core("p_left/p_right/n_p"))?;
        let time_grid = s.time_grid().map_err(core("t_end/n_t"))?;
        if s.order == 0 {
            return Err(err("order", "must be at least 1"));
        }
        let times = s.options.resolve_times(&time_grid);
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(err("sample_times", "must be strictly increasing"));
        }
        for &t in &times {
            time_grid.step_of(t).map_err(core("sample_times"))?;
        }
        if let Some(c) = self.compare {
            if c == self.scheme {
                return Err(err("compare", "reference scheme equals the solved scheme"));
            }
        }
        Ok(())
    }

    /// Canonical text; parsing it back yields an equal config.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (key, value) in self.entries() {
            writeln!(out, "{key} = {value}").expect("writing to a string");
        }
        out
    }

    /// `(key, value)` in canonical order. `dt` is derived and omitted.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let s = &self.scenario;
        let times = match &s.options.sample_times {
            None => "default".to_string(),
            Some(ts) => ts.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(","),
        };
        vec![
            ("diffusion", s.params.diffusion.to_string()),
            ("linear_rate", s.params.linear_rate.to_string()),
            ("quadratic_rate", s.params.quadratic_rate.to_string()),
            ("x_length", s.x_length.to_string()),
            ("n_x", s.n_x.to_string()),
            ("layout", s.layout.name().into()),
            ("p_left", s.p_left.to_string()),
            ("p_right", s.p_right.to_string()),
            ("n_p", s.n_p.to_string()),
            ("t_end", s.t_end.to_string()),
            ("n_t", s.n_t.to_string()),
            ("order", s.order.to_string()),
            ("basis", s.basis.name().into()),
            ("initial", format_initial(s.initial)),
            ("recovery", format_recovery(s.recovery)),
            ("sample_times", times),
            ("scheme", self.scheme.name().into()),
            ("compare", self.compare.map_or("none", |c| c.name()).into()),
            ("norm", self.norm.name().into()),
            ("allow_unstable", s.options.allow_unstable.to_string()),
            ("output_dir", self.output_dir.display().to_string()),
        ]
    }

    /// SHA-256 of the canonical text.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }
}

/// Parses config text. Later assignments win; the result is not yet
/// validated.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut config = RunConfig::default();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let at = |mut e: ConfigError| {
            e.line = Some(i + 1);
            e
        };
        let (key, value) = line.split_once('=').ok_or_else(|| {
            at(ConfigError {
                line: None,
                key: None,
                message: format!("expected `key = value`, got `{line}`"),
            })
        })?;
        config.set(key.trim(), value.trim()).map_err(at)?;
    }
    Ok(config)
}

/// Reads a config file, or the `config` section of a run manifest so that a
/// previous run can be replayed. Not yet finalized.
pub fn read_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
        line: None,
        key: None,
        message: format!("cannot read {}: {e}", path.display()),
    })?;
    let config = if text.trim_start().starts_with('{') {
        let manifest: serde_json::Value = serde_json::from_str(&text).map_err(|e| ConfigError {
            line: Some(e.line()),
            key: None,
            message: format!("invalid manifest JSON: {e}"),
        })?;
        let entries = manifest
            .get("config")
            .and_then(|c| c.as_object())
            .ok_or_else(|| err("config", "manifest has no config object"))?;
        let mut config = RunConfig::default();
        for (key, value) in entries {
            let value = value.as_str().ok_or_else(|| err(key, "manifest values must be strings"))?;
            config.set(key, value)?;
        }
        config
    } else {
        parse_config(&text)?
    };
    Ok(config)
}
