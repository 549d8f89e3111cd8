//! `cls-solver`: run the reaction-diffusion solvers from a flat config file.
//!
//! Exit status: 0 success, 2 configuration error, 3 divergence or failed
//! stability screening, 4 sweep slope outside the acceptance band, 1 any
//! other failure.

mod config;
mod output;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use cls_core::analysis::{error_fields, scalar_error, sweep_dp, sweep_dx, sweep_truncation, ConvergenceStudy, Scenario, SweepParam, RELATIVE_FLOOR};
use cls_core::carleman::{assemble_carleman_with, CarlemanIndexMap, DEFAULT_MAX_NNZ};
use cls_core::evolve::{stability_check, Scheme, StabilityReport, Trajectory};
use cls_core::model::build_polynomial_system;
use cls_core::schrodinger::{build_central_gradient, build_upwind_gradient, hermitian_split, verify_skew_hermitian};
use serde_json::{json, Value};

use crate::config::{read_config, ConfigError, RunConfig};
use crate::output::{convergence_by_time_csv, convergence_csv, error_field_csv, trajectory_csv, wpt_csv, Outputs};

#[derive(Parser, Debug)]
#[command(name = "cls-solver", version, about = "Carleman linearization and Schrodingerization solvers for 1-D reaction-diffusion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one solver and write its trajectory and manifest.
    Solve {
        #[command(flatten)]
        common: Common,
    },
    /// Run a convergence sweep and fit the log-log slope.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Swept quantity: K, dx or dp.
        #[arg(long)]
        param: String,
        /// Comma-separated list: orders for K, node counts n_x for dx, node
        /// counts n_p for dp.
        #[arg(long)]
        values: String,
        /// Acceptance band `lo:hi` for the fitted slope.
        #[arg(long, allow_hyphen_values = true)]
        band: Option<String>,
        /// Sample time whose slope decides the exit status (default: last).
        #[arg(long)]
        at_time: Option<f64>,
        /// Node count of the fine FDM reference in a dx sweep.
        #[arg(long)]
        reference_n_x: Option<usize>,
        /// Sweep points run concurrently.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Report the skew-Hermitian residual and the stability numbers only.
    Check {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args, Debug)]
struct Common {
    /// Config file, or a manifest of an earlier run to replay.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run even when stability screening flags the configuration.
    #[arg(long)]
    allow_unstable: bool,
    #[command(flatten)]
    overrides: Overrides,
}

/// One flag per config key.
#[derive(Args, Debug, Default)]
#[command(next_help_heading = "Config overrides (same names as the config keys)")]
struct Overrides {
    #[arg(long)]
    diffusion: Option<String>,
    #[arg(long)]
    linear_rate: Option<String>,
    #[arg(long)]
    quadratic_rate: Option<String>,
    #[arg(long)]
    x_length: Option<String>,
    #[arg(long)]
    n_x: Option<String>,
    #[arg(long)]
    layout: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    p_left: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    p_right: Option<String>,
    #[arg(long)]
    n_p: Option<String>,
    #[arg(long)]
    t_end: Option<String>,
    #[arg(long)]
    n_t: Option<String>,
    #[arg(long)]
    dt: Option<String>,
    #[arg(long)]
    order: Option<String>,
    #[arg(long)]
    basis: Option<String>,
    #[arg(long)]
    initial: Option<String>,
    #[arg(long)]
    recovery: Option<String>,
    #[arg(long)]
    sample_times: Option<String>,
    #[arg(long)]
    scheme: Option<String>,
    #[arg(long)]
    compare: Option<String>,
    #[arg(long)]
    norm: Option<String>,
    #[arg(long)]
    output_dir: Option<String>,
}

impl Overrides {
    fn pairs(&self) -> Vec<(&'static str, &str)> {
        let fields = [
            ("diffusion", &self.diffusion),
            ("linear_rate", &self.linear_rate),
            ("quadratic_rate", &self.quadratic_rate),
            ("x_length", &self.x_length),
            ("n_x", &self.n_x),
            ("layout", &self.layout),
            ("p_left", &self.p_left),
            ("p_right", &self.p_right),
            ("n_p", &self.n_p),
            ("t_end", &self.t_end),
            ("n_t", &self.n_t),
            ("dt", &self.dt),
            ("order", &self.order),
            ("basis", &self.basis),
            ("initial", &self.initial),
            ("recovery", &self.recovery),
            ("sample_times", &self.sample_times),
            ("scheme", &self.scheme),
            ("compare", &self.compare),
            ("norm", &self.norm),
            ("output_dir", &self.output_dir),
        ];
        fields.into_iter().filter_map(|(k, v)| v.as_deref().map(|v| (k, v))).collect()
    }
}

enum Failure {
    Config(String),
    Numerical(String),
    Band(String),
    Other(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Numerical(_) => 3,
            Failure::Band(_) => 4,
            Failure::Other(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Numerical(m) | Failure::Band(m) | Failure::Other(m) => m,
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(format!("config error: {e}"))
    }
}

impl From<cls_core::Error> for Failure {
    fn from(e: cls_core::Error) -> Self {
        use cls_core::Error as E;
        match e {
            E::Divergence { .. } | E::Unstable(_) => Failure::Numerical(e.to_string()),
            E::InvalidParameter { .. } | E::DimensionCap { .. } | E::NonPositiveRecovery { .. } | E::UnknownTime(_) => Failure::Config(format!("config error: {e}")),
            _ => Failure::Other(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Other(format!("i/o error: {e}"))
    }
}

fn resolve(common: &Common) -> Result<RunConfig, Failure> {
    let mut config = match &common.config {
        Some(path) => read_config(path)?,
        None => RunConfig::default(),
    };
    for (key, value) in common.overrides.pairs() {
        config.set(key, value)?;
    }
    if common.allow_unstable {
        config.scenario.options.allow_unstable = true;
    }
    Ok(config.finalize()?)
}

fn config_json(config: &RunConfig) -> Value {
    let map: BTreeMap<&str, String> = config.entries().into_iter().collect();
    json!(map)
}

fn derived_json(s: &Scenario) -> Result<Value, Failure> {
    let map = CarlemanIndexMap::new(s.n_x, s.order, s.basis)?;
    Ok(json!({
        "dx": s.grid()?.dx(),
        "dp": s.aux_grid()?.dp(),
        "dt": s.time_grid()?.dt(),
        "carleman_dim": map.total_dim(),
        "wpt_dim": map.total_dim() * s.n_p,
    }))
}

fn stability_json(r: &StabilityReport) -> Value {
    json!({
        "diffusion_number": r.diffusion_number,
        "advection_number": r.advection_number,
        "spectral_radius_estimate": r.spectral_radius,
        "flags": r.flags,
        "passes": r.passes(),
    })
}

/// Stability numbers for the scheme that is run.
fn screen(s: &Scenario, scheme: Scheme) -> Result<StabilityReport, Failure> {
    let grid = s.grid()?;
    let time_grid = s.time_grid()?;
    if matches!(scheme, Scheme::Cls | Scheme::Exact) {
        let system = build_polynomial_system(&s.params, &grid)?;
        let op = assemble_carleman_with(&system, s.order, s.basis, DEFAULT_MAX_NNZ)?;
        let split = hermitian_split(&op.matrix)?;
        let aux = s.aux_grid()?;
        Ok(stability_check(&s.params, &grid, &time_grid, Some((&split, &aux))))
    } else {
        Ok(stability_check(&s.params, &grid, &time_grid, None))
    }
}

fn diagnostics_json(t: &Trajectory) -> Value {
    let d = &t.diagnostics;
    json!({
        "scheme": t.scheme.name(),
        "steps": d.steps,
        "max_magnitude": d.max_magnitude,
        "state_dim": d.state_dim,
        "recovery_nodes": d.recovery_nodes,
        "recovery_imag_residual": d.recovery_imag_residual,
        "p_truncation_weight": d.p_truncation_weight,
    })
}

fn write_manifest(outputs: &mut Outputs, mut manifest: Value, started: Instant) -> Result<(), Failure> {
    manifest["wall_clock_seconds"] = json!(started.elapsed().as_secs_f64());
    manifest["outputs"] = json!(outputs.files);
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Failure::Other(e.to_string()))? + "\n";
    outputs.write("manifest.json", &text)?;
    Ok(())
}

fn base_manifest(command: &str, config: &RunConfig) -> Result<Value, Failure> {
    Ok(json!({
        "tool": "cls-solver",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "config": config_json(config),
        "config_sha256": config.digest(),
        "derived": derived_json(&config.scenario)?,
        "relative_error_floor": RELATIVE_FLOOR,
    }))
}

fn solve(common: &Common) -> Result<(), Failure> {
    let started = Instant::now();
    let config = resolve(common)?;
    let s = &config.scenario;
    let report = screen(s, config.scheme)?;
    if !report.passes() && !s.options.allow_unstable {
        return Err(Failure::Numerical(format!("stability screening failed: {}", report.flags.join("; "))));
    }
    let run = s.run_with_snapshots(config.scheme)?;
    let mut outputs = Outputs::new(&config.output_dir);
    outputs.write("trajectory.csv", &trajectory_csv(&run))?;
    if !run.diagnostics.wpt_snapshots.is_empty() {
        let aux = s.aux_grid()?;
        outputs.write("wpt_state.csv", &wpt_csv(&run.diagnostics.wpt_snapshots, aux.nodes(), run.grid.nodes()))?;
    }
    let mut manifest = base_manifest("solve", &config)?;
    manifest["stability"] = stability_json(&report);
    manifest["diagnostics"] = diagnostics_json(&run);
    if let Some(reference_scheme) = config.compare {
        let reference = s.run(reference_scheme)?;
        let field = error_fields(&run, &reference)?;
        outputs.write("error_field.csv", &error_field_csv(&field))?;
        let errors = field
            .times
            .iter()
            .map(|&t| {
                Ok(json!({
                    "t": t,
                    "l2": scalar_error(&field, cls_core::analysis::Norm::L2, t)?,
                    "max": scalar_error(&field, cls_core::analysis::Norm::Max, t)?,
                }))
            })
            .collect::<Result<Vec<_>, cls_core::Error>>()?;
        manifest["reference"] = json!({
            "diagnostics": diagnostics_json(&reference),
            "errors": errors,
        });
    }
    write_manifest(&mut outputs, manifest, started)?;
    println!("wrote {}", outputs.path("trajectory.csv").display());
    Ok(())
}

fn parse_list<T: std::str::FromStr>(key: &str, text: &str) -> Result<Vec<T>, Failure> {
    text.split(',')
        .map(|v| {
            v.trim()
                .parse::<T>()
                .map_err(|_| Failure::Config(format!("config error: `{key}`: cannot parse `{}`", v.trim())))
        })
        .collect()
}

fn default_band(param: SweepParam) -> (f64, f64) {
    match param {
        SweepParam::Dx => (1.7, 2.3),
        SweepParam::Order | SweepParam::Dp => (0.7, 1.3),
    }
}

#[allow(clippy::too_many_arguments)]
fn sweep(common: &Common, param: &str, values: &str, band: Option<&str>, at_time: Option<f64>, reference_n_x: Option<usize>, jobs: usize) -> Result<(), Failure> {
    let started = Instant::now();
    let config = resolve(common)?;
    let s = &config.scenario;
    let param = SweepParam::parse(param).ok_or_else(|| Failure::Config(format!("config error: unknown sweep parameter `{param}` (K, dx, dp)")))?;
    let counts: Vec<usize> = parse_list("values", values)?;
    let (lo, hi) = match band {
        None => default_band(param),
        Some(b) => {
            let parts: Vec<f64> = b
                .split(':')
                .map(|v| v.parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|_| Failure::Config(format!("config error: `band`: expected `lo:hi`, got `{b}`")))?;
            match parts.as_slice() {
                [lo, hi] if lo <= hi => (*lo, *hi),
                _ => return Err(Failure::Config(format!("config error: `band`: expected `lo:hi`, got `{b}`"))),
            }
        }
    };
    let studies: Vec<ConvergenceStudy> = match param {
        SweepParam::Order => sweep_truncation(s, &counts, config.norm, jobs)?,
        SweepParam::Dx => sweep_dx(s, &counts, reference_n_x, config.norm, jobs)?,
        SweepParam::Dp => sweep_dp(s, &counts, config.norm, jobs)?,
    };
    let gate = match at_time {
        None => studies.last().expect("at least one sample time"),
        Some(t) => studies
            .iter()
            .find(|st| (st.time - t).abs() <= 1e-12 * t.abs().max(1.0))
            .ok_or_else(|| Failure::Config(format!("config error: `at_time`: {t} is not a sample time")))?,
    };
    let digest = config.digest();
    let mut outputs = Outputs::new(&config.output_dir);
    outputs.write("convergence.csv", &convergence_csv(gate, &digest))?;
    outputs.write("convergence_by_time.csv", &convergence_by_time_csv(&studies, &digest))?;
    let in_band = (lo..=hi).contains(&gate.fitted_slope);
    let mut manifest = base_manifest("sweep", &config)?;
    manifest["sweep"] = json!({
        "param": param.name(),
        "values": counts,
        "band": [lo, hi],
        "gate_time": gate.time,
        "fitted_slope": gate.fitted_slope,
        "fit_residual": gate.fit_residual,
        "in_band": in_band,
        "studies": studies.iter().map(|st| json!({
            "t": st.time,
            "samples": st.samples,
            "fitted_slope": st.fitted_slope,
            "fit_residual": st.fit_residual,
        })).collect::<Vec<_>>(),
    });
    write_manifest(&mut outputs, manifest, started)?;
    println!("{} slope at t={}: {:.4} (band {lo}..{hi})", param.name(), gate.time, gate.fitted_slope);
    if in_band {
        Ok(())
    } else {
        Err(Failure::Band(format!("fitted slope {:.4} outside [{lo}, {hi}]", gate.fitted_slope)))
    }
}

fn check(common: &Common) -> Result<(), Failure> {
    let config = resolve(common)?;
    let s = &config.scenario;
    let grid = s.grid()?;
    let aux = s.aux_grid()?;
    let system = build_polynomial_system(&s.params, &grid)?;
    let op = assemble_carleman_with(&system, s.order, s.basis, DEFAULT_MAX_NNZ)?;
    let split = hermitian_split(&op.matrix)?;
    let central = if aux.n_p() >= 3 {
        Some(verify_skew_hermitian(&split, &build_central_gradient(&aux)?)?)
    } else {
        None
    };
    let upwind = verify_skew_hermitian(&split, &build_upwind_gradient(&aux))?;
    let report = stability_check(&s.params, &grid, &s.time_grid()?, Some((&split, &aux)));
    let out = json!({
        "config_sha256": config.digest(),
        "derived": derived_json(s)?,
        "skew_residual_central": central,
        "skew_residual_upwind": upwind,
        "stability": stability_json(&report),
    });
    println!("{}", serde_json::to_string_pretty(&out).map_err(|e| Failure::Other(e.to_string()))?);
    if report.passes() || s.options.allow_unstable {
        Ok(())
    } else {
        Err(Failure::Numerical(format!("stability screening failed: {}", report.flags.join("; "))))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Solve { common } => solve(common),
        Command::Sweep {
            common,
            param,
            values,
            band,
            at_time,
            reference_n_x,
            jobs,
        } => sweep(common, param, values, band.as_deref(), *at_time, *reference_n_x, *jobs),
        Command::Check { common } => check(common),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("cls-solver: {}", failure.message());
            ExitCode::from(failure.code())
        }
    }
}
