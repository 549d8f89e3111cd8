//! Error fields between trajectories, scalar error norms, convergence sweeps
//! over `K`, `dx` and `dp`, and log-log slope fits.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use num_complex::Complex64;

use crate::carleman::{assemble_carleman_with, lift_state_in, project_state, CarlemanBasis, DEFAULT_MAX_NNZ};
use crate::error::{Error, Result};
use crate::evolve::{evolve_cl, evolve_cls, evolve_fdm, exact_expm_evolve, ClsSetup, Diagnostics, EvolveOptions, Scheme, TimeGrid, Trajectory};
use crate::model::{build_polynomial_system, initial_profile, FieldState, NodeLayout, ReactionDiffusionParams, SpatialGrid1D};
use crate::schrodinger::{build_aux_grid, initialize_wpt_state, recover_state, AuxGrid, RecoverySpec, WptSystem};

/// Added to `|reference|` before dividing, so nodes where the reference
/// vanishes do not blow up the relative error.
pub const RELATIVE_FLOOR: f64 = 1e-12;

/// Pointwise errors of a candidate trajectory against a reference, on the
/// reference nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorField {
    pub times: Vec<f64>,
    pub node_coords: Vec<f64>,
    /// Spacing of the reference grid, used as the quadrature weight.
    pub dx: f64,
    /// `abs_error[t][j]`.
    pub abs_error: Vec<Vec<f64>>,
    pub rel_error: Vec<Vec<f64>>,
}

/// Linear interpolation of `values` on `grid` at `x`, with the zero
/// boundary values placed at the ghost nodes.
pub fn interpolate(grid: &SpatialGrid1D, values: &[f64], x: f64) -> f64 {
    let (left, right) = grid.ghost_coords();
    if x <= left || x >= right {
        return 0.0;
    }
    let s = (x - left) / grid.dx();
    let cell = (s.floor() as usize).min(grid.n_x());
    let w = s - cell as f64;
    let at = |i: usize| if i == 0 || i > grid.n_x() { 0.0 } else { values[i - 1] };
    (1.0 - w) * at(cell) + w * at(cell + 1)
}

pub fn error_fields(candidate: &Trajectory, reference: &Trajectory) -> Result<ErrorField> {
    if candidate.times.len() != reference.times.len() {
        return Err(Error::DimensionMismatch {
            context: "number of sample times",
            expected: reference.times.len(),
            found: candidate.times.len(),
        });
    }
    for (&c, &r) in candidate.times.iter().zip(&reference.times) {
        if (c - r).abs() > 1e-12 * r.abs().max(1.0) {
            return Err(Error::TimeMismatch {
                candidate: c,
                reference: r,
            });
        }
    }
    let same_grid = candidate.grid == reference.grid;
    let nodes = reference.grid.nodes();
    let mut abs_error = Vec::with_capacity(reference.times.len());
    let mut rel_error = Vec::with_capacity(reference.times.len());
    for (cand, refr) in candidate.states.iter().zip(&reference.states) {
        let values: Vec<f64> = if same_grid {
            cand.values.clone()
        } else {
            nodes.iter().map(|&x| interpolate(&candidate.grid, &cand.values, x)).collect()
        };
        let abs: Vec<f64> = values.iter().zip(&refr.values).map(|(c, r)| (c - r).abs()).collect();
        let rel = abs.iter().zip(&refr.values).map(|(a, r)| a / (r.abs() + RELATIVE_FLOOR)).collect();
        abs_error.push(abs);
        rel_error.push(rel);
    }
    Ok(ErrorField {
        times: reference.times.clone(),
        node_coords: nodes.to_vec(),
        dx: reference.grid.dx(),
        abs_error,
        rel_error,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Norm {
    /// `sqrt(Σ_j rel_j² dx)`.
    #[default]
    L2,
    /// `max_j rel_j`.
    Max,
}

impl Norm {
    pub fn name(self) -> &'static str {
        match self {
            Norm::L2 => "l2",
            Norm::Max => "max",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "l2" => Some(Norm::L2),
            "max" => Some(Norm::Max),
            _ => None,
        }
    }

    pub fn apply(self, rel: &[f64], dx: f64) -> f64 {
        match self {
            Norm::L2 => (rel.iter().map(|r| r * r).sum::<f64>() * dx).sqrt(),
            Norm::Max => rel.iter().copied().fold(0.0, f64::max),
        }
    }
}

pub fn scalar_error(field: &ErrorField, norm: Norm, at_time: f64) -> Result<f64> {
    let i = field
        .times
        .iter()
        .position(|&t| (t - at_time).abs() <= 1e-12 * at_time.abs().max(1.0))
        .ok_or(Error::UnknownTime(at_time))?;
    Ok(norm.apply(&field.rel_error[i], field.dx))
}

/// Least-squares line through `(log x, log e)`. Returns the slope and the
/// largest absolute residual in log space.
pub fn fit_loglog_slope(samples: &[(f64, f64)]) -> Result<(f64, f64)> {
    if samples.len() < 3 {
        return Err(Error::InvalidParameter {
            name: "samples",
            reason: format!("need at least three points, got {}", samples.len()),
        });
    }
    for (index, &(x, e)) in samples.iter().enumerate() {
        if !(x > 0.0) {
            return Err(Error::NonPositiveSample { index, value: x });
        }
        if !(e > 0.0) {
            return Err(Error::NonPositiveSample { index, value: e });
        }
    }
    let pts: Vec<(f64, f64)> = samples.iter().map(|&(x, e)| (x.ln(), e.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter {
            name: "samples",
            reason: "all abscissae coincide".into(),
        });
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = pts
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).abs())
        .fold(0.0, f64::max);
    Ok((slope, residual))
}

/// Parameter varied by a sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepParam {
    /// Truncation order; the fit uses `1/K` as abscissa.
    Order,
    Dx,
    Dp,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Order => "K",
            SweepParam::Dx => "dx",
            SweepParam::Dp => "dp",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "K" | "k" => Some(SweepParam::Order),
            "dx" => Some(SweepParam::Dx),
            "dp" => Some(SweepParam::Dp),
            _ => None,
        }
    }

    fn abscissa(self, value: f64) -> f64 {
        match self {
            SweepParam::Order => 1.0 / value,
            _ => value,
        }
    }
}

/// Errors at one sample time across the sweep, with the fitted order.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceStudy {
    pub parameter: SweepParam,
    pub time: f64,
    /// `(parameter value, scalar error)`.
    pub samples: Vec<(f64, f64)>,
    pub fitted_slope: f64,
    pub fit_residual: f64,
}

impl ConvergenceStudy {
    pub fn new(parameter: SweepParam, time: f64, samples: Vec<(f64, f64)>) -> Result<Self> {
        let increasing = samples.windows(2).all(|w| w[1].0 > w[0].0);
        let decreasing = samples.windows(2).all(|w| w[1].0 < w[0].0);
        if !(increasing || decreasing) {
            return Err(Error::InvalidParameter {
                name: "sweep values",
                reason: "must be strictly monotone".into(),
            });
        }
        let mapped: Vec<(f64, f64)> = samples.iter().map(|&(v, e)| (parameter.abscissa(v), e)).collect();
        let (fitted_slope, fit_residual) = fit_loglog_slope(&mapped)?;
        Ok(Self {
            parameter,
            time,
            samples,
            fitted_slope,
            fit_residual,
        })
    }

    /// Ratio of consecutive errors, first over second.
    pub fn ratios(&self) -> Vec<f64> {
        self.samples.windows(2).map(|w| w[0].1 / w[1].1).collect()
    }
}

/// Initial field.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub enum InitialCondition {
    /// `0.5 - 0.5 cos(2πx)`.
    #[default]
    Cosine,
    Constant(f64),
}

impl InitialCondition {
    pub fn sample(self, grid: &SpatialGrid1D) -> FieldState {
        let values = match self {
            InitialCondition::Cosine => grid.nodes().iter().map(|&x| initial_profile(x)).collect(),
            InitialCondition::Constant(v) => vec![v; grid.n_x()],
        };
        FieldState::new(0.0, values)
    }
}

/// Everything needed to run one solver on one configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub params: ReactionDiffusionParams,
    pub x_length: f64,
    pub n_x: usize,
    pub layout: NodeLayout,
    pub p_left: f64,
    pub p_right: f64,
    pub n_p: usize,
    pub t_end: f64,
    pub n_t: usize,
    pub order: usize,
    pub basis: CarlemanBasis,
    pub initial: InitialCondition,
    pub recovery: RecoverySpec,
    pub options: EvolveOptions,
}

impl Scenario {
    /// The full-size configuration: `D = 1, Q = 1, R = -1`, 36 nodes on
    /// `(0, 1)`, 256 nodes on `[-20, 20)`, `dt = 1e-6` up to `T = 0.4`, `K = 3`.
    pub fn full_size() -> Self {
        Self {
            params: ReactionDiffusionParams::default(),
            x_length: 1.0,
            n_x: 36,
            layout: NodeLayout::default(),
            p_left: -20.0,
            p_right: 20.0,
            n_p: 256,
            t_end: 0.4,
            n_t: 400_000,
            order: 3,
            basis: CarlemanBasis::default(),
            initial: InitialCondition::default(),
            recovery: RecoverySpec::default(),
            options: EvolveOptions::default(),
        }
    }

    /// Reduced configuration: 12 nodes, `p ∈ [-10, 10)` with 128 nodes.
    pub fn desk() -> Self {
        Self {
            n_x: 12,
            p_left: -10.0,
            p_right: 10.0,
            n_p: 128,
            ..Self::full_size()
        }
    }

    pub fn grid(&self) -> Result<SpatialGrid1D> {
        SpatialGrid1D::new(self.x_length, self.n_x, self.layout)
    }

    pub fn aux_grid(&self) -> Result<AuxGrid> {
        build_aux_grid(self.p_left, self.p_right, self.n_p)
    }

    pub fn time_grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.t_end, self.n_t)
    }

    pub fn sample_times(&self) -> Result<Vec<f64>> {
        Ok(self.options.resolve_times(&self.time_grid()?))
    }

    pub fn run(&self, scheme: Scheme) -> Result<Trajectory> {
        self.run_inner(scheme, false)
    }

    /// As [`Scenario::run`], keeping the physical part of the warped state
    /// at `t = 0` and at every sample time of a CLS run.
    pub fn run_with_snapshots(&self, scheme: Scheme) -> Result<Trajectory> {
        self.run_inner(scheme, true)
    }

    fn run_inner(&self, scheme: Scheme, capture_snapshots: bool) -> Result<Trajectory> {
        self.params.validate()?;
        let grid = self.grid()?;
        let time_grid = self.time_grid()?;
        let phi0 = self.initial.sample(&grid);
        match scheme {
            Scheme::Fdm => evolve_fdm(&self.params, &grid, &phi0, &time_grid, &self.options),
            Scheme::Cl => {
                let system = build_polynomial_system(&self.params, &grid)?;
                let op = assemble_carleman_with(&system, self.order, self.basis, DEFAULT_MAX_NNZ)?;
                let lifted = lift_state_in(&phi0, &op.index_map)?;
                evolve_cl(&op, &lifted, &grid, &time_grid, &self.options)
            }
            Scheme::Cls => {
                let system = build_polynomial_system(&self.params, &grid)?;
                let setup = ClsSetup {
                    recovery: self.recovery,
                    basis: self.basis,
                    capture_snapshots,
                    ..ClsSetup::new(self.order, self.aux_grid()?)
                };
                evolve_cls(&system, &self.params, &phi0, &setup, &time_grid, &self.options)
            }
            Scheme::Exact => self.run_exact(&grid, &phi0, &time_grid),
        }
    }

    /// Recovered field from `e^{tH̃}ψ(0)` with the upwind `H̃`, evaluated
    /// by series at each sample time.
    fn run_exact(&self, grid: &SpatialGrid1D, phi0: &FieldState, time_grid: &TimeGrid) -> Result<Trajectory> {
        let system = build_polynomial_system(&self.params, grid)?;
        let op = assemble_carleman_with(&system, self.order, self.basis, DEFAULT_MAX_NNZ)?;
        let lifted = lift_state_in(phi0, &op.index_map)?;
        let aux = self.aux_grid()?;
        let wpt = WptSystem::upwind(&op.matrix, aux.clone())?;
        let dim = wpt.h_tilde.dim();
        if dim > crate::evolve::EXPM_DIM_CAP {
            return Err(Error::DimensionCap {
                dim,
                cap: crate::evolve::EXPM_DIM_CAP,
            });
        }
        let generator = wpt.h_tilde.materialize();
        let times = self.options.resolve_times(time_grid);
        let mut psi = initialize_wpt_state(&lifted, &aux);
        let mut now = 0.0;
        let mut states = Vec::with_capacity(times.len());
        let mut imag = 0.0f64;
        for &t in &times {
            psi.values = exact_expm_evolve::<Complex64>(&generator, &psi.values, t - now)?;
            psi.time = phi0.time + t;
            now = t;
            let rec = recover_state(&psi, &aux, &self.recovery, &op.index_map)?;
            imag = imag.max(rec.imag_residual);
            states.push(project_state(&rec.state));
        }
        Ok(Trajectory {
            scheme: Scheme::Exact,
            grid: grid.clone(),
            times: times.iter().map(|t| phi0.time + t).collect(),
            states,
            diagnostics: Diagnostics {
                recovery_imag_residual: imag,
                state_dim: dim,
                ..Diagnostics::default()
            },
        })
    }
}

/// Maps `f` over `items` on up to `jobs` threads, keeping the input order.
pub fn par_map<T: Sync, R: Send>(items: &[T], jobs: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    if jobs <= 1 || items.len() <= 1 {
        return items.iter().map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<R>>> = items.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..jobs.min(items.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                *slots[i].lock().expect("no panics while holding the slot") = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().expect("slot lock").expect("every slot filled"))
        .collect()
}

/// One study per sample time from per-point error fields.
fn studies(parameter: SweepParam, values: &[f64], fields: &[ErrorField], norm: Norm) -> Result<Vec<ConvergenceStudy>> {
    let times = &fields[0].times;
    times
        .iter()
        .map(|&t| {
            let samples = values
                .iter()
                .zip(fields)
                .map(|(&v, f)| Ok((v, scalar_error(f, norm, t)?)))
                .collect::<Result<Vec<_>>>()?;
            ConvergenceStudy::new(parameter, t, samples)
        })
        .collect()
}

fn need_three(count: usize) -> Result<()> {
    if count < 3 {
        return Err(Error::InvalidParameter {
            name: "sweep values",
            reason: format!("need at least three, got {count}"),
        });
    }
    Ok(())
}

/// CL at each order against FDM on the same grid.
pub fn sweep_truncation(base: &Scenario, orders: &[usize], norm: Norm, jobs: usize) -> Result<Vec<ConvergenceStudy>> {
    need_three(orders.len())?;
    let reference = base.run(Scheme::Fdm)?;
    let fields = par_map(orders, jobs, |&k| {
        let run = Scenario { order: k, ..base.clone() }.run(Scheme::Cl)?;
        error_fields(&run, &reference)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let values: Vec<f64> = orders.iter().map(|&k| k as f64).collect();
    studies(SweepParam::Order, &values, &fields, norm)
}

/// Node count of the FDM reference for a `dx` sweep: four times finer than
/// the finest sweep grid, with nested nodes.
pub fn reference_n_x(layout: NodeLayout, finest: usize) -> usize {
    match layout {
        NodeLayout::Vertex => 4 * (finest + 1) - 1,
        NodeLayout::CellCentered | NodeLayout::LeftOffset => 4 * finest,
    }
}

/// CLS at each `n_x` against a fine-grid FDM reference, interpolated onto
/// the sweep grids. The sample parameter is `dx`.
pub fn sweep_dx(base: &Scenario, n_x_values: &[usize], reference: Option<usize>, norm: Norm, jobs: usize) -> Result<Vec<ConvergenceStudy>> {
    need_three(n_x_values.len())?;
    let finest = n_x_values.iter().copied().max().unwrap_or(1);
    let n_ref = reference.unwrap_or_else(|| reference_n_x(base.layout, finest));
    let fine = Scenario { n_x: n_ref, ..base.clone() }.run(Scheme::Fdm)?;
    let results = par_map(n_x_values, jobs, |&n_x| -> Result<(f64, ErrorField)> {
        let scenario = Scenario { n_x, ..base.clone() };
        let run = scenario.run(Scheme::Cls)?;
        let dx = run.grid.dx();
        // error measured on the sweep grid against the interpolated reference
        let reference = Trajectory {
            grid: run.grid.clone(),
            states: fine
                .states
                .iter()
                .map(|s| FieldState::new(s.time, run.grid.nodes().iter().map(|&x| interpolate(&fine.grid, &s.values, x)).collect()))
                .collect(),
            ..fine.clone()
        };
        Ok((dx, error_fields(&run, &reference)?))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let values: Vec<f64> = results.iter().map(|r| r.0).collect();
    let fields: Vec<ErrorField> = results.into_iter().map(|r| r.1).collect();
    studies(SweepParam::Dx, &values, &fields, norm)
}

/// CLS at each `n_p` against CL at the same `n_x` and `K`. The sample
/// parameter is `dp`.
pub fn sweep_dp(base: &Scenario, n_p_values: &[usize], norm: Norm, jobs: usize) -> Result<Vec<ConvergenceStudy>> {
    need_three(n_p_values.len())?;
    let reference = base.run(Scheme::Cl)?;
    let results = par_map(n_p_values, jobs, |&n_p| -> Result<(f64, ErrorField)> {
        let scenario = Scenario { n_p, ..base.clone() };
        let dp = scenario.aux_grid()?.dp();
        Ok((dp, error_fields(&scenario.run(Scheme::Cls)?, &reference)?))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let values: Vec<f64> = results.iter().map(|r| r.0).collect();
    let fields: Vec<ErrorField> = results.into_iter().map(|r| r.1).collect();
    studies(SweepParam::Dp, &values, &fields, norm)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj(grid: SpatialGrid1D, times: &[f64], rows: &[&[f64]]) -> Trajectory {
        Trajectory {
            scheme: Scheme::Fdm,
            grid,
            times: times.to_vec(),
            states: times.iter().zip(rows).map(|(&t, r)| FieldState::new(t, r.to_vec())).collect(),
            diagnostics: Diagnostics::default(),
        }
    }

    fn unit(n: usize) -> SpatialGrid1D {
        SpatialGrid1D::with_spacing(1.0, n, NodeLayout::Vertex).unwrap()
    }

    #[test]
    fn self_error_is_zero() {
        let t = traj(unit(3), &[0.1, 0.2], &[&[1.0, 2.0, 3.0], &[0.0, -1.0, 4.0]]);
        let f = error_fields(&t, &t).unwrap();
        assert!(f.abs_error.iter().flatten().all(|&v| v == 0.0));
        assert!(f.rel_error.iter().flatten().all(|&v| v == 0.0));
        assert_eq!(scalar_error(&f, Norm::L2, 0.2).unwrap(), 0.0);
    }

    #[test]
    fn pointwise_examples() {
        let r = traj(unit(2), &[0.1], &[&[2.0, 0.0]]);
        let c = traj(unit(2), &[0.1], &[&[2.2, 1e-13]]);
        let f = error_fields(&c, &r).unwrap();
        assert!((f.abs_error[0][0] - 0.2).abs() < 1e-12);
        assert!((f.rel_error[0][0] - 0.1).abs() < 1e-12);
        assert!((f.rel_error[0][1] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn time_mismatch_is_rejected() {
        let r = traj(unit(1), &[0.1], &[&[1.0]]);
        let c = traj(unit(1), &[0.2], &[&[1.0]]);
        assert!(matches!(error_fields(&c, &r), Err(Error::TimeMismatch { .. })));
        let c = traj(unit(1), &[0.1, 0.2], &[&[1.0], &[1.0]]);
        assert!(error_fields(&c, &r).is_err());
    }

    #[test]
    fn scalar_norm_examples() {
        let field = ErrorField {
            times: vec![0.4],
            node_coords: vec![0.5],
            dx: 1.0,
            abs_error: vec![vec![0.3]],
            rel_error: vec![vec![0.3]],
        };
        assert!((scalar_error(&field, Norm::L2, 0.4).unwrap() - 0.3).abs() < 1e-15);
        assert!(scalar_error(&field, Norm::L2, 0.3).is_err());
        assert_eq!(Norm::Max.apply(&[0.3, 0.4], 1.0), 0.4);
    }

    #[test]
    fn interpolation_uses_ghost_zeros() {
        let grid = SpatialGrid1D::new(1.0, 3, NodeLayout::Vertex).unwrap();
        let v = [1.0, 2.0, 3.0];
        assert_eq!(interpolate(&grid, &v, 0.25), 1.0);
        assert!((interpolate(&grid, &v, 0.125) - 0.5).abs() < 1e-15);
        assert!((interpolate(&grid, &v, 0.875) - 1.5).abs() < 1e-15);
        assert_eq!(interpolate(&grid, &v, 1.0), 0.0);
        assert!((interpolate(&grid, &v, 0.625) - 2.5).abs() < 1e-15);
    }

    #[test]
    fn slope_examples() {
        let (s, r) = fit_loglog_slope(&[(1.0, 1.0), (2.0, 2.0), (4.0, 4.0)]).unwrap();
        assert!((s - 1.0).abs() < 1e-12 && r < 1e-12);
        let sq: Vec<(f64, f64)> = [0.1, 0.05, 0.025].iter().map(|&h| (h, 3.0 * h * h)).collect();
        let (s, r) = fit_loglog_slope(&sq).unwrap();
        assert!((s - 2.0).abs() < 1e-12 && r < 1e-12);
        assert!(matches!(fit_loglog_slope(&[(1.0, 1.0), (2.0, 0.0), (3.0, 1.0)]), Err(Error::NonPositiveSample { index: 1, .. })));
        assert!(fit_loglog_slope(&[(1.0, 1.0), (2.0, 2.0)]).is_err());
    }

    #[test]
    fn order_study_uses_inverse_k() {
        let samples: Vec<(f64, f64)> = [2.0, 3.0, 4.0].iter().map(|&k| (k, 1.0 / k)).collect();
        let study = ConvergenceStudy::new(SweepParam::Order, 0.4, samples).unwrap();
        assert!((study.fitted_slope - 1.0).abs() < 1e-12);
        let dp: Vec<(f64, f64)> = [0.4, 0.2, 0.1].iter().map(|&h| (h, 7.0 * h)).collect();
        let study = ConvergenceStudy::new(SweepParam::Dp, 0.4, dp).unwrap();
        assert!((study.fitted_slope - 1.0).abs() < 1e-12);
        assert!(study.ratios().iter().all(|r| (r - 2.0).abs() < 1e-12));
        let bad = vec![(1.0, 1.0), (3.0, 1.0), (2.0, 1.0)];
        assert!(ConvergenceStudy::new(SweepParam::Dx, 0.4, bad).is_err());
    }

    #[test]
    fn par_map_keeps_order() {
        let items: Vec<usize> = (0..17).collect();
        assert_eq!(par_map(&items, 4, |&i| i * i), items.iter().map(|i| i * i).collect::<Vec<_>>());
    }

    #[test]
    fn reference_grid_nests() {
        assert_eq!(reference_n_x(NodeLayout::Vertex, 48), 195);
        assert_eq!(reference_n_x(NodeLayout::CellCentered, 48), 192);
    }

    #[test]
    fn scenario_presets() {
        let t = Scenario::full_size();
        assert_eq!(t.time_grid().unwrap().dt(), 1e-6);
        assert_eq!(t.aux_grid().unwrap().dp(), 0.15625);
        assert_eq!(Scenario::desk().n_x, 12);
    }
}
