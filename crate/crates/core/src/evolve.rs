//! Explicit time integration: forward Euler for the nonlinear field and for
//! the Carleman system, the upwind CLS scheme on the warped state, and a
//! series-based exponential used as an exact reference.
//!
//! Trajectories keep only the states at the requested sample times.

use num_complex::Complex64;

use crate::carleman::{assemble_carleman_with, lift_state_in, project_state, CarlemanBasis, CarlemanOperator, CarlemanState, DEFAULT_MAX_NNZ};
use crate::error::{Error, Result};
use crate::model::{rhs_into, FieldState, PolynomialSystem, ReactionDiffusionParams, SpatialGrid1D};
use crate::schrodinger::{hermitian_split, initialize_wpt_state, recover_state, AuxGrid, HermitianSplit, RecoverySpec, WptState};
use crate::sparse::{kron, CsrMatrix, Scalar};

/// States whose largest magnitude exceeds this abort the run.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

/// Largest generator dimension accepted by [`exact_expm_evolve`].
pub const EXPM_DIM_CAP: usize = 4096;

/// Sample times used when none are given.
pub const DEFAULT_SAMPLE_TIMES: [f64; 4] = [0.1, 0.2, 0.3, 0.4];

const CHECK_EVERY: usize = 16;

/// Uniform steps `dt = t_end / n_t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid {
    t_end: f64,
    n_t: usize,
    dt: f64,
}

impl TimeGrid {
    /// `t_end = 0` is accepted and gives `dt = 0`, a run that only
    /// reports the initial state.
    pub fn new(t_end: f64, n_t: usize) -> Result<Self> {
        if !(t_end.is_finite() && t_end >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "t_end",
                reason: format!("must be finite and non-negative, got {t_end}"),
            });
        }
        if n_t == 0 {
            return Err(Error::InvalidParameter {
                name: "n_t",
                reason: "need at least one step".into(),
            });
        }
        Ok(Self {
            t_end,
            n_t,
            dt: t_end / n_t as f64,
        })
    }

    /// Grid with step `dt` reaching `t_end`; `t_end / dt` must be an integer
    /// up to rounding.
    pub fn from_step(dt: f64, t_end: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidParameter {
                name: "dt",
                reason: format!("must be positive, got {dt}"),
            });
        }
        let steps = (t_end / dt).round();
        if (steps * dt - t_end).abs() > 1e-9 * t_end.max(dt) {
            return Err(Error::InvalidParameter {
                name: "dt",
                reason: format!("{t_end} is not a whole number of steps of {dt}"),
            });
        }
        Self::new(t_end, (steps as usize).max(1))
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn n_t(&self) -> usize {
        self.n_t
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Step index at which time `t` is reached.
    pub fn step_of(&self, t: f64) -> Result<usize> {
        if !(0.0..=self.t_end * (1.0 + 1e-12)).contains(&t) {
            return Err(Error::UnknownTime(t));
        }
        if self.dt == 0.0 {
            return Ok(0);
        }
        let n = (t / self.dt).round();
        if (n * self.dt - t).abs() > 1e-9 * self.t_end.max(self.dt) {
            return Err(Error::UnknownTime(t));
        }
        Ok((n as usize).min(self.n_t))
    }
}

/// Default samples that fall inside `[0, t_end]`, plus `t_end` itself.
pub fn default_sample_times(t_end: f64) -> Vec<f64> {
    let mut times: Vec<f64> = DEFAULT_SAMPLE_TIMES
        .iter()
        .copied()
        .filter(|&t| t <= t_end * (1.0 + 1e-12))
        .collect();
    if times.last().is_none_or(|&t| (t - t_end).abs() > 1e-12 * t_end.max(1.0)) {
        times.push(t_end);
    }
    times
}

fn sample_steps(time_grid: &TimeGrid, times: &[f64]) -> Result<Vec<usize>> {
    if times.is_empty() {
        return Err(Error::InvalidParameter {
            name: "sample_times",
            reason: "at least one sample time is needed".into(),
        });
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter {
            name: "sample_times",
            reason: "must be strictly increasing".into(),
        });
    }
    times.iter().map(|&t| time_grid.step_of(t)).collect()
}

/// Which solver produced a trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme {
    Fdm,
    Cl,
    Cls,
    Exact,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Fdm => "fdm",
            Scheme::Cl => "cl",
            Scheme::Cls => "cls",
            Scheme::Exact => "exact",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "fdm" => Some(Scheme::Fdm),
            "cl" => Some(Scheme::Cl),
            "cls" => Some(Scheme::Cls),
            "exact" => Some(Scheme::Exact),
            _ => None,
        }
    }
}

/// Physical part of the warped state at one time: `values[j * n_x + i]` is
/// component `i` of block `j`.
#[derive(Clone, Debug, PartialEq)]
pub struct WptSnapshot {
    pub time: f64,
    pub values: Vec<f64>,
}

/// Run diagnostics carried alongside the sampled states.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Diagnostics {
    pub steps: usize,
    /// Largest magnitude of the evolved state seen at a check.
    pub max_magnitude: f64,
    /// Largest dropped imaginary part over all recoveries.
    pub recovery_imag_residual: f64,
    /// `p` values used by the recovery rule.
    pub recovery_nodes: Vec<f64>,
    /// Weight `e^{-|p|}` of the initial data at the ends of the `p`-domain.
    pub p_truncation_weight: Option<f64>,
    /// Dimension of the evolved state.
    pub state_dim: usize,
    pub wpt_snapshots: Vec<WptSnapshot>,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub scheme: Scheme,
    pub grid: SpatialGrid1D,
    pub times: Vec<f64>,
    pub states: Vec<FieldState>,
    pub diagnostics: Diagnostics,
}

impl Trajectory {
    pub fn state_at(&self, t: f64) -> Result<&FieldState> {
        self.times
            .iter()
            .position(|&s| (s - t).abs() <= 1e-12 * t.abs().max(1.0))
            .map(|i| &self.states[i])
            .ok_or(Error::UnknownTime(t))
    }

    pub fn last(&self) -> &FieldState {
        self.states.last().expect("trajectories hold at least one sample")
    }
}

/// Sample times and the stability override shared by all solvers.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvolveOptions {
    /// `None` uses [`default_sample_times`].
    pub sample_times: Option<Vec<f64>>,
    pub allow_unstable: bool,
}

impl EvolveOptions {
    pub fn at(times: &[f64]) -> Self {
        Self {
            sample_times: Some(times.to_vec()),
            ..Self::default()
        }
    }

    pub fn resolve_times(&self, time_grid: &TimeGrid) -> Vec<f64> {
        self.sample_times
            .clone()
            .unwrap_or_else(|| default_sample_times(time_grid.t_end()))
    }
}

fn max_abs<T: Scalar>(values: &[T]) -> f64 {
    values.iter().fold(0.0f64, |m, v| {
        let a = v.modulus();
        if a.is_nan() || m.is_nan() {
            f64::NAN
        } else {
            m.max(a)
        }
    })
}

fn check_divergence(step: usize, magnitude: f64) -> Result<()> {
    if !(magnitude <= DIVERGENCE_THRESHOLD) {
        return Err(Error::Divergence { step, magnitude });
    }
    Ok(())
}

/// Drives `n_t` steps, calling `record` at each sample step and checking
/// the magnitude every few steps.
fn march<S>(
    state: &mut S,
    n_t: usize,
    samples: &[usize],
    mut magnitude: impl FnMut(&S) -> f64,
    mut step: impl FnMut(&mut S),
    mut record: impl FnMut(&S, usize) -> Result<()>,
) -> Result<f64> {
    let mut next = 0;
    let mut peak = 0.0f64;
    for n in 0..=n_t {
        let sampling = next < samples.len() && samples[next] == n;
        if n % CHECK_EVERY == 0 || n == n_t || sampling {
            let m = magnitude(state);
            check_divergence(n, m)?;
            peak = peak.max(m);
        }
        while next < samples.len() && samples[next] == n {
            record(state, next)?;
            next += 1;
        }
        if n < n_t && next < samples.len() {
            step(state);
        } else if next == samples.len() {
            break;
        }
    }
    Ok(peak)
}

/// Forward Euler on the nonlinear semi-discrete field.
pub fn evolve_fdm(
    params: &ReactionDiffusionParams,
    grid: &SpatialGrid1D,
    phi0: &FieldState,
    time_grid: &TimeGrid,
    options: &EvolveOptions,
) -> Result<Trajectory> {
    params.validate()?;
    phi0.check_against(grid)?;
    let report = stability_check(params, grid, time_grid, None);
    if !options.allow_unstable && report.diffusion_number >= 1.0 {
        return Err(Error::Unstable(report.flags.join("; ")));
    }
    let times = options.resolve_times(time_grid);
    let steps = sample_steps(time_grid, &times)?;
    let dt = time_grid.dt();
    let dx = grid.dx();
    let mut phi = phi0.values.clone();
    let mut rhs = vec![0.0; phi.len()];
    let mut states = Vec::with_capacity(times.len());
    let peak = march(
        &mut phi,
        time_grid.n_t(),
        &steps,
        |phi| max_abs(phi),
        |phi| {
            rhs_into(phi, params, dx, &mut rhs);
            phi.iter_mut().zip(&rhs).for_each(|(p, r)| *p += dt * r);
        },
        |phi, i| {
            states.push(FieldState::new(phi0.time + times[i], phi.clone()));
            Ok(())
        },
    )?;
    Ok(Trajectory {
        scheme: Scheme::Fdm,
        grid: grid.clone(),
        times: times.iter().map(|t| phi0.time + t).collect(),
        states,
        diagnostics: Diagnostics {
            steps: steps.last().copied().unwrap_or(0),
            max_magnitude: peak,
            state_dim: phi0.values.len(),
            ..Diagnostics::default()
        },
    })
}

/// Forward Euler `Φ ← Φ + dt·AΦ` on the truncated Carleman system.
pub fn evolve_cl(
    op: &CarlemanOperator,
    phi0: &CarlemanState,
    grid: &SpatialGrid1D,
    time_grid: &TimeGrid,
    options: &EvolveOptions,
) -> Result<Trajectory> {
    if phi0.values.len() != op.dim() || phi0.index_map != op.index_map {
        return Err(Error::DimensionMismatch {
            context: "lifted state does not match the Carleman operator",
            expected: op.dim(),
            found: phi0.values.len(),
        });
    }
    if op.index_map.base_dim() != grid.n_x() {
        return Err(Error::DimensionMismatch {
            context: "Carleman operator base dimension vs grid",
            expected: grid.n_x(),
            found: op.index_map.base_dim(),
        });
    }
    let times = options.resolve_times(time_grid);
    let steps = sample_steps(time_grid, &times)?;
    let dt = time_grid.dt();
    let mut state = phi0.clone();
    let mut work = vec![0.0; op.dim()];
    let mut states = Vec::with_capacity(times.len());
    let peak = march(
        &mut state.values,
        time_grid.n_t(),
        &steps,
        |v| max_abs(v),
        |v| {
            work.copy_from_slice(v);
            op.matrix.mul_add_into(dt, &work, v);
        },
        |v, i| {
            states.push(FieldState::new(phi0.time + times[i], v[op.index_map.block_range(1)].to_vec()));
            Ok(())
        },
    )?;
    Ok(Trajectory {
        scheme: Scheme::Cl,
        grid: grid.clone(),
        times: times.iter().map(|t| phi0.time + t).collect(),
        states,
        diagnostics: Diagnostics {
            steps: steps.last().copied().unwrap_or(0),
            max_magnitude: peak,
            state_dim: op.dim(),
            ..Diagnostics::default()
        },
    })
}

/// Blocks of one upwind Euler step on the warped state:
/// `ψ_j ← B₁ψ_{j+1} + B₂ψ_j` with `B₁ = -H₁ dt/dp` and
/// `B₂ = I + H₁ dt/dp + iH₂ dt`, indices taken modulo `n_p`.
#[derive(Clone, Debug)]
pub struct StepOperator {
    pub b1: CsrMatrix<Complex64>,
    pub b2: CsrMatrix<Complex64>,
    pub n_p: usize,
    pub dt: f64,
}

impl StepOperator {
    pub fn block_dim(&self) -> usize {
        self.b1.nrows()
    }

    /// The block-circulant matrix `B`: `B₂` on the diagonal, `B₁` on the
    /// superdiagonal and in the bottom-left corner.
    pub fn full_matrix(&self) -> CsrMatrix<Complex64> {
        let n = self.n_p;
        let one = Complex64::new(1.0, 0.0);
        let shift = CsrMatrix::from_triplets(n, n, (0..n).map(|j| (j, (j + 1) % n, one)).collect());
        kron(&CsrMatrix::identity(n), &self.b2)
            .add_scaled(one, &kron(&shift, &self.b1))
            .expect("matching shapes")
    }
}

pub fn assemble_step(split: &HermitianSplit, time_grid: &TimeGrid, aux_grid: &AuxGrid) -> StepOperator {
    let dt = time_grid.dt();
    let lambda = Complex64::new(dt / aux_grid.dp(), 0.0);
    let b1 = split.h1.scaled(-lambda);
    let b2 = CsrMatrix::identity(split.dim())
        .add_scaled(lambda, &split.h1)
        .and_then(|m| m.add_scaled(Complex64::new(0.0, dt), &split.h2))
        .expect("split parts are square and equal in size");
    StepOperator {
        b1,
        b2,
        n_p: aux_grid.n_p(),
        dt,
    }
}

/// One blockwise step with periodic wrap.
pub fn step_cls(psi: &WptState, op: &StepOperator) -> Result<WptState> {
    let m = op.block_dim();
    if psi.block_dim != m || psi.values.len() != m * op.n_p {
        return Err(Error::DimensionMismatch {
            context: "warped state vs step operator",
            expected: m * op.n_p,
            found: psi.values.len(),
        });
    }
    let one = Complex64::new(1.0, 0.0);
    let mut out = vec![Complex64::new(0.0, 0.0); psi.values.len()];
    for j in 0..op.n_p {
        let next = (j + 1) % op.n_p;
        let block = &mut out[j * m..(j + 1) * m];
        op.b2.mul_add_into(one, psi.block(j), block);
        op.b1.mul_add_into(one, psi.block(next), block);
    }
    let step = if op.dt > 0.0 { (psi.time / op.dt).round() as usize + 1 } else { 1 };
    check_divergence(step, max_abs(&out))?;
    Ok(WptState {
        time: psi.time + op.dt,
        block_dim: m,
        values: out,
    })
}

/// Real upwind stepper for a real generator. The state is stored component
/// by component with the `p` index contiguous, so each nonzero of `H₁` or
/// `iH₂` becomes one vectorizable axpy over `n_p` values.
pub(crate) struct RealWptStepper {
    advect: CsrMatrix<f64>,
    phase: CsrMatrix<f64>,
    n_p: usize,
    diff: Vec<f64>,
    out: Vec<f64>,
}

impl RealWptStepper {
    pub(crate) fn new(h1: &CsrMatrix<f64>, skew: &CsrMatrix<f64>, dt: f64, dp: f64, n_p: usize) -> Self {
        let len = h1.nrows() * n_p;
        Self {
            advect: h1.scaled(dt / dp),
            phase: skew.scaled(dt),
            n_p,
            diff: vec![0.0; len],
            out: vec![0.0; len],
        }
    }

    /// `ψ_c ← ψ_c + Σ (dt/dp)H₁[c,d] (ψ_d - Sψ_d) + Σ dt·iH₂[c,d] ψ_d`.
    pub(crate) fn step(&mut self, psi: &mut Vec<f64>) {
        let n_p = self.n_p;
        for (d, row) in self.diff.chunks_exact_mut(n_p).zip(psi.chunks_exact(n_p)) {
            for j in 0..n_p - 1 {
                d[j] = row[j] - row[j + 1];
            }
            d[n_p - 1] = row[n_p - 1] - row[0];
        }
        self.out.copy_from_slice(psi);
        let (ai, aj, av) = (self.advect.indptr(), self.advect.indices(), self.advect.values());
        let (pi, pj, pv) = (self.phase.indptr(), self.phase.indices(), self.phase.values());
        for (r, out) in self.out.chunks_exact_mut(n_p).enumerate() {
            for k in ai[r]..ai[r + 1] {
                axpy(av[k], &self.diff[aj[k] * n_p..(aj[k] + 1) * n_p], out);
            }
            for k in pi[r]..pi[r + 1] {
                axpy(pv[k], &psi[pj[k] * n_p..(pj[k] + 1) * n_p], out);
            }
        }
        std::mem::swap(psi, &mut self.out);
    }
}

#[inline]
fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (y, x) in y.iter_mut().zip(x) {
        *y += a * x;
    }
}

fn to_component_major(psi: &WptState) -> Vec<f64> {
    let (m, n_p) = (psi.block_dim, psi.n_p());
    let mut out = vec![0.0; m * n_p];
    for j in 0..n_p {
        for c in 0..m {
            out[c * n_p + j] = psi.values[j * m + c].re;
        }
    }
    out
}

fn from_component_major(values: &[f64], block_dim: usize, time: f64) -> WptState {
    let n_p = values.len() / block_dim;
    let mut out = vec![Complex64::new(0.0, 0.0); values.len()];
    for c in 0..block_dim {
        for j in 0..n_p {
            out[j * block_dim + c] = Complex64::new(values[c * n_p + j], 0.0);
        }
    }
    WptState {
        time,
        block_dim,
        values: out,
    }
}

/// Lifting order, basis, `p`-grid and recovery rule of a CLS run.
#[derive(Clone, Debug)]
pub struct ClsSetup {
    pub order: usize,
    pub basis: CarlemanBasis,
    pub aux: AuxGrid,
    pub recovery: RecoverySpec,
    /// Keep the physical part of `ψ` at `t = 0` and at every sample.
    pub capture_snapshots: bool,
}

impl ClsSetup {
    pub fn new(order: usize, aux: AuxGrid) -> Self {
        Self {
            order,
            basis: CarlemanBasis::default(),
            aux,
            recovery: RecoverySpec::default(),
            capture_snapshots: false,
        }
    }
}

/// Full CLS pipeline: assemble and lift, split, warp, step `n_t` times and
/// recover the field at the sample times.
pub fn evolve_cls(
    system: &PolynomialSystem,
    params: &ReactionDiffusionParams,
    phi0: &FieldState,
    setup: &ClsSetup,
    time_grid: &TimeGrid,
    options: &EvolveOptions,
) -> Result<Trajectory> {
    phi0.check_against(&system.grid)?;
    let op = assemble_carleman_with(system, setup.order, setup.basis, DEFAULT_MAX_NNZ)?;
    let lifted = lift_state_in(phi0, &op.index_map)?;
    let split = hermitian_split(&op.matrix)?;
    let report = stability_check(params, &system.grid, time_grid, Some((&split, &setup.aux)));
    if !options.allow_unstable && !report.passes() {
        return Err(Error::Unstable(report.flags.join("; ")));
    }
    let (h1, skew) = split.real_parts().expect("a real generator has a real split");
    let aux = &setup.aux;
    let recovery_nodes = setup.recovery.nodes(aux)?;
    let times = options.resolve_times(time_grid);
    let steps = sample_steps(time_grid, &times)?;

    let psi0 = initialize_wpt_state(&lifted, aux);
    let block_dim = psi0.block_dim;
    let n_x = system.dim();
    let snapshot = |state: &WptState| WptSnapshot {
        time: state.time,
        values: (0..aux.n_p())
            .flat_map(|j| state.block(j)[op.index_map.block_range(1)].iter().map(|v| v.re))
            .collect(),
    };
    let mut snapshots = Vec::new();
    if setup.capture_snapshots {
        snapshots.push(snapshot(&psi0));
    }
    let mut stepper = RealWptStepper::new(&h1, &skew, time_grid.dt(), aux.dp(), aux.n_p());
    let mut psi = to_component_major(&psi0);
    let mut states = Vec::with_capacity(times.len());
    let mut imag_residual = 0.0f64;
    let peak = march(
        &mut psi,
        time_grid.n_t(),
        &steps,
        |v| max_abs(v),
        |v| stepper.step(v),
        |v, i| {
            let t = phi0.time + times[i];
            let state = from_component_major(v, block_dim, t);
            let rec = recover_state(&state, aux, &setup.recovery, &op.index_map)?;
            imag_residual = imag_residual.max(rec.imag_residual);
            states.push(project_state(&rec.state));
            if setup.capture_snapshots {
                snapshots.push(snapshot(&state));
            }
            Ok(())
        },
    )?;
    debug_assert!(states.iter().all(|s| s.values.len() == n_x));
    Ok(Trajectory {
        scheme: Scheme::Cls,
        grid: system.grid.clone(),
        times: times.iter().map(|t| phi0.time + t).collect(),
        states,
        diagnostics: Diagnostics {
            steps: steps.last().copied().unwrap_or(0),
            max_magnitude: peak,
            recovery_imag_residual: imag_residual,
            recovery_nodes: recovery_nodes.iter().map(|&j| aux.nodes()[j]).collect(),
            p_truncation_weight: Some(aux.p_left().max(-aux.p_right()).exp()),
            state_dim: block_dim * aux.n_p(),
            wpt_snapshots: snapshots,
        },
    })
}

/// `e^{tG} x` by a truncated Taylor series on `s` substeps with
/// `‖tG‖₁ / s ≤ 1/2`.
pub fn exact_expm_evolve<T: Scalar>(generator: &CsrMatrix<T>, state: &[T], t: f64) -> Result<Vec<T>> {
    exact_expm_evolve_capped(generator, state, t, EXPM_DIM_CAP)
}

pub fn exact_expm_evolve_capped<T: Scalar>(generator: &CsrMatrix<T>, state: &[T], t: f64, cap: usize) -> Result<Vec<T>> {
    let n = generator.nrows();
    if !generator.is_square() || state.len() != n {
        return Err(Error::DimensionMismatch {
            context: "exponential of a square generator",
            expected: n,
            found: state.len(),
        });
    }
    if n > cap {
        return Err(Error::DimensionCap { dim: n, cap });
    }
    let norm = norm_one(generator) * t.abs();
    if !norm.is_finite() {
        return Err(Error::InvalidParameter {
            name: "generator",
            reason: "non-finite entries".into(),
        });
    }
    let substeps = ((2.0 * norm).ceil() as usize).max(1);
    let tau = T::from_real(t / substeps as f64);
    let mut v = state.to_vec();
    let mut term = vec![T::zero(); n];
    let mut next = vec![T::zero(); n];
    for _ in 0..substeps {
        term.copy_from_slice(&v);
        let mut small = 0;
        for k in 1..=60 {
            next.iter_mut().for_each(|x| *x = T::zero());
            let scale = tau.scale(1.0 / k as f64);
            generator.mul_add_into(scale, &term, &mut next);
            std::mem::swap(&mut term, &mut next);
            for (a, &b) in v.iter_mut().zip(&term) {
                *a += b;
            }
            if max_abs(&term) <= f64::EPSILON * 1e-2 * max_abs(&v) {
                small += 1;
                if small == 2 {
                    break;
                }
            } else {
                small = 0;
            }
        }
    }
    Ok(v)
}

/// Relative residual `‖(y(t+h) - y(t-h))/2h - G y(t)‖ / ‖G y(t)‖` of the
/// exponential at `t`, with `y(t ± h)` evolved from `y(t)`.
pub fn expm_residual<T: Scalar>(generator: &CsrMatrix<T>, state: &[T], t: f64, h: f64) -> Result<f64> {
    let y = exact_expm_evolve(generator, state, t)?;
    let fwd = exact_expm_evolve(generator, &y, h)?;
    let bwd = exact_expm_evolve(generator, &y, -h)?;
    let gy = generator.matvec(&y);
    let scale = l2(&gy).max(f64::MIN_POSITIVE);
    let diff: Vec<T> = fwd
        .iter()
        .zip(&bwd)
        .zip(&gy)
        .map(|((&f, &b), &g)| (f + b.scale(-1.0)).scale(0.5 / h) + g.scale(-1.0))
        .collect();
    Ok(l2(&diff) / scale)
}

fn norm_one<T: Scalar>(m: &CsrMatrix<T>) -> f64 {
    let mut cols = vec![0.0; m.ncols()];
    for (_, j, v) in m.triplets() {
        cols[j] += v.modulus();
    }
    cols.into_iter().fold(0.0, f64::max)
}

pub(crate) fn l2<T: Scalar>(v: &[T]) -> f64 {
    v.iter().map(|x| x.modulus().powi(2)).sum::<f64>().sqrt()
}

/// CFL-type numbers of an explicit run. Each is flagged at or above one;
/// the spectral radius is flagged when it exceeds one by more than
/// [`SPECTRAL_TOLERANCE`].
#[derive(Clone, Debug, PartialEq)]
pub struct StabilityReport {
    /// `2D dt / dx²`.
    pub diffusion_number: f64,
    /// `‖H₁‖∞ dt / dp`, when a warped system is involved.
    pub advection_number: Option<f64>,
    /// Power-iteration estimate of the spectral radius of `B`.
    pub spectral_radius: Option<f64>,
    pub flags: Vec<String>,
}

impl StabilityReport {
    pub fn passes(&self) -> bool {
        self.flags.is_empty()
    }
}

/// Slack on the spectral radius estimate; forward Euler on the phase part
/// grows by `1 + O(dt²)` per step even when the scheme is usable.
pub const SPECTRAL_TOLERANCE: f64 = 1e-6;

const POWER_ITERATIONS: usize = 200;

pub fn stability_check(
    params: &ReactionDiffusionParams,
    grid: &SpatialGrid1D,
    time_grid: &TimeGrid,
    wpt: Option<(&HermitianSplit, &AuxGrid)>,
) -> StabilityReport {
    let dt = time_grid.dt();
    let diffusion_number = 2.0 * params.diffusion * dt / (grid.dx() * grid.dx());
    let mut flags = Vec::new();
    if diffusion_number >= 1.0 {
        flags.push(format!("diffusion number {diffusion_number:.3e} >= 1"));
    }
    let (mut advection_number, mut spectral_radius) = (None, None);
    if let Some((split, aux)) = wpt {
        let adv = split.h1.norm_inf() * dt / aux.dp();
        if adv >= 1.0 {
            flags.push(format!("advection number {adv:.3e} >= 1"));
        }
        advection_number = Some(adv);
        let rho = spectral_radius_estimate(split, aux, dt);
        if rho > 1.0 + SPECTRAL_TOLERANCE {
            flags.push(format!("spectral radius estimate {rho:.9} > 1"));
        }
        spectral_radius = Some(rho);
    }
    StabilityReport {
        diffusion_number,
        advection_number,
        spectral_radius,
        flags,
    }
}

/// Geometric-mean growth of `‖Bᵏx‖` over the second half of a power
/// iteration from a fixed pseudo-random start.
fn spectral_radius_estimate(split: &HermitianSplit, aux: &AuxGrid, dt: f64) -> f64 {
    let len = split.dim() * aux.n_p();
    let mut seed = 0x9e37_79b9_7f4a_7c15u64;
    let mut start = || {
        seed ^= seed << 13;
        seed ^= seed >> 7;
        seed ^= seed << 17;
        (seed >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };
    let half = POWER_ITERATIONS / 2;
    if let Some((h1, skew)) = split.real_parts() {
        let mut stepper = RealWptStepper::new(&h1, &skew, dt, aux.dp(), aux.n_p());
        let mut v: Vec<f64> = (0..len).map(|_| start()).collect();
        power_growth(&mut v, half, |v| stepper.step(v))
    } else {
        let op = assemble_step(split, &TimeGrid::new(dt, 1).expect("dt is finite"), aux);
        let mut v: Vec<Complex64> = (0..len).map(|_| Complex64::new(start(), start())).collect();
        power_growth(&mut v, half, |v| {
            let state = WptState {
                time: 0.0,
                block_dim: split.dim(),
                values: std::mem::take(v),
            };
            *v = step_cls(&state, &op).map(|s| s.values).unwrap_or_else(|_| vec![Complex64::new(f64::INFINITY, 0.0); len]);
        })
    }
}

fn power_growth<T: Scalar>(v: &mut Vec<T>, half: usize, mut apply: impl FnMut(&mut Vec<T>)) -> f64 {
    let mut log_growth = 0.0;
    for k in 0..2 * half {
        let before = l2(v);
        if before == 0.0 || !before.is_finite() {
            return f64::INFINITY;
        }
        v.iter_mut().for_each(|x| *x = x.scale(1.0 / before));
        apply(v);
        if k >= half {
            log_growth += l2(v).ln();
        }
    }
    (log_growth / half as f64).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::carleman::{assemble_carleman, lift_state, CarlemanIndexMap};
    use crate::model::{build_polynomial_system, NodeLayout};
    use crate::schrodinger::build_aux_grid;

    fn scalar_grid() -> SpatialGrid1D {
        SpatialGrid1D::with_spacing(1.0, 1, NodeLayout::Vertex).unwrap()
    }

    fn one_by_one_split(h1: f64, h2: f64) -> HermitianSplit {
        HermitianSplit {
            h1: CsrMatrix::from_dense(&[vec![Complex64::new(h1, 0.0)]]),
            h2: CsrMatrix::from_dense(&[vec![Complex64::new(h2, 0.0)]]),
        }
    }

    fn psi(values: &[f64]) -> WptState {
        WptState {
            time: 0.0,
            block_dim: 1,
            values: values.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        }
    }

    #[test]
    fn time_grid_basics() {
        let g = TimeGrid::new(0.4, 400_000).unwrap();
        assert!((g.dt() - 1e-6).abs() < 1e-20);
        assert_eq!(g.step_of(0.1).unwrap(), 100_000);
        assert_eq!(g.step_of(0.4).unwrap(), 400_000);
        assert!(g.step_of(0.5).is_err());
        assert!(TimeGrid::new(0.4, 0).is_err());
        assert!(TimeGrid::new(-1.0, 3).is_err());
        assert_eq!(TimeGrid::from_step(1e-5, 0.4).unwrap().n_t(), 40_000);
        assert!(TimeGrid::from_step(0.3, 1.0).is_err());
    }

    #[test]
    fn default_samples() {
        assert_eq!(default_sample_times(0.4), vec![0.1, 0.2, 0.3, 0.4]);
        assert_eq!(default_sample_times(0.0), vec![0.0]);
        assert_eq!(default_sample_times(0.25), vec![0.1, 0.2, 0.25]);
    }

    #[test]
    fn step_blocks_example() {
        let op = assemble_step(&one_by_one_split(1.0, 0.0), &TimeGrid::new(0.1, 1).unwrap(), &build_aux_grid(-0.5, 0.5, 2).unwrap());
        assert!((op.b1.get(0, 0).re + 0.2).abs() < 1e-15);
        assert!((op.b2.get(0, 0).re - 1.2).abs() < 1e-15);
        let out = step_cls(&psi(&[1.0, 1.0]), &op).unwrap();
        assert!(out.values.iter().all(|v| (v.re - 1.0).abs() < 1e-15 && v.im == 0.0));
        let out = step_cls(&psi(&[1.0, 0.0]), &op).unwrap();
        assert!((out.values[0].re - 1.2).abs() < 1e-15);
        assert!((out.values[1].re + 0.2).abs() < 1e-15);
    }

    #[test]
    fn zero_step_is_identity() {
        let split = one_by_one_split(-3.0, 2.0);
        let op = assemble_step(&split, &TimeGrid::new(0.0, 1).unwrap(), &build_aux_grid(-1.0, 1.0, 3).unwrap());
        assert_eq!(op.b1.nnz(), 0);
        assert_eq!(op.b2.to_dense(), vec![vec![Complex64::new(1.0, 0.0)]]);
        let state = psi(&[0.3, -1.0, 2.0]);
        assert_eq!(step_cls(&state, &op).unwrap().values, state.values);
    }

    #[test]
    fn pure_phase_step() {
        let op = assemble_step(&one_by_one_split(0.0, 2.0), &TimeGrid::new(0.1, 1).unwrap(), &build_aux_grid(-1.0, 1.0, 3).unwrap());
        assert_eq!(op.b1.nnz(), 0);
        assert_eq!(op.b2.get(0, 0), Complex64::new(1.0, 0.2));
    }

    #[test]
    fn full_matrix_layout() {
        let op = assemble_step(&one_by_one_split(1.0, 0.0), &TimeGrid::new(0.1, 1).unwrap(), &build_aux_grid(-1.5, 1.5, 3).unwrap());
        let b = op.full_matrix().map(|v| v.re).to_dense();
        let lam = 0.1;
        assert_eq!(b[0], vec![1.0 + lam, -lam, 0.0]);
        assert_eq!(b[1], vec![0.0, 1.0 + lam, -lam]);
        assert_eq!(b[2], vec![-lam, 0.0, 1.0 + lam]);
    }

    #[test]
    fn real_stepper_matches_blockwise() {
        let a = CsrMatrix::from_dense(&[vec![-2.0, 0.7, 0.0], vec![0.1, -1.0, 0.4], vec![0.0, -0.3, -0.5]]);
        let split = hermitian_split(&a).unwrap();
        let aux = build_aux_grid(-2.0, 2.0, 5).unwrap();
        let tg = TimeGrid::new(0.05, 1).unwrap();
        let op = assemble_step(&split, &tg, &aux);
        let values: Vec<Complex64> = (0..15).map(|i| Complex64::new((i as f64 * 0.37).sin(), 0.0)).collect();
        let state = WptState { time: 0.0, block_dim: 3, values };
        let blockwise = step_cls(&state, &op).unwrap();
        let (h1, skew) = split.real_parts().unwrap();
        let mut stepper = RealWptStepper::new(&h1, &skew, tg.dt(), aux.dp(), aux.n_p());
        let mut cm = to_component_major(&state);
        stepper.step(&mut cm);
        let back = from_component_major(&cm, 3, 0.0);
        for (a, b) in back.values.iter().zip(&blockwise.values) {
            assert!((a - b).norm() < 1e-15);
        }
    }

    #[test]
    fn divergence_is_reported() {
        let op = assemble_step(&one_by_one_split(1.0, 0.0), &TimeGrid::new(0.1, 1).unwrap(), &build_aux_grid(-0.5, 0.5, 2).unwrap());
        let err = step_cls(&psi(&[1e13, 0.0]), &op).unwrap_err();
        assert!(matches!(err, Error::Divergence { step: 1, .. }));
        let err = step_cls(&psi(&[f64::NAN, 0.0]), &op).unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }));
    }

    #[test]
    fn cl_one_logistic_step() {
        let params = ReactionDiffusionParams::new(0.0, 1.0, -1.0).unwrap();
        let system = build_polynomial_system(&params, &scalar_grid()).unwrap();
        let op = assemble_carleman(&system, 2).unwrap();
        let phi0 = lift_state(&FieldState::new(0.0, vec![0.5]), 2).unwrap();
        let tg = TimeGrid::new(0.1, 1).unwrap();
        let traj = evolve_cl(&op, &phi0, &scalar_grid(), &tg, &EvolveOptions::at(&[0.1])).unwrap();
        assert!((traj.last().values[0] - 0.525).abs() < 1e-15);
    }

    #[test]
    fn cl_zero_generator_is_constant() {
        let map = CarlemanIndexMap::new(2, 2, CarlemanBasis::Full).unwrap();
        let op = CarlemanOperator {
            index_map: map.clone(),
            matrix: CsrMatrix::zeros(6, 6),
        };
        let phi0 = lift_state_in(&FieldState::new(0.0, vec![0.2, 0.3]), &map).unwrap();
        let grid = SpatialGrid1D::new(1.0, 2, NodeLayout::Vertex).unwrap();
        let traj = evolve_cl(&op, &phi0, &grid, &TimeGrid::new(0.4, 40).unwrap(), &EvolveOptions::default()).unwrap();
        assert_eq!(traj.times.len(), 4);
        assert!(traj.states.iter().all(|s| s.values == vec![0.2, 0.3]));
    }

    #[test]
    fn fdm_one_logistic_step_and_fixed_point() {
        let params = ReactionDiffusionParams::new(0.0, 1.0, -1.0).unwrap();
        let tg = TimeGrid::new(0.1, 1).unwrap();
        let traj = evolve_fdm(&params, &scalar_grid(), &FieldState::new(0.0, vec![0.5]), &tg, &EvolveOptions::at(&[0.1])).unwrap();
        assert!((traj.last().values[0] - 0.525).abs() < 1e-15);

        let params = ReactionDiffusionParams::default();
        let grid = SpatialGrid1D::new(1.0, 8, NodeLayout::Vertex).unwrap();
        let traj = evolve_fdm(&params, &grid, &FieldState::new(0.0, vec![0.0; 8]), &TimeGrid::new(0.4, 4000).unwrap(), &EvolveOptions::default()).unwrap();
        assert!(traj.states.iter().all(|s| s.values.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn fdm_refuses_unstable_diffusion() {
        let params = ReactionDiffusionParams::default();
        let grid = SpatialGrid1D::new(1.0, 9, NodeLayout::Vertex).unwrap();
        let tg = TimeGrid::new(0.4, 40).unwrap();
        let phi0 = FieldState::new(0.0, vec![0.1; 9]);
        assert!(matches!(evolve_fdm(&params, &grid, &phi0, &tg, &EvolveOptions::default()), Err(Error::Unstable(_))));
        let permissive = EvolveOptions {
            allow_unstable: true,
            ..EvolveOptions::default()
        };
        assert!(matches!(evolve_fdm(&params, &grid, &phi0, &tg, &permissive), Err(Error::Divergence { .. })));
    }

    #[test]
    fn zero_horizon_returns_initial_state() {
        let params = ReactionDiffusionParams::default();
        let grid = SpatialGrid1D::new(1.0, 4, NodeLayout::Vertex).unwrap();
        let system = build_polynomial_system(&params, &grid).unwrap();
        let phi0 = crate::model::sample_initial(&grid);
        let setup = ClsSetup::new(2, build_aux_grid(-5.0, 5.0, 64).unwrap());
        let traj = evolve_cls(&system, &params, &phi0, &setup, &TimeGrid::new(0.0, 1).unwrap(), &EvolveOptions::default()).unwrap();
        assert_eq!(traj.times, vec![0.0]);
        for (a, b) in traj.last().values.iter().zip(&phi0.values) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn expm_examples() {
        let rot = CsrMatrix::from_dense(&[vec![0.0, -1.0], vec![1.0, 0.0]]);
        let out = exact_expm_evolve(&rot, &[1.0, 0.0], std::f64::consts::FRAC_PI_2).unwrap();
        assert!(out[0].abs() < 1e-10 && (out[1] - 1.0).abs() < 1e-10);
        let zero = CsrMatrix::<f64>::zeros(3, 3);
        assert_eq!(exact_expm_evolve(&zero, &[1.0, 2.0, 3.0], 5.0).unwrap(), vec![1.0, 2.0, 3.0]);
        assert!(expm_residual(&rot, &[1.0, 0.0], 0.7, 1e-4).unwrap() < 1e-8);
        let big = CsrMatrix::<f64>::identity(10);
        assert!(matches!(exact_expm_evolve_capped(&big, &[0.0; 10], 1.0, 4), Err(Error::DimensionCap { .. })));
    }

    #[test]
    fn expm_of_stiff_diagonal() {
        let g = CsrMatrix::diagonal(&[-50.0, 3.0]);
        let out = exact_expm_evolve(&g, &[1.0, 1.0], 0.5).unwrap();
        assert!((out[0] - (-25.0f64).exp()).abs() < 1e-14);
        assert!((out[1] / 1.5f64.exp() - 1.0).abs() < 1e-13);
    }

    #[test]
    fn stability_examples() {
        let params = ReactionDiffusionParams::default();
        let grid = SpatialGrid1D::new(1.0, 36, NodeLayout::CellCentered).unwrap();
        let report = stability_check(&params, &grid, &TimeGrid::new(0.4, 400_000).unwrap(), None);
        assert!((report.diffusion_number - 2.592e-3).abs() < 1e-12);
        assert!(report.passes());

        let dx = grid.dx();
        let report = stability_check(&params, &grid, &TimeGrid::new(dx * dx, 1).unwrap(), None);
        assert!((report.diffusion_number - 2.0).abs() < 1e-12);
        assert!(!report.passes());

        let split = one_by_one_split(0.0, 1.0);
        let aux = build_aux_grid(-1.0, 1.0, 4).unwrap();
        let report = stability_check(&params, &grid, &TimeGrid::new(0.4, 400_000).unwrap(), Some((&split, &aux)));
        assert_eq!(report.advection_number, Some(0.0));
        assert!(report.passes());
    }

    #[test]
    fn spectral_estimate_sees_wrong_way_advection() {
        let params = ReactionDiffusionParams::new(0.0, -1.0, 0.0).unwrap();
        let aux = build_aux_grid(-2.0, 2.0, 16).unwrap();
        let tg = TimeGrid::new(1.0, 100).unwrap();
        let stable = stability_check(&params, &scalar_grid(), &tg, Some((&one_by_one_split(-1.0, 0.0), &aux)));
        assert!(stable.passes(), "{:?}", stable.flags);
        assert!(stable.spectral_radius.unwrap() <= 1.0 + 1e-12);
        let unstable = stability_check(&params, &scalar_grid(), &tg, Some((&one_by_one_split(1.0, 0.0), &aux)));
        assert!(unstable.spectral_radius.unwrap() > 1.01);
        assert!(!unstable.passes());
    }
}
