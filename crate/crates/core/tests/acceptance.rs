//! Acceptance suite. Prints one line per criterion and exits non-zero when
//! any criterion fails. Pass criterion numbers as arguments to run a subset:
//!
//! ```text
//! cargo test --release --test acceptance -- 5 6 7
//! ```

use std::process::ExitCode;
use std::time::{Duration, Instant};

use cls_core::analysis::{error_fields, scalar_error, sweep_dp, sweep_dx, sweep_truncation, fit_loglog_slope, ConvergenceStudy, InitialCondition, Norm, Scenario};
use cls_core::carleman::{assemble_carleman_with, CarlemanBasis, DEFAULT_MAX_NNZ};
use cls_core::evolve::{assemble_step, exact_expm_evolve, step_cls, EvolveOptions, Scheme, TimeGrid};
use cls_core::model::{build_polynomial_system, ReactionDiffusionParams, SpatialGrid1D};
use cls_core::schrodinger::{assemble_wpt_operator, build_aux_grid, build_central_gradient, hermitian_split, HermitianSplit, WptState};
use cls_core::sparse::CsrMatrix;
use num_complex::Complex64;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

struct Outcome {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn slopes(studies: &[ConvergenceStudy]) -> String {
    studies
        .iter()
        .map(|s| {
            let errs: Vec<String> = s.samples.iter().map(|(_, e)| format!("{e:.3e}")).collect();
            format!("t={} slope={:.3} errors=[{}]", s.time, s.fitted_slope, errs.join(", "))
        })
        .collect::<Vec<_>>()
        .join("; ")
}

fn at_final(studies: &[ConvergenceStudy]) -> &ConvergenceStudy {
    studies.last().expect("sweeps report every sample time")
}

fn truncation_order() -> Outcome {
    let start = Instant::now();
    let studies = sweep_truncation(&Scenario::desk(), &[2, 3, 4, 5], Norm::L2, 1).expect("K sweep runs");
    let elapsed = start.elapsed();
    let in_band = studies.iter().all(|s| (0.7..=1.3).contains(&s.fitted_slope));
    let fast = elapsed <= Duration::from_secs(5 * 60);
    verdict(in_band && fast, format!("{} ({:.0?})", slopes(&studies), elapsed))
}

fn spatial_order() -> Outcome {
    let start = Instant::now();
    let base = Scenario {
        order: 2,
        ..Scenario::desk()
    };
    let studies = sweep_dx(&base, &[6, 12, 24, 48], None, Norm::L2, 1).expect("dx sweep runs");
    let elapsed = start.elapsed();
    let slope = at_final(&studies).fitted_slope;
    let fast = elapsed <= Duration::from_secs(15 * 60);
    verdict((1.7..=2.3).contains(&slope) && fast, format!("{} ({:.0?})", slopes(&studies), elapsed))
}

fn auxiliary_order() -> Outcome {
    let start = Instant::now();
    let base = Scenario {
        order: 2,
        n_x: 8,
        ..Scenario::desk()
    };
    let studies = sweep_dp(&base, &[32, 64, 128, 256], Norm::L2, 1).expect("dp sweep runs");
    let elapsed = start.elapsed();
    let slope = at_final(&studies).fitted_slope;
    let fast = elapsed <= Duration::from_secs(15 * 60);
    verdict((0.7..=1.3).contains(&slope) && fast, format!("{} ({:.0?})", slopes(&studies), elapsed))
}

fn pairwise_agreement() -> Outcome {
    let desk = Scenario::desk();
    let fdm = desk.run(Scheme::Fdm).expect("fdm runs");
    let cl = desk.run(Scheme::Cl).expect("cl runs");
    let cls = desk.run(Scheme::Cls).expect("cls runs");
    let err = |a, b| scalar_error(&error_fields(a, b).expect("aligned"), Norm::L2, 0.4).expect("t = 0.4 sampled");
    let cl_fdm = err(&cl, &fdm);
    let cls_cl = err(&cls, &cl);
    let cls_fdm = err(&cls, &fdm);
    let refined = Scenario {
        n_p: 2 * desk.n_p,
        ..desk.clone()
    }
    .run(Scheme::Cls)
    .expect("refined cls runs");
    let cls_cl_fine = err(&refined, &cl);
    let pass = cl_fdm <= 0.05 && cls_cl <= 0.05 && cls_fdm <= 0.05;
    verdict(
        pass,
        format!(
            "cl-fdm={cl_fdm:.3e} cls-cl={cls_cl:.3e} cls-fdm={cls_fdm:.3e}; cls-cl at half dp={cls_cl_fine:.3e} (ratio {:.2})",
            cls_cl / cls_cl_fine
        ),
    )
}

fn random_hermitian(rng: &mut StdRng, m: usize) -> CsrMatrix<Complex64> {
    let x: Vec<Vec<Complex64>> = (0..m)
        .map(|_| (0..m).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect())
        .collect();
    let x = CsrMatrix::from_dense(&x);
    x.add_scaled(Complex64::new(1.0, 0.0), &x.adjoint())
        .expect("square")
        .scaled(Complex64::new(0.5, 0.0))
}

fn skew_hermitian_generator() -> Outcome {
    let mut rng = StdRng::seed_from_u64(0x5eed);
    let mut worst_skew = 0.0f64;
    let mut worst_norm = 0.0f64;
    for &m in &[1usize, 5, 16, 64] {
        for &n_p in &[3usize, 5, 8] {
            let split = HermitianSplit {
                h1: random_hermitian(&mut rng, m),
                h2: random_hermitian(&mut rng, m),
            };
            let aux = build_aux_grid(-2.0, 2.0, n_p).expect("valid grid");
            let grad = build_central_gradient(&aux).expect("n_p >= 3");
            let h = assemble_wpt_operator(&split, &grad).expect("shapes agree").materialize();
            let skew = h.add_scaled(Complex64::new(1.0, 0.0), &h.adjoint()).expect("square").max_abs();
            worst_skew = worst_skew.max(skew);
            let psi: Vec<Complex64> = (0..m * n_p).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
            let norm = |v: &[Complex64]| v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            let scale = norm(&psi);
            let psi: Vec<Complex64> = psi.iter().map(|z| z / scale).collect();
            let out = exact_expm_evolve(&h, &psi, 1.0).expect("within the dimension cap");
            worst_norm = worst_norm.max((norm(&out) - 1.0).abs());
        }
    }
    verdict(
        worst_skew <= 1e-12 && worst_norm <= 1e-10,
        format!("max |H+H^dagger| = {worst_skew:.2e}, max | |psi(1)| - 1 | = {worst_norm:.2e}"),
    )
}

fn scalar(q: f64, r: f64, phi0: f64) -> Scenario {
    Scenario {
        params: ReactionDiffusionParams::new(0.0, q, r).expect("finite rates"),
        n_x: 1,
        initial: InitialCondition::Constant(phi0),
        ..Scenario::desk()
    }
}

fn scalar_oracles() -> Outcome {
    let logistic = Scenario {
        order: 8,
        n_t: 40_000,
        options: EvolveOptions::at(&[0.4]),
        ..scalar(1.0, -1.0, 0.5)
    };
    let cl = logistic.run(Scheme::Cl).expect("cl runs").last().values[0];
    let growth = 0.4f64.exp();
    let exact = 0.5 * growth / (1.0 + 0.5 * (growth - 1.0));
    let logistic_err = (cl - exact).abs();

    let decay = Scenario {
        order: 1,
        p_left: -5.0,
        p_right: 5.0,
        n_p: 200,
        n_t: 40_000,
        ..scalar(-1.0, 0.0, 0.5)
    };
    let cls = decay.run(Scheme::Cls).expect("cls runs");
    let decay_err = cls
        .times
        .iter()
        .zip(&cls.states)
        .map(|(t, s)| {
            let exact = 0.5 * (-t).exp();
            (s.values[0] - exact).abs() / exact
        })
        .fold(0.0, f64::max);
    verdict(
        logistic_err <= 1e-3 && decay_err <= 0.01,
        format!("(a) |CL - logistic| = {logistic_err:.3e}; (b) max rel CLS decay error = {decay_err:.4e}"),
    )
}

fn scheme_equivalence() -> Outcome {
    let mut rng = StdRng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for n in 1..=3 {
        let params = ReactionDiffusionParams::default();
        let grid = SpatialGrid1D::new(1.0, n, Default::default()).expect("valid grid");
        let system = build_polynomial_system(&params, &grid).expect("valid system");
        for order in 1..=2 {
            for basis in [CarlemanBasis::Full, CarlemanBasis::Symmetric] {
                let op = assemble_carleman_with(&system, order, basis, DEFAULT_MAX_NNZ).expect("small");
                let split = hermitian_split(&op.matrix).expect("square");
                for n_p in 2..=8 {
                    let aux = build_aux_grid(-2.0, 2.0, n_p).expect("valid grid");
                    let step = assemble_step(&split, &TimeGrid::new(1e-3, 1).expect("valid"), &aux);
                    let values: Vec<Complex64> = (0..op.dim() * n_p)
                        .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                        .collect();
                    let psi = WptState {
                        time: 0.0,
                        block_dim: op.dim(),
                        values,
                    };
                    let blockwise = step_cls(&psi, &step).expect("finite");
                    let monolithic = step.full_matrix().matvec(&psi.values);
                    let diff = blockwise
                        .values
                        .iter()
                        .zip(&monolithic)
                        .map(|(a, b)| (a - b).norm())
                        .fold(0.0, f64::max);
                    worst = worst.max(diff);
                }
            }
        }
    }

    let base = Scenario {
        n_x: 3,
        order: 2,
        p_left: -4.0,
        p_right: 4.0,
        n_p: 16,
        t_end: 0.1,
        options: EvolveOptions::at(&[0.1]),
        ..Scenario::desk()
    };
    let exact = base.run(Scheme::Exact).expect("exponential fits under the cap");
    let mut samples = Vec::new();
    for n_t in [200usize, 400, 800, 1600] {
        let run = Scenario { n_t, ..base.clone() }.run(Scheme::Cls).expect("cls runs");
        let diff: f64 = run.last().values.iter().zip(&exact.last().values).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        samples.push((base.t_end / n_t as f64, diff));
    }
    let (order, _) = fit_loglog_slope(&samples).expect("positive errors");
    let errs: Vec<String> = samples.iter().map(|s| format!("{:.3e}", s.1)).collect();
    verdict(
        worst <= 1e-13 && (0.9..=1.1).contains(&order),
        format!("max |B psi - step| = {worst:.2e}; dt order = {order:.3} errors=[{}]", errs.join(", ")),
    )
}

fn advection_pollution() -> Outcome {
    let scenario = Scenario {
        order: 1,
        p_left: -5.0,
        p_right: 5.0,
        n_p: 200,
        t_end: 8.0,
        n_t: 80_000,
        options: EvolveOptions::at(&[4.0, 8.0]),
        ..scalar(-1.0, 0.0, 0.5)
    };
    let run = scenario.run(Scheme::Cls).expect("cls runs");
    let err = |i: usize| {
        let exact = 0.5 * (-run.times[i]).exp();
        (run.states[i].values[0] - exact).abs() / exact
    };
    let (before, after) = (err(0), err(1));
    verdict(
        after >= 2.0 * before,
        format!("rel error t=4: {before:.3e}, t=8: {after:.3e} (ratio {:.1})", after / before),
    )
}

fn main() -> ExitCode {
    let criteria: [(u8, &str, fn() -> Outcome); 8] = [
        (1, "truncation order of CL vs FDM", truncation_order),
        (2, "spatial order of CLS vs fine FDM", spatial_order),
        (3, "auxiliary order of CLS vs CL", auxiliary_order),
        (4, "pairwise agreement at desk scale", pairwise_agreement),
        (5, "skew-Hermitian generator and norm conservation", skew_hermitian_generator),
        (6, "scalar closed-form oracles", scalar_oracles),
        (7, "blockwise step equals B, dt order against the exponential", scheme_equivalence),
        (8, "advection pollution after the periodic wrap", advection_pollution),
    ];
    let selected: Vec<u8> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, name, run) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let outcome = run();
        let tag = if outcome.pass { "PASS" } else { "FAIL" };
        println!("criterion {id} [{tag}] {name}: {} [{:.1?}]", outcome.detail, start.elapsed());
        if !outcome.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
