use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use mzvms::greens::{
    exact_fine_greens, nodal_overshoot, orthogonal_greens_hat, steady_adjoint_stabilized_solve,
    steady_tau_model_solve, GreensField, Stabilization, SteadyProblem,
};
use mzvms::io::{self, GreensRow};
use mzvms::memory::{
    kernel_s0, kernel_s0_dg, s1_s2, solve_memory_closed, FineSupport, KernelSample, MemoryModelConfig,
};
use mzvms::meshproj::{element_grid, Discretization, Mesh1D, ModalField, ScaleSplit};
use mzvms::operators::{
    weak_rhs, FluxKind, LinearOperator1D, LinearSystem, Physics, Scheme, SemiDiscreteProblem,
};
use mzvms::solver::{
    diagnostics, full_reference_solve, integrate, resolved_problem, IntegratorConfig, Trajectory,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{Closure, Experiment, ExperimentConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    pub fn at_most(name: &str, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
            pass: value <= tolerance,
        }
    }

    /// `|value - target| <= tolerance`.
    pub fn near(name: &str, value: f64, target: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
            pass: (value - target).abs() <= tolerance,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub experiment: String,
    pub params: ExperimentConfig,
    pub checks: Vec<Check>,
    /// Reported quantities without a pass/fail threshold.
    pub metrics: BTreeMap<String, Value>,
}

impl Summary {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

#[derive(Debug)]
pub enum RunError {
    /// Rejected configuration (exit code 2).
    Config(String),
    /// Numerical or I/O failure (exit code 1).
    Failed(String),
}

impl From<mzvms::Error> for RunError {
    fn from(e: mzvms::Error) -> Self {
        match e {
            mzvms::Error::InvalidArgument(m) => RunError::Config(m),
            other => RunError::Failed(other.to_string()),
        }
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Failed(e.to_string())
    }
}

type Run<T> = Result<T, RunError>;

pub fn run(cfg: &ExperimentConfig, out: &Path) -> Run<Summary> {
    fs::create_dir_all(out)?;
    let pretty = serde_json::to_string_pretty(cfg).expect("config serializes");
    fs::write(out.join("config.json"), pretty + "\n")?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| RunError::Failed(e.to_string()))?;
    let (checks, metrics) = pool.install(|| match cfg.experiment {
        Experiment::Greens => greens(cfg, out),
        Experiment::UpwindEquiv => upwind_equiv(cfg, out),
        Experiment::LinearMemory => linear_memory(cfg, out),
        Experiment::Burgers => burgers(cfg, out),
        Experiment::Advect => advect(cfg, out),
    })?;
    let summary = Summary {
        experiment: cfg.experiment.name().into(),
        params: cfg.clone(),
        checks,
        metrics,
    };
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    fs::write(out.join("summary.json"), text + "\n")?;
    Ok(summary)
}

type Outcome = (Vec<Check>, BTreeMap<String, Value>);

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

fn closure_config(cfg: &ExperimentConfig, default_tau: Option<f64>) -> Run<MemoryModelConfig<f64>> {
    let tau = || {
        cfg.tau
            .or(default_tau)
            .ok_or_else(|| RunError::Config("this closure needs --tau".into()))
    };
    Ok(match cfg.closure {
        Closure::None => MemoryModelConfig::none(),
        Closure::T => MemoryModelConfig::t_model(),
        Closure::Tau => MemoryModelConfig::tau_model(tau()?)?,
        Closure::Fm => MemoryModelConfig::finite_memory(tau()?)?,
    })
}

/// `max |int g(x, y) phi(x) dx|` and the same in `y`, over hats `phi`, relative to `max |g|`.
fn coarse_leakage(field: &GreensField<f64>, weights: &[f64], hats: &[Vec<f64>]) -> f64 {
    let t = &field.table;
    let n = t.x.len();
    let scale = t.max_abs().max(f64::MIN_POSITIVE);
    let mut worst = 0.0f64;
    for hat in hats {
        for i in 0..n {
            let by_x: f64 = (0..n).map(|q| weights[q] * t.get(q, i) * hat[q]).sum();
            let by_y: f64 = (0..n).map(|q| weights[q] * t.get(i, q) * hat[q]).sum();
            worst = worst.max(by_x.abs().max(by_y.abs()) / scale);
        }
    }
    worst
}

fn greens(cfg: &ExperimentConfig, out: &Path) -> Run<Outcome> {
    let op = LinearOperator1D::new(cfg.c, cfg.nu)?;
    let problem = SteadyProblem::new(op, cfg.nelem, Arc::new(|_| 1.0))?;
    let tau = cfg.tau.unwrap_or(1.0);
    let grid = element_grid(&problem.mesh(), cfg.grid_per_elem);
    let (exact, condition) = exact_fine_greens(&problem, cfg.nfine, &grid, &grid)?;
    let approx = orthogonal_greens_hat(&problem, tau, &grid, &grid)?;

    let mut mismatches = 0usize;
    for (field, name) in [(&exact, "greens_exact.csv"), (&approx, "greens_orthogonal.csv")] {
        let rows = io::greens_rows(field);
        let path = out.join(name);
        io::write_file(&path, &rows)?;
        let back: Vec<GreensRow> = io::read_file(&path)?;
        mismatches += rows.len().abs_diff(back.len());
        mismatches += rows.iter().zip(&back).filter(|(a, b)| a != b).count();
    }

    // orthogonality against coarse data, on a quadrature grid
    let hats = problem.hat_space(cfg.nfine + 2)?;
    let (qx, qw) = (hats.points(), hats.weights());
    let (tables, _) = hats.tables();
    let (exact_q, _) = exact_fine_greens(&problem, cfg.nfine, &qx, &qx)?;
    let approx_q = orthogonal_greens_hat(&problem, tau, &qx, &qx)?;
    let leakage = coarse_leakage(&exact_q, &qw, &tables).max(coarse_leakage(&approx_q, &qw, &tables));

    // h/(2|c|) is infinite without advection; use the diffusive limit there
    let tau_h = if cfg.c == 0.0 {
        problem.h().powi(2) / (12.0 * cfg.nu)
    } else {
        problem.classical_tau()
    };
    let deg = problem.projector_degree;
    let kernel_hats = problem.hat_space(deg + 2)?;
    let kernel = |x: f64, y: f64| -> f64 {
        tau_h
            * kernel_hats
                .fine_projector_kernel(&[x], &[y], deg)
                .map_or(f64::NAN, |t| t.get(0, 0))
    };
    let adjoint = steady_adjoint_stabilized_solve(&problem, &Stabilization::Kernel(&kernel))?;
    let tau_model = steady_tau_model_solve(&problem, tau_h)?;
    let galerkin = steady_adjoint_stabilized_solve(&problem, &Stabilization::None)?;
    let supg = steady_adjoint_stabilized_solve(&problem, &Stabilization::Local(tau_h))?;

    let exact_asym = exact.asymmetry()?;
    let checks = vec![
        Check::at_most("csv-round-trip-mismatches", mismatches as f64, 0.0),
        Check::at_most("coarse-data-leakage", leakage, 1e-9),
        Check::at_most("orthogonal-kernel-asymmetry", approx.asymmetry()?, 1e-12),
        Check::at_most(
            "steady-adjoint-equivalence",
            adjoint
                .matrix
                .max_abs_diff(&tau_model.matrix)
                .max(max_abs_diff(&adjoint.rhs, &tau_model.rhs)),
            1e-12,
        ),
    ];
    let h = problem.h();
    let metrics = BTreeMap::from([
        ("exact_asymmetry".to_string(), json!(exact_asym)),
        ("exact_kernel_symmetric".to_string(), json!(exact_asym < 1e-9)),
        (
            "exact_far_field_ratio".to_string(),
            json!(exact.off_diagonal_ratio(2.0 * h)),
        ),
        (
            "orthogonal_far_field_ratio".to_string(),
            json!(approx.off_diagonal_ratio(2.0 * h)),
        ),
        ("k_hat_condition".to_string(), json!(condition)),
        ("stabilization_tau".to_string(), json!(tau_h)),
        (
            "overshoot_galerkin".to_string(),
            json!(nodal_overshoot(&galerkin, 1.0)),
        ),
        ("overshoot_supg".to_string(), json!(nodal_overshoot(&supg, 1.0))),
        (
            "overshoot_tau_model".to_string(),
            json!(nodal_overshoot(&tau_model, 1.0)),
        ),
    ]);
    Ok((checks, metrics))
}

#[derive(Serialize)]
struct SweepRow {
    ptilde: usize,
    nelem: usize,
    c: f64,
    max_abs_discrepancy: f64,
    max_rel_discrepancy: f64,
}

#[derive(Serialize)]
struct RatioRow {
    n_fine: usize,
    s1: f64,
    s2: f64,
    ratio: f64,
}

fn periodic_dg(
    nelem: usize,
    p: usize,
    n: usize,
    physics: Physics<f64>,
    flux: FluxKind,
) -> Run<SemiDiscreteProblem<f64>> {
    let mesh = Mesh1D::new(0.0, 1.0, nelem, true)?;
    let disc = Discretization::new(mesh, ScaleSplit::legendre(p, n)?)?;
    Ok(SemiDiscreteProblem::new(disc, physics, Scheme::Dg(flux))?)
}

fn upwind_equiv(cfg: &ExperimentConfig, out: &Path) -> Run<Outcome> {
    let sw = cfg.sweep.as_ref().expect("validated");
    let extra = cfg.nfine - cfg.ptilde;
    let cases: Vec<(usize, usize, f64)> = sw
        .ptilde
        .iter()
        .flat_map(|&p| {
            sw.nelem
                .iter()
                .flat_map(move |&n| sw.c.iter().map(move |&c| (p, n, c)))
        })
        .collect();
    let rows = cases
        .par_iter()
        .enumerate()
        .map(|(idx, &(p, nelem, c))| -> Run<SweepRow> {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(idx as u64);
            let physics = Physics::Linear(LinearOperator1D::new(c, 0.0)?);
            let central = periodic_dg(nelem, p, p + extra, physics, FluxKind::Central)?;
            let upwind = central.with_flux(FluxKind::Upwind)?;
            let (s1, _) = s1_s2(&central.disc.split, central.disc.mesh.h())?;
            let tau = 1.0 / (c.abs() * s1);
            let (mut abs, mut rel) = (0.0f64, 0.0f64);
            for _ in 0..sw.states {
                let mut a = central.coarse_zero();
                for k in 0..nelem {
                    for j in a.modes.clone() {
                        a.set(k, j, rng.gen_range(-1.0..1.0) / (j as f64 + 1.0));
                    }
                }
                let k = kernel_s0_dg(&central, &a, FineSupport::Infinite)?;
                let up = weak_rhs(&upwind, &a)?;
                let cen = weak_rhs(&central, &a)?;
                let scale = up.max_abs().max(f64::MIN_POSITIVE);
                for i in 0..k.data.len() {
                    let d = (tau * k.data[i] - (up.data[i] - cen.data[i])).abs();
                    abs = abs.max(d);
                    rel = rel.max(d / scale);
                }
            }
            Ok(SweepRow {
                ptilde: p,
                nelem,
                c,
                max_abs_discrepancy: abs,
                max_rel_discrepancy: rel,
            })
        })
        .collect::<Run<Vec<_>>>()?;
    let worst = rows.iter().fold(0.0f64, |m, r| m.max(r.max_rel_discrepancy));
    io::write_file(&out.join("upwind_sweep.csv"), &rows)?;

    let ratios = sw
        .fine_counts
        .iter()
        .map(|&m| -> Run<RatioRow> {
            let (s1, s2) = s1_s2(&ScaleSplit::legendre(1, 1 + m)?, 1.0)?;
            Ok(RatioRow {
                n_fine: m,
                s1,
                s2,
                ratio: (s2 / s1).abs(),
            })
        })
        .collect::<Run<Vec<_>>>()?;
    io::write_file(&out.join("s2_s1.csv"), &ratios)?;
    let increases = ratios.windows(2).filter(|w| w[1].ratio >= w[0].ratio).count();
    let slope = log_log_slope(
        &ratios.iter().map(|r| r.n_fine as f64).collect::<Vec<_>>(),
        &ratios.iter().map(|r| r.ratio).collect::<Vec<_>>(),
    );
    let checks = vec![
        Check::at_most("upwind-identity-relative-discrepancy", worst, 1e-10),
        Check::at_most("s2-s1-non-decreasing-steps", increases as f64, 0.0),
        Check::near("s2-s1-log-log-slope", slope, -1.0, 0.3),
    ];
    let metrics = BTreeMap::from([
        ("cases".to_string(), json!(rows.len())),
        (
            "max_abs_discrepancy".to_string(),
            json!(rows.iter().fold(0.0f64, |m, r| m.max(r.max_abs_discrepancy))),
        ),
    ]);
    Ok((checks, metrics))
}

fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let cov: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let var: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    cov / var
}

#[derive(Serialize)]
struct ConvergenceRow {
    n_s: usize,
    error: f64,
    difference: Option<f64>,
    order: Option<f64>,
}

fn trajectory_from(
    disc: &Discretization<f64>,
    times: &[f64],
    states: Vec<ModalField<f64>>,
) -> Trajectory<f64> {
    Trajectory {
        diagnostics: times
            .iter()
            .zip(&states)
            .map(|(t, a)| diagnostics(disc, *t, a))
            .collect(),
        times: times.to_vec(),
        states,
        aux: None,
        spectra: None,
    }
}

fn linear_memory(cfg: &ExperimentConfig, out: &Path) -> Run<Outcome> {
    let mesh = Mesh1D::new(-1.0, 1.0, cfg.nelem, false)?;
    let disc = Discretization::new(mesh, ScaleSplit::legendre(cfg.ptilde, cfg.nfine)?)?;
    let op = LinearOperator1D::new(cfg.c, cfg.nu)?;
    let problem = SemiDiscreteProblem::new(disc, Physics::Linear(op), Scheme::WeakDirichlet)?
        .with_forcing_fn(|x: f64| 1.0 + 0.5 * x.sin())?;
    let sys = LinearSystem::assemble(&problem)?;
    let nc = sys.n_coarse;
    let reference = sys.exact_solution(&vec![0.0; sys.mass.len()], cfg.tend)?;
    let a0 = vec![0.0; nc];
    let runs = cfg
        .n_s
        .par_iter()
        .map(|&n| solve_memory_closed(&sys, &a0, cfg.tend, cfg.dt, n))
        .collect::<Result<Vec<_>, _>>()?;
    let finals: Vec<&Vec<f64>> = runs
        .iter()
        .map(|r| r.states.last().expect("nonempty run"))
        .collect();
    let mut rows = Vec::new();
    for (i, &n) in cfg.n_s.iter().enumerate() {
        let difference = (i > 0).then(|| max_abs_diff(finals[i], finals[i - 1]));
        let order = (i > 1).then(|| {
            let prev = max_abs_diff(finals[i - 1], finals[i - 2]);
            (prev / difference.expect("i > 0")).log2()
        });
        rows.push(ConvergenceRow {
            n_s: n,
            error: max_abs_diff(finals[i], &reference[..nc]),
            difference,
            order,
        });
    }
    io::write_file(&out.join("convergence.csv"), &rows)?;

    let finest = runs.last().expect("validated: at least three panel counts");
    let states = finest
        .states
        .iter()
        .map(|s| ModalField::from_data(1, problem.disc.split.coarse_modes(), s.clone()))
        .collect::<Result<Vec<_>, _>>()?;
    let traj = trajectory_from(&problem.disc, &finest.times, states);
    io::write_file(&out.join("trajectory.csv"), io::trajectory_rows(&traj))?;
    io::write_file(&out.join("diagnostics.csv"), io::diagnostics_rows(&traj))?;

    let last = rows.last().expect("nonempty");
    let checks = vec![
        Check::at_most("error-at-finest-n_s", last.error, 1e-6),
        Check::near("n_s-convergence-order", last.order.unwrap_or(f64::NAN), 2.0, 0.3),
    ];
    let metrics = BTreeMap::from([(
        "orders".to_string(),
        json!(rows.iter().filter_map(|r| r.order).collect::<Vec<_>>()),
    )]);
    Ok((checks, metrics))
}

fn burgers(cfg: &ExperimentConfig, out: &Path) -> Run<Outcome> {
    let mesh = Mesh1D::new(0.0, 2.0 * PI, 1, true)?;
    let disc = Discretization::new(mesh, ScaleSplit::fourier(cfg.ptilde, cfg.nfine)?)?;
    let problem = SemiDiscreteProblem::new(disc, Physics::Burgers { nu: cfg.nu }, Scheme::Spectral)?;
    let u0 = |x: f64| x.sin();
    let icfg = IntegratorConfig::new(cfg.dt, cfg.tend)?;
    let closure = closure_config(cfg, None)?;
    let a0 = problem.project_initial(u0)?;
    let full = full_reference_solve(&problem, u0, &icfg)?;
    let none = integrate(&problem, &a0, &MemoryModelConfig::none(), &icfg)?;
    let closed = integrate(&problem, &a0, &closure, &icfg)?;

    io::write_file(&out.join("trajectory.csv"), io::trajectory_rows(&closed))?;
    io::write_file(&out.join("diagnostics.csv"), io::diagnostics_rows(&closed))?;
    io::write_file(&out.join("spectrum.csv"), io::spectrum_rows(&closed)?)?;
    io::write_file(&out.join("none_diagnostics.csv"), io::diagnostics_rows(&none))?;
    io::write_file(
        &out.join("reference_diagnostics.csv"),
        io::diagnostics_rows(&full),
    )?;
    io::write_file(&out.join("reference_spectrum.csv"), io::spectrum_rows(&full)?)?;

    // energy + viscous dissipation of the resolved reference
    let rdisc = resolved_problem(&problem)?.disc;
    let dissipation = |a: &ModalField<f64>| {
        let ux = rdisc.reconstruct_dx(a);
        cfg.nu * rdisc.inner(&ux, &ux)
    };
    let budget = full.diagnostics[0].energy;
    let (mut lost, mut imbalance) = (0.0, 0.0f64);
    for i in 1..full.len() {
        let dt = full.times[i] - full.times[i - 1];
        lost += 0.5 * dt * (dissipation(&full.states[i - 1]) + dissipation(&full.states[i]));
        imbalance = imbalance.max((full.diagnostics[i].energy + lost - budget).abs() / budget);
    }

    let coarse = problem.disc.split.coarse_modes();
    let mut envelope = 0.0f64;
    let snapshots = closed.len().min(full.len()).min(none.len());
    for i in 0..snapshots {
        let reference = diagnostics(
            &problem.disc,
            full.times[i],
            &full.states[i].restrict(coarse.clone()),
        )
        .energy;
        let e = closed.diagnostics[i].energy;
        envelope = envelope
            .max(0.9 * reference - e)
            .max(e - none.diagnostics[i].energy);
    }
    let i0 = closed.diagnostics[0].integral;
    let drift = closed
        .diagnostics
        .iter()
        .fold(0.0f64, |m, d| m.max((d.integral - i0).abs()));

    let mut checks = vec![
        Check::at_most("reference-energy-balance", imbalance, 0.02),
        Check::at_most("closed-integral-drift", drift, 1e-10),
    ];
    if cfg.closure != Closure::None {
        checks.push(Check::at_most("energy-envelope-violation", envelope, 1e-12));
    }
    let metrics = BTreeMap::from([
        (
            "final_energy_closed".to_string(),
            json!(closed.diagnostics.last().map(|d| d.energy)),
        ),
        (
            "final_energy_none".to_string(),
            json!(none.diagnostics.last().map(|d| d.energy)),
        ),
        (
            "final_energy_reference".to_string(),
            json!(full.diagnostics.last().map(|d| d.energy)),
        ),
    ]);
    Ok((checks, metrics))
}

fn advect(cfg: &ExperimentConfig, out: &Path) -> Run<Outcome> {
    let physics = Physics::Linear(LinearOperator1D::new(cfg.c, 0.0)?);
    let problem = periodic_dg(cfg.nelem, cfg.ptilde, cfg.nfine, physics, cfg.flux.into())?;
    let (s1, _) = s1_s2(&problem.disc.split, problem.disc.mesh.h())?;
    let default_tau = 1.0 / (cfg.c.abs() * s1);
    let closure = closure_config(cfg, Some(default_tau))?.with_support(FineSupport::Infinite);
    let a0 =
        problem.project_initial(|x| (2.0 * PI * x).sin() + 0.5 * (-50.0 * (x - 0.5f64).powi(2)).exp())?;
    let icfg = IntegratorConfig::new(cfg.dt, cfg.tend)?;
    let traj = integrate(&problem, &a0, &closure, &icfg)?;

    io::write_file(&out.join("trajectory.csv"), io::trajectory_rows(&traj))?;
    io::write_file(&out.join("diagnostics.csv"), io::diagnostics_rows(&traj))?;
    let stride = (traj.len() / 10).max(1);
    let samples = (0..traj.len())
        .step_by(stride)
        .map(|i| -> Run<KernelSample<f64>> {
            Ok(KernelSample {
                values: kernel_s0(&problem, &traj.states[i], FineSupport::Infinite)?,
                t: traj.times[i],
            })
        })
        .collect::<Run<Vec<_>>>()?;
    io::write_file(&out.join("kernel.csv"), io::kernel_rows(&samples))?;

    let i0 = traj.diagnostics[0].integral;
    let drift = traj
        .diagnostics
        .iter()
        .fold(0.0f64, |m, d| m.max((d.integral - i0).abs()));
    let mut checks = vec![Check::at_most("integral-drift", drift, 1e-11)];
    let identity_setup =
        cfg.closure == Closure::Tau && cfg.tau.is_none() && cfg.flux == crate::config::Flux::Central;
    if identity_setup {
        let upwind = problem.with_flux(FluxKind::Upwind)?;
        let reference = integrate(&upwind, &a0, &MemoryModelConfig::none(), &icfg)?;
        let gap = traj
            .states
            .iter()
            .zip(&reference.states)
            .fold(0.0f64, |m, (a, b)| m.max(a.max_abs_diff(b)));
        checks.push(Check::at_most("upwind-trajectory-match", gap, 1e-10));
    }
    let metrics = BTreeMap::from([
        ("tau".to_string(), json!(cfg.tau.unwrap_or(default_tau))),
        ("steps".to_string(), json!(traj.len() - 1)),
    ]);
    Ok((checks, metrics))
}
