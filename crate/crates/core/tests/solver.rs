mod common;

use common::*;
use mzvms::memory::{s1_s2, FineSupport, MemoryModelConfig};
use mzvms::operators::FluxKind;
use mzvms::solver::{diagnostics, full_reference_solve, integrate, resolved_problem, IntegratorConfig};
use mzvms::Error;
use std::f64::consts::PI;

#[test]
fn tau_model_with_central_flux_reproduces_upwind_trajectory() {
    for &c in &[1.0, -2.5] {
        let central = dg_advection(12, 2, 9, c, FluxKind::Central);
        let upwind = central.with_flux(FluxKind::Upwind).unwrap();
        let (s1, _) = s1_s2(&central.disc.split, central.disc.mesh.h()).unwrap();
        let tau = 1.0 / (c.abs() * s1);
        let closure = MemoryModelConfig::tau_model(tau)
            .unwrap()
            .with_support(FineSupport::Infinite);
        let a0 = central
            .project_initial(|x| (2.0 * PI * x).sin() + 0.3 * (4.0 * PI * x).cos())
            .unwrap();
        let cfg = IntegratorConfig::new(2e-3, 0.4).unwrap();
        let a = integrate(&central, &a0, &closure, &cfg).unwrap();
        let b = integrate(&upwind, &a0, &MemoryModelConfig::none(), &cfg).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.states.iter().zip(&b.states) {
            assert!(x.max_abs_diff(y) < 1e-10, "c = {c}: {}", x.max_abs_diff(y));
        }
    }
}

fn transport_error(p: usize, n_elem: usize) -> f64 {
    let problem = dg_advection(n_elem, p, p + 1, 1.0, FluxKind::Upwind);
    let u0 = |x: f64| (2.0 * PI * x).sin();
    let a0 = problem.project_initial(u0).unwrap();
    let h = 1.0 / n_elem as f64;
    let steps = ((2 * p + 1) as f64 / (0.25 * h)).ceil();
    let cfg = IntegratorConfig::new(1.0 / steps, 1.0).unwrap();
    let traj = integrate(&problem, &a0, &MemoryModelConfig::none(), &cfg).unwrap();
    let disc = &problem.disc;
    let diff = disc
        .reconstruct(traj.final_state())
        .zip_with(&disc.sample(u0), |a, b| a - b);
    disc.inner(&diff, &diff).sqrt()
}

#[test]
fn upwind_dg_converges_at_order_p_plus_one() {
    for p in 0..=2usize {
        // first-order upwind needs a finer mesh before its asymptotic rate shows
        let n = if p == 0 { 128 } else { 16 };
        let e1 = transport_error(p, n);
        let e2 = transport_error(p, 2 * n);
        let order = (e1 / e2).log2();
        let expected = (p + 1) as f64;
        assert!(
            (order - expected).abs() < 0.2 * expected,
            "p = {p}: order {order}"
        );
    }
}

#[test]
fn rk4_temporal_order() {
    let problem = spectral_advection(8, 9, 1.0, 0.05);
    let a0 = problem.project_initial(|x| (x.sin() * 2.0).exp()).unwrap();
    let run = |dt: f64| {
        let cfg = IntegratorConfig::new(dt, 1.0).unwrap();
        integrate(&problem, &a0, &MemoryModelConfig::none(), &cfg)
            .unwrap()
            .final_state()
            .clone()
    };
    let reference = run(1.0 / 640.0);
    let e1 = run(1.0 / 40.0).max_abs_diff(&reference);
    let e2 = run(1.0 / 80.0).max_abs_diff(&reference);
    let order = (e1 / e2).log2();
    assert!((order - 4.0).abs() < 0.3, "order {order}");
}

#[test]
fn pure_diffusion_energy_never_increases() {
    let problem = spectral_advection(8, 9, 0.0, 0.1);
    let a0 = problem.project_initial(|x| x.cos() + (3.0 * x).sin()).unwrap();
    let cfg = IntegratorConfig::new(0.01, 1.0).unwrap();
    let traj = integrate(&problem, &a0, &MemoryModelConfig::none(), &cfg).unwrap();
    for w in traj.diagnostics.windows(2) {
        assert!(w[1].energy <= w[0].energy);
    }
    assert_eq!(traj.diagnostics.len(), traj.times.len());
    assert_eq!(traj.spectra.as_ref().unwrap().len(), traj.times.len());
}

#[test]
fn closed_dg_runs_conserve_the_integral() {
    let mut r = rng(11);
    for flux in [FluxKind::Central, FluxKind::Upwind] {
        let problem = dg_burgers(8, 2, 6, flux);
        let mut a0 = random_coarse(&problem, &mut r);
        for k in 0..a0.n_elem {
            for j in 0..3 {
                a0.set(k, j, a0.get(k, j) * 0.2);
            }
        }
        let cfg = IntegratorConfig::new(2e-4, 0.2).unwrap();
        let closure = MemoryModelConfig::tau_model(0.01).unwrap();
        let traj = integrate(&problem, &a0, &closure, &cfg).unwrap();
        let i0 = traj.diagnostics[0].integral;
        for d in &traj.diagnostics {
            assert!(
                (d.integral - i0).abs() < 1e-11,
                "{flux:?}: {}",
                (d.integral - i0).abs()
            );
        }
    }
}

#[test]
fn finite_memory_aux_is_recorded() {
    let problem = dg_advection(6, 1, 4, 1.0, FluxKind::Central);
    let a0 = problem.project_initial(|x| (2.0 * PI * x).cos()).unwrap();
    let cfg = IntegratorConfig::new(2e-3, 0.1).unwrap();
    let traj = integrate(
        &problem,
        &a0,
        &MemoryModelConfig::finite_memory(0.05).unwrap(),
        &cfg,
    )
    .unwrap();
    let aux = traj.aux.as_ref().unwrap();
    assert_eq!(aux.len(), traj.len());
    assert_eq!(aux[0].max_abs(), 0.0);
    assert!(aux.last().unwrap().max_abs() > 0.0);
}

#[test]
fn full_solve_starts_from_the_coarse_projection() {
    let problem = dg_advection(4, 1, 5, 1.0, FluxKind::Upwind);
    let u0 = |x: f64| (2.0 * PI * x).sin();
    let cfg = IntegratorConfig::new(1e-3, 0.01).unwrap();
    let traj = full_reference_solve(&problem, u0, &cfg).unwrap();
    let a0 = problem.project_initial(u0).unwrap();
    let first = &traj.states[0];
    assert_eq!(first.restrict(problem.disc.split.coarse_modes()), a0);
    assert!(first.restrict(problem.disc.split.fine_modes()).max_abs() == 0.0);
}

#[test]
fn invalid_configurations_are_rejected() {
    assert!(matches!(
        IntegratorConfig::new(0.0, 1.0),
        Err(Error::InvalidArgument(_))
    ));
    assert!(IntegratorConfig::new(1e-3, -1.0).is_err());
    let problem = dg_advection(32, 2, 4, 1.0, FluxKind::Upwind);
    let a0 = problem.project_initial(|x| x.sin()).unwrap();
    let cfg = IntegratorConfig::new(0.1, 1.0).unwrap();
    assert!(integrate(&problem, &a0, &MemoryModelConfig::none(), &cfg).is_err());
}

#[test]
fn runaway_runs_report_blow_up() {
    let problem = dg_advection(32, 2, 4, 1.0, FluxKind::Central);
    let a0 = problem.project_initial(|x| (2.0 * PI * x).sin()).unwrap();
    let cfg = IntegratorConfig::new(0.05, 100.0).unwrap().with_cfl(1e6).unwrap();
    match integrate(&problem, &a0, &MemoryModelConfig::none(), &cfg) {
        Err(Error::BlowUp { last_valid_time }) => assert!(last_valid_time > 0.0),
        other => panic!("expected blow-up, got {:?}", other.map(|t| t.len())),
    }
}

#[test]
fn long_runs_are_downsampled() {
    let problem = spectral_advection(2, 3, 1.0, 0.0);
    let a0 = problem.project_initial(|x| x.sin()).unwrap();
    let mut cfg = IntegratorConfig::new(1e-3, 1.0).unwrap();
    cfg.max_snapshots = 100;
    let traj = integrate(&problem, &a0, &MemoryModelConfig::none(), &cfg).unwrap();
    assert!(traj.len() <= 101);
    assert_eq!(*traj.times.last().unwrap(), 1.0);
    assert!(traj.times.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn burgers_tau_model_energy_stays_in_envelope() {
    let p = spectral_burgers(16, 64, 0.01);
    let u0 = |x: f64| x.sin();
    let cfg = IntegratorConfig::new(2e-3, 2.0).unwrap();
    let full = full_reference_solve(&p, u0, &cfg).unwrap();
    let a0 = p.project_initial(u0).unwrap();
    let none = integrate(&p, &a0, &MemoryModelConfig::none(), &cfg).unwrap();
    let closed = integrate(&p, &a0, &MemoryModelConfig::tau_model(0.1).unwrap(), &cfg).unwrap();
    let coarse = p.disc.split.coarse_modes();
    for i in 0..closed.len() {
        let reference = diagnostics(&p.disc, 0.0, &full.states[i].restrict(coarse.clone())).energy;
        let e = closed.diagnostics[i].energy;
        assert!(
            e >= 0.9 * reference,
            "t = {}: {e} < 0.9 * {reference}",
            closed.times[i]
        );
        assert!(e <= none.diagnostics[i].energy + 1e-12, "t = {}", closed.times[i]);
    }
}

#[test]
fn resolved_burgers_energy_balances_viscous_dissipation() {
    let nu = 0.01;
    let p = spectral_burgers(16, 64, nu);
    let cfg = IntegratorConfig::new(2e-3, 2.0).unwrap();
    let full = full_reference_solve(&p, |x| x.sin(), &cfg).unwrap();
    let disc = resolved_problem(&p).unwrap().disc;
    let dissipation = |a: &mzvms::meshproj::ModalField<f64>| {
        let ux = disc.reconstruct_dx(a);
        nu * disc.inner(&ux, &ux)
    };
    let budget = full.diagnostics[0].energy;
    let mut lost = 0.0;
    for i in 1..full.len() {
        let dt = full.times[i] - full.times[i - 1];
        lost += 0.5 * dt * (dissipation(&full.states[i - 1]) + dissipation(&full.states[i]));
        let balance = full.diagnostics[i].energy + lost;
        assert!((balance - budget).abs() <= 0.02 * budget, "t = {}", full.times[i]);
    }
    assert!(full.diagnostics.last().unwrap().energy < budget);
}
