//! Explicit RK4 integration of closed coarse systems and of the full coupled
//! system, with per-step diagnostics.

use crate::basis::FourierBasis;
use crate::error::{invalid, Error, Result};
use crate::memory::{closure_rhs, FiniteMemoryAux, MemoryModelConfig};
use crate::meshproj::{BasisKind, Discretization, GridFunction, ModalField};
use crate::operators::{interface_jumps, interface_values, weak_rhs, Scheme, SemiDiscreteProblem};
use crate::scalar::{parity_sign, Real};

/// Snapshot cap before trajectories are thinned.
pub const MAX_SNAPSHOTS: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntegratorConfig<T> {
    pub dt: T,
    pub t_end: T,
    /// Start time; the t-model measures memory from here, so restarts keep the original origin.
    pub t0: T,
    pub cfl: T,
    pub max_snapshots: usize,
}

impl<T: Real> IntegratorConfig<T> {
    pub fn new(dt: T, t_end: T) -> Result<Self> {
        let c = Self {
            dt,
            t_end,
            t0: T::zero(),
            cfl: T::lit(0.5),
            max_snapshots: MAX_SNAPSHOTS,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn with_cfl(mut self, cfl: T) -> Result<Self> {
        self.cfl = cfl;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > T::zero()) || !self.dt.is_finite() {
            return invalid(format!("time step must be positive, got {}", self.dt));
        }
        if !(self.t_end >= self.t0) || !self.t_end.is_finite() {
            return invalid("t_end must be finite and not before t0");
        }
        if !(self.cfl > T::zero()) {
            return invalid("CFL number must be positive");
        }
        if self.max_snapshots < 2 {
            return invalid("need room for at least two snapshots");
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        let n = ((self.t_end - self.t0) / self.dt).round();
        n.to_usize().unwrap_or(0)
    }
}

/// Step-size limits `(advective, diffusive)` for the discretization at wave speed `speed`.
pub fn stable_dt<T: Real>(problem: &SemiDiscreteProblem<T>, speed: T, cfl: T) -> (T, T) {
    let disc = &problem.disc;
    let p = disc.n_coarse().max(1) - 1;
    let (adv_len, diff_len) = match disc.split.kind {
        BasisKind::Legendre => {
            let h = disc.mesh.h();
            (
                h / T::from_usize_lossy(2 * p + 1),
                h / T::from_usize_lossy((p + 1) * (p + 1)),
            )
        }
        BasisKind::Fourier => {
            let k = T::from_usize_lossy(disc.split.coarse);
            let l = disc.mesh.length();
            (
                l / (T::lit(2.0) * k + T::one()),
                l / (T::lit(2.0) * T::PI() * k.max(T::one())),
            )
        }
    };
    let adv = if speed > T::zero() {
        cfl * adv_len / speed
    } else {
        T::infinity()
    };
    let nu = problem.physics.nu();
    let diff = if nu > T::zero() {
        cfl * diff_len * diff_len / nu
    } else {
        T::infinity()
    };
    (adv, diff)
}

fn max_speed<T: Real>(problem: &SemiDiscreteProblem<T>, a: &ModalField<T>) -> T {
    problem
        .disc
        .reconstruct(a)
        .values
        .iter()
        .fold(T::zero(), |m, &u| m.max(problem.physics.flux_derivative(u).abs()))
}

fn check_cfl<T: Real>(
    problem: &SemiDiscreteProblem<T>,
    a: &ModalField<T>,
    config: &IntegratorConfig<T>,
) -> Result<()> {
    let (adv, diff) = stable_dt(problem, max_speed(problem, a), config.cfl);
    let limit = adv.min(diff);
    if config.dt > limit {
        return invalid(format!(
            "dt = {} exceeds the stability limit {} (CFL {})",
            config.dt, limit, config.cfl
        ));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct DiagnosticRow<T> {
    pub t: T,
    pub integral: T,
    pub energy: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory<T> {
    pub times: Vec<T>,
    pub states: Vec<ModalField<T>>,
    pub aux: Option<Vec<ModalField<T>>>,
    pub diagnostics: Vec<DiagnosticRow<T>>,
    /// Energy per wavenumber, Fourier runs only.
    pub spectra: Option<Vec<Vec<T>>>,
}

impl<T: Real> Trajectory<T> {
    fn empty(fourier: bool, with_aux: bool) -> Self {
        Self {
            times: Vec::new(),
            states: Vec::new(),
            aux: with_aux.then(Vec::new),
            diagnostics: Vec::new(),
            spectra: fourier.then(Vec::new),
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> &ModalField<T> {
        self.states
            .last()
            .expect("trajectory has at least the initial state")
    }

    /// Same trajectory keeping only `modes` of every state.
    pub fn restrict(&self, modes: std::ops::Range<usize>) -> Self {
        Self {
            times: self.times.clone(),
            states: self.states.iter().map(|s| s.restrict(modes.clone())).collect(),
            aux: self.aux.clone(),
            diagnostics: self.diagnostics.clone(),
            spectra: self.spectra.clone(),
        }
    }

    fn record(
        &mut self,
        disc: &Discretization<T>,
        t: T,
        a: &ModalField<T>,
        aux: Option<&FiniteMemoryAux<T>>,
    ) {
        self.times.push(t);
        self.diagnostics.push(diagnostics(disc, t, a));
        if let Some(s) = self.spectra.as_mut() {
            s.push(spectrum(disc, a));
        }
        if let (Some(v), Some(m)) = (self.aux.as_mut(), aux) {
            v.push(m.state.clone());
        }
        self.states.push(a.clone());
    }

    /// Drop every other snapshot except the first and the last.
    fn thin(&mut self) {
        fn keep<V: Clone>(v: &mut Vec<V>) {
            let last = v.len() - 1;
            let mut i = 0;
            v.retain(|_| {
                let k = i % 2 == 0 || i == last;
                i += 1;
                k
            });
        }
        keep(&mut self.times);
        keep(&mut self.states);
        keep(&mut self.diagnostics);
        if let Some(s) = self.spectra.as_mut() {
            keep(s);
        }
        if let Some(a) = self.aux.as_mut() {
            keep(a);
        }
    }
}

pub fn diagnostics<T: Real>(disc: &Discretization<T>, t: T, a: &ModalField<T>) -> DiagnosticRow<T> {
    let u = disc.reconstruct(a);
    DiagnosticRow {
        t,
        integral: disc.integral(&u),
        energy: disc.inner(&u, &u) / T::lit(2.0),
    }
}

/// `E(k) = 1/2 sum_{j : k(j) = k} m_j a_j^2` for a Fourier field; Legendre
/// fields are binned by degree with all elements summed.
pub fn spectrum<T: Real>(disc: &Discretization<T>, a: &ModalField<T>) -> Vec<T> {
    let bin = |j: usize| match disc.split.kind {
        BasisKind::Fourier => FourierBasis::wavenumber(j),
        BasisKind::Legendre => j,
    };
    let n_bins = a.modes.clone().map(bin).max().map_or(0, |m| m + 1);
    let mut e = vec![T::zero(); n_bins];
    for k in 0..a.n_elem {
        for j in a.modes.clone() {
            let v = a.get(k, j);
            e[bin(j)] += disc.mass(j) * v * v / T::lit(2.0);
        }
    }
    e
}

struct State<T> {
    a: ModalField<T>,
    aux: Option<FiniteMemoryAux<T>>,
}

impl<T: Real> State<T> {
    fn axpy(&self, s: T, d: &State<T>) -> State<T> {
        let mut a = self.a.clone();
        for (x, y) in a.data.iter_mut().zip(&d.a.data) {
            *x += s * *y;
        }
        let aux = self.aux.as_ref().map(|m| {
            let mut m = m.clone();
            let dm = d.aux.as_ref().expect("matching aux");
            for (x, y) in m.state.data.iter_mut().zip(&dm.state.data) {
                *x += s * *y;
            }
            m
        });
        State { a, aux }
    }

    fn is_finite(&self) -> bool {
        self.a.data.iter().all(|v| v.is_finite())
            && self
                .aux
                .as_ref()
                .map_or(true, |m| m.state.data.iter().all(|v| v.is_finite()))
    }
}

fn evaluate<T: Real>(
    problem: &SemiDiscreteProblem<T>,
    closure: &MemoryModelConfig<T>,
    s: &State<T>,
    t: T,
) -> Result<State<T>> {
    let mut rhs = weak_rhs(problem, &s.a)?;
    let inc = closure_rhs(problem, &s.a, closure, s.aux.as_ref(), t)?;
    for (r, v) in rhs.data.iter_mut().zip(&inc.increment.data) {
        *r += *v;
    }
    problem.apply_inverse_mass(&mut rhs);
    let aux = inc.aux_rate.map(|state| FiniteMemoryAux { state });
    Ok(State { a: rhs, aux })
}

/// Advance `M~ da~/dt = rhs(a~) + closure` from the coarse initial state `a0`.
pub fn integrate<T: Real>(
    problem: &SemiDiscreteProblem<T>,
    a0: &ModalField<T>,
    closure: &MemoryModelConfig<T>,
    config: &IntegratorConfig<T>,
) -> Result<Trajectory<T>> {
    config.validate()?;
    closure.validate()?;
    if a0.n_elem != problem.n_elem() || a0.modes.start != 0 {
        return invalid("initial state does not match the problem");
    }
    crate::scalar::ensure_finite(&a0.data, "initial state")?;
    check_cfl(problem, a0, config)?;
    let disc = &problem.disc;
    let mut state = State {
        a: a0.clone(),
        aux: closure
            .needs_aux()
            .then(|| FiniteMemoryAux::zeros(a0.n_elem, a0.modes.clone())),
    };
    let fourier = disc.split.kind == BasisKind::Fourier;
    let mut traj = Trajectory::empty(fourier, state.aux.is_some());
    traj.record(disc, config.t0, &state.a, state.aux.as_ref());
    let n_steps = config.n_steps();
    let dt = config.dt;
    let half = dt / T::lit(2.0);
    let mut stride = 1usize;
    let mut t = config.t0;
    for step in 1..=n_steps {
        let k1 = evaluate(problem, closure, &state, t)?;
        let k2 = evaluate(problem, closure, &state.axpy(half, &k1), t + half)?;
        let k3 = evaluate(problem, closure, &state.axpy(half, &k2), t + half)?;
        let k4 = evaluate(problem, closure, &state.axpy(dt, &k3), t + dt)?;
        let next = state
            .axpy(dt / T::lit(6.0), &k1)
            .axpy(dt / T::lit(3.0), &k2)
            .axpy(dt / T::lit(3.0), &k3)
            .axpy(dt / T::lit(6.0), &k4);
        if !next.is_finite() {
            return Err(Error::BlowUp {
                last_valid_time: t.to_f64().unwrap_or(f64::NAN),
            });
        }
        state = next;
        t = config.t0 + dt * T::from_usize_lossy(step);
        if step % stride == 0 || step == n_steps {
            traj.record(disc, t, &state.a, state.aux.as_ref());
            if traj.len() > config.max_snapshots {
                traj.thin();
                stride *= 2;
            }
        }
    }
    Ok(traj)
}

/// The problem with every mode resolved (`p~ = N`, `K~ = K`), on the same quadrature grid.
pub fn resolved_problem<T: Real>(problem: &SemiDiscreteProblem<T>) -> Result<SemiDiscreteProblem<T>> {
    let disc = &problem.disc;
    let full = Discretization::with_nodes(disc.mesh.clone(), disc.split.resolved(), disc.nodes_per_elem())?;
    let mut p = SemiDiscreteProblem::new(full, problem.physics, problem.scheme)?;
    p.forcing = problem.forcing.clone();
    Ok(p)
}

/// Integrate the full coupled system from `u0` (coarse projection, zero fine part).
/// States in the returned trajectory carry all modes up to the fine truncation.
pub fn full_reference_solve<T: Real>(
    problem: &SemiDiscreteProblem<T>,
    u0: impl Fn(T) -> T,
    config: &IntegratorConfig<T>,
) -> Result<Trajectory<T>> {
    let full = resolved_problem(problem)?;
    if full.disc.n_coarse() * full.n_elem() > 10_000 {
        return invalid("full system larger than 10^4 unknowns");
    }
    let a0 = problem
        .project_initial(u0)?
        .extend(full.disc.split.coarse_modes());
    integrate(&full, &a0, &MemoryModelConfig::none(), config)
}

/// `tau` times the kernel written as a modified-flux form: the fine function
/// `q` is built mode by mode, then `F - tau F'(u~) q` and `f* - tau (df*/da q^- + df*/db q^+)`
/// replace the volume and interface fluxes. Returns the change of the coarse right-hand side.
pub fn artificial_viscosity_rhs<T: Real>(
    problem: &SemiDiscreteProblem<T>,
    a: &ModalField<T>,
    tau: T,
) -> Result<ModalField<T>> {
    if !matches!(problem.scheme, Scheme::Dg(_)) {
        return invalid("artificial viscosity form needs a DG problem");
    }
    let disc = &problem.disc;
    let n = a.n_elem;
    let flux = problem.flux_function()?;
    let jumps = interface_jumps(problem, a, &flux)?;
    let u = disc.reconstruct(a);
    let ux = disc.reconstruct_dx(a);
    let forcing = problem.forcing_grid();
    let mut src = GridFunction::zeros(n, disc.nodes_per_elem());
    for (i, s) in src.values.iter_mut().enumerate() {
        *s = problem.physics.flux_derivative(u.values[i]) * ux.values[i] - forcing.values[i];
    }
    // q = Pi'(div F - f) + fine lift of the flux defects
    let mut q = disc.project(&src, disc.split.fine_modes())?;
    for k in 0..n {
        for j in disc.split.fine_modes() {
            let lift = (parity_sign::<T>(j) * jumps.delta_left[k] - jumps.delta_right[k]) / disc.mass(j);
            q.set(k, j, q.get(k, j) + lift);
        }
    }
    let q_full = q.extend(0..disc.n_total());
    let (q_left, q_right): (Vec<T>, Vec<T>) = (0..n).map(|k| disc.traces(&q_full, k)).unzip();
    let q_grid = disc.reconstruct(&q);
    let mut modified_volume = disc.zero_grid();
    for (i, v) in modified_volume.values.iter_mut().enumerate() {
        let fu = problem.physics.flux(u.values[i]);
        *v = fu - tau * problem.physics.flux_derivative(u.values[i]) * q_grid.values[i];
    }
    let modified_flux: Vec<T> = (0..=n)
        .map(|i| {
            let (qa, qb) = interface_values(i, &q_left, &q_right, problem.boundary);
            let (da, db) = jumps.flux_partials[i];
            jumps.flux[i] - tau * (da * qa + db * qb)
        })
        .collect();
    let base = weak_rhs(problem, &a.restrict(disc.split.coarse_modes()))?;
    let mut out = ModalField::zeros(n, disc.split.coarse_modes());
    for k in 0..n {
        for j in disc.split.coarse_modes() {
            let surface = modified_flux[k + 1] - parity_sign::<T>(j) * modified_flux[k];
            let rhs = disc.moment_dx(k, j, &modified_volume) - surface + disc.moment(k, j, &forcing);
            out.set(k, j, rhs - base.get(k, j));
        }
    }
    Ok(out)
}
