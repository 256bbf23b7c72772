//! Memory terms of the coarse equation: the kernel at `s = 0` for spectral and
//! DG discretizations, the exact convolution for linear systems, and the
//! t-model, tau-model and finite-memory closures built on the kernel.
//!
//! Sign convention: every kernel and closure value is an addition to the
//! right-hand side of `M~ da~/dt`. With `p = Pi'(R(u~) - f)` the kernel is
//! `(w~, R'(u~) p)`; for linear problems that is `A_cf M'^{-1} (A_fc a~ - F_f)`.

use crate::error::{invalid, Result};
use crate::linalg::{phi_functions, DenseMatrix};
use crate::meshproj::{project_fine_residual, BasisKind, ModalField, ScaleSplit};
use crate::operators::{
    coarse_residual, interface_jumps, interface_values, linearized_action, LinearSystem, Scheme,
    SemiDiscreteProblem,
};
use crate::scalar::{parity_sign, Real};

pub use crate::linalg::expm as matrix_exponential;

/// Kernel values `M~K(a~(t), 0)` per coarse mode, stamped with the time they belong to.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelSample<T> {
    pub values: ModalField<T>,
    pub t: T,
}

/// How the fine space behind the DG surface terms is treated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FineSupport {
    /// Fine degrees `p~+1..=N` exactly; both `S1` and `S2` enter the traces.
    #[default]
    Truncated,
    /// "infinite-fine-support": the `S2` coupling between opposite element ends is dropped.
    Infinite,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ClosureKind<T> {
    None,
    /// `t K`.
    TModel,
    /// `tau K`.
    TauModel {
        tau: T,
    },
    /// Auxiliary memory with `dM/dt = -(2/tau) M + 2K`.
    FiniteMemory {
        tau: T,
    },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MemoryModelConfig<T> {
    pub kind: ClosureKind<T>,
    pub support: FineSupport,
}

impl<T: Real> MemoryModelConfig<T> {
    pub fn none() -> Self {
        Self {
            kind: ClosureKind::None,
            support: FineSupport::Truncated,
        }
    }

    pub fn t_model() -> Self {
        Self {
            kind: ClosureKind::TModel,
            support: FineSupport::Truncated,
        }
    }

    pub fn tau_model(tau: T) -> Result<Self> {
        Self::check_tau(tau)?;
        Ok(Self {
            kind: ClosureKind::TauModel { tau },
            support: FineSupport::Truncated,
        })
    }

    pub fn finite_memory(tau: T) -> Result<Self> {
        Self::check_tau(tau)?;
        Ok(Self {
            kind: ClosureKind::FiniteMemory { tau },
            support: FineSupport::Truncated,
        })
    }

    pub fn with_support(mut self, support: FineSupport) -> Self {
        self.support = support;
        self
    }

    fn check_tau(tau: T) -> Result<()> {
        if !(tau > T::zero()) || !tau.is_finite() {
            return invalid(format!("memory length tau must be positive, got {tau}"));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            ClosureKind::TauModel { tau } | ClosureKind::FiniteMemory { tau } => Self::check_tau(tau),
            _ => Ok(()),
        }
    }

    pub fn needs_aux(&self) -> bool {
        matches!(self.kind, ClosureKind::FiniteMemory { .. })
    }
}

/// Auxiliary memory state of the finite-memory model; starts at zero.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteMemoryAux<T> {
    pub state: ModalField<T>,
}

impl<T: Real> FiniteMemoryAux<T> {
    pub fn zeros(n_elem: usize, modes: std::ops::Range<usize>) -> Self {
        Self {
            state: ModalField::zeros(n_elem, modes),
        }
    }

    /// `-(2/tau) M + 2 K`.
    pub fn rate(&self, kernel: &ModalField<T>, tau: T) -> ModalField<T> {
        let two = T::lit(2.0);
        let mut out = self.state.clone();
        for (o, k) in out.data.iter_mut().zip(&kernel.data) {
            *o = -two / tau * *o + two * *k;
        }
        out
    }

    /// One RK4 step with the kernel held fixed over the step.
    pub fn advance_frozen(&mut self, kernel: &ModalField<T>, tau: T, dt: T) {
        let two = T::lit(2.0);
        let f = |m: T, k: T| -two / tau * m + two * k;
        for (m, &k) in self.state.data.iter_mut().zip(&kernel.data) {
            let k1 = f(*m, k);
            let k2 = f(*m + dt / two * k1, k);
            let k3 = f(*m + dt / two * k2, k);
            let k4 = f(*m + dt * k3, k);
            *m += dt / T::lit(6.0) * (k1 + two * k2 + two * k3 + k4);
        }
    }
}

/// `(S1, S2)` for a Legendre split on elements of width `h`.
pub fn s1_s2<T: Real>(split: &ScaleSplit, h: T) -> Result<(T, T)> {
    if split.kind != BasisKind::Legendre {
        return invalid("S1/S2 are defined for Legendre splits");
    }
    let fine = split.fine_modes();
    if fine.is_empty() {
        return invalid("S1/S2 need a nonempty fine mode set");
    }
    if !(h > T::zero()) {
        return invalid("element width must be positive");
    }
    let mut s1 = T::zero();
    let mut s2 = T::zero();
    for j in fine {
        // P_j(1)^2 / m'_j and P_j(1) P_j(-1) / m'_j with m'_j = h / (2j + 1)
        let inv_mass = T::from_usize_lossy(2 * j + 1) / h;
        s1 += inv_mass;
        s2 += parity_sign::<T>(j) * inv_mass;
    }
    Ok((s1, s2))
}

/// Kernel at `s = 0` on a Fourier split: `(w~_i, R'(u~) Pi'(R(u~) - f))`.
pub fn kernel_s0_spectral<T: Real>(
    problem: &SemiDiscreteProblem<T>,
    a: &ModalField<T>,
) -> Result<ModalField<T>> {
    if problem.scheme != Scheme::Spectral {
        return invalid("spectral kernel requested for a non-spectral problem");
    }
    let disc = &problem.disc;
    let r = coarse_residual(problem, a)?;
    let p = project_fine_residual(disc, &r)?;
    let lp = linearized_action(problem, a, &p)?;
    let mut out = ModalField::zeros(a.n_elem, disc.split.coarse_modes());
    for j in disc.split.coarse_modes() {
        out.set(0, j, disc.moment(0, j, &lp));
    }
    Ok(out)
}

/// Fine function driven by the DG residual of a coarse state.
///
/// `(w', q) = (w', d/dx f(u~) - f) - w'^R df^R + w'^L df^L` on every element,
/// with traces evaluated from `S1`/`S2` for the surface part.
#[derive(Clone, Debug)]
pub struct FineResidualFunction<T> {
    /// Modal coefficients over the fine degrees (volume and surface parts).
    pub modal: ModalField<T>,
    pub left: Vec<T>,
    pub right: Vec<T>,
}

pub fn dg_fine_residual<T: Real>(
    problem: &SemiDiscreteProblem<T>,
    a: &ModalField<T>,
    support: FineSupport,
) -> Result<FineResidualFunction<T>> {
    let flux = problem.flux_function()?;
    let disc = &problem.disc;
    let n = a.n_elem;
    let fine = disc.split.fine_modes();
    let (s1, s2) = s1_s2(&disc.split, disc.mesh.h())?;
    let s2 = match support {
        FineSupport::Truncated => s2,
        FineSupport::Infinite => T::zero(),
    };
    let jumps = interface_jumps(problem, a, &flux)?;
    let u = disc.reconstruct(a);
    let ux = disc.reconstruct_dx(a);
    let forcing = problem.forcing_grid();
    let mut src = disc.zero_grid();
    for (i, s) in src.values.iter_mut().enumerate() {
        *s = problem.physics.flux_derivative(u.values[i]) * ux.values[i] - forcing.values[i];
    }
    let mut modal = ModalField::zeros(n, fine.clone());
    let mut left = vec![T::zero(); n];
    let mut right = vec![T::zero(); n];
    for k in 0..n {
        let (dr, dl) = (jumps.delta_right[k], jumps.delta_left[k]);
        for j in fine.clone() {
            let vol = disc.moment(k, j, &src) / disc.mass(j);
            let sign = parity_sign::<T>(j);
            right[k] += vol;
            left[k] += sign * vol;
            modal.set(k, j, vol + (sign * dl - dr) / disc.mass(j));
        }
        right[k] += -s1 * dr + s2 * dl;
        left[k] += -s2 * dr + s1 * dl;
    }
    Ok(FineResidualFunction { modal, left, right })
}

/// Kernel at `s = 0` on a DG split:
/// `-(dw~/dx, f'(u~) q) + [w~ (df*/da q^R + df*/db q^L)]`.
pub fn kernel_s0_dg<T: Real>(
    problem: &SemiDiscreteProblem<T>,
    a: &ModalField<T>,
    support: FineSupport,
) -> Result<ModalField<T>> {
    if !matches!(problem.scheme, Scheme::Dg(_)) {
        return invalid("DG kernel requested for a non-DG problem");
    }
    let flux = problem.flux_function()?;
    let disc = &problem.disc;
    let n = a.n_elem;
    let q = dg_fine_residual(problem, a, support)?;
    let jumps = interface_jumps(problem, a, &flux)?;
    let linear_flux: Vec<T> = (0..=n)
        .map(|i| {
            let (qa, qb) = interface_values(i, &q.left, &q.right, problem.boundary);
            let (da, db) = jumps.flux_partials[i];
            da * qa + db * qb
        })
        .collect();
    let u = disc.reconstruct(a);
    let fq = disc
        .reconstruct(&q.modal)
        .zip_with(&u, |qv, uv| problem.physics.flux_derivative(uv) * qv);
    let mut out = ModalField::zeros(n, disc.split.coarse_modes());
    for k in 0..n {
        for j in disc.split.coarse_modes() {
            let surface = linear_flux[k + 1] - parity_sign::<T>(j) * linear_flux[k];
            out.set(k, j, -disc.moment_dx(k, j, &fq) + surface);
        }
    }
    Ok(out)
}

/// Kernel at `s = 0` for whichever discretization the problem uses.
pub fn kernel_s0<T: Real>(
    problem: &SemiDiscreteProblem<T>,
    a: &ModalField<T>,
    support: FineSupport,
) -> Result<ModalField<T>> {
    match problem.scheme {
        Scheme::Spectral => kernel_s0_spectral(problem, a),
        Scheme::Dg(_) => kernel_s0_dg(problem, a, support),
        Scheme::WeakDirichlet => {
            let sys = LinearSystem::assemble(problem)?;
            let k = sys.kernel_s0(&a.data);
            ModalField::from_data(1, problem.disc.split.coarse_modes(), k)
        }
    }
}

/// Coarse right-hand-side increment of a closure plus the aux derivative (finite memory).
#[derive(Clone, Debug)]
pub struct ClosureIncrement<T> {
    pub increment: ModalField<T>,
    pub aux_rate: Option<ModalField<T>>,
}

pub fn closure_rhs<T: Real>(
    problem: &SemiDiscreteProblem<T>,
    a: &ModalField<T>,
    config: &MemoryModelConfig<T>,
    aux: Option<&FiniteMemoryAux<T>>,
    t: T,
) -> Result<ClosureIncrement<T>> {
    config.validate()?;
    if config.needs_aux() != aux.is_some() {
        return invalid("auxiliary memory must be supplied exactly for the finite-memory model");
    }
    let scale = |mut k: ModalField<T>, s: T| {
        k.data.iter_mut().for_each(|v| *v *= s);
        k
    };
    match config.kind {
        ClosureKind::None => Ok(ClosureIncrement {
            increment: ModalField::zeros(a.n_elem, a.modes.clone()),
            aux_rate: None,
        }),
        ClosureKind::TModel => Ok(ClosureIncrement {
            increment: scale(kernel_s0(problem, a, config.support)?, t),
            aux_rate: None,
        }),
        ClosureKind::TauModel { tau } => Ok(ClosureIncrement {
            increment: scale(kernel_s0(problem, a, config.support)?, tau),
            aux_rate: None,
        }),
        ClosureKind::FiniteMemory { tau } => {
            let aux = aux.expect("checked above");
            let k = kernel_s0(problem, a, config.support)?;
            Ok(ClosureIncrement {
                increment: aux.state.clone(),
                aux_rate: Some(aux.rate(&k, tau)),
            })
        }
    }
}

/// `A' = M'^{-1} A_ff`, the generator of the fine-scale integrating factor.
#[derive(Clone, Debug)]
pub struct FineFineOperator<T> {
    pub matrix: DenseMatrix<T>,
    mass: Vec<T>,
    block: DenseMatrix<T>,
}

impl<T: Real> FineFineOperator<T> {
    pub fn from_system(system: &LinearSystem<T>) -> Self {
        let f = system.fine_indices();
        let block = system.stiffness.select(&f, &f);
        let mass: Vec<T> = f.iter().map(|&j| system.mass[j]).collect();
        let matrix = DenseMatrix::from_fn(f.len(), f.len(), |i, j| block[(i, j)] / mass[i]);
        Self { matrix, mass, block }
    }

    /// Whether the mass-symmetrized operator has a positive definite symmetric part,
    /// so that `e^{-s A'}` is a contraction in the mass norm.
    pub fn is_dissipative(&self) -> bool {
        let n = self.mass.len();
        let scaled = DenseMatrix::from_fn(n, n, |i, j| {
            self.block[(i, j)] / (self.mass[i] * self.mass[j]).sqrt()
        });
        scaled.symmetric_part_is_positive_definite()
    }
}

/// Exact memory of a partitioned linear system,
/// `-A_cf int_0^t e^{-s A'} M'^{-1} (F_f - A_fc a~(t - s)) ds`.
///
/// The convolution uses product integration: on each of the `n_s` panels the
/// history factor is interpolated linearly while the exponential is
/// integrated exactly through `phi_1`, `phi_2`. Second order in the panel
/// width holds once `|lambda| ds` is small for every eigenvalue of `A'`; for
/// stiff Nitsche modes the observed order is lower until then.
#[derive(Clone, Debug)]
pub struct LinearMemory<T> {
    pub fine: FineFineOperator<T>,
    a_cf: DenseMatrix<T>,
    a_fc: DenseMatrix<T>,
    load_fine: Vec<T>,
    cache: std::cell::RefCell<Option<(T, PanelFactors<T>)>>,
}

#[derive(Clone, Debug)]
struct PanelFactors<T> {
    e: DenseMatrix<T>,
    w0: DenseMatrix<T>,
    w1: DenseMatrix<T>,
}

impl<T: Real> LinearMemory<T> {
    pub fn new(system: &LinearSystem<T>) -> Result<Self> {
        let (c, f) = (system.coarse_indices(), system.fine_indices());
        if f.is_empty() {
            return invalid("linear memory needs a nonempty fine space");
        }
        Ok(Self {
            fine: FineFineOperator::from_system(system),
            a_cf: system.stiffness.select(&c, &f),
            a_fc: system.stiffness.select(&f, &c),
            load_fine: f.iter().map(|&j| system.load[j]).collect(),
            cache: std::cell::RefCell::new(None),
        })
    }

    fn factors(&self, ds: T) -> Result<PanelFactors<T>> {
        if let Some((key, f)) = self.cache.borrow().as_ref() {
            if *key == ds {
                return Ok(f.clone());
            }
        }
        let (e, phi1, phi2) = phi_functions(&self.fine.matrix.scaled(-ds))?;
        let w1 = phi1.sub(&phi2).scaled(ds);
        let f = PanelFactors {
            e,
            w0: phi2.scaled(ds),
            w1,
        };
        *self.cache.borrow_mut() = Some((ds, f.clone()));
        Ok(f)
    }

    /// `M'^{-1} (F_f - A_fc a~)`.
    fn source(&self, coarse: &[T]) -> Vec<T> {
        self.a_fc
            .matvec(coarse)
            .into_iter()
            .zip(&self.load_fine)
            .zip(&self.fine.mass)
            .map(|((ax, f), m)| (*f - ax) / *m)
            .collect()
    }

    /// Memory at time `t`; `history(tau)` returns `a~(tau)` for `tau` in `[0, t]`.
    pub fn evaluate(&self, history: impl Fn(T) -> Vec<T>, t: T, n_s: usize) -> Result<Vec<T>> {
        if n_s == 0 {
            return invalid("need at least one quadrature panel");
        }
        if !(t >= T::zero()) {
            return invalid("memory time must be non-negative");
        }
        let nc = self.a_cf.rows();
        if t == T::zero() {
            return Ok(vec![T::zero(); nc]);
        }
        let ds = t / T::from_usize_lossy(n_s);
        let pf = self.factors(ds)?;
        let g: Vec<Vec<T>> = (0..=n_s)
            .map(|m| self.source(&history(t - ds * T::from_usize_lossy(m))))
            .collect();
        // Horner over panels: sum_k E^k (W0 g_k + W1 g_{k+1})
        let mut acc = vec![T::zero(); g[0].len()];
        for k in (0..n_s).rev() {
            let carried = pf.e.matvec(&acc);
            let a0 = pf.w0.matvec(&g[k]);
            let a1 = pf.w1.matvec(&g[k + 1]);
            for i in 0..acc.len() {
                acc[i] = carried[i] + a0[i] + a1[i];
            }
        }
        Ok(self.a_cf.matvec(&acc).into_iter().map(|v| -v).collect())
    }
}

/// Free function form of [`LinearMemory::evaluate`].
pub fn exact_linear_memory<T: Real>(
    system: &LinearSystem<T>,
    history: impl Fn(T) -> Vec<T>,
    t: T,
    n_s: usize,
) -> Result<Vec<T>> {
    LinearMemory::new(system)?.evaluate(history, t, n_s)
}

/// Dense record of accepted steps with cubic Hermite interpolation in time.
#[derive(Clone, Debug, Default)]
pub struct History<T> {
    times: Vec<T>,
    values: Vec<Vec<T>>,
    rates: Vec<Option<Vec<T>>>,
}

impl<T: Real> History<T> {
    pub fn new() -> Self {
        Self {
            times: Vec::new(),
            values: Vec::new(),
            rates: Vec::new(),
        }
    }

    pub fn push(&mut self, t: T, value: Vec<T>) {
        self.times.push(t);
        self.values.push(value);
        self.rates.push(None);
    }

    /// Attach the time derivative to the most recent entry.
    pub fn set_last_rate(&mut self, rate: Vec<T>) {
        if let Some(r) = self.rates.last_mut() {
            *r = Some(rate);
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last_time(&self) -> Option<T> {
        self.times.last().copied()
    }

    fn hermite(&self, i: usize, t: T) -> Vec<T> {
        let (t0, t1) = (self.times[i], self.times[i + 1]);
        let dt = t1 - t0;
        let th = (t - t0) / dt;
        let (th2, th3) = (th * th, th * th * th);
        let two = T::lit(2.0);
        let three = T::lit(3.0);
        let h00 = two * th3 - three * th2 + T::one();
        let h10 = th3 - two * th2 + th;
        let h01 = three * th2 - two * th3;
        let h11 = th3 - th2;
        let zero = vec![T::zero(); self.values[i].len()];
        let d0 = self.rates[i].as_ref().unwrap_or(&zero);
        let d1 = self.rates[i + 1].as_ref().unwrap_or(&zero);
        (0..self.values[i].len())
            .map(|m| {
                h00 * self.values[i][m] + h10 * dt * d0[m] + h01 * self.values[i + 1][m] + h11 * dt * d1[m]
            })
            .collect()
    }

    /// Value at `t`; times past the last entry are extrapolated from the last interval.
    pub fn eval(&self, t: T) -> Vec<T> {
        let n = self.times.len();
        assert!(n > 0, "empty history");
        if n == 1 {
            let v = &self.values[0];
            return match &self.rates[0] {
                Some(r) => v
                    .iter()
                    .zip(r)
                    .map(|(x, d)| *x + (t - self.times[0]) * *d)
                    .collect(),
                None => v.clone(),
            };
        }
        let idx = self.times.partition_point(|&s| s <= t);
        let i = idx.saturating_sub(1).min(n - 2);
        self.hermite(i, t)
    }
}

/// Coarse trajectory of the memory-closed linear equation
/// `M~ da~/dt = -A_cc a~ + F_c + memory(t)` by RK4 with step `dt`.
#[derive(Clone, Debug)]
pub struct MemoryClosedRun<T> {
    pub times: Vec<T>,
    pub states: Vec<Vec<T>>,
}

pub fn solve_memory_closed<T: Real>(
    system: &LinearSystem<T>,
    a0: &[T],
    t_end: T,
    dt: T,
    n_s: usize,
) -> Result<MemoryClosedRun<T>> {
    if !(dt > T::zero()) || !(t_end >= T::zero()) {
        return invalid("need dt > 0 and t_end >= 0");
    }
    let nc = system.n_coarse;
    if a0.len() != nc {
        return invalid("initial coarse state has the wrong size");
    }
    let memory = LinearMemory::new(system)?;
    let c = system.coarse_indices();
    let a_cc = system.stiffness.select(&c, &c);
    let mass_c: Vec<T> = system.mass[..nc].to_vec();
    let load_c: Vec<T> = system.load[..nc].to_vec();
    let steps = (t_end / dt).round().to_usize().unwrap_or(0).max(1);
    let dt = t_end / T::from_usize_lossy(steps);

    let mut history = History::new();
    let rhs = |history: &History<T>, t: T, a: &[T]| -> Result<Vec<T>> {
        // Inside the current step the extrapolated history is blended linearly
        // onto the stage value so the integrand stays continuous at s = 0.
        let t_last = history.last_time().unwrap_or(t);
        let mismatch: Vec<T> = if t > t_last {
            let e = history.eval(t);
            a.iter().zip(&e).map(|(x, y)| *x - *y).collect()
        } else {
            vec![T::zero(); a.len()]
        };
        let mem = memory.evaluate(
            |tau| {
                if tau >= t {
                    a.to_vec()
                } else if tau > t_last {
                    let w = (tau - t_last) / (t - t_last);
                    history
                        .eval(tau)
                        .into_iter()
                        .zip(&mismatch)
                        .map(|(v, m)| v + w * *m)
                        .collect()
                } else {
                    history.eval(tau)
                }
            },
            t,
            n_s,
        )?;
        let aa = a_cc.matvec(a);
        Ok((0..nc)
            .map(|i| (load_c[i] - aa[i] + mem[i]) / mass_c[i])
            .collect())
    };
    let axpy = |a: &[T], s: T, k: &[T]| -> Vec<T> { a.iter().zip(k).map(|(x, y)| *x + s * *y).collect() };

    let mut a = a0.to_vec();
    let mut t = T::zero();
    history.push(t, a.clone());
    let mut run = MemoryClosedRun {
        times: vec![t],
        states: vec![a.clone()],
    };
    let half = T::lit(0.5);
    for n in 0..steps {
        let k1 = rhs(&history, t, &a)?;
        history.set_last_rate(k1.clone());
        let k2 = rhs(&history, t + half * dt, &axpy(&a, half * dt, &k1))?;
        let k3 = rhs(&history, t + half * dt, &axpy(&a, half * dt, &k2))?;
        let k4 = rhs(&history, t + dt, &axpy(&a, dt, &k3))?;
        for i in 0..nc {
            a[i] += dt / T::lit(6.0) * (k1[i] + T::lit(2.0) * k2[i] + T::lit(2.0) * k3[i] + k4[i]);
        }
        t = dt * T::from_usize_lossy(n + 1);
        crate::scalar::ensure_finite(&a, "memory-closed state").map_err(|_| crate::Error::BlowUp {
            last_valid_time: (t - dt).to_f64().unwrap_or(f64::NAN),
        })?;
        history.push(t, a.clone());
        run.times.push(t);
        run.states.push(a.clone());
    }
    Ok(run)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meshproj::{Discretization, Mesh1D};
    use crate::operators::{FluxKind, LinearOperator1D, Physics};

    #[test]
    fn s1_s2_single_term_and_dense_mass() {
        let split = ScaleSplit::legendre(1, 2).unwrap();
        let (s1, s2) = s1_s2(&split, 2.0f64).unwrap();
        assert!((s1 - 2.5).abs() < 1e-15 && (s2 - 2.5).abs() < 1e-15);
        // recompute through an explicit fine mass matrix solve
        let split = ScaleSplit::legendre(2, 7).unwrap();
        let h = 0.3;
        let fine: Vec<usize> = split.fine_modes().collect();
        let diag =
            crate::basis::mass_matrix(&crate::basis::LegendreBasis::new(7), split.fine_modes(), h / 2.0)
                .unwrap();
        let m = DenseMatrix::from_diagonal(&diag);
        let wr: Vec<f64> = fine.iter().map(|_| 1.0).collect();
        let wl: Vec<f64> = fine
            .iter()
            .map(|&j| if j % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        let x = m.lu().unwrap().solve(&wr);
        let y = m.lu().unwrap().solve(&wl);
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();
        let (s1, s2) = s1_s2(&split, h).unwrap();
        assert!((s1 - dot(&wr, &x)).abs() < 1e-12);
        assert!((s2 - dot(&wr, &y)).abs() < 1e-12);
        assert!((s1 - dot(&wl, &y)).abs() < 1e-12);
        assert!(s1_s2(&ScaleSplit::fourier(1, 2).unwrap(), 1.0).is_err());
    }

    #[test]
    fn tau_validation() {
        assert!(MemoryModelConfig::<f64>::tau_model(0.0).is_err());
        assert!(MemoryModelConfig::<f64>::finite_memory(-1.0).is_err());
    }

    fn advection(n_elem: usize, p: usize, n: usize, c: f64) -> SemiDiscreteProblem<f64> {
        let mesh = Mesh1D::new(0.0, 1.0, n_elem, true).unwrap();
        let disc = Discretization::new(mesh, ScaleSplit::legendre(p, n).unwrap()).unwrap();
        let op = LinearOperator1D::new(c, 0.0).unwrap();
        SemiDiscreteProblem::new(disc, Physics::Linear(op), Scheme::Dg(FluxKind::Central)).unwrap()
    }

    #[test]
    fn two_element_example() {
        let p = advection(2, 1, 4, 1.0);
        let mut a = p.coarse_zero();
        a.set(0, 0, 0.5);
        a.set(0, 1, 0.5);
        let k = kernel_s0_dg(&p, &a, FineSupport::Infinite).unwrap();
        let (s1, _) = s1_s2(&p.disc.split, 0.5).unwrap();
        // element 0 right end: S1 (c^2/2)(u_2^L - u_1^R) w^R with w^R = 1 for every mode
        let expected = -0.5 * s1;
        assert!((k.get(0, 0) - expected).abs() < 1e-12);
        assert!((k.get(0, 1) - expected).abs() < 1e-12);
    }

    #[test]
    fn linear_dg_kernel_matches_partitioned_matrix() {
        // A single periodic element makes the full system small enough to partition.
        let p = advection(1, 2, 6, -1.7);
        let sys = LinearSystem::assemble(&p).unwrap();
        let mut a = p.coarse_zero();
        a.data.copy_from_slice(&[0.4, -1.2, 0.9]);
        let k = kernel_s0_dg(&p, &a, FineSupport::Truncated).unwrap();
        let direct = sys.kernel_s0(&a.data);
        for (x, y) in k.data.iter().zip(&direct) {
            assert!((x - y).abs() < 1e-11, "{x} vs {y}");
        }
    }

    #[test]
    fn hermite_history_reproduces_cubics() {
        let f = |t: f64| vec![t * t * t - 2.0 * t, 1.0 + t];
        let df = |t: f64| vec![3.0 * t * t - 2.0, 1.0];
        let mut h = History::new();
        for i in 0..5 {
            let t = 0.25 * i as f64;
            h.push(t, f(t));
            h.set_last_rate(df(t));
        }
        for &t in &[0.1, 0.6, 0.99, 1.1] {
            let v = h.eval(t);
            let e = f(t);
            assert!((v[0] - e[0]).abs() < 1e-13 && (v[1] - e[1]).abs() < 1e-13);
        }
    }

    #[test]
    fn memory_vanishes_at_time_zero() {
        let mesh = Mesh1D::new(-1.0, 1.0, 1, false).unwrap();
        let disc = Discretization::new(mesh, ScaleSplit::legendre(2, 6).unwrap()).unwrap();
        let op = LinearOperator1D::new(1.0, 0.1).unwrap();
        let p = SemiDiscreteProblem::new(disc, Physics::Linear(op), Scheme::WeakDirichlet).unwrap();
        let sys = LinearSystem::assemble(&p).unwrap();
        let m = exact_linear_memory(&sys, |_| vec![1.0, 0.5, 0.2], 0.0, 8).unwrap();
        assert!(m.iter().all(|v| *v == 0.0));
        assert!(FineFineOperator::from_system(&sys).is_dissipative());
    }

    #[test]
    fn product_rule_is_exact_for_constant_history() {
        // With a~ frozen the memory is -A_cf A'^{-1} (I - e^{-tA'}) g exactly.
        let mesh = Mesh1D::new(-1.0, 1.0, 1, false).unwrap();
        let disc = Discretization::new(mesh, ScaleSplit::legendre(2, 6).unwrap()).unwrap();
        let op = LinearOperator1D::new(1.0, 0.1).unwrap();
        let p = SemiDiscreteProblem::new(disc, Physics::Linear(op), Scheme::WeakDirichlet)
            .unwrap()
            .with_forcing_fn(|x: f64| x.cos())
            .unwrap();
        let sys = LinearSystem::assemble(&p).unwrap();
        let a = vec![0.3, -0.2, 0.1];
        let t = 0.7;
        let m = exact_linear_memory(&sys, |_| a.clone(), t, 3).unwrap();
        let lm = LinearMemory::new(&sys).unwrap();
        let g = lm.source(&a);
        let (_, phi1, _) = phi_functions(&lm.fine.matrix.scaled(-t)).unwrap();
        let integral: Vec<f64> = phi1.matvec(&g).into_iter().map(|v| v * t).collect();
        let expected: Vec<f64> = lm.a_cf.matvec(&integral).into_iter().map(|v| -v).collect();
        for (x, y) in m.iter().zip(&expected) {
            assert!((x - y).abs() < 1e-11 * (1.0 + y.abs()));
        }
    }
}
