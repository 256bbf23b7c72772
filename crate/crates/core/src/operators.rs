//! Semi-discrete residuals, their linearizations, numerical fluxes and the
//! interface operators of the DG discretization.
//!
//! Every right-hand side in this module is the weak form that multiplies the
//! mass matrix: `M da/dt = rhs(a)`.

use crate::error::{invalid, Result};
use crate::linalg::DenseMatrix;
use crate::meshproj::{BasisKind, Discretization, GridFunction, ModalField};
use crate::scalar::{parity_sign, Real};

/// `L = c d/dx - nu d2/dx2`.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LinearOperator1D<T> {
    pub c: T,
    pub nu: T,
}

impl<T: Real> LinearOperator1D<T> {
    pub fn new(c: T, nu: T) -> Result<Self> {
        if !(nu >= T::zero()) || !c.is_finite() || !nu.is_finite() {
            return invalid(format!("need finite c and nu >= 0, got c={c}, nu={nu}"));
        }
        Ok(Self { c, nu })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Physics<T> {
    Linear(LinearOperator1D<T>),
    /// `u_t + (u^2/2)_x - nu u_xx = f`.
    Burgers {
        nu: T,
    },
}

impl<T: Real> Physics<T> {
    pub fn nu(&self) -> T {
        match *self {
            Physics::Linear(op) => op.nu,
            Physics::Burgers { nu } => nu,
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, Physics::Linear(_))
    }

    /// Inviscid flux `f(u)`.
    pub fn flux(&self, u: T) -> T {
        match *self {
            Physics::Linear(op) => op.c * u,
            Physics::Burgers { .. } => u * u / T::lit(2.0),
        }
    }

    /// `f'(u)`.
    pub fn flux_derivative(&self, u: T) -> T {
        match *self {
            Physics::Linear(op) => op.c,
            Physics::Burgers { .. } => u,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FluxKind {
    /// Average flux; for Burgers the entropy-conservative `(a^2 + ab + b^2)/6`.
    Central,
    /// Upstream trace; for Burgers the Roe flux.
    Upwind,
}

/// Two-point numerical flux `f*(a, b)` with `a` the left and `b` the right trace.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FluxFunction<T> {
    pub kind: FluxKind,
    pub physics: Physics<T>,
}

impl<T: Real> FluxFunction<T> {
    pub fn value(&self, a: T, b: T) -> T {
        let half = T::lit(0.5);
        match (self.physics, self.kind) {
            (Physics::Linear(op), FluxKind::Central) => op.c * (a + b) * half,
            (Physics::Linear(op), FluxKind::Upwind) => op.c * (a + b) * half - op.c.abs() * (b - a) * half,
            (Physics::Burgers { .. }, FluxKind::Central) => (a * a + a * b + b * b) / T::lit(6.0),
            (Physics::Burgers { .. }, FluxKind::Upwind) => {
                let s = (a + b) * half;
                (a * a + b * b) * half * half - s.abs() * (b - a) * half
            }
        }
    }

    /// Partial derivatives `(df*/da, df*/db)`: the flux linearized about `(a, b)`.
    pub fn partials(&self, a: T, b: T) -> (T, T) {
        let half = T::lit(0.5);
        match (self.physics, self.kind) {
            (Physics::Linear(op), FluxKind::Central) => (op.c * half, op.c * half),
            (Physics::Linear(op), FluxKind::Upwind) => {
                ((op.c + op.c.abs()) * half, (op.c - op.c.abs()) * half)
            }
            (Physics::Burgers { .. }, FluxKind::Central) => {
                let six = T::lit(6.0);
                ((a + a + b) / six, (a + b + b) / six)
            }
            (Physics::Burgers { .. }, FluxKind::Upwind) => {
                let s = (a + b) * half;
                let sg = if s > T::zero() {
                    T::one()
                } else if s < T::zero() {
                    -T::one()
                } else {
                    T::zero()
                };
                let d = (b - a) * half * half * sg;
                let m = s.abs() * half;
                (a * half - d + m, b * half - d - m)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryKind {
    Periodic,
    /// Homogeneous Dirichlet data, imposed weakly.
    Dirichlet,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme {
    /// Strong-form Galerkin on a single periodic Fourier element.
    Spectral,
    /// Modal DG on a Legendre mesh (inviscid only).
    Dg(FluxKind),
    /// One Legendre element with weak Dirichlet conditions: upwind inflow for
    /// advection and symmetric interior-penalty (Nitsche) terms for diffusion.
    WeakDirichlet,
}

/// Operator, discretization, forcing and boundary treatment defining `R`, `b` and `f`.
#[derive(Clone, Debug)]
pub struct SemiDiscreteProblem<T> {
    pub disc: Discretization<T>,
    pub physics: Physics<T>,
    pub scheme: Scheme,
    pub boundary: BoundaryKind,
    pub forcing: Option<GridFunction<T>>,
}

impl<T: Real> SemiDiscreteProblem<T> {
    pub fn new(disc: Discretization<T>, physics: Physics<T>, scheme: Scheme) -> Result<Self> {
        if !(physics.nu() >= T::zero()) {
            return invalid("viscosity must be non-negative");
        }
        let boundary = if disc.is_periodic() {
            BoundaryKind::Periodic
        } else {
            BoundaryKind::Dirichlet
        };
        match scheme {
            Scheme::Spectral => {
                if disc.split.kind != BasisKind::Fourier {
                    return invalid("spectral scheme needs a Fourier split");
                }
            }
            Scheme::Dg(_) => {
                if disc.split.kind != BasisKind::Legendre {
                    return invalid("DG scheme needs a Legendre split");
                }
                if physics.nu() != T::zero() {
                    return invalid("DG scheme is inviscid; set nu = 0");
                }
            }
            Scheme::WeakDirichlet => {
                if disc.split.kind != BasisKind::Legendre || disc.n_elem() != 1 {
                    return invalid("weak Dirichlet scheme needs one Legendre element");
                }
                if boundary != BoundaryKind::Dirichlet {
                    return invalid("weak Dirichlet scheme needs a non-periodic mesh");
                }
                if !physics.is_linear() {
                    return invalid("weak Dirichlet scheme supports linear physics only");
                }
            }
        }
        Ok(Self {
            disc,
            physics,
            scheme,
            boundary,
            forcing: None,
        })
    }

    pub fn with_forcing(mut self, forcing: GridFunction<T>) -> Result<Self> {
        if forcing.values.len() != self.disc.n_elem() * self.disc.nodes_per_elem() {
            return invalid("forcing does not match the quadrature grid");
        }
        crate::scalar::ensure_finite(&forcing.values, "forcing")?;
        self.forcing = Some(forcing);
        Ok(self)
    }

    pub fn with_forcing_fn(self, f: impl Fn(T) -> T) -> Result<Self> {
        let g = self.disc.sample(f);
        self.with_forcing(g)
    }

    pub fn forcing_grid(&self) -> GridFunction<T> {
        self.forcing.clone().unwrap_or_else(|| self.disc.zero_grid())
    }

    pub fn flux_function(&self) -> Result<FluxFunction<T>> {
        match self.scheme {
            Scheme::Dg(kind) => Ok(FluxFunction {
                kind,
                physics: self.physics,
            }),
            _ => invalid("numerical flux is defined only for the DG scheme"),
        }
    }

    pub fn n_elem(&self) -> usize {
        self.disc.n_elem()
    }

    pub fn coarse_zero(&self) -> ModalField<T> {
        ModalField::zeros(self.n_elem(), self.disc.split.coarse_modes())
    }

    pub fn full_zero(&self) -> ModalField<T> {
        ModalField::zeros(self.n_elem(), 0..self.disc.n_total())
    }

    /// L2 projection of `u0` onto the coarse space (fine part of the initial data is zero).
    pub fn project_initial(&self, u0: impl Fn(T) -> T) -> Result<ModalField<T>> {
        crate::meshproj::project_coarse(&self.disc, &self.disc.sample(u0))
    }

    /// Same problem with a different flux (DG only).
    pub fn with_flux(&self, kind: FluxKind) -> Result<Self> {
        if !matches!(self.scheme, Scheme::Dg(_)) {
            return invalid("flux can only be changed on a DG problem");
        }
        let mut p = self.clone();
        p.scheme = Scheme::Dg(kind);
        Ok(p)
    }

    /// Divide each modal entry by its mass: `M^{-1} v`.
    pub fn apply_inverse_mass(&self, v: &mut ModalField<T>) {
        for k in 0..v.n_elem {
            for j in v.modes.clone() {
                let m = self.disc.mass(j);
                v.set(k, j, v.get(k, j) / m);
            }
        }
    }
}

/// Pointwise `R(u) - f` on the quadrature grid for the field `a` (any mode block).
pub fn coarse_residual<T: Real>(
    problem: &SemiDiscreteProblem<T>,
    a: &ModalField<T>,
) -> Result<GridFunction<T>> {
    let disc = &problem.disc;
    let u = disc.reconstruct(a);
    let ux = disc.reconstruct_dx(a);
    let uxx = disc.reconstruct_dxx(a);
    let f = problem.forcing_grid();
    let nu = problem.physics.nu();
    let mut out = disc.zero_grid();
    for (i, o) in out.values.iter_mut().enumerate() {
        let adv = problem.physics.flux_derivative(u.values[i]) * ux.values[i];
        *o = adv - nu * uxx.values[i] - f.values[i];
    }
    Ok(out)
}

/// Directional derivative `R'(u)[v]` with `u` the field `a`.
pub fn linearized_action<T: Real>(
    problem: &SemiDiscreteProblem<T>,
    a: &ModalField<T>,
    v: &GridFunction<T>,
) -> Result<GridFunction<T>> {
    let disc = &problem.disc;
    let vx = disc.differentiate(v)?;
    let vxx = disc.differentiate2(v)?;
    let nu = problem.physics.nu();
    let out = match problem.physics {
        Physics::Linear(op) => vx.zip_with(&vxx, |d1, d2| op.c * d1 - nu * d2),
        Physics::Burgers { .. } => {
            let u = disc.reconstruct(a);
            let ux = disc.reconstruct_dx(a);
            let mut out = disc.zero_grid();
            for (i, o) in out.values.iter_mut().enumerate() {
                *o = ux.values[i] * v.values[i] + u.values[i] * vx.values[i] - nu * vxx.values[i];
            }
            out
        }
    };
    Ok(out)
}

/// `-(dw/dx, f(u))` per element and mode of `a`.
pub fn dg_volume_rhs<T: Real>(problem: &SemiDiscreteProblem<T>, a: &ModalField<T>) -> Result<ModalField<T>> {
    if !matches!(problem.scheme, Scheme::Dg(_)) {
        return invalid("DG volume term requested for a non-DG problem");
    }
    let disc = &problem.disc;
    let fu = disc.reconstruct(a).map(|u| problem.physics.flux(u));
    let mut out = ModalField::zeros(a.n_elem, a.modes.clone());
    for k in 0..a.n_elem {
        for j in a.modes.clone() {
            out.set(k, j, -disc.moment_dx(k, j, &fu));
        }
    }
    Ok(out)
}

/// Element traces, interface fluxes and flux defects of a DG field.
///
/// Interface `i` sits at the left end of element `i`; interface `n_elem` is the
/// right end of the last element (for periodic meshes it repeats interface 0).
#[derive(Clone, Debug, PartialEq)]
pub struct JumpData<T> {
    /// `u_k^L`.
    pub left: Vec<T>,
    /// `u_k^R`.
    pub right: Vec<T>,
    /// `f*` at every interface.
    pub flux: Vec<T>,
    /// `(df*/da, df*/db)` at every interface.
    pub flux_partials: Vec<(T, T)>,
    /// `f(u_k^R) - f*_{k+1/2}`.
    pub delta_right: Vec<T>,
    /// `f(u_k^L) - f*_{k-1/2}`.
    pub delta_left: Vec<T>,
}

impl<T: Real> JumpData<T> {
    /// Left and right states seen by interface `i` (zero ghost states on Dirichlet ends).
    pub fn interface_states(&self, i: usize, boundary: BoundaryKind) -> (T, T) {
        interface_values(i, &self.left, &self.right, boundary)
    }

    pub fn max_defect(&self) -> T {
        self.delta_right
            .iter()
            .chain(&self.delta_left)
            .fold(T::zero(), |m, v| m.max(v.abs()))
    }
}

/// Elements on the two sides of interface `i` of an `n`-element mesh; `None`
/// marks a Dirichlet boundary.
pub fn interface_neighbors(i: usize, n: usize, boundary: BoundaryKind) -> (Option<usize>, Option<usize>) {
    match boundary {
        BoundaryKind::Periodic => (Some((i + n - 1) % n), Some(i % n)),
        BoundaryKind::Dirichlet => (i.checked_sub(1), (i < n).then_some(i)),
    }
}

/// Right trace of the left neighbour and left trace of the right neighbour at
/// interface `i`, with zero outside a Dirichlet boundary.
pub fn interface_values<T: Real>(i: usize, left: &[T], right: &[T], boundary: BoundaryKind) -> (T, T) {
    let (l, r) = interface_neighbors(i, left.len(), boundary);
    (
        l.map_or(T::zero(), |k| right[k]),
        r.map_or(T::zero(), |k| left[k]),
    )
}

pub fn interface_jumps<T: Real>(
    problem: &SemiDiscreteProblem<T>,
    a: &ModalField<T>,
    flux: &FluxFunction<T>,
) -> Result<JumpData<T>> {
    if problem.disc.split.kind != BasisKind::Legendre {
        return invalid("interface jumps need a Legendre mesh");
    }
    let n = a.n_elem;
    let (left, right): (Vec<T>, Vec<T>) = (0..n).map(|k| problem.disc.traces(a, k)).unzip();
    let mut jumps = JumpData {
        left,
        right,
        flux: Vec::with_capacity(n + 1),
        flux_partials: Vec::with_capacity(n + 1),
        delta_right: vec![T::zero(); n],
        delta_left: vec![T::zero(); n],
    };
    for i in 0..=n {
        let (ua, ub) = jumps.interface_states(i, problem.boundary);
        jumps.flux.push(flux.value(ua, ub));
        jumps.flux_partials.push(flux.partials(ua, ub));
    }
    for k in 0..n {
        jumps.delta_right[k] = problem.physics.flux(jumps.right[k]) - jumps.flux[k + 1];
        jumps.delta_left[k] = problem.physics.flux(jumps.left[k]) - jumps.flux[k];
    }
    Ok(jumps)
}

/// Weak right-hand side `M da/dt = rhs(a)` for the modes carried by `a`.
pub fn weak_rhs<T: Real>(problem: &SemiDiscreteProblem<T>, a: &ModalField<T>) -> Result<ModalField<T>> {
    let disc = &problem.disc;
    let forcing = problem.forcing_grid();
    let mut out = ModalField::zeros(a.n_elem, a.modes.clone());
    match problem.scheme {
        Scheme::Spectral => {
            let fu = disc.reconstruct(a).map(|u| problem.physics.flux(u));
            let nu = problem.physics.nu();
            let uxx = disc.reconstruct_dxx(a);
            for j in a.modes.clone() {
                let v =
                    disc.moment_dx(0, j, &fu) + nu * disc.moment(0, j, &uxx) + disc.moment(0, j, &forcing);
                out.set(0, j, v);
            }
        }
        Scheme::Dg(_) => {
            let flux = problem.flux_function()?;
            let jumps = interface_jumps(problem, a, &flux)?;
            let vol = dg_volume_rhs(problem, a)?;
            for k in 0..a.n_elem {
                for j in a.modes.clone() {
                    let surface = jumps.flux[k + 1] - parity_sign::<T>(j) * jumps.flux[k];
                    out.set(k, j, -vol.get(k, j) - surface + disc.moment(k, j, &forcing));
                }
            }
        }
        Scheme::WeakDirichlet => {
            let sys = LinearSystem::weak_dirichlet(problem, a.modes.end)?;
            let full = a.extend(0..a.modes.end);
            let r = sys.rhs(&full.data);
            for j in a.modes.clone() {
                out.set(0, j, r[j]);
            }
        }
    }
    Ok(out)
}

/// Linear semi-discrete system `M da/dt = -A a + F` in the modes `0..n`,
/// with the first `n_coarse` modes resolved.
#[derive(Clone, Debug)]
pub struct LinearSystem<T> {
    pub mass: Vec<T>,
    pub stiffness: DenseMatrix<T>,
    pub load: Vec<T>,
    pub n_coarse: usize,
}

impl<T: Real> LinearSystem<T> {
    /// Assemble any linear problem on the full mode set `0..n_total`, element-major.
    pub fn assemble(problem: &SemiDiscreteProblem<T>) -> Result<Self> {
        if !problem.physics.is_linear() {
            return invalid("linear system assembly needs linear physics");
        }
        if problem.scheme == Scheme::WeakDirichlet {
            return Self::weak_dirichlet(problem, problem.disc.n_total());
        }
        if problem.n_elem() != 1 {
            return invalid("coarse/fine partitioned assembly is defined for single-element problems");
        }
        let n = problem.disc.n_total();
        let zero = problem.full_zero();
        let load = weak_rhs(problem, &zero)?.data;
        let mut stiffness = DenseMatrix::zeros(n, n);
        for j in 0..n {
            let mut e = zero.clone();
            e.data[j] = T::one();
            let col = weak_rhs(problem, &e)?.data;
            for i in 0..n {
                stiffness[(i, j)] = load[i] - col[i];
            }
        }
        Ok(Self {
            mass: (0..n).map(|j| problem.disc.mass(j)).collect(),
            stiffness,
            load,
            n_coarse: problem.disc.n_coarse(),
        })
    }

    /// Direct assembly of the single-element weak-Dirichlet bilinear form in modes `0..n`.
    pub fn weak_dirichlet(problem: &SemiDiscreteProblem<T>, n: usize) -> Result<Self> {
        let op = match problem.physics {
            Physics::Linear(op) => op,
            Physics::Burgers { .. } => return invalid("weak Dirichlet form needs linear physics"),
        };
        let disc = &problem.disc;
        if n > disc.n_grid_modes() {
            return invalid("requested modes exceed the quadrature resolution");
        }
        let h = disc.mesh.h();
        let jac = disc.jacobian();
        let degree = T::from_usize_lossy(disc.split.fine + 1);
        let sigma = T::lit(2.0) * op.nu * degree * degree / h;
        let w = disc.weights();
        let value_l = |j: usize| parity_sign::<T>(j);
        let slope = |j: usize| T::from_usize_lossy(j * (j + 1)) / (T::lit(2.0) * jac);
        let slope_l = |j: usize| -parity_sign::<T>(j) * slope(j);
        let mut a = DenseMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let (vi, di) = (disc.basis_value(i), disc.basis_d1(i));
                let dj = disc.basis_d1(j);
                let mut v = T::zero();
                for q in 0..w.len() {
                    v += w[q] * (op.c * vi[q] * dj[q] + op.nu * di[q] * dj[q]);
                }
                // inflow
                if op.c > T::zero() {
                    v += op.c * value_l(i) * value_l(j);
                } else if op.c < T::zero() {
                    v -= op.c;
                }
                // symmetric interior penalty with outward normals +1 at b, -1 at a
                v -= op.nu * (slope(j) - value_l(i) * slope_l(j));
                v -= op.nu * (slope(i) - slope_l(i) * value_l(j));
                v += sigma * (T::one() + value_l(i) * value_l(j));
                a[(i, j)] = v;
            }
        }
        let f = problem.forcing_grid();
        Ok(Self {
            mass: (0..n).map(|j| disc.mass(j)).collect(),
            stiffness: a,
            load: (0..n).map(|j| disc.moment(0, j, &f)).collect(),
            n_coarse: disc.n_coarse().min(n),
        })
    }

    pub fn dim(&self) -> usize {
        self.mass.len()
    }

    pub fn coarse_indices(&self) -> Vec<usize> {
        (0..self.n_coarse).collect()
    }

    pub fn fine_indices(&self) -> Vec<usize> {
        (self.n_coarse..self.dim()).collect()
    }

    /// `-A a + F`.
    pub fn rhs(&self, a: &[T]) -> Vec<T> {
        self.stiffness
            .matvec(a)
            .into_iter()
            .zip(&self.load)
            .map(|(ax, f)| *f - ax)
            .collect()
    }

    /// `B = M^{-1} A` and `g = M^{-1} F`, so that `da/dt = -B a + g`.
    pub fn scaled(&self) -> (DenseMatrix<T>, Vec<T>) {
        let n = self.dim();
        let b = DenseMatrix::from_fn(n, n, |i, j| self.stiffness[(i, j)] / self.mass[i]);
        let g = self.load.iter().zip(&self.mass).map(|(f, m)| *f / *m).collect();
        (b, g)
    }

    /// Exact solution `a(t)` of the full system from `a0`.
    pub fn exact_solution(&self, a0: &[T], t: T) -> Result<Vec<T>> {
        let (b, g) = self.scaled();
        let drift: Vec<T> = g.iter().zip(b.matvec(a0)).map(|(gi, bi)| *gi - bi).collect();
        let (_, phi1, _) = crate::linalg::phi_functions(&b.scaled(-t))?;
        Ok(a0
            .iter()
            .zip(phi1.matvec(&drift))
            .map(|(x, d)| *x + t * d)
            .collect())
    }

    /// Memory kernel at `s = 0` from the partitioned matrices:
    /// `A_cf M'^{-1} (A_fc a~ - F_f)`.
    pub fn kernel_s0(&self, coarse: &[T]) -> Vec<T> {
        let (c, f) = (self.coarse_indices(), self.fine_indices());
        let a_fc = self.stiffness.select(&f, &c);
        let a_cf = self.stiffness.select(&c, &f);
        let p: Vec<T> = a_fc
            .matvec(coarse)
            .into_iter()
            .zip(&f)
            .map(|(v, &j)| (v - self.load[j]) / self.mass[j])
            .collect();
        a_cf.matvec(&p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meshproj::{Mesh1D, ScaleSplit};

    fn dg_problem(
        n_elem: usize,
        p: usize,
        n: usize,
        physics: Physics<f64>,
        flux: FluxKind,
    ) -> SemiDiscreteProblem<f64> {
        let mesh = Mesh1D::new(0.0, 1.0, n_elem, true).unwrap();
        let disc = Discretization::new(mesh, ScaleSplit::legendre(p, n).unwrap()).unwrap();
        SemiDiscreteProblem::new(disc, physics, Scheme::Dg(flux)).unwrap()
    }

    fn linear(c: f64) -> Physics<f64> {
        Physics::Linear(LinearOperator1D::new(c, 0.0).unwrap())
    }

    #[test]
    fn flux_consistency_and_partials() {
        for physics in [linear(1.3), linear(-0.7), Physics::Burgers { nu: 0.0 }] {
            for kind in [FluxKind::Central, FluxKind::Upwind] {
                let f = FluxFunction { kind, physics };
                for &v in &[-1.5, -0.2, 0.0, 0.4, 2.0] {
                    assert!((f.value(v, v) - physics.flux(v)).abs() < 1e-15);
                }
                let (a, b, eps) = (0.3, -0.8, 1e-6);
                let (da, db) = f.partials(a, b);
                let fa = (f.value(a + eps, b) - f.value(a - eps, b)) / (2.0 * eps);
                let fb = (f.value(a, b + eps) - f.value(a, b - eps)) / (2.0 * eps);
                assert!((da - fa).abs() < 1e-8 && (db - fb).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn scheme_validation() {
        let mesh = Mesh1D::new(0.0, 1.0, 2, true).unwrap();
        let disc = Discretization::new(mesh, ScaleSplit::legendre(1, 3).unwrap()).unwrap();
        let visc = Physics::Linear(LinearOperator1D::new(1.0, 0.1).unwrap());
        assert!(SemiDiscreteProblem::new(disc.clone(), visc, Scheme::Dg(FluxKind::Central)).is_err());
        assert!(SemiDiscreteProblem::new(disc.clone(), linear(1.0), Scheme::Spectral).is_err());
        assert!(SemiDiscreteProblem::new(disc, linear(1.0), Scheme::WeakDirichlet).is_err());
        assert!(LinearOperator1D::new(1.0, -1e-3).is_err());
    }

    #[test]
    fn constant_state_has_zero_residual() {
        let p = dg_problem(3, 2, 4, linear(1.0), FluxKind::Central);
        let mut a = p.coarse_zero();
        for k in 0..3 {
            a.set(k, 0, 0.7);
        }
        assert!(coarse_residual(&p, &a).unwrap().max_abs() < 1e-14);
        assert!(weak_rhs(&p, &a).unwrap().max_abs() < 1e-14);
    }

    #[test]
    fn residual_of_p2_matches_finite_differences() {
        let mesh = Mesh1D::new(0.0, 1.0, 1, false).unwrap();
        let disc = Discretization::new(mesh, ScaleSplit::legendre(2, 3).unwrap()).unwrap();
        let p = SemiDiscreteProblem::new(disc, linear(1.0), Scheme::Dg(FluxKind::Upwind)).unwrap();
        let mut a = p.coarse_zero();
        a.set(0, 2, 1.0);
        let r = coarse_residual(&p, &a).unwrap();
        let u = |x: f64| {
            let xi = 2.0 * x - 1.0;
            0.5 * (3.0 * xi * xi - 1.0)
        };
        let eps = 1e-5;
        for (x, v) in p.disc.points().into_iter().zip(&r.values) {
            let fd = (u(x + eps) - u(x - eps)) / (2.0 * eps);
            assert!((v - fd).abs() < 1e-6);
        }
    }

    #[test]
    fn volume_term_vanishes_for_constants_and_by_parity() {
        let p = dg_problem(2, 1, 3, linear(2.0), FluxKind::Central);
        let mut a = p.coarse_zero();
        a.set(0, 0, 1.0);
        a.set(1, 1, 1.0);
        let v = dg_volume_rhs(&p, &a).unwrap();
        assert!(v.get(0, 0).abs() < 1e-14);
        assert!(v.get(1, 1).abs() < 1e-14);
    }

    #[test]
    fn volume_term_matches_dense_quadrature() {
        let p = dg_problem(3, 2, 3, Physics::Burgers { nu: 0.0 }, FluxKind::Central);
        let mut a = p.coarse_zero();
        let vals = [0.3, -1.1, 0.7, 0.2, 0.5, -0.4, 1.3, 0.05, -0.6];
        a.data.copy_from_slice(&vals);
        let v = dg_volume_rhs(&p, &a).unwrap();
        let rule = crate::basis::gauss_rule::<f64>(20).unwrap();
        let h = 1.0 / 3.0;
        for k in 0..3 {
            for j in 0..3 {
                let integrand = |xi: f64| {
                    let e = crate::basis::legendre_all(2, xi);
                    let u: f64 = (0..3).map(|m| a.get(k, m) * e.value[m]).sum();
                    e.d1[j] * (2.0 / h) * u * u / 2.0
                };
                let expected = -rule.integrate(integrand) * h / 2.0;
                assert!((v.get(k, j) - expected).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn central_jump_example() {
        let p = dg_problem(2, 1, 3, linear(1.0), FluxKind::Central);
        // u_1^R = 1, all other traces 0: a0 = a1 = 1/2 on element 0
        let mut a = p.coarse_zero();
        a.set(0, 0, 0.5);
        a.set(0, 1, 0.5);
        let j = interface_jumps(&p, &a, &p.flux_function().unwrap()).unwrap();
        assert!((j.delta_right[0] - 0.5).abs() < 1e-15);
        let up = p.with_flux(FluxKind::Upwind).unwrap();
        let j = interface_jumps(&up, &a, &up.flux_function().unwrap()).unwrap();
        assert!(j.delta_right[0].abs() < 1e-15);
    }

    #[test]
    fn central_dg_conserves_mass() {
        let p = dg_problem(5, 3, 4, Physics::Burgers { nu: 0.0 }, FluxKind::Central);
        let a = p
            .project_initial(|x| (2.0 * std::f64::consts::PI * x).sin() + 0.3)
            .unwrap();
        let r = weak_rhs(&p, &a).unwrap();
        let total: f64 = (0..5).map(|k| r.get(k, 0)).sum();
        assert!(total.abs() < 1e-13);
    }

    #[test]
    fn burgers_linearization_matches_central_difference() {
        let mesh = Mesh1D::new(0.0, 2.0 * std::f64::consts::PI, 1, true).unwrap();
        let disc = Discretization::new(mesh, ScaleSplit::fourier(2, 6).unwrap()).unwrap();
        let p = SemiDiscreteProblem::new(disc, Physics::Burgers { nu: 0.05 }, Scheme::Spectral).unwrap();
        let a = p.project_initial(f64::sin).unwrap();
        let v = p.disc.sample(f64::cos);
        let jv = linearized_action(&p, &a, &v).unwrap();
        let dv = p.project_initial(f64::cos).unwrap();
        let eps = 1e-6;
        let shift = |s: f64| {
            let mut b = a.clone();
            for (x, d) in b.data.iter_mut().zip(&dv.data) {
                *x += s * d;
            }
            coarse_residual(&p, &b).unwrap()
        };
        let fd = shift(eps).zip_with(&shift(-eps), |x, y| (x - y) / (2.0 * eps));
        assert!(fd.zip_with(&jv, |x, y| x - y).max_abs() < 1e-6);
    }

    #[test]
    fn weak_dirichlet_rhs_matches_assembled_system() {
        let mesh = Mesh1D::new(-1.0, 1.0, 1, false).unwrap();
        let disc = Discretization::new(mesh, ScaleSplit::legendre(2, 5).unwrap()).unwrap();
        let op = LinearOperator1D::new(1.0, 0.1).unwrap();
        let p = SemiDiscreteProblem::new(disc, Physics::Linear(op), Scheme::WeakDirichlet)
            .unwrap()
            .with_forcing_fn(|x| 1.0 + x)
            .unwrap();
        let sys = LinearSystem::assemble(&p).unwrap();
        // Diffusive part of the symmetric form is symmetric positive definite.
        assert!(sys.stiffness.symmetric_part_is_positive_definite());
        let mut a = p.full_zero();
        a.data
            .iter_mut()
            .enumerate()
            .for_each(|(i, v)| *v = 0.1 * i as f64 - 0.2);
        let r = weak_rhs(&p, &a).unwrap();
        let direct = sys.rhs(&a.data);
        for (x, y) in r.data.iter().zip(&direct) {
            assert!((x - y).abs() < 1e-13);
        }
    }
}
