//! Fine-scale Green's functions of steady advection-diffusion on `(0, 1)`
//! with homogeneous Dirichlet data, and the stabilized coarse solvers built on
//! them.
//!
//! The coarse space is continuous piecewise-linear hats on a uniform mesh.
//! Residuals `Lu~ - f` are taken element by element (the node deltas of
//! `-nu u~''` are left out of the stabilization terms, as in residual-based
//! stabilization practice).

use std::fmt;
use std::sync::Arc;

use crate::basis::{gauss_rule, legendre_all};
use crate::error::{invalid, Result};
use crate::linalg::{DenseMatrix, Lu};
use crate::meshproj::{fine_projector_kernel, Discretization, KernelTable, Mesh1D};
use crate::operators::LinearOperator1D;
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GreensKind {
    Exact,
    OrthogonalApprox,
}

impl GreensKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            GreensKind::Exact => "exact",
            GreensKind::OrthogonalApprox => "orthogonal-approx",
        }
    }
}

/// Tabulated kernel `g'(x, y)` (or `tau Pi'(x, y)`).
#[derive(Clone, Debug, PartialEq)]
pub struct GreensField<T> {
    pub table: KernelTable<T>,
    pub kind: GreensKind,
}

impl<T: Real> GreensField<T> {
    /// `max |g(x,y) - g(y,x)| / max |g|` on a square grid.
    pub fn asymmetry(&self) -> Result<T> {
        let t = &self.table;
        if t.x != t.y {
            return invalid("asymmetry needs identical x and y grids");
        }
        let n = t.x.len();
        let mut m = T::zero();
        for i in 0..n {
            for j in 0..n {
                m = m.max((t.get(i, j) - t.get(j, i)).abs());
            }
        }
        let scale = t.max_abs();
        Ok(if scale > T::zero() { m / scale } else { T::zero() })
    }

    /// Largest `|g|` with `|x - y| > distance`, relative to `max |g|`.
    pub fn off_diagonal_ratio(&self, distance: T) -> T {
        let t = &self.table;
        let mut m = T::zero();
        for (i, &x) in t.x.iter().enumerate() {
            for (j, &y) in t.y.iter().enumerate() {
                if (x - y).abs() > distance {
                    m = m.max(t.get(i, j).abs());
                }
            }
        }
        let scale = t.max_abs();
        if scale > T::zero() {
            m / scale
        } else {
            T::zero()
        }
    }
}

pub type Forcing<T> = Arc<dyn Fn(T) -> T + Send + Sync>;

/// `L u = c u' - nu u'' = f` on `(0, 1)`, `u(0) = u(1) = 0`, linear hats on `n_elem` elements.
#[derive(Clone)]
pub struct SteadyProblem<T> {
    pub op: LinearOperator1D<T>,
    pub n_elem: usize,
    pub forcing: Forcing<T>,
    /// Per-element polynomial degree of the space in which `Pi'` is represented.
    pub projector_degree: usize,
}

impl<T: Real> fmt::Debug for SteadyProblem<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SteadyProblem")
            .field("op", &self.op)
            .field("n_elem", &self.n_elem)
            .field("projector_degree", &self.projector_degree)
            .finish_non_exhaustive()
    }
}

impl<T: Real> SteadyProblem<T> {
    pub fn new(op: LinearOperator1D<T>, n_elem: usize, forcing: Forcing<T>) -> Result<Self> {
        if !(op.nu > T::zero()) {
            return invalid("steady problem needs nu > 0");
        }
        if n_elem < 2 {
            return invalid("steady problem needs at least two elements");
        }
        Ok(Self {
            op,
            n_elem,
            forcing,
            projector_degree: 7,
        })
    }

    pub fn with_projector_degree(mut self, degree: usize) -> Result<Self> {
        if degree < 1 {
            return invalid("projector degree must be at least 1 to contain the hats");
        }
        self.projector_degree = degree;
        Ok(self)
    }

    pub fn h(&self) -> T {
        T::one() / T::from_usize_lossy(self.n_elem)
    }

    pub fn n_coarse(&self) -> usize {
        self.n_elem - 1
    }

    pub fn mesh(&self) -> Mesh1D<T> {
        Mesh1D::new(T::zero(), T::one(), self.n_elem, false).expect("valid unit mesh")
    }

    /// Hat-space machinery with `nodes` Gauss points per element.
    pub fn hat_space(&self, nodes: usize) -> Result<HatSpace<T>> {
        HatSpace::new(self.n_elem, nodes)
    }

    /// Classical SUPG memory length `h / (2|c|)`.
    pub fn classical_tau(&self) -> T {
        self.h() / (T::lit(2.0) * self.op.c.abs())
    }
}

/// Continuous piecewise-linear hats on a uniform mesh of `(0, 1)` with a Gauss rule per element.
#[derive(Clone, Debug)]
pub struct HatSpace<T> {
    pub n_elem: usize,
    h: T,
    ref_nodes: Vec<T>,
    ref_weights: Vec<T>,
}

impl<T: Real> HatSpace<T> {
    pub fn new(n_elem: usize, nodes: usize) -> Result<Self> {
        if n_elem < 2 {
            return invalid("hat space needs at least two elements");
        }
        let rule = gauss_rule::<T>(nodes)?;
        Ok(Self {
            n_elem,
            h: T::one() / T::from_usize_lossy(n_elem),
            ref_nodes: rule.nodes,
            ref_weights: rule.weights,
        })
    }

    pub fn n_hats(&self) -> usize {
        self.n_elem - 1
    }

    pub fn nodes_per_elem(&self) -> usize {
        self.ref_nodes.len()
    }

    pub fn n_points(&self) -> usize {
        self.n_elem * self.nodes_per_elem()
    }

    pub fn vertex(&self, n: usize) -> T {
        if n == self.n_elem {
            T::one()
        } else {
            self.h * T::from_usize_lossy(n)
        }
    }

    /// Physical quadrature points, element-major.
    pub fn points(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.n_points());
        for e in 0..self.n_elem {
            for &xi in &self.ref_nodes {
                out.push(self.vertex(e) + (xi + T::one()) * self.h / T::lit(2.0));
            }
        }
        out
    }

    pub fn weights(&self) -> Vec<T> {
        let half = self.h / T::lit(2.0);
        (0..self.n_elem)
            .flat_map(|_| self.ref_weights.iter().map(move |&w| w * half))
            .collect()
    }

    /// Element of quadrature point `q`.
    pub fn element_of_point(&self, q: usize) -> usize {
        q / self.nodes_per_elem()
    }

    /// Hats supported on element `e` as `(global index, value at local xi, d/dx)`.
    fn local_hats(&self, e: usize, xi: T) -> Vec<(usize, T, T)> {
        let half = T::lit(0.5);
        let slope = T::one() / self.h;
        let mut out = Vec::with_capacity(2);
        if e >= 1 {
            out.push((e - 1, (T::one() - xi) * half, -slope));
        }
        if e + 1 < self.n_elem {
            out.push((e, (T::one() + xi) * half, slope));
        }
        out
    }

    /// Values and derivatives of every hat at physical point `x` (element-local).
    pub fn eval_hats(&self, x: T) -> (Vec<T>, Vec<T>) {
        let n = self.n_hats();
        let e = ((x / self.h).floor().to_usize().unwrap_or(0)).min(self.n_elem - 1);
        let xi = T::lit(2.0) * (x - self.vertex(e)) / self.h - T::one();
        let mut v = vec![T::zero(); n];
        let mut d = vec![T::zero(); n];
        for (i, val, der) in self.local_hats(e, xi) {
            v[i] = val;
            d[i] = der;
        }
        (v, d)
    }

    /// Hat values and derivatives at every quadrature point: `[hat][q]`.
    pub fn tables(&self) -> (Vec<Vec<T>>, Vec<Vec<T>>) {
        let n = self.n_hats();
        let nq = self.nodes_per_elem();
        let mut v = vec![vec![T::zero(); self.n_points()]; n];
        let mut d = vec![vec![T::zero(); self.n_points()]; n];
        for e in 0..self.n_elem {
            for (l, &xi) in self.ref_nodes.iter().enumerate() {
                for (i, val, der) in self.local_hats(e, xi) {
                    v[i][e * nq + l] = val;
                    d[i][e * nq + l] = der;
                }
            }
        }
        (v, d)
    }

    pub fn mass(&self) -> DenseMatrix<T> {
        let (v, _) = self.tables();
        let w = self.weights();
        let n = self.n_hats();
        DenseMatrix::from_fn(n, n, |i, j| (0..w.len()).map(|q| w[q] * v[i][q] * v[j][q]).sum())
    }

    /// `(phi_i, g)` for values `g` at the quadrature points.
    pub fn moments(&self, g: &[T]) -> Vec<T> {
        let (v, _) = self.tables();
        let w = self.weights();
        v.iter()
            .map(|vi| (0..w.len()).map(|q| w[q] * vi[q] * g[q]).sum())
            .collect()
    }

    /// `Pi' g = Pi_D g - Pi~ g` at the quadrature points, where `Pi_D` is the
    /// broken L2 projection onto degree-`degree` polynomials per element.
    pub fn fine_projection(&self, g: &[T], degree: usize) -> Result<Vec<T>> {
        if g.len() != self.n_points() {
            return invalid("values do not match the quadrature grid");
        }
        let nq = self.nodes_per_elem();
        if nq < degree + 1 {
            return invalid("quadrature too coarse for the projector degree");
        }
        let mut out = vec![T::zero(); g.len()];
        let tables: Vec<_> = self
            .ref_nodes
            .iter()
            .map(|&xi| legendre_all(degree, xi))
            .collect();
        for e in 0..self.n_elem {
            for j in 0..=degree {
                let norm = T::lit(2.0) / T::from_usize_lossy(2 * j + 1);
                let c: T = (0..nq)
                    .map(|l| self.ref_weights[l] * tables[l].value[j] * g[e * nq + l])
                    .sum::<T>()
                    / norm;
                for l in 0..nq {
                    out[e * nq + l] += c * tables[l].value[j];
                }
            }
        }
        let coeffs = self.mass().lu()?.solve(&self.moments(g));
        let (v, _) = self.tables();
        for (i, ci) in coeffs.iter().enumerate() {
            for q in 0..out.len() {
                out[q] -= *ci * v[i][q];
            }
        }
        Ok(out)
    }

    /// Pointwise kernel of [`fine_projection`](Self::fine_projection):
    /// broken Legendre reproducing kernel minus `hat(x)^T M~^{-1} hat(y)`.
    pub fn fine_projector_kernel(&self, x: &[T], y: &[T], degree: usize) -> Result<KernelTable<T>> {
        let minv = self.mass().inverse()?;
        let h = self.h;
        let locate = |p: T| -> (usize, T) {
            let e = ((p / h).floor().to_usize().unwrap_or(0)).min(self.n_elem - 1);
            (e, T::lit(2.0) * (p - self.vertex(e)) / h - T::one())
        };
        let ex: Vec<_> = x
            .iter()
            .map(|&p| {
                let (e, xi) = locate(p);
                (e, legendre_all(degree, xi).value, self.eval_hats(p).0)
            })
            .collect();
        let ey: Vec<_> = y
            .iter()
            .map(|&p| {
                let (e, xi) = locate(p);
                (
                    e,
                    legendre_all(degree, xi).value,
                    minv.matvec(&self.eval_hats(p).0),
                )
            })
            .collect();
        let mut values = Vec::with_capacity(x.len() * y.len());
        for (e1, px, hx) in &ex {
            for (e2, py, mhy) in &ey {
                let mut v = T::zero();
                if e1 == e2 {
                    for j in 0..=degree {
                        let m = h / T::from_usize_lossy(2 * j + 1);
                        v += px[j] * py[j] / m;
                    }
                }
                let coarse: T = hx.iter().zip(mhy).map(|(a, b)| *a * *b).sum();
                values.push(v - coarse);
            }
        }
        Ok(KernelTable {
            x: x.to_vec(),
            y: y.to_vec(),
            values,
        })
    }
}

/// Statically condensed fine space `w' = b - Pi~ b` over the bubbles `b` of
/// degree `2..=N_f`, with `K^ = a(w'_i, w'_j)` factorized.
#[derive(Clone, Debug)]
pub struct FineGreensOperator<T> {
    pub op: LinearOperator1D<T>,
    pub n_elem: usize,
    pub fine_degree: usize,
    hats: HatSpace<T>,
    /// `Pi~ b_j = sum_k coupling[k][j] phi_k`.
    coupling: DenseMatrix<T>,
    k_hat: DenseMatrix<T>,
    lu: Lu<T>,
}

impl<T: Real> FineGreensOperator<T> {
    pub fn new(problem: &SteadyProblem<T>, fine_degree: usize) -> Result<Self> {
        if fine_degree < 2 {
            return invalid("fine truncation must be at least 2 (first bubble)");
        }
        let hats = problem.hat_space(fine_degree + 2)?;
        let n_e = problem.n_elem;
        let per = fine_degree - 1;
        let nb = n_e * per;
        let nh = hats.n_hats();
        let op = problem.op;
        let w = hats.weights();
        let nq = hats.nodes_per_elem();
        let h = hats.h;
        let (hv, hd) = hats.tables();
        let bubbles: Vec<_> = hats
            .ref_nodes
            .iter()
            .map(|&xi| bubble_values(fine_degree, xi, h))
            .collect();
        let a_form = |wv: T, wd: T, _vv: T, vd: T| wv * op.c * vd + op.nu * wd * vd;
        let mut abb = DenseMatrix::zeros(nb, nb);
        let mut abh = DenseMatrix::zeros(nb, nh);
        let mut ahb = DenseMatrix::zeros(nh, nb);
        let mut mhb = DenseMatrix::zeros(nh, nb);
        for e in 0..n_e {
            for l in 0..nq {
                let q = e * nq + l;
                let (bv, bd) = &bubbles[l];
                for i in 0..per {
                    let gi = e * per + i;
                    for j in 0..per {
                        abb[(gi, e * per + j)] += w[q] * a_form(bv[i], bd[i], bv[j], bd[j]);
                    }
                    for k in 0..nh {
                        if hv[k][q] == T::zero() && hd[k][q] == T::zero() {
                            continue;
                        }
                        abh[(gi, k)] += w[q] * a_form(bv[i], bd[i], hv[k][q], hd[k][q]);
                        ahb[(k, gi)] += w[q] * a_form(hv[k][q], hd[k][q], bv[i], bd[i]);
                        mhb[(k, gi)] += w[q] * hv[k][q] * bv[i];
                    }
                }
            }
        }
        let ahh = DenseMatrix::from_fn(nh, nh, |i, j| {
            (0..w.len())
                .map(|q| w[q] * a_form(hv[i][q], hd[i][q], hv[j][q], hd[j][q]))
                .sum()
        });
        let coupling = hats.mass().lu()?.inverse()?.matmul(&mhb);
        let ct = coupling.transpose();
        let k_hat = abb
            .sub(&abh.matmul(&coupling))
            .sub(&ct.matmul(&ahb))
            .add(&ct.matmul(&ahh).matmul(&coupling));
        let lu = k_hat.lu()?;
        Ok(Self {
            op,
            n_elem: n_e,
            fine_degree,
            hats,
            coupling,
            k_hat,
            lu,
        })
    }

    pub fn dim(&self) -> usize {
        self.k_hat.rows()
    }

    pub fn k_hat(&self) -> &DenseMatrix<T> {
        &self.k_hat
    }

    pub fn condition(&self) -> Result<T> {
        self.k_hat.condition_1()
    }

    /// Values and x-derivatives of all fine basis functions at `x`.
    pub fn eval_fine(&self, x: T) -> (Vec<T>, Vec<T>) {
        let per = self.fine_degree - 1;
        let h = self.hats.h;
        let e = ((x / h).floor().to_usize().unwrap_or(0)).min(self.n_elem - 1);
        let xi = T::lit(2.0) * (x - self.hats.vertex(e)) / h - T::one();
        let (bv, bd) = bubble_values(self.fine_degree, xi, h);
        let (hv, hd) = self.hats.eval_hats(x);
        let mut v = vec![T::zero(); self.dim()];
        let mut d = vec![T::zero(); self.dim()];
        for i in 0..per {
            v[e * per + i] = bv[i];
            d[e * per + i] = bd[i];
        }
        for k in 0..hv.len() {
            if hv[k] == T::zero() && hd[k] == T::zero() {
                continue;
            }
            for j in 0..self.dim() {
                v[j] -= self.coupling[(k, j)] * hv[k];
                d[j] -= self.coupling[(k, j)] * hd[k];
            }
        }
        (v, d)
    }

    /// `g'(x, y) = w'(y)^T K^{-1} w'(x)`.
    pub fn tabulate(&self, x: &[T], y: &[T]) -> KernelTable<T> {
        let z: Vec<Vec<T>> = x.iter().map(|&p| self.lu.solve(&self.eval_fine(p).0)).collect();
        let wy: Vec<Vec<T>> = y.iter().map(|&p| self.eval_fine(p).0).collect();
        let mut values = Vec::with_capacity(x.len() * y.len());
        for zx in &z {
            for wyv in &wy {
                values.push(zx.iter().zip(wyv).map(|(a, b)| *a * *b).sum());
            }
        }
        KernelTable {
            x: x.to_vec(),
            y: y.to_vec(),
            values,
        }
    }

    /// Fine coefficients `u^ = -K^{-1} (a(w', u~) - (w', f))` for a hat field with
    /// interior nodal values `nodal`.
    pub fn condensed_fine_solution(&self, nodal: &[T], f: &dyn Fn(T) -> T) -> Result<Vec<T>> {
        if nodal.len() != self.hats.n_hats() {
            return invalid("nodal vector does not match the hat space");
        }
        let pts = self.hats.points();
        let w = self.hats.weights();
        let mut r = vec![T::zero(); self.dim()];
        for (q, &x) in pts.iter().enumerate() {
            let (_, hd) = self.hats.eval_hats(x);
            let ux: T = hd.iter().zip(nodal).map(|(a, b)| *a * *b).sum();
            let (fv, fd) = self.eval_fine(x);
            for i in 0..self.dim() {
                r[i] += w[q] * (fv[i] * (self.op.c * ux - f(x)) + self.op.nu * fd[i] * ux);
            }
        }
        Ok(self.lu.solve(&r).into_iter().map(|v| -v).collect())
    }
}

/// Bubbles `P_j - P_{j-2}` for `j = 2..=n` at `xi`, with physical derivatives.
fn bubble_values<T: Real>(n: usize, xi: T, h: T) -> (Vec<T>, Vec<T>) {
    let e = legendre_all(n, xi);
    let scale = T::lit(2.0) / h;
    let v = (2..=n).map(|j| e.value[j] - e.value[j - 2]).collect();
    let d = (2..=n).map(|j| (e.d1[j] - e.d1[j - 2]) * scale).collect();
    (v, d)
}

/// Discrete fine-scale Green's function at truncation `fine_degree`, plus the
/// 1-norm condition number of `K^`.
pub fn exact_fine_greens<T: Real>(
    problem: &SteadyProblem<T>,
    fine_degree: usize,
    x_grid: &[T],
    y_grid: &[T],
) -> Result<(GreensField<T>, T)> {
    let g = FineGreensOperator::new(problem, fine_degree)?;
    let cond = g.condition()?;
    if !cond.is_finite() || cond > T::lit(1e14) {
        return Err(crate::Error::Singular {
            context: "fine-scale stiffness".into(),
            condition: cond.to_f64().unwrap_or(f64::INFINITY),
        });
    }
    Ok((
        GreensField {
            table: g.tabulate(x_grid, y_grid),
            kind: GreensKind::Exact,
        },
        cond,
    ))
}

/// `tau Pi'(x, y)` for a hierarchical Legendre split.
pub fn orthogonal_greens<T: Real>(
    disc: &Discretization<T>,
    tau: T,
    x_grid: &[T],
    y_grid: &[T],
) -> Result<GreensField<T>> {
    if !(tau > T::zero()) {
        return invalid("tau must be positive");
    }
    Ok(GreensField {
        table: fine_projector_kernel(disc, x_grid, y_grid)?.scaled(tau),
        kind: GreensKind::OrthogonalApprox,
    })
}

/// `tau Pi'(x, y)` for the hat split of a steady problem.
pub fn orthogonal_greens_hat<T: Real>(
    problem: &SteadyProblem<T>,
    tau: T,
    x_grid: &[T],
    y_grid: &[T],
) -> Result<GreensField<T>> {
    if !(tau > T::zero()) {
        return invalid("tau must be positive");
    }
    let hats = problem.hat_space(problem.projector_degree + 2)?;
    Ok(GreensField {
        table: hats
            .fine_projector_kernel(x_grid, y_grid, problem.projector_degree)?
            .scaled(tau),
        kind: GreensKind::OrthogonalApprox,
    })
}

/// Kernel standing in for `g'` in the adjoint-stabilized coarse equation.
pub enum Stabilization<'a, T> {
    None,
    /// `g'(x, y) = tau delta(x - y)`.
    Local(T),
    /// Arbitrary pointwise kernel `g'(x, y)`.
    Kernel(&'a dyn Fn(T, T) -> T),
}

/// Assembled coarse system and its solution (interior nodal values).
#[derive(Clone, Debug)]
pub struct SteadySolution<T> {
    pub matrix: DenseMatrix<T>,
    pub rhs: Vec<T>,
    pub nodal: Vec<T>,
}

impl<T: Real> SteadySolution<T> {
    /// Nodal values including the two boundary zeros.
    pub fn all_nodes(&self) -> Vec<T> {
        let mut v = vec![T::zero()];
        v.extend_from_slice(&self.nodal);
        v.push(T::zero());
        v
    }
}

struct Assembly<T> {
    hats: HatSpace<T>,
    points: Vec<T>,
    weights: Vec<T>,
    /// `[hat][q]` of `w_q (L phi_i)(x_q)` and `w_q (L* phi_i)(x_q)`.
    l_w: Vec<Vec<T>>,
    ladj_w: Vec<Vec<T>>,
    f: Vec<T>,
}

impl<T: Real> Assembly<T> {
    fn new(problem: &SteadyProblem<T>) -> Result<Self> {
        let hats = problem.hat_space(problem.projector_degree + 2)?;
        let points = hats.points();
        let weights = hats.weights();
        let (_, hd) = hats.tables();
        let c = problem.op.c;
        // second derivatives of hats vanish inside elements
        let l_w = hd
            .iter()
            .map(|d| d.iter().zip(&weights).map(|(v, w)| *w * c * *v).collect())
            .collect();
        let ladj_w = hd
            .iter()
            .map(|d| d.iter().zip(&weights).map(|(v, w)| -*w * c * *v).collect())
            .collect();
        let f = points.iter().map(|&x| (problem.forcing)(x)).collect();
        Ok(Self {
            hats,
            points,
            weights,
            l_w,
            ladj_w,
            f,
        })
    }

    fn galerkin(&self, op: LinearOperator1D<T>) -> (DenseMatrix<T>, Vec<T>) {
        let (hv, hd) = self.hats.tables();
        let n = self.hats.n_hats();
        let w = &self.weights;
        let a = DenseMatrix::from_fn(n, n, |i, j| {
            (0..w.len())
                .map(|q| w[q] * (hv[i][q] * op.c * hd[j][q] + op.nu * hd[i][q] * hd[j][q]))
                .sum()
        });
        let b = self.hats.moments(&self.f);
        (a, b)
    }
}

/// `(w~, Lu~) - int int (L* w~)(y) g'(x, y) (Lu~ - f)(x) = (w~, f)`.
pub fn steady_adjoint_stabilized_solve<T: Real>(
    problem: &SteadyProblem<T>,
    stabilization: &Stabilization<'_, T>,
) -> Result<SteadySolution<T>> {
    let asm = Assembly::new(problem)?;
    let (mut a, mut b) = asm.galerkin(problem.op);
    let n = asm.hats.n_hats();
    let nq_total = asm.points.len();
    match stabilization {
        Stabilization::None => {}
        Stabilization::Local(tau) => {
            let tau = *tau;
            if tau < T::zero() {
                return invalid("tau must be non-negative");
            }
            for i in 0..n {
                for j in 0..n {
                    let s: T = (0..nq_total)
                        .map(|q| asm.ladj_w[i][q] * asm.l_w[j][q] / asm.weights[q])
                        .sum();
                    a[(i, j)] -= tau * s;
                }
                let s: T = (0..nq_total).map(|q| asm.ladj_w[i][q] * asm.f[q]).sum();
                b[i] -= tau * s;
            }
        }
        Stabilization::Kernel(g) => {
            // G[qx][qy]
            let gt: Vec<Vec<T>> = asm
                .points
                .iter()
                .map(|&x| asm.points.iter().map(|&y| g(x, y)).collect())
                .collect();
            for i in 0..n {
                // u_i(qx) = sum_qy G[qx][qy] w_qy (L* phi_i)(y)
                let ui: Vec<T> = gt
                    .iter()
                    .map(|row| row.iter().zip(&asm.ladj_w[i]).map(|(g, l)| *g * *l).sum())
                    .collect();
                for j in 0..n {
                    let s: T = ui.iter().zip(&asm.l_w[j]).map(|(u, l)| *u * *l).sum();
                    a[(i, j)] -= s;
                }
                let s: T = (0..nq_total).map(|q| ui[q] * asm.weights[q] * asm.f[q]).sum();
                b[i] -= s;
            }
        }
    }
    let nodal = a.lu()?.solve(&b);
    Ok(SteadySolution {
        matrix: a,
        rhs: b,
        nodal,
    })
}

/// `(w~, Lu~) - tau (L* w~, Pi'(Lu~ - f)) = (w~, f)` with `Pi'` applied by projection.
pub fn steady_tau_model_solve<T: Real>(problem: &SteadyProblem<T>, tau: T) -> Result<SteadySolution<T>> {
    if !(tau >= T::zero()) {
        return invalid("tau must be non-negative");
    }
    let asm = Assembly::new(problem)?;
    let (mut a, mut b) = asm.galerkin(problem.op);
    let n = asm.hats.n_hats();
    let deg = problem.projector_degree;
    let f_fine = asm.hats.fine_projection(&asm.f, deg)?;
    for j in 0..n {
        let lphi: Vec<T> = asm.l_w[j]
            .iter()
            .zip(&asm.weights)
            .map(|(l, w)| *l / *w)
            .collect();
        let p = asm.hats.fine_projection(&lphi, deg)?;
        for i in 0..n {
            let s: T = asm.ladj_w[i].iter().zip(&p).map(|(l, v)| *l * *v).sum();
            a[(i, j)] -= tau * s;
        }
    }
    for i in 0..n {
        let s: T = asm.ladj_w[i].iter().zip(&f_fine).map(|(l, v)| *l * *v).sum();
        b[i] -= tau * s;
    }
    let nodal = a.lu()?.solve(&b);
    Ok(SteadySolution {
        matrix: a,
        rhs: b,
        nodal,
    })
}

/// Maximum nodal value in excess of `level` (the overshoot of a monotone profile).
pub fn nodal_overshoot<T: Real>(solution: &SteadySolution<T>, level: T) -> T {
    solution.nodal.iter().fold(T::neg_infinity(), |m, &v| m.max(v)) - level
}

#[cfg(test)]
mod tests {
    use super::*;

    fn problem(c: f64, nu: f64, n_elem: usize) -> SteadyProblem<f64> {
        SteadyProblem::new(LinearOperator1D::new(c, nu).unwrap(), n_elem, Arc::new(|_| 1.0)).unwrap()
    }

    #[test]
    fn hat_projection_reproduces_hats_and_annihilates_them() {
        let p = problem(1.0, 0.01, 4);
        let hats = p.hat_space(9).unwrap();
        let (v, _) = hats.tables();
        let fine = hats.fine_projection(&v[1], 7).unwrap();
        assert!(fine.iter().all(|x| x.abs() < 1e-13));
        let g: Vec<f64> = hats.points().iter().map(|x| (3.0 * x).exp()).collect();
        let pg = hats.fine_projection(&g, 7).unwrap();
        let m = hats.moments(&pg);
        assert!(m.iter().all(|x| x.abs() < 1e-13));
    }

    #[test]
    fn fine_basis_is_orthogonal_to_hats() {
        let p = problem(1.0, 0.05, 4);
        let g = FineGreensOperator::new(&p, 5).unwrap();
        let hats = p.hat_space(8).unwrap();
        let pts = hats.points();
        let w = hats.weights();
        let (hv, _) = hats.tables();
        for k in 0..hats.n_hats() {
            let mut dots = vec![0.0; g.dim()];
            for (q, &x) in pts.iter().enumerate() {
                let (fv, _) = g.eval_fine(x);
                for i in 0..g.dim() {
                    dots[i] += w[q] * hv[k][q] * fv[i];
                }
            }
            assert!(dots.iter().all(|d| d.abs() < 1e-13));
        }
    }

    #[test]
    fn pure_diffusion_greens_is_symmetric() {
        let p = problem(0.0, 0.1, 4);
        let xs = crate::meshproj::element_grid(&p.mesh(), 3);
        let (g, cond) = exact_fine_greens(&p, 4, &xs, &xs).unwrap();
        assert!(g.asymmetry().unwrap() < 1e-9);
        assert!(cond > 1.0);
    }

    #[test]
    fn zero_tau_gives_galerkin() {
        let p = problem(1.0, 0.01, 8);
        let g = steady_adjoint_stabilized_solve(&p, &Stabilization::None).unwrap();
        let t = steady_tau_model_solve(&p, 0.0).unwrap();
        let l = steady_adjoint_stabilized_solve(&p, &Stabilization::Local(0.0)).unwrap();
        assert!(g.matrix.max_abs_diff(&t.matrix) < 1e-14);
        assert!(g.matrix.max_abs_diff(&l.matrix) < 1e-14);
    }
}
