//! Meshes, hierarchical coarse/fine splits, and the L2 projectors onto the
//! coarse space and its orthogonal complement.

use std::ops::Range;

use crate::basis::{gauss_rule, Basis, FourierBasis, LegendreBasis, PointEval, QuadratureRule};
use crate::error::{invalid, Result};
use crate::scalar::{ensure_finite, parity_sign, Real};

/// Uniform 1D mesh of `n_elem` elements on `[a, b]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Mesh1D<T> {
    pub a: T,
    pub b: T,
    pub n_elem: usize,
    pub periodic: bool,
}

impl<T: Real> Mesh1D<T> {
    pub fn new(a: T, b: T, n_elem: usize, periodic: bool) -> Result<Self> {
        if n_elem == 0 {
            return invalid("mesh needs at least one element");
        }
        if !(a < b) || !a.is_finite() || !b.is_finite() {
            return invalid(format!("mesh domain [{a}, {b}] is not a finite interval"));
        }
        Ok(Self {
            a,
            b,
            n_elem,
            periodic,
        })
    }

    pub fn h(&self) -> T {
        (self.b - self.a) / T::from_usize_lossy(self.n_elem)
    }

    pub fn length(&self) -> T {
        self.b - self.a
    }

    /// Element boundaries `x_0 < x_1 < ... < x_n`, with `x_n = b` exactly.
    pub fn vertices(&self) -> Vec<T> {
        let mut v: Vec<T> = (0..self.n_elem)
            .map(|k| self.a + self.h() * T::from_usize_lossy(k))
            .collect();
        v.push(self.b);
        v
    }

    pub fn element_bounds(&self, k: usize) -> (T, T) {
        let left = self.a + self.h() * T::from_usize_lossy(k);
        let right = if k + 1 == self.n_elem {
            self.b
        } else {
            self.a + self.h() * T::from_usize_lossy(k + 1)
        };
        (left, right)
    }

    /// Element containing `x`; interior vertices belong to the element on their right.
    pub fn element_of(&self, x: T) -> Option<usize> {
        if x < self.a || x > self.b {
            return None;
        }
        let k = ((x - self.a) / self.h()).floor().to_usize().unwrap_or(0);
        Some(k.min(self.n_elem - 1))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisKind {
    /// Legendre polynomials on every element.
    Legendre,
    /// One global real Fourier basis on a periodic domain.
    Fourier,
}

/// Hierarchical split of a modal basis into coarse and fine index sets.
///
/// For Legendre, `coarse` is the coarse degree and `fine` the truncation degree;
/// coarse modes are `P_0..=P_coarse`, fine modes `P_{coarse+1}..=P_fine`.
/// For Fourier the two numbers are wavenumber cutoffs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ScaleSplit {
    pub kind: BasisKind,
    pub coarse: usize,
    pub fine: usize,
}

impl ScaleSplit {
    pub fn legendre(coarse_degree: usize, fine_degree: usize) -> Result<Self> {
        Self::new(BasisKind::Legendre, coarse_degree, fine_degree)
    }

    pub fn fourier(coarse_wavenumber: usize, fine_wavenumber: usize) -> Result<Self> {
        Self::new(BasisKind::Fourier, coarse_wavenumber, fine_wavenumber)
    }

    pub fn new(kind: BasisKind, coarse: usize, fine: usize) -> Result<Self> {
        if fine <= coarse {
            return invalid(format!(
                "fine truncation {fine} must exceed coarse cutoff {coarse}"
            ));
        }
        Ok(Self { kind, coarse, fine })
    }

    fn count(&self, cutoff: usize) -> usize {
        match self.kind {
            BasisKind::Legendre => cutoff + 1,
            BasisKind::Fourier => FourierBasis::count_up_to(cutoff),
        }
    }

    /// Coarse modes per element.
    pub fn n_coarse(&self) -> usize {
        self.count(self.coarse)
    }

    /// Coarse plus fine modes per element.
    pub fn n_total(&self) -> usize {
        self.count(self.fine)
    }

    pub fn coarse_modes(&self) -> Range<usize> {
        0..self.n_coarse()
    }

    pub fn fine_modes(&self) -> Range<usize> {
        self.n_coarse()..self.n_total()
    }

    /// Same basis with everything up to the fine truncation treated as resolved.
    pub fn resolved(&self) -> Self {
        Self {
            kind: self.kind,
            coarse: self.fine,
            fine: self.fine + 1,
        }
    }
}

/// Values on every quadrature node of the mesh, element-major.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction<T> {
    pub nodes_per_elem: usize,
    pub values: Vec<T>,
}

impl<T: Real> GridFunction<T> {
    pub fn zeros(n_elem: usize, nodes_per_elem: usize) -> Self {
        Self {
            nodes_per_elem,
            values: vec![T::zero(); n_elem * nodes_per_elem],
        }
    }

    pub fn n_elem(&self) -> usize {
        self.values.len() / self.nodes_per_elem.max(1)
    }

    pub fn element(&self, k: usize) -> &[T] {
        &self.values[k * self.nodes_per_elem..(k + 1) * self.nodes_per_elem]
    }

    pub fn element_mut(&mut self, k: usize) -> &mut [T] {
        let n = self.nodes_per_elem;
        &mut self.values[k * n..(k + 1) * n]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            nodes_per_elem: self.nodes_per_elem,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        assert_eq!(self.values.len(), other.values.len(), "grid size mismatch");
        Self {
            nodes_per_elem: self.nodes_per_elem,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn max_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }
}

/// Modal coefficients for a contiguous block of mode indices on every element,
/// stored element-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ModalField<T> {
    pub n_elem: usize,
    pub modes: Range<usize>,
    pub data: Vec<T>,
}

/// Coarse coefficients `a~` (modes `0..n_coarse`).
pub type CoarseState<T> = ModalField<T>;
/// Fine coefficients `a'` (modes `n_coarse..n_total`).
pub type FineState<T> = ModalField<T>;

impl<T: Real> ModalField<T> {
    pub fn zeros(n_elem: usize, modes: Range<usize>) -> Self {
        let len = n_elem * modes.len();
        Self {
            n_elem,
            modes,
            data: vec![T::zero(); len],
        }
    }

    pub fn from_data(n_elem: usize, modes: Range<usize>, data: Vec<T>) -> Result<Self> {
        if data.len() != n_elem * modes.len() {
            return invalid(format!(
                "modal data length {} does not match {n_elem} elements x {} modes",
                data.len(),
                modes.len()
            ));
        }
        Ok(Self { n_elem, modes, data })
    }

    pub fn n_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn element(&self, k: usize) -> &[T] {
        let n = self.n_modes();
        &self.data[k * n..(k + 1) * n]
    }

    pub fn element_mut(&mut self, k: usize) -> &mut [T] {
        let n = self.n_modes();
        &mut self.data[k * n..(k + 1) * n]
    }

    /// Coefficient of global mode index `j` on element `k`.
    pub fn get(&self, k: usize, j: usize) -> T {
        self.element(k)[j - self.modes.start]
    }

    pub fn set(&mut self, k: usize, j: usize, v: T) {
        let off = self.modes.start;
        self.element_mut(k)[j - off] = v;
    }

    /// Keep only modes in `modes` (which must lie inside the stored range).
    pub fn restrict(&self, modes: Range<usize>) -> Self {
        assert!(modes.start >= self.modes.start && modes.end <= self.modes.end);
        let mut out = Self::zeros(self.n_elem, modes.clone());
        for k in 0..self.n_elem {
            for j in modes.clone() {
                out.set(k, j, self.get(k, j));
            }
        }
        out
    }

    /// Zero-pad to a wider mode range.
    pub fn extend(&self, modes: Range<usize>) -> Self {
        assert!(modes.start <= self.modes.start && modes.end >= self.modes.end);
        let mut out = Self::zeros(self.n_elem, modes);
        for k in 0..self.n_elem {
            for j in self.modes.clone() {
                out.set(k, j, self.get(k, j));
            }
        }
        out
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        assert_eq!(self.data.len(), other.data.len());
        self.data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()))
    }
}

/// Mesh + split + quadrature, with basis tables for every grid-representable mode.
///
/// The tables run past the fine truncation up to the number of modes the
/// quadrature grid can represent exactly (Gauss node count for Legendre, the
/// odd trapezoid point count for Fourier). That space stands in for the
/// untruncated fine space whenever a residual is projected pointwise.
#[derive(Clone, Debug)]
pub struct Discretization<T> {
    pub mesh: Mesh1D<T>,
    pub split: ScaleSplit,
    ref_nodes: Vec<T>,
    ref_weights: Vec<T>,
    /// dx / d(reference coordinate).
    jacobian: T,
    n_grid_modes: usize,
    /// `value[j][q]`, physical derivatives `d1`, `d2` on the reference nodes.
    value: Vec<Vec<T>>,
    d1: Vec<Vec<T>>,
    d2: Vec<Vec<T>>,
    mass: Vec<T>,
}

impl<T: Real> Discretization<T> {
    /// Default resolution: `2N+2` Gauss nodes per element (Legendre) or
    /// `4K+1` uniform points (Fourier).
    pub fn new(mesh: Mesh1D<T>, split: ScaleSplit) -> Result<Self> {
        let nodes = match split.kind {
            BasisKind::Legendre => 2 * split.fine + 2,
            BasisKind::Fourier => 4 * split.fine + 1,
        };
        Self::with_nodes(mesh, split, nodes)
    }

    pub fn with_nodes(mesh: Mesh1D<T>, split: ScaleSplit, nodes: usize) -> Result<Self> {
        let (rule, n_grid_modes, jacobian) = match split.kind {
            BasisKind::Legendre => {
                if nodes < split.fine + 1 {
                    return invalid(format!(
                        "{nodes} Gauss nodes cannot represent degree {}",
                        split.fine
                    ));
                }
                (gauss_rule(nodes)?, nodes, mesh.h() / T::lit(2.0))
            }
            BasisKind::Fourier => {
                if mesh.n_elem != 1 || !mesh.periodic {
                    return invalid("Fourier split needs a single periodic element");
                }
                if nodes % 2 == 0 || nodes < 2 * split.fine + 1 {
                    return invalid(format!(
                        "Fourier grid needs an odd point count >= {}, got {nodes}",
                        2 * split.fine + 1
                    ));
                }
                (
                    QuadratureRule::periodic_trapezoid(nodes)?,
                    nodes,
                    mesh.length() / (T::lit(2.0) * T::PI()),
                )
            }
        };
        let mut disc = Self {
            mesh,
            split,
            ref_nodes: rule.nodes,
            ref_weights: rule.weights,
            jacobian,
            n_grid_modes,
            value: Vec::new(),
            d1: Vec::new(),
            d2: Vec::new(),
            mass: Vec::new(),
        };
        let nq = disc.ref_nodes.len();
        disc.value = vec![Vec::with_capacity(nq); n_grid_modes];
        disc.d1 = vec![Vec::with_capacity(nq); n_grid_modes];
        disc.d2 = vec![Vec::with_capacity(nq); n_grid_modes];
        for q in 0..nq {
            let e = disc.eval_reference(disc.ref_nodes[q]);
            for j in 0..n_grid_modes {
                disc.value[j].push(e.value[j]);
                disc.d1[j].push(e.d1[j]);
                disc.d2[j].push(e.d2[j]);
            }
        }
        disc.mass = (0..n_grid_modes)
            .map(|j| disc.jacobian * disc.reference_mass(j))
            .collect();
        Ok(disc)
    }

    fn reference_mass(&self, j: usize) -> T {
        match self.split.kind {
            BasisKind::Legendre => Basis::<T>::reference_mass(&LegendreBasis::new(j), j),
            BasisKind::Fourier => Basis::<T>::reference_mass(&FourierBasis::new(j), j),
        }
    }

    /// Basis values with physical derivatives at a reference coordinate.
    fn eval_reference(&self, xi: T) -> PointEval<T> {
        let n = self.n_grid_modes;
        let mut e = match self.split.kind {
            BasisKind::Legendre => Basis::<T>::eval_all(&LegendreBasis::new(n - 1), xi),
            BasisKind::Fourier => Basis::<T>::eval_all(&FourierBasis::new((n - 1) / 2), xi),
        };
        let inv = T::one() / self.jacobian;
        e.d1.iter_mut().for_each(|v| *v *= inv);
        e.d2.iter_mut().for_each(|v| *v *= inv * inv);
        e
    }

    pub fn n_elem(&self) -> usize {
        self.mesh.n_elem
    }

    pub fn nodes_per_elem(&self) -> usize {
        self.ref_nodes.len()
    }

    pub fn n_grid_modes(&self) -> usize {
        self.n_grid_modes
    }

    pub fn n_coarse(&self) -> usize {
        self.split.n_coarse()
    }

    pub fn n_total(&self) -> usize {
        self.split.n_total()
    }

    pub fn is_periodic(&self) -> bool {
        self.mesh.periodic
    }

    pub fn jacobian(&self) -> T {
        self.jacobian
    }

    /// Physical mass `(w_j, w_j)` on one element.
    pub fn mass(&self, j: usize) -> T {
        self.mass[j]
    }

    pub fn basis_value(&self, j: usize) -> &[T] {
        &self.value[j]
    }

    pub fn basis_d1(&self, j: usize) -> &[T] {
        &self.d1[j]
    }

    pub fn basis_d2(&self, j: usize) -> &[T] {
        &self.d2[j]
    }

    /// Physical quadrature weights of one element.
    pub fn weights(&self) -> Vec<T> {
        self.ref_weights.iter().map(|&w| w * self.jacobian).collect()
    }

    /// Physical node position of `(element, node)`.
    pub fn point(&self, k: usize, q: usize) -> T {
        let (left, right) = self.mesh.element_bounds(k);
        match self.split.kind {
            BasisKind::Legendre => left + (self.ref_nodes[q] + T::one()) * (right - left) / T::lit(2.0),
            BasisKind::Fourier => left + self.ref_nodes[q] * self.jacobian,
        }
    }

    pub fn points(&self) -> Vec<T> {
        (0..self.n_elem())
            .flat_map(|k| (0..self.nodes_per_elem()).map(move |q| (k, q)))
            .map(|(k, q)| self.point(k, q))
            .collect()
    }

    pub fn sample(&self, f: impl Fn(T) -> T) -> GridFunction<T> {
        GridFunction {
            nodes_per_elem: self.nodes_per_elem(),
            values: self.points().into_iter().map(f).collect(),
        }
    }

    pub fn zero_grid(&self) -> GridFunction<T> {
        GridFunction::zeros(self.n_elem(), self.nodes_per_elem())
    }

    fn check_grid(&self, g: &GridFunction<T>) -> Result<()> {
        if g.nodes_per_elem != self.nodes_per_elem()
            || g.values.len() != self.n_elem() * self.nodes_per_elem()
        {
            return invalid(format!(
                "grid function of length {} does not match {} elements x {} nodes",
                g.values.len(),
                self.n_elem(),
                self.nodes_per_elem()
            ));
        }
        Ok(())
    }

    /// L2 inner product of two grid functions by quadrature.
    pub fn inner(&self, f: &GridFunction<T>, g: &GridFunction<T>) -> T {
        let w = self.weights();
        (0..self.n_elem())
            .map(|k| {
                f.element(k)
                    .iter()
                    .zip(g.element(k))
                    .zip(&w)
                    .map(|((&a, &b), &wq)| wq * a * b)
                    .sum::<T>()
            })
            .sum()
    }

    pub fn integral(&self, f: &GridFunction<T>) -> T {
        let w = self.weights();
        f.values
            .chunks(self.nodes_per_elem())
            .map(|c| c.iter().zip(&w).map(|(&a, &b)| a * b).sum::<T>())
            .sum()
    }

    /// `(w_j, g)` on element `k`.
    pub fn moment(&self, k: usize, j: usize, g: &GridFunction<T>) -> T {
        self.weighted_moment(k, &self.value[j], g)
    }

    fn weighted_moment(&self, k: usize, table: &[T], g: &GridFunction<T>) -> T {
        g.element(k)
            .iter()
            .zip(table)
            .zip(&self.ref_weights)
            .map(|((&gv, &b), &wq)| wq * gv * b)
            .sum::<T>()
            * self.jacobian
    }

    /// `(dw_j/dx, g)` on element `k`.
    pub fn moment_dx(&self, k: usize, j: usize, g: &GridFunction<T>) -> T {
        self.weighted_moment(k, &self.d1[j], g)
    }

    /// `(d2w_j/dx2, g)` on element `k`.
    pub fn moment_dxx(&self, k: usize, j: usize, g: &GridFunction<T>) -> T {
        self.weighted_moment(k, &self.d2[j], g)
    }

    /// L2 projection of `g` onto the given mode block.
    pub fn project(&self, g: &GridFunction<T>, modes: Range<usize>) -> Result<ModalField<T>> {
        self.check_grid(g)?;
        ensure_finite(&g.values, "projected grid function")?;
        if modes.end > self.n_grid_modes {
            return invalid(format!(
                "modes {modes:?} exceed the {} grid-representable modes",
                self.n_grid_modes
            ));
        }
        let mut out = ModalField::zeros(self.n_elem(), modes.clone());
        for k in 0..self.n_elem() {
            for j in modes.clone() {
                out.set(k, j, self.moment(k, j, g) / self.mass[j]);
            }
        }
        Ok(out)
    }

    /// Coefficients of the interpolant of `g` in every grid-representable mode.
    pub fn interpolate(&self, g: &GridFunction<T>) -> Result<ModalField<T>> {
        self.project(g, 0..self.n_grid_modes)
    }

    /// Evaluate a modal field (value, d/dx, d2/dx2 selectable) on the grid.
    fn synthesize(&self, field: &ModalField<T>, table: &[Vec<T>]) -> GridFunction<T> {
        let nq = self.nodes_per_elem();
        let mut g = GridFunction::zeros(field.n_elem, nq);
        for k in 0..field.n_elem {
            let coeffs = field.element(k);
            let out = g.element_mut(k);
            for (c, j) in coeffs.iter().zip(field.modes.clone()) {
                if *c == T::zero() {
                    continue;
                }
                for (o, &b) in out.iter_mut().zip(&table[j]) {
                    *o += *c * b;
                }
            }
        }
        g
    }

    pub fn reconstruct(&self, field: &ModalField<T>) -> GridFunction<T> {
        self.synthesize(field, &self.value)
    }

    pub fn reconstruct_dx(&self, field: &ModalField<T>) -> GridFunction<T> {
        self.synthesize(field, &self.d1)
    }

    pub fn reconstruct_dxx(&self, field: &ModalField<T>) -> GridFunction<T> {
        self.synthesize(field, &self.d2)
    }

    /// Exact derivative of the grid interpolant of `g`.
    pub fn differentiate(&self, g: &GridFunction<T>) -> Result<GridFunction<T>> {
        Ok(self.reconstruct_dx(&self.interpolate(g)?))
    }

    pub fn differentiate2(&self, g: &GridFunction<T>) -> Result<GridFunction<T>> {
        Ok(self.reconstruct_dxx(&self.interpolate(g)?))
    }

    /// Values of a Legendre modal field at the left and right end of element `k`.
    pub fn traces(&self, field: &ModalField<T>, k: usize) -> (T, T) {
        let coeffs = field.element(k);
        let mut left = T::zero();
        let mut right = T::zero();
        for (c, j) in coeffs.iter().zip(field.modes.clone()) {
            left += *c * parity_sign::<T>(j);
            right += *c;
        }
        (left, right)
    }

    /// Same as [`traces`](Self::traces) for the first physical derivative.
    pub fn derivative_traces(&self, field: &ModalField<T>, k: usize) -> (T, T) {
        let coeffs = field.element(k);
        let inv = T::one() / self.jacobian;
        let mut left = T::zero();
        let mut right = T::zero();
        for (c, j) in coeffs.iter().zip(field.modes.clone()) {
            // P_j'(1) = j(j+1)/2, P_j'(-1) = (-1)^{j+1} j(j+1)/2
            let d = T::from_usize_lossy(j * (j + 1)) / T::lit(2.0);
            right += *c * d;
            left -= *c * d * parity_sign::<T>(j);
        }
        (left * inv, right * inv)
    }

    /// Element index and basis values (physical derivatives) at physical point `x`.
    pub fn eval_at(&self, x: T, n_modes: usize) -> Result<(usize, PointEval<T>)> {
        let k = self
            .mesh
            .element_of(x)
            .ok_or_else(|| crate::Error::InvalidArgument(format!("point {x} outside mesh")))?;
        let (left, right) = self.mesh.element_bounds(k);
        let xi = match self.split.kind {
            BasisKind::Legendre => T::lit(2.0) * (x - left) / (right - left) - T::one(),
            BasisKind::Fourier => (x - left) / self.jacobian,
        };
        let mut e = self.eval_reference(xi);
        e.value.truncate(n_modes);
        e.d1.truncate(n_modes);
        e.d2.truncate(n_modes);
        Ok((k, e))
    }
}

/// L2 projection onto the coarse space: `M~ a~ = (w~, g)` element by element.
pub fn project_coarse<T: Real>(disc: &Discretization<T>, g: &GridFunction<T>) -> Result<CoarseState<T>> {
    disc.project(g, disc.split.coarse_modes())
}

/// `g - Pi~ g` on the grid: the part of `g` orthogonal to every coarse function.
pub fn project_fine_residual<T: Real>(
    disc: &Discretization<T>,
    g: &GridFunction<T>,
) -> Result<GridFunction<T>> {
    let coarse = project_coarse(disc, g)?;
    let resolved = disc.reconstruct(&coarse);
    Ok(g.zip_with(&resolved, |a, b| a - b))
}

/// Two-dimensional table of a kernel `K(x, y)`, row-major in `x`.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelTable<T> {
    pub x: Vec<T>,
    pub y: Vec<T>,
    pub values: Vec<T>,
}

impl<T: Real> KernelTable<T> {
    pub fn from_fn(x: Vec<T>, y: Vec<T>, f: impl Fn(T, T) -> T) -> Self {
        let values = x
            .iter()
            .flat_map(|&xi| y.iter().map(move |&yj| (xi, yj)))
            .map(|(a, b)| f(a, b))
            .collect();
        Self { x, y, values }
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.values[i * self.y.len() + j]
    }

    pub fn scaled(&self, s: T) -> Self {
        Self {
            x: self.x.clone(),
            y: self.y.clone(),
            values: self.values.iter().map(|&v| v * s).collect(),
        }
    }

    pub fn max_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }
}

/// Tabulate `Pi'(x, y) = w'(x)^T M'^{-1} w'(y)` over the truncated fine modes.
///
/// Legendre splits give a block-diagonal kernel: points in distinct elements
/// couple with value zero.
pub fn fine_projector_kernel<T: Real>(
    disc: &Discretization<T>,
    x_grid: &[T],
    y_grid: &[T],
) -> Result<KernelTable<T>> {
    let fine = disc.split.fine_modes();
    if fine.is_empty() {
        return invalid("fine projector kernel needs a nonempty fine mode set");
    }
    let n = disc.n_total();
    let ex = x_grid
        .iter()
        .map(|&x| disc.eval_at(x, n))
        .collect::<Result<Vec<_>>>()?;
    let ey = y_grid
        .iter()
        .map(|&y| disc.eval_at(y, n))
        .collect::<Result<Vec<_>>>()?;
    let mut values = Vec::with_capacity(x_grid.len() * y_grid.len());
    for (kx, px) in &ex {
        for (ky, py) in &ey {
            let v = if kx != ky {
                T::zero()
            } else {
                fine.clone()
                    .map(|j| px.value[j] * py.value[j] / disc.mass(j))
                    .sum()
            };
            values.push(v);
        }
    }
    Ok(KernelTable {
        x: x_grid.to_vec(),
        y: y_grid.to_vec(),
        values,
    })
}

/// Uniform evaluation grid with `per_elem` points inside every element
/// (cell-centred, so no point sits on an element boundary).
pub fn element_grid<T: Real>(mesh: &Mesh1D<T>, per_elem: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(mesh.n_elem * per_elem);
    for k in 0..mesh.n_elem {
        let (l, r) = mesh.element_bounds(k);
        for i in 0..per_elem {
            let frac = (T::from_usize_lossy(i) + T::lit(0.5)) / T::from_usize_lossy(per_elem);
            out.push(l + (r - l) * frac);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dg(n_elem: usize, p: usize, n: usize) -> Discretization<f64> {
        let mesh = Mesh1D::new(-1.0, 1.0, n_elem, true).unwrap();
        Discretization::new(mesh, ScaleSplit::legendre(p, n).unwrap()).unwrap()
    }

    #[test]
    fn mesh_validation_and_tiling() {
        assert!(Mesh1D::<f64>::new(0.0, 1.0, 0, false).is_err());
        assert!(Mesh1D::<f64>::new(1.0, 0.0, 2, false).is_err());
        let m = Mesh1D::new(0.0, 1.0, 7, false).unwrap();
        let v = m.vertices();
        assert_eq!(v.len(), 8);
        assert_eq!(*v.last().unwrap(), 1.0);
        assert!(v.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(m.element_of(1.0), Some(6));
        assert_eq!(m.element_of(0.0), Some(0));
        assert_eq!(m.element_of(1.5), None);
    }

    #[test]
    fn split_validation() {
        assert!(ScaleSplit::legendre(3, 3).is_err());
        let s = ScaleSplit::fourier(2, 5).unwrap();
        assert_eq!(s.coarse_modes(), 0..5);
        assert_eq!(s.fine_modes(), 5..11);
    }

    #[test]
    fn projecting_a_coarse_basis_function_gives_a_unit_vector() {
        let d = dg(3, 3, 6);
        let mut f = ModalField::zeros(3, 0..d.n_total());
        f.set(1, 2, 1.0);
        let g = d.reconstruct(&f);
        let a = project_coarse(&d, &g).unwrap();
        for k in 0..3 {
            for j in 0..4 {
                let e = if (k, j) == (1, 2) { 1.0 } else { 0.0 };
                assert!((a.get(k, j) - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn fine_modes_project_to_zero() {
        let d = dg(2, 2, 6);
        for j in d.split.fine_modes() {
            let mut f = ModalField::zeros(2, 0..d.n_total());
            f.set(0, j, 1.0);
            let g = d.reconstruct(&f);
            assert!(project_coarse(&d, &g).unwrap().max_abs() < 1e-12);
            let r = project_fine_residual(&d, &g).unwrap();
            assert!(r.zip_with(&g, |a, b| a - b).max_abs() < 1e-12);
        }
    }

    #[test]
    fn coarse_projection_matches_normal_equations_for_x_squared() {
        // One element on [0, 1], p~ = 1: least squares of x^2 on {P0, P1}.
        let mesh = Mesh1D::<f64>::new(0.0, 1.0, 1, false).unwrap();
        let d = Discretization::new(mesh, ScaleSplit::legendre(1, 3).unwrap()).unwrap();
        let g = d.sample(|x| x * x);
        let a = project_coarse(&d, &g).unwrap();
        // Dense normal equations in the monomial basis {1, x} on [0, 1]:
        // [1 1/2; 1/2 1/3] c = [1/3; 1/4] -> c = (-1/6, 1)
        let (c0, c1) = (-1.0 / 6.0, 1.0);
        // In Legendre on [0,1]: x = 1/2 + P1/2, so c0 + c1 x = (c0 + c1/2) P0 + (c1/2) P1.
        assert!((a.get(0, 0) - (c0 + c1 / 2.0)).abs() < 1e-12);
        assert!((a.get(0, 1) - c1 / 2.0).abs() < 1e-12);
    }

    #[test]
    fn fine_residual_of_exp_matches_dense_gram_projection() {
        let mesh = Mesh1D::new(-1.0, 1.0, 1, false).unwrap();
        let d = Discretization::new(mesh, ScaleSplit::legendre(1, 6).unwrap()).unwrap();
        let g = d.sample(f64::exp);
        let r = project_fine_residual(&d, &g).unwrap();
        // Independent oracle: dense 40-point quadrature of (g, P_j) / ||P_j||^2 for j <= 1.
        let q = crate::basis::gauss_rule::<f64>(40).unwrap();
        let c0 = q.integrate(f64::exp) / 2.0;
        let c1 = q.integrate(|x| x * x.exp()) / (2.0 / 3.0);
        for (x, rv) in d.points().into_iter().zip(&r.values) {
            let expected = x.exp() - c0 - c1 * x;
            assert!((rv - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn residual_in_coarse_span_is_annihilated() {
        let d = dg(4, 2, 5);
        let g = d.sample(|x| 1.0 - 2.0 * x + 0.5 * x * x);
        assert!(project_fine_residual(&d, &g).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn projection_rejects_non_finite_input() {
        let d = dg(2, 1, 3);
        let mut g = d.sample(|x| x);
        g.values[3] = f64::NAN;
        assert!(project_coarse(&d, &g).is_err());
        let bad = GridFunction {
            nodes_per_elem: 3,
            values: vec![0.0; 3],
        };
        assert!(project_coarse(&d, &bad).is_err());
    }

    #[test]
    fn single_fine_mode_kernel_closed_form() {
        let mesh = Mesh1D::new(0.0, 2.0, 2, true).unwrap();
        let d = Discretization::new(mesh, ScaleSplit::legendre(2, 3).unwrap()).unwrap();
        let xs = [0.1, 0.4, 0.95, 1.3];
        let table = fine_projector_kernel(&d, &xs, &xs).unwrap();
        let p3 = |xi: f64| 0.5 * (5.0 * xi.powi(3) - 3.0 * xi);
        // h = 1, so ||P3||^2 = (h/2) * 2/7
        let m3 = 1.0 / 7.0;
        for (i, &x) in xs.iter().enumerate() {
            for (j, &y) in xs.iter().enumerate() {
                let (kx, ky) = ((x as usize), (y as usize));
                let expected = if kx != ky {
                    0.0
                } else {
                    let (xi, eta) = (2.0 * (x - kx as f64) - 1.0, 2.0 * (y - ky as f64) - 1.0);
                    p3(xi) * p3(eta) / m3
                };
                assert!((table.get(i, j) - expected).abs() < 1e-12);
                assert_eq!(table.get(i, j), table.get(j, i));
            }
        }
    }

    #[test]
    fn kernel_needs_fine_modes_inside_mesh() {
        let d = dg(2, 1, 3);
        assert!(fine_projector_kernel(&d, &[2.0], &[0.0]).is_err());
    }

    #[test]
    fn derivative_traces_match_closed_form() {
        let mesh = Mesh1D::<f64>::new(0.0, 1.0, 1, false).unwrap();
        let d = Discretization::new(mesh, ScaleSplit::legendre(3, 4).unwrap()).unwrap();
        let g = d.sample(|x| x * x * x);
        let a = d.interpolate(&g).unwrap();
        let (l, r) = d.derivative_traces(&a, 0);
        assert!(l.abs() < 1e-12 && (r - 3.0).abs() < 1e-12);
        let (vl, vr) = d.traces(&a, 0);
        assert!(vl.abs() < 1e-12 && (vr - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fourier_discretization_differentiates_exactly() {
        let mesh = Mesh1D::new(0.0, 2.0 * std::f64::consts::PI, 1, true).unwrap();
        let d = Discretization::new(mesh, ScaleSplit::fourier(2, 6).unwrap()).unwrap();
        let g = d.sample(|x| (3.0 * x).sin() + (x).cos());
        let dg = d.differentiate(&g).unwrap();
        for (x, v) in d.points().into_iter().zip(&dg.values) {
            assert!((v - (3.0 * (3.0 * x).cos() - x.sin())).abs() < 1e-12);
        }
        assert!(Discretization::with_nodes(d.mesh.clone(), d.split, 24).is_err());
    }
}
