//! Gauss-Legendre quadrature, the reference-element Legendre basis, and the
//! real Fourier basis on `[0, 2pi)`.

use std::ops::Range;

use crate::error::{invalid, Result};
use crate::scalar::{parity_sign, Real};

const NEWTON_MAX_ITERATIONS: usize = 100;

/// Quadrature nodes and weights on a reference interval.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureRule<T> {
    pub nodes: Vec<T>,
    pub weights: Vec<T>,
}

impl<T: Real> QuadratureRule<T> {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(T) -> T) -> T {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    /// Uniform trapezoid rule on `[0, 2pi)` with `m` points; exact for
    /// trigonometric polynomials of degree below `m`.
    pub fn periodic_trapezoid(m: usize) -> Result<Self> {
        if m == 0 {
            return invalid("periodic rule needs at least one point");
        }
        let two_pi = T::lit(2.0) * T::PI();
        let h = two_pi / T::from_usize_lossy(m);
        Ok(Self {
            nodes: (0..m).map(|q| h * T::from_usize_lossy(q)).collect(),
            weights: vec![h; m],
        })
    }
}

/// `n`-point Gauss-Legendre rule on `[-1, 1]`, nodes ascending.
///
/// Roots of `P_n` are found by Newton iteration from the Chebyshev-like initial
/// guess; symmetry fixes the mirrored half exactly.
pub fn gauss_rule<T: Real>(n: usize) -> Result<QuadratureRule<T>> {
    if n == 0 {
        return invalid("Gauss rule needs n >= 1");
    }
    let mut nodes = vec![T::zero(); n];
    let mut weights = vec![T::zero(); n];
    let half = n / 2;
    for i in 0..half {
        let guess = (T::PI() * (T::from_usize_lossy(i) + T::lit(0.75))
            / (T::from_usize_lossy(n) + T::lit(0.5)))
        .cos();
        let mut x = guess;
        let mut dp = T::one();
        for _ in 0..NEWTON_MAX_ITERATIONS {
            let (p, d) = legendre_pair(n, x);
            dp = d;
            let step = p / d;
            x -= step;
            if step.abs() <= T::iteration_tolerance() {
                break;
            }
        }
        let (_, d) = legendre_pair(n, x);
        if d != T::zero() {
            dp = d;
        }
        let w = T::lit(2.0) / ((T::one() - x * x) * dp * dp);
        // i-th root counted from +1; store ascending.
        nodes[n - 1 - i] = x;
        nodes[i] = -x;
        weights[n - 1 - i] = w;
        weights[i] = w;
    }
    if n % 2 == 1 {
        let (_, d) = legendre_pair(n, T::zero());
        nodes[half] = T::zero();
        weights[half] = T::lit(2.0) / (d * d);
    }
    Ok(QuadratureRule { nodes, weights })
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre_pair<T: Real>(n: usize, x: T) -> (T, T) {
    let mut p_prev = T::one();
    if n == 0 {
        return (p_prev, T::zero());
    }
    let mut p = x;
    let mut d_prev = T::zero();
    let mut d = T::one();
    for k in 1..n {
        let kf = T::from_usize_lossy(k);
        let two_k1 = T::from_usize_lossy(2 * k + 1);
        let p_next = (two_k1 * x * p - kf * p_prev) / (kf + T::one());
        let d_next = d_prev + two_k1 * p;
        p_prev = p;
        p = p_next;
        d_prev = d;
        d = d_next;
    }
    (p, d)
}

/// Values and first two derivatives of a family of basis functions at one point.
#[derive(Clone, Debug, Default)]
pub struct PointEval<T> {
    pub value: Vec<T>,
    pub d1: Vec<T>,
    pub d2: Vec<T>,
}

/// A hierarchical one-dimensional basis indexed from 0.
pub trait Basis<T: Real> {
    /// Number of basis functions (highest index + 1).
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Values and reference-coordinate derivatives of functions `0..len` at `x`.
    fn eval_all(&self, x: T) -> PointEval<T>;

    /// `\int w_j^2` over the reference domain.
    fn reference_mass(&self, j: usize) -> T;
}

/// Unnormalized Legendre polynomials `P_0..=P_N` on `[-1, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LegendreBasis {
    pub max_degree: usize,
}

impl LegendreBasis {
    pub fn new(max_degree: usize) -> Self {
        Self { max_degree }
    }

    /// `P_j(1) = 1`.
    pub fn right_value<T: Real>(_j: usize) -> T {
        T::one()
    }

    /// `P_j(-1) = (-1)^j`.
    pub fn left_value<T: Real>(j: usize) -> T {
        parity_sign(j)
    }
}

impl<T: Real> Basis<T> for LegendreBasis {
    fn len(&self) -> usize {
        self.max_degree + 1
    }

    fn eval_all(&self, x: T) -> PointEval<T> {
        legendre_all(self.max_degree, x)
    }

    fn reference_mass(&self, j: usize) -> T {
        T::lit(2.0) / T::from_usize_lossy(2 * j + 1)
    }
}

/// `P_0..=P_n` and their first two derivatives at `x`.
pub fn legendre_all<T: Real>(n: usize, x: T) -> PointEval<T> {
    let mut v = vec![T::zero(); n + 1];
    let mut d1 = vec![T::zero(); n + 1];
    let mut d2 = vec![T::zero(); n + 1];
    v[0] = T::one();
    if n >= 1 {
        v[1] = x;
        d1[1] = T::one();
    }
    for k in 1..n {
        let kf = T::from_usize_lossy(k);
        let two_k1 = T::from_usize_lossy(2 * k + 1);
        v[k + 1] = (two_k1 * x * v[k] - kf * v[k - 1]) / (kf + T::one());
        // P'_{k+1} = P'_{k-1} + (2k+1) P_k, and the same relation differentiated once more.
        d1[k + 1] = d1[k - 1] + two_k1 * v[k];
        d2[k + 1] = d2[k - 1] + two_k1 * d1[k];
    }
    PointEval { value: v, d1, d2 }
}

/// Real trigonometric basis on `[0, 2pi)`: index 0 is the constant,
/// `2k-1` is `cos(kx)` and `2k` is `sin(kx)` for `k = 1..=K`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FourierBasis {
    pub max_wavenumber: usize,
}

impl FourierBasis {
    pub fn new(max_wavenumber: usize) -> Self {
        Self { max_wavenumber }
    }

    /// Wavenumber carried by basis index `j`.
    pub fn wavenumber(j: usize) -> usize {
        j.div_ceil(2)
    }

    /// Number of basis functions with wavenumber at most `k`.
    pub fn count_up_to(k: usize) -> usize {
        2 * k + 1
    }
}

impl<T: Real> Basis<T> for FourierBasis {
    fn len(&self) -> usize {
        Self::count_up_to(self.max_wavenumber)
    }

    fn eval_all(&self, x: T) -> PointEval<T> {
        let n = <Self as Basis<T>>::len(self);
        let mut out = PointEval {
            value: vec![T::zero(); n],
            d1: vec![T::zero(); n],
            d2: vec![T::zero(); n],
        };
        out.value[0] = T::one();
        for k in 1..=self.max_wavenumber {
            let kf = T::from_usize_lossy(k);
            let (s, c) = (kf * x).sin_cos();
            out.value[2 * k - 1] = c;
            out.d1[2 * k - 1] = -kf * s;
            out.d2[2 * k - 1] = -kf * kf * c;
            out.value[2 * k] = s;
            out.d1[2 * k] = kf * c;
            out.d2[2 * k] = -kf * kf * s;
        }
        out
    }

    fn reference_mass(&self, j: usize) -> T {
        if j == 0 {
            T::lit(2.0) * T::PI()
        } else {
            T::PI()
        }
    }
}

/// Tabulated basis values: `value[j][q]` is `w_j(points[q])`.
#[derive(Clone, Debug)]
pub struct BasisTable<T> {
    pub degrees: Range<usize>,
    pub value: Vec<Vec<T>>,
    pub d1: Vec<Vec<T>>,
    pub d2: Vec<Vec<T>>,
}

/// Evaluate basis functions in `degrees` (and reference derivatives) at `points`.
pub fn eval_basis<T: Real, B: Basis<T>>(
    basis: &B,
    degrees: Range<usize>,
    points: &[T],
) -> Result<BasisTable<T>> {
    if degrees.end > basis.len() || degrees.start > degrees.end {
        return invalid(format!("basis indices {degrees:?} outside 0..{}", basis.len()));
    }
    let n = degrees.len();
    let mut table = BasisTable {
        degrees: degrees.clone(),
        value: vec![Vec::with_capacity(points.len()); n],
        d1: vec![Vec::with_capacity(points.len()); n],
        d2: vec![Vec::with_capacity(points.len()); n],
    };
    for &x in points {
        let e = basis.eval_all(x);
        for (row, j) in degrees.clone().enumerate() {
            table.value[row].push(e.value[j]);
            table.d1[row].push(e.d1[j]);
            table.d2[row].push(e.d2[j]);
        }
    }
    Ok(table)
}

/// Diagonal of the mass matrix `(w_i, w_j)` for indices in `degrees`, scaled by
/// the map jacobian (`h/2` for a Legendre element, `L/2pi` for a Fourier domain).
pub fn mass_matrix<T: Real, B: Basis<T>>(basis: &B, degrees: Range<usize>, jacobian: T) -> Result<Vec<T>> {
    if !(jacobian > T::zero()) {
        return invalid(format!("mass matrix jacobian must be positive, got {jacobian}"));
    }
    if degrees.end > basis.len() {
        return invalid(format!("basis indices {degrees:?} outside 0..{}", basis.len()));
    }
    Ok(degrees.map(|j| jacobian * basis.reference_mass(j)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_rule_rejects_zero() {
        assert!(gauss_rule::<f64>(0).is_err());
    }

    #[test]
    fn gauss_one_point_is_midpoint() {
        let q = gauss_rule::<f64>(1).unwrap();
        assert_eq!(q.nodes, vec![0.0]);
        assert!((q.weights[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn gauss_two_point_closed_form() {
        let q = gauss_rule::<f64>(2).unwrap();
        let r = 1.0 / 3f64.sqrt();
        assert!((q.nodes[0] + r).abs() < 1e-15);
        assert!((q.nodes[1] - r).abs() < 1e-15);
        assert!((q.weights[0] - 1.0).abs() < 1e-15);
        assert!((q.weights[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn gauss_five_point_integrates_x8() {
        let q = gauss_rule::<f64>(5).unwrap();
        let v = q.integrate(|x| x.powi(8));
        assert!((v - 2.0 / 9.0).abs() < 1e-13);
    }

    #[test]
    fn gauss_monomial_sweep() {
        for n in 1..=24 {
            let q = gauss_rule::<f64>(n).unwrap();
            let wsum: f64 = q.weights.iter().sum();
            assert!((wsum - 2.0).abs() < 1e-13, "n={n} weight sum {wsum}");
            for k in 0..=(2 * n - 1) {
                let exact = if k % 2 == 1 { 0.0 } else { 2.0 / (k as f64 + 1.0) };
                let got = q.integrate(|x| x.powi(k as i32));
                let err = (got - exact).abs() / exact.abs().max(1.0);
                assert!(err < 1e-12, "n={n} k={k} err={err}");
            }
        }
    }

    #[test]
    fn gauss_rule_in_f32() {
        let q = gauss_rule::<f32>(6).unwrap();
        let v = q.integrate(|x| x.powi(10));
        assert!((v - 2.0 / 11.0).abs() < 1e-5);
    }

    #[test]
    fn legendre_endpoint_identities() {
        let b = LegendreBasis::new(12);
        let right = Basis::<f64>::eval_all(&b, 1.0);
        let left = Basis::<f64>::eval_all(&b, -1.0);
        for j in 0..=12 {
            assert_eq!(right.value[j], LegendreBasis::right_value::<f64>(j));
            assert_eq!(left.value[j], LegendreBasis::left_value::<f64>(j));
        }
    }

    #[test]
    fn legendre_constant_and_linear_modes() {
        let b = LegendreBasis::new(3);
        let t = eval_basis::<f64, _>(&b, 0..4, &[-0.7, 0.1, 0.9]).unwrap();
        assert!(t.value[0].iter().all(|&v| v == 1.0));
        assert!(t.d1[1].iter().all(|&v| v == 1.0));
        assert_eq!(Basis::<f64>::eval_all(&b, 1.0).value[2], 1.0);
        // P_3 = (5x^3 - 3x)/2, P_3'' = 15x
        assert!((t.value[3][0] - (5.0 * (-0.7f64).powi(3) + 2.1) / 2.0).abs() < 1e-15);
        assert!((t.d2[3][2] - 13.5).abs() < 1e-13);
    }

    #[test]
    fn eval_basis_rejects_out_of_range() {
        let b = LegendreBasis::new(3);
        assert!(eval_basis::<f64, _>(&b, 0..5, &[0.0]).is_err());
    }

    #[test]
    fn legendre_quadrature_orthogonality() {
        let n = 10;
        let b = LegendreBasis::new(n);
        let q = gauss_rule::<f64>(n + 1).unwrap();
        let t = eval_basis::<f64, _>(&b, 0..n + 1, &q.nodes).unwrap();
        for i in 0..=n {
            for j in 0..=n {
                let ip: f64 = (0..q.len())
                    .map(|k| q.weights[k] * t.value[i][k] * t.value[j][k])
                    .sum();
                let expected = if i == j { 2.0 / (2 * i + 1) as f64 } else { 0.0 };
                assert!((ip - expected).abs() < 1e-12, "({i},{j}) {ip}");
            }
        }
    }

    #[test]
    fn fourier_orthogonality_under_trapezoid() {
        let b = FourierBasis::new(6);
        let q = QuadratureRule::<f64>::periodic_trapezoid(13).unwrap();
        let t = eval_basis::<f64, _>(&b, 0..13, &q.nodes).unwrap();
        for i in 0..13 {
            for j in 0..13 {
                let ip: f64 = (0..q.len())
                    .map(|k| q.weights[k] * t.value[i][k] * t.value[j][k])
                    .sum();
                let expected = if i != j {
                    0.0
                } else {
                    Basis::<f64>::reference_mass(&b, i)
                };
                assert!((ip - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mass_matrix_entries() {
        let b = LegendreBasis::new(4);
        let m = mass_matrix::<f64, _>(&b, 0..4, 1.0).unwrap();
        assert!((m[0] - 2.0).abs() < 1e-15);
        // j = 3, h = 1 -> jacobian 1/2: (1/2) * 2/7
        let m = mass_matrix::<f64, _>(&b, 3..4, 0.5).unwrap();
        let q = gauss_rule::<f64>(4).unwrap();
        let quad = 0.5
            * q.integrate(|x| {
                let p3 = 0.5 * (5.0 * x * x * x - 3.0 * x);
                p3 * p3
            });
        assert!((m[0] - 1.0 / 7.0).abs() < 1e-12);
        assert!((quad - 1.0 / 7.0).abs() < 1e-12);
        let f = FourierBasis::new(2);
        let mf = mass_matrix::<f64, _>(&f, 0..1, 1.0).unwrap();
        assert!((mf[0] - 2.0 * std::f64::consts::PI).abs() < 1e-15);
        assert!(mass_matrix::<f64, _>(&b, 0..2, 0.0).is_err());
    }
}
