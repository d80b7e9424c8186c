//! Gauss–Legendre–Lobatto grids and tensor-product nodal element functions.
//!
//! Element unknowns are nodal values on the `(W+1) x (W+1)` tensor GLL grid of
//! the master square. The first local coordinate `s` runs along the radial
//! direction of an element (τ or r), the second `t` along the angular
//! direction (θ). Nodal values are stored with `s` fastest:
//! `values[b * n + a]` is the value at `(s_a, t_b)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const NEWTON_TOL: f64 = 1e-14;
const NEWTON_MAX_ITER: usize = 100;

/// Legendre polynomial `P_n(x)` together with `P_{n-1}(x)`.
fn legendre_pair(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let (mut p_prev, mut p) = (1.0, x);
    for k in 2..=n {
        let kf = k as f64;
        let next = ((2.0 * kf - 1.0) * x * p - (kf - 1.0) * p_prev) / kf;
        p_prev = p;
        p = next;
    }
    (p, p_prev)
}

/// Barycentric weights `b_j = 1 / prod_{k != j} (x_j - x_k)`.
pub fn barycentric_weights(nodes: &[f64]) -> Vec<f64> {
    nodes
        .iter()
        .enumerate()
        .map(|(j, &xj)| {
            let prod: f64 = nodes
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != j)
                .map(|(_, &xk)| xj - xk)
                .product();
            1.0 / prod
        })
        .collect()
}

/// Differentiation matrix of the Lagrange basis on `nodes`.
///
/// Diagonal entries use the negative-sum identity so that constants are
/// differentiated to exactly zero.
pub fn differentiation_matrix(nodes: &[f64], bary: &[f64]) -> DMatrix<f64> {
    let n = nodes.len();
    let mut d = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut diag = 0.0;
        for j in 0..n {
            if i != j {
                let v = (bary[j] / bary[i]) / (nodes[i] - nodes[j]);
                d[(i, j)] = v;
                diag -= v;
            }
        }
        d[(i, i)] = diag;
    }
    d
}

/// Row vector of Lagrange basis values at `y` (barycentric formula).
pub fn lagrange_row(nodes: &[f64], bary: &[f64], y: f64) -> Vec<f64> {
    if let Some(j) = nodes.iter().position(|&x| x == y) {
        let mut row = vec![0.0; nodes.len()];
        row[j] = 1.0;
        return row;
    }
    let terms: Vec<f64> = nodes.iter().zip(bary).map(|(&x, &b)| b / (y - x)).collect();
    let sum: f64 = terms.iter().sum();
    terms.into_iter().map(|t| t / sum).collect()
}

/// Interpolation matrix from nodal values on `nodes` to values at `points`.
pub fn interpolation_matrix(nodes: &[f64], bary: &[f64], points: &[f64]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(points.len(), nodes.len());
    for (k, &y) in points.iter().enumerate() {
        for (j, v) in lagrange_row(nodes, bary, y).into_iter().enumerate() {
            m[(k, j)] = v;
        }
    }
    m
}

/// Gauss–Legendre nodes and weights on `[-1, 1]` with `n` points.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss rule needs at least one point");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = -(std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..NEWTON_MAX_ITER {
            let (p, p_prev) = legendre_pair(n, x);
            let dp = n as f64 * (x * p - p_prev) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < NEWTON_TOL {
                break;
            }
        }
        let (p, p_prev) = legendre_pair(n, x);
        let dp = n as f64 * (x * p - p_prev) / (x * x - 1.0);
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// Gauss–Legendre–Lobatto grid of degree `W` (W+1 nodes).
#[derive(Debug, Clone)]
pub struct GllGrid {
    pub degree: usize,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub bary: Vec<f64>,
    pub diff: DMatrix<f64>,
}

/// Builds the GLL grid of degree `w`.
///
/// Interior nodes are the roots of `P_W'`, found by Newton iteration on
/// `(1 - x^2) P_W'(x)` started from the Chebyshev–Lobatto points.
pub fn gll_grid(w: usize) -> Result<GllGrid> {
    if w == 0 {
        return Err(Error::UnsupportedDegree(w));
    }
    let n = w + 1;
    let wf = w as f64;
    let mut nodes: Vec<f64> = (0..n)
        .map(|i| -(std::f64::consts::PI * i as f64 / wf).cos())
        .collect();
    for x in nodes.iter_mut().take(w).skip(1) {
        for _ in 0..NEWTON_MAX_ITER {
            let (p, p_prev) = legendre_pair(w, *x);
            // Newton step for (1 - x^2) P_W'(x) = W (P_{W-1} - x P_W).
            let dx = (*x * p - p_prev) / (n as f64 * p);
            *x -= dx;
            if dx.abs() < NEWTON_TOL {
                break;
            }
        }
    }
    nodes[0] = -1.0;
    nodes[w] = 1.0;
    // Enforce exact symmetry.
    for i in 0..n / 2 {
        let m = 0.5 * (nodes[w - i] - nodes[i]);
        nodes[i] = -m;
        nodes[w - i] = m;
    }
    if n % 2 == 1 {
        nodes[w / 2] = 0.0;
    }
    let weights = nodes
        .iter()
        .map(|&x| {
            let (p, _) = legendre_pair(w, x);
            2.0 / (wf * (wf + 1.0) * p * p)
        })
        .collect();
    let bary = barycentric_weights(&nodes);
    let diff = differentiation_matrix(&nodes, &bary);
    Ok(GllGrid {
        degree: w,
        nodes,
        weights,
        bary,
        diff,
    })
}

impl GllGrid {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Integral of the interpolant of `values` over `[-1, 1]` by the GLL rule.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        values.iter().zip(&self.weights).map(|(v, w)| v * w).sum()
    }

    /// Lagrange basis row at `y`.
    pub fn basis_row(&self, y: f64) -> Vec<f64> {
        lagrange_row(&self.nodes, &self.bary, y)
    }

    /// Row of derivatives of the Lagrange basis at `y`.
    pub fn basis_derivative_row(&self, y: f64) -> Vec<f64> {
        let row = self.basis_row(y);
        let n = self.len();
        (0..n)
            .map(|j| (0..n).map(|k| row[k] * self.diff[(k, j)]).sum())
            .collect()
    }

    /// Interpolation matrix from GLL nodal values to `points`.
    pub fn interpolation_to(&self, points: &[f64]) -> DMatrix<f64> {
        interpolation_matrix(&self.nodes, &self.bary, points)
    }

    /// Maps master nodes to the interval `[a, b]`.
    pub fn mapped_nodes(&self, a: f64, b: f64) -> Vec<f64> {
        self.nodes
            .iter()
            .map(|&x| 0.5 * (a + b) + 0.5 * (b - a) * x)
            .collect()
    }

    /// Nodal values to monomial coefficients `c_k` of `sum c_k x^k`.
    pub fn nodal_to_monomial(&self, values: &[f64]) -> Vec<f64> {
        let v = self.vandermonde();
        let rhs = DVector::from_column_slice(values);
        v.lu().solve(&rhs).expect("GLL Vandermonde is nonsingular").as_slice().to_vec()
    }

    /// Monomial coefficients to nodal values.
    pub fn monomial_to_nodal(&self, coeffs: &[f64]) -> Vec<f64> {
        self.nodes
            .iter()
            .map(|&x| coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c))
            .collect()
    }

    fn vandermonde(&self) -> DMatrix<f64> {
        let n = self.len();
        DMatrix::from_fn(n, n, |i, k| self.nodes[i].powi(k as i32))
    }
}

/// One of the four sides of the master square.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Side {
    /// `s = -1` (inner radial side).
    SMin,
    /// `s = +1` (outer radial side).
    SMax,
    /// `t = -1` (lower angular side).
    TMin,
    /// `t = +1` (upper angular side).
    TMax,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::SMin, Side::SMax, Side::TMin, Side::TMax];

    /// Local nodal indices along the side, ordered by the tangential coordinate.
    pub fn node_indices(self, n: usize) -> Vec<usize> {
        match self {
            Side::SMin => (0..n).map(|b| b * n).collect(),
            Side::SMax => (0..n).map(|b| b * n + n - 1).collect(),
            Side::TMin => (0..n).collect(),
            Side::TMax => (0..n).map(|a| (n - 1) * n + a).collect(),
        }
    }

    /// True when the side lies at constant `s` (tangent runs along `t`).
    pub fn is_constant_s(self) -> bool {
        matches!(self, Side::SMin | Side::SMax)
    }
}

/// Nodal values of one tensor-product polynomial on an element.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementFunction {
    pub element: usize,
    pub degree: usize,
    pub values: Vec<f64>,
}

/// Value and master-coordinate partial derivatives at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointEval {
    pub value: f64,
    pub ds: f64,
    pub dt: f64,
}

/// Trace of an element function on one side, at the side's GLL nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub values: Vec<f64>,
    /// Derivative along the side (master coordinate).
    pub tangential: Vec<f64>,
    /// Derivative in the master coordinate normal to the side (not outward-oriented).
    pub normal: Vec<f64>,
}

impl ElementFunction {
    /// Samples `f(s, t)` at the tensor GLL nodes of the master square.
    pub fn from_fn(element: usize, grid: &GllGrid, f: impl Fn(f64, f64) -> f64) -> Self {
        let n = grid.len();
        let mut values = vec![0.0; n * n];
        for b in 0..n {
            for a in 0..n {
                values[b * n + a] = f(grid.nodes[a], grid.nodes[b]);
            }
        }
        ElementFunction {
            element,
            degree: grid.degree,
            values,
        }
    }

    #[inline]
    pub fn at(&self, a: usize, b: usize) -> f64 {
        self.values[b * (self.degree + 1) + a]
    }
}

/// Barycentric value and gradient at a master point `(s, t)`.
pub fn eval_and_grad(grid: &GllGrid, f: &ElementFunction, s: f64, t: f64) -> PointEval {
    let ls = grid.basis_row(s);
    let lt = grid.basis_row(t);
    let dls = grid.basis_derivative_row(s);
    let dlt = grid.basis_derivative_row(t);
    let n = grid.len();
    let mut out = PointEval {
        value: 0.0,
        ds: 0.0,
        dt: 0.0,
    };
    for b in 0..n {
        for a in 0..n {
            let u = f.values[b * n + a];
            out.value += ls[a] * lt[b] * u;
            out.ds += dls[a] * lt[b] * u;
            out.dt += ls[a] * dlt[b] * u;
        }
    }
    out
}

/// Trace of `f` on `side`: values, tangential and normal master derivatives.
pub fn trace(grid: &GllGrid, f: &ElementFunction, side: Side) -> Trace {
    let n = grid.len();
    let d = &grid.diff;
    let mut values = vec![0.0; n];
    let mut tangential = vec![0.0; n];
    let mut normal = vec![0.0; n];
    for k in 0..n {
        // (a, b) of the k-th node along the side.
        let (a, b) = match side {
            Side::SMin => (0, k),
            Side::SMax => (n - 1, k),
            Side::TMin => (k, 0),
            Side::TMax => (k, n - 1),
        };
        values[k] = f.at(a, b);
        let mut ds = 0.0;
        let mut dt = 0.0;
        for m in 0..n {
            ds += d[(a, m)] * f.at(m, b);
            dt += d[(b, m)] * f.at(a, m);
        }
        if side.is_constant_s() {
            tangential[k] = dt;
            normal[k] = ds;
        } else {
            tangential[k] = ds;
            normal[k] = dt;
        }
    }
    Trace {
        values,
        tangential,
        normal,
    }
}
