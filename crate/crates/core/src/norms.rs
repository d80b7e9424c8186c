//! L² and H^{1/2} norms of polynomial traces on an edge.
//!
//! The H^{1/2} seminorm `∫∫ |u(x) - u(x')|² / |x - x'|² dx dx'` of a
//! polynomial `u` of degree W has a polynomial integrand: with
//! `u(x) - u(x') = (x - x') R(x, x')` it equals `∫∫ R²`, where `R` has degree
//! `W - 1` in each variable. Tensor Gauss quadrature with W+1 points per
//! variable integrates it exactly. On the diagonal `R(x, x) = u'(x)`.
//!
//! Every norm here is also exposed as a linear map from GLL nodal values to a
//! sample vector whose squared Euclidean length is the squared norm; the
//! least-squares functional is assembled from these maps.

use nalgebra::{DMatrix, DVector};

use crate::basis::{gauss_legendre, gll_grid, GllGrid};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub a: f64,
    pub b: f64,
}

impl Interval {
    pub fn new(a: f64, b: f64) -> Self {
        Interval { a, b }
    }

    pub fn length(&self) -> f64 {
        self.b - self.a
    }
}

/// Gauss quadrature tables for traces given by GLL nodal values.
#[derive(Debug, Clone)]
pub struct EdgeQuadrature {
    pub gauss_nodes: Vec<f64>,
    pub gauss_weights: Vec<f64>,
    /// GLL nodal values to values at Gauss points.
    pub interp: DMatrix<f64>,
    /// Weighted divided-difference samples over the upper triangle of the
    /// Gauss tensor grid (diagonal included). Independent of the interval
    /// length: the seminorm is invariant under affine rescaling.
    seminorm: DMatrix<f64>,
}

impl EdgeQuadrature {
    pub fn new(grid: &GllGrid) -> Self {
        let n = grid.len();
        let (gx, gw) = gauss_legendre(n);
        let interp = grid.interpolation_to(&gx);
        let deriv = &interp * &grid.diff;
        let rows = n * (n + 1) / 2;
        let mut seminorm = DMatrix::zeros(rows, n);
        let mut r = 0;
        for i in 0..n {
            for j in i..n {
                if i == j {
                    let s = gw[i];
                    for c in 0..n {
                        seminorm[(r, c)] = s * deriv[(i, c)];
                    }
                } else {
                    // Off-diagonal pairs appear twice in the double integral.
                    let s = (2.0 * gw[i] * gw[j]).sqrt() / (gx[i] - gx[j]);
                    for c in 0..n {
                        seminorm[(r, c)] = s * (interp[(i, c)] - interp[(j, c)]);
                    }
                }
                r += 1;
            }
        }
        EdgeQuadrature {
            gauss_nodes: gx,
            gauss_weights: gw,
            interp,
            seminorm,
        }
    }

    pub fn trace_len(&self) -> usize {
        self.interp.ncols()
    }

    /// Map whose output has squared length `∫ u²` over an interval of `length`.
    pub fn l2_map(&self, length: f64) -> DMatrix<f64> {
        let mut m = self.interp.clone();
        for (i, &w) in self.gauss_weights.iter().enumerate() {
            let s = (0.5 * w * length).sqrt();
            m.row_mut(i).scale_mut(s);
        }
        m
    }

    /// Map whose output has squared length equal to the H^{1/2} seminorm squared.
    pub fn seminorm_map(&self) -> &DMatrix<f64> {
        &self.seminorm
    }

    /// Map for the full H^{1/2} norm (L² part stacked over the seminorm part).
    pub fn half_map(&self, length: f64) -> DMatrix<f64> {
        let l2 = self.l2_map(length);
        let s = &self.seminorm;
        let n = self.trace_len();
        let mut m = DMatrix::zeros(l2.nrows() + s.nrows(), n);
        m.rows_mut(0, l2.nrows()).copy_from(&l2);
        m.rows_mut(l2.nrows(), s.nrows()).copy_from(s);
        m
    }

    pub fn half_rows(&self) -> usize {
        self.gauss_nodes.len() + self.seminorm.nrows()
    }
}

fn quadrature_for(values: &[f64]) -> EdgeQuadrature {
    let w = values.len().saturating_sub(1).max(1);
    let grid = gll_grid(w).expect("degree >= 1");
    assert_eq!(grid.len(), values.len(), "trace needs at least two nodal values");
    EdgeQuadrature::new(&grid)
}

fn sq_len(m: &DMatrix<f64>, v: &[f64]) -> f64 {
    (m * DVector::from_column_slice(v)).norm_squared()
}

/// Squared L² norm of the polynomial with GLL nodal `values` on `interval`.
pub fn l2_sq(values: &[f64], interval: Interval) -> f64 {
    sq_len(&quadrature_for(values).l2_map(interval.length()), values)
}

/// Squared H^{1/2} seminorm (the double-integral part only).
pub fn half_seminorm_sq(values: &[f64], _interval: Interval) -> f64 {
    sq_len(quadrature_for(values).seminorm_map(), values)
}

/// Squared H^{1/2} norm: L² part plus seminorm.
pub fn half_norm_sq(values: &[f64], interval: Interval) -> f64 {
    l2_sq(values, interval) + half_seminorm_sq(values, interval)
}

/// Trace values and tangential derivative at GLL nodes along an edge.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeTrace {
    pub values: Vec<f64>,
    pub tangential: Vec<f64>,
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// `‖[u]‖₀² + ‖[∂_T u]‖²_{1/2}` on a shared edge.
pub fn jump_three_half_sq(left: &EdgeTrace, right: &EdgeTrace, interval: Interval) -> f64 {
    l2_sq(&diff(&left.values, &right.values), interval)
        + half_norm_sq(&diff(&left.tangential, &right.tangential), interval)
}

/// `‖p_right ∂_n u_right - p_left ∂_n u_left‖²_{1/2}`.
pub fn interface_flux_jump_sq(
    p_left: f64,
    p_right: f64,
    dn_left: &[f64],
    dn_right: &[f64],
    interval: Interval,
) -> f64 {
    let j: Vec<f64> = dn_left
        .iter()
        .zip(dn_right)
        .map(|(l, r)| p_right * r - p_left * l)
        .collect();
    half_norm_sq(&j, interval)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn sample(w: usize, iv: Interval, f: impl Fn(f64) -> f64) -> Vec<f64> {
        gll_grid(w).unwrap().mapped_nodes(iv.a, iv.b).into_iter().map(f).collect()
    }

    #[test]
    fn constant_trace() {
        let iv = Interval::new(0.0, 2.5);
        let v = sample(4, iv, |_| 3.0);
        assert_abs_diff_eq!(l2_sq(&v, iv), 9.0 * 2.5, epsilon = 1e-12);
        assert_abs_diff_eq!(half_seminorm_sq(&v, iv), 0.0, epsilon = 1e-24);
    }

    #[test]
    fn closed_forms_on_unit_interval() {
        let iv = Interval::new(0.0, 1.0);
        for w in 2..=6 {
            assert_abs_diff_eq!(l2_sq(&sample(w, iv, |x| x), iv), 1.0 / 3.0, epsilon = 1e-14);
            assert_abs_diff_eq!(half_seminorm_sq(&sample(w, iv, |x| x), iv), 1.0, epsilon = 1e-13);
            assert_abs_diff_eq!(
                half_seminorm_sq(&sample(w, iv, |x| x * x), iv),
                7.0 / 6.0,
                epsilon = 1e-13
            );
        }
    }

    #[test]
    fn jump_norms() {
        let iv = Interval::new(-1.0, 2.0);
        let left = EdgeTrace {
            values: sample(3, iv, |x| x * x + 2.0),
            tangential: sample(3, iv, |x| 2.0 * x),
        };
        assert_abs_diff_eq!(jump_three_half_sq(&left, &left, iv), 0.0, epsilon = 1e-24);
        let right = EdgeTrace {
            values: sample(3, iv, |x| x * x - 1.0),
            tangential: left.tangential.clone(),
        };
        assert_abs_diff_eq!(jump_three_half_sq(&left, &right, iv), 9.0 * 3.0, epsilon = 1e-11);
        let ones = vec![1.0; 4];
        assert_abs_diff_eq!(interface_flux_jump_sq(1.0, 2.0, &ones, &ones, iv), 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(interface_flux_jump_sq(3.0, 3.0, &ones, &ones, iv), 0.0, epsilon = 1e-24);
    }

    #[test]
    fn jump_functionals_symmetric() {
        let iv = Interval::new(0.3, 1.1);
        let a = EdgeTrace {
            values: sample(4, iv, |x| x.powi(3)),
            tangential: sample(4, iv, |x| 3.0 * x * x),
        };
        let b = EdgeTrace {
            values: sample(4, iv, |x| 1.0 - x),
            tangential: sample(4, iv, |_| -1.0),
        };
        assert_abs_diff_eq!(
            jump_three_half_sq(&a, &b, iv),
            jump_three_half_sq(&b, &a, iv),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            interface_flux_jump_sq(2.0, 5.0, &a.values, &b.values, iv),
            interface_flux_jump_sq(5.0, 2.0, &b.values, &a.values, iv),
            epsilon = 1e-12
        );
    }

    #[test]
    fn norms_vanish_only_for_zero_trace() {
        let iv = Interval::new(0.0, 1.0);
        let w = 5;
        for k in 0..=w {
            let v = sample(w, iv, |x| x.powi(k as i32));
            assert!(l2_sq(&v, iv) > 0.0);
            assert!(half_norm_sq(&v, iv) > 0.0);
            if k > 0 {
                assert!(half_seminorm_sq(&v, iv) > 0.0);
            }
        }
        assert_eq!(half_norm_sq(&vec![0.0; w + 1], iv), 0.0);
    }
}
