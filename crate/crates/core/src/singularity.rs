//! Leading singular exponent and angular profile of an interface corner.
//!
//! Near a singular point the solution behaves like `r^λ W(θ)` where, on each
//! sector, `W(θ) = C cos λθ + D sin λθ`. Matching `W` and `p W'` across every
//! interior breakpoint and imposing the closure conditions gives a square
//! homogeneous system in the `(C_i, D_i)`; λ is admissible where its
//! determinant vanishes.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::problem::{Closure, EndKind, SectorPartition};

/// Default upper end of the eigenvalue search interval.
pub const DEFAULT_SEARCH_MAX: f64 = 2.0;
pub const DEFAULT_SCAN_STEP: f64 = 1e-3;
pub const DEFAULT_ROOT_TOL: f64 = 1e-12;

/// Rows of `W` and `W'/λ` at angle `theta` for one sector's `(C, D)`.
#[inline]
fn value_row(lambda: f64, theta: f64) -> (f64, f64) {
    ((lambda * theta).cos(), (lambda * theta).sin())
}

#[inline]
fn slope_row(lambda: f64, theta: f64) -> (f64, f64) {
    (-(lambda * theta).sin(), (lambda * theta).cos())
}

/// Coefficient matrix of the homogeneous matching system at `lambda`.
///
/// Unknown order is `(C_0, D_0, C_1, D_1, ...)`. Rows: for each interior
/// breakpoint, continuity of `W` then of `p W'`; then the closure rows (start
/// and end conditions, or the periodic value and flux conditions across the
/// seam). Derivative rows are divided by λ so that entries are bounded
/// trigonometric values.
pub fn system_matrix(lambda: f64, partition: &SectorPartition) -> DMatrix<f64> {
    let m = partition.sector_count();
    let th = &partition.breakpoints;
    let p = &partition.coefficients;
    let mut a = DMatrix::zeros(2 * m, 2 * m);
    let mut row = 0;
    for b in 1..m {
        let (c, s) = value_row(lambda, th[b]);
        a[(row, 2 * (b - 1))] = c;
        a[(row, 2 * (b - 1) + 1)] = s;
        a[(row, 2 * b)] = -c;
        a[(row, 2 * b + 1)] = -s;
        row += 1;
        let (c, s) = slope_row(lambda, th[b]);
        a[(row, 2 * (b - 1))] = p[b - 1] * c;
        a[(row, 2 * (b - 1) + 1)] = p[b - 1] * s;
        a[(row, 2 * b)] = -p[b] * c;
        a[(row, 2 * b + 1)] = -p[b] * s;
        row += 1;
    }
    let last = 2 * (m - 1);
    match partition.closure {
        Closure::Ends { start, end } => {
            let end_row = |kind: EndKind, theta: f64| match kind {
                EndKind::Dirichlet => value_row(lambda, theta),
                EndKind::Neumann => slope_row(lambda, theta),
            };
            let (c, s) = end_row(start, th[0]);
            a[(row, 0)] = c;
            a[(row, 1)] = s;
            row += 1;
            let (c, s) = end_row(end, th[m]);
            a[(row, last)] = c;
            a[(row, last + 1)] = s;
        }
        Closure::Periodic => {
            let (c0, s0) = value_row(lambda, th[0]);
            let (c1, s1) = value_row(lambda, th[m]);
            a[(row, 0)] += c0;
            a[(row, 1)] += s0;
            a[(row, last)] -= c1;
            a[(row, last + 1)] -= s1;
            row += 1;
            let (c0, s0) = slope_row(lambda, th[0]);
            let (c1, s1) = slope_row(lambda, th[m]);
            a[(row, 0)] += p[0] * c0;
            a[(row, 1)] += p[0] * s0;
            a[(row, last)] -= p[m - 1] * c1;
            a[(row, last + 1)] -= p[m - 1] * s1;
        }
    }
    a
}

/// Determinant of the matching system; zero exactly at admissible exponents.
pub fn eigen_residual(lambda: f64, partition: &SectorPartition) -> f64 {
    system_matrix(lambda, partition).determinant()
}

/// Smallest root of [`eigen_residual`] in `(tol, DEFAULT_SEARCH_MAX]`.
pub fn smallest_eigenvalue(partition: &SectorPartition, scan_step: f64, tol: f64) -> Result<f64> {
    smallest_eigenvalue_in(partition, DEFAULT_SEARCH_MAX, scan_step, tol)
}

/// Sign-change scan with step `scan_step` over `(tol, hi]`, then bisection to `tol`.
pub fn smallest_eigenvalue_in(
    partition: &SectorPartition,
    hi: f64,
    scan_step: f64,
    tol: f64,
) -> Result<f64> {
    if !(scan_step > 0.0 && tol > 0.0 && hi > tol) {
        return Err(Error::InvalidParameter(format!(
            "scan_step = {scan_step}, tol = {tol}, hi = {hi}"
        )));
    }
    let f = |x: f64| eigen_residual(x, partition);
    let mut a = tol;
    let mut fa = f(a);
    let steps = ((hi - tol) / scan_step).ceil() as usize;
    for k in 1..=steps {
        let b = (tol + k as f64 * scan_step).min(hi);
        let fb = f(b);
        if fb == 0.0 {
            return Ok(b);
        }
        if fa.signum() != fb.signum() && fa != 0.0 {
            return Ok(bisect(f, a, b, fa, tol));
        }
        a = b;
        fa = fb;
    }
    Err(Error::NoEigenvalue { lo: 0.0, hi })
}

fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, mut fa: f64, tol: f64) -> f64 {
    while b - a > tol {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Unknown fixed to 1 when extracting the null vector: the cosine coefficient
/// of the last sector for end-closed spans, its sine coefficient for periodic
/// ones.
pub fn normalization_index(partition: &SectorPartition) -> usize {
    let last = 2 * (partition.sector_count() - 1);
    match partition.closure {
        Closure::Ends { .. } => last,
        Closure::Periodic => last + 1,
    }
}

/// Nontrivial null vector of the matching system at `lambda0`, as per-sector
/// `(C_i, D_i)` pairs.
pub fn sector_coefficients(lambda0: f64, partition: &SectorPartition) -> Result<Vec<(f64, f64)>> {
    let a = system_matrix(lambda0, partition);
    let n = a.nrows();
    let sv = a.clone().svd(false, false).singular_values;
    let (smax, smin) = (sv.max(), sv.min());
    let ratio = if smax > 0.0 { smin / smax } else { 0.0 };
    if ratio > 1e-6 {
        return Err(Error::NotAnEigenvalue {
            lambda: lambda0,
            ratio,
        });
    }
    let k = normalization_index(partition);
    let x = fixed_entry_solve(&a, k).unwrap_or_else(|| smallest_singular_direction(&a, k));
    Ok((0..n / 2).map(|i| (x[2 * i], x[2 * i + 1])).collect())
}

/// Fixes `x_k = 1` and solves the remaining overdetermined-but-consistent
/// system by Gaussian elimination with partial pivoting.
fn fixed_entry_solve(a: &DMatrix<f64>, k: usize) -> Option<DVector<f64>> {
    let n = a.nrows();
    let cols: Vec<usize> = (0..n).filter(|&j| j != k).collect();
    let mut m = DMatrix::zeros(n, n);
    for r in 0..n {
        for (c, &j) in cols.iter().enumerate() {
            m[(r, c)] = a[(r, j)];
        }
        m[(r, n - 1)] = -a[(r, k)];
    }
    let scale = a.amax().max(f64::MIN_POSITIVE);
    for c in 0..n - 1 {
        let (piv, val) = (c..n)
            .map(|r| (r, m[(r, c)].abs()))
            .max_by(|x, y| x.1.total_cmp(&y.1))?;
        if val < 1e-10 * scale {
            return None;
        }
        m.swap_rows(c, piv);
        for r in c + 1..n {
            let f = m[(r, c)] / m[(c, c)];
            if f != 0.0 {
                for j in c..n {
                    m[(r, j)] -= f * m[(c, j)];
                }
            }
        }
    }
    let mut y = vec![0.0; n - 1];
    for c in (0..n - 1).rev() {
        let mut s = m[(c, n - 1)];
        for j in c + 1..n - 1 {
            s -= m[(c, j)] * y[j];
        }
        y[c] = s / m[(c, c)];
    }
    let mut x = DVector::zeros(n);
    x[k] = 1.0;
    for (c, &j) in cols.iter().enumerate() {
        x[j] = y[c];
    }
    if !x.iter().all(|v| v.is_finite()) {
        return None;
    }
    let resid = (a * &x).amax();
    (resid <= 1e-9 * scale * x.amax()).then_some(x)
}

fn smallest_singular_direction(a: &DMatrix<f64>, k: usize) -> DVector<f64> {
    let svd = a.clone().svd(false, true);
    let vt = svd.v_t.expect("requested V^T");
    let imin = svd.singular_values.imin();
    let v: DVector<f64> = vt.row(imin).transpose();
    let pivot = if v[k].abs() > 1e-8 * v.amax() {
        v[k]
    } else {
        v[v.iamax()]
    };
    v / pivot
}

/// Leading singular function `u = r^λ₀ W(θ)` of a partition.
#[derive(Debug, Clone, PartialEq)]
pub struct SingularSolution {
    pub lambda0: f64,
    pub sector_coeffs: Vec<(f64, f64)>,
    pub partition: SectorPartition,
}

/// Value and polar gradient components `(∂_r u, r⁻¹ ∂_θ u)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingularEval {
    pub value: f64,
    pub grad_r: f64,
    pub grad_theta: f64,
    /// Set at `r = 0` when the gradient blows up (λ₀ < 1).
    pub gradient_unbounded: bool,
}

impl SingularSolution {
    /// Computes λ₀ with the default search settings and the normalized
    /// coefficients.
    pub fn leading(partition: &SectorPartition) -> Result<Self> {
        let lambda0 = smallest_eigenvalue(partition, DEFAULT_SCAN_STEP, DEFAULT_ROOT_TOL)?;
        Self::with_lambda(partition, lambda0)
    }

    pub fn with_lambda(partition: &SectorPartition, lambda0: f64) -> Result<Self> {
        let sector_coeffs = sector_coefficients(lambda0, partition)?;
        Ok(SingularSolution {
            lambda0,
            sector_coeffs,
            partition: partition.clone(),
        })
    }

    fn sector(&self, theta: f64) -> Result<(usize, f64)> {
        let t = self
            .partition
            .normalize_angle(theta)
            .ok_or_else(|| Error::OutsideDomain(format!("θ = {theta} outside the partition span")))?;
        let i = self.partition.sector_index(t).expect("normalized angle");
        Ok((i, t))
    }

    /// `W(θ)` and `W'(θ)` using the sector containing θ (lower sector on ties).
    pub fn angular(&self, theta: f64) -> Result<(f64, f64)> {
        let (i, t) = self.sector(theta)?;
        Ok(self.angular_in(i, t))
    }

    /// `W` and `W'` evaluated with the coefficients of sector `i`.
    pub fn angular_in(&self, i: usize, theta: f64) -> (f64, f64) {
        let l = self.lambda0;
        let (c, d) = self.sector_coeffs[i];
        let (s, co) = (l * theta).sin_cos();
        (c * co + d * s, l * (-c * s + d * co))
    }

    pub fn evaluate(&self, r: f64, theta: f64) -> Result<SingularEval> {
        if r < 0.0 || !r.is_finite() {
            return Err(Error::OutsideDomain(format!("r = {r}")));
        }
        let (w, dw) = self.angular(theta)?;
        let l = self.lambda0;
        if r == 0.0 {
            let (gr, gt, unbounded) = if l < 1.0 {
                (f64::INFINITY, f64::INFINITY, true)
            } else if l == 1.0 {
                (w, dw, false)
            } else {
                (0.0, 0.0, false)
            };
            return Ok(SingularEval {
                value: 0.0,
                grad_r: gr,
                grad_theta: gt,
                gradient_unbounded: unbounded,
            });
        }
        let rl = r.powf(l);
        Ok(SingularEval {
            value: rl * w,
            grad_r: l * rl / r * w,
            grad_theta: rl / r * dw,
            gradient_unbounded: false,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn closed_form(p: f64, l: f64) -> f64 {
        (1.0 - p) / 2.0 + ((p - 1.0) / 2.0 + 1.0) * (l * PI / 2.0).cos()
    }

    #[test]
    fn smooth_quarter_sector_has_unit_exponent() {
        let part = SectorPartition::quarter_with_diagonal_interface(1.0);
        assert_abs_diff_eq!(eigen_residual(1.0, &part), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn residual_small_at_table_value() {
        let part = SectorPartition::quarter_with_diagonal_interface(5.0);
        let at_root = eigen_residual(0.53544092, &part).abs();
        assert!(at_root < 1e-6 * eigen_residual(0.4, &part).abs());
    }

    #[test]
    fn residual_at_two_matches_substitution() {
        let p = 5.0;
        let part = SectorPartition::quarter_with_diagonal_interface(p);
        let v = eigen_residual(2.0, &part);
        // cos π = -1 in the closed form: (1-p)/2 - ((p-1)/2 + 1) = -p.
        let expected = (1.0 - p) / 2.0 - ((p - 1.0) / 2.0 + 1.0);
        assert_abs_diff_eq!(v / closed_form(p, 2.0), v / expected, epsilon = 1e-12);
        assert!(v.abs() > 1.0);
    }

    #[test]
    fn residual_proportional_to_closed_form() {
        for p in [5.0, 10.0, 30.0, 50.0, 100.0] {
            let part = SectorPartition::quarter_with_diagonal_interface(p);
            let ratios: Vec<f64> = [0.3, 0.7, 1.1]
                .iter()
                .map(|&l| eigen_residual(l, &part) / closed_form(p, l))
                .collect();
            assert!(ratios[0].abs() > 0.0);
            for r in &ratios[1..] {
                assert_abs_diff_eq!(*r, ratios[0], epsilon = 1e-9 * ratios[0].abs());
            }
        }
    }

    #[test]
    fn closed_form_root_agrees_with_scan() {
        for p in [5.0, 10.0, 30.0, 50.0, 100.0] {
            let part = SectorPartition::quarter_with_diagonal_interface(p);
            let scan = smallest_eigenvalue(&part, DEFAULT_SCAN_STEP, DEFAULT_ROOT_TOL).unwrap();
            let exact = 2.0 / PI * ((p - 1.0) / (p + 1.0)).acos();
            assert_abs_diff_eq!(scan, exact, epsilon = 1e-10);
        }
    }

    #[test]
    fn strong_singularity_table_value() {
        let part = SectorPartition::quarter_with_diagonal_interface(100.0);
        let l = smallest_eigenvalue(&part, DEFAULT_SCAN_STEP, DEFAULT_ROOT_TOL).unwrap();
        assert_abs_diff_eq!(l, 0.12690206, epsilon = 1e-7);
    }

    #[test]
    fn no_root_below_tiny_bound() {
        let part = SectorPartition::quarter_with_diagonal_interface(5.0);
        assert!(matches!(
            smallest_eigenvalue_in(&part, 0.3, 1e-3, 1e-12),
            Err(Error::NoEigenvalue { .. })
        ));
    }

    #[test]
    fn quarter_sector_coefficients_follow_closed_forms() {
        let part = SectorPartition::quarter_with_diagonal_interface(5.0);
        let sol = SingularSolution::leading(&part).unwrap();
        let l = sol.lambda0;
        let (c1, c2) = sol.sector_coeffs[0];
        let (c3, c4) = sol.sector_coeffs[1];
        assert_abs_diff_eq!(c1, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c3, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c4, (l * PI / 2.0).tan(), epsilon = 1e-9);
        assert_abs_diff_eq!(c2, 1.0 / (l * PI / 4.0).tan() + (l * PI / 2.0).tan(), epsilon = 1e-9);
    }

    #[test]
    fn smooth_case_is_continuous_sine() {
        let part = SectorPartition::quarter_with_diagonal_interface(1.0);
        let sol = SingularSolution::with_lambda(&part, 1.0).unwrap();
        let (c1, c2) = sol.sector_coeffs[0];
        let (c3, c4) = sol.sector_coeffs[1];
        assert_abs_diff_eq!(c1, 0.0, epsilon = 1e-12);
        // sin θ continuous across π/4 with C₃ = 1, C₄ = tan(π/2) blows up,
        // so the fallback normalizes on the dominant entry instead.
        let w_lo = c1 * (PI / 4.0).cos() + c2 * (PI / 4.0).sin();
        let w_hi = c3 * (PI / 4.0).cos() + c4 * (PI / 4.0).sin();
        assert_abs_diff_eq!(w_lo, w_hi, epsilon = 1e-9 * w_lo.abs().max(1.0));
    }

    #[test]
    fn crossing_interfaces_coefficients_satisfy_matching() {
        for p in [5.0, 500.0] {
            let part = SectorPartition::crossing_interfaces(p);
            let sol = SingularSolution::leading(&part).unwrap();
            let l = sol.lambda0;
            let (c3, c4) = sol.sector_coeffs[1];
            assert_abs_diff_eq!(c4, 1.0, epsilon = 1e-15);
            // Closed form for C₃ with C₄ = 1.
            let (sh, ch) = ((l * PI / 2.0).sin(), (l * PI / 2.0).cos());
            let (s2, c2) = ((2.0 * PI * l).sin(), (2.0 * PI * l).cos());
            let c3_formula = (sh - p * c2 * sh - s2 * ch) / (c2 * ch - p * s2 * sh - ch);
            assert_abs_diff_eq!(c3, c3_formula, epsilon = 1e-8 * c3_formula.abs().max(1.0));
            let (w0, dw0) = sol.angular_in(0, 0.0);
            let (w2, dw2) = sol.angular_in(1, 2.0 * PI);
            assert_abs_diff_eq!(w0, w2, epsilon = 1e-9);
            assert_abs_diff_eq!(dw0, p * dw2, epsilon = 1e-9 * p);
        }
    }

    #[test]
    fn matching_conditions_hold() {
        for part in [
            SectorPartition::quarter_with_diagonal_interface(50.0),
            SectorPartition::crossing_interfaces(30.0),
        ] {
            let sol = SingularSolution::leading(&part).unwrap();
            for b in 1..part.sector_count() {
                let th = part.breakpoints[b];
                let (wl, dl) = sol.angular_in(b - 1, th);
                let (wr, dr) = sol.angular_in(b, th);
                assert_abs_diff_eq!(wl, wr, epsilon = 1e-10);
                assert_abs_diff_eq!(
                    part.coefficients[b - 1] * dl,
                    part.coefficients[b] * dr,
                    epsilon = 1e-9
                );
            }
            // Sector-wise, W'' = -λ² W exactly for the trigonometric ansatz.
            let l = sol.lambda0;
            for (i, &(c, d)) in sol.sector_coeffs.iter().enumerate() {
                let th = 0.5 * (part.breakpoints[i] + part.breakpoints[i + 1]);
                let w = c * (l * th).cos() + d * (l * th).sin();
                let w2 = -l * l * (c * (l * th).cos() + d * (l * th).sin());
                assert_abs_diff_eq!(l * l * w + w2, 0.0, epsilon = 1e-12 * w.abs().max(1.0));
            }
        }
    }

    #[test]
    fn not_an_eigenvalue_rejected() {
        let part = SectorPartition::quarter_with_diagonal_interface(5.0);
        assert!(matches!(
            sector_coefficients(0.9, &part),
            Err(Error::NotAnEigenvalue { .. })
        ));
    }

    #[test]
    fn evaluation() {
        let part = SectorPartition::quarter_with_diagonal_interface(5.0);
        let sol = SingularSolution::leading(&part).unwrap();
        let l = sol.lambda0;
        let origin = sol.evaluate(0.0, 0.3).unwrap();
        assert_eq!(origin.value, 0.0);
        assert!(origin.gradient_unbounded);
        let eps = 1e-8;
        let lo = sol.evaluate(0.7, PI / 4.0 - eps).unwrap().value;
        let hi = sol.evaluate(0.7, PI / 4.0 + eps).unwrap().value;
        assert!((lo - hi).abs() < 1e-7);
        let top = sol.evaluate(1.0, PI / 2.0).unwrap().value;
        let direct = (l * PI / 2.0).cos() + (l * PI / 2.0).tan() * (l * PI / 2.0).sin();
        assert_abs_diff_eq!(top, direct, epsilon = 1e-12);
        assert_abs_diff_eq!(top, 1.0 / (l * PI / 2.0).cos(), epsilon = 1e-12);
        assert!(sol.evaluate(0.5, 2.0).is_err());
    }
}
