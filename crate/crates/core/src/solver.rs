//! Normal equations `A U = h` with `A = JᵀJ`, `h = Jᵀd`, solved matrix-free
//! by preconditioned conjugate gradients.
//!
//! The functional is `F(U) = ‖JU - d‖² = UᵀAU - 2Uᵀh + ‖d‖²`, so its
//! gradient is `2(AU - h)` and `⟨AV, V⟩ = ‖JV‖²`.
//!
//! The preconditioner is block diagonal over elements. By default a block
//! is the element's own diagonal block of `A`. The alternative is the
//! tensor form `P_t⊗M_s + M_t⊗P_s` on the element's box, with `M` the GLL
//! mass matrix and `P = αM + βDᵀMD + γ(D²)ᵀMD²` in each direction,
//! inverted by fast diagonalization of the 1-D pencils `(P, M)`.
//! Vertex constants get the inverse diagonal of `A`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use rayon::prelude::*;

use crate::basis::GllGrid;
use crate::functional::{BlockKind, Discretization, Layout};
use crate::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-10;

pub fn default_max_iter(degree: usize) -> usize {
    50 * (degree + 1) * (degree + 1)
}

/// Flat unknown vector: element nodal values (`U_I`) then vertex constants (`U_B`).
#[derive(Debug, Clone, PartialEq)]
pub struct UnknownVector {
    pub values: Vec<f64>,
    pub boundary_start: usize,
}

impl UnknownVector {
    pub fn new(layout: &Layout, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), layout.len);
        UnknownVector {
            values,
            boundary_start: layout.constants_offset,
        }
    }

    pub fn interior(&self) -> &[f64] {
        &self.values[..self.boundary_start]
    }

    pub fn boundary(&self) -> &[f64] {
        &self.values[self.boundary_start..]
    }
}

/// Fixed-order dot product.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn gather(d: &Discretization, per_block: Vec<Vec<DVector<f64>>>) -> Vec<f64> {
    let mut out = vec![0.0; d.layout.len];
    for (b, parts) in d.blocks.iter().zip(per_block) {
        for (t, y) in b.terms.iter().zip(parts) {
            for (o, v) in out[t.offset..].iter_mut().zip(y.iter()) {
                *o += v;
            }
        }
    }
    out
}

/// `A v = Jᵀ J v`, accumulated block by block in a fixed order.
pub fn apply_normal_operator(d: &Discretization, v: &[f64]) -> Vec<f64> {
    let parts: Vec<Vec<DVector<f64>>> = d
        .blocks
        .par_iter()
        .map(|b| {
            let r = b.apply(v);
            b.terms.iter().map(|t| t.matrix.tr_mul(&r)).collect()
        })
        .collect();
    gather(d, parts)
}

/// `h = Jᵀ d`.
pub fn right_hand_side(d: &Discretization) -> Vec<f64> {
    let parts: Vec<Vec<DVector<f64>>> = d
        .blocks
        .par_iter()
        .map(|b| b.terms.iter().map(|t| t.matrix.tr_mul(&b.data)).collect())
        .collect();
    gather(d, parts)
}

/// Gradient of the functional, `2(AU - h)`.
pub fn gradient(d: &Discretization, u: &[f64]) -> Vec<f64> {
    let au = apply_normal_operator(d, u);
    let h = right_hand_side(d);
    au.iter().zip(&h).map(|(a, b)| 2.0 * (a - b)).collect()
}

/// Diagonal of `A`.
pub fn normal_diagonal(d: &Discretization) -> Vec<f64> {
    let mut out = vec![0.0; d.layout.len];
    for b in &d.blocks {
        b.scatter_diagonal(&mut out);
    }
    out
}

/// Fast-diagonalization factors of one 1-D pencil: `SᵀPS = Λ`, `SᵀMS = I`.
#[derive(Debug, Clone)]
pub struct Pencil {
    pub s: DMatrix<f64>,
    pub eig: Vec<f64>,
}

/// Coefficients of `P = αM + βK + γS` on one element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FormWeights {
    pub mass: f64,
    pub stiffness: f64,
    pub second: f64,
}

impl Pencil {
    /// Pencil of `(P, hM)` with `P = αhM + βK/h + γS/h³` on an interval of half width `h`.
    pub fn new(grid: &GllGrid, h: f64, w: FormWeights) -> Self {
        let (m, k, s2) = one_d_forms(grid);
        let mh = &m * h;
        let p = &mh * w.mass + k * (w.stiffness / h) + s2 * (w.second / (h * h * h));
        let isq = DMatrix::from_diagonal(&mh.diagonal().map(|x| 1.0 / x.sqrt()));
        let c = &isq * p * &isq;
        let c = (&c + c.transpose()) * 0.5;
        let es = SymmetricEigen::new(c);
        Pencil {
            s: isq * es.eigenvectors,
            eig: es.eigenvalues.iter().copied().collect(),
        }
    }
}

/// GLL mass, stiffness `DᵀMD` and second-derivative form `(D²)ᵀMD²` on the master interval.
pub fn one_d_forms(grid: &GllGrid) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let m = DMatrix::from_diagonal(&DVector::from_column_slice(&grid.weights));
    let d = &grid.diff;
    let d2 = d * d;
    let k = d.transpose() * &m * d;
    let s = d2.transpose() * &m * &d2;
    (m, k, s)
}

/// Form of the element blocks of the preconditioner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize)]
pub enum PreconditionerKind {
    /// The element's own diagonal block of `A`, factored densely.
    #[default]
    ElementBlocks,
    /// Separable H²-type form inverted by fast diagonalization.
    Separable,
}

impl std::str::FromStr for PreconditionerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "block" | "element" => Ok(PreconditionerKind::ElementBlocks),
            "separable" | "h2" => Ok(PreconditionerKind::Separable),
            _ => Err(Error::InvalidParameter(format!(
                "unknown preconditioner `{s}` (expected `block` or `separable`)"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
enum BlockFactor {
    Separable {
        radial: Pencil,
        angular: Pencil,
        weights: FormWeights,
    },
    Dense(Cholesky<f64, Dyn>),
}

#[derive(Debug, Clone)]
struct ElementBlock {
    offset: usize,
    factor: BlockFactor,
}

/// Block-diagonal preconditioner.
#[derive(Debug, Clone)]
pub struct Preconditioner {
    n: usize,
    blocks: Vec<ElementBlock>,
    /// (index, 1/A_ii) per vertex constant.
    constants: Vec<(usize, f64)>,
}

impl Preconditioner {
    /// Generalized eigenvalues of every 1-D pencil of the separable blocks.
    pub fn pencil_eigenvalues(&self) -> impl Iterator<Item = f64> + '_ {
        self.blocks.iter().flat_map(|b| match &b.factor {
            BlockFactor::Separable { radial, angular, .. } => radial.eig.iter().chain(&angular.eig).copied().collect(),
            BlockFactor::Dense(_) => Vec::new(),
        })
    }

    pub fn block_weights(&self) -> impl Iterator<Item = FormWeights> + '_ {
        self.blocks.iter().filter_map(|b| match &b.factor {
            BlockFactor::Separable { weights, .. } => Some(*weights),
            BlockFactor::Dense(_) => None,
        })
    }

    /// Applies one element block (not its inverse) to a local vector.
    pub fn apply_block(&self, element_block: usize, x: &[f64]) -> Vec<f64> {
        let n = self.n;
        match &self.blocks[element_block].factor {
            BlockFactor::Separable { radial: ps, angular: pt, .. } => {
                let x = DMatrix::from_column_slice(n, n, x);
                let ss = ps.s.clone().try_inverse().expect("invertible eigenbasis");
                let st = pt.s.clone().try_inverse().expect("invertible eigenbasis");
                let mut y = &ss * x * st.transpose();
                for b in 0..n {
                    for a in 0..n {
                        y[(a, b)] *= ps.eig[a] + pt.eig[b];
                    }
                }
                (ss.transpose() * y * &st).as_slice().to_vec()
            }
            BlockFactor::Dense(ch) => {
                let l = ch.l();
                (&l * (l.transpose() * DVector::from_column_slice(x))).as_slice().to_vec()
            }
        }
    }

    /// `z = B⁻¹ r`.
    pub fn apply(&self, r: &[f64]) -> Vec<f64> {
        let n = self.n;
        let npe = n * n;
        let mut z = vec![0.0; r.len()];
        let locals: Vec<DVector<f64>> = self
            .blocks
            .par_iter()
            .map(|blk| {
                let o = blk.offset;
                match &blk.factor {
                    BlockFactor::Separable { radial: ps, angular: pt, .. } => {
                        let x = DMatrix::from_column_slice(n, n, &r[o..o + npe]);
                        let mut y = ps.s.transpose() * x * &pt.s;
                        for b in 0..n {
                            for a in 0..n {
                                y[(a, b)] /= ps.eig[a] + pt.eig[b];
                            }
                        }
                        let out = &ps.s * y * pt.s.transpose();
                        DVector::from_column_slice(out.as_slice())
                    }
                    BlockFactor::Dense(ch) => ch.solve(&DVector::from_column_slice(&r[o..o + npe])),
                }
            })
            .collect();
        for (blk, loc) in self.blocks.iter().zip(locals) {
            z[blk.offset..blk.offset + npe].copy_from_slice(loc.as_slice());
        }
        for &(i, inv) in &self.constants {
            z[i] = r[i] * inv;
        }
        z
    }
}

// vᵀ(B⊗C)v for the layout v[b*n + a], B acting on b and C on a.
fn kron_form(b: &DMatrix<f64>, c: &DMatrix<f64>, v: &DVector<f64>, n: usize) -> f64 {
    let x = DMatrix::from_column_slice(n, n, v.as_slice());
    (c * &x * b.transpose()).dot(&x)
}

/// Builds the preconditioner.
///
/// Element blocks: the diagonal block `A_ee = Σ TᵀT` over the residual
/// terms acting on the element, Cholesky factored.
///
/// Separable blocks: `P_t⊗M_s + M_t⊗P_s` with the 1-D forms taken on the
/// element's box in working coordinates. The three weights of `P` are
/// fitted to `A_ee`: `γ` matches the trace of the PDE rows, `α` the value
/// on constants and `β` the mean value on the two coordinate functions.
/// Harmonic polynomials are only seen by the edge rows, so with a large
/// coefficient the separable form overweights them by about `p²`.
pub fn build_preconditioner(d: &Discretization, kind: PreconditionerKind) -> Result<Preconditioner> {
    let n = d.grid.len();
    let npe = n * n;
    let diag = normal_diagonal(d);
    let (m1, k1, s1) = one_d_forms(&d.grid);
    let mut terms: Vec<Vec<(bool, &DMatrix<f64>)>> = vec![Vec::new(); d.layout.len];
    for b in &d.blocks {
        let pde = matches!(b.kind, BlockKind::PdeSingular | BlockKind::PdeInterior);
        for t in &b.terms {
            if t.offset < d.layout.constants_offset {
                terms[t.offset].push((pde, &t.matrix));
            }
        }
    }
    let elements: Vec<_> = d.mesh.polynomial_elements().collect();
    let blocks = elements
        .par_iter()
        .map(|el| {
            let range = d.layout.element_range(el.id).expect("polynomial element");
            let own = &terms[range.start];
            if kind == PreconditionerKind::ElementBlocks {
                let mut a = DMatrix::<f64>::zeros(npe, npe);
                for (_, m) in own {
                    a += m.tr_mul(m);
                }
                let ch = Cholesky::new(a).ok_or(Error::NonSpdBlock { element: el.id })?;
                return Ok(ElementBlock {
                    offset: range.start,
                    factor: BlockFactor::Dense(ch),
                });
            }
            let form = |v: &DVector<f64>| own.iter().map(|(_, m)| (*m * v).norm_squared()).sum::<f64>();
            let (hs, ht) = el.half_widths();
            let (ms, ks, ss) = (&m1 * hs, &k1 / hs, &s1 / (hs * hs * hs));
            let (mt, kt, st) = (&m1 * ht, &k1 / ht, &s1 / (ht * ht * ht));
            let pde_trace: f64 = own.iter().filter(|(p, _)| *p).map(|(_, m)| m.norm_squared()).sum();
            let s_trace = st.trace() * ms.trace() + mt.trace() * ss.trace();
            let second = pde_trace / s_trace;
            let ones = DVector::from_element(npe, 1.0);
            let mass = form(&ones) / (2.0 * kron_form(&mt, &ms, &ones, n));
            let mut stiffness = 0.0;
            for radial in [true, false] {
                let v = DVector::from_fn(npe, |k, _| {
                    if radial {
                        d.grid.nodes[k % n] * hs
                    } else {
                        d.grid.nodes[k / n] * ht
                    }
                });
                let rest = form(&v) - 2.0 * mass * kron_form(&mt, &ms, &v, n);
                let k_part = kron_form(&kt, &ms, &v, n) + kron_form(&mt, &ks, &v, n);
                stiffness += 0.5 * (rest / k_part).max(0.0);
            }
            let weights = FormWeights { mass, stiffness, second };
            let radial = Pencil::new(&d.grid, hs, weights);
            let angular = Pencil::new(&d.grid, ht, weights);
            let spd = radial.eig.iter().chain(&angular.eig).all(|&e| e > 0.0 && e.is_finite());
            if !(mass > 0.0 && second > 0.0 && stiffness.is_finite()) || !spd {
                return Err(Error::NonSpdBlock { element: el.id });
            }
            Ok(ElementBlock {
                offset: range.start,
                factor: BlockFactor::Separable { radial, angular, weights },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let constants = (d.layout.constants_offset..d.layout.len)
        .map(|i| (i, if diag[i] > 0.0 { 1.0 / diag[i] } else { 1.0 }))
        .collect();
    Ok(Preconditioner { n, blocks, constants })
}

#[derive(Debug, Clone)]
pub struct PcgResult {
    pub solution: Vec<f64>,
    pub iterations: usize,
    /// Relative residual `‖r_k‖ / ‖h‖` after each iteration (index 0 is the start).
    pub residual_history: Vec<f64>,
    pub converged: bool,
}

/// Preconditioned conjugate gradients from a zero initial guess.
pub fn pcgm(
    apply_a: impl Fn(&[f64]) -> Vec<f64>,
    precond: impl Fn(&[f64]) -> Vec<f64>,
    h: &[f64],
    tol: f64,
    max_iter: usize,
    mut progress: impl FnMut(usize, f64),
) -> Result<PcgResult> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance must be positive, got {tol}")));
    }
    let len = h.len();
    let mut x = vec![0.0; len];
    let h_norm = dot(h, h).sqrt();
    if h_norm == 0.0 {
        return Ok(PcgResult {
            solution: x,
            iterations: 0,
            residual_history: vec![0.0],
            converged: true,
        });
    }
    let mut r = h.to_vec();
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut history = vec![1.0];
    for it in 1..=max_iter {
        let ap = apply_a(&p);
        let curv = dot(&p, &ap);
        if !(curv > 0.0) || !rz.is_finite() || rz <= 0.0 {
            return Err(Error::Breakdown { iteration: it });
        }
        let alpha = rz / curv;
        for i in 0..len {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rel = dot(&r, &r).sqrt() / h_norm;
        history.push(rel);
        progress(it, rel);
        if rel <= tol {
            return Ok(PcgResult {
                solution: x,
                iterations: it,
                residual_history: history,
                converged: true,
            });
        }
        z = precond(&r);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..len {
            p[i] = z[i] + beta * p[i];
        }
    }
    Ok(PcgResult {
        solution: x,
        iterations: max_iter,
        residual_history: history,
        converged: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub preconditioner: PreconditionerKind,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub u: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub residual_history: Vec<f64>,
    pub functional: f64,
}

/// Minimizes the functional of `d`.
pub fn solve(d: &Discretization, opts: SolveOptions, progress: impl FnMut(usize, f64)) -> Result<Solution> {
    let pre = build_preconditioner(d, opts.preconditioner)?;
    let h = right_hand_side(d);
    let res = pcgm(
        |v| apply_normal_operator(d, v),
        |r| pre.apply(r),
        &h,
        opts.tol,
        opts.max_iter,
        progress,
    )?;
    let functional = d.total_functional(&res.solution);
    Ok(Solution {
        u: res.solution,
        iterations: res.iterations,
        converged: res.converged,
        residual_history: res.residual_history,
        functional,
    })
}
