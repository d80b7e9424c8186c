//! Weighted least-squares functional as a list of affine residual blocks.
//!
//! Each block is `r_b(U) = Σ_t M_t U[offset_t..] - d_b`, with the weights and
//! quadrature already folded into `M_t` and `d_b`, so that the functional is
//! `F(U) = Σ_b ‖r_b(U)‖²`. Block shapes depend only on the mesh and degree.
//!
//! In the graded disc the residuals are posed in `(τ, θ)`: the operator is
//! `-(u_ττ + u_θθ)` against `e^{2τ} f / p`, jumps are measured with the `τ`
//! and `θ` derivatives, and every block carries `d^{-2α}` (edges) or
//! `σ_j^{-2α}` (layers). In the annulus the residuals are posed in `(r, θ)`
//! without weights.
//!
//! PDE rows are divided by the element's coefficient. Left at `p` times the
//! Laplacian they outweigh the jump rows by `p²`, and at low degree a large
//! coefficient makes the minimizer give up continuity.

use nalgebra::{DMatrix, DVector, DVectorView};
use rayon::prelude::*;

use crate::basis::{GllGrid, Side};
use crate::mesh::{Chart, Edge, EdgeClass, EdgeShape, Element, Mesh};
use crate::norms::EdgeQuadrature;
use crate::problem::{BoundaryKind, Point, ProblemSpec};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightConfig {
    pub alpha: f64,
}

impl WeightConfig {
    /// Default exponent `α = λ₀ / 2`.
    pub fn for_exponent(lambda0: f64) -> Self {
        WeightConfig {
            alpha: 0.5 * lambda0,
        }
    }

    pub fn layer_weight(&self, sigma_j: f64) -> f64 {
        sigma_j.powf(-2.0 * self.alpha)
    }

    pub fn edge_weight(&self, dist: f64) -> f64 {
        dist.powf(-2.0 * self.alpha)
    }
}

/// Positions of element nodal values and vertex constants in the flat
/// unknown vector: polynomial elements in id order, then the constants.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub nodes_per_element: usize,
    pub offsets: Vec<Option<usize>>,
    pub constants_offset: usize,
    pub vertex_count: usize,
    pub len: usize,
}

impl Layout {
    pub fn new(mesh: &Mesh, grid: &GllGrid) -> Self {
        let npe = grid.len() * grid.len();
        let mut next = 0;
        let offsets = mesh
            .elements
            .iter()
            .map(|e| {
                e.has_polynomial().then(|| {
                    let o = next;
                    next += npe;
                    o
                })
            })
            .collect();
        Layout {
            nodes_per_element: npe,
            offsets,
            constants_offset: next,
            vertex_count: 1,
            len: next + 1,
        }
    }

    pub fn element_range(&self, id: usize) -> Option<std::ops::Range<usize>> {
        self.offsets[id].map(|o| o..o + self.nodes_per_element)
    }

    pub fn constant_index(&self, vertex: usize) -> usize {
        self.constants_offset + vertex
    }

    /// Number of element unknowns (`U_I`); the rest are constants (`U_B`).
    pub fn interior_len(&self) -> usize {
        self.constants_offset
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum BlockKind {
    PdeSingular,
    PdeInterior,
    InterElementJump,
    InterfaceJump,
    DirichletResidual,
    NeumannResidual,
    VertexPenalty,
}

#[derive(Debug, Clone)]
pub struct Term {
    pub offset: usize,
    pub matrix: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct Block {
    pub kind: BlockKind,
    /// Element id for volume blocks, edge id for edge blocks, vertex index
    /// for penalties.
    pub tag: usize,
    pub terms: Vec<Term>,
    pub data: DVector<f64>,
}

impl Block {
    pub fn rows(&self) -> usize {
        self.data.len()
    }

    /// Linear part `J_b u`.
    pub fn apply(&self, u: &[f64]) -> DVector<f64> {
        let mut out = DVector::zeros(self.rows());
        for t in &self.terms {
            let x = DVectorView::from_slice(&u[t.offset..t.offset + t.matrix.ncols()], t.matrix.ncols());
            out.gemv(1.0, &t.matrix, &x, 1.0);
        }
        out
    }

    pub fn residual(&self, u: &[f64]) -> DVector<f64> {
        self.apply(u) - &self.data
    }

    /// Adds `J_bᵀ r` into `out`.
    pub fn scatter_adjoint(&self, r: &DVector<f64>, out: &mut [f64]) {
        for t in &self.terms {
            let y = t.matrix.tr_mul(r);
            for (o, v) in out[t.offset..].iter_mut().zip(y.iter()) {
                *o += v;
            }
        }
    }

    /// Adds the squared column norms of `J_b` (the diagonal of `J_bᵀ J_b`).
    pub fn scatter_diagonal(&self, out: &mut [f64]) {
        for t in &self.terms {
            for (c, col) in t.matrix.column_iter().enumerate() {
                out[t.offset + c] += col.norm_squared();
            }
        }
    }
}

/// Residual values of every block, in block order.
#[derive(Debug, Clone)]
pub struct ResidualVector {
    pub blocks: Vec<(BlockKind, usize, DVector<f64>)>,
}

impl ResidualVector {
    pub fn squared_norm(&self) -> f64 {
        self.blocks.iter().map(|b| b.2.norm_squared()).sum()
    }

    pub fn squared_norm_of(&self, kind: BlockKind) -> f64 {
        self.blocks
            .iter()
            .filter(|b| b.0 == kind)
            .map(|b| b.2.norm_squared())
            .sum()
    }
}

/// Master-square operators on tensor nodal vectors of one degree.
#[derive(Debug, Clone)]
pub struct LocalOps {
    pub n: usize,
    /// `∂/∂ξ` (first index, radial).
    pub ds: DMatrix<f64>,
    /// `∂/∂η` (second index, angular).
    pub dt: DMatrix<f64>,
    pub dss: DMatrix<f64>,
    pub dtt: DMatrix<f64>,
}

impl LocalOps {
    pub fn new(grid: &GllGrid) -> Self {
        let n = grid.len();
        let id = DMatrix::<f64>::identity(n, n);
        let d = &grid.diff;
        let d2 = d * d;
        LocalOps {
            n,
            ds: id.kronecker(d),
            dt: d.kronecker(&id),
            dss: id.kronecker(&d2),
            dtt: d2.kronecker(&id),
        }
    }
}

fn select_rows(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), m.ncols(), |i, j| m[(idx[i], j)])
}

fn select_identity(idx: &[usize], cols: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(idx.len(), cols);
    for (i, &k) in idx.iter().enumerate() {
        m[(i, k)] = 1.0;
    }
    m
}

/// Trace operators of one element side, in chart derivatives.
struct SideOps {
    val: DMatrix<f64>,
    ds: DMatrix<f64>,
    dt: DMatrix<f64>,
}

fn side_ops(ops: &LocalOps, el: &Element, side: Side) -> SideOps {
    let idx = side.node_indices(ops.n);
    let (hs, ht) = el.half_widths();
    SideOps {
        val: select_identity(&idx, ops.n * ops.n),
        ds: select_rows(&ops.ds, &idx) / hs,
        dt: select_rows(&ops.dt, &idx) / ht,
    }
}

/// Stacks row groups of equal width.
fn vstack(parts: &[DMatrix<f64>]) -> DMatrix<f64> {
    let rows = parts.iter().map(|p| p.nrows()).sum();
    let cols = parts[0].ncols();
    let mut m = DMatrix::zeros(rows, cols);
    let mut r = 0;
    for p in parts {
        m.rows_mut(r, p.nrows()).copy_from(p);
        r += p.nrows();
    }
    m
}

fn vstack_vec(parts: &[DVector<f64>]) -> DVector<f64> {
    let rows = parts.iter().map(|p| p.len()).sum();
    let mut v = DVector::zeros(rows);
    let mut r = 0;
    for p in parts {
        v.rows_mut(r, p.len()).copy_from(p);
        r += p.len();
    }
    v
}

/// The assembled functional on one mesh.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub mesh: Mesh,
    pub grid: GllGrid,
    pub layout: Layout,
    pub weights: WeightConfig,
    pub ops: LocalOps,
    pub blocks: Vec<Block>,
    /// Boundary-derived value `a` at the singular point (0 when not on the
    /// Dirichlet boundary).
    pub vertex_value: f64,
}

impl Discretization {
    pub fn new(spec: &ProblemSpec, mesh: Mesh, grid: GllGrid, weights: WeightConfig) -> Result<Self> {
        if !(weights.alpha > 0.0 && weights.alpha.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "alpha must be positive, got {}",
                weights.alpha
            )));
        }
        let layout = Layout::new(&mesh, &grid);
        let ops = LocalOps::new(&grid);
        let vertex_value = vertex_value(spec, &mesh)?;
        let mut d = Discretization {
            mesh,
            grid,
            layout,
            weights,
            ops,
            blocks: Vec::new(),
            vertex_value,
        };
        let mut blocks = Vec::new();
        for el in d.mesh.elements.iter().filter(|e| e.has_polynomial()) {
            blocks.push(d.pde_block(el, spec)?);
        }
        let eq = EdgeQuadrature::new(&d.grid);
        for e in d.mesh.edges.iter().filter(|e| e.is_finite()) {
            blocks.push(d.edge_block(e, spec, &eq)?);
        }
        if d.mesh.dirichlet_vertex {
            blocks.push(Block {
                kind: BlockKind::VertexPenalty,
                tag: 0,
                terms: vec![Term {
                    offset: d.layout.constant_index(0),
                    matrix: DMatrix::from_element(1, 1, 1.0),
                }],
                data: DVector::from_element(1, vertex_value),
            });
        }
        d.blocks = blocks;
        Ok(d)
    }

    fn offset(&self, id: usize) -> usize {
        self.layout.offsets[id].expect("polynomial element")
    }

    /// Weighted PDE residual on one element, divided by its coefficient.
    pub fn pde_block(&self, el: &Element, spec: &ProblemSpec) -> Result<Block> {
        let ops = &self.ops;
        let n = ops.n;
        let (hs, ht) = el.half_widths();
        if !(hs > 0.0 && ht > 0.0) {
            return Err(Error::SingularMap { element: el.id });
        }
        let p = el.coefficient;
        let g = &self.grid;
        let mut scale = vec![0.0; n * n];
        let mut rhs = DVector::zeros(n * n);
        let (mut matrix, kind) = match el.chart {
            Chart::LogPolar => {
                let w = self.weights.layer_weight(el.s.0.exp());
                for b in 0..n {
                    for a in 0..n {
                        let k = b * n + a;
                        let (tau, theta) = el.chart_point(g.nodes[a], g.nodes[b]);
                        scale[k] = (w * g.weights[a] * g.weights[b] * hs * ht).sqrt();
                        let f = source_at(spec, self.mesh.center, tau.exp(), theta)?;
                        rhs[k] = scale[k] * (2.0 * tau).exp() * f;
                    }
                }
                let m = (&ops.dss / (hs * hs) + &ops.dtt / (ht * ht)) * (-p);
                (m, BlockKind::PdeSingular)
            }
            Chart::Polar => {
                let mut m = &ops.dss / (hs * hs);
                for b in 0..n {
                    for a in 0..n {
                        let k = b * n + a;
                        let (r, theta) = el.chart_point(g.nodes[a], g.nodes[b]);
                        if r <= 0.0 {
                            return Err(Error::SingularMap { element: el.id });
                        }
                        for c in 0..n * n {
                            m[(k, c)] += ops.ds[(k, c)] / (hs * r) + ops.dtt[(k, c)] / (ht * ht * r * r);
                        }
                        scale[k] = (g.weights[a] * g.weights[b] * hs * ht * r).sqrt();
                        rhs[k] = scale[k] * source_at(spec, self.mesh.center, r, theta)?;
                    }
                }
                (m * (-p), BlockKind::PdeInterior)
            }
        };
        for (k, s) in scale.iter().enumerate() {
            matrix.row_mut(k).scale_mut(*s / p);
            rhs[k] /= p;
        }
        Ok(Block {
            kind,
            tag: el.id,
            terms: vec![Term {
                offset: self.offset(el.id),
                matrix,
            }],
            data: rhs,
        })
    }

    /// Jump or boundary residual on one finite edge.
    pub fn edge_block(&self, edge: &Edge, spec: &ProblemSpec, eq: &EdgeQuadrature) -> Result<Block> {
        let weight = if edge.singular_region {
            self.weights.edge_weight(edge.dist)
        } else {
            1.0
        };
        let sw = weight.sqrt();
        let l2 = eq.l2_map(edge.measure) * sw;
        let half = eq.half_map(edge.measure) * sw;
        let n = self.ops.n;
        let els: Vec<&Element> = edge.sides.iter().map(|s| &self.mesh.elements[s.element]).collect();
        let sops: Vec<SideOps> = edge
            .sides
            .iter()
            .zip(&els)
            .map(|(s, el)| side_ops(&self.ops, el, s.side))
            .collect();
        // Radial-derivative factor making Polar sides comparable to τ
        // derivatives on edges of the graded disc.
        let radial_factor = |k: usize| -> f64 {
            match (edge.singular_region, els[k].chart) {
                (true, Chart::Polar) => els[k].s.0,
                _ => 1.0,
            }
        };
        let radial = matches!(edge.shape, EdgeShape::Radial { .. });
        // Tangential and normal chart derivatives of side k.
        let tan = |k: usize| -> DMatrix<f64> {
            if radial {
                &sops[k].ds * radial_factor(k)
            } else {
                sops[k].dt.clone()
            }
        };
        let nor = |k: usize| -> DMatrix<f64> {
            if radial {
                sops[k].dt.clone()
            } else {
                &sops[k].ds * radial_factor(k)
            }
        };
        let off = |k: usize| self.offset(edge.sides[k].element);
        let h_index = self.layout.constant_index(0);

        let block = match edge.class {
            EdgeClass::InterElement | EdgeClass::Interface { .. } => {
                let (pl, pr, kind) = match edge.class {
                    EdgeClass::Interface { p_left, p_right } => (p_left, p_right, BlockKind::InterfaceJump),
                    _ => (1.0, 1.0, BlockKind::InterElementJump),
                };
                let side = |k: usize, sign: f64, p: f64| -> DMatrix<f64> {
                    vstack(&[
                        &l2 * &sops[k].val * sign,
                        &half * tan(k) * sign,
                        &half * nor(k) * (sign * p),
                    ])
                };
                let ml = side(0, 1.0, pl);
                let mr = side(1, -1.0, pr);
                let rows = ml.nrows();
                Block {
                    kind,
                    tag: edge.id,
                    terms: vec![
                        Term { offset: off(0), matrix: ml },
                        Term { offset: off(1), matrix: mr },
                    ],
                    data: DVector::zeros(rows),
                }
            }
            EdgeClass::ArcToConstant => {
                // Without a Dirichlet ray through the singular point,
                // c·ln r with h = c·ln σ₂ satisfies every other block. The
                // normal-derivative row (the constant has none) rules it out.
                let m = if self.mesh.dirichlet_vertex {
                    vstack(&[&l2 * &sops[0].val, &half * tan(0)])
                } else {
                    vstack(&[&l2 * &sops[0].val, &half * tan(0), &half * nor(0)])
                };
                let mut hcol = DMatrix::zeros(m.nrows(), 1);
                let ones = DVector::from_element(n, 1.0);
                hcol.rows_mut(0, l2.nrows()).copy_from(&(-(&l2 * ones)));
                let rows = m.nrows();
                Block {
                    kind: BlockKind::InterElementJump,
                    tag: edge.id,
                    terms: vec![
                        Term { offset: off(0), matrix: m },
                        Term { offset: h_index, matrix: hcol },
                    ],
                    data: DVector::zeros(rows),
                }
            }
            EdgeClass::Dirichlet => {
                let (vals, _) = self.boundary_samples(edge, spec, BoundaryKind::Dirichlet)?;
                let el = els[0];
                let t_scale = self.tangent_half_width(el, radial);
                let dl = (&self.grid.diff * &vals) / t_scale;
                let with_vertex = edge.singular_region && self.mesh.dirichlet_vertex;
                let shifted = if with_vertex {
                    vals.add_scalar(-self.vertex_value)
                } else {
                    vals
                };
                let m = vstack(&[&l2 * &sops[0].val, &half * tan(0)]);
                let data = vstack_vec(&[&l2 * shifted, &half * dl]);
                let mut terms = vec![Term { offset: off(0), matrix: m }];
                if with_vertex {
                    let mut hcol = DMatrix::zeros(data.len(), 1);
                    let ones = DVector::from_element(n, 1.0);
                    hcol.rows_mut(0, l2.nrows()).copy_from(&(-(&l2 * ones)));
                    terms.push(Term { offset: h_index, matrix: hcol });
                }
                Block {
                    kind: BlockKind::DirichletResidual,
                    tag: edge.id,
                    terms,
                    data,
                }
            }
            EdgeClass::Neumann => {
                let (g, radii) = self.boundary_samples(edge, spec, BoundaryKind::Neumann)?;
                let side = edge.sides[0].side;
                let (m, scaled) = if radial {
                    // r ∂_n u = ±u_θ on a ray.
                    let sign = if side == Side::TMin { -1.0 } else { 1.0 };
                    (&sops[0].dt * sign, g.component_mul(&radii))
                } else {
                    let sign = if side == Side::SMin { -1.0 } else { 1.0 };
                    let r = radii[0];
                    // ∂_n u = ±u_r, or ±u_τ / r on a graded arc.
                    match els[0].chart {
                        Chart::Polar => (&sops[0].ds * sign, g),
                        Chart::LogPolar => (&sops[0].ds * sign, g * r),
                    }
                };
                Block {
                    kind: BlockKind::NeumannResidual,
                    tag: edge.id,
                    terms: vec![Term {
                        offset: off(0),
                        matrix: &half * m,
                    }],
                    data: &half * scaled,
                }
            }
        };
        Ok(block)
    }

    fn tangent_half_width(&self, el: &Element, radial: bool) -> f64 {
        let (hs, ht) = el.half_widths();
        if radial {
            hs
        } else {
            ht
        }
    }

    /// Boundary data at the edge's trace nodes, plus the physical radius of
    /// each node.
    fn boundary_samples(
        &self,
        edge: &Edge,
        spec: &ProblemSpec,
        kind: BoundaryKind,
    ) -> Result<(DVector<f64>, DVector<f64>)> {
        let center = self.mesh.center;
        let seg = spec
            .segment_at(edge.midpoint(center))
            .filter(|s| s.kind == kind)
            .ok_or(Error::OrphanEdge { edge: edge.id })?;
        let el = &self.mesh.elements[edge.sides[0].element];
        let side = edge.sides[0].side;
        let n = self.grid.len();
        let mut vals = DVector::zeros(n);
        let mut radii = DVector::zeros(n);
        for (k, &x) in self.grid.nodes.iter().enumerate() {
            let (xi, eta) = match side {
                Side::SMin => (-1.0, x),
                Side::SMax => (1.0, x),
                Side::TMin => (x, -1.0),
                Side::TMax => (x, 1.0),
            };
            let (r, theta) = el.polar_point(xi, eta);
            let p = Point::from_polar(center, r, theta);
            let v = seg
                .geometry
                .arclength_of(p)
                .map(|s| (seg.data)(s.clamp(0.0, seg.geometry.length())))
                .unwrap_or(f64::NAN);
            if !v.is_finite() {
                return Err(Error::NonFiniteData { x: p.x, y: p.y });
            }
            vals[k] = v;
            radii[k] = r;
        }
        Ok((vals, radii))
    }

    /// Residual blocks evaluated at `u`, in parallel with block order kept.
    pub fn residual_vector(&self, u: &[f64]) -> ResidualVector {
        ResidualVector {
            blocks: self
                .blocks
                .par_iter()
                .map(|b| (b.kind, b.tag, b.residual(u)))
                .collect(),
        }
    }

    /// `F(U) = Σ_b ‖r_b(U)‖²`, summed in block order.
    pub fn total_functional(&self, u: &[f64]) -> f64 {
        let parts: Vec<f64> = self
            .blocks
            .par_iter()
            .map(|b| b.residual(u).norm_squared())
            .collect();
        parts.iter().sum()
    }

    /// Functional with all data set to zero, i.e. `‖J U‖²`.
    pub fn homogeneous_functional(&self, u: &[f64]) -> f64 {
        let parts: Vec<f64> = self
            .blocks
            .par_iter()
            .map(|b| b.apply(u).norm_squared())
            .collect();
        parts.iter().sum()
    }

    /// Samples `f(r, θ)` on every polynomial element (sector index passed
    /// along so piecewise functions are unambiguous on interfaces) and sets
    /// the vertex constant to `h`.
    pub fn interpolate(&self, f: impl Fn(usize, f64, f64) -> f64, h: f64) -> Vec<f64> {
        let mut u = vec![0.0; self.layout.len];
        let g = &self.grid;
        let n = g.len();
        for el in self.mesh.polynomial_elements() {
            let o = self.offset(el.id);
            for b in 0..n {
                for a in 0..n {
                    let (r, theta) = el.polar_point(g.nodes[a], g.nodes[b]);
                    u[o + b * n + a] = f(el.sector, r, theta);
                }
            }
        }
        u[self.layout.constant_index(0)] = h;
        u
    }
}

fn source_at(spec: &ProblemSpec, center: Point, r: f64, theta: f64) -> Result<f64> {
    let p = Point::from_polar(center, r, theta);
    let f = (spec.source)(p);
    if f.is_finite() {
        Ok(f)
    } else {
        Err(Error::NonFiniteData { x: p.x, y: p.y })
    }
}

fn vertex_value(spec: &ProblemSpec, mesh: &Mesh) -> Result<f64> {
    if !mesh.dirichlet_vertex {
        return Ok(0.0);
    }
    let c = mesh.center;
    let seg = spec
        .boundary
        .iter()
        .find(|s| s.kind == BoundaryKind::Dirichlet && s.geometry.contains(c))
        .expect("dirichlet vertex lies on a Dirichlet segment");
    let v = seg.data_at(c).unwrap_or(f64::NAN);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFiniteData { x: c.x, y: c.y })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::gll_grid;
    use crate::mesh::{build_mesh, MeshParams};
    use crate::problem::{sector_problem, SectorPartition};
    use crate::singularity::SingularSolution;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn setup(p: f64, periodic: bool, w: usize, layers: usize, q: f64) -> (ProblemSpec, Discretization, SingularSolution) {
        let part = if periodic {
            SectorPartition::crossing_interfaces(p)
        } else {
            SectorPartition::quarter_with_diagonal_interface(p)
        };
        let exact = SingularSolution::leading(&part).unwrap();
        let spec = sector_problem(exact.clone(), 1.0);
        let mesh = build_mesh(&spec, &MeshParams::new(q, layers)).unwrap();
        let d = Discretization::new(
            &spec,
            mesh,
            gll_grid(w).unwrap(),
            WeightConfig::for_exponent(exact.lambda0),
        )
        .unwrap();
        (spec, d, exact)
    }

    fn exact_samples(d: &Discretization, exact: &SingularSolution) -> Vec<f64> {
        d.interpolate(
            |k, r, t| r.powf(exact.lambda0) * exact.angular_in(k, t).0,
            0.0,
        )
    }

    #[test]
    fn weights() {
        let w = WeightConfig { alpha: 0.25 };
        assert_relative_eq!(w.layer_weight(0.01), 10.0, max_relative = 1e-14);
        assert_relative_eq!(w.edge_weight(4.0), 0.5, max_relative = 1e-14);
        // Layer j scales as q^{-2α(N+1-j)}.
        let q: f64 = 0.15;
        let s = crate::mesh::radii(1.0, q, 5).unwrap();
        for j in 1..5 {
            assert_relative_eq!(
                w.layer_weight(s[j]),
                q.powf(-2.0 * 0.25 * (5 - j) as f64),
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn zero_state_has_zero_functional_for_zero_data() {
        let part = SectorPartition::quarter_with_diagonal_interface(5.0);
        let exact = SingularSolution::leading(&part).unwrap();
        let mut spec = sector_problem(exact.clone(), 1.0);
        for s in &mut spec.boundary {
            s.data = Arc::new(|_| 0.0);
        }
        let mesh = build_mesh(&spec, &MeshParams::new(0.15, 3)).unwrap();
        let d = Discretization::new(&spec, mesh, gll_grid(3).unwrap(), WeightConfig { alpha: 0.2 }).unwrap();
        assert_eq!(d.total_functional(&vec![0.0; d.layout.len]), 0.0);
    }

    #[test]
    fn pde_residual_of_tau_squared() {
        let (spec, d, _) = setup(5.0, false, 4, 3, 0.15);
        let el = d.mesh.elements.iter().find(|e| e.chart == Chart::LogPolar && e.has_polynomial() && e.coefficient == 5.0).unwrap().clone();
        let b = d.pde_block(&el, &spec).unwrap();
        let n = d.grid.len();
        let mut u = vec![0.0; d.layout.len];
        let o = d.layout.offsets[el.id].unwrap();
        for bb in 0..n {
            for a in 0..n {
                let (tau, _) = el.chart_point(d.grid.nodes[a], d.grid.nodes[bb]);
                u[o + bb * n + a] = tau * tau;
            }
        }
        let w = d.weights.layer_weight(el.s.0.exp());
        let area = (el.s.1 - el.s.0) * (el.t.1 - el.t.0);
        assert_relative_eq!(b.residual(&u).norm_squared(), 4.0 * w * area, max_relative = 1e-10);
    }

    #[test]
    fn interior_pde_residual_of_radial_square() {
        let (_, d, _) = setup(1.0, false, 4, 3, 0.15);
        // u = r², Δu = 4, so -Δu - f vanishes for f = -4.
        let mut spec = sector_problem(
            SingularSolution::leading(&SectorPartition::quarter_with_diagonal_interface(1.0)).unwrap(),
            1.0,
        );
        spec.source = Arc::new(|_| -4.0);
        let u = d.interpolate(|_, r, _| r * r, 0.0);
        for el in d.mesh.polynomial_elements().filter(|e| e.chart == Chart::Polar) {
            let b = d.pde_block(el, &spec).unwrap();
            assert!(b.residual(&u).norm() < 1e-11);
        }
    }

    #[test]
    fn log_mode_is_not_free_in_periodic_problem() {
        let (_, d, _) = setup(500.0, true, 4, 4, (-PI).exp());
        assert!(!d.mesh.dirichlet_vertex);
        let mut u = d.interpolate(|_, r, _| r.ln(), 0.0);
        let inner = d.mesh.sigma[1];
        u[d.layout.constant_index(0)] = inner.ln();
        let hom = d.homogeneous_functional(&u);
        let r = d.residual_vector(&u);
        let rest = hom - r.squared_norm_of(BlockKind::InterElementJump);
        // Only the arc to the constant sees the mode, up to interpolating
        // ln r on the outer band.
        assert!(rest < 1e-5 * hom, "{rest} vs {hom}");
        assert!(hom > 1e-3, "{hom}");
    }

    /// Jump blocks on edges shared by two polynomial elements.
    fn shared_jumps(d: &Discretization, r: &ResidualVector) -> f64 {
        r.blocks
            .iter()
            .filter(|b| b.0 == BlockKind::InterElementJump && d.mesh.edges[b.1].sides.len() == 2)
            .map(|b| b.2.norm_squared())
            .sum()
    }

    #[test]
    fn jumps_vanish_for_exact_solution() {
        let (_, d, exact) = setup(5.0, false, 8, 4, 0.15);
        let u = exact_samples(&d, &exact);
        let r = d.residual_vector(&u);
        let inter = r.squared_norm_of(BlockKind::InterfaceJump);
        let jumps = shared_jumps(&d, &r);
        assert!(inter < 1e-9, "interface {inter}");
        assert!(jumps < 1e-9, "jumps {jumps}");
        let neumann = r.squared_norm_of(BlockKind::NeumannResidual);
        assert!(neumann < 1e-9, "neumann {neumann}");
        let dir = r.squared_norm_of(BlockKind::DirichletResidual);
        assert!(dir < 1e-9, "dirichlet {dir}");
    }

    #[test]
    fn periodic_jumps_vanish_for_exact_solution() {
        let (_, d, exact) = setup(500.0, true, 8, 4, (-PI).exp());
        let u = exact_samples(&d, &exact);
        let r = d.residual_vector(&u);
        assert!(r.squared_norm_of(BlockKind::InterfaceJump) < 1e-9);
        let jumps = shared_jumps(&d, &r);
        assert!(jumps < 1e-9, "jumps {jumps}");
    }

    #[test]
    fn functional_of_exact_solution_decays() {
        let mut last = f64::INFINITY;
        for w in [3, 5, 7] {
            let (_, d, exact) = setup(5.0, false, w, w, 0.15);
            let f = d.total_functional(&exact_samples(&d, &exact));
            assert!(f < last, "W={w}: {f} vs {last}");
            last = f;
        }
    }

    #[test]
    fn vertex_penalty_value() {
        let (_, d, _) = setup(5.0, false, 3, 3, 0.15);
        let mut u = vec![0.0; d.layout.len];
        u[d.layout.constant_index(0)] = 3.0;
        let pen = d
            .blocks
            .iter()
            .find(|b| b.kind == BlockKind::VertexPenalty)
            .unwrap();
        assert_eq!(pen.residual(&u).norm_squared(), 9.0);
    }

    #[test]
    fn constant_jump_on_inter_element_edge() {
        let (_, d, _) = setup(5.0, false, 4, 4, 0.15);
        // Offset one element by c relative to its angular neighbour on a
        // non-interface edge: use the arc between two graded layers.
        let edge = d
            .mesh
            .edges
            .iter()
            .find(|e| e.class == EdgeClass::InterElement && e.singular_region && e.sides.len() == 2)
            .unwrap();
        let b = d.blocks.iter().find(|b| b.tag == edge.id && b.kind == BlockKind::InterElementJump).unwrap();
        let mut u = vec![0.0; d.layout.len];
        let c = 0.7;
        for i in d.layout.element_range(edge.sides[0].element).unwrap() {
            u[i] = c;
        }
        let w = d.weights.edge_weight(edge.dist);
        assert_relative_eq!(b.residual(&u).norm_squared(), w * c * c * edge.measure, max_relative = 1e-12);
    }

    #[test]
    fn block_shapes_independent_of_unknowns() {
        let (_, d, exact) = setup(10.0, false, 3, 3, 0.15);
        let a = d.residual_vector(&vec![0.0; d.layout.len]);
        let b = d.residual_vector(&exact_samples(&d, &exact));
        assert_eq!(a.blocks.len(), b.blocks.len());
        for (x, y) in a.blocks.iter().zip(&b.blocks) {
            assert_eq!((x.0, x.1, x.2.len()), (y.0, y.1, y.2.len()));
        }
    }
}
