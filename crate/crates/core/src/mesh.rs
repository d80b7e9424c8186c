//! Hybrid geometric mesh around one singular point.
//!
//! Radii `σ_1 = 0`, `σ_j = ρ q^{N+1-j}` for `2 <= j <= N+1` cut the disc of
//! radius ρ into N layers. Layer 1 is the innermost sector, which becomes a
//! semi-infinite strip in `(τ, θ)` and carries only the vertex constant `h`.
//! Layers 2..=N carry polynomials in `(τ, θ)`, each box of width `ln(1/q)`.
//! The annulus `ρ <= r <= R` is split into radial bands carrying polynomials
//! in `(r, θ)`. Every element spans one interval of the angular breaks, and
//! interface angles are required to be breaks.

use std::f64::consts::{FRAC_PI_2, TAU};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::basis::Side;
use crate::problem::{BoundaryKind, Point, ProblemSpec, SectorPartition, ANGLE_TOL};
use crate::{Error, Result};

pub const DEFAULT_RHO: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshParams {
    /// Radius of the geometrically graded disc.
    pub rho: f64,
    /// Geometric ratio q.
    pub ratio: f64,
    /// Number of layers N (layer 1 included).
    pub layers: usize,
    /// Angular breaks ψ; empty selects [`default_angular_breaks`].
    pub angular_breaks: Vec<f64>,
    /// Radial bands in the annulus between ρ and the outer radius.
    pub interior_layers: usize,
}

impl MeshParams {
    pub fn new(ratio: f64, layers: usize) -> Self {
        MeshParams {
            rho: DEFAULT_RHO,
            ratio,
            layers,
            angular_breaks: Vec::new(),
            interior_layers: 1,
        }
    }
}

/// Radii `σ_1..σ_{N+1}` of the geometric layers.
pub fn radii(rho: f64, q: f64, n: usize) -> Result<Vec<f64>> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::InvalidParameter(format!("rho must be positive, got {rho}")));
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidParameter(format!("ratio must lie in (0, 1), got {q}")));
    }
    if n < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 layers, got {n}")));
    }
    let mut out = vec![0.0; n + 1];
    for (j, s) in out.iter_mut().enumerate().skip(1) {
        // Index j here is layer j+1 in 1-based counting.
        *s = rho * q.powi((n - j) as i32);
    }
    Ok(out)
}

/// Partition breakpoints with each sector cut into pieces no wider than π/2.
pub fn default_angular_breaks(partition: &SectorPartition) -> Vec<f64> {
    let mut out = vec![partition.start()];
    for w in partition.breakpoints.windows(2) {
        let pieces = ((w[1] - w[0]) / FRAC_PI_2 - 1e-9).ceil().max(1.0) as usize;
        for k in 1..=pieces {
            out.push(w[0] + (w[1] - w[0]) * k as f64 / pieces as f64);
        }
    }
    out
}

fn check_breaks(breaks: &[f64], partition: &SectorPartition) -> Result<()> {
    if breaks.len() < 2 || breaks.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Mesh("angular breaks must be strictly increasing".into()));
    }
    let (a, b) = (partition.start(), partition.end());
    if (breaks[0] - a).abs() > 1e-10 || (breaks[breaks.len() - 1] - b).abs() > 1e-10 {
        return Err(Error::Mesh(format!(
            "angular breaks must span [{a}, {b}], got [{}, {}]",
            breaks[0],
            breaks[breaks.len() - 1]
        )));
    }
    for angle in partition.interface_angles() {
        if !breaks.iter().any(|&x| (x - angle).abs() < 1e-10) {
            return Err(Error::MissingInterfaceAngle { angle });
        }
    }
    Ok(())
}

/// Working coordinates of an element: `s` is radial, `t` is the angle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Chart {
    /// `s = τ = ln r`.
    LogPolar,
    /// `s = r`.
    Polar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Region {
    /// Layer 1 of the graded disc; no polynomial.
    Strip { angular: usize },
    /// Graded layer `layer` in 2..=N (1-based like σ).
    Layer { layer: usize, angular: usize },
    /// Radial band of the annulus, 0-based.
    Band { band: usize, angular: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Element {
    pub id: usize,
    pub vertex: usize,
    pub region: Region,
    pub chart: Chart,
    /// Radial range in chart coordinates; the strip has `s.0 = -inf`.
    pub s: (f64, f64),
    pub t: (f64, f64),
    pub coefficient: f64,
    pub sector: usize,
}

impl Element {
    pub fn has_polynomial(&self) -> bool {
        !matches!(self.region, Region::Strip { .. })
    }

    /// Physical radii `(r_in, r_out)`.
    pub fn radii(&self) -> (f64, f64) {
        match self.chart {
            Chart::LogPolar => (self.s.0.exp(), self.s.1.exp()),
            Chart::Polar => self.s,
        }
    }

    /// Exact Cartesian area of the annular sector.
    pub fn area(&self) -> f64 {
        let (r0, r1) = self.radii();
        0.5 * (self.t.1 - self.t.0) * (r1 * r1 - r0 * r0)
    }

    /// Half widths of the box, i.e. the affine map derivatives from the master square.
    pub fn half_widths(&self) -> (f64, f64) {
        (0.5 * (self.s.1 - self.s.0), 0.5 * (self.t.1 - self.t.0))
    }

    /// Chart coordinates of a master point.
    pub fn chart_point(&self, xi: f64, eta: f64) -> (f64, f64) {
        let (hs, ht) = self.half_widths();
        (
            0.5 * (self.s.0 + self.s.1) + hs * xi,
            0.5 * (self.t.0 + self.t.1) + ht * eta,
        )
    }

    /// Polar `(r, θ)` of a master point.
    pub fn polar_point(&self, xi: f64, eta: f64) -> (f64, f64) {
        let (s, t) = self.chart_point(xi, eta);
        match self.chart {
            Chart::LogPolar => (s.exp(), t),
            Chart::Polar => (s, t),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EdgeClass {
    InterElement,
    Interface { p_left: f64, p_right: f64 },
    Dirichlet,
    Neumann,
    ArcToConstant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeSide {
    pub element: usize,
    pub side: Side,
}

/// Geometric shape of an edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EdgeShape {
    /// Constant angle; radial extent in physical `r`.
    Radial { theta: f64, r0: f64, r1: f64 },
    /// Constant radius; angular extent.
    Arc { r: f64, theta0: f64, theta1: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub id: usize,
    pub class: EdgeClass,
    /// One side for boundary edges; two for shared edges, ordered
    /// (lower θ, higher θ) on radial edges and (inner, outer) on arcs.
    /// For `ArcToConstant` the single side is the layer-2 element.
    pub sides: Vec<EdgeSide>,
    pub shape: EdgeShape,
    /// Length in working coordinates; infinite for radial edges of layer 1.
    pub measure: f64,
    /// Closest approach to the singular point.
    pub dist: f64,
    /// True for edges of the graded disc (carrying the `d^{-2α}` weight).
    pub singular_region: bool,
}

impl Edge {
    pub fn is_finite(&self) -> bool {
        self.measure.is_finite()
    }

    pub fn midpoint(&self, center: Point) -> Point {
        match self.shape {
            EdgeShape::Radial { theta, r0, r1 } => Point::from_polar(center, 0.5 * (r0 + r1), theta),
            EdgeShape::Arc { r, theta0, theta1 } => {
                Point::from_polar(center, r, 0.5 * (theta0 + theta1))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub params: MeshParams,
    pub center: Point,
    pub outer_radius: f64,
    pub sigma: Vec<f64>,
    pub breaks: Vec<f64>,
    pub periodic: bool,
    pub elements: Vec<Element>,
    pub edges: Vec<Edge>,
    /// True when the singular point lies on the Dirichlet boundary.
    pub dirichlet_vertex: bool,
}

impl Mesh {
    pub fn angular_count(&self) -> usize {
        self.breaks.len() - 1
    }

    pub fn polynomial_elements(&self) -> impl Iterator<Item = &Element> {
        self.elements.iter().filter(|e| e.has_polynomial())
    }

    /// Element id for a radial position `k` (0 = strip, 1..N-1 graded
    /// layers, then bands) and angular index `i`.
    fn id_at(&self, k: usize, i: usize) -> usize {
        k * self.angular_count() + i
    }

    pub fn dump(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "mesh center=({}, {}) outer_radius={} rho={} q={} layers={} bands={}",
            self.center.x,
            self.center.y,
            self.outer_radius,
            self.params.rho,
            self.params.ratio,
            self.params.layers,
            self.params.interior_layers
        );
        let _ = writeln!(s, "sigma {:?}", self.sigma);
        let _ = writeln!(s, "breaks {:?}", self.breaks);
        for e in &self.elements {
            let _ = writeln!(
                s,
                "element {} {:?} {:?} s=[{:.6e}, {:.6e}] t=[{:.6}, {:.6}] p={}",
                e.id, e.region, e.chart, e.s.0, e.s.1, e.t.0, e.t.1, e.coefficient
            );
        }
        for e in &self.edges {
            let sides: Vec<String> = e
                .sides
                .iter()
                .map(|x| format!("{}:{:?}", x.element, x.side))
                .collect();
            let _ = writeln!(
                s,
                "edge {} {:?} sides=[{}] {:?} measure={:.6e} dist={:.6e}",
                e.id,
                e.class,
                sides.join(" "),
                e.shape,
                e.measure,
                e.dist
            );
        }
        s
    }
}

/// Builds the mesh for the single singular point of `spec`. The domain is the
/// sector (or disc) of radius `extent` around it.
pub fn build_mesh(spec: &ProblemSpec, params: &MeshParams) -> Result<Mesh> {
    let [sp] = spec.singular_points.as_slice() else {
        return Err(Error::Mesh(format!(
            "exactly one singular point is supported, got {}",
            spec.singular_points.len()
        )));
    };
    let part = &sp.partition;
    let outer = sp.extent;
    let sigma = radii(params.rho, params.ratio, params.layers)?;
    if params.rho >= outer {
        return Err(Error::Mesh(format!(
            "rho = {} must be below the outer radius {outer}",
            params.rho
        )));
    }
    if params.interior_layers == 0 {
        return Err(Error::InvalidParameter("interior_layers must be at least 1".into()));
    }
    let breaks = if params.angular_breaks.is_empty() {
        default_angular_breaks(part)
    } else {
        params.angular_breaks.clone()
    };
    check_breaks(&breaks, part)?;
    let m = breaks.len() - 1;

    let mut elements = Vec::new();
    let coef = |i: usize| -> Result<(usize, f64)> {
        let mid = 0.5 * (breaks[i] + breaks[i + 1]);
        let k = part
            .sector_index(mid)
            .ok_or_else(|| Error::Mesh(format!("angle {mid} outside partition")))?;
        Ok((k, part.coefficients[k]))
    };
    let band_radii: Vec<f64> = (0..=params.interior_layers)
        .map(|b| params.rho * (outer / params.rho).powf(b as f64 / params.interior_layers as f64))
        .collect();
    let n = params.layers;
    // Radial positions: 0 strip, 1..n-1 graded layers 2..=N, then bands.
    for k in 0..n + params.interior_layers {
        for i in 0..m {
            let (sector, coefficient) = coef(i)?;
            let (region, chart, s) = if k == 0 {
                (Region::Strip { angular: i }, Chart::LogPolar, (f64::NEG_INFINITY, sigma[1].ln()))
            } else if k < n {
                (
                    Region::Layer { layer: k + 1, angular: i },
                    Chart::LogPolar,
                    (sigma[k].ln(), sigma[k + 1].ln()),
                )
            } else {
                let b = k - n;
                (Region::Band { band: b, angular: i }, Chart::Polar, (band_radii[b], band_radii[b + 1]))
            };
            elements.push(Element {
                id: elements.len(),
                vertex: 0,
                region,
                chart,
                s,
                t: (breaks[i], breaks[i + 1]),
                coefficient,
                sector,
            });
        }
    }
    let mut mesh = Mesh {
        params: params.clone(),
        center: sp.center,
        outer_radius: outer,
        sigma,
        breaks,
        periodic: part.is_periodic(),
        elements,
        edges: Vec::new(),
        dirichlet_vertex: spec.is_dirichlet_point(sp.center),
    };
    mesh.edges = classify_edges(&mesh, spec)?;
    Ok(mesh)
}

/// Enumerates and classifies every edge of `mesh`.
pub fn classify_edges(mesh: &Mesh, spec: &ProblemSpec) -> Result<Vec<Edge>> {
    let part = &spec.singular_points[0].partition;
    let m = mesh.angular_count();
    let n = mesh.params.layers;
    let radial_count = n + mesh.params.interior_layers;
    let mut edges = Vec::new();

    let boundary_class = |mid: Point, id: usize| -> Result<EdgeClass> {
        match spec.segment_at(mid) {
            Some(seg) => Ok(match seg.kind {
                BoundaryKind::Dirichlet => EdgeClass::Dirichlet,
                BoundaryKind::Neumann => EdgeClass::Neumann,
            }),
            None => Err(Error::OrphanEdge { edge: id }),
        }
    };

    // Radial edges: for each radial position and each angular break.
    for k in 0..radial_count {
        let proto = &mesh.elements[mesh.id_at(k, 0)];
        let (r0, r1) = proto.radii();
        let singular_region = k < n;
        let measure = if k == 0 {
            f64::INFINITY
        } else {
            proto.s.1 - proto.s.0
        };
        let breaks_here = if mesh.periodic { m } else { m + 1 };
        for ib in 0..breaks_here {
            let theta = mesh.breaks[ib];
            let id = edges.len();
            let shape = EdgeShape::Radial { theta, r0, r1 };
            let lower = (ib > 0 || mesh.periodic).then(|| (ib + m - 1) % m);
            let upper = (ib < m).then_some(ib);
            let (class, sides) = match (lower, upper) {
                (Some(l), Some(u)) => {
                    let el = &mesh.elements[mesh.id_at(k, l)];
                    let eu = &mesh.elements[mesh.id_at(k, u)];
                    let class = if part.on_interface(theta) {
                        EdgeClass::Interface {
                            p_left: el.coefficient,
                            p_right: eu.coefficient,
                        }
                    } else {
                        EdgeClass::InterElement
                    };
                    (
                        class,
                        vec![
                            EdgeSide { element: el.id, side: Side::TMax },
                            EdgeSide { element: eu.id, side: Side::TMin },
                        ],
                    )
                }
                (Some(l), None) => {
                    let mid = Point::from_polar(mesh.center, mid_radius(r0, r1), theta);
                    (
                        boundary_class(mid, id)?,
                        vec![EdgeSide { element: mesh.id_at(k, l), side: Side::TMax }],
                    )
                }
                (None, Some(u)) => {
                    let mid = Point::from_polar(mesh.center, mid_radius(r0, r1), theta);
                    (
                        boundary_class(mid, id)?,
                        vec![EdgeSide { element: mesh.id_at(k, u), side: Side::TMin }],
                    )
                }
                (None, None) => return Err(Error::OrphanEdge { edge: id }),
            };
            edges.push(Edge {
                id,
                class,
                sides,
                shape,
                measure,
                dist: r0,
                singular_region,
            });
        }
    }

    // Arcs: between radial positions k-1 and k, plus the outer boundary.
    for k in 1..=radial_count {
        for i in 0..m {
            let id = edges.len();
            let outer_el = (k < radial_count).then(|| mesh.id_at(k, i));
            let inner_el = mesh.id_at(k - 1, i);
            let r = mesh.elements[inner_el].radii().1;
            let (theta0, theta1) = (mesh.breaks[i], mesh.breaks[i + 1]);
            let singular_region = k <= n;
            let measure = if singular_region {
                theta1 - theta0
            } else {
                r * (theta1 - theta0)
            };
            let (class, sides) = match outer_el {
                Some(o) if k == 1 => (
                    EdgeClass::ArcToConstant,
                    vec![EdgeSide { element: o, side: Side::SMin }],
                ),
                Some(o) => (
                    EdgeClass::InterElement,
                    vec![
                        EdgeSide { element: inner_el, side: Side::SMax },
                        EdgeSide { element: o, side: Side::SMin },
                    ],
                ),
                None => {
                    let mid = Point::from_polar(mesh.center, r, 0.5 * (theta0 + theta1));
                    (
                        boundary_class(mid, id)?,
                        vec![EdgeSide { element: inner_el, side: Side::SMax }],
                    )
                }
            };
            edges.push(Edge {
                id,
                class,
                sides,
                shape: EdgeShape::Arc { r, theta0, theta1 },
                measure,
                dist: r,
                singular_region,
            });
        }
    }
    Ok(edges)
}

fn mid_radius(r0: f64, r1: f64) -> f64 {
    if r0 > 0.0 {
        0.5 * (r0 + r1)
    } else {
        0.5 * r1
    }
}

/// True if `a` and `b` agree as angles (modulo a full turn).
pub fn same_angle(a: f64, b: f64) -> bool {
    let d = (a - b).rem_euclid(TAU);
    d < ANGLE_TOL || TAU - d < ANGLE_TOL
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::sector_problem;
    use crate::singularity::SingularSolution;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn example(p: f64, periodic: bool) -> ProblemSpec {
        let part = if periodic {
            SectorPartition::crossing_interfaces(p)
        } else {
            SectorPartition::quarter_with_diagonal_interface(p)
        };
        sector_problem(SingularSolution::leading(&part).unwrap(), 1.0)
    }

    #[test]
    fn radii_formula() {
        assert_eq!(radii(1.0, 0.15, 2).unwrap(), vec![0.0, 0.15, 1.0]);
        let r = radii(1.0, (-PI).exp(), 3).unwrap();
        assert_abs_diff_eq!(r[1], (-2.0 * PI).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(r[2], (-PI).exp(), epsilon = 1e-15);
        assert_eq!(r[3], 1.0);
        let r = radii(1.0, 0.15, 8).unwrap();
        assert_abs_diff_eq!(r[1], 0.15f64.powi(7), epsilon = 1e-18);
        assert!(r.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn radii_domain_errors() {
        assert!(radii(0.0, 0.5, 3).is_err());
        assert!(radii(1.0, 1.0, 3).is_err());
        assert!(radii(1.0, 0.5, 1).is_err());
    }

    #[test]
    fn default_breaks() {
        let b = default_angular_breaks(&SectorPartition::quarter_with_diagonal_interface(5.0));
        assert_eq!(b, vec![0.0, PI / 4.0, PI / 2.0]);
        let b = default_angular_breaks(&SectorPartition::crossing_interfaces(5.0));
        assert_eq!(b.len(), 5);
        for (k, x) in b.iter().enumerate() {
            assert_abs_diff_eq!(*x, k as f64 * PI / 2.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn quarter_sector_counts() {
        let spec = example(5.0, false);
        let mesh = build_mesh(&spec, &MeshParams::new(0.15, 2)).unwrap();
        let strips = mesh.elements.iter().filter(|e| !e.has_polynomial()).count();
        let graded = mesh
            .elements
            .iter()
            .filter(|e| matches!(e.region, Region::Layer { .. }))
            .count();
        let bands = mesh.elements.iter().filter(|e| e.chart == Chart::Polar).count();
        assert_eq!((strips, graded, bands), (2, 2, 2));
        let mesh = build_mesh(&spec, &MeshParams::new(0.15, 5)).unwrap();
        assert_eq!(mesh.polynomial_elements().count(), 2 * 4 + 2);
    }

    #[test]
    fn disc_counts_and_periodic_seam() {
        let spec = example(500.0, true);
        let mesh = build_mesh(&spec, &MeshParams::new((-PI).exp(), 3)).unwrap();
        let per_layer = mesh
            .elements
            .iter()
            .filter(|e| matches!(e.region, Region::Layer { layer: 2, .. }))
            .count();
        assert_eq!(per_layer, 4);
        // No boundary radial edges on a disc.
        assert!(mesh
            .edges
            .iter()
            .all(|e| !matches!(e.shape, EdgeShape::Radial { .. }) || e.sides.len() == 2));
        let seam: Vec<_> = mesh
            .edges
            .iter()
            .filter(|e| matches!(e.shape, EdgeShape::Radial { theta, .. } if theta == 0.0))
            .collect();
        assert!(!seam.is_empty());
        for e in seam {
            assert_eq!(e.class, EdgeClass::Interface { p_left: 500.0, p_right: 1.0 });
        }
        assert!(!mesh.dirichlet_vertex);
    }

    #[test]
    fn box_widths_are_uniform() {
        let spec = example(5.0, false);
        let q = 0.15;
        let mesh = build_mesh(&spec, &MeshParams::new(q, 6)).unwrap();
        for e in mesh.elements.iter().filter(|e| matches!(e.region, Region::Layer { .. })) {
            assert_abs_diff_eq!(e.s.1 - e.s.0, (1.0 / q).ln(), epsilon = 1e-12);
        }
    }

    #[test]
    fn areas_sum_to_domain() {
        for periodic in [false, true] {
            let spec = example(5.0, periodic);
            let mut params = MeshParams::new(0.2, 4);
            params.interior_layers = 3;
            let mesh = build_mesh(&spec, &params).unwrap();
            let total: f64 = mesh.elements.iter().map(Element::area).sum();
            let expect = if periodic { PI } else { PI / 4.0 };
            assert_abs_diff_eq!(total, expect, epsilon = 1e-10);
        }
    }

    #[test]
    fn edge_classes_quarter() {
        let spec = example(5.0, false);
        let mesh = build_mesh(&spec, &MeshParams::new(0.15, 3)).unwrap();
        let radial_at = |theta: f64, layer: usize| {
            mesh.edges
                .iter()
                .find(|e| match e.shape {
                    EdgeShape::Radial { theta: t, r0, .. } => {
                        (t - theta).abs() < 1e-12 && (r0 - mesh.sigma[layer - 1]).abs() < 1e-15
                    }
                    _ => false,
                })
                .unwrap()
        };
        assert_eq!(
            radial_at(PI / 4.0, 2).class,
            EdgeClass::Interface { p_left: 1.0, p_right: 5.0 }
        );
        assert_eq!(radial_at(0.0, 2).class, EdgeClass::Dirichlet);
        assert_eq!(radial_at(PI / 2.0, 2).class, EdgeClass::Neumann);
        // Strong grading puts the inner layers within tolerance of both end rays.
        let deep = build_mesh(&spec, &MeshParams::new((-2.0 * PI).exp(), 8)).unwrap();
        for e in &deep.edges {
            if let EdgeShape::Radial { theta, .. } = e.shape {
                if (theta - PI / 2.0).abs() < 1e-12 {
                    assert_eq!(e.class, EdgeClass::Neumann, "{e:?}");
                } else if theta.abs() < 1e-12 {
                    assert_eq!(e.class, EdgeClass::Dirichlet, "{e:?}");
                }
            }
        }
        let strip_edge = radial_at(PI / 4.0, 1);
        assert!(!strip_edge.is_finite());
        assert_eq!(radial_at(PI / 4.0, 3).dist, mesh.sigma[2]);
        let arcs: Vec<_> = mesh
            .edges
            .iter()
            .filter(|e| e.class == EdgeClass::ArcToConstant)
            .collect();
        assert_eq!(arcs.len(), 2);
        assert!(arcs.iter().all(|e| e.dist == mesh.sigma[1]));
        let outer = mesh
            .edges
            .iter()
            .filter(|e| matches!(e.shape, EdgeShape::Arc { r, .. } if r == 1.0))
            .count();
        assert_eq!(outer, 2);
        assert!(mesh.dirichlet_vertex);
    }

    #[test]
    fn every_finite_edge_is_owned() {
        let spec = example(10.0, false);
        let mut params = MeshParams::new(0.3, 4);
        params.interior_layers = 2;
        let mesh = build_mesh(&spec, &params).unwrap();
        // Each polynomial element has all four sides on exactly one finite edge.
        let mut count = std::collections::HashMap::new();
        for e in mesh.edges.iter().filter(|e| e.is_finite()) {
            for s in &e.sides {
                *count.entry((s.element, s.side)).or_insert(0) += 1;
            }
        }
        for el in mesh.polynomial_elements() {
            for side in Side::ALL {
                assert_eq!(count.get(&(el.id, side)), Some(&1), "element {} {side:?}", el.id);
            }
        }
    }

    #[test]
    fn missing_interface_angle_rejected() {
        let spec = example(5.0, false);
        let mut params = MeshParams::new(0.15, 3);
        params.angular_breaks = vec![0.0, PI / 3.0, PI / 2.0];
        assert!(matches!(
            build_mesh(&spec, &params),
            Err(Error::MissingInterfaceAngle { .. })
        ));
    }

    #[test]
    fn finer_breaks_accepted() {
        let spec = example(5.0, false);
        let mut params = MeshParams::new(0.15, 3);
        params.angular_breaks = vec![0.0, PI / 8.0, PI / 4.0, PI / 2.0];
        let mesh = build_mesh(&spec, &params).unwrap();
        assert_eq!(mesh.angular_count(), 3);
        assert_eq!(mesh.elements[1].coefficient, 1.0);
        assert_eq!(mesh.elements[2].coefficient, 5.0);
        assert!(mesh.dump().contains("ArcToConstant"));
    }
}
