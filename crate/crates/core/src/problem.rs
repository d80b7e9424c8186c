//! Problem description: singular points with sectoral coefficient partitions,
//! boundary segments with their condition kind and data, and the source term.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::singularity::SingularSolution;

/// Angular tolerance used to decide whether a point lies on an interface ray.
pub const ANGLE_TOL: f64 = 1e-12;
const GEOM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const ORIGIN: Point = Point { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn from_polar(center: Point, r: f64, theta: f64) -> Self {
        Point::new(center.x + r * theta.cos(), center.y + r * theta.sin())
    }

    pub fn dist(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Condition imposed at an end of a non-periodic sector span.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum EndKind {
    Dirichlet,
    Neumann,
}

/// How the angular span of a partition is closed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Closure {
    /// Open span with a boundary condition at each end ray.
    Ends { start: EndKind, end: EndKind },
    /// Full turn; the seam ray `breakpoints[0]` is an interface between the
    /// last and first sectors.
    Periodic,
}

/// Piecewise-constant coefficients on angular sectors around a singular point.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SectorPartition {
    /// Angles Θ in radians, strictly increasing.
    pub breakpoints: Vec<f64>,
    pub closure: Closure,
    /// One positive coefficient per sector.
    pub coefficients: Vec<f64>,
}

/// One invariant violation found by validation.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub location: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

impl SectorPartition {
    pub fn new(breakpoints: Vec<f64>, closure: Closure, coefficients: Vec<f64>) -> Self {
        SectorPartition {
            breakpoints,
            closure,
            coefficients,
        }
    }

    /// Quarter sector with an interface at π/4: coefficient 1 below, `p` above,
    /// Dirichlet on θ = 0 and Neumann on θ = π/2.
    pub fn quarter_with_diagonal_interface(p: f64) -> Self {
        SectorPartition::new(
            vec![0.0, PI / 4.0, PI / 2.0],
            Closure::Ends {
                start: EndKind::Dirichlet,
                end: EndKind::Neumann,
            },
            vec![1.0, p],
        )
    }

    /// Full disc with interfaces on θ = 0 and θ = π/2: coefficient 1 in the
    /// first quadrant, `p` in the remaining three.
    pub fn crossing_interfaces(p: f64) -> Self {
        SectorPartition::new(vec![0.0, PI / 2.0, TAU], Closure::Periodic, vec![1.0, p])
    }

    pub fn sector_count(&self) -> usize {
        self.breakpoints.len().saturating_sub(1)
    }

    pub fn start(&self) -> f64 {
        self.breakpoints[0]
    }

    pub fn end(&self) -> f64 {
        *self.breakpoints.last().expect("nonempty breakpoints")
    }

    pub fn span(&self) -> f64 {
        self.end() - self.start()
    }

    pub fn is_periodic(&self) -> bool {
        matches!(self.closure, Closure::Periodic)
    }

    /// Angles of all interface rays (interior breakpoints, plus the seam for
    /// periodic closure).
    pub fn interface_angles(&self) -> Vec<f64> {
        let n = self.breakpoints.len();
        let mut out: Vec<f64> = self.breakpoints[1..n.saturating_sub(1)].to_vec();
        if self.is_periodic() {
            out.insert(0, self.start());
        }
        out
    }

    /// Reduces `theta` into the partition span (periodic spans wrap).
    pub fn normalize_angle(&self, theta: f64) -> Option<f64> {
        let (a, b) = (self.start(), self.end());
        if self.is_periodic() {
            let mut t = (theta - a).rem_euclid(TAU) + a;
            if (t - b).abs() < ANGLE_TOL {
                t = a;
            }
            Some(t)
        } else if theta >= a - ANGLE_TOL && theta <= b + ANGLE_TOL {
            Some(theta.clamp(a, b))
        } else {
            // The caller may pass an angle from atan2 that differs by a full turn.
            let t = (theta - a).rem_euclid(TAU) + a;
            (t <= b + ANGLE_TOL).then(|| t.min(b))
        }
    }

    /// Sector index containing `theta`, with ties resolved to the lower sector.
    pub fn sector_index(&self, theta: f64) -> Option<usize> {
        let t = self.normalize_angle(theta)?;
        let m = self.sector_count();
        (0..m)
            .find(|&i| t <= self.breakpoints[i + 1] + ANGLE_TOL)
            .or(Some(m - 1))
    }

    /// True if `theta` coincides with an interface ray.
    pub fn on_interface(&self, theta: f64) -> bool {
        let Some(t) = self.normalize_angle(theta) else {
            return false;
        };
        self.interface_angles().iter().any(|&a| {
            let d = (t - a).abs();
            d < ANGLE_TOL || (self.is_periodic() && (TAU - d).abs() < ANGLE_TOL)
        })
    }

    pub fn violations(&self, location: &str) -> Vec<Violation> {
        let mut out = Vec::new();
        let push = |out: &mut Vec<Violation>, msg: String| {
            out.push(Violation {
                location: location.to_string(),
                message: msg,
            })
        };
        if self.breakpoints.len() < 2 {
            push(&mut out, "fewer than two breakpoints".into());
            return out;
        }
        if self.breakpoints.iter().any(|b| !b.is_finite()) {
            push(&mut out, "breakpoints not finite".into());
        }
        if self.breakpoints.windows(2).any(|w| w[1] <= w[0]) {
            push(&mut out, "breakpoints not increasing".into());
        }
        let span = self.span();
        if span > TAU + ANGLE_TOL {
            push(&mut out, format!("span {span} exceeds 2π"));
        }
        if self.is_periodic() && (span - TAU).abs() > 1e-10 {
            push(&mut out, format!("periodic closure requires span 2π, got {span}"));
        }
        if self.coefficients.len() != self.sector_count() {
            push(
                &mut out,
                format!(
                    "coefficient count {} does not match sector count {}",
                    self.coefficients.len(),
                    self.sector_count()
                ),
            );
        }
        for (i, &p) in self.coefficients.iter().enumerate() {
            if !(p > 0.0 && p.is_finite()) {
                push(&mut out, format!("nonpositive coefficient p[{i}] = {p}"));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum BoundaryKind {
    Dirichlet,
    Neumann,
}

/// Parametrized boundary curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Curve {
    Segment { from: Point, to: Point },
    /// Counter-clockwise arc from `start_angle` to `end_angle`.
    Arc {
        center: Point,
        radius: f64,
        start_angle: f64,
        end_angle: f64,
    },
}

impl Curve {
    pub fn length(&self) -> f64 {
        match *self {
            Curve::Segment { from, to } => from.dist(to),
            Curve::Arc {
                radius,
                start_angle,
                end_angle,
                ..
            } => radius * (end_angle - start_angle),
        }
    }

    pub fn point_at(&self, s: f64) -> Point {
        match *self {
            Curve::Segment { from, to } => {
                let l = from.dist(to);
                let t = if l > 0.0 { s / l } else { 0.0 };
                Point::new(from.x + t * (to.x - from.x), from.y + t * (to.y - from.y))
            }
            Curve::Arc {
                center,
                radius,
                start_angle,
                ..
            } => Point::from_polar(center, radius, start_angle + s / radius),
        }
    }

    /// Arclength parameter of `p` if it lies on the curve.
    pub fn arclength_of(&self, p: Point) -> Option<f64> {
        match *self {
            Curve::Segment { from, to } => {
                let (dx, dy) = (to.x - from.x, to.y - from.y);
                let l2 = dx * dx + dy * dy;
                let t = ((p.x - from.x) * dx + (p.y - from.y) * dy) / l2;
                if !(-GEOM_TOL..=1.0 + GEOM_TOL).contains(&t) {
                    return None;
                }
                let q = Point::new(from.x + t * dx, from.y + t * dy);
                (q.dist(p) < GEOM_TOL).then(|| t.clamp(0.0, 1.0) * l2.sqrt())
            }
            Curve::Arc {
                center,
                radius,
                start_angle,
                end_angle,
            } => {
                if (p.dist(center) - radius).abs() > GEOM_TOL {
                    return None;
                }
                let th = ((p.y - center.y).atan2(p.x - center.x) - start_angle).rem_euclid(TAU);
                let span = end_angle - start_angle;
                if th <= span + GEOM_TOL / radius {
                    Some(radius * th.min(span))
                } else if TAU - th < GEOM_TOL / radius {
                    // Just below the start angle.
                    Some(0.0)
                } else {
                    None
                }
            }
        }
    }

    pub fn contains(&self, p: Point) -> bool {
        self.arclength_of(p).is_some()
    }

    /// Distance from `p` to the curve's carrier line or circle.
    pub fn offset(&self, p: Point) -> f64 {
        match *self {
            Curve::Segment { from, to } => {
                let (dx, dy) = (to.x - from.x, to.y - from.y);
                ((p.x - from.x) * dy - (p.y - from.y) * dx).abs() / (dx * dx + dy * dy).sqrt()
            }
            Curve::Arc { center, radius, .. } => (p.dist(center) - radius).abs(),
        }
    }
}

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type SourceFn = Arc<dyn Fn(Point) -> f64 + Send + Sync>;

/// Boundary piece with a condition kind. `data` is a function of arclength:
/// the trace value for Dirichlet, the outward normal derivative for Neumann.
#[derive(Clone)]
pub struct BoundarySegment {
    pub geometry: Curve,
    pub kind: BoundaryKind,
    pub data: ScalarFn,
}

impl fmt::Debug for BoundarySegment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BoundarySegment")
            .field("geometry", &self.geometry)
            .field("kind", &self.kind)
            .finish_non_exhaustive()
    }
}

impl BoundarySegment {
    pub fn new(geometry: Curve, kind: BoundaryKind, data: ScalarFn) -> Self {
        BoundarySegment {
            geometry,
            kind,
            data,
        }
    }

    pub fn homogeneous(geometry: Curve, kind: BoundaryKind) -> Self {
        BoundarySegment::new(geometry, kind, Arc::new(|_| 0.0))
    }

    /// Data value at a point of the segment.
    pub fn data_at(&self, p: Point) -> Option<f64> {
        self.geometry.arclength_of(p).map(|s| (self.data)(s))
    }
}

/// A point where interfaces meet each other or the boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct SingularPoint {
    pub center: Point,
    pub partition: SectorPartition,
    /// Length of the interface rays leaving the point.
    pub extent: f64,
}

#[derive(Clone)]
pub struct ProblemSpec {
    pub singular_points: Vec<SingularPoint>,
    pub boundary: Vec<BoundarySegment>,
    pub source: SourceFn,
    pub exact: Option<SingularSolution>,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("singular_points", &self.singular_points)
            .field("boundary", &self.boundary)
            .field("exact", &self.exact)
            .finish_non_exhaustive()
    }
}

impl ProblemSpec {
    /// Boundary segment containing `p`, if any.
    /// The boundary segment through `p`. Near a corner several segments are
    /// within tolerance; the closest one wins.
    pub fn segment_at(&self, p: Point) -> Option<&BoundarySegment> {
        self.boundary
            .iter()
            .filter(|s| s.geometry.contains(p))
            .min_by(|a, b| a.geometry.offset(p).total_cmp(&b.geometry.offset(p)))
    }

    /// True when `p` lies on a Dirichlet segment.
    pub fn is_dirichlet_point(&self, p: Point) -> bool {
        self.boundary
            .iter()
            .any(|s| s.kind == BoundaryKind::Dirichlet && s.geometry.contains(p))
    }
}

/// Circular sector (or disc, for periodic closure) of the given radius around
/// the origin, carrying `exact` as the manufactured solution: Dirichlet data
/// on the outer arc is the trace of `exact`, the end rays carry homogeneous
/// data of the partition's end kinds, and the source vanishes.
pub fn sector_problem(exact: SingularSolution, radius: f64) -> ProblemSpec {
    let part = exact.partition.clone();
    let (a, b) = (part.start(), part.end());
    let arc = Curve::Arc {
        center: Point::ORIGIN,
        radius,
        start_angle: a,
        end_angle: b,
    };
    let trace = exact.clone();
    let arc_data: ScalarFn = Arc::new(move |s| {
        trace
            .evaluate(radius, a + s / radius)
            .map(|e| e.value)
            .unwrap_or(f64::NAN)
    });
    let mut boundary = Vec::new();
    if let Closure::Ends { start, end } = part.closure {
        let kind = |k: EndKind| match k {
            EndKind::Dirichlet => BoundaryKind::Dirichlet,
            EndKind::Neumann => BoundaryKind::Neumann,
        };
        boundary.push(BoundarySegment::homogeneous(
            Curve::Segment {
                from: Point::ORIGIN,
                to: Point::from_polar(Point::ORIGIN, radius, a),
            },
            kind(start),
        ));
        boundary.push(BoundarySegment::new(arc, BoundaryKind::Dirichlet, arc_data));
        boundary.push(BoundarySegment::homogeneous(
            Curve::Segment {
                from: Point::from_polar(Point::ORIGIN, radius, b),
                to: Point::ORIGIN,
            },
            kind(end),
        ));
    } else {
        boundary.push(BoundarySegment::new(arc, BoundaryKind::Dirichlet, arc_data));
    }
    ProblemSpec {
        singular_points: vec![SingularPoint {
            center: Point::ORIGIN,
            partition: part,
            extent: radius,
        }],
        boundary,
        source: Arc::new(|_| 0.0),
        exact: Some(exact),
    }
}

/// Returns every invariant violation of `spec`; empty iff well-formed.
pub fn validate_problem(spec: &ProblemSpec) -> Vec<Violation> {
    let mut out = Vec::new();
    if spec.singular_points.is_empty() {
        out.push(Violation {
            location: "problem".into(),
            message: "no singular points".into(),
        });
    }
    for (k, sp) in spec.singular_points.iter().enumerate() {
        let loc = format!("singular point {k}");
        let pv = sp.partition.violations(&loc);
        let partition_ok = pv.is_empty();
        out.extend(pv);
        if !(sp.extent > 0.0 && sp.extent.is_finite()) {
            out.push(Violation {
                location: loc.clone(),
                message: format!("nonpositive ray extent {}", sp.extent),
            });
            continue;
        }
        if !partition_ok {
            continue;
        }
        // Every ray must end on the boundary or at another singular point.
        let mut rays = sp.partition.interface_angles();
        if !sp.partition.is_periodic() {
            rays.push(sp.partition.start());
            rays.push(sp.partition.end());
        }
        for theta in rays {
            let tip = Point::from_polar(sp.center, sp.extent, theta);
            let on_boundary = spec.boundary.iter().any(|s| s.geometry.contains(tip));
            let at_point = spec
                .singular_points
                .iter()
                .enumerate()
                .any(|(j, o)| j != k && o.center.dist(tip) < GEOM_TOL);
            if !on_boundary && !at_point {
                out.push(Violation {
                    location: format!("{loc}, ray θ = {theta:.6}"),
                    message: "interface ray does not terminate on the boundary or at a singular point"
                        .into(),
                });
            }
        }
    }
    // Overlapping sector regions of distinct points must agree on p.
    for (k, a) in spec.singular_points.iter().enumerate() {
        for (j, b) in spec.singular_points.iter().enumerate().skip(k + 1) {
            if let Some(v) = overlap_conflict(a, b) {
                out.push(Violation {
                    location: format!("singular points {k} and {j}"),
                    message: v,
                });
            }
        }
    }
    for (i, seg) in spec.boundary.iter().enumerate() {
        if !(seg.geometry.length() > 0.0) {
            out.push(Violation {
                location: format!("boundary segment {i}"),
                message: "degenerate boundary curve".into(),
            });
        }
    }
    out
}

fn local_coefficient(sp: &SingularPoint, p: Point) -> Option<f64> {
    let r = p.dist(sp.center);
    if r <= GEOM_TOL || r >= sp.extent {
        return None;
    }
    let th = (p.y - sp.center.y).atan2(p.x - sp.center.x);
    let t = sp.partition.normalize_angle(th)?;
    if sp.partition.on_interface(t) {
        return None;
    }
    let i = sp.partition.sector_index(t)?;
    sp.partition.coefficients.get(i).copied()
}

fn overlap_conflict(a: &SingularPoint, b: &SingularPoint) -> Option<String> {
    let m = a.partition.sector_count().max(1);
    for i in 0..m {
        let (lo, hi) = (a.partition.breakpoints[i], a.partition.breakpoints[i + 1]);
        for fr in [0.25, 0.5, 0.75] {
            for fa in [0.3, 0.7] {
                let th = lo + fa * (hi - lo);
                let p = Point::from_polar(a.center, fr * a.extent, th);
                if let (Some(pa), Some(pb)) = (local_coefficient(a, p), local_coefficient(b, p)) {
                    if (pa - pb).abs() > 1e-12 * pa.max(pb) {
                        return Some(format!(
                            "inconsistent coefficient at ({:.4}, {:.4}): {pa} vs {pb}",
                            p.x, p.y
                        ));
                    }
                }
            }
        }
    }
    None
}

/// Coefficient of the sector containing `point`.
pub fn coefficient_at(spec: &ProblemSpec, point: Point) -> Result<f64> {
    for sp in &spec.singular_points {
        let r = point.dist(sp.center);
        if r > sp.extent + GEOM_TOL {
            continue;
        }
        let th = (point.y - sp.center.y).atan2(point.x - sp.center.x);
        let Some(t) = sp.partition.normalize_angle(th) else {
            continue;
        };
        if r > 0.0 && sp.partition.on_interface(t) || r == 0.0 {
            return Err(Error::AmbiguousCoefficient { theta: t });
        }
        let i = sp
            .partition
            .sector_index(t)
            .ok_or_else(|| Error::OutsideDomain(format!("({}, {})", point.x, point.y)))?;
        return Ok(sp.partition.coefficients[i]);
    }
    Err(Error::OutsideDomain(format!("({}, {})", point.x, point.y)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::singularity::SingularSolution;

    fn example_one(p: f64) -> ProblemSpec {
        let part = SectorPartition::quarter_with_diagonal_interface(p);
        sector_problem(SingularSolution::leading(&part).unwrap(), 1.0)
    }

    #[test]
    fn model_configurations_validate() {
        assert!(validate_problem(&example_one(5.0)).is_empty());
        let part = SectorPartition::crossing_interfaces(500.0);
        let spec = sector_problem(SingularSolution::leading(&part).unwrap(), 1.0);
        assert_eq!(validate_problem(&spec), vec![]);
    }

    #[test]
    fn negative_coefficient_is_reported() {
        let mut spec = example_one(5.0);
        spec.singular_points[0].partition.coefficients[1] = -1.0;
        let v = validate_problem(&spec);
        assert_eq!(v.len(), 1);
        assert!(v[0].message.contains("nonpositive coefficient"));
    }

    #[test]
    fn unordered_breakpoints_are_reported() {
        let mut spec = example_one(5.0);
        spec.singular_points[0].partition.breakpoints = vec![0.0, PI / 2.0, PI / 4.0];
        let v = validate_problem(&spec);
        assert_eq!(v.len(), 1);
        assert!(v[0].message.contains("breakpoints not increasing"));
    }

    #[test]
    fn periodic_span_must_be_full_turn() {
        let p = SectorPartition::new(vec![0.0, 1.0, 3.0], Closure::Periodic, vec![1.0, 2.0]);
        assert!(p.violations("x").iter().any(|v| v.message.contains("2π")));
    }

    #[test]
    fn dangling_ray_is_reported() {
        let mut spec = example_one(5.0);
        spec.singular_points[0].extent = 0.5;
        assert!(!validate_problem(&spec).is_empty());
    }

    #[test]
    fn coefficient_lookup() {
        let spec = example_one(5.0);
        let at = |r: f64, th: f64| coefficient_at(&spec, Point::from_polar(Point::ORIGIN, r, th));
        assert_eq!(at(0.5, PI / 8.0).unwrap(), 1.0);
        assert_eq!(at(0.5, 3.0 * PI / 8.0).unwrap(), 5.0);
        assert!(matches!(at(0.5, PI / 4.0), Err(Error::AmbiguousCoefficient { .. })));
    }

    #[test]
    fn periodic_seam_is_an_interface() {
        let part = SectorPartition::crossing_interfaces(10.0);
        let spec = sector_problem(SingularSolution::leading(&part).unwrap(), 1.0);
        assert!(coefficient_at(&spec, Point::new(0.5, 0.0)).is_err());
        assert_eq!(coefficient_at(&spec, Point::new(0.5, -0.1)).unwrap(), 10.0);
        assert_eq!(coefficient_at(&spec, Point::new(0.5, 0.1)).unwrap(), 1.0);
    }

    #[test]
    fn coefficient_constant_along_rays() {
        let spec = example_one(30.0);
        for th in [0.1, 0.5, 0.9, 1.2, 1.5] {
            let first = coefficient_at(&spec, Point::from_polar(Point::ORIGIN, 0.01, th)).unwrap();
            for r in [0.1, 0.4, 0.8, 0.99] {
                let v = coefficient_at(&spec, Point::from_polar(Point::ORIGIN, r, th)).unwrap();
                assert_eq!(v, first);
            }
        }
    }

    #[test]
    fn arc_arclength_round_trip() {
        let c = Curve::Arc {
            center: Point::ORIGIN,
            radius: 2.0,
            start_angle: 0.0,
            end_angle: TAU,
        };
        for s in [0.0, 1.0, 5.0, 12.0] {
            let p = c.point_at(s);
            assert!((c.arclength_of(p).unwrap() - s).abs() < 1e-9);
        }
        assert!(c.arclength_of(Point::new(1.0, 0.0)).is_none());
    }
}
