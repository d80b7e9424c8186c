//! End-to-end runs on the two model problems, error measurement and
//! convergence studies.
//!
//! Each run solves `-∇·(p∇u) = 0` on the unit sector or disc with Dirichlet
//! data on `r = 1` taken from the leading singular function, so the exact
//! solution is `r^λ₀ W(θ)`.

use std::f64::consts::PI;
use std::fmt;
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::basis::{gauss_legendre, gll_grid};
use crate::functional::{Discretization, WeightConfig};
use crate::mesh::{build_mesh, Chart, MeshParams, DEFAULT_RHO};
use crate::problem::{sector_problem, validate_problem, SectorPartition};
use crate::singularity::SingularSolution;
use crate::solver::{default_max_iter, solve, PreconditionerKind, SolveOptions, DEFAULT_TOL};
use crate::{Error, Result};

/// Pipeline stage, used to tag failures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Stage {
    Config,
    Singularity,
    Problem,
    Mesh,
    Assembly,
    Solve,
    Measurement,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Config => "config",
            Stage::Singularity => "singularity",
            Stage::Problem => "problem",
            Stage::Mesh => "mesh",
            Stage::Assembly => "assembly",
            Stage::Solve => "solve",
            Stage::Measurement => "measurement",
        };
        f.write_str(s)
    }
}

#[derive(Debug, thiserror::Error)]
#[error("[{stage}] {source}")]
pub struct RunError {
    pub stage: Stage,
    pub source: Error,
}

trait Tag<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, RunError>;
}

impl<T> Tag<T> for Result<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, RunError> {
        self.map_err(|source| RunError { stage, source })
    }
}

/// Parses a geometric ratio: a real literal or one of `e-pi`, `e-1.5pi`,
/// `e-2pi` (meaning `e^{-kπ}`).
pub fn parse_mu(s: &str) -> Result<f64> {
    let t = s.trim().to_ascii_lowercase().replace(['^', ' '], "");
    let value = if let Some(rest) = t.strip_prefix("e-") {
        let k = rest
            .strip_suffix("pi")
            .ok_or_else(|| Error::InvalidParameter(format!("cannot parse ratio `{s}`")))?;
        let k: f64 = if k.is_empty() {
            1.0
        } else {
            k.parse()
                .map_err(|_| Error::InvalidParameter(format!("cannot parse ratio `{s}`")))?
        };
        (-k * PI).exp()
    } else {
        t.parse()
            .map_err(|_| Error::InvalidParameter(format!("cannot parse ratio `{s}`")))?
    };
    if !(value > 0.0 && value < 1.0) {
        return Err(Error::InvalidParameter(format!("ratio must lie in (0, 1), got {value}")));
    }
    Ok(value)
}

/// Partition of model problem 1 (quarter sector) or 2 (disc).
pub fn example_partition(example: u8, p: f64) -> Result<SectorPartition> {
    match example {
        1 => Ok(SectorPartition::quarter_with_diagonal_interface(p)),
        2 => Ok(SectorPartition::crossing_interfaces(p)),
        _ => Err(Error::InvalidParameter(format!("example must be 1 or 2, got {example}"))),
    }
}

/// Default geometric ratio of each model problem.
pub fn default_mu(example: u8) -> f64 {
    if example == 2 {
        (-PI).exp()
    } else {
        0.15
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub partition: SectorPartition,
    pub mu: f64,
    pub degree: usize,
    /// Layer count N; defaults to the degree.
    pub layers: Option<usize>,
    pub alpha: Option<f64>,
    pub tol: f64,
    pub max_iter: Option<usize>,
    pub rho: f64,
    pub interior_layers: usize,
    pub angular_breaks: Vec<f64>,
    pub preconditioner: PreconditionerKind,
}

impl RunConfig {
    pub fn example(example: u8, p: f64, mu: f64, degree: usize) -> Result<Self> {
        Ok(RunConfig::custom(example_partition(example, p)?, mu, degree))
    }

    pub fn custom(partition: SectorPartition, mu: f64, degree: usize) -> Self {
        RunConfig {
            partition,
            mu,
            degree,
            layers: None,
            alpha: None,
            tol: DEFAULT_TOL,
            max_iter: None,
            rho: DEFAULT_RHO,
            interior_layers: 1,
            angular_breaks: Vec::new(),
            preconditioner: PreconditionerKind::default(),
        }
    }

    pub fn layer_count(&self) -> usize {
        self.layers.unwrap_or(self.degree)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0 && self.mu < 1.0) {
            return Err(Error::InvalidParameter(format!("mu must lie in (0, 1), got {}", self.mu)));
        }
        if self.degree < 2 {
            return Err(Error::InvalidParameter(format!("W must be at least 2, got {}", self.degree)));
        }
        if self.layer_count() < 2 {
            return Err(Error::InvalidParameter(format!(
                "N must be at least 2, got {}",
                self.layer_count()
            )));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParameter(format!("tol must be positive, got {}", self.tol)));
        }
        if let Some(a) = self.alpha {
            if !(a > 0.0 && a.is_finite()) {
                return Err(Error::InvalidParameter(format!("alpha must be positive, got {a}")));
            }
        }
        let v = self.partition.violations("partition");
        if let Some(first) = v.first() {
            return Err(Error::InvalidProblem(first.to_string()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub degree: usize,
    pub layers: usize,
    pub mu: f64,
    pub lambda0: f64,
    pub alpha: f64,
    pub relative_error_percent: f64,
    pub iterations: usize,
    pub converged: bool,
    pub functional: f64,
    pub unknowns: usize,
    pub seconds: f64,
}

/// Prepared problem: exact solution and assembled functional.
pub struct Prepared {
    pub exact: SingularSolution,
    pub disc: Discretization,
}

pub fn prepare(config: &RunConfig) -> std::result::Result<Prepared, RunError> {
    config.validate().at(Stage::Config)?;
    let exact = SingularSolution::leading(&config.partition).at(Stage::Singularity)?;
    let spec = sector_problem(exact.clone(), 1.0);
    if let Some(v) = validate_problem(&spec).first() {
        return Err(RunError {
            stage: Stage::Problem,
            source: Error::InvalidProblem(v.to_string()),
        });
    }
    let params = MeshParams {
        rho: config.rho,
        ratio: config.mu,
        layers: config.layer_count(),
        angular_breaks: config.angular_breaks.clone(),
        interior_layers: config.interior_layers,
    };
    let mesh = build_mesh(&spec, &params).at(Stage::Mesh)?;
    let grid = gll_grid(config.degree).at(Stage::Config)?;
    let weights = match config.alpha {
        Some(alpha) => WeightConfig { alpha },
        None => WeightConfig::for_exponent(exact.lambda0),
    };
    let disc = Discretization::new(&spec, mesh, grid, weights).at(Stage::Assembly)?;
    Ok(Prepared { exact, disc })
}

/// Full pipeline: singular exponent, mesh, solve, correction, error.
pub fn run(config: &RunConfig, progress: impl FnMut(usize, f64)) -> std::result::Result<RunReport, RunError> {
    let start = Instant::now();
    let Prepared { exact, disc } = prepare(config)?;
    let opts = SolveOptions {
        tol: config.tol,
        max_iter: config.max_iter.unwrap_or_else(|| default_max_iter(config.degree)),
        preconditioner: config.preconditioner,
    };
    let sol = solve(&disc, opts, progress).at(Stage::Solve)?;
    let corrected = make_conforming(&disc, &sol.u);
    let err = h1_relative_error(&disc, &corrected, &exact).at(Stage::Measurement)?;
    Ok(RunReport {
        degree: config.degree,
        layers: config.layer_count(),
        mu: config.mu,
        lambda0: exact.lambda0,
        alpha: disc.weights.alpha,
        relative_error_percent: err,
        iterations: sol.iterations,
        converged: sol.converged,
        functional: sol.functional,
        unknowns: disc.layout.len,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Makes the solution continuous at the GLL points of every shared edge and
/// corner. Nodes that coincide get the coefficient-weighted mean of their
/// values: moving a trace node by δ shifts that element's normal derivative
/// by about `D·δ/h`, so with weights `p` the two sides' flux changes cancel
/// and the interface flux jump stays put. Interior nodes are not touched.
pub fn make_conforming(d: &Discretization, u: &[f64]) -> Vec<f64> {
    use std::collections::BTreeMap;
    let g = &d.grid;
    let n = g.len();
    let mut groups: BTreeMap<(i64, i64), Vec<(usize, f64)>> = BTreeMap::new();
    for el in d.mesh.polynomial_elements() {
        let o = d.layout.offsets[el.id].expect("polynomial element");
        for b in 0..n {
            for a in 0..n {
                if a != 0 && a != n - 1 && b != 0 && b != n - 1 {
                    continue;
                }
                let (r, theta) = el.polar_point(g.nodes[a], g.nodes[b]);
                let t = theta.rem_euclid(2.0 * PI);
                let t = if 2.0 * PI - t < 1e-9 { 0.0 } else { t };
                let key = ((r.ln() * 1e8).round() as i64, (t * 1e8).round() as i64);
                groups.entry(key).or_default().push((o + b * n + a, el.coefficient));
            }
        }
    }
    let mut out = u.to_vec();
    for idx in groups.values().filter(|v| v.len() > 1) {
        let wsum: f64 = idx.iter().map(|&(_, w)| w).sum();
        let mean = idx.iter().map(|&(i, w)| w * u[i]).sum::<f64>() / wsum;
        for &(i, _) in idx {
            out[i] = mean;
        }
    }
    out
}

/// Gauss points per direction for error integrals.
fn error_points(degree: usize) -> usize {
    degree + 1 + 16
}

/// Squared broken H¹ norm of `u_h - exact` over all elements, including the
/// analytic contribution of the innermost sector where `u_h = h`.
pub fn h1_error_sq(d: &Discretization, u: &[f64], exact: &SingularSolution) -> f64 {
    h1_error_by_element(d, u, exact).iter().sum()
}

/// Per-element terms of [`h1_error_sq`], indexed by element id.
pub fn h1_error_by_element(d: &Discretization, u: &[f64], exact: &SingularSolution) -> Vec<f64> {
    let g = &d.grid;
    let n = g.len();
    let ng = error_points(d.grid.degree);
    let (gx, gw) = gauss_legendre(ng);
    let li = g.interpolation_to(&gx);
    let ld = &li * &g.diff;
    let l = exact.lambda0;
    let h = u[d.layout.constant_index(0)];
    d.mesh
        .elements
        .par_iter()
        .map(|el| {
            let (hs, ht) = el.half_widths();
            if !el.has_polynomial() {
                return strip_error_sq(exact, el.sector, el.t, el.s.1.exp(), h);
            }
            let o = d.layout.offsets[el.id].expect("polynomial element");
            let x = DMatrix::from_column_slice(n, n, &u[o..o + n * n]);
            let val = &li * &x * li.transpose();
            let ds = &ld * &x * li.transpose() / hs;
            let dt = &li * &x * ld.transpose() / ht;
            let mut acc = 0.0;
            for j in 0..ng {
                for i in 0..ng {
                    let (s, theta) = el.chart_point(gx[i], gx[j]);
                    let (w, dw) = exact.angular_in(el.sector, theta);
                    let wq = gw[i] * gw[j] * hs * ht;
                    acc += match el.chart {
                        Chart::LogPolar => {
                            let rl = (l * s).exp();
                            let e = val[(i, j)] - rl * w;
                            let et = ds[(i, j)] - l * rl * w;
                            let eth = dt[(i, j)] - rl * dw;
                            wq * (e * e * (2.0 * s).exp() + et * et + eth * eth)
                        }
                        Chart::Polar => {
                            let r = s;
                            let rl = r.powf(l);
                            let e = val[(i, j)] - rl * w;
                            let er = ds[(i, j)] - l * rl / r * w;
                            let eth = dt[(i, j)] - rl * dw;
                            wq * r * (e * e + er * er + eth * eth / (r * r))
                        }
                    };
                }
            }
            acc
        })
        .collect()
}

/// `∫_0^s ∫_{t0}^{t1} (r^λW - h)² + |∇(r^λW)|² r dr dθ`.
fn strip_error_sq(exact: &SingularSolution, sector: usize, t: (f64, f64), s: f64, h: f64) -> f64 {
    let (a, b, gsum) = angular_integrals(exact, sector, t);
    let l = exact.lambda0;
    a * s.powf(2.0 * l + 2.0) / (2.0 * l + 2.0) - 2.0 * h * b * s.powf(l + 2.0) / (l + 2.0)
        + h * h * (t.1 - t.0) * s * s / 2.0
        + gsum * s.powf(2.0 * l) / (2.0 * l)
}

/// `(∫W², ∫W, ∫λ²W² + W'²)` over an angular interval inside one sector.
fn angular_integrals(exact: &SingularSolution, sector: usize, t: (f64, f64)) -> (f64, f64, f64) {
    let (gx, gw) = gauss_legendre(32);
    let half = 0.5 * (t.1 - t.0);
    let l = exact.lambda0;
    let mut out = (0.0, 0.0, 0.0);
    for (x, w) in gx.iter().zip(&gw) {
        let (v, dv) = exact.angular_in(sector, 0.5 * (t.0 + t.1) + half * x);
        out.0 += w * half * v * v;
        out.1 += w * half * v;
        out.2 += w * half * (l * l * v * v + dv * dv);
    }
    out
}

/// `‖u‖₁²` of the exact solution over the domain of radius `radius`.
pub fn exact_h1_norm_sq(exact: &SingularSolution, radius: f64) -> f64 {
    let l = exact.lambda0;
    let bp = &exact.partition.breakpoints;
    (0..exact.partition.sector_count())
        .map(|k| {
            let (a, _, g) = angular_integrals(exact, k, (bp[k], bp[k + 1]));
            a * radius.powf(2.0 * l + 2.0) / (2.0 * l + 2.0) + g * radius.powf(2.0 * l) / (2.0 * l)
        })
        .sum()
}

/// Relative H¹ error in percent.
pub fn h1_relative_error(d: &Discretization, u: &[f64], exact: &SingularSolution) -> Result<f64> {
    let norm = exact_h1_norm_sq(exact, d.mesh.outer_radius);
    if !(norm > 0.0) {
        return Err(Error::MissingExact);
    }
    Ok(100.0 * (h1_error_sq(d, u, exact) / norm).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyRow {
    pub degree: usize,
    pub error_percent: f64,
    pub iterations: usize,
    pub functional: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Study {
    pub rows: Vec<StudyRow>,
    /// Least-squares slope of log10(error) against W.
    pub slope: f64,
    pub r_squared: f64,
    /// First failing degree and its error, if the sweep stopped early.
    pub failure: Option<(usize, String)>,
}

/// Slope and coefficient of determination of the least-squares line through `(x, y)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, r2)
}

/// Runs `base` for each degree in `degrees` (layers follow the degree unless
/// `layers_factor` scales them) and fits the log-linear trend.
pub fn convergence_study(base: &RunConfig, degrees: std::ops::RangeInclusive<usize>, layers_factor: Option<usize>) -> Study {
    let ws: Vec<usize> = degrees.collect();
    let results: Vec<(usize, std::result::Result<RunReport, RunError>)> = ws
        .par_iter()
        .map(|&w| {
            let mut c = base.clone();
            c.degree = w;
            c.layers = layers_factor.map(|f| f * w).or(base.layers);
            (w, run(&c, |_, _| {}))
        })
        .collect();
    let mut rows = Vec::new();
    let mut failure = None;
    for (w, r) in results {
        match r {
            Ok(rep) => rows.push(StudyRow {
                degree: w,
                error_percent: rep.relative_error_percent,
                iterations: rep.iterations,
                functional: rep.functional,
                seconds: rep.seconds,
            }),
            Err(e) => {
                failure = Some((w, e.to_string()));
                break;
            }
        }
    }
    let x: Vec<f64> = rows.iter().map(|r| r.degree as f64).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.error_percent.log10()).collect();
    let (slope, r_squared) = if rows.len() >= 2 {
        linear_fit(&x, &y)
    } else {
        (f64::NAN, f64::NAN)
    };
    Study {
        rows,
        slope,
        r_squared,
        failure,
    }
}

pub fn csv(rows: &[StudyRow]) -> String {
    let mut s = String::from("W,error_percent,iterations,functional,seconds\n");
    for r in rows {
        s.push_str(&format!(
            "{},{:.8e},{},{:.8e},{:.3}\n",
            r.degree, r.error_percent, r.iterations, r.functional, r.seconds
        ));
    }
    s
}

pub fn table(rows: &[StudyRow]) -> String {
    let mut s = format!(
        "{:>3}  {:>14}  {:>6}  {:>12}  {:>8}\n",
        "W", "error %", "iters", "functional", "seconds"
    );
    for r in rows {
        s.push_str(&format!(
            "{:>3}  {:>14.8}  {:>6}  {:>12.4e}  {:>8.3}\n",
            r.degree, r.error_percent, r.iterations, r.functional, r.seconds
        ));
    }
    s
}

/// `W log10(error)` pairs, one per line.
pub fn plot_data(rows: &[StudyRow]) -> String {
    rows.iter()
        .map(|r| format!("{} {:.10}\n", r.degree, r.error_percent.log10()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn mu_literals() {
        assert_eq!(parse_mu("0.15").unwrap(), 0.15);
        assert_relative_eq!(parse_mu("e-pi").unwrap(), (-PI).exp());
        assert_relative_eq!(parse_mu("e-1.5pi").unwrap(), (-1.5 * PI).exp());
        assert_relative_eq!(parse_mu("e^-2pi").unwrap(), (-2.0 * PI).exp());
        assert!(parse_mu("1.5").is_err());
        assert!(parse_mu("e-x").is_err());
    }

    #[test]
    fn config_validation() {
        assert!(RunConfig::example(1, 5.0, 0.15, 1).unwrap().validate().is_err());
        assert!(RunConfig::example(3, 5.0, 0.15, 3).is_err());
        let mut c = RunConfig::example(1, 5.0, 0.15, 3).unwrap();
        c.layers = Some(1);
        assert!(c.validate().is_err());
        let e = run(&c, |_, _| {}).unwrap_err();
        assert_eq!(e.stage, Stage::Config);
    }

    #[test]
    fn fit() {
        let (s, r2) = linear_fit(&[1.0, 2.0, 3.0], &[1.0, 3.0, 5.0]);
        assert_relative_eq!(s, 2.0);
        assert_relative_eq!(r2, 1.0);
    }

    #[test]
    fn zero_approximation_is_full_error() {
        let c = RunConfig::example(1, 5.0, 0.15, 3).unwrap();
        let p = prepare(&c).unwrap();
        let u = vec![0.0; p.disc.layout.len];
        assert_relative_eq!(h1_relative_error(&p.disc, &u, &p.exact).unwrap(), 100.0, max_relative = 1e-9);
    }

    #[test]
    fn interpolation_error_decreases() {
        let mut last = f64::INFINITY;
        for w in [2, 4, 6, 8] {
            let c = RunConfig::example(1, 5.0, 0.15, w).unwrap();
            let p = prepare(&c).unwrap();
            let l = p.exact.lambda0;
            let u = p.disc.interpolate(|k, r, t| r.powf(l) * p.exact.angular_in(k, t).0, 0.0);
            let e = h1_relative_error(&p.disc, &u, &p.exact).unwrap();
            assert!(e < last, "W={w}: {e}");
            last = e;
        }
    }

    #[test]
    fn conforming_correction() {
        let c = RunConfig::example(1, 5.0, 0.15, 4).unwrap();
        let p = prepare(&c).unwrap();
        let l = p.exact.lambda0;
        let u = p.disc.interpolate(|k, r, t| r.powf(l) * p.exact.angular_in(k, t).0, 0.0);
        let v = make_conforming(&p.disc, &u);
        let diff = u.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-13, "{diff}");

        // Shift one element: shared traces become the midpoint.
        let mut w = u.clone();
        let first = p.disc.mesh.polynomial_elements().next().unwrap().id;
        let r = p.disc.layout.element_range(first).unwrap();
        let shifted: Vec<usize> = r.clone().collect();
        for i in r {
            w[i] += 1.0;
        }
        let fixed = make_conforming(&p.disc, &w);
        let n = p.disc.grid.len();
        let o = shifted[0];
        // Interior nodes untouched.
        assert_eq!(fixed[o + n + 1], w[o + n + 1]);
        // Node on the outer arc (shared with the next layer) moved halfway.
        let k = o + n + (n - 1);
        assert!((fixed[k] - (u[k] + 0.5)).abs() < 1e-12);
    }

    #[test]
    fn exact_norm_closed_form_for_smooth_case() {
        // p = 1: u = r sin θ on the quarter disc; ‖u‖₁² = π/16 + π/4.
        let part = SectorPartition::quarter_with_diagonal_interface(1.0);
        let exact = SingularSolution::leading(&part).unwrap();
        let scale = exact.angular_in(0, PI / 2.0).0; // W(π/2)
        assert_relative_eq!(
            exact_h1_norm_sq(&exact, 1.0) / (scale * scale),
            PI / 16.0 + PI / 4.0,
            max_relative = 1e-10
        );
    }

    #[test]
    fn output_formats() {
        let rows = vec![StudyRow {
            degree: 2,
            error_percent: 10.0,
            iterations: 5,
            functional: 1e-3,
            seconds: 0.01,
        }];
        assert!(csv(&rows).starts_with("W,error_percent"));
        assert!(table(&rows).contains("iters"));
        assert_eq!(plot_data(&rows), "2 1.0000000000\n");
    }
}
