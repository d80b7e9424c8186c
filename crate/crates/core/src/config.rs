//! Plain-text run configuration.
//!
//! ```text
//! # model problem, or give breakpoints/coefficients/closure instead
//! example = 1
//! p = 5.0
//! mu = "e-pi"            # or a number
//! W = 6
//! N = 6
//! rho = 0.5
//! interior_layers = 1
//! # custom partition, angles in units of π
//! breakpoints = [0.0, 0.25, 0.5]
//! coefficients = [1.0, 5.0]
//! closure = "dirichlet-neumann"   # or "periodic"
//! angular_breaks = [0.0, 0.125, 0.25, 0.5]
//! preconditioner = "block"       # or "separable"
//! ```

use std::f64::consts::PI;
use std::path::Path;

use serde::Deserialize;

use crate::harness::{default_mu, example_partition, parse_mu, RunConfig};
use crate::problem::{Closure, EndKind, SectorPartition};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum Ratio {
    Number(f64),
    Text(String),
}

impl Ratio {
    pub fn value(&self) -> Result<f64> {
        match self {
            Ratio::Number(x) => parse_mu(&x.to_string()),
            Ratio::Text(s) => parse_mu(s),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub example: Option<u8>,
    pub p: Option<f64>,
    pub mu: Option<Ratio>,
    #[serde(rename = "W")]
    pub degree: Option<usize>,
    #[serde(rename = "N")]
    pub layers: Option<usize>,
    pub alpha: Option<f64>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub rho: Option<f64>,
    pub interior_layers: Option<usize>,
    pub breakpoints: Option<Vec<f64>>,
    pub coefficients: Option<Vec<f64>>,
    pub closure: Option<String>,
    pub angular_breaks: Option<Vec<f64>>,
    pub preconditioner: Option<String>,
}

pub fn parse_closure(s: &str) -> Result<Closure> {
    let kind = |k: &str| match k {
        "dirichlet" | "d" => Ok(EndKind::Dirichlet),
        "neumann" | "n" => Ok(EndKind::Neumann),
        _ => Err(Error::Config(format!("unknown end condition `{k}`"))),
    };
    let s = s.trim().to_ascii_lowercase();
    if s == "periodic" {
        return Ok(Closure::Periodic);
    }
    let (a, b) = s
        .split_once('-')
        .ok_or_else(|| Error::Config(format!("closure `{s}` is not `periodic` or `<start>-<end>`")))?;
    Ok(Closure::Ends {
        start: kind(a)?,
        end: kind(b)?,
    })
}

impl FileConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// The partition described by the file: a model problem or explicit
    /// breakpoints (in units of π), coefficients and closure.
    pub fn partition(&self) -> Result<SectorPartition> {
        match (&self.breakpoints, self.example) {
            (Some(bp), _) => {
                let coefficients = self
                    .coefficients
                    .clone()
                    .ok_or_else(|| Error::Config("breakpoints given without coefficients".into()))?;
                let closure = parse_closure(
                    self.closure
                        .as_deref()
                        .ok_or_else(|| Error::Config("breakpoints given without closure".into()))?,
                )?;
                Ok(SectorPartition::new(
                    bp.iter().map(|x| x * PI).collect(),
                    closure,
                    coefficients,
                ))
            }
            (None, Some(ex)) => {
                let p = self
                    .p
                    .ok_or_else(|| Error::Config("model problem needs `p`".into()))?;
                example_partition(ex, p)
            }
            (None, None) => Err(Error::Config("need `example` or `breakpoints`".into())),
        }
    }

    pub fn to_run_config(&self) -> Result<RunConfig> {
        let partition = self.partition()?;
        let mu = match &self.mu {
            Some(r) => r.value()?,
            None => default_mu(self.example.unwrap_or(1)),
        };
        let degree = self
            .degree
            .ok_or_else(|| Error::Config("missing `W`".into()))?;
        let mut c = RunConfig::custom(partition, mu, degree);
        c.layers = self.layers;
        c.alpha = self.alpha;
        if let Some(t) = self.tol {
            c.tol = t;
        }
        c.max_iter = self.max_iter;
        if let Some(r) = self.rho {
            c.rho = r;
        }
        if let Some(k) = self.interior_layers {
            c.interior_layers = k;
        }
        if let Some(b) = &self.angular_breaks {
            c.angular_breaks = b.iter().map(|x| x * PI).collect();
        }
        if let Some(k) = &self.preconditioner {
            c.preconditioner = k.parse().map_err(|e: Error| Error::Config(e.to_string()))?;
        }
        Ok(c)
    }
}
