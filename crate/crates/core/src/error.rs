use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported polynomial degree {0} (must be >= 1)")]
    UnsupportedDegree(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("ambiguous coefficient: point at angle {theta} lies on an interface ray")]
    AmbiguousCoefficient { theta: f64 },

    #[error("point outside the problem domain: {0}")]
    OutsideDomain(String),

    #[error("no eigenvalue in range ({lo}, {hi}]")]
    NoEigenvalue { lo: f64, hi: f64 },

    #[error("lambda = {lambda} is not an eigenvalue (smallest/largest singular value {ratio:e})")]
    NotAnEigenvalue { lambda: f64, ratio: f64 },

    #[error("interface angle {angle} is missing from the angular mesh breaks")]
    MissingInterfaceAngle { angle: f64 },

    #[error("mesh construction: {0}")]
    Mesh(String),

    #[error("edge {edge} has no element or boundary owner")]
    OrphanEdge { edge: usize },

    #[error("boundary data is not finite at ({x}, {y})")]
    NonFiniteData { x: f64, y: f64 },

    #[error("element {element} has a singular map Jacobian")]
    SingularMap { element: usize },

    #[error("preconditioner block for element {element} is not positive definite")]
    NonSpdBlock { element: usize },

    #[error("conjugate gradient breakdown at iteration {iteration}")]
    Breakdown { iteration: usize },

    #[error("no exact solution available for error measurement")]
    MissingExact,

    #[error("configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
