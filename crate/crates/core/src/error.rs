use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("unsupported dimension {0} (only 1 and 2 are supported)")]
    UnsupportedDimension(usize),
    #[error("invalid polytope: {0}")]
    InvalidPolytope(String),
    #[error("unbounded domain: recession direction {0:?}")]
    UnboundedDomain(Vec<f64>),
    #[error("polytope has empty interior")]
    EmptyInterior,
    #[error("facet {0} has a non-integer normal")]
    NonIntegerNormals(usize),
    #[error("mesh too fine: {vertices} vertices exceeds the cap of {cap}")]
    MeshTooFine { vertices: usize, cap: usize },
    #[error("invalid mesh parameter h = {0}")]
    InvalidMeshParameter(f64),
    #[error("point {0:?} lies outside the open polytope")]
    EvaluationOutsideDomain(Vec<f64>),
    #[error("dilation index k = {0} must be at least 2")]
    InvalidK(usize),
    #[error("segment is within {0:e} of the boundary")]
    SegmentTouchesBoundary(f64),
    #[error("moment matrix is singular")]
    SingularMoments,
    #[error("Hessian determinant {det:e} is not positive at {point:?}")]
    NonConvexAtQuadraturePoint { point: Vec<f64>, det: f64 },
    #[error("Hessian determinant {det:e} below 1e-12 at {point:?}")]
    SingularHessian { point: Vec<f64>, det: f64 },
    #[error("crease grid is empty")]
    EmptyGrid,
    #[error("linear program is infeasible")]
    LpInfeasible,
    #[error("linear program is unbounded")]
    LpUnbounded,
    #[error("simplex iteration limit {0} reached")]
    LpIterationLimit(usize),
    #[error("stability constant must be positive, got {0}")]
    NonpositiveLambda(f64),
    #[error("A is incompatible with the boundary conditions: w(q) = {w_end:e}, w'(q) + sigma_q = {slope_gap:e}")]
    IncompatibleA { w_end: f64, slope_gap: f64 },
    #[error("w = 1/u'' is nonpositive at x = {x} (w = {w:e})")]
    NonpositiveW { x: f64, w: f64 },
    #[error("line search stalled at step {0:e}")]
    LineSearchStall(f64),
    #[error("no convexity-preserving step exists from the initial iterate")]
    LostConvexity,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("mesh function violates convexity on constraint {index} by {violation:e}")]
    NotConvex { index: usize, violation: f64 },
    #[error("normalization point {0:?} is not an interior mesh vertex")]
    InvalidBasePoint(Vec<f64>),
    #[error("invalid scalar field: {0}")]
    InvalidField(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
