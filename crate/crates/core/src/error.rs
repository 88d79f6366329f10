use thiserror::Error;

/// Errors raised by geometry construction, quadrature, assembly and the solvers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("polygon is not simple: edges {0} and {1} intersect")]
    SelfIntersecting(usize, usize),
    #[error("polygon has fewer than 3 distinct vertices after merging")]
    Degenerate,
    #[error("grading exponent {0} must be >= 1")]
    InvalidGrading(f64),
    #[error("graded meshes need at least 2 panels per edge (got {0})")]
    TooCoarse(usize),
    #[error("Gauss-Legendre order {0} outside 1..=64")]
    UnsupportedOrder(usize),
    #[error("segment has zero length")]
    DegenerateSegment,
    #[error("adaptive quadrature did not converge within {0} subdivisions")]
    NoConvergence(usize),
    #[error("Robin constant {c_gamma:.6e} below the margin {margin:.3e}; rescale the boundary")]
    CapacityViolation { c_gamma: f64, margin: f64 },
    #[error("linear solve failed: {0}")]
    SolveFailure(String),
    #[error("data is not compatible with the kernel of the operator (defect {0:.3e})")]
    IncompatibleData(f64),
    #[error("Gram matrix of the affine preimages is singular")]
    RankDeficiency,
    #[error("evaluation point ({0}, {1}) lies on the boundary")]
    PointOnBoundary(f64, f64),
    #[error("Richardson extrapolation did not settle (spread {0:.3e})")]
    ExtrapolationDivergence(f64),
    #[error("far-field least-squares fit is ill conditioned (condition {0:.3e})")]
    IllConditionedFit(f64),
    #[error("evaluation point coincides with the corner vertex")]
    PointAtCorner,
    #[error("polygon has no reentrant corner")]
    NoReentrantCorner,
    #[error("domain meshing failed: {0}")]
    MeshFailure(String),
    #[error("only {0} singular values survive truncation")]
    RankCollapse(usize),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
