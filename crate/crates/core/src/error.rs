use thiserror::Error;

/// Failure modes shared by the geometry, triangulation and filter code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum Error {
    #[error("point has non-positive depth in the camera frame")]
    NonPositiveDepth,
    #[error("line passes through the camera center")]
    DegenerateProjection,
    #[error("degenerate line")]
    DegenerateLine,
    #[error("linear system is ill-conditioned")]
    IllConditioned,
    #[error("triangulated point lies behind the anchor camera")]
    NegativeDepth,
    #[error("points coincide")]
    CoincidentPoints,
    #[error("all observation planes are parallel")]
    ParallelPlanes,
    #[error("no line initialization strategy applies")]
    NoStrategy,
    #[error("normal equations are singular")]
    SingularNormalEquations,
    #[error("timestamps are not monotonic")]
    NonMonotonicTime,
    #[error("clone window is full")]
    WindowFull,
    #[error("clone window is empty")]
    WindowEmpty,
    #[error("innovation covariance is singular")]
    SingularInnovation,
    #[error("no clone at the requested timestamp")]
    MissingClone,
    #[error("invalid input: {0}")]
    InvalidInput(&'static str),
}

pub type Result<T> = core::result::Result<T, Error>;
