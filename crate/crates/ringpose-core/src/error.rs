use thiserror::Error;

/// Failure modes of the fitting and registration pipeline.
///
/// `InvalidArgument` marks caller mistakes (bad sizes, bad ranges). The
/// `Degenerate*` variants mark geometric configurations where the requested
/// quantity does not exist or is numerically meaningless; callers that run
/// batches should record these, not unwrap them.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The landmark configuration does not determine a unique conic
    /// (collinear points, repeated points, or a collapsed ellipse).
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    /// A conic was produced but it is not a real ellipse.
    #[error("not an ellipse: {0}")]
    NotAnEllipse(String),

    /// Conic-to-standard conversion hit an imaginary or flat ellipse.
    #[error("degenerate conic: {0}")]
    DegenerateConic(String),

    /// A point at or behind the source cannot be projected.
    #[error("degenerate projection: {0}")]
    DegenerateProjection(String),

    /// Observed ellipse is incompatible with the physical model
    /// (projected major axis smaller than the rim radius).
    #[error("implausible geometry: {0}")]
    ImplausibleGeometry(String),

    /// The eigen-spectrum is too close to degenerate for a stable gradient.
    #[error("degenerate gradient: {0}")]
    DegenerateGradient(String),
}

pub type Result<T> = std::result::Result<T, Error>;
