use thiserror::Error;

/// Errors raised by the solvers and the field calculus.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum VortexError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("operation not available for this geometry: {0}")]
    Geometry(String),
    #[error("exponential overflow at u = {0}")]
    Overflow(f64),
    #[error("matrix is not symmetric")]
    NotSymmetric,
    #[error("vortex point ({x}, {y}) lies outside the domain")]
    PointOutsideDomain { x: f64, y: f64 },
    #[error("constraint violated: {0}")]
    ConstraintViolation(String),
    #[error("fixed-point bracket failure: {0}")]
    Bracket(String),
    #[error("descent approached the admissible-set boundary: margin {margin:.3e} below floor {floor:.3e}")]
    BoundaryApproach { margin: f64, floor: f64 },
    #[error("admissible set is empty: constraint coefficient {coefficient:.6e} is not below the cell area {area:.6e}")]
    EmptyAdmissibleSet { coefficient: f64, area: f64 },
    #[error("lambda = {lambda} is below the Bradlow bound {bound}")]
    BelowBradlow { lambda: f64, bound: f64 },
    #[error("no decay signal in the fitting annulus")]
    NoSignal,
    #[error("endpoint shift exceeded the cap (xi0 = {0})")]
    ShiftCap(f64),
    #[error("degenerate minimum: path maximum {path_max} does not exceed the minimum energy {min_energy}")]
    DegenerateMinimum { path_max: f64, min_energy: f64 },
    #[error("critical point coincides with the minimizer (L2 distance {distance:.3e}, floor {floor:.3e})")]
    NotDistinct { distance: f64, floor: f64 },
    #[error("solver did not converge: {0}")]
    NotConverged(String),
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
}

pub type Result<T> = std::result::Result<T, VortexError>;
