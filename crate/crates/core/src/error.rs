use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeomError {
    #[error("non-finite value for {0}")]
    NonFinite(&'static str),
    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("inverted interval on {axis}: min {min} > max {max}")]
    Inverted {
        axis: &'static str,
        min: f64,
        max: f64,
    },
    #[error("polygon needs at least 3 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("polygon has {0} vertices, at most 8 are allowed")]
    TooManyVertices(usize),
    #[error("polygon is not convex counterclockwise at vertex {0}")]
    NotConvex(usize),
}
