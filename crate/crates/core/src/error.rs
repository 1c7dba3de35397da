use thiserror::Error;

/// A single violated invariant found while validating a tree description.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpecViolation {
    #[error("not a tree: {0}")]
    NotATree(String),
    #[error("outgoing probabilities at `{vertex}` sum to {sum}, expected 1")]
    ProbabilitySum { vertex: String, sum: f64 },
    #[error("non-positive probability {value} on {edge}")]
    NonPositiveEdge { edge: String, value: f64 },
    #[error("probability {value} on {edge} exceeds 1")]
    ProbabilityRange { edge: String, value: f64 },
    #[error("tail `{id}`: {reason}")]
    BadTail { id: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid tree description: {}", join(.0))]
    InvalidSpec(Vec<SpecViolation>),
    #[error("unknown vertex `{0}`")]
    UnknownVertex(String),
    #[error("`{0}` is not a core vertex")]
    NonCoreSupport(String),
    #[error("`{0}` and `{1}` are not adjacent")]
    NotAdjacent(String, String),
    #[error("hitting solver stopped after {iterations} iterations with residual {residual:e}")]
    MaxIterExceeded { iterations: usize, residual: f64 },
    #[error("hitting probabilities are not converged")]
    NotConverged,
    #[error("the random walk is recurrent")]
    RecurrentWalk,
    #[error("degenerate cylinder at `{0}`: both crossing probabilities equal 1")]
    DegenerateCylinder(String),
    #[error("vertex `{0}` is outside the hull")]
    VertexOutsideHull(String),
    #[error("cut is not an antichain: {0}")]
    BadAntichain(String),
    #[error("no value supplied for vertex `{0}`")]
    MissingValue(String),
    #[error("tail measure with ratio {ratio} is not integrable against 1/F (forward factor {limit})")]
    NotIntegrable { ratio: f64, limit: f64 },
    #[error("measure has empty support or zero total variation")]
    EmptyMeasure,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("internal consistency check failed: {0}")]
    Incoherent(String),
    #[error("parse error: {0}")]
    Parse(String),
}

fn join(v: &[SpecViolation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
