use thiserror::Error;

/// Errors raised while building games and profiles or reading documents.
///
/// Solvers and integrators do not error on non-convergence; they return
/// reports with `converged = false` so batch runs can keep going.
#[derive(Debug, Error)]
pub enum Error {
    /// A model parameter that must be strictly positive (and finite) is not.
    #[error("{field}[{index}]: expected a strictly positive finite value, got {value}")]
    NonPositive {
        field: &'static str,
        index: String,
        value: f64,
    },

    /// Array dimensions do not agree with the declared game shape.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A generic domain violation (zero user/node counts, bad flag values).
    #[error("{0}")]
    Domain(String),

    /// An allocation matrix violates the simplex constraints.
    #[error("invalid power profile: {0}")]
    Profile(String),

    /// Node index outside `0..num_nodes`.
    #[error("node index {index} out of range for a game with {num_nodes} nodes")]
    NodeIndex { index: usize, num_nodes: usize },

    /// User index outside `0..num_users`.
    #[error("user index {index} out of range for a game with {num_users} users")]
    UserIndex { index: usize, num_users: usize },

    /// A restricted game needs at least one node per user.
    #[error("user {user} has an empty node subset")]
    EmptySupport { user: usize },

    /// Failure to parse or serialize a document.
    #[error("document error: {0}")]
    Document(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
