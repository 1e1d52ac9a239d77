//! Error type shared by every module of the library.

use crate::sim::Trace;

/// Everything that can go wrong while building or running a scenario.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An edge definition is malformed (self-loop, non-positive or
    /// non-finite weight, node index out of range).
    #[error("invalid edge {from} -> {to} (weight {weight}): {reason}")]
    InvalidEdge {
        from: usize,
        to: usize,
        weight: f64,
        reason: &'static str,
    },

    /// The digraph is not weight-balanced: some node's in-degree and
    /// out-degree differ by more than the tolerance.
    #[error("graph is not weight-balanced (worst in/out imbalance {imbalance:.3e} at node {node})")]
    NotWeightBalanced { node: usize, imbalance: f64 },

    /// The digraph is not strongly connected.
    #[error("graph is not strongly connected (node {unreachable} unreachable)")]
    NotStronglyConnected { unreachable: usize },

    /// The symmetrized Laplacian's smallest eigenvalue is not numerically
    /// zero, which contradicts the structural checks that passed before it.
    #[error("symmetrized Laplacian has smallest eigenvalue {lambda1:.3e}, expected 0")]
    SpectrumResidual { lambda1: f64 },

    /// A function received a NaN or infinite argument.
    #[error("non-finite {what}: {value}")]
    NonFinite { what: &'static str, value: f64 },

    /// An operation that needs at least one cost term got an empty list.
    #[error("cost list is empty")]
    EmptyCostList,

    /// The minimizer search could not bracket a sign change of the
    /// aggregate gradient.
    #[error("no sign change of the aggregate gradient in [{lo:.3e}, {hi:.3e}]")]
    BracketNotFound { lo: f64, hi: f64 },

    /// A stabilizing coefficient vector has a characteristic root with
    /// non-negative real part.
    #[error("coefficients {coeffs:?} are not Hurwitz")]
    NotHurwitz { coeffs: Vec<f64> },

    /// The Lyapunov equation for the translated subsystem could not be
    /// solved (singular Kronecker system).
    #[error("Lyapunov equation is singular for the given coefficients")]
    SingularLyapunov,

    /// The solved Lyapunov matrix failed its own residual or
    /// positive-definiteness check.
    #[error("Lyapunov solution rejected: {reason}")]
    LyapunovCheck { reason: &'static str },

    /// Two collections that must have matching lengths do not.
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    /// λ₂ of the symmetrized Laplacian must be positive to derive gains.
    #[error("algebraic connectivity {lambda2:.3e} is not positive")]
    NonPositiveConnectivity { lambda2: f64 },

    /// Convexity / Lipschitz parameters out of range.
    #[error("invalid convexity parameters (mu {mu}, lipschitz {lipschitz})")]
    InvalidConvexity { mu: f64, lipschitz: f64 },

    /// The Nussbaum gain would overflow `f64` at this argument.
    #[error("Nussbaum gain overflows at theta = {theta:.6e}")]
    NussbaumOverflow { theta: f64 },

    /// An agent's control or state left the sanity envelope; the partial
    /// trace recorded up to the abort is attached when available.
    #[error("blow-up at t = {time:.6}: agent {agent} (theta = {theta:.6e})")]
    BlowUp {
        agent: usize,
        time: f64,
        theta: f64,
        partial: Option<Box<Trace>>,
    },

    /// A scenario failed validation before the run started.
    #[error("invalid scenario: {reason}")]
    InvalidScenario { reason: String },

    /// A fit or statistic needs more data points than were supplied.
    #[error("need at least {needed} usable points, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    /// Plain I/O failure with the offending path attached.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
