use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid layer stack: {0}")]
    InvalidStack(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("degenerate transverse wavenumber in layer {layer} with series expansion disabled")]
    Degenerate { layer: usize },
    #[error("found {found} roots, {wanted} requested")]
    RootCountShortfall { found: usize, wanted: usize },
    #[error("continuation stalled before node {node} (omega = {re_omega} + {im_omega}i)")]
    ContinuationStall { node: usize, re_omega: f64, im_omega: f64 },
    #[error("branches {a} and {b} collided at node {node}")]
    BranchCollision { node: usize, a: usize, b: usize },
    #[error("finite difference requested at contour endpoint")]
    EdgeNode,
    #[error("branch does not fit any slope hypothesis")]
    Unclassified,
    #[error("3x3 coefficient block is singular")]
    SingularMinor,
    #[error("y = {0} outside the waveguide")]
    OutOfRange(f64),
    #[error("mode norm vanishes (branch-point condition)")]
    ZeroNorm,
    #[error("mode is at cut-off (k = 0)")]
    Cutoff,
    #[error("layers {0} and {1} have equal sound speeds")]
    DegenerateSpeeds(usize, usize),
    #[error("middle layer is resonant: sin(alpha2 h2) vanishes")]
    ResonantMiddleLayer,
    #[error("Newton iteration did not converge")]
    NoConvergence,
    #[error("Newton Jacobian is singular")]
    SingularJacobian,
    #[error("trace failed after reaching eps = ({eps1}, {eps2})")]
    TraceFailed { eps1: f64, eps2: f64 },
    #[error("spectrum truncation leaves an empty band")]
    BandEmpty,
    #[error("branch {0} is not tracked")]
    MissingBranch(usize),
    #[error("integrand of branch {branch} grows above its real-axis bound at node {node}")]
    GrowthViolation { node: usize, branch: usize },
}

impl Error {
    /// Errors caused by bad input rather than numerical trouble.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidStack(_)
                | Error::Config(_)
                | Error::InvalidArgument(_)
                | Error::OutOfRange(_)
                | Error::DegenerateSpeeds(..)
                | Error::MissingBranch(_)
        )
    }
}
