use thiserror::Error;

/// Errors shared by every layer of the crate. Caps are hard errors, never
/// silent truncation.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum CoxeterError {
    #[error("generator index {index} out of range for rank {rank}")]
    IndexOutOfRange { index: usize, rank: usize },

    #[error("invalid Coxeter matrix: {0}")]
    InvalidMatrix(String),

    #[error("{what} exceeded cap of {cap}")]
    CapExceeded { what: &'static str, cap: usize },

    #[error("type set {0:?} is not spherical (parabolic subgroup enumeration exceeded cap)")]
    NotSpherical(Vec<usize>),

    #[error("ball of radius {radius} too small: {reason}")]
    BallTooSmall { radius: usize, reason: String },

    #[error("projection onto residue is not unique (building axiom violation)")]
    NonUniqueProjection,

    #[error("projection image is not a residue")]
    NotAResidue,

    #[error("element {0:?} is not a reflection")]
    NotAReflection(Vec<usize>),

    #[error("boundary direction did not stabilize within horizon {horizon}")]
    NotStabilized { horizon: usize },

    #[error("root membership undetermined at horizon for wall {wall}")]
    UndeterminedRoot { wall: String },

    #[error("driver element fails the infinite-order certificate: {0}")]
    BadDriver(String),

    #[error("right-angled kernel subgroup requested on a non-right-angled system")]
    NotRightAngled,

    #[error("wall orbits could not be closed inside the ball (radius {radius})")]
    OrbitNotClosed { radius: usize },

    #[error("cycle detected in wall-orbit tree (invariant violation)")]
    TreeCycle,

    #[error("residue straddles {0} walls of one orbit; expected at most one")]
    AmbiguousWallCoordinate(usize),

    #[error("chain toward the boundary direction is too shallow: need depth {need}, have {have}")]
    ChainTooShallow { need: usize, have: usize },

    #[error("push operator domain is empty or not convex: {0}")]
    BadPushDomain(String),

    #[error("residue {0} lies outside the sector")]
    OutsideSector(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, CoxeterError>;
