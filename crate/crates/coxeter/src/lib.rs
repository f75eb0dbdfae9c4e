//! Coxeter-system combinatorics at finite truncation: word arithmetic on the
//! Cayley graph (the Coxeter complex), residues and projections, combinatorial
//! sectors and the bordification, wall-orbit trees, and the exact-rational
//! boundary measures built on top of them.
//!
//! Everything here is a pure function of immutable inputs; all values can be
//! shared across threads after construction.

pub mod ball;
pub mod bordification;
pub mod error;
pub mod geometry;
pub mod measures;
pub mod residue;
pub mod root;
pub mod sector;
pub mod system;
pub mod trees;
pub mod word;

pub use ball::{ball, reflections_in_ball, BallOptions};
pub use bordification::{
    certify_convergence, phi_of, projection_vector, BoundaryDirection, ConvergenceReport, RootSet,
    RootStatus,
};
pub use error::{CoxeterError, Result};
pub use geometry::{
    convex_hull, project, project_residue, residues_in_ball, root_distance, separating_roots,
    RootDistance,
};
pub use measures::{
    coxeter_mu, l1_distance, product_lambda, push_operator, sandwich_bound, sector_lambda,
    tree_lambda, z_set, Chain, ChainEnd, ChainSpec, MuOptions, PushDomain, ResidueMeasure,
    SectorGeometry, Weight,
};
pub use residue::SphericalResidue;
pub use root::Root;
pub use sector::{sector, sector_by_roots, Sector};
pub use system::{CoxeterOrder, CoxeterSystem};
pub use trees::{
    build_trees, w0_membership, wall_orbits, PositionVector, TorsionFreeSubgroup, TreeDirection,
    TreeResidue, TreeSystem,
};
pub use word::Element;
