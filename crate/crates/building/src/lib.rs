//! Thick right-angled buildings modeled as graph products of finite cyclic
//! groups: chambers are group elements in shuffled normal form, the Weyl
//! distance is the color word, apartments are charted copies of the Coxeter
//! complex, and the boundary measures of the underlying complex are glued
//! across charts.

pub mod apartment;
pub mod axioms;
pub mod building;
pub mod chamber;
pub mod error;
pub mod measures;

pub use apartment::{find_apartment, ApartmentChart, ChartValidation};
pub use axioms::{check_building_axioms, AxiomReport};
pub use building::{BuildingResidue, GraphProductBuilding};
pub use chamber::Chamber;
pub use error::{BuildingError, Result};
pub use measures::{
    building_mu, certify_chart_pair, convergence_table, equivariance_check, lift_measure,
    BuildingBoundaryPoint, BuildingMeasure, ConvergenceRow, GroupMeasure, TreeAtlas,
};
