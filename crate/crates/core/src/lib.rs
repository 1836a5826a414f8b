//! Generalized multiscale finite elements for two-dimensional elliptic
//! problems with high-contrast coefficients.
//!
//! Three coarse spaces are built from local problems on coarse
//! neighborhoods glued by a multiscale partition of unity:
//!
//! * `S`: weighted Neumann eigenfunctions, Steklov eigenfunctions and a corrector,
//! * `SNAP`: harmonic extensions of boundary hats,
//! * `H`: a POD reduction of the snapshots.
//!
//! The [`analysis`] module measures the constants and error quantities of
//! the convergence theory on concrete configurations.

pub mod analysis;
pub mod coefficient;
pub mod config;
pub mod eigen;
pub mod error;
pub mod fem;
pub mod global;
pub mod mesh;
pub mod pipeline;
pub mod pou;
pub mod snapshots;
pub mod sparse;
pub mod spectral;

pub use coefficient::{make_inclusions, CoefficientField, Inclusion, Shape, WeightField};
pub use error::{Error, Result};
pub use global::{CoarseSolution, GlobalSpace, SpaceKind};
pub use mesh::{MeshHierarchy, Neighborhood, TriMesh};
pub use pipeline::{Budgets, Setup};
pub use pou::PartitionOfUnity;
pub use snapshots::{PodBasis, SnapshotSpace};
pub use spectral::{BasisKind, LocalBasisSet};
