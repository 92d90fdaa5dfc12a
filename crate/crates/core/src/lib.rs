//! Unfitted (CutFEM) finite elements for elliptic optimal control on
//! level-set domains, with multigrid preconditioning and lattice-rule
//! quasi-Monte Carlo over shape parameters.

pub mod control;
pub mod error;
pub mod fem;
pub mod geometry;
pub mod linalg;
pub mod mesh;
pub mod qmc;
pub mod quadrature;

pub use error::{ControlError, GeometryError, LinalgError, MeshError, QmcError};
pub use geometry::{classify_elements, CutTopology, ElementClass, LevelSet};
pub use mesh::{build_structured_mesh, refine_uniform, BackgroundMesh, BoundingBox, MeshHierarchy, Point};
