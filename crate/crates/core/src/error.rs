use thiserror::Error;

use crate::mesh::Point;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("subdivision count must be at least 1")]
    ZeroSubdivisions,
    #[error("degenerate bounding box {min:?} .. {max:?}")]
    DegenerateBox { min: Point, max: Point },
    #[error("vertex {vertex} lies outside the bounding box")]
    VertexOutsideBox { vertex: usize },
    #[error("invalid connectivity: {0}")]
    InvalidConnectivity(String),
}

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("level set is not finite at vertex {vertex} ({point:?})")]
    NonFiniteLevelSet { vertex: usize, point: Point },
    #[error(
        "interface crosses edge {facet} of element {element} more than once; refine the mesh"
    )]
    MultipleCrossings { element: usize, facet: usize },
    #[error("vertex values {0:?} do not change sign")]
    NotCut([f64; 3]),
    #[error("element {element} is {class}, expected {expected}")]
    WrongClass {
        element: usize,
        class: &'static str,
        expected: &'static str,
    },
    #[error("level set has no interior part on this mesh")]
    EmptyDomain,
}

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("zero diagonal entry in row {row}")]
    ZeroDiagonal { row: usize },
    #[error("matrix is not positive definite (pivot {pivot} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },
    #[error("NaN encountered in {context} at iteration {iteration}")]
    NotANumber { context: &'static str, iteration: usize },
    #[error("fine dof {fine_dof} (vertex {vertex}) has a parent vertex {parent} outside the coarse space")]
    NotNested {
        fine_dof: usize,
        vertex: usize,
        parent: usize,
    },
    #[error("multigrid needs at least two levels, got {0}")]
    TooFewLevels(usize),
}

#[derive(Debug, Error)]
pub enum ControlError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("linear solve for the {which} did not converge (relative residual {residual:.3e} after {iterations} iterations)")]
    SolveFailed {
        which: &'static str,
        iterations: usize,
        residual: f64,
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Error)]
pub enum QmcError {
    #[error("a lattice rule needs at least one point")]
    EmptyRule,
    #[error("generating vector {0:?} has a component that is zero modulo N")]
    InvalidGenerator(Vec<u64>),
    #[error("generating vector has dimension {generator}, parameter box has {box_dim}")]
    DimensionMismatch { generator: usize, box_dim: usize },
    #[error("parameter box is degenerate in dimension {dim}")]
    DegenerateBox { dim: usize },
    #[error("a shifted lattice needs at least one shift")]
    NoShifts,
    #[error("{n} points cannot be taken from a {reference_n}-point sample set")]
    BadSubset { n: usize, reference_n: usize },
    #[error("every sample failed")]
    AllSamplesFailed,
}
