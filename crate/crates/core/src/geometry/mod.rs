//! Mesh → voxel grid → signed distance field → surface points with normals.

pub mod io;
pub mod mesh;
mod model;
mod sdf;
mod surface;
mod voxel;

use thiserror::Error;

pub use mesh::TriangleMesh;
pub use model::ObjectModel;
pub use sdf::{compute_sdf, SignedDistanceField};
pub use surface::{count_penetrating, default_eps_s, extract_surface, SurfaceModel};
pub use voxel::{voxelize, voxelize_with, GridShape, VoxelGrid, VoxelizeOptions};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("line {line}: {message}")]
    MeshParse { line: usize, message: String },
    #[error("resolution: {0}")]
    Resolution(String),
    #[error("degenerate grid: {0}")]
    DegenerateGrid(String),
    #[error("point ({x}, {y}, {z}) is outside the field")]
    OutOfBounds { x: f64, y: f64, z: f64 },
    #[error("surface threshold selects no voxels; try eps_s = {suggested_eps}")]
    EmptySurface { suggested_eps: f64 },
    #[error("SCVX format: {0}")]
    Format(String),
}
