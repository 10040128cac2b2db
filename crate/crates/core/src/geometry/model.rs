use super::{
    compute_sdf, default_eps_s, extract_surface, voxelize_with, GeometryError, SignedDistanceField, SurfaceModel,
    TriangleMesh, VoxelizeOptions,
};

/// Preprocessed rigid object: distance field, surface points and the radius
/// of gyration used to express rotation error as a length.
#[derive(Clone, Debug, PartialEq)]
pub struct ObjectModel {
    pub name: String,
    pub sdf: SignedDistanceField,
    pub surface: SurfaceModel,
    /// Metres.
    pub radius_of_gyration: f64,
}

impl ObjectModel {
    pub fn from_mesh(
        name: impl Into<String>,
        mesh: &TriangleMesh,
        voxel_size: f64,
        opts: VoxelizeOptions,
        radius_of_gyration: f64,
    ) -> Result<Self, GeometryError> {
        let grid = voxelize_with(mesh, voxel_size, opts)?;
        let sdf = compute_sdf(&grid)?;
        let surface = extract_surface(&sdf, default_eps_s(voxel_size))?;
        Ok(Self { name: name.into(), sdf, surface, radius_of_gyration })
    }

    pub fn voxel_size(&self) -> f64 {
        self.sdf.shape.voxel_size
    }
}
