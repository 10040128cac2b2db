use nalgebra::{Point3, Vector3};

use crate::geometry::mesh::{centered_box, hex_key, round_tip_rod};
use crate::geometry::{GeometryError, ObjectModel, VoxelizeOptions};
use crate::scope::GripperSpec;

/// Poker rod radius (m); the shaft spans x ∈ [−4 cm, 4 cm] with a
/// hemispherical tip beyond +4 cm.
pub const POKER_RADIUS: f64 = 0.005;
pub const POKER_BACK: f64 = -0.04;
pub const POKER_FRONT: f64 = 0.04;
/// Tool box extents (x, y, z) in metres.
pub const TOOL_SIZE: [f64; 3] = [0.10, 0.01, 0.025];
pub const POKER_RADIUS_OF_GYRATION: f64 = 0.0525;
pub const TOOL_RADIUS_OF_GYRATION: f64 = 0.05;

/// Two voxels of padding so SDF gradients are available on every surface
/// point.
fn padded() -> VoxelizeOptions {
    VoxelizeOptions { padding: 2, ..Default::default() }
}

pub fn poker_model(voxel_size: f64) -> Result<ObjectModel, GeometryError> {
    let mesh = round_tip_rod(POKER_RADIUS, POKER_BACK, POKER_FRONT, 32, 8);
    ObjectModel::from_mesh("poker", &mesh, voxel_size, padded(), POKER_RADIUS_OF_GYRATION)
}

pub fn tool_model(voxel_size: f64) -> Result<ObjectModel, GeometryError> {
    let mesh = centered_box(Vector3::from(TOOL_SIZE));
    ObjectModel::from_mesh("tool", &mesh, voxel_size, padded(), TOOL_RADIUS_OF_GYRATION)
}

/// L-shaped hexagonal key: 4 cm short arm, 7 cm long arm, 5 mm inradius.
pub fn hex_key_model(voxel_size: f64) -> Result<ObjectModel, GeometryError> {
    let mesh = hex_key(0.04, 0.07, 0.005);
    ObjectModel::from_mesh("hex_key", &mesh, voxel_size, padded(), 0.03)
}

/// Gripper whose finger centre is the surface point nearest `hint`, so the
/// identity grasp is valid.
pub fn gripper_at(model: &ObjectModel, hint: Point3<f64>) -> GripperSpec {
    GripperSpec::new(model.surface.points[model.surface.nearest(&hint)])
}

/// Models and grippers of the poker-and-tool setup.
#[derive(Clone, Debug)]
pub struct SyntheticWorld {
    pub poker: ObjectModel,
    pub tool: ObjectModel,
    pub poker_gripper: GripperSpec,
    pub tool_gripper: GripperSpec,
}

impl SyntheticWorld {
    pub fn standard(voxel_size: f64) -> Result<Self, GeometryError> {
        let poker = poker_model(voxel_size)?;
        let tool = tool_model(voxel_size)?;
        let poker_gripper = gripper_at(&poker, Point3::new(0.0, POKER_RADIUS, 0.0));
        let tool_gripper = gripper_at(&tool, Point3::new(0.0, TOOL_SIZE[1] / 2.0, 0.0));
        Ok(Self { poker, tool, poker_gripper, tool_gripper })
    }
}
