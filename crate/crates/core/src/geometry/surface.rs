use nalgebra::{Point3, Vector3};
use rstar::primitives::GeomWithData;
use rstar::RTree;

use super::{GeometryError, SignedDistanceField};
use crate::mechanics::RigidTransform;

type IndexedPoint = GeomWithData<[f64; 3], usize>;

/// Surface point cloud of an object in its own frame, with outward unit
/// normals and the voxel each point came from.
#[derive(Clone, Debug)]
pub struct SurfaceModel {
    pub points: Vec<Point3<f64>>,
    pub normals: Vec<Vector3<f64>>,
    pub voxels: Vec<[u32; 3]>,
    pub eps_s: f64,
    tree: RTree<IndexedPoint>,
}

impl SurfaceModel {
    pub fn new(
        points: Vec<Point3<f64>>,
        normals: Vec<Vector3<f64>>,
        voxels: Vec<[u32; 3]>,
        eps_s: f64,
    ) -> Result<Self, GeometryError> {
        if points.is_empty() {
            return Err(GeometryError::EmptySurface { suggested_eps: eps_s * 2.0 });
        }
        if points.len() != normals.len() || points.len() != voxels.len() {
            return Err(GeometryError::InvalidMesh("surface arrays differ in length".into()));
        }
        let tree = RTree::bulk_load(
            points
                .iter()
                .enumerate()
                .map(|(i, p)| IndexedPoint::new([p.x, p.y, p.z], i))
                .collect(),
        );
        Ok(Self { points, normals, voxels, eps_s, tree })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index of the surface point closest to `p`.
    pub fn nearest(&self, p: &Point3<f64>) -> usize {
        self.tree
            .nearest_neighbor(&[p.x, p.y, p.z])
            .map(|g| g.data)
            .expect("surface model is never empty")
    }

    pub fn nearest_distance(&self, p: &Point3<f64>) -> f64 {
        (self.points[self.nearest(p)] - p).norm()
    }

    /// Largest nearest-neighbour distance between surface points.
    pub fn max_spacing(&self) -> f64 {
        self.points
            .iter()
            .enumerate()
            .map(|(i, p)| {
                self.tree
                    .nearest_neighbor_iter(&[p.x, p.y, p.z])
                    .find(|g| g.data != i)
                    .map(|g| (self.points[g.data] - p).norm())
                    .unwrap_or(0.0)
            })
            .fold(0.0, f64::max)
    }

    pub fn centroid(&self) -> Point3<f64> {
        let sum = self.points.iter().fold(Vector3::zeros(), |acc, p| acc + p.coords);
        Point3::from(sum / self.points.len() as f64)
    }
}

impl PartialEq for SurfaceModel {
    fn eq(&self, other: &Self) -> bool {
        self.points == other.points && self.normals == other.normals && self.voxels == other.voxels
    }
}

/// Default surface threshold: three quarters of a voxel, which keeps exactly
/// the zero-valued boundary shell.
pub fn default_eps_s(voxel_size: f64) -> f64 {
    0.75 * voxel_size
}

/// Occupied voxel centres with `|sdf| ≤ eps_s`, each paired with the
/// normalised SDF gradient.
pub fn extract_surface(sdf: &SignedDistanceField, eps_s: f64) -> Result<SurfaceModel, GeometryError> {
    if !(eps_s > 0.0) {
        return Err(GeometryError::EmptySurface { suggested_eps: default_eps_s(sdf.shape.voxel_size) });
    }
    let shape = sdf.shape;
    let mut points = Vec::new();
    let mut normals = Vec::new();
    let mut voxels = Vec::new();
    for idx in 0..shape.len() {
        let v = sdf.values[idx] as f64;
        if v > 0.0 || v.abs() > eps_s {
            continue;
        }
        let [i, j, k] = shape.coords(idx);
        let mut g = sdf.lattice_gradient(i, j, k);
        if g.norm() < 1e-12 {
            g = open_direction(sdf, i, j, k);
        }
        points.push(shape.center(i, j, k));
        normals.push(g.normalize());
        voxels.push([i as u32, j as u32, k as u32]);
    }
    if points.is_empty() {
        return Err(GeometryError::EmptySurface { suggested_eps: default_eps_s(shape.voxel_size) });
    }
    SurfaceModel::new(points, normals, voxels, eps_s)
}

/// Fallback normal for voxels where central differences cancel (one-voxel
/// thin features): sum of directions towards empty 26-neighbours.
fn open_direction(sdf: &SignedDistanceField, i: usize, j: usize, k: usize) -> Vector3<f64> {
    let mut dir = Vector3::zeros();
    for dz in -1i64..=1 {
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                let c = [i as i64 + dx, j as i64 + dy, k as i64 + dz];
                let inside = (0..3).all(|d| c[d] >= 0 && c[d] < sdf.shape.dims[d] as i64);
                let empty = !inside || sdf.at(c[0] as usize, c[1] as usize, c[2] as usize) > 0.0;
                if empty && (dx, dy, dz) != (0, 0, 0) {
                    dir += Vector3::new(dx as f64, dy as f64, dz as f64).normalize();
                }
            }
        }
    }
    if dir.norm() < 1e-12 {
        Vector3::z()
    } else {
        dir
    }
}

/// Number of points of `surface_b` (placed by `pose_b`) at or below the zero
/// level of `sdf_a` (placed by `pose_a`). Points outside the field are free.
pub fn count_penetrating(
    sdf_a: &SignedDistanceField,
    pose_a: &RigidTransform,
    surface_b: &SurfaceModel,
    pose_b: &RigidTransform,
) -> usize {
    let b_in_a = pose_a.inverse().compose(pose_b);
    surface_b
        .points
        .iter()
        .filter(|p| {
            sdf_a
                .try_sample(&b_in_a.transform_point(p))
                .is_some_and(|v| v <= 0.0)
        })
        .count()
}
