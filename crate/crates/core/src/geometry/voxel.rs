use nalgebra::{Point3, Vector3};

use super::{GeometryError, TriangleMesh};

/// Placement of a dense voxel lattice. Voxel `(i, j, k)` has its centre at
/// `origin + (i + ½, j + ½, k + ½)·voxel_size`; storage is x-fastest.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridShape {
    pub origin: Point3<f64>,
    pub voxel_size: f64,
    pub dims: [usize; 3],
}

impl GridShape {
    pub fn new(origin: Point3<f64>, voxel_size: f64, dims: [usize; 3]) -> Result<Self, GeometryError> {
        if !(voxel_size > 0.0) || !voxel_size.is_finite() {
            return Err(GeometryError::Resolution(format!("voxel size must be positive, got {voxel_size}")));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(GeometryError::Resolution(format!("grid dims must be positive, got {dims:?}")));
        }
        Ok(Self { origin, voxel_size, dims })
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let i = idx % self.dims[0];
        let j = (idx / self.dims[0]) % self.dims[1];
        let k = idx / (self.dims[0] * self.dims[1]);
        [i, j, k]
    }

    #[inline]
    pub fn center(&self, i: usize, j: usize, k: usize) -> Point3<f64> {
        self.origin + Vector3::new(i as f64 + 0.5, j as f64 + 0.5, k as f64 + 0.5) * self.voxel_size
    }

    /// Continuous lattice coordinates: voxel centres sit on integers.
    #[inline]
    pub fn lattice(&self, p: &Point3<f64>) -> Vector3<f64> {
        (p - self.origin) / self.voxel_size - Vector3::repeat(0.5)
    }

    /// Lower and upper corners of the box spanned by voxel centres, the domain
    /// of trilinear interpolation.
    pub fn center_bounds(&self) -> (Point3<f64>, Point3<f64>) {
        let lo = self.center(0, 0, 0);
        let hi = self.center(self.dims[0] - 1, self.dims[1] - 1, self.dims[2] - 1);
        (lo, hi)
    }

    /// Inclusive 6-neighbour iterator.
    pub fn neighbors6(&self, i: usize, j: usize, k: usize) -> impl Iterator<Item = Option<[usize; 3]>> + '_ {
        const OFFS: [[i64; 3]; 6] = [[-1, 0, 0], [1, 0, 0], [0, -1, 0], [0, 1, 0], [0, 0, -1], [0, 0, 1]];
        OFFS.iter().map(move |o| {
            let c = [i as i64 + o[0], j as i64 + o[1], k as i64 + o[2]];
            if (0..3).all(|d| c[d] >= 0 && c[d] < self.dims[d] as i64) {
                Some([c[0] as usize, c[1] as usize, c[2] as usize])
            } else {
                None
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VoxelGrid {
    pub shape: GridShape,
    pub occupancy: Vec<bool>,
}

impl VoxelGrid {
    pub fn new(shape: GridShape, occupancy: Vec<bool>) -> Result<Self, GeometryError> {
        if occupancy.len() != shape.len() {
            return Err(GeometryError::Resolution(format!(
                "occupancy has {} cells but dims {:?} need {}",
                occupancy.len(),
                shape.dims,
                shape.len()
            )));
        }
        Ok(Self { shape, occupancy })
    }

    #[inline]
    pub fn occupied(&self, i: usize, j: usize, k: usize) -> bool {
        self.occupancy[self.shape.index(i, j, k)]
    }

    pub fn occupied_count(&self) -> usize {
        self.occupancy.iter().filter(|&&o| o).count()
    }

    /// Occupied voxel with at least one empty (or out-of-grid) face neighbour.
    pub fn is_boundary(&self, i: usize, j: usize, k: usize) -> bool {
        self.occupied(i, j, k)
            && self
                .shape
                .neighbors6(i, j, k)
                .any(|n| n.map_or(true, |[a, b, c]| !self.occupied(a, b, c)))
    }
}

#[derive(Clone, Copy, Debug)]
pub struct VoxelizeOptions {
    /// Empty voxels added around the mesh bounding box on every side.
    pub padding: usize,
    /// Largest permitted extent along any axis.
    pub max_dim: usize,
}

impl Default for VoxelizeOptions {
    fn default() -> Self {
        Self { padding: 1, max_dim: 256 }
    }
}

// Fixed sub-voxel offsets keep rays off mesh edges and vertices that lie on
// lattice lines, such as the diagonals of axis-aligned box faces.
const RAY_JITTER: [[f64; 2]; 3] = [[1.37e-6, 2.91e-6], [2.23e-6, 1.19e-6], [3.07e-6, 1.71e-6]];

/// Marks a voxel occupied when its centre is inside the mesh, deciding
/// inside-ness by crossing parity along +x, +y and +z and taking the majority.
pub fn voxelize(mesh: &TriangleMesh, voxel_size: f64) -> Result<VoxelGrid, GeometryError> {
    voxelize_with(mesh, voxel_size, VoxelizeOptions::default())
}

pub fn voxelize_with(mesh: &TriangleMesh, voxel_size: f64, opts: VoxelizeOptions) -> Result<VoxelGrid, GeometryError> {
    mesh.validate()?;
    if !(voxel_size > 0.0) || !voxel_size.is_finite() {
        return Err(GeometryError::Resolution(format!("voxel size must be positive, got {voxel_size}")));
    }
    let (lo, hi) = mesh.bounds();
    let mut dims = [0usize; 3];
    for d in 0..3 {
        let cells = ((hi[d] - lo[d]) / voxel_size - 1e-9).ceil().max(1.0);
        if cells + 2.0 * opts.padding as f64 > opts.max_dim as f64 {
            return Err(GeometryError::Resolution(format!(
                "axis {d} needs {} voxels at {voxel_size} m, above the cap of {}",
                cells as usize + 2 * opts.padding,
                opts.max_dim
            )));
        }
        dims[d] = cells as usize + 2 * opts.padding;
    }
    let origin = lo - Vector3::repeat(opts.padding as f64 * voxel_size);
    let shape = GridShape::new(origin, voxel_size, dims)?;

    let mut votes = vec![0u8; shape.len()];
    for axis in 0..3 {
        cast_axis(mesh, &shape, axis, &mut votes);
    }
    let occupancy = votes.into_iter().map(|v| v >= 2).collect();
    VoxelGrid::new(shape, occupancy)
}

fn cast_axis(mesh: &TriangleMesh, shape: &GridShape, axis: usize, votes: &mut [u8]) {
    let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
    let (nu, nv) = (shape.dims[u], shape.dims[v]);
    let h = shape.voxel_size;
    let ray_u = |iu: usize| shape.origin[u] + (iu as f64 + 0.5) * h + RAY_JITTER[axis][0] * h;
    let ray_v = |iv: usize| shape.origin[v] + (iv as f64 + 0.5) * h + RAY_JITTER[axis][1] * h;

    let mut hits: Vec<Vec<f64>> = vec![Vec::new(); nu * nv];
    for t in 0..mesh.triangles.len() {
        let [a, b, c] = mesh.corners(t);
        let pu = [a[u], b[u], c[u]];
        let pv = [a[v], b[v], c[v]];
        let range = |lo: f64, hi: f64, n: usize, off: f64| {
            let first = ((lo - off) / h - 0.5).ceil().max(0.0) as usize;
            let last = ((hi - off) / h - 0.5).floor();
            if last < 0.0 {
                return first..first;
            }
            first..((last as usize) + 1).min(n)
        };
        let ur = range(
            pu.iter().cloned().fold(f64::INFINITY, f64::min),
            pu.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            nu,
            shape.origin[u],
        );
        let vr = range(
            pv.iter().cloned().fold(f64::INFINITY, f64::min),
            pv.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            nv,
            shape.origin[v],
        );
        let normal = (b - a).cross(&(c - a));
        if normal[axis].abs() < 1e-300 {
            continue;
        }
        // widen by one row: the jitter can move a ray across a range edge
        let ur = ur.start.saturating_sub(1)..(ur.end + 1).min(nu);
        let vr = vr.start.saturating_sub(1)..(vr.end + 1).min(nv);
        for iu in ur {
            let qu = ray_u(iu);
            for iv in vr.clone() {
                let qv = ray_v(iv);
                if let Some(w) = barycentric_2d(qu, qv, &pu, &pv) {
                    let along = w[0] * a[axis] + w[1] * b[axis] + w[2] * c[axis];
                    hits[iu + nu * iv].push(along);
                }
            }
        }
    }

    for iu in 0..nu {
        for iv in 0..nv {
            let row = &mut hits[iu + nu * iv];
            if row.is_empty() {
                continue;
            }
            row.sort_by(|x, y| x.total_cmp(y));
            for ia in 0..shape.dims[axis] {
                let center = shape.origin[axis] + (ia as f64 + 0.5) * h;
                let beyond = row.len() - row.partition_point(|&t| t <= center);
                if beyond % 2 == 1 {
                    let mut c = [0usize; 3];
                    c[axis] = ia;
                    c[u] = iu;
                    c[v] = iv;
                    votes[shape.index(c[0], c[1], c[2])] += 1;
                }
            }
        }
    }
}

/// Barycentric weights of `(x, y)` in a 2D triangle, or `None` when outside.
fn barycentric_2d(x: f64, y: f64, px: &[f64; 3], py: &[f64; 3]) -> Option<[f64; 3]> {
    let det = (py[1] - py[2]) * (px[0] - px[2]) + (px[2] - px[1]) * (py[0] - py[2]);
    if det == 0.0 {
        return None;
    }
    let w0 = ((py[1] - py[2]) * (x - px[2]) + (px[2] - px[1]) * (y - py[2])) / det;
    let w1 = ((py[2] - py[0]) * (x - px[2]) + (px[0] - px[2]) * (y - py[2])) / det;
    let w2 = 1.0 - w0 - w1;
    (w0 >= 0.0 && w1 >= 0.0 && w2 >= 0.0).then_some([w0, w1, w2])
}
