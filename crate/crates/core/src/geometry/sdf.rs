use nalgebra::{Point3, Vector3};

use super::{GeometryError, GridShape, VoxelGrid};

/// Signed distance sampled at voxel centres, in metres.
///
/// Empty voxels hold the distance to the nearest occupied voxel centre.
/// Occupied voxels hold minus the distance to the nearest boundary voxel
/// centre, so the one-voxel boundary shell sits at zero and the interior is
/// strictly negative.
#[derive(Clone, Debug, PartialEq)]
pub struct SignedDistanceField {
    pub shape: GridShape,
    pub values: Vec<f32>,
}

impl SignedDistanceField {
    pub fn new(shape: GridShape, values: Vec<f32>) -> Result<Self, GeometryError> {
        if values.len() != shape.len() {
            return Err(GeometryError::Resolution(format!(
                "sdf has {} values but dims {:?} need {}",
                values.len(),
                shape.dims,
                shape.len()
            )));
        }
        Ok(Self { shape, values })
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.shape.index(i, j, k)] as f64
    }

    pub fn contains(&self, p: &Point3<f64>) -> bool {
        let u = self.shape.lattice(p);
        (0..3).all(|d| u[d] >= -1e-9 && u[d] <= (self.shape.dims[d] - 1) as f64 + 1e-9)
    }

    /// Trilinear interpolation of the stored values; exact at voxel centres.
    pub fn sample(&self, p: &Point3<f64>) -> Result<f64, GeometryError> {
        self.try_sample(p).ok_or(GeometryError::OutOfBounds { x: p.x, y: p.y, z: p.z })
    }

    /// Like [`sample`](Self::sample) but `None` outside the grid.
    #[inline]
    pub fn try_sample(&self, p: &Point3<f64>) -> Option<f64> {
        let u = self.shape.lattice(p);
        let dims = self.shape.dims;
        let mut base = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for d in 0..3 {
            let hi = (dims[d] - 1) as f64;
            if !(u[d] >= -1e-9 && u[d] <= hi + 1e-9) {
                return None;
            }
            // snap roundoff so lattice nodes reproduce stored values exactly
            let r = u[d].round();
            let x = if (u[d] - r).abs() < 1e-9 { r } else { u[d] }.clamp(0.0, hi);
            if dims[d] == 1 {
                continue;
            }
            let b = (x.floor() as usize).min(dims[d] - 2);
            base[d] = b;
            frac[d] = x - b as f64;
        }
        let step = |d: usize| if dims[d] > 1 { 1 } else { 0 };
        let (sx, sy, sz) = (step(0), step(1), step(2));
        let [i, j, k] = base;
        let [fx, fy, fz] = frac;
        let c = |a, b, c| self.at(a, b, c);
        let c00 = c(i, j, k) * (1.0 - fx) + c(i + sx, j, k) * fx;
        let c10 = c(i, j + sy, k) * (1.0 - fx) + c(i + sx, j + sy, k) * fx;
        let c01 = c(i, j, k + sz) * (1.0 - fx) + c(i + sx, j, k + sz) * fx;
        let c11 = c(i, j + sy, k + sz) * (1.0 - fx) + c(i + sx, j + sy, k + sz) * fx;
        let c0 = c00 * (1.0 - fy) + c10 * fy;
        let c1 = c01 * (1.0 - fy) + c11 * fy;
        Some(c0 * (1.0 - fz) + c1 * fz)
    }

    /// Central difference of [`sample`](Self::sample) with a one-voxel step.
    /// `p` must keep a one-voxel margin inside the grid.
    pub fn gradient(&self, p: &Point3<f64>) -> Result<Vector3<f64>, GeometryError> {
        let h = self.shape.voxel_size;
        let mut g = Vector3::zeros();
        for d in 0..3 {
            let mut off = Vector3::zeros();
            off[d] = h;
            let plus = self.sample(&(p + off))?;
            let minus = self.sample(&(p - off))?;
            g[d] = (plus - minus) / (2.0 * h);
        }
        Ok(g)
    }

    /// Unit outward direction at `p`, or `None` where the gradient vanishes.
    pub fn normal(&self, p: &Point3<f64>) -> Result<Option<Vector3<f64>>, GeometryError> {
        let g = self.gradient(p)?;
        let n = g.norm();
        Ok((n > 1e-12).then(|| g / n))
    }

    /// Gradient at a voxel centre from neighbouring stored values, falling
    /// back to one-sided differences on the grid faces.
    pub(crate) fn lattice_gradient(&self, i: usize, j: usize, k: usize) -> Vector3<f64> {
        let h = self.shape.voxel_size;
        let idx = [i, j, k];
        let mut g = Vector3::zeros();
        for d in 0..3 {
            let mut lo = idx;
            let mut hi = idx;
            if idx[d] > 0 {
                lo[d] -= 1;
            }
            if idx[d] + 1 < self.shape.dims[d] {
                hi[d] += 1;
            }
            let span = (hi[d] - lo[d]) as f64;
            if span > 0.0 {
                g[d] = (self.at(hi[0], hi[1], hi[2]) - self.at(lo[0], lo[1], lo[2])) / (span * h);
            }
        }
        g
    }
}

const FAR: f64 = f64::INFINITY;

/// Exact Euclidean distance field of a voxel grid (separable squared EDT,
/// one lower-envelope pass per axis).
pub fn compute_sdf(grid: &VoxelGrid) -> Result<SignedDistanceField, GeometryError> {
    let occupied = grid.occupied_count();
    if occupied == 0 || occupied == grid.occupancy.len() {
        return Err(GeometryError::DegenerateGrid(if occupied == 0 {
            "grid has no occupied voxels".into()
        } else {
            "grid has no empty voxels".into()
        }));
    }
    let shape = grid.shape;
    let outside: Vec<f64> = grid.occupancy.iter().map(|&o| if o { 0.0 } else { FAR }).collect();
    let inside: Vec<f64> = (0..shape.len())
        .map(|idx| {
            let [i, j, k] = shape.coords(idx);
            if grid.is_boundary(i, j, k) {
                0.0
            } else {
                FAR
            }
        })
        .collect();
    let d_out = squared_edt(outside, &shape.dims);
    let d_in = squared_edt(inside, &shape.dims);
    let h = shape.voxel_size;
    let values = grid
        .occupancy
        .iter()
        .enumerate()
        .map(|(idx, &o)| {
            if o {
                (-(d_in[idx].sqrt()) * h) as f32
            } else {
                (d_out[idx].sqrt() * h) as f32
            }
        })
        .collect();
    SignedDistanceField::new(shape, values)
}

/// Squared distance (in voxel units) from every cell to the nearest cell
/// holding 0 in `f`; other cells must hold +∞.
pub(crate) fn squared_edt(mut f: Vec<f64>, dims: &[usize; 3]) -> Vec<f64> {
    let stride = [1, dims[0], dims[0] * dims[1]];
    let n_max = *dims.iter().max().unwrap();
    let mut line = vec![0.0; n_max];
    let mut out = vec![0.0; n_max];
    let mut v = vec![0usize; n_max];
    let mut z = vec![0.0; n_max + 1];
    for axis in 0..3 {
        let n = dims[axis];
        let (a, b) = ((axis + 1) % 3, (axis + 2) % 3);
        for ib in 0..dims[b] {
            for ia in 0..dims[a] {
                let start = ia * stride[a] + ib * stride[b];
                for q in 0..n {
                    line[q] = f[start + q * stride[axis]];
                }
                edt_1d(&line[..n], &mut out[..n], &mut v, &mut z);
                for q in 0..n {
                    f[start + q * stride[axis]] = out[q];
                }
            }
        }
    }
    f
}

/// Lower envelope of parabolas `(q - p)² + f(p)` over finite `f(p)`.
fn edt_1d(f: &[f64], d: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k: isize = -1;
    for q in 0..n {
        if !f[q].is_finite() {
            continue;
        }
        let fq = f[q] + (q * q) as f64;
        loop {
            if k < 0 {
                k = 0;
                v[0] = q;
                z[0] = f64::NEG_INFINITY;
                z[1] = f64::INFINITY;
                break;
            }
            let p = v[k as usize];
            let s = (fq - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
            if s <= z[k as usize] {
                k -= 1;
                continue;
            }
            k += 1;
            v[k as usize] = q;
            z[k as usize] = s;
            z[k as usize + 1] = f64::INFINITY;
            break;
        }
    }
    if k < 0 {
        d.fill(FAR);
        return;
    }
    let mut j = 0usize;
    for (q, slot) in d.iter_mut().enumerate() {
        while z[j + 1] < q as f64 {
            j += 1;
        }
        let p = v[j];
        let dq = q as f64 - p as f64;
        *slot = dq * dq + f[p];
    }
}
