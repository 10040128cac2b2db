//! Triangle meshes: validation, OBJ/STL ingestion and a few procedural shapes
//! (boxes, the L-shaped hexagonal key, a round-tipped poker rod).

use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{Point3, Vector3};

use super::GeometryError;

#[derive(Clone, Debug, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Point3<f64>>,
    pub triangles: Vec<[u32; 3]>,
}

impl TriangleMesh {
    /// Builds a mesh and checks index ranges, finiteness and triangle areas.
    pub fn new(vertices: Vec<Point3<f64>>, triangles: Vec<[u32; 3]>) -> Result<Self, GeometryError> {
        let mesh = Self { vertices, triangles };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if self.triangles.is_empty() {
            return Err(GeometryError::InvalidMesh("mesh has no triangles".into()));
        }
        if let Some(i) = self.vertices.iter().position(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(GeometryError::InvalidMesh(format!("vertex {i} is not finite")));
        }
        let n = self.vertices.len() as u32;
        for (t, tri) in self.triangles.iter().enumerate() {
            if tri.iter().any(|&i| i >= n) {
                return Err(GeometryError::InvalidMesh(format!(
                    "triangle {t} references a vertex out of range ({n} vertices)"
                )));
            }
            let [a, b, c] = self.corners(t);
            if (b - a).cross(&(c - a)).norm() <= 0.0 {
                return Err(GeometryError::InvalidMesh(format!("triangle {t} is degenerate")));
            }
        }
        Ok(())
    }

    pub fn corners(&self, t: usize) -> [Point3<f64>; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a as usize], self.vertices[b as usize], self.vertices[c as usize]]
    }

    /// Axis-aligned bounding box `(min, max)`.
    pub fn bounds(&self) -> (Point3<f64>, Point3<f64>) {
        let mut lo = Point3::from([f64::INFINITY; 3]);
        let mut hi = Point3::from([f64::NEG_INFINITY; 3]);
        for v in &self.vertices {
            for d in 0..3 {
                lo[d] = lo[d].min(v[d]);
                hi[d] = hi[d].max(v[d]);
            }
        }
        (lo, hi)
    }

    /// Enclosed volume by the divergence theorem. Positive for outward-wound meshes.
    pub fn signed_volume(&self) -> f64 {
        (0..self.triangles.len())
            .map(|t| {
                let [a, b, c] = self.corners(t);
                a.coords.dot(&b.coords.cross(&c.coords)) / 6.0
            })
            .sum()
    }

    pub fn translated(mut self, offset: Vector3<f64>) -> Self {
        for v in &mut self.vertices {
            *v += offset;
        }
        self
    }

    /// Parses the `v`/`f` subset of Wavefront OBJ. Faces must be triangles;
    /// `f 1/2/3 ...` forms and negative (relative) indices are accepted.
    pub fn from_obj_str(text: &str) -> Result<Self, GeometryError> {
        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = lineno + 1;
            let err = |message: String| GeometryError::MeshParse { line, message };
            let mut fields = raw.split_whitespace();
            match fields.next() {
                Some("v") => {
                    let coords: Vec<f64> = fields
                        .take(3)
                        .map(|f| f.parse::<f64>().map_err(|e| err(format!("bad coordinate {f:?}: {e}"))))
                        .collect::<Result<_, _>>()?;
                    if coords.len() != 3 {
                        return Err(err("vertex needs three coordinates".into()));
                    }
                    vertices.push(Point3::new(coords[0], coords[1], coords[2]));
                }
                Some("f") => {
                    let idx: Vec<u32> = fields
                        .map(|f| {
                            let head = f.split('/').next().unwrap_or("");
                            let i: i64 = head.parse().map_err(|e| err(format!("bad face index {f:?}: {e}")))?;
                            let resolved = if i < 0 { vertices.len() as i64 + i } else { i - 1 };
                            if resolved < 0 || resolved >= vertices.len() as i64 {
                                return Err(err(format!("face index {i} out of range")));
                            }
                            Ok(resolved as u32)
                        })
                        .collect::<Result<_, _>>()?;
                    if idx.len() != 3 {
                        return Err(err(format!("only triangular faces are supported, got {} vertices", idx.len())));
                    }
                    triangles.push([idx[0], idx[1], idx[2]]);
                }
                _ => {}
            }
        }
        Self::new(vertices, triangles)
    }

    /// Parses binary STL, merging bit-identical vertices.
    pub fn from_stl_bytes(bytes: &[u8]) -> Result<Self, GeometryError> {
        let bad = |m: &str| GeometryError::InvalidMesh(format!("binary STL: {m}"));
        if bytes.len() < 84 {
            return Err(bad("file shorter than the 84-byte header"));
        }
        let count = u32::from_le_bytes(bytes[80..84].try_into().unwrap()) as usize;
        if bytes.len() < 84 + count * 50 {
            return Err(bad(&format!("header declares {count} triangles but the file is truncated")));
        }
        let mut lookup: HashMap<[u32; 3], u32> = HashMap::new();
        let mut vertices = Vec::new();
        let mut triangles = Vec::with_capacity(count);
        for t in 0..count {
            let rec = &bytes[84 + t * 50..84 + (t + 1) * 50];
            let mut tri = [0u32; 3];
            for (k, slot) in tri.iter_mut().enumerate() {
                let base = 12 + k * 12;
                let mut key = [0u32; 3];
                let mut p = [0.0f64; 3];
                for d in 0..3 {
                    let raw: [u8; 4] = rec[base + d * 4..base + d * 4 + 4].try_into().unwrap();
                    key[d] = u32::from_le_bytes(raw);
                    p[d] = f32::from_le_bytes(raw) as f64;
                }
                *slot = *lookup.entry(key).or_insert_with(|| {
                    vertices.push(Point3::from(p));
                    (vertices.len() - 1) as u32
                });
            }
            triangles.push(tri);
        }
        Self::new(vertices, triangles)
    }

    pub fn to_obj_string(&self) -> String {
        let mut out = String::new();
        for v in &self.vertices {
            out.push_str(&format!("v {} {} {}\n", v.x, v.y, v.z));
        }
        for t in &self.triangles {
            out.push_str(&format!("f {} {} {}\n", t[0] + 1, t[1] + 1, t[2] + 1));
        }
        out
    }

    pub fn to_stl_bytes(&self) -> Vec<u8> {
        let mut out = vec![0u8; 80];
        out.extend_from_slice(&(self.triangles.len() as u32).to_le_bytes());
        for t in 0..self.triangles.len() {
            let [a, b, c] = self.corners(t);
            let n = (b - a).cross(&(c - a)).normalize();
            for x in n.iter().chain(a.iter()).chain(b.iter()).chain(c.iter()) {
                out.extend_from_slice(&(*x as f32).to_le_bytes());
            }
            out.extend_from_slice(&0u16.to_le_bytes());
        }
        out
    }
}

#[derive(Default)]
struct MeshBuilder {
    vertices: Vec<Point3<f64>>,
    triangles: Vec<[u32; 3]>,
}

impl MeshBuilder {
    fn vertex(&mut self, x: f64, y: f64, z: f64) -> u32 {
        self.vertices.push(Point3::new(x, y, z));
        (self.vertices.len() - 1) as u32
    }

    fn tri(&mut self, a: u32, b: u32, c: u32) {
        self.triangles.push([a, b, c]);
    }

    /// Quad wound `a → b → c → d`.
    fn quad(&mut self, a: u32, b: u32, c: u32, d: u32) {
        self.tri(a, b, c);
        self.tri(a, c, d);
    }

    fn finish(self) -> TriangleMesh {
        TriangleMesh::new(self.vertices, self.triangles).expect("procedural mesh is well formed")
    }
}

/// Axis-aligned box between two corners, wound outward.
pub fn cuboid(min: Point3<f64>, max: Point3<f64>) -> TriangleMesh {
    let mut b = MeshBuilder::default();
    let mut c = [[[0u32; 2]; 2]; 2];
    for (i, x) in [min.x, max.x].into_iter().enumerate() {
        for (j, y) in [min.y, max.y].into_iter().enumerate() {
            for (k, z) in [min.z, max.z].into_iter().enumerate() {
                c[i][j][k] = b.vertex(x, y, z);
            }
        }
    }
    b.quad(c[0][0][0], c[0][0][1], c[0][1][1], c[0][1][0]);
    b.quad(c[1][0][0], c[1][1][0], c[1][1][1], c[1][0][1]);
    b.quad(c[0][0][0], c[1][0][0], c[1][0][1], c[0][0][1]);
    b.quad(c[0][1][0], c[0][1][1], c[1][1][1], c[1][1][0]);
    b.quad(c[0][0][0], c[0][1][0], c[1][1][0], c[1][0][0]);
    b.quad(c[0][0][1], c[1][0][1], c[1][1][1], c[0][1][1]);
    b.finish()
}

/// Box of the given full extents centred on the origin.
pub fn centered_box(size: Vector3<f64>) -> TriangleMesh {
    let h = size / 2.0;
    cuboid(Point3::from(-h), Point3::from(h))
}

/// L-shaped hexagonal bar: one arm along +x of length `long_arm`, the other
/// along +z of length `short_arm`, both measured from the bend on the bar
/// axis. The arms meet on the mitre plane `x = z`, so the volume is exactly
/// `2√3·r²·(long_arm + short_arm)` for inradius `r`.
pub fn hex_key(short_arm: f64, long_arm: f64, inradius: f64) -> TriangleMesh {
    let circ = inradius * 2.0 / 3f64.sqrt();
    let ring: Vec<(f64, f64)> = (0..6)
        .map(|k| {
            let t = k as f64 * PI / 3.0;
            (circ * t.cos(), circ * t.sin())
        })
        .collect();
    let mut b = MeshBuilder::default();
    let miter: Vec<u32> = ring.iter().map(|&(a, s)| b.vertex(a, s, a)).collect();
    let end_x: Vec<u32> = ring.iter().map(|&(a, s)| b.vertex(long_arm, s, a)).collect();
    let end_z: Vec<u32> = ring.iter().map(|&(a, s)| b.vertex(a, s, short_arm)).collect();
    for k in 0..6 {
        let n = (k + 1) % 6;
        b.quad(miter[k], end_x[k], end_x[n], miter[n]);
        b.quad(miter[k], miter[n], end_z[n], end_z[k]);
    }
    for k in 1..5 {
        b.tri(end_x[0], end_x[k + 1], end_x[k]);
        b.tri(end_z[0], end_z[k], end_z[k + 1]);
    }
    b.finish()
}

/// Cylinder of `radius` along +x from `back` to `front` with a hemispherical
/// cap beyond `front` and a flat cap at `back`.
pub fn round_tip_rod(radius: f64, back: f64, front: f64, segments: usize, cap_rings: usize) -> TriangleMesh {
    let segments = segments.max(6);
    let cap_rings = cap_rings.max(2);
    let mut b = MeshBuilder::default();
    let ring = |b: &mut MeshBuilder, x: f64, r: f64| -> Vec<u32> {
        (0..segments)
            .map(|k| {
                let phi = 2.0 * PI * k as f64 / segments as f64;
                b.vertex(x, r * phi.cos(), r * phi.sin())
            })
            .collect()
    };
    let mut rings = vec![ring(&mut b, back, radius), ring(&mut b, front, radius)];
    for j in 1..cap_rings {
        let beta = FRAC_PI_2 * j as f64 / cap_rings as f64;
        rings.push(ring(&mut b, front + radius * beta.sin(), radius * beta.cos()));
    }
    let back_center = b.vertex(back, 0.0, 0.0);
    let apex = b.vertex(front + radius, 0.0, 0.0);
    for k in 0..segments {
        let n = (k + 1) % segments;
        b.tri(back_center, rings[0][n], rings[0][k]);
        for w in rings.windows(2) {
            b.quad(w[0][k], w[0][n], w[1][n], w[1][k]);
        }
        let last = rings.last().unwrap();
        b.tri(last[k], last[n], apex);
    }
    b.finish()
}
