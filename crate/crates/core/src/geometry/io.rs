//! `SCVX` binary container for voxel grids and distance fields.
//!
//! Layout, all little-endian: magic `b"SCVX"`, `u32` version, `3 × f64`
//! origin, `f64` voxel size, `3 × u32` dims, then the payload. Occupancy is
//! bit-packed LSB-first in x-fastest order; distance fields are `f32` per
//! voxel. The payload kind follows from its length, which differs between
//! the two encodings for every non-empty grid.

use nalgebra::Point3;

use super::{GeometryError, GridShape, SignedDistanceField, VoxelGrid};

pub const MAGIC: &[u8; 4] = b"SCVX";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 24 + 8 + 12;

fn write_header(shape: &GridShape, out: &mut Vec<u8>) {
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for d in 0..3 {
        out.extend_from_slice(&shape.origin[d].to_le_bytes());
    }
    out.extend_from_slice(&shape.voxel_size.to_le_bytes());
    for d in 0..3 {
        out.extend_from_slice(&(shape.dims[d] as u32).to_le_bytes());
    }
}

fn read_header(bytes: &[u8]) -> Result<(GridShape, &[u8]), GeometryError> {
    let bad = |m: String| GeometryError::Format(m);
    if bytes.len() < HEADER_LEN {
        return Err(bad(format!("file has {} bytes, header needs {HEADER_LEN}", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(bad("missing SCVX magic".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let f = |at: usize| f64::from_le_bytes(bytes[at..at + 8].try_into().unwrap());
    let u = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize;
    let origin = Point3::new(f(8), f(16), f(24));
    let voxel_size = f(32);
    let dims = [u(40), u(44), u(48)];
    let shape = GridShape::new(origin, voxel_size, dims).map_err(|e| bad(e.to_string()))?;
    Ok((shape, &bytes[HEADER_LEN..]))
}

pub fn encode_voxel_grid(grid: &VoxelGrid) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + grid.occupancy.len().div_ceil(8));
    write_header(&grid.shape, &mut out);
    for chunk in grid.occupancy.chunks(8) {
        let byte = chunk.iter().enumerate().fold(0u8, |b, (i, &o)| b | ((o as u8) << i));
        out.push(byte);
    }
    out
}

pub fn encode_sdf(sdf: &SignedDistanceField) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + sdf.values.len() * 4);
    write_header(&sdf.shape, &mut out);
    for v in &sdf.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_voxel_grid(bytes: &[u8]) -> Result<VoxelGrid, GeometryError> {
    let (shape, payload) = read_header(bytes)?;
    let n = shape.len();
    if payload.len() != n.div_ceil(8) {
        return Err(GeometryError::Format(format!(
            "occupancy payload is {} bytes, expected {}",
            payload.len(),
            n.div_ceil(8)
        )));
    }
    let occupancy = (0..n).map(|i| payload[i / 8] >> (i % 8) & 1 == 1).collect();
    VoxelGrid::new(shape, occupancy)
}

pub fn decode_sdf(bytes: &[u8]) -> Result<SignedDistanceField, GeometryError> {
    let (shape, payload) = read_header(bytes)?;
    let n = shape.len();
    if payload.len() != n * 4 {
        return Err(GeometryError::Format(format!(
            "sdf payload is {} bytes, expected {}",
            payload.len(),
            n * 4
        )));
    }
    let values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    SignedDistanceField::new(shape, values)
}
