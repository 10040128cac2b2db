//! Preprocessed model bundles: `voxels.scvx`, `sdf.scvx` and `surface.csv`.
//! The surface file's comment header records the source hash and the
//! radius of gyration, so a bundle is self-describing and a rerun on
//! unchanged input is skipped.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Point3, Vector3};
use sha2::{Digest, Sha256};

use scope_core::geometry::io::{decode_sdf, encode_sdf, encode_voxel_grid};
use scope_core::geometry::{
    compute_sdf, default_eps_s, extract_surface, voxelize_with, ObjectModel, SurfaceModel, TriangleMesh, VoxelGrid,
    VoxelizeOptions,
};
use scope_core::scope::GripperSpec;
use scope_core::synth::models::{self, gripper_at, SyntheticWorld};

use crate::config::{ExperimentConfig, ObjectSpec};
use crate::output::OutDir;
use crate::CliError;

pub const VOXELS: &str = "voxels.scvx";
pub const SDF: &str = "sdf.scvx";
pub const SURFACE: &str = "surface.csv";

/// Padding that keeps central-difference normals defined on every surface
/// point.
pub const PADDING: usize = 2;

const SURFACE_COLUMNS: &str = "x_m,y_m,z_m,nx,ny,nz,i,j,k";

pub fn read_mesh(path: &Path) -> Result<TriangleMesh, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
    let mesh = match ext.as_deref() {
        Some("stl") => TriangleMesh::from_stl_bytes(&bytes),
        Some("obj") => {
            let text = String::from_utf8(bytes)
                .map_err(|e| CliError::Input(format!("{}: not UTF-8 text: {e}", path.display())))?;
            TriangleMesh::from_obj_str(&text)
        }
        _ => return Err(CliError::Input(format!("{}: expected a .obj or .stl mesh", path.display()))),
    };
    mesh.map_err(|e| CliError::Compute(format!("{}: {e}", path.display())))
}

/// Root-mean-square distance of the occupied voxel centres from their
/// centroid (m).
pub fn radius_of_gyration(grid: &VoxelGrid) -> f64 {
    let [nx, ny, nz] = grid.shape.dims;
    let mut centres = Vec::new();
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                if grid.occupied(i, j, k) {
                    centres.push(grid.shape.center(i, j, k).coords);
                }
            }
        }
    }
    let n = centres.len().max(1) as f64;
    let c: Vector3<f64> = centres.iter().sum::<Vector3<f64>>() / n;
    (centres.iter().map(|p| (p - c).norm_squared()).sum::<f64>() / n).sqrt()
}

fn source_hash(mesh_bytes: &[u8], voxel_size: f64) -> String {
    let mut h = Sha256::new();
    h.update(mesh_bytes);
    h.update(voxel_size.to_le_bytes());
    h.update((PADDING as u64).to_le_bytes());
    h.finalize().iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn header_value<'a>(text: &'a str, key: &str) -> Option<&'a str> {
    text.lines()
        .take_while(|l| l.starts_with('#'))
        .find_map(|l| l.trim_start_matches('#').trim().strip_prefix(key)?.strip_prefix(':').map(str::trim))
}

fn surface_csv(surface: &SurfaceModel, hash: &str, voxel_size: f64, r_g: f64) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# units: m; normals unitless; i,j,k voxel indices");
    let _ = writeln!(s, "# source_sha256: {hash}");
    let _ = writeln!(s, "# voxel_size_m: {voxel_size}");
    let _ = writeln!(s, "# eps_s_m: {}", surface.eps_s);
    let _ = writeln!(s, "# radius_of_gyration_m: {r_g}");
    let _ = writeln!(s, "{SURFACE_COLUMNS}");
    for ((p, n), v) in surface.points.iter().zip(&surface.normals).zip(&surface.voxels) {
        let _ = writeln!(s, "{},{},{},{},{},{},{},{},{}", p.x, p.y, p.z, n.x, n.y, n.z, v[0], v[1], v[2]);
    }
    s
}

pub enum Preprocessed {
    Written { surface_points: usize },
    UpToDate,
}

/// Voxelize, compute the distance field and extract the surface of `mesh`
/// into `out`, unless `out` already holds a bundle built from the same mesh
/// bytes and voxel size.
pub fn preprocess(mesh_path: &Path, voxel_size: f64, out: &OutDir) -> Result<Preprocessed, CliError> {
    let bytes = std::fs::read(mesh_path).map_err(|e| CliError::Input(format!("{}: {e}", mesh_path.display())))?;
    let hash = source_hash(&bytes, voxel_size);
    let existing = std::fs::read_to_string(out.path(SURFACE)).ok();
    let complete = out.path(VOXELS).is_file() && out.path(SDF).is_file();
    if complete && existing.as_deref().and_then(|t| header_value(t, "source_sha256")) == Some(hash.as_str()) {
        return Ok(Preprocessed::UpToDate);
    }
    let mesh = read_mesh(mesh_path)?;
    let ctx = |e: scope_core::geometry::GeometryError| CliError::Compute(format!("{}: {e}", mesh_path.display()));
    let grid = voxelize_with(&mesh, voxel_size, VoxelizeOptions { padding: PADDING, ..Default::default() })
        .map_err(ctx)?;
    let sdf = compute_sdf(&grid).map_err(ctx)?;
    let surface = extract_surface(&sdf, default_eps_s(voxel_size)).map_err(ctx)?;
    let r_g = radius_of_gyration(&grid);
    out.write(VOXELS, &encode_voxel_grid(&grid))?;
    out.write(SDF, &encode_sdf(&sdf))?;
    out.write(SURFACE, surface_csv(&surface, &hash, voxel_size, r_g).as_bytes())?;
    Ok(Preprocessed::Written { surface_points: surface.len() })
}

fn parse_surface(text: &str, path: &Path) -> Result<(SurfaceModel, f64), CliError> {
    let bad = |line: usize, m: &str| CliError::Input(format!("{}:{line}: {m}", path.display()));
    let eps_s: f64 = header_value(text, "eps_s_m")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| bad(1, "missing eps_s_m header"))?;
    let r_g: f64 = header_value(text, "radius_of_gyration_m")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| bad(1, "missing radius_of_gyration_m header"))?;
    let (mut points, mut normals, mut voxels) = (Vec::new(), Vec::new(), Vec::new());
    for (n, line) in text.lines().enumerate() {
        if line.starts_with('#') || line == SURFACE_COLUMNS || line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 9 {
            return Err(bad(n + 1, &format!("expected 9 fields, found {}", f.len())));
        }
        let x: Vec<f64> = f[..6]
            .iter()
            .map(|v| v.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| bad(n + 1, &e.to_string()))?;
        let v: Vec<u32> = f[6..]
            .iter()
            .map(|v| v.trim().parse::<u32>())
            .collect::<Result<_, _>>()
            .map_err(|e| bad(n + 1, &e.to_string()))?;
        points.push(Point3::new(x[0], x[1], x[2]));
        normals.push(Vector3::new(x[3], x[4], x[5]));
        voxels.push([v[0], v[1], v[2]]);
    }
    let surface = SurfaceModel::new(points, normals, voxels, eps_s).map_err(|e| bad(1, &e.to_string()))?;
    Ok((surface, r_g))
}

pub fn load_bundle(dir: &Path, name: &str) -> Result<ObjectModel, CliError> {
    let sdf_path = dir.join(SDF);
    let bytes = std::fs::read(&sdf_path).map_err(|e| CliError::Input(format!("{}: {e}", sdf_path.display())))?;
    let sdf = decode_sdf(&bytes).map_err(|e| CliError::Input(format!("{}: {e}", sdf_path.display())))?;
    let surface_path = dir.join(SURFACE);
    let text = std::fs::read_to_string(&surface_path)
        .map_err(|e| CliError::Input(format!("{}: {e}", surface_path.display())))?;
    let (surface, radius_of_gyration) = parse_surface(&text, &surface_path)?;
    Ok(ObjectModel { name: name.into(), sdf, surface, radius_of_gyration })
}

fn builtin(name: &str, voxel_size: f64) -> Result<(ObjectModel, Point3<f64>), CliError> {
    let ctx = |e: scope_core::geometry::GeometryError| CliError::Compute(format!("builtin:{name}: {e}"));
    match name {
        "poker" => Ok((models::poker_model(voxel_size).map_err(ctx)?, Point3::new(0.0, models::POKER_RADIUS, 0.0))),
        "tool" => Ok((models::tool_model(voxel_size).map_err(ctx)?, Point3::new(0.0, models::TOOL_SIZE[1] / 2.0, 0.0))),
        "hex_key" => Ok((models::hex_key_model(voxel_size).map_err(ctx)?, Point3::origin())),
        _ => Err(CliError::Config(format!("unknown built-in model {name:?}; expected poker, tool or hex_key"))),
    }
}

/// Checks that a model reference names something that exists, before any
/// compute starts.
pub fn check_spec(spec: &ObjectSpec) -> Result<(), CliError> {
    if let Some(name) = spec.model.strip_prefix("builtin:") {
        return match name {
            "poker" | "tool" | "hex_key" => Ok(()),
            _ => Err(CliError::Config(format!("unknown built-in model {name:?}; expected poker, tool or hex_key"))),
        };
    }
    let p = Path::new(&spec.model);
    if p.is_dir() || p.is_file() {
        Ok(())
    } else {
        Err(CliError::Config(format!("model {} does not exist", spec.model)))
    }
}

/// Model and gripper for one object reference.
pub fn resolve(spec: &ObjectSpec, voxel_size: f64) -> Result<(ObjectModel, GripperSpec), CliError> {
    let (mut model, hint) = if let Some(name) = spec.model.strip_prefix("builtin:") {
        builtin(name, voxel_size)?
    } else {
        let path = Path::new(&spec.model);
        let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("object").to_string();
        let model = if path.is_dir() {
            load_bundle(path, &name)?
        } else {
            let mesh = read_mesh(path)?;
            let ctx = |e: scope_core::geometry::GeometryError| CliError::Compute(format!("{}: {e}", path.display()));
            let grid = voxelize_with(&mesh, voxel_size, VoxelizeOptions { padding: PADDING, ..Default::default() })
                .map_err(ctx)?;
            let sdf = compute_sdf(&grid).map_err(ctx)?;
            let surface = extract_surface(&sdf, default_eps_s(voxel_size)).map_err(ctx)?;
            ObjectModel { name, sdf, surface, radius_of_gyration: radius_of_gyration(&grid) }
        };
        (model, Point3::origin())
    };
    if let Some(r) = spec.radius_of_gyration {
        model.radius_of_gyration = r;
    }
    let hint = spec.gripper.map(Point3::from).unwrap_or(hint);
    let gripper = gripper_at(&model, hint);
    Ok((model, gripper))
}

pub fn world(cfg: &ExperimentConfig) -> Result<SyntheticWorld, CliError> {
    let (poker, poker_gripper) = resolve(&cfg.poker, cfg.voxel_size)?;
    let (tool, tool_gripper) = resolve(&cfg.tool, cfg.voxel_size)?;
    Ok(SyntheticWorld { poker, tool, poker_gripper, tool_gripper })
}
