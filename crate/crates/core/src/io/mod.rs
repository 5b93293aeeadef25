//! ASCII point cloud, mesh and checkpoint files.

mod checkpoint;
mod ply;
mod xyz;

pub use checkpoint::{load_checkpoint, parse_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use ply::{parse_ply, read_ply, read_ply_mesh, write_ply, write_ply_string, PlyData};
pub use xyz::{parse_xyz, read_xyz, write_xyz, write_xyz_string};

use std::path::Path;

use crate::error::Error;

pub(crate) fn io_error(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub(crate) fn read_text(path: &Path) -> crate::Result<String> {
    std::fs::read_to_string(path).map_err(io_error(path))
}

/// Read a point cloud, choosing the format by extension (`.ply`, anything else is XYZ).
pub fn read_points(path: &Path) -> crate::Result<crate::PointCloud> {
    match path.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("ply") => Ok(read_ply(path)?.cloud),
        _ => read_xyz(path),
    }
}

/// Write a point cloud, choosing the format by extension.
pub fn write_points(path: &Path, cloud: &crate::PointCloud) -> crate::Result<()> {
    match path.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("ply") => write_ply(path, cloud.points(), None),
        _ => write_xyz(path, cloud),
    }
}
