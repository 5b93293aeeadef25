use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::PointCloud;

/// Parse XYZ text: three reals per line, blank lines and `#` comments skipped.
/// `path` only labels errors.
pub fn parse_xyz(text: &str, path: &Path) -> Result<PointCloud> {
    let mut points = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let err = |message: String| Error::ParseLine {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let fields: Vec<&str> = content.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(err(format!("expected 3 coordinates, found {}", fields.len())));
        }
        let mut p = [0.0f64; 3];
        for (c, f) in p.iter_mut().zip(&fields) {
            *c = f.parse().map_err(|_| err(format!("'{f}' is not a number")))?;
            if !c.is_finite() {
                return Err(err(format!("non-finite coordinate '{f}'")));
            }
        }
        points.push(p);
    }
    if points.is_empty() {
        return Err(Error::invalid_input(format!("{}: no points", path.display())));
    }
    PointCloud::new(points)
}

pub fn read_xyz(path: &Path) -> Result<PointCloud> {
    parse_xyz(&super::read_text(path)?, path)
}

/// One `x y z` line per point with 9 significant digits.
pub fn write_xyz_string(cloud: &PointCloud) -> String {
    let mut s = String::with_capacity(cloud.len() * 48);
    for p in cloud.points() {
        let _ = writeln!(s, "{:.8e} {:.8e} {:.8e}", p[0], p[1], p[2]);
    }
    s
}

pub fn write_xyz(path: &Path, cloud: &PointCloud) -> Result<()> {
    std::fs::write(path, write_xyz_string(cloud)).map_err(super::io_error(path))
}
