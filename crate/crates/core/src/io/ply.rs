use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{Point3, PointCloud};
use crate::metrics::TriangleMesh;

/// Vertices of an ASCII PLY file plus its faces, fan-triangulated.
#[derive(Clone, Debug)]
pub struct PlyData {
    pub cloud: PointCloud,
    pub faces: Vec<[usize; 3]>,
}

impl PlyData {
    pub fn into_mesh(self) -> Result<TriangleMesh> {
        if self.faces.is_empty() {
            return Err(Error::invalid_input("PLY file has no faces"));
        }
        TriangleMesh::new(self.cloud.into_points(), self.faces)
    }
}

enum Property {
    Scalar(String),
    List(String),
}

struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

/// Lines of `text` with the byte offset each one starts at.
fn lines_with_offsets(text: &str) -> impl Iterator<Item = (usize, &str)> {
    let mut offset = 0;
    text.split_inclusive('\n').map(move |raw| {
        let start = offset;
        offset += raw.len();
        (start, raw.trim_end_matches(['\n', '\r']))
    })
}

pub fn parse_ply(text: &str, path: &Path) -> Result<PlyData> {
    let err = |offset: usize, message: String| Error::ParseOffset {
        path: path.to_path_buf(),
        offset,
        message,
    };
    let mut lines = lines_with_offsets(text);
    match lines.next() {
        Some((_, l)) if l.trim() == "ply" => {}
        _ => return Err(err(0, "missing 'ply' magic".into())),
    }
    let mut elements: Vec<Element> = Vec::new();
    let mut saw_format = false;
    let mut end_offset = text.len();
    let mut ended = false;
    for (off, line) in lines.by_ref() {
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            [] => {}
            ["comment", ..] | ["obj_info", ..] => {}
            ["format", "ascii", _] => saw_format = true,
            ["format", f, ..] if f.starts_with("binary") => {
                return Err(err(off, "binary PLY unsupported".into()));
            }
            ["format", ..] => return Err(err(off, format!("unsupported format line '{line}'"))),
            ["element", name, count] => {
                let count = count
                    .parse()
                    .map_err(|_| err(off, format!("bad element count '{count}'")))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    props: Vec::new(),
                });
            }
            ["property", "list", _, _, name] => match elements.last_mut() {
                Some(e) => e.props.push(Property::List(name.to_string())),
                None => return Err(err(off, "property before any element".into())),
            },
            ["property", _, name] => match elements.last_mut() {
                Some(e) => e.props.push(Property::Scalar(name.to_string())),
                None => return Err(err(off, "property before any element".into())),
            },
            ["end_header"] => {
                end_offset = off + line.len();
                ended = true;
                break;
            }
            _ => return Err(err(off, format!("unrecognized header line '{line}'"))),
        }
    }
    if !ended {
        return Err(err(end_offset, "header has no end_header".into()));
    }
    if !saw_format {
        return Err(err(0, "header has no 'format ascii 1.0' line".into()));
    }
    if !elements.iter().any(|e| e.name == "vertex") {
        return Err(err(0, "no vertex element".into()));
    }

    let mut points: Vec<Point3> = Vec::new();
    let mut faces: Vec<[usize; 3]> = Vec::new();
    let mut body = lines.filter(|(_, l)| !l.trim().is_empty());
    for e in &elements {
        let xyz: Vec<Option<usize>> = ["x", "y", "z"]
            .iter()
            .map(|axis| {
                e.props
                    .iter()
                    .position(|p| matches!(p, Property::Scalar(n) if n == axis))
            })
            .collect();
        if e.name == "vertex" && xyz.iter().any(Option::is_none) {
            return Err(err(end_offset, "vertex element lacks x, y or z".into()));
        }
        for _ in 0..e.count {
            let (off, line) = body
                .next()
                .ok_or_else(|| err(text.len(), format!("file ends inside element '{}'", e.name)))?;
            let tokens: Vec<&str> = line.split_whitespace().collect();
            let mut pos = 0;
            let mut scalars: Vec<f64> = Vec::new();
            let mut list: Option<Vec<usize>> = None;
            for p in &e.props {
                let mut take = || -> Result<&str> {
                    let t = tokens
                        .get(pos)
                        .copied()
                        .ok_or_else(|| err(off, format!("too few values for element '{}'", e.name)))?;
                    pos += 1;
                    Ok(t)
                };
                match p {
                    Property::Scalar(_) => {
                        let t = take()?;
                        scalars.push(t.parse().map_err(|_| err(off, format!("'{t}' is not a number")))?);
                    }
                    Property::List(name) => {
                        let t = take()?;
                        let n: usize = t.parse().map_err(|_| err(off, format!("bad list length '{t}'")))?;
                        let mut items = Vec::with_capacity(n);
                        for _ in 0..n {
                            let t = take()?;
                            items.push(t.parse().map_err(|_| err(off, format!("bad index '{t}'")))?);
                        }
                        if name == "vertex_indices" || name == "vertex_index" {
                            list = Some(items);
                        }
                    }
                }
            }
            if pos != tokens.len() {
                return Err(err(off, format!("too many values for element '{}'", e.name)));
            }
            match e.name.as_str() {
                "vertex" => {
                    let p = [0, 1, 2].map(|c| scalars[property_slot(&e.props, xyz[c].unwrap())]);
                    if p.iter().any(|c| !c.is_finite()) {
                        return Err(err(off, "non-finite vertex coordinate".into()));
                    }
                    points.push(p);
                }
                "face" => {
                    let idx = list.ok_or_else(|| err(off, "face element has no vertex_indices".into()))?;
                    if idx.len() < 3 {
                        return Err(err(off, format!("face with {} vertices", idx.len())));
                    }
                    for k in 1..idx.len() - 1 {
                        faces.push([idx[0], idx[k], idx[k + 1]]);
                    }
                }
                _ => {}
            }
        }
    }
    if let Some((off, _)) = body.next() {
        return Err(err(off, "data after the last element".into()));
    }
    let cloud = PointCloud::new(points)?;
    if let Some(bad) = faces.iter().flatten().find(|&&i| i >= cloud.len()) {
        return Err(Error::invalid_input(format!(
            "{}: face index {bad} out of range for {} vertices",
            path.display(),
            cloud.len()
        )));
    }
    Ok(PlyData { cloud, faces })
}

/// Index among scalar values of the property at `prop_index` (list
/// properties contribute no scalars).
fn property_slot(props: &[Property], prop_index: usize) -> usize {
    props[..prop_index]
        .iter()
        .filter(|p| matches!(p, Property::Scalar(_)))
        .count()
}

pub fn read_ply(path: &Path) -> Result<PlyData> {
    parse_ply(&super::read_text(path)?, path)
}

/// Read a PLY file that must contain faces, validating them as a mesh.
pub fn read_ply_mesh(path: &Path) -> Result<TriangleMesh> {
    read_ply(path)?.into_mesh()
}

pub fn write_ply_string(points: &[Point3], faces: Option<&[[usize; 3]]>) -> String {
    let mut s = String::new();
    s.push_str("ply\nformat ascii 1.0\n");
    let _ = writeln!(s, "element vertex {}", points.len());
    s.push_str("property double x\nproperty double y\nproperty double z\n");
    if let Some(f) = faces {
        let _ = writeln!(s, "element face {}", f.len());
        s.push_str("property list uchar int vertex_indices\n");
    }
    s.push_str("end_header\n");
    for p in points {
        let _ = writeln!(s, "{:.8e} {:.8e} {:.8e}", p[0], p[1], p[2]);
    }
    for f in faces.unwrap_or(&[]) {
        let _ = writeln!(s, "3 {} {} {}", f[0], f[1], f[2]);
    }
    s
}

pub fn write_ply(path: &Path, points: &[Point3], faces: Option<&[[usize; 3]]>) -> Result<()> {
    std::fs::write(path, write_ply_string(points, faces)).map_err(super::io_error(path))
}
