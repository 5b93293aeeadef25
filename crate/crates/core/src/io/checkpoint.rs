//! Text checkpoint:
//!
//! ```text
//! GFRS 1
//! k_feat 16
//! edge_widths 32 32 32
//! f_hidden 128
//! m_hidden 64
//! radius spacing 3.0000000000000000e0
//! k_max 32
//! tensors 17
//! tensor f0.b 2 1 128
//! <one line of values per row>
//! ...
//! ```
//!
//! Values carry 17 significant digits, which round-trips every `f64`.

use std::fmt::Write as _;
use std::path::Path;

use crate::autodiff::{ParameterSet, Tensor};
use crate::error::{Error, Result};
use crate::field::{FieldConfig, GradientFieldModel, RadiusPolicy};

pub const CHECKPOINT_MAGIC: &str = "GFRS";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn write_checkpoint(model: &GradientFieldModel) -> String {
    let c = model.config();
    let mut s = String::new();
    let _ = writeln!(s, "{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}");
    let _ = writeln!(s, "k_feat {}", c.k_feat);
    let [a, b, d] = c.edge_widths;
    let _ = writeln!(s, "edge_widths {a} {b} {d}");
    let _ = writeln!(s, "f_hidden {}", c.f_hidden);
    let _ = writeln!(s, "m_hidden {}", c.m_hidden);
    match c.radius {
        RadiusPolicy::SpacingMultiple(f) => writeln!(s, "radius spacing {f:.16e}"),
        RadiusPolicy::Fixed(r) => writeln!(s, "radius fixed {r:.16e}"),
    }
    .ok();
    let _ = writeln!(s, "k_max {}", c.k_max);
    let _ = writeln!(s, "tensors {}", model.params().len());
    for (name, p) in model.params().iter() {
        let t = &p.value;
        let _ = writeln!(s, "tensor {name} 2 {} {}", t.rows(), t.cols());
        for r in 0..t.rows() {
            let row: Vec<String> = t.row(r).iter().map(|v| format!("{v:.16e}")).collect();
            s.push_str(&row.join(" "));
            s.push('\n');
        }
    }
    s
}

pub fn save_checkpoint(path: &Path, model: &GradientFieldModel) -> Result<()> {
    std::fs::write(path, write_checkpoint(model)).map_err(super::io_error(path))
}

pub fn load_checkpoint(path: &Path) -> Result<GradientFieldModel> {
    parse_checkpoint(&super::read_text(path)?, path)
}

struct Reader<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
    path: &'a Path,
    line: usize,
}

impl<'a> Reader<'a> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::ParseLine {
            path: self.path.to_path_buf(),
            line: self.line,
            message: message.into(),
        }
    }

    fn next(&mut self) -> Result<Vec<&'a str>> {
        match self.lines.next() {
            Some((i, l)) => {
                self.line = i + 1;
                Ok(l.split_whitespace().collect())
            }
            None => {
                self.line += 1;
                Err(self.err("unexpected end of checkpoint"))
            }
        }
    }

    fn parse<T: std::str::FromStr>(&self, s: &str) -> Result<T> {
        s.parse().map_err(|_| self.err(format!("cannot parse '{s}'")))
    }

    /// A `key v` line.
    fn field<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        let w = self.next()?;
        match w.as_slice() {
            [k, v] if *k == key => self.parse(v),
            _ => Err(self.err(format!("expected '{key} <value>'"))),
        }
    }
}

pub fn parse_checkpoint(text: &str, path: &Path) -> Result<GradientFieldModel> {
    let mut r = Reader {
        lines: text.lines().enumerate(),
        path,
        line: 0,
    };
    let head = r.next()?;
    match head.as_slice() {
        [m, v] if *m == CHECKPOINT_MAGIC => {
            let found: u32 = r.parse(v)?;
            if found != CHECKPOINT_VERSION {
                return Err(Error::UnsupportedVersion {
                    found,
                    expected: CHECKPOINT_VERSION,
                });
            }
        }
        _ => return Err(r.err(format!("not a checkpoint (missing '{CHECKPOINT_MAGIC}' header)"))),
    }
    let k_feat = r.field("k_feat")?;
    let w = r.next()?;
    let edge_widths = match w.as_slice() {
        ["edge_widths", a, b, c] => [r.parse(a)?, r.parse(b)?, r.parse(c)?],
        _ => return Err(r.err("expected 'edge_widths <a> <b> <c>'")),
    };
    let f_hidden = r.field("f_hidden")?;
    let m_hidden = r.field("m_hidden")?;
    let w = r.next()?;
    let radius = match w.as_slice() {
        ["radius", "spacing", f] => RadiusPolicy::SpacingMultiple(r.parse(f)?),
        ["radius", "fixed", v] => RadiusPolicy::Fixed(r.parse(v)?),
        _ => return Err(r.err("expected 'radius spacing|fixed <value>'")),
    };
    let k_max = r.field("k_max")?;
    let config = FieldConfig {
        k_feat,
        edge_widths,
        f_hidden,
        m_hidden,
        radius,
        k_max,
    };
    let count: usize = r.field("tensors")?;
    let mut params = ParameterSet::new();
    for _ in 0..count {
        let w = r.next()?;
        let (name, rows, cols) = match w.as_slice() {
            ["tensor", name, "2", rows, cols] => (name.to_string(), r.parse(rows)?, r.parse(cols)?),
            ["tensor", _, rank, ..] => return Err(r.err(format!("unsupported tensor rank {rank}"))),
            _ => return Err(r.err("expected 'tensor <name> 2 <rows> <cols>'")),
        };
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let w = r.next()?;
            if w.len() != cols {
                return Err(r.err(format!("expected {cols} values, found {}", w.len())));
            }
            for v in w {
                data.push(r.parse::<f64>(v)?);
            }
        }
        let tensor = Tensor::from_vec(rows, cols, data)?;
        params.insert(name, tensor).map_err(|e| r.err(e.to_string()))?;
    }
    if let Some((i, l)) = r.lines.find(|(_, l)| !l.trim().is_empty()) {
        return Err(Error::ParseLine {
            path: path.to_path_buf(),
            line: i + 1,
            message: format!("trailing content '{}'", l.trim()),
        });
    }
    GradientFieldModel::from_parameters(config, params)
}
