use serde::{Deserialize, Serialize};

use super::table::{fmt_exact, parse_cell, CsvWriter, SchemaError, Table};
use super::TabularError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LandmarkKind {
    /// Coordinates as fractions of the frame width/height.
    Normalized,
    Pixel,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LandmarkPoint {
    pub x: f64,
    pub y: f64,
    pub z: Option<f64>,
    pub visibility: Option<f64>,
}

/// Per-frame landmark coordinates; `None` marks a landmark missing in a
/// frame. Frame `k` is row `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkTable {
    pub kind: LandmarkKind,
    pub landmark_names: Vec<String>,
    /// Coordinate suffixes present for every landmark, e.g. `["x","y","z"]`.
    pub axes: Vec<String>,
    pub frames: Vec<Vec<Option<LandmarkPoint>>>,
}

impl LandmarkTable {
    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn coords_per_landmark(&self) -> usize {
        self.axes.len()
    }

    /// `(frame, landmark)` cells of a normalized table with x or y outside
    /// `[0, 1]`. Such values are kept, only flagged.
    pub fn out_of_range(&self) -> Vec<(usize, usize)> {
        if self.kind != LandmarkKind::Normalized {
            return Vec::new();
        }
        let outside = |v: f64| !(0.0..=1.0).contains(&v);
        self.frames
            .iter()
            .enumerate()
            .flat_map(|(f, row)| {
                row.iter().enumerate().filter_map(move |(l, p)| match p {
                    Some(p) if outside(p.x) || outside(p.y) => Some((f, l)),
                    _ => None,
                })
            })
            .collect()
    }

    fn map_xy(&self, kind: LandmarkKind, fx: f64, fy: f64) -> Self {
        let frames = self
            .frames
            .iter()
            .map(|row| row.iter().map(|p| p.map(|p| LandmarkPoint { x: p.x * fx, y: p.y * fy, ..p })).collect())
            .collect();
        Self { kind, landmark_names: self.landmark_names.clone(), axes: self.axes.clone(), frames }
    }

    /// Scales normalized coordinates to the video resolution.
    pub fn norm_to_pixel(&self, width_px: f64, height_px: f64) -> Result<Self, TabularError> {
        check_resolution(width_px, height_px)?;
        if self.kind != LandmarkKind::Normalized {
            return Err(TabularError::Kind { expected: LandmarkKind::Normalized, found: self.kind });
        }
        Ok(self.map_xy(LandmarkKind::Pixel, width_px, height_px))
    }

    pub fn pixel_to_norm(&self, width_px: f64, height_px: f64) -> Result<Self, TabularError> {
        check_resolution(width_px, height_px)?;
        if self.kind != LandmarkKind::Pixel {
            return Err(TabularError::Kind { expected: LandmarkKind::Pixel, found: self.kind });
        }
        Ok(self.map_xy(LandmarkKind::Normalized, 1.0 / width_px, 1.0 / height_px))
    }

    pub fn landmark_index(&self, name: &str) -> Option<usize> {
        self.landmark_names.iter().position(|n| n == name)
    }
}

fn check_resolution(w: f64, h: f64) -> Result<(), TabularError> {
    if w > 0.0 && h > 0.0 && w.is_finite() && h.is_finite() {
        Ok(())
    } else {
        Err(TabularError::Parameter(format!("resolution must be positive, got {w}x{h}")))
    }
}

fn split_column(col: &str) -> Option<(&str, String)> {
    let (name, axis) = col.rsplit_once('_')?;
    let axis = axis.to_ascii_lowercase();
    let axis = match axis.as_str() {
        "x" | "y" | "z" => axis,
        "v" | "vis" | "visibility" => "visibility".to_owned(),
        _ => return None,
    };
    (!name.is_empty()).then_some((name, axis))
}

/// Parses a landmark CSV: a `frame` (or `frame_index`) column followed by
/// `<landmark>_x,<landmark>_y[,<landmark>_z][,<landmark>_visibility]`
/// groups. Frame numbers must run contiguously from 0.
pub fn parse_landmarks(text: &str, kind: LandmarkKind) -> Result<LandmarkTable, SchemaError> {
    let table = Table::parse(text)?;
    let first = table.header.first().map(|s| s.to_ascii_lowercase()).unwrap_or_default();
    if first != "frame" && first != "frame_index" {
        return Err(SchemaError::at(1, "first column must be `frame` or `frame_index`"));
    }
    let mut names: Vec<String> = Vec::new();
    let mut axes_per: Vec<Vec<String>> = Vec::new();
    for col in &table.header[1..] {
        let (name, axis) =
            split_column(col).ok_or_else(|| SchemaError::at(1, format!("column `{col}` is not `<landmark>_<x|y|z|visibility>`")))?;
        if names.last().map(String::as_str) != Some(name) {
            if names.iter().any(|n| n == name) {
                return Err(SchemaError::at(1, format!("columns of landmark `{name}` are not adjacent")));
            }
            names.push(name.to_owned());
            axes_per.push(Vec::new());
        }
        let axes = axes_per.last_mut().expect("pushed above");
        if axes.contains(&axis) {
            return Err(SchemaError::at(1, format!("duplicate column `{col}`")));
        }
        axes.push(axis);
    }
    if names.is_empty() {
        return Err(SchemaError::at(1, "no landmark columns"));
    }
    let axes = axes_per[0].clone();
    if !(axes.contains(&"x".to_owned()) && axes.contains(&"y".to_owned())) {
        return Err(SchemaError::at(1, "landmarks need at least `_x` and `_y` columns"));
    }
    if let Some((i, _)) = axes_per.iter().enumerate().find(|(_, a)| **a != axes) {
        return Err(SchemaError::at(1, format!("landmark `{}` has a different coordinate set", names[i])));
    }
    let pos = |a: &str| axes.iter().position(|x| x == a);
    let (ix, iy, iz, iv) = (pos("x").unwrap(), pos("y").unwrap(), pos("z"), pos("visibility"));
    let width = axes.len();

    let mut frames = Vec::with_capacity(table.rows.len());
    for (expected, row) in table.rows.iter().enumerate() {
        let frame = parse_cell(&row.cells[0], row.line, &table.header[0])?
            .ok_or_else(|| SchemaError::at(row.line, "empty frame number"))?;
        if frame != expected as f64 {
            return Err(SchemaError::at(row.line, format!("frame {frame} out of sequence, expected {expected}")));
        }
        let mut out = Vec::with_capacity(names.len());
        for (l, chunk) in row.cells[1..].chunks(width).enumerate() {
            let col = |i: usize| table.header[1 + l * width + i].as_str();
            let vals = chunk
                .iter()
                .enumerate()
                .map(|(i, c)| parse_cell(c, row.line, col(i)))
                .collect::<Result<Vec<_>, _>>()?;
            out.push(match (vals[ix], vals[iy]) {
                (Some(x), Some(y)) => Some(LandmarkPoint { x, y, z: iz.and_then(|i| vals[i]), visibility: iv.and_then(|i| vals[i]) }),
                (None, None) => None,
                _ => return Err(SchemaError::at(row.line, format!("landmark `{}` has only one of x/y", names[l]))),
            });
        }
        frames.push(out);
    }
    Ok(LandmarkTable { kind, landmark_names: names, axes, frames })
}

/// Inverse of [`parse_landmarks`], with `frame` as the first column.
pub fn write_landmarks(table: &LandmarkTable) -> String {
    let mut header = vec!["frame".to_owned()];
    for n in &table.landmark_names {
        header.extend(table.axes.iter().map(|a| format!("{n}_{a}")));
    }
    let mut w = CsvWriter::with_header(&header);
    for (f, row) in table.frames.iter().enumerate() {
        let mut cells = vec![f.to_string()];
        for p in row {
            for a in &table.axes {
                let v = p.and_then(|p| match a.as_str() {
                    "x" => Some(p.x),
                    "y" => Some(p.y),
                    "z" => p.z,
                    _ => p.visibility,
                });
                cells.push(v.map(fmt_exact).unwrap_or_default());
            }
        }
        w.row(&cells);
    }
    w.finish()
}
