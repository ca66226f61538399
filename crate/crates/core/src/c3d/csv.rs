use crate::model::{MarkerFrameSet, Vec3};
use crate::tabular::{fmt_sig9, parse_cell, CsvWriter, SchemaError, Table};

use super::{C3dDocument, C3dError};

/// Point and analog tables exported from a document.
#[derive(Debug, Clone, PartialEq)]
pub struct C3dCsv {
    /// `time,<label>_X,<label>_Y,<label>_Z,...`
    pub points: String,
    /// `time,<channel>,...`; absent when the document has no analog data.
    pub analog: Option<String>,
}

/// Exports point data (and analog data, if any) as CSV text with 9
/// significant digits. Gaps become empty cells.
pub fn c3d_to_csv(doc: &C3dDocument) -> C3dCsv {
    let points = write_triplet_csv(&doc.points, |k| doc.frame_time(k));
    let mut cells = Vec::new();
    let analog = (!doc.analog.is_empty()).then(|| {
        let mut header = vec!["time".to_owned()];
        header.extend(doc.analog_labels.iter().cloned());
        let mut w = CsvWriter::with_header(&header);
        let first = &doc.analog[0];
        for k in 0..first.len() {
            cells.clear();
            cells.push(fmt_sig9(first.time_at(k)));
            cells.extend(doc.analog.iter().map(|s| fmt_sig9(s.values()[k])));
            w.row(&cells);
        }
        w.finish()
    });
    C3dCsv { points, analog }
}

/// Renders marker trajectories in the triplet convention, with `time(k)`
/// giving each frame's time stamp.
pub fn write_triplet_csv(set: &MarkerFrameSet, time: impl Fn(usize) -> f64) -> String {
    let mut header = vec!["time".to_owned()];
    for label in set.marker_names() {
        for axis in ["X", "Y", "Z"] {
            header.push(format!("{label}_{axis}"));
        }
    }
    let mut w = CsvWriter::with_header(&header);
    let mut cells = Vec::with_capacity(header.len());
    for (k, frame) in set.frames().iter().enumerate() {
        cells.clear();
        cells.push(fmt_sig9(time(k)));
        for p in frame {
            match p {
                Some(v) => cells.extend([v.x, v.y, v.z].map(fmt_sig9)),
                None => cells.extend(std::iter::repeat_n(String::new(), 3)),
            }
        }
        w.row(&cells);
    }
    w.finish()
}

/// Builds a document from a triplet CSV, with coordinates in millimeters.
pub fn csv_to_c3d(points_csv: &str, rate_hz: f64) -> Result<C3dDocument, C3dError> {
    csv_to_c3d_with_units(points_csv, rate_hz, "mm")
}

pub fn csv_to_c3d_with_units(points_csv: &str, rate_hz: f64, units: &str) -> Result<C3dDocument, C3dError> {
    let points = parse_triplet_csv(points_csv, rate_hz)?;
    let first_time = Table::parse(points_csv)?
        .rows
        .first()
        .and_then(|r| r.cells[0].parse::<f64>().ok())
        .unwrap_or(0.0);
    let frames = points.frame_count();
    let mut doc = C3dDocument::from_data(points, vec![], units)?;
    let first_frame = (first_time * rate_hz).round() + 1.0;
    if first_frame >= 1.0 && first_frame + frames as f64 - 1.0 <= u16::MAX as f64 {
        doc.header.first_frame = first_frame as u16;
        doc.sync_layout()?;
    }
    Ok(doc)
}

/// Parses the triplet CSV convention into marker trajectories. Labels are
/// recovered by stripping the `_X/_Y/_Z` suffixes.
pub fn parse_triplet_csv(text: &str, rate_hz: f64) -> Result<MarkerFrameSet, SchemaError> {
    let table = Table::parse(text)?;
    let cols = table.header.len();
    if cols < 4 || (cols - 1) % 3 != 0 {
        return Err(SchemaError::at(
            1,
            format!("{cols} column(s): expected `time` followed by X/Y/Z triplets (1 + 3·markers)"),
        ));
    }
    if !table.header[0].eq_ignore_ascii_case("time") {
        return Err(SchemaError::at(1, format!("first column must be `time`, found `{}`", table.header[0])));
    }
    let mut names = Vec::with_capacity((cols - 1) / 3);
    for triplet in table.header[1..].chunks(3) {
        let mut base = None;
        for (col, axis) in triplet.iter().zip(["X", "Y", "Z"]) {
            let stem = col
                .strip_suffix(&format!("_{axis}"))
                .or_else(|| col.strip_suffix(&format!("_{}", axis.to_ascii_lowercase())))
                .ok_or_else(|| SchemaError::at(1, format!("column `{col}` should end in `_{axis}`")))?;
            match base {
                None => base = Some(stem.to_owned()),
                Some(ref b) if b == stem => {}
                Some(ref b) => {
                    return Err(SchemaError::at(1, format!("column `{col}` does not belong to marker `{b}`")))
                }
            }
        }
        names.push(base.unwrap_or_default());
    }
    let mut frames = Vec::with_capacity(table.rows.len());
    for row in &table.rows {
        parse_cell(&row.cells[0], row.line, "time")?;
        let mut frame = Vec::with_capacity(names.len());
        for (m, triplet) in row.cells[1..].chunks(3).enumerate() {
            let col = |i: usize| &table.header[1 + 3 * m + i];
            let x = parse_cell(&triplet[0], row.line, col(0))?;
            let y = parse_cell(&triplet[1], row.line, col(1))?;
            let z = parse_cell(&triplet[2], row.line, col(2))?;
            frame.push(match (x, y, z) {
                (Some(x), Some(y), Some(z)) => Some(Vec3::new(x, y, z)),
                (None, None, None) => None,
                _ => return Err(SchemaError::at(row.line, format!("marker `{}` is partially empty", names[m]))),
            });
        }
        frames.push(frame);
    }
    MarkerFrameSet::new(names, frames, rate_hz).map_err(|e| SchemaError::new(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::super::testutil::synthetic;
    use super::*;

    #[test]
    fn three_markers_ten_columns() {
        let doc = synthetic(3, 5, 0, 0);
        let out = c3d_to_csv(&doc);
        let header = out.points.lines().next().unwrap();
        assert_eq!(header.split(',').count(), 10);
        assert_eq!(header, "time,M0_X,M0_Y,M0_Z,M1_X,M1_Y,M1_Z,M2_X,M2_Y,M2_Z");
        assert!(out.analog.is_none());
    }

    #[test]
    fn analog_table_present_with_channels() {
        let doc = synthetic(1, 5, 2, 4);
        let analog = c3d_to_csv(&doc).analog.unwrap();
        assert_eq!(analog.lines().next().unwrap(), "time,A0,A1");
        assert_eq!(analog.lines().count(), 1 + 20);
    }

    #[test]
    fn seven_columns_two_markers() {
        let csv = "time,a_X,a_Y,a_Z,b_X,b_Y,b_Z\n0,1,2,3,4,5,6\n0.01,1,2,3,,,\n";
        let doc = csv_to_c3d(csv, 100.0).unwrap();
        assert_eq!(doc.point_labels(), ["a", "b"]);
        assert_eq!(doc.frame_count(), 2);
        assert_eq!(doc.points.position(1, 1), None);
    }

    #[test]
    fn eight_columns_rejected() {
        let csv = "time,a_X,a_Y,a_Z,b_X,b_Y,b_Z,c_X\n0,1,2,3,4,5,6,7\n";
        assert!(matches!(csv_to_c3d(csv, 100.0), Err(C3dError::Schema(_))));
    }

    #[test]
    fn ragged_row_names_line() {
        let csv = "time,a_X,a_Y,a_Z\n0,1,2,3\n0.01,1,2\n";
        match csv_to_c3d(csv, 100.0) {
            Err(C3dError::Schema(e)) => assert_eq!(e.line, Some(3)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn csv_round_trip_preserves_points() {
        let doc = synthetic(4, 40, 0, 0);
        let back = csv_to_c3d(&c3d_to_csv(&doc).points, 100.0).unwrap();
        assert_eq!(back.point_labels(), doc.point_labels());
        assert_eq!(back.header.first_frame, doc.header.first_frame);
        for (fa, fb) in doc.points.frames().iter().zip(back.points.frames()) {
            for (a, b) in fa.iter().zip(fb) {
                match (a, b) {
                    (Some(a), Some(b)) => assert!((a - b).abs().max() <= 1e-6 * a.abs().max().max(1e-12)),
                    (None, None) => {}
                    _ => panic!("gap mismatch"),
                }
            }
        }
        assert_eq!(back, doc);
    }
}
