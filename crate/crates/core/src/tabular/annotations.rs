use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::table::{fmt_exact, parse_cell, CsvWriter, SchemaError, Table};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelPoint {
    pub x: f64,
    pub y: f64,
}

/// Manually marked pixel coordinates: per frame, one optional point per
/// slot `p1..pN`. Unmarked slots stay empty (never `0,0`).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AnnotationTable {
    pub slots: usize,
    pub frames: BTreeMap<u64, Vec<Option<PixelPoint>>>,
}

impl AnnotationTable {
    pub fn new(slots: usize) -> Self {
        Self { slots, frames: BTreeMap::new() }
    }

    pub fn get(&self, frame: u64, slot: usize) -> Option<PixelPoint> {
        self.frames.get(&frame).and_then(|r| r.get(slot).copied().flatten())
    }

    /// Sets (or clears, with `None`) one slot; `slot` is 0-based and grows
    /// the table when needed.
    pub fn upsert(&mut self, frame: u64, slot: usize, point: Option<PixelPoint>) {
        if slot >= self.slots {
            self.slots = slot + 1;
            for row in self.frames.values_mut() {
                row.resize(self.slots, None);
            }
        }
        let slots = self.slots;
        let row = self.frames.entry(frame).or_insert_with(|| vec![None; slots]);
        row[slot] = point;
    }

    pub fn marked_count(&self) -> usize {
        self.frames.values().flatten().filter(|p| p.is_some()).count()
    }

    /// Marks outside a `width × height` image, as `(frame, slot)`.
    pub fn outside_resolution(&self, width: f64, height: f64) -> Vec<(u64, usize)> {
        self.frames
            .iter()
            .flat_map(|(&f, row)| {
                row.iter().enumerate().filter_map(move |(s, p)| match p {
                    Some(p) if !(0.0..=width).contains(&p.x) || !(0.0..=height).contains(&p.y) => Some((f, s)),
                    _ => None,
                })
            })
            .collect()
    }
}

/// Parses `frame,p1_x,p1_y,p2_x,p2_y,...`.
pub fn read_annotations(text: &str) -> Result<AnnotationTable, SchemaError> {
    let table = Table::parse(text)?;
    if !table.header[0].eq_ignore_ascii_case("frame") {
        return Err(SchemaError::at(1, "first column must be `frame`"));
    }
    let coords = table.header.len() - 1;
    if coords % 2 != 0 {
        return Err(SchemaError::at(1, format!("{coords} coordinate column(s); expected x/y pairs")));
    }
    let slots = coords / 2;
    for s in 0..slots {
        for (i, axis) in ["x", "y"].iter().enumerate() {
            let want = format!("p{}_{axis}", s + 1);
            let got = &table.header[1 + 2 * s + i];
            if !got.eq_ignore_ascii_case(&want) {
                return Err(SchemaError::at(1, format!("column {} is `{got}`, expected `{want}`", 2 + 2 * s + i)));
            }
        }
    }
    let mut out = AnnotationTable::new(slots);
    for row in &table.rows {
        let frame: u64 = row.cells[0]
            .parse()
            .map_err(|_| SchemaError::at(row.line, format!("frame `{}` is not a non-negative integer", row.cells[0])))?;
        if out.frames.contains_key(&frame) {
            return Err(SchemaError::at(row.line, format!("duplicate frame {frame}")));
        }
        let mut points = Vec::with_capacity(slots);
        for s in 0..slots {
            let x = parse_cell(&row.cells[1 + 2 * s], row.line, &table.header[1 + 2 * s])?;
            let y = parse_cell(&row.cells[2 + 2 * s], row.line, &table.header[2 + 2 * s])?;
            points.push(match (x, y) {
                (Some(x), Some(y)) => Some(PixelPoint { x, y }),
                (None, None) => None,
                _ => return Err(SchemaError::at(row.line, format!("p{} has only one coordinate", s + 1))),
            });
        }
        out.frames.insert(frame, points);
    }
    Ok(out)
}

pub fn write_annotations(table: &AnnotationTable) -> String {
    let mut header = vec!["frame".to_owned()];
    for s in 1..=table.slots {
        header.push(format!("p{s}_x"));
        header.push(format!("p{s}_y"));
    }
    let mut w = CsvWriter::with_header(&header);
    for (frame, row) in &table.frames {
        let mut cells = vec![frame.to_string()];
        for s in 0..table.slots {
            match row.get(s).copied().flatten() {
                Some(p) => cells.extend([fmt_exact(p.x), fmt_exact(p.y)]),
                None => cells.extend([String::new(), String::new()]),
            }
        }
        w.row(&cells);
    }
    w.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn unmarked_frames_stay_empty() {
        let t = read_annotations("frame,p1_x,p1_y\n0,10,20\n1,,\n2,11.5,21\n").unwrap();
        assert_eq!(t.get(1, 0), None);
        assert_eq!(t.get(2, 0), Some(PixelPoint { x: 11.5, y: 21.0 }));
        assert_eq!(write_annotations(&t), "frame,p1_x,p1_y\n0,10,20\n1,,\n2,11.5,21\n");
    }

    #[test]
    fn odd_coordinate_columns_rejected() {
        assert_eq!(read_annotations("frame,p1_x\n0,1\n").unwrap_err().line, Some(1));
    }

    #[test]
    fn zero_zero_is_a_real_mark() {
        let t = read_annotations("frame,p1_x,p1_y\n0,0,0\n").unwrap();
        assert_eq!(t.get(0, 0), Some(PixelPoint { x: 0.0, y: 0.0 }));
    }

    #[test]
    fn upsert_overwrites_and_grows() {
        let mut t = AnnotationTable::new(1);
        t.upsert(3, 0, Some(PixelPoint { x: 1.0, y: 2.0 }));
        t.upsert(3, 0, Some(PixelPoint { x: 5.0, y: 6.0 }));
        assert_eq!(t.marked_count(), 1);
        t.upsert(4, 2, Some(PixelPoint { x: 7.0, y: 8.0 }));
        assert_eq!(t.slots, 3);
        assert_eq!(t.frames[&3].len(), 3);
        assert_eq!(t.outside_resolution(6.0, 6.0), vec![(4, 2)]);
    }

    fn arb_table() -> impl Strategy<Value = AnnotationTable> {
        (1usize..5).prop_flat_map(|slots| {
            prop::collection::btree_map(
                0u64..10_000,
                prop::collection::vec(prop::option::of((-1e4f64..1e4, -1e4f64..1e4).prop_map(|(x, y)| PixelPoint { x, y })), slots),
                0..30,
            )
            .prop_map(move |frames| AnnotationTable { slots, frames })
        })
    }

    proptest! {
        #[test]
        fn write_read_identity(t in arb_table()) {
            prop_assert_eq!(read_annotations(&write_annotations(&t)).unwrap(), t);
        }
    }
}
