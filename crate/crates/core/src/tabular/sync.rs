use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::landmarks::LandmarkTable;
use super::table::{CsvWriter, SchemaError, Table};
use crate::model::{MarkerFrameSet, UniformSeries};

/// Alignment of one video against the common timeline.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyncEntry {
    pub video_name: String,
    /// Output frame `k` reads input frame `k + offset_frames`.
    pub offset_frames: i64,
    pub start_frame: i64,
    /// Inclusive.
    pub end_frame: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SyncTable {
    pub entries: Vec<SyncEntry>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SyncError {
    #[error("video `{0}` is not listed in the sync table")]
    UnknownVideo(String),
    #[error("window [{start}, {end}] with offset {offset} selects no frames of a {frames}-frame input")]
    Empty { start: i64, end: i64, offset: i64, frames: usize },
}

impl SyncTable {
    pub fn get(&self, video_name: &str) -> Option<&SyncEntry> {
        self.entries.iter().find(|e| e.video_name == video_name)
    }

    pub fn to_csv(&self) -> String {
        let mut w = CsvWriter::with_header(&["video_name", "offset_frames", "start_frame", "end_frame"]);
        for e in &self.entries {
            w.row(&[e.video_name.clone(), e.offset_frames.to_string(), e.start_frame.to_string(), e.end_frame.to_string()]);
        }
        w.finish()
    }
}

/// Parses `video_name,offset_frames,start_frame,end_frame`.
pub fn parse_sync_table(text: &str) -> Result<SyncTable, SchemaError> {
    let table = Table::parse(text)?;
    let expected = ["video_name", "offset_frames", "start_frame", "end_frame"];
    let idx = expected
        .iter()
        .map(|name| table.column_index(name).ok_or_else(|| SchemaError::at(1, format!("missing column `{name}`"))))
        .collect::<Result<Vec<_>, _>>()?;
    let mut entries = Vec::with_capacity(table.rows.len());
    for row in &table.rows {
        let int = |col: usize| -> Result<i64, SchemaError> {
            let cell = &row.cells[idx[col]];
            cell.parse::<i64>()
                .map_err(|_| SchemaError::at(row.line, format!("column `{}`: `{cell}` is not an integer", expected[col])))
        };
        let name = row.cells[idx[0]].clone();
        if name.is_empty() {
            return Err(SchemaError::at(row.line, "empty video name"));
        }
        let entry = SyncEntry { video_name: name, offset_frames: int(1)?, start_frame: int(2)?, end_frame: int(3)? };
        if entry.start_frame > entry.end_frame {
            return Err(SchemaError::at(row.line, "start_frame exceeds end_frame"));
        }
        if entries.iter().any(|e: &SyncEntry| e.video_name == entry.video_name) {
            return Err(SchemaError::at(row.line, format!("duplicate video `{}`", entry.video_name)));
        }
        entries.push(entry);
    }
    Ok(SyncTable { entries })
}

/// Anything indexed by frame that can be cut to a contiguous frame range.
pub trait FrameSelect: Sized {
    fn frame_count(&self) -> usize;
    /// Frames `[first, last)`, renumbered from 0.
    fn select_frames(&self, first: usize, last: usize) -> Self;
}

impl FrameSelect for LandmarkTable {
    fn frame_count(&self) -> usize {
        self.frames.len()
    }

    fn select_frames(&self, first: usize, last: usize) -> Self {
        Self { frames: self.frames[first..last].to_vec(), ..self.clone() }
    }
}

impl FrameSelect for UniformSeries {
    fn frame_count(&self) -> usize {
        self.len()
    }

    fn select_frames(&self, first: usize, last: usize) -> Self {
        UniformSeries::new(self.values()[first..last].to_vec(), self.rate_hz(), 0.0).expect("valid rate")
    }
}

impl FrameSelect for MarkerFrameSet {
    fn frame_count(&self) -> usize {
        self.frame_count()
    }

    fn select_frames(&self, first: usize, last: usize) -> Self {
        MarkerFrameSet::select_frames(self, first, last)
    }
}

/// Shifts and trims `data` so that output frame `k` (for `k` in
/// `[start, end]`) is input frame `k + offset`. Output frames start at
/// `max(start, -offset)` and are renumbered from 0.
pub fn apply_sync<T: FrameSelect>(data: &T, sync: &SyncTable, video_name: &str) -> Result<T, SyncError> {
    let entry = sync.get(video_name).ok_or_else(|| SyncError::UnknownVideo(video_name.to_owned()))?;
    let n = data.frame_count() as i64;
    let empty = || SyncError::Empty {
        start: entry.start_frame,
        end: entry.end_frame,
        offset: entry.offset_frames,
        frames: data.frame_count(),
    };
    let lo = entry.start_frame.max(entry.offset_frames.saturating_neg());
    let hi = entry.end_frame.min((n - 1).saturating_sub(entry.offset_frames));
    if lo > hi {
        return Err(empty());
    }
    let first = lo.checked_add(entry.offset_frames).ok_or_else(empty)?;
    let last = hi.checked_add(entry.offset_frames).ok_or_else(empty)? + 1;
    if first < 0 || last > n {
        return Err(empty());
    }
    Ok(data.select_frames(first as usize, last as usize))
}
