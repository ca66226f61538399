//! C3D motion-capture container: binary reader/writer and conversion to and
//! from the triplet CSV convention (`time,<label>_X,<label>_Y,<label>_Z,...`).
//!
//! The reader accepts integer and floating-point storage in all three
//! processor conventions (Intel, DEC, MIPS). The writer always emits
//! floating-point storage; [`write_c3d`] uses the Intel convention and
//! [`write_c3d_with`] lets callers pick another one.

mod csv;
mod read;
mod write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{MarkerFrameSet, ModelError, UniformSeries};
use crate::tabular::SchemaError;

pub use self::csv::{c3d_to_csv, csv_to_c3d, csv_to_c3d_with_units, parse_triplet_csv, write_triplet_csv, C3dCsv};
pub use self::read::read_c3d;
pub use self::write::{write_c3d, write_c3d_with};

pub(crate) const BLOCK: usize = 512;
pub(crate) const MAGIC: u8 = 0x50;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum C3dError {
    #[error("stream truncated at byte {offset}: {context}")]
    Truncated { offset: usize, context: &'static str },
    #[error("bad magic byte 0x{found:02x} at byte {offset} (expected 0x50)")]
    BadMagic { offset: usize, found: u8 },
    #[error("unknown processor type {found} at byte {offset}")]
    BadProcessor { offset: usize, found: u8 },
    #[error("frame count mismatch at byte {offset}: header declares {declared} frames but the data section holds {available}")]
    FrameCount { offset: usize, declared: usize, available: usize },
    #[error("inconsistent file at byte {offset}: {message}")]
    Inconsistent { offset: usize, message: String },
    #[error("invalid document: {0}")]
    Validation(String),
    #[error("points CSV: {0}")]
    Schema(#[from] SchemaError),
}

impl From<ModelError> for C3dError {
    fn from(e: ModelError) -> Self {
        C3dError::Validation(e.to_string())
    }
}

/// Byte-order / float-format convention, stored as `83 + n` in the
/// parameter section header.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Processor {
    Intel,
    Dec,
    Mips,
}

impl Processor {
    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            84 => Some(Self::Intel),
            85 => Some(Self::Dec),
            86 => Some(Self::Mips),
            _ => None,
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            Self::Intel => 84,
            Self::Dec => 85,
            Self::Mips => 86,
        }
    }

    pub(crate) fn u16_from(self, b: [u8; 2]) -> u16 {
        match self {
            Self::Mips => u16::from_be_bytes(b),
            _ => u16::from_le_bytes(b),
        }
    }

    pub(crate) fn u16_to(self, v: u16) -> [u8; 2] {
        match self {
            Self::Mips => v.to_be_bytes(),
            _ => v.to_le_bytes(),
        }
    }

    pub(crate) fn f32_from(self, b: [u8; 4]) -> f32 {
        match self {
            Self::Intel => f32::from_le_bytes(b),
            Self::Mips => f32::from_be_bytes(b),
            Self::Dec => {
                // VAX F_floating: word-swapped, exponent bias 128 vs IEEE 127
                // with a 0.1f hidden bit, hence the factor 4.
                let bits = u32::from_le_bytes([b[2], b[3], b[0], b[1]]);
                if bits & 0x7f80_0000 == 0 {
                    0.0
                } else {
                    f32::from_bits(bits) / 4.0
                }
            }
        }
    }

    pub(crate) fn f32_to(self, v: f32) -> [u8; 4] {
        match self {
            Self::Intel => v.to_le_bytes(),
            Self::Mips => v.to_be_bytes(),
            Self::Dec => {
                if v == 0.0 {
                    return [0; 4];
                }
                let c = (v * 4.0).to_le_bytes();
                [c[2], c[3], c[0], c[1]]
            }
        }
    }
}

/// Fields of the 512-byte header block.
#[derive(Debug, Clone, PartialEq)]
pub struct C3dHeader {
    /// 1-based block index of the parameter section.
    pub parameter_block: u8,
    pub point_count: u16,
    pub analog_channels: u16,
    pub first_frame: u16,
    pub last_frame: u16,
    pub max_interpolation_gap: u16,
    /// Negative means floating-point storage; magnitude scales integer data.
    pub scale_factor: f32,
    /// 1-based block index of the data section.
    pub data_block: u16,
    /// Analog samples per channel per point frame.
    pub analog_per_frame: u16,
    pub point_rate: f32,
    pub processor: Processor,
}

impl C3dHeader {
    pub fn frame_count(&self) -> usize {
        if self.last_frame < self.first_frame {
            0
        } else {
            (self.last_frame - self.first_frame) as usize + 1
        }
    }

    pub fn is_float(&self) -> bool {
        self.scale_factor < 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParameterData {
    Char(Vec<u8>),
    Byte(Vec<u8>),
    Int(Vec<i16>),
    Float(Vec<f32>),
}

impl ParameterData {
    pub(crate) fn type_code(&self) -> i8 {
        match self {
            Self::Char(_) => -1,
            Self::Byte(_) => 1,
            Self::Int(_) => 2,
            Self::Float(_) => 4,
        }
    }

    pub(crate) fn byte_len(&self) -> usize {
        match self {
            Self::Char(v) | Self::Byte(v) => v.len(),
            Self::Int(v) => v.len() * 2,
            Self::Float(v) => v.len() * 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub description: String,
    pub locked: bool,
    pub dimensions: Vec<u8>,
    pub data: ParameterData,
}

impl Parameter {
    pub fn new(name: &str, dimensions: Vec<u8>, data: ParameterData) -> Self {
        Self { name: name.to_owned(), description: String::new(), locked: false, dimensions, data }
    }

    pub fn int(name: &str, values: Vec<i16>) -> Self {
        let dims = if values.len() == 1 { vec![] } else { vec![values.len() as u8] };
        Self::new(name, dims, ParameterData::Int(values))
    }

    pub fn float(name: &str, values: Vec<f32>) -> Self {
        let dims = if values.len() == 1 { vec![] } else { vec![values.len() as u8] };
        Self::new(name, dims, ParameterData::Float(values))
    }

    /// Character array of equal-width, space-padded strings.
    pub fn strings(name: &str, values: &[String]) -> Self {
        let width = values.iter().map(|s| s.len()).max().unwrap_or(0).clamp(1, 255);
        let mut bytes = Vec::with_capacity(width * values.len());
        for v in values {
            let v = &v.as_bytes()[..v.len().min(width)];
            bytes.extend_from_slice(v);
            bytes.resize(bytes.len() + width - v.len(), b' ');
        }
        Self::new(name, vec![width as u8, values.len() as u8], ParameterData::Char(bytes))
    }

    pub fn text(name: &str, value: &str) -> Self {
        let bytes = &value.as_bytes()[..value.len().min(255)];
        Self::new(name, vec![bytes.len() as u8], ParameterData::Char(bytes.to_vec()))
    }

    /// Character data split along the first dimension, trailing padding
    /// removed.
    pub fn as_strings(&self) -> Option<Vec<String>> {
        let ParameterData::Char(bytes) = &self.data else { return None };
        let width = match self.dimensions.first() {
            Some(&w) if w > 0 => w as usize,
            _ => bytes.len().max(1),
        };
        Some(
            bytes
                .chunks(width)
                .map(|c| String::from_utf8_lossy(c).trim_matches(|ch: char| ch.is_whitespace() || ch == '\0').to_owned())
                .collect(),
        )
    }

    pub fn as_f32s(&self) -> Option<Vec<f32>> {
        match &self.data {
            ParameterData::Float(v) => Some(v.clone()),
            ParameterData::Int(v) => Some(v.iter().map(|&x| x as f32).collect()),
            ParameterData::Byte(v) => Some(v.iter().map(|&x| x as f32).collect()),
            ParameterData::Char(_) => None,
        }
    }

    pub fn as_i32s(&self) -> Option<Vec<i32>> {
        match &self.data {
            ParameterData::Int(v) => Some(v.iter().map(|&x| x as i32).collect()),
            ParameterData::Byte(v) => Some(v.iter().map(|&x| x as i32).collect()),
            ParameterData::Float(v) => Some(v.iter().map(|&x| x as i32).collect()),
            ParameterData::Char(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterGroup {
    /// Positive group id.
    pub id: u8,
    pub name: String,
    pub description: String,
    pub locked: bool,
    pub parameters: Vec<Parameter>,
}

impl ParameterGroup {
    pub fn get(&self, name: &str) -> Option<&Parameter> {
        self.parameters.iter().find(|p| p.name.eq_ignore_ascii_case(name))
    }
}

/// Parsed C3D file. Point coordinates are kept in the file's own units
/// (`POINT:UNITS`, usually mm).
#[derive(Debug, Clone, PartialEq)]
pub struct C3dDocument {
    pub header: C3dHeader,
    pub groups: Vec<ParameterGroup>,
    pub points: MarkerFrameSet,
    /// Raw fourth word of every point sample (residual and camera mask),
    /// preserved but not interpreted. Negative marks an invalid sample.
    pub residuals: Vec<Vec<f32>>,
    pub analog_labels: Vec<String>,
    pub analog: Vec<UniformSeries>,
}

impl C3dDocument {
    /// Builds a consistent document from point and analog data. Analog
    /// channels must share one rate that is an integer multiple of the point
    /// rate.
    pub fn from_data(
        points: MarkerFrameSet,
        analog: Vec<(String, UniformSeries)>,
        units: &str,
    ) -> Result<Self, C3dError> {
        let residuals = points
            .frames()
            .iter()
            .map(|f| f.iter().map(|p| if p.is_some() { 0.0 } else { -1.0 }).collect())
            .collect();
        let (analog_labels, analog): (Vec<_>, Vec<_>) = analog.into_iter().unzip();
        let mut doc = Self {
            header: C3dHeader {
                parameter_block: 2,
                point_count: 0,
                analog_channels: 0,
                first_frame: 1,
                last_frame: 0,
                max_interpolation_gap: 0,
                scale_factor: -1.0,
                data_block: 0,
                analog_per_frame: 0,
                point_rate: points.rate_hz() as f32,
                processor: Processor::Intel,
            },
            groups: Vec::new(),
            points,
            residuals,
            analog_labels,
            analog,
        };
        doc.set_param("POINT", Parameter::text("UNITS", units));
        doc.sync_layout()?;
        Ok(doc)
    }

    pub fn group(&self, name: &str) -> Option<&ParameterGroup> {
        self.groups.iter().find(|g| g.name.eq_ignore_ascii_case(name))
    }

    pub fn parameter(&self, group: &str, name: &str) -> Option<&Parameter> {
        self.group(group).and_then(|g| g.get(name))
    }

    pub fn point_labels(&self) -> &[String] {
        self.points.marker_names()
    }

    /// `POINT:UNITS`, defaulting to `mm`.
    pub fn point_units(&self) -> String {
        self.parameter("POINT", "UNITS")
            .and_then(Parameter::as_strings)
            .and_then(|v| v.into_iter().next())
            .filter(|s| !s.is_empty())
            .unwrap_or_else(|| "mm".to_owned())
    }

    pub fn frame_count(&self) -> usize {
        self.points.frame_count()
    }

    /// Time of point frame `k`, counting from the file's first frame number.
    pub fn frame_time(&self, k: usize) -> f64 {
        (self.header.first_frame as f64 - 1.0 + k as f64) / self.header.point_rate as f64
    }

    /// Inserts or replaces a parameter, creating the group when needed.
    pub fn set_param(&mut self, group: &str, param: Parameter) {
        let idx = match self.groups.iter().position(|g| g.name.eq_ignore_ascii_case(group)) {
            Some(i) => i,
            None => {
                let id = (1..=127u8).find(|id| !self.groups.iter().any(|g| g.id == *id)).unwrap_or(127);
                self.groups.push(ParameterGroup {
                    id,
                    name: group.to_ascii_uppercase(),
                    description: String::new(),
                    locked: false,
                    parameters: Vec::new(),
                });
                self.groups.len() - 1
            }
        };
        let g = &mut self.groups[idx];
        match g.parameters.iter_mut().find(|p| p.name.eq_ignore_ascii_case(&param.name)) {
            Some(existing) => {
                existing.dimensions = param.dimensions;
                existing.data = param.data;
            }
            None => g.parameters.push(param),
        }
    }

    fn remove_params_with_prefix(&mut self, group: &str, prefix: &str) {
        if let Some(g) = self.groups.iter_mut().find(|g| g.name.eq_ignore_ascii_case(group)) {
            g.parameters.retain(|p| !p.name.to_ascii_uppercase().starts_with(prefix));
        }
    }

    /// Checks the invariants the writer relies on.
    pub fn validate(&self) -> Result<(), C3dError> {
        let markers = self.points.marker_count();
        let frames = self.points.frame_count();
        if markers == 0 {
            return Err(C3dError::Validation("document has no markers".into()));
        }
        if frames == 0 {
            return Err(C3dError::Validation("document has no frames".into()));
        }
        if markers > i16::MAX as usize {
            return Err(C3dError::Validation(format!("{markers} markers exceed the format limit")));
        }
        let first = self.header.first_frame.max(1) as usize;
        if first + frames - 1 > u16::MAX as usize {
            return Err(C3dError::Validation(format!("{frames} frames starting at {first} exceed the format limit")));
        }
        if self.residuals.len() != frames || self.residuals.iter().any(|r| r.len() != markers) {
            return Err(C3dError::Validation("residual table shape differs from point data".into()));
        }
        if self.analog_labels.len() != self.analog.len() {
            return Err(C3dError::Validation("analog label count differs from channel count".into()));
        }
        let mut ids: Vec<u8> = self.groups.iter().map(|g| g.id).collect();
        ids.sort_unstable();
        if ids.iter().any(|&id| id == 0 || id > 127) || ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(C3dError::Validation("parameter group ids must be unique and within 1..=127".into()));
        }
        let missing = ["POINT", "ANALOG"]
            .iter()
            .filter(|n| !self.groups.iter().any(|g| g.name.eq_ignore_ascii_case(n)))
            .count();
        if self.groups.len() + missing > 127 {
            return Err(C3dError::Validation("no free parameter group id for POINT/ANALOG".into()));
        }
        if let Some(l) = self.points.marker_names().iter().chain(&self.analog_labels).find(|l| l.len() > 255) {
            return Err(C3dError::Validation(format!("label of {} bytes exceeds the 255-byte limit", l.len())));
        }
        self.analog_ratio().map(|_| ())
    }

    /// Analog samples per point frame, derived from the channel rates.
    pub fn analog_ratio(&self) -> Result<u16, C3dError> {
        let Some(first) = self.analog.first() else { return Ok(0) };
        let point_rate = self.points.rate_hz();
        let ratio = first.rate_hz() / point_rate;
        let rounded = ratio.round();
        if rounded < 1.0 || (ratio - rounded).abs() > 1e-6 * ratio || rounded > u16::MAX as f64 {
            return Err(C3dError::Validation(format!(
                "analog rate {} Hz is not an integer multiple of the point rate {} Hz",
                first.rate_hz(),
                point_rate
            )));
        }
        let ratio = rounded as usize;
        let expected = self.points.frame_count() * ratio;
        for (label, s) in self.analog_labels.iter().zip(&self.analog) {
            if (s.rate_hz() - first.rate_hz()).abs() > 1e-9 * first.rate_hz() {
                return Err(C3dError::Validation(format!("analog channel `{label}` has a different rate")));
            }
            if s.len() != expected {
                return Err(C3dError::Validation(format!(
                    "analog channel `{label}` has {} samples, expected {expected} (frames x {ratio})",
                    s.len()
                )));
            }
        }
        if self.analog.len() * ratio > u16::MAX as usize {
            return Err(C3dError::Validation("too many analog samples per frame".into()));
        }
        Ok(ratio as u16)
    }

    /// Rewrites header counts and the standard POINT/ANALOG parameters so
    /// they describe the data with floating-point storage.
    pub fn sync_layout(&mut self) -> Result<(), C3dError> {
        self.validate()?;
        let ratio = self.analog_ratio()?;
        let markers = self.points.marker_count();
        let frames = self.points.frame_count();
        let first = self.header.first_frame.max(1);
        let rate = self.points.rate_hz() as f32;

        self.header.parameter_block = 2;
        self.header.point_count = markers as u16;
        self.header.analog_channels = self.analog.len() as u16;
        self.header.first_frame = first;
        self.header.last_frame = (first as usize + frames - 1) as u16;
        self.header.scale_factor = -1.0;
        self.header.analog_per_frame = ratio;
        self.header.point_rate = rate;

        self.set_param("POINT", Parameter::int("USED", vec![markers as i16]));
        self.set_param("POINT", Parameter::float("SCALE", vec![-1.0]));
        self.set_param("POINT", Parameter::float("RATE", vec![rate]));
        self.set_param("POINT", Parameter::int("FRAMES", vec![frames.min(i16::MAX as usize) as i16]));
        self.set_param("POINT", Parameter::int("DATA_START", vec![0]));
        self.remove_params_with_prefix("POINT", "LABELS");
        let labels = self.points.marker_names().to_vec();
        for (i, chunk) in labels.chunks(255).enumerate() {
            let name = if i == 0 { "LABELS".to_owned() } else { format!("LABELS{}", i + 1) };
            self.set_param("POINT", Parameter::strings(&name, chunk));
        }

        let channels = self.analog.len();
        self.set_param("ANALOG", Parameter::int("USED", vec![channels as i16]));
        let analog_rate = self.analog.first().map(|s| s.rate_hz() as f32).unwrap_or(0.0);
        self.set_param("ANALOG", Parameter::float("RATE", vec![analog_rate]));
        self.set_param("ANALOG", Parameter::float("GEN_SCALE", vec![1.0]));
        self.remove_params_with_prefix("ANALOG", "LABELS");
        self.remove_params_with_prefix("ANALOG", "SCALE");
        self.remove_params_with_prefix("ANALOG", "OFFSET");
        if channels > 0 {
            let labels = self.analog_labels.clone();
            for (i, chunk) in labels.chunks(255).enumerate() {
                let suffix = if i == 0 { String::new() } else { (i + 1).to_string() };
                self.set_param("ANALOG", Parameter::strings(&format!("LABELS{suffix}"), chunk));
                self.set_param(
                    "ANALOG",
                    Parameter::new(&format!("SCALE{suffix}"), vec![chunk.len() as u8], ParameterData::Float(vec![1.0; chunk.len()])),
                );
                self.set_param(
                    "ANALOG",
                    Parameter::new(&format!("OFFSET{suffix}"), vec![chunk.len() as u8], ParameterData::Int(vec![0; chunk.len()])),
                );
            }
        }

        let param_blocks = write::parameter_section_len(&self.groups).div_ceil(BLOCK);
        let data_block = 2 + param_blocks;
        self.header.data_block = data_block as u16;
        self.set_param("POINT", Parameter::int("DATA_START", vec![data_block as i16]));
        Ok(())
    }
}
