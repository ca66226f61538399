use std::collections::BTreeMap;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::BatchError;
use crate::cop::CopConfig;
use crate::emg::EmgConfig;
use crate::forcecube::ForceConfig;
use crate::kinematics::{ClusterDefinition, ImuConfig};
use crate::model::LengthUnit;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ToolKind {
    #[serde(rename = "c3d2csv")]
    C3dToCsv,
    #[serde(rename = "csv2c3d")]
    CsvToC3d,
    #[serde(rename = "emg")]
    Emg,
    #[serde(rename = "cop")]
    Cop,
    #[serde(rename = "forcecube")]
    ForceCube,
    #[serde(rename = "cluster")]
    Cluster,
    #[serde(rename = "imu")]
    Imu,
}

impl ToolKind {
    pub const ALL: [ToolKind; 7] = [Self::C3dToCsv, Self::CsvToC3d, Self::Emg, Self::Cop, Self::ForceCube, Self::Cluster, Self::Imu];

    pub fn name(self) -> &'static str {
        match self {
            Self::C3dToCsv => "c3d2csv",
            Self::CsvToC3d => "csv2c3d",
            Self::Emg => "emg",
            Self::Cop => "cop",
            Self::ForceCube => "forcecube",
            Self::Cluster => "cluster",
            Self::Imu => "imu",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name().eq_ignore_ascii_case(s.trim()))
    }
}

impl std::fmt::Display for ToolKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct C3dToCsvParams {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CsvToC3dParams {
    pub rate_hz: f64,
    /// POINT:UNITS written to the document.
    pub units: String,
}

impl Default for CsvToC3dParams {
    fn default() -> Self {
        Self { rate_hz: 100.0, units: "mm".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CopToolParams {
    pub cx_column: String,
    pub cy_column: String,
    /// Taken from the `time` column when absent.
    pub rate_hz: Option<f64>,
    /// Selections file, relative to the input root unless absolute. Its
    /// keys are paths relative to the directory holding it.
    pub selections: String,
    #[serde(flatten)]
    pub analysis: CopConfig,
}

impl Default for CopToolParams {
    fn default() -> Self {
        Self {
            cx_column: "cx".into(),
            cy_column: "cy".into(),
            rate_hz: None,
            selections: super::SELECTIONS_FILE.into(),
            analysis: CopConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForceToolParams {
    pub fz_column: String,
    pub rate_hz: Option<f64>,
    /// Selections file, relative to the input root unless absolute. Its
    /// keys are paths relative to the directory holding it.
    pub selections: String,
    /// Used for files without a stored selection; such files fail otherwise.
    pub bw_window: Option<(f64, f64)>,
    #[serde(flatten)]
    pub analysis: ForceConfig,
}

impl Default for ForceToolParams {
    fn default() -> Self {
        Self {
            fz_column: "fz".into(),
            rate_hz: None,
            selections: super::SELECTIONS_FILE.into(),
            bw_window: None,
            analysis: ForceConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MarkerFormat {
    #[default]
    C3d,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterToolParams {
    pub clusters: Vec<ClusterDefinition>,
    pub input_format: MarkerFormat,
    /// Frame rate for triplet CSV input.
    pub rate_hz: f64,
    /// Unit of triplet CSV coordinates.
    pub units: LengthUnit,
}

impl Default for ClusterToolParams {
    fn default() -> Self {
        Self { clusters: Vec::new(), input_format: MarkerFormat::C3d, rate_hz: 100.0, units: LengthUnit::Mm }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ToolParams {
    C3dToCsv(C3dToCsvParams),
    CsvToC3d(CsvToC3dParams),
    Emg(EmgConfig),
    Cop(CopToolParams),
    ForceCube(ForceToolParams),
    Cluster(ClusterToolParams),
    Imu(ImuConfig),
}

impl ToolParams {
    pub fn defaults(kind: ToolKind) -> Self {
        match kind {
            ToolKind::C3dToCsv => Self::C3dToCsv(C3dToCsvParams::default()),
            ToolKind::CsvToC3d => Self::CsvToC3d(CsvToC3dParams::default()),
            ToolKind::Emg => Self::Emg(EmgConfig::default()),
            ToolKind::Cop => Self::Cop(CopToolParams::default()),
            ToolKind::ForceCube => Self::ForceCube(ForceToolParams::default()),
            ToolKind::Cluster => Self::Cluster(ClusterToolParams::default()),
            ToolKind::Imu => Self::Imu(ImuConfig::default()),
        }
    }

    pub fn kind(&self) -> ToolKind {
        match self {
            Self::C3dToCsv(_) => ToolKind::C3dToCsv,
            Self::CsvToC3d(_) => ToolKind::CsvToC3d,
            Self::Emg(_) => ToolKind::Emg,
            Self::Cop(_) => ToolKind::Cop,
            Self::ForceCube(_) => ToolKind::ForceCube,
            Self::Cluster(_) => ToolKind::Cluster,
            Self::Imu(_) => ToolKind::Imu,
        }
    }

    pub fn to_value(&self) -> Value {
        let v = match self {
            Self::C3dToCsv(p) => serde_json::to_value(p),
            Self::CsvToC3d(p) => serde_json::to_value(p),
            Self::Emg(p) => serde_json::to_value(p),
            Self::Cop(p) => serde_json::to_value(p),
            Self::ForceCube(p) => serde_json::to_value(p),
            Self::Cluster(p) => serde_json::to_value(p),
            Self::Imu(p) => serde_json::to_value(p),
        };
        v.expect("parameter records serialize")
    }

    pub fn from_value(kind: ToolKind, v: Value) -> Result<Self, BatchError> {
        fn de<T: DeserializeOwned>(v: Value) -> Result<T, BatchError> {
            serde_json::from_value(v).map_err(|e| BatchError::Config(e.to_string()))
        }
        Ok(match kind {
            ToolKind::C3dToCsv => Self::C3dToCsv(de(v)?),
            ToolKind::CsvToC3d => Self::CsvToC3d(de(v)?),
            ToolKind::Emg => Self::Emg(de(v)?),
            ToolKind::Cop => Self::Cop(de(v)?),
            ToolKind::ForceCube => Self::ForceCube(de(v)?),
            ToolKind::Cluster => Self::Cluster(de(v)?),
            ToolKind::Imu => Self::Imu(de(v)?),
        })
    }

    /// Applies dotted `key=value` overrides. Keys must name an existing
    /// parameter.
    pub fn with_overrides(&self, kv: &BTreeMap<String, String>) -> Result<Self, BatchError> {
        let mut v = self.to_value();
        for (key, raw) in kv {
            set_path(&mut v, key, raw)?;
        }
        Self::from_value(self.kind(), v)
    }

    /// Flat record for the run manifest.
    pub fn record(&self) -> BTreeMap<String, String> {
        let mut out = BTreeMap::new();
        flatten("", &self.to_value(), &mut out);
        out
    }
}

fn parse_value(raw: &str, current: &Value) -> Value {
    let t = raw.trim();
    if matches!(t, "" | "none" | "null") {
        return Value::Null;
    }
    if current.is_string() {
        return Value::String(t.to_owned());
    }
    serde_json::from_str(t).unwrap_or_else(|_| Value::String(t.to_owned()))
}

fn set_path(root: &mut Value, key: &str, raw: &str) -> Result<(), BatchError> {
    let unknown = || BatchError::Config(format!("unknown parameter `{key}`"));
    let mut cur = root;
    let parts: Vec<&str> = key.split('.').map(str::trim).collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = cur.as_object_mut().ok_or_else(unknown)?;
        let slot = obj.get_mut(*part).ok_or_else(unknown)?;
        if i + 1 == parts.len() {
            *slot = parse_value(raw, slot);
            return Ok(());
        }
        cur = slot;
    }
    Err(unknown())
}

fn flatten(prefix: &str, v: &Value, out: &mut BTreeMap<String, String>) {
    match v {
        Value::Object(m) if !m.is_empty() => {
            for (k, x) in m {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, x, out);
            }
        }
        Value::Object(_) => {}
        Value::Null => {
            out.insert(prefix.to_owned(), "none".into());
        }
        Value::String(s) => {
            out.insert(prefix.to_owned(), s.clone());
        }
        other => {
            out.insert(prefix.to_owned(), other.to_string());
        }
    }
}

/// Reads flat `key=value` text. `#` starts a comment line; later keys win.
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>, BatchError> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| BatchError::Config(format!("line {}: expected `key=value`", i + 1)))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(BatchError::Config(format!("line {}: empty key", i + 1)));
        }
        out.insert(k.to_owned(), v.trim().to_owned());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for k in ToolKind::ALL {
            assert_eq!(ToolKind::from_name(k.name()), Some(k));
            assert_eq!(ToolParams::defaults(k).kind(), k);
        }
        assert_eq!(ToolKind::from_name("foo"), None);
    }

    #[test]
    fn overrides_and_record() {
        let kv = parse_kv("# comment\nband_low_hz = 30\nwelch.segment_len=512\nanalysis_window=[1,2]\n").unwrap();
        let p = ToolParams::defaults(ToolKind::Emg).with_overrides(&kv).unwrap();
        let ToolParams::Emg(c) = &p else { unreachable!() };
        assert_eq!((c.band_low_hz, c.welch.segment_len, c.analysis_window), (30.0, Some(512), Some((1.0, 2.0))));
        let rec = p.record();
        assert_eq!(rec["band_low_hz"], "30.0");
        assert_eq!(rec["rate_hz"], "none");
        assert_eq!(rec["welch.window"], "hann");
        // The record is itself a valid override set.
        assert_eq!(ToolParams::defaults(ToolKind::Emg).with_overrides(&rec).unwrap(), p);
    }

    #[test]
    fn flattened_and_string_fields() {
        let kv = parse_kv("cx_column=3\nlowpass_hz=none\ninput_unit=mm").unwrap();
        let ToolParams::Cop(c) = ToolParams::defaults(ToolKind::Cop).with_overrides(&kv).unwrap() else { unreachable!() };
        assert_eq!(c.cx_column, "3");
        assert_eq!(c.analysis.lowpass_hz, None);
        assert_eq!(c.analysis.input_unit, LengthUnit::Mm);
        let kv = parse_kv("clusters=[{\"name\":\"trunk\",\"markers\":[\"a\",\"b\",\"c\"]}]").unwrap();
        let ToolParams::Cluster(c) = ToolParams::defaults(ToolKind::Cluster).with_overrides(&kv).unwrap() else { unreachable!() };
        assert_eq!(c.clusters[0].markers[2], "c");
    }

    #[test]
    fn bad_overrides() {
        let d = ToolParams::defaults(ToolKind::Emg);
        let kv = |s: &str| parse_kv(s).unwrap();
        assert!(matches!(d.with_overrides(&kv("nope=1")), Err(BatchError::Config(m)) if m.contains("nope")));
        assert!(d.with_overrides(&kv("band_low_hz=abc")).is_err());
        assert!(parse_kv("just text").is_err());
    }
}
