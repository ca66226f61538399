use crate::model::{MarkerFrameSet, UniformSeries, Vec3};

use super::{C3dDocument, C3dError, C3dHeader, Parameter, ParameterData, ParameterGroup, Processor, BLOCK, MAGIC};

/// Bounds-checked view over the input bytes.
struct Bytes<'a> {
    data: &'a [u8],
    processor: Processor,
}

impl<'a> Bytes<'a> {
    fn slice(&self, offset: usize, len: usize, context: &'static str) -> Result<&'a [u8], C3dError> {
        offset
            .checked_add(len)
            .and_then(|end| self.data.get(offset..end))
            .ok_or(C3dError::Truncated { offset: offset.min(self.data.len()), context })
    }

    fn u8(&self, offset: usize, context: &'static str) -> Result<u8, C3dError> {
        Ok(self.slice(offset, 1, context)?[0])
    }

    fn u16(&self, offset: usize, context: &'static str) -> Result<u16, C3dError> {
        let b = self.slice(offset, 2, context)?;
        Ok(self.processor.u16_from([b[0], b[1]]))
    }

    fn i16(&self, offset: usize, context: &'static str) -> Result<i16, C3dError> {
        Ok(self.u16(offset, context)? as i16)
    }

    fn f32(&self, offset: usize, context: &'static str) -> Result<f32, C3dError> {
        let b = self.slice(offset, 4, context)?;
        Ok(self.processor.f32_from([b[0], b[1], b[2], b[3]]))
    }
}

/// Parses a complete C3D byte stream.
pub fn read_c3d(data: &[u8]) -> Result<C3dDocument, C3dError> {
    let mut bytes = Bytes { data, processor: Processor::Intel };
    let parameter_block = bytes.u8(0, "header block")?;
    let magic = bytes.u8(1, "header block")?;
    if magic != MAGIC {
        return Err(C3dError::BadMagic { offset: 1, found: magic });
    }
    if parameter_block == 0 {
        return Err(C3dError::Inconsistent { offset: 0, message: "parameter section block index is 0".into() });
    }
    bytes.slice(0, BLOCK, "header block")?;
    let param_start = (parameter_block as usize - 1) * BLOCK;
    let tag = bytes.u8(param_start + 3, "parameter section header")?;
    bytes.processor =
        Processor::from_tag(tag).ok_or(C3dError::BadProcessor { offset: param_start + 3, found: tag })?;
    let param_blocks = bytes.u8(param_start + 2, "parameter section header")? as usize;

    let header = read_header(&bytes, parameter_block)?;
    let groups = read_parameters(&bytes, param_start, param_blocks.max(1))?;
    let mut doc_groups = groups;

    let frames = header.frame_count();
    if header.last_frame < header.first_frame {
        return Err(C3dError::Inconsistent {
            offset: 8,
            message: format!("last frame {} precedes first frame {}", header.last_frame, header.first_frame),
        });
    }
    if !(header.point_rate.is_finite() && header.point_rate > 0.0) {
        return Err(C3dError::Inconsistent { offset: 20, message: format!("point rate {} Hz", header.point_rate) });
    }
    if header.data_block == 0 {
        return Err(C3dError::Inconsistent { offset: 16, message: "data section block index is 0".into() });
    }
    let markers = header.point_count as usize;
    let channels = header.analog_channels as usize;
    let ratio = header.analog_per_frame as usize;

    let word = if header.is_float() { 4 } else { 2 };
    let frame_bytes = (markers * 4 + channels * ratio) * word;
    let data_start = (header.data_block as usize - 1) * BLOCK;
    let available_bytes = data.len().saturating_sub(data_start);
    if frame_bytes > 0 {
        let available = available_bytes / frame_bytes;
        if available < frames {
            return Err(C3dError::FrameCount { offset: data_start, declared: frames, available });
        }
    }

    let find = |group: &str, name: &str| -> Option<&Parameter> {
        doc_groups
            .iter()
            .find(|g| g.name.eq_ignore_ascii_case(group))
            .and_then(|g| g.get(name))
    };

    let point_labels = labels(find, "POINT", markers, "point");
    let analog_labels = labels(find, "ANALOG", channels, "analog");
    let analog_scale = numbered_floats(find, "ANALOG", "SCALE", channels, 1.0);
    let analog_offset = numbered_floats(find, "ANALOG", "OFFSET", channels, 0.0);
    let gen_scale = find("ANALOG", "GEN_SCALE")
        .and_then(Parameter::as_f32s)
        .and_then(|v| v.first().copied())
        .unwrap_or(1.0);
    let unsigned_analog = find("ANALOG", "FORMAT")
        .and_then(Parameter::as_strings)
        .and_then(|v| v.into_iter().next())
        .is_some_and(|s| s.eq_ignore_ascii_case("UNSIGNED"));

    let point_scale = header.scale_factor.abs();
    let mut positions = Vec::with_capacity(frames);
    let mut residuals = Vec::with_capacity(frames);
    let mut analog = vec![Vec::with_capacity(frames * ratio); channels];
    let mut pos = data_start;
    for _ in 0..frames {
        let mut frame = Vec::with_capacity(markers);
        let mut frame_res = Vec::with_capacity(markers);
        for _ in 0..markers {
            let (xyz, res) = if header.is_float() {
                let x = bytes.f32(pos, "point data")?;
                let y = bytes.f32(pos + 4, "point data")?;
                let z = bytes.f32(pos + 8, "point data")?;
                let r = bytes.f32(pos + 12, "point data")?;
                ([x, y, z], r)
            } else {
                let x = bytes.i16(pos, "point data")? as f32 * point_scale;
                let y = bytes.i16(pos + 2, "point data")? as f32 * point_scale;
                let z = bytes.i16(pos + 4, "point data")? as f32 * point_scale;
                let r = bytes.i16(pos + 6, "point data")? as f32;
                ([x, y, z], r)
            };
            pos += 4 * word;
            let valid = res >= 0.0 && xyz.iter().all(|v| v.is_finite());
            frame.push(valid.then(|| Vec3::new(xyz[0] as f64, xyz[1] as f64, xyz[2] as f64)));
            frame_res.push(res);
        }
        for _ in 0..ratio {
            for (ch, out) in analog.iter_mut().enumerate() {
                let raw = if header.is_float() {
                    bytes.f32(pos, "analog data")?
                } else if unsigned_analog {
                    bytes.u16(pos, "analog data")? as f32
                } else {
                    bytes.i16(pos, "analog data")? as f32
                };
                pos += word;
                let v = (raw - analog_offset[ch]) * gen_scale * analog_scale[ch];
                out.push(if v.is_finite() { v as f64 } else { f64::NAN });
            }
        }
        positions.push(frame);
        residuals.push(frame_res);
    }

    let point_rate = header.point_rate as f64;
    let points = MarkerFrameSet::new(point_labels, positions, point_rate)
        .map_err(|e| C3dError::Inconsistent { offset: data_start, message: e.to_string() })?;
    let t0 = (header.first_frame.max(1) as f64 - 1.0) / point_rate;
    let analog = analog
        .into_iter()
        .map(|v| UniformSeries::new(v, point_rate * ratio.max(1) as f64, t0))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| C3dError::Inconsistent { offset: data_start, message: e.to_string() })?;

    doc_groups.shrink_to_fit();
    Ok(C3dDocument { header, groups: doc_groups, points, residuals, analog_labels, analog })
}

fn read_header(bytes: &Bytes<'_>, parameter_block: u8) -> Result<C3dHeader, C3dError> {
    let point_count = bytes.u16(2, "header")?;
    let analog_total = bytes.u16(4, "header")?;
    let first_frame = bytes.u16(6, "header")?;
    let last_frame = bytes.u16(8, "header")?;
    let max_interpolation_gap = bytes.u16(10, "header")?;
    let scale_factor = bytes.f32(12, "header")?;
    let data_block = bytes.u16(16, "header")?;
    let analog_per_frame = bytes.u16(18, "header")?;
    let point_rate = bytes.f32(20, "header")?;
    if !scale_factor.is_finite() || scale_factor == 0.0 {
        return Err(C3dError::Inconsistent { offset: 12, message: format!("scale factor {scale_factor}") });
    }
    let analog_channels = if analog_per_frame == 0 {
        if analog_total != 0 {
            return Err(C3dError::Inconsistent {
                offset: 4,
                message: format!("{analog_total} analog samples per frame but 0 samples per channel"),
            });
        }
        0
    } else {
        if analog_total % analog_per_frame != 0 {
            return Err(C3dError::Inconsistent {
                offset: 4,
                message: format!("{analog_total} analog samples per frame not divisible by {analog_per_frame}"),
            });
        }
        analog_total / analog_per_frame
    };
    Ok(C3dHeader {
        parameter_block,
        point_count,
        analog_channels,
        first_frame,
        last_frame,
        max_interpolation_gap,
        scale_factor,
        data_block,
        analog_per_frame: if analog_channels == 0 { 0 } else { analog_per_frame },
        point_rate,
        processor: bytes.processor,
    })
}

fn read_parameters(bytes: &Bytes<'_>, start: usize, blocks: usize) -> Result<Vec<ParameterGroup>, C3dError> {
    let end = (start + blocks * BLOCK).min(bytes.data.len());
    let mut groups: Vec<ParameterGroup> = Vec::new();
    let mut pending: Vec<(u8, Parameter)> = Vec::new();
    let mut pos = start + 4;
    while pos + 2 <= end {
        let name_len = bytes.u8(pos, "parameter record")? as i8;
        let group_id = bytes.u8(pos + 1, "parameter record")? as i8;
        if name_len == 0 || group_id == 0 {
            break;
        }
        let locked = name_len < 0;
        let len = name_len.unsigned_abs() as usize;
        let name = String::from_utf8_lossy(bytes.slice(pos + 2, len, "parameter name")?).trim().to_owned();
        let link_pos = pos + 2 + len;
        let next = bytes.i16(link_pos, "parameter record link")?;
        let mut cur = link_pos + 2;
        if group_id < 0 {
            let desc_len = bytes.u8(cur, "group description")? as usize;
            let description = String::from_utf8_lossy(bytes.slice(cur + 1, desc_len, "group description")?).into_owned();
            let id = group_id.unsigned_abs();
            if id > 127 {
                return Err(C3dError::Inconsistent { offset: pos + 1, message: format!("group id {id} out of range") });
            }
            if groups.iter().any(|g| g.id == id) {
                return Err(C3dError::Inconsistent { offset: pos + 1, message: format!("duplicate group id {id}") });
            }
            groups.push(ParameterGroup { id, name, description, locked, parameters: Vec::new() });
        } else {
            let type_code = bytes.u8(cur, "parameter type")? as i8;
            let ndims = bytes.u8(cur + 1, "parameter dimensions")? as usize;
            let dimensions = bytes.slice(cur + 2, ndims, "parameter dimensions")?.to_vec();
            cur += 2 + ndims;
            let width = match type_code {
                -1 | 1 => 1,
                2 => 2,
                4 => 4,
                other => {
                    return Err(C3dError::Inconsistent { offset: cur, message: format!("parameter `{name}` has data type {other}") })
                }
            };
            // A count that cannot fit in the stream is truncation, whatever the product.
            let count = dimensions
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d as usize))
                .filter(|c| c.checked_mul(width).is_some_and(|b| b <= bytes.data.len()))
                .ok_or(C3dError::Truncated { offset: cur.min(bytes.data.len()), context: "parameter data" })?;
            let data = match type_code {
                -1 => ParameterData::Char(bytes.slice(cur, count, "parameter data")?.to_vec()),
                1 => ParameterData::Byte(bytes.slice(cur, count, "parameter data")?.to_vec()),
                2 => {
                    bytes.slice(cur, count * 2, "parameter data")?;
                    ParameterData::Int((0..count).map(|i| bytes.i16(cur + 2 * i, "parameter data")).collect::<Result<_, _>>()?)
                }
                4 => {
                    bytes.slice(cur, count * 4, "parameter data")?;
                    ParameterData::Float((0..count).map(|i| bytes.f32(cur + 4 * i, "parameter data")).collect::<Result<_, _>>()?)
                }
                _ => unreachable!("width checked above"),
            };
            cur += data.byte_len();
            let desc_len = bytes.u8(cur, "parameter description")? as usize;
            let description = String::from_utf8_lossy(bytes.slice(cur + 1, desc_len, "parameter description")?).into_owned();
            pending.push((group_id as u8, Parameter { name, description, locked, dimensions, data }));
        }
        if next <= 0 {
            break;
        }
        pos = link_pos + next as usize;
    }
    for (id, param) in pending {
        match groups.iter_mut().find(|g| g.id == id) {
            Some(g) => g.parameters.push(param),
            None => groups.push(ParameterGroup {
                id,
                name: String::new(),
                description: String::new(),
                locked: false,
                parameters: vec![param],
            }),
        }
    }
    Ok(groups)
}

/// `LABELS`, `LABELS2`, ... concatenated; missing entries get generated names.
fn labels<'p>(find: impl Fn(&str, &str) -> Option<&'p Parameter>, group: &str, count: usize, prefix: &str) -> Vec<String> {
    let mut out = Vec::with_capacity(count);
    let mut suffix = 1;
    while out.len() < count {
        let name = if suffix == 1 { "LABELS".to_owned() } else { format!("LABELS{suffix}") };
        match find(group, &name).and_then(Parameter::as_strings) {
            Some(v) => out.extend(v),
            None => break,
        }
        suffix += 1;
    }
    out.truncate(count);
    for i in out.len()..count {
        out.push(format!("{prefix}_{}", i + 1));
    }
    for (i, label) in out.iter_mut().enumerate() {
        if label.is_empty() {
            *label = format!("{prefix}_{}", i + 1);
        }
    }
    out
}

/// Per-channel float parameter split across `NAME`, `NAME2`, ...
fn numbered_floats<'p>(
    find: impl Fn(&str, &str) -> Option<&'p Parameter>,
    group: &str,
    base: &str,
    count: usize,
    default: f32,
) -> Vec<f32> {
    let mut out = Vec::with_capacity(count);
    let mut suffix = 1;
    while out.len() < count {
        let name = if suffix == 1 { base.to_owned() } else { format!("{base}{suffix}") };
        match find(group, &name).and_then(Parameter::as_f32s) {
            Some(v) if !v.is_empty() => out.extend(v),
            _ => break,
        }
        suffix += 1;
    }
    out.truncate(count);
    out.resize(count, default);
    out
}
