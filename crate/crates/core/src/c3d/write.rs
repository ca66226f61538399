use super::{C3dDocument, C3dError, Parameter, ParameterData, ParameterGroup, Processor, BLOCK, MAGIC};

/// Serializes `doc` with floating-point storage and the Intel convention.
pub fn write_c3d(doc: &C3dDocument) -> Result<Vec<u8>, C3dError> {
    write_c3d_with(doc, Processor::Intel)
}

/// Serializes `doc` with floating-point storage in the given processor
/// convention.
pub fn write_c3d_with(doc: &C3dDocument, processor: Processor) -> Result<Vec<u8>, C3dError> {
    let mut doc = doc.clone();
    doc.sync_layout()?;
    let h = &doc.header;
    let p = processor;

    let mut out = vec![0u8; BLOCK];
    out[0] = h.parameter_block;
    out[1] = MAGIC;
    let put_u16 = |out: &mut Vec<u8>, at: usize, v: u16| out[at..at + 2].copy_from_slice(&p.u16_to(v));
    put_u16(&mut out, 2, h.point_count);
    put_u16(&mut out, 4, h.analog_channels * h.analog_per_frame);
    put_u16(&mut out, 6, h.first_frame);
    put_u16(&mut out, 8, h.last_frame);
    put_u16(&mut out, 10, h.max_interpolation_gap);
    out[12..16].copy_from_slice(&p.f32_to(h.scale_factor));
    put_u16(&mut out, 16, h.data_block);
    put_u16(&mut out, 18, h.analog_per_frame);
    out[20..24].copy_from_slice(&p.f32_to(h.point_rate));

    let params = serialize_parameters(&doc.groups, p);
    let param_blocks = params.len().div_ceil(BLOCK);
    debug_assert_eq!(2 + param_blocks, h.data_block as usize);
    let section_start = out.len();
    out.extend_from_slice(&params);
    out.resize(section_start + param_blocks * BLOCK, 0);
    out[section_start + 2] = param_blocks as u8;
    out[section_start + 3] = processor.tag();

    let ratio = h.analog_per_frame as usize;
    for (f, frame) in doc.points.frames().iter().enumerate() {
        for (m, pos) in frame.iter().enumerate() {
            match pos {
                Some(v) => {
                    for c in [v.x, v.y, v.z] {
                        out.extend_from_slice(&p.f32_to(c as f32));
                    }
                    out.extend_from_slice(&p.f32_to(doc.residuals[f][m].max(0.0)));
                }
                None => {
                    for _ in 0..3 {
                        out.extend_from_slice(&p.f32_to(0.0));
                    }
                    let r = doc.residuals[f][m];
                    out.extend_from_slice(&p.f32_to(if r < 0.0 { r } else { -1.0 }));
                }
            }
        }
        for k in 0..ratio {
            for ch in &doc.analog {
                out.extend_from_slice(&p.f32_to(ch.values()[f * ratio + k] as f32));
            }
        }
    }
    let padded = out.len().div_ceil(BLOCK) * BLOCK;
    out.resize(padded, 0);
    Ok(out)
}

/// Byte length of the parameter section (4-byte preamble plus records and a
/// terminating zero), before block padding.
pub(crate) fn parameter_section_len(groups: &[ParameterGroup]) -> usize {
    serialize_parameters(groups, Processor::Intel).len()
}

fn serialize_parameters(groups: &[ParameterGroup], p: Processor) -> Vec<u8> {
    let mut out = vec![1u8, MAGIC, 0, p.tag()];
    let mut records: Vec<Vec<u8>> = Vec::new();
    for g in groups {
        records.push(group_record(g));
        for param in &g.parameters {
            records.push(parameter_record(g.id, param, p));
        }
    }
    let last = records.len().saturating_sub(1);
    for (i, mut rec) in records.into_iter().enumerate() {
        // the link field sits right after the name and points past this record
        let name_len = (rec[0] as i8).unsigned_abs() as usize;
        let link_at = 2 + name_len;
        let link = if i == last { 0 } else { (rec.len() - link_at) as u16 };
        rec[link_at..link_at + 2].copy_from_slice(&p.u16_to(link));
        out.extend_from_slice(&rec);
    }
    out.push(0);
    out
}

fn name_bytes(name: &str) -> Vec<u8> {
    let mut b: Vec<u8> = name.bytes().filter(|c| c.is_ascii_graphic()).take(127).collect();
    b.make_ascii_uppercase();
    if b.is_empty() {
        b.push(b'_');
    }
    b
}

fn push_text(rec: &mut Vec<u8>, text: &str) {
    let bytes = &text.as_bytes()[..text.len().min(255)];
    rec.push(bytes.len() as u8);
    rec.extend_from_slice(bytes);
}

fn group_record(g: &ParameterGroup) -> Vec<u8> {
    let name = name_bytes(&g.name);
    let len = name.len() as i8;
    let mut rec = vec![if g.locked { -len } else { len } as u8, (-(g.id.min(127) as i8)) as u8];
    rec.extend_from_slice(&name);
    rec.extend_from_slice(&[0, 0]);
    push_text(&mut rec, &g.description);
    rec
}

fn parameter_record(group_id: u8, param: &Parameter, p: Processor) -> Vec<u8> {
    let name = name_bytes(&param.name);
    let len = name.len() as i8;
    let mut rec = vec![if param.locked { -len } else { len } as u8, group_id.min(127)];
    rec.extend_from_slice(&name);
    rec.extend_from_slice(&[0, 0]);
    rec.push(param.data.type_code() as u8);
    rec.push(param.dimensions.len() as u8);
    rec.extend_from_slice(&param.dimensions);
    match &param.data {
        ParameterData::Char(v) | ParameterData::Byte(v) => rec.extend_from_slice(v),
        ParameterData::Int(v) => v.iter().for_each(|&x| rec.extend_from_slice(&p.u16_to(x as u16))),
        ParameterData::Float(v) => v.iter().for_each(|&x| rec.extend_from_slice(&p.f32_to(x))),
    }
    push_text(&mut rec, &param.description);
    rec
}
