//! Minimal PLY support: one `vertex` element, ASCII or binary little-endian.

use super::{PointCloud, NUM_ATTRS};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlyEncoding {
    Ascii,
    BinaryLittleEndian,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum PropType {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl PropType {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "char" | "int8" => PropType::I8,
            "uchar" | "uint8" => PropType::U8,
            "short" | "int16" => PropType::I16,
            "ushort" | "uint16" => PropType::U16,
            "int" | "int32" => PropType::I32,
            "uint" | "uint32" => PropType::U32,
            "float" | "float32" => PropType::F32,
            "double" | "float64" => PropType::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            PropType::I8 | PropType::U8 => 1,
            PropType::I16 | PropType::U16 => 2,
            PropType::I32 | PropType::U32 | PropType::F32 => 4,
            PropType::F64 => 8,
        }
    }

    fn is_float(self) -> bool {
        matches!(self, PropType::F32 | PropType::F64)
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            PropType::I8 => b[0] as i8 as f64,
            PropType::U8 => b[0] as f64,
            PropType::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            PropType::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            PropType::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            PropType::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            PropType::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            PropType::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

struct Header {
    encoding: PlyEncoding,
    count: usize,
    props: Vec<(String, PropType)>,
    body_offset: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    let mut pos = 0usize;
    let mut encoding = None;
    let mut count = None;
    let mut props = Vec::new();
    let mut in_vertex = false;
    let mut first = true;
    loop {
        let line_start = pos;
        let Some(nl) = bytes[pos..].iter().position(|&b| b == b'\n') else {
            return Err(Error::parse(line_start as u64, "unterminated PLY header"));
        };
        pos += nl + 1;
        let line = std::str::from_utf8(&bytes[line_start..line_start + nl])
            .map_err(|_| Error::parse(line_start as u64, "non-UTF-8 header line"))?
            .trim_end_matches('\r')
            .trim();
        let off = line_start as u64;
        if first {
            if line != "ply" {
                return Err(Error::parse(0, "missing 'ply' magic"));
            }
            first = false;
            continue;
        }
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            [] => {}
            ["comment", ..] | ["obj_info", ..] => {}
            ["format", fmt, _version] => {
                encoding = Some(match *fmt {
                    "ascii" => PlyEncoding::Ascii,
                    "binary_little_endian" => PlyEncoding::BinaryLittleEndian,
                    other => return Err(Error::parse(off, format!("unsupported PLY format '{other}'"))),
                });
            }
            ["element", "vertex", n] => {
                let n = n
                    .parse::<usize>()
                    .map_err(|_| Error::parse(off, format!("bad vertex count '{n}'")))?;
                count = Some(n);
                in_vertex = true;
            }
            ["element", name, _] => {
                return Err(Error::parse(off, format!("unsupported element '{name}' (vertex only)")));
            }
            ["property", "list", ..] => {
                return Err(Error::parse(off, "list properties are not supported"));
            }
            ["property", ty, name] => {
                if !in_vertex {
                    return Err(Error::parse(off, "property before element"));
                }
                let ty = PropType::parse(ty).ok_or_else(|| Error::parse(off, format!("unknown property type '{ty}'")))?;
                props.push((name.to_string(), ty));
            }
            ["end_header"] => break,
            _ => return Err(Error::parse(off, format!("malformed header line '{line}'"))),
        }
    }
    let encoding = encoding.ok_or_else(|| Error::parse(0, "missing format line"))?;
    let count = count.ok_or_else(|| Error::parse(0, "missing vertex element"))?;
    for axis in ["x", "y", "z"] {
        match props.iter().find(|(n, _)| n == axis) {
            Some((_, t)) if t.is_float() => {}
            Some(_) => return Err(Error::parse(0, format!("property '{axis}' must be float"))),
            None => return Err(Error::parse(0, format!("missing property '{axis}'"))),
        }
    }
    Ok(Header {
        encoding,
        count,
        props,
        body_offset: pos,
    })
}

/// Column index in the header for each of x, y, z, intensity.
fn attr_columns(props: &[(String, PropType)]) -> [Option<usize>; NUM_ATTRS] {
    let find = |name: &str| props.iter().position(|(n, _)| n == name);
    [find("x"), find("y"), find("z"), find("intensity")]
}

pub fn decode_ply<T: Scalar>(bytes: &[u8]) -> Result<PointCloud<T>> {
    let header = parse_header(bytes)?;
    if header.count == 0 {
        return Err(Error::parse(header.body_offset as u64, "zero points"));
    }
    let cols = attr_columns(&header.props);
    let mut points = Vec::with_capacity(header.count);
    match header.encoding {
        PlyEncoding::BinaryLittleEndian => {
            let offsets: Vec<usize> = header
                .props
                .iter()
                .scan(0, |acc, (_, t)| {
                    let o = *acc;
                    *acc += t.size();
                    Some(o)
                })
                .collect();
            let stride: usize = header.props.iter().map(|(_, t)| t.size()).sum();
            let body = &bytes[header.body_offset..];
            if body.len() < stride * header.count {
                let full = body.len() / stride;
                return Err(Error::parse(
                    (header.body_offset + full * stride) as u64,
                    format!("truncated vertex record {full} of {}", header.count),
                ));
            }
            for r in 0..header.count {
                let rec = &body[r * stride..(r + 1) * stride];
                let mut p = [T::zero(); NUM_ATTRS];
                for (a, col) in cols.iter().enumerate() {
                    if let Some(c) = *col {
                        let v = header.props[c].1.read_le(&rec[offsets[c]..]);
                        if !v.is_finite() {
                            return Err(Error::parse(
                                (header.body_offset + r * stride + offsets[c]) as u64,
                                "non-finite value",
                            ));
                        }
                        p[a] = T::from_f64(v).expect("finite");
                    }
                }
                points.push(p);
            }
        }
        PlyEncoding::Ascii => {
            let mut pos = header.body_offset;
            for r in 0..header.count {
                let start = pos;
                let end = bytes[pos..]
                    .iter()
                    .position(|&b| b == b'\n')
                    .map(|n| pos + n)
                    .unwrap_or(bytes.len());
                if start >= bytes.len() {
                    return Err(Error::parse(start as u64, format!("truncated vertex record {r} of {}", header.count)));
                }
                pos = end + 1;
                let line = std::str::from_utf8(&bytes[start..end])
                    .map_err(|_| Error::parse(start as u64, "non-UTF-8 vertex line"))?;
                let fields: Vec<&str> = line.split_whitespace().collect();
                if fields.len() != header.props.len() {
                    return Err(Error::parse(
                        start as u64,
                        format!("expected {} fields, found {}", header.props.len(), fields.len()),
                    ));
                }
                let mut p = [T::zero(); NUM_ATTRS];
                for (a, col) in cols.iter().enumerate() {
                    if let Some(c) = *col {
                        // f32 fields go through f32 so their bits survive a round trip.
                        let v = match header.props[c].1 {
                            PropType::F32 => fields[c].parse::<f32>().map(f64::from).ok(),
                            _ => fields[c].parse::<f64>().ok(),
                        }
                        .ok_or_else(|| Error::parse(start as u64, format!("bad number '{}'", fields[c])))?;
                        if !v.is_finite() {
                            return Err(Error::parse(start as u64, "non-finite value"));
                        }
                        p[a] = T::from_f64(v).expect("finite");
                    }
                }
                points.push(p);
            }
        }
    }
    PointCloud::new(points)
}

/// Encodes x, y, z, intensity as `float` properties.
pub fn encode_ply<T: Scalar>(cloud: &PointCloud<T>, encoding: PlyEncoding) -> Vec<u8> {
    let fmt = match encoding {
        PlyEncoding::Ascii => "ascii",
        PlyEncoding::BinaryLittleEndian => "binary_little_endian",
    };
    let mut out = format!(
        "ply\nformat {fmt} 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\nproperty float intensity\nend_header\n",
        cloud.len()
    )
    .into_bytes();
    for p in cloud.points() {
        let vals = p.map(|v| v.to_f32_lossy());
        match encoding {
            PlyEncoding::Ascii => {
                out.extend_from_slice(format!("{} {} {} {}\n", vals[0], vals[1], vals[2], vals[3]).as_bytes());
            }
            PlyEncoding::BinaryLittleEndian => {
                for v in vals {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
    }
    out
}
