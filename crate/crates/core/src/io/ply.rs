//! PLY reader (ascii and binary little-endian) and binary writer.
//!
//! Only the `vertex` element is returned. Other elements are parsed far
//! enough to be skipped, whether they come before or after the vertices.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::IngestError;
use crate::geometry::{PointCloud, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Ascii,
    BinaryLittleEndian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn decode(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar { name: String, ty: Scalar },
    List { count: Scalar, item: Scalar },
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

struct Header {
    format: Format,
    elements: Vec<Element>,
    /// Byte offset of the first body byte.
    body_offset: usize,
    /// Number of header lines; ascii body line numbers continue from here.
    lines: usize,
}

/// Column positions of the fields we keep within a vertex record.
struct VertexLayout {
    xyz: [usize; 3],
    rgb: Option<[usize; 3]>,
}

fn header_err(line: usize, reason: impl Into<String>) -> IngestError {
    IngestError::MalformedHeader { line, reason: reason.into() }
}

fn parse_header(bytes: &[u8]) -> Result<Header, IngestError> {
    let mut pos = 0;
    let mut line_no = 0;
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        let Some(nl) = bytes[pos..].iter().position(|&b| b == b'\n') else {
            return Err(header_err(line_no + 1, "missing end_header"));
        };
        line_no += 1;
        let raw = &bytes[pos..pos + nl];
        pos += nl + 1;
        let line = std::str::from_utf8(raw)
            .map_err(|_| header_err(line_no, "header is not valid text"))?
            .trim_end_matches('\r');
        let mut tok = line.split_whitespace();
        let Some(keyword) = tok.next() else { continue };
        if line_no == 1 {
            if line != "ply" {
                return Err(header_err(1, "missing 'ply' magic"));
            }
            continue;
        }
        match keyword {
            "comment" | "obj_info" => {}
            "format" => {
                let fmt = tok.next().unwrap_or_default();
                let version = tok.next().unwrap_or_default();
                if version != "1.0" {
                    return Err(header_err(line_no, format!("unsupported PLY version '{version}'")));
                }
                format = Some(match fmt {
                    "ascii" => Format::Ascii,
                    "binary_little_endian" => Format::BinaryLittleEndian,
                    other => return Err(header_err(line_no, format!("unsupported format '{other}'"))),
                });
            }
            "element" => {
                let name = tok.next().ok_or_else(|| header_err(line_no, "element without name"))?;
                let count = tok
                    .next()
                    .and_then(|c| c.parse::<usize>().ok())
                    .ok_or_else(|| header_err(line_no, "element count is not a non-negative integer"))?;
                elements.push(Element { name: name.to_string(), count, properties: Vec::new() });
            }
            "property" => {
                let element = elements.last_mut().ok_or_else(|| header_err(line_no, "property before any element"))?;
                let ty = tok.next().ok_or_else(|| header_err(line_no, "property without type"))?;
                let prop = if ty == "list" {
                    let count = tok.next().and_then(Scalar::parse);
                    let item = tok.next().and_then(Scalar::parse);
                    match (count, item, tok.next()) {
                        (Some(count), Some(item), Some(_)) => Property::List { count, item },
                        _ => return Err(header_err(line_no, "malformed list property")),
                    }
                } else {
                    let ty = Scalar::parse(ty)
                        .ok_or_else(|| header_err(line_no, format!("unknown property type '{ty}'")))?;
                    let name = tok.next().ok_or_else(|| header_err(line_no, "property without name"))?;
                    Property::Scalar { name: name.to_string(), ty }
                };
                element.properties.push(prop);
            }
            "end_header" => break,
            other => return Err(header_err(line_no, format!("unexpected header keyword '{other}'"))),
        }
    }
    let format = format.ok_or_else(|| header_err(line_no, "missing format line"))?;
    Ok(Header { format, elements, body_offset: pos, lines: line_no })
}

fn vertex_layout(element: &Element, header_lines: usize) -> Result<VertexLayout, IngestError> {
    let find = |wanted: &str| {
        element.properties.iter().position(|p| matches!(p, Property::Scalar { name, .. } if name == wanted))
    };
    let mut xyz = [0; 3];
    for (slot, axis) in xyz.iter_mut().zip(["x", "y", "z"]) {
        let idx = find(axis).ok_or_else(|| header_err(header_lines, format!("vertex property '{axis}' missing")))?;
        if let Property::Scalar { ty, .. } = element.properties[idx] {
            if !matches!(ty, Scalar::F32 | Scalar::F64) {
                return Err(header_err(header_lines, format!("vertex property '{axis}' must be float or double")));
            }
        }
        *slot = idx;
    }
    let rgb = match (find("red"), find("green"), find("blue")) {
        (Some(r), Some(g), Some(b))
            if [r, g, b].iter().all(|&i| matches!(element.properties[i], Property::Scalar { ty: Scalar::U8, .. })) =>
        {
            Some([r, g, b])
        }
        _ => None,
    };
    Ok(VertexLayout { xyz, rgb })
}

pub fn read_ply(path: impl AsRef<Path>) -> Result<PointCloud, IngestError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| IngestError::io(path, e))?;
    parse_ply(&bytes)
}

pub fn parse_ply(bytes: &[u8]) -> Result<PointCloud, IngestError> {
    let header = parse_header(bytes)?;
    let vertex_idx = header
        .elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| header_err(header.lines, "no 'vertex' element"))?;
    let layout = vertex_layout(&header.elements[vertex_idx], header.lines)?;
    match header.format {
        Format::Ascii => read_ascii_body(bytes, &header, vertex_idx, &layout),
        Format::BinaryLittleEndian => read_binary_body(bytes, &header, vertex_idx, &layout),
    }
}

fn finish(points: Vec<Vec3>, colors: Option<Vec<[u8; 3]>>) -> Result<PointCloud, IngestError> {
    if let Some((i, _)) = points.iter().enumerate().find(|(_, p)| !p.iter().all(|c| c.is_finite())) {
        return Err(IngestError::MalformedBody {
            location: format!("vertex {i}"),
            reason: "non-finite coordinate".into(),
        });
    }
    Ok(PointCloud { points, colors })
}

fn read_ascii_body(
    bytes: &[u8],
    header: &Header,
    vertex_idx: usize,
    layout: &VertexLayout,
) -> Result<PointCloud, IngestError> {
    let text = std::str::from_utf8(&bytes[header.body_offset..]).map_err(|e| IngestError::MalformedBody {
        location: format!("byte {}", header.body_offset + e.valid_up_to()),
        reason: "ascii body is not valid UTF-8".into(),
    })?;
    let mut lines =
        text.lines().enumerate().map(|(i, l)| (header.lines + 1 + i, l)).filter(|(_, l)| !l.trim().is_empty());
    let last_line = header.lines + text.lines().count();

    let vertex = &header.elements[vertex_idx];
    let mut points = Vec::with_capacity(vertex.count);
    let mut colors = layout.rgb.map(|_| Vec::with_capacity(vertex.count));
    for (ei, element) in header.elements.iter().enumerate().take(vertex_idx + 1) {
        for _ in 0..element.count {
            let Some((line_no, line)) = lines.next() else {
                return Err(IngestError::TruncatedBody {
                    location: format!("line {}", last_line + 1),
                    reason: format!("element '{}' declares {} records", element.name, element.count),
                });
            };
            if ei != vertex_idx {
                continue;
            }
            let values = parse_ascii_record(line, element, line_no)?;
            points.push(Vec3::new(values[layout.xyz[0]], values[layout.xyz[1]], values[layout.xyz[2]]));
            if let (Some(cols), Some(rgb)) = (colors.as_mut(), layout.rgb) {
                cols.push(rgb.map(|i| values[i] as u8));
            }
        }
    }
    finish(points, colors)
}

/// Parses one ascii record; list properties are consumed and reported as NaN.
fn parse_ascii_record(line: &str, element: &Element, line_no: usize) -> Result<Vec<f64>, IngestError> {
    let mut tok = line.split_whitespace();
    let mut out = Vec::with_capacity(element.properties.len());
    let mut next = |what: &str| -> Result<f64, IngestError> {
        let t = tok.next().ok_or_else(|| IngestError::TruncatedBody {
            location: format!("line {line_no}"),
            reason: format!("record ends before {what}"),
        })?;
        t.parse::<f64>().map_err(|_| IngestError::MalformedBody {
            location: format!("line {line_no}"),
            reason: format!("'{t}' is not a number"),
        })
    };
    for prop in &element.properties {
        match prop {
            Property::Scalar { name, .. } => out.push(next(name)?),
            Property::List { .. } => {
                let n = next("list count")?;
                for _ in 0..(n.max(0.0) as usize) {
                    next("list item")?;
                }
                out.push(f64::NAN);
            }
        }
    }
    Ok(out)
}

fn read_binary_body(
    bytes: &[u8],
    header: &Header,
    vertex_idx: usize,
    layout: &VertexLayout,
) -> Result<PointCloud, IngestError> {
    let mut pos = header.body_offset;
    let take = |pos: &mut usize, n: usize, what: &str| -> Result<&[u8], IngestError> {
        if *pos + n > bytes.len() {
            return Err(IngestError::TruncatedBody {
                location: format!("byte {}", *pos),
                reason: format!("need {n} bytes for {what}, {} left", bytes.len() - *pos),
            });
        }
        let s = &bytes[*pos..*pos + n];
        *pos += n;
        Ok(s)
    };

    for element in &header.elements[..vertex_idx] {
        for _ in 0..element.count {
            for prop in &element.properties {
                match *prop {
                    Property::Scalar { ty, .. } => {
                        take(&mut pos, ty.size(), &element.name)?;
                    }
                    Property::List { count, item } => {
                        let n = count.decode(take(&mut pos, count.size(), &element.name)?);
                        take(&mut pos, n.max(0.0) as usize * item.size(), &element.name)?;
                    }
                }
            }
        }
    }

    let vertex = &header.elements[vertex_idx];
    let mut points = Vec::with_capacity(vertex.count);
    let mut colors = layout.rgb.map(|_| Vec::with_capacity(vertex.count));
    let mut values = vec![0.0; vertex.properties.len()];
    for _ in 0..vertex.count {
        for (slot, prop) in values.iter_mut().zip(&vertex.properties) {
            match *prop {
                Property::Scalar { ty, .. } => *slot = ty.decode(take(&mut pos, ty.size(), "vertex")?),
                Property::List { count, item } => {
                    let n = count.decode(take(&mut pos, count.size(), "vertex")?);
                    take(&mut pos, n.max(0.0) as usize * item.size(), "vertex")?;
                }
            }
        }
        points.push(Vec3::new(values[layout.xyz[0]], values[layout.xyz[1]], values[layout.xyz[2]]));
        if let (Some(cols), Some(rgb)) = (colors.as_mut(), layout.rgb) {
            cols.push(rgb.map(|i| values[i] as u8));
        }
    }
    finish(points, colors)
}

/// Writes a binary little-endian PLY with float32 coordinates and, when the
/// cloud carries colors, uchar red/green/blue.
pub fn write_ply(cloud: &PointCloud, path: impl AsRef<Path>) -> Result<(), IngestError> {
    let path = path.as_ref();
    let bytes = encode_ply(cloud)?;
    let file = fs::File::create(path).map_err(|e| IngestError::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&bytes).and_then(|_| w.flush()).map_err(|e| IngestError::io(path, e))
}

pub fn encode_ply(cloud: &PointCloud) -> Result<Vec<u8>, IngestError> {
    if cloud.is_empty() {
        return Err(IngestError::EmptyCloud);
    }
    let mut out = Vec::with_capacity(128 + cloud.len() * 15);
    out.extend_from_slice(b"ply\nformat binary_little_endian 1.0\n");
    out.extend_from_slice(format!("element vertex {}\n", cloud.len()).as_bytes());
    out.extend_from_slice(b"property float x\nproperty float y\nproperty float z\n");
    if cloud.colors.is_some() {
        out.extend_from_slice(b"property uchar red\nproperty uchar green\nproperty uchar blue\n");
    }
    out.extend_from_slice(b"end_header\n");
    for (i, p) in cloud.points.iter().enumerate() {
        for c in p.iter() {
            out.extend_from_slice(&(*c as f32).to_le_bytes());
        }
        if let Some(colors) = &cloud.colors {
            out.extend_from_slice(&colors[i]);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ascii_single_vertex() {
        let src = b"ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nproperty float z\nend_header\n0 0 0\n";
        let cloud = parse_ply(src).unwrap();
        assert_eq!(cloud.points, vec![Vec3::zeros()]);
        assert!(cloud.colors.is_none());
    }

    #[test]
    fn ascii_with_colors_faces_and_extra_props() {
        let src = "ply\r\nformat ascii 1.0\r\ncomment made by hand\r\nelement vertex 2\r\nproperty double x\r\nproperty double y\r\nproperty double z\r\nproperty float nx\r\nproperty uchar red\r\nproperty uchar green\r\nproperty uchar blue\r\nelement face 1\r\nproperty list uchar int vertex_indices\r\nend_header\r\n1.5 2 3 0 10 20 30\r\n-1 -2 -3.25 1 255 0 7\r\n3 0 1 1\r\n";
        let cloud = parse_ply(src.as_bytes()).unwrap();
        assert_eq!(cloud.points[1], Vec3::new(-1.0, -2.0, -3.25));
        assert_eq!(cloud.colors.unwrap(), vec![[10, 20, 30], [255, 0, 7]]);
    }

    #[test]
    fn binary_float32_roundtrip() {
        let pts = vec![Vec3::new(0.5, -1.25, 3.0), Vec3::new(1e3, 2e-3, -7.0), Vec3::new(0.1, 0.2, 0.3)];
        let mut bytes = b"ply\nformat binary_little_endian 1.0\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\nend_header\n".to_vec();
        for p in &pts {
            for c in p.iter() {
                bytes.extend_from_slice(&(*c as f32).to_le_bytes());
            }
        }
        let cloud = parse_ply(&bytes).unwrap();
        for (a, b) in cloud.points.iter().zip(&pts) {
            for k in 0..3 {
                assert_eq!(a[k], b[k] as f32 as f64);
            }
        }
    }

    #[test]
    fn binary_skips_leading_element_with_lists() {
        let mut bytes = b"ply\nformat binary_little_endian 1.0\nelement camera 1\nproperty list uchar float k\nproperty int id\nelement vertex 1\nproperty double x\nproperty double y\nproperty double z\nproperty short extra\nend_header\n".to_vec();
        bytes.push(2);
        bytes.extend_from_slice(&1.0f32.to_le_bytes());
        bytes.extend_from_slice(&2.0f32.to_le_bytes());
        bytes.extend_from_slice(&9i32.to_le_bytes());
        for c in [1.0f64, 2.0, 3.0] {
            bytes.extend_from_slice(&c.to_le_bytes());
        }
        bytes.extend_from_slice(&(-4i16).to_le_bytes());
        let cloud = parse_ply(&bytes).unwrap();
        assert_eq!(cloud.points, vec![Vec3::new(1.0, 2.0, 3.0)]);
    }

    #[test]
    fn truncated_ascii_reports_line() {
        let mut src = String::from("ply\nformat ascii 1.0\nelement vertex 10\nproperty float x\nproperty float y\nproperty float z\nend_header\n");
        for i in 0..9 {
            src.push_str(&format!("{i} {i} {i}\n"));
        }
        match parse_ply(src.as_bytes()) {
            Err(IngestError::TruncatedBody { location, .. }) => assert_eq!(location, "line 17"),
            other => panic!("expected TruncatedBody, got {other:?}"),
        }
    }

    #[test]
    fn truncated_binary_reports_offset() {
        let mut bytes = b"ply\nformat binary_little_endian 1.0\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\nend_header\n".to_vec();
        let body = bytes.len();
        bytes.extend_from_slice(&[0u8; 12 + 5]);
        match parse_ply(&bytes) {
            Err(IngestError::TruncatedBody { location, .. }) => assert_eq!(location, format!("byte {}", body + 12 + 4)),
            other => panic!("expected TruncatedBody, got {other:?}"),
        }
    }

    #[test]
    fn header_errors() {
        let big = b"ply\nformat binary_big_endian 1.0\nelement vertex 0\nend_header\n";
        assert!(matches!(parse_ply(big), Err(IngestError::MalformedHeader { line: 2, .. })));
        let no_z = b"ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nend_header\n0 0\n";
        assert!(matches!(parse_ply(no_z), Err(IngestError::MalformedHeader { .. })));
        let int_xyz = b"ply\nformat ascii 1.0\nelement vertex 1\nproperty int x\nproperty int y\nproperty int z\nend_header\n0 0 0\n";
        assert!(matches!(parse_ply(int_xyz), Err(IngestError::MalformedHeader { .. })));
        assert!(matches!(parse_ply(b"not a ply"), Err(IngestError::MalformedHeader { .. })));
        assert!(matches!(parse_ply(b""), Err(IngestError::MalformedHeader { .. })));
    }

    #[test]
    fn garbage_token_is_typed_error() {
        let src = b"ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nproperty float z\nend_header\n0 zz 0\n";
        assert!(matches!(parse_ply(src), Err(IngestError::MalformedBody { .. })));
    }

    #[test]
    fn empty_cloud_cannot_be_written() {
        assert!(matches!(encode_ply(&PointCloud::default()), Err(IngestError::EmptyCloud)));
    }

    #[test]
    fn colors_survive_write() {
        let cloud =
            PointCloud::with_colors(vec![Vec3::new(1.0, 2.0, 3.0), Vec3::zeros()], vec![[0, 128, 255], [7, 7, 7]]);
        let back = parse_ply(&encode_ply(&cloud).unwrap()).unwrap();
        assert_eq!(back.colors, cloud.colors);
        assert_eq!(back.points, cloud.points);
    }
}
