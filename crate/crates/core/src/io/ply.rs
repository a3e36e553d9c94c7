//! PLY reading (ASCII and binary little-endian) and binary point cloud writing.

use std::path::Path;

use nalgebra::{Point3, Vector3};

use super::{atomic_write, IoError};
use crate::geometry::{PointCloud, TriangleMesh};

#[derive(Debug, Clone, Copy, PartialEq)]
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
    fn parse(s: &str) -> Option<Scalar> {
        Some(match s {
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

    fn read_le(self, b: &[u8]) -> f64 {
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
    List { name: String, count: Scalar, item: Scalar },
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Format {
    Ascii,
    BinaryLe,
}

/// Everything the pipeline uses from a PLY file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlyData {
    pub points: Vec<Point3<f64>>,
    pub normals: Option<Vec<Vector3<f64>>>,
    pub colors: Option<Vec<[u8; 3]>>,
    pub faces: Vec<Vec<u32>>,
}

fn format_err(path: &Path, msg: impl Into<String>) -> IoError {
    IoError::Format(path.to_path_buf(), msg.into())
}

pub fn parse_ply(path: &Path, bytes: &[u8]) -> Result<PlyData, IoError> {
    let mut elements: Vec<Element> = Vec::new();
    let mut format = None;
    let mut pos = 0;
    let mut first = true;
    loop {
        let end = bytes[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| format_err(path, "unterminated PLY header"))?;
        let line = std::str::from_utf8(&bytes[pos..pos + end])
            .map_err(|_| format_err(path, "non-UTF-8 PLY header"))?
            .trim();
        pos += end + 1;
        if first {
            if line != "ply" {
                return Err(format_err(path, "missing 'ply' magic"));
            }
            first = false;
            continue;
        }
        let mut words = line.split_whitespace();
        match words.next() {
            Some("format") => {
                format = Some(match words.next() {
                    Some("ascii") => Format::Ascii,
                    Some("binary_little_endian") => Format::BinaryLe,
                    other => return Err(format_err(path, format!("unsupported PLY format {other:?}"))),
                });
            }
            Some("element") => {
                let name = words.next().ok_or_else(|| format_err(path, "element without name"))?;
                let count = words
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| format_err(path, "element without count"))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            Some("property") => {
                let element = elements
                    .last_mut()
                    .ok_or_else(|| format_err(path, "property before element"))?;
                let parts: Vec<&str> = words.collect();
                let prop = match parts.as_slice() {
                    ["list", count, item, name] => Property::List {
                        name: name.to_string(),
                        count: Scalar::parse(count).ok_or_else(|| format_err(path, "bad list count type"))?,
                        item: Scalar::parse(item).ok_or_else(|| format_err(path, "bad list item type"))?,
                    },
                    [ty, name] => Property::Scalar {
                        name: name.to_string(),
                        ty: Scalar::parse(ty).ok_or_else(|| format_err(path, format!("bad property type {ty}")))?,
                    },
                    _ => return Err(format_err(path, format!("malformed property line '{line}'"))),
                };
                element.properties.push(prop);
            }
            Some("end_header") => break,
            Some("comment") | Some("obj_info") | None => {}
            Some(other) => return Err(format_err(path, format!("unknown header keyword {other}"))),
        }
    }
    let format = format.ok_or_else(|| format_err(path, "missing format line"))?;
    let body = &bytes[pos..];

    let mut reader: Box<dyn ValueReader> = match format {
        Format::Ascii => Box::new(AsciiReader::new(body)),
        Format::BinaryLe => Box::new(BinaryReader { data: body, pos: 0 }),
    };

    let mut data = PlyData::default();
    for element in &elements {
        let names: Vec<&str> = element
            .properties
            .iter()
            .map(|p| match p {
                Property::Scalar { name, .. } | Property::List { name, .. } => name.as_str(),
            })
            .collect();
        let slot = |n: &str| names.iter().position(|x| *x == n);
        let is_vertex = element.name == "vertex";
        let is_face = element.name == "face";
        let (xi, yi, zi) = (slot("x"), slot("y"), slot("z"));
        let normal_slots = (slot("nx"), slot("ny"), slot("nz"));
        let color_slots = (slot("red"), slot("green"), slot("blue"));
        let has_normals = is_vertex && normal_slots.0.is_some() && normal_slots.1.is_some() && normal_slots.2.is_some();
        let has_colors = is_vertex && color_slots.0.is_some() && color_slots.1.is_some() && color_slots.2.is_some();
        if is_vertex && (xi.is_none() || yi.is_none() || zi.is_none()) {
            return Err(format_err(path, "vertex element lacks x/y/z"));
        }
        let mut normals = Vec::new();
        let mut colors = Vec::new();
        for _ in 0..element.count {
            let mut scalars = vec![0.0; element.properties.len()];
            let mut face = None;
            for (k, prop) in element.properties.iter().enumerate() {
                match prop {
                    Property::Scalar { ty, .. } => {
                        scalars[k] = reader.next(*ty).ok_or_else(|| format_err(path, "truncated PLY body"))?;
                    }
                    Property::List { name, count, item } => {
                        let n = reader.next(*count).ok_or_else(|| format_err(path, "truncated PLY body"))? as usize;
                        let mut items = Vec::with_capacity(n);
                        for _ in 0..n {
                            items.push(reader.next(*item).ok_or_else(|| format_err(path, "truncated PLY body"))?);
                        }
                        if is_face && (name == "vertex_indices" || name == "vertex_index") {
                            face = Some(items);
                        }
                    }
                }
            }
            if is_vertex {
                data.points.push(Point3::new(scalars[xi.unwrap()], scalars[yi.unwrap()], scalars[zi.unwrap()]));
                if has_normals {
                    normals.push(Vector3::new(
                        scalars[normal_slots.0.unwrap()],
                        scalars[normal_slots.1.unwrap()],
                        scalars[normal_slots.2.unwrap()],
                    ));
                }
                if has_colors {
                    colors.push([
                        scalars[color_slots.0.unwrap()] as u8,
                        scalars[color_slots.1.unwrap()] as u8,
                        scalars[color_slots.2.unwrap()] as u8,
                    ]);
                }
            }
            if let Some(face) = face {
                let indices = face
                    .into_iter()
                    .map(|v| if v >= 0.0 && v <= u32::MAX as f64 { Ok(v as u32) } else { Err(format_err(path, "negative face index")) })
                    .collect::<Result<Vec<u32>, _>>()?;
                data.faces.push(indices);
            }
        }
        if has_normals {
            data.normals = Some(normals);
        }
        if has_colors {
            data.colors = Some(colors);
        }
    }
    Ok(data)
}

trait ValueReader {
    fn next(&mut self, ty: Scalar) -> Option<f64>;
}

struct BinaryReader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl ValueReader for BinaryReader<'_> {
    fn next(&mut self, ty: Scalar) -> Option<f64> {
        let n = ty.size();
        let bytes = self.data.get(self.pos..self.pos + n)?;
        self.pos += n;
        Some(ty.read_le(bytes))
    }
}

struct AsciiReader<'a> {
    tokens: std::str::SplitAsciiWhitespace<'a>,
}

impl<'a> AsciiReader<'a> {
    fn new(body: &'a [u8]) -> Self {
        let text = std::str::from_utf8(body).unwrap_or("");
        Self {
            tokens: text.split_ascii_whitespace(),
        }
    }
}

impl ValueReader for AsciiReader<'_> {
    fn next(&mut self, _ty: Scalar) -> Option<f64> {
        self.tokens.next()?.parse().ok()
    }
}

pub fn read_ply(path: &Path) -> Result<PlyData, IoError> {
    let bytes = std::fs::read(path).map_err(|e| IoError::at(path, e))?;
    parse_ply(path, &bytes)
}

/// Reads a point cloud; normals are kept when present.
pub fn read_cloud(path: &Path) -> Result<PointCloud, IoError> {
    let data = read_ply(path)?;
    let cloud = PointCloud {
        points: data.points,
        normals: data.normals,
        colors: data.colors,
    };
    cloud.validate().map_err(|e| format_err(path, e.to_string()))?;
    Ok(cloud)
}

/// Reads a triangle mesh; polygons are fan-triangulated and degenerate triangles dropped.
pub fn read_mesh(path: &Path) -> Result<TriangleMesh, IoError> {
    let data = read_ply(path)?;
    let faces = super::triangulate(&data.faces);
    TriangleMesh::new(data.points, faces).map_err(|e| format_err(path, e.to_string()))
}

/// Binary little-endian PLY with double-precision coordinates (and normals when present).
pub fn encode_cloud(cloud: &PointCloud) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(b"ply\nformat binary_little_endian 1.0\n");
    out.extend_from_slice(format!("element vertex {}\n", cloud.len()).as_bytes());
    out.extend_from_slice(b"property double x\nproperty double y\nproperty double z\n");
    if cloud.normals.is_some() {
        out.extend_from_slice(b"property double nx\nproperty double ny\nproperty double nz\n");
    }
    out.extend_from_slice(b"end_header\n");
    for (i, p) in cloud.points.iter().enumerate() {
        for c in p.coords.iter() {
            out.extend_from_slice(&c.to_le_bytes());
        }
        if let Some(normals) = &cloud.normals {
            for c in normals[i].iter() {
                out.extend_from_slice(&c.to_le_bytes());
            }
        }
    }
    out
}

pub fn write_cloud(path: &Path, cloud: &PointCloud) -> Result<(), IoError> {
    atomic_write(path, &encode_cloud(cloud))
}

/// Binary little-endian PLY mesh with double vertices and `uint` indices.
pub fn encode_mesh(mesh: &TriangleMesh) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(b"ply\nformat binary_little_endian 1.0\n");
    out.extend_from_slice(format!("element vertex {}\n", mesh.vertices().len()).as_bytes());
    out.extend_from_slice(b"property double x\nproperty double y\nproperty double z\n");
    out.extend_from_slice(format!("element face {}\n", mesh.faces().len()).as_bytes());
    out.extend_from_slice(b"property list uchar uint vertex_indices\nend_header\n");
    for v in mesh.vertices() {
        for c in v.coords.iter() {
            out.extend_from_slice(&c.to_le_bytes());
        }
    }
    for f in mesh.faces() {
        out.push(3);
        for i in f {
            out.extend_from_slice(&i.to_le_bytes());
        }
    }
    out
}

pub fn write_mesh(path: &Path, mesh: &TriangleMesh) -> Result<(), IoError> {
    atomic_write(path, &encode_mesh(mesh))
}
