//! Mesh readers (PLY, OBJ, binary STL) and an ASCII PLY mesh writer.
//!
//! Polygons with more than three corners are fan-triangulated. Vertex order
//! is preserved from the file and no welding is done.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{TriangleMesh, Vec3};
use crate::error::{Error, Location, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeshFormat {
    Ply,
    Obj,
    Stl,
}

impl MeshFormat {
    /// Guesses the format from the file extension.
    pub fn from_path(path: &Path) -> Option<MeshFormat> {
        let ext = path.extension()?.to_str()?.to_ascii_lowercase();
        match ext.as_str() {
            "ply" => Some(MeshFormat::Ply),
            "obj" => Some(MeshFormat::Obj),
            "stl" => Some(MeshFormat::Stl),
            _ => None,
        }
    }
}

impl std::str::FromStr for MeshFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "ply" => Ok(MeshFormat::Ply),
            "obj" => Ok(MeshFormat::Obj),
            "stl" => Ok(MeshFormat::Stl),
            other => Err(format!("unknown mesh format {other:?}")),
        }
    }
}

/// Reads a mesh file in the declared format.
pub fn load_mesh(path: &Path, format: MeshFormat) -> Result<TriangleMesh> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_mesh(&bytes, format, path)
}

/// Parses in-memory mesh data; `path` is only used in error messages.
pub fn parse_mesh(bytes: &[u8], format: MeshFormat, path: &Path) -> Result<TriangleMesh> {
    let (vertices, faces) = match format {
        MeshFormat::Ply => PlyReader::new(bytes, path).read()?,
        MeshFormat::Obj => parse_obj(bytes, path)?,
        MeshFormat::Stl => parse_stl(bytes, path)?,
    };
    if faces.is_empty() {
        return Err(Error::EmptyMesh(path.to_path_buf()));
    }
    TriangleMesh::new(vertices, faces.into_iter().map(|(t, _)| t).collect())
}

/// A triangle plus the location of the record it came from.
type Face = ([u32; 3], Location);

fn parse_error(path: &Path, location: Location, message: impl Into<String>) -> Error {
    Error::MeshParse {
        path: path.to_path_buf(),
        location,
        message: message.into(),
    }
}

fn fan(corners: &[i64], vertex_count: usize, at: Location, path: &Path, out: &mut Vec<Face>) -> Result<()> {
    if corners.len() < 3 {
        return Err(parse_error(path, at, format!("face has {} corners", corners.len())));
    }
    for &c in corners {
        if c < 0 || c as usize >= vertex_count {
            return Err(parse_error(
                path,
                at,
                format!("vertex index {c} out of range (vertex count {vertex_count})"),
            ));
        }
    }
    for i in 1..corners.len() - 1 {
        out.push(([corners[0] as u32, corners[i] as u32, corners[i + 1] as u32], at));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// OBJ

fn parse_obj(bytes: &[u8], path: &Path) -> Result<(Vec<Vec3>, Vec<Face>)> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| parse_error(path, Location::Byte(e.valid_up_to() as u64), "invalid UTF-8"))?;
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let at = Location::Line(n + 1);
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("v") => {
                let coords: Vec<f64> = tok
                    .take(3)
                    .map(|t| t.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| parse_error(path, at, format!("bad vertex: {e}")))?;
                if coords.len() != 3 {
                    return Err(parse_error(path, at, "vertex needs 3 coordinates"));
                }
                vertices.push(Vec3::new(coords[0], coords[1], coords[2]));
            }
            Some("f") => {
                let count = vertices.len() as i64;
                let mut corners = Vec::new();
                for t in tok {
                    let first = t.split('/').next().unwrap_or("");
                    let i: i64 = first
                        .parse()
                        .map_err(|_| parse_error(path, at, format!("bad face index {t:?}")))?;
                    let zero_based = match i {
                        0 => return Err(parse_error(path, at, "face index 0 is invalid")),
                        i if i > 0 => i - 1,
                        i => count + i,
                    };
                    corners.push(zero_based);
                }
                fan(&corners, vertices.len(), at, path, &mut faces)?;
            }
            _ => {}
        }
    }
    Ok((vertices, faces))
}

// ---------------------------------------------------------------------------
// STL

const STL_HEADER: usize = 80;
const STL_FACET: usize = 50;

fn parse_stl(bytes: &[u8], path: &Path) -> Result<(Vec<Vec3>, Vec<Face>)> {
    if bytes.len() < STL_HEADER + 4 {
        return Err(parse_error(
            path,
            Location::Byte(bytes.len() as u64),
            "truncated binary STL header",
        ));
    }
    let count = u32::from_le_bytes(bytes[STL_HEADER..STL_HEADER + 4].try_into().unwrap()) as usize;
    let expected = STL_HEADER + 4 + count * STL_FACET;
    if bytes.len() < expected {
        let facet = (bytes.len() - STL_HEADER - 4) / STL_FACET;
        return Err(parse_error(
            path,
            Location::Byte((STL_HEADER + 4 + facet * STL_FACET) as u64),
            format!("header declares {count} facets but file ends inside facet {facet}"),
        ));
    }
    let mut vertices = Vec::with_capacity(count * 3);
    let mut faces = Vec::with_capacity(count);
    for f in 0..count {
        let base = STL_HEADER + 4 + f * STL_FACET;
        for v in 0..3 {
            let off = base + 12 + v * 12;
            let c = |k: usize| f32::from_le_bytes(bytes[off + 4 * k..off + 4 * k + 4].try_into().unwrap()) as f64;
            let p = Vec3::new(c(0), c(1), c(2));
            if !p.iter().all(|x| x.is_finite()) {
                return Err(parse_error(path, Location::Byte(off as u64), "non-finite vertex"));
            }
            vertices.push(p);
        }
        let i = (f * 3) as u32;
        faces.push(([i, i + 1, i + 2], Location::Byte(base as u64)));
    }
    Ok((vertices, faces))
}

// ---------------------------------------------------------------------------
// PLY

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
    fn parse(name: &str) -> Option<Scalar> {
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
enum Encoding {
    Ascii,
    BinaryLe,
    BinaryBe,
}

struct PlyReader<'a> {
    bytes: &'a [u8],
    path: &'a Path,
}

impl<'a> PlyReader<'a> {
    fn new(bytes: &'a [u8], path: &'a Path) -> Self {
        PlyReader { bytes, path }
    }

    fn err(&self, at: Location, msg: impl Into<String>) -> Error {
        parse_error(self.path, at, msg)
    }

    fn read(&self) -> Result<(Vec<Vec3>, Vec<Face>)> {
        let (encoding, elements, body_start, header_lines) = self.header()?;
        match encoding {
            Encoding::Ascii => self.ascii_body(&elements, body_start, header_lines),
            Encoding::BinaryLe | Encoding::BinaryBe => {
                self.binary_body(&elements, body_start, encoding == Encoding::BinaryBe)
            }
        }
    }

    fn header(&self) -> Result<(Encoding, Vec<Element>, usize, usize)> {
        let mut pos = 0;
        let mut line_no = 0;
        let mut encoding = None;
        let mut elements: Vec<Element> = Vec::new();
        loop {
            let end = self.bytes[pos..]
                .iter()
                .position(|&b| b == b'\n')
                .ok_or_else(|| self.err(Location::Line(line_no + 1), "header not terminated by end_header"))?;
            let raw = &self.bytes[pos..pos + end];
            pos += end + 1;
            line_no += 1;
            let at = Location::Line(line_no);
            let line = std::str::from_utf8(raw)
                .map_err(|_| self.err(at, "header is not UTF-8"))?
                .trim_end_matches('\r');
            let tok: Vec<&str> = line.split_whitespace().collect();
            if line_no == 1 {
                if tok != ["ply"] {
                    return Err(self.err(at, "missing 'ply' magic"));
                }
                continue;
            }
            match tok.first().copied() {
                Some("format") => {
                    encoding = Some(match tok.get(1).copied() {
                        Some("ascii") => Encoding::Ascii,
                        Some("binary_little_endian") => Encoding::BinaryLe,
                        Some("binary_big_endian") => Encoding::BinaryBe,
                        other => return Err(self.err(at, format!("unknown format {other:?}"))),
                    });
                }
                Some("element") => {
                    let (Some(name), Some(count)) = (tok.get(1), tok.get(2)) else {
                        return Err(self.err(at, "malformed element line"));
                    };
                    let count = count
                        .parse()
                        .map_err(|_| self.err(at, format!("bad element count {count:?}")))?;
                    elements.push(Element {
                        name: name.to_string(),
                        count,
                        properties: Vec::new(),
                    });
                }
                Some("property") => {
                    let el = elements
                        .last_mut()
                        .ok_or_else(|| parse_error(self.path, at, "property before element"))?;
                    let prop = if tok.get(1) == Some(&"list") {
                        match (
                            tok.get(2).and_then(|t| Scalar::parse(t)),
                            tok.get(3).and_then(|t| Scalar::parse(t)),
                            tok.get(4),
                        ) {
                            (Some(count), Some(item), Some(name)) => Property::List {
                                name: name.to_string(),
                                count,
                                item,
                            },
                            _ => return Err(self.err(at, "malformed list property")),
                        }
                    } else {
                        match (tok.get(1).and_then(|t| Scalar::parse(t)), tok.get(2)) {
                            (Some(ty), Some(name)) => Property::Scalar {
                                name: name.to_string(),
                                ty,
                            },
                            _ => return Err(self.err(at, format!("malformed property {line:?}"))),
                        }
                    };
                    el.properties.push(prop);
                }
                Some("end_header") => break,
                Some("comment") | Some("obj_info") | None => {}
                Some(other) => return Err(self.err(at, format!("unknown header keyword {other:?}"))),
            }
        }
        let encoding = encoding.ok_or_else(|| self.err(Location::Line(2), "missing format line"))?;
        let vertex = elements
            .iter()
            .find(|e| e.name == "vertex")
            .ok_or_else(|| self.err(Location::Line(line_no), "no vertex element"))?;
        for axis in ["x", "y", "z"] {
            let found = vertex
                .properties
                .iter()
                .any(|p| matches!(p, Property::Scalar { name, .. } if name == axis));
            if !found {
                return Err(self.err(Location::Line(line_no), format!("vertex has no {axis} property")));
            }
        }
        Ok((encoding, elements, pos, line_no))
    }

    fn ascii_body(&self, elements: &[Element], start: usize, header_lines: usize) -> Result<(Vec<Vec3>, Vec<Face>)> {
        let text = std::str::from_utf8(&self.bytes[start..])
            .map_err(|e| self.err(Location::Byte((start + e.valid_up_to()) as u64), "body is not UTF-8"))?;
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (header_lines + i + 1, l))
            .filter(|(_, l)| !l.trim().is_empty());
        let mut vertices = Vec::new();
        let mut faces = Vec::new();
        for el in elements {
            for _ in 0..el.count {
                let (n, line) = lines.next().ok_or_else(|| {
                    self.err(
                        Location::Line(header_lines + text.lines().count() + 1),
                        format!("unexpected end of file in element {}", el.name),
                    )
                })?;
                let at = Location::Line(n);
                let mut tok = line.split_whitespace();
                let mut next = || -> Result<f64> {
                    let t = tok.next().ok_or_else(|| self.err(at, "too few values"))?;
                    t.parse::<f64>().map_err(|_| self.err(at, format!("bad number {t:?}")))
                };
                let mut xyz = [f64::NAN; 3];
                let mut corners: Option<Vec<i64>> = None;
                for prop in &el.properties {
                    match prop {
                        Property::Scalar { name, .. } => {
                            let v = next()?;
                            if let Some(k) = axis_index(name) {
                                xyz[k] = v;
                            }
                        }
                        Property::List { name, .. } => {
                            let len = next()?;
                            if !(len >= 0.0 && len.fract() == 0.0) {
                                return Err(self.err(at, format!("bad list length {len}")));
                            }
                            let items = (0..len as usize)
                                .map(|_| next().map(|v| v as i64))
                                .collect::<Result<Vec<_>>>()?;
                            if is_face_list(name) {
                                corners = Some(items);
                            }
                        }
                    }
                }
                self.store(el, xyz, corners, at, &mut vertices, &mut faces)?;
            }
        }
        Ok((vertices, faces))
    }

    fn binary_body(&self, elements: &[Element], start: usize, big_endian: bool) -> Result<(Vec<Vec3>, Vec<Face>)> {
        let mut pos = start;
        let mut vertices = Vec::new();
        let mut faces = Vec::new();
        for el in elements {
            for _ in 0..el.count {
                let at = Location::Byte(pos as u64);
                let mut xyz = [f64::NAN; 3];
                let mut corners: Option<Vec<i64>> = None;
                for prop in &el.properties {
                    match prop {
                        Property::Scalar { name, ty } => {
                            let v = self.scalar(&mut pos, *ty, big_endian)?;
                            if let Some(k) = axis_index(name) {
                                xyz[k] = v;
                            }
                        }
                        Property::List { name, count, item } => {
                            let len = self.scalar(&mut pos, *count, big_endian)?;
                            if len < 0.0 {
                                return Err(self.err(at, format!("negative list length {len}")));
                            }
                            let items = (0..len as usize)
                                .map(|_| self.scalar(&mut pos, *item, big_endian).map(|v| v as i64))
                                .collect::<Result<Vec<_>>>()?;
                            if is_face_list(name) {
                                corners = Some(items);
                            }
                        }
                    }
                }
                self.store(el, xyz, corners, at, &mut vertices, &mut faces)?;
            }
        }
        Ok((vertices, faces))
    }

    fn scalar(&self, pos: &mut usize, ty: Scalar, be: bool) -> Result<f64> {
        let n = ty.size();
        let raw = self
            .bytes
            .get(*pos..*pos + n)
            .ok_or_else(|| self.err(Location::Byte(*pos as u64), "unexpected end of binary body"))?;
        *pos += n;
        let mut b = [0u8; 8];
        b[..n].copy_from_slice(raw);
        if be {
            b[..n].reverse();
        }
        Ok(match ty {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F64 => f64::from_le_bytes(b),
        })
    }

    fn store(
        &self,
        el: &Element,
        xyz: [f64; 3],
        corners: Option<Vec<i64>>,
        at: Location,
        vertices: &mut Vec<Vec3>,
        faces: &mut Vec<Face>,
    ) -> Result<()> {
        match el.name.as_str() {
            "vertex" => {
                if !xyz.iter().all(|c| c.is_finite()) {
                    return Err(self.err(at, "non-finite vertex coordinate"));
                }
                vertices.push(Vec3::from(xyz));
            }
            "face" => {
                let corners = corners.ok_or_else(|| self.err(at, "face element has no vertex_indices list"))?;
                fan(&corners, vertices.len(), at, self.path, faces)?;
            }
            _ => {}
        }
        Ok(())
    }
}

fn axis_index(name: &str) -> Option<usize> {
    match name {
        "x" => Some(0),
        "y" => Some(1),
        "z" => Some(2),
        _ => None,
    }
}

fn is_face_list(name: &str) -> bool {
    name == "vertex_indices" || name == "vertex_index"
}

/// Writes `mesh` as ASCII PLY with double-precision vertices.
pub fn write_ply_mesh(mesh: &TriangleMesh, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str("ply\nformat ascii 1.0\n");
    let _ = writeln!(out, "element vertex {}", mesh.vertices().len());
    out.push_str("property double x\nproperty double y\nproperty double z\n");
    let _ = writeln!(out, "element face {}", mesh.triangle_count());
    out.push_str("property list uchar int vertex_indices\nend_header\n");
    for v in mesh.vertices() {
        let _ = writeln!(out, "{} {} {}", v.x, v.y, v.z);
    }
    for t in mesh.triangles() {
        let _ = writeln!(out, "3 {} {} {}", t[0], t[1], t[2]);
    }
    std::fs::write(path, out).map_err(|e| Error::io(PathBuf::from(path), e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> &'static Path {
        Path::new("mem")
    }

    #[test]
    fn smallest_ascii_ply() {
        let src = "ply\nformat ascii 1.0\ncomment hi\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n0 0 0\n1 0 2\n0 -1 0\n3 0 1 2\n";
        let m = parse_mesh(src.as_bytes(), MeshFormat::Ply, p()).unwrap();
        assert_eq!(m.triangles(), &[[0, 1, 2]]);
        assert_eq!(m.bounds().min, Vec3::new(0.0, -1.0, 0.0));
        assert_eq!(m.bounds().max, Vec3::new(1.0, 0.0, 2.0));
    }

    #[test]
    fn binary_ply_both_endians_with_extra_properties() {
        for be in [false, true] {
            let fmt = if be {
                "binary_big_endian"
            } else {
                "binary_little_endian"
            };
            let mut data = format!(
                "ply\nformat {fmt} 1.0\nelement vertex 4\nproperty double x\nproperty double y\nproperty double z\nproperty uchar red\nelement face 1\nproperty list uchar uint vertex_indices\nproperty float quality\nend_header\n"
            )
            .into_bytes();
            let verts = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 1.0, 0.0], [0.0, 1.0, 0.5]];
            for v in verts {
                for c in v {
                    let b: [u8; 8] = if be { f64::to_be_bytes(c) } else { f64::to_le_bytes(c) };
                    data.extend_from_slice(&b);
                }
                data.push(200);
            }
            data.push(4);
            for i in 0u32..4 {
                data.extend_from_slice(&if be { i.to_be_bytes() } else { i.to_le_bytes() });
            }
            data.extend_from_slice(&[0; 4]);
            let m = parse_mesh(&data, MeshFormat::Ply, p()).unwrap();
            assert_eq!(m.triangles(), &[[0, 1, 2], [0, 2, 3]]);
            assert_eq!(m.vertices()[3], Vec3::new(0.0, 1.0, 0.5));
        }
    }

    #[test]
    fn truncated_binary_ply_reports_offset() {
        let mut data = b"ply\nformat binary_little_endian 1.0\nelement vertex 1\nproperty float x\nproperty float y\nproperty float z\nend_header\n".to_vec();
        let header = data.len();
        data.extend_from_slice(&[0; 6]);
        match parse_mesh(&data, MeshFormat::Ply, p()) {
            Err(Error::MeshParse { location, .. }) => {
                assert_eq!(location, Location::Byte(header as u64 + 4))
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn ply_bad_index_names_line() {
        let src = "ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n0 0 0\n1 0 0\n0 1 0\n3 0 1 7\n";
        match parse_mesh(src.as_bytes(), MeshFormat::Ply, p()) {
            Err(Error::MeshParse { location, .. }) => assert_eq!(location, Location::Line(13)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn obj_one_based_and_relative_indices() {
        let src = "# tri\nv 0 0 0\nv 1 0 0\nv 0 1 0\nvn 0 0 1\nf 1 2 3\nf -3/1/1 -2//1 -1\n";
        let m = parse_mesh(src.as_bytes(), MeshFormat::Obj, p()).unwrap();
        assert_eq!(m.triangles(), &[[0, 1, 2], [0, 1, 2]]);
    }

    #[test]
    fn obj_errors() {
        let zero = parse_mesh(b"v 0 0 0\nv 1 0 0\nv 0 1 0\nf 0 1 2\n", MeshFormat::Obj, p());
        assert!(matches!(
            zero,
            Err(Error::MeshParse {
                location: Location::Line(4),
                ..
            })
        ));
        let bad = parse_mesh(b"v 0 zero 0\n", MeshFormat::Obj, p());
        assert!(matches!(
            bad,
            Err(Error::MeshParse {
                location: Location::Line(1),
                ..
            })
        ));
        let empty = parse_mesh(b"v 0 0 0\n", MeshFormat::Obj, p());
        assert!(matches!(empty, Err(Error::EmptyMesh(_))));
    }

    #[test]
    fn stl_truncation() {
        let mut data = vec![0u8; 80];
        data.extend_from_slice(&2u32.to_le_bytes());
        data.extend_from_slice(&[0u8; 50]);
        match parse_mesh(&data, MeshFormat::Stl, p()) {
            Err(Error::MeshParse { location, .. }) => assert_eq!(location, Location::Byte(134)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn format_from_extension() {
        assert_eq!(MeshFormat::from_path(Path::new("a/b.PLY")), Some(MeshFormat::Ply));
        assert_eq!(MeshFormat::from_path(Path::new("b.obj")), Some(MeshFormat::Obj));
        assert_eq!(MeshFormat::from_path(Path::new("b.stl")), Some(MeshFormat::Stl));
        assert_eq!(MeshFormat::from_path(Path::new("b.txt")), None);
    }

    #[test]
    fn written_mesh_reads_back() {
        let m = TriangleMesh::cuboid(Vec3::new(-0.1, 0.2, 0.3), Vec3::new(1.0 / 3.0, 2.5, 7.0));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("box.ply");
        write_ply_mesh(&m, &path).unwrap();
        assert_eq!(load_mesh(&path, MeshFormat::Ply).unwrap(), m);
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_mesh(Path::new("/nonexistent/x.ply"), MeshFormat::Ply).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
        assert!(err.to_string().contains("/nonexistent/x.ply"));
    }
}
