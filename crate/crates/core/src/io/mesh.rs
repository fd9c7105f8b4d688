//! OBJ (ASCII) and PLY (binary little-endian, ASCII read) meshes and point sets.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Point3;

use crate::error::{Error, Result};
use crate::labels::{ReconLabel, RECON_CATEGORIES};
use crate::mesh::TriMesh;

const CATEGORY_TAG: &str = "category:";

fn category_name(c: ReconLabel) -> Result<&'static str> {
    RECON_CATEGORIES
        .get(c.0 as usize)
        .copied()
        .ok_or_else(|| Error::invalid(format!("unknown reconstruction class {}", c.0)))
}

fn category_from(what: &str, name: &str) -> Result<ReconLabel> {
    RECON_CATEGORIES
        .iter()
        .position(|c| *c == name)
        .map(|i| ReconLabel(i as u16))
        .ok_or_else(|| Error::load(what, format!("unknown category '{name}'")))
}

pub fn obj_string(mesh: &TriMesh) -> Result<String> {
    let mut s = String::new();
    if let Some(c) = mesh.category {
        writeln!(s, "# {CATEGORY_TAG} {}", category_name(c)?).unwrap();
    }
    for v in &mesh.vertices {
        writeln!(s, "v {} {} {}", v.x, v.y, v.z).unwrap();
    }
    for t in &mesh.triangles {
        writeln!(s, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1).unwrap();
    }
    Ok(s)
}

pub fn parse_obj(what: &str, text: &str) -> Result<TriMesh> {
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    let mut category = None;
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        let err = |m: String| Error::load(what, format!("line {}: {m}", ln + 1));
        if let Some(rest) = line.strip_prefix('#') {
            if let Some(name) = rest.trim().strip_prefix(CATEGORY_TAG) {
                category = Some(category_from(what, name.trim())?);
            }
            continue;
        }
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let c: Vec<f64> = it
                    .take(3)
                    .map(|t| t.parse::<f64>().map_err(|e| err(format!("bad coordinate '{t}': {e}"))))
                    .collect::<Result<_>>()?;
                if c.len() != 3 {
                    return Err(err("vertex needs 3 coordinates".into()));
                }
                vertices.push(Point3::new(c[0], c[1], c[2]));
            }
            Some("f") => {
                let mut idx = Vec::new();
                for t in it {
                    let head = t.split('/').next().unwrap_or("");
                    let i: i64 = head.parse().map_err(|_| err(format!("bad face index '{t}'")))?;
                    let n = vertices.len() as i64;
                    let r = if i < 0 { n + i } else { i - 1 };
                    if r < 0 || r >= n {
                        return Err(err(format!("face index {i} out of range")));
                    }
                    idx.push(r as u32);
                }
                if idx.len() < 3 {
                    return Err(err("face needs at least 3 vertices".into()));
                }
                for k in 1..idx.len() - 1 {
                    triangles.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    TriMesh::new(vertices, triangles)
        .map(|m| m.with_category(category))
        .map_err(|e| Error::load(what, e.to_string()))
}

fn ply_header(mesh_category: Option<ReconLabel>, nv: usize, nf: Option<usize>) -> Result<String> {
    let mut h = String::from("ply\nformat binary_little_endian 1.0\n");
    if let Some(c) = mesh_category {
        writeln!(h, "comment {CATEGORY_TAG} {}", category_name(c)?).unwrap();
    }
    writeln!(h, "element vertex {nv}").unwrap();
    h.push_str("property double x\nproperty double y\nproperty double z\n");
    if let Some(nf) = nf {
        writeln!(h, "element face {nf}").unwrap();
        h.push_str("property list uchar int vertex_indices\n");
    }
    h.push_str("end_header\n");
    Ok(h)
}

pub fn ply_bytes(mesh: &TriMesh) -> Result<Vec<u8>> {
    let mut out = ply_header(mesh.category, mesh.vertices.len(), Some(mesh.triangles.len()))?.into_bytes();
    for v in &mesh.vertices {
        for c in [v.x, v.y, v.z] {
            out.extend_from_slice(&c.to_le_bytes());
        }
    }
    for t in &mesh.triangles {
        out.push(3);
        for &i in t {
            out.extend_from_slice(&(i as i32).to_le_bytes());
        }
    }
    Ok(out)
}

/// Vertex-only PLY.
pub fn points_ply_bytes(points: &[Point3<f64>]) -> Vec<u8> {
    let mut out = ply_header(None, points.len(), None).unwrap().into_bytes();
    for v in points {
        for c in [v.x, v.y, v.z] {
            out.extend_from_slice(&c.to_le_bytes());
        }
    }
    out
}

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
    fn parse(s: &str) -> Option<Self> {
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
enum Prop {
    Scalar(String, Scalar),
    List(String, Scalar, Scalar),
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Prop>,
}

/// Values cursor over either encoding.
enum Body<'a> {
    Binary(&'a [u8], usize),
    Ascii(std::str::SplitAsciiWhitespace<'a>),
}

impl Body<'_> {
    fn next(&mut self, what: &str, ty: Scalar, ctx: &str) -> Result<f64> {
        match self {
            Body::Binary(data, pos) => {
                let n = ty.size();
                if *pos + n > data.len() {
                    return Err(Error::load(what, format!("payload truncated in {ctx}")));
                }
                let v = ty.read_le(&data[*pos..*pos + n]);
                *pos += n;
                Ok(v)
            }
            Body::Ascii(it) => {
                let t = it.next().ok_or_else(|| Error::load(what, format!("payload truncated in {ctx}")))?;
                t.parse::<f64>().map_err(|_| Error::load(what, format!("bad value '{t}' in {ctx}")))
            }
        }
    }
}

/// Parsed PLY contents: vertices, faces (fan-triangulated), category comment.
/// Vertices, faces (empty for point clouds) and the category comment.
pub type PlyContents = (Vec<Point3<f64>>, Vec<[u32; 3]>, Option<ReconLabel>);

pub fn parse_ply(what: &str, bytes: &[u8]) -> Result<PlyContents> {
    let end = b"end_header";
    let hpos = bytes
        .windows(end.len())
        .position(|w| w == end)
        .ok_or_else(|| Error::load(what, "missing end_header"))?;
    let mut body_start = hpos + end.len();
    if bytes.get(body_start) == Some(&b'\r') {
        body_start += 1;
    }
    if bytes.get(body_start) == Some(&b'\n') {
        body_start += 1;
    }
    let header = std::str::from_utf8(&bytes[..hpos]).map_err(|_| Error::load(what, "header is not UTF-8"))?;
    let mut lines = header.lines();
    if lines.next().map(str::trim) != Some("ply") {
        return Err(Error::load(what, "missing 'ply' magic"));
    }
    let mut format = None;
    let mut category = None;
    let mut elements: Vec<Element> = Vec::new();
    for line in lines {
        let t: Vec<&str> = line.split_whitespace().collect();
        match t.first().copied() {
            Some("format") => format = t.get(1).map(|s| s.to_string()),
            Some("comment") => {
                let rest = line.trim_start().trim_start_matches("comment").trim();
                if let Some(name) = rest.strip_prefix(CATEGORY_TAG) {
                    category = Some(category_from(what, name.trim())?);
                }
            }
            Some("element") => {
                let (name, count) = match (t.get(1), t.get(2).and_then(|c| c.parse().ok())) {
                    (Some(n), Some(c)) => (n.to_string(), c),
                    _ => return Err(Error::load(what, format!("malformed element line '{line}'"))),
                };
                elements.push(Element { name, count, props: Vec::new() });
            }
            Some("property") => {
                let el = elements.last_mut().ok_or_else(|| Error::load(what, "property before element"))?;
                let bad = || Error::load(what, format!("malformed property line '{line}'"));
                if t.get(1) == Some(&"list") {
                    let (c, v, n) = (t.get(2).ok_or_else(bad)?, t.get(3).ok_or_else(bad)?, t.get(4).ok_or_else(bad)?);
                    el.props.push(Prop::List(n.to_string(), Scalar::parse(c).ok_or_else(bad)?, Scalar::parse(v).ok_or_else(bad)?));
                } else {
                    let (ty, n) = (t.get(1).ok_or_else(bad)?, t.get(2).ok_or_else(bad)?);
                    el.props.push(Prop::Scalar(n.to_string(), Scalar::parse(ty).ok_or_else(bad)?));
                }
            }
            Some("obj_info") | None => {}
            Some(other) => return Err(Error::load(what, format!("unexpected header keyword '{other}'"))),
        }
    }
    let data = &bytes[body_start..];
    let mut body = match format.as_deref() {
        Some("binary_little_endian") => Body::Binary(data, 0),
        Some("ascii") => Body::Ascii(
            std::str::from_utf8(data)
                .map_err(|_| Error::load(what, "ascii body is not UTF-8"))?
                .split_ascii_whitespace(),
        ),
        Some(f) => return Err(Error::load(what, format!("unsupported format '{f}'"))),
        None => return Err(Error::load(what, "missing format line")),
    };
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for el in &elements {
        for _ in 0..el.count {
            let mut xyz = [0.0f64; 3];
            let mut face: Vec<u32> = Vec::new();
            for p in &el.props {
                match p {
                    Prop::Scalar(name, ty) => {
                        let v = body.next(what, *ty, &el.name)?;
                        if el.name == "vertex" {
                            match name.as_str() {
                                "x" => xyz[0] = v,
                                "y" => xyz[1] = v,
                                "z" => xyz[2] = v,
                                _ => {}
                            }
                        }
                    }
                    Prop::List(name, cty, vty) => {
                        let n = body.next(what, *cty, &el.name)? as usize;
                        for _ in 0..n {
                            let v = body.next(what, *vty, &el.name)?;
                            if el.name == "face" && (name == "vertex_indices" || name == "vertex_index") {
                                if v < 0.0 {
                                    return Err(Error::load(what, "negative face index"));
                                }
                                face.push(v as u32);
                            }
                        }
                    }
                }
            }
            match el.name.as_str() {
                "vertex" => vertices.push(Point3::new(xyz[0], xyz[1], xyz[2])),
                "face" if face.len() >= 3 => {
                    for k in 1..face.len() - 1 {
                        triangles.push([face[0], face[k], face[k + 1]]);
                    }
                }
                _ => {}
            }
        }
    }
    if let Body::Binary(d, pos) = body {
        if pos != d.len() {
            return Err(Error::load(what, format!("{} trailing bytes after the last element", d.len() - pos)));
        }
    }
    Ok((vertices, triangles, category))
}

pub fn parse_ply_mesh(what: &str, bytes: &[u8]) -> Result<TriMesh> {
    let (v, t, c) = parse_ply(what, bytes)?;
    TriMesh::new(v, t).map(|m| m.with_category(c)).map_err(|e| Error::load(what, e.to_string()))
}

fn is_ply(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("ply"))
}

/// Reads `.obj` or `.ply` by extension.
pub fn load_mesh(path: &Path) -> Result<TriMesh> {
    let what = path.display().to_string();
    let bytes = std::fs::read(path).map_err(|e| Error::load(&what, e.to_string()))?;
    if is_ply(path) {
        parse_ply_mesh(&what, &bytes)
    } else {
        let text = String::from_utf8(bytes).map_err(|_| Error::load(&what, "not UTF-8"))?;
        parse_obj(&what, &text)
    }
}

pub fn save_mesh(mesh: &TriMesh, path: &Path) -> Result<()> {
    let bytes = if is_ply(path) { ply_bytes(mesh)? } else { obj_string(mesh)?.into_bytes() };
    std::fs::write(path, bytes)?;
    Ok(())
}

pub fn load_points(path: &Path) -> Result<Vec<Point3<f64>>> {
    let what = path.display().to_string();
    let bytes = std::fs::read(path).map_err(|e| Error::load(&what, e.to_string()))?;
    if is_ply(path) {
        Ok(parse_ply(&what, &bytes)?.0)
    } else {
        let text = String::from_utf8(bytes).map_err(|_| Error::load(&what, "not UTF-8"))?;
        Ok(parse_obj(&what, &text)?.vertices)
    }
}

pub fn save_points(points: &[Point3<f64>], path: &Path) -> Result<()> {
    std::fs::write(path, points_ply_bytes(points))?;
    Ok(())
}
