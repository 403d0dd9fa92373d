//! Wavefront OBJ and PLY mesh reading/writing.
//!
//! OBJ: `v` and `f` records with 1-based (or negative, relative) indices;
//! polygons are fan-triangulated and texture/normal references ignored.
//! PLY: ASCII and binary little-endian input, binary little-endian output.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::Point3;

use super::mesh::TriangleMesh;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Obj,
    Ply,
}

impl MeshFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        match path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .as_deref()
        {
            Some("obj") => Ok(MeshFormat::Obj),
            Some("ply") => Ok(MeshFormat::Ply),
            _ => Err(Error::InvalidInput(format!(
                "unsupported mesh extension: {}",
                path.display()
            ))),
        }
    }
}

/// What happened while loading a mesh.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub vertices: usize,
    pub triangles: usize,
    pub degenerate_dropped: usize,
}

/// Loads an OBJ or PLY file and drops degenerate faces.
pub fn load_mesh(path: impl AsRef<Path>) -> Result<(TriangleMesh, LoadReport)> {
    let path = path.as_ref();
    let mut mesh = load_raw(path)?;
    if mesh.triangles.is_empty() {
        return Err(Error::InvalidInput(format!(
            "{} contains no faces",
            path.display()
        )));
    }
    mesh.validate()?;
    let dropped = mesh.drop_degenerate();
    if mesh.triangles.is_empty() {
        return Err(Error::InvalidInput(format!(
            "{} contains only degenerate faces",
            path.display()
        )));
    }
    let report = LoadReport {
        vertices: mesh.vertices.len(),
        triangles: mesh.triangles.len(),
        degenerate_dropped: dropped,
    };
    Ok((mesh, report))
}

/// Loads vertices and faces without any filtering. Files with zero faces are allowed
/// (useful for point clouds stored as PLY/OBJ).
pub fn load_raw(path: &Path) -> Result<TriangleMesh> {
    let format = MeshFormat::from_path(path)?;
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    match format {
        MeshFormat::Obj => read_obj(&mut reader, path),
        MeshFormat::Ply => read_ply(&mut reader, path),
    }
}

pub fn save_mesh(mesh: &TriangleMesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    match MeshFormat::from_path(path)? {
        MeshFormat::Obj => write_obj(mesh, &mut w),
        MeshFormat::Ply => write_ply(mesh, &mut w),
    }
    .and_then(|_| w.flush())
    .map_err(|e| Error::io(path, e))
}

fn read_obj(reader: &mut impl BufRead, path: &Path) -> Result<TriangleMesh> {
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    let mut line = String::new();
    let mut lineno = 0;
    loop {
        line.clear();
        let n = reader
            .read_line(&mut line)
            .map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        lineno += 1;
        let content = line.split('#').next().unwrap_or("").trim();
        let mut tokens = content.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let mut xyz = [0.0; 3];
                for c in xyz.iter_mut() {
                    let tok = tokens
                        .next()
                        .ok_or_else(|| Error::format(path, lineno, "vertex needs 3 coordinates"))?;
                    *c = tok.parse().map_err(|_| {
                        Error::format(path, lineno, format!("bad coordinate '{tok}'"))
                    })?;
                }
                vertices.push(Point3::new(xyz[0], xyz[1], xyz[2]));
            }
            Some("f") => {
                let mut poly = Vec::with_capacity(4);
                for tok in tokens {
                    let idx_str = tok.split('/').next().unwrap_or("");
                    let idx: i64 = idx_str.parse().map_err(|_| {
                        Error::format(path, lineno, format!("bad face index '{tok}'"))
                    })?;
                    let resolved = if idx > 0 {
                        idx - 1
                    } else if idx < 0 {
                        vertices.len() as i64 + idx
                    } else {
                        -1
                    };
                    if resolved < 0 || resolved >= vertices.len() as i64 {
                        return Err(Error::format(
                            path,
                            lineno,
                            format!("face index {idx} out of range"),
                        ));
                    }
                    poly.push(resolved as u32);
                }
                if poly.len() < 3 {
                    return Err(Error::format(
                        path,
                        lineno,
                        "face needs at least 3 vertices",
                    ));
                }
                for k in 1..poly.len() - 1 {
                    triangles.push([poly[0], poly[k], poly[k + 1]]);
                }
            }
            _ => {}
        }
    }
    Ok(TriangleMesh::new(vertices, triangles))
}

pub fn write_obj(mesh: &TriangleMesh, w: &mut impl Write) -> std::io::Result<()> {
    for v in &mesh.vertices {
        writeln!(w, "v {} {} {}", v.x, v.y, v.z)?;
    }
    for t in &mesh.triangles {
        writeln!(w, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1)?;
    }
    Ok(())
}

/// Binary little-endian PLY with float vertices and `uchar`/`int` face lists.
pub fn write_ply(mesh: &TriangleMesh, w: &mut impl Write) -> std::io::Result<()> {
    write!(
        w,
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\nelement face {}\nproperty list uchar int vertex_indices\nend_header\n",
        mesh.vertices.len(),
        mesh.triangles.len()
    )?;
    for v in &mesh.vertices {
        for c in [v.x, v.y, v.z] {
            w.write_all(&(c as f32).to_le_bytes())?;
        }
    }
    for t in &mesh.triangles {
        w.write_all(&[3u8])?;
        for &i in t {
            w.write_all(&(i as i32).to_le_bytes())?;
        }
    }
    Ok(())
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

    fn decode(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar {
        name: String,
        ty: Scalar,
    },
    List {
        name: String,
        count: Scalar,
        item: Scalar,
    },
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

fn read_ply(reader: &mut impl BufRead, path: &Path) -> Result<TriangleMesh> {
    let mut line = String::new();
    let mut lineno = 0;
    let mut next_line = |reader: &mut dyn BufRead, line: &mut String| -> Result<usize> {
        line.clear();
        let n = reader.read_line(line).map_err(|e| Error::io(path, e))?;
        lineno += 1;
        if n == 0 {
            return Err(Error::format(path, lineno, "unexpected end of PLY header"));
        }
        Ok(lineno)
    };
    next_line(reader, &mut line)?;
    if line.trim() != "ply" {
        return Err(Error::format(path, 1, "missing 'ply' magic"));
    }
    let mut binary = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        let ln = next_line(reader, &mut line)?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["format", "ascii", _] => binary = Some(false),
            ["format", "binary_little_endian", _] => binary = Some(true),
            ["format", other, _] => {
                return Err(Error::format(
                    path,
                    ln,
                    format!("unsupported PLY format '{other}'"),
                ))
            }
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count
                    .parse()
                    .map_err(|_| Error::format(path, ln, "bad element count"))?,
                properties: Vec::new(),
            }),
            ["property", "list", count, item, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| Error::format(path, ln, "property before element"))?;
                let (count, item) = Scalar::parse(count)
                    .zip(Scalar::parse(item))
                    .ok_or_else(|| Error::format(path, ln, "bad list property types"))?;
                el.properties.push(Property::List {
                    name: name.to_string(),
                    count,
                    item,
                });
            }
            ["property", ty, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| Error::format(path, ln, "property before element"))?;
                let ty = Scalar::parse(ty)
                    .ok_or_else(|| Error::format(path, ln, format!("bad property type '{ty}'")))?;
                el.properties.push(Property::Scalar {
                    name: name.to_string(),
                    ty,
                });
            }
            ["end_header"] => break,
            ["comment", ..] | ["obj_info", ..] | [] => {}
            _ => {
                return Err(Error::format(
                    path,
                    ln,
                    format!("unrecognized header line '{}'", line.trim()),
                ))
            }
        }
    }
    let binary = binary.ok_or_else(|| Error::format(path, lineno, "missing format line"))?;

    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    let mut body_line = lineno;
    let mut ascii_tokens: Vec<String> = Vec::new();
    let mut ascii_pos = 0;

    for el in &elements {
        for _ in 0..el.count {
            let mut xyz = [0.0f64; 3];
            let mut face: Vec<u32> = Vec::new();
            if !binary {
                ascii_tokens.clear();
                ascii_pos = 0;
                line.clear();
                let n = reader
                    .read_line(&mut line)
                    .map_err(|e| Error::io(path, e))?;
                body_line += 1;
                if n == 0 {
                    return Err(Error::format(path, body_line, "unexpected end of PLY body"));
                }
                ascii_tokens.extend(line.split_whitespace().map(str::to_string));
            }
            let mut read_scalar = |ty: Scalar, reader: &mut dyn BufRead| -> Result<f64> {
                if binary {
                    let mut buf = [0u8; 8];
                    reader.read_exact(&mut buf[..ty.size()]).map_err(|_| {
                        Error::format(
                            path,
                            body_line,
                            format!("truncated binary data in element '{}'", el.name),
                        )
                    })?;
                    Ok(ty.decode(&buf))
                } else {
                    let tok = ascii_tokens
                        .get(ascii_pos)
                        .ok_or_else(|| Error::format(path, body_line, "too few values"))?;
                    ascii_pos += 1;
                    tok.parse::<f64>()
                        .map_err(|_| Error::format(path, body_line, format!("bad value '{tok}'")))
                }
            };
            for prop in &el.properties {
                match prop {
                    Property::Scalar { name, ty } => {
                        let val = read_scalar(*ty, reader)?;
                        if el.name == "vertex" {
                            match name.as_str() {
                                "x" => xyz[0] = val,
                                "y" => xyz[1] = val,
                                "z" => xyz[2] = val,
                                _ => {}
                            }
                        }
                    }
                    Property::List { name, count, item } => {
                        let n = read_scalar(*count, reader)? as usize;
                        let mut items = Vec::with_capacity(n);
                        for _ in 0..n {
                            items.push(read_scalar(*item, reader)?);
                        }
                        if el.name == "face" && (name == "vertex_indices" || name == "vertex_index")
                        {
                            face = items.into_iter().map(|v| v as u32).collect();
                        }
                    }
                }
            }
            if el.name == "vertex" {
                vertices.push(Point3::new(xyz[0], xyz[1], xyz[2]));
            } else if el.name == "face" {
                if face.len() < 3 {
                    return Err(Error::format(
                        path,
                        body_line,
                        "face needs at least 3 vertices",
                    ));
                }
                for k in 1..face.len() - 1 {
                    triangles.push([face[0], face[k], face[k + 1]]);
                }
            }
        }
    }
    let mesh = TriangleMesh::new(vertices, triangles);
    mesh.validate()
        .map_err(|e| Error::format(path, body_line, e.to_string()))?;
    Ok(mesh)
}

/// Reads every byte of `path`.
pub(crate) fn read_all(path: &Path) -> Result<Vec<u8>> {
    let mut f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut buf = Vec::new();
    f.read_to_end(&mut buf).map_err(|e| Error::io(path, e))?;
    Ok(buf)
}
