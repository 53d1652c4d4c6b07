//! Point-cloud and mesh file formats: `.xyz`, `.obj`, and `.ply` (ascii or
//! binary little-endian).
//!
//! Coordinates are written as `f64` (`double` properties in PLY, shortest
//! round-tripping decimal in text formats), so a write/read cycle is
//! bit-exact and ascii and binary PLY of the same data load identically.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::mesh::TriangleMesh;
use crate::sampling::PointCloud;
use crate::vec3::{vec3, Vec3};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlyEncoding {
    Ascii,
    BinaryLittleEndian,
}

fn extension(path: &Path) -> Result<String> {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .ok_or_else(|| {
            Error::InvalidConfig(format!("{}: no recognizable file extension", path.display()))
        })
}

/// Load a point cloud, dispatching on the file extension. For `.obj` and
/// `.ply` the vertices become the cloud; faces are ignored here (use
/// [`read_mesh`] + surface resampling to turn a mesh into a cloud).
pub fn read_cloud(path: &Path) -> Result<PointCloud> {
    match extension(path)?.as_str() {
        "xyz" => read_xyz(path),
        "obj" => {
            let (cloud, _) = read_obj(path)?;
            Ok(cloud)
        }
        "ply" => {
            let (cloud, _) = read_ply(path)?;
            Ok(cloud)
        }
        other => Err(Error::InvalidConfig(format!(
            "unsupported point-cloud format .{other} (expected .xyz, .obj, or .ply)"
        ))),
    }
}

/// Write a cloud in the format implied by the extension (`.ply` → ascii).
pub fn write_cloud(path: &Path, cloud: &PointCloud) -> Result<()> {
    match extension(path)?.as_str() {
        "xyz" => write_xyz(path, cloud),
        "obj" => write_obj_cloud(path, cloud),
        "ply" => write_cloud_ply(path, cloud, PlyEncoding::Ascii),
        other => Err(Error::InvalidConfig(format!(
            "unsupported point-cloud format .{other} (expected .xyz, .obj, or .ply)"
        ))),
    }
}

/// Load a triangle mesh from `.obj` or `.ply`.
pub fn read_mesh(path: &Path) -> Result<TriangleMesh> {
    let (cloud, triangles) = match extension(path)?.as_str() {
        "obj" => read_obj(path)?,
        "ply" => read_ply(path)?,
        other => {
            return Err(Error::InvalidConfig(format!(
                "unsupported mesh format .{other} (expected .obj or .ply)"
            )))
        }
    };
    TriangleMesh::new(cloud.points, triangles)
}

/// Write a mesh in the format implied by the extension (`.ply` → ascii).
pub fn write_mesh(path: &Path, mesh: &TriangleMesh) -> Result<()> {
    match extension(path)?.as_str() {
        "obj" => write_mesh_obj(path, mesh),
        "ply" => write_mesh_ply(path, mesh, PlyEncoding::Ascii, None),
        other => Err(Error::InvalidConfig(format!(
            "unsupported mesh format .{other} (expected .obj or .ply)"
        ))),
    }
}

// ---------------------------------------------------------------------------
// xyz

fn parse_coord(path: &Path, line: usize, tok: &str) -> Result<f64> {
    let v: f64 = tok
        .parse()
        .map_err(|_| Error::parse(path, line, format!("expected a number, found {tok:?}")))?;
    if !v.is_finite() {
        return Err(Error::parse(path, line, format!("non-finite coordinate {tok}")));
    }
    Ok(v)
}

/// Whitespace-separated floats, 3 per line (`x y z`) or 6 (`x y z nx ny nz`);
/// the first data line fixes which. Blank lines and `#` comments are skipped.
pub fn read_xyz(path: &Path) -> Result<PointCloud> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut points = Vec::new();
    let mut normals = Vec::new();
    let mut width: Option<usize> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let toks: Vec<&str> = trimmed.split_whitespace().collect();
        let expected = *width.get_or_insert(toks.len());
        if toks.len() != expected || !(expected == 3 || expected == 6) {
            return Err(Error::parse(
                path,
                line,
                format!("expected {expected} values per line, found {}", toks.len()),
            ));
        }
        let mut vals = [0.0; 6];
        for (k, tok) in toks.iter().enumerate() {
            vals[k] = parse_coord(path, line, tok)?;
        }
        points.push(vec3(vals[0], vals[1], vals[2]));
        if expected == 6 {
            normals.push(vec3(vals[3], vals[4], vals[5]));
        }
    }
    PointCloud::new(points, (width == Some(6)).then_some(normals))
}

pub fn write_xyz(path: &Path, cloud: &PointCloud) -> Result<()> {
    let mut out = String::new();
    for (i, p) in cloud.points.iter().enumerate() {
        out.push_str(&format!("{} {} {}", p.x, p.y, p.z));
        if let Some(n) = &cloud.normals {
            let n = n[i];
            out.push_str(&format!(" {} {} {}", n.x, n.y, n.z));
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// obj

/// `v` and `f` records; everything else (`vn`, `vt`, groups, materials,
/// comments) is skipped. Polygonal faces are fan-triangulated. Negative
/// face indices count back from the most recent vertex.
pub fn read_obj(path: &Path) -> Result<(PointCloud, Vec<[u32; 3]>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut points: Vec<Vec3> = Vec::new();
    let mut triangles = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let mut toks = raw.split_whitespace();
        match toks.next() {
            Some("v") => {
                let mut c = [0.0; 3];
                for slot in &mut c {
                    let tok = toks.next().ok_or_else(|| {
                        Error::parse(path, line, "vertex needs 3 coordinates")
                    })?;
                    *slot = parse_coord(path, line, tok)?;
                }
                points.push(vec3(c[0], c[1], c[2]));
            }
            Some("f") => {
                let mut corners: Vec<u32> = Vec::new();
                for tok in toks {
                    let first = tok.split('/').next().unwrap_or("");
                    let idx: i64 = first.parse().map_err(|_| {
                        Error::parse(path, line, format!("bad face index {tok:?}"))
                    })?;
                    let resolved = if idx > 0 {
                        idx - 1
                    } else if idx < 0 {
                        points.len() as i64 + idx
                    } else {
                        return Err(Error::parse(path, line, "face index 0 is not valid"));
                    };
                    if resolved < 0 || resolved >= points.len() as i64 {
                        return Err(Error::parse(
                            path,
                            line,
                            format!("face index {idx} out of range ({} vertices so far)", points.len()),
                        ));
                    }
                    corners.push(resolved as u32);
                }
                if corners.len() < 3 {
                    return Err(Error::parse(path, line, "face needs at least 3 vertices"));
                }
                for k in 1..corners.len() - 1 {
                    triangles.push([corners[0], corners[k], corners[k + 1]]);
                }
            }
            _ => {}
        }
    }
    Ok((PointCloud::new(points, None)?, triangles))
}

pub fn write_obj_cloud(path: &Path, cloud: &PointCloud) -> Result<()> {
    let mut out = String::new();
    for p in &cloud.points {
        out.push_str(&format!("v {} {} {}\n", p.x, p.y, p.z));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn write_mesh_obj(path: &Path, mesh: &TriangleMesh) -> Result<()> {
    let mut out = String::new();
    for v in &mesh.vertices {
        out.push_str(&format!("v {} {} {}\n", v.x, v.y, v.z));
    }
    for t in &mesh.triangles {
        out.push_str(&format!("f {} {} {}\n", t[0] + 1, t[1] + 1, t[2] + 1));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// ply

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum ScalarType {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl ScalarType {
    fn parse(tok: &str) -> Option<ScalarType> {
        Some(match tok {
            "char" | "int8" => ScalarType::I8,
            "uchar" | "uint8" => ScalarType::U8,
            "short" | "int16" => ScalarType::I16,
            "ushort" | "uint16" => ScalarType::U16,
            "int" | "int32" => ScalarType::I32,
            "uint" | "uint32" => ScalarType::U32,
            "float" | "float32" => ScalarType::F32,
            "double" | "float64" => ScalarType::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            ScalarType::I8 | ScalarType::U8 => 1,
            ScalarType::I16 | ScalarType::U16 => 2,
            ScalarType::I32 | ScalarType::U32 | ScalarType::F32 => 4,
            ScalarType::F64 => 8,
        }
    }
}

#[derive(Clone, Debug)]
enum Property {
    Scalar(ScalarType, String),
    List(ScalarType, ScalarType, String),
}

#[derive(Clone, Debug)]
struct PlyElement {
    name: String,
    count: usize,
    props: Vec<Property>,
}

struct PlyHeader {
    encoding: PlyEncoding,
    elements: Vec<PlyElement>,
    /// Number of header lines, so body line numbers stay file-accurate.
    lines: usize,
}

fn parse_ply_header(path: &Path, data: &[u8]) -> Result<(PlyHeader, usize)> {
    let mut pos = 0;
    let mut line_no = 0;
    let next_line = |pos: &mut usize, line_no: &mut usize| -> Result<String> {
        if *pos >= data.len() {
            return Err(Error::parse(path, *line_no, "unexpected end of header"));
        }
        let end = data[*pos..]
            .iter()
            .position(|&b| b == b'\n')
            .map(|k| *pos + k)
            .unwrap_or(data.len());
        let raw = &data[*pos..end];
        *pos = (end + 1).min(data.len());
        *line_no += 1;
        let s = std::str::from_utf8(raw)
            .map_err(|_| Error::parse(path, *line_no, "header is not valid text"))?;
        Ok(s.trim_end_matches('\r').to_string())
    };

    if next_line(&mut pos, &mut line_no)?.trim() != "ply" {
        return Err(Error::parse(path, 1, "missing ply magic line"));
    }

    let mut encoding = None;
    let mut elements: Vec<PlyElement> = Vec::new();
    loop {
        let line = next_line(&mut pos, &mut line_no)?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.first().copied() {
            Some("comment") | Some("obj_info") | None => {}
            Some("format") => {
                encoding = Some(match toks.get(1).copied() {
                    Some("ascii") => PlyEncoding::Ascii,
                    Some("binary_little_endian") => PlyEncoding::BinaryLittleEndian,
                    Some("binary_big_endian") => {
                        return Err(Error::parse(
                            path,
                            line_no,
                            "big-endian ply is not supported",
                        ))
                    }
                    other => {
                        return Err(Error::parse(
                            path,
                            line_no,
                            format!("unknown ply format {other:?}"),
                        ))
                    }
                });
            }
            Some("element") => {
                let name = toks
                    .get(1)
                    .ok_or_else(|| Error::parse(path, line_no, "element needs a name"))?;
                let count: usize = toks
                    .get(2)
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| Error::parse(path, line_no, "element needs a count"))?;
                elements.push(PlyElement {
                    name: name.to_string(),
                    count,
                    props: Vec::new(),
                });
            }
            Some("property") => {
                let el = elements.last_mut().ok_or_else(|| {
                    Error::parse(path, line_no, "property before any element")
                })?;
                let prop = if toks.get(1) == Some(&"list") {
                    let (c, i, name) = match (toks.get(2), toks.get(3), toks.get(4)) {
                        (Some(c), Some(i), Some(name)) => (c, i, name),
                        _ => {
                            return Err(Error::parse(
                                path,
                                line_no,
                                "list property needs count type, item type, and name",
                            ))
                        }
                    };
                    let ct = ScalarType::parse(c).ok_or_else(|| {
                        Error::parse(path, line_no, format!("unknown type {c}"))
                    })?;
                    let it = ScalarType::parse(i).ok_or_else(|| {
                        Error::parse(path, line_no, format!("unknown type {i}"))
                    })?;
                    Property::List(ct, it, name.to_string())
                } else {
                    let (t, name) = match (toks.get(1), toks.get(2)) {
                        (Some(t), Some(name)) => (t, name),
                        _ => {
                            return Err(Error::parse(
                                path,
                                line_no,
                                "property needs a type and a name",
                            ))
                        }
                    };
                    let ty = ScalarType::parse(t).ok_or_else(|| {
                        Error::parse(path, line_no, format!("unknown type {t}"))
                    })?;
                    Property::Scalar(ty, name.to_string())
                };
                el.props.push(prop);
            }
            Some("end_header") => break,
            Some(other) => {
                return Err(Error::parse(
                    path,
                    line_no,
                    format!("unknown header keyword {other:?}"),
                ))
            }
        }
    }
    let encoding =
        encoding.ok_or_else(|| Error::parse(path, line_no, "header has no format line"))?;
    Ok((
        PlyHeader {
            encoding,
            elements,
            lines: line_no,
        },
        pos,
    ))
}

/// A value source for one element row: either the whitespace tokens of an
/// ascii line or a typed cursor into the binary body.
enum RowReader<'s, 'c> {
    Ascii {
        toks: std::str::SplitWhitespace<'s>,
        line: usize,
    },
    Binary {
        cursor: &'c mut &'s [u8],
    },
}

fn row_value(path: &Path, row: &mut RowReader<'_, '_>, ty: ScalarType) -> Result<f64> {
    match row {
        RowReader::Ascii { toks, line } => {
            let tok = toks
                .next()
                .ok_or_else(|| Error::parse(path, *line, "row has too few values"))?;
            tok.parse()
                .map_err(|_| Error::parse(path, *line, format!("expected a number, found {tok:?}")))
        }
        RowReader::Binary { cursor } => {
            let n = ty.size();
            let bytes: &[u8] = **cursor;
            if bytes.len() < n {
                return Err(Error::parse(path, 0, "binary body truncated"));
            }
            let (head, rest) = bytes.split_at(n);
            **cursor = rest;
            Ok(match ty {
                ScalarType::I8 => head[0] as i8 as f64,
                ScalarType::U8 => head[0] as f64,
                ScalarType::I16 => i16::from_le_bytes([head[0], head[1]]) as f64,
                ScalarType::U16 => u16::from_le_bytes([head[0], head[1]]) as f64,
                ScalarType::I32 => {
                    i32::from_le_bytes([head[0], head[1], head[2], head[3]]) as f64
                }
                ScalarType::U32 => {
                    u32::from_le_bytes([head[0], head[1], head[2], head[3]]) as f64
                }
                ScalarType::F32 => {
                    f32::from_le_bytes([head[0], head[1], head[2], head[3]]) as f64
                }
                ScalarType::F64 => f64::from_le_bytes(head.try_into().unwrap()),
            })
        }
    }
}

fn row_finish(path: &Path, row: &mut RowReader<'_, '_>) -> Result<()> {
    if let RowReader::Ascii { toks, line } = row {
        if toks.next().is_some() {
            return Err(Error::parse(path, *line, "row has trailing values"));
        }
    }
    Ok(())
}

/// Parse a `.ply` file into vertices (+ optional normals) and fan-
/// triangulated faces. Unknown elements and properties are skipped;
/// vertex properties may be any scalar type.
pub fn read_ply(path: &Path) -> Result<(PointCloud, Vec<[u32; 3]>)> {
    let data = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (header, body_start) = parse_ply_header(path, &data)?;
    let body = &data[body_start..];

    let mut ascii_lines = match header.encoding {
        PlyEncoding::Ascii => {
            let text = std::str::from_utf8(body).map_err(|_| {
                Error::parse(path, header.lines, "ascii body is not valid text")
            })?;
            Some(text.lines())
        }
        PlyEncoding::BinaryLittleEndian => None,
    };
    let mut cursor: &[u8] = body;
    let mut line_no = header.lines;

    let mut points: Vec<Vec3> = Vec::new();
    let mut normals: Vec<Vec3> = Vec::new();
    let mut has_normals = false;
    let mut triangles: Vec<[u32; 3]> = Vec::new();

    for element in &header.elements {
        let coord_names = ["x", "y", "z", "nx", "ny", "nz"];
        let is_vertex = element.name == "vertex";
        let is_face = element.name == "face";
        if is_vertex {
            for want in ["x", "y", "z"] {
                let found = element.props.iter().any(
                    |p| matches!(p, Property::Scalar(_, name) if name == want),
                );
                if !found {
                    return Err(Error::parse(
                        path,
                        header.lines,
                        format!("vertex element has no {want} property"),
                    ));
                }
            }
            has_normals = ["nx", "ny", "nz"].iter().all(|want| {
                element
                    .props
                    .iter()
                    .any(|p| matches!(p, Property::Scalar(_, name) if name == *want))
            });
        }

        for rowi in 0..element.count {
            let mut row = match &mut ascii_lines {
                Some(lines) => {
                    let text = lines.next().ok_or_else(|| {
                        Error::parse(path, line_no, format!("missing {} rows", element.name))
                    })?;
                    line_no += 1;
                    RowReader::Ascii {
                        toks: text.split_whitespace(),
                        line: line_no,
                    }
                }
                None => RowReader::Binary {
                    cursor: &mut cursor,
                },
            };

            let mut coords = [0.0; 6];
            for prop in &element.props {
                match prop {
                    Property::Scalar(ty, name) => {
                        let v = row_value(path, &mut row, *ty)?;
                        if is_vertex {
                            if let Some(k) = coord_names.iter().position(|c| c == name) {
                                if !v.is_finite() {
                                    return Err(Error::parse(
                                        path,
                                        if line_no > header.lines { line_no } else { 0 },
                                        format!("non-finite {name} in vertex {rowi}"),
                                    ));
                                }
                                coords[k] = v;
                            }
                        }
                    }
                    Property::List(ct, it, name) => {
                        let len = row_value(path, &mut row, *ct)?;
                        if !(len >= 0.0 && len.fract() == 0.0) {
                            return Err(Error::parse(
                                path,
                                line_no,
                                format!("bad list length {len} for {name}"),
                            ));
                        }
                        let len = len as usize;
                        let is_indices =
                            is_face && (name == "vertex_indices" || name == "vertex_index");
                        if is_indices {
                            if len < 3 {
                                return Err(Error::parse(
                                    path,
                                    line_no,
                                    format!("face {rowi} has {len} vertices"),
                                ));
                            }
                            let mut corners = Vec::with_capacity(len);
                            for _ in 0..len {
                                let idx = row_value(path, &mut row, *it)?;
                                if !(idx >= 0.0 && idx.fract() == 0.0
                                    && (idx as usize) < points.len())
                                {
                                    return Err(Error::parse(
                                        path,
                                        line_no,
                                        format!(
                                            "face index {idx} out of range ({} vertices)",
                                            points.len()
                                        ),
                                    ));
                                }
                                corners.push(idx as u32);
                            }
                            for k in 1..corners.len() - 1 {
                                triangles.push([corners[0], corners[k], corners[k + 1]]);
                            }
                        } else {
                            for _ in 0..len {
                                row_value(path, &mut row, *it)?;
                            }
                        }
                    }
                }
            }
            row_finish(path, &mut row)?;

            if is_vertex {
                points.push(vec3(coords[0], coords[1], coords[2]));
                if has_normals {
                    normals.push(vec3(coords[3], coords[4], coords[5]));
                }
            }
        }
    }

    Ok((
        PointCloud::new(points, has_normals.then_some(normals))?,
        triangles,
    ))
}

fn ply_header_string(
    encoding: PlyEncoding,
    n_vertices: usize,
    vertex_extras: &[&str],
    n_faces: Option<usize>,
) -> String {
    let mut h = String::from("ply\n");
    h.push_str(match encoding {
        PlyEncoding::Ascii => "format ascii 1.0\n",
        PlyEncoding::BinaryLittleEndian => "format binary_little_endian 1.0\n",
    });
    h.push_str(&format!("element vertex {n_vertices}\n"));
    for name in ["x", "y", "z"].iter().chain(vertex_extras) {
        h.push_str(&format!("property double {name}\n"));
    }
    if let Some(n) = n_faces {
        h.push_str(&format!("element face {n}\n"));
        h.push_str("property list uchar uint vertex_indices\n");
    }
    h.push_str("end_header\n");
    h
}

fn write_ply_rows(
    out: &mut Vec<u8>,
    encoding: PlyEncoding,
    rows: impl Iterator<Item = Vec<f64>>,
) {
    for row in rows {
        match encoding {
            PlyEncoding::Ascii => {
                let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                out.extend_from_slice(cells.join(" ").as_bytes());
                out.push(b'\n');
            }
            PlyEncoding::BinaryLittleEndian => {
                for v in row {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
    }
}

pub fn write_cloud_ply(path: &Path, cloud: &PointCloud, encoding: PlyEncoding) -> Result<()> {
    let extras: &[&str] = if cloud.normals.is_some() {
        &["nx", "ny", "nz"]
    } else {
        &[]
    };
    let mut out = ply_header_string(encoding, cloud.points.len(), extras, None).into_bytes();
    write_ply_rows(
        &mut out,
        encoding,
        cloud.points.iter().enumerate().map(|(i, p)| {
            let mut row = vec![p.x, p.y, p.z];
            if let Some(n) = &cloud.normals {
                row.extend_from_slice(&n[i].to_array());
            }
            row
        }),
    );
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Write a mesh as `.ply`, optionally attaching one named scalar per vertex
/// (e.g. a distance-error channel for external color mapping).
pub fn write_mesh_ply(
    path: &Path,
    mesh: &TriangleMesh,
    encoding: PlyEncoding,
    vertex_scalar: Option<(&str, &[f64])>,
) -> Result<()> {
    if let Some((name, vals)) = vertex_scalar {
        if vals.len() != mesh.vertices.len() {
            return Err(Error::InvalidConfig(format!(
                "{} values of {name:?} for {} vertices",
                vals.len(),
                mesh.vertices.len()
            )));
        }
    }
    let extras: Vec<&str> = vertex_scalar.iter().map(|(n, _)| *n).collect();
    let mut out = ply_header_string(
        encoding,
        mesh.vertices.len(),
        &extras,
        Some(mesh.triangles.len()),
    )
    .into_bytes();
    write_ply_rows(
        &mut out,
        encoding,
        mesh.vertices.iter().enumerate().map(|(i, v)| {
            let mut row = vec![v.x, v.y, v.z];
            if let Some((_, vals)) = vertex_scalar {
                row.push(vals[i]);
            }
            row
        }),
    );
    for t in &mesh.triangles {
        match encoding {
            PlyEncoding::Ascii => {
                out.extend_from_slice(format!("3 {} {} {}\n", t[0], t[1], t[2]).as_bytes());
            }
            PlyEncoding::BinaryLittleEndian => {
                out.push(3);
                for &idx in t {
                    out.extend_from_slice(&idx.to_le_bytes());
                }
            }
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
