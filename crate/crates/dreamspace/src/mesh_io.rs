//! OBJ and STL (ASCII and little-endian binary) reading and writing.
//!
//! Parsers return welded [`TriangleMesh`]es. Malformed input is reported
//! with the byte offset of the offending token.

use std::io::Write;
use std::path::Path;

use dreamspace_core::geometry::{Point3, TriangleMesh};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Obj,
    StlAscii,
    StlBinary,
}

impl MeshFormat {
    /// Picks a format from the extension; STL flavor is sniffed from the bytes.
    pub fn detect(path: &Path, bytes: &[u8]) -> Option<MeshFormat> {
        let ext = path.extension()?.to_str()?.to_ascii_lowercase();
        match ext.as_str() {
            "obj" => Some(MeshFormat::Obj),
            "stl" => Some(if is_binary_stl(bytes) {
                MeshFormat::StlBinary
            } else {
                MeshFormat::StlAscii
            }),
            _ => None,
        }
    }
}

/// A binary STL announces its own size; ASCII files start with `solid`
/// but some binary exporters do too, so the size check wins.
fn is_binary_stl(bytes: &[u8]) -> bool {
    if bytes.len() >= 84 {
        let n = u32::from_le_bytes([bytes[80], bytes[81], bytes[82], bytes[83]]) as usize;
        if bytes.len() == 84 + 50 * n {
            return true;
        }
    }
    let head = &bytes[..bytes.len().min(512)];
    let text = String::from_utf8_lossy(head);
    !text.trim_start().starts_with("solid")
}

pub fn parse_mesh(path: &Path) -> Result<TriangleMesh> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let format = MeshFormat::detect(path, &bytes).ok_or_else(|| Error::UnsupportedFormat(path.to_path_buf()))?;
    parse_mesh_bytes(&bytes, format, path)
}

/// `path` only labels errors.
pub fn parse_mesh_bytes(bytes: &[u8], format: MeshFormat, path: &Path) -> Result<TriangleMesh> {
    let corrupt = |offset: usize, message: String| Error::CorruptMesh {
        path: path.to_path_buf(),
        offset,
        message,
    };
    if bytes.is_empty() {
        return Err(corrupt(0, "empty file".into()));
    }
    let mesh = match format {
        MeshFormat::Obj => parse_obj(bytes),
        MeshFormat::StlAscii => parse_stl_ascii(bytes),
        MeshFormat::StlBinary => parse_stl_binary(bytes),
    }
    .map_err(|(offset, message)| corrupt(offset, message))?;
    mesh.map_err(|e| corrupt(bytes.len(), e.to_string()))
}

type Parsed = std::result::Result<dreamspace_core::Result<TriangleMesh>, (usize, String)>;

/// Whitespace-separated tokens with their byte offsets.
struct Tokens<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Tokens<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Tokens { bytes, pos: 0 }
    }

    fn next_token(&mut self) -> Option<(usize, &'a str)> {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if self.pos >= self.bytes.len() {
            return None;
        }
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        // tokens are split on ASCII whitespace, so the slice stays on char boundaries
        // when the input is UTF-8; anything else is reported as corrupt
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .map(|s| (start, s))
            .or(Some((start, "\u{FFFD}")))
    }
}

fn number(tok: Option<(usize, &str)>, eof: usize) -> std::result::Result<f64, (usize, String)> {
    let (at, s) = tok.ok_or((eof, "unexpected end of file".to_string()))?;
    s.parse::<f64>()
        .map_err(|_| (at, format!("expected a number, found `{s}`")))
}

fn expect(tok: Option<(usize, &str)>, word: &str, eof: usize) -> std::result::Result<(), (usize, String)> {
    match tok {
        Some((_, s)) if s.eq_ignore_ascii_case(word) => Ok(()),
        Some((at, s)) => Err((at, format!("expected `{word}`, found `{s}`"))),
        None => Err((eof, format!("expected `{word}`, found end of file"))),
    }
}

fn parse_stl_ascii(bytes: &[u8]) -> Parsed {
    let eof = bytes.len();
    let mut t = Tokens::new(bytes);
    expect(t.next_token(), "solid", eof)?;
    // the solid name runs to the end of the line
    while t.pos < bytes.len() && bytes[t.pos] != b'\n' {
        t.pos += 1;
    }
    let mut soup: Vec<[Point3; 3]> = Vec::new();
    loop {
        match t.next_token() {
            Some((_, w)) if w.eq_ignore_ascii_case("facet") => {}
            Some((_, w)) if w.eq_ignore_ascii_case("endsolid") => break,
            Some((at, w)) => return Err((at, format!("expected `facet` or `endsolid`, found `{w}`"))),
            None => return Err((eof, "missing `endsolid`".into())),
        }
        expect(t.next_token(), "normal", eof)?;
        for _ in 0..3 {
            number(t.next_token(), eof)?;
        }
        expect(t.next_token(), "outer", eof)?;
        expect(t.next_token(), "loop", eof)?;
        let mut tri = [[0.0; 3]; 3];
        for corner in &mut tri {
            expect(t.next_token(), "vertex", eof)?;
            for c in corner.iter_mut() {
                *c = number(t.next_token(), eof)?;
            }
        }
        expect(t.next_token(), "endloop", eof)?;
        expect(t.next_token(), "endfacet", eof)?;
        soup.push(tri);
    }
    if soup.is_empty() {
        return Err((eof, "no facets".into()));
    }
    Ok(TriangleMesh::from_soup(&soup))
}

fn parse_stl_binary(bytes: &[u8]) -> Parsed {
    if bytes.len() < 84 {
        return Err((bytes.len(), "truncated header".into()));
    }
    let n = u32::from_le_bytes([bytes[80], bytes[81], bytes[82], bytes[83]]) as usize;
    if n == 0 {
        return Err((80, "no facets".into()));
    }
    let need = 84 + 50 * n;
    if bytes.len() < need {
        let complete = (bytes.len() - 84) / 50;
        return Err((84 + 50 * complete, format!("truncated: header announces {n} facets, found {complete}")));
    }
    let f32_at = |at: usize| f32::from_le_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]]) as f64;
    let mut soup = Vec::with_capacity(n);
    for i in 0..n {
        let base = 84 + 50 * i + 12;
        let mut tri = [[0.0; 3]; 3];
        for (v, corner) in tri.iter_mut().enumerate() {
            for (k, c) in corner.iter_mut().enumerate() {
                let at = base + 12 * v + 4 * k;
                *c = f32_at(at);
                if !c.is_finite() {
                    return Err((at, "non-finite coordinate".into()));
                }
            }
        }
        soup.push(tri);
    }
    Ok(TriangleMesh::from_soup(&soup))
}

fn parse_obj(bytes: &[u8]) -> Parsed {
    let mut vertices: Vec<Point3> = Vec::new();
    let mut triangles: Vec<[u32; 3]> = Vec::new();
    let mut offset = 0;
    for raw in bytes.split(|&b| b == b'\n') {
        let line_start = offset;
        offset += raw.len() + 1;
        let line = std::str::from_utf8(raw).map_err(|e| (line_start + e.valid_up_to(), "invalid UTF-8".to_string()))?;
        let content = line.split('#').next().unwrap_or("");
        let mut parts = content.split_ascii_whitespace();
        let Some(kind) = parts.next() else { continue };
        let at = |s: &str| line_start + (s.as_ptr() as usize - line.as_ptr() as usize);
        match kind {
            "v" => {
                let mut p = [0.0_f64; 3];
                for c in &mut p {
                    let s = parts
                        .next()
                        .ok_or((line_start, "vertex needs three coordinates".to_string()))?;
                    *c = s
                        .parse()
                        .map_err(|_| (at(s), format!("expected a number, found `{s}`")))?;
                    if !c.is_finite() {
                        return Err((at(s), "non-finite coordinate".into()));
                    }
                }
                vertices.push(p);
            }
            "f" => {
                let refs: Vec<&str> = parts.collect();
                if refs.len() != 3 {
                    return Err((line_start, format!("only triangular faces are supported, found {} vertices", refs.len())));
                }
                let mut tri = [0u32; 3];
                for (slot, s) in tri.iter_mut().zip(&refs) {
                    let head = s.split('/').next().unwrap_or("");
                    let idx: i64 = head
                        .parse()
                        .map_err(|_| (at(s), format!("bad vertex reference `{s}`")))?;
                    let n = vertices.len() as i64;
                    let resolved = match idx {
                        i if i > 0 && i <= n => i - 1,
                        i if i < 0 && -i <= n => n + i,
                        _ => return Err((at(s), format!("vertex reference {idx} out of range (have {n})"))),
                    };
                    *slot = resolved as u32;
                }
                triangles.push(tri);
            }
            _ => {}
        }
    }
    if triangles.is_empty() {
        return Err((bytes.len(), "no faces".into()));
    }
    Ok(TriangleMesh::welded(vertices, triangles))
}

/// Writes vertices with round-trip precision and 1-based triangular faces.
pub fn write_obj<W: Write>(mesh: &TriangleMesh, mut out: W) -> std::io::Result<()> {
    let mut buf = String::with_capacity(mesh.vertices().len() * 32 + mesh.triangles().len() * 24);
    use std::fmt::Write as _;
    for v in mesh.vertices() {
        let _ = writeln!(buf, "v {} {} {}", v[0], v[1], v[2]);
    }
    for t in mesh.triangles() {
        let _ = writeln!(buf, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
    }
    out.write_all(buf.as_bytes())
}

fn facet_normal(c: [Point3; 3]) -> Point3 {
    let u = [c[1][0] - c[0][0], c[1][1] - c[0][1], c[1][2] - c[0][2]];
    let v = [c[2][0] - c[0][0], c[2][1] - c[0][1], c[2][2] - c[0][2]];
    let n = [u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]];
    let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
    if len > 0.0 {
        [n[0] / len, n[1] / len, n[2] / len]
    } else {
        [0.0; 3]
    }
}

pub fn write_stl_ascii<W: Write>(mesh: &TriangleMesh, name: &str, mut out: W) -> std::io::Result<()> {
    writeln!(out, "solid {name}")?;
    for t in 0..mesh.triangles().len() {
        let c = mesh.corners(t);
        let n = facet_normal(c);
        writeln!(out, "  facet normal {} {} {}", n[0], n[1], n[2])?;
        writeln!(out, "    outer loop")?;
        for p in c {
            writeln!(out, "      vertex {} {} {}", p[0], p[1], p[2])?;
        }
        writeln!(out, "    endloop")?;
        writeln!(out, "  endfacet")?;
    }
    writeln!(out, "endsolid {name}")
}

/// Coordinates are narrowed to `f32` as the format requires.
pub fn write_stl_binary<W: Write>(mesh: &TriangleMesh, mut out: W) -> std::io::Result<()> {
    let mut header = [0u8; 80];
    header[..10].copy_from_slice(b"dreamspace");
    out.write_all(&header)?;
    out.write_all(&(mesh.triangles().len() as u32).to_le_bytes())?;
    for t in 0..mesh.triangles().len() {
        let c = mesh.corners(t);
        for v in std::iter::once(facet_normal(c)).chain(c) {
            for x in v {
                out.write_all(&(x as f32).to_le_bytes())?;
            }
        }
        out.write_all(&[0, 0])?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use dreamspace_core::geometry::{surface_area, unit_cube, volume};

    fn roundtrip(format: MeshFormat) -> TriangleMesh {
        let mut buf = Vec::new();
        match format {
            MeshFormat::Obj => write_obj(&unit_cube(), &mut buf).unwrap(),
            MeshFormat::StlAscii => write_stl_ascii(&unit_cube(), "cube", &mut buf).unwrap(),
            MeshFormat::StlBinary => write_stl_binary(&unit_cube(), &mut buf).unwrap(),
        }
        parse_mesh_bytes(&buf, format, Path::new("cube")).unwrap()
    }

    #[test]
    fn unit_cube_in_every_format() {
        for f in [MeshFormat::Obj, MeshFormat::StlAscii, MeshFormat::StlBinary] {
            let m = roundtrip(f);
            assert_eq!(m.vertices().len(), 8, "{f:?}");
            assert_eq!(m.triangles().len(), 12);
            assert!((surface_area(&m) - 6.0).abs() < 1e-12);
            assert!((volume(&m).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_file_is_corrupt() {
        for f in [MeshFormat::Obj, MeshFormat::StlAscii, MeshFormat::StlBinary] {
            let e = parse_mesh_bytes(b"", f, Path::new("x")).unwrap_err();
            assert!(matches!(e, Error::CorruptMesh { offset: 0, .. }), "{e}");
        }
    }

    #[test]
    fn bad_number_reports_offset() {
        let text = b"v 0 0 0\nv 1 0 0\nv 0 x 0\nf 1 2 3\n";
        match parse_mesh_bytes(text, MeshFormat::Obj, Path::new("bad.obj")).unwrap_err() {
            Error::CorruptMesh { offset, .. } => assert_eq!(offset, 20),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn out_of_range_face_is_rejected() {
        let text = b"v 0 0 0\nv 1 0 0\nf 1 2 3\n";
        let e = parse_mesh_bytes(text, MeshFormat::Obj, Path::new("bad.obj")).unwrap_err();
        assert!(matches!(e, Error::CorruptMesh { offset: 22, .. }), "{e}");
    }

    #[test]
    fn obj_extras_and_negative_indices() {
        let text = b"# comment\no thing\nv 0 0 0\nv 1 0 0\nvn 0 0 1\nv 0 1 0\nf -3//1 -2//1 -1//1\n";
        let m = parse_mesh_bytes(text, MeshFormat::Obj, Path::new("t.obj")).unwrap();
        assert_eq!(m.triangles(), &[[0, 1, 2]]);
    }

    #[test]
    fn truncated_binary_stl() {
        let mut buf = Vec::new();
        write_stl_binary(&unit_cube(), &mut buf).unwrap();
        buf.truncate(84 + 50 * 5 + 7);
        let e = parse_mesh_bytes(&buf, MeshFormat::StlBinary, Path::new("t.stl")).unwrap_err();
        assert!(matches!(e, Error::CorruptMesh { offset: 334, .. }), "{e}");
    }

    #[test]
    fn degenerate_triangle_parses() {
        let text = b"v 0 0 0\nv 1 0 0\nv 2 0 0\nv 0 1 0\nf 1 2 3\nf 1 2 4\n";
        let m = parse_mesh_bytes(text, MeshFormat::Obj, Path::new("d.obj")).unwrap();
        assert_eq!(m.degenerate_triangles(), vec![0]);
    }

    #[test]
    fn ascii_stl_missing_keyword() {
        let text = b"solid x\nfacet normal 0 0 1\nouter loop\nvertex 0 0 0\nvertex 1 0 0\nendloop\n";
        let e = parse_mesh_bytes(text, MeshFormat::StlAscii, Path::new("t.stl")).unwrap_err();
        assert!(matches!(e, Error::CorruptMesh { offset: 64, .. }), "{e}");
    }
}
