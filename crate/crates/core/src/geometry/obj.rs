use std::path::Path;

use super::{GeometryError, Point3, TriangleMesh};

/// Loads a Wavefront OBJ file. Only `v` and `f` records are read; polygons
/// are fan-triangulated around their first vertex.
pub fn load_obj(path: &Path) -> Result<TriangleMesh, GeometryError> {
    let text = std::fs::read_to_string(path)?;
    parse_obj(&text)
}

/// Writes `v` and `f` records (1-based indices).
pub fn write_obj(path: &Path, mesh: &TriangleMesh) -> std::io::Result<()> {
    use std::io::Write;
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    for v in mesh.vertices() {
        writeln!(w, "v {} {} {}", v[0], v[1], v[2])?;
    }
    for t in mesh.triangles() {
        writeln!(w, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1)?;
    }
    w.flush()
}

pub fn parse_obj(text: &str) -> Result<TriangleMesh, GeometryError> {
    let mut vertices: Vec<Point3> = Vec::new();
    let mut triangles = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut tokens = line.split_whitespace();
        let bad = |msg: &str| GeometryError::MalformedMesh(format!("line {}: {msg}", lineno + 1));
        match tokens.next() {
            Some("v") => {
                let mut p = [0.0; 3];
                for c in &mut p {
                    *c = tokens
                        .next()
                        .and_then(|t| t.parse().ok())
                        .ok_or_else(|| bad("vertex needs three coordinates"))?;
                }
                vertices.push(p);
            }
            Some("f") => {
                let idx = tokens
                    .map(|t| resolve_index(t, vertices.len()).ok_or_else(|| bad("bad face index")))
                    .collect::<Result<Vec<_>, _>>()?;
                if idx.len() < 3 {
                    return Err(bad("face needs at least three vertices"));
                }
                for k in 1..idx.len() - 1 {
                    triangles.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    if triangles.is_empty() {
        return Err(GeometryError::EmptyMesh);
    }
    TriangleMesh::new(vertices, triangles)
}

// `i`, `i/t`, `i//n` and `i/t/n`; negative indices count back from the last vertex.
fn resolve_index(token: &str, seen: usize) -> Option<usize> {
    let i: i64 = token.split('/').next()?.parse().ok()?;
    let resolved = match i {
        0 => return None,
        i if i > 0 => i - 1,
        i => seen as i64 + i,
    };
    (0..seen as i64)
        .contains(&resolved)
        .then_some(resolved as usize)
}
