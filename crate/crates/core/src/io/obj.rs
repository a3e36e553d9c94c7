use std::path::Path;

use nalgebra::Point3;

use super::IoError;
use crate::geometry::TriangleMesh;

/// Parses vertex positions and faces from Wavefront OBJ text.
///
/// Face entries may carry `/vt/vn` suffixes and negative (relative)
/// indices; polygons are fan-triangulated. Everything else is ignored.
pub fn parse_obj(path: &Path, text: &str) -> Result<TriangleMesh, IoError> {
    let err = |line: usize, msg: &str| IoError::Format(path.to_path_buf(), format!("line {}: {msg}", line + 1));
    let mut vertices = Vec::new();
    let mut polygons = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let mut words = line.split_whitespace();
        match words.next() {
            Some("v") => {
                let coords: Vec<f64> = words
                    .take(3)
                    .map(|w| w.parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|_| err(n, "bad vertex coordinate"))?;
                if coords.len() != 3 {
                    return Err(err(n, "vertex needs three coordinates"));
                }
                vertices.push(Point3::new(coords[0], coords[1], coords[2]));
            }
            Some("f") => {
                let mut poly = Vec::new();
                for w in words {
                    let idx: i64 = w
                        .split('/')
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| err(n, "bad face index"))?;
                    let resolved = if idx > 0 {
                        idx - 1
                    } else if idx < 0 {
                        vertices.len() as i64 + idx
                    } else {
                        return Err(err(n, "face index 0 is invalid"));
                    };
                    if resolved < 0 || resolved >= vertices.len() as i64 {
                        return Err(err(n, "face index out of range"));
                    }
                    poly.push(resolved as u32);
                }
                polygons.push(poly);
            }
            _ => {}
        }
    }
    let faces = super::triangulate(&polygons);
    TriangleMesh::new(vertices, faces).map_err(|e| IoError::Format(path.to_path_buf(), e.to_string()))
}

pub fn read_obj(path: &Path) -> Result<TriangleMesh, IoError> {
    let text = std::fs::read_to_string(path).map_err(|e| IoError::at(path, e))?;
    parse_obj(path, &text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_slashes_negatives_and_quads() {
        let text = "# quad\nv 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvn 0 0 1\nf 1/1/1 2/2/1 3/3/1 4/4/1\nf -4 -3 -2\n";
        let mesh = parse_obj(Path::new("q.obj"), text).unwrap();
        assert_eq!(mesh.faces(), &[[0, 1, 2], [0, 2, 3], [0, 1, 2]]);
    }

    #[test]
    fn rejects_bad_indices() {
        assert!(parse_obj(Path::new("x"), "v 0 0 0\nf 1 2 3\n").is_err());
        assert!(parse_obj(Path::new("x"), "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 0 1 2\n").is_err());
        assert!(parse_obj(Path::new("x"), "v 0 0\n").is_err());
        assert!(parse_obj(Path::new("x"), "v 0 0 0\n").is_err());
    }
}
