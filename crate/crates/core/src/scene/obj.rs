//! Wavefront OBJ subset: `v` and triangular `f` records. Everything else is skipped.

use nalgebra::Vector3;

use super::primitive::TriangleMesh;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("line {line}: {message}")]
pub struct ObjError {
    pub line: usize,
    pub message: String,
}

fn err(line: usize, message: impl Into<String>) -> ObjError {
    ObjError {
        line,
        message: message.into(),
    }
}

pub fn parse_obj(text: &str) -> Result<TriangleMesh, ObjError> {
    let mut vertices = Vec::new();
    let mut faces: Vec<(usize, [i64; 3])> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut fields = line.split_whitespace();
        match fields.next() {
            Some("v") => {
                let mut xyz = [0.0; 3];
                for c in xyz.iter_mut() {
                    let f = fields
                        .next()
                        .ok_or_else(|| err(line_no, "vertex needs three coordinates"))?;
                    *c = f
                        .parse::<f64>()
                        .map_err(|_| err(line_no, format!("bad coordinate `{f}`")))?;
                }
                if !xyz.iter().all(|c| c.is_finite()) {
                    return Err(err(line_no, "non-finite vertex coordinate"));
                }
                vertices.push(Vector3::from(xyz));
            }
            Some("f") => {
                let refs: Vec<&str> = fields.collect();
                if refs.len() != 3 {
                    return Err(err(
                        line_no,
                        format!("only triangles are supported, face has {} vertices", refs.len()),
                    ));
                }
                let mut idx = [0i64; 3];
                for (slot, r) in idx.iter_mut().zip(&refs) {
                    let head = r.split('/').next().unwrap_or("");
                    *slot = head
                        .parse::<i64>()
                        .map_err(|_| err(line_no, format!("bad vertex reference `{r}`")))?;
                }
                faces.push((line_no, idx));
            }
            _ => {}
        }
    }

    let n = vertices.len() as i64;
    let mut triangles = Vec::with_capacity(faces.len());
    for (line_no, idx) in faces {
        let mut tri = [0u32; 3];
        for (slot, &r) in tri.iter_mut().zip(&idx) {
            // 1-based, negative counts back from the end
            let resolved = if r > 0 { r - 1 } else { n + r };
            if r == 0 || resolved < 0 || resolved >= n {
                return Err(err(line_no, format!("vertex reference {r} out of range")));
            }
            *slot = resolved as u32;
        }
        triangles.push(tri);
    }
    if triangles.is_empty() {
        return Err(err(0, "mesh has no faces"));
    }
    Ok(TriangleMesh {
        vertices,
        triangles,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_quad_as_two_triangles() {
        let text = "# square\nv 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvn 0 0 1\nf 1//1 2//1 3//1\nf 1 3 -1\n";
        let mesh = parse_obj(text).unwrap();
        assert_eq!(mesh.vertices.len(), 4);
        assert_eq!(mesh.triangles, vec![[0, 1, 2], [0, 2, 3]]);
    }

    #[test]
    fn rejects_polygons_and_bad_refs() {
        let e = parse_obj("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n").unwrap_err();
        assert_eq!(e.line, 5);
        let e = parse_obj("v 0 0 0\nf 1 2 3\n").unwrap_err();
        assert_eq!(e.line, 2);
        let e = parse_obj("v 0 zero 0\n").unwrap_err();
        assert_eq!(e.line, 1);
    }
}
