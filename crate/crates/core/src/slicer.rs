//! Horizontal cross-sections of a tetrahedral mesh and projection of the
//! element field onto them.

use std::collections::HashMap;

use nalgebra::{Point2, Vector2};
use thiserror::Error;

use crate::layer::{LayerError, LayerMesh, MIN_TRIANGLE_AREA};
use crate::mesh::TetMesh;
use crate::stress::{ElementField, ElementStatus, WEAK_STRESS};

/// Projected vectors shorter than this are treated as vertical (undefined).
pub const MIN_PROJECTED_NORM: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum SliceError {
    #[error("plane z={z} does not intersect the solid (z range {zmin}..{zmax})")]
    EmptyLayer { z: f64, zmin: f64, zmax: f64 },
    #[error(transparent)]
    Layer(#[from] LayerError),
}

/// Intersects the mesh with the plane at height `z`.
///
/// Cut points on shared tet edges are welded by edge identity and vertices
/// lying on the plane by vertex identity, so the section is a conforming
/// triangulation. A tet face lying in the plane is emitted by the tet above
/// it only. Four-point cuts are split along the shorter diagonal.
pub fn slice_at_height(mesh: &TetMesh, z: f64) -> Result<LayerMesh, SliceError> {
    let (zmin, zmax) = mesh.z_extent();
    if !(z > zmin && z < zmax) {
        return Err(SliceError::EmptyLayer { z, zmin, zmax });
    }
    let tol = 1e-9 * (zmax - zmin);

    let mut point_of_edge: HashMap<(usize, usize), usize> = HashMap::new();
    let mut vertices: Vec<Point2<f64>> = Vec::new();
    let mut triangles = Vec::new();
    let mut face_source = Vec::new();

    for (t, tet) in mesh.tets.iter().enumerate() {
        let d = tet.map(|i| mesh.vertices[i].z - z);
        let above: Vec<usize> = (0..4).filter(|&i| d[i] > tol).collect();
        let below: Vec<usize> = (0..4).filter(|&i| d[i] < -tol).collect();
        let on: Vec<usize> = (0..4).filter(|&i| d[i].abs() <= tol).collect();
        if above.len() == 4 || below.len() == 4 {
            continue;
        }
        let mut point = |a: usize, b: usize| -> usize {
            let (ga, gb) = (tet[a].min(tet[b]), tet[a].max(tet[b]));
            *point_of_edge.entry((ga, gb)).or_insert_with(|| {
                let (pa, pb) = (mesh.vertices[ga], mesh.vertices[gb]);
                let p = if ga == gb {
                    pa
                } else {
                    pa + (pb - pa) * ((pa.z - z) / (pa.z - pb.z))
                };
                vertices.push(Point2::new(p.x, p.y));
                vertices.len() - 1
            })
        };
        let polygon: Vec<usize> = match (above.len(), below.len(), on.len()) {
            (1, 3, 0) | (3, 1, 0) => {
                let (lone, rest) = if above.len() == 1 {
                    (above[0], below)
                } else {
                    (below[0], above)
                };
                rest.iter().map(|&o| point(lone, o)).collect()
            }
            (2, 2, 0) => {
                let (a, b, c, dd) = (above[0], above[1], below[0], below[1]);
                vec![point(a, c), point(a, dd), point(b, dd), point(b, c)]
            }
            (1, 0, 3) => on.iter().map(|&v| point(v, v)).collect(),
            (1, 1, 2) => vec![point(on[0], on[0]), point(on[1], on[1]), point(above[0], below[0])],
            (2, 1, 1) | (1, 2, 1) => {
                let (lone, rest) = if above.len() == 1 {
                    (above[0], below)
                } else {
                    (below[0], above)
                };
                vec![point(on[0], on[0]), point(lone, rest[0]), point(lone, rest[1])]
            }
            _ => continue,
        };

        let tris: Vec<[usize; 3]> = if polygon.len() == 3 {
            vec![[polygon[0], polygon[1], polygon[2]]]
        } else {
            let p = polygon.iter().map(|&i| vertices[i]).collect::<Vec<_>>();
            if (p[0] - p[2]).norm_squared() <= (p[1] - p[3]).norm_squared() {
                vec![
                    [polygon[0], polygon[1], polygon[2]],
                    [polygon[0], polygon[2], polygon[3]],
                ]
            } else {
                vec![
                    [polygon[1], polygon[2], polygon[3]],
                    [polygon[1], polygon[3], polygon[0]],
                ]
            }
        };
        for tri in tris {
            let [a, b, c] = tri.map(|i| vertices[i]);
            let area = 0.5 * crate::layer::signed_area2(&a, &b, &c).abs();
            if area > MIN_TRIANGLE_AREA {
                triangles.push(tri);
                face_source.push(t);
            }
        }
    }
    if triangles.is_empty() {
        return Err(SliceError::EmptyLayer { z, zmin, zmax });
    }
    Ok(LayerMesh::from_triangles(z, vertices, triangles, face_source)?)
}

/// Fibre layer heights `z_min + offset + (k + 1/2) h` strictly inside the solid.
pub fn layer_heights(mesh: &TetMesh, spacing: f64, offset: f64) -> Vec<f64> {
    assert!(spacing > 0.0);
    let (zmin, zmax) = mesh.z_extent();
    (0..)
        .map(|k| zmin + offset + (k as f64 + 0.5) * spacing)
        .take_while(|&z| z < zmax)
        .filter(|&z| z > zmin)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaceStatus {
    Defined,
    Undefined,
}

/// Per-triangle direction, stress weight and weighted vector of a layer.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceField {
    pub v: Vec<Vector2<f64>>,
    pub sigma: Vec<f64>,
    pub u: Vec<Vector2<f64>>,
    pub status: Vec<FaceStatus>,
}

impl FaceField {
    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }

    pub fn defined_count(&self) -> usize {
        self.status.iter().filter(|&&s| s == FaceStatus::Defined).count()
    }

    /// Index of the defined face with maximal sigma (lowest index on ties).
    pub fn max_sigma_defined(&self, faces: impl Iterator<Item = usize>) -> Option<usize> {
        faces
            .filter(|&f| self.status[f] == FaceStatus::Defined)
            .fold(None, |best: Option<usize>, f| match best {
                Some(b) if self.sigma[b] >= self.sigma[f] => Some(b),
                _ => Some(f),
            })
    }
}

/// Drops the z-component of each source element's vector.
pub fn project_field(field: &ElementField, layer: &LayerMesh) -> FaceField {
    let n = layer.triangles.len();
    let mut out = FaceField {
        v: Vec::with_capacity(n),
        sigma: Vec::with_capacity(n),
        u: vec![Vector2::zeros(); n],
        status: Vec::with_capacity(n),
    };
    for &e in &layer.face_source {
        let v3 = field.vectors[e];
        let v = Vector2::new(v3.x, v3.y);
        let (status, sigma) = match field.status[e] {
            ElementStatus::Defined if v.norm() > MIN_PROJECTED_NORM => (FaceStatus::Defined, field.sigma[e]),
            ElementStatus::Weak => (FaceStatus::Undefined, WEAK_STRESS),
            _ => (FaceStatus::Undefined, field.sigma[e]),
        };
        out.v.push(if status == FaceStatus::Defined {
            v
        } else {
            Vector2::zeros()
        });
        out.sigma.push(sigma);
        out.status.push(status);
    }
    out
}
