//! Tetrahedral meshes, per-element stress tensors and their ASCII formats.
//!
//! Mesh file:
//!
//! ```text
//! tetmesh v1 <nv> <nt>
//! v <x> <y> <z>
//! t <i0> <i1> <i2> <i3>
//! ```
//!
//! Stress file:
//!
//! ```text
//! stress v1 <nt>
//! <sxx> <syy> <szz> <sxy> <syz> <sxz>
//! ```
//!
//! Indices are 0-based. Lines starting with `#` are ignored after the header.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{Matrix3, Point3};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: vertex index {index} out of range (mesh has {count} vertices)")]
    IndexOutOfRange { line: usize, index: usize, count: usize },
    #[error("tet {tet} has repeated vertex indices")]
    RepeatedVertex { tet: usize },
    #[error("tet {tet} is inverted or degenerate (signed volume {volume:e})")]
    InvertedTet { tet: usize, volume: f64 },
    #[error("stress file has {found} tensors but mesh has {expected} tets")]
    CountMismatch { expected: usize, found: usize },
    #[error("line {line}: non-finite stress component")]
    NonFinite { line: usize },
    #[error("face {face:?} is shared by {count} tets")]
    NonManifoldFace { face: [usize; 3], count: usize },
}

pub type Result<T> = std::result::Result<T, MeshError>;

/// Symmetric Cauchy stress tensor (MPa), stored as its six independent components.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SymTensor3 {
    pub xx: f64,
    pub yy: f64,
    pub zz: f64,
    pub xy: f64,
    pub yz: f64,
    pub xz: f64,
}

impl SymTensor3 {
    pub const fn new(xx: f64, yy: f64, zz: f64, xy: f64, yz: f64, xz: f64) -> Self {
        Self { xx, yy, zz, xy, yz, xz }
    }

    pub const fn diag(xx: f64, yy: f64, zz: f64) -> Self {
        Self::new(xx, yy, zz, 0.0, 0.0, 0.0)
    }

    /// Plane stress tensor with zero out-of-plane components.
    pub const fn plane(xx: f64, yy: f64, xy: f64) -> Self {
        Self::new(xx, yy, 0.0, xy, 0.0, 0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.components().iter().all(|c| c.is_finite())
    }

    pub fn components(&self) -> [f64; 6] {
        [self.xx, self.yy, self.zz, self.xy, self.yz, self.xz]
    }

    pub fn to_matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            self.xx, self.xy, self.xz, //
            self.xy, self.yy, self.yz, //
            self.xz, self.yz, self.zz,
        )
    }

    /// Symmetric part of `m`.
    pub fn from_matrix(m: &Matrix3<f64>) -> Self {
        Self::new(
            m[(0, 0)],
            m[(1, 1)],
            m[(2, 2)],
            0.5 * (m[(0, 1)] + m[(1, 0)]),
            0.5 * (m[(1, 2)] + m[(2, 1)]),
            0.5 * (m[(0, 2)] + m[(2, 0)]),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TetMesh {
    pub vertices: Vec<Point3<f64>>,
    pub tets: Vec<[usize; 4]>,
    /// Tets sharing a face with tet `i`, ascending.
    pub face_adjacency: Vec<Vec<usize>>,
    /// Tets sharing at least one vertex with tet `i` (excluding `i`), ascending.
    pub vertex_adjacency: Vec<Vec<usize>>,
}

/// Six times the signed volume; positive when `(b-a, c-a, d-a)` is right-handed.
pub fn signed_volume6(a: &Point3<f64>, b: &Point3<f64>, c: &Point3<f64>, d: &Point3<f64>) -> f64 {
    (b - a).dot(&(c - a).cross(&(d - a)))
}

impl TetMesh {
    /// Validates indices and orientation. Adjacency is left empty.
    pub fn new(vertices: Vec<Point3<f64>>, tets: Vec<[usize; 4]>) -> Result<Self> {
        let mesh = Self {
            vertices,
            tets,
            face_adjacency: Vec::new(),
            vertex_adjacency: Vec::new(),
        };
        for t in 0..mesh.tets.len() {
            mesh.check_tet(t, 0)?;
        }
        Ok(mesh)
    }

    fn check_tet(&self, t: usize, line: usize) -> Result<()> {
        let tet = self.tets[t];
        for &i in &tet {
            if i >= self.vertices.len() {
                return Err(MeshError::IndexOutOfRange {
                    line,
                    index: i,
                    count: self.vertices.len(),
                });
            }
        }
        for a in 0..4 {
            for b in a + 1..4 {
                if tet[a] == tet[b] {
                    return Err(MeshError::RepeatedVertex { tet: t });
                }
            }
        }
        let volume = self.signed_volume(t);
        if volume <= 0.0 {
            return Err(MeshError::InvertedTet { tet: t, volume });
        }
        Ok(())
    }

    pub fn signed_volume(&self, t: usize) -> f64 {
        let [a, b, c, d] = self.tets[t].map(|i| self.vertices[i]);
        signed_volume6(&a, &b, &c, &d) / 6.0
    }

    pub fn centroid(&self, t: usize) -> Point3<f64> {
        let sum = self.tets[t]
            .iter()
            .fold(nalgebra::Vector3::zeros(), |acc, &i| acc + self.vertices[i].coords);
        Point3::from(sum / 4.0)
    }

    pub fn adjacency_built(&self) -> bool {
        self.tets.is_empty() || self.face_adjacency.len() == self.tets.len()
    }

    /// `(min, max)` of vertex z-coordinates.
    pub fn z_extent(&self) -> (f64, f64) {
        self.vertices
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                (lo.min(p.z), hi.max(p.z))
            })
    }

    /// Populates face and vertex adjacency. Idempotent.
    pub fn build_adjacency(mut self) -> Result<Self> {
        let n = self.tets.len();
        let mut faces: HashMap<[usize; 3], Vec<usize>> = HashMap::with_capacity(2 * n);
        for (t, tet) in self.tets.iter().enumerate() {
            for skip in 0..4 {
                let mut face = [0usize; 3];
                let mut k = 0;
                for (j, &v) in tet.iter().enumerate() {
                    if j != skip {
                        face[k] = v;
                        k += 1;
                    }
                }
                face.sort_unstable();
                faces.entry(face).or_default().push(t);
            }
        }

        let mut face_adj = vec![Vec::new(); n];
        let mut keyed: Vec<_> = faces.into_iter().collect();
        keyed.sort_unstable_by_key(|(f, _)| *f);
        for (face, owners) in keyed {
            match owners.as_slice() {
                [_] => {}
                [a, b] => {
                    face_adj[*a].push(*b);
                    face_adj[*b].push(*a);
                }
                _ => {
                    return Err(MeshError::NonManifoldFace {
                        face,
                        count: owners.len(),
                    })
                }
            }
        }

        let mut vertex_tets = vec![Vec::new(); self.vertices.len()];
        for (t, tet) in self.tets.iter().enumerate() {
            for &v in tet {
                vertex_tets[v].push(t);
            }
        }
        let mut vertex_adj = vec![Vec::new(); n];
        for (t, tet) in self.tets.iter().enumerate() {
            let list: &mut Vec<usize> = &mut vertex_adj[t];
            for &v in tet {
                list.extend(vertex_tets[v].iter().copied().filter(|&o| o != t));
            }
            list.sort_unstable();
            list.dedup();
        }
        for list in &mut face_adj {
            list.sort_unstable();
            list.dedup();
        }

        self.face_adjacency = face_adj;
        self.vertex_adjacency = vertex_adj;
        Ok(self)
    }
}

/// Iterates non-empty, non-comment lines with 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn parse_num<T: std::str::FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T> {
    let tok = tok.ok_or_else(|| MeshError::Parse {
        line,
        msg: format!("missing {what}"),
    })?;
    tok.parse().map_err(|_| MeshError::Parse {
        line,
        msg: format!("invalid {what} `{tok}`"),
    })
}

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| MeshError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn parse_tet_mesh(text: &str) -> Result<TetMesh> {
    let mut lines = content_lines(text);
    let (hline, header) = lines.next().ok_or(MeshError::Parse {
        line: 1,
        msg: "empty file".into(),
    })?;
    let mut toks = header.split_whitespace();
    if toks.next() != Some("tetmesh") || toks.next() != Some("v1") {
        return Err(MeshError::Parse {
            line: hline,
            msg: "expected header `tetmesh v1 <nv> <nt>`".into(),
        });
    }
    let nv: usize = parse_num(toks.next(), hline, "vertex count")?;
    let nt: usize = parse_num(toks.next(), hline, "tet count")?;

    let mut vertices = Vec::with_capacity(nv);
    let mut tets = Vec::with_capacity(nt);
    let mut tet_lines = Vec::with_capacity(nt);
    for (line, l) in lines {
        let mut toks = l.split_whitespace();
        match toks.next() {
            Some("v") if tets.is_empty() && vertices.len() < nv => {
                let x = parse_num(toks.next(), line, "x")?;
                let y = parse_num(toks.next(), line, "y")?;
                let z = parse_num(toks.next(), line, "z")?;
                vertices.push(Point3::new(x, y, z));
            }
            Some("t") if vertices.len() == nv && tets.len() < nt => {
                let mut tet = [0usize; 4];
                for slot in &mut tet {
                    *slot = parse_num(toks.next(), line, "vertex index")?;
                    if *slot >= nv {
                        return Err(MeshError::IndexOutOfRange {
                            line,
                            index: *slot,
                            count: nv,
                        });
                    }
                }
                tets.push(tet);
                tet_lines.push(line);
            }
            _ => {
                return Err(MeshError::Parse {
                    line,
                    msg: format!("unexpected line `{l}`"),
                })
            }
        }
        if toks.next().is_some() {
            return Err(MeshError::Parse {
                line,
                msg: "trailing tokens".into(),
            });
        }
    }
    if vertices.len() != nv || tets.len() != nt {
        return Err(MeshError::Parse {
            line: hline,
            msg: format!(
                "header declares {nv} vertices and {nt} tets, found {} and {}",
                vertices.len(),
                tets.len()
            ),
        });
    }

    let mesh = TetMesh {
        vertices,
        tets,
        face_adjacency: Vec::new(),
        vertex_adjacency: Vec::new(),
    };
    for (t, &line) in tet_lines.iter().enumerate() {
        mesh.check_tet(t, line)?;
    }
    Ok(mesh)
}

pub fn load_tet_mesh(path: impl AsRef<Path>) -> Result<TetMesh> {
    parse_tet_mesh(&read_file(path.as_ref())?)
}

pub fn format_tet_mesh(mesh: &TetMesh) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "tetmesh v1 {} {}", mesh.vertices.len(), mesh.tets.len());
    for p in &mesh.vertices {
        let _ = writeln!(out, "v {} {} {}", p.x, p.y, p.z);
    }
    for t in &mesh.tets {
        let _ = writeln!(out, "t {} {} {} {}", t[0], t[1], t[2], t[3]);
    }
    out
}

pub fn write_tet_mesh(mesh: &TetMesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_tet_mesh(mesh)).map_err(|source| MeshError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn parse_stress_field(text: &str, mesh: &TetMesh) -> Result<Vec<SymTensor3>> {
    let mut lines = content_lines(text);
    let (hline, header) = lines.next().ok_or(MeshError::Parse {
        line: 1,
        msg: "empty file".into(),
    })?;
    let mut toks = header.split_whitespace();
    if toks.next() != Some("stress") || toks.next() != Some("v1") {
        return Err(MeshError::Parse {
            line: hline,
            msg: "expected header `stress v1 <nt>`".into(),
        });
    }
    let declared: usize = parse_num(toks.next(), hline, "tensor count")?;
    if declared != mesh.tets.len() {
        return Err(MeshError::CountMismatch {
            expected: mesh.tets.len(),
            found: declared,
        });
    }

    let mut tensors = Vec::with_capacity(declared);
    for (line, l) in lines {
        let vals: Vec<f64> = l
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>().map_err(|_| MeshError::Parse {
                    line,
                    msg: format!("invalid stress component `{t}`"),
                })
            })
            .collect::<Result<_>>()?;
        if vals.len() != 6 {
            return Err(MeshError::Parse {
                line,
                msg: format!("expected 6 components, found {}", vals.len()),
            });
        }
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(MeshError::NonFinite { line });
        }
        tensors.push(SymTensor3::new(vals[0], vals[1], vals[2], vals[3], vals[4], vals[5]));
    }
    if tensors.len() != mesh.tets.len() {
        return Err(MeshError::CountMismatch {
            expected: mesh.tets.len(),
            found: tensors.len(),
        });
    }
    Ok(tensors)
}

pub fn load_stress_field(path: impl AsRef<Path>, mesh: &TetMesh) -> Result<Vec<SymTensor3>> {
    parse_stress_field(&read_file(path.as_ref())?, mesh)
}

pub fn format_stress_field(tensors: &[SymTensor3]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "stress v1 {}", tensors.len());
    for t in tensors {
        let _ = writeln!(out, "{} {} {} {} {} {}", t.xx, t.yy, t.zz, t.xy, t.yz, t.xz);
    }
    out
}

pub fn write_stress_field(tensors: &[SymTensor3], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_stress_field(tensors)).map_err(|source| MeshError::Io {
        path: path.display().to_string(),
        source,
    })
}
