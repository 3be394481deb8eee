//! Planar triangulated cross-sections and their topology.

use std::collections::HashMap;
use std::fmt::Write as _;

use nalgebra::{Point2, Vector2};
use thiserror::Error;

/// Triangles below this area (mm^2) are treated as degenerate.
pub const MIN_TRIANGLE_AREA: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum LayerError {
    #[error("triangle {0} has an out-of-range vertex index")]
    BadIndex(usize),
    #[error("triangle {0} is degenerate")]
    Degenerate(usize),
    #[error("edge ({0}, {1}) is shared by more than two triangles")]
    NonManifoldEdge(usize, usize),
    #[error("layer mesh has no triangles")]
    Empty,
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Triangulated cross-section at height `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerMesh {
    pub z: f64,
    pub vertices: Vec<Point2<f64>>,
    /// Counter-clockwise vertex triples.
    pub triangles: Vec<[usize; 3]>,
    /// Directed boundary edges; the interior lies to their left.
    pub boundary_edges: Vec<[usize; 2]>,
    /// Source tetrahedron of each triangle.
    pub face_source: Vec<usize>,
    pub face_area: Vec<f64>,
    /// Undirected edges `(a, b)` with `a < b`, sorted.
    pub edges: Vec<[usize; 2]>,
    /// Triangles sharing an edge with each triangle.
    pub face_neighbors: Vec<Vec<usize>>,
    /// Edge ids (into `edges`) of each triangle.
    pub triangle_edges: Vec<[usize; 3]>,
    /// Triangles on each edge; the second slot is `usize::MAX` on the boundary.
    pub edge_faces: Vec<[usize; 2]>,
}

impl LayerMesh {
    /// Builds a layer from raw triangles, reorienting them counter-clockwise.
    pub fn from_triangles(
        z: f64,
        vertices: Vec<Point2<f64>>,
        mut triangles: Vec<[usize; 3]>,
        face_source: Vec<usize>,
    ) -> Result<Self, LayerError> {
        assert_eq!(triangles.len(), face_source.len());
        let mut face_area = Vec::with_capacity(triangles.len());
        for (f, tri) in triangles.iter_mut().enumerate() {
            if tri.iter().any(|&i| i >= vertices.len()) {
                return Err(LayerError::BadIndex(f));
            }
            let a2 = signed_area2(&vertices[tri[0]], &vertices[tri[1]], &vertices[tri[2]]);
            if a2 < 0.0 {
                tri.swap(1, 2);
            }
            let area = 0.5 * a2.abs();
            if area <= MIN_TRIANGLE_AREA {
                return Err(LayerError::Degenerate(f));
            }
            face_area.push(area);
        }

        let mut edge_faces: HashMap<[usize; 2], Vec<(usize, [usize; 2])>> = HashMap::new();
        for (f, tri) in triangles.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                edge_faces.entry([a.min(b), a.max(b)]).or_default().push((f, [a, b]));
            }
        }
        let mut keyed: Vec<_> = edge_faces.into_iter().collect();
        keyed.sort_unstable_by_key(|(e, _)| *e);

        let mut edges = Vec::with_capacity(keyed.len());
        let mut edge_faces = Vec::with_capacity(keyed.len());
        let mut boundary_edges = Vec::new();
        let mut face_neighbors = vec![Vec::new(); triangles.len()];
        let mut triangle_edges = vec![[usize::MAX; 3]; triangles.len()];
        let mut slot_of = |f: usize, id: usize| {
            let slot = triangle_edges[f].iter().position(|&x| x == usize::MAX).unwrap();
            triangle_edges[f][slot] = id;
        };
        for (e, owners) in keyed {
            let id = edges.len();
            edges.push(e);
            match owners.as_slice() {
                [(f, directed)] => {
                    boundary_edges.push(*directed);
                    edge_faces.push([*f, usize::MAX]);
                    slot_of(*f, id);
                }
                [(f, _), (g, _)] => {
                    face_neighbors[*f].push(*g);
                    face_neighbors[*g].push(*f);
                    edge_faces.push([*f, *g]);
                    slot_of(*f, id);
                    slot_of(*g, id);
                }
                _ => return Err(LayerError::NonManifoldEdge(e[0], e[1])),
            }
        }
        for n in &mut face_neighbors {
            n.sort_unstable();
        }

        Ok(Self {
            z,
            vertices,
            triangles,
            boundary_edges,
            face_source,
            face_area,
            edges,
            face_neighbors,
            triangle_edges,
            edge_faces,
        })
    }

    pub fn total_area(&self) -> f64 {
        self.face_area.iter().sum()
    }

    pub fn centroid(&self, f: usize) -> Point2<f64> {
        let [a, b, c] = self.triangles[f].map(|i| self.vertices[i].coords);
        Point2::from((a + b + c) / 3.0)
    }

    pub fn mean_edge_length(&self) -> f64 {
        if self.edges.is_empty() {
            return 0.0;
        }
        self.edges
            .iter()
            .map(|&[a, b]| (self.vertices[a] - self.vertices[b]).norm())
            .sum::<f64>()
            / self.edges.len() as f64
    }

    /// Vertex neighbour lists with Euclidean edge lengths.
    pub fn vertex_graph(&self) -> Vec<Vec<(usize, f64)>> {
        let mut g = vec![Vec::new(); self.vertices.len()];
        for &[a, b] in &self.edges {
            let l = (self.vertices[a] - self.vertices[b]).norm();
            g[a].push((b, l));
            g[b].push((a, l));
        }
        g
    }

    /// Gradients of the three linear shape functions of triangle `f`.
    pub fn shape_gradients(&self, f: usize) -> [Vector2<f64>; 3] {
        let [i, j, k] = self.triangles[f];
        let (p, q, r) = (self.vertices[i], self.vertices[j], self.vertices[k]);
        let inv = 1.0 / (2.0 * self.face_area[f]);
        let perp = |e: Vector2<f64>| Vector2::new(-e.y, e.x) * inv;
        [perp(r - q), perp(p - r), perp(q - p)]
    }

    /// Constant gradient of the piecewise-linear interpolant of `values` on triangle `f`.
    pub fn gradient(&self, f: usize, values: &[f64]) -> Vector2<f64> {
        let g = self.shape_gradients(f);
        let t = self.triangles[f];
        g[0] * values[t[0]] + g[1] * values[t[1]] + g[2] * values[t[2]]
    }

    /// Boundary loops as vertex sequences (closure implicit), each following
    /// the directed boundary edges. Loops start at their smallest vertex.
    pub fn boundary_loops(&self) -> Vec<Vec<usize>> {
        let mut next: HashMap<usize, Vec<usize>> = HashMap::new();
        for &[a, b] in &self.boundary_edges {
            next.entry(a).or_default().push(b);
        }
        for v in next.values_mut() {
            v.sort_unstable();
        }
        let mut starts: Vec<usize> = next.keys().copied().collect();
        starts.sort_unstable();
        let mut loops = Vec::new();
        for s in starts {
            while next.get(&s).is_some_and(|v| !v.is_empty()) {
                let mut lp = vec![s];
                let mut cur = s;
                loop {
                    let Some(outs) = next.get_mut(&cur) else { break };
                    if outs.is_empty() {
                        break;
                    }
                    let nxt = outs.remove(0);
                    if nxt == s {
                        break;
                    }
                    lp.push(nxt);
                    cur = nxt;
                }
                loops.push(lp);
            }
        }
        loops
    }

    /// Connected components of triangles (through shared vertices).
    /// Returns a component id per triangle and the number of components.
    pub fn face_components(&self) -> (Vec<usize>, usize) {
        let mut parent: Vec<usize> = (0..self.vertices.len()).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for t in &self.triangles {
            for k in 1..3 {
                let (a, b) = (find(&mut parent, t[0]), find(&mut parent, t[k]));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
        let mut label = HashMap::new();
        let comp = self
            .triangles
            .iter()
            .map(|t| {
                let r = find(&mut parent, t[0]);
                let next = label.len();
                *label.entry(r).or_insert(next)
            })
            .collect();
        (comp, label.len())
    }

    /// Splits into connected layers, each with compacted vertex numbering.
    /// Components are ordered by their lowest original triangle index.
    pub fn split_components(&self) -> Vec<LayerMesh> {
        let (comp, count) = self.face_components();
        if count <= 1 {
            return vec![self.clone()];
        }
        let mut out = Vec::with_capacity(count);
        for c in 0..count {
            let mut remap = HashMap::new();
            let mut verts = Vec::new();
            let mut tris = Vec::new();
            let mut src = Vec::new();
            for (f, t) in self.triangles.iter().enumerate() {
                if comp[f] != c {
                    continue;
                }
                let mapped = t.map(|v| {
                    *remap.entry(v).or_insert_with(|| {
                        verts.push(self.vertices[v]);
                        verts.len() - 1
                    })
                });
                tris.push(mapped);
                src.push(self.face_source[f]);
            }
            // Valid by construction: a subset of a valid manifold triangulation.
            out.push(LayerMesh::from_triangles(self.z, verts, tris, src).expect("component of a valid layer"));
        }
        out
    }

    /// `(min, max)` corners of the vertex bounding box.
    pub fn bounds(&self) -> (Point2<f64>, Point2<f64>) {
        let mut lo = Point2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in &self.vertices {
            lo.x = lo.x.min(p.x);
            lo.y = lo.y.min(p.y);
            hi.x = hi.x.max(p.x);
            hi.y = hi.y.max(p.y);
        }
        (lo, hi)
    }

    /// `layer v1 <z> <nv> <nf>` followed by `v x y` and `t i j k` lines.
    /// With `values`, one `s <value>` line per vertex is appended.
    pub fn dump(&self, values: Option<&[f64]>) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "layer v1 {} {} {}",
            self.z,
            self.vertices.len(),
            self.triangles.len()
        );
        for p in &self.vertices {
            let _ = writeln!(out, "v {} {}", p.x, p.y);
        }
        for t in &self.triangles {
            let _ = writeln!(out, "t {} {} {}", t[0], t[1], t[2]);
        }
        if let Some(values) = values {
            for s in values {
                let _ = writeln!(out, "s {s}");
            }
        }
        out
    }

    /// Parses [`LayerMesh::dump`] output. Face sources are not stored in the
    /// dump and come back as `usize::MAX`.
    pub fn parse_dump(text: &str) -> Result<(LayerMesh, Option<Vec<f64>>), LayerError> {
        let err = |line: usize, msg: &str| LayerError::Parse {
            line,
            msg: msg.to_string(),
        };
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (hl, header) = lines.next().ok_or_else(|| err(1, "empty"))?;
        let h: Vec<&str> = header.split_whitespace().collect();
        if h.len() != 5 || h[0] != "layer" || h[1] != "v1" {
            return Err(err(hl, "expected `layer v1 <z> <nv> <nf>`"));
        }
        let z: f64 = h[2].parse().map_err(|_| err(hl, "bad z"))?;
        let nv: usize = h[3].parse().map_err(|_| err(hl, "bad vertex count"))?;
        let nf: usize = h[4].parse().map_err(|_| err(hl, "bad face count"))?;
        let mut verts = Vec::with_capacity(nv);
        let mut tris = Vec::with_capacity(nf);
        let mut values = Vec::new();
        for (ln, l) in lines {
            let t: Vec<&str> = l.split_whitespace().collect();
            match (t.first().copied(), t.len()) {
                (Some("v"), 3) => {
                    let x = t[1].parse().map_err(|_| err(ln, "bad x"))?;
                    let y = t[2].parse().map_err(|_| err(ln, "bad y"))?;
                    verts.push(Point2::new(x, y));
                }
                (Some("t"), 4) => {
                    let mut tri = [0usize; 3];
                    for k in 0..3 {
                        tri[k] = t[k + 1].parse().map_err(|_| err(ln, "bad index"))?;
                    }
                    tris.push(tri);
                }
                (Some("s"), 2) => values.push(t[1].parse().map_err(|_| err(ln, "bad value"))?),
                _ => return Err(err(ln, "unexpected line")),
            }
        }
        if verts.len() != nv || tris.len() != nf {
            return Err(err(hl, "counts do not match header"));
        }
        let values = if values.is_empty() {
            None
        } else if values.len() == nv {
            Some(values)
        } else {
            return Err(err(hl, "value count does not match vertex count"));
        };
        let layer = LayerMesh::from_triangles(z, verts, tris, vec![usize::MAX; nf])?;
        Ok((layer, values))
    }
}

/// Twice the signed area of `(a, b, c)`; positive when counter-clockwise.
pub fn signed_area2(a: &Point2<f64>, b: &Point2<f64>, c: &Point2<f64>) -> f64 {
    (b - a).perp(&(c - a))
}

/// Uniform-grid point location over a layer's triangles.
pub struct Locator<'a> {
    layer: &'a LayerMesh,
    origin: Point2<f64>,
    cell: f64,
    nx: usize,
    ny: usize,
    bins: Vec<Vec<usize>>,
}

impl<'a> Locator<'a> {
    pub fn new(layer: &'a LayerMesh) -> Self {
        let (lo, hi) = layer.bounds();
        let cell = (layer.mean_edge_length() * 2.0).max(1e-9);
        let nx = (((hi.x - lo.x) / cell).floor() as usize + 1).max(1);
        let ny = (((hi.y - lo.y) / cell).floor() as usize + 1).max(1);
        let mut bins = vec![Vec::new(); nx * ny];
        let mut loc = Self {
            layer,
            origin: lo,
            cell,
            nx,
            ny,
            bins: Vec::new(),
        };
        for (f, t) in layer.triangles.iter().enumerate() {
            let ps = t.map(|i| layer.vertices[i]);
            let (x0, y0) = loc.bin_of(ps.iter().fold(ps[0], |m, p| Point2::new(m.x.min(p.x), m.y.min(p.y))));
            let (x1, y1) = loc.bin_of(ps.iter().fold(ps[0], |m, p| Point2::new(m.x.max(p.x), m.y.max(p.y))));
            for by in y0..=y1 {
                for bx in x0..=x1 {
                    bins[by * nx + bx].push(f);
                }
            }
        }
        loc.bins = bins;
        loc
    }

    fn bin_of(&self, p: Point2<f64>) -> (usize, usize) {
        let bx = ((p.x - self.origin.x) / self.cell).floor().max(0.0) as usize;
        let by = ((p.y - self.origin.y) / self.cell).floor().max(0.0) as usize;
        (bx.min(self.nx - 1), by.min(self.ny - 1))
    }

    /// Triangle containing `p` (within a small tolerance) and barycentric weights.
    pub fn locate(&self, p: Point2<f64>) -> Option<(usize, [f64; 3])> {
        let (bx, by) = self.bin_of(p);
        let mut best: Option<(usize, [f64; 3], f64)> = None;
        for &f in &self.bins[by * self.nx + bx] {
            let [a, b, c] = self.layer.triangles[f].map(|i| self.layer.vertices[i]);
            let area2 = 2.0 * self.layer.face_area[f];
            let w = [
                signed_area2(&p, &b, &c) / area2,
                signed_area2(&a, &p, &c) / area2,
                signed_area2(&a, &b, &p) / area2,
            ];
            let worst = w.iter().fold(f64::INFINITY, |m, &x| m.min(x));
            if worst >= 0.0 {
                return Some((f, w));
            }
            if best.as_ref().is_none_or(|(_, _, bw)| worst > *bw) {
                best = Some((f, w, worst));
            }
        }
        best.filter(|(_, _, worst)| *worst > -1e-7).map(|(f, w, _)| (f, w))
    }

    /// Linear interpolation of per-vertex `values` at `p`.
    pub fn interpolate(&self, p: Point2<f64>, values: &[f64]) -> Option<f64> {
        self.locate(p).map(|(f, w)| {
            let t = self.layer.triangles[f];
            w[0] * values[t[0]] + w[1] * values[t[1]] + w[2] * values[t[2]]
        })
    }
}

/// Structured grid layer over `[x0, x1] x [y0, y1]` with `nx * ny` vertices,
/// each cell split along its rising diagonal.
pub fn grid_layer(x0: f64, x1: f64, y0: f64, y1: f64, nx: usize, ny: usize) -> LayerMesh {
    assert!(nx >= 2 && ny >= 2);
    let mut verts = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let x = x0 + (x1 - x0) * i as f64 / (nx - 1) as f64;
            let y = y0 + (y1 - y0) * j as f64 / (ny - 1) as f64;
            verts.push(Point2::new(x, y));
        }
    }
    let mut tris = Vec::new();
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            let a = j * nx + i;
            let (b, c, d) = (a + 1, a + nx + 1, a + nx);
            tris.push([a, b, c]);
            tris.push([a, c, d]);
        }
    }
    let n = tris.len();
    LayerMesh::from_triangles(0.0, verts, tris, vec![0; n]).expect("grid is valid")
}
