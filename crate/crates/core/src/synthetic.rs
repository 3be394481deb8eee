//! Analytic plane-stress fields, structured test solids and layers, and
//! zigzag infill for matrix layers.

use std::f64::consts::PI;

use nalgebra::{Point2, Point3, Rotation2};
use thiserror::Error;

use crate::isopath::{PathKind, Toolpath};
use crate::layer::{LayerError, LayerMesh};
use crate::mesh::{signed_volume6, MeshError, SymTensor3, TetMesh};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("point at radius {r} lies inside the hole of radius {a}")]
    InsideHole { r: f64, a: f64 },
    #[error("invalid dimensions: {0}")]
    InvalidDims(String),
    #[error("target edge {edge} exceeds the smallest feature size {feature}")]
    EdgeTooLarge { edge: f64, feature: f64 },
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Layer(#[from] LayerError),
}

/// Plate with a circular hole of radius `a` under far-field tension `s`
/// along x. Out-of-plane components are zero.
pub fn kirsch_stress(p: Point2<f64>, s: f64, a: f64) -> Result<SymTensor3, SynthError> {
    let r = p.coords.norm();
    if r < a {
        return Err(SynthError::InsideHole { r, a });
    }
    let th = p.y.atan2(p.x);
    let (q2, q4) = ((a / r).powi(2), (a / r).powi(4));
    let (c2, s2) = ((2.0 * th).cos(), (2.0 * th).sin());
    let srr = 0.5 * s * (1.0 - q2) + 0.5 * s * (1.0 - 4.0 * q2 + 3.0 * q4) * c2;
    let stt = 0.5 * s * (1.0 + q2) - 0.5 * s * (1.0 + 3.0 * q4) * c2;
    let srt = -0.5 * s * (1.0 + 2.0 * q2 - 3.0 * q4) * s2;
    let (c, sn) = (th.cos(), th.sin());
    Ok(SymTensor3::plane(
        srr * c * c + stt * sn * sn - 2.0 * srt * sn * c,
        srr * sn * sn + stt * c * c + 2.0 * srt * sn * c,
        (srr - stt) * sn * c + srt * (c * c - sn * sn),
    ))
}

/// Euler-Bernoulli bending of a cantilever clamped at `x = 0` with tip load
/// `load` (N); `y` is measured from the neutral axis, `depth` is the beam
/// depth along y and `width` its extent along z.
pub fn cantilever_stress(p: Point2<f64>, load: f64, length: f64, width: f64, depth: f64) -> SymTensor3 {
    let i = width * depth.powi(3) / 12.0;
    let sxx = -load * (length - p.x) * p.y / i;
    let txy = load * (depth * depth / 4.0 - p.y * p.y) / (2.0 * i);
    SymTensor3::plane(sxx, 0.0, txy)
}

/// Structured test solid with the analytic field it is loaded by.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TestSolid {
    /// `[0, lx] x [0, ly] x [0, lz]` under uniform tension `stress` along x.
    Box { lx: f64, ly: f64, lz: f64, stress: f64 },
    /// Centered `width x height` plate of given thickness with a hole of
    /// `radius`, under far-field tension `stress` along x.
    PlateWithHole {
        width: f64,
        height: f64,
        thickness: f64,
        radius: f64,
        stress: f64,
    },
    /// `[0, length] x [-depth/2, depth/2] x [0, width]` with a tip `load`.
    Cantilever {
        length: f64,
        depth: f64,
        width: f64,
        load: f64,
    },
}

impl TestSolid {
    pub fn name(&self) -> &'static str {
        match self {
            TestSolid::Box { .. } => "box",
            TestSolid::PlateWithHole { .. } => "plate",
            TestSolid::Cantilever { .. } => "cantilever",
        }
    }

    /// Stress at a point of the solid.
    pub fn stress_at(&self, p: &Point3<f64>) -> Result<SymTensor3, SynthError> {
        match *self {
            TestSolid::Box { stress, .. } => Ok(SymTensor3::diag(stress, 0.0, 0.0)),
            TestSolid::PlateWithHole { radius, stress, .. } => kirsch_stress(Point2::new(p.x, p.y), stress, radius),
            TestSolid::Cantilever {
                length,
                depth,
                width,
                load,
            } => Ok(cantilever_stress(Point2::new(p.x, p.y), load, length, width, depth)),
        }
    }

    fn check(&self, edge: f64) -> Result<(), SynthError> {
        let dims: Vec<f64> = match *self {
            TestSolid::Box { lx, ly, lz, .. } => vec![lx, ly, lz],
            TestSolid::PlateWithHole {
                width,
                height,
                thickness,
                radius,
                ..
            } => {
                if 2.0 * radius >= width.min(height) {
                    return Err(SynthError::InvalidDims("hole does not fit in the plate".into()));
                }
                vec![width, height, thickness, radius, 0.5 * width.min(height) - radius]
            }
            TestSolid::Cantilever {
                length, depth, width, ..
            } => vec![length, depth, width],
        };
        if !(edge > 0.0) || dims.iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
            return Err(SynthError::InvalidDims(format!("{self:?} with edge {edge}")));
        }
        let feature = dims.iter().copied().fold(f64::INFINITY, f64::min);
        if edge > feature {
            return Err(SynthError::EdgeTooLarge { edge, feature });
        }
        Ok(())
    }
}

fn divisions(length: f64, edge: f64) -> usize {
    ((length / edge - 1e-9).ceil() as usize).max(1)
}

/// Six-tetrahedron (Kuhn) subdivision of a structured box grid.
fn box_tets(origin: Point3<f64>, size: [f64; 3], n: [usize; 3]) -> (Vec<Point3<f64>>, Vec<[usize; 4]>) {
    let [nx, ny, nz] = n;
    let id = |i: usize, j: usize, k: usize| (k * (ny + 1) + j) * (nx + 1) + i;
    let mut verts = Vec::with_capacity((nx + 1) * (ny + 1) * (nz + 1));
    for k in 0..=nz {
        for j in 0..=ny {
            for i in 0..=nx {
                verts.push(Point3::new(
                    origin.x + size[0] * i as f64 / nx as f64,
                    origin.y + size[1] * j as f64 / ny as f64,
                    origin.z + size[2] * k as f64 / nz as f64,
                ));
            }
        }
    }
    const PERMS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let mut tets = Vec::with_capacity(6 * nx * ny * nz);
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                for perm in PERMS {
                    let mut c = [i, j, k];
                    let mut tet = [id(i, j, k); 4];
                    for (s, &axis) in perm.iter().enumerate() {
                        c[axis] += 1;
                        tet[s + 1] = id(c[0], c[1], c[2]);
                    }
                    tets.push(tet);
                }
            }
        }
    }
    orient(&verts, &mut tets);
    (verts, tets)
}

fn orient(verts: &[Point3<f64>], tets: &mut [[usize; 4]]) {
    for t in tets.iter_mut() {
        let [a, b, c, d] = t.map(|i| verts[i]);
        if signed_volume6(&a, &b, &c, &d) < 0.0 {
            t.swap(2, 3);
        }
    }
}

/// Extrudes a planar triangulation through `[0, thickness]` in `nz` slabs,
/// splitting each prism into three tetrahedra so that neighbouring prisms
/// agree on their shared quad diagonals.
fn extrude(
    points: &[Point2<f64>],
    tris: &[[usize; 3]],
    thickness: f64,
    nz: usize,
) -> (Vec<Point3<f64>>, Vec<[usize; 4]>) {
    let np = points.len();
    let mut verts = Vec::with_capacity(np * (nz + 1));
    for k in 0..=nz {
        let z = thickness * k as f64 / nz as f64;
        verts.extend(points.iter().map(|p| Point3::new(p.x, p.y, z)));
    }
    let mut tets = Vec::with_capacity(3 * tris.len() * nz);
    for k in 0..nz {
        for tri in tris {
            let mut s = *tri;
            s.sort_unstable();
            let lo = |i: usize| k * np + i;
            let hi = |i: usize| (k + 1) * np + i;
            let [a, b, c] = s;
            tets.push([lo(a), lo(b), lo(c), hi(c)]);
            tets.push([lo(a), lo(b), hi(b), hi(c)]);
            tets.push([lo(a), hi(a), hi(b), hi(c)]);
        }
    }
    orient(&verts, &mut tets);
    (verts, tets)
}

/// Quad-dominant ring mesh between a polygonal hole and the plate outline,
/// returned as a triangulation.
fn plate_section(width: f64, height: f64, radius: f64, edge: f64) -> (Vec<Point2<f64>>, Vec<[usize; 3]>) {
    let (hw, hh) = (0.5 * width, 0.5 * height);
    // outline samples: corners included, counter-clockwise from (hw, 0)
    let nx = divisions(width, edge).max(2);
    let ny = divisions(height, edge).max(2);
    let nx = nx + nx % 2;
    let ny = ny + ny % 2;
    let mut outer = Vec::new();
    for j in 0..ny / 2 {
        outer.push(Point2::new(hw, height * j as f64 / ny as f64));
    }
    for i in 0..nx {
        outer.push(Point2::new(hw - width * i as f64 / nx as f64, hh));
    }
    for j in 0..ny {
        outer.push(Point2::new(-hw, hh - height * j as f64 / ny as f64));
    }
    for i in 0..nx {
        outer.push(Point2::new(-hw + width * i as f64 / nx as f64, -hh));
    }
    for j in 0..ny / 2 {
        outer.push(Point2::new(hw, -hh + height * j as f64 / ny as f64));
    }
    let nt = outer.len();
    let inner: Vec<Point2<f64>> = outer
        .iter()
        .map(|p| {
            let th = p.y.atan2(p.x);
            Point2::new(radius * th.cos(), radius * th.sin())
        })
        .collect();

    // radial grading from the hole's tangential spacing out to `edge`
    let h0 = (2.0 * PI * radius / nt as f64).min(edge);
    let mean_len = outer.iter().zip(&inner).map(|(o, i)| (o - i).norm()).sum::<f64>() / nt as f64;
    let ratio = ((mean_len - h0) / (mean_len - edge).max(1e-12)).max(1.0);
    let nr = if ratio > 1.0 + 1e-9 {
        ((1.0 + (edge / h0).ln() / ratio.ln()).round() as usize).max(divisions(mean_len, edge))
    } else {
        divisions(mean_len, edge)
    };
    let grow = if ratio > 1.0 + 1e-9 {
        // geometric steps with the first one close to h0
        let mut lo = 1.0;
        let mut hi = 2.0;
        let total = |q: f64| (q.powi(nr as i32) - 1.0) / (q - 1.0);
        let target = mean_len / h0;
        if total(hi) < target {
            hi = 4.0;
        }
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if total(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    } else {
        1.0
    };
    let t_of = |j: usize| {
        if (grow - 1.0).abs() < 1e-12 {
            j as f64 / nr as f64
        } else {
            (grow.powi(j as i32) - 1.0) / (grow.powi(nr as i32) - 1.0)
        }
    };

    let mut verts = Vec::with_capacity(nt * (nr + 1));
    for j in 0..=nr {
        let t = t_of(j);
        for k in 0..nt {
            verts.push(inner[k] + (outer[k] - inner[k]) * t);
        }
    }
    let id = |j: usize, k: usize| j * nt + k % nt;
    let mut tris = Vec::with_capacity(2 * nt * nr);
    for j in 0..nr {
        for k in 0..nt {
            let (a, b, c, d) = (id(j, k), id(j, k + 1), id(j + 1, k + 1), id(j + 1, k));
            let pa = verts[a];
            let pc = verts[c];
            let pb = verts[b];
            let pd = verts[d];
            if (pa - pc).norm_squared() <= (pb - pd).norm_squared() {
                tris.push([a, b, c]);
                tris.push([a, c, d]);
            } else {
                tris.push([a, b, d]);
                tris.push([b, c, d]);
            }
        }
    }
    (verts, tris)
}

/// Meshes a test solid with roughly `edge`-sized elements and samples its
/// field at tet centroids.
pub fn build_test_solid(solid: &TestSolid, edge: f64) -> Result<(TetMesh, Vec<SymTensor3>), SynthError> {
    solid.check(edge)?;
    let (verts, tets) = match *solid {
        TestSolid::Box { lx, ly, lz, .. } => box_tets(
            Point3::origin(),
            [lx, ly, lz],
            [divisions(lx, edge), divisions(ly, edge), divisions(lz, edge)],
        ),
        TestSolid::Cantilever {
            length, depth, width, ..
        } => box_tets(
            Point3::new(0.0, -0.5 * depth, 0.0),
            [length, depth, width],
            [divisions(length, edge), divisions(depth, edge), divisions(width, edge)],
        ),
        TestSolid::PlateWithHole {
            width,
            height,
            thickness,
            radius,
            ..
        } => {
            let (pts, tris) = plate_section(width, height, radius, edge);
            extrude(&pts, &tris, thickness, divisions(thickness, edge))
        }
    };
    let mesh = TetMesh::new(verts, tets)?;
    let tensors = (0..mesh.tets.len())
        .map(|t| solid.stress_at(&mesh.centroid(t)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((mesh, tensors))
}

/// Disk of the given radius: a center vertex and `rings` rings with `6 j`
/// vertices on ring `j`.
pub fn disk_layer(radius: f64, rings: usize) -> LayerMesh {
    assert!(rings >= 1);
    let mut verts = vec![Point2::origin()];
    let mut ring_start = vec![0usize];
    for j in 1..=rings {
        ring_start.push(verts.len());
        let n = 6 * j;
        let r = radius * j as f64 / rings as f64;
        for i in 0..n {
            let th = 2.0 * PI * i as f64 / n as f64;
            verts.push(Point2::new(r * th.cos(), r * th.sin()));
        }
    }
    let mut tris = Vec::new();
    for i in 0..6 {
        tris.push([0, 1 + i, 1 + (i + 1) % 6]);
    }
    for j in 2..=rings {
        let (na, nb) = (6 * (j - 1), 6 * j);
        let (sa, sb) = (ring_start[j - 1], ring_start[j]);
        let angle = |i: usize, n: usize| 2.0 * PI * i as f64 / n as f64;
        let (mut ia, mut ib) = (0, 0);
        while ia < na || ib < nb {
            let next_a = if ia < na { angle(ia + 1, na) } else { f64::INFINITY };
            let next_b = if ib < nb { angle(ib + 1, nb) } else { f64::INFINITY };
            if next_a < next_b {
                tris.push([sa + ia % na, sa + (ia + 1) % na, sb + ib % nb]);
                ia += 1;
            } else {
                tris.push([sa + ia % na, sb + (ib + 1) % nb, sb + ib % nb]);
                ib += 1;
            }
        }
    }
    let nf = tris.len();
    LayerMesh::from_triangles(0.0, verts, tris, vec![0; nf]).expect("disk triangulation is valid")
}

/// L-shaped layer: `[0, size]^2` minus its upper-right quarter, on a grid of
/// `2 n` cells per side.
pub fn l_shape_layer(size: f64, n: usize) -> LayerMesh {
    let full = crate::layer::grid_layer(0.0, size, 0.0, size, 2 * n + 1, 2 * n + 1);
    let half = 0.5 * size;
    let keep: Vec<[usize; 3]> = (0..full.triangles.len())
        .filter(|&f| {
            let c = full.centroid(f);
            !(c.x > half && c.y > half)
        })
        .map(|f| full.triangles[f])
        .collect();
    let mut remap = vec![usize::MAX; full.vertices.len()];
    let mut verts = Vec::new();
    let tris: Vec<[usize; 3]> = keep
        .iter()
        .map(|t| {
            t.map(|i| {
                if remap[i] == usize::MAX {
                    remap[i] = verts.len();
                    verts.push(full.vertices[i]);
                }
                remap[i]
            })
        })
        .collect();
    let nf = tris.len();
    LayerMesh::from_triangles(0.0, verts, tris, vec![0; nf]).expect("L triangulation is valid")
}

/// A scanline crossing of a boundary edge.
#[derive(Debug, Clone, Copy)]
struct Hit {
    line: usize,
    x: f64,
    loop_id: usize,
    /// Position along the loop: edge index plus fraction.
    param: f64,
}

/// Parallel scanlines at `angle_deg` and `spacing`, clipped to the layer,
/// joined end to end along the boundary into serpentine paths.
pub fn zigzag_infill(layer: &LayerMesh, spacing: f64, angle_deg: f64) -> Vec<Toolpath> {
    assert!(spacing > 0.0, "zigzag spacing must be positive");
    if layer.triangles.is_empty() {
        return Vec::new();
    }
    let to_local = Rotation2::new(-angle_deg.to_radians());
    let to_world = to_local.inverse();
    let loops: Vec<Vec<Point2<f64>>> = layer
        .boundary_loops()
        .iter()
        .map(|lp| lp.iter().map(|&i| to_local * layer.vertices[i]).collect())
        .collect();
    let (ymin, ymax) = loops
        .iter()
        .flatten()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            (lo.min(p.y), hi.max(p.y))
        });
    let lines: Vec<f64> = (0..)
        .map(|k| ymin + (k as f64 + 0.5) * spacing)
        .take_while(|&y| y < ymax)
        .collect();

    // crossings grouped by scanline, and by loop in boundary order
    let mut by_line: Vec<Vec<Hit>> = vec![Vec::new(); lines.len()];
    for (l, lp) in loops.iter().enumerate() {
        let n = lp.len();
        for e in 0..n {
            let (a, b) = (lp[e], lp[(e + 1) % n]);
            let (lo, hi) = (a.y.min(b.y), a.y.max(b.y));
            let first = ((lo - ymin) / spacing - 0.5).floor().max(0.0) as usize;
            for (k, &y) in lines.iter().enumerate().skip(first) {
                if y >= hi {
                    break;
                }
                if (a.y <= y) != (b.y <= y) {
                    let t = (y - a.y) / (b.y - a.y);
                    by_line[k].push(Hit {
                        line: k,
                        x: a.x + t * (b.x - a.x),
                        loop_id: l,
                        param: e as f64 + t,
                    });
                }
            }
        }
    }

    // segments: pairs of consecutive crossings along each line
    let mut segs: Vec<[Hit; 2]> = Vec::new();
    for hits in &mut by_line {
        hits.sort_by(|a, b| a.x.total_cmp(&b.x));
        for pair in hits.chunks_exact(2) {
            if pair[1].x - pair[0].x > 1e-12 {
                segs.push([pair[0], pair[1]]);
            }
        }
    }

    // neighbours of each crossing along its loop
    let mut on_loop: Vec<Vec<(f64, usize, usize)>> = vec![Vec::new(); loops.len()];
    for (s, seg) in segs.iter().enumerate() {
        for (side, h) in seg.iter().enumerate() {
            on_loop[h.loop_id].push((h.param, s, side));
        }
    }
    for l in &mut on_loop {
        l.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    let neighbours = |h: &Hit| -> [(usize, usize, bool); 2] {
        let list = &on_loop[h.loop_id];
        let pos = list.iter().position(|e| e.0 == h.param).unwrap();
        let m = list.len();
        let next = list[(pos + 1) % m];
        let prev = list[(pos + m - 1) % m];
        [(next.1, next.2, true), (prev.1, prev.2, false)]
    };
    let boundary_between = |h: &Hit, g: &Hit, forward: bool| -> Vec<Point2<f64>> {
        let lp = &loops[h.loop_id];
        let n = lp.len();
        let mut pts = Vec::new();
        if forward {
            let base = h.param.floor() as usize;
            for k in 1..=n {
                let v = (base + k) % n;
                if !wrapped_before(h.param, g.param, v, n) {
                    break;
                }
                pts.push(lp[v]);
            }
        } else {
            let top = h.param.ceil() as usize + n;
            for k in 1..=n {
                let v = (top - k) % n;
                if (v as f64) == h.param {
                    continue;
                }
                if !wrapped_before(g.param, h.param, v, n) {
                    break;
                }
                pts.push(lp[v]);
            }
        }
        pts
    };

    let mut used = vec![false; segs.len()];
    let mut out = Vec::new();
    let mut order: Vec<usize> = (0..segs.len()).collect();
    order.sort_by(|&a, &b| {
        segs[a][0]
            .line
            .cmp(&segs[b][0].line)
            .then(segs[a][0].x.total_cmp(&segs[b][0].x))
    });
    for &start in &order {
        if used[start] {
            continue;
        }
        used[start] = true;
        let mut pts = vec![
            Point2::new(segs[start][0].x, lines[segs[start][0].line]),
            Point2::new(segs[start][1].x, lines[segs[start][1].line]),
        ];
        let (mut cur, mut exit) = (start, 1usize);
        loop {
            let h = segs[cur][exit];
            let next = neighbours(&h)
                .into_iter()
                .find(|&(s, _, _)| !used[s] && segs[s][0].line == h.line + 1 && segs[s][0].loop_id == h.loop_id);
            let Some((s, side, forward)) = next else { break };
            let g = segs[s][side];
            if g.loop_id != h.loop_id {
                break;
            }
            for p in boundary_between(&h, &g, forward) {
                pts.push(p);
            }
            used[s] = true;
            pts.push(Point2::new(g.x, lines[g.line]));
            let other = segs[s][1 - side];
            pts.push(Point2::new(other.x, lines[other.line]));
            cur = s;
            exit = 1 - side;
        }
        pts.dedup_by(|a, b| (*a - *b).norm() <= 1e-9);
        let world: Vec<Point2<f64>> = pts.into_iter().map(|p| to_world * p).collect();
        out.push(Toolpath::new(world, PathKind::Zigzag, false));
    }
    out
}

/// Whether loop vertex `v` (index modulo `n`) lies strictly after parameter
/// `from` and strictly before `to` walking forward around the loop.
fn wrapped_before(from: f64, to: f64, v: usize, n: usize) -> bool {
    let nf = n as f64;
    let span = (to - from).rem_euclid(nf);
    let off = (v as f64 - from).rem_euclid(nf);
    off > 0.0 && off < span
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kirsch_known_values() {
        let (s, a) = (10.0, 2.0);
        let far = kirsch_stress(Point2::new(1e5, 3e4), s, a).unwrap();
        assert!((far.xx - s).abs() < 1e-6 && far.yy.abs() < 1e-6 && far.xy.abs() < 1e-6);
        // hole equator: hoop stress along x equals 3S
        let eq = kirsch_stress(Point2::new(0.0, a), s, a).unwrap();
        assert!((eq.xx - 3.0 * s).abs() < 1e-9);
        assert!(eq.yy.abs() < 1e-9 && eq.xy.abs() < 1e-9);
        let pole = kirsch_stress(Point2::new(a, 0.0), s, a).unwrap();
        assert!((pole.yy + s).abs() < 1e-9);
        assert!(matches!(
            kirsch_stress(Point2::new(0.5, 0.0), s, a),
            Err(SynthError::InsideHole { .. })
        ));
    }

    #[test]
    fn cantilever_known_values() {
        let (p, l, b, h) = (100.0, 50.0, 5.0, 10.0);
        let i = b * h * h * h / 12.0;
        let na = cantilever_stress(Point2::new(10.0, 0.0), p, l, b, h);
        assert_eq!(na.xx, 0.0);
        assert!((na.xy - p * h * h / (8.0 * i)).abs() < 1e-12);
        let tip = cantilever_stress(Point2::new(l, 3.0), p, l, b, h);
        assert_eq!(tip.xx, 0.0);
        let root = cantilever_stress(Point2::new(0.0, -h / 2.0), p, l, b, h);
        assert!((root.xx - p * l * h / (2.0 * i)).abs() < 1e-9);
    }

    #[test]
    fn box_solid_counts() {
        let solid = TestSolid::Box {
            lx: 10.0,
            ly: 10.0,
            lz: 2.0,
            stress: 5.0,
        };
        let (mesh, t) = build_test_solid(&solid, 1.0).unwrap();
        assert!((800..=2000).contains(&mesh.tets.len()));
        assert!(t.iter().all(|x| *x == SymTensor3::diag(5.0, 0.0, 0.0)));
        let vol: f64 = (0..mesh.tets.len()).map(|i| mesh.signed_volume(i)).sum();
        assert!((vol - 200.0).abs() < 1e-9);
        assert!(matches!(
            build_test_solid(&solid, 50.0),
            Err(SynthError::EdgeTooLarge { .. })
        ));
    }

    #[test]
    fn plate_mesh_is_valid_and_conforming() {
        let solid = TestSolid::PlateWithHole {
            width: 20.0,
            height: 20.0,
            thickness: 2.0,
            radius: 2.0,
            stress: 1.0,
        };
        let (mesh, _) = build_test_solid(&solid, 1.0).unwrap();
        for t in 0..mesh.tets.len() {
            let c = mesh.centroid(t);
            assert!(c.x.hypot(c.y) >= 2.0);
        }
        let mesh = mesh.build_adjacency().unwrap();
        // a polygonal hole removes slightly less than the disk
        let vol: f64 = (0..mesh.tets.len()).map(|i| mesh.signed_volume(i)).sum();
        let exact = 2.0 * (400.0 - 4.0 * PI);
        assert!(vol > exact && vol < exact + 2.0 * 0.05 * 4.0 * PI);
    }

    #[test]
    fn disk_layer_area() {
        let d = disk_layer(1.0, 10);
        // inscribed polygons lose a little area
        assert!((d.total_area() - PI).abs() < 0.02 * PI);
        assert_eq!(d.boundary_loops().len(), 1);
        assert_eq!(d.boundary_loops()[0].len(), 60);
    }

    #[test]
    fn unit_square_serpentine() {
        let l = crate::layer::grid_layer(0.0, 1.0, 0.0, 1.0, 5, 5);
        let z = zigzag_infill(&l, 0.25, 0.0);
        assert_eq!(z.len(), 1);
        let ys: Vec<f64> = z[0].points.iter().map(|p| p.y).collect();
        for y in [0.125, 0.375, 0.625, 0.875] {
            assert!(ys.iter().any(|v| (v - y).abs() < 1e-12));
        }
        // four unit scanlines and three quarter-unit joins
        assert!((z[0].length() - 4.75).abs() < 1e-9);
    }

    #[test]
    fn vertical_scanlines() {
        let l = crate::layer::grid_layer(0.0, 1.0, 0.0, 1.0, 5, 5);
        let z = zigzag_infill(&l, 0.25, 90.0);
        assert_eq!(z.len(), 1);
        let xs: Vec<f64> = z[0].points.iter().map(|p| p.x).collect();
        for x in [0.125, 0.375, 0.625, 0.875] {
            assert!(xs.iter().any(|v| (v - x).abs() < 1e-9));
        }
    }
}
