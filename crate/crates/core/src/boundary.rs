//! Distance-to-boundary field, boundary-conformal paths, and joining of
//! stress paths into continuous strands.

use std::collections::VecDeque;

use log::warn;
use nalgebra::{Point2, Vector2};
use thiserror::Error;

use crate::field2d::fit_gradient;
use crate::geometry::point_segment_distance;
use crate::isopath::{extract_isocurves, PathKind, Toolpath};
use crate::layer::{LayerMesh, Locator};
use crate::sparse::{SolveError, SymmetricSystem};

/// Default shortest printable fibre path (mm).
pub const DEFAULT_MIN_PATH_LENGTH: f64 = 42.0;
/// Default heat time step as a multiple of the squared mean edge length.
pub const DEFAULT_HEAT_T_SCALE: f64 = 1.0;
/// Offsets of the conformal curves from the source, in units of the spacing.
pub const INNER_OFFSET: f64 = 1.5;
pub const TRUNCATION_OFFSET: f64 = 2.5;
/// Straight joins must be shorter than this many spacings.
pub const MAX_JOIN_GAP: f64 = 2.0;

#[derive(Debug, Error)]
pub enum BoundaryError {
    #[error("source boundary edge set is empty")]
    EmptySource,
    #[error("source edge {0} is not a boundary edge of the layer")]
    BadSourceEdge(usize),
    #[error("heat time scale must be positive, got {0}")]
    BadTimeScale(f64),
    #[error("distance solve failed: {0}")]
    Solve(#[from] SolveError),
}

/// Geodesic distance to a set of boundary edges, per layer vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceField {
    pub values: Vec<f64>,
    /// Indices into the layer's `boundary_edges`.
    pub source: Vec<usize>,
    pub source_vertices: Vec<usize>,
    /// Vertices not connected to the source; their distance is infinite.
    pub unreachable: usize,
}

impl DistanceField {
    /// Values with infinities replaced by a large finite number, for interpolation.
    fn finite_values(&self) -> Vec<f64> {
        self.values
            .iter()
            .map(|&d| if d.is_finite() { d } else { 1e300 })
            .collect()
    }
}

/// Boundary edges whose endpoints both lie in one of the boxes
/// `[xmin, ymin, xmax, ymax]`.
pub fn select_source_edges(layer: &LayerMesh, boxes: &[[f64; 4]]) -> Vec<usize> {
    let inside = |p: &Point2<f64>, b: &[f64; 4]| {
        let tol = 1e-9 * (1.0 + b.iter().fold(0.0f64, |m, v| m.max(v.abs())));
        p.x >= b[0] - tol && p.y >= b[1] - tol && p.x <= b[2] + tol && p.y <= b[3] + tol
    };
    layer
        .boundary_edges
        .iter()
        .enumerate()
        .filter(|(_, &[a, b])| {
            boxes
                .iter()
                .any(|bx| inside(&layer.vertices[a], bx) && inside(&layer.vertices[b], bx))
        })
        .map(|(k, _)| k)
        .collect()
}

/// Heat-method distance from the given boundary edges.
///
/// One backward-Euler heat step with `t = t_scale * h^2` (h the mean edge
/// length), per-face normalization of the negative heat gradient, then a
/// least-squares potential fit with the source vertices held at zero.
pub fn heat_distance(layer: &LayerMesh, source: &[usize], t_scale: f64) -> Result<DistanceField, BoundaryError> {
    if source.is_empty() {
        return Err(BoundaryError::EmptySource);
    }
    if !(t_scale > 0.0) {
        return Err(BoundaryError::BadTimeScale(t_scale));
    }
    let n = layer.vertices.len();
    let mut is_source = vec![false; n];
    for &e in source {
        let edge = layer.boundary_edges.get(e).ok_or(BoundaryError::BadSourceEdge(e))?;
        is_source[edge[0]] = true;
        is_source[edge[1]] = true;
    }
    let source_vertices: Vec<usize> = (0..n).filter(|&i| is_source[i]).collect();

    let graph = layer.vertex_graph();
    let mut reached = is_source.clone();
    let mut queue: VecDeque<usize> = source_vertices.iter().copied().collect();
    while let Some(v) = queue.pop_front() {
        for &(w, _) in &graph[v] {
            if !reached[w] {
                reached[w] = true;
                queue.push_back(w);
            }
        }
    }
    let unreachable: Vec<(usize, f64)> = (0..n).filter(|&i| !reached[i]).map(|i| (i, 0.0)).collect();
    if !unreachable.is_empty() {
        warn!(
            "{} vertices of layer z={} are not connected to the distance source",
            unreachable.len(),
            layer.z
        );
    }

    let h = layer.mean_edge_length();
    let t = t_scale * h * h;
    let mut heat = SymmetricSystem::new(n);
    let mut rhs = vec![0.0; n];
    for f in 0..layer.triangles.len() {
        let g = layer.shape_gradients(f);
        let tri = layer.triangles[f];
        let area = layer.face_area[f];
        for a in 0..3 {
            let lumped = area / 3.0;
            heat.add(tri[a], tri[a], lumped);
            if is_source[tri[a]] {
                rhs[tri[a]] += lumped;
            }
            for b in a..3 {
                heat.add(tri[a], tri[b], t * area * g[a].dot(&g[b]));
            }
        }
    }
    let u = heat.solve_pinned(&rhs, &unreachable)?;

    let x: Vec<Vector2<f64>> = (0..layer.triangles.len())
        .map(|f| {
            let g = layer.gradient(f, &u);
            let norm = g.norm();
            if norm > 0.0 {
                -g / norm
            } else {
                Vector2::zeros()
            }
        })
        .collect();

    let mut pins: Vec<(usize, f64)> = source_vertices.iter().map(|&i| (i, 0.0)).collect();
    pins.extend_from_slice(&unreachable);
    let mut values = fit_gradient(layer, &x, true, &pins)?;
    for (i, d) in values.iter_mut().enumerate() {
        *d = if reached[i] { d.max(0.0) } else { f64::INFINITY };
    }
    Ok(DistanceField {
        values,
        source: source.to_vec(),
        source_vertices,
        unreachable: unreachable.len(),
    })
}

/// Boundary-conformal curves at `1.5 w` and `2.5 w` from the source.
pub fn conformal_curves(df: &DistanceField, layer: &LayerMesh, w: f64) -> Vec<Toolpath> {
    let values: Vec<f64> = df
        .values
        .iter()
        .map(|&d| if d.is_finite() { d } else { -1.0 })
        .collect();
    let mut out = Vec::new();
    for k in [INNER_OFFSET, TRUNCATION_OFFSET] {
        let level = k * w;
        let curves = extract_isocurves(layer, &values, level);
        if curves.is_empty() {
            warn!("layer z={}: no boundary curve at distance {}", layer.z, level);
        }
        out.extend(curves.into_iter().map(|mut c| {
            c.kind = PathKind::Boundary;
            c.isovalue = Some(level);
            c
        }));
    }
    out
}

/// Counts describing what [`truncate_and_connect`] did.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConnectStats {
    pub arc_joins: usize,
    pub straight_joins: usize,
    /// Truncation endpoints left without a partner on their curve.
    pub unpaired: usize,
    /// Straight joins that cross another path.
    pub crossings: usize,
}

#[derive(Debug, Clone)]
struct Fragment {
    points: Vec<Point2<f64>>,
    closed: bool,
    iso: Option<f64>,
    /// Whether each end (start, end) was created by truncation.
    cut: [bool; 2],
}

/// Splits a curve into the pieces where `d >= level`.
fn clip_curve(curve: &Toolpath, d: &[f64], level: f64) -> Vec<Fragment> {
    let keep = |k: usize| d[k] >= level;
    let n = curve.points.len();
    if (0..n).all(keep) {
        return vec![Fragment {
            points: curve.points.clone(),
            closed: curve.closed,
            iso: curve.isovalue,
            cut: [false; 2],
        }];
    }
    // closed curves are unrolled starting at a removed point
    let order: Vec<usize> = if curve.closed {
        let s = (0..n).find(|&k| !keep(k)).unwrap();
        (0..=n).map(|k| (s + k) % n).collect()
    } else {
        (0..n).collect()
    };
    let crossing = |i: usize, j: usize| {
        let t = (level - d[i]) / (d[j] - d[i]);
        curve.points[i] + (curve.points[j] - curve.points[i]) * t
    };

    let mut out = Vec::new();
    let mut current: Option<Fragment> = None;
    for w in 0..order.len() {
        let k = order[w];
        if keep(k) {
            let frag = current.get_or_insert_with(|| {
                let mut f = Fragment {
                    points: Vec::new(),
                    closed: false,
                    iso: curve.isovalue,
                    cut: [false; 2],
                };
                if w > 0 {
                    f.points.push(crossing(order[w - 1], k));
                    f.cut[0] = true;
                }
                f
            });
            frag.points.push(curve.points[k]);
        } else if let Some(mut frag) = current.take() {
            frag.points.push(crossing(order[w - 1], k));
            frag.cut[1] = true;
            out.push(frag);
        }
    }
    if let Some(frag) = current {
        out.push(frag);
    }
    for f in &mut out {
        f.points.dedup_by(|a, b| (*a - *b).norm() <= 1e-9);
    }
    out.retain(|f| f.points.len() >= 2);
    out
}

/// Arc-length position of the point of `curve` closest to `p`.
fn project_on_curve(curve: &Toolpath, p: &Point2<f64>) -> (f64, f64) {
    let mut best = (f64::INFINITY, 0.0);
    let mut s0 = 0.0;
    for (a, b) in curve.segments() {
        let dist = point_segment_distance(p, &a, &b);
        let len = (b - a).norm();
        if dist < best.0 {
            let t = if len > 0.0 {
                ((p - a).dot(&(b - a)) / (len * len)).clamp(0.0, 1.0)
            } else {
                0.0
            };
            best = (dist, s0 + t * len);
        }
        s0 += len;
    }
    best
}

/// Points of `curve` strictly between arc positions `from` and `to`,
/// walking forward (increasing arc length) or backward, followed by the
/// point at `to`.
fn arc_points(curve: &Toolpath, from: f64, to: f64, forward: bool) -> Vec<Point2<f64>> {
    let n = curve.points.len();
    let mut cum = vec![0.0; n + 1];
    for k in 0..n {
        let next = if k + 1 < n {
            curve.points[k + 1]
        } else {
            curve.points[0]
        };
        cum[k + 1] = cum[k] + (next - curve.points[k]).norm();
    }
    let perimeter = if curve.closed { cum[n] } else { cum[n - 1] };
    let at = |s: f64| -> Point2<f64> {
        let s = if curve.closed { s.rem_euclid(perimeter) } else { s };
        let limit = if curve.closed { n } else { n - 1 };
        let k = (0..limit).find(|&k| s <= cum[k + 1]).unwrap_or(limit - 1);
        let len = cum[k + 1] - cum[k];
        let t = if len > 0.0 {
            ((s - cum[k]) / len).clamp(0.0, 1.0)
        } else {
            0.0
        };
        curve.points[k] + (curve.points[(k + 1) % n] - curve.points[k]) * t
    };
    let (lo, hi) = if forward { (from, to) } else { (to, from) };
    let hi = if curve.closed && hi < lo { hi + perimeter } else { hi };
    let mut inner: Vec<(f64, Point2<f64>)> = Vec::new();
    let laps = if curve.closed { 2 } else { 1 };
    for lap in 0..laps {
        for k in 0..n {
            let s = cum[k] + lap as f64 * perimeter;
            if s > lo && s < hi {
                inner.push((s, curve.points[k]));
            }
        }
    }
    inner.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut pts: Vec<Point2<f64>> = inner.into_iter().map(|(_, p)| p).collect();
    if !forward {
        pts.reverse();
    }
    pts.push(at(to));
    pts
}

/// A fragment end: (fragment index, 0 = start / 1 = end).
type End = (usize, usize);

struct Link {
    to: End,
    /// Intermediate points from this end towards `to` (excluding both ends).
    via: Vec<Point2<f64>>,
}

/// Chains fragments along links into strands.
fn build_strands(frags: &[Fragment], links: &[[Option<Link>; 2]], layer: usize) -> Vec<Toolpath> {
    let mut visited = vec![false; frags.len()];
    let mut out = Vec::new();

    let walk = |start: End, visited: &mut Vec<bool>| -> Toolpath {
        let mut tp = Toolpath::new(Vec::new(), PathKind::Stress, false);
        tp.layer = layer;
        let mut isos = Vec::new();
        let (mut f, mut side) = start;
        loop {
            visited[f] = true;
            isos.push(frags[f].iso);
            let mut pts = frags[f].points.clone();
            if side == 1 {
                pts.reverse();
            }
            tp.points.extend(pts);
            let exit = 1 - side;
            match &links[f][exit] {
                Some(link) if !visited[link.to.0] => {
                    let begin = tp.points.len() - 1;
                    tp.points.extend(link.via.iter().copied());
                    tp.connectors.push((begin, begin + link.via.len() + 1));
                    (f, side) = link.to;
                }
                Some(link) if link.to == start => {
                    let begin = tp.points.len() - 1;
                    tp.points.extend(link.via.iter().copied());
                    tp.connectors.push((begin, begin + link.via.len() + 1));
                    tp.closed = true;
                    break;
                }
                _ => break,
            }
        }
        tp.isovalue = match isos.as_slice() {
            [single] => *single,
            _ => None,
        };
        tp
    };

    for f in 0..frags.len() {
        if visited[f] || frags[f].closed {
            continue;
        }
        for side in 0..2 {
            if links[f][side].is_none() && !visited[f] {
                out.push(walk((f, side), &mut visited));
            }
        }
    }
    for f in 0..frags.len() {
        if visited[f] {
            continue;
        }
        if frags[f].closed {
            visited[f] = true;
            let mut tp = Toolpath::new(frags[f].points.clone(), PathKind::Stress, true);
            tp.layer = layer;
            tp.isovalue = frags[f].iso;
            out.push(tp);
        } else {
            out.push(walk((f, 0), &mut visited));
        }
    }
    for tp in &mut out {
        tidy(tp);
    }
    out
}

/// Removes repeated consecutive points, remapping connector spans.
fn tidy(tp: &mut Toolpath) {
    let mut keep = Vec::with_capacity(tp.points.len());
    let mut remap = Vec::with_capacity(tp.points.len());
    for (k, p) in tp.points.iter().enumerate() {
        if keep.last().is_some_and(|&j: &usize| (tp.points[j] - p).norm() <= 1e-9) {
            remap.push(keep.len() - 1);
        } else {
            remap.push(keep.len());
            keep.push(k);
        }
    }
    let mut closing_dup = false;
    if tp.closed && keep.len() > 2 && (tp.points[keep[0]] - tp.points[*keep.last().unwrap()]).norm() <= 1e-9 {
        keep.pop();
        closing_dup = true;
    }
    let m = keep.len();
    let spans: Vec<(usize, usize)> = tp
        .connectors
        .iter()
        .map(|&(a, b)| {
            let a2 = remap[a.min(remap.len() - 1)];
            let b2 = if b >= remap.len() { m } else { remap[b] };
            let b2 = if closing_dup && b2 >= m { m } else { b2 };
            (a2.min(m), b2.min(m))
        })
        .filter(|(a, b)| b > a)
        .collect();
    tp.points = keep.iter().map(|&k| tp.points[k]).collect();
    tp.connectors = spans;
}

fn segments_cross(a: Point2<f64>, b: Point2<f64>, c: Point2<f64>, d: Point2<f64>) -> bool {
    let orient = |p: Point2<f64>, q: Point2<f64>, r: Point2<f64>| (q - p).perp(&(r - p));
    let (d1, d2) = (orient(c, d, a), orient(c, d, b));
    let (d3, d4) = (orient(a, b, c), orient(a, b, d));
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

/// Truncates stress curves at distance `2.5 w`, joins the new ends along
/// the `2.5 w` curves, then joins remaining open ends closer than `2 w`
/// with straight segments. Returns the stress strands followed by the
/// `1.5 w` boundary curves.
pub fn truncate_and_connect(
    layer: &LayerMesh,
    stress: &[Toolpath],
    boundary: &[Toolpath],
    df: Option<&DistanceField>,
    w: f64,
) -> (Vec<Toolpath>, ConnectStats) {
    let layer_index = stress.first().map_or(0, |t| t.layer);
    let mut stats = ConnectStats::default();
    let level = TRUNCATION_OFFSET * w;
    let is_level = |c: &Toolpath, k: f64| c.isovalue.is_some_and(|v| (v - k * w).abs() <= 1e-12 * w.max(1.0));
    let cut_curves: Vec<&Toolpath> = boundary.iter().filter(|c| is_level(c, TRUNCATION_OFFSET)).collect();
    let kept_boundary: Vec<Toolpath> = boundary
        .iter()
        .filter(|c| !is_level(c, TRUNCATION_OFFSET))
        .cloned()
        .collect();

    // truncation
    let mut frags: Vec<Fragment> = Vec::new();
    match df {
        Some(df) => {
            let locator = Locator::new(layer);
            let dv = df.finite_values();
            for c in stress {
                let d: Vec<f64> = c
                    .points
                    .iter()
                    .map(|&p| locator.interpolate(p, &dv).unwrap_or(f64::INFINITY))
                    .collect();
                frags.extend(clip_curve(c, &d, level));
            }
        }
        None => frags.extend(stress.iter().map(|c| Fragment {
            points: c.points.clone(),
            closed: c.closed,
            iso: c.isovalue,
            cut: [false; 2],
        })),
    }

    let mut links: Vec<[Option<Link>; 2]> = (0..frags.len()).map(|_| [None, None]).collect();

    // arcs along the truncation curves
    let mut on_curve: Vec<Vec<(End, f64)>> = vec![Vec::new(); cut_curves.len()];
    for (f, frag) in frags.iter().enumerate() {
        for side in 0..2 {
            if !frag.cut[side] {
                continue;
            }
            let p = if side == 0 {
                frag.points[0]
            } else {
                *frag.points.last().unwrap()
            };
            let best = cut_curves
                .iter()
                .enumerate()
                .map(|(ci, c)| (ci, project_on_curve(c, &p)))
                .min_by(|a, b| a.1 .0.total_cmp(&b.1 .0));
            match best {
                Some((ci, (_, s))) => on_curve[ci].push(((f, side), s)),
                None => stats.unpaired += 1,
            }
        }
    }
    for (ci, ends) in on_curve.iter().enumerate() {
        let curve = cut_curves[ci];
        let perimeter = curve.length();
        let mut pairs = Vec::new();
        for i in 0..ends.len() {
            for j in i + 1..ends.len() {
                let delta = ends[j].1 - ends[i].1;
                let (gap, forward) = if curve.closed {
                    let fwd = delta.rem_euclid(perimeter);
                    if fwd <= perimeter - fwd {
                        (fwd, true)
                    } else {
                        (perimeter - fwd, false)
                    }
                } else {
                    (delta.abs(), delta >= 0.0)
                };
                pairs.push((gap, i, j, forward));
            }
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then((a.1, a.2).cmp(&(b.1, b.2))));
        let mut used = vec![false; ends.len()];
        for (_, i, j, forward) in pairs {
            if used[i] || used[j] {
                continue;
            }
            used[i] = true;
            used[j] = true;
            let (ei, si) = ends[i];
            let (ej, sj) = ends[j];
            let mut via = arc_points(curve, si, sj, forward);
            via.pop();
            let mut back = via.clone();
            back.reverse();
            links[ei.0][ei.1] = Some(Link { to: ej, via });
            links[ej.0][ej.1] = Some(Link { to: ei, via: back });
            stats.arc_joins += 1;
        }
        let left = used.iter().filter(|u| !**u).count();
        if left > 0 {
            warn!("layer z={}: {} truncated ends have no partner", layer.z, left);
            stats.unpaired += left;
        }
    }

    // straight joins between remaining open ends of different strands
    let mut set: Vec<usize> = (0..frags.len()).collect();
    fn find(set: &mut [usize], mut x: usize) -> usize {
        while set[x] != x {
            set[x] = set[set[x]];
            x = set[x];
        }
        x
    }
    for f in 0..frags.len() {
        for side in 0..2 {
            if let Some(l) = &links[f][side] {
                let (a, b) = (find(&mut set, f), find(&mut set, l.to.0));
                set[a] = b;
            }
        }
    }
    let end_point = |e: End| {
        let pts = &frags[e.0].points;
        if e.1 == 0 {
            pts[0]
        } else {
            pts[pts.len() - 1]
        }
    };
    let open_ends: Vec<End> = (0..frags.len())
        .filter(|&f| !frags[f].closed)
        .flat_map(|f| [(f, 0), (f, 1)])
        .filter(|&(f, s)| links[f][s].is_none())
        .collect();
    let max_gap = MAX_JOIN_GAP * w;
    let mut candidates = Vec::new();
    for i in 0..open_ends.len() {
        for j in i + 1..open_ends.len() {
            let gap = (end_point(open_ends[i]) - end_point(open_ends[j])).norm();
            if gap < max_gap && open_ends[i].0 != open_ends[j].0 {
                candidates.push((gap, i, j));
            }
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then((a.1, a.2).cmp(&(b.1, b.2))));
    let mut used = vec![false; open_ends.len()];
    let mut joins = Vec::new();
    for (_, i, j) in candidates {
        if used[i] || used[j] {
            continue;
        }
        let (ei, ej) = (open_ends[i], open_ends[j]);
        let (a, b) = (find(&mut set, ei.0), find(&mut set, ej.0));
        if a == b {
            continue;
        }
        set[a] = b;
        used[i] = true;
        used[j] = true;
        links[ei.0][ei.1] = Some(Link {
            to: ej,
            via: Vec::new(),
        });
        links[ej.0][ej.1] = Some(Link {
            to: ei,
            via: Vec::new(),
        });
        joins.push((end_point(ei), end_point(ej)));
        stats.straight_joins += 1;
    }

    let strands = build_strands(&frags, &links, layer_index);
    for &(p, q) in &joins {
        for other in strands.iter().chain(kept_boundary.iter()) {
            for (a, b) in other.segments() {
                if segments_cross(p, q, a, b) {
                    stats.crossings += 1;
                }
            }
        }
    }
    if stats.crossings > 0 {
        warn!(
            "layer z={}: {} straight joins cross other paths",
            layer.z, stats.crossings
        );
    }

    let mut out = strands;
    out.extend(kept_boundary.into_iter().map(|mut c| {
        c.layer = layer_index;
        c
    }));
    (out, stats)
}

/// Drops paths shorter than `min_length`; returns the kept paths, the
/// number removed and their total length.
pub fn filter_min_length(paths: Vec<Toolpath>, min_length: f64) -> (Vec<Toolpath>, usize, f64) {
    let mut removed = 0;
    let mut removed_length = 0.0;
    let kept = paths
        .into_iter()
        .filter(|p| {
            let len = p.length();
            if len < min_length {
                removed += 1;
                removed_length += len;
                false
            } else {
                true
            }
        })
        .collect();
    (kept, removed, removed_length)
}
