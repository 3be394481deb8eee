//! Isocurve extraction and adaptive isovalue selection under a minimum
//! spacing constraint.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::str::FromStr;

use log::warn;
use nalgebra::Point2;
use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{polyline_length, segments, SegmentGrid};
use crate::layer::LayerMesh;

/// Default minimum spacing between neighbouring fibre paths (mm).
pub const DEFAULT_SPACING: f64 = 1.0;
/// Upper bound on the number of isovalues tried per layer.
pub const MAX_ISOCURVES: usize = 10_000;
/// Consecutive points closer than this are merged.
const POINT_EPS: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum IsoError {
    #[error("at least two isovalue groups are required, got {0}")]
    TooFewGroups(usize),
    #[error("scalar field is constant on the layer")]
    ConstantField,
    #[error("spacing must be positive, got {0}")]
    BadSpacing(f64),
    #[error("field has {values} values but the layer has {vertices} vertices")]
    SizeMismatch { values: usize, vertices: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PathKind {
    Stress,
    Boundary,
    Connector,
    Zigzag,
}

impl PathKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PathKind::Stress => "stress",
            PathKind::Boundary => "boundary",
            PathKind::Connector => "connector",
            PathKind::Zigzag => "zigzag",
        }
    }
}

impl fmt::Display for PathKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PathKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "stress" => Ok(PathKind::Stress),
            "boundary" => Ok(PathKind::Boundary),
            "connector" => Ok(PathKind::Connector),
            "zigzag" => Ok(PathKind::Zigzag),
            other => Err(format!("unknown path kind '{other}'")),
        }
    }
}

/// Planar polyline deposited as one continuous stroke.
///
/// `connectors` lists half-open segment ranges `[a, b)` that were inserted
/// to join fragments; segment `k` runs from point `k` to point `k + 1`
/// (wrapping to point 0 for the closing segment of a closed path).
#[derive(Debug, Clone, PartialEq)]
pub struct Toolpath {
    pub points: Vec<Point2<f64>>,
    pub kind: PathKind,
    pub closed: bool,
    pub layer: usize,
    pub isovalue: Option<f64>,
    pub connectors: Vec<(usize, usize)>,
}

impl Toolpath {
    pub fn new(points: Vec<Point2<f64>>, kind: PathKind, closed: bool) -> Self {
        Self {
            points,
            kind,
            closed,
            layer: 0,
            isovalue: None,
            connectors: Vec::new(),
        }
    }

    pub fn length(&self) -> f64 {
        polyline_length(&self.points, self.closed)
    }

    pub fn segment_count(&self) -> usize {
        match self.points.len() {
            0 | 1 => 0,
            2 => 1,
            n if self.closed => n,
            n => n - 1,
        }
    }

    pub fn is_connector_segment(&self, k: usize) -> bool {
        self.connectors.iter().any(|&(a, b)| a <= k && k < b)
    }

    /// Total length of the connector segments.
    pub fn connector_length(&self) -> f64 {
        let n = self.points.len();
        (0..self.segment_count())
            .filter(|&k| self.is_connector_segment(k))
            .map(|k| (self.points[(k + 1) % n] - self.points[k]).norm())
            .sum()
    }

    pub fn segments(&self) -> Vec<(Point2<f64>, Point2<f64>)> {
        segments(&self.points, self.closed)
    }

    pub fn endpoints(&self) -> Option<(Point2<f64>, Point2<f64>)> {
        if self.closed {
            return None;
        }
        Some((*self.points.first()?, *self.points.last()?))
    }
}

fn value_range(values: &[f64]) -> (f64, f64) {
    values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    })
}

/// Marching-triangles extraction of the level set `values = iso`.
///
/// Open chains start at the lowest-index crossed boundary edge; closed
/// loops start in the lowest-index crossed triangle. Returned paths have
/// kind `Stress` and carry `iso` as their isovalue.
pub fn extract_isocurves(layer: &LayerMesh, values: &[f64], iso: f64) -> Vec<Toolpath> {
    assert_eq!(values.len(), layer.vertices.len());
    let (lo, hi) = value_range(values);
    if !(lo < iso && iso < hi) {
        return Vec::new();
    }
    let bump = 1e-9 * (hi - lo);
    let val = |i: usize| if values[i] == iso { iso + bump } else { values[i] };
    let above = |i: usize| val(i) > iso;

    let ne = layer.edges.len();
    let crossed: Vec<bool> = layer.edges.iter().map(|&[a, b]| above(a) != above(b)).collect();
    let point = |e: usize| {
        let [a, b] = layer.edges[e];
        let (va, vb) = (val(a), val(b));
        let t = (iso - va) / (vb - va);
        layer.vertices[a] + (layer.vertices[b] - layer.vertices[a]) * t
    };
    let other_edge = |f: usize, e: usize| {
        layer.triangle_edges[f]
            .iter()
            .copied()
            .find(|&x| x != e && crossed[x])
            .expect("a crossed triangle has two crossed edges")
    };
    let other_face = |e: usize, f: usize| {
        let [g, h] = layer.edge_faces[e];
        if g == f {
            h
        } else {
            g
        }
    };

    let mut used = vec![false; ne];
    let mut out = Vec::new();

    for start in 0..ne {
        if !crossed[start] || used[start] || layer.edge_faces[start][1] != usize::MAX {
            continue;
        }
        let mut pts = vec![point(start)];
        used[start] = true;
        let mut e = start;
        let mut f = layer.edge_faces[start][0];
        loop {
            e = other_edge(f, e);
            used[e] = true;
            pts.push(point(e));
            let g = other_face(e, f);
            if g == usize::MAX {
                break;
            }
            f = g;
        }
        push_curve(&mut out, pts, false, iso);
    }

    for (f0, tri_edges) in layer.triangle_edges.iter().enumerate() {
        let Some(e0) = tri_edges.iter().copied().filter(|&e| crossed[e] && !used[e]).min() else {
            continue;
        };
        let mut pts = vec![point(e0)];
        used[e0] = true;
        let (mut e, mut f) = (e0, f0);
        loop {
            e = other_edge(f, e);
            if e == e0 {
                break;
            }
            used[e] = true;
            pts.push(point(e));
            f = other_face(e, f);
        }
        push_curve(&mut out, pts, true, iso);
    }
    out
}

fn push_curve(out: &mut Vec<Toolpath>, pts: Vec<Point2<f64>>, closed: bool, iso: f64) {
    let mut clean: Vec<Point2<f64>> = Vec::with_capacity(pts.len());
    for p in pts {
        if clean.last().is_none_or(|q| (p - q).norm() > POINT_EPS) {
            clean.push(p);
        }
    }
    if closed {
        while clean.len() > 1 && (clean[0] - clean[clean.len() - 1]).norm() <= POINT_EPS {
            clean.pop();
        }
    }
    if clean.len() >= if closed { 3 } else { 2 } {
        let mut tp = Toolpath::new(clean, PathKind::Stress, closed);
        tp.isovalue = Some(iso);
        out.push(tp);
    }
}

/// Evenly spaced isovalues `lo + (i + 1/2)/n * (hi - lo)`, `i = 0..n`.
pub fn isovalues(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (i as f64 + 0.5) / n as f64 * (hi - lo)).collect()
}

/// Smallest distance between curves of consecutive non-empty groups.
///
/// Distances are exact point-to-segment minima taken in both directions,
/// which for disjoint polylines equals the polyline-to-polyline distance.
/// Returns infinity when fewer than two groups contain curves.
pub fn min_neighbor_distance(groups: &[Vec<Toolpath>]) -> Result<f64, IsoError> {
    if groups.len() < 2 {
        return Err(IsoError::TooFewGroups(groups.len()));
    }
    let nonempty: Vec<&Vec<Toolpath>> = groups.iter().filter(|g| !g.is_empty()).collect();
    let d = nonempty
        .par_windows(2)
        .map(|w| group_distance(w[0], w[1]))
        .reduce(|| f64::INFINITY, f64::min);
    Ok(d)
}

fn group_distance(a: &[Toolpath], b: &[Toolpath]) -> f64 {
    let grid_a = SegmentGrid::new(a.iter().flat_map(|t| t.segments()).collect());
    let grid_b = SegmentGrid::new(b.iter().flat_map(|t| t.segments()).collect());
    let from_a = a
        .iter()
        .flat_map(|t| t.points.iter())
        .map(|p| grid_b.nearest(p))
        .fold(f64::INFINITY, f64::min);
    let from_b = b
        .iter()
        .flat_map(|t| t.points.iter())
        .map(|p| grid_a.nearest(p))
        .fold(f64::INFINITY, f64::min);
    from_a.min(from_b)
}

#[derive(Clone, Copy, PartialEq)]
struct Dist(f64, usize);

impl Eq for Dist {}

impl PartialOrd for Dist {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Dist {
    // reversed for a min-heap
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

/// Multi-source Dijkstra over a weighted adjacency list.
pub fn dijkstra(graph: &[Vec<(usize, f64)>], sources: &[usize]) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; graph.len()];
    let mut heap = BinaryHeap::new();
    for &s in sources {
        dist[s] = 0.0;
        heap.push(Dist(0.0, s));
    }
    while let Some(Dist(d, v)) = heap.pop() {
        if d > dist[v] {
            continue;
        }
        for &(w, len) in &graph[v] {
            let nd = d + len;
            if nd < dist[w] {
                dist[w] = nd;
                heap.push(Dist(nd, w));
            }
        }
    }
    dist
}

/// Largest edge-graph distance from a maximum-value vertex to the set of
/// minimum-value vertices.
pub fn extreme_distance(layer: &LayerMesh, values: &[f64]) -> f64 {
    let (lo, hi) = value_range(values);
    let tol = 1e-9 * (hi - lo);
    let sources: Vec<usize> = (0..values.len()).filter(|&i| values[i] - lo < tol).collect();
    let dist = dijkstra(&layer.vertex_graph(), &sources);
    (0..values.len())
        .filter(|&i| hi - values[i] < tol)
        .map(|i| dist[i])
        .filter(|d| d.is_finite())
        .fold(0.0, f64::max)
}

/// Outcome of the adaptive isovalue search.
#[derive(Debug, Clone)]
pub struct AdaptiveResult {
    pub paths: Vec<Toolpath>,
    pub n: usize,
    pub isovalues: Vec<f64>,
    /// Smallest spacing between neighbouring isocurves; infinite with one group.
    pub min_distance: f64,
    /// Edge-graph distance between the field extrema.
    pub extent: f64,
}

/// `d` exceeds `w` beyond round-off.
pub fn spacing_exceeds(d: f64, w: f64) -> bool {
    d > w * (1.0 + 1e-9)
}

fn extract_groups(layer: &LayerMesh, values: &[f64], isos: &[f64]) -> Vec<Vec<Toolpath>> {
    isos.par_iter()
        .map(|&iso| {
            extract_isocurves(layer, values, iso)
                .into_iter()
                .filter(|c| c.points.len() >= 3)
                .collect()
        })
        .collect()
}

fn evaluate(layer: &LayerMesh, values: &[f64], n: usize) -> (Vec<f64>, Vec<Vec<Toolpath>>, f64) {
    let (lo, hi) = value_range(values);
    let isos = isovalues(lo, hi, n);
    let groups = extract_groups(layer, values, &isos);
    let d = if groups.len() < 2 {
        f64::INFINITY
    } else {
        min_neighbor_distance(&groups).expect("two or more groups")
    };
    (isos, groups, d)
}

/// Chooses the largest isovalue count whose curves stay more than `w` apart
/// and returns those curves.
pub fn adaptive_extract(layer: &LayerMesh, values: &[f64], w: f64) -> Result<AdaptiveResult, IsoError> {
    if !(w > 0.0) {
        return Err(IsoError::BadSpacing(w));
    }
    if values.len() != layer.vertices.len() {
        return Err(IsoError::SizeMismatch {
            values: values.len(),
            vertices: layer.vertices.len(),
        });
    }
    let (lo, hi) = value_range(values);
    if !(hi > lo) {
        return Err(IsoError::ConstantField);
    }
    let extent = extreme_distance(layer, values);
    let mut n = ((extent / w - 1e-9).ceil() as usize).clamp(1, MAX_ISOCURVES);
    let (mut isos, mut groups, mut d) = evaluate(layer, values, n);

    while spacing_exceeds(d, w) && n < MAX_ISOCURVES {
        let grown = if d.is_finite() {
            (n as f64 * d / w - 1e-9).ceil() as usize
        } else {
            2 * n
        };
        if grown <= n {
            break;
        }
        n = grown.min(MAX_ISOCURVES);
        (isos, groups, d) = evaluate(layer, values, n);
    }
    while !spacing_exceeds(d, w) && n > 1 {
        n -= 1;
        (isos, groups, d) = evaluate(layer, values, n);
    }
    if n == 1 {
        warn!(
            "layer z={} is thinner than the spacing; keeping the mid isocurve only",
            layer.z
        );
    }
    Ok(AdaptiveResult {
        paths: groups.into_iter().flatten().collect(),
        n,
        isovalues: isos,
        min_distance: d,
        extent,
    })
}
