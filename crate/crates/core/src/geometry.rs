//! Small planar geometry helpers shared by path extraction and connection.

use nalgebra::Point2;

/// Length of a polyline; `closed` adds the segment back to the start.
pub fn polyline_length(points: &[Point2<f64>], closed: bool) -> f64 {
    let open: f64 = points.windows(2).map(|w| (w[1] - w[0]).norm()).sum();
    match (closed, points.first(), points.last()) {
        (true, Some(a), Some(b)) if points.len() > 2 => open + (a - b).norm(),
        _ => open,
    }
}

/// Distance from `p` to the segment `ab`.
pub fn point_segment_distance(p: &Point2<f64>, a: &Point2<f64>, b: &Point2<f64>) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

/// Segments of a polyline as point pairs.
pub fn segments(points: &[Point2<f64>], closed: bool) -> Vec<(Point2<f64>, Point2<f64>)> {
    let mut out: Vec<_> = points.windows(2).map(|w| (w[0], w[1])).collect();
    if closed && points.len() > 2 {
        out.push((points[points.len() - 1], points[0]));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Point2<f64>,
    pub max: Point2<f64>,
}

impl Aabb {
    pub fn of(points: &[Point2<f64>]) -> Option<Self> {
        let first = *points.first()?;
        Some(points.iter().fold(Self { min: first, max: first }, |b, p| Self {
            min: Point2::new(b.min.x.min(p.x), b.min.y.min(p.y)),
            max: Point2::new(b.max.x.max(p.x), b.max.y.max(p.y)),
        }))
    }

    pub fn distance(&self, other: &Aabb) -> f64 {
        let dx = (other.min.x - self.max.x).max(self.min.x - other.max.x).max(0.0);
        let dy = (other.min.y - self.max.y).max(self.min.y - other.max.y).max(0.0);
        dx.hypot(dy)
    }
}

/// Uniform-grid bucket of segments for nearest-segment queries.
pub struct SegmentGrid {
    segs: Vec<(Point2<f64>, Point2<f64>)>,
    origin: Point2<f64>,
    cell: f64,
    nx: usize,
    ny: usize,
    bins: Vec<Vec<usize>>,
}

impl SegmentGrid {
    pub fn new(segs: Vec<(Point2<f64>, Point2<f64>)>) -> Self {
        let pts: Vec<Point2<f64>> = segs.iter().flat_map(|&(a, b)| [a, b]).collect();
        let bb = Aabb::of(&pts).unwrap_or(Aabb {
            min: Point2::origin(),
            max: Point2::origin(),
        });
        let mean = if segs.is_empty() {
            1.0
        } else {
            segs.iter().map(|(a, b)| (b - a).norm()).sum::<f64>() / segs.len() as f64
        };
        let span = (bb.max - bb.min).norm().max(1e-12);
        // keep the grid to a few hundred cells per side
        let cell = (2.0 * mean).max(span / 256.0).max(1e-12);
        let nx = ((bb.max.x - bb.min.x) / cell).floor() as usize + 1;
        let ny = ((bb.max.y - bb.min.y) / cell).floor() as usize + 1;
        let mut grid = Self {
            segs,
            origin: bb.min,
            cell,
            nx,
            ny,
            bins: vec![Vec::new(); nx * ny],
        };
        for (k, (a, b)) in grid.segs.iter().enumerate() {
            let (i0, j0) = grid.cell_of(&Point2::new(a.x.min(b.x), a.y.min(b.y)));
            let (i1, j1) = grid.cell_of(&Point2::new(a.x.max(b.x), a.y.max(b.y)));
            for j in j0..=j1 {
                for i in i0..=i1 {
                    grid.bins[j * nx + i].push(k);
                }
            }
        }
        grid
    }

    fn cell_of(&self, p: &Point2<f64>) -> (usize, usize) {
        let i = ((p.x - self.origin.x) / self.cell)
            .floor()
            .clamp(0.0, (self.nx - 1) as f64);
        let j = ((p.y - self.origin.y) / self.cell)
            .floor()
            .clamp(0.0, (self.ny - 1) as f64);
        (i as usize, j as usize)
    }

    /// Distance from `p` to the nearest segment, or infinity if there are none.
    pub fn nearest(&self, p: &Point2<f64>) -> f64 {
        if self.segs.is_empty() {
            return f64::INFINITY;
        }
        // distance from p to the grid rectangle bounds how far the rings must go
        let (ci, cj) = self.cell_of(p);
        let outside = Aabb {
            min: self.origin,
            max: self.origin + nalgebra::Vector2::new(self.nx as f64, self.ny as f64) * self.cell,
        }
        .distance(&Aabb { min: *p, max: *p });
        let mut best = f64::INFINITY;
        let max_ring = self.nx.max(self.ny);
        for r in 0..=max_ring {
            if ((r as f64 - 1.0) * self.cell).max(outside) > best {
                break;
            }
            let (i0, i1) = (ci.saturating_sub(r), (ci + r).min(self.nx - 1));
            let (j0, j1) = (cj.saturating_sub(r), (cj + r).min(self.ny - 1));
            for j in j0..=j1 {
                for i in i0..=i1 {
                    let on_ring = i + r == ci || i == ci + r || j + r == cj || j == cj + r;
                    if !on_ring {
                        continue;
                    }
                    for &k in &self.bins[j * self.nx + i] {
                        let (a, b) = &self.segs[k];
                        best = best.min(point_segment_distance(p, a, b));
                    }
                }
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lengths() {
        let sq = [
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(1.0, 1.0),
            Point2::new(0.0, 1.0),
        ];
        assert_eq!(polyline_length(&sq, false), 3.0);
        assert_eq!(polyline_length(&sq, true), 4.0);
    }

    #[test]
    fn segment_distance_cases() {
        let (a, b) = (Point2::new(0.0, 0.0), Point2::new(2.0, 0.0));
        assert_eq!(point_segment_distance(&Point2::new(1.0, 3.0), &a, &b), 3.0);
        assert_eq!(point_segment_distance(&Point2::new(5.0, 4.0), &a, &b), 5.0);
        assert_eq!(point_segment_distance(&Point2::new(1.0, 1.0), &a, &a), 2f64.sqrt());
    }

    #[test]
    fn grid_matches_brute_force() {
        let segs: Vec<_> = (0..40)
            .map(|k| {
                let t = k as f64 * 0.37;
                (
                    Point2::new(t.cos() * 3.0, t.sin() * 2.0),
                    Point2::new(t.cos() * 3.0 + 0.3, t.sin() * 2.0 - 0.1),
                )
            })
            .collect();
        let grid = SegmentGrid::new(segs.clone());
        for k in 0..100 {
            let p = Point2::new((k as f64 * 0.71).sin() * 6.0, (k as f64 * 1.3).cos() * 6.0);
            let brute = segs
                .iter()
                .map(|(a, b)| point_segment_distance(&p, a, b))
                .fold(f64::INFINITY, f64::min);
            assert!((grid.nearest(&p) - brute).abs() < 1e-12);
        }
    }
}
