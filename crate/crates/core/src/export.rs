//! Toolpath files, per-layer SVG plots and a simplified G-code export.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::Point2;
use thiserror::Error;

use crate::isopath::{PathKind, Toolpath};
use crate::layer::LayerMesh;

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

fn write_file(path: &Path, text: &str) -> Result<(), ExportError> {
    fs::write(path, text).map_err(|source| ExportError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read_file(path: &Path) -> Result<String, ExportError> {
    fs::read_to_string(path).map_err(|source| ExportError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Paths of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerPaths {
    pub index: usize,
    pub z: f64,
    pub paths: Vec<Toolpath>,
}

pub fn format_toolpaths(layers: &[LayerPaths]) -> String {
    let mut s = format!("toolpaths v1 {}\n", layers.len());
    for l in layers {
        let _ = writeln!(s, "layer {} z={} {}", l.index, l.z, l.paths.len());
        for p in &l.paths {
            let iso = p.isovalue.map_or_else(|| "nan".to_string(), |v| v.to_string());
            let _ = write!(
                s,
                "path {} {} {} iso={}",
                p.kind,
                p.points.len(),
                u8::from(p.closed),
                iso
            );
            if !p.connectors.is_empty() {
                let spans: Vec<String> = p.connectors.iter().map(|(a, b)| format!("{a}:{b}")).collect();
                let _ = write!(s, " connectors={}", spans.join(","));
            }
            s.push('\n');
            for q in &p.points {
                let _ = writeln!(s, "{} {}", q.x, q.y);
            }
        }
    }
    s
}

pub fn write_toolpaths(layers: &[LayerPaths], path: impl AsRef<Path>) -> Result<(), ExportError> {
    write_file(path.as_ref(), &format_toolpaths(layers))
}

pub fn load_toolpaths(path: impl AsRef<Path>) -> Result<Vec<LayerPaths>, ExportError> {
    parse_toolpaths(&read_file(path.as_ref())?)
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<Vec<&'a str>, ExportError> {
        for (i, l) in self.inner.by_ref() {
            self.line = i + 1;
            let t = l.trim();
            if !t.is_empty() && !t.starts_with('#') {
                return Ok(t.split_whitespace().collect());
            }
        }
        Err(ExportError::Parse {
            line: self.line + 1,
            msg: "unexpected end of file".into(),
        })
    }

    fn err(&self, msg: impl Into<String>) -> ExportError {
        ExportError::Parse {
            line: self.line,
            msg: msg.into(),
        }
    }
}

fn num<T: std::str::FromStr>(lines: &Lines, s: &str) -> Result<T, ExportError> {
    s.parse().map_err(|_| lines.err(format!("bad number '{s}'")))
}

pub fn parse_toolpaths(text: &str) -> Result<Vec<LayerPaths>, ExportError> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        line: 0,
    };
    let head = lines.next()?;
    if head.len() != 3 || head[0] != "toolpaths" || head[1] != "v1" {
        return Err(lines.err("expected 'toolpaths v1 <nlayers>'"));
    }
    let nlayers: usize = num(&lines, head[2])?;
    let mut out = Vec::with_capacity(nlayers);
    for _ in 0..nlayers {
        let l = lines.next()?;
        if l.len() != 4 || l[0] != "layer" || !l[2].starts_with("z=") {
            return Err(lines.err("expected 'layer <k> z=<z> <npaths>'"));
        }
        let index = num(&lines, l[1])?;
        let z = num(&lines, &l[2][2..])?;
        let npaths: usize = num(&lines, l[3])?;
        let mut paths = Vec::with_capacity(npaths);
        for _ in 0..npaths {
            let h = lines.next()?;
            if !(5..=6).contains(&h.len()) || h[0] != "path" || !h[4].starts_with("iso=") {
                return Err(lines.err("expected 'path <kind> <npoints> <closed> iso=<v>'"));
            }
            let kind: PathKind = h[1].parse().map_err(|e: String| lines.err(e))?;
            let npoints: usize = num(&lines, h[2])?;
            let closed = match h[3] {
                "0" => false,
                "1" => true,
                other => return Err(lines.err(format!("closed flag must be 0 or 1, got '{other}'"))),
            };
            let iso: f64 = num(&lines, &h[4][4..])?;
            let mut connectors = Vec::new();
            if let Some(extra) = h.get(5) {
                let spans = extra
                    .strip_prefix("connectors=")
                    .ok_or_else(|| lines.err("expected 'connectors=a:b,...'"))?;
                for span in spans.split(',') {
                    let (a, b) = span.split_once(':').ok_or_else(|| lines.err("bad connector span"))?;
                    connectors.push((num(&lines, a)?, num(&lines, b)?));
                }
            }
            let mut points = Vec::with_capacity(npoints);
            for _ in 0..npoints {
                let p = lines.next()?;
                if p.len() != 2 {
                    return Err(lines.err("expected '<x> <y>'"));
                }
                points.push(Point2::new(num(&lines, p[0])?, num(&lines, p[1])?));
            }
            paths.push(Toolpath {
                points,
                kind,
                closed,
                layer: index,
                isovalue: (!iso.is_nan()).then_some(iso),
                connectors,
            });
        }
        out.push(LayerPaths { index, z, paths });
    }
    Ok(out)
}

fn kind_colour(kind: PathKind) -> &'static str {
    match kind {
        PathKind::Stress => "blue",
        PathKind::Boundary => "green",
        PathKind::Connector => "red",
        PathKind::Zigzag => "gray",
    }
}

/// Blue-to-red ramp for `t` in `[0, 1]`.
fn heat_colour(t: f64) -> String {
    let t = t.clamp(0.0, 1.0);
    let r = (255.0 * t).round() as u8;
    let b = (255.0 * (1.0 - t)).round() as u8;
    format!("#{r:02x}40{b:02x}")
}

/// One mesh piece of a layer with an optional per-vertex scalar.
pub struct SvgPiece<'a> {
    pub mesh: &'a LayerMesh,
    pub scalar: Option<&'a [f64]>,
}

/// SVG of a layer: optional scalar heat map, boundary loops and paths
/// coloured by kind, with connector segments in red. One unit is one mm.
pub fn format_svg(pieces: &[SvgPiece], paths: &[Toolpath]) -> String {
    let mut lo = Point2::new(f64::INFINITY, f64::INFINITY);
    let mut hi = Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for piece in pieces {
        let (a, b) = piece.mesh.bounds();
        lo = Point2::new(lo.x.min(a.x), lo.y.min(a.y));
        hi = Point2::new(hi.x.max(b.x), hi.y.max(b.y));
    }
    for p in paths.iter().flat_map(|t| t.points.iter()) {
        lo = Point2::new(lo.x.min(p.x), lo.y.min(p.y));
        hi = Point2::new(hi.x.max(p.x), hi.y.max(p.y));
    }
    if !lo.x.is_finite() {
        lo = Point2::origin();
        hi = Point2::new(1.0, 1.0);
    }
    let margin = 1.0;
    let (w, h) = (hi.x - lo.x + 2.0 * margin, hi.y - lo.y + 2.0 * margin);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}mm" height="{h}mm" viewBox="{} {} {w} {h}">"#,
        lo.x - margin,
        -hi.y - margin
    );
    s.push_str("<g transform=\"scale(1,-1)\">\n");
    for piece in pieces {
        if let Some(values) = piece.scalar {
            let (vmin, vmax) = values
                .iter()
                .filter(|v| v.is_finite())
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
            let span = (vmax - vmin).max(1e-300);
            s.push_str("<g stroke=\"none\">\n");
            for t in &piece.mesh.triangles {
                let mean = t.iter().map(|&i| values[i]).sum::<f64>() / 3.0;
                let [a, b, c] = t.map(|i| piece.mesh.vertices[i]);
                let _ = writeln!(
                    s,
                    r#"<polygon points="{},{} {},{} {},{}" fill="{}"/>"#,
                    a.x,
                    a.y,
                    b.x,
                    b.y,
                    c.x,
                    c.y,
                    heat_colour((mean - vmin) / span)
                );
            }
            s.push_str("</g>\n");
        }
        for lp in piece.mesh.boundary_loops() {
            let pts: Vec<String> = lp
                .iter()
                .map(|&i| format!("{},{}", piece.mesh.vertices[i].x, piece.mesh.vertices[i].y))
                .collect();
            let _ = writeln!(
                s,
                r#"<polygon points="{}" fill="none" stroke="black" stroke-width="0.1"/>"#,
                pts.join(" ")
            );
        }
    }
    for p in paths {
        let pts: Vec<String> = p.points.iter().map(|q| format!("{},{}", q.x, q.y)).collect();
        let tag = if p.closed { "polygon" } else { "polyline" };
        let _ = writeln!(
            s,
            r#"<{tag} points="{}" fill="none" stroke="{}" stroke-width="0.3"/>"#,
            pts.join(" "),
            kind_colour(p.kind)
        );
        let n = p.points.len();
        for k in (0..p.segment_count()).filter(|&k| p.is_connector_segment(k)) {
            let (a, b) = (p.points[k], p.points[(k + 1) % n]);
            let _ = writeln!(
                s,
                r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="{}" stroke-width="0.3"/>"#,
                a.x,
                a.y,
                b.x,
                b.y,
                kind_colour(PathKind::Connector)
            );
        }
    }
    s.push_str("</g>\n</svg>\n");
    s
}

pub fn write_svg(pieces: &[SvgPiece], paths: &[Toolpath], path: impl AsRef<Path>) -> Result<(), ExportError> {
    write_file(path.as_ref(), &format_svg(pieces, paths))
}

/// G-code subset: `;LAYER`, travel `G0`, extrusion `G1` with cumulative `E`
/// equal to deposited length, and `;CUT` after each fibre path.
pub fn format_gcode(layers: &[LayerPaths]) -> String {
    let mut s =
        String::from("; fibre toolpaths, simplified G-code\n; E is cumulative deposited length in mm\nG21\nG90\n");
    let mut e = 0.0;
    for l in layers {
        let _ = writeln!(s, ";LAYER {} Z{}", l.index, l.z);
        for p in &l.paths {
            let Some(first) = p.points.first() else { continue };
            let _ = writeln!(s, ";PATH {}", p.kind);
            let _ = writeln!(s, "G0 X{} Y{}", first.x, first.y);
            let mut prev = *first;
            let closing = (p.closed && p.points.len() > 2).then_some(*first);
            for q in p.points[1..].iter().chain(closing.iter()) {
                e += (q - prev).norm();
                let _ = writeln!(s, "G1 X{} Y{} E{}", q.x, q.y, e);
                prev = *q;
            }
            if p.kind != PathKind::Zigzag {
                s.push_str(";CUT\n");
            }
        }
    }
    s
}

pub fn write_gcode(layers: &[LayerPaths], path: impl AsRef<Path>) -> Result<(), ExportError> {
    write_file(path.as_ref(), &format_gcode(layers))
}

/// A path recovered from G-code: kind, visited points and the final `E`.
#[derive(Debug, Clone, PartialEq)]
pub struct GcodePath {
    pub layer: usize,
    pub z: f64,
    pub kind: PathKind,
    pub points: Vec<Point2<f64>>,
    pub cut: bool,
}

/// Reads back output of [`format_gcode`].
pub fn parse_gcode(text: &str) -> Result<(Vec<GcodePath>, f64), ExportError> {
    let mut out: Vec<GcodePath> = Vec::new();
    let (mut layer, mut z) = (0usize, 0.0);
    let mut e_last = 0.0;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let err = |msg: String| ExportError::Parse { line, msg };
        let words: Vec<&str> = raw.split_whitespace().collect();
        let field = |prefix: char| -> Result<f64, ExportError> {
            words
                .iter()
                .find_map(|w| w.strip_prefix(prefix))
                .ok_or_else(|| err(format!("missing {prefix}")))?
                .parse()
                .map_err(|_| err(format!("bad {prefix} value")))
        };
        match words.first().copied() {
            Some(";LAYER") => {
                layer = words
                    .get(1)
                    .and_then(|w| w.parse().ok())
                    .ok_or_else(|| err("bad layer index".into()))?;
                z = field('Z')?;
            }
            Some(";PATH") => {
                let kind = words
                    .get(1)
                    .ok_or_else(|| err("missing kind".into()))?
                    .parse()
                    .map_err(err)?;
                out.push(GcodePath {
                    layer,
                    z,
                    kind,
                    points: Vec::new(),
                    cut: false,
                });
            }
            Some("G0") | Some("G1") => {
                let p = Point2::new(field('X')?, field('Y')?);
                if words[0] == "G1" {
                    e_last = field('E')?;
                }
                out.last_mut()
                    .ok_or_else(|| err("move outside a path".into()))?
                    .points
                    .push(p);
            }
            Some(";CUT") => {
                out.last_mut().ok_or_else(|| err("cut outside a path".into()))?.cut = true;
            }
            _ => {}
        }
    }
    Ok((out, e_last))
}
