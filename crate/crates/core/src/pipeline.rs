//! End-to-end orchestration from mesh and stress tensors to toolpaths.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::boundary::{conformal_curves, filter_min_length, heat_distance, select_source_edges, truncate_and_connect};
use crate::config::PipelineConfig;
use crate::export::{write_gcode, write_svg, write_toolpaths, LayerPaths, SvgPiece};
use crate::field2d::{complete_and_smooth, rotate_quarter_turn, solve_scalar_field, weight_vectors};
use crate::isopath::{adaptive_extract, IsoError, PathKind, Toolpath};
use crate::layer::LayerMesh;
use crate::mesh::{load_stress_field, load_tet_mesh, SymTensor3, TetMesh};
use crate::slicer::{layer_heights, project_field, slice_at_height};
use crate::stress::{compute_element_field, ElementField};
use crate::synthetic::zigzag_infill;

type BoxError = Box<dyn std::error::Error + Send + Sync>;

#[derive(Debug, Error)]
#[error("{stage}{}: {source}", layer.map(|k| format!(" (layer {k})")).unwrap_or_default())]
pub struct PipelineError {
    pub stage: &'static str,
    pub layer: Option<usize>,
    #[source]
    pub source: BoxError,
}

fn fail<E: Into<BoxError>>(stage: &'static str, layer: Option<usize>) -> impl FnOnce(E) -> PipelineError {
    move |e| PipelineError {
        stage,
        layer,
        source: e.into(),
    }
}

/// Where to stop the per-layer processing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    /// Stop after the scalar field.
    Field,
    /// Stop after isocurve extraction, skipping connection and filtering.
    Paths,
    /// Run everything.
    Full,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LayerReport {
    pub index: usize,
    pub z: f64,
    pub faces: usize,
    pub components: usize,
    /// Number of isovalues used, summed over components.
    pub isocurves: usize,
    /// Smallest spacing between neighbouring isocurves; `None` when every
    /// component has a single isovalue.
    pub min_spacing: Option<f64>,
    /// Length of stress, boundary and connector paths after filtering (mm).
    pub fibre_length: f64,
    pub removed_paths: usize,
    pub removed_length: f64,
    pub arc_joins: usize,
    pub straight_joins: usize,
    pub unpaired_ends: usize,
    pub join_crossings: usize,
    pub zigzag_length: f64,
    pub scalar_residual: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub elements: usize,
    pub defined_elements: usize,
    pub layers: Vec<LayerReport>,
    pub total_fibre_length: f64,
    /// Wall time per stage (s); per-layer stages are summed over layers.
    pub stage_seconds: BTreeMap<String, f64>,
    pub total_seconds: f64,
}

/// One connected piece of a layer with its scalar field.
#[derive(Debug, Clone)]
pub struct ComponentResult {
    pub mesh: LayerMesh,
    pub scalar: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LayerResult {
    pub index: usize,
    pub z: f64,
    pub components: Vec<ComponentResult>,
    pub paths: Vec<Toolpath>,
    pub report: LayerReport,
    pub seconds: BTreeMap<&'static str, f64>,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub layers: Vec<LayerResult>,
    pub report: PipelineReport,
    pub element_field: ElementField,
}

impl PipelineOutput {
    pub fn layer_paths(&self) -> Vec<LayerPaths> {
        self.layers
            .iter()
            .map(|l| LayerPaths {
                index: l.index,
                z: l.z,
                paths: l.paths.clone(),
            })
            .collect()
    }
}

fn is_fibre(kind: PathKind) -> bool {
    kind != PathKind::Zigzag
}

struct Timer(BTreeMap<&'static str, f64>);

impl Timer {
    fn time<T>(&mut self, stage: &'static str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        *self.0.entry(stage).or_default() += start.elapsed().as_secs_f64();
        out
    }
}

fn process_layer(
    index: usize,
    z: f64,
    mesh: &TetMesh,
    field: &ElementField,
    cfg: &PipelineConfig,
    stage: Stage,
) -> Result<LayerResult, PipelineError> {
    let mut timer = Timer(BTreeMap::new());
    let layer = timer
        .time("slice", || slice_at_height(mesh, z))
        .map_err(fail("slice", Some(index)))?;
    let mut report = LayerReport {
        index,
        z: layer.z,
        faces: layer.triangles.len(),
        ..Default::default()
    };
    let pieces = layer.split_components();
    report.components = pieces.len();
    let w = cfg.spacing_w;

    let mut components = Vec::new();
    let mut paths = Vec::new();
    let mut min_spacing = f64::INFINITY;
    for piece in pieces {
        let ff = project_field(field, &piece);
        if ff.defined_count() == 0 {
            warn!(
                "layer {index}: a component of {} faces has no defined direction; skipped",
                piece.triangles.len()
            );
            continue;
        }
        let s = timer
            .time("field", || -> Result<_, BoxError> {
                let smooth = complete_and_smooth(&ff, &piece, cfg.smoothing_iterations)?;
                let weighted = rotate_quarter_turn(&weight_vectors(&smooth, cfg.density_p)?);
                Ok(solve_scalar_field(&piece, &weighted, cfg.area_weighted_fit)?)
            })
            .map_err(fail("field", Some(index)))?;
        report.scalar_residual += s.residual;

        if stage != Stage::Field {
            let extracted = match timer.time("extract", || adaptive_extract(&piece, &s.values, w)) {
                Ok(r) => r,
                Err(IsoError::ConstantField) => {
                    warn!("layer {index}: constant scalar field on a component; no paths");
                    components.push(ComponentResult {
                        mesh: piece,
                        scalar: s.values,
                    });
                    continue;
                }
                Err(e) => return Err(fail("extract", Some(index))(e)),
            };
            report.isocurves += extracted.n;
            if extracted.n > 1 {
                min_spacing = min_spacing.min(extracted.min_distance);
            }
            let mut stress = extracted.paths;
            for p in &mut stress {
                p.layer = index;
            }

            if stage == Stage::Full {
                let source = select_source_edges(&piece, &cfg.boundary_source_boxes);
                let (connected, stats) = timer
                    .time("connect", || -> Result<_, BoxError> {
                        let (df, bnd) = if source.is_empty() {
                            (None, Vec::new())
                        } else {
                            let df = heat_distance(&piece, &source, cfg.heat_t_scale)?;
                            let bnd = conformal_curves(&df, &piece, w);
                            (Some(df), bnd)
                        };
                        Ok(truncate_and_connect(&piece, &stress, &bnd, df.as_ref(), w))
                    })
                    .map_err(fail("connect", Some(index)))?;
                report.arc_joins += stats.arc_joins;
                report.straight_joins += stats.straight_joins;
                report.unpaired_ends += stats.unpaired;
                report.join_crossings += stats.crossings;
                let (kept, removed, removed_length) = filter_min_length(connected, cfg.min_path_length_mm);
                report.removed_paths += removed;
                report.removed_length += removed_length;
                stress = kept;
            }
            for p in &mut stress {
                p.layer = index;
            }
            paths.extend(stress);

            if cfg.zigzag_spacing > 0.0 {
                let angle = cfg.zigzag_angle + if index % 2 == 1 { 90.0 } else { 0.0 };
                let mut zz = timer.time("zigzag", || zigzag_infill(&piece, cfg.zigzag_spacing, angle));
                for p in &mut zz {
                    p.layer = index;
                }
                report.zigzag_length += zz.iter().map(|p| p.length()).sum::<f64>();
                paths.extend(zz);
            }
        }
        components.push(ComponentResult {
            mesh: piece,
            scalar: s.values,
        });
    }
    report.min_spacing = min_spacing.is_finite().then_some(min_spacing);
    report.fibre_length = paths.iter().filter(|p| is_fibre(p.kind)).map(|p| p.length()).sum();
    Ok(LayerResult {
        index,
        z: layer.z,
        components,
        paths,
        report,
        seconds: timer.0,
    })
}

/// Runs the pipeline on an in-memory mesh and tensor list.
pub fn compute(
    mesh: TetMesh,
    tensors: &[SymTensor3],
    cfg: &PipelineConfig,
    stage: Stage,
) -> Result<PipelineOutput, PipelineError> {
    let total = Instant::now();
    cfg.validate().map_err(fail("config", None))?;
    let mut seconds: BTreeMap<String, f64> = BTreeMap::new();

    let t0 = Instant::now();
    let mesh = if mesh.adjacency_built() {
        mesh
    } else {
        mesh.build_adjacency().map_err(fail("adjacency", None))?
    };
    let field = compute_element_field(&mesh, tensors, cfg.mu, cfg.eta).map_err(fail("element field", None))?;
    seconds.insert("element_field".into(), t0.elapsed().as_secs_f64());

    let heights = layer_heights(&mesh, cfg.layer_height, cfg.layer_offset);
    let selected: Vec<(usize, f64)> = heights
        .into_iter()
        .enumerate()
        .filter(|(k, _)| cfg.layers.is_none_or(|(a, b)| *k >= a && *k < b))
        .collect();
    info!("{} elements, {} layers selected", mesh.tets.len(), selected.len());

    let mut layers = selected
        .par_iter()
        .map(|&(k, z)| process_layer(k, z, &mesh, &field, cfg, stage))
        .collect::<Result<Vec<_>, _>>()?;
    layers.sort_by_key(|l| l.index);

    for l in &layers {
        for (stage, s) in &l.seconds {
            *seconds.entry((*stage).to_string()).or_default() += s;
        }
    }
    let report = PipelineReport {
        elements: mesh.tets.len(),
        defined_elements: field.count(crate::stress::ElementStatus::Defined),
        total_fibre_length: layers.iter().map(|l| l.report.fibre_length).sum(),
        layers: layers.iter().map(|l| l.report.clone()).collect(),
        stage_seconds: seconds,
        total_seconds: total.elapsed().as_secs_f64(),
    };
    Ok(PipelineOutput {
        layers,
        report,
        element_field: field,
    })
}

/// Writes toolpaths, G-code, per-layer SVGs, optional scalar dumps and the
/// JSON report into `dir`.
pub fn write_outputs(out: &PipelineOutput, dir: &Path, stage: Stage) -> Result<(), PipelineError> {
    fs::create_dir_all(dir).map_err(fail("write", None))?;
    let paths = out.layer_paths();
    if stage != Stage::Field {
        write_toolpaths(&paths, dir.join("toolpaths.txt")).map_err(fail("write", None))?;
        write_gcode(&paths, dir.join("toolpaths.gcode")).map_err(fail("write", None))?;
    }
    for l in &out.layers {
        let pieces: Vec<SvgPiece> = l
            .components
            .iter()
            .map(|c| SvgPiece {
                mesh: &c.mesh,
                scalar: (stage == Stage::Field).then_some(c.scalar.as_slice()),
            })
            .collect();
        write_svg(&pieces, &l.paths, dir.join(format!("layer_{:03}.svg", l.index)))
            .map_err(fail("write", Some(l.index)))?;
        if stage == Stage::Field {
            for (c, comp) in l.components.iter().enumerate() {
                let file = dir.join(format!("layer_{:03}_{c}.field", l.index));
                fs::write(&file, comp.mesh.dump(Some(&comp.scalar))).map_err(fail("write", Some(l.index)))?;
            }
        }
    }
    let json = serde_json::to_string_pretty(&out.report).map_err(fail("write", None))?;
    fs::write(dir.join("report.json"), json + "\n").map_err(fail("write", None))?;
    Ok(())
}

/// Loads inputs named in `cfg`, runs the pipeline and writes all outputs.
pub fn run_pipeline(cfg: &PipelineConfig, stage: Stage) -> Result<PipelineOutput, PipelineError> {
    let mesh = load_tet_mesh(&cfg.mesh).map_err(fail("load mesh", None))?;
    let tensors = load_stress_field(&cfg.stress, &mesh).map_err(fail("load stress", None))?;
    let out = compute(mesh, &tensors, cfg, stage)?;
    let t = Instant::now();
    write_outputs(&out, &cfg.out_dir, stage)?;
    info!(
        "outputs written to {} in {:.3} s",
        cfg.out_dir.display(),
        t.elapsed().as_secs_f64()
    );
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{build_test_solid, TestSolid};

    #[test]
    fn box_without_source_has_only_stress_paths() {
        let solid = TestSolid::Box {
            lx: 60.0,
            ly: 10.0,
            lz: 2.0,
            stress: 10.0,
        };
        let (mesh, t) = build_test_solid(&solid, 1.0).unwrap();
        let cfg = PipelineConfig::default();
        let out = compute(mesh, &t, &cfg, Stage::Full).unwrap();
        assert_eq!(out.layers.len(), 2);
        for l in &out.layers {
            assert!(!l.paths.is_empty());
            assert!(l.paths.iter().all(|p| p.kind == PathKind::Stress));
            assert!(l.report.min_spacing.unwrap() > cfg.spacing_w);
            for p in &l.paths {
                for (k, (a, b)) in p.segments().into_iter().enumerate() {
                    if p.is_connector_segment(k) {
                        assert!((b - a).norm() < 2.0 * cfg.spacing_w + 1e-9);
                    } else {
                        // fibre segments run along the tension axis
                        assert!((b - a).x.abs() > 10.0 * (b - a).y.abs());
                    }
                }
            }
        }
        let sum: f64 = out.layers.iter().flat_map(|l| &l.paths).map(|p| p.length()).sum();
        assert!((sum - out.report.total_fibre_length).abs() < 1e-6);
    }

    #[test]
    fn errors_name_the_stage() {
        let solid = TestSolid::Box {
            lx: 4.0,
            ly: 4.0,
            lz: 2.0,
            stress: 1.0,
        };
        let (mesh, t) = build_test_solid(&solid, 1.0).unwrap();
        let err = compute(mesh, &t[1..], &PipelineConfig::default(), Stage::Full).unwrap_err();
        assert_eq!(err.stage, "element field");
        assert!(err.to_string().starts_with("element field"));
    }
}
