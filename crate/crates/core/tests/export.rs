use std::fs;

use nalgebra::Point2;
use proptest::prelude::*;

use fibrepath_core::config::PipelineConfig;
use fibrepath_core::export::{
    format_gcode, format_svg, format_toolpaths, load_toolpaths, parse_gcode, parse_toolpaths, write_toolpaths,
    LayerPaths, SvgPiece,
};
use fibrepath_core::isopath::{PathKind, Toolpath};
use fibrepath_core::layer::grid_layer;
use fibrepath_core::mesh::{write_stress_field, write_tet_mesh};
use fibrepath_core::pipeline::{compute, run_pipeline, PipelineReport, Stage};
use fibrepath_core::synthetic::{build_test_solid, TestSolid};

fn single(path: Toolpath) -> Vec<LayerPaths> {
    vec![LayerPaths {
        index: 0,
        z: 0.5,
        paths: vec![path],
    }]
}

#[test]
fn two_point_path() {
    let layers = single(Toolpath::new(
        vec![Point2::new(0.0, 0.0), Point2::new(10.0, 0.0)],
        PathKind::Stress,
        false,
    ));
    let text = format_toolpaths(&layers);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines,
        [
            "toolpaths v1 1",
            "layer 0 z=0.5 1",
            "path stress 2 0 iso=nan",
            "0 0",
            "10 0"
        ]
    );

    let gcode = format_gcode(&layers);
    assert!(gcode.contains(";LAYER 0 Z0.5"));
    assert!(gcode.contains("G0 X0 Y0"));
    assert!(gcode.contains("G1 X10 Y0 E10"));
    let (paths, e) = parse_gcode(&gcode).unwrap();
    assert_eq!(e, 10.0);
    assert_eq!(paths.len(), 1);
    assert!(paths[0].cut);
}

#[test]
fn closed_path_extrudes_its_closing_segment() {
    let square = vec![
        Point2::new(0.0, 0.0),
        Point2::new(2.0, 0.0),
        Point2::new(2.0, 2.0),
        Point2::new(0.0, 2.0),
    ];
    let (_, e) = parse_gcode(&format_gcode(&single(Toolpath::new(square, PathKind::Boundary, true)))).unwrap();
    assert_eq!(e, 8.0);
}

#[test]
fn empty_outputs_keep_headers() {
    assert_eq!(format_toolpaths(&[]), "toolpaths v1 0\n");
    assert!(parse_toolpaths("toolpaths v1 0\n").unwrap().is_empty());
    let gcode = format_gcode(&[]);
    assert!(gcode.starts_with(';'));
    assert_eq!(parse_gcode(&gcode).unwrap(), (Vec::new(), 0.0));
    let svg = format_svg(&[], &[]);
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
}

#[test]
fn svg_colours_paths_by_kind() {
    let layer = grid_layer(0.0, 4.0, 0.0, 2.0, 3, 3);
    let line = |kind| Toolpath::new(vec![Point2::new(0.0, 1.0), Point2::new(4.0, 1.0)], kind, false);
    let mut joined = Toolpath::new(
        vec![
            Point2::new(0.0, 0.5),
            Point2::new(1.0, 0.5),
            Point2::new(1.0, 1.5),
            Point2::new(0.0, 1.5),
        ],
        PathKind::Stress,
        false,
    );
    joined.connectors = vec![(1, 2)];
    let paths = [
        line(PathKind::Stress),
        line(PathKind::Boundary),
        line(PathKind::Zigzag),
        joined,
    ];
    let svg = format_svg(
        &[SvgPiece {
            mesh: &layer,
            scalar: None,
        }],
        &paths,
    );
    for colour in ["blue", "green", "gray", "red", "black"] {
        assert!(svg.contains(&format!("stroke=\"{colour}\"")), "missing {colour}");
    }
    assert!(svg.contains("width=\"6mm\" height=\"4mm\""));
}

#[test]
fn malformed_toolpaths_report_the_line() {
    let err = parse_toolpaths("toolpaths v1 1\nlayer 0 z=0 1\npath stress 2 0 iso=nan\n0 0\n1 x\n").unwrap_err();
    assert!(err.to_string().starts_with("line 5"), "{err}");
    assert!(parse_toolpaths("toolpaths v1 1\nlayer 0 z=0 1\npath wobble 1 0 iso=nan\n0 0\n").is_err());
    assert!(load_toolpaths("/nonexistent/toolpaths.txt")
        .unwrap_err()
        .to_string()
        .contains("/nonexistent"));
}

fn arb_path(layer: usize) -> impl Strategy<Value = Toolpath> {
    let coord = prop_oneof![any::<f64>().prop_filter("finite", |v| v.is_finite()), -1e3f64..1e3];
    (
        prop::collection::vec((coord.clone(), coord), 0..12),
        prop_oneof![
            Just(PathKind::Stress),
            Just(PathKind::Boundary),
            Just(PathKind::Connector),
            Just(PathKind::Zigzag)
        ],
        any::<bool>(),
        prop::option::of(-1e6f64..1e6),
    )
        .prop_map(move |(pts, kind, closed, iso)| {
            let n = pts.len();
            let mut p = Toolpath::new(pts.into_iter().map(|(x, y)| Point2::new(x, y)).collect(), kind, closed);
            p.layer = layer;
            p.isovalue = iso;
            if n >= 3 {
                p.connectors = vec![(0, 1), (n - 2, n - 1)];
            }
            p
        })
}

fn arb_layers() -> impl Strategy<Value = Vec<LayerPaths>> {
    prop::collection::vec(0usize..5, 0..4).prop_flat_map(|counts| {
        counts
            .into_iter()
            .enumerate()
            .map(|(k, n)| {
                (prop::collection::vec(arb_path(k), n), -100.0f64..100.0).prop_map(move |(paths, z)| LayerPaths {
                    index: k,
                    z,
                    paths,
                })
            })
            .collect::<Vec<_>>()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn toolpath_text_round_trip_is_bit_exact(layers in arb_layers()) {
        let back = parse_toolpaths(&format_toolpaths(&layers)).unwrap();
        prop_assert_eq!(back.len(), layers.len());
        for (a, b) in layers.iter().zip(&back) {
            prop_assert_eq!(a.z.to_bits(), b.z.to_bits());
            prop_assert_eq!(a.paths.len(), b.paths.len());
            for (p, q) in a.paths.iter().zip(&b.paths) {
                prop_assert_eq!(p, q);
                for (u, v) in p.points.iter().zip(&q.points) {
                    prop_assert_eq!((u.x.to_bits(), u.y.to_bits()), (v.x.to_bits(), v.y.to_bits()));
                }
            }
        }
    }

    #[test]
    fn gcode_visits_every_point(layers in arb_layers().prop_map(|ls| ls.into_iter().map(|mut l| {
        l.paths.retain(|p| p.points.iter().all(|q| q.x.abs() < 1e6 && q.y.abs() < 1e6));
        l
    }).collect::<Vec<_>>())) {
        let (paths, e) = parse_gcode(&format_gcode(&layers)).unwrap();
        let expected: Vec<&Toolpath> = layers.iter().flat_map(|l| l.paths.iter()).filter(|p| !p.points.is_empty()).collect();
        prop_assert_eq!(paths.len(), expected.len());
        let mut length = 0.0;
        for (g, p) in paths.iter().zip(&expected) {
            prop_assert_eq!(g.kind, p.kind);
            prop_assert_eq!(g.cut, p.kind != PathKind::Zigzag);
            let closing = usize::from(p.closed && p.points.len() > 2);
            prop_assert_eq!(g.points.len(), p.points.len() + closing);
            length += p.length();
        }
        prop_assert!((e - length).abs() <= 1e-9 * length.max(1.0));
    }
}

fn box_config() -> PipelineConfig {
    PipelineConfig {
        spacing_w: 1.5,
        min_path_length_mm: 5.0,
        layer_height: 1.0,
        boundary_source_boxes: vec![[-1.0, -1.0, 0.5, 13.0]],
        zigzag_spacing: 0.8,
        ..PipelineConfig::default()
    }
}

#[test]
fn report_fibre_length_is_sum_of_fibre_paths() {
    let (mesh, tensors) = build_test_solid(
        &TestSolid::Box {
            lx: 30.0,
            ly: 12.0,
            lz: 2.0,
            stress: 10.0,
        },
        1.0,
    )
    .unwrap();
    let out = compute(mesh, &tensors, &box_config(), Stage::Full).unwrap();
    let fibre: f64 = out
        .layers
        .iter()
        .flat_map(|l| l.paths.iter())
        .filter(|p| p.kind != PathKind::Zigzag)
        .map(Toolpath::length)
        .sum();
    assert!(fibre > 0.0);
    assert!((out.report.total_fibre_length - fibre).abs() < 1e-6);
    assert!(out
        .layers
        .iter()
        .any(|l| l.paths.iter().any(|p| p.kind == PathKind::Zigzag)));
    for l in &out.report.layers {
        if let Some(d) = l.min_spacing {
            assert!(d > 1.5);
        }
    }
}

#[test]
fn runs_are_byte_identical_and_files_parse_back() {
    let dir = tempfile::tempdir().unwrap();
    let (mesh, tensors) = build_test_solid(
        &TestSolid::Cantilever {
            length: 30.0,
            depth: 10.0,
            width: 2.0,
            load: 100.0,
        },
        1.0,
    )
    .unwrap();
    write_tet_mesh(&mesh, dir.path().join("m.tet")).unwrap();
    write_stress_field(&tensors, dir.path().join("m.stress")).unwrap();
    let mut cfg = box_config();
    cfg.mesh = dir.path().join("m.tet");
    cfg.stress = dir.path().join("m.stress");
    cfg.boundary_source_boxes.clear();

    let mut texts = Vec::new();
    for run in ["a", "b"] {
        cfg.out_dir = dir.path().join(run);
        let out = run_pipeline(&cfg, Stage::Full).unwrap();
        let text = fs::read_to_string(cfg.out_dir.join("toolpaths.txt")).unwrap();
        assert_eq!(
            load_toolpaths(cfg.out_dir.join("toolpaths.txt")).unwrap(),
            out.layer_paths()
        );
        let report: PipelineReport =
            serde_json::from_str(&fs::read_to_string(cfg.out_dir.join("report.json")).unwrap()).unwrap();
        assert_eq!(report.layers, out.report.layers);
        for l in &out.layers {
            assert!(cfg.out_dir.join(format!("layer_{:03}.svg", l.index)).is_file());
        }
        texts.push((text, fs::read(cfg.out_dir.join("toolpaths.gcode")).unwrap()));
    }
    assert_eq!(texts[0], texts[1]);

    let copy = dir.path().join("copy.txt");
    write_toolpaths(&parse_toolpaths(&texts[0].0).unwrap(), &copy).unwrap();
    assert_eq!(fs::read_to_string(copy).unwrap(), texts[0].0);
}

#[test]
fn missing_input_names_the_stage() {
    let cfg = PipelineConfig {
        mesh: "/nonexistent/m.tet".into(),
        stress: "/nonexistent/m.stress".into(),
        ..PipelineConfig::default()
    };
    let err = run_pipeline(&cfg, Stage::Full).unwrap_err();
    assert_eq!(err.stage, "load mesh");
    assert!(err.to_string().starts_with("load mesh: "), "{err}");
}
