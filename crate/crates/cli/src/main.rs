use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use fibrepath_core::config::{parse_layer_range, PipelineConfig};
use fibrepath_core::mesh::{write_stress_field, write_tet_mesh};
use fibrepath_core::pipeline::{run_pipeline, PipelineReport, Stage};
use fibrepath_core::synthetic::{build_test_solid, TestSolid};

#[derive(Parser)]
#[command(name = "fibrepath", version, about = "Stress-aligned continuous-fibre toolpaths")]
struct Cli {
    /// Log progress to stderr.
    #[arg(long, short, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline.
    Pipeline(RunArgs),
    /// Stop after the scalar field and dump it per layer.
    Field(RunArgs),
    /// Stop after isocurve extraction, without connection or filtering.
    Paths(RunArgs),
    /// Write a synthetic test solid with its stress field and a config.
    Synth(SynthArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Half-open layer index range, e.g. `0..4`.
    #[arg(long, value_parser = layer_range)]
    layers: Option<(usize, usize)>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolidKind {
    Box,
    Plate,
    Cantilever,
}

#[derive(Args)]
struct SynthArgs {
    solid: SolidKind,
    /// Target tet edge length (mm).
    #[arg(long, default_value_t = 1.0)]
    edge: f64,
    #[arg(long)]
    out: PathBuf,
}

fn layer_range(v: &str) -> Result<(usize, usize), String> {
    parse_layer_range(v).ok_or_else(|| format!("expected 'a..b' with a < b, got '{v}'"))
}

fn run(args: RunArgs, stage: Stage) -> Result<()> {
    let mut cfg =
        PipelineConfig::load(&args.config).with_context(|| format!("reading config {}", args.config.display()))?;
    if let Some(out) = args.out {
        cfg.out_dir = out;
    }
    if args.layers.is_some() {
        cfg.layers = args.layers;
    }
    let out = run_pipeline(&cfg, stage)?;
    print_summary(&out.report, &cfg.out_dir);
    Ok(())
}

fn print_summary(report: &PipelineReport, dir: &Path) {
    println!("layer        z  faces  curves  min_spacing  fibre_mm  removed_mm");
    for l in &report.layers {
        let d = l.min_spacing.map_or("-".to_string(), |d| format!("{d:.3}"));
        println!(
            "{:5} {:8.3} {:6} {:7} {:>12} {:9.1} {:11.1}",
            l.index, l.z, l.faces, l.isocurves, d, l.fibre_length, l.removed_length
        );
    }
    println!(
        "total fibre {:.1} mm in {:.2} s; outputs in {}",
        report.total_fibre_length,
        report.total_seconds,
        dir.display()
    );
}

fn synth(args: SynthArgs) -> Result<()> {
    let (solid, boxes) = match args.solid {
        SolidKind::Box => (
            TestSolid::Box {
                lx: 60.0,
                ly: 20.0,
                lz: 4.0,
                stress: 10.0,
            },
            Vec::new(),
        ),
        SolidKind::Plate => {
            let radius = 5.0;
            let r = radius + 0.5;
            (
                TestSolid::PlateWithHole {
                    width: 60.0,
                    height: 40.0,
                    thickness: 4.0,
                    radius,
                    stress: 10.0,
                },
                vec![[-r, -r, r, r]],
            )
        }
        SolidKind::Cantilever => (
            TestSolid::Cantilever {
                length: 80.0,
                depth: 20.0,
                width: 4.0,
                load: 100.0,
            },
            Vec::new(),
        ),
    };
    if !(args.edge > 0.0) {
        bail!("--edge must be positive");
    }
    let (mesh, tensors) = build_test_solid(&solid, args.edge)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let name = solid.name();
    let mesh_file = format!("{name}.tet");
    let stress_file = format!("{name}.stress");
    write_tet_mesh(&mesh, args.out.join(&mesh_file))?;
    write_stress_field(&tensors, args.out.join(&stress_file))?;
    let cfg = PipelineConfig {
        mesh: mesh_file.into(),
        stress: stress_file.into(),
        out_dir: "out".into(),
        boundary_source_boxes: boxes,
        ..Default::default()
    };
    let cfg_path = args.out.join(format!("{name}.cfg"));
    fs::write(&cfg_path, cfg.to_text()).with_context(|| format!("writing {}", cfg_path.display()))?;
    info!("{} elements", mesh.tets.len());
    println!("wrote {} ({} elements)", cfg_path.display(), mesh.tets.len());
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    env_logger::Builder::from_default_env()
        .filter_level(if cli.verbose {
            log::LevelFilter::Info
        } else {
            log::LevelFilter::Warn
        })
        .init();
    match cli.command {
        Command::Pipeline(a) => run(a, Stage::Full),
        Command::Field(a) => run(a, Stage::Field),
        Command::Paths(a) => run(a, Stage::Paths),
        Command::Synth(a) => synth(a),
    }
}
