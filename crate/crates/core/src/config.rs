//! Flat `key = value` pipeline configuration.

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::boundary::{DEFAULT_HEAT_T_SCALE, DEFAULT_MIN_PATH_LENGTH};
use crate::field2d::{DEFAULT_DENSITY_EXPONENT, DEFAULT_SMOOTHING_ITERATIONS};
use crate::isopath::DEFAULT_SPACING;
use crate::stress::{DEFAULT_ETA, DEFAULT_MU};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid value for {key}: {msg}")]
    Invalid { key: &'static str, msg: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub mesh: PathBuf,
    pub stress: PathBuf,
    pub out_dir: PathBuf,
    /// Minimum spacing W between neighbouring fibre paths (mm).
    pub spacing_w: f64,
    /// Density exponent p.
    pub density_p: f64,
    pub mu: f64,
    pub eta: f64,
    pub smoothing_iterations: usize,
    /// Distance between fibre layers (mm).
    pub layer_height: f64,
    pub layer_offset: f64,
    pub min_path_length_mm: f64,
    /// `[xmin, ymin, xmax, ymax]` boxes selecting the distance source.
    pub boundary_source_boxes: Vec<[f64; 4]>,
    pub heat_t_scale: f64,
    /// Zigzag scanline spacing (mm); zero disables matrix infill.
    pub zigzag_spacing: f64,
    pub zigzag_angle: f64,
    pub area_weighted_fit: bool,
    /// Half-open range of layer indices to process; all layers when `None`.
    pub layers: Option<(usize, usize)>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            mesh: PathBuf::new(),
            stress: PathBuf::new(),
            out_dir: PathBuf::from("out"),
            spacing_w: DEFAULT_SPACING,
            density_p: DEFAULT_DENSITY_EXPONENT,
            mu: DEFAULT_MU,
            eta: DEFAULT_ETA,
            smoothing_iterations: DEFAULT_SMOOTHING_ITERATIONS,
            layer_height: 1.0,
            layer_offset: 0.0,
            min_path_length_mm: DEFAULT_MIN_PATH_LENGTH,
            boundary_source_boxes: Vec::new(),
            heat_t_scale: DEFAULT_HEAT_T_SCALE,
            zigzag_spacing: 0.0,
            zigzag_angle: 0.0,
            area_weighted_fit: true,
            layers: None,
        }
    }
}

fn parse_f64(line: usize, v: &str) -> Result<f64, ConfigError> {
    v.parse().map_err(|_| ConfigError::Parse {
        line,
        msg: format!("expected a number, got '{v}'"),
    })
}

fn parse_bool(line: usize, v: &str) -> Result<bool, ConfigError> {
    match v {
        "true" | "on" | "1" | "yes" => Ok(true),
        "false" | "off" | "0" | "no" => Ok(false),
        _ => Err(ConfigError::Parse {
            line,
            msg: format!("expected a boolean, got '{v}'"),
        }),
    }
}

/// Parses `[(a,b,c,d), ...]`.
fn parse_boxes(line: usize, v: &str) -> Result<Vec<[f64; 4]>, ConfigError> {
    let err = |msg: &str| ConfigError::Parse {
        line,
        msg: msg.to_string(),
    };
    let inner = v
        .strip_prefix('[')
        .and_then(|s| s.strip_suffix(']'))
        .ok_or_else(|| err("list values must be enclosed in brackets"))?
        .trim();
    let mut out = Vec::new();
    let mut rest = inner;
    while !rest.is_empty() {
        let open = rest.find('(').ok_or_else(|| err("expected '('"))?;
        if !rest[..open].trim().trim_matches(',').trim().is_empty() {
            return Err(err("unexpected text between boxes"));
        }
        let close = rest.find(')').ok_or_else(|| err("unclosed '('"))?;
        let nums: Vec<f64> = rest[open + 1..close]
            .split(',')
            .map(|s| parse_f64(line, s.trim()))
            .collect::<Result<_, _>>()?;
        let b: [f64; 4] = nums
            .try_into()
            .map_err(|_| err("a box needs four numbers (xmin, ymin, xmax, ymax)"))?;
        out.push(b);
        rest = rest[close + 1..].trim_start_matches([',', ' ', '\t']);
    }
    Ok(out)
}

/// Parses a `a..b` layer range.
pub fn parse_layer_range(v: &str) -> Option<(usize, usize)> {
    let (a, b) = v.split_once("..")?;
    let (a, b) = (a.trim().parse().ok()?, b.trim().parse().ok()?);
    (a < b).then_some((a, b))
}

impl PipelineConfig {
    /// Parses config text; relative paths are resolved against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        let path = |v: &str| {
            let p = PathBuf::from(v);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        };
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap().trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::Parse {
                line,
                msg: "expected 'key = value'".into(),
            })?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "mesh" => cfg.mesh = path(value),
                "stress" => cfg.stress = path(value),
                "out_dir" => cfg.out_dir = path(value),
                "spacing_w" => cfg.spacing_w = parse_f64(line, value)?,
                "density_p" => cfg.density_p = parse_f64(line, value)?,
                "mu" => cfg.mu = parse_f64(line, value)?,
                "eta" => cfg.eta = parse_f64(line, value)?,
                "smoothing_iterations" => {
                    cfg.smoothing_iterations = value.parse().map_err(|_| ConfigError::Parse {
                        line,
                        msg: format!("expected a count, got '{value}'"),
                    })?
                }
                "layer_height" => cfg.layer_height = parse_f64(line, value)?,
                "layer_offset" => cfg.layer_offset = parse_f64(line, value)?,
                "min_path_length_mm" => cfg.min_path_length_mm = parse_f64(line, value)?,
                "boundary_source_boxes" => cfg.boundary_source_boxes = parse_boxes(line, value)?,
                "heat_t_scale" => cfg.heat_t_scale = parse_f64(line, value)?,
                "zigzag_spacing" => cfg.zigzag_spacing = parse_f64(line, value)?,
                "zigzag_angle" => cfg.zigzag_angle = parse_f64(line, value)?,
                "area_weighted_fit" => cfg.area_weighted_fit = parse_bool(line, value)?,
                "layers" => {
                    cfg.layers = Some(parse_layer_range(value).ok_or_else(|| ConfigError::Parse {
                        line,
                        msg: format!("expected a range 'a..b', got '{value}'"),
                    })?)
                }
                other => {
                    return Err(ConfigError::Parse {
                        line,
                        msg: format!("unknown key '{other}'"),
                    })
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let check = |ok: bool, key: &'static str, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(ConfigError::Invalid {
                    key,
                    msg: msg.to_string(),
                })
            }
        };
        check(self.spacing_w > 0.0, "spacing_w", "must be positive")?;
        check(self.density_p >= 0.0, "density_p", "must be non-negative")?;
        check(self.mu > 0.0, "mu", "must be positive")?;
        check(self.eta > 0.0 && self.eta < 1.0, "eta", "must lie in (0, 1)")?;
        check(
            self.smoothing_iterations >= 1,
            "smoothing_iterations",
            "must be at least 1",
        )?;
        check(self.layer_height > 0.0, "layer_height", "must be positive")?;
        check(self.layer_offset.is_finite(), "layer_offset", "must be finite")?;
        check(
            self.min_path_length_mm >= 0.0,
            "min_path_length_mm",
            "must be non-negative",
        )?;
        check(self.heat_t_scale > 0.0, "heat_t_scale", "must be positive")?;
        check(self.zigzag_spacing >= 0.0, "zigzag_spacing", "must be non-negative")?;
        check(
            self.boundary_source_boxes.iter().all(|b| b[0] <= b[2] && b[1] <= b[3]),
            "boundary_source_boxes",
            "each box needs xmin <= xmax and ymin <= ymax",
        )?;
        Ok(())
    }

    /// Serializes back to the config file format.
    pub fn to_text(&self) -> String {
        let boxes: Vec<String> = self
            .boundary_source_boxes
            .iter()
            .map(|b| format!("({}, {}, {}, {})", b[0], b[1], b[2], b[3]))
            .collect();
        let mut s = format!(
            "mesh = {}\nstress = {}\nout_dir = {}\nspacing_w = {}\ndensity_p = {}\nmu = {}\neta = {}\n\
             smoothing_iterations = {}\nlayer_height = {}\nlayer_offset = {}\nmin_path_length_mm = {}\n\
             boundary_source_boxes = [{}]\nheat_t_scale = {}\nzigzag_spacing = {}\nzigzag_angle = {}\n\
             area_weighted_fit = {}\n",
            self.mesh.display(),
            self.stress.display(),
            self.out_dir.display(),
            self.spacing_w,
            self.density_p,
            self.mu,
            self.eta,
            self.smoothing_iterations,
            self.layer_height,
            self.layer_offset,
            self.min_path_length_mm,
            boxes.join(", "),
            self.heat_t_scale,
            self.zigzag_spacing,
            self.zigzag_angle,
            self.area_weighted_fit,
        );
        if let Some((a, b)) = self.layers {
            s.push_str(&format!("layers = {a}..{b}\n"));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let text = "# comment\nmesh = part.tet\nstress = part.stress # trailing\nspacing_w = 1.2\n\
                    boundary_source_boxes = [(0, 0, 1, 10), (-1.5,2,3,4)]\narea_weighted_fit = off\n";
        let cfg = PipelineConfig::parse(text, Path::new("/data")).unwrap();
        assert_eq!(cfg.mesh, PathBuf::from("/data/part.tet"));
        assert_eq!(cfg.spacing_w, 1.2);
        assert_eq!(cfg.mu, 3.0);
        assert_eq!(cfg.eta, 0.5);
        assert_eq!(cfg.density_p, 1.0);
        assert_eq!(cfg.smoothing_iterations, 50);
        assert_eq!(cfg.min_path_length_mm, 42.0);
        assert_eq!(
            cfg.boundary_source_boxes,
            vec![[0.0, 0.0, 1.0, 10.0], [-1.5, 2.0, 3.0, 4.0]]
        );
        assert!(!cfg.area_weighted_fit);
    }

    #[test]
    fn rejects_bad_input() {
        let base = Path::new(".");
        assert!(matches!(
            PipelineConfig::parse("eta = 1.5\n", base),
            Err(ConfigError::Invalid { key: "eta", .. })
        ));
        assert!(matches!(
            PipelineConfig::parse("nope = 1\n", base),
            Err(ConfigError::Parse { line: 1, .. })
        ));
        assert!(matches!(
            PipelineConfig::parse("spacing_w\n", base),
            Err(ConfigError::Parse { .. })
        ));
        assert!(PipelineConfig::parse("boundary_source_boxes = [(1,2,3)]\n", base).is_err());
        assert!(PipelineConfig::parse("smoothing_iterations = 0\n", base).is_err());
    }

    #[test]
    fn text_round_trip() {
        let mut cfg = PipelineConfig {
            mesh: PathBuf::from("/a/m.tet"),
            stress: PathBuf::from("/a/m.stress"),
            out_dir: PathBuf::from("/a/out"),
            boundary_source_boxes: vec![[0.0, -1.0, 0.5, 1.0]],
            zigzag_spacing: 0.8,
            ..Default::default()
        };
        cfg.layers = Some((2, 5));
        let back = PipelineConfig::parse(&cfg.to_text(), Path::new("/")).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn layer_ranges() {
        assert_eq!(parse_layer_range("2..5"), Some((2, 5)));
        assert_eq!(parse_layer_range("5..2"), None);
        assert_eq!(parse_layer_range("x"), None);
    }
}
