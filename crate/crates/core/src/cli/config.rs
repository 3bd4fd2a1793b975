//! Run configuration: flat `key = value` lines grouped under `[section]` headers.
//!
//! `#` starts a comment. Unknown sections and keys are rejected with the file
//! and line they appear on. Angles are given in degrees, lengths in mm.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::curves::AngleGrid;
use crate::error::{Error, Result};
use crate::geometry::{rad, ScanGeometry};
use crate::lattice::Lattice;
use crate::phantom::{self, Peen, PhantomSlice, Shape, Side, StrainPreset};
use crate::recon::{RampFilter, StrainMode, Support, DEFAULT_EROSION, DEFAULT_SUPPORT_FRACTION};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeKind {
    Rect,
    Disk,
    MaskFile,
}

impl FromStr for ShapeKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "rect" => Ok(ShapeKind::Rect),
            "disk" => Ok(ShapeKind::Disk),
            "mask_file" => Ok(ShapeKind::MaskFile),
            other => Err(format!("unknown shape `{other}` (rect|disk|mask_file)")),
        }
    }
}

impl ShapeKind {
    fn as_str(&self) -> &'static str {
        match self {
            ShapeKind::Rect => "rect",
            ShapeKind::Disk => "disk",
            ShapeKind::MaskFile => "mask_file",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StrainKind {
    None,
    Uniform,
    Peen,
}

impl FromStr for StrainKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "none" => Ok(StrainKind::None),
            "uniform" => Ok(StrainKind::Uniform),
            "peen" => Ok(StrainKind::Peen),
            other => Err(format!("unknown strain preset `{other}` (none|uniform|peen)")),
        }
    }
}

impl StrainKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            StrainKind::None => "none",
            StrainKind::Uniform => "uniform",
            StrainKind::Peen => "peen",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StrainDisplay {
    /// Bragg-angle offset in radians.
    Offset,
    /// Lattice strain `-offset / tan(theta)`.
    Strain,
}

impl FromStr for StrainDisplay {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "offset" => Ok(StrainDisplay::Offset),
            "strain" => Ok(StrainDisplay::Strain),
            other => Err(format!("unknown display `{other}` (offset|strain)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeometryConfig {
    pub bragg_theta_deg: f64,
    pub det_distance_mm: f64,
    pub pixel_pitch_mm: f64,
    pub n_angles: usize,
    pub span_deg: f64,
    /// Defaults to the phantom's `nx`.
    pub n_translations: Option<usize>,
    /// Defaults to the phantom's voxel pitch.
    pub translation_pitch_mm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomConfig {
    pub shape: ShapeKind,
    pub nx: usize,
    pub ny: usize,
    pub voxel_pitch_mm: f64,
    pub width_mm: f64,
    pub height_mm: f64,
    pub radius_mm: f64,
    pub center_x_mm: f64,
    pub center_y_mm: f64,
    pub mask_file: Option<PathBuf>,
    pub strain: StrainKind,
    pub uniform_offset_rad: f64,
    pub peen_sides: Vec<Side>,
    pub peen_depth_mm: f64,
    pub peen_surface_amp_rad: f64,
    pub peen_bulk_amp_rad: Option<f64>,
    /// When set, strain offsets are rescaled so that
    /// `max |strain| = ratio * max |parallax|`.
    pub strain_to_parallax_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveConfig {
    pub samples: usize,
    pub half_span_mrad: f64,
    pub peak_width_mrad: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconConfig {
    pub mode: StrainMode,
    pub filter: RampFilter,
    pub erosion: usize,
    /// Support from the phantom mask, or from thresholding the reconstructed
    /// intensity at `support_fraction` of its maximum.
    pub support_from_phantom: bool,
    pub support_fraction: f64,
    pub strain_display: StrainDisplay,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub pgm: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyConfig {
    /// Multiplies the detector distance used by the correction step only
    /// (fault injection; 1 means no fault).
    pub correction_z_scale: f64,
    pub oracle_grid: usize,
    pub oracle_angles: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub geometry: GeometryConfig,
    pub phantom: PhantomConfig,
    pub curves: CurveConfig,
    pub recon: ReconConfig,
    pub output: OutputConfig,
    pub verify: VerifyConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            geometry: GeometryConfig {
                bragg_theta_deg: 6.839,
                // the sample-detector distance is only known approximately (~0.8 m)
                det_distance_mm: 800.0,
                pixel_pitch_mm: 0.15,
                n_angles: 200,
                span_deg: 360.0,
                n_translations: None,
                translation_pitch_mm: None,
            },
            phantom: PhantomConfig {
                shape: ShapeKind::Rect,
                nx: phantom::DEFAULT_GRID,
                ny: phantom::DEFAULT_GRID,
                voxel_pitch_mm: phantom::DEFAULT_VOXEL_PITCH,
                width_mm: 1.0,
                height_mm: 1.0,
                radius_mm: 0.5,
                center_x_mm: 0.0,
                center_y_mm: 0.0,
                mask_file: None,
                strain: StrainKind::Peen,
                uniform_offset_rad: 1e-4,
                peen_sides: vec![Side::Top, Side::Right, Side::Bottom],
                peen_depth_mm: 0.1,
                peen_surface_amp_rad: 1e-3,
                peen_bulk_amp_rad: None,
                strain_to_parallax_ratio: Some(10.0),
            },
            curves: CurveConfig {
                samples: crate::curves::DEFAULT_SAMPLES,
                half_span_mrad: crate::curves::DEFAULT_HALF_SPAN * 1e3,
                peak_width_mrad: 5.0 * crate::curves::DEFAULT_HALF_SPAN * 1e3
                    / (crate::curves::DEFAULT_SAMPLES / 2) as f64,
            },
            recon: ReconConfig {
                mode: StrainMode::Simple,
                filter: RampFilter::Ramp,
                erosion: DEFAULT_EROSION,
                support_from_phantom: true,
                support_fraction: DEFAULT_SUPPORT_FRACTION,
                strain_display: StrainDisplay::Offset,
            },
            output: OutputConfig {
                dir: PathBuf::from("out"),
                pgm: false,
            },
            verify: VerifyConfig {
                correction_z_scale: 1.0,
                oracle_grid: 64,
                oracle_angles: 64,
            },
        }
    }
}

struct Ctx<'a> {
    path: &'a Path,
    line: usize,
}

impl Ctx<'_> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::Config {
            path: self.path.to_path_buf(),
            line: self.line,
            message: message.into(),
        }
    }

    fn parse<T: FromStr>(&self, key: &str, value: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        value
            .parse::<T>()
            .map_err(|e| self.err(format!("invalid value `{value}` for `{key}`: {e}")))
    }
}

impl RunConfig {
    /// Reads and validates a configuration file. Relative `mask_file` paths
    /// resolve against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, path, base)
    }

    /// Parses configuration text; `origin` names it in error messages.
    pub fn parse(text: &str, origin: &Path, base: &Path) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut section = String::new();
        let mut seen = HashSet::new();
        let mut two_theta: Option<(f64, usize)> = None;
        let mut theta: Option<(f64, usize)> = None;

        for (idx, raw) in text.lines().enumerate() {
            let ctx = Ctx {
                path: origin,
                line: idx + 1,
            };
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| ctx.err(format!("malformed section header `{line}`")))?
                    .trim();
                if !["geometry", "phantom", "curves", "recon", "output", "verify"].contains(&name) {
                    return Err(ctx.err(format!("unknown section `[{name}]`")));
                }
                section = name.to_string();
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ctx.err(format!("expected `key = value`, got `{line}`")))?;
            let key = key.trim();
            let value = value.trim();
            if section.is_empty() {
                return Err(ctx.err(format!("key `{key}` appears before any section")));
            }
            if !seen.insert(format!("{section}.{key}")) {
                return Err(ctx.err(format!("duplicate key `{key}` in [{section}]")));
            }

            let g = &mut cfg.geometry;
            let p = &mut cfg.phantom;
            match (section.as_str(), key) {
                ("geometry", "bragg_theta_deg") => theta = Some((ctx.parse(key, value)?, ctx.line)),
                ("geometry", "two_theta_deg") => two_theta = Some((ctx.parse(key, value)?, ctx.line)),
                ("geometry", "det_distance_mm") => g.det_distance_mm = ctx.parse(key, value)?,
                ("geometry", "pixel_pitch_mm") => g.pixel_pitch_mm = ctx.parse(key, value)?,
                ("geometry", "n_angles") => g.n_angles = ctx.parse(key, value)?,
                ("geometry", "span_deg") => g.span_deg = ctx.parse(key, value)?,
                ("geometry", "n_translations") => g.n_translations = Some(ctx.parse(key, value)?),
                ("geometry", "translation_pitch_mm") => g.translation_pitch_mm = Some(ctx.parse(key, value)?),
                ("phantom", "shape") => p.shape = ctx.parse(key, value)?,
                ("phantom", "nx") => p.nx = ctx.parse(key, value)?,
                ("phantom", "ny") => p.ny = ctx.parse(key, value)?,
                ("phantom", "voxel_pitch_mm") => p.voxel_pitch_mm = ctx.parse(key, value)?,
                ("phantom", "width_mm") => p.width_mm = ctx.parse(key, value)?,
                ("phantom", "height_mm") => p.height_mm = ctx.parse(key, value)?,
                ("phantom", "radius_mm") => p.radius_mm = ctx.parse(key, value)?,
                ("phantom", "center_x_mm") => p.center_x_mm = ctx.parse(key, value)?,
                ("phantom", "center_y_mm") => p.center_y_mm = ctx.parse(key, value)?,
                ("phantom", "mask_file") => {
                    let path = base.join(value);
                    if !path.is_file() {
                        return Err(ctx.err(format!("mask file `{}` does not exist", path.display())));
                    }
                    p.mask_file = Some(path);
                }
                ("phantom", "strain") => p.strain = ctx.parse(key, value)?,
                ("phantom", "uniform_offset_rad") => p.uniform_offset_rad = ctx.parse(key, value)?,
                ("phantom", "peen_sides") => {
                    p.peen_sides = value
                        .split(',')
                        .filter(|s| !s.trim().is_empty())
                        .map(|s| s.parse::<Side>().map_err(|e| ctx.err(e)))
                        .collect::<Result<_>>()?
                }
                ("phantom", "peen_depth_mm") => p.peen_depth_mm = ctx.parse(key, value)?,
                ("phantom", "peen_surface_amp_rad") => p.peen_surface_amp_rad = ctx.parse(key, value)?,
                ("phantom", "peen_bulk_amp_rad") => {
                    p.peen_bulk_amp_rad = match value {
                        "balance" => None,
                        v => Some(ctx.parse(key, v)?),
                    }
                }
                ("phantom", "strain_to_parallax_ratio") => {
                    p.strain_to_parallax_ratio = match value {
                        "none" => None,
                        v => Some(ctx.parse(key, v)?),
                    }
                }
                ("curves", "samples") => cfg.curves.samples = ctx.parse(key, value)?,
                ("curves", "half_span_mrad") => cfg.curves.half_span_mrad = ctx.parse(key, value)?,
                ("curves", "peak_width_mrad") => cfg.curves.peak_width_mrad = ctx.parse(key, value)?,
                ("recon", "mode") => cfg.recon.mode = ctx.parse(key, value)?,
                ("recon", "filter") => cfg.recon.filter = ctx.parse(key, value)?,
                ("recon", "erosion") => cfg.recon.erosion = ctx.parse(key, value)?,
                ("recon", "support") => {
                    cfg.recon.support_from_phantom = match value {
                        "phantom" => true,
                        "threshold" => false,
                        v => return Err(ctx.err(format!("`support` must be phantom or threshold, got `{v}`"))),
                    }
                }
                ("recon", "support_fraction") => cfg.recon.support_fraction = ctx.parse(key, value)?,
                ("recon", "strain_display") => cfg.recon.strain_display = ctx.parse(key, value)?,
                ("output", "dir") => cfg.output.dir = PathBuf::from(value),
                ("output", "pgm") => cfg.output.pgm = ctx.parse(key, value)?,
                ("verify", "correction_z_scale") => cfg.verify.correction_z_scale = ctx.parse(key, value)?,
                ("verify", "oracle_grid") => cfg.verify.oracle_grid = ctx.parse(key, value)?,
                ("verify", "oracle_angles") => cfg.verify.oracle_angles = ctx.parse(key, value)?,
                (s, k) => return Err(ctx.err(format!("unknown key `{k}` in [{s}]"))),
            }
        }

        match (theta, two_theta) {
            (Some(_), Some((_, line))) => {
                return Err(Ctx { path: origin, line }.err("give either bragg_theta_deg or two_theta_deg, not both"))
            }
            (Some((t, _)), None) => cfg.geometry.bragg_theta_deg = t,
            (None, Some((t2, _))) => cfg.geometry.bragg_theta_deg = t2 / 2.0,
            (None, None) => {}
        }
        if cfg.phantom.shape == ShapeKind::MaskFile && cfg.phantom.mask_file.is_none() {
            return Err(Ctx { path: origin, line: 0 }.err("shape = mask_file needs a mask_file key"));
        }
        cfg.validate().map_err(|e| match e {
            Error::Config { .. } => e,
            other => Error::Config {
                path: origin.to_path_buf(),
                line: 0,
                message: other.to_string(),
            },
        })?;
        Ok(cfg)
    }

    /// Checks that every block builds a valid object.
    pub fn validate(&self) -> Result<()> {
        self.scan_geometry()?;
        self.angle_grid()?;
        if !(self.phantom.voxel_pitch_mm > 0.0) || self.phantom.nx == 0 || self.phantom.ny == 0 {
            return Err(Error::InvalidGeometry("phantom grid must be non-empty".into()));
        }
        if !(self.curves.peak_width_mrad > 0.0) {
            return Err(Error::InvalidPeak("peak width must be positive".into()));
        }
        if !(self.recon.support_fraction > 0.0 && self.recon.support_fraction < 1.0) {
            return Err(Error::InvalidGeometry("support_fraction must lie in (0, 1)".into()));
        }
        if !(self.verify.correction_z_scale > 0.0) {
            return Err(Error::InvalidGeometry("correction_z_scale must be positive".into()));
        }
        Ok(())
    }

    pub fn lattice(&self) -> Lattice {
        Lattice::new(self.phantom.nx, self.phantom.ny, self.phantom.voxel_pitch_mm)
    }

    pub fn scan_geometry(&self) -> Result<ScanGeometry> {
        let g = &self.geometry;
        ScanGeometry::uniform(
            rad(g.bragg_theta_deg),
            g.det_distance_mm,
            g.pixel_pitch_mm,
            g.n_translations.unwrap_or(self.phantom.nx),
            g.translation_pitch_mm.unwrap_or(self.phantom.voxel_pitch_mm),
            g.n_angles,
            rad(g.span_deg),
        )
    }

    pub fn angle_grid(&self) -> Result<AngleGrid> {
        AngleGrid::new(self.curves.samples, self.curves.half_span_mrad * 1e-3)
    }

    pub fn peak_width(&self) -> f64 {
        self.curves.peak_width_mrad * 1e-3
    }

    pub fn shape(&self) -> Shape {
        let p = &self.phantom;
        let center = (p.center_x_mm, p.center_y_mm);
        match p.shape {
            ShapeKind::Rect => Shape::Rect {
                width: p.width_mm,
                height: p.height_mm,
                center,
            },
            ShapeKind::Disk => Shape::Disk {
                radius: p.radius_mm,
                center,
            },
            ShapeKind::MaskFile => Shape::MaskFile(p.mask_file.clone().unwrap_or_default()),
        }
    }

    pub fn peen(&self) -> Peen {
        let p = &self.phantom;
        Peen {
            sides: p.peen_sides.clone(),
            depth: p.peen_depth_mm,
            surface_amp: p.peen_surface_amp_rad,
            bulk_amp: p.peen_bulk_amp_rad,
        }
    }

    pub fn strain_preset(&self) -> StrainPreset {
        match self.phantom.strain {
            StrainKind::None => StrainPreset::Uniform(0.0),
            StrainKind::Uniform => StrainPreset::Uniform(self.phantom.uniform_offset_rad),
            StrainKind::Peen => StrainPreset::Peen(self.peen()),
        }
    }

    /// Builds the configured phantom, strain preset and ratio scaling included.
    pub fn build_phantom(&self) -> Result<PhantomSlice> {
        let geom = self.scan_geometry()?;
        let shape = phantom::make_shape(&self.shape(), self.lattice())?;
        let strained = phantom::apply_strain_preset(&shape, &self.strain_preset())?;
        Ok(match self.phantom.strain_to_parallax_ratio {
            Some(ratio) => strained.scale_strain_to_parallax(ratio, &geom),
            None => strained,
        })
    }

    /// Reconstruction support for `phantom` (its mask is used when configured so).
    pub fn support(&self, phantom: &PhantomSlice) -> Support {
        if self.recon.support_from_phantom {
            Support::Mask(phantom.mask().clone())
        } else {
            Support::Threshold(self.recon.support_fraction)
        }
    }

    /// The fully resolved configuration, defaults expanded, in the input format.
    pub fn to_text(&self) -> String {
        let g = &self.geometry;
        let p = &self.phantom;
        let mut s = String::new();
        let opt = |v: Option<f64>, none: &str| v.map_or(none.to_string(), |x| format!("{x:?}"));
        let _ = writeln!(s, "[geometry]");
        let _ = writeln!(s, "bragg_theta_deg = {:?}", g.bragg_theta_deg);
        let _ = writeln!(s, "det_distance_mm = {:?}", g.det_distance_mm);
        let _ = writeln!(s, "pixel_pitch_mm = {:?}", g.pixel_pitch_mm);
        let _ = writeln!(s, "n_angles = {}", g.n_angles);
        let _ = writeln!(s, "span_deg = {:?}", g.span_deg);
        let _ = writeln!(s, "n_translations = {}", g.n_translations.unwrap_or(p.nx));
        let _ = writeln!(
            s,
            "translation_pitch_mm = {:?}",
            g.translation_pitch_mm.unwrap_or(p.voxel_pitch_mm)
        );
        let _ = writeln!(s, "\n[phantom]");
        let _ = writeln!(s, "shape = {}", p.shape.as_str());
        let _ = writeln!(s, "nx = {}", p.nx);
        let _ = writeln!(s, "ny = {}", p.ny);
        let _ = writeln!(s, "voxel_pitch_mm = {:?}", p.voxel_pitch_mm);
        let _ = writeln!(s, "width_mm = {:?}", p.width_mm);
        let _ = writeln!(s, "height_mm = {:?}", p.height_mm);
        let _ = writeln!(s, "radius_mm = {:?}", p.radius_mm);
        let _ = writeln!(s, "center_x_mm = {:?}", p.center_x_mm);
        let _ = writeln!(s, "center_y_mm = {:?}", p.center_y_mm);
        if let Some(m) = &p.mask_file {
            let _ = writeln!(s, "mask_file = {}", m.display());
        }
        let _ = writeln!(s, "strain = {}", p.strain.as_str());
        let _ = writeln!(s, "uniform_offset_rad = {:?}", p.uniform_offset_rad);
        let sides: Vec<String> = p.peen_sides.iter().map(Side::to_string).collect();
        let _ = writeln!(s, "peen_sides = {}", sides.join(","));
        let _ = writeln!(s, "peen_depth_mm = {:?}", p.peen_depth_mm);
        let _ = writeln!(s, "peen_surface_amp_rad = {:?}", p.peen_surface_amp_rad);
        let _ = writeln!(s, "peen_bulk_amp_rad = {}", opt(p.peen_bulk_amp_rad, "balance"));
        let _ = writeln!(
            s,
            "strain_to_parallax_ratio = {}",
            opt(p.strain_to_parallax_ratio, "none")
        );
        let _ = writeln!(s, "\n[curves]");
        let _ = writeln!(s, "samples = {}", self.curves.samples);
        let _ = writeln!(s, "half_span_mrad = {:?}", self.curves.half_span_mrad);
        let _ = writeln!(s, "peak_width_mrad = {:?}", self.curves.peak_width_mrad);
        let _ = writeln!(s, "\n[recon]");
        let _ = writeln!(s, "mode = {}", self.recon.mode);
        let _ = writeln!(s, "filter = {}", self.recon.filter);
        let _ = writeln!(s, "erosion = {}", self.recon.erosion);
        let support = if self.recon.support_from_phantom {
            "phantom"
        } else {
            "threshold"
        };
        let _ = writeln!(s, "support = {support}");
        let _ = writeln!(s, "support_fraction = {:?}", self.recon.support_fraction);
        let display = match self.recon.strain_display {
            StrainDisplay::Offset => "offset",
            StrainDisplay::Strain => "strain",
        };
        let _ = writeln!(s, "strain_display = {display}");
        let _ = writeln!(s, "\n[output]");
        let _ = writeln!(s, "dir = {}", self.output.dir.display());
        let _ = writeln!(s, "pgm = {}", self.output.pgm);
        let _ = writeln!(s, "\n[verify]");
        let _ = writeln!(s, "correction_z_scale = {:?}", self.verify.correction_z_scale);
        let _ = writeln!(s, "oracle_grid = {}", self.verify.oracle_grid);
        let _ = writeln!(s, "oracle_angles = {}", self.verify.oracle_angles);
        s
    }
}
