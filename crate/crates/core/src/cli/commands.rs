//! The subcommands. Each writes its rasters, a report and the resolved
//! configuration into the output directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;

use super::config::{RunConfig, StrainDisplay, StrainKind};
use super::raster::GridRaster;
use super::verify::{self, relative_discrepancy, sign_structure, Status};
use crate::error::{Error, Result};
use crate::forward::{moment_sinograms, simulate_curve_stack, MomentOptions, ParallaxPath, Sinogram, SinogramKind};
use crate::geometry::{offset_to_strain, rad};
use crate::recon::{interior_metrics, pearson, reconstruct_mean_strain, ReconOptions};

pub const RESOLVED_CONFIG: &str = "resolved.cfg";

/// Output sink shared by the commands.
pub struct Outputs {
    dir: PathBuf,
    pgm: bool,
    command: &'static str,
    written: Vec<PathBuf>,
}

impl Outputs {
    pub fn new(cfg: &RunConfig, command: &'static str) -> Result<Self> {
        let dir = cfg.output.dir.clone();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let out = Outputs {
            dir,
            pgm: cfg.output.pgm,
            command,
            written: Vec::new(),
        };
        out.text(RESOLVED_CONFIG, &cfg.to_text())?;
        Ok(out)
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn raster(&mut self, name: &str, mut r: GridRaster) -> Result<()> {
        r.set("generator", concat!("parallax-dxt ", env!("CARGO_PKG_VERSION")));
        r.set("command", self.command);
        let path = self.path(&format!("{name}.f32"));
        r.write(&path)?;
        if self.pgm {
            r.write_pgm(&self.path(&format!("{name}.pgm")))?;
        }
        self.written.push(path);
        Ok(())
    }

    pub fn text(&self, name: &str, body: &str) -> Result<()> {
        let path = self.path(name);
        fs::write(&path, body).map_err(|e| Error::io(&path, e))
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }
}

/// What a command reports back to the caller.
#[derive(Debug)]
pub struct Outcome {
    pub report: String,
    /// Whether every check the command performed held.
    pub passed: bool,
}

fn mask_f64(mask: &Array2<bool>) -> Array2<f64> {
    mask.mapv(|b| if b { 1.0 } else { 0.0 })
}

pub fn cmd_phantom(cfg: &RunConfig) -> Result<Outcome> {
    let geom = cfg.scan_geometry()?;
    let digest = geom.digest();
    let p = cfg.build_phantom()?;
    let l = *p.lattice();
    let mut out = Outputs::new(cfg, "phantom")?;
    out.raster("m0", GridRaster::from_lattice(p.m0(), &l, "m0", "1", &digest))?;
    let mut strain = GridRaster::from_lattice(p.strain_offset(), &l, "strain_offset", "rad", &digest);
    strain.set("preset", cfg.phantom.strain.as_str());
    out.raster("strain", strain)?;
    out.raster(
        "mask",
        GridRaster::from_lattice(&p.mask_f64(), &l, "mask", "1", &digest),
    )?;
    let report = format!(
        "grid = {}x{}\nsupport_voxels = {}\nmax_parallax_rad = {:e}\n",
        l.nx,
        l.ny,
        p.support_size(),
        p.max_parallax(&geom)
    );
    out.text("phantom_report.txt", &report)?;
    Ok(Outcome { report, passed: true })
}

pub fn cmd_parallax_map(cfg: &RunConfig, phi_deg: f64) -> Result<Outcome> {
    let geom = cfg.scan_geometry()?;
    let digest = geom.digest();
    let p = cfg.build_phantom()?;
    let l = *p.lattice();
    let field = p.parallax_field(rad(phi_deg), &geom);
    let px = field.mapv(|v| geom.angle_to_pixels(v));
    let mut out = Outputs::new(cfg, "parallax-map")?;
    for (name, values, units) in [("parallax_rad", &field, "rad"), ("parallax_px", &px, "pixel")] {
        let mut r = GridRaster::from_lattice(values, &l, name, units, &digest);
        r.set("phi_deg", &format!("{phi_deg:?}"));
        out.raster(name, r)?;
    }
    let (lo, hi) = px
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let report = format!("phi_deg = {phi_deg}\nmin_px = {lo:.4}\nmax_px = {hi:.4}\n");
    out.text("parallax_map_report.txt", &report)?;
    Ok(Outcome { report, passed: true })
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SinogramFlags {
    pub parallax: bool,
    pub strain: bool,
    pub oracle: bool,
}

fn sinogram_raster(s: &Sinogram, cfg: &RunConfig, flags: SinogramFlags) -> Result<GridRaster> {
    let mut r = GridRaster::from_sinogram(s, &cfg.scan_geometry()?);
    r.set("parallax", &flags.parallax.to_string());
    r.set("strain", &flags.strain.to_string());
    r.set("strain_preset", cfg.phantom.strain.as_str());
    Ok(r)
}

fn max_finite(a: &Array2<f64>) -> f64 {
    a.iter().filter(|v| v.is_finite()).fold(0.0, |m, v| m.max(v.abs()))
}

/// Forward projection. With neither `parallax` nor `strain` set both are on.
pub fn cmd_sinogram(cfg: &RunConfig, mut flags: SinogramFlags) -> Result<Outcome> {
    if !flags.parallax && !flags.strain {
        flags.parallax = true;
        flags.strain = true;
    }
    let geom = cfg.scan_geometry()?;
    let p = cfg.build_phantom()?;
    let opts = MomentOptions {
        parallax: flags.parallax,
        strain: flags.strain,
        ..MomentOptions::default()
    };
    let m = moment_sinograms(&p, &geom, opts)?;
    let mut out = Outputs::new(cfg, "sinogram")?;
    out.raster("sino_m0", sinogram_raster(&m.intensity, cfg, flags)?)?;
    out.raster("sino_m1", sinogram_raster(&m.moment1, cfg, flags)?)?;
    out.raster("sino_m1raw", sinogram_raster(&m.moment1_raw(), cfg, flags)?)?;

    let mut report = String::new();
    let _ = writeln!(report, "parallax = {}\nstrain = {}", flags.parallax, flags.strain);
    let _ = writeln!(report, "valid_bins = {}", m.moment1.n_valid());
    let _ = writeln!(report, "max_abs_m1_rad = {:e}", m.moment1.max_abs_valid());
    let mut passed = true;

    if flags.parallax && flags.strain {
        let par = moment_sinograms(&p, &geom, MomentOptions::parallax_only())?;
        let strain = moment_sinograms(&p, &geom, MomentOptions::strain_only())?;
        let residual = m.moment1_raw().values() - par.moment1_raw().values() - strain.moment1_raw().values();
        let scale = m.moment1_raw().max_abs_valid().max(f64::MIN_POSITIVE);
        let rel = max_finite(&residual) / scale;
        let ok = rel < verify::tol::ADDITIVITY;
        passed &= ok;
        let _ = writeln!(report, "additivity_residual_max_abs = {:e}", max_finite(&residual));
        let _ = writeln!(report, "additivity_residual_relative = {rel:e}");
        let _ = writeln!(report, "additivity = {}", if ok { "PASS" } else { "FAIL" });
        let r = GridRaster::from_array(
            &residual,
            "additivity_residual",
            "mm*rad",
            ("t_mm", "phi_rad"),
            &geom.digest(),
        );
        out.raster("additivity_residual", r)?;
    }

    if flags.oracle {
        let stack = simulate_curve_stack(&p, &geom, cfg.angle_grid()?, cfg.peak_width())?;
        let oracle = stack.moments()?;
        // the curves always carry both contributions
        let same_path = moment_sinograms(
            &p,
            &geom,
            MomentOptions {
                parallax_path: ParallaxPath::PerVoxel,
                ..MomentOptions::default()
            },
        )?;
        let rel = relative_discrepancy(&oracle.moment1, &same_path.moment1);
        let worst = max_finite(&rel);
        let ok = worst < verify::tol::ORACLE && oracle.moment1.valid() == same_path.moment1.valid();
        passed &= ok;
        let _ = writeln!(report, "oracle_max_relative = {worst:e}");
        let _ = writeln!(report, "oracle = {}", if ok { "PASS" } else { "FAIL" });
        let r = GridRaster::from_array(
            &rel,
            "oracle_relative_discrepancy",
            "1",
            ("t_mm", "phi_rad"),
            &geom.digest(),
        );
        out.raster("oracle_discrepancy", r)?;
    }
    out.text("sinogram_report.txt", &report)?;
    Ok(Outcome { report, passed })
}

fn read_sinogram(path: &Path, cfg: &RunConfig) -> Result<(Sinogram, GridRaster)> {
    let r = GridRaster::read(path)?;
    let s = r.to_sinogram(&cfg.scan_geometry()?, path)?;
    Ok((s, r))
}

pub struct ReconInputs {
    pub m0: Option<PathBuf>,
    pub m1: Option<PathBuf>,
    pub truth: Option<PathBuf>,
}

/// Mean-strain reconstruction from an intensity and a normalized first-moment
/// sinogram raster (by default the `sinogram` outputs in the output directory).
pub fn cmd_reconstruct(cfg: &RunConfig, inputs: &ReconInputs) -> Result<Outcome> {
    let geom = cfg.scan_geometry()?;
    let m0_path = inputs.m0.clone().unwrap_or_else(|| cfg.output.dir.join("sino_m0.f32"));
    let m1_path = inputs.m1.clone().unwrap_or_else(|| cfg.output.dir.join("sino_m1.f32"));
    let (m1, m1_raster) = read_sinogram(&m1_path, cfg)?;
    if m1.kind() != SinogramKind::Moment1Norm {
        return Err(Error::Raster {
            path: m1_path,
            message: format!("expected a {} sinogram", SinogramKind::Moment1Norm.as_str()),
        });
    }
    let (m0, _) = read_sinogram(&m0_path, cfg)?;
    // validity is decided by the moment sinogram, which was written with it
    let m0 = Sinogram::new(
        m0.values().clone(),
        SinogramKind::Intensity,
        m0.t_offsets().to_vec(),
        m0.angles().to_vec(),
        m1.valid().clone(),
    )?;

    let p = cfg.build_phantom()?;
    let l = *p.lattice();
    let opts = ReconOptions {
        mode: cfg.recon.mode,
        filter: cfg.recon.filter,
        support: cfg.support(&p),
    };
    let r = reconstruct_mean_strain(&m0, &m1, &l, &opts)?;
    let digest = geom.digest();

    let mut report = String::new();
    let _ = writeln!(report, "mode = {}\nfilter = {}", cfg.recon.mode, cfg.recon.filter);
    let _ = writeln!(report, "zero_filled_bins = {}", r.provenance.zero_filled_bins);
    let zero = l.zeros();
    let own = interior_metrics(&r, &zero, cfg.recon.erosion)?;
    let _ = writeln!(report, "interior_voxels = {}", own.count);
    let _ = writeln!(report, "interior_max_abs = {:e}", own.max_abs);
    let _ = writeln!(report, "interior_mean = {:e}", own.mean);
    let _ = writeln!(report, "interior_rms = {:e}", own.rmse);
    let mut passed = true;

    let flag = |key: &str| m1_raster.get(key) == Some("true");
    if flag("parallax") && !flag("strain") {
        let threshold = verify::tol::IMMUNITY * m1.max_abs_valid();
        let ok = own.max_abs < threshold;
        passed &= ok;
        let _ = writeln!(report, "immunity_threshold = {threshold:e}");
        let _ = writeln!(report, "parallax_immunity = {}", if ok { "PASS" } else { "FAIL" });
    }
    if flag("strain") && m1_raster.get("strain_preset") == Some(StrainKind::Peen.as_str()) {
        let (status, detail) = sign_structure(&p, &cfg.peen().sides, 3.0 * cfg.phantom.peen_depth_mm, &r.values);
        passed &= status == Status::Pass;
        let _ = writeln!(report, "sign_structure = {status}");
        let _ = writeln!(report, "sign_structure_detail = {detail}");
    }
    if let Some(truth_path) = &inputs.truth {
        let truth = GridRaster::read(truth_path)?.to_array();
        let m = interior_metrics(&r, &truth, cfg.recon.erosion)?;
        let _ = writeln!(report, "truth_rmse = {:e}", m.rmse);
        let _ = writeln!(report, "truth_max_abs = {:e}", m.max_abs);
        let _ = writeln!(report, "truth_mean_error = {:e}", m.mean);
        let region: Vec<bool> = crate::lattice::erode(&r.valid, cfg.recon.erosion).into_iter().collect();
        let a: Vec<f64> = r.values.iter().copied().collect();
        let b: Vec<f64> = truth.iter().copied().collect();
        match pearson(&a, &b, Some(&region)) {
            Ok(c) => {
                let _ = writeln!(report, "pearson = {c:.6}");
            }
            Err(e) => {
                let _ = writeln!(report, "pearson = undefined ({e})");
            }
        }
    }
    let _ = writeln!(report, "checks = {}", if passed { "PASS" } else { "FAIL" });

    let mut out = Outputs::new(cfg, "reconstruct")?;
    let mut raster = GridRaster::from_lattice(&r.values, &l, "mean_strain_offset", "rad", &digest);
    raster.set("mode", &cfg.recon.mode.to_string());
    raster.set("filter", &cfg.recon.filter.to_string());
    let source = m1_path
        .file_name()
        .map_or(String::new(), |n| n.to_string_lossy().into_owned());
    raster.set("source_m1", &source);
    out.raster("recon", raster)?;
    out.raster(
        "recon_support",
        GridRaster::from_lattice(&mask_f64(&r.valid), &l, "support", "1", &digest),
    )?;
    if cfg.recon.strain_display == StrainDisplay::Strain {
        let theta = geom.bragg_theta();
        let strain = r.values.mapv(|v| offset_to_strain(v, theta));
        out.raster(
            "recon_strain",
            GridRaster::from_lattice(&strain, &l, "mean_strain", "1", &digest),
        )?;
    }
    out.text("metrics.txt", &report)?;
    Ok(Outcome { report, passed })
}

pub fn cmd_verify(cfg: &RunConfig) -> Result<Outcome> {
    let checks = verify::run_all(cfg);
    let report = verify::table(&checks);
    let out = Outputs::new(cfg, "verify")?;
    out.text("verify_report.txt", &report)?;
    Ok(Outcome {
        passed: verify::all_passed(&checks),
        report,
    })
}
