//! End-to-end acceptance harness behind the `verify` subcommand.

use std::fmt;
use std::time::Instant;

use ndarray::Array2;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use super::config::RunConfig;
use crate::error::Result;
use crate::forward::{moment_sinograms, radon, simulate_curve_stack, MomentOptions, ParallaxPath, Sinogram};
use crate::geometry::{rad, ScanGeometry};
use crate::lattice::{erode, Lattice};
use crate::phantom::{self, edge_band, interior_region, make_shape, PhantomSlice, Shape, StrainPreset};
use crate::recon::{
    correct_parallax, fbp, interior_metrics, metrics_over, reconstruct_mean_strain, ReconOptions, Support,
};

/// Tolerances of the individual checks.
pub mod tol {
    pub const LATERAL_MRAD: f64 = 0.16;
    pub const LATERAL_MRAD_TOL: f64 = 0.005;
    pub const LATERAL_PX: f64 = 0.8;
    pub const LATERAL_PX_TOL: f64 = 0.05;
    pub const MEAN_PARALLAX: f64 = 1e-12;
    /// Fraction of the largest parallax offset.
    pub const IMMUNITY: f64 = 0.01;
    pub const EDGE_BAND: usize = 5;
    pub const ADDITIVITY: f64 = 1e-10;
    pub const ORACLE: f64 = 1e-3;
    pub const FBP_RMSE: f64 = 0.02;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    /// Failing as expected for the configured scan (e.g. a half turn).
    ExpectedFail,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::ExpectedFail => "XFAIL",
        })
    }
}

#[derive(Debug, Clone)]
pub struct Check {
    pub id: &'static str,
    pub title: &'static str,
    pub status: Status,
    pub detail: String,
    pub seconds: f64,
}

fn verdict(ok: bool) -> Status {
    if ok {
        Status::Pass
    } else {
        Status::Fail
    }
}

type CheckFn = fn(&RunConfig) -> Result<(Status, String)>;

/// Runs every check. Errors inside a check turn it into a failure.
pub fn run_all(cfg: &RunConfig) -> Vec<Check> {
    let checks: [(&'static str, &'static str, CheckFn); 7] = [
        ("AC-1", "lateral parallax magnitude", lateral_magnitude),
        ("AC-2", "mean parallax cancels over a full turn", mean_cancellation),
        ("AC-3", "parallax immunity of the reconstruction", parallax_immunity),
        ("AC-4", "peened sign structure", peen_sign_structure),
        (
            "AC-5",
            "moment additivity and parallax correction",
            additivity_and_correction,
        ),
        ("AC-6", "curve-stack oracle equivalence", oracle_equivalence),
        ("AC-7", "filtered back-projection round trip", fbp_round_trip),
    ];
    checks
        .into_iter()
        .map(|(id, title, f)| {
            let start = Instant::now();
            let (status, detail) = f(cfg).unwrap_or_else(|e| (Status::Fail, format!("error: {e}")));
            log::info!("{id} {status}: {detail}");
            Check {
                id,
                title,
                status,
                detail,
                seconds: start.elapsed().as_secs_f64(),
            }
        })
        .collect()
}

pub fn all_passed(checks: &[Check]) -> bool {
    checks.iter().all(|c| c.status != Status::Fail)
}

pub fn table(checks: &[Check]) -> String {
    let mut s = String::new();
    for c in checks {
        s.push_str(&format!(
            "{:<5} {:<5} {:<44} {:>7.2}s  {}\n",
            c.id, c.status, c.title, c.seconds, c.detail
        ));
    }
    s
}

fn lateral_magnitude(_: &RunConfig) -> Result<(Status, String)> {
    let geom = ScanGeometry::uniform(rad(7.0), 800.0, 0.15, 1, 1.0, 1, std::f64::consts::TAU)?;
    let mm = geom.lateral_parallax(0.5);
    let mrad = geom.mm_to_angle(mm) * 1e3;
    let px = geom.mm_to_pixels(mm);
    let ok = (mrad - tol::LATERAL_MRAD).abs() <= tol::LATERAL_MRAD_TOL
        && (px - tol::LATERAL_PX).abs() <= tol::LATERAL_PX_TOL;
    Ok((
        verdict(ok),
        format!("dx=0.5mm -> {mm:.5} mm, {mrad:.4} mrad, {px:.3} px"),
    ))
}

fn mean_cancellation(cfg: &RunConfig) -> Result<(Status, String)> {
    let base = cfg.scan_geometry()?;
    let reach = cfg.lattice().half_diagonal();
    let mut rng = StdRng::seed_from_u64(0x5eed);
    let points: Vec<(f64, f64)> = (0..100)
        .map(|_| (rng.random_range(-reach..reach), rng.random_range(-reach..reach)))
        .collect();
    let mut worst = 0.0f64;
    for n in [4, 200, 360] {
        let geom = base.with_uniform_angles(n, std::f64::consts::TAU)?;
        for &(x, y) in &points {
            worst = worst.max(geom.mean_parallax(x, y).abs());
        }
    }
    Ok((
        verdict(worst < tol::MEAN_PARALLAX),
        format!("max |mean| = {worst:.2e} rad over N in {{4,200,360}}, 100 points"),
    ))
}

/// Max interior value of a strain reconstruction of the parallax-only
/// sinograms of `p`, and the threshold it is held to.
fn immunity_residual(p: &PhantomSlice, geom: &ScanGeometry, cfg: &RunConfig) -> Result<(f64, f64)> {
    let m = moment_sinograms(p, geom, MomentOptions::parallax_only())?;
    let threshold = tol::IMMUNITY * m.moment1.max_abs_valid();
    let opts = ReconOptions {
        mode: cfg.recon.mode,
        filter: cfg.recon.filter,
        support: Support::Mask(p.mask().clone()),
    };
    let r = reconstruct_mean_strain(&m.intensity, &m.moment1, p.lattice(), &opts)?;
    let zero = p.lattice().zeros();
    let metrics = interior_metrics(&r, &zero, cfg.recon.erosion)?;
    Ok((metrics.max_abs, threshold))
}

fn parallax_immunity(cfg: &RunConfig) -> Result<(Status, String)> {
    let geom = cfg.scan_geometry()?;
    let shape = make_shape(&cfg.shape(), cfg.lattice())?;
    let (max_abs, threshold) = immunity_residual(&shape, &geom, cfg)?;
    let ok = max_abs < threshold;
    let mut detail = format!("interior max {max_abs:.2e} rad, threshold {threshold:.2e} rad");
    if !geom.is_full_turn() {
        // a half turn leaves the odd part of the parallax unbalanced
        detail.push_str(" (span below 360 deg)");
        return Ok((if ok { Status::Pass } else { Status::ExpectedFail }, detail));
    }
    // the same pipeline over a half turn must break on an off-axis sample
    let l = cfg.lattice();
    let size = 2.0 * l.half_width().min(l.half_height());
    let off_axis = make_shape(
        &Shape::Disk {
            radius: 0.25 * size,
            center: (0.2 * size, 0.1 * size),
        },
        l,
    )?;
    let half = geom.with_uniform_angles(geom.n_angles(), std::f64::consts::PI)?;
    let (counter, counter_threshold) = immunity_residual(&off_axis, &half, cfg)?;
    let counter_ok = counter >= counter_threshold;
    detail.push_str(&format!(
        "; 180 deg off-axis counter-check {counter:.2e} vs {counter_threshold:.2e} ({})",
        if counter_ok {
            "violates as expected"
        } else {
            "did not violate"
        }
    ));
    Ok((verdict(ok && counter_ok), detail))
}

/// Configured sample with the configured peen parameters, scaled against parallax.
fn peened(cfg: &RunConfig, lattice: Lattice, geom: &ScanGeometry) -> Result<PhantomSlice> {
    let shape = match cfg.shape() {
        Shape::MaskFile(_) if lattice != cfg.lattice() => Shape::Disk {
            radius: 0.4 * 2.0 * lattice.half_width().min(lattice.half_height()),
            center: (0.0, 0.0),
        },
        s => s,
    };
    let p = phantom::apply_strain_preset(&make_shape(&shape, lattice)?, &StrainPreset::Peen(cfg.peen()))?;
    let ratio = cfg.phantom.strain_to_parallax_ratio.unwrap_or(10.0);
    Ok(p.scale_strain_to_parallax(ratio, geom))
}

fn peen_sign_structure(cfg: &RunConfig) -> Result<(Status, String)> {
    let geom = cfg.scan_geometry()?;
    let p = peened(cfg, cfg.lattice(), &geom)?;
    let m = moment_sinograms(&p, &geom, MomentOptions::default())?;
    let opts = ReconOptions {
        mode: cfg.recon.mode,
        filter: cfg.recon.filter,
        support: Support::Mask(p.mask().clone()),
    };
    let r = reconstruct_mean_strain(&m.intensity, &m.moment1, p.lattice(), &opts)?;
    let (status, detail) = sign_structure(&p, &cfg.peen().sides, 3.0 * cfg.phantom.peen_depth_mm, &r.values);
    Ok((status, detail))
}

/// Edge bands at the treated sides must average below zero and the bulk above.
pub fn sign_structure(
    p: &PhantomSlice,
    sides: &[phantom::Side],
    margin: f64,
    values: &Array2<f64>,
) -> (Status, String) {
    let zero = Array2::zeros(values.dim());
    let mut ok = true;
    let mut parts = Vec::new();
    for &side in sides {
        let band = edge_band(p, side, tol::EDGE_BAND);
        match metrics_over(values, &zero, &band) {
            Some(m) => {
                ok &= m.mean < 0.0;
                parts.push(format!("{side} {:.2e}", m.mean));
            }
            None => {
                ok = false;
                parts.push(format!("{side} empty"));
            }
        }
    }
    match metrics_over(values, &zero, &interior_region(p, sides, margin)) {
        Some(m) => {
            ok &= m.mean > 0.0;
            parts.push(format!("interior {:.2e}", m.mean));
        }
        None => {
            ok = false;
            parts.push("interior empty".into());
        }
    }
    (verdict(ok), format!("band means {}", parts.join(", ")))
}

fn max_abs_diff_valid(a: &Sinogram, b: &Sinogram) -> f64 {
    a.values()
        .iter()
        .zip(b.values())
        .zip(b.valid())
        .filter(|(_, &ok)| ok)
        .fold(0.0, |m, ((x, y), _)| m.max((x - y).abs()))
}

fn additivity_and_correction(cfg: &RunConfig) -> Result<(Status, String)> {
    let geom = cfg.scan_geometry()?;
    let p = match cfg.phantom.strain {
        super::config::StrainKind::None => peened(cfg, cfg.lattice(), &geom)?,
        _ => cfg.build_phantom()?,
    };
    let both = moment_sinograms(&p, &geom, MomentOptions::default())?;
    let par = moment_sinograms(&p, &geom, MomentOptions::parallax_only())?;
    let strain = moment_sinograms(&p, &geom, MomentOptions::strain_only())?;

    let (raw_both, raw_par, raw_strain) = (both.moment1_raw(), par.moment1_raw(), strain.moment1_raw());
    let residual = raw_both.values() - raw_par.values() - raw_strain.values();
    let scale = raw_both.max_abs_valid().max(f64::MIN_POSITIVE);
    let additivity = residual.iter().fold(0.0f64, |m, v| m.max(v.abs())) / scale;

    let z = geom.det_distance() * cfg.verify.correction_z_scale;
    let corrected = correct_parallax(&both.intensity, &both.moment1, &geom.with_det_distance(z)?)?;
    let correction =
        max_abs_diff_valid(&corrected, &strain.moment1) / strain.moment1.max_abs_valid().max(f64::MIN_POSITIVE);

    let ok = additivity < tol::ADDITIVITY && correction < tol::ADDITIVITY;
    let mut detail = format!("additivity {additivity:.2e}, correction {correction:.2e} (relative)");
    if cfg.verify.correction_z_scale != 1.0 {
        detail.push_str(&format!(", correction z scaled by {}", cfg.verify.correction_z_scale));
    }
    Ok((verdict(ok), detail))
}

fn oracle_equivalence(cfg: &RunConfig) -> Result<(Status, String)> {
    let base = cfg.scan_geometry()?;
    let full = cfg.lattice();
    let n = cfg.verify.oracle_grid;
    let pitch = 2.0 * full.half_width().max(full.half_height()) / n as f64;
    let lattice = Lattice::new(n, n, pitch);
    let geom = ScanGeometry::uniform(
        base.bragg_theta(),
        base.det_distance(),
        base.pixel_pitch(),
        n,
        pitch,
        cfg.verify.oracle_angles,
        base.rotation_span(),
    )?;
    let p = peened(cfg, lattice, &geom)?;
    let stack = simulate_curve_stack(&p, &geom, cfg.angle_grid()?, cfg.peak_width())?;
    let oracle = stack.moments()?;
    let opts = MomentOptions {
        parallax_path: ParallaxPath::PerVoxel,
        ..MomentOptions::default()
    };
    let shortcut = moment_sinograms(&p, &geom, opts)?;
    if oracle.moment1.valid() != shortcut.moment1.valid() {
        return Ok((Status::Fail, "valid masks differ".into()));
    }
    let worst = relative_discrepancy(&oracle.moment1, &shortcut.moment1)
        .iter()
        .fold(0.0f64, |m, v| if v.is_finite() { m.max(*v) } else { m });
    Ok((
        verdict(worst < tol::ORACLE),
        format!(
            "{n}x{n}, {} angles: max per-bin relative {worst:.2e} over {} valid bins",
            geom.n_angles(),
            shortcut.moment1.n_valid()
        ),
    ))
}

/// `|a - b| / |b|` per valid bin (`|a - b|` where `b` is exactly zero), NaN elsewhere.
pub fn relative_discrepancy(a: &Sinogram, b: &Sinogram) -> Array2<f64> {
    let mut out = Array2::from_elem(b.dim(), f64::NAN);
    ndarray::Zip::from(&mut out)
        .and(a.values())
        .and(b.values())
        .and(b.valid())
        .for_each(|o, &x, &y, &ok| {
            if ok {
                let d = (x - y).abs();
                *o = if y != 0.0 { d / y.abs() } else { d };
            }
        });
    out
}

fn fbp_round_trip(cfg: &RunConfig) -> Result<(Status, String)> {
    let lattice = cfg.lattice();
    let geom = cfg.scan_geometry()?;
    let size = 2.0 * lattice.half_width().min(lattice.half_height());
    let disk = make_shape(
        &Shape::Disk {
            radius: 0.35 * size,
            center: (0.0, 0.0),
        },
        lattice,
    )?;
    let s = Sinogram::intensity(radon(disk.m0(), &lattice, &geom)?, &geom)?;
    let r = fbp(&s, &lattice, cfg.recon.filter)?;
    let m = metrics_over(&r.values, disk.m0(), &erode(disk.mask(), cfg.recon.erosion)).ok_or(
        crate::error::Error::EmptyInterior {
            erosion: cfg.recon.erosion,
        },
    )?;
    let rmse = m.rmse;

    let (nx, ny) = (lattice.nx, lattice.ny);
    let (ii, jj) = (nx / 2 + nx / 7, ny / 2 - ny / 11);
    let mut impulse = lattice.zeros();
    impulse[[jj, ii]] = 1.0;
    let s = Sinogram::intensity(radon(&impulse, &lattice, &geom)?, &geom)?;
    let r = fbp(&s, &lattice, cfg.recon.filter)?;
    let (mut best, mut at) = (f64::NEG_INFINITY, (0, 0));
    for ((j, i), &v) in r.values.indexed_iter() {
        if v > best {
            best = v;
            at = (j, i);
        }
    }
    let offset = (at.0 as i64 - jj as i64).abs().max((at.1 as i64 - ii as i64).abs());
    Ok((
        verdict(rmse < tol::FBP_RMSE && offset <= 1),
        format!(
            "disk interior rmse {:.2}% of plateau, impulse peak off by {offset} voxel(s)",
            100.0 * rmse
        ),
    ))
}
