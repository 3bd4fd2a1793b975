//! Acceptance criteria, one PASS/FAIL line each. Runs without the libtest
//! harness so the lines always reach the output.

use std::f64::consts::{PI, TAU};
use std::process::ExitCode;
use std::time::Instant;

use ndarray::Array2;
use parallax_dxt::curves::AngleGrid;
use parallax_dxt::forward::{moment_sinograms, radon, simulate_curve_stack, MomentOptions, ParallaxPath, Sinogram};
use parallax_dxt::geometry::{rad, ScanGeometry};
use parallax_dxt::lattice::erode;
use parallax_dxt::phantom::{
    apply_strain_preset, edge_band, interior_region, make_shape, PhantomSlice, Shape, Side, StrainPreset,
};
use parallax_dxt::recon::{
    correct_parallax, fbp, interior_metrics, metrics_over, reconstruct_mean_strain, RampFilter, ReconOptions,
    StrainMode, Support,
};
use parallax_dxt::Lattice;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

const THETA_DEG: f64 = 6.839;
const Z_MM: f64 = 800.0;
const PIXEL_MM: f64 = 0.15;

type Outcome = Result<(bool, String), String>;
type Criterion = (&'static str, fn() -> Outcome);

fn geometry(n: usize, pitch: f64, n_angles: usize, span: f64) -> ScanGeometry {
    ScanGeometry::uniform(rad(THETA_DEG), Z_MM, PIXEL_MM, n, pitch, n_angles, span).unwrap()
}

fn square(n: usize) -> PhantomSlice {
    let pitch = 1.0 / n as f64;
    make_shape(
        &Shape::Rect {
            width: 1.0,
            height: 1.0,
            center: (0.0, 0.0),
        },
        Lattice::new(n, n, pitch),
    )
    .unwrap()
}

fn mask_support(p: &PhantomSlice, mode: StrainMode) -> ReconOptions {
    ReconOptions {
        mode,
        filter: RampFilter::Ramp,
        support: Support::Mask(p.mask().clone()),
    }
}

fn lateral_magnitude() -> Outcome {
    let geom = ScanGeometry::uniform(rad(7.0), 800.0, 0.15, 1, 1.0, 1, TAU).map_err(|e| e.to_string())?;
    let mm = geom.lateral_parallax(0.5);
    let mrad = geom.mm_to_angle(mm) * 1e3;
    let px = geom.mm_to_pixels(mm);
    let ok = (mrad - 0.16).abs() <= 0.005 && (px - 0.8).abs() <= 0.05;
    Ok((
        ok,
        format!("0.5 mm at 2theta=14deg, z=800mm: {mrad:.4} mrad (0.16 +- 0.005), {px:.3} px (0.8 +- 0.05)"),
    ))
}

fn mean_cancellation() -> Outcome {
    let mut rng = StdRng::seed_from_u64(2024);
    let points: Vec<(f64, f64)> = (0..100)
        .map(|_| (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    let mut worst = 0.0f64;
    for n in [4, 200, 360] {
        let geom = geometry(1, 1.0, n, TAU);
        for &(x, y) in &points {
            worst = worst.max(geom.mean_parallax(x, y).abs());
        }
    }
    Ok((worst < 1e-12, format!("max |mean parallax| {worst:.2e} rad (< 1e-12)")))
}

/// Interior max of a strain reconstruction of parallax-only data, and 1% of
/// the largest parallax first moment.
fn immunity(p: &PhantomSlice, geom: &ScanGeometry) -> Result<(f64, f64), String> {
    let m = moment_sinograms(p, geom, MomentOptions::parallax_only()).map_err(|e| e.to_string())?;
    let r = reconstruct_mean_strain(
        &m.intensity,
        &m.moment1,
        p.lattice(),
        &mask_support(p, StrainMode::Simple),
    )
    .map_err(|e| e.to_string())?;
    let e = interior_metrics(&r, &p.lattice().zeros(), 2).map_err(|e| e.to_string())?;
    Ok((e.max_abs, 0.01 * m.moment1.max_abs_valid()))
}

fn parallax_immunity() -> Outcome {
    let p = square(200);
    let (max_abs, threshold) = immunity(&p, &geometry(200, 0.005, 200, TAU))?;
    let off_axis = make_shape(
        &Shape::Disk {
            radius: 0.25,
            center: (0.2, 0.1),
        },
        *p.lattice(),
    )
    .map_err(|e| e.to_string())?;
    let (half, half_threshold) = immunity(&off_axis, &geometry(200, 0.005, 200, PI))?;
    Ok((
        max_abs < threshold && half > half_threshold,
        format!(
            "360deg interior max {max_abs:.2e} < {threshold:.2e} rad; 180deg off-axis {half:.2e} > {half_threshold:.2e} (must violate)"
        ),
    ))
}

fn peened(p: &PhantomSlice, geom: &ScanGeometry) -> PhantomSlice {
    apply_strain_preset(p, &StrainPreset::by_name("peen").unwrap())
        .unwrap()
        .scale_strain_to_parallax(10.0, geom)
}

fn sign_structure() -> Outcome {
    let geom = geometry(200, 0.005, 200, TAU);
    let p = peened(&square(200), &geom);
    let m = moment_sinograms(&p, &geom, MomentOptions::default()).map_err(|e| e.to_string())?;
    let zero = Array2::zeros(p.lattice().shape());
    let sides = [Side::Top, Side::Right, Side::Bottom];
    let mut ok = true;
    let mut detail = Vec::new();
    for mode in [StrainMode::Simple, StrainMode::Weighted] {
        let r = reconstruct_mean_strain(&m.intensity, &m.moment1, p.lattice(), &mask_support(&p, mode))
            .map_err(|e| e.to_string())?;
        let mut parts = Vec::new();
        for side in sides {
            let mean = metrics_over(&r.values, &zero, &edge_band(&p, side, 5))
                .ok_or("empty band")?
                .mean;
            ok &= mean < 0.0;
            parts.push(format!("{side} {mean:.1e}"));
        }
        let bulk = metrics_over(&r.values, &zero, &interior_region(&p, &sides, 0.3))
            .ok_or("empty interior")?
            .mean;
        ok &= bulk > 0.0;
        parts.push(format!("bulk {bulk:.1e}"));
        detail.push(format!("{mode}: {}", parts.join(" ")));
    }
    Ok((ok, detail.join("; ")))
}

fn max_abs(a: &Array2<f64>, valid: &Array2<bool>) -> f64 {
    a.iter()
        .zip(valid)
        .filter(|(_, &ok)| ok)
        .fold(0.0, |m, (v, _)| m.max(v.abs()))
}

fn additivity() -> Outcome {
    let geom = geometry(200, 0.005, 200, TAU);
    let p = peened(&square(200), &geom);
    let run = |o| moment_sinograms(&p, &geom, o).map_err(|e| e.to_string());
    let (both, par, strain) = (
        run(MomentOptions::default())?,
        run(MomentOptions::parallax_only())?,
        run(MomentOptions::strain_only())?,
    );
    let valid = both.moment1.valid();
    let residual = both.moment1_raw().values() - par.moment1_raw().values() - strain.moment1_raw().values();
    let additive = max_abs(&residual, valid) / max_abs(both.moment1_raw().values(), valid);
    let corrected = correct_parallax(&both.intensity, &both.moment1, &geom).map_err(|e| e.to_string())?;
    let diff = corrected.values() - strain.moment1.values();
    let correction = max_abs(&diff, valid) / max_abs(strain.moment1.values(), valid);
    Ok((
        additive < 1e-10 && correction < 1e-10,
        format!("additivity residual {additive:.2e}, corrected vs strain-only {correction:.2e} (relative, < 1e-10)"),
    ))
}

fn oracle() -> Outcome {
    let n = 64;
    let geom = geometry(n, 1.0 / n as f64, 64, TAU);
    let p = peened(&square(n), &geom);
    let grid = AngleGrid::default();
    let stack = simulate_curve_stack(&p, &geom, grid.clone(), 5.0 * grid.step()).map_err(|e| e.to_string())?;
    let curves = stack.moments().map_err(|e| e.to_string())?;
    let opts = MomentOptions {
        parallax_path: ParallaxPath::PerVoxel,
        ..MomentOptions::default()
    };
    let shortcut = moment_sinograms(&p, &geom, opts).map_err(|e| e.to_string())?;
    let same_mask = curves.moment1.valid() == shortcut.moment1.valid();
    let mut worst = 0.0f64;
    for ((a, b), &ok) in curves
        .moment1
        .values()
        .iter()
        .zip(shortcut.moment1.values())
        .zip(shortcut.moment1.valid())
    {
        if ok {
            worst = worst.max((a - b).abs() / b.abs().max(f64::MIN_POSITIVE));
        }
    }
    Ok((
        same_mask && worst < 1e-3,
        format!("64x64, 64 angles: max per-bin relative {worst:.2e} (< 1e-3), masks equal: {same_mask}"),
    ))
}

fn fbp_round_trip() -> Outcome {
    let lattice = Lattice::new(200, 200, 0.005);
    let geom = geometry(200, 0.005, 200, TAU);
    let disk = make_shape(
        &Shape::Disk {
            radius: 0.35,
            center: (0.0, 0.0),
        },
        lattice,
    )
    .map_err(|e| e.to_string())?;
    let project = |f: &Array2<f64>| -> Result<Array2<f64>, String> {
        let s = Sinogram::intensity(radon(f, &lattice, &geom).map_err(|e| e.to_string())?, &geom)
            .map_err(|e| e.to_string())?;
        Ok(fbp(&s, &lattice, RampFilter::Ramp).map_err(|e| e.to_string())?.values)
    };
    let r = project(disk.m0())?;
    let rmse = metrics_over(&r, disk.m0(), &erode(disk.mask(), 2))
        .ok_or("empty interior")?
        .rmse;

    let mut impulse = lattice.zeros();
    let (jj, ii) = (83, 131);
    impulse[[jj, ii]] = 1.0;
    let r = project(&impulse)?;
    let (at, _) = r.indexed_iter().fold(
        ((0, 0), f64::MIN),
        |best, (ix, &v)| if v > best.1 { (ix, v) } else { best },
    );
    let off = at.0.abs_diff(jj).max(at.1.abs_diff(ii));
    Ok((
        rmse < 0.02 && off <= 1,
        format!(
            "disk interior rmse {:.2}% of plateau (< 2%), impulse peak {off} voxel(s) off (<= 1)",
            100.0 * rmse
        ),
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 7] = [
        ("AC-1", lateral_magnitude),
        ("AC-2", mean_cancellation),
        ("AC-3", parallax_immunity),
        ("AC-4", sign_structure),
        ("AC-5", additivity),
        ("AC-6", oracle),
        ("AC-7", fbp_round_trip),
    ];
    let mut failed = 0;
    for (id, check) in criteria {
        let start = Instant::now();
        let (ok, detail) = check().unwrap_or_else(|e| (false, format!("error: {e}")));
        failed += usize::from(!ok);
        println!(
            "{id} {} [{:.1}s] {detail}",
            if ok { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    }
}
