//! Simulates every detected rocking curve of a small peened sample and checks
//! that their first moments match the moment-sinogram shortcut bin by bin.

use parallax_dxt::curves::{moment1, AngleGrid};
use parallax_dxt::forward::{moment_sinograms, simulate_curve_stack, MomentOptions, ParallaxPath};
use parallax_dxt::geometry::{rad, ScanGeometry};
use parallax_dxt::phantom::{apply_strain_preset, make_shape, Shape, StrainPreset};
use parallax_dxt::Lattice;

fn main() -> parallax_dxt::Result<()> {
    let n = 64;
    let pitch = 1.0 / n as f64;
    let geom = ScanGeometry::uniform(rad(6.839), 800.0, 0.15, n, pitch, 64, rad(360.0))?;
    let disk = make_shape(
        &Shape::Disk {
            radius: 0.4,
            center: (0.0, 0.0),
        },
        Lattice::new(n, n, pitch),
    )?;
    let sample = apply_strain_preset(&disk, &StrainPreset::by_name("peen")?)?.scale_strain_to_parallax(10.0, &geom);

    let grid = AngleGrid::default();
    let stack = simulate_curve_stack(&sample, &geom, grid.clone(), 5.0 * grid.step())?;
    let c = stack.curve(n / 2 + 10, 5);
    println!(
        "curve at t index {}, phi index 5: first moment {:.5} mrad",
        n / 2 + 10,
        moment1(&c)? * 1e3
    );

    let oracle = stack.moments()?;
    let shortcut = moment_sinograms(
        &sample,
        &geom,
        MomentOptions {
            parallax_path: ParallaxPath::PerVoxel,
            ..MomentOptions::default()
        },
    )?;
    let mut worst = 0.0f64;
    for ((a, b), &ok) in oracle
        .moment1
        .values()
        .iter()
        .zip(shortcut.moment1.values())
        .zip(shortcut.moment1.valid())
    {
        if ok && *b != 0.0 {
            worst = worst.max((a - b).abs() / b.abs());
        }
    }
    println!(
        "{} valid bins, max relative discrepancy {worst:.2e}",
        shortcut.moment1.n_valid()
    );
    Ok(())
}
