//! How far does the diffraction spot move when the scattering voxel is off
//! the rotation axis? Prints the lateral shift for a few offsets and the
//! per-voxel parallax map at three rotation angles.

use parallax_dxt::geometry::{rad, ScanGeometry};
use parallax_dxt::phantom::{make_shape, Shape};
use parallax_dxt::Lattice;

fn main() -> parallax_dxt::Result<()> {
    // 68 keV, Fe(211)-like reflection, 0.8 m to a 150 um pixel detector
    let geom = ScanGeometry::uniform(rad(6.839), 800.0, 0.15, 200, 0.005, 200, rad(360.0))?;

    println!("offset_mm  shift_mm   shift_mrad  shift_px");
    for dx in [0.05, 0.1, 0.25, 0.5, 1.0] {
        let mm = geom.lateral_parallax(dx);
        println!(
            "{dx:>9.2}  {mm:>8.5}  {:>10.4}  {:>8.3}",
            geom.mm_to_angle(mm) * 1e3,
            geom.mm_to_pixels(mm)
        );
    }

    let sample = make_shape(
        &Shape::Rect {
            width: 1.0,
            height: 1.0,
            center: (0.0, 0.0),
        },
        Lattice::new(200, 200, 0.005),
    )?;
    for phi in [0.0, 20.0, 90.0] {
        let px = sample.parallax_field(rad(phi), &geom).mapv(|v| geom.angle_to_pixels(v));
        let (lo, hi) = px.iter().fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
        println!("phi = {phi:>4} deg: parallax spans {lo:+.3} .. {hi:+.3} px");
    }
    Ok(())
}
