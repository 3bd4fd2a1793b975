//! First-moment sinogram of a homogeneous sample produced by parallax alone:
//! every detector column carries the same value at every rotation angle.

use parallax_dxt::forward::parallax_sinogram;
use parallax_dxt::geometry::{rad, ScanGeometry};
use parallax_dxt::phantom::{make_shape, Shape};
use parallax_dxt::Lattice;

fn main() -> parallax_dxt::Result<()> {
    let geom = ScanGeometry::uniform(rad(6.839), 800.0, 0.15, 200, 0.005, 200, rad(360.0))?;
    let sample = make_shape(
        &Shape::Rect {
            width: 1.0,
            height: 1.0,
            center: (0.0, 0.0),
        },
        Lattice::new(200, 200, 0.005),
    )?;
    let s = parallax_sinogram(&sample, &geom)?;
    let t = s.t_offsets();
    println!("      t_mm   mean_mrad   spread_over_phi   t*tan(2theta)/z");
    for i in (0..t.len()).step_by(25) {
        let row: Vec<f64> = s.values().row(i).iter().copied().collect();
        let mean = row.iter().sum::<f64>() / row.len() as f64;
        let spread = row.iter().fold(0.0f64, |m, v| m.max((v - mean).abs()));
        println!(
            "{:>10.4}  {:>10.5}  {:>16.2e}  {:>10.5}",
            t[i],
            mean * 1e3,
            spread,
            geom.ray_parallax(t[i]) * 1e3
        );
    }
    Ok(())
}
