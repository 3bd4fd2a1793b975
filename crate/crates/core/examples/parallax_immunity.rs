//! Reconstructs a parallax-only sinogram as if it were strain. Over a full
//! turn the result vanishes; over half a turn an off-axis sample does not.

use parallax_dxt::forward::{moment_sinograms, MomentOptions};
use parallax_dxt::geometry::{rad, ScanGeometry};
use parallax_dxt::phantom::{make_shape, Shape};
use parallax_dxt::recon::{interior_metrics, reconstruct_mean_strain, ReconOptions, Support};
use parallax_dxt::Lattice;

fn main() -> parallax_dxt::Result<()> {
    let lattice = Lattice::new(200, 200, 0.005);
    let sample = make_shape(
        &Shape::Disk {
            radius: 0.25,
            center: (0.2, 0.1),
        },
        lattice,
    )?;
    for span in [360.0, 180.0] {
        let geom = ScanGeometry::uniform(rad(6.839), 800.0, 0.15, 200, 0.005, 200, rad(span))?;
        let m = moment_sinograms(&sample, &geom, MomentOptions::parallax_only())?;
        let opts = ReconOptions {
            support: Support::Mask(sample.mask().clone()),
            ..ReconOptions::default()
        };
        let r = reconstruct_mean_strain(&m.intensity, &m.moment1, &lattice, &opts)?;
        let err = interior_metrics(&r, &lattice.zeros(), 2)?;
        println!(
            "span {span:>3} deg: largest parallax {:.3e} rad, reconstructed interior max {:.3e} rad",
            m.moment1.max_abs_valid(),
            err.max_abs
        );
    }
    Ok(())
}
