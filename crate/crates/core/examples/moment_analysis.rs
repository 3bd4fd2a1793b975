//! Zeroth and first moments of rocking curves: a single shifted peak, and a
//! sum of two peaks where the raw moments add but the normalized ones do not.

use parallax_dxt::curves::{make_peak, moment0, moment1, moment1_raw, AngleGrid};

fn main() -> parallax_dxt::Result<()> {
    let grid = AngleGrid::default();
    let width = 5.0 * grid.step();

    let a = make_peak(&grid, 0.4e-3, width, 2.0)?;
    println!(
        "single peak at 0.4 mrad: M0 = {:.6}, M1 = {:.6} mrad",
        moment0(&a),
        moment1(&a)? * 1e3
    );

    let b = make_peak(&grid, -1.0e-3, width, 0.5)?;
    let sum = &a + &b;
    println!("two peaks (amplitudes 2.0 and 0.5):");
    println!(
        "  raw M1:  {:.4e} = {:.4e} + {:.4e}",
        moment1_raw(&sum),
        moment1_raw(&a),
        moment1_raw(&b)
    );
    println!(
        "  norm M1: {:.4} mrad, not {:.4} mrad",
        moment1(&sum)? * 1e3,
        (moment1(&a)? + moment1(&b)?) * 1e3
    );
    Ok(())
}
