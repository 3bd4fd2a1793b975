//! Geometric parallax in angular-sensitive powder diffraction tomography.
//!
//! A pencil beam scanned across a rotating sample records one diffraction
//! curve per lateral offset `t` and rotation angle `phi`. Points off the
//! rotation axis diffract onto a displaced detector position, which appears as
//! a Bragg-angle shift. This crate models that shift, projects voxelized
//! strain phantoms into intensity and first-moment sinograms, reconstructs the
//! per-voxel mean offset by filtered back-projection, and removes the parallax
//! term from measured sinograms.
//!
//! * [`geometry`]: scan geometry and the closed-form parallax relations
//! * [`curves`]: sampled diffraction curves and their moments
//! * [`phantom`]: sample slices with intensity, strain offsets and support
//! * [`forward`]: Radon projection, moment sinograms and the curve-stack oracle
//! * [`recon`]: filtered back-projection, mean-strain reconstruction, correction
//! * [`cli`]: run configuration, raster files and the command implementations
//!
//! Lengths are millimetres and angles radians throughout the library.

// `!(x > 0.0)` is deliberate: it rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod curves;
pub mod error;
pub mod forward;
pub mod geometry;
pub mod lattice;
pub mod pgm;
pub mod phantom;
pub mod recon;

pub use error::{Error, Result};
pub use forward::{MomentOptions, MomentSinograms, ParallaxPath, Sinogram, SinogramKind};
pub use geometry::ScanGeometry;
pub use lattice::Lattice;
pub use phantom::{PhantomSlice, Shape, Side, StrainPreset};
pub use recon::{ReconGrid, ReconOptions, StrainMode};
