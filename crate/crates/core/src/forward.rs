//! Forward projection of phantoms into sinograms.
//!
//! Line integrals are evaluated the way an image-rotation projector does it:
//! the lattice is resampled with bilinear interpolation on a grid rotated by
//! `phi` whose columns sit at the scan's lateral offsets `t`, and each column is
//! summed. Rows of the rotated grid are spaced one voxel pitch apart and cover
//! the whole lattice diagonal.
//!
//! Moment sinograms use the additivity of raw first moments: the
//! intensity-weighted centroid of every detected curve is the line integral of
//! `m0 * (parallax + strain)` divided by the line integral of `m0`. Because the
//! parallax of every point on a ray equals `t tan(2 theta) / z`, the parallax
//! part of the numerator is available in closed form; the per-voxel
//! accumulation is kept as [`ParallaxPath::PerVoxel`] for cross-checks.
//! [`CurveStack`] skips the shortcut entirely and sums full diffraction curves.

use std::f64::consts::TAU;

use ndarray::Array2;
use rayon::prelude::*;

use crate::curves::{self, AngleGrid, DiffractionCurve};
use crate::error::{Error, Result};
use crate::geometry::ScanGeometry;
use crate::lattice::Lattice;
use crate::phantom::PhantomSlice;

/// Bins whose intensity line integral does not exceed this fraction of the
/// sinogram maximum are treated as missing the sample.
pub const DEGENERACY_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SinogramKind {
    Intensity,
    Moment1Raw,
    Moment1Norm,
}

impl SinogramKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SinogramKind::Intensity => "intensity",
            SinogramKind::Moment1Raw => "moment1_raw",
            SinogramKind::Moment1Norm => "moment1_norm",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "intensity" => Some(SinogramKind::Intensity),
            "moment1_raw" => Some(SinogramKind::Moment1Raw),
            "moment1_norm" => Some(SinogramKind::Moment1Norm),
            _ => None,
        }
    }
}

/// Projections indexed `[t_index, phi_index]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram {
    values: Array2<f64>,
    kind: SinogramKind,
    t_offsets: Vec<f64>,
    angles: Vec<f64>,
    valid: Array2<bool>,
}

impl Sinogram {
    pub fn new(
        values: Array2<f64>,
        kind: SinogramKind,
        t_offsets: Vec<f64>,
        angles: Vec<f64>,
        valid: Array2<bool>,
    ) -> Result<Self> {
        let shape = (t_offsets.len(), angles.len());
        if values.dim() != shape || valid.dim() != shape {
            return Err(Error::GeometryMismatch(format!(
                "sinogram arrays {:?}/{:?} do not match axes {:?}",
                values.dim(),
                valid.dim(),
                shape
            )));
        }
        Ok(Sinogram {
            values,
            kind,
            t_offsets,
            angles,
            valid,
        })
    }

    /// All-valid intensity sinogram on the geometry's axes, validity derived from
    /// the degeneracy floor.
    pub fn intensity(values: Array2<f64>, geom: &ScanGeometry) -> Result<Self> {
        let valid = validity(&values);
        Self::new(
            values,
            SinogramKind::Intensity,
            geom.t_offsets(),
            geom.rotation_angles().to_vec(),
            valid,
        )
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn kind(&self) -> SinogramKind {
        self.kind
    }

    pub fn t_offsets(&self) -> &[f64] {
        &self.t_offsets
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn valid(&self) -> &Array2<bool> {
        &self.valid
    }

    pub fn n_valid(&self) -> usize {
        self.valid.iter().filter(|&&b| b).count()
    }

    pub fn dim(&self) -> (usize, usize) {
        self.values.dim()
    }

    /// Same axes, validity and kind with new values.
    pub fn with_values(&self, values: Array2<f64>) -> Result<Self> {
        Self::new(
            values,
            self.kind,
            self.t_offsets.clone(),
            self.angles.clone(),
            self.valid.clone(),
        )
    }

    pub fn with_kind(mut self, kind: SinogramKind) -> Self {
        self.kind = kind;
        self
    }

    /// Largest absolute value over valid bins.
    pub fn max_abs_valid(&self) -> f64 {
        self.values
            .iter()
            .zip(&self.valid)
            .filter(|(_, &ok)| ok)
            .fold(0.0, |m, (v, _)| m.max(v.abs()))
    }

    pub(crate) fn same_axes(&self, other: &Sinogram) -> bool {
        self.t_offsets == other.t_offsets && self.angles == other.angles
    }
}

fn validity(intensity: &Array2<f64>) -> Array2<bool> {
    let floor = DEGENERACY_FLOOR * intensity.iter().copied().fold(0.0, f64::max);
    intensity.mapv(|v| v > floor)
}

/// Calls `f(flat_voxel_index, weight_mm)` for every bilinear contribution to
/// the line integral along the ray `(t, phi)`. Summing `weight * field` gives
/// the projection; weights along a ray add up to its chord length.
#[inline]
pub(crate) fn for_each_ray_weight(
    lattice: &Lattice,
    t: f64,
    cos_phi: f64,
    sin_phi: f64,
    mut f: impl FnMut(usize, f64),
) {
    let pitch = lattice.pitch;
    let n_rows = (2.0 * lattice.half_diagonal() / pitch).ceil() as usize + 2;
    let centre = (n_rows as f64 - 1.0) / 2.0;
    // ray point p(s) = t (c, s) + s (-s, c), in continuous index space
    let (u0, v0) = lattice.to_index(t * cos_phi, t * sin_phi);
    let du = -sin_phi;
    let dv = cos_phi;
    for r in 0..n_rows {
        let k = r as f64 - centre;
        lattice.for_each_bilinear(u0 + k * du, v0 + k * dv, |idx, w| f(idx, w * pitch));
    }
}

fn check_field(field: &Array2<f64>, lattice: &Lattice) -> Result<()> {
    if field.dim() != lattice.shape() {
        return Err(Error::GeometryMismatch(format!(
            "field is {:?}, lattice is {:?}",
            field.dim(),
            lattice.shape()
        )));
    }
    Ok(())
}

fn project_one(field: &[f64], lattice: &Lattice, t_offsets: &[f64], phi: f64) -> Vec<f64> {
    let (s, c) = phi.sin_cos();
    t_offsets
        .iter()
        .map(|&t| {
            let mut acc = 0.0;
            for_each_ray_weight(lattice, t, c, s, |k, w| acc += w * field[k]);
            acc
        })
        .collect()
}

fn assemble(columns: Vec<Vec<f64>>, n_t: usize) -> Array2<f64> {
    let n_phi = columns.len();
    Array2::from_shape_fn((n_t, n_phi), |(i, k)| columns[k][i])
}

/// Line integrals (mm times field units) of `field` along every ray of `geom`.
pub fn radon(field: &Array2<f64>, lattice: &Lattice, geom: &ScanGeometry) -> Result<Array2<f64>> {
    check_field(field, lattice)?;
    let data = field.as_standard_layout();
    let data = data.as_slice().expect("standard layout");
    let t = geom.t_offsets();
    let columns: Vec<Vec<f64>> = geom
        .rotation_angles()
        .par_iter()
        .map(|&phi| project_one(data, lattice, &t, phi))
        .collect();
    Ok(assemble(columns, t.len()))
}

/// Projection of a single angle, for tests and the rotation cross-check.
pub fn project_at(field: &Array2<f64>, lattice: &Lattice, t_offsets: &[f64], phi: f64) -> Result<Vec<f64>> {
    check_field(field, lattice)?;
    let data = field.as_standard_layout();
    Ok(project_one(
        data.as_slice().expect("standard layout"),
        lattice,
        t_offsets,
        phi,
    ))
}

/// Path length of every ray inside the sample support.
pub fn pathlength_sinogram(p: &PhantomSlice, geom: &ScanGeometry) -> Result<Sinogram> {
    let values = radon(&p.mask_f64(), p.lattice(), geom)?;
    Sinogram::intensity(values, geom)
}

/// How the parallax term of the first-moment numerator is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ParallaxPath {
    /// `t tan(2 theta) / z` times the intensity line integral.
    #[default]
    ClosedForm,
    /// Projection of the per-voxel field `m0 * parallax(phi)`, recomputed for every angle.
    PerVoxel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MomentOptions {
    pub parallax: bool,
    pub strain: bool,
    pub parallax_path: ParallaxPath,
}

impl Default for MomentOptions {
    fn default() -> Self {
        MomentOptions {
            parallax: true,
            strain: true,
            parallax_path: ParallaxPath::ClosedForm,
        }
    }
}

impl MomentOptions {
    pub fn parallax_only() -> Self {
        MomentOptions {
            parallax: true,
            strain: false,
            ..Default::default()
        }
    }

    pub fn strain_only() -> Self {
        MomentOptions {
            parallax: false,
            strain: true,
            ..Default::default()
        }
    }
}

/// Intensity (zeroth-moment) and normalized first-moment sinograms of a scan.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSinograms {
    pub intensity: Sinogram,
    pub moment1: Sinogram,
}

impl MomentSinograms {
    /// `M0 * M1bar`, the raw first-moment sinogram. Zero on invalid bins.
    pub fn moment1_raw(&self) -> Sinogram {
        raw_product(&self.intensity, &self.moment1)
    }
}

pub(crate) fn raw_product(intensity: &Sinogram, moment1: &Sinogram) -> Sinogram {
    let mut values = intensity.values() * moment1.values();
    values.zip_mut_with(moment1.valid(), |v, &ok| {
        if !ok {
            *v = 0.0
        }
    });
    Sinogram {
        values,
        kind: SinogramKind::Moment1Raw,
        t_offsets: moment1.t_offsets.clone(),
        angles: moment1.angles.clone(),
        valid: moment1.valid.clone(),
    }
}

/// Intensity and normalized first-moment sinograms of `p`, with the parallax
/// and strain contributions switched on or off independently.
pub fn moment_sinograms(p: &PhantomSlice, geom: &ScanGeometry, opts: MomentOptions) -> Result<MomentSinograms> {
    let lattice = p.lattice();
    let t = geom.t_offsets();
    let r0 = radon(p.m0(), lattice, geom)?;
    let intensity = Sinogram::intensity(r0, geom)?;
    let r0 = intensity.values();

    let mut numerator = Array2::<f64>::zeros(r0.dim());
    if opts.strain {
        let weighted = p.m0() * p.strain_offset();
        numerator += &radon(&weighted, lattice, geom)?;
    }
    if opts.parallax {
        match opts.parallax_path {
            ParallaxPath::ClosedForm => {
                let slope = geom.parallax_slope();
                ndarray::Zip::indexed(&mut numerator)
                    .and(r0)
                    .for_each(|(i, _), n, &m| *n += slope * t[i] * m);
            }
            ParallaxPath::PerVoxel => {
                let columns: Vec<Vec<f64>> = geom
                    .rotation_angles()
                    .par_iter()
                    .map(|&phi| {
                        let field = p.m0() * &p.parallax_field(phi, geom);
                        let data = field.as_slice().expect("standard layout");
                        project_one(data, lattice, &t, phi)
                    })
                    .collect();
                numerator += &assemble(columns, t.len());
            }
        }
    }

    let valid = intensity.valid().clone();
    let mut m1 = numerator;
    ndarray::Zip::from(&mut m1)
        .and(r0)
        .and(&valid)
        .for_each(|n, &m, &ok| *n = if ok { *n / m } else { 0.0 });
    let moment1 = Sinogram::new(m1, SinogramKind::Moment1Norm, t, geom.rotation_angles().to_vec(), valid)?;
    Ok(MomentSinograms { intensity, moment1 })
}

/// Normalized first-moment sinogram produced by parallax alone in a
/// homogeneously diffracting sample (ratio of the projected parallax to the
/// path length). Non-homogeneous phantoms are homogenized with a warning.
pub fn parallax_sinogram(p: &PhantomSlice, geom: &ScanGeometry) -> Result<Sinogram> {
    let owned;
    let p = if p.is_homogeneous() {
        p
    } else {
        log::warn!("parallax sinogram requested for a non-homogeneous phantom; using its support");
        owned = p.homogenized();
        &owned
    };
    Ok(moment_sinograms(p, geom, MomentOptions::parallax_only())?.moment1)
}

/// Fully resolved detected curves `F(t, phi, dtheta)`: for every ray, the sum of
/// the local Gaussian curves of the voxels it crosses, each centred on the
/// voxel's local offset with integrated intensity `m0` times its ray weight.
///
/// Curves are generated on demand; [`CurveStack::moments`] reduces one
/// projection angle at a time.
#[derive(Debug, Clone)]
pub struct CurveStack<'a> {
    phantom: &'a PhantomSlice,
    geom: &'a ScanGeometry,
    grid: AngleGrid,
    peak_width: f64,
    t_offsets: Vec<f64>,
}

/// Validates the curve-stack preconditions and returns a lazy stack.
pub fn simulate_curve_stack<'a>(
    p: &'a PhantomSlice,
    geom: &'a ScanGeometry,
    grid: AngleGrid,
    peak_width: f64,
) -> Result<CurveStack<'a>> {
    if !(peak_width >= 3.0 * grid.step()) {
        return Err(Error::InvalidPeak(format!(
            "peak width {peak_width:e} rad is narrower than three grid steps ({:e} rad)",
            3.0 * grid.step()
        )));
    }
    let slope = geom.parallax_slope();
    let l = p.lattice();
    let mut worst: f64 = 0.0;
    for ((j, i), &inside) in p.mask().indexed_iter() {
        if inside {
            let r = l.x(i).hypot(l.y(j));
            worst = worst.max(r * slope + p.strain_offset()[[j, i]].abs());
        }
    }
    if !grid.contains_peak(worst, peak_width) {
        return Err(Error::TruncatedPeak {
            center: worst,
            width: peak_width,
            half_span: grid.half_span(),
        });
    }
    Ok(CurveStack {
        phantom: p,
        geom,
        grid,
        peak_width,
        t_offsets: geom.t_offsets(),
    })
}

impl CurveStack<'_> {
    pub fn grid(&self) -> &AngleGrid {
        &self.grid
    }

    pub fn dim(&self) -> (usize, usize) {
        (self.t_offsets.len(), self.geom.n_angles())
    }

    /// Detected curve at `(t_index, phi_index)`.
    pub fn curve(&self, t_index: usize, phi_index: usize) -> DiffractionCurve {
        let phi = self.geom.rotation_angles()[phi_index];
        let (s, c) = phi.sin_cos();
        self.curve_at(self.t_offsets[t_index], phi, c, s)
    }

    /// All curves of one projection angle, ordered by `t`.
    pub fn projection(&self, phi_index: usize) -> Vec<DiffractionCurve> {
        (0..self.t_offsets.len()).map(|k| self.curve(k, phi_index)).collect()
    }

    fn curve_at(&self, t: f64, phi: f64, c: f64, s: f64) -> DiffractionCurve {
        let p = self.phantom;
        let l = p.lattice();
        let mut weights: Vec<(usize, f64)> = Vec::new();
        for_each_ray_weight(l, t, c, s, |k, w| weights.push((k, w)));
        weights.sort_unstable_by_key(|&(k, _)| k);

        let m0 = p.m0().as_slice().expect("standard layout");
        let mask = p.mask().as_slice().expect("standard layout");
        let norm = 1.0 / (self.peak_width * TAU.sqrt());
        let mut curve = DiffractionCurve::zeros(self.grid.clone());
        let mut idx = 0;
        while idx < weights.len() {
            let k = weights[idx].0;
            let mut w = 0.0;
            while idx < weights.len() && weights[idx].0 == k {
                w += weights[idx].1;
                idx += 1;
            }
            if !mask[k] || m0[k] == 0.0 {
                continue;
            }
            let (j, i) = (k / l.nx, k % l.nx);
            let centre = p.local_offset(i, j, phi, self.geom).expect("mask checked above");
            curve.add_gaussian(centre, self.peak_width, m0[k] * w * norm);
        }
        curve
    }

    /// Zeroth and normalized first moments of every curve, streamed per angle.
    pub fn moments(&self) -> Result<MomentSinograms> {
        let n_t = self.t_offsets.len();
        let per_angle: Vec<(Vec<f64>, Vec<f64>)> = self
            .geom
            .rotation_angles()
            .par_iter()
            .map(|&phi| {
                let (s, c) = phi.sin_cos();
                let mut m0 = Vec::with_capacity(n_t);
                let mut m1 = Vec::with_capacity(n_t);
                for &t in &self.t_offsets {
                    let curve = self.curve_at(t, phi, c, s);
                    m0.push(curves::moment0(&curve));
                    m1.push(curves::moment1_raw(&curve));
                }
                (m0, m1)
            })
            .collect();
        let (m0_cols, m1_cols): (Vec<_>, Vec<_>) = per_angle.into_iter().unzip();
        let intensity = Sinogram::intensity(assemble(m0_cols, n_t), self.geom)?;
        let mut m1 = assemble(m1_cols, n_t);
        ndarray::Zip::from(&mut m1)
            .and(intensity.values())
            .and(intensity.valid())
            .for_each(|n, &m, &ok| *n = if ok { *n / m } else { 0.0 });
        let moment1 = intensity.with_values(m1)?.with_kind(SinogramKind::Moment1Norm);
        Ok(MomentSinograms { intensity, moment1 })
    }
}
