//! Filtered back-projection, mean-strain reconstruction and parallax correction.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::forward::{raw_product, Sinogram, SinogramKind};
use crate::geometry::ScanGeometry;
use crate::lattice::{erode, Lattice};

/// Relative tolerance on angle and offset spacing.
const SPACING_TOL: f64 = 1e-9;
/// Default fraction of the peak intensity reconstruction that defines the support.
pub const DEFAULT_SUPPORT_FRACTION: f64 = 0.5;
/// Denominators at or below this fraction of their maximum are not divided by.
pub const DIVISION_FLOOR: f64 = 1e-6;
/// Default erosion (voxels) when quoting interior metrics.
pub const DEFAULT_EROSION: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RampFilter {
    /// Plain Ram-Lak ramp.
    #[default]
    Ramp,
    /// Ramp apodized by `cos(pi f / (2 f_nyquist))`.
    Cosine,
}

impl FromStr for RampFilter {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "ramp" => Ok(RampFilter::Ramp),
            "cosine" => Ok(RampFilter::Cosine),
            other => Err(format!("unknown filter `{other}` (ramp|cosine)")),
        }
    }
}

impl fmt::Display for RampFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RampFilter::Ramp => "ramp",
            RampFilter::Cosine => "cosine",
        })
    }
}

/// How a normalized first-moment sinogram is turned into a per-voxel mean offset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StrainMode {
    /// Back-project the normalized moments directly; normalized by the
    /// back-projection of the valid-bin indicator.
    #[default]
    Simple,
    /// `fbp(M0 * M1bar) / fbp(M0)`, exact for inhomogeneous intensity.
    Weighted,
}

impl FromStr for StrainMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "simple" => Ok(StrainMode::Simple),
            "weighted" => Ok(StrainMode::Weighted),
            other => Err(format!("unknown mode `{other}` (simple|weighted)")),
        }
    }
}

impl fmt::Display for StrainMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StrainMode::Simple => "simple",
            StrainMode::Weighted => "weighted",
        })
    }
}

/// Where a reconstruction came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub kind: SinogramKind,
    pub filter: RampFilter,
    pub angle_span: f64,
    pub mode: Option<StrainMode>,
    /// Invalid sinogram bins replaced by zero before filtering.
    pub zero_filled_bins: usize,
}

/// Reconstructed scalar field on the voxel lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconGrid {
    pub lattice: Lattice,
    pub values: Array2<f64>,
    pub valid: Array2<bool>,
    pub provenance: Provenance,
}

fn uniform_step(values: &[f64]) -> Option<f64> {
    if values.len() < 2 {
        return None;
    }
    let step = values[1] - values[0];
    if !(step > 0.0) {
        return None;
    }
    values
        .windows(2)
        .all(|w| ((w[1] - w[0]) - step).abs() <= SPACING_TOL * step.max(1.0))
        .then_some(step)
}

/// Spatial Ram-Lak kernel transformed to the frequency domain, length `n_fft`.
fn ramp_response(n_fft: usize, dt: f64, filter: RampFilter) -> Vec<Complex64> {
    let mut kernel = vec![Complex64::new(0.0, 0.0); n_fft];
    kernel[0].re = 1.0 / (4.0 * dt * dt);
    for n in (1..n_fft / 2).step_by(2) {
        let v = -1.0 / (PI * PI * (n * n) as f64 * dt * dt);
        kernel[n].re = v;
        kernel[n_fft - n].re = v;
    }
    FftPlanner::new().plan_fft_forward(n_fft).process(&mut kernel);
    if filter == RampFilter::Cosine {
        for (k, h) in kernel.iter_mut().enumerate() {
            let nu = k.min(n_fft - k) as f64 / n_fft as f64;
            *h *= (PI * nu).cos();
        }
    }
    kernel
}

/// Ramp-filters every projection (column) of `values`. Returns the filtered
/// columns, one `Vec` per angle.
fn filter_projections(values: &Array2<f64>, dt: f64, filter: RampFilter) -> Vec<Vec<f64>> {
    let (n_t, n_phi) = values.dim();
    let n_fft = 2 * n_t.next_power_of_two();
    let response = ramp_response(n_fft, dt, filter);
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n_fft);
    let inv = planner.plan_fft_inverse(n_fft);
    let scale = dt / n_fft as f64;
    (0..n_phi)
        .into_par_iter()
        .map(|k| {
            let mut buf = vec![Complex64::new(0.0, 0.0); n_fft];
            for (b, &v) in buf.iter_mut().zip(values.column(k)) {
                b.re = v;
            }
            fwd.process(&mut buf);
            for (b, h) in buf.iter_mut().zip(&response) {
                *b *= h;
            }
            inv.process(&mut buf);
            buf[..n_t].iter().map(|c| c.re * scale).collect()
        })
        .collect()
}

/// Back-projects filtered projections onto the lattice, `pi / N` times the sum
/// over angles. Parallel over rows; each voxel accumulates in angle order.
fn back_project(filtered: &[Vec<f64>], t0: f64, dt: f64, angles: &[f64], lattice: &Lattice) -> Array2<f64> {
    let trig: Vec<(f64, f64)> = angles.iter().map(|a| a.sin_cos()).collect();
    let n_t = filtered.first().map_or(0, Vec::len);
    let weight = PI / angles.len() as f64;
    let rows: Vec<Vec<f64>> = (0..lattice.ny)
        .into_par_iter()
        .map(|j| {
            let y = lattice.y(j);
            (0..lattice.nx)
                .map(|i| {
                    let x = lattice.x(i);
                    let mut acc = 0.0;
                    for (q, &(s, c)) in filtered.iter().zip(&trig) {
                        let pos = (x * c + y * s - t0) / dt;
                        let k0 = pos.floor();
                        if k0 < -1.0 || k0 >= n_t as f64 {
                            continue;
                        }
                        let frac = pos - k0;
                        let k0 = k0 as isize;
                        if k0 >= 0 {
                            acc += (1.0 - frac) * q[k0 as usize];
                        }
                        if k0 + 1 < n_t as isize {
                            acc += frac * q[(k0 + 1) as usize];
                        }
                    }
                    acc * weight
                })
                .collect()
        })
        .collect();
    Array2::from_shape_fn(lattice.shape(), |(j, i)| rows[j][i])
}

/// Values with invalid bins replaced by zero, and how many were replaced.
fn zero_filled(s: &Sinogram) -> (Array2<f64>, usize) {
    let mut v = s.values().clone();
    let mut n = 0;
    v.zip_mut_with(s.valid(), |x, &ok| {
        if !ok {
            if *x != 0.0 {
                n += 1;
            }
            *x = 0.0;
        }
    });
    (v, n)
}

fn fbp_values(values: &Array2<f64>, s: &Sinogram, lattice: &Lattice, filter: RampFilter) -> Result<Array2<f64>> {
    let angles = s.angles();
    uniform_step(angles).ok_or(Error::NonUniformAngles)?;
    let t = s.t_offsets();
    let dt = uniform_step(t)
        .ok_or_else(|| Error::GeometryMismatch("lateral offsets must be uniform with at least two samples".into()))?;
    let filtered = filter_projections(values, dt, filter);
    Ok(back_project(&filtered, t[0], dt, angles, lattice))
}

fn angle_span(s: &Sinogram) -> f64 {
    let a = s.angles();
    match uniform_step(a) {
        Some(step) => step * a.len() as f64,
        None => 0.0,
    }
}

/// Filtered back-projection of `s` onto `lattice` (invalid bins zero-filled).
///
/// Scaled so that the reconstruction of a line-integral sinogram returns the
/// integrand: a homogeneous disk of intensity `m0` comes back as `m0`.
pub fn fbp(s: &Sinogram, lattice: &Lattice, filter: RampFilter) -> Result<ReconGrid> {
    let (values, zero_filled_bins) = zero_filled(s);
    let out = fbp_values(&values, s, lattice, filter)?;
    Ok(ReconGrid {
        lattice: *lattice,
        values: out,
        valid: Array2::from_elem(lattice.shape(), true),
        provenance: Provenance {
            kind: s.kind(),
            filter,
            angle_span: angle_span(s),
            mode: None,
            zero_filled_bins,
        },
    })
}

/// Support used for a mean-strain reconstruction.
#[derive(Debug, Clone, PartialEq)]
pub enum Support {
    /// Voxels whose intensity reconstruction exceeds this fraction of its maximum.
    Threshold(f64),
    /// Explicit `(ny, nx)` mask.
    Mask(Array2<bool>),
}

impl Default for Support {
    fn default() -> Self {
        Support::Threshold(DEFAULT_SUPPORT_FRACTION)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReconOptions {
    pub mode: StrainMode,
    pub filter: RampFilter,
    pub support: Support,
}

fn check_pair(m0: &Sinogram, m1: &Sinogram) -> Result<()> {
    if !m0.same_axes(m1) {
        return Err(Error::GeometryMismatch(
            "intensity and moment sinograms have different axes".into(),
        ));
    }
    if m0.valid() != m1.valid() {
        return Err(Error::MaskMismatch);
    }
    Ok(())
}

/// Per-voxel mean Bragg-angle offset from an intensity sinogram and a
/// normalized first-moment sinogram.
pub fn reconstruct_mean_strain(
    m0_sino: &Sinogram,
    m1_sino: &Sinogram,
    lattice: &Lattice,
    opts: &ReconOptions,
) -> Result<ReconGrid> {
    check_pair(m0_sino, m1_sino)?;
    let (m1_values, zero_filled_bins) = zero_filled(m1_sino);
    let (numerator, denominator) = match opts.mode {
        StrainMode::Simple => {
            let indicator = m1_sino.valid().mapv(|b| if b { 1.0 } else { 0.0 });
            (
                fbp_values(&m1_values, m1_sino, lattice, opts.filter)?,
                fbp_values(&indicator, m1_sino, lattice, opts.filter)?,
            )
        }
        StrainMode::Weighted => {
            let raw = raw_product(m0_sino, m1_sino);
            (
                fbp_values(raw.values(), &raw, lattice, opts.filter)?,
                fbp_values(&zero_filled(m0_sino).0, m0_sino, lattice, opts.filter)?,
            )
        }
    };
    let floor = DIVISION_FLOOR * denominator.iter().copied().fold(0.0, f64::max);
    let support = match &opts.support {
        Support::Mask(mask) => {
            if mask.dim() != lattice.shape() {
                return Err(Error::GeometryMismatch(format!(
                    "support mask is {:?}, lattice is {:?}",
                    mask.dim(),
                    lattice.shape()
                )));
            }
            if let Some(((j, i), _)) = mask
                .indexed_iter()
                .find(|&(ij, &inside)| inside && !(denominator[ij] > floor))
            {
                return Err(Error::DivisionFloor { i, j });
            }
            mask.clone()
        }
        Support::Threshold(fraction) => {
            let intensity = match opts.mode {
                StrainMode::Weighted => denominator.clone(),
                StrainMode::Simple => fbp_values(&zero_filled(m0_sino).0, m0_sino, lattice, opts.filter)?,
            };
            let cut = fraction * intensity.iter().copied().fold(0.0, f64::max);
            let mut mask = intensity.mapv(|v| v > cut && cut > 0.0);
            mask.zip_mut_with(&denominator, |m, &d| *m = *m && d > floor);
            mask
        }
    };
    let mut values = numerator;
    ndarray::Zip::from(&mut values)
        .and(&denominator)
        .and(&support)
        .for_each(|v, &d, &inside| *v = if inside { *v / d } else { 0.0 });
    Ok(ReconGrid {
        lattice: *lattice,
        values,
        valid: support,
        provenance: Provenance {
            kind: m1_sino.kind(),
            filter: opts.filter,
            angle_span: angle_span(m1_sino),
            mode: Some(opts.mode),
            zero_filled_bins,
        },
    })
}

/// Removes the parallax term `t tan(2 theta) / z` from every valid bin of a
/// normalized first-moment sinogram.
pub fn correct_parallax(m0_sino: &Sinogram, m1_sino: &Sinogram, geom: &ScanGeometry) -> Result<Sinogram> {
    check_pair(m0_sino, m1_sino)?;
    let t = m1_sino.t_offsets();
    let mut values = m1_sino.values().clone();
    ndarray::Zip::indexed(&mut values)
        .and(m1_sino.valid())
        .for_each(|(i, _), v, &ok| {
            if ok {
                *v -= geom.ray_parallax(t[i]);
            }
        });
    m1_sino.with_values(values)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InteriorMetrics {
    pub rmse: f64,
    pub max_abs: f64,
    pub mean: f64,
    pub count: usize,
}

/// Error statistics of `r - truth` over the valid region eroded by `erosion` voxels.
pub fn interior_metrics(r: &ReconGrid, truth: &Array2<f64>, erosion: usize) -> Result<InteriorMetrics> {
    if truth.dim() != r.values.dim() {
        return Err(Error::GeometryMismatch(format!(
            "truth is {:?}, reconstruction is {:?}",
            truth.dim(),
            r.values.dim()
        )));
    }
    metrics_over(&r.values, truth, &erode(&r.valid, erosion)).ok_or(Error::EmptyInterior { erosion })
}

/// Error statistics of `values - truth` over `region`; `None` if the region is empty.
pub fn metrics_over(values: &Array2<f64>, truth: &Array2<f64>, region: &Array2<bool>) -> Option<InteriorMetrics> {
    let mut n = 0usize;
    let (mut sum, mut sum_sq, mut max_abs) = (0.0, 0.0, 0.0f64);
    for ((v, t), &inside) in values.iter().zip(truth).zip(region) {
        if inside {
            let d = v - t;
            n += 1;
            sum += d;
            sum_sq += d * d;
            max_abs = max_abs.max(d.abs());
        }
    }
    (n > 0).then(|| InteriorMetrics {
        rmse: (sum_sq / n as f64).sqrt(),
        max_abs,
        mean: sum / n as f64,
        count: n,
    })
}

/// Pearson correlation of `a` and `b` over the samples where `mask` is true.
pub fn pearson(a: &[f64], b: &[f64], mask: Option<&[bool]>) -> Result<f64> {
    assert_eq!(a.len(), b.len(), "correlation inputs differ in length");
    let keep = |k: usize| mask.is_none_or(|m| m[k]);
    let idx: Vec<usize> = (0..a.len()).filter(|&k| keep(k)).collect();
    if idx.len() < 2 {
        return Err(Error::TooFewSamples(idx.len()));
    }
    let n = idx.len() as f64;
    let mean_a = idx.iter().map(|&k| a[k]).sum::<f64>() / n;
    let mean_b = idx.iter().map(|&k| b[k]).sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for &k in &idx {
        let da = a[k] - mean_a;
        let db = b[k] - mean_b;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok(sab / (saa.sqrt() * sbb.sqrt()))
}
