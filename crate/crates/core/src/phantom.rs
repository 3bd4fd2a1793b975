//! Voxelized sample slices: support mask, diffracted intensity and strain offsets.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use ndarray::{Array2, Axis};

use crate::error::{Error, Result};
use crate::geometry::ScanGeometry;
use crate::lattice::{rotate_field, Lattice};
use crate::pgm;

/// Default lattice: 200 x 200 voxels of 5 um, spanning a 1 mm sample.
pub const DEFAULT_GRID: usize = 200;
pub const DEFAULT_VOXEL_PITCH: f64 = 0.005;

/// A 2D slice orthogonal to the rotation axis.
///
/// Holds the per-voxel integrated intensity `m0`, the non-parallax Bragg-angle
/// offset (strain) in radians and the support mask. The rotation axis passes
/// through the centre of the lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct PhantomSlice {
    lattice: Lattice,
    m0: Array2<f64>,
    strain_offset: Array2<f64>,
    mask: Array2<bool>,
}

impl PhantomSlice {
    /// Checked constructor. Arrays have shape `(ny, nx)`.
    pub fn new(lattice: Lattice, m0: Array2<f64>, strain_offset: Array2<f64>, mask: Array2<bool>) -> Result<Self> {
        let shape = lattice.shape();
        for (name, dim) in [("m0", m0.dim()), ("strain", strain_offset.dim()), ("mask", mask.dim())] {
            if dim != shape {
                return Err(Error::GeometryMismatch(format!(
                    "{name} array is {dim:?}, lattice is {shape:?}"
                )));
            }
        }
        for ((&v, &s), &inside) in m0.iter().zip(&strain_offset).zip(&mask) {
            if !(v >= 0.0 && v.is_finite()) || !s.is_finite() {
                return Err(Error::InvalidPeak(
                    "m0 must be finite and non-negative, strain finite".into(),
                ));
            }
            if !inside && (v != 0.0 || s != 0.0) {
                return Err(Error::GeometryMismatch(
                    "m0 and strain offset must vanish outside the mask".into(),
                ));
            }
        }
        Ok(PhantomSlice {
            lattice,
            m0,
            strain_offset,
            mask,
        })
    }

    /// Homogeneous phantom (`m0 = 1`, zero strain) on the given support.
    pub fn from_mask(lattice: Lattice, mask: Array2<bool>) -> Result<Self> {
        let m0 = mask.mapv(|b| if b { 1.0 } else { 0.0 });
        let strain = lattice.zeros();
        let p = Self::new(lattice, m0, strain, mask)?;
        if p.is_empty() {
            log::warn!("phantom support is empty");
        }
        Ok(p)
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn m0(&self) -> &Array2<f64> {
        &self.m0
    }

    pub fn strain_offset(&self) -> &Array2<f64> {
        &self.strain_offset
    }

    pub fn mask(&self) -> &Array2<bool> {
        &self.mask
    }

    pub fn mask_f64(&self) -> Array2<f64> {
        self.mask.mapv(|b| if b { 1.0 } else { 0.0 })
    }

    pub fn support_size(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    /// True if no voxel lies inside the support.
    pub fn is_empty(&self) -> bool {
        self.support_size() == 0
    }

    /// True when `m0` is the same on every support voxel.
    pub fn is_homogeneous(&self) -> bool {
        let mut inside = self.m0.iter().zip(&self.mask).filter(|(_, &b)| b);
        match inside.next() {
            None => true,
            Some((&first, _)) => inside.all(|(&v, _)| (v - first).abs() <= 1e-12 * first.abs()),
        }
    }

    /// Same support with `m0 = 1` everywhere inside.
    pub fn homogenized(&self) -> Self {
        PhantomSlice {
            lattice: self.lattice,
            m0: self.mask_f64(),
            strain_offset: self.strain_offset.clone(),
            mask: self.mask.clone(),
        }
    }

    /// Replaces the intensity field; it must vanish outside the support.
    pub fn with_m0(&self, m0: Array2<f64>) -> Result<Self> {
        Self::new(self.lattice, m0, self.strain_offset.clone(), self.mask.clone())
    }

    /// Replaces the strain-offset field; it must vanish outside the support.
    pub fn with_strain(&self, strain_offset: Array2<f64>) -> Result<Self> {
        Self::new(self.lattice, self.m0.clone(), strain_offset, self.mask.clone())
    }

    /// Local centroid offset of voxel `(i, j)` at rotation `phi`: parallax plus strain.
    pub fn local_offset(&self, i: usize, j: usize, phi: f64, geom: &ScanGeometry) -> Result<f64> {
        if j >= self.lattice.ny || i >= self.lattice.nx || !self.mask[[j, i]] {
            return Err(Error::OutsideSupport { i, j });
        }
        let x = self.lattice.x(i);
        let y = self.lattice.y(j);
        Ok(geom.angular_parallax(x, y, phi) + self.strain_offset[[j, i]])
    }

    /// Per-voxel parallax offset (rad) at rotation `phi`, zero outside the support.
    pub fn parallax_field(&self, phi: f64, geom: &ScanGeometry) -> Array2<f64> {
        let l = self.lattice;
        Array2::from_shape_fn(l.shape(), |(j, i)| {
            if self.mask[[j, i]] {
                geom.angular_parallax(l.x(i), l.y(j), phi)
            } else {
                0.0
            }
        })
    }

    /// Largest parallax magnitude any support voxel experiences over a full turn,
    /// `max r * tan(2 theta) / z`.
    pub fn max_parallax(&self, geom: &ScanGeometry) -> f64 {
        let l = self.lattice;
        let mut r_max: f64 = 0.0;
        for ((j, i), &inside) in self.mask.indexed_iter() {
            if inside {
                r_max = r_max.max(l.x(i).hypot(l.y(j)));
            }
        }
        r_max * geom.parallax_slope()
    }

    /// Resamples the phantom rotated by `-phi` (see [`rotate_field`]).
    pub fn rotated(&self, phi: f64) -> Self {
        let l = self.lattice;
        let mask = rotate_field(&self.mask_f64(), &l, phi).mapv(|v| v >= 0.5);
        let keep = |a: Array2<f64>| {
            let mut a = a;
            a.zip_mut_with(&mask, |v, &b| {
                if !b {
                    *v = 0.0
                }
            });
            a.mapv_into(|v| v.max(0.0))
        };
        let m0 = keep(rotate_field(&self.m0, &l, phi));
        let mut strain = rotate_field(&self.strain_offset, &l, phi);
        strain.zip_mut_with(&mask, |v, &b| {
            if !b {
                *v = 0.0
            }
        });
        PhantomSlice {
            lattice: l,
            m0,
            strain_offset: strain,
            mask,
        }
    }

    /// Rescales the strain offsets so that `max |strain| = ratio * max |parallax|`.
    pub fn scale_strain_to_parallax(&self, ratio: f64, geom: &ScanGeometry) -> Self {
        let peak = self.strain_offset.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut out = self.clone();
        if peak > 0.0 {
            let k = ratio * self.max_parallax(geom) / peak;
            out.strain_offset.mapv_inplace(|v| v * k);
        }
        out
    }
}

/// Sample support shapes.
#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    /// Axis-aligned rectangle; sizes and centre in mm.
    Rect {
        width: f64,
        height: f64,
        center: (f64, f64),
    },
    /// Disk; radius and centre in mm.
    Disk { radius: f64, center: (f64, f64) },
    /// Graymap whose nonzero pixels are inside; the lattice takes its dimensions.
    MaskFile(PathBuf),
    /// Explicit `(ny, nx)` mask.
    Mask(Array2<bool>),
}

const EDGE_EPS: f64 = 1e-9;

/// Builds a homogeneous, strain-free phantom of the given shape.
pub fn make_shape(shape: &Shape, lattice: Lattice) -> Result<PhantomSlice> {
    let oob = |detail: String| Error::ShapeOutOfBounds {
        nx: lattice.nx,
        ny: lattice.ny,
        detail,
    };
    let tol = EDGE_EPS * lattice.pitch;
    match shape {
        Shape::Rect {
            width,
            height,
            center: (cx, cy),
        } => {
            if !(*width > 0.0 && *height > 0.0) {
                return Err(oob(format!("rectangle {width} x {height} mm is degenerate")));
            }
            if cx.abs() + width / 2.0 > lattice.half_width() + tol
                || cy.abs() + height / 2.0 > lattice.half_height() + tol
            {
                return Err(oob(format!("rectangle {width} x {height} mm at ({cx}, {cy})")));
            }
            let mask = Array2::from_shape_fn(lattice.shape(), |(j, i)| {
                (lattice.x(i) - cx).abs() <= width / 2.0 + tol && (lattice.y(j) - cy).abs() <= height / 2.0 + tol
            });
            PhantomSlice::from_mask(lattice, mask)
        }
        Shape::Disk {
            radius,
            center: (cx, cy),
        } => {
            if !(*radius > 0.0) {
                return Err(oob(format!("disk radius {radius} mm")));
            }
            if cx.abs() + radius > lattice.half_width() + tol || cy.abs() + radius > lattice.half_height() + tol {
                return Err(oob(format!("disk r = {radius} mm at ({cx}, {cy})")));
            }
            let mask = Array2::from_shape_fn(lattice.shape(), |(j, i)| {
                (lattice.x(i) - cx).hypot(lattice.y(j) - cy) <= radius + tol
            });
            PhantomSlice::from_mask(lattice, mask)
        }
        Shape::MaskFile(path) => {
            let g = pgm::read(path)?;
            if g.width == 0 || g.height == 0 {
                return Err(oob(format!("mask file {} is empty", path.display())));
            }
            // image rows run top to bottom; lattice rows run along +y
            let mut mask = g.to_mask();
            mask.invert_axis(Axis(0));
            let lattice = Lattice::new(g.width, g.height, lattice.pitch);
            PhantomSlice::from_mask(lattice, mask.as_standard_layout().to_owned())
        }
        Shape::Mask(mask) => {
            if mask.dim() != lattice.shape() {
                return Err(oob(format!(
                    "mask is {:?}, lattice is {:?}",
                    mask.dim(),
                    lattice.shape()
                )));
            }
            PhantomSlice::from_mask(lattice, mask.clone())
        }
    }
}

/// A surface of the sample's bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    /// +y
    Top,
    /// -y
    Bottom,
    /// -x
    Left,
    /// +x
    Right,
}

impl FromStr for Side {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "top" => Ok(Side::Top),
            "bottom" => Ok(Side::Bottom),
            "left" => Ok(Side::Left),
            "right" => Ok(Side::Right),
            other => Err(format!("unknown side `{other}`")),
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Top => "top",
            Side::Bottom => "bottom",
            Side::Left => "left",
            Side::Right => "right",
        })
    }
}

/// Shot-peening profile: compressive (negative) offsets decaying away from the
/// treated surfaces plus a constant tensile bulk.
#[derive(Debug, Clone, PartialEq)]
pub struct Peen {
    pub sides: Vec<Side>,
    /// Decay length (mm).
    pub depth: f64,
    /// Magnitude of the compressive offset at a treated surface (rad).
    pub surface_amp: f64,
    /// Bulk offset (rad). `None` chooses the value that makes the mean offset
    /// over the support zero.
    pub bulk_amp: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StrainPreset {
    Uniform(f64),
    Peen(Peen),
}

impl StrainPreset {
    /// Looks up a preset by name with default parameters.
    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "none" => Ok(StrainPreset::Uniform(0.0)),
            "uniform" => Ok(StrainPreset::Uniform(1e-4)),
            "peen" => Ok(StrainPreset::Peen(Peen {
                sides: vec![Side::Top, Side::Right, Side::Bottom],
                depth: 0.1,
                surface_amp: 1e-3,
                bulk_amp: None,
            })),
            other => Err(Error::UnknownPreset(other.to_string())),
        }
    }
}

/// Writes the preset's strain offsets onto the support of `p`.
pub fn apply_strain_preset(p: &PhantomSlice, preset: &StrainPreset) -> Result<PhantomSlice> {
    let l = *p.lattice();
    let mask = p.mask();
    let strain = match preset {
        StrainPreset::Uniform(v) => mask.mapv(|b| if b { *v } else { 0.0 }),
        StrainPreset::Peen(peen) => {
            if !(peen.depth > 0.0) {
                return Err(Error::UnknownPreset(format!(
                    "peen depth {} must be positive",
                    peen.depth
                )));
            }
            let Some(faces) = bounding_faces(p) else {
                return Ok(p.clone());
            };
            let mut surface = Array2::<f64>::zeros(l.shape());
            for ((j, i), v) in surface.indexed_iter_mut() {
                if !mask[[j, i]] {
                    continue;
                }
                let (x, y) = (l.x(i), l.y(j));
                for side in &peen.sides {
                    let d = match side {
                        Side::Top => faces.top - y,
                        Side::Bottom => y - faces.bottom,
                        Side::Right => faces.right - x,
                        Side::Left => x - faces.left,
                    };
                    *v -= peen.surface_amp * (-d / peen.depth).exp();
                }
            }
            let bulk = peen.bulk_amp.unwrap_or_else(|| {
                let n = p.support_size() as f64;
                -surface.iter().sum::<f64>() / n
            });
            Array2::from_shape_fn(
                l.shape(),
                |(j, i)| {
                    if mask[[j, i]] {
                        surface[[j, i]] + bulk
                    } else {
                        0.0
                    }
                },
            )
        }
    };
    p.with_strain(strain)
}

/// Outer faces of the support's bounding box (mm).
#[derive(Debug, Clone, Copy)]
pub(crate) struct Faces {
    pub top: f64,
    pub bottom: f64,
    pub left: f64,
    pub right: f64,
}

pub(crate) fn bounding_faces(p: &PhantomSlice) -> Option<Faces> {
    let l = p.lattice();
    let half = l.pitch / 2.0;
    let mut faces: Option<Faces> = None;
    for ((j, i), &inside) in p.mask().indexed_iter() {
        if !inside {
            continue;
        }
        let (x, y) = (l.x(i), l.y(j));
        let f = faces.get_or_insert(Faces {
            top: y + half,
            bottom: y - half,
            left: x - half,
            right: x + half,
        });
        f.top = f.top.max(y + half);
        f.bottom = f.bottom.min(y - half);
        f.left = f.left.min(x - half);
        f.right = f.right.max(x + half);
    }
    faces
}

/// Voxels of the support within `band` voxels of the given bounding-box face.
pub fn edge_band(p: &PhantomSlice, side: Side, band: usize) -> Array2<bool> {
    let l = *p.lattice();
    let width = band as f64 * l.pitch;
    let Some(faces) = bounding_faces(p) else {
        return Array2::from_elem(l.shape(), false);
    };
    Array2::from_shape_fn(l.shape(), |(j, i)| {
        if !p.mask()[[j, i]] {
            return false;
        }
        let (x, y) = (l.x(i), l.y(j));
        let d = match side {
            Side::Top => faces.top - y,
            Side::Bottom => y - faces.bottom,
            Side::Right => faces.right - x,
            Side::Left => x - faces.left,
        };
        d < width
    })
}

/// Support voxels at least `margin` mm away from every listed face.
pub fn interior_region(p: &PhantomSlice, sides: &[Side], margin: f64) -> Array2<bool> {
    let l = *p.lattice();
    let Some(faces) = bounding_faces(p) else {
        return Array2::from_elem(l.shape(), false);
    };
    Array2::from_shape_fn(l.shape(), |(j, i)| {
        if !p.mask()[[j, i]] {
            return false;
        }
        let (x, y) = (l.x(i), l.y(j));
        sides.iter().all(|side| {
            let d = match side {
                Side::Top => faces.top - y,
                Side::Bottom => y - faces.bottom,
                Side::Right => faces.right - x,
                Side::Left => x - faces.left,
            };
            d >= margin
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::rad;
    use approx::assert_relative_eq;
    use std::f64::consts::{PI, TAU};

    fn lattice() -> Lattice {
        Lattice::new(DEFAULT_GRID, DEFAULT_GRID, DEFAULT_VOXEL_PITCH)
    }

    fn geom() -> ScanGeometry {
        ScanGeometry::uniform(rad(6.839), 800.0, 0.15, 200, 0.005, 200, TAU).unwrap()
    }

    fn square() -> PhantomSlice {
        make_shape(
            &Shape::Rect {
                width: 1.0,
                height: 1.0,
                center: (0.0, 0.0),
            },
            lattice(),
        )
        .unwrap()
    }

    #[test]
    fn rect_spans_two_hundred_voxels() {
        let p = square();
        let row = p.mask().row(100);
        assert_eq!(row.iter().filter(|&&b| b).count(), 200);
        assert_eq!(p.support_size(), 200 * 200);
        assert!(p.is_homogeneous());
    }

    #[test]
    fn disk_area_matches_pixel_count() {
        // pixel-counting oracle: count lattice centres inside the circle directly
        for r_vox in [20.0, 35.5, 60.0] {
            let l = Lattice::new(160, 160, 0.01);
            let radius = r_vox * l.pitch;
            let p = make_shape(
                &Shape::Disk {
                    radius,
                    center: (0.0, 0.0),
                },
                l,
            )
            .unwrap();
            let area = PI * r_vox * r_vox;
            let count = p.support_size() as f64;
            assert!((count - area).abs() / area < 0.02, "r={r_vox}: {count} vs {area}");
        }
    }

    #[test]
    fn shapes_out_of_bounds_are_rejected() {
        let l = lattice();
        let big = Shape::Disk {
            radius: 0.6,
            center: (0.0, 0.0),
        };
        assert!(matches!(make_shape(&big, l), Err(Error::ShapeOutOfBounds { .. })));
        let off = Shape::Rect {
            width: 0.5,
            height: 0.5,
            center: (0.3, 0.0),
        };
        assert!(make_shape(&off, l).is_err());
    }

    #[test]
    fn empty_mask_is_valid() {
        let l = Lattice::new(8, 8, 0.1);
        let p = make_shape(&Shape::Mask(Array2::from_elem((8, 8), false)), l).unwrap();
        assert!(p.is_empty());
    }

    #[test]
    fn mask_file_sets_dimensions() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.pgm");
        std::fs::write(&path, "P2\n4 3\n1\n1 0 0 0\n0 0 0 0\n0 0 0 0\n").unwrap();
        let p = make_shape(&Shape::MaskFile(path), Lattice::new(1, 1, 0.01)).unwrap();
        assert_eq!(p.lattice().shape(), (3, 4));
        // top-left image pixel maps to max y, min x
        assert!(p.mask()[[2, 0]]);
        assert_eq!(p.support_size(), 1);
    }

    #[test]
    fn uniform_presets() {
        let p = square();
        let zero = apply_strain_preset(&p, &StrainPreset::Uniform(0.0)).unwrap();
        assert!(zero.strain_offset().iter().all(|&v| v == 0.0));
        let u = apply_strain_preset(&p, &StrainPreset::Uniform(1e-4)).unwrap();
        assert!(u.strain_offset().iter().all(|&v| v == 1e-4));
        assert!(matches!(StrainPreset::by_name("twisted"), Err(Error::UnknownPreset(_))));
    }

    #[test]
    fn peen_sign_pattern() {
        let p = square();
        let preset = StrainPreset::by_name("peen").unwrap();
        let s = apply_strain_preset(&p, &preset).unwrap();
        let off = s.strain_offset();
        let mean: f64 = off.iter().sum::<f64>() / off.len() as f64;
        assert!(mean.abs() < 1e-15);
        // treated faces: top (+y, last row), right (+x, last column), bottom (first row)
        assert!(off[[199, 100]] < 0.0);
        assert!(off[[100, 199]] < 0.0);
        assert!(off[[0, 100]] < 0.0);
        assert!(off[[100, 100]] > 0.0);
        // untreated left face stays tensile
        assert!(off[[100, 0]] > 0.0);
        // sign flips from the treated surface toward the bulk
        let col: Vec<f64> = (0..200).map(|j| off[[j, 100]]).collect();
        assert!(col[0] < col[10] && col[10] < col[40]);
    }

    #[test]
    fn local_offset_decomposes() {
        let g = geom();
        let p = square();
        for phi in [0.0, 1.0, 4.0] {
            let axis = Lattice::new(201, 201, 0.005);
            let q = make_shape(
                &Shape::Disk {
                    radius: 0.2,
                    center: (0.0, 0.0),
                },
                axis,
            )
            .unwrap();
            assert_eq!(q.local_offset(100, 100, phi, &g).unwrap(), 0.0);
            let l = p.lattice();
            assert_eq!(
                p.local_offset(17, 150, phi, &g).unwrap(),
                g.angular_parallax(l.x(17), l.y(150), phi)
            );
        }
        let s = apply_strain_preset(&p, &StrainPreset::Uniform(1e-4)).unwrap();
        let l = s.lattice();
        // pick the voxel and angle whose parallax is 1.5e-4 up to lattice rounding
        let phi = 0.0;
        let i = 199;
        let par = g.angular_parallax(l.x(i), l.y(100), phi);
        assert_relative_eq!(
            s.local_offset(i, 100, phi, &g).unwrap(),
            par + 1e-4,
            max_relative = 1e-14
        );
        let q = make_shape(
            &Shape::Disk {
                radius: 0.2,
                center: (0.0, 0.0),
            },
            lattice(),
        )
        .unwrap();
        assert!(matches!(
            q.local_offset(0, 0, 0.0, &g),
            Err(Error::OutsideSupport { i: 0, j: 0 })
        ));
    }

    #[test]
    fn strain_scaled_to_parallax_ratio() {
        let g = geom();
        let p = apply_strain_preset(&square(), &StrainPreset::by_name("peen").unwrap()).unwrap();
        let q = p.scale_strain_to_parallax(10.0, &g);
        let peak = q.strain_offset().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert_relative_eq!(peak, 10.0 * q.max_parallax(&g), max_relative = 1e-12);
    }

    #[test]
    fn checked_constructor_rejects_leaks() {
        let l = Lattice::new(2, 2, 1.0);
        let mask = Array2::from_elem((2, 2), false);
        let m0 = Array2::from_elem((2, 2), 1.0);
        assert!(PhantomSlice::new(l, m0, l.zeros(), mask.clone()).is_err());
        let neg = Array2::from_elem((2, 2), -1.0);
        assert!(PhantomSlice::new(l, neg, l.zeros(), Array2::from_elem((2, 2), true)).is_err());
    }

    #[test]
    fn edge_band_and_interior() {
        let p = square();
        let band = edge_band(&p, Side::Top, 5);
        assert_eq!(band.iter().filter(|&&b| b).count(), 5 * 200);
        assert!(band[[199, 3]] && band[[195, 3]] && !band[[194, 3]]);
        let inner = interior_region(&p, &[Side::Top, Side::Bottom], 0.25);
        assert_eq!(inner.iter().filter(|&&b| b).count(), 100 * 200);
    }
}
