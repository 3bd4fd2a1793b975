//! Grid rasters on disk: a little-endian `f32` row-major payload (`.f32`) and a
//! `key = value` sidecar with the same basename (`.meta`).

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::forward::{Sinogram, SinogramKind};
use crate::geometry::ScanGeometry;
use crate::lattice::Lattice;
use crate::pgm;

const DTYPE: &str = "float32le";
const REQUIRED: [&str; 8] = [
    "ncols",
    "nrows",
    "dtype",
    "row_axis",
    "col_axis",
    "units",
    "kind",
    "geometry_digest",
];

#[derive(Debug, Clone, PartialEq)]
pub struct GridRaster {
    pub nrows: usize,
    pub ncols: usize,
    pub data: Vec<f32>,
    /// Sidecar entries other than `ncols`, `nrows` and `dtype`, in write order.
    meta: Vec<(String, String)>,
}

fn raster_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Raster {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

pub fn meta_path(path: &Path) -> PathBuf {
    path.with_extension("meta")
}

impl GridRaster {
    pub fn from_array(
        values: &Array2<f64>,
        kind: &str,
        units: &str,
        axes: (&str, &str),
        geometry_digest: &str,
    ) -> Self {
        let (nrows, ncols) = values.dim();
        let mut r = GridRaster {
            nrows,
            ncols,
            data: values.iter().map(|&v| v as f32).collect(),
            meta: Vec::new(),
        };
        r.set("row_axis", axes.0);
        r.set("col_axis", axes.1);
        r.set("units", units);
        r.set("kind", kind);
        r.set("geometry_digest", geometry_digest);
        r
    }

    /// Raster of a `(ny, nx)` lattice field. Row `j` holds `y(j)`, ascending.
    pub fn from_lattice(values: &Array2<f64>, lattice: &Lattice, kind: &str, units: &str, digest: &str) -> Self {
        let mut r = Self::from_array(values, kind, units, ("y_mm ascending", "x_mm ascending"), digest);
        r.set("pitch_mm", &format!("{:?}", lattice.pitch));
        r.set("x0_mm", &format!("{:?}", lattice.x(0)));
        r.set("y0_mm", &format!("{:?}", lattice.y(0)));
        r
    }

    /// Raster of a sinogram; invalid bins of moment sinograms are stored as NaN.
    pub fn from_sinogram(s: &Sinogram, geom: &ScanGeometry) -> Self {
        let mut values = s.values().clone();
        if s.kind() != SinogramKind::Intensity {
            values.zip_mut_with(s.valid(), |v, &ok| {
                if !ok {
                    *v = f64::NAN
                }
            });
        }
        let units = match s.kind() {
            SinogramKind::Intensity => "mm",
            SinogramKind::Moment1Raw => "mm*rad",
            SinogramKind::Moment1Norm => "rad",
        };
        let mut r = Self::from_array(&values, s.kind().as_str(), units, ("t_mm", "phi_rad"), &geom.digest());
        let t = s.t_offsets();
        r.set("t0_mm", &format!("{:?}", t[0]));
        r.set("t_step_mm", &format!("{:?}", geom.translation_pitch()));
        r.set("n_angles", &s.angles().len().to_string());
        r.set("angle_span_rad", &format!("{:?}", geom.rotation_span()));
        r.set("valid_bins", &s.n_valid().to_string());
        r
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    /// Sets or replaces a sidecar entry.
    pub fn set(&mut self, key: &str, value: &str) {
        match self.meta.iter_mut().find(|(k, _)| k == key) {
            Some(slot) => slot.1 = value.to_string(),
            None => self.meta.push((key.to_string(), value.to_string())),
        }
    }

    pub fn to_array(&self) -> Array2<f64> {
        Array2::from_shape_fn((self.nrows, self.ncols), |(r, c)| self.data[r * self.ncols + c] as f64)
    }

    pub fn meta_text(&self) -> String {
        let mut s = format!("ncols = {}\nnrows = {}\ndtype = {DTYPE}\n", self.ncols, self.nrows);
        for key in &REQUIRED[3..] {
            s.push_str(&format!("{key} = {}\n", self.get(key).unwrap_or("")));
        }
        for (k, v) in &self.meta {
            if !REQUIRED.contains(&k.as_str()) {
                s.push_str(&format!("{k} = {v}\n"));
            }
        }
        s
    }

    /// Writes `path` (payload) and its `.meta` sidecar.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut bytes = Vec::with_capacity(4 * self.data.len());
        for v in &self.data {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
        let meta = meta_path(path);
        fs::write(&meta, self.meta_text()).map_err(|e| Error::io(&meta, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let meta = meta_path(path);
        let text = fs::read_to_string(&meta).map_err(|e| Error::io(&meta, e))?;
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| raster_err(&meta, format!("line {}: expected `key = value`", n + 1)))?;
            entries.push((k.trim().to_string(), v.trim().to_string()));
        }
        let lookup = |key: &str| {
            entries
                .iter()
                .find(|(k, _)| k == key)
                .map(|(_, v)| v.clone())
                .ok_or_else(|| raster_err(&meta, format!("missing `{key}`")))
        };
        for key in REQUIRED {
            lookup(key)?;
        }
        let dim = |key: &str| -> Result<usize> {
            lookup(key)?
                .parse()
                .map_err(|_| raster_err(&meta, format!("`{key}` is not a count")))
        };
        let (ncols, nrows) = (dim("ncols")?, dim("nrows")?);
        let dtype = lookup("dtype")?;
        if dtype != DTYPE {
            return Err(raster_err(&meta, format!("unsupported dtype `{dtype}`")));
        }
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        if bytes.len() != 4 * nrows * ncols {
            return Err(raster_err(
                path,
                format!("payload has {} bytes, expected {}", bytes.len(), 4 * nrows * ncols),
            ));
        }
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let meta = entries
            .into_iter()
            .filter(|(k, _)| !matches!(k.as_str(), "ncols" | "nrows" | "dtype"))
            .collect();
        Ok(GridRaster {
            nrows,
            ncols,
            data,
            meta,
        })
    }

    /// Rebuilds a sinogram on `geom`'s axes. Fails if the raster was written for
    /// a different geometry. Validity is taken from the finite bins for moment
    /// sinograms and from the degeneracy floor for intensity sinograms.
    pub fn to_sinogram(&self, geom: &ScanGeometry, path: &Path) -> Result<Sinogram> {
        let kind = self
            .get("kind")
            .and_then(SinogramKind::parse)
            .ok_or_else(|| raster_err(path, "not a sinogram raster"))?;
        if self.get("geometry_digest") != Some(geom.digest().as_str()) {
            return Err(Error::GeometryMismatch(format!(
                "{} was written for geometry {}, configuration gives {}",
                path.display(),
                self.get("geometry_digest").unwrap_or("?"),
                geom.digest()
            )));
        }
        if (self.nrows, self.ncols) != (geom.n_translations(), geom.n_angles()) {
            return Err(Error::GeometryMismatch(format!(
                "{} is {}x{}, geometry needs {}x{}",
                path.display(),
                self.nrows,
                self.ncols,
                geom.n_translations(),
                geom.n_angles()
            )));
        }
        let values = self.to_array();
        match kind {
            SinogramKind::Intensity => Sinogram::intensity(values, geom),
            _ => {
                let valid = values.mapv(f64::is_finite);
                let values = values.mapv(|v| if v.is_finite() { v } else { 0.0 });
                Sinogram::new(values, kind, geom.t_offsets(), geom.rotation_angles().to_vec(), valid)
            }
        }
    }

    /// Min-max scaled 8-bit preview. Lattice rasters are flipped so `+y` is up.
    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        let mut values = self.to_array();
        if self.get("row_axis") == Some("y_mm ascending") {
            values.invert_axis(ndarray::Axis(0));
        }
        let comment = format!(
            "{} [{}]",
            self.get("kind").unwrap_or("raster"),
            self.get("units").unwrap_or("")
        );
        pgm::write_scaled(path, &values, &comment).map(|_| ())
    }
}
