//! Voxel lattice centred on the rotation axis, plus bilinear sampling.

use ndarray::Array2;

/// Square-voxel lattice whose centre coincides with the rotation axis.
///
/// Arrays on the lattice have shape `(ny, nx)`: row `j` is the `y` index and
/// column `i` the `x` index, so voxel `(i, j)` is stored at `[j, i]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lattice {
    pub nx: usize,
    pub ny: usize,
    /// Voxel edge length (mm).
    pub pitch: f64,
}

impl Lattice {
    pub fn new(nx: usize, ny: usize, pitch: f64) -> Self {
        assert!(nx > 0 && ny > 0, "lattice must be non-empty");
        assert!(pitch > 0.0 && pitch.is_finite(), "voxel pitch must be positive");
        Lattice { nx, ny, pitch }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.ny, self.nx)
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// World `x` of column `i`: `(i - nx/2 + 1/2) * pitch`.
    pub fn x(&self, i: usize) -> f64 {
        (i as f64 - (self.nx as f64 - 1.0) / 2.0) * self.pitch
    }

    /// World `y` of row `j`.
    pub fn y(&self, j: usize) -> f64 {
        (j as f64 - (self.ny as f64 - 1.0) / 2.0) * self.pitch
    }

    pub fn half_width(&self) -> f64 {
        self.nx as f64 * self.pitch / 2.0
    }

    pub fn half_height(&self) -> f64 {
        self.ny as f64 * self.pitch / 2.0
    }

    /// Half of the lattice diagonal; every voxel centre lies within this radius.
    pub fn half_diagonal(&self) -> f64 {
        self.half_width().hypot(self.half_height())
    }

    pub fn zeros(&self) -> Array2<f64> {
        Array2::zeros(self.shape())
    }

    /// Continuous column/row coordinates of the world point `(x, y)`.
    pub(crate) fn to_index(self, x: f64, y: f64) -> (f64, f64) {
        (
            x / self.pitch + (self.nx as f64 - 1.0) / 2.0,
            y / self.pitch + (self.ny as f64 - 1.0) / 2.0,
        )
    }

    /// Bilinear weights of the up to four voxels around the continuous index
    /// `(u, v)`. Voxels outside the lattice are dropped, which is equivalent to
    /// zero padding. Calls `f(flat_index, weight)` for each contributing voxel.
    #[inline]
    pub(crate) fn for_each_bilinear(&self, u: f64, v: f64, mut f: impl FnMut(usize, f64)) {
        if !(u > -1.0 && v > -1.0 && u < self.nx as f64 && v < self.ny as f64) {
            return;
        }
        let i0 = u.floor();
        let j0 = v.floor();
        let fu = u - i0;
        let fv = v - j0;
        let i0 = i0 as isize;
        let j0 = j0 as isize;
        let nx = self.nx as isize;
        let ny = self.ny as isize;
        let corners = [
            (i0, j0, (1.0 - fu) * (1.0 - fv)),
            (i0 + 1, j0, fu * (1.0 - fv)),
            (i0, j0 + 1, (1.0 - fu) * fv),
            (i0 + 1, j0 + 1, fu * fv),
        ];
        for (i, j, w) in corners {
            if w != 0.0 && i >= 0 && j >= 0 && i < nx && j < ny {
                f((j * nx + i) as usize, w);
            }
        }
    }

    /// Bilinear sample of a lattice field at world `(x, y)`, zero outside.
    pub fn sample(&self, field: &[f64], x: f64, y: f64) -> f64 {
        debug_assert_eq!(field.len(), self.len());
        let (u, v) = self.to_index(x, y);
        let mut acc = 0.0;
        self.for_each_bilinear(u, v, |k, w| acc += w * field[k]);
        acc
    }
}

/// Resamples `field` so that the result at `p` equals the input at `R(phi) p`,
/// i.e. the content is rotated by `-phi`. Projecting the result at angle zero
/// matches projecting the input at `phi`.
pub fn rotate_field(field: &Array2<f64>, lattice: &Lattice, phi: f64) -> Array2<f64> {
    assert_eq!(field.dim(), lattice.shape(), "field does not match lattice");
    let src = field.as_standard_layout();
    let src = src.as_slice().expect("standard layout");
    let (s, c) = phi.sin_cos();
    Array2::from_shape_fn(lattice.shape(), |(j, i)| {
        let x = lattice.x(i);
        let y = lattice.y(j);
        lattice.sample(src, c * x - s * y, s * x + c * y)
    })
}

/// Shrinks a boolean mask by `radius` voxels (Chebyshev neighbourhood).
/// Voxels on the lattice border count as touching the outside.
pub fn erode(mask: &Array2<bool>, radius: usize) -> Array2<bool> {
    if radius == 0 {
        return mask.clone();
    }
    let (ny, nx) = mask.dim();
    let r = radius as isize;
    Array2::from_shape_fn((ny, nx), |(j, i)| {
        if !mask[[j, i]] {
            return false;
        }
        for dj in -r..=r {
            for di in -r..=r {
                let jj = j as isize + dj;
                let ii = i as isize + di;
                if jj < 0 || ii < 0 || jj >= ny as isize || ii >= nx as isize {
                    return false;
                }
                if !mask[[jj as usize, ii as usize]] {
                    return false;
                }
            }
        }
        true
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn centres_are_symmetric() {
        let l = Lattice::new(200, 3, 0.005);
        assert_relative_eq!(l.x(0), -0.4975, epsilon = 1e-12);
        assert_relative_eq!(l.x(199), 0.4975, epsilon = 1e-12);
        assert_eq!(l.y(1), 0.0);
        let (u, v) = l.to_index(l.x(17), l.y(2));
        assert_relative_eq!(u, 17.0, epsilon = 1e-9);
        assert_relative_eq!(v, 2.0, epsilon = 1e-9);
    }

    #[test]
    fn bilinear_reproduces_affine_fields() {
        let l = Lattice::new(9, 7, 0.1);
        let f: Vec<f64> = (0..l.len())
            .map(|k| {
                let (j, i) = (k / l.nx, k % l.nx);
                2.0 * l.x(i) - 3.0 * l.y(j) + 0.5
            })
            .collect();
        for &(x, y) in &[(0.0, 0.0), (0.13, -0.07), (-0.31, 0.22)] {
            assert_relative_eq!(l.sample(&f, x, y), 2.0 * x - 3.0 * y + 0.5, epsilon = 1e-12);
        }
        assert_eq!(l.sample(&f, 5.0, 0.0), 0.0);
    }

    #[test]
    fn erosion_removes_border_layers() {
        let mut m = Array2::from_elem((10, 10), false);
        for j in 2..8 {
            for i in 2..8 {
                m[[j, i]] = true;
            }
        }
        let e1 = erode(&m, 1);
        assert_eq!(e1.iter().filter(|&&b| b).count(), 16);
        assert_eq!(erode(&m, 3).iter().filter(|&&b| b).count(), 0);
        assert_eq!(erode(&m, 0), m);
    }

    #[test]
    fn quarter_turn_rotation_is_exact() {
        let l = Lattice::new(4, 4, 1.0);
        let f = Array2::from_shape_fn((4, 4), |(j, i)| (j * 4 + i) as f64);
        let r = rotate_field(&f, &l, std::f64::consts::FRAC_PI_2);
        // result(x, y) = f(-y, x)
        for j in 0..4 {
            for i in 0..4 {
                assert_relative_eq!(r[[j, i]], f[[i, 3 - j]], epsilon = 1e-9);
            }
        }
    }
}
